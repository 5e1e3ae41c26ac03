//! Spatial and energy grids.
//!
//! The global spatial mesh runs from the wall-side turning point of `eps_max`
//! to `zeta_max`.  It is uniform on the repulsive side of the well and
//! geometrically stretched away from `zeta_min` on the attractive side.
//!
//! Every global node contributes its own energy `W(zeta_j)` to the energy
//! grid, so each node is the turning point of some characteristic and the
//! velocity integral at that node starts exactly at `c_z = 0`.  A base set of
//! energies graded toward `0` and toward `W_min` is added on top, together
//! with the double node `0-`/`0+`.
//!
//! For every energy the characteristic carries its own node set: the turning
//! point(s), a short geometric refinement next to each turning point, and the
//! global nodes inside the allowed region.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Potential;

/// Growth ratio of the refinement next to turning points.
pub const REFINE_RATIO: f64 = 1.2;
/// Number of refinement nodes inserted next to each turning point.
pub const REFINE_NODES: usize = 4;
/// Nodes with `W > eps_max - REPORT_MARGIN` form a wall buffer: they carry
/// source values for the sweep but are left out of reported profiles, since
/// their moments are dominated by the truncation at `eps_max`.
pub const REPORT_MARGIN: f64 = 6.0;

/// Role of an energy node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnergyClass {
    /// `eps = W_min`: the orbit collapses onto `zeta_min`.
    Degenerate,
    /// `W_min < eps < 0` with both turning points inside `[zeta_lo, zeta_max]`.
    Trapped,
    /// `eps = 0-`: limit of trapped orbits, reflected at infinity.
    ZeroMinus,
    /// `eps = 0+`: limit of free orbits, fed by the incident distribution.
    ZeroPlus,
    /// `eps > 0`.
    Free,
}

impl EnergyClass {
    /// Whether the characteristic is fed from infinity.
    pub fn is_inflow(self) -> bool {
        matches!(self, EnergyClass::ZeroPlus | EnergyClass::Free)
    }

    /// Whether the characteristic continues beyond `zeta_max`.
    pub fn has_tail(self) -> bool {
        matches!(self, EnergyClass::ZeroPlus | EnergyClass::ZeroMinus | EnergyClass::Free)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyNode {
    pub eps: f64,
    pub class: EnergyClass,
    /// Inner turning point.
    pub zeta_a: f64,
    /// Outer turning point for trapped energies.
    pub zeta_b: Option<f64>,
}

/// Ordered energy nodes; the `0-`/`0+` pair is the only repeated value.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyGrid {
    pub nodes: Vec<EnergyNode>,
}

impl EnergyGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eps(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.eps).collect()
    }

    pub fn index_of(&self, class: EnergyClass) -> Option<usize> {
        self.nodes.iter().position(|n| n.class == class)
    }
}

/// The spatial nodes of one characteristic.
#[derive(Debug, Clone)]
pub struct NodeSet {
    /// Increasing positions from `zeta_a` to `zeta_b` or `zeta_max`.
    pub nodes: Vec<f64>,
    /// For every local node, the global interval `(j, w)` used to interpolate
    /// profiles: `value = (1 - w) v[j] + w v[j + 1]`.
    pub interp: Vec<(usize, f64)>,
    /// First global node contained in this set.
    pub first_global: usize,
    /// Local index of global node `first_global + k`.
    pub local_of_global: Vec<usize>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Local index of global node `j`, if this set contains it.
    pub fn local(&self, j: usize) -> Option<usize> {
        j.checked_sub(self.first_global)
            .and_then(|k| self.local_of_global.get(k).copied())
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        *self.nodes.last().expect("node sets are never empty")
    }
}

/// Global mesh plus the per-energy node sets.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub global: Vec<f64>,
    /// `W` at the global nodes.
    pub w: Vec<f64>,
    pub sets: Vec<NodeSet>,
    /// First global node outside the wall buffer.
    pub first_reported: usize,
    /// Node where `W = 0`.  The trapped population starts there, so the
    /// density has a kink and interpolation stencils do not straddle it.
    pub kink: Option<usize>,
    pub probes: Vec<f64>,
    pub zeta_max: f64,
    pub zeta_far: f64,
}

impl SpatialGrid {
    /// Index of the global node closest to `z`.
    pub fn nearest(&self, z: f64) -> usize {
        let mut best = 0;
        for (j, &g) in self.global.iter().enumerate() {
            if (g - z).abs() < (self.global[best] - z).abs() {
                best = j;
            }
        }
        best
    }

    /// Index of a global node equal to `z` up to a relative `1e-12`.
    pub fn index_of(&self, z: f64) -> Option<usize> {
        let j = self.nearest(z);
        ((self.global[j] - z).abs() <= 1e-12 * z.abs().max(1.0)).then_some(j)
    }

    /// Linear interpolation coefficients of `z` in the global mesh.
    pub fn locate(&self, z: f64) -> (usize, f64) {
        locate(&self.global, z)
    }

    /// First index of the four-node stencil used for cubic interpolation on
    /// the global interval `j`.
    pub fn stencil_start(&self, j: usize) -> usize {
        let last = self.global.len() - 4;
        let j0 = j.saturating_sub(1).min(last);
        match self.kink {
            Some(z) if j >= z => j0.max(z).min(last),
            Some(z) if z >= 3 => j0.min(z - 3),
            _ => j0,
        }
    }

    /// Cubic Lagrange weights of `z` on the stencil starting at `j0`.
    /// Outside the mesh the end value is held instead of extrapolated.
    pub fn cubic_weights(&self, j0: usize, z: f64) -> [f64; 4] {
        let x = &self.global[j0..j0 + 4];
        if z <= self.global[0] && j0 == 0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        if z >= x[3] && j0 + 4 == self.global.len() {
            return [0.0, 0.0, 0.0, 1.0];
        }
        // Just past the kink the density grows like sqrt(zeta - zeta_k), so
        // the stencil is taken in that variable.
        let (x, z) = match self.kink {
            Some(k) if j0 >= k && x[0] - self.global[k] < 4.0 * (x[3] - x[0]) => {
                let zk = self.global[k];
                let root = |v: f64| (v - zk).max(0.0).sqrt();
                ([root(x[0]), root(x[1]), root(x[2]), root(x[3])], root(z))
            }
            Some(k) if j0 + 3 <= k && self.global[k] - x[3] < 4.0 * (x[3] - x[0]) => {
                let zk = self.global[k];
                let root = |v: f64| -(zk - v).max(0.0).sqrt();
                ([root(x[0]), root(x[1]), root(x[2]), root(x[3])], root(z))
            }
            _ => ([x[0], x[1], x[2], x[3]], z),
        };
        let mut out = [1.0; 4];
        for (m, o) in out.iter_mut().enumerate() {
            for (q, &xq) in x.iter().enumerate() {
                if q != m {
                    *o *= (z - xq) / (x[m] - xq);
                }
            }
        }
        out
    }

    /// Cubic interpolation of nodal values `v` at `z`.
    pub fn interpolate(&self, v: &[f64], z: f64) -> f64 {
        let j0 = self.stencil_start(self.locate(z).0);
        let w = self.cubic_weights(j0, z);
        (0..4).map(|m| w[m] * v[j0 + m]).sum()
    }
}

/// Resolution and truncation parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub n_eps: usize,
    pub n_zeta: usize,
    pub eps_max: f64,
    pub zeta_max: f64,
    pub zeta_far: f64,
    /// Extra positions that must be global nodes (probes, velocity cuts).
    pub anchors: Vec<f64>,
}

pub const MIN_N_EPS: usize = 64;
pub const MIN_N_ZETA: usize = 128;

impl GridSpec {
    pub fn new(n_eps: usize, n_zeta: usize, eps_max: f64, zeta_max: f64) -> Self {
        GridSpec {
            n_eps,
            n_zeta,
            eps_max,
            zeta_max,
            zeta_far: 1e4,
            anchors: Vec::new(),
        }
    }

    pub fn with_anchors(mut self, anchors: &[f64]) -> Self {
        self.anchors.extend_from_slice(anchors);
        self
    }

    /// Same spec with both resolutions doubled.
    pub fn refined(&self) -> Self {
        GridSpec {
            n_eps: 2 * self.n_eps,
            n_zeta: 2 * self.n_zeta,
            ..self.clone()
        }
    }

    /// Builds production grids after checking the resolution floors.
    pub fn build(&self, p: &Potential) -> Result<Grids> {
        if self.n_eps < MIN_N_EPS {
            return Err(Error::config("n_eps", format!("must be at least {MIN_N_EPS}")));
        }
        if self.n_zeta < MIN_N_ZETA {
            return Err(Error::config("n_zeta", format!("must be at least {MIN_N_ZETA}")));
        }
        self.build_unchecked(p)
    }

    /// Builds grids of any size; used for small diagnostic meshes.
    pub fn build_unchecked(&self, p: &Potential) -> Result<Grids> {
        self.validate(p)?;
        build(p, self)
    }

    fn validate(&self, p: &Potential) -> Result<()> {
        let zmin = p.zeta_min();
        if !(self.zeta_max.is_finite() && self.zeta_max > zmin) {
            return Err(Error::config("zeta_max", format!("must exceed zeta_min = {zmin:.6}")));
        }
        if self.zeta_max <= 2.0 * zmin {
            return Err(Error::config(
                "zeta_max",
                format!("must exceed 2 zeta_min = {:.6}", 2.0 * zmin),
            ));
        }
        if !(self.eps_max.is_finite() && self.eps_max > 0.0) {
            return Err(Error::config("eps_max", "must be positive"));
        }
        if !(self.zeta_far.is_finite() && self.zeta_far > self.zeta_max) {
            return Err(Error::config("zeta_far", "must exceed zeta_max"));
        }
        if self.n_eps < 4 {
            return Err(Error::config("n_eps", "must be at least 4"));
        }
        if self.n_zeta < 8 {
            return Err(Error::config("n_zeta", "must be at least 8"));
        }
        Ok(())
    }
}

/// Energy and spatial grids for one potential.
#[derive(Debug, Clone)]
pub struct Grids {
    pub potential: Potential,
    pub spec: GridSpec,
    pub energy: EnergyGrid,
    pub spatial: SpatialGrid,
}

impl Grids {
    pub fn zeta_min_index(&self) -> usize {
        self.spatial
            .index_of(self.potential.zeta_min())
            .expect("zeta_min is always a global node")
    }
}

/// Builds grids with the default far-field distance and no extra anchors.
pub fn build_grids(p: &Potential, n_eps: usize, n_zeta: usize, eps_max: f64, zeta_max: f64) -> Result<Grids> {
    GridSpec::new(n_eps, n_zeta, eps_max, zeta_max).build(p)
}

/// Probe positions used for the convergence histories.
pub fn default_probes(p: &Potential) -> Vec<f64> {
    use crate::model::PotentialKind::*;
    match p.kind {
        Lj9_3 => vec![2.293, p.zeta_min(), 1.0, 0.901],
        Lj12_6 => vec![1.371, p.zeta_min(), 1.0, 0.934],
    }
}

fn locate(xs: &[f64], z: f64) -> (usize, f64) {
    let n = xs.len();
    if z <= xs[0] {
        return (0, 0.0);
    }
    if z >= xs[n - 1] {
        return (n - 2, 1.0);
    }
    let j = xs.partition_point(|&x| x <= z) - 1;
    let j = j.min(n - 2);
    (j, (z - xs[j]) / (xs[j + 1] - xs[j]))
}

/// Ratio `r` with `h0 (r^n - 1) / (r - 1) = len`.
fn geometric_ratio(h0: f64, n: usize, len: f64) -> f64 {
    let total = |r: f64| {
        if (r - 1.0).abs() < 1e-12 {
            h0 * n as f64
        } else {
            h0 * (r.powi(n as i32) - 1.0) / (r - 1.0)
        }
    };
    let (mut lo, mut hi) = (1e-6, 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < len {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lowest energy whose node is reported.
pub fn report_energy(spec: &GridSpec) -> f64 {
    spec.eps_max - REPORT_MARGIN.min(0.5 * spec.eps_max)
}

fn global_mesh(p: &Potential, spec: &GridSpec) -> Result<Vec<f64>> {
    let zmin = p.zeta_min();
    let zlo = p.turning_points(spec.eps_max)?.a;
    let n_rep = (spec.n_zeta * 3 / 10).max(4);
    let n_att = spec.n_zeta.saturating_sub(n_rep).max(4);
    let h0 = (zmin - zlo) / n_rep as f64;
    let mut nodes: Vec<f64> = (0..=n_rep).map(|i| zlo + h0 * i as f64).collect();
    *nodes.last_mut().unwrap() = zmin;
    let r = geometric_ratio(h0, n_att, spec.zeta_max - zmin);
    let mut z = zmin;
    let mut h = h0;
    for _ in 0..n_att - 1 {
        z += h;
        h *= r;
        nodes.push(z);
    }
    nodes.push(spec.zeta_max);

    // Required anchors replace a nearby node when one is close, else are inserted.
    let mut anchors = vec![zlo, 1.0, zmin, spec.zeta_max];
    anchors.extend(default_probes(p));
    anchors.extend(spec.anchors.iter().copied().filter(|&a| a > zlo && a < spec.zeta_max));
    let fixed = |x: f64, anchors: &[f64]| anchors.contains(&x);
    for &a in &anchors {
        if nodes.contains(&a) {
            continue;
        }
        let j = nodes.partition_point(|&x| x < a);
        let (left, right) = (nodes[j - 1], nodes[j]);
        let gap = right - left;
        let replace = if a - left < 0.35 * gap && !fixed(left, &anchors) {
            Some(j - 1)
        } else if right - a < 0.35 * gap && !fixed(right, &anchors) {
            Some(j)
        } else {
            None
        };
        match replace {
            Some(k) => nodes[k] = a,
            None => nodes.insert(j, a),
        }
    }
    nodes.sort_by(|a, b| a.total_cmp(b));
    nodes.dedup();

    // A node just outside zeta = 1 whose energy is too close to 0- would need
    // an outer turning point beyond zeta_max.
    let w_far = p.w(spec.zeta_max);
    nodes.retain(|&x| !(x > 1.0 && x < zmin && p.w(x) > w_far) || fixed(x, &anchors));
    Ok(nodes)
}

#[derive(Clone, Copy)]
struct Candidate {
    eps: f64,
    class: EnergyClass,
    za: f64,
    zb: Option<f64>,
    exact: bool,
}

fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn energies(p: &Potential, spec: &GridSpec, global: &[f64]) -> Result<Vec<Candidate>> {
    let zmin = p.zeta_min();
    let wmin = p.w_min();
    let kappa = p.kappa;
    let w_far = p.w(spec.zeta_max);
    let mut out = Vec::new();

    out.push(Candidate {
        eps: wmin,
        class: EnergyClass::Degenerate,
        za: zmin,
        zb: Some(zmin),
        exact: true,
    });
    for class in [EnergyClass::ZeroMinus, EnergyClass::ZeroPlus] {
        out.push(Candidate {
            eps: 0.0,
            class,
            za: 1.0,
            zb: None,
            exact: true,
        });
    }

    for (j, &z) in global.iter().enumerate() {
        if z == zmin || z == 1.0 {
            continue;
        }
        // The innermost node is the turning point of eps_max by construction.
        let eps = if j == 0 { spec.eps_max } else { p.w(z) };
        if z < zmin {
            let zb = if eps < 0.0 { p.turning_points(eps)?.b } else { None };
            let class = if eps < 0.0 {
                EnergyClass::Trapped
            } else {
                EnergyClass::Free
            };
            out.push(Candidate {
                eps,
                class,
                za: z,
                zb,
                exact: true,
            });
        } else {
            let za = p.turning_points(eps)?.a;
            out.push(Candidate {
                eps,
                class: EnergyClass::Trapped,
                za,
                zb: Some(z),
                exact: true,
            });
        }
    }

    let n_free = (spec.n_eps * 3 / 5).max(2);
    let n_trap = spec.n_eps.saturating_sub(n_free);
    let n_deep = n_trap / 2;
    let n_shallow = n_trap - n_deep;
    // Free energies: log-spaced towards 0, then uniform in sqrt(eps) up to
    // eps_max so the high-energy tail seen near the wall stays resolved.
    let e_mid = kappa.min(0.5 * spec.eps_max);
    let n_log = n_free / 2;
    let mut base: Vec<f64> = log_space(1e-6 * kappa, e_mid, n_log);
    let (r0, r1) = (e_mid.sqrt(), spec.eps_max.sqrt());
    let n_lin = n_free - n_log;
    base.extend((1..n_lin).map(|k| (r0 + (r1 - r0) * k as f64 / n_lin as f64).powi(2)));
    base.push(spec.eps_max);
    base.extend(log_space(1e-5, 0.5, n_deep).into_iter().map(|d| wmin + kappa * d));
    base.extend(log_space(-w_far, 0.5 * kappa, n_shallow).into_iter().map(|d| -d));
    for eps in base {
        if eps <= wmin || eps > spec.eps_max || (eps < 0.0 && eps > w_far) {
            continue;
        }
        let tp = p.turning_points(eps)?;
        out.push(Candidate {
            eps,
            class: if eps < 0.0 {
                EnergyClass::Trapped
            } else {
                EnergyClass::Free
            },
            za: tp.a,
            zb: tp.b,
            exact: false,
        });
    }

    let order = |c: &Candidate| match c.class {
        EnergyClass::ZeroMinus => 0,
        EnergyClass::ZeroPlus => 1,
        _ => 0,
    };
    out.sort_by(|a, b| a.eps.total_cmp(&b.eps).then(order(a).cmp(&order(b))));

    // Merge near-duplicates, keeping exact candidates.
    let mut merged: Vec<Candidate> = Vec::with_capacity(out.len());
    for c in out {
        if let Some(last) = merged.last_mut() {
            let same_zero = last.eps == 0.0 && c.eps == 0.0;
            let close = (c.eps - last.eps).abs() <= 1e-11 * c.eps.abs().max(1.0);
            if close && !same_zero {
                if c.exact && !last.exact || c.class == EnergyClass::Degenerate {
                    *last = c;
                }
                continue;
            }
        }
        merged.push(c);
    }

    // Snap computed turning points onto global nodes they coincide with.
    for c in merged.iter_mut() {
        c.za = snap(p, global, c.za, c.eps);
        c.zb = c.zb.map(|z| snap(p, global, z, c.eps));
    }
    Ok(merged)
}

/// Moves a computed turning point onto a coincident global node, provided the
/// node stays inside the allowed region.
fn snap(p: &Potential, global: &[f64], z: f64, eps: f64) -> f64 {
    let (j, _) = locate(global, z);
    for k in [j, j + 1] {
        if let Some(&g) = global.get(k) {
            let allowed = p.w(g) - eps <= 1e-14 * eps.abs().max(1.0);
            if (g - z).abs() <= 1e-9 * z && allowed {
                return g;
            }
        }
    }
    z
}

/// Geometric refinement between a turning point `zt` and the neighbour `zn`.
fn refinement(zt: f64, zn: f64) -> Vec<f64> {
    let h = zn - zt;
    if h.abs() < 1e-9 {
        return Vec::new();
    }
    let r = REFINE_RATIO;
    let m = REFINE_NODES;
    // Gaps g0 r^k, k = 0..=m, summing to h.
    let g0 = h * (r - 1.0) / (r.powi(m as i32 + 1) - 1.0);
    let mut out = Vec::with_capacity(m);
    let mut acc = 0.0;
    for k in 0..m {
        acc += g0 * r.powi(k as i32);
        out.push(zt + acc);
    }
    out
}

fn node_set(global: &[f64], za: f64, end: f64, end_is_turning: bool) -> NodeSet {
    let tol = |z: f64| 1e-12 * z.max(1.0);
    let first_inside = global.partition_point(|&g| g < za - tol(za));
    let last_inside = global.partition_point(|&g| g <= end + tol(end));
    let globals: Vec<usize> = (first_inside..last_inside).collect();

    let mut nodes: Vec<(f64, Option<usize>)> = Vec::new();
    let starts_on_global = globals.first().is_some_and(|&j| (global[j] - za).abs() <= tol(za));
    if !starts_on_global {
        nodes.push((za, None));
    }
    for &j in &globals {
        nodes.push((global[j], Some(j)));
    }
    let ends_on_global = globals.last().is_some_and(|&j| (global[j] - end).abs() <= tol(end));
    if !ends_on_global {
        nodes.push((end, None));
    }
    // Pin turning points exactly.
    nodes[0].0 = za;
    let last = nodes.len() - 1;
    nodes[last].0 = end;

    if nodes.len() >= 2 {
        let left = refinement(nodes[0].0, nodes[1].0);
        let mut with_left: Vec<(f64, Option<usize>)> = vec![nodes[0]];
        with_left.extend(left.into_iter().map(|z| (z, None)));
        with_left.extend_from_slice(&nodes[1..]);
        nodes = with_left;
        if end_is_turning {
            let n = nodes.len();
            let mut right = refinement(nodes[n - 1].0, nodes[n - 2].0);
            right.reverse();
            let tail = nodes.pop().unwrap();
            nodes.extend(right.into_iter().map(|z| (z, None)));
            nodes.push(tail);
        }
    }

    let first_global = globals.first().copied().unwrap_or(0);
    let mut local_of_global = Vec::with_capacity(globals.len());
    let mut interp = Vec::with_capacity(nodes.len());
    for (k, &(z, g)) in nodes.iter().enumerate() {
        if let Some(j) = g {
            debug_assert_eq!(j, first_global + local_of_global.len());
            local_of_global.push(k);
            if j + 1 < global.len() {
                interp.push((j, 0.0));
            } else {
                interp.push((j - 1, 1.0));
            }
        } else if z < global[0] {
            // Linear extrapolation into the wall buffer.
            interp.push((0, (z - global[0]) / (global[1] - global[0])));
        } else {
            interp.push(locate(global, z));
        }
    }
    NodeSet {
        nodes: nodes.into_iter().map(|(z, _)| z).collect(),
        interp,
        first_global,
        local_of_global,
    }
}

fn build(p: &Potential, spec: &GridSpec) -> Result<Grids> {
    let global = global_mesh(p, spec)?;
    let cands = energies(p, spec, &global)?;
    let mut nodes = Vec::with_capacity(cands.len());
    let mut sets = Vec::with_capacity(cands.len());
    for c in &cands {
        let set = match c.class {
            EnergyClass::Degenerate => {
                let j = global
                    .iter()
                    .position(|&g| g == c.za)
                    .expect("zeta_min is a global node");
                NodeSet {
                    nodes: vec![c.za],
                    interp: vec![(j, 0.0)],
                    first_global: j,
                    local_of_global: vec![0],
                }
            }
            EnergyClass::Trapped => node_set(&global, c.za, c.zb.unwrap(), true),
            _ => node_set(&global, c.za, spec.zeta_max, false),
        };
        nodes.push(EnergyNode {
            eps: c.eps,
            class: c.class,
            zeta_a: c.za,
            zeta_b: c.zb,
        });
        sets.push(set);
    }
    let w: Vec<f64> = global.iter().map(|&z| p.w(z)).collect();
    let e_rep = report_energy(spec);
    let first_reported = w.iter().position(|&wj| wj <= e_rep).unwrap_or(0);
    let z0 = p.zeta_zero();
    let kink = global.iter().position(|&g| (g - z0).abs() <= 1e-12 * z0);
    Ok(Grids {
        potential: *p,
        spec: spec.clone(),
        energy: EnergyGrid { nodes },
        spatial: SpatialGrid {
            global,
            w,
            sets,
            first_reported,
            kink,
            probes: default_probes(p),
            zeta_max: spec.zeta_max,
            zeta_far: spec.zeta_far,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids(p: &Potential) -> Grids {
        build_grids(p, 64, 128, 20.0, 50.0).unwrap()
    }

    #[test]
    fn trapped_set_spans_the_orbit() {
        let p = Potential::lj9_3(1.0).unwrap();
        let spec = GridSpec::new(64, 128, 20.0, 50.0);
        let g = spec.build(&p).unwrap();
        // An energy at exactly -0.5 is present through the base grid or not;
        // check every trapped set instead.
        for (e, s) in g.energy.nodes.iter().zip(&g.spatial.sets) {
            if e.class == EnergyClass::Trapped {
                assert_eq!(s.first(), e.zeta_a);
                assert_eq!(s.last(), e.zeta_b.unwrap());
                assert!(s.nodes.contains(&p.zeta_min()));
            }
        }
    }

    #[test]
    fn zero_pair_and_bounds() {
        for p in [Potential::lj9_3(1.0).unwrap(), Potential::lj12_6(1.0).unwrap()] {
            let g = grids(&p);
            let e = &g.energy.nodes;
            let zm = g.energy.index_of(EnergyClass::ZeroMinus).unwrap();
            assert_eq!(e[zm + 1].class, EnergyClass::ZeroPlus);
            assert_eq!(e[zm].eps, 0.0);
            assert_eq!(e.last().unwrap().eps, 20.0);
            for w in e.windows(2) {
                let pair = w[0].class == EnergyClass::ZeroMinus;
                assert!(w[1].eps > w[0].eps || pair);
            }
            assert_eq!(e[0].class, EnergyClass::Degenerate);
        }
    }

    #[test]
    fn probes_are_global_nodes() {
        let p = Potential::lj9_3(1.0).unwrap();
        let g = grids(&p);
        for z in [2.293, p.zeta_min(), 1.0, 0.901] {
            assert!(g.spatial.index_of(z).is_some(), "{z}");
        }
        assert_eq!(default_probes(&p), vec![2.293, 3f64.powf(1.0 / 6.0), 1.0, 0.901]);
    }

    #[test]
    fn every_node_is_allowed() {
        for p in [Potential::lj9_3(1.0).unwrap(), Potential::lj12_6(1.0).unwrap()] {
            let g = grids(&p);
            for (e, s) in g.energy.nodes.iter().zip(&g.spatial.sets) {
                for &z in &s.nodes {
                    assert!(e.eps - p.w(z) >= -1e-12 * e.eps.abs().max(1.0), "{} {}", e.eps, z);
                }
                for w in s.nodes.windows(2) {
                    assert!(w[1] > w[0]);
                }
            }
        }
    }

    #[test]
    fn global_nodes_are_turning_points() {
        let p = Potential::lj9_3(1.0).unwrap();
        let g = grids(&p);
        for (j, &z) in g.spatial.global.iter().enumerate() {
            let hit = g.energy.nodes.iter().any(|e| e.zeta_a == z || e.zeta_b == Some(z));
            assert!(hit, "node {j} at {z}");
        }
    }

    #[test]
    fn sets_contain_every_allowed_global_node() {
        let p = Potential::lj12_6(1.0).unwrap();
        let g = grids(&p);
        for (e, s) in g.energy.nodes.iter().zip(&g.spatial.sets) {
            for (j, &w) in g.spatial.w.iter().enumerate() {
                let inside = w <= e.eps + 1e-12 * e.eps.abs().max(1.0) && g.spatial.global[j] <= s.last();
                assert_eq!(s.local(j).is_some(), inside, "eps {} node {}", e.eps, j);
                if let Some(k) = s.local(j) {
                    assert_eq!(s.nodes[k], g.spatial.global[j]);
                }
            }
        }
    }

    #[test]
    fn refinement_is_geometric() {
        let p = Potential::lj9_3(1.0).unwrap();
        let g = grids(&p);
        for s in &g.spatial.sets {
            if s.len() < REFINE_NODES + 2 || s.nodes[1] - s.nodes[0] < 1e-9 {
                continue;
            }
            let gaps: Vec<f64> = s.nodes[..=REFINE_NODES].windows(2).map(|w| w[1] - w[0]).collect();
            for w in gaps.windows(2) {
                assert!(w[1] / w[0] <= REFINE_RATIO * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn configuration_errors_name_the_key() {
        let p = Potential::lj9_3(1.0).unwrap();
        let err = build_grids(&p, 64, 128, 20.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "zeta_max"));
        let err = build_grids(&p, 10, 128, 20.0, 50.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "n_eps"));
        let err = build_grids(&p, 64, 100, 20.0, 50.0).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "n_zeta"));
    }

    #[test]
    fn attractive_side_is_graded() {
        let p = Potential::lj9_3(1.0).unwrap();
        let g = grids(&p);
        let jm = g.zeta_min_index();
        let gl = &g.spatial.global;
        let gaps: Vec<f64> = gl[jm..].windows(2).map(|w| w[1] - w[0]).collect();
        let anchors = [2.293, 50.0];
        let mut worst: f64 = 0.0;
        for (k, w) in gaps.windows(2).enumerate() {
            let z = gl[jm + k + 1];
            if anchors.iter().any(|a| (a - z).abs() < 3.0 * w[0].max(w[1])) {
                continue;
            }
            worst = worst.max(w[1] / w[0]);
        }
        assert!(worst <= REFINE_RATIO, "{worst}");
    }
}
