//! Optical depths along characteristics and the transport sweep.
//!
//! Along a characteristic of energy `eps` the reduced distribution obeys
//!
//! ```text
//! dF+/dzeta =  mu (S - F+),     dF-/dzeta = -mu (S - F-),
//! mu = 1 / (tau sqrt(2 (eps - W))),   S = n M = rho exp(-eps) / sqrt(2 pi)
//! ```
//!
//! where `rho = n exp(W)`.  With `Psi` the cumulative optical depth and
//! `theta(a, b) = exp(-(Psi(b) - Psi(a)))`, one cell `[z0, z1]` advances `F+` by
//!
//! ```text
//! F+(z1) = e^-D F+(z0) + M sum_m G_m rho_m,    G_m = int theta(s, z1) mu(s) L_m(s) ds
//! ```
//!
//! where `L_m` are the cubic Lagrange basis functions of the four global
//! nodes around the cell, so `rho` between nodes is the same piecewise cubic
//! on every characteristic.  The gains sum to `A = 1 - e^-D`, which keeps the
//! equilibrium exact.  `F-` runs backwards with the mirror gains
//! `H_m = int theta(z0, s) mu(s) L_m(s) ds`.
//!
//! Trapped orbits close on themselves.  With `P` the outward sweep started
//! from zero and `Q` the inward one, the turning values are
//!
//! ```text
//! F(zeta_a) = (Q(zeta_a) + t P(zeta_b)) / (1 - t^2),   t = theta(zeta_a, zeta_b)
//! ```
//!
//! Concurrency: characteristics are independent.  A sweep reads the shared
//! table and the previous density, and each worker writes only the output
//! slices of its own characteristic, so any scheduler that runs every
//! characteristic exactly once yields the same bits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{EnergyClass, Grids, NodeSet, SpatialGrid};
use crate::model::{Potential, RelaxationModel};
use crate::quad::{gl10, gl20, CellMap, Rule};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Equilibrium value `exp(-eps) / sqrt(2 pi)`.
#[inline]
pub fn maxwellian_energy(eps: f64) -> f64 {
    (-eps).exp() * INV_SQRT_2PI
}

/// Per-cell propagation coefficients.
#[derive(Debug, Clone, Copy)]
pub struct CellCoef {
    pub map: CellMap,
    /// Optical depth of the cell.
    pub depth: f64,
    pub decay: f64,
    pub a: f64,
    /// First global node of the interpolation stencil.
    pub j0: usize,
    /// Outward gains.
    pub g: [f64; 4],
    /// Inward gains.
    pub h: [f64; 4],
}

/// Optical-depth data for one characteristic.
#[derive(Debug, Clone)]
pub struct CharTable {
    pub eps: f64,
    pub class: EnergyClass,
    /// Cumulative optical depth from `zeta_a` at each local node.
    pub psi: Vec<f64>,
    pub cells: Vec<CellCoef>,
    /// Optical depth from `zeta_max` to infinity, for characteristics with a tail.
    pub tail: Option<f64>,
    zeta_a: f64,
    zeta_b: Option<f64>,
}

impl CharTable {
    /// Total optical depth of the characteristic, tail included.
    pub fn total_depth(&self) -> f64 {
        self.psi.last().copied().unwrap_or(0.0) + self.tail.unwrap_or(0.0)
    }
}

/// Optical depths for every characteristic of a grid.
#[derive(Debug, Clone)]
pub struct OpticalDepthTable {
    pub grids: Grids,
    pub relaxation: RelaxationModel,
    pub chars: Vec<CharTable>,
}

/// Collision measure `mu` at `s`, with `eps - W(s)` taken relative to `zt`.
#[inline]
fn mu_at(p: &Potential, r: &RelaxationModel, eps: f64, zt: f64, s: f64) -> f64 {
    1.0 / (r.tau(s) * (2.0 * p.gap(eps, zt, s)).sqrt())
}

/// Below this relative offset from a turning point the gap `eps - W` is
/// dominated by rounding, so it is linearised about the turning point.
const NEAR_TURN: f64 = 1e-7;

/// `mu` at `s = zt + d` where `zt` is a turning point and `d` is known more
/// precisely than `s - zt`.
#[inline]
fn mu_near_turn(p: &Potential, r: &RelaxationModel, eps: f64, zt: f64, s: f64, d: f64) -> f64 {
    if d.abs() < NEAR_TURN * zt.abs().max(1.0) {
        let gap = (p.dw(zt) * d).abs().max(f64::MIN_POSITIVE);
        1.0 / (r.tau(s) * (2.0 * gap).sqrt())
    } else {
        mu_at(p, r, eps, zt, s)
    }
}

struct CellGeom {
    z0: f64,
    z1: f64,
    map: CellMap,
    zt: f64,
}

impl CellGeom {
    #[inline]
    fn integrand(&self, p: &Potential, r: &RelaxationModel, eps: f64, t: f64) -> (f64, f64) {
        let (s, js) = self.map.eval(self.z0, self.z1, t);
        let mu = match self.map {
            CellMap::FromLeft(_) | CellMap::FromRight(_) => {
                let d = self.map.offset(self.z0, self.z1, t);
                mu_near_turn(p, r, eps, self.zt, s, d)
            }
            _ => mu_at(p, r, eps, self.zt, s),
        };
        (s, mu * js)
    }

    /// Optical depth from `z0` to the point with parameter `t`.
    fn partial(&self, p: &Potential, r: &RelaxationModel, eps: f64, t: f64, rule: &Rule) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let mut sum = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            sum += w * self.integrand(p, r, eps, t * x).1;
        }
        sum * t
    }
}

fn cell_geom(p: &Potential, nodes: &[f64], k: usize, za: f64, zb: Option<f64>, eps: f64) -> CellGeom {
    let z0 = nodes[k];
    let z1 = nodes[k + 1];
    let map = CellMap::for_cell(z0, z1, Some(za), zb);
    let zt = match map {
        CellMap::FromLeft(z) | CellMap::FromRight(z) => z,
        CellMap::BothTurns => za,
        CellMap::Plain => {
            // Measure the gap from whichever node has the smaller |eps - W|.
            if (eps - p.w(z0)).abs() < (eps - p.w(z1)).abs() {
                z0
            } else {
                z1
            }
        }
    };
    CellGeom { z0, z1, map, zt }
}

fn cell_coef(p: &Potential, r: &RelaxationModel, eps: f64, geo: &CellGeom, sp: &SpatialGrid) -> CellCoef {
    let inner = gl10();
    let depth = geo.partial(p, r, eps, 1.0, gl20());
    let mid = 0.5 * (geo.z0 + geo.z1);
    let j0 = sp.stencil_start(sp.locate(mid).0);
    let outer = gl10();
    let (mut g, mut h) = ([0.0; 4], [0.0; 4]);
    for (t, w) in outer.nodes.iter().zip(&outer.weights) {
        let (s, m) = geo.integrand(p, r, eps, *t);
        let psi_t = geo.partial(p, r, eps, *t, inner);
        let lw = sp.cubic_weights(j0, s);
        let up = w * (-(depth - psi_t)).exp() * m;
        let down = w * (-psi_t).exp() * m;
        for q in 0..4 {
            g[q] += up * lw[q];
            h[q] += down * lw[q];
        }
    }
    let a = -(-depth).exp_m1();
    balance(&mut g, a);
    balance(&mut h, a);
    CellCoef {
        map: geo.map,
        depth,
        decay: (-depth).exp(),
        a,
        j0,
        g,
        h,
    }
}

/// Shifts the largest gain so that the gains sum to `a` exactly.
fn balance(g: &mut [f64; 4], a: f64) {
    let big = (0..4).max_by(|&x, &y| g[x].abs().total_cmp(&g[y].abs())).unwrap_or(0);
    let rest: f64 = (0..4).filter(|&q| q != big).map(|q| g[q]).sum();
    g[big] = a - rest;
}

/// `int_from^inf mu ds` beyond the finite mesh.
///
/// Between `from` and `zeta_far` the integral uses log-spaced panels.  Beyond
/// `zeta_far` the potential is dropped for `eps > 0` and the remainder is
/// `tail_from(zeta_far) / sqrt(2 eps)`.  At `eps = 0` the potential is kept
/// and the remainder follows the algebraic far-field decay.
pub fn tail_depth(p: &Potential, r: &RelaxationModel, eps: f64, from: f64, zeta_far: f64) -> f64 {
    let rule = gl20();
    let mu = |s: f64| 1.0 / (r.tau(s) * (2.0 * (eps - p.w(s))).sqrt());
    let log_panels = |a: f64, b: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        let n = ((b / a).ln() / 0.2f64.ln_1p()).ceil().max(1.0) as usize;
        let (la, lb) = (a.ln(), b.ln());
        let mut sum = 0.0;
        for i in 0..n {
            let t0 = la + (lb - la) * i as f64 / n as f64;
            let t1 = la + (lb - la) * (i + 1) as f64 / n as f64;
            sum += rule.integrate(t0, t1, |t| {
                let s = t.exp();
                s * mu(s)
            });
        }
        sum
    };
    let near = log_panels(from, zeta_far.max(from));
    if eps > 0.0 {
        return near + r.tail_from(zeta_far.max(from)) / (2.0 * eps).sqrt();
    }
    // eps = 0: integrate further out with the exact potential.
    let start = zeta_far.max(from);
    let big = start * 1e12;
    let mid = log_panels(start, big);
    let (_, pw) = p.far_field();
    let rest = match r.algebraic_decay() {
        None => 0.0,
        Some(nu) => {
            let q = nu - 1.0 - 0.5 * pw;
            if q <= 0.0 {
                return f64::INFINITY;
            }
            big * mu(big) / q
        }
    };
    near + mid + rest
}

/// `int_{zeta_a(eps)}^inf mu ds` for an arbitrary free energy, computed on
/// its own panels independently of any grid.
pub fn depth_to_infinity(p: &Potential, r: &RelaxationModel, eps: f64, zeta_far: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(Error::Domain(format!("energy {eps} is trapped")));
    }
    let za = p.turning_points(eps)?.a;
    let rule = gl20();
    let mut z0 = za;
    let mut h = 0.02 * za;
    let mut sum = 0.0;
    while z0 < 8.0 {
        let z1 = z0 + h;
        let g = CellGeom {
            z0,
            z1,
            map: CellMap::for_cell(z0, z1, Some(za), None),
            zt: za,
        };
        sum += g.partial(p, r, eps, 1.0, rule);
        z0 = z1;
        h *= 1.15;
    }
    Ok(sum + tail_depth(p, r, eps, z0, zeta_far))
}

impl OpticalDepthTable {
    pub fn build(grids: &Grids, r: &RelaxationModel) -> OpticalDepthTable {
        let p = grids.potential;
        let zeta_max = grids.spatial.zeta_max;
        let zeta_far = grids.spatial.zeta_far;
        let chars: Vec<CharTable> = grids
            .energy
            .nodes
            .par_iter()
            .zip(grids.spatial.sets.par_iter())
            .map(|(e, set)| {
                let nodes = &set.nodes;
                let mut psi = Vec::with_capacity(nodes.len());
                let mut cells = Vec::with_capacity(nodes.len().saturating_sub(1));
                psi.push(0.0);
                let zb = if e.class == EnergyClass::Trapped {
                    e.zeta_b
                } else {
                    None
                };
                for k in 0..nodes.len().saturating_sub(1) {
                    let g = cell_geom(&p, nodes, k, e.zeta_a, zb, e.eps);
                    let coef = cell_coef(&p, r, e.eps, &g, &grids.spatial);
                    psi.push(psi[k] + coef.depth);
                    cells.push(coef);
                }
                let tail = e.class.has_tail().then(|| tail_depth(&p, r, e.eps, zeta_max, zeta_far));
                CharTable {
                    eps: e.eps,
                    class: e.class,
                    psi,
                    cells,
                    tail,
                    zeta_a: e.zeta_a,
                    zeta_b: zb,
                }
            })
            .collect();
        OpticalDepthTable {
            grids: grids.clone(),
            relaxation: *r,
            chars,
        }
    }

    pub fn potential(&self) -> &Potential {
        &self.grids.potential
    }

    /// `theta(a, b)` on characteristic `i` for two of its local nodes.
    pub fn theta_nodes(&self, i: usize, ka: usize, kb: usize) -> f64 {
        let psi = &self.chars[i].psi;
        (-(psi[kb] - psi[ka])).exp()
    }

    /// Cumulative optical depth at an arbitrary allowed position `x`.
    pub fn psi_at(&self, i: usize, x: f64) -> Result<f64> {
        let ch = &self.chars[i];
        let set = &self.grids.spatial.sets[i];
        let nodes = &set.nodes;
        let p = &self.grids.potential;
        let r = &self.relaxation;
        let (lo, hi) = (set.first(), set.last());
        let tol = 1e-12 * x.abs().max(1.0);
        if x < lo - tol {
            return Err(Error::Domain(format!("position {x} lies below the turning point {lo}")));
        }
        if x > hi + tol {
            if ch.tail.is_none() {
                return Err(Error::Domain(format!(
                    "position {x} lies beyond the turning point {hi}"
                )));
            }
            if x.is_infinite() {
                return Ok(ch.total_depth());
            }
            let far = self.grids.spatial.zeta_far;
            let beyond = tail_depth(p, r, ch.eps, hi, far) - tail_depth(p, r, ch.eps, x, far);
            return Ok(ch.psi[nodes.len() - 1] + beyond);
        }
        let x = x.clamp(lo, hi);
        if nodes.len() == 1 {
            return Ok(0.0);
        }
        let k = (nodes.partition_point(|&z| z <= x).max(1) - 1).min(nodes.len() - 2);
        let g = cell_geom(p, nodes, k, ch.zeta_a, ch.zeta_b, ch.eps);
        let t = g.map.invert(g.z0, g.z1, x);
        Ok(ch.psi[k] + g.partial(p, r, ch.eps, t, gl20()))
    }

    /// `mu(s)` on characteristic `i`.
    pub fn mu(&self, i: usize, s: f64) -> f64 {
        let ch = &self.chars[i];
        let p = &self.grids.potential;
        let zt = match ch.zeta_b {
            Some(zb) if (s - zb).abs() < (s - ch.zeta_a).abs() => zb,
            _ => ch.zeta_a,
        };
        let mut d = s - zt;
        if d == 0.0 {
            // Closer than one ulp: take half an ulp on the allowed side.
            d = 0.5 * f64::EPSILON * zt.abs().max(f64::MIN_POSITIVE) * if zt == ch.zeta_a { 1.0 } else { -1.0 };
        }
        mu_near_turn(p, &self.relaxation, ch.eps, zt, s, d)
    }
}

/// How trapped orbits are closed at the outer turning point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TrappedClosure {
    /// Both turning values solved in closed form from the current source.
    #[serde(rename = "closed_form")]
    ClosedForm,
    /// The outer turning value is taken from the previous iterate.
    #[default]
    #[serde(rename = "lagged")]
    Lagged,
}

/// Incident distribution `F_inf(c_z)` for `c_z <= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Incident {
    Zero,
    ShiftedMaxwellian { t_inf: f64, v_inf: f64 },
    Mixture(Vec<(f64, Incident)>),
}

impl Incident {
    pub fn equilibrium() -> Incident {
        Incident::ShiftedMaxwellian { t_inf: 1.0, v_inf: 0.0 }
    }

    pub fn eval(&self, c: f64) -> f64 {
        match self {
            Incident::Zero => 0.0,
            Incident::ShiftedMaxwellian { t_inf, v_inf } => {
                let d = c - v_inf;
                (-(d * d) / (2.0 * t_inf)).exp() / (2.0 * std::f64::consts::PI * t_inf).sqrt()
            }
            Incident::Mixture(parts) => parts.iter().map(|(l, f)| l * f.eval(c)).sum(),
        }
    }

    /// `A = sup_c F(c) sqrt(2 pi) exp(c^2 / 2)`, infinite when unbounded.
    /// For mixtures the sum of the parts' constants is returned, an upper bound.
    pub fn bound_constant(&self) -> f64 {
        match self {
            Incident::Zero => 0.0,
            Incident::ShiftedMaxwellian { t_inf, v_inf } => {
                let (t, v) = (*t_inf, *v_inf);
                let scale = 1.0 / t.sqrt();
                if t < 1.0 {
                    // The exponent c^2/2 - (c - v)^2/(2T) peaks at c = v / (1 - T).
                    let c = v / (1.0 - t);
                    let d = c - v;
                    scale * (0.5 * c * c - d * d / (2.0 * t)).exp()
                } else if t == 1.0 && v == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            Incident::Mixture(parts) => parts.iter().map(|(l, f)| l.abs() * f.bound_constant()).sum(),
        }
    }
}

/// Discretised `F+`, `F-` on every characteristic, plus the outgoing value
/// `F+(infinity)` for characteristics that reach infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub k: usize,
    pub f_plus: Vec<Vec<f64>>,
    pub f_minus: Vec<Vec<f64>>,
    pub f_out: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(table: &OpticalDepthTable) -> DistributionField {
        let sets = &table.grids.spatial.sets;
        DistributionField {
            k: 0,
            f_plus: sets.iter().map(|s| vec![0.0; s.len()]).collect(),
            f_minus: sets.iter().map(|s| vec![0.0; s.len()]).collect(),
            f_out: vec![0.0; sets.len()],
        }
    }

    /// The equilibrium field `exp(-eps) / sqrt(2 pi)` scaled by `beta`.
    pub fn equilibrium(table: &OpticalDepthTable, beta: f64) -> DistributionField {
        let sets = &table.grids.spatial.sets;
        let vals: Vec<Vec<f64>> = table
            .chars
            .iter()
            .zip(sets)
            .map(|(c, s)| vec![beta * maxwellian_energy(c.eps); s.len()])
            .collect();
        DistributionField {
            k: 0,
            f_plus: vals.clone(),
            f_minus: vals,
            f_out: table.chars.iter().map(|c| beta * maxwellian_energy(c.eps)).collect(),
        }
    }

    /// Smallest value anywhere in the field.
    pub fn min_value(&self) -> f64 {
        self.f_plus
            .iter()
            .chain(&self.f_minus)
            .flat_map(|v| v.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

#[inline]
fn gain(w: &[f64; 4], rho: &[f64], j0: usize) -> f64 {
    w[0] * rho[j0] + w[1] * rho[j0 + 1] + w[2] * rho[j0 + 2] + w[3] * rho[j0 + 3]
}

/// Inward pass: writes `out[k]` for all nodes given `out[last] = start`.
fn backward(cells: &[CellCoef], rho: &[f64], m: f64, start: f64, out: &mut [f64]) {
    let last = out.len() - 1;
    out[last] = start;
    for k in (0..last).rev() {
        let c = &cells[k];
        out[k] = c.decay * out[k + 1] + m * gain(&c.h, rho, c.j0);
    }
}

/// Outward pass: writes `out[k]` for all nodes given `out[0] = start`.
fn forward(cells: &[CellCoef], rho: &[f64], m: f64, start: f64, out: &mut [f64]) {
    out[0] = start;
    for k in 0..out.len() - 1 {
        let c = &cells[k];
        out[k + 1] = c.decay * out[k] + m * gain(&c.g, rho, c.j0);
    }
}

/// One characteristic: returns `(F+, F-, F+(infinity))`.
///
/// `rho` holds the relative density at the global nodes and `m` the
/// Maxwellian factor of the energy.  The source at the first local node of a
/// degenerate orbit and beyond the last one is read from the nearest global
/// node.
fn sweep_char(
    ch: &CharTable,
    set: &NodeSet,
    rho: &[f64],
    m: f64,
    inflow: f64,
    closure: TrappedClosure,
    prev_outer: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = set.len();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    let cells = &ch.cells;
    match ch.class {
        EnergyClass::Degenerate => {
            let s0 = m * rho[set.first_global];
            fp[0] = s0;
            fm[0] = s0;
            (fp, fm, 0.0)
        }
        EnergyClass::Free | EnergyClass::ZeroPlus => {
            let td = ch.tail.unwrap_or(0.0);
            let s_last = m * rho[rho.len() - 1];
            let at_max = (-td).exp() * inflow - (-td).exp_m1() * s_last;
            backward(cells, rho, m, at_max, &mut fm);
            forward(cells, rho, m, fm[0], &mut fp);
            let out = (-td).exp() * fp[n - 1] - (-td).exp_m1() * s_last;
            (fp, fm, out)
        }
        EnergyClass::Trapped | EnergyClass::ZeroMinus => {
            let td = ch.tail.unwrap_or(0.0);
            let s_last = m * rho[rho.len() - 1];
            let td_decay = (-td).exp();
            let td_gain = -(-td).exp_m1() * s_last;
            let has_tail = ch.tail.is_some();
            // Carries a value across the tail and back, or returns it unchanged
            // when the orbit turns inside the mesh.
            let across = |y: f64| -> f64 {
                if has_tail {
                    td_decay * y + td_gain
                } else {
                    y
                }
            };
            match closure {
                TrappedClosure::ClosedForm => {
                    forward(cells, rho, m, 0.0, &mut fp);
                    let p_out = across(fp[n - 1]);
                    backward(cells, rho, m, across(0.0), &mut fm);
                    let q_in = fm[0];
                    let t = (-ch.total_depth()).exp();
                    let x = (q_in + t * p_out) / (1.0 - t * t);
                    forward(cells, rho, m, x, &mut fp);
                    let y = across(fp[n - 1]);
                    backward(cells, rho, m, across(y), &mut fm);
                    (fp, fm, y)
                }
                TrappedClosure::Lagged => {
                    backward(cells, rho, m, across(prev_outer), &mut fm);
                    forward(cells, rho, m, fm[0], &mut fp);
                    let y = across(fp[n - 1]);
                    (fp, fm, y)
                }
            }
        }
    }
}

/// Relative density `rho = n exp(W)` at the global nodes.
pub fn relative_density(grids: &Grids, n: &[f64]) -> Vec<f64> {
    n.iter().zip(&grids.spatial.w).map(|(&n, &w)| n * w.exp()).collect()
}

/// One transport sweep `n^{k-1} -> F^k`.
///
/// `field_prev` is consulted only by the lagged trapped closure.  Negative or
/// non-finite entries of `n_prev` violate the contract.
pub fn sweep(
    table: &OpticalDepthTable,
    n_prev: &[f64],
    field_prev: &DistributionField,
    incident: &Incident,
    closure: TrappedClosure,
) -> Result<DistributionField> {
    let grids = &table.grids;
    if n_prev.len() != grids.spatial.global.len() {
        return Err(Error::Contract(format!(
            "density has {} entries, grid has {}",
            n_prev.len(),
            grids.spatial.global.len()
        )));
    }
    if let Some((j, v)) = n_prev.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Contract(format!("density entry {j} is {v}")));
    }
    let rho = relative_density(grids, n_prev);
    let results: Vec<(Vec<f64>, Vec<f64>, f64)> = table
        .chars
        .par_iter()
        .zip(grids.spatial.sets.par_iter())
        .zip(field_prev.f_out.par_iter())
        .map(|((ch, set), &prev_outer)| {
            let m = maxwellian_energy(ch.eps);
            let inflow = if ch.class.is_inflow() {
                incident.eval(-(2.0 * ch.eps).sqrt())
            } else {
                0.0
            };
            sweep_char(ch, set, &rho, m, inflow, closure, prev_outer)
        })
        .collect();
    let mut field = DistributionField {
        k: field_prev.k + 1,
        f_plus: Vec::with_capacity(results.len()),
        f_minus: Vec::with_capacity(results.len()),
        f_out: Vec::with_capacity(results.len()),
    };
    for (fp, fm, out) in results {
        field.f_plus.push(fp);
        field.f_minus.push(fm);
        field.f_out.push(out);
    }
    Ok(field)
}

/// Explicit kernels `(K+, K-)` at observation point `zeta` and source point
/// `s` on characteristic `i`.
///
/// Free energies:
///
/// ```text
/// K+ = theta(za, zeta) theta(za, s) mu(s)            + 1{s < zeta} theta(s, zeta) mu(s)
/// K- = 1{s > zeta} theta(zeta, s) mu(s)
/// ```
///
/// Trapped energies, with `L = theta(zb, za)`:
///
/// ```text
/// K+ = theta(za, zeta) [theta(s, zb) + theta(zb, s)] mu(s) / (L - 1/L) + 1{s < zeta} theta(s, zeta) mu(s)
/// K- = theta(zeta, zb) [theta(s, za) + theta(za, s)] mu(s) / (L - 1/L) + 1{s > zeta} theta(zeta, s) mu(s)
/// ```
///
/// The `0-` node is treated as trapped with `zb` at infinity.
pub fn kernel_weights(table: &OpticalDepthTable, i: usize, zeta: f64, s: f64) -> Result<(f64, f64)> {
    let ch = &table.chars[i];
    if ch.class == EnergyClass::Degenerate {
        return Err(Error::Domain("the degenerate orbit has no kernel".into()));
    }
    let pz = table.psi_at(i, zeta)?;
    let ps = table.psi_at(i, s)?;
    let mu = table.mu(i, s);
    let local = if s < zeta { (-(pz - ps)).exp() * mu } else { 0.0 };
    let local_minus = if s > zeta { (-(ps - pz)).exp() * mu } else { 0.0 };
    match ch.class {
        EnergyClass::Free | EnergyClass::ZeroPlus => {
            let kp = (-pz).exp() * (-ps).exp() * mu + local;
            Ok((kp, local_minus))
        }
        _ => {
            let total = ch.total_depth();
            // Stable forms of the closure weights, scaled by exp(-total).
            let denom = -(-2.0 * total).exp_m1();
            let wa = ((-ps).exp() + (ps - 2.0 * total).exp()) * mu / denom;
            let kp = (-pz).exp() * wa + local;
            let wb = ((pz + ps - 2.0 * total).exp() + (pz - ps - 2.0 * total).exp()) * mu / denom;
            let km = wb + local_minus;
            Ok((kp, km))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;

    fn setup(p: Potential, r: RelaxationModel) -> OpticalDepthTable {
        let g = GridSpec::new(64, 128, 20.0, 50.0).build(&p).unwrap();
        OpticalDepthTable::build(&g, &r)
    }

    fn lj93_alg() -> OpticalDepthTable {
        setup(
            Potential::lj9_3(1.0).unwrap(),
            RelaxationModel::algebraic(1.0, 1.0, 4.0).unwrap(),
        )
    }

    #[test]
    fn theta_of_a_node_with_itself_is_one() {
        let t = lj93_alg();
        for i in 0..t.chars.len() {
            for k in 0..t.chars[i].psi.len() {
                assert_eq!(t.theta_nodes(i, k, k), 1.0);
            }
        }
    }

    #[test]
    fn optical_depth_is_nondecreasing() {
        let t = lj93_alg();
        for c in &t.chars {
            for w in c.psi.windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn flat_region_depth() {
        // W = 0 and tau = 1: theta over unit length at eps = 0.5 is exp(-1).
        let rule = gl20();
        let psi = rule.integrate(0.0, 1.0, |_| 1.0 / (2.0f64 * 0.5).sqrt());
        assert_relative_eq!((-psi).exp(), (-1.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn table_depth_matches_independent_panels() {
        let t = lj93_alg();
        let p = t.grids.potential;
        let r = t.relaxation;
        for c in t.chars.iter().filter(|c| c.class == EnergyClass::Free).step_by(7) {
            let direct = depth_to_infinity(&p, &r, c.eps, 1e4).unwrap();
            assert_relative_eq!(c.total_depth(), direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let t = lj93_alg();
        let n = vec![0.0; t.grids.spatial.global.len()];
        let f0 = DistributionField::zeros(&t);
        let f = sweep(&t, &n, &f0, &Incident::Zero, TrappedClosure::ClosedForm).unwrap();
        assert_eq!(f.min_value(), 0.0);
        assert!(f.f_plus.iter().chain(&f.f_minus).flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_density_is_a_contract_violation() {
        let t = lj93_alg();
        let mut n = vec![1.0; t.grids.spatial.global.len()];
        n[3] = -1e-3;
        let f0 = DistributionField::zeros(&t);
        let err = sweep(&t, &n, &f0, &Incident::Zero, TrappedClosure::ClosedForm).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn first_iteration_is_pure_attenuation() {
        let t = lj93_alg();
        let n = vec![0.0; t.grids.spatial.global.len()];
        let inc = Incident::equilibrium();
        let f = sweep(&t, &n, &DistributionField::zeros(&t), &inc, TrappedClosure::ClosedForm).unwrap();
        for (i, c) in t.chars.iter().enumerate() {
            let len = c.psi.len();
            for k in 0..len {
                if c.class.is_inflow() {
                    let fin = inc.eval(-(2.0 * c.eps).sqrt());
                    let theta = (-(c.total_depth() - c.psi[k])).exp();
                    assert_relative_eq!(f.f_minus[i][k], theta * fin, max_relative = 1e-12);
                    let theta_p = (-(c.psi[k] + c.total_depth())).exp();
                    assert_relative_eq!(f.f_plus[i][k], theta_p * fin, max_relative = 1e-12);
                } else {
                    assert_eq!(f.f_plus[i][k], 0.0);
                    assert_eq!(f.f_minus[i][k], 0.0);
                }
            }
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let t = lj93_alg();
        let n: Vec<f64> = t.grids.spatial.w.iter().map(|w| (-w).exp()).collect();
        let inc = Incident::equilibrium();
        let f = sweep(&t, &n, &DistributionField::zeros(&t), &inc, TrappedClosure::ClosedForm).unwrap();
        for (i, c) in t.chars.iter().enumerate() {
            let m = maxwellian_energy(c.eps);
            for k in 0..c.psi.len() {
                assert_relative_eq!(f.f_plus[i][k], m, max_relative = 1e-12);
                assert_relative_eq!(f.f_minus[i][k], m, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn continuity_at_turning_points() {
        let t = lj93_alg();
        let n: Vec<f64> = t
            .grids
            .spatial
            .global
            .iter()
            .zip(&t.grids.spatial.w)
            .map(|(z, w)| (-w).exp() * (1.0 + 0.3 * (z * 1.7).sin()))
            .collect();
        let inc = Incident::ShiftedMaxwellian {
            t_inf: 1.0,
            v_inf: -0.5,
        };
        let f = sweep(&t, &n, &DistributionField::zeros(&t), &inc, TrappedClosure::ClosedForm).unwrap();
        for (i, c) in t.chars.iter().enumerate() {
            assert_relative_eq!(f.f_plus[i][0], f.f_minus[i][0], max_relative = 1e-14);
            if c.class == EnergyClass::Trapped {
                let m = c.psi.len() - 1;
                assert_relative_eq!(f.f_plus[i][m], f.f_minus[i][m], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn bound_constants() {
        assert_eq!(Incident::equilibrium().bound_constant(), 1.0);
        assert!(Incident::ShiftedMaxwellian {
            t_inf: 1.0,
            v_inf: -0.5
        }
        .bound_constant()
        .is_infinite());
        let a = Incident::ShiftedMaxwellian { t_inf: 0.6, v_inf: 0.0 }.bound_constant();
        assert_relative_eq!(a, 1.0 / 0.6f64.sqrt(), max_relative = 1e-15);
        // Oracle: dense scan of the ratio.
        let inc = Incident::ShiftedMaxwellian {
            t_inf: 0.6,
            v_inf: -0.5,
        };
        let scan = (0..200_001)
            .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
            .map(|c: f64| inc.eval(c) * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * c * c).exp())
            .fold(0.0, f64::max);
        assert_relative_eq!(inc.bound_constant(), scan, max_relative = 1e-8);
    }
}
