//! Velocity moments, reconstruction of `F(zeta, c_z)` and the jump across
//! the `eps = 0` double node.
//!
//! At a global node `zeta_j` every characteristic with `eps >= W(zeta_j)`
//! supplies one sample of `F+` and `F-` at `u = sqrt(2 (eps - W_j))`.  The
//! samples are converted to `G = F exp(eps)`, which is constant at
//! equilibrium, and `G` is interpolated in `u` by cubic Lagrange stencils
//! that never straddle the double node.  Moments then reduce to fixed weights:
//!
//! ```text
//! n    = sum_i wn_i  (F+_i + F-_i)
//! flux = sum_i wu_i  (F+_i - F-_i)
//! c2   = sum_i wuu_i (F+_i + F-_i)
//! ```
//!
//! Beyond the last energy node `G` is held at its last value and the
//! Gaussian tail is integrated in closed form.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::grid::{EnergyClass, Grids};
use crate::quad::gl6;
use crate::transport::DistributionField;

/// One term of a moment sum at a global node.
#[derive(Debug, Clone, Copy)]
pub struct MomentTerm {
    pub char_index: usize,
    pub local: usize,
    pub wn: f64,
    pub wu: f64,
    pub wuu: f64,
}

/// Precomputed moment weights for every global node.
#[derive(Debug, Clone)]
pub struct MomentWeights {
    pub terms: Vec<Vec<MomentTerm>>,
}

/// Widest velocity panel integrated with a single Gauss rule.
const MAX_PANEL: f64 = 0.25;

/// Lagrange basis polynomial `k` of `xs` at `x`.
fn lagrange(xs: &[f64], k: usize, x: f64) -> f64 {
    let mut v = 1.0;
    for (m, &xm) in xs.iter().enumerate() {
        if m != k {
            v *= (x - xm) / (xs[k] - xm);
        }
    }
    v
}

/// Adds the weights of one monotone run of samples `(u, eps, id)`.  With
/// `from_zero` the run is also extrapolated down to `u = 0`.
fn segment_weights(pts: &[(f64, f64, usize)], from_zero: bool, acc: &mut [[f64; 3]]) {
    let m = pts.len();
    if m < 2 {
        return;
    }
    let rule = gl6();
    let order = m.min(4);
    let lead = usize::from(from_zero && pts[0].0 > 0.0);
    for s in 0..m - 1 + lead {
        let (u0, u1) = if s < lead {
            (0.0, pts[0].0)
        } else {
            (pts[s - lead].0, pts[s + 1 - lead].0)
        };
        let s = s.saturating_sub(lead);
        if u1 <= u0 {
            continue;
        }
        // Stencil of `order` consecutive points centred on the interval.
        let start = (s + 1).saturating_sub(order / 2).min(m - order);
        let st = &pts[start..start + order];
        let xs: Vec<f64> = st.iter().map(|p| p.0).collect();
        // Wide intervals are split so the Gaussian factor stays well resolved.
        let pieces = ((u1 - u0) / MAX_PANEL).ceil().max(1.0) as usize;
        let hp = (u1 - u0) / pieces as f64;
        for q in 0..pieces {
            let a = u0 + hp * q as f64;
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let u = a + hp * t;
                let ww = w * hp;
                for (k, p) in st.iter().enumerate() {
                    // Weight on F_k: Lagrange basis on G times exp((u_k^2 - u^2)/2).
                    let g = lagrange(&xs, k, u) * (0.5 * (p.0 - u) * (p.0 + u)).exp() * ww;
                    acc[p.2][0] += g;
                    acc[p.2][1] += g * u;
                    acc[p.2][2] += g * u * u;
                }
            }
        }
    }
}

/// Weights `[w0, w1, w2]` with `int_0^inf c^p F(c) dc = sum_i w_p[i] F(c_i)`
/// for samples at increasing speeds `c_i >= 0`, using the same interpolation
/// of `F exp(c^2 / 2)` as the moments.
pub fn half_line_weights(c: &[f64]) -> Vec<[f64; 3]> {
    let pts: Vec<(f64, f64, usize)> = c.iter().enumerate().map(|(i, &u)| (u, 0.5 * u * u, i)).collect();
    let mut acc = vec![[0.0f64; 3]; c.len()];
    segment_weights(&pts, true, &mut acc);
    if let Some(&ul) = c.last() {
        let ul = if c.len() == 1 { 0.0 } else { ul };
        let t0 = (std::f64::consts::PI / 2.0).sqrt() * (0.5 * ul * ul).exp() * erfc(ul / 2f64.sqrt());
        let a = &mut acc[c.len() - 1];
        a[0] += t0;
        a[1] += 1.0;
        a[2] += ul + t0;
    }
    acc
}

impl MomentWeights {
    pub fn build(grids: &Grids) -> MomentWeights {
        let sp = &grids.spatial;
        let en = &grids.energy.nodes;
        let mut terms = Vec::with_capacity(sp.global.len());
        for (j, &wj) in sp.w.iter().enumerate() {
            // Allowed characteristics at this node, in increasing energy.
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            let mut ids = Vec::new();
            for (i, set) in sp.sets.iter().enumerate() {
                if let Some(l) = set.local(j) {
                    let u = (2.0 * (en[i].eps - wj)).max(0.0).sqrt();
                    let id = ids.len();
                    ids.push((i, l));
                    if matches!(en[i].class, EnergyClass::ZeroPlus | EnergyClass::Free) {
                        upper.push((u, en[i].eps, id));
                    } else {
                        lower.push((u, en[i].eps, id));
                    }
                }
            }
            let mut acc = vec![[0.0f64; 3]; ids.len()];
            segment_weights(&lower, true, &mut acc);
            segment_weights(&upper, lower.len() < 2, &mut acc);
            // Gaussian tail above the last sample.
            let last = upper.last().or(lower.last());
            if let Some(&(ul, _, id)) = last {
                // A lone sample stands for the whole velocity range.
                let ul = if ids.len() == 1 { 0.0 } else { ul };
                let t0 = (std::f64::consts::PI / 2.0).sqrt() * (0.5 * ul * ul).exp() * erfc(ul / 2f64.sqrt());
                acc[id][0] += t0;
                acc[id][1] += 1.0;
                acc[id][2] += ul + t0;
            }
            terms.push(
                ids.iter()
                    .zip(&acc)
                    .map(|(&(i, l), a)| MomentTerm {
                        char_index: i,
                        local: l,
                        wn: a[0],
                        wu: a[1],
                        wuu: a[2],
                    })
                    .collect(),
            );
        }
        MomentWeights { terms }
    }

    /// Density `n(zeta_j)` at every global node.
    pub fn density(&self, field: &DistributionField) -> Vec<f64> {
        self.terms
            .iter()
            .map(|ts| {
                ts.iter()
                    .map(|t| t.wn * (field.f_plus[t.char_index][t.local] + field.f_minus[t.char_index][t.local]))
                    .sum()
            })
            .collect()
    }

    /// `(n, flux, int c^2 F)` at global node `j`.
    pub fn raw_moments(&self, field: &DistributionField, j: usize) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for t in &self.terms[j] {
            let p = field.f_plus[t.char_index][t.local];
            let m = field.f_minus[t.char_index][t.local];
            out.0 += t.wn * (p + m);
            out.1 += t.wu * (p - m);
            out.2 += t.wuu * (p + m);
        }
        out
    }
}

/// Macroscopic profiles at the reported global nodes.
#[derive(Debug, Clone, Serialize)]
pub struct MomentProfile {
    /// Global index of the first entry.
    pub first_node: usize,
    pub zeta: Vec<f64>,
    pub n: Vec<f64>,
    pub flux: Vec<f64>,
    /// Normal temperature, reported for `zeta >= 1` only.
    pub t_perp: Vec<Option<f64>>,
}

impl MomentProfile {
    /// Largest `|flux| / max(n, n_floor)` over the nodes.
    pub fn max_relative_flux(&self, n_floor: f64) -> f64 {
        self.flux
            .iter()
            .zip(&self.n)
            .map(|(f, n)| f.abs() / n.max(n_floor))
            .fold(0.0, f64::max)
    }
}

pub fn compute_moments(field: &DistributionField, grids: &Grids, weights: &MomentWeights) -> MomentProfile {
    let first_node = grids.spatial.first_reported;
    let zeta = grids.spatial.global[first_node..].to_vec();
    let mut n = Vec::with_capacity(zeta.len());
    let mut flux = Vec::with_capacity(zeta.len());
    let mut t_perp = Vec::with_capacity(zeta.len());
    for (k, &z) in zeta.iter().enumerate() {
        let (nj, fj, cj) = weights.raw_moments(field, first_node + k);
        n.push(nj);
        flux.push(fj);
        t_perp.push((z >= 1.0 && nj > 0.0).then(|| cj / nj));
    }
    MomentProfile {
        first_node,
        zeta,
        n,
        flux,
        t_perp,
    }
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolation.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least one point.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Pchip {
        let n = x.len();
        let mut d = vec![0.0; n];
        if n >= 2 {
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
            if n == 2 {
                d[0] = del[0];
                d[1] = del[0];
            } else {
                for k in 1..n - 1 {
                    if del[k - 1] * del[k] > 0.0 {
                        let w1 = 2.0 * h[k] + h[k - 1];
                        let w2 = h[k] + 2.0 * h[k - 1];
                        d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
                    }
                }
                d[0] = end_slope(h[0], h[1], del[0], del[1]);
                d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
            }
        }
        Pchip { x, y, d }
    }

    /// Value at `t`, held constant outside the data range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        self.y[k] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + self.d[k] * h * (s3 - 2.0 * s2 + s)
            + self.y[k + 1] * (-2.0 * s3 + 3.0 * s2)
            + self.d[k + 1] * h * (s3 - s2)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Which side of the double node a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Trapped,
    Free,
}

fn side(class: EnergyClass) -> Side {
    if class.is_inflow() {
        Side::Free
    } else {
        Side::Trapped
    }
}

/// Values of `F+` or `F-` along every characteristic that reaches `zeta`,
/// linearly interpolated between its local nodes.
fn samples_at(field: &DistributionField, grids: &Grids, zeta: f64, plus: bool) -> Vec<(f64, Side, f64)> {
    let mut out = Vec::new();
    for (i, (set, e)) in grids.spatial.sets.iter().zip(&grids.energy.nodes).enumerate() {
        let (lo, hi) = (set.first(), set.last());
        let tol = 1e-12 * zeta.abs().max(1.0);
        if zeta < lo - tol || zeta > hi + tol {
            continue;
        }
        let vals = if plus { &field.f_plus[i] } else { &field.f_minus[i] };
        let v = if set.len() == 1 {
            vals[0]
        } else {
            let z = zeta.clamp(lo, hi);
            let k = (set.nodes.partition_point(|&x| x <= z).max(1) - 1).min(set.len() - 2);
            let w = (z - set.nodes[k]) / (set.nodes[k + 1] - set.nodes[k]);
            (1.0 - w) * vals[k] + w * vals[k + 1]
        };
        out.push((e.eps, side(e.class), v));
    }
    out
}

fn interpolate_side(samples: &[(f64, Side, f64)], which: Side, eps: f64) -> f64 {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.1 == which)
        .map(|s| (s.0, s.2 * s.0.exp()))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    let p = Pchip::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect());
    (p.eval(eps) * (-eps).exp()).max(0.0)
}

/// `F(zeta, c_z)` from the discrete field.  Energies `eps < 0` use the trapped
/// side of the double node and `eps >= 0` the free side.
pub fn reconstruct_f(field: &DistributionField, grids: &Grids, zeta: f64, c: f64) -> f64 {
    let w = grids.potential.w(zeta);
    let eps = 0.5 * c * c + w;
    let samples = samples_at(field, grids, zeta, c > 0.0);
    let which = if eps < 0.0 { Side::Trapped } else { Side::Free };
    interpolate_side(&samples, which, eps)
}

/// One-sided limits of `F` at `eps = 0` for the branch `F+` or `F-`:
/// `(from the trapped side, from the free side)`.
pub fn zero_limits(field: &DistributionField, grids: &Grids, zeta: f64, plus: bool) -> Option<(f64, f64)> {
    if grids.potential.w(zeta) >= 0.0 {
        return None;
    }
    let samples = samples_at(field, grids, zeta, plus);
    let below = samples.iter().find(|s| s.1 == Side::Trapped && s.0 == 0.0)?;
    let above = samples.iter().find(|s| s.1 == Side::Free && s.0 == 0.0)?;
    Some((below.2, above.2))
}

/// Jump magnitudes `|F(0+) - F(0-)|` for the `c_z > 0` and `c_z < 0` branches.
pub fn jump_magnitudes(field: &DistributionField, grids: &Grids, zeta: f64) -> Option<(f64, f64)> {
    let p = zero_limits(field, grids, zeta, true)?;
    let m = zero_limits(field, grids, zeta, false)?;
    Some(((p.1 - p.0).abs(), (m.1 - m.0).abs()))
}

/// Velocities `c_z = +-sqrt(-2 W(zeta))` where the jump exceeds `jump_tol`.
pub fn locate_discontinuity(field: &DistributionField, grids: &Grids, zeta: f64, jump_tol: f64) -> Vec<f64> {
    let Some((jp, jm)) = jump_magnitudes(field, grids, zeta) else {
        return Vec::new();
    };
    let c0 = (-2.0 * grids.potential.w(zeta)).sqrt();
    let mut out = Vec::new();
    if jm > jump_tol {
        out.push(-c0);
    }
    if jp > jump_tol {
        out.push(c0);
    }
    out
}

/// Samples of `F(zeta, c_z)` on a uniform velocity mesh plus the jump locations.
#[derive(Debug, Clone, Serialize)]
pub struct VelocityCut {
    pub zeta: f64,
    pub c: Vec<f64>,
    pub f: Vec<f64>,
    pub jumps: Vec<f64>,
}

pub fn velocity_cut(
    field: &DistributionField,
    grids: &Grids,
    zeta: f64,
    c_max: f64,
    samples: usize,
    jump_tol: f64,
) -> VelocityCut {
    let samples = samples.max(2);
    let c: Vec<f64> = (0..samples)
        .map(|k| -c_max + 2.0 * c_max * k as f64 / (samples - 1) as f64)
        .collect();
    let f = c.iter().map(|&cz| reconstruct_f(field, grids, zeta, cz)).collect();
    VelocityCut {
        zeta,
        c,
        f,
        jumps: locate_discontinuity(field, grids, zeta, jump_tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::{Potential, RelaxationModel};
    use crate::transport::OpticalDepthTable;
    use approx::assert_relative_eq;

    fn table() -> OpticalDepthTable {
        let p = Potential::lj9_3(1.0).unwrap();
        let g = GridSpec::new(64, 128, 20.0, 50.0).build(&p).unwrap();
        OpticalDepthTable::build(&g, &RelaxationModel::algebraic(1.0, 1.0, 4.0).unwrap())
    }

    #[test]
    fn equilibrium_moments() {
        let t = table();
        let w = MomentWeights::build(&t.grids);
        let f = DistributionField::equilibrium(&t, 1.0);
        let m = compute_moments(&f, &t.grids, &w);
        for (k, &wj) in t.grids.spatial.w[m.first_node..].iter().enumerate() {
            assert_relative_eq!(m.n[k], (-wj).exp(), max_relative = 1e-9);
            assert!(m.flux[k].abs() <= 1e-12 * m.n[k]);
            if let Some(tp) = m.t_perp[k] {
                assert_relative_eq!(tp, 1.0, max_relative = 1e-8);
            }
        }
        let jmin = t.grids.zeta_min_index() - m.first_node;
        assert_relative_eq!(m.n[jmin], std::f64::consts::E, max_relative = 1e-9);
    }

    #[test]
    fn zero_field_has_zero_density() {
        let t = table();
        let w = MomentWeights::build(&t.grids);
        let n = w.density(&DistributionField::zeros(&t));
        assert!(n.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pchip_preserves_monotone_data() {
        let x: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let y = vec![0.0, 0.0, 0.1, 0.9, 1.0, 1.0, 1.0, 2.0];
        let p = Pchip::new(x.clone(), y.clone());
        let mut prev = p.eval(0.0);
        for k in 1..=700 {
            let v = p.eval(k as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(p.eval(*a), *b);
        }
    }

    #[test]
    fn reconstruction_at_equilibrium() {
        let t = table();
        let f = DistributionField::equilibrium(&t, 1.0);
        for &z in &[0.95, 1.05, 1.2, 2.0, 10.0] {
            let w = t.grids.potential.w(z);
            for &c in &[-3.0, -1.0, -0.2, 0.3, 1.4, 2.5] {
                let exact = (-w - 0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
                assert_relative_eq!(reconstruct_f(&f, &t.grids, z, c), exact, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn equilibrium_has_no_jump() {
        let t = table();
        let f = DistributionField::equilibrium(&t, 1.0);
        assert!(locate_discontinuity(&f, &t.grids, 1.2, 1e-3).is_empty());
        assert!(locate_discontinuity(&f, &t.grids, 0.95, 0.0).is_empty());
    }
}
