//! Gauss-Legendre rules on the unit interval and the cell maps that remove
//! inverse-square-root endpoint singularities.
//!
//! A cell `[z0, z1]` adjoining a turning point is parameterised so that the
//! integrand `mu(s) ds/dt` stays bounded:
//!
//! ```text
//! turning point zt on the left:   s = zt + u^2,  u linear in t
//! turning point zt on the right:  s = zt - u^2
//! turning points at both ends:    s = z0 + h (1 - cos(pi t)) / 2
//! ```

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn gauss_legendre(n: usize) -> Rule {
        let gl = GaussLegendre::new(NonZeroUsize::new(n).expect("rule order must be positive"));
        let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Rule {
            nodes: pairs.iter().map(|p| 0.5 * (p.0 + 1.0)).collect(),
            weights: pairs.iter().map(|p| 0.5 * p.1).collect(),
        }
    }

    /// `int_a^b f` with this rule on a single panel.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        let mut sum = 0.0;
        for (t, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(a + h * t);
        }
        sum * h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Shared 10-point rule.
pub fn gl10() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(10))
}

/// Shared 6-point rule.
pub fn gl6() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(6))
}

/// Shared 20-point rule.
pub fn gl20() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| Rule::gauss_legendre(20))
}

/// How a cell is parameterised by `t in [0, 1]`.
///
/// `FromLeft(zt)` uses `s = zt + u^2` with `u` linear in `t`, which is smooth
/// for any cell to the right of a turning point `zt`, adjacent or not.
/// `FromRight(zt)` mirrors it for a turning point on the right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellMap {
    Plain,
    FromLeft(f64),
    FromRight(f64),
    BothTurns,
}

impl CellMap {
    /// Picks a map for `[z0, z1]` given the turning points of its orbit.
    /// A cell counts as near a turning point when the distance to it is
    /// below `NEAR` cell widths.
    pub fn for_cell(z0: f64, z1: f64, left: Option<f64>, right: Option<f64>) -> CellMap {
        const NEAR: f64 = 8.0;
        let h = z1 - z0;
        let dl = left.map(|a| z0 - a);
        let dr = right.map(|b| b - z1);
        match (dl, dr) {
            (Some(l), Some(r)) if l <= 0.0 && r <= 0.0 => CellMap::BothTurns,
            (Some(l), Some(r)) if l < NEAR * h || r < NEAR * h => {
                if l <= r {
                    CellMap::FromLeft(left.unwrap())
                } else {
                    CellMap::FromRight(right.unwrap())
                }
            }
            (Some(l), None) if l < NEAR * h => CellMap::FromLeft(left.unwrap()),
            (None, Some(r)) if r < NEAR * h => CellMap::FromRight(right.unwrap()),
            _ => CellMap::Plain,
        }
    }

    /// Position and Jacobian `(s, ds/dt)` at parameter `t`.
    #[inline]
    pub fn eval(self, z0: f64, z1: f64, t: f64) -> (f64, f64) {
        match self {
            CellMap::Plain => (z0 + (z1 - z0) * t, z1 - z0),
            CellMap::FromLeft(zt) => {
                let u0 = (z0 - zt).max(0.0).sqrt();
                let u1 = (z1 - zt).sqrt();
                let u = u0 + (u1 - u0) * t;
                (zt + u * u, 2.0 * u * (u1 - u0))
            }
            CellMap::FromRight(zt) => {
                let u0 = (zt - z1).max(0.0).sqrt();
                let u1 = (zt - z0).sqrt();
                let u = u1 - (u1 - u0) * t;
                (zt - u * u, 2.0 * u * (u1 - u0))
            }
            CellMap::BothTurns => {
                let h = z1 - z0;
                let a = std::f64::consts::PI * t;
                (z0 + 0.5 * h * (1.0 - a.cos()), 0.5 * h * std::f64::consts::PI * a.sin())
            }
        }
    }

    /// Signed offset `s - zt` of the mapped point from the map's turning
    /// point, computed without cancellation.  Plain and two-sided maps
    /// measure from `z0`.
    #[inline]
    pub fn offset(self, z0: f64, z1: f64, t: f64) -> f64 {
        match self {
            CellMap::Plain => (z1 - z0) * t,
            CellMap::FromLeft(zt) => {
                let u0 = (z0 - zt).max(0.0).sqrt();
                let u1 = (z1 - zt).sqrt();
                let u = u0 + (u1 - u0) * t;
                u * u
            }
            CellMap::FromRight(zt) => {
                let u0 = (zt - z1).max(0.0).sqrt();
                let u1 = (zt - z0).sqrt();
                let u = u1 - (u1 - u0) * t;
                -(u * u)
            }
            CellMap::BothTurns => {
                let a = 0.5 * std::f64::consts::PI * t;
                (z1 - z0) * a.sin().powi(2)
            }
        }
    }

    /// Inverse of the position map.
    pub fn invert(self, z0: f64, z1: f64, s: f64) -> f64 {
        let s = s.clamp(z0, z1);
        let t = match self {
            CellMap::Plain => (s - z0) / (z1 - z0),
            CellMap::FromLeft(zt) => {
                let u0 = (z0 - zt).max(0.0).sqrt();
                let u1 = (z1 - zt).sqrt();
                ((s - zt).max(0.0).sqrt() - u0) / (u1 - u0)
            }
            CellMap::FromRight(zt) => {
                let u0 = (zt - z1).max(0.0).sqrt();
                let u1 = (zt - z0).sqrt();
                (u1 - (zt - s).max(0.0).sqrt()) / (u1 - u0)
            }
            CellMap::BothTurns => {
                let x = (s - z0) / (z1 - z0);
                (1.0 - 2.0 * x).clamp(-1.0, 1.0).acos() / std::f64::consts::PI
            }
        };
        t.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let r = Rule::gauss_legendre(6);
        assert_relative_eq!(
            r.integrate(0.0, 2.0, |x| x.powi(11)),
            2f64.powi(12) / 12.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn maps_remove_square_root_singularity() {
        // int_0^1 ds / sqrt(s) = 2 and int_0^1 ds / sqrt(s (1 - s)) = pi.
        let r = gl10();
        let left: f64 = r
            .nodes
            .iter()
            .zip(&r.weights)
            .map(|(&t, &w)| {
                let (s, j) = CellMap::FromLeft(0.0).eval(0.0, 1.0, t);
                w * j / s.sqrt()
            })
            .sum();
        assert_relative_eq!(left, 2.0, max_relative = 1e-14);
        let both: f64 = r
            .nodes
            .iter()
            .zip(&r.weights)
            .map(|(&t, &w)| {
                let (s, j) = CellMap::BothTurns.eval(0.0, 1.0, t);
                w * j / (s * (1.0 - s)).sqrt()
            })
            .sum();
        assert_relative_eq!(both, std::f64::consts::PI, max_relative = 1e-13);
    }

    #[test]
    fn detached_turning_point_is_resolved() {
        // int_d^{d+1} ds / sqrt(s) with the singularity far closer than one width.
        let d = 1e-8;
        let map = CellMap::for_cell(d, 1.0 + d, Some(0.0), None);
        assert_eq!(map, CellMap::FromLeft(0.0));
        let r = gl10();
        let v: f64 = r
            .nodes
            .iter()
            .zip(&r.weights)
            .map(|(&t, &w)| {
                let (s, j) = map.eval(d, 1.0 + d, t);
                w * j / s.sqrt()
            })
            .sum();
        let exact = 2.0 * ((1.0 + d).sqrt() - d.sqrt());
        assert_relative_eq!(v, exact, max_relative = 1e-14);
    }

    #[test]
    fn inverse_maps_round_trip() {
        let maps = [
            CellMap::Plain,
            CellMap::FromLeft(1.0),
            CellMap::FromLeft(0.9),
            CellMap::FromRight(3.0),
            CellMap::FromRight(3.5),
            CellMap::BothTurns,
        ];
        for map in maps {
            for &t in &[0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
                let (s, _) = map.eval(1.0, 3.0, t);
                assert!((map.invert(1.0, 3.0, s) - t).abs() < 1e-7, "{map:?} {t}");
            }
        }
    }
}
