//! Confinement potentials and gas-phonon relaxation times.
//!
//! Both Lennard-Jones forms are written in units where the potential vanishes
//! at `zeta = 1` and its minimum value is `-kappa`:
//!
//! ```text
//! LJ(12,6):  W(z) = 4 k (z^-12 - z^-6)              z_min = 2^(1/6)
//! LJ(9,3):   W(z) = (3 sqrt(3) / 2) k (z^-9 - z^-3)  z_min = 3^(1/6)
//! ```
//!
//! Relaxation times grow away from the wall:
//!
//! ```text
//! algebraic:    tau(z) = k_tau (1 + sigma z / nu)^nu
//! exponential:  tau(z) = k_tau exp(sigma z)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which Lennard-Jones form the wall potential takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PotentialKind {
    #[serde(rename = "lj12_6")]
    Lj12_6,
    #[serde(rename = "lj9_3")]
    Lj9_3,
}

impl PotentialKind {
    pub fn name(self) -> &'static str {
        match self {
            PotentialKind::Lj12_6 => "lj12_6",
            PotentialKind::Lj9_3 => "lj9_3",
        }
    }
}

/// Turning points of a characteristic with normal energy `eps`.
///
/// `b` is `None` for free energies (`eps >= 0`), whose orbit extends to infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurningPoints {
    pub a: f64,
    pub b: Option<f64>,
}

/// Wall potential `W(zeta)` with its analytic derivative and geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub kappa: f64,
}

const LJ93_PREFACTOR: f64 = 2.598_076_211_353_316; // 3 sqrt(3) / 2

impl Potential {
    pub fn new(kind: PotentialKind, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::parameter("kappa", "must be a positive finite number"));
        }
        Ok(Potential { kind, kappa })
    }

    pub fn lj12_6(kappa: f64) -> Result<Self> {
        Self::new(PotentialKind::Lj12_6, kappa)
    }

    pub fn lj9_3(kappa: f64) -> Result<Self> {
        Self::new(PotentialKind::Lj9_3, kappa)
    }

    /// Checked evaluation of `W(zeta)`.
    pub fn eval(&self, zeta: f64) -> Result<f64> {
        check_position(zeta)?;
        Ok(self.w(zeta))
    }

    /// Checked evaluation of `W'(zeta)`.
    pub fn eval_derivative(&self, zeta: f64) -> Result<f64> {
        check_position(zeta)?;
        Ok(self.dw(zeta))
    }

    /// `W(zeta)` without the domain check; `zeta` must be positive.
    #[inline]
    pub fn w(&self, zeta: f64) -> f64 {
        match self.kind {
            PotentialKind::Lj12_6 => {
                let x = zeta.powi(-6);
                4.0 * self.kappa * (x * x - x)
            }
            PotentialKind::Lj9_3 => {
                let y = zeta.powi(-3);
                LJ93_PREFACTOR * self.kappa * (y * y * y - y)
            }
        }
    }

    /// `W'(zeta)` without the domain check.
    #[inline]
    pub fn dw(&self, zeta: f64) -> f64 {
        match self.kind {
            PotentialKind::Lj12_6 => {
                let x = zeta.powi(-6);
                4.0 * self.kappa * (-12.0 * x * x + 6.0 * x) / zeta
            }
            PotentialKind::Lj9_3 => {
                let y = zeta.powi(-3);
                LJ93_PREFACTOR * self.kappa * (-9.0 * y * y * y + 3.0 * y) / zeta
            }
        }
    }

    /// Location of the minimum of `W`.
    pub fn zeta_min(&self) -> f64 {
        match self.kind {
            PotentialKind::Lj12_6 => 2f64.powf(1.0 / 6.0),
            PotentialKind::Lj9_3 => 3f64.powf(1.0 / 6.0),
        }
    }

    /// Depth of the well, `W(zeta_min) = -kappa`.
    pub fn w_min(&self) -> f64 {
        -self.kappa
    }

    /// The unique zero of `W`, which is also `zeta_a(0)`.
    pub fn zeta_zero(&self) -> f64 {
        1.0
    }

    /// Leading far-field behaviour `W(z) ~ -c z^-p`, returned as `(c, p)`.
    pub fn far_field(&self) -> (f64, f64) {
        match self.kind {
            PotentialKind::Lj12_6 => (4.0 * self.kappa, 6.0),
            PotentialKind::Lj9_3 => (LJ93_PREFACTOR * self.kappa, 3.0),
        }
    }

    /// `eps - W(s)` evaluated relative to a point `zt` where `W(zt)` is close to `eps`.
    ///
    /// Near a turning point the direct difference loses digits, so the
    /// potential increment is taken from `zt`.  When rounding leaves a
    /// non-positive value the tangent line through `zt` is used instead.
    #[inline]
    pub fn gap(&self, eps: f64, zt: f64, s: f64) -> f64 {
        let g = (eps - self.w(zt)) - (self.w(s) - self.w(zt));
        if g > 0.0 {
            g
        } else {
            (self.dw(zt) * (zt - s)).abs().max(f64::MIN_POSITIVE)
        }
    }

    /// Roots of `W(zeta) = eps`: the repulsive-branch root `a` and, for trapped
    /// energies, the attractive-branch root `b`.
    pub fn turning_points(&self, eps: f64) -> Result<TurningPoints> {
        if !eps.is_finite() {
            return Err(Error::Domain(format!("energy {eps} is not finite")));
        }
        let wmin = self.w_min();
        if eps < wmin {
            return Err(Error::Domain(format!(
                "energy {eps} lies below the well minimum {wmin}"
            )));
        }
        let zmin = self.zeta_min();
        if eps == wmin {
            return Ok(TurningPoints { a: zmin, b: Some(zmin) });
        }
        if eps == 0.0 {
            return Ok(TurningPoints {
                a: self.zeta_zero(),
                b: None,
            });
        }
        match self.kind {
            PotentialKind::Lj12_6 => {
                let e = eps / (4.0 * self.kappa);
                let root = (1.0 + 4.0 * e).max(0.0).sqrt();
                let x_a = 0.5 * (1.0 + root);
                let a = self.polish(x_a.powf(-1.0 / 6.0), eps);
                let b = if eps < 0.0 {
                    // (1 - root)/2 rewritten to avoid cancellation as eps -> 0-.
                    let x_b = -2.0 * e / (1.0 + root);
                    Some(self.polish(x_b.powf(-1.0 / 6.0), eps))
                } else {
                    None
                };
                Ok(TurningPoints { a, b })
            }
            PotentialKind::Lj9_3 => {
                let a = self.root_on_branch(eps, Branch::Repulsive);
                let b = (eps < 0.0).then(|| self.root_on_branch(eps, Branch::Attractive));
                Ok(TurningPoints { a, b })
            }
        }
    }

    /// One guarded Newton step that is kept only if it lowers the residual.
    fn polish(&self, z: f64, eps: f64) -> f64 {
        let d = self.dw(z);
        if d == 0.0 {
            return z;
        }
        let z1 = z - (self.w(z) - eps) / d;
        if z1 > 0.0 && (self.w(z1) - eps).abs() < (self.w(z) - eps).abs() {
            z1
        } else {
            z
        }
    }

    /// Safeguarded Newton iteration inside a bracket on one monotone branch.
    fn root_on_branch(&self, eps: f64, branch: Branch) -> f64 {
        let zmin = self.zeta_min();
        // f(z) = W(z) - eps changes sign across [lo, hi].
        let (mut lo, mut hi) = match branch {
            Branch::Repulsive => {
                let mut lo = 0.5 * zmin;
                while self.w(lo) < eps {
                    lo *= 0.5;
                }
                (lo, zmin)
            }
            Branch::Attractive => {
                let mut hi = 2.0 * zmin;
                while self.w(hi) < eps {
                    hi *= 2.0;
                }
                (zmin, hi)
            }
        };
        // Sign of f at `lo` distinguishes the two branches.
        let f_lo_positive = matches!(branch, Branch::Repulsive);
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.w(z) - eps;
            if f == 0.0 {
                return z;
            }
            if (f > 0.0) == f_lo_positive {
                lo = z;
            } else {
                hi = z;
            }
            let d = self.dw(z);
            let newton = if d != 0.0 { z - f / d } else { f64::NAN };
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - z).abs() <= 2.0 * f64::EPSILON * z || hi - lo <= 4.0 * f64::EPSILON * hi {
                z = next;
                break;
            }
            z = next;
        }
        self.polish(z, eps)
    }
}

#[derive(Clone, Copy)]
enum Branch {
    Repulsive,
    Attractive,
}

fn check_position(zeta: f64) -> Result<()> {
    if zeta.is_finite() && zeta > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("position {zeta} must be positive")))
    }
}

/// Functional form of the relaxation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RelaxationKind {
    /// `tau = k_tau (1 + sigma z / nu)^nu` with `nu > 1`.
    Algebraic { nu: f64 },
    /// `tau = k_tau exp(sigma z)`.
    Exponential,
}

/// Gas-phonon relaxation time `tau(zeta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationModel {
    pub kind: RelaxationKind,
    pub kappa_tau: f64,
    pub sigma: f64,
}

impl RelaxationModel {
    pub fn algebraic(kappa_tau: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 1.0) {
            return Err(Error::parameter("nu", "must be a finite number greater than 1"));
        }
        Self::checked(RelaxationKind::Algebraic { nu }, kappa_tau, sigma)
    }

    pub fn exponential(kappa_tau: f64, sigma: f64) -> Result<Self> {
        Self::checked(RelaxationKind::Exponential, kappa_tau, sigma)
    }

    fn checked(kind: RelaxationKind, kappa_tau: f64, sigma: f64) -> Result<Self> {
        if !(kappa_tau.is_finite() && kappa_tau > 0.0) {
            return Err(Error::parameter("kappa_tau", "must be a positive finite number"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::parameter("sigma", "must be a positive finite number"));
        }
        Ok(RelaxationModel { kind, kappa_tau, sigma })
    }

    /// Checked evaluation of `tau(zeta)` for `zeta >= 0`.
    pub fn eval_tau(&self, zeta: f64) -> Result<f64> {
        if !(zeta.is_finite() && zeta >= 0.0) {
            return Err(Error::Domain(format!("position {zeta} must be nonnegative")));
        }
        Ok(self.tau(zeta))
    }

    #[inline]
    pub fn tau(&self, zeta: f64) -> f64 {
        match self.kind {
            RelaxationKind::Algebraic { nu } => self.kappa_tau * (1.0 + self.sigma * zeta / nu).powf(nu),
            RelaxationKind::Exponential => self.kappa_tau * (self.sigma * zeta).exp(),
        }
    }

    /// `l = int_0^inf ds / tau(s)` in closed form.
    pub fn tail_integral(&self) -> f64 {
        self.tail_from(0.0)
    }

    /// `int_z^inf ds / tau(s)` in closed form.
    pub fn tail_from(&self, z: f64) -> f64 {
        match self.kind {
            RelaxationKind::Algebraic { nu } => {
                nu / (self.kappa_tau * self.sigma * (nu - 1.0)) * (1.0 + self.sigma * z / nu).powf(1.0 - nu)
            }
            RelaxationKind::Exponential => (-self.sigma * z).exp() / (self.kappa_tau * self.sigma),
        }
    }

    /// Large-`z` decay of `1/tau` as a power law exponent, or `None` when it
    /// decays faster than any power.
    pub fn algebraic_decay(&self) -> Option<f64> {
        match self.kind {
            RelaxationKind::Algebraic { nu } => Some(nu),
            RelaxationKind::Exponential => None,
        }
    }
}
