//! Picard iteration `n^{k-1} -> F^k -> n^k` with monitoring of the
//! monotonicity and upper-bound properties, plus the empirical and
//! theoretical contraction rates.

use std::time::Instant;

use log::{debug, info, warn};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Grids};
use crate::model::{Potential, RelaxationModel};
use crate::moments::{compute_moments, MomentProfile, MomentWeights};
use crate::transport::{sweep, DistributionField, Incident, OpticalDepthTable, TrappedClosure};

/// Starting point of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InitialGuess {
    /// `F = n = 0`.
    Zero,
    /// `n = beta exp(-W)` with the matching Maxwellian field.
    Equilibrium { beta: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSettings {
    /// Stop once `int |n^k - n^{k-1}| / tau dzeta` falls to this value.
    pub tol: f64,
    pub k_max: usize,
    /// First iteration used by the rate fit.
    pub k_min: usize,
    pub closure: TrappedClosure,
    pub init: InitialGuess,
    /// Slack on the monotonicity and bound checks, relative to the local
    /// density scale.
    pub check_slack: f64,
    /// Positions traced in addition to the potential's default probes.  They
    /// should also be grid anchors so that they fall on nodes.
    pub extra_probes: Vec<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-10,
            k_max: 2000,
            k_min: 50,
            closure: TrappedClosure::Lagged,
            init: InitialGuess::Zero,
            check_slack: 1e-9,
            extra_probes: Vec::new(),
        }
    }
}

/// Everything needed to run one solve.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub name: String,
    pub potential: Potential,
    pub relaxation: RelaxationModel,
    pub incident: Incident,
    pub grid: GridSpec,
    pub settings: SolverSettings,
}

/// Least-squares fit `log(increment_k) = -a k + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    /// Number of increments in the fit.
    pub points: usize,
}

/// Per-probe history and rate.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeTrace {
    /// Requested position.
    pub zeta: f64,
    /// Global node used.
    pub node: usize,
    pub node_zeta: f64,
    /// `n^k` at the node for `k = 0, 1, ...`.
    pub values: Vec<f64>,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationReport {
    /// Signed `int (n^k - n^{k-1}) / tau dzeta`, one entry per iteration from `k = 1`.
    pub increments: Vec<f64>,
    /// Same with `|n^k - n^{k-1}|`.
    pub abs_increments: Vec<f64>,
    pub probes: Vec<ProbeTrace>,
    /// Fit at the potential minimum.
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    /// Relative spread `(max a - min a) / mean a` of the probe fits.
    pub rate_spread: Option<f64>,
    pub k_const: f64,
    pub l_bound: f64,
    /// Constant of the incident bound; infinite when unbounded.
    pub a_bound: f64,
    pub bound_check: Option<String>,
    pub monotonicity_violations: usize,
    pub bound_violations: usize,
    pub min_increment: f64,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_s: f64,
}

/// Outcome of a solve.  When `report.converged` is false the data are the
/// last iterate.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub table: OpticalDepthTable,
    pub weights: MomentWeights,
    pub field: DistributionField,
    pub n: Vec<f64>,
    pub report: IterationReport,
}

impl ScenarioResult {
    pub fn grids(&self) -> &Grids {
        &self.table.grids
    }

    pub fn moments(&self) -> MomentProfile {
        compute_moments(&self.field, &self.table.grids, &self.weights)
    }
}

/// `n(zeta_j) = int (F+ + F-) du` at every global node.
pub fn compute_density(field: &DistributionField, weights: &MomentWeights) -> Vec<f64> {
    weights.density(field)
}

/// Contraction constants `(K, L)`:
///
/// ```text
/// K = sqrt(2) zeta_min / tau(0) + l / sqrt(2)
/// L = 1 - exp(-K) erfc(sqrt(|W_min| + 1))
/// ```
pub fn contraction_bound(p: &Potential, r: &RelaxationModel) -> (f64, f64) {
    let k = std::f64::consts::SQRT_2 * p.zeta_min() / r.tau(0.0) + r.tail_integral() / std::f64::consts::SQRT_2;
    let l = 1.0 - (-k).exp() * erfc((p.w_min().abs() + 1.0).sqrt());
    (k, l)
}

/// Fits `log(inc_k) = -a k + b` over `k >= k_min`, where `increments[0]`
/// belongs to `k = 1`.
///
/// The fit stops at the first increment below `floor`, where rounding noise
/// takes over.  A non-positive increment above the floor is a monotonicity
/// breach and fails the fit.
pub fn fit_rate(increments: &[f64], k_min: usize, floor: f64) -> Result<RateFit> {
    let mut ks = Vec::new();
    let mut ys = Vec::new();
    for (idx, &v) in increments.iter().enumerate() {
        let k = idx + 1;
        if k < k_min {
            continue;
        }
        if v.abs() < floor {
            break;
        }
        if v <= 0.0 {
            return Err(Error::Fit(format!("increment at k = {k} is {v:e}")));
        }
        ks.push(k as f64);
        ys.push(v.ln());
    }
    if ks.len() < 10 {
        return Err(Error::Fit(format!(
            "only {} usable increments beyond k = {k_min}",
            ks.len()
        )));
    }
    let m = ks.len() as f64;
    let kbar = ks.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = ks.iter().map(|k| (k - kbar).powi(2)).sum();
    let sxy: f64 = ks.iter().zip(&ys).map(|(k, y)| (k - kbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * kbar;
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    let ss_res: f64 = ks
        .iter()
        .zip(&ys)
        .map(|(k, y)| (y - intercept - slope * k).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit {
        a: -slope,
        b: intercept,
        r_squared,
        points: ks.len(),
    })
}

/// `int f / tau dzeta` on the global mesh by the trapezoidal rule.
pub fn weighted_integral(grids: &Grids, r: &RelaxationModel, f: impl Fn(usize) -> f64) -> f64 {
    let z = &grids.spatial.global;
    let mut sum = 0.0;
    for j in 0..z.len() - 1 {
        let a = f(j) / r.tau(z[j]);
        let b = f(j + 1) / r.tau(z[j + 1]);
        sum += 0.5 * (a + b) * (z[j + 1] - z[j]);
    }
    sum
}

/// Precomputed pieces of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub table: OpticalDepthTable,
    pub weights: MomentWeights,
}

pub fn prepare(scenario: &Scenario) -> Result<Prepared> {
    let grids = scenario.grid.build(&scenario.potential)?;
    let table = OpticalDepthTable::build(&grids, &scenario.relaxation);
    let weights = MomentWeights::build(&table.grids);
    Ok(Prepared { table, weights })
}

pub fn solve(scenario: &Scenario) -> Result<ScenarioResult> {
    let prepared = prepare(scenario)?;
    solve_prepared(scenario, prepared)
}

/// Runs the iteration on already built tables.
pub fn solve_prepared(scenario: &Scenario, prepared: Prepared) -> Result<ScenarioResult> {
    let start = Instant::now();
    let Prepared { table, weights } = prepared;
    let s = &scenario.settings;
    if s.tol.is_nan() || s.tol <= 0.0 {
        return Err(Error::config("tol", "must be positive"));
    }
    let grids = &table.grids;
    let r = &scenario.relaxation;
    let w = &grids.spatial.w;
    let nz = grids.spatial.global.len();

    let (mut field, mut n) = match s.init {
        InitialGuess::Zero => (DistributionField::zeros(&table), vec![0.0; nz]),
        InitialGuess::Equilibrium { beta } => (
            DistributionField::equilibrium(&table, beta),
            w.iter().map(|w| beta * (-w).exp()).collect(),
        ),
    };

    let (k_const, l_bound) = contraction_bound(&scenario.potential, r);
    let a_bound = scenario.incident.bound_constant();
    let bound_check = if a_bound.is_finite() {
        None
    } else {
        Some(
            "incident distribution is not bounded by a multiple of the wall Maxwellian; bound check skipped"
                .to_string(),
        )
    };
    if let Some(msg) = &bound_check {
        info!("{}: {msg}", scenario.name);
    }

    let n_default = grids.spatial.probes.len();
    let mut probes: Vec<ProbeTrace> = grids
        .spatial
        .probes
        .iter()
        .chain(&s.extra_probes)
        .map(|&z| {
            let node = grids.spatial.nearest(z);
            ProbeTrace {
                zeta: z,
                node,
                node_zeta: grids.spatial.global[node],
                values: vec![n[node]],
                fit: None,
            }
        })
        .collect();

    let mut increments = Vec::new();
    let mut abs_increments = Vec::new();
    let mut monotonicity_violations = 0;
    let mut bound_violations = 0;
    let mut converged = false;
    let mut k = 0;
    while k < s.k_max {
        k += 1;
        let next_field = sweep(&table, &n, &field, &scenario.incident, s.closure)?;
        let next_n = compute_density(&next_field, &weights);
        let inc = weighted_integral(grids, r, |j| next_n[j] - n[j]);
        let abs_inc = weighted_integral(grids, r, |j| (next_n[j] - n[j]).abs());
        let slack = s.check_slack;
        let drops = (0..nz)
            .filter(|&j| next_n[j] < n[j] - slack * n[j].max((-w[j]).exp()))
            .count();
        if drops > 0 && s.init == InitialGuess::Zero {
            monotonicity_violations += 1;
            debug!("k = {k}: density decreased at {drops} nodes");
        }
        if a_bound.is_finite() {
            let over = (0..nz)
                .filter(|&j| next_n[j] > a_bound * (-w[j]).exp() * (1.0 + slack))
                .count();
            if over > 0 {
                bound_violations += 1;
                warn!("k = {k}: density exceeds the bound at {over} nodes");
            }
        }
        for p in probes.iter_mut() {
            p.values.push(next_n[p.node]);
        }
        increments.push(inc);
        abs_increments.push(abs_inc);
        field = next_field;
        n = next_n;
        if k % 100 == 0 {
            info!("{}: k = {k}, increment {abs_inc:.3e}", scenario.name);
        }
        if abs_inc <= s.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("{}: no convergence after {k} iterations", scenario.name);
    }

    // Rate fits on the probe histories.
    let jmin = grids.zeta_min_index();
    let mut fit = None;
    let mut fit_error = None;
    for p in probes.iter_mut() {
        let diffs: Vec<f64> = p.values.windows(2).map(|v| v[1] - v[0]).collect();
        let floor = 1e-13 * p.values.last().copied().unwrap_or(0.0).abs().max(1e-300);
        match fit_rate(&diffs, s.k_min, floor) {
            Ok(f) => {
                p.fit = Some(f);
                if p.node == jmin {
                    fit = Some(f);
                }
            }
            Err(e) => {
                if p.node == jmin {
                    fit_error = Some(e.to_string());
                }
            }
        }
    }
    let rates: Vec<f64> = probes[..n_default].iter().filter_map(|p| p.fit.map(|f| f.a)).collect();
    let rate_spread = (rates.len() >= 2).then(|| {
        let max = rates.iter().cloned().fold(f64::MIN, f64::max);
        let min = rates.iter().cloned().fold(f64::MAX, f64::min);
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        (max - min) / mean
    });
    let min_increment = increments.iter().cloned().fold(f64::INFINITY, f64::min);

    let report = IterationReport {
        increments,
        abs_increments,
        probes,
        fit,
        fit_error,
        rate_spread,
        k_const,
        l_bound,
        a_bound,
        bound_check,
        monotonicity_violations,
        bound_violations,
        min_increment,
        iterations: k,
        converged,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    Ok(ScenarioResult {
        scenario: scenario.clone(),
        table,
        weights,
        field,
        n,
        report,
    })
}
