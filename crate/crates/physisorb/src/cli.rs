//! Scenario runs: solve, post-process and write the CSV and JSON artifacts.
//!
//! Layout of an output directory:
//!
//! ```text
//! moments.csv        zeta, n, flux, t_perp
//! increments.csv     k, weighted increment, weighted |increment|, n at each probe
//! report.json        rate fit, contraction constants, violation counts, properties
//! cuts/zeta_*.csv    F(zeta, c_z) at each requested position
//! bc/alpha.csv       accommodation table
//! bc/outgoing.csv    outgoing distribution: full solve, first and second model
//! ```
//!
//! Every CSV number carries 17 significant digits.  Missing values are
//! written as `nan`.  All quantities are dimensionless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use serde::Serialize;

use crate::bc::{apply_second_model, outgoing_from_solution, BoundaryModel, OutgoingDistribution, OutgoingSource};
use crate::config::ScenarioConfig;
use crate::diagnostics::{
    check_kernel_identities, check_sweep_kernel_equivalence, check_turning_averages, uniqueness_restart,
    PropertyOutcome,
};
use crate::error::{Error, Result};
use crate::moments::{velocity_cut, MomentProfile, VelocityCut};
use crate::solver::{prepare, solve_prepared, Prepared, RateFit, ScenarioResult};
use crate::transport::Incident;

/// Speed window over which outgoing distributions are compared.
pub const BC_WINDOW: (f64, f64) = (0.1, 3.0);

/// Extent and resolution of the velocity cuts.
const CUT_C_MAX: f64 = 4.0;
const CUT_SAMPLES: usize = 801;
const CUT_JUMP_TOL: f64 = 1e-3;

/// Grid size of the kernel checks attached to every report.
const KERNEL_CHECK_GRID: usize = 16;

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".to_string()
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn moments_csv(m: &MomentProfile) -> String {
    let mut s = String::from("# dimensionless\nzeta,n,flux,t_perp\n");
    for k in 0..m.zeta.len() {
        let tp = m.t_perp[k].map_or_else(|| "nan".into(), num);
        let _ = writeln!(s, "{},{},{},{}", num(m.zeta[k]), num(m.n[k]), num(m.flux[k]), tp);
    }
    s
}

pub fn increments_csv(result: &ScenarioResult) -> String {
    let r = &result.report;
    let mut s =
        String::from("# dimensionless; n_at_<z> columns hold n^k at the probe node z\nk,increment,abs_increment");
    for p in &r.probes {
        let _ = write!(s, ",n_at_{}", num(p.node_zeta));
    }
    s.push('\n');
    for k in 0..r.increments.len() {
        let _ = write!(s, "{},{},{}", k + 1, num(r.increments[k]), num(r.abs_increments[k]));
        for p in &r.probes {
            let _ = write!(s, ",{}", num(p.values[k + 1]));
        }
        s.push('\n');
    }
    s
}

pub fn cut_csv(cut: &VelocityCut) -> String {
    let mut s = format!("# dimensionless; F(zeta, c_z) at zeta = {}\nc_z,f\n", num(cut.zeta));
    for (c, f) in cut.c.iter().zip(&cut.f) {
        let _ = writeln!(s, "{},{}", num(*c), num(*f));
    }
    s
}

pub fn outgoing_csv(
    full: &OutgoingDistribution,
    first: &OutgoingDistribution,
    second: &OutgoingDistribution,
) -> String {
    let mut s = String::from("# dimensionless; outgoing F(c_z) at infinity\nc_z,full,first_model,second_model\n");
    for k in 0..full.c.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            num(full.c[k]),
            num(full.f[k]),
            num(first.f[k]),
            num(second.f[k])
        );
    }
    s
}

/// Distances of the two boundary models from the full solve.
#[derive(Debug, Clone, Serialize)]
pub struct BcComparison {
    pub window: (f64, f64),
    pub beta: f64,
    pub beta_flux_balance: f64,
    pub first_linf: f64,
    pub first_l1: f64,
    pub second_linf: f64,
    pub second_l1: f64,
    /// Largest `|F_full|` in the window, the scale for relative distances.
    pub full_max: f64,
    pub limit_mismatch: f64,
    /// Outgoing flux of each distribution over the incident flux, minus one.
    /// Both fluxes use the quadrature on the outgoing speeds.
    pub flux_imbalance_full: f64,
    pub flux_imbalance_first: f64,
    pub flux_imbalance_second: f64,
}

impl BcComparison {
    pub fn first_relative(&self) -> f64 {
        self.first_linf / self.full_max
    }

    pub fn second_relative(&self) -> f64 {
        self.second_linf / self.full_max
    }

    pub fn table(&self) -> String {
        let (lo, hi) = self.window;
        let mut s = format!("model     L_inf          L1             L_inf/max|F|   (c_z in [{lo}, {hi}])\n");
        for (name, li, l1) in [
            ("first", self.first_linf, self.first_l1),
            ("second", self.second_linf, self.second_l1),
        ] {
            let _ = writeln!(s, "{name:<9} {li:<14.6e} {l1:<14.6e} {:<14.6e}", li / self.full_max);
        }
        s
    }
}

/// Boundary artifacts for a converged solve.
#[derive(Debug, Clone)]
pub struct BcArtifacts {
    pub model: BoundaryModel,
    pub full: OutgoingDistribution,
    pub first: OutgoingDistribution,
    pub second: OutgoingDistribution,
    pub comparison: BcComparison,
}

pub fn boundary_artifacts(result: &ScenarioResult, prepared: &Prepared) -> Result<BcArtifacts> {
    let sc = &result.scenario;
    let full = outgoing_from_solution(result)?;
    let model = BoundaryModel::build_default(&sc.potential, &sc.relaxation)?;
    let first = model.apply_first(&sc.incident, &full.dist.c)?;
    let second = apply_second_model(prepared, &sc.incident, &model)?;
    let (lo, hi) = BC_WINDOW;
    // Incident flux on the same speeds and rule as the outgoing ones, so the
    // balance measures conservation rather than the difference of two rules.
    let inflow = OutgoingDistribution {
        c: full.dist.c.clone(),
        f: full.dist.c.iter().map(|&c| sc.incident.eval(-c)).collect(),
        source: OutgoingSource::FullSolve,
    }
    .flux();
    let comparison = BcComparison {
        window: BC_WINDOW,
        beta: second.beta0,
        beta_flux_balance: second.beta_flux_balance,
        first_linf: first.linf_distance(&full.dist, lo, hi),
        first_l1: first.l1_distance(&full.dist, lo, hi),
        second_linf: second.dist.linf_distance(&full.dist, lo, hi),
        second_l1: second.dist.l1_distance(&full.dist, lo, hi),
        full_max: full.dist.max_abs(lo, hi),
        limit_mismatch: full.limit_mismatch,
        flux_imbalance_full: full.dist.flux() / inflow - 1.0,
        flux_imbalance_first: first.flux() / inflow - 1.0,
        flux_imbalance_second: second.dist.flux() / inflow - 1.0,
    };
    Ok(BcArtifacts {
        model,
        full: full.dist,
        first,
        second: second.dist,
        comparison,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSummary {
    pub zeta: f64,
    pub node_zeta: f64,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CutSummary {
    pub zeta: f64,
    pub file: String,
    pub jumps: Vec<f64>,
}

/// Structured run report written as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub converged: bool,
    pub iterations: usize,
    pub runtime_s: f64,
    pub global_nodes: usize,
    pub energies: usize,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub reference_a: Option<f64>,
    pub reference_b: Option<f64>,
    pub probes: Vec<ProbeSummary>,
    pub rate_spread: Option<f64>,
    pub k_const: f64,
    pub l_bound: f64,
    pub a_bound: Option<f64>,
    pub bound_check: Option<String>,
    pub monotonicity_violations: usize,
    pub bound_violations: usize,
    pub min_increment: f64,
    pub max_relative_flux: f64,
    pub n_at_zeta_min: f64,
    pub cuts: Vec<CutSummary>,
    pub bc: Option<BcComparison>,
    pub bc_error: Option<String>,
    pub properties: Vec<PropertyOutcome>,
}

/// Everything a run produced, for callers that want more than the files.
pub struct RunOutcome {
    pub result: ScenarioResult,
    pub report: RunReport,
    pub bc: Option<BcArtifacts>,
}

fn is_wall_maxwellian(inc: &Incident) -> bool {
    matches!(inc, Incident::ShiftedMaxwellian { t_inf, v_inf } if *t_inf == 1.0 && *v_inf == 0.0)
}

/// Property outcomes computed from a finished solve.
pub fn run_properties(
    result: &ScenarioResult,
    prepared: &Prepared,
    check_uniqueness: bool,
) -> Result<Vec<PropertyOutcome>> {
    let sc = &result.scenario;
    let r = &result.report;
    let grids = result.grids();
    let w = &grids.spatial.w;
    let m = result.moments();
    let tol = sc.settings.tol;
    let mut out = Vec::new();

    out.push(PropertyOutcome::check(
        "monotone_increments",
        (-r.min_increment).max(0.0),
        10.0 * tol,
    ));
    let min_f = result
        .field
        .f_plus
        .iter()
        .chain(&result.field.f_minus)
        .flatten()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    out.push(PropertyOutcome::check("field_nonnegative", (-min_f).max(0.0), 0.0));
    out.push(if r.a_bound.is_finite() {
        let excess = (0..w.len())
            .map(|j| result.n[j] - r.a_bound * (-w[j]).exp())
            .fold(f64::NEG_INFINITY, f64::max);
        PropertyOutcome::check("density_below_bound", excess.max(0.0), 1e-6)
    } else {
        PropertyOutcome::skipped(
            "density_below_bound",
            "the incident distribution is not bounded by a multiple of the wall Maxwellian (A is infinite)",
            1e-6,
        )
    });
    out.push(PropertyOutcome::check(
        "particle_conservation",
        m.max_relative_flux(1e-300),
        1e-6,
    ));
    out.push(match r.fit {
        Some(f) => PropertyOutcome::check(
            "rate_within_contraction_bound",
            ((-f.a).exp() - r.l_bound).max(0.0),
            0.0,
        ),
        None => PropertyOutcome::skipped("rate_within_contraction_bound", "no rate fit is available", 0.0),
    });
    out.push(match r.rate_spread {
        Some(s) => PropertyOutcome::check("rate_uniform_across_probes", s, 0.05),
        None => PropertyOutcome::skipped("rate_uniform_across_probes", "fewer than two probe fits", 0.05),
    });
    if is_wall_maxwellian(&sc.incident) {
        let mut err = 0.0f64;
        let mut terr = 0.0f64;
        for k in 0..m.zeta.len() {
            if m.zeta[k] >= 0.9 {
                let eq = (-w[m.first_node + k]).exp();
                err = err.max((m.n[k] - eq).abs() / eq);
            }
            if let Some(t) = m.t_perp[k] {
                terr = terr.max((t - 1.0).abs());
            }
        }
        out.push(PropertyOutcome::check("equilibrium_density", err, 1e-3));
        out.push(PropertyOutcome::check("equilibrium_temperature", terr, 1e-3));
    }
    let spatial = &grids.spatial;
    let n = &result.n;
    let mut turning = check_turning_averages(
        &sc.potential,
        &sc.relaxation,
        |z| spatial.interpolate(n, z),
        &[-0.5, -0.1],
    )?;
    turning.name = "turning_values_are_averages_converged".into();
    out.push(turning);
    out.extend(check_kernel_identities(
        &sc.potential,
        &sc.relaxation,
        KERNEL_CHECK_GRID,
        KERNEL_CHECK_GRID,
    )?);
    out.push(check_sweep_kernel_equivalence(
        &sc.potential,
        &sc.relaxation,
        KERNEL_CHECK_GRID,
        KERNEL_CHECK_GRID,
    )?);
    if check_uniqueness {
        out.push(uniqueness_restart(sc, prepared)?);
    } else {
        out.push(PropertyOutcome::skipped(
            "uniqueness_restart",
            "not requested (set check_uniqueness = true)",
            10.0 * tol,
        ));
    }
    Ok(out)
}

/// Runs one configuration and writes every artifact into `cfg.out`.
///
/// A solve that stops at `k_max` still writes moments, increments and the
/// report; boundary artifacts need a converged solve and are then omitted.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    let scenario = cfg.scenario()?;
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::config("out", format!("cannot create {}: {e}", out.display())))?;
    info!("{}: preparing tables", scenario.name);
    let prepared = prepare(&scenario)?;
    let result = solve_prepared(&scenario, prepared.clone())?;
    let r = &result.report;
    let grids = result.grids();
    let m = result.moments();

    write_file(&out.join("moments.csv"), &moments_csv(&m))?;
    write_file(&out.join("increments.csv"), &increments_csv(&result))?;

    let mut cuts = Vec::new();
    if !cfg.cuts.is_empty() {
        let dir = out.join("cuts");
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        for &z in &cfg.cuts {
            let cut = velocity_cut(&result.field, grids, z, CUT_C_MAX, CUT_SAMPLES, CUT_JUMP_TOL);
            let file = format!("cuts/zeta_{z}.csv");
            write_file(&out.join(&file), &cut_csv(&cut))?;
            cuts.push(CutSummary {
                zeta: z,
                file,
                jumps: cut.jumps,
            });
        }
    }

    let (bc, bc_error) = if r.converged {
        match boundary_artifacts(&result, &prepared) {
            Ok(a) => {
                let dir = out.join("bc");
                fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                a.model.write(&dir.join("alpha.csv"))?;
                write_file(&dir.join("outgoing.csv"), &outgoing_csv(&a.full, &a.first, &a.second))?;
                (Some(a), None)
            }
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("the solve did not converge".to_string()))
    };

    let mut properties = run_properties(&result, &prepared, cfg.check_uniqueness)?;
    if let Some(a) = &bc {
        let c = &a.comparison;
        properties.push(PropertyOutcome::check(
            "outgoing_limit_crosscheck",
            c.limit_mismatch,
            1e-4,
        ));
        properties.push(PropertyOutcome::check(
            "outgoing_flux_balance",
            c.flux_imbalance_full.abs(),
            1e-6,
        ));
        let name = "second_model_closer_than_first";
        properties.push(if c.first_relative() <= 1e-6 {
            PropertyOutcome::skipped(name, "the first model already reproduces the full solve", 0.0)
        } else {
            PropertyOutcome::check(name, c.second_linf - c.first_linf, 0.0)
        });
    }

    let reference = cfg.reference();
    let report = RunReport {
        config: cfg.clone(),
        converged: r.converged,
        iterations: r.iterations,
        runtime_s: r.runtime_s,
        global_nodes: grids.spatial.global.len(),
        energies: grids.energy.len(),
        a: r.fit.map(|f| f.a),
        b: r.fit.map(|f| f.b),
        fit: r.fit,
        fit_error: r.fit_error.clone(),
        reference_a: reference.map(|p| p.reference_a),
        reference_b: reference.map(|p| p.reference_b),
        probes: r
            .probes
            .iter()
            .map(|p| ProbeSummary {
                zeta: p.zeta,
                node_zeta: p.node_zeta,
                fit: p.fit,
            })
            .collect(),
        rate_spread: r.rate_spread,
        k_const: r.k_const,
        l_bound: r.l_bound,
        a_bound: r.a_bound.is_finite().then_some(r.a_bound),
        bound_check: r.bound_check.clone(),
        monotonicity_violations: r.monotonicity_violations,
        bound_violations: r.bound_violations,
        min_increment: r.min_increment,
        max_relative_flux: m.max_relative_flux(1e-300),
        n_at_zeta_min: result.n[grids.zeta_min_index()],
        cuts,
        bc: bc.as_ref().map(|a| a.comparison.clone()),
        bc_error,
        properties,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    write_file(&out.join("report.json"), &json)?;
    Ok(RunOutcome { result, report, bc })
}

/// Solves a configuration and compares both boundary models with the full
/// solve.  Nothing is written to disk.
pub fn compare_bc(cfg: &ScenarioConfig) -> Result<BcComparison> {
    let scenario = cfg.scenario()?;
    let prepared = prepare(&scenario)?;
    let result = solve_prepared(&scenario, prepared.clone())?;
    if !result.report.converged {
        return Err(Error::NotConverged(result.report.iterations));
    }
    Ok(boundary_artifacts(&result, &prepared)?.comparison)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_use_seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(f64::NAN), "nan");
        let x = 2.0f64.sqrt();
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }
}
