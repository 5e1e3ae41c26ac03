//! Whole-solve behaviour on the reference cases and on small variants of them.

use std::sync::OnceLock;

use physisorb::bc::{apply_second_model, outgoing_from_solution, OutgoingDistribution};
use physisorb::cli::compare_bc;
use physisorb::config::ScenarioConfig;
use physisorb::moments::reconstruct_f;
use physisorb::solver::{prepare, solve, solve_prepared, Scenario, ScenarioResult};
use physisorb::transport::Incident;

fn case_iii() -> &'static ScenarioResult {
    static R: OnceLock<ScenarioResult> = OnceLock::new();
    R.get_or_init(|| {
        let r = solve(&ScenarioConfig::from_preset("iii").unwrap().scenario().unwrap()).unwrap();
        assert!(r.report.converged);
        r
    })
}

fn coarse(id: &str) -> Scenario {
    let mut cfg = ScenarioConfig::from_preset(id).unwrap();
    cfg.n_eps = 64;
    cfg.n_zeta = 256;
    cfg.scenario().unwrap()
}

#[test]
fn velocity_integral_of_the_reconstruction_matches_the_density() {
    let r = case_iii();
    let g = r.grids();
    let m = r.moments();
    let eps_max = 20.0;
    for z in [1.0, 1.05, 1.2, 2.0, 5.0] {
        let k = m.zeta.iter().position(|&x| (x - z).abs() < 1e-9).unwrap_or_else(|| {
            m.zeta
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - z).abs().total_cmp(&(b.1 - z).abs()))
                .unwrap()
                .0
        });
        let zeta = m.zeta[k];
        let c_max = (2.0 * (eps_max - g.potential.w(zeta))).sqrt();
        let samples = 40_001;
        let h = 2.0 * c_max / (samples - 1) as f64;
        let mut n = 0.0;
        for s in 0..samples {
            let c = -c_max + h * s as f64;
            let w = if s == 0 || s == samples - 1 { 0.5 } else { 1.0 };
            n += w * h * reconstruct_f(&r.field, g, zeta, c);
        }
        let rel = (n - m.n[k]).abs() / m.n[k];
        assert!(rel < 1e-4, "zeta = {zeta}: {n} vs {} ({rel:e})", m.n[k]);
    }
}

/// Interior extremum of `T_perp` on `(1, 1.5)`: position, value, and the
/// values at both ends of the window.
fn t_perp_extremum(r: &ScenarioResult, lowest: bool) -> (f64, f64, f64, f64) {
    let m = r.moments();
    let t: Vec<(f64, f64)> = m
        .zeta
        .iter()
        .zip(&m.t_perp)
        .filter_map(|(&z, t)| t.map(|t| (z, t)))
        .filter(|(z, _)| *z >= 1.0 && *z < 1.5)
        .collect();
    let key = |v: f64| if lowest { v } else { -v };
    let (k, &(z, v)) = t
        .iter()
        .enumerate()
        .min_by(|a, b| key(a.1 .1).total_cmp(&key(b.1 .1)))
        .unwrap();
    assert!(k > 0 && k + 1 < t.len(), "extremum on the edge of the window");
    (z, v, t[0].1, t[t.len() - 1].1)
}

#[test]
fn normal_temperature_has_a_sharp_extremum_near_the_wall() {
    let (z, v, left, right) = t_perp_extremum(case_iii(), true);
    assert!(v < left - 0.1 && v < right, "incoming towards the wall: dip {v} at {z}");
    let v_case = solve(&coarse("v")).unwrap();
    let (z, v, left, right) = t_perp_extremum(&v_case, false);
    assert!(
        v > left + 0.1 && v > right,
        "incoming away from the wall: peak {v} at {z}"
    );
}

#[test]
fn equilibrium_case_is_flux_free_and_both_models_are_exact() {
    let cfg = ScenarioConfig::from_preset("viii").unwrap();
    let c = compare_bc(&cfg).unwrap();
    assert!(c.first_relative() <= 1e-3, "{}", c.first_relative());
    assert!(c.second_relative() <= 1e-3, "{}", c.second_relative());
    let r = solve(&cfg.scenario().unwrap()).unwrap();
    let m = r.moments();
    let worst = m.flux.iter().fold(0.0f64, |a, f| a.max(f.abs()));
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn zero_input_gives_the_zero_solution() {
    let mut sc = coarse("iii");
    sc.incident = Incident::Zero;
    let r = solve(&sc).unwrap();
    assert!(r.report.converged);
    assert!(r.n.iter().all(|&v| v == 0.0));
    assert_eq!(r.field.min_value(), 0.0);
}

#[test]
fn full_solve_and_second_model_are_linear_in_the_input() {
    let f1 = Incident::ShiftedMaxwellian {
        t_inf: 1.0,
        v_inf: -0.5,
    };
    let f2 = Incident::ShiftedMaxwellian { t_inf: 0.6, v_inf: 0.0 };
    let (l1, l2) = (0.7, 1.6);
    let mix = Incident::Mixture(vec![(l1, f1.clone()), (l2, f2.clone())]);

    let base = coarse("iii");
    let prepared = prepare(&base).unwrap();
    let outgoing = |inc: &Incident| {
        let mut sc = base.clone();
        sc.incident = inc.clone();
        sc.settings.tol = 1e-13;
        sc.settings.k_max = 4000;
        let r = solve_prepared(&sc, prepared.clone()).unwrap();
        assert!(r.report.converged);
        let model = physisorb::bc::BoundaryModel::build_default(&sc.potential, &sc.relaxation).unwrap();
        let second = apply_second_model(&prepared, inc, &model).unwrap().dist;
        (outgoing_from_solution(&r).unwrap().dist, second)
    };
    let close = |a: &OutgoingDistribution, b: &OutgoingDistribution, c: &OutgoingDistribution, tol: f64| {
        let scale = a.f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.f.iter()
            .zip(&b.f)
            .zip(&c.f)
            .map(|((x, y), z)| (x - l1 * y - l2 * z).abs() / scale)
            .fold(0.0f64, f64::max)
            < tol
    };
    let (full_mix, second_mix) = outgoing(&mix);
    let (full1, second1) = outgoing(&f1);
    let (full2, second2) = outgoing(&f2);
    assert!(close(&full_mix, &full1, &full2, 1e-9));
    assert!(close(&second_mix, &second1, &second2, 1e-9));
}
