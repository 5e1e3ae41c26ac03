//! End-to-end acceptance criteria.  Every criterion prints one line of the
//! form `criterion N: PASS|FAIL detail`; the process exits non-zero if any
//! line fails.  It runs without the libtest harness so the lines always show.

use std::collections::BTreeMap;
use std::time::Instant;

use physisorb::cli::boundary_artifacts;
use physisorb::config::{preset, ScenarioConfig, PRESETS};
use physisorb::diagnostics::{
    check_kernel_identities, check_sweep_kernel_equivalence, refinement_change, uniqueness_restart,
};
use physisorb::model::{Potential, RelaxationModel};
use physisorb::moments::{jump_magnitudes, locate_discontinuity};
use physisorb::solver::{prepare, solve_prepared, Prepared, ScenarioResult};

const JUMP_TOL: f64 = 1e-3;

struct Solved {
    cfg: ScenarioConfig,
    prepared: Prepared,
    result: ScenarioResult,
    wall_s: f64,
}

fn solve_all() -> BTreeMap<&'static str, Solved> {
    PRESETS
        .iter()
        .map(|p| {
            let cfg = ScenarioConfig::from_preset(p.id).unwrap();
            let scenario = cfg.scenario().unwrap();
            let start = Instant::now();
            let prepared = prepare(&scenario).unwrap();
            let result = solve_prepared(&scenario, prepared.clone()).unwrap();
            let wall_s = start.elapsed().as_secs_f64();
            (
                p.id,
                Solved {
                    cfg,
                    prepared,
                    result,
                    wall_s,
                },
            )
        })
        .collect()
}

#[derive(Default)]
struct Verdicts(Vec<(usize, bool, String)>);

impl Verdicts {
    fn record(&mut self, n: usize, ok: bool, detail: String) {
        println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
        self.0.push((n, ok, detail));
    }
}

fn equilibrium_recovery(s: &Solved) -> (f64, f64) {
    let m = s.result.moments();
    let w = &s.result.grids().spatial.w;
    let mut dn = 0.0f64;
    let mut dt = 0.0f64;
    for k in 0..m.zeta.len() {
        if m.zeta[k] >= 0.9 {
            let eq = (-w[m.first_node + k]).exp();
            dn = dn.max((m.n[k] - eq).abs() / eq);
        }
        if let Some(t) = m.t_perp[k] {
            dt = dt.max((t - 1.0).abs());
        }
    }
    (dn, dt)
}

fn main() {
    acceptance_criteria();
}

fn acceptance_criteria() {
    let solved = solve_all();
    let mut v = Verdicts::default();
    for (id, s) in &solved {
        assert!(s.result.report.converged, "preset {id} did not converge");
    }

    // 1. Equilibrium input reproduces the wall Maxwellian.
    {
        let s = &solved["viii"];
        let (dn, dt) = equilibrium_recovery(s);
        let ok = dn <= 1e-3 && dt <= 1e-3 && s.wall_s < 60.0;
        v.record(
            1,
            ok,
            format!(
                "density error {dn:.2e}, T_perp error {dt:.2e}, runtime {:.1} s",
                s.wall_s
            ),
        );
    }

    // 2. Convergence rates against the reference table.
    {
        let mut ok = true;
        let mut parts = Vec::new();
        for (id, s) in &solved {
            let r = &s.result.report;
            let reference = preset(id).unwrap();
            let (a, b) = r.fit.map_or((f64::NAN, f64::NAN), |f| (f.a, f.b));
            let a_ok = (a - reference.reference_a).abs() <= 0.1 * reference.reference_a;
            let b_ok = !matches!(*id, "i" | "ii" | "iii" | "iv") || (b - reference.reference_b).abs() <= 0.3;
            let spread = r.rate_spread.unwrap_or(f64::NAN);
            ok &= a_ok && b_ok && spread <= 0.05;
            parts.push(format!("{id}: a={a:.5} b={b:.4} spread={spread:.1e}"));
        }
        v.record(2, ok, parts.join("; "));
    }

    // 3. Contraction constants and the rate bound.
    {
        let r = &solved["iii"].result.report;
        let mut ok = (r.k_const - 2.6411).abs() <= 1e-3 && (r.l_bound - 0.99676).abs() <= 1e-3;
        for s in solved.values() {
            let rep = &s.result.report;
            ok &= rep.fit.is_some_and(|f| (-f.a).exp() <= rep.l_bound);
        }
        v.record(
            3,
            ok,
            format!(
                "K = {:.6}, L = {:.6}, exp(-a) <= L for every preset",
                r.k_const, r.l_bound
            ),
        );
    }

    // 4. Monotone increments and a nonnegative field.
    {
        let mut ok = true;
        let mut worst_inc = f64::INFINITY;
        let mut worst_f = f64::INFINITY;
        for s in solved.values() {
            let min_f = s.result.field.min_value();
            ok &= s.result.report.min_increment >= -10.0 * s.cfg.tol && min_f >= 0.0;
            worst_inc = worst_inc.min(s.result.report.min_increment);
            worst_f = worst_f.min(min_f);
        }
        v.record(
            4,
            ok,
            format!("smallest increment {worst_inc:.3e}, smallest F {worst_f:.3e}"),
        );
    }

    // 5. Density bound for inputs dominated by a multiple of the wall Maxwellian.
    {
        let mut ok = true;
        let mut parts = Vec::new();
        for id in ["vi", "vii"] {
            let s = &solved[id];
            let a = s.result.report.a_bound;
            let w = &s.result.grids().spatial.w;
            let excess = s
                .result
                .n
                .iter()
                .zip(w)
                .map(|(n, w)| n - a * (-w).exp())
                .fold(f64::NEG_INFINITY, f64::max);
            ok &= a.is_finite() && excess <= 1e-6;
            parts.push(format!("{id}: A = {a:.6}, max(n - A exp(-W)) = {excess:.3e}"));
        }
        v.record(5, ok, parts.join("; "));
    }

    // 6. Zero net particle flux.
    {
        let mut worst = 0.0f64;
        for s in solved.values() {
            let m = s.result.moments();
            worst = worst.max(m.max_relative_flux(1e-300));
        }
        v.record(6, worst <= 1e-6, format!("max |flux| / n = {worst:.3e}"));
    }

    // 7. Discontinuities of F at the trapped/free boundary.
    {
        let mut ok = true;
        let mut parts = Vec::new();
        for id in ["iii", "v", "vi", "vii"] {
            let s = &solved[id];
            let g = s.result.grids();
            let f = &s.result.field;
            let zmin = g.potential.zeta_min();
            for z in [1.05, zmin, 2.0] {
                let c0 = (-2.0 * g.potential.w(z)).sqrt();
                let found = locate_discontinuity(f, g, z, JUMP_TOL);
                let expect_ok = found.len() == 2 && (found[0] + c0).abs() < 1e-12 && (found[1] - c0).abs() < 1e-12;
                ok &= expect_ok;
            }
            ok &= locate_discontinuity(f, g, 0.95, JUMP_TOL).is_empty();
            let jm = |z: f64| jump_magnitudes(f, g, z).map_or(f64::NAN, |j| j.1);
            let jp = |z: f64| jump_magnitudes(f, g, z).map_or(f64::NAN, |j| j.0);
            let chain = [jm(2.0), jm(zmin), jm(1.05), jp(1.05), jp(zmin), jp(2.0)];
            let ordered = chain.windows(2).all(|w| w[0] > w[1]);
            ok &= ordered;
            parts.push(format!(
                "{id}: jumps F-(2,zmin,1.05) = {:.3e},{:.3e},{:.3e} F+(1.05,zmin,2) = {:.3e},{:.3e},{:.3e}{}",
                chain[0],
                chain[1],
                chain[2],
                chain[3],
                chain[4],
                chain[5],
                if ordered { "" } else { " (order broken)" }
            ));
        }
        v.record(7, ok, parts.join("; "));
    }

    // 8. Kernel identities and equivalence of sweep and kernel form.
    {
        let mut ok = true;
        let mut worst = String::new();
        // Each potential with the relaxation time its reference cases use.
        let pairs = [
            (
                Potential::lj9_3(1.0).unwrap(),
                RelaxationModel::algebraic(1.0, 1.0, 4.0).unwrap(),
            ),
            (
                Potential::lj12_6(1.0).unwrap(),
                RelaxationModel::algebraic(1.0, 1.0, 7.0).unwrap(),
            ),
        ];
        for (p, r) in pairs {
            for n in [16, 32] {
                for o in check_kernel_identities(&p, &r, n, n).unwrap() {
                    if !o.passed() {
                        ok = false;
                        worst = format!("{worst} {}@{n}={:.2e}", o.name, o.measured);
                    }
                }
            }
            let eq = check_sweep_kernel_equivalence(&p, &r, 16, 16).unwrap();
            ok &= eq.passed();
            worst = format!("{worst} sweep-vs-kernel({})={:.2e}", p.kind.name(), eq.measured);
        }
        v.record(8, ok, format!("identities at 16 and 32 for both potentials;{worst}"));
    }

    // 9. The fixed point does not depend on the starting iterate.
    {
        let mut ok = true;
        let mut parts = Vec::new();
        for id in ["iii", "viii"] {
            let s = &solved[id];
            let o = uniqueness_restart(&s.result.scenario, &s.prepared).unwrap();
            ok &= o.passed();
            parts.push(format!("{id}: {:.2e} (limit {:.0e})", o.measured, o.threshold));
        }
        v.record(9, ok, parts.join("; "));
    }

    // 10. The second boundary model beats the first.
    {
        let mut ok = true;
        let mut parts = Vec::new();
        for id in ["iii", "v", "vi", "vii"] {
            let s = &solved[id];
            let c = boundary_artifacts(&s.result, &s.prepared).unwrap().comparison;
            let (d1, d2) = (c.first_relative(), c.second_relative());
            ok &= d2 < d1 && d2 <= 0.05;
            parts.push(format!("{id}: first {d1:.4}, second {d2:.4}"));
        }
        v.record(10, ok, parts.join("; "));
    }

    // 11. Grid self-convergence of n(zeta_min).
    {
        let s = &solved["iii"];
        let o = refinement_change(&s.result.scenario, s.cfg.disc_tol).unwrap();
        let limit = 3.0 * s.cfg.disc_tol;
        v.record(
            11,
            o.measured <= limit,
            format!("relative change {:.2e} on doubling (limit {limit:.0e})", o.measured),
        );
    }

    let failed: Vec<usize> = v.0.iter().filter(|c| !c.1).map(|c| c.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", v.0.len());
    } else {
        eprintln!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
