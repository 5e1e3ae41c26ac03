//! Picard iteration for a reference case and its convergence rate.
use physisorb::config::ScenarioConfig;
use physisorb::solver::solve;

fn main() -> physisorb::Result<()> {
    let mut cfg = ScenarioConfig::from_preset("iii")?;
    cfg.n_eps = 128;
    cfg.n_zeta = 512;
    let result = solve(&cfg.scenario()?)?;
    let r = &result.report;
    println!("converged: {} after {} iterations", r.converged, r.iterations);
    if let Some(f) = r.fit {
        println!(
            "rate fit at zeta_min: a = {:.5}, b = {:.4} (reference 0.08827, -0.7568)",
            f.a, f.b
        );
    }
    println!(
        "theoretical bound L = {:.6}, observed exp(-a) = {:.6}",
        r.l_bound,
        (-r.fit.map_or(0.0, |f| f.a)).exp()
    );
    for p in &r.probes {
        println!("  probe {:.4}: a = {:?}", p.node_zeta, p.fit.map(|f| f.a));
    }
    Ok(())
}
