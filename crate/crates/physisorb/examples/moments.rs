//! Density, flux and normal temperature profiles plus a velocity cut showing
//! the discontinuity at `c_z = +-sqrt(-2 W)`.
use physisorb::config::ScenarioConfig;
use physisorb::moments::velocity_cut;
use physisorb::solver::solve;

fn main() -> physisorb::Result<()> {
    let mut cfg = ScenarioConfig::from_preset("vii")?;
    cfg.n_eps = 128;
    cfg.n_zeta = 512;
    cfg.cuts = vec![1.05];
    let result = solve(&cfg.scenario()?)?;
    let m = result.moments();
    for k in (0..m.zeta.len()).step_by(m.zeta.len() / 12) {
        println!(
            "zeta = {:8.4}  n = {:.6}  flux = {:+.2e}  T_perp = {}",
            m.zeta[k],
            m.n[k],
            m.flux[k],
            m.t_perp[k].map_or("-".into(), |t| format!("{t:.6}"))
        );
    }
    let cut = velocity_cut(&result.field, result.grids(), 1.05, 3.0, 61, 1e-8);
    println!("jumps at zeta = 1.05: {:?}", cut.jumps);
    Ok(())
}
