//! Wall potentials, turning points and relaxation times.
use physisorb::model::{Potential, RelaxationModel};
use physisorb::solver::contraction_bound;

fn main() -> physisorb::Result<()> {
    for p in [Potential::lj9_3(1.0)?, Potential::lj12_6(1.0)?] {
        println!(
            "{}: zeta_min = {:.6}, W_min = {:.6}",
            p.kind.name(),
            p.zeta_min(),
            p.w_min()
        );
        for eps in [-0.5, 0.0, 2.0] {
            let tp = p.turning_points(eps)?;
            println!("  eps = {eps:5.2}: zeta_a = {:.6}, zeta_b = {:?}", tp.a, tp.b);
        }
    }
    let p = Potential::lj9_3(1.0)?;
    let r = RelaxationModel::algebraic(1.0, 1.0, 4.0)?;
    println!(
        "tau(0) = {}, tau(2) = {:.4}, int 1/tau = {:.6}",
        r.tau(0.0),
        r.tau(2.0),
        r.tail_integral()
    );
    let (k, l) = contraction_bound(&p, &r);
    println!("contraction constants K = {k:.5}, L = {l:.6}");
    Ok(())
}
