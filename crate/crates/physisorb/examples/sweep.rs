//! One transport sweep: optical depths and the distribution produced by a
//! given density.
use physisorb::grid::GridSpec;
use physisorb::model::{Potential, RelaxationModel};
use physisorb::moments::MomentWeights;
use physisorb::transport::{sweep, DistributionField, Incident, OpticalDepthTable, TrappedClosure};

fn main() -> physisorb::Result<()> {
    let p = Potential::lj9_3(1.0)?;
    let r = RelaxationModel::algebraic(1.0, 1.0, 4.0)?;
    let g = GridSpec::new(64, 128, 20.0, 50.0).build(&p)?;
    let table = OpticalDepthTable::build(&g, &r);
    for ch in table.chars.iter().step_by(20) {
        println!("eps = {:9.5}: total optical depth {:.6}", ch.eps, ch.total_depth());
    }
    // The wall Maxwellian is a fixed point of the sweep.
    let n: Vec<f64> = g.spatial.w.iter().map(|w| (-w).exp()).collect();
    let prev = DistributionField::equilibrium(&table, 1.0);
    let next = sweep(&table, &n, &prev, &Incident::equilibrium(), TrappedClosure::Lagged)?;
    let n1 = MomentWeights::build(&table.grids).density(&next);
    let err = n.iter().zip(&n1).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
    println!("equilibrium reproduced by one sweep to {err:.2e}");
    Ok(())
}
