//! Kernel identities and the sweep/kernel equivalence on a small grid.
use physisorb::diagnostics::{check_kernel_identities, check_sweep_kernel_equivalence};
use physisorb::model::{Potential, RelaxationModel};

fn main() -> physisorb::Result<()> {
    let p = Potential::lj12_6(1.0)?;
    let r = RelaxationModel::algebraic(1.0, 1.0, 7.0)?;
    let mut outcomes = check_kernel_identities(&p, &r, 16, 16)?;
    outcomes.push(check_sweep_kernel_equivalence(&p, &r, 16, 16)?);
    for o in outcomes {
        println!(
            "{:<36} {:?}  measured {:.3e}  threshold {:.0e}",
            o.name, o.status, o.measured, o.threshold
        );
    }
    Ok(())
}
