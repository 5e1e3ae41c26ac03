//! Energy and spatial grids with turning-point aligned node sets.
use physisorb::grid::{EnergyClass, GridSpec};
use physisorb::model::Potential;

fn main() -> physisorb::Result<()> {
    let p = Potential::lj9_3(1.0)?;
    let g = GridSpec::new(64, 128, 20.0, 50.0).build(&p)?;
    let e = &g.energy;
    println!("{} energies, {} global nodes", e.len(), g.spatial.global.len());
    let zero: Vec<_> = e.nodes.iter().filter(|n| n.eps == 0.0).map(|n| n.class).collect();
    println!("double node at eps = 0: {zero:?}");
    for (i, n) in e.nodes.iter().enumerate().step_by(16) {
        let set = &g.spatial.sets[i];
        let kind = if n.class == EnergyClass::Trapped {
            "trapped"
        } else {
            "free/other"
        };
        println!(
            "eps = {:9.5} ({kind}): {} nodes from {:.6} to {:.6}",
            n.eps,
            set.len(),
            set.first(),
            set.last()
        );
    }
    println!("probes: {:?}", g.spatial.probes);
    Ok(())
}
