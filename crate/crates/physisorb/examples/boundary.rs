//! Accommodation function and the first boundary model for a drifting input.
use physisorb::bc::BoundaryModel;
use physisorb::model::{Potential, RelaxationModel};
use physisorb::transport::Incident;

fn main() -> physisorb::Result<()> {
    let p = Potential::lj9_3(1.0)?;
    let r = RelaxationModel::algebraic(1.0, 1.0, 4.0)?;
    let bm = BoundaryModel::build_default(&p, &r)?;
    for c in [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0] {
        println!("alpha(c_z = {c:5.2}) = {:.6}", bm.alpha_at(c));
    }
    let incident = Incident::ShiftedMaxwellian {
        t_inf: 1.0,
        v_inf: -0.5,
    };
    println!("beta = {:.6}", bm.beta(&incident)?);
    let c: Vec<f64> = (1..=6).map(|k| 0.5 * k as f64).collect();
    let out = bm.apply_first(&incident, &c)?;
    for (c, f) in out.c.iter().zip(&out.f) {
        println!("F_out({c:.1}) = {f:.6}");
    }
    let table = bm.to_table();
    println!("serialized table: {} lines", table.lines().count());
    Ok(())
}
