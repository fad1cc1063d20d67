//! Rivière's skew form. The map equation can be written as
//! `−Δφ = A·∇φ` with `A` an antisymmetric matrix of one-forms built from
//! the second fundamental form, the magnetic term and the spinor. The
//! example checks skewness and reproduces the ambient equation.

use magdirac::fields::{init_map, init_spinor, MapInit, SpinorInit};
use magdirac::{Lattice, MagneticData, Model, Result, TargetManifold};

pub fn run_example() -> Result<()> {
    let model = Model::new(Lattice::square_torus(32)?, TargetManifold::sphere(3)?)
        .with_magnetic(MagneticData::sphere_volume(0.4));
    let init = MapInit::RandomSmooth {
        point: vec![0.0, 0.0, 0.0, 1.0],
        amplitude: 0.5,
        cutoff: 2,
    };
    let phi = init_map(&init, &model.lattice, &model.target, 2)?;
    let sp = SpinorInit::RandomSmooth {
        amplitude: 1.0,
        cutoff: 2,
    };
    let psi = init_spinor(&sp, &model.lattice, &phi, &model.target, model.spin, 3)?;

    let a = model.riviere_connection(&phi, &psi)?;
    let [dx, dy] = model.dphi_tangent(&phi)?;
    let lap = model.lattice.laplacian(&phi.values, 4, model.scheme)?;
    let a_grad = a.apply(&dx, &dy);
    let amb = model.ambient_residual(&phi, &psi)?;
    // −Δφ − A·∇φ against the ambient residual.
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..lap.len() {
        worst = worst.max((-lap[i] - a_grad[i] - amb[i]).abs());
        scale = scale.max(lap[i].abs());
    }
    println!("skew defect max |A^m_i + A^i_m| = {:.2e}", a.skew_defect());
    println!("|-Δφ - A·∇φ - ambient residual| = {worst:.2e} (|Δφ| up to {scale:.2})");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
