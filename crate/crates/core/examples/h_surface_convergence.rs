//! Manufactured H-surface: the inverse stereographic projection is a unit
//! sphere, so it solves `Δφ = 2φ_x × φ_y` in `R³`. On an annulus with the
//! five-point polar stencil the sampled map leaves a residual of order h².

use magdirac::fields::reference::stereographic_sphere;
use magdirac::{Lattice, MagneticData, MapField, Model, Result, SpinorField, TargetManifold};

pub fn run_example() -> Result<()> {
    let mut prev: Option<f64> = None;
    for n in [16usize, 32, 64] {
        let model = Model::new(
            Lattice::annulus(n, 2 * n, 0.2, 0.8)?,
            TargetManifold::flat(3)?,
        )
        .with_magnetic(MagneticData::h_surface(1.0));
        let phi = MapField::from_fn(&model.lattice, 3, stereographic_sphere);
        let (_, r) = model.el_residual_map(&phi, &SpinorField::zeros(&model.lattice, 3))?;
        match prev {
            Some(p) => println!("n = {n:3}: residual {r:.3e}, order {:.2}", (p / r).log2()),
            None => println!("n = {n:3}: residual {r:.3e}"),
        }
        prev = Some(r);
    }

    // A wrong mean curvature is visible at once.
    let model = Model::new(
        Lattice::annulus(32, 64, 0.2, 0.8)?,
        TargetManifold::flat(3)?,
    )
    .with_magnetic(MagneticData::h_surface(0.5));
    let phi = MapField::from_fn(&model.lattice, 3, stereographic_sphere);
    let (_, r) = model.el_residual_map(&phi, &SpinorField::zeros(&model.lattice, 3))?;
    println!("H = 0.5 instead of 1: residual {r:.3e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
