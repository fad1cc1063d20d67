//! Clifford-type tori in `S³`. The flat torus `(a e^{ix/a}, b e^{iy/b})`
//! has constant mean curvature, so it solves the magnetic map equation for
//! `Ω = λ vol` with one specific `λ(a)`. The minimal torus `a = 1/√2` is
//! harmonic and needs no field.

use magdirac::fields::reference::{
    clifford_torus_lambda, clifford_torus_lattice, clifford_torus_map,
};
use magdirac::{MagneticData, Model, Result, SpinorField, TargetManifold};

pub fn run_example() -> Result<()> {
    for a in [0.5f64.sqrt(), 0.6, 0.8] {
        let lattice = clifford_torus_lattice(a, 16, 16)?;
        let phi = clifford_torus_map(&lattice, a);
        let lambda = clifford_torus_lambda(a);
        let psi = SpinorField::zeros(&lattice, 4);
        let solved = Model::new(lattice.clone(), TargetManifold::sphere(3)?)
            .with_magnetic(MagneticData::sphere_volume(lambda));
        let (_, r) = solved.el_residual_map(&phi, &psi)?;
        let unforced = Model::new(lattice, TargetManifold::sphere(3)?);
        let (_, r0) = unforced.el_residual_map(&phi, &psi)?;
        println!("a = {a:.4}: lambda = {lambda:+.6}, residual {r:.2e} (without field {r0:.2e})");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
