//! Twisted-Dirac spectra on flat data.
//!
//! A plane wave `e^{ik·x}ε` is an eigenvector of the lattice Dirac operator
//! with eigenvalues `±|k|`; the allowed `k` are shifted by half a period on
//! antiperiodic cycles. For a constant map into `S²` only the
//! periodic-periodic structure has a kernel, of dimension `2·dim N`.

use magdirac::diagnostics::plane_wave_eigenvalues;
use magdirac::solver::solve_spinor;
use magdirac::{Lattice, MapField, Model, Result, SpinStructure, TargetManifold};

pub fn run_example() -> Result<()> {
    for spin in SpinStructure::all_torus() {
        let model =
            Model::new(Lattice::torus(16, 16, 2.0, 3.0)?, TargetManifold::flat(2)?).with_spin(spin);
        let pw = plane_wave_eigenvalues(&model, [2, -1])?;
        println!(
            "{:?}/{:?}: k = ({:+.4}, {:+.4}), eigenvalues {:+.12} {:+.12}, |k| = {:.12}",
            spin.phase1,
            spin.phase2,
            pw.k[0],
            pw.k[1],
            pw.eigenvalues[0],
            pw.eigenvalues[1],
            pw.k[0].hypot(pw.k[1])
        );
    }

    for spin in SpinStructure::all_torus() {
        let model =
            Model::new(Lattice::square_torus(8)?, TargetManifold::sphere(2)?).with_spin(spin);
        let phi = MapField::constant(&model.lattice, &[0.0, 0.6, 0.8]);
        let spec = solve_spinor(&model, &phi, 6, 1e-8, 500, 1, None)?;
        let low: Vec<String> = spec
            .eigenvalues
            .iter()
            .map(|l| format!("{l:+.3e}"))
            .collect();
        println!(
            "constant map, {:?}/{:?}: kernel {} [{}]",
            spin.phase1,
            spin.phase2,
            spec.kernel_dim(),
            low.join(" ")
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
