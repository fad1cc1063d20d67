//! Checks the analytic Euler-Lagrange residuals against central finite
//! differences of the discrete energy, probing random tangent directions.
//! A model whose force has the wrong sign is caught at once.

use magdirac::diagnostics::{gradient_oracle, gradient_oracle_against};
use magdirac::fields::{init_map, init_spinor, MapInit, SpinorInit};
use magdirac::{Lattice, MagneticData, Model, Result, TargetManifold};

pub fn run_example() -> Result<()> {
    let model = Model::new(Lattice::square_torus(32)?, TargetManifold::sphere(3)?)
        .with_magnetic(MagneticData::sphere_volume(0.6));
    let init = MapInit::RandomSmooth {
        point: vec![0.0, 0.0, 0.0, 1.0],
        amplitude: 0.3,
        cutoff: 1,
    };
    let phi = init_map(&init, &model.lattice, &model.target, 6)?;
    let sp = SpinorInit::RandomSmooth {
        amplitude: 1.0,
        cutoff: 1,
    };
    let psi = init_spinor(&sp, &model.lattice, &phi, &model.target, model.spin, 7)?;

    let probes = gradient_oracle(&model, &phi, &psi, 200, 1e-4, 9)?;
    let (maps, spinors): (Vec<_>, Vec<_>) = probes.iter().partition(|p| !p.spinor);
    let worst =
        |v: &[&magdirac::diagnostics::Probe]| v.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    println!(
        "{} map probes, worst {:.2e}; {} spinor probes, worst {:.2e}",
        maps.len(),
        worst(&maps),
        spinors.len(),
        worst(&spinors)
    );
    for p in probes.iter().take(4) {
        println!(
            "  site {:4} {}: analytic {:+.9e}  finite difference {:+.9e}",
            p.site,
            if p.spinor { "spinor" } else { "map   " },
            p.analytic,
            p.finite_difference
        );
    }

    let flipped = Model {
        magnetic: MagneticData::sphere_volume(-0.6),
        ..model.clone()
    };
    let bad = gradient_oracle_against(&model, &flipped, &phi, &psi, 200, 1e-4, 9)?;
    println!(
        "flipped force: worst {:.2e}",
        bad.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
