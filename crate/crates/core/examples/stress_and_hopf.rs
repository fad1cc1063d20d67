//! Energy-momentum tensor and Hopf differential on a coupled solution.
//!
//! The degree-2 elliptic map `T² → S²` is harmonic and conformal. Paired
//! with `ψ = γ₁ε ⊗ φ_x + γ₂ε ⊗ φ_y` for a constant spinor `ε`, it solves the
//! coupled system. The stress tensor is then symmetric, traceless and
//! divergence-free, and its Hopf differential is holomorphic. Random fields
//! of the same energy violate all four by many orders of magnitude.

use magdirac::diagnostics::{dbar_norm, hopf, stress_divergence, stress_tensor};
use magdirac::fields::reference::{elliptic_lattice, elliptic_map};
use magdirac::fields::{init_map, init_spinor, MapInit, SpinorInit};
use magdirac::solver::{solve_coupled, SolveConfig, SolveMode};
use magdirac::{CliffordRep, Complex64, MapField, Model, Result, SpinorField, TargetManifold};

fn dphi_spinor(model: &Model, phi: &MapField) -> Result<SpinorField> {
    let [dx, dy] = model.dphi_tangent(phi)?;
    let c = CliffordRep::standard();
    let eps = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
    let (g1, g2) = (c.apply(0, &eps), c.apply(1, &eps));
    let mut values = Vec::with_capacity(phi.values.len() * 2);
    for (x, y) in dx.iter().zip(&dy) {
        values.push(g1[0] * x + g2[0] * y);
        values.push(g1[1] * x + g2[1] * y);
    }
    Ok(SpinorField { q: phi.q, values })
}

fn report(label: &str, model: &Model, phi: &MapField, psi: &SpinorField) -> Result<()> {
    let t = stress_tensor(model, phi, psi)?;
    let div = stress_divergence(model, &t)?;
    let (dbar, _) = dbar_norm(model, &hopf(&t))?;
    println!(
        "{label:>8}: trace {:.2e}  skew {:.2e}  div {div:.2e}  dbar {dbar:.2e}",
        t.trace_norm(&model.lattice),
        t.skew_norm(&model.lattice)
    );
    Ok(())
}

pub fn run_example() -> Result<()> {
    let model = Model::new(elliptic_lattice(40)?, TargetManifold::sphere(2)?);
    let cfg = SolveConfig {
        mode: SolveMode::MapOnly,
        tol_map: 1e-9,
        ..Default::default()
    };
    let phi0 = MapField::from_fn(&model.lattice, 3, elliptic_map);
    let (phi, _, rep) =
        solve_coupled(&model, phi0, SpinorField::zeros(&model.lattice, 3), &cfg, 1)?;
    let psi = dphi_spinor(&model, &phi)?;
    let (_, rm) = model.el_residual_map(&phi, &psi)?;
    let (_, rs) = model.el_residual_spinor(&phi, &psi)?;
    println!(
        "{:?}: Dirichlet energy {:.6} (8π = {:.6}), map residual {rm:.2e}, |D psi| {rs:.2e}",
        rep.status,
        rep.energy.dirichlet,
        8.0 * std::f64::consts::PI
    );
    report("solution", &model, &phi, &psi)?;

    let init = MapInit::RandomSmooth {
        point: vec![0.0, 0.0, 1.0],
        amplitude: 1.5,
        cutoff: 4,
    };
    let rphi = init_map(&init, &model.lattice, &model.target, 5)?;
    let sp = SpinorInit::RandomSmooth {
        amplitude: 1.0,
        cutoff: 4,
    };
    let rpsi = init_spinor(&sp, &model.lattice, &rphi, &model.target, model.spin, 6)?;
    println!(
        "random fields, Dirichlet energy {:.3}",
        model.dirichlet_energy(&rphi, None)?
    );
    report("random", &model, &rphi, &rpsi)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example()
}
