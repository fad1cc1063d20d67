//! Built-in invariant suite. Every case is small, seeded and free of
//! timings, so two runs with the same seed give byte-identical reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{conformal_invariance_check, gradient_oracle, plane_wave_eigenvalues};
use crate::error::Result;
use crate::fields::{init_map, init_spinor, MapField, MapInit, SpinorInit};
use crate::operators::Model;
use crate::snapshot::{fields_from_csv, fields_to_csv};
use crate::solver::solve_spinor;
use crate::surface::{CliffordRep, ConformalFactor, Lattice, SpinStructure};
use crate::target::{MagneticData, TargetManifold};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestCase {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub cases: Vec<SelftestCase>,
    pub passed: bool,
}

fn case(name: &str, value: f64, tolerance: f64) -> SelftestCase {
    SelftestCase {
        name: name.into(),
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

fn random_sphere_points(rng: &mut ChaCha8Rng, q: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r > 0.1 && r <= 1.0 {
                break v.into_iter().map(|x| x / r).collect();
            }
        })
        .collect()
}

/// Random smooth map into `S²` with a random tangent spinor on a 16×16 torus.
fn sphere_fields(model: &Model, seed: u64) -> Result<(MapField, crate::SpinorField)> {
    let map = MapInit::RandomSmooth {
        point: vec![0.0, 0.0, 1.0],
        amplitude: 0.8,
        cutoff: 3,
    };
    let phi = init_map(&map, &model.lattice, &model.target, seed)?;
    let sp = SpinorInit::RandomSmooth {
        amplitude: 1.0,
        cutoff: 3,
    };
    let psi = init_spinor(
        &sp,
        &model.lattice,
        &phi,
        &model.target,
        model.spin,
        seed ^ 1,
    )?;
    Ok((phi, psi))
}

pub fn run_selftest(seed: u64) -> Result<SelftestReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();

    let c = CliffordRep::standard();
    cases.push(case(
        "clifford-relations",
        c.anticommutator_defect().max(c.skew_hermitian_defect()),
        1e-12,
    ));

    let s3 = random_sphere_points(&mut rng, 4, 200);
    let r3: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let skew = MagneticData::sphere_volume(0.7)
        .check_skew(&s3)
        .max(MagneticData::h_surface(1.0).check_skew(&r3));
    cases.push(case("magnetic-skew", skew, 1e-10));

    let s2 = TargetManifold::sphere(2)?;
    let model = Model::new(Lattice::square_torus(16)?, s2);
    let (phi, psi) = sphere_fields(&model, seed)?;
    let a = model.riviere_connection(&phi, &psi)?;
    cases.push(case("riviere-skew", a.skew_defect(), 1e-10));

    let probes = gradient_oracle(&model, &phi, &psi, 60, 1e-5, seed)?;
    let worst = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    cases.push(case("gradient-oracle-sphere", worst, 1e-6));

    let h = Model::new(Lattice::square_torus(16)?, TargetManifold::flat(3)?)
        .with_magnetic(MagneticData::h_surface(1.0));
    let flat_phi = MapField::from_fn(&h.lattice, 3, |x, y| {
        vec![x.cos() + 0.3 * y.sin(), y.cos(), (x + y).sin()]
    });
    let flat_psi = crate::SpinorField::zeros(&h.lattice, 3);
    let probes = gradient_oracle(&h, &flat_phi, &flat_psi, 60, 1e-4, seed)?;
    let worst = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    cases.push(case("gradient-oracle-h-surface", worst, 1e-6));

    let mut pw_err = 0.0f64;
    for spin in SpinStructure::all_torus() {
        let m =
            Model::new(Lattice::torus(16, 16, 2.0, 3.0)?, TargetManifold::flat(2)?).with_spin(spin);
        for k in [[0, 0], [1, 2], [-3, 1], [5, -7]] {
            let pw = plane_wave_eigenvalues(&m, k)?;
            let kn = pw.k[0].hypot(pw.k[1]);
            pw_err = pw_err
                .max(pw.leakage)
                .max((pw.eigenvalues[0] + kn).abs())
                .max((pw.eigenvalues[1] - kn).abs());
        }
    }
    cases.push(case("plane-wave-symbol", pw_err, 1e-10));

    for spin in SpinStructure::all_torus() {
        let m = Model::new(Lattice::square_torus(8)?, s2).with_spin(spin);
        let constant = MapField::constant(&m.lattice, &[0.0, 0.6, 0.8]);
        let spec = solve_spinor(&m, &constant, 6, 1e-6, 500, seed, None)?;
        let expected = if spin.is_trivial() { 4 } else { 0 };
        let name = format!(
            "kernel-{}-{}",
            phase_tag(spin.phase1),
            phase_tag(spin.phase2)
        );
        cases.push(case(
            &name,
            spec.kernel_dim().abs_diff(expected) as f64,
            0.0,
        ));
    }

    let u = ConformalFactor::from_fn(&model.lattice, |x, y| 0.3 * x.sin() * y.sin());
    let cc = conformal_invariance_check(&model, &phi, &psi, &u)?;
    let identical = cc.dirichlet_identical && cc.magnetic_identical;
    cases.push(case(
        "conformal-map-energy-identical",
        if identical { 0.0 } else { 1.0 },
        0.0,
    ));

    let text = fields_to_csv(&model.lattice, &phi, &psi)?;
    let (phi2, psi2) = fields_from_csv(&text, &model.lattice, &s2)?;
    let same = phi
        .values
        .iter()
        .zip(&phi2.values)
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && psi
            .values
            .iter()
            .zip(&psi2.values)
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
    cases.push(case(
        "snapshot-round-trip",
        if same { 0.0 } else { 1.0 },
        0.0,
    ));

    let passed = cases.iter().all(|c| c.passed);
    Ok(SelftestReport {
        seed,
        cases,
        passed,
    })
}

fn phase_tag(p: crate::BoundaryPhase) -> &'static str {
    match p {
        crate::BoundaryPhase::Periodic => "p",
        crate::BoundaryPhase::Antiperiodic => "a",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes_and_is_reproducible() {
        let a = run_selftest(7).unwrap();
        for c in &a.cases {
            assert!(c.passed, "{c:?}");
        }
        let b = run_selftest(7).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
