use num_complex::Complex64;

use super::{Axis, CliffordRep, DerivativeScheme, Lattice, SpinStructure};
use crate::error::{Error, Result};

/// Wilson parameter of the stabilised annulus Dirac operator.
pub const WILSON_R: f64 = 1.0;

/// `∂̸ψ = γ₁∂₁ψ + γ₂∂₂ψ` applied to every ambient component of a vector
/// spinor with `q` components (layout `[(site·q + i)·2 + s]`).
///
/// On a torus the boundary phases of `spin` enter the derivative; the
/// spectral scheme keeps the Nyquist wavenumber so that no doublers appear. On an annulus the derivative is the
/// Cartesian central stencil plus the Wilson term `r·h·(−Δ)/2`, which
/// removes doublers at the price of an `O(h)` perturbation.
pub fn dirac_untwisted(
    lattice: &Lattice,
    psi: &[Complex64],
    q: usize,
    spin: SpinStructure,
    scheme: DerivativeScheme,
    clifford: &CliffordRep,
) -> Result<Vec<Complex64>> {
    let ncomp = 2 * q;
    lattice.check_len(psi.len(), ncomp)?;
    let scheme = if lattice.is_torus() {
        scheme
    } else {
        DerivativeScheme::Central
    };
    let [dx, dy] = if lattice.is_torus() && scheme == DerivativeScheme::Spectral {
        [
            lattice.partial_complex_full(psi, ncomp, Axis::X, spin.phase1)?,
            lattice.partial_complex_full(psi, ncomp, Axis::Y, spin.phase2)?,
        ]
    } else {
        lattice.cartesian_gradient_complex(psi, ncomp, scheme, spin)?
    };
    let mut out = vec![Complex64::default(); psi.len()];
    for k in (0..psi.len()).step_by(2) {
        let a = clifford.apply(0, &dx[k..k + 2]);
        let b = clifford.apply(1, &dy[k..k + 2]);
        out[k] = a[0] + b[0];
        out[k + 1] = a[1] + b[1];
    }
    if !lattice.is_torus() {
        let lap = lattice.laplacian_complex(psi, ncomp, DerivativeScheme::Central, spin)?;
        let c = 0.5 * WILSON_R * lattice.spacing(Axis::X);
        for (o, l) in out.iter_mut().zip(lap) {
            *o -= l * c;
        }
    }
    Ok(out)
}

/// Dirac operator of the conformal metric `e^{2u}δ` in the flat frame:
/// `D_u ψ = e^{−u}(∂̸ψ + ½ γ_α (∂_α u) ψ)`.
pub fn dirac_conformal(
    lattice: &Lattice,
    psi: &[Complex64],
    q: usize,
    u: &[f64],
    spin: SpinStructure,
    scheme: DerivativeScheme,
    clifford: &CliffordRep,
) -> Result<Vec<Complex64>> {
    lattice.check_len(u.len(), 1)?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "conformal factor is not finite".into(),
        ));
    }
    let mut out = dirac_untwisted(lattice, psi, q, spin, scheme, clifford)?;
    let [ux, uy] = lattice.cartesian_gradient(u, 1, scheme)?;
    for s in 0..lattice.len() {
        let damp = (-u[s]).exp();
        for i in 0..q {
            let k = (s * q + i) * 2;
            let g = clifford.apply_vector([0.5 * ux[s], 0.5 * uy[s]], &psi[k..k + 2]);
            out[k] = (out[k] + g[0]) * damp;
            out[k + 1] = (out[k + 1] + g[1]) * damp;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{spinor_inner, BoundaryPhase};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Band-limited random spinor field built from a few plane waves with the
    /// right boundary phases.
    fn random_spinor(lat: &Lattice, q: usize, spin: SpinStructure, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l1, l2) = lat.lengths().unwrap();
        let shift = |p: BoundaryPhase| {
            if p == BoundaryPhase::Antiperiodic {
                0.5
            } else {
                0.0
            }
        };
        let mut out = vec![Complex64::default(); lat.len() * q * 2];
        for _ in 0..6 {
            let m1 = rng.gen_range(-3i32..=3) as f64 + shift(spin.phase1);
            let m2 = rng.gen_range(-3i32..=3) as f64 + shift(spin.phase2);
            let amp: Vec<Complex64> = (0..2 * q)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            for s in 0..lat.len() {
                let [x, y] = lat.coords(s);
                let ph = Complex64::from_polar(1.0, 2.0 * PI * (m1 * x / l1 + m2 * y / l2));
                for c in 0..2 * q {
                    out[s * 2 * q + c] += amp[c] * ph;
                }
            }
        }
        out
    }

    fn l2(lat: &Lattice, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let w = lat.cell_weights();
        let per = a.len() / lat.len();
        (0..lat.len())
            .map(|s| spinor_inner(&a[s * per..(s + 1) * per], &b[s * per..(s + 1) * per]) * w[s])
            .sum()
    }

    #[test]
    fn constant_spinor_is_harmonic_on_periodic_torus() {
        let lat = Lattice::square_torus(16).unwrap();
        let psi = vec![Complex64::new(0.3, -1.2); lat.len() * 4];
        let d = dirac_untwisted(
            &lat,
            &psi,
            2,
            SpinStructure::PERIODIC,
            DerivativeScheme::Spectral,
            &CliffordRep::standard(),
        )
        .unwrap();
        assert!(d.iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn dirac_squares_to_minus_laplacian() {
        let lat = Lattice::torus(16, 16, 2.0 * PI, 5.0).unwrap();
        let c = CliffordRep::standard();
        for (i, spin) in SpinStructure::all_torus().into_iter().enumerate() {
            let psi = random_spinor(&lat, 2, spin, 11 + i as u64);
            let d = dirac_untwisted(&lat, &psi, 2, spin, DerivativeScheme::Spectral, &c).unwrap();
            let dd = dirac_untwisted(&lat, &d, 2, spin, DerivativeScheme::Spectral, &c).unwrap();
            let lap = lat
                .laplacian_complex(&psi, 4, DerivativeScheme::Spectral, spin)
                .unwrap();
            let scale = lap.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (a, b) in dd.iter().zip(&lap) {
                assert!((a + b).norm() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn spectral_dirac_is_symmetric_in_l2() {
        let lat = Lattice::square_torus(16).unwrap();
        let c = CliffordRep::standard();
        let spin = SpinStructure::new(BoundaryPhase::Periodic, BoundaryPhase::Antiperiodic);
        let chi = random_spinor(&lat, 1, spin, 1);
        let psi = random_spinor(&lat, 1, spin, 2);
        let dpsi = dirac_untwisted(&lat, &psi, 1, spin, DerivativeScheme::Spectral, &c).unwrap();
        let dchi = dirac_untwisted(&lat, &chi, 1, spin, DerivativeScheme::Spectral, &c).unwrap();
        let lhs = l2(&lat, &chi, &dpsi);
        let rhs = l2(&lat, &dchi, &psi);
        assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn plane_wave_is_eigen_for_symbol() {
        let lat = Lattice::square_torus(16).unwrap();
        let c = CliffordRep::standard();
        let k = [2.0, -1.0];
        let ev = c.symbol_eigenvalues(k);
        // Eigenvector of i(γ·k) for +|k|: solve the 2×2 system by hand.
        let i = Complex64::new(0.0, 1.0);
        let m01 = i * (c.gamma[0][0][1] * k[0] + c.gamma[1][0][1] * k[1]);
        let m00 = i * (c.gamma[0][0][0] * k[0] + c.gamma[1][0][0] * k[1]);
        let u = [m01, Complex64::new(ev[1], 0.0) - m00];
        let psi: Vec<Complex64> = (0..lat.len())
            .flat_map(|s| {
                let [x, y] = lat.coords(s);
                let ph = Complex64::from_polar(1.0, k[0] * x + k[1] * y);
                [u[0] * ph, u[1] * ph]
            })
            .collect();
        let d = dirac_untwisted(
            &lat,
            &psi,
            1,
            SpinStructure::PERIODIC,
            DerivativeScheme::Spectral,
            &c,
        )
        .unwrap();
        for (a, b) in d.iter().zip(&psi) {
            assert!((a - b * ev[1]).norm() < 1e-11);
        }
    }

    #[test]
    fn conformal_dirac_with_zero_factor_is_flat() {
        let lat = Lattice::square_torus(16).unwrap();
        let c = CliffordRep::standard();
        let psi = random_spinor(&lat, 1, SpinStructure::PERIODIC, 5);
        let u = vec![0.0; lat.len()];
        let a = dirac_untwisted(
            &lat,
            &psi,
            1,
            SpinStructure::PERIODIC,
            DerivativeScheme::Central,
            &c,
        )
        .unwrap();
        let b = dirac_conformal(
            &lat,
            &psi,
            1,
            &u,
            SpinStructure::PERIODIC,
            DerivativeScheme::Central,
            &c,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn annulus_dirac_annihilates_constants_in_the_interior() {
        let lat = Lattice::annulus(16, 32, 0.2, 1.0).unwrap();
        let psi = vec![Complex64::new(1.0, 0.5); lat.len() * 2];
        let d = dirac_untwisted(
            &lat,
            &psi,
            1,
            SpinStructure::PERIODIC,
            DerivativeScheme::Central,
            &CliffordRep::standard(),
        )
        .unwrap();
        assert!(d.iter().all(|v| v.norm() < 1e-12));
    }
}
