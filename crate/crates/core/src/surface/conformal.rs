use num_complex::Complex64;

use super::Lattice;
use crate::error::{Error, Result};

/// Exponent `u` of a conformal metric `e^{2u}δ`, one value per site.
#[derive(Clone, Debug, PartialEq)]
pub struct ConformalFactor {
    pub u: Vec<f64>,
}

impl ConformalFactor {
    pub fn flat(lattice: &Lattice) -> Self {
        Self {
            u: vec![0.0; lattice.len()],
        }
    }

    pub fn from_fn(lattice: &Lattice, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            u: (0..lattice.len())
                .map(|s| {
                    let [x, y] = lattice.coords(s);
                    f(x, y)
                })
                .collect(),
        }
    }

    pub fn is_flat(&self) -> bool {
        self.u.iter().all(|&v| v == 0.0)
    }

    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        lattice.check_len(self.u.len(), 1)?;
        if let Some(s) = self.u.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "conformal factor not finite at site {s}"
            )));
        }
        Ok(())
    }
}

/// Volume weights `e^{2u}·w` of the conformal metric and the rescaled spinor
/// `e^{−u/2}ψ` (layout `[(site·q + i)·2 + s]`).
pub fn conformal_rescale(
    lattice: &Lattice,
    u: &ConformalFactor,
    psi: &[Complex64],
) -> Result<(Vec<f64>, Vec<Complex64>)> {
    u.validate(lattice)?;
    if !psi.len().is_multiple_of(2 * lattice.len()) {
        return Err(Error::ShapeMismatch {
            expected: 2 * lattice.len(),
            actual: psi.len(),
        });
    }
    let per_site = psi.len() / lattice.len();
    let weights = lattice
        .cell_weights()
        .into_iter()
        .zip(&u.u)
        .map(|(w, &v)| w * (2.0 * v).exp())
        .collect();
    let mut scaled = psi.to_vec();
    for (s, chunk) in scaled.chunks_mut(per_site.max(1)).enumerate() {
        let f = (-0.5 * u.u[s]).exp();
        chunk.iter_mut().for_each(|v| *v *= f);
    }
    Ok((weights, scaled))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_factor_is_identity() {
        let lat = Lattice::square_torus(8).unwrap();
        let psi: Vec<Complex64> = (0..lat.len() * 4)
            .map(|i| Complex64::new(i as f64, 1.0))
            .collect();
        let (w, p) = conformal_rescale(&lat, &ConformalFactor::flat(&lat), &psi).unwrap();
        assert_eq!(w, lat.cell_weights());
        assert_eq!(p, psi);
    }

    #[test]
    fn constant_factor_scales_uniformly() {
        let lat = Lattice::square_torus(8).unwrap();
        let c = 0.7;
        let u = ConformalFactor {
            u: vec![c; lat.len()],
        };
        let psi = vec![Complex64::new(1.0, -2.0); lat.len() * 2];
        let (w, p) = conformal_rescale(&lat, &u, &psi).unwrap();
        let w0 = lat.cell_weights()[0];
        assert!(w.iter().all(|&v| (v - w0 * (2.0 * c).exp()).abs() < 1e-15));
        let f = (-c / 2.0).exp();
        assert!(p.iter().all(|v| (v - psi[0] * f).norm() < 1e-15));
    }

    #[test]
    fn nan_factor_is_rejected() {
        let lat = Lattice::square_torus(8).unwrap();
        let mut u = ConformalFactor::flat(&lat);
        u.u[3] = f64::NAN;
        assert!(conformal_rescale(&lat, &u, &vec![Complex64::default(); lat.len() * 2]).is_err());
    }
}
