//! Closed-form solutions used as manufactured references.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::MapField;
use crate::error::Result;
use crate::surface::Lattice;

/// Inverse stereographic projection of the plane onto the unit sphere,
/// `(2x, 2y, |z|² − 1)/(1 + |z|²)`. It is conformal and satisfies the
/// H-surface system `Δφ = 2H φ_x × φ_y` with `H = 1`.
pub fn stereographic_sphere(x: f64, y: f64) -> Vec<f64> {
    let r2 = x * x + y * y;
    let d = 1.0 + r2;
    vec![2.0 * x / d, 2.0 * y / d, (r2 - 1.0) / d]
}

/// Same as [`stereographic_sphere`] with a complex argument.
pub fn stereographic_from_complex(w: Complex64) -> Vec<f64> {
    stereographic_sphere(w.re, w.im)
}

/// Torus on which the Clifford-type map of parameter `a ∈ (0, 1)` is
/// periodic: `L₁ = 2πa`, `L₂ = 2πb`, `b = √(1 − a²)`.
pub fn clifford_torus_lattice(a: f64, n1: usize, n2: usize) -> Result<Lattice> {
    let b = (1.0 - a * a).sqrt();
    Lattice::torus(n1, n2, 2.0 * PI * a, 2.0 * PI * b)
}

/// `φ = (a cos(x/a), a sin(x/a), b cos(y/b), b sin(y/b))`, a conformal
/// embedding of the flat torus into `S³` with constant mean curvature.
pub fn clifford_torus_map(lattice: &Lattice, a: f64) -> MapField {
    let b = (1.0 - a * a).sqrt();
    MapField::from_fn(lattice, 4, |x, y| {
        vec![
            a * (x / a).cos(),
            a * (x / a).sin(),
            b * (y / b).cos(),
            b * (y / b).sin(),
        ]
    })
}

/// Strength `λ` for which the Clifford-type torus of parameter `a` solves
/// `τ(φ) = Z(φ_x ∧ φ_y)` with `Ω = λ·vol_{S³}` and `ψ = 0`. The tension is
/// `(2a² − 1)/(ab)` times the unit normal `(b cos, b sin, −a cos, −a sin)`,
/// and `Z(φ_x∧φ_y) = λ` times the same normal.
pub fn clifford_torus_lambda(a: f64) -> f64 {
    let b = (1.0 - a * a).sqrt();
    (2.0 * a * a - 1.0) / (a * b)
}

/// Jacobi theta function `θ₁(z | τ)` for nome `q = e^{iπτ}`, real `0 < q < 1`.
pub fn theta1(z: Complex64, nome: f64) -> Complex64 {
    let mut sum = Complex64::default();
    for n in 0..12 {
        let e = (n as f64 + 0.5).powi(2);
        let c = nome.powf(e);
        if c < 1e-30 {
            break;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += (z * (2 * n + 1) as f64).sin() * (2.0 * sign * c);
    }
    sum
}

/// Zeros and poles of the degree-two elliptic function used by
/// [`elliptic_map`]; the zeros and the poles have equal sums.
pub const ELLIPTIC_ZEROS: [(f64, f64); 2] = [(0.5, 0.4), (2.2, 1.9)];
pub const ELLIPTIC_POLES: [(f64, f64); 2] = [(1.6, 0.5), (1.1, 1.8)];

/// Degree-two elliptic function on the square torus of side `π`:
/// `f = θ₁(z−a₁)θ₁(z−a₂) / (θ₁(z−b₁)θ₁(z−b₂))` with `τ = i`.
pub fn elliptic_function(x: f64, y: f64) -> Complex64 {
    let z = Complex64::new(x, y);
    let nome = (-PI).exp();
    let c = |p: (f64, f64)| Complex64::new(p.0, p.1);
    let num = theta1(z - c(ELLIPTIC_ZEROS[0]), nome) * theta1(z - c(ELLIPTIC_ZEROS[1]), nome);
    let den = theta1(z - c(ELLIPTIC_POLES[0]), nome) * theta1(z - c(ELLIPTIC_POLES[1]), nome);
    num / den
}

/// A harmonic, conformal, non-homogeneous map of degree two from the
/// square torus of side `π` to `S²`: stereographic lift of
/// [`elliptic_function`]. Values at poles go to the north pole.
pub fn elliptic_map(x: f64, y: f64) -> Vec<f64> {
    let z = Complex64::new(x, y);
    let nome = (-PI).exp();
    let c = |p: (f64, f64)| Complex64::new(p.0, p.1);
    let num = theta1(z - c(ELLIPTIC_ZEROS[0]), nome) * theta1(z - c(ELLIPTIC_ZEROS[1]), nome);
    let den = theta1(z - c(ELLIPTIC_POLES[0]), nome) * theta1(z - c(ELLIPTIC_POLES[1]), nome);
    // Evaluate as the ratio num/den without dividing, so poles are harmless.
    let (n2, d2) = (num.norm_sqr(), den.norm_sqr());
    let cross = num * den.conj();
    let s = n2 + d2;
    vec![2.0 * cross.re / s, 2.0 * cross.im / s, (n2 - d2) / s]
}

pub fn elliptic_lattice(n: usize) -> Result<Lattice> {
    Lattice::torus(n, n, PI, PI)
}

/// `(x, y, xy)`, a harmonic map from the plane into `R³`.
pub fn harmonic_polynomial(x: f64, y: f64) -> Vec<f64> {
    vec![x, y, x * y]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elliptic_function_is_doubly_periodic() {
        for (x, y) in [(0.3, 0.7), (1.9, 2.5), (2.9, 0.1)] {
            let f = elliptic_function(x, y);
            assert!((elliptic_function(x + PI, y) - f).norm() < 1e-11 * (1.0 + f.norm()));
            assert!((elliptic_function(x, y + PI) - f).norm() < 1e-11 * (1.0 + f.norm()));
        }
        let p = elliptic_map(0.3, 0.7);
        assert!((p.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn clifford_torus_lambda_vanishes_at_minimal_torus() {
        assert!(clifford_torus_lambda(0.5f64.sqrt()).abs() < 1e-15);
        assert!(clifford_torus_lambda(0.6) < 0.0 && clifford_torus_lambda(0.8) > 0.0);
    }
}
