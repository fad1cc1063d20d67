use num_complex::Complex64;

/// A single two-component spinor.
pub type Spinor = [Complex64; 2];

/// Hermitian pairing `⟨a, b⟩ = Σ conj(a_s) b_s`.
#[inline]
pub fn spinor_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Matrices representing Clifford multiplication by `e₁` and `e₂` on the
/// two-dimensional spinor module.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordRep {
    pub gamma: [[[Complex64; 2]; 2]; 2],
}

impl Default for CliffordRep {
    fn default() -> Self {
        Self::standard()
    }
}

impl CliffordRep {
    /// `γ₁ = iσ₁`, `γ₂ = iσ₂`.
    pub fn standard() -> Self {
        let z = Complex64::new(0.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        Self {
            gamma: [[[z, i], [i, z]], [[z, one], [-one, z]]],
        }
    }

    #[inline]
    pub fn apply(&self, alpha: usize, s: &[Complex64]) -> Spinor {
        let g = &self.gamma[alpha];
        [
            g[0][0] * s[0] + g[0][1] * s[1],
            g[1][0] * s[0] + g[1][1] * s[1],
        ]
    }

    /// Clifford multiplication by the tangent vector `(v₁, v₂)`.
    #[inline]
    pub fn apply_vector(&self, v: [f64; 2], s: &[Complex64]) -> Spinor {
        let a = self.apply(0, s);
        let b = self.apply(1, s);
        [a[0] * v[0] + b[0] * v[1], a[1] * v[0] + b[1] * v[1]]
    }

    /// Largest entry of `γ_α γ_β + γ_β γ_α + 2δ_{αβ}`.
    pub fn anticommutator_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..2 {
            for b in 0..2 {
                let (ga, gb) = (&self.gamma[a], &self.gamma[b]);
                for r in 0..2 {
                    for c in 0..2 {
                        let mut v = Complex64::new(0.0, 0.0);
                        for k in 0..2 {
                            v += ga[r][k] * gb[k][c] + gb[r][k] * ga[k][c];
                        }
                        if a == b && r == c {
                            v += 2.0;
                        }
                        worst = worst.max(v.norm());
                    }
                }
            }
        }
        worst
    }

    /// Largest entry of `γ_α† + γ_α`.
    pub fn skew_hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for g in &self.gamma {
            for r in 0..2 {
                for c in 0..2 {
                    worst = worst.max((g[c][r].conj() + g[r][c]).norm());
                }
            }
        }
        worst
    }

    /// Eigenvalues of the plane-wave symbol `i(γ₁k₁ + γ₂k₂)`, ascending.
    pub fn symbol_eigenvalues(&self, k: [f64; 2]) -> [f64; 2] {
        let i = Complex64::new(0.0, 1.0);
        let m = |r: usize, c: usize| i * (self.gamma[0][r][c] * k[0] + self.gamma[1][r][c] * k[1]);
        // Hermitian 2×2: eigenvalues from trace and determinant.
        let tr = (m(0, 0) + m(1, 1)).re;
        let det = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)).re;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        [tr / 2.0 - disc, tr / 2.0 + disc]
    }
}
