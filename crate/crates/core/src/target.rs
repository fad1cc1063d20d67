//! Embedded targets `N ⊂ R^q` and magnetic three-forms on them.
//!
//! Everything is closed form: the unit sphere has normal `ν(y) = y/|y|`,
//! tangent projector `I − ννᵀ` and normal Jacobian `(I − ννᵀ)/|y|`. The
//! second fundamental form is `II(X, Y) = Σ_l ⟨X, ∂_Y ν_l⟩ ν_l` and the shape
//! operator is its dual, `⟨P(ξ, X), Y⟩ = ⟨II(X, Y), ξ⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance from `N` beyond which a point is reported as off the manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetManifold {
    /// Euclidean `R^q`.
    Flat { q: usize },
    /// Unit sphere `S^n ⊂ R^{n+1}`.
    Sphere { n: usize },
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl TargetManifold {
    pub fn flat(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(format!(
                "flat target needs q ≥ 2, got {q}"
            )));
        }
        Ok(Self::Flat { q })
    }

    pub fn sphere(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidArgument("sphere target needs n ≥ 1".into()));
        }
        Ok(Self::Sphere { n })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Flat { q } => Self::flat(q).map(|_| ()),
            Self::Sphere { n } => Self::sphere(n).map(|_| ()),
        }
    }

    /// Ambient dimension `q`.
    pub fn q(&self) -> usize {
        match *self {
            Self::Flat { q } => q,
            Self::Sphere { n } => n + 1,
        }
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Self::Flat { q } => q,
            Self::Sphere { n } => n,
        }
    }

    pub fn codim(&self) -> usize {
        self.q() - self.dim()
    }

    /// Compact targets satisfy the standing assumptions of the model; flat
    /// space is admitted but flagged.
    pub fn is_compact(&self) -> bool {
        matches!(self, Self::Sphere { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Flat { q } => format!("R^{q}"),
            Self::Sphere { n } => format!("S^{n}"),
        }
    }

    /// Nearest-point projection onto `N`.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = y.to_vec();
        self.project_in_place(&mut out)
            .map_err(|reason| Error::ProjectionDomain { site: 0, reason })?;
        Ok(out)
    }

    pub(crate) fn project_in_place(&self, y: &mut [f64]) -> std::result::Result<(), String> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err("value is not finite".into());
        }
        if let Self::Sphere { .. } = self {
            let r = norm(y);
            if r < 1e-150 {
                return Err("radial projection undefined at the origin".into());
            }
            y.iter_mut().for_each(|v| *v /= r);
        }
        Ok(())
    }

    /// `|y − project(y)|`; infinite where the projection is undefined.
    pub fn distance(&self, y: &[f64]) -> f64 {
        match self {
            Self::Flat { .. } => 0.0,
            Self::Sphere { .. } => (norm(y) - 1.0).abs(),
        }
    }

    pub fn check_on(&self, y: &[f64], site: usize) -> Result<()> {
        let d = self.distance(y);
        // Negated so that a NaN distance is rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(d <= ON_MANIFOLD_TOL) {
            return Err(Error::OffManifold { site, distance: d });
        }
        Ok(())
    }

    /// Orthonormal frame of the normal space at `y`.
    pub fn normal_frame(&self, y: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Self::Flat { .. } => Vec::new(),
            Self::Sphere { .. } => {
                let r = norm(y);
                vec![y.iter().map(|v| v / r).collect()]
            }
        }
    }

    /// `∂ν_l^i/∂y^j` of the normal frame extended off `N`, row-major `q×q`
    /// per normal index.
    pub fn normal_jacobian(&self, y: &[f64]) -> Vec<Vec<f64>> {
        match self {
            Self::Flat { .. } => Vec::new(),
            Self::Sphere { .. } => {
                let q = y.len();
                let r = norm(y);
                let mut j = vec![0.0; q * q];
                for a in 0..q {
                    for b in 0..q {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        j[a * q + b] = (delta - y[a] * y[b] / (r * r)) / r;
                    }
                }
                vec![j]
            }
        }
    }

    /// `⊤v`, the tangential part of `v` at `y`.
    #[inline]
    pub fn tangent(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.tangent_in_place(y, &mut out);
        out
    }

    #[inline]
    pub fn tangent_in_place(&self, y: &[f64], v: &mut [f64]) {
        if let Self::Sphere { .. } = self {
            let c = dot(y, v) / dot(y, y);
            v.iter_mut().zip(y).for_each(|(a, b)| *a -= c * b);
        }
    }

    /// Tangent projector as a row-major `q×q` matrix.
    pub fn tangent_projector(&self, y: &[f64]) -> Vec<f64> {
        let q = self.q();
        let mut m = vec![0.0; q * q];
        for i in 0..q {
            m[i * q + i] = 1.0;
        }
        for nu in self.normal_frame(y) {
            for i in 0..q {
                for j in 0..q {
                    m[i * q + j] -= nu[i] * nu[j];
                }
            }
        }
        m
    }

    /// `II_y(X, Y) = Σ_l ⟨X, ∂_Y ν_l⟩ ν_l` after projecting `X` and `Y` onto
    /// the tangent space.
    pub fn second_fundamental_form(&self, y: &[f64], x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_on(y, 0)?;
        let (xt, vt) = (self.tangent(y, x), self.tangent(y, v));
        Ok(self.sff_unchecked(y, &xt, &vt))
    }

    /// `II` without projection or manifold checks.
    pub(crate) fn sff_unchecked(&self, y: &[f64], x: &[f64], v: &[f64]) -> Vec<f64> {
        let q = y.len();
        let mut out = vec![0.0; q];
        for (nu, jac) in self.normal_frame(y).iter().zip(self.normal_jacobian(y)) {
            let mut c = 0.0;
            for i in 0..q {
                for j in 0..q {
                    c += x[i] * jac[i * q + j] * v[j];
                }
            }
            out.iter_mut().zip(nu).for_each(|(o, n)| *o += c * n);
        }
        out
    }

    /// Shape operator `P(ξ, X) = Σ_l ⟨ξ, ν_l⟩ ⊤(∂_X ν_l)` for a normal `ξ`
    /// and tangent `X`.
    pub fn shape_operator(&self, y: &[f64], xi: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_on(y, 0)?;
        let q = y.len();
        let xt = self.tangent(y, x);
        let mut out = vec![0.0; q];
        for (nu, jac) in self.normal_frame(y).iter().zip(self.normal_jacobian(y)) {
            let c = dot(xi, nu);
            for i in 0..q {
                out[i] += c * (0..q).map(|j| jac[i * q + j] * xt[j]).sum::<f64>();
            }
        }
        self.tangent_in_place(y, &mut out);
        Ok(out)
    }
}

/// Closed-form three-forms `Ω` on the ambient space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MagneticForm {
    /// `Ω = 0`.
    None,
    /// Constant coefficients `Ω_{kij}` (totally antisymmetric, row-major
    /// `q×q×q`). The primitive is `B_{ij}(y) = ⅓ Ω_{kij} y^k`.
    Constant { q: usize, omega: Vec<f64> },
    /// `Ω = λ·vol` on the unit sphere `S³ ⊂ R⁴`, extended ambiently by
    /// `Z(v∧w)^k = λ det(y, e_k, v, w)`.
    SphereVolume { lambda: f64 },
}

/// Magnetic data: the three-form, whether its primitive enters the energy,
/// and optional injected defects for testing the skew check.
#[derive(Clone, Debug, PartialEq)]
pub struct MagneticData {
    pub form: MagneticForm,
    /// When false the energy omits the `∫φ*B` term ("Ω-mode").
    pub use_primitive: bool,
    defects: Vec<(usize, usize, usize, f64)>,
}

impl Default for MagneticData {
    fn default() -> Self {
        Self::none()
    }
}

impl MagneticData {
    pub fn none() -> Self {
        Self::from_form(MagneticForm::None)
    }

    pub fn from_form(form: MagneticForm) -> Self {
        Self {
            form,
            use_primitive: true,
            defects: Vec::new(),
        }
    }

    /// `Ω = c·dy¹∧dy²∧dy³` on `R³`.
    pub fn volume_r3(c: f64) -> Self {
        let mut omega = vec![0.0; 27];
        for (k, i, j, s) in [
            (0, 1, 2, 1.0),
            (1, 2, 0, 1.0),
            (2, 0, 1, 1.0),
            (0, 2, 1, -1.0),
            (2, 1, 0, -1.0),
            (1, 0, 2, -1.0),
        ] {
            omega[(k * 3 + i) * 3 + j] = s * c;
        }
        Self::from_form(MagneticForm::Constant { q: 3, omega })
    }

    /// The H-surface form `Ω = 2H·vol` on `R³`, whose force is
    /// `2H φ_x × φ_y`.
    pub fn h_surface(h: f64) -> Self {
        Self::volume_r3(2.0 * h)
    }

    /// `Ω = λ·vol_{S³}`.
    pub fn sphere_volume(lambda: f64) -> Self {
        Self::from_form(MagneticForm::SphereVolume { lambda })
    }

    /// Drops the primitive so the energy carries no magnetic term.
    pub fn omega_mode(mut self) -> Self {
        self.use_primitive = false;
        self
    }

    /// Adds `delta` to `Z^k(∂_i∧∂_j)` (and its negative to `Z^k(∂_j∧∂_i)`).
    pub fn with_defect(mut self, k: usize, i: usize, j: usize, delta: f64) -> Self {
        self.defects.push((k, i, j, delta));
        self
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, MagneticForm::None) && self.defects.is_empty()
    }

    pub fn has_primitive(&self) -> bool {
        self.use_primitive
    }

    /// Checks that the form is usable with a target of ambient dimension `q`.
    pub fn validate(&self, target: &TargetManifold) -> Result<()> {
        match &self.form {
            MagneticForm::None => Ok(()),
            MagneticForm::Constant { q, omega } => {
                if *q != target.q() || omega.len() != q * q * q {
                    return Err(Error::InvalidArgument(format!(
                        "constant three-form has q = {q} but target {} has q = {}",
                        target.label(),
                        target.q()
                    )));
                }
                for k in 0..*q {
                    for i in 0..*q {
                        for j in 0..*q {
                            let a = omega[(k * q + i) * q + j];
                            let b = omega[(i * q + k) * q + j];
                            let c = omega[(k * q + j) * q + i];
                            if (a + b).abs() > 1e-14 || (a + c).abs() > 1e-14 {
                                return Err(Error::InvalidArgument(
                                    "constant three-form is not totally antisymmetric".into(),
                                ));
                            }
                        }
                    }
                }
                Ok(())
            }
            MagneticForm::SphereVolume { .. } => {
                if target.q() != 4 {
                    return Err(Error::InvalidArgument(format!(
                        "volume form of S³ needs a target in R⁴, got {}",
                        target.label()
                    )));
                }
                Ok(())
            }
        }
    }

    /// `Z(v∧w)` at `y`.
    pub fn z(&self, y: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let q = y.len();
        let mut out = vec![0.0; q];
        match &self.form {
            MagneticForm::None => {}
            MagneticForm::Constant { omega, .. } => {
                for (k, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for i in 0..q {
                        if v[i] == 0.0 {
                            continue;
                        }
                        for j in 0..q {
                            s += omega[(k * q + i) * q + j] * v[i] * w[j];
                        }
                    }
                    *o = s;
                }
            }
            MagneticForm::SphereVolume { lambda } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = lambda * det4_with_unit(y, k, v, w);
                }
            }
        }
        for &(k, i, j, d) in &self.defects {
            out[k] += d * (v[i] * w[j] - v[j] * w[i]);
        }
        out
    }

    /// `Z(∂_i ∧ ∂_j)` at `y`.
    pub fn z_basis(&self, y: &[f64], i: usize, j: usize) -> Vec<f64> {
        let q = y.len();
        let mut ei = vec![0.0; q];
        let mut ej = vec![0.0; q];
        ei[i] = 1.0;
        ej[j] = 1.0;
        self.z(y, &ei, &ej)
    }

    /// Row-major `q×q` matrix `M_{ki} = ⟨e_k, Z(e_i ∧ w)⟩`, i.e. `Z(· ∧ w)`.
    pub fn z_matrix(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        let q = y.len();
        let mut m = vec![0.0; q * q];
        let mut e = vec![0.0; q];
        for i in 0..q {
            e[i] = 1.0;
            let col = self.z(y, &e, w);
            e[i] = 0.0;
            for k in 0..q {
                m[k * q + i] = col[k];
            }
        }
        m
    }

    /// Primitive `B_{ij}(y)` as a row-major antisymmetric `q×q` matrix.
    pub fn primitive(&self, y: &[f64], site: usize) -> Result<Vec<f64>> {
        if !self.use_primitive {
            return Err(Error::NoPrimitive);
        }
        if !self.defects.is_empty() {
            return Err(Error::Unsupported(
                "magnetic data with injected defects has no primitive".into(),
            ));
        }
        let q = y.len();
        let mut b = vec![0.0; q * q];
        match &self.form {
            MagneticForm::None => {}
            MagneticForm::Constant { omega, .. } => {
                for i in 0..q {
                    for j in 0..q {
                        b[i * q + j] = (0..q)
                            .map(|k| omega[(k * q + i) * q + j] * y[k])
                            .sum::<f64>()
                            / 3.0;
                    }
                }
            }
            MagneticForm::SphereVolume { lambda } => {
                let rho = norm(&y[..3]);
                let r = norm(y);
                let chi = rho.atan2(y[3]);
                if chi > std::f64::consts::PI - 1e-4 {
                    return Err(Error::PrimitiveDomain {
                        site,
                        reason: format!("local primitive of vol(S³) is singular at the south pole (χ = {chi:.6})"),
                    });
                }
                // B = −λ F(χ) σ with F' = sin²χ and σ the pulled-back area form
                // of S², written as −λ g(χ) ε_{aij} y^a / |y|³ with g = F/sin³χ.
                // The sign makes dB = det(y, ·, ·, ·) for the outward normal.
                let g = if rho == 0.0 {
                    1.0 / 3.0
                } else {
                    polar_primitive(chi) / chi.sin().powi(3)
                };
                let c = -lambda * g / (r * r * r);
                let eps = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];
                for (a, i, j) in eps {
                    b[i * q + j] += c * y[a];
                    b[j * q + i] -= c * y[a];
                }
            }
        }
        Ok(b)
    }

    /// Largest violation of `Z^k(∂_i∧∂_j) = −Z^i(∂_k∧∂_j)` over the sample
    /// points and all index triples.
    pub fn check_skew(&self, samples: &[Vec<f64>]) -> f64 {
        let mut worst = 0.0f64;
        for y in samples {
            let q = y.len();
            let table: Vec<Vec<f64>> = (0..q * q)
                .map(|ij| self.z_basis(y, ij / q, ij % q))
                .collect();
            for k in 0..q {
                for i in 0..q {
                    for j in 0..q {
                        let v = table[i * q + j][k] + table[k * q + j][i];
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
        worst
    }
}

/// `F(χ) = (χ − sin χ cos χ)/2`, with a series near the pole where the
/// closed form cancels.
fn polar_primitive(chi: f64) -> f64 {
    if chi < 1e-2 {
        let c2 = chi * chi;
        chi * c2 * (1.0 / 3.0 - c2 / 15.0 + 2.0 * c2 * c2 / 315.0 - c2 * c2 * c2 / 2835.0)
    } else {
        0.5 * (chi - chi.sin() * chi.cos())
    }
}

/// `det(y, e_k, v, w)` in `R⁴`.
fn det4_with_unit(y: &[f64], k: usize, v: &[f64], w: &[f64]) -> f64 {
    // Expand along the unit column: (−1)^{k+1} times the 3×3 minor of
    // (y, v, w) with row k removed.
    let rows: Vec<usize> = (0..4).filter(|&r| r != k).collect();
    let m = |r: usize| [y[rows[r]], v[rows[r]], w[rows[r]]];
    let (a, b, c) = (m(0), m(1), m(2));
    let minor = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0]);
    let sign = if (k + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * minor
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = norm(&v);
        v.into_iter().map(|x| x / r).collect()
    }

    fn det4(cols: [&[f64]; 4]) -> f64 {
        let m = nalgebra::Matrix4::from_fn(|r, c| cols[c][r]);
        m.determinant()
    }

    #[test]
    fn sphere_projection_basics() {
        let s2 = TargetManifold::sphere(2).unwrap();
        assert_eq!(s2.project(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(s2.project(&[0.0, 0.0, 0.0]).is_err());
        let p = s2.tangent_projector(&[0.0, 0.0, 1.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let frame = s2.normal_frame(&[0.6, 0.0, 0.8]);
        assert_eq!(frame.len(), 1);
        assert!((norm(&frame[0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_target_is_trivial() {
        let r3 = TargetManifold::flat(3).unwrap();
        let y = [0.3, -2.0, 5.0];
        assert_eq!(r3.project(&y).unwrap(), y.to_vec());
        assert_eq!(
            r3.tangent_projector(&y),
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            r3.second_fundamental_form(&y, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0])
                .unwrap(),
            vec![0.0; 3]
        );
        assert!(TargetManifold::flat(1).is_err());
    }

    #[test]
    fn sphere_second_fundamental_form_and_shape_operator() {
        let s2 = TargetManifold::sphere(2).unwrap();
        let ii = s2
            .second_fundamental_form(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(ii, vec![0.0, 0.0, 1.0]);
        let p = s2
            .shape_operator(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0], &[0.3, -0.7, 0.0])
            .unwrap();
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] + 0.7).abs() < 1e-15 && p[2].abs() < 1e-15);
        assert!(s2
            .second_fundamental_form(&[0.0, 0.0, 1.1], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0])
            .is_err());
    }

    #[test]
    fn second_fundamental_form_matches_finite_difference_of_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s3 = TargetManifold::sphere(3).unwrap();
        for _ in 0..20 {
            let y = random_unit(&mut rng, 4);
            let x = s3.tangent(&y, &random_unit(&mut rng, 4));
            let v = s3.tangent(&y, &random_unit(&mut rng, 4));
            let eps = 1e-5;
            let yp: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
            let ym: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
            let (np, nm) = (&s3.normal_frame(&yp)[0], &s3.normal_frame(&ym)[0]);
            let dnu: Vec<f64> = np
                .iter()
                .zip(nm)
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect();
            let nu = &s3.normal_frame(&y)[0];
            let fd: Vec<f64> = nu.iter().map(|n| dot(&x, &dnu) * n).collect();
            let ii = s3.second_fundamental_form(&y, &x, &v).unwrap();
            for (a, b) in fd.iter().zip(&ii) {
                assert!((a - b).abs() < 1e-6);
            }
            let closed: Vec<f64> = y.iter().map(|c| dot(&x, &v) * c).collect();
            for (a, b) in closed.iter().zip(&ii) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn projector_is_symmetric_idempotent_with_rank_n(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = TargetManifold::sphere(3).unwrap();
            let y = random_unit(&mut rng, 4);
            let p = t.tangent_projector(&y);
            let mut trace = 0.0;
            for i in 0..4 {
                trace += p[i * 4 + i];
                for j in 0..4 {
                    prop_assert!((p[i * 4 + j] - p[j * 4 + i]).abs() <= 1e-10);
                    let pp: f64 = (0..4).map(|k| p[i * 4 + k] * p[k * 4 + j]).sum();
                    prop_assert!((pp - p[i * 4 + j]).abs() <= 1e-10);
                }
            }
            prop_assert!((trace - 3.0).abs() <= 1e-10);
            let again = t.project(&t.project(&y.iter().map(|v| 3.0 * v).collect::<Vec<_>>()).unwrap()).unwrap();
            prop_assert!(again.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-12));
        }

        #[test]
        fn sff_is_symmetric_normal_and_dual_to_shape(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = TargetManifold::sphere(2).unwrap();
            let y = random_unit(&mut rng, 3);
            let x = t.tangent(&y, &random_unit(&mut rng, 3));
            let v = t.tangent(&y, &random_unit(&mut rng, 3));
            let a = t.second_fundamental_form(&y, &x, &v).unwrap();
            let b = t.second_fundamental_form(&y, &v, &x).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-10));
            prop_assert!(t.tangent(&y, &a).iter().all(|c| c.abs() <= 1e-10));
            let xi: Vec<f64> = y.iter().map(|c| c * rng.gen_range(-2.0..2.0)).collect();
            let p = t.shape_operator(&y, &xi, &x).unwrap();
            prop_assert!((dot(&p, &v) - dot(&a, &xi)).abs() <= 1e-12);
        }

        #[test]
        fn z_is_totally_antisymmetric(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (mag, q) in [(MagneticData::volume_r3(1.3), 3), (MagneticData::sphere_volume(0.7), 4)] {
                let y = random_unit(&mut rng, q);
                let (u, v, w) = (random_unit(&mut rng, q), random_unit(&mut rng, q), random_unit(&mut rng, q));
                let uvw = dot(&u, &mag.z(&y, &v, &w));
                prop_assert!((uvw + dot(&v, &mag.z(&y, &u, &w))).abs() <= 1e-12);
                prop_assert!((uvw + dot(&u, &mag.z(&y, &w, &v))).abs() <= 1e-12);
                prop_assert!((uvw + dot(&w, &mag.z(&y, &v, &u))).abs() <= 1e-12);
                prop_assert!(mag.z(&y, &v, &v).iter().all(|c| c.abs() <= 1e-15));
                prop_assert!(dot(&v, &mag.z(&y, &v, &w)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unit_volume_form_on_r3() {
        let m = MagneticData::volume_r3(1.0);
        let y = [0.0; 3];
        assert_eq!(m.z_basis(&y, 0, 1), vec![0.0, 0.0, 1.0]);
        assert_eq!(m.z_basis(&y, 1, 2), vec![1.0, 0.0, 0.0]);
        assert_eq!(m.z_basis(&y, 0, 2), vec![0.0, -1.0, 0.0]);
        assert_eq!(m.check_skew(&[y.to_vec()]), 0.0);
    }

    #[test]
    fn h_surface_force_is_cross_product() {
        let m = MagneticData::h_surface(0.75);
        let (v, w) = ([1.0, 2.0, -0.5], [0.3, -1.0, 2.0]);
        let cross = [
            v[1] * w[2] - v[2] * w[1],
            v[2] * w[0] - v[0] * w[2],
            v[0] * w[1] - v[1] * w[0],
        ];
        let z = m.z(&[0.0; 3], &v, &w);
        for k in 0..3 {
            assert!((z[k] - 1.5 * cross[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_volume_is_skew_and_matches_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = MagneticData::sphere_volume(0.5);
        let samples: Vec<Vec<f64>> = (0..50).map(|_| random_unit(&mut rng, 4)).collect();
        assert!(m.check_skew(&samples) <= 1e-12);
        let y = &samples[0];
        let (v, w) = (random_unit(&mut rng, 4), random_unit(&mut rng, 4));
        let eta = random_unit(&mut rng, 4);
        let lhs = dot(&eta, &m.z(y, &v, &w));
        assert!((lhs - 0.5 * det4([y, &eta, &v, &w])).abs() < 1e-13);
    }

    #[test]
    fn corrupted_z_is_detected() {
        let m = MagneticData::volume_r3(1.0).with_defect(2, 0, 1, 0.1);
        let v = m.check_skew(&[vec![0.1, 0.2, 0.3]]);
        assert!((v - 0.1).abs() < 1e-12, "{v}");
    }

    /// `dB(u, v, w)` of an ambient two-form with components `B_{ij}(y)` by
    /// central differences of the components.
    fn exterior_derivative(m: &MagneticData, y: &[f64], u: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let q = y.len();
        let eps = 1e-6;
        let db = |dir: &[f64], a: &[f64], b: &[f64]| {
            let yp: Vec<f64> = y.iter().zip(dir).map(|(s, d)| s + eps * d).collect();
            let ym: Vec<f64> = y.iter().zip(dir).map(|(s, d)| s - eps * d).collect();
            let (bp, bm) = (m.primitive(&yp, 0).unwrap(), m.primitive(&ym, 0).unwrap());
            let mut s = 0.0;
            for i in 0..q {
                for j in 0..q {
                    s += (bp[i * q + j] - bm[i * q + j]) / (2.0 * eps) * a[i] * b[j];
                }
            }
            s
        };
        db(u, v, w) - db(v, u, w) + db(w, u, v)
    }

    #[test]
    fn primitives_differentiate_to_the_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let flat = MagneticData::volume_r3(1.7);
        for _ in 0..10 {
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (u, v, w) = (
                random_unit(&mut rng, 3),
                random_unit(&mut rng, 3),
                random_unit(&mut rng, 3),
            );
            let lhs = exterior_derivative(&flat, &y, &u, &v, &w);
            let rhs = dot(&u, &flat.z(&y, &v, &w));
            assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        }
        let s3 = TargetManifold::sphere(3).unwrap();
        let vol = MagneticData::sphere_volume(0.8);
        for _ in 0..20 {
            let mut y = random_unit(&mut rng, 4);
            y[3] = y[3].abs() + 0.1;
            let y = s3.project(&y).unwrap();
            let t = |r: &mut ChaCha8Rng| s3.tangent(&y, &random_unit(r, 4));
            let (u, v, w) = (t(&mut rng), t(&mut rng), t(&mut rng));
            let lhs = exterior_derivative(&vol, &y, &u, &v, &w);
            let rhs = dot(&u, &vol.z(&y, &v, &w));
            assert!((lhs - rhs).abs() < 1e-7, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn primitive_errors() {
        let m = MagneticData::sphere_volume(1.0);
        assert!(matches!(
            m.primitive(&[0.0, 0.0, 0.0, -1.0], 4),
            Err(Error::PrimitiveDomain { site: 4, .. })
        ));
        assert!(matches!(
            m.clone().omega_mode().primitive(&[0.0, 0.0, 0.0, 1.0], 0),
            Err(Error::NoPrimitive)
        ));
        let b = m.primitive(&[0.0, 0.0, 0.0, 1.0], 0).unwrap();
        assert!(b.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn polar_primitive_series_matches_closed_form() {
        for chi in [0.009, 0.0099] {
            let closed = 0.5 * (chi - f64::sin(chi) * f64::cos(chi));
            assert!((polar_primitive(chi) - closed).abs() < 1e-16 + 1e-9 * closed);
        }
    }
}
