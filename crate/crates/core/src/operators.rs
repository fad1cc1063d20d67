//! Energy, Euler–Lagrange residuals and the skew connection form.
//!
//! Conventions used throughout:
//!
//! - `Δ_h` is the Laplacian of [`Lattice::laplacian`], the tension is
//!   `τ = ⊤Δ_h φ`, and `II(X, Y) = Σ_l ⟨X, ∂_Y ν_l⟩ ν_l`, so that the normal
//!   part of `Δφ` is `−II(dφ, dφ)`.
//! - The twisted Dirac operator is `D̸ = P ∂̸ P` with `P = ⊤(φ)` acting on the
//!   ambient index. It is symmetric and its kernel is the solution set of
//!   `D̸ψ = 0`.
//! - The map residual is `τ − R − Z(φ_x ∧ φ_y)`; on a torus it is exactly
//!   minus the weighted tangential gradient of the discrete energy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{project_spinor_in_place, MapField, SpinorField};
use crate::surface::{
    dirac_conformal, dirac_untwisted, spinor_inner, CliffordRep, ConformalFactor, DerivativeScheme,
    Lattice, SpinStructure,
};
use crate::target::{dot, MagneticData, TargetManifold};

/// Components of the discrete energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    pub spinor: f64,
    /// `∫φ*B`; zero when the magnetic data carries no primitive.
    pub magnetic: f64,
    pub total: f64,
    /// Set when `Ω ≠ 0` but the energy omits the magnetic term.
    pub omega_mode: bool,
}

/// Skew connection form `A = (f, g)` with `−Δφ^m = f^m_i φ^i_x + g^m_i φ^i_y`.
/// Each entry is a row-major `q×q` matrix per site.
#[derive(Clone, Debug, PartialEq)]
pub struct RiviereForm {
    pub q: usize,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl RiviereForm {
    /// Largest `|A^m_i + A^i_m|` over sites and both directions.
    pub fn skew_defect(&self) -> f64 {
        let q = self.q;
        let mut worst = 0.0f64;
        for a in [&self.f, &self.g] {
            for block in a.chunks(q * q) {
                for m in 0..q {
                    for i in 0..q {
                        worst = worst.max((block[m * q + i] + block[i * q + m]).abs());
                    }
                }
            }
        }
        worst
    }

    /// `A·∇φ` with the supplied derivatives.
    pub fn apply(&self, dx: &[f64], dy: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut out = vec![0.0; dx.len()];
        for s in 0..dx.len() / q {
            let (fb, gb) = (
                &self.f[s * q * q..(s + 1) * q * q],
                &self.g[s * q * q..(s + 1) * q * q],
            );
            for m in 0..q {
                out[s * q + m] = (0..q)
                    .map(|i| fb[m * q + i] * dx[s * q + i] + gb[m * q + i] * dy[s * q + i])
                    .sum();
            }
        }
        out
    }
}

/// Everything that defines the functional on a fixed domain.
#[derive(Clone, Debug)]
pub struct Model {
    pub lattice: Lattice,
    pub target: TargetManifold,
    pub magnetic: MagneticData,
    pub spin: SpinStructure,
    pub scheme: DerivativeScheme,
    pub clifford: CliffordRep,
}

impl Model {
    /// Model with no magnetic field, periodic spin structure, and the
    /// spectral scheme on a torus (central differences on an annulus).
    pub fn new(lattice: Lattice, target: TargetManifold) -> Self {
        let scheme = if lattice.is_torus() {
            DerivativeScheme::Spectral
        } else {
            DerivativeScheme::Central
        };
        Self {
            lattice,
            target,
            magnetic: MagneticData::none(),
            spin: SpinStructure::PERIODIC,
            scheme,
            clifford: CliffordRep::standard(),
        }
    }

    pub fn with_magnetic(mut self, magnetic: MagneticData) -> Self {
        self.magnetic = magnetic;
        self
    }

    pub fn with_spin(mut self, spin: SpinStructure) -> Self {
        self.spin = spin;
        self
    }

    pub fn with_scheme(mut self, scheme: DerivativeScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn q(&self) -> usize {
        self.target.q()
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.magnetic.validate(&self.target)?;
        if !self.lattice.is_torus() && self.scheme == DerivativeScheme::Spectral {
            return Err(Error::SpectralOnAnnulus);
        }
        Ok(())
    }

    fn check(&self, phi: &MapField, psi: Option<&SpinorField>) -> Result<()> {
        phi.check_shape(&self.lattice, &self.target)?;
        if let Some(psi) = psi {
            psi.check_shape(&self.lattice, &self.target)?;
        }
        phi.check_on(&self.target)
    }

    /// Cartesian first derivatives `(φ_x, φ_y)`.
    pub fn dphi(&self, phi: &MapField) -> Result<[Vec<f64>; 2]> {
        self.lattice
            .cartesian_gradient(&phi.values, phi.q, self.scheme)
    }

    /// `(⊤φ_x, ⊤φ_y)`.
    pub fn dphi_tangent(&self, phi: &MapField) -> Result<[Vec<f64>; 2]> {
        let [mut dx, mut dy] = self.dphi(phi)?;
        let q = phi.q;
        for s in 0..phi.sites() {
            let y = phi.at(s);
            self.target.tangent_in_place(y, &mut dx[s * q..(s + 1) * q]);
            self.target.tangent_in_place(y, &mut dy[s * q..(s + 1) * q]);
        }
        Ok([dx, dy])
    }

    fn project_spinor(&self, phi: &MapField, psi: &[Complex64]) -> Vec<Complex64> {
        let mut v = psi.to_vec();
        project_spinor_in_place(&mut v, phi, &self.target);
        v
    }

    /// Untwisted `∂̸` on the ambient spinor.
    pub fn dirac_flat(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        dirac_untwisted(
            &self.lattice,
            psi,
            self.q(),
            self.spin,
            self.scheme,
            &self.clifford,
        )
    }

    /// Twisted Dirac operator `D̸ψ = P∂̸Pψ` without manifold checks; this is
    /// the matrix-free operator used by the eigen-solver.
    pub fn twisted_dirac_raw(&self, phi: &MapField, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        let p = self.project_spinor(phi, psi);
        let d = self.dirac_flat(&p)?;
        Ok(self.project_spinor(phi, &d))
    }

    /// Twisted Dirac operator `D̸ψ = P∂̸Pψ`.
    pub fn twisted_dirac(&self, phi: &MapField, psi: &SpinorField) -> Result<SpinorField> {
        self.check(phi, Some(psi))?;
        Ok(SpinorField {
            q: psi.q,
            values: self.twisted_dirac_raw(phi, &psi.values)?,
        })
    }

    /// `N∂̸ψ + II(e_α·ψ, dφ(e_α))`: the normal part of the flat Dirac
    /// operator against its value forced by tangency. Vanishes in the
    /// continuum for tangent `ψ`; discretely it measures consistency.
    pub fn dirac_normal_defect(&self, phi: &MapField, psi: &SpinorField) -> Result<Vec<Complex64>> {
        self.check(phi, Some(psi))?;
        let q = phi.q;
        let d = self.dirac_flat(&psi.values)?;
        let [dx, dy] = self.dphi_tangent(phi)?;
        let mut out = vec![Complex64::default(); d.len()];
        for s in 0..phi.sites() {
            let y = phi.at(s);
            let frame = self.target.normal_frame(y);
            let jac = self.target.normal_jacobian(y);
            let ps = psi.at(s);
            for (nu, j) in frame.iter().zip(&jac) {
                for sp in 0..2 {
                    let normal: Complex64 = (0..q).map(|i| d[(s * q + i) * 2 + sp] * nu[i]).sum();
                    // ⟨e_α·ψ, ∂_{φ_α} ν⟩ = Σ_i (J φ_α)^i (γ_α ψ^i)
                    let mut forced = Complex64::default();
                    for i in 0..q {
                        let ga = self.clifford.apply(0, &ps[i * 2..i * 2 + 2]);
                        let gb = self.clifford.apply(1, &ps[i * 2..i * 2 + 2]);
                        let jx: f64 = (0..q).map(|b| j[i * q + b] * dx[s * q + b]).sum();
                        let jy: f64 = (0..q).map(|b| j[i * q + b] * dy[s * q + b]).sum();
                        forced += ga[sp] * jx + gb[sp] * jy;
                    }
                    for m in 0..q {
                        out[(s * q + m) * 2 + sp] += (normal + forced) * nu[m];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Per-site metric factor `h^{αβ}√h / δ^{αβ} = e^{−2u}·e^{2u}`, which is
    /// exactly one for finite `u`.
    fn conformal_cancellation(u: Option<&ConformalFactor>, s: usize) -> f64 {
        match u {
            Some(u) if u.u[s].is_finite() => 1.0,
            Some(_) => f64::NAN,
            None => 1.0,
        }
    }

    /// Discrete energy with optional conformal factor.
    pub fn energy(
        &self,
        phi: &MapField,
        psi: &SpinorField,
        u: Option<&ConformalFactor>,
    ) -> Result<EnergyBreakdown> {
        self.check(phi, Some(psi))?;
        self.energy_unchecked(phi, psi, u)
    }

    /// Energy without the on-manifold check; used by finite-difference probes.
    pub fn energy_unchecked(
        &self,
        phi: &MapField,
        psi: &SpinorField,
        u: Option<&ConformalFactor>,
    ) -> Result<EnergyBreakdown> {
        if let Some(u) = u {
            u.validate(&self.lattice)?;
        }
        let dirichlet = self.dirichlet_energy(phi, u)?;
        let spinor = if psi.is_zero() {
            0.0
        } else {
            self.spinor_energy(phi, psi, u)?
        };
        let omega_mode = !self.magnetic.is_zero() && !self.magnetic.has_primitive();
        let magnetic = if self.magnetic.is_zero() || omega_mode {
            0.0
        } else {
            self.magnetic_energy(phi, u)?
        };
        Ok(EnergyBreakdown {
            dirichlet,
            spinor,
            magnetic,
            total: dirichlet + spinor + magnetic,
            omega_mode,
        })
    }

    /// `½ ∫ |dφ|²`.
    pub fn dirichlet_energy(&self, phi: &MapField, u: Option<&ConformalFactor>) -> Result<f64> {
        let q = phi.q;
        if !self.lattice.is_torus() {
            return self.lattice.dirichlet_form(&phi.values, q, self.scheme);
        }
        let w = self.lattice.cell_weights();
        let [dx, dy] = self.dphi(phi)?;
        let mut sum = 0.0;
        for s in 0..phi.sites() {
            let dens = dot(&dx[s * q..(s + 1) * q], &dx[s * q..(s + 1) * q])
                + dot(&dy[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]);
            sum += w[s] * Self::conformal_cancellation(u, s) * dens;
        }
        Ok(0.5 * sum)
    }

    /// `½ ∫ Re⟨ψ, D̸ψ⟩` in the metric `e^{2u}δ` (flat when `u` is `None`).
    pub fn spinor_energy(
        &self,
        phi: &MapField,
        psi: &SpinorField,
        u: Option<&ConformalFactor>,
    ) -> Result<f64> {
        let q = phi.q;
        let p = self.project_spinor(phi, &psi.values);
        let w = self.lattice.cell_weights();
        let (d, vol): (Vec<Complex64>, Vec<f64>) = match u {
            Some(u) if !u.is_flat() => (
                dirac_conformal(
                    &self.lattice,
                    &p,
                    q,
                    &u.u,
                    self.spin,
                    self.scheme,
                    &self.clifford,
                )?,
                w.iter()
                    .zip(&u.u)
                    .map(|(w, u)| w * (2.0 * u).exp())
                    .collect(),
            ),
            _ => (self.dirac_flat(&p)?, w),
        };
        let mut sum = 0.0;
        for s in 0..phi.sites() {
            let r = s * 2 * q..(s + 1) * 2 * q;
            sum += vol[s] * spinor_inner(&p[r.clone()], &d[r]).re;
        }
        Ok(0.5 * sum)
    }

    /// `∫ φ*B = ∫ B_ij(φ) φ^i_x φ^j_y`; errors in Ω-mode.
    pub fn magnetic_energy(&self, phi: &MapField, u: Option<&ConformalFactor>) -> Result<f64> {
        if !self.magnetic.has_primitive() {
            return Err(Error::NoPrimitive);
        }
        let q = phi.q;
        let w = self.lattice.cell_weights();
        let [dx, dy] = self.dphi(phi)?;
        let mut sum = 0.0;
        for s in 0..phi.sites() {
            let b = self.magnetic.primitive(phi.at(s), s)?;
            let mut dens = 0.0;
            for i in 0..q {
                for j in 0..q {
                    dens += b[i * q + j] * dx[s * q + i] * dy[s * q + j];
                }
            }
            sum += w[s] * Self::conformal_cancellation(u, s) * dens;
        }
        Ok(sum)
    }

    /// `τ(φ) = ⊤Δ_h φ`.
    pub fn tension(&self, phi: &MapField) -> Result<Vec<f64>> {
        self.check(phi, None)?;
        let q = phi.q;
        let mut lap = self.lattice.laplacian(&phi.values, q, self.scheme)?;
        for s in 0..phi.sites() {
            self.target
                .tangent_in_place(phi.at(s), &mut lap[s * q..(s + 1) * q]);
        }
        Ok(lap)
    }

    /// Curvature term `R(φ, ψ)` as it arises from varying the discrete
    /// spinor energy in `φ`:
    /// `R_j = −⊤ Σ_l Re⟨Σ_k ∂_j ν^k_l ψ^k, ⟨ν_l, ∂̸ψ⟩⟩`.
    ///
    /// Using `⟨ν_l, ∂̸ψ⟩ = −Σ_i ∂_α(ν^i_l) γ_α ψ^i`, which follows from
    /// differentiating the tangency constraint, this is the shape-operator form
    /// [`Model::curvature_term_pointwise`] up to discretisation error.
    pub fn curvature_term(&self, phi: &MapField, psi: &SpinorField) -> Result<Vec<f64>> {
        self.check(phi, Some(psi))?;
        let q = phi.q;
        let mut out = vec![0.0; phi.values.len()];
        if psi.is_zero() || self.target.codim() == 0 {
            return Ok(out);
        }
        let p = self.project_spinor(phi, &psi.values);
        let d = self.dirac_flat(&p)?;
        for s in 0..phi.sites() {
            let y = phi.at(s);
            let ps = &p[s * 2 * q..(s + 1) * 2 * q];
            let o = &mut out[s * q..(s + 1) * q];
            for (nu, jac) in self
                .target
                .normal_frame(y)
                .iter()
                .zip(self.target.normal_jacobian(y))
            {
                let mut nd = [Complex64::default(); 2];
                for i in 0..q {
                    nd[0] += d[(s * q + i) * 2] * nu[i];
                    nd[1] += d[(s * q + i) * 2 + 1] * nu[i];
                }
                for (j, oj) in o.iter_mut().enumerate() {
                    let mut u = [Complex64::default(); 2];
                    for k in 0..q {
                        let c = jac[k * q + j];
                        u[0] += ps[k * 2] * c;
                        u[1] += ps[k * 2 + 1] * c;
                    }
                    *oj -= spinor_inner(&u, &nd).re;
                }
            }
            self.target.tangent_in_place(y, o);
        }
        Ok(out)
    }

    /// Shape-operator form `Re P(II(dφ(e_α), e_α·ψ), ψ)` evaluated pointwise
    /// with tangential derivatives.
    pub fn curvature_term_pointwise(&self, phi: &MapField, psi: &SpinorField) -> Result<Vec<f64>> {
        self.check(phi, Some(psi))?;
        let q = phi.q;
        let mut out = vec![0.0; phi.values.len()];
        if psi.is_zero() || self.target.codim() == 0 {
            return Ok(out);
        }
        let [dx, dy] = self.dphi_tangent(phi)?;
        for s in 0..phi.sites() {
            let y = phi.at(s);
            let ps = psi.at(s);
            let grads = [&dx[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]];
            out[s * q..(s + 1) * q].copy_from_slice(&curvature_at(
                &self.target,
                &self.clifford,
                y,
                grads,
                ps,
            ));
        }
        Ok(out)
    }

    /// `Z(φ_x ∧ φ_y)` at every site.
    pub fn magnetic_force(&self, phi: &MapField) -> Result<Vec<f64>> {
        phi.check_shape(&self.lattice, &self.target)?;
        let q = phi.q;
        let mut out = vec![0.0; phi.values.len()];
        if self.magnetic.is_zero() {
            return Ok(out);
        }
        let [dx, dy] = self.dphi(phi)?;
        for s in 0..phi.sites() {
            let z = self
                .magnetic
                .z(phi.at(s), &dx[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]);
            out[s * q..(s + 1) * q].copy_from_slice(&z);
        }
        Ok(out)
    }

    /// Map residual `⊤(τ − R − Z)`, zero on Dirichlet rings, and its weighted
    /// L² norm.
    pub fn el_residual_map(&self, phi: &MapField, psi: &SpinorField) -> Result<(Vec<f64>, f64)> {
        let q = phi.q;
        let mut res = self.tension(phi)?;
        let r = self.curvature_term(phi, psi)?;
        let z = self.magnetic_force(phi)?;
        for s in 0..phi.sites() {
            let o = &mut res[s * q..(s + 1) * q];
            if self.lattice.is_boundary(s) {
                o.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            // τ is already tangent; only the source terms are projected, so
            // with R = Z = 0 the residual is τ bit for bit.
            let mut src: Vec<f64> = (0..q).map(|i| r[s * q + i] + z[s * q + i]).collect();
            self.target.tangent_in_place(phi.at(s), &mut src);
            for i in 0..q {
                o[i] -= src[i];
            }
        }
        let norm = weighted_norm(&self.lattice, &res, q);
        Ok((res, norm))
    }

    /// `D̸ψ` and its weighted L² norm.
    pub fn el_residual_spinor(
        &self,
        phi: &MapField,
        psi: &SpinorField,
    ) -> Result<(SpinorField, f64)> {
        let d = self.twisted_dirac(phi, psi)?;
        let w = self.lattice.cell_weights();
        let norm = d.norm_l2(&w);
        Ok((d, norm))
    }

    /// Ambient form of the map equation:
    /// `−Δφ − II(⊤dφ, ⊤dφ) + R + Z(⊤φ_x ∧ ⊤φ_y)`, with `R` in shape-operator form.
    pub fn ambient_residual(&self, phi: &MapField, psi: &SpinorField) -> Result<Vec<f64>> {
        self.check(phi, Some(psi))?;
        let q = phi.q;
        let lap = self.lattice.laplacian(&phi.values, q, self.scheme)?;
        let [dx, dy] = self.dphi_tangent(phi)?;
        let r = self.curvature_term_pointwise(phi, psi)?;
        let mut out = vec![0.0; lap.len()];
        for s in 0..phi.sites() {
            let y = phi.at(s);
            let (gx, gy) = (&dx[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]);
            let iixx = self.target.sff_unchecked(y, gx, gx);
            let iiyy = self.target.sff_unchecked(y, gy, gy);
            let z = self.magnetic.z(y, gx, gy);
            for m in 0..q {
                out[s * q + m] = -lap[s * q + m] - iixx[m] - iiyy[m] + r[s * q + m] + z[m];
            }
        }
        Ok(out)
    }

    /// The skew connection form assembled from the normal-frame, magnetic
    /// and spinor parts at every site, using tangential derivatives.
    ///
    /// The magnetic and spinor parts are the standard antisymmetrised
    /// expressions, each of which contracts with `∇φ` to twice the
    /// corresponding term; they enter with weight `−½` so that
    /// `−Δφ − A·∇φ` equals [`Model::ambient_residual`].
    pub fn riviere_connection(&self, phi: &MapField, psi: &SpinorField) -> Result<RiviereForm> {
        self.check(phi, Some(psi))?;
        let q = phi.q;
        let [dx, dy] = self.dphi_tangent(phi)?;
        let n = phi.sites();
        let mut f = vec![0.0; n * q * q];
        let mut g = vec![0.0; n * q * q];
        for s in 0..n {
            let y = phi.at(s);
            let grads = [&dx[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]];
            let ps = psi.at(s);
            let frame = self.target.normal_frame(y);
            let jacs = self.target.normal_jacobian(y);
            // ⊤(∂ν_l/∂y^j) as vectors, one per j.
            let tangent_cols: Vec<Vec<Vec<f64>>> = jacs
                .iter()
                .map(|jac| {
                    (0..q)
                        .map(|j| {
                            let col: Vec<f64> = (0..q).map(|i| jac[i * q + j]).collect();
                            self.target.tangent(y, &col)
                        })
                        .collect()
                })
                .collect();
            // Re⟨ψ^k, e_α·ψ^j⟩ for both α.
            let mut pair = [vec![0.0; q * q], vec![0.0; q * q]];
            if !psi.is_zero() {
                for (alpha, pa) in pair.iter_mut().enumerate() {
                    for k in 0..q {
                        for j in 0..q {
                            let gj = self.clifford.apply(alpha, &ps[j * 2..j * 2 + 2]);
                            pa[k * q + j] = spinor_inner(&ps[k * 2..k * 2 + 2], &gj).re;
                        }
                    }
                }
            }
            let z_of = |w: &[f64]| self.magnetic.z_matrix(y, w);
            let zx = z_of(grads[0]);
            let zy = z_of(grads[1]);
            for (alpha, a) in [&mut f, &mut g].into_iter().enumerate() {
                let block = &mut a[s * q * q..(s + 1) * q * q];
                let grad = grads[alpha];
                for m in 0..q {
                    for i in 0..q {
                        let mut v = 0.0;
                        for ((nu, jac), cols) in frame.iter().zip(&jacs).zip(&tangent_cols) {
                            for j in 0..q {
                                v += (jac[i * q + j] * nu[m] - jac[m * q + j] * nu[i]) * grad[j];
                            }
                            if !psi.is_zero() {
                                let pa = &pair[alpha];
                                let mut p = 0.0;
                                for k in 0..q {
                                    for j in 0..q {
                                        let c = pa[k * q + j];
                                        if c != 0.0 {
                                            p += c
                                                * (cols[j][i] * cols[k][m]
                                                    - cols[k][i] * cols[j][m]);
                                        }
                                    }
                                }
                                v -= 0.5 * p;
                            }
                        }
                        // Z^m(∂_i ∧ φ_y) in f and −Z^m(∂_i ∧ φ_x) in g.
                        let zpart = if alpha == 0 {
                            zy[m * q + i]
                        } else {
                            -zx[m * q + i]
                        };
                        v -= 0.5 * zpart;
                        block[m * q + i] = v;
                    }
                }
            }
        }
        Ok(RiviereForm { q, f, g })
    }
}

/// `Re P(II(dφ(e_α), e_α·ψ), ψ)` at a point, for tangent `grads` and a
/// tangent ambient spinor `ps`: `⊤ Σ_l Re⟨J_lψ, γ_α Σ_i (J_lφ_α)^i ψ^i⟩`.
pub fn curvature_at(
    target: &TargetManifold,
    clifford: &CliffordRep,
    y: &[f64],
    grads: [&[f64]; 2],
    ps: &[Complex64],
) -> Vec<f64> {
    let q = y.len();
    let mut o = vec![0.0; q];
    for jac in target.normal_jacobian(y) {
        // v = Σ_α γ_α Σ_i (J φ_α)^i ψ^i
        let mut v = [Complex64::default(); 2];
        for (alpha, grad) in grads.iter().enumerate() {
            let mut acc = [Complex64::default(); 2];
            for i in 0..q {
                let c: f64 = (0..q).map(|b| jac[i * q + b] * grad[b]).sum();
                acc[0] += ps[i * 2] * c;
                acc[1] += ps[i * 2 + 1] * c;
            }
            let ga = clifford.apply(alpha, &acc);
            v[0] += ga[0];
            v[1] += ga[1];
        }
        for (j, oj) in o.iter_mut().enumerate() {
            let mut u = [Complex64::default(); 2];
            for k in 0..q {
                let c = jac[k * q + j];
                u[0] += ps[k * 2] * c;
                u[1] += ps[k * 2 + 1] * c;
            }
            *oj += spinor_inner(&u, &v).re;
        }
    }
    target.tangent_in_place(y, &mut o);
    o
}

/// `½ R^N(e_α·ψ, ψ) dφ(e_α)` for the unit sphere, with the curvature
/// convention `R(X, Y)Z = ⟨X, Z⟩Y − ⟨Y, Z⟩X`. Independent intrinsic formula
/// used to cross-check [`curvature_at`].
pub fn sphere_curvature_intrinsic(
    clifford: &CliffordRep,
    grads: [&[f64]; 2],
    ps: &[Complex64],
    q: usize,
) -> Vec<f64> {
    // R(e_α·ψ, ψ)φ_α = Σ_{j,k} Re⟨γ_α ψ^j, ψ^k⟩ R(∂_j, ∂_k)φ_α and
    // R(∂_j, ∂_k)φ_α = (φ_α)_j ∂_k − (φ_α)_k ∂_j.
    let mut out = vec![0.0; q];
    for (alpha, grad) in grads.iter().enumerate() {
        for j in 0..q {
            let gj = clifford.apply(alpha, &ps[j * 2..j * 2 + 2]);
            for k in 0..q {
                let c = spinor_inner(&gj, &ps[k * 2..k * 2 + 2]).re;
                out[k] += 0.5 * c * grad[j];
                out[j] -= 0.5 * c * grad[k];
            }
        }
    }
    out
}

/// `(Σ w |v|²)^{1/2}` of a `q`-vector field.
pub fn weighted_norm(lattice: &Lattice, v: &[f64], q: usize) -> f64 {
    let w = lattice.cell_weights();
    (0..lattice.len())
        .map(|s| w[s] * dot(&v[s * q..(s + 1) * q], &v[s * q..(s + 1) * q]))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::reference::{
        clifford_torus_lambda, clifford_torus_lattice, clifford_torus_map, stereographic_sphere,
    };
    use crate::fields::{
        enforce_tangency, project_map, smooth_noise, smooth_spinor_noise, weighted_dot,
    };

    fn random_sphere_map(lattice: &Lattice, seed: u64) -> MapField {
        let target = TargetManifold::sphere(2).unwrap();
        let mut raw = MapField::constant(lattice, &[0.0, 0.0, 1.0]);
        for (a, b) in raw
            .values
            .iter_mut()
            .zip(smooth_noise(lattice, 3, seed, 0.6, 2))
        {
            *a += b;
        }
        project_map(&raw, &target).unwrap()
    }

    fn random_spinor(model: &Model, phi: &MapField, seed: u64) -> SpinorField {
        let raw = SpinorField {
            q: phi.q,
            values: smooth_spinor_noise(&model.lattice, phi.q, model.spin, seed, 0.5, 2),
        };
        enforce_tangency(&raw, phi, &model.target).unwrap()
    }

    fn tangent_direction(model: &Model, phi: &MapField, seed: u64) -> Vec<f64> {
        let q = phi.q;
        let mut d = smooth_noise(&model.lattice, q, seed, 1.0, 2);
        for s in 0..phi.sites() {
            model
                .target
                .tangent_in_place(phi.at(s), &mut d[s * q..(s + 1) * q]);
        }
        d
    }

    fn directional_fd(
        model: &Model,
        phi: &MapField,
        psi: &SpinorField,
        dir: &[f64],
        eps: f64,
    ) -> f64 {
        let moved = |t: f64| {
            let mut raw = phi.clone();
            raw.values
                .iter_mut()
                .zip(dir)
                .for_each(|(a, d)| *a += t * d);
            project_map(&raw, &model.target).unwrap()
        };
        let e = |t: f64| model.energy_unchecked(&moved(t), psi, None).unwrap().total;
        (e(eps) - e(-eps)) / (2.0 * eps)
    }

    #[test]
    fn map_gradient_matches_finite_differences_on_sphere() {
        let model = Model::new(
            Lattice::square_torus(16).unwrap(),
            TargetManifold::sphere(2).unwrap(),
        );
        let phi = random_sphere_map(&model.lattice, 3);
        let psi = random_spinor(&model, &phi, 4);
        let (res, _) = model.el_residual_map(&phi, &psi).unwrap();
        let w = model.lattice.cell_weights();
        for seed in 0..4 {
            let dir = tangent_direction(&model, &phi, 100 + seed);
            let predicted = -weighted_dot(&res, &dir, &w, 3);
            let fd = directional_fd(&model, &phi, &psi, &dir, 1e-5);
            let rel = (predicted - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-6, "seed {seed}: {predicted} vs {fd}");
        }
    }

    #[test]
    fn spinor_gradient_is_twisted_dirac() {
        let model = Model::new(
            Lattice::square_torus(16).unwrap(),
            TargetManifold::sphere(2).unwrap(),
        );
        let phi = random_sphere_map(&model.lattice, 5);
        let psi = random_spinor(&model, &phi, 6);
        let dir = random_spinor(&model, &phi, 7);
        let d = model.twisted_dirac(&phi, &psi).unwrap();
        let w = model.lattice.cell_weights();
        let predicted: f64 = (0..phi.sites())
            .map(|s| w[s] * spinor_inner(dir.at(s), d.at(s)).re)
            .sum();
        let eps = 1e-5;
        let e = |t: f64| {
            let mut p = psi.clone();
            p.values
                .iter_mut()
                .zip(&dir.values)
                .for_each(|(a, b)| *a += b * t);
            model.energy(&phi, &p, None).unwrap().total
        };
        let fd = (e(eps) - e(-eps)) / (2.0 * eps);
        assert!(
            (predicted - fd).abs() < 1e-7 * fd.abs().max(1.0),
            "{predicted} vs {fd}"
        );
    }

    #[test]
    fn magnetic_gradient_matches_finite_differences_on_flat_target() {
        let target = TargetManifold::flat(3).unwrap();
        let model = Model::new(Lattice::square_torus(16).unwrap(), target)
            .with_magnetic(MagneticData::h_surface(0.7));
        let phi = MapField {
            q: 3,
            values: smooth_noise(&model.lattice, 3, 9, 0.8, 2),
        };
        let psi = SpinorField::zeros(&model.lattice, 3);
        let (res, _) = model.el_residual_map(&phi, &psi).unwrap();
        let w = model.lattice.cell_weights();
        let dir = smooth_noise(&model.lattice, 3, 10, 1.0, 2);
        let predicted = -weighted_dot(&res, &dir, &w, 3);
        let fd = directional_fd(&model, &phi, &psi, &dir, 1e-5);
        assert!(
            (predicted - fd).abs() < 1e-6 * fd.abs(),
            "{predicted} vs {fd}"
        );
    }

    #[test]
    fn h_surface_residual_is_laplacian_minus_cross_product() {
        let h = 0.35;
        let model = Model::new(
            Lattice::square_torus(16).unwrap(),
            TargetManifold::flat(3).unwrap(),
        )
        .with_magnetic(MagneticData::h_surface(h));
        let phi = MapField {
            q: 3,
            values: smooth_noise(&model.lattice, 3, 2, 1.0, 3),
        };
        let psi = SpinorField::zeros(&model.lattice, 3);
        let (res, _) = model.el_residual_map(&phi, &psi).unwrap();
        let lap = model
            .lattice
            .laplacian(&phi.values, 3, model.scheme)
            .unwrap();
        let [dx, dy] = model.dphi(&phi).unwrap();
        for s in 0..phi.sites() {
            let (a, b) = (&dx[s * 3..s * 3 + 3], &dy[s * 3..s * 3 + 3]);
            let cross = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            for i in 0..3 {
                let expected = lap[s * 3 + i] - 2.0 * h * cross[i];
                assert!((res[s * 3 + i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stereographic_sphere_is_unit_mean_curvature_surface() {
        // Sampled on a disc-shaped annulus, central differences: the residual
        // only reflects truncation error and shrinks with the grid.
        let norms: Vec<f64> = [16, 32]
            .iter()
            .map(|&n| {
                let lattice = Lattice::annulus(n, 2 * n, 0.2, 0.8).unwrap();
                let model = Model::new(lattice, TargetManifold::flat(3).unwrap())
                    .with_magnetic(MagneticData::h_surface(1.0));
                let phi = MapField::from_fn(&model.lattice, 3, stereographic_sphere);
                let psi = SpinorField::zeros(&model.lattice, 3);
                model.el_residual_map(&phi, &psi).unwrap().1
            })
            .collect();
        assert!(norms[1] < norms[0] / 3.0, "{norms:?}");
        assert!(norms[1] < 2e-2, "{norms:?}");
    }

    #[test]
    fn clifford_torus_is_exact_for_matching_field_strength() {
        let a = 0.8;
        let lattice = clifford_torus_lattice(a, 16, 16).unwrap();
        let phi = clifford_torus_map(&lattice, a);
        let model = Model::new(lattice, TargetManifold::sphere(3).unwrap())
            .with_magnetic(MagneticData::sphere_volume(clifford_torus_lambda(a)));
        let psi = SpinorField::zeros(&model.lattice, 4);
        let (_, norm) = model.el_residual_map(&phi, &psi).unwrap();
        assert!(norm < 1e-10, "{norm}");
        let off = Model {
            magnetic: MagneticData::sphere_volume(0.3),
            ..model
        };
        assert!(off.el_residual_map(&phi, &psi).unwrap().1 > 1e-2);
    }

    #[test]
    fn shape_operator_curvature_matches_intrinsic_formula() {
        let target = TargetManifold::sphere(2).unwrap();
        let clifford = CliffordRep::standard();
        let y = target.project(&[0.3, -0.5, 0.8]).unwrap();
        let gx = target.tangent(&y, &[0.4, 0.9, -0.2]);
        let gy = target.tangent(&y, &[-0.7, 0.1, 0.5]);
        let mut ps: Vec<Complex64> = (0..6)
            .map(|k| Complex64::new(0.3 * k as f64 - 0.7, 0.2 + 0.1 * k as f64))
            .collect();
        let p = target.tangent_projector(&y);
        let raw = ps.clone();
        for sp in 0..2 {
            for m in 0..3 {
                ps[m * 2 + sp] = (0..3).map(|i| raw[i * 2 + sp] * p[m * 3 + i]).sum();
            }
        }
        let a = curvature_at(&target, &clifford, &y, [&gx, &gy], &ps);
        let b = sphere_curvature_intrinsic(&clifford, [&gx, &gy], &ps, 3);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-13, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn discrete_curvature_term_converges_to_pointwise_form() {
        let mut last = f64::INFINITY;
        for n in [32, 64, 128] {
            let model = Model::new(
                Lattice::square_torus(n).unwrap(),
                TargetManifold::sphere(2).unwrap(),
            );
            let phi = random_sphere_map(&model.lattice, 11);
            let psi = random_spinor(&model, &phi, 12);
            let r = model.curvature_term(&phi, &psi).unwrap();
            let rp = model.curvature_term_pointwise(&phi, &psi).unwrap();
            let diff: Vec<f64> = r.iter().zip(&rp).map(|(a, b)| a - b).collect();
            let rel =
                weighted_norm(&model.lattice, &diff, 3) / weighted_norm(&model.lattice, &rp, 3);
            assert!(rel < last / 10.0, "n = {n}: {rel}");
            last = rel;
        }
        assert!(last < 1e-6, "{last}");
    }

    #[test]
    fn riviere_form_is_skew_and_reproduces_ambient_equation() {
        let model = Model::new(
            Lattice::square_torus(16).unwrap(),
            TargetManifold::sphere(3).unwrap(),
        )
        .with_magnetic(MagneticData::sphere_volume(0.9));
        let target = model.target;
        let mut raw = MapField::constant(&model.lattice, &[0.0, 0.0, 0.0, 1.0]);
        raw.values
            .iter_mut()
            .zip(smooth_noise(&model.lattice, 4, 21, 0.6, 2))
            .for_each(|(a, b)| *a += b);
        let phi = project_map(&raw, &target).unwrap();
        let psi = random_spinor(&model, &phi, 22);
        let form = model.riviere_connection(&phi, &psi).unwrap();
        assert!(form.skew_defect() < 1e-12);
        let [dx, dy] = model.dphi_tangent(&phi).unwrap();
        let lap = model
            .lattice
            .laplacian(&phi.values, 4, model.scheme)
            .unwrap();
        let adphi = form.apply(&dx, &dy);
        let amb = model.ambient_residual(&phi, &psi).unwrap();
        for k in 0..lap.len() {
            assert!((-lap[k] - adphi[k] - amb[k]).abs() < 1e-10, "{k}");
        }
    }

    #[test]
    fn twisted_dirac_is_symmetric() {
        let model = Model::new(
            Lattice::square_torus(8).unwrap(),
            TargetManifold::sphere(2).unwrap(),
        );
        let phi = random_sphere_map(&model.lattice, 1);
        let a = random_spinor(&model, &phi, 2);
        let b = random_spinor(&model, &phi, 3);
        let (da, db) = (
            model.twisted_dirac(&phi, &a).unwrap(),
            model.twisted_dirac(&phi, &b).unwrap(),
        );
        let ip = |u: &SpinorField, v: &SpinorField| -> f64 {
            (0..u.sites())
                .map(|s| spinor_inner(u.at(s), v.at(s)).re)
                .sum()
        };
        assert!((ip(&a, &db) - ip(&da, &b)).abs() < 1e-10);
    }

    #[test]
    fn omega_mode_reports_zero_magnetic_energy() {
        let model = Model::new(
            Lattice::square_torus(8).unwrap(),
            TargetManifold::flat(3).unwrap(),
        )
        .with_magnetic(MagneticData::h_surface(1.0).omega_mode());
        let phi = MapField {
            q: 3,
            values: smooth_noise(&model.lattice, 3, 1, 1.0, 2),
        };
        let psi = SpinorField::zeros(&model.lattice, 3);
        let e = model.energy(&phi, &psi, None).unwrap();
        assert!(e.omega_mode && e.magnetic == 0.0);
        assert!(matches!(
            model.magnetic_energy(&phi, None),
            Err(Error::NoPrimitive)
        ));
    }
}
