//! Numerical checks of the structural identities satisfied by solutions:
//! the stress tensor and its conservation, holomorphicity of the Hopf
//! differential, conformal invariance, small-energy and decay estimates,
//! and a finite-difference oracle for the variational formulas.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    project_map, project_spinor_in_place, smooth_noise, smooth_spinor_noise, MapField, SpinorField,
};
use crate::operators::Model;
use crate::surface::{
    conformal_rescale, spinor_inner, Axis, ConformalFactor, DerivativeScheme, Lattice,
};
use crate::target::{dot, TargetManifold};

/// Sitewise `2×2` energy-momentum tensor, stored `[T11, T12, T21, T22]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StressTensor {
    pub t: Vec<[f64; 4]>,
}

impl StressTensor {
    /// `(Σ w |T|²)^{1/2}` with the Frobenius norm.
    pub fn norm(&self, lattice: &Lattice) -> f64 {
        let w = lattice.cell_weights();
        self.t
            .iter()
            .zip(&w)
            .map(|(t, w)| w * t.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// L² norm of the trace `T11 + T22`.
    pub fn trace_norm(&self, lattice: &Lattice) -> f64 {
        scalar_norm(lattice, self.t.iter().map(|t| t[0] + t[3]))
    }

    /// L² norm of the antisymmetric part `T12 − T21`.
    pub fn skew_norm(&self, lattice: &Lattice) -> f64 {
        scalar_norm(lattice, self.t.iter().map(|t| t[1] - t[2]))
    }

    fn column(&self, a: usize) -> Vec<f64> {
        self.t.iter().map(|t| t[a]).collect()
    }
}

fn scalar_norm(lattice: &Lattice, v: impl Iterator<Item = f64>) -> f64 {
    v.zip(lattice.cell_weights())
        .map(|(x, w)| w * x * x)
        .sum::<f64>()
        .sqrt()
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Derivatives `(⊤∂_xψ, ⊤∂_yψ)` with the stencil family of the Dirac operator.
pub fn spinor_gradient(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
) -> Result<[Vec<Complex64>; 2]> {
    let lat = &model.lattice;
    let ncomp = 2 * psi.q;
    let [mut dx, mut dy] = if lat.is_torus() && model.scheme == DerivativeScheme::Spectral {
        [
            lat.partial_complex_full(&psi.values, ncomp, Axis::X, model.spin.phase1)?,
            lat.partial_complex_full(&psi.values, ncomp, Axis::Y, model.spin.phase2)?,
        ]
    } else {
        lat.cartesian_gradient_complex(&psi.values, ncomp, DerivativeScheme::Central, model.spin)?
    };
    project_spinor_in_place(&mut dx, phi, &model.target);
    project_spinor_in_place(&mut dy, phi, &model.target);
    Ok([dx, dy])
}

/// `T_αβ = 2⟨φ_α, φ_β⟩ − δ_αβ|dφ|² + Re⟨ψ, e_α·∇̃_βψ⟩` with `∇̃ = ⊤∘∂`.
/// Independent of the magnetic data.
pub fn stress_tensor(model: &Model, phi: &MapField, psi: &SpinorField) -> Result<StressTensor> {
    phi.check_shape(&model.lattice, &model.target)?;
    psi.check_shape(&model.lattice, &model.target)?;
    let q = phi.q;
    let [dx, dy] = model.dphi(phi)?;
    let grads = if psi.is_zero() {
        None
    } else {
        Some(spinor_gradient(model, phi, psi)?)
    };
    let mut t = Vec::with_capacity(phi.sites());
    for s in 0..phi.sites() {
        let (a, b) = (&dx[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]);
        let (xx, xy, yy) = (dot(a, a), dot(a, b), dot(b, b));
        let mut m = [xx - yy, 2.0 * xy, 2.0 * xy, yy - xx];
        if let Some([gx, gy]) = &grads {
            let ps = psi.at(s);
            for (alpha, beta, slot) in [(0, 0, 0), (0, 1, 1), (1, 0, 2), (1, 1, 3)] {
                let g = if beta == 0 { gx } else { gy };
                let mut acc = 0.0;
                for i in 0..q {
                    let k = (s * q + i) * 2;
                    let c = model.clifford.apply(alpha, &g[k..k + 2]);
                    acc += spinor_inner(&ps[i * 2..i * 2 + 2], &c).re;
                }
                m[slot] += acc;
            }
        }
        t.push(m);
    }
    Ok(StressTensor { t })
}

/// L² norm of `|dφ|² + |ψ||∇̃ψ|`: the size of the terms that make up `T`,
/// without the cancellations. Relative stress residuals are measured
/// against this scale.
pub fn stress_scale(model: &Model, phi: &MapField, psi: &SpinorField) -> Result<f64> {
    let q = phi.q;
    let [dx, dy] = model.dphi(phi)?;
    let grads = if psi.is_zero() {
        None
    } else {
        Some(spinor_gradient(model, phi, psi)?)
    };
    let vals = (0..phi.sites()).map(|s| {
        let (a, b) = (&dx[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]);
        let mut v = dot(a, a) + dot(b, b);
        if let Some([gx, gy]) = &grads {
            let r = s * 2 * q..(s + 1) * 2 * q;
            let n2 = |z: &[Complex64]| z.iter().map(|c| c.norm_sqr()).sum::<f64>();
            v += (n2(psi.at(s)) * (n2(&gx[r.clone()]) + n2(&gy[r]))).sqrt();
        }
        v
    });
    Ok(scalar_norm(&model.lattice, vals))
}

/// L² norm of the divergence `∂_α T_αβ` over both columns `β`.
pub fn stress_divergence(model: &Model, t: &StressTensor) -> Result<f64> {
    let lat = &model.lattice;
    let d = |col: usize, axis: usize| -> Result<Vec<f64>> {
        let g = lat.cartesian_gradient(&t.column(col), 1, model.scheme)?;
        Ok(g[axis].clone())
    };
    let mut sum = 0.0;
    let w = lat.cell_weights();
    for beta in 0..2 {
        let a = d(beta, 0)?; // ∂_x T_{1β}
        let b = d(2 + beta, 1)?; // ∂_y T_{2β}
        for s in 0..lat.len() {
            if lat.is_boundary(s) {
                continue;
            }
            let v = a[s] + b[s];
            sum += w[s] * v * v;
        }
    }
    Ok(sum.sqrt())
}

/// Hopf differential `T(z) = T11 − i T12` sitewise.
pub fn hopf(t: &StressTensor) -> Vec<Complex64> {
    t.t.iter().map(|m| Complex64::new(m[0], -m[1])).collect()
}

/// `(‖∂̄T‖, ‖T‖)` with `∂̄ = ½(∂_x + i∂_y)`; boundary rings are skipped.
pub fn dbar_norm(model: &Model, hopf: &[Complex64]) -> Result<(f64, f64)> {
    let lat = &model.lattice;
    let re: Vec<f64> = hopf.iter().map(|z| z.re).collect();
    let im: Vec<f64> = hopf.iter().map(|z| z.im).collect();
    let [rx, ry] = lat.cartesian_gradient(&re, 1, model.scheme)?;
    let [ix, iy] = lat.cartesian_gradient(&im, 1, model.scheme)?;
    let w = lat.cell_weights();
    let (mut num, mut den) = (0.0, 0.0);
    for s in 0..lat.len() {
        den += w[s] * hopf[s].norm_sqr();
        if lat.is_boundary(s) {
            continue;
        }
        let v = Complex64::new(rx[s] - iy[s], ry[s] + ix[s]) * 0.5;
        num += w[s] * v.norm_sqr();
    }
    Ok((num.sqrt(), den.sqrt()))
}

/// Outcome of [`conformal_invariance_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalCheck {
    pub dirichlet_identical: bool,
    pub magnetic_identical: bool,
    /// `|E_ψ(e^{2u}δ, e^{−u/2}ψ) − E_ψ(δ, ψ)|`.
    pub drift: f64,
}

/// Compares the energy in the metric `e^{2u}δ` (spinor rescaled by
/// `e^{−u/2}`) with the flat energy.
pub fn conformal_invariance_check(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    u: &ConformalFactor,
) -> Result<ConformalCheck> {
    u.validate(&model.lattice)?;
    let flat = model.energy(phi, psi, None)?;
    let (_, scaled) = conformal_rescale(&model.lattice, u, &psi.values)?;
    let psi_u = SpinorField {
        q: psi.q,
        values: scaled,
    };
    let curved = model.energy(phi, &psi_u, Some(u))?;
    Ok(ConformalCheck {
        dirichlet_identical: flat.dirichlet.to_bits() == curved.dirichlet.to_bits(),
        magnetic_identical: flat.magnetic.to_bits() == curved.magnetic.to_bits(),
        drift: (curved.spinor - flat.spinor).abs(),
    })
}

/// One probe of [`gradient_oracle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub site: usize,
    pub spinor: bool,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

/// Compares central finite differences of the discrete energy with the
/// analytic residual fields, probing random tangent directions at random
/// sites. Map probes move one site along a tangent vector (followed by the
/// projection); spinor probes add a tangent spinor at one site. Returns the
/// individual probes; the largest relative error is the headline number.
pub fn gradient_oracle(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    n_probes: usize,
    eps: f64,
    seed: u64,
) -> Result<Vec<Probe>> {
    gradient_oracle_against(model, model, phi, psi, n_probes, eps, seed)
}

/// [`gradient_oracle`] with the energy taken from `energy_model` and the
/// residual fields from `model`; a mismatch between the two (for example a
/// flipped magnetic force) shows up as an O(1) error.
pub fn gradient_oracle_against(
    energy_model: &Model,
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    n_probes: usize,
    eps: f64,
    seed: u64,
) -> Result<Vec<Probe>> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps:e} outside [1e-7, 1e-3]"
        )));
    }
    if !energy_model.magnetic.is_zero() && !energy_model.magnetic.has_primitive() {
        return Err(Error::NoPrimitive);
    }
    let q = phi.q;
    let (res, _) = model.el_residual_map(phi, psi)?;
    let dpsi = model.twisted_dirac(phi, psi)?;
    let w = model.lattice.cell_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior: Vec<usize> = (0..phi.sites())
        .filter(|&s| !model.lattice.is_boundary(s))
        .collect();
    let energy = |p: &MapField, s: &SpinorField| -> Result<f64> {
        Ok(energy_model.energy_unchecked(p, s, None)?.total)
    };
    let mut out = Vec::with_capacity(n_probes);
    for k in 0..n_probes {
        let site = interior[rng.gen_range(0..interior.len())];
        let spinor_probe = k % 2 == 1 && !psi.is_zero();
        let (analytic, fd) = if spinor_probe {
            let mut dir: Vec<Complex64> = (0..2 * q)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut full = vec![Complex64::default(); psi.values.len()];
            full[site * 2 * q..(site + 1) * 2 * q].copy_from_slice(&dir);
            project_spinor_in_place(&mut full, phi, &model.target);
            dir.copy_from_slice(&full[site * 2 * q..(site + 1) * 2 * q]);
            let analytic = w[site] * spinor_inner(&dir, dpsi.at(site)).re;
            let shifted = |t: f64| {
                let mut p = psi.clone();
                for (a, d) in p.values[site * 2 * q..(site + 1) * 2 * q]
                    .iter_mut()
                    .zip(&dir)
                {
                    *a += d * t;
                }
                p
            };
            (
                analytic,
                (energy(phi, &shifted(eps))? - energy(phi, &shifted(-eps))?) / (2.0 * eps),
            )
        } else {
            let raw: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dir = model.target.tangent(phi.at(site), &raw);
            let analytic = -w[site] * dot(&res[site * q..(site + 1) * q], &dir);
            let moved = |t: f64| -> Result<MapField> {
                let mut p = phi.clone();
                for (a, d) in p.at_mut(site).iter_mut().zip(&dir) {
                    *a += d * t;
                }
                project_map(&p, &model.target)
            };
            (
                analytic,
                (energy(&moved(eps)?, psi)? - energy(&moved(-eps)?, psi)?) / (2.0 * eps),
            )
        };
        out.push(Probe {
            site,
            spinor: spinor_probe,
            analytic,
            finite_difference: fd,
            rel_error: 0.0,
        });
    }
    // A probe direction can be nearly orthogonal to the gradient, so each
    // error is measured against at least a hundredth of the typical
    // gradient size for its kind of probe.
    for kind in [false, true] {
        let vals: Vec<f64> = out
            .iter()
            .filter(|p| p.spinor == kind)
            .map(|p| p.analytic * p.analytic)
            .collect();
        if vals.is_empty() {
            continue;
        }
        let rms = (vals.iter().sum::<f64>() / vals.len() as f64).sqrt();
        for p in out.iter_mut().filter(|p| p.spinor == kind) {
            let den = p
                .analytic
                .abs()
                .max(p.finite_difference.abs())
                .max(1e-2 * rms)
                .max(1e-300);
            p.rel_error = (p.analytic - p.finite_difference).abs() / den;
        }
    }
    Ok(out)
}

/// Centre and radius of the disc `D` used by the small-energy diagnostics:
/// the full disc of an annulus, or the inscribed disc of a torus.
fn reference_disc(lattice: &Lattice) -> ([f64; 2], f64) {
    match (lattice.lengths(), lattice.radii()) {
        (Some((l1, l2)), _) => ([0.5 * l1, 0.5 * l2], 0.5 * l1.min(l2)),
        (_, Some((_, r))) => ([0.0, 0.0], r),
        _ => unreachable!("a lattice is either a torus or an annulus"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallEnergy {
    /// `∫_D (|dφ|² + |ψ|⁴)`.
    pub energy: f64,
    /// `(max_{D½}|dφ| + max_{D½}|ψ|) / (‖dφ‖_{L²(D)} + ‖ψ‖_{L⁴(D)})`, 0 for 0/0.
    pub ratio: f64,
    /// Whether the energy is below the configured small-energy threshold.
    pub small: bool,
}

pub fn small_energy_diag(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    threshold: f64,
) -> Result<SmallEnergy> {
    let lat = &model.lattice;
    let q = phi.q;
    let [dx, dy] = model.dphi(phi)?;
    let w = lat.cell_weights();
    let (c, r) = reference_disc(lat);
    let (mut l2, mut l4, mut c_phi, mut c_psi) = (0.0, 0.0, 0.0f64, 0.0f64);
    for s in 0..lat.len() {
        let [x, y] = lat.coords(s);
        let d = ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt();
        if d > r {
            continue;
        }
        let g = dot(&dx[s * q..(s + 1) * q], &dx[s * q..(s + 1) * q])
            + dot(&dy[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]);
        let p2: f64 = psi.at(s).iter().map(|v| v.norm_sqr()).sum();
        l2 += w[s] * g;
        l4 += w[s] * p2 * p2;
        if d <= 0.5 * r {
            c_phi = c_phi.max(g.sqrt());
            c_psi = c_psi.max(p2.sqrt());
        }
    }
    let energy = l2 + l4;
    Ok(SmallEnergy {
        energy,
        ratio: ratio(c_phi + c_psi, l2.sqrt() + l4.powf(0.25)),
        small: energy <= threshold,
    })
}

/// Decay ratios at one radius of an annulus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub r: f64,
    /// `max_θ |dφ| r / (∫_{D(2r)} |dφ|²)^{1/2}`.
    pub map: f64,
    /// `max_θ (|ψ| r^{1/2} + |∇ψ| r^{3/2}) / (∫_{D(2r)} |ψ|⁴)^{1/4}`.
    pub spinor: f64,
}

/// Decay profile on every interior ring with `2r ≤ r_outer`. The integrals
/// over `D(2r)` are restricted to the annulus.
pub fn decay_profile(model: &Model, phi: &MapField, psi: &SpinorField) -> Result<Vec<DecaySample>> {
    let lat = &model.lattice;
    let (_, r_out) = lat
        .radii()
        .ok_or_else(|| Error::Unsupported("decay profiles need an annulus".into()))?;
    let q = phi.q;
    let [dx, dy] = model.dphi(phi)?;
    let grads = if psi.is_zero() {
        None
    } else {
        Some(spinor_gradient(model, phi, psi)?)
    };
    let w = lat.cell_weights();
    let n2 = lat.n2();
    let mut ring_dphi = vec![0.0; lat.n1()];
    let mut ring_psi4 = vec![0.0; lat.n1()];
    let mut ring_lhs = vec![(0.0f64, 0.0f64); lat.n1()];
    for i1 in 0..lat.n1() {
        let r = lat.radius(i1);
        for i2 in 0..n2 {
            let s = lat.site(i1, i2);
            let g = dot(&dx[s * q..(s + 1) * q], &dx[s * q..(s + 1) * q])
                + dot(&dy[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q]);
            let p2: f64 = psi.at(s).iter().map(|v| v.norm_sqr()).sum();
            ring_dphi[i1] += w[s] * g;
            ring_psi4[i1] += w[s] * p2 * p2;
            let gp = match &grads {
                Some([gx, gy]) => gx[s * 2 * q..(s + 1) * 2 * q]
                    .iter()
                    .chain(&gy[s * 2 * q..(s + 1) * 2 * q])
                    .map(|v| v.norm_sqr())
                    .sum::<f64>()
                    .sqrt(),
                None => 0.0,
            };
            let (a, b) = ring_lhs[i1];
            ring_lhs[i1] = (
                a.max(g.sqrt() * r),
                b.max(p2.sqrt() * r.sqrt() + gp * r.powf(1.5)),
            );
        }
    }
    let mut out = Vec::new();
    for i1 in 1..lat.n1() - 1 {
        let r = lat.radius(i1);
        if 2.0 * r > r_out + 1e-12 {
            break;
        }
        let (mut e2, mut e4) = (0.0, 0.0);
        for j in 0..lat.n1() {
            if lat.radius(j) <= 2.0 * r + 1e-12 {
                e2 += ring_dphi[j];
                e4 += ring_psi4[j];
            }
        }
        let (lm, ls) = ring_lhs[i1];
        out.push(DecaySample {
            r,
            map: ratio(lm, e2.sqrt()),
            spinor: ratio(ls, e4.powf(0.25)),
        });
    }
    Ok(out)
}

/// Both sides of the polar energy identities on one ring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarSplit {
    pub r: f64,
    /// `∫ |φ_r|² dθ`.
    pub radial: f64,
    /// `∫ r⁻² |φ_θ|² dθ`.
    pub angular: f64,
    /// `E_r = ∫ |dφ|² dθ`.
    pub e_r: f64,
    /// `I_r = −∫ Re⟨ψ, ∂_r·∇̃_rψ⟩ dθ`.
    pub i_r: f64,
    /// `max(|radial − ½(E_r + I_r)|, |angular − ½(E_r − I_r)|) / E_r`.
    pub residual: f64,
}

/// Polar energy split on the ring closest to radius `r`.
pub fn polar_energy_split(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    r: f64,
) -> Result<PolarSplit> {
    let lat = &model.lattice;
    if lat.radii().is_none() {
        return Err(Error::Unsupported(
            "the polar split needs an annulus".into(),
        ));
    }
    let q = phi.q;
    let i1 = (1..lat.n1() - 1)
        .min_by(|&a, &b| {
            (lat.radius(a) - r)
                .abs()
                .total_cmp(&(lat.radius(b) - r).abs())
        })
        .ok_or_else(|| Error::InvalidArgument("annulus has no interior ring".into()))?;
    let rr = lat.radius(i1);
    let [dr, dth] = lat.gradient(&phi.values, q, DerivativeScheme::Central)?;
    let grads = if psi.is_zero() {
        None
    } else {
        Some(spinor_gradient(model, phi, psi)?)
    };
    let dtheta = lat.spacing(Axis::Y);
    let (mut radial, mut angular, mut i_r) = (0.0, 0.0, 0.0);
    for i2 in 0..lat.n2() {
        let s = lat.site(i1, i2);
        let a = &dr[s * q..(s + 1) * q];
        let b = &dth[s * q..(s + 1) * q];
        radial += dot(a, a) * dtheta;
        angular += dot(b, b) / (rr * rr) * dtheta;
        if let Some([gx, gy]) = &grads {
            let [_, th] = lat.grid_coords(s);
            let (sn, cs) = th.sin_cos();
            let ps = psi.at(s);
            let mut acc = 0.0;
            for i in 0..q {
                let k = (s * q + i) * 2;
                let d: [Complex64; 2] = [cs * gx[k] + sn * gy[k], cs * gx[k + 1] + sn * gy[k + 1]];
                let c = model.clifford.apply_vector([cs, sn], &d);
                acc += spinor_inner(&ps[i * 2..i * 2 + 2], &c).re;
            }
            i_r -= acc * dtheta;
        }
    }
    let e_r = radial + angular;
    let residual = ratio(
        (radial - 0.5 * (e_r + i_r))
            .abs()
            .max((angular - 0.5 * (e_r - i_r)).abs()),
        e_r,
    );
    Ok(PolarSplit {
        r: rr,
        radial,
        angular,
        e_r,
        i_r,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    HypothesisUnmet,
}

/// Variance of `|dφ|²` over the sites of a flat torus. Skipped unless the
/// domain is a torus and the target is flat (the only nonpositively curved
/// target on offer).
pub fn energy_density_constancy(model: &Model, phi: &MapField) -> Result<Option<f64>> {
    if !model.lattice.is_torus() || !matches!(model.target, TargetManifold::Flat { .. }) {
        return Ok(None);
    }
    let q = phi.q;
    let [dx, dy] = model.dphi(phi)?;
    let dens: Vec<f64> = (0..phi.sites())
        .map(|s| {
            dot(&dx[s * q..(s + 1) * q], &dx[s * q..(s + 1) * q])
                + dot(&dy[s * q..(s + 1) * q], &dy[s * q..(s + 1) * q])
        })
        .collect();
    let n = dens.len() as f64;
    let mean = dens.iter().sum::<f64>() / n;
    Ok(Some(
        dens.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n,
    ))
}

/// Which checks to run and their pass thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub stress: bool,
    pub divergence: bool,
    pub hopf: bool,
    pub conformal: bool,
    pub gradient: bool,
    pub small_energy: bool,
    pub decay: bool,
    pub polar_split: bool,
    pub energy_density: bool,
    /// Relative tolerances for trace, skew, divergence and `∂̄T`. Each
    /// residual is divided by `max(stress_scale, stress_floor)`.
    pub trace_tol: f64,
    pub skew_tol: f64,
    pub divergence_tol: f64,
    pub dbar_tol: f64,
    /// Absolute floor for the stress scale, so that near-trivial solutions
    /// are not judged on rounding noise.
    pub stress_floor: f64,
    pub conformal_tol: f64,
    /// Amplitude `a` of the test factor `u = a sin(2πx/L₁) sin(2πy/L₂)`.
    pub conformal_amplitude: f64,
    pub gradcheck_tol: f64,
    pub gradcheck_probes: usize,
    pub gradcheck_eps: f64,
    /// Noise amplitude of the field pair used by the gradient oracle.
    pub gradcheck_perturbation: f64,
    pub small_energy_threshold: f64,
    pub epsreg_max: f64,
    pub decay_max: f64,
    pub polar_radius: f64,
    pub polar_tol: f64,
    pub variance_tol: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            stress: true,
            divergence: true,
            hopf: true,
            conformal: true,
            gradient: true,
            small_energy: false,
            decay: false,
            polar_split: false,
            energy_density: false,
            trace_tol: 1e-3,
            skew_tol: 1e-3,
            divergence_tol: 1e-3,
            dbar_tol: 1e-3,
            stress_floor: 1e-4,
            conformal_tol: 1e-4,
            conformal_amplitude: 0.3,
            gradcheck_tol: 1e-6,
            gradcheck_probes: 200,
            gradcheck_eps: 1e-4,
            gradcheck_perturbation: 0.1,
            small_energy_threshold: 0.1,
            epsreg_max: 10.0,
            decay_max: 10.0,
            polar_radius: 0.5,
            polar_tol: 1e-2,
            variance_tol: 1e-8,
        }
    }
}

impl DiagnosticsConfig {
    /// All toggles off.
    pub fn none() -> Self {
        Self {
            stress: false,
            divergence: false,
            hopf: false,
            conformal: false,
            gradient: false,
            ..Self::default()
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.stress
            || self.divergence
            || self.hopf
            || self.conformal
            || self.gradient
            || self.small_energy
            || self.decay
            || self.polar_split
            || self.energy_density
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub trace_norm: Option<f64>,
    pub skew_norm: Option<f64>,
    pub divergence_norm: Option<f64>,
    pub dbar_norm: Option<f64>,
    pub conformal_drift: Option<f64>,
    pub gradcheck_maxrel: Option<f64>,
    pub decay_ratios: Option<Vec<DecaySample>>,
    pub epsreg_ratio: Option<f64>,
    pub small_energy: Option<f64>,
    pub polar_split: Option<PolarSplit>,
    pub energy_variance: Option<f64>,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    /// True when no enabled check failed (skipped checks do not count).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    fn record(&mut self, name: &str, value: f64, tolerance: f64) {
        let status = if value <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        self.checks.push(CheckResult {
            name: name.into(),
            value,
            tolerance,
            status,
        });
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.checks.push(CheckResult {
            name: name.into(),
            value: f64::NAN,
            tolerance: f64::NAN,
            status: CheckStatus::HypothesisUnmet,
        });
        self.warnings.push(format!("{name}: {why}"));
    }
}

/// Field pair at which the gradient oracle runs: the values of `(φ, ψ)`
/// at site 0, spread over the lattice and perturbed by seeded noise in the
/// lowest Fourier modes, then projected back onto the constraints.
///
/// The oracle checks the variational formulas of the model, and at a
/// critical point both sides vanish. Solver output is also not used
/// directly because its high-frequency content, however small, makes the
/// pointwise magnetic force differ from the gradient of the discrete
/// magnetic energy by aliasing. On an annulus the spinor is set to zero.
fn oracle_fields(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    amplitude: f64,
    seed: u64,
) -> Result<(MapField, SpinorField)> {
    let lat = &model.lattice;
    let q = phi.q;
    let noise = smooth_noise(lat, q, seed ^ 0x9e37, amplitude, 1);
    let y0 = phi.at(0);
    let raw = MapField {
        q,
        values: noise
            .iter()
            .enumerate()
            .map(|(k, v)| y0[k % q] + v)
            .collect(),
    };
    let phi_p = project_map(&raw, &model.target)?;
    if !lat.is_torus() {
        return Ok((phi_p, SpinorField::zeros(lat, q)));
    }
    let s0 = psi.at(0);
    let sn = smooth_spinor_noise(lat, q, model.spin, seed ^ 0x7f4a, amplitude, 1);
    let mut values: Vec<Complex64> = sn
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if model.spin.is_trivial() {
                s0[k % (2 * q)] + v
            } else {
                *v
            }
        })
        .collect();
    project_spinor_in_place(&mut values, &phi_p, &model.target);
    Ok((phi_p, SpinorField { q, values }))
}

/// Runs every enabled check on a field pair.
pub fn run_diagnostics(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    cfg: &DiagnosticsConfig,
    seed: u64,
) -> Result<DiagnosticsReport> {
    let mut rep = DiagnosticsReport::default();
    if !cfg.any_enabled() {
        rep.warnings.push("no diagnostics enabled".into());
        return Ok(rep);
    }
    let lat = &model.lattice;
    let needs_t = cfg.stress || cfg.divergence || cfg.hopf;
    let t = if needs_t {
        Some(stress_tensor(model, phi, psi)?)
    } else {
        None
    };
    let t_norm = if needs_t {
        stress_scale(model, phi, psi)?.max(cfg.stress_floor)
    } else {
        0.0
    };
    if let (true, Some(t)) = (cfg.stress, &t) {
        let tr = ratio(t.trace_norm(lat), t_norm);
        let sk = ratio(t.skew_norm(lat), t_norm);
        rep.trace_norm = Some(tr);
        rep.skew_norm = Some(sk);
        rep.record("stress-trace", tr, cfg.trace_tol);
        rep.record("stress-skew", sk, cfg.skew_tol);
    }
    if let (true, Some(t)) = (cfg.divergence, &t) {
        if lat.is_torus() {
            let d = ratio(stress_divergence(model, t)?, t_norm);
            rep.divergence_norm = Some(d);
            rep.record("stress-divergence", d, cfg.divergence_tol);
        } else {
            rep.skip("stress-divergence", "needs a torus domain");
        }
    }
    if let (true, Some(t)) = (cfg.hopf, &t) {
        if lat.is_torus() {
            let (num, _) = dbar_norm(model, &hopf(t))?;
            let d = ratio(num, t_norm);
            rep.dbar_norm = Some(d);
            rep.record("hopf-dbar", d, cfg.dbar_tol);
        } else {
            rep.skip("hopf-dbar", "needs a torus domain");
        }
    }
    if cfg.conformal {
        match lat.lengths() {
            Some((l1, l2)) => {
                let a = cfg.conformal_amplitude;
                let tau = std::f64::consts::TAU;
                let u = ConformalFactor::from_fn(lat, |x, y| {
                    a * (tau * x / l1).sin() * (tau * y / l2).sin()
                });
                let c = conformal_invariance_check(model, phi, psi, &u)?;
                if !(c.dirichlet_identical && c.magnetic_identical) {
                    rep.warnings
                        .push("conformal: map energy not bit-identical".into());
                }
                let drift = if c.dirichlet_identical && c.magnetic_identical {
                    c.drift
                } else {
                    f64::INFINITY
                };
                rep.conformal_drift = Some(drift);
                rep.record("conformal-drift", drift, cfg.conformal_tol);
            }
            None => rep.skip("conformal-drift", "needs a torus domain"),
        }
    }
    if cfg.gradient {
        if !model.magnetic.is_zero() && !model.magnetic.has_primitive() {
            rep.skip("gradient-oracle", "no energy primitive in Ω-mode");
        } else {
            let (phi_p, psi_p) = oracle_fields(model, phi, psi, cfg.gradcheck_perturbation, seed)?;
            let probes = gradient_oracle(
                model,
                &phi_p,
                &psi_p,
                cfg.gradcheck_probes,
                cfg.gradcheck_eps,
                seed,
            )?;
            let m = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
            rep.gradcheck_maxrel = Some(m);
            rep.record("gradient-oracle", m, cfg.gradcheck_tol);
        }
    }
    if cfg.small_energy {
        let s = small_energy_diag(model, phi, psi, cfg.small_energy_threshold)?;
        rep.small_energy = Some(s.energy);
        rep.epsreg_ratio = Some(s.ratio);
        if s.small {
            rep.record("epsreg-ratio", s.ratio, cfg.epsreg_max);
        } else {
            rep.skip("epsreg-ratio", "energy above the small-energy threshold");
        }
    }
    if cfg.decay {
        if lat.radii().is_some() {
            let d = decay_profile(model, phi, psi)?;
            let m = d.iter().map(|s| s.map.max(s.spinor)).fold(0.0, f64::max);
            rep.decay_ratios = Some(d);
            rep.record("decay-ratio", m, cfg.decay_max);
        } else {
            rep.skip("decay-ratio", "needs an annulus domain");
        }
    }
    if cfg.polar_split {
        if lat.radii().is_some() {
            let p = polar_energy_split(model, phi, psi, cfg.polar_radius)?;
            rep.polar_split = Some(p);
            rep.record("polar-split", p.residual, cfg.polar_tol);
        } else {
            rep.skip("polar-split", "needs an annulus domain");
        }
    }
    if cfg.energy_density {
        match energy_density_constancy(model, phi)? {
            Some(v) => {
                rep.energy_variance = Some(v);
                rep.record("energy-density-variance", v, cfg.variance_tol);
            }
            None => rep.skip(
                "energy-density-variance",
                "hypothesis-unmet: needs a flat torus and a flat target",
            ),
        }
    }
    Ok(rep)
}

/// Result of [`plane_wave_eigenvalues`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    /// Physical wavevector including the spin-structure shift.
    pub k: [f64; 2],
    /// Eigenvalues of `∂̸` restricted to the mode, ascending.
    pub eigenvalues: [f64; 2],
    /// Largest `|∂̸ψ − Mψ|` over both spinor polarisations, where `M` is the
    /// extracted `2×2` matrix; zero when the mode is invariant.
    pub leakage: f64,
}

/// Applies the untwisted Dirac operator to the plane waves
/// `e^{ik·x} e_s` (first ambient slot) and diagonalises the resulting `2×2`
/// block. On a torus, `k = 2π(m + θ/2)/L` with `θ = 1` along antiperiodic
/// directions.
pub fn plane_wave_eigenvalues(model: &Model, m: [i64; 2]) -> Result<PlaneWave> {
    let lat = &model.lattice;
    let (l1, l2) = lat
        .lengths()
        .ok_or_else(|| Error::Unsupported("plane waves need a torus".into()))?;
    let shift = |axis: Axis| match model.spin.phase(axis) {
        crate::surface::BoundaryPhase::Periodic => 0.0,
        crate::surface::BoundaryPhase::Antiperiodic => 0.5,
    };
    let tau = std::f64::consts::TAU;
    let k = [
        tau * (m[0] as f64 + shift(Axis::X)) / l1,
        tau * (m[1] as f64 + shift(Axis::Y)) / l2,
    ];
    let q = model.q();
    let n = lat.len();
    let wave: Vec<Complex64> = (0..n)
        .map(|site| {
            let [x, y] = lat.coords(site);
            Complex64::from_polar(1.0, k[0] * x + k[1] * y)
        })
        .collect();
    let basis = |s: usize| {
        let mut v = vec![Complex64::new(0.0, 0.0); n * q * 2];
        for site in 0..n {
            v[(site * q) * 2 + s] = wave[site];
        }
        v
    };
    let b = [basis(0), basis(1)];
    let d = [model.dirac_flat(&b[0])?, model.dirac_flat(&b[1])?];
    let norm = n as f64;
    let mut mat = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            mat[r][c] = spinor_inner(&b[r], &d[c]) / norm;
        }
    }
    let mut leakage = 0.0f64;
    for c in 0..2 {
        for (idx, v) in d[c].iter().enumerate() {
            let fit = mat[0][c] * b[0][idx] + mat[1][c] * b[1][idx];
            leakage = leakage.max((v - fit).norm());
        }
    }
    let tr = (mat[0][0] + mat[1][1]).re;
    let det = (mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]).re;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    Ok(PlaneWave {
        k,
        eigenvalues: [tr / 2.0 - disc, tr / 2.0 + disc],
        leakage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::reference::harmonic_polynomial;
    use crate::fields::{enforce_tangency, smooth_noise, smooth_spinor_noise};
    use crate::surface::SpinStructure;
    use crate::target::MagneticData;

    fn torus_model(q: usize) -> Model {
        Model::new(
            Lattice::square_torus(16).unwrap(),
            TargetManifold::flat(q).unwrap(),
        )
    }

    fn clifford_type(lat: &Lattice, b: f64) -> MapField {
        MapField::from_fn(lat, 4, |x, y| {
            vec![x.cos(), x.sin(), b * y.cos(), b * y.sin()]
        })
    }

    fn sphere_pair(n: usize, seed: u64) -> (Model, MapField, SpinorField) {
        let model = Model::new(
            Lattice::square_torus(n).unwrap(),
            TargetManifold::sphere(2).unwrap(),
        );
        let mut raw = MapField::constant(&model.lattice, &[0.0, 0.0, 1.0]);
        raw.values
            .iter_mut()
            .zip(smooth_noise(&model.lattice, 3, seed, 0.6, 2))
            .for_each(|(a, b)| *a += b);
        let phi = project_map(&raw, &model.target).unwrap();
        let raw = SpinorField {
            q: 3,
            values: smooth_spinor_noise(&model.lattice, 3, model.spin, seed + 1, 0.5, 2),
        };
        let psi = enforce_tangency(&raw, &phi, &model.target).unwrap();
        (model, phi, psi)
    }

    #[test]
    fn trace_vanishes_exactly_without_spinor() {
        let model = torus_model(3);
        let phi = MapField {
            q: 3,
            values: smooth_noise(&model.lattice, 3, 1, 1.0, 3),
        };
        let t = stress_tensor(&model, &phi, &SpinorField::zeros(&model.lattice, 3)).unwrap();
        assert!(t.t.iter().all(|m| m[0] + m[3] == 0.0 && m[1] == m[2]));
    }

    #[test]
    fn stress_ignores_magnetic_data() {
        let (model, phi, psi) = sphere_pair(16, 3);
        let with_b = model
            .clone()
            .with_magnetic(MagneticData::sphere_volume(0.0));
        let a = stress_tensor(&model, &phi, &psi).unwrap();
        let b = stress_tensor(&with_b, &phi, &psi).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conformal_map_has_zero_stress_and_hopf() {
        let model = torus_model(4);
        let phi = clifford_type(&model.lattice, 1.0);
        let t = stress_tensor(&model, &phi, &SpinorField::zeros(&model.lattice, 4)).unwrap();
        assert!(t.norm(&model.lattice) < 1e-12);
        let (num, den) = dbar_norm(&model, &hopf(&t)).unwrap();
        assert!(num < 1e-12 && den < 1e-12);
    }

    #[test]
    fn non_conformal_map_has_constant_holomorphic_hopf() {
        let model = torus_model(4);
        let phi = clifford_type(&model.lattice, 2.0);
        let t = stress_tensor(&model, &phi, &SpinorField::zeros(&model.lattice, 4)).unwrap();
        let h = hopf(&t);
        assert!(h
            .iter()
            .all(|z| (z - Complex64::new(-3.0, 0.0)).norm() < 1e-12));
        assert!(dbar_norm(&model, &h).unwrap().0 < 1e-12);
        assert!(stress_divergence(&model, &t).unwrap() < 1e-12);
        assert!(energy_density_constancy(&model, &phi).unwrap().unwrap() < 1e-24);
    }

    #[test]
    fn energy_density_check_is_gated_on_flat_targets() {
        let (model, phi, _) = sphere_pair(16, 1);
        assert_eq!(energy_density_constancy(&model, &phi).unwrap(), None);
    }

    #[test]
    fn gradient_oracle_passes_on_sphere_with_spinor() {
        let (model, phi, psi) = sphere_pair(16, 5);
        let probes = gradient_oracle(&model, &phi, &psi, 60, 1e-5, 1).unwrap();
        let worst = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        assert!(probes.iter().any(|p| p.spinor));
    }

    #[test]
    fn gradient_oracle_is_quadratic_exact_on_flat_targets() {
        let model = torus_model(3);
        let phi = MapField {
            q: 3,
            values: smooth_noise(&model.lattice, 3, 2, 1.0, 3),
        };
        let probes = gradient_oracle(
            &model,
            &phi,
            &SpinorField::zeros(&model.lattice, 3),
            40,
            1e-3,
            2,
        )
        .unwrap();
        let worst = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
        assert!(
            worst < 1e-9,
            "{worst} {:?}",
            probes
                .iter()
                .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        );
    }

    #[test]
    fn gradient_oracle_catches_a_flipped_magnetic_force() {
        let model = torus_model(3).with_magnetic(MagneticData::h_surface(1.0));
        let flipped = torus_model(3).with_magnetic(MagneticData::h_surface(-1.0));
        let phi = MapField {
            q: 3,
            values: smooth_noise(&model.lattice, 3, 2, 1.0, 3),
        };
        let psi = SpinorField::zeros(&model.lattice, 3);
        let good = gradient_oracle(&model, &phi, &psi, 40, 1e-5, 2).unwrap();
        assert!(good.iter().all(|p| p.rel_error < 1e-6));
        let probes = gradient_oracle_against(&model, &flipped, &phi, &psi, 40, 1e-5, 2).unwrap();
        assert!(probes.iter().map(|p| p.rel_error).fold(0.0, f64::max) > 1e-2);
    }

    #[test]
    fn oracle_rejects_out_of_range_steps() {
        let (model, phi, psi) = sphere_pair(16, 5);
        assert!(gradient_oracle(&model, &phi, &psi, 2, 1e-2, 1).is_err());
    }

    #[test]
    fn constant_pairs_give_zero_ratios() {
        let model = Model::new(
            Lattice::annulus(16, 32, 0.1, 1.0).unwrap(),
            TargetManifold::flat(3).unwrap(),
        );
        let phi = MapField::constant(&model.lattice, &[1.0, 2.0, 3.0]);
        let psi = SpinorField::zeros(&model.lattice, 3);
        assert_eq!(
            small_energy_diag(&model, &phi, &psi, 0.1).unwrap().ratio,
            0.0
        );
        assert!(decay_profile(&model, &phi, &psi)
            .unwrap()
            .iter()
            .all(|d| d.map == 0.0 && d.spinor == 0.0));
        let p = polar_energy_split(&model, &phi, &psi, 0.5).unwrap();
        assert_eq!(p.residual, 0.0);
    }

    #[test]
    fn radially_constant_map_has_exact_split() {
        let model = Model::new(
            Lattice::annulus(16, 32, 0.1, 1.0).unwrap(),
            TargetManifold::flat(2).unwrap(),
        );
        let phi = MapField::from_fn(&model.lattice, 2, |x, y| {
            vec![(x * x + y * y).sqrt().ln(), 0.0]
        });
        let p =
            polar_energy_split(&model, &phi, &SpinorField::zeros(&model.lattice, 2), 0.5).unwrap();
        assert!(p.angular.abs() < 1e-12);
        assert!(p.radial > 0.0);
    }

    #[test]
    fn polar_split_of_harmonic_polynomial_converges() {
        let res: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let model = Model::new(
                    Lattice::annulus(n, 2 * n, 0.1, 1.0).unwrap(),
                    TargetManifold::flat(3).unwrap(),
                );
                let phi = MapField::from_fn(&model.lattice, 3, harmonic_polynomial);
                polar_energy_split(&model, &phi, &SpinorField::zeros(&model.lattice, 3), 0.5)
                    .unwrap()
                    .residual
            })
            .collect();
        assert!(res[2] < res[0] / 4.0 && res[2] < 1e-3, "{res:?}");
    }

    #[test]
    fn empty_toggle_set_warns_and_passes() {
        let (model, phi, psi) = sphere_pair(16, 1);
        let rep = run_diagnostics(&model, &phi, &psi, &DiagnosticsConfig::none(), 1).unwrap();
        assert!(rep.passed() && rep.checks.is_empty() && !rep.warnings.is_empty());
    }

    #[test]
    fn plane_waves_have_eigenvalues_plus_minus_k() {
        for spin in SpinStructure::all_torus() {
            let model = Model::new(
                Lattice::torus(16, 12, 2.0, 3.0).unwrap(),
                TargetManifold::flat(2).unwrap(),
            )
            .with_spin(spin);
            for m in [[0, 0], [1, 0], [-2, 3], [4, -5], [7, 5]] {
                let pw = plane_wave_eigenvalues(&model, m).unwrap();
                let kn = pw.k[0].hypot(pw.k[1]);
                assert!(pw.leakage < 1e-10, "{pw:?}");
                assert!((pw.eigenvalues[0] + kn).abs() < 1e-10, "{pw:?}");
                assert!((pw.eigenvalues[1] - kn).abs() < 1e-10, "{pw:?}");
            }
        }
    }
}
