//! The unknowns: a map `φ` into the target and a vector spinor `ψ` along it.

pub mod reference;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{BoundaryPhase, Lattice, SpinStructure};
use crate::target::{dot, TargetManifold};

/// Ambient values of `φ`, `values[site·q + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    pub q: usize,
    pub values: Vec<f64>,
}

/// Ambient vector spinor, `values[(site·q + i)·2 + s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub q: usize,
    pub values: Vec<Complex64>,
}

impl MapField {
    pub fn constant(lattice: &Lattice, y0: &[f64]) -> Self {
        let mut values = Vec::with_capacity(lattice.len() * y0.len());
        for _ in 0..lattice.len() {
            values.extend_from_slice(y0);
        }
        Self {
            q: y0.len(),
            values,
        }
    }

    /// Samples `f(x, y)` at the Cartesian site positions.
    pub fn from_fn(lattice: &Lattice, q: usize, f: impl Fn(f64, f64) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(lattice.len() * q);
        for s in 0..lattice.len() {
            let [x, y] = lattice.coords(s);
            let v = f(x, y);
            assert_eq!(v.len(), q, "sampler returned wrong ambient dimension");
            values.extend(v);
        }
        Self { q, values }
    }

    pub fn sites(&self) -> usize {
        self.values.len() / self.q
    }

    #[inline]
    pub fn at(&self, site: usize) -> &[f64] {
        &self.values[site * self.q..(site + 1) * self.q]
    }

    #[inline]
    pub fn at_mut(&mut self, site: usize) -> &mut [f64] {
        &mut self.values[site * self.q..(site + 1) * self.q]
    }

    pub fn check_shape(&self, lattice: &Lattice, target: &TargetManifold) -> Result<()> {
        if self.q != target.q() {
            return Err(Error::ShapeMismatch {
                expected: target.q(),
                actual: self.q,
            });
        }
        lattice.check_len(self.values.len(), self.q)
    }

    /// Largest distance of a site value from the target.
    pub fn max_distance(&self, target: &TargetManifold) -> f64 {
        (0..self.sites())
            .map(|s| target.distance(self.at(s)))
            .fold(0.0, f64::max)
    }

    /// Errors with the first site farther than the on-manifold tolerance.
    pub fn check_on(&self, target: &TargetManifold) -> Result<()> {
        for s in 0..self.sites() {
            target.check_on(self.at(s), s)?;
        }
        Ok(())
    }
}

impl SpinorField {
    pub fn zeros(lattice: &Lattice, q: usize) -> Self {
        Self {
            q,
            values: vec![Complex64::default(); lattice.len() * q * 2],
        }
    }

    pub fn sites(&self) -> usize {
        self.values.len() / (2 * self.q)
    }

    /// The `q` spinors at a site, flattened.
    #[inline]
    pub fn at(&self, site: usize) -> &[Complex64] {
        &self.values[site * 2 * self.q..(site + 1) * 2 * self.q]
    }

    pub fn check_shape(&self, lattice: &Lattice, target: &TargetManifold) -> Result<()> {
        if self.q != target.q() {
            return Err(Error::ShapeMismatch {
                expected: target.q(),
                actual: self.q,
            });
        }
        lattice.check_len(self.values.len(), 2 * self.q)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::default())
    }

    /// `(Σ_x w |ψ(x)|²)^{1/2}`.
    pub fn norm_l2(&self, weights: &[f64]) -> f64 {
        (0..self.sites())
            .map(|s| weights[s] * self.at(s).iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `(Σ_x w |ψ(x)|⁴)^{1/4}`.
    pub fn norm_l4(&self, weights: &[f64]) -> f64 {
        (0..self.sites())
            .map(|s| weights[s] * self.at(s).iter().map(|v| v.norm_sqr()).sum::<f64>().powi(2))
            .sum::<f64>()
            .powf(0.25)
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }
}

/// Applies `⊤(φ(x))` across the ambient index of `ψ` at every site.
pub fn enforce_tangency(
    psi: &SpinorField,
    phi: &MapField,
    target: &TargetManifold,
) -> Result<SpinorField> {
    if psi.q != phi.q || psi.sites() != phi.sites() {
        return Err(Error::ShapeMismatch {
            expected: phi.values.len() * 2,
            actual: psi.values.len(),
        });
    }
    phi.check_on(target)?;
    let mut out = psi.clone();
    project_spinor_in_place(&mut out.values, phi, target);
    Ok(out)
}

/// Sitewise `ψ ← ⊤ψ` without manifold checks.
pub(crate) fn project_spinor_in_place(
    values: &mut [Complex64],
    phi: &MapField,
    target: &TargetManifold,
) {
    let q = phi.q;
    if target.codim() == 0 {
        return;
    }
    for s in 0..phi.sites() {
        let y = phi.at(s);
        let frame = target.normal_frame(y);
        let chunk = &mut values[s * 2 * q..(s + 1) * 2 * q];
        for nu in &frame {
            for sp in 0..2 {
                let c: Complex64 = (0..q).map(|i| chunk[i * 2 + sp] * nu[i]).sum();
                for i in 0..q {
                    chunk[i * 2 + sp] -= c * nu[i];
                }
            }
        }
    }
}

/// Largest `|Σ_i ν^i_l ψ^i|` over sites and normal directions, relative to
/// the largest spinor magnitude.
pub fn tangency_residual(psi: &SpinorField, phi: &MapField, target: &TargetManifold) -> f64 {
    let q = phi.q;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for s in 0..phi.sites() {
        let chunk = psi.at(s);
        scale = scale.max(chunk.iter().map(|v| v.norm()).fold(0.0, f64::max));
        for nu in target.normal_frame(phi.at(s)) {
            for sp in 0..2 {
                let c: Complex64 = (0..q).map(|i| chunk[i * 2 + sp] * nu[i]).sum();
                worst = worst.max(c.norm());
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// Sitewise nearest-point projection of raw ambient values.
pub fn project_map(raw: &MapField, target: &TargetManifold) -> Result<MapField> {
    if raw.q != target.q() {
        return Err(Error::ShapeMismatch {
            expected: target.q(),
            actual: raw.q,
        });
    }
    let mut out = raw.clone();
    for s in 0..out.sites() {
        target
            .project_in_place(out.at_mut(s))
            .map_err(|reason| Error::ProjectionDomain { site: s, reason })?;
    }
    Ok(out)
}

/// Real band-limited noise: every component is a random trigonometric
/// polynomial with integer wavenumbers `|m₁|, |m₂| ≤ cutoff` (periods of the
/// torus; the unit square scaled to the outer radius on an annulus). Each
/// component has root-mean-square `amplitude` in expectation.
pub fn smooth_noise(
    lattice: &Lattice,
    ncomp: usize,
    seed: u64,
    amplitude: f64,
    cutoff: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p1, p2) = periods(lattice);
    let c = cutoff as i64;
    let modes: Vec<(i64, i64)> = (-c..=c)
        .flat_map(|a| (-c..=c).map(move |b| (a, b)))
        .collect();
    let norm = amplitude / (modes.len() as f64 / 2.0).sqrt().max(1.0);
    let mut out = vec![0.0; lattice.len() * ncomp];
    for comp in 0..ncomp {
        for &(m1, m2) in &modes {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let ph = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = a
                * norm
                * if (m1, m2) == (0, 0) {
                    0.5f64.sqrt()
                } else {
                    1.0
                };
            for s in 0..lattice.len() {
                let [x, y] = lattice.coords(s);
                let arg = std::f64::consts::TAU * (m1 as f64 * x / p1 + m2 as f64 * y / p2) + ph;
                out[s * ncomp + comp] += amp * arg.cos();
            }
        }
    }
    out
}

fn periods(lattice: &Lattice) -> (f64, f64) {
    match lattice.lengths() {
        Some(l) => l,
        None => {
            let r = lattice.radii().map(|r| r.1).unwrap_or(1.0);
            (4.0 * r, 4.0 * r)
        }
    }
}

/// Random band-limited spinor noise respecting the boundary phases of `spin`.
pub fn smooth_spinor_noise(
    lattice: &Lattice,
    q: usize,
    spin: SpinStructure,
    seed: u64,
    amplitude: f64,
    cutoff: usize,
) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p1, p2) = periods(lattice);
    let torus = lattice.is_torus();
    let shift = |p: BoundaryPhase| {
        if torus && p == BoundaryPhase::Antiperiodic {
            0.5
        } else {
            0.0
        }
    };
    let (s1, s2) = (shift(spin.phase1), shift(spin.phase2));
    let c = cutoff as i64;
    let modes: Vec<(f64, f64)> = (-c..=c)
        .flat_map(|a| (-c..=c).map(move |b| (a as f64 + s1, b as f64 + s2)))
        .collect();
    let norm = amplitude / (modes.len() as f64).sqrt();
    let mut out = vec![Complex64::default(); lattice.len() * q * 2];
    for comp in 0..2 * q {
        for &(m1, m2) in &modes {
            let coef = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * norm;
            for s in 0..lattice.len() {
                let [x, y] = lattice.coords(s);
                let arg = std::f64::consts::TAU * (m1 * x / p1 + m2 * y / p2);
                out[s * 2 * q + comp] += coef * Complex64::from_polar(1.0, arg);
            }
        }
    }
    out
}

/// How to initialise a map field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapInit {
    /// `φ ≡ point`.
    Constant { point: Vec<f64> },
    /// Closed geodesic winding `m₁` times in `x` and `m₂` times in `y`
    /// through the first two ambient coordinates of a sphere.
    Winding { m1: i64, m2: i64 },
    /// `project(point + noise)` with band-limited noise.
    RandomSmooth {
        point: Vec<f64>,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_cutoff")]
        cutoff: usize,
    },
}

fn default_amplitude() -> f64 {
    0.1
}

fn default_cutoff() -> usize {
    4
}

/// How to initialise a spinor field. The default is the zero spinor; the
/// solver replaces it with low twisted-Dirac modes when it needs them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpinorInit {
    #[default]
    Zero,
    /// The same two-component spinor `(re₀, im₀, re₁, im₁)` in every ambient
    /// slot, then made tangent.
    Constant { spinor: [f64; 4] },
    RandomSmooth {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_cutoff")]
        cutoff: usize,
    },
}

pub fn init_map(
    spec: &MapInit,
    lattice: &Lattice,
    target: &TargetManifold,
    seed: u64,
) -> Result<MapField> {
    let q = target.q();
    let check_point = |p: &[f64]| -> Result<()> {
        if p.len() != q {
            return Err(Error::InvalidArgument(format!(
                "base point has {} coordinates, target {} needs {q}",
                p.len(),
                target.label()
            )));
        }
        Ok(())
    };
    match spec {
        MapInit::Constant { point } => {
            check_point(point)?;
            if target.distance(point) > crate::target::ON_MANIFOLD_TOL {
                return Err(Error::InvalidArgument(format!(
                    "constant point {point:?} is not on {}",
                    target.label()
                )));
            }
            Ok(MapField::constant(lattice, point))
        }
        MapInit::Winding { m1, m2 } => {
            let (l1, l2) = lattice
                .lengths()
                .ok_or_else(|| Error::InvalidArgument("winding maps need a torus domain".into()))?;
            if !target.is_compact() {
                return Err(Error::InvalidArgument(
                    "winding maps need a sphere target".into(),
                ));
            }
            let (k1, k2) = (
                std::f64::consts::TAU * *m1 as f64 / l1,
                std::f64::consts::TAU * *m2 as f64 / l2,
            );
            Ok(MapField::from_fn(lattice, q, |x, y| {
                let mut v = vec![0.0; q];
                let t = k1 * x + k2 * y;
                v[0] = t.cos();
                v[1] = t.sin();
                v
            }))
        }
        MapInit::RandomSmooth {
            point,
            amplitude,
            cutoff,
        } => {
            check_point(point)?;
            let noise = smooth_noise(lattice, q, seed, *amplitude, *cutoff);
            let mut raw = MapField::constant(lattice, point);
            raw.values.iter_mut().zip(noise).for_each(|(a, b)| *a += b);
            project_map(&raw, target)
        }
    }
}

pub fn init_spinor(
    spec: &SpinorInit,
    lattice: &Lattice,
    phi: &MapField,
    target: &TargetManifold,
    spin: SpinStructure,
    seed: u64,
) -> Result<SpinorField> {
    let q = phi.q;
    let raw = match spec {
        SpinorInit::Zero => return Ok(SpinorField::zeros(lattice, q)),
        SpinorInit::Constant { spinor } => {
            let u = [
                Complex64::new(spinor[0], spinor[1]),
                Complex64::new(spinor[2], spinor[3]),
            ];
            let values = (0..lattice.len() * q).flat_map(|_| u).collect();
            SpinorField { q, values }
        }
        SpinorInit::RandomSmooth { amplitude, cutoff } => SpinorField {
            q,
            values: smooth_spinor_noise(lattice, q, spin, seed ^ 0x5bd1_e995, *amplitude, *cutoff),
        },
    };
    enforce_tangency(&raw, phi, target)
}

/// Pointwise `⟨a, b⟩` of two map fields summed with weights.
pub fn weighted_dot(a: &[f64], b: &[f64], weights: &[f64], q: usize) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(s, w)| w * dot(&a[s * q..(s + 1) * q], &b[s * q..(s + 1) * q]))
        .sum()
}
