//! Critical-point search.
//!
//! The map is moved by an explicit projected gradient flow; the spinor is
//! never descended (its action is indefinite) but taken from the low
//! spectrum of the twisted Dirac operator at the current map.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    enforce_tangency, project_map, project_spinor_in_place, MapField, SpinorField,
};
use crate::operators::{EnergyBreakdown, Model};

/// Required relative eigen-residual `‖D̸ψ − λψ‖ / ‖ψ‖`.
pub const EIG_RESIDUAL_TOL: f64 = 1e-8;

/// Seed of the fixed reference vectors that pin down bases of degenerate
/// eigenspaces. Independent of the run seed on purpose.
const REFERENCE_SEED: u64 = 0x6d61_6764_6972;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    #[default]
    Coupled,
    MapOnly,
    SpinorOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Budget of flow steps (one outer iteration is one map step).
    #[serde(default = "defaults::max_outer")]
    pub max_outer: usize,
    /// Flow step; capped at the stability bound. `None` uses the bound.
    #[serde(default)]
    pub flow_dt: Option<f64>,
    #[serde(default = "defaults::tol_map")]
    pub tol_map: f64,
    /// Kernel acceptance `|λ| ≤ tol_spinor · k_min`.
    #[serde(default = "defaults::tol_spinor")]
    pub tol_spinor: f64,
    #[serde(default = "defaults::k_eigs")]
    pub k_eigs: usize,
    /// Target L⁴ norm of ψ.
    #[serde(default = "defaults::spinor_norm")]
    pub spinor_norm: f64,
    #[serde(default)]
    pub mode: SolveMode,
    /// Map steps between spinor re-solves in coupled mode.
    #[serde(default = "defaults::refresh_interval")]
    pub refresh_interval: usize,
    #[serde(default = "defaults::eig_max_iter")]
    pub eig_max_iter: usize,
    /// Print a progress line every this many steps (0 disables).
    #[serde(default)]
    pub progress_every: usize,
}

mod defaults {
    pub fn max_outer() -> usize {
        20_000
    }
    pub fn tol_map() -> f64 {
        1e-8
    }
    pub fn tol_spinor() -> f64 {
        1e-6
    }
    pub fn k_eigs() -> usize {
        4
    }
    pub fn spinor_norm() -> f64 {
        1.0
    }
    pub fn refresh_interval() -> usize {
        25
    }
    pub fn eig_max_iter() -> usize {
        500
    }
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_outer: defaults::max_outer(),
            flow_dt: None,
            tol_map: defaults::tol_map(),
            tol_spinor: defaults::tol_spinor(),
            k_eigs: defaults::k_eigs(),
            spinor_norm: defaults::spinor_norm(),
            mode: SolveMode::Coupled,
            refresh_interval: defaults::refresh_interval(),
            eig_max_iter: defaults::eig_max_iter(),
            progress_every: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if let Some(dt) = self.flow_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("flow_dt must be positive");
            }
        }
        if !(self.tol_map > 0.0 && self.tol_spinor > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.k_eigs == 0 {
            return bad("k_eigs must be at least 1");
        }
        if !(self.spinor_norm > 0.0 && self.spinor_norm.is_finite()) {
            return bad("spinor_norm must be positive");
        }
        if self.refresh_interval == 0 || self.eig_max_iter == 0 {
            return bad("refresh_interval and eig_max_iter must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxOuter,
    NoKernel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub step: usize,
    pub map: f64,
    /// `‖D̸ψ‖ / (k_min ‖ψ‖)`; zero while ψ = 0.
    pub spinor: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub step: usize,
    pub eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub mode: SolveMode,
    pub iterations: usize,
    pub energy: EnergyBreakdown,
    pub residual_history: Vec<ResidualSample>,
    pub eigenvalue_history: Vec<EigenSample>,
    pub final_dt: f64,
    pub rejected_steps: usize,
    /// Set for non-compact targets, which lie outside the closed-target theory.
    pub model_limit: bool,
    /// Excluded from determinism comparisons.
    pub wall_time_s: f64,
}

impl SolveReport {
    /// Copy with the wall time zeroed, for reproducibility checks.
    pub fn deterministic(&self) -> Self {
        Self {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn final_residuals(&self) -> ResidualSample {
        *self
            .residual_history
            .last()
            .expect("history is never empty")
    }
}

/// Low spectrum of the twisted Dirac operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Sorted by `|λ|`.
    pub eigenvalues: Vec<f64>,
    /// Unit vectors in the (unweighted) Euclidean norm.
    pub vectors: Vec<SpinorField>,
    pub residuals: Vec<f64>,
    /// `tol_spinor · k_min`.
    pub kernel_threshold: f64,
    pub iterations: usize,
}

impl Spectrum {
    pub fn kernel_dim(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|l| l.abs() <= self.kernel_threshold)
            .count()
    }
}

type CVec = Vec<Complex64>;

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

fn gram_schmidt(basis: &[CVec], v: &mut CVec) {
    for b in basis {
        let c = inner(b, v);
        axpy(v, -c, b);
    }
}

/// Appends each candidate to `basis` after two Gram–Schmidt passes; drops
/// candidates whose remainder is below `drop` relative to their length.
///
/// `project` is reapplied after normalisation: the operator annihilates the
/// normal bundle, so any normal roundoff that survives an amplifying
/// normalisation would be selected as a spurious null vector.
fn extend_orthonormal(
    basis: &mut Vec<CVec>,
    candidates: Vec<CVec>,
    drop: f64,
    project: &dyn Fn(&mut CVec),
) {
    for mut v in candidates {
        project(&mut v);
        let n0 = norm(&v);
        if n0 == 0.0 || !n0.is_finite() {
            continue;
        }
        gram_schmidt(basis, &mut v);
        gram_schmidt(basis, &mut v);
        let n = norm(&v);
        if n > drop * n0 {
            v.iter_mut().for_each(|x| *x /= n);
            project(&mut v);
            gram_schmidt(basis, &mut v);
            let n = norm(&v);
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
}

/// Ritz pairs of the Hermitian operator whose images on `basis` are
/// `images`, ascending.
fn rayleigh_ritz(basis: &[CVec], images: &[CVec]) -> (Vec<f64>, DMatrix<Complex64>) {
    let m = basis.len();
    let mut h = DMatrix::<Complex64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = inner(&basis[i], &images[j]);
            let w = inner(&basis[j], &images[i]).conj();
            let s = (v + w) * 0.5;
            h[(i, j)] = s;
            h[(j, i)] = s.conj();
        }
    }
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn combine(basis: &[CVec], coeffs: &DMatrix<Complex64>, col: usize) -> CVec {
    let mut out = vec![Complex64::default(); basis[0].len()];
    for (r, b) in basis.iter().enumerate() {
        let c = coeffs[(r, col)];
        if c != Complex64::default() {
            axpy(&mut out, c, b);
        }
    }
    out
}

/// Groups consecutive sorted values into clusters of near-equal entries.
fn clusters(vals: &[f64], rel: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=vals.len() {
        if i == vals.len()
            || (vals[i] - vals[i - 1]).abs() > rel * vals[i].abs().max(vals[i - 1].abs()).max(1.0)
        {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn random_tangent(model: &Model, phi: &MapField, rng: &mut ChaCha8Rng) -> CVec {
    let mut v: CVec = (0..phi.values.len() * 2)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    project_spinor_in_place(&mut v, phi, &model.target);
    v
}

/// Low eigenpairs of `D̸ = P∂̸P` on the tangency subspace.
///
/// Runs a block LOBPCG iteration on `D̸²` with the preconditioner
/// `P(−Δ + k_min²)⁻¹P`, then diagonalises `D̸` on complete `D̸²`
/// eigenspaces so that `±λ` pairs separate. Bases of degenerate
/// eigenspaces are fixed by projecting a deterministic reference family.
pub fn solve_spinor(
    model: &Model,
    phi: &MapField,
    k_eigs: usize,
    tol_spinor: f64,
    max_iter: usize,
    seed: u64,
    warm: Option<&[SpinorField]>,
) -> Result<Spectrum> {
    if !model.lattice.is_torus() {
        return Err(Error::Unsupported(
            "the spinor eigen-solve needs a torus domain".into(),
        ));
    }
    if k_eigs == 0 {
        return Err(Error::InvalidArgument("k_eigs must be at least 1".into()));
    }
    phi.check_shape(&model.lattice, &model.target)?;
    phi.check_on(&model.target)?;
    let dim = phi.values.len() * 2;
    let k_min = model.lattice.min_wavenumber();
    let sigma = k_min * k_min;
    let apply = |v: &[Complex64]| model.twisted_dirac_raw(phi, v);
    let apply2 = |v: &[Complex64]| -> Result<CVec> { apply(&apply(v)?) };
    let precondition = |v: &[Complex64]| -> Result<CVec> {
        let mut out = model
            .lattice
            .fourier_multiplier(v, 2 * phi.q, model.spin, |a, b| {
                1.0 / (a * a + b * b + sigma)
            })?;
        project_spinor_in_place(&mut out, phi, &model.target);
        Ok(out)
    };

    let project = |v: &mut CVec| project_spinor_in_place(v, phi, &model.target);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = (k_eigs + (k_eigs / 2).max(4)).min(dim);
    let mut x: Vec<CVec> = Vec::new();
    if let Some(w) = warm {
        let start = w.iter().map(|f| f.values.clone()).collect();
        extend_orthonormal(&mut x, start, 1e-8, &project);
    }
    while x.len() < block {
        let v = random_tangent(model, phi, &mut rng);
        extend_orthonormal(&mut x, vec![v], 1e-8, &project);
    }
    x.truncate(block);
    let mut p: Vec<CVec> = Vec::new();
    let mut last_residual = f64::INFINITY;

    for iter in 0..max_iter {
        let ax: Vec<CVec> = x.iter().map(|v| apply2(v)).collect::<Result<_>>()?;
        let (mu, c) = rayleigh_ritz(&x, &ax);
        let xs: Vec<CVec> = (0..x.len()).map(|j| combine(&x, &c, j)).collect();
        let axs: Vec<CVec> = (0..x.len()).map(|j| combine(&ax, &c, j)).collect();
        let r: Vec<CVec> = xs
            .iter()
            .zip(&axs)
            .zip(&mu)
            .map(|((v, av), m)| av.iter().zip(v).map(|(a, b)| a - b * m).collect())
            .collect();
        let res2: Vec<f64> = r.iter().map(|v| norm(v)).collect();

        // Smallest prefix of at least k vectors that ends in a spectral gap,
        // so that it spans complete eigenspaces of D̸² (and is D̸-invariant).
        let gap_at = |j: usize| mu[j] - mu[j - 1] > 1e-8 * mu[j].abs().max(1.0);
        let prefix = if x.len() == dim {
            Some(dim)
        } else {
            (k_eigs.max(1)..x.len()).find(|&j| gap_at(j))
        };
        let k_done = res2[..k_eigs.min(res2.len())].iter().all(|&r| r <= 1e-7);
        match prefix {
            Some(pre) if res2[..pre].iter().all(|&r| r <= 1e-7) => {
                if let Some(mut spec) = split_signs(model, phi, &xs[..pre], k_eigs, &apply)? {
                    last_residual = spec.residuals.iter().cloned().fold(0.0, f64::max);
                    if last_residual <= EIG_RESIDUAL_TOL {
                        spec.kernel_threshold = tol_spinor * k_min;
                        spec.iterations = iter + 1;
                        return Ok(spec);
                    }
                }
            }
            None if k_done && block < dim => {
                // A cluster straddles the block edge: widen.
                block = (block + 8).min(dim);
            }
            _ => {}
        }
        last_residual = last_residual.min(
            res2[..k_eigs.min(res2.len())]
                .iter()
                .cloned()
                .fold(0.0, f64::max),
        );

        let w: Vec<CVec> = r
            .iter()
            .zip(&res2)
            .filter(|(_, &n)| n > 1e-14)
            .map(|(v, _)| precondition(v))
            .collect::<Result<_>>()?;
        let mut basis = xs.clone();
        let n_x = basis.len();
        extend_orthonormal(&mut basis, w, 1e-6, &project);
        extend_orthonormal(&mut basis, p.clone(), 1e-6, &project);
        while basis.len() < block + n_x && basis.len() < dim {
            let before = basis.len();
            let v = random_tangent(model, phi, &mut rng);
            extend_orthonormal(&mut basis, vec![v], 1e-8, &project);
            if basis.len() == before {
                break;
            }
        }
        let mut images = axs.clone();
        for v in &basis[n_x..] {
            images.push(apply2(v)?);
        }
        let (_, c) = rayleigh_ritz(&basis, &images);
        let keep = block.min(basis.len());
        x = (0..keep).map(|j| combine(&basis, &c, j)).collect();
        // Search directions: the part of the new iterate outside the old X.
        p = (0..keep)
            .map(|j| {
                let mut v = vec![Complex64::default(); dim];
                for (rr, b) in basis.iter().enumerate().skip(n_x) {
                    axpy(&mut v, c[(rr, j)], b);
                }
                v
            })
            .collect();
    }
    Err(Error::EigenNotConverged {
        iterations: max_iter,
        residual: last_residual,
    })
}

/// Diagonalises `D̸` on a `D̸²`-invariant subspace and returns the `k`
/// smallest-`|λ|` pairs with deterministic bases.
fn split_signs(
    model: &Model,
    phi: &MapField,
    xs: &[CVec],
    k: usize,
    apply: &dyn Fn(&[Complex64]) -> Result<CVec>,
) -> Result<Option<Spectrum>> {
    let ax: Vec<CVec> = xs.iter().map(|v| apply(v)).collect::<Result<_>>()?;
    let (lam, c) = rayleigh_ritz(xs, &ax);
    let mut pairs: Vec<(f64, CVec)> = (0..xs.len())
        .map(|j| (lam[j], combine(xs, &c, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));

    // Deterministic bases inside clusters of equal λ (sorted by |λ| then λ,
    // so equal values are adjacent).
    let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut ref_rng = ChaCha8Rng::seed_from_u64(REFERENCE_SEED);
    let mut refs: Vec<CVec> = Vec::new();
    let mut out_vals = Vec::new();
    let mut out_vecs = Vec::new();
    for range in clusters(&vals, 1e-8) {
        let space: Vec<CVec> = pairs[range.clone()].iter().map(|p| p.1.clone()).collect();
        let d = space.len();
        let mut fixed: Vec<CVec> = Vec::new();
        let mut j = 0;
        while fixed.len() < d && j < 4 * d + 16 {
            while refs.len() <= j {
                refs.push(random_tangent(model, phi, &mut ref_rng));
            }
            let mut proj = vec![Complex64::default(); refs[j].len()];
            for s in &space {
                axpy(&mut proj, inner(s, &refs[j]), s);
            }
            extend_orthonormal(&mut fixed, vec![proj], 1e-3, &|v: &mut CVec| {
                project_spinor_in_place(v, phi, &model.target)
            });
            j += 1;
        }
        if fixed.len() < d {
            fixed = space;
        }
        let mean = vals[range.clone()].iter().sum::<f64>() / d as f64;
        for v in fixed {
            out_vals.push(mean);
            out_vecs.push(v);
        }
    }
    out_vals.truncate(k);
    out_vecs.truncate(k);
    let mut residuals = Vec::with_capacity(k);
    for (l, v) in out_vals.iter_mut().zip(&out_vecs) {
        let av = apply(v)?;
        // Rayleigh quotient of the fixed vector.
        *l = inner(v, &av).re;
        let r: CVec = av.iter().zip(v).map(|(a, b)| a - b * *l).collect();
        residuals.push(norm(&r));
    }
    let q = phi.q;
    Ok(Some(Spectrum {
        eigenvalues: out_vals,
        vectors: out_vecs
            .into_iter()
            .map(|values| SpinorField { q, values })
            .collect(),
        residuals,
        kernel_threshold: 0.0,
        iterations: 0,
    }))
}

/// Explicit projected gradient flow for the map with fixed ψ.
pub struct MapFlow {
    pub dt: f64,
    dt_max: f64,
    monitor_energy: bool,
    streak: usize,
    pub energy: f64,
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    pub rejected: usize,
}

impl MapFlow {
    pub fn new(
        model: &Model,
        phi: &MapField,
        psi: &SpinorField,
        cfg: &SolveConfig,
    ) -> Result<Self> {
        let bound = 1.0 / model.lattice.laplacian_bound(model.scheme);
        let dt = cfg.flow_dt.map_or(bound, |d| d.min(bound));
        let monitor_energy = model.lattice.is_torus()
            && (model.magnetic.is_zero() || model.magnetic.has_primitive());
        let energy = model.energy(phi, psi, None)?.total;
        let (residual, residual_norm) = model.el_residual_map(phi, psi)?;
        Ok(Self {
            dt,
            dt_max: dt,
            monitor_energy,
            streak: 0,
            energy,
            residual,
            residual_norm,
            rejected: 0,
        })
    }

    /// Recomputes cached quantities after ψ changed.
    pub fn refresh(&mut self, model: &Model, phi: &MapField, psi: &SpinorField) -> Result<()> {
        self.energy = model.energy(phi, psi, None)?.total;
        let (r, n) = model.el_residual_map(phi, psi)?;
        self.residual = r;
        self.residual_norm = n;
        Ok(())
    }

    /// One accepted step `φ ← π(φ + dt·(τ − R − Z))`, halving `dt` on
    /// rejection. On torus domains with an energy primitive a step is
    /// rejected if the energy rises beyond roundoff; otherwise if the
    /// residual more than doubles.
    pub fn step(&mut self, model: &Model, phi: &mut MapField, psi: &mut SpinorField) -> Result<()> {
        loop {
            if self.dt < 1e-14 * self.dt_max {
                return Err(Error::StepUnderflow { dt: self.dt });
            }
            let mut raw = phi.clone();
            raw.values
                .iter_mut()
                .zip(&self.residual)
                .for_each(|(a, r)| *a += self.dt * r);
            let trial = project_map(&raw, &model.target)?;
            let energy = model.energy_unchecked(&trial, psi, None)?.total;
            let (residual, residual_norm) = model.el_residual_map(&trial, psi)?;
            let ok = if !residual_norm.is_finite() || !energy.is_finite() {
                false
            } else if self.monitor_energy {
                energy <= self.energy + 1e-12 * self.energy.abs().max(1.0)
            } else {
                residual_norm <= 2.0 * self.residual_norm.max(f64::MIN_POSITIVE)
            };
            if ok {
                *phi = trial;
                if !psi.is_zero() {
                    *psi = enforce_tangency(psi, phi, &model.target)?;
                }
                self.energy = energy;
                self.residual = residual;
                self.residual_norm = residual_norm;
                self.streak += 1;
                if self.streak >= 10 && self.dt < self.dt_max {
                    self.dt = (2.0 * self.dt).min(self.dt_max);
                    self.streak = 0;
                }
                return Ok(());
            }
            self.rejected += 1;
            self.streak = 0;
            self.dt *= 0.5;
        }
    }
}

/// Runs up to `max_steps` flow steps with fixed ψ, stopping once the map
/// residual is at most `cfg.tol_map`. Returns the final map, the residual
/// history (starting with the initial residual) and whether it converged.
pub fn flow_map(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    cfg: &SolveConfig,
    max_steps: usize,
) -> Result<(MapField, Vec<f64>, bool)> {
    cfg.validate()?;
    let mut phi = phi.clone();
    let mut psi = psi.clone();
    let mut flow = MapFlow::new(model, &phi, &psi, cfg)?;
    let mut history = vec![flow.residual_norm];
    for _ in 0..max_steps {
        if flow.residual_norm <= cfg.tol_map {
            break;
        }
        flow.step(model, &mut phi, &mut psi)?;
        history.push(flow.residual_norm);
    }
    let converged = flow.residual_norm <= cfg.tol_map;
    Ok((phi, history, converged))
}

/// Relative spinor residual `‖D̸ψ‖ / (k_min ‖ψ‖)`, zero for ψ = 0.
pub fn spinor_residual(model: &Model, phi: &MapField, psi: &SpinorField) -> Result<f64> {
    if psi.is_zero() {
        return Ok(0.0);
    }
    let w = model.lattice.cell_weights();
    let (_, n) = model.el_residual_spinor(phi, psi)?;
    Ok(n / (psi.norm_l2(&w) * model.lattice.min_wavenumber()))
}

/// Picks the kernel vector closest to `previous` (or the first basis
/// vector) and scales it to the target L⁴ norm.
fn select_spinor(
    model: &Model,
    spectrum: &Spectrum,
    previous: &SpinorField,
    target_norm: f64,
) -> SpinorField {
    let kdim = spectrum.kernel_dim().max(1);
    let space = &spectrum.vectors[..kdim.min(spectrum.vectors.len())];
    let mut v = vec![Complex64::default(); space[0].values.len()];
    if !previous.is_zero() {
        for s in space {
            axpy(&mut v, inner(&s.values, &previous.values), &s.values);
        }
    }
    if norm(&v) < 1e-12 * norm(&previous.values).max(1e-300) || previous.is_zero() {
        v = space[0].values.clone();
    }
    let mut psi = SpinorField {
        q: space[0].q,
        values: v,
    };
    let w = model.lattice.cell_weights();
    let n4 = psi.norm_l4(&w);
    psi.scale(target_norm / n4);
    psi
}

/// Alternating search for a coupled critical point from `(phi, psi)`.
pub fn solve_coupled(
    model: &Model,
    phi: MapField,
    psi: SpinorField,
    cfg: &SolveConfig,
    seed: u64,
) -> Result<(MapField, SpinorField, SolveReport)> {
    cfg.validate()?;
    model.validate()?;
    let start = Instant::now();
    let mut phi = phi;
    let mut psi = match cfg.mode {
        SolveMode::MapOnly => SpinorField::zeros(&model.lattice, phi.q),
        _ => enforce_tangency(&psi, &phi, &model.target)?,
    };
    let mut eig_history = Vec::new();
    let mut warm: Option<Vec<SpinorField>> = None;
    let mut refresh = |phi: &MapField,
                       psi: &mut SpinorField,
                       step: usize,
                       warm: &mut Option<Vec<SpinorField>>|
     -> Result<Spectrum> {
        let spec = solve_spinor(
            model,
            phi,
            cfg.k_eigs,
            cfg.tol_spinor,
            cfg.eig_max_iter,
            seed,
            warm.as_deref(),
        )?;
        eig_history.push(EigenSample {
            step,
            eigenvalues: spec.eigenvalues.clone(),
        });
        *psi = select_spinor(model, &spec, psi, cfg.spinor_norm);
        *warm = Some(spec.vectors.clone());
        Ok(spec)
    };

    let mut history = Vec::new();
    let sample = |step: usize,
                  flow: &MapFlow,
                  phi: &MapField,
                  psi: &SpinorField|
     -> Result<ResidualSample> {
        Ok(ResidualSample {
            step,
            map: flow.residual_norm,
            spinor: spinor_residual(model, phi, psi)?,
            energy: flow.energy,
        })
    };

    let status;
    let mut iterations = 0;
    if cfg.mode == SolveMode::SpinorOnly {
        let spec = refresh(&phi, &mut psi, 0, &mut warm)?;
        let flow = MapFlow::new(model, &phi, &psi, cfg)?;
        history.push(sample(0, &flow, &phi, &psi)?);
        iterations = 1;
        status = if spec.kernel_dim() > 0 {
            SolveStatus::Converged
        } else {
            SolveStatus::NoKernel
        };
        let report = finish(
            model,
            &phi,
            &psi,
            cfg,
            status,
            iterations,
            history,
            eig_history,
            &flow,
            start,
        )?;
        return Ok((phi, psi, report));
    }

    let coupled = cfg.mode == SolveMode::Coupled;
    let mut flow = MapFlow::new(model, &phi, &psi, cfg)?;
    let mut since_refresh = 0usize;
    loop {
        let mut s = sample(iterations, &flow, &phi, &psi)?;
        let map_ok = flow.residual_norm <= cfg.tol_map;
        let spin_ok = !coupled || (!psi.is_zero() && s.spinor <= cfg.tol_spinor);
        if map_ok && spin_ok {
            history.push(s);
            status = SolveStatus::Converged;
            iterations = iterations.max(1);
            break;
        }
        let due = coupled
            && (psi.is_zero() || since_refresh >= cfg.refresh_interval || (map_ok && !spin_ok));
        if due {
            let spec = refresh(&phi, &mut psi, iterations, &mut warm)?;
            since_refresh = 0;
            flow.refresh(model, &phi, &psi)?;
            s = sample(iterations, &flow, &phi, &psi)?;
            if flow.residual_norm <= cfg.tol_map {
                history.push(s);
                if spec.kernel_dim() > 0 && s.spinor <= cfg.tol_spinor {
                    status = SolveStatus::Converged;
                    iterations = iterations.max(1);
                } else {
                    status = SolveStatus::NoKernel;
                }
                break;
            }
        }
        history.push(s);
        if iterations >= cfg.max_outer {
            status = SolveStatus::MaxOuter;
            break;
        }
        flow.step(model, &mut phi, &mut psi)?;
        iterations += 1;
        since_refresh += 1;
        if cfg.progress_every > 0 && iterations % cfg.progress_every == 0 {
            eprintln!(
                "step {iterations:>7}  dt {:.3e}  energy {:.12e}  map residual {:.3e}",
                flow.dt, flow.energy, flow.residual_norm
            );
        }
    }
    let report = finish(
        model,
        &phi,
        &psi,
        cfg,
        status,
        iterations,
        history,
        eig_history,
        &flow,
        start,
    )?;
    Ok((phi, psi, report))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &Model,
    phi: &MapField,
    psi: &SpinorField,
    cfg: &SolveConfig,
    status: SolveStatus,
    iterations: usize,
    residual_history: Vec<ResidualSample>,
    eigenvalue_history: Vec<EigenSample>,
    flow: &MapFlow,
    start: Instant,
) -> Result<SolveReport> {
    Ok(SolveReport {
        status,
        mode: cfg.mode,
        iterations,
        energy: model.energy(phi, psi, None)?,
        residual_history,
        eigenvalue_history,
        final_dt: flow.dt,
        rejected_steps: flow.rejected,
        model_limit: !model.target.is_compact(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
