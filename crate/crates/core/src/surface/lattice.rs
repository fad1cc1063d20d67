use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{parallel_enabled, Axis, BoundaryPhase, DerivativeScheme, SpinStructure};
use crate::error::{Error, Result};

/// Smallest admissible grid count in either direction.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKind {
    /// Flat torus `[0, L₁) × [0, L₂)` with periodic wrap.
    Torus,
    /// Polar grid on `r_inner ≤ r ≤ r_outer` with Dirichlet rings.
    DiscAnnulus,
}

/// One-dimensional FFT plans and Fourier multipliers for a torus axis.
struct AxisSpectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Wavenumbers with periodic continuation; Nyquist entry kept.
    k_periodic: Vec<f64>,
    /// Half-integer shifted wavenumbers for antiperiodic continuation.
    k_anti: Vec<f64>,
    /// `e^{-iπj/n}`, which turns an antiperiodic line into a periodic one.
    twiddle: Vec<Complex64>,
}

impl AxisSpectral {
    fn new(planner: &mut FftPlanner<f64>, n: usize, length: f64) -> Self {
        let signed = |m: usize| {
            if m < n / 2 {
                m as f64
            } else {
                m as f64 - n as f64
            }
        };
        let k_periodic = (0..n).map(|m| 2.0 * PI * signed(m) / length).collect();
        let k_anti = (0..n)
            .map(|m| (2.0 * PI * signed(m) + PI) / length)
            .collect();
        let twiddle = (0..n)
            .map(|j| Complex64::from_polar(1.0, -PI * j as f64 / n as f64))
            .collect();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            k_periodic,
            k_anti,
            twiddle,
        }
    }

    fn wavenumbers(&self, phase: BoundaryPhase) -> &[f64] {
        match phase {
            BoundaryPhase::Periodic => &self.k_periodic,
            BoundaryPhase::Antiperiodic => &self.k_anti,
        }
    }

    fn forward(&self, line: &mut [Complex64], phase: BoundaryPhase) {
        if phase == BoundaryPhase::Antiperiodic {
            for (v, t) in line.iter_mut().zip(&self.twiddle) {
                *v *= t;
            }
        }
        self.fwd.process(line);
    }

    fn inverse(&self, line: &mut [Complex64], phase: BoundaryPhase) {
        self.inv.process(line);
        let scale = 1.0 / self.n as f64;
        match phase {
            BoundaryPhase::Periodic => line.iter_mut().for_each(|v| *v *= scale),
            BoundaryPhase::Antiperiodic => {
                for (v, t) in line.iter_mut().zip(&self.twiddle) {
                    *v *= t.conj() * scale;
                }
            }
        }
    }

    /// Applies the multiplier `m(k)` along one line.
    fn apply(
        &self,
        line: &mut [Complex64],
        phase: BoundaryPhase,
        m: impl Fn(usize, f64) -> Complex64,
    ) {
        self.forward(line, phase);
        for (j, (v, k)) in line.iter_mut().zip(self.wavenumbers(phase)).enumerate() {
            *v *= m(j, *k);
        }
        self.inverse(line, phase);
    }

    fn is_nyquist(&self, j: usize, phase: BoundaryPhase) -> bool {
        phase == BoundaryPhase::Periodic && self.n.is_multiple_of(2) && j == self.n / 2
    }
}

struct Spectral {
    axes: [AxisSpectral; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Geometry {
    Torus { l1: f64, l2: f64 },
    Annulus { r_inner: f64, r_outer: f64 },
}

/// A flat two-dimensional lattice domain.
///
/// Sites are numbered `site = i1 * n2 + i2`. On a torus `i1` indexes `x` and
/// `i2` indexes `y`; on an annulus `i1` indexes the radius (both end rings
/// included) and `i2` the angle.
#[derive(Clone)]
pub struct Lattice {
    n1: usize,
    n2: usize,
    geometry: Geometry,
    spectral: Option<Arc<Spectral>>,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lattice")
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("geometry", &self.geometry)
            .finish()
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.n1 == other.n1 && self.n2 == other.n2 && self.geometry == other.geometry
    }
}

#[derive(Clone, Copy)]
enum LineBoundary {
    Wrap(f64),
    OneSided,
}

impl Lattice {
    /// Flat torus with `n1 × n2` sites and side lengths `l1`, `l2`.
    /// Grid counts must be even so that antiperiodic wavenumbers are symmetric.
    pub fn torus(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Self> {
        check_counts(n1, n2)?;
        if !n1.is_multiple_of(2) || !n2.is_multiple_of(2) {
            return Err(Error::InvalidLattice(format!(
                "torus grid counts must be even, got {n1}×{n2}"
            )));
        }
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(Error::InvalidLattice(format!(
                "side lengths must be positive and finite, got {l1}×{l2}"
            )));
        }
        let mut planner = FftPlanner::new();
        let spectral = Spectral {
            axes: [
                AxisSpectral::new(&mut planner, n1, l1),
                AxisSpectral::new(&mut planner, n2, l2),
            ],
        };
        Ok(Self {
            n1,
            n2,
            geometry: Geometry::Torus { l1, l2 },
            spectral: Some(Arc::new(spectral)),
        })
    }

    /// The square torus of side `2π`.
    pub fn square_torus(n: usize) -> Result<Self> {
        Self::torus(n, n, 2.0 * PI, 2.0 * PI)
    }

    /// Polar grid with `n_r` rings (both boundary rings included) and
    /// `n_theta` angular samples on `r_inner ≤ r ≤ r_outer`.
    pub fn annulus(n_r: usize, n_theta: usize, r_inner: f64, r_outer: f64) -> Result<Self> {
        check_counts(n_r, n_theta)?;
        if !(r_inner > 0.0 && r_outer > r_inner && r_outer.is_finite()) {
            return Err(Error::InvalidLattice(format!(
                "annulus needs 0 < r_inner < r_outer, got [{r_inner}, {r_outer}]"
            )));
        }
        Ok(Self {
            n1: n_r,
            n2: n_theta,
            geometry: Geometry::Annulus { r_inner, r_outer },
            spectral: None,
        })
    }

    pub fn kind(&self) -> LatticeKind {
        match self.geometry {
            Geometry::Torus { .. } => LatticeKind::Torus,
            Geometry::Annulus { .. } => LatticeKind::DiscAnnulus,
        }
    }

    pub fn is_torus(&self) -> bool {
        self.kind() == LatticeKind::Torus
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Side lengths of a torus; `None` on an annulus.
    pub fn lengths(&self) -> Option<(f64, f64)> {
        match self.geometry {
            Geometry::Torus { l1, l2 } => Some((l1, l2)),
            Geometry::Annulus { .. } => None,
        }
    }

    /// Inner and outer radius of an annulus; `None` on a torus.
    pub fn radii(&self) -> Option<(f64, f64)> {
        match self.geometry {
            Geometry::Annulus { r_inner, r_outer } => Some((r_inner, r_outer)),
            Geometry::Torus { .. } => None,
        }
    }

    /// Coordinate spacing: `L/n` on a torus, `Δr` or `Δθ` on an annulus.
    pub fn spacing(&self, axis: Axis) -> f64 {
        match (self.geometry, axis) {
            (Geometry::Torus { l1, .. }, Axis::X) => l1 / self.n1 as f64,
            (Geometry::Torus { l2, .. }, Axis::Y) => l2 / self.n2 as f64,
            (Geometry::Annulus { r_inner, r_outer }, Axis::X) => {
                (r_outer - r_inner) / (self.n1 - 1) as f64
            }
            (Geometry::Annulus { .. }, Axis::Y) => 2.0 * PI / self.n2 as f64,
        }
    }

    /// Smallest physical distance between neighbouring sites.
    pub fn h(&self) -> f64 {
        match self.geometry {
            Geometry::Torus { .. } => self.spacing(Axis::X).min(self.spacing(Axis::Y)),
            Geometry::Annulus { r_inner, .. } => {
                self.spacing(Axis::X).min(r_inner * self.spacing(Axis::Y))
            }
        }
    }

    #[inline]
    pub fn site(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2 + i2
    }

    #[inline]
    pub fn indices(&self, site: usize) -> (usize, usize) {
        (site / self.n2, site % self.n2)
    }

    /// Radius of ring `i1` on an annulus.
    pub fn radius(&self, i1: usize) -> f64 {
        match self.geometry {
            Geometry::Annulus { r_inner, .. } => r_inner + i1 as f64 * self.spacing(Axis::X),
            Geometry::Torus { .. } => f64::NAN,
        }
    }

    /// Lattice coordinates of a site: `(x, y)` on a torus, `(r, θ)` on an annulus.
    pub fn grid_coords(&self, site: usize) -> [f64; 2] {
        let (i1, i2) = self.indices(site);
        match self.geometry {
            Geometry::Torus { .. } => [
                i1 as f64 * self.spacing(Axis::X),
                i2 as f64 * self.spacing(Axis::Y),
            ],
            Geometry::Annulus { .. } => [self.radius(i1), i2 as f64 * self.spacing(Axis::Y)],
        }
    }

    /// Cartesian position of a site.
    pub fn coords(&self, site: usize) -> [f64; 2] {
        let c = self.grid_coords(site);
        match self.geometry {
            Geometry::Torus { .. } => c,
            Geometry::Annulus { .. } => [c[0] * c[1].cos(), c[0] * c[1].sin()],
        }
    }

    /// Whether the site sits on a Dirichlet ring.
    pub fn is_boundary(&self, site: usize) -> bool {
        match self.geometry {
            Geometry::Torus { .. } => false,
            Geometry::Annulus { .. } => {
                let i1 = site / self.n2;
                i1 == 0 || i1 + 1 == self.n1
            }
        }
    }

    /// Flat quadrature weights: `h₁h₂` on a torus; trapezoid in `r` times
    /// `r Δr Δθ` on an annulus.
    pub fn cell_weights(&self) -> Vec<f64> {
        match self.geometry {
            Geometry::Torus { .. } => {
                vec![self.spacing(Axis::X) * self.spacing(Axis::Y); self.len()]
            }
            Geometry::Annulus { .. } => {
                let (dr, dt) = (self.spacing(Axis::X), self.spacing(Axis::Y));
                (0..self.len())
                    .map(|s| {
                        let i1 = s / self.n2;
                        let trap = if i1 == 0 || i1 + 1 == self.n1 {
                            0.5
                        } else {
                            1.0
                        };
                        trap * self.radius(i1) * dr * dt
                    })
                    .collect()
            }
        }
    }

    /// Area of the domain.
    pub fn area(&self) -> f64 {
        match self.geometry {
            Geometry::Torus { l1, l2 } => l1 * l2,
            Geometry::Annulus { r_inner, r_outer } => PI * (r_outer * r_outer - r_inner * r_inner),
        }
    }

    /// Smallest nonzero wavenumber of a periodic field, `2π / max(L₁, L₂)`.
    pub fn min_wavenumber(&self) -> f64 {
        match self.geometry {
            Geometry::Torus { l1, l2 } => 2.0 * PI / l1.max(l2),
            Geometry::Annulus { r_inner, r_outer } => PI / (r_outer - r_inner),
        }
    }

    /// Smallest `|k| > 0` admitted by a spin structure; this is the first
    /// nonzero singular value of the spectral Dirac operator.
    pub fn dirac_gap(&self, spin: SpinStructure) -> Result<f64> {
        let (l1, l2) = self.lengths().ok_or(Error::SpectralOnAnnulus)?;
        let axis_min = |phase: BoundaryPhase, l: f64| match phase {
            BoundaryPhase::Periodic => 0.0,
            BoundaryPhase::Antiperiodic => PI / l,
        };
        let (a, b) = (axis_min(spin.phase1, l1), axis_min(spin.phase2, l2));
        if a == 0.0 && b == 0.0 {
            Ok(self.min_wavenumber())
        } else {
            Ok((a * a + b * b).sqrt())
        }
    }

    /// Upper bound for the spectrum of `−Δ_h` in the given scheme.
    pub fn laplacian_bound(&self, scheme: DerivativeScheme) -> f64 {
        match (self.geometry, scheme) {
            (Geometry::Torus { .. }, DerivativeScheme::Spectral) => {
                let sp = self.spectral.as_ref().expect("torus has spectral plans");
                sp.axes
                    .iter()
                    .map(|a| {
                        (0..a.n)
                            .filter(|&j| !a.is_nyquist(j, BoundaryPhase::Periodic))
                            .map(|j| a.k_periodic[j].powi(2))
                            .fold(0.0, f64::max)
                    })
                    .sum()
            }
            (Geometry::Torus { .. }, DerivativeScheme::Central) => {
                self.spacing(Axis::X).powi(-2) + self.spacing(Axis::Y).powi(-2)
            }
            (Geometry::Annulus { r_inner, .. }, _) => {
                let (dr, dt) = (self.spacing(Axis::X), self.spacing(Axis::Y));
                4.0 / (dr * dr) + 4.0 / (r_inner * r_inner * dt * dt)
            }
        }
    }

    pub(crate) fn check_len(&self, len: usize, per_site: usize) -> Result<()> {
        let expected = self.len() * per_site;
        if len != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: len,
            });
        }
        Ok(())
    }

    fn spectral(&self) -> Result<&Spectral> {
        self.spectral.as_deref().ok_or(Error::SpectralOnAnnulus)
    }

    fn line_boundary(&self, axis: Axis, phase: BoundaryPhase) -> LineBoundary {
        match (self.geometry, axis) {
            (Geometry::Torus { .. }, _) => LineBoundary::Wrap(phase.wrap_sign()),
            (Geometry::Annulus { .. }, Axis::X) => LineBoundary::OneSided,
            (Geometry::Annulus { .. }, Axis::Y) => LineBoundary::Wrap(1.0),
        }
    }

    /// Runs `f` on every grid line along `axis` of a strided multi-component
    /// field and scatters the results.
    fn map_lines<T, F>(&self, data: &[T], ncomp: usize, axis: Axis, f: F) -> Vec<T>
    where
        T: Copy + Send + Sync + Default,
        F: Fn(&mut [T]) + Sync,
    {
        let (n_line, n_other, stride_line, stride_other) = match axis {
            Axis::X => (self.n1, self.n2, self.n2 * ncomp, ncomp),
            Axis::Y => (self.n2, self.n1, ncomp, self.n2 * ncomp),
        };
        let n_lines = n_other * ncomp;
        let base = |l: usize| (l / ncomp) * stride_other + l % ncomp;
        let run = |l: usize| {
            let b = base(l);
            let mut line: Vec<T> = (0..n_line).map(|j| data[b + j * stride_line]).collect();
            f(&mut line);
            line
        };
        let lines: Vec<Vec<T>> = if parallel_enabled() {
            (0..n_lines).into_par_iter().map(run).collect()
        } else {
            (0..n_lines).map(run).collect()
        };
        let mut out = vec![T::default(); data.len()];
        for (l, line) in lines.into_iter().enumerate() {
            let b = base(l);
            for (j, v) in line.into_iter().enumerate() {
                out[b + j * stride_line] = v;
            }
        }
        out
    }

    /// First derivative of a complex multi-component field along `axis`.
    /// `phase` is the continuation across the torus seam and is ignored on
    /// an annulus.
    pub fn partial_complex(
        &self,
        data: &[Complex64],
        ncomp: usize,
        axis: Axis,
        scheme: DerivativeScheme,
        phase: BoundaryPhase,
    ) -> Result<Vec<Complex64>> {
        self.check_len(data.len(), ncomp)?;
        match scheme {
            DerivativeScheme::Spectral => {
                let ax = &self.spectral()?.axes[axis.index()];
                Ok(self.map_lines(data, ncomp, axis, |line| {
                    ax.apply(line, phase, |j, k| {
                        if ax.is_nyquist(j, phase) {
                            Complex64::new(0.0, 0.0)
                        } else {
                            Complex64::new(0.0, k)
                        }
                    })
                }))
            }
            DerivativeScheme::Central => {
                let h = self.spacing(axis);
                let bc = self.line_boundary(axis, phase);
                Ok(self.map_lines(data, ncomp, axis, |line| central_line(line, h, bc)))
            }
        }
    }

    /// Spectral derivative of a complex field that keeps the Nyquist
    /// wavenumber `−π/h` instead of zeroing it. The result is not real for
    /// real input, but the operator stays anti-Hermitian and has no
    /// null space beyond the constants, which is what a lattice Dirac
    /// operator needs to avoid doublers.
    pub fn partial_complex_full(
        &self,
        data: &[Complex64],
        ncomp: usize,
        axis: Axis,
        phase: BoundaryPhase,
    ) -> Result<Vec<Complex64>> {
        self.check_len(data.len(), ncomp)?;
        let ax = &self.spectral()?.axes[axis.index()];
        Ok(self.map_lines(data, ncomp, axis, |line| {
            ax.apply(line, phase, |_, k| Complex64::new(0.0, k))
        }))
    }

    /// First derivative of a real multi-component field with periodic
    /// continuation on a torus.
    pub fn partial(
        &self,
        data: &[f64],
        ncomp: usize,
        axis: Axis,
        scheme: DerivativeScheme,
    ) -> Result<Vec<f64>> {
        self.check_len(data.len(), ncomp)?;
        match scheme {
            DerivativeScheme::Spectral => {
                let z: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                let d = self.partial_complex(&z, ncomp, axis, scheme, BoundaryPhase::Periodic)?;
                Ok(d.into_iter().map(|v| v.re).collect())
            }
            DerivativeScheme::Central => {
                let h = self.spacing(axis);
                let bc = self.line_boundary(axis, BoundaryPhase::Periodic);
                Ok(self.map_lines(data, ncomp, axis, |line| central_line(line, h, bc)))
            }
        }
    }

    /// Both first derivatives of a real field.
    pub fn gradient(
        &self,
        data: &[f64],
        ncomp: usize,
        scheme: DerivativeScheme,
    ) -> Result<[Vec<f64>; 2]> {
        Ok([
            self.partial(data, ncomp, Axis::X, scheme)?,
            self.partial(data, ncomp, Axis::Y, scheme)?,
        ])
    }

    /// Derivatives with respect to Cartesian `x` and `y`. On a torus this is
    /// [`Lattice::gradient`]; on an annulus the polar derivatives are
    /// combined by the chain rule.
    pub fn cartesian_gradient(
        &self,
        data: &[f64],
        ncomp: usize,
        scheme: DerivativeScheme,
    ) -> Result<[Vec<f64>; 2]> {
        let [d1, d2] = self.gradient(data, ncomp, scheme)?;
        if self.is_torus() {
            return Ok([d1, d2]);
        }
        let mut gx = vec![0.0; data.len()];
        let mut gy = vec![0.0; data.len()];
        for s in 0..self.len() {
            let [r, t] = self.grid_coords(s);
            let (sn, cs) = t.sin_cos();
            for c in 0..ncomp {
                let k = s * ncomp + c;
                gx[k] = cs * d1[k] - sn / r * d2[k];
                gy[k] = sn * d1[k] + cs / r * d2[k];
            }
        }
        Ok([gx, gy])
    }

    /// Complex counterpart of [`Lattice::cartesian_gradient`].
    pub fn cartesian_gradient_complex(
        &self,
        data: &[Complex64],
        ncomp: usize,
        scheme: DerivativeScheme,
        spin: SpinStructure,
    ) -> Result<[Vec<Complex64>; 2]> {
        let d1 = self.partial_complex(data, ncomp, Axis::X, scheme, spin.phase1)?;
        let d2 = self.partial_complex(data, ncomp, Axis::Y, scheme, spin.phase2)?;
        if self.is_torus() {
            return Ok([d1, d2]);
        }
        let mut gx = vec![Complex64::default(); data.len()];
        let mut gy = vec![Complex64::default(); data.len()];
        for s in 0..self.len() {
            let [r, t] = self.grid_coords(s);
            let (sn, cs) = t.sin_cos();
            for c in 0..ncomp {
                let k = s * ncomp + c;
                gx[k] = d1[k] * cs - d2[k] * (sn / r);
                gy[k] = d1[k] * sn + d2[k] * (cs / r);
            }
        }
        Ok([gx, gy])
    }

    /// Discrete Laplacian of a real field.
    ///
    /// On a torus this is `D₁D₁ + D₂D₂` for the chosen first-derivative
    /// scheme, so it is exactly the gradient of [`Lattice::dirichlet_form`].
    /// On an annulus it is the compact five-point polar stencil on interior
    /// rings and zero on the Dirichlet rings.
    pub fn laplacian(
        &self,
        data: &[f64],
        ncomp: usize,
        scheme: DerivativeScheme,
    ) -> Result<Vec<f64>> {
        self.check_len(data.len(), ncomp)?;
        match self.geometry {
            Geometry::Torus { .. } => {
                let mut out = vec![0.0; data.len()];
                for axis in Axis::BOTH {
                    let dd = match scheme {
                        DerivativeScheme::Spectral => {
                            let ax = &self.spectral()?.axes[axis.index()];
                            let z: Vec<Complex64> =
                                data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                            self.map_lines(&z, ncomp, axis, |line| {
                                ax.apply(line, BoundaryPhase::Periodic, |j, k| {
                                    if ax.is_nyquist(j, BoundaryPhase::Periodic) {
                                        Complex64::new(0.0, 0.0)
                                    } else {
                                        Complex64::new(-k * k, 0.0)
                                    }
                                })
                            })
                            .into_iter()
                            .map(|v| v.re)
                            .collect::<Vec<_>>()
                        }
                        DerivativeScheme::Central => {
                            let d = self.partial(data, ncomp, axis, scheme)?;
                            self.partial(&d, ncomp, axis, scheme)?
                        }
                    };
                    for (o, v) in out.iter_mut().zip(dd) {
                        *o += v;
                    }
                }
                Ok(out)
            }
            Geometry::Annulus { .. } => Ok(self.polar_laplacian(data, ncomp)),
        }
    }

    /// Laplacian of a complex field; on a torus each axis uses its boundary
    /// phase.
    pub fn laplacian_complex(
        &self,
        data: &[Complex64],
        ncomp: usize,
        scheme: DerivativeScheme,
        spin: SpinStructure,
    ) -> Result<Vec<Complex64>> {
        self.check_len(data.len(), ncomp)?;
        if !self.is_torus() {
            let re: Vec<f64> = data.iter().map(|v| v.re).collect();
            let im: Vec<f64> = data.iter().map(|v| v.im).collect();
            let (lr, li) = (
                self.polar_laplacian(&re, ncomp),
                self.polar_laplacian(&im, ncomp),
            );
            return Ok(lr
                .into_iter()
                .zip(li)
                .map(|(a, b)| Complex64::new(a, b))
                .collect());
        }
        let mut out = vec![Complex64::default(); data.len()];
        for axis in Axis::BOTH {
            let phase = spin.phase(axis);
            let dd = match scheme {
                DerivativeScheme::Spectral => {
                    let ax = &self.spectral()?.axes[axis.index()];
                    self.map_lines(data, ncomp, axis, |line| {
                        ax.apply(line, phase, |j, k| {
                            if ax.is_nyquist(j, phase) {
                                Complex64::new(0.0, 0.0)
                            } else {
                                Complex64::new(-k * k, 0.0)
                            }
                        })
                    })
                }
                DerivativeScheme::Central => {
                    let d = self.partial_complex(data, ncomp, axis, scheme, phase)?;
                    self.partial_complex(&d, ncomp, axis, scheme, phase)?
                }
            };
            for (o, v) in out.iter_mut().zip(dd) {
                *o += v;
            }
        }
        Ok(out)
    }

    fn polar_laplacian(&self, data: &[f64], ncomp: usize) -> Vec<f64> {
        let (dr, dt) = (self.spacing(Axis::X), self.spacing(Axis::Y));
        let n2 = self.n2;
        let mut out = vec![0.0; data.len()];
        for i1 in 1..self.n1 - 1 {
            let r = self.radius(i1);
            let (rp, rm) = (r + 0.5 * dr, r - 0.5 * dr);
            for i2 in 0..n2 {
                let s = self.site(i1, i2);
                let (sp, sm) = (self.site(i1 + 1, i2), self.site(i1 - 1, i2));
                let (tp, tm) = (
                    self.site(i1, (i2 + 1) % n2),
                    self.site(i1, (i2 + n2 - 1) % n2),
                );
                for c in 0..ncomp {
                    let f = |t: usize| data[t * ncomp + c];
                    let radial = (rp * (f(sp) - f(s)) - rm * (f(s) - f(sm))) / (r * dr * dr);
                    let angular = (f(tp) - 2.0 * f(s) + f(tm)) / (r * r * dt * dt);
                    out[s * ncomp + c] = radial + angular;
                }
            }
        }
        out
    }

    /// Discrete Dirichlet energy `½ ∫ |df|²` of a real field with flat
    /// weights.
    ///
    /// Torus: `½ Σ w (|D₁f|² + |D₂f|²)`. Annulus: the edge sum whose
    /// gradient at interior sites is `−w Δ_h f` for the polar stencil.
    pub fn dirichlet_form(
        &self,
        data: &[f64],
        ncomp: usize,
        scheme: DerivativeScheme,
    ) -> Result<f64> {
        self.check_len(data.len(), ncomp)?;
        match self.geometry {
            Geometry::Torus { .. } => {
                let w = self.spacing(Axis::X) * self.spacing(Axis::Y);
                let [d1, d2] = self.gradient(data, ncomp, scheme)?;
                let sum: f64 = d1.iter().zip(&d2).map(|(a, b)| a * a + b * b).sum();
                Ok(0.5 * w * sum)
            }
            Geometry::Annulus { .. } => {
                let (dr, dt) = (self.spacing(Axis::X), self.spacing(Axis::Y));
                let n2 = self.n2;
                let mut sum = 0.0;
                for i1 in 0..self.n1 {
                    let r = self.radius(i1);
                    let trap = if i1 == 0 || i1 + 1 == self.n1 {
                        0.5
                    } else {
                        1.0
                    };
                    for i2 in 0..n2 {
                        let s = self.site(i1, i2);
                        let t = self.site(i1, (i2 + 1) % n2);
                        for c in 0..ncomp {
                            let a = data[t * ncomp + c] - data[s * ncomp + c];
                            sum += trap * dr / (r * dt) * a * a;
                            if i1 + 1 < self.n1 {
                                let u = self.site(i1 + 1, i2);
                                let b = data[u * ncomp + c] - data[s * ncomp + c];
                                sum += (r + 0.5 * dr) * dt / dr * b * b;
                            }
                        }
                    }
                }
                Ok(0.5 * sum)
            }
        }
    }

    /// Applies the two-dimensional Fourier multiplier `m(k₁, k₂)` to every
    /// component of a complex torus field with the given spin structure.
    pub fn fourier_multiplier(
        &self,
        data: &[Complex64],
        ncomp: usize,
        spin: SpinStructure,
        m: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<Vec<Complex64>> {
        self.check_len(data.len(), ncomp)?;
        let sp = self.spectral()?;
        let (ax1, ax2) = (&sp.axes[0], &sp.axes[1]);
        let hat1 = self.map_lines(data, ncomp, Axis::X, |line| ax1.forward(line, spin.phase1));
        let k1 = ax1.wavenumbers(spin.phase1);
        let k2 = ax2.wavenumbers(spin.phase2);
        let n2 = self.n2;
        // Transform along y, multiply, and return along y, one row at a time.
        let row = |line: &mut [Complex64], i1: usize| {
            ax2.forward(line, spin.phase2);
            for (j, v) in line.iter_mut().enumerate() {
                *v *= m(k1[i1], k2[j]);
            }
            ax2.inverse(line, spin.phase2);
        };
        let mut mixed = vec![Complex64::default(); data.len()];
        let rows: Vec<(usize, usize, Vec<Complex64>)> = {
            let run = |l: usize| {
                let (i1, c) = (l / ncomp, l % ncomp);
                let mut line: Vec<Complex64> =
                    (0..n2).map(|j| hat1[(i1 * n2 + j) * ncomp + c]).collect();
                row(&mut line, i1);
                (i1, c, line)
            };
            if parallel_enabled() {
                (0..self.n1 * ncomp).into_par_iter().map(run).collect()
            } else {
                (0..self.n1 * ncomp).map(run).collect()
            }
        };
        for (i1, c, line) in rows {
            for (j, v) in line.into_iter().enumerate() {
                mixed[(i1 * n2 + j) * ncomp + c] = v;
            }
        }
        Ok(self.map_lines(&mixed, ncomp, Axis::X, |line| {
            ax1.inverse(line, spin.phase1)
        }))
    }

    /// Fourier coefficients of a real periodic scalar field, indexed like the
    /// grid (`m₁ * n2 + m₂`), normalised so a unit constant has coefficient 1.
    pub fn fourier_coefficients(&self, data: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(data.len(), 1)?;
        let sp = self.spectral()?;
        let z: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let a = self.map_lines(&z, 1, Axis::X, |l| sp.axes[0].fwd.process(l));
        let b = self.map_lines(&a, 1, Axis::Y, |l| sp.axes[1].fwd.process(l));
        let scale = 1.0 / self.len() as f64;
        Ok(b.into_iter().map(|v| v * scale).collect())
    }

    /// Integer wavenumber pair `(m₁, m₂)` of coefficient index `idx` in
    /// [`Lattice::fourier_coefficients`].
    pub fn mode_index(&self, idx: usize) -> (i64, i64) {
        let (a, b) = self.indices(idx);
        let signed = |m: usize, n: usize| {
            if m < n / 2 {
                m as i64
            } else {
                m as i64 - n as i64
            }
        };
        (signed(a, self.n1), signed(b, self.n2))
    }
}

fn check_counts(n1: usize, n2: usize) -> Result<()> {
    if n1 < MIN_POINTS || n2 < MIN_POINTS {
        return Err(Error::InvalidLattice(format!(
            "grid {n1}×{n2} too coarse, need at least {MIN_POINTS} points per direction"
        )));
    }
    Ok(())
}

fn central_line<T>(line: &mut [T], h: f64, bc: LineBoundary)
where
    T: Copy
        + std::ops::Sub<Output = T>
        + std::ops::Mul<f64, Output = T>
        + std::ops::Add<Output = T>,
{
    let n = line.len();
    let src = line.to_vec();
    let inv = 0.5 / h;
    match bc {
        LineBoundary::Wrap(sign) => {
            for j in 0..n {
                let next = if j + 1 == n {
                    src[0] * sign
                } else {
                    src[j + 1]
                };
                let prev = if j == 0 {
                    src[n - 1] * sign
                } else {
                    src[j - 1]
                };
                line[j] = (next - prev) * inv;
            }
        }
        LineBoundary::OneSided => {
            for j in 1..n - 1 {
                line[j] = (src[j + 1] - src[j - 1]) * inv;
            }
            line[0] = (src[1] * 4.0 - src[0] * 3.0 - src[2]) * inv;
            line[n - 1] = (src[n - 1] * 3.0 - src[n - 2] * 4.0 + src[n - 3]) * inv;
        }
    }
}
