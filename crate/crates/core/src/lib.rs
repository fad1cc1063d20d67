//! Lattice solver and verification suite for magnetic Dirac-harmonic maps.
//!
//! A magnetic Dirac-harmonic map is a pair `(φ, ψ)` where `φ: M → N` maps a
//! flat surface into a target manifold and `ψ` is a vector spinor along `φ`.
//! Critical points of
//!
//! ```text
//!   E_B(φ, ψ) = ½ ∫ |dφ|² + ½ ∫ ⟨ψ, D̸ψ⟩ + ∫ φ*B
//! ```
//!
//! satisfy `τ(φ) = R(φ, ψ) + Z(dφ(e₁) ∧ dφ(e₂))` together with `D̸ψ = 0`.
//!
//! The crate works in the ambient picture: the target `N` is embedded in
//! `R^q`, the map is a grid of ambient `q`-vectors and the spinor is a grid of
//! `q` two-component complex spinors constrained to be tangent to `N`.
//!
//! Module map:
//!
//! - [`surface`]: lattices, spin structures, Clifford matrices, spectral and
//!   central derivatives, the untwisted Dirac operator, conformal rescaling.
//! - [`target`]: embedded targets (flat space, round spheres) and magnetic data.
//! - [`fields`]: map and spinor fields, constraint enforcement, initialisation,
//!   closed-form reference solutions.
//! - [`operators`]: energy, tension, curvature term, magnetic force, twisted
//!   Dirac operator, Euler–Lagrange residuals and the skew connection form.
//! - [`solver`]: low twisted-Dirac modes, projected gradient flow, coupled
//!   alternation.
//! - [`diagnostics`]: stress tensor, Hopf differential, conformal drift,
//!   gradient oracle, small-energy and decay estimates.
//! - [`cli`], [`config`], [`snapshot`]: batch front end and file formats.

// Lattice kernels index several parallel arrays with one site index.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod operators;
pub mod snapshot;
pub mod solver;
pub mod surface;
pub mod target;

pub use error::{Error, Result};

pub use surface::{
    Axis, BoundaryPhase, CliffordRep, DerivativeScheme, Lattice, LatticeKind, SpinStructure,
};

pub use fields::{MapField, SpinorField};
pub use num_complex::Complex64;
pub use operators::{EnergyBreakdown, Model};
pub use target::{MagneticData, MagneticForm, TargetManifold};
