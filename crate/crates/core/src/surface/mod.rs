//! Flat lattice domains and the spin geometry that lives on them.

mod clifford;
mod conformal;
mod dirac;
mod lattice;
mod spin;

pub use clifford::{spinor_inner, CliffordRep, Spinor};
pub use conformal::{conformal_rescale, ConformalFactor};
pub use dirac::{dirac_conformal, dirac_untwisted, WILSON_R};
pub use lattice::{Lattice, LatticeKind};
pub use spin::{BoundaryPhase, SpinStructure};

use serde::{Deserialize, Serialize};

/// Lattice coordinate direction. On a torus these are `x` and `y`; on an
/// annulus they are the radial and angular directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Discretisation used for first derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeScheme {
    /// Fourier differentiation; torus only. Exact on band-limited fields.
    #[default]
    Spectral,
    /// Second-order central differences.
    Central,
}

/// Environment variable selecting the number of worker threads.
pub const THREADS_ENV: &str = "MAGDIRAC_THREADS";

/// Worker threads requested through [`THREADS_ENV`] (default 1).
pub fn requested_threads() -> usize {
    static THREADS: std::sync::OnceLock<usize> = std::sync::OnceLock::new();
    *THREADS.get_or_init(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .unwrap_or(1)
    })
}

/// Line transforms run on the rayon pool only when more than one thread was
/// requested. Each line is computed independently and written back in a
/// fixed order, so results do not depend on the thread count.
pub(crate) fn parallel_enabled() -> bool {
    requested_threads() > 1 && rayon::current_num_threads() > 1
}
