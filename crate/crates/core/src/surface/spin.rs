use serde::{Deserialize, Serialize};

/// Boundary phase of a spinor across one period of the torus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPhase {
    #[default]
    Periodic,
    Antiperiodic,
}

impl BoundaryPhase {
    /// Factor picked up by a spinor value when it wraps once around the torus.
    pub fn wrap_sign(self) -> f64 {
        match self {
            BoundaryPhase::Periodic => 1.0,
            BoundaryPhase::Antiperiodic => -1.0,
        }
    }
}

/// Spin structure on the torus: one boundary phase per direction.
/// Annulus lattices ignore it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinStructure {
    pub phase1: BoundaryPhase,
    pub phase2: BoundaryPhase,
}

impl SpinStructure {
    pub const PERIODIC: SpinStructure = SpinStructure {
        phase1: BoundaryPhase::Periodic,
        phase2: BoundaryPhase::Periodic,
    };

    pub fn new(phase1: BoundaryPhase, phase2: BoundaryPhase) -> Self {
        Self { phase1, phase2 }
    }

    /// The four spin structures of the torus, periodic-periodic first.
    pub fn all_torus() -> [SpinStructure; 4] {
        use BoundaryPhase::*;
        [
            SpinStructure::new(Periodic, Periodic),
            SpinStructure::new(Periodic, Antiperiodic),
            SpinStructure::new(Antiperiodic, Periodic),
            SpinStructure::new(Antiperiodic, Antiperiodic),
        ]
    }

    pub fn phase(&self, axis: super::Axis) -> BoundaryPhase {
        match axis {
            super::Axis::X => self.phase1,
            super::Axis::Y => self.phase2,
        }
    }

    pub fn is_trivial(&self) -> bool {
        *self == Self::PERIODIC
    }
}
