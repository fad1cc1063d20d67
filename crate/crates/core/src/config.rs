//! Run configuration: a single JSON document with `"version": 1`.
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsConfig;
use crate::error::{Error, Result};
use crate::fields::{init_map, init_spinor, MapField, MapInit, SpinorField, SpinorInit};
use crate::operators::Model;
use crate::snapshot;
use crate::solver::SolveConfig;
use crate::surface::{DerivativeScheme, Lattice, SpinStructure};
use crate::target::{MagneticData, MagneticForm, TargetManifold};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LatticeSpec {
    Torus {
        n1: usize,
        n2: usize,
        #[serde(default = "two_pi")]
        l1: f64,
        #[serde(default = "two_pi")]
        l2: f64,
    },
    DiscAnnulus {
        n_r: usize,
        n_theta: usize,
        r_inner: f64,
        r_outer: f64,
    },
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

impl LatticeSpec {
    pub fn build(&self) -> Result<Lattice> {
        match *self {
            LatticeSpec::Torus { n1, n2, l1, l2 } => Lattice::torus(n1, n2, l1, l2),
            LatticeSpec::DiscAnnulus {
                n_r,
                n_theta,
                r_inner,
                r_outer,
            } => Lattice::annulus(n_r, n_theta, r_inner, r_outer),
        }
    }
}

/// Magnetic three-form as named in a config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MagneticSpec {
    #[default]
    None,
    /// `Ω = 2H·vol` on `R³`.
    HSurface { h: f64 },
    /// `Ω = c·vol` on `R³`.
    VolumeR3 { c: f64 },
    /// Constant components `Ω_{kij}`, row-major `q×q×q`.
    Constant { q: usize, omega: Vec<f64> },
    /// `Ω = λ·vol` on `S³`.
    SphereVolume { lambda: f64 },
}

impl MagneticSpec {
    pub fn build(&self, omega_mode: bool) -> MagneticData {
        let data = match self {
            MagneticSpec::None => MagneticData::none(),
            MagneticSpec::HSurface { h } => MagneticData::h_surface(*h),
            MagneticSpec::VolumeR3 { c } => MagneticData::volume_r3(*c),
            MagneticSpec::Constant { q, omega } => {
                MagneticData::from_form(MagneticForm::Constant {
                    q: *q,
                    omega: omega.clone(),
                })
            }
            MagneticSpec::SphereVolume { lambda } => MagneticData::sphere_volume(*lambda),
        };
        if omega_mode {
            data.omega_mode()
        } else {
            data
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub map: MapInit,
    #[serde(default)]
    pub spinor: SpinorInit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub lattice: LatticeSpec,
    pub target: TargetManifold,
    #[serde(default)]
    pub magnetic: MagneticSpec,
    /// Drop the primitive from the energy and keep only the force.
    #[serde(default)]
    pub omega_mode: bool,
    #[serde(default)]
    pub spin: SpinStructure,
    /// Defaults to spectral on a torus and central on an annulus.
    #[serde(default)]
    pub scheme: Option<DerivativeScheme>,
    /// Initial fields; ignored when `snapshot` is given.
    #[serde(default)]
    pub init: Option<InitSpec>,
    /// Field snapshot to start from (relative paths resolve against the
    /// config file).
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative snapshot paths are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(snap), Some(dir)) = (&cfg.snapshot, path.parent()) {
            if snap.is_relative() {
                cfg.snapshot = Some(dir.join(snap));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "version: expected {CONFIG_VERSION}, got {}",
                self.version
            )));
        }
        self.solve.validate()?;
        self.model()?.validate()?;
        Ok(())
    }

    pub fn model(&self) -> Result<Model> {
        let lattice = self.lattice.build()?;
        let mut model = Model::new(lattice, self.target)
            .with_magnetic(self.magnetic.build(self.omega_mode))
            .with_spin(self.spin);
        if let Some(s) = self.scheme {
            model = model.with_scheme(s);
        }
        Ok(model)
    }

    /// Initial fields from the snapshot, the init spec, or (absent both) a
    /// constant map at the first coordinate axis with zero spinor.
    pub fn initial_fields(&self, model: &Model) -> Result<(MapField, SpinorField)> {
        if let Some(path) = &self.snapshot {
            return snapshot::read_fields(path, &model.lattice, &model.target);
        }
        let init = self.init.clone().unwrap_or_else(|| {
            let mut point = vec![0.0; model.q()];
            if model.target.is_compact() {
                point[model.q() - 1] = 1.0;
            }
            InitSpec {
                map: MapInit::Constant { point },
                spinor: SpinorInit::Zero,
            }
        });
        let phi = init_map(&init.map, &model.lattice, &model.target, self.seed)?;
        let psi = init_spinor(
            &init.spinor,
            &model.lattice,
            &phi,
            &model.target,
            model.spin,
            self.seed,
        )?;
        Ok((phi, psi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "lattice": {"kind": "torus", "n1": 16, "n2": 16},
        "target": {"name": "sphere", "n": 2},
        "init": {"map": {"kind": "random-smooth", "point": [0, 0, 1]}}
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.solve, SolveConfig::default());
        let model = cfg.model().unwrap();
        assert_eq!(model.scheme, DerivativeScheme::Spectral);
        let (phi, psi) = cfg.initial_fields(&model).unwrap();
        assert!(phi.max_distance(&model.target) < 1e-12);
        assert!(psi.is_zero());
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let typo = MINIMAL
            .replace("\"seed\"", "x")
            .replace("\"version\": 1,", "\"version\": 1, \"tol_mpa\": 1,");
        assert!(matches!(RunConfig::from_json(&typo), Err(Error::Config(_))));
        let nested = MINIMAL.replace("\"n\": 2", "\"n\": 2, \"radius\": 1");
        assert!(RunConfig::from_json(&nested).is_err());
        let v2 = MINIMAL.replace("\"version\": 1", "\"version\": 2");
        let err = RunConfig::from_json(&v2).unwrap_err().to_string();
        assert!(err.contains("version"));
    }

    #[test]
    fn missing_target_name_is_named_in_the_error() {
        let bad = MINIMAL.replace("\"name\": \"sphere\", ", "");
        let err = RunConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("name"), "{err}");
    }

    #[test]
    fn spectral_scheme_on_annulus_is_refused() {
        let cfg = r#"{"version": 1,
            "lattice": {"kind": "disc-annulus", "n_r": 16, "n_theta": 32, "r_inner": 0.1, "r_outer": 1},
            "target": {"name": "flat", "q": 3}, "scheme": "spectral"}"#;
        assert!(RunConfig::from_json(cfg).is_err());
    }
}
