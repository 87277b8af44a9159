//! Run configuration: a sectioned key = value file (TOML) with strict
//! unknown-key rejection. Missing keys fall back to the reference scenario
//! defaults, and the fully resolved configuration is echoed next to the
//! outputs so a run can be reproduced from its artifacts.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;
use tumorfield::initial::InitialConditions;
use tumorfield::model::ModelParams;
use tumorfield::nonlocal::{HaptotaxisMode, KernelSpec, OmegaMode};
use tumorfield::stepper::SchemeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub n_per_side: usize,
}

impl Default for MeshConfig {
    fn default() -> MeshConfig {
        MeshConfig { n_per_side: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HaptotaxisConfig {
    pub mode: HaptotaxisMode,
}

impl Default for HaptotaxisConfig {
    fn default() -> HaptotaxisConfig {
        HaptotaxisConfig {
            mode: HaptotaxisMode::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub eps: f64,
    #[serde(default = "default_omega_mode")]
    pub omega_mode: OmegaMode,
}

fn default_omega_mode() -> OmegaMode {
    OmegaMode::PaperDot
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Vtk,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Steps between emitted outputs.
    pub every: usize,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> OutputConfig {
        OutputConfig {
            directory: PathBuf::from("out"),
            every: 100,
            formats: vec![OutputFormat::Vtk, OutputFormat::Csv],
        }
    }
}

/// Scheme section as it appears in the file; `output.every` lives in the
/// output section, so the stepper field is filled in during resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub dt: f64,
    pub tol: f64,
    pub n_iter: usize,
    pub t_end: f64,
    pub lin_tol: f64,
    pub lin_max_iter: usize,
    pub on_nonconverged: tumorfield::stepper::NonconvergedPolicy,
}

impl Default for SchemeSection {
    fn default() -> SchemeSection {
        let s = SchemeConfig::default();
        SchemeSection {
            dt: s.dt,
            tol: s.tol,
            n_iter: s.n_iter,
            t_end: s.t_end,
            lin_tol: s.lin_tol,
            lin_max_iter: s.lin_max_iter,
            on_nonconverged: s.on_nonconverged,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub scheme: SchemeSection,
    pub mesh: MeshConfig,
    pub haptotaxis: HaptotaxisConfig,
    pub kernel: Option<KernelConfig>,
    pub initial: InitialConditions,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("model.{e}")))?;
        if self.mesh.n_per_side == 0 {
            return Err(ConfigError::Invalid(
                "mesh.n_per_side must be at least 1".into(),
            ));
        }
        self.scheme_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("scheme: {e}")))?;
        if self.output.every == 0 {
            return Err(ConfigError::Invalid("output.every must be >= 1".into()));
        }
        match (self.haptotaxis.mode, &self.kernel) {
            (HaptotaxisMode::Nonlocal, None) => Err(ConfigError::Invalid(
                "haptotaxis.mode = \"nonloc\" requires kernel.eps > 0".into(),
            )),
            (HaptotaxisMode::Nonlocal, Some(k)) if !(k.eps > 0.0) => Err(ConfigError::Invalid(
                format!("kernel.eps must be positive, got {}", k.eps),
            )),
            _ => Ok(()),
        }
    }

    /// Stepper scheme configuration with the output cadence folded in.
    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            dt: self.scheme.dt,
            tol: self.scheme.tol,
            n_iter: self.scheme.n_iter,
            t_end: self.scheme.t_end,
            output_every: self.output.every,
            lin_tol: self.scheme.lin_tol,
            lin_max_iter: self.scheme.lin_max_iter,
            on_nonconverged: self.scheme.on_nonconverged,
        }
    }

    pub fn kernel_spec(&self) -> Result<Option<KernelSpec>, ConfigError> {
        match &self.kernel {
            None => Ok(None),
            Some(k) => KernelSpec::new(k.eps, k.omega_mode)
                .map(Some)
                .map_err(|e| ConfigError::Invalid(format!("kernel: {e}"))),
        }
    }

    /// The fully resolved file contents, suitable for echoing.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_resolves_to_reference_defaults() {
        let config: RunConfig = toml::from_str("").unwrap();
        config.validate().unwrap();
        assert_eq!(config.model, ModelParams::default());
        assert_eq!(config.mesh.n_per_side, 64);
        assert_eq!(config.haptotaxis.mode, HaptotaxisMode::Local);
        assert_eq!(config.scheme.dt, 0.01);
        assert_eq!(config.scheme.t_end, 15.0);
        assert!(config.kernel.is_none());
    }

    #[test]
    fn nonlocal_mode_without_kernel_is_rejected() {
        let config: RunConfig = toml::from_str("[haptotaxis]\nmode = \"nonloc\"\n").unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("kernel.eps"));
    }

    #[test]
    fn negative_rate_is_rejected_with_key_name() {
        let config: RunConfig = toml::from_str("[model]\nlambda_t_pro = -1.0\n").unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("lambda_t_pro"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[model]\nlambda_t_prop = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("lambda_t_prop"));
        let err = toml::from_str::<RunConfig>("[turbo]\nboost = true\n").unwrap_err();
        assert!(err.to_string().contains("turbo"));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"
[model]
chi_h = 0.002
[scheme]
t_end = 2.5
[mesh]
n_per_side = 32
[haptotaxis]
mode = "nonloc"
[kernel]
eps = 0.0275
omega_mode = "component_consistent"
[initial.phi_t]
shape = "disk"
center = [0.1, -0.2]
radius = 0.15
[output]
every = 10
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        config.validate().unwrap();
        let echoed = config.to_toml();
        let reparsed: RunConfig = toml::from_str(&echoed).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn parse_errors_carry_line_information() {
        let err = toml::from_str::<RunConfig>("[model\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn unknown_initial_shape_is_rejected() {
        let err =
            toml::from_str::<RunConfig>("[initial.phi_t]\nshape = \"blob\"\n").unwrap_err();
        assert!(err.to_string().contains("blob"), "{err}");
    }
}
