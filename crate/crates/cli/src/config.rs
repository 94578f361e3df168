//! Experiment configuration files.

use std::path::PathBuf;

use fhn_waves::dns::{Frame, DEFAULT_DT, DEFAULT_DX, DEFAULT_THRESHOLD, DEFAULT_TRANSIENT_CUT};
use fhn_waves::wavetrain::DEFAULT_N;
use fhn_waves::ReactionModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SingularLimit,
    DispersionCurve,
    WavetrainContinue,
    BlochSpectrum,
    DeffSweep,
    DnsPerturb,
    InstabilityDemo,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingularLimit => "singular-limit",
            Scenario::DispersionCurve => "dispersion-curve",
            Scenario::WavetrainContinue => "wavetrain-continue",
            Scenario::BlochSpectrum => "bloch-spectrum",
            Scenario::DeffSweep => "deff-sweep",
            Scenario::DnsPerturb => "dns-perturb",
            Scenario::InstabilityDemo => "instability-demo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKindConfig {
    Classic,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKindConfig,
    pub a: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Only used by the modified model.
    #[serde(default)]
    pub r: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: ModelKindConfig::Classic, a: 0.2, gamma: 1.0, epsilon: 1e-3, r: None }
    }
}

impl ModelConfig {
    pub fn instability_default() -> Self {
        Self { kind: ModelKindConfig::Modified, a: 0.25, gamma: 0.01, epsilon: 0.002, r: Some(0.998) }
    }

    pub fn build(&self) -> ReactionModel {
        match self.kind {
            ModelKindConfig::Classic => ReactionModel::classic(self.a, self.gamma, self.epsilon),
            ModelKindConfig::Modified => ReactionModel::modified(self.a, self.gamma, self.epsilon, self.r.unwrap_or(0.998)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    None,
    Bump,
    Random,
}

/// Numerical knobs. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Collocation points of the wave-train solver (odd).
    pub n: usize,
    /// Samples of the critical curve.
    pub n_rho: usize,
    /// Bloch-frequency range of the dispersion curve; defaults to the Brillouin zone.
    pub rho_max: Option<f64>,
    /// Frequencies per zone of the extended Bloch scan.
    pub n_nu: usize,
    /// Upper end of the extended Bloch scan.
    pub rho_max_extended: f64,
    pub epsilons: Vec<f64>,
    pub c_range: (f64, f64),
    pub c_steps: usize,
    pub dt: f64,
    pub dx: f64,
    pub repeats: usize,
    pub t_end: f64,
    pub sample_dt: f64,
    pub threshold: f64,
    pub transient_cut: f64,
    pub perturbation: PerturbationKind,
    pub amplitude: f64,
    pub frame: Frame,
    /// Period of the main-formula curve; `None` uses the singular estimate `L0 / eps`.
    pub l_eps: Option<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            n_rho: 61,
            rho_max: None,
            n_nu: 11,
            rho_max_extended: 0.25,
            epsilons: vec![1e-3, 1e-4, 1e-5, 1e-6],
            c_range: (0.4, 2.0),
            c_steps: 16,
            dt: DEFAULT_DT,
            dx: DEFAULT_DX,
            repeats: 8,
            t_end: 4000.0,
            sample_dt: 10.0,
            threshold: DEFAULT_THRESHOLD,
            transient_cut: DEFAULT_TRANSIENT_CUT,
            perturbation: PerturbationKind::Bump,
            amplitude: 1e-2,
            frame: Frame::Comoving,
            l_eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub scenario: Scenario,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub numerics: Numerics,
    /// Relative to the output root unless absolute; defaults to the scenario name.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Model with the scenario default filled in.
    pub fn model(&self) -> ModelConfig {
        self.model.unwrap_or(match self.scenario {
            Scenario::InstabilityDemo => ModelConfig::instability_default(),
            _ => ModelConfig::default(),
        })
    }

    pub fn speed(&self) -> f64 {
        self.c.unwrap_or(match self.scenario {
            Scenario::InstabilityDemo => 3.0,
            _ => 2.0,
        })
    }

    /// Copy with all scenario defaults written out.
    pub fn effective(&self) -> Config {
        Config { model: Some(self.model()), c: Some(self.speed()), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let m = self.model();
        if !(m.epsilon > 0.0 && m.epsilon < 1.0) {
            return bad(format!("epsilon = {} must lie in (0, 1)", m.epsilon));
        }
        if m.kind == ModelKindConfig::Classic && m.r.is_some() {
            return bad("r is only meaningful for the modified model".into());
        }
        if !(self.speed() > 0.0) {
            return bad(format!("c = {} must be positive", self.speed()));
        }
        let nm = &self.numerics;
        if nm.n % 2 == 0 || nm.n < 65 {
            return bad(format!("n = {} must be odd and at least 65", nm.n));
        }
        if nm.n_rho < 5 || nm.n_nu < 3 {
            return bad("n_rho must be >= 5 and n_nu >= 3".into());
        }
        if nm.rho_max.is_some_and(|r| !(r > 0.0)) || !(nm.rho_max_extended > 0.0) {
            return bad("rho ranges must be positive".into());
        }
        if nm.l_eps.is_some_and(|l| !(l > 0.0)) {
            return bad("l_eps must be positive".into());
        }
        if self.scenario == Scenario::DeffSweep {
            if nm.epsilons.is_empty() {
                return bad("deff-sweep needs at least one epsilon".into());
            }
            if nm.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                return bad("deff-sweep epsilons must lie in (0, 1)".into());
            }
        }
        if self.scenario == Scenario::WavetrainContinue && (nm.c_steps == 0 || !(nm.c_range.0 > 0.0 && nm.c_range.1 > 0.0)) {
            return bad("wavetrain-continue needs positive speeds and c_steps >= 1".into());
        }
        if !(nm.dt > 0.0 && nm.dx > 0.0 && nm.t_end > 0.0 && nm.sample_dt >= nm.dt && nm.threshold > 0.0) {
            return bad("dt, dx, t_end, threshold must be positive and sample_dt >= dt".into());
        }
        if nm.repeats == 0 || !(0.0..1.0).contains(&nm.transient_cut) || !(nm.amplitude >= 0.0) {
            return bad("repeats >= 1, transient_cut in [0, 1) and amplitude >= 0 required".into());
        }
        Ok(())
    }
}
