//! Run configuration: a JSON document with defaults, overridden by flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use spotcheck_core::incentives::{IccpDeviations, Strategy, DEFAULT_TOLERANCE};
use spotcheck_core::mechanisms::{CountPolicy, EconParams};
use spotcheck_core::prob_model::{HeteroModel, NoisePair, SignalModel};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FamilyChoice {
    Ros,
    Rss,
    Rsus,
    Hetero,
    /// Policy given explicitly in the config file.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ConceptChoice {
    Dsic,
    Iccp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub prior_a: f64,
    pub p_a_given_a: f64,
    pub p_b_given_b: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { prior_a: 0.8, p_a_given_a: 0.9, p_b_given_b: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub p_a_given_a: f64,
    pub p_b_given_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentConfig {
    pub p_a_given_a: f64,
    pub p_b_given_b: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeteroConfig {
    pub prior_a: f64,
    pub ta: NoiseConfig,
    pub students: Vec<StudentConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconConfig {
    pub cost: f64,
    pub reward: f64,
}

impl Default for EconConfig {
    fn default() -> Self {
        Self { cost: 1.0, reward: 25.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRcConfig {
    pub r_over_c: Vec<f64>,
    pub p_signal: Vec<f64>,
    /// Step of the prior grid on `[0.5, 1)`.
    pub prior_step: f64,
}

impl Default for SweepRcConfig {
    fn default() -> Self {
        Self {
            r_over_c: (1..=50).map(|i| f64::from(2 * i)).collect(),
            p_signal: vec![0.6, 0.7, 0.8, 0.9, 1.0],
            prior_step: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepNConfig {
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for SweepNConfig {
    fn default() -> Self {
        Self { n_min: 2, n_max: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hetero_model: Option<HeteroConfig>,
    pub econ: EconConfig,
    pub n: usize,
    pub family: FamilyChoice,
    pub concept: ConceptChoice,
    pub iccp_deviations: IccpDeviations,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyConfig>,
    /// Strategy profile for `simulate`; all truthful when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<Strategy>>,
    pub trials: u64,
    pub seed: u64,
    pub sweep_rc: SweepRcConfig,
    pub sweep_n: SweepNConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            hetero_model: None,
            econ: EconConfig::default(),
            n: 3,
            family: FamilyChoice::Rss,
            concept: ConceptChoice::Dsic,
            iccp_deviations: IccpDeviations::default(),
            tolerance: DEFAULT_TOLERANCE,
            policy: None,
            profile: None,
            trials: 1_000_000,
            seed: 42,
            sweep_rc: SweepRcConfig::default(),
            sweep_n: SweepNConfig::default(),
            out: None,
            format: None,
        }
    }
}

/// Command-line overrides; every flag replaces the matching config value.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Prior probability of quality `a`.
    #[arg(long, global = true, value_name = "P")]
    pub prior: Option<f64>,
    /// Pr[s = a | q = a].
    #[arg(long = "p-aa", global = true, value_name = "P")]
    pub p_aa: Option<f64>,
    /// Pr[s = b | q = b].
    #[arg(long = "p-bb", global = true, value_name = "P")]
    pub p_bb: Option<f64>,
    /// Effort cost c.
    #[arg(long, global = true, value_name = "C")]
    pub cost: Option<f64>,
    /// Reward R for matching the TA.
    #[arg(long, global = true, value_name = "R")]
    pub reward: Option<f64>,
    /// Students per assignment.
    #[arg(long, global = true, value_name = "N")]
    pub n: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub family: Option<FamilyChoice>,
    #[arg(long, global = true, value_enum)]
    pub concept: Option<ConceptChoice>,
    /// Let the deviating student misreport after effort under ICCP.
    #[arg(long, global = true)]
    pub full_deviations: bool,
    /// Absolute tolerance on utility gaps.
    #[arg(long, global = true, value_name = "TOL")]
    pub tolerance: Option<f64>,
    /// Comma-separated strategies, e.g. LAZY_A,TRUTHFUL,TRUTHFUL.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_strategy)]
    pub profile: Option<Vec<Strategy>>,
    /// Monte Carlo trials.
    #[arg(long, global = true, value_name = "T")]
    pub trials: Option<u64>,
    /// RNG seed.
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,
    /// Comma-separated R/c grid for sweep-rc.
    #[arg(long = "r-over-c", global = true, value_delimiter = ',')]
    pub r_over_c: Option<Vec<f64>>,
    /// Comma-separated signal accuracies for sweep-rc.
    #[arg(long = "p-signal", global = true, value_delimiter = ',')]
    pub p_signal: Option<Vec<f64>>,
    /// Prior grid step for sweep-rc.
    #[arg(long = "prior-step", global = true)]
    pub prior_step: Option<f64>,
    /// First n for sweep-n.
    #[arg(long = "n-min", global = true)]
    pub n_min: Option<usize>,
    /// Last n for sweep-n.
    #[arg(long = "n-max", global = true)]
    pub n_max: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    let quoted = format!("\"{}\"", s.trim().to_ascii_uppercase().replace('-', "_"));
    serde_json::from_str(&quoted).map_err(|_| format!("unknown strategy `{s}`"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads the config file if one is given, then applies the flags.
    pub fn resolve(overrides: &Overrides) -> Result<Self> {
        let mut cfg = match &overrides.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = o.prior {
            self.model.prior_a = p;
            if let Some(h) = &mut self.hetero_model {
                h.prior_a = p;
            }
        }
        set(&mut self.model.p_a_given_a, o.p_aa);
        set(&mut self.model.p_b_given_b, o.p_bb);
        set(&mut self.econ.cost, o.cost);
        set(&mut self.econ.reward, o.reward);
        set(&mut self.n, o.n);
        set(&mut self.family, o.family);
        set(&mut self.concept, o.concept);
        if o.full_deviations {
            self.iccp_deviations = IccpDeviations::Full;
        }
        set(&mut self.tolerance, o.tolerance);
        if o.profile.is_some() {
            self.profile.clone_from(&o.profile);
        }
        set(&mut self.trials, o.trials);
        set(&mut self.seed, o.seed);
        if let Some(grid) = &o.r_over_c {
            self.sweep_rc.r_over_c.clone_from(grid);
        }
        if let Some(grid) = &o.p_signal {
            self.sweep_rc.p_signal.clone_from(grid);
        }
        set(&mut self.sweep_rc.prior_step, o.prior_step);
        set(&mut self.sweep_n.n_min, o.n_min);
        set(&mut self.sweep_n.n_max, o.n_max);
        if o.out.is_some() {
            self.out.clone_from(&o.out);
        }
        if o.format.is_some() {
            self.format = o.format;
        }
    }

    /// Checks the rules the core constructors would otherwise reject later,
    /// plus the cross-field ones only the CLI knows about.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.trials == 0 {
            return usage("trials must be at least 1".into());
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return usage(format!("tolerance {} must be >= 0", self.tolerance));
        }
        let hetero = self.family == FamilyChoice::Hetero;
        match (&self.hetero_model, hetero) {
            (None, true) => return usage("family hetero needs a hetero_model table".into()),
            (Some(_), false) if self.family != FamilyChoice::Custom => {
                return usage("hetero_model is only used with family hetero or custom".into())
            }
            _ => {}
        }
        if self.family == FamilyChoice::Custom && self.policy.is_none() {
            return usage("family custom needs a policy with x_a and x_b".into());
        }
        if self.hetero_model.is_none() && self.n == 0 {
            return usage("n must be at least 1".into());
        }
        self.econ()?;
        match &self.hetero_model {
            Some(_) => {
                self.hetero()?;
            }
            None => {
                self.signal_model()?;
            }
        }
        let step = self.sweep_rc.prior_step;
        if !(step > 0.0 && step <= 0.5) {
            return usage(format!("prior_step {step} must lie in (0, 0.5]"));
        }
        if self.sweep_rc.r_over_c.is_empty() || self.sweep_rc.p_signal.is_empty() {
            return usage("sweep grids must be nonempty".into());
        }
        if let Some(&r) = self.sweep_rc.r_over_c.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return usage(format!("R/c value {r} must be > 0"));
        }
        if let Some(&p) = self.sweep_rc.p_signal.iter().find(|p| !(0.5..=1.0).contains(*p)) {
            return usage(format!("signal accuracy {p} must lie in [0.5, 1]"));
        }
        let SweepNConfig { n_min, n_max } = self.sweep_n;
        if n_min == 0 || n_min > n_max {
            return usage(format!("n range {n_min}..={n_max} is empty or starts at 0"));
        }
        Ok(())
    }

    pub fn econ(&self) -> Result<EconParams> {
        Ok(EconParams::new(self.econ.cost, self.econ.reward)?)
    }

    pub fn signal_model(&self) -> Result<SignalModel> {
        let m = self.model;
        Ok(SignalModel::new(m.prior_a, m.p_a_given_a, m.p_b_given_b)?)
    }

    pub fn hetero(&self) -> Result<Option<HeteroModel>> {
        let Some(h) = &self.hetero_model else { return Ok(None) };
        let noise = h
            .students
            .iter()
            .map(|s| NoisePair::new(s.p_a_given_a, s.p_b_given_b))
            .collect::<spotcheck_core::Result<Vec<_>>>()?;
        let ta = NoisePair::new(h.ta.p_a_given_a, h.ta.p_b_given_b)?;
        let costs = h.students.iter().map(|s| s.cost).collect();
        Ok(Some(HeteroModel::new(h.prior_a, noise, ta, costs)?))
    }

    /// Number of students, taken from the hetero table when there is one.
    pub fn students(&self) -> usize {
        self.hetero_model.as_ref().map_or(self.n, |h| h.students.len())
    }

    pub fn custom_policy(&self) -> Result<Option<CountPolicy>> {
        let Some(p) = &self.policy else { return Ok(None) };
        let policy = CountPolicy::new(p.x_a.clone(), p.x_b.clone())?;
        if policy.n() != self.students() {
            return Err(CliError::Usage(format!(
                "policy covers {} students, config has {}",
                policy.n(),
                self.students()
            )));
        }
        Ok(Some(policy))
    }

    pub fn profile(&self) -> Result<Vec<Strategy>> {
        let n = self.students();
        match &self.profile {
            Some(p) if p.len() != n => {
                Err(CliError::Usage(format!("profile has {} strategies for {} students", p.len(), n)))
            }
            Some(p) => Ok(p.clone()),
            None => Ok(vec![Strategy::Truthful; n]),
        }
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_parameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.model, ModelConfig { prior_a: 0.8, p_a_given_a: 0.9, p_b_given_b: 0.9 });
        assert_eq!(cfg.econ.reward / cfg.econ.cost, 25.0);
        assert_eq!(cfg.sweep_rc.prior_step, 0.001);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"n": 5, "econ": {"cost": 2, "reward": 30}}"#).unwrap();
        assert_eq!(cfg.n, 5);
        assert_eq!(cfg.econ.cost, 2.0);
        assert_eq!(cfg.model, ModelConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"nn": 5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"prior_a": 0.8, "p_a_given_a": 0.9, "p_b_given_b": 0.9, "x": 1}}"#)
            .is_err());
        assert!(RunConfig::from_json(r#"{"sweep_rc": {"step": 0.01}}"#).is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg = RunConfig::from_json(r#"{"n": 5, "seed": 1}"#).unwrap();
        cfg.apply(&Overrides { n: Some(7), prior: Some(0.6), ..Default::default() });
        assert_eq!(cfg.n, 7);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.model.prior_a, 0.6);
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.trials = 0));
        assert!(bad(|c| c.n = 0));
        assert!(bad(|c| c.model.prior_a = 1.5));
        assert!(bad(|c| c.econ.reward = -1.0));
        assert!(bad(|c| c.family = FamilyChoice::Hetero));
        assert!(bad(|c| c.family = FamilyChoice::Custom));
        assert!(bad(|c| c.sweep_rc.prior_step = 0.0));
        assert!(bad(|c| c.sweep_rc.p_signal = vec![0.4]));
        assert!(bad(|c| c.sweep_n = SweepNConfig { n_min: 5, n_max: 4 }));
    }

    #[test]
    fn strategy_names() {
        assert_eq!(parse_strategy("lazy-a").unwrap(), Strategy::LazyA);
        assert_eq!(parse_strategy("TRUTHFUL").unwrap(), Strategy::Truthful);
        assert!(parse_strategy("honest").is_err());
    }
}
