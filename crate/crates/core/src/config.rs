//! Run configuration: protocol hyperparameters, agent role definitions,
//! backend selection, and override handling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentRole, MarkerLexicon, ModelError, RoleCategory};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown override key {0:?}")]
    UnknownKey(String),
    #[error("cannot parse override {key}={value}: {reason}")]
    BadOverrideValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("lexicon line {line}: {reason}")]
    LexiconLine { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

/// Which per-agent signal drives argument-round weight updates:
/// `exp(-beta * U_i)` over uncertainties or `exp(gamma * C_i)` over
/// argument confidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArgumentWeighting {
    #[default]
    Uncertainty,
    Confidence,
}

/// Protocol hyperparameters. Defaults mirror the deployed configuration:
/// alpha/beta 0.5, weighting sensitivity 1.5, trigger thresholds
/// (0.45, 0.55), termination threshold 0.15, convergence epsilon 0.01,
/// round cap 3, and a 3+3 agent panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Entropy weight in the generation-process uncertainty.
    pub alpha_phi: f64,
    /// Top-gap weight in the generation-process uncertainty.
    pub beta_phi: f64,
    /// Sigmoid scaling of the semantic-marker estimator.
    pub sem_k: f64,
    /// Sigmoid offset of the semantic-marker estimator.
    pub sem_offset: f64,
    /// Hedge/confidence marker lexicon.
    pub lexicon: MarkerLexicon,
    /// Sensitivity of softmax weights to uncertainty.
    pub beta_weight: f64,
    /// Collaboration-reward coefficient in agent utility.
    pub lambda_collab: f64,
    /// System-uncertainty penalty coefficient in agent utility.
    pub gamma_sys: f64,
    /// Entropy-regularization temperature of the weight objective.
    pub eta_temp: f64,
    /// Debate trigger threshold on system uncertainty.
    pub theta_u: f64,
    /// Debate trigger threshold on the conflict score.
    pub theta_c: f64,
    /// Termination threshold on system uncertainty.
    pub theta_u_term: f64,
    /// Stagnation threshold on |delta U_sys| between rounds.
    pub epsilon_conv: f64,
    /// Maximum number of debate rounds.
    pub k_max: u32,
    /// Number of base expert agents.
    pub n_base: usize,
    /// Number of critic agents engaged during debate.
    pub n_crit: usize,
    /// Claims with confidence below this become dispute focus.
    pub sigma_min_dispute: f64,
    /// Normalize per-position entropy by ln(vocab_size_hint). The raw
    /// variant exists for fidelity experiments; it can push uncertainties
    /// past 1 before clamping.
    pub normalize_entropy: bool,
    /// Signal used for weight updates in argument rounds.
    pub argument_weighting: ArgumentWeighting,
    /// Weight of the text-level channel when blending round-k agent
    /// uncertainty with the claim-confidence channel.
    pub uncertainty_blend: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha_phi: 0.5,
            beta_phi: 0.5,
            sem_k: 1.0,
            sem_offset: 0.3,
            lexicon: default_lexicon(),
            beta_weight: 1.5,
            lambda_collab: 0.3,
            gamma_sys: 0.2,
            eta_temp: 1.0,
            theta_u: 0.45,
            theta_c: 0.55,
            theta_u_term: 0.15,
            epsilon_conv: 0.01,
            k_max: 3,
            n_base: 3,
            n_crit: 3,
            sigma_min_dispute: 0.5,
            normalize_entropy: true,
            argument_weighting: ArgumentWeighting::Uncertainty,
            uncertainty_blend: 0.5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |reason: &str| Err(ConfigError::Invalid(reason.to_string()));
        if self.alpha_phi < 0.0 || self.beta_phi < 0.0 || self.alpha_phi + self.beta_phi <= 0.0 {
            return bad("alpha_phi and beta_phi must be >= 0 with a positive sum");
        }
        if self.sem_k <= 0.0 {
            return bad("sem_k must be > 0");
        }
        if self.lexicon.is_empty() {
            return bad("lexicon must be non-empty");
        }
        if self.beta_weight < 0.0 || self.lambda_collab < 0.0 || self.gamma_sys < 0.0 {
            return bad("beta_weight, lambda_collab, gamma_sys must be >= 0");
        }
        if self.eta_temp <= 0.0 {
            return bad("eta_temp must be > 0");
        }
        for (name, v) in [
            ("theta_u", self.theta_u),
            ("theta_c", self.theta_c),
            ("theta_u_term", self.theta_u_term),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConfigError::Invalid(format!("{name} must lie in (0,1)")));
            }
        }
        if self.theta_u_term >= self.theta_u {
            // A debate triggered by high uncertainty must be able to
            // terminate below the trigger.
            return bad("theta_u_term must be strictly below theta_u");
        }
        if self.epsilon_conv <= 0.0 {
            return bad("epsilon_conv must be > 0");
        }
        if self.n_base == 0 {
            return bad("n_base must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.sigma_min_dispute) {
            return bad("sigma_min_dispute must lie in [0,1]");
        }
        if !(0.0..=1.0).contains(&self.uncertainty_blend) {
            return bad("uncertainty_blend must lie in [0,1]");
        }
        Ok(())
    }
}

fn default_lexicon() -> MarkerLexicon {
    MarkerLexicon::new(vec![
        ("might".into(), 0.8),
        ("possibly".into(), 0.8),
        ("unsure".into(), 0.8),
        ("perhaps".into(), 0.8),
        ("not sure".into(), 0.8),
        ("confident".into(), 0.2),
        ("clear".into(), 0.2),
    ])
    .expect("default lexicon is valid")
}

/// Loads a marker lexicon from a UTF-8 file with one `phrase<TAB>weight`
/// entry per line. Blank lines and `#` comment lines are skipped.
pub fn load_lexicon(path: &Path) -> Result<MarkerLexicon, ConfigError> {
    let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (phrase, weight) = line.split_once('\t').ok_or(ConfigError::LexiconLine {
            line: line_no,
            reason: "expected phrase<TAB>weight".to_string(),
        })?;
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| ConfigError::LexiconLine {
                line: line_no,
                reason: format!("cannot parse weight {:?}", weight.trim()),
            })?;
        entries.push((phrase.trim().to_string(), weight));
    }
    Ok(MarkerLexicon::new(entries)?)
}

/// Instruction appended to every base-agent prompt so outputs are parseable
/// by the claim grammar and the answer extractor.
pub const CLAIM_GRAMMAR_INSTRUCTION: &str = "Report each key finding on its own line as \
`CLAIM: <statement> | CONF: <confidence 0..1> | EVIDENCE: <supporting detail> | REGION: <bbox: x0,y0,x1,y1 @ conf or desc: text @ conf>`. \
Finish with a final line `ANSWER: <your answer>` (for multiple-choice tasks, the option label).";

/// Opening line of the delegated-integration prompt.
pub const AGGREGATOR_PERSONA: &str = "You are the Wise Integrator in a multi-agent system.";

/// The standard 3 base + 3 critic panel plus the aggregator persona.
pub fn default_roles() -> Vec<AgentRole> {
    let base = |specialty: &str, persona: &str| AgentRole {
        category: RoleCategory::Base,
        specialty: specialty.to_string(),
        prompt_template: format!("{persona} {CLAIM_GRAMMAR_INSTRUCTION}"),
    };
    let critic = |specialty: &str, persona: &str| AgentRole {
        category: RoleCategory::Critic,
        specialty: specialty.to_string(),
        prompt_template: persona.to_string(),
    };
    vec![
        base(
            "object_recognition",
            "You are an expert in object recognition. Identify and list the significant objects \
             in the provided material, with appearance, count, and relative location, citing the \
             visual evidence for key claims.",
        ),
        base(
            "scene_description",
            "You are an expert in scene description. Describe the overall scene, environment, \
             and spatial relationships between elements, citing the visual evidence for key \
             claims.",
        ),
        base(
            "ocr",
            "You are an expert in OCR and text analysis. Transcribe any visible text and note \
             its location, citing the visual evidence for key claims.",
        ),
        critic(
            "fact_checker",
            "You are an expert in fact-checking claims against the provided evidence. Evaluate \
             the factual accuracy of the claims under review, point out inaccuracies, suggest \
             corrections, and state your confidence.",
        ),
        critic(
            "completeness_checker",
            "You are an expert in assessing completeness. Evaluate whether the analysis under \
             review fully addresses the question, list missing relevant details, and state your \
             confidence.",
        ),
        critic(
            "logic_checker",
            "You are an expert in logical consistency. Evaluate the reasoning under review for \
             contradictions and unsupported conclusions, suggest improvements, and state your \
             confidence.",
        ),
        AgentRole {
            category: RoleCategory::Aggregator,
            specialty: "aggregator".to_string(),
            prompt_template: format!(
                "{AGGREGATOR_PERSONA} Review the weighted expert inputs, resolve contradictions \
                 and gaps, and synthesize one clear, accurate answer. Do not reference the \
                 integration process or individual experts. End with a final line \
                 `ANSWER: <your answer>`."
            ),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

/// Integration strategy. `Auto` (the unset default) picks per task:
/// weighted voting for choice tasks, delegated aggregation for free text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntegrateMode {
    #[default]
    Auto,
    WeightedVote,
    Delegated,
}

/// Scripted-backend settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScriptedSettings {
    /// Path to the scenario fixture file.
    pub fixture: Option<PathBuf>,
}

/// HTTP-backend settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSettings {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Request per-position top-K log-probabilities.
    pub request_logprobs: bool,
    pub top_logprobs: u8,
    /// Effective vocabulary size used when normalizing entropy over
    /// harvested top-K distributions.
    pub vocab_size_hint: usize,
    pub timeout_ms: u64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub retry_base_ms: u64,
    /// Attach media entries as image-url content parts.
    pub send_images: bool,
}

impl Default for HttpSettings {
    fn default() -> Self {
        HttpSettings {
            endpoint: None,
            model: None,
            request_logprobs: true,
            top_logprobs: 5,
            vocab_size_hint: 32000,
            timeout_ms: 30_000,
            max_retries: 2,
            retry_base_ms: 250,
            send_images: true,
        }
    }
}

/// Full configuration of a debate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub params: HyperParams,
    pub roles: Vec<AgentRole>,
    pub backend: BackendKind,
    pub integrate_mode: IntegrateMode,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub scripted: ScriptedSettings,
    pub http: HttpSettings,
    /// Optional marker-lexicon file overriding `params.lexicon`.
    pub lexicon_file: Option<PathBuf>,
    /// Maximum number of tasks processed concurrently in a batch.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: HyperParams::default(),
            roles: default_roles(),
            backend: BackendKind::Scripted,
            integrate_mode: IntegrateMode::Auto,
            output_dir: PathBuf::from("out"),
            seed: 0,
            scripted: ScriptedSettings::default(),
            http: HttpSettings::default(),
            lexicon_file: None,
            parallelism: 4,
        }
    }
}

impl RunConfig {
    /// Parses a TOML config file, applies the lexicon file if configured,
    /// and validates the result.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&raw).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        if let Some(lex_path) = config.lexicon_file.clone() {
            config.params.lexicon = load_lexicon(&resolve(lex_path))?;
        }
        if let Some(fixture) = config.scripted.fixture.take() {
            config.scripted.fixture = Some(resolve(fixture));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        match self.backend {
            BackendKind::Scripted => {
                if self.scripted.fixture.is_none() {
                    return Err(ConfigError::Invalid(
                        "scripted backend requires scripted.fixture".to_string(),
                    ));
                }
            }
            BackendKind::Http => {
                if self.http.endpoint.is_none() || self.http.model.is_none() {
                    return Err(ConfigError::Invalid(
                        "http backend requires http.endpoint and http.model".to_string(),
                    ));
                }
            }
        }
        let base: Vec<&str> = self
            .roles
            .iter()
            .filter(|r| r.category == RoleCategory::Base)
            .map(|r| r.specialty.as_str())
            .collect();
        let critic: Vec<&str> = self
            .roles
            .iter()
            .filter(|r| r.category == RoleCategory::Critic)
            .map(|r| r.specialty.as_str())
            .collect();
        if base.iter().any(|s| critic.contains(s)) {
            return Err(ConfigError::Invalid(
                "base and critic specialties must be disjoint".to_string(),
            ));
        }
        for set in [&base, &critic] {
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() {
                return Err(ConfigError::Invalid(
                    "specialties must be distinct within a category".to_string(),
                ));
            }
        }
        if base.len() < self.params.n_base {
            return Err(ConfigError::Invalid(format!(
                "n_base is {} but only {} base roles are configured",
                self.params.n_base,
                base.len()
            )));
        }
        if critic.len() < self.params.n_crit {
            return Err(ConfigError::Invalid(format!(
                "n_crit is {} but only {} critic roles are configured",
                self.params.n_crit,
                critic.len()
            )));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be >= 1".to_string()));
        }
        Ok(())
    }

    /// Applies one `key=value` override from the command line.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e: T::Err| ConfigError::BadOverrideValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: e.to_string(),
                })
        }
        let p = &mut self.params;
        match key {
            "alpha_phi" => p.alpha_phi = parse(key, value)?,
            "beta_phi" => p.beta_phi = parse(key, value)?,
            "sem_k" => p.sem_k = parse(key, value)?,
            "sem_offset" => p.sem_offset = parse(key, value)?,
            "beta_weight" => p.beta_weight = parse(key, value)?,
            "lambda_collab" => p.lambda_collab = parse(key, value)?,
            "gamma_sys" => p.gamma_sys = parse(key, value)?,
            "eta_temp" => p.eta_temp = parse(key, value)?,
            "theta_u" => p.theta_u = parse(key, value)?,
            "theta_c" => p.theta_c = parse(key, value)?,
            "theta_u_term" => p.theta_u_term = parse(key, value)?,
            "epsilon_conv" => p.epsilon_conv = parse(key, value)?,
            "k_max" => p.k_max = parse(key, value)?,
            "n_base" => p.n_base = parse(key, value)?,
            "n_crit" => p.n_crit = parse(key, value)?,
            "sigma_min_dispute" => p.sigma_min_dispute = parse(key, value)?,
            "normalize_entropy" => p.normalize_entropy = parse(key, value)?,
            "uncertainty_blend" => p.uncertainty_blend = parse(key, value)?,
            "argument_weighting" => {
                p.argument_weighting = match value {
                    "uncertainty" => ArgumentWeighting::Uncertainty,
                    "confidence" => ArgumentWeighting::Confidence,
                    other => {
                        return Err(ConfigError::BadOverrideValue {
                            key: key.to_string(),
                            value: other.to_string(),
                            reason: "expected uncertainty|confidence".to_string(),
                        })
                    }
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "parallelism" => self.parallelism = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "integrate_mode" => {
                self.integrate_mode = match value {
                    "auto" => IntegrateMode::Auto,
                    "weighted_vote" => IntegrateMode::WeightedVote,
                    "delegated" => IntegrateMode::Delegated,
                    other => {
                        return Err(ConfigError::BadOverrideValue {
                            key: key.to_string(),
                            value: other.to_string(),
                            reason: "expected auto|weighted_vote|delegated".to_string(),
                        })
                    }
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}
