//! Experiment configuration, read from TOML.
//!
//! Every key has a default, so an empty file is a valid configuration describing the
//! 50,000-item, 50-dimensional sampling-probability experiment. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::choice::{DecayFunction, TruncatedMnlParams};
use crate::error::{Error, Result};
use crate::harness::synth::{ClusterSpec, Law};
use crate::lss::{LevelRule, PlanConfig};
use crate::optimizer::PruneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    SampleProbs,
    Benchmark,
    Scaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n: usize,
    pub d: usize,
    pub law: Law,
    pub clusters: usize,
    pub spread: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let spec = ClusterSpec::default();
        Self {
            n: 50_000,
            d: 50,
            law: Law::DistanceUniform,
            clusters: spec.clusters,
            spread: spec.spread,
        }
    }
}

impl DataConfig {
    pub fn cluster_spec(&self) -> ClusterSpec {
        ClusterSpec {
            clusters: self.clusters,
            spread: self.spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sigma: f64,
    pub w: f64,
    pub theta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            w: 10.0,
            theta: std::f64::consts::SQRT_2,
        }
    }
}

impl ModelConfig {
    pub fn params(&self) -> Result<TruncatedMnlParams> {
        TruncatedMnlParams::new(self.sigma, self.w, self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub beta: f64,
    pub c: f64,
    /// Defaults to `1/c` when absent.
    pub delta: Option<f64>,
    pub levels: LevelRule,
    /// The index is planned against `min(inflation * p, 1)`.
    pub inflation: f64,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            beta: 0.5,
            c: 2.0,
            delta: None,
            levels: LevelRule::Definition,
            inflation: 1.9,
        }
    }
}

impl PlanSection {
    pub fn plan_config(&self) -> PlanConfig {
        let mut cfg = PlanConfig::new(self.beta, self.c);
        if let Some(delta) = self.delta {
            cfg.delta = delta;
        }
        cfg.levels = self.levels;
        cfg
    }

    /// `p` as the index should see it.
    pub fn planned_decay(&self, p: &DecayFunction) -> Result<DecayFunction> {
        if self.inflation == 1.0 {
            Ok(p.clone())
        } else {
            p.inflated(self.inflation)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    pub k: usize,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub sampling_floor: f64,
    /// Explicit ensemble size; when absent, `samples_per_k * k`.
    pub s_override: Option<usize>,
    /// Ignored when `s_override` is set. Zero means "use the sample-count bound".
    pub samples_per_k: usize,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self {
            k: 5,
            epsilon1: 0.1,
            epsilon2: 0.05,
            sampling_floor: 0.5,
            s_override: None,
            samples_per_k: 4,
        }
    }
}

impl PruneSection {
    pub fn prune_config(&self) -> PruneConfig {
        let s_override = match (self.s_override, self.samples_per_k) {
            (Some(s), _) => Some(s),
            (None, 0) => None,
            (None, per_k) => Some(per_k * self.k),
        };
        PruneConfig {
            epsilon1: self.epsilon1,
            epsilon2: self.epsilon2,
            sampling_floor: self.sampling_floor,
            s_override,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Items per distance bin.
    pub bin_size: usize,
    pub replications: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::SampleProbs,
            seed: 2019,
            bin_size: 250,
            replications: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub n: usize,
    pub d: usize,
    pub clusters: usize,
    pub spread: f64,
    /// Number of test users.
    pub mixtures: usize,
    /// User types per test user.
    pub types: usize,
    /// Clusters each test user draws its types from.
    pub clusters_per_user: usize,
    pub sigmas: Vec<f64>,
    /// The no-choice weight is `exp(reference_inner / sigma)`.
    pub reference_inner: f64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            n: 10_000,
            d: 50,
            clusters: 10,
            spread: 0.3,
            mixtures: 500,
            types: 10,
            clusters_per_user: 3,
            sigmas: vec![0.01, 0.1, 1.0],
            reference_inner: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub ns: Vec<usize>,
    pub d: usize,
    /// Steepness of the truncated-logit decay used for planning.
    pub sigma: f64,
    /// Independent index builds per `n`.
    pub builds: usize,
    /// Timed queries per build.
    pub queries: usize,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            ns: vec![1 << 13, 1 << 15, 1 << 17],
            d: 32,
            sigma: 0.05,
            builds: 3,
            queries: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub plan: PlanSection,
    pub prune: PruneSection,
    pub experiment: ExperimentSection,
    pub benchmark: BenchmarkSection,
    pub scaling: ScalingSection,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| Error::Config(e.to_string());
        let d = &self.data;
        check(d.n >= 1, || "data.n must be at least 1".into())?;
        check(d.d >= 2, || format!("data.d must be at least 2, got {}", d.d))?;
        check(d.clusters >= 1, || "data.clusters must be at least 1".into())?;
        check(d.spread >= 0.0 && d.spread.is_finite(), || {
            "data.spread must be non-negative".into()
        })?;
        self.model.params().map_err(as_config)?;
        let p = &self.plan;
        p.plan_config().validate().map_err(as_config)?;
        check(p.inflation.is_finite() && p.inflation > 0.0, || {
            format!("plan.inflation must be positive, got {}", p.inflation)
        })?;
        let pr = &self.prune;
        check(pr.k >= 1, || "prune.k must be at least 1".into())?;
        pr.prune_config().validate().map_err(as_config)?;
        let e = &self.experiment;
        check(e.bin_size >= 1, || "experiment.bin_size must be at least 1".into())?;
        check(e.replications >= 2, || {
            "experiment.replications must be at least 2".into()
        })?;
        let b = &self.benchmark;
        check(b.n >= 1 && b.d >= 2, || {
            "benchmark.n must be >= 1 and benchmark.d >= 2".into()
        })?;
        check(b.clusters >= 1 && b.clusters_per_user >= 1, || {
            "benchmark cluster counts must be >= 1".into()
        })?;
        check(b.spread >= 0.0 && b.spread.is_finite(), || {
            "benchmark.spread must be non-negative".into()
        })?;
        check(b.mixtures >= 1 && b.types >= 1, || {
            "benchmark.mixtures and benchmark.types must be >= 1".into()
        })?;
        check(!b.sigmas.is_empty(), || "benchmark.sigmas must not be empty".into())?;
        for &sigma in &b.sigmas {
            TruncatedMnlParams::with_reference_inner(sigma, b.reference_inner, self.model.theta).map_err(as_config)?;
        }
        let s = &self.scaling;
        check(s.ns.len() >= 2, || "scaling.ns needs at least two sizes".into())?;
        check(s.ns.iter().all(|&n| n >= 2), || {
            "scaling.ns entries must be at least 2".into()
        })?;
        check(s.d >= 2, || "scaling.d must be at least 2".into())?;
        check(s.sigma > 0.0 && s.sigma.is_finite(), || {
            "scaling.sigma must be positive".into()
        })?;
        check(s.builds >= 1 && s.queries >= 1, || {
            "scaling.builds and scaling.queries must be >= 1".into()
        })?;
        Ok(())
    }
}
