//! The run configuration: one TOML file, with the workspace path, input
//! paths and thread count overridable from the command line or environment.

use std::path::{Path, PathBuf};

use ilos_core::dataset::WindowSpec;
use ilos_core::rits::{LossWeights, TrainSchedule, DEFAULT_HIDDEN};
use ilos_core::synth::{GenConfig, PROTOCOL_INDICATOR};
use ilos_core::transfer::FinetuneStrategy;
use ilos_core::trees::{BoosterConfig, ForestConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Random forest on zero-imputed windows.
    RfZero,
    /// Random forest on median-imputed windows.
    RfMedian,
    /// Sparsity-aware boosted trees.
    Gbdt,
    Brits,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RfZero => "rf_zero",
            ModelKind::RfMedian => "rf_median",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Brits => "brits",
        }
    }

    pub fn is_tree(self) -> bool {
        self != ModelKind::Brits
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub workspace: PathBuf,
    /// Long-format PM CSVs. Empty means the output of `synth`.
    pub inputs: Vec<PathBuf>,
    /// Outage log for the precursor-only subset. Defaults to the output of
    /// `synth` when present.
    pub ground_truth: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaOptions {
    pub protocol_indicators: Vec<String>,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self { protocol_indicators: vec![PROTOCOL_INDICATOR.into()] }
    }
}

/// Tree counts `start, start + step, ..., stop`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { start: 100, stop: 500, step: 100 }
    }
}

impl Grid {
    pub fn counts(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step.max(1)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BritsOptions {
    pub hidden: usize,
    pub loss_weights: LossWeights,
    pub schedule: TrainSchedule,
}

impl Default for BritsOptions {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            loss_weights: LossWeights::default(),
            schedule: TrainSchedule { batch_size: 256, ..TrainSchedule::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StagePlan {
    pub models: Vec<ModelKind>,
    /// Networks to train on; empty means all.
    pub networks: Vec<String>,
}

impl Default for StagePlan {
    fn default() -> Self {
        Self { models: vec![ModelKind::RfZero, ModelKind::RfMedian, ModelKind::Gbdt, ModelKind::Brits], networks: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetunePlan {
    pub strategies: Vec<FinetuneStrategy>,
    pub networks: Vec<String>,
}

impl Default for FinetunePlan {
    fn default() -> Self {
        Self { strategies: vec![FinetuneStrategy::ClassifierOnly, FinetuneStrategy::Entirety], networks: vec![] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationOptions {
    /// Facility types to score separately, e.g. line cards vs. clients.
    pub facilities: Vec<String>,
    pub precursor_subset: bool,
    pub svg: bool,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        Self { facilities: vec!["ETH".into(), "OSC".into()], precursor_subset: true, svg: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub synth: GenConfig,
    #[serde(default)]
    pub schema: SchemaOptions,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub booster: BoosterConfig,
    #[serde(default)]
    pub brits: BritsOptions,
    #[serde(default)]
    pub train: StagePlan,
    #[serde(default = "pretrain_default")]
    pub pretrain: StagePlan,
    #[serde(default)]
    pub finetune: FinetunePlan,
    #[serde(default)]
    pub evaluation: EvaluationOptions,
}

fn one() -> usize {
    1
}

fn pretrain_default() -> StagePlan {
    StagePlan { models: vec![ModelKind::Gbdt, ModelKind::Brits], networks: vec![] }
}

/// Command-line and environment overrides. Only paths and parallelism can
/// be overridden this way, plus the seed flag.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub workspace: Option<PathBuf>,
    pub inputs: Option<Vec<PathBuf>>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(seed: u64, workspace: impl Into<PathBuf>) -> Self {
        Self {
            seed,
            threads: 1,
            paths: Paths { workspace: workspace.into(), ..Paths::default() },
            synth: GenConfig::default(),
            schema: SchemaOptions::default(),
            window: WindowSpec::default(),
            grid: Grid::default(),
            forest: ForestConfig::default(),
            booster: BoosterConfig::default(),
            brits: BritsOptions::default(),
            train: StagePlan::default(),
            pretrain: pretrain_default(),
            finetune: FinetunePlan::default(),
            evaluation: EvaluationOptions::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map_or_else(|| "<file>".to_string(), |s| format!("byte {}..{}", s.start, s.end));
            Error::config(field, e.message().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads a config file, applies overrides, resolves relative paths
    /// against the config file's directory and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.workspace = resolve(base, &cfg.paths.workspace);
        cfg.paths.inputs = cfg.paths.inputs.iter().map(|p| resolve(base, p)).collect();
        cfg.paths.ground_truth = cfg.paths.ground_truth.as_deref().map(|p| resolve(base, p));
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(w) = &o.workspace {
            self.paths.workspace = w.clone();
        }
        if let Some(i) = &o.inputs {
            self.paths.inputs = i.clone();
        }
        if let Some(t) = o.threads {
            self.threads = t;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |f: &str, m: &str| Err(Error::config(f, m));
        if self.threads == 0 {
            return err("threads", "must be >= 1");
        }
        if self.paths.workspace.as_os_str().is_empty() {
            return err("paths.workspace", "must be set (config, --workspace or ILOS_WORKSPACE)");
        }
        self.synth.validate().map_err(|e| Error::config("synth", e.to_string()))?;
        if self.window.past_days == 0 || self.window.horizon_days == 0 {
            return err("window", "past_days and horizon_days must be >= 1");
        }
        if self.grid.start == 0 || self.grid.step == 0 || self.grid.stop < self.grid.start {
            return err("grid", "need 1 <= start <= stop and step >= 1");
        }
        self.forest.validate().map_err(|e| Error::config("forest", e.to_string()))?;
        self.booster.validate().map_err(|e| Error::config("booster", e.to_string()))?;
        if self.brits.hidden == 0 {
            return err("brits.hidden", "must be >= 1");
        }
        self.brits.schedule.validate().map_err(|e| Error::config("brits.schedule", e.to_string()))?;
        for (field, plan) in [("train.models", &self.train), ("pretrain.models", &self.pretrain)] {
            let mut m = plan.models.clone();
            m.sort();
            m.dedup();
            if m.len() != plan.models.len() {
                return err(field, "duplicate model kind");
            }
        }
        if self.schema.protocol_indicators.is_empty() {
            return err("schema.protocol_indicators", "at least one traffic indicator is needed");
        }
        Ok(())
    }

    /// Generator settings with the run seed.
    pub fn gen_config(&self) -> GenConfig {
        GenConfig { seed: self.seed, ..self.synth.clone() }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig { seed: self.seed, ..self.forest.clone() }
    }

    pub fn booster_config(&self) -> BoosterConfig {
        BoosterConfig { seed: self.seed, ..self.booster.clone() }
    }

    pub fn brits_schedule(&self) -> TrainSchedule {
        TrainSchedule { seed: self.seed, ..self.brits.schedule.clone() }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.as_os_str().is_empty() || p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_losslessly() {
        let mut c = RunConfig::new(42, "ws");
        c.paths.inputs = vec!["a.csv".into()];
        c.paths.ground_truth = Some("events.csv".into());
        c.brits.schedule.min_delta = 1.0e-7;
        c.booster.learning_rate = 0.1;
        c.forest.features_per_split = Some(3);
        let text = c.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn minimal_file_gets_defaults_but_seed_is_mandatory() {
        let c = RunConfig::from_toml("seed = 5\n[paths]\nworkspace = \"w\"\n").unwrap();
        assert_eq!(c.grid.counts(), vec![100, 200, 300, 400, 500]);
        assert_eq!(c.brits.schedule.batch_size, 256);
        assert_eq!(c.brits.hidden, 256);
        assert!(c.brits.schedule.epochs <= 20);
        c.validate().unwrap();
        let e = RunConfig::from_toml("[paths]\nworkspace = \"w\"\n").unwrap_err();
        assert!(e.to_string().contains("seed"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::new(1, "w");
        c.brits.hidden = 0;
        assert!(c.validate().unwrap_err().to_string().contains("brits.hidden"));
        let mut c = RunConfig::new(1, "w");
        c.grid.step = 0;
        assert!(c.validate().unwrap_err().to_string().contains("`grid`"));
        let mut c = RunConfig::new(1, "w");
        c.synth.target_missing_rate = 2.0;
        assert!(c.validate().unwrap_err().to_string().contains("`synth`"));
        let e = RunConfig::from_toml("seed = 1\n[train]\nmodels = [\"svm\"]\n").unwrap_err();
        assert!(e.to_string().contains("svm"), "{e}");
    }

    #[test]
    fn overrides_touch_paths_threads_and_seed_only() {
        let mut c = RunConfig::new(1, "w");
        let before = c.clone();
        c.apply(&Overrides { workspace: Some("other".into()), threads: Some(4), ..Default::default() });
        assert_eq!(c.paths.workspace, PathBuf::from("other"));
        assert_eq!(c.threads, 4);
        assert_eq!(RunConfig { paths: before.paths.clone(), threads: 1, ..c }, before);
    }
}
