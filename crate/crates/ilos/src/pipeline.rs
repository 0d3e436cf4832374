//! The pipeline stages behind the CLI subcommands. Each stage reads the
//! manifests of its upstream stages, writes its artifacts and a manifest
//! into the workspace, and appends a line to the run log.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use ilos_core::dataset::{build_dataset, Dataset, Split, WindowSample};
use ilos_core::eval::{evaluate_subset, pr_auc_truncated, pr_curve, EvalError, PrCurve, SubsetFilter, RECALL_CAP};
use ilos_core::ingest::{build_schema, merge_to_port_level};
use ilos_core::rits::{Brits, History};
use ilos_core::synth::{dataset_stats, generate, DatasetStats, OutageIndex};
use ilos_core::transfer::{build_mega_dataset, finetune, FinetuneStrategy, MegaDataset, NetworkCounts};
use ilos_core::trees::GridPoint;
use ilos_core::{FeatureSchema, PmRecord};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, RunConfig};
use crate::container;
use crate::error::{Error, Result};
use crate::models::{score, train_brits_model, train_tree, Model};
use crate::report::{build_report, write_svg};
use crate::tables::{self, format_day, Prediction};
use crate::workspace::{par_map, FileRef, LogEntry, Workspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    Build,
    Train,
    Pretrain,
    Finetune,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] =
        [Stage::Synth, Stage::Ingest, Stage::Build, Stage::Train, Stage::Pretrain, Stage::Finetune, Stage::Evaluate, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Build => "build",
            Stage::Train => "train",
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

pub const SYNTH_MANIFEST: &str = "synth/manifest.json";
pub const EVENTS: &str = "synth/events.csv";
pub const INGEST_MANIFEST: &str = "ingest/manifest.json";
pub const BUILD_MANIFEST: &str = "build/manifest.json";
pub const MEGA_DATASET: &str = "build/mega.dataset.ilos";
pub const EVAL_MANIFEST: &str = "eval/manifest.json";
pub const REPORT: &str = "report/report.json";
pub const REPORT_SVG: &str = "report/pr_curves.svg";

fn models_manifest(stage: Stage) -> String {
    format!("models/{}.json", stage.as_str())
}

/// File-name-safe form of an identifier.
fn slug(s: &str) -> String {
    s.replace('!', "not_").chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[derive(Clone, Debug, Default)]
pub struct StageOutput {
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<FileRef>,
}

/// Runs one stage and records it in the run log, failed or not.
pub fn run(stage: Stage, cfg: &RunConfig) -> Result<StageOutput> {
    let ws = Workspace::new(&cfg.paths.workspace);
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let clock = Instant::now();
    let result = match stage {
        Stage::Synth => synth(cfg, &ws),
        Stage::Ingest => ingest(cfg, &ws),
        Stage::Build => build(cfg, &ws),
        Stage::Train => train(cfg, &ws),
        Stage::Pretrain => pretrain(cfg, &ws),
        Stage::Finetune => finetune_stage(cfg, &ws),
        Stage::Evaluate => evaluate(cfg, &ws),
        Stage::Report => report(cfg, &ws),
    };
    let (inputs, outputs, status) = match &result {
        Ok(o) => (o.inputs.clone(), o.outputs.clone(), "ok".to_string()),
        Err(e) => (vec![], vec![], format!("error: {e}")),
    };
    ws.append_log(&LogEntry {
        stage: stage.as_str().into(),
        started_at,
        duration_ms: clock.elapsed().as_millis(),
        seed: cfg.seed,
        inputs,
        outputs,
        status,
    })?;
    result
}

// ---------------------------------------------------------------- synth

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthNetwork {
    pub network_id: String,
    pub file: FileRef,
    pub records: usize,
    pub drop_probability: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config: ilos_core::synth::GenConfig,
    pub networks: Vec<SynthNetwork>,
    pub events: FileRef,
    pub outages: usize,
}

fn synth(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let gen = cfg.gen_config();
    let g = generate(&gen)?;
    let mut out = StageOutput::default();
    let mut networks = Vec::new();
    for (n, p) in g.networks.iter().zip(&g.drop_probability) {
        let path = ws.path(&format!("synth/{}.pm.csv", slug(&n.network_id)));
        tables::write_pm_csv(&path, &n.records)?;
        let file = ws.file_ref(&path)?;
        out.outputs.push(file.clone());
        networks.push(SynthNetwork { network_id: n.network_id.clone(), file, records: n.records.len(), drop_probability: *p });
    }
    let events_path = ws.path(EVENTS);
    tables::write_events(&events_path, &g.events)?;
    let events = ws.file_ref(&events_path)?;
    out.outputs.push(events.clone());
    let manifest = SynthManifest { seed: cfg.seed, config: gen, networks, events, outages: g.events.len() };
    out.outputs.push(ws.file_ref(&ws.write_json(SYNTH_MANIFEST, &manifest)?)?);
    Ok(out)
}

// ---------------------------------------------------------------- ingest

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestNetwork {
    pub network_id: String,
    pub series: FileRef,
    pub schema: FeatureSchema,
    pub ports: Vec<String>,
    pub first_day: String,
    pub last_day: String,
    pub records: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestManifest {
    pub inputs: Vec<FileRef>,
    pub networks: Vec<IngestNetwork>,
}

fn input_files(cfg: &RunConfig, ws: &Workspace) -> Result<Vec<PathBuf>> {
    if !cfg.paths.inputs.is_empty() {
        for p in &cfg.paths.inputs {
            if !p.exists() {
                return Err(Error::config("paths.inputs", format!("{} does not exist", p.display())));
            }
        }
        return Ok(cfg.paths.inputs.clone());
    }
    let m: SynthManifest = ws.read_json("synth", SYNTH_MANIFEST)?;
    Ok(m.networks.iter().map(|n| ws.path(&n.file.path)).collect())
}

fn ingest(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let files = input_files(cfg, ws)?;
    let mut out = StageOutput::default();
    for f in &files {
        out.inputs.push(ws.file_ref(f)?);
    }
    let mut by_network: BTreeMap<String, Vec<PmRecord>> = BTreeMap::new();
    for recs in par_map(&files, cfg.threads, |f| tables::parse_pm_csv(f, None)) {
        for r in recs? {
            by_network.entry(r.network_id.clone()).or_default().push(r);
        }
    }
    if by_network.is_empty() {
        return Err(Error::config("paths.inputs", "inputs hold no records"));
    }
    let groups: Vec<(String, Vec<PmRecord>)> = by_network.into_iter().collect();
    let built = par_map(&groups, cfg.threads, |(net, recs)| -> Result<IngestNetwork> {
        let schema = build_schema(recs, &cfg.schema.protocol_indicators)?;
        let series = merge_to_port_level(recs, &schema)?;
        let path = ws.path(&format!("ingest/{}.series.ilos", slug(net)));
        container::save_series(&path, &schema, &series)?;
        let first = series.iter().map(|s| s.start_day).min().expect("non-empty network");
        let last = series.iter().map(|s| s.end_day()).max().expect("non-empty network");
        Ok(IngestNetwork {
            network_id: net.clone(),
            series: ws.file_ref(&path)?,
            ports: series.iter().map(|s| s.port_id.clone()).collect(),
            schema,
            first_day: format_day(first),
            last_day: format_day(last),
            records: recs.len(),
        })
    });
    let networks = built.into_iter().collect::<Result<Vec<_>>>()?;
    out.outputs.extend(networks.iter().map(|n| n.series.clone()));
    let manifest = IngestManifest { inputs: out.inputs.clone(), networks };
    out.outputs.push(ws.file_ref(&ws.write_json(INGEST_MANIFEST, &manifest)?)?);
    Ok(out)
}

// ---------------------------------------------------------------- build

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    fn of(d: &Dataset) -> Self {
        Self { train: d.split.count(Split::Train), validation: d.split.count(Split::Validation), test: d.split.count(Split::Test) }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuiltNetwork {
    pub network_id: String,
    pub source: FileRef,
    pub dataset: FileRef,
    pub audit: FileRef,
    pub stats: DatasetStats,
    pub counts: SplitCounts,
    pub boundaries: Option<(String, String)>,
    pub windows: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuiltMega {
    pub dataset: FileRef,
    pub sources: Vec<FileRef>,
    pub stats: DatasetStats,
    pub networks: Vec<NetworkCounts>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildManifest {
    pub networks: Vec<BuiltNetwork>,
    pub mega: Option<BuiltMega>,
}

impl BuildManifest {
    pub fn network(&self, id: &str) -> Result<&BuiltNetwork> {
        self.networks.iter().find(|n| n.network_id == id).ok_or_else(|| Error::config("networks", format!("unknown network `{id}`")))
    }
}

fn build(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let m: IngestManifest = ws.read_json("ingest", INGEST_MANIFEST)?;
    let mut out = StageOutput::default();
    let results = par_map(&m.networks, cfg.threads, |n| -> Result<(BuiltNetwork, Dataset)> {
        let src = ws.require("ingest", &n.series.path)?;
        let (schema, series) = container::load_series(&src)?;
        let (d, audit) = build_dataset(&series, &schema, cfg.window)?;
        let path = ws.path(&format!("build/{}.dataset.ilos", slug(&n.network_id)));
        container::save_dataset(&path, &d, &[])?;
        let audit_path = ws.path(&format!("build/{}.audit.csv", slug(&n.network_id)));
        tables::write_audit(&audit_path, &audit)?;
        let built = BuiltNetwork {
            network_id: n.network_id.clone(),
            source: ws.file_ref(&src)?,
            dataset: ws.file_ref(&path)?,
            audit: ws.file_ref(&audit_path)?,
            stats: dataset_stats(&n.network_id, &d),
            counts: SplitCounts::of(&d),
            boundaries: d.split.boundaries.map(|(a, b)| (format_day(a), format_day(b))),
            windows: audit.len(),
        };
        Ok((built, d))
    });
    let mut networks = Vec::new();
    let mut datasets = Vec::new();
    for r in results {
        let (b, d) = r?;
        out.inputs.push(b.source.clone());
        out.outputs.extend([b.dataset.clone(), b.audit.clone()]);
        networks.push(b);
        datasets.push(d);
    }
    let mega = if datasets.len() >= 2 {
        let mega = build_mega_dataset(&datasets)?;
        let path = ws.path(MEGA_DATASET);
        container::save_mega(&path, &mega)?;
        let file = ws.file_ref(&path)?;
        out.outputs.push(file.clone());
        Some(BuiltMega {
            dataset: file,
            sources: networks.iter().map(|n| n.dataset.clone()).collect(),
            stats: dataset_stats("mega", &mega.dataset),
            networks: mega.counts(),
        })
    } else {
        None
    };
    let manifest = BuildManifest { networks, mega };
    out.outputs.push(ws.file_ref(&ws.write_json(BUILD_MANIFEST, &manifest)?)?);
    Ok(out)
}

// ---------------------------------------------------------------- training

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub stage: String,
    pub kind: ModelKind,
    /// A network id, or `mega`.
    pub scope: String,
    pub strategy: Option<FinetuneStrategy>,
    pub model: FileRef,
    pub dataset: FileRef,
    pub parent: Option<FileRef>,
    pub history: Option<FileRef>,
    pub grid: Option<Vec<GridPoint>>,
    pub best_epoch: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelsManifest {
    pub stage: String,
    pub entries: Vec<ModelEntry>,
}

pub const MEGA_SCOPE: &str = "mega";

struct Trained {
    model: Model,
    history: Option<History>,
}

fn fit(kind: ModelKind, d: &Dataset, cfg: &RunConfig) -> Result<Trained> {
    if kind.is_tree() {
        Ok(Trained { model: Model::Tree(train_tree(kind, d, cfg)?), history: None })
    } else {
        let (b, h) = train_brits_model(d, cfg)?;
        Ok(Trained { model: Model::Brits(b), history: Some(h) })
    }
}

fn store(
    ws: &Workspace,
    stage: Stage,
    scope: &str,
    name: &str,
    kind: ModelKind,
    trained: &Trained,
    dataset: &FileRef,
) -> Result<ModelEntry> {
    let dir = format!("models/{}/{}", stage.as_str(), slug(scope));
    let file = if kind.is_tree() { format!("{name}.json") } else { format!("{name}.ilos") };
    let path = ws.path(&format!("{dir}/{file}"));
    trained.model.save(&path)?;
    let history = match &trained.history {
        Some(h) => {
            let p = ws.path(&format!("{dir}/{name}.history.csv"));
            tables::write_history(&p, h)?;
            Some(ws.file_ref(&p)?)
        }
        None => None,
    };
    Ok(ModelEntry {
        id: format!("{}/{}/{}", stage.as_str(), scope, name),
        stage: stage.as_str().into(),
        kind,
        scope: scope.into(),
        strategy: None,
        model: ws.file_ref(&path)?,
        dataset: dataset.clone(),
        parent: None,
        history,
        grid: match &trained.model {
            Model::Tree(t) => Some(t.grid.clone()),
            Model::Brits(_) => None,
        },
        best_epoch: trained.history.as_ref().and_then(|h| h.best_epoch),
    })
}

fn finish_models(ws: &Workspace, stage: Stage, entries: Vec<ModelEntry>, mut out: StageOutput) -> Result<StageOutput> {
    for e in &entries {
        out.outputs.push(e.model.clone());
        out.outputs.extend(e.history.clone());
    }
    let manifest = ModelsManifest { stage: stage.as_str().into(), entries };
    out.outputs.push(ws.file_ref(&ws.write_json(&models_manifest(stage), &manifest)?)?);
    Ok(out)
}

fn selected<'a>(all: &'a [BuiltNetwork], wanted: &[String], field: &str) -> Result<Vec<&'a BuiltNetwork>> {
    if wanted.is_empty() {
        return Ok(all.iter().collect());
    }
    wanted
        .iter()
        .map(|w| all.iter().find(|n| &n.network_id == w).ok_or_else(|| Error::config(field, format!("unknown network `{w}`"))))
        .collect()
}

fn train(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let m: BuildManifest = ws.read_json("build", BUILD_MANIFEST)?;
    let nets = selected(&m.networks, &cfg.train.networks, "train.networks")?;
    let mut out = StageOutput::default();
    let mut jobs = Vec::new();
    for n in &nets {
        let path = ws.require("build", &n.dataset.path)?;
        let (d, _) = container::load_dataset(&path)?;
        out.inputs.push(n.dataset.clone());
        for &kind in &cfg.train.models {
            jobs.push((n.network_id.clone(), n.dataset.clone(), kind, d.clone()));
        }
    }
    let entries = par_map(&jobs, cfg.threads, |(net, file, kind, d)| {
        let t = fit(*kind, d, cfg)?;
        store(ws, Stage::Train, net, kind.as_str(), *kind, &t, file)
    });
    finish_models(ws, Stage::Train, entries.into_iter().collect::<Result<_>>()?, out)
}

fn load_mega(ws: &Workspace) -> Result<(MegaDataset, FileRef)> {
    let m: BuildManifest = ws.read_json("build", BUILD_MANIFEST)?;
    let built = m.mega.ok_or_else(|| Error::config("paths.inputs", "pre-training needs at least two networks"))?;
    let path = ws.require("build", &built.dataset.path)?;
    Ok((container::load_mega(&path)?, built.dataset))
}

fn pretrain(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let (mega, file) = load_mega(ws)?;
    let out = StageOutput { inputs: vec![file.clone()], outputs: vec![] };
    let entries = par_map(&cfg.pretrain.models, cfg.threads, |&kind| {
        let t = fit(kind, &mega.dataset, cfg)?;
        store(ws, Stage::Pretrain, MEGA_SCOPE, kind.as_str(), kind, &t, &file)
    });
    finish_models(ws, Stage::Pretrain, entries.into_iter().collect::<Result<_>>()?, out)
}

fn finetune_stage(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let pre: ModelsManifest = ws.read_json("pretrain", &models_manifest(Stage::Pretrain))?;
    let parent = pre
        .entries
        .iter()
        .find(|e| e.kind == ModelKind::Brits)
        .ok_or_else(|| Error::MissingArtifact { stage: "pretrain", path: ws.path("models/pretrain/mega/brits.ilos") })?;
    let parent_path = ws.require("pretrain", &parent.model.path)?;
    let pretrained = container::load_brits(&parent_path)?;
    let (mega, file) = load_mega(ws)?;
    let nets: Vec<String> = if cfg.finetune.networks.is_empty() { mega.network_ids().to_vec() } else { cfg.finetune.networks.clone() };
    let mut jobs = Vec::new();
    for n in &nets {
        if !mega.network_ids().contains(n) {
            return Err(Error::config("finetune.networks", format!("unknown network `{n}`")));
        }
        for &s in &cfg.finetune.strategies {
            jobs.push((n.clone(), s));
        }
    }
    let out = StageOutput { inputs: vec![file.clone(), ws.file_ref(&parent_path)?], outputs: vec![] };
    let entries = par_map(&jobs, cfg.threads, |(net, strategy)| -> Result<ModelEntry> {
        let train = mega.network_set(net, Split::Train)?;
        let valid = mega.network_set(net, Split::Validation)?;
        let (model, history) = finetune(*strategy, &pretrained, &train, &valid, &cfg.brits_schedule())?;
        let name = format!("brits_{}", strategy.as_str());
        let t = Trained { model: Model::Brits(model), history: Some(history) };
        let mut e = store(ws, Stage::Finetune, net, &name, ModelKind::Brits, &t, &file)?;
        e.strategy = Some(*strategy);
        e.parent = Some(parent.model.clone());
        Ok(e)
    });
    finish_models(ws, Stage::Finetune, entries.into_iter().collect::<Result<_>>()?, out)
}

// ---------------------------------------------------------------- evaluation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub name: String,
    pub network: Option<String>,
    pub d: Option<f64>,
    pub samples: usize,
    pub positives: usize,
    pub curve: Option<FileRef>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalEntry {
    pub model: ModelEntry,
    pub predictions: FileRef,
    pub scores: Vec<SubsetScore>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalManifest {
    pub recall_cap: f64,
    pub ground_truth: Option<FileRef>,
    pub networks: Vec<String>,
    pub entries: Vec<EvalEntry>,
}

fn ground_truth(cfg: &RunConfig, ws: &Workspace) -> Option<PathBuf> {
    if !cfg.evaluation.precursor_subset {
        return None;
    }
    cfg.paths.ground_truth.clone().or_else(|| Some(ws.path(EVENTS))).filter(|p| p.exists())
}

/// Scores the samples `keep` selects. A selection without positives gets
/// a note instead of a score.
fn subset_score(
    ws: &Workspace,
    dir: &str,
    name: &str,
    network: Option<String>,
    samples: &[&WindowSample],
    scores: &[f64],
    keep: impl Fn(&WindowSample) -> Result<bool>,
) -> Result<SubsetScore> {
    let mut s = Vec::new();
    let mut l = Vec::new();
    for (w, &p) in samples.iter().zip(scores) {
        if keep(w)? {
            s.push(p);
            l.push(w.label);
        }
    }
    let positives = l.iter().filter(|&&x| x).count();
    let mut out = SubsetScore { name: name.into(), network, d: None, samples: s.len(), positives, curve: None, note: None };
    match pr_curve(&s, &l) {
        Ok(curve) => {
            out.d = Some(pr_auc_truncated(&curve, RECALL_CAP));
            let path = ws.path(&format!("{dir}/curves/{}.csv", slug(name)));
            tables::write_pr_curve(&path, &curve)?;
            out.curve = Some(ws.file_ref(&path)?);
        }
        Err(EvalError::NoPositives) => out.note = Some(if s.is_empty() { "empty subset".into() } else { "no positives".into() }),
        Err(e) => return Err(e.into()),
    }
    Ok(out)
}

fn evaluate_entry(cfg: &RunConfig, ws: &Workspace, e: &ModelEntry, index: Option<&OutageIndex>) -> Result<EvalEntry> {
    let model_path = ws.require(stage_of(&e.stage), &e.model.path)?;
    if ws.file_ref(&model_path)?.sha256 != e.model.sha256 {
        return Err(Error::format(&model_path, "model file changed since it was recorded; rerun its stage"));
    }
    let data_path = ws.require("build", &e.dataset.path)?;
    if ws.file_ref(&data_path)?.sha256 != e.dataset.sha256 {
        return Err(Error::format(&data_path, format!("dataset changed since `{}` was trained; rerun {}", e.id, e.stage)));
    }
    let (d, _) = container::load_dataset(&data_path)?;
    let model = Model::load(e.kind, &model_path)?;
    let network_filter = (e.scope != MEGA_SCOPE).then(|| e.scope.clone());
    let samples: Vec<&WindowSample> = d
        .split_samples(Split::Test)
        .filter(|s| network_filter.as_ref().is_none_or(|n| &s.network_id == n))
        .collect();
    if samples.is_empty() {
        return Err(EvalError::EmptySubset.into());
    }
    let scores = score(&model, &samples, &d.norm)?;
    let dir = format!("eval/{}", e.id.split('/').map(slug).collect::<Vec<_>>().join("/"));
    let preds: Vec<Prediction> = samples
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(i, (s, &p))| Prediction {
            sample_id: i,
            network_id: s.network_id.clone(),
            port_id: s.port_id.clone(),
            present_day: s.present_day,
            label: s.label,
            score: p,
        })
        .collect();
    let pred_path = ws.path(&format!("{dir}/predictions.csv"));
    tables::write_predictions(&pred_path, &preds)?;

    let mut out = Vec::new();
    let networks: Vec<String> = match &network_filter {
        Some(n) => vec![n.clone()],
        None => {
            out.push(subset_score(ws, &dir, "all", None, &samples, &scores, |_| Ok(true))?);
            d.network_ids.clone()
        }
    };
    for n in &networks {
        let name = format!("network:{n}");
        out.push(subset_score(ws, &dir, &name, Some(n.clone()), &samples, &scores, |s| Ok(&s.network_id == n))?);
    }
    for fac in cfg.evaluation.facilities.iter().filter(|f| d.schema.facility_column(f).is_some()) {
        for exclude in [false, true] {
            let filter = SubsetFilter { exclude_facility: exclude, ..SubsetFilter::facility(fac) };
            let name = format!("facility:{}{fac}", if exclude { "!" } else { "" });
            out.push(subset_score(ws, &dir, &name, None, &samples, &scores, |s| Ok(filter.selects(s, &d.schema)?))?);
        }
    }
    if let Some(index) = index {
        out.push(subset_score(ws, &dir, "precursor", None, &samples, &scores, |s| Ok(index.in_precursor_subset(s, d.spec)))?);
    }
    Ok(EvalEntry { model: e.clone(), predictions: ws.file_ref(&pred_path)?, scores: out })
}

fn stage_of(name: &str) -> &'static str {
    Stage::ALL.iter().find(|s| s.as_str() == name).map_or("train", |s| s.as_str())
}

fn evaluate(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let mut entries = Vec::new();
    let mut out = StageOutput::default();
    for stage in [Stage::Train, Stage::Pretrain, Stage::Finetune] {
        let rel = models_manifest(stage);
        if ws.path(&rel).exists() {
            let m: ModelsManifest = ws.read_json(stage.as_str(), &rel)?;
            entries.extend(m.entries);
            out.inputs.push(ws.file_ref(&ws.path(&rel))?);
        }
    }
    if entries.is_empty() {
        return Err(Error::MissingArtifact { stage: "train", path: ws.path(&models_manifest(Stage::Train)) });
    }
    let truth = ground_truth(cfg, ws);
    let (index, truth_ref) = match &truth {
        Some(p) => (Some(OutageIndex::new(&tables::read_events(p)?)), Some(ws.file_ref(p)?)),
        None => (None, None),
    };
    let build: BuildManifest = ws.read_json("build", BUILD_MANIFEST)?;
    let evaluated = par_map(&entries, cfg.threads, |e| evaluate_entry(cfg, ws, e, index.as_ref()));
    let evaluated = evaluated.into_iter().collect::<Result<Vec<_>>>()?;
    for e in &evaluated {
        out.outputs.push(e.predictions.clone());
        out.outputs.extend(e.scores.iter().filter_map(|s| s.curve.clone()));
    }
    let manifest = EvalManifest {
        recall_cap: RECALL_CAP,
        ground_truth: truth_ref,
        networks: build.networks.iter().map(|n| n.network_id.clone()).collect(),
        entries: evaluated,
    };
    out.outputs.push(ws.file_ref(&ws.write_json(EVAL_MANIFEST, &manifest)?)?);
    Ok(out)
}

// ---------------------------------------------------------------- report

fn report(cfg: &RunConfig, ws: &Workspace) -> Result<StageOutput> {
    let path = ws.require("evaluate", EVAL_MANIFEST)?;
    let m: EvalManifest = crate::workspace::read_json(&path)?;
    let mut out = StageOutput { inputs: vec![ws.file_ref(&path)?], outputs: vec![] };
    let report = build_report(&m, ws.file_ref(&path)?)?;
    out.outputs.push(ws.file_ref(&ws.write_json(REPORT, &report)?)?);
    if cfg.evaluation.svg {
        let mut curves: Vec<(String, PrCurve)> = Vec::new();
        for e in &m.entries {
            if let Some(s) = e.scores.iter().find(|s| s.curve.is_some()) {
                let c = read_curve(&ws.path(&s.curve.as_ref().unwrap().path))?;
                curves.push((format!("{} [{}]", e.model.id, s.name), c));
            }
        }
        let svg = ws.path(REPORT_SVG);
        write_svg(&svg, &curves)?;
        out.outputs.push(ws.file_ref(&svg)?);
    }
    Ok(out)
}

/// Reads back a PR-curve CSV; counts are not stored, only the points.
pub fn read_curve(path: &std::path::Path) -> Result<PrCurve> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut points = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let num = |i: usize| row[i].parse::<f64>().map_err(|_| Error::format(path, "bad number"));
        points.push(ilos_core::eval::PrPoint { threshold: num(0)?, precision: num(1)?, recall: num(2)?, tp: 0, fp: 0 });
    }
    Ok(PrCurve { points, positives: 0, total: 0 })
}

/// Scores one subset filter directly, for callers that hold samples and
/// predictions in memory.
pub fn score_filter(samples: &[&WindowSample], scores: &[f64], filter: &SubsetFilter, schema: &FeatureSchema) -> Result<f64> {
    Ok(evaluate_subset(samples, scores, filter, schema)?.0.d)
}

/// Loads a trained BRITS model recorded in a models manifest.
pub fn load_recorded_brits(ws: &Workspace, e: &ModelEntry) -> Result<Brits> {
    container::load_brits(&ws.require(stage_of(&e.stage), &e.model.path)?)
}
