//! End-to-end grid: dataset -> mask -> shadows -> scores -> attacks -> report.
//!
//! Every stage writes its artifacts under the output directory together with a
//! manifest (`manifests/<stage>.manifest`) recording a SHA-256 key of the
//! stage's inputs and the SHA-256 of each output. A stage whose key matches and
//! whose outputs are intact is skipped. A failing stage removes whatever it
//! wrote.
//!
//! Configuration is plain `key = value` text (`#` starts a comment). The same
//! keys are accepted as overrides, which are applied after the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::attack::{run_attack, AttackResult, AttackVariant};
use crate::codec;
use crate::dataset::{generate_synthetic, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::evaluation::{self, GridRow, DEFAULT_FPR_LEVELS};
use crate::model::{Activation, Architecture, Classifier, TrainConfig};
use crate::rng::{mix, streams};
use crate::scoring::{score_matrix, ScoreMatrix, ScoreVariant};
use crate::shadows::{build_mask, predict_matrix, train_ensemble, EnsembleConfig, MembershipMask, PredictionMatrix};

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    /// Generate; its `seed` field is replaced by one derived from the master seed.
    Synth(SynthSpec),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    pub num_models: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init_scale: f64,
    pub scores: Vec<ScoreVariant>,
    pub attacks: Vec<AttackVariant>,
    pub fpr_levels: Vec<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

/// Synthetic data used when no dataset is configured: 10 partly overlapping classes in 16 dimensions,
/// 40 examples each.
pub fn default_synth() -> SynthSpec {
    SynthSpec {
        num_classes: 10,
        dim: 16,
        per_class_count: 40,
        cluster_spread: 1.0,
        class_center_scale: 4.0,
        seed: 0,
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: DatasetSource::Synth(default_synth()),
            num_models: 16,
            hidden_dims: vec![64],
            activation: Activation::Relu,
            epochs: 21,
            batch_size: 32,
            learning_rate: 0.1,
            init_scale: 0.1,
            scores: ScoreVariant::ALL.to_vec(),
            attacks: AttackVariant::ALL.to_vec(),
            fpr_levels: DEFAULT_FPR_LEVELS.to_vec(),
            out_dir: PathBuf::from("mia-out"),
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &'static str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(key, format!("cannot parse `{value}`")))
}

fn parse_list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

impl PipelineConfig {
    /// Keys understood by [`PipelineConfig::set`].
    pub const KEYS: [&'static str; 18] = [
        "dataset",
        "classes",
        "dim",
        "per_class",
        "spread",
        "center_scale",
        "models",
        "epochs",
        "hidden",
        "activation",
        "lr",
        "batch",
        "init_scale",
        "scores",
        "attacks",
        "fpr",
        "out_dir",
        "seed",
    ];

    /// Parse `key = value` lines on top of the defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid("config", format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_text(&text)
    }

    fn synth_mut(&mut self) -> &mut SynthSpec {
        if let DatasetSource::File(_) = self.dataset {
            self.dataset = DatasetSource::Synth(default_synth());
        }
        match &mut self.dataset {
            DatasetSource::Synth(s) => s,
            DatasetSource::File(_) => unreachable!(),
        }
    }

    /// Set one key. Synthetic-data keys switch the source back to generation.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = DatasetSource::File(PathBuf::from(value)),
            "classes" => self.synth_mut().num_classes = parse_num("classes", value)?,
            "dim" => self.synth_mut().dim = parse_num("dim", value)?,
            "per_class" => self.synth_mut().per_class_count = parse_num("per_class", value)?,
            "spread" => self.synth_mut().cluster_spread = parse_num("spread", value)?,
            "center_scale" => self.synth_mut().class_center_scale = parse_num("center_scale", value)?,
            "models" => self.num_models = parse_num("models", value)?,
            "epochs" => self.epochs = parse_num("epochs", value)?,
            "hidden" => self.hidden_dims = parse_list(value, |s| parse_num("hidden", s))?,
            "activation" => self.activation = Activation::parse(value)?,
            "lr" => self.learning_rate = parse_num("lr", value)?,
            "batch" => self.batch_size = parse_num("batch", value)?,
            "init_scale" => self.init_scale = parse_num("init_scale", value)?,
            "scores" => self.scores = parse_list(value, ScoreVariant::parse)?,
            "attacks" => self.attacks = parse_list(value, AttackVariant::parse)?,
            "fpr" => self.fpr_levels = parse_list(value, |s| parse_num("fpr", s))?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse_num("seed", value)?,
            _ => {
                return Err(Error::invalid(
                    "config key",
                    format!("`{key}` (known keys: {})", Self::KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: 0,
            init_scale: self.init_scale,
        }
    }

    /// Everything that can be checked without touching the data.
    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::invalid("config", "no score variants"));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("config", "no attack variants"));
        }
        if self.num_models < 2 || !self.num_models.is_multiple_of(2) {
            return Err(Error::invalid("models", format!("{} must be even and at least 2", self.num_models)));
        }
        if self.num_models < 4 && self.attacks.iter().any(|a| *a != AttackVariant::GlobalThreshold) {
            return Err(Error::invalid(
                "models",
                "online and offline attacks need at least 4 models (2 IN and 2 OUT per example)",
            ));
        }
        if let Some(l) = self.fpr_levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(Error::invalid("fpr", format!("{l} not in (0, 1)")));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be at least 1"));
        }
        self.train_config().validate()?;
        match &self.dataset {
            DatasetSource::Synth(s) => s.validate()?,
            DatasetSource::File(p) => {
                if !p.is_file() {
                    return Err(Error::invalid("dataset", format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Built,
    Reused,
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub stages: Vec<(String, StageStatus)>,
    pub rows: Vec<GridRow>,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

impl PipelineReport {
    pub fn built(&self) -> impl Iterator<Item = &str> {
        self.stages
            .iter()
            .filter(|(_, s)| *s == StageStatus::Built)
            .map(|(n, _)| n.as_str())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Run `f` on a pool of `jobs` worker threads (0 = library default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        if jobs == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid("jobs", e.to_string()))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        Ok(f())
    }
}

struct Stages {
    root: PathBuf,
    log: Vec<(String, StageStatus)>,
    hashes: BTreeMap<String, String>,
}

struct Manifest {
    key: String,
    outputs: Vec<(String, String)>,
}

impl Manifest {
    fn render(&self) -> String {
        let mut s = format!("key {}\n", self.key);
        for (path, hash) in &self.outputs {
            let _ = writeln!(s, "out {hash} {path}");
        }
        s
    }

    fn parse(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let key = lines.next()?.strip_prefix("key ")?.to_string();
        let mut outputs = Vec::new();
        for line in lines {
            let rest = line.strip_prefix("out ")?;
            let (hash, path) = rest.split_once(' ')?;
            outputs.push((path.to_string(), hash.to_string()));
        }
        Some(Manifest { key, outputs })
    }
}

impl Stages {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{stage}.manifest"))
    }

    fn hash_of(&self, rel: &str) -> &str {
        &self.hashes[rel]
    }

    fn try_reuse(&self, stage: &str, key: &str, outputs: &[String]) -> Option<Vec<(String, String)>> {
        let text = fs::read_to_string(self.manifest_path(stage)).ok()?;
        let manifest = Manifest::parse(&text)?;
        if manifest.key != key || manifest.outputs.len() != outputs.len() {
            return None;
        }
        for ((path, hash), want) in manifest.outputs.iter().zip(outputs) {
            if path != want {
                return None;
            }
            let bytes = fs::read(self.path(path)).ok()?;
            if sha256_hex(&bytes) != *hash {
                return None;
            }
        }
        Some(manifest.outputs)
    }

    /// Run or reuse one stage. `key_material` must describe every input of the stage.
    fn run(
        &mut self,
        stage: &str,
        key_material: &str,
        outputs: Vec<String>,
        build: impl FnOnce(&Stages) -> Result<()>,
    ) -> Result<()> {
        let key = sha256_hex(format!("stage {stage}\n{key_material}").as_bytes());
        let tag = |e: Error| Error::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        };
        if let Some(done) = self.try_reuse(stage, &key, &outputs) {
            self.hashes.extend(done);
            self.log.push((stage.to_string(), StageStatus::Reused));
            return Ok(());
        }
        let manifest_path = self.manifest_path(stage);
        let _ = fs::remove_file(&manifest_path);
        if let Err(e) = build(self) {
            for rel in &outputs {
                let _ = fs::remove_file(self.path(rel));
            }
            return Err(tag(e));
        }
        let mut recorded = Vec::with_capacity(outputs.len());
        for rel in outputs {
            let bytes = codec::read_file(&self.path(&rel)).map_err(tag)?;
            recorded.push((rel, sha256_hex(&bytes)));
        }
        let manifest = Manifest { key, outputs: recorded };
        codec::write_file(&manifest_path, manifest.render().as_bytes()).map_err(tag)?;
        self.hashes.extend(manifest.outputs);
        self.log.push((stage.to_string(), StageStatus::Built));
        Ok(())
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Relative artifact paths inside the output directory.
pub mod layout {
    pub const DATASET: &str = "dataset.dset";
    pub const MASK: &str = "mask.mmsk";
    pub const PREDICTIONS: &str = "predictions.pmat";
    pub const CSV: &str = "report.csv";
    pub const SVG: &str = "report.svg";

    pub fn model(i: usize) -> String {
        format!("models/model_{i:03}.cmlp")
    }

    pub fn scores(v: crate::ScoreVariant) -> String {
        format!("scores/{}.scor", v.name())
    }

    pub fn attack(a: crate::AttackVariant, s: crate::ScoreVariant) -> String {
        format!("attacks/{}__{}.attk", a.name(), s.name())
    }
}

/// Execute (or resume) the whole grid described by `cfg` using `jobs` worker threads.
pub fn run_pipeline(cfg: &PipelineConfig, jobs: usize) -> Result<PipelineReport> {
    cfg.validate()?;
    with_jobs(jobs, || run_stages(cfg))?
}

fn run_stages(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let root = cfg.out_dir.clone();
    for sub in ["", "models", "scores", "attacks", "manifests"] {
        create_dir(&root.join(sub))?;
    }
    let mut st = Stages {
        root,
        log: Vec::new(),
        hashes: BTreeMap::new(),
    };

    // dataset
    let dataset_key = match &cfg.dataset {
        DatasetSource::Synth(s) => format!(
            "synth classes={} dim={} per_class={} spread={:?} center_scale={:?} seed={}",
            s.num_classes,
            s.dim,
            s.per_class_count,
            s.cluster_spread,
            s.class_center_scale,
            mix(cfg.seed, streams::DATASET)
        ),
        DatasetSource::File(p) => format!("file {}", sha256_hex(&codec::read_file(p)?)),
    };
    st.run("dataset", &dataset_key, vec![layout::DATASET.into()], |st| {
        let ds = match &cfg.dataset {
            DatasetSource::Synth(s) => generate_synthetic(&SynthSpec {
                seed: mix(cfg.seed, streams::DATASET),
                ..s.clone()
            })?,
            DatasetSource::File(p) => Dataset::load(p)?,
        };
        ds.save(&st.path(layout::DATASET))
    })?;
    let ds = Dataset::load(&st.path(layout::DATASET))?;
    let arch = Architecture::new(ds.dim(), cfg.hidden_dims.clone(), ds.num_classes(), cfg.activation)?;

    // mask
    let mask_seed = mix(cfg.seed, streams::MASK);
    let mask_key = format!("models={} examples={} seed={mask_seed}", cfg.num_models, ds.len());
    st.run("mask", &mask_key, vec![layout::MASK.into()], |st| {
        build_mask(cfg.num_models, ds.len(), mask_seed)?.save(&st.path(layout::MASK))
    })?;
    let mask = MembershipMask::load(&st.path(layout::MASK))?;

    // shadows: models + predictions
    let ensemble = EnsembleConfig {
        num_models: cfg.num_models,
        arch: arch.clone(),
        train: cfg.train_config(),
        master_seed: mix(cfg.seed, streams::ENSEMBLE),
    };
    let shadow_key = format!(
        "dataset={} mask={} arch={:?} train={:?} master_seed={}",
        st.hash_of(layout::DATASET),
        st.hash_of(layout::MASK),
        arch,
        ensemble.train,
        ensemble.master_seed
    );
    let mut shadow_outputs: Vec<String> = (0..cfg.num_models).map(layout::model).collect();
    shadow_outputs.push(layout::PREDICTIONS.into());
    st.run("shadows", &shadow_key, shadow_outputs, |st| {
        let models = train_ensemble(&ds, &mask, &ensemble)?;
        for (i, m) in models.iter().enumerate() {
            m.save(&st.path(&layout::model(i)))?;
        }
        predict_matrix(&models, &ds)?.save(&st.path(layout::PREDICTIONS))
    })?;
    let predictions = PredictionMatrix::load(&st.path(layout::PREDICTIONS))?;

    // scores
    let mut score_variants = cfg.scores.clone();
    score_variants.sort();
    score_variants.dedup();
    for &v in &score_variants {
        let rel = layout::scores(v);
        let key = format!(
            "predictions={} dataset={} variant={}",
            st.hash_of(layout::PREDICTIONS),
            st.hash_of(layout::DATASET),
            v.name()
        );
        st.run(&format!("score-{}", v.name()), &key, vec![rel.clone()], |st| {
            score_matrix(&predictions, Some(ds.labels()), v)?.save(&st.path(&rel))
        })?;
    }

    // attacks
    let mut attack_variants = cfg.attacks.clone();
    attack_variants.sort();
    attack_variants.dedup();
    let mut attack_files = Vec::new();
    for &a in &attack_variants {
        for &v in &score_variants {
            let rel = layout::attack(a, v);
            let score_rel = layout::scores(v);
            let key = format!(
                "scores={} mask={} attack={}",
                st.hash_of(&score_rel),
                st.hash_of(layout::MASK),
                a.name()
            );
            st.run(&format!("attack-{}-{}", a.name(), v.name()), &key, vec![rel.clone()], |st| {
                let scores = ScoreMatrix::load(&st.path(&score_rel))?;
                run_attack(&scores, &mask, a)?.save(&st.path(&rel))
            })?;
            attack_files.push(rel);
        }
    }

    // report
    let mut report_key = format!("fpr={:?}\n", cfg.fpr_levels);
    for rel in &attack_files {
        let _ = writeln!(report_key, "{rel}={}", st.hash_of(rel));
    }
    st.run("report", &report_key, vec![layout::CSV.into(), layout::SVG.into()], |st| {
        let results = load_results(st, &attack_files)?;
        evaluation::emit_report(
            &results,
            &cfg.fpr_levels,
            Some(&st.path(layout::CSV)),
            Some(&st.path(layout::SVG)),
        )?;
        Ok(())
    })?;
    let results = load_results(&st, &attack_files)?;
    let rows = evaluation::evaluate_grid(&results, &cfg.fpr_levels)?;

    Ok(PipelineReport {
        csv_path: st.path(layout::CSV),
        svg_path: st.path(layout::SVG),
        stages: st.log,
        rows,
    })
}

fn load_results(st: &Stages, files: &[String]) -> Result<Vec<AttackResult>> {
    files.iter().map(|rel| AttackResult::load(&st.path(rel))).collect()
}

/// Load the shadow models written by a pipeline or `shadows` run.
pub fn load_models(dir: &Path, num_models: usize) -> Result<Vec<Classifier>> {
    (0..num_models)
        .map(|i| Classifier::load(&dir.join(layout::model(i))))
        .collect()
}
