//! Reproducible experiments: simulate a dataset, evaluate oracle risks, fit
//! estimators and compare them against the truth.
//!
//! Every command is a function of its configuration. Outputs carry a
//! manifest with the configuration hash, the seed and a checksum per file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{generate_dataset, read_dataset, sample_conditions, write_dataset, Dataset, PersonHour, UsualCarePolicy};
use crate::error::{Error, Result};
use crate::estimand::{builtin_estimand, oracle_exact, oracle_mc, EstimandSpec, Method, RiskEstimate};
use crate::estimators::{fit_gcomp, fit_ice, fit_naive, gcomp_exact, gcomp_predict, IceModel, NaiveModel, TransitionModels};
use crate::rng::{derive_seed, label};
use crate::scm::{
    BaselineCovariates, BpLevel, CoarseCell, ContinuousVitals, FhrCategory, Mode, PatientState, Scm,
    ScmConfig, TimeVaryingCovariates,
};
use crate::scm::Action;

fn default_estimands() -> Vec<u8> {
    (1..=7).collect()
}

fn default_query_hours() -> Vec<u32> {
    vec![0]
}

fn default_n_conditions() -> usize {
    20
}

fn default_n_persons() -> usize {
    10_000
}

fn default_n_mc() -> u64 {
    10_000
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    /// Path to a simulator configuration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scm_config: Option<PathBuf>,
    /// Inline simulator configuration; ignored if `scm_config` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scm: Option<ScmConfig>,
    #[serde(default)]
    pub policy: UsualCarePolicy,
    #[serde(default = "default_estimands")]
    pub estimands: Vec<u8>,
    #[serde(default = "default_query_hours")]
    pub query_hours: Vec<u32>,
    #[serde(default = "default_n_conditions")]
    pub n_conditions: usize,
    #[serde(default = "default_n_persons")]
    pub n_persons: usize,
    #[serde(default = "default_n_mc")]
    pub n_mc: u64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Existing dataset to fit on instead of simulating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: None,
            scm_config: None,
            scm: None,
            policy: UsualCarePolicy::default(),
            estimands: default_estimands(),
            query_hours: default_query_hours(),
            n_conditions: default_n_conditions(),
            n_persons: default_n_persons(),
            n_mc: default_n_mc(),
            seed: None,
            out_dir: default_out_dir(),
            dataset: None,
        }
    }
}

impl ExperimentConfig {
    /// Read a configuration file. Relative paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.scm_config.as_mut().map(resolve);
        cfg.dataset.as_mut().map(resolve);
        resolve(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidConfig("a seed is required (set `seed` or pass --seed)".into()))
    }

    /// The simulator configuration, with the mode override applied.
    pub fn scm_config(&self) -> Result<ScmConfig> {
        let mut cfg = match (&self.scm_config, &self.scm) {
            (Some(path), _) => ScmConfig::load(path)?,
            (None, Some(inline)) => inline.clone(),
            (None, None) => ScmConfig::new(self.mode.unwrap_or(Mode::Coarse)),
        };
        if let Some(mode) = self.mode {
            if (self.scm_config.is_some() || self.scm.is_some()) && cfg.mode != mode {
                return Err(Error::InvalidConfig(format!(
                    "mode {} conflicts with the simulator configuration ({})",
                    mode.name(),
                    cfg.mode.name()
                )));
            }
            cfg.mode = mode;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        for path in self.scm_config.iter().chain(&self.dataset) {
            if !path.exists() {
                return Err(Error::InvalidConfig(format!("{} does not exist", path.display())));
            }
        }
        if self.estimands.is_empty() {
            return Err(Error::InvalidConfig("no estimands requested".into()));
        }
        if let Some(id) = self.estimands.iter().find(|id| !(1..=7).contains(*id)) {
            return Err(Error::InvalidEstimand(format!("unknown estimand id {id}")));
        }
        if self.query_hours.is_empty() {
            return Err(Error::InvalidConfig("no query hours requested".into()));
        }
        if self.n_conditions == 0 {
            return Err(Error::InvalidConfig("n_conditions must be at least 1".into()));
        }
        if self.n_persons == 0 {
            return Err(Error::InvalidConfig("n_persons must be at least 1".into()));
        }
        if self.n_mc == 0 {
            return Err(Error::InvalidConfig("n_mc must be at least 1".into()));
        }
        let horizon = self.scm_config()?.horizon();
        if let Some(k) = self.query_hours.iter().find(|&&k| k >= horizon) {
            return Err(Error::InvalidConfig(format!(
                "query hour {k} is not before the last simulated hour {horizon}"
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex_digest(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// (estimand id, hour) pairs to evaluate. Estimands 1-4 only apply at
    /// the start of labor and are skipped at later hours.
    pub fn queries(&self) -> Vec<(u8, u32)> {
        let mut out = Vec::new();
        for &k in &self.query_hours {
            for &id in &self.estimands {
                if id > 4 || k == 0 {
                    out.push((id, k));
                }
            }
        }
        out
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<OutputFile>,
}

struct OutputDir {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl OutputDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.record(name)?;
        Ok(path)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(OutputFile {
            file: name.to_string(),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    fn finish(self, command: &str, cfg: &ExperimentConfig) -> Result<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed()?,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            outputs: self.outputs,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

/// A clearly abnormal profile: tachycardia at 3 cm, normal blood pressure,
/// nulliparous, aged 30.
pub fn distress_profile(mode: Mode, k: u32) -> PatientState {
    let tv = match mode {
        Mode::Coarse => TimeVaryingCovariates::Coarse(CoarseCell {
            fhr: FhrCategory::Tachycardia,
            dilatation: 3,
            sbp: BpLevel::Normal,
            dbp: BpLevel::Normal,
        }),
        Mode::Continuous => TimeVaryingCovariates::Continuous(ContinuousVitals {
            fhr: 172.0,
            brady_persist: false,
            dilatation: 3.0,
            sbp: 120.0,
            dbp: 75.0,
        }),
    };
    PatientState {
        k,
        baseline: BaselineCovariates {
            maternal_age: 30.0,
            parity: 0,
            history_preterm: false,
        },
        tv,
        a: Action::Vaginal,
        born: false,
        y: false,
    }
}

fn conditions(cfg: &ExperimentConfig, scm: &Scm, k: u32) -> Result<Vec<PatientState>> {
    let seed = derive_seed(cfg.seed()?, &[label("conditions"), u64::from(k)]);
    sample_conditions(scm, &cfg.policy, cfg.n_conditions, k, seed)
}

fn dataset(cfg: &ExperimentConfig, scm: &Scm) -> Result<Dataset> {
    match &cfg.dataset {
        Some(path) => {
            let ds = read_dataset(path)?;
            if ds.mode() != scm.config().mode {
                return Err(Error::InvalidConfig(format!(
                    "dataset is on the {} scale but the simulator is {}",
                    ds.mode().name(),
                    scm.config().mode.name()
                )));
            }
            Ok(ds)
        }
        None => generate_dataset(cfg.n_persons, scm, &cfg.policy, derive_seed(cfg.seed()?, &[label("dataset")])),
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<Scm> {
    cfg.validate()?;
    Scm::new(cfg.scm_config()?)
}

/// Simulate a dataset under usual care; writes `dataset.jsonl`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Manifest> {
    let scm = prepare(cfg)?;
    let ds = generate_dataset(cfg.n_persons, &scm, &cfg.policy, derive_seed(cfg.seed()?, &[label("dataset")]))?;
    let mut out = OutputDir::create(&cfg.out_dir)?;
    write_dataset(&ds, &out.path("dataset.jsonl"))?;
    out.record("dataset.jsonl")?;
    out.finish("simulate", cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub estimand_id: u8,
    pub k: u32,
    pub condition_id: usize,
    pub method: String,
    pub p: f64,
    pub se: f64,
    pub n: u64,
}

fn mc_seed(cfg: &ExperimentConfig, stage: &str, id: u8, k: u32, condition: usize) -> Result<u64> {
    Ok(derive_seed(
        cfg.seed()?,
        &[label(stage), u64::from(id), u64::from(k), condition as u64],
    ))
}

/// Oracle risks for every requested estimand at sampled conditions; writes
/// `conditions.jsonl` and `oracle.csv`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Manifest> {
    let scm = prepare(cfg)?;
    let mode = scm.config().mode;
    let mut rows = Vec::new();
    let mut condition_rows = Vec::new();
    let mut grid: BTreeMap<u32, Vec<PatientState>> = BTreeMap::new();
    for &k in &cfg.query_hours {
        let conds = conditions(cfg, &scm, k)?;
        for (i, c) in conds.iter().enumerate() {
            condition_rows.push(PersonHour::from_state(i as u64, c, None));
        }
        grid.insert(k, conds);
    }
    for (id, k) in cfg.queries() {
        let spec = builtin_estimand(id, k)?;
        for (i, c) in grid[&k].iter().enumerate() {
            if mode == Mode::Coarse {
                rows.push(oracle_row(id, k, i, oracle_exact(&spec, c, &scm, Some(&cfg.policy))?));
            }
            let seed = mc_seed(cfg, "evaluate", id, k, i)?;
            let est = oracle_mc(&spec, c, &scm, Some(&cfg.policy), cfg.n_mc, seed)?;
            rows.push(oracle_row(id, k, i, est));
        }
    }
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let mut jsonl = String::new();
    for r in &condition_rows {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    out.write("conditions.jsonl", jsonl.as_bytes())?;
    out.write("oracle.csv", &csv_bytes(&rows)?)?;
    out.finish("evaluate", cfg)
}

fn oracle_row(id: u8, k: u32, condition_id: usize, est: RiskEstimate) -> OracleRow {
    OracleRow {
        estimand_id: id,
        k,
        condition_id,
        method: est.method.name().to_string(),
        p: est.p,
        se: est.se,
        n: est.n,
    }
}

/// Estimators fitted for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModels {
    pub gcomp: TransitionModels,
    pub naive: Vec<NaiveModel>,
    pub ice: Vec<FittedIce>,
    /// Fits that the data could not support, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFit {
    pub estimand_id: u8,
    pub k: u32,
    pub method: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedIce {
    pub estimand_id: u8,
    pub k: u32,
    pub model: IceModel,
}

/// Naive models are indexed by (hour, horizon); the horizon is capped at
/// the last observed hour.
fn naive_key(spec: &EstimandSpec, last_hour: u32) -> (u32, u32) {
    (spec.moment_of_use, spec.horizon_hour().min(last_hour))
}

pub fn fit_models(cfg: &ExperimentConfig, ds: &Dataset) -> Result<FittedModels> {
    let gcomp = fit_gcomp(ds)?;
    let last_hour = ds.rows().iter().map(|r| r.k).max().unwrap_or(0);
    let mut naive: Vec<NaiveModel> = Vec::new();
    let mut ice = Vec::new();
    let mut skipped = Vec::new();
    for (id, k) in cfg.queries() {
        let spec = builtin_estimand(id, k)?;
        let (nk, nh) = naive_key(&spec, last_hour);
        if !naive.iter().any(|m| (m.k, m.horizon) == (nk, nh)) {
            naive.push(fit_naive(ds, nk, nh)?);
        }
        if spec.regime.is_static() {
            match fit_ice(ds, &spec) {
                Ok(model) => ice.push(FittedIce { estimand_id: id, k, model }),
                Err(e @ (Error::Positivity { .. } | Error::EmptyRiskSet(_))) => skipped.push(SkippedFit {
                    estimand_id: id,
                    k,
                    method: Method::Ice.name().to_string(),
                    reason: e.to_string(),
                }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(FittedModels { gcomp, naive, ice, skipped })
}

/// Fit every estimator; writes `models.json` (and `dataset.jsonl` when the
/// data were simulated).
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<Manifest> {
    let scm = prepare(cfg)?;
    let ds = dataset(cfg, &scm)?;
    let models = fit_models(cfg, &ds)?;
    let mut out = OutputDir::create(&cfg.out_dir)?;
    if cfg.dataset.is_none() {
        write_dataset(&ds, &out.path("dataset.jsonl"))?;
        out.record("dataset.jsonl")?;
    }
    out.write("models.json", (serde_json::to_string_pretty(&models)? + "\n").as_bytes())?;
    out.finish("fit", cfg)
}

pub const COMPARED_METHODS: [Method; 3] = [Method::Naive, Method::Gcomp, Method::Ice];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub estimand_id: u8,
    pub k: u32,
    pub profile_id: usize,
    pub method: String,
    /// Empty when the method does not apply or failed.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub oracle: f64,
    pub oracle_se: f64,
    pub bias: Option<f64>,
    pub note: String,
}

/// Profiles at hour `k`: the distress profile (id 0) followed by sampled conditions.
fn profiles(cfg: &ExperimentConfig, scm: &Scm, k: u32) -> Result<Vec<PatientState>> {
    let mut out = vec![distress_profile(scm.config().mode, k)];
    out.extend(conditions(cfg, scm, k)?);
    Ok(out)
}

fn estimate(
    method: Method,
    models: &FittedModels,
    cfg: &ExperimentConfig,
    spec: &EstimandSpec,
    id: u8,
    profile_id: usize,
    profile: &PatientState,
) -> Result<RiskEstimate> {
    let k = spec.moment_of_use;
    match method {
        Method::Naive => {
            let last_hour = models.gcomp_horizon();
            let key = naive_key(spec, last_hour);
            let m = models
                .naive
                .iter()
                .find(|m| (m.k, m.horizon) == key)
                .expect("naive model fitted for every query");
            m.predict(profile)
        }
        Method::Gcomp => match &models.gcomp {
            TransitionModels::Coarse(tables) => gcomp_exact(tables, profile, spec),
            continuous => {
                let seed = mc_seed(cfg, "gcomp", id, k, profile_id)?;
                gcomp_predict(continuous, profile, spec, cfg.n_mc, seed)
            }
        },
        Method::Ice => match models.ice.iter().find(|m| (m.estimand_id, m.k) == (id, k)) {
            Some(m) => m.model.predict(profile),
            None => Err(Error::InvalidRegime("not a static intervention option".into())),
        },
        Method::OracleExact | Method::OracleMc => unreachable!("not an estimator"),
    }
}

impl FittedModels {
    fn gcomp_horizon(&self) -> u32 {
        use crate::scm::Dynamics;
        self.gcomp.horizon()
    }
}

/// Fit every estimator and compare against oracle truth at a profile grid;
/// writes `compare.csv` and `summary.txt`.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Manifest> {
    let scm = prepare(cfg)?;
    let mode = scm.config().mode;
    let ds = dataset(cfg, &scm)?;
    let models = fit_models(cfg, &ds)?;
    let mut grid: BTreeMap<u32, Vec<PatientState>> = BTreeMap::new();
    for &k in &cfg.query_hours {
        grid.insert(k, profiles(cfg, &scm, k)?);
    }
    let mut rows = Vec::new();
    for (id, k) in cfg.queries() {
        let spec = builtin_estimand(id, k)?;
        for (pid, profile) in grid[&k].iter().enumerate() {
            let truth = match mode {
                Mode::Coarse => oracle_exact(&spec, profile, &scm, Some(&cfg.policy))?,
                Mode::Continuous => {
                    let seed = mc_seed(cfg, "compare_oracle", id, k, pid)?;
                    oracle_mc(&spec, profile, &scm, Some(&cfg.policy), cfg.n_mc, seed)?
                }
            };
            for method in COMPARED_METHODS {
                let skipped = models
                    .skipped
                    .iter()
                    .find(|s| (s.estimand_id, s.k, s.method.as_str()) == (id, k, method.name()));
                let (est, note) = match skipped {
                    Some(s) => (None, s.reason.clone()),
                    None => match estimate(method, &models, cfg, &spec, id, pid, profile) {
                        Ok(e) => (Some(e), String::new()),
                        Err(e) => (None, e.to_string()),
                    },
                };
                rows.push(CompareRow {
                    estimand_id: id,
                    k,
                    profile_id: pid,
                    method: method.name().to_string(),
                    estimate: est.map(|e| e.p),
                    se: est.map(|e| e.se),
                    oracle: truth.p,
                    oracle_se: truth.se,
                    bias: est.map(|e| e.p - truth.p),
                    note,
                });
            }
        }
    }
    let mut out = OutputDir::create(&cfg.out_dir)?;
    out.write("compare.csv", &csv_bytes(&rows)?)?;
    out.write("summary.txt", summarize(&rows).as_bytes())?;
    out.finish("compare", cfg)
}

/// Maximum absolute error per estimand and method.
pub fn summarize(rows: &[CompareRow]) -> String {
    let mut worst: BTreeMap<(u8, u32), BTreeMap<&str, (f64, usize, usize)>> = BTreeMap::new();
    for r in rows {
        let e = worst
            .entry((r.estimand_id, r.k))
            .or_default()
            .entry(r.method.as_str())
            .or_insert((0.0, 0, 0));
        match r.bias {
            Some(b) => {
                e.0 = e.0.max(b.abs());
                e.1 += 1;
            }
            None => e.2 += 1,
        }
    }
    let mut s = String::from("max |estimate - oracle| by estimand and method\n\n");
    let _ = writeln!(s, "{:<10} {:>4} {:<8} {:>10} {:>8} {:>8}", "estimand", "k", "method", "max_error", "n", "failed");
    for ((id, k), methods) in &worst {
        for method in COMPARED_METHODS {
            if let Some((m, n, failed)) = methods.get(method.name()) {
                let err = if *n > 0 { format!("{m:.4}") } else { "-".to_string() };
                let _ = writeln!(s, "{:<10} {:>4} {:<8} {:>10} {:>8} {:>8}", id, k, method.name(), err, n, failed);
            }
        }
    }
    s
}
