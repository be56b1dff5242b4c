//! Random-search model selection, multi-seed evaluation and the memory
//! size sweep.
//!
//! Model seeds depend only on the top-level seed and the initialization
//! index, so every model kind sees the same seeds and the comparison between
//! kinds is paired.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::linalg::{mix_seed, Matrix, RngStream};
use crate::readout::{accuracy, one_hot, tune_lambda, RidgeSolver, Scaler, DEFAULT_LAMBDA_GRID};
use crate::reservoir::{
    build_leaky_esn, build_resesn, build_resrmn, build_rmn, final_states, final_states_fed,
    LeakyEsnParams, MemoryFeed, MemoryParams, Model, OrthoKind, ResEsnParams,
};

/// Upper bound on the memory feeds kept alive across trials.
pub const FEED_CACHE_BYTES: usize = 1 << 30;

/// The eight model variants compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "leakyESN")]
    LeakyEsn,
    #[serde(rename = "ResESN_R")]
    ResEsnR,
    #[serde(rename = "ResESN_C")]
    ResEsnC,
    #[serde(rename = "ResESN_I")]
    ResEsnI,
    #[serde(rename = "RMN")]
    Rmn,
    #[serde(rename = "ResRMN_R")]
    ResRmnR,
    #[serde(rename = "ResRMN_C")]
    ResRmnC,
    #[serde(rename = "ResRMN_I")]
    ResRmnI,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::LeakyEsn,
        ModelKind::ResEsnR,
        ModelKind::ResEsnC,
        ModelKind::ResEsnI,
        ModelKind::Rmn,
        ModelKind::ResRmnR,
        ModelKind::ResRmnC,
        ModelKind::ResRmnI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LeakyEsn => "leakyESN",
            ModelKind::ResEsnR => "ResESN_R",
            ModelKind::ResEsnC => "ResESN_C",
            ModelKind::ResEsnI => "ResESN_I",
            ModelKind::Rmn => "RMN",
            ModelKind::ResRmnR => "ResRMN_R",
            ModelKind::ResRmnC => "ResRMN_C",
            ModelKind::ResRmnI => "ResRMN_I",
        }
    }

    pub fn has_memory(self) -> bool {
        matches!(
            self,
            ModelKind::Rmn | ModelKind::ResRmnR | ModelKind::ResRmnC | ModelKind::ResRmnI
        )
    }

    pub fn is_residual(self) -> bool {
        self.ortho().is_some()
    }

    pub fn ortho(self) -> Option<OrthoKind> {
        match self {
            ModelKind::ResEsnR | ModelKind::ResRmnR => Some(OrthoKind::Random),
            ModelKind::ResEsnC | ModelKind::ResRmnC => Some(OrthoKind::Cyclic),
            ModelKind::ResEsnI | ModelKind::ResRmnI => Some(OrthoKind::Identity),
            ModelKind::LeakyEsn | ModelKind::Rmn => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::Param(format!(
                    "unknown model kind `{s}`, expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// A searchable hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyper {
    OmegaXm,
    OmegaX,
    OmegaM,
    OmegaB,
    Rho,
    Tau,
    Alpha,
    Beta,
}

impl Hyper {
    /// Hyperparameters sampled for a model kind, in enumeration order.
    pub fn for_kind(kind: ModelKind) -> Vec<Hyper> {
        let mut out = Vec::new();
        if kind.has_memory() {
            out.push(Hyper::OmegaXm);
        }
        out.push(Hyper::OmegaX);
        if kind.has_memory() {
            out.push(Hyper::OmegaM);
        }
        out.extend([Hyper::OmegaB, Hyper::Rho]);
        if kind.is_residual() {
            out.extend([Hyper::Alpha, Hyper::Beta]);
        } else {
            out.push(Hyper::Tau);
        }
        out
    }
}

/// Candidate values per hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub omega_xm: Vec<f64>,
    pub omega_x: Vec<f64>,
    pub omega_m: Vec<f64>,
    pub omega_b: Vec<f64>,
    pub rho: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let scales = vec![0.01, 0.1, 1.0];
        Self {
            omega_xm: scales.clone(),
            omega_x: scales.clone(),
            omega_m: scales,
            omega_b: vec![0.0, 0.01, 0.1, 1.0],
            rho: vec![0.9, 1.0, 1.1],
            tau: vec![0.01, 0.1, 0.5, 0.9, 0.99, 1.0],
            alpha: vec![0.0, 0.01, 0.1, 0.5, 0.9, 0.99, 1.0],
            beta: vec![0.01, 0.1, 0.5, 0.9, 0.99, 1.0],
        }
    }
}

impl SearchSpace {
    pub fn values(&self, h: Hyper) -> &[f64] {
        match h {
            Hyper::OmegaXm => &self.omega_xm,
            Hyper::OmegaX => &self.omega_x,
            Hyper::OmegaM => &self.omega_m,
            Hyper::OmegaB => &self.omega_b,
            Hyper::Rho => &self.rho,
            Hyper::Tau => &self.tau,
            Hyper::Alpha => &self.alpha,
            Hyper::Beta => &self.beta,
        }
    }

    /// Number of grid points for a model kind.
    pub fn size(&self, kind: ModelKind) -> usize {
        Hyper::for_kind(kind)
            .into_iter()
            .map(|h| self.values(h).len())
            .product()
    }

    /// Grid point `index`, last hyperparameter varying fastest.
    pub fn point(&self, kind: ModelKind, mut index: usize) -> Hyperparameters {
        let dims = Hyper::for_kind(kind);
        let mut hp = Hyperparameters::default();
        for &h in dims.iter().rev() {
            let vals = self.values(h);
            let v = vals[index % vals.len()];
            index /= vals.len();
            hp.set(h, v);
        }
        hp
    }
}

/// Hyperparameter values of one trial. Fields that do not apply to the
/// model kind are absent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_xm: Option<f64>,
    pub omega_x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_m: Option<f64>,
    pub omega_b: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl Hyperparameters {
    fn set(&mut self, h: Hyper, v: f64) {
        match h {
            Hyper::OmegaXm => self.omega_xm = Some(v),
            Hyper::OmegaX => self.omega_x = v,
            Hyper::OmegaM => self.omega_m = Some(v),
            Hyper::OmegaB => self.omega_b = v,
            Hyper::Rho => self.rho = v,
            Hyper::Tau => self.tau = Some(v),
            Hyper::Alpha => self.alpha = Some(v),
            Hyper::Beta => self.beta = Some(v),
        }
    }

    fn require(v: Option<f64>, name: &str, kind: ModelKind) -> Result<f64> {
        v.ok_or_else(|| Error::Param(format!("{kind} needs hyperparameter {name}")))
    }
}

/// One point of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_index: usize,
    pub model_kind: ModelKind,
    pub hyper: Hyperparameters,
    pub n_h: usize,
    /// Memory size; 0 for kinds without a memory module.
    pub n_m: usize,
}

impl TrialConfig {
    /// Builds the model for one initialization seed.
    pub fn build(&self, n_x: usize, seed: u64) -> Result<Model> {
        let k = self.model_kind;
        let h = &self.hyper;
        if k.has_memory() != (self.n_m > 0) {
            return Err(Error::Param(format!(
                "{k} with memory size {} is inconsistent",
                self.n_m
            )));
        }
        let req = |v, name| Hyperparameters::require(v, name, k);
        let memory = || -> Result<MemoryParams> {
            Ok(MemoryParams {
                n_m: self.n_m,
                n_x,
                omega_xm: req(h.omega_xm, "omega_xm")?,
                seed,
            })
        };
        let omega_m = if k.has_memory() {
            req(h.omega_m, "omega_m")?
        } else {
            0.0
        };
        let leaky = || -> Result<LeakyEsnParams> {
            Ok(LeakyEsnParams {
                n_h: self.n_h,
                n_x,
                rho: h.rho,
                omega_x: h.omega_x,
                omega_b: h.omega_b,
                tau: req(h.tau, "tau")?,
                n_m: self.n_m,
                omega_m,
                seed,
            })
        };
        let residual = |ortho| -> Result<ResEsnParams> {
            Ok(ResEsnParams {
                n_h: self.n_h,
                n_x,
                n_m: self.n_m,
                rho: h.rho,
                omega_x: h.omega_x,
                omega_m,
                omega_b: h.omega_b,
                alpha: req(h.alpha, "alpha")?,
                beta: req(h.beta, "beta")?,
                ortho,
                seed,
            })
        };
        Ok(match (k.has_memory(), k.ortho()) {
            (false, None) => Model::Leaky(build_leaky_esn(&leaky()?)?),
            (false, Some(o)) => Model::ResEsn(build_resesn(&residual(o)?)?),
            (true, None) => Model::Rmn(build_rmn(&memory()?, &leaky()?)?),
            (true, Some(o)) => Model::ResRmn(build_resrmn(&memory()?, &residual(o)?)?),
        })
    }
}

/// Seed of initialization `init` under the top-level seed.
pub fn model_seed(seed: u64, init: usize) -> u64 {
    mix_seed(seed, init as u64)
}

/// Configurations to evaluate: the full grid when it has at most
/// `max_configs` points, otherwise `max_configs` distinct points drawn
/// uniformly. Returned in ascending grid order with consecutive trial
/// indices.
pub fn sample_search_space(
    space: &SearchSpace,
    kind: ModelKind,
    n_h: usize,
    n_m: usize,
    max_configs: usize,
    seed: u64,
) -> Result<Vec<TrialConfig>> {
    if max_configs < 1 {
        return Err(Error::Param("max_configs must be at least 1".into()));
    }
    let size = space.size(kind);
    if size == 0 {
        return Err(Error::Param(format!("search space for {kind} is empty")));
    }
    let points: Vec<usize> = if size <= max_configs {
        (0..size).collect()
    } else {
        let mut rng = RngStream::new(seed, "search");
        let mut v = index::sample(rng.rng_mut(), size, max_configs).into_vec();
        v.sort_unstable();
        v
    };
    Ok(points
        .into_iter()
        .enumerate()
        .map(|(trial_index, p)| TrialConfig {
            trial_index,
            model_kind: kind,
            hyper: space.point(kind, p),
            n_h,
            n_m: if kind.has_memory() { n_m } else { 0 },
        })
        .collect())
}

/// Fixed settings shared by all trials of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub n_inits: usize,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub split: SplitSpec,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            n_inits: 10,
            seed: 0,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            split: SplitSpec {
                fraction: 0.3,
                stratified: true,
                seed: 0,
            },
        }
    }
}

impl Protocol {
    fn validate(&self) -> Result<()> {
        if self.n_inits < 1 {
            return Err(Error::Param("n_inits must be at least 1".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::Param("lambda grid is empty".into()));
        }
        self.split.validate()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub config: TrialConfig,
    pub per_seed_val_acc: Vec<f64>,
    pub chosen_lambdas: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalResult {
    pub config: TrialConfig,
    pub per_seed_test_acc: Vec<f64>,
    pub chosen_lambdas: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub wall_ms: u64,
}

fn rows(m: &Matrix, idx: &[usize]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(idx.len() * m.cols());
    for &i in idx {
        data.extend_from_slice(m.row(i));
    }
    Matrix::from_vec(idx.len(), m.cols(), data)
}

fn pick(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn attach(cfg: &TrialConfig) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Trial {
        trial_index: cfg.trial_index,
        model_kind: cfg.model_kind.name().into(),
        source: Box::new(e),
    }
}

/// Memory feeds of one sequence set, one per initialization, shared by
/// all trials with the same reservoir sizes.
pub struct FeedCache<'a> {
    seqs: &'a [Matrix],
    seed: u64,
    n_h: usize,
    n_m: usize,
    keep: bool,
    cells: Vec<OnceLock<Arc<MemoryFeed>>>,
}

impl<'a> FeedCache<'a> {
    pub fn new(seqs: &'a [Matrix], seed: u64, n_h: usize, n_m: usize, n_inits: usize) -> Self {
        let per_init: usize = seqs.iter().map(|s| s.rows() * n_h * 8).sum();
        Self {
            seqs,
            seed,
            n_h,
            n_m,
            keep: per_init.saturating_mul(n_inits) <= FEED_CACHE_BYTES,
            cells: (0..n_inits).map(|_| OnceLock::new()).collect(),
        }
    }

    fn get(&self, init: usize, n_h: usize, n_m: usize) -> Result<Arc<MemoryFeed>> {
        let seed = model_seed(self.seed, init);
        let cell = match self.cells.get(init) {
            Some(c) if self.keep && n_h == self.n_h && n_m == self.n_m => c,
            _ => return Ok(Arc::new(MemoryFeed::compute(n_h, n_m, seed, self.seqs)?)),
        };
        if let Some(f) = cell.get() {
            return Ok(f.clone());
        }
        let feed = Arc::new(MemoryFeed::compute(n_h, n_m, seed, self.seqs)?);
        Ok(cell.get_or_init(|| feed).clone())
    }
}

/// Final states of every sequence. Memory models go through the shared
/// feed of their initialization.
fn states_for(cfg: &TrialConfig, model: &Model, init: usize, cache: &FeedCache) -> Result<Matrix> {
    if !cfg.model_kind.has_memory() {
        return final_states(model, cache.seqs);
    }
    let coeff = cfg.hyper.omega_m.unwrap_or(0.0) * cfg.hyper.omega_xm.unwrap_or(0.0);
    let feed = cache.get(init, cfg.n_h, cfg.n_m)?;
    final_states_fed(model, &feed, coeff, cache.seqs)
}

/// Validation accuracy and chosen regularization for one seed, using states
/// that have already been computed for the whole training set.
fn validate_states(
    states: &Matrix,
    labels: &[usize],
    n_classes: usize,
    split: &(Vec<usize>, Vec<usize>),
    grid: &[f64],
) -> Result<(f64, f64)> {
    let (tr, va) = split;
    let (x_tr, x_va) = (rows(states, tr)?, rows(states, va)?);
    let scaler = Scaler::fit(&x_tr)?;
    let tuned = tune_lambda(
        &scaler.transform(&x_tr)?,
        &pick(labels, tr),
        &scaler.transform(&x_va)?,
        &pick(labels, va),
        n_classes,
        grid,
    )?;
    Ok((tuned.val_accuracy, tuned.lambda))
}

/// Validation performance of one configuration over all seeds.
pub fn run_trial(cfg: &TrialConfig, train: &Dataset, protocol: &Protocol) -> Result<TrialResult> {
    let cache = FeedCache::new(
        train.sequences(),
        protocol.seed,
        cfg.n_h,
        cfg.n_m,
        protocol.n_inits,
    );
    run_trial_cached(cfg, train, protocol, &cache)
}

/// As [`run_trial`], reusing memory feeds of the training sequences.
pub fn run_trial_cached(
    cfg: &TrialConfig,
    train: &Dataset,
    protocol: &Protocol,
    cache: &FeedCache,
) -> Result<TrialResult> {
    protocol.validate()?;
    let start = Instant::now();
    let on_err = attach(cfg);
    let split =
        split_indices(train.labels(), train.n_classes(), &protocol.split).map_err(&on_err)?;
    let mut accs = Vec::with_capacity(protocol.n_inits);
    let mut lambdas = Vec::with_capacity(protocol.n_inits);
    for init in 0..protocol.n_inits {
        let run = || -> Result<(f64, f64)> {
            let model = cfg.build(train.n_features(), model_seed(protocol.seed, init))?;
            let states = states_for(cfg, &model, init, cache)?;
            validate_states(
                &states,
                train.labels(),
                train.n_classes(),
                &split,
                &protocol.lambda_grid,
            )
        };
        let (acc, lambda) = run().map_err(&on_err)?;
        accs.push(acc);
        lambdas.push(lambda);
    }
    let (mean, std) = mean_std(&accs);
    Ok(TrialResult {
        config: *cfg,
        per_seed_val_acc: accs,
        chosen_lambdas: lambdas,
        mean,
        std,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Highest mean validation accuracy; ties go to the lower trial index.
pub fn select_best(trials: &[TrialResult]) -> Result<&TrialResult> {
    trials
        .iter()
        .reduce(|best, t| {
            let better = t.mean > best.mean
                || (t.mean == best.mean && t.config.trial_index < best.config.trial_index);
            if better {
                t
            } else {
                best
            }
        })
        .ok_or_else(|| Error::Param("no trials to select from".into()))
}

/// Retrains on the full training set and scores the test set, once per
/// seed. The regularization of each seed is selected on the validation
/// split first.
pub fn evaluate_final(
    cfg: &TrialConfig,
    train: &Dataset,
    test: &Dataset,
    protocol: &Protocol,
) -> Result<FinalResult> {
    protocol.validate()?;
    let start = Instant::now();
    let on_err = attach(cfg);
    if test.n_features() != train.n_features() || test.n_classes() != train.n_classes() {
        return Err(on_err(Error::Dimension(
            "test set does not match the training set".into(),
        )));
    }
    let split =
        split_indices(train.labels(), train.n_classes(), &protocol.split).map_err(&on_err)?;
    let targets = one_hot(train.labels(), train.n_classes()).map_err(&on_err)?;
    let train_feeds = FeedCache::new(
        train.sequences(),
        protocol.seed,
        cfg.n_h,
        cfg.n_m,
        protocol.n_inits,
    );
    let test_feeds = FeedCache::new(
        test.sequences(),
        protocol.seed,
        cfg.n_h,
        cfg.n_m,
        protocol.n_inits,
    );
    let mut accs = Vec::with_capacity(protocol.n_inits);
    let mut lambdas = Vec::with_capacity(protocol.n_inits);
    for init in 0..protocol.n_inits {
        let run = || -> Result<(f64, f64)> {
            let model = cfg.build(train.n_features(), model_seed(protocol.seed, init))?;
            let s_train = states_for(cfg, &model, init, &train_feeds)?;
            let s_test = states_for(cfg, &model, init, &test_feeds)?;
            let (_, lambda) = validate_states(
                &s_train,
                train.labels(),
                train.n_classes(),
                &split,
                &protocol.lambda_grid,
            )?;
            let scaler = Scaler::fit(&s_train)?;
            let readout =
                RidgeSolver::new(&scaler.transform(&s_train)?, &targets)?.solve(lambda)?;
            let pred = readout.predict_labels(&scaler.transform(&s_test)?)?;
            Ok((accuracy(&pred, test.labels())?, lambda))
        };
        let (acc, lambda) = run().map_err(&on_err)?;
        accs.push(acc);
        lambdas.push(lambda);
    }
    let (mean, std) = mean_std(&accs);
    Ok(FinalResult {
        config: *cfg,
        per_seed_test_acc: accs,
        chosen_lambdas: lambdas,
        mean,
        std,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Outcome of a budgeted search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Completed trials in trial-index order.
    pub trials: Vec<TrialResult>,
    /// Trials not started because the budget ran out.
    pub skipped: usize,
}

/// Runs trials in parallel. The budget is checked before each trial
/// starts; a started trial always completes.
pub fn run_search(
    configs: &[TrialConfig],
    train: &Dataset,
    protocol: &Protocol,
    budget: Option<Duration>,
) -> Result<SearchOutcome> {
    let start = Instant::now();
    let (n_h, n_m) = configs.first().map_or((0, 0), |c| (c.n_h, c.n_m));
    let cache = FeedCache::new(train.sequences(), protocol.seed, n_h, n_m, protocol.n_inits);
    let results: Vec<Option<TrialResult>> = configs
        .par_iter()
        .map(|cfg| {
            if budget.is_some_and(|b| start.elapsed() >= b) {
                return Ok(None);
            }
            run_trial_cached(cfg, train, protocol, &cache).map(Some)
        })
        .collect::<Result<_>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    Ok(SearchOutcome {
        trials: results.into_iter().flatten().collect(),
        skipped,
    })
}

/// Fractions of `T` used as memory sizes by default.
pub const DEFAULT_SWEEP_FRACTIONS: [f64; 4] = [0.1, 0.2, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub n_m: usize,
    pub mean_acc: f64,
    /// `100 * (acc - base) / base`, base being `N_m = T`.
    pub change_pct: f64,
}

/// Test accuracy as a function of memory size, relative to `N_m = T`.
pub fn memory_size_sweep(
    cfg: &TrialConfig,
    train: &Dataset,
    test: &Dataset,
    fractions: &[f64],
    protocol: &Protocol,
) -> Result<Vec<SweepPoint>> {
    if !cfg.model_kind.has_memory() {
        return Err(Error::Param(format!(
            "{} has no memory module",
            cfg.model_kind
        )));
    }
    let t = train.seq_len();
    let size = |f: f64| -> Result<usize> {
        let n = (f * t as f64).round();
        if n.is_nan() || n < 1.0 {
            return Err(Error::Param(format!(
                "fraction {f} of T={t} gives no memory units"
            )));
        }
        Ok(n as usize)
    };
    let eval = |n_m: usize| -> Result<f64> {
        let c = TrialConfig { n_m, ..*cfg };
        Ok(evaluate_final(&c, train, test, protocol)?.mean)
    };
    let sizes: Vec<usize> = fractions.iter().map(|&f| size(f)).collect::<Result<_>>()?;
    let accs: Vec<f64> = sizes.iter().map(|&n| eval(n)).collect::<Result<_>>()?;
    let base = match sizes.iter().position(|&n| n == t) {
        Some(i) => accs[i],
        None => eval(t)?,
    };
    if base == 0.0 {
        return Err(Error::Degenerate("base accuracy is zero".into()));
    }
    Ok(fractions
        .iter()
        .zip(sizes)
        .zip(accs)
        .map(|((&fraction, n_m), acc)| SweepPoint {
            fraction,
            n_m,
            mean_acc: acc,
            change_pct: 100.0 * (acc - base) / base,
        })
        .collect())
}

/// One line of a results ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub dataset: String,
    pub trial_index: usize,
    pub model_kind: ModelKind,
    pub hyperparameters: Hyperparameters,
    pub n_h: usize,
    pub n_m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_seed_val_acc: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_seed_test_acc: Option<Vec<f64>>,
    pub mean: f64,
    pub std: f64,
    pub chosen_lambdas: Vec<f64>,
    pub wall_ms: u64,
}

impl LedgerRecord {
    fn base(
        dataset: &str,
        c: &TrialConfig,
        mean: f64,
        std: f64,
        lambdas: &[f64],
        wall_ms: u64,
    ) -> Self {
        Self {
            dataset: dataset.into(),
            trial_index: c.trial_index,
            model_kind: c.model_kind,
            hyperparameters: c.hyper,
            n_h: c.n_h,
            n_m: c.n_m,
            per_seed_val_acc: None,
            per_seed_test_acc: None,
            mean,
            std,
            chosen_lambdas: lambdas.to_vec(),
            wall_ms,
        }
    }

    pub fn from_trial(dataset: &str, r: &TrialResult) -> Self {
        Self {
            per_seed_val_acc: Some(r.per_seed_val_acc.clone()),
            ..Self::base(
                dataset,
                &r.config,
                r.mean,
                r.std,
                &r.chosen_lambdas,
                r.wall_ms,
            )
        }
    }

    pub fn from_final(dataset: &str, r: &FinalResult) -> Self {
        Self {
            per_seed_test_acc: Some(r.per_seed_test_acc.clone()),
            ..Self::base(
                dataset,
                &r.config,
                r.mean,
                r.std,
                &r.chosen_lambdas,
                r.wall_ms,
            )
        }
    }

    /// The record as one JSON line, without a trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("ledger records always serialize")
    }
}

/// Synthetic tasks with known answers.
pub mod toy {
    use super::*;

    /// Constant sequences at `+1` (class 1) and `-1` (class 0).
    pub fn constant_sign(n_per_class: usize, t: usize) -> Result<Dataset> {
        let mut seqs = Vec::with_capacity(2 * n_per_class);
        let mut labels = Vec::with_capacity(2 * n_per_class);
        for i in 0..2 * n_per_class {
            let y = i % 2;
            let v = if y == 1 { 1.0 } else { -1.0 };
            seqs.push(Matrix::from_vec(t, 1, vec![v; t])?);
            labels.push(y);
        }
        Dataset::new("constant_sign", seqs, labels, 2)
    }

    /// The label is the sign of the first input; the remaining inputs are
    /// uniform noise on (-1, 1).
    pub fn delay_recall(n: usize, t: usize, seed: u64) -> Result<Dataset> {
        let mut rng = RngStream::new(seed, "delay_recall");
        let mut seqs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % 2;
            let mut v = Vec::with_capacity(t);
            v.push(if y == 1 { 1.0 } else { -1.0 });
            v.extend((1..t).map(|_| rng.next_symmetric()));
            seqs.push(Matrix::from_vec(t, 1, v)?);
            labels.push(y);
        }
        Dataset::new("delay_recall", seqs, labels, 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_sizes() {
        let s = SearchSpace::default();
        assert_eq!(s.size(ModelKind::LeakyEsn), 216);
        assert_eq!(s.size(ModelKind::ResEsnR), 1512);
        assert_eq!(s.size(ModelKind::Rmn), 1944);
        assert_eq!(s.size(ModelKind::ResRmnR), 13608);
    }

    #[test]
    fn grid_and_sample() {
        let s = SearchSpace::default();
        let grid = sample_search_space(&s, ModelKind::LeakyEsn, 100, 0, 1000, 1).unwrap();
        assert_eq!(grid.len(), 216);
        let distinct: std::collections::HashSet<String> =
            grid.iter().map(|c| format!("{:?}", c.hyper)).collect();
        assert_eq!(distinct.len(), 216);
        assert!(grid
            .iter()
            .all(|c| c.hyper.alpha.is_none() && c.hyper.tau.is_some()));

        let a = sample_search_space(&s, ModelKind::ResRmnR, 100, 50, 1000, 3).unwrap();
        assert_eq!(a.len(), 1000);
        let distinct: std::collections::HashSet<String> =
            a.iter().map(|c| format!("{:?}", c.hyper)).collect();
        assert_eq!(distinct.len(), 1000);
        assert!(a
            .iter()
            .all(|c| c.hyper.tau.is_none() && c.hyper.beta.is_some() && c.n_m == 50));
        assert_eq!(
            a,
            sample_search_space(&s, ModelKind::ResRmnR, 100, 50, 1000, 3).unwrap()
        );
        assert_ne!(
            a,
            sample_search_space(&s, ModelKind::ResRmnR, 100, 50, 1000, 4).unwrap()
        );
        assert!(sample_search_space(&s, ModelKind::ResRmnR, 100, 50, 0, 3).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            assert_eq!(
                serde_json::to_string(&k).unwrap(),
                format!("\"{}\"", k.name())
            );
        }
        assert!("ESN".parse::<ModelKind>().is_err());
    }

    fn result(index: usize, mean: f64) -> TrialResult {
        let cfg = TrialConfig {
            trial_index: index,
            model_kind: ModelKind::LeakyEsn,
            hyper: Hyperparameters::default(),
            n_h: 1,
            n_m: 0,
        };
        TrialResult {
            config: cfg,
            per_seed_val_acc: vec![mean],
            chosen_lambdas: vec![0.0],
            mean,
            std: 0.0,
            wall_ms: 0,
        }
    }

    #[test]
    fn select_best_rules() {
        let t = vec![result(0, 0.8), result(1, 0.9), result(2, 0.9)];
        assert_eq!(select_best(&t).unwrap().config.trial_index, 1);
        let rev: Vec<TrialResult> = t.iter().rev().cloned().collect();
        assert_eq!(select_best(&rev).unwrap().config.trial_index, 1);
        assert_eq!(select_best(&t[..1]).unwrap().config.trial_index, 0);
        assert!(select_best(&[]).is_err());
    }

    fn small_protocol(n_inits: usize) -> Protocol {
        Protocol {
            n_inits,
            ..Protocol::default()
        }
    }

    fn config(kind: ModelKind, n_m: usize) -> TrialConfig {
        TrialConfig {
            trial_index: 0,
            model_kind: kind,
            hyper: Hyperparameters {
                omega_xm: kind.has_memory().then_some(1.0),
                omega_x: 1.0,
                omega_m: kind.has_memory().then_some(0.1),
                omega_b: 0.1,
                rho: 0.9,
                tau: (!kind.is_residual()).then_some(0.5),
                alpha: kind.is_residual().then_some(0.5),
                beta: kind.is_residual().then_some(0.5),
            },
            n_h: 20,
            n_m,
        }
    }

    #[test]
    fn toy_separable_task() {
        let train = toy::constant_sign(10, 5).unwrap();
        let test = toy::constant_sign(4, 5).unwrap();
        for kind in [ModelKind::LeakyEsn, ModelKind::ResRmnC] {
            let cfg = config(kind, if kind.has_memory() { 5 } else { 0 });
            let r = run_trial(&cfg, &train, &small_protocol(1)).unwrap();
            assert_eq!(r.per_seed_val_acc, vec![1.0]);
            let f = evaluate_final(&cfg, &train, &test, &small_protocol(3)).unwrap();
            assert_eq!(f.per_seed_test_acc, vec![1.0; 3]);
            assert!((f.mean - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn trials_are_deterministic() {
        let train = toy::delay_recall(30, 8, 1).unwrap();
        let cfg = config(ModelKind::ResRmnR, 8);
        let p = small_protocol(10);
        let a = run_trial(&cfg, &train, &p).unwrap();
        let b = run_trial(&cfg, &train, &p).unwrap();
        assert_eq!(a.per_seed_val_acc.len(), 10);
        assert_eq!(a.per_seed_val_acc, b.per_seed_val_acc);
        assert_eq!(a.chosen_lambdas, b.chosen_lambdas);
        let (m, s) = mean_std(&a.per_seed_val_acc);
        assert_eq!((m, s), (a.mean, a.std));
    }

    #[test]
    fn build_checks_memory_size() {
        assert!(config(ModelKind::Rmn, 0).build(1, 0).is_err());
        assert!(config(ModelKind::LeakyEsn, 3).build(1, 0).is_err());
        let mut c = config(ModelKind::ResEsnI, 0);
        c.hyper.beta = None;
        assert!(matches!(c.build(1, 0), Err(Error::Param(_))));
    }

    #[test]
    fn sweep_base_is_zero() {
        let train = toy::delay_recall(40, 10, 2).unwrap();
        let test = toy::delay_recall(20, 10, 3).unwrap();
        let cfg = config(ModelKind::ResRmnI, 10);
        let pts = memory_size_sweep(
            &cfg,
            &train,
            &test,
            &DEFAULT_SWEEP_FRACTIONS,
            &small_protocol(1),
        )
        .unwrap();
        assert_eq!(
            pts.iter().map(|p| p.n_m).collect::<Vec<_>>(),
            vec![1, 2, 10, 20]
        );
        assert_eq!(pts[2].change_pct, 0.0);
        assert!(memory_size_sweep(&cfg, &train, &test, &[0.01], &small_protocol(1)).is_err());
        assert!(memory_size_sweep(
            &config(ModelKind::LeakyEsn, 0),
            &train,
            &test,
            &[1.0],
            &small_protocol(1)
        )
        .is_err());
    }

    #[test]
    fn ledger_records_serialize() {
        let r = result(3, 0.5);
        let line = LedgerRecord::from_trial("toy", &r).to_json_line();
        assert!(
            line.starts_with("{\"dataset\":\"toy\",\"trial_index\":3,\"model_kind\":\"leakyESN\"")
        );
        assert!(line.contains("\"per_seed_val_acc\":[0.5]"));
        assert!(!line.contains("per_seed_test_acc"));
        assert!(!line.contains("alpha"));
        let back: LedgerRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, LedgerRecord::from_trial("toy", &r));
    }

    #[test]
    fn search_respects_budget() {
        let train = toy::constant_sign(6, 4).unwrap();
        let s = SearchSpace::default();
        let cfgs = sample_search_space(&s, ModelKind::LeakyEsn, 5, 0, 4, 0).unwrap();
        let p = small_protocol(1);
        let all = run_search(&cfgs, &train, &p, None).unwrap();
        assert_eq!((all.trials.len(), all.skipped), (4, 0));
        assert!(all
            .trials
            .windows(2)
            .all(|w| w[0].config.trial_index < w[1].config.trial_index));
        let none = run_search(&cfgs, &train, &p, Some(Duration::ZERO)).unwrap();
        assert_eq!((none.trials.len(), none.skipped), (0, 4));
    }
}
