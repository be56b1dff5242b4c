use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use serde_json::json;

use resrmn::data::{load_csv_pair, load_mnist_idx, permute_with, Dataset, Permutation, SplitSpec};
use resrmn::experiment::{
    evaluate_final, memory_size_sweep, run_search, sample_search_space, select_best, LedgerRecord,
    ModelKind, Protocol,
};
use resrmn::linalg::eigenvalues;
use resrmn::reservoir::{build_resrmn, trajectory, MemoryParams, Orthogonal, ResEsnParams};
use resrmn::stability::{
    eigen_records, geometry_check, necessary_condition, verify_theorem1, write_eigen_csv, Probe,
};

use crate::config::{Config, DataFormat, MemorySize};
use crate::output::write_atomic;
use crate::Failure;

/// Tolerance for the eigenvalue placement checks in `verification.json`.
const GEOMETRY_TOL: f64 = 1e-8;

fn load_data(cfg: &Config) -> Result<(Dataset, Dataset), Failure> {
    let train_path = Config::required(&cfg.train, "train")?;
    let test_path = Config::required(&cfg.test, "test")?;
    let (mut train, mut test) = match cfg.format {
        DataFormat::Csv => load_csv_pair(train_path, test_path, cfg.n_features)?,
        DataFormat::Idx => {
            let tl = Config::required(&cfg.train_labels, "train_labels")?;
            let vl = Config::required(&cfg.test_labels, "test_labels")?;
            let train = load_mnist_idx(train_path, tl)?;
            let test = load_mnist_idx(test_path, vl)?;
            if test.seq_len() != train.seq_len() {
                return Err(Failure::Data(format!(
                    "{}: image size differs from the training images",
                    test_path.display()
                )));
            }
            (train, test)
        }
    };
    if let Some(seed) = cfg.permute_seed {
        let perm = Permutation::from_seed(train.seq_len(), seed);
        train = permute_with(&train, &perm)?;
        test = permute_with(&test, &perm)?;
    }
    if let Some(n) = cfg.subsample {
        train = train.subsample(n, cfg.seed)?;
    }
    if let Some(n) = cfg.test_subsample {
        test = test.subsample(n, cfg.seed)?;
    }
    Ok((train, test))
}

fn jsonl(records: impl IntoIterator<Item = LedgerRecord>) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_json_line());
        s.push('\n');
    }
    s
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values always serialize");
    s.push('\n');
    s
}

pub fn run(config_path: &Path) -> Result<(), Failure> {
    let cfg = Config::load(config_path)?;
    let kind = *Config::required(&cfg.model_kind, "model_kind")?;
    let out_dir = Config::required(&cfg.output_dir, "output_dir")?.clone();
    write_atomic(&out_dir.join("resolved_config.toml"), cfg.to_toml().as_bytes())?;

    let (train, test) = load_data(&cfg)?;
    let dataset = cfg.name.clone().unwrap_or_else(|| train.name().to_string());
    let n_m = match cfg.n_m {
        MemorySize::Auto => train.seq_len(),
        MemorySize::Fixed(n) => n,
    };
    let protocol = Protocol {
        n_inits: cfg.n_inits.unwrap_or(10),
        seed: cfg.seed,
        lambda_grid: cfg.lambda_grid.clone(),
        split: SplitSpec {
            fraction: cfg.split.fraction.unwrap_or(0.3),
            stratified: cfg.split.stratified.unwrap_or(true),
            seed: cfg.split.seed,
        },
    };
    let configs = sample_search_space(&cfg.search, kind, cfg.n_h, n_m, cfg.max_configs, cfg.seed)?;
    eprintln!(
        "{dataset}: {} train / {} test, T={}, {} configurations of {kind}, {} inits",
        train.len(),
        test.len(),
        train.seq_len(),
        configs.len(),
        protocol.n_inits
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(1))
        .build()
        .map_err(|e| Failure::Config(format!("cannot start {} workers: {e}", cfg.workers.unwrap_or(1))))?;
    let budget = cfg.budget_seconds.map(Duration::from_secs);

    let (outcome, final_result, sweep) = pool.install(|| -> Result<_, Failure> {
        let outcome = run_search(&configs, &train, &protocol, budget)?;
        let best = select_best(&outcome.trials)?.config;
        let final_result = evaluate_final(&best, &train, &test, &protocol)?;
        let sweep = match &cfg.sweep {
            Some(s) if kind.has_memory() => {
                Some(memory_size_sweep(&best, &train, &test, &s.fractions, &protocol)?)
            }
            _ => None,
        };
        Ok((outcome, final_result, sweep))
    })?;

    write_atomic(
        &out_dir.join("trials.jsonl"),
        jsonl(outcome.trials.iter().map(|t| LedgerRecord::from_trial(&dataset, t))).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("final.jsonl"),
        jsonl([LedgerRecord::from_final(&dataset, &final_result)]).as_bytes(),
    )?;
    let best = &final_result.config;
    let entry = format!("{:.1}±{:.1}", 100.0 * final_result.mean, 100.0 * final_result.std);
    let summary = json!({
        "dataset": dataset,
        "model_kind": kind,
        "n_trials": outcome.trials.len(),
        "skipped_trials": outcome.skipped,
        "best_trial_index": best.trial_index,
        "hyperparameters": best.hyper,
        "n_h": best.n_h,
        "n_m": best.n_m,
        "n_inits": protocol.n_inits,
        "per_seed_test_acc": final_result.per_seed_test_acc,
        "chosen_lambdas": final_result.chosen_lambdas,
        "mean": final_result.mean,
        "std": final_result.std,
        "table_entry": entry,
    });
    write_atomic(&out_dir.join("summary.json"), pretty(&summary).as_bytes())?;
    if let Some(points) = sweep {
        let mut csv = String::from("fraction,n_m,mean_acc,change_pct\n");
        for p in points {
            writeln!(csv, "{},{},{},{}", p.fraction, p.n_m, p.mean_acc, p.change_pct).unwrap();
        }
        write_atomic(&out_dir.join("memory_sweep.csv"), csv.as_bytes())?;
    }
    if outcome.skipped > 0 {
        eprintln!("budget exhausted: {} configurations not evaluated", outcome.skipped);
    }
    println!("{dataset} {kind} {entry}");
    Ok(())
}

pub fn spectrum(config_path: &Path) -> Result<(), Failure> {
    let cfg = Config::load(config_path)?;
    let out_dir = Config::required(&cfg.output_dir, "output_dir")?.clone();
    let s = &cfg.spectrum;
    let drive_seq = if s.from_drive {
        let (train, _) = load_data(&cfg)?;
        if train.n_features() != s.n_x {
            return Err(Failure::Config(format!(
                "spectrum.n_x is {} but the training data has {} features",
                s.n_x,
                train.n_features()
            )));
        }
        Some(train.sequences()[0].clone())
    } else {
        None
    };

    let mut checks = Vec::new();
    for &kind in &s.kinds {
        let o = Orthogonal::build(kind, s.n_h, s.seed)?;
        let mut csv = String::from("module,re,im\n");
        for z in eigenvalues(o.matrix())?.iter() {
            writeln!(csv, "ortho,{},{}", z.re, z.im).unwrap();
        }
        write_atomic(&out_dir.join(format!("ortho_{}.csv", kind.name())), csv.as_bytes())?;

        let model = build_resrmn(
            &MemoryParams {
                n_m: s.n_m,
                n_x: s.n_x,
                omega_xm: s.omega_xm,
                seed: s.seed,
            },
            &ResEsnParams {
                n_h: s.n_h,
                n_x: s.n_x,
                n_m: s.n_m,
                rho: s.rho,
                omega_x: s.omega_x,
                omega_m: s.omega_m,
                omega_b: s.omega_b,
                alpha: s.alpha,
                beta: s.beta,
                ortho: kind,
                seed: s.seed,
            },
        )?;
        let probe = match &drive_seq {
            None => Probe::uniform(&model, s.state_seed),
            Some(seq) => {
                let t = seq.rows();
                let traj = trajectory(&model, seq)?;
                let (h, m) = if t >= 2 {
                    (traj.h[t - 2].clone(), traj.m[t - 2].clone())
                } else {
                    (vec![0.0; s.n_h], vec![0.0; s.n_m])
                };
                Probe {
                    h,
                    m,
                    x: seq.row(t - 1).to_vec(),
                }
            }
        };
        let report = verify_theorem1(&model, &probe.h, &probe.m, &probe.x)?;
        let mut buf = Vec::new();
        write_eigen_csv(&eigen_records(&report), &mut buf)?;
        write_atomic(&out_dir.join(format!("jacobian_{}.csv", kind.name())), &buf)?;
        let geometry = geometry_check(&model, &report, GEOMETRY_TOL)?;
        checks.push(json!({
            "ortho": kind,
            "union_residual": report.union_residual,
            "rho_resrmn": report.rho_resrmn,
            "rho_memory": report.rho_memory,
            "rho_resesn": report.rho_resesn,
            "radius_gap": report.radius_gap,
            "necessary_condition": necessary_condition(&model)?,
            "geometry": geometry,
        }));
        eprintln!(
            "{}: union residual {:.3e}, rho {:.6}",
            kind.name(),
            report.union_residual,
            report.rho_resrmn
        );
    }
    let verification = json!({ "settings": s, "evaluation": if s.from_drive { "drive" } else { "uniform" }, "kinds": checks });
    write_atomic(&out_dir.join("verification.json"), pretty(&verification).as_bytes())?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-dataset change against the baseline followed by cross-dataset
/// averages under the dataset name `average`.
pub fn comparison_csv(
    records: &[LedgerRecord],
    baseline: ModelKind,
) -> Result<String, Failure> {
    let mut acc: BTreeMap<String, BTreeMap<ModelKind, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.per_seed_test_acc.is_some()) {
        acc.entry(r.dataset.clone()).or_default().insert(r.model_kind, r.mean);
    }
    if acc.is_empty() {
        return Err(Failure::Data("no final test results in the given ledgers".into()));
    }
    let mut out = String::from("dataset,model_kind,change_pct\n");
    let mut per_kind: BTreeMap<ModelKind, Vec<f64>> = BTreeMap::new();
    for (dataset, kinds) in &acc {
        let base = *kinds.get(&baseline).ok_or_else(|| {
            Failure::Data(format!("no {baseline} result for dataset {dataset}"))
        })?;
        if base == 0.0 {
            return Err(Failure::Core(resrmn::Error::Degenerate(format!(
                "{baseline} accuracy on {dataset} is zero"
            ))));
        }
        for (&kind, &mean) in kinds {
            let change = 100.0 * (mean - base) / base;
            per_kind.entry(kind).or_default().push(change);
            writeln!(out, "{},{},{}", csv_field(dataset), kind, change).unwrap();
        }
    }
    for (kind, changes) in per_kind {
        let avg = changes.iter().sum::<f64>() / changes.len() as f64;
        writeln!(out, "average,{kind},{avg}").unwrap();
    }
    Ok(out)
}

pub fn report(ledgers: &[std::path::PathBuf], baseline: &str, output: Option<&Path>) -> Result<(), Failure> {
    let baseline: ModelKind = baseline.parse()?;
    let mut records = Vec::new();
    for path in ledgers {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: LedgerRecord = serde_json::from_str(line).map_err(|e| {
                Failure::Data(format!("{}: line {}: {e}", path.display(), i + 1))
            })?;
            records.push(r);
        }
    }
    let csv = comparison_csv(&records, baseline)?;
    match output {
        Some(p) => write_atomic(p, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn inspect(
    train: &Path,
    test: &Path,
    n_features: usize,
    idx_labels: Option<&[std::path::PathBuf]>,
) -> Result<(), Failure> {
    let (tr, te) = match idx_labels {
        Some([tl, vl]) => (load_mnist_idx(train, tl)?, load_mnist_idx(test, vl)?),
        Some(_) => return Err(Failure::Config("--idx-labels takes two paths".into())),
        None => load_csv_pair(train, test, n_features)?,
    };
    println!("{}", Dataset::shape_line(&tr, &te));
    println!("class\ttrain\ttest");
    let (ctr, cte) = (tr.class_counts(), te.class_counts());
    for (k, value) in tr.class_values().iter().enumerate() {
        println!("{value}\t{}\t{}", ctr[k], cte.get(k).copied().unwrap_or(0));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use resrmn::experiment::Hyperparameters;

    fn record(dataset: &str, kind: ModelKind, mean: f64) -> LedgerRecord {
        LedgerRecord {
            dataset: dataset.into(),
            trial_index: 0,
            model_kind: kind,
            hyperparameters: Hyperparameters::default(),
            n_h: 1,
            n_m: 0,
            per_seed_val_acc: None,
            per_seed_test_acc: Some(vec![mean]),
            mean,
            std: 0.0,
            chosen_lambdas: vec![0.0],
            wall_ms: 0,
        }
    }

    #[test]
    fn comparison_arithmetic() {
        let recs = vec![
            record("a", ModelKind::LeakyEsn, 0.5),
            record("a", ModelKind::Rmn, 0.6),
            record("b", ModelKind::LeakyEsn, 0.8),
            record("b", ModelKind::Rmn, 0.6),
        ];
        let csv = comparison_csv(&recs, ModelKind::LeakyEsn).unwrap();
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        let get = |d: &str, k: &str| -> f64 {
            rows.iter().find(|r| r[0] == d && r[1] == k).unwrap()[2].parse().unwrap()
        };
        assert_eq!(get("a", "leakyESN"), 0.0);
        assert!((get("a", "RMN") - 20.0).abs() < 1e-12);
        assert!((get("b", "RMN") + 25.0).abs() < 1e-12);
        assert!((get("average", "RMN") - (get("a", "RMN") + get("b", "RMN")) / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn comparison_needs_baseline() {
        let recs = vec![record("a", ModelKind::Rmn, 0.6)];
        assert!(matches!(comparison_csv(&recs, ModelKind::LeakyEsn), Err(Failure::Data(_))));
        assert!(matches!(comparison_csv(&[], ModelKind::LeakyEsn), Err(Failure::Data(_))));
    }
}
