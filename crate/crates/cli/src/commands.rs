//! The six subcommands. Each one reads its inputs from disk, writes its
//! artifacts under the output directory, and appends a manifest line,
//! so runs compose through files and any stage can be rerun alone.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use agenda_core::dataset::{filter_dataset, parse_csv, parse_movielens, CsvSchema, Dataset, LabelNames, UserType};
use agenda_core::eval::{
    bench_selection, build_user_session, fold_rows, run_experiment, BenchConfig, EvalReport,
    ExperimentConfig, FoldContext, LogisticParams,
};
use agenda_core::mf::{cross_validate_scored, load_model, save_model, train_mf, CvObjective, HyperParams, ItemModel};
use agenda_core::selection::{
    alpha_terms, risk_closed_form, risk_quadrature, select_next_fbc, QuadratureConfig,
    SelectionMode, SessionState,
};

use crate::config::{Config, DataFormat};
use crate::manifest;

/// Schema of the canonical dataset snapshot written by `ingest`: types
/// are stored as their sign so any source's labels round-trip through
/// one fixed layout.
fn snapshot_schema() -> CsvSchema {
    CsvSchema {
        user_col: "user".into(),
        item_col: "item".into(),
        rating_col: "rating".into(),
        type_col: "type".into(),
        plus_label: "+1".into(),
        minus_label: "-1".into(),
        labels_path: None,
    }
}

fn snapshot_csv(data: &Dataset) -> String {
    let mut rows: Vec<(usize, usize, f64)> =
        data.ratings.iter().map(|t| (t.user, t.item, t.rating)).collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out = String::from("user,item,rating,type\n");
    for (user, item, rating) in rows {
        let _ = writeln!(out, "{user},{item},{rating},{}", data.types[user]);
    }
    out
}

fn load_snapshot(cfg: &Config) -> Result<Dataset> {
    let path = cfg.dataset_path();
    parse_csv(&path, &snapshot_schema())
        .with_context(|| format!("loading dataset snapshot '{}'", path.display()))
}

pub fn ingest(cfg: &Config) -> Result<()> {
    let format = cfg.format.expect("checked by require_for");
    let ratings = cfg.ratings.as_ref().expect("checked by require_for");
    let raw = match format {
        DataFormat::Movielens => {
            let users = cfg.users.as_ref().expect("checked by require_for");
            parse_movielens(ratings, users, cfg.attribute)?
        }
        DataFormat::Csv => {
            let schema = CsvSchema {
                user_col: cfg.user_col.clone(),
                item_col: cfg.item_col.clone(),
                rating_col: cfg.rating_col.clone(),
                type_col: cfg.type_col.clone(),
                plus_label: cfg.plus_label.clone(),
                minus_label: cfg.minus_label.clone(),
                labels_path: cfg.labels.clone(),
            };
            parse_csv(ratings, &schema)?
        }
    };
    let data = filter_dataset(&raw, cfg.min_user_ratings, cfg.min_item_ratings)?;

    fs::create_dir_all(&cfg.out)?;
    let snapshot = cfg.out.join("dataset.csv");
    fs::write(&snapshot, snapshot_csv(&data))?;

    let mut inputs: Vec<(&str, &Path)> = vec![("ratings", ratings.as_path())];
    if format == DataFormat::Movielens {
        inputs.push(("users", cfg.users.as_ref().expect("checked").as_path()));
    } else if let Some(labels) = &cfg.labels {
        inputs.push(("labels", labels.as_path()));
    }
    manifest::append(&cfg.out, "ingest", &[cfg.seed], &inputs, &[("dataset", &snapshot)])?;

    let plus = data.types.iter().filter(|&&t| t == UserType::Plus).count();
    println!(
        "ingest: {} users ({} '{}' / {} '{}'), {} items, {} ratings -> {}",
        data.n_users,
        plus,
        data.label_names.plus,
        data.n_users - plus,
        data.label_names.minus,
        data.n_items,
        data.ratings.len(),
        snapshot.display()
    );
    Ok(())
}

pub fn train(cfg: &Config) -> Result<()> {
    let data = load_snapshot(cfg)?;
    let hp = cfg.hyperparams(cfg.seed);
    let (model, _, trace) = train_mf(&data, &hp)?;

    fs::create_dir_all(&cfg.out)?;
    let model_path = cfg.model_out_path();
    save_model(&model, &model_path)?;
    manifest::append(
        &cfg.out,
        "train",
        &[hp.seed],
        &[("dataset", &cfg.dataset_path())],
        &[("model", &model_path)],
    )?;
    println!(
        "train: {} users x {} items, d={} -> {} (objective {:.6} after {} epochs)",
        data.n_users,
        data.n_items,
        hp.d,
        model_path.display(),
        trace.objective.last().expect("at least one epoch"),
        trace.objective.len()
    );
    Ok(())
}

pub fn cv(cfg: &Config) -> Result<()> {
    let data = load_snapshot(cfg)?;
    let ds = cfg.d_grid.clone().unwrap_or_else(|| vec![cfg.d]);
    let regs = cfg.reg_grid.clone().unwrap_or_else(|| vec![cfg.reg]);
    let lambdas = cfg.lambda_grid.clone().unwrap_or_else(|| vec![cfg.lambda]);
    let mut grid = Vec::new();
    for &d in &ds {
        for &reg in &regs {
            for &lambda in &lambdas {
                grid.push(HyperParams {
                    d,
                    reg,
                    classifier_lambda: lambda,
                    ..cfg.hyperparams(cfg.seed)
                });
            }
        }
    }
    let (best, scores) = cross_validate_scored(&data, &grid, cfg.folds, cfg.objective)?;

    let objective = match cfg.objective {
        CvObjective::Auc => "auc",
        CvObjective::Rmse => "rmse",
    };
    let mut csv = String::from("d,reg,lambda,objective,score,chosen\n");
    for (i, (hp, score)) in grid.iter().zip(&scores).enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            hp.d,
            hp.reg,
            hp.classifier_lambda,
            objective,
            score,
            usize::from(i == best)
        );
    }
    fs::create_dir_all(&cfg.out)?;
    let cv_path = cfg.out.join("cv.csv");
    fs::write(&cv_path, csv)?;
    manifest::append(
        &cfg.out,
        "cv",
        &[cfg.seed],
        &[("dataset", &cfg.dataset_path())],
        &[("cv", &cv_path)],
    )?;
    println!(
        "cv: chosen d={} reg={} lambda={} ({objective} {:.4}) -> {}",
        grid[best].d,
        grid[best].reg,
        grid[best].classifier_lambda,
        scores[best],
        cv_path.display()
    );
    Ok(())
}

/// Session replay with a pre-trained model instead of per-fold training:
/// every user becomes a test user and all rows carry fold 0.
fn fixed_model_report(
    data: &Dataset,
    model: ItemModel,
    ecfg: &ExperimentConfig,
) -> Result<EvalReport> {
    ecfg.validate()?;
    let ctx = FoldContext::build(model, data, ecfg)?;
    let by_user = data.by_user();
    let mut users = Vec::new();
    for (uid, rated) in by_user.iter().enumerate() {
        if let Some(u) = build_user_session(uid, rated, data.types[uid], ctx.model.n_items(), ecfg)
        {
            if !u.items.is_empty() {
                users.push(u);
            }
        }
    }
    let mut report = EvalReport {
        seed: ecfg.seed,
        config_echo: format!("fixed-model {}", ecfg.echo()),
        rows: Vec::new(),
        timing: Vec::new(),
    };
    for &strategy in &ecfg.strategies {
        report.rows.extend(fold_rows(&ctx, &users, strategy, 0, ecfg)?);
    }
    Ok(report)
}

pub fn simulate(cfg: &Config) -> Result<()> {
    let data = load_snapshot(cfg)?;
    let fixed_model = match &cfg.model {
        Some(path) => {
            let model =
                load_model(path).with_context(|| format!("loading model '{}'", path.display()))?;
            if model.n_items() != data.n_items {
                bail!(
                    "model/dataset mismatch: model covers {} items, dataset has {}",
                    model.n_items(),
                    data.n_items
                );
            }
            Some(model)
        }
        None => None,
    };

    fs::create_dir_all(&cfg.out)?;
    let seeds = cfg.seed_list();
    let mut outputs = Vec::new();
    for &seed in &seeds {
        let ecfg = ExperimentConfig {
            strategies: cfg.strategies.clone(),
            budget: cfg.budget,
            tau: cfg.tau,
            holdout: cfg.holdout,
            stride: cfg.stride,
            folds: cfg.folds,
            seed,
            hp: cfg.hyperparams(seed),
            logistic: LogisticParams {
                l2: cfg.logistic_l2,
                epochs: cfg.logistic_epochs,
                step: cfg.logistic_step,
            },
        };
        let report = match &fixed_model {
            Some(model) => fixed_model_report(&data, model.clone(), &ecfg)?,
            None => run_experiment(&data, &ecfg)?,
        };
        let report_path = cfg.out.join(format!("report_seed{seed}.csv"));
        fs::write(&report_path, report.to_csv())?;
        println!("simulate: seed {seed}: {} rows -> {}", report.rows.len(), report_path.display());
        outputs.push(report_path);
    }

    let dataset_path = cfg.dataset_path();
    let mut inputs: Vec<(&str, &Path)> = vec![("dataset", dataset_path.as_path())];
    if let Some(model) = &cfg.model {
        inputs.push(("model", model.as_path()));
    }
    let output_refs: Vec<(&str, &Path)> =
        outputs.iter().map(|p| ("report", p.as_path())).collect();
    manifest::append(&cfg.out, "simulate", &seeds, &inputs, &output_refs)?;
    Ok(())
}

pub fn bench(cfg: &Config) -> Result<()> {
    let bcfg = BenchConfig {
        d: cfg.bench_d,
        n_items: cfg.bench_items,
        n_candidates: cfg.bench_candidates,
        a_sizes: cfg.a_sizes.clone(),
        reps: cfg.reps,
        warmup: cfg.warmup,
        lambda: cfg.lambda,
        seed: cfg.seed,
    };
    let timing = bench_selection(&bcfg)?;
    let report =
        EvalReport { seed: cfg.seed, config_echo: String::new(), rows: Vec::new(), timing };
    fs::create_dir_all(&cfg.out)?;
    let timing_path = cfg.out.join("timing.csv");
    fs::write(&timing_path, report.timing_csv())?;
    for row in &report.timing {
        println!(
            "bench: {:11} |A|={:4} mean {:.3e}s (95% CI +/- {:.1e})",
            row.mode, row.a_size, row.mean_s, row.ci95_s
        );
    }
    manifest::append(&cfg.out, "bench", &[cfg.seed], &[], &[("timing", &timing_path)])?;
    Ok(())
}

fn random_model(rng: &mut ChaCha8Rng, n_items: usize, d: usize, gap_scale: f64) -> ItemModel {
    let v = Array2::from_shape_fn((n_items, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    let mut z_plus = Array1::zeros(n_items);
    let mut z_minus = Array1::zeros(n_items);
    for j in 0..n_items {
        let center = rng.random::<f64>() - 0.5;
        let gap = gap_scale * (rng.random::<f64>() * 2.0 - 1.0);
        z_plus[j] = center + gap / 2.0;
        z_minus[j] = center - gap / 2.0;
    }
    ItemModel {
        v,
        z_plus,
        z_minus,
        hp: HyperParams {
            d,
            classifier_lambda: 0.5 + 10.0 * rng.random::<f64>(),
            ..HyperParams::default()
        },
        label_names: LabelNames::new("+1", "-1"),
    }
}

fn cache_gap(a: &SessionState, b: &SessionState) -> f64 {
    let mat = |x: &Array2<f64>, y: &Array2<f64>| {
        (x - y).iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    };
    mat(&a.sigma_inv, &b.sigma_inv)
        .max(mat(&a.m, &b.m))
        .max((a.log_det - b.log_det).abs())
}

/// Built-in numerical consistency suites; any violation aborts with a
/// nonzero exit. Covers the two load-bearing equivalences: rank-one
/// cache updates against from-scratch rebuilds, and the closed-form
/// risk against direct numerical integration.
pub fn selftest(cfg: &Config) -> Result<()> {
    let cases = cfg.selftest_cases.max(1);
    const CACHE_TOL: f64 = 1e-8;
    const RISK_TOL: f64 = 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_gap = 0.0f64;
    for case in 0..cases {
        let d = 1 + rng.random_range(0..12);
        let n_asked = rng.random_range(0..=30);
        let n_items = n_asked + 1 + rng.random_range(1..20);
        let model = random_model(&mut rng, n_items, d, 2.0);
        let mut direct = SessionState::new(&model, 0..n_items, SelectionMode::Direct)?;
        let mut inc = SessionState::new(&model, 0..n_items, SelectionMode::Incremental)?;
        for _ in 0..n_asked {
            let pick = rng.random_range(0..inc.candidates.len());
            let j = *inc.candidates.iter().nth(pick).expect("nonempty");
            let r = rng.random::<f64>() * 5.0;
            direct.extend(&model, j, r)?;
            inc.extend(&model, j, r)?;
        }
        let gap = cache_gap(&direct, &inc);
        worst_gap = worst_gap.max(gap);
        if gap > CACHE_TOL {
            bail!("selftest failed: session {case}: cache gap {gap:.3e} exceeds {CACHE_TOL:.0e}");
        }
        let choice_direct = select_next_fbc(&direct, &model)?;
        let choice_inc = select_next_fbc(&inc, &model)?;
        if choice_direct != choice_inc {
            bail!(
                "selftest failed: session {case}: selections diverged ({choice_direct} vs {choice_inc})"
            );
        }
    }
    println!("selftest: incremental vs direct: ok ({cases} sessions, worst cache gap {worst_gap:.2e})");

    let grid = QuadratureConfig::default();
    let mut worst_rel = 0.0f64;
    let (mut pos, mut neg, mut gapless) = (0usize, 0usize, 0usize);
    for case in 0..cases {
        let d = 1 + rng.random_range(0..6);
        let n_asked = rng.random_range(0..8);
        let n_items = n_asked + 1 + rng.random_range(1..6);
        let degenerate = case % 5 == 4;
        let mut model = random_model(&mut rng, n_items, d, 1.5);
        if degenerate {
            for j in 0..n_items {
                let mid = (model.z_plus[j] + model.z_minus[j]) / 2.0;
                model.z_plus[j] = mid;
                model.z_minus[j] = mid;
            }
        }
        let mode =
            if case % 2 == 0 { SelectionMode::Direct } else { SelectionMode::Incremental };
        let mut s = SessionState::new(&model, 0..n_items, mode)?;
        for _ in 0..n_asked {
            let pick = rng.random_range(0..s.candidates.len());
            let j = *s.candidates.iter().nth(pick).expect("nonempty");
            s.extend(&model, j, rng.random::<f64>() * 4.0 - 0.5)?;
        }
        let j = *s.candidates.iter().next().expect("candidate left");
        match alpha_terms(&s, &model, j)?.a3 {
            a3 if a3 > 0.0 => pos += 1,
            a3 if a3 < 0.0 => neg += 1,
            _ => gapless += 1,
        }
        let cf = risk_closed_form(&s, j, &model)?;
        let q = risk_quadrature(&s, j, &model, &grid)?;
        let rel = (cf.log_value - q.log_value).abs();
        worst_rel = worst_rel.max(rel);
        if rel > RISK_TOL {
            bail!("selftest failed: instance {case}: closed form vs quadrature gap {rel:.3e}");
        }
    }
    println!(
        "selftest: closed form vs quadrature: ok ({cases} instances, worst relative gap {worst_rel:.2e}, slope signs +{pos}/-{neg}, {gapless} gapless)"
    );
    Ok(())
}
