//! Evaluation: simulated interrogation sessions over held-out users,
//! per-question metrics, and selection timing.
//!
//! The harness replays each test user's recorded ratings against a
//! question-selection strategy: candidates are the items the user
//! actually rated (minus a per-user held-out set used for RMSE), the
//! answer to a question is the recorded rating, and the session stops on
//! classifier confidence, question budget, or candidate exhaustion.
//! Users are independent work units; they are simulated in parallel and
//! aggregated in user-id order so the report bytes never depend on
//! thread scheduling.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::{self, ClassifierError, LogisticModel, Query};
use crate::dataset::{mix_seed, split_folds, Dataset, DatasetError, UserType};
use crate::math::{ci95_half_width, mean, median};
use crate::mf::{train_mf, HyperParams, ItemModel, MfError};
use crate::selection::{
    select_next_fbc, select_next_pointest, passive_order, PassiveKind, SelectionError,
    SelectionMode, SessionState,
};

/// Salt for the per-user holdout draw (shared by all strategies so every
/// strategy sees the same candidates).
pub const HOLDOUT_SALT: u64 = 0x1D;
/// Salt for the per-user random question order.
pub const RANDOM_ORDER_SALT: u64 = 0x2A;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels have different lengths ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC needs both classes present (got {plus} positive, {minus} negative)")]
    SingleClass { plus: usize, minus: usize },
    #[error("non-finite score at index {index}")]
    BadScore { index: usize },
    #[error("invalid experiment config: {0}")]
    BadConfig(String),
    #[error("user {user} has no usable candidate items")]
    NoCandidates { user: usize },
    #[error(transparent)]
    Train(#[from] MfError),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// Area under the ROC curve of `scores` against binary `labels`, where
/// larger scores should indicate `UserType::Plus`. Computed from average
/// ranks (Mann-Whitney), so tied scores count half.
pub fn auc(scores: &[f64], labels: &[UserType]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::BadScore { index });
    }
    let n_plus = labels.iter().filter(|t| **t == UserType::Plus).count();
    let n_minus = labels.len() - n_plus;
    if n_plus == 0 || n_minus == 0 {
        return Err(EvalError::SingleClass { plus: n_plus, minus: n_minus });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Sum of average ranks (1-based) over the positive class.
    let mut rank_sum_plus = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == UserType::Plus {
                rank_sum_plus += avg_rank;
            }
        }
        i = j;
    }

    let u = rank_sum_plus - (n_plus * (n_plus + 1)) as f64 / 2.0;
    Ok(u / (n_plus as f64 * n_minus as f64))
}

/// Question-selection strategies the harness can replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Per-user seeded random order.
    Random,
    /// Descending training-set rating entropy.
    Entropy,
    /// Descending |bias gap|.
    MaxGap,
    /// Exact expected-risk selection, caches rebuilt from scratch.
    Fbc,
    /// Exact expected-risk selection with rank-one cache updates.
    IncFbc,
    /// Point-estimate surrogate with the factor-model posterior.
    PointEstFbc,
    /// Point-estimate surrogate with the logistic baseline posterior.
    PointEstLogistic,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
            Strategy::MaxGap => "maxgap",
            Strategy::Fbc => "fbc",
            Strategy::IncFbc => "incfbc",
            Strategy::PointEstFbc => "pointest-fbc",
            Strategy::PointEstLogistic => "pointest-logistic",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Some(match s {
            "random" => Strategy::Random,
            "entropy" => Strategy::Entropy,
            "maxgap" => Strategy::MaxGap,
            "fbc" => Strategy::Fbc,
            "incfbc" => Strategy::IncFbc,
            "pointest-fbc" => Strategy::PointEstFbc,
            "pointest-logistic" => Strategy::PointEstLogistic,
            _ => return None,
        })
    }

    pub fn all() -> &'static [Strategy] {
        &[
            Strategy::Random,
            Strategy::Entropy,
            Strategy::MaxGap,
            Strategy::Fbc,
            Strategy::IncFbc,
            Strategy::PointEstFbc,
            Strategy::PointEstLogistic,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Confidence,
    Exhausted,
}

/// One answered question: the posterior and prediction are those held
/// right after this answer was folded in.
#[derive(Debug, Clone)]
pub struct QuestionRecord {
    /// 1-based, consecutive.
    pub index: usize,
    pub item: usize,
    pub rating: f64,
    pub posterior_plus: f64,
    pub predicted: UserType,
}

#[derive(Debug, Clone)]
pub struct SessionTrace {
    pub user_id: usize,
    pub true_type: UserType,
    pub records: Vec<QuestionRecord>,
    pub stop: StopReason,
}

/// Logistic-baseline training settings used when a strategy needs it.
#[derive(Debug, Clone, Copy)]
pub struct LogisticParams {
    pub l2: f64,
    pub epochs: usize,
    pub step: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { l2: 1e-4, epochs: 100, step: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    /// Maximum questions per session.
    pub budget: usize,
    /// Stop once max(p, 1-p) exceeds this.
    pub tau: f64,
    /// Held-out items per user for the rating-prediction metric.
    pub holdout: usize,
    /// Prediction checkpoints land every `stride` questions.
    pub stride: usize,
    pub folds: usize,
    pub seed: u64,
    /// Model hyperparameters used for per-fold training.
    pub hp: HyperParams,
    pub logistic: LogisticParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            strategies: vec![Strategy::IncFbc, Strategy::Random],
            budget: 100,
            tau: 0.99,
            holdout: 10,
            stride: 10,
            folds: 10,
            seed: 1,
            hp: HyperParams::default(),
            logistic: LogisticParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: &str| Err(EvalError::BadConfig(msg.to_string()));
        if self.strategies.is_empty() {
            return bad("no strategies configured");
        }
        if self.budget == 0 {
            return bad("budget must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must be in [0, 1]");
        }
        if self.stride == 0 {
            return bad("stride must be >= 1");
        }
        if self.folds < 2 {
            return bad("folds must be >= 2");
        }
        Ok(())
    }

    /// One-line summary embedded in report headers.
    pub fn echo(&self) -> String {
        let names: Vec<&str> = self.strategies.iter().map(|s| s.name()).collect();
        format!(
            "strategies={} budget={} tau={} holdout={} stride={} folds={} seed={} d={} reg={} epochs={} step={} lambda={} sigma0={} prior_plus={}",
            names.join("+"),
            self.budget,
            self.tau,
            self.holdout,
            self.stride,
            self.folds,
            self.seed,
            self.hp.d,
            self.hp.reg,
            self.hp.epochs,
            self.hp.step_size,
            self.hp.classifier_lambda,
            self.hp.sigma_0,
            self.hp.prior_plus,
        )
    }
}

/// Everything shared by all sessions of one (fold, strategy set):
/// the trained model, the global passive orders, and the logistic
/// baseline when some strategy needs it.
pub struct FoldContext {
    pub model: ItemModel,
    pub maxgap: Option<Vec<usize>>,
    pub entropy: Option<Vec<usize>>,
    pub logistic: Option<LogisticModel>,
}

impl FoldContext {
    pub fn build(
        model: ItemModel,
        train: &Dataset,
        cfg: &ExperimentConfig,
    ) -> Result<Self, EvalError> {
        let wants = |s: Strategy| cfg.strategies.contains(&s);
        let maxgap = if wants(Strategy::MaxGap) {
            Some(passive_order(&model, None, PassiveKind::MaxGap, 0)?)
        } else {
            None
        };
        let entropy = if wants(Strategy::Entropy) {
            Some(passive_order(&model, Some(train), PassiveKind::Entropy, 0)?)
        } else {
            None
        };
        let logistic = if wants(Strategy::PointEstLogistic) {
            Some(classifier::train_logistic(
                train,
                cfg.logistic.l2,
                cfg.logistic.epochs,
                cfg.logistic.step,
                cfg.seed,
            )?)
        } else {
            None
        };
        Ok(FoldContext { model, maxgap, entropy, logistic })
    }
}

/// One test user's replayable data: candidate items (their recorded
/// ratings) and the held-out pairs reserved for prediction checkpoints.
#[derive(Debug, Clone)]
pub struct UserSession {
    pub user_id: usize,
    pub true_type: UserType,
    /// Candidate item ids, ascending, holdout removed.
    pub items: Vec<usize>,
    pub ratings: Vec<f64>,
    pub holdout: Vec<(usize, f64)>,
}

/// Split one user's model-covered ratings into candidates and holdout.
/// Users with fewer than `holdout + 1` covered ratings keep everything
/// as candidates (they sit out the prediction metric); users with no
/// covered ratings at all return None and are skipped.
pub fn build_user_session(
    user_id: usize,
    rated: &[(usize, f64)],
    true_type: UserType,
    n_model_items: usize,
    cfg: &ExperimentConfig,
) -> Option<UserSession> {
    let mut covered: Vec<(usize, f64)> = rated
        .iter()
        .copied()
        .filter(|&(j, _)| j < n_model_items)
        .collect();
    covered.sort_by_key(|&(j, _)| j);
    if covered.is_empty() {
        return None;
    }
    let mut holdout = Vec::new();
    if cfg.holdout > 0 && covered.len() >= cfg.holdout + 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, HOLDOUT_SALT, user_id));
        let mut idx: Vec<usize> = (0..covered.len()).collect();
        idx.shuffle(&mut rng);
        let mut held: Vec<usize> = idx[..cfg.holdout].to_vec();
        held.sort_unstable();
        for &i in held.iter().rev() {
            holdout.push(covered.remove(i));
        }
        holdout.reverse();
    }
    let (items, ratings): (Vec<usize>, Vec<f64>) = covered.into_iter().unzip();
    Some(UserSession { user_id, true_type, items, ratings, holdout })
}

fn predicted_type(p: f64, model: &ItemModel) -> UserType {
    if p > 0.5 {
        UserType::Plus
    } else if p < 0.5 {
        UserType::Minus
    } else if model.hp.prior_plus >= 0.5 {
        UserType::Plus
    } else {
        UserType::Minus
    }
}

/// Replay one user against one strategy. Candidates are the user's own
/// rated items; every answer is the recorded rating. After each answer
/// the classifier posterior and prediction are recorded; the session
/// ends when confidence exceeds tau, the budget is spent, or the
/// candidates run out.
pub fn simulate_user(
    ctx: &FoldContext,
    user: &UserSession,
    strategy: Strategy,
    cfg: &ExperimentConfig,
) -> Result<SessionTrace, EvalError> {
    if user.items.is_empty() {
        return Err(EvalError::NoCandidates { user: user.user_id });
    }
    let model = &ctx.model;
    let rating_of: HashMap<usize, f64> =
        user.items.iter().copied().zip(user.ratings.iter().copied()).collect();

    // Passive strategies walk a fixed order; active ones own a session
    // state. Both views share the same candidate bookkeeping.
    let mut remaining: BTreeSet<usize> = user.items.iter().copied().collect();
    let random_order;
    let order: Option<&[usize]> = match strategy {
        Strategy::Random => {
            let mut o = user.items.clone();
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, RANDOM_ORDER_SALT, user.user_id));
            o.shuffle(&mut rng);
            random_order = o;
            Some(&random_order)
        }
        Strategy::MaxGap => Some(ctx.maxgap.as_deref().expect("maxgap order prebuilt")),
        Strategy::Entropy => Some(ctx.entropy.as_deref().expect("entropy order prebuilt")),
        _ => None,
    };
    let mut order_pos = 0usize;
    let mut state = match strategy {
        Strategy::Fbc => {
            Some(SessionState::new(model, remaining.iter().copied(), SelectionMode::Direct)?)
        }
        Strategy::IncFbc | Strategy::PointEstFbc | Strategy::PointEstLogistic => {
            Some(SessionState::new(model, remaining.iter().copied(), SelectionMode::Incremental)?)
        }
        _ => None,
    };

    let posterior_of = |q: &Query| -> f64 {
        match strategy {
            Strategy::PointEstLogistic => classifier::logistic_posterior(
                ctx.logistic.as_ref().expect("logistic model prebuilt"),
                q,
            ),
            _ => classifier::posterior(model, q),
        }
    };

    let mut q = Query::empty();
    let mut records = Vec::new();
    let stop = loop {
        if records.len() == cfg.budget {
            break StopReason::Budget;
        }
        let next = if let Some(order) = order {
            let mut found = None;
            while order_pos < order.len() {
                let j = order[order_pos];
                order_pos += 1;
                if remaining.contains(&j) {
                    found = Some(j);
                    break;
                }
            }
            found
        } else {
            let s = state.as_ref().expect("active strategy has state");
            if s.candidates.is_empty() {
                None
            } else {
                Some(match strategy {
                    Strategy::Fbc | Strategy::IncFbc => select_next_fbc(s, model)?,
                    Strategy::PointEstFbc | Strategy::PointEstLogistic => {
                        select_next_pointest(s, model, &posterior_of)?
                    }
                    _ => unreachable!("passive strategies use the order path"),
                })
            }
        };
        let Some(j) = next else {
            break StopReason::Exhausted;
        };
        let r = rating_of[&j];
        remaining.remove(&j);
        if let Some(s) = state.as_mut() {
            s.extend(model, j, r)?;
        }
        q.push(model, j, r)?;
        let p = posterior_of(&q);
        records.push(QuestionRecord {
            index: records.len() + 1,
            item: j,
            rating: r,
            posterior_plus: p,
            predicted: predicted_type(p, model),
        });
        if p.max(1.0 - p) > cfg.tau {
            break StopReason::Confidence;
        }
    };

    Ok(SessionTrace { user_id: user.user_id, true_type: user.true_type, records, stop })
}

/// One user's squared-error contribution at one prediction checkpoint.
#[derive(Debug, Clone, Copy)]
pub struct CheckpointContribution {
    pub question: usize,
    pub sse: f64,
    pub n: usize,
}

/// At every stride-th answered question, fit the ridge profile on the
/// answers so far (under the type predicted at that point) and score the
/// held-out ratings. Returns one contribution per reachable checkpoint;
/// empty when the user has no holdout.
pub fn rmse_checkpoint(
    trace: &SessionTrace,
    model: &ItemModel,
    holdout: &[(usize, f64)],
    cfg: &ExperimentConfig,
) -> Result<Vec<CheckpointContribution>, EvalError> {
    if holdout.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut checkpoint = cfg.stride;
    while checkpoint <= trace.records.len() {
        let upto = &trace.records[..checkpoint];
        let items: Vec<usize> = upto.iter().map(|r| r.item).collect();
        let ratings: Vec<f64> = upto.iter().map(|r| r.rating).collect();
        let t_hat = upto.last().expect("checkpoint >= 1").predicted;
        let q = Query::new(model, items, ratings)?;
        let u_hat = classifier::ridge_profile(model, &q, t_hat);
        let mut sse = 0.0;
        for &(j, r) in holdout {
            let r_hat = u_hat.dot(&model.v.row(j)) + model.z(j, t_hat);
            sse += (r_hat - r) * (r_hat - r);
        }
        out.push(CheckpointContribution { question: checkpoint, sse, n: holdout.len() });
        checkpoint += cfg.stride;
    }
    Ok(out)
}

/// One row of the per-question metric table.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub strategy: &'static str,
    pub fold: usize,
    pub question: usize,
    /// None when the contributing users are single-class.
    pub auc: Option<f64>,
    pub accuracy: f64,
    /// Pooled over users' held-out pairs; None off checkpoints.
    pub rmse: Option<f64>,
    pub n_users: usize,
}

#[derive(Debug, Clone)]
pub struct TimingRow {
    pub mode: &'static str,
    pub a_size: usize,
    pub mean_s: f64,
    pub ci95_s: f64,
    pub median_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub seed: u64,
    pub config_echo: String,
    pub rows: Vec<MetricRow>,
    pub timing: Vec<TimingRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    /// Per-question metric table; `# config` comment first, then the
    /// pinned header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# seed={} {}", self.seed, self.config_echo);
        out.push_str("strategy,fold,question,auc,accuracy,rmse,n_users\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.strategy,
                r.fold,
                r.question,
                fmt_opt(r.auc),
                r.accuracy,
                fmt_opt(r.rmse),
                r.n_users
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("mode,a_size,mean_s,ci95_s\n");
        for t in &self.timing {
            let _ = writeln!(out, "{},{},{},{}", t.mode, t.a_size, t.mean_s, t.ci95_s);
        }
        out
    }
}

/// Run the full protocol: per fold, train on the train side, replay
/// every test user under every strategy (same holdouts and seeds), and
/// aggregate per-question metrics over the users still answering at
/// each count. Deterministic for a fixed config and seed.
pub fn run_experiment(data: &Dataset, cfg: &ExperimentConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let folds = split_folds(data, cfg.folds, cfg.seed)?;
    let mut report =
        EvalReport { seed: cfg.seed, config_echo: cfg.echo(), rows: Vec::new(), timing: Vec::new() };

    // fold index -> (context, user sessions)
    let mut prepared = Vec::new();
    for (train, test) in &folds {
        let (model, _, _) = train_mf(train, &cfg.hp)?;
        let ctx = FoldContext::build(model, train, cfg)?;
        let by_user = test.by_user();
        let mut users = Vec::new();
        for (uid, rated) in by_user.iter().enumerate() {
            if let Some(u) =
                build_user_session(uid, rated, test.types[uid], ctx.model.n_items(), cfg)
            {
                if !u.items.is_empty() {
                    users.push(u);
                }
            }
        }
        prepared.push((ctx, users));
    }

    for &strategy in &cfg.strategies {
        for (fold, (ctx, users)) in prepared.iter().enumerate() {
            report.rows.extend(fold_rows(ctx, users, strategy, fold, cfg)?);
        }
    }
    Ok(report)
}

/// Simulate every user of one fold under one strategy and aggregate
/// the per-question rows. Parallel over users; collect preserves user
/// order, so the aggregation is a deterministic ordered reduction.
pub fn fold_rows(
    ctx: &FoldContext,
    users: &[UserSession],
    strategy: Strategy,
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<Vec<MetricRow>, EvalError> {
    let sessions: Vec<(SessionTrace, Vec<CheckpointContribution>)> = users
        .par_iter()
        .map(|u| {
            let trace = simulate_user(ctx, u, strategy, cfg)?;
            let checkpoints = rmse_checkpoint(&trace, &ctx.model, &u.holdout, cfg)?;
            Ok((trace, checkpoints))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut rows = Vec::new();
    let max_q = sessions.iter().map(|(t, _)| t.records.len()).max().unwrap_or(0);
    for question in 1..=max_q {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let mut correct = 0usize;
        let mut sse = 0.0;
        let mut n_pairs = 0usize;
        for (trace, checkpoints) in &sessions {
            if trace.records.len() < question {
                continue;
            }
            let rec = &trace.records[question - 1];
            scores.push(rec.posterior_plus);
            labels.push(trace.true_type);
            correct += usize::from(rec.predicted == trace.true_type);
            for c in checkpoints {
                if c.question == question {
                    sse += c.sse;
                    n_pairs += c.n;
                }
            }
        }
        let n_users = labels.len();
        if n_users == 0 {
            continue;
        }
        let auc_value = auc(&scores, &labels).ok();
        let rmse = if n_pairs > 0 { Some((sse / n_pairs as f64).sqrt()) } else { None };
        rows.push(MetricRow {
            strategy: strategy.name(),
            fold,
            question,
            auc: auc_value,
            accuracy: correct as f64 / n_users as f64,
            rmse,
            n_users,
        });
    }
    Ok(rows)
}

/// Settings for the selection timing benchmark.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub d: usize,
    /// Item pool; must cover the largest asked-set plus the candidates.
    pub n_items: usize,
    /// Candidates scored per selection call.
    pub n_candidates: usize,
    pub a_sizes: Vec<usize>,
    /// Timed repetitions per row (after warmup).
    pub reps: usize,
    pub warmup: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            d: 20,
            n_items: 400,
            n_candidates: 200,
            a_sizes: vec![1, 20, 40, 60, 80, 100],
            reps: 30,
            warmup: 3,
            lambda: 100.0,
            seed: 1,
        }
    }
}

/// Time one `select_next_fbc` call (scoring every candidate) for both
/// cache modes at each asked-set size. Warmup calls are discarded; rows
/// report mean, 95% CI half-width, and median seconds per call.
pub fn bench_selection(cfg: &BenchConfig) -> Result<Vec<TimingRow>, EvalError> {
    if cfg.reps < 2 {
        return Err(EvalError::BadConfig("bench reps must be >= 2".into()));
    }
    let max_a = cfg.a_sizes.iter().copied().max().unwrap_or(0);
    if cfg.n_items < max_a + cfg.n_candidates {
        return Err(EvalError::BadConfig(
            "bench n_items must cover max a_size + n_candidates".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v = Array2::from_shape_fn((cfg.n_items, cfg.d), |_| rng.random::<f64>() * 2.0 - 1.0);
    let z_plus = Array1::from_shape_fn(cfg.n_items, |_| rng.random::<f64>() * 2.0 - 1.0);
    let z_minus = Array1::from_shape_fn(cfg.n_items, |_| rng.random::<f64>() * 2.0 - 1.0);
    let model = ItemModel {
        v,
        z_plus,
        z_minus,
        hp: HyperParams {
            d: cfg.d,
            classifier_lambda: cfg.lambda,
            ..HyperParams::default()
        },
        label_names: crate::dataset::LabelNames::new("+1", "-1"),
    };
    let answers: Vec<f64> = (0..max_a).map(|_| rng.random::<f64>() * 4.0 + 1.0).collect();

    let mut rows = Vec::new();
    for (mode, mode_name) in
        [(SelectionMode::Direct, "direct"), (SelectionMode::Incremental, "incremental")]
    {
        for &a_size in &cfg.a_sizes {
            // Asked items are 0..a_size; candidates follow them.
            let mut s = SessionState::new(&model, 0..a_size + cfg.n_candidates, mode)?;
            for j in 0..a_size {
                s.extend(&model, j, answers[j])?;
            }
            let mut samples = Vec::with_capacity(cfg.reps);
            let mut chosen = usize::MAX;
            for rep in 0..cfg.warmup + cfg.reps {
                let t0 = Instant::now();
                let j = select_next_fbc(&s, &model)?;
                let dt = t0.elapsed().as_secs_f64();
                if rep >= cfg.warmup {
                    samples.push(dt);
                    chosen = j;
                }
            }
            debug_assert!(chosen >= a_size);
            rows.push(TimingRow {
                mode: mode_name,
                a_size,
                mean_s: mean(&samples),
                ci95_s: ci95_half_width(&samples),
                median_s: median(&samples),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod auc_tests {
    use super::*;
    use UserType::{Minus, Plus};

    /// O(n^2) pairwise definition, ties worth one half.
    fn auc_pairwise(scores: &[f64], labels: &[UserType]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != Plus {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != Minus {
                    continue;
                }
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_hand_values() {
        assert!((auc(&[0.1, 0.9], &[Minus, Plus]).unwrap() - 1.0).abs() < 1e-15);
        assert!((auc(&[0.9, 0.1], &[Minus, Plus]).unwrap() - 0.0).abs() < 1e-15);
        // Positives scored 0.8 and 0.1 both lose to the negative at 0.9.
        assert!((auc(&[0.9, 0.8, 0.1], &[Minus, Plus, Plus]).unwrap() - 0.0).abs() < 1e-15);
        // One tie out of four pairs: (1 + 0.5 + 1 + 1) / 4.
        let a = auc(&[0.2, 0.5, 0.5, 0.9], &[Minus, Minus, Plus, Plus]).unwrap();
        assert!((a - 0.875).abs() < 1e-15);
        // All tied: chance level.
        assert!((auc(&[1.0, 1.0, 1.0], &[Minus, Plus, Plus]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for case in 0..50 {
            let n = 2 + case % 40;
            let mut scores: Vec<f64> =
                (0..n).map(|_| (rng.random::<f64>() * 8.0).round() / 8.0).collect();
            let mut labels: Vec<UserType> =
                (0..n).map(|_| if rng.random::<f64>() < 0.5 { Plus } else { Minus }).collect();
            labels[0] = Plus;
            labels[n - 1] = Minus;
            scores[0] = rng.random();
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_pairwise(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "case {case}: {fast} vs {slow}");
        }
    }

    #[test]
    fn auc_rejects_degenerate_input() {
        assert!(matches!(
            auc(&[0.1], &[Plus, Minus]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            auc(&[0.1, 0.2], &[Plus, Plus]),
            Err(EvalError::SingleClass { plus: 2, minus: 0 })
        ));
        assert!(matches!(
            auc(&[f64::NAN, 0.2], &[Plus, Minus]),
            Err(EvalError::BadScore { index: 0 })
        ));
    }
}
