//! Type-bias matrix factorization.
//!
//! Each rating is modeled as r_ij = u_i.v_j + z_{j,t_i} + noise, where the
//! per-item bias z is conditioned on the user's binary type. Profiles are
//! L2-regularized; the biases are not (the classifier depends only on the
//! bias gap, which is invariant to a global shift). Training is plain SGD
//! over shuffled ratings with a fixed seed, so a fixed seed reproduces the
//! model bit for bit.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::classifier;
use crate::dataset::{Dataset, DatasetError, LabelNames, UserType};
use crate::eval;

/// Training and inference hyperparameters.
///
/// `reg` regularizes both profile matrices during SGD;
/// `classifier_lambda` is the (separately tuned) ridge weight used by the
/// classifier and selection stages; `sigma_0` is the rating noise scale,
/// kept at 1 as the model gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub d: usize,
    pub reg: f64,
    pub epochs: usize,
    pub step_size: f64,
    pub classifier_lambda: f64,
    pub sigma_0: f64,
    pub prior_plus: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            d: 20,
            reg: 0.1,
            epochs: 20,
            step_size: 0.005,
            classifier_lambda: 100.0,
            sigma_0: 1.0,
            prior_plus: 0.5,
            seed: 1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), MfError> {
        let bad = |m: &str| Err(MfError::BadHyperParams(m.to_string()));
        if self.d == 0 {
            return bad("d must be >= 1");
        }
        if !(self.reg >= 0.0) {
            return bad("reg must be >= 0");
        }
        if !(self.step_size > 0.0) {
            return bad("step_size must be > 0");
        }
        if !(self.classifier_lambda > 0.0) {
            return bad("classifier_lambda must be > 0");
        }
        if !(self.sigma_0 > 0.0) {
            return bad("sigma_0 must be > 0");
        }
        if !(self.prior_plus > 0.0 && self.prior_plus < 1.0) {
            return bad("prior_plus must be in (0, 1)");
        }
        Ok(())
    }
}

/// Learned item-side parameters: profiles and the two bias columns.
#[derive(Debug, Clone)]
pub struct ItemModel {
    /// n_items x d item profiles.
    pub v: Array2<f64>,
    pub z_plus: Array1<f64>,
    pub z_minus: Array1<f64>,
    pub hp: HyperParams,
    pub label_names: LabelNames,
}

impl ItemModel {
    pub fn n_items(&self) -> usize {
        self.v.nrows()
    }

    pub fn d(&self) -> usize {
        self.v.ncols()
    }

    pub fn z(&self, j: usize, t: UserType) -> f64 {
        match t {
            UserType::Plus => self.z_plus[j],
            UserType::Minus => self.z_minus[j],
        }
    }

    /// Bias midpoint (z+ + z-)/2; subtracting it centers a rating.
    pub fn z_mid(&self, j: usize) -> f64 {
        0.5 * (self.z_plus[j] + self.z_minus[j])
    }

    /// Half the bias gap (z+ - z-)/2; the per-item type signal.
    pub fn delta(&self, j: usize) -> f64 {
        0.5 * (self.z_plus[j] - self.z_minus[j])
    }
}

/// Regularized squared-error objective after each epoch.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub objective: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum MfError {
    #[error("invalid hyperparameters: {0}")]
    BadHyperParams(String),
    #[error("empty training set")]
    EmptyTrain,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("objective {objective}: no test user has more than {holdout} ratings")]
    NoEvalUsers { objective: &'static str, holdout: usize },
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error("{0}")]
    Eval(String),
    #[error("{path}: {msg}")]
    ModelFormat { path: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Fit the model by seeded SGD. Returns the item model, the learned user
/// profiles (one row per train user), and the per-epoch objective trace.
pub fn train_mf(
    train: &Dataset,
    hp: &HyperParams,
) -> Result<(ItemModel, Array2<f64>, TrainTrace), MfError> {
    hp.validate()?;
    if train.ratings.is_empty() {
        return Err(MfError::EmptyTrain);
    }

    let n = train.n_users;
    let m = train.n_items;
    let d = hp.d;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    // Entrywise variance 0.1^2 / sqrt(d) keeps |u.v| ~ 0.01 at init so the
    // bias initialization dominates early predictions.
    let init = Normal::new(0.0, 0.1 / (d as f64).powf(0.25)).expect("valid init scale");
    let mut u = Array2::from_shape_fn((n, d), |_| init.sample(&mut rng));
    let mut v = Array2::from_shape_fn((m, d), |_| init.sample(&mut rng));

    // Bias init: per-item type-conditional mean rating, falling back to the
    // global type mean when the item has fewer than 3 ratings of that type.
    let mut sums = vec![[0.0f64; 2]; m];
    let mut counts = vec![[0usize; 2]; m];
    let mut gsum = [0.0f64; 2];
    let mut gcount = [0usize; 2];
    for r in &train.ratings {
        let t = usize::from(train.types[r.user] == UserType::Minus);
        sums[r.item][t] += r.rating;
        counts[r.item][t] += 1;
        gsum[t] += r.rating;
        gcount[t] += 1;
    }
    let gmean = [
        if gcount[0] > 0 { gsum[0] / gcount[0] as f64 } else { 0.0 },
        if gcount[1] > 0 { gsum[1] / gcount[1] as f64 } else { 0.0 },
    ];
    let mut z = Array2::<f64>::zeros((m, 2));
    for j in 0..m {
        for t in 0..2 {
            z[[j, t]] = if counts[j][t] >= 3 { sums[j][t] / counts[j][t] as f64 } else { gmean[t] };
        }
    }

    let eta = hp.step_size;
    let reg = hp.reg;
    let mut order: Vec<usize> = (0..train.ratings.len()).collect();
    let mut trace = Vec::with_capacity(hp.epochs);
    let mut u_old = vec![0.0f64; d];

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let r = &train.ratings[idx];
            let t = usize::from(train.types[r.user] == UserType::Minus);
            let (ui, vj) = (r.user, r.item);
            let urow = u.row(ui);
            let vrow = v.row(vj);
            let e = r.rating - urow.dot(&vrow) - z[[vj, t]];
            u_old.copy_from_slice(urow.to_slice().expect("row-major"));
            {
                let mut urow = u.row_mut(ui);
                for k in 0..d {
                    urow[k] += eta * (e * v[[vj, k]] - reg * u_old[k]);
                }
            }
            {
                let mut vrow = v.row_mut(vj);
                for k in 0..d {
                    vrow[k] += eta * (e * u_old[k] - reg * vrow[k]);
                }
            }
            z[[vj, t]] += eta * e;
        }

        let mut sq = 0.0;
        for r in &train.ratings {
            let t = usize::from(train.types[r.user] == UserType::Minus);
            let e = r.rating - u.row(r.user).dot(&v.row(r.item)) - z[[r.item, t]];
            sq += e * e;
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>() + v.iter().map(|x| x * x).sum::<f64>();
        let obj = sq + reg * norm;
        if !obj.is_finite() {
            return Err(MfError::Diverged { epoch });
        }
        trace.push(obj);
    }

    let model = ItemModel {
        v,
        z_plus: z.column(0).to_owned(),
        z_minus: z.column(1).to_owned(),
        hp: hp.clone(),
        label_names: train.label_names.clone(),
    };
    Ok((model, u, TrainTrace { objective: trace }))
}

/// What a hyperparameter search optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvObjective {
    /// Maximize mean test-fold AUC of full-history classification.
    Auc,
    /// Minimize mean test-fold RMSE of held-out rating prediction.
    Rmse,
}

/// Number of ratings held out per user by the RMSE protocol.
pub const RMSE_HOLDOUT: usize = 10;

const CV_HOLDOUT_SALT: u64 = 0xC5;

/// k-fold search over a hyperparameter grid. Folds are split once with the
/// first grid point's seed so every grid point sees identical folds; ties
/// keep the earliest grid position. Returns the winning point.
pub fn cross_validate(
    data: &Dataset,
    grid: &[HyperParams],
    k: usize,
    objective: CvObjective,
) -> Result<HyperParams, MfError> {
    let (best, _) = cross_validate_scored(data, grid, k, objective)?;
    Ok(grid[best].clone())
}

/// As `cross_validate`, also returning the mean score per grid point.
pub fn cross_validate_scored(
    data: &Dataset,
    grid: &[HyperParams],
    k: usize,
    objective: CvObjective,
) -> Result<(usize, Vec<f64>), MfError> {
    if grid.is_empty() {
        return Err(MfError::EmptyGrid);
    }
    for hp in grid {
        hp.validate()?;
    }
    let folds = crate::dataset::split_folds(data, k, grid[0].seed)?;
    let holdout_seed = grid[0].seed;

    let mut means = Vec::with_capacity(grid.len());
    for hp in grid {
        let mut fold_scores = Vec::with_capacity(k);
        for (train, test) in &folds {
            let (model, _, _) = train_mf(train, hp)?;
            let score = match objective {
                CvObjective::Auc => fold_auc(&model, test)?,
                CvObjective::Rmse => fold_rmse(&model, test, holdout_seed)?,
            };
            fold_scores.push(score);
        }
        means.push(fold_scores.iter().sum::<f64>() / k as f64);
    }

    let mut best = 0;
    for (i, &s) in means.iter().enumerate().skip(1) {
        let better = match objective {
            CvObjective::Auc => s > means[best],
            CvObjective::Rmse => s < means[best],
        };
        if better {
            best = i;
        }
    }
    Ok((best, means))
}

/// AUC of full-history classification over a test fold.
pub fn fold_auc(model: &ItemModel, test: &Dataset) -> Result<f64, MfError> {
    let mut scores = Vec::with_capacity(test.n_users);
    let mut labels = Vec::with_capacity(test.n_users);
    for (uid, items) in test.by_user().into_iter().enumerate() {
        let (ids, rs): (Vec<usize>, Vec<f64>) = items.into_iter().unzip();
        let q = classifier::Query::new(model, ids, rs)
            .map_err(|e| MfError::Eval(e.to_string()))?;
        scores.push(classifier::posterior(model, &q));
        labels.push(test.types[uid]);
    }
    eval::auc(&scores, &labels).map_err(|e| MfError::Eval(e.to_string()))
}

/// RMSE of the ridge-profile rating predictor over held-out ratings.
///
/// Per test user with more than RMSE_HOLDOUT ratings: hold out
/// RMSE_HOLDOUT ratings (seeded per user, independent of the grid point),
/// classify on the rest, fit the ridge profile, predict the held-out
/// ratings. RMSE pools the squared errors of all users' held-out pairs.
fn fold_rmse(model: &ItemModel, test: &Dataset, seed: u64) -> Result<f64, MfError> {
    let mut sq = Vec::new();
    for (uid, mut items) in test.by_user().into_iter().enumerate() {
        if items.len() <= RMSE_HOLDOUT {
            continue;
        }
        items.sort_by_key(|&(j, _)| j);
        let mut rng =
            ChaCha8Rng::seed_from_u64(crate::dataset::mix_seed(seed, CV_HOLDOUT_SALT, uid));
        items.shuffle(&mut rng);
        let (held, kept) = items.split_at(RMSE_HOLDOUT);
        let (ids, rs): (Vec<usize>, Vec<f64>) =
            kept.iter().copied().unzip();
        let q = classifier::Query::new(model, ids, rs)
            .map_err(|e| MfError::Eval(e.to_string()))?;
        let t_hat = classifier::classify(model, &q);
        let u_hat = classifier::ridge_profile(model, &q, t_hat);
        for &(j, r) in held {
            let e = predict_rating(model, u_hat.view(), j, t_hat) - r;
            sq.push(e * e);
        }
    }
    if sq.is_empty() {
        return Err(MfError::NoEvalUsers { objective: "rmse", holdout: RMSE_HOLDOUT });
    }
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

/// u.v_j + z_{j,t}.
pub fn predict_rating(model: &ItemModel, u: ArrayView1<f64>, j: usize, t: UserType) -> f64 {
    u.dot(&model.v.row(j)) + model.z(j, t)
}

const MODEL_MAGIC: &str = "AGENDA-MODEL v1";

/// Write the model in the versioned text format:
/// line 1 the magic, line 2 the header fields, then one tab-separated line
/// per item: item_id, z_plus, z_minus, v_0 .. v_{d-1}. Floats are printed
/// with full round-trip precision, so save/load is bit-exact.
pub fn save_model(model: &ItemModel, path: &Path) -> Result<(), MfError> {
    let io = |source| MfError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "{MODEL_MAGIC}")?;
        writeln!(
            w,
            "d={} lambda={} sigma0={} prior_plus={} n_items={}",
            model.d(),
            model.hp.classifier_lambda,
            model.hp.sigma_0,
            model.hp.prior_plus,
            model.n_items()
        )?;
        for j in 0..model.n_items() {
            write!(w, "{}\t{}\t{}", j, model.z_plus[j], model.z_minus[j])?;
            for k in 0..model.d() {
                write!(w, "\t{}", model.v[[j, k]])?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write().map_err(io)
}

/// Read a model written by `save_model`. Fields not stored in the format
/// (SGD settings, label names) come back as defaults.
pub fn load_model(path: &Path) -> Result<ItemModel, MfError> {
    let bad = |msg: String| MfError::ModelFormat { path: path.display().to_string(), msg };
    let file = std::fs::File::open(path)
        .map_err(|source| MfError::Io { path: path.display().to_string(), source })?;
    let mut lines = std::io::BufReader::new(file).lines();
    let mut next_line = |what: &str| -> Result<String, MfError> {
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(MfError::Io { path: path.display().to_string(), source: e }),
            None => Err(bad(format!("truncated file: missing {what}"))),
        }
    };

    let magic = next_line("magic line")?;
    if magic != MODEL_MAGIC {
        return Err(bad(format!("bad magic '{magic}', expected '{MODEL_MAGIC}'")));
    }
    let header = next_line("header line")?;
    let mut d = None;
    let mut lambda = None;
    let mut sigma0 = None;
    let mut prior_plus = None;
    let mut n_items = None;
    for tok in header.split(' ') {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header token '{tok}'")))?;
        let parse_f = || val.parse::<f64>().map_err(|_| bad(format!("bad value for {key}")));
        let parse_u = || val.parse::<usize>().map_err(|_| bad(format!("bad value for {key}")));
        match key {
            "d" => d = Some(parse_u()?),
            "lambda" => lambda = Some(parse_f()?),
            "sigma0" => sigma0 = Some(parse_f()?),
            "prior_plus" => prior_plus = Some(parse_f()?),
            "n_items" => n_items = Some(parse_u()?),
            _ => return Err(bad(format!("unknown header key '{key}'"))),
        }
    }
    let d = d.ok_or_else(|| bad("header missing d".into()))?;
    let n_items = n_items.ok_or_else(|| bad("header missing n_items".into()))?;
    let hp = HyperParams {
        d,
        classifier_lambda: lambda.ok_or_else(|| bad("header missing lambda".into()))?,
        sigma_0: sigma0.ok_or_else(|| bad("header missing sigma0".into()))?,
        prior_plus: prior_plus.ok_or_else(|| bad("header missing prior_plus".into()))?,
        ..HyperParams::default()
    };
    hp.validate()?;

    let mut v = Array2::<f64>::zeros((n_items, d));
    let mut z_plus = Array1::<f64>::zeros(n_items);
    let mut z_minus = Array1::<f64>::zeros(n_items);
    for j in 0..n_items {
        let line = next_line(&format!("item line {j}"))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 + d {
            return Err(bad(format!(
                "item line {j}: expected {} tab-separated fields for d={d}, found {}",
                3 + d,
                fields.len()
            )));
        }
        let id: usize =
            fields[0].parse().map_err(|_| bad(format!("item line {j}: bad item id")))?;
        if id != j {
            return Err(bad(format!("item line {j}: out-of-order item id {id}")));
        }
        let parse =
            |s: &str| s.parse::<f64>().map_err(|_| bad(format!("item line {j}: bad float '{s}'")));
        z_plus[j] = parse(fields[1])?;
        z_minus[j] = parse(fields[2])?;
        for k in 0..d {
            v[[j, k]] = parse(fields[3 + k])?;
        }
    }
    if let Some(Ok(extra)) = lines.next() {
        if !extra.is_empty() {
            return Err(bad(format!("trailing data after {n_items} items")));
        }
    }

    Ok(ItemModel { v, z_plus, z_minus, hp, label_names: LabelNames::new("+1", "-1") })
}
