//! Flat key-value configuration shared by every subcommand.
//!
//! The same key namespace is readable from a `key = value` text file
//! (`--config FILE`) and from command-line flags (`--key value`); flags
//! override file values, which override built-in defaults. Unknown keys
//! are rejected wherever they appear.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use agenda_core::dataset::Attribute;
use agenda_core::eval::Strategy;
use agenda_core::mf::{CvObjective, HyperParams};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key '{key}' in {origin}")]
    UnknownKey { key: String, origin: String },
    #[error("invalid value '{value}' for key '{key}': {msg}")]
    BadValue { key: String, value: String, msg: String },
    #[error("{path}:{line}: expected 'key = value'")]
    BadLine { path: String, line: usize },
    #[error("cannot read config file '{path}': {source}")]
    Io { path: String, source: std::io::Error },
    #[error("command '{command}' needs key '{key}' ({why})")]
    Missing { command: String, key: String, why: String },
}

/// Raw command-line overrides. Every value is accepted as a string and
/// funneled through the same parser as config-file entries, so both
/// sources share validation and error wording.
#[derive(Debug, Default, clap::Args)]
pub struct Args {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the effective configuration before running.
    #[arg(long)]
    pub print_config: bool,

    /// Output directory for artifacts and the manifest.
    #[arg(long)]
    pub out: Option<String>,
    /// Worker thread cap for parallel simulation (0 = automatic).
    #[arg(long)]
    pub jobs: Option<String>,
    /// Base RNG seed.
    #[arg(long)]
    pub seed: Option<String>,
    /// Comma-separated seeds for `simulate` (defaults to `seed`).
    #[arg(long)]
    pub seeds: Option<String>,

    /// Input layout for `ingest`: movielens | csv.
    #[arg(long)]
    pub format: Option<String>,
    /// Ratings file (movielens .dat or labeled CSV).
    #[arg(long)]
    pub ratings: Option<String>,
    /// MovieLens users file (demographics).
    #[arg(long)]
    pub users: Option<String>,
    /// MovieLens label source: gender | age.
    #[arg(long)]
    pub attribute: Option<String>,
    /// CSV column holding the user id.
    #[arg(long)]
    pub user_col: Option<String>,
    /// CSV column holding the item id.
    #[arg(long)]
    pub item_col: Option<String>,
    /// CSV column holding the rating.
    #[arg(long)]
    pub rating_col: Option<String>,
    /// CSV column holding the type label.
    #[arg(long)]
    pub type_col: Option<String>,
    /// Label string mapped to type +1.
    #[arg(long)]
    pub plus_label: Option<String>,
    /// Label string mapped to type -1.
    #[arg(long)]
    pub minus_label: Option<String>,
    /// Separate CSV with user labels (same user/type columns).
    #[arg(long)]
    pub labels: Option<String>,
    /// Drop users with fewer ratings than this.
    #[arg(long)]
    pub min_user_ratings: Option<String>,
    /// Drop items with fewer ratings than this.
    #[arg(long)]
    pub min_item_ratings: Option<String>,

    /// Dataset snapshot consumed by train/cv/simulate.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Where `train` writes the model.
    #[arg(long)]
    pub model_out: Option<String>,
    /// Trained model for fixed-model `simulate` runs.
    #[arg(long)]
    pub model: Option<String>,

    /// Latent factor dimension.
    #[arg(long)]
    pub d: Option<String>,
    /// Factorization L2 regularization weight.
    #[arg(long)]
    pub reg: Option<String>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<String>,
    /// SGD step size.
    #[arg(long)]
    pub step: Option<String>,
    /// Classifier ridge weight.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Rating noise scale used by the classifier.
    #[arg(long)]
    pub sigma0: Option<String>,
    /// Prior probability of type +1.
    #[arg(long)]
    pub prior_plus: Option<String>,

    /// Cross-validation fold count.
    #[arg(long)]
    pub folds: Option<String>,
    /// Hyperparameter search objective: auc | rmse.
    #[arg(long)]
    pub objective: Option<String>,
    /// Comma-separated factor dimensions to search.
    #[arg(long)]
    pub d_grid: Option<String>,
    /// Comma-separated regularization weights to search.
    #[arg(long)]
    pub reg_grid: Option<String>,
    /// Comma-separated ridge weights to search.
    #[arg(long)]
    pub lambda_grid: Option<String>,

    /// Comma-separated strategies: random, entropy, maxgap, fbc,
    /// incfbc, pointest-fbc, pointest-logistic.
    #[arg(long)]
    pub strategies: Option<String>,
    /// Maximum questions per session.
    #[arg(long)]
    pub budget: Option<String>,
    /// Confidence stopping threshold.
    #[arg(long)]
    pub tau: Option<String>,
    /// Held-out items per user for rating prediction.
    #[arg(long)]
    pub holdout: Option<String>,
    /// Questions between rating-prediction checkpoints.
    #[arg(long)]
    pub stride: Option<String>,
    /// Logistic baseline L2 weight.
    #[arg(long)]
    pub logistic_l2: Option<String>,
    /// Logistic baseline epochs.
    #[arg(long)]
    pub logistic_epochs: Option<String>,
    /// Logistic baseline step size.
    #[arg(long)]
    pub logistic_step: Option<String>,

    /// Factor dimension for `bench`.
    #[arg(long)]
    pub bench_d: Option<String>,
    /// Item pool size for `bench`.
    #[arg(long)]
    pub bench_items: Option<String>,
    /// Candidates scored per selection in `bench`.
    #[arg(long)]
    pub bench_candidates: Option<String>,
    /// Comma-separated answered-question counts to time.
    #[arg(long)]
    pub a_sizes: Option<String>,
    /// Timed repetitions per benchmark row.
    #[arg(long)]
    pub reps: Option<String>,
    /// Discarded warmup repetitions per benchmark row.
    #[arg(long)]
    pub warmup: Option<String>,
    /// Randomized cases per `selftest` suite.
    #[arg(long)]
    pub selftest_cases: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Movielens,
    Csv,
}

/// Fully-resolved configuration: defaults, then file, then flags.
#[derive(Debug, Clone)]
pub struct Config {
    pub out: PathBuf,
    pub jobs: usize,
    pub seed: u64,
    pub seeds: Option<Vec<u64>>,

    pub format: Option<DataFormat>,
    pub ratings: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub attribute: Attribute,
    pub user_col: String,
    pub item_col: String,
    pub rating_col: String,
    pub type_col: String,
    pub plus_label: String,
    pub minus_label: String,
    pub labels: Option<PathBuf>,
    pub min_user_ratings: usize,
    pub min_item_ratings: usize,

    pub dataset: Option<PathBuf>,
    pub model_out: Option<PathBuf>,
    pub model: Option<PathBuf>,

    pub d: usize,
    pub reg: f64,
    pub epochs: usize,
    pub step: f64,
    pub lambda: f64,
    pub sigma0: f64,
    pub prior_plus: f64,

    pub folds: usize,
    pub objective: CvObjective,
    pub d_grid: Option<Vec<usize>>,
    pub reg_grid: Option<Vec<f64>>,
    pub lambda_grid: Option<Vec<f64>>,

    pub strategies: Vec<Strategy>,
    pub budget: usize,
    pub tau: f64,
    pub holdout: usize,
    pub stride: usize,
    pub logistic_l2: f64,
    pub logistic_epochs: usize,
    pub logistic_step: f64,

    pub bench_d: usize,
    pub bench_items: usize,
    pub bench_candidates: usize,
    pub a_sizes: Vec<usize>,
    pub reps: usize,
    pub warmup: usize,
    pub selftest_cases: usize,
}

impl Default for Config {
    fn default() -> Self {
        let hp = HyperParams::default();
        Config {
            out: PathBuf::from("out"),
            jobs: 0,
            seed: hp.seed,
            seeds: None,
            format: None,
            ratings: None,
            users: None,
            attribute: Attribute::Gender,
            user_col: "user".into(),
            item_col: "item".into(),
            rating_col: "rating".into(),
            type_col: "type".into(),
            plus_label: "+1".into(),
            minus_label: "-1".into(),
            labels: None,
            min_user_ratings: 20,
            min_item_ratings: 20,
            dataset: None,
            model_out: None,
            model: None,
            d: hp.d,
            reg: hp.reg,
            epochs: hp.epochs,
            step: hp.step_size,
            lambda: hp.classifier_lambda,
            sigma0: hp.sigma_0,
            prior_plus: hp.prior_plus,
            folds: 10,
            objective: CvObjective::Auc,
            d_grid: None,
            reg_grid: None,
            lambda_grid: None,
            strategies: vec![Strategy::IncFbc, Strategy::Random],
            budget: 100,
            tau: 0.99,
            holdout: 10,
            stride: 10,
            logistic_l2: 1e-4,
            logistic_epochs: 100,
            logistic_step: 0.05,
            bench_d: 20,
            bench_items: 400,
            bench_candidates: 200,
            a_sizes: vec![1, 20, 40, 60, 80, 100],
            reps: 30,
            warmup: 3,
            selftest_cases: 60,
        }
    }
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        msg: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let items: Result<Vec<T>, _> =
        value.split(',').map(|part| parse_scalar(key, part)).collect();
    let items = items?;
    if items.is_empty() {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            msg: "empty list".into(),
        });
    }
    Ok(items)
}

fn bad(key: &str, value: &str, msg: &str) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), msg: msg.into() }
}

impl Config {
    /// Apply one key-value pair from either source. `origin` names the
    /// source for error messages.
    fn apply(&mut self, raw_key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let key = raw_key.trim().to_ascii_lowercase().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "out" => self.out = v.into(),
            "jobs" => self.jobs = parse_scalar(&key, v)?,
            "seed" => self.seed = parse_scalar(&key, v)?,
            "seeds" => self.seeds = Some(parse_list(&key, v)?),
            "format" => {
                self.format = Some(match v {
                    "movielens" => DataFormat::Movielens,
                    "csv" => DataFormat::Csv,
                    _ => return Err(bad(&key, v, "expected movielens or csv")),
                })
            }
            "ratings" => self.ratings = Some(v.into()),
            "users" => self.users = Some(v.into()),
            "attribute" => {
                self.attribute = match v {
                    "gender" => Attribute::Gender,
                    "age" => Attribute::Age,
                    _ => return Err(bad(&key, v, "expected gender or age")),
                }
            }
            "user-col" => self.user_col = v.into(),
            "item-col" => self.item_col = v.into(),
            "rating-col" => self.rating_col = v.into(),
            "type-col" => self.type_col = v.into(),
            "plus-label" => self.plus_label = v.into(),
            "minus-label" => self.minus_label = v.into(),
            "labels" => self.labels = Some(v.into()),
            "min-user-ratings" => self.min_user_ratings = parse_scalar(&key, v)?,
            "min-item-ratings" => self.min_item_ratings = parse_scalar(&key, v)?,
            "dataset" => self.dataset = Some(v.into()),
            "model-out" => self.model_out = Some(v.into()),
            "model" => self.model = Some(v.into()),
            "d" => self.d = parse_scalar(&key, v)?,
            "reg" => self.reg = parse_scalar(&key, v)?,
            "epochs" => self.epochs = parse_scalar(&key, v)?,
            "step" => self.step = parse_scalar(&key, v)?,
            "lambda" => self.lambda = parse_scalar(&key, v)?,
            "sigma0" => self.sigma0 = parse_scalar(&key, v)?,
            "prior-plus" => self.prior_plus = parse_scalar(&key, v)?,
            "folds" => self.folds = parse_scalar(&key, v)?,
            "objective" => {
                self.objective = match v {
                    "auc" => CvObjective::Auc,
                    "rmse" => CvObjective::Rmse,
                    _ => return Err(bad(&key, v, "expected auc or rmse")),
                }
            }
            "d-grid" => self.d_grid = Some(parse_list(&key, v)?),
            "reg-grid" => self.reg_grid = Some(parse_list(&key, v)?),
            "lambda-grid" => self.lambda_grid = Some(parse_list(&key, v)?),
            "strategies" => {
                let mut parsed = Vec::new();
                for name in v.split(',') {
                    let name = name.trim();
                    parsed.push(Strategy::parse(name).ok_or_else(|| {
                        bad(&key, name, "expected random, entropy, maxgap, fbc, incfbc, pointest-fbc, or pointest-logistic")
                    })?);
                }
                if parsed.is_empty() {
                    return Err(bad(&key, v, "empty list"));
                }
                self.strategies = parsed;
            }
            "budget" => self.budget = parse_scalar(&key, v)?,
            "tau" => self.tau = parse_scalar(&key, v)?,
            "holdout" => self.holdout = parse_scalar(&key, v)?,
            "stride" => self.stride = parse_scalar(&key, v)?,
            "logistic-l2" => self.logistic_l2 = parse_scalar(&key, v)?,
            "logistic-epochs" => self.logistic_epochs = parse_scalar(&key, v)?,
            "logistic-step" => self.logistic_step = parse_scalar(&key, v)?,
            "bench-d" => self.bench_d = parse_scalar(&key, v)?,
            "bench-items" => self.bench_items = parse_scalar(&key, v)?,
            "bench-candidates" => self.bench_candidates = parse_scalar(&key, v)?,
            "a-sizes" => self.a_sizes = parse_list(&key, v)?,
            "reps" => self.reps = parse_scalar(&key, v)?,
            "warmup" => self.warmup = parse_scalar(&key, v)?,
            "selftest-cases" => self.selftest_cases = parse_scalar(&key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: raw_key.trim().to_string(),
                    origin: origin.to_string(),
                })
            }
        }
        Ok(())
    }

    fn apply_file(&mut self, path: &PathBuf) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let origin = path.display().to_string();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::BadLine { path: origin.clone(), line: idx + 1 })?;
            self.apply(key, value, &origin)?;
        }
        Ok(())
    }

    fn apply_flags(&mut self, args: &Args) -> Result<(), ConfigError> {
        let pairs: [(&str, &Option<String>); 47] = [
            ("out", &args.out),
            ("jobs", &args.jobs),
            ("seed", &args.seed),
            ("seeds", &args.seeds),
            ("format", &args.format),
            ("ratings", &args.ratings),
            ("users", &args.users),
            ("attribute", &args.attribute),
            ("user-col", &args.user_col),
            ("item-col", &args.item_col),
            ("rating-col", &args.rating_col),
            ("type-col", &args.type_col),
            ("plus-label", &args.plus_label),
            ("minus-label", &args.minus_label),
            ("labels", &args.labels),
            ("min-user-ratings", &args.min_user_ratings),
            ("min-item-ratings", &args.min_item_ratings),
            ("dataset", &args.dataset),
            ("model-out", &args.model_out),
            ("model", &args.model),
            ("d", &args.d),
            ("reg", &args.reg),
            ("epochs", &args.epochs),
            ("step", &args.step),
            ("lambda", &args.lambda),
            ("sigma0", &args.sigma0),
            ("prior-plus", &args.prior_plus),
            ("folds", &args.folds),
            ("objective", &args.objective),
            ("d-grid", &args.d_grid),
            ("reg-grid", &args.reg_grid),
            ("lambda-grid", &args.lambda_grid),
            ("strategies", &args.strategies),
            ("budget", &args.budget),
            ("tau", &args.tau),
            ("holdout", &args.holdout),
            ("stride", &args.stride),
            ("logistic-l2", &args.logistic_l2),
            ("logistic-epochs", &args.logistic_epochs),
            ("logistic-step", &args.logistic_step),
            ("bench-d", &args.bench_d),
            ("bench-items", &args.bench_items),
            ("bench-candidates", &args.bench_candidates),
            ("a-sizes", &args.a_sizes),
            ("reps", &args.reps),
            ("warmup", &args.warmup),
            ("selftest-cases", &args.selftest_cases),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                self.apply(key, v, "command line")?;
            }
        }
        Ok(())
    }

    pub fn resolve(args: &Args) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        if let Some(path) = &args.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(args)?;
        Ok(cfg)
    }

    /// Per-command required keys; checked before execution so a missing
    /// key is a usage error, not a runtime failure.
    pub fn require_for(&self, command: &str) -> Result<(), ConfigError> {
        let missing = |key: &str, why: &str| {
            Err(ConfigError::Missing {
                command: command.to_string(),
                key: key.to_string(),
                why: why.to_string(),
            })
        };
        if command == "ingest" {
            match self.format {
                None => return missing("format", "choose movielens or csv"),
                Some(DataFormat::Movielens) => {
                    if self.ratings.is_none() {
                        return missing("ratings", "path to the ratings file");
                    }
                    if self.users.is_none() {
                        return missing("users", "path to the demographics file");
                    }
                }
                Some(DataFormat::Csv) => {
                    if self.ratings.is_none() {
                        return missing("ratings", "path to the labeled CSV");
                    }
                }
            }
        }
        Ok(())
    }

    /// Effective seeds for `simulate`.
    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.seed])
    }

    pub fn hyperparams(&self, seed: u64) -> HyperParams {
        HyperParams {
            d: self.d,
            reg: self.reg,
            epochs: self.epochs,
            step_size: self.step,
            classifier_lambda: self.lambda,
            sigma_0: self.sigma0,
            prior_plus: self.prior_plus,
            seed,
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("dataset.csv"))
    }

    pub fn model_out_path(&self) -> PathBuf {
        self.model_out.clone().unwrap_or_else(|| self.out.join("model.bin"))
    }

    /// The effective configuration, one `key = value` per line.
    pub fn echo(&self) -> String {
        fn opt_path(p: &Option<PathBuf>) -> String {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "(unset)".into())
        }
        fn list<T: std::fmt::Display>(xs: &[T]) -> String {
            xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        fn opt_list<T: std::fmt::Display>(xs: &Option<Vec<T>>) -> String {
            xs.as_ref().map(|xs| list(xs)).unwrap_or_else(|| "(unset)".into())
        }
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv(&mut s, "out", self.out.display().to_string());
        kv(&mut s, "jobs", self.jobs.to_string());
        kv(&mut s, "seed", self.seed.to_string());
        kv(&mut s, "seeds", list(&self.seed_list()));
        let format = match self.format {
            None => "(unset)",
            Some(DataFormat::Movielens) => "movielens",
            Some(DataFormat::Csv) => "csv",
        };
        kv(&mut s, "format", format.to_string());
        kv(&mut s, "ratings", opt_path(&self.ratings));
        kv(&mut s, "users", opt_path(&self.users));
        let attribute = match self.attribute {
            Attribute::Gender => "gender",
            Attribute::Age => "age",
        };
        kv(&mut s, "attribute", attribute.to_string());
        kv(&mut s, "user-col", self.user_col.clone());
        kv(&mut s, "item-col", self.item_col.clone());
        kv(&mut s, "rating-col", self.rating_col.clone());
        kv(&mut s, "type-col", self.type_col.clone());
        kv(&mut s, "plus-label", self.plus_label.clone());
        kv(&mut s, "minus-label", self.minus_label.clone());
        kv(&mut s, "labels", opt_path(&self.labels));
        kv(&mut s, "min-user-ratings", self.min_user_ratings.to_string());
        kv(&mut s, "min-item-ratings", self.min_item_ratings.to_string());
        kv(&mut s, "dataset", self.dataset_path().display().to_string());
        kv(&mut s, "model-out", self.model_out_path().display().to_string());
        kv(&mut s, "model", opt_path(&self.model));
        kv(&mut s, "d", self.d.to_string());
        kv(&mut s, "reg", self.reg.to_string());
        kv(&mut s, "epochs", self.epochs.to_string());
        kv(&mut s, "step", self.step.to_string());
        kv(&mut s, "lambda", self.lambda.to_string());
        kv(&mut s, "sigma0", self.sigma0.to_string());
        kv(&mut s, "prior-plus", self.prior_plus.to_string());
        kv(&mut s, "folds", self.folds.to_string());
        let objective = match self.objective {
            CvObjective::Auc => "auc",
            CvObjective::Rmse => "rmse",
        };
        kv(&mut s, "objective", objective.to_string());
        kv(&mut s, "d-grid", opt_list(&self.d_grid));
        kv(&mut s, "reg-grid", opt_list(&self.reg_grid));
        kv(&mut s, "lambda-grid", opt_list(&self.lambda_grid));
        let strategies: Vec<&str> = self.strategies.iter().map(|s| s.name()).collect();
        kv(&mut s, "strategies", strategies.join(","));
        kv(&mut s, "budget", self.budget.to_string());
        kv(&mut s, "tau", self.tau.to_string());
        kv(&mut s, "holdout", self.holdout.to_string());
        kv(&mut s, "stride", self.stride.to_string());
        kv(&mut s, "logistic-l2", self.logistic_l2.to_string());
        kv(&mut s, "logistic-epochs", self.logistic_epochs.to_string());
        kv(&mut s, "logistic-step", self.logistic_step.to_string());
        kv(&mut s, "bench-d", self.bench_d.to_string());
        kv(&mut s, "bench-items", self.bench_items.to_string());
        kv(&mut s, "bench-candidates", self.bench_candidates.to_string());
        kv(&mut s, "a-sizes", list(&self.a_sizes));
        kv(&mut s, "reps", self.reps.to_string());
        kv(&mut s, "warmup", self.warmup.to_string());
        kv(&mut s, "selftest-cases", self.selftest_cases.to_string());
        s
    }
}
