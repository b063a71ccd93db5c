//! Rating data ingestion: labeled rating triples from MovieLens-style
//! files, generic labeled CSV, or a synthetic generator with known ground
//! truth.
//!
//! After ingestion user ids and item ids are dense and 0-based, every
//! user carries a binary type label, and each (user, item) pair appears
//! at most once. All downstream code relies on those invariants.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::mf::{HyperParams, ItemModel};

/// The private binary attribute being inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UserType {
    Plus,
    Minus,
}

impl UserType {
    /// +1.0 or -1.0.
    pub fn sign(self) -> f64 {
        match self {
            UserType::Plus => 1.0,
            UserType::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> UserType {
        match self {
            UserType::Plus => UserType::Minus,
            UserType::Minus => UserType::Plus,
        }
    }
}

impl fmt::Display for UserType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UserType::Plus => "+1",
            UserType::Minus => "-1",
        })
    }
}

/// Human-readable names of the two classes, e.g. ("F", "M").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelNames {
    pub plus: String,
    pub minus: String,
}

impl LabelNames {
    pub fn new(plus: &str, minus: &str) -> Self {
        LabelNames { plus: plus.to_string(), minus: minus.to_string() }
    }

    pub fn of(&self, t: UserType) -> &str {
        match t {
            UserType::Plus => &self.plus,
            UserType::Minus => &self.minus,
        }
    }
}

/// One observed rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// A labeled rating dataset with dense 0-based ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ratings: Vec<RatingTriple>,
    /// Type label per user id.
    pub types: Vec<UserType>,
    pub n_users: usize,
    pub n_items: usize,
    pub label_names: LabelNames,
}

impl Dataset {
    /// Ratings grouped by user, in file order within each user.
    pub fn by_user(&self) -> Vec<Vec<(usize, f64)>> {
        let mut per_user = vec![Vec::new(); self.n_users];
        for r in &self.ratings {
            per_user[r.user].push((r.item, r.rating));
        }
        per_user
    }

    /// Number of ratings per user.
    pub fn user_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n_users];
        for r in &self.ratings {
            c[r.user] += 1;
        }
        c
    }

    /// Number of ratings per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n_items];
        for r in &self.ratings {
            c[r.item] += 1;
        }
        c
    }
}

/// Which MovieLens demographic column becomes the binary type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attribute {
    /// F -> +1, M -> -1.
    Gender,
    /// Age codes 18/25/35 -> +1 ("young"), 45/50/56 -> -1 ("adult");
    /// code 1 (under 18) is dropped along with its ratings.
    Age,
}

/// Column-name schema for generic labeled rating CSV files.
///
/// When `labels_path` is set, the type column lives in that separate file
/// (keyed by the same user column name); otherwise each rating row carries
/// the user's label in `type_col`.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub user_col: String,
    pub item_col: String,
    pub rating_col: String,
    pub type_col: String,
    pub plus_label: String,
    pub minus_label: String,
    pub labels_path: Option<PathBuf>,
}

/// Ground-truth generator settings.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub d: usize,
    /// Std dev of user profile entries (> 0).
    pub sigma_u: f64,
    /// Std dev of item profile entries (> 0).
    pub sigma_v: f64,
    /// Rating noise std dev (>= 0; 0 gives exact factor ratings).
    pub sigma_0: f64,
    /// Std dev of both the per-item bias gap and the bias midpoint (>= 0).
    pub bias_scale: f64,
    /// Probability each (user, item) pair is observed, in (0, 1].
    pub density: f64,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: malformed line: {msg}")]
    Malformed { path: String, line: u64, msg: String },
    #[error("{path}: missing column '{col}' in header")]
    MissingColumn { path: String, col: String },
    #[error("duplicate rating for user '{user}', item '{item}'")]
    DuplicateRating { user: String, item: String },
    #[error("user '{user}' appears in ratings but has no type label")]
    MissingType { user: String },
    #[error("user '{user}' has conflicting type labels")]
    ConflictingType { user: String },
    #[error("{path}:{line}: type label '{label}' is not '{plus}' or '{minus}'")]
    UnknownLabel { path: String, line: u64, label: String, plus: String, minus: String },
    #[error("filter removed all data")]
    FilterEmptied,
    #[error("cannot split {n_users} users into {k} folds")]
    BadFoldCount { n_users: usize, k: usize },
    #[error("invalid synthetic config: {0}")]
    BadSyntheticConfig(String),
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), source }
}

/// Parse MovieLens-1M-format files ("::"-separated ratings and users).
///
/// Ratings lines are `UserID::MovieID::Rating::Timestamp`; user lines are
/// `UserID::Gender::Age::Occupation::Zip`. Ids are re-indexed densely in
/// ascending numeric order of the original ids.
pub fn parse_movielens(
    ratings_path: &Path,
    users_path: &Path,
    attr: Attribute,
) -> Result<Dataset, DatasetError> {
    let label_names = match attr {
        Attribute::Gender => LabelNames::new("F", "M"),
        Attribute::Age => LabelNames::new("young", "adult"),
    };

    // Original user id -> Some(type), or None when the attribute drops the user.
    let mut user_types: HashMap<u64, Option<UserType>> = HashMap::new();
    let file = std::fs::File::open(users_path).map_err(|e| io_err(users_path, e))?;
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(users_path, e))?;
        let lineno = idx as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        let malformed = |msg: &str| DatasetError::Malformed {
            path: users_path.display().to_string(),
            line: lineno,
            msg: msg.to_string(),
        };
        if fields.len() != 5 {
            return Err(malformed(&format!("expected 5 '::' fields, found {}", fields.len())));
        }
        let uid: u64 = fields[0].parse().map_err(|_| malformed("bad user id"))?;
        let t = match attr {
            Attribute::Gender => match fields[1] {
                "F" => Some(UserType::Plus),
                "M" => Some(UserType::Minus),
                g => return Err(malformed(&format!("bad gender '{g}'"))),
            },
            Attribute::Age => match fields[2] {
                "18" | "25" | "35" => Some(UserType::Plus),
                "45" | "50" | "56" => Some(UserType::Minus),
                "1" => None,
                a => return Err(malformed(&format!("bad age code '{a}'"))),
            },
        };
        user_types.insert(uid, t);
    }

    // Raw triples keyed by original ids.
    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    let mut seen: HashSet<(u64, u64)> = HashSet::new();
    let file = std::fs::File::open(ratings_path).map_err(|e| io_err(ratings_path, e))?;
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(ratings_path, e))?;
        let lineno = idx as u64 + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        let malformed = |msg: &str| DatasetError::Malformed {
            path: ratings_path.display().to_string(),
            line: lineno,
            msg: msg.to_string(),
        };
        if fields.len() != 4 {
            return Err(malformed(&format!("expected 4 '::' fields, found {}", fields.len())));
        }
        let uid: u64 = fields[0].parse().map_err(|_| malformed("bad user id"))?;
        let iid: u64 = fields[1].parse().map_err(|_| malformed("bad item id"))?;
        let rating: f64 = fields[2].parse().map_err(|_| malformed("bad rating"))?;
        if !rating.is_finite() {
            return Err(malformed("non-finite rating"));
        }
        match user_types.get(&uid) {
            None => return Err(DatasetError::MissingType { user: uid.to_string() }),
            Some(None) => continue, // user dropped by the attribute mapping
            Some(Some(_)) => {}
        }
        if !seen.insert((uid, iid)) {
            return Err(DatasetError::DuplicateRating {
                user: uid.to_string(),
                item: iid.to_string(),
            });
        }
        raw.push((uid, iid, rating));
    }

    // Dense re-index in ascending original-id order.
    let mut uids: Vec<u64> = raw.iter().map(|r| r.0).collect::<HashSet<_>>().into_iter().collect();
    uids.sort_unstable();
    let mut iids: Vec<u64> = raw.iter().map(|r| r.1).collect::<HashSet<_>>().into_iter().collect();
    iids.sort_unstable();
    let umap: HashMap<u64, usize> = uids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let imap: HashMap<u64, usize> = iids.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let ratings = raw
        .iter()
        .map(|&(u, i, r)| RatingTriple { user: umap[&u], item: imap[&i], rating: r })
        .collect();
    let types = uids
        .iter()
        .map(|u| user_types[u].expect("dropped users were filtered above"))
        .collect();

    Ok(Dataset { ratings, types, n_users: uids.len(), n_items: iids.len(), label_names })
}

/// Parse a generic labeled rating CSV per the column-name schema.
///
/// Original ids may be arbitrary strings; they are re-indexed densely in
/// first-appearance order.
pub fn parse_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset, DatasetError> {
    let label_names = LabelNames::new(&schema.plus_label, &schema.minus_label);

    let parse_label = |raw: &str, path: &Path, line: u64| -> Result<UserType, DatasetError> {
        if raw == schema.plus_label {
            Ok(UserType::Plus)
        } else if raw == schema.minus_label {
            Ok(UserType::Minus)
        } else {
            Err(DatasetError::UnknownLabel {
                path: path.display().to_string(),
                line,
                label: raw.to_string(),
                plus: schema.plus_label.clone(),
                minus: schema.minus_label.clone(),
            })
        }
    };

    // Labels from the separate file, when configured.
    let mut labels: HashMap<String, UserType> = HashMap::new();
    if let Some(lp) = &schema.labels_path {
        let mut rdr = open_csv(lp)?;
        let ucol = col_index(&rdr.headers().map_err(|e| csv_err(lp, e))?.clone(), &schema.user_col, lp)?;
        let tcol = col_index(&rdr.headers().map_err(|e| csv_err(lp, e))?.clone(), &schema.type_col, lp)?;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(lp, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let user = field(&rec, ucol, lp, line)?.to_string();
            let t = parse_label(field(&rec, tcol, lp, line)?, lp, line)?;
            match labels.insert(user.clone(), t) {
                Some(prev) if prev != t => {
                    return Err(DatasetError::ConflictingType { user });
                }
                _ => {}
            }
        }
    }

    let mut rdr = open_csv(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let ucol = col_index(&headers, &schema.user_col, path)?;
    let icol = col_index(&headers, &schema.item_col, path)?;
    let rcol = col_index(&headers, &schema.rating_col, path)?;
    let tcol = if schema.labels_path.is_none() {
        Some(col_index(&headers, &schema.type_col, path)?)
    } else {
        None
    };

    let mut umap: HashMap<String, usize> = HashMap::new();
    let mut uorder: Vec<String> = Vec::new();
    let mut imap: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut types_by_user: Vec<Option<UserType>> = Vec::new();
    let mut ratings: Vec<RatingTriple> = Vec::new();

    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let user_raw = field(&rec, ucol, path, line)?.to_string();
        let item_raw = field(&rec, icol, path, line)?.to_string();
        let rating: f64 = field(&rec, rcol, path, line)?.parse().map_err(|_| {
            DatasetError::Malformed {
                path: path.display().to_string(),
                line,
                msg: format!("bad rating '{}'", &rec[rcol]),
            }
        })?;
        if !rating.is_finite() {
            return Err(DatasetError::Malformed {
                path: path.display().to_string(),
                line,
                msg: "non-finite rating".to_string(),
            });
        }

        let n_seen = umap.len();
        let user = *umap.entry(user_raw.clone()).or_insert_with(|| {
            uorder.push(user_raw.clone());
            types_by_user.push(None);
            n_seen
        });
        let n_seen = imap.len();
        let item = *imap.entry(item_raw.clone()).or_insert(n_seen);

        let t = match tcol {
            Some(c) => parse_label(field(&rec, c, path, line)?, path, line)?,
            None => *labels
                .get(&user_raw)
                .ok_or_else(|| DatasetError::MissingType { user: user_raw.clone() })?,
        };
        match types_by_user[user] {
            None => types_by_user[user] = Some(t),
            Some(prev) if prev != t => {
                return Err(DatasetError::ConflictingType { user: user_raw });
            }
            Some(_) => {}
        }

        if !seen.insert((user, item)) {
            return Err(DatasetError::DuplicateRating { user: user_raw, item: item_raw });
        }
        ratings.push(RatingTriple { user, item, rating });
    }

    let types: Vec<UserType> =
        types_by_user.into_iter().map(|t| t.expect("set on first row of each user")).collect();
    Ok(Dataset {
        ratings,
        n_users: types.len(),
        n_items: imap.len(),
        types,
        label_names,
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> DatasetError {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    DatasetError::Malformed { path: path.display().to_string(), line, msg: e.to_string() }
}

fn col_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, DatasetError> {
    headers.iter().position(|h| h == name).ok_or_else(|| DatasetError::MissingColumn {
        path: path.display().to_string(),
        col: name.to_string(),
    })
}

fn field<'r>(
    rec: &'r csv::StringRecord,
    idx: usize,
    path: &Path,
    line: u64,
) -> Result<&'r str, DatasetError> {
    rec.get(idx).ok_or_else(|| DatasetError::Malformed {
        path: path.display().to_string(),
        line,
        msg: format!("missing field {idx}"),
    })
}

/// Drop users with fewer than `min_user_ratings` ratings and items with
/// fewer than `min_item_ratings`, repeating until a fixed point (dropping
/// an item can push a user below threshold and vice versa), then re-index
/// densely preserving relative order.
pub fn filter_dataset(
    d: &Dataset,
    min_user_ratings: usize,
    min_item_ratings: usize,
) -> Result<Dataset, DatasetError> {
    let mut keep: Vec<RatingTriple> = d.ratings.clone();
    loop {
        let mut ucnt = vec![0usize; d.n_users];
        let mut icnt = vec![0usize; d.n_items];
        for r in &keep {
            ucnt[r.user] += 1;
            icnt[r.item] += 1;
        }
        let before = keep.len();
        keep.retain(|r| ucnt[r.user] >= min_user_ratings && icnt[r.item] >= min_item_ratings);
        if keep.is_empty() {
            return Err(DatasetError::FilterEmptied);
        }
        if keep.len() == before {
            break;
        }
    }

    let mut users: Vec<usize> = keep.iter().map(|r| r.user).collect::<HashSet<_>>().into_iter().collect();
    users.sort_unstable();
    let mut items: Vec<usize> = keep.iter().map(|r| r.item).collect::<HashSet<_>>().into_iter().collect();
    items.sort_unstable();
    let umap: HashMap<usize, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let imap: HashMap<usize, usize> = items.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    Ok(Dataset {
        ratings: keep
            .iter()
            .map(|r| RatingTriple { user: umap[&r.user], item: imap[&r.item], rating: r.rating })
            .collect(),
        types: users.iter().map(|&u| d.types[u]).collect(),
        n_users: users.len(),
        n_items: items.len(),
        label_names: d.label_names.clone(),
    })
}

/// Split users into k folds (shuffled by `seed`) and return per-fold
/// (train, test) datasets. Item ids are preserved so an item model trained
/// on a train fold applies to its test fold; user ids are re-indexed
/// densely within each side. Test fold sizes differ by at most one user.
pub fn split_folds(
    d: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(Dataset, Dataset)>, DatasetError> {
    if k == 0 || k > d.n_users {
        return Err(DatasetError::BadFoldCount { n_users: d.n_users, k });
    }
    let mut order: Vec<usize> = (0..d.n_users).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // First (n mod k) folds take the extra user.
    let base = d.n_users / k;
    let extra = d.n_users % k;
    let mut fold_of = vec![0usize; d.n_users];
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &u in &order[pos..pos + size] {
            fold_of[u] = f;
        }
        pos += size;
    }

    let by_user = d.by_user();
    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let mk = |test_side: bool| {
            let users: Vec<usize> =
                (0..d.n_users).filter(|&u| (fold_of[u] == f) == test_side).collect();
            let mut ratings = Vec::new();
            for (new_u, &u) in users.iter().enumerate() {
                for &(item, rating) in &by_user[u] {
                    ratings.push(RatingTriple { user: new_u, item, rating });
                }
            }
            Dataset {
                ratings,
                types: users.iter().map(|&u| d.types[u]).collect(),
                n_users: users.len(),
                n_items: d.n_items,
                label_names: d.label_names.clone(),
            }
        };
        let train = mk(false);
        let test = mk(true);
        out.push((train, test));
    }
    Ok(out)
}

/// Generate ratings from the model r = u.v + z_{j,t} + noise with known
/// ground truth. Returns the dataset, the true item model (with inference
/// gauge sigma_0 = 1 and lambda = 1 regardless of generation noise), and
/// the true user profiles (one row per user).
pub fn generate_synthetic(
    c: &SyntheticConfig,
) -> Result<(Dataset, ItemModel, Array2<f64>), DatasetError> {
    let bad = |msg: &str| Err(DatasetError::BadSyntheticConfig(msg.to_string()));
    if c.n_users == 0 || c.n_items == 0 || c.d == 0 {
        return bad("n_users, n_items, d must be positive");
    }
    if !(c.sigma_u > 0.0) || !(c.sigma_v > 0.0) {
        return bad("sigma_u and sigma_v must be > 0");
    }
    if !(c.sigma_0 >= 0.0) || !(c.bias_scale >= 0.0) {
        return bad("sigma_0 and bias_scale must be >= 0");
    }
    if !(c.density > 0.0 && c.density <= 1.0) {
        return bad("density must be in (0, 1]");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid unit normal");

    let types: Vec<UserType> = (0..c.n_users)
        .map(|_| if rng.random_bool(0.5) { UserType::Plus } else { UserType::Minus })
        .collect();
    let u = Array2::from_shape_fn((c.n_users, c.d), |_| c.sigma_u * unit.sample(&mut rng));
    let v = Array2::from_shape_fn((c.n_items, c.d), |_| c.sigma_v * unit.sample(&mut rng));

    // Per-item bias midpoint and gap are both N(0, bias_scale^2) draws, so
    // bias_scale = 0 forces z to zero exactly.
    let mut z_plus = ndarray::Array1::zeros(c.n_items);
    let mut z_minus = ndarray::Array1::zeros(c.n_items);
    for j in 0..c.n_items {
        let center = c.bias_scale * unit.sample(&mut rng);
        let gap = c.bias_scale * unit.sample(&mut rng);
        z_plus[j] = center + 0.5 * gap;
        z_minus[j] = center - 0.5 * gap;
    }

    let mut ratings = Vec::new();
    for i in 0..c.n_users {
        for j in 0..c.n_items {
            if rng.random::<f64>() < c.density {
                let z = match types[i] {
                    UserType::Plus => z_plus[j],
                    UserType::Minus => z_minus[j],
                };
                let noise =
                    if c.sigma_0 > 0.0 { c.sigma_0 * unit.sample(&mut rng) } else { 0.0 };
                let r = u.row(i).dot(&v.row(j)) + z + noise;
                ratings.push(RatingTriple { user: i, item: j, rating: r });
            }
        }
    }

    let label_names = LabelNames::new("pos", "neg");
    let model = ItemModel {
        v,
        z_plus,
        z_minus,
        hp: HyperParams {
            d: c.d,
            classifier_lambda: 1.0,
            sigma_0: 1.0,
            seed: c.seed,
            ..HyperParams::default()
        },
        label_names: label_names.clone(),
    };
    let data = Dataset {
        ratings,
        types,
        n_users: c.n_users,
        n_items: c.n_items,
        label_names,
    };
    Ok((data, model, u))
}

/// Deterministic per-user stream id: mixes an experiment seed with a user
/// id so holdouts and shuffles are identical across strategies and across
/// parallel execution orders.
pub fn mix_seed(seed: u64, salt: u64, user: usize) -> u64 {
    // splitmix64 finalizer
    let mut x = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (user as u64).wrapping_add(0x243F_6A88_85A3_08D3);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// Stable histogram of discrete rating values (exact f64 equality, which
/// is the right notion for file-sourced rating scales).
pub fn rating_histogram(values: impl Iterator<Item = f64>) -> BTreeMap<u64, usize> {
    let mut h = BTreeMap::new();
    for v in values {
        *h.entry(v.to_bits()).or_insert(0) += 1;
    }
    h
}
