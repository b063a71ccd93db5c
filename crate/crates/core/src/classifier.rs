//! Classification of the binary user type from a set of answered ratings.
//!
//! For answered items A with ratings r_A, the exact type posterior under
//! the factor model needs only d x d solves: with Sigma_A = lambda*I +
//! V_A^T V_A and M_A = I - V_A Sigma_A^{-1} V_A^T, the log-score of type t
//! is -(r_A - z_{A,t})^T M_A (r_A - z_{A,t}) / (2 sigma_0^2) + ln pi_t.
//! `classify` compares the two scores directly, so it agrees with the
//! posterior argmax by construction. A zero-padded logistic regression
//! over raw rating vectors serves as the reference baseline.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{Dataset, UserType};
use crate::linalg;
use crate::mf::ItemModel;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("query has {items} items but {ratings} ratings")]
    LengthMismatch { items: usize, ratings: usize },
    #[error("duplicate item {item} in query")]
    DuplicateItem { item: usize },
    #[error("item {item} is not covered by the model (n_items = {n_items})")]
    UnknownItem { item: usize, n_items: usize },
    #[error("non-finite rating for item {item}")]
    BadRating { item: usize },
    #[error("invalid logistic settings: {0}")]
    BadLogisticConfig(String),
    #[error("logistic training diverged at epoch {epoch}")]
    LogisticDiverged { epoch: usize },
    #[error("empty training set")]
    EmptyTrain,
}

/// Answered items with their ratings. Items are distinct and covered by
/// the model; both are enforced at construction. An empty query is valid
/// and classifies by the prior alone.
#[derive(Debug, Clone, Default)]
pub struct Query {
    items: Vec<usize>,
    ratings: Vec<f64>,
}

impl Query {
    pub fn new(
        model: &ItemModel,
        items: Vec<usize>,
        ratings: Vec<f64>,
    ) -> Result<Self, ClassifierError> {
        if items.len() != ratings.len() {
            return Err(ClassifierError::LengthMismatch {
                items: items.len(),
                ratings: ratings.len(),
            });
        }
        let mut q = Query::empty();
        for (&j, &r) in items.iter().zip(&ratings) {
            q.push(model, j, r)?;
        }
        Ok(q)
    }

    pub fn empty() -> Self {
        Query::default()
    }

    /// Append one answered item, enforcing the query invariants.
    pub fn push(&mut self, model: &ItemModel, item: usize, rating: f64) -> Result<(), ClassifierError> {
        if item >= model.n_items() {
            return Err(ClassifierError::UnknownItem { item, n_items: model.n_items() });
        }
        if self.items.contains(&item) {
            return Err(ClassifierError::DuplicateItem { item });
        }
        if !rating.is_finite() {
            return Err(ClassifierError::BadRating { item });
        }
        self.items.push(item);
        self.ratings.push(rating);
        Ok(())
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn ratings(&self) -> &[f64] {
        &self.ratings
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Reference (non-incremental) per-query quantities.
pub struct FbcIntermediates {
    /// (lambda*I + V_A^T V_A)^{-1}, d x d.
    pub sigma_inv: Array2<f64>,
    /// ln det Sigma_A.
    pub log_det: f64,
    /// I - V_A Sigma_A^{-1} V_A^T, |A| x |A|.
    pub m: Array2<f64>,
    /// r_A minus the per-item bias midpoint.
    pub r_bar: Array1<f64>,
    /// Per-item half bias gap (z+ - z-)/2.
    pub delta: Array1<f64>,
}

/// Rows of V for the query's items.
pub fn query_profiles(model: &ItemModel, q: &Query) -> Array2<f64> {
    let mut v = Array2::zeros((q.len(), model.d()));
    for (row, &j) in q.items.iter().enumerate() {
        v.row_mut(row).assign(&model.v.row(j));
    }
    v
}

/// Build the reference quantities directly from the model. Sigma_A is
/// positive definite for lambda > 0, so factorization cannot fail.
pub fn build_intermediates(model: &ItemModel, q: &Query) -> FbcIntermediates {
    let v = query_profiles(model, q);
    let sigma = linalg::regularized_gram(v.view(), model.hp.classifier_lambda);
    let l = linalg::cholesky(&sigma).expect("lambda > 0 makes Sigma_A positive definite");
    let sigma_inv = linalg::chol_inverse(&l);
    let log_det = linalg::chol_log_det(&l);
    let mut m = -v.dot(&sigma_inv).dot(&v.t());
    for i in 0..q.len() {
        m[[i, i]] += 1.0;
    }
    let r_bar = Array1::from_shape_fn(q.len(), |i| q.ratings[i] - model.z_mid(q.items[i]));
    let delta = Array1::from_shape_fn(q.len(), |i| model.delta(q.items[i]));
    FbcIntermediates { sigma_inv, log_det, m, r_bar, delta }
}

/// Log-score of each type: (score_plus, score_minus).
///
/// Computed without forming M_A: y^T M_A y = y^T y - w^T Sigma_A^{-1} w
/// with w = V_A^T y, so a query of any length costs O(|A| d + d^2).
fn type_scores(model: &ItemModel, q: &Query) -> (f64, f64) {
    let lambda = model.hp.classifier_lambda;
    let two_s2 = 2.0 * model.hp.sigma_0 * model.hp.sigma_0;
    let d = model.d();
    let v = query_profiles(model, q);
    let sigma = linalg::regularized_gram(v.view(), lambda);
    let l = linalg::cholesky(&sigma).expect("lambda > 0 makes Sigma_A positive definite");

    let mut score = [0.0f64; 2];
    for (slot, t) in [(0, UserType::Plus), (1, UserType::Minus)] {
        let y = Array1::from_shape_fn(q.len(), |i| q.ratings[i] - model.z(q.items[i], t));
        let w = if d > 0 { v.t().dot(&y) } else { Array1::zeros(0) };
        let quad = y.dot(&y) - w.dot(&linalg::chol_solve(&l, w.view()));
        let prior = match t {
            UserType::Plus => model.hp.prior_plus,
            UserType::Minus => 1.0 - model.hp.prior_plus,
        };
        score[slot] = -quad / two_s2 + prior.ln();
    }
    (score[0], score[1])
}

/// Both type posteriors, (Pr(+1|r_A), Pr(-1|r_A)).
///
/// The two-term softmax reduces to a sigmoid of the score difference.
/// Sharing one exp(-|odds|) and one denominator keeps the pair summing
/// to 1 at machine precision even when the individual log-scores are
/// huge, and neither term can over- or underflow to NaN.
pub fn posterior_pair(model: &ItemModel, q: &Query) -> (f64, f64) {
    let (sp, sm) = type_scores(model, q);
    let odds = sp - sm;
    if odds >= 0.0 {
        let e = (-odds).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = odds.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// Posterior probability of type +1 given the answered ratings.
/// An empty query returns the prior.
pub fn posterior(model: &ItemModel, q: &Query) -> f64 {
    posterior_pair(model, q).0
}

/// Log posterior odds ln Pr(+1|r_A) - ln Pr(-1|r_A).
pub fn log_odds(model: &ItemModel, q: &Query) -> f64 {
    let (sp, sm) = type_scores(model, q);
    sp - sm
}

/// Maximum-posterior type. Exact ties go to the larger-prior class, and
/// to +1 under a uniform prior.
pub fn classify(model: &ItemModel, q: &Query) -> UserType {
    let (sp, sm) = type_scores(model, q);
    if sp > sm {
        UserType::Plus
    } else if sp < sm {
        UserType::Minus
    } else if model.hp.prior_plus >= 0.5 {
        UserType::Plus
    } else {
        UserType::Minus
    }
}

/// Ridge point estimate of the user profile given the inferred type:
/// u_hat = Sigma_A^{-1} V_A^T (r_A - z_{A,t}).
pub fn ridge_profile(model: &ItemModel, q: &Query, t_hat: UserType) -> Array1<f64> {
    let v = query_profiles(model, q);
    let sigma = linalg::regularized_gram(v.view(), model.hp.classifier_lambda);
    let l = linalg::cholesky(&sigma).expect("lambda > 0 makes Sigma_A positive definite");
    let y = Array1::from_shape_fn(q.len(), |i| q.ratings[i] - model.z(q.items[i], t_hat));
    linalg::chol_solve(&l, v.t().dot(&y).view())
}

/// L2-regularized logistic regression over zero-padded rating vectors.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    /// One weight per item id.
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub l2: f64,
}

fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Train the logistic baseline by seeded SGD over users (one update per
/// user per epoch, shuffled). `l2` acts as a per-update weight decay on
/// the item weights; the intercept is unregularized.
pub fn train_logistic(
    train: &Dataset,
    l2: f64,
    epochs: usize,
    step: f64,
    seed: u64,
) -> Result<LogisticModel, ClassifierError> {
    if !(l2 >= 0.0) {
        return Err(ClassifierError::BadLogisticConfig("l2 must be >= 0".into()));
    }
    if !(step > 0.0) {
        return Err(ClassifierError::BadLogisticConfig("step must be > 0".into()));
    }
    if epochs == 0 {
        return Err(ClassifierError::BadLogisticConfig("epochs must be >= 1".into()));
    }
    if train.ratings.is_empty() {
        return Err(ClassifierError::EmptyTrain);
    }

    let by_user = train.by_user();
    // Lazy weight decay: weights = scale * w_tilde, decay multiplies scale.
    let mut w = vec![0.0f64; train.n_items];
    let mut scale = 1.0f64;
    let mut b = 0.0f64;
    let decay = (1.0 - step * l2).max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.n_users).collect();

    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        for &uid in &order {
            let y = train.types[uid].sign();
            let mut f = b;
            for &(j, r) in &by_user[uid] {
                f += scale * w[j] * r;
            }
            if !f.is_finite() {
                return Err(ClassifierError::LogisticDiverged { epoch });
            }
            if decay == 0.0 {
                w.iter_mut().for_each(|x| *x = 0.0);
                scale = 1.0;
            } else {
                scale *= decay;
                if scale < 1e-8 {
                    w.iter_mut().for_each(|x| *x *= scale);
                    scale = 1.0;
                }
            }
            let g = y * sigmoid(-y * f);
            for &(j, r) in &by_user[uid] {
                w[j] += step * g * r / scale;
            }
            b += step * g;
        }
    }

    let weights = Array1::from_iter(w.into_iter().map(|x| x * scale));
    Ok(LogisticModel { weights, intercept: b, l2 })
}

/// sigmoid(w . r_A + b) over the query's answered items; unanswered items
/// contribute zero, matching the zero-padded training representation.
pub fn logistic_posterior(m: &LogisticModel, q: &Query) -> f64 {
    let mut f = m.intercept;
    for (&j, &r) in q.items.iter().zip(q.ratings()) {
        f += m.weights[j] * r;
    }
    sigmoid(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelNames, RatingTriple};
    use crate::mf::HyperParams;
    use rand::Rng;

    fn model_from(v: Array2<f64>, z_plus: Vec<f64>, z_minus: Vec<f64>, lambda: f64) -> ItemModel {
        let d = v.ncols();
        ItemModel {
            v,
            z_plus: Array1::from(z_plus),
            z_minus: Array1::from(z_minus),
            hp: HyperParams { d, classifier_lambda: lambda, ..HyperParams::default() },
            label_names: LabelNames::new("pos", "neg"),
        }
    }

    fn random_model(rng: &mut ChaCha8Rng, n_items: usize, d: usize, lambda: f64) -> ItemModel {
        let v = Array2::from_shape_fn((n_items, d), |_| rng.random::<f64>() * 2.0 - 1.0);
        let z_plus = (0..n_items).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let z_minus = (0..n_items).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        model_from(v, z_plus, z_minus, lambda)
    }

    fn random_query(rng: &mut ChaCha8Rng, model: &ItemModel, len: usize, scale: f64) -> Query {
        let mut ids: Vec<usize> = (0..model.n_items()).collect();
        ids.shuffle(rng);
        ids.truncate(len);
        let ratings = ids.iter().map(|_| (rng.random::<f64>() * 8.0 - 4.0) * scale).collect();
        Query::new(model, ids, ratings).unwrap()
    }

    /// Independent route to M_A: Gauss-Jordan inverse of Sigma_A.
    fn brute_force_m(model: &ItemModel, q: &Query) -> (Array2<f64>, f64) {
        let v = query_profiles(model, q);
        let sigma = linalg::regularized_gram(v.view(), model.hp.classifier_lambda);
        let n = sigma.nrows();
        let mut aug = Array2::<f64>::zeros((n, 2 * n));
        for i in 0..n {
            for j in 0..n {
                aug[[i, j]] = sigma[[i, j]];
            }
            aug[[i, n + i]] = 1.0;
        }
        let mut det = 1.0;
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if aug[[r, col]].abs() > aug[[piv, col]].abs() {
                    piv = r;
                }
            }
            if piv != col {
                for j in 0..2 * n {
                    let t = aug[[col, j]];
                    aug[[col, j]] = aug[[piv, j]];
                    aug[[piv, j]] = t;
                }
                det = -det;
            }
            let p = aug[[col, col]];
            det *= p;
            for j in 0..2 * n {
                aug[[col, j]] /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = aug[[r, col]];
                    for j in 0..2 * n {
                        aug[[r, j]] -= f * aug[[col, j]];
                    }
                }
            }
        }
        let inv = aug.slice(ndarray::s![.., n..]).to_owned();
        let mut m = -v.dot(&inv).dot(&v.t());
        for i in 0..q.len() {
            m[[i, i]] += 1.0;
        }
        (m, det.ln())
    }

    #[test]
    fn intermediates_match_brute_force_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..30 {
            let d = 1 + case % 8;
            let model = random_model(&mut rng, 12, d, 0.5 + case as f64 * 0.3);
            let q = random_query(&mut rng, &model, 5, 1.0);
            let inter = build_intermediates(&model, &q);
            let (m_oracle, log_det_oracle) = brute_force_m(&model, &q);
            for i in 0..5 {
                for j in 0..5 {
                    assert!(
                        (inter.m[[i, j]] - m_oracle[[i, j]]).abs() < 1e-10,
                        "case {case} M[{i},{j}]"
                    );
                }
            }
            assert!((inter.log_det - log_det_oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn intermediates_hand_values() {
        // d=1, lambda=1, one item with v=1: Sigma=2, M = 1 - 1/2 = 1/2.
        let model = model_from(ndarray::array![[1.0]], vec![4.0], vec![2.0], 1.0);
        let q = Query::new(&model, vec![0], vec![5.0]).unwrap();
        let inter = build_intermediates(&model, &q);
        assert!((inter.sigma_inv[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((inter.m[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((inter.log_det - 2.0f64.ln()).abs() < 1e-15);
        // z_mid = 3, delta = 1, r_bar = 5 - 3 = 2.
        assert!((inter.r_bar[0] - 2.0).abs() < 1e-15);
        assert!((inter.delta[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_query_intermediates_are_prior_state() {
        let model = model_from(Array2::zeros((3, 2)), vec![0.0; 3], vec![0.0; 3], 4.0);
        let q = Query::empty();
        let inter = build_intermediates(&model, &q);
        assert_eq!(inter.m.shape(), &[0, 0]);
        assert!((inter.log_det - 2.0 * 4.0f64.ln()).abs() < 1e-14);
        for i in 0..2 {
            assert!((inter.sigma_inv[[i, i]] - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_hand_value_flat_profile_item() {
        // v = 0 so M = 1; z = +/-1, sigma_0 = 1, r = 1:
        // Pr(+1) = 1 / (1 + exp(-2)).
        let model = model_from(ndarray::array![[0.0]], vec![1.0], vec![-1.0], 1.0);
        let q = Query::new(&model, vec![0], vec![1.0]).unwrap();
        let want = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((posterior(&model, &q) - want).abs() < 1e-14);
        assert_eq!(classify(&model, &q), UserType::Plus);
    }

    #[test]
    fn posterior_is_normalized_and_stable_at_large_magnitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..200 {
            let model = random_model(&mut rng, 15, 1 + case % 6, 1.0);
            // scale up to 100x pushes quadratic forms to ~1e4
            let scale = if case % 3 == 0 { 100.0 } else { 1.0 };
            let q = random_query(&mut rng, &model, 1 + case % 10, scale);
            let (p, pm) = posterior_pair(&model, &q);
            assert!(p.is_finite() && (0.0..=1.0).contains(&p), "case {case}: {p}");
            assert!(pm.is_finite() && (0.0..=1.0).contains(&pm), "case {case}: {pm}");
            assert!((p + pm - 1.0).abs() < 1e-12, "case {case}");
            assert!((p - posterior(&model, &q)).abs() == 0.0);
        }
    }

    #[test]
    fn classify_agrees_with_posterior_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for case in 0..1000 {
            let mut model = random_model(&mut rng, 10, 1 + case % 5, 0.5 + (case % 7) as f64);
            model.hp.prior_plus = [0.5, 0.2, 0.9][case % 3];
            let q = random_query(&mut rng, &model, case % 8, 1.0);
            let p = posterior(&model, &q);
            let want = if p > 0.5 {
                UserType::Plus
            } else if p < 0.5 {
                UserType::Minus
            } else if model.hp.prior_plus >= 0.5 {
                UserType::Plus
            } else {
                UserType::Minus
            };
            assert_eq!(classify(&model, &q), want, "case {case}, p={p}");
        }
    }

    #[test]
    fn classify_scalar_decision_rule() {
        // d=1, lambda=1, v=1, z+=4, z-=2: decision margin is proportional
        // to (r - 3), so r=5 -> +1, r=2 -> -1, r=3 -> +1 (tie rule).
        let model = model_from(ndarray::array![[1.0]], vec![4.0], vec![2.0], 1.0);
        let q = |r: f64| Query::new(&model, vec![0], vec![r]).unwrap();
        assert_eq!(classify(&model, &q(5.0)), UserType::Plus);
        assert_eq!(classify(&model, &q(2.0)), UserType::Minus);
        assert_eq!(classify(&model, &q(3.0)), UserType::Plus);
    }

    #[test]
    fn empty_query_follows_prior()
    {
        let mut model = model_from(Array2::zeros((2, 1)), vec![0.0; 2], vec![0.0; 2], 1.0);
        assert!((posterior(&model, &Query::empty()) - 0.5).abs() < 1e-15);
        assert_eq!(classify(&model, &Query::empty()), UserType::Plus);
        model.hp.prior_plus = 0.9;
        assert!((posterior(&model, &Query::empty()) - 0.9).abs() < 1e-12);
        assert_eq!(classify(&model, &Query::empty()), UserType::Plus);
        model.hp.prior_plus = 0.2;
        assert_eq!(classify(&model, &Query::empty()), UserType::Minus);
    }

    #[test]
    fn classification_flips_exactly_once_along_a_crossing_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut tested = 0;
        for _ in 0..200 {
            let model = random_model(&mut rng, 10, 3, 2.0);
            let len = 4;
            let base = random_query(&mut rng, &model, len, 1.0);
            let dir: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let at = |s: f64| {
                let ratings =
                    base.ratings().iter().zip(&dir).map(|(r, w)| r + s * w).collect();
                Query::new(&model, base.items().to_vec(), ratings).unwrap()
            };
            let lo = classify(&model, &at(-40.0));
            let hi = classify(&model, &at(40.0));
            if lo == hi {
                continue; // line does not cross the boundary
            }
            tested += 1;
            let mut flips = 0;
            let mut prev = lo;
            let steps = 400;
            for k in 1..=steps {
                let s = -40.0 + 80.0 * k as f64 / steps as f64;
                let c = classify(&model, &at(s));
                if c != prev {
                    flips += 1;
                    prev = c;
                }
            }
            assert_eq!(flips, 1, "decision must flip exactly once along the line");
        }
        assert!(tested >= 20, "too few crossing lines sampled ({tested})");
    }

    #[test]
    fn ridge_profile_hand_value_and_normal_equations() {
        // One item, d=1, v=1, lambda=1, r - z = 2: (1+1) u = 2 -> u = 1.
        let model = model_from(ndarray::array![[1.0]], vec![1.0], vec![-1.0], 1.0);
        let q = Query::new(&model, vec![0], vec![3.0]).unwrap();
        let u = ridge_profile(&model, &q, UserType::Plus);
        assert!((u[0] - 1.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let model = random_model(&mut rng, 12, 4, 3.0);
            let q = random_query(&mut rng, &model, 6, 1.0);
            let u = ridge_profile(&model, &q, UserType::Minus);
            // Residual of (lambda I + V^T V) u = V^T (r - z_-).
            let v = query_profiles(&model, &q);
            let y = Array1::from_shape_fn(q.len(), |i| {
                q.ratings()[i] - model.z(q.items()[i], UserType::Minus)
            });
            let lhs = linalg::regularized_gram(v.view(), 3.0).dot(&u);
            let rhs = v.t().dot(&y);
            for i in 0..4 {
                assert!((lhs[i] - rhs[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn query_validation_errors() {
        let model = model_from(Array2::zeros((2, 1)), vec![0.0; 2], vec![0.0; 2], 1.0);
        assert!(matches!(
            Query::new(&model, vec![0, 0], vec![1.0, 2.0]),
            Err(ClassifierError::DuplicateItem { item: 0 })
        ));
        assert!(matches!(
            Query::new(&model, vec![5], vec![1.0]),
            Err(ClassifierError::UnknownItem { item: 5, .. })
        ));
        assert!(matches!(
            Query::new(&model, vec![0], vec![]),
            Err(ClassifierError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Query::new(&model, vec![0], vec![f64::NAN]),
            Err(ClassifierError::BadRating { item: 0 })
        ));
    }

    fn toy_separable() -> Dataset {
        // +1 users love item 0; -1 users love item 1.
        let mut ratings = Vec::new();
        for u in 0..8 {
            let plus = u % 2 == 0;
            ratings.push(RatingTriple { user: u, item: 0, rating: if plus { 5.0 } else { 1.0 } });
            ratings.push(RatingTriple { user: u, item: 1, rating: if plus { 1.0 } else { 5.0 } });
        }
        Dataset {
            ratings,
            types: (0..8)
                .map(|u| if u % 2 == 0 { UserType::Plus } else { UserType::Minus })
                .collect(),
            n_users: 8,
            n_items: 2,
            label_names: LabelNames::new("pos", "neg"),
        }
    }

    #[test]
    fn logistic_fits_separable_data_and_is_deterministic() {
        let data = toy_separable();
        let m = train_logistic(&data, 1e-4, 200, 0.1, 7).unwrap();
        let fake_item_model = model_from(Array2::zeros((2, 1)), vec![0.0; 2], vec![0.0; 2], 1.0);
        let mut correct = 0;
        for (uid, items) in data.by_user().into_iter().enumerate() {
            let (ids, rs): (Vec<usize>, Vec<f64>) = items.into_iter().unzip();
            let q = Query::new(&fake_item_model, ids, rs).unwrap();
            let p = logistic_posterior(&m, &q);
            let pred = if p > 0.5 { UserType::Plus } else { UserType::Minus };
            correct += usize::from(pred == data.types[uid]);
        }
        assert_eq!(correct, 8, "separable toy set must reach training accuracy 1.0");

        let m2 = train_logistic(&data, 1e-4, 200, 0.1, 7).unwrap();
        assert_eq!(m.weights, m2.weights);
        assert_eq!(m.intercept, m2.intercept);
    }

    #[test]
    fn logistic_huge_l2_kills_weights() {
        let data = toy_separable();
        let m = train_logistic(&data, 1e6, 50, 0.1, 7).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 0.2), "weights {:?}", m.weights);
        let fake_item_model = model_from(Array2::zeros((2, 1)), vec![0.0; 2], vec![0.0; 2], 1.0);
        let q = Query::new(&fake_item_model, vec![], vec![]).unwrap();
        assert!((logistic_posterior(&m, &q) - sigmoid(m.intercept)).abs() < 1e-15);
    }

    #[test]
    fn logistic_config_validation() {
        let data = toy_separable();
        assert!(train_logistic(&data, -1.0, 10, 0.1, 0).is_err());
        assert!(train_logistic(&data, 0.1, 0, 0.1, 0).is_err());
        assert!(train_logistic(&data, 0.1, 10, 0.0, 0).is_err());
    }
}
