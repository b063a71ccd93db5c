//! Question-selection strategies.
//!
//! The active strategy asks, at each step, the candidate item whose
//! answer minimizes the expected risk (one minus the expected confidence
//! of the type classifier after seeing the answer). For the factor model
//! that expectation has a closed form in the Gaussian partial integral
//! h(x): splitting the rating axis at the kink of the |.| term leaves
//! two Gaussian integrals. `SessionState` carries the per-user caches
//! (Sigma_A^{-1}, log det Sigma_A, M_A) that make scoring one candidate
//! O(d^2 + |A| d) via rank-one updates instead of a fresh factorization.
//! A numerical-quadrature twin of the risk score serves as the oracle
//! for the closed form, and passive orders (gap, entropy, random) cover
//! the non-adaptive baselines.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::{self, ClassifierError, Query};
use crate::dataset::{rating_histogram, Dataset, UserType};
use crate::linalg;
use crate::math::{log_h, logsumexp2, HALF_LN_2PI};
use crate::mf::ItemModel;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no candidate items")]
    NoCandidates,
    #[error("item {item} is not covered by the model (n_items = {n_items})")]
    UnknownItem { item: usize, n_items: usize },
    #[error("item {item} was already asked")]
    AlreadyAsked { item: usize },
    #[error("item {item} is not a candidate")]
    NotCandidate { item: usize },
    #[error("non-finite rating for item {item}")]
    BadRating { item: usize },
    #[error("risk term {term} is not finite and positive for item {item}")]
    BadAlpha { term: &'static str, item: usize },
    #[error("quadrature failed for item {item}: {msg}")]
    Quadrature { item: usize, msg: String },
    #[error("entropy order requires a training dataset")]
    MissingTrain,
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Rebuild Sigma^{-1}, log det and M from scratch on every change.
    Direct,
    /// Maintain them by rank-one updates.
    Incremental,
}

/// One user's interrogation state.
///
/// Invariant: the cached `sigma_inv`, `log_det` and `m` always equal
/// their from-scratch definitions over the asked set (up to roundoff in
/// incremental mode), and `asked` and `candidates` stay disjoint.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub asked: Vec<usize>,
    pub ratings: Vec<f64>,
    pub candidates: BTreeSet<usize>,
    /// (lambda*I + V_A^T V_A)^{-1}.
    pub sigma_inv: Array2<f64>,
    /// ln det (lambda*I + V_A^T V_A).
    pub log_det: f64,
    /// M_A = I - V_A Sigma_A^{-1} V_A^T.
    pub m: Array2<f64>,
    pub mode: SelectionMode,
}

fn profile_rows(model: &ItemModel, items: &[usize]) -> Array2<f64> {
    let mut v = Array2::zeros((items.len(), model.d()));
    for (row, &j) in items.iter().enumerate() {
        v.row_mut(row).assign(&model.v.row(j));
    }
    v
}

impl SessionState {
    /// Start a session with an empty asked set: Sigma^{-1} = I/lambda,
    /// log det = d ln lambda, M empty.
    pub fn new(
        model: &ItemModel,
        candidates: impl IntoIterator<Item = usize>,
        mode: SelectionMode,
    ) -> Result<Self, SelectionError> {
        let candidates: BTreeSet<usize> = candidates.into_iter().collect();
        if candidates.is_empty() {
            return Err(SelectionError::NoCandidates);
        }
        if let Some(&item) = candidates.iter().find(|&&j| j >= model.n_items()) {
            return Err(SelectionError::UnknownItem { item, n_items: model.n_items() });
        }
        let d = model.d();
        let lambda = model.hp.classifier_lambda;
        Ok(SessionState {
            asked: Vec::new(),
            ratings: Vec::new(),
            candidates,
            sigma_inv: Array2::eye(d) / lambda,
            log_det: d as f64 * lambda.ln(),
            m: Array2::zeros((0, 0)),
            mode,
        })
    }

    /// Record the answer for candidate `j` and fold it into the caches.
    ///
    /// Incremental mode applies the determinant lemma for log det, the
    /// Sherman-Morrison update for Sigma^{-1}, and the bordered-block
    /// update for M; direct mode rebuilds all three from scratch.
    pub fn extend(
        &mut self,
        model: &ItemModel,
        j: usize,
        r_j: f64,
    ) -> Result<(), SelectionError> {
        if self.asked.contains(&j) {
            return Err(SelectionError::AlreadyAsked { item: j });
        }
        if !self.candidates.contains(&j) {
            return Err(SelectionError::NotCandidate { item: j });
        }
        if !r_j.is_finite() {
            return Err(SelectionError::BadRating { item: j });
        }

        match self.mode {
            SelectionMode::Incremental => {
                let n = self.asked.len();
                let v_j = model.v.row(j);
                let w = self.sigma_inv.dot(&v_j);
                let denom = 1.0 + v_j.dot(&w);
                let phi = profile_rows(model, &self.asked).dot(&w);

                self.log_det += denom.ln();
                let d = model.d();
                for a in 0..d {
                    for b in 0..d {
                        self.sigma_inv[[a, b]] -= w[a] * w[b] / denom;
                    }
                }
                let mut m_new = Array2::zeros((n + 1, n + 1));
                for a in 0..n {
                    for b in 0..n {
                        m_new[[a, b]] = self.m[[a, b]] + phi[a] * phi[b] / denom;
                    }
                    let xi_a = phi[a] / denom;
                    m_new[[a, n]] = -xi_a;
                    m_new[[n, a]] = -xi_a;
                }
                m_new[[n, n]] = 1.0 / denom;
                self.m = m_new;
            }
            SelectionMode::Direct => {
                let mut items = self.asked.clone();
                items.push(j);
                let mut ratings = self.ratings.clone();
                ratings.push(r_j);
                let q = Query::new(model, items, ratings)?;
                let inter = classifier::build_intermediates(model, &q);
                self.sigma_inv = inter.sigma_inv;
                self.log_det = inter.log_det;
                self.m = inter.m;
            }
        }

        self.candidates.remove(&j);
        self.asked.push(j);
        self.ratings.push(r_j);
        Ok(())
    }

    /// Bias-centered answered ratings r_A - (z+ + z-)/2.
    fn r_bar(&self, model: &ItemModel) -> Array1<f64> {
        Array1::from_shape_fn(self.asked.len(), |i| {
            self.ratings[i] - model.z_mid(self.asked[i])
        })
    }

    /// Half bias gaps (z+ - z-)/2 over the asked set.
    fn delta(&self, model: &ItemModel) -> Array1<f64> {
        Array1::from_shape_fn(self.asked.len(), |i| model.delta(self.asked[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMethod {
    ClosedForm,
    Quadrature,
}

/// Expected-risk score of one candidate, with an additive constant
/// (common to all candidates of the same step) dropped. Comparable only
/// within a step.
#[derive(Debug, Clone, Copy)]
pub struct RiskScore {
    pub item: usize,
    /// exp(log_value); positive, but can underflow to zero when the
    /// exponents are extreme. Selection compares `log_value`.
    pub value: f64,
    pub log_value: f64,
    pub method: RiskMethod,
}

/// Exponent coefficients of the risk integrand for one candidate j:
/// the integrand over the centered rating r is
/// exp(-(a1 r^2 + a2 r + 2|a3 r + a4| + a5) / 2), and the score divides
/// the integral by sqrt(det Sigma_{A_j}). Built on the reference
/// (from-scratch) path; the incremental path reproduces a1..a5 from the
/// session caches without materializing mu1.
#[derive(Debug, Clone)]
pub struct AlphaTerms {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    /// V_A Sigma_{A_j}^{-1} v_j.
    pub xi: Array1<f64>,
    /// V_A Sigma_A^{-1} v_j.
    pub phi: Array1<f64>,
    /// Top-left |A| x |A| block of M_{A_j}.
    pub mu1: Array2<f64>,
    /// Bottom-right entry of M_{A_j}, in (0, 1].
    pub mu2: f64,
    /// ln det Sigma_{A_j}.
    pub log_det_ext: f64,
}

#[derive(Debug, Clone, Copy)]
struct AlphaScalars {
    a1: f64,
    a2: f64,
    a3: f64,
    a4: f64,
    a5: f64,
    log_det_ext: f64,
}

fn check_alphas(item: usize, a: &AlphaScalars) -> Result<(), SelectionError> {
    let named = [
        ("a1", a.a1),
        ("a2", a.a2),
        ("a3", a.a3),
        ("a4", a.a4),
        ("a5", a.a5),
        ("log det", a.log_det_ext),
    ];
    for (term, value) in named {
        if !value.is_finite() {
            return Err(SelectionError::BadAlpha { term, item });
        }
    }
    if a.a1 <= 0.0 {
        return Err(SelectionError::BadAlpha { term: "a1", item });
    }
    Ok(())
}

/// Build the exponent coefficients for candidate `j` from a from-scratch
/// extension of the asked set (reference path, any state mode).
pub fn alpha_terms(
    s: &SessionState,
    model: &ItemModel,
    j: usize,
) -> Result<AlphaTerms, SelectionError> {
    if !s.candidates.contains(&j) {
        return Err(if s.asked.contains(&j) {
            SelectionError::AlreadyAsked { item: j }
        } else {
            SelectionError::NotCandidate { item: j }
        });
    }
    let n = s.asked.len();
    let mut items = s.asked.clone();
    items.push(j);
    let v_ext = profile_rows(model, &items);
    let sigma = linalg::regularized_gram(v_ext.view(), model.hp.classifier_lambda);
    let l = linalg::cholesky(&sigma).expect("lambda > 0 makes Sigma positive definite");
    let sigma_inv = linalg::chol_inverse(&l);
    let log_det_ext = linalg::chol_log_det(&l);
    let mut m_ext = -v_ext.dot(&sigma_inv).dot(&v_ext.t());
    for i in 0..=n {
        m_ext[[i, i]] += 1.0;
    }

    let mu1 = m_ext.slice(ndarray::s![0..n, 0..n]).to_owned();
    let xi = Array1::from_shape_fn(n, |i| -m_ext[[i, n]]);
    let mu2 = m_ext[[n, n]];
    let phi = &xi / mu2;

    let r_bar = s.r_bar(model);
    let delta = s.delta(model);
    let delta_j = model.delta(j);
    let s2 = model.hp.sigma_0 * model.hp.sigma_0;

    // delta_ext^T M_ext delta_ext with the candidate's own gap appended.
    let mut delta_ext = Array1::zeros(n + 1);
    for i in 0..n {
        delta_ext[i] = delta[i];
    }
    delta_ext[n] = delta_j;
    let dmd_ext = delta_ext.dot(&m_ext.dot(&delta_ext));

    let mu1_rbar = mu1.dot(&r_bar);
    let a = AlphaTerms {
        a1: mu2 / s2,
        a2: -2.0 * xi.dot(&r_bar) / s2,
        a3: (delta_j * mu2 - delta.dot(&xi)) / s2,
        a4: (delta.dot(&mu1_rbar) - delta_j * xi.dot(&r_bar)) / s2,
        a5: (r_bar.dot(&mu1_rbar) + dmd_ext) / s2,
        xi,
        phi,
        mu1,
        mu2,
        log_det_ext,
    };
    check_alphas(
        j,
        &AlphaScalars {
            a1: a.a1,
            a2: a.a2,
            a3: a.a3,
            a4: a.a4,
            a5: a.a5,
            log_det_ext: a.log_det_ext,
        },
    )?;
    Ok(a)
}

/// Per-step quantities shared by every candidate of one incremental
/// selection step: O(|A|^2) to build, then each candidate costs
/// O(d^2 + |A| d).
struct StepCache {
    v_a: Array2<f64>,
    r_bar: Array1<f64>,
    delta: Array1<f64>,
    rbar_m_rbar: f64,
    delta_m_rbar: f64,
    delta_m_delta: f64,
}

impl StepCache {
    fn build(s: &SessionState, model: &ItemModel) -> StepCache {
        let v_a = profile_rows(model, &s.asked);
        let r_bar = s.r_bar(model);
        let delta = s.delta(model);
        let m_rbar = s.m.dot(&r_bar);
        let m_delta = s.m.dot(&delta);
        StepCache {
            rbar_m_rbar: r_bar.dot(&m_rbar),
            delta_m_rbar: delta.dot(&m_rbar),
            delta_m_delta: delta.dot(&m_delta),
            v_a,
            r_bar,
            delta,
        }
    }

    /// a1..a5 for candidate `j` by rank-one corrections to the cached
    /// step quadratic forms; never touches an |A| x |A| matrix.
    fn alphas(&self, s: &SessionState, model: &ItemModel, j: usize) -> AlphaScalars {
        let v_j = model.v.row(j);
        let w = s.sigma_inv.dot(&v_j);
        let denom = 1.0 + v_j.dot(&w);
        let phi = self.v_a.dot(&w);
        let phi_rbar = phi.dot(&self.r_bar);
        let phi_delta = phi.dot(&self.delta);
        let delta_j = model.delta(j);
        let s2 = model.hp.sigma_0 * model.hp.sigma_0;

        let mu2 = 1.0 / denom;
        let xi_rbar = phi_rbar / denom;
        let xi_delta = phi_delta / denom;
        // X^T mu1 Y = X^T M_A Y + (X^T phi)(phi^T Y) / denom
        let delta_mu1_rbar = self.delta_m_rbar + phi_delta * phi_rbar / denom;
        let rbar_mu1_rbar = self.rbar_m_rbar + phi_rbar * phi_rbar / denom;
        let delta_mu1_delta = self.delta_m_delta + phi_delta * phi_delta / denom;
        let dmd_ext = delta_mu1_delta - 2.0 * xi_delta * delta_j + mu2 * delta_j * delta_j;

        AlphaScalars {
            a1: mu2 / s2,
            a2: -2.0 * xi_rbar / s2,
            a3: (delta_j * mu2 - xi_delta) / s2,
            a4: (delta_mu1_rbar - delta_j * xi_rbar) / s2,
            a5: (rbar_mu1_rbar + dmd_ext) / s2,
            log_det_ext: s.log_det + denom.ln(),
        }
    }
}

/// ln of the risk integral for one candidate given its exponent
/// coefficients. The |.| kink splits the axis at r0 = -a4/a3; each side
/// is a Gaussian integral expressed through h(x), evaluated in log
/// space. a3 < 0 reduces to a3 > 0 by negating (a3, a4); a3 = 0 leaves
/// a single full-axis Gaussian integral.
fn log_risk_value(a: &AlphaScalars) -> f64 {
    let (a3, a4) = if a.a3 < 0.0 { (-a.a3, -a.a4) } else { (a.a3, a.a4) };
    let log_integral = if a3 == 0.0 {
        a.a2 * a.a2 / (8.0 * a.a1) - (2.0 * a4.abs() + a.a5) / 2.0 + HALF_LN_2PI
            - 0.5 * a.a1.ln()
    } else {
        let r0 = -a4 / a3;
        let sq = a.a1.sqrt();
        let beta_minus = a.a2 - 2.0 * a3;
        let beta_plus = a.a2 + 2.0 * a3;
        let x_minus = sq * r0 + beta_minus / (2.0 * sq);
        let x_plus = sq * r0 + beta_plus / (2.0 * sq);
        let log_i1 =
            beta_minus * beta_minus / (8.0 * a.a1) + a4 - a.a5 / 2.0 - sq.ln() + log_h(x_minus);
        let log_i2 =
            beta_plus * beta_plus / (8.0 * a.a1) - a4 - a.a5 / 2.0 - sq.ln() + log_h(-x_plus);
        logsumexp2(log_i1, log_i2)
    };
    log_integral - 0.5 * a.log_det_ext
}

fn risk_from_scalars(item: usize, a: &AlphaScalars) -> Result<RiskScore, SelectionError> {
    check_alphas(item, a)?;
    let log_value = log_risk_value(a);
    if log_value.is_nan() {
        return Err(SelectionError::BadAlpha { term: "log risk", item });
    }
    Ok(RiskScore { item, value: log_value.exp(), log_value, method: RiskMethod::ClosedForm })
}

/// Closed-form expected risk of asking candidate `j` now.
pub fn risk_closed_form(
    s: &SessionState,
    j: usize,
    model: &ItemModel,
) -> Result<RiskScore, SelectionError> {
    match s.mode {
        SelectionMode::Direct => {
            let a = alpha_terms(s, model, j)?;
            risk_from_scalars(
                j,
                &AlphaScalars {
                    a1: a.a1,
                    a2: a.a2,
                    a3: a.a3,
                    a4: a.a4,
                    a5: a.a5,
                    log_det_ext: a.log_det_ext,
                },
            )
        }
        SelectionMode::Incremental => {
            if !s.candidates.contains(&j) {
                return Err(if s.asked.contains(&j) {
                    SelectionError::AlreadyAsked { item: j }
                } else {
                    SelectionError::NotCandidate { item: j }
                });
            }
            let cache = StepCache::build(s, model);
            risk_from_scalars(j, &cache.alphas(s, model, j))
        }
    }
}

/// Tuning knobs of the quadrature oracle.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Stop refining when the relative change drops below this.
    pub rel_tol: f64,
    /// Simpson intervals per panel at the first refinement level.
    pub initial_points: usize,
    /// Cap on point-count doublings per interval width.
    pub max_doublings: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { rel_tol: 1e-10, initial_points: 64, max_doublings: 20 }
    }
}

/// Numerically integrate the risk integrand for candidate `j`.
///
/// Reference oracle only: the integrand is evaluated straight from a
/// from-scratch M_{A_j} at every node (no closed-form algebra shared
/// beyond the integrand definition), over [mode - 12 sigma, mode + 12
/// sigma] split at the |.| kink, with composite Simpson panels. Points
/// are doubled until the result is stable, then the interval width is
/// doubled and checked once more.
pub fn risk_quadrature(
    s: &SessionState,
    j: usize,
    model: &ItemModel,
    grid: &QuadratureConfig,
) -> Result<RiskScore, SelectionError> {
    if !s.candidates.contains(&j) {
        return Err(if s.asked.contains(&j) {
            SelectionError::AlreadyAsked { item: j }
        } else {
            SelectionError::NotCandidate { item: j }
        });
    }
    let quad_err = |msg: &str| SelectionError::Quadrature { item: j, msg: msg.to_string() };

    let n = s.asked.len();
    let mut items = s.asked.clone();
    items.push(j);
    let v_ext = profile_rows(model, &items);
    let sigma = linalg::regularized_gram(v_ext.view(), model.hp.classifier_lambda);
    let l = linalg::cholesky(&sigma).ok_or_else(|| quad_err("gram matrix not positive definite"))?;
    let sigma_inv = linalg::chol_inverse(&l);
    let log_det_ext = linalg::chol_log_det(&l);
    let mut m_ext = -v_ext.dot(&sigma_inv).dot(&v_ext.t());
    for i in 0..=n {
        m_ext[[i, i]] += 1.0;
    }

    let r_bar = s.r_bar(model);
    let mut delta_ext = Array1::zeros(n + 1);
    for i in 0..n {
        delta_ext[i] = model.delta(s.asked[i]);
    }
    delta_ext[n] = model.delta(j);
    let m_delta = m_ext.dot(&delta_ext);
    let dmd = delta_ext.dot(&m_delta);
    let two_s2 = 2.0 * model.hp.sigma_0 * model.hp.sigma_0;

    // Exponent at centered candidate rating u, from the matrices alone.
    let exponent = |u: f64| -> f64 {
        let y = Array1::from_shape_fn(n + 1, |i| if i < n { r_bar[i] } else { u });
        let quad = y.dot(&m_ext.dot(&y));
        let cross = m_delta.dot(&y);
        (quad + 2.0 * cross.abs() + dmd) / two_s2
    };

    // The quadratic and linear parts are polynomials in u; recover their
    // coefficients from point evaluations to locate the mode.
    let g = |u: f64| -> f64 {
        let y = Array1::from_shape_fn(n + 1, |i| if i < n { r_bar[i] } else { u });
        y.dot(&m_ext.dot(&y))
    };
    let sfun = |u: f64| -> f64 {
        let y = Array1::from_shape_fn(n + 1, |i| if i < n { r_bar[i] } else { u });
        m_delta.dot(&y)
    };
    let (g0, g1, gm1) = (g(0.0), g(1.0), g(-1.0));
    let c1 = (g1 - gm1) / 2.0;
    let c2 = (g1 + gm1) / 2.0 - g0;
    if !(c2 > 0.0) {
        return Err(quad_err("nonpositive curvature"));
    }
    let s0 = sfun(0.0);
    let s1 = sfun(1.0) - s0;

    // The exponent is convex piecewise quadratic: its minimum is at a
    // branch stationary point or at the kink.
    let mut mode_candidates = vec![-(c1 + 2.0 * s1) / (2.0 * c2), -(c1 - 2.0 * s1) / (2.0 * c2)];
    let kink = if s1 != 0.0 {
        let k = -s0 / s1;
        mode_candidates.push(k);
        Some(k)
    } else {
        None
    };
    let mut mode = f64::NAN;
    let mut e_min = f64::INFINITY;
    for &u in &mode_candidates {
        if !u.is_finite() {
            continue;
        }
        let e = exponent(u);
        if e < e_min {
            e_min = e;
            mode = u;
        }
    }
    if !mode.is_finite() || !e_min.is_finite() {
        return Err(quad_err("failed to bracket the integrand mode"));
    }

    // Gaussian width of the integrand; 12 widths of tail are below the
    // 1e-12 truncation target.
    let sigma_w = (two_s2 / (2.0 * c2)).sqrt();

    // Composite Simpson of exp(e_min - exponent(u)) over panels split at
    // the kink; the factored mode value keeps nodes in (0, 1].
    let simpson = |lo: f64, hi: f64, intervals: usize| -> f64 {
        let h = (hi - lo) / intervals as f64;
        let mut acc = (e_min - exponent(lo)).exp() + (e_min - exponent(hi)).exp();
        for k in 1..intervals {
            let weight = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += weight * (e_min - exponent(lo + k as f64 * h)).exp();
        }
        acc * h / 3.0
    };
    let integrate = |half_width: f64, intervals: usize| -> f64 {
        let lo = mode - half_width;
        let hi = mode + half_width;
        let mut cuts = vec![lo, hi];
        if let Some(k) = kink {
            if k > lo && k < hi {
                cuts.insert(1, k);
            }
        }
        cuts.windows(2).map(|w| simpson(w[0], w[1], intervals)).sum()
    };

    let mut width = 12.0 * sigma_w;
    let mut converged: Option<f64> = None;
    for _widening in 0..4 {
        let mut intervals = grid.initial_points.max(2).next_multiple_of(2);
        let mut prev = integrate(width, intervals);
        let mut settled = None;
        for _ in 0..grid.max_doublings {
            intervals *= 2;
            let next = integrate(width, intervals);
            if (next - prev).abs() <= grid.rel_tol * next.abs() {
                settled = Some(next);
                break;
            }
            prev = next;
        }
        let value = settled.ok_or_else(|| quad_err("point refinement did not converge"))?;
        match converged {
            Some(before) if (value - before).abs() <= grid.rel_tol.max(1e-14) * value.abs() => {
                converged = Some(value);
                break;
            }
            _ => {
                converged = Some(value);
                width *= 2.0;
            }
        }
    }
    let integral = converged.ok_or_else(|| quad_err("interval widening did not converge"))?;
    if !(integral > 0.0) {
        return Err(quad_err("nonpositive integral"));
    }

    let log_value = -e_min + integral.ln() - 0.5 * log_det_ext;
    Ok(RiskScore { item: j, value: log_value.exp(), log_value, method: RiskMethod::Quadrature })
}

/// Log-risk gaps below this window count as ties. Exact cross-candidate
/// ties are common, not an edge case: whenever no single answer can flip
/// the current decision, the expected losing-type posterior is the same
/// for every candidate (iterated-expectation identity), so all risks
/// coincide and only roundoff separates them. The window keeps the
/// argmin stable across the two cache update orders, which perturb log
/// risks by far less than this.
const RISK_TIE_WINDOW: f64 = 1e-7;

/// Ask-next choice of the active strategy: the candidate minimizing the
/// closed-form expected risk. Candidates within the tie window of the
/// minimum count as tied and the smallest item id wins.
pub fn select_next_fbc(s: &SessionState, model: &ItemModel) -> Result<usize, SelectionError> {
    if s.candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(s.candidates.len());
    match s.mode {
        SelectionMode::Incremental => {
            let cache = StepCache::build(s, model);
            for &j in &s.candidates {
                let score = risk_from_scalars(j, &cache.alphas(s, model, j))?;
                scored.push((j, score.log_value));
            }
        }
        SelectionMode::Direct => {
            for &j in &s.candidates {
                let score = risk_closed_form(s, j, model)?;
                scored.push((j, score.log_value));
            }
        }
    }
    let min = scored.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    let window = RISK_TIE_WINDOW * (1.0 + min.abs());
    let winner = scored
        .iter()
        .find(|&&(_, v)| v <= min + window)
        .expect("minimum is attained")
        .0;
    Ok(winner)
}

/// Ask-next choice of the point-estimate strategy: impute each
/// candidate's rating from the ridge profile under the current type
/// guess, then pick the candidate whose imputed answer leaves the
/// plug-in classifier least confident.
pub fn select_next_pointest<F>(
    s: &SessionState,
    model: &ItemModel,
    posterior_fn: F,
) -> Result<usize, SelectionError>
where
    F: Fn(&Query) -> f64,
{
    if s.candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let q_now = Query::new(model, s.asked.clone(), s.ratings.clone())?;
    let p_now = posterior_fn(&q_now);
    let t_hat = if p_now >= 0.5 { UserType::Plus } else { UserType::Minus };
    let u_hat = classifier::ridge_profile(model, &q_now, t_hat);

    let mut best: Option<(f64, usize)> = None;
    for &j in &s.candidates {
        let r_hat = u_hat.dot(&model.v.row(j)) + model.z(j, t_hat);
        let mut q = q_now.clone();
        q.push(model, j, r_hat)?;
        let p = posterior_fn(&q);
        let score = p.min(1.0 - p);
        if best.map_or(true, |(b, _)| score < b) {
            best = Some((score, j));
        }
    }
    Ok(best.expect("candidates checked non-empty").1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassiveKind {
    /// Descending half bias gap |z+ - z-|/2.
    MaxGap,
    /// Descending empirical rating entropy in the training set.
    Entropy,
    /// Seeded shuffle.
    Random,
}

/// Fixed item order used by the passive strategies; ties go to the
/// smaller item id.
pub fn passive_order(
    model: &ItemModel,
    train: Option<&Dataset>,
    kind: PassiveKind,
    seed: u64,
) -> Result<Vec<usize>, SelectionError> {
    let n = model.n_items();
    let mut order: Vec<usize> = (0..n).collect();
    match kind {
        PassiveKind::MaxGap => {
            order.sort_by(|&a, &b| {
                model
                    .delta(b)
                    .abs()
                    .total_cmp(&model.delta(a).abs())
                    .then(a.cmp(&b))
            });
        }
        PassiveKind::Entropy => {
            let train = train.ok_or(SelectionError::MissingTrain)?;
            let mut values: Vec<Vec<f64>> = vec![Vec::new(); n];
            for t in &train.ratings {
                if t.item < n {
                    values[t.item].push(t.rating);
                }
            }
            let entropy: Vec<f64> = values
                .iter()
                .map(|vals| {
                    if vals.is_empty() {
                        return 0.0;
                    }
                    let total = vals.len() as f64;
                    rating_histogram(vals.iter().copied())
                        .values()
                        .map(|&c| {
                            let p = c as f64 / total;
                            -p * p.ln()
                        })
                        .sum()
                })
                .collect();
            order.sort_by(|&a, &b| entropy[b].total_cmp(&entropy[a]).then(a.cmp(&b)));
        }
        PassiveKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
        }
    }
    Ok(order)
}

/// Item rating entropies are needed by tests; expose the single-item
/// histogram entropy used by the entropy order.
pub fn histogram_entropy(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let total = values.len() as f64;
    rating_histogram(values.iter().copied())
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}
