//! Restricted extremal eigenvalues, the deterministic error bound for the
//! dictionary LASSO and the intermediate inequalities it rests on.
//!
//! For a matrix `Psi` acting on `R^{l1} x R^{rows(Y)}` we compute
//!
//! ```text
//! rho+(l1, l2) = max |Psi h|^2 / |h|^2,   rho-(l1, l2) = min |Psi h|^2 / |h|^2
//! ```
//!
//! over `h` in `R^{l1} x {Y v : |v|_0 <= l2}`. Each support `F` of size `l2`
//! contributes the subspace `R^{l1} x span(Y_F)`; with an orthonormal basis
//! `M_F` of it the extremes are `sigma_max^2(Psi M_F)` and
//! `sigma_min^2(Psi M_F)`.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{l1_norm, linf_norm, range_basis, singular_values, Matrix, Vector};
use crate::problem::{support_of, DictionaryProblem};
use crate::rng;
use crate::simplify::SimplifiedForm;
use crate::solver::SolveResult;

/// Default cap on the number of supports examined.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Absolute-plus-relative slack used by the inequality checks.
pub const CHECK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedExtremes {
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub l1: usize,
    pub l2: usize,
    pub supports_examined: u64,
    pub exhaustive: bool,
}

/// Whether sampling is acceptable when the support count exceeds the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enumeration {
    Exhaustive,
    AllowSampling { seed: u64 },
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic successor of a `k`-subset of `0..n`; false when exhausted.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct SubspaceEvaluator<'a> {
    psi_free: Matrix,
    psi_sparse: Matrix,
    y: &'a Matrix,
    l1: usize,
}

impl SubspaceEvaluator<'_> {
    /// `(sigma_max^2, sigma_min^2)` of `Psi M_F`.
    fn eval(&self, support: &[usize]) -> (f64, f64) {
        let y_f = Matrix::from_fn(self.y.nrows(), support.len(), |i, j| self.y[(i, support[j])]);
        let q = range_basis(&y_f);
        let sparse_part = &self.psi_sparse * q;
        let n = self.psi_free.nrows();
        let dim = self.l1 + sparse_part.ncols();
        let block = Matrix::from_fn(n, dim, |i, j| {
            if j < self.l1 {
                self.psi_free[(i, j)]
            } else {
                sparse_part[(i, j - self.l1)]
            }
        });
        let s = singular_values(&block);
        if s.is_empty() {
            return (0.0, f64::INFINITY);
        }
        let smax = s[0] * s[0];
        let smin = if n >= dim { s[s.len() - 1].powi(2) } else { 0.0 };
        (smax, smin)
    }
}

/// Extremes of `|Psi h|^2 / |h|^2` over `R^{l1} x H(Y, l2)`.
///
/// `l2` larger than the number of columns of `Y` is treated as "all
/// columns", which spans the same union of subspaces. Exhaustive
/// enumeration is used whenever the support count fits in `budget`;
/// otherwise `mode` decides between failing and sampling `budget` random
/// supports (then `rho_plus` is only a lower estimate and `rho_minus` an
/// upper estimate).
pub fn restricted_extremes(
    psi: &Matrix,
    y_mat: &Matrix,
    l1: usize,
    l2: usize,
    budget: u64,
    mode: Enumeration,
) -> Result<RestrictedExtremes> {
    if psi.ncols() != l1 + y_mat.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Psi has {} columns but l1 + rows(Y) = {}",
            psi.ncols(),
            l1 + y_mat.nrows()
        )));
    }
    let m = y_mat.ncols();
    let k = l2.min(m);
    if l1 + k == 0 {
        return Err(Error::InvalidArgument("restricted extremes over the zero subspace".into()));
    }
    let evaluator = SubspaceEvaluator {
        psi_free: psi.columns(0, l1).into_owned(),
        psi_sparse: psi.columns(l1, y_mat.nrows()).into_owned(),
        y: y_mat,
        l1,
    };
    let count = binomial(m, k);
    let combine = |a: (f64, f64), b: (f64, f64)| (a.0.max(b.0), a.1.min(b.1));
    let init = (0.0f64, f64::INFINITY);

    let (extremes, examined, exhaustive) = if count <= budget as u128 {
        let mut first: Vec<usize> = (0..k).collect();
        let supports = std::iter::once(first.clone()).chain(std::iter::from_fn(move || {
            if next_combination(&mut first, m) {
                Some(first.clone())
            } else {
                None
            }
        }));
        (fold_supports(supports, &evaluator, init, combine), count as u64, true)
    } else {
        match mode {
            Enumeration::Exhaustive => {
                return Err(Error::BudgetExceeded { needed: count, budget });
            }
            Enumeration::AllowSampling { seed } => {
                let mut r = rng::stream_for(seed, &[m as u64, k as u64]);
                let draws: Vec<Vec<usize>> = (0..budget)
                    .map(|_| {
                        let mut s = sample(&mut r, m, k).into_vec();
                        s.sort_unstable();
                        s
                    })
                    .collect();
                (fold_supports(draws.into_iter(), &evaluator, init, combine), budget, false)
            }
        }
    };
    let rho_minus = if extremes.1.is_finite() { extremes.1 } else { 0.0 };
    Ok(RestrictedExtremes {
        rho_plus: extremes.0,
        rho_minus,
        l1,
        l2,
        supports_examined: examined,
        exhaustive,
    })
}

#[cfg(feature = "parallel")]
fn fold_supports<I>(
    supports: I,
    evaluator: &SubspaceEvaluator<'_>,
    init: (f64, f64),
    combine: impl Fn((f64, f64), (f64, f64)) -> (f64, f64) + Sync + Send + Copy,
) -> (f64, f64)
where
    I: Iterator<Item = Vec<usize>> + Send,
{
    use rayon::prelude::*;
    supports
        .par_bridge()
        .map(|s| evaluator.eval(&s))
        .reduce(|| init, combine)
}

#[cfg(not(feature = "parallel"))]
fn fold_supports<I>(
    supports: I,
    evaluator: &SubspaceEvaluator<'_>,
    init: (f64, f64),
    combine: impl Fn((f64, f64), (f64, f64)) -> (f64, f64) + Copy,
) -> (f64, f64)
where
    I: Iterator<Item = Vec<usize>>,
{
    supports.map(|s| evaluator.eval(&s)).fold(init, combine)
}

/// `delta_d = max(rho+ - 1, 1 - rho-)`.
pub fn drip_constant(rho_plus: f64, rho_minus: f64) -> f64 {
    (rho_plus - 1.0).max(1.0 - rho_minus)
}

/// Splits the complement of `t0` into chunks of `l` indices ordered by
/// decreasing `|zh_i|`. Equal magnitudes keep ascending index order; the
/// last chunk may be shorter.
pub fn support_partition(zh: &Vector, t0: &[usize], l: usize) -> Vec<Vec<usize>> {
    assert!(l >= 1, "chunk size must be positive");
    let mut in_t0 = vec![false; zh.len()];
    for &i in t0 {
        in_t0[i] = true;
    }
    let mut rest: Vec<usize> = (0..zh.len()).filter(|&i| !in_t0[i]).collect();
    rest.sort_by(|&a, &b| zh[b].abs().total_cmp(&zh[a].abs()));
    rest.chunks(l).map(|c| c.to_vec()).collect()
}

fn gather(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn complement(len: usize, t0: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; len];
    for &i in t0 {
        mask[i] = true;
    }
    (0..len).filter(|&i| !mask[i]).collect()
}

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + CHECK_SLACK * (1.0 + rhs.abs())
}

/// Cone condition `3 |Z_{T0} h|_1 >= |Z_{T0^c} h|_1`.
pub fn cone_check(z: &Matrix, h: &Vector, t0: &[usize]) -> bool {
    let zh = z * h;
    let on = l1_norm(&gather(&zh, t0));
    let off = l1_norm(&gather(&zh, &complement(zh.len(), t0)));
    holds(off, 3.0 * on)
}

/// One side-by-side inequality `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    fn new(lhs: f64, rhs: f64) -> Self {
        Inequality { lhs, rhs, holds: holds(lhs, rhs) }
    }
}

/// The three solution-level inequalities evaluated at `h = beta_hat - beta*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaChecks {
    /// `|Z_{T0^c} h|_1 <= 3 |Z_{T0} h|_1`.
    pub cone: Inequality,
    /// `sum_{j>=2} |Z_{Tj} h| <= 3 sqrt(s/l) |Z_{T0} h|`.
    pub tail_chunks: Inequality,
    /// `|X h|^2 <= 6 sqrt(s) lambda |Z_{T01} h|`.
    pub fit: Inequality,
}

impl LemmaChecks {
    pub fn all_hold(&self) -> bool {
        self.cone.holds && self.tail_chunks.holds && self.fit.holds
    }
}

pub fn lemma_checks(sf: &SimplifiedForm, h: &Vector, t0: &[usize], l: usize, lambda: f64) -> LemmaChecks {
    let s = t0.len() as f64;
    let zh = &sf.z * h;
    let on = gather(&zh, t0);
    let off_idx = complement(zh.len(), t0);
    let off = gather(&zh, &off_idx);
    let cone = Inequality::new(l1_norm(&off), 3.0 * l1_norm(&on));

    let chunks = support_partition(&zh, t0, l);
    let tail: f64 = chunks.iter().skip(1).map(|c| gather(&zh, c).norm()).sum();
    let tail_chunks = Inequality::new(tail, 3.0 * (s / l as f64).sqrt() * on.norm());

    let mut t01: Vec<usize> = t0.to_vec();
    if let Some(first) = chunks.first() {
        t01.extend_from_slice(first);
    }
    let fit = Inequality::new((&sf.x * h).norm_squared(), 6.0 * s.sqrt() * lambda * gather(&zh, &t01).norm());
    LemmaChecks { cone, tail_chunks, fit }
}

/// `ceil((10 kappa)^2 s)`.
pub fn default_l(kappa: f64, s: usize) -> usize {
    ((10.0 * kappa).powi(2) * s as f64).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub s: usize,
    pub l: usize,
    pub m: usize,
    pub p: usize,
    pub rank_r: usize,
    pub kappa: f64,
    pub lambda: f64,
    pub sigma_min_z: f64,
    pub sigma_max_z: f64,
    /// `sigma_min(A^T A)`, absent without a free part.
    pub sigma_min_ata: Option<f64>,
    pub rho_x: RestrictedExtremes,
    pub rho_bar_sl: Option<RestrictedExtremes>,
    pub rho_bar_l: Option<RestrictedExtremes>,
    pub w_xh1: f64,
    pub w_xh2: f64,
    pub w_d1: f64,
    pub w_d2: f64,
    pub w_sigma: Option<f64>,
    pub w_h: f64,
    pub w_theta: Option<f64>,
    /// `W_{Xh,1} - W_{Xh,2} W_sigma`.
    pub denominator: Option<f64>,
    /// `|(A^T A)^{-1} A^T eps|`.
    pub free_noise: f64,
    /// `|(Z^+)^T X^T eps|_inf <= lambda / 2`.
    pub lambda_rule_ok: bool,
    pub conditions_met: bool,
    pub violations: Vec<String>,
    pub bound_rhs: Option<f64>,
    pub error_norm: f64,
    pub bound_holds: Option<bool>,
    pub lemmas: LemmaChecks,
    pub cone_ok: bool,
    pub tail_ok: bool,
    pub fit_ok: bool,
}

/// Evaluates every quantity of the deterministic error bound for one solved
/// instance with ground truth, using exhaustive restricted extremes.
///
/// `l` may exceed `m - s`; restricted extremes over more than `m` columns of
/// `Z^+` then cover the whole range and the partition has a single chunk.
pub fn bound_report(
    sf: &SimplifiedForm,
    problem: &DictionaryProblem,
    l: usize,
    solve: &SolveResult,
    budget: u64,
) -> Result<TheoryReport> {
    if l == 0 {
        return Err(Error::InvalidArgument("l must be positive".into()));
    }
    let gt = problem
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("error bound needs a ground truth".into()))?;
    let m = sf.m();
    let p = sf.p();
    let free = sf.free_dim();
    let lambda = solve.lambda;
    let t0 = support_of(&(&problem.d * &gt.theta_star));
    let s = t0.len();
    let sqrt_sl = (s as f64 / l as f64).sqrt();
    let smin = sf.sigma_min_z();
    let smax = sf.sigma_max_z();
    let kappa = smax / smin;

    let k_x = (s + l).min(m);
    let k_d1 = (s + l + free).min(m);
    let k_d2 = (l + free).min(m);
    let mut needed = binomial(m, k_x);
    if free > 0 {
        needed = needed.max(binomial(m, k_d1)).max(binomial(m, k_d2));
    }
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }

    let rho_x = restricted_extremes(&sf.x, &sf.z_pinv, 0, k_x, budget, Enumeration::Exhaustive)?;
    let (rho_bar_sl, rho_bar_l, sigma_min_ata) = if free > 0 {
        let ab = sf.ab();
        (
            Some(restricted_extremes(&ab, &sf.z_pinv, free, k_d1, budget, Enumeration::Exhaustive)?),
            Some(restricted_extremes(&ab, &sf.z_pinv, free, k_d2, budget, Enumeration::Exhaustive)?),
            sf.sigma_min_gram(),
        )
    } else {
        (None, None, None)
    };

    let w_xh1 = rho_x.rho_minus;
    let w_xh2 = 6.0 / smin * rho_x.rho_plus * sqrt_sl;
    let (w_d1, w_d2) = match (rho_bar_sl, rho_bar_l, sigma_min_ata) {
        (Some(a), Some(b), Some(g)) => (
            0.5 / g * (a.rho_plus - a.rho_minus),
            1.5 / g / smin * sqrt_sl * (b.rho_plus - b.rho_minus),
        ),
        _ => (0.0, 0.0),
    };
    let sigma_den = smin - 3.0 * sqrt_sl * smax;
    let w_sigma = (sigma_den > 0.0).then(|| smax * smin / sigma_den);
    let w_h = 3.0 * sqrt_sl / smin;
    let denominator = w_sigma.map(|ws| w_xh1 - w_xh2 * ws);

    let mut violations = Vec::new();
    if !(l as f64 > 9.0 * kappa * kappa * s as f64) {
        violations.push(format!("l = {l} does not exceed 9 kappa^2 s = {:.6}", 9.0 * kappa * kappa * s as f64));
    }
    if w_sigma.is_none() {
        violations.push(format!("sigma_min(Z) - 3 sqrt(s/l) sigma_max(Z) = {sigma_den:e} <= 0"));
    }
    if let Some(den) = denominator {
        if !(den > 0.0) {
            violations.push(format!("W_Xh1 - W_Xh2 W_sigma = {den:e} <= 0"));
        }
    }
    let conditions_met = violations.is_empty();
    let w_theta = match (conditions_met, w_sigma, denominator) {
        (true, Some(ws), Some(den)) => Some(6.0 * ((1.0 + w_d1) * ws + (w_h + w_d2) * ws * ws) / den),
        _ => None,
    };

    let free_noise = if free > 0 { sf.free_part_of(&gt.epsilon).norm() } else { 0.0 };
    let bound_rhs = w_theta.map(|wt| wt * (s as f64).sqrt() * lambda + free_noise);
    let error_norm = (&solve.theta_hat - &gt.theta_star).norm();
    let bound_holds = bound_rhs.map(|b| error_norm <= b);

    let noise_corr = linf_norm(&(sf.z_pinv.transpose() * (sf.x.transpose() * &gt.epsilon)));
    let lambda_rule_ok = noise_corr <= 0.5 * lambda * (1.0 + 1e-12);

    let (_, beta_star) = sf.split(&gt.theta_star);
    let beta_hat = match &solve.beta_hat {
        Some(b) => b.clone(),
        None => sf.split(&solve.theta_hat).1,
    };
    let h = beta_hat - beta_star;
    let lemmas = lemma_checks(sf, &h, &t0, l, lambda);

    Ok(TheoryReport {
        s,
        l,
        m,
        p,
        rank_r: sf.rank_r,
        kappa,
        lambda,
        sigma_min_z: smin,
        sigma_max_z: smax,
        sigma_min_ata,
        rho_x,
        rho_bar_sl,
        rho_bar_l,
        w_xh1,
        w_xh2,
        w_d1,
        w_d2,
        w_sigma,
        w_h,
        w_theta,
        denominator,
        free_noise,
        lambda_rule_ok,
        conditions_met,
        violations,
        bound_rhs,
        error_norm,
        bound_holds,
        cone_ok: lemmas.cone.holds,
        tail_ok: lemmas.tail_chunks.holds,
        fit_ok: lemmas.fit.holds,
        lemmas,
    })
}

/// Tries `l = l_start * 10^k` for `k = 0..tries` and returns the first report
/// whose hypotheses hold, or the last one computed.
pub fn bound_search(
    sf: &SimplifiedForm,
    problem: &DictionaryProblem,
    l_start: usize,
    tries: u32,
    solve: &SolveResult,
    budget: u64,
) -> Result<TheoryReport> {
    let mut last = None;
    for k in 0..tries.max(1) {
        let l = l_start.saturating_mul(10usize.saturating_pow(k));
        let report = bound_report(sf, problem, l, solve, budget)?;
        if report.conditions_met {
            return Ok(report);
        }
        last = Some(report);
    }
    Ok(last.expect("at least one attempt"))
}
