//! ADMM solver for `min 1/2 |M x - t|^2 + lambda |L x|_1`.
//!
//! The full problem uses `(M, t, L) = (Phi, c, D)` and solves the x-update
//! with a Cholesky factor of `Phi^T Phi + rho D^T D`, refreshed whenever
//! `rho` changes. The reduced problem uses `(X, y, Z)`; since
//! `Z^T Z = Sigma^2` is diagonal, its x-update goes through one spectral
//! factorization of `Sigma^{-1} X^T X Sigma^{-1}` that is valid for every
//! `rho` and stays accurate when `rho` is tiny.
//!
//! Periodically, and once more at the end, the sign pattern of `w` seeds a
//! short active-set refinement that solves the problem exactly on a face;
//! the refined point replaces the iterate only when it comes with a valid
//! dual certificate and does not increase the objective.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{linf_norm, min_norm_solve, orthonormal_complement, Matrix, Vector};
use crate::problem::{null_space, select_rows, DictionaryProblem};
use crate::simplify::{assemble_theta, recover_alpha, SimplifiedForm};

/// Iterations between two residual-balancing checks.
const ADAPT_INTERVAL: usize = 5;
const BALANCE_RATIO: f64 = 10.0;
const RHO_FACTOR: f64 = 2.0;
/// Optimality residual a polished point must reach.
const POLISH_TOL: f64 = 1e-9;
/// Iterations between two refinement attempts.
const POLISH_INTERVAL: usize = 100;
/// Face changes allowed within one refinement attempt.
const ACTIVE_SET_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub rho: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub over_relaxation: f64,
    /// Enables residual balancing of `rho`.
    pub adaptive_rho: bool,
    /// Refines the ADMM point on its active set; kept only when it passes
    /// the optimality certificate.
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rho: 1.0,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_iters: 50_000,
            over_relaxation: 1.6,
            adaptive_rho: true,
            polish: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidArgument("rho must be positive".into()));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(1.0..=1.8).contains(&self.over_relaxation) {
            return Err(Error::InvalidArgument("over_relaxation must lie in [1, 1.8]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub theta_hat: Vector,
    pub beta_hat: Option<Vector>,
    pub alpha_hat: Option<Vector>,
    /// Dual certificate `g` with `|g|_inf <= 1`, scaled so that
    /// `M^T (M x - t) + lambda L^T g ~ 0`.
    pub subgradient: Vector,
    pub lambda: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `|M^T (M x - t) + lambda L^T g| / (1 + |M^T t|)`.
    pub optimality_residual: f64,
    pub objective: f64,
    pub rho_final: f64,
    /// Stopping rule met, or the polished point certified optimal.
    pub converged: bool,
    /// Whether `theta_hat` is the polished point.
    pub polished: bool,
}

/// JSON-friendly view of a [`SolveResult`] without the large vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub lambda: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub optimality_residual: f64,
    pub objective: f64,
    pub rho_final: f64,
    pub converged: bool,
    pub polished: bool,
    pub theta_hat: Vec<f64>,
}

impl SolveResult {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            lambda: self.lambda,
            iterations: self.iterations,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            optimality_residual: self.optimality_residual,
            objective: self.objective,
            rho_final: self.rho_final,
            converged: self.converged,
            polished: self.polished,
            theta_hat: self.theta_hat.iter().copied().collect(),
        }
    }
}

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// `1/2 |Phi theta - c|^2 + lambda |D theta|_1`.
pub fn objective(problem: &DictionaryProblem, theta: &Vector) -> f64 {
    let fit = (&problem.phi * theta - &problem.c).norm_squared();
    let pen: f64 = (&problem.d * theta).iter().map(|x| x.abs()).sum();
    0.5 * fit + problem.lambda * pen
}

/// `c_mult * |(Z^+)^T X^T eps|_inf`.
pub fn oracle_lambda(sf: &SimplifiedForm, epsilon: &Vector, c_mult: f64) -> Result<f64> {
    if epsilon.len() != sf.n() {
        return Err(Error::DimensionMismatch("oracle_lambda: noise length".into()));
    }
    if !(c_mult > 0.0 && c_mult.is_finite()) {
        return Err(Error::InvalidArgument("c_mult must be positive".into()));
    }
    let corr = sf.z_pinv.transpose() * (sf.x.transpose() * epsilon);
    Ok(c_mult * linf_norm(&corr))
}

/// Optimality residual of `x` for a given certificate `g`.
pub fn stationarity_residual(design: &Matrix, target: &Vector, op: &Matrix, lambda: f64, x: &Vector, g: &Vector) -> f64 {
    let grad = design.transpose() * (design * x - target) + op.transpose() * g * lambda;
    grad.norm() / (1.0 + (design.transpose() * target).norm())
}

trait XUpdate {
    fn set_rho(&mut self, rho: f64) -> Result<()>;
    fn solve(&self, rhs: &Vector) -> Vector;
}

/// Cholesky factor of `G + rho H`.
struct CholeskyUpdate {
    gram: Matrix,
    reg: Matrix,
    factor: Cholesky<f64, nalgebra::Dyn>,
}

impl CholeskyUpdate {
    fn new(gram: Matrix, reg: Matrix, rho: f64) -> Result<Self> {
        let factor = Self::factor(&gram, &reg, rho)?;
        Ok(CholeskyUpdate { gram, reg, factor })
    }

    fn factor(gram: &Matrix, reg: &Matrix, rho: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        let sys = gram + reg * rho;
        let chol = Cholesky::new(sys).ok_or_else(|| {
            Error::SingularSubproblem("Phi^T Phi + rho D^T D is not positive definite".into())
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if lo * lo <= 1e-14 * hi * hi {
            return Err(Error::SingularSubproblem(format!(
                "x-update system is numerically singular (pivot ratio {:e})",
                (lo / hi).powi(2)
            )));
        }
        Ok(chol)
    }
}

impl XUpdate for CholeskyUpdate {
    fn set_rho(&mut self, rho: f64) -> Result<()> {
        self.factor = Self::factor(&self.gram, &self.reg, rho)?;
        Ok(())
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        self.factor.solve(rhs)
    }
}

/// `(X^T X + rho Sigma^2)^{-1} = Sigma^{-1} W diag(1/(mu + rho)) W^T Sigma^{-1}`
/// where `W diag(mu) W^T` is the eigendecomposition of
/// `Sigma^{-1} X^T X Sigma^{-1}`, obtained from an SVD of `X Sigma^{-1}`.
struct SpectralUpdate {
    inv_sigma: Vector,
    w: Matrix,
    mu: Vector,
    rho: f64,
}

impl SpectralUpdate {
    fn new(x: &Matrix, sigma: &Vector, rho: f64) -> Result<Self> {
        let r = sigma.len();
        let inv_sigma = sigma.map(|s| 1.0 / s);
        let mut scaled = x.clone();
        for j in 0..r {
            scaled.column_mut(j).scale_mut(inv_sigma[j]);
        }
        let (w, mu) = if scaled.nrows() == 0 {
            (Matrix::identity(r, r), Vector::zeros(r))
        } else {
            let svd = scaled.svd(false, true);
            let vt = svd.v_t.expect("v_t requested");
            let k = vt.nrows();
            let head = vt.transpose();
            let mut w = Matrix::zeros(r, r);
            w.columns_mut(0, k).copy_from(&head);
            let mut mu = Vector::zeros(r);
            for i in 0..k {
                mu[i] = svd.singular_values[i].powi(2);
            }
            if k < r {
                let tail = orthonormal_complement(&head)?;
                w.columns_mut(k, r - k).copy_from(&tail);
            }
            (w, mu)
        };
        Ok(SpectralUpdate { inv_sigma, w, mu, rho })
    }
}

impl XUpdate for SpectralUpdate {
    fn set_rho(&mut self, rho: f64) -> Result<()> {
        self.rho = rho;
        Ok(())
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        let scaled = rhs.component_mul(&self.inv_sigma);
        let mut coef = self.w.transpose() * scaled;
        for (c, m) in coef.iter_mut().zip(self.mu.iter()) {
            *c /= m + self.rho;
        }
        (&self.w * coef).component_mul(&self.inv_sigma)
    }
}

struct AdmmOutput {
    x: Vector,
    g: Vector,
    iterations: usize,
    primal: f64,
    dual: f64,
    rho: f64,
    converged: bool,
    polished: bool,
}

fn penalized_objective(design: &Matrix, target: &Vector, op: &Matrix, lambda: f64, x: &Vector) -> f64 {
    0.5 * (design * x - target).norm_squared() + lambda * (op * x).abs().sum()
}

fn admm(
    design: &Matrix,
    target: &Vector,
    op: &Matrix,
    lambda: f64,
    opts: &SolveOptions,
    system: &mut dyn XUpdate,
) -> Result<AdmmOutput> {
    let k = design.ncols();
    let m = op.nrows();
    let mt = design.transpose() * target;
    let op_t = op.transpose();
    let alpha = opts.over_relaxation;
    let mut rho = opts.rho;
    let mut x = Vector::zeros(k);
    let mut w = Vector::zeros(m);
    let mut u = Vector::zeros(m);
    let (mut primal, mut dual) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;
    let sqrt_m = (m as f64).sqrt();
    let sqrt_k = (k as f64).sqrt();
    let polished_output = |x: Vector, g: Vector, it, primal, dual, rho| AdmmOutput {
        x,
        g,
        iterations: it,
        primal,
        dual,
        rho,
        converged: true,
        polished: true,
    };
    // accepts a certified point that does not increase the objective
    let try_polish = |x: &Vector, w: &Vector| -> Option<(Vector, Vector)> {
        let (xp, g) = polish(design, target, op, lambda, w)?;
        let f_admm = penalized_objective(design, target, op, lambda, x);
        let f_pol = penalized_objective(design, target, op, lambda, &xp);
        (f_pol <= f_admm + 1e-12 * (1.0 + f_admm.abs())).then_some((xp, g))
    };

    for it in 1..=opts.max_iters {
        iterations = it;
        let rhs = &mt + &op_t * (&w - &u) * rho;
        x = system.solve(&rhs);
        let lx = op * &x;
        let lx_hat = &lx * alpha + &w * (1.0 - alpha);
        let w_old = std::mem::replace(&mut w, Vector::zeros(m));
        let tau = lambda / rho;
        let v = &lx_hat + &u;
        w = v.map(|vi| soft_threshold(vi, tau));
        u = v - &w;

        primal = (&lx - &w).norm();
        dual = rho * (&op_t * (&w - &w_old)).norm();
        let pri_scale = lx.norm().max(w.norm());
        let dual_scale = rho * (&op_t * &u).norm();
        let eps_pri = sqrt_m * opts.abs_tol + opts.rel_tol * pri_scale;
        let eps_dual = sqrt_k * opts.abs_tol + opts.rel_tol * dual_scale;
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
        if opts.polish && it % POLISH_INTERVAL == 0 && x.iter().all(|v| v.is_finite()) {
            if let Some((xp, g)) = try_polish(&x, &w) {
                return Ok(polished_output(xp, g, it, primal, dual, rho));
            }
        }

        if opts.adaptive_rho && it % ADAPT_INTERVAL == 0 && it < opts.max_iters / 2 {
            let rp = primal / pri_scale.max(f64::MIN_POSITIVE);
            let rd = dual / dual_scale.max(f64::MIN_POSITIVE);
            let new_rho = if rp > BALANCE_RATIO * rd {
                rho * RHO_FACTOR
            } else if rd > BALANCE_RATIO * rp {
                rho / RHO_FACTOR
            } else {
                rho
            };
            if new_rho != rho && new_rho.is_normal() {
                u *= rho / new_rho;
                rho = new_rho;
                system.set_rho(rho)?;
            }
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("ADMM iterates diverged".into()));
    }
    if opts.polish {
        if let Some((xp, g)) = try_polish(&x, &w) {
            return Ok(polished_output(xp, g, iterations, primal, dual, rho));
        }
    }
    let g = (&u * (rho / lambda)).map(|gi| gi.clamp(-1.0, 1.0));
    Ok(AdmmOutput { x, g, iterations, primal, dual, rho, converged, polished: false })
}

/// Minimizer of `1/2 |M x - t|^2 + lambda s^T L_S x` subject to `L_E x = 0`,
/// where `S` holds the rows with nonzero `pattern` and `s` their signs.
fn face_minimizer(design: &Matrix, target: &Vector, op: &Matrix, lambda: f64, pattern: &[f64]) -> Option<Vector> {
    let p = op.ncols();
    let active: Vec<usize> = (0..pattern.len()).filter(|&i| pattern[i] != 0.0).collect();
    let inactive: Vec<usize> = (0..pattern.len()).filter(|&i| pattern[i] == 0.0).collect();
    let signs = Vector::from_iterator(active.len(), active.iter().map(|&i| pattern[i]));
    let basis = if inactive.is_empty() { Matrix::identity(p, p) } else { null_space(&select_rows(op, &inactive)) };
    if basis.ncols() == 0 {
        return Some(Vector::zeros(p));
    }
    let linear = design.transpose() * target - select_rows(op, &active).transpose() * signs * lambda;
    let mb = design * &basis;
    let z = Cholesky::new(mb.transpose() * &mb)?.solve(&(basis.transpose() * linear));
    Some(basis * z)
}

/// Active-set refinement started from the sign pattern of `w`.
///
/// Each step solves the problem exactly on the current face, drops rows whose
/// sign disagrees and otherwise adds the row with the largest certificate
/// violation. Returns the point and its certificate once
/// `|g|_inf <= 1` and the optimality residual is below `POLISH_TOL`.
fn polish(design: &Matrix, target: &Vector, op: &Matrix, lambda: f64, w: &Vector) -> Option<(Vector, Vector)> {
    let m = op.nrows();
    let mut pattern: Vec<f64> = w.iter().map(|&v| if v == 0.0 { 0.0 } else { v.signum() }).collect();
    for _ in 0..ACTIVE_SET_STEPS {
        let x = face_minimizer(design, target, op, lambda, &pattern)?;
        let lx = op * &x;
        let mut dropped = false;
        for i in 0..m {
            if pattern[i] != 0.0 && lx[i] * pattern[i] <= 0.0 {
                pattern[i] = 0.0;
                dropped = true;
            }
        }
        if dropped {
            continue;
        }
        let active: Vec<usize> = (0..m).filter(|&i| pattern[i] != 0.0).collect();
        let inactive: Vec<usize> = (0..m).filter(|&i| pattern[i] == 0.0).collect();
        let mut g = Vector::from_iterator(m, pattern.iter().copied());
        if !inactive.is_empty() {
            // lambda L_E^T g_E = -(M^T (M x - t) + lambda L_S^T s_S)
            let s = Vector::from_iterator(active.len(), active.iter().map(|&i| pattern[i]));
            let r = design.transpose() * (design * &x - target) + select_rows(op, &active).transpose() * s * lambda;
            let g_e = min_norm_solve(&select_rows(op, &inactive).transpose(), &(-r / lambda)).ok()?;
            let (worst, size) = g_e.iter().enumerate().fold((0, 0.0f64), |acc, (k, v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc });
            if size > 1.0 + POLISH_TOL {
                pattern[inactive[worst]] = g_e[worst].signum();
                continue;
            }
            for (k, &i) in inactive.iter().enumerate() {
                g[i] = g_e[k].clamp(-1.0, 1.0);
            }
        }
        if stationarity_residual(design, target, op, lambda, &x, &g) > POLISH_TOL {
            return None;
        }
        return Some((x, g));
    }
    None
}

/// Solves the full problem in `theta`.
pub fn solve_full(problem: &DictionaryProblem, opts: &SolveOptions) -> Result<SolveResult> {
    problem.validate()?;
    opts.validate()?;
    let lambda = problem.lambda;
    if lambda == 0.0 {
        let theta = min_norm_solve(&problem.phi, &problem.c)?;
        return Ok(SolveResult {
            objective: objective(problem, &theta),
            optimality_residual: stationarity_residual(
                &problem.phi,
                &problem.c,
                &problem.d,
                0.0,
                &theta,
                &Vector::zeros(problem.m()),
            ),
            theta_hat: theta,
            beta_hat: None,
            alpha_hat: None,
            subgradient: Vector::zeros(problem.m()),
            lambda,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            rho_final: opts.rho,
            converged: true,
            polished: false,
        });
    }
    let gram = problem.phi.transpose() * &problem.phi;
    let reg = problem.d.transpose() * &problem.d;
    let mut system = CholeskyUpdate::new(gram, reg, opts.rho)?;
    let out = admm(&problem.phi, &problem.c, &problem.d, lambda, opts, &mut system)?;
    let optimality_residual = stationarity_residual(&problem.phi, &problem.c, &problem.d, lambda, &out.x, &out.g);
    Ok(SolveResult {
        objective: objective(problem, &out.x),
        theta_hat: out.x,
        beta_hat: None,
        alpha_hat: None,
        subgradient: out.g,
        lambda,
        iterations: out.iterations,
        primal_residual: out.primal,
        dual_residual: out.dual,
        optimality_residual,
        rho_final: out.rho,
        converged: out.converged,
        polished: out.polished,
    })
}

/// Solves the reduced problem in `beta`, then recovers `alpha` and `theta`.
pub fn solve_simplified(sf: &SimplifiedForm, lambda: f64, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be finite and >= 0".into()));
    }
    let (beta, g, iterations, primal, dual, rho, converged, polished) = if lambda == 0.0 {
        let beta = min_norm_solve(&sf.x, &sf.y)?;
        (beta, Vector::zeros(sf.m()), 0, 0.0, 0.0, opts.rho, true, false)
    } else {
        let mut system = SpectralUpdate::new(&sf.x, &sf.sigma, opts.rho)?;
        let out = admm(&sf.x, &sf.y, &sf.z, lambda, opts, &mut system)?;
        (out.x, out.g, out.iterations, out.primal, out.dual, out.rho, out.converged, out.polished)
    };
    let alpha = recover_alpha(sf, &beta, &sf.c)?;
    let theta = assemble_theta(sf, &alpha, &beta)?;
    let mut fit = &sf.b * &beta - &sf.c;
    if sf.free_dim() > 0 {
        fit += &sf.a * &alpha;
    }
    let pen: f64 = (&sf.z * &beta).iter().map(|x| x.abs()).sum();
    Ok(SolveResult {
        objective: 0.5 * fit.norm_squared() + lambda * pen,
        optimality_residual: stationarity_residual(&sf.x, &sf.y, &sf.z, lambda, &beta, &g),
        theta_hat: theta,
        beta_hat: Some(beta),
        alpha_hat: Some(alpha),
        subgradient: g,
        lambda,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        rho_final: rho,
        converged,
        polished,
    })
}
