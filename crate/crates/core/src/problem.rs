//! Problem instances `min 1/2 |Phi theta - c|^2 + lambda |D theta|_1` and
//! their synthetic generation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dictionaries::{has_zero_row, DictionarySpec};
use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, linf_norm, Matrix, Vector};
use crate::rng::{self, Stream};

/// Relative threshold under which an entry of `D theta*` counts as zero.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub theta_star: Vector,
    pub epsilon: Vector,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryProblem {
    pub phi: Matrix,
    pub c: Vector,
    pub d: Matrix,
    pub lambda: f64,
    pub ground_truth: Option<GroundTruth>,
}

impl DictionaryProblem {
    pub fn new(phi: Matrix, c: Vector, d: Matrix, lambda: f64) -> Result<Self> {
        let problem = DictionaryProblem { phi, c, d, lambda, ground_truth: None };
        problem.validate()?;
        Ok(problem)
    }

    /// Builds `c = Phi theta* + epsilon` from the ground truth.
    pub fn from_ground_truth(
        phi: Matrix,
        d: Matrix,
        lambda: f64,
        theta_star: Vector,
        epsilon: Vector,
        noise_sigma: f64,
    ) -> Result<Self> {
        if theta_star.len() != phi.ncols() || epsilon.len() != phi.nrows() {
            return Err(Error::DimensionMismatch("ground truth does not match Phi".into()));
        }
        let c = &phi * &theta_star + &epsilon;
        let problem = DictionaryProblem {
            phi,
            c,
            d,
            lambda,
            ground_truth: Some(GroundTruth { theta_star, epsilon, noise_sigma }),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.phi.shape();
        if self.c.len() != n {
            return Err(Error::DimensionMismatch(format!("c has length {}, Phi has {n} rows", self.c.len())));
        }
        if self.d.ncols() != p {
            return Err(Error::DimensionMismatch(format!("D has {} columns, Phi has {p}", self.d.ncols())));
        }
        if self.d.nrows() == 0 {
            return Err(Error::InvalidArgument("D has no rows".into()));
        }
        ensure_finite(&self.phi, "Phi")?;
        ensure_finite(&self.d, "D")?;
        if !self.c.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("c".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda = {}, need finite lambda >= 0", self.lambda)));
        }
        if has_zero_row(&self.d) {
            return Err(Error::InvalidArgument("D contains a zero row".into()));
        }
        if let Some(gt) = &self.ground_truth {
            if gt.theta_star.len() != p || gt.epsilon.len() != n {
                return Err(Error::DimensionMismatch("ground truth lengths".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn p(&self) -> usize {
        self.phi.ncols()
    }

    pub fn m(&self) -> usize {
        self.d.nrows()
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        DictionaryProblem { lambda, ..self.clone() }
    }

    /// Support of `D theta*`, if a ground truth is attached.
    pub fn true_support(&self) -> Option<Vec<usize>> {
        self.ground_truth.as_ref().map(|gt| support_of(&(&self.d * &gt.theta_star)))
    }
}

/// Indices whose magnitude exceeds `SUPPORT_TOL` times the largest magnitude.
pub fn support_of(v: &Vector) -> Vec<usize> {
    let scale = linf_norm(v);
    if scale == 0.0 {
        return Vec::new();
    }
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() > SUPPORT_TOL * scale)
        .map(|(i, _)| i)
        .collect()
}

/// `theta* = D^{-1} x` where `x` has i.i.d. standard normal entries in its
/// first `s` coordinates and zeros elsewhere. `D` must be square invertible.
pub fn leading_sparse_signal(d: &Matrix, s: usize, rng: &mut Stream) -> Result<Vector> {
    let p = d.ncols();
    if d.nrows() != p {
        return Err(Error::DimensionMismatch("leading_sparse_signal needs a square D".into()));
    }
    let s = s.min(p);
    let mut x = Vector::zeros(p);
    for i in 0..s {
        x[i] = rng::gaussian(rng);
    }
    d.clone()
        .lu()
        .solve(&x)
        .ok_or_else(|| Error::SingularSubproblem("D is not invertible".into()))
}

/// Random signal whose image `D theta` vanishes on a cosupport of
/// `m - s` rows, chosen greedily in a random order so that the null space of
/// the cosupport rows stays nontrivial.
pub fn cosparse_signal(d: &Matrix, s: usize, rng: &mut Stream) -> Result<Vector> {
    let (m, p) = d.shape();
    let target = m.saturating_sub(s);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let mut chosen: Vec<usize> = Vec::new();
    for &row in &order {
        if chosen.len() == target {
            break;
        }
        chosen.push(row);
        if null_space(&select_rows(d, &chosen)).ncols() == 0 {
            chosen.pop();
        }
    }
    let basis = if chosen.is_empty() {
        Matrix::identity(p, p)
    } else {
        null_space(&select_rows(d, &chosen))
    };
    let g = rng::gaussian_vector(rng, basis.ncols());
    Ok(basis * g)
}

pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Orthonormal basis of `{v : M v = 0}`.
pub fn null_space(m: &Matrix) -> Matrix {
    let p = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = 1e-10 * smax.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&x| x > tol).count();
    if rank == p {
        return Matrix::zeros(p, 0);
    }
    // complete the row space basis to all of R^p
    let rows: Vec<usize> = (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > tol).collect();
    let row_basis = Matrix::from_fn(p, rows.len(), |i, j| vt[(rows[j], i)]);
    crate::linalg::orthonormal_complement(&row_basis).unwrap_or_else(|_| Matrix::zeros(p, 0))
}

/// Measurement design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    Gaussian,
    /// `Phi = I_p`; requires `n = p`.
    Identity,
}

/// How `lambda` is chosen for a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Fixed(f64),
    Rule(LambdaRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// `c_mult * |(Z^+)^T X^T eps|_inf` using the realized noise.
    Oracle,
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Rule(LambdaRule::Oracle)
    }
}

fn default_c_mult() -> f64 {
    2.0
}

/// Recipe for a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub dictionary: DictionarySpec,
    pub n: usize,
    /// Nonzeros of `D theta*`; defaults to `ceil(p / 10)`.
    #[serde(default)]
    pub sparsity: Option<usize>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub lambda: LambdaChoice,
    #[serde(default = "default_c_mult")]
    pub c_mult: f64,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceSpec {
    pub fn sparsity_or_default(&self) -> usize {
        self.sparsity.unwrap_or_else(|| self.dictionary.p().div_ceil(10))
    }
}

/// Draws `Phi`, `theta*` and `epsilon` for `spec` and fixes `lambda`.
///
/// Square invertible dictionaries get the leading-coordinates construction
/// `theta* = D^{-1} x`; all others get a cosparse signal.
pub fn generate_instance(spec: &InstanceSpec) -> Result<DictionaryProblem> {
    let d = spec.dictionary.build()?;
    let p = d.ncols();
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
    }
    let s = spec.sparsity_or_default();
    let mut signal_rng = rng::stream_for(spec.seed, &[1]);
    let mut design_rng = rng::stream_for(spec.seed, &[2]);
    let mut noise_rng = rng::stream_for(spec.seed, &[3]);

    let square_invertible = matches!(
        spec.dictionary,
        DictionarySpec::Identity { .. } | DictionarySpec::Conditioned { .. }
    );
    let theta_star = if square_invertible {
        leading_sparse_signal(&d, s, &mut signal_rng)?
    } else {
        cosparse_signal(&d, s, &mut signal_rng)?
    };
    let phi = match spec.design {
        Design::Gaussian => rng::gaussian_matrix(&mut design_rng, spec.n, p),
        Design::Identity => {
            if spec.n != p {
                return Err(Error::InvalidArgument("identity design needs n = p".into()));
            }
            Matrix::identity(p, p)
        }
    };
    let epsilon = rng::gaussian_vector(&mut noise_rng, spec.n) * spec.noise_sigma;
    let mut problem =
        DictionaryProblem::from_ground_truth(phi, d, 0.0, theta_star, epsilon, spec.noise_sigma)?;
    problem.lambda = match &spec.lambda {
        LambdaChoice::Fixed(l) => *l,
        LambdaChoice::Rule(LambdaRule::Oracle) => {
            let sf = crate::simplify::simplify(&problem)?;
            let eps = &problem.ground_truth.as_ref().expect("ground truth").epsilon;
            crate::solver::oracle_lambda(&sf, eps, spec.c_mult)?
        }
    };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionaries::{difference_matrix_1d, fused_lasso_dictionary};

    #[test]
    fn construction_identity_is_exact() {
        let spec = InstanceSpec {
            dictionary: DictionarySpec::Conditioned { p: 12, kappa: 4.0, seed: 2 },
            n: 10,
            sparsity: None,
            noise_sigma: 0.1,
            design: Design::Gaussian,
            lambda: LambdaChoice::default(),
            c_mult: 2.0,
            seed: 5,
        };
        let pr = generate_instance(&spec).unwrap();
        let gt = pr.ground_truth.as_ref().unwrap();
        assert_eq!(pr.c, &pr.phi * &gt.theta_star + &gt.epsilon);
        assert_eq!(pr.true_support().unwrap(), vec![0, 1]);
        assert!(pr.lambda > 0.0);
        assert_eq!(pr, generate_instance(&spec).unwrap());
    }

    #[test]
    fn cosparse_signal_has_requested_support() {
        let mut rng = rng::stream(4);
        let d = difference_matrix_1d(20).unwrap();
        let theta = cosparse_signal(&d, 3, &mut rng).unwrap();
        assert_eq!(support_of(&(&d * &theta)).len(), 3);

        let d = fused_lasso_dictionary(15, 1.0, 1.0).unwrap();
        let theta = cosparse_signal(&d, 4, &mut rng).unwrap();
        let supp = support_of(&(&d * &theta));
        assert!(!supp.is_empty() && supp.len() <= 4, "{supp:?}");
    }

    #[test]
    fn rejects_zero_rows_and_bad_dims() {
        let mut d = Matrix::identity(3, 3);
        d[(1, 1)] = 0.0;
        assert!(DictionaryProblem::new(Matrix::identity(3, 3), Vector::zeros(3), d, 1.0).is_err());
        assert!(DictionaryProblem::new(Matrix::identity(3, 3), Vector::zeros(2), Matrix::identity(3, 3), 1.0).is_err());
        assert!(DictionaryProblem::new(Matrix::identity(3, 3), Vector::zeros(3), Matrix::identity(3, 3), -1.0).is_err());
    }

    #[test]
    fn instance_spec_json_defaults() {
        let spec: InstanceSpec = serde_json::from_str(
            r#"{"dictionary":{"kind":"identity","p":10},"n":10,"design":"identity","lambda":0.5}"#,
        )
        .unwrap();
        assert_eq!(spec.lambda, LambdaChoice::Fixed(0.5));
        assert_eq!(spec.sparsity_or_default(), 1);
        let spec: InstanceSpec =
            serde_json::from_str(r#"{"dictionary":{"kind":"identity","p":10},"n":4,"lambda":"oracle"}"#).unwrap();
        assert_eq!(spec.lambda, LambdaChoice::Rule(LambdaRule::Oracle));
        assert!(serde_json::from_str::<InstanceSpec>(r#"{"dictionary":{"kind":"identity","p":3},"n":3,"bogus":1}"#).is_err());
    }
}
