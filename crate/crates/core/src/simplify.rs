//! Reduction of the problem in `theta` to one in the penalized coordinates
//! `beta`, with the unpenalized coordinates `alpha` eliminated by least
//! squares.
//!
//! With `D = U Sigma V_beta^T` and `V = [V_alpha V_beta]` unitary:
//!
//! ```text
//! A = Phi V_alpha,  B = Phi V_beta,  Z = U Sigma,  Z^+ = Sigma^{-1} U^T
//! P = I - A (A^T A)^{-1} A^T,  X = P B,  y = P c
//! f(beta) = 1/2 |X beta - y|^2 + lambda |Z beta|_1
//! alpha = -(A^T A)^{-1} A^T (B beta - c),  theta = V_alpha alpha + V_beta beta
//! ```

use crate::error::{Error, Result};
use crate::linalg::{compact_svd, orthonormal_complement, GramFactor, Matrix, Vector};
use crate::problem::DictionaryProblem;

#[derive(Debug, Clone)]
pub struct SimplifiedForm {
    pub v_alpha: Matrix,
    pub v_beta: Matrix,
    /// Nonzero singular values of `D`, nonincreasing.
    pub sigma: Vector,
    pub z: Matrix,
    pub z_pinv: Matrix,
    pub a: Matrix,
    pub b: Matrix,
    pub x: Matrix,
    pub y: Vector,
    /// Observation vector of the original problem (needed to recover `alpha`).
    pub c: Vector,
    pub rank_r: usize,
    gram: GramFactor,
}

pub fn simplify(problem: &DictionaryProblem) -> Result<SimplifiedForm> {
    problem.validate()?;
    let svd = compact_svd(&problem.d, None)?;
    let v_beta = svd.v.clone();
    let v_alpha = orthonormal_complement(&v_beta)?;
    let a = &problem.phi * &v_alpha;
    let b = &problem.phi * &v_beta;
    let gram = GramFactor::with_scale(&a, problem.phi.norm())?;
    let x = gram.project_out_matrix(&b);
    let y = gram.project_out(&problem.c);
    Ok(SimplifiedForm {
        z: svd.z(),
        z_pinv: svd.z_pinv(),
        sigma: svd.sigma.clone(),
        rank_r: svd.rank,
        v_alpha,
        v_beta,
        a,
        b,
        x,
        y,
        c: problem.c.clone(),
        gram,
    })
}

impl SimplifiedForm {
    pub fn p(&self) -> usize {
        self.v_beta.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.z.nrows()
    }

    /// Dimension of the free part, `p - r`.
    pub fn free_dim(&self) -> usize {
        self.v_alpha.ncols()
    }

    pub fn sigma_max_z(&self) -> f64 {
        self.sigma[0]
    }

    pub fn sigma_min_z(&self) -> f64 {
        self.sigma[self.rank_r - 1]
    }

    pub fn kappa(&self) -> f64 {
        self.sigma_max_z() / self.sigma_min_z()
    }

    /// `sigma_min(A^T A)`, or `None` when there is no free part.
    pub fn sigma_min_gram(&self) -> Option<f64> {
        self.gram.sigma_min_gram()
    }

    /// `P v` without forming `P`.
    pub fn project(&self, v: &Vector) -> Vector {
        self.gram.project_out(v)
    }

    /// Explicit `n x n` projector (diagnostics only).
    pub fn projector(&self) -> Matrix {
        let n = self.n();
        self.gram.project_out_matrix(&Matrix::identity(n, n))
    }

    /// `(A^T A)^{-1} A^T v`.
    pub fn free_part_of(&self, v: &Vector) -> Vector {
        self.gram.solve_normal(v)
    }

    /// `(V_alpha^T theta, V_beta^T theta)`.
    pub fn split(&self, theta: &Vector) -> (Vector, Vector) {
        (self.v_alpha.transpose() * theta, self.v_beta.transpose() * theta)
    }

    /// `[A, B] = Phi V`, the design in rotated coordinates.
    pub fn ab(&self) -> Matrix {
        let n = self.n();
        let (k, r) = (self.a.ncols(), self.b.ncols());
        Matrix::from_fn(n, k + r, |i, j| if j < k { self.a[(i, j)] } else { self.b[(i, j - k)] })
    }

    /// The reduced objective `1/2 |X beta - y|^2 + lambda |Z beta|_1`.
    pub fn objective(&self, beta: &Vector, lambda: f64) -> f64 {
        0.5 * (&self.x * beta - &self.y).norm_squared()
            + lambda * (&self.z * beta).iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// `alpha = -(A^T A)^{-1} A^T (B beta - c)`.
pub fn recover_alpha(sf: &SimplifiedForm, beta_hat: &Vector, c: &Vector) -> Result<Vector> {
    if beta_hat.len() != sf.rank_r || c.len() != sf.n() {
        return Err(Error::DimensionMismatch("recover_alpha: beta or c has wrong length".into()));
    }
    if sf.free_dim() == 0 {
        return Ok(Vector::zeros(0));
    }
    let residual = c - &sf.b * beta_hat;
    Ok(sf.gram.solve_normal(&residual))
}

/// `theta = V_alpha alpha + V_beta beta`.
pub fn assemble_theta(sf: &SimplifiedForm, alpha_hat: &Vector, beta_hat: &Vector) -> Result<Vector> {
    if alpha_hat.len() != sf.free_dim() || beta_hat.len() != sf.rank_r {
        return Err(Error::DimensionMismatch("assemble_theta: part lengths".into()));
    }
    let mut theta = &sf.v_beta * beta_hat;
    if sf.free_dim() > 0 {
        theta += &sf.v_alpha * alpha_hat;
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{least_squares, orthonormality_defect};
    use crate::rng;

    fn rank_deficient_instance(seed: u64) -> DictionaryProblem {
        // n=8, p=5, rank(D)=3
        let mut r = rng::stream(seed);
        let left = rng::gaussian_matrix(&mut r, 6, 3);
        let right = rng::gaussian_matrix(&mut r, 3, 5);
        let d = left * right;
        let phi = rng::gaussian_matrix(&mut r, 8, 5);
        let c = rng::gaussian_vector(&mut r, 8);
        DictionaryProblem::new(phi, c, d, 0.3).unwrap()
    }

    #[test]
    fn identity_dictionary_is_full_rank() {
        let mut r = rng::stream(1);
        let phi = rng::gaussian_matrix(&mut r, 6, 4);
        let c = rng::gaussian_vector(&mut r, 6);
        let pr = DictionaryProblem::new(phi.clone(), c.clone(), Matrix::identity(4, 4), 1.0).unwrap();
        let sf = simplify(&pr).unwrap();
        assert_eq!(sf.rank_r, 4);
        assert_eq!(sf.v_alpha.ncols(), 0);
        assert!(orthonormality_defect(&sf.v_beta) < 1e-12);
        assert!((&sf.x - &phi * &sf.v_beta).abs().max() < 1e-12);
        assert_eq!(sf.y, c);
    }

    #[test]
    fn objective_equivalence_rank_deficient() {
        let pr = rank_deficient_instance(3);
        let sf = simplify(&pr).unwrap();
        assert_eq!(sf.rank_r, 3);
        let mut r = rng::stream(99);
        for _ in 0..10 {
            let beta = rng::gaussian_vector(&mut r, 3);
            // inner minimization over alpha solved independently
            let alpha = least_squares(&sf.a, &(&pr.c - &sf.b * &beta)).unwrap();
            let full = 0.5 * (&sf.a * &alpha + &sf.b * &beta - &pr.c).norm_squared();
            let reduced = 0.5 * (&sf.x * &beta - &sf.y).norm_squared();
            assert!((full - reduced).abs() <= 1e-10 * (1.0 + full), "{full} vs {reduced}");
        }
    }

    #[test]
    fn pinv_and_projector_identities() {
        let sf = simplify(&rank_deficient_instance(5)).unwrap();
        let zz = &sf.z_pinv * &sf.z;
        assert!((zz - Matrix::identity(3, 3)).abs().max() < 1e-10);
        let p = sf.projector();
        assert!((&p * &p - &p).norm() < 1e-10);
        assert!((&p - p.transpose()).norm() < 1e-12);
    }

    #[test]
    fn recover_alpha_exact_fit() {
        let sf = simplify(&rank_deficient_instance(7)).unwrap();
        let alpha0 = Vector::from_vec(vec![0.7, -1.1]);
        let c = &sf.a * &alpha0;
        let alpha = recover_alpha(&sf, &Vector::zeros(3), &c).unwrap();
        assert!((alpha - alpha0).norm() < 1e-10);
    }

    #[test]
    fn recover_alpha_matches_least_squares() {
        let pr = rank_deficient_instance(8);
        let sf = simplify(&pr).unwrap();
        let beta = Vector::from_vec(vec![0.2, 1.0, -0.5]);
        let alpha = recover_alpha(&sf, &beta, &pr.c).unwrap();
        let reference = least_squares(&sf.a, &(&pr.c - &sf.b * &beta)).unwrap();
        assert!((&alpha - reference).norm() < 1e-10);
        let normal = sf.a.transpose() * (&sf.a * &alpha + &sf.b * &beta - &pr.c);
        assert!(normal.norm() < 1e-10);
    }

    #[test]
    fn recover_alpha_without_free_part() {
        let mut r = rng::stream(2);
        let pr = DictionaryProblem::new(
            rng::gaussian_matrix(&mut r, 5, 3),
            rng::gaussian_vector(&mut r, 5),
            Matrix::identity(3, 3),
            0.1,
        )
        .unwrap();
        let sf = simplify(&pr).unwrap();
        assert_eq!(recover_alpha(&sf, &Vector::zeros(3), &pr.c).unwrap().len(), 0);
    }

    #[test]
    fn assemble_roundtrip() {
        let sf = simplify(&rank_deficient_instance(11)).unwrap();
        let mut r = rng::stream(12);
        assert_eq!(assemble_theta(&sf, &Vector::zeros(2), &Vector::zeros(3)).unwrap(), Vector::zeros(5));
        for _ in 0..20 {
            let theta = rng::gaussian_vector(&mut r, 5);
            let (a, b) = sf.split(&theta);
            let back = assemble_theta(&sf, &a, &b).unwrap();
            assert!((back - &theta).norm() < 1e-12);
        }
    }

    #[test]
    fn underdetermined_free_part_is_singular() {
        // p - r = 4 free directions but only n = 3 measurements
        let mut r = rng::stream(4);
        let d = Matrix::from_row_slice(1, 5, &[1.0, -1.0, 0.0, 0.0, 0.0]);
        let pr = DictionaryProblem::new(rng::gaussian_matrix(&mut r, 3, 5), rng::gaussian_vector(&mut r, 3), d, 1.0).unwrap();
        assert!(matches!(simplify(&pr), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn design_blind_to_free_part_is_singular() {
        // Phi annihilates the constant vector spanning the null space of D
        let phi = Matrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        let d = crate::dictionaries::difference_matrix_1d(3).unwrap();
        let pr = DictionaryProblem::new(phi, Vector::from_vec(vec![1.0, 2.0]), d, 1.0).unwrap();
        assert!(matches!(simplify(&pr), Err(Error::SingularGram { .. })));
    }
}
