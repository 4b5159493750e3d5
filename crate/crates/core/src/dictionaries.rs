//! Constructors for the analysis operators `D`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Serializable description of a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    Identity { p: usize },
    Fused { p: usize, lambda1: f64, lambda2: f64 },
    Difference1d { p: usize },
    GridTv { dims: Vec<usize> },
    RandomGraph { p: usize, m: usize, seed: u64 },
    CompleteGraph { p: usize },
    Conditioned { p: usize, kappa: f64, seed: u64 },
}

impl DictionarySpec {
    /// Number of columns (signal length).
    pub fn p(&self) -> usize {
        match self {
            DictionarySpec::Identity { p }
            | DictionarySpec::Fused { p, .. }
            | DictionarySpec::Difference1d { p }
            | DictionarySpec::RandomGraph { p, .. }
            | DictionarySpec::CompleteGraph { p }
            | DictionarySpec::Conditioned { p, .. } => *p,
            DictionarySpec::GridTv { dims } => dims.iter().product(),
        }
    }

    pub fn build(&self) -> Result<Matrix> {
        match self {
            DictionarySpec::Identity { p } => {
                check_p(*p)?;
                Ok(Matrix::identity(*p, *p))
            }
            DictionarySpec::Fused { p, lambda1, lambda2 } => {
                fused_lasso_dictionary(*p, *lambda1, *lambda2)
            }
            DictionarySpec::Difference1d { p } => difference_matrix_1d(*p),
            DictionarySpec::GridTv { dims } => grid_tv_dictionary(dims),
            DictionarySpec::RandomGraph { p, m, seed } => random_graph_dictionary(*p, *m, *seed),
            DictionarySpec::CompleteGraph { p } => complete_graph_dictionary(*p),
            DictionarySpec::Conditioned { p, kappa, seed } => {
                conditioned_random_dictionary(*p, *kappa, *seed)
            }
        }
    }
}

fn check_p(p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!("signal length p = {p}, need p >= 2")));
    }
    Ok(())
}

/// First-order difference operator: row `k` is `e_k - e_{k+1}`.
pub fn difference_matrix_1d(p: usize) -> Result<Matrix> {
    check_p(p)?;
    let mut q = Matrix::zeros(p - 1, p);
    for k in 0..p - 1 {
        q[(k, k)] = 1.0;
        q[(k, k + 1)] = -1.0;
    }
    Ok(q)
}

/// `[lambda1 I; lambda2 Q]`, shape `(2p-1) x p`.
pub fn fused_lasso_dictionary(p: usize, lambda1: f64, lambda2: f64) -> Result<Matrix> {
    check_p(p)?;
    if !lambda1.is_finite() || !lambda2.is_finite() || lambda1 < 0.0 || lambda2 < 0.0 {
        return Err(Error::InvalidArgument("fused weights must be finite and positive".into()));
    }
    if lambda1 == 0.0 || lambda2 == 0.0 {
        return Err(Error::ZeroWeight);
    }
    let mut d = Matrix::zeros(2 * p - 1, p);
    for i in 0..p {
        d[(i, i)] = lambda1;
    }
    for k in 0..p - 1 {
        d[(p + k, k)] = lambda2;
        d[(p + k, k + 1)] = -lambda2;
    }
    Ok(d)
}

/// Total variation over a K-dimensional grid: one row per axis-aligned pair
/// of neighbours, entries laid out in row-major order (last axis fastest).
///
/// Rows are grouped by axis, so for `dims = [p]` this is exactly
/// [`difference_matrix_1d`].
pub fn grid_tv_dictionary(dims: &[usize]) -> Result<Matrix> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("grid needs at least one axis".into()));
    }
    if let Some(bad) = dims.iter().find(|&&d| d < 2) {
        return Err(Error::InvalidArgument(format!("grid axis length {bad}, need >= 2")));
    }
    let total: usize = dims.iter().product();
    let k = dims.len();
    let mut strides = vec![1usize; k];
    for a in (0..k - 1).rev() {
        strides[a] = strides[a + 1] * dims[a + 1];
    }
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for a in 0..k {
        for idx in 0..total {
            let coord = (idx / strides[a]) % dims[a];
            if coord + 1 < dims[a] {
                rows.push((idx, idx + strides[a]));
            }
        }
    }
    let mut d = Matrix::zeros(rows.len(), total);
    for (r, (i, j)) in rows.into_iter().enumerate() {
        d[(r, i)] = 1.0;
        d[(r, j)] = -1.0;
    }
    Ok(d)
}

/// Random graph incidence matrix with `m` i.i.d. edges on `p` vertices.
///
/// Each row picks an ordered pair of distinct vertices uniformly; the first
/// gets `+1`, the second `-1`. Repeated edges are kept.
pub fn random_graph_dictionary(p: usize, m: usize, seed: u64) -> Result<Matrix> {
    check_p(p)?;
    if m == 0 {
        return Err(Error::InvalidArgument("random graph needs m >= 1 edges".into()));
    }
    let mut rng = rng::stream_for(seed, &[0x0067_7261_7068]);
    let mut d = Matrix::zeros(m, p);
    for k in 0..m {
        let i = rng.random_range(0..p);
        let mut j = rng.random_range(0..p - 1);
        if j >= i {
            j += 1;
        }
        d[(k, i)] = 1.0;
        d[(k, j)] = -1.0;
    }
    Ok(d)
}

/// Incidence matrix of the complete graph `K_p` (all `p(p-1)/2` pairs).
pub fn complete_graph_dictionary(p: usize) -> Result<Matrix> {
    check_p(p)?;
    let m = p * (p - 1) / 2;
    let mut d = Matrix::zeros(m, p);
    let mut k = 0;
    for i in 0..p {
        for j in i + 1..p {
            d[(k, i)] = 1.0;
            d[(k, j)] = -1.0;
            k += 1;
        }
    }
    Ok(d)
}

/// Haar-distributed orthogonal matrix: Q factor of a Gaussian matrix with
/// column signs fixed by the diagonal of R.
pub fn random_orthogonal(rng: &mut rng::Stream, p: usize) -> Matrix {
    let g = rng::gaussian_matrix(rng, p, p);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `D = D0 V` with `V` random orthogonal and `D0` diagonal with entries
/// `kappa^(i/(p-1))`, `i = 0..p-1`, placed in a seeded random order.
///
/// `V` and the placement depend on `seed` only, so dictionaries that share a
/// seed differ only in the spread of `D0`.
pub fn conditioned_random_dictionary(p: usize, kappa: f64, seed: u64) -> Result<Matrix> {
    check_p(p)?;
    if !kappa.is_finite() || kappa < 1.0 {
        return Err(Error::InvalidArgument(format!("kappa = {kappa}, need finite kappa >= 1")));
    }
    let mut rng = rng::stream_for(seed, &[0x636f_6e64]);
    let v = random_orthogonal(&mut rng, p);
    let mut slots: Vec<usize> = (0..p).collect();
    slots.shuffle(&mut rng);
    let mut d = v;
    for (i, &row) in slots.iter().enumerate() {
        let scale = kappa.powf(i as f64 / (p - 1) as f64);
        d.row_mut(row).scale_mut(scale);
    }
    Ok(d)
}

/// True if some row of `d` is identically zero.
pub fn has_zero_row(d: &Matrix) -> bool {
    d.row_iter().any(|r| r.iter().all(|&x| x == 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{condition_number, singular_values, Vector};

    fn is_edge_row(row: &[f64]) -> bool {
        let plus = row.iter().filter(|&&x| x == 1.0).count();
        let minus = row.iter().filter(|&&x| x == -1.0).count();
        let zero = row.iter().filter(|&&x| x == 0.0).count();
        plus == 1 && minus == 1 && zero == row.len() - 2
    }

    #[test]
    fn difference_p3() {
        let q = difference_matrix_1d(3).unwrap();
        assert_eq!(q, Matrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]));
        let q2 = difference_matrix_1d(2).unwrap();
        assert_eq!(q2, Matrix::from_row_slice(1, 2, &[1.0, -1.0]));
        assert!(difference_matrix_1d(1).is_err());
    }

    #[test]
    fn difference_kills_constants() {
        for p in 2..12 {
            let q = difference_matrix_1d(p).unwrap();
            assert_eq!((q * Vector::repeat(p, 1.0)).norm(), 0.0);
        }
    }

    #[test]
    fn fused_small() {
        let d = fused_lasso_dictionary(2, 2.0, 3.0).unwrap();
        assert_eq!(d, Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 2.0, 3.0, -3.0]));
        let d3 = fused_lasso_dictionary(3, 1.0, 1.0).unwrap();
        assert_eq!(d3.rows(0, 3).into_owned(), Matrix::identity(3, 3));
        assert_eq!(d3.rows(3, 2).into_owned(), difference_matrix_1d(3).unwrap());
        assert!(matches!(fused_lasso_dictionary(3, 0.0, 1.0), Err(Error::ZeroWeight)));
        assert!(matches!(fused_lasso_dictionary(3, 1.0, 0.0), Err(Error::ZeroWeight)));
    }

    #[test]
    fn fused_condition_number_at_most_three() {
        for p in [10, 50, 200] {
            let k = condition_number(&fused_lasso_dictionary(p, 1.0, 1.0).unwrap()).unwrap();
            assert!((1.0..=3.0).contains(&k), "p={p}: kappa={k}");
        }
    }

    #[test]
    fn grid_one_axis_matches_difference() {
        assert_eq!(grid_tv_dictionary(&[4]).unwrap(), difference_matrix_1d(4).unwrap());
    }

    #[test]
    fn grid_two_by_two_edges() {
        // brute-force enumeration of neighbouring cells of a 2x2 grid
        let d = grid_tv_dictionary(&[2, 2]).unwrap();
        let mut expected = Vec::new();
        for a in 0..4usize {
            for b in a + 1..4usize {
                let (ra, ca) = (a / 2, a % 2);
                let (rb, cb) = (b / 2, b % 2);
                if ra.abs_diff(rb) + ca.abs_diff(cb) == 1 {
                    expected.push((a, b));
                }
            }
        }
        let mut got: Vec<(usize, usize)> = d
            .row_iter()
            .map(|r| {
                let plus = r.iter().position(|&x| x == 1.0).unwrap();
                let minus = r.iter().position(|&x| x == -1.0).unwrap();
                (plus.min(minus), plus.max(minus))
            })
            .collect();
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
        assert_eq!(d.nrows(), 4);
    }

    #[test]
    fn grid_kills_constants_and_has_edge_rows() {
        for dims in [vec![3, 4], vec![2, 3, 2], vec![5]] {
            let d = grid_tv_dictionary(&dims).unwrap();
            let ones = Vector::repeat(d.ncols(), 1.0);
            assert_eq!((&d * ones).norm(), 0.0);
            for r in d.row_iter() {
                let row: Vec<f64> = r.iter().copied().collect();
                assert!(is_edge_row(&row));
            }
        }
        assert!(grid_tv_dictionary(&[3, 1]).is_err());
    }

    #[test]
    fn random_graph_rows() {
        let d = random_graph_dictionary(7, 40, 11).unwrap();
        for r in d.row_iter() {
            let row: Vec<f64> = r.iter().copied().collect();
            assert!(is_edge_row(&row));
            assert_eq!(row.iter().sum::<f64>(), 0.0);
        }
        assert_eq!(d, random_graph_dictionary(7, 40, 11).unwrap());
        assert_ne!(d, random_graph_dictionary(7, 40, 12).unwrap());
        assert!(!has_zero_row(&d));
    }

    #[test]
    fn complete_graph_k4_is_isotropic() {
        // Laplacian of K4 has eigenvalues {0, 4, 4, 4}
        let d = complete_graph_dictionary(4).unwrap();
        assert_eq!(d.nrows(), 6);
        let s = singular_values(&d);
        for k in 0..3 {
            assert!((s[k] - 2.0).abs() < 1e-12);
        }
        assert!(s[3].abs() < 1e-12);
        assert!((condition_number(&d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditioned_isotropic() {
        let d = conditioned_random_dictionary(8, 1.0, 3).unwrap();
        assert!((condition_number(&d).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn conditioned_requested_kappa() {
        let d = conditioned_random_dictionary(50, 100.0, 9).unwrap();
        let k = condition_number(&d).unwrap();
        assert!((k - 100.0).abs() < 1e-6, "kappa={k}");
        assert!(d.determinant().abs() > 0.0);
        assert_eq!(d, conditioned_random_dictionary(50, 100.0, 9).unwrap());
    }

    #[test]
    fn conditioned_rejects_bad_kappa() {
        assert!(conditioned_random_dictionary(5, 0.5, 1).is_err());
        assert!(conditioned_random_dictionary(5, f64::NAN, 1).is_err());
    }

    #[test]
    fn spec_roundtrip_json() {
        let spec = DictionarySpec::Fused { p: 5, lambda1: 1.0, lambda2: 0.5 };
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(text, r#"{"kind":"fused","p":5,"lambda1":1.0,"lambda2":0.5}"#);
        let back: DictionarySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.build().unwrap().shape(), (9, 5));
    }
}
