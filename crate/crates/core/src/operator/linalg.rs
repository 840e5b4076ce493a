//! Dense helpers: matrix exponential and the weighted symmetric eigen-solve.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring with a degree-13 Pade approximant
/// (Higham, "The scaling and squaring method for the matrix exponential revisited").
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// An eigenpair of `M = B diag(w) - diag(B w)`.
#[derive(Clone, Debug)]
pub struct WeightedPair {
    pub value: f64,
    /// Right eigenvector `c` of `M`, normalised so that `sum_V w_V c_V^2 = 1`.
    pub vector: DVector<f64>,
    /// `||M c - value c|| / ||c||`.
    pub residual: f64,
}

/// Weighted Laplacian `B diag(w) - diag(B w)` for symmetric `B` and positive `w`.
pub fn weighted_laplacian(b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    DMatrix::from_fn(n, n, |u, v| {
        if u == v {
            -(0..n).filter(|&x| x != u).map(|x| b[(u, x)] * w[x]).sum::<f64>()
        } else {
            b[(u, v)] * w[v]
        }
    })
}

/// The symmetrisation `diag(w)^{1/2} M diag(w)^{-1/2}`.
pub fn symmetrized(b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    let m = weighted_laplacian(b, w);
    DMatrix::from_fn(n, n, |u, v| {
        if u == v {
            m[(u, u)]
        } else {
            b[(u, v)] * (w[u] * w[v]).sqrt()
        }
    })
}

/// Eigenpairs of the weighted Laplacian, ascending, each vector with its first
/// non-negligible entry positive.
pub fn weighted_laplacian_pairs(b: &DMatrix<f64>, w: &[f64]) -> Result<Vec<WeightedPair>> {
    let n = w.len();
    let s = symmetrized(b, w);
    let m = weighted_laplacian(b, w);
    let scale = one_norm(&m).max(1.0);
    let eig = SymmetricEigen::try_new(s, f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence {
        residual: f64::INFINITY,
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut pairs = Vec::with_capacity(n);
    for i in order {
        let value = eig.eigenvalues[i];
        let col = eig.eigenvectors.column(i);
        let mut c = DVector::from_fn(n, |v, _| col[v] / w[v].sqrt());
        let norm = (0..n).map(|v| w[v] * c[v] * c[v]).sum::<f64>().sqrt();
        c /= norm;
        if let Some(first) = c.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                c = -c;
            }
        }
        let residual = (&m * &c - &c * value).norm() / c.norm();
        if !residual.is_finite() || residual > 1e-8 * scale {
            return Err(Error::EigenNonConvergence { residual });
        }
        pairs.push(WeightedPair {
            value,
            vector: c,
            residual,
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cyclic Jacobi rotations, used as an independent eigenvalue oracle.
    pub(crate) fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut a = a.clone();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let mut rot = DMatrix::<f64>::identity(n, n);
                    rot[(p, p)] = c;
                    rot[(q, q)] = c;
                    rot[(p, q)] = s;
                    rot[(q, p)] = -s;
                    a = rot.transpose() * &a * &rot;
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn eig_expm(b: &DMatrix<f64>, w: &[f64], t: f64) -> DMatrix<f64> {
        let n = w.len();
        let s = symmetrized(b, w);
        let eig = SymmetricEigen::new(s);
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| (t * x).exp()));
        let e = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        DMatrix::from_fn(n, n, |u, v| e[(u, v)] * (w[v] / w[u]).sqrt())
    }

    #[test]
    fn expm_two_state_closed_form() {
        let m = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.5, -0.5]);
        for t in [0.0, 0.3, 1.0, 7.5, 40.0] {
            let e = expm(&(&m * t));
            let a = (1.0 + (-t).exp()) / 2.0;
            assert!((e[(0, 0)] - a).abs() < 1e-14);
            assert!((e[(0, 1)] - (1.0 - a)).abs() < 1e-14);
        }
    }

    #[test]
    fn expm_matches_eigen_route() {
        let b = DMatrix::from_row_slice(4, 4, &[0.0, 1.0, 0.5, 0.0, 1.0, 0.0, 2.0, 0.25, 0.5, 2.0, 0.0, 3.0, 0.0, 0.25, 3.0, 0.0]);
        let w = [0.5, 0.125, 0.25, 0.0625];
        for t in [0.01, 1.0, 10.0, 100.0] {
            let a = expm(&(weighted_laplacian(&b, &w) * t));
            let o = eig_expm(&b, &w, t);
            assert!((a - o).amax() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn pairs_match_jacobi_oracle() {
        let b = DMatrix::from_row_slice(4, 4, &[0.0, 1.0, 0.5, 0.0, 1.0, 0.0, 2.0, 0.25, 0.5, 2.0, 0.0, 3.0, 0.0, 0.25, 3.0, 0.0]);
        let w = [0.5, 0.125, 0.25, 0.0625];
        let pairs = weighted_laplacian_pairs(&b, &w).unwrap();
        let oracle = jacobi_eigenvalues(&symmetrized(&b, &w));
        for (p, o) in pairs.iter().zip(&oracle) {
            assert!((p.value - o).abs() < 1e-10);
            assert!(p.residual < 1e-12);
        }
        assert!(pairs.last().unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn unit_weights_give_plain_laplacian() {
        // 3-cycle with weights 1, 1/2, 1: eigenvalues 0, -2, -3
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 0.5, 1.0, 0.5, 0.0]);
        let pairs = weighted_laplacian_pairs(&b, &[1.0; 3]).unwrap();
        let vals: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        assert!((vals[0] + 3.0).abs() < 1e-12 && (vals[1] + 2.0).abs() < 1e-12 && vals[2].abs() < 1e-12);
    }
}
