use super::{Matrix, RngStream};
use crate::error::{dim_err, Error, Result};

/// Matrix with i.i.d. entries uniform on `(-scale, scale)`, drawn row-major.
pub fn uniform_matrix(rng: &mut RngStream, rows: usize, cols: usize, scale: f64) -> Result<Matrix> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::Param(format!(
            "scale must be finite and >= 0, got {scale}"
        )));
    }
    let mut m = Matrix::zeros(rows, cols)?;
    for v in m.as_mut_slice() {
        *v = scale * rng.next_symmetric();
    }
    Ok(m)
}

/// Circular-shift permutation: `C[0][n-1] = 1` and `C[i][i-1] = 1`.
pub fn cyclic_orthogonal(n: usize) -> Result<Matrix> {
    let mut c = Matrix::zeros(n, n)?;
    c[(0, n - 1)] = 1.0;
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    Ok(c)
}

/// Q factor of a uniform(-1, 1) matrix, with columns signed so that `R` has a
/// non-negative diagonal.
pub fn random_orthogonal(rng: &mut RngStream, n: usize) -> Result<Matrix> {
    if n < 1 {
        return Err(dim_err!("orthogonal matrix order must be >= 1"));
    }
    let a = uniform_matrix(rng, n, n, 1.0)?;
    let (mut q, r) = householder_qr(&a);
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

/// Householder QR of a square matrix; returns `(Q, R)` with `A = Q R`.
pub(crate) fn householder_qr(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.rows();
    let mut r = a.clone();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n);

    for k in 0..n.saturating_sub(1) {
        let norm = (k..n).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- (I - 2 v v^T / v^T v) R
        for j in k..n {
            let s: f64 = (k..n).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..n {
                r[(i, j)] -= s * v[i - k];
            }
        }
        for i in k + 1..n {
            r[(i, k)] = 0.0;
        }
        reflectors.push((k, v.into_iter().map(|x| x / vnorm2.sqrt()).collect()));
    }

    // Q = H_0 H_1 ... H_{n-2}, accumulated right to left on the identity.
    let mut q = Matrix::identity(n).expect("n >= 1");
    for (k, v) in reflectors.iter().rev() {
        for j in 0..n {
            let s: f64 = (*k..n).map(|i| v[i - k] * q[(i, j)]).sum::<f64>() * 2.0;
            for i in *k..n {
                q[(i, j)] -= s * v[i - k];
            }
        }
    }
    (q, r)
}

/// Largest entry of `|OᵀO - I|`.
pub fn orthogonality_defect(o: &Matrix) -> f64 {
    let n = o.cols();
    let gram = o.transpose().matmul(o).expect("square");
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_gives_zero_matrix() {
        let mut rng = RngStream::new(1, "W_x");
        let m = uniform_matrix(&mut rng, 3, 4, 0.0).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_is_deterministic() {
        let a = uniform_matrix(&mut RngStream::new(7, "W_x"), 2, 2, 1.0).unwrap();
        let b = uniform_matrix(&mut RngStream::new(7, "W_x"), 2, 2, 1.0).unwrap();
        assert_eq!(a, b);
        let c = uniform_matrix(&mut RngStream::new(7, "W_h"), 2, 2, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_respects_scale() {
        let m = uniform_matrix(&mut RngStream::new(3, "W_m"), 20, 20, 0.1).unwrap();
        assert!(m.max_abs() < 0.1);
        assert!(m.max_abs() > 0.05);
    }

    #[test]
    fn uniform_rejects_bad_input() {
        let mut rng = RngStream::new(1, "x");
        assert!(uniform_matrix(&mut rng, 0, 2, 1.0).is_err());
        assert!(uniform_matrix(&mut rng, 2, 2, -1.0).is_err());
    }

    #[test]
    fn cyclic_pattern() {
        let c = cyclic_orthogonal(3).unwrap();
        let expected =
            Matrix::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(c, expected);
        assert_eq!(cyclic_orthogonal(1).unwrap(), Matrix::identity(1).unwrap());
        assert!(cyclic_orthogonal(0).is_err());
    }

    #[test]
    fn qr_reconstructs() {
        let a = uniform_matrix(&mut RngStream::new(11, "A"), 7, 7, 1.0).unwrap();
        let (q, r) = householder_qr(&a);
        assert!(q.matmul(&r).unwrap().max_abs_diff(&a).unwrap() < 1e-12);
        assert!(orthogonality_defect(&q) < 1e-12);
        for i in 0..7 {
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        for n in [1, 2, 5, 30] {
            let q = random_orthogonal(&mut RngStream::new(n as u64, "O"), n).unwrap();
            assert!(orthogonality_defect(&q) <= 1e-10, "n={n}");
        }
    }

    #[test]
    fn random_orthogonal_sign_convention() {
        // Q^T A = R must have a non-negative diagonal.
        let a = uniform_matrix(&mut RngStream::new(5, "O"), 6, 6, 1.0).unwrap();
        let q = random_orthogonal(&mut RngStream::new(5, "O"), 6).unwrap();
        let r = q.transpose().matmul(&a).unwrap();
        for j in 0..6 {
            assert!(r[(j, j)] >= 0.0);
        }
    }
}
