//! Nonsymmetric real eigenvalues: balancing, Householder reduction to upper
//! Hessenberg form, then Francis double-shift QR with deflation.

use super::{norm2, Matrix, RngStream};
use crate::error::{dim_err, Error, Result};
use num_complex::Complex64;

/// Eigenvalues of a matrix, with multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.values.iter()
    }

    /// Largest modulus, or 0 for an empty spectrum.
    pub fn radius(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Values sorted by `(re, im)`.
    pub fn sorted(&self) -> Vec<Complex64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    pub fn union(&self, other: &Spectrum) -> Spectrum {
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Spectrum { values }
    }

    /// Largest distance between matched values of two equally sized
    /// multisets. Pairs are matched greedily, closest first.
    pub fn matched_distance(&self, other: &Spectrum) -> Result<f64> {
        if self.len() != other.len() {
            return Err(dim_err!(
                "spectra of different sizes: {} vs {}",
                self.len(),
                other.len()
            ));
        }
        let a = self.sorted();
        let b = other.sorted();
        let n = a.len();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                pairs.push(((x - y).norm(), i, j));
            }
        }
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then((p.1, p.2).cmp(&(q.1, q.2))));
        let mut used_a = vec![false; n];
        let mut used_b = vec![false; n];
        let mut worst: f64 = 0.0;
        let mut matched = 0;
        for (d, i, j) in pairs {
            if used_a[i] || used_b[j] {
                continue;
            }
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
            matched += 1;
            if matched == n {
                break;
            }
        }
        Ok(worst)
    }

    /// Checks that non-real values come in conjugate pairs within `tol`.
    pub fn conjugate_paired(&self, tol: f64) -> bool {
        self.values
            .iter()
            .all(|z| z.im.abs() <= tol || self.values.iter().any(|w| (w - z.conj()).norm() <= tol))
    }
}

/// All eigenvalues of a square matrix.
pub fn eigenvalues(m: &Matrix) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(dim_err!(
            "eigenvalues need a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        ));
    }
    if let Some(cycles) = permutation_cycles(m) {
        return Ok(Spectrum {
            values: roots_of_unity(&cycles),
        });
    }
    let n = m.rows();
    let mut a = Work::from(m);
    a.balance();
    a.to_hessenberg();
    let values = a.hqr().ok_or_else(|| {
        Error::Numeric(format!(
            "QR iteration did not converge for a matrix of order {n}"
        ))
    })?;
    Ok(Spectrum { values })
}

/// Largest eigenvalue modulus. Exactly 1 for permutation matrices.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if m.is_square() && permutation_cycles(m).is_some() {
        return Ok(1.0);
    }
    Ok(eigenvalues(m)?.radius())
}

/// Cycle lengths of `m` if it is a permutation matrix.
fn permutation_cycles(m: &Matrix) -> Option<Vec<usize>> {
    let n = m.rows();
    let mut target = vec![usize::MAX; n];
    for i in 0..n {
        for (j, &v) in m.row(i).iter().enumerate() {
            if v == 1.0 {
                if target[i] != usize::MAX {
                    return None;
                }
                target[i] = j;
            } else if v != 0.0 {
                return None;
            }
        }
        if target[i] == usize::MAX {
            return None;
        }
    }
    let mut seen = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = target[i];
            len += 1;
        }
        if i != start {
            // two rows map to the same column
            return None;
        }
        cycles.push(len);
    }
    Some(cycles)
}

/// A cycle of length `L` contributes the `L`-th roots of unity. Quarter
/// turns are emitted exactly.
fn roots_of_unity(cycles: &[usize]) -> Vec<Complex64> {
    const QUARTERS: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
    let mut out = Vec::with_capacity(cycles.iter().sum());
    for &len in cycles {
        for k in 0..len {
            let z = if (4 * k) % len == 0 {
                let (re, im) = QUARTERS[4 * k / len];
                Complex64::new(re, im)
            } else {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / len as f64;
                let (s, c) = theta.sin_cos();
                Complex64::new(c, s)
            };
            out.push(z);
        }
    }
    out
}

/// `m * (target / spectral_radius(m))`.
pub fn rescale_to_radius(m: &Matrix, target: f64) -> Result<Matrix> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Param(format!(
            "target spectral radius must be > 0, got {target}"
        )));
    }
    let rho = spectral_radius(m)?;
    if rho <= 1e-12 {
        return Err(Error::Degenerate(format!(
            "spectral radius {rho:e} is too small to rescale"
        )));
    }
    Ok(m.scaled(target / rho))
}

/// Largest singular value, by power iteration on `mᵀm`.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    const REL_TOL: f64 = 1e-10;
    const MAX_ITER: usize = 200_000;

    let mt = m.transpose();
    let mut v: Vec<f64> = {
        let mut rng = RngStream::new(0x5eed, "spectral_norm");
        (0..m.cols()).map(|_| rng.next_symmetric()).collect()
    };
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut mv = vec![0.0; m.rows()];
    let mut w = vec![0.0; m.cols()];
    let mut prev = 0.0f64;
    // Successive changes understate the error when the top two singular
    // values are close, so require several small changes in a row at a
    // threshold well below the target.
    let mut calm = 0;
    for _ in 0..MAX_ITER {
        m.matvec_into(&v, &mut mv);
        let sigma2 = super::dot(&mv, &mv);
        if sigma2 == 0.0 {
            return Ok(0.0);
        }
        mt.matvec_into(&mv, &mut w);
        let nw = norm2(&w);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if (sigma2 - prev).abs() <= 1e-2 * REL_TOL * sigma2 {
            calm += 1;
            if calm >= 3 {
                return Ok(sigma2.sqrt());
            }
        } else {
            calm = 0;
        }
        prev = sigma2;
    }
    Ok(prev.sqrt())
}

/// Scratch copy of a square matrix for in-place reduction.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    fn from(m: &Matrix) -> Self {
        Self {
            n: m.rows(),
            a: m.as_slice().to_vec(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    /// Diagonal similarity by powers of two so that row and column norms
    /// are comparable. Exact in floating point.
    fn balance(&mut self) {
        let n = self.n;
        let radix2 = 4.0;
        loop {
            let mut done = true;
            for i in 0..n {
                let mut c = 0.0;
                let mut r = 0.0;
                for j in 0..n {
                    if j != i {
                        c += self.at(j, i).abs();
                        r += self.at(i, j).abs();
                    }
                }
                if c == 0.0 || r == 0.0 {
                    continue;
                }
                let s = c + r;
                let mut f = 1.0;
                let mut g = r / 2.0;
                while c < g {
                    f *= 2.0;
                    c *= radix2;
                }
                g = r * 2.0;
                while c >= g {
                    f /= 2.0;
                    c /= radix2;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        *self.at_mut(i, j) *= g;
                    }
                    for j in 0..n {
                        *self.at_mut(j, i) *= f;
                    }
                }
            }
            if done {
                break;
            }
        }
    }

    /// Householder reduction to upper Hessenberg form.
    fn to_hessenberg(&mut self) {
        let n = self.n;
        if n < 3 {
            return;
        }
        let high = n - 1;
        let mut ort = vec![0.0; n];
        for m in 1..high {
            let scale: f64 = (m..=high).map(|i| self.at(i, m - 1).abs()).sum();
            if scale == 0.0 {
                continue;
            }
            let mut h = 0.0;
            for i in (m..=high).rev() {
                ort[i] = self.at(i, m - 1) / scale;
                h += ort[i] * ort[i];
            }
            let mut g = h.sqrt();
            if ort[m] > 0.0 {
                g = -g;
            }
            h -= ort[m] * g;
            ort[m] -= g;

            for j in m..n {
                let mut f = 0.0;
                for i in (m..=high).rev() {
                    f += ort[i] * self.at(i, j);
                }
                f /= h;
                for i in m..=high {
                    *self.at_mut(i, j) -= f * ort[i];
                }
            }
            for i in 0..=high {
                let mut f = 0.0;
                for j in (m..=high).rev() {
                    f += ort[j] * self.at(i, j);
                }
                f /= h;
                for j in m..=high {
                    *self.at_mut(i, j) -= f * ort[j];
                }
            }
            *self.at_mut(m, m - 1) = scale * g;
            for i in m + 1..=high {
                *self.at_mut(i, m - 1) = 0.0;
            }
        }
    }

    /// Eigenvalues of an upper Hessenberg matrix. `None` when the total
    /// iteration count exceeds `100 n`.
    fn hqr(&mut self) -> Option<Vec<Complex64>> {
        let nn = self.n;
        let eps = f64::EPSILON;
        let mut wr = vec![0.0; nn];
        let mut wi = vec![0.0; nn];
        let max_total = 100 * nn;
        let mut total = 0usize;

        let mut norm = 0.0;
        for i in 0..nn {
            for j in i.saturating_sub(1)..nn {
                norm += self.at(i, j).abs();
            }
        }

        let mut n = nn as isize - 1;
        let mut exshift = 0.0;
        let mut iter = 0;
        let (mut p, mut q, mut r);
        let (mut s, mut z);
        let (mut x, mut y, mut w);

        while n >= 0 {
            let nu = n as usize;
            // Find a negligible subdiagonal entry.
            let mut l = nu;
            while l > 0 {
                s = self.at(l - 1, l - 1).abs() + self.at(l, l).abs();
                if s == 0.0 {
                    s = norm;
                }
                let sub = self.at(l, l - 1).abs();
                if sub == 0.0 || sub < eps * s {
                    break;
                }
                l -= 1;
            }

            if l == nu {
                // One root.
                wr[nu] = self.at(nu, nu) + exshift;
                wi[nu] = 0.0;
                n -= 1;
                iter = 0;
            } else if l + 1 == nu {
                // Two roots from the trailing 2x2 block.
                w = self.at(nu, nu - 1) * self.at(nu - 1, nu);
                p = (self.at(nu - 1, nu - 1) - self.at(nu, nu)) / 2.0;
                q = p * p + w;
                z = q.abs().sqrt();
                x = self.at(nu, nu) + exshift;
                if q >= 0.0 {
                    z = if p >= 0.0 { p + z } else { p - z };
                    wr[nu - 1] = x + z;
                    wr[nu] = wr[nu - 1];
                    if z != 0.0 {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = z;
                    wi[nu] = -z;
                }
                n -= 2;
                iter = 0;
            } else {
                total += 1;
                if total > max_total {
                    return None;
                }
                x = self.at(nu, nu);
                y = self.at(nu - 1, nu - 1);
                w = self.at(nu, nu - 1) * self.at(nu - 1, nu);

                // Exceptional shifts break cycles.
                if iter == 10 {
                    exshift += x;
                    for i in 0..=nu {
                        *self.at_mut(i, i) -= x;
                    }
                    s = self.at(nu, nu - 1).abs() + self.at(nu - 1, nu - 2).abs();
                    x = 0.75 * s;
                    y = x;
                    w = -0.4375 * s * s;
                }
                if iter == 30 {
                    s = (y - x) / 2.0;
                    s = s * s + w;
                    if s > 0.0 {
                        s = s.sqrt();
                        if y < x {
                            s = -s;
                        }
                        s = x - w / ((y - x) / 2.0 + s);
                        for i in 0..=nu {
                            *self.at_mut(i, i) -= s;
                        }
                        exshift += s;
                        x = 0.964;
                        y = x;
                        w = x;
                    }
                }
                iter += 1;

                // Look for two consecutive small subdiagonal entries.
                let mut m = nu - 2;
                loop {
                    z = self.at(m, m);
                    r = x - z;
                    s = y - z;
                    p = (r * s - w) / self.at(m + 1, m) + self.at(m, m + 1);
                    q = self.at(m + 1, m + 1) - z - r - s;
                    r = self.at(m + 2, m + 1);
                    s = p.abs() + q.abs() + r.abs();
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == l {
                        break;
                    }
                    if self.at(m, m - 1).abs() * (q.abs() + r.abs())
                        < eps
                            * (p.abs()
                                * (self.at(m - 1, m - 1).abs()
                                    + z.abs()
                                    + self.at(m + 1, m + 1).abs()))
                    {
                        break;
                    }
                    m -= 1;
                }
                for i in m + 2..=nu {
                    *self.at_mut(i, i - 2) = 0.0;
                    if i > m + 2 {
                        *self.at_mut(i, i - 3) = 0.0;
                    }
                }

                // Double QR step on rows l..=n and columns m..=n.
                let mut k = m;
                while k < nu {
                    let notlast = k != nu - 1;
                    if k != m {
                        p = self.at(k, k - 1);
                        q = self.at(k + 1, k - 1);
                        r = if notlast { self.at(k + 2, k - 1) } else { 0.0 };
                        x = p.abs() + q.abs() + r.abs();
                        if x == 0.0 {
                            k += 1;
                            continue;
                        }
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                    s = (p * p + q * q + r * r).sqrt();
                    if p < 0.0 {
                        s = -s;
                    }
                    if s != 0.0 {
                        if k != m {
                            *self.at_mut(k, k - 1) = -s * x;
                        } else if l != m {
                            *self.at_mut(k, k - 1) = -self.at(k, k - 1);
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;

                        for j in k..nn {
                            p = self.at(k, j) + q * self.at(k + 1, j);
                            if notlast {
                                p += r * self.at(k + 2, j);
                                *self.at_mut(k + 2, j) -= p * z;
                            }
                            *self.at_mut(k, j) -= p * x;
                            *self.at_mut(k + 1, j) -= p * y;
                        }
                        for i in 0..=nu.min(k + 3) {
                            p = x * self.at(i, k) + y * self.at(i, k + 1);
                            if notlast {
                                p += z * self.at(i, k + 2);
                                *self.at_mut(i, k + 2) -= p * r;
                            }
                            *self.at_mut(i, k) -= p;
                            *self.at_mut(i, k + 1) -= p * q;
                        }
                    }
                    k += 1;
                }
            }
        }

        Some(
            wr.into_iter()
                .zip(wi)
                .map(|(re, im)| Complex64::new(re, im))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cyclic_orthogonal, uniform_matrix};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal() {
        let s = eigenvalues(&Matrix::diag(&[2.0, -3.0]).unwrap()).unwrap();
        let d = s
            .matched_distance(&Spectrum::new(vec![c(2.0, 0.0), c(-3.0, 0.0)]))
            .unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn rotation_generator() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let s = eigenvalues(&m).unwrap();
        let d = s
            .matched_distance(&Spectrum::new(vec![c(0.0, 1.0), c(0.0, -1.0)]))
            .unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn one_by_one() {
        let s = eigenvalues(&Matrix::from_rows(&[[4.5]]).unwrap()).unwrap();
        assert_eq!(s.values, vec![c(4.5, 0.0)]);
    }

    #[test]
    fn cyclic_four_roots_of_unity() {
        let s = eigenvalues(&cyclic_orthogonal(4).unwrap()).unwrap();
        let expected = Spectrum::new(vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)]);
        assert!(s.matched_distance(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn permutation_spectra_are_exact() {
        let cyc = cyclic_orthogonal(100).unwrap();
        assert_eq!(spectral_radius(&cyc).unwrap(), 1.0);
        let s = eigenvalues(&cyc).unwrap();
        assert_eq!(s.len(), 100);
        for (k, z) in s.iter().enumerate() {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 100.0;
            assert!((z.re - theta.cos()).abs() < 1e-15 && (z.im - theta.sin()).abs() < 1e-15);
        }
        // Two swaps: eigenvalues {1, -1, 1, -1}.
        let p = Matrix::from_rows(&[
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let expected = Spectrum::new(vec![c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(
            eigenvalues(&p)
                .unwrap()
                .matched_distance(&expected)
                .unwrap(),
            0.0
        );
        // Not a permutation: repeated column.
        let q = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(permutation_cycles(&q).is_none());
    }

    #[test]
    fn non_square_rejected() {
        let m = Matrix::zeros(2, 3).unwrap();
        assert!(matches!(eigenvalues(&m), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_matrix() {
        let s = eigenvalues(&Matrix::zeros(5, 5).unwrap()).unwrap();
        assert!(s.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn radius_basics() {
        assert_eq!(spectral_radius(&Matrix::identity(6).unwrap()).unwrap(), 1.0);
        assert!((spectral_radius(&cyclic_orthogonal(9).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        let half = Matrix::identity(4).unwrap().scaled(0.5);
        assert_eq!(spectral_radius(&half).unwrap(), 0.5);
    }

    #[test]
    fn rescale_examples() {
        // 2I has radius 2, so the rescaled matrix is 0.9 I.
        let two = Matrix::identity(3).unwrap().scaled(2.0);
        let r = rescale_to_radius(&two, 0.9).unwrap();
        assert!(
            r.max_abs_diff(&Matrix::identity(3).unwrap().scaled(0.9))
                .unwrap()
                < 1e-15
        );
        let z = Matrix::zeros(3, 3).unwrap();
        assert!(matches!(
            rescale_to_radius(&z, 1.0),
            Err(Error::Degenerate(_))
        ));
        // Nilpotent: radius zero although the matrix is not.
        let nil = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            rescale_to_radius(&nil, 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rescale_hits_target() {
        let m = uniform_matrix(&mut RngStream::new(3, "W_h"), 10, 10, 1.0).unwrap();
        for target in [0.9, 1.0, 1.1] {
            let r = rescale_to_radius(&m, target).unwrap();
            let rho = spectral_radius(&r).unwrap();
            assert!((rho - target).abs() <= 1e-8 * target, "{rho} vs {target}");
            let again = rescale_to_radius(&r, target).unwrap();
            assert!(again.max_abs_diff(&r).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn norm_basics() {
        assert!((spectral_norm(&Matrix::identity(4).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&Matrix::diag(&[3.0, 1.0]).unwrap()).unwrap() - 3.0).abs() < 1e-12);
        let row = Matrix::from_rows(&[[1.0, -1.0]]).unwrap();
        assert!((spectral_norm(&row).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn norm_matches_gram_eigenvalues() {
        let m = uniform_matrix(&mut RngStream::new(8, "N"), 8, 8, 1.0).unwrap();
        let gram = m.transpose().matmul(&m).unwrap();
        let top = eigenvalues(&gram)
            .unwrap()
            .values
            .iter()
            .map(|z| z.re)
            .fold(f64::MIN, f64::max);
        let sn = spectral_norm(&m).unwrap();
        assert!((sn - top.sqrt()).abs() <= 1e-8, "{sn} vs {}", top.sqrt());
    }

    #[test]
    fn matching_detects_difference() {
        let a = Spectrum::new(vec![c(1.0, 0.0), c(2.0, 0.0)]);
        let b = Spectrum::new(vec![c(2.0, 0.0), c(1.5, 0.0)]);
        assert!((a.matched_distance(&b).unwrap() - 0.5).abs() < 1e-15);
        assert!(a.matched_distance(&Spectrum::new(vec![])).is_err());
    }
}
