//! Independent checks of the eigensolver and the orthogonal constructors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use resrmn::linalg::{
    cyclic_orthogonal, eigenvalues, orthogonality_defect, random_orthogonal, rescale_to_radius,
    spectral_norm, spectral_radius, uniform_matrix, Matrix, RngStream, Spectrum,
};

/// Characteristic polynomial coefficients (monic, highest degree first) by
/// Faddeev-LeVerrier.
fn char_poly(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = vec![0.0; n + 1];
    coeffs[0] = 1.0;
    let mut mk = Matrix::zeros(n, n).unwrap();
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{k-1} I
        let mut next = a.matmul(&mk).unwrap();
        for i in 0..n {
            next[(i, i)] += coeffs[k - 1];
        }
        mk = next;
        let am = a.matmul(&mk).unwrap();
        let trace: f64 = (0..n).map(|i| am[(i, i)]).sum();
        coeffs[k] = -trace / k as f64;
    }
    coeffs
}

/// Durand-Kerner simultaneous root iteration.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |z: Complex64| {
        coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..5000 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

fn min_singular_value(m: &Matrix, lambda: Complex64) -> f64 {
    let n = m.rows();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j {
            lambda
        } else {
            Complex64::new(0.0, 0.0)
        };
        Complex64::new(m[(i, j)], 0.0) - d
    });
    shifted
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn six_by_six_matches_characteristic_polynomial_roots() {
    for seed in 0..5 {
        let m = uniform_matrix(&mut RngStream::new(seed, "charpoly"), 6, 6, 1.0).unwrap();
        let oracle = Spectrum::new(poly_roots(&char_poly(&m)));
        let got = eigenvalues(&m).unwrap();
        let d = got.matched_distance(&oracle).unwrap();
        assert!(d <= 1e-6, "seed {seed}: distance {d}");
    }
}

#[test]
fn residual_contract_on_random_matrices() {
    for k in 0..100u64 {
        let n = 2 + (k as usize % 19);
        let m = uniform_matrix(&mut RngStream::new(k, "residual"), n, n, 1.0).unwrap();
        let spec = eigenvalues(&m).unwrap();
        assert_eq!(spec.len(), n);
        assert!(spec.conjugate_paired(1e-8), "k={k}");
        let bound = 1e-7 * (1.0 + spectral_norm(&m).unwrap());
        for &lambda in spec.iter() {
            let smin = min_singular_value(&m, lambda);
            assert!(smin <= bound, "k={k} n={n} lambda={lambda} smin={smin}");
        }
    }
}

#[test]
fn spectral_norm_matches_gram_eigenvalue() {
    let m = uniform_matrix(&mut RngStream::new(42, "norm"), 8, 8, 1.0).unwrap();
    let gram = m.transpose().matmul(&m).unwrap();
    let top = eigenvalues(&gram)
        .unwrap()
        .iter()
        .map(|z| z.re)
        .fold(f64::MIN, f64::max);
    assert!((spectral_norm(&m).unwrap() - top.sqrt()).abs() <= 1e-8);
}

#[test]
fn orthogonal_constructors_are_orthogonal() {
    for n in [1, 3, 10, 50] {
        assert!(orthogonality_defect(&Matrix::identity(n).unwrap()) <= 1e-10);
        assert!(orthogonality_defect(&cyclic_orthogonal(n).unwrap()) <= 1e-10);
        let q = random_orthogonal(&mut RngStream::new(n as u64, "O"), n).unwrap();
        assert!(orthogonality_defect(&q) <= 1e-10);
        for z in eigenvalues(&q).unwrap().iter() {
            assert!((z.norm() - 1.0).abs() <= 1e-8);
        }
    }
}

#[test]
fn random_orthogonal_spectrum_spreads_over_circle() {
    let q = random_orthogonal(&mut RngStream::new(2025, "O"), 100).unwrap();
    let args: Vec<f64> = eigenvalues(&q).unwrap().iter().map(|z| z.arg()).collect();
    let lo = args.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = args.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(
        hi - lo > 0.9 * 2.0 * std::f64::consts::PI,
        "cover {}",
        hi - lo
    );
}

#[test]
fn rescale_recovers_table_targets() {
    for seed in 0..10 {
        let m = uniform_matrix(&mut RngStream::new(seed, "W_h"), 10, 10, 1.0).unwrap();
        for target in [0.9, 1.0, 1.1] {
            let rho = spectral_radius(&rescale_to_radius(&m, target).unwrap()).unwrap();
            assert!((rho - target).abs() <= 1e-8 * target);
        }
    }
}

fn block_lower(a: &Matrix, b: &Matrix, d: &Matrix) -> Matrix {
    let (na, nd) = (a.rows(), d.rows());
    let mut m = Matrix::zeros(na + nd, na + nd).unwrap();
    for i in 0..na {
        for j in 0..na {
            m[(i, j)] = a[(i, j)];
        }
    }
    for i in 0..nd {
        for j in 0..na {
            m[(na + i, j)] = b[(i, j)];
        }
        for j in 0..nd {
            m[(na + i, na + j)] = d[(i, j)];
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_triangular_spectrum_is_union(seed in any::<u64>(), na in 2usize..=10, nd in 2usize..=10) {
        let a = uniform_matrix(&mut RngStream::new(seed, "A"), na, na, 1.0).unwrap();
        let b = uniform_matrix(&mut RngStream::new(seed, "B"), nd, na, 1.0).unwrap();
        let d = uniform_matrix(&mut RngStream::new(seed, "D"), nd, nd, 1.0).unwrap();
        let whole = eigenvalues(&block_lower(&a, &b, &d)).unwrap();
        let parts = eigenvalues(&a).unwrap().union(&eigenvalues(&d).unwrap());
        let dist = whole.matched_distance(&parts).unwrap();
        prop_assert!(dist <= 1e-8, "distance {}", dist);
    }
}
