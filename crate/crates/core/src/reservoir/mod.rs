//! Reservoir builders and state-update dynamics.
//!
//! Every weight matrix is drawn from its own named stream of the model seed
//! ("W_h", "W_x", "W_m", "b_h", "V_x", "O"), so two models built from the
//! same seed share all matrices they have in common.

mod drive;
mod models;
mod ortho;

pub use drive::{
    drive, final_state, final_states, final_states_fed, trajectory, Collect, Driven, MemoryFeed,
    Model, Reservoir, Scratch, Trajectory,
};
pub use models::{
    build_leaky_esn, build_memory, build_resesn, build_resrmn, build_rmn, LeakyEsn, LeakyEsnParams,
    MemoryParams, MemoryReservoir, ResEsn, ResEsnParams, ResRmnModel, RmnModel,
};
pub use ortho::{OrthoKind, Orthogonal};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, spectral_radius, Matrix};
    use num_complex::Complex64;

    fn leaky_params(seed: u64, rho: f64) -> LeakyEsnParams {
        LeakyEsnParams {
            n_h: 12,
            n_x: 2,
            rho,
            omega_x: 0.5,
            omega_b: 0.1,
            tau: 0.5,
            n_m: 0,
            omega_m: 0.0,
            seed,
        }
    }

    fn res_params(seed: u64, ortho: OrthoKind) -> ResEsnParams {
        ResEsnParams {
            n_h: 8,
            n_x: 1,
            n_m: 5,
            rho: 1.0,
            omega_x: 1.0,
            omega_m: 0.5,
            omega_b: 0.1,
            alpha: 0.5,
            beta: 0.5,
            ortho,
            seed,
        }
    }

    #[test]
    fn leaky_build_is_deterministic() {
        let a = build_leaky_esn(&leaky_params(3, 0.9)).unwrap();
        let b = build_leaky_esn(&leaky_params(3, 0.9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn leaky_radius_matches_table_values() {
        for rho in [0.9, 1.0, 1.1] {
            let m = build_leaky_esn(&leaky_params(1, rho)).unwrap();
            let got = spectral_radius(m.w_h()).unwrap();
            assert!((got - rho).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_bias_scale_gives_zero_bias() {
        let mut p = leaky_params(1, 1.0);
        p.omega_b = 0.0;
        let m = build_leaky_esn(&p).unwrap();
        assert!(m.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = leaky_params(1, 1.0);
        p.tau = 0.0;
        assert!(build_leaky_esn(&p).is_err());
        let mut r = res_params(1, OrthoKind::Random);
        r.beta = 0.0;
        assert!(build_resesn(&r).is_err());
        r.beta = 0.5;
        r.alpha = 1.5;
        assert!(build_resesn(&r).is_err());
    }

    fn zero_leaky(n: usize, tau: f64) -> LeakyEsn {
        LeakyEsn::from_parts(
            Matrix::zeros(n, n).unwrap(),
            None,
            Matrix::zeros(n, 1).unwrap(),
            vec![0.0; n],
            tau,
        )
        .unwrap()
    }

    #[test]
    fn leaky_step_examples() {
        let full = zero_leaky(2, 1.0);
        assert_eq!(
            full.leaky_step(&[0.3, -0.7], &[2.0]).unwrap(),
            vec![0.0, 0.0]
        );
        let half = zero_leaky(2, 0.5);
        assert_eq!(
            half.leaky_step(&[1.0, 1.0], &[2.0]).unwrap(),
            vec![0.5, 0.5]
        );

        let scalar = LeakyEsn::from_parts(
            Matrix::zeros(1, 1).unwrap(),
            None,
            Matrix::identity(1).unwrap(),
            vec![0.0],
            1.0,
        )
        .unwrap();
        let h = scalar.leaky_step(&[0.0], &[1.0]).unwrap();
        assert!((h[0] - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert!(scalar.leaky_step(&[0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn memory_build_examples() {
        let mem = build_memory(&MemoryParams {
            n_m: 3,
            n_x: 1,
            omega_xm: 1.0,
            seed: 0,
        })
        .unwrap();
        assert_eq!(
            mem.v_m(),
            &Matrix::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap()
        );
        assert_eq!(spectral_radius(mem.v_m()).unwrap(), 1.0);
        assert!(build_memory(&MemoryParams {
            n_m: 0,
            n_x: 1,
            omega_xm: 1.0,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn silent_memory_stays_at_zero() {
        let mem = build_memory(&MemoryParams {
            n_m: 4,
            n_x: 2,
            omega_xm: 0.0,
            seed: 5,
        })
        .unwrap();
        let mut m = vec![0.0; 4];
        for t in 0..10 {
            m = mem.step(&m, &[t as f64, -1.0]).unwrap();
        }
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn memory_is_a_delay_line() {
        let mem =
            MemoryReservoir::with_input_weights(Matrix::column(&[1.0, 0.0, 0.0]).unwrap()).unwrap();
        let mut m = vec![0.0; 3];
        let expected = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
        ];
        for (t, want) in expected.iter().enumerate() {
            let x = if t == 0 { 1.0 } else { 0.0 };
            m = mem.step(&m, &[x]).unwrap();
            assert_eq!(m, want.to_vec(), "t={}", t + 1);
        }
    }

    #[test]
    fn memory_step_is_linear() {
        let mem = build_memory(&MemoryParams {
            n_m: 6,
            n_x: 3,
            omega_xm: 1.0,
            seed: 2,
        })
        .unwrap();
        let m0 = vec![0.3, -0.1, 0.7, 0.0, 0.2, -0.5];
        let zero_m = vec![0.0; 6];
        let (x1, x2) = ([0.5, -1.0, 0.25], [1.5, 0.75, -0.2]);
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
        let lhs = mem.step(&m0, &combo).unwrap();
        let s1 = mem.step(&zero_m, &x1).unwrap();
        let s2 = mem.step(&zero_m, &x2).unwrap();
        let vm = mem.v_m().matvec(&m0).unwrap();
        for i in 0..6 {
            let rhs = a * s1[i] + b * s2[i] + vm[i];
            assert!((lhs[i] - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn resesn_ortho_variants() {
        let id = build_resesn(&res_params(4, OrthoKind::Identity)).unwrap();
        assert_eq!(id.ortho().matrix(), &Matrix::identity(8).unwrap());

        let mut p = res_params(4, OrthoKind::Cyclic);
        p.n_h = 4;
        let cyc = build_resesn(&p).unwrap();
        let eig = eigenvalues(cyc.ortho().matrix()).unwrap();
        let roots = crate::linalg::Spectrum::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ]);
        assert!(eig.matched_distance(&roots).unwrap() < 1e-12);
    }

    #[test]
    fn ortho_choice_leaves_other_weights_alone() {
        let r = build_resesn(&res_params(9, OrthoKind::Random)).unwrap();
        let c = build_resesn(&res_params(9, OrthoKind::Cyclic)).unwrap();
        assert_eq!(r.w_h(), c.w_h());
        assert_eq!(r.w_x(), c.w_x());
        assert_eq!(r.bias(), c.bias());
        assert_eq!(r.w_m(), c.w_m());
        assert_ne!(r.ortho(), c.ortho());
    }

    #[test]
    fn resesn_without_residual_is_plain_esn() {
        let mut p = res_params(6, OrthoKind::Random);
        p.alpha = 0.0;
        p.beta = 1.0;
        p.n_m = 0;
        let res = build_resesn(&p).unwrap();
        let esn = LeakyEsn::from_parts(
            res.w_h().clone(),
            None,
            res.w_x().clone(),
            res.bias().to_vec(),
            1.0,
        )
        .unwrap();
        let h0: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) / 4.0).collect();
        let a = res.step(&h0, &[], &[0.3]).unwrap();
        let b = esn.leaky_step(&h0, &[0.3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resesn_scalar_example() {
        let res = ResEsn::from_parts(
            Orthogonal::identity(1).unwrap(),
            Matrix::zeros(1, 1).unwrap(),
            None,
            Matrix::identity(1).unwrap(),
            vec![0.0],
            0.5,
            0.5,
        )
        .unwrap();
        let h = res.step(&[0.0], &[], &[1.0]).unwrap();
        assert!((h[0] - 0.380_797_077_977_882_4).abs() < 1e-15);
    }

    #[test]
    fn resrmn_dimension_mismatch() {
        let mp = MemoryParams {
            n_m: 4,
            n_x: 1,
            omega_xm: 1.0,
            seed: 0,
        };
        let rp = res_params(0, OrthoKind::Random);
        assert!(build_resrmn(&mp, &rp).is_err());
        let mp = MemoryParams {
            n_m: 5,
            n_x: 1,
            omega_xm: 1.0,
            seed: 0,
        };
        assert!(build_resrmn(&mp, &rp).is_ok());
    }

    #[test]
    fn zero_input_keeps_origin() {
        let mp = MemoryParams {
            n_m: 5,
            n_x: 1,
            omega_xm: 1.0,
            seed: 0,
        };
        let mut rp = res_params(0, OrthoKind::Random);
        rp.omega_b = 0.0;
        let model = build_resrmn(&mp, &rp).unwrap();
        let seq = Matrix::zeros(20, 1).unwrap();
        let h = final_state(&model, &seq).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_drive_unrolls() {
        let mp = MemoryParams {
            n_m: 5,
            n_x: 1,
            omega_xm: 0.5,
            seed: 1,
        };
        let rp = res_params(1, OrthoKind::Cyclic);
        let model = build_resrmn(&mp, &rp).unwrap();
        let seq = Matrix::from_rows(&[[0.8]]).unwrap();
        let m = model.memory().step(&[0.0; 5], &[0.8]).unwrap();
        let h = model.resesn().step(&[0.0; 8], &m, &[0.8]).unwrap();
        assert_eq!(final_state(&model, &seq).unwrap(), h);
    }

    #[test]
    fn drive_rejects_wrong_feature_count() {
        let model = build_leaky_esn(&leaky_params(0, 1.0)).unwrap();
        let seq = Matrix::zeros(5, 3).unwrap();
        assert!(final_state(&model, &seq).is_err());
    }

    #[test]
    fn drive_is_repeatable() {
        let mp = MemoryParams {
            n_m: 5,
            n_x: 1,
            omega_xm: 1.0,
            seed: 3,
        };
        let model = build_resrmn(&mp, &res_params(3, OrthoKind::Random)).unwrap();
        let seq =
            Matrix::from_vec(30, 1, (0..30).map(|t| (t as f64 * 0.3).sin()).collect()).unwrap();
        let a = final_state(&model, &seq).unwrap();
        let b = final_state(&model, &seq).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let traj = trajectory(&model, &seq).unwrap();
        assert_eq!(traj.h.len(), 30);
        assert_eq!(traj.h.last().unwrap(), &a);
    }

    #[test]
    fn fed_drive_matches_direct_drive() {
        let seqs: Vec<Matrix> = (0..4)
            .map(|k| {
                Matrix::from_vec(
                    15,
                    2,
                    (0..30).map(|i| ((i * 3 + k) as f64 * 0.41).sin()).collect(),
                )
                .unwrap()
            })
            .collect();
        let feed = MemoryFeed::compute(8, 5, 21, &seqs).unwrap();
        let (omega_xm, omega_m) = (0.1, 0.5);
        let mut rp = res_params(21, OrthoKind::Random);
        rp.n_x = 2;
        rp.omega_m = omega_m;
        let mp = MemoryParams {
            n_m: 5,
            n_x: 2,
            omega_xm,
            seed: 21,
        };
        let res = Model::ResRmn(build_resrmn(&mp, &rp).unwrap());
        let lp = LeakyEsnParams {
            n_h: 8,
            n_x: 2,
            n_m: 5,
            omega_m,
            ..leaky_params(21, 0.9)
        };
        let rmn = Model::Rmn(build_rmn(&mp, &lp).unwrap());
        for model in [res, rmn] {
            let direct = final_states(&model, &seqs).unwrap();
            let fed = final_states_fed(&model, &feed, omega_m * omega_xm, &seqs).unwrap();
            assert!(direct.max_abs_diff(&fed).unwrap() <= 1e-12);
        }
        let leaky = Model::Leaky(
            build_leaky_esn(&LeakyEsnParams {
                n_x: 2,
                ..leaky_params(0, 1.0)
            })
            .unwrap(),
        );
        assert!(final_states_fed(&leaky, &feed, 1.0, &seqs).is_err());
        assert!(MemoryFeed::compute(8, 5, 21, &[]).is_err());
    }
}
