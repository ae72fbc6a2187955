mod common;

use common::*;
use proptest::prelude::*;
use sbar::analysis::{lemma1_mse, lemma2_min_mse, nmse};
use sbar::baselines::{fas_omp, random_switch_matrix, selmmse, selmmse_schedule};
use sbar::channel::{generate_ssc_channel, receive_pilots, ArrayGeometry, ChannelVector, PilotBatch, SscParams};
use sbar::gp::condition;
use sbar::kernels::{bessel_kernel, exponential_kernel, Kernel, KernelHyper, KernelLabel};
use sbar::linalg::hermitian_deviation;
use sbar::sbar::{design_plan, reconstruct};
use sbar::seed::rng_from_seed;
use sbar::C64;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parametric_kernels_are_hermitian_psd(n in 2usize..48, alpha in 0.1f64..3.0, eta in 0.05f64..0.5, order in 0u32..3) {
        let g = ArrayGeometry::ten_wavelengths(n).unwrap();
        let hyper = KernelHyper { alpha_sq: alpha, eta_sq: eta, bessel_order: order };
        let e = exponential_kernel(&g, KernelHyper { bessel_order: 0, ..hyper }).unwrap();
        prop_assert_eq!(hermitian_deviation(e.matrix()), 0.0);
        prop_assert!(e.variances().iter().all(|&v| (v - alpha).abs() <= 1e-12 * alpha));
        prop_assert!(e.psd_report().is_psd());
        let b = bessel_kernel(&g, hyper).unwrap();
        prop_assert_eq!(hermitian_deviation(b.matrix()), 0.0);
        prop_assert!(b.psd_report().is_psd());
    }

    #[test]
    fn kernel_bytes_round_trip(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let k = Kernel::from_matrix(random_psd(n, 0.1, &mut rng), KernelLabel::Custom).unwrap();
        let back = Kernel::read_from(&k.to_bytes()[..]).unwrap();
        prop_assert_eq!(back, k);
    }

    #[test]
    fn posterior_shrinks_variances(n in 1usize..10, seed in any::<u64>(), noise in 0.0f64..1.0) {
        let mut rng = rng_from_seed(seed);
        let sigma = random_psd(n, 0.05, &mut rng);
        let k = (seed as usize % n) + 1;
        let omega = random_ports(n, k, &mut rng);
        let kernel = Kernel::from_matrix(sigma, KernelLabel::Custom).unwrap();
        let y = random_vector(k, &mut rng);
        let post = condition(&kernel, &omega, &PilotBatch::new(y, noise).unwrap()).unwrap();
        prop_assert_eq!(hermitian_deviation(&post.covariance), 0.0);
        let prior = kernel.variances();
        for (v, p) in post.variances().iter().zip(&prior) {
            prop_assert!(*v >= -1e-10 * p && *v <= p + 1e-12 * p);
        }
        for &o in &omega {
            prop_assert!(post.variances()[o] <= noise + 1e-9);
        }
    }

    #[test]
    fn plans_obey_switching_constraints(n in 4usize..40, p in 1usize..5, m in 1usize..4, noise in 1e-4f64..1.0) {
        prop_assume!(p * m <= n);
        let g = ArrayGeometry::ten_wavelengths(n).unwrap();
        let k = bessel_kernel(&g, KernelHyper::default_for(&g)).unwrap();
        let plan = design_plan(&k, p, m, noise).unwrap();
        let s = plan.schedule.switch_matrix();
        prop_assert_eq!(&s * s.transpose(), nalgebra::DMatrix::<f64>::identity(p * m, p * m));
        prop_assert!(s.column_iter().all(|c| c.sum() <= 1.0));
        prop_assert_eq!(plan.weights.shape(), (p * m, n));
    }

    #[test]
    fn reconstruction_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = ArrayGeometry::ten_wavelengths(24).unwrap();
        let k = exponential_kernel(&g, KernelHyper::default_for(&g)).unwrap();
        let plan = design_plan(&k, 3, 2, 0.1).unwrap();
        let mut rng = rng_from_seed(seed);
        let (y1, y2) = (random_vector(6, &mut rng), random_vector(6, &mut rng));
        let c = C64::new(a, b);
        let r = |y| reconstruct(&plan, &PilotBatch::new(y, 0.1).unwrap()).unwrap().into_inner();
        let lhs = r(&y1 * c + &y2);
        let rhs = r(y1) * c + r(y2);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + a.abs() + b.abs()) * 10.0);
    }

    #[test]
    fn mismatched_mse_dominates_minimum(seed in any::<u64>(), noise in 0.001f64..1.0, k in 1usize..8) {
        let mut rng = rng_from_seed(seed);
        let sigma = Kernel::from_matrix(random_psd(8, 0.05, &mut rng), KernelLabel::Custom).unwrap();
        let cov = Kernel::from_matrix(random_psd(8, 0.05, &mut rng), KernelLabel::Custom).unwrap();
        let s = sbar::channel::PortSchedule::new(random_ports(8, k, &mut rng), k, 1, 8).unwrap();
        prop_assert!(lemma1_mse(&sigma, &cov, &s, noise).unwrap() >= lemma2_min_mse(&cov, noise).unwrap() - 1e-9);
    }

    #[test]
    fn omp_support_and_selmmse_hold(seed in 0u64..1000, p in 1usize..6, l in 1usize..6) {
        let g = ArrayGeometry::ten_wavelengths(48).unwrap();
        let h = generate_ssc_channel(&g, &SscParams::sparse_default(), seed).unwrap();
        let s = random_switch_matrix(48, p, 4, seed).unwrap();
        let y = receive_pilots(&h, &s, 0.05, seed).unwrap();
        let l = l.min(4 * p);
        let est = fas_omp(&y, &s, &g, l).unwrap();
        let mut support = est.support.clone();
        support.sort_unstable();
        support.dedup();
        prop_assert_eq!(support.len(), l);

        let eq = selmmse_schedule(48, p, 4).unwrap();
        let y = receive_pilots(&h, &eq, 0.05, seed).unwrap();
        let z = selmmse(&y, &g, p, 4).unwrap();
        for (i, &port) in eq.indices().iter().enumerate() {
            prop_assert_eq!(z.entries()[port], y.observations[i]);
        }
    }

    #[test]
    fn nmse_ignores_common_scaling(seed in 0u64..1000, re in -5.0f64..5.0, im in -5.0f64..5.0) {
        prop_assume!(re.abs() + im.abs() > 1e-3);
        let g = ArrayGeometry::ten_wavelengths(16).unwrap();
        let p = SscParams::sparse_default();
        let pairs: Vec<_> = (0..4)
            .map(|i| (generate_ssc_channel(&g, &p, seed + i).unwrap(), generate_ssc_channel(&g, &p, seed + 100 + i).unwrap()))
            .collect();
        let c = C64::new(re, im);
        let scaled: Vec<_> = pairs
            .iter()
            .map(|(a, b)| (ChannelVector::new(a.entries() * c).unwrap(), ChannelVector::new(b.entries() * c).unwrap()))
            .collect();
        prop_assert!((nmse(&pairs).unwrap().nmse_db - nmse(&scaled).unwrap().nmse_db).abs() <= 1e-12);
    }
}
