use gfree_core::bigabp::denoise::{denoise_h, denoise_x};
use gfree_core::bigabp::{soft_ic, BeliefState};
use gfree_core::detectors::zf_detect;
use gfree_core::frame_design::{
    csidco_refine, design_pilots, mutual_coherence, welch_bound, CsidcoConfig, FrameMatrix,
};
use gfree_core::init_ce::{mmv_amp, AmpConfig};
use gfree_core::metrics::{
    ber_with_lost_bits, detection_errors, effective_throughput, nmse, spearman,
};
use gfree_core::signal::qpsk_gray;
use gfree_core::{seed, CMatrix, Complex64, RMatrix};
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

fn gaussian(rows: usize, cols: usize, s: u64) -> CMatrix {
    gfree_core::linalg::complex_normal_matrix(rows, cols, 1.0, &mut seed::rng(s))
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..6).prop_flat_map(|j| (Just(j), (j + 1)..=(j * j)))
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn welch_bounds_any_frame((j, l) in dims(), s in any::<u64>()) {
        let f = FrameMatrix::random_gaussian(j, l, &mut seed::rng(s)).unwrap();
        let mu = mutual_coherence(&f).unwrap();
        prop_assert!(welch_bound(j, l).unwrap() <= mu + 1e-12);
        prop_assert!(mu <= 1.0);
    }

    #[test]
    fn qpsk_round_trip(bits in prop::collection::vec(any::<bool>(), 0..64)) {
        let bits = if bits.len() % 2 == 1 { bits[1..].to_vec() } else { bits };
        let q = qpsk_gray();
        let syms = q.modulate(&bits).unwrap();
        prop_assert!(syms.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
        prop_assert_eq!(q.demodulate(&syms), bits);
    }

    #[test]
    fn ber_and_detection_counts(
        rows in prop::collection::vec((any::<bool>(), any::<bool>(), prop::collection::vec(any::<(bool, bool)>(), 4)), 1..12)
    ) {
        let at: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let ah: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let bt: Vec<Vec<bool>> = rows.iter().map(|r| r.2.iter().map(|p| p.0).collect()).collect();
        let bh: Vec<Vec<bool>> = rows.iter().map(|r| r.2.iter().map(|p| p.1).collect()).collect();
        let b = ber_with_lost_bits(&bt, &bh, &at, &ah).unwrap();
        prop_assert!((0.0..=1.0).contains(&b.ber));
        let (md, fa) = detection_errors(&at, &ah).unwrap();
        let active = at.iter().filter(|a| **a).count();
        prop_assert!(md <= active);
        prop_assert!(md + fa <= at.len());
        prop_assert_eq!(b.lost_bits, md * 4);
    }

    #[test]
    fn throughput_within_payload(pe in 0.0f64..=1.0, kd in 0usize..500, b in 1usize..8) {
        let t = effective_throughput(pe, kd, b).unwrap();
        prop_assert!(t >= 0.0 && t <= (kd * b) as f64);
    }

    #[test]
    fn nmse_zero_on_self(r in 1usize..6, c in 1usize..6, s in any::<u64>()) {
        let h = gaussian(r, c, s);
        prop_assert_eq!(nmse(&h, &h).unwrap(), Some(0.0));
        prop_assert!(nmse(&h, &CMatrix::zeros(r, c)).unwrap().unwrap() == 1.0);
    }

    #[test]
    fn spearman_range(a in prop::collection::vec(-1e3f64..1e3, 2..20), s in any::<u64>()) {
        let mut b = a.clone();
        b.rotate_left((s % a.len() as u64) as usize);
        if let Some(rho) = spearman(&a, &b) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rho));
        }
        if let Some(rho) = spearman(&a, &a) {
            prop_assert!((rho - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_denoiser_shrinks(
        obs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.01f64..10.0, 0.01f64..10.0), 1..8),
        lambda in 0.05f64..0.95,
    ) {
        let mu: Vec<Complex64> = obs.iter().map(|o| Complex64::new(o.0, o.1)).collect();
        let sigma: Vec<f64> = obs.iter().map(|o| o.2).collect();
        let gamma: Vec<f64> = obs.iter().map(|o| o.3).collect();
        let mut mean = vec![Complex64::new(0.0, 0.0); mu.len()];
        let mut var = vec![0.0; mu.len()];
        let st = denoise_h(&mu, &sigma, &gamma, lambda, &mut mean, &mut var);
        prop_assert!(st.tau >= 1.0);
        for i in 0..mu.len() {
            prop_assert!(var[i] >= 0.0);
            prop_assert!(mean[i].norm() <= mu[i].norm() + 1e-12);
        }
    }

    #[test]
    fn symbol_denoiser_bounded(
        re in -50.0f64..50.0, im in -50.0f64..50.0,
        psi in 1e-3f64..10.0, tau in 1.0f64..1e6, g in 0.0f64..100.0,
    ) {
        let (x, v) = denoise_x(Complex64::new(re, im), psi, tau, g);
        prop_assert!(x.norm() <= 1.0 + 1e-12);
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn residual_variance_exceeds_noise(n in 1usize..4, m in 1usize..4, k in 2usize..5, s in any::<u64>(), n0 in 0.1f64..3.0) {
        let pilots = gaussian(m, 1, s);
        let h0 = gaussian(n, m, s ^ 1);
        let psi0 = RMatrix::from_fn(n, m, |a, u| 0.1 * (a + u) as f64);
        let state = BeliefState::new(&pilots, k, &h0, &psi0).unwrap();
        let y = gaussian(n, k, s ^ 2);
        let gamma = RMatrix::from_element(n, m, 1.0);
        let r = soft_ic(&y, &state, &gamma, n0).unwrap();
        prop_assert!(r.v_y.iter().all(|&v| v >= n0));
    }

    #[test]
    fn zf_recovers_noiseless_symbols(n in 4usize..8, m in 1usize..4, kd in 1usize..6, s in any::<u64>()) {
        let q = qpsk_gray();
        let bits: Vec<bool> = (0..2 * m * kd).map(|i| (s >> (i % 64)) & 1 == 1).collect();
        let syms = q.modulate(&bits).unwrap();
        let x = CMatrix::from_row_slice(m, kd, &syms);
        let h = gaussian(n, m, s);
        let out = zf_detect(&(&h * &x), &h, &vec![true; m]).unwrap();
        prop_assert!((out.x_hard - x).norm() < 1e-9);
    }
}

proptest! {
    #![proptest_config(cases(8))]

    #[test]
    fn mmv_amp_output_is_finite(n in 1usize..5, m in 2usize..8, kp in 2usize..6, s in any::<u64>(), lambda in 0.1f64..0.9) {
        let pilots = gaussian(m, kp, s);
        let h = gaussian(n, m, s ^ 3);
        let y = &h * &pilots + gaussian(n, kp, s ^ 4) * Complex64::new(0.1, 0.0);
        let gamma = RMatrix::from_element(n, m, 1.0);
        let est = mmv_amp(&y, &pilots, &gamma, lambda, 0.01, &AmpConfig::default()).unwrap();
        prop_assert!(est.h_hat.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        prop_assert!(est.psi_h.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!(est.tau.iter().all(|t| *t >= 1.0));
    }

    #[test]
    fn decorrelation_never_raises_coherence((j, l) in dims(), s in any::<u64>()) {
        let start = FrameMatrix::random_gaussian(j, l, &mut seed::rng(s)).unwrap();
        let cfg = CsidcoConfig { outer_iterations: 3, seed: s, ..CsidcoConfig::default() };
        let d = csidco_refine(start, &cfg).unwrap();
        if d.rerandomized == 0 {
            prop_assert!(d.coherence_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn designed_frame_beats_its_start((j, l) in dims(), s in any::<u64>()) {
        let cfg = CsidcoConfig { outer_iterations: 2, tighten_rounds: 50, seed: s, ..CsidcoConfig::default() };
        let d = design_pilots(j, l, &cfg).unwrap();
        let mu = mutual_coherence(&d.frame).unwrap();
        prop_assert!(welch_bound(j, l).unwrap() <= mu + 1e-12);
        if d.rerandomized == 0 {
            prop_assert!(mu <= d.initial_coherence() + 1e-12);
        }
    }
}
