use proptest::prelude::*;
use pulse_csc::csc::{
    correlate_adjoint, reconstruct, smooth_soft_threshold, soft_threshold, Dictionary, Shrinkage,
    SparseCode,
};
use pulse_csc::eval::{
    bland_altman, detect_peaks, hr_from_peaks, mae_hr, snr_db, wilcoxon_exact, Alternative,
    PeakConfig,
};
use pulse_csc::signal::{
    design_cheby2_bandpass, filter_signal, normalize_01, resample, BandPassSpec,
};
use pulse_csc::unfolded::init_random;
use pulse_csc::Signal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_in(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_linear(x in vec_in(300, -2.0, 2.0), z in vec_in(300, -2.0, 2.0),
                        a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let c = design_cheby2_bandpass(&BandPassSpec::default(), 125.0).unwrap();
        let fx = filter_signal(&Signal::new(x.clone(), 125.0).unwrap(), &c);
        let fz = filter_signal(&Signal::new(z.clone(), 125.0).unwrap(), &c);
        let mix: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
        let fm = filter_signal(&Signal::new(mix, 125.0).unwrap(), &c);
        let expect: Vec<f64> =
            fx.samples().iter().zip(fz.samples()).map(|(p, q)| a * p + b * q).collect();
        let scale = max_abs(&expect).max(max_abs(fm.samples())).max(1e-300);
        for (u, v) in fm.samples().iter().zip(&expect) {
            prop_assert!((u - v).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn designed_filters_are_stable(low in 0.05..30.0f64, width in 0.2..1.0f64,
                                   order in prop::sample::select(vec![2usize, 4, 6, 8]),
                                   atten in 20.0..80.0f64) {
        let fs = 125.0;
        let high = low + width * (fs / 2.0 - low) * 0.99;
        prop_assume!(high > low);
        let spec = BandPassSpec { order, low_hz: low, high_hz: high, stop_atten_db: atten };
        let c = design_cheby2_bandpass(&spec, fs).unwrap();
        prop_assert!(c.is_stable());
    }

    #[test]
    fn normalization_is_affine_invariant(x in vec_in(50, -10.0, 10.0),
                                         a in 0.01..100.0f64, b in -100.0..100.0f64) {
        let n1 = normalize_01(&Signal::new(x.clone(), 125.0).unwrap());
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let n2 = normalize_01(&Signal::new(y, 125.0).unwrap());
        for (u, v) in n1.signal.samples().iter().zip(n2.signal.samples()) {
            prop_assert!((0.0..=1.0).contains(u));
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_round_trip_recovers_band_limited_input(
        pair in prop::sample::select(vec![(125.0f64, 250.0f64), (125.0, 100.0), (100.0, 125.0), (125.0, 500.0)]),
        freqs in prop::collection::vec(0.02..0.4f64, 1..4),
        phases in prop::collection::vec(0.0..6.28f64, 3),
    ) {
        let (fs, other) = pair;
        let f_max = 0.4 * fs.min(other);
        let n = 1000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                freqs.iter().zip(&phases)
                    .map(|(f, p)| (2.0 * std::f64::consts::PI * f * f_max * t + p).sin())
                    .sum()
            })
            .collect();
        let sig = Signal::new(x.clone(), fs).unwrap();
        let back = resample(&resample(&sig, other).unwrap(), fs).unwrap();
        prop_assert_eq!(back.len(), n);
        let err: f64 = x.iter().zip(back.samples()).map(|(a, b)| (a - b).powi(2)).sum();
        let energy: f64 = x.iter().map(|a| a * a).sum();
        prop_assert!((err / energy).sqrt() < 1e-2, "relative rms {}", (err / energy).sqrt());
    }

    #[test]
    fn soft_threshold_is_odd_and_non_expansive(a in -10.0..10.0f64, b in -10.0..10.0f64,
                                               theta in 1e-6..5.0f64) {
        let sa = soft_threshold(a, theta).unwrap();
        prop_assert_eq!(soft_threshold(-a, theta).unwrap(), -sa);
        prop_assert!((sa - soft_threshold(b, theta).unwrap()).abs() <= (a - b).abs() + 1e-12);
    }

    #[test]
    fn smooth_threshold_stays_within_softplus_bound(x in -10.0..10.0f64, theta in 1e-6..5.0f64) {
        let beta = 50.0;
        let gap = (smooth_soft_threshold(x, theta, beta).unwrap() - soft_threshold(x, theta).unwrap()).abs();
        prop_assert!(gap <= 2.0 * std::f64::consts::LN_2 / beta + 1e-15);
    }

    #[test]
    fn reconstruction_adjoint_and_linearity(seed in 0u64..1000, m in 1usize..5, l in 1usize..10,
                                            n in 10usize..60, alpha in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Dictionary::random(m, l, &mut rng).unwrap();
        let draw = |r: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
            (0..k).map(|_| rand::Rng::random_range(r, -1.0..1.0)).collect()
        };
        let x1 = SparseCode::from_columns(n, m, draw(&mut rng, n * m)).unwrap();
        let x2 = SparseCode::from_columns(n, m, draw(&mut rng, n * m)).unwrap();
        let r = draw(&mut rng, n);
        let lhs: f64 = reconstruct(&d, &x1).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs = x1.inner(&correlate_adjoint(&d, &r));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));

        let combo: Vec<f64> =
            x1.as_slice().iter().zip(x2.as_slice()).map(|(a, b)| alpha * a + b).collect();
        let xc = SparseCode::from_columns(n, m, combo).unwrap();
        let rc = reconstruct(&d, &xc).unwrap();
        let r1 = reconstruct(&d, &x1).unwrap();
        let r2 = reconstruct(&d, &x2).unwrap();
        for ((c, a), b) in rc.iter().zip(&r1).zip(&r2) {
            prop_assert!((c - (alpha * a + b)).abs() < 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn forward_is_pure_and_thresholds_positive(seed in 0u64..1000, k in 1usize..5) {
        let mut model = init_random(3, 5, k, seed).unwrap();
        model.set_shrinkage(Shrinkage::Exact);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..40).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect();
        let t1 = model.forward(&y).unwrap();
        let t2 = model.forward(&y).unwrap();
        prop_assert_eq!(&t1.output, &t2.output);
        for fold in 0..model.folds() {
            prop_assert!(model.effective_thresholds(fold).iter().all(|t| *t > 0.0));
        }
    }

    #[test]
    fn snr_is_scale_invariant(y in vec_in(64, -2.0, 2.0), e in vec_in(64, -0.5, 0.5),
                              alpha in 0.001..1000.0f64) {
        let yh: Vec<f64> = y.iter().zip(&e).map(|(a, b)| a + b).collect();
        let s1 = snr_db(&y, &yh).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| alpha * v).collect();
        let yhs: Vec<f64> = yh.iter().map(|v| alpha * v).collect();
        let s2 = snr_db(&ys, &yhs).unwrap();
        prop_assert!((s1.db - s2.db).abs() < 1e-9);
    }

    #[test]
    fn peaks_are_increasing_and_separated(x in vec_in(500, -1.0, 1.0),
                                          fs in prop::sample::select(vec![50.0, 125.0, 250.0])) {
        let cfg = PeakConfig::default();
        let p = detect_peaks(&x, fs, &cfg);
        for w in p.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!((w[1] - w[0]) as f64 >= cfg.min_separation_s * fs);
        }
    }

    #[test]
    fn mae_hr_is_symmetric_and_non_negative(
        a in prop::collection::btree_set(0usize..1250, 2..30),
        b in prop::collection::btree_set(0usize..1250, 2..30),
    ) {
        let (a, b): (Vec<usize>, Vec<usize>) = (a.into_iter().collect(), b.into_iter().collect());
        let sa = hr_from_peaks(&a, 125.0, 1250, 4.0, 1.0);
        let sb = hr_from_peaks(&b, 125.0, 1250, 4.0, 1.0);
        if let Ok(m) = mae_hr(&sa, &sb) {
            prop_assert!(m >= 0.0);
            prop_assert_eq!(m, mae_hr(&sb, &sa).unwrap());
        }
        if let Ok(m) = mae_hr(&sa, &sa) {
            prop_assert_eq!(m, 0.0);
        }
    }

    #[test]
    fn bland_altman_limits_are_ordered(pairs in prop::collection::vec((-200.0..200.0f64, -200.0..200.0f64), 3..40)) {
        let (r, e): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ba = bland_altman(&r, &e).unwrap();
        prop_assert!(ba.loa_low <= ba.mean_diff && ba.mean_diff <= ba.loa_high);
    }

    #[test]
    fn exact_wilcoxon_p_is_a_monotone_probability(
        mags in prop::collection::vec(0.1..10.0f64, 1..16),
        s1 in prop::collection::vec(any::<bool>(), 16),
        s2 in prop::collection::vec(any::<bool>(), 16),
    ) {
        let signed = |s: &[bool]| -> Vec<f64> {
            mags.iter().zip(s).map(|(m, p)| if *p { *m } else { -m }).collect()
        };
        let zeros = vec![0.0; mags.len()];
        let r1 = wilcoxon_exact(&signed(&s1), &zeros, Alternative::ALess).unwrap();
        let r2 = wilcoxon_exact(&signed(&s2), &zeros, Alternative::ALess).unwrap();
        for r in [&r1, &r2] {
            prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        }
        if r1.w_plus <= r2.w_plus {
            prop_assert!(r1.p_value <= r2.p_value);
        } else {
            prop_assert!(r1.p_value >= r2.p_value);
        }
    }
}
