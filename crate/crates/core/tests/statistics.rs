//! Monte-Carlo invariants of the channel, CSI and rate models.

use dcsi_core::channel::{sample_channel, RngSeed};
use dcsi_core::csi::{build_tx_csi, statistical_estimate, BitSource, CsiModel, CsiScalingMatrix};
use dcsi_core::doftheory::{dof_apzf, dof_apzf_hq, dof_bzf, dof_czf, dof_czf_hq, select_passive_set, DofReport};
use dcsi_core::precoders::{distributed_precoder, PrecoderOptions, Scheme};
use dcsi_core::ratesim::{dof_slope, ergodic_curve, paired_sum_difference, rates_and_leakage, SimConfig};

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn sim(scheme: &str, alpha: &str, snr: &[f64], trials: usize, seed: u64) -> SimConfig {
    let alpha: CsiScalingMatrix = alpha.parse().unwrap();
    SimConfig {
        k: alpha.k(),
        alpha,
        model: CsiModel::Statistical,
        bits: None,
        nested: false,
        scheme: scheme.parse().unwrap(),
        snr_db: snr.to_vec(),
        trials,
        seed,
        options: Default::default(),
    }
}

#[test]
fn channel_directions_are_isotropic() {
    for k in [2usize, 3, 4] {
        let n = 100_000u64;
        let mean: f64 =
            (0..n).map(|t| sample_channel(k, RngSeed::new(11, t)).unwrap().direction(0)[0].norm_sqr()).sum::<f64>()
                / n as f64;
        let target = 1.0 / k as f64;
        assert!((mean - target).abs() <= 0.01, "K={k}: {mean} vs {target}");
    }
}

#[test]
fn streams_are_uncorrelated() {
    let n = 10_000u64;
    let (a, b): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|t| {
            let x = sample_channel(2, RngSeed::new(t, 1)).unwrap().channel(0)[0].re;
            let y = sample_channel(2, RngSeed::new(t, 2)).unwrap().channel(0)[0].re;
            (x, y)
        })
        .unzip();
    let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (m(&a), m(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() < 0.02, "corr {corr}");
}

/// The chordal distance `1 - |h^H h_hat|^2` decays as `P^{-min(alpha, 1)}`.
#[test]
fn statistical_error_scales_with_exponent() {
    let snr_db = [20.0, 30.0, 40.0, 50.0, 60.0];
    for alpha in [0.3, 0.7, 1.0, 1.6] {
        let x: Vec<f64> = snr_db.iter().map(|d| d / 10.0 * 10f64.log2()).collect();
        let y: Vec<f64> = snr_db
            .iter()
            .map(|d| {
                let p = 10f64.powf(d / 10.0);
                let n = 20_000u64;
                let mean = (0..n)
                    .map(|t| {
                        let h = sample_channel(3, RngSeed::new(3, t)).unwrap().direction(0);
                        let e = statistical_estimate(&h, alpha, p, RngSeed::new(4, t)).unwrap();
                        1.0 - h.dot(&e).norm_sqr()
                    })
                    .sum::<f64>()
                    / n as f64;
                mean.log2()
            })
            .collect();
        let slope = least_squares_slope(&x, &y);
        let expected = -f64::min(alpha, 1.0);
        assert!((slope - expected).abs() <= 0.05, "alpha {alpha}: slope {slope}");
    }
}

/// Slope of `E[log2(total leakage / scale(P))]` against `log2 P`, where
/// `scale` is the transmit power scale of the scheme.
fn leakage_slope(scheme: Scheme, alpha: &CsiScalingMatrix, trials: u64, scale: fn(f64) -> f64) -> f64 {
    let k = alpha.k();
    let snr_db = [40.0, 50.0, 60.0, 70.0, 80.0];
    let x: Vec<f64> = snr_db.iter().map(|d| d / 10.0 * 10f64.log2()).collect();
    let y: Vec<f64> = snr_db
        .iter()
        .map(|d| {
            let p = 10f64.powf(d / 10.0);
            (0..trials)
                .map(|t| {
                    let s = RngSeed::new(21, t);
                    let ch = sample_channel(k, s.child(1)).unwrap();
                    let csi =
                        build_tx_csi(&ch, alpha, p, CsiModel::Statistical, &BitSource::FromScaling, false, s.child(2))
                            .unwrap();
                    let t = distributed_precoder(scheme, &csi, alpha, p, &PrecoderOptions::default()).unwrap();
                    let (_, leak) = rates_and_leakage(&ch, &t).unwrap();
                    (leak.iter().sum::<f64>() / scale(p)).log2()
                })
                .sum::<f64>()
                / trials as f64
        })
        .collect();
    least_squares_slope(&x, &y)
}

fn weakest_user(r: &DofReport) -> f64 {
    r.per_user.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[test]
fn leakage_decays_with_the_relevant_exponent() {
    let alpha: CsiScalingMatrix = "0.8,0.4;0.3,0.6".parse().unwrap();
    let apzf = dof_apzf(&alpha, &select_passive_set(&alpha, false)).unwrap();
    // The DoF-optimal active-passive power scale is P / log2 P.
    let linear: fn(f64) -> f64 = |p| p;
    let cases = [
        (Scheme::Czf, weakest_user(&dof_czf(&alpha)), linear),
        (Scheme::Bzf, weakest_user(&dof_bzf(&alpha)), linear),
        (Scheme::Apzf(dcsi_core::ApzfVariant::DofOptimal), weakest_user(&apzf), |p: f64| p / p.log2()),
    ];
    for (scheme, exponent, scale) in cases {
        let slope = leakage_slope(scheme, &alpha, 2000, scale);
        assert!((slope + exponent).abs() <= 0.1, "{scheme}: slope {slope}, expected {}", -exponent);
    }
}

#[test]
fn perfect_zf_rate_grows_with_snr() {
    let snr: Vec<f64> = (0..=8).map(|i| i as f64 * 5.0).collect();
    let c = ergodic_curve(&sim("perfect-zf", "inf,inf,inf;inf,inf,inf;inf,inf,inf", &snr, 1000, 8)).unwrap();
    for p in 1..snr.len() {
        let floor = c.sum_rate[p - 1] - 3.0 * c.stderr_sum[p].max(c.stderr_sum[p - 1]);
        assert!(c.sum_rate[p] >= floor, "{} dB: {} < {}", snr[p], c.sum_rate[p], c.sum_rate[p - 1]);
    }
}

fn closed_forms(alpha: &CsiScalingMatrix) -> Vec<(&'static str, f64)> {
    vec![
        ("czf", dof_czf(alpha).total),
        ("rzf", dof_czf(alpha).total),
        ("bzf", dof_bzf(alpha).total),
        ("apzf", dof_apzf(alpha, &select_passive_set(alpha, false)).unwrap().total),
        ("czf-hq", dof_czf_hq(alpha).total),
        ("apzf-hq", dof_apzf_hq(alpha, None).unwrap().total),
    ]
}

fn check_slopes(alpha_text: &str, window: [f64; 4], tol: f64) {
    let alpha: CsiScalingMatrix = alpha_text.parse().unwrap();
    for (scheme, dof) in closed_forms(&alpha) {
        let cfg = sim(scheme, alpha_text, &window, 2000, 5);
        let est = dof_slope(&ergodic_curve(&cfg).unwrap(), window[0], window[3]).unwrap();
        assert!((est.sum.slope - dof).abs() <= tol, "{alpha_text} {scheme}: slope {} vs {dof}", est.sum.slope);
    }
}

#[test]
fn two_user_slopes_match_closed_forms() {
    for alpha in ["1,0.5;0,0.7", "0.8,0.4;0.3,0.6"] {
        check_slopes(alpha, [50.0, 60.0, 70.0, 80.0], 0.2);
    }
    let mut cfg = sim("perfect-zf", "inf,inf;inf,inf", &[50.0, 60.0, 70.0, 80.0], 2000, 5);
    cfg.alpha = CsiScalingMatrix::perfect(2);
    let est = dof_slope(&ergodic_curve(&cfg).unwrap(), 50.0, 80.0).unwrap();
    assert!((est.sum.slope - 2.0).abs() <= 0.2);
}

/// With three users several leakage terms have close exponents, so the
/// slope settles only at very high SNR.
#[test]
fn three_user_slopes_converge_to_closed_forms() {
    for alpha in ["1,0.6,0.4;0.3,0.9,0.7;0.8,0.5,1", "0.3,1,1;1,1,1;1,1,0.5"] {
        check_slopes(alpha, [170.0, 180.0, 190.0, 200.0], 0.15);
    }
}

#[test]
fn high_snr_ordering() {
    let alpha = "1,0.5;0,0.7";
    let curve = |s: &str| ergodic_curve(&sim(s, alpha, &[60.0], 2000, 9)).unwrap();
    let (czf, bzf, apzf) = (curve("czf"), curve("bzf"), curve("apzf"));
    let d1 = paired_sum_difference(&bzf, &czf, 0).unwrap();
    let d2 = paired_sum_difference(&apzf, &bzf, 0).unwrap();
    assert!(d1.slope >= 3.0 * d1.stderr, "bzf - czf = {} ± {}", d1.slope, d1.stderr);
    assert!(d2.slope >= 3.0 * d2.stderr, "apzf - bzf = {} ± {}", d2.slope, d2.stderr);
}
