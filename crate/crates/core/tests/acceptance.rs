//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::io::Write;
use std::time::Instant;

use dcsi_core::channel::{sample_channel, RngSeed};
use dcsi_core::csi::{
    ancestor, build_tx_csi, distortion_bounds, empirical_distortion, make_hier_codebook, row_hier_codebook, BitMatrix,
    BitSource, CsiModel, CsiScalingMatrix,
};
use dcsi_core::doftheory::{apzf_literal, dof_apzf, dof_apzf_hq, dof_czf, dof_czf_hq, select_passive_set, PassiveSet};
use dcsi_core::feedback_alloc::{allocate_czf, czf_activation, czf_saturation};
use dcsi_core::precoders::{apply_hq_common_csi, centralized_zf, distributed_precoder, shared_csi, HqScheme, Scheme};
use dcsi_core::ratesim::{dof_slope, ergodic_curve, paired_sum_difference, RateCurve, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Written straight to stderr so the line shows even when output is captured.
fn report(id: u32, name: &'static str, start: Instant, pass: bool, detail: String) -> Outcome {
    let _ = writeln!(
        std::io::stderr(),
        "{} [{id}] {name} ({:.1} s): {detail}",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    Outcome { id, name, pass, detail }
}

fn reference_matrix() -> CsiScalingMatrix {
    let mut a = vec![vec![1.0; 7]; 7];
    a[0][0] = 0.0;
    a[4][5] = 0.3;
    CsiScalingMatrix::new(a).unwrap()
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

const WINDOW: [f64; 4] = [50.0, 60.0, 70.0, 80.0];
const FIG2: &str = "1,0.5;0,0.7";

fn slope_of(cfg: &SimConfig) -> (f64, f64) {
    let c = ergodic_curve(cfg).unwrap();
    let s = dof_slope(&c, 50.0, 80.0).unwrap();
    (s.sum.slope, s.sum.stderr)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let a = reference_matrix();
    let s = select_passive_set(&a, false);
    let got = [
        dof_czf(&a).total,
        dof_apzf(&a, &s).unwrap().total,
        dof_czf_hq(&a).total,
        dof_apzf_hq(&a, None).unwrap().total,
    ];
    let want = [0.0, 2.1, 5.3, 6.3];
    let pass = got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-12) && t.elapsed().as_secs_f64() < 1.0;
    report(1, "7x7 reference DoF table", t, pass, format!("czf/apzf/czf-hq/apzf-hq = {got:?}, expected {want:?}"))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let sat: Vec<f64> = (1..=5).map(czf_saturation).collect();
    let act: Vec<f64> = (1..=5).map(czf_activation).collect();
    // The allocator must realise these points: n users saturate (dof = n) at
    // n^2(n-1) and user n+1 activates just above n^2(n+1).
    let mut consistent = true;
    for n in 1..=5usize {
        let p = allocate_czf(sat[n - 1]).unwrap();
        consistent &= p.n_active == n && p.dof == n as f64;
        let at = allocate_czf(act[n - 1]).unwrap();
        let above = allocate_czf(act[n - 1] + 1e-9).unwrap();
        consistent &= at.n_active == n && above.n_active == n + 1;
    }
    let pass = sat == [0.0, 4.0, 18.0, 48.0, 100.0]
        && act == [2.0, 12.0, 36.0, 80.0, 150.0]
        && consistent
        && t.elapsed().as_secs_f64() < 1.0;
    report(
        2,
        "feedback allocation breakpoints",
        t,
        pass,
        format!("saturation {sat:?}, activation {act:?}, allocator consistent: {consistent}"),
    )
}

fn criterion_3_and_4() -> (Outcome, Outcome) {
    let t = Instant::now();
    let trials = 2000;
    let (czf, czf_se) = slope_of(&sim("czf", FIG2, &WINDOW, trials, 31));
    let (bzf, bzf_se) = slope_of(&sim("bzf", FIG2, &WINDOW, trials, 31));
    let (apzf, apzf_se) = slope_of(&sim("apzf", FIG2, &WINDOW, trials, 31));
    let (perfect, perfect_se) = slope_of(&sim("perfect-zf", FIG2, &WINDOW, trials, 31));
    let pass3 = czf.abs() <= 0.15 && (bzf - 0.5).abs() <= 0.2 && apzf >= 1.5 && (perfect - 2.0).abs() <= 0.1;
    let o3 = report(
        3,
        "two-user DoF slopes",
        t,
        pass3,
        format!(
            "czf {czf:.3}±{czf_se:.3} (0±0.15), bzf {bzf:.3}±{bzf_se:.3} (0.5±0.2), apzf {apzf:.3}±{apzf_se:.3} (>=1.5), perfect {perfect:.3}±{perfect_se:.3} (2±0.1)"
        ),
    );
    let t = Instant::now();
    let (rzf, rzf_se) = slope_of(&sim("rzf", FIG2, &WINDOW, trials, 31));
    let pass4 = (rzf - czf).abs() <= 0.15;
    let o4 = report(
        4,
        "robust ZF slope matches conventional ZF",
        t,
        pass4,
        format!("rzf {rzf:.3}±{rzf_se:.3}, czf {czf:.3}, |diff| {:.3} (<=0.15)", (rzf - czf).abs()),
    );
    (o3, o4)
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut cells = Vec::new();
    for k in [2usize, 3] {
        for b in [4u32, 8, 12] {
            let bounds = distortion_bounds(k, b);
            let stats = empirical_distortion(k, b, 1000, 100, RngSeed::new(5000 + b as u64, k as u64)).unwrap();
            let mean_ok = stats.mean_sin2 >= bounds.mean_lower * 0.95 && stats.mean_sin2 <= bounds.mean_upper * 1.05;
            let log_ok = stats.mean_neg_log2 >= bounds.log_lower - 0.2 && stats.mean_neg_log2 <= bounds.log_upper + 0.2;
            pass &= mean_ok && log_ok && stats.trials >= 100_000;
            cells.push(format!(
                "K={k} B={b}: E[sin2]={:.3e} in [{:.3e},{:.3e}] {}, E[-log2]={:.3} in [{:.3},{:.3}] {}",
                stats.mean_sin2,
                bounds.mean_lower * 0.95,
                bounds.mean_upper * 1.05,
                if mean_ok { "ok" } else { "OUT" },
                stats.mean_neg_log2,
                bounds.log_lower - 0.2,
                bounds.log_upper + 0.2,
                if log_ok { "ok" } else { "OUT" },
            ));
        }
    }
    report(5, "random codebook distortion bounds", t, pass, cells.join("; "))
}

fn criterion_6() -> Outcome {
    let t = Instant::now();
    let mut checked = 0u64;
    let mut nested = true;
    for max_bits in 0..=8u32 {
        for k in [2usize, 3] {
            let hcb = make_hier_codebook(k, max_bits, RngSeed::new(600 + max_bits as u64, k as u64)).unwrap();
            for idx in 0..1usize << max_bits {
                for l2 in 0..=max_bits {
                    let fine = hcb.bin_of(idx, l2);
                    nested &= hcb.members(l2, fine).contains(&idx);
                    for l1 in 0..l2 {
                        nested &= hcb.bin_of(idx, l1) == ancestor(fine, l2, l1);
                        checked += 1;
                    }
                }
            }
            for level in 0..=max_bits {
                for bin in 0..1u64 << level {
                    let rep = hcb.representative(level, bin);
                    nested &= hcb.members(level, bin).contains(&rep);
                }
            }
        }
    }

    // Every TX reconstructs the common estimate from its own decode and the
    // shared codebook; the result must be bit-identical to the coarsest one.
    let mut identical = true;
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for trial in 0..200u64 {
        let k = 2 + (trial % 3) as usize;
        let bits = BitMatrix::new((0..k).map(|_| (0..k).map(|_| rng.random_range(0..=8)).collect()).collect()).unwrap();
        let ch = sample_channel(k, RngSeed::new(67, trial)).unwrap();
        let alpha = CsiScalingMatrix::uniform(k, 1.0).unwrap();
        let seed = RngSeed::new(68, trial);
        let sets = build_tx_csi(&ch, &alpha, 10.0, CsiModel::HierRvq, &BitSource::Explicit(bits.clone()), false, seed)
            .unwrap();
        let common = apply_hq_common_csi(&sets, HqScheme::Czf).unwrap();
        let passive = PassiveSet::uniform(k, (trial as usize) % k);
        let common_ap = apply_hq_common_csi(&sets, HqScheme::Apzf(&passive)).unwrap();
        for l in 0..k {
            let max_bits = (0..k).map(|j| bits.get(l, j)).max().unwrap();
            let hcb = row_hier_codebook(k, l, max_bits, seed).unwrap();
            let coarse = (0..k).map(|j| bits.get(l, j)).min().unwrap();
            for j in 0..k {
                let tag = sets[j].meta[l].hier.unwrap();
                let rebuilt = hcb.decode(coarse, ancestor(tag.path, tag.level, coarse), tag.sign).unwrap();
                identical &= common[j].row(l) == &rebuilt;
            }
            for (i, c) in common_ap.iter().enumerate() {
                let n = passive.passive(i);
                let coarse_active = (0..k).filter(|&j| j != n).map(|j| bits.get(l, j)).min().unwrap();
                for j in (0..k).filter(|&j| j != n) {
                    let tag = sets[j].meta[l].hier.unwrap();
                    let rebuilt =
                        hcb.decode(coarse_active, ancestor(tag.path, tag.level, coarse_active), tag.sign).unwrap();
                    identical &= c.row(l) == &rebuilt;
                }
            }
        }
    }
    let pass = nested && identical && t.elapsed().as_secs_f64() < 10.0;
    report(
        6,
        "hierarchical codebook nesting",
        t,
        pass,
        format!(
            "{checked} ancestor relations nested: {nested}; common estimates bit-identical across TXs: {identical}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let run = |scheme: &str| -> RateCurve {
        let mut c = sim(scheme, "1,1;1,1", &[30.0, 40.0], 5000, 77);
        c.model = CsiModel::Rvq;
        c.bits = Some("6,3;3,6".parse().unwrap());
        ergodic_curve(&c).unwrap()
    };
    let schemes = ["czf", "bzf", "apzf-qpower:3"];
    let curves: Vec<RateCurve> = schemes.iter().map(|s| run(s)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, c) in schemes.iter().zip(&curves) {
        let gain = c.sum_rate[1] - c.sum_rate[0];
        let per_user: Vec<String> =
            (0..2).map(|i| format!("{:.3}", c.per_user_rate[i][1] - c.per_user_rate[i][0])).collect();
        pass &= gain < 0.3;
        parts.push(format!(
            "{s}: sum {:.3} -> {:.3} (gain {gain:.3}, per user {})",
            c.sum_rate[0],
            c.sum_rate[1],
            per_user.join("/")
        ));
    }
    for w in [(1usize, 0usize), (2, 1)] {
        let d = paired_sum_difference(&curves[w.0], &curves[w.1], 1).unwrap();
        let ok = d.slope >= 3.0 * d.stderr;
        pass &= ok;
        parts.push(format!(
            "{} - {} at 40 dB = {:.3} ± {:.3} ({})",
            schemes[w.0],
            schemes[w.1],
            d.slope,
            d.stderr,
            if ok { ">= 3 SE" } else { "< 3 SE" }
        ));
    }
    report(7, "quantized feedback saturation and ordering", t, pass, parts.join("; "))
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for trial in 0..500u64 {
        let k = 2 + (trial % 4) as usize;
        let ch = sample_channel(k, RngSeed::new(80, trial)).unwrap();
        let alpha = CsiScalingMatrix::uniform(k, 0.5).unwrap();
        let sets = build_tx_csi(
            &ch,
            &alpha,
            1e4,
            CsiModel::Statistical,
            &BitSource::FromScaling,
            false,
            RngSeed::new(81, trial),
        )
        .unwrap();
        // Every TX holds TX 0's estimates.
        let shared = shared_csi(&sets[0], k);
        let p = 1e6;
        let dist = distributed_precoder(Scheme::Czf, &shared, &alpha, p, &Default::default()).unwrap();
        let central = centralized_zf(&sets[0].estimates, p).unwrap();
        for a in 0..k {
            for b in 0..k {
                worst = worst.max((dist.t[(a, b)] - central[(a, b)]).norm() / p.sqrt());
            }
        }
    }
    let mut cfg = sim("czf", "1,1;0.5,0.5", &WINDOW, 2000, 88);
    cfg.nested = true;
    let (slope, se) = slope_of(&cfg);
    let pass = worst <= 1e-12 && (slope - 1.5).abs() <= 0.2;
    report(
        8,
        "shared-CSI collapse to the broadcast channel",
        t,
        pass,
        format!("max |T_dist - T_central|/sqrt(P) = {worst:.2e} (<=1e-12); slope {slope:.3}±{se:.3} (1.5±0.2)"),
    )
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let k: usize = 4;
    let mut beaten = 0;
    for _ in 0..200 {
        let a = CsiScalingMatrix::new(
            (0..k).map(|_| (0..k).map(|_| (rng.random_range(0..=10) as f64) / 10.0).collect()).collect(),
        )
        .unwrap();
        let chosen: f64 = dof_apzf(&a, &select_passive_set(&a, false)).unwrap().total;
        let mut best = f64::NEG_INFINITY;
        for code in 0..k.pow(k as u32) {
            let s = PassiveSet((0..k).map(|i| (code / k.pow(i as u32)) % k).collect());
            best = best.max(apzf_literal(&a, &s).iter().sum());
        }
        if best > chosen {
            beaten += 1;
        }
    }
    let pass = beaten == 0 && t.elapsed().as_secs_f64() < 30.0;
    report(
        9,
        "passive-set optimality (K = 4)",
        t,
        pass,
        format!("{beaten} of 200 matrices beaten by some of the 256 sets"),
    )
}

#[test]
fn acceptance() {
    let mut outcomes = vec![criterion_1(), criterion_2()];
    let (o3, o4) = criterion_3_and_4();
    outcomes.extend([o3, o4, criterion_5(), criterion_6(), criterion_7(), criterion_8(), criterion_9()]);
    outcomes.sort_by_key(|o| o.id);
    let failed: Vec<String> =
        outcomes.iter().filter(|o| !o.pass).map(|o| format!("[{}] {}: {}", o.id, o.name, o.detail)).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
