//! Monte-Carlo ergodic rates and empirical DoF slopes.
//!
//! Trial `t` draws everything from streams of `RngSeed::new(seed, t)`, and
//! the same channel and CSI draws are reused at every SNR point and for every
//! scheme (common random numbers). Per-trial results are buffered and reduced
//! in trial order, so curves do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel, ChannelRealization, RngSeed};
use crate::csi::{build_tx_csi, mean_stderr, BitMatrix, BitSource, CsiModel, CsiScalingMatrix};
use crate::error::{Error, Result};
use crate::precoders::{distributed_precoder, perfect_csi, ApzfVariant, PrecoderMatrix, PrecoderOptions, Scheme};

const CHANNEL_STREAM: u64 = 1;
const CSI_STREAM: u64 = 2;

/// Per-user rates `log2(1 + |h_i^H t_i|^2 / (1 + sum_{l != i} |h_i^H t_l|^2))`
/// with unit noise power.
pub fn instantaneous_rates(ch: &ChannelRealization, t: &PrecoderMatrix) -> Result<Vec<f64>> {
    Ok(rates_and_leakage(ch, t)?.0)
}

/// Rates together with the leakage `sum_{l != i} |h_i^H t_l|^2` per user.
pub fn rates_and_leakage(ch: &ChannelRealization, t: &PrecoderMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = ch.k();
    if t.t.rows() != k || t.t.cols() != k {
        return Err(Error::InvalidDimension(format!("precoder is {}x{} for K = {k}", t.t.rows(), t.t.cols())));
    }
    let cols: Vec<_> = (0..k).map(|l| t.t.col(l)).collect();
    let mut rates = Vec::with_capacity(k);
    let mut leaks = Vec::with_capacity(k);
    for i in 0..k {
        let h = ch.channel(i);
        let gains: Vec<f64> = cols.iter().map(|c| h.dot(c).norm_sqr()).collect();
        let leak: f64 = gains.iter().enumerate().filter(|&(l, _)| l != i).map(|(_, g)| g).sum();
        rates.push((gains[i] / (1.0 + leak)).ln_1p() / std::f64::consts::LN_2);
        leaks.push(leak);
    }
    Ok((rates, leaks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k: usize,
    pub alpha: CsiScalingMatrix,
    pub model: CsiModel,
    /// Explicit feedback bits for the quantized models; the bit rule
    /// `round(alpha (K-1) log2 P)` applies when absent.
    #[serde(default)]
    pub bits: Option<BitMatrix>,
    /// Nested statistical noise. Always on for the hierarchical schemes.
    #[serde(default)]
    pub nested: bool,
    pub scheme: Scheme,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub options: PrecoderOptions,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidDimension(format!("need K >= 2, got {}", self.k)));
        }
        if self.alpha.k() != self.k {
            return Err(Error::InvalidDimension(format!(
                "scaling matrix is {0}x{0} for K = {1}",
                self.alpha.k(),
                self.k
            )));
        }
        if let Some(b) = &self.bits {
            if b.k() != self.k {
                return Err(Error::InvalidDimension(format!("bit matrix is {0}x{0} for K = {1}", b.k(), self.k)));
            }
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("SNR grid must be non-empty and finite".into()));
        }
        if self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("SNR grid must be strictly increasing".into()));
        }
        if let Some(s) = &self.options.passive {
            s.validate(self.k)?;
        }
        Ok(())
    }

    /// CSI model actually used: hierarchical schemes need nested estimates.
    fn effective_model(&self) -> (CsiModel, bool) {
        match (self.scheme.is_hq(), self.model) {
            (true, CsiModel::Rvq) => (CsiModel::HierRvq, true),
            (true, m) => (m, true),
            (false, m) => (m, self.nested),
        }
    }

    /// Matrix used to pick passive sets: the scaling matrix itself, or the
    /// bit matrix divided by its largest entry when bits are explicit.
    pub fn selection_matrix(&self) -> CsiScalingMatrix {
        match &self.bits {
            Some(b) if self.model != CsiModel::Statistical => {
                let max = b.rows().iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
                CsiScalingMatrix::new(b.rows().iter().map(|r| r.iter().map(|&x| x as f64 / max).collect()).collect())
                    .expect("bit matrix is square and non-negative")
            }
            _ => self.alpha.clone(),
        }
    }
}

/// Whether a scheme is defined at linear SNR `p`.
fn defined_at(scheme: Scheme, p: f64) -> bool {
    match scheme {
        Scheme::Apzf(ApzfVariant::DofOptimal) | Scheme::ApzfHq => p > 2.0,
        _ => true,
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCurve {
    pub scheme: Scheme,
    pub snr_db: Vec<f64>,
    /// `per_user_rate[i][p]`. `NaN` (JSON `null`) marks SNR points where the
    /// scheme is undefined.
    pub per_user_rate: Vec<Vec<f64>>,
    pub sum_rate: Vec<f64>,
    pub leakage: Vec<Vec<f64>>,
    pub stderr_user: Vec<Vec<f64>>,
    pub stderr_sum: Vec<f64>,
    pub mc_trials: usize,
    pub seed: u64,
    /// `trial_rates[t][p][i]`, kept for paired statistics.
    #[serde(skip)]
    pub trial_rates: Vec<Vec<Vec<f64>>>,
}

impl RateCurve {
    pub fn k(&self) -> usize {
        self.per_user_rate.len()
    }

    /// Sum rate of every trial at grid point `idx`.
    pub fn trial_sum_rates(&self, idx: usize) -> Vec<f64> {
        self.trial_rates.iter().map(|t| t[idx].iter().sum()).collect()
    }

    pub fn index_of(&self, snr_db: f64) -> Option<usize> {
        self.snr_db.iter().position(|&x| (x - snr_db).abs() < 1e-9)
    }

    pub fn csv_header(k: usize) -> String {
        let mut cols = vec!["snr_db".to_string()];
        cols.extend((1..=k).map(|i| format!("rate_user_{i}")));
        cols.push("sum_rate".into());
        cols.extend((1..=k).map(|i| format!("leakage_user_{i}")));
        cols.extend((1..=k).map(|i| format!("stderr_user_{i}")));
        cols.push("stderr_sum".into());
        cols.join(",")
    }

    /// CSV with one row per SNR point; undefined cells are left empty.
    pub fn to_csv(&self) -> String {
        let k = self.k();
        let cell = |x: f64| if x.is_nan() { String::new() } else { format!("{x}") };
        let mut out = Self::csv_header(k);
        out.push('\n');
        for (p, snr) in self.snr_db.iter().enumerate() {
            let mut row = vec![format!("{snr}")];
            row.extend((0..k).map(|i| cell(self.per_user_rate[i][p])));
            row.push(cell(self.sum_rate[p]));
            row.extend((0..k).map(|i| cell(self.leakage[i][p])));
            row.extend((0..k).map(|i| cell(self.stderr_user[i][p])));
            row.push(cell(self.stderr_sum[p]));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

type TrialResult = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn run_trial(cfg: &SimConfig, t: u64) -> Result<TrialResult> {
    let seed = RngSeed::new(cfg.seed, t);
    let ch = sample_channel(cfg.k, seed.child(CHANNEL_STREAM))?;
    let (model, nested) = cfg.effective_model();
    let bits = match &cfg.bits {
        Some(b) => BitSource::Explicit(b.clone()),
        None => BitSource::FromScaling,
    };
    let selection = cfg.selection_matrix();
    let mut rates = Vec::with_capacity(cfg.snr_db.len());
    let mut leaks = Vec::with_capacity(cfg.snr_db.len());
    for &db in &cfg.snr_db {
        let p = db_to_linear(db);
        if !defined_at(cfg.scheme, p) {
            rates.push(vec![f64::NAN; cfg.k]);
            leaks.push(vec![f64::NAN; cfg.k]);
            continue;
        }
        let csi = if cfg.scheme == Scheme::PerfectZf {
            perfect_csi(&ch)
        } else {
            build_tx_csi(&ch, &cfg.alpha, p, model, &bits, nested, seed.child(CSI_STREAM))?
        };
        let t = distributed_precoder(cfg.scheme, &csi, &selection, p, &cfg.options)?;
        let (r, l) = rates_and_leakage(&ch, &t)?;
        rates.push(r);
        leaks.push(l);
    }
    Ok((rates, leaks))
}

/// Monte-Carlo mean rates over `cfg.trials` trials.
pub fn ergodic_curve(cfg: &SimConfig) -> Result<RateCurve> {
    cfg.validate()?;
    let results: Vec<Result<TrialResult>> = (0..cfg.trials as u64).into_par_iter().map(|t| run_trial(cfg, t)).collect();
    let mut trial_rates = Vec::with_capacity(cfg.trials);
    let mut trial_leaks = Vec::with_capacity(cfg.trials);
    for r in results {
        let (rates, leaks) = r?;
        trial_rates.push(rates);
        trial_leaks.push(leaks);
    }
    let (k, np) = (cfg.k, cfg.snr_db.len());
    let mut curve = RateCurve {
        scheme: cfg.scheme,
        snr_db: cfg.snr_db.clone(),
        per_user_rate: vec![vec![0.0; np]; k],
        sum_rate: vec![0.0; np],
        leakage: vec![vec![0.0; np]; k],
        stderr_user: vec![vec![0.0; np]; k],
        stderr_sum: vec![0.0; np],
        mc_trials: cfg.trials,
        seed: cfg.seed,
        trial_rates: Vec::new(),
    };
    for p in 0..np {
        for i in 0..k {
            let xs: Vec<f64> = trial_rates.iter().map(|t| t[p][i]).collect();
            let (m, se) = mean_stderr(&xs);
            curve.per_user_rate[i][p] = m;
            curve.stderr_user[i][p] = se;
            let ls: Vec<f64> = trial_leaks.iter().map(|t| t[p][i]).collect();
            curve.leakage[i][p] = mean_stderr(&ls).0;
        }
        let sums: Vec<f64> = trial_rates.iter().map(|t| t[p].iter().sum()).collect();
        let (m, se) = mean_stderr(&sums);
        curve.sum_rate[p] = m;
        curve.stderr_sum[p] = se;
    }
    curve.trial_rates = trial_rates;
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub window_db: (f64, f64),
    pub points: usize,
    pub per_user: Vec<Slope>,
    pub sum: Slope,
}

/// Least-squares weights `w_p` such that the slope of `y` against `x` is
/// `sum_p w_p y_p`.
fn slope_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    x.iter().map(|v| (v - mean) / sxx).collect()
}

/// Least-squares slope of rate against `log2 P` over the grid points inside
/// `[lo_db, hi_db]`.
///
/// With per-trial data the slope is fitted per trial and its standard error
/// taken across trials, which accounts for the correlation between SNR points
/// sharing channel draws. Otherwise the points are treated as independent.
pub fn dof_slope(curve: &RateCurve, lo_db: f64, hi_db: f64) -> Result<SlopeEstimate> {
    let idx: Vec<usize> = (0..curve.snr_db.len())
        .filter(|&p| curve.snr_db[p] >= lo_db - 1e-9 && curve.snr_db[p] <= hi_db + 1e-9)
        .collect();
    if idx.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "slope window [{lo_db}, {hi_db}] dB holds {} grid points, need >= 2",
            idx.len()
        )));
    }
    let x: Vec<f64> = idx.iter().map(|&p| curve.snr_db[p] / 10.0 * 10f64.log2()).collect();
    let w = slope_weights(&x);
    let k = curve.k();
    let fit = |values: &dyn Fn(usize) -> f64,
               errors: &dyn Fn(usize) -> f64,
               trial: Option<&dyn Fn(&Vec<Vec<f64>>, usize) -> f64>|
     -> Slope {
        match trial {
            Some(tv) if !curve.trial_rates.is_empty() => {
                let per_trial: Vec<f64> =
                    curve.trial_rates.iter().map(|t| idx.iter().zip(&w).map(|(&p, wp)| wp * tv(t, p)).sum()).collect();
                let (slope, stderr) = mean_stderr(&per_trial);
                Slope { slope, stderr }
            }
            _ => Slope {
                slope: idx.iter().zip(&w).map(|(&p, wp)| wp * values(p)).sum(),
                stderr: idx.iter().zip(&w).map(|(&p, wp)| (wp * errors(p)).powi(2)).sum::<f64>().sqrt(),
            },
        }
    };
    let per_user = (0..k)
        .map(|i| {
            fit(&|p| curve.per_user_rate[i][p], &|p| curve.stderr_user[i][p], Some(&|t: &Vec<Vec<f64>>, p| t[p][i]))
        })
        .collect();
    let sum = fit(&|p| curve.sum_rate[p], &|p| curve.stderr_sum[p], Some(&|t: &Vec<Vec<f64>>, p| t[p].iter().sum()));
    Ok(SlopeEstimate { window_db: (lo_db, hi_db), points: idx.len(), per_user, sum })
}

/// Mean and standard error of the per-trial sum-rate difference `a - b` at
/// grid point `idx`. Both curves must come from the same seed and trial
/// count, so the difference is paired.
pub fn paired_sum_difference(a: &RateCurve, b: &RateCurve, idx: usize) -> Result<Slope> {
    if a.trial_rates.is_empty() || a.trial_rates.len() != b.trial_rates.len() || a.seed != b.seed {
        return Err(Error::InvalidParameter("paired comparison needs curves from the same trials".into()));
    }
    let d: Vec<f64> = a.trial_sum_rates(idx).iter().zip(b.trial_sum_rates(idx)).map(|(x, y)| x - y).collect();
    let (slope, stderr) = mean_stderr(&d);
    Ok(Slope { slope, stderr })
}
