//! Rayleigh block-fading channel draws with reproducible, splittable seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{phase_align, CMat, CVec, C64};

/// Seed pair that fully determines a random stream.
///
/// `master_seed` keys a ChaCha8 generator and `stream_id` selects one of its
/// 2^64 independent streams. Monte-Carlo trial `t` uses `stream_id = t`, so a
/// trial's draws do not depend on how trials are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngSeed { master_seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derive an independent seed for a labelled sub-stream. The stream id is
    /// kept and the label is mixed into the master key.
    pub fn child(&self, label: u64) -> RngSeed {
        RngSeed {
            master_seed: splitmix64(self.master_seed ^ splitmix64(label.wrapping_add(0x9e37_79b9))),
            stream_id: self.stream_id,
        }
    }

    pub fn with_stream(&self, stream_id: u64) -> RngSeed {
        RngSeed { master_seed: self.master_seed, stream_id }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One circularly-symmetric complex Gaussian sample with `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec((0..n).map(|_| complex_gaussian(rng)).collect())
}

/// One channel draw.
///
/// Row `i` of `h` holds the channel vector `h_i` of receiver `i` (entry `j`
/// is the coefficient from transmitter `j`), so receiver `i` observes
/// `h_i^H x`. Rows of `hnorm` are the unit-norm, phase-aligned directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h: CMat,
    pub row_norms: Vec<f64>,
    pub hnorm: CMat,
}

impl ChannelRealization {
    pub fn from_matrix(h: CMat) -> Result<Self> {
        let k = h.rows();
        if k < 2 || !h.is_square() {
            return Err(Error::InvalidDimension(format!(
                "channel must be square with K >= 2, got {}x{}",
                h.rows(),
                h.cols()
            )));
        }
        let mut row_norms = Vec::with_capacity(k);
        let mut hnorm = CMat::zeros(k, k);
        for i in 0..k {
            let row = h.row(i);
            let n = row.norm();
            if !(n > 0.0) {
                return Err(Error::ContractViolation(format!("channel row {i} is zero")));
            }
            row_norms.push(n);
            hnorm.set_row(i, &phase_align(&row.scale_real(1.0 / n))?);
        }
        Ok(ChannelRealization { h, row_norms, hnorm })
    }

    pub fn k(&self) -> usize {
        self.h.rows()
    }

    /// Channel vector `h_i`.
    pub fn channel(&self, i: usize) -> CVec {
        self.h.row(i)
    }

    /// Normalized, phase-aligned direction of `h_i`.
    pub fn direction(&self, i: usize) -> CVec {
        self.hnorm.row(i)
    }

    pub fn directions(&self) -> Vec<CVec> {
        (0..self.k()).map(|i| self.direction(i)).collect()
    }
}

/// Draw a `k x k` channel with i.i.d. unit-variance complex Gaussian entries.
pub fn sample_channel(k: usize, seed: RngSeed) -> Result<ChannelRealization> {
    sample_channel_with(k, &mut seed.rng())
}

pub fn sample_channel_with<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<ChannelRealization> {
    if k < 2 {
        return Err(Error::InvalidDimension(format!("need K >= 2 users, got {k}")));
    }
    let rows: Vec<CVec> = (0..k).map(|_| complex_gaussian_vec(rng, k)).collect();
    ChannelRealization::from_matrix(CMat::from_rows(&rows)?)
}
