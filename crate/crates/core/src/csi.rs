//! Per-transmitter channel estimates.
//!
//! Three estimate models are provided:
//!
//! * **statistical**: the normalized channel plus Gaussian noise whose energy
//!   scales as `P^{-alpha}`;
//! * **rvq**: random vector quantization with an independent codebook for
//!   every (channel, transmitter) pair;
//! * **hier-rvq**: one hierarchical codebook per channel shared by all
//!   transmitters, each decoding at its own depth, so estimates are nested.
//!
//! Vectors are quantized after a phase rotation that makes their first
//! coefficient real, i.e. on the real sphere in `R^{2K-1}`, with the
//! chordal distance `sin^2` as distortion.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian_vec, ChannelRealization, RngSeed};
use crate::error::{Error, Result};
use crate::numerics::{phase_align, CVec};
use crate::tolerance;

/// Clip a raw CSI scaling exponent to its effective value `min(alpha, 1)`.
///
/// Every consumer of an exponent goes through this function.
pub fn effective_exponent(raw: f64) -> f64 {
    raw.min(1.0)
}

// ---------------------------------------------------------------------------
// Scaling and bit matrices
// ---------------------------------------------------------------------------

/// `alpha[i][j]`: scaling exponent of the feedback about channel `i` at
/// transmitter `j`. `f64::INFINITY` marks perfect CSI.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiScalingMatrix {
    alpha: Vec<Vec<f64>>,
}

impl CsiScalingMatrix {
    pub fn new(alpha: Vec<Vec<f64>>) -> Result<Self> {
        let k = alpha.len();
        if k == 0 || alpha.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidDimension("CSI scaling matrix must be square and non-empty".into()));
        }
        if let Some(bad) = alpha.iter().flatten().find(|a| a.is_nan() || **a < 0.0) {
            return Err(Error::InvalidParameter(format!("scaling exponents must be >= 0, got {bad}")));
        }
        Ok(CsiScalingMatrix { alpha })
    }

    pub fn uniform(k: usize, a: f64) -> Result<Self> {
        Self::new(vec![vec![a; k]; k])
    }

    pub fn perfect(k: usize) -> Self {
        CsiScalingMatrix { alpha: vec![vec![f64::INFINITY; k]; k] }
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Effective exponent `min(alpha_i^(j), 1)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        effective_exponent(self.alpha[i][j])
    }

    pub fn raw(&self, i: usize, j: usize) -> f64 {
        self.alpha[i][j]
    }

    pub fn is_perfect(&self, i: usize, j: usize) -> bool {
        self.alpha[i][j].is_infinite()
    }

    pub fn is_all_perfect(&self) -> bool {
        self.alpha.iter().flatten().all(|a| a.is_infinite())
    }

    /// Matrix of effective exponents.
    pub fn clipped(&self) -> Vec<Vec<f64>> {
        (0..self.k()).map(|i| (0..self.k()).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn raw_rows(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    /// Noise-covariance exponents seen by transmitter `j`, one per channel.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.k()).map(|i| self.get(i, j)).collect()
    }

    /// Feedback bits `B = round(alpha (K-1) log2 P)` for every entry, `None`
    /// where CSI is perfect.
    pub fn bits_for_snr(&self, p: f64) -> Vec<Vec<Option<u32>>> {
        let k = self.k();
        let scale = (k as f64 - 1.0) * p.log2();
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if self.is_perfect(i, j) {
                            None
                        } else {
                            Some((self.get(i, j) * scale).round().max(0.0) as u32)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn parse_rows<T>(s: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<Vec<T>>> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    s.split(';').map(|row| row.split(',').map(|e| parse(e.trim())).collect()).collect()
}

impl FromStr for CsiScalingMatrix {
    type Err = Error;

    /// Rows separated by `;`, entries by `,`; `inf` marks perfect CSI.
    fn from_str(s: &str) -> Result<Self> {
        let rows = parse_rows(s, |e| match e.to_ascii_lowercase().as_str() {
            "inf" | "perfect" => Ok(f64::INFINITY),
            _ => e.parse::<f64>().map_err(|_| Error::Parse(format!("bad scaling entry {e:?}"))),
        })?;
        Self::new(rows).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl fmt::Display for CsiScalingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .alpha
            .iter()
            .map(|r| {
                r.iter()
                    .map(|a| if a.is_infinite() { "inf".to_string() } else { a.to_string() })
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        write!(f, "{}", rows.join(";"))
    }
}

impl Serialize for CsiScalingMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CsiScalingMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `bits[i][j]`: feedback bits for channel `i` delivered to transmitter `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    bits: Vec<Vec<u32>>,
}

impl BitMatrix {
    pub fn new(bits: Vec<Vec<u32>>) -> Result<Self> {
        let k = bits.len();
        if k == 0 || bits.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidDimension("bit matrix must be square".into()));
        }
        Ok(BitMatrix { bits })
    }

    pub fn uniform(k: usize, b: u32) -> Self {
        BitMatrix { bits: vec![vec![b; k]; k] }
    }

    pub fn k(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.bits[i][j]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.bits
    }
}

impl FromStr for BitMatrix {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let rows = parse_rows(s, |e| e.parse::<u32>().map_err(|_| Error::Parse(format!("bad bit count {e:?}"))))?;
        Self::new(rows).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl fmt::Display for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> =
            self.bits.iter().map(|r| r.iter().map(u32::to_string).collect::<Vec<_>>().join(",")).collect();
        write!(f, "{}", rows.join(";"))
    }
}

impl Serialize for BitMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Statistical model
// ---------------------------------------------------------------------------

fn check_snr(p: f64) -> Result<()> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidSnr { got: p, min: 0.0 });
    }
    Ok(())
}

/// Perturb a unit-norm aligned channel direction with Gaussian noise of total
/// energy `P^{-min(alpha,1)}`, then renormalize and re-align.
/// `alpha = INFINITY` returns the input unchanged.
pub fn statistical_estimate(hnorm_row: &CVec, alpha: f64, p: f64, seed: RngSeed) -> Result<CVec> {
    check_snr(p)?;
    let z = complex_gaussian_vec(&mut seed.rng(), hnorm_row.len());
    perturb(hnorm_row, &z, noise_std(alpha, p, hnorm_row.len()))
}

/// Per-entry noise standard deviation for exponent `alpha`.
fn noise_std(alpha: f64, p: f64, k: usize) -> f64 {
    if alpha.is_infinite() {
        0.0
    } else {
        (p.powf(-effective_exponent(alpha)) / k as f64).sqrt()
    }
}

fn perturb(row: &CVec, unit_noise: &CVec, std: f64) -> Result<CVec> {
    if std == 0.0 {
        return Ok(row.clone());
    }
    phase_align(&row.add(&unit_noise.scale_real(std)).normalized()?)
}

// ---------------------------------------------------------------------------
// Random codebooks
// ---------------------------------------------------------------------------

fn check_bits(bits: u32, cap: u32) -> Result<()> {
    if bits > cap {
        return Err(Error::ResourceCap { bits, cap });
    }
    Ok(())
}

fn random_aligned_unit<R: Rng + ?Sized>(rng: &mut R, k: usize) -> CVec {
    loop {
        let v = complex_gaussian_vec(rng, k);
        // A zero draw has probability zero; retry rather than fail.
        if let Ok(u) = v.normalized().and_then(|u| phase_align(&u)) {
            return u;
        }
    }
}

/// `2^B` i.i.d. isotropic unit vectors, each rotated to a real non-negative
/// first coefficient.
#[derive(Debug, Clone)]
pub struct Codebook {
    k: usize,
    bits: u32,
    seed: RngSeed,
    vectors: Vec<CVec>,
    // Row-major real embeddings, one row of 2K-1 entries per codeword.
    embedded: Vec<f64>,
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.bits == other.bits && self.vectors == other.vectors
    }
}

/// Outcome of quantizing one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    /// Selected codeword, negated when that is closer in Euclidean distance.
    pub vector: CVec,
    pub index: usize,
    /// `+1` or `-1`: the half-space bit.
    pub sign: f64,
    /// Achieved chordal distortion `sin^2`.
    pub sin2: f64,
}

impl Codebook {
    fn from_vectors(k: usize, bits: u32, seed: RngSeed, vectors: Vec<CVec>) -> Self {
        let embedded = vectors.iter().flat_map(|v| v.real_embedding()).collect();
        Codebook { k, bits, seed, vectors, embedded }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn seed(&self) -> RngSeed {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[CVec] {
        &self.vectors
    }

    pub fn vector(&self, idx: usize) -> &CVec {
        &self.vectors[idx]
    }

    /// Index of the codeword with the smallest chordal distance to an
    /// embedded target, together with the signed real inner product.
    fn nearest(&self, target: &[f64]) -> (usize, f64) {
        let d = target.len();
        let mut best = (0usize, 0.0f64);
        let mut best_abs = -1.0;
        for (idx, c) in self.embedded.chunks_exact(d).enumerate() {
            let t: f64 = c.iter().zip(target).map(|(a, b)| a * b).sum();
            if t.abs() > best_abs {
                best_abs = t.abs();
                best = (idx, t);
            }
        }
        best
    }

    /// Serialize to the documented JSON form.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&CodebookFile {
            format: CODEBOOK_FORMAT.into(),
            k: self.k,
            bits: self.bits,
            seed: self.seed,
            vectors: self.vectors.clone(),
        })
        .map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parse and validate the JSON form.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if file.format != CODEBOOK_FORMAT {
            return Err(Error::Parse(format!("unknown codebook format {:?}", file.format)));
        }
        if file.vectors.len() != 1usize << file.bits {
            return Err(Error::Parse(format!("codebook has {} vectors, expected 2^{}", file.vectors.len(), file.bits)));
        }
        for v in &file.vectors {
            if v.len() != file.k
                || (v.norm() - 1.0).abs() > tolerance::UNIT_NORM_CONTRACT
                || v[0].im != 0.0
                || v[0].re < 0.0
            {
                return Err(Error::Parse("codebook vector violates the aligned unit-norm invariant".into()));
            }
        }
        Ok(Codebook::from_vectors(file.k, file.bits, file.seed, file.vectors))
    }
}

pub const CODEBOOK_FORMAT: &str = "dcsi-codebook/1";

/// On-disk codebook: provenance header followed by the vector list, each
/// vector a list of `[re, im]` pairs.
#[derive(Debug, Serialize, Deserialize)]
struct CodebookFile {
    format: String,
    k: usize,
    bits: u32,
    seed: RngSeed,
    vectors: Vec<CVec>,
}

pub fn make_codebook(k: usize, bits: u32, seed: RngSeed) -> Result<Codebook> {
    make_codebook_capped(k, bits, seed, tolerance::MAX_CODEBOOK_BITS)
}

pub fn make_codebook_capped(k: usize, bits: u32, seed: RngSeed, cap: u32) -> Result<Codebook> {
    check_bits(bits, cap)?;
    if k < 2 {
        return Err(Error::InvalidDimension(format!("codebook dimension must be >= 2, got {k}")));
    }
    let mut rng = seed.rng();
    let vectors = (0..1usize << bits).map(|_| random_aligned_unit(&mut rng, k)).collect();
    Ok(Codebook::from_vectors(k, bits, seed, vectors))
}

fn check_aligned_unit(v: &CVec) -> Result<()> {
    if (v.norm() - 1.0).abs() > tolerance::UNIT_NORM_CONTRACT || v[0].im.abs() > tolerance::UNIT_NORM_CONTRACT {
        return Err(Error::ContractViolation(
            "vector to quantize must be unit-norm with a real first coefficient".into(),
        ));
    }
    Ok(())
}

/// Minimum chordal-distance quantization.
///
/// The winner `c` maximizes `|c_R^T h_R|`; the returned vector is `s c` with
/// `s = sign(c_R^T h_R)`, the Euclidean-closer of `c` and `-c`.
pub fn quantize_l2(hnorm_row: &CVec, cb: &Codebook) -> Result<Quantized> {
    if cb.is_empty() {
        return Err(Error::ContractViolation("empty codebook".into()));
    }
    if hnorm_row.len() != cb.k {
        return Err(Error::InvalidDimension(format!(
            "vector of length {} against codebook dimension {}",
            hnorm_row.len(),
            cb.k
        )));
    }
    check_aligned_unit(hnorm_row)?;
    let (index, t) = cb.nearest(&hnorm_row.real_embedding());
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    Ok(Quantized { vector: cb.vectors[index].scale_real(sign), index, sign, sin2: (1.0 - t * t).clamp(0.0, 1.0) })
}

// ---------------------------------------------------------------------------
// Hierarchical codebooks
// ---------------------------------------------------------------------------

/// Random codebook of `2^max_bits` vectors recursively halved into nested
/// bins, with one random representative per bin and level.
///
/// The recursive random halving is realised as a random permutation of the
/// base codebook: at level `l` the bins are the consecutive blocks of
/// `2^(max_bits - l)` positions, so bin membership nests by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HierCodebook {
    base: Codebook,
    /// Position in the binary tree -> base index.
    order: Vec<usize>,
    /// Base index -> position in the binary tree.
    position: Vec<usize>,
    /// `representatives[l][b]`: base index representing bin `b` at level `l`.
    representatives: Vec<Vec<usize>>,
}

/// Outcome of a hierarchical decode.
#[derive(Debug, Clone, PartialEq)]
pub struct HierQuantized {
    pub vector: CVec,
    pub level: u32,
    /// Bin index at `level`: the first `level` bits of the full-resolution path.
    pub path: u64,
    /// Half-space bit of the full-resolution codeword, shared by all levels.
    pub sign: f64,
    /// Base index of the representative returned.
    pub representative: usize,
}

impl HierCodebook {
    pub fn max_bits(&self) -> u32 {
        self.base.bits
    }

    pub fn base(&self) -> &Codebook {
        &self.base
    }

    /// Bin of a base vector at a given level.
    pub fn bin_of(&self, base_index: usize, level: u32) -> u64 {
        (self.position[base_index] >> (self.max_bits() - level)) as u64
    }

    /// Base indices belonging to bin `bin` at `level`.
    pub fn members(&self, level: u32, bin: u64) -> &[usize] {
        let size = 1usize << (self.max_bits() - level);
        let start = bin as usize * size;
        &self.order[start..start + size]
    }

    pub fn representative(&self, level: u32, bin: u64) -> usize {
        self.representatives[level as usize][bin as usize]
    }

    /// Estimate produced at `level` for a bin path and sign bit. A
    /// transmitter decoding `fine_path` at a finer level reconstructs a
    /// coarser transmitter's estimate with
    /// `decode(coarse, ancestor(fine_path, fine, coarse), sign)`.
    pub fn decode(&self, level: u32, path: u64, sign: f64) -> Result<CVec> {
        if level > self.max_bits() {
            return Err(Error::InvalidLevel { level, max: self.max_bits() });
        }
        if path >= 1u64 << level {
            return Err(Error::InvalidParameter(format!("path {path} too long for level {level}")));
        }
        Ok(self.base.vectors[self.representative(level, path)].scale_real(sign))
    }
}

/// Bin index at `to_level` that contains bin `path` at `from_level`.
pub fn ancestor(path: u64, from_level: u32, to_level: u32) -> u64 {
    debug_assert!(to_level <= from_level);
    path >> (from_level - to_level)
}

pub fn make_hier_codebook(k: usize, max_bits: u32, seed: RngSeed) -> Result<HierCodebook> {
    check_bits(max_bits, tolerance::MAX_CODEBOOK_BITS)?;
    let base = make_codebook(k, max_bits, seed)?;
    let n = base.len();
    let mut rng = seed.child(0x4851).rng();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut position = vec![0; n];
    for (pos, &idx) in order.iter().enumerate() {
        position[idx] = pos;
    }
    let representatives = (0..=max_bits)
        .map(|level| {
            let size = 1usize << (max_bits - level);
            (0..1usize << level).map(|bin| order[bin * size + rng.random_range(0..size)]).collect()
        })
        .collect();
    Ok(HierCodebook { base, order, position, representatives })
}

/// Quantize at full resolution, then return the representative of the
/// selected codeword's bin at `level`.
pub fn hier_quantize(hnorm_row: &CVec, hcb: &HierCodebook, level: u32) -> Result<HierQuantized> {
    if level > hcb.max_bits() {
        return Err(Error::InvalidLevel { level, max: hcb.max_bits() });
    }
    let q = quantize_l2(hnorm_row, &hcb.base)?;
    let path = hcb.bin_of(q.index, level);
    let representative = hcb.representative(level, path);
    Ok(HierQuantized {
        vector: hcb.base.vectors[representative].scale_real(q.sign),
        level,
        path,
        sign: q.sign,
        representative,
    })
}

// ---------------------------------------------------------------------------
// Per-transmitter CSI
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiModel {
    Statistical,
    Rvq,
    HierRvq,
}

impl FromStr for CsiModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statistical" => Ok(CsiModel::Statistical),
            "rvq" => Ok(CsiModel::Rvq),
            "hier-rvq" => Ok(CsiModel::HierRvq),
            _ => Err(Error::Parse(format!("unknown CSI model {s:?} (expected statistical, rvq or hier-rvq)"))),
        }
    }
}

impl fmt::Display for CsiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsiModel::Statistical => "statistical",
            CsiModel::Rvq => "rvq",
            CsiModel::HierRvq => "hier-rvq",
        })
    }
}

/// How an estimate set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiTag {
    Statistical,
    /// Statistical model with nested noise: equal exponents share one noise
    /// realization, a lower exponent adds independent noise on top.
    HierStatistical,
    Rvq,
    HierRvq,
}

impl CsiTag {
    pub fn is_hierarchical(self) -> bool {
        matches!(self, CsiTag::HierStatistical | CsiTag::HierRvq)
    }
}

/// Hierarchical decode state of one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierTag {
    pub level: u32,
    pub path: u64,
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    /// Ordering key for nesting: larger is finer. Effective exponent for the
    /// statistical models, decoded bits for quantized ones, `INFINITY` for
    /// perfect CSI.
    pub quality: f64,
    pub bits: Option<u32>,
    pub codeword: Option<usize>,
    pub hier: Option<HierTag>,
}

impl RowMeta {
    fn exact() -> Self {
        RowMeta { quality: f64::INFINITY, bits: None, codeword: None, hier: None }
    }
}

/// Estimate of every normalized channel held by one transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxCsi {
    pub estimates: Vec<CVec>,
    pub tag: CsiTag,
    pub meta: Vec<RowMeta>,
}

impl TxCsi {
    /// Every row exact.
    pub fn perfect(ch: &ChannelRealization, tag: CsiTag) -> Self {
        TxCsi { estimates: ch.directions(), tag, meta: vec![RowMeta::exact(); ch.k()] }
    }

    pub fn k(&self) -> usize {
        self.estimates.len()
    }

    pub fn row(&self, i: usize) -> &CVec {
        &self.estimates[i]
    }
}

/// Where RVQ bit counts come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BitSource {
    Explicit(BitMatrix),
    /// `B = round(alpha (K-1) log2 P)` from the scaling matrix.
    FromScaling,
}

/// Produce the estimates held by every transmitter.
///
/// `nested` switches the statistical model to nested noise (used by the
/// hierarchical precoders); it is ignored by the quantized models.
pub fn build_tx_csi(
    ch: &ChannelRealization,
    alpha: &CsiScalingMatrix,
    p: f64,
    model: CsiModel,
    bits: &BitSource,
    nested: bool,
    seed: RngSeed,
) -> Result<Vec<TxCsi>> {
    check_snr(p)?;
    let k = ch.k();
    if alpha.k() != k {
        return Err(Error::InvalidDimension(format!("scaling matrix is {}x{} for K = {k}", alpha.k(), alpha.k())));
    }
    if let BitSource::Explicit(b) = bits {
        if b.k() != k {
            return Err(Error::InvalidDimension(format!("bit matrix is {}x{} for K = {k}", b.k(), b.k())));
        }
    }
    match (model, nested) {
        (CsiModel::Statistical, false) => Ok(statistical_independent(ch, alpha, p, seed)),
        (CsiModel::Statistical, true) => nested_statistical(ch, alpha, p, seed),
        (CsiModel::Rvq, _) => rvq_independent(ch, alpha, p, bits, seed),
        (CsiModel::HierRvq, _) => rvq_hierarchical(ch, alpha, p, bits, seed),
    }
}

fn empty_sets(k: usize, tag: CsiTag) -> Vec<TxCsi> {
    (0..k).map(|_| TxCsi { estimates: Vec::with_capacity(k), tag, meta: Vec::with_capacity(k) }).collect()
}

fn statistical_independent(ch: &ChannelRealization, alpha: &CsiScalingMatrix, p: f64, seed: RngSeed) -> Vec<TxCsi> {
    let k = ch.k();
    let mut rng = seed.rng();
    let mut out = empty_sets(k, CsiTag::Statistical);
    for (j, tx) in out.iter_mut().enumerate() {
        for i in 0..k {
            // Always draw so that the stream layout does not depend on alpha.
            let z = complex_gaussian_vec(&mut rng, k);
            let row = ch.direction(i);
            let std = noise_std(alpha.raw(i, j), p, k);
            let est = perturb(&row, &z, std).unwrap_or(row);
            tx.estimates.push(est);
            tx.meta.push(RowMeta {
                quality: if alpha.is_perfect(i, j) { f64::INFINITY } else { alpha.get(i, j) },
                ..RowMeta::exact()
            });
        }
    }
    out
}

fn nested_statistical(ch: &ChannelRealization, alpha: &CsiScalingMatrix, p: f64, seed: RngSeed) -> Result<Vec<TxCsi>> {
    let k = ch.k();
    let mut rng = seed.rng();
    let mut out = empty_sets(k, CsiTag::HierStatistical);
    for i in 0..k {
        let row = ch.direction(i);
        let quality = |j: usize| if alpha.is_perfect(i, j) { f64::INFINITY } else { alpha.get(i, j) };
        // Distinct quality levels, finest first.
        let mut levels: Vec<f64> = (0..k).map(quality).collect();
        levels.sort_by(|a, b| b.partial_cmp(a).unwrap());
        levels.dedup();
        let increments: Vec<CVec> = (0..k).map(|_| complex_gaussian_vec(&mut rng, k)).collect();
        let mut noise = CVec::zeros(k);
        let mut prev_var = 0.0;
        let mut per_level = Vec::with_capacity(levels.len());
        for (m, &q) in levels.iter().enumerate() {
            let var = if q.is_infinite() { 0.0 } else { p.powf(-q) / k as f64 };
            let extra = (var - prev_var).max(0.0).sqrt();
            noise = noise.add(&increments[m].scale_real(extra));
            prev_var = var;
            per_level.push(if var == 0.0 { row.clone() } else { phase_align(&row.add(&noise).normalized()?)? });
        }
        for (j, tx) in out.iter_mut().enumerate() {
            let m = levels.iter().position(|&q| q == quality(j)).unwrap();
            tx.estimates.push(per_level[m].clone());
            tx.meta.push(RowMeta { quality: quality(j), ..RowMeta::exact() });
        }
    }
    Ok(out)
}

fn bit_count(
    alpha: &CsiScalingMatrix,
    bits: &BitSource,
    scaled: &[Vec<Option<u32>>],
    i: usize,
    j: usize,
) -> Option<u32> {
    match bits {
        BitSource::Explicit(b) => Some(b.get(i, j)),
        BitSource::FromScaling => {
            if alpha.is_perfect(i, j) {
                None
            } else {
                scaled[i][j]
            }
        }
    }
}

fn pair_label(i: usize, j: usize) -> u64 {
    ((i as u64) << 32) | j as u64
}

fn rvq_independent(
    ch: &ChannelRealization,
    alpha: &CsiScalingMatrix,
    p: f64,
    bits: &BitSource,
    seed: RngSeed,
) -> Result<Vec<TxCsi>> {
    let k = ch.k();
    let scaled = alpha.bits_for_snr(p);
    let mut out = empty_sets(k, CsiTag::Rvq);
    for (j, tx) in out.iter_mut().enumerate() {
        for i in 0..k {
            let row = ch.direction(i);
            match bit_count(alpha, bits, &scaled, i, j) {
                None => {
                    tx.estimates.push(row);
                    tx.meta.push(RowMeta::exact());
                }
                Some(b) => {
                    let cb = make_codebook(k, b, seed.child(pair_label(i, j)))?;
                    let q = quantize_l2(&row, &cb)?;
                    tx.estimates.push(q.vector);
                    tx.meta.push(RowMeta { quality: b as f64, bits: Some(b), codeword: Some(q.index), hier: None });
                }
            }
        }
    }
    Ok(out)
}

/// Hierarchical codebook of channel `i` used by [`build_tx_csi`] under the
/// hier-rvq model, shared by every transmitter.
pub fn row_hier_codebook(k: usize, i: usize, max_bits: u32, seed: RngSeed) -> Result<HierCodebook> {
    make_hier_codebook(k, max_bits, seed.child(pair_label(i, u32::MAX as usize)))
}

fn rvq_hierarchical(
    ch: &ChannelRealization,
    alpha: &CsiScalingMatrix,
    p: f64,
    bits: &BitSource,
    seed: RngSeed,
) -> Result<Vec<TxCsi>> {
    let k = ch.k();
    let scaled = alpha.bits_for_snr(p);
    let mut out = empty_sets(k, CsiTag::HierRvq);
    for i in 0..k {
        let row = ch.direction(i);
        let depth: Vec<Option<u32>> = (0..k).map(|j| bit_count(alpha, bits, &scaled, i, j)).collect();
        let max_bits = depth.iter().flatten().copied().max();
        let hcb = match max_bits {
            Some(m) => Some(row_hier_codebook(k, i, m, seed)?),
            None => None,
        };
        for (j, tx) in out.iter_mut().enumerate() {
            match (depth[j], &hcb) {
                (Some(level), Some(hcb)) => {
                    let q = hier_quantize(&row, hcb, level)?;
                    tx.estimates.push(q.vector);
                    tx.meta.push(RowMeta {
                        quality: level as f64,
                        bits: Some(level),
                        codeword: Some(q.representative),
                        hier: Some(HierTag { level, path: q.path, sign: q.sign }),
                    });
                }
                _ => {
                    tx.estimates.push(row.clone());
                    tx.meta.push(RowMeta::exact());
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Distortion of random codebooks
// ---------------------------------------------------------------------------

/// `c_{2K-1} = Gamma(K - 1/2) / (Gamma(K) Gamma(1/2))`, the constant of the
/// small-distance CDF of `sin^2` on the real sphere in `R^{2K-1}`.
pub fn sphere_cdf_constant(k: usize) -> f64 {
    let k = k as f64;
    libm::tgamma(k - 0.5) / (libm::tgamma(k) * libm::tgamma(0.5))
}

/// Large-codebook bounds on the distortion of a `2^B` random codebook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistortionBounds {
    pub k: usize,
    pub bits: u32,
    pub c: f64,
    /// Bounds on `E[min sin^2]`.
    pub mean_lower: f64,
    pub mean_upper: f64,
    /// Bounds on `E[-log2 min sin^2]`.
    pub log_lower: f64,
    pub log_upper: f64,
    /// Whether `c^{-1/(K-1)} 2^{-B/(K-1)} <= 1`, the necessary size condition.
    pub large_enough: bool,
}

pub fn distortion_bounds(k: usize, bits: u32) -> DistortionBounds {
    let c = sphere_cdf_constant(k);
    let m = k as f64 - 1.0;
    let b = bits as f64;
    let scale = c.powf(-1.0 / m) * 2f64.powf(-b / m);
    let kf = k as f64;
    DistortionBounds {
        k,
        bits,
        c,
        mean_lower: (2.0 * kf - 1.0) / (2.0 * kf + 1.0) * scale,
        mean_upper: libm::tgamma(1.0 / m) / m * scale,
        log_lower: (b + c.log2()) / m,
        log_upper: (b + c.log2() + std::f64::consts::LOG2_E) / m,
        large_enough: scale <= 1.0,
    }
}

/// Monte-Carlo distortion statistics of random codebooks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistortionStats {
    pub trials: usize,
    pub mean_sin2: f64,
    pub stderr_sin2: f64,
    pub mean_neg_log2: f64,
    pub stderr_neg_log2: f64,
}

/// Estimate `E[min sin^2]` and `E[-log2 min sin^2]` over `codebooks`
/// independent codebooks, each used to quantize `per_codebook` independent
/// isotropic channel directions.
pub fn empirical_distortion(
    k: usize,
    bits: u32,
    codebooks: usize,
    per_codebook: usize,
    seed: RngSeed,
) -> Result<DistortionStats> {
    check_bits(bits, tolerance::MAX_CODEBOOK_BITS)?;
    if codebooks == 0 || per_codebook == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let blocks: Vec<Result<Vec<f64>>> = (0..codebooks as u64)
        .into_par_iter()
        .map(|b| {
            let s = seed.with_stream(b);
            let cb = make_codebook(k, bits, s.child(1))?;
            let mut rng = s.child(2).rng();
            Ok((0..per_codebook)
                .map(|_| {
                    let h = random_aligned_unit(&mut rng, k);
                    let (_, t) = cb.nearest(&h.real_embedding());
                    (1.0 - t * t).clamp(0.0, 1.0)
                })
                .collect())
        })
        .collect();
    let mut sin2 = Vec::with_capacity(codebooks * per_codebook);
    for b in blocks {
        sin2.extend(b?);
    }
    let logs: Vec<f64> = sin2.iter().map(|&s| -s.max(f64::MIN_POSITIVE).log2()).collect();
    let (m1, s1) = mean_stderr(&sin2);
    let (m2, s2) = mean_stderr(&logs);
    Ok(DistortionStats { trials: sin2.len(), mean_sin2: m1, stderr_sin2: s1, mean_neg_log2: m2, stderr_neg_log2: s2 })
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
