//! Local zero-forcing precoders and their distributed assembly.
//!
//! Transmitter `j` computes a full precoding matrix `T^(j)` from its own
//! estimates, but only emits row `j` of it. Column `i` of a precoding matrix
//! is the beamformer `t_i` of stream `i`; receiver `i` sees `h_i^H t_l`
//! from stream `l`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::csi::{ancestor, CsiScalingMatrix, CsiTag, TxCsi};
use crate::doftheory::{select_passive_set, PassiveSet};
use crate::error::{Error, Result};
use crate::numerics::{proj_perp, solve_small, CMat, CVec, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApzfVariant {
    /// Fixed passive coefficient `sqrt(P / (K log2 P))`.
    DofOptimal,
    /// Each TX normalizes the beam computed from its own estimate.
    HeuristicPower,
    /// The best-informed active TX shares `rho / (1 + rho)` with the given
    /// number of bits.
    QuantizedPower(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    PerfectZf,
    Czf,
    Rzf,
    Bzf,
    Apzf(ApzfVariant),
    CzfHq,
    ApzfHq,
}

impl Scheme {
    /// Hierarchical schemes need nested estimates.
    pub fn is_hq(self) -> bool {
        matches!(self, Scheme::CzfHq | Scheme::ApzfHq)
    }

    pub fn uses_passive_set(self) -> bool {
        matches!(self, Scheme::Apzf(_) | Scheme::ApzfHq)
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "perfect-zf" => Scheme::PerfectZf,
            "czf" => Scheme::Czf,
            "rzf" => Scheme::Rzf,
            "bzf" => Scheme::Bzf,
            "apzf" => Scheme::Apzf(ApzfVariant::DofOptimal),
            "apzf-heuristic" => Scheme::Apzf(ApzfVariant::HeuristicPower),
            "czf-hq" => Scheme::CzfHq,
            "apzf-hq" => Scheme::ApzfHq,
            _ => match s.strip_prefix("apzf-qpower:") {
                Some(b) => match b.parse::<u32>() {
                    Ok(b) if b > 0 => Scheme::Apzf(ApzfVariant::QuantizedPower(b)),
                    _ => return Err(Error::Parse(format!("power-control bits must be a positive integer in {s:?}"))),
                },
                None => return Err(Error::Parse(format!("unknown scheme {s:?}"))),
            },
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::PerfectZf => f.write_str("perfect-zf"),
            Scheme::Czf => f.write_str("czf"),
            Scheme::Rzf => f.write_str("rzf"),
            Scheme::Bzf => f.write_str("bzf"),
            Scheme::Apzf(ApzfVariant::DofOptimal) => f.write_str("apzf"),
            Scheme::Apzf(ApzfVariant::HeuristicPower) => f.write_str("apzf-heuristic"),
            Scheme::Apzf(ApzfVariant::QuantizedPower(b)) => write!(f, "apzf-qpower:{b}"),
            Scheme::CzfHq => f.write_str("czf-hq"),
            Scheme::ApzfHq => f.write_str("apzf-hq"),
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrecoderMatrix {
    pub t: CMat,
    pub power: f64,
    pub scheme: Scheme,
}

/// Scheme options shared by all transmitters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecoderOptions {
    /// Beacon per stream; defaults to `e_1` for every stream.
    pub beacon: Option<Vec<CVec>>,
    /// Passive set; selected from the scaling matrix when absent.
    pub passive: Option<PassiveSet>,
}

fn check_stream(csi: &TxCsi, i: usize) -> Result<usize> {
    let k = csi.k();
    if i >= k {
        return Err(Error::InvalidDimension(format!("stream {i} out of range for K = {k}")));
    }
    Ok(k)
}

fn check_snr(p: f64) -> Result<()> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidSnr { got: p, min: 0.0 });
    }
    Ok(())
}

fn interferers(csi: &TxCsi, i: usize) -> Vec<CVec> {
    (0..csi.k()).filter(|&l| l != i).map(|l| csi.row(l).clone()).collect()
}

fn scaled_direction(v: CVec, p: f64, k: usize) -> Result<CVec> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    Ok(v.scale_real((p / k as f64).sqrt() / n))
}

/// Conventional ZF: project the estimated direct channel away from the
/// estimated interfering channels.
pub fn czf_local(csi: &TxCsi, i: usize, p: f64) -> Result<CVec> {
    let k = check_stream(csi, i)?;
    check_snr(p)?;
    scaled_direction(proj_perp(&interferers(csi, i), csi.row(i))?, p, k)
}

/// Regularized ZF `(R + G^H G)^{-1} G^H e_i` with `R = diag(P^{-alpha_l})`
/// and `G` the matrix whose rows are `h_l^H`. Infinite exponents give no
/// regularization.
pub fn rzf_local(csi: &TxCsi, alpha_col: &[f64], i: usize, p: f64) -> Result<CVec> {
    let k = check_stream(csi, i)?;
    check_snr(p)?;
    if alpha_col.len() != k {
        return Err(Error::InvalidDimension(format!("{} exponents for K = {k}", alpha_col.len())));
    }
    // (G^H G)_{ab} = sum_l h_l[a] conj(h_l[b]).
    let mut m = CMat::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] = (0..k).map(|l| csi.row(l)[a] * csi.row(l)[b].conj()).sum();
        }
        if alpha_col[a].is_finite() {
            m[(a, a)] += C64::new(p.powf(-crate::csi::effective_exponent(alpha_col[a])), 0.0);
        }
    }
    // G^H e_i = h_i.
    scaled_direction(solve_small(&m, csi.row(i))?, p, k)
}

/// Beacon ZF: project a fixed channel-independent vector away from the
/// estimated interfering channels.
pub fn bzf_local(csi: &TxCsi, i: usize, beacon: &CVec, p: f64) -> Result<CVec> {
    let k = check_stream(csi, i)?;
    check_snr(p)?;
    if beacon.len() != k {
        return Err(Error::InvalidDimension(format!("beacon of length {} for K = {k}", beacon.len())));
    }
    scaled_direction(proj_perp(&interferers(csi, i), beacon)?, p, k)
}

/// Unnormalized active-passive direction at one TX: entry `n` is 1 and the
/// other entries solve `h_l^H u = 0` for every interfering channel `l != i`.
pub fn apzf_direction(csi: &TxCsi, i: usize, n: usize) -> Result<CVec> {
    let k = check_stream(csi, i)?;
    if n >= k {
        return Err(Error::InvalidParameter(format!("passive TX {n} out of range for K = {k}")));
    }
    let active: Vec<usize> = (0..k).filter(|&m| m != n).collect();
    let rows: Vec<usize> = (0..k).filter(|&l| l != i).collect();
    let mut m = CMat::zeros(k - 1, k - 1);
    let mut rhs = CVec::zeros(k - 1);
    for (r, &l) in rows.iter().enumerate() {
        let h = csi.row(l);
        for (c, &a) in active.iter().enumerate() {
            m[(r, c)] = h[a].conj();
        }
        rhs[r] = -h[n].conj();
    }
    let x = solve_small(&m, &rhs).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::DegenerateProjection,
        other => other,
    })?;
    let mut u = CVec::zeros(k);
    u[n] = C64::new(1.0, 0.0);
    for (c, &a) in active.iter().enumerate() {
        u[a] = x[c];
    }
    Ok(u)
}

/// Power rule of one active-passive stream, resolved before the local
/// computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApzfPower {
    DofOptimal,
    HeuristicPower,
    /// Reconstructed `u_hat`, the quantized `rho / (1 + rho)`.
    Quantized {
        u_hat: f64,
    },
}

/// Fixed passive coefficient `sqrt(P / (K log2 P))`; requires `P > 2`.
pub fn passive_coefficient(k: usize, p: f64) -> Result<f64> {
    if !(p > 2.0) || !p.is_finite() {
        return Err(Error::InvalidSnr { got: p, min: 2.0 });
    }
    Ok((p / (k as f64 * p.log2())).sqrt())
}

/// Full active-passive beamformer as computed at one TX for stream `i` with
/// passive TX `n`.
pub fn apzf_vector(csi: &TxCsi, i: usize, n: usize, p: f64, power: ApzfPower) -> Result<CVec> {
    let k = check_stream(csi, i)?;
    let u = apzf_direction(csi, i, n)?;
    let scale = match power {
        ApzfPower::DofOptimal => passive_coefficient(k, p)?,
        ApzfPower::HeuristicPower => {
            check_snr(p)?;
            (p / k as f64).sqrt() / u.norm()
        }
        ApzfPower::Quantized { u_hat } => {
            check_snr(p)?;
            (p / k as f64).sqrt() * (1.0 - u_hat).sqrt()
        }
    };
    Ok(u.scale_real(scale))
}

/// Coefficient emitted by TX `j` for stream `i`. The passive TX emits a
/// constant under the dof-optimal and quantized rules without using CSI.
pub fn apzf_local(csi: &TxCsi, j: usize, i: usize, n: usize, p: f64, power: ApzfPower) -> Result<C64> {
    let k = check_stream(csi, i)?;
    if j == n {
        match power {
            ApzfPower::DofOptimal => return Ok(C64::new(passive_coefficient(k, p)?, 0.0)),
            ApzfPower::Quantized { u_hat } => {
                check_snr(p)?;
                return Ok(C64::new((p / k as f64).sqrt() * (1.0 - u_hat).sqrt(), 0.0));
            }
            ApzfPower::HeuristicPower => {}
        }
    }
    Ok(apzf_vector(csi, i, n, p, power)?[j])
}

/// Uniform midpoint quantizer on `[0, 1)` with `2^bits` levels.
pub fn quantize_unit_interval(u: f64, bits: u32) -> Result<f64> {
    if bits == 0 || bits > 52 {
        return Err(Error::InvalidParameter(format!("power-control bits must be in 1..=52, got {bits}")));
    }
    let levels = (1u64 << bits) as f64;
    let idx = (u.clamp(0.0, 1.0) * levels).floor().min(levels - 1.0);
    Ok((idx + 0.5) / levels)
}

/// Row `j` of the result is row `j` of `per_tx[j]`.
pub fn assemble_distributed(per_tx: &[CMat]) -> Result<CMat> {
    let k = per_tx.len();
    if k == 0 || per_tx.iter().any(|t| t.rows() != k || t.cols() != k) {
        return Err(Error::InvalidDimension(format!("need {k} precoders of size {k}x{k}")));
    }
    let mut out = CMat::zeros(k, k);
    for (j, t) in per_tx.iter().enumerate() {
        out.set_row(j, &t.row(j));
    }
    Ok(out)
}

/// Which hierarchical scheme the common estimates are built for.
#[derive(Debug, Clone, Copy)]
pub enum HqScheme<'a> {
    Czf,
    Apzf(&'a PassiveSet),
}

/// Index of the coarsest estimate of row `l` among `txs` (lowest index on
/// ties).
fn coarsest(tx_csis: &[TxCsi], l: usize, txs: impl Iterator<Item = usize>) -> usize {
    let mut best: Option<usize> = None;
    for j in txs {
        match best {
            Some(b) if tx_csis[j].meta[l].quality >= tx_csis[b].meta[l].quality => {}
            _ => best = Some(j),
        }
    }
    best.expect("at least one transmitter")
}

fn check_nested(tx_csis: &[TxCsi]) -> Result<()> {
    let k = tx_csis.len();
    if k == 0 || tx_csis.iter().any(|c| c.k() != k) {
        return Err(Error::InvalidDimension("need one K-row estimate set per TX".into()));
    }
    if tx_csis.iter().any(|c| !c.tag.is_hierarchical()) {
        return Err(Error::ContractViolation("hierarchical precoding needs nested estimates".into()));
    }
    for l in 0..k {
        let tags: Vec<_> = tx_csis.iter().filter_map(|c| c.meta[l].hier).collect();
        if let Some(fine) = tags.iter().max_by_key(|t| t.level) {
            for t in &tags {
                if t.sign != fine.sign || t.path != ancestor(fine.path, fine.level, t.level) {
                    return Err(Error::ContractViolation(format!("estimates of channel {l} are not nested")));
                }
            }
        }
    }
    Ok(())
}

/// Replace estimates by the part common to the TXs that use them.
///
/// `Czf`: element `j` is the set used by TX `j`; every row is the coarsest
/// estimate of that row across all TXs, so all elements are identical.
/// `Apzf(S)`: element `i` is the set shared by the active TXs of stream `i`,
/// each row the coarsest across TXs other than `n_i`.
pub fn apply_hq_common_csi(tx_csis: &[TxCsi], scheme: HqScheme) -> Result<Vec<TxCsi>> {
    check_nested(tx_csis)?;
    let k = tx_csis.len();
    let common = |exclude: Option<usize>| -> TxCsi {
        let mut estimates = Vec::with_capacity(k);
        let mut meta = Vec::with_capacity(k);
        for l in 0..k {
            let j = coarsest(tx_csis, l, (0..k).filter(|&j| Some(j) != exclude));
            estimates.push(tx_csis[j].estimates[l].clone());
            meta.push(tx_csis[j].meta[l].clone());
        }
        TxCsi { estimates, tag: tx_csis[0].tag, meta }
    };
    match scheme {
        HqScheme::Czf => {
            let c = common(None);
            Ok(vec![c; k])
        }
        HqScheme::Apzf(s) => {
            s.validate(k)?;
            if k < 2 {
                return Err(Error::InvalidDimension("active-passive ZF needs K >= 2".into()));
            }
            Ok((0..k).map(|i| common(Some(s.passive(i)))).collect())
        }
    }
}

/// Exponents equivalent to each row's estimate quality at TX `csi`, for the
/// regularizer of robust ZF: the statistical exponent itself, or
/// `B / ((K-1) log2 P)` for quantized rows.
fn equivalent_exponents(csi: &TxCsi, p: f64) -> Vec<f64> {
    let k = csi.k() as f64;
    csi.meta
        .iter()
        .map(|m| match m.bits {
            Some(b) => b as f64 / ((k - 1.0) * p.log2()),
            None => m.quality,
        })
        .collect()
}

/// Best-informed active TX for stream `i`: the largest worst-case quality of
/// the interfering rows (lowest index on ties).
fn best_informed(tx_csis: &[TxCsi], i: usize, n: usize) -> usize {
    let k = tx_csis.len();
    let score = |j: usize| (0..k).filter(|&l| l != i).map(|l| tx_csis[j].meta[l].quality).fold(f64::INFINITY, f64::min);
    let mut best = None;
    for j in (0..k).filter(|&j| j != n) {
        match best {
            Some(b) if score(j) <= score(b) => {}
            _ => best = Some(j),
        }
    }
    best.expect("K >= 2")
}

fn from_columns(cols: Vec<CVec>) -> Result<CMat> {
    CMat::from_cols(&cols)
}

/// Build the precoder every TX would compute and assemble the effective one.
///
/// `alpha` is used to pick passive sets when `opts.passive` is absent.
pub fn distributed_precoder(
    scheme: Scheme,
    tx_csis: &[TxCsi],
    alpha: &CsiScalingMatrix,
    p: f64,
    opts: &PrecoderOptions,
) -> Result<PrecoderMatrix> {
    let k = tx_csis.len();
    if k < 2 || tx_csis.iter().any(|c| c.k() != k) {
        return Err(Error::InvalidDimension(format!("need K >= 2 estimate sets of K rows, got {k}")));
    }
    let t = match scheme {
        Scheme::PerfectZf | Scheme::Czf => {
            let per_tx = tx_csis
                .iter()
                .map(|c| from_columns((0..k).map(|i| czf_local(c, i, p)).collect::<Result<_>>()?))
                .collect::<Result<Vec<_>>>()?;
            assemble_distributed(&per_tx)?
        }
        Scheme::Rzf => {
            let per_tx = tx_csis
                .iter()
                .map(|c| {
                    let a = equivalent_exponents(c, p);
                    from_columns((0..k).map(|i| rzf_local(c, &a, i, p)).collect::<Result<_>>()?)
                })
                .collect::<Result<Vec<_>>>()?;
            assemble_distributed(&per_tx)?
        }
        Scheme::Bzf => {
            let beacons = match &opts.beacon {
                Some(b) if b.len() == k => b.clone(),
                Some(b) => {
                    return Err(Error::InvalidDimension(format!("{} beacons for K = {k}", b.len())));
                }
                None => vec![CVec::basis(k, 0); k],
            };
            let per_tx = tx_csis
                .iter()
                .map(|c| from_columns((0..k).map(|i| bzf_local(c, i, &beacons[i], p)).collect::<Result<_>>()?))
                .collect::<Result<Vec<_>>>()?;
            assemble_distributed(&per_tx)?
        }
        Scheme::CzfHq => {
            let common = apply_hq_common_csi(tx_csis, HqScheme::Czf)?;
            let per_tx = common
                .iter()
                .map(|c| from_columns((0..k).map(|i| czf_local(c, i, p)).collect::<Result<_>>()?))
                .collect::<Result<Vec<_>>>()?;
            assemble_distributed(&per_tx)?
        }
        Scheme::Apzf(variant) => {
            let s = passive_set(opts, alpha, k, false)?;
            let mut t = CMat::zeros(k, k);
            for i in 0..k {
                let n = s.passive(i);
                let power = match variant {
                    ApzfVariant::DofOptimal => ApzfPower::DofOptimal,
                    ApzfVariant::HeuristicPower => ApzfPower::HeuristicPower,
                    ApzfVariant::QuantizedPower(bits) => {
                        let b = best_informed(tx_csis, i, n);
                        let rho = apzf_direction(&tx_csis[b], i, n)?.norm_sqr() - 1.0;
                        ApzfPower::Quantized { u_hat: quantize_unit_interval(rho / (1.0 + rho), bits)? }
                    }
                };
                for (j, c) in tx_csis.iter().enumerate() {
                    t[(j, i)] = apzf_local(c, j, i, n, p, power)?;
                }
            }
            t
        }
        Scheme::ApzfHq => {
            let s = passive_set(opts, alpha, k, true)?;
            let common = apply_hq_common_csi(tx_csis, HqScheme::Apzf(&s))?;
            let mut t = CMat::zeros(k, k);
            for (i, c) in common.iter().enumerate() {
                let n = s.passive(i);
                for j in 0..k {
                    t[(j, i)] = apzf_local(c, j, i, n, p, ApzfPower::DofOptimal)?;
                }
            }
            t
        }
    };
    if !t.is_finite() {
        return Err(Error::DegenerateProjection);
    }
    Ok(PrecoderMatrix { t, power: p, scheme })
}

fn passive_set(opts: &PrecoderOptions, alpha: &CsiScalingMatrix, k: usize, hq: bool) -> Result<PassiveSet> {
    match &opts.passive {
        Some(s) => {
            s.validate(k)?;
            Ok(s.clone())
        }
        None => {
            if alpha.k() != k {
                return Err(Error::InvalidDimension(format!(
                    "scaling matrix is {}x{} for K = {k}",
                    alpha.k(),
                    alpha.k()
                )));
            }
            Ok(select_passive_set(alpha, hq))
        }
    }
}

/// Centralized ZF from one shared estimate set, computed by inverting the
/// matrix `G` of rows `h_l^H` and normalizing its columns.
pub fn centralized_zf(directions: &[CVec], p: f64) -> Result<CMat> {
    let k = directions.len();
    let mut cols = Vec::with_capacity(k);
    let mut g = CMat::zeros(k, k);
    for (l, h) in directions.iter().enumerate() {
        for a in 0..k {
            g[(l, a)] = h[a].conj();
        }
    }
    for i in 0..k {
        cols.push(scaled_direction(solve_small(&g, &CVec::basis(k, i))?, p, k)?);
    }
    CMat::from_cols(&cols)
}

/// Tag-preserving copy of one estimate set for every TX.
pub fn shared_csi(csi: &TxCsi, k: usize) -> Vec<TxCsi> {
    vec![csi.clone(); k]
}

/// Convenience: exact estimates at every TX.
pub fn perfect_csi(ch: &crate::channel::ChannelRealization) -> Vec<TxCsi> {
    shared_csi(&TxCsi::perfect(ch, CsiTag::Statistical), ch.k())
}
