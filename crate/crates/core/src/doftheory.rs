//! Closed-form degrees of freedom of the distributed zero-forcing schemes.
//!
//! Every calculator takes the raw scaling matrix and reads effective
//! exponents through [`CsiScalingMatrix::get`]. A minimum over an empty index
//! set is taken as 1 (no constraint, full DoF).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::csi::CsiScalingMatrix;
use crate::error::{Error, Result};

/// Passive transmitter per stream: `n[i]` is the 0-based index of the
/// transmitter holding a fixed coefficient for stream `i`.
///
/// The textual form (`FromStr`/`Display`) is 1-based: `"1,1,1"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PassiveSet(pub Vec<usize>);

impl PassiveSet {
    pub fn uniform(k: usize, n: usize) -> Self {
        PassiveSet(vec![n; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn passive(&self, stream: usize) -> usize {
        self.0[stream]
    }

    pub fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.0.len() != k {
            return Err(Error::InvalidDimension(format!("passive set has {} entries for K = {k}", self.0.len())));
        }
        if let Some(&n) = self.0.iter().find(|&&n| n >= k) {
            return Err(Error::InvalidParameter(format!("passive TX index {} out of range 1..={k}", n + 1)));
        }
        Ok(())
    }
}

impl FromStr for PassiveSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(|e| match e.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n - 1),
                _ => Err(Error::Parse(format!("bad passive TX index {e:?} (1-based)"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PassiveSet)
    }
}

impl fmt::Display for PassiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| (n + 1).to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for PassiveSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PassiveSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofReport {
    pub scheme: String,
    pub per_user: Vec<f64>,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passive_set: Option<PassiveSet>,
}

impl DofReport {
    fn new(scheme: &str, per_user: Vec<f64>, passive_set: Option<PassiveSet>) -> Self {
        let total = per_user.iter().sum();
        DofReport { scheme: scheme.into(), per_user, total, passive_set }
    }
}

fn min_or_one(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x)))).unwrap_or(1.0)
}

/// Broadcast channel with one exponent per user shared by all transmitters:
/// user `i` gets `alpha_i`.
pub fn dof_bc(alpha_per_user: &[f64]) -> DofReport {
    let per_user = alpha_per_user.iter().map(|&a| crate::csi::effective_exponent(a).max(0.0)).collect();
    DofReport::new("bc", per_user, None)
}

/// Conventional ZF: every user limited by the worst exponent anywhere.
pub fn dof_czf(alpha: &CsiScalingMatrix) -> DofReport {
    let k = alpha.k();
    let m = min_or_one((0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| alpha.get(i, j)));
    DofReport::new("czf", vec![m; k], None)
}

/// Beacon ZF: user `k` is limited by the exponents of every channel other
/// than that of each interfering stream, across all transmitters.
pub fn dof_bzf(alpha: &CsiScalingMatrix) -> DofReport {
    let k = alpha.k();
    let per_user = (0..k)
        .map(|u| {
            min_or_one((0..k).filter(|&i| i != u).map(|i| {
                min_or_one(
                    (0..k).filter(|&l| l != i).flat_map(|l| (0..k).map(move |j| (l, j))).map(|(l, j)| alpha.get(l, j)),
                )
            }))
        })
        .collect();
    DofReport::new("bzf", per_user, None)
}

/// Active-passive ZF with passive set `s`.
///
/// For two users the value is `max_j alpha_i^(j)` per user, which the
/// per-stream passive choice of [`select_passive_set`] attains. For `K >= 3`
/// user `k` gets `min_{i != k} min_{l != i, j != n_i} alpha_l^(j)`.
pub fn dof_apzf(alpha: &CsiScalingMatrix, s: &PassiveSet) -> Result<DofReport> {
    let k = alpha.k();
    s.validate(k)?;
    let per_user =
        if k == 2 { (0..2).map(|i| alpha.get(i, 0).max(alpha.get(i, 1))).collect() } else { apzf_literal(alpha, s) };
    Ok(DofReport::new("apzf", per_user, Some(s.clone())))
}

/// The `K`-user active-passive expression evaluated as written, for any `K`.
pub fn apzf_literal(alpha: &CsiScalingMatrix, s: &PassiveSet) -> Vec<f64> {
    let k = alpha.k();
    (0..k)
        .map(|u| {
            min_or_one((0..k).filter(|&i| i != u).map(|i| {
                let n = s.passive(i);
                min_or_one(
                    (0..k)
                        .filter(|&l| l != i)
                        .flat_map(|l| (0..k).filter(move |&j| j != n).map(move |j| (l, j)))
                        .map(|(l, j)| alpha.get(l, j)),
                )
            }))
        })
        .collect()
}

/// Lowest index attaining the extremum of `score` (`maximize` selects the
/// direction).
fn arg_extremum(k: usize, score: impl Fn(usize) -> f64, maximize: bool) -> usize {
    let mut best = 0;
    for n in 1..k {
        let (a, b) = (score(n), score(best));
        if (maximize && a > b) || (!maximize && a < b) {
            best = n;
        }
    }
    best
}

/// Passive set maximizing the active-passive DoF.
///
/// Two users: for each stream `i`, the passive TX is the one with the worse
/// estimate of the other user's channel. `K >= 3`: one TX for all streams,
/// the argmin of the column minima (non-HQ) or the argmax of
/// `sum_k min_{j != n} alpha_k^(j)` (HQ). Ties go to the lowest index.
pub fn select_passive_set(alpha: &CsiScalingMatrix, hq: bool) -> PassiveSet {
    let k = alpha.k();
    if k == 2 {
        return PassiveSet(
            (0..2)
                .map(|i| {
                    let other = 1 - i;
                    arg_extremum(2, |j| alpha.get(other, j), false)
                })
                .collect(),
        );
    }
    let n = if hq {
        arg_extremum(k, |n| hq_score(alpha, n), true)
    } else {
        arg_extremum(k, |j| min_or_one((0..k).map(|l| alpha.get(l, j))), false)
    };
    PassiveSet::uniform(k, n)
}

/// `sum_k min_{j != n} alpha_k^(j)`.
fn hq_score(alpha: &CsiScalingMatrix, n: usize) -> f64 {
    let k = alpha.k();
    (0..k).map(|u| min_or_one((0..k).filter(|&j| j != n).map(|j| alpha.get(u, j)))).sum()
}

/// Conventional ZF with hierarchical quantization: user `i` gets
/// `min_j alpha_i^(j)`.
pub fn dof_czf_hq(alpha: &CsiScalingMatrix) -> DofReport {
    let k = alpha.k();
    let per_user = (0..k).map(|i| min_or_one((0..k).map(|j| alpha.get(i, j)))).collect();
    DofReport::new("czf-hq", per_user, None)
}

/// Active-passive ZF with hierarchical quantization.
///
/// With an explicit set, user `k` gets `min_{i != k} min_{j != n_i}
/// alpha_k^(j)` (the served user's own exponent, as printed). With `None`,
/// the HQ passive set is selected and, for `K >= 3`, user `i` gets
/// `min_{j != n_HQ} alpha_i^(j)`.
pub fn dof_apzf_hq(alpha: &CsiScalingMatrix, s: Option<&PassiveSet>) -> Result<DofReport> {
    let k = alpha.k();
    let literal = |s: &PassiveSet| -> Vec<f64> {
        (0..k)
            .map(|u| {
                min_or_one((0..k).filter(|&i| i != u).map(|i| {
                    let n = s.passive(i);
                    min_or_one((0..k).filter(|&j| j != n).map(|j| alpha.get(u, j)))
                }))
            })
            .collect()
    };
    match s {
        Some(s) => {
            s.validate(k)?;
            Ok(DofReport::new("apzf-hq", literal(s), Some(s.clone())))
        }
        None => {
            let s = select_passive_set(alpha, true);
            let per_user = if k >= 3 {
                let n = s.passive(0);
                (0..k).map(|i| min_or_one((0..k).filter(|&j| j != n).map(|j| alpha.get(i, j)))).collect()
            } else {
                literal(&s)
            };
            Ok(DofReport::new("apzf-hq", per_user, Some(s)))
        }
    }
}

/// DoF of every scheme that has a closed form, with automatically selected
/// passive sets.
pub fn dof_table(alpha: &CsiScalingMatrix) -> Vec<DofReport> {
    let s = select_passive_set(alpha, false);
    let mut out = vec![dof_czf(alpha), dof_bzf(alpha)];
    out.push(dof_apzf(alpha, &s).expect("selected passive set is valid"));
    out.push(dof_czf_hq(alpha));
    out.push(dof_apzf_hq(alpha, None).expect("selected passive set is valid"));
    out
}
