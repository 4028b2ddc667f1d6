//! Allocation of a total feedback-scaling budget `gamma` (the sum of all
//! exponents `alpha_i^(j)`) across users and transmitters.
//!
//! Serving `n` users with a uniform exponent `alpha` costs `n^2 (n-1) alpha`
//! for conventional ZF and `n (n-1)^2 alpha` for active-passive ZF, whose
//! passive transmitter needs no CSI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::csi::CsiScalingMatrix;
use crate::doftheory::{dof_apzf, dof_czf, PassiveSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocScheme {
    Czf,
    Apzf,
}

impl FromStr for AllocScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "czf" => Ok(AllocScheme::Czf),
            "apzf" => Ok(AllocScheme::Apzf),
            _ => Err(Error::Parse(format!("unknown allocation scheme {s:?} (expected czf or apzf)"))),
        }
    }
}

impl fmt::Display for AllocScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AllocScheme::Czf => "czf",
            AllocScheme::Apzf => "apzf",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub gamma: f64,
    pub scheme: AllocScheme,
    pub n_active: usize,
    pub per_link_alpha: f64,
    pub dof: f64,
}

impl AllocationPlan {
    /// Budget consumed by the plan.
    pub fn spend(&self) -> f64 {
        links(self.scheme, self.n_active) * self.per_link_alpha
    }
}

/// Number of (channel, transmitter) pairs receiving feedback.
fn links(scheme: AllocScheme, n: usize) -> f64 {
    let n = n as f64;
    match scheme {
        AllocScheme::Czf => n * n * (n - 1.0),
        AllocScheme::Apzf => n * (n - 1.0) * (n - 1.0),
    }
}

/// Budget at which `n + 1` users start to pay off: `n^2 (n+1)` for
/// conventional ZF, `n^3` for active-passive ZF. Ties keep the smaller `n`.
fn upper_edge(scheme: AllocScheme, n: usize) -> f64 {
    let n = n as f64;
    match scheme {
        AllocScheme::Czf => n * n * (n + 1.0),
        AllocScheme::Apzf => n * n * n,
    }
}

/// Saturation budget `n^2 (n-1)` of conventional ZF with `n` users.
pub fn czf_saturation(n: usize) -> f64 {
    links(AllocScheme::Czf, n)
}

/// Budget `n^2 (n+1)` at which conventional ZF activates user `n + 1`.
pub fn czf_activation(n: usize) -> f64 {
    upper_edge(AllocScheme::Czf, n)
}

fn allocate(gamma: f64, scheme: AllocScheme) -> Result<AllocationPlan> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("budget must be finite and >= 0, got {gamma}")));
    }
    let mut n = 1;
    while gamma > upper_edge(scheme, n) {
        n += 1;
    }
    let (per_link_alpha, dof) = if n == 1 {
        // A single user causes no interference and needs no feedback.
        (1.0, 1.0)
    } else {
        let a = (gamma / links(scheme, n)).min(1.0);
        (a, n as f64 * a)
    };
    Ok(AllocationPlan { gamma, scheme, n_active: n, per_link_alpha, dof })
}

pub fn allocate_czf(gamma: f64) -> Result<AllocationPlan> {
    allocate(gamma, AllocScheme::Czf)
}

/// The passive transmitter receives no feedback.
pub fn allocate_apzf(gamma: f64) -> Result<AllocationPlan> {
    allocate(gamma, AllocScheme::Apzf)
}

pub fn allocation_sweep(gammas: &[f64], scheme: AllocScheme) -> Result<Vec<AllocationPlan>> {
    if gammas.is_empty() {
        return Err(Error::InvalidParameter("empty budget grid".into()));
    }
    gammas.iter().map(|&g| allocate(g, scheme)).collect()
}

/// CSV with columns `gamma,scheme,n_active,alpha,dof`.
pub fn sweep_csv(plans: &[AllocationPlan]) -> String {
    let mut out = String::from("gamma,scheme,n_active,alpha,dof\n");
    for p in plans {
        out.push_str(&format!("{},{},{},{},{}\n", p.gamma, p.scheme, p.n_active, p.per_link_alpha, p.dof));
    }
    out
}

/// Scaling matrix realising a plan: uniform `alpha`, with the passive TX
/// (the first) receiving nothing for active-passive ZF.
pub fn expand_to_matrix(plan: &AllocationPlan) -> CsiScalingMatrix {
    let n = plan.n_active;
    let mut a = vec![vec![plan.per_link_alpha; n]; n];
    if plan.scheme == AllocScheme::Apzf {
        for row in &mut a {
            row[0] = 0.0;
        }
    }
    CsiScalingMatrix::new(a).expect("plan exponents are valid")
}

/// DoF of the expanded matrix under the matching calculator.
pub fn plan_dof(plan: &AllocationPlan) -> f64 {
    let m = expand_to_matrix(plan);
    match plan.scheme {
        AllocScheme::Czf => dof_czf(&m).total,
        AllocScheme::Apzf => {
            dof_apzf(&m, &PassiveSet::uniform(plan.n_active, 0)).expect("uniform passive set is valid").total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn czf_examples() {
        let p = allocate_czf(4.0).unwrap();
        assert_eq!((p.n_active, p.per_link_alpha, p.dof), (2, 1.0, 2.0));
        let p = allocate_czf(18.0).unwrap();
        assert_eq!((p.n_active, p.dof), (3, 3.0));
        let p = allocate_czf(8.0).unwrap();
        assert_eq!((p.n_active, p.dof), (2, 2.0));
        let p = allocate_czf(0.0).unwrap();
        assert_eq!((p.n_active, p.dof, p.spend()), (1, 1.0, 0.0));
    }

    #[test]
    fn apzf_examples() {
        let p = allocate_apzf(2.0).unwrap();
        assert_eq!((p.n_active, p.dof), (2, 2.0));
        let p = allocate_apzf(12.0).unwrap();
        assert_eq!((p.n_active, p.dof), (3, 3.0));
        let p = allocate_apzf(0.0).unwrap();
        assert_eq!((p.n_active, p.dof), (1, 1.0));
    }

    #[test]
    fn table_points() {
        let sat: Vec<f64> = (1..=5).map(czf_saturation).collect();
        let act: Vec<f64> = (1..=5).map(czf_activation).collect();
        assert_eq!(sat, [0.0, 4.0, 18.0, 48.0, 100.0]);
        assert_eq!(act, [2.0, 12.0, 36.0, 80.0, 150.0]);
    }

    #[test]
    fn rising_segment_slopes() {
        let a = allocate_czf(12.0 + 1e-9).unwrap();
        let b = allocate_czf(18.0).unwrap();
        assert_eq!(a.n_active, 3);
        let d_alpha = (b.per_link_alpha - a.per_link_alpha) / (18.0 - a.gamma);
        let d_dof = (b.dof - a.dof) / (18.0 - a.gamma);
        assert!((d_alpha - 1.0 / 18.0).abs() < 1e-9);
        assert!((d_dof - 1.0 / 6.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_budget() {
        assert!(allocate_czf(-1.0).is_err());
        assert!(allocate_czf(f64::NAN).is_err());
        assert!(allocation_sweep(&[], AllocScheme::Czf).is_err());
    }

    #[test]
    fn expand_examples() {
        let m = expand_to_matrix(&allocate_czf(4.0).unwrap());
        assert_eq!(m, CsiScalingMatrix::uniform(2, 1.0).unwrap());
        let p = allocate_apzf(12.0).unwrap();
        let m = expand_to_matrix(&p);
        assert_eq!(m.raw_rows()[1], vec![0.0, 1.0, 1.0]);
        assert!((plan_dof(&p) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_csv_header() {
        let plans = allocation_sweep(&[0.0, 4.0], AllocScheme::Czf).unwrap();
        let csv = sweep_csv(&plans);
        assert!(csv.starts_with("gamma,scheme,n_active,alpha,dof\n0,czf,1,1,1\n4,czf,2,1,2\n"));
    }
}
