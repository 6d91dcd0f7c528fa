//! Cooperative-state model.
//!
//! In a peak slot a meter is cooperative when its bill reading is below the fair
//! share. The system is cooperative when at least `ceil(N/2)` meters are. With a
//! shared per-meter probability `p` the number of cooperative meters is
//! Binomial(N, p), giving
//!
//! ```text
//! P_cs = sum_{q=ceil(N/2)}^{N} C(N,q) p^q (1-p)^(N-q)
//! E_cs = sum_{q=ceil(N/2)}^{N} q C(N,q) p^q (1-p)^(N-q)
//! ```
//!
//! `E_cs` is the truncated expectation (cooperative count weighted only over
//! cooperative system states), not `N p`.
//!
//! For even N the non-cooperative sum `q = 0..=N/2` and the cooperative sum
//! `q = N/2..=N` share the `q = N/2` term, so the two only add to one for odd N.
//! The cooperative sum is the one implemented here.

use serde::Serialize;

use crate::billing::SlotBillingResult;
use crate::error::{Error, Result};

/// Largest N the closed form accepts; `C(64, 32) * 64` still fits in a u128.
pub const MAX_CLOSED_FORM_N: usize = 64;
pub const MAX_ENUMERATION_N: usize = 20;

#[derive(Debug, Clone, PartialEq)]
enum Probabilities {
    Shared(f64),
    PerMeter(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoopModel {
    n: usize,
    p_lu: Probabilities,
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "p_lu",
            value: p,
            requirement: "in [0, 1]",
        })
    }
}

impl CoopModel {
    pub fn shared(n: usize, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("cooperative model needs at least one meter"));
        }
        check_probability(p)?;
        Ok(Self {
            n,
            p_lu: Probabilities::Shared(p),
        })
    }

    pub fn per_meter(p_lu: Vec<f64>) -> Result<Self> {
        if p_lu.is_empty() {
            return Err(Error::Empty("cooperative model needs at least one meter"));
        }
        p_lu.iter().try_for_each(|&p| check_probability(p))?;
        Ok(Self {
            n: p_lu.len(),
            p_lu: Probabilities::PerMeter(p_lu),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_lu(&self, meter: usize) -> f64 {
        match &self.p_lu {
            Probabilities::Shared(p) => *p,
            Probabilities::PerMeter(v) => v[meter],
        }
    }

    pub fn p_hu(&self, meter: usize) -> f64 {
        1.0 - self.p_lu(meter)
    }

    fn shared_p(&self) -> Result<f64> {
        match self.p_lu {
            Probabilities::Shared(p) => Ok(p),
            Probabilities::PerMeter(_) => Err(Error::HeterogeneousModel),
        }
    }
}

/// Smallest number of cooperative meters that makes the system cooperative.
pub fn cooperative_threshold(n: usize) -> usize {
    n.div_ceil(2)
}

/// Exact `C(n, k)` in integer arithmetic.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    // C(n, i) * (n - i) is always divisible by i + 1.
    (0..k).fold(1u128, |c, i| c * u128::from(n - i) / u128::from(i + 1))
}

/// Neumaier compensated sum; keeps both routes accurate to a few ulps.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        iter.into_iter().for_each(|x| acc.add(x));
        acc
    }
}

fn pmf_terms(n: usize, p: f64) -> Result<impl Iterator<Item = (usize, f64)>> {
    if n > MAX_CLOSED_FORM_N {
        return Err(Error::Parameter {
            name: "n",
            value: n as f64,
            requirement: "<= 64 for exact binomial coefficients",
        });
    }
    Ok((0..=n).map(move |q| {
        let c = binomial(n as u64, q as u64) as f64;
        (q, c * p.powi(q as i32) * (1.0 - p).powi((n - q) as i32))
    }))
}

pub fn coop_probability(model: &CoopModel) -> Result<f64> {
    let p = model.shared_p()?;
    let q_min = cooperative_threshold(model.n);
    Ok(pmf_terms(model.n, p)?
        .filter(|&(q, _)| q >= q_min)
        .map(|(_, t)| t)
        .collect::<CompensatedSum>()
        .value())
}

pub fn coop_expectation(model: &CoopModel) -> Result<f64> {
    let p = model.shared_p()?;
    let q_min = cooperative_threshold(model.n);
    Ok(pmf_terms(model.n, p)?
        .filter(|&(q, _)| q >= q_min)
        .map(|(q, t)| q as f64 * t)
        .collect::<CompensatedSum>()
        .value())
}

/// `sum_{q=0}^{floor(N/2)}` of the same terms.
pub fn non_coop_probability(model: &CoopModel) -> Result<f64> {
    let p = model.shared_p()?;
    let q_max = model.n / 2;
    Ok(pmf_terms(model.n, p)?
        .filter(|&(q, _)| q <= q_max)
        .map(|(_, t)| t)
        .collect::<CompensatedSum>()
        .value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub probability: f64,
    pub expectation: f64,
}

/// Sums over all `2^n` cooperation patterns with per-meter probabilities.
pub fn enumerate_oracle(model: &CoopModel, q_min: usize) -> Result<OracleResult> {
    let n = model.n;
    if n > MAX_ENUMERATION_N {
        return Err(Error::OracleTooLarge {
            n,
            limit: MAX_ENUMERATION_N,
        });
    }
    let mut probability = CompensatedSum::default();
    let mut expectation = CompensatedSum::default();
    for pattern in 0u32..(1u32 << n) {
        let q = pattern.count_ones() as usize;
        if q < q_min {
            continue;
        }
        let weight: f64 = (0..n)
            .map(|i| {
                if pattern & (1 << i) != 0 {
                    model.p_lu(i)
                } else {
                    model.p_hu(i)
                }
            })
            .product();
        probability.add(weight);
        expectation.add(q as f64 * weight);
    }
    Ok(OracleResult {
        probability: probability.value(),
        expectation: expectation.value(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoopObservation {
    pub slot: u32,
    pub cooperating: usize,
    pub n: usize,
    pub cooperative: bool,
}

/// Cooperative count per peak slot; off-peak slots are skipped.
pub fn measure_coop_state(slots: &[SlotBillingResult]) -> Vec<CoopObservation> {
    slots
        .iter()
        .filter_map(|s| {
            let avg = s.average.filter(|_| s.peak_in_place)?;
            let n = s.meters.len();
            let cooperating = s.meters.iter().filter(|m| m.b_r < avg).count();
            Some(CoopObservation {
                slot: s.slot,
                cooperating,
                n,
                cooperative: cooperating >= cooperative_threshold(n),
            })
        })
        .collect()
}
