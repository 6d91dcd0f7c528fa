//! Experiment metrics over simulation runs.

use std::io::Write;

use serde::Serialize;

use crate::billing::run_scenario;
use crate::dp_noise::streams::derive_seed;
use crate::error::{Error, Result};
use crate::metering::{protect_all, Readings, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub label: String,
    pub x_unit: String,
    pub y_unit: String,
    pub points: Vec<(f64, f64)>,
}

impl MetricSeries {
    pub fn new(
        label: impl Into<String>,
        x_unit: impl Into<String>,
        y_unit: impl Into<String>,
    ) -> Self {
        Self {
            label: label.into(),
            x_unit: x_unit.into(),
            y_unit: y_unit.into(),
            points: Vec::new(),
        }
    }

    /// Appends a point; `x` must exceed the previous one.
    pub fn push(&mut self, x: f64, y: f64) -> Result<()> {
        if let Some(&(last, _)) = self.points.last() {
            if x.partial_cmp(&last) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Config(format!(
                    "series `{}`: x must be strictly increasing ({x} after {last})",
                    self.label
                )));
            }
        }
        self.points.push((x, y));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn y_at(&self, idx: usize) -> f64 {
        self.points[idx].1
    }

    /// `x,y` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y"])?;
        for (x, y) in &self.points {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("writing series", e))?;
        Ok(())
    }
}

/// Mean absolute distortion `sum |P_v - I_v| / N_r`.
pub fn mae(protected: &[f64], original: &[f64]) -> Result<f64> {
    if protected.len() != original.len() {
        return Err(Error::LengthMismatch {
            left: protected.len(),
            right: original.len(),
        });
    }
    if protected.is_empty() {
        return Err(Error::Empty("mae over zero readings"));
    }
    let total: f64 = protected
        .iter()
        .zip(original)
        .map(|(p, i)| (p - i).abs())
        .sum();
    Ok(total / protected.len() as f64)
}

/// Per-meter MAE averaged over meters with equal weight.
pub fn fleet_mae(protected: &[Vec<f64>], readings: &Readings) -> Result<f64> {
    if protected.len() != readings.n_meters() {
        return Err(Error::LengthMismatch {
            left: protected.len(),
            right: readings.n_meters(),
        });
    }
    let per_meter = protected
        .iter()
        .zip(readings.rows())
        .map(|(p, i)| mae(p, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_meter.iter().sum::<f64>() / per_meter.len() as f64)
}

/// MAE per budget; run `k` uses seed `derive_seed(scenario.seed, k)`.
pub fn mae_sweep(scenario: &Scenario, epsilons: &[f64]) -> Result<MetricSeries> {
    let mut series = MetricSeries::new("mae", "epsilon", "Wh");
    for (k, &eps) in epsilons.iter().enumerate() {
        let run = scenario
            .with_epsilon(eps)?
            .with_seed(derive_seed(scenario.seed, k as u64));
        let protected = protect_all(&run)?;
        series.push(eps, fleet_mae(&protected, &run.readings)?)?;
    }
    Ok(series)
}

fn relative_error(value: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok((value - reference).abs() / reference.abs())
}

/// Relative error of the accumulated regional bill against the noise-free run,
/// one independent seeded run per budget (both stages at that budget).
pub fn bill_error_series(scenario: &Scenario, epsilons: &[f64]) -> Result<MetricSeries> {
    let reference = run_scenario(&scenario.without_noise())?.total_bill();
    if reference == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let mut series = MetricSeries::new("bill_error", "epsilon", "relative");
    for (k, &eps) in epsilons.iter().enumerate() {
        let run = scenario
            .with_epsilon(eps)?
            .with_seed(derive_seed(scenario.seed, k as u64));
        let total = run_scenario(&run)?.total_bill();
        series.push(eps, relative_error(total, reference)?)?;
    }
    Ok(series)
}

/// Running relative bill error of one meter after each slot, at budget `epsilon`.
/// `x` is the number of slots elapsed (1-based).
pub fn convergence_series(
    scenario: &Scenario,
    epsilon: f64,
    meter_idx: usize,
) -> Result<MetricSeries> {
    if meter_idx >= scenario.n_meters() {
        return Err(Error::Config(format!(
            "meter index {meter_idx} out of range ({} meters)",
            scenario.n_meters()
        )));
    }
    let noisy = run_scenario(&scenario.with_epsilon(epsilon)?)?.cumulative_bill(meter_idx);
    let exact = run_scenario(&scenario.without_noise())?.cumulative_bill(meter_idx);
    let mut series =
        MetricSeries::new(format!("convergence_meter_{meter_idx}"), "slot", "relative");
    for (t, (n, e)) in noisy.iter().zip(&exact).enumerate() {
        let err = if *n == 0.0 && *e == 0.0 {
            0.0
        } else {
            relative_error(*n, *e)?
        };
        series.push((t + 1) as f64, err)?;
    }
    Ok(series)
}
