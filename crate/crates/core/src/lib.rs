//! Differentially private smart-meter reporting with incentivized dynamic billing.
//!
//! Meters perturb each 10-minute reading with folded Laplace noise before
//! reporting it. The utility subtracts an independent folded draw of the same
//! scale, detects regional peaks on the adjusted readings and charges the peak
//! price only to homes at or above their fair share of the peak factor.
//!
//! * [`dp_noise`]: sampler, scale computation, meter and grid perturbation.
//! * [`metering`]: readings, CSV ingestion, synthetic load, slot reporting.
//! * [`billing`]: adjustment, peak detection, billing, the slot driver.
//! * [`coop`]: cooperative-state probability and expectation.
//! * [`metrics`]: MAE and bill-error series.
//! * [`config`] and [`app`]: the `drdp` command-line tool.

pub mod app;
pub mod billing;
pub mod config;
pub mod coop;
pub mod dp_noise;
pub mod error;
pub mod metering;
pub mod metrics;

pub use billing::{run_scenario, OpCounts, ScenarioRun, SlotBillingResult, Tariff};
pub use dp_noise::{NoiseMode, PrivacyParams};
pub use error::{Error, Result};
pub use metering::{Readings, Scenario};
