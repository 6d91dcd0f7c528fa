//! Grid-utility side: noise adjustment, regional peak detection and
//! incentivized per-home billing.
//!
//! In a peak slot every home is compared with the fair share `P_F / N`. Homes at
//! or above it pay the peak price on their whole slot reading; homes below it
//! pay the unit price. Outside peak slots everyone pays the unit price.

use serde::{Deserialize, Serialize};

use crate::dp_noise::{adjust_reading, NoiseSource, PrivacyParams, StageNoise};
use crate::error::{Error, Result};
use crate::metering::{report_slot_counted, ProtectedReading, Readings, Scenario};

/// Prices are cents per Wh; `peak_factor` is a regional Wh threshold per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    unit_price: f64,
    peak_price: f64,
    peak_factor: f64,
}

impl Tariff {
    pub fn new(unit_price: f64, peak_price: f64, peak_factor: f64) -> Result<Self> {
        for (name, value) in [
            ("unit_price", unit_price),
            ("peak_price", peak_price),
            ("peak_factor", peak_factor),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Parameter {
                    name,
                    value,
                    requirement: "positive and finite",
                });
            }
        }
        if peak_price <= unit_price {
            log::warn!("peak price {peak_price} does not exceed unit price {unit_price}; cooperating earns no discount");
        }
        Ok(Self {
            unit_price,
            peak_price,
            peak_factor,
        })
    }

    pub fn unit_price(&self) -> f64 {
        self.unit_price
    }

    pub fn peak_price(&self) -> f64 {
        self.peak_price
    }

    pub fn peak_factor(&self) -> f64 {
        self.peak_factor
    }

    pub fn fair_share(&self, n_meters: usize) -> f64 {
        self.peak_factor / n_meters as f64
    }
}

impl Default for Tariff {
    fn default() -> Self {
        Self {
            unit_price: 10.0,
            peak_price: 25.0,
            peak_factor: 12_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedReading {
    pub meter_id: u32,
    pub slot: u32,
    pub b_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakStatus {
    pub peak_in_place: bool,
    pub regional_sum: f64,
    pub average: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterBill {
    pub meter_id: u32,
    pub b_r: f64,
    pub charged_peak: bool,
    /// Cents.
    pub i_b: f64,
    /// Distance from the fair share; only set in peak slots.
    pub d_f: Option<f64>,
}

impl MeterBill {
    /// Below the fair share during a peak slot.
    pub fn cooperative(&self) -> bool {
        self.d_f.is_some() && !self.charged_peak
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotBillingResult {
    pub slot: u32,
    pub peak_in_place: bool,
    pub regional_sum: f64,
    pub average: Option<f64>,
    pub meters: Vec<MeterBill>,
}

/// Informational messages the utility sends to homes for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Notification {
    PeakInPlace {
        slot: u32,
        regional_sum: f64,
    },
    Deviation {
        slot: u32,
        meter_id: u32,
        d_f: f64,
        above_average: bool,
    },
}

impl SlotBillingResult {
    pub fn notifications(&self) -> Vec<Notification> {
        if !self.peak_in_place {
            return Vec::new();
        }
        let mut out = vec![Notification::PeakInPlace {
            slot: self.slot,
            regional_sum: self.regional_sum,
        }];
        out.extend(self.meters.iter().filter_map(|m| {
            m.d_f.map(|d_f| Notification::Deviation {
                slot: self.slot,
                meter_id: m.meter_id,
                d_f,
                above_average: m.charged_peak,
            })
        }));
        out
    }

    pub fn total_bill(&self) -> f64 {
        self.meters.iter().map(|m| m.i_b).sum()
    }
}

/// Per-slot sub-operation tally, used to check that work grows linearly in N.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub protect: u64,
    pub adjust: u64,
    pub accumulate: u64,
    pub peak_test: u64,
    pub average: u64,
    pub bill: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.protect + self.adjust + self.accumulate + self.peak_test + self.average + self.bill
    }
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: Self) -> Self {
        OpCounts {
            protect: self.protect - rhs.protect,
            adjust: self.adjust - rhs.adjust,
            accumulate: self.accumulate - rhs.accumulate,
            peak_test: self.peak_test - rhs.peak_test,
            average: self.average - rhs.average,
            bill: self.bill - rhs.bill,
        }
    }
}

/// Removes a fresh folded grid-side draw from every protected reading, in input order.
pub fn adjust_slot<N: NoiseSource + ?Sized>(
    protected: &[ProtectedReading],
    grid_params: &PrivacyParams,
    noise: &mut N,
) -> Result<Vec<AdjustedReading>> {
    adjust_slot_counted(protected, grid_params, noise, &mut OpCounts::default())
}

fn adjust_slot_counted<N: NoiseSource + ?Sized>(
    protected: &[ProtectedReading],
    grid_params: &PrivacyParams,
    noise: &mut N,
    counts: &mut OpCounts,
) -> Result<Vec<AdjustedReading>> {
    protected
        .iter()
        .map(|p| {
            counts.adjust += 1;
            Ok(AdjustedReading {
                meter_id: p.meter_id,
                slot: p.slot,
                b_r: adjust_reading(p.p_v, grid_params, noise)?,
            })
        })
        .collect()
}

/// Peak iff the regional sum reaches the peak factor (inclusive).
pub fn detect_peak(adjusted: &[f64], tariff: &Tariff) -> Result<PeakStatus> {
    detect_peak_counted(adjusted, tariff, &mut OpCounts::default())
}

fn detect_peak_counted(
    adjusted: &[f64],
    tariff: &Tariff,
    counts: &mut OpCounts,
) -> Result<PeakStatus> {
    if adjusted.is_empty() {
        return Err(Error::Empty("no adjusted readings to aggregate"));
    }
    let mut regional_sum = 0.0;
    for &b_r in adjusted {
        counts.accumulate += 1;
        regional_sum += b_r;
    }
    counts.peak_test += 1;
    let peak_in_place = regional_sum >= tariff.peak_factor;
    let average = peak_in_place.then(|| {
        counts.average += 1;
        tariff.fair_share(adjusted.len())
    });
    Ok(PeakStatus {
        peak_in_place,
        regional_sum,
        average,
    })
}

/// Bill for one home in one slot. `average` must be set exactly when the slot is a peak slot.
pub fn bill_meter(meter_id: u32, b_r: f64, average: Option<f64>, tariff: &Tariff) -> MeterBill {
    match average {
        Some(avg) if b_r >= avg => MeterBill {
            meter_id,
            b_r,
            charged_peak: true,
            i_b: b_r * tariff.peak_price,
            d_f: Some(b_r - avg),
        },
        Some(avg) => MeterBill {
            meter_id,
            b_r,
            charged_peak: false,
            i_b: b_r * tariff.unit_price,
            d_f: Some(avg - b_r),
        },
        None => MeterBill {
            meter_id,
            b_r,
            charged_peak: false,
            i_b: b_r * tariff.unit_price,
            d_f: None,
        },
    }
}

pub fn bill_slot(
    adjusted: &[AdjustedReading],
    peak_in_place: bool,
    average: Option<f64>,
    tariff: &Tariff,
) -> Result<SlotBillingResult> {
    bill_slot_counted(
        adjusted,
        peak_in_place,
        average,
        tariff,
        &mut OpCounts::default(),
    )
}

fn bill_slot_counted(
    adjusted: &[AdjustedReading],
    peak_in_place: bool,
    average: Option<f64>,
    tariff: &Tariff,
    counts: &mut OpCounts,
) -> Result<SlotBillingResult> {
    if peak_in_place != average.is_some() {
        return Err(Error::PeakContract {
            peak_in_place,
            average,
        });
    }
    let first = adjusted
        .first()
        .ok_or(Error::Empty("no adjusted readings to bill"))?;
    let meters = adjusted
        .iter()
        .map(|a| {
            counts.bill += 1;
            bill_meter(a.meter_id, a.b_r, average, tariff)
        })
        .collect::<Vec<_>>();
    Ok(SlotBillingResult {
        slot: first.slot,
        peak_in_place,
        regional_sum: adjusted.iter().map(|a| a.b_r).sum(),
        average,
        meters,
    })
}

/// Everything the utility produced for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub protected: Vec<ProtectedReading>,
    pub billing: SlotBillingResult,
    pub counts: OpCounts,
}

/// Slot-by-slot driver: report, adjust, detect, bill.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    meter_streams: Vec<StageNoise>,
    utility_stream: StageNoise,
    next_slot: usize,
    totals: Vec<f64>,
    counts: OpCounts,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self {
            meter_streams: scenario.meter_streams(),
            utility_stream: scenario.utility_stream(),
            next_slot: 0,
            totals: vec![0.0; scenario.n_meters()],
            counts: OpCounts::default(),
            scenario,
        }
    }

    /// Accumulated bill per meter (cents), in meter order.
    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn counts(&self) -> OpCounts {
        self.counts
    }

    fn step(&mut self) -> Result<SlotOutcome> {
        let sc = self.scenario;
        let before = self.counts;
        let protected = report_slot_counted(
            &sc.readings,
            self.next_slot,
            &sc.meter_params,
            &mut self.meter_streams,
            &mut self.counts,
        )?;
        let adjusted = adjust_slot_counted(
            &protected,
            &sc.grid_params,
            &mut self.utility_stream,
            &mut self.counts,
        )?;
        let values: Vec<f64> = adjusted.iter().map(|a| a.b_r).collect();
        let peak = detect_peak_counted(&values, &sc.tariff, &mut self.counts)?;
        let billing = bill_slot_counted(
            &adjusted,
            peak.peak_in_place,
            peak.average,
            &sc.tariff,
            &mut self.counts,
        )?;
        for (total, m) in self.totals.iter_mut().zip(&billing.meters) {
            *total += m.i_b;
        }
        self.next_slot += 1;
        Ok(SlotOutcome {
            protected,
            billing,
            counts: self.counts - before,
        })
    }
}

impl Iterator for Simulation<'_> {
    type Item = Result<SlotOutcome>;

    fn next(&mut self) -> Option<Self::Item> {
        (self.next_slot < self.scenario.n_slots()).then(|| self.step())
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub slots: Vec<SlotBillingResult>,
    /// `P_v` per meter (rows) and slot (columns).
    pub protected: Vec<Vec<f64>>,
    /// Accumulated bill per meter in cents.
    pub totals: Vec<f64>,
    pub counts: OpCounts,
}

impl ScenarioRun {
    pub fn total_bill(&self) -> f64 {
        self.totals.iter().sum()
    }

    pub fn peak_slots(&self) -> usize {
        self.slots.iter().filter(|s| s.peak_in_place).count()
    }

    pub fn adjusted_energy(&self) -> f64 {
        self.slots.iter().map(|s| s.regional_sum).sum()
    }

    /// Running accumulated bill of one meter after each slot.
    pub fn cumulative_bill(&self, meter_idx: usize) -> Vec<f64> {
        self.slots
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.meters[meter_idx].i_b;
                Some(*acc)
            })
            .collect()
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun> {
    let mut sim = Simulation::new(scenario);
    let mut slots = Vec::with_capacity(scenario.n_slots());
    let mut protected = vec![Vec::with_capacity(scenario.n_slots()); scenario.n_meters()];
    for outcome in sim.by_ref() {
        let outcome = outcome?;
        for (row, p) in protected.iter_mut().zip(&outcome.protected) {
            row.push(p.p_v);
        }
        slots.push(outcome.billing);
    }
    Ok(ScenarioRun {
        slots,
        protected,
        totals: sim.totals().to_vec(),
        counts: sim.counts(),
    })
}

/// Flat-peak reference scheme: peak detection on the true regional sum, and in
/// a peak slot every home pays the peak price regardless of its own usage.
pub fn baseline_flat_peak_bill(readings: &Readings, tariff: &Tariff) -> Vec<f64> {
    let mut totals = vec![0.0; readings.n_meters()];
    for s in 0..readings.n_slots() {
        let sum: f64 = readings.column(s).sum();
        let price = if sum >= tariff.peak_factor {
            tariff.peak_price
        } else {
            tariff.unit_price
        };
        for (total, i_v) in totals.iter_mut().zip(readings.column(s)) {
            *total += i_v * price;
        }
    }
    totals
}
