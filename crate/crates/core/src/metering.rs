//! Simulated smart meters: true readings in, protected readings out.
//!
//! Readings are interval energy in Wh per 10-minute slot (144 slots per day).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::billing::Tariff;
use crate::dp_noise::streams::Stream;
use crate::dp_noise::{protect_reading, NoiseMode, NoiseSource, PrivacyParams, StageNoise};
use crate::error::{Error, Result};
use crate::OpCounts;

pub const SLOTS_PER_DAY: usize = 144;
pub const SLOT_MINUTES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterReading {
    pub meter_id: u32,
    pub slot: u32,
    pub i_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtectedReading {
    pub meter_id: u32,
    pub slot: u32,
    pub p_v: f64,
}

/// Dense meter x slot matrix of true readings, meters sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Readings {
    meter_ids: Vec<u32>,
    first_slot: u32,
    values: Vec<Vec<f64>>,
}

impl Readings {
    pub fn new(meter_ids: Vec<u32>, first_slot: u32, values: Vec<Vec<f64>>) -> Result<Self> {
        if meter_ids.is_empty() {
            return Err(Error::Empty("no meters"));
        }
        if meter_ids.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: meter_ids.len(),
                right: values.len(),
            });
        }
        if !meter_ids.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "meter ids must be strictly increasing".into(),
            ));
        }
        let n_slots = values[0].len();
        if n_slots == 0 {
            return Err(Error::Empty("no slots"));
        }
        for row in &values {
            if row.len() != n_slots {
                return Err(Error::LengthMismatch {
                    left: n_slots,
                    right: row.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::InputDomain {
                    name: "wh",
                    value: bad,
                    requirement: "non-negative and finite",
                });
            }
        }
        Ok(Self {
            meter_ids,
            first_slot,
            values,
        })
    }

    /// Meters numbered `0..n` starting at slot 0.
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..values.len() as u32).collect();
        Self::new(ids, 0, values)
    }

    pub fn n_meters(&self) -> usize {
        self.meter_ids.len()
    }

    pub fn n_slots(&self) -> usize {
        self.values[0].len()
    }

    pub fn meter_ids(&self) -> &[u32] {
        &self.meter_ids
    }

    pub fn first_slot(&self) -> u32 {
        self.first_slot
    }

    /// Absolute slot label of the `idx`-th column.
    pub fn slot_label(&self, idx: usize) -> u32 {
        self.first_slot + idx as u32
    }

    pub fn series(&self, meter_idx: usize) -> &[f64] {
        &self.values[meter_idx]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn column(&self, slot_idx: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |row| row[slot_idx])
    }

    pub fn slot_readings(&self, slot_idx: usize) -> Vec<MeterReading> {
        self.meter_ids
            .iter()
            .zip(&self.values)
            .map(|(&meter_id, row)| MeterReading {
                meter_id,
                slot: self.slot_label(slot_idx),
                i_v: row[slot_idx],
            })
            .collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.values.iter().flatten().sum()
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    meter_id: u32,
    slot: u32,
    wh: f64,
}

const CSV_HEADER: [&str; 3] = ["meter_id", "slot", "wh"];

pub fn load_csv(path: impl AsRef<Path>) -> Result<Readings> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_csv(file, path)
}

/// Parses `meter_id,slot,wh` rows; `origin` only labels error messages.
pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Readings> {
    let malformed = |line: u64, message: String| Error::MalformedRow {
        path: origin.to_path_buf(),
        line,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(malformed(
            1,
            format!(
                "expected header `meter_id,slot,wh`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut cells: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: CsvRow = record
            .deserialize(Some(&header))
            .map_err(|e| malformed(line, e.to_string()))?;
        if !(row.wh >= 0.0 && row.wh.is_finite()) {
            return Err(Error::InputDomain {
                name: "wh",
                value: row.wh,
                requirement: "non-negative and finite",
            });
        }
        if cells
            .entry(row.meter_id)
            .or_default()
            .insert(row.slot, row.wh)
            .is_some()
        {
            return Err(Error::DuplicateCell {
                meter_id: row.meter_id,
                slot: row.slot,
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::Empty("csv has no readings"));
    }

    let mut span: Option<(u32, u32)> = None;
    let mut ids = Vec::with_capacity(cells.len());
    let mut values = Vec::with_capacity(cells.len());
    for (meter_id, slots) in cells {
        let mut keys = slots.keys().copied();
        let first = keys.next().expect("non-empty by construction");
        let mut last = first;
        for slot in keys {
            if slot != last + 1 {
                return Err(Error::SlotGap {
                    meter_id,
                    slot: last + 1,
                });
            }
            last = slot;
        }
        match span {
            None => span = Some((first, last)),
            Some((f, l)) if (f, l) != (first, last) => {
                return Err(Error::RaggedSlots {
                    meter_id,
                    first,
                    last,
                    expected_first: f,
                    expected_last: l,
                })
            }
            Some(_) => {}
        }
        ids.push(meter_id);
        values.push(slots.into_values().collect());
    }
    Readings::new(ids, span.map_or(0, |s| s.0), values)
}

/// Two-peak daily load shape.
///
/// Each peak is a periodic bump `exp(k * (cos(2 pi (h - c) / 24) - 1))` centred on
/// hour `c`. Every meter gets a level factor and a phase shift; the first
/// `cooperative_homes` meters run at `cooperative_level` instead, which keeps them
/// under the per-home average in most peak slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub base_wh: f64,
    pub morning_amp_wh: f64,
    pub morning_hour: f64,
    pub evening_amp_wh: f64,
    pub evening_hour: f64,
    pub sharpness: f64,
    pub level_spread: f64,
    pub phase_jitter_h: f64,
    pub jitter_wh: f64,
    pub cooperative_homes: usize,
    pub cooperative_level: f64,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            base_wh: 700.0,
            morning_amp_wh: 600.0,
            morning_hour: 8.0,
            evening_amp_wh: 900.0,
            evening_hour: 19.0,
            sharpness: 6.0,
            level_spread: 0.15,
            phase_jitter_h: 0.5,
            jitter_wh: 50.0,
            cooperative_homes: 1,
            cooperative_level: 0.55,
        }
    }
}

impl LoadProfile {
    /// Constant load with no peaks, no spread and no jitter.
    pub fn flat(base_wh: f64) -> Self {
        Self {
            base_wh,
            morning_amp_wh: 0.0,
            evening_amp_wh: 0.0,
            level_spread: 0.0,
            phase_jitter_h: 0.0,
            jitter_wh: 0.0,
            cooperative_homes: 0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 7] = [
            ("base_wh", self.base_wh, self.base_wh >= 0.0),
            (
                "morning_amp_wh",
                self.morning_amp_wh,
                self.morning_amp_wh >= 0.0,
            ),
            (
                "evening_amp_wh",
                self.evening_amp_wh,
                self.evening_amp_wh >= 0.0,
            ),
            ("sharpness", self.sharpness, self.sharpness > 0.0),
            (
                "level_spread",
                self.level_spread,
                (0.0..1.0).contains(&self.level_spread),
            ),
            ("jitter_wh", self.jitter_wh, self.jitter_wh >= 0.0),
            (
                "cooperative_level",
                self.cooperative_level,
                self.cooperative_level >= 0.0,
            ),
        ];
        for (name, value, ok) in checks {
            if !(ok && value.is_finite()) {
                return Err(Error::Parameter {
                    name,
                    value,
                    requirement: "finite and within its documented range",
                });
            }
        }
        if !(self.phase_jitter_h >= 0.0 && self.phase_jitter_h.is_finite()) {
            return Err(Error::Parameter {
                name: "phase_jitter_h",
                value: self.phase_jitter_h,
                requirement: "non-negative and finite",
            });
        }
        Ok(())
    }

    fn bump(&self, hour: f64, centre: f64) -> f64 {
        (self.sharpness * ((2.0 * PI * (hour - centre) / 24.0).cos() - 1.0)).exp()
    }

    fn shape(&self, hour: f64) -> f64 {
        self.base_wh
            + self.morning_amp_wh * self.bump(hour, self.morning_hour)
            + self.evening_amp_wh * self.bump(hour, self.evening_hour)
    }
}

pub fn synthesize<R: Rng + ?Sized>(
    n_meters: usize,
    n_days: usize,
    profile: &LoadProfile,
    rng: &mut R,
) -> Result<Readings> {
    if n_meters == 0 {
        return Err(Error::Parameter {
            name: "n_meters",
            value: 0.0,
            requirement: ">= 1",
        });
    }
    if n_days == 0 {
        return Err(Error::Parameter {
            name: "n_days",
            value: 0.0,
            requirement: ">= 1",
        });
    }
    profile.validate()?;
    if profile.morning_amp_wh == 0.0 && profile.evening_amp_wh == 0.0 {
        log::warn!("load profile has zero peak amplitude; every slot sits at the base load");
    }

    let n_slots = n_days * SLOTS_PER_DAY;
    let jitter = Normal::new(0.0, profile.jitter_wh).expect("validated jitter");
    let mut values = Vec::with_capacity(n_meters);
    for m in 0..n_meters {
        let level = if m < profile.cooperative_homes {
            profile.cooperative_level
        } else if profile.level_spread > 0.0 {
            Uniform::new(1.0 - profile.level_spread, 1.0 + profile.level_spread)
                .expect("non-empty range")
                .sample(rng)
        } else {
            1.0
        };
        let phase = if profile.phase_jitter_h > 0.0 {
            Uniform::new(-profile.phase_jitter_h, profile.phase_jitter_h)
                .expect("non-empty range")
                .sample(rng)
        } else {
            0.0
        };
        let row = (0..n_slots)
            .map(|s| {
                let hour = (s % SLOTS_PER_DAY) as f64 * SLOT_MINUTES as f64 / 60.0
                    + SLOT_MINUTES as f64 / 120.0;
                let noise = if profile.jitter_wh > 0.0 {
                    jitter.sample(rng)
                } else {
                    0.0
                };
                (level * profile.shape(hour - phase) + noise).max(0.0)
            })
            .collect();
        values.push(row);
    }
    Readings::from_rows(values)
}

/// A complete simulation input: readings, tariff, both privacy stages and the seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub readings: Readings,
    pub tariff: Tariff,
    pub meter_params: PrivacyParams,
    pub grid_params: PrivacyParams,
    pub seed: u64,
    pub noise: NoiseMode,
}

impl Scenario {
    pub fn new(
        readings: Readings,
        tariff: Tariff,
        meter_params: PrivacyParams,
        grid_params: PrivacyParams,
        seed: u64,
    ) -> Self {
        Self {
            readings,
            tariff,
            meter_params,
            grid_params,
            seed,
            noise: NoiseMode::Laplace,
        }
    }

    pub fn n_meters(&self) -> usize {
        self.readings.n_meters()
    }

    pub fn n_slots(&self) -> usize {
        self.readings.n_slots()
    }

    pub fn without_noise(&self) -> Self {
        Self {
            noise: NoiseMode::Off,
            ..self.clone()
        }
    }

    /// Both stages at budget `epsilon`, same sensitivities and location.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Ok(Self {
            meter_params: self.meter_params.with_epsilon(epsilon)?,
            grid_params: self.grid_params.with_epsilon(epsilon)?,
            ..self.clone()
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// One noise stream per meter, in meter order.
    pub fn meter_streams(&self) -> Vec<StageNoise> {
        self.readings
            .meter_ids()
            .iter()
            .map(|&id| StageNoise::for_stream(self.noise, self.seed, Stream::Meter(id)))
            .collect()
    }

    pub fn utility_stream(&self) -> StageNoise {
        StageNoise::for_stream(self.noise, self.seed, Stream::Utility)
    }
}

/// Every meter reports slot `slot_idx` through its own stream.
pub fn report_slot<N: NoiseSource>(
    readings: &Readings,
    slot_idx: usize,
    params: &PrivacyParams,
    streams: &mut [N],
) -> Result<Vec<ProtectedReading>> {
    report_slot_counted(
        readings,
        slot_idx,
        params,
        streams,
        &mut OpCounts::default(),
    )
}

pub(crate) fn report_slot_counted<N: NoiseSource>(
    readings: &Readings,
    slot_idx: usize,
    params: &PrivacyParams,
    streams: &mut [N],
    counts: &mut OpCounts,
) -> Result<Vec<ProtectedReading>> {
    if slot_idx >= readings.n_slots() {
        return Err(Error::SlotOutOfRange {
            slot: slot_idx,
            n_slots: readings.n_slots(),
        });
    }
    if streams.len() != readings.n_meters() {
        return Err(Error::LengthMismatch {
            left: readings.n_meters(),
            right: streams.len(),
        });
    }
    readings
        .slot_readings(slot_idx)
        .into_iter()
        .zip(streams.iter_mut())
        .map(|(r, stream)| {
            counts.protect += 1;
            Ok(ProtectedReading {
                meter_id: r.meter_id,
                slot: r.slot,
                p_v: protect_reading(r.i_v, params, stream)?,
            })
        })
        .collect()
}

/// Meter-side pass over the whole scenario; returns `P_v` rows in meter order.
pub fn protect_all(scenario: &Scenario) -> Result<Vec<Vec<f64>>> {
    let readings = &scenario.readings;
    let mut streams = scenario.meter_streams();
    readings
        .rows()
        .iter()
        .zip(streams.iter_mut())
        .map(|(row, stream)| {
            row.iter()
                .map(|&i_v| protect_reading(i_v, &scenario.meter_params, stream))
                .collect()
        })
        .collect()
}
