//! Mode dispatch and report emission for the command-line tool.
//!
//! Every JSON report embeds the resolved configuration under `config`. Bills
//! are rounded to 0.01 cent and energies to 0.0001 Wh only here, at emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::billing::{baseline_flat_peak_bill, run_scenario, ScenarioRun, Tariff};
use crate::config::{Mode, RunConfig};
use crate::coop::{coop_expectation, coop_probability, measure_coop_state, CoopModel};
use crate::dp_noise::streams::{stream_rng, Stream};
use crate::dp_noise::PrivacyParams;
use crate::error::{Error, Result};
use crate::metering::{load_csv, synthesize, Readings, Scenario};
use crate::metrics::{bill_error_series, convergence_series, mae_sweep, MetricSeries};

/// What a mode produced: the files written and a one-line summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub headline: String,
    pub files: Vec<PathBuf>,
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn cents(v: f64) -> String {
    format!("{v:.2}")
}

fn wh(v: f64) -> String {
    format!("{v:.4}")
}

pub fn load_readings(config: &RunConfig) -> Result<Readings> {
    match (&config.input, &config.synth) {
        (Some(path), _) => load_csv(path),
        (None, Some(s)) => {
            let mut rng = stream_rng(config.seed, Stream::Synthesis);
            synthesize(s.n_meters, s.n_days, &s.profile, &mut rng)
        }
        (None, None) => Err(Error::Config("no input and no synthetic settings".into())),
    }
}

pub fn build_scenario(config: &RunConfig) -> Result<Scenario> {
    let readings = load_readings(config)?;
    let tariff = Tariff::new(config.unit_price, config.peak_price, config.peak_factor)?;
    let meter = PrivacyParams::new(config.epsilon1, config.mu, config.delta_f1)?;
    let grid = PrivacyParams::new(config.epsilon2, config.mu, config.delta_f2)?;
    let mut scenario = Scenario::new(readings, tariff, meter, grid, config.seed);
    scenario.noise = config.noise;
    Ok(scenario)
}

struct Reports<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Reports<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(format!("writing {name}"), e))
    }

    fn series(&mut self, name: &str, series: &MetricSeries) -> Result<()> {
        let w = self.create(name)?;
        series.write_csv(w)
    }

    fn rows<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {name}"), e))
    }
}

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    let mut reports = Reports::new(&config.output_dir)?;
    let headline = match config.mode {
        Mode::Run => mode_run(config, &mut reports)?,
        Mode::MaeSweep => mode_mae_sweep(config, &mut reports)?,
        Mode::BillError => mode_bill_error(config, &mut reports)?,
        Mode::Convergence => mode_convergence(config, &mut reports)?,
        Mode::CoopTable => mode_coop_table(config, &mut reports)?,
        Mode::BaselineCompare => mode_baseline(config, &mut reports)?,
    };
    Ok(Outcome {
        headline,
        files: reports.files,
    })
}

/// Writes the per meter-slot report rows.
pub fn write_slot_report<W: Write>(run: &ScenarioRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slot",
        "meter_id",
        "b_r_wh",
        "peak_in_place",
        "charged_peak",
        "bill_cents",
        "deviation_wh",
    ])?;
    for slot in &run.slots {
        for m in &slot.meters {
            w.write_record([
                slot.slot.to_string(),
                m.meter_id.to_string(),
                wh(m.b_r),
                slot.peak_in_place.to_string(),
                m.charged_peak.to_string(),
                cents(m.i_b),
                m.d_f.map(wh).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("writing slot report", e))
}

fn mode_run(config: &RunConfig, reports: &mut Reports) -> Result<String> {
    let scenario = build_scenario(config)?;
    let run = run_scenario(&scenario)?;
    write_slot_report(&run, reports.create("report.csv")?)?;

    let coop = measure_coop_state(&run.slots);
    let cooperative_slots = coop.iter().filter(|o| o.cooperative).count();
    let meters: Vec<Value> = scenario
        .readings
        .meter_ids()
        .iter()
        .zip(&run.totals)
        .map(|(id, total)| json!({ "meter_id": id, "bill_cents": round_to(*total, 2) }))
        .collect();
    let summary = json!({
        "mode": config.mode.name(),
        "config": config,
        "n_meters": scenario.n_meters(),
        "n_slots": scenario.n_slots(),
        "peak_slots": run.peak_slots(),
        "cooperative_peak_slots": cooperative_slots,
        "total_true_energy_wh": round_to(scenario.readings.total_energy(), 4),
        "total_regional_energy_wh": round_to(run.adjusted_energy(), 4),
        "total_bill_cents": round_to(run.total_bill(), 2),
        "meters": meters,
    });
    reports.json("summary.json", &summary)?;
    Ok(format!(
        "run: {} meters x {} slots, {} peak slots, total bill {} cents",
        scenario.n_meters(),
        scenario.n_slots(),
        run.peak_slots(),
        cents(run.total_bill())
    ))
}

fn metrics_json(config: &RunConfig, series: &[&MetricSeries]) -> Value {
    let metrics: serde_json::Map<String, Value> = series
        .iter()
        .map(|s| {
            (
                s.label.clone(),
                serde_json::to_value(s).expect("series serializes"),
            )
        })
        .collect();
    json!({ "mode": config.mode.name(), "config": config, "metrics": metrics })
}

fn endpoints(series: &MetricSeries) -> ((f64, f64), (f64, f64)) {
    (
        series.points[0],
        *series.points.last().expect("non-empty series"),
    )
}

fn mode_mae_sweep(config: &RunConfig, reports: &mut Reports) -> Result<String> {
    let scenario = build_scenario(config)?;
    let series = mae_sweep(&scenario, &config.epsilons)?;
    reports.series("mae_sweep.csv", &series)?;
    reports.json("metrics.json", &metrics_json(config, &[&series]))?;
    let ((x0, y0), (x1, y1)) = endpoints(&series);
    Ok(format!(
        "mae-sweep: MAE {y0:.3} Wh at epsilon {x0} .. {y1:.3} Wh at epsilon {x1}"
    ))
}

fn mode_bill_error(config: &RunConfig, reports: &mut Reports) -> Result<String> {
    let scenario = build_scenario(config)?;
    let series = bill_error_series(&scenario, &config.epsilons)?;
    reports.series("bill_error.csv", &series)?;
    reports.json("metrics.json", &metrics_json(config, &[&series]))?;
    let worst = series.ys().fold(0.0, f64::max);
    Ok(format!(
        "bill-error: worst relative regional bill error {:.4}% over {} budgets",
        worst * 100.0,
        series.len()
    ))
}

fn mode_convergence(config: &RunConfig, reports: &mut Reports) -> Result<String> {
    let scenario = build_scenario(config)?;
    let meter_idx = match config.meter_id {
        None => 0,
        Some(id) => scenario
            .readings
            .meter_ids()
            .iter()
            .position(|&m| m == id)
            .ok_or_else(|| Error::Config(format!("meter {id} not in scenario")))?,
    };
    let series = convergence_series(&scenario, config.epsilon1, meter_idx)?;
    reports.series("convergence.csv", &series)?;
    reports.json("metrics.json", &metrics_json(config, &[&series]))?;
    let ((_, first), (slots, last)) = endpoints(&series);
    Ok(format!(
        "convergence: meter {} relative bill error {:.4}% after 1 slot, {:.4}% after {slots} slots",
        scenario.readings.meter_ids()[meter_idx],
        first * 100.0,
        last * 100.0
    ))
}

fn mode_coop_table(config: &RunConfig, reports: &mut Reports) -> Result<String> {
    let n = match &config.input {
        Some(path) => load_csv(path)?.n_meters(),
        None => config.n_meters,
    };
    let mut probability = MetricSeries::new("coop_probability", "p", "probability");
    let mut expectation = MetricSeries::new("coop_expectation", "p", "meters");
    let mut rows = Vec::new();
    for k in 1..=9 {
        let p = f64::from(k) / 10.0;
        let model = CoopModel::shared(n, p)?;
        let (pr, ex) = (coop_probability(&model)?, coop_expectation(&model)?);
        probability.push(p, pr)?;
        expectation.push(p, ex)?;
        rows.push(vec![p.to_string(), pr.to_string(), ex.to_string()]);
    }
    reports.rows("coop_table.csv", &["p", "probability", "expectation"], rows)?;
    let mut doc = metrics_json(config, &[&probability, &expectation]);
    doc["n"] = json!(n);
    reports.json("metrics.json", &doc)?;
    Ok(format!(
        "coop-table: N={n}, expectation {:.4} at p=0.1 .. {:.4} at p=0.9",
        expectation.y_at(0),
        expectation.y_at(8)
    ))
}

fn mode_baseline(config: &RunConfig, reports: &mut Reports) -> Result<String> {
    let scenario = build_scenario(config)?;
    let exact = run_scenario(&scenario.without_noise())?;
    let private = run_scenario(&scenario)?;
    let flat = baseline_flat_peak_bill(&scenario.readings, &scenario.tariff);

    let savings = |drdp: f64, base: f64| {
        if base > 0.0 {
            (base - drdp) / base * 100.0
        } else {
            0.0
        }
    };
    let ids = scenario.readings.meter_ids();
    let rows = (0..ids.len()).map(|i| {
        vec![
            ids[i].to_string(),
            cents(exact.totals[i]),
            cents(private.totals[i]),
            cents(flat[i]),
            format!("{:.4}", savings(exact.totals[i], flat[i])),
        ]
    });
    reports.rows(
        "baseline_compare.csv",
        &[
            "meter_id",
            "drdp_cents",
            "drdp_private_cents",
            "flat_peak_cents",
            "savings_pct",
        ],
        rows,
    )?;

    let drdp_total = exact.total_bill();
    let flat_total: f64 = flat.iter().sum();
    let meters: Vec<Value> = (0..ids.len())
        .map(|i| {
            json!({
                "meter_id": ids[i],
                "drdp_cents": round_to(exact.totals[i], 2),
                "drdp_private_cents": round_to(private.totals[i], 2),
                "flat_peak_cents": round_to(flat[i], 2),
            })
        })
        .collect();
    let summary = json!({
        "mode": config.mode.name(),
        "config": config,
        "peak_slots_true": exact.peak_slots(),
        "drdp_total_cents": round_to(drdp_total, 2),
        "drdp_private_total_cents": round_to(private.total_bill(), 2),
        "flat_peak_total_cents": round_to(flat_total, 2),
        "savings_pct": round_to(savings(drdp_total, flat_total), 4),
        "meters": meters,
    });
    reports.json("summary.json", &summary)?;
    Ok(format!(
        "baseline-compare: DRDP {} cents vs flat-peak {} cents ({:.2}% less)",
        cents(drdp_total),
        cents(flat_total),
        savings(drdp_total, flat_total)
    ))
}
