//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use drdp::app::execute;
use drdp::billing::{baseline_flat_peak_bill, run_scenario, OpCounts, Simulation};
use drdp::config::parse_config;
use drdp::coop::{
    coop_expectation, coop_probability, cooperative_threshold, enumerate_oracle, CoopModel,
};
use drdp::dp_noise::audit::{
    audit_ratio, ks_statistic, laplace_cdf, linear_edges, symmetric_release,
};
use drdp::dp_noise::streams::{derive_seed, stream_rng, Stream};
use drdp::dp_noise::{sample_laplace, NoiseMode, PrivacyParams};
use drdp::metering::{protect_all, synthesize, LoadProfile};
use drdp::metrics::{bill_error_series, convergence_series, fleet_mae, mae_sweep};
use drdp::{Readings, Scenario, Tariff};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const SWEEP: [f64; 5] = [0.01, 0.1, 0.5, 1.0, 2.0];

fn synthetic(n_meters: usize, n_days: usize, epsilon: f64, seed: u64) -> Scenario {
    let readings = synthesize(
        n_meters,
        n_days,
        &LoadProfile::default(),
        &mut stream_rng(seed, Stream::Synthesis),
    )
    .expect("synthesis");
    let p = PrivacyParams::centered(epsilon, 1.0).expect("params");
    Scenario::new(readings, Tariff::default(), p, p, seed)
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Check {
    let took = start.elapsed();
    if took < limit {
        Ok(format!("{detail}; {:.2}s", took.as_secs_f64()))
    } else {
        Err(format!(
            "{detail}; took {:.2}s, limit {}s",
            took.as_secs_f64(),
            limit.as_secs()
        ))
    }
}

fn mae_anchor() -> Check {
    let start = Instant::now();
    let s = synthetic(10, 3, 0.01, 42);
    let protected = protect_all(&s).map_err(|e| e.to_string())?;
    let mae = fleet_mae(&protected, &s.readings).map_err(|e| e.to_string())?;
    if !(90.0..=110.0).contains(&mae) {
        return Err(format!("MAE {mae:.3} Wh outside [90, 110]"));
    }
    within_time(start, Duration::from_secs(5), format!("MAE {mae:.3} Wh"))
}

fn mae_law() -> Check {
    let start = Instant::now();
    // 10 meters x 7 days = 10080 readings per budget
    let s = synthetic(10, 7, 0.5, 42);
    let series = mae_sweep(&s, &SWEEP).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for &(eps, mae) in &series.points {
        let expected = 1.0 / eps;
        let rel = (mae - expected) / expected;
        if rel.abs() > 0.10 {
            return Err(format!(
                "eps {eps}: MAE {mae:.4} vs {expected:.4} ({:+.1}%)",
                rel * 100.0
            ));
        }
        detail.push(format!("{eps}:{mae:.3}"));
    }
    let ys: Vec<f64> = series.ys().collect();
    if ys.windows(2).any(|w| w[1] > w[0]) {
        return Err(format!("not monotone: {ys:?}"));
    }
    within_time(
        start,
        Duration::from_secs(30),
        format!("MAE by eps {}", detail.join(" ")),
    )
}

fn billing_convergence() -> Check {
    let start = Instant::now();
    let s = synthetic(10, 3, 0.5, 42);
    let errors = bill_error_series(&s, &SWEEP).map_err(|e| e.to_string())?;
    let worst = errors.ys().fold(0.0, f64::max);
    if worst > 0.05 {
        return Err(format!("regional bill error {:.3}% > 5%", worst * 100.0));
    }

    let meter = 2;
    let (mut early, mut late) = (0.0, 0.0);
    let seeds = 20;
    for k in 0..seeds {
        let run = synthetic(10, 3, 0.01, derive_seed(7, k));
        let c = convergence_series(&run, 0.01, meter).map_err(|e| e.to_string())?;
        early += c.y_at(13);
        late += c.y_at(431);
    }
    early /= seeds as f64;
    late /= seeds as f64;
    if late >= early {
        return Err(format!(
            "mean running error slot 432 {late:.5} >= slot 14 {early:.5}"
        ));
    }
    within_time(
        start,
        Duration::from_secs(60),
        format!(
            "max regional error {:.3}%; running error slot 14 {:.4}% -> slot 432 {:.4}%",
            worst * 100.0,
            early * 100.0,
            late * 100.0
        ),
    )
}

fn incentive() -> Check {
    let s = synthetic(10, 3, 0.5, 42).without_noise();
    let run = run_scenario(&s).map_err(|e| e.to_string())?;
    let flat = baseline_flat_peak_bill(&s.readings, &s.tariff);
    // meter 0 is the cooperative home of the default profile
    if run.totals[0] >= flat[0] {
        return Err(format!(
            "cooperative home {:.2} >= flat peak {:.2}",
            run.totals[0], flat[0]
        ));
    }

    let calm = synthesize(
        10,
        3,
        &LoadProfile::flat(500.0),
        &mut stream_rng(42, Stream::Synthesis),
    )
    .map_err(|e| e.to_string())?;
    let p = PrivacyParams::centered(0.5, 1.0).unwrap();
    let calm = Scenario::new(calm, Tariff::default(), p, p, 42).without_noise();
    let calm_run = run_scenario(&calm).map_err(|e| e.to_string())?;
    if calm_run.peak_slots() != 0
        || calm_run.totals != baseline_flat_peak_bill(&calm.readings, &calm.tariff)
    {
        return Err("no-peak scenario totals differ from baseline".into());
    }
    Ok(format!(
        "cooperative home {:.2} vs flat peak {:.2} cents ({:.1}% lower); no-peak totals equal",
        run.totals[0],
        flat[0],
        (1.0 - run.totals[0] / flat[0]) * 100.0
    ))
}

fn billing_oracle() -> Check {
    let readings = Readings::from_rows(vec![vec![7000.0, 3000.0], vec![5500.0, 2500.5]]).unwrap();
    let p = PrivacyParams::centered(0.5, 1.0).unwrap();
    let mut s = Scenario::new(readings, Tariff::default(), p, p, 1);
    s.noise = NoiseMode::Off;
    let run = run_scenario(&s).map_err(|e| e.to_string())?;
    // slot 0 peak (12500 >= 12000, share 6000): 7000*25 + 5500*10
    // slot 1 off-peak: 3000*10 + 2500.5*10
    let expected = [205_000.0, 80_005.0];
    if run.totals != expected {
        return Err(format!("totals {:?}, expected {expected:?}", run.totals));
    }
    Ok(format!("totals {:?} cents", run.totals))
}

fn coop_math() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 1..=16 {
        for i in 1..=9 {
            let p = i as f64 / 10.0;
            let shared = CoopModel::shared(n, p).unwrap();
            let oracle = enumerate_oracle(
                &CoopModel::per_meter(vec![p; n]).unwrap(),
                cooperative_threshold(n),
            )
            .map_err(|e| e.to_string())?;
            let dp = (coop_probability(&shared).unwrap() - oracle.probability).abs();
            let de = (coop_expectation(&shared).unwrap() - oracle.expectation).abs();
            worst = worst.max(dp).max(de);
            if dp > 1e-12 || de > 1e-12 {
                return Err(format!("N={n} p={p}: gaps {dp:.2e} {de:.2e}"));
            }
        }
    }
    let m3 = CoopModel::shared(3, 0.5).unwrap();
    let (p3, e3) = (
        coop_probability(&m3).unwrap(),
        coop_expectation(&m3).unwrap(),
    );
    if (p3 - 0.5).abs() > 1e-12 || (e3 - 1.125).abs() > 1e-12 {
        return Err(format!("N=3 p=0.5 gives {p3}, {e3}"));
    }
    let curve: Vec<f64> = (1..=9)
        .map(|i| coop_expectation(&CoopModel::shared(12, i as f64 / 10.0).unwrap()).unwrap())
        .collect();
    if curve.windows(2).any(|w| w[1] <= w[0]) {
        return Err(format!("N=12 expectation not increasing: {curve:?}"));
    }
    within_time(
        start,
        Duration::from_secs(5),
        format!("max gap {worst:.1e}; N=3 p=0.5 -> {p3}, {e3}"),
    )
}

fn noise_distribution() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let b = 1.0;
    let draws: Vec<_> = (0..100_000)
        .map(|_| sample_laplace(0.0, b, &mut rng))
        .collect();
    let raw: Vec<f64> = draws.iter().map(|d| d.raw).collect();
    let ks = ks_statistic(&raw, |x| laplace_cdf(x, 0.0, b));
    if ks >= 0.01 {
        return Err(format!("KS {ks:.5} >= 0.01"));
    }
    let folded = draws.iter().map(|d| d.magnitude).sum::<f64>() / draws.len() as f64;
    if (folded - b).abs() / b > 0.03 {
        return Err(format!("folded mean {folded:.4} vs scale {b}"));
    }
    let mut ratios = Vec::new();
    for eps in [0.5, 1.0] {
        let params = PrivacyParams::centered(eps, 1.0).unwrap();
        let scale = params.scale();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let audit = audit_ratio(
            |x| symmetric_release(x, &params, &mut rng),
            0.0,
            1.0,
            eps,
            &linear_edges(-4.0 * scale, 1.0 + 4.0 * scale, 16),
            200_000,
            4.5,
        );
        if !audit.passed() {
            return Err(format!(
                "ratio audit failed at eps {eps}: {} violations",
                audit.violations
            ));
        }
        ratios.push(format!("eps {eps} max ln ratio {:.3}", audit.max_log_ratio));
    }
    Ok(format!(
        "KS {ks:.5}; folded mean {folded:.4}; {}",
        ratios.join(", ")
    ))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let modes = [
        "run",
        "mae-sweep",
        "bill-error",
        "convergence",
        "coop-table",
        "baseline-compare",
    ];
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut count = 0;
    for mode in modes {
        let dir = root.path().join(mode);
        let args = [
            "drdp",
            "--mode",
            mode,
            "--synth-days",
            "2",
            "--seed",
            "9",
            "--out",
            dir.to_str().unwrap(),
        ];
        let config = parse_config(args).map_err(|e| format!("{e:?}"))?;
        execute(&config).map_err(|e| e.to_string())?;
        let first = snapshot(&dir);
        execute(&config).map_err(|e| e.to_string())?;
        if first != snapshot(&dir) {
            return Err(format!("{mode}: re-run differs"));
        }
        count += first.len();
    }
    Ok(format!(
        "{} modes, {count} files byte-identical on re-run",
        modes.len()
    ))
}

fn slot_counts(n: usize) -> Result<OpCounts, String> {
    let tariff = Tariff::default();
    // every meter above the fair share, so the slot is a peak slot
    let each = 2.0 * tariff.peak_factor() / n as f64;
    let readings = Readings::from_rows(vec![vec![each; 1]; n]).map_err(|e| e.to_string())?;
    let p = PrivacyParams::centered(0.5, 1.0).unwrap();
    let s = Scenario::new(readings, tariff, p, p, 3);
    let outcome = Simulation::new(&s)
        .next()
        .ok_or("no slot")?
        .map_err(|e| e.to_string())?;
    if !outcome.billing.peak_in_place {
        return Err(format!("N={n}: slot unexpectedly off-peak"));
    }
    Ok(outcome.counts)
}

fn linear_scaling() -> Check {
    let sizes = [10u64, 100, 1000];
    let totals = sizes
        .iter()
        .map(|&n| slot_counts(n as usize).map(|c| c.total()))
        .collect::<Result<Vec<_>, _>>()?;
    let a = (totals[1] - totals[0]) / (sizes[1] - sizes[0]);
    let b = totals[0] - a * sizes[0];
    for (n, t) in sizes.iter().zip(&totals) {
        if a * n + b != *t {
            return Err(format!(
                "N={n}: {t} ops, fit {a}N+{b} predicts {}",
                a * n + b
            ));
        }
    }
    Ok(format!("ops per slot {totals:?} = {a}N + {b}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 mae anchor", mae_anchor),
        ("2 mae law", mae_law),
        ("3 billing convergence", billing_convergence),
        ("4 incentive", incentive),
        ("5 billing oracle", billing_oracle),
        ("6 cooperative state", coop_math),
        ("7 noise distribution", noise_distribution),
        ("8 determinism", determinism),
        ("9 linear scaling", linear_scaling),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
