use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sqkerr::dynamics::{calibrate_resonance, extract_squeezing_rate, simulate_full_model, StepControl};
use sqkerr::fock::HilbertDims;
use sqkerr::limits::{
    max_squeezing_decoherence, max_squeezing_kerr_point, measurement_time_loss, DecoherenceOptions, KerrSweepOptions,
    SweepGrid,
};
use sqkerr::model::{kerr_exact, kerr_perturbative, squeezing_rate};
use sqkerr::units::{mhz, to_khz, to_mhz};

use crate::config::{rate_from_time, DeviceConfig, DriveConfig, RunConfig, SweepConfig, SweepQuantity};
use crate::error::CliError;
use crate::output::{Envelope, OutDir};

const DEVICE_AXES: &[&str] = &[
    "qubit_mhz",
    "phonon_mhz",
    "anharmonicity_mhz",
    "coupling_mhz",
    "t1_qubit_us",
    "t2_qubit_us",
    "t1_phonon_us",
    "t2_phonon_us",
];
const DRIVE_AXES: &[&str] = &["xi1", "xi2", "xi_product", "stark_product", "delta_a_mhz", "correction_mhz", "phase", "delta21_mhz"];

impl SweepQuantity {
    fn columns(self) -> &'static [&'static str] {
        match self {
            SweepQuantity::SqueezingRate => &["epsilon_khz"],
            SweepQuantity::Kerr => &["kerr_perturbative_khz", "kerr_exact_khz"],
            SweepQuantity::SimulatedRate => &["epsilon_predicted_khz", "epsilon_simulated_khz", "correction_mhz"],
            SweepQuantity::DecoherenceLimit => &["gamma", "gamma_phi", "t_opt_us", "v_min", "db"],
            SweepQuantity::KerrLimit => &["t_opt_k", "v_min", "db", "dim", "truncation_warning"],
            SweepQuantity::MeasurementLoss => &["v_measured", "initial_db", "measured_db"],
        }
    }

    fn allowed(self, name: &str) -> bool {
        match self {
            SweepQuantity::SqueezingRate | SweepQuantity::SimulatedRate => {
                DEVICE_AXES.contains(&name) || DRIVE_AXES.contains(&name)
            }
            SweepQuantity::Kerr => DEVICE_AXES.contains(&name) || name == "delta_a_mhz",
            SweepQuantity::DecoherenceLimit => {
                DEVICE_AXES.contains(&name) || ["epsilon_mhz", "delta_a_mhz", "p_e"].contains(&name)
            }
            SweepQuantity::KerrLimit => ["eps_over_k", "gamma_over_k"].contains(&name),
            SweepQuantity::MeasurementLoss => ["v0", "t_meas_us", "decay_time_us"].contains(&name),
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            SweepQuantity::DecoherenceLimit => &["epsilon_mhz", "delta_a_mhz"],
            SweepQuantity::KerrLimit => &["eps_over_k", "gamma_over_k"],
            SweepQuantity::MeasurementLoss => &["v0", "t_meas_us", "decay_time_us"],
            _ => &[],
        }
    }
}

/// Device, drive and free-standing values at one grid point.
struct Point {
    device: DeviceConfig,
    drives: DriveConfig,
    coords: Vec<(String, f64)>,
}

impl Point {
    fn new(cfg: &RunConfig, names: &[String], values: &[f64]) -> Self {
        let mut device = cfg.device.clone();
        let mut drives = cfg.drives.clone();
        for (name, &v) in names.iter().zip(values) {
            match name.as_str() {
                "qubit_mhz" => device.qubit_mhz = v,
                "phonon_mhz" => device.phonon_mhz = v,
                "anharmonicity_mhz" => device.anharmonicity_mhz = v,
                "coupling_mhz" => device.coupling_mhz = v,
                "t1_qubit_us" => device.t1_qubit_us = v,
                "t2_qubit_us" => device.t2_qubit_us = v,
                "t1_phonon_us" => device.t1_phonon_us = v,
                "t2_phonon_us" => device.t2_phonon_us = v,
                "xi1" => drives.xi1 = v,
                "xi2" => drives.xi2 = v,
                "xi_product" => {
                    drives.xi1 = v.sqrt();
                    drives.xi2 = v.sqrt();
                }
                "stark_product" => drives.stark_balanced_product = Some(v),
                "delta_a_mhz" => drives.delta_a_mhz = v,
                "correction_mhz" => drives.correction_mhz = Some(v),
                "phase" => drives.phase = v,
                "delta21_mhz" => drives.delta21_mhz = v,
                _ => {}
            }
        }
        let coords = names.iter().cloned().zip(values.iter().copied()).collect();
        Self { device, drives, coords }
    }

    fn get(&self, name: &str) -> Option<f64> {
        self.coords.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn evaluate(cfg: &RunConfig, sweep: &SweepConfig, p: &Point) -> Result<Vec<f64>, CliError> {
    let sim = &cfg.simulation;
    let dims = || HilbertDims::new(sim.qubit_levels, sim.phonon_levels).map_err(|e| CliError::config("simulation", e));
    match sweep.quantity {
        SweepQuantity::SqueezingRate => {
            let dev = p.device.params()?;
            let eps = squeezing_rate(&dev, &p.drives.params(&dev)?).map_err(|e| CliError::core("squeezing rate", e))?;
            Ok(vec![to_khz(eps.norm())])
        }
        SweepQuantity::Kerr => {
            let dev = p.device.params()?;
            let da = mhz(p.drives.delta_a_mhz);
            let pert = kerr_perturbative(dev.g, da, dev.alpha).map_err(|e| CliError::core("perturbative Kerr", e))?;
            let exact = kerr_exact(&dev, da, dims()?).map_err(|e| CliError::core("exact Kerr", e))?;
            Ok(vec![to_khz(pert), to_khz(exact)])
        }
        SweepQuantity::SimulatedRate => {
            let dev = p.device.params()?;
            let mut drives = p.drives.params(&dev)?;
            let eps = squeezing_rate(&dev, &drives).map_err(|e| CliError::core("squeezing rate", e))?.norm();
            if eps == 0.0 {
                return Err(CliError::Config("simulated_rate needs nonzero drives".into()));
            }
            let ctrl = StepControl { rtol: sim.rtol, atol: sim.atol, ..StepControl::default() };
            if sim.calibrate {
                let cal = calibrate_resonance(&dev, &drives, dims()?, 0.25 / eps, mhz(sim.calibrate_span_mhz), &ctrl)
                    .map_err(|e| CliError::core("resonance calibration", e))?;
                drives = drives.with_correction(cal.delta_correction);
            }
            let t_end = 0.35 / eps;
            let grid: Vec<f64> = (0..=30).map(|k| t_end * k as f64 / 30.0).collect();
            let traj = simulate_full_model(&dev, &drives, dims()?, &grid, &ctrl).map_err(|e| CliError::core("full model", e))?;
            let stats = traj.stats().map_err(|e| CliError::core("variances", e))?;
            let samples: Vec<_> = grid.iter().zip(&stats).map(|(&t, s)| (t, s.v_min, None)).collect();
            let fit = extract_squeezing_rate(&samples).map_err(|e| CliError::core("squeezing-rate fit", e))?;
            Ok(vec![to_khz(eps), to_khz(fit.epsilon), to_mhz(drives.delta_correction)])
        }
        SweepQuantity::DecoherenceLimit => {
            let dev = p.device.params()?;
            let eps = mhz(p.get("epsilon_mhz").expect("required axis"));
            let da = mhz(p.get("delta_a_mhz").expect("required axis"));
            let pe = p.get("p_e").unwrap_or(sweep.p_e);
            let opts = cfg.limits.as_ref().map_or(DecoherenceOptions::default(), |l| DecoherenceOptions {
                purcell: l.purcell,
                inherited_dephasing: l.inherited_dephasing,
            });
            let r = max_squeezing_decoherence(eps, &[da], &dev, pe, &opts).map_err(|e| CliError::core("decoherence limit", e))?;
            let r = r[0];
            Ok(vec![r.gamma, r.gamma_phi, r.t_opt, r.v_min, r.db])
        }
        SweepQuantity::KerrLimit => {
            let opts = KerrSweepOptions {
                dim: cfg.limits.as_ref().map_or(30, |l| l.kerr_dim),
                ..KerrSweepOptions::default()
            };
            let r = max_squeezing_kerr_point(p.get("eps_over_k").unwrap(), p.get("gamma_over_k").unwrap(), 1.0, &opts)
                .map_err(|e| CliError::core("Kerr limit", e))?;
            Ok(vec![r.t_opt, r.v_min, r.db, r.dim as f64, if r.truncation_warning { 1.0 } else { 0.0 }])
        }
        SweepQuantity::MeasurementLoss => {
            let gamma = rate_from_time(p.get("decay_time_us").unwrap());
            let r = measurement_time_loss(p.get("v0").unwrap(), gamma, p.get("t_meas_us").unwrap())
                .map_err(|e| CliError::core("measurement loss", e))?;
            Ok(vec![r.v_measured, r.initial_db, r.measured_db])
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    coords: Vec<f64>,
    values: Vec<f64>,
}

/// Everything that influences a point's value; cache files from another
/// configuration are ignored.
fn cache_key(cfg: &RunConfig, sweep: &SweepConfig) -> String {
    let parts = (
        env!("CARGO_PKG_VERSION"),
        sweep,
        &cfg.device,
        &cfg.drives,
        &cfg.simulation,
        &cfg.limits,
    );
    serde_json::to_string(&parts).expect("config serializes")
}

fn read_cache(path: &Path, key: &str, coords: &[f64]) -> Option<Vec<f64>> {
    let text = fs::read_to_string(path).ok()?;
    let e: CacheEntry = serde_json::from_str(&text).ok()?;
    (e.key == key && e.coords == coords).then_some(e.values)
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    quantity: SweepQuantity,
    axes: Vec<(String, Vec<f64>)>,
    columns: &'a [&'a str],
    points: usize,
    failed: Vec<FailedPoint>,
    csv: &'static str,
}

#[derive(Serialize)]
struct FailedPoint {
    index: usize,
    coords: Vec<f64>,
    error: String,
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep: missing [sweep] section".into()))?;
    if sweep.axes.is_empty() {
        return Err(CliError::Config("sweep: at least one axis is required".into()));
    }
    let mut axes = Vec::new();
    for a in &sweep.axes {
        if !sweep.quantity.allowed(&a.name) {
            return Err(CliError::Config(format!("sweep: axis '{}' does not apply to {:?}", a.name, sweep.quantity)));
        }
        if axes.iter().any(|(n, _): &(String, Vec<f64>)| *n == a.name) {
            return Err(CliError::Config(format!("sweep: duplicate axis '{}'", a.name)));
        }
        let v = a.resolved();
        if v.is_empty() {
            return Err(CliError::Config(format!("sweep: axis '{}' is empty", a.name)));
        }
        axes.push((a.name.clone(), v));
    }
    for r in sweep.quantity.required() {
        if !axes.iter().any(|(n, _)| n == r) {
            return Err(CliError::Config(format!("sweep: {:?} needs a '{r}' axis", sweep.quantity)));
        }
    }
    let columns = sweep.quantity.columns();
    let grid = SweepGrid::new(axes, &columns.join(",")).map_err(|e| CliError::config("sweep", e))?;
    let names: Vec<String> = grid.axes.iter().map(|(n, _)| n.clone()).collect();

    let cache_dir = if sweep.cache { Some(out.subdir("cache")?) } else { None };
    let key = cache_key(cfg, sweep);

    let results: Vec<Result<Vec<f64>, CliError>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let coords = grid.point(k);
            let file = cache_dir.as_ref().map(|d| d.join(format!("point_{k:06}.json")));
            if let Some(v) = file.as_deref().and_then(|f| read_cache(f, &key, &coords)) {
                log::debug!("point {k}: cached");
                return Ok(v);
            }
            let values = evaluate(cfg, sweep, &Point::new(cfg, &names, &coords))?;
            if let Some(f) = file {
                let entry = CacheEntry { key: key.clone(), coords, values: values.clone() };
                let text = serde_json::to_string(&entry).expect("cache entry serializes");
                fs::write(&f, text).map_err(|e| CliError::io(&f, e))?;
            }
            Ok(values)
        })
        .collect();

    let mut failed = Vec::new();
    out.write_with("sweep.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        let io = |e: csv::Error| CliError::Io(format!("sweep.csv: {e}"));
        let mut head: Vec<&str> = names.iter().map(String::as_str).collect();
        head.extend_from_slice(columns);
        head.extend_from_slice(&["status", "error"]);
        csv.write_record(&head).map_err(io)?;
        for (k, r) in results.iter().enumerate() {
            let coords = grid.point(k);
            let mut row: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
            match r {
                Ok(v) => {
                    row.extend(v.iter().map(|x| x.to_string()));
                    row.extend(["ok".to_string(), String::new()]);
                }
                Err(e) => {
                    log::warn!("sweep point {k} failed: {e}");
                    row.extend(columns.iter().map(|_| "NaN".to_string()));
                    row.extend(["failed".to_string(), e.to_string()]);
                    failed.push(FailedPoint { index: k, coords, error: e.to_string() });
                }
            }
            csv.write_record(&row).map_err(io)?;
        }
        csv.flush().map_err(|e| CliError::Io(format!("sweep.csv: {e}")))
    })?;

    let summary = SweepSummary {
        quantity: sweep.quantity,
        axes: grid.axes.clone(),
        columns,
        points: grid.len(),
        failed,
        csv: "sweep.csv",
    };
    log::info!("sweep: {} points, {} failed", summary.points, summary.failed.len());
    out.write_json("sweep.json", &Envelope::new("sweep", cfg, summary))?;
    Ok(())
}
