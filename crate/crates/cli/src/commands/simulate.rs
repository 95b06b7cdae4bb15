use serde::Serialize;
use sqkerr::dynamics::{
    calibrate_resonance, evolve_lindblad, extract_squeezing_rate, full_model_spec, LindbladSpec, MomentTrajectory,
    QuadratureStats, ResonanceCalibration, SqueezingRateFit, StepControl,
};
use sqkerr::fock::{annihilation, number, DensityMatrix, Dims, HilbertDims};
use sqkerr::model::{
    build_squeezed_kerr_hamiltonian, effective_params, squeezing_rate, DeviceParams, DriveParams, EffectiveParams,
    KerrMethod,
};
use sqkerr::tomography::{covariance_from_rho, qfi_max, symmetric_grid, wigner};
use sqkerr::units::{mhz, to_khz};
use sqkerr::C64;

use crate::config::{rate_from_time, ModelKind, RunConfig, SimulationConfig};
use crate::error::CliError;
use crate::output::{core_write, time_tag, Envelope, OutDir};

#[derive(Serialize)]
struct EffectiveModel {
    params: EffectiveParams,
    gamma: f64,
    gamma_phi: f64,
    epsilon_khz: f64,
    kerr_khz: f64,
    detuning_khz: f64,
}

#[derive(Serialize)]
struct FullModel {
    device: DeviceParams,
    drives: DriveParams,
    predicted_epsilon: C64,
    predicted_epsilon_khz: f64,
    calibration: Option<ResonanceCalibration>,
}

#[derive(Serialize)]
struct FinalState {
    t: f64,
    stats: QuadratureStats,
    squeezing_db: f64,
    mean_n: f64,
    qfi_max: f64,
    qfi_angle: f64,
    phonon_populations: Vec<f64>,
}

#[derive(Serialize)]
struct BestPoint {
    t: f64,
    v_min: f64,
    squeezing_db: f64,
}

#[derive(Serialize)]
struct RateFit {
    epsilon_khz: f64,
    epsilon_err_khz: f64,
    gamma: f64,
    gamma_err: f64,
    fit: SqueezingRateFit,
}

#[derive(Serialize)]
struct Summary {
    model: ModelKind,
    effective: Option<EffectiveModel>,
    full: Option<FullModel>,
    times: usize,
    best: BestPoint,
    final_state: FinalState,
    rate_fit: Option<RateFit>,
    files: Vec<String>,
}

/// Uniform grid on [0, t_max] merged with the snapshot times.
pub fn time_grid(sim: &SimulationConfig) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=sim.steps).map(|k| sim.t_max_us * k as f64 / sim.steps as f64).collect();
    g.extend(&sim.snapshots_us);
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * sim.t_max_us);
    g
}

fn step_control(sim: &SimulationConfig) -> StepControl {
    StepControl { rtol: sim.rtol, atol: sim.atol, ..StepControl::default() }
}

fn effective_model(cfg: &RunConfig, device: &DeviceParams) -> Result<EffectiveModel, CliError> {
    let (params, gamma, gamma_phi) = match &cfg.effective {
        Some(e) => {
            let p = EffectiveParams {
                detuning: mhz(e.detuning_mhz),
                epsilon: C64::from_polar(mhz(e.epsilon_mhz), e.epsilon_phase),
                kerr: mhz(e.kerr_mhz),
                omega_a_shifted: device.omega_a,
            };
            (p, rate_from_time(e.decay_time_us), rate_from_time(e.dephasing_time_us))
        }
        None => {
            let drives = cfg.drives.params(device)?;
            let dims = HilbertDims::new(cfg.simulation.qubit_levels, cfg.simulation.phonon_levels)
                .map_err(|e| CliError::config("simulation", e))?;
            let p = effective_params(device, &drives, KerrMethod::Exact(dims)).map_err(|e| CliError::core("effective parameters", e))?;
            (p, device.gamma_phonon(), device.gamma_phi_phonon())
        }
    };
    if !(gamma >= 0.0 && gamma_phi >= 0.0) {
        return Err(CliError::Config("effective: decay and dephasing times must be non-negative".into()));
    }
    Ok(EffectiveModel {
        epsilon_khz: to_khz(params.epsilon.norm()),
        kerr_khz: to_khz(params.kerr),
        detuning_khz: to_khz(params.detuning),
        params,
        gamma,
        gamma_phi,
    })
}

fn effective_spec(m: &EffectiveModel, dim: usize) -> Result<LindbladSpec, CliError> {
    let h = build_squeezed_kerr_hamiltonian(&m.params, dim).map_err(|e| CliError::config("simulation", e))?;
    let mut jumps = Vec::new();
    if m.gamma > 0.0 {
        jumps.push((annihilation(dim).map_err(|e| CliError::config("simulation", e))?, m.gamma));
    }
    if m.gamma_phi > 0.0 {
        jumps.push((number(dim).map_err(|e| CliError::config("simulation", e))?, 2.0 * m.gamma_phi));
    }
    LindbladSpec::constant(h, jumps).map_err(|e| CliError::core("simulation", e))
}

fn full_model(cfg: &RunConfig, device: &DeviceParams, dims: HilbertDims) -> Result<FullModel, CliError> {
    let sim = &cfg.simulation;
    let mut drives = cfg.drives.params(device)?;
    let eps = squeezing_rate(device, &drives).map_err(|e| CliError::config("drives", e))?;
    let calibration = if sim.calibrate {
        if eps.norm() == 0.0 {
            return Err(CliError::Config("simulation: calibrate needs nonzero drives".into()));
        }
        let t_probe = 0.25 / eps.norm();
        let cal = calibrate_resonance(device, &drives, dims, t_probe, mhz(sim.calibrate_span_mhz), &step_control(sim))
            .map_err(|e| CliError::core("resonance calibration", e))?;
        drives = drives.with_correction(cal.delta_correction);
        Some(cal)
    } else {
        None
    };
    Ok(FullModel {
        device: *device,
        drives,
        predicted_epsilon: eps,
        predicted_epsilon_khz: to_khz(eps.norm()),
        calibration,
    })
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let sim = cfg.simulation_checked()?;
    let device = cfg.device.params()?;
    let grid = time_grid(sim);
    let ctrl = step_control(sim);

    let (states, effective, full) = match sim.model {
        ModelKind::Effective => {
            let m = effective_model(cfg, &device)?;
            let spec = effective_spec(&m, sim.phonon_levels)?;
            let states = evolve_lindblad(&DensityMatrix::vacuum(sim.phonon_levels), &spec, &grid, &ctrl)
                .map_err(|e| CliError::core("effective-model evolution", e))?;
            (states, Some(m), None)
        }
        ModelKind::Full => {
            let dims = HilbertDims::new(sim.qubit_levels, sim.phonon_levels).map_err(|e| CliError::config("simulation", e))?;
            let m = full_model(cfg, &device, dims)?;
            let spec = full_model_spec(&device, &m.drives, dims).map_err(|e| CliError::config("full model", e))?;
            let rho0 = DensityMatrix::product(
                &DensityMatrix::vacuum(dims.qubit_levels),
                &DensityMatrix::vacuum(dims.phonon_levels),
            )
            .map_err(|e| CliError::core("initial state", e))?;
            let states = evolve_lindblad(&rho0, &spec, &grid, &ctrl).map_err(|e| CliError::core("full-model evolution", e))?;
            (states, None, Some(m))
        }
    };

    let traj = MomentTrajectory::from_states(&grid, &states).map_err(|e| CliError::core("moments", e))?;
    let stats = traj.stats().map_err(|e| CliError::core("quadrature variances", e))?;
    let mut files = Vec::new();
    out.write_with("trajectory.csv", |w| traj.write_csv(w).map_err(core_write("trajectory.csv")))?;
    files.push("trajectory.csv".to_string());

    let axis = symmetric_grid(sim.wigner_extent, sim.wigner_points);
    for &ts in &sim.snapshots_us {
        let k = grid.iter().position(|&t| (t - ts).abs() <= 1e-12 * sim.t_max_us).expect("snapshot on grid");
        let map = wigner(&states[k], &axis, &axis).map_err(|e| CliError::core("Wigner map", e))?;
        let name = format!("wigner_t{}us.csv", time_tag(ts));
        out.write_with(&name, |w| map.write_csv(w).map_err(core_write("Wigner CSV")))?;
        files.push(name);
    }

    let last = states.last().expect("nonempty grid");
    let phonon = match last.dims() {
        Dims::Composite(_) => last.phonon_state().map_err(|e| CliError::core("partial trace", e))?,
        Dims::Single(_) => last.clone(),
    };
    let fin = covariance_from_rho(last).map_err(|e| CliError::core("final state", e))?;
    let (fq, angle) = qfi_max(last).map_err(|e| CliError::core("quantum Fisher information", e))?;
    let final_state = FinalState {
        t: *grid.last().unwrap(),
        squeezing_db: fin.squeezing_db(),
        stats: fin,
        mean_n: *traj.mean_n.last().unwrap(),
        qfi_max: fq,
        qfi_angle: angle,
        phonon_populations: phonon.populations(),
    };
    let kbest = (0..stats.len()).min_by(|&a, &b| stats[a].v_min.total_cmp(&stats[b].v_min)).unwrap();
    let best = BestPoint { t: grid[kbest], v_min: stats[kbest].v_min, squeezing_db: stats[kbest].squeezing_db() };

    let rate_fit = if sim.fit_rate {
        let samples: Vec<(f64, f64, Option<f64>)> = grid.iter().zip(&stats).map(|(&t, s)| (t, s.v_min, None)).collect();
        let fit = extract_squeezing_rate(&samples).map_err(|e| CliError::core("squeezing-rate fit", e))?;
        Some(RateFit {
            epsilon_khz: to_khz(fit.epsilon),
            epsilon_err_khz: to_khz(fit.epsilon_err),
            gamma: fit.gamma,
            gamma_err: fit.gamma_err,
            fit,
        })
    } else {
        None
    };

    files.push("summary.json".to_string());
    let summary = Summary {
        model: sim.model,
        effective,
        full,
        times: grid.len(),
        best,
        final_state,
        rate_fit,
        files,
    };
    out.write_json("summary.json", &Envelope::new("simulate", cfg, summary))?;
    log::info!("simulate: {} time points written", grid.len());
    Ok(())
}
