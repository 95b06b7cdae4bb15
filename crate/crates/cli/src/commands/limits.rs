use serde::Serialize;
use sqkerr::limits::{
    max_squeezing_decoherence, max_squeezing_kerr, measurement_time_loss, DecoherenceLimit, DecoherenceOptions,
    KerrLimit, KerrSweepOptions, MeasurementLoss,
};
use sqkerr::units::{mhz, to_mhz};

use crate::config::{rate_from_time, RunConfig};
use crate::error::CliError;
use crate::output::{Envelope, OutDir};

#[derive(Serialize)]
struct DecoherenceRow {
    epsilon_mhz: f64,
    delta_a_mhz: f64,
    gamma: f64,
    gamma_phi: f64,
    t_opt_us: f64,
    v_min: f64,
    db: f64,
}

impl DecoherenceRow {
    fn new(epsilon_mhz: f64, l: DecoherenceLimit) -> Self {
        Self {
            epsilon_mhz,
            delta_a_mhz: to_mhz(l.delta_a),
            gamma: l.gamma,
            gamma_phi: l.gamma_phi,
            t_opt_us: l.t_opt,
            v_min: l.v_min,
            db: l.db,
        }
    }
}

#[derive(Serialize, Default)]
struct Limits {
    decoherence: Vec<DecoherenceRow>,
    kerr: Vec<KerrLimit>,
    measurement: Vec<MeasurementLoss>,
    files: Vec<String>,
}

fn write_csv<T: Serialize>(out: &OutDir, name: &str, rows: &[T]) -> Result<(), CliError> {
    out.write_with(name, |w| {
        let io = |e: csv::Error| CliError::Io(format!("{name}: {e}"));
        let mut csv = csv::Writer::from_writer(w);
        for r in rows {
            csv.serialize(r).map_err(io)?;
        }
        csv.flush().map_err(|e| CliError::Io(format!("{name}: {e}")))
    })?;
    Ok(())
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let l = cfg.limits.as_ref().ok_or_else(|| CliError::Config("limits: missing [limits] section".into()))?;
    let device = cfg.device.params()?;
    let mut res = Limits::default();

    if !l.epsilon_mhz.is_empty() && !l.delta_a_mhz.is_empty() {
        let grid: Vec<f64> = l.delta_a_mhz.iter().map(|&d| mhz(d)).collect();
        let opts = DecoherenceOptions { purcell: l.purcell, inherited_dephasing: l.inherited_dephasing };
        for &e in &l.epsilon_mhz {
            let rows = max_squeezing_decoherence(mhz(e), &grid, &device, l.p_e, &opts)
                .map_err(|err| CliError::core("decoherence limit", err))?;
            res.decoherence.extend(rows.into_iter().map(|limit| DecoherenceRow::new(e, limit)));
        }
        write_csv(out, "decoherence_limit.csv", &res.decoherence)?;
        res.files.push("decoherence_limit.csv".into());
    }
    if !l.eps_over_k.is_empty() && !l.gamma_over_k.is_empty() {
        let opts = KerrSweepOptions { dim: l.kerr_dim, ..KerrSweepOptions::default() };
        res.kerr = max_squeezing_kerr(&l.eps_over_k, &l.gamma_over_k, &opts).map_err(|e| CliError::core("Kerr limit", e))?;
        write_csv(out, "kerr_limit.csv", &res.kerr)?;
        res.files.push("kerr_limit.csv".into());
    }
    if !l.t_meas_us.is_empty() {
        let gamma = rate_from_time(l.decay_time_us);
        res.measurement = l
            .t_meas_us
            .iter()
            .map(|&t| measurement_time_loss(l.v0, gamma, t))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::core("measurement loss", e))?;
        write_csv(out, "measurement_loss.csv", &res.measurement)?;
        res.files.push("measurement_loss.csv".into());
    }
    if res.files.is_empty() {
        return Err(CliError::Config(
            "limits: nothing to compute; set epsilon_mhz and delta_a_mhz, eps_over_k and gamma_over_k, or t_meas_us".into(),
        ));
    }
    log::info!(
        "limits: {} decoherence, {} Kerr, {} measurement rows",
        res.decoherence.len(),
        res.kerr.len(),
        res.measurement.len()
    );
    res.files.push("limits.json".into());
    out.write_json("limits.json", &Envelope::new("limits", cfg, res))?;
    Ok(())
}
