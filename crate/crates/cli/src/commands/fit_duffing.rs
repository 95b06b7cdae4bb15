use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use serde::Serialize;
use sqkerr::duffing::{critical_occupation, fit_spectroscopy, Branch, DuffingFit, DuffingParams, LocalityWeight, SpectroscopyDataset};
use sqkerr::units::{mhz, to_khz};

use crate::config::{BranchChoice, RunConfig};
use crate::error::CliError;
use crate::output::{Envelope, OutDir};

/// Fitted values in linear kHz.
#[derive(Serialize)]
struct DuffingKhz {
    alpha_m: f64,
    kappa: f64,
    omega_a: f64,
    drive: f64,
}

impl From<&DuffingParams> for DuffingKhz {
    fn from(p: &DuffingParams) -> Self {
        Self { alpha_m: to_khz(p.alpha_m), kappa: to_khz(p.kappa), omega_a: to_khz(p.omega_a), drive: to_khz(p.omega_p_amp) }
    }
}

#[derive(Serialize)]
struct FitOutput {
    input: PathBuf,
    points: usize,
    fitted_khz: DuffingKhz,
    errors_khz: DuffingKhz,
    critical_occupation: Option<f64>,
    fit: DuffingFit,
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let d = cfg.duffing.as_ref().ok_or_else(|| CliError::Config("fit-duffing: missing [duffing] section".into()))?;
    let input = d.input.clone().ok_or_else(|| CliError::Config("fit-duffing: no input CSV (use --input)".into()))?;
    let f = File::open(&input).map_err(|e| CliError::Config(format!("cannot read {}: {e}", input.display())))?;
    let data = SpectroscopyDataset::read_csv(BufReader::new(f), mhz(d.delta_a_mhz), mhz(d.coupling_mhz))
        .map_err(|e| CliError::core(&format!("{}", input.display()), e))?;
    let init = DuffingParams {
        alpha_m: mhz(d.alpha_m_mhz),
        kappa: mhz(d.kappa_mhz),
        omega_a: mhz(d.omega_a_mhz),
        omega_p_amp: mhz(d.drive_mhz),
    };
    init.validate().map_err(|e| CliError::config("duffing", e))?;
    let weights = LocalityWeight { center: None, width_kappa: d.locality_width_kappa, floor: d.locality_floor };
    let branch = match d.branch {
        BranchChoice::Lowest => Branch::Lowest,
        BranchChoice::Highest => Branch::Highest,
    };
    let fit = fit_spectroscopy(&data, &init, &weights, branch).map_err(|e| CliError::core("Duffing fit", e))?;
    let result = FitOutput {
        input,
        points: data.detunings.len(),
        fitted_khz: (&fit.params).into(),
        errors_khz: (&fit.errors).into(),
        critical_occupation: critical_occupation(fit.params.kappa, fit.params.alpha_m).ok(),
        fit,
    };
    out.write_json("duffing_fit.json", &Envelope::new("fit-duffing", cfg, result))?;
    Ok(())
}
