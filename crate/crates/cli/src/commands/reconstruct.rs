use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use sqkerr::dynamics::QuadratureStats;
use sqkerr::tomography::{
    covariance_from_rho, mle_reconstruct, mle_with_truncation_sweep, qfi_max, MleOptions, ParityMeasurement,
    ReconstructionResult, WignerMap,
};
use sqkerr::C64;

use crate::config::{RunConfig, TomographyConfig};
use crate::error::CliError;
use crate::output::{Envelope, OutDir};

#[derive(Serialize)]
struct Reconstruction {
    input: PathBuf,
    settings: usize,
    parity_noise: f64,
    seed: u64,
    stats: QuadratureStats,
    squeezing_db: f64,
    populations: Vec<f64>,
    odd_population: f64,
    qfi_max: f64,
    qfi_angle: f64,
    purity: f64,
    mle: ReconstructionResult,
}

/// Displaced parities ⟨Π(α)⟩ = πW(x, p) with α = (x + ip)/√2, optionally
/// with seeded Gaussian scatter.
pub fn parity_data(map: &WignerMap, noise: f64, seed: u64) -> Result<Vec<ParityMeasurement>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = if noise > 0.0 {
        Some(Normal::new(0.0, noise).map_err(|e| CliError::Config(format!("tomography: parity_noise: {e}")))?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(map.xs.len() * map.ps.len());
    for (i, &x) in map.xs.iter().enumerate() {
        for (j, &p) in map.ps.iter().enumerate() {
            let mut parity = PI * map.values[[i, j]];
            if let Some(d) = &dist {
                parity += d.sample(&mut rng);
            }
            out.push(ParityMeasurement { alpha: C64::new(x, p) * FRAC_1_SQRT_2, parity: parity.clamp(-1.0, 1.0) });
        }
    }
    Ok(out)
}

fn read_map(path: &Path) -> Result<WignerMap, CliError> {
    let f = File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    WignerMap::read_csv(BufReader::new(f)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn run(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let tcfg = cfg.tomography.clone().unwrap_or_default();
    let TomographyConfig { input, truncation, truncation_spread, max_iter, tol, parity_noise } = tcfg;
    let input = input.ok_or_else(|| CliError::Config("reconstruct: no input Wigner CSV (use --input)".into()))?;
    if !(parity_noise >= 0.0) {
        return Err(CliError::Config("tomography: parity_noise must be non-negative".into()));
    }
    let map = read_map(&input)?;
    let data = parity_data(&map, parity_noise, cfg.seed)?;
    let opts = MleOptions { max_iter, tol };
    let mle = if truncation_spread > 0 {
        mle_with_truncation_sweep(&data, truncation, truncation_spread, &opts)
    } else {
        mle_reconstruct(&data, truncation, &opts)
    }
    .map_err(|e| CliError::core("maximum-likelihood reconstruction", e))?;
    if !mle.converged {
        log::warn!("MLE stopped after {} iterations without meeting the tolerance", mle.iterations);
    }
    let stats = covariance_from_rho(&mle.rho).map_err(|e| CliError::core("reconstructed state", e))?;
    let (fq, angle) = qfi_max(&mle.rho).map_err(|e| CliError::core("quantum Fisher information", e))?;
    let populations = mle.rho.populations();
    let odd_population = populations.iter().skip(1).step_by(2).sum();
    let result = Reconstruction {
        input,
        settings: data.len(),
        parity_noise,
        seed: cfg.seed,
        squeezing_db: stats.squeezing_db(),
        stats,
        odd_population,
        qfi_max: fq,
        qfi_angle: angle,
        purity: mle.rho.purity(),
        populations,
        mle,
    };
    out.write_json("reconstruction.json", &Envelope::new("reconstruct", cfg, result))?;
    Ok(())
}
