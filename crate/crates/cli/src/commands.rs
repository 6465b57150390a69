use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use rdstab_core::delay::{DelayField, DelayKind};
use rdstab_core::design::{SmallGainCertificate, SIGMA_FRACTION};
use rdstab_core::sim::{run_with_basis, SimulationRun, FIT_WINDOW};
use rdstab_core::spectral::SpectralBasis;
use serde::Serialize;
use serde_json::json;

use crate::config::AppConfig;
use crate::output::{self, RunManifest, SweepRow};

/// Default sweep grid `0, 0.05, …, 0.6`.
pub fn default_deltas() -> Vec<f64> {
    (0..=12).map(|i| i as f64 / 20.0).collect()
}

fn finish(
    out_dir: &Path,
    mut manifest: RunManifest,
    files: &[&str],
) -> anyhow::Result<RunManifest> {
    manifest.outputs = files.iter().map(|f| out_dir.join(f)).collect();
    let path = out_dir.join(format!("{}.manifest.json", manifest.command));
    manifest.outputs.push(path.clone());
    output::write_json(&path, &manifest)?;
    Ok(manifest)
}

#[derive(Serialize)]
struct Spectrum<'a> {
    eigenvalues: &'a [f64],
    n_modes: usize,
    grid_nodes: usize,
    tol: f64,
    max_gram_error: f64,
    oscillation_indices: Vec<usize>,
}

fn spectrum(basis: &SpectralBasis, tol: f64) -> Spectrum<'_> {
    let gram = basis.gram(basis.len());
    let max_gram_error = gram
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, v)| (v - f64::from(u8::from(i == j))).abs())
        })
        .fold(0.0, f64::max);
    Spectrum {
        eigenvalues: basis.eigenvalues(),
        n_modes: basis.len(),
        grid_nodes: basis.grid().len(),
        tol,
        max_gram_error,
        oscillation_indices: (0..basis.len()).map(|n| basis.sign_changes(n)).collect(),
    }
}

pub fn eig(config: &AppConfig, out_dir: &Path) -> anyhow::Result<RunManifest> {
    let mut manifest = RunManifest::new("eig", config)?;
    let basis = manifest.time("eigensystem", || config.basis())?;
    output::write_basis(&out_dir.join("basis.csv"), &basis)?;
    output::write_json(
        &out_dir.join("spectrum.json"),
        &spectrum(&basis, config.basis.tol),
    )?;
    finish(out_dir, manifest, &["basis.csv", "spectrum.json"])
}

fn certificate(config: &AppConfig, basis: &SpectralBasis) -> anyhow::Result<SmallGainCertificate> {
    let d = config.design_section()?;
    let design = config.controller(basis)?;
    Ok(SmallGainCertificate::certify(
        &design,
        d.sigma_search,
        d.envelope_samples,
    )?)
}

pub fn certify(config: &AppConfig, out_dir: &Path) -> anyhow::Result<RunManifest> {
    let mut manifest = RunManifest::new("certify", config)?;
    let basis = manifest.time("eigensystem", || config.basis())?;
    let cert = manifest.time("certificate", || certificate(config, &basis))?;
    output::write_json(&out_dir.join("certificate.json"), &cert)?;
    finish(out_dir, manifest, &["certificate.json"])
}

fn metadata(
    config: &AppConfig,
    run: &SimulationRun,
    cert: Option<&SmallGainCertificate>,
) -> serde_json::Value {
    json!({
        "config": config,
        "kappa_est": run.kappa_est,
        "decaying": run.metadata.decaying,
        "diverged_at": run.metadata.diverged_at,
        "rule": run.metadata.rule,
        "open_loop": run.metadata.open_loop,
        "tolerances": {
            "eigen_tol": config.basis.tol,
            "grid_nodes": run.metadata.grid_nodes,
            "dt": run.metadata.dt,
            "fit_window": FIT_WINDOW,
            "sigma_fraction": SIGMA_FRACTION,
            "divergence_threshold": config.sim.divergence_threshold,
        },
        "certificate": cert.map(|c| json!({
            "file": "certificate.json",
            "delta_max": c.delta_max,
            "M": c.m,
            "sigma": c.sigma,
            "satisfied": c.satisfied,
            "kappa_bound": c.kappa_bound,
            "covered": run.metadata.certificate_covered,
        })),
        "deviation": run.metadata.deviation,
        "history_window": run.metadata.history_window,
        "n_sim_modes": run.metadata.n_sim_modes,
        "N": run.metadata.n,
        "output_every": run.metadata.output_every,
        "t_end": run.metadata.t_end,
    })
}

pub fn simulate(config: &AppConfig, out_dir: &Path) -> anyhow::Result<RunManifest> {
    let mut manifest = RunManifest::new("simulate", config)?;
    let basis = manifest.time("eigensystem", || config.basis())?;
    let design = config.controller(&basis)?;
    let delay = config.delay_field()?;
    let cert = if config.sim.attach_certificate {
        Some(manifest.time("certificate", || certificate(config, &basis))?)
    } else {
        None
    };
    let sim = config.simulation(design, delay.clone(), cert.as_ref().map(|c| c.delta_max));
    let run = manifest.time("simulation", || run_with_basis(&sim, &basis))?;

    let mut files = vec!["run.csv", "metadata.json", "basis.csv", "delay.csv"];
    output::write_run(&out_dir.join("run.csv"), &run)?;
    output::write_json(
        &out_dir.join("metadata.json"),
        &metadata(config, &run, cert.as_ref()),
    )?;
    output::write_basis(
        &out_dir.join("basis.csv"),
        &basis.truncated(config.basis.n_modes),
    )?;
    let n_t = (config.sim.t_end * 10.0).round() as usize + 1;
    output::write_delay(
        &out_dir.join("delay.csv"),
        &delay,
        config.sim.t_end,
        n_t.max(2),
        51,
    )?;
    if let Some(c) = &cert {
        output::write_json(&out_dir.join("certificate.json"), c)?;
        files.push("certificate.json");
    }
    finish(out_dir, manifest, &files)
}

/// One closed-loop run per δ with the reference delay family scaled to
/// amplitude δ. A row counts as diverged when the run blew up or did not
/// decay over the fit window.
pub fn sweep(
    config: &AppConfig,
    out_dir: &Path,
    deltas: Option<Vec<f64>>,
) -> anyhow::Result<RunManifest> {
    let mut manifest = RunManifest::new("sweep", config)?;
    let mut deltas = deltas
        .or_else(|| config.sweep.as_ref().map(|s| s.deltas.clone()))
        .unwrap_or_else(default_deltas);
    deltas.sort_by(f64::total_cmp);
    let basis = manifest.time("eigensystem", || config.basis())?;
    let design = config.controller(&basis)?;
    let d0 = design.d0;
    let rows = manifest.time("simulations", || {
        deltas
            .par_iter()
            .map(|&delta| {
                let delay = DelayField {
                    kind: DelayKind::Reference { amplitude: delta },
                    d0,
                    delta_claimed: delta,
                };
                let sim = config.simulation(design.clone(), delay, None);
                let run = run_with_basis(&sim, &basis)
                    .with_context(|| format!("sweep row δ = {delta}"))?;
                Ok(SweepRow {
                    delta,
                    kappa_est: run.kappa_est,
                    diverged: run.diverged() || !run.kappa_est.is_some_and(|k| k > 0.0),
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    output::write_sweep(&out_dir.join("sweep.csv"), &rows)?;
    finish(out_dir, manifest, &["sweep.csv"])
}
