//! Artifact writers. Floats are printed with 17 significant digits so that
//! reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rdstab_core::delay::DelayField;
use rdstab_core::sim::SimulationRun;
use rdstab_core::spectral::SpectralBasis;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Columns `xi, e_1, …, e_M`.
pub fn write_basis(path: &Path, basis: &SpectralBasis) -> anyhow::Result<()> {
    let mut header = vec!["xi".to_string()];
    header.extend((1..=basis.len()).map(|n| format!("e_{n}")));
    let rows = basis.grid().nodes().iter().enumerate().map(|(i, &x)| {
        let mut row = vec![fmt(x)];
        row.extend((0..basis.len()).map(|n| fmt(basis.eigenfunction(n)[i])));
        row
    });
    write_rows(path, &header, rows)
}

/// Columns `t, x_1..x_n, w_1..w_N, normX, normU, delta_norm`.
pub fn write_run(path: &Path, run: &SimulationRun) -> anyhow::Result<()> {
    let n_sim = run.metadata.n_sim_modes;
    let n = run.metadata.n;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n_sim).map(|k| format!("x_{k}")));
    header.extend((1..=n).map(|k| format!("w_{k}")));
    header.extend(["normX", "normU", "delta_norm"].map(String::from));
    let rows = (0..run.times.len()).map(|i| {
        let mut row = vec![fmt(run.times[i])];
        row.extend(run.x[i].iter().map(|v| fmt(*v)));
        row.extend(run.w[i].iter().map(|v| fmt(*v)));
        row.extend([run.norm_x[i], run.norm_u[i], run.delta_norm[i]].map(fmt));
        row
    });
    write_rows(path, &header, rows)
}

/// Long-format `t, xi, D` samples of the delay field.
pub fn write_delay(
    path: &Path,
    delay: &DelayField,
    t_end: f64,
    n_t: usize,
    n_xi: usize,
) -> anyhow::Result<()> {
    let header = ["t", "xi", "D"].map(String::from);
    let mut rows = Vec::with_capacity(n_t * n_xi);
    for i in 0..n_t {
        let t = t_end * i as f64 / (n_t - 1) as f64;
        for j in 0..n_xi {
            let xi = j as f64 / (n_xi - 1) as f64;
            rows.push(vec![fmt(t), fmt(xi), fmt(delay.evaluate(t, xi)?)]);
        }
    }
    write_rows(path, &header, rows.into_iter())
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SweepRow {
    pub delta: f64,
    pub kappa_est: Option<f64>,
    pub diverged: bool,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let header = ["delta", "kappa_est", "diverged"].map(String::from);
    let rows = rows.iter().map(|r| {
        vec![
            fmt(r.delta),
            r.kappa_est.map_or_else(|| "nan".to_string(), fmt),
            r.diverged.to_string(),
        ]
    });
    write_rows(path, &header, rows)
}

/// Record of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration as JSON.
    pub config_hash: String,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    /// Wall-clock seconds per stage.
    pub timing: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> anyhow::Result<Self> {
        let canonical = serde_json::to_vec(config)?;
        Ok(Self {
            command: command.to_string(),
            config_hash: hex::encode(Sha256::digest(&canonical)),
            outputs: Vec::new(),
            version: format!("rdstab {}", env!("CARGO_PKG_VERSION")),
            timing: BTreeMap::new(),
        })
    }

    /// Runs `f`, recording its duration under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.timing
            .insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }
}
