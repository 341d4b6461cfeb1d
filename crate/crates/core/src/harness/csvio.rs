//! CSV and manifest emission. All floating-point text uses 17 significant
//! digits so files are byte-reproducible and round-trip exactly.

use super::complexity::OpCount;
use super::config::EstimatorKind;
use super::sweep::ResultRow;
use crate::channel::CorrelationProfile;
use std::io::Write;
use std::path::Path;

/// 17-significant-digit scientific notation; parses back to the same f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub const RESULTS_SCHEMA: &str = "results-v1";
pub const PSI_SCHEMA: &str = "psi-v1";
pub const OPCOUNTS_SCHEMA: &str = "opcounts-v1";

/// `results.csv`: one row per (estimator, SNR) point.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# schema: {RESULTS_SCHEMA}")?;
    writeln!(f, "estimator,snr_db,fd,modulation,i,ber,nmse,throughput,n_frames,seed")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            r.estimator,
            fmt_f64(r.snr_db),
            fmt_f64(r.fd),
            r.modulation,
            r.n_data_symbols,
            fmt_f64(r.ber),
            fmt_f64(r.nmse),
            fmt_f64(r.throughput),
            r.n_frames,
            r.seed
        )?;
    }
    Ok(())
}

/// `psi.csv`: the frame correlation profile, one row per symbol index.
pub fn write_psi_csv(path: &Path, profile: &CorrelationProfile) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# schema: {PSI_SCHEMA}")?;
    writeln!(f, "i,psi,fd,n_realizations")?;
    for (idx, &psi) in profile.psi.iter().enumerate() {
        writeln!(f, "{},{},{},{}", idx + 2, fmt_f64(psi), fmt_f64(profile.fd), profile.n_realizations)?;
    }
    Ok(())
}

/// `opcounts.csv`: per-stage breakdown plus the total per estimator/mode.
pub fn write_opcounts_csv(
    path: &Path,
    entries: &[(EstimatorKind, bool, OpCount)],
) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# schema: {OPCOUNTS_SCHEMA}")?;
    writeln!(f, "estimator,mode,stage,mults,adds")?;
    for (est, paper_mode, oc) in entries {
        let mode = if *paper_mode { "paper" } else { "full" };
        for s in &oc.breakdown {
            writeln!(f, "{est},{mode},{},{},{}", s.stage, s.mults, s.adds)?;
        }
        writeln!(f, "{est},{mode},total,{},{}", oc.mults, oc.adds)?;
    }
    Ok(())
}

/// `manifest.txt`: every config knob of a run as sorted `key=value` lines.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> std::io::Result<()> {
    let mut sorted: Vec<&(String, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut f = std::fs::File::create(path)?;
    for (k, v) in sorted {
        writeln!(f, "{k}={v}")?;
    }
    Ok(())
}
