//! CSV and JSON persistence. Reals are written with 17 significant digits,
//! records end in LF.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::scan::{ScanRow, WashoutTable};
use super::stats::TailEstimate;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Round-trip exact decimal with 17 significant digits.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub const SCAN_HEADER: [&str; 7] = ["inv_h", "delta", "trial", "seed", "count_in_disk", "min_abs_eig", "wall_ms"];

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SCAN_HEADER)?;
    for r in rows {
        out.write_record([
            format_real(r.inv_h),
            format_real(r.delta),
            r.trial.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.count_in_disk.map(|c| c.to_string()).unwrap_or_default(),
            r.min_abs_eig.map(format_real).unwrap_or_default(),
            format_real(r.wall_ms),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_washout_csv<W: Write>(table: &WashoutTable, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["delta", "seed", "rank", "re", "im", "abs"])?;
    for row in &table.rows {
        for (rank, l) in row.eigenvalues.iter().enumerate() {
            out.write_record([
                format_real(row.delta),
                row.seed.map(|s| s.to_string()).unwrap_or_default(),
                rank.to_string(),
                format_real(l.re),
                format_real(l.im),
                format_real(l.norm()),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_tail_csv<W: Write>(est: &TailEstimate, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["threshold", "hits", "n_trials", "probability", "ci_low", "ci_high"])?;
    for i in 0..est.thresholds.len() {
        out.write_record([
            format_real(est.thresholds[i]),
            est.hits[i].to_string(),
            est.n_trials.to_string(),
            format_real(est.empirical_probability[i]),
            format_real(est.wilson_ci[i].0),
            format_real(est.wilson_ci[i].1),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip() {
        for x in [0.586, 1.0 / 3.0, 2.5, 1e-300, -7.25e12, 0.0] {
            let s = format_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
        assert_eq!(format_real(f64::NAN), "NaN");
    }

    #[test]
    fn scan_csv_layout() {
        let rows = vec![
            ScanRow {
                inv_h: 0.4,
                delta: 0.0,
                trial: 0,
                seed: None,
                count_in_disk: Some(14),
                min_abs_eig: Some(0.0),
                wall_ms: 0.0,
                error: None,
            },
            ScanRow {
                inv_h: 0.42,
                delta: 0.1,
                trial: 1,
                seed: Some(42),
                count_in_disk: None,
                min_abs_eig: None,
                wall_ms: 1.5,
                error: Some("svd failed".into()),
            },
        ];
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "inv_h,delta,trial,seed,count_in_disk,min_abs_eig,wall_ms");
        assert_eq!(
            lines[1],
            "4.0000000000000002e-1,0.0000000000000000e0,0,,14,0.0000000000000000e0,0.0000000000000000e0"
        );
        assert_eq!(lines[2].split(',').count(), 7);
        assert!(text.ends_with('\n'));
    }
}
