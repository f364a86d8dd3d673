//! Monte Carlo experiment driver: scenarios, presets, FER tables, CSV output
//! and the oracle validation suite.

mod monte_carlo;
mod scenario;
mod validate;

use std::path::Path;

pub use monte_carlo::{
    clopper_pearson, detector_label, frame_seed, generate_frame, run_monte_carlo, FerPoint, FrameRealization,
};
pub use scenario::{preset_scenario, ReceiverSettings, Scenario, PRESET_INTERLEAVER_SEED, PRESET_NAMES};
pub use validate::{random_instance, validation_suite, CheckResult, InstanceShape};

use crate::error::Result;

pub const CSV_COLUMNS: [&str; 12] = [
    "detector",
    "snr_db",
    "sir_db",
    "iteration",
    "frames_run",
    "frame_errors",
    "fer",
    "fer_ci_low",
    "fer_ci_high",
    "ber",
    "factor_evals",
    "status",
];

/// Writes the table as CSV. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_csv<W: std::io::Write>(table: &[FerPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for p in table {
        w.write_record([
            p.detector.clone(),
            p.snr_db.to_string(),
            p.sir_db.to_string(),
            p.iteration.to_string(),
            p.frames_run.to_string(),
            p.frame_errors.to_string(),
            p.fer.to_string(),
            p.fer_ci_low.to_string(),
            p.fer_ci_high.to_string(),
            p.ber.to_string(),
            p.factor_evals.to_string(),
            p.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(table: &[FerPoint], path: &Path) -> Result<()> {
    write_csv(table, std::fs::File::create(path)?)
}

pub fn read_csv(path: &Path) -> Result<Vec<FerPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<FerPoint>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> FerPoint {
        FerPoint {
            detector: "fg_approx_a3".into(),
            snr_db: 2.5,
            sir_db: -4.0,
            iteration: 7,
            frames_run: 2000,
            frame_errors: 23,
            fer: 23.0 / 2000.0,
            fer_ci_low: 0.1 / 3.0,
            fer_ci_high: std::f64::consts::PI / 100.0,
            ber: 1.0 / 246_000.0,
            factor_evals: 123_456_789_012,
            status: "ok".into(),
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), CSV_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn row_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_csv(&[row()], &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), vec![row()]);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = emit_csv(&[row()], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(matches!(err, crate::Error::Io(_)));
    }
}
