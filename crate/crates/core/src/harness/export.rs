//! Result files: the BER table (CSV), a JSON metadata sidecar with the full
//! configuration, and a long-format per-iteration diagnostics CSV.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Scenario, SimConfig};
use super::sweep::{BerRecord, IterationRecord, SweepResult};
use crate::error::{OtfsError, Result};

pub const BER_HEADER: &str = "method,snr_db,B,sic_iters,bits,bit_errors,ber,frames,seed";

pub const BER_FILE: &str = "ber.csv";
pub const META_FILE: &str = "ber.meta.json";
pub const DIAGNOSTICS_FILE: &str = "iterations.csv";

fn csv_error(e: csv::Error) -> OtfsError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => OtfsError::Io(io),
        other => OtfsError::Parse(format!("{other:?}")),
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| OtfsError::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| OtfsError::Parse(e.to_string()))
}

/// The BER table as CSV text, header first.
pub fn ber_csv_string(records: &[BerRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(OtfsError::Config("no records to export".into()));
    }
    to_csv(records)
}

pub fn parse_ber_csv(text: &str) -> Result<Vec<BerRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",");
    if header != BER_HEADER {
        return Err(OtfsError::Parse(format!("unexpected BER header `{header}`")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// Writes `records` to `path`. Nothing is written for an empty list.
pub fn export_results(records: &[BerRecord], path: &Path) -> Result<()> {
    let text = ber_csv_string(records)?;
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Metadata<'a> {
    generator: String,
    snr_definition: &'static str,
    /// Add to the SNR in dB to get Eb/N0 in dB.
    ebn0_minus_snr_db: f64,
    info_bits_per_frame: usize,
    m_cp: usize,
    max_doppler_hz: f64,
    auto_bandwidth: usize,
    config: &'a SimConfig,
}

fn metadata_json(cfg: &SimConfig, scenario: &Scenario) -> Result<String> {
    let g = &scenario.geometry;
    let info = scenario.code.info_len_for(g.dd_len() * scenario.constellation.bits_per_symbol())?;
    let meta = Metadata {
        generator: format!("otfs-sim {}", env!("CARGO_PKG_VERSION")),
        snr_definition: "SNR = E|x|^2 / sigma^2 = 1 / sigma^2 per delay-Doppler symbol at the demodulator input",
        ebn0_minus_snr_db: -10.0 * (info as f64 / g.dd_len() as f64).log10(),
        info_bits_per_frame: info,
        m_cp: g.m_cp,
        max_doppler_hz: scenario.f_dmax_hz,
        auto_bandwidth: scenario.auto_bandwidth,
        config: cfg,
    };
    serde_json::to_string_pretty(&meta).map_err(|e| OtfsError::Parse(e.to_string()))
}

/// Creates `dir` if needed and writes the BER table, metadata and
/// diagnostics. Returns the paths written.
pub fn write_outputs(dir: &Path, result: &SweepResult, cfg: &SimConfig, scenario: &Scenario) -> Result<Vec<PathBuf>> {
    let ber = ber_csv_string(&result.records)?;
    let meta = metadata_json(cfg, scenario)?;
    fs::create_dir_all(dir)?;
    let mut written = vec![dir.join(BER_FILE), dir.join(META_FILE)];
    fs::write(&written[0], ber)?;
    fs::write(&written[1], meta + "\n")?;
    if !result.diagnostics.is_empty() {
        let path = dir.join(DIAGNOSTICS_FILE);
        fs::write(&path, to_csv::<IterationRecord>(&result.diagnostics)?)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(method: &str, snr: f64, b: Option<usize>) -> BerRecord {
        BerRecord {
            method: method.into(),
            snr_db: snr,
            bandwidth: b,
            sic_iterations: b.map(|_| 2),
            bits: 204_400,
            bit_errors: 37,
            ber: 37.0 / 204_400.0,
            frames: 200,
            seed: 42,
        }
    }

    #[test]
    fn header_and_rows() {
        let text = ber_csv_string(&[record("tte_sic", 6.5, Some(2)), record("mmse", 6.5, None)]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], BER_HEADER);
        assert!(lines[2].starts_with("mmse,6.5,,,204400,37,"));
    }

    #[test]
    fn empty_list_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(export_results(&[], &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn unwritable_path_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("out.csv");
        assert!(matches!(export_results(&[record("a", 0.0, None)], &path), Err(OtfsError::Io(_))));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_ber_csv("a,b\n1,2\n").is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip(snr in -20.0f64..40.0, errors in 0u64..1000, bits in 1u64..10_000_000, b in proptest::option::of(0usize..8)) {
            let mut r = record("x", snr, b);
            r.bit_errors = errors.min(bits);
            r.bits = bits;
            r.ber = r.bit_errors as f64 / bits as f64;
            let records = vec![r.clone(), record("y", -snr, None)];
            proptest::prop_assert_eq!(parse_ber_csv(&ber_csv_string(&records).unwrap()).unwrap(), records);
        }
    }
}
