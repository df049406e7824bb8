//! CSV time series and the JSON run summary.
//!
//! Numbers are written as `{:.16e}` (17 significant digits, round-trip
//! exact); absent optional values are empty cells. Lines end in `\n`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{MudpError, Result};

/// Formats records as CSV with the given column order.
pub fn format_csv(records: &[DiagnosticsRecord], fields: &[String]) -> Result<String> {
    if records.is_empty() {
        return Err(MudpError::InvalidArgument("no records to write".into()));
    }
    if let Some(bad) = fields.iter().find(|f| !DiagnosticsRecord::FIELDS.contains(&f.as_str())) {
        return Err(MudpError::InvalidArgument(format!("unknown field `{bad}`")));
    }
    let mut out = fields.join(",");
    out.push('\n');
    for r in records {
        for (k, f) in fields.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            if let Some(v) = r.field(f).flatten() {
                write!(out, "{v:.16e}").expect("writing to a String");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_csv(records: &[DiagnosticsRecord], fields: &[String], path: impl AsRef<Path>) -> Result<()> {
    let text = format_csv(records, fields)?;
    write_file(path.as_ref(), text.as_bytes())
}

/// Records whose time is a multiple of `interval`.
pub fn thin_records(records: &[DiagnosticsRecord], interval: f64) -> Vec<DiagnosticsRecord> {
    records
        .iter()
        .filter(|r| {
            let k = (r.t / interval).round();
            (r.t - k * interval).abs() <= 1e-9 * interval
        })
        .cloned()
        .collect()
}

pub fn emit_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path.as_ref(), text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mean_u: 0.1,
            mean_residual: 0.0,
            min_slope: -1.0 / 3.0,
            argmin_x: 0.5,
            max_abs_slope: 1.0,
            sup_abs_u: 2.0,
            y_l1: 1.0,
            y_min: -1.0,
            y_max: 1.0,
            h1_y_sq: 3.0,
            h1_rhs: 0.0,
            h1_rhs_scale: 0.0,
            h1_balance_residual: None,
            transport_drift: Some(1e-9),
        }
    }

    #[test]
    fn one_record_gives_two_lines() {
        let text = format_csv(&[rec(0.0)], &["t".into(), "min_slope".into()]).unwrap();
        assert_eq!(text, "t,min_slope\n0.0000000000000000e0,-3.3333333333333331e-1\n");
    }

    #[test]
    fn column_order_follows_config() {
        let fields: Vec<String> = vec!["transport_drift".into(), "t".into(), "h1_balance_residual".into()];
        let text = format_csv(&[rec(0.25)], &fields).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "transport_drift,t,h1_balance_residual");
        assert_eq!(lines[1], "1.0000000000000001e-9,2.5000000000000000e-1,");
    }

    #[test]
    fn values_round_trip() {
        let r = rec(0.1 + 0.2);
        let text = format_csv(&[r.clone()], &["t".into()]).unwrap();
        let v: f64 = text.lines().nth(1).unwrap().parse().unwrap();
        assert_eq!(v.to_bits(), r.t.to_bits());
    }

    #[test]
    fn rejects_empty_and_unknown() {
        assert!(format_csv(&[], &["t".into()]).is_err());
        assert!(format_csv(&[rec(0.0)], &["nope".into()]).is_err());
    }

    #[test]
    fn thinning_keeps_multiples() {
        let recs: Vec<_> = (0..=10).map(|k| rec(k as f64 * 0.01)).collect();
        let kept = thin_records(&recs, 0.05);
        let ts: Vec<f64> = kept.iter().map(|r| r.t).collect();
        assert_eq!(ts.len(), 3);
        assert!((ts[2] - 0.1).abs() < 1e-15);
    }
}
