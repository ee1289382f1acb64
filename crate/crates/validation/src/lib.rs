//! Helpers for checking solver output against reproduction targets: a
//! pass/fail report, a `series.csv` reader and convergence-order arithmetic.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

/// One accepted step as written to `series.csv`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
pub struct SeriesRecord {
    pub t: f64,
    pub dt: f64,
    pub cells: usize,
    pub eta: f64,
    pub charge: f64,
    pub energy: f64,
    pub l2_error: Option<f64>,
    pub refined: u8,
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRecord>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

/// Rows whose `eta` lies outside the open band `(lo, hi)` on a step where no
/// refinement fired.
pub fn eta_band_violations(rows: &[SeriesRecord], lo: f64, hi: f64) -> Vec<&SeriesRecord> {
    rows.iter()
        .filter(|r| r.refined == 0 && !(r.eta > lo && r.eta < hi))
        .collect()
}

/// Observed orders `log2(e_k / e_{k+1})` for errors on successively halved meshes.
pub fn halving_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

pub fn ratios(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[0] / w[1]).collect()
}

pub fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

/// `x` within `frac` (e.g. 0.25) of `target`.
pub fn near(x: f64, target: f64, frac: f64) -> bool {
    (x - target).abs() <= frac * target.abs()
}

#[derive(Clone, Debug)]
pub struct Check {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.label, self.detail)
    }
}

/// Ordered collection of checks, printed one line each.
#[derive(Debug, Default)]
pub struct Report {
    checks: Vec<Check>,
}

impl Report {
    pub fn record(&mut self, label: impl Into<String>, pass: bool, detail: impl Into<String>) {
        let check = Check {
            label: label.into(),
            pass,
            detail: detail.into(),
        };
        println!("{check}");
        self.checks.push(check);
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn reads_series_with_and_without_errors() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "t,dt,cells,eta,charge,energy,l2_error,refined").unwrap();
        writeln!(file, "0,0,80,1.5e-2,4.0,-0.33,1e-14,0").unwrap();
        writeln!(file, "0.1,0.1,97,2.2e-2,4.0,-0.33,,1").unwrap();
        let rows = read_series(file.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].l2_error, Some(1e-14));
        assert_eq!(rows[1].l2_error, None);
        assert_eq!(rows[1].cells, 97);
    }

    fn row(eta: f64, refined: u8) -> SeriesRecord {
        SeriesRecord {
            t: 0.0,
            dt: 0.0,
            cells: 10,
            eta,
            charge: 0.0,
            energy: 0.0,
            l2_error: None,
            refined,
        }
    }

    #[test]
    fn band_violations_skip_refined_steps() {
        let rows = [row(0.5, 0), row(2.0, 1), row(2.0, 0), row(0.1, 0)];
        let bad = eta_band_violations(&rows, 0.1, 1.0);
        assert_eq!(bad.len(), 2);
        assert_eq!(bad[0].eta, 2.0);
        assert_eq!(bad[1].eta, 0.1);
    }

    #[test]
    fn orders_of_exact_power_law() {
        let errors: Vec<f64> = (0..4).map(|k| 3.0 * 0.5f64.powi(2 * k)).collect();
        for p in halving_orders(&errors) {
            assert!((p - 2.0).abs() < 1e-12);
        }
        assert_eq!(ratios(&[8.0, 2.0, 1.0]), vec![4.0, 2.0]);
    }

    #[test]
    fn tolerance_helpers() {
        assert!(within(1.7, 1.7, 2.6));
        assert!(!within(2.61, 1.7, 2.6));
        assert!(near(240.0, 197.0, 0.25));
        assert!(!near(250.0, 197.0, 0.25));
    }
}
