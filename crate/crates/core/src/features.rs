//! Vertex features from close prices: close-to-close returns, hard-clip
//! winsorization and per-day cross-sectional z-scoring.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{write_file, PricePanel};
use crate::tensor::Matrix;

pub const DEFAULT_WINSOR_LO: f64 = -0.1;
pub const DEFAULT_WINSOR_HI: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureStage {
    RawPvclcl,
    Winsorized,
    Normalized,
}

/// N × D vertex features; rows follow `tickers`, columns are days.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub tickers: Vec<String>,
    pub data: Matrix,
    pub stage: FeatureStage,
}

impl FeatureMatrix {
    pub fn days(&self) -> usize {
        self.data.cols()
    }

    /// Heatmap-ready CSV: header `ticker,d1..dD`, one row per ticker.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("ticker");
        for j in 1..=self.days() {
            out.push_str(&format!(",d{j}"));
        }
        out.push('\n');
        for (i, t) in self.tickers.iter().enumerate() {
            out.push_str(t);
            for v in self.data.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        write_file(path, out.as_bytes())
    }
}

/// Previous-close-to-close linear returns, one column per consecutive pair
/// of dates.
pub fn pvclcl(panel: &PricePanel) -> Result<FeatureMatrix> {
    if !panel.is_complete() {
        return Err(Error::Domain(format!(
            "price panel has {} missing cells; impute first",
            panel.missing_count()
        )));
    }
    let dates = panel.dates().len();
    if dates < 2 {
        return Err(Error::Domain(format!("need at least 2 dates, got {dates}")));
    }
    let n = panel.tickers().len();
    let mut data = Matrix::zeros(n, dates - 1);
    for i in 0..n {
        let c = panel.close_row(i);
        for j in 0..dates - 1 {
            if c[j] == 0.0 {
                return Err(Error::Domain(format!("zero close for {}", panel.tickers()[i])));
            }
            data.set(i, j, (c[j + 1] - c[j]) / c[j]);
        }
    }
    Ok(FeatureMatrix {
        tickers: panel.tickers().to_vec(),
        data,
        stage: FeatureStage::RawPvclcl,
    })
}

/// Clamps every entry to `[lo, hi]`. Returns the clipped matrix and the
/// number of entries that were outside the window.
pub fn winsorize(x: &FeatureMatrix, lo: f64, hi: f64) -> Result<(FeatureMatrix, usize)> {
    if !(lo < hi) {
        return Err(Error::Config(format!("winsor window [{lo}, {hi}] is empty")));
    }
    if x.stage != FeatureStage::RawPvclcl {
        return Err(Error::Domain(format!("winsorize expects raw returns, got {:?}", x.stage)));
    }
    let clipped = x.data.as_slice().iter().filter(|&&v| v < lo || v > hi).count();
    Ok((
        FeatureMatrix {
            tickers: x.tickers.clone(),
            data: x.data.map_with(|v| v.clamp(lo, hi)),
            stage: FeatureStage::Winsorized,
        },
        clipped,
    ))
}

/// Standardizes each day (column) by its own mean and population standard
/// deviation. Columns with zero spread become all-zero.
pub fn daily_znorm(x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.stage != FeatureStage::Winsorized {
        return Err(Error::Domain(format!("daily_znorm expects winsorized features, got {:?}", x.stage)));
    }
    let (n, d) = x.data.shape();
    let mut out = Matrix::zeros(n, d);
    for j in 0..d {
        let col = x.data.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        // a constant column leaves O(ulp) residue in `sd`
        if sd <= 1e-15 * (1.0 + mean.abs()) {
            continue;
        }
        for (i, v) in col.iter().enumerate() {
            out.set(i, j, (v - mean) / sd);
        }
    }
    Ok(FeatureMatrix {
        tickers: x.tickers.clone(),
        data: out,
        stage: FeatureStage::Normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn panel(rows: &[&[f64]]) -> PricePanel {
        let d = rows[0].len();
        PricePanel::new(
            (0..rows.len()).map(|i| format!("T{i}")).collect(),
            (0..d)
                .map(|k| NaiveDate::from_ymd_opt(2007, 1, 1).unwrap() + chrono::Days::new(k as u64))
                .collect(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            vec![true; rows.len() * d],
        )
        .unwrap()
    }

    fn raw(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix {
            tickers: (0..rows.len()).map(|i| format!("T{i}")).collect(),
            data: Matrix::from_rows(rows).unwrap(),
            stage: FeatureStage::RawPvclcl,
        }
    }

    fn winsorized(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix {
            stage: FeatureStage::Winsorized,
            ..raw(rows)
        }
    }

    #[test]
    fn returns() {
        let x = pvclcl(&panel(&[&[100.0, 110.0], &[50.0, 45.0]])).unwrap();
        assert!((x.data.get(0, 0) - 0.1).abs() < 1e-15);
        assert!((x.data.get(1, 0) + 0.1).abs() < 1e-15);
        let flat = pvclcl(&panel(&[&[100.0, 100.0, 100.0]])).unwrap();
        assert_eq!(flat.data.row(0), &[0.0, 0.0]);
        let long: Vec<f64> = (0..251).map(|k| 100.0 + k as f64).collect();
        assert_eq!(pvclcl(&panel(&[&long])).unwrap().days(), 250);
        assert!(pvclcl(&panel(&[&[100.0]])).is_err());
    }

    #[test]
    fn winsor_window() {
        let (w, clipped) = winsorize(&raw(&[&[1.83, 0.05, -0.2]]), -0.1, 0.1).unwrap();
        assert_eq!(w.data.row(0), &[0.1, 0.05, -0.1]);
        assert_eq!(clipped, 2);
        assert_eq!(w.stage, FeatureStage::Winsorized);
        assert!(winsorize(&raw(&[&[0.0]]), 0.1, 0.1).is_err());
    }

    #[test]
    fn znorm_examples() {
        let z = daily_znorm(&winsorized(&[&[1.0, 5.0, 0.0], &[2.0, 5.0, 1.0], &[3.0, 5.0, -1.0]])).unwrap();
        let expect = 1.5f64.sqrt();
        assert!((z.data.get(0, 0) + expect).abs() < 1e-12);
        assert!(z.data.get(1, 0).abs() < 1e-12);
        assert!((z.data.get(2, 0) - expect).abs() < 1e-12);
        assert_eq!(z.data.column(1), vec![0.0, 0.0, 0.0]);
        // already standardized column is a fixed point
        let c = z.data.column(2);
        let zz = daily_znorm(&winsorized(&[&[c[0]], &[c[1]], &[c[2]]])).unwrap();
        for i in 0..3 {
            assert!((zz.data.get(i, 0) - c[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn stage_preconditions() {
        assert!(daily_znorm(&raw(&[&[1.0]])).is_err());
        assert!(winsorize(&winsorized(&[&[1.0]]), -0.1, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn winsorize_idempotent_and_monotone(v in proptest::collection::vec(-3.0f64..3.0, 2..20)) {
            let (w, _) = winsorize(&raw(&[&v]), -0.1, 0.1).unwrap();
            let (ww, clipped) = winsorize(&raw(&[w.data.row(0)]), -0.1, 0.1).unwrap();
            prop_assert_eq!(clipped, 0);
            prop_assert_eq!(ww.data.row(0), w.data.row(0));
            for a in 0..v.len() {
                for b in 0..v.len() {
                    if v[a] <= v[b] {
                        prop_assert!(w.data.get(0, a) <= w.data.get(0, b));
                    }
                }
            }
        }

        #[test]
        fn znorm_columns_standardized(v in proptest::collection::vec(-0.1f64..0.1, 24)) {
            let rows: Vec<&[f64]> = v.chunks(4).collect();
            let z = daily_znorm(&winsorized(&rows)).unwrap();
            for j in 0..4 {
                let col = z.data.column(j);
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9 || col.iter().all(|&x| x == 0.0));
            }
        }
    }
}
