//! Loading the news co-occurrence matrix, close-price files and sector
//! labels, and aligning them onto one node set.
//!
//! File formats:
//!
//! - co-occurrence: headerless CSV, one row per ticker, the ticker followed
//!   by one `0`/`1` per article;
//! - prices: CSV with header `ticker,date,close`, dates as `YYYY-MM-DD`;
//! - labels: CSV with header `ticker,sector`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};

/// Binary company × article occurrence matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoocMatrix {
    tickers: Vec<String>,
    articles: usize,
    data: Vec<u8>,
}

impl CoocMatrix {
    pub fn new(tickers: Vec<String>, articles: usize, data: Vec<u8>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::Data("co-occurrence matrix has no tickers".into()));
        }
        check_unique(&tickers, "co-occurrence")?;
        if data.len() != tickers.len() * articles {
            return Err(Error::Shape {
                op: "CoocMatrix::new",
                left: (tickers.len(), articles),
                right: (data.len(), 1),
            });
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::Data(format!(
                "non-binary co-occurrence entry {} at row {}, column {}",
                data[pos],
                pos / articles.max(1),
                pos % articles.max(1)
            )));
        }
        Ok(CoocMatrix {
            tickers,
            articles,
            data,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn articles(&self) -> usize {
        self.articles
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.articles..(i + 1) * self.articles]
    }

    /// Rows restricted to `keep` in the given order.
    pub fn select(&self, keep: &[String]) -> Result<CoocMatrix> {
        let index = ticker_index(&self.tickers);
        let mut data = Vec::with_capacity(keep.len() * self.articles);
        for t in keep {
            let &i = index
                .get(t.as_str())
                .ok_or_else(|| Error::Data(format!("ticker {t} not in co-occurrence matrix")))?;
            data.extend_from_slice(self.row(i));
        }
        CoocMatrix::new(keep.to_vec(), self.articles, data)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, t) in self.tickers.iter().enumerate() {
            out.push_str(t);
            for &v in self.row(i) {
                out.push(',');
                out.push(if v == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        write_file(path, out.as_bytes())
    }
}

/// Ticker × date close prices with a presence mask.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePanel {
    tickers: Vec<String>,
    dates: Vec<NaiveDate>,
    close: Vec<f64>,
    present: Vec<bool>,
}

impl PricePanel {
    /// `close` and `present` are ticker-major (`tickers.len() × dates.len()`).
    pub fn new(
        tickers: Vec<String>,
        dates: Vec<NaiveDate>,
        close: Vec<f64>,
        present: Vec<bool>,
    ) -> Result<Self> {
        check_unique(&tickers, "price panel")?;
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("price panel dates not strictly increasing".into()));
        }
        let cells = tickers.len() * dates.len();
        if close.len() != cells || present.len() != cells {
            return Err(Error::Shape {
                op: "PricePanel::new",
                left: (tickers.len(), dates.len()),
                right: (close.len(), present.len()),
            });
        }
        for (k, (&c, &p)) in close.iter().zip(&present).enumerate() {
            if p && !(c.is_finite() && c > 0.0) {
                return Err(Error::Data(format!(
                    "non-positive close {c} for {} on {}",
                    tickers[k / dates.len()],
                    dates[k % dates.len()]
                )));
            }
        }
        Ok(PricePanel {
            tickers,
            dates,
            close,
            present,
        })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn close_row(&self, i: usize) -> &[f64] {
        let d = self.dates.len();
        &self.close[i * d..(i + 1) * d]
    }

    pub fn present_row(&self, i: usize) -> &[bool] {
        let d = self.dates.len();
        &self.present[i * d..(i + 1) * d]
    }

    pub fn missing_count(&self) -> usize {
        self.present.iter().filter(|p| !**p).count()
    }

    pub fn is_complete(&self) -> bool {
        self.present.iter().all(|&p| p)
    }

    pub fn select(&self, keep: &[String]) -> Result<PricePanel> {
        let index = ticker_index(&self.tickers);
        let mut close = Vec::with_capacity(keep.len() * self.dates.len());
        let mut present = Vec::with_capacity(close.capacity());
        for t in keep {
            let &i = index
                .get(t.as_str())
                .ok_or_else(|| Error::Data(format!("ticker {t} not in price panel")))?;
            close.extend_from_slice(self.close_row(i));
            present.extend_from_slice(self.present_row(i));
        }
        PricePanel::new(keep.to_vec(), self.dates.clone(), close, present)
    }

    /// Writes the present cells in `ticker,date,close` long format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("ticker,date,close\n");
        for (i, t) in self.tickers.iter().enumerate() {
            for (j, d) in self.dates.iter().enumerate() {
                if self.present_row(i)[j] {
                    out.push_str(&format!("{t},{},{}\n", d.format("%Y-%m-%d"), self.close_row(i)[j]));
                }
            }
        }
        write_file(path, out.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthLabels {
    tickers: Vec<String>,
    sectors: Vec<String>,
}

impl GroundTruthLabels {
    pub fn new(tickers: Vec<String>, sectors: Vec<String>) -> Result<Self> {
        if tickers.is_empty() {
            return Err(Error::Data("label set is empty".into()));
        }
        if tickers.len() != sectors.len() {
            return Err(Error::Data("labels: ticker/sector length mismatch".into()));
        }
        check_unique(&tickers, "labels")?;
        Ok(GroundTruthLabels { tickers, sectors })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn sectors(&self) -> &[String] {
        &self.sectors
    }

    pub fn sector_of(&self, ticker: &str) -> Option<&str> {
        self.tickers
            .iter()
            .position(|t| t == ticker)
            .map(|i| self.sectors[i].as_str())
    }

    /// Sector of each ticker as a dense class id (ids in order of first
    /// appearance of the sorted sector names).
    pub fn class_ids(&self) -> (Vec<usize>, Vec<String>) {
        let names: BTreeSet<&String> = self.sectors.iter().collect();
        let names: Vec<String> = names.into_iter().cloned().collect();
        let ids = self
            .sectors
            .iter()
            .map(|s| names.binary_search(s).expect("sector present"))
            .collect();
        (ids, names)
    }

    pub fn select(&self, keep: &[String]) -> Result<GroundTruthLabels> {
        let index = ticker_index(&self.tickers);
        let sectors = keep
            .iter()
            .map(|t| {
                index
                    .get(t.as_str())
                    .map(|&i| self.sectors[i].clone())
                    .ok_or_else(|| Error::Data(format!("ticker {t} has no label")))
            })
            .collect::<Result<Vec<_>>>()?;
        GroundTruthLabels::new(keep.to_vec(), sectors)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("ticker,sector\n");
        for (t, s) in self.tickers.iter().zip(&self.sectors) {
            out.push_str(&format!("{t},{s}\n"));
        }
        write_file(path, out.as_bytes())
    }
}

/// Tickers removed while loading or aligning, for the build manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DroppedTickers {
    pub without_prices: Vec<String>,
    pub without_cooccurrence: Vec<String>,
    pub without_labels: Vec<String>,
}

fn check_unique(tickers: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for t in tickers {
        if t.is_empty() {
            return Err(Error::Data(format!("{what}: empty ticker")));
        }
        if !seen.insert(t.as_str()) {
            return Err(Error::Data(format!("{what}: duplicate ticker {t}")));
        }
    }
    Ok(())
}

fn ticker_index(tickers: &[String]) -> HashMap<&str, usize> {
    tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect()
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

pub fn load_cooccurrence(path: &Path) -> Result<CoocMatrix> {
    parse_cooccurrence(&read_file(path)?, &path.display().to_string())
}

pub fn parse_cooccurrence(text: &str, origin: &str) -> Result<CoocMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut tickers = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        let ticker = rec[0].trim().to_string();
        let articles = rec.len() - 1;
        match width {
            None => width = Some(articles),
            Some(w) if w != articles => {
                return Err(Error::parse(
                    origin,
                    format!("ragged row {} ({ticker}): {articles} articles, expected {w}", row + 1),
                ))
            }
            _ => {}
        }
        for (col, field) in rec.iter().skip(1).enumerate() {
            let v = match field.trim() {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(Error::parse(
                        origin,
                        format!("non-binary entry {other:?} at row {}, column {}", row + 1, col + 1),
                    ))
                }
            };
            data.push(v);
        }
        tickers.push(ticker);
    }
    if tickers.is_empty() {
        return Err(Error::parse(origin, "no rows"));
    }
    CoocMatrix::new(tickers, width.unwrap_or(0), data).map_err(|e| Error::parse(origin, e.to_string()))
}

#[derive(Debug, serde::Deserialize)]
struct PriceRecord {
    ticker: String,
    date: String,
    close: f64,
}

/// Result of [`load_prices`]: the panel plus universe tickers absent from
/// every price file.
#[derive(Clone, Debug)]
pub struct LoadedPrices {
    pub panel: PricePanel,
    pub missing_tickers: Vec<String>,
}

/// Loads and merges price files, restricted to `universe`.
///
/// The date axis is the union of all dates seen for universe tickers; cells
/// without a record are marked missing. Identical duplicate records are
/// merged, conflicting ones are an error.
pub fn load_prices<P: AsRef<Path>>(paths: &[P], universe: &[String]) -> Result<LoadedPrices> {
    let wanted: HashSet<&str> = universe.iter().map(String::as_str).collect();
    let mut cells: BTreeMap<(String, NaiveDate), f64> = BTreeMap::new();

    for path in paths {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let text = read_file(path)?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(&origin, e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["ticker", "date", "close"] {
            return Err(Error::parse(&origin, format!("expected header ticker,date,close, got {:?}", headers.iter().collect::<Vec<_>>())));
        }
        for (line, rec) in reader.deserialize::<PriceRecord>().enumerate() {
            let rec = rec.map_err(|e| Error::parse(&origin, format!("record {}: {e}", line + 1)))?;
            if !wanted.contains(rec.ticker.as_str()) {
                continue;
            }
            let date = NaiveDate::parse_from_str(&rec.date, "%Y-%m-%d").map_err(|e| {
                Error::parse(&origin, format!("record {}: bad date {:?}: {e}", line + 1, rec.date))
            })?;
            if !(rec.close.is_finite() && rec.close > 0.0) {
                return Err(Error::Data(format!(
                    "{origin}: non-positive close {} for {} on {date}",
                    rec.close, rec.ticker
                )));
            }
            match cells.insert((rec.ticker.clone(), date), rec.close) {
                Some(prev) if prev != rec.close => {
                    return Err(Error::Data(format!(
                        "conflicting closes for {} on {date}: {prev} vs {}",
                        rec.ticker, rec.close
                    )))
                }
                _ => {}
            }
        }
    }

    let seen: BTreeSet<&str> = cells.keys().map(|(t, _)| t.as_str()).collect();
    let tickers: Vec<String> = universe.iter().filter(|t| seen.contains(t.as_str())).cloned().collect();
    let missing_tickers = universe.iter().filter(|t| !seen.contains(t.as_str())).cloned().collect();
    let dates: Vec<NaiveDate> = cells
        .keys()
        .map(|(_, d)| *d)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let date_index: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let t_index = ticker_index(&tickers);
    let mut close = vec![0.0; tickers.len() * dates.len()];
    let mut present = vec![false; close.len()];
    for ((t, d), c) in &cells {
        let k = t_index[t.as_str()] * dates.len() + date_index[d];
        close[k] = *c;
        present[k] = true;
    }
    Ok(LoadedPrices {
        panel: PricePanel::new(tickers, dates, close, present)?,
        missing_tickers,
    })
}

pub fn load_labels(path: &Path) -> Result<GroundTruthLabels> {
    let origin = path.display().to_string();
    let text = read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(&origin, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["ticker", "sector"] {
        return Err(Error::parse(&origin, "expected header ticker,sector"));
    }
    let mut tickers = Vec::new();
    let mut sectors = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(&origin, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::parse(&origin, format!("expected 2 fields, got {}", rec.len())));
        }
        tickers.push(rec[0].to_string());
        sectors.push(rec[1].to_string());
    }
    GroundTruthLabels::new(tickers, sectors).map_err(|e| Error::parse(&origin, e.to_string()))
}

/// Fills missing closes by linear interpolation between the nearest present
/// neighbours. A single missing day becomes the mean of its neighbours.
pub fn impute_missing(panel: &PricePanel) -> Result<PricePanel> {
    let d = panel.dates.len();
    let mut close = panel.close.clone();
    for (i, ticker) in panel.tickers.iter().enumerate() {
        let present = panel.present_row(i);
        let row = &mut close[i * d..(i + 1) * d];
        let observed = present.iter().filter(|&&p| p).count();
        if observed == 0 {
            return Err(Error::Imputation {
                ticker: ticker.clone(),
                date: "*".into(),
                reason: "no prices present",
            });
        }
        if observed < 2 {
            return Err(Error::Imputation {
                ticker: ticker.clone(),
                date: "*".into(),
                reason: "fewer than two prices present",
            });
        }
        for (edge, reason) in [(0, "first date missing"), (d - 1, "last date missing")] {
            if !present[edge] {
                return Err(Error::Imputation {
                    ticker: ticker.clone(),
                    date: panel.dates[edge].to_string(),
                    reason,
                });
            }
        }
        let mut prev = 0usize;
        for j in 1..d {
            if !present[j] {
                continue;
            }
            if j - prev > 1 {
                let (a, b) = (row[prev], row[j]);
                let span = (j - prev) as f64;
                for m in (prev + 1)..j {
                    let frac = (m - prev) as f64 / span;
                    row[m] = a + (b - a) * frac;
                }
            }
            prev = j;
        }
    }
    PricePanel::new(
        panel.tickers.clone(),
        panel.dates.clone(),
        close,
        vec![true; panel.present.len()],
    )
}

/// The three inputs restricted to their common tickers, ascending order.
#[derive(Clone, Debug)]
pub struct Aligned {
    pub cooc: CoocMatrix,
    pub panel: PricePanel,
    pub labels: GroundTruthLabels,
    pub dropped: DroppedTickers,
}

pub fn align_universe(
    cooc: &CoocMatrix,
    panel: &PricePanel,
    labels: &GroundTruthLabels,
) -> Result<Aligned> {
    let c: BTreeSet<&String> = cooc.tickers.iter().collect();
    let p: BTreeSet<&String> = panel.tickers.iter().collect();
    let l: BTreeSet<&String> = labels.tickers.iter().collect();
    let common: Vec<String> = c
        .iter()
        .filter(|t| p.contains(*t) && l.contains(*t))
        .map(|t| (*t).clone())
        .collect();
    if common.is_empty() {
        return Err(Error::Data("ticker universes do not intersect".into()));
    }
    let dropped_from = |set: &BTreeSet<&String>, others: [&BTreeSet<&String>; 2]| -> Vec<String> {
        others
            .iter()
            .flat_map(|o| o.iter())
            .filter(|t| !set.contains(*t))
            .map(|t| (*t).clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    let dropped = DroppedTickers {
        without_prices: dropped_from(&p, [&c, &l]),
        without_cooccurrence: dropped_from(&c, [&p, &l]),
        without_labels: dropped_from(&l, [&c, &p]),
    };
    Ok(Aligned {
        cooc: cooc.select(&common)?,
        panel: panel.select(&common)?,
        labels: labels.select(&common)?,
        dropped,
    })
}
