//! Planted-partition generator for mentions and prices.
//!
//! Companies are split into groups as evenly as possible. Each article has a
//! home group and mentions in-group companies with `p_in`, others with
//! `p_out`. Daily log-returns load `√return_corr` on a per-group factor and
//! `√(1 − return_corr)` on idiosyncratic noise.

use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CoocMatrix, GroundTruthLabels, PricePanel};
use crate::seed;

pub const START_PRICE: f64 = 100.0;
pub const LOG_RETURN_CLIP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_companies: usize,
    pub n_articles: usize,
    pub n_days: usize,
    pub k_planted: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub return_corr: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_companies: 72,
            n_articles: 2000,
            n_days: 251,
            k_planted: 9,
            p_in: 0.3,
            p_out: 0.02,
            return_corr: 0.7,
            noise_sigma: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(format!("synth: {what}")));
        if self.k_planted == 0 || self.n_companies < self.k_planted {
            return bad(format!("need 1 <= k_planted <= n_companies, got {} and {}", self.k_planted, self.n_companies));
        }
        if self.n_articles == 0 || self.n_days < 2 {
            return bad(format!("need articles >= 1 and days >= 2, got {} and {}", self.n_articles, self.n_days));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return bad(format!("need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}", self.p_in, self.p_out));
        }
        if !(0.0..1.0).contains(&self.return_corr) {
            return bad(format!("return_corr {} outside [0, 1)", self.return_corr));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be positive", self.noise_sigma));
        }
        Ok(())
    }

    /// Neither mentions nor returns carry group structure.
    pub fn no_signal(&self) -> bool {
        self.p_in == self.p_out && self.return_corr == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub cooc: CoocMatrix,
    pub prices: PricePanel,
    pub labels: GroundTruthLabels,
    /// Home group of each article.
    pub homes: Vec<usize>,
    pub no_signal: bool,
}

/// Group index per company; the first `n % k` groups get one extra member.
pub fn planted_groups(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).flat_map(|g| std::iter::repeat_n(g, base + usize::from(g < extra))).collect()
}

/// `count` weekdays starting at 2007-01-02.
pub fn business_days(count: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2007, 1, 2).expect("valid date");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let n = cfg.n_companies;
    let width = n.to_string().len().max(3);
    let tickers: Vec<String> = (0..n).map(|i| format!("S{:0width$}", i + 1)).collect();
    let groups = planted_groups(n, cfg.k_planted);

    let mut rng = seed::rng(cfg.seed, &[1]);
    let mut mentions = vec![0u8; n * cfg.n_articles];
    let mut homes = Vec::with_capacity(cfg.n_articles);
    for a in 0..cfg.n_articles {
        let home = rng.random_range(0..cfg.k_planted);
        homes.push(home);
        for (i, &g) in groups.iter().enumerate() {
            let p = if g == home { cfg.p_in } else { cfg.p_out };
            mentions[i * cfg.n_articles + a] = u8::from(rng.random_bool(p));
        }
    }

    let mut rng = seed::rng(cfg.seed, &[2]);
    let (load_f, load_e) = (cfg.return_corr.sqrt(), (1.0 - cfg.return_corr).sqrt());
    let mut close = vec![0.0; n * cfg.n_days];
    for i in 0..n {
        close[i * cfg.n_days] = START_PRICE;
    }
    for t in 1..cfg.n_days {
        let factors: Vec<f64> = (0..cfg.k_planted).map(|_| rng.sample(StandardNormal)).collect();
        for (i, &g) in groups.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            let r = (cfg.noise_sigma * (load_f * factors[g] + load_e * e)).clamp(-LOG_RETURN_CLIP, LOG_RETURN_CLIP);
            close[i * cfg.n_days + t] = close[i * cfg.n_days + t - 1] * r.exp();
        }
    }

    let sectors = groups.iter().map(|g| format!("G{:02}", g + 1)).collect();
    Ok(SynthData {
        cooc: CoocMatrix::new(tickers.clone(), cfg.n_articles, mentions)?,
        prices: PricePanel::new(tickers.clone(), business_days(cfg.n_days), close, vec![true; n * cfg.n_days])?,
        labels: GroundTruthLabels::new(tickers, sectors)?,
        homes,
        no_signal: cfg.no_signal(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetPaths {
    pub cooc: PathBuf,
    pub prices: PathBuf,
    pub labels: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            cooc: dir.join("cooc.csv"),
            prices: dir.join("prices.csv"),
            labels: dir.join("labels.csv"),
        }
    }
}

/// Writes the three input CSVs into `dir`.
pub fn write_dataset(data: &SynthData, dir: &Path) -> Result<DatasetPaths> {
    let paths = DatasetPaths::in_dir(dir);
    data.cooc.write_csv(&paths.cooc)?;
    data.prices.write_csv(&paths.prices)?;
    data.labels.write_csv(&paths.labels)?;
    Ok(paths)
}
