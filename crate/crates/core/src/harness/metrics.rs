//! CSV sinks for training metrics.
//!
//! `metrics.csv` has one row per rollout with the columns from
//! [`metrics_header`]; `episodes.csv` one row per finished episode. Wall-clock
//! timings go to `timing.csv` so the other two stay byte-reproducible.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::config::{EnvConfig, RATE_LEVELS};
use crate::obs::summary_stats;
use crate::ppo::{EpisodeRecord, UpdateReport};
use crate::sim::ActionKind;

/// Formats like C's `%.9g`; non-finite values print as `nan`, `inf`, `-inf`.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_fraction(format!("{x:.decimals$}"))
    } else {
        let m = trim_fraction(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Column names of `metrics.csv` for an environment configuration.
pub fn metrics_header(env: &EnvConfig) -> Vec<String> {
    let mut h: Vec<String> = [
        "step",
        "update",
        "seed",
        "config_hash",
        "return_mean",
        "return_median",
        "productivity",
        "equality",
        "government_utility",
    ]
    .map(String::from)
    .to_vec();
    h.extend((0..env.num_brackets()).map(|b| format!("tax_rate_{b}")));
    h.extend((0..env.num_resources).map(|r| format!("price_mean_{r}")));
    h.extend((0..env.num_resources).map(|r| format!("trades_{r}")));
    h.extend(ActionKind::ALL.iter().map(|k| format!("pop_action_{}", k.name())));
    h.extend((0..RATE_LEVELS).map(|l| format!("gov_level_{l}")));
    h.extend(
        [
            "episodes_completed",
            "policy_loss",
            "value_loss",
            "entropy",
            "approx_kl",
            "clip_fraction",
            "gov_policy_loss",
            "gov_value_loss",
            "gov_entropy",
            "learning_rate",
            "entropy_coef",
        ]
        .map(String::from),
    );
    h
}

/// Column names of `episodes.csv`.
pub fn episodes_header(env: &EnvConfig) -> Vec<String> {
    let mut h: Vec<String> = [
        "step",
        "update",
        "seed",
        "config_hash",
        "env",
        "episode",
        "return_mean",
        "return_median",
        "government_return",
        "productivity",
        "equality",
        "government_utility",
    ]
    .map(String::from)
    .to_vec();
    h.extend((0..env.num_brackets()).map(|b| format!("tax_rate_{b}")));
    h
}

fn fractions(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

pub fn metrics_row(report: &UpdateReport, seed: u64, config_hash: &str) -> Vec<String> {
    let r = &report.rollout;
    let mut returns = r.window_returns.clone();
    let [mean, _, median] = summary_stats(&mut returns);
    let mut row = vec![
        report.global_step.to_string(),
        report.update.to_string(),
        seed.to_string(),
        config_hash.to_string(),
        fmt_g9(mean),
        fmt_g9(median),
        fmt_g9(r.productivity),
        fmt_g9(r.equality),
        fmt_g9(r.government_utility),
    ];
    row.extend(r.tax_rates.iter().map(|&x| fmt_g9(x)));
    row.extend(r.trade_price_sum.iter().zip(&r.trade_count).map(|(&s, &c)| {
        if c == 0 {
            fmt_g9(f64::NAN)
        } else {
            fmt_g9(s / c as f64)
        }
    }));
    row.extend(r.trade_count.iter().map(u64::to_string));
    row.extend(fractions(&r.action_counts).into_iter().map(fmt_g9));
    row.extend(fractions(&r.level_counts).into_iter().map(fmt_g9));
    row.push(r.episodes.len().to_string());
    let p = &report.population;
    row.extend([p.policy_loss, p.value_loss, p.entropy, p.approx_kl, p.clip_fraction].map(fmt_g9));
    match &report.government {
        Some(g) => row.extend([g.policy_loss, g.value_loss, g.entropy].map(fmt_g9)),
        None => row.extend(std::iter::repeat_n(fmt_g9(f64::NAN), 3)),
    }
    row.push(fmt_g9(report.learning_rate));
    row.push(fmt_g9(report.entropy_coef));
    row
}

pub fn episode_row(e: &EpisodeRecord, step: u64, update: u64, seed: u64, config_hash: &str) -> Vec<String> {
    let mut row = vec![
        step.to_string(),
        update.to_string(),
        seed.to_string(),
        config_hash.to_string(),
        e.env.to_string(),
        e.episode.to_string(),
        fmt_g9(e.return_mean),
        fmt_g9(e.return_median),
        fmt_g9(e.government_return),
        fmt_g9(e.productivity),
        fmt_g9(e.equality),
        fmt_g9(e.government_utility),
    ];
    row.extend(e.tax_rates.iter().map(|&x| fmt_g9(x)));
    row
}

/// Buffered CSV file with a fixed header. Fields never contain commas.
pub struct CsvSink {
    out: BufWriter<File>,
    width: usize,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[String]) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvSink {
            out,
            width: header.len(),
        })
    }

    pub fn write_row(&mut self, row: &[String]) -> io::Result<()> {
        debug_assert_eq!(row.len(), self.width);
        writeln!(self.out, "{}", row.join(","))
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_printf() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.1"),
            (-2.5, "-2.5"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (2.0 / 3.0 * 1e-7, "6.66666667e-08"),
            (99.99999999, "100"),
            (1e21, "1e+21"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g9(x), s, "{x}");
        }
        assert_eq!(fmt_g9(f64::NAN), "nan");
        assert_eq!(fmt_g9(-0.0), "0");
    }

    #[test]
    fn g9_keeps_nine_significant_digits() {
        for x in [std::f64::consts::PI, 12345.678912345, -0.000123456789123] {
            let back: f64 = fmt_g9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9);
        }
    }

    #[test]
    fn header_widths() {
        let env = EnvConfig::default();
        let h = metrics_header(&env);
        assert_eq!(h.len(), 9 + 3 + 2 + 2 + 5 + 21 + 11);
        assert_eq!(episodes_header(&env).len(), 12 + 3);
    }
}
