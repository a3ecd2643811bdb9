//! Flat observation vectors for population agents and the government.
//!
//! Encodings: coin and labor are divided by 100, unit and order counts by 10,
//! market prices by the highest listed trade price, timers lie in `[0, 1]`.
//! Skills and tax rates are passed through unscaled. A missing market side
//! (no bids or no asks) and a resource that has never traded encode as 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::sim::WorldState;

pub const COIN_SCALE: f64 = 0.01;
pub const LABOR_SCALE: f64 = 0.01;
pub const COUNT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsField {
    pub name: String,
    pub offset: usize,
    pub width: usize,
}

/// Named, contiguous segments of an observation vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub fields: Vec<ObsField>,
}

impl ObsLayout {
    fn build(spec: &[(&str, usize)]) -> Self {
        let mut offset = 0;
        let fields = spec
            .iter()
            .filter(|(_, w)| *w > 0)
            .map(|&(name, width)| {
                let f = ObsField {
                    name: name.to_string(),
                    offset,
                    width,
                };
                offset += width;
                f
            })
            .collect();
        ObsLayout { fields }
    }

    pub fn len(&self) -> usize {
        self.fields.last().map_or(0, |f| f.offset + f.width)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn field(&self, name: &str) -> Option<&ObsField> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Text schema: one `name offset width` line per field.
    pub fn schema(&self, title: &str) -> String {
        let mut s = format!("# {title} observation layout v1, length {}\n", self.len());
        s.push_str("# name offset width\n");
        for f in &self.fields {
            let _ = writeln!(s, "{} {} {}", f.name, f.offset, f.width);
        }
        s
    }
}

/// Population observation layout; `agent_id` appends a one-hot of width
/// `population_size`.
pub fn population_layout(config: &EnvConfig, agent_id: bool) -> ObsLayout {
    let r = config.num_resources;
    ObsLayout::build(&[
        ("coin", 1),
        ("resources", r),
        ("escrow_coin", 1),
        ("escrow_resources", r),
        ("gather_skill", r),
        ("craft_skill", 1),
        ("labor", 1),
        ("market_highest_bid", r),
        ("market_lowest_ask", r),
        ("market_buy_count", r),
        ("market_sell_count", r),
        ("market_last_price", r),
        ("tax_rates", config.num_brackets()),
        ("period_progress", 1),
        ("episode_progress", 1),
        ("agent_id", if agent_id { config.population_size } else { 0 }),
    ])
}

/// Government layout: `[mean, std, median]` per population statistic.
pub fn government_layout(config: &EnvConfig) -> ObsLayout {
    let r = config.num_resources;
    ObsLayout::build(&[
        ("coin_stats", 3),
        ("labor_stats", 3),
        ("period_income_stats", 3),
        ("resources_stats", 3 * r),
        ("tax_rates", config.num_brackets()),
        ("period_progress", 1),
        ("episode_progress", 1),
    ])
}

fn timers(config: &EnvConfig, state: &WorldState) -> (f64, f64) {
    let t = state.timestep;
    let period = f64::from(t % config.tax_period_length) / f64::from(config.tax_period_length);
    let episode = f64::from(t) / f64::from(config.episode_length);
    (period, episode)
}

/// Writes agent `agent`'s observation into `out`, whose length must equal
/// `population_layout(config, agent_id).len()`.
pub fn write_population_obs(config: &EnvConfig, state: &WorldState, agent: usize, agent_id: bool, out: &mut [f32]) {
    let a = &state.agents[agent];
    let r = config.num_resources;
    let price_scale = 1.0 / f64::from(config.max_price());
    let mut i = 0;
    let mut push = |v: f64| {
        out[i] = v as f32;
        i += 1;
    };
    push(a.coin * COIN_SCALE);
    a.resources.iter().for_each(|&u| push(f64::from(u) * COUNT_SCALE));
    push(a.escrow_coin * COIN_SCALE);
    a.escrow_resources
        .iter()
        .for_each(|&u| push(f64::from(u) * COUNT_SCALE));
    a.gather_skill.iter().for_each(|&s| push(s));
    push(a.craft_skill);
    push(a.labor * LABOR_SCALE);
    let stats: Vec<_> = (0..r).map(|res| state.market.stats(res)).collect();
    stats.iter().for_each(|s| push(f64::from(s.highest_bid) * price_scale));
    stats.iter().for_each(|s| push(f64::from(s.lowest_ask) * price_scale));
    stats.iter().for_each(|s| push(s.buy_count as f64 * COUNT_SCALE));
    stats.iter().for_each(|s| push(s.sell_count as f64 * COUNT_SCALE));
    stats.iter().for_each(|s| push(f64::from(s.last_price) * price_scale));
    state.tax.current_rates.iter().for_each(|&x| push(x));
    let (period, episode) = timers(config, state);
    push(period);
    push(episode);
    if agent_id {
        for j in 0..config.population_size {
            push(if j == agent { 1.0 } else { 0.0 });
        }
    }
    debug_assert_eq!(i, out.len());
}

pub fn population_obs(config: &EnvConfig, state: &WorldState, agent: usize, agent_id: bool) -> Vec<f32> {
    let mut out = vec![0.0; population_layout(config, agent_id).len()];
    write_population_obs(config, state, agent, agent_id, &mut out);
    out
}

/// Mean, population standard deviation and median. Values are sorted first
/// so the result does not depend on input order.
pub fn summary_stats(values: &mut [f64]) -> [f64; 3] {
    if values.is_empty() {
        return [0.0; 3];
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let m = values.len() / 2;
    let median = if values.len().is_multiple_of(2) {
        0.5 * (values[m - 1] + values[m])
    } else {
        values[m]
    };
    [mean, var.sqrt(), median]
}

pub fn write_government_obs(config: &EnvConfig, state: &WorldState, out: &mut [f32]) {
    let mut i = 0;
    let mut push_stats = |values: &mut Vec<f64>, scale: f64, out: &mut [f32]| {
        for s in summary_stats(values) {
            out[i] = (s * scale) as f32;
            i += 1;
        }
    };
    let agents = &state.agents;
    let mut buf: Vec<f64> = agents.iter().map(|a| a.total_coin()).collect();
    push_stats(&mut buf, COIN_SCALE, out);
    buf = agents.iter().map(|a| a.labor).collect();
    push_stats(&mut buf, LABOR_SCALE, out);
    buf = agents.iter().map(|a| a.period_income).collect();
    push_stats(&mut buf, COIN_SCALE, out);
    for r in 0..config.num_resources {
        buf = agents.iter().map(|a| f64::from(a.resources[r])).collect();
        push_stats(&mut buf, COUNT_SCALE, out);
    }
    let (period, episode) = timers(config, state);
    let tail = state.tax.current_rates.iter().copied().chain([period, episode]);
    for v in tail {
        out[i] = v as f32;
        i += 1;
    }
    debug_assert_eq!(i, out.len());
}

pub fn government_obs(config: &EnvConfig, state: &WorldState) -> Vec<f32> {
    let mut out = vec![0.0; government_layout(config).len()];
    write_government_obs(config, state, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::reset;

    #[test]
    fn fresh_reset_population_obs() {
        let c = EnvConfig::default();
        let s = reset(&c, 0).unwrap();
        let layout = population_layout(&c, false);
        let o = population_obs(&c, &s, 0, false);
        assert_eq!(o.len(), layout.len());
        assert_eq!(o[0], (15.0 * COIN_SCALE) as f32);
        let res = layout.field("resources").unwrap();
        assert!(o[res.offset..res.offset + res.width].iter().all(|&v| v == 0.0));
        let skill = layout.field("gather_skill").unwrap();
        assert_eq!(o[skill.offset] as f64, s.agents[0].gather_skill[0] as f32 as f64);
    }

    #[test]
    fn layout_length_formula() {
        let c = EnvConfig::default();
        let (r, b) = (c.num_resources, c.num_brackets());
        let expected = 1 + r + 1 + r + r + 1 + 1 + 5 * r + b + 2;
        assert_eq!(population_layout(&c, false).len(), expected);
        assert_eq!(population_layout(&c, true).len(), expected + c.population_size);
        assert_eq!(government_layout(&c).len(), 9 + 3 * r + b + 2);
    }

    #[test]
    fn agent_id_one_hot() {
        let c = EnvConfig {
            population_size: 4,
            ..EnvConfig::default()
        };
        let s = reset(&c, 0).unwrap();
        let o = population_obs(&c, &s, 3, true);
        assert_eq!(&o[o.len() - 4..], &[0.0, 0.0, 0.0, 1.0]);
        let plain = population_obs(&c, &s, 3, false);
        assert_eq!(&o[..plain.len()], &plain[..]);
    }

    #[test]
    fn summary_examples() {
        let s = summary_stats(&mut [3.0, 1.0, 2.0]);
        assert_eq!(s[0], 2.0);
        assert!((s[1] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s[2], 2.0);
        assert_eq!(summary_stats(&mut [4.0, 1.0, 3.0, 2.0])[2], 2.5);
    }

    #[test]
    fn government_obs_permutation_invariant() {
        let c = EnvConfig {
            population_size: 7,
            ..EnvConfig::default()
        };
        let mut s = reset(&c, 0).unwrap();
        for (i, a) in s.agents.iter_mut().enumerate() {
            a.coin = 1.1 * i as f64 + 0.3;
            a.labor = 0.7 * (i * i) as f64;
            a.period_income = (i as f64).sqrt();
            a.resources = vec![i as u32, 7 - i as u32];
        }
        let o = government_obs(&c, &s);
        s.agents.reverse();
        s.agents.swap(1, 4);
        assert_eq!(o, government_obs(&c, &s));
        assert_eq!(o.len(), government_layout(&c).len());
    }

    #[test]
    fn schema_lists_offsets() {
        let c = EnvConfig::default();
        let text = population_layout(&c, false).schema("population");
        assert!(text.contains("coin 0 1\n"));
        assert!(text.contains("resources 1 2\n"));
    }
}
