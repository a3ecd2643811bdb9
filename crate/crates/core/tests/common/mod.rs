//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use econsim::market::{Order, Side, Trade};
use econsim::ppo::{Preset, SharingMode, Trainer};
use econsim::sim::{self, WorldState};
use econsim::EnvConfig;
use rand::Rng;

/// Reference matcher: re-scans every order on every iteration instead of
/// sorting once. Consumes the rng exactly like the engine, one draw per tie
/// group of two or more, so both can run off the same tape.
pub fn reference_match<R: Rng>(bids: &[Order], asks: &[Order], rng: &mut R) -> Vec<Trade> {
    let mut bid_open: Vec<bool> = vec![true; bids.len()];
    let mut ask_live: Vec<bool> = vec![true; asks.len()];
    let mut trades = Vec::new();
    loop {
        let min_ask = (0..asks.len()).filter(|&j| ask_live[j]).map(|j| asks[j].price).min();
        let Some(min_ask) = min_ask else { break };
        let open: Vec<usize> = (0..bids.len()).filter(|&i| bid_open[i]).collect();
        let Some(bi) = best(bids, &open, true, rng) else { break };
        let bid = bids[bi];
        if bid.price < min_ask {
            break;
        }
        bid_open[bi] = false;
        let candidates: Vec<usize> = (0..asks.len())
            .filter(|&j| ask_live[j] && asks[j].owner != bid.owner && asks[j].price <= bid.price)
            .collect();
        let Some(ai) = best(asks, &candidates, false, rng) else {
            continue;
        };
        ask_live[ai] = false;
        let ask = asks[ai];
        let price = if bid.order_id > ask.order_id {
            bid.price
        } else {
            ask.price
        };
        trades.push(Trade {
            resource: bid.resource,
            buyer: bid.owner,
            seller: ask.owner,
            bid_id: bid.order_id,
            ask_id: ask.order_id,
            bid_price: bid.price,
            ask_price: ask.price,
            price,
            refund: bid.price - price,
        });
    }
    trades
}

fn best<R: Rng>(orders: &[Order], among: &[usize], high: bool, rng: &mut R) -> Option<usize> {
    let price = if high {
        among.iter().map(|&i| orders[i].price).max()?
    } else {
        among.iter().map(|&i| orders[i].price).min()?
    };
    let at_price: Vec<usize> = among.iter().copied().filter(|&i| orders[i].price == price).collect();
    let oldest = at_price.iter().map(|&i| orders[i].placed_at).min()?;
    let mut tie: Vec<usize> = at_price
        .into_iter()
        .filter(|&i| orders[i].placed_at == oldest)
        .collect();
    tie.sort_by_key(|&i| orders[i].order_id);
    Some(if tie.len() == 1 {
        tie[0]
    } else {
        tie[rng.random_range(0..tie.len())]
    })
}

pub fn side_orders(orders: &[Order], side: Side) -> Vec<Order> {
    orders.iter().copied().filter(|o| o.side == side).collect()
}

/// Uniformly random valid action per agent.
pub fn random_actions<R: Rng>(config: &EnvConfig, state: &WorldState, rng: &mut R) -> Vec<usize> {
    let size = config.action_space().size();
    (0..config.population_size)
        .map(|i| {
            let mask = sim::action_mask(config, state, i);
            let allowed: Vec<usize> = (0..size).filter(|&k| mask[k]).collect();
            allowed[rng.random_range(0..allowed.len())]
        })
        .collect()
}

/// Episode-level results of one training run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub total_steps: u64,
    /// `(global step at completion, mean population return)` per episode.
    pub returns: Vec<(u64, f64)>,
    pub final_equality: f64,
    pub final_productivity: f64,
}

impl RunSummary {
    /// Mean episode return over episodes finishing in `[lo, hi]` as
    /// fractions of training.
    pub fn mean_return(&self, lo: f64, hi: f64) -> f64 {
        let t = self.total_steps as f64;
        let xs: Vec<f64> = self
            .returns
            .iter()
            .filter(|(s, _)| (*s as f64) >= lo * t && (*s as f64) <= hi * t)
            .map(|&(_, r)| r)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Trains with `preset` adjusted by `tweak`, summarizing completed
/// episodes. Final welfare averages the last episode of every env.
pub fn train_summary(
    preset: Preset,
    seed: u64,
    tweak: impl FnOnce(&mut EnvConfig, &mut econsim::ppo::TrainConfig),
) -> RunSummary {
    let (mut env, mut train) = preset.configs();
    tweak(&mut env, &mut train);
    let num_envs = train.num_envs;
    let mut trainer = Trainer::new(env, train, seed).expect("valid config");
    let total_steps = trainer.num_updates() * trainer.config.steps_per_update();
    let mut returns = Vec::new();
    let mut last = Vec::new();
    trainer
        .train(|_, r| {
            for e in &r.rollout.episodes {
                returns.push((r.global_step, e.return_mean));
                last.push((e.equality, e.productivity));
            }
            Ok(())
        })
        .expect("training runs");
    let tail = &last[last.len().saturating_sub(num_envs)..];
    let k = tail.len() as f64;
    RunSummary {
        total_steps,
        returns,
        final_equality: tail.iter().map(|x| x.0).sum::<f64>() / k,
        final_productivity: tail.iter().map(|x| x.1).sum::<f64>() / k,
    }
}

pub fn mode_name(m: SharingMode) -> &'static str {
    m.name()
}

pub fn verdict(name: &str, pass: bool, detail: &str) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
