//! Continuous double auction, one book per resource.
//!
//! Orders are single-unit and escrowed at placement: a bid locks `price` coin,
//! an ask locks one unit of the resource. Each step runs one matching round
//! per resource, after which stale orders expire and release their escrow.
//!
//! Priority within a side is price first (high bids, low asks), then age
//! (`placed_at`), then a uniform draw among the remaining tie, taken from the
//! caller's rng. Tied candidates are enumerated in ascending `order_id` so a
//! draw always maps to the same order. A matched pair trades at the price of
//! whichever order was placed last (larger `order_id`); the buyer is refunded
//! any escrowed excess.
//!
//! Pairs with the same owner never trade. When the best bid has no crossing
//! ask from another owner it is passed over for the rest of the round and
//! stays on the book.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::sim::AgentState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: u64,
    pub owner: usize,
    pub resource: usize,
    pub side: Side,
    pub price: u32,
    pub placed_at: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub resource: usize,
    pub buyer: usize,
    pub seller: usize,
    pub bid_id: u64,
    pub ask_id: u64,
    pub bid_price: u32,
    pub ask_price: u32,
    pub price: u32,
    pub refund: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarketError {
    #[error("agent {agent} already has {live} live orders (cap {cap})")]
    OrderCap { agent: usize, live: u32, cap: u32 },
    #[error("agent {agent} cannot cover a bid at {price}")]
    InsufficientCoin { agent: usize, price: u32 },
    #[error("agent {agent} holds no units of resource {resource}")]
    InsufficientResource { agent: usize, resource: usize },
    #[error("resource {0} out of range")]
    BadResource(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Book {
    pub bids: Vec<Order>,
    pub asks: Vec<Order>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub books: Vec<Book>,
    pub next_order_id: u64,
    /// Live order count per agent.
    pub live_orders: Vec<u32>,
    /// Price of the most recent trade per resource, 0 before any trade.
    pub last_price: Vec<u32>,
    pub trade_count: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceStats {
    /// 0 when there are no bids.
    pub highest_bid: u32,
    /// 0 when there are no asks.
    pub lowest_ask: u32,
    pub buy_count: usize,
    pub sell_count: usize,
    pub last_price: u32,
}

impl MarketState {
    pub fn new(num_resources: usize, population: usize) -> Self {
        MarketState {
            books: vec![Book::default(); num_resources],
            next_order_id: 0,
            live_orders: vec![0; population],
            last_price: vec![0; num_resources],
            trade_count: vec![0; num_resources],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.books.iter().all(|b| b.bids.is_empty() && b.asks.is_empty())
    }

    pub fn orders(&self) -> impl Iterator<Item = &Order> {
        self.books.iter().flat_map(|b| b.bids.iter().chain(&b.asks))
    }

    pub fn stats(&self, resource: usize) -> ResourceStats {
        let book = &self.books[resource];
        ResourceStats {
            highest_bid: book.bids.iter().map(|o| o.price).max().unwrap_or(0),
            lowest_ask: book.asks.iter().map(|o| o.price).min().unwrap_or(0),
            buy_count: book.bids.len(),
            sell_count: book.asks.len(),
            last_price: self.last_price[resource],
        }
    }

    pub fn market_stats(&self) -> Vec<ResourceStats> {
        (0..self.books.len()).map(|r| self.stats(r)).collect()
    }

    /// Places a single-unit order for `agent`, moving the committed coin or
    /// resource unit into escrow and charging trade labor.
    #[allow(clippy::too_many_arguments)]
    pub fn place_order(
        &mut self,
        agents: &mut [AgentState],
        config: &EnvConfig,
        agent: usize,
        resource: usize,
        side: Side,
        price: u32,
        step: u32,
    ) -> Result<u64, MarketError> {
        if resource >= self.books.len() {
            return Err(MarketError::BadResource(resource));
        }
        let live = self.live_orders[agent];
        if live >= config.max_active_orders {
            return Err(MarketError::OrderCap {
                agent,
                live,
                cap: config.max_active_orders,
            });
        }
        let a = &mut agents[agent];
        match side {
            Side::Buy => {
                let p = f64::from(price);
                if a.coin < p {
                    return Err(MarketError::InsufficientCoin { agent, price });
                }
                a.coin -= p;
                a.escrow_coin += p;
            }
            Side::Sell => {
                if a.resources[resource] == 0 {
                    return Err(MarketError::InsufficientResource { agent, resource });
                }
                a.resources[resource] -= 1;
                a.escrow_resources[resource] += 1;
            }
        }
        a.labor += config.labor_cost_trade;
        let order_id = self.next_order_id;
        self.next_order_id += 1;
        self.live_orders[agent] += 1;
        let order = Order {
            order_id,
            owner: agent,
            resource,
            side,
            price,
            placed_at: step,
        };
        let book = &mut self.books[resource];
        match side {
            Side::Buy => book.bids.push(order),
            Side::Sell => book.asks.push(order),
        }
        Ok(order_id)
    }

    /// Runs one matching round on every book, in resource order.
    pub fn match_round<R: Rng + ?Sized>(&mut self, agents: &mut [AgentState], rng: &mut R) -> Vec<Trade> {
        let mut trades = Vec::new();
        for resource in 0..self.books.len() {
            let start = trades.len();
            match_book(&mut self.books[resource], rng, &mut trades);
            for t in &trades[start..] {
                settle(agents, t);
                self.live_orders[t.buyer] -= 1;
                self.live_orders[t.seller] -= 1;
                self.last_price[resource] = t.price;
                self.trade_count[resource] += 1;
            }
        }
        trades
    }

    /// Removes orders with `current_step - placed_at >= expiry`, returning
    /// their escrow to the owners. Returns the number of expired orders.
    pub fn expire_orders(&mut self, agents: &mut [AgentState], current_step: u32, expiry: u32) -> usize {
        let mut expired = 0;
        let live_orders = &mut self.live_orders;
        for book in &mut self.books {
            for orders in [&mut book.bids, &mut book.asks] {
                orders.retain(|o| {
                    if current_step.saturating_sub(o.placed_at) < expiry {
                        return true;
                    }
                    let a = &mut agents[o.owner];
                    match o.side {
                        Side::Buy => {
                            let p = f64::from(o.price);
                            a.escrow_coin -= p;
                            a.coin += p;
                        }
                        Side::Sell => {
                            a.escrow_resources[o.resource] -= 1;
                            a.resources[o.resource] += 1;
                        }
                    }
                    live_orders[o.owner] -= 1;
                    expired += 1;
                    false
                });
            }
        }
        expired
    }
}

fn settle(agents: &mut [AgentState], t: &Trade) {
    let bid_price = f64::from(t.bid_price);
    let price = f64::from(t.price);
    {
        let buyer = &mut agents[t.buyer];
        buyer.escrow_coin -= bid_price;
        buyer.coin += bid_price - price;
        buyer.resources[t.resource] += 1;
    }
    let seller = &mut agents[t.seller];
    seller.escrow_resources[t.resource] -= 1;
    seller.coin += price;
    seller.period_income += price;
}

// Bids sort best-first as (price desc, placed_at asc, id asc); asks as
// (price asc, placed_at asc, id asc). Tie groups are then contiguous runs
// in id order.
fn bid_rank(o: &Order) -> (std::cmp::Reverse<u32>, u32, u64) {
    (std::cmp::Reverse(o.price), o.placed_at, o.order_id)
}

fn ask_rank(o: &Order) -> (u32, u32, u64) {
    (o.price, o.placed_at, o.order_id)
}

/// Picks among the first tie group of `orders[i]` for which `eligible(i)`
/// holds, scanning in sorted order.
fn pick<R: Rng + ?Sized>(orders: &[Order], eligible: impl Fn(usize) -> bool, rng: &mut R) -> Option<usize> {
    let mut it = (0..orders.len()).filter(|&i| eligible(i));
    let first = it.next()?;
    let key = (orders[first].price, orders[first].placed_at);
    let mut group = vec![first];
    group.extend(it.take_while(|&i| (orders[i].price, orders[i].placed_at) == key));
    if group.len() == 1 {
        Some(first)
    } else {
        Some(group[rng.random_range(0..group.len())])
    }
}

fn match_book<R: Rng + ?Sized>(book: &mut Book, rng: &mut R, trades: &mut Vec<Trade>) {
    if book.bids.is_empty() || book.asks.is_empty() {
        return;
    }
    book.bids.sort_by_key(bid_rank);
    book.asks.sort_by_key(ask_rank);
    let bids = &book.bids;
    let asks = &book.asks;
    // bid: open for selection; ask: still live
    let mut bid_open = vec![true; bids.len()];
    let mut ask_live = vec![true; asks.len()];
    let mut bid_filled = vec![false; bids.len()];

    while let Some(lowest_ask) = (0..asks.len()).find(|&j| ask_live[j]) {
        let Some(bi) = pick(bids, |i| bid_open[i], rng) else {
            break;
        };
        let bid = bids[bi];
        if bid.price < asks[lowest_ask].price {
            break;
        }
        bid_open[bi] = false;
        let counter = pick(
            asks,
            |j| ask_live[j] && asks[j].owner != bid.owner && asks[j].price <= bid.price,
            rng,
        );
        let Some(ai) = counter else {
            // self-match only: passed over, stays on the book
            continue;
        };
        let ask = asks[ai];
        ask_live[ai] = false;
        bid_filled[bi] = true;
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

    let mut i = 0;
    book.bids.retain(|_| {
        i += 1;
        !bid_filled[i - 1]
    });
    let mut j = 0;
    book.asks.retain(|_| {
        j += 1;
        ask_live[j - 1]
    });
}
