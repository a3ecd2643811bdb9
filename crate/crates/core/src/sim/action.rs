use serde::{Deserialize, Serialize};

/// A decoded population action. Price fields are indices into the
/// configured trade price list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Gather(usize),
    Craft,
    Buy { resource: usize, price: usize },
    Sell { resource: usize, price: usize },
    Noop,
}

/// Coarse action category, used for action histograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Gather,
    Craft,
    Buy,
    Sell,
    Noop,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Gather,
        ActionKind::Craft,
        ActionKind::Buy,
        ActionKind::Sell,
        ActionKind::Noop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Gather => "gather",
            ActionKind::Craft => "craft",
            ActionKind::Buy => "buy",
            ActionKind::Sell => "sell",
            ActionKind::Noop => "noop",
        }
    }
}

impl Action {
    pub fn kind(self) -> ActionKind {
        match self {
            Action::Gather(_) => ActionKind::Gather,
            Action::Craft => ActionKind::Craft,
            Action::Buy { .. } => ActionKind::Buy,
            Action::Sell { .. } => ActionKind::Sell,
            Action::Noop => ActionKind::Noop,
        }
    }
}

/// Flat discrete action layout: gather per resource, craft, buy per
/// (resource, price), sell per (resource, price), then the optional no-op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub num_resources: usize,
    pub num_prices: usize,
    pub allow_noop: bool,
}

impl ActionSpace {
    pub fn new(num_resources: usize, num_prices: usize, allow_noop: bool) -> Self {
        ActionSpace {
            num_resources,
            num_prices,
            allow_noop,
        }
    }

    pub fn size(&self) -> usize {
        self.craft_index() + 1 + 2 * self.num_resources * self.num_prices + usize::from(self.allow_noop)
    }

    pub fn craft_index(&self) -> usize {
        self.num_resources
    }

    fn buy_base(&self) -> usize {
        self.num_resources + 1
    }

    fn sell_base(&self) -> usize {
        self.buy_base() + self.num_resources * self.num_prices
    }

    pub fn noop_index(&self) -> Option<usize> {
        self.allow_noop.then(|| self.size() - 1)
    }

    pub fn encode(&self, action: Action) -> usize {
        match action {
            Action::Gather(r) => r,
            Action::Craft => self.craft_index(),
            Action::Buy { resource, price } => self.buy_base() + resource * self.num_prices + price,
            Action::Sell { resource, price } => self.sell_base() + resource * self.num_prices + price,
            Action::Noop => self.noop_index().expect("no-op disabled"),
        }
    }

    pub fn decode(&self, index: usize) -> Option<Action> {
        let r = self.num_resources;
        let p = self.num_prices;
        if index < r {
            Some(Action::Gather(index))
        } else if index == r {
            Some(Action::Craft)
        } else if index < self.sell_base() {
            let i = index - self.buy_base();
            Some(Action::Buy {
                resource: i / p,
                price: i % p,
            })
        } else if index < self.sell_base() + r * p {
            let i = index - self.sell_base();
            Some(Action::Sell {
                resource: i / p,
                price: i % p,
            })
        } else if self.allow_noop && index == self.size() - 1 {
            Some(Action::Noop)
        } else {
            None
        }
    }

    /// Human-readable label, e.g. `sell_r1_p2`.
    pub fn label(&self, index: usize) -> String {
        match self.decode(index) {
            Some(Action::Gather(r)) => format!("gather_r{r}"),
            Some(Action::Craft) => "craft".into(),
            Some(Action::Buy { resource, price }) => format!("buy_r{resource}_p{price}"),
            Some(Action::Sell { resource, price }) => format!("sell_r{resource}_p{price}"),
            Some(Action::Noop) => "noop".into(),
            None => format!("invalid_{index}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_match_reference_counts() {
        assert_eq!(ActionSpace::new(4, 3, true).size(), 30);
        assert_eq!(ActionSpace::new(12, 3, true).size(), 86);
        assert_eq!(ActionSpace::new(2, 5, true).size(), 24);
        assert_eq!(ActionSpace::new(2, 5, false).size(), 23);
    }

    #[test]
    fn encode_decode_roundtrip() {
        for space in [ActionSpace::new(3, 4, true), ActionSpace::new(1, 1, false)] {
            for i in 0..space.size() {
                let a = space.decode(i).unwrap();
                assert_eq!(space.encode(a), i);
            }
            assert_eq!(space.decode(space.size()), None);
        }
    }

    #[test]
    fn layout_order() {
        let s = ActionSpace::new(2, 5, true);
        assert_eq!(s.decode(0), Some(Action::Gather(0)));
        assert_eq!(s.decode(2), Some(Action::Craft));
        assert_eq!(s.decode(3), Some(Action::Buy { resource: 0, price: 0 }));
        assert_eq!(s.decode(12), Some(Action::Buy { resource: 1, price: 4 }));
        assert_eq!(s.decode(13), Some(Action::Sell { resource: 0, price: 0 }));
        assert_eq!(s.decode(23), Some(Action::Noop));
        assert_eq!(s.label(14), "sell_r0_p1");
    }
}
