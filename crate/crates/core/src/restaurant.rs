//! Constant-time ordered restaurant for long simulations.
//!
//! Tables live in a slot arena linked in left-to-right order. Each customer
//! records its table, so a uniform customer (and hence a table chosen
//! proportionally to its size) costs O(1). Joining a table with weight
//! `m - α` is done by size-biased choice followed by acceptance with
//! probability `(m - α)/m`.

use rand::Rng;

use crate::ocrp::CrpParams;
use crate::partition::{Composition, IntervalPartition};

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug, Default)]
pub struct Restaurant {
    size: Vec<u64>,
    prev: Vec<u32>,
    next: Vec<u32>,
    /// Position of each live table in `live`.
    live_pos: Vec<u32>,
    live: Vec<u32>,
    free: Vec<u32>,
    head: u32,
    tail: u32,
    /// Table of each seated customer (unordered).
    seat_of: Vec<u32>,
}

/// Rate decomposition of one up-down event at the current state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRates {
    pub join: f64,
    pub left: f64,
    pub right: f64,
    pub gaps: f64,
    pub departures: f64,
}

impl EventRates {
    pub fn arrivals(&self) -> f64 {
        self.join + self.left + self.right + self.gaps
    }

    pub fn total(&self) -> f64 {
        self.arrivals() + self.departures
    }
}

impl Restaurant {
    pub fn new() -> Self {
        Self {
            head: NIL,
            tail: NIL,
            ..Default::default()
        }
    }

    pub fn from_composition(c: &Composition) -> Self {
        let mut r = Self::new();
        for &m in c.parts() {
            let t = r.alloc();
            r.link_after(r.tail, t);
            for _ in 0..m {
                r.add_customer(t);
            }
        }
        r
    }

    pub fn customers(&self) -> u64 {
        self.seat_of.len() as u64
    }

    pub fn tables(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seat_of.is_empty()
    }

    /// Rates when arrivals follow `p` and each customer leaves at rate 1.
    pub fn rates(&self, p: &CrpParams) -> EventRates {
        let n = self.customers() as f64;
        let k = self.tables() as f64;
        if self.is_empty() {
            return EventRates {
                join: 0.0,
                left: 0.0,
                right: 0.0,
                gaps: 0.0,
                departures: 0.0,
            };
        }
        EventRates {
            join: n - k * p.alpha,
            left: p.theta1,
            right: p.theta2,
            gaps: (k - 1.0) * p.alpha,
            departures: n,
        }
    }

    pub fn to_composition(&self) -> Composition {
        let mut parts = Vec::with_capacity(self.tables());
        let mut t = self.head;
        while t != NIL {
            parts.push(self.size[t as usize]);
            t = self.next[t as usize];
        }
        Composition::from_vec_unchecked(parts)
    }

    /// Blocks scaled by `1/scale`.
    pub fn to_partition(&self, scale: f64) -> IntervalPartition {
        let mut blocks = Vec::with_capacity(self.tables());
        let mut s = 0u64;
        let mut t = self.head;
        while t != NIL {
            let m = self.size[t as usize];
            blocks.push((s as f64 / scale, (s + m) as f64 / scale));
            s += m;
            t = self.next[t as usize];
        }
        IntervalPartition::new(blocks, s as f64 / scale).expect("ordered blocks")
    }

    /// Size of the leftmost table, 0 if empty.
    pub fn first_table(&self) -> u64 {
        if self.head == NIL {
            0
        } else {
            self.size[self.head as usize]
        }
    }

    /// Size of the largest table, 0 if empty. O(k).
    pub fn largest_table(&self) -> u64 {
        self.live.iter().map(|&t| self.size[t as usize]).max().unwrap_or(0)
    }

    fn alloc(&mut self) -> u32 {
        let t = match self.free.pop() {
            Some(t) => t,
            None => {
                self.size.push(0);
                self.prev.push(NIL);
                self.next.push(NIL);
                self.live_pos.push(NIL);
                (self.size.len() - 1) as u32
            }
        };
        self.size[t as usize] = 0;
        self.live_pos[t as usize] = self.live.len() as u32;
        self.live.push(t);
        t
    }

    /// Links `t` immediately right of `after` (`NIL` means at the far left).
    fn link_after(&mut self, after: u32, t: u32) {
        let right = if after == NIL {
            self.head
        } else {
            self.next[after as usize]
        };
        self.prev[t as usize] = after;
        self.next[t as usize] = right;
        if after == NIL {
            self.head = t;
        } else {
            self.next[after as usize] = t;
        }
        if right == NIL {
            self.tail = t;
        } else {
            self.prev[right as usize] = t;
        }
    }

    fn unlink(&mut self, t: u32) {
        let (p, n) = (self.prev[t as usize], self.next[t as usize]);
        if p == NIL {
            self.head = n;
        } else {
            self.next[p as usize] = n;
        }
        if n == NIL {
            self.tail = p;
        } else {
            self.prev[n as usize] = p;
        }
        let pos = self.live_pos[t as usize] as usize;
        let last = *self.live.last().expect("live table");
        self.live.swap_remove(pos);
        if last != t {
            self.live_pos[last as usize] = pos as u32;
        }
        self.live_pos[t as usize] = NIL;
        self.free.push(t);
    }

    fn add_customer(&mut self, t: u32) {
        self.size[t as usize] += 1;
        self.seat_of.push(t);
    }

    fn new_table_after(&mut self, after: u32) {
        let t = self.alloc();
        self.link_after(after, t);
        self.add_customer(t);
    }

    /// Seats the first customer of an empty restaurant.
    pub fn open_first(&mut self) {
        debug_assert!(self.is_empty());
        self.new_table_after(NIL);
    }

    /// Seats one customer by the two-sided rule. An empty restaurant
    /// receives a single new table.
    pub fn seat<R: Rng + ?Sized>(&mut self, p: &CrpParams, rng: &mut R) {
        if self.is_empty() {
            self.open_first();
            return;
        }
        let r = self.rates(p);
        let mut u = rng.random::<f64>() * r.arrivals();
        if u < r.join {
            self.join_existing(p.alpha, rng);
            return;
        }
        u -= r.join;
        if u < r.left {
            self.new_table_after(NIL);
        } else if u < r.left + r.right || r.gaps <= 0.0 {
            self.new_table_after(self.tail);
        } else {
            // Uniform gap: the gap to the right of a uniform non-rightmost
            // table.
            let k = self.live.len();
            loop {
                let t = self.live[rng.random_range(0..k)];
                if t != self.tail {
                    self.new_table_after(t);
                    break;
                }
            }
        }
    }

    fn join_existing<R: Rng + ?Sized>(&mut self, alpha: f64, rng: &mut R) {
        let n = self.seat_of.len();
        loop {
            let t = self.seat_of[rng.random_range(0..n)];
            let m = self.size[t as usize] as f64;
            if alpha == 0.0 || rng.random::<f64>() * m < m - alpha {
                self.add_customer(t);
                return;
            }
        }
    }

    /// Removes a uniformly chosen customer; an emptied table disappears.
    pub fn remove_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.seat_of.len();
        debug_assert!(n > 0);
        let idx = rng.random_range(0..n);
        let t = self.seat_of.swap_remove(idx);
        self.size[t as usize] -= 1;
        if self.size[t as usize] == 0 {
            self.unlink(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocrp::{down_step_law, exact_law, seat_next_law};
    use crate::rng::stream;
    use crate::stats::{chi_square_gof, chi_square_gof_map};
    use std::collections::BTreeMap;

    #[test]
    fn round_trips_compositions() {
        let c = Composition::new(vec![3, 1, 4, 1, 5]).unwrap();
        let r = Restaurant::from_composition(&c);
        assert_eq!(r.to_composition(), c);
        assert_eq!(r.customers(), 14);
        assert_eq!(r.tables(), 5);
        assert_eq!(r.first_table(), 3);
        assert_eq!(r.largest_table(), 5);
        let p = r.to_partition(14.0);
        assert!((p.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn seating_matches_exact_transition() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let c = Composition::new(vec![2, 1, 3]).unwrap();
        let law = seat_next_law(&c, &p);
        let mut counts = vec![0u64; law.len()];
        let mut rng = stream(1, 0);
        for _ in 0..100_000 {
            let mut r = Restaurant::from_composition(&c);
            r.seat(&p, &mut rng);
            let d = r.to_composition();
            counts[law.iter().position(|(x, _)| *x == d).unwrap()] += 1;
        }
        let probs: Vec<f64> = law.iter().map(|e| e.1).collect();
        assert!(chi_square_gof(&counts, &probs).unwrap().p_value() > 1e-3);
    }

    #[test]
    fn removal_matches_exact_transition() {
        let c = Composition::new(vec![2, 1, 3]).unwrap();
        let law = down_step_law(&c);
        let mut counts = vec![0u64; law.len()];
        let mut rng = stream(2, 0);
        for _ in 0..60_000 {
            let mut r = Restaurant::from_composition(&c);
            r.remove_uniform(&mut rng);
            let d = r.to_composition();
            counts[law.iter().position(|(x, _)| *x == d).unwrap()] += 1;
        }
        let probs: Vec<f64> = law.iter().map(|e| e.1).collect();
        assert!(chi_square_gof(&counts, &probs).unwrap().p_value() > 1e-3);
    }

    #[test]
    fn grown_law_matches_exact_law() {
        for &(a, t1, t2) in &[(0.5, 0.3, 0.7), (0.0, 0.4, 1.0), (0.75, 0.0, 0.3)] {
            let p = CrpParams::new(a, t1, t2).unwrap();
            let exact = exact_law(6, &p).unwrap();
            let mut rng = stream(3, 0);
            let mut obs = BTreeMap::new();
            for _ in 0..100_000 {
                let mut r = Restaurant::new();
                for _ in 0..6 {
                    r.seat(&p, &mut rng);
                }
                *obs.entry(r.to_composition()).or_insert(0u64) += 1;
            }
            let chi = chi_square_gof_map(&obs, &exact.table).unwrap();
            assert!(chi.p_value() > 1e-3, "{p:?}: {chi:?}");
        }
    }

    #[test]
    fn slots_are_reused_consistently() {
        let p = CrpParams::new(0.3, 1.0, 1.0).unwrap();
        let mut rng = stream(4, 0);
        let mut r = Restaurant::new();
        for step in 0..20_000 {
            if r.is_empty() || rng.random::<f64>() < 0.52 {
                r.seat(&p, &mut rng);
            } else {
                r.remove_uniform(&mut rng);
            }
            if step % 97 == 0 {
                let c = r.to_composition();
                assert_eq!(c.total(), r.customers());
                assert_eq!(c.len(), r.tables());
                assert_eq!(Restaurant::from_composition(&c).to_composition(), c);
            }
        }
    }
}
