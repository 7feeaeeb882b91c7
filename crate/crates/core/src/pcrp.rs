//! Continuous-time up-down ordered restaurant: arrivals follow the
//! two-sided seating rates and every customer leaves at rate 1.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::ocrp::{apply_seat, choose_seat, down_step, CrpParams};
use crate::partition::{composition_to_partition, scale, Composition, IntervalPartition};
use crate::restaurant::Restaurant;
use crate::updown::{ChainPath, DEFAULT_EVENT_BUDGET};

/// Event-by-event record of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PcrpPath {
    pub initial: Composition,
    /// `(time, state after the event)`.
    pub events: Vec<(f64, Composition)>,
    pub params: CrpParams,
    pub killed: bool,
    pub horizon: f64,
}

impl PcrpPath {
    pub fn state_at(&self, t: f64) -> &Composition {
        let idx = self.events.partition_point(|e| e.0 <= t);
        if idx == 0 {
            &self.initial
        } else {
            &self.events[idx - 1].1
        }
    }

    pub fn final_state(&self) -> &Composition {
        self.events.last().map_or(&self.initial, |e| &e.1)
    }

    /// Time the empty state was reached, for runs that end there.
    pub fn absorption_time(&self) -> Option<f64> {
        if self.final_state().is_empty() && (self.killed || self.params.theta() <= 0.0) {
            Some(self.events.last().map_or(0.0, |e| e.0))
        } else {
            None
        }
    }

    /// The total-mass trajectory.
    pub fn mass_path(&self) -> ChainPath {
        ChainPath {
            initial_state: self.initial.total(),
            events: self.events.iter().map(|(t, c)| (*t, c.total())).collect(),
            horizon: self.horizon,
        }
    }

    /// Writes `time,composition` rows, starting with the initial state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,composition")?;
        writeln!(w, "0,{}", self.initial)?;
        for (t, c) in &self.events {
            writeln!(w, "{t},{c}")?;
        }
        Ok(())
    }
}

/// Outcome of [`PcrpSim::step_until`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// One event happened; the clock shows its time.
    Event,
    /// No event before the requested time; the clock shows that time.
    Reached,
    /// The empty state is terminal; the clock shows the time it was hit.
    Absorbed,
}

/// Incremental event-driven simulator on the constant-time restaurant.
#[derive(Clone, Debug)]
pub struct PcrpSim {
    pub state: Restaurant,
    params: CrpParams,
    killed: bool,
    budget: u64,
    events: u64,
    time: f64,
    pending: Option<f64>,
}

impl PcrpSim {
    pub fn new(c0: &Composition, p: &CrpParams, killed: bool) -> Self {
        Self {
            state: Restaurant::from_composition(c0),
            params: *p,
            killed,
            budget: DEFAULT_EVENT_BUDGET,
            events: 0,
            time: 0.0,
            pending: None,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    fn absorbed(&self) -> bool {
        self.state.is_empty() && (self.killed || self.params.theta() <= 0.0)
    }

    /// Total jump rate `2n + θ` (or `θ` at the empty state).
    fn total_rate(&self) -> f64 {
        let n = self.state.customers() as f64;
        let theta = self.params.theta();
        if self.state.is_empty() {
            return theta;
        }
        let rates = self.state.rates(&self.params);
        let expected = 2.0 * n + theta;
        assert!(
            (rates.total() - expected).abs() <= 1e-9 * (1.0 + expected),
            "event rates {rates:?} do not sum to 2n + θ = {expected}"
        );
        expected
    }

    /// Performs the next event if it happens no later than `until`.
    pub fn step_until<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) -> Result<Step> {
        if self.absorbed() {
            return Ok(Step::Absorbed);
        }
        let rate = self.total_rate();
        let at = match self.pending {
            Some(at) => at,
            None => {
                let e: f64 = Exp1.sample(rng);
                let at = self.time + e / rate;
                self.pending = Some(at);
                at
            }
        };
        if at > until {
            self.time = until;
            return Ok(Step::Reached);
        }
        self.pending = None;
        self.time = at;
        self.events += 1;
        if self.events > self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        let n = self.state.customers() as f64;
        if self.state.is_empty() {
            self.state.open_first();
        } else if rng.random::<f64>() * rate < n + self.params.theta() {
            self.state.seat(&self.params, rng);
        } else {
            self.state.remove_uniform(rng);
        }
        Ok(Step::Event)
    }

    /// Runs until `until` or absorption.
    pub fn run_until<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) -> Result<Step> {
        loop {
            match self.step_until(until, rng)? {
                Step::Event => continue,
                s => return Ok(s),
            }
        }
    }
}

fn check_horizon(h: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    Ok(())
}

/// Exact event-driven simulation, recording every event.
pub fn simulate_pcrp<R: Rng + ?Sized>(
    c0: &Composition,
    p: &CrpParams,
    horizon: f64,
    killed: bool,
    rng: &mut R,
) -> Result<PcrpPath> {
    check_horizon(horizon)?;
    let mut sim = PcrpSim::new(c0, p, killed);
    let mut path = PcrpPath {
        initial: c0.clone(),
        events: Vec::new(),
        params: *p,
        killed,
        horizon,
    };
    while sim.step_until(horizon, rng)? == Step::Event {
        path.events.push((sim.time(), sim.state.to_composition()));
    }
    Ok(path)
}

/// States at each of the increasing `times` along one run.
pub fn pcrp_marginals<R: Rng + ?Sized>(
    c0: &Composition,
    p: &CrpParams,
    times: &[f64],
    killed: bool,
    rng: &mut R,
) -> Result<Vec<Composition>> {
    let mut sim = PcrpSim::new(c0, p, killed);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < sim.time() {
            return Err(invalid("marginal times must be increasing"));
        }
        sim.run_until(t, rng)?;
        out.push(sim.state.to_composition());
    }
    Ok(out)
}

/// Drives a composition by a given total-mass path: each up-jump seats a
/// customer by the seating rule (the empty state opens one table), each
/// down-jump removes a uniform customer.
pub fn simulate_pcrp_embedded<R: Rng + ?Sized>(
    z: &ChainPath,
    p: &CrpParams,
    c0: &Composition,
    rng: &mut R,
) -> Result<PcrpPath> {
    if c0.total() != z.initial_state {
        return Err(Error::MassMismatch {
            expected: z.initial_state,
            found: c0.total(),
        });
    }
    let mut c = c0.clone();
    let mut events = Vec::with_capacity(z.events.len());
    let mut prev = z.initial_state;
    for &(t, s) in &z.events {
        if s == prev + 1 {
            if c.is_empty() {
                c = Composition::single(1);
            } else {
                let seat = choose_seat(&c, p, rng);
                apply_seat(&mut c, seat);
            }
        } else if s + 1 == prev {
            c = down_step(&c, rng)?;
        } else {
            return Err(invalid("mass path must move by unit jumps"));
        }
        prev = s;
        events.push((t, c.clone()));
    }
    Ok(PcrpPath {
        initial: c0.clone(),
        events,
        params: *p,
        killed: false,
        horizon: z.horizon,
    })
}

/// Lifetime of the run from a single customer killed at the empty state,
/// or `None` if it is still alive at `cap`.
pub fn excursion_lifetime<R: Rng + ?Sized>(p: &CrpParams, cap: f64, rng: &mut R) -> Result<Option<f64>> {
    let mut sim = PcrpSim::new(&Composition::single(1), p, true);
    Ok(match sim.run_until(cap, rng)? {
        Step::Absorbed => Some(sim.time()),
        _ => None,
    })
}

/// Full excursion from a single customer until the restaurant empties.
pub fn sample_excursion<R: Rng + ?Sized>(p: &CrpParams, rng: &mut R) -> Result<PcrpPath> {
    simulate_pcrp(&Composition::single(1), p, f64::INFINITY, true, rng)
}

/// A right-continuous piecewise-constant path of interval partitions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionPath {
    pub initial: IntervalPartition,
    pub events: Vec<(f64, IntervalPartition)>,
    pub horizon: f64,
}

impl PartitionPath {
    pub fn state_at(&self, t: f64) -> &IntervalPartition {
        let idx = self.events.partition_point(|e| e.0 <= t);
        if idx == 0 {
            &self.initial
        } else {
            &self.events[idx - 1].1
        }
    }

    /// Knots `(start time, state)` including the initial state at time 0.
    fn knots(&self) -> impl Iterator<Item = (f64, &IntervalPartition)> {
        std::iter::once((0.0, &self.initial)).chain(self.events.iter().map(|(t, s)| (*t, s)))
    }
}

/// `t -> C(2nt)/n`.
pub fn rescale_pcrp(path: &PcrpPath, n: u64) -> PartitionPath {
    let nf = n as f64;
    let conv = |c: &Composition| scale(1.0 / nf, &composition_to_partition(c)).expect("positive factor");
    PartitionPath {
        initial: conv(&path.initial),
        events: path.events.iter().map(|(t, c)| (t / (2.0 * nf), conv(c))).collect(),
        horizon: path.horizon / (2.0 * nf),
    }
}

/// Inverse of `ρ(t) = ∫_0^t ds / ‖β(s)‖` evaluated at `u`.
pub fn time_change(path: &PartitionPath, u: f64) -> Result<f64> {
    let knots: Vec<(f64, f64)> = path.knots().map(|(t, s)| (t, s.total_mass())).collect();
    let mut acc = 0.0;
    for (i, &(t, m)) in knots.iter().enumerate() {
        let end = knots.get(i + 1).map_or(path.horizon, |k| k.0);
        if !(m > 0.0) {
            return Err(invalid(format!("mass vanishes at time {t} before the requested clock")));
        }
        let du = (end - t) / m;
        if acc + du >= u {
            return Ok(t + (u - acc) * m);
        }
        acc += du;
    }
    Err(invalid("path ends before the requested clock"))
}

/// Unit-mass path run on the clock `u = ρ(t)`, up to `u_max`.
pub fn depoissonise(path: &PartitionPath, u_max: f64) -> Result<PartitionPath> {
    let knots: Vec<(f64, &IntervalPartition)> = path.knots().collect();
    let norm = |s: &IntervalPartition| scale(1.0 / s.total_mass(), s);
    let mut acc = 0.0;
    let mut out = PartitionPath {
        initial: IntervalPartition::empty(),
        events: Vec::new(),
        horizon: u_max,
    };
    for (i, &(t, s)) in knots.iter().enumerate() {
        let m = s.total_mass();
        if !(m > 0.0) {
            return Err(invalid(format!("mass vanishes at time {t} before the requested clock")));
        }
        let state = norm(s)?;
        if i == 0 {
            out.initial = state;
        } else {
            out.events.push((acc, state));
        }
        let end = knots.get(i + 1).map_or(path.horizon, |k| k.0);
        acc += (end - t) / m;
        if acc >= u_max {
            return Ok(out);
        }
    }
    Err(invalid("path ends before the requested clock"))
}
