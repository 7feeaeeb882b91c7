//! The up-down chain on the non-negative integers with up-rate `i + θ` and
//! down-rate `i`, its scale function, and closed-form squared Bessel
//! targets for its scaling limit.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};

/// Default cap on the number of simulated events.
pub const DEFAULT_EVENT_BUDGET: u64 = 100_000_000;

/// A piecewise-constant integer path with unit jumps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainPath {
    pub initial_state: u64,
    /// `(time, state after the jump)`, times strictly increasing.
    pub events: Vec<(f64, u64)>,
    pub horizon: f64,
}

impl ChainPath {
    pub fn constant(state: u64, horizon: f64) -> Self {
        Self {
            initial_state: state,
            events: Vec::new(),
            horizon,
        }
    }

    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> u64 {
        let idx = self.events.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            self.initial_state
        } else {
            self.events[idx - 1].1
        }
    }

    pub fn final_state(&self) -> u64 {
        self.events.last().map_or(self.initial_state, |e| e.1)
    }

    /// Time of the last event, or 0 for a constant path.
    pub fn last_event_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.0)
    }

    pub fn max_state(&self) -> u64 {
        self.events.iter().map(|e| e.1).fold(self.initial_state, u64::max)
    }

    /// `(up-jumps, down-jumps)`.
    pub fn jump_counts(&self) -> (u64, u64) {
        let mut prev = self.initial_state;
        let mut up = 0;
        let mut down = 0;
        for &(_, s) in &self.events {
            if s > prev {
                up += 1;
            } else {
                down += 1;
            }
            prev = s;
        }
        (up, down)
    }

    /// Writes `time,state` rows, starting with the initial state at time 0.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,state")?;
        writeln!(w, "0,{}", self.initial_state)?;
        for (t, s) in &self.events {
            writeln!(w, "{t},{s}")?;
        }
        Ok(())
    }
}

/// A piecewise-constant real-valued path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealPath {
    pub initial_value: f64,
    pub events: Vec<(f64, f64)>,
    pub horizon: f64,
}

impl RealPath {
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.events.partition_point(|&(s, _)| s <= t);
        if idx == 0 {
            self.initial_value
        } else {
            self.events[idx - 1].1
        }
    }

    pub fn sup(&self) -> f64 {
        self.events.iter().map(|e| e.1).fold(self.initial_value, f64::max)
    }
}

/// Options for [`simulate_updown_with`].
#[derive(Clone, Copy, Debug)]
pub struct ChainOptions {
    /// Stop on reaching 0 even when 0 is not absorbing.
    pub killed: bool,
    pub budget: u64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            killed: false,
            budget: DEFAULT_EVENT_BUDGET,
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > -1.0) || !theta.is_finite() {
        return Err(invalid(format!("chain parameter must exceed -1, got {theta}")));
    }
    Ok(())
}

/// Simulates the chain from `k` up to `horizon` with default options.
pub fn simulate_updown<R: Rng + ?Sized>(k: u64, theta: f64, horizon: f64, rng: &mut R) -> Result<ChainPath> {
    simulate_updown_with(k, theta, horizon, ChainOptions::default(), rng)
}

/// Exact event-driven simulation with exponential holding times.
pub fn simulate_updown_with<R: Rng + ?Sized>(
    k: u64,
    theta: f64,
    horizon: f64,
    opts: ChainOptions,
    rng: &mut R,
) -> Result<ChainPath> {
    check_theta(theta)?;
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let mut path = ChainPath::constant(k, horizon);
    let mut state = k;
    let mut t = 0.0;
    let mut count = 0u64;
    loop {
        let (up, down) = if state == 0 {
            if opts.killed || theta <= 0.0 {
                break;
            }
            (theta, 0.0)
        } else {
            (state as f64 + theta, state as f64)
        };
        let total = up + down;
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > horizon {
            break;
        }
        count += 1;
        if count > opts.budget {
            return Err(Error::BudgetExceeded { budget: opts.budget });
        }
        if rng.random::<f64>() * total < up {
            state += 1;
        } else {
            state -= 1;
        }
        path.events.push((t, state));
    }
    Ok(path)
}

/// Runs the chain to `horizon` without recording the path. Returns the
/// final state and, if the chain stopped at 0, the time it got there.
fn run_lean<R: Rng + ?Sized>(
    k: u64,
    theta: f64,
    horizon: f64,
    opts: ChainOptions,
    rng: &mut R,
) -> Result<(u64, Option<f64>)> {
    check_theta(theta)?;
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let mut state = k;
    let mut t = 0.0;
    let mut count = 0u64;
    loop {
        let (up, down) = if state == 0 {
            if opts.killed || theta <= 0.0 {
                return Ok((0, Some(t)));
            }
            (theta, 0.0)
        } else {
            (state as f64 + theta, state as f64)
        };
        let total = up + down;
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > horizon {
            return Ok((state, None));
        }
        count += 1;
        if count > opts.budget {
            return Err(Error::BudgetExceeded { budget: opts.budget });
        }
        if rng.random::<f64>() * total < up {
            state += 1;
        } else {
            state -= 1;
        }
    }
}

/// State of the chain at time `t`, without storing the path.
pub fn updown_state_at<R: Rng + ?Sized>(k: u64, theta: f64, t: f64, opts: ChainOptions, rng: &mut R) -> Result<u64> {
    run_lean(k, theta, t, opts, rng).map(|(s, _)| s)
}

/// Time at which the chain killed at 0 dies, or `None` if it is still
/// alive at `cap`.
pub fn absorption_time_capped<R: Rng + ?Sized>(k: u64, theta: f64, cap: f64, rng: &mut R) -> Result<Option<f64>> {
    let opts = ChainOptions {
        killed: true,
        budget: DEFAULT_EVENT_BUDGET,
    };
    if k == 0 {
        return Ok(Some(0.0));
    }
    run_lean(k, theta, cap, opts, rng).map(|(_, hit)| hit)
}

/// Runs only the jump chain from 1 and reports whether it reaches `k`
/// before 0.
pub fn hits_level_before_zero<R: Rng + ?Sized>(k: u64, theta: f64, rng: &mut R) -> bool {
    let mut i = 1u64;
    while i > 0 && i < k {
        let up = i as f64 + theta;
        if rng.random::<f64>() * (up + i as f64) < up {
            i += 1;
        } else {
            i -= 1;
        }
    }
    i >= k
}

/// `ln` of the scale-function increment `s(i) - s(i-1)` for `i >= 1`.
fn ln_scale_increment(i: u64, theta: f64) -> f64 {
    let i = i as f64;
    ln_gamma(i) + ln_gamma(1.0 + theta) - ln_gamma(i + theta)
}

/// Scale function normalized by `s(0) = 0`, `s(1) = 1`: the increments are
/// `Γ(i)Γ(1+θ)/Γ(i+θ)`, which makes `s(Z)` a martingale for the jump chain.
pub fn scale_function(k: u64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok((1..=k).map(|i| ln_scale_increment(i, theta).exp()).sum())
}

/// Probability that the chain started at 1 reaches `k` before 0.
pub fn hit_probability_exact(k: u64, theta: f64) -> Result<f64> {
    if k < 2 {
        return Err(invalid("target level must be at least 2"));
    }
    Ok(1.0 / scale_function(k, theta)?)
}

/// Space-time rescaling `t -> Z(2nt)/n`.
pub fn rescale_chain(path: &ChainPath, n: u64) -> RealPath {
    let nf = n as f64;
    RealPath {
        initial_value: path.initial_state as f64 / nf,
        events: path
            .events
            .iter()
            .map(|&(t, s)| (t / (2.0 * nf), s as f64 / nf))
            .collect(),
        horizon: path.horizon / (2.0 * nf),
    }
}

/// Gamma law with the given shape and rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaLaw {
    pub shape: f64,
    pub rate: f64,
}

impl GammaLaw {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        GammaDist::new(self.shape, self.rate)
            .expect("validated gamma parameters")
            .cdf(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated gamma parameters")
            .sample(rng)
    }
}

/// Marginal at time `t` of the squared Bessel process of dimension `2θ`
/// entering from 0: shape `θ`, rate `1/(2t)`.
pub fn besq_gamma_marginal(theta: f64, t: f64) -> Result<GammaLaw> {
    if !(theta > 0.0) || !(t > 0.0) {
        return Err(invalid("gamma entrance law needs positive θ and t"));
    }
    Ok(GammaLaw {
        shape: theta,
        rate: 1.0 / (2.0 * t),
    })
}

/// One draw of `mass / (2G)` with `G ~ Gamma(1 - θ, 1)`.
pub fn besq_hitting_time_sample<R: Rng + ?Sized>(mass: f64, theta: f64, rng: &mut R) -> Result<f64> {
    if !(theta < 1.0) {
        return Err(invalid("hitting time is infinite for θ ≥ 1"));
    }
    if !(mass > 0.0) {
        return Err(invalid("mass must be positive"));
    }
    let g: f64 = Gamma::new(1.0 - theta, 1.0)
        .map_err(|e| invalid(e.to_string()))?
        .sample(rng);
    Ok(mass / (2.0 * g))
}

/// Cdf of `mass / (2G)`: `P(mass/(2G) <= x) = P(G >= mass/(2x))`.
pub fn besq_hitting_time_cdf(mass: f64, theta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let g = GammaDist::new(1.0 - theta, 1.0).expect("θ < 1");
    1.0 - g.cdf(mass / (2.0 * x))
}

/// Euler–Maruyama scheme for `dZ = δ dt + 2 sqrt(|Z|) dB` run to time `t`.
/// For `δ <= 0` the scheme is absorbed at 0; otherwise negative excursions
/// of the scheme are reflected.
pub fn besq_euler<R: Rng + ?Sized>(x: f64, delta: f64, t: f64, dt: f64, rng: &mut R) -> f64 {
    let mut z = x;
    let mut s = 0.0;
    while s < t {
        let h = dt.min(t - s);
        if delta <= 0.0 && z <= 0.0 {
            return 0.0;
        }
        z = euler_step(z, delta, h, rng);
        if delta <= 0.0 && z <= 0.0 {
            return 0.0;
        }
        s += h;
    }
    z
}

/// First time the absorbed scheme reaches 0, or `None` if it survives to
/// `t_max`. Requires `δ <= 0`.
pub fn besq_euler_absorption_time<R: Rng + ?Sized>(
    x: f64,
    delta: f64,
    dt: f64,
    t_max: f64,
    rng: &mut R,
) -> Option<f64> {
    debug_assert!(delta <= 0.0);
    let mut z = x;
    let mut s = 0.0;
    while s < t_max {
        z = euler_step(z, delta, dt, rng);
        s += dt;
        if z <= 0.0 {
            return Some(s);
        }
    }
    None
}

fn euler_step<R: Rng + ?Sized>(z: f64, delta: f64, h: f64, rng: &mut R) -> f64 {
    let n: f64 = StandardNormal.sample(rng);
    let next = z + delta * h + 2.0 * z.abs().sqrt() * h.sqrt() * n;
    if delta > 0.0 {
        next.abs()
    } else {
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn zero_is_absorbing_for_nonpositive_theta() {
        let mut rng = stream(1, 0);
        let p = simulate_updown(0, -0.5, 10.0, &mut rng).unwrap();
        assert!(p.events.is_empty());
        assert_eq!(p.final_state(), 0);
        let p = simulate_updown(0, 0.0, 10.0, &mut rng).unwrap();
        assert!(p.events.is_empty());
    }

    #[test]
    fn killed_flag_stops_at_zero() {
        let mut rng = stream(2, 0);
        for _ in 0..200 {
            let opts = ChainOptions {
                killed: true,
                ..Default::default()
            };
            let p = simulate_updown_with(1, 0.5, 50.0, opts, &mut rng).unwrap();
            let zeros = p.events.iter().filter(|e| e.1 == 0).count();
            assert!(zeros <= 1);
            if zeros == 1 {
                assert_eq!(p.final_state(), 0);
            }
        }
    }

    #[test]
    fn lean_runner_matches_recorded_path() {
        for i in 0..200 {
            let opts = ChainOptions {
                killed: true,
                budget: DEFAULT_EVENT_BUDGET,
            };
            let path = simulate_updown_with(3, 0.4, 5.0, opts, &mut stream(11, i)).unwrap();
            let lean = updown_state_at(3, 0.4, 5.0, opts, &mut stream(11, i)).unwrap();
            assert_eq!(path.final_state(), lean);
            let death = absorption_time_capped(3, 0.4, 5.0, &mut stream(11, i)).unwrap();
            match death {
                Some(t) => {
                    assert_eq!(path.final_state(), 0);
                    assert_eq!(path.last_event_time(), t);
                }
                None => assert!(path.final_state() > 0),
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = stream(3, 0);
        let opts = ChainOptions {
            killed: false,
            budget: 10,
        };
        let r = simulate_updown_with(100, 0.5, 1e6, opts, &mut rng);
        assert!(matches!(r, Err(Error::BudgetExceeded { budget: 10 })));
    }

    #[test]
    fn first_jump_from_one_is_fair_at_theta_zero() {
        let mut rng = stream(4, 0);
        let reps = 100_000;
        let ups = (0..reps)
            .filter(|_| {
                let p = simulate_updown(1, 0.0, 50.0, &mut rng).unwrap();
                p.events.first().is_some_and(|e| e.1 == 2)
            })
            .count() as f64;
        let se = (0.25 / reps as f64).sqrt();
        assert!((ups / reps as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn small_time_drift_matches_theta() {
        // The generator drift is θ in every state (including 0 when θ > 0),
        // so E[Z(t)] - 1 = θ t.
        let mut rng = stream(5, 0);
        let reps = 200_000;
        let theta = 0.5;
        let ts = [0.01, 0.02, 0.04];
        let mut slopes = Vec::new();
        for &t in &ts {
            let mean: f64 = (0..reps)
                .map(|_| simulate_updown(1, theta, t, &mut rng).unwrap().final_state() as f64)
                .sum::<f64>()
                / reps as f64;
            slopes.push((mean - 1.0) / t);
        }
        let avg = slopes.iter().sum::<f64>() / slopes.len() as f64;
        assert!((avg - theta).abs() < 0.1, "slopes {slopes:?}");
    }

    #[test]
    fn scale_function_values() {
        for k in 1..20 {
            assert!((scale_function(k, 0.0).unwrap() - k as f64).abs() < 1e-10);
        }
        assert!((scale_function(1, 0.7).unwrap() - 1.0).abs() < 1e-12);
        assert!((scale_function(2, 1.0).unwrap() - 1.5).abs() < 1e-12);
        assert!((hit_probability_exact(2, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        for k in 2..10 {
            assert!((hit_probability_exact(k, 0.0).unwrap() - 1.0 / k as f64).abs() < 1e-12);
        }
        assert!(hit_probability_exact(1, 0.0).is_err());
        assert!(scale_function(3, -1.0).is_err());
    }

    #[test]
    fn scale_function_solves_harmonic_recurrence() {
        // s(i+1) - s(i) = i/(i+θ) (s(i) - s(i-1)).
        for &theta in &[-0.5, 0.0, 0.3, 0.9] {
            for i in 1..30u64 {
                let d_next = scale_function(i + 1, theta).unwrap() - scale_function(i, theta).unwrap();
                let d = scale_function(i, theta).unwrap()
                    - if i == 1 {
                        0.0
                    } else {
                        scale_function(i - 1, theta).unwrap()
                    };
                assert!((d_next - i as f64 / (i as f64 + theta) * d).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn scale_function_asymptotics() {
        let theta = 0.5;
        let lead = |k: u64| ln_gamma(1.0 + theta).exp() / (1.0 - theta) * (k as f64).powf(1.0 - theta);
        let r4 = scale_function(10_000, theta).unwrap() / lead(10_000);
        let r3 = scale_function(1_000, theta).unwrap() / lead(1_000);
        assert!((r4 - 1.0).abs() < 0.02, "ratio {r4}");
        assert!((r4 / r3 - 1.0).abs() < 0.02);
        assert!(scale_function(100_000, 0.2).unwrap().is_finite());
    }

    #[test]
    fn hit_probability_matches_monte_carlo() {
        let mut rng = stream(6, 0);
        let reps = 100_000;
        let exact = hit_probability_exact(5, -0.5).unwrap();
        let hits = (0..reps).filter(|_| hits_level_before_zero(5, -0.5, &mut rng)).count() as f64;
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!((hits / reps as f64 - exact).abs() < 3.0 * se);
    }

    #[test]
    fn rescaling_examples() {
        let c = ChainPath::constant(6, 10.0);
        let r = rescale_chain(&c, 3);
        assert_eq!(r.value_at(1.0), 2.0);
        let mut rng = stream(7, 0);
        let p = simulate_updown(4, 0.2, 5.0, &mut rng).unwrap();
        let r1 = rescale_chain(&p, 1);
        for &t in &[0.1, 0.7, 1.9] {
            assert_eq!(r1.value_at(t), p.state_at(2.0 * t) as f64);
        }
        let r5 = rescale_chain(&p, 5);
        assert_eq!(r5.sup(), p.max_state() as f64 / 5.0);
    }

    #[test]
    fn gamma_marginal_basics() {
        let g = besq_gamma_marginal(0.8, 0.5).unwrap();
        assert!((g.mean() - 2.0 * 0.5 * 0.8).abs() < 1e-12);
        assert_eq!(g.cdf(0.0), 0.0);
        let e = besq_gamma_marginal(1.0, 0.5).unwrap();
        for &x in &[0.1, 1.0, 3.0] {
            assert!((e.cdf(x) - (1.0 - (-x).exp())).abs() < 1e-12);
        }
        assert!(besq_gamma_marginal(0.0, 1.0).is_err());
    }

    #[test]
    fn hitting_time_closed_form_at_theta_zero() {
        let mut rng = stream(8, 0);
        assert!(besq_hitting_time_sample(1.0, 1.0, &mut rng).is_err());
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| besq_hitting_time_sample(1.0, 0.0, &mut rng).unwrap())
            .collect();
        xs.sort_by(f64::total_cmp);
        let mut d = 0.0_f64;
        for (i, &x) in xs.iter().enumerate() {
            let f = (-1.0 / (2.0 * x)).exp();
            assert!((besq_hitting_time_cdf(1.0, 0.0, x) - f).abs() < 1e-12);
            d = d
                .max((f - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(d < 0.01, "KS distance {d}");
    }

    #[test]
    fn hitting_time_scales_with_mass() {
        let mut a = stream(9, 0);
        let mut b = stream(9, 0);
        for _ in 0..100 {
            let x = besq_hitting_time_sample(1.0, 0.3, &mut a).unwrap();
            let y = besq_hitting_time_sample(3.0, 0.3, &mut b).unwrap();
            assert!((3.0 * x - y).abs() < 1e-9 * y);
        }
    }

    #[test]
    fn euler_mean_and_absorption() {
        let mut rng = stream(10, 0);
        assert_eq!(besq_euler(0.0, -1.0, 1.0, 1e-3, &mut rng), 0.0);
        let reps = 20_000;
        let mean = (0..reps)
            .map(|_| besq_euler(1.0, 1.5, 0.5, 1e-3, &mut rng))
            .sum::<f64>()
            / reps as f64;
        // Var Z(0.5) is below 10 here, so 4 standard errors is well under 0.1.
        assert!((mean - 1.75).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn euler_absorption_matches_hitting_law() {
        let mut rng = stream(11, 0);
        let n = 10_000;
        let t_max = 20.0;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| besq_euler_absorption_time(1.0, -1.0, 1e-4, t_max, &mut rng).unwrap_or(f64::INFINITY))
            .collect();
        xs.sort_by(f64::total_cmp);
        let mut d = 0.0_f64;
        for (i, &x) in xs.iter().enumerate() {
            let f = if x.is_finite() {
                besq_hitting_time_cdf(1.0, -0.5, x)
            } else {
                1.0
            };
            if x.is_finite() {
                d = d
                    .max((f - i as f64 / n as f64).abs())
                    .max(((i + 1) as f64 / n as f64 - f).abs());
            }
        }
        assert!(d < 0.02, "KS distance {d}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn path_jumps_balance(k in 0u64..20, theta in -0.9f64..2.0, seed in any::<u64>()) {
            let mut rng = stream(seed, 0);
            let p = simulate_updown(k, theta, 3.0, &mut rng).unwrap();
            let (up, down) = p.jump_counts();
            prop_assert_eq!(p.final_state() as i64 - k as i64, up as i64 - down as i64);
            let mut prev = k;
            let mut last_t = 0.0;
            for &(t, s) in &p.events {
                prop_assert!(t > last_t);
                prop_assert_eq!((s as i64 - prev as i64).abs(), 1);
                if prev == 0 {
                    prop_assert!(theta > 0.0);
                }
                prev = s;
                last_t = t;
            }
        }

        #[test]
        fn scale_function_increasing(theta in -0.9f64..3.0, k in 1u64..200) {
            prop_assert!(scale_function(k + 1, theta).unwrap() > scale_function(k, theta).unwrap());
        }
    }
}
