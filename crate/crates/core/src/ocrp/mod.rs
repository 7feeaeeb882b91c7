//! Discrete-time ordered Chinese restaurant process.

mod exact;
mod pdip;

pub use exact::{
    check_sampling_consistency, decrement, dirichlet_multinomial, enumerate_bruteforce_law, exact_law, ExactLaw,
    MAX_BRUTEFORCE_N, MAX_EXACT_N,
};
pub use pdip::{gem_sticks, paintbox, sample_pd_ranked, sample_pdip, structural_pdip, DEFAULT_RESOLUTION};

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::partition::Composition;

/// Parameters of the two-sided seating rule: discount `alpha`, left
/// weight `theta1`, right weight `theta2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrpParams {
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl CrpParams {
    pub fn new(alpha: f64, theta1: f64, theta2: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        if !(theta1 >= 0.0 && theta1.is_finite()) || !(theta2 >= 0.0 && theta2.is_finite()) {
            return Err(invalid(format!(
                "left/right weights must be finite and non-negative, got ({theta1}, {theta2})"
            )));
        }
        Ok(Self { alpha, theta1, theta2 })
    }

    /// Net immigration parameter `theta1 + theta2 - alpha`.
    pub fn theta(&self) -> f64 {
        self.theta1 + self.theta2 - self.alpha
    }

    /// The mirror-image rule.
    pub fn reversed(&self) -> Self {
        Self {
            alpha: self.alpha,
            theta1: self.theta2,
            theta2: self.theta1,
        }
    }
}

/// Where an arriving customer sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seat {
    /// Joins the table at this index.
    Join(usize),
    /// Opens a new leftmost table.
    Left,
    /// Opens a new rightmost table.
    Right,
    /// Opens a new table between tables `i` and `i + 1`.
    Gap(usize),
}

/// The individual seating weights at state `c`. They sum to `n + θ`:
/// `Σ(m_i - α) + θ₁ + θ₂ + (k - 1)α = n - kα + θ₁ + θ₂ + (k - 1)α`.
pub fn seating_weights(c: &Composition, p: &CrpParams) -> Vec<(Seat, f64)> {
    let k = c.len();
    let mut out = Vec::with_capacity(2 * k + 1);
    for (i, &m) in c.parts().iter().enumerate() {
        out.push((Seat::Join(i), m as f64 - p.alpha));
    }
    out.push((Seat::Left, p.theta1));
    out.push((Seat::Right, p.theta2));
    for i in 0..k.saturating_sub(1) {
        out.push((Seat::Gap(i), p.alpha));
    }
    out
}

/// Applies a seating decision to `c` in place.
pub fn apply_seat(c: &mut Composition, seat: Seat) {
    let parts = c.parts_mut();
    match seat {
        Seat::Join(i) => parts[i] += 1,
        Seat::Left => parts.insert(0, 1),
        Seat::Right => parts.push(1),
        Seat::Gap(i) => parts.insert(i + 1, 1),
    }
}

/// Draws a seat by inversion of the weight list.
pub fn choose_seat<R: Rng + ?Sized>(c: &Composition, p: &CrpParams, rng: &mut R) -> Seat {
    let n = c.total() as f64;
    let mut u = rng.random::<f64>() * (n + p.theta());
    let weights = seating_weights(c, p);
    for &(seat, w) in &weights {
        if u < w {
            return seat;
        }
        u -= w;
    }
    // Rounding left `u` marginally above the last threshold: take the last
    // seat of positive weight.
    weights
        .iter()
        .rev()
        .find(|(_, w)| *w > 0.0)
        .map(|(s, _)| *s)
        .expect("at least one seat has positive weight")
}

/// One customer arrives and is seated by the two-sided rule.
pub fn seat_next<R: Rng + ?Sized>(c: &Composition, p: &CrpParams, rng: &mut R) -> Result<Composition> {
    if c.is_empty() {
        return Err(Error::EmptyComposition);
    }
    let mut out = c.clone();
    apply_seat(&mut out, choose_seat(c, p, rng));
    Ok(out)
}

/// Exact transition law of [`seat_next`], aggregated over seats leading to
/// the same composition.
pub fn seat_next_law(c: &Composition, p: &CrpParams) -> Vec<(Composition, f64)> {
    let norm = c.total() as f64 + p.theta();
    let mut out: Vec<(Composition, f64)> = Vec::new();
    for (seat, w) in seating_weights(c, p) {
        if w <= 0.0 {
            continue;
        }
        let mut next = c.clone();
        apply_seat(&mut next, seat);
        match out.iter_mut().find(|(x, _)| *x == next) {
            Some(entry) => entry.1 += w / norm,
            None => out.push((next, w / norm)),
        }
    }
    out
}

/// Removes one customer chosen uniformly; an emptied table disappears.
pub fn down_step<R: Rng + ?Sized>(c: &Composition, rng: &mut R) -> Result<Composition> {
    if c.is_empty() {
        return Err(Error::EmptyComposition);
    }
    let mut u = rng.random_range(0..c.total());
    let mut out = c.clone();
    let parts = out.parts_mut();
    let mut idx = 0;
    while u >= parts[idx] {
        u -= parts[idx];
        idx += 1;
    }
    remove_from_table(parts, idx);
    Ok(out)
}

fn remove_from_table(parts: &mut Vec<u64>, idx: usize) {
    parts[idx] -= 1;
    if parts[idx] == 0 {
        parts.remove(idx);
    }
}

/// Exact law of [`down_step`].
pub fn down_step_law(c: &Composition) -> Vec<(Composition, f64)> {
    let n = c.total() as f64;
    let mut out: Vec<(Composition, f64)> = Vec::new();
    for (i, &m) in c.parts().iter().enumerate() {
        let mut parts = c.parts().to_vec();
        remove_from_table(&mut parts, i);
        let next = Composition::from_vec_unchecked(parts);
        match out.iter_mut().find(|(x, _)| *x == next) {
            Some(entry) => entry.1 += m as f64 / n,
            None => out.push((next, m as f64 / n)),
        }
    }
    out
}

/// Grows a composition from a single customer to `n` customers.
pub fn sample_ocrp<R: Rng + ?Sized>(n: u64, p: &CrpParams, rng: &mut R) -> Composition {
    if n == 0 {
        return Composition::empty();
    }
    let mut c = Composition::single(1);
    for _ in 1..n {
        let seat = choose_seat(&c, p, rng);
        apply_seat(&mut c, seat);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::chi_square_gof;
    use proptest::prelude::*;

    fn law_of(c: &Composition, p: &CrpParams, target: &Composition) -> f64 {
        seat_next_law(c, p)
            .into_iter()
            .find(|(x, _)| x == target)
            .map_or(0.0, |e| e.1)
    }

    #[test]
    fn seating_hand_values() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let one = Composition::single(1);
        assert!((law_of(&one, &p, &Composition::single(2)) - 1.0 / 3.0).abs() < 1e-15);
        let pair = Composition::new(vec![1, 1]).unwrap();
        assert!((law_of(&one, &p, &pair) - 2.0 / 3.0).abs() < 1e-15);

        let q = CrpParams::new(0.5, 0.0, 0.0).unwrap();
        let gap_seat = seating_weights(&pair, &q)
            .into_iter()
            .find(|(s, _)| *s == Seat::Gap(0))
            .unwrap()
            .1;
        let norm = pair.total() as f64 + q.theta();
        assert!((gap_seat / norm - 0.5 / 1.5).abs() < 1e-15);
        // With no outer weights the only route to three tables is the gap.
        let triple = Composition::new(vec![1, 1, 1]).unwrap();
        assert!((law_of(&pair, &q, &triple) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_composition_is_rejected() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let mut rng = stream(1, 0);
        assert!(matches!(
            seat_next(&Composition::empty(), &p, &mut rng),
            Err(Error::EmptyComposition)
        ));
        assert!(down_step(&Composition::empty(), &mut rng).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(CrpParams::new(1.0, 0.0, 0.0).is_err());
        assert!(CrpParams::new(-0.1, 0.0, 0.0).is_err());
        assert!(CrpParams::new(0.5, -0.1, 0.0).is_err());
        assert!(CrpParams::new(0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn down_step_examples() {
        let mut rng = stream(2, 0);
        assert_eq!(
            down_step(&Composition::single(1), &mut rng).unwrap(),
            Composition::empty()
        );
        let c = Composition::new(vec![2, 1]).unwrap();
        let law = down_step_law(&c);
        let p11 = law.iter().find(|(x, _)| x.parts() == [1, 1]).unwrap().1;
        let p2 = law.iter().find(|(x, _)| x.parts() == [2]).unwrap().1;
        assert!((p11 - 2.0 / 3.0).abs() < 1e-15 && (p2 - 1.0 / 3.0).abs() < 1e-15);
        let reps = 30_000;
        let hits = (0..reps)
            .filter(|_| down_step(&c, &mut rng).unwrap().parts() == [1, 1])
            .count() as f64;
        let se = (2.0 / 9.0 / reps as f64).sqrt();
        assert!((hits / reps as f64 - 2.0 / 3.0).abs() < 4.0 * se);
    }

    #[test]
    fn sampled_seating_matches_its_law() {
        let p = CrpParams::new(0.25, 0.3, 1.0).unwrap();
        let c = Composition::new(vec![3, 1, 2]).unwrap();
        let law = seat_next_law(&c, &p);
        let mut rng = stream(3, 0);
        let mut counts = vec![0u64; law.len()];
        for _ in 0..100_000 {
            let next = seat_next(&c, &p, &mut rng).unwrap();
            let i = law.iter().position(|(x, _)| *x == next).unwrap();
            counts[i] += 1;
        }
        let probs: Vec<f64> = law.iter().map(|e| e.1).collect();
        let chi = chi_square_gof(&counts, &probs).unwrap();
        assert!(chi.p_value() > 1e-3, "{chi:?}");
    }

    proptest! {
        #[test]
        fn weights_sum_to_normalizer(
            parts in prop::collection::vec(1u64..9, 1..8),
            alpha in 0.0f64..0.99,
            t1 in 0.0f64..3.0,
            t2 in 0.0f64..3.0,
        ) {
            let c = Composition::new(parts).unwrap();
            let p = CrpParams::new(alpha, t1, t2).unwrap();
            let k = c.len() as f64;
            let n = c.total() as f64;
            // Symbolic identity, term by term.
            let lhs = (n - k * alpha) + t1 + t2 + (k - 1.0) * alpha;
            prop_assert!((lhs - (n + p.theta())).abs() < 1e-12);
            let s: f64 = seating_weights(&c, &p).iter().map(|e| e.1).sum();
            prop_assert!((s - (n + p.theta())).abs() < 1e-9);
            let total: f64 = seat_next_law(&c, &p).iter().map(|e| e.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (next, _) in seat_next_law(&c, &p) {
                prop_assert_eq!(next.total(), c.total() + 1);
            }
        }

        #[test]
        fn down_step_removes_one(parts in prop::collection::vec(1u64..9, 1..8), seed in any::<u64>()) {
            let c = Composition::new(parts).unwrap();
            let mut rng = stream(seed, 0);
            let d = down_step(&c, &mut rng).unwrap();
            prop_assert_eq!(d.total() + 1, c.total());
            let total: f64 = down_step_law(&c).iter().map(|e| e.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
