//! Random interval partitions of unit mass: restaurant-limit samplers, the
//! paintbox, and the stick-breaking oracle for ranked masses.

use rand::Rng;

use super::CrpParams;
use crate::error::{invalid, Result};
use crate::partition::{concatenate, reverse, scale, Composition, IntervalPartition};
use crate::restaurant::Restaurant;
use crate::stats::{beta, dirichlet};

/// Default number of customers used to approximate a limit partition.
pub const DEFAULT_RESOLUTION: u64 = 100_000;

/// Runs the restaurant to `resolution` customers and rescales to unit
/// mass.
pub fn sample_pdip<R: Rng + ?Sized>(p: &CrpParams, resolution: u64, rng: &mut R) -> Result<IntervalPartition> {
    if resolution == 0 {
        return Err(invalid("resolution must be at least 1"));
    }
    let mut r = Restaurant::new();
    for _ in 0..resolution {
        r.seat(p, rng);
    }
    Ok(r.to_partition(resolution as f64))
}

/// Assembles a sample from a Dirichlet split into a left regenerative
/// part, a middle block, and a mirrored right regenerative part. Each
/// regenerative part is itself a restaurant limit at `resolution`.
pub fn structural_pdip<R: Rng + ?Sized>(p: &CrpParams, resolution: u64, rng: &mut R) -> Result<IntervalPartition> {
    if resolution == 0 {
        return Err(invalid("resolution must be at least 1"));
    }
    let w = dirichlet(&[p.theta1, 1.0 - p.alpha, p.theta2], rng)?;
    let mut pieces = Vec::with_capacity(3);
    if w[0] > 0.0 {
        let left = CrpParams::new(p.alpha, p.theta1, p.alpha)?;
        pieces.push(scale(w[0], &sample_pdip(&left, resolution, rng)?)?);
    }
    if w[1] > 0.0 {
        pieces.push(IntervalPartition::from_blocks(vec![(0.0, w[1])])?);
    }
    if w[2] > 0.0 {
        let right = CrpParams::new(p.alpha, p.theta2, p.alpha)?;
        pieces.push(reverse(&scale(w[2], &sample_pdip(&right, resolution, rng)?)?));
    }
    Ok(concatenate(&pieces))
}

/// Drops `n` uniform points on a unit-mass partition and counts them per
/// block, left to right. Points landing outside every block (a null event
/// for partitions whose blocks tile `[0, 1]`) are not counted.
pub fn paintbox<R: Rng + ?Sized>(gamma: &IntervalPartition, n: u64, rng: &mut R) -> Result<Composition> {
    if (gamma.total_mass() - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("paintbox needs unit mass, got {}", gamma.total_mass())));
    }
    let blocks = gamma.blocks();
    let mut counts = vec![0u64; blocks.len()];
    for _ in 0..n {
        let u: f64 = rng.random();
        let idx = blocks.partition_point(|b| b.0 <= u);
        if idx > 0 && u < blocks[idx - 1].1 {
            counts[idx - 1] += 1;
        }
    }
    counts.retain(|&c| c > 0);
    Composition::new(counts)
}

fn check_two_param(alpha: f64, theta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) || !(theta > -alpha) {
        return Err(invalid(format!(
            "need 0 <= alpha < 1 and theta > -alpha, got ({alpha}, {theta})"
        )));
    }
    Ok(())
}

/// Stick-breaking masses in size-biased order, stopping once the unbroken
/// remainder drops below `tol`.
pub fn gem_sticks<R: Rng + ?Sized>(alpha: f64, theta: f64, tol: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_two_param(alpha, theta)?;
    let mut out = Vec::new();
    let mut rest = 1.0;
    let mut i = 1.0;
    while rest >= tol {
        let w = beta(1.0 - alpha, theta + i * alpha, rng)?;
        out.push(rest * w);
        rest *= 1.0 - w;
        i += 1.0;
    }
    Ok(out)
}

/// The `k` largest masses of a Poisson–Dirichlet sample, decreasing.
///
/// Sticks are broken until the remainder is below `1e-8`, or earlier once
/// the remainder is smaller than the current `k`-th largest stick, after
/// which no later stick can enter the top `k`.
pub fn sample_pd_ranked<R: Rng + ?Sized>(alpha: f64, theta: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    check_two_param(alpha, theta)?;
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let mut top: Vec<f64> = Vec::with_capacity(k + 1);
    let mut rest = 1.0;
    let mut i = 1.0;
    loop {
        let w = beta(1.0 - alpha, theta + i * alpha, rng)?;
        let stick = rest * w;
        rest *= 1.0 - w;
        i += 1.0;
        let pos = top.partition_point(|&x| x >= stick);
        if pos < k {
            top.insert(pos, stick);
            top.truncate(k);
        }
        if rest < 1e-8 || (top.len() == k && rest < top[k - 1]) {
            break;
        }
    }
    top.resize(k, 0.0);
    Ok(top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocrp::exact_law;
    use crate::partition::ranked_masses;
    use crate::rng::stream;
    use crate::stats::{chi_square_gof_map, ks_two_sample};
    use std::collections::BTreeMap;

    #[test]
    fn degenerate_parameters_give_single_block() {
        let p = CrpParams::new(0.5, 0.0, 0.0).unwrap();
        let mut rng = stream(1, 0);
        let one = IntervalPartition::from_blocks(vec![(0.0, 1.0)]).unwrap();
        assert_eq!(sample_pdip(&p, 1000, &mut rng).unwrap(), one);
        assert_eq!(structural_pdip(&p, 1000, &mut rng).unwrap(), one);
    }

    #[test]
    fn samples_have_unit_mass() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let mut rng = stream(2, 0);
        for _ in 0..20 {
            let a = sample_pdip(&p, 5000, &mut rng).unwrap();
            let b = structural_pdip(&p, 5000, &mut rng).unwrap();
            assert!((a.total_mass() - 1.0).abs() < 1e-12);
            assert!((b.total_mass() - 1.0).abs() < 1e-12);
            assert!((b.lengths().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    /// Left endpoint of the largest block. Unlike the first block, this
    /// has a non-degenerate limit when blocks accumulate at the left end.
    fn largest_positions<F>(reps: u64, mut f: F) -> Vec<f64>
    where
        F: FnMut(u64) -> IntervalPartition,
    {
        (0..reps)
            .map(|i| {
                let g = f(i);
                g.blocks()
                    .iter()
                    .max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
                    .map_or(0.0, |b| b.0)
            })
            .collect()
    }

    fn first_blocks<F>(reps: u64, mut f: F) -> Vec<f64>
    where
        F: FnMut(u64) -> IntervalPartition,
    {
        (0..reps).map(|i| f(i).first_block_mass()).collect()
    }

    #[test]
    fn restaurant_limit_matches_structural_assembly() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let xs = largest_positions(3000, |i| sample_pdip(&p, 5000, &mut stream(3, i)).unwrap());
        let ys = largest_positions(3000, |i| structural_pdip(&p, 5000, &mut stream(4, i)).unwrap());
        let r = ks_two_sample("position", &xs, &ys, 0).unwrap();
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn left_block_decomposition() {
        // A leading block of mass 1 - B followed by B times a regenerative
        // sample, B ~ Beta(α, 1 - α), has the one-sided law with no left
        // weight.
        let a = 0.5;
        let direct = CrpParams::new(a, 0.0, a).unwrap();
        let inner = CrpParams::new(a, a, a).unwrap();
        let reps = 3000;
        let xs = first_blocks(reps, |i| sample_pdip(&direct, 5000, &mut stream(5, i)).unwrap());
        let ys = first_blocks(reps, |i| {
            let mut rng = stream(6, i);
            let b = beta(a, 1.0 - a, &mut rng).unwrap();
            let tail = scale(b, &sample_pdip(&inner, 5000, &mut rng).unwrap()).unwrap();
            let head = IntervalPartition::from_blocks(vec![(0.0, 1.0 - b)]).unwrap();
            concatenate(&[head, tail])
        });
        let r = ks_two_sample("eq", &xs, &ys, 0).unwrap();
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn beta_split_decomposition() {
        // B' γ ⋆ (1 - B') β with B' ~ Beta(θ₁ - α, θ₂), γ with no right
        // weight, β with left weight α.
        let (a, t1, t2) = (0.5, 0.8, 0.7);
        let target = CrpParams::new(a, t1, t2).unwrap();
        let g = CrpParams::new(a, t1, 0.0).unwrap();
        let b = CrpParams::new(a, a, t2).unwrap();
        let reps = 3000;
        let xs = largest_positions(reps, |i| sample_pdip(&target, 5000, &mut stream(7, i)).unwrap());
        let ys = largest_positions(reps, |i| {
            let mut rng = stream(8, i);
            let w = beta(t1 - a, t2, &mut rng).unwrap();
            let left = scale(w, &sample_pdip(&g, 5000, &mut rng).unwrap()).unwrap();
            let right = scale(1.0 - w, &sample_pdip(&b, 5000, &mut rng).unwrap()).unwrap();
            concatenate(&[left, right])
        });
        let r = ks_two_sample("split", &xs, &ys, 0).unwrap();
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn paintbox_examples() {
        let mut rng = stream(9, 0);
        let one = IntervalPartition::from_blocks(vec![(0.0, 1.0)]).unwrap();
        assert_eq!(paintbox(&one, 7, &mut rng).unwrap(), Composition::single(7));
        let halves = IntervalPartition::from_blocks(vec![(0.0, 0.5), (0.5, 1.0)]).unwrap();
        for _ in 0..50 {
            assert_eq!(paintbox(&halves, 1, &mut rng).unwrap(), Composition::single(1));
        }
        let two = IntervalPartition::from_blocks(vec![(0.0, 2.0)]).unwrap();
        assert!(paintbox(&two, 3, &mut rng).is_err());
    }

    #[test]
    fn paintbox_mixture_reproduces_exact_law() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        for n in 2..=4u64 {
            let mut obs = BTreeMap::new();
            for i in 0..100_000u64 {
                let mut rng = stream(10 + n, i);
                let g = sample_pdip(&p, 2000, &mut rng).unwrap();
                *obs.entry(paintbox(&g, n, &mut rng).unwrap()).or_insert(0u64) += 1;
            }
            let chi = chi_square_gof_map(&obs, &exact_law(n, &p).unwrap().table).unwrap();
            assert!(chi.p_value() > 1e-3, "n={n}: {chi:?}");
        }
    }

    #[test]
    fn stick_breaking_properties() {
        let mut rng = stream(11, 0);
        let sticks = gem_sticks(0.5, 0.5, 1e-6, &mut rng).unwrap();
        let s: f64 = sticks.iter().sum();
        assert!((1.0 - s) < 1e-6 && s <= 1.0 + 1e-12);
        // First stick mean (1 - α)/(1 + θ).
        let (a, t) = (0.3, 5.0);
        let n = 50_000;
        let m = (0..n).map(|_| gem_sticks(a, t, 0.5, &mut rng).unwrap()[0]).sum::<f64>() / n as f64;
        let mean = (1.0 - a) / (1.0 + t);
        let var = mean * (1.0 - mean) / (2.0 + t);
        assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt());
        assert!(sample_pd_ranked(0.5, -0.6, 2, &mut rng).is_err());
    }

    #[test]
    fn early_stopping_agrees_with_full_breaking() {
        let reps = 5000;
        let early: Vec<f64> = (0..reps)
            .map(|i| sample_pd_ranked(0.5, 0.5, 2, &mut stream(12, i)).unwrap()[1])
            .collect();
        let full: Vec<f64> = (0..reps)
            .map(|i| {
                let mut s = gem_sticks(0.5, 0.5, 1e-4, &mut stream(13, i)).unwrap();
                s.sort_by(|a, b| b.total_cmp(a));
                s.get(1).copied().unwrap_or(0.0)
            })
            .collect();
        assert!(ks_two_sample("second", &early, &full, 0).unwrap().p_value > 1e-3);
        // Pathwise: identical streams give identical leading sticks.
        let a = sample_pd_ranked(0.5, 0.5, 3, &mut stream(14, 0)).unwrap();
        let mut b = gem_sticks(0.5, 0.5, 1e-4, &mut stream(14, 0)).unwrap();
        b.sort_by(|x, y| y.total_cmp(x));
        assert_eq!(a, b[..3].to_vec());
    }

    #[test]
    fn ranked_restaurant_masses_follow_stick_breaking() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let reps = 3000;
        let xs: Vec<f64> = (0..reps)
            .map(|i| ranked_masses(&sample_pdip(&p, 5000, &mut stream(15, i)).unwrap(), 1)[0])
            .collect();
        let ys: Vec<f64> = (0..reps)
            .map(|i| sample_pd_ranked(0.5, p.theta(), 1, &mut stream(16, i)).unwrap()[0])
            .collect();
        assert!(ks_two_sample("largest", &xs, &ys, 0).unwrap().p_value > 1e-3);
    }
}
