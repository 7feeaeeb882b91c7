//! Parameterized Monte Carlo checks shared by the acceptance suite and the
//! command line.
//!
//! Replicate `i` of every sampled quantity draws from its own stream keyed
//! by `(seed, label, i)`, and results are merged in replicate order, so
//! every report depends on the seed alone and not on the worker count.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use statrs::function::gamma::gamma as gamma_fn;

use crate::error::{invalid, Result};
use crate::nested::tree::LabeledTree;
use crate::nested::{nested_ocrp, nested_pcrp_marginals, NestedPair};
use crate::ocrp::{exact_law, sample_ocrp, sample_pd_ranked, sample_pdip, CrpParams};
use crate::partition::{ranked_masses, Composition};
use crate::pcrp::pcrp_marginals;
use crate::rng::{labeled_stream, SimRng};
use crate::scaffold::{immigration_composite, pcrp_via_clades};
use crate::stats::{
    chi_square_gof_map, chi_square_homogeneity, ks_one_sample, ks_one_sample_capped, ks_two_sample, ChiSquare,
    TestReport,
};
use crate::updown::{
    absorption_time_capped, besq_hitting_time_cdf, hit_probability_exact, hits_level_before_zero, updown_state_at,
    ChainOptions, GammaLaw,
};

/// Runs `f` on replicates `0..reps`, each with its own labeled stream,
/// and returns the results in replicate order.
pub fn replicates<T, F>(seed: u64, label: &str, reps: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut SimRng) -> Result<T> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|i| f(&mut labeled_stream(seed, label, i)))
        .collect()
}

/// Counts occurrences of each item.
pub fn tally<K: Ord, I: IntoIterator<Item = K>>(items: I) -> BTreeMap<K, u64> {
    let mut counts = BTreeMap::new();
    for k in items {
        *counts.entry(k).or_insert(0) += 1;
    }
    counts
}

fn homogeneity(name: &str, a: Vec<Composition>, b: Vec<Composition>, seed: u64) -> Result<TestReport> {
    let n = (a.len() + b.len()) as u64;
    Ok(chi_square_homogeneity(&tally(a), &tally(b))?.report(name, n, seed))
}

/// Frequency with which the jump chain from 1 reaches `k` before 0,
/// against the inverse scale function. The statistic is the distance in
/// binomial standard errors; the check passes below 3.
pub fn hitting_frequency(k: u64, theta: f64, reps: u64, seed: u64) -> Result<TestReport> {
    if reps == 0 {
        return Err(invalid("replicates must be positive"));
    }
    let label = format!("hit k={k} theta={theta}");
    let hits = replicates(seed, &label, reps, |rng| Ok(hits_level_before_zero(k, theta, rng)))?;
    let freq = hits.iter().filter(|&&h| h).count() as f64 / reps as f64;
    let exact = hit_probability_exact(k, theta)?;
    let se = (exact * (1.0 - exact) / reps as f64).sqrt();
    let z = if se > 0.0 {
        (freq - exact).abs() / se
    } else if freq == exact {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(TestReport::from_tolerance(label, z, 3.0, reps, seed))
}

/// Composition at `level` of skewered clades started from `start` against
/// the restaurant with left weight 0 and right weight `alpha` at the same
/// time.
pub fn clades_vs_restaurant(start: &Composition, alpha: f64, level: f64, reps: u64, seed: u64) -> Result<TestReport> {
    let clades = replicates(seed, "clades", reps, |rng| {
        Ok(pcrp_via_clades(start, alpha, &[level], rng)?.remove(0))
    })?;
    let p = CrpParams::new(alpha, 0.0, alpha)?;
    let direct = replicates(seed, "clades direct", reps, |rng| {
        Ok(pcrp_marginals(start, &p, &[level], false, rng)?.remove(0))
    })?;
    homogeneity("clades vs restaurant", clades, direct, seed)
}

/// Left immigration of height `level` followed by clades of `start`,
/// against the restaurant with left weight `theta1` and right weight
/// `alpha`.
pub fn composite_vs_restaurant(
    start: &Composition,
    theta1: f64,
    alpha: f64,
    level: f64,
    reps: u64,
    seed: u64,
) -> Result<TestReport> {
    let composite = replicates(seed, "composite", reps, |rng| {
        Ok(immigration_composite(start, theta1, alpha, level, &[level], rng)?.remove(0))
    })?;
    let p = CrpParams::new(alpha, theta1, alpha)?;
    let direct = replicates(seed, "composite direct", reps, |rng| {
        Ok(pcrp_marginals(start, &p, &[level], false, rng)?.remove(0))
    })?;
    homogeneity("immigration composite vs restaurant", composite, direct, seed)
}

/// Restaurant started from an exact sample of size `start_n`, observed at
/// time `t`: for each mass in `2..=max_mass`, the conditional composition
/// law against the exact law, followed by the sum of these statistics.
pub fn pseudo_stationarity(
    p: &CrpParams,
    start_n: u64,
    t: f64,
    max_mass: u64,
    reps: u64,
    seed: u64,
) -> Result<Vec<TestReport>> {
    let ends = replicates(seed, "pseudo-stationary", reps, |rng| {
        let start = sample_ocrp(start_n, p, rng);
        Ok(pcrp_marginals(&start, p, &[t], false, rng)?.remove(0))
    })?;
    let mut by_mass: BTreeMap<u64, Vec<Composition>> = BTreeMap::new();
    for c in ends {
        by_mass.entry(c.total()).or_default().push(c);
    }
    let mut parts = Vec::new();
    let mut out = Vec::new();
    for m in 2..=max_mass {
        let sample = by_mass.remove(&m).unwrap_or_default();
        let n = sample.len() as u64;
        let chi = chi_square_gof_map(&tally(sample), &exact_law(m, p)?.table)?;
        out.push(chi.report(&format!("mass {m}"), n, seed));
        parts.push(chi);
    }
    out.push(ChiSquare::combine(&parts).report(&format!("masses 2 to {max_mass} combined"), reps, seed));
    Ok(out)
}

/// Scaled survival `Γ(1+θ)/(1−θ) n^(1−θ) P(ζ > 2nt)` of mass excursions
/// from 1 against its limit `t^(θ−1) / (2^(1−θ) Γ(2−θ))`. The statistic is
/// the relative error; the check passes below `tolerance`.
pub fn excursion_scaling(theta: f64, n: f64, t: f64, reps: u64, tolerance: f64, seed: u64) -> Result<TestReport> {
    if !(theta < 1.0) || reps == 0 {
        return Err(invalid("excursion scaling needs θ < 1 and positive replicates"));
    }
    let alive = replicates(seed, "excursion", reps, |rng| {
        Ok(absorption_time_capped(1, theta, 2.0 * n * t, rng)?.is_none())
    })?;
    let frac = alive.iter().filter(|&&a| a).count() as f64 / reps as f64;
    let scaled = gamma_fn(1.0 + theta) / (1.0 - theta) * n.powf(1.0 - theta) * frac;
    let target = t.powf(theta - 1.0) / (2.0_f64.powf(1.0 - theta) * gamma_fn(2.0 - theta));
    let rel = (scaled - target).abs() / target;
    Ok(TestReport::from_tolerance(
        "relative error of scaled survival",
        rel,
        tolerance,
        reps,
        seed,
    ))
}

/// Mass at time `2nt` from one customer, divided by `n` after adding a
/// uniform jitter on `[0, 1)` to remove the lattice, against the Gamma
/// entrance law with shape `θ` and rate `1/(2t)`.
pub fn entrance_law(theta: f64, n: f64, t: f64, reps: u64, seed: u64) -> Result<TestReport> {
    if !(theta > 0.0) {
        return Err(invalid("the entrance law needs θ > 0"));
    }
    let opts = ChainOptions::default();
    let masses = replicates(seed, "entrance", reps, |rng| {
        let z = updown_state_at(1, theta, 2.0 * n * t, opts, rng)?;
        let jitter: f64 = rng.random();
        Ok((z as f64 + jitter) / n)
    })?;
    let law = GammaLaw {
        shape: theta,
        rate: 1.0 / (2.0 * t),
    };
    ks_one_sample("rescaled mass vs Gamma", &masses, |x| law.cdf(x), seed)
}

/// Absorption time of the mass chain from `n`, divided by `2n`, against
/// `1/(2G)` with `G ~ Gamma(1−θ, 1)`. Runs are censored at rescaled time
/// `cap` and the KS supremum is taken below it.
pub fn absorption_law(theta: f64, n: u64, cap: f64, reps: u64, seed: u64) -> Result<TestReport> {
    if !(theta < 1.0) {
        return Err(invalid("the absorption law needs θ < 1"));
    }
    let scale = 2.0 * n as f64;
    let times = replicates(seed, "absorption", reps, |rng| {
        Ok(absorption_time_capped(n, theta, cap * scale, rng)?.map_or(f64::INFINITY, |z| z / scale))
    })?;
    let cdf = |x: f64| besq_hitting_time_cdf(1.0, theta, x);
    ks_one_sample_capped("rescaled absorption time", &times, cdf, cap, seed)
}

/// Largest and second-largest block of the rescaled restaurant against
/// ranked stick-breaking masses with parameters `(α, θ₁+θ₂−α)`.
pub fn ranked_lengths(p: &CrpParams, resolution: u64, reps: u64, seed: u64) -> Result<Vec<TestReport>> {
    let sampled = replicates(seed, "restaurant ranked", reps, |rng| {
        Ok(ranked_masses(&sample_pdip(p, resolution, rng)?, 2))
    })?;
    let oracle = replicates(seed, "stick-breaking ranked", reps, |rng| {
        sample_pd_ranked(p.alpha, p.theta(), 2, rng)
    })?;
    let column =
        |rows: &[Vec<f64>], k: usize| -> Vec<f64> { rows.iter().map(|r| r.get(k).copied().unwrap_or(0.0)).collect() };
    Ok(vec![
        ks_two_sample("largest", &column(&sampled, 0), &column(&oracle, 0), seed)?,
        ks_two_sample("second largest", &column(&sampled, 1), &column(&oracle, 1), seed)?,
    ])
}

/// Fine composition of nested restaurants of size `n` against the exact
/// law with the combined parameters.
pub fn nested_fine_law(coarse: &CrpParams, fine: &CrpParams, n: u64, reps: u64, seed: u64) -> Result<TestReport> {
    let combined = CrpParams::new(fine.alpha, fine.theta1 + coarse.theta1, fine.theta2 + coarse.theta2)?;
    let fines = replicates(seed, &format!("nested n={n}"), reps, |rng| {
        Ok(nested_ocrp(n, coarse, fine, rng)?.fine().clone())
    })?;
    let chi = chi_square_gof_map(&tally(fines), &exact_law(n, &combined)?.table)?;
    Ok(chi.report(&format!("nested fine law n={n}"), reps, seed))
}

/// Fine composition of the nested up-down pair at time `t` against a
/// directly simulated restaurant with parameters
/// `(α, θ₁ + coarse_theta, θ₂ + coarse_alpha)`.
pub fn nested_path_marginal(
    start: &NestedPair,
    coarse_alpha: f64,
    coarse_theta: f64,
    fine: &CrpParams,
    t: f64,
    reps: u64,
    seed: u64,
) -> Result<TestReport> {
    let nested = replicates(seed, "nested path", reps, |rng| {
        Ok(
            nested_pcrp_marginals(start, coarse_alpha, coarse_theta, fine, &[t], rng)?
                .remove(0)
                .fine()
                .clone(),
        )
    })?;
    let direct_params = CrpParams::new(fine.alpha, fine.theta1 + coarse_theta, fine.theta2 + coarse_alpha)?;
    let direct = replicates(seed, "nested path direct", reps, |rng| {
        Ok(pcrp_marginals(start.fine(), &direct_params, &[t], false, rng)?.remove(0))
    })?;
    homogeneity("nested path fine marginal vs restaurant", nested, direct, seed)
}

/// Spinal coarse and fine compositions of trees grown to `n` leaves
/// against their exact laws of size `n − 1`.
pub fn tree_spinal_laws(alpha: f64, gamma: f64, n: usize, reps: u64, seed: u64) -> Result<Vec<TestReport>> {
    if n < 2 {
        return Err(invalid("spinal laws need at least two leaves"));
    }
    let label = format!("tree alpha={alpha} gamma={gamma}");
    let pairs = replicates(seed, &label, reps, |rng| {
        LabeledTree::grow(n, alpha, gamma, rng)?.spinal_decomposition()
    })?;
    let m = n as u64 - 1;
    let coarse_law = exact_law(m, &CrpParams::new(gamma, 1.0 - alpha, gamma)?)?;
    let fine_law = exact_law(m, &CrpParams::new(alpha, 1.0 - alpha, alpha)?)?;
    let coarse = tally(pairs.iter().map(|p| p.coarse().clone()));
    let fine = tally(pairs.iter().map(|p| p.fine().clone()));
    Ok(vec![
        chi_square_gof_map(&coarse, &coarse_law.table)?.report(&format!("{label} coarse"), reps, seed),
        chi_square_gof_map(&fine, &fine_law.table)?.report(&format!("{label} fine"), reps, seed),
    ])
}
