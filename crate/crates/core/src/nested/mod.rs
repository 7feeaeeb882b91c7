//! Coarse/fine pairs: the fragmentation kernel on interval partitions,
//! nested restaurants in discrete and continuous time, and the growth
//! chain on trees whose spinal decomposition is such a pair.

pub mod tree;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::ocrp::{apply_seat, choose_seat, structural_pdip, CrpParams, Seat};
use crate::partition::{ranked_masses, Composition, IntervalPartition};
use crate::rng::labeled_stream;
use crate::stats::{ks_two_sample, TestReport};
use crate::updown::DEFAULT_EVENT_BUDGET;

pub use tree::LabeledTree;

/// Tolerance for the parameter identities tying coarse and fine rules.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Smallest per-block resolution used by [`frag`].
pub const MIN_BLOCK_RESOLUTION: u64 = 64;

/// A composition together with a refinement of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NestedPair {
    coarse: Composition,
    fine: Composition,
}

impl NestedPair {
    pub fn new(coarse: Composition, fine: Composition) -> Result<Self> {
        if !refines(&coarse, &fine) {
            return Err(invalid(format!("{fine} does not refine {coarse}")));
        }
        Ok(Self { coarse, fine })
    }

    pub fn empty() -> Self {
        Self {
            coarse: Composition::empty(),
            fine: Composition::empty(),
        }
    }

    /// Builds the pair from the table sizes of each cluster.
    pub fn from_clusters(clusters: &[Composition]) -> Self {
        let coarse = Composition::from_vec_unchecked(clusters.iter().map(Composition::total).collect());
        let fine = Composition::from_vec_unchecked(clusters.iter().flat_map(|c| c.parts().iter().copied()).collect());
        Self { coarse, fine }
    }

    pub fn coarse(&self) -> &Composition {
        &self.coarse
    }

    pub fn fine(&self) -> &Composition {
        &self.fine
    }

    /// The fine parts grouped by coarse part.
    pub fn clusters(&self) -> Vec<Composition> {
        let mut out = Vec::with_capacity(self.coarse.len());
        let mut it = self.fine.parts().iter();
        for &m in self.coarse.parts() {
            let mut parts = Vec::new();
            let mut s = 0;
            while s < m {
                let x = *it.next().expect("refinement");
                parts.push(x);
                s += x;
            }
            out.push(Composition::from_vec_unchecked(parts));
        }
        out
    }
}

/// Whether every partial sum of `coarse` is a partial sum of `fine`, with
/// equal totals.
pub fn refines(coarse: &Composition, fine: &Composition) -> bool {
    if coarse.total() != fine.total() {
        return false;
    }
    let mut fine_sums = fine.parts().iter().scan(0u64, |s, &x| {
        *s += x;
        Some(*s)
    });
    let mut acc = 0;
    coarse.parts().iter().all(|&m| {
        acc += m;
        fine_sums.by_ref().any(|s| s == acc)
    })
}

/// Whether every endpoint of a `coarse` block is within `tol` of an
/// endpoint of a `fine` block, with equal masses.
pub fn is_refinement(coarse: &IntervalPartition, fine: &IntervalPartition, tol: f64) -> bool {
    if (coarse.total_mass() - fine.total_mass()).abs() > tol {
        return false;
    }
    let mut ends: Vec<f64> = fine.blocks().iter().flat_map(|b| [b.0, b.1]).collect();
    ends.sort_by(f64::total_cmp);
    let near = |x: f64| {
        let i = ends.partition_point(|&e| e < x);
        [i.wrapping_sub(1), i]
            .iter()
            .filter_map(|&j| ends.get(j))
            .any(|e| (e - x).abs() <= tol)
    };
    coarse.blocks().iter().all(|b| near(b.0) && near(b.1))
}

fn check_fragmentation_pair(coarse: &CrpParams, fine: &CrpParams) -> Result<()> {
    let gap = fine.theta1 + fine.theta2 + coarse.alpha - fine.alpha;
    if gap.abs() > IDENTITY_TOL {
        return Err(invalid(format!(
            "fine left + right weights + coarse discount must equal the fine discount (off by {gap:e})"
        )));
    }
    Ok(())
}

/// Splits every block independently by a scaled unit-mass sample with
/// rule `p`. A block of relative length `ℓ` is sampled at resolution
/// `max(⌈ℓ · resolution⌉, MIN_BLOCK_RESOLUTION)`.
pub fn frag<R: Rng + ?Sized>(
    beta: &IntervalPartition,
    p: &CrpParams,
    resolution: u64,
    rng: &mut R,
) -> Result<IntervalPartition> {
    let total = beta.total_mass();
    let mut blocks = Vec::new();
    for &(a, b) in beta.blocks() {
        let len = b - a;
        let res = ((resolution as f64 * len / total).ceil() as u64).max(MIN_BLOCK_RESOLUTION);
        let piece = structural_pdip(p, res, rng)?;
        let k = piece.blocks().len();
        for (i, &(x, y)) in piece.blocks().iter().enumerate() {
            let left = if i == 0 { a } else { a + len * x };
            let right = if i + 1 == k { b } else { a + len * y };
            // Sub-blocks below the spacing of doubles at this position vanish.
            if right > left {
                blocks.push((left, right));
            }
        }
    }
    IntervalPartition::new(blocks, total)
}

/// Grows a nested pair to `n` customers: clusters follow the coarse rule,
/// and an arrival that joins a cluster is seated among that cluster's
/// tables by the fine rule (a new cluster starts with one table).
pub fn nested_ocrp<R: Rng + ?Sized>(n: u64, coarse: &CrpParams, fine: &CrpParams, rng: &mut R) -> Result<NestedPair> {
    check_fragmentation_pair(coarse, fine)?;
    if n == 0 {
        return Ok(NestedPair::empty());
    }
    let mut sizes = Composition::single(1);
    let mut clusters = vec![Composition::single(1)];
    for _ in 1..n {
        let seat = choose_seat(&sizes, coarse, rng);
        apply_seat(&mut sizes, seat);
        match seat {
            Seat::Join(i) => {
                let inner = choose_seat(&clusters[i], fine, rng);
                apply_seat(&mut clusters[i], inner);
            }
            Seat::Left => clusters.insert(0, Composition::single(1)),
            Seat::Right => clusters.push(Composition::single(1)),
            Seat::Gap(i) => clusters.insert(i + 1, Composition::single(1)),
        }
    }
    Ok(NestedPair::from_clusters(&clusters))
}

/// The nested pair rescaled to unit mass.
pub fn nested_ocrp_partitions<R: Rng + ?Sized>(
    n: u64,
    coarse: &CrpParams,
    fine: &CrpParams,
    rng: &mut R,
) -> Result<(IntervalPartition, IntervalPartition)> {
    if n == 0 {
        return Err(invalid("need at least one customer"));
    }
    let pair = nested_ocrp(n, coarse, fine, rng)?;
    let s = 1.0 / n as f64;
    let to_ip = |c: &Composition| {
        let lengths: Vec<f64> = c.parts().iter().map(|&m| m as f64 * s).collect();
        IntervalPartition::from_lengths(&lengths)
    };
    Ok((to_ip(&pair.coarse)?, to_ip(&pair.fine)?))
}

/// Event-driven simulation of a nested pair of up-down restaurants.
///
/// Clusters evolve as an up-down restaurant with discount `ᾱ`, left weight
/// `θ̄` and right weight `ᾱ`; a cluster that gains a customer seats it by
/// the fine rule, and a departure removes a uniform customer.
#[derive(Clone, Debug)]
pub struct NestedSim {
    clusters: Vec<Composition>,
    sizes: Composition,
    coarse: CrpParams,
    fine: CrpParams,
    time: f64,
    pending: Option<f64>,
    events: u64,
    budget: u64,
}

impl NestedSim {
    pub fn new(start: &NestedPair, coarse_alpha: f64, coarse_theta: f64, fine: &CrpParams) -> Result<Self> {
        let coarse = CrpParams::new(coarse_alpha, coarse_theta, coarse_alpha)?;
        let gap = fine.theta() + coarse_alpha;
        if gap.abs() > IDENTITY_TOL {
            return Err(invalid(format!(
                "fine net weight must equal minus the coarse discount (off by {gap:e})"
            )));
        }
        Ok(Self {
            clusters: start.clusters(),
            sizes: start.coarse.clone(),
            coarse,
            fine: *fine,
            time: 0.0,
            pending: None,
            events: 0,
            budget: DEFAULT_EVENT_BUDGET,
        })
    }

    pub fn state(&self) -> NestedPair {
        NestedPair::from_clusters(&self.clusters)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Performs the next event if it happens no later than `until`.
    /// Returns `false` if the state is frozen or the next event is later.
    pub fn step_until<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) -> Result<bool> {
        let n = self.sizes.total() as f64;
        let rate = 2.0 * n + self.coarse.theta();
        if !(rate > 0.0) {
            self.time = until;
            return Ok(false);
        }
        let next = match self.pending {
            Some(t) => t,
            None => {
                let e: f64 = Exp1.sample(rng);
                let t = self.time + e / rate;
                self.pending = Some(t);
                t
            }
        };
        if next > until {
            self.time = until;
            return Ok(false);
        }
        self.pending = None;
        self.time = next;
        self.events += 1;
        if self.events > self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        if rng.random::<f64>() * rate < n + self.coarse.theta() {
            self.arrive(rng);
        } else {
            self.depart(rng);
        }
        Ok(true)
    }

    fn arrive<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.clusters.is_empty() {
            self.clusters.push(Composition::single(1));
            self.sizes = Composition::single(1);
            return;
        }
        let seat = choose_seat(&self.sizes, &self.coarse, rng);
        apply_seat(&mut self.sizes, seat);
        match seat {
            Seat::Join(i) => {
                let inner = choose_seat(&self.clusters[i], &self.fine, rng);
                apply_seat(&mut self.clusters[i], inner);
            }
            Seat::Left => self.clusters.insert(0, Composition::single(1)),
            Seat::Right => self.clusters.push(Composition::single(1)),
            Seat::Gap(i) => self.clusters.insert(i + 1, Composition::single(1)),
        }
    }

    fn depart<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut u = rng.random_range(0..self.sizes.total());
        let i = self
            .sizes
            .parts()
            .iter()
            .position(|&m| {
                if u < m {
                    true
                } else {
                    u -= m;
                    false
                }
            })
            .expect("customer index in range");
        let cluster = self.clusters[i].parts_mut();
        let j = cluster
            .iter()
            .position(|&m| {
                if u < m {
                    true
                } else {
                    u -= m;
                    false
                }
            })
            .expect("customer index in range");
        cluster[j] -= 1;
        if cluster[j] == 0 {
            cluster.remove(j);
        }
        let sizes = self.sizes.parts_mut();
        sizes[i] -= 1;
        if sizes[i] == 0 {
            sizes.remove(i);
            self.clusters.remove(i);
        }
    }

    /// Runs all events up to `until`.
    pub fn run_until<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) -> Result<()> {
        while self.step_until(until, rng)? {}
        Ok(())
    }
}

/// Right-continuous path of nested pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NestedPath {
    pub initial: NestedPair,
    pub events: Vec<(f64, NestedPair)>,
    pub horizon: f64,
}

impl NestedPath {
    pub fn state_at(&self, t: f64) -> &NestedPair {
        let idx = self.events.partition_point(|e| e.0 <= t);
        if idx == 0 {
            &self.initial
        } else {
            &self.events[idx - 1].1
        }
    }
}

/// Full path of the nested pair on `[0, horizon]`.
pub fn nested_pcrp<R: Rng + ?Sized>(
    start: &NestedPair,
    coarse_alpha: f64,
    coarse_theta: f64,
    fine: &CrpParams,
    horizon: f64,
    rng: &mut R,
) -> Result<NestedPath> {
    let mut sim = NestedSim::new(start, coarse_alpha, coarse_theta, fine)?;
    let mut events = Vec::new();
    while sim.step_until(horizon, rng)? {
        events.push((sim.time(), sim.state()));
    }
    Ok(NestedPath {
        initial: start.clone(),
        events,
        horizon,
    })
}

/// States at each of the increasing `times`, without storing the path.
pub fn nested_pcrp_marginals<R: Rng + ?Sized>(
    start: &NestedPair,
    coarse_alpha: f64,
    coarse_theta: f64,
    fine: &CrpParams,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<NestedPair>> {
    let mut sim = NestedSim::new(start, coarse_alpha, coarse_theta, fine)?;
    times
        .iter()
        .map(|&t| {
            sim.run_until(t, rng)?;
            Ok(sim.state())
        })
        .collect()
}

fn block_statistics(g: &IntervalPartition) -> (f64, f64) {
    (
        ranked_masses(g, 1).first().copied().unwrap_or(0.0),
        g.first_block_mass(),
    )
}

/// Compares the fine partition obtained by fragmenting a coarse sample
/// with a direct sample of the combined rule, by two-sample tests on the
/// largest-block and first-block masses. Replicate `i` of each side uses
/// its own stream derived from `seed`.
pub fn check_fragmentation_identity(
    coarse: &CrpParams,
    fine: &CrpParams,
    reps: u64,
    resolution: u64,
    seed: u64,
) -> Result<Vec<TestReport>> {
    check_fragmentation_pair(coarse, fine)?;
    let combined = CrpParams::new(fine.alpha, fine.theta1 + coarse.theta1, fine.theta2 + coarse.theta2)?;
    let fragmented: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = labeled_stream(seed, "frag-of-coarse", i);
            let c = structural_pdip(coarse, resolution, &mut rng)?;
            Ok(block_statistics(&frag(&c, fine, resolution, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let direct: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = labeled_stream(seed, "direct-fine", i);
            Ok(block_statistics(&structural_pdip(&combined, resolution, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let (a1, a2): (Vec<f64>, Vec<f64>) = fragmented.into_iter().unzip();
    let (b1, b2): (Vec<f64>, Vec<f64>) = direct.into_iter().unzip();
    Ok(vec![
        ks_two_sample("largest block", &a1, &b1, seed)?,
        ks_two_sample("first block", &a2, &b2, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocrp::exact_law;
    use crate::pcrp::pcrp_marginals;
    use crate::rng::stream;
    use crate::stats::{chi_square_gof_map, chi_square_homogeneity, ks_two_sample};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn c(v: &[u64]) -> Composition {
        Composition::new(v.to_vec()).unwrap()
    }

    #[test]
    fn refinement_examples() {
        assert!(refines(&c(&[3, 2]), &c(&[1, 2, 2])));
        assert!(refines(&c(&[3, 2]), &c(&[3, 2])));
        assert!(!refines(&c(&[3, 2]), &c(&[2, 3])));
        assert!(!refines(&c(&[3, 2]), &c(&[3, 1])));
        assert!(NestedPair::new(c(&[3, 2]), c(&[2, 3])).is_err());
        let pair = NestedPair::new(c(&[3, 2]), c(&[1, 2, 1, 1])).unwrap();
        assert_eq!(pair.clusters(), vec![c(&[1, 2]), c(&[1, 1])]);
        assert_eq!(NestedPair::from_clusters(&pair.clusters()), pair);
    }

    #[test]
    fn frag_with_no_outer_weights_is_identity() {
        let p = CrpParams::new(0.5, 0.0, 0.0).unwrap();
        let beta = IntervalPartition::from_lengths(&[0.2, 0.5, 0.3]).unwrap();
        let mut rng = stream(1, 0);
        assert_eq!(frag(&beta, &p, 1000, &mut rng).unwrap(), beta);
    }

    #[test]
    fn frag_preserves_mass_and_refines() {
        let p = CrpParams::new(0.5, 0.2, 0.3).unwrap();
        let q = CrpParams::new(0.3, 0.4, 0.1).unwrap();
        let mut rng = stream(2, 0);
        for _ in 0..50 {
            let beta = structural_pdip(&q, 500, &mut rng).unwrap();
            let f = frag(&beta, &p, 2000, &mut rng).unwrap();
            assert!((f.total_mass() - beta.total_mass()).abs() < 1e-12);
            assert!(is_refinement(&beta, &f, 1e-12));
            assert!(f.len() >= beta.len());
        }
    }

    #[test]
    fn nested_ocrp_rejects_broken_identity() {
        let coarse = CrpParams::new(0.25, 0.3, 0.25).unwrap();
        let fine = CrpParams::new(0.5, 0.1, 0.25).unwrap();
        assert!(nested_ocrp(3, &coarse, &fine, &mut stream(3, 0)).is_err());
    }

    #[test]
    fn nested_ocrp_marginals_are_exact() {
        let coarse = CrpParams::new(0.25, 0.3, 0.25).unwrap();
        let fine = CrpParams::new(0.5, 0.0, 0.25).unwrap();
        let combined = CrpParams::new(0.5, 0.3, 0.5).unwrap();
        let n = 4;
        let mut fine_obs = BTreeMap::new();
        let mut coarse_obs = BTreeMap::new();
        for i in 0..100_000 {
            let pair = nested_ocrp(n, &coarse, &fine, &mut stream(4, i)).unwrap();
            assert!(refines(pair.coarse(), pair.fine()));
            *fine_obs.entry(pair.fine().clone()).or_insert(0u64) += 1;
            *coarse_obs.entry(pair.coarse().clone()).or_insert(0u64) += 1;
        }
        let chi = chi_square_gof_map(&fine_obs, &exact_law(n, &combined).unwrap().table).unwrap();
        assert!(chi.p_value() > 1e-3, "{chi:?}");
        let chi = chi_square_gof_map(&coarse_obs, &exact_law(n, &coarse).unwrap().table).unwrap();
        assert!(chi.p_value() > 1e-3, "{chi:?}");
    }

    #[test]
    fn nested_pcrp_marginals_match_direct_restaurants() {
        let (ca, ct) = (0.25, 0.3);
        let fine = CrpParams::new(0.5, 0.1, 0.15).unwrap();
        let fine_direct = CrpParams::new(0.5, 0.4, 0.4).unwrap();
        let coarse_direct = CrpParams::new(ca, ct, ca).unwrap();
        let start = NestedPair::new(c(&[2, 1]), c(&[1, 1, 1])).unwrap();
        let reps = 40_000;
        let (mut nf, mut nc, mut df, mut dc) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
        for i in 0..reps {
            let s = &nested_pcrp_marginals(&start, ca, ct, &fine, &[0.5], &mut stream(5, i)).unwrap()[0];
            assert_eq!(s.coarse().total(), s.fine().total());
            *nf.entry(s.fine().clone()).or_insert(0u64) += 1;
            *nc.entry(s.coarse().clone()).or_insert(0u64) += 1;
            let d = pcrp_marginals(start.fine(), &fine_direct, &[0.5], false, &mut stream(6, i)).unwrap();
            *df.entry(d[0].clone()).or_insert(0u64) += 1;
            let d = pcrp_marginals(start.coarse(), &coarse_direct, &[0.5], false, &mut stream(7, i)).unwrap();
            *dc.entry(d[0].clone()).or_insert(0u64) += 1;
        }
        assert!(chi_square_homogeneity(&nf, &df).unwrap().p_value() > 1e-3);
        assert!(chi_square_homogeneity(&nc, &dc).unwrap().p_value() > 1e-3);
    }

    #[test]
    fn nested_path_keeps_refinement_and_cluster_walks() {
        let fine = CrpParams::new(0.5, 0.1, 0.15).unwrap();
        let start = NestedPair::new(c(&[3]), c(&[2, 1])).unwrap();
        let mut rng = stream(8, 0);
        let path = nested_pcrp(&start, 0.25, 0.3, &fine, 5.0, &mut rng).unwrap();
        let mut prev = start.clone();
        for (_, s) in &path.events {
            assert!(refines(s.coarse(), s.fine()));
            let d = s.fine().total() as i64 - prev.fine().total() as i64;
            assert_eq!(d.abs(), 1);
            prev = s.clone();
        }
        assert_eq!(path.state_at(0.0), &start);
        assert!(NestedSim::new(&start, 0.25, 0.3, &CrpParams::new(0.5, 0.1, 0.1).unwrap()).is_err());
    }

    #[test]
    fn degenerate_fragmentation_is_identity_in_law() {
        // No outer fine weights forces equal discounts, and the kernel
        // leaves every block whole.
        let coarse = CrpParams::new(0.5, 0.3, 0.2).unwrap();
        let fine = CrpParams::new(0.5, 0.0, 0.0).unwrap();
        let r = check_fragmentation_identity(&coarse, &fine, 2000, 2000, 9).unwrap();
        assert!(r.iter().all(|x| x.p_value > 1e-3), "{r:?}");
    }

    #[test]
    fn limit_of_nested_restaurants_is_fragmentation() {
        // Rescaled nested restaurants against a fragmented coarse sample.
        let coarse = CrpParams::new(0.25, 0.3, 0.25).unwrap();
        let fine = CrpParams::new(0.5, 0.0, 0.25).unwrap();
        let reps = 1000;
        let res = 10_000;
        let mut a = [Vec::new(), Vec::new(), Vec::new()];
        let mut b = [Vec::new(), Vec::new(), Vec::new()];
        for i in 0..reps {
            let (c1, f1) = nested_ocrp_partitions(res, &coarse, &fine, &mut stream(10, i)).unwrap();
            let mut rng = stream(11, i);
            let c2 = structural_pdip(&coarse, res, &mut rng).unwrap();
            let f2 = frag(&c2, &fine, res, &mut rng).unwrap();
            for (v, (c, f)) in [(&mut a, (&c1, &f1)), (&mut b, (&c2, &f2))] {
                v[0].push(ranked_masses(c, 1)[0]);
                v[1].push(ranked_masses(f, 1)[0]);
                v[2].push(ranked_masses(f, 2)[1]);
            }
        }
        for k in 0..3 {
            let r = ks_two_sample("pair", &a[k], &b[k], 0).unwrap();
            assert!(r.p_value > 1e-3, "{k}: {r:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn nested_operations_preserve_refinement(seed in any::<u64>(), n in 1u64..40) {
            let coarse = CrpParams::new(0.2, 0.5, 0.7).unwrap();
            let fine = CrpParams::new(0.6, 0.1, 0.3).unwrap();
            let mut rng = stream(seed, 0);
            let pair = nested_ocrp(n, &coarse, &fine, &mut rng).unwrap();
            prop_assert!(refines(pair.coarse(), pair.fine()));
            prop_assert_eq!(pair.fine().total(), n);
            let s = nested_pcrp_marginals(&pair, 0.2, 0.5, &CrpParams::new(0.6, 0.1, 0.3).unwrap(), &[0.3, 1.0], &mut rng).unwrap();
            for x in &s {
                prop_assert!(refines(x.coarse(), x.fine()));
            }
        }
    }
}
