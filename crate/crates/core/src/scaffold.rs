//! Scaffolding-and-spindles constructions of the up-down restaurant.
//!
//! A spindle is an excursion of the up-down chain with parameter `-α`; a
//! point measure of spindles in scaffolding time defines a scaffolding path
//! whose jumps are the spindle lifetimes. Cutting the picture at a level
//! (the skewer) yields a composition, and as the level rises these
//! compositions evolve like an up-down restaurant.
//!
//! Besides the literal constructions there are level-window samplers that
//! only generate what can be seen below a ceiling: since the scaffolding
//! has no negative jumps, it re-enters the window exactly at the ceiling,
//! and everything it does above the ceiling is invisible to the skewer.

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::partition::Composition;
use crate::updown::{simulate_updown_with, ChainOptions, ChainPath, DEFAULT_EVENT_BUDGET};

/// One excursion of the up-down chain with parameter `-α`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spindle {
    pub path: ChainPath,
    /// Absorption time, or infinity when the spindle outlived the window it
    /// was simulated on (`path.horizon`).
    pub lifetime: f64,
}

impl Spindle {
    /// Runs the chain from `m` until absorption or local time `window`.
    pub fn sample<R: Rng + ?Sized>(m: u64, alpha: f64, window: f64, budget: u64, rng: &mut R) -> Result<Self> {
        let opts = ChainOptions { killed: true, budget };
        let path = simulate_updown_with(m, -alpha, window, opts, rng)?;
        let lifetime = if path.final_state() == 0 {
            path.last_event_time()
        } else {
            f64::INFINITY
        };
        Ok(Self { path, lifetime })
    }

    pub fn is_complete(&self) -> bool {
        self.lifetime.is_finite()
    }

    /// Size at local time `t`; zero outside `[0, lifetime)`.
    pub fn value_at(&self, t: f64) -> u64 {
        if t < 0.0 || t >= self.lifetime {
            0
        } else {
            self.path.state_at(t)
        }
    }

    fn events(&self) -> u64 {
        self.path.events.len() as u64
    }
}

/// Spindles at strictly increasing scaffolding times over `[0, end]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpindleMeasure {
    pub atoms: Vec<(f64, Spindle)>,
    pub end: f64,
}

impl SpindleMeasure {
    pub fn empty(end: f64) -> Self {
        Self { atoms: Vec::new(), end }
    }

    /// `x0 - t + Σ_{s ≤ t} ζ_s`.
    pub fn scaffolding(&self, x0: f64) -> Scaffolding {
        let mut knots = Vec::with_capacity(self.atoms.len() + 1);
        if self.atoms.first().is_none_or(|a| a.0 > 0.0) {
            knots.push(Knot {
                t: 0.0,
                before: x0,
                after: x0,
                slope: -1.0,
            });
        }
        let mut jumps = 0.0;
        for (s, f) in &self.atoms {
            let before = x0 - s + jumps;
            jumps += f.lifetime;
            knots.push(Knot {
                t: *s,
                before,
                after: before + f.lifetime,
                slope: -1.0,
            });
        }
        Scaffolding { knots, end: self.end }
    }

    /// Writes the measure as JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Change point of a piecewise-linear path with jumps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Knot {
    pub t: f64,
    pub before: f64,
    pub after: f64,
    /// Slope on `[t, next knot)`.
    pub slope: f64,
}

/// Càdlàg piecewise-linear path on `[0, end]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scaffolding {
    pub knots: Vec<Knot>,
    pub end: f64,
}

impl Scaffolding {
    fn segment(&self, t: f64) -> Option<&Knot> {
        let idx = self.knots.partition_point(|k| k.t <= t);
        (idx > 0).then(|| &self.knots[idx - 1])
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some(k) => k.after + k.slope * (t - k.t),
            None => self.knots.first().map_or(0.0, |k| k.before),
        }
    }

    pub fn left_limit(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|k| k.t < t);
        if idx < self.knots.len() && self.knots[idx].t == t {
            return self.knots[idx].before;
        }
        self.value_at(t)
    }

    /// Positive jumps `(time, size)`.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knots
            .iter()
            .filter(|k| k.after != k.before)
            .map(|k| (k.t, k.after - k.before))
    }

    /// `inf_{u ≤ t} X(u)`, including left limits.
    pub fn running_infimum(&self, t: f64) -> f64 {
        let mut inf = f64::INFINITY;
        for (i, k) in self.knots.iter().enumerate() {
            if k.t > t {
                break;
            }
            let seg_end = self.knots.get(i + 1).map_or(self.end, |n| n.t).min(t);
            inf = inf.min(k.before).min(k.after);
            inf = inf.min(k.after + k.slope * (seg_end - k.t));
        }
        inf
    }

    /// First time the path is at or below `level`, if it gets there.
    pub fn first_passage(&self, level: f64) -> Option<f64> {
        for (i, k) in self.knots.iter().enumerate() {
            if k.before <= level || k.after <= level {
                return Some(k.t);
            }
            let seg_end = self.knots.get(i + 1).map_or(self.end, |n| n.t);
            if k.slope < 0.0 {
                let hit = k.t + (k.after - level) / -k.slope;
                if hit <= seg_end {
                    return Some(hit);
                }
            }
        }
        None
    }
}

/// Scaffolding tilted upward by `(1 - α/θ₁)` times its local time at the
/// running infimum, `ℓ(t) = -inf_{u≤t} J(u)` (floored at 0).
pub fn modified_scaffolding(j: &Scaffolding, theta1: f64, alpha: f64) -> Result<Scaffolding> {
    if !(theta1 > 0.0) {
        return Err(invalid("left weight must be positive"));
    }
    if j.knots.iter().any(|k| k.slope != -1.0) {
        return Err(invalid("expected a unit-slope scaffolding"));
    }
    let c = 1.0 - alpha / theta1;
    let mut out = Vec::with_capacity(j.knots.len() * 2);
    let mut inf = 0.0_f64;
    for (i, k) in j.knots.iter().enumerate() {
        let seg_end = j.knots.get(i + 1).map_or(j.end, |n| n.t);
        inf = inf.min(k.before);
        let ell = -inf;
        if k.after <= inf {
            // Sitting on the running infimum for the whole segment.
            inf = k.after;
            out.push(Knot {
                t: k.t,
                before: k.before + c * ell,
                after: k.after + c * (-inf),
                slope: -alpha / theta1,
            });
            inf = k.after - (seg_end - k.t);
            continue;
        }
        out.push(Knot {
            t: k.t,
            before: k.before + c * ell,
            after: k.after + c * ell,
            slope: -1.0,
        });
        let hit = k.t + (k.after - inf);
        if hit < seg_end {
            out.push(Knot {
                t: hit,
                before: inf + c * ell,
                after: inf + c * ell,
                slope: -alpha / theta1,
            });
            inf -= seg_end - hit;
        }
    }
    Ok(Scaffolding { knots: out, end: j.end })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("spindle discount must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// A clade: the initial spindle from `m` at time 0, then rate-`α` spindles
/// from 1 until the scaffolding returns to its starting level.
pub fn sample_clade<R: Rng + ?Sized>(m: u64, alpha: f64, budget: u64, rng: &mut R) -> Result<SpindleMeasure> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(invalid("clade needs a positive initial mass"));
    }
    let mut used = 0u64;
    let charge = |f: &Spindle, used: &mut u64| -> Result<()> {
        *used += f.events() + 1;
        if *used > budget {
            return Err(Error::BudgetExceeded { budget });
        }
        Ok(())
    };
    let first = Spindle::sample(m, alpha, f64::INFINITY, budget, rng)?;
    charge(&first, &mut used)?;
    let mut level = first.lifetime;
    let mut t = 0.0;
    let mut atoms = vec![(0.0, first)];
    let gap = Exp::new(alpha).expect("positive rate");
    loop {
        let e: f64 = gap.sample(rng);
        if e >= level {
            t += level;
            break;
        }
        t += e;
        level -= e;
        let f = Spindle::sample(1, alpha, f64::INFINITY, budget, rng)?;
        charge(&f, &mut used)?;
        level += f.lifetime;
        atoms.push((t, f));
    }
    Ok(SpindleMeasure { atoms, end: t })
}

/// Sizes at level `y` of spindles born at the given levels, in order.
pub fn skewer_levels(atoms: &[(f64, Spindle)], y: f64) -> Composition {
    let parts: Vec<u64> = atoms
        .iter()
        .filter(|(b, _)| *b <= y)
        .map(|(b, f)| f.value_at(y - b))
        .filter(|&v| v > 0)
        .collect();
    Composition::new(parts).expect("positive parts")
}

/// Skewer of the pair `(D, X)` at level `y`: each spindle is read at the
/// height of `y` above the scaffolding just before its jump.
pub fn skewer(d: &SpindleMeasure, x: &Scaffolding, y: f64) -> Result<Composition> {
    Ok(skewer_levels(&birth_levels(d, x)?, y))
}

/// Pairs each spindle with the scaffolding level just before its jump,
/// after checking that the jumps of `x` are exactly the lifetimes.
pub fn birth_levels(d: &SpindleMeasure, x: &Scaffolding) -> Result<Vec<(f64, Spindle)>> {
    let jumps: Vec<(f64, f64)> = x.jumps().collect();
    if jumps.len() != d.atoms.iter().filter(|a| a.1.lifetime > 0.0).count() {
        return Err(Error::InconsistentScaffolding(format!(
            "{} jumps for {} spindles",
            jumps.len(),
            d.atoms.len()
        )));
    }
    let mut out = Vec::with_capacity(d.atoms.len());
    for (s, f) in &d.atoms {
        let size = x.value_at(*s) - x.left_limit(*s);
        if (size - f.lifetime).abs() > 1e-9 * (1.0 + f.lifetime) {
            return Err(Error::InconsistentScaffolding(format!(
                "jump {size} at time {s} differs from lifetime {}",
                f.lifetime
            )));
        }
        out.push((x.left_limit(*s), f.clone()));
    }
    Ok(out)
}

/// The part of a clade visible at levels up to `ceiling`, as
/// `(birth level, spindle)` pairs in scaffolding order. Spindles are only
/// simulated up to the ceiling.
pub fn clade_below<R: Rng + ?Sized>(m: u64, alpha: f64, ceiling: f64, rng: &mut R) -> Result<Vec<(f64, Spindle)>> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(invalid("clade needs a positive initial mass"));
    }
    let first = Spindle::sample(m, alpha, ceiling, DEFAULT_EVENT_BUDGET, rng)?;
    let mut level = first.lifetime.min(ceiling);
    let mut atoms = vec![(0.0, first)];
    let gap = Exp::new(alpha).expect("positive rate");
    loop {
        let e: f64 = gap.sample(rng);
        if e >= level {
            return Ok(atoms);
        }
        let b = level - e;
        let f = Spindle::sample(1, alpha, ceiling - b, DEFAULT_EVENT_BUDGET, rng)?;
        level = (b + f.lifetime).min(ceiling);
        atoms.push((b, f));
    }
}

/// Compositions at each of `levels` from independent clades, one per part
/// of `gamma`, concatenated in part order.
pub fn pcrp_via_clades<R: Rng + ?Sized>(
    gamma: &Composition,
    alpha: f64,
    levels: &[f64],
    rng: &mut R,
) -> Result<Vec<Composition>> {
    if gamma.is_empty() {
        return Err(Error::EmptyComposition);
    }
    let ceiling = levels.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let clades: Vec<Vec<(f64, Spindle)>> = gamma
        .parts()
        .iter()
        .map(|&m| clade_below(m, alpha, ceiling, rng))
        .collect::<Result<_>>()?;
    Ok(levels
        .iter()
        .map(|&y| {
            clades
                .iter()
                .fold(Composition::empty(), |acc, c| acc.concat(&skewer_levels(c, y)))
        })
        .collect())
}

/// Spindles seen below `ceiling` in the left-immigration construction with
/// top level `j`: the scaffolding starts at `j`, falls at unit speed
/// between atoms while above its running minimum and at speed `α/θ₁`
/// along it, and stops at level 0.
pub fn left_immigration_below<R: Rng + ?Sized>(
    theta1: f64,
    alpha: f64,
    j: f64,
    ceiling: f64,
    rng: &mut R,
) -> Result<Vec<(f64, Spindle)>> {
    check_alpha(alpha)?;
    if !(theta1 > 0.0) {
        return Err(invalid("left weight must be positive"));
    }
    let top = j.min(ceiling);
    let mut level = top;
    let mut floor = top;
    let mut atoms = Vec::new();
    loop {
        let b = if level > floor {
            let e: f64 = Exp1.sample(rng);
            let e = e / alpha;
            if e >= level - floor {
                level = floor;
                continue;
            }
            level - e
        } else {
            // Along the minimum, atoms arrive at rate θ₁ per unit of level.
            let e: f64 = Exp1.sample(rng);
            let e = e / theta1;
            if e >= floor {
                return Ok(atoms);
            }
            floor -= e;
            floor
        };
        let f = Spindle::sample(1, alpha, ceiling - b, DEFAULT_EVENT_BUDGET, rng)?;
        level = (b + f.lifetime).min(ceiling);
        atoms.push((b, f));
    }
}

/// Result of the literal left-immigration construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeftImmigration {
    pub measure: SpindleMeasure,
    /// `j + J_{θ₁}` on the scaffolding interval.
    pub scaffolding: Scaffolding,
}

/// Simulates rate-`α` spindles until the tilted scaffolding `J_{θ₁}` first
/// reaches `-j`, i.e. until the untilted one reaches `-(θ₁/α) j`.
pub fn pcrp_left_immigration<R: Rng + ?Sized>(
    theta1: f64,
    alpha: f64,
    j: f64,
    budget: u64,
    rng: &mut R,
) -> Result<LeftImmigration> {
    check_alpha(alpha)?;
    if !(theta1 > 0.0) || !(j > 0.0) {
        return Err(invalid("left immigration needs positive θ₁ and j"));
    }
    let target = -(theta1 / alpha) * j;
    let gap = Exp::new(alpha).expect("positive rate");
    let mut level = 0.0;
    let mut t = 0.0;
    let mut used = 0u64;
    let mut atoms = Vec::new();
    loop {
        let e: f64 = gap.sample(rng);
        if level - e <= target {
            t += level - target;
            break;
        }
        t += e;
        level -= e;
        let f = Spindle::sample(1, alpha, f64::INFINITY, budget, rng)?;
        used += f.events() + 1;
        if used > budget {
            return Err(Error::BudgetExceeded { budget });
        }
        level += f.lifetime;
        atoms.push((t, f));
    }
    let measure = SpindleMeasure { atoms, end: t };
    let tilted = modified_scaffolding(&measure.scaffolding(0.0), theta1, alpha)?;
    let scaffolding = Scaffolding {
        knots: tilted
            .knots
            .iter()
            .map(|k| Knot {
                before: k.before + j,
                after: k.after + j,
                ..*k
            })
            .collect(),
        end: tilted.end,
    };
    Ok(LeftImmigration { measure, scaffolding })
}

/// Left-immigration part followed by clades of `gamma`, at each level.
/// Levels must not exceed `j`.
pub fn immigration_composite<R: Rng + ?Sized>(
    gamma: &Composition,
    theta1: f64,
    alpha: f64,
    j: f64,
    levels: &[f64],
    rng: &mut R,
) -> Result<Vec<Composition>> {
    let ceiling = levels.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    if ceiling > j {
        return Err(invalid("levels must not exceed the immigration height"));
    }
    let left = left_immigration_below(theta1, alpha, j, ceiling, rng)?;
    let right = if gamma.is_empty() {
        vec![Composition::empty(); levels.len()]
    } else {
        pcrp_via_clades(gamma, alpha, levels, rng)?
    };
    Ok(levels
        .iter()
        .zip(right)
        .map(|(&y, r)| skewer_levels(&left, y).concat(&r))
        .collect())
}
