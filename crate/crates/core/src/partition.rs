//! Integer compositions and finite interval partitions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance for endpoint ordering checks.
pub const ENDPOINT_TOL: f64 = 1e-12;

/// Ordered table sizes, left to right. The empty composition is the state
/// with no customers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Composition {
    parts: Vec<u64>,
}

impl Composition {
    pub fn new(parts: Vec<u64>) -> Result<Self> {
        if parts.contains(&0) {
            return Err(invalid("composition parts must be positive"));
        }
        Ok(Self { parts })
    }

    /// Caller guarantees all parts are positive.
    pub(crate) fn from_vec_unchecked(parts: Vec<u64>) -> Self {
        debug_assert!(parts.iter().all(|&p| p > 0));
        Self { parts }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(m: u64) -> Self {
        assert!(m > 0, "a table holds at least one customer");
        Self { parts: vec![m] }
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    pub(crate) fn parts_mut(&mut self) -> &mut Vec<u64> {
        &mut self.parts
    }

    pub fn into_parts(self) -> Vec<u64> {
        self.parts
    }

    /// Number of customers.
    pub fn total(&self) -> u64 {
        self.parts.iter().sum()
    }

    /// Number of tables.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn concat(&self, other: &Composition) -> Composition {
        let mut parts = self.parts.clone();
        parts.extend_from_slice(&other.parts);
        Composition { parts }
    }

    /// All compositions of `n`, in a fixed order (bitmask of cut points).
    pub fn all_of(n: u64) -> Vec<Composition> {
        if n == 0 {
            return vec![Composition::empty()];
        }
        assert!(n <= 40, "too many compositions to enumerate");
        let cuts = n - 1;
        (0u64..(1u64 << cuts))
            .map(|mask| {
                let mut parts = Vec::new();
                let mut run = 1;
                for bit in 0..cuts {
                    if mask & (1 << bit) != 0 {
                        parts.push(run);
                        run = 1;
                    } else {
                        run += 1;
                    }
                }
                parts.push(run);
                Composition { parts }
            })
            .collect()
    }
}

impl<'de> Deserialize<'de> for Composition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let parts = Vec::<u64>::deserialize(d)?;
        Composition::new(parts).map_err(serde::de::Error::custom)
    }
}

/// Renders as `n1|n2|...`; the empty composition renders as an empty string.
impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "empty" {
            return Ok(Composition::empty());
        }
        let parts = s
            .split(['|', ','])
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| invalid(format!("bad composition part {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Composition::new(parts)
    }
}

/// A finite interval partition: ordered disjoint open blocks inside
/// `[0, total_mass]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalPartition {
    blocks: Vec<(f64, f64)>,
    total_mass: f64,
}

/// A closed segment `[lo, hi]` of partition points (`lo == hi` for a point).
#[derive(Clone, Copy, Debug, PartialEq)]
struct Segment {
    lo: f64,
    hi: f64,
}

impl IntervalPartition {
    /// Validates block ordering against `total_mass`.
    pub fn new(blocks: Vec<(f64, f64)>, total_mass: f64) -> Result<Self> {
        if !(total_mass >= 0.0) || !total_mass.is_finite() {
            return Err(invalid("total mass must be finite and non-negative"));
        }
        let mut cursor = 0.0_f64;
        for &(l, r) in &blocks {
            if !(l.is_finite() && r.is_finite()) {
                return Err(invalid("block endpoints must be finite"));
            }
            if l < cursor - ENDPOINT_TOL {
                return Err(invalid(format!("block ({l}, {r}) overlaps its predecessor")));
            }
            if r - l <= 0.0 {
                return Err(invalid(format!("block ({l}, {r}) has non-positive length")));
            }
            cursor = r;
        }
        if cursor > total_mass + ENDPOINT_TOL {
            return Err(invalid("blocks extend beyond the total mass"));
        }
        Ok(Self { blocks, total_mass })
    }

    /// Partition whose total mass is the right end of its last block.
    pub fn from_blocks(blocks: Vec<(f64, f64)>) -> Result<Self> {
        let m = blocks.last().map_or(0.0, |b| b.1);
        Self::new(blocks, m)
    }

    /// Blocks of the given positive lengths laid end to end from 0.
    pub fn from_lengths(lengths: &[f64]) -> Result<Self> {
        let mut blocks = Vec::with_capacity(lengths.len());
        let mut s = 0.0;
        for &len in lengths {
            blocks.push((s, s + len));
            s += len;
        }
        Self::new(blocks, s)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn blocks(&self) -> &[(f64, f64)] {
        &self.blocks
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().map(|&(l, r)| r - l)
    }

    /// Length of the leftmost block, or 0 for the empty partition.
    pub fn first_block_mass(&self) -> f64 {
        self.blocks.first().map_or(0.0, |&(l, r)| r - l)
    }

    /// The closed set of partition points as sorted disjoint segments:
    /// `[0, M]` minus the union of the open blocks.
    fn point_segments(&self) -> Vec<Segment> {
        let mut segs: Vec<Segment> = Vec::with_capacity(self.blocks.len() + 1);
        let mut cursor = 0.0;
        for &(l, r) in &self.blocks {
            push_segment(&mut segs, cursor, l.max(cursor));
            cursor = r;
        }
        push_segment(&mut segs, cursor, self.total_mass.max(cursor));
        segs
    }
}

fn push_segment(segs: &mut Vec<Segment>, lo: f64, hi: f64) {
    if let Some(last) = segs.last_mut() {
        if lo <= last.hi {
            last.hi = last.hi.max(hi);
            return;
        }
    }
    segs.push(Segment { lo, hi });
}

/// Distance from `x` to a sorted list of disjoint segments.
fn dist_to_segments(x: f64, t: &[Segment]) -> f64 {
    let idx = t.partition_point(|s| s.lo <= x);
    let mut d = f64::INFINITY;
    if idx > 0 {
        let s = t[idx - 1];
        d = if x <= s.hi { 0.0 } else { x - s.hi };
    }
    if idx < t.len() {
        d = d.min(t[idx].lo - x);
    }
    d
}

/// `sup_{x in s} d(x, t)`.
fn directed_hausdorff(s: &[Segment], t: &[Segment]) -> f64 {
    let mut worst = 0.0_f64;
    for seg in s {
        worst = worst.max(dist_to_segments(seg.lo, t));
        if seg.hi > seg.lo {
            worst = worst.max(dist_to_segments(seg.hi, t));
            // Inside a gap of `t` the distance is a tent peaking at the
            // gap midpoint.
            let start = t.partition_point(|x| x.hi < seg.lo).saturating_sub(1);
            for w in t[start..].windows(2) {
                let mid = 0.5 * (w[0].hi + w[1].lo);
                if mid > seg.hi {
                    break;
                }
                if mid >= seg.lo {
                    worst = worst.max(0.5 * (w[1].lo - w[0].hi));
                }
            }
        }
    }
    worst
}

/// Hausdorff distance between the sets of partition points.
pub fn hausdorff_distance(beta: &IntervalPartition, gamma: &IntervalPartition) -> f64 {
    let a = beta.point_segments();
    let b = gamma.point_segments();
    directed_hausdorff(&a, &b).max(directed_hausdorff(&b, &a))
}

/// Blocks whose endpoints coincide after floating-point arithmetic carry
/// less mass than the spacing of doubles at their position; they are
/// dropped by the operations below.
fn positive(blocks: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    blocks.filter(|&(l, r)| r > l).collect()
}

/// Multiplies every endpoint and the total mass by `c > 0`.
pub fn scale(c: f64, beta: &IntervalPartition) -> Result<IntervalPartition> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid(format!("scale factor must be positive, got {c}")));
    }
    Ok(IntervalPartition {
        blocks: positive(beta.blocks.iter().map(|&(l, r)| (c * l, c * r))),
        total_mass: c * beta.total_mass,
    })
}

/// Places the partitions side by side, left to right.
pub fn concatenate<'a, I>(parts: I) -> IntervalPartition
where
    I: IntoIterator<Item = &'a IntervalPartition>,
{
    let mut out = IntervalPartition::empty();
    for p in parts {
        let shift = out.total_mass;
        out.blocks
            .extend(positive(p.blocks.iter().map(|&(l, r)| (l + shift, r + shift))));
        out.total_mass += p.total_mass;
    }
    out
}

/// Left-right mirror image.
pub fn reverse(beta: &IntervalPartition) -> IntervalPartition {
    let m = beta.total_mass;
    IntervalPartition {
        blocks: positive(beta.blocks.iter().rev().map(|&(l, r)| (m - r, m - l))),
        total_mass: m,
    }
}

pub fn composition_to_partition(c: &Composition) -> IntervalPartition {
    let mut blocks = Vec::with_capacity(c.len());
    let mut s = 0u64;
    for &p in c.parts() {
        blocks.push((s as f64, (s + p) as f64));
        s += p;
    }
    IntervalPartition {
        blocks,
        total_mass: s as f64,
    }
}

/// The `k` largest block lengths in decreasing order, zero-padded.
pub fn ranked_masses(beta: &IntervalPartition, k: usize) -> Vec<f64> {
    let mut lens: Vec<f64> = beta.lengths().collect();
    lens.sort_by(|a, b| b.total_cmp(a));
    lens.resize(k, 0.0);
    lens
}

impl Serialize for IntervalPartition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.blocks.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntervalPartition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<(f64, f64)>::deserialize(d)?;
        IntervalPartition::from_blocks(blocks).map_err(serde::de::Error::custom)
    }
}
