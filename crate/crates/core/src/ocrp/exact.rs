//! Exact finite-n laws of the ordered restaurant and an independent
//! brute-force oracle.

use std::collections::BTreeMap;
use std::io::Write;

use statrs::function::gamma::ln_gamma;

use super::{down_step_law, seat_next_law, CrpParams};
use crate::error::{invalid, Result};
use crate::partition::Composition;
use crate::stats::tv_distance;

/// Largest size accepted by [`exact_law`].
pub const MAX_EXACT_N: u64 = 9;
/// Largest size accepted by [`enumerate_bruteforce_law`].
pub const MAX_BRUTEFORCE_N: u64 = 7;

/// A probability table over compositions of `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLaw {
    pub n: u64,
    pub table: BTreeMap<Composition, f64>,
}

impl ExactLaw {
    pub fn point(c: Composition) -> Self {
        let n = c.total();
        Self {
            n,
            table: BTreeMap::from([(c, 1.0)]),
        }
    }

    pub fn prob(&self, c: &Composition) -> f64 {
        self.table.get(c).copied().unwrap_or(0.0)
    }

    pub fn total_probability(&self) -> f64 {
        self.table.values().sum()
    }

    /// Writes `composition,probability` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "composition,probability")?;
        for (c, p) in &self.table {
            writeln!(w, "{c},{p:.17e}")?;
        }
        Ok(())
    }
}

fn ln_choose(n: u64, m: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(m as f64 + 1.0) - ln_gamma((n - m) as f64 + 1.0)
}

/// Probability that the first block of a regenerative composition of `n`
/// with parameters `(alpha, theta2)` has size `m`.
pub fn decrement(n: u64, m: u64, theta2: f64, alpha: f64) -> Result<f64> {
    if n == 0 || m == 0 || m > n {
        return Err(invalid(format!("decrement needs 1 <= m <= n, got n={n}, m={m}")));
    }
    if !(0.0..1.0).contains(&alpha) || !(theta2 >= 0.0) {
        return Err(invalid("decrement parameters out of range"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let common = ln_gamma(mf - alpha) - ln_gamma(1.0 - alpha) - ln_gamma(nf + theta2);
    if m == n {
        // ((n-m)α + mθ₂) Γ(n-m+θ₂) / n → Γ(1+θ₂) at m = n, valid for θ₂ = 0 too.
        return Ok((common + ln_gamma(1.0 + theta2)).exp());
    }
    let weight = (nf - mf) * alpha + mf * theta2;
    if weight == 0.0 {
        return Ok(0.0);
    }
    Ok((ln_choose(n, m) + (weight / nf).ln() + common + ln_gamma(nf - mf + theta2)).exp())
}

/// `ln(Γ(k + θ) / (Γ(θ) k!))` under the degenerate convention for `θ = 0`.
fn ln_urn_factor(k: u64, theta: f64) -> Option<f64> {
    if k == 0 {
        return Some(0.0);
    }
    if theta == 0.0 {
        return None;
    }
    let kf = k as f64;
    Some(ln_gamma(kf + theta) - ln_gamma(theta) - ln_gamma(kf + 1.0))
}

/// Three-colour urn probability of `(left mass, middle table, right mass)`.
pub fn dirichlet_multinomial(n: u64, n1: u64, n0: u64, n2: u64, p: &CrpParams) -> Result<f64> {
    if n0 == 0 || n1 + n0 + n2 != n {
        return Err(invalid(format!(
            "urn counts ({n1}, {n0}, {n2}) must have a positive middle and sum to {n}"
        )));
    }
    let (Some(l1), Some(l2)) = (ln_urn_factor(n1, p.theta1), ln_urn_factor(n2, p.theta2)) else {
        return Ok(0.0);
    };
    let a = p.alpha;
    let s = 1.0 - a + p.theta1 + p.theta2;
    let ln = ln_gamma(s) - ln_gamma(1.0 - a) + ln_gamma(n as f64) + ln_gamma(n0 as f64 - a)
        - ln_gamma(n0 as f64)
        - ln_gamma(n as f64 - a + p.theta1 + p.theta2)
        + l1
        + l2;
    Ok(ln.exp())
}

/// Probability of one composition by decomposing at each possible
/// position of the first table.
fn composition_probability(c: &Composition, p: &CrpParams) -> Result<f64> {
    let parts = c.parts();
    let k = parts.len();
    let n = c.total();
    let mut prefix = vec![0u64; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] + parts[i];
    }
    let mass = |i: usize, j: usize| prefix[j] - prefix[i];
    let mut total = 0.0;
    for i in 0..k {
        let mut term = dirichlet_multinomial(n, mass(0, i), parts[i], mass(i + 1, k), p)?;
        if term == 0.0 {
            continue;
        }
        for (j, &part) in parts.iter().enumerate().take(i) {
            term *= decrement(mass(0, j + 1), part, p.theta1, p.alpha)?;
        }
        for (j, &part) in parts.iter().enumerate().skip(i + 1) {
            term *= decrement(mass(j, k), part, p.theta2, p.alpha)?;
        }
        total += term;
    }
    Ok(total)
}

/// Closed-form law of the composition after `n` arrivals.
pub fn exact_law(n: u64, p: &CrpParams) -> Result<ExactLaw> {
    if n > MAX_EXACT_N {
        return Err(invalid(format!("exact law limited to n <= {MAX_EXACT_N}, got {n}")));
    }
    if n == 0 {
        return Ok(ExactLaw::point(Composition::empty()));
    }
    let mut table = BTreeMap::new();
    for c in Composition::all_of(n) {
        let prob = composition_probability(&c, p)?;
        if prob > 0.0 {
            table.insert(c, prob);
        }
    }
    Ok(ExactLaw { n, table })
}

/// Law obtained by pushing the one-customer state through `n - 1` exact
/// seating transitions. Uses only the seating rule itself.
pub fn enumerate_bruteforce_law(n: u64, p: &CrpParams) -> Result<ExactLaw> {
    if n > MAX_BRUTEFORCE_N {
        return Err(invalid(format!(
            "brute-force law limited to n <= {MAX_BRUTEFORCE_N}, got {n}"
        )));
    }
    if n == 0 {
        return Ok(ExactLaw::point(Composition::empty()));
    }
    let mut law = BTreeMap::from([(Composition::single(1), 1.0)]);
    for _ in 1..n {
        let mut next: BTreeMap<Composition, f64> = BTreeMap::new();
        for (c, &w) in &law {
            for (d, q) in seat_next_law(c, p) {
                *next.entry(d).or_insert(0.0) += w * q;
            }
        }
        law = next;
    }
    Ok(ExactLaw { n, table: law })
}

/// TV distance between the law at `n` and the law at `n + 1` after one
/// uniform removal.
pub fn check_sampling_consistency(n: u64, p: &CrpParams) -> Result<f64> {
    if n == 0 || n > 6 {
        return Err(invalid(format!("consistency check limited to 1 <= n <= 6, got {n}")));
    }
    let upper = exact_law(n + 1, p)?;
    let mut pushed: BTreeMap<Composition, f64> = BTreeMap::new();
    for (c, &w) in &upper.table {
        for (d, q) in down_step_law(c) {
            *pushed.entry(d).or_insert(0.0) += w * q;
        }
    }
    tv_distance(&ExactLaw { n, table: pushed }, &exact_law(n, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID_A: [f64; 3] = [0.25, 0.5, 0.75];
    const GRID_T: [f64; 3] = [0.0, 0.3, 1.0];

    fn grid() -> Vec<CrpParams> {
        let mut out = Vec::new();
        for &a in &GRID_A {
            for &t1 in &GRID_T {
                for &t2 in &GRID_T {
                    out.push(CrpParams::new(a, t1, t2).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn decrement_hand_values() {
        for &(t2, a) in &[(0.0, 0.5), (0.3, 0.25), (1.0, 0.75)] {
            assert!((decrement(1, 1, t2, a).unwrap() - 1.0).abs() < 1e-14);
            assert!((decrement(2, 1, t2, a).unwrap() - (a + t2) / (1.0 + t2)).abs() < 1e-14);
            assert!((decrement(2, 2, t2, a).unwrap() - (1.0 - a) / (1.0 + t2)).abs() < 1e-14);
        }
        assert!(decrement(3, 4, 0.5, 0.5).is_err());
        assert!(decrement(3, 0, 0.5, 0.5).is_err());
    }

    #[test]
    fn decrement_rows_are_stochastic() {
        for &a in &GRID_A {
            for &t in &[0.0, 0.3, 0.5, 1.0] {
                for n in 1..=50 {
                    let s: f64 = (1..=n).map(|m| decrement(n, m, t, a).unwrap()).sum();
                    assert!((s - 1.0).abs() < 1e-12, "n={n} a={a} t={t}: {s}");
                }
            }
        }
    }

    #[test]
    fn urn_probabilities() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        assert!((dirichlet_multinomial(1, 0, 1, 0, &p).unwrap() - 1.0).abs() < 1e-14);
        let n = 5;
        let mut s = 0.0;
        for n1 in 0..n {
            for n0 in 1..=n - n1 {
                s += dirichlet_multinomial(n, n1, n0, n - n1 - n0, &p).unwrap();
            }
        }
        assert!((s - 1.0).abs() < 1e-10);
        let q = CrpParams::new(0.5, 0.0, 0.7).unwrap();
        assert_eq!(dirichlet_multinomial(4, 1, 2, 1, &q).unwrap(), 0.0);
        assert!(dirichlet_multinomial(4, 1, 0, 3, &q).is_err());
    }

    #[test]
    fn urn_probability_matches_urn_recursion() {
        // Independent oracle: the three-colour urn run exactly.
        let p = CrpParams::new(0.25, 0.3, 1.0).unwrap();
        let mut urn: BTreeMap<(u64, u64, u64), f64> = BTreeMap::from([((0, 1, 0), 1.0)]);
        for n in 1..7u64 {
            for (&(a, b, c), &w) in &urn {
                let dm = dirichlet_multinomial(n, a, b, c, &p).unwrap();
                assert!((dm - w).abs() < 1e-13, "{n}: {:?}", (a, b, c));
            }
            let mut next = BTreeMap::new();
            let norm = n as f64 + p.theta();
            for (&(a, b, c), &w) in &urn {
                *next.entry((a + 1, b, c)).or_insert(0.0) += w * (a as f64 + p.theta1) / norm;
                *next.entry((a, b + 1, c)).or_insert(0.0) += w * (b as f64 - p.alpha) / norm;
                *next.entry((a, b, c + 1)).or_insert(0.0) += w * (c as f64 + p.theta2) / norm;
            }
            urn = next;
        }
    }

    #[test]
    fn exact_law_small_cases() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let l2 = exact_law(2, &p).unwrap();
        assert!((l2.prob(&Composition::single(2)) - 1.0 / 3.0).abs() < 1e-14);
        assert!((l2.prob(&Composition::new(vec![1, 1]).unwrap()) - 2.0 / 3.0).abs() < 1e-14);
        let l1 = exact_law(1, &p).unwrap();
        assert_eq!(l1.table.len(), 1);
        assert!((l1.prob(&Composition::single(1)) - 1.0).abs() < 1e-14);
        assert!(exact_law(MAX_EXACT_N + 1, &p).is_err());
        for n in 1..=MAX_EXACT_N {
            assert!((exact_law(n, &p).unwrap().total_probability() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_law_agrees_with_bruteforce_on_grid() {
        for p in grid() {
            for n in 2..=6 {
                let tv = tv_distance(&exact_law(n, &p).unwrap(), &enumerate_bruteforce_law(n, &p).unwrap()).unwrap();
                assert!(tv < 1e-10, "{p:?} n={n}: {tv}");
            }
        }
    }

    #[test]
    fn bruteforce_degenerate_rule() {
        let p = CrpParams::new(0.5, 0.0, 0.0).unwrap();
        let l = enumerate_bruteforce_law(6, &p).unwrap();
        // With no outer weights the gaps are never reachable.
        assert_eq!(l.table.len(), 1);
        assert!((l.prob(&Composition::single(6)) - 1.0).abs() < 1e-14);
        assert!(enumerate_bruteforce_law(MAX_BRUTEFORCE_N + 1, &p).is_err());
    }

    #[test]
    fn sampling_consistency_on_grid() {
        for p in grid() {
            for n in 1..=5 {
                let tv = check_sampling_consistency(n, &p).unwrap();
                assert!(tv < 1e-10, "{p:?} n={n}: {tv}");
            }
        }
        // One-sided regenerative case.
        let p = CrpParams::new(0.5, 0.3, 0.5).unwrap();
        assert!(check_sampling_consistency(6, &p).unwrap() < 1e-10);
    }

    #[test]
    fn csv_rows() {
        let p = CrpParams::new(0.5, 0.3, 0.7).unwrap();
        let mut buf = Vec::new();
        exact_law(2, &p).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "composition,probability");
        let row = |l: &str| {
            let (c, p) = l.split_once(',').unwrap();
            (c.to_string(), p.parse::<f64>().unwrap())
        };
        let (c1, p1) = row(lines[1]);
        let (c2, p2) = row(lines[2]);
        assert_eq!((c1.as_str(), c2.as_str()), ("1|1", "2"));
        assert!((p1 - 2.0 / 3.0).abs() < 1e-12 && (p2 - 1.0 / 3.0).abs() < 1e-12);
    }
}
