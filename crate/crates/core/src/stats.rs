//! Hypothesis tests, distances between exact laws, and the random variate
//! generators shared by the verification suite.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::ocrp::ExactLaw;

/// Default p-value floor for statistical acceptance.
pub const P_FLOOR: f64 = 0.01;

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    /// For tolerance checks (no sampling) this is 1 on pass and 0 on fail.
    pub p_value: f64,
    pub n_samples: u64,
    pub pass: bool,
    pub seed: u64,
}

impl TestReport {
    /// A statistical check passing when `p_value > floor`.
    pub fn from_p(
        name: impl Into<String>,
        statistic: f64,
        p_value: f64,
        n_samples: u64,
        seed: u64,
        floor: f64,
    ) -> Self {
        let p_value = if p_value.is_nan() { 0.0 } else { p_value.clamp(0.0, 1.0) };
        Self {
            name: name.into(),
            statistic,
            p_value,
            n_samples,
            pass: p_value > floor,
            seed,
        }
    }

    /// A deterministic check passing when `error < tolerance`.
    pub fn from_tolerance(name: impl Into<String>, error: f64, tolerance: f64, n_samples: u64, seed: u64) -> Self {
        let pass = error < tolerance;
        Self {
            name: name.into(),
            statistic: error,
            p_value: if pass { 1.0 } else { 0.0 },
            n_samples,
            pass,
            seed,
        }
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Writes reports as CSV with a header row.
pub fn write_reports_csv<W: Write>(reports: &[TestReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "name,statistic,p_value,n_samples,pass,seed")?;
    for r in reports {
        writeln!(
            w,
            "{},{:e},{:e},{},{},{}",
            r.name, r.statistic, r.p_value, r.n_samples, r.pass, r.seed
        )?;
    }
    Ok(())
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small arguments.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in (1..40).step_by(2) {
            s += (c * (k * k) as f64).exp();
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value with the usual finite-sample correction of the
/// scaling constant.
fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_x - F_y|`.
pub fn ks_two_sample_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let a = sorted(xs);
    let b = sorted(ys);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_two_sample(name: &str, xs: &[f64], ys: &[f64], seed: u64) -> Result<TestReport> {
    if xs.len() < 10 || ys.len() < 10 {
        return Err(Error::DegenerateTest(
            "KS needs at least 10 observations per sample".into(),
        ));
    }
    let d = ks_two_sample_statistic(xs, ys);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let p = ks_p_value(d, n * m / (n + m));
    Ok(TestReport::from_p(
        name,
        d,
        p,
        (xs.len() + ys.len()) as u64,
        seed,
        P_FLOOR,
    ))
}

/// One-sample KS against a continuous cdf, with the supremum restricted to
/// `x < cap`. Observations at or beyond `cap` may be censored (any value
/// `>= cap`, including infinity). With `cap = ∞` this is the ordinary test.
pub fn ks_one_sample_capped<F: Fn(f64) -> f64>(
    name: &str,
    xs: &[f64],
    cdf: F,
    cap: f64,
    seed: u64,
) -> Result<TestReport> {
    if xs.len() < 10 {
        return Err(Error::DegenerateTest("KS needs at least 10 observations".into()));
    }
    let v = sorted(xs);
    let n = v.len() as f64;
    let mut d = 0.0_f64;
    let mut i = 0;
    while i < v.len() && v[i] < cap {
        let x = v[i];
        let f = cdf(x);
        let below = i as f64 / n;
        while i < v.len() && v[i] == x {
            i += 1;
        }
        let at = i as f64 / n;
        d = d.max((f - below).abs()).max((at - f).abs());
    }
    if cap.is_finite() {
        d = d.max((cdf(cap) - i as f64 / n).abs());
    }
    Ok(TestReport::from_p(
        name,
        d,
        ks_p_value(d, n),
        v.len() as u64,
        seed,
        P_FLOOR,
    ))
}

pub fn ks_one_sample<F: Fn(f64) -> f64>(name: &str, xs: &[f64], cdf: F, seed: u64) -> Result<TestReport> {
    ks_one_sample_capped(name, xs, cdf, f64::INFINITY, seed)
}

/// Pearson statistic together with its degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
}

impl ChiSquare {
    pub fn p_value(&self) -> f64 {
        if self.df == 0 {
            return 1.0;
        }
        if !self.statistic.is_finite() {
            return 0.0;
        }
        ChiSquared::new(self.df as f64).expect("df > 0").sf(self.statistic)
    }

    /// Sum of independent statistics.
    pub fn combine(parts: &[ChiSquare]) -> ChiSquare {
        ChiSquare {
            statistic: parts.iter().map(|c| c.statistic).sum(),
            df: parts.iter().map(|c| c.df).sum(),
        }
    }

    pub fn report(&self, name: &str, n_samples: u64, seed: u64) -> TestReport {
        TestReport::from_p(name, self.statistic, self.p_value(), n_samples, seed, P_FLOOR)
    }
}

/// Groups category indices into bins whose minimum expected count (as
/// measured by `weight`) is at least 5: categories below the threshold are
/// pooled together, and a pool that is still too small joins the smallest
/// remaining bin.
fn pool_bins(weights: &[f64]) -> Vec<Vec<usize>> {
    let mut bins: Vec<Vec<usize>> = Vec::new();
    let mut pool: Vec<usize> = Vec::new();
    for (i, &w) in weights.iter().enumerate() {
        if w >= 5.0 {
            bins.push(vec![i]);
        } else {
            pool.push(i);
        }
    }
    if !pool.is_empty() {
        let pooled: f64 = pool.iter().map(|&i| weights[i]).sum();
        if pooled >= 5.0 || bins.is_empty() {
            bins.push(pool);
        } else if let Some(smallest) = bins.iter_mut().min_by(|a, b| weights[a[0]].total_cmp(&weights[b[0]])) {
            smallest.extend(pool);
        }
    }
    bins
}

/// Goodness of fit of `observed` counts to category probabilities.
/// Observations in a category of zero probability make the statistic
/// infinite.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() {
        return Err(invalid("observed and expected lengths differ"));
    }
    let n: u64 = observed.iter().sum();
    let total_p: f64 = expected.iter().sum();
    if n == 0 || !(total_p > 0.0) {
        return Err(Error::DegenerateTest("no observations".into()));
    }
    let exp_counts: Vec<f64> = expected.iter().map(|p| p / total_p * n as f64).collect();
    let impossible = observed.iter().zip(&exp_counts).any(|(&o, &e)| o > 0 && e <= 0.0);
    let bins = pool_bins(&exp_counts);
    if bins.len() < 2 {
        return Err(Error::DegenerateTest("fewer than two bins after pooling".into()));
    }
    let mut stat = 0.0;
    for bin in &bins {
        let o: f64 = bin.iter().map(|&i| observed[i] as f64).sum();
        let e: f64 = bin.iter().map(|&i| exp_counts[i]).sum();
        stat += if e > 0.0 {
            (o - e).powi(2) / e
        } else if o > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
    }
    Ok(ChiSquare {
        statistic: if impossible { f64::INFINITY } else { stat },
        df: bins.len() - 1,
    })
}

/// Goodness of fit keyed by category. Observed keys missing from
/// `expected` count as zero-probability categories.
pub fn chi_square_gof_map<K: Ord + Clone>(
    observed: &BTreeMap<K, u64>,
    expected: &BTreeMap<K, f64>,
) -> Result<ChiSquare> {
    let mut keys: Vec<K> = expected.keys().cloned().collect();
    keys.extend(observed.keys().filter(|k| !expected.contains_key(*k)).cloned());
    let obs: Vec<u64> = keys.iter().map(|k| observed.get(k).copied().unwrap_or(0)).collect();
    let exp: Vec<f64> = keys.iter().map(|k| expected.get(k).copied().unwrap_or(0.0)).collect();
    chi_square_gof(&obs, &exp)
}

/// Two-sample homogeneity test on a 2 × K contingency table.
pub fn chi_square_homogeneity<K: Ord + Clone>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> Result<ChiSquare> {
    let mut keys: Vec<K> = a.keys().cloned().collect();
    keys.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return Err(Error::DegenerateTest("empty sample".into()));
    }
    let n = (na + nb) as f64;
    let ca: Vec<f64> = keys.iter().map(|k| a.get(k).copied().unwrap_or(0) as f64).collect();
    let cb: Vec<f64> = keys.iter().map(|k| b.get(k).copied().unwrap_or(0) as f64).collect();
    let smaller = na.min(nb) as f64;
    let weights: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| (x + y) * smaller / n).collect();
    let bins = pool_bins(&weights);
    if bins.len() < 2 {
        return Err(Error::DegenerateTest("fewer than two bins after pooling".into()));
    }
    let mut stat = 0.0;
    for bin in &bins {
        let oa: f64 = bin.iter().map(|&i| ca[i]).sum();
        let ob: f64 = bin.iter().map(|&i| cb[i]).sum();
        let tot = oa + ob;
        let ea = tot * na as f64 / n;
        let eb = tot * nb as f64 / n;
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    Ok(ChiSquare {
        statistic: stat,
        df: bins.len() - 1,
    })
}

/// Total variation distance between two exact laws on compositions of the
/// same size.
pub fn tv_distance(p: &ExactLaw, q: &ExactLaw) -> Result<f64> {
    if p.n != q.n {
        return Err(invalid(format!("laws on different sizes: {} vs {}", p.n, q.n)));
    }
    let mut s = 0.0;
    for (c, &x) in &p.table {
        s += (x - q.table.get(c).copied().unwrap_or(0.0)).abs();
    }
    for (c, &y) in &q.table {
        if !p.table.contains_key(c) {
            s += y.abs();
        }
    }
    Ok(0.5 * s)
}

/// Gamma variate with the given shape and rate.
pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) {
        return Err(invalid(format!(
            "gamma needs positive shape and rate, got ({shape}, {rate})"
        )));
    }
    Ok(Gamma::new(shape, 1.0 / rate)
        .map_err(|e| invalid(e.to_string()))?
        .sample(rng))
}

/// Beta variate; a zero parameter puts all mass on the opposite endpoint.
pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) || (a == 0.0 && b == 0.0) {
        return Err(invalid(format!("beta parameters ({a}, {b}) out of range")));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    if b == 0.0 {
        return Ok(1.0);
    }
    Ok(Beta::new(a, b).map_err(|e| invalid(e.to_string()))?.sample(rng))
}

/// Dirichlet variate: coordinates with a zero parameter are identically 0,
/// and a single coordinate is identically 1.
pub fn dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if params.is_empty() || params.iter().any(|&a| !(a >= 0.0)) {
        return Err(invalid("dirichlet parameters must be non-negative"));
    }
    if params.len() == 1 {
        return Ok(vec![1.0]);
    }
    if params.iter().all(|&a| a == 0.0) {
        return Err(invalid("dirichlet needs a positive parameter"));
    }
    let mut out: Vec<f64> = params
        .iter()
        .map(|&a| if a > 0.0 { gamma(a, 1.0, rng) } else { Ok(0.0) })
        .collect::<Result<_>>()?;
    let s: f64 = out.iter().sum();
    for x in &mut out {
        *x /= s;
    }
    Ok(out)
}
