//! Exact small-instance ground truth: dataset enumeration, true mechanism
//! densities, pointwise leakage, a seeded mechanism sampler, and the
//! dominance/attainment certifier for the exact bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::bounds::{
    build_extremal_prior, exact_pml_bound, subset_coefficient, BoundWitness, PriorClass,
};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::numeric::{log_sum_exp, KahanSum};
use crate::workload::Workload;

/// Refusal threshold for histogram enumeration.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Dominance slack: observed leakage may exceed the bound by at most this
/// before counting as a violation.
const DOMINANCE_SLACK: f64 = 1e-9;

/// An i.i.d. product prior over datasets: `n` records, each in class `j`
/// with probability `p[j]`, every class at or above `alpha_floor`.
///
/// `n = 0` (the empty dataset) is legal for output densities; operations
/// that condition on a record require `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductPrior<F> {
    n: usize,
    p: Vec<F>,
    alpha_floor: F,
}

impl<F: Float> ProductPrior<F> {
    pub fn new(n: usize, p: Vec<F>, alpha_floor: F) -> Result<Self> {
        let k = p.len();
        if k < 2 {
            return Err(Error::InvalidPrior(format!(
                "prior needs k >= 2 classes, got {k}"
            )));
        }
        if !(alpha_floor > F::zero()) || !alpha_floor.is_finite() {
            return Err(Error::InvalidPrior(format!(
                "class floor must be positive, got {alpha_floor}"
            )));
        }
        let mut total = KahanSum::new();
        for (j, &pj) in p.iter().enumerate() {
            if !pj.is_finite() || pj < alpha_floor {
                return Err(Error::InvalidPrior(format!(
                    "class {j} probability {pj} below floor {alpha_floor}"
                )));
            }
            total.add(pj);
        }
        if (total.value() - F::one()).abs() > F::cast(1e-12) {
            return Err(Error::InvalidPrior(format!(
                "class probabilities sum to {}, not 1",
                total.value()
            )));
        }
        Ok(Self { n, p, alpha_floor })
    }

    /// Uniform prior with the largest possible floor `1/k`.
    pub fn uniform(n: usize, k: usize) -> Result<Self> {
        let share = F::one() / F::cast(k);
        Self::new(n, vec![share; k], share)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[F] {
        &self.p
    }

    pub fn alpha_floor(&self) -> F {
        self.alpha_floor
    }
}

/// Class-count histogram of a dataset: `counts[j]` records in class j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramState {
    counts: Vec<u64>,
}

impl HistogramState {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Number of k-class histograms of n records: C(n+k-1, k-1), saturating.
fn histogram_count(n: usize, k: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=(k - 1) as u128 {
        match c.checked_mul(n as u128 + i) {
            Some(v) => c = v / i,
            None => return u128::MAX,
        }
    }
    c
}

/// Lazily yields every nonnegative k-vector summing to n, in ascending
/// lexicographic order.
pub struct HistogramIter {
    next: Option<Vec<u64>>,
}

impl Iterator for HistogramIter {
    type Item = HistogramState;

    fn next(&mut self) -> Option<HistogramState> {
        let cur = self.next.take()?;
        self.next = lex_successor(&cur);
        Some(HistogramState::new(cur))
    }
}

/// Smallest composition lexicographically above `c`, if any: bump the
/// rightmost position with mass to its right, then pack that mass at the
/// end.
fn lex_successor(c: &[u64]) -> Option<Vec<u64>> {
    let k = c.len();
    let mut suffix: u64 = 0;
    for i in (0..k - 1).rev() {
        suffix += c[i + 1];
        if suffix > 0 {
            let mut next = c.to_vec();
            next[i] += 1;
            for slot in &mut next[i + 1..] {
                *slot = 0;
            }
            next[k - 1] = suffix - 1;
            return Some(next);
        }
    }
    None
}

/// Enumerates the histograms of n records over k classes, refusing when the
/// state count C(n+k-1, k-1) exceeds [`ENUMERATION_CAP`].
pub fn enumerate_histograms(n: usize, k: usize) -> Result<HistogramIter> {
    if k < 2 {
        return Err(Error::InvalidShape(format!(
            "histogram enumeration needs k >= 2, got {k}"
        )));
    }
    let states = histogram_count(n, k);
    if states > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            states,
            cap: ENUMERATION_CAP,
        });
    }
    let mut first = vec![0u64; k];
    first[k - 1] = n as u64;
    Ok(HistogramIter { next: Some(first) })
}

fn ln_factorial<F: Float>(x: u64) -> F {
    let mut acc = KahanSum::new();
    for i in 2..=x {
        acc.add(F::cast(i as f64).ln());
    }
    acc.value()
}

/// Log multinomial weight: log n! - Σ log h_j! + Σ h_j log p_j.
fn log_multinomial<F: Float>(counts: &[u64], p: &[F]) -> F {
    let n: u64 = counts.iter().sum();
    let mut acc = KahanSum::new();
    acc.add(ln_factorial::<F>(n));
    for (&h, &pj) in counts.iter().zip(p) {
        acc.add(-ln_factorial::<F>(h));
        if h > 0 {
            acc.add(F::cast(h as f64) * pj.ln());
        }
    }
    acc.value()
}

/// Multinomial probability of a histogram under the prior's class law.
pub fn histogram_prob<F: Float>(h: &HistogramState, prior: &ProductPrior<F>) -> Result<F> {
    if h.counts().len() != prior.k() {
        return Err(Error::DimensionMismatch(format!(
            "histogram has {} classes, prior has {}",
            h.counts().len(),
            prior.k()
        )));
    }
    if h.n() != prior.n() as u64 {
        return Err(Error::DimensionMismatch(format!(
            "histogram has {} records, prior has {}",
            h.n(),
            prior.n()
        )));
    }
    Ok(log_multinomial(h.counts(), prior.p()).exp())
}

fn check_output_vec<F: Float>(y: &[F], w: &Workload<F>) -> Result<()> {
    if y.len() != w.m() {
        return Err(Error::DimensionMismatch(format!(
            "output has {} coordinates, workload has m={}",
            y.len(),
            w.m()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidShape("output vector must be finite".into()));
    }
    Ok(())
}

fn check_prior<F: Float>(w: &Workload<F>, b: F, prior: &ProductPrior<F>) -> Result<()> {
    if !(b > F::zero()) || !b.is_finite() {
        return Err(Error::NonPositiveScale(b.to_f64().unwrap_or(f64::NAN)));
    }
    if prior.k() != w.k() {
        return Err(Error::DimensionMismatch(format!(
            "prior has k={}, workload has k={}",
            prior.k(),
            w.k()
        )));
    }
    Ok(())
}

/// Log product of independent Laplace(0, b) densities at `y - mean`.
fn log_laplace_product<F: Float>(y: &[F], mean: &[F], b: F) -> F {
    let norm = -(F::cast(2.0) * b).ln();
    let mut acc = KahanSum::new();
    for (&yl, &ml) in y.iter().zip(mean) {
        acc.add(norm - (yl - ml).abs() / b);
    }
    acc.value()
}

/// Log of the mechanism's output density at `y`: the histogram-weighted
/// mixture of Laplace products, accumulated entirely in the log domain.
pub fn log_output_density<F: Float>(
    y: &[F],
    w: &Workload<F>,
    b: F,
    prior: &ProductPrior<F>,
) -> Result<F> {
    check_prior(w, b, prior)?;
    check_output_vec(y, w)?;
    let mut terms = Vec::new();
    for h in enumerate_histograms(prior.n(), prior.k())? {
        let mean = w.apply_counts(h.counts());
        terms.push(log_multinomial(h.counts(), prior.p()) + log_laplace_product(y, &mean, b));
    }
    Ok(log_sum_exp(&terms))
}

/// The mechanism's true output density at `y` under the prior.
pub fn output_density<F: Float>(
    y: &[F],
    w: &Workload<F>,
    b: F,
    prior: &ProductPrior<F>,
) -> Result<F> {
    Ok(log_output_density(y, w, b, prior)?.exp())
}

/// Log density of `y` given that one record sits in class `r`: the mixture
/// over histograms of the remaining n-1 records, shifted by column r.
pub fn log_conditional_density<F: Float>(
    y: &[F],
    w: &Workload<F>,
    b: F,
    prior: &ProductPrior<F>,
    r: usize,
) -> Result<F> {
    check_prior(w, b, prior)?;
    check_output_vec(y, w)?;
    if r >= w.k() {
        return Err(Error::IndexOutOfRange(format!(
            "class {r} for k={}",
            w.k()
        )));
    }
    if prior.n() == 0 {
        return Err(Error::InvalidPrior(
            "conditioning on a record needs n >= 1".into(),
        ));
    }
    let col_r = w.column(r);
    let mut terms = Vec::new();
    for h in enumerate_histograms(prior.n() - 1, prior.k())? {
        let mut mean = w.apply_counts(h.counts());
        for (ml, &cr) in mean.iter_mut().zip(&col_r) {
            *ml = *ml + cr;
        }
        terms.push(log_multinomial(h.counts(), prior.p()) + log_laplace_product(y, &mean, b));
    }
    Ok(log_sum_exp(&terms))
}

/// Density of `y` given one record pinned to class `r`.
pub fn conditional_density<F: Float>(
    y: &[F],
    w: &Workload<F>,
    b: F,
    prior: &ProductPrior<F>,
    r: usize,
) -> Result<F> {
    Ok(log_conditional_density(y, w, b, prior, r)?.exp())
}

/// Pointwise leakage of one record at outcome `y`: the log of the largest
/// conditional-to-marginal density ratio over the record's possible
/// classes. Computed as a difference of log densities; can be negative at
/// individual outcomes. Every class stays in play because the prior floor
/// is positive.
pub fn pointwise_leakage<F: Float>(
    y: &[F],
    w: &Workload<F>,
    b: F,
    prior: &ProductPrior<F>,
) -> Result<F> {
    if prior.n() == 0 {
        return Err(Error::InvalidPrior(
            "leakage of a record needs n >= 1".into(),
        ));
    }
    let log_out = log_output_density(y, w, b, prior)?;
    let mut best = F::neg_infinity();
    for r in 0..w.k() {
        best = best.max(log_conditional_density(y, w, b, prior, r)?);
    }
    Ok(best - log_out)
}

/// A point inside the extreme-output region selected by a row subset:
/// coordinates in the subset sit `margin` below `n * min_j w_lj`, the rest
/// `margin` above `n * max_j w_lj`. Inside such a region every absolute
/// value in the density resolves to a fixed sign.
pub fn extreme_outputs<F: Float>(
    w: &Workload<F>,
    n: usize,
    rows: u64,
    margin: F,
) -> Result<Vec<F>> {
    let m = w.m();
    if m < 64 && rows >> m != 0 {
        return Err(Error::IndexOutOfRange(format!(
            "subset bitmask {rows:#b} selects rows >= m={m}"
        )));
    }
    if !(margin > F::zero()) || !margin.is_finite() {
        return Err(Error::InvalidShape(format!(
            "margin must be positive, got {margin}"
        )));
    }
    let nf = F::cast(n);
    Ok((0..m)
        .map(|l| {
            let row = w.row(l);
            let lo = row.iter().cloned().fold(F::infinity(), F::min);
            let hi = row.iter().cloned().fold(F::neg_infinity(), F::max);
            if rows >> l & 1 == 1 {
                nf * lo - margin
            } else {
                nf * hi + margin
            }
        })
        .collect())
}

/// One unit-scale Laplace draw by inverse CDF: `-sgn(u) ln(1 - 2|u|)` for
/// `u` uniform on (-1/2, 1/2). The closed endpoint would map to -infinity
/// and is resampled.
fn laplace_unit(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let u = rng.random::<f64>() - 0.5;
        if u > -0.5 {
            return -u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}

/// One mechanism draw: `W h` plus i.i.d. Laplace(0, b) noise from the
/// seeded generator. Identical seeds give identical outputs.
pub fn sample_mechanism<F: Float>(
    h: &HistogramState,
    w: &Workload<F>,
    b: F,
    seed: u64,
) -> Result<Vec<F>> {
    if !(b > F::zero()) || !b.is_finite() {
        return Err(Error::NonPositiveScale(b.to_f64().unwrap_or(f64::NAN)));
    }
    if h.counts().len() != w.k() {
        return Err(Error::DimensionMismatch(format!(
            "histogram has {} classes, workload has k={}",
            h.counts().len(),
            w.k()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok(w.apply_counts(h.counts())
        .into_iter()
        .map(|ml| ml + b * F::cast(laplace_unit(&mut rng)))
        .collect())
}

/// Dominance and attainment report from [`certify_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyReport<F> {
    pub trials: usize,
    /// Trials where observed leakage exceeded the bound by more than 1e-9.
    pub violations: usize,
    pub max_leakage_nats: F,
    pub bound_nats: F,
    /// Bound minus the leakage of the extremal construction; near zero when
    /// the bound is attained.
    pub attainment_gap_nats: F,
    pub seed: u64,
}

/// Floor-respecting random prior: `alpha` everywhere plus the residual mass
/// spread by a flat Dirichlet draw.
fn random_floor_prior<F: Float>(rng: &mut ChaCha12Rng, alpha: F, k: usize) -> Vec<F> {
    let residual = (F::one() - F::cast(k) * alpha).max(F::zero());
    loop {
        let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = e.iter().sum();
        if total > 0.0 {
            return e
                .into_iter()
                .map(|ej| alpha + residual * F::cast(ej / total))
                .collect();
        }
    }
}

/// n i.i.d. class draws from the prior, tallied into a histogram.
fn sample_histogram<F: Float>(rng: &mut ChaCha12Rng, prior: &ProductPrior<F>) -> Vec<u64> {
    let p64: Vec<f64> = prior
        .p()
        .iter()
        .map(|v| v.to_f64().unwrap_or(0.0))
        .collect();
    let mut counts = vec![0u64; prior.k()];
    for _ in 0..prior.n() {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        // rounding guard: fall through to the last class
        let mut class = prior.k() - 1;
        for (j, &pj) in p64.iter().enumerate() {
            cum += pj;
            if u < cum {
                class = j;
                break;
            }
        }
        counts[class] += 1;
    }
    counts
}

/// Certifies the exact bound against the ground truth: (a) dominance over
/// `trials` random (prior, outcome) pairs, outcomes drawn alternately from
/// the mechanism itself and from uniform boxes hugging the extreme regions;
/// (b) attainment, by evaluating the leakage of the extremal prior at an
/// extreme output for the bound's witness subset.
///
/// Dominance is guaranteed only when every workload row takes at most two
/// distinct values (see [`exact_pml_bound`]); otherwise outputs pinned at
/// interior row entries can leak above the bound, and the report counts
/// them as violations rather than hiding them.
pub fn certify_bound<F: Float>(
    w: &Workload<F>,
    b: F,
    prior_class: &PriorClass<F>,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<CertifyReport<F>> {
    if n == 0 {
        return Err(Error::InvalidPrior("certification needs n >= 1".into()));
    }
    let bound = exact_pml_bound(w, b, prior_class)?;
    let witness_rows = match bound.witness {
        BoundWitness::Subset { rows, .. } => rows,
        _ => unreachable!("exact bound always carries a subset witness"),
    };
    let (m, k) = (w.m(), w.k());
    let alpha = prior_class.alpha();
    let slack = F::cast(DOMINANCE_SLACK);
    let width = F::cast(5.0) * b + F::one();
    let row_lo: Vec<F> = (0..m)
        .map(|l| w.row(l).iter().cloned().fold(F::infinity(), F::min))
        .collect();
    let row_hi: Vec<F> = (0..m)
        .map(|l| w.row(l).iter().cloned().fold(F::neg_infinity(), F::max))
        .collect();
    let nf = F::cast(n);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut max_leak = F::neg_infinity();
    for t in 0..trials {
        let prior = ProductPrior::new(n, random_floor_prior(&mut rng, alpha, k), alpha)?;
        let y: Vec<F> = if t % 2 == 0 {
            let counts = sample_histogram(&mut rng, &prior);
            w.apply_counts(&counts)
                .into_iter()
                .map(|ml| ml + b * F::cast(laplace_unit(&mut rng)))
                .collect()
        } else {
            let rows: u64 = rng.random_range(0..(1u64 << m));
            (0..m)
                .map(|l| {
                    let u = F::cast(rng.random::<f64>());
                    if rows >> l & 1 == 1 {
                        nf * row_lo[l] - width * u
                    } else {
                        nf * row_hi[l] + width * u
                    }
                })
                .collect()
        };
        let leak = pointwise_leakage(&y, w, b, &prior)?;
        if leak > bound.value + slack {
            violations += 1;
        }
        if leak > max_leak {
            max_leak = leak;
        }
    }

    let c: Vec<F> = (0..k)
        .map(|j| subset_coefficient(w, witness_rows, j))
        .collect::<Result<_>>()?;
    let extremal = ProductPrior::new(n, build_extremal_prior(&c, prior_class)?, alpha)?;
    let y_star = extreme_outputs(w, n, witness_rows, F::one())?;
    let attained = pointwise_leakage(&y_star, w, b, &extremal)?;

    Ok(CertifyReport {
        trials,
        violations,
        max_leakage_nats: max_leak,
        bound_nats: bound.value,
        attainment_gap_nats: bound.value - attained,
        seed,
    })
}
