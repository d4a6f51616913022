//! Leakage bounds for Laplace-noised linear query workloads: the exact
//! subset-enumeration bound, its column-pair relaxation, the noise-scaled DP
//! budget, and the trivial `log(1/alpha)` cap, each carrying a witness that
//! reproduces the reported value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::numeric::KahanSum;
use crate::workload::{column_l1_distance, sensitivity_l1, Workload};

/// Default row-count cap for the exact bound's 2^m subset enumeration.
pub const DEFAULT_SUBSET_CAP: usize = 20;

/// Hard ceiling on the subset cap: subsets are u64 bitmasks.
pub const MAX_SUBSET_CAP: usize = 63;

/// Gray-code steps between from-scratch coefficient recomputations. Keeps
/// the drift of the incremental updates orders of magnitude below the 1e-12
/// witness-consistency tolerance.
const REFRESH_INTERVAL: u64 = 256;

/// Prior family parameter: every data class carries probability at least
/// `alpha`, so the informed adversary's prior is bounded away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorClass<F> {
    alpha: F,
    k: usize,
}

impl<F: Float> PriorClass<F> {
    /// Requires `k >= 2` and `0 < alpha <= 1/k` (the upper end is legal:
    /// `alpha = 1/k` forces the uniform prior).
    pub fn new(alpha: F, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidShape(format!(
                "prior class needs k >= 2, got {k}"
            )));
        }
        let limit = F::one() / F::cast(k);
        if !(alpha > F::zero()) || alpha > limit || !alpha.is_finite() {
            return Err(Error::InvalidAlpha {
                alpha: alpha.to_f64().unwrap_or(f64::NAN),
                k,
            });
        }
        Ok(Self { alpha, k })
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `1 - k*alpha`, the prior mass not pinned to the per-class floor.
    /// Clamped at zero: rounding of `k*alpha` may dip past one at
    /// `alpha = 1/k`.
    fn residual(&self) -> F {
        (F::one() - F::cast(self.k) * self.alpha).max(F::zero())
    }
}

/// Which bound a [`BoundResult`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    ExactPml,
    SimplifiedPml,
    Dp,
    Trivial,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::ExactPml => "exact_pml",
            BoundKind::SimplifiedPml => "simplified_pml",
            BoundKind::Dp => "dp",
            BoundKind::Trivial => "trivial",
        }
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Argument attaining a bound's maximization. Row subsets are bitmasks:
/// bit `l` set means query row `l` is in the subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundWitness {
    /// Maximizing row subset with the classes attaining the minimal and
    /// maximal subset coefficient under it (smallest index on ties).
    Subset { rows: u64, j_min: usize, j_max: usize },
    /// Maximizing ordered column pair.
    ColumnPair { j1: usize, j2: usize },
    /// The bound has no maximizing argument.
    None,
}

/// A computed leakage bound in nats, tagged with the inputs it used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundResult<F> {
    /// Bound value in nats; always >= 0.
    pub value: F,
    pub kind: BoundKind,
    pub witness: BoundWitness,
    /// Prior floor used; `None` for the DP budget (prior-independent).
    pub alpha: Option<F>,
    /// Laplace scale used; `None` for the trivial bound (noise-independent).
    pub b: Option<F>,
}

fn check_scale<F: Float>(b: F) -> Result<()> {
    if !(b > F::zero()) || !b.is_finite() {
        return Err(Error::NonPositiveScale(b.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

fn check_prior_dim<F: Float>(w: &Workload<F>, prior: &PriorClass<F>) -> Result<()> {
    if prior.k() != w.k() {
        return Err(Error::DimensionMismatch(format!(
            "prior has k={}, workload has k={}",
            prior.k(),
            w.k()
        )));
    }
    Ok(())
}

fn check_subset<F: Float>(w: &Workload<F>, rows: u64) -> Result<()> {
    let m = w.m();
    if m < 64 && rows >> m != 0 {
        return Err(Error::IndexOutOfRange(format!(
            "subset bitmask {rows:#b} selects rows >= m={m}"
        )));
    }
    Ok(())
}

/// Signed column sum under a row split: Σ_{l in rows} w_{lj} − Σ_{l not in
/// rows} w_{lj}. This is the per-class coefficient of the extreme-output
/// region selected by the subset.
pub fn subset_coefficient<F: Float>(w: &Workload<F>, rows: u64, j: usize) -> Result<F> {
    check_subset(w, rows)?;
    if j >= w.k() {
        return Err(Error::IndexOutOfRange(format!(
            "column {j} for k={}",
            w.k()
        )));
    }
    let mut acc = KahanSum::new();
    for l in 0..w.m() {
        let x = w.entry(l, j);
        acc.add(if rows >> l & 1 == 1 { x } else { -x });
    }
    Ok(acc.value())
}

/// Bound value for one subset given its coefficients `c`. Returns
/// `(value, j_min, j_max)` with smallest-index tie-breaks.
///
/// Evaluated as `(-c[j_min]/b - s) - log(alpha Σ_j e^{-c_j/b - s} +
/// (1 - k alpha) e^{-c[j_max]/b - s})` with shift `s = max_j(-c_j/b)`, so
/// every exponent is <= 0 and the log argument lies in `(0, 1]` up to
/// rounding. The value is clamped at zero.
fn eval_coefficients<F: Float>(c: &[F], b: F, prior: &PriorClass<F>) -> (F, usize, usize) {
    let mut j_min = 0;
    let mut j_max = 0;
    for (j, &v) in c.iter().enumerate() {
        if v < c[j_min] {
            j_min = j;
        }
        if v > c[j_max] {
            j_max = j;
        }
    }
    let s = -c[j_min] / b;
    let mut mix = KahanSum::new();
    for &v in c {
        mix.add((-v / b - s).exp());
    }
    let arg = prior.alpha() * mix.value() + prior.residual() * (-c[j_max] / b - s).exp();
    let value = (-c[j_min] / b - s) - arg.ln();
    (value.max(F::zero()), j_min, j_max)
}

fn eval_at_subset<F: Float>(
    w: &Workload<F>,
    b: F,
    prior: &PriorClass<F>,
    rows: u64,
) -> Result<(F, usize, usize)> {
    let c: Vec<F> = (0..w.k())
        .map(|j| subset_coefficient(w, rows, j))
        .collect::<Result<_>>()?;
    Ok(eval_coefficients(&c, b, prior))
}

/// The exact-bound expression evaluated at one fixed row subset, without
/// the maximization. Lets callers re-check a stored witness.
pub fn subset_bound_value<F: Float>(
    w: &Workload<F>,
    b: F,
    prior: &PriorClass<F>,
    rows: u64,
) -> Result<F> {
    check_scale(b)?;
    check_prior_dim(w, prior)?;
    Ok(eval_at_subset(w, b, prior, rows)?.0)
}

/// Exact leakage bound: the maximum of the extreme-region expression over
/// all 2^m row subsets, with the default subset cap.
///
/// The subset decomposition is exhaustive when every row takes at most two
/// distinct values (identity, histogram, range): the value is then the true
/// worst case over all outputs. Rows with three or more distinct values
/// admit outputs pinned at interior row entries that no sign-split region
/// covers, where leakage can exceed this value; the value is still attained,
/// and the oracle certifier reports any such excess.
pub fn exact_pml_bound<F: Float>(
    w: &Workload<F>,
    b: F,
    prior: &PriorClass<F>,
) -> Result<BoundResult<F>> {
    exact_pml_bound_with_cap(w, b, prior, DEFAULT_SUBSET_CAP)
}

/// Exact leakage bound with an explicit subset cap. Workloads with more
/// than `subset_cap` rows are refused rather than approximated.
///
/// Subsets are walked in Gray-code order so each step updates the k
/// coefficients by toggling a single row (O(2^m k) total). Ties between
/// maximizing subsets break toward the smallest bitmask; the winner is
/// re-evaluated from scratch so the reported value is drift-free.
pub fn exact_pml_bound_with_cap<F: Float>(
    w: &Workload<F>,
    b: F,
    prior: &PriorClass<F>,
    subset_cap: usize,
) -> Result<BoundResult<F>> {
    check_scale(b)?;
    check_prior_dim(w, prior)?;
    if subset_cap == 0 || subset_cap > MAX_SUBSET_CAP {
        return Err(Error::InvalidSubsetCap(subset_cap));
    }
    let m = w.m();
    if m > subset_cap {
        return Err(Error::SubsetExplosion { m, cap: subset_cap });
    }
    let k = w.k();
    let two = F::cast(2.0);

    let from_scratch = |rows: u64, c: &mut [F]| {
        for (j, slot) in c.iter_mut().enumerate() {
            let mut acc = KahanSum::new();
            for l in 0..m {
                let x = w.entry(l, j);
                acc.add(if rows >> l & 1 == 1 { x } else { -x });
            }
            *slot = acc.value();
        }
    };

    let mut c = vec![F::zero(); k];
    from_scratch(0, &mut c);
    let (mut best_value, _, _) = eval_coefficients(&c, b, prior);
    let mut best_rows = 0u64;

    let mut prev_gray = 0u64;
    for step in 1..(1u64 << m) {
        let gray = step ^ (step >> 1);
        let flipped = (gray ^ prev_gray).trailing_zeros() as usize;
        if gray >> flipped & 1 == 1 {
            for (j, slot) in c.iter_mut().enumerate() {
                *slot = *slot + two * w.entry(flipped, j);
            }
        } else {
            for (j, slot) in c.iter_mut().enumerate() {
                *slot = *slot - two * w.entry(flipped, j);
            }
        }
        if step % REFRESH_INTERVAL == 0 {
            from_scratch(gray, &mut c);
        }
        let (value, _, _) = eval_coefficients(&c, b, prior);
        if value > best_value || (value == best_value && gray < best_rows) {
            best_value = value;
            best_rows = gray;
        }
        prev_gray = gray;
    }

    let (value, j_min, j_max) = eval_at_subset(w, b, prior, best_rows)?;
    Ok(BoundResult {
        value,
        kind: BoundKind::ExactPml,
        witness: BoundWitness::Subset {
            rows: best_rows,
            j_min,
            j_max,
        },
        alpha: Some(prior.alpha()),
        b: Some(b),
    })
}

/// The column-pair expression evaluated at one fixed ordered pair, without
/// the maximization: `-log(alpha Σ_j e^{-Δ_{j,j1}} + (1-k alpha)
/// e^{-Δ_{j1,j2}})` with `Δ_{j,j'} = ‖w_{:,j} − w_{:,j'}‖₁ / b`.
pub fn pair_bound_value<F: Float>(
    w: &Workload<F>,
    b: F,
    prior: &PriorClass<F>,
    j1: usize,
    j2: usize,
) -> Result<F> {
    check_scale(b)?;
    check_prior_dim(w, prior)?;
    let k = w.k();
    if j1 >= k || j2 >= k {
        return Err(Error::IndexOutOfRange(format!(
            "column pair ({j1}, {j2}) for k={k}"
        )));
    }
    let mut mix = KahanSum::new();
    for j in 0..k {
        mix.add((-column_l1_distance(w, j, j1)? / b).exp());
    }
    let far = (-column_l1_distance(w, j1, j2)? / b).exp();
    let arg = prior.alpha() * mix.value() + prior.residual() * far;
    Ok((-arg.ln()).max(F::zero()))
}

/// Simplified leakage bound: the maximum of the column-pair expression over
/// all ordered pairs (j1, j2). No subset cap applies; cost is O(k² m).
///
/// For fixed j1 the expression grows with the pair distance, so j2 is the
/// column farthest from j1 in ℓ1 (smallest index on ties); across j1 ties
/// break toward the smaller index.
pub fn simplified_pml_bound<F: Float>(
    w: &Workload<F>,
    b: F,
    prior: &PriorClass<F>,
) -> Result<BoundResult<F>> {
    check_scale(b)?;
    check_prior_dim(w, prior)?;
    let k = w.k();

    // delta[j1 * k + j] = ‖w_{:,j1} − w_{:,j}‖₁ / b, symmetric.
    let mut delta = vec![F::zero(); k * k];
    for j1 in 0..k {
        for j2 in (j1 + 1)..k {
            let d = column_l1_distance(w, j1, j2)? / b;
            delta[j1 * k + j2] = d;
            delta[j2 * k + j1] = d;
        }
    }

    let mut best_value = F::neg_infinity();
    let mut best_pair = (0, 0);
    for j1 in 0..k {
        let mut mix = KahanSum::new();
        let mut far = 0;
        for j in 0..k {
            let d = delta[j1 * k + j];
            mix.add((-d).exp());
            if d > delta[j1 * k + far] {
                far = j;
            }
        }
        let arg =
            prior.alpha() * mix.value() + prior.residual() * (-delta[j1 * k + far]).exp();
        let value = (-arg.ln()).max(F::zero());
        if value > best_value {
            best_value = value;
            best_pair = (j1, far);
        }
    }

    Ok(BoundResult {
        value: best_value,
        kind: BoundKind::SimplifiedPml,
        witness: BoundWitness::ColumnPair {
            j1: best_pair.0,
            j2: best_pair.1,
        },
        alpha: Some(prior.alpha()),
        b: Some(b),
    })
}

/// DP budget of the Laplace mechanism: ℓ1 sensitivity over the noise scale,
/// witnessed by the column pair attaining the sensitivity.
pub fn dp_epsilon<F: Float>(w: &Workload<F>, b: F) -> Result<BoundResult<F>> {
    check_scale(b)?;
    let (delta1, (j1, j2)) = sensitivity_l1(w);
    Ok(BoundResult {
        value: delta1 / b,
        kind: BoundKind::Dp,
        witness: BoundWitness::ColumnPair { j1, j2 },
        alpha: None,
        b: Some(b),
    })
}

/// Trivial leakage cap `log(1/alpha)`: what releasing a record with no
/// noise at all would leak under the prior floor.
pub fn trivial_bound<F: Float>(prior: &PriorClass<F>) -> BoundResult<F> {
    BoundResult {
        value: -prior.alpha().ln(),
        kind: BoundKind::Trivial,
        witness: BoundWitness::None,
        alpha: Some(prior.alpha()),
        b: None,
    }
}

/// The row subset under which the spread of subset coefficients between
/// columns j1 and j2 equals their full ℓ1 distance: `{ l : w_{l,j1} >=
/// w_{l,j2} }`. This subset maximizes `c_{j1} − c_{j2}` over all subsets.
pub fn dp_witness_subset<F: Float>(w: &Workload<F>, j1: usize, j2: usize) -> Result<u64> {
    let k = w.k();
    if j1 >= k || j2 >= k {
        return Err(Error::IndexOutOfRange(format!(
            "column pair ({j1}, {j2}) for k={k}"
        )));
    }
    if w.m() > 64 {
        return Err(Error::InvalidShape(
            "subset bitmasks support at most 64 rows".into(),
        ));
    }
    let mut rows = 0u64;
    for l in 0..w.m() {
        if w.entry(l, j1) >= w.entry(l, j2) {
            rows |= 1 << l;
        }
    }
    Ok(rows)
}

/// The prior in the class minimizing the mixture denominator for given
/// per-class coefficients: floor mass `alpha` everywhere, the remaining
/// `1 − (k−1) alpha` on the argmax coefficient (smallest index on ties).
pub fn build_extremal_prior<F: Float>(c: &[F], prior: &PriorClass<F>) -> Result<Vec<F>> {
    if c.len() != prior.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for k={}",
            c.len(),
            prior.k()
        )));
    }
    let mut j_star = 0;
    for (j, &v) in c.iter().enumerate() {
        if v > c[j_star] {
            j_star = j;
        }
    }
    let mut p = vec![prior.alpha(); c.len()];
    p[j_star] = F::one() - F::cast(c.len() - 1) * prior.alpha();
    Ok(p)
}

/// True iff the exact and simplified bounds agree within `tol`. A numerical
/// stand-in for the structural tightness condition, which the source
/// formulation leaves ambiguous.
pub fn simplified_tightness_check<F: Float>(
    w: &Workload<F>,
    b: F,
    prior: &PriorClass<F>,
    tol: F,
) -> Result<bool> {
    let exact = exact_pml_bound(w, b, prior)?;
    let simplified = simplified_pml_bound(w, b, prior)?;
    Ok((exact.value - simplified.value).abs() <= tol)
}
