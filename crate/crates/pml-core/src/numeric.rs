//! Small numerics: compensated summation and stable log-sum-exp.

use crate::float::Float;

/// Kahan–Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy)]
pub struct KahanSum<F> {
    sum: F,
    compensation: F,
}

impl<F: Float> KahanSum<F> {
    pub fn new() -> Self {
        Self {
            sum: F::zero(),
            compensation: F::zero(),
        }
    }

    pub fn add(&mut self, value: F) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation = self.compensation + ((self.sum - t) + value);
        } else {
            self.compensation = self.compensation + ((value - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> F {
        self.sum + self.compensation
    }
}

impl<F: Float> Default for KahanSum<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Extend<F> for KahanSum<F> {
    fn extend<I: IntoIterator<Item = F>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

/// log(Σ exp(x_i)) with the maximum subtracted before exponentiation.
///
/// Empty input yields −∞. A +∞ element propagates as +∞.
pub fn log_sum_exp<F: Float>(xs: &[F]) -> F {
    let mut m = F::neg_infinity();
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if !m.is_finite() {
        // all −∞ (empty sum) or a +∞ term
        return m;
    }
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add((x - m).exp());
    }
    m + acc.value().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_matches_naive_in_range() {
        let xs = [0.5f64, -1.25, 2.0, 0.0];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&xs), naive, max_relative = 1e-15);
    }

    #[test]
    fn log_sum_exp_survives_large_magnitudes() {
        let xs = [-1400.0f64, -1402.0];
        let expected = -1400.0 + (1.0f64 + (-2.0f64).exp()).ln();
        assert_relative_eq!(log_sum_exp(&xs), expected, max_relative = 1e-15);
        assert!(log_sum_exp::<f64>(&[]).is_infinite());
    }

    #[test]
    fn kahan_recovers_cancellation() {
        let mut acc = KahanSum::new();
        acc.add(1.0f64);
        for _ in 0..10 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert_relative_eq!(acc.value(), 1e-15, max_relative = 1e-10);
    }
}
