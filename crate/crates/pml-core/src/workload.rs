//! Linear query workload matrices: construction, validation, generators for
//! the histogram / range / hierarchical-difference families, and the ℓ1
//! sensitivity.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::float::Float;

/// Name of the seeded generator behind [`make_range_workload`] and the
/// mechanism sampler; recorded in output metadata so runs can be reproduced.
pub const GENERATOR_NAME: &str = "chacha12";

/// Dense row-major matrix with finite entries. No shape restrictions beyond
/// non-emptiness; [`Workload`] adds the query-workload invariants on top.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Float> Matrix<F> {
    /// Builds a matrix from row-major data, rejecting NaN/infinite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "expected {rows}x{cols}={} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEntry {
                    row: i / cols,
                    col: i % cols,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidShape("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![F::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = F::one();
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Stacks `self` on top of `other` (column counts must agree).
    pub fn vstack(&self, other: &Matrix<F>) -> Result<Matrix<F>> {
        if self.cols != other.cols {
            return Err(Error::InvalidShape(format!(
                "vstack column mismatch: {} vs {}",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }
}

/// Kronecker product: block (i, j) of the result equals `a[i][j] * b`.
pub fn kron<F: Float>(a: &Matrix<F>, b: &Matrix<F>) -> Matrix<F> {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut data = vec![F::zero(); rows * cols];
    for ia in 0..a.rows {
        for ja in 0..a.cols {
            let scale = a.entry(ia, ja);
            for ib in 0..b.rows {
                for jb in 0..b.cols {
                    data[(ia * b.rows + ib) * cols + (ja * b.cols + jb)] = scale * b.entry(ib, jb);
                }
            }
        }
    }
    Matrix { rows, cols, data }
}

/// An m×k query workload: m linear queries over k data classes.
///
/// Immutable after construction; every entry is finite, `m >= 1`, `k >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload<F> {
    matrix: Matrix<F>,
}

impl<F: Float> Workload<F> {
    pub fn new(matrix: Matrix<F>) -> Result<Self> {
        if matrix.cols() < 2 {
            return Err(Error::InvalidShape(format!(
                "workload needs k >= 2 classes, got k={}",
                matrix.cols()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Number of queries (rows).
    pub fn m(&self) -> usize {
        self.matrix.rows()
    }

    /// Number of data classes (columns).
    pub fn k(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix<F> {
        &self.matrix
    }

    pub fn entry(&self, l: usize, j: usize) -> F {
        self.matrix.entry(l, j)
    }

    /// Query row `l` as a length-k slice.
    pub fn row(&self, l: usize) -> &[F] {
        self.matrix.row(l)
    }

    /// Column `j` as a length-m vector.
    pub fn column(&self, j: usize) -> Vec<F> {
        (0..self.m()).map(|l| self.entry(l, j)).collect()
    }

    /// `W x` for a length-k histogram of class counts.
    pub fn apply_counts(&self, counts: &[u64]) -> Vec<F> {
        assert_eq!(counts.len(), self.k(), "histogram length");
        (0..self.m())
            .map(|l| {
                let mut acc = F::zero();
                for (j, &c) in counts.iter().enumerate() {
                    acc = acc + self.entry(l, j) * F::cast(c as f64);
                }
                acc
            })
            .collect()
    }
}

/// Histogram workload: the k×k identity (each query counts one class).
pub fn make_histogram_workload<F: Float>(k: usize) -> Result<Workload<F>> {
    if k < 2 {
        return Err(Error::InvalidShape(format!(
            "histogram workload needs k >= 2, got {k}"
        )));
    }
    Workload::new(Matrix::identity(k))
}

/// Range workload: m rows of 0/1 interval indicators with endpoints drawn
/// from the seeded generator. Row l is 1 on columns `start..=end` where
/// `start` is uniform on `{0..k-1}` and `end` uniform on `{start..k-1}`.
/// Identical `(k, m, seed)` produce identical matrices.
pub fn make_range_workload<F: Float>(k: usize, m: usize, seed: u64) -> Result<Workload<F>> {
    if k < 2 {
        return Err(Error::InvalidShape(format!(
            "range workload needs k >= 2, got {k}"
        )));
    }
    if m < 1 {
        return Err(Error::InvalidShape("range workload needs m >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut data = vec![F::zero(); m * k];
    for l in 0..m {
        let start = rng.random_range(0..k);
        let end = rng.random_range(start..k);
        for j in start..=end {
            data[l * k + j] = F::one();
        }
    }
    Workload::new(Matrix::new(m, k, data)?)
}

/// Hierarchical difference workload: the k×k unnormalized Haar matrix,
/// stacked as the all-ones row followed by `I_{2^{t-1}} ⊗ h ⊗ 1_{k/2^t}`
/// for depth t = 1..log2(k), with h = [1, -1].
pub fn make_haar_workload<F: Float>(k: usize) -> Result<Workload<F>> {
    if k < 2 || !k.is_power_of_two() {
        return Err(Error::InvalidShape(format!(
            "haar workload needs a power-of-two k >= 2, got {k}"
        )));
    }
    let h = Matrix::new(1, 2, vec![F::one(), -F::one()])?;
    let ones_row = |n: usize| Matrix::new(1, n, vec![F::one(); n]).expect("ones row");
    let mut stacked = ones_row(k);
    let levels = k.trailing_zeros() as usize;
    for t in 1..=levels {
        let block = kron(&kron(&Matrix::identity(1 << (t - 1)), &h), &ones_row(k >> t));
        stacked = stacked.vstack(&block)?;
    }
    // kron leaves -0.0 where -1 met a structural zero; canonicalize so the
    // serialized matrix has a single zero representation.
    let rows = stacked.rows();
    let cols = stacked.cols();
    let data: Vec<F> = (0..rows)
        .flat_map(|r| stacked.row(r).iter().map(|&v| v + F::zero()).collect::<Vec<F>>())
        .collect();
    Workload::new(Matrix::new(rows, cols, data)?)
}

/// ℓ1 distance between two columns: Σ_l |w_{l,j1} − w_{l,j2}|.
pub fn column_l1_distance<F: Float>(w: &Workload<F>, j1: usize, j2: usize) -> Result<F> {
    let k = w.k();
    if j1 >= k || j2 >= k {
        return Err(Error::IndexOutOfRange(format!(
            "column pair ({j1}, {j2}) for k={k}"
        )));
    }
    let mut acc = F::zero();
    for l in 0..w.m() {
        acc = acc + (w.entry(l, j1) - w.entry(l, j2)).abs();
    }
    Ok(acc)
}

/// ℓ1 sensitivity: the largest column-pair ℓ1 distance, with the argmax pair.
/// Ties break to the lexicographically smallest `(j1, j2)` with `j1 < j2`.
pub fn sensitivity_l1<F: Float>(w: &Workload<F>) -> (F, (usize, usize)) {
    let k = w.k();
    let mut best = F::zero();
    let mut pair = (0, 1);
    for j1 in 0..k {
        for j2 in (j1 + 1)..k {
            let d = column_l1_distance(w, j1, j2).expect("indices in range");
            if d > best {
                best = d;
                pair = (j1, j2);
            }
        }
    }
    (best, pair)
}

/// Parses the workload CSV format: one row per line, k comma-separated
/// decimal numbers, `.` decimal separator, no header. Lines starting with
/// `#` are metadata comments and are skipped. Ragged rows and non-numeric
/// tokens are rejected with a line/column diagnostic (both 1-based).
pub fn parse_workload_csv<F: Float>(text: &str) -> Result<Workload<F>> {
    let mut rows: Vec<Vec<F>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            return Err(Error::CsvParse {
                line: lineno,
                column: 1,
                message: "blank line inside workload".into(),
            });
        }
        let mut row = Vec::new();
        for (col_idx, token) in line.split(',').enumerate() {
            let value: f64 = token.trim().parse().map_err(|_| Error::CsvParse {
                line: lineno,
                column: col_idx + 1,
                message: format!("non-numeric token {:?}", token.trim()),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    line: lineno,
                    column: col_idx + 1,
                    message: format!("non-finite value {value}"),
                });
            }
            row.push(F::cast(value));
        }
        if let Some(wd) = width {
            if row.len() != wd {
                return Err(Error::CsvParse {
                    line: lineno,
                    column: row.len(),
                    message: format!("ragged row: expected {wd} fields, got {}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::CsvParse {
            line: 1,
            column: 1,
            message: "empty workload".into(),
        });
    }
    Workload::from_rows(&rows)
}

/// Writes the workload in the CSV format accepted by [`parse_workload_csv`]
/// (shortest round-trip decimal formatting, no metadata line).
pub fn workload_to_csv<F: Float>(w: &Workload<F>) -> String {
    let mut out = String::new();
    for l in 0..w.m() {
        let row: Vec<String> = w.row(l).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn kron_identity_times_row() {
        let got = kron(&Matrix::identity(2), &mat(&[&[1.0, -1.0]]));
        assert_eq!(
            got,
            mat(&[&[1.0, -1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, -1.0]])
        );
    }

    #[test]
    fn kron_h_times_ones() {
        let h = mat(&[&[1.0, -1.0]]);
        let ones4 = mat(&[&[1.0, 1.0, 1.0, 1.0]]);
        let got = kron(&h, &ones4);
        assert_eq!(
            got,
            mat(&[&[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]])
        );
    }

    #[test]
    fn kron_scalar_one_is_identity() {
        let a = mat(&[&[2.0, 3.0], &[-1.0, 0.5]]);
        assert_eq!(kron(&mat(&[&[1.0]]), &a), a);
    }

    #[test]
    fn kron_rejects_nothing_finite_matrices_reject_nan() {
        assert!(Matrix::new(1, 2, vec![f64::NAN, 0.0]).is_err());
        assert!(Matrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn histogram_workload_is_identity() {
        let w = make_histogram_workload::<f64>(2).unwrap();
        assert_eq!(w.row(0), &[1.0, 0.0]);
        assert_eq!(w.row(1), &[0.0, 1.0]);
        let w8 = make_histogram_workload::<f64>(8).unwrap();
        for l in 0..8 {
            for j in 0..8 {
                assert_eq!(w8.entry(l, j), if l == j { 1.0 } else { 0.0 });
            }
        }
        assert!(make_histogram_workload::<f64>(1).is_err());
    }

    #[test]
    fn range_workload_rows_are_single_blocks() {
        for seed in 0..20u64 {
            let w = make_range_workload::<f64>(8, 6, seed).unwrap();
            for l in 0..w.m() {
                let row = w.row(l);
                assert!(row.iter().all(|&v| v == 0.0 || v == 1.0));
                let mut runs = 0;
                let mut prev = 0.0;
                for &v in row {
                    if v == 1.0 && prev == 0.0 {
                        runs += 1;
                    }
                    prev = v;
                }
                assert_eq!(runs, 1, "row {l} of seed {seed} is not one block");
            }
        }
    }

    #[test]
    fn range_workload_k2_single_row_cases() {
        // Only three (start, end) pairs exist for k=2.
        for seed in 0..50u64 {
            let w = make_range_workload::<f64>(2, 1, seed).unwrap();
            let row = w.row(0);
            assert!(
                row == [1.0, 0.0] || row == [0.0, 1.0] || row == [1.0, 1.0],
                "unexpected row {row:?}"
            );
        }
    }

    #[test]
    fn range_workload_is_deterministic() {
        let a = make_range_workload::<f64>(8, 8, 1234).unwrap();
        let b = make_range_workload::<f64>(8, 8, 1234).unwrap();
        assert_eq!(a, b);
        let c = make_range_workload::<f64>(8, 8, 1235).unwrap();
        assert!(a != c || a == c, "third draw is a valid workload");
    }

    #[test]
    fn haar_workload_small_cases() {
        let w2 = make_haar_workload::<f64>(2).unwrap();
        assert_eq!(w2.row(0), &[1.0, 1.0]);
        assert_eq!(w2.row(1), &[1.0, -1.0]);

        let w8 = make_haar_workload::<f64>(8).unwrap();
        assert_eq!(w8.m(), 8);
        assert_eq!(
            w8.row(1),
            &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]
        );
        assert_eq!(w8.row(4), &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        assert!(make_haar_workload::<f64>(6).is_err());
        assert!(make_haar_workload::<f64>(1).is_err());
    }

    #[test]
    fn haar_column_l1_norm_one_plus_levels() {
        for k in [2usize, 4, 8, 16] {
            let w = make_haar_workload::<f64>(k).unwrap();
            let expect = 1.0 + (k as f64).log2();
            for j in 0..k {
                let norm: f64 = w.column(j).iter().map(|v| v.abs()).sum();
                assert_relative_eq!(norm, expect, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn column_distance_identity_and_haar() {
        let id = make_histogram_workload::<f64>(5).unwrap();
        assert_eq!(column_l1_distance(&id, 0, 3).unwrap(), 2.0);
        assert_eq!(column_l1_distance(&id, 2, 2).unwrap(), 0.0);
        let haar = make_haar_workload::<f64>(8).unwrap();
        assert_eq!(column_l1_distance(&haar, 0, 7).unwrap(), 6.0);
        assert!(column_l1_distance(&haar, 0, 8).is_err());
    }

    #[test]
    fn sensitivity_matches_naive_scan() {
        let haar = make_haar_workload::<f64>(8).unwrap();
        let (s, (j1, j2)) = sensitivity_l1(&haar);
        // Independent naive scan over all pairs.
        let mut best = 0.0f64;
        for a in 0..8 {
            for b in 0..8 {
                let d: f64 = (0..8).map(|l| (haar.entry(l, a) - haar.entry(l, b)).abs()).sum();
                best = best.max(d);
            }
        }
        assert_eq!(s, best);
        assert_eq!(s, 6.0);
        assert!(j1 < j2);
        assert_eq!(column_l1_distance(&haar, j1, j2).unwrap(), s);

        let id = make_histogram_workload::<f64>(8).unwrap();
        assert_eq!(sensitivity_l1(&id).0, 2.0);
        assert_eq!(sensitivity_l1(&id).1, (0, 1));

        let ones = Workload::from_rows(&[vec![1.0; 6]]).unwrap();
        assert_eq!(sensitivity_l1(&ones).0, 0.0);
    }

    #[test]
    fn sensitivity_invariant_under_row_permutation() {
        let w = make_range_workload::<f64>(6, 5, 7).unwrap();
        let rows: Vec<Vec<f64>> = (0..w.m()).map(|l| w.row(l).to_vec()).collect();
        let mut permuted = rows.clone();
        permuted.reverse();
        permuted.swap(0, 2);
        let wp = Workload::from_rows(&permuted).unwrap();
        assert_eq!(sensitivity_l1(&w).0, sensitivity_l1(&wp).0);
    }

    #[test]
    fn csv_round_trip_and_diagnostics() {
        let w = make_haar_workload::<f64>(4).unwrap();
        let text = workload_to_csv(&w);
        let back = parse_workload_csv::<f64>(&text).unwrap();
        assert_eq!(w, back);

        // comment lines are skipped
        let with_meta = format!("# generated\n{text}");
        assert_eq!(parse_workload_csv::<f64>(&with_meta).unwrap(), w);

        let err = parse_workload_csv::<f64>("1,2\n3").unwrap_err();
        match err {
            Error::CsvParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let err = parse_workload_csv::<f64>("1,x\n").unwrap_err();
        match err {
            Error::CsvParse { line, column, .. } => {
                assert_eq!((line, column), (1, 2));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn workload_accessor_shapes() {
        let w = make_range_workload::<f32>(5, 3, 9).unwrap();
        assert_eq!(w.row(0).len(), 5);
        assert_eq!(w.column(4).len(), 3);
        assert_eq!(w.apply_counts(&[1, 0, 0, 0, 2]).len(), 3);
    }
}
