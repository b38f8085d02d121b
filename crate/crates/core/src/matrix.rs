//! Dense small-matrix utilities: determinant, adjugate, the Jacobi trace form
//! of the determinant derivative, and the structural matrices (duplication,
//! extraction, eliminators, annihilator) used by the mixing and annihilation
//! stages.
//!
//! Everything here is stored dense and row-major. Dimensions in this problem
//! are tiny (at most `2n` with `n` the regressor length), so the adjugate is
//! always assembled from cofactors and never as `det(M) * M^-1`; this keeps it
//! well defined at `det(M) = 0`, which the pipeline hits at its initial time.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data, checking the length.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a validated square matrix: `dim >= 1` and all entries finite.
    pub fn square(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::dims("square matrix must have dim >= 1"));
        }
        let m = Self::from_vec(dim, dim, entries)?;
        m.ensure_finite("square matrix")?;
        Ok(m)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dims("ragged rows"));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.iter().flat_map(|row| row.iter().copied()).collect(),
        })
    }

    /// Column vector `v` as a `len x 1` matrix.
    pub fn column_vector(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// Outer product `a b^T`.
    pub fn outer(a: &[f64], b: &[f64]) -> Self {
        let mut data = Vec::with_capacity(a.len() * b.len());
        for &ai in a {
            for &bj in b {
                data.push(ai * bj);
            }
        }
        Self {
            rows: a.len(),
            cols: b.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Matrix) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "axpy shape mismatch"
        );
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.axpy(1.0, other);
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::dims(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn try_mul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product. Panics on a length mismatch.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec length mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T v` without forming the transpose.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "tr_mul_vec length mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    /// Panics on incompatible shapes; use [`Matrix::try_mul`] for a fallible product.
    fn mul(self, rhs: &Matrix) -> Matrix {
        self.try_mul(rhs).expect("matrix product shape mismatch")
    }
}

fn require_square(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Determinant and adjugate
// ---------------------------------------------------------------------------

/// Largest dimension handled by explicit cofactor expansion in [`determinant`].
pub const COFACTOR_DET_MAX_DIM: usize = 4;

/// Largest dimension whose adjugate is assembled from cofactor-expanded minors.
pub const COFACTOR_ADJ_MAX_DIM: usize = 5;

/// Determinant of a square matrix.
///
/// Dimensions up to 4 use cofactor expansion; larger ones use an LU
/// factorization with partial pivoting.
pub fn determinant(m: &Matrix) -> Result<f64> {
    require_square(m)?;
    m.ensure_finite("determinant operand")?;
    Ok(det_raw(&m.data, m.rows))
}

fn det_raw(a: &[f64], n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => det3(a),
        4 => det4(a),
        _ => det_lu(a, n),
    }
}

#[inline]
fn det3(a: &[f64]) -> f64 {
    a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
        + a[2] * (a[3] * a[7] - a[4] * a[6])
}

fn det4(a: &[f64]) -> f64 {
    // Laplace expansion along the first row, reusing the 2x2 minors of the
    // bottom two rows.
    let s0 = a[8] * a[13] - a[9] * a[12];
    let s1 = a[8] * a[14] - a[10] * a[12];
    let s2 = a[8] * a[15] - a[11] * a[12];
    let s3 = a[9] * a[14] - a[10] * a[13];
    let s4 = a[9] * a[15] - a[11] * a[13];
    let s5 = a[10] * a[15] - a[11] * a[14];

    let c0 = a[5] * s5 - a[6] * s4 + a[7] * s3;
    let c1 = a[4] * s5 - a[6] * s2 + a[7] * s1;
    let c2 = a[4] * s4 - a[5] * s2 + a[7] * s0;
    let c3 = a[4] * s3 - a[5] * s1 + a[6] * s0;

    a[0] * c0 - a[1] * c1 + a[2] * c2 - a[3] * c3
}

fn det_lu(a: &[f64], n: usize) -> f64 {
    let mut lu = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[i * n + col].abs().total_cmp(&lu[j * n + col].abs()))
            .unwrap_or(col);
        let p = lu[pivot * n + col];
        if p == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                lu.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        det *= p;
        for i in col + 1..n {
            let factor = lu[i * n + col] / p;
            if factor != 0.0 {
                for j in col + 1..n {
                    lu[i * n + j] -= factor * lu[col * n + j];
                }
            }
        }
    }
    det
}

/// Minor of `a` (n x n, row-major) with row `r` and column `c` removed,
/// written into `out`.
fn minor_into(a: &[f64], n: usize, r: usize, c: usize, out: &mut [f64]) {
    let mut k = 0;
    for i in (0..n).filter(|&i| i != r) {
        for j in (0..n).filter(|&j| j != c) {
            out[k] = a[i * n + j];
            k += 1;
        }
    }
}

/// Adjugate (classical adjoint) of a square matrix: the transpose of its
/// cofactor matrix, so that `adj(M) M = M adj(M) = det(M) I` for every `M`,
/// singular or not.
pub fn adjugate(m: &Matrix) -> Result<Matrix> {
    require_square(m)?;
    m.ensure_finite("adjugate operand")?;
    Ok(adjugate_unchecked(m))
}

fn adjugate_unchecked(m: &Matrix) -> Matrix {
    let n = m.rows;
    let mut adj = Matrix::zeros(n, n);
    match n {
        0 => {}
        1 => adj.data[0] = 1.0,
        2 => {
            let a = &m.data;
            adj.data.copy_from_slice(&[a[3], -a[1], -a[2], a[0]]);
        }
        _ => {
            let mut buf = vec![0.0; (n - 1) * (n - 1)];
            for i in 0..n {
                for j in 0..n {
                    minor_into(&m.data, n, i, j, &mut buf);
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    adj[(j, i)] = sign * det_raw(&buf, n - 1);
                }
            }
        }
    }
    adj
}

/// Determinant and adjugate computed together.
pub fn det_and_adjugate(m: &Matrix) -> Result<(f64, Matrix)> {
    require_square(m)?;
    m.ensure_finite("adjugate operand")?;
    Ok((det_raw(&m.data, m.rows), adjugate_unchecked(m)))
}

/// `tr(adj(M) * Mdot)`, the time derivative of `det(M)` along a trajectory
/// with velocity `Mdot`.
pub fn jacobi_rate(m: &Matrix, mdot: &Matrix) -> Result<f64> {
    require_square(m)?;
    if (m.rows, m.cols) != (mdot.rows, mdot.cols) {
        return Err(Error::dims(format!(
            "jacobi_rate operands {}x{} and {}x{}",
            m.rows, m.cols, mdot.rows, mdot.cols
        )));
    }
    let adj = adjugate(m)?;
    Ok(trace_of_product(&adj, mdot))
}

/// `tr(A B)` for square `A`, `B` of equal size, without forming the product.
pub fn trace_of_product(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Numerical rank by Gaussian elimination with full pivoting; pivots below
/// `rel_tol * max|entry|` count as zero.
pub fn rank(m: &Matrix, rel_tol: f64) -> usize {
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.data.clone();
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let tol = rel_tol * scale;
    let mut r = 0;
    let mut col_perm: Vec<usize> = (0..cols).collect();
    while r < rows.min(cols) {
        let mut best = (r, r, 0.0f64);
        for i in r..rows {
            for jj in r..cols {
                let v = a[i * cols + col_perm[jj]].abs();
                if v > best.2 {
                    best = (i, jj, v);
                }
            }
        }
        if best.2 <= tol {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            a.swap(r * cols + j, pi * cols + j);
        }
        col_perm.swap(r, pj);
        let pc = col_perm[r];
        let p = a[r * cols + pc];
        for i in r + 1..rows {
            let f = a[i * cols + pc] / p;
            for jj in r..cols {
                let c = col_perm[jj];
                a[i * cols + c] -= f * a[r * cols + c];
            }
        }
        r += 1;
    }
    r
}

// ---------------------------------------------------------------------------
// Structural matrices
// ---------------------------------------------------------------------------

/// `D = [I_n; -I_n]`, mapping `theta` to the stacked parameter `[theta; -theta]`.
pub fn duplication_matrix(n: usize) -> Matrix {
    let mut d = Matrix::zeros(2 * n, n);
    for i in 0..n {
        d[(i, i)] = 1.0;
        d[(n + i, i)] = -1.0;
    }
    d
}

/// `L0 = [I_n, 0_n]`, extracting the first half of a stacked vector.
pub fn extraction_matrix(n: usize) -> Matrix {
    let mut l0 = Matrix::zeros(n, 2 * n);
    for i in 0..n {
        l0[(i, i)] = 1.0;
    }
    l0
}

/// Stacked parameter vector `[theta; -theta]`.
pub fn stack_parameters(theta: &[f64]) -> Vec<f64> {
    theta.iter().copied().chain(theta.iter().map(|x| -x)).collect()
}

/// Annihilator for the duplication matrix: a `2n x 2m` matrix whose columns
/// are taken from `[I_n; I_n]` (a basis of the null space of `D^T`).
///
/// `column_choice` holds 0-based indices into that basis; by default the
/// first `2m` columns are used. The result satisfies `H^T D = 0` exactly
/// and has full column rank.
pub fn build_annihilator(n: usize, m: usize, column_choice: Option<&[usize]>) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Eliminators("regressor dimension must be >= 1".into()));
    }
    if 2 * m > n {
        return Err(Error::Eliminators(format!(
            "annihilator regime violated: 2m = {} exceeds n = {n}",
            2 * m
        )));
    }
    let columns: Vec<usize> = match column_choice {
        Some(cols) => {
            if cols.len() != 2 * m {
                return Err(Error::Eliminators(format!(
                    "annihilator needs exactly {} columns, got {}",
                    2 * m,
                    cols.len()
                )));
            }
            let mut seen = vec![false; n];
            for &c in cols {
                if c >= n {
                    return Err(Error::Eliminators(format!(
                        "annihilator column {c} out of range 0..{n}"
                    )));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(Error::Eliminators(format!(
                        "annihilator column {c} chosen twice"
                    )));
                }
            }
            cols.to_vec()
        }
        None => (0..2 * m).collect(),
    };
    let mut h = Matrix::zeros(2 * n, 2 * m);
    for (k, &c) in columns.iter().enumerate() {
        h[(c, k)] = 1.0;
        h[(n + c, k)] = 1.0;
    }
    Ok(h)
}

/// Selection and annihilation matrices splitting the stacked `2n`
/// perturbation into its regressor-correlated part (`l1`) and the part that
/// averages out (`l2`).
#[derive(Debug, Clone, PartialEq)]
pub struct EliminatorSet {
    pub n: usize,
    /// 0-based indices of the perturbation-correlated regressor channels.
    pub correlated: Vec<usize>,
    pub l1: Matrix,
    pub l2: Matrix,
    pub h: Matrix,
    pub d: Matrix,
    pub l0: Matrix,
}

impl EliminatorSet {
    /// Number of correlated channel pairs.
    pub fn m(&self) -> usize {
        self.correlated.len()
    }

    /// True when nothing is correlated and no annihilation is needed.
    pub fn is_case_one(&self) -> bool {
        self.correlated.is_empty()
    }
}

/// Builds `L1`, `L2`, `H`, `D` and `L0` for a regressor of length `n` whose
/// channels `correlated` (0-based) share spectrum with the perturbation.
///
/// `L1` selects the coordinate pairs `{i, n + i}` for `i` in `correlated`
/// (first all `i`, then all `n + i`); `L2` selects the rest in increasing
/// order.
pub fn build_eliminators(
    n: usize,
    correlated: &[usize],
    h_columns: Option<&[usize]>,
) -> Result<EliminatorSet> {
    if n == 0 {
        return Err(Error::Eliminators("regressor dimension must be >= 1".into()));
    }
    let mut sorted = correlated.to_vec();
    sorted.sort_unstable();
    if let Some(&bad) = sorted.iter().find(|&&i| i >= n) {
        return Err(Error::Eliminators(format!(
            "correlated index {bad} out of range 0..{n}"
        )));
    }
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Eliminators("duplicate correlated index".into()));
    }
    let m = sorted.len();
    if 2 * m > n {
        return Err(Error::Eliminators(format!(
            "annihilator regime violated: {m} correlated channels need 2m <= n = {n}"
        )));
    }

    let selected: Vec<usize> = sorted
        .iter()
        .copied()
        .chain(sorted.iter().map(|i| n + i))
        .collect();
    let rest: Vec<usize> = (0..2 * n).filter(|i| !selected.contains(i)).collect();

    let mut l1 = Matrix::zeros(2 * n, 2 * m);
    for (k, &i) in selected.iter().enumerate() {
        l1[(i, k)] = 1.0;
    }
    let mut l2 = Matrix::zeros(2 * n, rest.len());
    for (k, &i) in rest.iter().enumerate() {
        l2[(i, k)] = 1.0;
    }

    Ok(EliminatorSet {
        n,
        correlated: sorted,
        l1,
        l2,
        h: build_annihilator(n, m, h_columns)?,
        d: duplication_matrix(n),
        l0: extraction_matrix(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm_det(m: &Matrix) -> f64 {
        // Leibniz expansion over all permutations.
        fn rec(m: &Matrix, row: usize, used: &mut Vec<bool>, sign: f64, acc: f64) -> f64 {
            let n = m.rows();
            if row == n {
                return sign * acc;
            }
            let mut total = 0.0;
            let mut inversions_before = 0;
            for c in 0..n {
                if used[c] {
                    continue;
                }
                // number of unused columns smaller than c decides the sign
                let s = if inversions_before % 2 == 0 { 1.0 } else { -1.0 };
                used[c] = true;
                total += rec(m, row + 1, used, sign * s, acc * m[(row, c)]);
                used[c] = false;
                inversions_before += 1;
            }
            total
        }
        rec(m, 0, &mut vec![false; m.rows()], 1.0, 1.0)
    }

    #[test]
    fn adjugate_of_identity() {
        let i3 = Matrix::identity(3);
        assert_eq!(adjugate(&i3).unwrap(), i3);
    }

    #[test]
    fn adjugate_two_by_two() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let expected = Matrix::from_rows(&[&[4.0, -2.0], &[-3.0, 1.0]]).unwrap();
        assert_eq!(adjugate(&m).unwrap(), expected);
    }

    #[test]
    fn adjugate_of_singular_matrix_is_defined() {
        let m = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[1.0, 0.0, 1.0]]).unwrap();
        let adj = adjugate(&m).unwrap();
        assert_eq!(determinant(&m).unwrap(), 0.0);
        let prod = &adj * &m;
        assert!(prod.max_abs() < 1e-12);
        assert!(adj.max_abs() > 0.0);
    }

    #[test]
    fn random_four_by_four_against_permutation_oracle() {
        // fixed pseudo-random entries in [-1, 1]
        let entries = [
            0.37, -0.82, 0.14, 0.91, -0.55, 0.23, -0.68, 0.49, 0.77, -0.11, 0.35, -0.96, 0.02,
            0.64, -0.29, 0.58,
        ];
        let m = Matrix::square(4, entries.to_vec()).unwrap();
        let det = perm_det(&m);
        assert!((determinant(&m).unwrap() - det).abs() <= 1e-14 * det.abs().max(1.0));
        let prod = &adjugate(&m).unwrap() * &m;
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { det } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() <= 1e-12 * det.abs());
            }
        }
    }

    #[test]
    fn determinant_simple_cases() {
        for n in 1..8 {
            assert_eq!(determinant(&Matrix::identity(n)).unwrap(), 1.0);
        }
        let d = Matrix::diagonal(&[2.0, -3.0, 0.5, 4.0, 1.5]);
        assert!((determinant(&d).unwrap() - (-18.0)).abs() < 1e-12);
    }

    #[test]
    fn lu_and_cofactor_agree_on_five_by_five() {
        let mut m = Matrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                m[(i, j)] = ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 3.0 } else { 0.0 };
            }
        }
        // cofactor expansion along the first row using 4x4 minors
        let mut buf = vec![0.0; 16];
        let mut by_cofactor = 0.0;
        for j in 0..5 {
            minor_into(m.as_slice(), 5, 0, j, &mut buf);
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            by_cofactor += s * m[(0, j)] * det4(&buf);
        }
        let lu = determinant(&m).unwrap();
        assert!((lu - by_cofactor).abs() <= 1e-10 * by_cofactor.abs().max(1.0));
        assert!((lu - perm_det(&m)).abs() <= 1e-10 * lu.abs().max(1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(adjugate(&rect), Err(Error::NotSquare { .. })));
        assert!(matches!(determinant(&rect), Err(Error::NotSquare { .. })));
        assert!(Matrix::square(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
        assert!(Matrix::square(0, vec![]).is_err());
        let mut m = Matrix::identity(2);
        m[(0, 1)] = f64::INFINITY;
        assert!(matches!(adjugate(&m), Err(Error::NonFinite(_))));
        assert!(jacobi_rate(&Matrix::identity(2), &Matrix::identity(3)).is_err());
    }

    #[test]
    fn jacobi_rate_simple_cases() {
        let i2 = Matrix::identity(2);
        assert_eq!(jacobi_rate(&i2, &i2).unwrap(), 2.0);
        let m = Matrix::diagonal(&[2.0, 3.0, 5.0]);
        let md = Matrix::diagonal(&[0.5, -1.0, 2.0]);
        let expected = 0.5 * 3.0 * 5.0 + (-1.0) * 2.0 * 5.0 + 2.0 * 2.0 * 3.0;
        assert!((jacobi_rate(&m, &md).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn eliminators_two_channel_case() {
        let e = build_eliminators(2, &[0], None).unwrap();
        let l1 = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(e.l1, l1);
        let ht = Matrix::from_rows(&[&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(e.h.transpose(), ht);
        assert_eq!(
            e.d,
            Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]]).unwrap()
        );
        assert_eq!(
            e.l0,
            Matrix::from_rows(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn case_one_has_full_l2() {
        let e = build_eliminators(2, &[], None).unwrap();
        assert!(e.is_case_one());
        assert_eq!(&e.l2 * &e.l2.transpose(), Matrix::identity(4));
        assert_eq!(e.l1.cols(), 0);
        assert_eq!(e.h.cols(), 0);
    }

    #[test]
    fn completeness_for_four_channels() {
        let e = build_eliminators(4, &[0, 1], None).unwrap();
        let sum = (&e.l1 * &e.l1.transpose())
            .add(&(&e.l2 * &e.l2.transpose()))
            .unwrap();
        assert_eq!(sum, Matrix::identity(8));
    }

    #[test]
    fn annihilator_with_custom_columns() {
        let h = build_annihilator(4, 2, Some(&[1, 2, 0, 3])).unwrap();
        let htd = &h.transpose() * &duplication_matrix(4);
        assert_eq!(htd.max_abs(), 0.0);
        assert_eq!(rank(&h, 1e-12), 4);
    }

    #[test]
    fn eliminator_errors() {
        assert!(build_eliminators(2, &[0, 1], None).is_err());
        assert!(build_eliminators(3, &[0, 1], None).is_err());
        assert!(build_eliminators(2, &[2], None).is_err());
        assert!(build_eliminators(4, &[1, 1], None).is_err());
        assert!(build_annihilator(3, 2, None).is_err());
        assert!(build_annihilator(4, 1, Some(&[0])).is_err());
        assert!(build_annihilator(4, 1, Some(&[0, 0])).is_err());
        assert!(build_annihilator(4, 1, Some(&[0, 4])).is_err());
    }
}
