//! Small dense linear algebra: row-major matrices, Cholesky and Householder QR.
//!
//! Sizes in this crate stay below a few thousand rows (filter covariances,
//! GP Gram matrices, candidate libraries), so everything is plain loops over
//! contiguous `Vec<f64>` storage.

use std::fmt;

use super::NumError;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    spd: bool,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        Ok(())
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_vec(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * n + i] = *d;
        }
        m
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "DenseMatrix::from_vec: {rows}x{cols} needs {} entries", rows * cols);
        Self { rows, cols, data, spd: false }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    /// Column vector (n x 1).
    pub fn column(values: &[f64]) -> Self {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// True only after a successful [`DenseMatrix::certify_spd`].
    pub fn is_spd(&self) -> bool {
        self.spd
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access drops any SPD certificate.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.spd = false;
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.spd = false;
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col_vec(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self::from_vec(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::from_vec(self.rows, self.cols, data)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|a| a * s).collect())
    }

    pub fn add_diag(&mut self, v: f64) {
        self.spd = false;
        for i in 0..self.rows.min(self.cols) {
            self.data[i * self.cols + i] += v;
        }
    }

    /// ‖A − Aᵀ‖∞ as the largest absolute entry difference.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r + 1..self.cols {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Replaces A with (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        let n = self.rows;
        for r in 0..n {
            for c in r + 1..n {
                let m = 0.5 * (self.data[r * n + c] + self.data[c * n + r]);
                self.data[r * n + c] = m;
                self.data[c * n + r] = m;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Factorizes and, on success, marks this matrix as SPD.
    pub fn certify_spd(&mut self) -> Result<Cholesky, NumError> {
        let chol = Cholesky::factor(self)?;
        self.spd = true;
        Ok(chol)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular factor `L` with `A = L·Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self, NumError> {
        if !a.is_square() {
            return Err(NumError::Shape(format!("cholesky of {}x{} matrix", a.rows, a.cols)));
        }
        let n = a.rows;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                let v = l.data[j * n + k];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(NumError::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l.data[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a.get(i, j);
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    s -= l.data[ri + k] * l.data[rj + k];
                }
                l.data[ri + j] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// log|A| = 2·Σ log Lᵢᵢ.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves L·y = b.
    pub fn forward_sub(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &y[..i]);
            y[i] = (y[i] - s) / row[i];
        }
        y
    }

    /// Solves Lᵀ·x = y.
    pub fn back_sub(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(y.len(), n);
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.back_sub(&self.forward_sub(b))
    }

    /// A⁻¹ assembled column by column.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let x = self.solve(&e);
            for r in 0..n {
                inv.data[r * n + c] = x[r];
            }
        }
        inv.symmetrize();
        inv
    }
}

/// Solution of `A·x = b` together with `log|A|`.
#[derive(Clone, Debug)]
pub struct CholeskySolution {
    pub x: Vec<f64>,
    pub log_det: f64,
}

/// Solves a symmetric positive-definite system through its Cholesky factor.
pub fn cholesky_solve(a: &DenseMatrix, b: &[f64]) -> Result<CholeskySolution, NumError> {
    if a.rows != b.len() {
        return Err(NumError::Shape(format!("{}x{} system with rhs of length {}", a.rows, a.cols, b.len())));
    }
    let chol = Cholesky::factor(a)?;
    Ok(CholeskySolution { x: chol.solve(b), log_det: chol.log_det() })
}

/// Maximum number of jitter doublings tried by [`cholesky_with_jitter`].
pub const MAX_JITTER_DOUBLINGS: u32 = 8;

/// Factorizes `A`, retrying with additive diagonal jitter `1e-10·tr(A)/n`
/// doubled up to [`MAX_JITTER_DOUBLINGS`] times. Returns the factor and the
/// jitter actually added (0 when none was needed).
pub fn cholesky_with_jitter(a: &DenseMatrix) -> Result<(Cholesky, f64), NumError> {
    match Cholesky::factor(a) {
        Ok(c) => return Ok((c, 0.0)),
        Err(NumError::Shape(s)) => return Err(NumError::Shape(s)),
        Err(_) => {}
    }
    let n = a.rows.max(1) as f64;
    let base = (1e-10 * a.trace().abs() / n).max(f64::MIN_POSITIVE);
    let mut jitter = base;
    let mut last = None;
    for _ in 0..=MAX_JITTER_DOUBLINGS {
        let mut shifted = a.clone();
        shifted.add_diag(jitter);
        match Cholesky::factor(&shifted) {
            Ok(c) => return Ok((c, jitter)),
            Err(e) => last = Some(e),
        }
        jitter *= 2.0;
    }
    Err(last.unwrap_or(NumError::NotPositiveDefinite { pivot: 0, value: f64::NAN }))
}

/// Least squares `min ‖A·x − b‖²` by Householder QR. `A` must have full
/// column rank and at least as many rows as columns.
pub fn lstsq(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumError> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(NumError::Shape(format!("lstsq: {m} rows but rhs length {}", b.len())));
    }
    if m < n {
        return Err(NumError::Shape(format!("lstsq: underdetermined {m}x{n}")));
    }
    // Work column-major for contiguous Householder updates.
    let mut q: Vec<Vec<f64>> = (0..n).map(|c| a.col_vec(c)).collect();
    let mut rhs = b.to_vec();
    let mut rdiag = vec![0.0; n];
    for k in 0..n {
        let norm = q[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(NumError::Singular { column: k });
        }
        let alpha = if q[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = q[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        rdiag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for col in q.iter_mut().skip(k + 1) {
            let s = 2.0 * dot(&v, &col[k..]) / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        let s = 2.0 * dot(&v, &rhs[k..]) / vnorm2;
        for (r, vi) in rhs[k..].iter_mut().zip(&v) {
            *r -= s * vi;
        }
    }
    let scale = rdiag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        if rdiag[i].abs() <= scale * 1e-14 {
            return Err(NumError::Singular { column: i });
        }
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= q[j][i] * x[j];
        }
        x[i] = s / rdiag[i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Gaussian elimination with partial pivoting, kept independent of the
    /// Cholesky path.
    fn eliminate(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
        let n = a.rows();
        let mut m: Vec<Vec<f64>> = (0..n).map(|r| {
            let mut row = a.row(r).to_vec();
            row.push(b[r]);
            row
        }).collect();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
            m.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
            x[r] = (m[r][n] - s) / m[r][r];
        }
        x
    }

    #[test]
    fn identity_system() {
        let sol = cholesky_solve(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(sol.x, vec![1.0, 2.0, 3.0]);
        assert_eq!(sol.log_det, 0.0);
    }

    #[test]
    fn two_by_two_matches_elimination() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let b = [2.0, 1.0];
        let expected = eliminate(&a, &b);
        // frozen: x = (0.5, 0.0)
        assert!((expected[0] - 0.5).abs() < 1e-15 && expected[1].abs() < 1e-15);
        let sol = cholesky_solve(&a, &b).unwrap();
        for (x, e) in sol.x.iter().zip(&expected) {
            assert!((x - e).abs() < 1e-12);
        }
        assert!((sol.log_det - 8.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(cholesky_solve(&a, &[1.0, 1.0]), Err(NumError::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn spd_flag_only_after_success() {
        let mut a = DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        assert!(!a.is_spd());
        a.certify_spd().unwrap();
        assert!(a.is_spd());
        a.set(0, 0, 3.0);
        assert!(!a.is_spd());
        let mut bad = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(bad.certify_spd().is_err());
        assert!(!bad.is_spd());
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        // rank-1: v vᵀ
        let v = [1.0, 2.0, 3.0];
        let mut a = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                a.set(i, j, v[i] * v[j]);
            }
        }
        let (_, jitter) = cholesky_with_jitter(&a).unwrap();
        assert!(jitter > 0.0);
        let neg = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(cholesky_with_jitter(&neg).is_err());
    }

    #[test]
    fn qr_least_squares_line_fit() {
        // y = 2 + 3x exactly
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let a = DenseMatrix::from_rows(&xs.iter().map(|x| vec![1.0, *x]).collect::<Vec<_>>());
        let b: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let sol = lstsq(&a, &b).unwrap();
        assert!((sol[0] - 2.0).abs() < 1e-12 && (sol[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn qr_rejects_rank_deficiency() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert!(matches!(lstsq(&a, &[1.0, 2.0, 3.0]), Err(NumError::Singular { .. })));
    }
}
