//! Dense complex matrices, pure and mixed states, and the basic quantum
//! information primitives built on them.
//!
//! Basis indices follow the big-endian convention: qubit 0 is the most
//! significant bit, so `|q0 q1 ... q(n-1)>` has index `q0 * 2^(n-1) + ...`.
//! Matrices are stored row-major.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// Largest register handled by the dense representation.
pub const MAX_QUBITS: usize = 10;
/// Tolerance on `||H - H^dagger||_max` for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Tolerance on `|Tr(rho) - 1|`.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues above `-PSD_TOL` are clamped to zero; below it they are an error.
pub const PSD_TOL: f64 = 1e-9;
/// Tolerance on the norm of a pure state.
pub const NORM_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a square matrix from real entries given row by row.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::from_vec(
            dim,
            dim,
            entries.iter().map(|&x| C64::new(x, 0.0)).collect(),
        )
    }

    pub fn diagonal(diag: &[C64]) -> Self {
        let d = diag.len();
        let mut m = Self::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * d + i] = v;
        }
        m
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        let mut m = Self::zeros(a.len(), b.len());
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                m.data[i * b.len() + j] = ai * bj.conj();
            }
        }
        m
    }

    /// `|i><j|` in dimension `dim`.
    pub fn basis_operator(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        m.data[i * dim + j] = ONE;
        m
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

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows)
            .map(|r| self.data[r * self.cols + c])
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                m.data[c * self.rows + r] = self.data[r * self.cols + c].conj();
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Self, s: C64) {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// Matrix product; panics on incompatible shapes.
    pub fn dot(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in matrix product");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for ar in 0..self.rows {
            for ac in 0..self.cols {
                let a = self.data[ar * self.cols + ac];
                if a == ZERO {
                    continue;
                }
                for br in 0..other.rows {
                    let row = ar * other.rows + br;
                    for bc in 0..other.cols {
                        out.data[row * cols + ac * other.cols + bc] =
                            a * other.data[br * other.cols + bc];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let d = self.rows;
        let mut err: f64 = 0.0;
        for r in 0..d {
            for c in r..d {
                err = err.max((self.data[r * d + c] - self.data[c * d + r].conj()).norm());
            }
        }
        err
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn unitarity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.adjoint()
            .dot(self)
            .max_abs_diff(&Self::identity(self.rows))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    /// `(H + H^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let d = self.rows;
        let mut out = self.clone();
        for r in 0..d {
            for c in 0..d {
                out.data[r * d + c] = (self.data[r * d + c] + self.data[c * d + r].conj()) * 0.5;
            }
        }
        out
    }

    /// `Re Tr(self * other)` without forming the product.
    pub fn trace_product_re(&self, other: &Self) -> f64 {
        self.trace_product(other).re
    }

    /// `Tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        assert_eq!(self.rows, other.cols, "shape mismatch");
        let mut acc = ZERO;
        for r in 0..self.rows {
            for k in 0..self.cols {
                acc += self.data[r * self.cols + k] * other.data[k * other.cols + r];
            }
        }
        acc
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.data[r * m.ncols() + c] = m[(r, c)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.dot(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.data.len(), rhs.data.len(), "shape mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.data.len(), rhs.data.len(), "shape mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
        out
    }
}

/// Number of qubits for a dimension that must be a power of two.
pub fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidState(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    let n = dim.trailing_zeros() as usize;
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    Ok(n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// Validates that the amplitude vector has power-of-two length and unit norm.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let num_qubits = qubits_for_dim(amplitudes.len())?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "state norm {norm} differs from 1"
            )));
        }
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Scales a nonzero vector to unit norm.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::new(amplitudes)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::TooManyQubits(num_qubits));
        }
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, num_qubits });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self {
            num_qubits,
            amplitudes: amps,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix {
            num_qubits: self.num_qubits,
            matrix: ComplexMatrix::outer(&self.amplitudes, &self.amplitudes),
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `<self|m|self>`.
    pub fn expectation(&self, m: &ComplexMatrix) -> C64 {
        let d = self.amplitudes.len();
        let mut acc = ZERO;
        for r in 0..d {
            let mut row = ZERO;
            for c in 0..d {
                row += m[(r, c)] * self.amplitudes[c];
            }
            acc += self.amplitudes[r].conj() * row;
        }
        acc
    }
}

/// A validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    num_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                found: matrix.cols(),
            });
        }
        let num_qubits = qubits_for_dim(matrix.rows())?;
        let herr = matrix.hermiticity_error();
        if herr > HERMITIAN_TOL {
            return Err(Error::NotHermitian(herr));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = hermitian_eigvals(&matrix)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { num_qubits, matrix })
    }

    /// Wraps a matrix without checking the state invariants.
    ///
    /// The caller must guarantee the matrix is a valid density matrix of
    /// power-of-two dimension.
    pub fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        let num_qubits = matrix.rows().trailing_zeros() as usize;
        Self { num_qubits, matrix }
    }

    /// `|0...0><0...0|` on `num_qubits` qubits.
    pub fn zero_state(num_qubits: usize) -> Result<Self> {
        Ok(PureState::basis(num_qubits, 0)?.density())
    }

    pub fn maximally_mixed(num_qubits: usize) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return Err(Error::TooManyQubits(num_qubits));
        }
        let d = 1usize << num_qubits;
        Ok(Self {
            num_qubits,
            matrix: ComplexMatrix::identity(d).scale_real(1.0 / d as f64),
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_product_re(&self.matrix)
    }
}

/// `a (x) b`; the qubits of `a` come first.
pub fn tensor(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    let n = a.num_qubits + b.num_qubits;
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    Ok(DensityMatrix {
        num_qubits: n,
        matrix: a.matrix.kron(&b.matrix),
    })
}

fn check_targets(targets: &[usize], n: usize) -> Result<()> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= n {
            return Err(Error::IndexOutOfRange {
                index: t,
                num_qubits: n,
            });
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateIndex(t));
        }
    }
    Ok(())
}

/// Basis-index offsets of a local operator acting on `targets` inside an
/// `n`-qubit register. `targets[0]` is the most significant local bit.
struct LocalIndex {
    offsets: Vec<usize>,
    mask: usize,
}

impl LocalIndex {
    fn new(targets: &[usize], n: usize) -> Self {
        let t = targets.len();
        let mut mask = 0usize;
        for &q in targets {
            mask |= 1 << (n - 1 - q);
        }
        let offsets = (0..1usize << t)
            .map(|s| {
                let mut off = 0;
                for (j, &q) in targets.iter().enumerate() {
                    if (s >> (t - 1 - j)) & 1 == 1 {
                        off |= 1 << (n - 1 - q);
                    }
                }
                off
            })
            .collect();
        Self { offsets, mask }
    }

    fn bases(&self, dim: usize) -> impl Iterator<Item = usize> + '_ {
        (0..dim).filter(move |i| i & self.mask == 0)
    }
}

/// `m <- G m`, with `G` acting on `targets` of an `n`-qubit register.
///
/// `m` may be rectangular as long as its row count is `2^n`.
pub fn apply_local_left(m: &mut ComplexMatrix, gate: &ComplexMatrix, targets: &[usize], n: usize) {
    let li = LocalIndex::new(targets, n);
    let g = gate.data();
    let local = li.offsets.len();
    let cols = m.cols;
    let data = &mut m.data;
    let mut buf = vec![ZERO; local];
    for base in li.bases(1 << n) {
        if local == 2 {
            let (r0, r1) = ((base + li.offsets[0]) * cols, (base + li.offsets[1]) * cols);
            let (g00, g01, g10, g11) = (g[0], g[1], g[2], g[3]);
            for c in 0..cols {
                let a = data[r0 + c];
                let b = data[r1 + c];
                data[r0 + c] = g00 * a + g01 * b;
                data[r1 + c] = g10 * a + g11 * b;
            }
        } else {
            for c in 0..cols {
                for (s, b) in buf.iter_mut().enumerate() {
                    *b = data[(base + li.offsets[s]) * cols + c];
                }
                for r in 0..local {
                    let grow = &g[r * local..(r + 1) * local];
                    let v: C64 = grow.iter().zip(&buf).map(|(x, y)| x * y).sum();
                    data[(base + li.offsets[r]) * cols + c] = v;
                }
            }
        }
    }
}

/// `m <- m G^dagger`, with `G` acting on `targets` of an `n`-qubit register.
pub fn apply_local_right_adjoint(
    m: &mut ComplexMatrix,
    gate: &ComplexMatrix,
    targets: &[usize],
    n: usize,
) {
    let li = LocalIndex::new(targets, n);
    let g = gate.data();
    let local = li.offsets.len();
    let cols = m.cols;
    let rows = m.rows;
    let mut buf = vec![ZERO; local];
    let bases: Vec<usize> = li.bases(1 << n).collect();
    for r in 0..rows {
        let row = &mut m.data[r * cols..(r + 1) * cols];
        for &base in &bases {
            if local == 2 {
                let (c0, c1) = (base + li.offsets[0], base + li.offsets[1]);
                let a = row[c0];
                let b = row[c1];
                row[c0] = a * g[0].conj() + b * g[1].conj();
                row[c1] = a * g[2].conj() + b * g[3].conj();
            } else {
                for (s, b) in buf.iter_mut().enumerate() {
                    *b = row[base + li.offsets[s]];
                }
                for rr in 0..local {
                    let grow = &g[rr * local..(rr + 1) * local];
                    let v: C64 = grow.iter().zip(&buf).map(|(x, y)| x.conj() * y).sum();
                    row[base + li.offsets[rr]] = v;
                }
            }
        }
    }
}

/// `m <- G m G^dagger` for a local gate.
pub fn conjugate_local(m: &mut ComplexMatrix, gate: &ComplexMatrix, targets: &[usize], n: usize) {
    apply_local_left(m, gate, targets, n);
    apply_local_right_adjoint(m, gate, targets, n);
}

/// `Tr(c * (G x))` for a local operator `G`, without forming `G x`.
pub fn trace_with_local(
    c: &ComplexMatrix,
    gate: &ComplexMatrix,
    targets: &[usize],
    n: usize,
    x: &ComplexMatrix,
) -> C64 {
    // Tr(C G X) = sum_{a,b} C[a,b] (G X)[b,a]
    let li = LocalIndex::new(targets, n);
    let g = gate.data();
    let local = li.offsets.len();
    let d = 1usize << n;
    let cd = c.data();
    let xd = x.data();
    let mut acc = ZERO;
    for base in li.bases(d) {
        for r in 0..local {
            let b = base + li.offsets[r];
            for s in 0..local {
                let gv = g[r * local + s];
                if gv == ZERO {
                    continue;
                }
                let k = base + li.offsets[s];
                let xrow = &xd[k * d..(k + 1) * d];
                let mut inner = ZERO;
                for a in 0..d {
                    inner += cd[a * d + b] * xrow[a];
                }
                acc += gv * inner;
            }
        }
    }
    acc
}

/// Full `2^n x 2^n` matrix of `gate` acting on `targets`.
pub fn embed(gate: &ComplexMatrix, targets: &[usize], n: usize) -> Result<ComplexMatrix> {
    if n > MAX_QUBITS {
        return Err(Error::TooManyQubits(n));
    }
    check_targets(targets, n)?;
    let local = 1usize << targets.len();
    if !gate.is_square() || gate.rows() != local {
        return Err(Error::DimensionMismatch {
            expected: local,
            found: gate.rows(),
        });
    }
    let mut m = ComplexMatrix::identity(1 << n);
    apply_local_left(&mut m, gate, targets, n);
    Ok(m)
}

/// Traces out every qubit not listed in `keep`. Kept qubits appear in
/// ascending index order in the result.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let m = partial_trace_matrix(&rho.matrix, rho.num_qubits, keep)?;
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// Partial trace of an arbitrary square operator on `n` qubits.
pub fn partial_trace_matrix(m: &ComplexMatrix, n: usize, keep: &[usize]) -> Result<ComplexMatrix> {
    check_targets(keep, n)?;
    if m.rows() != 1 << n || !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: 1 << n,
            found: m.rows(),
        });
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    let traced: Vec<usize> = (0..n).filter(|q| !kept.contains(q)).collect();
    let kept_idx = LocalIndex::new(&kept, n).offsets;
    let traced_idx = LocalIndex::new(&traced, n).offsets;
    let dk = kept_idx.len();
    let d = 1usize << n;
    let mut out = ComplexMatrix::zeros(dk, dk);
    for &t in &traced_idx {
        for (i, &ki) in kept_idx.iter().enumerate() {
            let row = (ki + t) * d;
            for (j, &kj) in kept_idx.iter().enumerate() {
                out.data[i * dk + j] += m.data[row + kj + t];
            }
        }
    }
    Ok(out)
}

/// `m (x) |0...0><0...0|` on `extra` additional trailing qubits.
pub fn append_zero_ancillas(m: &ComplexMatrix, extra: usize) -> ComplexMatrix {
    if extra == 0 {
        return m.clone();
    }
    let scale = 1usize << extra;
    let d = m.rows() * scale;
    let mut out = ComplexMatrix::zeros(d, m.cols() * scale);
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out.data[(r * scale) * out.cols + c * scale] = m.data[r * m.cols + c];
        }
    }
    out
}

/// `m (x) I` on `extra` additional trailing qubits.
pub fn append_identity(m: &ComplexMatrix, extra: usize) -> ComplexMatrix {
    m.kron(&ComplexMatrix::identity(1 << extra))
}

fn check_square(h: &ComplexMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            found: h.cols(),
        });
    }
    Ok(())
}

/// Eigenvalues of the Hermitian part of `h`, in ascending order.
pub fn hermitian_eigvals(h: &ComplexMatrix) -> Result<Vec<f64>> {
    check_square(h)?;
    let sym = h.hermitian_part().to_nalgebra();
    let mut vals: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Eigen-decomposition `h = V diag(vals) V^dagger` of the Hermitian part of
/// `h`; eigenvectors are the columns of `V`.
pub fn hermitian_eigh(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    check_square(h)?;
    let eig = h.hermitian_part().to_nalgebra().symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    Ok((vals, ComplexMatrix::from_nalgebra(&eig.eigenvectors)))
}

/// `V f(diag(vals)) V^dagger`.
pub fn spectral_map(vals: &[f64], vecs: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let d = vals.len();
    let fv: Vec<f64> = vals.iter().map(|&v| f(v)).collect();
    let mut out = ComplexMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let mut acc = ZERO;
            for (k, &w) in fv.iter().enumerate() {
                if w != 0.0 {
                    acc += vecs.data[r * d + k] * vecs.data[c * d + k].conj() * w;
                }
            }
            out.data[r * d + c] = acc;
        }
    }
    out
}

/// Trace norm `sum |lambda_i|` of a Hermitian operator.
pub fn trace_norm(h: &ComplexMatrix) -> Result<f64> {
    Ok(hermitian_eigvals(h)?.iter().map(|v| v.abs()).sum())
}

/// `T(rho, sigma) = 1/2 * sum |lambda(rho - sigma)|`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    Ok(0.5 * trace_norm(&(&rho.matrix - &sigma.matrix))?)
}

fn clamp_psd(vals: &mut [f64]) -> Result<()> {
    for v in vals.iter_mut() {
        if *v < -PSD_TOL {
            return Err(Error::Numerical(format!("negative eigenvalue {v:.3e}")));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Zeroes eigenvalues at the roundoff level of the largest one, whose square
/// roots would otherwise add errors of order `sqrt(eps)`.
fn drop_roundoff(vals: &mut [f64]) {
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 64.0 * f64::EPSILON * top.max(1.0);
    for v in vals.iter_mut() {
        if *v < floor {
            *v = 0.0;
        }
    }
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let (mut vals, vecs) = hermitian_eigh(&rho.matrix)?;
    clamp_psd(&mut vals)?;
    drop_roundoff(&mut vals);
    let sqrt_rho = spectral_map(&vals, &vecs, f64::sqrt);
    let inner = sqrt_rho.dot(&sigma.matrix).dot(&sqrt_rho);
    let mut ev = hermitian_eigvals(&inner)?;
    clamp_psd(&mut ev)?;
    drop_roundoff(&mut ev);
    let s: f64 = ev.iter().map(|v| v.sqrt()).sum();
    Ok((s * s).min(1.0))
}

/// `U rho U^dagger`.
pub fn conjugate(rho: &DensityMatrix, u: &ComplexMatrix) -> Result<DensityMatrix> {
    if u.rows() != rho.dim() || !u.is_square() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: u.rows(),
        });
    }
    let uerr = u.unitarity_error();
    if uerr > 1e-8 {
        return Err(Error::NotUnitary(uerr));
    }
    let m = u.dot(&rho.matrix).dot(&u.adjoint());
    Ok(DensityMatrix::from_matrix_unchecked(m.hermitian_part()))
}

/// Standard single-qubit matrices.
pub mod gates {
    use super::{ComplexMatrix, C64, I, ONE, ZERO};

    pub fn pauli_i() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
    }

    pub fn pauli_y() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]).unwrap()
    }

    pub fn pauli_z() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ONE, ZERO, ZERO, -ONE]).unwrap()
    }

    pub fn hadamard() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_real(2, &[h, h, h, -h]).unwrap()
    }

    pub fn phase(phi: f64) -> ComplexMatrix {
        ComplexMatrix::diagonal(&[ONE, C64::from_polar(1.0, phi)])
    }

    pub fn rx(theta: f64) -> ComplexMatrix {
        let (s, c) = (theta / 2.0).sin_cos();
        ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(c, 0.0),
                C64::new(0.0, -s),
                C64::new(0.0, -s),
                C64::new(c, 0.0),
            ],
        )
        .unwrap()
    }

    pub fn ry(theta: f64) -> ComplexMatrix {
        let (s, c) = (theta / 2.0).sin_cos();
        ComplexMatrix::from_real(2, &[c, -s, s, c]).unwrap()
    }

    pub fn rz(theta: f64) -> ComplexMatrix {
        ComplexMatrix::diagonal(&[
            C64::from_polar(1.0, -theta / 2.0),
            C64::from_polar(1.0, theta / 2.0),
        ])
    }

    /// `U3(theta, phi, lambda)` in the OpenQASM convention.
    pub fn u3(theta: f64, phi: f64, lambda: f64) -> ComplexMatrix {
        let (s, c) = (theta / 2.0).sin_cos();
        ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(c, 0.0),
                -C64::from_polar(s, lambda),
                C64::from_polar(s, phi),
                C64::from_polar(c, phi + lambda),
            ],
        )
        .unwrap()
    }

    /// Two-qubit controlled gate, control on the first (most significant) qubit.
    pub fn controlled(u: &ComplexMatrix) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(4);
        for r in 0..2 {
            for c in 0..2 {
                m[(2 + r, 2 + c)] = u[(r, c)];
            }
        }
        m
    }

    pub fn cz() -> ComplexMatrix {
        ComplexMatrix::diagonal(&[ONE, ONE, ONE, -ONE])
    }

    pub fn cx() -> ComplexMatrix {
        controlled(&pauli_x())
    }

    pub fn swap() -> ComplexMatrix {
        ComplexMatrix::from_real(
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        )
        .unwrap()
    }

    /// Tensor product of Paulis from a string over `IXYZ`; `None` on other symbols.
    pub fn pauli_string(s: &str) -> Option<ComplexMatrix> {
        let mut m = ComplexMatrix::identity(1);
        for ch in s.chars() {
            let p = match ch {
                'I' => pauli_i(),
                'X' => pauli_x(),
                'Y' => pauli_y(),
                'Z' => pauli_z(),
                _ => return None,
            };
            m = m.kron(&p);
        }
        Some(m)
    }
}
