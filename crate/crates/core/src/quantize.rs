//! Torus quantization of symbols on a truncated Fourier basis.
//!
//! Basis vectors are `e_m(x) = (2π)^{-d/2} e^{i⟨x, m⟩}` for integer `m` with
//! `‖m‖∞ ≤ K`, ordered by `|m|` and then lexicographically. The same vectors
//! diagonalise the flat Laplace–Beltrami operator with eigenvalue `|m|²`, so
//! the basis order is the eigenvalue order of `-Δ`.
//!
//! Counting calibration: the number of frequencies with `|m| ≤ R` is
//! `Vol(B₁) Rᵈ (1 + o(1)) = (Vol S^{d-1} / d) Rᵈ (1 + o(1))`. Pairing the
//! first `n` basis vectors with the ball of radius `n^{1/d}` in frequency
//! space therefore carries no extra factor beyond the `(2π)^{-d}` of the
//! quantization itself.
//!
//! Matrix entries follow the Kohn–Nirenberg rule
//! `T[a][b] = (2π)^{-d} ∫ e^{-i⟨x, m_a - m_b⟩} p(x, m_b) dx`, i.e. the forward
//! `x`-Fourier coefficient of `p(·, m_b)` at `m_a - m_b`, computed by an FFT
//! on a uniform periodic grid.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::symbol::Symbol;

pub const DEFAULT_MATRIX_BUDGET: usize = 6000;
/// Environment variable overriding [`DEFAULT_MATRIX_BUDGET`].
pub const BUDGET_ENV: &str = "DIXLAB_MAX_N";
/// Supports closer than this to the edge of `(-π, π)^d` are rejected.
pub const SUPPORT_MARGIN: f64 = 0.1;

/// Upper bound on the basis size `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixBudget(pub usize);

impl Default for MatrixBudget {
    fn default() -> Self {
        Self(DEFAULT_MATRIX_BUDGET)
    }
}

impl MatrixBudget {
    pub fn unlimited() -> Self {
        Self(usize::MAX)
    }

    /// Default budget, overridden by `DIXLAB_MAX_N` when set and valid.
    pub fn from_env() -> Self {
        std::env::var(BUDGET_ENV).ok().and_then(|v| v.trim().parse().ok()).map(Self).unwrap_or_default()
    }

    pub fn check(&self, required: usize) -> Result<()> {
        if required > self.0 {
            return Err(Error::Budget { required, budget: self.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyBasis {
    d: usize,
    k: usize,
    freqs: Vec<i64>,
}

impl FrequencyBasis {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn cutoff(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.freqs.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freq(&self, j: usize) -> &[i64] {
        &self.freqs[j * self.d..(j + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> {
        self.freqs.chunks_exact(self.d)
    }

    pub fn norm_sq(&self, j: usize) -> i64 {
        self.freq(j).iter().map(|m| m * m).sum()
    }
}

pub fn basis_size(d: usize, k: usize) -> Option<usize> {
    (2 * k + 1).checked_pow(d as u32)
}

/// Frequencies `‖m‖∞ ≤ K` in `ℤᵈ`, sorted by `|m|²` then lexicographically.
pub fn enumerate_frequencies(d: usize, k: usize, budget: MatrixBudget) -> Result<FrequencyBasis> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidInput(format!("dimension {d} unsupported (1..=3)")));
    }
    if k == 0 {
        return Err(Error::InvalidInput("frequency cutoff K must be >= 1".into()));
    }
    let n = basis_size(d, k).ok_or(Error::Budget { required: usize::MAX, budget: budget.0 })?;
    budget.check(n)?;
    let side = 2 * k as i64 + 1;
    let mut all: Vec<Vec<i64>> = (0..n as i64)
        .map(|mut idx| {
            let mut m = vec![0i64; d];
            for slot in m.iter_mut().rev() {
                *slot = idx % side - k as i64;
                idx /= side;
            }
            m
        })
        .collect();
    all.sort_by(|a, b| {
        let na: i64 = a.iter().map(|v| v * v).sum();
        let nb: i64 = b.iter().map(|v| v * v).sum();
        na.cmp(&nb).then_with(|| a.cmp(b))
    });
    Ok(FrequencyBasis { d, k, freqs: all.into_iter().flatten().collect() })
}

/// Dense complex matrix on a frequency basis.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    basis: Arc<FrequencyBasis>,
    entries: Mat<Complex64>,
    label: String,
}

impl OperatorMatrix {
    pub fn new(basis: Arc<FrequencyBasis>, entries: Mat<Complex64>, label: impl Into<String>) -> Result<Self> {
        let n = basis.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{} but basis has {n} vectors",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for j in 0..n {
            for i in 0..n {
                let z = entries[(i, j)];
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
                }
            }
        }
        Ok(Self { basis, entries, label: label.into() })
    }

    /// Raw matrix on a synthetic index basis (`d = 1`, labels `0..n`), for
    /// operators that do not come from quantization.
    pub fn from_mat(entries: Mat<Complex64>, label: impl Into<String>) -> Result<Self> {
        let n = entries.nrows();
        let basis = Arc::new(FrequencyBasis { d: 1, k: n / 2, freqs: (0..n as i64).collect() });
        Self::new(basis, entries, label)
    }

    pub fn basis(&self) -> &FrequencyBasis {
        &self.basis
    }

    pub fn shared_basis(&self) -> Arc<FrequencyBasis> {
        self.basis.clone()
    }

    pub fn entries(&self) -> &Mat<Complex64> {
        &self.entries
    }

    pub fn entry(&self, a: usize, b: usize) -> Complex64 {
        self.entries[(a, b)]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.size()).map(|j| self.entries[(j, j)]).sum()
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.size()).map(|j| self.entries[(j, j)]).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm_l2()
    }

    /// `max |T - T*|` relative to `max |T|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.size();
        let mut defect: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let a = self.entries[(i, j)];
                scale = scale.max(a.norm());
                defect = defect.max((a - self.entries[(j, i)].conj()).norm());
            }
        }
        if scale == 0.0 { 0.0 } else { defect / scale }
    }

    pub fn matmul(&self, other: &OperatorMatrix, label: impl Into<String>) -> Result<OperatorMatrix> {
        if self.basis != other.basis {
            return Err(Error::InvalidInput("matrices live on different bases".into()));
        }
        Ok(OperatorMatrix { basis: self.basis.clone(), entries: &self.entries * &other.entries, label: label.into() })
    }

    pub fn scaled(&self, alpha: Complex64) -> OperatorMatrix {
        let entries = Mat::from_fn(self.size(), self.size(), |i, j| alpha * self.entries[(i, j)]);
        OperatorMatrix { basis: self.basis.clone(), entries, label: self.label.clone() }
    }
}

fn check_torus_support(sym: &Symbol) -> Result<()> {
    let s = sym.support();
    if s.is_periodic() {
        return Ok(());
    }
    for (axis, (&lo, &hi)) in s.lo().iter().zip(s.hi()).enumerate() {
        if lo <= -PI + SUPPORT_MARGIN || hi >= PI - SUPPORT_MARGIN {
            return Err(Error::SupportLeak(format!(
                "axis {axis}: support [{lo}, {hi}] is within {SUPPORT_MARGIN} of the torus boundary ±π"
            )));
        }
    }
    Ok(())
}

/// Uniform periodic grid size: at least `x_quad_nodes` and at least `8K`.
fn grid_size(k: usize, x_quad_nodes: usize) -> usize {
    x_quad_nodes.max(8 * k).max(8)
}

/// In-place d-dimensional forward FFT on a cube of side `m`, axis 0 fastest.
fn fft_nd(buf: &mut [Complex64], m: usize, d: usize, fft: &Arc<dyn Fft<f64>>) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for axis in 0..d {
        let stride = m.pow(axis as u32);
        if stride == 1 {
            for chunk in buf.chunks_exact_mut(m) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * m;
        for base in (0..buf.len()).step_by(block) {
            for off in 0..stride {
                for (t, v) in line.iter_mut().enumerate() {
                    *v = buf[base + off + t * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (t, v) in line.iter().enumerate() {
                    buf[base + off + t * stride] = *v;
                }
            }
        }
    }
}

/// Samples `f` on the grid `x_j = -π + 2π j / m` and returns its normalised
/// torus Fourier coefficients `f̂(k)` indexed by `k mod m` per axis.
fn fourier_table(f: &dyn Fn(&[f64]) -> Complex64, d: usize, m: usize, fft: &Arc<dyn Fft<f64>>) -> Vec<Complex64> {
    let total = m.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut buf: Vec<Complex64> = (0..total)
        .map(|mut idx| {
            for xi in x.iter_mut() {
                *xi = -PI + 2.0 * PI * (idx % m) as f64 / m as f64;
                idx /= m;
            }
            f(&x)
        })
        .collect();
    fft_nd(&mut buf, m, d, fft);
    let norm = 1.0 / total as f64;
    for v in buf.iter_mut() {
        *v *= norm;
    }
    buf
}

/// Looks up `f̂(k)` in a table produced by [`fourier_table`].
fn coefficient(table: &[Complex64], m: usize, k: impl Iterator<Item = i64>) -> Complex64 {
    let mut idx = 0usize;
    let mut stride = 1usize;
    let mut parity = 0i64;
    for kk in k {
        parity += kk;
        idx += kk.rem_euclid(m as i64) as usize * stride;
        stride *= m;
    }
    // grid starts at -π: e^{-ik(-π)} = (-1)^k
    if parity.rem_euclid(2) == 1 { -table[idx] } else { table[idx] }
}

fn plan(m: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(m)
}

/// Realizes `sym` as a dense matrix on `basis`.
pub fn assemble_operator(sym: &Symbol, basis: &Arc<FrequencyBasis>, x_quad_nodes: usize) -> Result<OperatorMatrix> {
    if sym.dim() != basis.dim() {
        return Err(Error::InvalidInput(format!(
            "symbol dimension {} does not match basis dimension {}",
            sym.dim(),
            basis.dim()
        )));
    }
    check_torus_support(sym)?;
    let d = basis.dim();
    let n = basis.len();
    let m = grid_size(basis.cutoff(), x_quad_nodes);
    let fft = plan(m);
    let columns: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|b| {
            let mb = basis.freq(b);
            let xi: Vec<f64> = mb.iter().map(|&v| v as f64).collect();
            let table = fourier_table(&|x: &[f64]| sym.eval(x, &xi), d, m, &fft);
            (0..n)
                .map(|a| coefficient(&table, m, basis.freq(a).iter().zip(mb).map(|(ma, mb)| ma - mb)))
                .collect()
        })
        .collect();
    let entries = Mat::from_fn(n, n, |a, b| columns[b][a]);
    let label = format!("assembled(d={d}, K={})", basis.cutoff());
    OperatorMatrix::new(basis.clone(), entries, label)
}

/// `diag((1 + |m_b|²)^{-s/2})`, the torus `(1 - Δ)^{-s/2}`.
pub fn laplacian_multiplier(basis: &Arc<FrequencyBasis>, s: f64) -> OperatorMatrix {
    let diag = bracket_powers(basis, s);
    let n = basis.len();
    let entries = Mat::from_fn(n, n, |i, j| if i == j { Complex64::new(diag[i], 0.0) } else { Complex64::new(0.0, 0.0) });
    OperatorMatrix { basis: basis.clone(), entries, label: format!("(1-Δ)^(-{s}/2)") }
}

/// `(1 + |m_j|²)^{-s/2}` in basis order.
pub fn bracket_powers(basis: &FrequencyBasis, s: f64) -> Vec<f64> {
    (0..basis.len()).map(|j| (1.0 + basis.norm_sq(j) as f64).powf(-s / 2.0)).collect()
}

fn check_periodic(f: &dyn Fn(&[f64]) -> Complex64, d: usize) -> Result<()> {
    let samples: usize = 17;
    let mut scale: f64 = 0.0;
    let mut jump: f64 = 0.0;
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for axis in 0..d {
        for idx in 0..samples.pow(d as u32 - 1) {
            let mut rest = idx;
            for (k, (xi, yi)) in x.iter_mut().zip(y.iter_mut()).enumerate() {
                if k == axis {
                    *xi = -PI;
                    *yi = PI;
                } else {
                    let v = -PI + 2.0 * PI * (rest % samples) as f64 / samples as f64;
                    *xi = v;
                    *yi = v;
                    rest /= samples;
                }
            }
            let (a, b) = (f(&x), f(&y));
            scale = scale.max(a.norm()).max(b.norm());
            jump = jump.max((a - b).norm());
        }
    }
    if jump > 1e-8 * scale.max(1e-300) {
        return Err(Error::SupportLeak(format!(
            "function jumps by {jump:.3e} across the torus boundary; it is neither periodic nor compactly supported"
        )));
    }
    Ok(())
}

/// `M_f` on the basis: `entries[a][b] = f̂(m_a - m_b)`.
pub fn multiplication_operator(
    f: &dyn Fn(&[f64]) -> Complex64,
    basis: &Arc<FrequencyBasis>,
    x_quad_nodes: usize,
) -> Result<OperatorMatrix> {
    let d = basis.dim();
    check_periodic(f, d)?;
    let m = grid_size(basis.cutoff(), x_quad_nodes);
    let table = fourier_table(f, d, m, &plan(m));
    let n = basis.len();
    let entries = Mat::from_fn(n, n, |a, b| {
        coefficient(&table, m, basis.freq(a).iter().zip(basis.freq(b)).map(|(ma, mb)| ma - mb))
    });
    OperatorMatrix::new(basis.clone(), entries, "M_f")
}

/// Normalised mean `f̂(0) = (2π)^{-d} ∫ f`.
pub fn fourier_mean(f: &dyn Fn(&[f64]) -> Complex64, d: usize, x_quad_nodes: usize) -> Result<Complex64> {
    check_periodic(f, d)?;
    let m = x_quad_nodes.max(8);
    let total = m.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut acc = Complex64::new(0.0, 0.0);
    for mut idx in 0..total {
        for xi in x.iter_mut() {
            *xi = -PI + 2.0 * PI * (idx % m) as f64 / m as f64;
            idx /= m;
        }
        acc += f(&x);
    }
    Ok(acc / total as f64)
}

/// Diagonal of `M_f (1 - Δ)^{-s/2}` without forming the matrix:
/// `f̂(0) (1 + |m_j|²)^{-s/2}`.
pub fn multiplier_product_diagonal(
    f: &dyn Fn(&[f64]) -> Complex64,
    basis: &FrequencyBasis,
    s: f64,
    x_quad_nodes: usize,
) -> Result<Vec<Complex64>> {
    let mean = fourier_mean(f, basis.dim(), x_quad_nodes)?;
    Ok(bracket_powers(basis, s).into_iter().map(|v| mean * v).collect())
}

/// Partial sums of `(T e_j, e_j)` in basis order and the manifold residue
/// representative `d (2π)^d Σ / log(1 + n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalSums {
    pub n: Vec<usize>,
    pub partial_sums: Vec<Complex64>,
    pub residue: Vec<Complex64>,
}

pub fn torus_diagonal_sums(t: &OperatorMatrix, n_grid: &[usize]) -> Result<DiagonalSums> {
    diagonal_sums(t.basis().dim(), &t.diagonal(), n_grid)
}

pub fn diagonal_sums(d: usize, diagonal: &[Complex64], n_grid: &[usize]) -> Result<DiagonalSums> {
    if let Some(&bad) = n_grid.iter().find(|&&n| n > diagonal.len() || n == 0) {
        return Err(Error::InvalidInput(format!("n = {bad} outside 1..={}", diagonal.len())));
    }
    let mut prefix = Vec::with_capacity(diagonal.len() + 1);
    let mut acc = Complex64::new(0.0, 0.0);
    prefix.push(acc);
    for v in diagonal {
        acc += v;
        prefix.push(acc);
    }
    let factor = d as f64 * (2.0 * PI).powi(d as i32);
    let partial_sums: Vec<Complex64> = n_grid.iter().map(|&n| prefix[n]).collect();
    let residue = n_grid.iter().zip(&partial_sums).map(|(&n, s)| s * (factor / (n as f64).ln_1p())).collect();
    Ok(DiagonalSums { n: n_grid.to_vec(), partial_sums, residue })
}

const CACHE_MAGIC: &[u8; 8] = b"DXLBOPM1";
const CACHE_VERSION: u32 = 1;

/// Payload precision of the binary matrix cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CachePrecision {
    Complex64,
    Complex128,
}

/// Writes the matrix cache. Layout, all little-endian:
///
/// ```text
/// magic      8 bytes   "DXLBOPM1"
/// version    u32       1
/// d          u32
/// K          u32
/// precision  u32       1 = complex64 (2 x f32), 2 = complex128 (2 x f64)
/// label_len  u32
/// label      label_len bytes, UTF-8
/// n          u64       (2K + 1)^d
/// checksum   32 bytes  SHA-256 of the payload
/// payload    n * n entries, row-major, each (re, im)
/// ```
pub fn write_cache(path: &Path, t: &OperatorMatrix, precision: CachePrecision) -> Result<()> {
    let n = t.size();
    let mut payload = Vec::with_capacity(n * n * 16);
    for i in 0..n {
        for j in 0..n {
            let z = t.entry(i, j);
            match precision {
                CachePrecision::Complex64 => {
                    payload.extend_from_slice(&(z.re as f32).to_le_bytes());
                    payload.extend_from_slice(&(z.im as f32).to_le_bytes());
                }
                CachePrecision::Complex128 => {
                    payload.extend_from_slice(&z.re.to_le_bytes());
                    payload.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
    }
    let mut out = Vec::with_capacity(payload.len() + 128);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.basis().dim() as u32).to_le_bytes());
    out.extend_from_slice(&(t.basis().cutoff() as u32).to_le_bytes());
    let p: u32 = match precision {
        CachePrecision::Complex64 => 1,
        CachePrecision::Complex128 => 2,
    };
    out.extend_from_slice(&p.to_le_bytes());
    out.extend_from_slice(&(t.label().len() as u32).to_le_bytes());
    out.extend_from_slice(t.label().as_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    crate::io::write_atomic(path, &out)
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Cache("truncated file".into()));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().expect("4 bytes")))
}

pub fn read_cache(path: &Path) -> Result<OperatorMatrix> {
    let mut raw = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut raw)?;
    let mut buf = raw.as_slice();
    if take(&mut buf, 8)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = take_u32(&mut buf)?;
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let d = take_u32(&mut buf)? as usize;
    let k = take_u32(&mut buf)? as usize;
    let width = match take_u32(&mut buf)? {
        1 => 4,
        2 => 8,
        other => return Err(Error::Cache(format!("unknown precision tag {other}"))),
    };
    let label_len = take_u32(&mut buf)? as usize;
    let label = String::from_utf8(take(&mut buf, label_len)?.to_vec()).map_err(|_| Error::Cache("label is not UTF-8".into()))?;
    let n = u64::from_le_bytes(take(&mut buf, 8)?.try_into().expect("8 bytes")) as usize;
    let checksum = take(&mut buf, 32)?.to_vec();
    if basis_size(d, k) != Some(n) {
        return Err(Error::Cache(format!("n = {n} inconsistent with d = {d}, K = {k}")));
    }
    let payload = take(&mut buf, n * n * 2 * width)?;
    if !buf.is_empty() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    if Sha256::digest(payload).as_slice() != checksum.as_slice() {
        return Err(Error::Cache("checksum mismatch".into()));
    }
    let basis = Arc::new(enumerate_frequencies(d, k, MatrixBudget::unlimited())?);
    let read = |off: usize| -> f64 {
        if width == 4 {
            f32::from_le_bytes(payload[off..off + 4].try_into().expect("4 bytes")) as f64
        } else {
            f64::from_le_bytes(payload[off..off + 8].try_into().expect("8 bytes"))
        }
    };
    let entries = Mat::from_fn(n, n, |i, j| {
        let off = (i * n + j) * 2 * width;
        Complex64::new(read(off), read(off + width))
    });
    OperatorMatrix::new(basis, entries, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::Bump;
    use crate::symbol::{FrequencyFactor, RadialProfile, SupportBox, make_classical_symbol, make_product_symbol};
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn enumeration_examples() {
        let b = enumerate_frequencies(1, 1, MatrixBudget::default()).unwrap();
        assert_eq!(b.iter().map(|m| m[0]).collect::<Vec<_>>(), vec![0, -1, 1]);
        let b = enumerate_frequencies(2, 1, MatrixBudget::default()).unwrap();
        let got: Vec<(i64, i64)> = b.iter().map(|m| (m[0], m[1])).collect();
        assert_eq!(got, vec![(0, 0), (-1, 0), (0, -1), (0, 1), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1)]);
    }

    #[test]
    fn enumeration_matches_direct_oracle() {
        let b = enumerate_frequencies(1, 3, MatrixBudget::default()).unwrap();
        assert_eq!(b.len(), 7);
        for j in 1..=7usize {
            assert_eq!(b.freq(j - 1)[0].unsigned_abs() as usize, (j - 1).div_ceil(2));
        }
        for d in 1..=3 {
            let b = enumerate_frequencies(d, 2, MatrixBudget::default()).unwrap();
            assert_eq!(b.len(), 5usize.pow(d as u32));
            let mut seen: Vec<&[i64]> = b.iter().collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), b.len());
            for j in 1..b.len() {
                assert!(b.norm_sq(j - 1) <= b.norm_sq(j));
            }
        }
    }

    #[test]
    fn enumeration_budget_and_validation() {
        let err = enumerate_frequencies(2, 100, MatrixBudget::default()).unwrap_err();
        assert!(matches!(err, Error::Budget { required: 40401, budget: 6000 }));
        assert!(err.to_string().contains("40401"));
        assert!(enumerate_frequencies(4, 1, MatrixBudget::default()).is_err());
        assert!(enumerate_frequencies(1, 0, MatrixBudget::default()).is_err());
    }

    #[test]
    fn laplacian_multiplier_examples() {
        let b = Arc::new(enumerate_frequencies(1, 1, MatrixBudget::default()).unwrap());
        let l = laplacian_multiplier(&b, 1.0);
        assert_eq!(l.entry(0, 0), c(1.0));
        assert_relative_eq!(l.entry(1, 1).re, 2f64.powf(-0.5));
        assert_relative_eq!(l.entry(2, 2).re, 2f64.powf(-0.5));
        assert_eq!(l.entry(0, 1), c(0.0));
        let id = laplacian_multiplier(&b, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(id.entry(i, j), c(if i == j { 1.0 } else { 0.0 }));
            }
        }
        let b = Arc::new(enumerate_frequencies(1, 200, MatrixBudget::default()).unwrap());
        let diag = bracket_powers(&b, 1.0);
        for w in diag.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for n in 10..=b.len() {
            let v = n as f64 * diag[n - 1];
            assert!((0.4..=2.5).contains(&v), "n s_n = {v} at n = {n}");
        }
    }

    #[test]
    fn multiplication_operator_examples() {
        let b = Arc::new(enumerate_frequencies(1, 4, MatrixBudget::default()).unwrap());
        let one = multiplication_operator(&|_| c(1.0), &b, 64).unwrap();
        let cos = multiplication_operator(&|x| c(x[0].cos()), &b, 64).unwrap();
        for i in 0..b.len() {
            for j in 0..b.len() {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((one.entry(i, j) - c(id)).norm() < 1e-14);
                let diff = (b.freq(i)[0] - b.freq(j)[0]).abs();
                let want = if diff == 1 { 0.5 } else { 0.0 };
                assert!((cos.entry(i, j) - c(want)).norm() < 1e-14);
            }
        }
        let w = Bump::unit_mass(vec![0.3], vec![2.0]).unwrap();
        let mw = multiplication_operator(&|x| c(w.eval(x)), &b, 64).unwrap();
        assert!(mw.hermitian_defect() < 1e-12);
        assert!(multiplication_operator(&|x| c(x[0]), &b, 64).is_err());
    }

    #[test]
    fn x_independent_symbol_assembles_to_diagonal() {
        let b = Arc::new(enumerate_frequencies(1, 6, MatrixBudget::default()).unwrap());
        let g = make_product_symbol(|_| c(1.0), FrequencyFactor::Radial(RadialProfile::Bracket), 1, SupportBox::torus(1)).unwrap();
        let t = assemble_operator(&g, &b, 0).unwrap();
        for i in 0..b.len() {
            for j in 0..b.len() {
                let want = if i == j { (1.0 + (b.freq(j)[0] as f64).powi(2)).powf(-0.5) } else { 0.0 };
                assert!((t.entry(i, j) - c(want)).norm() < 1e-14);
            }
        }
    }

    // Brute-force oracle: composite trapezoid directly in x, entry by entry.
    fn brute_force_entry(sym: &Symbol, ma: &[i64], mb: &[i64], nodes: usize) -> Complex64 {
        let d = ma.len();
        let xi: Vec<f64> = mb.iter().map(|&v| v as f64).collect();
        let total = nodes.pow(d as u32);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut x = vec![0.0; d];
        for mut idx in 0..total {
            for xv in x.iter_mut() {
                *xv = -PI + 2.0 * PI * (idx % nodes) as f64 / nodes as f64;
                idx /= nodes;
            }
            let phase: f64 = x.iter().zip(ma.iter().zip(mb)).map(|(xv, (a, b))| xv * (b - a) as f64).sum();
            acc += sym.eval(&x, &xi) * Complex64::from_polar(1.0, phase);
        }
        acc / total as f64
    }

    #[test]
    fn trig_polynomial_quantization_is_exact() {
        // p(x, ξ) = e^{i⟨x,k⟩} g(ξ) ⇒ entries[a][b] = g(m_b) 𝟙[m_a - m_b = k]
        for (d, k) in [(1usize, vec![2i64]), (2, vec![1, -2])] {
            let b = Arc::new(enumerate_frequencies(d, 3, MatrixBudget::default()).unwrap());
            let kk = k.clone();
            let sym = Symbol::general(d, SupportBox::torus(d), move |x, xi| {
                let phase: f64 = x.iter().zip(&kk).map(|(a, b)| a * *b as f64).sum();
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                Complex64::from_polar(1.0, phase) * (1.0 + r2).powf(-0.5)
            })
            .unwrap();
            let t = assemble_operator(&sym, &b, 0).unwrap();
            for a in 0..b.len() {
                for bb in 0..b.len() {
                    let diff: Vec<i64> = b.freq(a).iter().zip(b.freq(bb)).map(|(x, y)| x - y).collect();
                    let want = if diff == k { (1.0 + b.norm_sq(bb) as f64).powf(-0.5) } else { 0.0 };
                    assert!((t.entry(a, bb) - c(want)).norm() < 1e-13, "d={d} ({a},{bb})");
                    let oracle = brute_force_entry(&sym, b.freq(a), b.freq(bb), 64);
                    assert!((t.entry(a, bb) - oracle).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn product_symbol_matches_brute_force_and_factorisation() {
        let w = Bump::unit_mass(vec![0.1], vec![1.8]).unwrap();
        let (lo, hi) = w.support();
        let w2 = w.clone();
        let sym =
            make_product_symbol(move |x| c(w2.eval(x)), FrequencyFactor::Radial(RadialProfile::Bracket), 1, SupportBox::new(lo, hi).unwrap())
                .unwrap();
        let b = Arc::new(enumerate_frequencies(1, 2, MatrixBudget::default()).unwrap());
        let t = assemble_operator(&sym, &b, 512).unwrap();
        let mw = multiplication_operator(&|x| c(w.eval(x)), &b, 512).unwrap();
        let prod = mw.matmul(&laplacian_multiplier(&b, 1.0), "M_w L").unwrap();
        for a in 0..b.len() {
            for bb in 0..b.len() {
                let oracle = brute_force_entry(&sym, b.freq(a), b.freq(bb), 4096);
                assert!((t.entry(a, bb) - oracle).norm() < 1e-12);
                assert!((t.entry(a, bb) - prod.entry(a, bb)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn support_leak_is_rejected() {
        let supp = SupportBox::new(vec![-3.1], vec![0.0]).unwrap();
        let sym = make_classical_symbol(1, |_, _| c(1.0), 1.0, supp).unwrap();
        let b = Arc::new(enumerate_frequencies(1, 2, MatrixBudget::default()).unwrap());
        assert!(matches!(assemble_operator(&sym, &b, 0), Err(Error::SupportLeak(_))));
    }

    #[test]
    fn diagonal_sums_examples() {
        // synthetic diag(1/n)
        let diag: Vec<Complex64> = (1..=200_000).map(|j| c(1.0 / j as f64)).collect();
        let s = diagonal_sums(1, &diag, &[200_000]).unwrap();
        assert_relative_eq!(s.residue[0].re, 2.0 * PI, max_relative = 0.05);
        // strictly upper triangular ⇒ zero sums
        let b = Arc::new(enumerate_frequencies(1, 3, MatrixBudget::default()).unwrap());
        let upper = OperatorMatrix::new(b.clone(), Mat::from_fn(7, 7, |i, j| if j > i { c(1.0) } else { c(0.0) }), "upper").unwrap();
        let s = torus_diagonal_sums(&upper, &[1, 4, 7]).unwrap();
        assert!(s.partial_sums.iter().all(|v| v.norm() == 0.0));
        assert!(torus_diagonal_sums(&upper, &[8]).is_err());
    }

    #[test]
    fn diagonal_sums_of_m_f_bracket() {
        // (T e_m, e_m) = ⟨m⟩^{-1} f̂(0) with f̂(0) = 1 for f = 1 + cos x
        let f = |x: &[f64]| c(1.0 + x[0].cos());
        let b = enumerate_frequencies(1, 50_000, MatrixBudget::unlimited()).unwrap();
        let diag = multiplier_product_diagonal(&f, &b, 1.0, 64).unwrap();
        let n = b.len();
        let oracle: f64 = (0..n).map(|j| (1.0 + (b.freq(j)[0] as f64).powi(2)).powf(-0.5)).sum();
        let s = diagonal_sums(1, &diag, &[n]).unwrap();
        assert_relative_eq!(s.partial_sums[0].re, oracle, max_relative = 1e-12);
        assert!((s.residue[0].re - 4.0 * PI).abs() / (4.0 * PI) < 0.05);

        let small = Arc::new(enumerate_frequencies(1, 20, MatrixBudget::default()).unwrap());
        let t = multiplication_operator(&f, &small, 0).unwrap().matmul(&laplacian_multiplier(&small, 1.0), "T").unwrap();
        let direct = multiplier_product_diagonal(&f, &small, 1.0, 64).unwrap();
        for (a, b) in t.diagonal().iter().zip(&direct) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn cache_roundtrip_and_corruption() {
        let w = Bump::unit_mass(vec![0.0], vec![1.0]).unwrap();
        let (lo, hi) = w.support();
        let sym = make_classical_symbol(1, move |x, s| Complex64::new(w.eval(x), 0.3 * s[0]), 1.0, SupportBox::new(lo, hi).unwrap()).unwrap();
        let b = Arc::new(enumerate_frequencies(1, 5, MatrixBudget::default()).unwrap());
        let t = assemble_operator(&sym, &b, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_cache(&path, &t, CachePrecision::Complex128).unwrap();
        let back = read_cache(&path).unwrap();
        assert_eq!(back.label(), t.label());
        assert_eq!(back.entries(), t.entries());
        write_cache(&path, &t, CachePrecision::Complex64).unwrap();
        let back = read_cache(&path).unwrap();
        for i in 0..t.size() {
            for j in 0..t.size() {
                assert!((back.entry(i, j) - t.entry(i, j)).norm() < 1e-6);
            }
        }
        let mut raw = std::fs::read(&path).unwrap();
        let last = raw.len() - 1;
        raw[last] ^= 0xff;
        std::fs::write(&path, &raw).unwrap();
        assert!(matches!(read_cache(&path), Err(Error::Cache(_))));
    }
}
