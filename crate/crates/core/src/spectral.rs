//! Eigenvalue and singular-value sequences of realized operators, and the
//! finite-scale diagnostics built on them.
//!
//! "Bounded" is never certified from finite data. Each diagnostic reports the
//! maximum modulus of its series together with the least-squares slope
//! against `log n` (or the level index), and calls the series bounded when
//! that slope stays under a configured threshold.

use std::cmp::Ordering;
use std::sync::Once;

use faer::{Mat, Par, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantize::OperatorMatrix;
use crate::symbol::{QuadSpec, Symbol, ball_integral_log};

/// Default slope thresholds standing in for `O(1)` claims.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrendThresholds {
    /// Multiplied by `max(1, |Res_W|)` for eigenvalue-sum deviations.
    pub eigensum: f64,
    pub commutator: f64,
    pub modulation: f64,
    pub tail_energy: f64,
}

impl Default for TrendThresholds {
    fn default() -> Self {
        Self { eigensum: 0.05, commutator: 0.05, modulation: 0.1, tail_energy: 0.1 }
    }
}

static PIN: Once = Once::new();

/// Pins the dense solvers to a single thread so results are bit-stable.
pub fn pin_solver_threads() {
    PIN.call_once(|| faer::set_global_parallelism(Par::Seq));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Eigen,
    Singular,
}

/// Values ordered by non-increasing modulus, ties broken by descending real
/// part and then descending imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSequence {
    values: Vec<Complex64>,
    kind: SequenceKind,
}

fn sequence_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm().total_cmp(&a.norm()).then_with(|| b.re.total_cmp(&a.re)).then_with(|| b.im.total_cmp(&a.im))
}

impl EigenSequence {
    pub fn new(mut values: Vec<Complex64>, kind: SequenceKind) -> Result<Self> {
        if kind == SequenceKind::Singular && values.iter().any(|v| v.im != 0.0 || v.re < 0.0) {
            return Err(Error::InvalidInput("singular values must be real and non-negative".into()));
        }
        values.sort_by(sequence_order);
        Ok(Self { values, kind })
    }

    pub fn from_real(values: impl IntoIterator<Item = f64>, kind: SequenceKind) -> Result<Self> {
        Self::new(values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(), kind)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `λ_n` with the convention `λ_n = 0` past the end (1-based).
    pub fn get(&self, n: usize) -> Complex64 {
        if n == 0 { Complex64::new(0.0, 0.0) } else { self.values.get(n - 1).copied().unwrap_or_default() }
    }

    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    /// `Σ_{j ≤ n} λ_j` for `n = 0..=len`.
    pub fn prefix_sums(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.values.len() + 1);
        let mut acc = Complex64::new(0.0, 0.0);
        out.push(acc);
        for v in &self.values {
            acc += v;
            out.push(acc);
        }
        out
    }
}

fn faer_error(label: &str, e: impl std::fmt::Debug) -> Error {
    Error::Eigensolver { label: label.to_string(), reason: format!("{e:?}") }
}

/// All eigenvalues (with algebraic multiplicity) from a dense
/// non-Hermitian Schur-based solve.
pub fn eigenvalue_sequence(t: &OperatorMatrix) -> Result<EigenSequence> {
    pin_solver_threads();
    let values = t.entries().eigenvalues().map_err(|e| faer_error(t.label(), e))?;
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(faer_error(t.label(), "non-finite eigenvalue"));
    }
    EigenSequence::new(values, SequenceKind::Eigen)
}

pub fn singular_values(t: &OperatorMatrix) -> Result<EigenSequence> {
    pin_solver_threads();
    let s = t.entries().singular_values().map_err(|e| faer_error(t.label(), e))?;
    EigenSequence::from_real(s.into_iter().map(|v| v.max(0.0)), SequenceKind::Singular)
}

/// `sup_n n^{1/p} a*_n` where `a*` is the decreasing rearrangement of the
/// moduli.
pub fn weak_lp_seminorm(seq: &EigenSequence, p: f64) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidInput(format!("p = {p} must be >= 1")));
    }
    // moduli are already non-increasing by construction
    Ok(seq.values().iter().enumerate().map(|(j, v)| ((j + 1) as f64).powf(1.0 / p) * v.norm()).fold(0.0, f64::max))
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if sxx == 0.0 { 0.0 } else { sxy / sxx }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrendReport {
    pub max_abs: f64,
    /// Slope of the real or imaginary part, whichever is larger in modulus.
    pub slope: f64,
    pub threshold: f64,
    pub bounded: bool,
}

pub fn trend(x: &[f64], values: &[Complex64], threshold: f64) -> TrendReport {
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let im: Vec<f64> = values.iter().map(|v| v.im).collect();
    let (sr, si) = (ls_slope(x, &re), ls_slope(x, &im));
    let slope = if sr.abs() >= si.abs() { sr } else { si };
    let max_abs = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    TrendReport { max_abs, slope, threshold, bounded: max_abs.is_finite() && slope.abs() <= threshold }
}

fn real_trend(x: &[f64], values: &[f64], threshold: f64) -> TrendReport {
    let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    trend(x, &c, threshold)
}

fn log_axis(n: &[usize]) -> Vec<f64> {
    n.iter().map(|&v| (v as f64).ln()).collect()
}

/// `D(n) = Σ_{j≤n} λ_j − (2π)^{-d} ∬_{|ξ| ≤ n^{1/d}} p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSeries {
    pub n: Vec<usize>,
    pub eigen_sums: Vec<Complex64>,
    pub symbol_integrals: Vec<Complex64>,
    pub deviation: Vec<Complex64>,
    pub trend: TrendReport,
}

pub fn eigensum_vs_symbol(
    t: &OperatorMatrix,
    sym: &Symbol,
    n_grid: &[usize],
    quad: &QuadSpec,
    threshold: f64,
) -> Result<DeviationSeries> {
    check_half_window(n_grid, t.size())?;
    let eigs = eigenvalue_sequence(t)?;
    eigensum_deviation(&eigs, sym, n_grid, quad, threshold)
}

fn check_half_window(n_grid: &[usize], size: usize) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::InsufficientGrid("empty n grid".into()));
    }
    if let Some(&bad) = n_grid.iter().find(|&&n| n == 0 || 2 * n > size) {
        return Err(Error::InvalidInput(format!("n = {bad} outside the truncation window 1..={}", size / 2)));
    }
    Ok(())
}

/// [`eigensum_vs_symbol`] on a precomputed eigenvalue sequence.
pub fn eigensum_deviation(
    eigs: &EigenSequence,
    sym: &Symbol,
    n_grid: &[usize],
    quad: &QuadSpec,
    threshold: f64,
) -> Result<DeviationSeries> {
    check_half_window(n_grid, eigs.len())?;
    let d = sym.dim() as f64;
    let norm = (2.0 * std::f64::consts::PI).powf(-d);
    let prefix = eigs.prefix_sums();
    let mut eigen_sums = Vec::with_capacity(n_grid.len());
    let mut integrals = Vec::with_capacity(n_grid.len());
    let mut deviation = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let v = ball_integral_log(sym, (n as f64).ln() / d, quad)? * norm;
        eigen_sums.push(prefix[n]);
        integrals.push(v);
        deviation.push(prefix[n] - v);
    }
    let trend = trend(&log_axis(n_grid), &deviation, threshold);
    Ok(DeviationSeries { n: n_grid.to_vec(), eigen_sums, symbol_integrals: integrals, deviation, trend })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendVerdict {
    BoundedTrend,
    Growing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutatorReport {
    /// `Δ(n) = Σ_{j≤n} (a_j − b_j)` for `n = 1..=len`.
    pub delta: Vec<Complex64>,
    pub trend: TrendReport,
    pub verdict: TrendVerdict,
}

/// Partial sums of `a − b`, zero-padding the shorter sequence. The trend is
/// fitted over the upper half of the range in `log n`, i.e. `n ≥ √N`.
pub fn commutator_difference_diagnostic(a: &EigenSequence, b: &EigenSequence, threshold: f64) -> CommutatorReport {
    let len = a.len().max(b.len());
    let mut delta = Vec::with_capacity(len);
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 1..=len {
        acc += a.get(n) - b.get(n);
        delta.push(acc);
    }
    let start = ((len as f64).sqrt().floor() as usize).max(1);
    let idx: Vec<usize> = log_spaced(start, len, 64);
    let x: Vec<f64> = idx.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<Complex64> = idx.iter().map(|&n| delta[n - 1]).collect();
    let mut t = trend(&x, &y, threshold);
    t.max_abs = delta.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let verdict = if t.bounded { TrendVerdict::BoundedTrend } else { TrendVerdict::Growing };
    CommutatorReport { delta, trend: t, verdict }
}

/// Up to `count` distinct integers in `[lo, hi]`, evenly spaced in `log n`.
pub fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if hi < lo || hi == 0 {
        return Vec::new();
    }
    let lo = lo.max(1);
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count.max(2))
        .map(|k| (a + (b - a) * k as f64 / (count.max(2) - 1) as f64).exp().round() as usize)
        .map(|n| n.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

/// `|trace(T) − Σ λ_j(T)|`.
pub fn lidskii_check(t: &OperatorMatrix) -> Result<f64> {
    let eigs = eigenvalue_sequence(t)?;
    Ok((t.trace() - eigs.sum()).norm())
}

/// `|trace(AS) − Σ_n (A u_n, u_n) λ_n(S)|` over the eigenvectors `u_n` of the
/// Hermitian `S`, ordered as an eigenvalue sequence.
pub fn product_trace_check(a: &OperatorMatrix, s: &OperatorMatrix) -> Result<f64> {
    if a.size() != s.size() {
        return Err(Error::InvalidInput("A and S must have the same size".into()));
    }
    if s.hermitian_defect() > 1e-10 {
        return Err(Error::NotHermitian(s.label().to_string()));
    }
    pin_solver_threads();
    let evd = s.entries().self_adjoint_eigen(Side::Lower).map_err(|e| faer_error(s.label(), e))?;
    let u = evd.U();
    let lambda = evd.S();
    let n = s.size();
    let mut order: Vec<usize> = (0..n).collect();
    let lam: Vec<Complex64> = (0..n).map(|k| lambda.column_vector()[k]).collect();
    order.sort_by(|&i, &j| sequence_order(&lam[i], &lam[j]));
    let ae = a.entries();
    let mut diag_sum = Complex64::new(0.0, 0.0);
    for &k in &order {
        // (A u, u) = u* A u
        let mut q = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let uj = u[(j, k)];
            if uj == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut row = Complex64::new(0.0, 0.0);
            for i in 0..n {
                row += u[(i, k)].conj() * ae[(i, j)];
            }
            q += row * uj;
        }
        diag_sum += q * lam[k];
    }
    let se = s.entries();
    let mut trace = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            trace += ae[(i, j)] * se[(j, i)];
        }
    }
    Ok((trace - diag_sum).norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulationProfile {
    pub levels: Vec<usize>,
    /// `c_n = 2^{n/2} ‖T χ_{[0, 2^{-n}]}(V)‖_HS`.
    pub values: Vec<f64>,
    /// Factor applied to `V` so that `‖V‖ ≤ 1`.
    pub v_scale: f64,
    /// First requested level whose mask was empty, if any.
    pub truncated_at: Option<usize>,
    pub trend: TrendReport,
}

/// Hilbert–Schmidt profile of `T` against the spectral projections of a
/// diagonal non-negative `V`, levels `1..=levels`.
pub fn modulation_profile(t: &OperatorMatrix, v: &OperatorMatrix, levels: usize, threshold: f64) -> Result<ModulationProfile> {
    let n = t.size();
    if v.size() != n {
        return Err(Error::InvalidInput("T and V must have the same size".into()));
    }
    let mut diag = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..n {
            let z = v.entry(i, j);
            if i != j && z.norm() > 0.0 {
                return Err(Error::InvalidInput(format!("V is not diagonal at ({i}, {j})")));
            }
        }
        let z = v.entry(i, i);
        if z.im.abs() > 1e-14 * z.norm().max(1.0) || z.re < 0.0 {
            return Err(Error::InvalidInput(format!("V has a non-real or negative diagonal entry at {i}")));
        }
        diag.push(z.re);
    }
    let vmax = diag.iter().cloned().fold(0.0, f64::max);
    let v_scale = if vmax > 1.0 { 1.0 / vmax } else { 1.0 };
    let col_sq: Vec<f64> = (0..n).map(|j| (0..n).map(|i| t.entry(i, j).norm_sqr()).sum()).collect();
    let vmin = diag.iter().map(|v| v * v_scale).fold(f64::INFINITY, f64::min);
    let mut out_levels = Vec::new();
    let mut values = Vec::new();
    let mut truncated_at = None;
    for level in 1..=levels {
        let cut = 0.5f64.powi(level as i32);
        if vmin > cut {
            truncated_at = Some(level);
            break;
        }
        let hs: f64 = diag.iter().zip(&col_sq).filter(|(v, _)| **v * v_scale <= cut).map(|(_, c)| c).sum();
        out_levels.push(level);
        values.push(2f64.powf(level as f64 / 2.0) * hs.sqrt());
    }
    let x: Vec<f64> = out_levels.iter().map(|&l| l as f64).collect();
    let trend = real_trend(&x, &values, threshold);
    Ok(ModulationProfile { levels: out_levels, values, v_scale, truncated_at, trend })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailEnergy {
    pub n: Vec<usize>,
    /// `e(n) = n Σ_{k>n} ‖T e_k‖²`.
    pub values: Vec<f64>,
    pub trend: TrendReport,
}

pub fn tail_energy(t: &OperatorMatrix, n_grid: &[usize], threshold: f64) -> Result<TailEnergy> {
    let size = t.size();
    if let Some(&bad) = n_grid.iter().find(|&&n| n >= size) {
        return Err(Error::InvalidInput(format!("n = {bad} must be below N = {size}")));
    }
    let col_sq: Vec<f64> = (0..size).map(|j| (0..size).map(|i| t.entry(i, j).norm_sqr()).sum()).collect();
    // suffix[k] = Σ_{j ≥ k} col_sq[j] (0-based), so Σ_{k>n} (1-based) = suffix[n]
    let mut suffix = vec![0.0; size + 1];
    for j in (0..size).rev() {
        suffix[j] = suffix[j + 1] + col_sq[j];
    }
    let values: Vec<f64> = n_grid.iter().map(|&n| n as f64 * suffix[n]).collect();
    let trend = real_trend(&log_axis(n_grid), &values, threshold);
    Ok(TailEnergy { n: n_grid.to_vec(), values, trend })
}

/// Dense `n × n` matrix helper for tests and FFI callers.
pub fn mat_from_rows(rows: &[Vec<Complex64>]) -> Result<Mat<Complex64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn op(rows: &[Vec<Complex64>]) -> OperatorMatrix {
        OperatorMatrix::from_mat(mat_from_rows(rows).unwrap(), "test").unwrap()
    }

    fn diag_op(d: &[f64]) -> OperatorMatrix {
        let n = d.len();
        OperatorMatrix::from_mat(Mat::from_fn(n, n, |i, j| if i == j { c(d[i]) } else { c(0.0) }), "diag").unwrap()
    }

    #[test]
    fn eigenvalue_ordering_examples() {
        let t = diag_op(&[3.0, 1.0, -2.0]);
        let e = eigenvalue_sequence(&t).unwrap();
        let got: Vec<f64> = e.values().iter().map(|v| v.re).collect();
        assert_eq!(got.len(), 3);
        assert!((got[0] - 3.0).abs() < 1e-14 && (got[1] + 2.0).abs() < 1e-14 && (got[2] - 1.0).abs() < 1e-14);

        let nil = op(&[vec![c(0.0), c(1.0)], vec![c(0.0), c(0.0)]]);
        let e = eigenvalue_sequence(&nil).unwrap();
        assert!(e.values().iter().all(|v| v.norm() < 1e-14));
        assert_eq!(lidskii_check(&nil).unwrap(), 0.0);

        // ties: equal modulus ordered by real part then imaginary part
        let s = EigenSequence::new(vec![Complex64::new(0.0, -1.0), c(-1.0), Complex64::new(0.0, 1.0), c(1.0)], SequenceKind::Eigen).unwrap();
        assert_eq!(s.values(), &[c(1.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0), c(-1.0)]);
        assert_eq!(s.get(5), c(0.0));
    }

    #[test]
    fn singular_value_examples() {
        let s = singular_values(&diag_op(&[-2.0, 1.0])).unwrap();
        assert_relative_eq!(s.values()[0].re, 2.0, max_relative = 1e-14);
        assert_relative_eq!(s.values()[1].re, 1.0, max_relative = 1e-14);
        let n = 8;
        let dft = Mat::from_fn(n, n, |i, j| {
            Complex64::from_polar(1.0 / (n as f64).sqrt(), -2.0 * std::f64::consts::PI * (i * j) as f64 / n as f64)
        });
        let s = singular_values(&OperatorMatrix::from_mat(dft, "dft").unwrap()).unwrap();
        assert!(s.values().iter().all(|v| (v.re - 1.0).abs() < 1e-12));
        assert!(EigenSequence::from_real([-1.0], SequenceKind::Singular).is_err());
    }

    #[test]
    fn weak_lp_examples() {
        let harmonic = EigenSequence::from_real((1..=1000).map(|n| 1.0 / n as f64), SequenceKind::Singular).unwrap();
        assert_relative_eq!(weak_lp_seminorm(&harmonic, 1.0).unwrap(), 1.0, max_relative = 1e-12);
        let root = EigenSequence::from_real((1..=1000).map(|n| 1.0 / (n as f64).sqrt()), SequenceKind::Singular).unwrap();
        assert_relative_eq!(weak_lp_seminorm(&root, 2.0).unwrap(), 1.0, max_relative = 1e-12);
        let empty = EigenSequence::from_real([], SequenceKind::Singular).unwrap();
        assert!(weak_lp_seminorm(&empty, 1.0).is_err());
        assert!(weak_lp_seminorm(&harmonic, 0.5).is_err());
    }

    #[test]
    fn commutator_diagnostic_examples() {
        let a = EigenSequence::from_real((1..=10_000).map(|j| 1.0 / j as f64), SequenceKind::Eigen).unwrap();
        let same = commutator_difference_diagnostic(&a, &a, 0.05);
        assert!(same.delta.iter().all(|v| *v == c(0.0)));
        assert_eq!(same.verdict, TrendVerdict::BoundedTrend);

        let b = EigenSequence::from_real((1..=10_000).map(|j| 1.0 / (j + 1) as f64), SequenceKind::Eigen).unwrap();
        let r = commutator_difference_diagnostic(&a, &b, 0.05);
        for (n, v) in r.delta.iter().enumerate() {
            assert_relative_eq!(v.re, 1.0 - 1.0 / (n + 2) as f64, max_relative = 1e-10);
        }
        assert_eq!(r.verdict, TrendVerdict::BoundedTrend);

        // zero padding: a against an empty sequence grows like log n
        let empty = EigenSequence::from_real([], SequenceKind::Eigen).unwrap();
        let r = commutator_difference_diagnostic(&a, &empty, 0.05);
        assert_eq!(r.verdict, TrendVerdict::Growing);
        assert_eq!(r.delta.len(), 10_000);
    }

    #[test]
    fn modulation_profile_geometric_oracle() {
        let d: Vec<f64> = (1..=12).map(|j| 0.5f64.powi(j)).collect();
        let t = diag_op(&d);
        let p = modulation_profile(&t, &t, 12, 0.1).unwrap();
        assert_eq!(p.v_scale, 1.0);
        for (&level, &v) in p.levels.iter().zip(&p.values) {
            // closed mask: coordinates j ≥ level
            let oracle = 2f64.powf(level as f64 / 2.0) * (level..=12).map(|j| 0.25f64.powi(j as i32)).sum::<f64>().sqrt();
            assert_relative_eq!(v, oracle, max_relative = 1e-12);
        }
        assert!(p.values.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(p.truncated_at, None);
        let p = modulation_profile(&t, &t, 14, 0.1).unwrap();
        assert_eq!(p.truncated_at, Some(13));
        assert_eq!(p.values.len(), 12);
    }

    #[test]
    fn modulation_profile_large_v_columns_only() {
        let n = 6;
        let v: Vec<f64> = vec![1.0, 0.9, 0.1, 0.05, 0.01, 0.001];
        let t = OperatorMatrix::from_mat(Mat::from_fn(n, n, |_, j| if j < 2 { c(1.0) } else { c(0.0) }), "T").unwrap();
        let p = modulation_profile(&t, &diag_op(&v), 4, 0.1).unwrap();
        assert!(p.values.iter().all(|&c| c == 0.0));
        // V rescaled when ‖V‖ > 1
        let p = modulation_profile(&t, &diag_op(&[4.0, 2.0, 1.0, 0.5, 0.1, 0.0]), 2, 0.1).unwrap();
        assert_eq!(p.v_scale, 0.25);
        assert!(modulation_profile(&t, &t, 2, 0.1).is_err());
    }

    #[test]
    fn tail_energy_examples() {
        let n = 10_000usize;
        let t = diag_op(&(1..=n).map(|k| 1.0 / k as f64).collect::<Vec<_>>());
        let e = tail_energy(&t, &[50, 100], 0.1).unwrap();
        for (&m, &v) in e.n.iter().zip(&e.values) {
            let oracle = m as f64 * ((m + 1)..=n).map(|k| 1.0 / (k * k) as f64).sum::<f64>();
            assert_relative_eq!(v, oracle, max_relative = 1e-12);
            assert!((v - 1.0).abs() < 0.03);
        }
        let single = OperatorMatrix::from_mat(Mat::from_fn(5, 5, |i, j| if j == 0 { c(i as f64 + 1.0) } else { c(0.0) }), "col").unwrap();
        let e = tail_energy(&single, &[1, 2, 4], 0.1).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        assert!(tail_energy(&single, &[5], 0.1).is_err());
    }

    #[test]
    fn product_trace_identity_and_errors() {
        let a = op(&[vec![c(1.0), Complex64::new(0.0, 2.0)], vec![c(3.0), c(-1.0)]]);
        let id = diag_op(&[1.0, 1.0]);
        assert!(product_trace_check(&a, &id).unwrap() < 1e-14);
        assert!(matches!(product_trace_check(&id, &a), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn slope_helper() {
        assert_relative_eq!(ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]), 2.0);
        assert_eq!(ls_slope(&[1.0], &[1.0]), 0.0);
        let ls = log_spaced(1, 1000, 10);
        assert_eq!(ls.first(), Some(&1));
        assert_eq!(ls.last(), Some(&1000));
    }
}
