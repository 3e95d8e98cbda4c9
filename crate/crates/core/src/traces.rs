//! Dixmier-trace surrogates, measurability verdicts and the end-to-end
//! pipelines that compare realized operators with residue values.
//!
//! A Dixmier trace is built from a dilation-invariant state that cannot be
//! written down. [`dixmier_band`] evaluates a small family of concrete
//! generalized limits instead (a Cesàro mean in `log n`, the last value, and
//! samples at `n = ⌈exp(exp t)⌉`), so the band it returns is an inner
//! approximation of the set of possible trace values.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, fmt_n_from_log};
use crate::quadrature::sphere_volume;
use crate::quantize::{
    FrequencyBasis, MatrixBudget, assemble_operator, basis_size, diagonal_sums, enumerate_frequencies,
    fourier_mean, laplacian_multiplier, multiplication_operator, multiplier_product_diagonal,
};
use crate::spectral::{
    DeviationSeries, TrendReport, TrendThresholds, eigensum_deviation, eigenvalue_sequence, log_spaced,
    modulation_profile, tail_energy,
};
use crate::symbol::{QuadSpec, Symbol, residue_series_log, wodzicki_residue};

/// `log ⌈exp(exp t)⌉`.
pub fn double_exp_log_n(t: f64) -> f64 {
    let e = t.exp();
    if e < 36.0 { e.exp().ceil().ln() } else { e }
}

/// Which generalized limits [`dixmier_band`] evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Surrogates {
    /// `log n` where the tail starts; `None` means `√n_max`.
    pub tail_start_log_n: Option<f64>,
    /// `t` values for the samples at `n = ⌈exp(exp t)⌉`.
    pub t_grid: Vec<f64>,
}

impl Default for Surrogates {
    fn default() -> Self {
        Self { tail_start_log_n: None, t_grid: (1..=35).map(|k| 0.2 * k as f64).collect() }
    }
}

/// Values of a series indexed by `log n`, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    log_n: Vec<f64>,
    values: Vec<Complex64>,
}

impl NormalizedSeries {
    pub fn new(log_n: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if log_n.len() != values.len() {
            return Err(Error::InvalidInput("series index and values differ in length".into()));
        }
        if log_n.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("series index must be strictly increasing".into()));
        }
        if log_n.iter().any(|v| !v.is_finite()) || values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("series must be finite".into()));
        }
        Ok(Self { log_n, values })
    }

    /// Series over integer `n`.
    pub fn from_integers(n: &[usize], values: Vec<Complex64>) -> Result<Self> {
        if n.first() == Some(&0) {
            return Err(Error::InvalidInput("series index starts at n = 1".into()));
        }
        Self::new(n.iter().map(|&v| (v as f64).ln()).collect(), values)
    }

    /// Samples `f` at `count` points evenly spaced in `log n` over
    /// `[lo, hi]`, plus every point of `extra` inside that range.
    pub fn from_fn(lo: f64, hi: f64, count: usize, extra: &[f64], f: impl Fn(f64) -> Complex64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidInput("empty log range".into()));
        }
        let count = count.max(2);
        let mut pts: Vec<f64> = (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect();
        pts.extend(extra.iter().copied().filter(|&x| x >= lo && x <= hi));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let values = pts.iter().map(|&x| f(x)).collect();
        Self::new(pts, values)
    }

    pub fn log_n(&self) -> &[f64] {
        &self.log_n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.log_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_n.is_empty()
    }

    /// Linear interpolation in `log n`; exact at sample points.
    fn at(&self, x: f64) -> Complex64 {
        let i = self.log_n.partition_point(|&v| v < x);
        if i < self.len() && self.log_n[i] == x {
            return self.values[i];
        }
        if i == 0 {
            return self.values[0];
        }
        if i == self.len() {
            return self.values[i - 1];
        }
        let (a, b) = (self.log_n[i - 1], self.log_n[i]);
        let w = (x - a) / (b - a);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandSample {
    pub id: String,
    pub log_n: f64,
    pub value: Complex64,
}

/// Range of the surrogate values, real and imaginary parts taken
/// separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DixmierBand {
    pub lo: Complex64,
    pub hi: Complex64,
    pub samples: Vec<BandSample>,
    pub series_tail_start: String,
    pub tail_start_log_n: f64,
    /// Componentwise extrema of the series over the tail.
    pub tail_lo: Complex64,
    pub tail_hi: Complex64,
}

impl DixmierBand {
    pub fn width(&self) -> f64 {
        (self.hi.re - self.lo.re).max(self.hi.im - self.lo.im)
    }

    pub fn midpoint(&self) -> Complex64 {
        (self.lo + self.hi) * 0.5
    }

    pub fn contains(&self, v: Complex64, tol: f64) -> bool {
        v.re >= self.lo.re - tol && v.re <= self.hi.re + tol && v.im >= self.lo.im - tol && v.im <= self.hi.im + tol
    }
}

fn extrema(values: impl Iterator<Item = Complex64>) -> (Complex64, Complex64) {
    let inf = f64::INFINITY;
    values.fold((Complex64::new(inf, inf), Complex64::new(-inf, -inf)), |(lo, hi), v| {
        (Complex64::new(lo.re.min(v.re), lo.im.min(v.im)), Complex64::new(hi.re.max(v.re), hi.im.max(v.im)))
    })
}

pub fn dixmier_band(series: &NormalizedSeries, surrogates: &Surrogates) -> Result<DixmierBand> {
    let Some(&last) = series.log_n.last() else {
        return Err(Error::InsufficientGrid("empty series".into()));
    };
    let tail_start = surrogates.tail_start_log_n.unwrap_or(0.5 * last);
    let first = series.log_n.partition_point(|&v| v < tail_start - 1e-12);
    let tail = first..series.len();
    if tail.len() < 2 {
        return Err(Error::InsufficientGrid(format!(
            "series has {} point(s) at n >= {}; need 2",
            tail.len(),
            fmt_n_from_log(tail_start)
        )));
    }
    let xs = &series.log_n[tail.clone()];
    let ys = &series.values[tail.clone()];
    let mut samples = Vec::new();

    let mut integral = Complex64::new(0.0, 0.0);
    for i in 1..xs.len() {
        integral += (ys[i] + ys[i - 1]) * (0.5 * (xs[i] - xs[i - 1]));
    }
    let (tail_lo, tail_hi) = extrema(ys.iter().copied());
    // clamp away rounding so the mean stays inside the tail range
    let mean = integral / (last - xs[0]);
    let mean = Complex64::new(mean.re.clamp(tail_lo.re, tail_hi.re), mean.im.clamp(tail_lo.im, tail_hi.im));
    samples.push(BandSample { id: "cesaro-log".into(), log_n: last, value: mean });
    samples.push(BandSample { id: "last".into(), log_n: last, value: ys[ys.len() - 1] });
    for &t in &surrogates.t_grid {
        let x = double_exp_log_n(t);
        if x >= xs[0] && x <= last {
            samples.push(BandSample { id: format!("double-exp:t={t:.4}"), log_n: x, value: series.at(x) });
        }
    }
    let (lo, hi) = extrema(samples.iter().map(|s| s.value));
    Ok(DixmierBand {
        lo,
        hi,
        samples,
        series_tail_start: fmt_n_from_log(xs[0]),
        tail_start_log_n: xs[0],
        tail_lo,
        tail_hi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    Measurable { value: Complex64 },
    Nonmeasurable { lo: Complex64, hi: Complex64, width: f64 },
    /// Finite-scale data agree with the asymptotic statement.
    Consistent { max_gap: f64 },
    Inconsistent { max_gap: f64 },
}

impl Verdict {
    fn from_gap(max_gap: f64, pass: bool) -> Self {
        if pass { Verdict::Consistent { max_gap } } else { Verdict::Inconsistent { max_gap } }
    }
}

pub fn band_verdict(band: &DixmierBand, tol: f64) -> Verdict {
    let width = band.width();
    if width <= tol {
        Verdict::Measurable { value: band.midpoint() }
    } else {
        Verdict::Nonmeasurable { lo: band.lo, hi: band.hi, width }
    }
}

pub fn measurability_verdict(
    rs: &crate::symbol::ResidueSeries,
    surrogates: &Surrogates,
    tol: f64,
) -> Result<(Verdict, DixmierBand)> {
    let series = NormalizedSeries::new(rs.log_n.clone(), rs.res.clone())?;
    let band = dixmier_band(&series, surrogates)?;
    Ok((band_verdict(&band, tol), band))
}

/// Tabulated `(n, value)` pairs; `n` is kept as `log n` and formatted on
/// output.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SeriesTable {
    pub n: Vec<String>,
    pub log_n: Vec<f64>,
    pub value_re: Vec<f64>,
    pub value_im: Vec<f64>,
}

impl SeriesTable {
    pub fn from_log(log_n: &[f64], values: &[Complex64]) -> Self {
        Self {
            n: log_n.iter().map(|&l| fmt_n_from_log(l)).collect(),
            log_n: log_n.to_vec(),
            value_re: values.iter().map(|v| v.re).collect(),
            value_im: values.iter().map(|v| v.im).collect(),
        }
    }

    pub fn from_integers(n: &[usize], values: &[Complex64]) -> Self {
        Self {
            n: n.iter().map(|v| v.to_string()).collect(),
            log_n: n.iter().map(|&v| (v as f64).ln()).collect(),
            value_re: values.iter().map(|v| v.re).collect(),
            value_im: values.iter().map(|v| v.im).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// CSV rows `n,value_re,value_im` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,value_re,value_im\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{},{}\n", self.n[i], fmt_f64(self.value_re[i]), fmt_f64(self.value_im[i])));
        }
        out
    }
}

/// Common report envelope; `details` carries the pipeline-specific numbers.
#[derive(Debug, Clone, Serialize)]
pub struct Report<D> {
    pub pipeline: String,
    pub inputs: serde_json::Value,
    pub series: SeriesTable,
    pub band: Option<DixmierBand>,
    pub verdict: Verdict,
    pub passed: bool,
    pub tolerances: BTreeMap<String, f64>,
    pub details: D,
    /// Wall-clock seconds.
    pub runtime: f64,
}

fn tolerances<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// `|a − b| / |b|`, or `|a|` when `b = 0`.
pub fn relative_gap(a: Complex64, b: Complex64) -> f64 {
    let nb = b.norm();
    if nb == 0.0 { a.norm() } else { (a - b).norm() / nb }
}

/// Symbol-level residue series and its measurability verdict.
pub fn residue_check(
    sym: &Symbol,
    log_n: &[f64],
    surrogates: &Surrogates,
    tol: f64,
    quad: &QuadSpec,
) -> Result<Report<()>> {
    let start = Instant::now();
    let rs = residue_series_log(sym, log_n, quad)?;
    let (verdict, band) = measurability_verdict(&rs, surrogates, tol)?;
    let passed = matches!(verdict, Verdict::Measurable { .. });
    Ok(Report {
        pipeline: "residue".into(),
        inputs: json!({ "d": sym.dim(), "points": log_n.len(), "n_max": fmt_n_from_log(*log_n.last().unwrap()) }),
        series: SeriesTable::from_log(&rs.log_n, &rs.res),
        band: Some(band),
        verdict,
        passed,
        tolerances: tolerances([("measurability", tol)]),
        details: (),
        runtime: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonmeasurableDetails {
    pub t: Vec<f64>,
    /// `sin log log n^{1/d}` at each sample.
    pub oracle: Vec<f64>,
    pub max_oracle_deviation: f64,
    pub oracle_within_tolerance: bool,
}

/// Residue of the oscillating symbol sampled at `n = ⌈exp(exp t)⌉`. Passes
/// when the verdict is non-measurable with band width at least `min_width`.
pub fn nonmeasurable_check(
    sym: &Symbol,
    t_grid: &[f64],
    min_width: f64,
    measurability_tol: f64,
    oracle_tol: f64,
    quad: &QuadSpec,
) -> Result<Report<NonmeasurableDetails>> {
    let start = Instant::now();
    if t_grid.len() < 2 {
        return Err(Error::InsufficientGrid("need at least two t values".into()));
    }
    let log_n: Vec<f64> = t_grid.iter().map(|&t| double_exp_log_n(t)).collect();
    let rs = residue_series_log(sym, &log_n, quad)?;
    let surrogates = Surrogates { tail_start_log_n: Some(log_n[0]), t_grid: t_grid.to_vec() };
    let (verdict, band) = measurability_verdict(&rs, &surrogates, measurability_tol)?;
    let d = sym.dim() as f64;
    let oracle: Vec<f64> = log_n.iter().map(|&l| (l / d).ln().sin()).collect();
    let max_oracle_deviation = rs.res.iter().zip(&oracle).map(|(r, o)| (r - o).norm()).fold(0.0, f64::max);
    let passed = matches!(verdict, Verdict::Nonmeasurable { width, .. } if width >= min_width);
    Ok(Report {
        pipeline: "nonmeasurable".into(),
        inputs: json!({ "d": sym.dim(), "t": t_grid }),
        series: SeriesTable::from_log(&rs.log_n, &rs.res),
        band: Some(band),
        verdict,
        passed,
        tolerances: tolerances([
            ("measurability", measurability_tol),
            ("min_band_width", min_width),
            ("oracle", oracle_tol),
        ]),
        details: NonmeasurableDetails {
            t: t_grid.to_vec(),
            oracle,
            max_oracle_deviation,
            oracle_within_tolerance: max_oracle_deviation <= oracle_tol,
        },
        runtime: start.elapsed().as_secs_f64(),
    })
}

fn realize(sym: &Symbol, k: usize, budget: MatrixBudget, quad: &QuadSpec) -> Result<(Arc<FrequencyBasis>, crate::quantize::OperatorMatrix)> {
    let basis = Arc::new(enumerate_frequencies(sym.dim(), k, budget)?);
    let t = assemble_operator(sym, &basis, quad.x_nodes)?;
    Ok((basis, t))
}

fn check_window(n_window: &[usize], size: usize) -> Result<()> {
    if n_window.is_empty() {
        return Err(Error::InsufficientGrid("empty n window".into()));
    }
    if n_window.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n window must be strictly increasing".into()));
    }
    if n_window[0] == 0 || 2 * n_window[n_window.len() - 1] > size {
        return Err(Error::InvalidInput(format!("n window must lie in 1..={} for N = {size}", size / 2)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnesDetails {
    pub k: usize,
    pub matrix_size: usize,
    pub res_w: Complex64,
    /// `Res_W / (d (2π)^d)`.
    pub target: Complex64,
    /// `Λ(n_max)`.
    pub lambda: Complex64,
    pub relative_gap: f64,
    pub deviation_max_abs: f64,
    pub deviation_slope: f64,
    pub deviation_threshold: f64,
    pub deviation_bounded: bool,
}

pub fn trace_normalization(d: usize) -> f64 {
    d as f64 * (2.0 * PI).powi(d as i32)
}

/// `Λ(n) = Σ_{j≤n} λ_j / log(1 + n)` over the window, compared with
/// `Res_W / (d (2π)^d)`; also reports the eigenvalue-sum deviation trend.
pub fn connes_check(
    sym: &Symbol,
    k: usize,
    n_window: &[usize],
    budget: MatrixBudget,
    quad: &QuadSpec,
    rel_tol: f64,
    thresholds: &TrendThresholds,
) -> Result<Report<ConnesDetails>> {
    let start = Instant::now();
    let res_w = wodzicki_residue(sym, quad)?;
    let target = res_w / trace_normalization(sym.dim());
    let (_, t) = realize(sym, k, budget, quad)?;
    check_window(n_window, t.size())?;
    let eigs = eigenvalue_sequence(&t)?;
    let prefix = eigs.prefix_sums();
    let lambda: Vec<Complex64> = n_window.iter().map(|&n| prefix[n] / (n as f64).ln_1p()).collect();
    let series = NormalizedSeries::from_integers(n_window, lambda.clone())?;
    let band = dixmier_band(&series, &Surrogates::default()).ok();
    let top = *lambda.last().unwrap();
    let gap = relative_gap(top, target);
    let dev_threshold = thresholds.eigensum * res_w.norm().max(1.0);
    let deviation: DeviationSeries = eigensum_deviation(&eigs, sym, n_window, quad, dev_threshold)?;
    let passed = gap <= rel_tol;
    Ok(Report {
        pipeline: "connes".into(),
        inputs: json!({ "d": sym.dim(), "K": k, "n_min": n_window[0], "n_max": n_window[n_window.len() - 1] }),
        series: SeriesTable::from_integers(n_window, &lambda),
        band,
        verdict: Verdict::from_gap(gap, passed),
        passed,
        tolerances: tolerances([("relative_gap", rel_tol), ("eigensum_slope", dev_threshold)]),
        details: ConnesDetails {
            k,
            matrix_size: t.size(),
            res_w,
            target,
            lambda: top,
            relative_gap: gap,
            deviation_max_abs: deviation.trend.max_abs,
            deviation_slope: deviation.trend.slope,
            deviation_threshold: dev_threshold,
            deviation_bounded: deviation.trend.bounded,
        },
        runtime: start.elapsed().as_secs_f64(),
    })
}

/// How the integral of `f` over the torus is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntegralReference {
    Exact(f64),
    /// Periodic grid mean with this many nodes per axis.
    Quadrature(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationDetails {
    pub integral: f64,
    /// `Vol S^{d-1} ∫ f`.
    pub residue_target: f64,
    pub diagonal_n: usize,
    pub diagonal_residue: Complex64,
    pub diagonal_relative_error: f64,
    /// `Λ(n)` of the realized product and its target `residue_target / (d (2π)^d)`.
    pub eigen: Option<EigenPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPath {
    pub k: usize,
    pub n: usize,
    pub lambda: Complex64,
    pub target: f64,
    pub relative_error: f64,
}

/// Smallest `K` whose basis has at least `n` elements.
pub fn cutoff_for_count(d: usize, n: usize) -> usize {
    let mut k = 1;
    while basis_size(d, k).is_some_and(|s| s < n) {
        k += 1;
    }
    k
}

/// Residue of `M_f (1 − Δ)^{-d/2}` on the torus from its diagonal at
/// `n = diagonal_n`, compared with `Vol S^{d-1} ∫ f`. With `eigen_k` set,
/// the product is also realized and its eigenvalue sums checked at
/// `n = (2K+1)^d / 2`.
#[allow(clippy::too_many_arguments)]
pub fn l2_integration_check(
    f: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    d: usize,
    diagonal_n: usize,
    reference: IntegralReference,
    eigen_k: Option<usize>,
    budget: MatrixBudget,
    x_nodes: usize,
    rel_tol: f64,
) -> Result<Report<IntegrationDetails>> {
    let start = Instant::now();
    if diagonal_n < 2 {
        return Err(Error::InvalidInput("diagonal n must be at least 2".into()));
    }
    let integral = match reference {
        IntegralReference::Exact(v) => v,
        IntegralReference::Quadrature(m) => fourier_mean(f, d, m)?.re * (2.0 * PI).powi(d as i32),
    };
    let residue_target = sphere_volume(d) * integral;
    let basis = enumerate_frequencies(d, cutoff_for_count(d, diagonal_n), MatrixBudget::unlimited())?;
    let diag = multiplier_product_diagonal(f, &basis, d as f64, x_nodes)?;
    let log_grid: Vec<usize> = log_spaced(2, diagonal_n, 48);
    let sums = diagonal_sums(d, &diag, &log_grid)?;
    let diagonal_residue = *sums.residue.last().unwrap();
    let diagonal_relative_error = relative_gap(diagonal_residue, Complex64::new(residue_target, 0.0));
    let eigen = match eigen_k {
        None => None,
        Some(k) => {
            let basis = Arc::new(enumerate_frequencies(d, k, budget)?);
            let m = multiplication_operator(f, &basis, x_nodes)?;
            let prod = m.matmul(&laplacian_multiplier(&basis, d as f64), "M_f(1-Δ)^{-d/2}")?;
            let eigs = eigenvalue_sequence(&prod)?;
            let n = prod.size() / 2;
            let lambda = eigs.prefix_sums()[n] / (n as f64).ln_1p();
            let target = residue_target / trace_normalization(d);
            Some(EigenPath { k, n, lambda, target, relative_error: relative_gap(lambda, Complex64::new(target, 0.0)) })
        }
    };
    let max_gap = eigen.as_ref().map_or(diagonal_relative_error, |e| diagonal_relative_error.max(e.relative_error));
    let passed = max_gap <= rel_tol;
    Ok(Report {
        pipeline: "integrate".into(),
        inputs: json!({ "d": d, "diagonal_n": diagonal_n, "eigen_K": eigen_k }),
        series: SeriesTable::from_integers(&sums.n, &sums.residue),
        band: None,
        verdict: Verdict::from_gap(max_gap, passed),
        passed,
        tolerances: tolerances([("relative_error", rel_tol)]),
        details: IntegrationDetails {
            integral,
            residue_target,
            diagonal_n,
            diagonal_residue,
            diagonal_relative_error,
            eigen,
        },
        runtime: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralFormulaDetails {
    pub k: usize,
    pub n: usize,
    /// `Σ_{j≤n} (P e_j, e_j) / log(1 + n)`.
    pub diagonal: Complex64,
    /// `Σ_{j≤n} λ_j(P) / log(1 + n)`.
    pub eigen: Complex64,
    /// `Res_W / (d (2π)^d)`.
    pub residue: Complex64,
    /// Relative gaps diagonal–eigen, diagonal–residue, eigen–residue.
    pub gaps: [f64; 3],
    pub abs_gaps: [f64; 3],
}

/// Symmetric gap `|a − b| / max(|a|, |b|)`.
fn pair_gap(a: Complex64, b: Complex64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 { 0.0 } else { (a - b).norm() / s }
}

/// Diagonal sums, eigenvalue sums and the residue value, all normalized by
/// `log(1 + n)`; each pair passes within `rel_tol` or within `abs_tol`.
#[allow(clippy::too_many_arguments)]
pub fn torus_spectral_formula_check(
    sym: &Symbol,
    k: usize,
    n_window: &[usize],
    budget: MatrixBudget,
    quad: &QuadSpec,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Report<SpectralFormulaDetails>> {
    let start = Instant::now();
    let res_w = wodzicki_residue(sym, quad)?;
    let residue = res_w / trace_normalization(sym.dim());
    let (_, t) = realize(sym, k, budget, quad)?;
    check_window(n_window, t.size())?;
    let eigs = eigenvalue_sequence(&t)?;
    let prefix = eigs.prefix_sums();
    let diag = diagonal_sums(sym.dim(), &t.diagonal(), n_window)?;
    let n = *n_window.last().unwrap();
    let norm = (n as f64).ln_1p();
    let diagonal = *diag.partial_sums.last().unwrap() / norm;
    let eigen = prefix[n] / norm;
    let pairs = [(diagonal, eigen), (diagonal, residue), (eigen, residue)];
    let gaps = pairs.map(|(a, b)| pair_gap(a, b));
    let abs_gaps = pairs.map(|(a, b)| (a - b).norm());
    let passed = gaps.iter().zip(&abs_gaps).all(|(&g, &a)| g <= rel_tol || a <= abs_tol);
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let lambda: Vec<Complex64> = n_window.iter().map(|&m| prefix[m] / (m as f64).ln_1p()).collect();
    Ok(Report {
        pipeline: "spectral-formula".into(),
        inputs: json!({ "d": sym.dim(), "K": k, "n": n }),
        series: SeriesTable::from_integers(n_window, &lambda),
        band: None,
        verdict: Verdict::from_gap(max_gap, passed),
        passed,
        tolerances: tolerances([("relative_gap", rel_tol), ("absolute_gap", abs_tol)]),
        details: SpectralFormulaDetails { k, n, diagonal, eigen, residue, gaps, abs_gaps },
        runtime: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulationDetails {
    pub k: usize,
    pub levels: Vec<usize>,
    pub profile: Vec<f64>,
    pub profile_trend: TrendReport,
    pub truncated_at: Option<usize>,
    pub tail_n: Vec<usize>,
    pub tail_energy: Vec<f64>,
    pub tail_trend: TrendReport,
}

/// Modulation profile against `V = (1 − Δ)^{-d/2}` at `⌊log₂ N⌋ − 3`
/// levels, and the tail energy at log-spaced `n ≤ N/2`.
pub fn modulation_check(
    sym: &Symbol,
    k: usize,
    budget: MatrixBudget,
    quad: &QuadSpec,
    thresholds: &TrendThresholds,
) -> Result<Report<ModulationDetails>> {
    let start = Instant::now();
    let (basis, t) = realize(sym, k, budget, quad)?;
    let v = laplacian_multiplier(&basis, sym.dim() as f64);
    let size = t.size();
    let levels = ((size as f64).log2().floor() as usize).saturating_sub(3).max(2);
    let profile = modulation_profile(&t, &v, levels, thresholds.modulation)?;
    let tail_n = log_spaced(1, (size / 2).max(1), 24);
    let tail = tail_energy(&t, &tail_n, thresholds.tail_energy)?;
    let passed = profile.trend.bounded && tail.trend.bounded;
    let max_gap = profile.trend.slope.abs().max(tail.trend.slope.abs());
    let values: Vec<Complex64> = tail.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(Report {
        pipeline: "modulation".into(),
        inputs: json!({ "d": sym.dim(), "K": k, "levels": levels }),
        series: SeriesTable::from_integers(&tail_n, &values),
        band: None,
        verdict: Verdict::from_gap(max_gap, passed),
        passed,
        tolerances: tolerances([("modulation_slope", thresholds.modulation), ("tail_energy_slope", thresholds.tail_energy)]),
        details: ModulationDetails {
            k,
            levels: profile.levels.clone(),
            profile: profile.values.clone(),
            profile_trend: profile.trend,
            truncated_at: profile.truncated_at,
            tail_n,
            tail_energy: tail.values,
            tail_trend: tail.trend,
        },
        runtime: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::Bump;
    use crate::symbol::{SupportBox, make_classical_symbol, make_nonmeasurable_symbol};
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn constant_series_band_is_a_point() {
        let n: Vec<usize> = (1..=1000).collect();
        let s = NormalizedSeries::from_integers(&n, vec![c(0.7); 1000]).unwrap();
        let b = dixmier_band(&s, &Surrogates::default()).unwrap();
        assert_eq!(b.lo, c(0.7));
        assert_eq!(b.hi, c(0.7));
        assert!(b.samples.len() >= 3);
        assert_eq!(band_verdict(&b, 0.05), Verdict::Measurable { value: c(0.7) });
    }

    #[test]
    fn loglog_oscillation_band() {
        let t_grid = vec![PI / 2.0, 3.0 * PI / 2.0];
        let extra: Vec<f64> = t_grid.iter().map(|&t| double_exp_log_n(t)).collect();
        let hi = 100.0 * std::f64::consts::LN_10;
        let s = NormalizedSeries::from_fn(2f64.ln(), hi, 400, &extra, |l| c(l.ln().sin())).unwrap();
        let b = dixmier_band(&s, &Surrogates { tail_start_log_n: Some(1.0), t_grid }).unwrap();
        assert!(b.lo.re <= -0.9 && b.hi.re >= 0.9, "{b:?}");
        assert!(matches!(band_verdict(&b, 0.05), Verdict::Nonmeasurable { .. }));
    }

    #[test]
    fn c0_perturbation_stays_within_tolerance() {
        let n: Vec<usize> = (1..=100_000).collect();
        let s = NormalizedSeries::from_integers(&n, n.iter().map(|&k| c(2.0 + 1.0 / k as f64)).collect()).unwrap();
        let b = dixmier_band(&s, &Surrogates::default()).unwrap();
        assert!(b.lo.re >= 2.0 && b.hi.re <= 2.0 + 0.01, "{b:?}");
    }

    #[test]
    fn band_samples_lie_within_tail_extrema() {
        let n: Vec<usize> = (1..=5000).collect();
        let s = NormalizedSeries::from_integers(&n, n.iter().map(|&k| Complex64::new((k as f64).sin(), (k as f64).cos())).collect()).unwrap();
        let b = dixmier_band(&s, &Surrogates::default()).unwrap();
        for smp in &b.samples {
            assert!(smp.value.re >= b.tail_lo.re && smp.value.re <= b.tail_hi.re);
            assert!(smp.value.im >= b.tail_lo.im && smp.value.im <= b.tail_hi.im);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        let s = NormalizedSeries::from_integers(&[10], vec![c(1.0)]).unwrap();
        assert!(matches!(dixmier_band(&s, &Surrogates::default()), Err(Error::InsufficientGrid(_))));
        assert!(NormalizedSeries::from_integers(&[2, 1], vec![c(1.0), c(1.0)]).is_err());
    }

    fn benchmark(scale: f64) -> Symbol {
        let w = Bump::unit_mass(vec![0.0], vec![2.5]).unwrap();
        let (lo, hi) = w.support();
        make_classical_symbol(1, move |x, _| c(scale * w.eval(x)), 1.0, SupportBox::new(lo, hi).unwrap()).unwrap()
    }

    #[test]
    fn classical_residue_is_measurable() {
        let quad = QuadSpec::for_dim(1);
        let log_n: Vec<f64> = (1..=60).map(|k| 2.0 * k as f64).collect();
        let r = residue_check(&benchmark(1.0), &log_n, &Surrogates::default(), 0.05, &quad).unwrap();
        match r.verdict {
            Verdict::Measurable { value } => assert!((value.re - 2.0).abs() < 0.05),
            v => panic!("{v:?}"),
        }
        assert!(r.passed);
    }

    #[test]
    fn zero_symbol_residue_is_zero() {
        let quad = QuadSpec::for_dim(1);
        let log_n: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let r = residue_check(&Symbol::zero(1).unwrap(), &log_n, &Surrogates::default(), 0.05, &quad).unwrap();
        assert_eq!(r.verdict, Verdict::Measurable { value: c(0.0) });
        assert!(r.series.value_re.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonmeasurable_symbol_band_is_wide() {
        let quad = QuadSpec::for_dim(1);
        let t: Vec<f64> = (0..13).map(|k| 0.6 + 0.4 * k as f64).collect();
        let r = nonmeasurable_check(&make_nonmeasurable_symbol(1, None).unwrap(), &t, 1.5, 0.05, 0.05, &quad).unwrap();
        assert!(r.passed);
        assert!(r.band.as_ref().unwrap().width() >= 1.5);
    }

    #[test]
    fn connes_check_scales_linearly() {
        let quad = QuadSpec::for_dim(1);
        let window: Vec<usize> = (8..=64).collect();
        let th = TrendThresholds::default();
        let a = connes_check(&benchmark(1.0), 64, &window, MatrixBudget::default(), &quad, 0.2, &th).unwrap();
        let b = connes_check(&benchmark(5.0), 64, &window, MatrixBudget::default(), &quad, 0.2, &th).unwrap();
        assert_relative_eq!(b.details.lambda.re, 5.0 * a.details.lambda.re, max_relative = 1e-9);
        assert_relative_eq!(b.details.target.re, 5.0 * a.details.target.re, max_relative = 1e-12);
        assert_relative_eq!(a.details.target.re, 1.0 / PI, max_relative = 1e-9);
        assert!(connes_check(&benchmark(1.0), 16, &[40], MatrixBudget::default(), &quad, 0.2, &th).is_err());
    }

    #[test]
    fn integration_of_zero_is_zero() {
        let r = l2_integration_check(&|_| c(0.0), 1, 1000, IntegralReference::Quadrature(64), Some(8), MatrixBudget::default(), 64, 0.02).unwrap();
        assert_eq!(r.details.diagonal_residue, c(0.0));
        assert!(r.passed);
    }

    #[test]
    fn spectral_formula_for_x_independent_symbol() {
        // constant principal symbol on the whole torus: the matrix is diagonal
        // with entries ρ(|m|), ρ(0) = 0, so at n = 32 the basis order holds
        // m = 0 where the eigenvalue order holds |m| = 16
        let quad = QuadSpec::for_dim(1);
        let sym = make_classical_symbol(1, |_, _| c(1.0), 1.0, SupportBox::torus(1)).unwrap();
        let window: Vec<usize> = (4..=32).collect();
        let r = torus_spectral_formula_check(&sym, 32, &window, MatrixBudget::default(), &quad, 0.1, 0.05).unwrap();
        let shift = (1.0 / 16.0) / 33f64.ln();
        assert_relative_eq!(r.details.eigen.re - r.details.diagonal.re, shift, max_relative = 1e-10);
    }

    #[test]
    fn cutoff_for_count_examples() {
        assert_eq!(cutoff_for_count(1, 100_000), 50_000);
        assert_eq!(cutoff_for_count(2, 9), 1);
        assert_eq!(cutoff_for_count(2, 10), 2);
    }
}
