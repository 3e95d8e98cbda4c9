//! Symbols of order `-d` on `ℝᵈ × ℝᵈ` with compact `x`-support, their ball
//! integrals, residue series and the Wodzicki residue of classical symbols.
//!
//! Every `ξ`-integral is done in polar coordinates. Below `|ξ| = 1` the radial
//! variable is `r` itself; above it the rule runs in `u = log r`, where the
//! measure `r^{d-1} dr` becomes `r^d du`. Radial profiles evaluate `r^d ρ(r)`
//! directly as a function of `u`, which keeps radii like `10^{400}` (far past
//! `f64::MAX`) within reach of the separable symbols.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::bump::standard_bump;
use crate::error::{Error, Result};
use crate::quadrature::{GaussLegendre, box_rule, panels, smoothstep, sphere_rule, sphere_volume};

pub type SpatialFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
pub type PhaseFn = Arc<dyn Fn(&[f64], &[f64]) -> Complex64 + Send + Sync>;

/// Largest `log r` at which a non-separable symbol can still be evaluated.
const MAX_LOG_RADIUS_GENERAL: f64 = 700.0;
/// Length (in `log r`) of each of the two tail windows used to detect a
/// divergent `L₂` tail.
const TAIL_WINDOW: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SupportBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
    periodic: bool,
}

impl SupportBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidInput("support box bounds have mismatched dimensions".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidInput("support box is empty".into()));
        }
        Ok(Self { lo, hi, periodic: false })
    }

    /// The whole fundamental domain `[-π, π]^d`, for functions that are
    /// smooth and `2π`-periodic rather than compactly supported.
    pub fn torus(d: usize) -> Self {
        Self { lo: vec![-PI; d], hi: vec![PI; d], periodic: true }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.periodic || x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    fn union(&self, other: &Self) -> Self {
        if self.periodic || other.periodic {
            return Self::torus(self.dim());
        }
        Self {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
            periodic: false,
        }
    }
}

/// Radial factor `ρ(|ξ|)` of a separable symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialProfile {
    /// `|ξ|^{-d}` for `|ξ| ≥ cutoff`, multiplied by a quintic smoothstep ramp on
    /// `[cutoff/2, cutoff]` and zero below.
    Homogeneous { cutoff: f64 },
    /// `⟨ξ⟩^{-d} = (1 + |ξ|²)^{-d/2}`.
    Bracket,
    /// `g₁(|ξ|) (sin log log |ξ| + cos log log |ξ|) |ξ|^{-d}` with `g₁` the
    /// smoothstep from 0 at 3 to 1 at 4.
    LogLogOscillation,
}

impl RadialProfile {
    /// `ρ(r)`.
    pub fn value(&self, d: usize, r: f64) -> f64 {
        if r <= 0.0 {
            return if *self == RadialProfile::Bracket { 1.0 } else { 0.0 };
        }
        let inv = r.powi(-(d as i32));
        match *self {
            RadialProfile::Homogeneous { cutoff } => {
                if r >= cutoff { inv } else { smoothstep((r - 0.5 * cutoff) / (0.5 * cutoff)) * inv }
            }
            RadialProfile::Bracket => (1.0 + r * r).powf(-(d as f64) / 2.0),
            RadialProfile::LogLogOscillation => {
                let g = smoothstep(r - 3.0);
                if g == 0.0 {
                    return 0.0;
                }
                let ll = r.ln().ln();
                g * (ll.sin() + ll.cos()) * inv
            }
        }
    }

    /// `r^d ρ(r)` at `r = e^u`.
    pub fn scaled_log(&self, d: usize, u: f64) -> f64 {
        match *self {
            RadialProfile::Homogeneous { cutoff } => {
                let r = u.exp();
                if r >= cutoff { 1.0 } else { smoothstep((r - 0.5 * cutoff) / (0.5 * cutoff)) }
            }
            RadialProfile::Bracket => (1.0 + (-2.0 * u).exp()).powf(-(d as f64) / 2.0),
            RadialProfile::LogLogOscillation => {
                let r = u.exp();
                let g = smoothstep(r - 3.0);
                if g == 0.0 {
                    return 0.0;
                }
                let ll = u.ln();
                g * (ll.sin() + ll.cos())
            }
        }
    }

    /// Radii where the profile is not smooth enough for a single panel.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            RadialProfile::Homogeneous { cutoff } => vec![0.5 * cutoff, cutoff],
            RadialProfile::Bracket => vec![],
            RadialProfile::LogLogOscillation => vec![3.0, 4.0],
        }
    }
}

/// `ξ`-dependence of a product symbol.
#[derive(Clone)]
pub enum FrequencyFactor {
    Radial(RadialProfile),
    Function(SpatialFn),
}

#[derive(Clone)]
pub enum SymbolKind {
    /// `principal(x, ξ/|ξ|) · ρ(|ξ|)` with the homogeneous profile.
    Classical { principal: PhaseFn, cutoff_radius: f64 },
    /// `f(x) g(ξ)`.
    Product { f: SpatialFn, g: FrequencyFactor },
    General { eval: PhaseFn },
}

impl fmt::Debug for SymbolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolKind::Classical { cutoff_radius, .. } => {
                write!(f, "Classical {{ cutoff_radius: {cutoff_radius} }}")
            }
            SymbolKind::Product { g: FrequencyFactor::Radial(p), .. } => write!(f, "Product {{ radial: {p:?} }}"),
            SymbolKind::Product { .. } => write!(f, "Product {{ g: <fn> }}"),
            SymbolKind::General { .. } => write!(f, "General"),
        }
    }
}

/// Pointwise map applied to the symbol before integrating. All three are
/// multiplicative, so they commute with the separable factorisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    Value,
    Abs,
    AbsSq,
}

impl Integrand {
    fn apply(self, z: Complex64) -> Complex64 {
        match self {
            Integrand::Value => z,
            Integrand::Abs => Complex64::new(z.norm(), 0.0),
            Integrand::AbsSq => Complex64::new(z.norm_sqr(), 0.0),
        }
    }

    fn apply_real(self, v: f64) -> f64 {
        match self {
            Integrand::Value => v,
            Integrand::Abs => v.abs(),
            Integrand::AbsSq => v * v,
        }
    }
}

/// Resolution of the `x`, angular and radial rules.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadSpec {
    pub x_nodes: usize,
    pub angular_nodes: usize,
    pub radial_order: usize,
    /// Maximum panel length in `log r` (and in `r` below radius one).
    pub panel_width: f64,
}

impl QuadSpec {
    pub fn for_dim(d: usize) -> Self {
        let x_nodes = match d {
            1 => 64,
            2 => 32,
            _ => 16,
        };
        Self { x_nodes, angular_nodes: 64, radial_order: 16, panel_width: 0.5 }
    }

    fn validate(&self) -> Result<()> {
        if self.x_nodes == 0 || self.angular_nodes == 0 || self.radial_order == 0 || !(self.panel_width > 0.0) {
            return Err(Error::InvalidInput("quadrature resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct Symbol {
    dim: usize,
    support: SupportBox,
    kind: SymbolKind,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol").field("dim", &self.dim).field("support", &self.support).field("kind", &self.kind).finish()
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if d > 3 {
        return Err(Error::InvalidInput(format!("dimension {d} unsupported (1..=3)")));
    }
    Ok(())
}

fn check_support(d: usize, support: &SupportBox) -> Result<()> {
    if support.dim() != d {
        return Err(Error::InvalidInput(format!(
            "support box has dimension {} but symbol has dimension {d}",
            support.dim()
        )));
    }
    Ok(())
}

/// Classical symbol with principal part `principal(x, s)`, `s` on the unit
/// sphere, exactly homogeneous of degree `-d` beyond `cutoff_radius`.
pub fn make_classical_symbol(
    d: usize,
    principal: impl Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    cutoff_radius: f64,
    support: SupportBox,
) -> Result<Symbol> {
    check_dim(d)?;
    check_support(d, &support)?;
    if !(cutoff_radius >= 1.0) || !cutoff_radius.is_finite() {
        return Err(Error::InvalidInput(format!("cutoff radius {cutoff_radius} must be >= 1")));
    }
    Ok(Symbol { dim: d, support, kind: SymbolKind::Classical { principal: Arc::new(principal), cutoff_radius } })
}

/// `|φ(x)|² g(ξ) (sin log log|ξ| + cos log log|ξ|) / |ξ|^d` where `φ` is a
/// bump on `[-1, 1]^d` with `∫|φ|² = phi_norm_target` (default
/// `1 / Vol S^{d-1}`).
pub fn make_nonmeasurable_symbol(d: usize, phi_norm_target: Option<f64>) -> Result<Symbol> {
    check_dim(d)?;
    let target = phi_norm_target.unwrap_or_else(|| 1.0 / sphere_volume(d));
    if !(target >= 0.0) || !target.is_finite() {
        return Err(Error::InvalidInput("phi normalisation target must be finite and non-negative".into()));
    }
    // one numeric pass over the unnormalised |φ|²
    let gl = GaussLegendre::new(64);
    let mut one_axis = 0.0;
    for k in 0..32 {
        let a = -1.0 + k as f64 / 16.0;
        one_axis += gl.integrate(a, a + 1.0 / 16.0, |t| standard_bump(t).powi(2));
    }
    let amp_sq = target / one_axis.powi(d as i32);
    let f = move |x: &[f64]| Complex64::new(amp_sq * x.iter().map(|&t| standard_bump(t).powi(2)).product::<f64>(), 0.0);
    let support = SupportBox::new(vec![-1.0; d], vec![1.0; d])?;
    Ok(Symbol {
        dim: d,
        support,
        kind: SymbolKind::Product { f: Arc::new(f), g: FrequencyFactor::Radial(RadialProfile::LogLogOscillation) },
    })
}

/// `f(x) g(ξ)`; `f` must vanish outside `support`.
pub fn make_product_symbol(
    f: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    g: FrequencyFactor,
    d: usize,
    support: SupportBox,
) -> Result<Symbol> {
    check_dim(d)?;
    check_support(d, &support)?;
    let f: SpatialFn = Arc::new(f);
    if !support.is_periodic() {
        check_vanishes_outside(&*f, &support)?;
    }
    Ok(Symbol { dim: d, support, kind: SymbolKind::Product { f, g } })
}

/// Samples `f` on a grid over `[-π, π]^d` and rejects it if it is visibly
/// non-zero outside the declared box.
fn check_vanishes_outside(f: &(dyn Fn(&[f64]) -> Complex64 + Send + Sync), support: &SupportBox) -> Result<()> {
    let d = support.dim();
    let per_axis: usize = match d {
        1 => 512,
        2 => 96,
        _ => 24,
    };
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut inside_max: f64 = 0.0;
    let mut outside_max: f64 = 0.0;
    let mut outside_at = vec![0.0; d];
    loop {
        for (xi, &k) in x.iter_mut().zip(&idx) {
            *xi = -PI + 2.0 * PI * (k as f64 + 0.5) / per_axis as f64;
        }
        let v = f(&x).norm();
        if support.contains(&x) {
            inside_max = inside_max.max(v);
        } else if v > outside_max {
            outside_max = v;
            outside_at.copy_from_slice(&x);
        }
        let mut axis = 0;
        loop {
            if axis == d {
                let scale = inside_max.max(f64::MIN_POSITIVE);
                if outside_max > 1e-12 * scale {
                    return Err(Error::SupportLeak(format!(
                        "f = {outside_max:.3e} at {outside_at:?}, outside the declared support"
                    )));
                }
                return Ok(());
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

impl Symbol {
    pub fn general(
        d: usize,
        support: SupportBox,
        eval: impl Fn(&[f64], &[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(d)?;
        check_support(d, &support)?;
        Ok(Self { dim: d, support, kind: SymbolKind::General { eval: Arc::new(eval) } })
    }

    pub fn zero(d: usize) -> Result<Self> {
        check_dim(d)?;
        let support = SupportBox::new(vec![-1.0; d], vec![1.0; d])?;
        Ok(Self {
            dim: d,
            support,
            kind: SymbolKind::Product {
                f: Arc::new(|_: &[f64]| Complex64::new(0.0, 0.0)),
                g: FrequencyFactor::Radial(RadialProfile::Bracket),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }

    pub fn is_classical(&self) -> bool {
        matches!(self.kind, SymbolKind::Classical { .. })
    }

    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Complex64 {
        if !self.support.contains(x) {
            return Complex64::new(0.0, 0.0);
        }
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        match &self.kind {
            SymbolKind::Classical { principal, cutoff_radius } => {
                let rho = RadialProfile::Homogeneous { cutoff: *cutoff_radius }.value(self.dim, r);
                if rho == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let s: Vec<f64> = xi.iter().map(|v| v / r).collect();
                principal(x, &s) * rho
            }
            SymbolKind::Product { f, g } => {
                let fx = f(x);
                if fx == Complex64::new(0.0, 0.0) {
                    return fx;
                }
                match g {
                    FrequencyFactor::Radial(p) => fx * p.value(self.dim, r),
                    FrequencyFactor::Function(g) => fx * g(xi),
                }
            }
            SymbolKind::General { eval } => eval(x, xi),
        }
    }

    /// `α · p`, keeping the kind.
    pub fn scaled(&self, alpha: Complex64) -> Self {
        let kind = match &self.kind {
            SymbolKind::Classical { principal, cutoff_radius } => {
                let p = principal.clone();
                SymbolKind::Classical {
                    principal: Arc::new(move |x: &[f64], s: &[f64]| alpha * p(x, s)),
                    cutoff_radius: *cutoff_radius,
                }
            }
            SymbolKind::Product { f, g } => {
                let f = f.clone();
                SymbolKind::Product { f: Arc::new(move |x: &[f64]| alpha * f(x)), g: g.clone() }
            }
            SymbolKind::General { eval } => {
                let e = eval.clone();
                SymbolKind::General { eval: Arc::new(move |x: &[f64], xi: &[f64]| alpha * e(x, xi)) }
            }
        };
        Self { dim: self.dim, support: self.support.clone(), kind }
    }

    /// `p + q`. Two classical symbols with the same cutoff stay classical;
    /// anything else becomes a general symbol.
    pub fn add(&self, other: &Symbol) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidInput("cannot add symbols of different dimension".into()));
        }
        let support = self.support.union(&other.support);
        if let (
            SymbolKind::Classical { principal: p, cutoff_radius: c1 },
            SymbolKind::Classical { principal: q, cutoff_radius: c2 },
        ) = (&self.kind, &other.kind)
            && c1 == c2
        {
            let (p, q) = (p.clone(), q.clone());
            let (sp, sq) = (self.support.clone(), other.support.clone());
            let principal = move |x: &[f64], s: &[f64]| {
                let a = if sp.contains(x) { p(x, s) } else { Complex64::new(0.0, 0.0) };
                let b = if sq.contains(x) { q(x, s) } else { Complex64::new(0.0, 0.0) };
                a + b
            };
            return Ok(Self {
                dim: self.dim,
                support,
                kind: SymbolKind::Classical { principal: Arc::new(principal), cutoff_radius: *c1 },
            });
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(Self {
            dim: self.dim,
            support,
            kind: SymbolKind::General { eval: Arc::new(move |x: &[f64], xi: &[f64]| a.eval(x, xi) + b.eval(x, xi)) },
        })
    }

    /// `∬_{x} ∫_{r_lo ≤ |ξ| ≤ r_hi} F(p) dξ dx` with radii given by their
    /// logarithms; `log_lo = None` starts at the origin.
    pub fn shell_integral(
        &self,
        log_lo: Option<f64>,
        log_hi: f64,
        integrand: Integrand,
        quad: &QuadSpec,
    ) -> Result<Complex64> {
        quad.validate()?;
        if log_hi.is_nan() || log_lo.is_some_and(f64::is_nan) {
            return Err(Error::Quadrature("NaN radius".into()));
        }
        if let Some(lo) = log_lo
            && lo >= log_hi
        {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let x_rule = box_rule(self.support.lo(), self.support.hi(), quad.x_nodes);
        let d = self.dim;
        let out = match &self.kind {
            SymbolKind::Classical { principal, cutoff_radius } => {
                let s_rule = sphere_rule(d, quad.angular_nodes);
                let mut spatial = Complex64::new(0.0, 0.0);
                for (x, wx) in &x_rule {
                    for (s, ws) in &s_rule {
                        spatial += integrand.apply(principal(x, s)) * (wx * ws);
                    }
                }
                let profile = RadialProfile::Homogeneous { cutoff: *cutoff_radius };
                spatial * radial_integral(&profile, d, log_lo, log_hi, integrand, quad)
            }
            SymbolKind::Product { f, g } => {
                let mut spatial = Complex64::new(0.0, 0.0);
                for (x, wx) in &x_rule {
                    spatial += integrand.apply(f(x)) * *wx;
                }
                let freq = match g {
                    FrequencyFactor::Radial(p) => {
                        Complex64::new(sphere_volume(d) * radial_integral(p, d, log_lo, log_hi, integrand, quad), 0.0)
                    }
                    FrequencyFactor::Function(g) => {
                        let s_rule = sphere_rule(d, quad.angular_nodes);
                        polar_sum(d, log_lo, log_hi, quad, &[], |r, w| {
                            let mut acc = Complex64::new(0.0, 0.0);
                            let xi: Vec<f64> = vec![0.0; d];
                            let mut xi = xi;
                            for (s, ws) in &s_rule {
                                for (k, v) in xi.iter_mut().enumerate() {
                                    *v = r * s[k];
                                }
                                acc += integrand.apply(g(&xi)) * *ws;
                            }
                            acc * w
                        })?
                    }
                };
                spatial * freq
            }
            SymbolKind::General { eval } => {
                let s_rule = sphere_rule(d, quad.angular_nodes);
                polar_sum(d, log_lo, log_hi, quad, &[], |r, w| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut xi = vec![0.0; d];
                    for (x, wx) in &x_rule {
                        for (s, ws) in &s_rule {
                            for (k, v) in xi.iter_mut().enumerate() {
                                *v = r * s[k];
                            }
                            acc += integrand.apply(eval(x, &xi)) * (wx * ws);
                        }
                    }
                    acc * w
                })?
            }
        };
        if !out.re.is_finite() || !out.im.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integral {out} over log-radius ({log_lo:?}, {log_hi})")));
        }
        Ok(out)
    }

    /// `∬ F(p)` over the shell `r ≤ |ξ| ≤ 2r`.
    pub fn dyadic_shell_integral(&self, r: f64, integrand: Integrand, quad: &QuadSpec) -> Result<Complex64> {
        if !(r > 0.0) {
            return Err(Error::InvalidInput("shell radius must be positive".into()));
        }
        self.shell_integral(Some(r.ln()), (2.0 * r).ln(), integrand, quad)
    }
}

/// Radial part `∫ F(ρ(r)) r^{d-1} dr` of a separable integral.
fn radial_integral(
    profile: &RadialProfile,
    d: usize,
    log_lo: Option<f64>,
    log_hi: f64,
    integrand: Integrand,
    quad: &QuadSpec,
) -> f64 {
    let gl = GaussLegendre::new(quad.radial_order);
    let bps = profile.breakpoints();
    let mut total = 0.0;
    // r-space part on [r_lo, min(r_hi, 1)]
    let r_lo = log_lo.map_or(0.0, f64::exp);
    if r_lo < 1.0 && log_hi > f64::NEG_INFINITY {
        let r_hi = log_hi.min(0.0).exp();
        for (a, b) in panels(r_lo, r_hi, &bps, quad.panel_width) {
            total += gl.integrate(a, b, |r| integrand.apply_real(profile.value(d, r)) * r.powi(d as i32 - 1));
        }
    }
    // u-space part on [max(log_lo, 0), log_hi]
    let u_lo = log_lo.unwrap_or(0.0).max(0.0);
    if log_hi > u_lo {
        let ubps: Vec<f64> = bps.iter().filter(|&&b| b > 0.0).map(|b| b.ln()).collect();
        let df = d as f64;
        for (a, b) in panels(u_lo, log_hi, &ubps, quad.panel_width) {
            total += gl.integrate(a, b, |u| {
                let scaled = profile.scaled_log(d, u);
                match integrand {
                    // F(ρ) r^d = F(r^d ρ) r^{d(1-k)} for F homogeneous of degree k
                    Integrand::Value | Integrand::Abs => integrand.apply_real(scaled),
                    Integrand::AbsSq => scaled * scaled * (-df * u).exp(),
                }
            });
        }
    }
    total
}

/// Generic polar radial sum: calls `term(r, w)` for every radial node where
/// `w` already carries the `r^{d-1} dr` measure.
fn polar_sum(
    d: usize,
    log_lo: Option<f64>,
    log_hi: f64,
    quad: &QuadSpec,
    bps: &[f64],
    mut term: impl FnMut(f64, f64) -> Complex64,
) -> Result<Complex64> {
    if log_hi > MAX_LOG_RADIUS_GENERAL {
        return Err(Error::Quadrature(format!(
            "log-radius {log_hi:.1} exceeds {MAX_LOG_RADIUS_GENERAL} for a non-separable symbol"
        )));
    }
    let gl = GaussLegendre::new(quad.radial_order);
    let mut total = Complex64::new(0.0, 0.0);
    let r_lo = log_lo.map_or(0.0, f64::exp);
    if r_lo < 1.0 {
        let r_hi = log_hi.min(0.0).exp();
        for (a, b) in panels(r_lo, r_hi, bps, quad.panel_width) {
            for (r, w) in gl.mapped(a, b) {
                total += term(r, w * r.powi(d as i32 - 1));
            }
        }
    }
    let u_lo = log_lo.unwrap_or(0.0).max(0.0);
    if log_hi > u_lo {
        let ubps: Vec<f64> = bps.iter().filter(|&&b| b > 0.0).map(|b| b.ln()).collect();
        for (a, b) in panels(u_lo, log_hi, &ubps, quad.panel_width) {
            for (u, w) in gl.mapped(a, b) {
                let r = u.exp();
                total += term(r, w * r.powi(d as i32));
            }
        }
    }
    Ok(total)
}

/// `∬_{|ξ| ≤ R} p(x, ξ) dξ dx`.
pub fn ball_integral(sym: &Symbol, radius: f64, quad: &QuadSpec) -> Result<Complex64> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidInput(format!("radius {radius} must be non-negative")));
    }
    if radius == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    sym.shell_integral(None, radius.ln(), Integrand::Value, quad)
}

/// Ball integral with the radius given as `log R`.
pub fn ball_integral_log(sym: &Symbol, log_radius: f64, quad: &QuadSpec) -> Result<Complex64> {
    sym.shell_integral(None, log_radius, Integrand::Value, quad)
}

/// Representative `Res_n = d V(n) / log(1 + n)` of the residue class, with
/// `V(n)` the integral of the symbol over `|ξ| ≤ n^{1/d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueSeries {
    pub dim: usize,
    /// `log n` for each grid point; `n` itself may exceed `f64::MAX`.
    pub log_n: Vec<f64>,
    pub ball_integral: Vec<Complex64>,
    pub res: Vec<Complex64>,
}

impl ResidueSeries {
    pub fn len(&self) -> usize {
        self.log_n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_n.is_empty()
    }

    /// Grid values `n` (infinite past `f64::MAX`).
    pub fn n(&self) -> Vec<f64> {
        self.log_n.iter().map(|l| l.exp()).collect()
    }
}

/// `log(1 + n)` from `log n`, exact for huge `n`.
pub fn log1p_from_log(log_n: f64) -> f64 {
    if log_n > 40.0 { log_n + (-log_n).exp() } else { log_n.exp().ln_1p() }
}

pub fn residue_series(sym: &Symbol, n_grid: &[u64], quad: &QuadSpec) -> Result<ResidueSeries> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("n grid must be strictly increasing".into()));
    }
    if n_grid.first().is_some_and(|&n| n < 2) {
        return Err(Error::InvalidInput("n grid must start at n >= 2".into()));
    }
    let log_n: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    residue_series_log(sym, &log_n, quad)
}

/// Residue series on a grid given by `log n`, for `n` beyond integer range.
/// Ball integrals are accumulated shell by shell in grid order.
pub fn residue_series_log(sym: &Symbol, log_n: &[f64], quad: &QuadSpec) -> Result<ResidueSeries> {
    if log_n.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("n grid must be strictly increasing".into()));
    }
    if log_n.first().is_some_and(|&l| !(l >= 2f64.ln() - 1e-12)) {
        return Err(Error::InvalidInput("n grid must start at n >= 2".into()));
    }
    let d = sym.dim() as f64;
    let mut ball = Vec::with_capacity(log_n.len());
    let mut res = Vec::with_capacity(log_n.len());
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev: Option<f64> = None;
    for &ln in log_n {
        let log_r = ln / d;
        acc += sym.shell_integral(prev, log_r, Integrand::Value, quad)?;
        prev = Some(log_r);
        ball.push(acc);
        res.push(acc * (d / log1p_from_log(ln)));
    }
    Ok(ResidueSeries { dim: sym.dim(), log_n: log_n.to_vec(), ball_integral: ball, res })
}

/// `∫_{ℝᵈ} ∫_{S^{d-1}} p_{-d}(x, s) ds dx` for a classical symbol.
pub fn wodzicki_residue(sym: &Symbol, quad: &QuadSpec) -> Result<Complex64> {
    let SymbolKind::Classical { principal, .. } = sym.kind() else {
        return Err(Error::NotClassical);
    };
    quad.validate()?;
    let x_rule = box_rule(sym.support().lo(), sym.support().hi(), quad.x_nodes);
    let s_rule = sphere_rule(sym.dim(), quad.angular_nodes);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, wx) in &x_rule {
        for (s, ws) in &s_rule {
            acc += principal(x, s) * (wx * ws);
        }
    }
    Ok(acc)
}

/// Finite-grid evaluation of `‖p‖_{L₂} + sup_t t^{d/2} (∬_{|ξ|≥t} |p|²)^{1/2}`.
/// The maximum is over the supplied `t` values only, so `value` is a lower
/// bound for the true norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedNorm {
    pub value: f64,
    pub l2_norm: f64,
    pub tail_terms: Vec<(f64, f64)>,
}

pub fn modulated_norm(sym: &Symbol, t_grid: &[f64], quad: &QuadSpec) -> Result<ModulatedNorm> {
    if t_grid.iter().any(|&t| !(t >= 1.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("t grid must lie in [1, ∞)".into()));
    }
    let tail_sq = |log_t: Option<f64>| -> Result<f64> {
        let start = log_t.unwrap_or(0.0).max(0.0);
        let near = sym.shell_integral(log_t, start + TAIL_WINDOW, Integrand::AbsSq, quad)?.re;
        let far = sym.shell_integral(Some(start + TAIL_WINDOW), start + 2.0 * TAIL_WINDOW, Integrand::AbsSq, quad)?.re;
        if far > 1e-6 * near.abs() {
            return Err(Error::NotModulated(format!(
                "L2 tail beyond |ξ| = e^{start:.1} does not decay (window masses {near:.3e}, {far:.3e})"
            )));
        }
        Ok(near + far)
    };
    let l2_norm = tail_sq(None)?.max(0.0).sqrt();
    let d = sym.dim() as f64;
    let mut tail_terms = Vec::with_capacity(t_grid.len());
    let mut sup: f64 = 0.0;
    for &t in t_grid {
        let term = t.powf(d / 2.0) * tail_sq(Some(t.ln()))?.max(0.0).sqrt();
        sup = sup.max(term);
        tail_terms.push((t, term));
    }
    Ok(ModulatedNorm { value: l2_norm + sup, l2_norm, tail_terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::Bump;
    use approx::assert_relative_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn unit_bump_1d() -> (Bump, SupportBox) {
        let b = Bump::unit_mass(vec![0.2], vec![1.5]).unwrap();
        let (lo, hi) = b.support();
        (b, SupportBox::new(lo, hi).unwrap())
    }

    fn classical_1d() -> Symbol {
        let (b, supp) = unit_bump_1d();
        make_classical_symbol(1, move |x, _| c(b.eval(x)), 1.0, supp).unwrap()
    }

    #[test]
    fn classical_symbol_is_homogeneous_beyond_cutoff() {
        let (b, supp) = unit_bump_1d();
        let w = b.eval(&[0.4]);
        let p = make_classical_symbol(1, move |x, _| c(b.eval(x)), 1.0, supp).unwrap();
        assert_relative_eq!(p.eval(&[0.4], &[2.0]).re, w / 2.0, max_relative = 1e-15);
        assert_relative_eq!(p.eval(&[0.4], &[-2.0]).re, w / 2.0, max_relative = 1e-15);
        for t in [1.5, 3.0, 17.0] {
            let a = p.eval(&[0.4], &[1.3]);
            let b = p.eval(&[0.4], &[1.3 * t]);
            assert_relative_eq!(b.re, a.re / t, max_relative = 1e-14);
        }
        assert_eq!(p.eval(&[0.4], &[0.0]), c(0.0));
        assert_eq!(p.eval(&[0.4], &[0.4]), c(0.0));
        assert_eq!(p.eval(&[3.0], &[5.0]), c(0.0));
    }

    #[test]
    fn classical_2d_principal_vanishing_on_axis() {
        let b = Bump::unit_mass(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let (lo, hi) = b.support();
        let p = make_classical_symbol(2, move |x, s| c(b.eval(x) * s[0] * s[0]), 1.0, SupportBox::new(lo, hi).unwrap())
            .unwrap();
        assert_eq!(p.eval(&[0.1, 0.1], &[0.0, 3.0]), c(0.0));
        let v = p.eval(&[0.1, 0.1], &[3.0, 4.0]);
        assert!(v.re > 0.0);
        // homogeneity in 2-D
        let v2 = p.eval(&[0.1, 0.1], &[6.0, 8.0]);
        assert_relative_eq!(v2.re, v.re / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn constructor_validation() {
        let supp = SupportBox::new(vec![-1.0], vec![1.0]).unwrap();
        assert!(make_classical_symbol(0, |_, _| c(1.0), 1.0, supp.clone()).is_err());
        assert!(make_classical_symbol(1, |_, _| c(1.0), 0.5, supp.clone()).is_err());
        assert!(SupportBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(SupportBox::new(vec![], vec![]).is_err());
        assert!(make_classical_symbol(2, |_, _| c(1.0), 1.0, supp).is_err());
        assert!(make_nonmeasurable_symbol(0, None).is_err());
    }

    #[test]
    fn product_symbol_rejects_support_violation() {
        let supp = SupportBox::new(vec![-1.0], vec![1.0]).unwrap();
        let err = make_product_symbol(|x| c(1.0 + x[0].cos()), FrequencyFactor::Radial(RadialProfile::Bracket), 1, supp.clone());
        assert!(matches!(err, Err(Error::SupportLeak(_))));
        let ok = make_product_symbol(|x| c(crate::bump::standard_bump(x[0])), FrequencyFactor::Radial(RadialProfile::Bracket), 1, supp);
        assert!(ok.is_ok());
    }

    #[test]
    fn wodzicki_residue_examples() {
        let q = QuadSpec::for_dim(1);
        assert_relative_eq!(wodzicki_residue(&classical_1d(), &q).unwrap().re, 2.0, max_relative = 1e-10);
        let (b, supp) = unit_bump_1d();
        let odd = make_classical_symbol(1, move |x, s| c(b.eval(x) * s[0]), 1.0, supp).unwrap();
        assert!(wodzicki_residue(&odd, &q).unwrap().norm() < 1e-14);

        let b2 = Bump::unit_mass(vec![0.0, 0.0], vec![1.0, 1.2]).unwrap();
        let (lo, hi) = b2.support();
        let p2 = make_classical_symbol(2, move |x, _| c(b2.eval(x)), 1.0, SupportBox::new(lo, hi).unwrap()).unwrap();
        assert_relative_eq!(wodzicki_residue(&p2, &QuadSpec::for_dim(2)).unwrap().re, 2.0 * PI, max_relative = 1e-6);

        let nm = make_nonmeasurable_symbol(1, None).unwrap();
        assert!(matches!(wodzicki_residue(&nm, &q), Err(Error::NotClassical)));
    }

    #[test]
    fn nonmeasurable_symbol_pointwise() {
        let q = make_nonmeasurable_symbol(1, None).unwrap();
        assert_eq!(q.eval(&[0.0], &[2.0]), c(0.0));
        assert_eq!(q.eval(&[0.0], &[3.0]), c(0.0));
        let phi_sq = q.eval(&[0.0], &[1.0e6]).re / RadialProfile::LogLogOscillation.value(1, 1.0e6);
        let r = 1f64.exp().exp();
        let expected = phi_sq * (1f64.sin() + 1f64.cos()) / r;
        assert_relative_eq!(q.eval(&[0.0], &[r]).re, expected, max_relative = 1e-12);
        // ∫|φ|² = 1 / Vol S⁰
        let mass = GaussLegendre::new(64).integrate(-1.0, 1.0, |x| q.eval(&[x], &[1.0e6]).re)
            / RadialProfile::LogLogOscillation.value(1, 1.0e6);
        assert_relative_eq!(mass, 0.5, max_relative = 1e-8);
    }

    #[test]
    fn nonmeasurable_ball_integral_follows_antiderivative() {
        // past r = 4 the radial profile is F'(r) with F(r) = log r · sin log log r
        let q = make_nonmeasurable_symbol(1, None).unwrap();
        let quad = QuadSpec::for_dim(1);
        let f = |log_r: f64| log_r * log_r.ln().sin();
        let base = 2.0;
        let v0 = ball_integral_log(&q, base, &quad).unwrap().re;
        for log_r in [5.0, 20.0, 200.0, 5000.0] {
            let v = ball_integral_log(&q, log_r, &quad).unwrap().re;
            assert_relative_eq!(v - v0, f(log_r) - f(base), max_relative = 1e-9, epsilon = 1e-9);
        }
    }

    #[test]
    fn ball_integral_bracket_matches_asinh() {
        let (b, supp) = unit_bump_1d();
        let p = make_product_symbol(move |x| c(b.eval(x)), FrequencyFactor::Radial(RadialProfile::Bracket), 1, supp).unwrap();
        let q = QuadSpec::for_dim(1);
        let v = ball_integral(&p, 1.0e3, &q).unwrap();
        // 64-node Gauss–Legendre resolves the bump mass to ~1e-7
        assert_relative_eq!(v.re, 2.0 * 1.0e3f64.asinh(), max_relative = 1e-7);
        assert_relative_eq!(v.re, 15.201_804_919_084_164, max_relative = 1e-7);
        assert_eq!(ball_integral(&Symbol::zero(1).unwrap(), 50.0, &q).unwrap(), c(0.0));
        assert!(ball_integral(&p, -1.0, &q).is_err());
    }

    #[test]
    fn ball_integral_function_route_matches_radial_route() {
        let (b, supp) = unit_bump_1d();
        let b2 = b.clone();
        let radial =
            make_product_symbol(move |x| c(b.eval(x)), FrequencyFactor::Radial(RadialProfile::Bracket), 1, supp.clone()).unwrap();
        let func = make_product_symbol(
            move |x| c(b2.eval(x)),
            FrequencyFactor::Function(Arc::new(|xi: &[f64]| c((1.0 + xi[0] * xi[0]).powf(-0.5)))),
            1,
            supp,
        )
        .unwrap();
        let q = QuadSpec::for_dim(1);
        for r in [0.5, 10.0, 1.0e5] {
            let a = ball_integral(&radial, r, &q).unwrap();
            let b = ball_integral(&func, r, &q).unwrap();
            assert_relative_eq!(a.re, b.re, max_relative = 1e-12);
        }
    }

    #[test]
    fn classical_ball_integral_grows_like_res_w_log_n() {
        let p = classical_1d();
        let q = QuadSpec::for_dim(1);
        let mut devs = Vec::new();
        let mut n = 1.0e2;
        while n <= 1.0e8 {
            devs.push(ball_integral(&p, n, &q).unwrap().re - 2.0 * n.ln());
            n *= 10.0;
        }
        let spread = devs.iter().cloned().fold(f64::MIN, f64::max) - devs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-9, "ball integral deviation should be constant past the cutoff: {devs:?}");
    }

    #[test]
    fn general_route_agrees_with_separable_route() {
        let p = classical_1d();
        let p2 = p.clone();
        let general = Symbol::general(1, p.support().clone(), move |x, xi| p2.eval(x, xi)).unwrap();
        let q = QuadSpec::for_dim(1);
        // the general route does not know the ramp's breakpoints at 1/2 and 1
        for r in [0.7, 3.0, 1.0e4] {
            let a = ball_integral(&p, r, &q).unwrap();
            let b = ball_integral(&general, r, &q).unwrap();
            assert_relative_eq!(a.re, b.re, max_relative = 1e-5);
        }
        assert!(ball_integral_log(&general, 800.0, &q).is_err());
        assert!(ball_integral_log(&p, 800.0, &q).unwrap().re.is_finite());
    }

    #[test]
    fn residue_series_validation() {
        let p = classical_1d();
        let q = QuadSpec::for_dim(1);
        assert!(residue_series(&p, &[5, 3], &q).is_err());
        assert!(residue_series(&p, &[1, 3], &q).is_err());
        let rs = residue_series(&p, &[2, 10, 100], &q).unwrap();
        for i in 0..rs.len() {
            let expected = rs.ball_integral[i] * (1.0 / (1.0 + rs.n()[i]).ln());
            assert_relative_eq!(rs.res[i].re, expected.re, max_relative = 1e-12);
        }
    }

    #[test]
    fn modulated_norm_examples() {
        let q = QuadSpec::for_dim(1);
        let t_grid: Vec<f64> = (0..12).map(|k| 2f64.powi(k)).collect();
        let z = modulated_norm(&Symbol::zero(1).unwrap(), &t_grid, &q).unwrap();
        assert_eq!(z.value, 0.0);

        // ‖w‖_{L2} = 1
        let mut b = Bump::new(vec![0.0], vec![1.0], 1.0).unwrap();
        b.amplitude = 1.0 / b.square_integral().sqrt();
        let (lo, hi) = b.support();
        let bb = b.clone();
        let p = make_product_symbol(move |x| c(bb.eval(x)), FrequencyFactor::Radial(RadialProfile::Bracket), 1, SupportBox::new(lo.clone(), hi.clone()).unwrap()).unwrap();
        let m = modulated_norm(&p, &t_grid, &q).unwrap();
        for &(t, term) in &m.tail_terms {
            // closed form t^{1/2} (2 (π/2 - arctan t))^{1/2}
            let oracle = (t * 2.0 * (PI / 2.0 - t.atan())).sqrt();
            assert_relative_eq!(term, oracle, max_relative = 1e-7);
            assert!(term <= 2f64.sqrt());
        }
        // ‖p‖² = ‖w‖² · ∫ ⟨ξ⟩^{-2} = π
        assert_relative_eq!(m.l2_norm, PI.sqrt(), max_relative = 1e-7);

        let fat = Symbol::general(1, SupportBox::new(lo, hi).unwrap(), move |x, xi| {
            let r = xi[0].abs();
            if r >= 1.0 { c(b.eval(x) * r.powf(-0.5)) } else { c(0.0) }
        })
        .unwrap();
        assert!(matches!(modulated_norm(&fat, &t_grid, &q), Err(Error::NotModulated(_))));
        assert!(modulated_norm(&p, &[0.5], &q).is_err());
    }

    #[test]
    fn scaled_and_added_symbols() {
        let p = classical_1d();
        let q = QuadSpec::for_dim(1);
        let p5 = p.scaled(c(5.0));
        assert!(p5.is_classical());
        assert_relative_eq!(wodzicki_residue(&p5, &q).unwrap().re, 10.0, max_relative = 1e-10);
        let sum = p.add(&p5).unwrap();
        assert!(sum.is_classical());
        assert_relative_eq!(wodzicki_residue(&sum, &q).unwrap().re, 12.0, max_relative = 1e-10);
        let nm = make_nonmeasurable_symbol(1, None).unwrap();
        let mixed = p.add(&nm).unwrap();
        assert!(matches!(mixed.kind(), SymbolKind::General { .. }));
        assert!(p.add(&Symbol::zero(2).unwrap()).is_err());
    }
}
