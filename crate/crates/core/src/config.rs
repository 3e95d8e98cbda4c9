//! Experiment configuration: a strict TOML schema with a version key.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bump::Bump;
use crate::error::{Error, Result};
use crate::spectral::TrendThresholds;
use crate::symbol::{
    FrequencyFactor, RadialProfile, Symbol, SupportBox, make_classical_symbol, make_nonmeasurable_symbol,
    make_product_symbol,
};
use crate::traces::double_exp_log_n;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Residue,
    Connes,
    Nonmeasurable,
    Integrate,
    SpectralFormula,
    Modulation,
    Sweep,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Residue => "residue",
            Pipeline::Connes => "connes",
            Pipeline::Nonmeasurable => "nonmeasurable",
            Pipeline::Integrate => "integrate",
            Pipeline::SpectralFormula => "spectral-formula",
            Pipeline::Modulation => "modulation",
            Pipeline::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let all = [
            Pipeline::Residue,
            Pipeline::Connes,
            Pipeline::Nonmeasurable,
            Pipeline::Integrate,
            Pipeline::SpectralFormula,
            Pipeline::Modulation,
            Pipeline::Sweep,
        ];
        all.into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pipeline `{s}`")))
    }

    /// Pipelines that realize a matrix at a single truncation `K`.
    pub fn uses_matrix(self) -> bool {
        matches!(self, Pipeline::Connes | Pipeline::SpectralFormula | Pipeline::Modulation)
    }
}

/// Bump with an optional amplitude; a missing amplitude means unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
}

impl BumpConfig {
    pub fn build(&self) -> Result<Bump> {
        match self.amplitude {
            Some(a) => Bump::new(self.center.clone(), self.width.clone(), a),
            None => Bump::unit_mass(self.center.clone(), self.width.clone()),
        }
    }

    fn benchmark(d: usize) -> Self {
        Self { center: vec![0.0; d], width: vec![2.5; d], amplitude: None }
    }
}

/// Angular factor `a(s)` of a classical principal symbol `w(x) a(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Angular {
    #[default]
    Constant,
    /// `a(s) = s_1`, odd on the sphere.
    FirstComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    Bracket,
    Homogeneous { cutoff: f64 },
    LoglogOscillation,
}

impl ProfileConfig {
    fn build(self) -> RadialProfile {
        match self {
            ProfileConfig::Bracket => RadialProfile::Bracket,
            ProfileConfig::Homogeneous { cutoff } => RadialProfile::Homogeneous { cutoff },
            ProfileConfig::LoglogOscillation => RadialProfile::LogLogOscillation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolConfig {
    /// Principal part `Σ bumps(x) · a(s)`, homogeneous beyond `cutoff_radius`.
    Classical {
        #[serde(default)]
        bumps: Vec<BumpConfig>,
        #[serde(default)]
        angular: Angular,
        #[serde(default = "one")]
        cutoff_radius: f64,
    },
    Nonmeasurable {
        #[serde(default)]
        phi_norm: Option<f64>,
    },
    /// `Σ bumps(x) · ρ(|ξ|)`.
    Product { bumps: Vec<BumpConfig>, profile: ProfileConfig },
    Zero,
}

fn one() -> f64 {
    1.0
}

impl Default for SymbolConfig {
    fn default() -> Self {
        SymbolConfig::Classical { bumps: Vec::new(), angular: Angular::Constant, cutoff_radius: 1.0 }
    }
}

fn bumps_and_box(d: usize, bumps: &[BumpConfig]) -> Result<(Vec<Bump>, SupportBox)> {
    let bumps: Vec<Bump> = if bumps.is_empty() {
        vec![BumpConfig::benchmark(d).build()?]
    } else {
        bumps.iter().map(BumpConfig::build).collect::<Result<_>>()?
    };
    if let Some(b) = bumps.iter().find(|b| b.dim() != d) {
        return Err(Error::Config(format!("bump at {:?} has dimension {}, expected {d}", b.center, b.dim())));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for b in &bumps {
        let (l, h) = b.support();
        for i in 0..d {
            lo[i] = lo[i].min(l[i]);
            hi[i] = hi[i].max(h[i]);
        }
    }
    Ok((bumps, SupportBox::new(lo, hi)?))
}

impl SymbolConfig {
    pub fn build(&self, d: usize) -> Result<Symbol> {
        match self {
            SymbolConfig::Classical { bumps, angular, cutoff_radius } => {
                let (bumps, support) = bumps_and_box(d, bumps)?;
                let angular = *angular;
                make_classical_symbol(
                    d,
                    move |x, s| {
                        let w: f64 = bumps.iter().map(|b| b.eval(x)).sum();
                        let a = match angular {
                            Angular::Constant => 1.0,
                            Angular::FirstComponent => s[0],
                        };
                        Complex64::new(w * a, 0.0)
                    },
                    *cutoff_radius,
                    support,
                )
            }
            SymbolConfig::Nonmeasurable { phi_norm } => make_nonmeasurable_symbol(d, *phi_norm),
            SymbolConfig::Product { bumps, profile } => {
                let (bumps, support) = bumps_and_box(d, bumps)?;
                make_product_symbol(
                    move |x| Complex64::new(bumps.iter().map(|b| b.eval(x)).sum(), 0.0),
                    FrequencyFactor::Radial(profile.build()),
                    d,
                    support,
                )
            }
            SymbolConfig::Zero => Symbol::zero(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub freq: Vec<i64>,
    pub coeff: f64,
}

/// `f(x) = constant + Σ coeff cos(freq · x) + Σ bumps(x)` on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionConfig {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cosine: Vec<CosineTerm>,
    #[serde(default)]
    pub bumps: Vec<BumpConfig>,
}

impl Default for FunctionConfig {
    fn default() -> Self {
        Self { constant: 1.0, cosine: vec![CosineTerm { freq: vec![1], coeff: 1.0 }], bumps: Vec::new() }
    }
}

pub type TorusFn = Box<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

impl FunctionConfig {
    /// The function and its exact integral over `[-π, π]^d`.
    pub fn build(&self, d: usize) -> Result<(TorusFn, f64)> {
        if let Some(t) = self.cosine.iter().find(|t| t.freq.len() != d) {
            return Err(Error::Config(format!("cosine frequency {:?} must have {d} components", t.freq)));
        }
        let bumps: Vec<Bump> = self.bumps.iter().map(BumpConfig::build).collect::<Result<_>>()?;
        if let Some(b) = bumps.iter().find(|b| b.dim() != d) {
            return Err(Error::Config(format!("bump at {:?} must have dimension {d}", b.center)));
        }
        let vol = (2.0 * PI).powi(d as i32);
        let integral = self.constant * vol
            + self.cosine.iter().filter(|t| t.freq.iter().all(|&k| k == 0)).map(|t| t.coeff * vol).sum::<f64>()
            + bumps.iter().map(Bump::integral).sum::<f64>();
        let (c, cos) = (self.constant, self.cosine.clone());
        let f = move |x: &[f64]| {
            let mut v = c;
            for t in &cos {
                v += t.coeff * t.freq.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>().cos();
            }
            v += bumps.iter().map(|b| b.eval(x)).sum::<f64>();
            Complex64::new(v, 0.0)
        };
        Ok((Box::new(f), integral))
    }
}

/// Grid of `n` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NGrid {
    /// Every integer in `[min, max]` with the given step.
    Range {
        min: u64,
        max: u64,
        #[serde(default = "one_u64")]
        step: u64,
    },
    List { values: Vec<u64> },
    /// `count` points evenly spaced in `log n`; bounds may exceed integer
    /// range.
    Log { min: f64, max: f64, count: usize },
    /// `n = ⌈exp(exp t)⌉` for `t = t_min, t_min + t_step, …, ≤ t_max`.
    DoubleExp { t_min: f64, t_max: f64, t_step: f64 },
}

fn one_u64() -> u64 {
    1
}

impl NGrid {
    /// `log n` values.
    pub fn log_values(&self) -> Result<Vec<f64>> {
        Ok(match self {
            NGrid::DoubleExp { .. } => self.t_values()?.iter().map(|&t| double_exp_log_n(t)).collect(),
            NGrid::Log { min, max, count } => {
                if !(*min >= 1.0 && max > min && *count >= 2) {
                    return Err(Error::Config("log grid needs 1 <= min < max and count >= 2".into()));
                }
                let (a, b) = (min.ln(), max.ln());
                (0..*count).map(|k| a + (b - a) * k as f64 / (*count - 1) as f64).collect()
            }
            _ => self.integers()?.iter().map(|&n| (n as f64).ln()).collect(),
        })
    }

    pub fn integers(&self) -> Result<Vec<u64>> {
        match self {
            NGrid::Range { min, max, step } => {
                if *min == 0 || max < min || *step == 0 {
                    return Err(Error::Config("range grid needs 1 <= min <= max and step >= 1".into()));
                }
                Ok((*min..=*max).step_by(*step as usize).collect())
            }
            NGrid::List { values } => {
                if values.is_empty() || values[0] == 0 || values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("list grid must be non-empty, positive and strictly increasing".into()));
                }
                Ok(values.clone())
            }
            NGrid::Log { .. } | NGrid::DoubleExp { .. } => {
                let mut out: Vec<u64> = Vec::new();
                for l in self.log_values()? {
                    let n = l.exp();
                    if !(n < 9.0e15) {
                        return Err(Error::Config("grid exceeds integer range".into()));
                    }
                    let n = n.round() as u64;
                    if out.last() != Some(&n) {
                        out.push(n);
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn t_values(&self) -> Result<Vec<f64>> {
        let NGrid::DoubleExp { t_min, t_max, t_step } = *self else {
            return Err(Error::Config("grid is not a double-exponential grid".into()));
        };
        if !(t_step > 0.0 && t_max >= t_min && t_min.is_finite() && t_max.is_finite()) {
            return Err(Error::Config("double-exp grid needs t_step > 0 and t_min <= t_max".into()));
        }
        let steps = ((t_max - t_min) / t_step + 1e-9).floor() as usize;
        Ok((0..=steps).map(|k| t_min + t_step * k as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Band width below which a residue counts as measurable.
    pub measurability: f64,
    /// Relative gap for matrix-level comparisons.
    pub relative_gap: f64,
    pub absolute_gap: f64,
    pub min_band_width: f64,
    /// Allowed distance from the closed-form oscillation.
    pub oracle: f64,
    pub integration: f64,
    pub trend: TrendThresholds,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            measurability: 0.05,
            relative_gap: 0.10,
            absolute_gap: 0.05,
            min_band_width: 1.5,
            oracle: 0.05,
            integration: 0.02,
            trend: TrendThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File names inside `dir`; default `<pipeline>.csv` and `<pipeline>.json`.
    pub csv: Option<String>,
    pub report: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("."), csv: None, report: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrateConfig {
    pub function: FunctionConfig,
    /// `n` at which the diagonal residue is read off.
    pub diagonal_n: usize,
    /// Also realize `M_f (1 − Δ)^{-d/2}` at this `K` and check eigenvalue sums.
    pub eigen_k: Option<usize>,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        Self { function: FunctionConfig::default(), diagonal_n: 100_000, eigen_k: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub pipeline: Pipeline,
    pub k_list: Vec<usize>,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { pipeline: Pipeline::Connes, k_list: Vec::new(), workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub pipeline: Pipeline,
    #[serde(default = "one_usize")]
    pub d: usize,
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n_grid: Option<NGrid>,
    #[serde(default)]
    pub symbol: Option<SymbolConfig>,
    #[serde(default)]
    pub integrate: IntegrateConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Matrix-size budget; falls back to the environment, then the default.
    #[serde(default)]
    pub max_n: Option<usize>,
}

fn one_usize() -> usize {
    1
}

fn default_k() -> usize {
    64
}

impl ExperimentConfig {
    pub fn new(pipeline: Pipeline) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            pipeline,
            d: 1,
            k: default_k(),
            seed: 0,
            n_grid: None,
            symbol: None,
            integrate: IntegrateConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
            sweep: SweepConfig::default(),
            max_n: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(1..=3).contains(&self.d) {
            return Err(Error::Config(format!("d = {} outside 1..=3", self.d)));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        let t = &self.tolerances;
        let all = [t.measurability, t.relative_gap, t.absolute_gap, t.min_band_width, t.oracle, t.integration];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("tolerances must be finite and non-negative".into()));
        }
        if self.pipeline == Pipeline::Sweep {
            if self.sweep.k_list.is_empty() {
                return Err(Error::Config("sweep needs a non-empty K list".into()));
            }
            if self.sweep.k_list.windows(2).any(|w| w[0] >= w[1]) || self.sweep.k_list[0] == 0 {
                return Err(Error::Config("sweep K list must be positive and strictly increasing".into()));
            }
            if !self.sweep.pipeline.uses_matrix() && self.sweep.pipeline != Pipeline::Integrate {
                return Err(Error::Config(format!(
                    "sweep runs matrix pipelines only, not `{}`",
                    self.sweep.pipeline.name()
                )));
            }
        }
        if self.integrate.diagonal_n < 2 {
            return Err(Error::Config("integrate.diagonal_n must be at least 2".into()));
        }
        Ok(())
    }

    /// The configured symbol, or the pipeline's default one.
    pub fn symbol_config(&self) -> SymbolConfig {
        match (&self.symbol, self.pipeline) {
            (Some(s), _) => s.clone(),
            (None, Pipeline::Nonmeasurable) => SymbolConfig::Nonmeasurable { phi_norm: None },
            (None, _) => SymbolConfig::default(),
        }
    }

    /// The configured grid, or the pipeline's default at truncation `k`.
    pub fn n_grid_for(&self, pipeline: Pipeline, k: usize) -> NGrid {
        if let Some(g) = &self.n_grid {
            return g.clone();
        }
        match pipeline {
            Pipeline::Residue => NGrid::Log { min: 10.0, max: 1e100, count: 100 },
            Pipeline::Nonmeasurable => NGrid::DoubleExp { t_min: 0.6, t_max: 5.4, t_step: 0.4 },
            _ => {
                let size = (2 * k + 1).pow(self.d as u32) as u64;
                let max = ((size - 1) / 4).max(2);
                NGrid::Range { min: 20.min(max / 2).max(1), max, step: 1 }
            }
        }
    }
}
