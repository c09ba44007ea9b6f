//! Probability densities tabulated on uniform grids.
//!
//! All integrals are midpoint Riemann sums over the grid nodes, and every
//! constructor renormalizes its output to unit mass after truncation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::interp;
use crate::par;

/// Default truncation of infinite supports, in standard deviations.
pub const DEFAULT_SUPPORT_SIGMAS: f64 = 5.0;
/// Default grid step for scalar densities.
pub const DEFAULT_STEP: f64 = 0.01;

/// Nonnegative density values on a grid, normalized to unit Riemann mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDensity {
    grid: GridSpec,
    values: Vec<f64>,
    mass: f64,
    raw_mass: f64,
}

impl SampledDensity {
    /// Validates and renormalizes raw samples.
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::param("values", format!("density values must be finite and >= 0, found {v}")));
        }
        let raw_mass = par::pairwise_sum(&values) * grid.cell_volume();
        if !(raw_mass > 0.0) {
            return Err(Error::NotNormalized { mass: raw_mass });
        }
        let scale = 1.0 / raw_mass;
        let values: Vec<f64> = values.into_iter().map(|v| v * scale).collect();
        let mass = par::pairwise_sum(&values) * grid.cell_volume();
        Ok(SampledDensity { grid, values, mass, raw_mass })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Riemann mass after normalization (1 up to round-off).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Riemann mass of the samples before renormalization; `1 - raw_mass` is the truncated tail.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    /// Probability weights `f(x_i) Δ^dim` of the grid nodes.
    pub fn weights(&self) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        self.values.iter().map(|v| v * vol).collect()
    }

    /// Multilinear interpolation of the tabulated density; zero outside the grid.
    pub fn eval(&self, point: &[f64]) -> f64 {
        match interp::locate_inside(&self.grid, point) {
            Some(loc) => {
                let mut out = [0.0];
                interp::interpolate(&self.grid, &self.values, 1, &loc, &mut out);
                out[0]
            }
            None => 0.0,
        }
    }

    /// Riemann expectation of `f` over the grid nodes.
    pub fn expect<F>(&self, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let vol = self.grid.cell_volume();
        let d = self.dim();
        par::sum_range(self.values.len(), |i| {
            let mut p = [0.0; interp::MAX_DIM];
            self.grid.point(i, &mut p[..d]);
            f(&p[..d]) * self.values[i] * vol
        })
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.expect(|p| p[a])).collect()
    }

    /// Covariance matrix, row-major `dim × dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mu = self.mean();
        let mut cov = vec![0.0; d * d];
        for a in 0..d {
            for b in a..d {
                let c = self.expect(|p| (p[a] - mu[a]) * (p[b] - mu[b]));
                cov[a * d + b] = c;
                cov[b * d + a] = c;
            }
        }
        cov
    }

    /// Total variance per component, `tr(Cov) / dim`.
    pub fn variance_per_dim(&self) -> f64 {
        let d = self.dim();
        let cov = self.covariance();
        (0..d).map(|a| cov[a * d + a]).sum::<f64>() / d as f64
    }

    /// Marginal density of one axis, by Riemann summation over the others.
    pub fn marginal(&self, axis: usize) -> Result<SampledDensity> {
        if axis >= self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: axis + 1 });
        }
        let out_grid = self.grid.axis_grid(axis);
        let mut out = vec![0.0; out_grid.len()];
        let other_vol = self.grid.step().powi(self.dim() as i32 - 1);
        let mut idx = [0usize; interp::MAX_DIM];
        for (i, &v) in self.values.iter().enumerate() {
            self.grid.unravel(i, &mut idx[..self.dim()]);
            out[idx[axis]] += v * other_vol;
        }
        SampledDensity::from_values(out_grid, out)
    }
}

/// Default symmetric grid for a scalar density with standard deviation `std`.
pub fn default_grid(std: f64, step: f64, support_sigmas: f64) -> Result<GridSpec> {
    GridSpec::symmetric(support_sigmas * std, step, 1)
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_1d(grid: &GridSpec) -> Result<()> {
    if grid.dim() == 1 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: 1, got: grid.dim() })
    }
}

#[inline]
pub(crate) fn normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-(d * d) / (2.0 * variance)).exp() / (2.0 * PI * variance).sqrt()
}

/// Zero-mean normal density on a one-dimensional grid.
pub fn make_gaussian(variance: f64, grid: &GridSpec) -> Result<SampledDensity> {
    check_positive("variance", variance)?;
    check_1d(grid)?;
    let sigma = variance.sqrt();
    if grid.min_halfwidth() < 2.0 * sigma - 1e-12 {
        return Err(Error::param(
            "grid",
            format!("support ±{} is narrower than 2σ = {}", grid.min_halfwidth(), 2.0 * sigma),
        ));
    }
    let xs = grid.axis_values(0);
    let values = xs.iter().map(|&x| normal_pdf(x, 0.0, variance)).collect();
    SampledDensity::from_values(grid.clone(), values)
}

/// Gaussian mixture on a one-dimensional grid.
pub fn make_gmm(weights: &[f64], means: &[f64], variances: &[f64], grid: &GridSpec) -> Result<SampledDensity> {
    check_1d(grid)?;
    if weights.is_empty() {
        return Err(Error::param("weights", "mixture needs at least one component"));
    }
    if means.len() != weights.len() || variances.len() != weights.len() {
        return Err(Error::param(
            "components",
            format!("{} weights, {} means, {} variances", weights.len(), means.len(), variances.len()),
        ));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::param("weights", format!("must lie on the simplex (sum={total})")));
    }
    for &v in variances {
        check_positive("variance", v)?;
    }
    let xs = grid.axis_values(0);
    let values = xs
        .iter()
        .map(|&x| {
            weights
                .iter()
                .zip(means)
                .zip(variances)
                .map(|((&w, &m), &v)| w * normal_pdf(x, m, v))
                .sum()
        })
        .collect();
    SampledDensity::from_values(grid.clone(), values)
}

/// Uniform density on `[-halfwidth, halfwidth]`.
///
/// Each node carries the cell average of the density over `[x - Δ/2, x + Δ/2]`,
/// so nodes on the edges get half weight and the Riemann mass is exact.
pub fn make_uniform(halfwidth: f64, grid: &GridSpec) -> Result<SampledDensity> {
    check_positive("halfwidth", halfwidth)?;
    check_1d(grid)?;
    if grid.min_halfwidth() < halfwidth - 1e-12 {
        return Err(Error::param(
            "halfwidth",
            format!("{halfwidth} exceeds the grid support ±{}", grid.min_halfwidth()),
        ));
    }
    let h = grid.step();
    let height = 1.0 / (2.0 * halfwidth);
    let values = grid
        .axis_values(0)
        .iter()
        .map(|&x| {
            let lo = (x - h / 2.0).max(-halfwidth);
            let hi = (x + h / 2.0).min(halfwidth);
            height * ((hi - lo).max(0.0) / h)
        })
        .collect();
    SampledDensity::from_values(grid.clone(), values)
}

/// Product density of `dim` independent copies of a scalar marginal.
pub fn make_iid_product(marginal: &SampledDensity, dim: usize) -> Result<SampledDensity> {
    check_1d(marginal.grid())?;
    if dim == 0 {
        return Err(Error::param("dim", "must be positive"));
    }
    if dim == 1 {
        return Ok(marginal.clone());
    }
    let g1 = marginal.grid();
    let grid = GridSpec::new(vec![g1.lower()[0]; dim], g1.step(), vec![g1.counts()[0]; dim])?;
    let n = g1.counts()[0];
    let mut values = Vec::with_capacity(grid.len());
    let mut idx = vec![0usize; dim];
    for i in 0..grid.len() {
        grid.unravel(i, &mut idx);
        values.push(idx.iter().map(|&k| marginal.values()[k.min(n - 1)]).product());
    }
    SampledDensity::from_values(grid, values)
}

/// Zero-mean bivariate normal with covariance `variance * [[1, rho], [rho, 1]]`.
pub fn make_correlated_gaussian_pair(variance: f64, rho: f64, grid: &GridSpec) -> Result<SampledDensity> {
    check_positive("variance", variance)?;
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: grid.dim() });
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::param("rho", format!("|rho| must be < 1, got {rho}")));
    }
    let det = variance * variance * (1.0 - rho * rho);
    let norm = 1.0 / (2.0 * PI * det.sqrt());
    let inv = 1.0 / (variance * (1.0 - rho * rho));
    let values = (0..grid.len())
        .map(|i| {
            let p = grid.point_vec(i);
            let q = (p[0] * p[0] - 2.0 * rho * p[0] * p[1] + p[1] * p[1]) * inv;
            norm * (-0.5 * q).exp()
        })
        .collect();
    SampledDensity::from_values(grid.clone(), values)
}

/// Characteristic function tabulated at a list of frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicTable {
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    /// `F(0)`, which must equal 1 for a normalized density.
    pub origin_value: Complex64,
}

/// `F(ω) = Σ f(x) e^{-iωx} Δ` at each requested frequency.
pub fn characteristic_function(d: &SampledDensity, freqs: &[f64]) -> Result<CharacteristicTable> {
    check_1d(d.grid())?;
    if freqs.is_empty() {
        return Err(Error::param("freqs", "frequency list is empty"));
    }
    let xs = d.grid().axis_values(0);
    let step = d.grid().step();
    let at = |w: f64| -> Complex64 {
        let re: Vec<f64> = xs.iter().zip(d.values()).map(|(&x, &f)| f * (w * x).cos()).collect();
        let im: Vec<f64> = xs.iter().zip(d.values()).map(|(&x, &f)| -f * (w * x).sin()).collect();
        Complex64::new(par::pairwise_sum(&re) * step, par::pairwise_sum(&im) * step)
    };
    let values = par::map_range(freqs.len(), |i| at(freqs[i]));
    Ok(CharacteristicTable { freqs: freqs.to_vec(), values, origin_value: at(0.0) })
}

/// `n` equally spaced frequencies on `[-wmax, wmax]`.
pub fn frequency_window(wmax: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| -wmax + 2.0 * wmax * i as f64 / (n - 1) as f64)
        .collect()
}

/// Parsed form of a density description such as `gmm:w=0.5,0.5;mu=-3,3;var=1,1`.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    Gaussian { var: f64 },
    Gmm { w: Vec<f64>, mu: Vec<f64>, var: Vec<f64> },
    Uniform { a: f64 },
    Gauss2 { var: f64, rho: f64 },
}

impl DensitySpec {
    pub fn dim(&self) -> usize {
        match self {
            DensitySpec::Gauss2 { .. } => 2,
            _ => 1,
        }
    }

    /// Per-component variance of the described distribution.
    pub fn variance(&self) -> f64 {
        match self {
            DensitySpec::Gaussian { var } | DensitySpec::Gauss2 { var, .. } => *var,
            DensitySpec::Uniform { a } => a * a / 3.0,
            DensitySpec::Gmm { w, mu, var } => {
                let m: f64 = w.iter().zip(mu).map(|(w, m)| w * m).sum();
                w.iter()
                    .zip(mu)
                    .zip(var)
                    .map(|((w, m), v)| w * (v + m * m))
                    .sum::<f64>()
                    - m * m
            }
        }
    }

    /// Half-width of the default tabulation window.
    ///
    /// Gaussian families use `support_sigmas` standard deviations (per component for
    /// mixtures); the uniform uses its own support plus two cells.
    pub fn support_halfwidth(&self, step: f64, support_sigmas: f64) -> f64 {
        match self {
            DensitySpec::Gaussian { var } | DensitySpec::Gauss2 { var, .. } => support_sigmas * var.sqrt(),
            DensitySpec::Uniform { a } => a + 2.0 * step,
            DensitySpec::Gmm { mu, var, .. } => mu
                .iter()
                .zip(var)
                .map(|(m, v)| m.abs() + support_sigmas * v.sqrt())
                .fold(0.0, f64::max),
        }
    }

    pub fn default_grid(&self, step: f64, support_sigmas: f64) -> Result<GridSpec> {
        GridSpec::symmetric(self.support_halfwidth(step, support_sigmas), step, self.dim())
    }

    pub fn build_on(&self, grid: &GridSpec) -> Result<SampledDensity> {
        match self {
            DensitySpec::Gaussian { var } => make_gaussian(*var, grid),
            DensitySpec::Gmm { w, mu, var } => make_gmm(w, mu, var, grid),
            DensitySpec::Uniform { a } => make_uniform(*a, grid),
            DensitySpec::Gauss2 { var, rho } => make_correlated_gaussian_pair(*var, *rho, grid),
        }
    }

    pub fn build(&self, step: f64, support_sigmas: f64) -> Result<SampledDensity> {
        self.build_on(&self.default_grid(step, support_sigmas)?)
    }
}

impl FromStr for DensitySpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let bad = |token: &str| Error::MalformedSpec { spec: spec.to_string(), token: token.to_string() };
        let (kind, rest) = spec.split_once(':').ok_or_else(|| bad(spec))?;
        let mut fields: Vec<(&str, Vec<f64>)> = Vec::new();
        for part in rest.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part.split_once('=').ok_or_else(|| bad(part))?;
            let nums = val
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad(t)))
                .collect::<Result<Vec<f64>>>()?;
            if nums.iter().any(|v| !v.is_finite()) {
                return Err(bad(val));
            }
            fields.push((key.trim(), nums));
        }
        let take = |key: &str| -> Result<Vec<f64>> {
            fields
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| bad(key))
        };
        let scalar = |key: &str| -> Result<f64> {
            let v = take(key)?;
            if v.len() == 1 {
                Ok(v[0])
            } else {
                Err(bad(key))
            }
        };
        let allowed: &[&str] = match kind.trim() {
            "gaussian" => &["var"],
            "gmm" => &["w", "mu", "var"],
            "uniform" => &["a"],
            "gauss2" => &["var", "rho"],
            other => return Err(bad(other)),
        };
        if let Some((k, _)) = fields.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(bad(k));
        }
        let positive = |key: &str, v: f64| -> Result<f64> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(bad(&format!("{key}={v}")))
            }
        };
        let out = match kind.trim() {
            "gaussian" => DensitySpec::Gaussian { var: positive("var", scalar("var")?)? },
            "uniform" => DensitySpec::Uniform { a: positive("a", scalar("a")?)? },
            "gauss2" => {
                let rho = scalar("rho")?;
                if rho.abs() >= 1.0 {
                    return Err(bad(&format!("rho={rho}")));
                }
                DensitySpec::Gauss2 { var: positive("var", scalar("var")?)?, rho }
            }
            _ => {
                let (w, mu, var) = (take("w")?, take("mu")?, take("var")?);
                if w.len() != mu.len() || w.len() != var.len() {
                    return Err(bad("components"));
                }
                for &v in &var {
                    positive("var", v)?;
                }
                DensitySpec::Gmm { w, mu, var }
            }
        };
        Ok(out)
    }
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            DensitySpec::Gaussian { var } => write!(f, "gaussian:var={var}"),
            DensitySpec::Uniform { a } => write!(f, "uniform:a={a}"),
            DensitySpec::Gauss2 { var, rho } => write!(f, "gauss2:var={var};rho={rho}"),
            DensitySpec::Gmm { w, mu, var } => write!(f, "gmm:w={};mu={};var={}", list(w), list(mu), list(var)),
        }
    }
}

/// Parses a density spec string and tabulates it on its default grid.
pub fn parse_density_spec(spec: &str, step: f64, support_sigmas: f64) -> Result<SampledDensity> {
    spec.parse::<DensitySpec>()?.build(step, support_sigmas)
}
