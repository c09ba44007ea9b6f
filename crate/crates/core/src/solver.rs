//! Point-to-point design: MMSE decoder, distortion, power and the encoder gradient.

use crate::density::SampledDensity;
use crate::descent::{self, Design, Init, SolveReport, SolverConfig, Tabulated};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::interp;
use crate::mapping::SampledMapping;
use crate::par;

/// Denominator floor of the decoder; below it the prior mean is returned.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;
/// Largest source or channel dimension handled by the grid integrals.
pub const MAX_DIM: usize = 2;

/// Grid nodes with positive probability, flattened for the integration kernels.
#[derive(Debug, Clone)]
pub(crate) struct Support {
    pub index: Vec<usize>,
    pub coords: Vec<f64>,
    pub weight: Vec<f64>,
    pub density: Vec<f64>,
}

impl Support {
    pub fn of(d: &SampledDensity) -> Support {
        let dim = d.dim();
        let vol = d.grid().cell_volume();
        let mut s = Support { index: vec![], coords: vec![], weight: vec![], density: vec![] };
        let mut p = [0.0; interp::MAX_DIM];
        for (i, &f) in d.values().iter().enumerate() {
            if f > 0.0 {
                d.grid().point(i, &mut p[..dim]);
                s.index.push(i);
                s.coords.extend_from_slice(&p[..dim]);
                s.weight.push(f * vol);
                s.density.push(f);
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }
}

/// Source, additive noise and Lagrange multiplier of a point-to-point problem.
///
/// The source dimension is `m = source.dim()`, the channel dimension `k = noise.dim()`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    source: SampledDensity,
    noise: SampledDensity,
    lambda: f64,
    src: Support,
    nz: Support,
    zline: NoiseLine,
    prior_mean: Vec<f64>,
}

/// Scalar noise table with Riemann weights on every node, zeros included.
#[derive(Debug, Clone)]
pub(crate) struct NoiseLine {
    pub lower: f64,
    pub step: f64,
    pub weight: Vec<f64>,
}

impl NoiseLine {
    pub fn of(noise: &SampledDensity) -> NoiseLine {
        let g = noise.grid();
        NoiseLine { lower: g.lower()[0], step: g.step(), weight: noise.weights() }
    }
}

pub(crate) fn check_normalized(d: &SampledDensity) -> Result<()> {
    if (d.mass() - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { mass: d.mass() });
    }
    Ok(())
}

pub(crate) fn check_zero_mean(noise: &SampledDensity) -> Result<()> {
    if let Some(&mean) = noise.mean().iter().find(|m| m.abs() > 1e-6) {
        return Err(Error::NoiseNotZeroMean { mean });
    }
    Ok(())
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::param("lambda", format!("must be finite and >= 0, got {lambda}")))
    }
}

impl ProblemInstance {
    pub fn new(source: SampledDensity, noise: SampledDensity, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        check_normalized(&source)?;
        check_normalized(&noise)?;
        check_zero_mean(&noise)?;
        for (name, d) in [("m", source.dim()), ("k", noise.dim())] {
            if d > MAX_DIM {
                return Err(Error::param(name, format!("dimension {d} exceeds the cap of {MAX_DIM}")));
            }
        }
        let src = Support::of(&source);
        let nz = Support::of(&noise);
        let prior_mean = source.mean();
        let zline = NoiseLine::of(&noise);
        Ok(ProblemInstance { source, noise, lambda, src, nz, zline, prior_mean })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let mut p = self.clone();
        p.lambda = lambda;
        Ok(p)
    }

    pub fn source(&self) -> &SampledDensity {
        &self.source
    }

    pub fn noise(&self) -> &SampledDensity {
        &self.noise
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn m(&self) -> usize {
        self.source.dim()
    }

    pub fn k(&self) -> usize {
        self.noise.dim()
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    fn check_encoder(&self, g: &SampledMapping) -> Result<()> {
        if g.domain() != self.source.grid() {
            return Err(Error::param("encoder", "encoder must be tabulated on the source grid"));
        }
        if g.dim_out() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), got: g.dim_out() });
        }
        Ok(())
    }

    fn check_decoder(&self, h: &SampledMapping) -> Result<()> {
        if h.dim_in() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), got: h.dim_in() });
        }
        if h.dim_out() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), got: h.dim_out() });
        }
        Ok(())
    }

    /// Channel-output grid covering every `g(x) + z` with positive probability.
    ///
    /// It shares the noise step and is aligned with the noise lattice.
    pub fn decoder_grid(&self, g: &SampledMapping) -> Result<GridSpec> {
        self.check_encoder(g)?;
        output_grid(g, &self.src, &self.noise)
    }

    /// `E‖g(X)‖²`.
    pub fn power(&self, g: &SampledMapping) -> Result<f64> {
        self.check_encoder(g)?;
        let k = self.k();
        let vals = g.values();
        Ok(par::sum_range(self.src.len(), |s| {
            let i = self.src.index[s];
            vals[i * k..(i + 1) * k].iter().map(|v| v * v).sum::<f64>() * self.src.weight[s]
        }))
    }

    /// `E‖X - h(g(X) + Z)‖²` as a double Riemann sum over source and noise nodes.
    pub fn distortion(&self, g: &SampledMapping, h: &SampledMapping) -> Result<f64> {
        self.check_encoder(g)?;
        self.check_decoder(h)?;
        let (m, k) = (self.m(), self.k());
        let terms = par::map_range(self.src.len(), |s| {
            let i = self.src.index[s];
            let x = &self.src.coords[s * m..(s + 1) * m];
            let gx = g.node(i);
            let mut acc = 0.0;
            if k == 1 {
                let line = interp::Line::of(h.domain(), h.values(), m);
                line.sweep(gx[0] + self.zline.lower, self.zline.step, self.zline.weight.len(), |j, hv, _| {
                    let mut e = 0.0;
                    for c in 0..m {
                        e += (x[c] - hv[c]).powi(2);
                    }
                    acc += e * self.zline.weight[j];
                });
            } else {
                let mut y = [0.0; MAX_DIM];
                let mut hv = [0.0; MAX_DIM];
                for (j, &v) in self.nz.weight.iter().enumerate() {
                    for c in 0..k {
                        y[c] = gx[c] + self.nz.coords[j * k + c];
                    }
                    let loc = interp::locate_clamped(h.domain(), &y[..k]);
                    interp::interpolate(h.domain(), h.values(), m, &loc, &mut hv);
                    let mut e = 0.0;
                    for c in 0..m {
                        e += (x[c] - hv[c]).powi(2);
                    }
                    acc += e * v;
                }
            }
            acc * self.src.weight[s]
        });
        Ok(par::pairwise_sum(&terms))
    }

    /// `D + λ P`.
    pub fn lagrangian(&self, g: &SampledMapping, h: &SampledMapping) -> Result<f64> {
        Ok(self.distortion(g, h)? + self.lambda * self.power(g)?)
    }

    /// Conditional-mean decoder tabulated on `out_grid`.
    pub fn optimal_decoder(&self, g: &SampledMapping, out_grid: &GridSpec) -> Result<SampledMapping> {
        Ok(self.decoder_tables(g, out_grid)?.0)
    }

    /// Conditional-mean decoder on [`decoder_grid`](Self::decoder_grid).
    pub fn decoder_for(&self, g: &SampledMapping) -> Result<SampledMapping> {
        let grid = self.decoder_grid(g)?;
        self.optimal_decoder(g, &grid)
    }

    /// Density of the channel output `g(X) + Z` on `out_grid` (the decoder's denominator).
    pub fn output_density(&self, g: &SampledMapping, out_grid: &GridSpec) -> Result<SampledDensity> {
        let (_, den) = self.decoder_tables(g, out_grid)?;
        SampledDensity::from_values(out_grid.clone(), den)
    }

    fn decoder_tables(&self, g: &SampledMapping, out_grid: &GridSpec) -> Result<(SampledMapping, Vec<f64>)> {
        self.check_encoder(g)?;
        if out_grid.dim() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), got: out_grid.dim() });
        }
        let m = self.m();
        let rows: Vec<(Vec<f64>, f64)> = if self.k() == 1 {
            let sorted = SortedChannel::new(g, &self.src);
            let nz = self.noise.grid();
            let (zlo, zhi) = (nz.lower()[0], nz.upper(0));
            let inv = 1.0 / nz.step();
            let fz = self.noise.values();
            let nmax = fz.len() - 1;
            let w: Vec<f64> = sorted.order.iter().map(|&s| self.src.weight[s]).collect();
            let xs: Vec<f64> = sorted.order.iter().flat_map(|&s| self.src.coords[s * m..(s + 1) * m].iter().copied()).collect();
            let kinv: Vec<f64> = sorted.keys.iter().map(|v| v * inv).collect();
            par::map_range(out_grid.len(), |l| {
                let y = out_grid.lower()[0] + l as f64 * out_grid.step();
                let cl = (y - zlo) * inv;
                let mut num = [0.0; MAX_DIM];
                let mut den = 0.0;
                for p in sorted.range(y - zhi, y - zlo) {
                    // position of y - g on the noise lattice
                    let u = (cl - kinv[p]).clamp(0.0, nmax as f64);
                    let a = (u as usize).min(nmax.saturating_sub(1));
                    let f = u - a as f64;
                    let wz = w[p] * (fz[a] + f * (fz[(a + 1).min(nmax)] - fz[a]));
                    for c in 0..m {
                        num[c] += wz * xs[p * m + c];
                    }
                    den += wz;
                }
                (num[..m].to_vec(), den)
            })
        } else {
            let k = self.k();
            par::map_range(out_grid.len(), |l| {
                let y = out_grid.point_vec(l);
                let mut num = [0.0; MAX_DIM];
                let mut den = 0.0;
                let mut z = [0.0; MAX_DIM];
                for s in 0..self.src.len() {
                    let gx = g.node(self.src.index[s]);
                    for c in 0..k {
                        z[c] = y[c] - gx[c];
                    }
                    let fz = self.noise.eval(&z[..k]);
                    if fz == 0.0 {
                        continue;
                    }
                    let w = self.src.weight[s] * fz;
                    for c in 0..m {
                        num[c] += w * self.src.coords[s * m + c];
                    }
                    den += w;
                }
                (num[..m].to_vec(), den)
            })
        };
        if rows.iter().all(|(_, d)| *d < DENOMINATOR_FLOOR) {
            return Err(Error::EmptyPosterior);
        }
        let mut values = Vec::with_capacity(out_grid.len() * m);
        let mut den = Vec::with_capacity(out_grid.len());
        for (num, d) in rows {
            if d < DENOMINATOR_FLOOR {
                values.extend_from_slice(&self.prior_mean);
            } else {
                values.extend(num.iter().map(|v| v / d));
            }
            den.push(d);
        }
        Ok((SampledMapping::new(out_grid.clone(), m, values)?, den))
    }

    /// Functional derivative of the Lagrangian with respect to the encoder, per source node:
    /// `λ f_X(x) g(x) - f_X(x) Σ_z h'(g(x)+z)ᵀ [x - h(g(x)+z)] f_Z(z) Δ^k`.
    ///
    /// `h'` is the Jacobian of the interpolated decoder, so the result is exactly half
    /// the derivative of the discretized Lagrangian divided by `Δ^m`.
    pub fn encoder_gradient(&self, g: &SampledMapping, h: &SampledMapping) -> Result<SampledMapping> {
        self.check_encoder(g)?;
        self.check_decoder(h)?;
        let (m, k) = (self.m(), self.k());
        let lambda = self.lambda;
        let rows = par::map_range(self.src.len(), |s| {
            let i = self.src.index[s];
            let x = &self.src.coords[s * m..(s + 1) * m];
            let gx = g.node(i);
            let mut acc = [0.0; MAX_DIM];
            if k == 1 {
                let line = interp::Line::of(h.domain(), h.values(), m);
                line.sweep(gx[0] + self.zline.lower, self.zline.step, self.zline.weight.len(), |j, hv, dh| {
                    let mut t = 0.0;
                    for c in 0..m {
                        t += dh[c] * (x[c] - hv[c]);
                    }
                    acc[0] += t * self.zline.weight[j];
                });
            } else {
                let mut y = [0.0; MAX_DIM];
                let mut hv = [0.0; MAX_DIM];
                let mut jac = [0.0; MAX_DIM * MAX_DIM];
                for (j, &v) in self.nz.weight.iter().enumerate() {
                    for c in 0..k {
                        y[c] = gx[c] + self.nz.coords[j * k + c];
                    }
                    let loc = interp::locate_clamped(h.domain(), &y[..k]);
                    interp::interpolate_with_jacobian(h.domain(), h.values(), m, &loc, &mut hv, &mut jac);
                    for a in 0..k {
                        let mut t = 0.0;
                        for c in 0..m {
                            t += jac[c * k + a] * (x[c] - hv[c]);
                        }
                        acc[a] += t * v;
                    }
                }
            }
            let f = self.src.density[s];
            (0..k).map(|a| f * (lambda * gx[a] - acc[a])).collect::<Vec<f64>>()
        });
        let mut out = SampledMapping::zeros(g.domain().clone(), k);
        let vals = out.values_mut();
        for (s, row) in rows.into_iter().enumerate() {
            let i = self.src.index[s];
            vals[i * k..(i + 1) * k].copy_from_slice(&row);
        }
        Ok(out)
    }
}

impl Design for ProblemInstance {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn with_lambda(&self, lambda: f64) -> Result<Self> {
        ProblemInstance::with_lambda(self, lambda)
    }

    fn encoder_grid(&self) -> &GridSpec {
        self.source.grid()
    }

    fn channel_dim(&self) -> usize {
        self.k()
    }

    fn decode(&self, g: &SampledMapping) -> Result<SampledMapping> {
        self.decoder_for(g)
    }

    fn distortion(&self, g: &SampledMapping, h: &SampledMapping) -> Result<f64> {
        ProblemInstance::distortion(self, g, h)
    }

    fn power(&self, g: &SampledMapping) -> Result<f64> {
        ProblemInstance::power(self, g)
    }

    fn gradient(&self, g: &SampledMapping, h: &SampledMapping) -> Result<SampledMapping> {
        self.encoder_gradient(g, h)
    }

    fn encoder_density(&self) -> Vec<f64> {
        self.source.values().to_vec()
    }
}

/// Alternating decoder/encoder descent over the configured λ schedule.
pub fn solve(prob: &ProblemInstance, cfg: &SolverConfig, init: &Init) -> Result<SolveReport> {
    descent::run(prob, cfg, init)
}

/// Like [`solve`], with λ calibrated so the final encoder power is `target` within 1%.
/// `prob.lambda()` is the starting guess.
pub fn solve_for_power(prob: &ProblemInstance, cfg: &SolverConfig, init: &Init, target: f64) -> Result<SolveReport> {
    let grid = prob.source().grid().clone();
    let g0 = init.build(&grid, prob.k(), cfg.seed)?;
    let param = Tabulated::new(grid, prob.k());
    descent::descend_for_power(prob, &param, g0.into_values(), cfg, target, descent::POWER_TOLERANCE)
}

/// λ at which the OPTA curve has slope `-λ` at power `target`; a starting guess for calibration.
pub fn opta_slope_lambda(var_x: f64, var_z: f64, m: usize, k: usize, target: f64) -> f64 {
    let r = k as f64 / m as f64;
    let q = 1.0 + target / var_z;
    // per-component distortion D = σx² q^{-r}; -dD/dP
    var_x * r * q.powf(-r - 1.0) / var_z
}

/// Source nodes sorted by their (scalar) channel input, for windowed decoder sums.
pub(crate) struct SortedChannel {
    /// Support positions in increasing order of channel input.
    pub order: Vec<usize>,
    pub keys: Vec<f64>,
}

impl SortedChannel {
    pub fn new(g: &SampledMapping, src: &Support) -> Self {
        let k = g.dim_out();
        let mut order: Vec<usize> = (0..src.len()).collect();
        order.sort_by(|&a, &b| {
            let ga = g.values()[src.index[a] * k];
            let gb = g.values()[src.index[b] * k];
            ga.total_cmp(&gb).then(a.cmp(&b))
        });
        let keys = order.iter().map(|&s| g.values()[src.index[s] * k]).collect();
        SortedChannel { order, keys }
    }

    /// Sorted positions whose channel input lies in `[lo, hi]` (slightly widened).
    pub fn range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let pad = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        let a = self.keys.partition_point(|&v| v < lo - pad);
        let b = self.keys.partition_point(|&v| v <= hi + pad);
        a..b.max(a)
    }
}

/// Aligned output grid covering `g(x) + z` for every supported `x` and every noise node.
pub(crate) fn output_grid(g: &SampledMapping, src: &Support, noise: &SampledDensity) -> Result<GridSpec> {
    let k = g.dim_out();
    let ng = noise.grid();
    let step = ng.step();
    let mut lower = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for c in 0..k {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &src.index {
            let v = g.values()[i * k + c];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Err(Error::param("source", "source has no mass"));
        }
        let start = ng.lower()[c] + step * (lo / step).floor();
        let end = ng.upper(c) + step * (hi / step).ceil();
        lower.push(start);
        counts.push(((end - start) / step).round() as usize + 1);
    }
    GridSpec::new(lower, step, counts)
}
