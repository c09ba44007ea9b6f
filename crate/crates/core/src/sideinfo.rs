//! Coding with side information at the decoder: `X1` is encoded, the decoder also sees `X2`.
//!
//! Scalar `X1`, `X2` and channel only. The decoder is tabulated on the product grid
//! `(ŷ, x2)`, so the noise must share the joint density's step.

use crate::density::SampledDensity;
use crate::descent::{self, Design, Init, SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{same_step, GridSpec};
use crate::interp;
use crate::mapping::SampledMapping;
use crate::par;
use crate::solver::{
    check_lambda, check_normalized, check_zero_mean, output_grid, NoiseLine, SortedChannel, Support,
    DENOMINATOR_FLOOR,
};

#[derive(Debug, Clone)]
pub struct SideInfoProblem {
    joint: SampledDensity,
    noise: SampledDensity,
    lambda: f64,
    x1_grid: GridSpec,
    x2_grid: GridSpec,
    marginal: SampledDensity,
    src: Support,
    zline: NoiseLine,
    /// `E[X1 | x2]` per side-information node.
    cond_mean: Vec<f64>,
}

impl SideInfoProblem {
    /// `joint` has axes `(x1, x2)`; `noise` is scalar with the same step.
    pub fn new(joint: SampledDensity, noise: SampledDensity, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if joint.dim() != 2 {
            return Err(Error::param("joint", "only scalar source and scalar side information are supported"));
        }
        if noise.dim() != 1 {
            return Err(Error::param("noise", "only a scalar channel is supported with side information"));
        }
        check_normalized(&joint)?;
        check_normalized(&noise)?;
        check_zero_mean(&noise)?;
        if !same_step(joint.grid().step(), noise.grid().step()) {
            return Err(Error::param(
                "noise",
                format!("noise step {} must equal the joint grid step {}", noise.grid().step(), joint.grid().step()),
            ));
        }
        let x1_grid = joint.grid().axis_grid(0);
        let x2_grid = joint.grid().axis_grid(1);
        let marginal = joint.marginal(0)?;
        let src = Support::of(&marginal);
        let zline = NoiseLine::of(&noise);
        let n2 = x2_grid.len();
        let xs = x1_grid.axis_values(0);
        let overall = marginal.mean()[0];
        let cond_mean = (0..n2)
            .map(|b| {
                let (mut num, mut den) = (0.0, 0.0);
                for (i, x) in xs.iter().enumerate() {
                    let f = joint.values()[i * n2 + b];
                    num += x * f;
                    den += f;
                }
                if den > 0.0 {
                    num / den
                } else {
                    overall
                }
            })
            .collect();
        Ok(SideInfoProblem { joint, noise, lambda, x1_grid, x2_grid, marginal, src, zline, cond_mean })
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let mut p = self.clone();
        p.lambda = lambda;
        Ok(p)
    }

    pub fn joint(&self) -> &SampledDensity {
        &self.joint
    }

    pub fn noise(&self) -> &SampledDensity {
        &self.noise
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Marginal density of `X1` on its grid.
    pub fn marginal(&self) -> &SampledDensity {
        &self.marginal
    }

    pub fn x1_grid(&self) -> &GridSpec {
        &self.x1_grid
    }

    pub fn x2_grid(&self) -> &GridSpec {
        &self.x2_grid
    }

    pub fn conditional_mean(&self) -> &[f64] {
        &self.cond_mean
    }

    fn check_encoder(&self, g: &SampledMapping) -> Result<()> {
        if g.domain() != &self.x1_grid {
            return Err(Error::param("encoder", "encoder must be tabulated on the X1 grid"));
        }
        if g.dim_out() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: g.dim_out() });
        }
        Ok(())
    }

    fn check_decoder(&self, h: &SampledMapping) -> Result<()> {
        let d = h.domain();
        if h.dim_out() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: h.dim_out() });
        }
        if d.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: d.dim() });
        }
        if d.axis_grid(1) != self.x2_grid {
            return Err(Error::param("decoder", "second decoder axis must be the X2 grid"));
        }
        Ok(())
    }

    /// Channel-output axis covering every `g(x1) + z`, aligned with the noise lattice.
    pub fn y_grid(&self, g: &SampledMapping) -> Result<GridSpec> {
        self.check_encoder(g)?;
        output_grid(g, &self.src, &self.noise)
    }

    pub fn power(&self, g: &SampledMapping) -> Result<f64> {
        self.check_encoder(g)?;
        Ok(par::sum_range(self.src.len(), |s| {
            let v = g.values()[self.src.index[s]];
            v * v * self.src.weight[s]
        }))
    }

    /// `E[X1 | ŷ, x2]` on `y_grid × X2 grid`; falls back to `E[X1 | x2]` below the floor.
    pub fn optimal_decoder(&self, g: &SampledMapping, y_grid: &GridSpec) -> Result<SampledMapping> {
        self.check_encoder(g)?;
        if y_grid.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: y_grid.dim() });
        }
        let domain = y_grid.product(&self.x2_grid)?;
        let n2 = self.x2_grid.len();
        let step = self.x1_grid.step();
        let sorted = SortedChannel::new(g, &self.src);
        let nz = self.noise.grid();
        let (zlo, zhi) = (nz.lower()[0], nz.upper(0));
        let inv = 1.0 / nz.step();
        let fz = self.noise.values();
        let nmax = fz.len() - 1;
        let f = self.joint.values();
        let rows = par::map_range(y_grid.len(), |l| {
            let y = y_grid.lower()[0] + l as f64 * y_grid.step();
            let cl = (y - zlo) * inv;
            let mut num = vec![0.0; n2];
            let mut den = vec![0.0; n2];
            for p in sorted.range(y - zhi, y - zlo) {
                let s = sorted.order[p];
                let i = self.src.index[s];
                let x1 = self.src.coords[s];
                let u = (cl - sorted.keys[p] * inv).clamp(0.0, nmax as f64);
                let a = (u as usize).min(nmax.saturating_sub(1));
                let fr = u - a as f64;
                let wz = step * (fz[a] + fr * (fz[(a + 1).min(nmax)] - fz[a]));
                if wz == 0.0 {
                    continue;
                }
                let row = &f[i * n2..(i + 1) * n2];
                for b in 0..n2 {
                    let w = row[b] * wz;
                    num[b] += w * x1;
                    den[b] += w;
                }
            }
            (num, den)
        });
        if rows.iter().all(|(_, d)| d.iter().all(|&v| v < DENOMINATOR_FLOOR)) {
            return Err(Error::EmptyPosterior);
        }
        let mut values = Vec::with_capacity(domain.len());
        for (num, den) in rows {
            for b in 0..n2 {
                values.push(if den[b] < DENOMINATOR_FLOOR { self.cond_mean[b] } else { num[b] / den[b] });
            }
        }
        SampledMapping::new(domain, 1, values)
    }

    /// Optimal decoder on [`y_grid`](Self::y_grid).
    pub fn decoder_for(&self, g: &SampledMapping) -> Result<SampledMapping> {
        let y = self.y_grid(g)?;
        self.optimal_decoder(g, &y)
    }

    /// Decoder columns `h(·, x2_b)` stored contiguously, one per side-information node.
    fn columns(h: &SampledMapping) -> Vec<f64> {
        let (ny, n2) = (h.domain().counts()[0], h.domain().counts()[1]);
        let v = h.values();
        let mut t = vec![0.0; ny * n2];
        for l in 0..ny {
            for b in 0..n2 {
                t[b * ny + l] = v[l * n2 + b];
            }
        }
        t
    }

    /// Runs `f(s, b, line)` accumulation per supported `x1` and returns per-`x1` results.
    fn per_source<F>(&self, g: &SampledMapping, h: &SampledMapping, f: F) -> Vec<f64>
    where
        F: Fn(f64, f64, f64, &interp::Line) -> f64 + Sync,
    {
        let cols = Self::columns(h);
        let ygrid = h.domain().axis_grid(0);
        let ny = ygrid.len();
        let n2 = self.x2_grid.len();
        let fj = self.joint.values();
        par::map_range(self.src.len(), |s| {
            let i = self.src.index[s];
            let x1 = self.src.coords[s];
            let start = g.values()[i] + self.zline.lower;
            let mut acc = 0.0;
            for b in 0..n2 {
                let w = fj[i * n2 + b];
                if w == 0.0 {
                    continue;
                }
                let line = interp::Line::of(&ygrid, &cols[b * ny..(b + 1) * ny], 1);
                acc += w * f(x1, start, w, &line);
            }
            acc
        })
    }

    /// `Σ_{x1,x2,z} (x1 - h(g(x1)+z, x2))² f(x1,x2) f_Z(z) Δ³`.
    pub fn distortion(&self, g: &SampledMapping, h: &SampledMapping) -> Result<f64> {
        self.check_encoder(g)?;
        self.check_decoder(h)?;
        let zl = &self.zline;
        let area = self.joint.grid().cell_volume();
        let terms = self.per_source(g, h, |x1, start, _, line| {
            let mut e = 0.0;
            line.sweep(start, zl.step, zl.weight.len(), |j, hv, _| {
                e += (x1 - hv[0]).powi(2) * zl.weight[j];
            });
            e
        });
        Ok(par::pairwise_sum(&terms) * area)
    }

    pub fn lagrangian(&self, g: &SampledMapping, h: &SampledMapping) -> Result<f64> {
        Ok(self.distortion(g, h)? + self.lambda * self.power(g)?)
    }

    /// `λ f_X1(x1) g(x1) - Σ_{x2} Σ_z ∂_ŷh(g(x1)+z, x2) [x1 - h(g(x1)+z, x2)] f_Z(z) f(x1,x2) Δ²`.
    pub fn encoder_gradient(&self, g: &SampledMapping, h: &SampledMapping) -> Result<SampledMapping> {
        self.check_encoder(g)?;
        self.check_decoder(h)?;
        let zl = &self.zline;
        let dx2 = self.x2_grid.step();
        let terms = self.per_source(g, h, |x1, start, _, line| {
            let mut e = 0.0;
            line.sweep(start, zl.step, zl.weight.len(), |j, hv, dh| {
                e += dh[0] * (x1 - hv[0]) * zl.weight[j];
            });
            e
        });
        let mut out = SampledMapping::zeros(self.x1_grid.clone(), 1);
        let vals = out.values_mut();
        for (s, t) in terms.into_iter().enumerate() {
            let i = self.src.index[s];
            vals[i] = self.lambda * self.src.density[s] * g.values()[i] - t * dx2;
        }
        Ok(out)
    }
}

impl Design for SideInfoProblem {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn with_lambda(&self, lambda: f64) -> Result<Self> {
        SideInfoProblem::with_lambda(self, lambda)
    }

    fn encoder_grid(&self) -> &GridSpec {
        &self.x1_grid
    }

    fn channel_dim(&self) -> usize {
        1
    }

    fn decode(&self, g: &SampledMapping) -> Result<SampledMapping> {
        self.decoder_for(g)
    }

    fn distortion(&self, g: &SampledMapping, h: &SampledMapping) -> Result<f64> {
        SideInfoProblem::distortion(self, g, h)
    }

    fn power(&self, g: &SampledMapping) -> Result<f64> {
        SideInfoProblem::power(self, g)
    }

    fn gradient(&self, g: &SampledMapping, h: &SampledMapping) -> Result<SampledMapping> {
        self.encoder_gradient(g, h)
    }

    fn encoder_density(&self) -> Vec<f64> {
        self.marginal.values().to_vec()
    }
}

/// Alternating descent with the side-informed decoder.
pub fn si_solve(prob: &SideInfoProblem, cfg: &SolverConfig, init: &Init) -> Result<SolveReport> {
    descent::run(prob, cfg, init)
}

/// Random-initialized runs over `seeds`, keeping the lowest final Lagrangian.
/// Also returns every run's final Lagrangian in seed order.
pub fn si_solve_best_of(prob: &SideInfoProblem, cfg: &SolverConfig, seeds: &[u64]) -> Result<(SolveReport, Vec<f64>)> {
    descent::best_of(seeds, |seed| si_solve(prob, &cfg.clone().with_seed(seed), &Init::Random))
}

/// λ at which a linear encoder of power `power` is stationary when `X1`, `X2` are jointly
/// Gaussian with correlation `rho`: the negative slope of the linear scheme's `D(P)`.
pub fn linear_si_lambda(var_x: f64, rho: f64, var_z: f64, power: f64) -> Result<f64> {
    if !(var_x > 0.0 && var_z > 0.0 && power >= 0.0 && rho.abs() < 1.0) {
        return Err(Error::param("side information", "needs positive variances, power >= 0 and |rho| < 1"));
    }
    let v = var_x * (1.0 - rho * rho);
    let a2 = power / var_x;
    Ok(v * v * var_z / (var_x * (a2 * v + var_z).powi(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_correlated_gaussian_pair, make_gaussian};
    use crate::solver::ProblemInstance;

    fn problem(rho: f64, step: f64, lambda: f64) -> SideInfoProblem {
        let grid = GridSpec::symmetric(5.0, step, 2).unwrap();
        let joint = make_correlated_gaussian_pair(1.0, rho, &grid).unwrap();
        let noise = make_gaussian(1.0, &GridSpec::symmetric(5.0, step, 1).unwrap()).unwrap();
        SideInfoProblem::new(joint, noise, lambda).unwrap()
    }

    fn linear(p: &SideInfoProblem, a: f64) -> SampledMapping {
        SampledMapping::from_fn(p.x1_grid().clone(), 1, |x, y| y[0] = a * x[0]).unwrap()
    }

    #[test]
    fn linear_lambda_matches_finite_difference() {
        let (vx, rho, vz) = (1.0, 0.9, 1.0);
        let d = |p: f64| {
            let v = vx * (1.0 - rho * rho);
            v * vz / (p / vx * v + vz)
        };
        let h = 1e-5;
        let fd = -(d(10.0 + h) - d(10.0 - h)) / (2.0 * h);
        assert!((linear_si_lambda(vx, rho, vz, 10.0).unwrap() - fd).abs() < 1e-9);
        assert!((linear_si_lambda(1.0, 0.9, 1.0, 10.0).unwrap() - 0.00429).abs() < 1e-5);
    }

    #[test]
    fn rejects_mismatched_noise_step() {
        let grid = GridSpec::symmetric(5.0, 0.1, 2).unwrap();
        let joint = make_correlated_gaussian_pair(1.0, 0.5, &grid).unwrap();
        let noise = make_gaussian(1.0, &GridSpec::symmetric(5.0, 0.05, 1).unwrap()).unwrap();
        assert!(SideInfoProblem::new(joint, noise, 0.1).is_err());
    }

    #[test]
    fn independent_side_information_reduces_to_point_to_point() {
        let p = problem(0.0, 0.1, 0.2);
        let g = SampledMapping::from_fn(p.x1_grid().clone(), 1, |x, y| y[0] = 1.3 * x[0] + 0.2 * x[0].powi(3)).unwrap();
        let pp = ProblemInstance::new(p.marginal().clone(), p.noise().clone(), 0.2).unwrap();
        let h = p.decoder_for(&g).unwrap();
        let h1 = pp.decoder_for(&g).unwrap();
        let n2 = p.x2_grid().len();
        // away from the tails, where the joint falls under the denominator floor
        for (l, v) in h1.values().iter().enumerate() {
            if h1.domain().point_vec(l)[0].abs() > 4.0 {
                continue;
            }
            for b in [n2 / 4, n2 / 3, n2 / 2] {
                assert!((h.values()[l * n2 + b] - v).abs() < 1e-6);
            }
        }
        let d = p.distortion(&g, &h).unwrap();
        assert!((d - pp.distortion(&g, &h1).unwrap()).abs() < 1e-6);
        let gr = p.encoder_gradient(&g, &h).unwrap();
        let gr1 = pp.encoder_gradient(&g, &h1).unwrap();
        assert!(gr.max_abs_diff(&gr1).unwrap() < 1e-6);
    }

    /// Linear MMSE coefficients `(c1, c2)` of `X1` from `(a X1 + Z, X2)`, unit variances.
    fn lmmse(a: f64, rho: f64, var_z: f64) -> (f64, f64) {
        let (s11, s12, s22) = (a * a + var_z, a * rho, 1.0);
        let (r1, r2) = (a, rho);
        let det = s11 * s22 - s12 * s12;
        ((s22 * r1 - s12 * r2) / det, (s11 * r2 - s12 * r1) / det)
    }

    #[test]
    fn gaussian_decoder_is_the_linear_estimator() {
        let rho = 0.9;
        let p = problem(rho, 0.05, 0.1);
        let h = p.decoder_for(&linear(&p, 1.0)).unwrap();
        let (c1, c2) = lmmse(1.0, rho, 1.0);
        for (y, x2) in [(0.0, 0.0), (1.0, 0.5), (-2.0, -1.0), (0.7, -0.3)] {
            let v = h.eval(&[y, x2]).unwrap()[0];
            assert!((v - (c1 * y + c2 * x2)).abs() < 1e-2, "{v}");
        }
    }

    #[test]
    fn nearly_perfect_side_information_is_trusted() {
        let p = problem(0.9999, 0.05, 0.1);
        let h = p.decoder_for(&linear(&p, 1.0)).unwrap();
        for (y, x2) in [(0.0, 0.5), (1.0, -1.0), (-1.5, 0.25)] {
            assert!((h.eval(&[y, x2]).unwrap()[0] - x2).abs() < 0.05);
        }
    }

    #[test]
    fn linear_optimum_is_stationary() {
        let rho = 0.9;
        let a = 1.0;
        let (c1, c2) = lmmse(a, rho, 1.0);
        let lambda = c1 * (1.0 - c1 * a - c2 * rho) / a;
        let p = problem(rho, 0.05, lambda);
        let g = linear(&p, a);
        let h = p.decoder_for(&g).unwrap();
        let gr = p.encoder_gradient(&g, &h).unwrap();
        let sup = gr.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup < 1e-2, "sup {sup}");
    }
}
