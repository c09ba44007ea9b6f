//! Encoder and decoder functions tabulated on grids.

use crate::density::SampledDensity;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::interp;
use crate::par;

/// A map `ℝ^{dim_in} → ℝ^{dim_out}` stored at the nodes of a grid.
///
/// Between nodes it is the multilinear interpolant of the stored values; queries
/// outside the domain are clamped to the nearest domain point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMapping {
    domain: GridSpec,
    dim_out: usize,
    values: Vec<f64>,
}

impl SampledMapping {
    pub fn new(domain: GridSpec, dim_out: usize, values: Vec<f64>) -> Result<Self> {
        if dim_out == 0 {
            return Err(Error::param("dim_out", "must be positive"));
        }
        if values.len() != domain.len() * dim_out {
            return Err(Error::DimensionMismatch { expected: domain.len() * dim_out, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("values", "mapping values must be finite"));
        }
        Ok(SampledMapping { domain, dim_out, values })
    }

    /// Tabulates `f` at every node.
    pub fn from_fn<F>(domain: GridSpec, dim_out: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Sync + Send,
    {
        let d = domain.dim();
        let rows = par::map_range(domain.len(), |i| {
            let p = domain.point_vec(i);
            let mut out = vec![0.0; dim_out];
            f(&p[..d], &mut out);
            out
        });
        SampledMapping::new(domain, dim_out, rows.concat())
    }

    pub fn zeros(domain: GridSpec, dim_out: usize) -> Self {
        let n = domain.len() * dim_out;
        SampledMapping { domain, dim_out, values: vec![0.0; n] }
    }

    pub fn domain(&self) -> &GridSpec {
        &self.domain
    }

    pub fn dim_in(&self) -> usize {
        self.domain.dim()
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Node values, point-major (`dim_out` consecutive entries per node).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Stored output at node `index`.
    pub fn node(&self, index: usize) -> &[f64] {
        &self.values[index * self.dim_out..(index + 1) * self.dim_out]
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim_out];
        self.eval_into(point, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, point: &[f64], out: &mut [f64]) -> Result<()> {
        if point.len() != self.dim_in() {
            return Err(Error::DimensionMismatch { expected: self.dim_in(), got: point.len() });
        }
        let loc = interp::locate_clamped(&self.domain, point);
        interp::interpolate(&self.domain, &self.values, self.dim_out, &loc, out);
        Ok(())
    }

    /// Value and Jacobian (row-major `dim_out × dim_in`) of the interpolant.
    ///
    /// Inside a cell the Jacobian is exact for the multilinear interpolant, so it is
    /// consistent with [`eval`](Self::eval); it vanishes along clamped axes.
    pub fn eval_with_jacobian(&self, point: &[f64], out: &mut [f64], jac: &mut [f64]) -> Result<()> {
        if point.len() != self.dim_in() {
            return Err(Error::DimensionMismatch { expected: self.dim_in(), got: point.len() });
        }
        let loc = interp::locate_clamped(&self.domain, point);
        interp::interpolate_with_jacobian(&self.domain, &self.values, self.dim_out, &loc, out, jac);
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> SampledMapping {
        SampledMapping {
            domain: self.domain.clone(),
            dim_out: self.dim_out,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Largest absolute difference between node values of two mappings on the same grid.
    pub fn max_abs_diff(&self, other: &SampledMapping) -> Result<f64> {
        if self.domain != other.domain || self.dim_out != other.dim_out {
            return Err(Error::param("mapping", "mappings live on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `E‖g(X)‖²` under `density`, which must be tabulated on the mapping's domain.
    pub fn power_under(&self, density: &SampledDensity) -> Result<f64> {
        if density.grid() != &self.domain {
            return Err(Error::param("density", "density grid differs from the mapping domain"));
        }
        let k = self.dim_out;
        let vol = self.domain.cell_volume();
        Ok(par::sum_range(self.domain.len(), |i| {
            let y = &self.values[i * k..(i + 1) * k];
            y.iter().map(|v| v * v).sum::<f64>() * density.values()[i] * vol
        }))
    }
}

/// Gains of a linear encoder `g(x) = k_e x` and decoder `h(y) = k_d y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoeffs {
    pub encoder_gain: f64,
    pub decoder_gain: f64,
}

/// Optimal linear gains for a Gaussian source and Gaussian channel at power `power`.
pub fn gaussian_linear_coeffs(power: f64, var_x: f64, var_z: f64) -> Result<LinearCoeffs> {
    for (name, v) in [("power", power), ("var_x", var_x), ("var_z", var_z)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    let k_e = (power / var_x).sqrt();
    let k_d = power / (power + var_z) / k_e;
    Ok(LinearCoeffs { encoder_gain: k_e, decoder_gain: k_d })
}

impl LinearCoeffs {
    /// Multiplier at which the linear pair is stationary for the Lagrangian
    /// (`λ = k_d (1 - k_e k_d) / k_e`).
    pub fn matched_lambda(&self) -> f64 {
        self.decoder_gain * (1.0 - self.encoder_gain * self.decoder_gain) / self.encoder_gain
    }
}

/// `g(x) = k_e x` on `grid`, componentwise (channel dimension equals source dimension).
pub fn make_linear_encoder(coeffs: &LinearCoeffs, grid: &GridSpec) -> Result<SampledMapping> {
    let k = coeffs.encoder_gain;
    SampledMapping::from_fn(grid.clone(), grid.dim(), move |x, y| {
        for (o, &xi) in y.iter_mut().zip(x) {
            *o = k * xi;
        }
    })
}

/// Linear encoder for mismatched dimensions: `g(x) = gain · M x` with `M` row-major `k × m`.
pub fn make_matrix_encoder(grid: &GridSpec, k: usize, matrix: &[f64], gain: f64) -> Result<SampledMapping> {
    let m = grid.dim();
    if matrix.len() != k * m {
        return Err(Error::DimensionMismatch { expected: k * m, got: matrix.len() });
    }
    let mat = matrix.to_vec();
    SampledMapping::from_fn(grid.clone(), k, move |x, y| {
        for (r, o) in y.iter_mut().enumerate() {
            *o = gain * (0..m).map(|c| mat[r * m + c] * x[c]).sum::<f64>();
        }
    })
}

/// `h(y) = k_d y` on `grid`.
pub fn make_linear_decoder(decoder_gain: f64, grid: &GridSpec) -> Result<SampledMapping> {
    SampledMapping::from_fn(grid.clone(), grid.dim(), move |y, x| {
        for (o, &yi) in x.iter_mut().zip(y) {
            *o = decoder_gain * yi;
        }
    })
}

/// Shape of a two-armed Archimedean spiral used as a 2:1 encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralParams {
    /// Distance between neighbouring arms; each arm follows `r = (radial_gap/π)·θ`.
    pub radial_gap: f64,
    /// Exponent applied to the arc-length parameter (1 keeps plain arc length).
    pub stretch: f64,
    /// Channel amplitude per unit of (stretched) arc length.
    pub gain: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        SpiralParams { radial_gap: 0.5, stretch: 1.0, gain: 1.0 }
    }
}

/// Dense samples of one spiral arm: angle, cartesian point and arc length.
#[derive(Debug, Clone)]
pub struct Spiral {
    a: f64,
    theta: Vec<f64>,
    xy: Vec<[f64; 2]>,
    arc: Vec<f64>,
    params: SpiralParams,
}

impl Spiral {
    /// Samples the arm out to radius `r_max` with arc-length spacing at most `max_arc_step`.
    pub fn new(params: SpiralParams, r_max: f64, max_arc_step: f64) -> Result<Self> {
        for (name, v) in [
            ("radial_gap", params.radial_gap),
            ("stretch", params.stretch),
            ("gain", params.gain),
            ("max_arc_step", max_arc_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        let a = params.radial_gap / std::f64::consts::PI;
        let theta_max = r_max / a + 2.0 * std::f64::consts::PI;
        let mut theta = vec![0.0];
        while *theta.last().unwrap() < theta_max {
            let t = *theta.last().unwrap();
            // speed |dP/dθ| = a·sqrt(1+θ²) is increasing, so this bounds the chord length
            let guess = max_arc_step / (a * (1.0 + t * t).sqrt());
            let dt = max_arc_step / (a * (1.0 + (t + guess).powi(2)).sqrt());
            theta.push(t + dt);
        }
        let xy = theta.iter().map(|&t| [a * t * t.cos(), a * t * t.sin()]).collect();
        let arc = theta.iter().map(|&t| arc_length(a, t)).collect();
        Ok(Spiral { a, theta, xy, arc, params })
    }

    pub fn params(&self) -> SpiralParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Point on the positive arm at sample `k`.
    pub fn sample_point(&self, k: usize) -> [f64; 2] {
        self.xy[k]
    }

    /// Signed arc length of sample `k` (positive arm) before gain and stretch.
    pub fn sample_arc(&self, k: usize) -> f64 {
        self.arc[k]
    }

    /// Signed arc length of the nearest sampled spiral point to `p`.
    ///
    /// The positive arm is `P(θ)`, the negative arm `-P(θ)`.
    pub fn nearest_arc(&self, p: [f64; 2]) -> f64 {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let mut window = 2.0 * self.params.radial_gap;
        loop {
            let lo_r = (r - window).max(0.0);
            let hi_r = r + window;
            let lo = self.theta.partition_point(|&t| self.a * t < lo_r);
            let hi = self.theta.partition_point(|&t| self.a * t <= hi_r).min(self.theta.len());
            let mut best = f64::INFINITY;
            let mut best_arc = 0.0;
            for k in lo..hi {
                let q = self.xy[k];
                let dp = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                if dp < best {
                    best = dp;
                    best_arc = self.arc[k];
                }
                let dm = (p[0] + q[0]).powi(2) + (p[1] + q[1]).powi(2);
                if dm < best {
                    best = dm;
                    best_arc = -self.arc[k];
                }
            }
            // any closer point would have a radius within `best` of r
            if best.sqrt() <= window || (lo == 0 && hi == self.theta.len()) {
                return best_arc;
            }
            window *= 2.0;
        }
    }

    /// Channel value of the encoder at `p`.
    pub fn encode(&self, p: [f64; 2]) -> f64 {
        let s = self.nearest_arc(p);
        self.params.gain * s.signum() * s.abs().powf(self.params.stretch)
    }
}

fn arc_length(a: f64, theta: f64) -> f64 {
    0.5 * a * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
}

/// 2:1 encoder mapping each source point to the signed (stretched) arc-length
/// parameter of its nearest point on the two-armed spiral, times `gain`.
///
/// Spiral samples are spaced by at most half a grid step.
pub fn make_spiral_encoder(grid: &GridSpec, params: &SpiralParams) -> Result<SampledMapping> {
    if grid.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: grid.dim() });
    }
    let r_max = (0..2)
        .map(|a| grid.lower()[a].abs().max(grid.upper(a).abs()))
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let spiral = Spiral::new(*params, r_max, grid.step() / 2.0)?;
    SampledMapping::from_fn(grid.clone(), 1, |x, y| {
        y[0] = spiral.encode([x[0], x[1]]);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::make_gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line() -> GridSpec {
        GridSpec::symmetric(5.0, 0.01, 1).unwrap()
    }

    #[test]
    fn identity_interpolates_exactly() {
        let id = make_linear_encoder(&LinearCoeffs { encoder_gain: 1.0, decoder_gain: 1.0 }, &line()).unwrap();
        assert!((id.eval(&[0.005]).unwrap()[0] - 0.005).abs() < 1e-12);
        assert!(id.eval(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn nodes_are_exact_and_outside_is_clamped() {
        let g = SampledMapping::from_fn(line(), 1, |x, y| y[0] = (3.0 * x[0]).sin()).unwrap();
        for i in [0, 17, 500, 1000] {
            let x = g.domain().point_vec(i);
            assert!((g.eval(&x).unwrap()[0] - g.node(i)[0]).abs() < 1e-14);
        }
        assert_eq!(g.eval(&[-7.0]).unwrap()[0], g.node(0)[0]);
        assert_eq!(g.eval(&[-7.0]).unwrap(), g.eval(&[-70.0]).unwrap());
    }

    #[test]
    fn clamping_is_constant_along_rays_in_2d() {
        let grid = GridSpec::symmetric(1.0, 0.1, 2).unwrap();
        let g = SampledMapping::from_fn(grid, 1, |x, y| y[0] = x[0] * x[0] - x[1]).unwrap();
        let a = g.eval(&[2.0, 0.3]).unwrap();
        let b = g.eval(&[20.0, 0.3]).unwrap();
        assert_eq!(a, b);
        let mut out = [0.0];
        let mut jac = [0.0; 2];
        g.eval_with_jacobian(&[2.0, 0.35], &mut out, &mut jac).unwrap();
        assert_eq!(jac[0], 0.0);
        assert!((jac[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_error_is_second_order() {
        let f = |x: f64| (1.3 * x).sin();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let queries: Vec<f64> = (0..200).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let err = |step: f64| {
            let g = SampledMapping::from_fn(GridSpec::symmetric(5.0, step, 1).unwrap(), 1, |x, y| y[0] = f(x[0]))
                .unwrap();
            queries
                .iter()
                .map(|&q| (g.eval(&[q]).unwrap()[0] - f(q)).abs())
                .fold(0.0, f64::max)
        };
        let steps = [0.08, 0.04, 0.02, 0.01];
        let errs: Vec<f64> = steps.iter().map(|&s| err(s)).collect();
        // least-squares slope of log(err) against log(step)
        let lx: Vec<f64> = steps.iter().map(|s| s.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let mx = lx.iter().sum::<f64>() / 4.0;
        let my = ly.iter().sum::<f64>() / 4.0;
        let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!(slope >= 1.8, "order {slope}");
    }

    #[test]
    fn gaussian_coefficients() {
        let c = gaussian_linear_coeffs(1.0, 1.0, 1.0).unwrap();
        assert_eq!(c.encoder_gain, 1.0);
        assert!((c.decoder_gain - 0.5).abs() < 1e-15);
        assert!((c.matched_lambda() - 0.25).abs() < 1e-15);
        let c = gaussian_linear_coeffs(4.0, 1.0, 1.0).unwrap();
        assert_eq!(c.encoder_gain, 2.0);
        assert!((c.decoder_gain - 0.4).abs() < 1e-15);
        assert!(gaussian_linear_coeffs(0.0, 1.0, 1.0).is_err());

        let src = make_gaussian(1.0, &line()).unwrap();
        let c = gaussian_linear_coeffs(2.5, 1.0, 0.3).unwrap();
        let g = make_linear_encoder(&c, &line()).unwrap();
        let p: f64 = src
            .grid()
            .axis_values(0)
            .iter()
            .zip(src.values())
            .map(|(x, f)| (c.encoder_gain * x).powi(2) * f * 0.01)
            .sum();
        assert!((p - 2.5).abs() < 0.025);
        assert!((g.power_under(&src).unwrap() - p).abs() < 1e-12);
    }

    #[test]
    fn linear_encoder_tables() {
        let g = make_linear_encoder(&LinearCoeffs { encoder_gain: 2.0, decoder_gain: 0.0 }, &line()).unwrap();
        assert_eq!(g.eval(&[1.5]).unwrap()[0], 3.0);
        let n = make_linear_encoder(&LinearCoeffs { encoder_gain: -1.0, decoder_gain: 0.0 }, &line()).unwrap();
        assert_eq!(n.node(0)[0], 5.0);
    }

    #[test]
    fn spiral_origin_and_antipodes() {
        let params = SpiralParams { radial_gap: 0.4, stretch: 1.0, gain: 1.0 };
        let spiral = Spiral::new(params, 8.0, 0.025).unwrap();
        assert!(spiral.encode([0.0, 0.0]).abs() <= 0.025);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let a = spiral.encode(p);
            let b = spiral.encode([-p[0], -p[1]]);
            assert!(a * b < 0.0, "{p:?}: {a} {b}");
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn spiral_projection_matches_dense_oracle() {
        let params = SpiralParams { radial_gap: 0.6, stretch: 1.0, gain: 1.0 };
        let spiral = Spiral::new(params, 6.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            // exhaustive scan over every sample of both arms
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..spiral.len() {
                let q = spiral.sample_point(k);
                for sign in [1.0, -1.0] {
                    let d = (p[0] - sign * q[0]).powi(2) + (p[1] - sign * q[1]).powi(2);
                    if d < best.0 {
                        best = (d, sign * spiral.sample_arc(k));
                    }
                }
            }
            assert_eq!(spiral.nearest_arc(p), best.1);
        }
    }

    #[test]
    fn spiral_points_project_to_themselves() {
        let params = SpiralParams { radial_gap: 0.5, stretch: 1.0, gain: 1.0 };
        let fine = Spiral::new(params, 6.0, 0.02).unwrap();
        let a = params.radial_gap / std::f64::consts::PI;
        for theta in [0.7, 3.1, 9.9, 25.0] {
            let p = [a * theta * theta.cos(), a * theta * theta.sin()];
            let s = arc_length(a, theta);
            assert!((fine.nearest_arc(p) - s).abs() <= 0.02, "theta {theta}");
            assert!((fine.nearest_arc([-p[0], -p[1]]) + s).abs() <= 0.02);
        }
    }

    #[test]
    fn spiral_power_grows_with_gain() {
        let grid = GridSpec::symmetric(5.0, 0.1, 2).unwrap();
        let g1 = make_gaussian(1.0, &grid.axis_grid(0)).unwrap();
        let src = crate::density::make_iid_product(&g1, 2).unwrap();
        let mut last = 0.0;
        for gain in [0.1, 0.2, 0.4] {
            let enc = make_spiral_encoder(&grid, &SpiralParams { radial_gap: 0.5, stretch: 1.0, gain }).unwrap();
            let p = enc.power_under(&src).unwrap();
            assert!(p.is_finite() && p > last);
            last = p;
        }
        assert!(make_spiral_encoder(&grid, &SpiralParams { radial_gap: -1.0, stretch: 1.0, gain: 1.0 }).is_err());
    }
}
