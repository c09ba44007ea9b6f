//! Bounds, dB bookkeeping, the linearity (matching) test, linearity probes and
//! Monte Carlo cross-checks.

use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::{characteristic_function, SampledDensity};
use crate::descent::Design;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mapping::{make_matrix_encoder, SampledMapping};
use crate::par;

pub use crate::compare::{fixed_resolution_compare, fixed_resolution_runs, CompareRow, CompareRun, KnotEncoder};

/// Modulus floor of `F_Z` below which the mismatch is not evaluated.
pub const CHAR_FLOOR: f64 = 1e-3;

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// A (power, distortion) pair with its dB coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub csnr_db: f64,
    pub snr_db: f64,
    pub power: f64,
    pub distortion: f64,
}

impl OperatingPoint {
    /// `distortion` is per source component.
    pub fn new(var_x: f64, var_z: f64, power: f64, distortion: f64) -> Result<Self> {
        for (name, v) in [("var_x", var_x), ("var_z", var_z), ("power", power), ("distortion", distortion)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(OperatingPoint { csnr_db: db(power / var_z), snr_db: db(var_x / distortion), power, distortion })
    }
}

fn check_bound_args(var_x: f64, var_z: f64, power: f64, k: usize, m: usize) -> Result<()> {
    for (name, v) in [("var_x", var_x), ("var_z", var_z)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive, got {v}")));
        }
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::param("power", format!("must be >= 0, got {power}")));
    }
    if k == 0 || m == 0 {
        return Err(Error::param("k/m", "dimensions must be positive"));
    }
    Ok(())
}

/// Per-component distortion at capacity: `σx² / (1 + P/σz²)^{k/m}`.
pub fn opta(var_x: f64, var_z: f64, power: f64, k: usize, m: usize) -> Result<f64> {
    check_bound_args(var_x, var_z, power, k, m)?;
    Ok(var_x / (1.0 + power / var_z).powf(k as f64 / m as f64))
}

/// [`opta`] with jointly Gaussian side information of correlation `rho` at the decoder.
pub fn opta_side_info(var_x: f64, var_z: f64, power: f64, rho: f64, k: usize, m: usize) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::param("rho", format!("|rho| must be <= 1, got {rho}")));
    }
    Ok((1.0 - rho * rho) * opta(var_x, var_z, power, k, m)?)
}

/// Outcome of comparing `F_X(αω)` with `F_Z(ω)^γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub gamma: f64,
    pub alpha: f64,
    /// Largest `|F_X(αω) - F_Z(ω)^γ|` over the evaluated frequencies.
    pub max_abs_mismatch: f64,
    pub window: (f64, f64),
    /// Fraction of the window where `|F_Z| ≥` [`CHAR_FLOOR`].
    pub coverage: f64,
    /// False when `F_Z` is below the floor over more than half the window.
    pub usable: bool,
}

/// Tests the linearity condition on `[0, wmax]` with `n` frequencies (densities are real,
/// so negative frequencies mirror these). The power of `F_Z` uses the continuous branch of
/// the logarithm, unwrapped outward from `ω = 0`.
pub fn match_check(fx: &SampledDensity, fz: &SampledDensity, power: f64, wmax: f64, n: usize) -> Result<MatchReport> {
    if fx.dim() != 1 || fz.dim() != 1 {
        return Err(Error::param("density", "match_check needs scalar densities"));
    }
    if !(power > 0.0) || !(wmax > 0.0) || n < 2 {
        return Err(Error::param("match_check", "power and wmax must be positive, n >= 2"));
    }
    let var_x = fx.variance_per_dim();
    let var_z = fz.variance_per_dim();
    let gamma = power / var_z;
    let alpha = (power / var_x).sqrt();
    let freqs: Vec<f64> = (0..n).map(|i| wmax * i as f64 / (n - 1) as f64).collect();
    let scaled: Vec<f64> = freqs.iter().map(|w| alpha * w).collect();
    let cx = characteristic_function(fx, &scaled)?;
    let cz = characteristic_function(fz, &freqs)?;
    let mut phase = 0.0;
    let mut prev = cz.values[0].arg();
    let mut worst = 0.0f64;
    let mut covered = 0usize;
    for (i, z) in cz.values.iter().enumerate() {
        let a = z.arg();
        if i > 0 {
            let mut d = a - prev;
            d -= (2.0 * std::f64::consts::PI) * (d / (2.0 * std::f64::consts::PI)).round();
            phase += d;
        } else {
            phase = a;
        }
        prev = a;
        if z.norm() < CHAR_FLOOR {
            continue;
        }
        covered += 1;
        let log = Complex64::new(z.norm().ln(), phase);
        let pow = (log * gamma).exp();
        worst = worst.max((cx.values[i] - pow).norm());
    }
    let coverage = covered as f64 / n as f64;
    Ok(MatchReport { gamma, alpha, max_abs_mismatch: worst, window: (0.0, wmax), coverage, usable: coverage >= 0.5 })
}

/// Weighted relative distance between `g` and its best linear fit `x ↦ Bx`.
///
/// `weight` must live on `g`'s domain; a mapping with zero weighted power scores 0.
pub fn nonlinearity_index(g: &SampledMapping, weight: &SampledDensity) -> Result<f64> {
    if g.domain() != weight.grid() {
        return Err(Error::param("weight", "weight density must share the mapping's grid"));
    }
    let (m, k) = (g.dim_in(), g.dim_out());
    let grid = g.domain();
    let w = weight.values();
    // normal equations: (Σ w x xᵀ) Bᵀ = Σ w x gᵀ
    let mut xx = vec![0.0; m * m];
    let mut xg = vec![0.0; m * k];
    let mut gg = 0.0;
    let mut p = vec![0.0; m];
    for i in 0..grid.len() {
        if w[i] == 0.0 {
            continue;
        }
        grid.point(i, &mut p);
        let gi = g.node(i);
        for a in 0..m {
            for b in 0..m {
                xx[a * m + b] += w[i] * p[a] * p[b];
            }
            for c in 0..k {
                xg[a * k + c] += w[i] * p[a] * gi[c];
            }
        }
        gg += w[i] * gi.iter().map(|v| v * v).sum::<f64>();
    }
    if gg == 0.0 {
        return Ok(0.0);
    }
    let bt = solve_spd(&xx, &xg, m, k)?;
    let mut res = 0.0;
    for i in 0..grid.len() {
        if w[i] == 0.0 {
            continue;
        }
        grid.point(i, &mut p);
        let gi = g.node(i);
        for c in 0..k {
            let fit: f64 = (0..m).map(|a| bt[a * k + c] * p[a]).sum();
            res += w[i] * (gi[c] - fit).powi(2);
        }
    }
    Ok((res / gg).max(0.0).sqrt())
}

/// Solves `A X = B` for symmetric positive definite `A` (`n × n`), `B` `n × r`, by Gaussian elimination.
fn solve_spd(a: &[f64], b: &[f64], n: usize, r: usize) -> Result<Vec<f64>> {
    let mut a = a.to_vec();
    let mut x = b.to_vec();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap();
        if a[piv * n + c].abs() < 1e-300 {
            return Err(Error::param("weight", "weighted second moment is singular"));
        }
        for j in 0..n {
            a.swap(c * n + j, piv * n + j);
        }
        for j in 0..r {
            x.swap(c * r + j, piv * r + j);
        }
        for i in 0..n {
            if i != c {
                let f = a[i * n + c] / a[c * n + c];
                for j in 0..n {
                    a[i * n + j] -= f * a[c * n + j];
                }
                for j in 0..r {
                    x[i * r + j] -= f * x[c * r + j];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..r {
            x[i * r + j] /= a[i * n + i];
        }
    }
    Ok(x)
}

/// Draws points from a density.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;
    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]);
}

/// Samples a tabulated density as piecewise constant: a node by its mass, then a
/// uniform offset within its cell.
#[derive(Debug, Clone)]
pub struct GridSampler {
    grid: GridSpec,
    index: WeightedIndex<f64>,
}

impl GridSampler {
    pub fn new(d: &SampledDensity) -> Result<Self> {
        let index = WeightedIndex::new(d.values()).map_err(|e| Error::param("density", e.to_string()))?;
        Ok(GridSampler { grid: d.grid().clone(), index })
    }
}

impl Sampler for GridSampler {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        let i = self.index.sample(rng);
        self.grid.point(i, out);
        let h = self.grid.step();
        for o in out.iter_mut() {
            *o += h * (rng.gen::<f64>() - 0.5);
        }
    }
}

/// Monte Carlo estimates with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub distortion: f64,
    pub power: f64,
    pub distortion_stderr: f64,
    pub power_stderr: f64,
    pub n: usize,
}

/// Samples per independently seeded stream.
const MC_SHARD: usize = 1 << 14;
pub const MC_MIN_SAMPLES: usize = 100;

/// Empirical `E‖X - h(g(X)+Z)‖²` and `E‖g(X)‖²` over `n` draws.
///
/// Shard `s` draws from stream `s` of the seeded generator and shards are reduced in
/// order, so the result does not depend on the thread count.
pub fn monte_carlo_eval<S: Sampler, T: Sampler>(
    g: &SampledMapping,
    h: &SampledMapping,
    source: &S,
    noise: &T,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n < MC_MIN_SAMPLES {
        return Err(Error::param("n", format!("need at least {MC_MIN_SAMPLES} samples, got {n}")));
    }
    let (m, k) = (g.dim_in(), g.dim_out());
    if source.dim() != m || noise.dim() != k || h.dim_in() != k || h.dim_out() != m {
        return Err(Error::param("mapping", "encoder, decoder and samplers have inconsistent dimensions"));
    }
    let shards = n.div_ceil(MC_SHARD);
    let sums = par::map_range(shards, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let count = MC_SHARD.min(n - s * MC_SHARD);
        let (mut x, mut z) = (vec![0.0; m], vec![0.0; k]);
        let (mut y, mut xh) = (vec![0.0; k], vec![0.0; m]);
        let mut acc = [0.0; 4];
        for _ in 0..count {
            source.sample(&mut rng, &mut x);
            noise.sample(&mut rng, &mut z);
            g.eval_into(&x, &mut y).expect("dimensions checked");
            let p: f64 = y.iter().map(|v| v * v).sum();
            for c in 0..k {
                y[c] += z[c];
            }
            h.eval_into(&y, &mut xh).expect("dimensions checked");
            let d: f64 = x.iter().zip(&xh).map(|(a, b)| (a - b) * (a - b)).sum();
            acc[0] += d;
            acc[1] += d * d;
            acc[2] += p;
            acc[3] += p * p;
        }
        acc
    });
    let mut t = [0.0; 4];
    for s in sums {
        for c in 0..4 {
            t[c] += s[c];
        }
    }
    let nf = n as f64;
    let stderr = |s: f64, s2: f64| {
        let mean = s / nf;
        ((s2 / nf - mean * mean).max(0.0) / (nf - 1.0)).sqrt()
    };
    Ok(McEstimate {
        distortion: t[0] / nf,
        power: t[2] / nf,
        distortion_stderr: stderr(t[0], t[1]),
        power_stderr: stderr(t[2], t[3]),
        n,
    })
}

/// Result of scanning linear encoders `g = a·Mx` at the design's λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearScan {
    pub gain: f64,
    pub lagrangian: f64,
    pub distortion: f64,
    pub power: f64,
}

/// Linear encoder `a·Mx` on `design`'s grid, `M` the leading `k × m` identity block.
pub fn linear_encoder<D: Design>(design: &D, gain: f64) -> Result<SampledMapping> {
    let grid = design.encoder_grid();
    let (m, k) = (grid.dim(), design.channel_dim());
    let mut mat = vec![0.0; k * m];
    for r in 0..k.min(m) {
        mat[r * m + r] = 1.0;
    }
    make_matrix_encoder(grid, k, &mat, gain)
}

/// Evaluates a linear encoder with its optimal decoder.
pub fn linear_point<D: Design>(design: &D, gain: f64) -> Result<LinearScan> {
    let g = linear_encoder(design, gain)?;
    let h = design.decode(&g)?;
    let distortion = design.distortion(&g, &h)?;
    let power = design.power(&g)?;
    Ok(LinearScan { gain, lagrangian: distortion + design.lambda() * power, distortion, power })
}

/// Lowest Lagrangian among linear encoders: a uniform scan of `n` gains on `[0, max_gain]`
/// followed by two rounds of local refinement around the best gain.
pub fn linear_gain_scan<D: Design>(design: &D, max_gain: f64, n: usize) -> Result<LinearScan> {
    if !(max_gain > 0.0) || n < 3 {
        return Err(Error::param("gain scan", "max_gain must be positive and n >= 3"));
    }
    let mut lo = 0.0;
    let mut hi = max_gain;
    let mut best: Option<LinearScan> = None;
    for _ in 0..3 {
        let step = (hi - lo) / (n - 1) as f64;
        let pts = par::map_range(n, |i| linear_point(design, lo + i as f64 * step));
        for p in pts {
            let p = p?;
            if best.map_or(true, |b| p.lagrangian < b.lagrangian) {
                best = Some(p);
            }
        }
        let b = best.unwrap().gain;
        lo = (b - step).max(0.0);
        hi = b + step;
    }
    Ok(best.unwrap())
}

/// Linear encoder with gain chosen so its power equals `target` (linear in `a²`).
pub fn linear_at_power<D: Design>(design: &D, target: f64) -> Result<LinearScan> {
    let unit = design.power(&linear_encoder(design, 1.0)?)?;
    if !(unit > 0.0) {
        return Err(Error::param("source", "source has zero power along the linear direction"));
    }
    linear_point(design, (target / unit).sqrt())
}

/// Distortion per source component and SNR of `g` rescaled to exactly `power`, with its
/// optimal decoder.
pub fn score_at_power<D: Design>(design: &D, g: &SampledMapping, power: f64, var_x: f64) -> Result<(f64, f64)> {
    let p = design.power(g)?;
    if !(p > 0.0) {
        return Err(Error::param("encoder", "zero-power encoder"));
    }
    let g = g.scaled((power / p).sqrt());
    let h = design.decode(&g)?;
    let d = design.distortion(&g, &h)? / design.encoder_grid().dim() as f64;
    Ok((d, db(var_x / d)))
}

/// Maximal monotone runs of a scalar mapping over the central interval where
/// `weight > floor · peak`, as disjoint inclusive node ranges.
pub fn monotone_pieces(g: &SampledMapping, weight: &SampledDensity, floor: f64) -> Result<Vec<(usize, usize)>> {
    if g.dim_in() != 1 || g.dim_out() != 1 {
        return Err(Error::param("encoder", "monotone pieces need a scalar mapping"));
    }
    if g.domain() != weight.grid() {
        return Err(Error::param("weight", "weight density must share the mapping's grid"));
    }
    let w = weight.values();
    let peak = w.iter().fold(0.0f64, |a, &b| a.max(b));
    let Some(lo) = w.iter().position(|&v| v > floor * peak) else {
        return Ok(Vec::new());
    };
    let hi = w.iter().rposition(|&v| v > floor * peak).unwrap();
    let v = g.values();
    let scale = v[lo..=hi].iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut pieces = Vec::new();
    let mut start = lo;
    let mut dir = 0.0;
    for i in lo + 1..=hi {
        let d = v[i] - v[i - 1];
        if d.abs() <= 1e-12 * scale {
            continue;
        }
        if dir != 0.0 && d.signum() != dir {
            pieces.push((start, i - 1));
            start = i;
        }
        dir = d.signum();
    }
    pieces.push((start, hi));
    Ok(pieces)
}

/// True when two disjoint monotone pieces (see [`monotone_pieces`]) have overlapping images,
/// i.e. distinct source intervals share channel values.
pub fn is_many_to_one(g: &SampledMapping, weight: &SampledDensity, floor: f64) -> Result<bool> {
    let pieces = monotone_pieces(g, weight, floor)?;
    let v = g.values();
    let images: Vec<(f64, f64)> = pieces
        .iter()
        .map(|&(a, b)| v[a..=b].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x))))
        .collect();
    Ok(images.iter().enumerate().any(|(i, a)| images[i + 1..].iter().any(|b| a.0.max(b.0) < a.1.min(b.1))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folded_mapping_is_many_to_one() {
        let grid = GridSpec::symmetric(4.0, 0.05, 1).unwrap();
        let w = crate::density::make_gaussian(1.0, &grid).unwrap();
        let tent = SampledMapping::from_fn(grid.clone(), 1, |x, y| y[0] = 1.0 - x[0].abs()).unwrap();
        let line = SampledMapping::from_fn(grid.clone(), 1, |x, y| y[0] = 2.0 * x[0]).unwrap();
        assert_eq!(monotone_pieces(&tent, &w, 1e-3).unwrap().len(), 2);
        assert!(is_many_to_one(&tent, &w, 1e-3).unwrap());
        assert_eq!(monotone_pieces(&line, &w, 1e-3).unwrap().len(), 1);
        assert!(!is_many_to_one(&line, &w, 1e-3).unwrap());
    }

    use crate::density::{make_gaussian, make_uniform};
    use crate::mapping::{gaussian_linear_coeffs, make_linear_decoder, make_linear_encoder};
    use crate::solver::ProblemInstance;

    #[test]
    fn opta_examples() {
        assert_eq!(opta(1.0, 1.0, 1.0, 1, 1).unwrap(), 0.5);
        assert_eq!(opta(2.0, 1.0, 0.0, 1, 1).unwrap(), 2.0);
        let d = opta(1.0, 1.0, 1e4, 1, 2).unwrap();
        assert!((db(1.0 / d) - 20.0002).abs() < 1e-4);
        assert!((opta_side_info(1.0, 1.0, 10.0, 0.9, 1, 1).unwrap() - 0.19 / 11.0).abs() < 1e-15);
        assert_eq!(opta_side_info(1.0, 1.0, 10.0, 1.0, 1, 1).unwrap(), 0.0);
        assert!(opta(1.0, 0.0, 1.0, 1, 1).is_err());
        assert!(opta_side_info(1.0, 1.0, 1.0, 1.5, 1, 1).is_err());
    }

    #[test]
    fn operating_point_db() {
        let op = OperatingPoint::new(1.0, 0.1, 1.0, 0.01).unwrap();
        assert!((op.csnr_db - 10.0).abs() < 1e-12);
        assert!((op.snr_db - 20.0).abs() < 1e-12);
        assert!((from_db(op.csnr_db) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn match_gaussian_pairs() {
        let g = GridSpec::symmetric(10.0, 0.01, 1).unwrap();
        let fx = make_gaussian(1.0, &g).unwrap();
        let fz = make_gaussian(0.5, &g).unwrap();
        for p in [0.5, 1.0, 4.0] {
            let r = match_check(&fx, &fz, p, 4.0, 200).unwrap();
            assert!(r.usable);
            assert!(r.max_abs_mismatch < 1e-3, "{p}: {}", r.max_abs_mismatch);
        }
        let same = match_check(&fx, &fx, 1.0, 4.0, 200).unwrap();
        assert!(same.max_abs_mismatch < 1e-9);
    }

    #[test]
    fn match_improves_with_gamma_for_uniform_noise() {
        let g = GridSpec::symmetric(8.0, 0.01, 1).unwrap();
        let fx = make_gaussian(1.0, &g).unwrap();
        let fz = make_uniform(3f64.sqrt(), &g).unwrap();
        let m: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&gamma| match_check(&fx, &fz, gamma * fz.variance_per_dim(), 4.0, 400).unwrap().max_abs_mismatch)
            .collect();
        assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    }

    #[test]
    fn nonlinearity_examples() {
        let g = GridSpec::symmetric(10.0, 0.01, 1).unwrap();
        let fx = make_gaussian(1.0, &g).unwrap();
        let lin = SampledMapping::from_fn(g.clone(), 1, |x, y| y[0] = 3.0 * x[0]).unwrap();
        assert!(nonlinearity_index(&lin, &fx).unwrap() < 1e-12);
        let cube = SampledMapping::from_fn(g.clone(), 1, |x, y| y[0] = x[0].powi(3)).unwrap();
        // E x⁶ = 15, E x⁴ = 3: residual 15 - 9 = 6
        let expect = (6.0f64 / 15.0).sqrt();
        assert!((nonlinearity_index(&cube, &fx).unwrap() - expect).abs() < 1e-6);
        let a = nonlinearity_index(&cube, &fx).unwrap();
        let b = nonlinearity_index(&cube.scaled(-2.5), &fx).unwrap();
        assert!((a - b).abs() < 1e-12);
        let zero = SampledMapping::zeros(g, 1);
        assert_eq!(nonlinearity_index(&zero, &fx).unwrap(), 0.0);
    }

    fn gaussian_pair(step: f64) -> (SampledDensity, SampledDensity, SampledMapping, SampledMapping) {
        let grid = GridSpec::symmetric(6.0, step, 1).unwrap();
        let fx = make_gaussian(1.0, &grid).unwrap();
        let c = gaussian_linear_coeffs(1.0, 1.0, 1.0).unwrap();
        let g = make_linear_encoder(&c, &grid).unwrap();
        let h = make_linear_decoder(c.decoder_gain, &GridSpec::symmetric(15.0, step, 1).unwrap()).unwrap();
        (fx.clone(), fx, g, h)
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let (fx, fz, g, h) = gaussian_pair(0.01);
        let (sx, sz) = (GridSampler::new(&fx).unwrap(), GridSampler::new(&fz).unwrap());
        let a = monte_carlo_eval(&g, &h, &sx, &sz, 50_000, 7).unwrap();
        let b = monte_carlo_eval(&g, &h, &sx, &sz, 50_000, 7).unwrap();
        assert_eq!(a, b);
        let c = monte_carlo_eval(&g, &h, &sx, &sz, 50_000, 8).unwrap();
        assert_ne!(a.distortion, c.distortion);
        assert!(monte_carlo_eval(&g, &h, &sx, &sz, 99, 7).is_err());
        assert!((a.distortion - 0.5).abs() < 3.0 * a.distortion_stderr + 1e-3);
    }

    #[test]
    fn linear_scan_finds_gaussian_optimum() {
        let grid = GridSpec::symmetric(5.0, 0.02, 1).unwrap();
        let c = gaussian_linear_coeffs(1.0, 1.0, 1.0).unwrap();
        let p = ProblemInstance::new(make_gaussian(1.0, &grid).unwrap(), make_gaussian(1.0, &grid).unwrap(), c.matched_lambda())
            .unwrap();
        let best = linear_gain_scan(&p, 3.0, 31).unwrap();
        assert!((best.gain - c.encoder_gain).abs() < 0.02, "{best:?}");
        assert!((best.distortion - 0.5).abs() < 0.01);
        let at = linear_at_power(&p, 1.0).unwrap();
        assert!((at.power - 1.0).abs() < 1e-12);
    }
}
