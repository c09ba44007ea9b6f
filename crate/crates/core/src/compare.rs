//! Encoders described by a few sample points: optimizing them through the interpolated
//! mapping versus optimizing the samples as a discrete codebook.

use crate::analysis::{db, from_db};
use crate::density::SampledDensity;
use crate::descent::{descend_for_power, Init, Parameterization, SolveReport, SolverConfig, POWER_TOLERANCE};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mapping::SampledMapping;
use crate::solver::{opta_slope_lambda, solve_for_power, ProblemInstance};

/// Scalar encoder linearly interpolated between equally spaced knots and held
/// constant beyond the outer knots, tabulated on a fine grid.
#[derive(Debug, Clone)]
pub struct KnotEncoder {
    knots: GridSpec,
    fine: GridSpec,
    /// Per fine node: left knot and weight of the right knot.
    seg: Vec<(usize, f64)>,
}

impl KnotEncoder {
    pub fn new(lo: f64, hi: f64, n: usize, fine: GridSpec) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n_points", format!("need at least 2 points, got {n}")));
        }
        if fine.dim() != 1 || !(hi > lo) {
            return Err(Error::param("knots", "needs a scalar grid and lo < hi"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let knots = GridSpec::new(vec![lo], step, vec![n])?;
        let seg = fine
            .axis_values(0)
            .iter()
            .map(|&x| {
                let t = ((x - lo) / step).clamp(0.0, (n - 1) as f64);
                let j = (t.floor() as usize).min(n - 2);
                (j, t - j as f64)
            })
            .collect();
        Ok(KnotEncoder { knots, fine, seg })
    }

    /// Knots spanning the `[q, 1-q]` quantile range of a scalar density.
    pub fn spanning(d: &SampledDensity, n: usize, q: f64) -> Result<Self> {
        let (lo, hi) = quantile_range(d, q)?;
        KnotEncoder::new(lo, hi, n, d.grid().clone())
    }

    pub fn knots(&self) -> &GridSpec {
        &self.knots
    }

    pub fn knot_positions(&self) -> Vec<f64> {
        self.knots.axis_values(0)
    }
}

impl Parameterization for KnotEncoder {
    fn expand(&self, v: &[f64]) -> Result<SampledMapping> {
        if v.len() != self.knots.len() {
            return Err(Error::DimensionMismatch { expected: self.knots.len(), got: v.len() });
        }
        let vals = self.seg.iter().map(|&(j, t)| (1.0 - t) * v[j] + t * v[j + 1]).collect();
        SampledMapping::new(self.fine.clone(), 1, vals)
    }

    fn pull_back(&self, grad: &SampledMapping) -> Vec<f64> {
        let mut out = vec![0.0; self.knots.len()];
        for (&(j, t), g) in self.seg.iter().zip(grad.values()) {
            out[j] += (1.0 - t) * g;
            out[j + 1] += t * g;
        }
        out
    }

    fn project(&self, g: &SampledMapping) -> Result<Vec<f64>> {
        self.knot_positions().iter().map(|&x| Ok(g.eval(&[x])?[0])).collect()
    }
}

/// Grid nodes at which the mass accumulated from the left, and from the right, first reaches `q`.
pub fn quantile_range(d: &SampledDensity, q: f64) -> Result<(f64, f64)> {
    if d.dim() != 1 || !(q > 0.0 && q < 0.5) {
        return Err(Error::param("quantile", "needs a scalar density and 0 < q < 0.5"));
    }
    let xs = d.grid().axis_values(0);
    let w = d.weights();
    let crossing = |order: &mut dyn Iterator<Item = usize>| {
        let mut acc = 0.0;
        for i in order {
            acc += w[i];
            if acc >= q {
                return Some(i);
            }
        }
        None
    };
    let lo = xs[crossing(&mut (0..xs.len())).unwrap_or(0)];
    let hi = xs[crossing(&mut (0..xs.len()).rev()).unwrap_or(xs.len() - 1)];
    Ok((lo, hi))
}

/// Source mass collected onto the knots (each fine node goes to its nearest knot).
fn lumped_source(d: &SampledDensity, knots: &GridSpec) -> Result<SampledDensity> {
    let n = knots.len();
    let (lo, step) = (knots.lower()[0], knots.step());
    let mut mass = vec![0.0; n];
    for (x, m) in d.grid().axis_values(0).iter().zip(d.weights()) {
        let t = ((x - lo) / step).clamp(0.0, (n - 1) as f64);
        let j = t.floor() as usize;
        if ((t - j as f64) - 0.5).abs() < 1e-9 {
            // a node halfway between two knots is shared
            mass[j] += 0.5 * m;
            mass[j + 1] += 0.5 * m;
        } else {
            mass[t.round() as usize] += m;
        }
    }
    SampledDensity::from_values(knots.clone(), mass.iter().map(|m| m / step).collect())
}

/// One row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub csnr_db: f64,
    pub n_points: usize,
    /// Knots optimized through the interpolated encoder.
    pub proposed_snr_db: f64,
    /// Knots optimized as a discrete codebook, decoded with the conditional mean.
    pub baseline_snr_db: f64,
    /// Same codebook, decoded by maximum likelihood.
    pub baseline_ml_snr_db: f64,
}

/// Knot mapping rescaled to exactly `power` and scored with the conditional-mean decoder.
fn snr_at_power(prob: &ProblemInstance, g: &SampledMapping, power: f64) -> Result<f64> {
    let p = prob.power(g)?;
    if !(p > 0.0) {
        return Err(Error::param("encoder", "zero-power encoder"));
    }
    let g = g.scaled((power / p).sqrt());
    let h = prob.decoder_for(&g)?;
    Ok(db(prob.source().variance_per_dim() / prob.distortion(&g, &h)?))
}

/// Maximum-likelihood decoder for unimodal symmetric noise: the source node whose
/// channel input is closest to `ŷ`.
pub fn ml_decoder(prob: &ProblemInstance, g: &SampledMapping) -> Result<SampledMapping> {
    let grid = prob.decoder_grid(g)?;
    let xs = prob.source().grid().axis_values(0);
    let f = prob.source().values();
    let cand: Vec<(f64, f64)> = xs.iter().zip(g.values()).zip(f).filter(|(_, &w)| w > 0.0).map(|((x, y), _)| (*x, *y)).collect();
    SampledMapping::from_fn(grid, 1, |y, out| {
        out[0] = cand
            .iter()
            .min_by(|a, b| (a.1 - y[0]).abs().total_cmp(&(b.1 - y[0]).abs()))
            .map_or(0.0, |c| c.0);
    })
}

/// One comparison point with both solver runs.
#[derive(Debug, Clone)]
pub struct CompareRun {
    pub row: CompareRow,
    /// Codebook descent on the lumped source; its encoder lives on the knots.
    pub baseline: SolveReport,
    pub proposed: SolveReport,
}

/// Compares the two ways of designing an `n_points` encoder at each channel SNR.
///
/// Both designs are calibrated to the target power, rescaled to it exactly and scored on
/// the full source grid. The interpolation-aware descent is warm-started from the codebook.
pub fn fixed_resolution_compare(
    prob: &ProblemInstance,
    n_points: usize,
    csnr_db: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<CompareRow>> {
    Ok(fixed_resolution_runs(prob, n_points, csnr_db, cfg)?.into_iter().map(|r| r.row).collect())
}

/// [`fixed_resolution_compare`] keeping the solver reports.
pub fn fixed_resolution_runs(
    prob: &ProblemInstance,
    n_points: usize,
    csnr_db: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<CompareRun>> {
    if prob.m() != 1 || prob.k() != 1 {
        return Err(Error::param("problem", "fixed-resolution comparison needs a scalar problem"));
    }
    let knots = KnotEncoder::spanning(prob.source(), n_points, 1e-3)?;
    let lumped = lumped_source(prob.source(), knots.knots())?;
    let var_x = prob.source().variance_per_dim();
    let var_z = prob.noise().variance_per_dim();
    let cap = 0.5 * var_x / var_z;
    let mut rows = Vec::with_capacity(csnr_db.len());
    for &c in csnr_db {
        let target = var_z * from_db(c);
        let lambda0 = opta_slope_lambda(var_x, var_z, 1, 1, target);
        let acfg = cfg.clone().annealed_below(lambda0, cap)?;
        let disc = ProblemInstance::new(lumped.clone(), prob.noise().clone(), lambda0)?;
        let gain = (target / var_x).sqrt();
        let base = solve_for_power(&disc, &acfg, &Init::Linear { gain }, target)?;
        let codebook = base.final_encoder.values().to_vec();
        let g_base = knots.expand(&codebook)?;
        let baseline_snr_db = snr_at_power(prob, &g_base, target)?;
        let scaled = g_base.scaled((target / prob.power(&g_base)?).sqrt());
        let h_ml = ml_decoder(prob, &scaled)?;
        let baseline_ml_snr_db = db(var_x / prob.distortion(&scaled, &h_ml)?);

        let mut pcfg = cfg.clone();
        pcfg.anneal_schedule.clear();
        let cont = prob.with_lambda(base.lambda_used)?;
        let prop = descend_for_power(&cont, &knots, codebook, &pcfg, target, POWER_TOLERANCE)?;
        let proposed_snr_db = snr_at_power(prob, &prop.final_encoder, target)?;
        let row = CompareRow { csnr_db: c, n_points, proposed_snr_db, baseline_snr_db, baseline_ml_snr_db };
        rows.push(CompareRun { row, baseline: base, proposed: prop });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::make_gaussian;
    use crate::descent::descend;

    fn fine() -> GridSpec {
        GridSpec::symmetric(5.0, 0.05, 1).unwrap()
    }

    #[test]
    fn knots_expand_linearly_and_clamp() {
        let k = KnotEncoder::new(-2.0, 2.0, 5, fine()).unwrap();
        let g = k.expand(&[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!((g.eval(&[0.55]).unwrap()[0] - 0.55).abs() < 1e-12);
        assert!((g.eval(&[4.0]).unwrap()[0] - 2.0).abs() < 1e-12);
        assert!(KnotEncoder::new(-1.0, 1.0, 1, fine()).is_err());
    }

    #[test]
    fn pull_back_is_the_adjoint_of_expand() {
        let k = KnotEncoder::new(-2.0, 2.5, 7, fine()).unwrap();
        let v: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin()).collect();
        let u = SampledMapping::from_fn(fine(), 1, |x, y| y[0] = (x[0] * 1.3).cos()).unwrap();
        let lhs: f64 = k.expand(&v).unwrap().values().iter().zip(u.values()).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(k.pull_back(&u)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn quantiles_of_a_gaussian() {
        let d = make_gaussian(1.0, &GridSpec::symmetric(6.0, 0.01, 1).unwrap()).unwrap();
        let (lo, hi) = quantile_range(&d, 1e-3).unwrap();
        assert!((lo + 3.09).abs() < 0.02 && (hi - 3.09).abs() < 0.02, "{lo} {hi}");
    }

    #[test]
    fn lumping_keeps_mass_and_mean() {
        let d = make_gaussian(1.0, &fine()).unwrap();
        let k = KnotEncoder::spanning(&d, 10, 1e-3).unwrap();
        let l = lumped_source(&d, k.knots()).unwrap();
        assert!((l.mass() - 1.0).abs() < 1e-12);
        assert!(l.mean()[0].abs() < 1e-9, "{}", l.mean()[0]);
    }

    #[test]
    fn knot_descent_on_gaussian_stays_near_linear_optimum() {
        let grid = GridSpec::symmetric(5.0, 0.02, 1).unwrap();
        let x = make_gaussian(1.0, &grid).unwrap();
        let p = ProblemInstance::new(x.clone(), x, 0.25).unwrap();
        let k = KnotEncoder::spanning(p.source(), 10, 1e-3).unwrap();
        let v0: Vec<f64> = k.knot_positions().iter().map(|x| 0.8 * x).collect();
        let r = descend(&p, &k, v0, &SolverConfig::default()).unwrap();
        assert!(r.distortion < 0.51, "{}", r.distortion);
    }
}
