use crate::error::{Error, Result};

/// Upper bound on the number of points in any tabulation grid.
pub const MAX_GRID_POINTS: usize = 1 << 24;

/// Uniform rectangular lattice in `dim` dimensions with one step shared by all axes.
///
/// Points are stored row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    step: f64,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, step: f64, counts: Vec<usize>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::param("dim", "grid needs at least one axis"));
        }
        if lower.len() != counts.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: counts.len() });
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("step", format!("must be positive and finite, got {step}")));
        }
        if lower.iter().any(|l| !l.is_finite()) {
            return Err(Error::param("lower", "bounds must be finite"));
        }
        if let Some(&c) = counts.iter().find(|&&c| c < 2) {
            return Err(Error::param("counts", format!("every axis needs at least 2 points, got {c}")));
        }
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .unwrap_or(usize::MAX);
        if total > MAX_GRID_POINTS {
            return Err(Error::GridTooLarge { points: total, cap: MAX_GRID_POINTS });
        }
        Ok(GridSpec { lower, step, counts })
    }

    /// Grid on `[-halfwidth, halfwidth]^dim` that contains the origin as a node.
    ///
    /// The half-width is rounded up to a whole number of steps.
    pub fn symmetric(halfwidth: f64, step: f64, dim: usize) -> Result<Self> {
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(Error::param("halfwidth", format!("must be positive, got {halfwidth}")));
        }
        if !(step > 0.0) {
            return Err(Error::param("step", format!("must be positive, got {step}")));
        }
        let half = (halfwidth / step - 1e-9).ceil().max(1.0) as usize;
        let n = 2 * half + 1;
        GridSpec::new(vec![-(half as f64) * step; dim], step, vec![n; dim])
    }

    /// Grid covering `[lo, hi]` along one axis, with nodes at `lo + i*step`.
    pub fn span_1d(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::param("bounds", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let n = ((hi - lo) / step - 1e-9).ceil() as usize + 1;
        GridSpec::new(vec![lo], step, vec![n.max(2)])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.lower[axis] + (self.counts[axis] - 1) as f64 * self.step
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `step^dim` of the Riemann sums.
    pub fn cell_volume(&self) -> f64 {
        self.step.powi(self.dim() as i32)
    }

    /// Coordinates of the nodes along one axis.
    pub fn axis_values(&self, axis: usize) -> Vec<f64> {
        (0..self.counts[axis])
            .map(|i| self.lower[axis] + i as f64 * self.step)
            .collect()
    }

    /// Splits a flat point index into per-axis indices.
    pub fn unravel(&self, mut index: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            out[axis] = index % self.counts[axis];
            index /= self.counts[axis];
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &c)| acc * c + i)
    }

    /// Writes the coordinates of point `index` into `out`.
    pub fn point(&self, index: usize, out: &mut [f64]) {
        let mut rest = index;
        for axis in (0..self.dim()).rev() {
            let i = rest % self.counts[axis];
            rest /= self.counts[axis];
            out[axis] = self.lower[axis] + i as f64 * self.step;
        }
    }

    pub fn point_vec(&self, index: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point(index, &mut p);
        p
    }

    /// All point coordinates, flattened point-major.
    pub fn coordinates(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.len() * d];
        for (i, chunk) in out.chunks_mut(d).enumerate() {
            self.point(i, chunk);
        }
        out
    }

    /// Cartesian product `self × other`; both grids must share the step.
    pub fn product(&self, other: &GridSpec) -> Result<GridSpec> {
        if !same_step(self.step, other.step) {
            return Err(Error::param(
                "step",
                format!("product grids must share the step ({} vs {})", self.step, other.step),
            ));
        }
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut counts = self.counts.clone();
        counts.extend_from_slice(&other.counts);
        GridSpec::new(lower, self.step, counts)
    }

    /// The one-dimensional grid along `axis`.
    pub fn axis_grid(&self, axis: usize) -> GridSpec {
        GridSpec {
            lower: vec![self.lower[axis]],
            step: self.step,
            counts: vec![self.counts[axis]],
        }
    }

    /// Smallest half-width of the box around the origin.
    pub fn min_halfwidth(&self) -> f64 {
        (0..self.dim())
            .map(|a| (-self.lower[a]).min(self.upper(a)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.iter().enumerate().all(|(a, &x)| {
            x >= self.lower[a] - 1e-12 * self.step && x <= self.upper(a) + 1e-12 * self.step
        })
    }
}

pub(crate) fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_grid_hits_bounds_and_origin() {
        let g = GridSpec::symmetric(5.0, 0.01, 1).unwrap();
        assert_eq!(g.counts(), &[1001]);
        assert!((g.lower()[0] + 5.0).abs() < 1e-12);
        assert!((g.upper(0) - 5.0).abs() < 1e-9);
        assert_eq!(g.point_vec(500), vec![0.0]);
    }

    #[test]
    fn upper_matches_lower_plus_span() {
        let g = GridSpec::new(vec![-1.0, 2.0], 0.5, vec![5, 3]).unwrap();
        assert_eq!(g.upper(0), 1.0);
        assert_eq!(g.upper(1), 3.0);
        assert_eq!(g.len(), 15);
        assert_eq!(g.point_vec(4), vec![-0.5, 2.5]);
        assert_eq!(g.point_vec(14), vec![1.0, 3.0]);
    }

    #[test]
    fn ravel_unravel_roundtrip() {
        let g = GridSpec::new(vec![0.0, 0.0], 1.0, vec![4, 7]).unwrap();
        let mut idx = [0usize; 2];
        for i in 0..g.len() {
            g.unravel(i, &mut idx);
            assert_eq!(g.ravel(&idx), i);
        }
    }

    #[test]
    fn rejects_degenerate_axes() {
        assert!(GridSpec::new(vec![0.0], 0.1, vec![1]).is_err());
        assert!(GridSpec::new(vec![0.0], 0.0, vec![3]).is_err());
        assert!(GridSpec::new(vec![0.0], -1.0, vec![3]).is_err());
        assert!(GridSpec::new(vec![0.0, 1.0], 0.1, vec![3]).is_err());
    }

    #[test]
    fn rejects_oversized_grids() {
        let err = GridSpec::new(vec![0.0; 3], 0.01, vec![1001; 3]).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }));
    }

    #[test]
    fn product_requires_shared_step() {
        let a = GridSpec::symmetric(1.0, 0.1, 1).unwrap();
        let b = GridSpec::symmetric(1.0, 0.2, 1).unwrap();
        assert!(a.product(&b).is_err());
        let p = a.product(&a).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.len(), 21 * 21);
    }
}
