//! Multilinear interpolation on a [`GridSpec`].

use crate::grid::GridSpec;

pub(crate) const MAX_DIM: usize = 4;

/// Position of a query inside the lattice: lower-corner index and fractional offset per axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Locus {
    pub dim: usize,
    pub idx: [usize; MAX_DIM],
    pub frac: [f64; MAX_DIM],
    /// False when the query was clamped on that axis (the interpolant is flat there).
    pub interior: [bool; MAX_DIM],
}

/// Locates `point`; queries outside the domain are clamped to the nearest face.
pub(crate) fn locate_clamped(grid: &GridSpec, point: &[f64]) -> Locus {
    let mut loc = Locus { dim: grid.dim(), idx: [0; MAX_DIM], frac: [0.0; MAX_DIM], interior: [true; MAX_DIM] };
    for a in 0..grid.dim() {
        let n = grid.counts()[a];
        let t = (point[a] - grid.lower()[a]) / grid.step();
        let (i, f, inside) = split_axis(t, n);
        loc.idx[a] = i;
        loc.frac[a] = f;
        loc.interior[a] = inside;
    }
    loc
}

/// Locates `point`, or `None` when it lies outside the domain.
pub(crate) fn locate_inside(grid: &GridSpec, point: &[f64]) -> Option<Locus> {
    let loc = locate_clamped(grid, point);
    if loc.interior[..loc.dim].iter().all(|&b| b) {
        Some(loc)
    } else {
        None
    }
}

#[inline]
pub(crate) fn split_axis(t: f64, n: usize) -> (usize, f64, bool) {
    let last = (n - 1) as f64;
    // tolerate round-off right at the faces
    let eps = 1e-9;
    if t < -eps || t.is_nan() {
        (0, 0.0, false)
    } else if t > last + eps {
        (n - 2, 1.0, false)
    } else {
        let tc = t.clamp(0.0, last);
        let i = (tc.floor() as usize).min(n - 2);
        (i, tc - i as f64, true)
    }
}

/// Interpolates a field with `width` components per node into `out`.
pub(crate) fn interpolate(grid: &GridSpec, values: &[f64], width: usize, loc: &Locus, out: &mut [f64]) {
    out[..width].iter_mut().for_each(|o| *o = 0.0);
    let d = loc.dim;
    let counts = grid.counts();
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut flat = 0usize;
        for a in 0..d {
            let hi = (corner >> (d - 1 - a)) & 1 == 1;
            let i = loc.idx[a] + hi as usize;
            w *= if hi { loc.frac[a] } else { 1.0 - loc.frac[a] };
            flat = flat * counts[a] + i;
        }
        if w == 0.0 {
            continue;
        }
        let base = flat * width;
        for c in 0..width {
            out[c] += w * values[base + c];
        }
    }
}

/// Interpolated value and Jacobian. `jac` is row-major `width × dim`.
pub(crate) fn interpolate_with_jacobian(
    grid: &GridSpec,
    values: &[f64],
    width: usize,
    loc: &Locus,
    out: &mut [f64],
    jac: &mut [f64],
) {
    let d = loc.dim;
    out[..width].iter_mut().for_each(|o| *o = 0.0);
    jac[..width * d].iter_mut().for_each(|o| *o = 0.0);
    let counts = grid.counts();
    let inv = 1.0 / grid.step();
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut flat = 0usize;
        let mut axis_w = [1.0f64; MAX_DIM];
        let mut hi_bits = [false; MAX_DIM];
        for a in 0..d {
            let hi = (corner >> (d - 1 - a)) & 1 == 1;
            hi_bits[a] = hi;
            axis_w[a] = if hi { loc.frac[a] } else { 1.0 - loc.frac[a] };
            w *= axis_w[a];
            flat = flat * counts[a] + loc.idx[a] + hi as usize;
        }
        let base = flat * width;
        for c in 0..width {
            out[c] += w * values[base + c];
        }
        for a in 0..d {
            if !loc.interior[a] {
                continue;
            }
            let mut dw = if hi_bits[a] { inv } else { -inv };
            for b in 0..d {
                if b != a {
                    dw *= axis_w[b];
                }
            }
            if dw == 0.0 {
                continue;
            }
            for c in 0..width {
                jac[c * d + a] += dw * values[base + c];
            }
        }
    }
}

/// Clamped linear interpolation along a single axis for fields of width ≤ 2.
///
/// Returns the value and its derivative; matches [`interpolate_with_jacobian`] on 1-D grids.
#[inline]
pub(crate) fn lerp_axis(
    values: &[f64],
    width: usize,
    stride: usize,
    lower: f64,
    step: f64,
    n: usize,
    y: f64,
) -> ([f64; 2], [f64; 2]) {
    let (i, f, inside) = split_axis((y - lower) / step, n);
    let a = i * stride * width;
    let b = (i + 1) * stride * width;
    let mut val = [0.0; 2];
    let mut der = [0.0; 2];
    for c in 0..width {
        let (va, vb) = (values[a + c], values[b + c]);
        val[c] = (1.0 - f) * va + f * vb;
        if inside {
            der[c] = (vb - va) / step;
        }
    }
    (val, der)
}

/// A field tabulated along one axis: `width` components per node, node `i` at `lower + i·step`.
#[derive(Clone, Copy)]
pub(crate) struct Line<'a> {
    pub values: &'a [f64],
    pub width: usize,
    pub lower: f64,
    pub step: f64,
    pub n: usize,
}

impl<'a> Line<'a> {
    pub fn of(grid: &GridSpec, values: &'a [f64], width: usize) -> Line<'a> {
        Line { values, width, lower: grid.lower()[0], step: grid.step(), n: grid.counts()[0] }
    }

    /// Calls `f(j, value, derivative)` for the interpolant at `start + j·step_z`, `j < count`.
    ///
    /// When the query lattice shares this line's step and stays inside it, the
    /// interpolation weights are the same for every `j` and are computed once.
    #[inline]
    pub fn sweep<F>(&self, start: f64, step_z: f64, count: usize, mut f: F)
    where
        F: FnMut(usize, &[f64; 2], &[f64; 2]),
    {
        let w = self.width;
        let t0 = (start - self.lower) / self.step;
        let base = t0.floor();
        let aligned = ((step_z - self.step) / self.step).abs() < 1e-12;
        if aligned && base >= 0.0 && (base as usize) + count < self.n {
            let i0 = base as usize;
            let fr = t0 - base;
            let inv = 1.0 / self.step;
            let mut val = [0.0; 2];
            let mut der = [0.0; 2];
            for j in 0..count {
                let a = (i0 + j) * w;
                for c in 0..w {
                    let (va, vb) = (self.values[a + c], self.values[a + w + c]);
                    val[c] = va + fr * (vb - va);
                    der[c] = (vb - va) * inv;
                }
                f(j, &val, &der);
            }
        } else {
            for j in 0..count {
                let y = start + j as f64 * step_z;
                let (val, der) = lerp_axis(self.values, w, 1, self.lower, self.step, self.n, y);
                f(j, &val, &der);
            }
        }
    }
}
