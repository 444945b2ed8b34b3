//! Rectangles and uniform node grids in Riemann-invariant coordinates.
//!
//! Everything downstream works on a closed rectangle 𝒲 = [w⎵, w̄] × [z⎵, z̄]
//! sampled on a uniform `nw × nz` node grid (endpoints included). Fields are
//! flat `Vec<f64>` in w-major order; bilinear interpolation is the only
//! lookup mode entropy tables need.

use crate::error::{Error, Result};

/// Closed axis-aligned rectangle in (w, z) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub w_min: f64,
    pub w_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Rect {
    pub fn new(w_min: f64, w_max: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let r = Rect { w_min, w_max, z_min, z_max };
        if !(w_min.is_finite() && w_max.is_finite() && z_min.is_finite() && z_max.is_finite()) {
            return Err(Error::config("rectangle bounds must be finite"));
        }
        if w_min >= w_max || z_min >= z_max {
            return Err(Error::config(format!(
                "degenerate rectangle [{w_min}, {w_max}] x [{z_min}, {z_max}]"
            )));
        }
        Ok(r)
    }

    pub fn w_span(&self) -> f64 {
        self.w_max - self.w_min
    }

    pub fn z_span(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn contains(&self, w: f64, z: f64, tol: f64) -> bool {
        w >= self.w_min - tol && w <= self.w_max + tol && z >= self.z_min - tol && z <= self.z_max + tol
    }

    /// Rectangle with the roles of w and z exchanged.
    pub fn swapped(&self) -> Rect {
        Rect { w_min: self.z_min, w_max: self.z_max, z_min: self.w_min, z_max: self.w_max }
    }
}

/// Uniform node grid over a rectangle; `nw`, `nz` count nodes, not cells.
#[derive(Debug, Clone, Copy)]
pub struct Grid2 {
    pub rect: Rect,
    pub nw: usize,
    pub nz: usize,
}

impl Grid2 {
    pub fn new(rect: Rect, nw: usize, nz: usize) -> Result<Self> {
        if nw < 2 || nz < 2 {
            return Err(Error::config(format!("grid needs at least 2 nodes per axis, got {nw}x{nz}")));
        }
        Ok(Grid2 { rect, nw, nz })
    }

    pub fn dw(&self) -> f64 {
        self.rect.w_span() / (self.nw - 1) as f64
    }

    pub fn dz(&self) -> f64 {
        self.rect.z_span() / (self.nz - 1) as f64
    }

    pub fn w(&self, i: usize) -> f64 {
        self.rect.w_min + self.dw() * i as f64
    }

    pub fn z(&self, k: usize) -> f64 {
        self.rect.z_min + self.dz() * k as f64
    }

    #[inline]
    pub fn idx(&self, i: usize, k: usize) -> usize {
        debug_assert!(i < self.nw && k < self.nz);
        i * self.nz + k
    }

    pub fn len(&self) -> usize {
        self.nw * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scalar field sampled on a `Grid2`.
#[derive(Debug, Clone)]
pub struct Field2 {
    pub grid: Grid2,
    pub data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(grid: Grid2) -> Self {
        Field2 { grid, data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid2, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = vec![0.0; grid.len()];
        for i in 0..grid.nw {
            for k in 0..grid.nz {
                data[grid.idx(i, k)] = f(grid.w(i), grid.z(k));
            }
        }
        Field2 { grid, data }
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.data[self.grid.idx(i, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        let idx = self.grid.idx(i, k);
        self.data[idx] = v;
    }

    /// Bilinear interpolation; queries are clamped to the rectangle so that
    /// roundoff just outside the boundary reads the boundary value.
    pub fn bilinear(&self, w: f64, z: f64) -> f64 {
        let g = &self.grid;
        let fw = ((w - g.rect.w_min) / g.dw()).clamp(0.0, (g.nw - 1) as f64);
        let fz = ((z - g.rect.z_min) / g.dz()).clamp(0.0, (g.nz - 1) as f64);
        let i = (fw as usize).min(g.nw - 2);
        let k = (fz as usize).min(g.nz - 2);
        let s = fw - i as f64;
        let t = fz - k as f64;
        let v00 = self.at(i, k);
        let v10 = self.at(i + 1, k);
        let v01 = self.at(i, k + 1);
        let v11 = self.at(i + 1, k + 1);
        (1.0 - s) * ((1.0 - t) * v00 + t * v01) + s * ((1.0 - t) * v10 + t * v11)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Trapezoid weights for `n` uniformly spaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n >= 1 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Trapezoid weights for arbitrary sorted abscissae (used for snapshot times).
pub fn trapezoid_weights_irregular(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    for i in 0..n - 1 {
        let h = t[i + 1] - t[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_rejects_degenerate() {
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 1.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn bilinear_reproduces_affine_fields() {
        let rect = Rect::new(-1.0, 1.0, 0.0, 2.0).unwrap();
        let grid = Grid2::new(rect, 9, 13).unwrap();
        let f = Field2::from_fn(grid, |w, z| 2.0 * w - 0.5 * z + 3.0);
        for &(w, z) in &[(-0.73, 0.11), (0.0, 1.0), (0.999, 1.999), (-1.0, 0.0)] {
            let exact = 2.0 * w - 0.5 * z + 3.0;
            assert!((f.bilinear(w, z) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn trapezoid_weights_integrate_linear_exactly() {
        let w = trapezoid_weights(11, 0.1);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let wi = trapezoid_weights_irregular(&t);
        let integral: f64 = t.iter().zip(&wi).map(|(x, w)| x * w).sum();
        assert!((integral - 0.5).abs() < 1e-14);
    }
}
