//! Uniform symmetric lattices on axis-aligned boxes.
//!
//! Points sit at integer multiples of the spacing with the origin always a
//! lattice point; the cell of a point is the axis-aligned cube of side `h`
//! centered on it, so the cells tile the box exactly.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric lattice: per axis the points are `(i - half) h` for
/// `i = 0..=2 half`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<F: Real> {
    pub dim: usize,
    pub spacing: F,
    half: [usize; 3],
}

impl<F: Real> Grid<F> {
    /// Grid covering `[-half_width, half_width]^dim` with the given spacing.
    /// The half width is rounded up to a whole number of steps.
    pub fn symmetric(dim: usize, half_width: F, spacing: F) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Unsupported(format!("dimension {dim} not in 1..=3")));
        }
        if !(spacing > F::zero()) || !(half_width >= spacing) {
            return Err(Error::InvalidParam(format!(
                "grid needs spacing > 0 and half width >= spacing, got ({half_width}, {spacing})"
            )));
        }
        let n = (half_width / spacing).as_f64() - 1e-9;
        let half_n = n.ceil() as usize;
        let mut half = [0usize; 3];
        half[..dim].iter_mut().for_each(|h| *h = half_n);
        Ok(Grid { dim, spacing, half })
    }

    /// Points along one axis.
    pub fn axis_points(&self, axis: usize) -> usize {
        2 * self.half[axis] + 1
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        (0..self.dim).map(|a| self.axis_points(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half width actually covered (outer cell faces).
    pub fn half_width(&self) -> F {
        F::of_usize(self.half[0]) * self.spacing
    }

    pub fn cell_volume(&self) -> F {
        let mut v = F::one();
        for _ in 0..self.dim {
            v *= self.spacing;
        }
        v
    }

    /// Signed lattice coordinates of a flat index, in units of the spacing.
    pub fn decompose(&self, flat: usize) -> [isize; 3] {
        let mut rem = flat;
        let mut c = [0isize; 3];
        for a in (0..self.dim).rev() {
            let n = self.axis_points(a);
            c[a] = (rem % n) as isize - self.half[a] as isize;
            rem /= n;
        }
        c
    }

    /// Flat index of signed lattice coordinates, if inside the box.
    pub fn compose(&self, c: [isize; 3]) -> Option<usize> {
        let mut flat = 0usize;
        for a in 0..self.dim {
            let i = c[a] + self.half[a] as isize;
            if i < 0 || i as usize >= self.axis_points(a) {
                return None;
            }
            flat = flat * self.axis_points(a) + i as usize;
        }
        Some(flat)
    }

    /// Coordinates of a lattice point.
    pub fn point(&self, flat: usize) -> [F; 3] {
        let c = self.decompose(flat);
        let mut p = [F::zero(); 3];
        for a in 0..self.dim {
            p[a] = F::of(c[a] as f64) * self.spacing;
        }
        p
    }

    /// Flat index of the origin.
    pub fn origin_index(&self) -> usize {
        self.compose([0; 3]).expect("origin is always a lattice point")
    }

    /// Index of the lattice point nearest to `p`, if `p` lies inside the
    /// covered box (up to half a cell beyond the outer points).
    pub fn index_near(&self, p: &[F; 3]) -> Option<usize> {
        let mut c = [0isize; 3];
        for a in 0..self.dim {
            let steps = (p[a] / self.spacing).as_f64().round();
            c[a] = steps as isize;
        }
        self.compose(c)
    }
}

/// Offset lattice for translation-invariant kernels: displacements
/// `j - i` between any two points of a grid, per axis `-(P-1)..=(P-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetGrid {
    pub dim: usize,
    half: [usize; 3],
}

impl OffsetGrid {
    pub fn covering(grid_points_per_axis: [usize; 3], dim: usize) -> Self {
        let mut half = [0usize; 3];
        for a in 0..dim {
            half[a] = grid_points_per_axis[a] - 1;
        }
        OffsetGrid { dim, half }
    }

    pub fn axis_points(&self, axis: usize) -> usize {
        2 * self.half[axis] + 1
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|a| self.axis_points(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half(&self, axis: usize) -> usize {
        self.half[axis]
    }

    pub fn decompose(&self, flat: usize) -> [isize; 3] {
        let mut rem = flat;
        let mut c = [0isize; 3];
        for a in (0..self.dim).rev() {
            let n = self.axis_points(a);
            c[a] = (rem % n) as isize - self.half[a] as isize;
            rem /= n;
        }
        c
    }

    pub fn compose(&self, c: [isize; 3]) -> Option<usize> {
        let mut flat = 0usize;
        for a in 0..self.dim {
            let i = c[a] + self.half[a] as isize;
            if i < 0 || i as usize >= self.axis_points(a) {
                return None;
            }
            flat = flat * self.axis_points(a) + i as usize;
        }
        Some(flat)
    }

    pub fn origin_index(&self) -> usize {
        self.compose([0; 3]).expect("origin is always an offset")
    }
}
