//! Axis-aligned box domains and their uniform node grids.
//!
//! Nodes sit at `lower + i * h` for `i = 0..=n_cells` on every axis and are
//! ordered lexicographically with the first axis running fastest, so node
//! `(i, j)` has index `i + (n_cells[0] + 1) * j`.
//!
//! Boundary nodes carry an outward unit normal. On a face it is the face
//! normal; at a corner it is the normalized sum of the two face normals.

use crate::error::{Error, Result};

/// Minimum number of cells per axis accepted by [`Grid::new`].
pub const MIN_CELLS: usize = 8;

/// A box `[lower_0, upper_0] x ... ` in one or two dimensions.
///
/// `truncates_full_space` marks a large box standing in for the whole space;
/// the solvers still impose discrete Neumann conditions on it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    truncates_full_space: bool,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, truncates_full_space: bool) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidParams(format!(
                "lower has {} entries but upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        let dim = lower.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDim(dim));
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidBox {
                    axis,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(Self {
            lower,
            upper,
            truncates_full_space,
        })
    }

    /// The unit interval or unit square.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim], false)
    }

    /// The symmetric box `[-half_width, half_width]^dim` flagged as a
    /// truncation of the whole space.
    pub fn truncated(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim], true)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn truncates_full_space(&self) -> bool {
        self.truncates_full_space
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.length(a)).product()
    }

    /// True when the closed ball of radius `r` about the origin lies in the box.
    pub fn contains_origin_ball(&self, r: f64) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .all(|(&lo, &hi)| lo <= -r && hi >= r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Interior,
    Face,
    Corner,
}

/// Uniform tensor grid on a [`BoxDomain`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: BoxDomain,
    n_cells: Vec<usize>,
    h: Vec<f64>,
    classes: Vec<NodeClass>,
    normals: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(domain: BoxDomain, n_cells: &[usize]) -> Result<Self> {
        let dim = domain.dim();
        if n_cells.len() != dim {
            return Err(Error::InvalidParams(format!(
                "expected {dim} cell counts, got {}",
                n_cells.len()
            )));
        }
        if let Some((axis, &cells)) = n_cells.iter().enumerate().find(|(_, &c)| c < MIN_CELLS) {
            return Err(Error::TooCoarse { axis, cells });
        }
        let h: Vec<f64> = (0..dim)
            .map(|a| domain.length(a) / n_cells[a] as f64)
            .collect();
        let shape: Vec<usize> = n_cells.iter().map(|c| c + 1).collect();
        let count: usize = shape.iter().product();

        let mut classes = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        for idx in 0..count {
            let mut normal = [0.0f64; 2];
            let mut faces = 0;
            let mut rem = idx;
            for (axis, &len) in shape.iter().enumerate() {
                let i = rem % len;
                rem /= len;
                if i == 0 {
                    normal[axis] = -1.0;
                    faces += 1;
                } else if i == len - 1 {
                    normal[axis] = 1.0;
                    faces += 1;
                }
            }
            let class = match faces {
                0 => NodeClass::Interior,
                1 => NodeClass::Face,
                _ => NodeClass::Corner,
            };
            let norm = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
            if norm > 0.0 {
                normal[0] /= norm;
                normal[1] /= norm;
            }
            classes.push(class);
            normals.push(normal);
        }

        let mut grid = Self {
            domain,
            n_cells: n_cells.to_vec(),
            h,
            classes,
            normals,
            weights: Vec::new(),
        };
        grid.weights = grid.trapezoid_weights();
        Ok(grid)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_cells(&self) -> &[usize] {
        &self.n_cells
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Largest spacing over the axes.
    pub fn h_max(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    /// Nodes along `axis` (`n_cells[axis] + 1`).
    pub fn nodes_along(&self, axis: usize) -> usize {
        if axis < self.dim() {
            self.n_cells[axis] + 1
        } else {
            1
        }
    }

    pub fn node_count(&self) -> usize {
        self.classes.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nodes_along(0) * j
    }

    /// Per-axis integer position of a node; the second entry is 0 in 1D.
    pub fn position(&self, idx: usize) -> [usize; 2] {
        let nx = self.nodes_along(0);
        [idx % nx, idx / nx]
    }

    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let pos = self.position(idx);
        let mut x = [0.0; 2];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim()) {
            *xa = self.domain.lower[axis] + pos[axis] as f64 * self.h[axis];
        }
        x
    }

    pub fn class(&self, idx: usize) -> NodeClass {
        self.classes[idx]
    }

    /// Outward unit normal at a boundary node, `None` in the interior.
    pub fn normal(&self, idx: usize) -> Option<[f64; 2]> {
        match self.classes[idx] {
            NodeClass::Interior => None,
            _ => Some(self.normals[idx]),
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.classes[idx] != NodeClass::Interior
    }

    /// Neighbour of `idx` one step along `axis` in direction `step` (±1),
    /// or `None` past the boundary.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> Option<usize> {
        let pos = self.position(idx)[axis] as isize + step;
        if pos < 0 || pos >= self.nodes_along(axis) as isize {
            return None;
        }
        let stride = if axis == 0 { 1 } else { self.nodes_along(0) };
        Some((idx as isize + step * stride as isize) as usize)
    }

    /// Neighbour with even reflection across the faces: the ghost node
    /// beyond a face is the mirror image of the first interior node.
    pub fn reflected_neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        self.neighbor(idx, axis, step)
            .or_else(|| self.neighbor(idx, axis, -step))
            .expect("grid has at least 8 cells per axis")
    }

    /// Trapezoidal tensor quadrature weights; they sum to the box volume.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn trapezoid_weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = (0..self.dim())
            .map(|a| {
                let n = self.nodes_along(a);
                (0..n)
                    .map(|i| {
                        if i == 0 || i == n - 1 {
                            0.5 * self.h[a]
                        } else {
                            self.h[a]
                        }
                    })
                    .collect()
            })
            .collect();
        (0..self.node_count())
            .map(|idx| {
                let pos = self.position(idx);
                per_axis
                    .iter()
                    .enumerate()
                    .map(|(a, w)| w[pos[a]])
                    .product()
            })
            .collect()
    }

    /// Node coordinate along one axis (`x[i]`).
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.domain.lower[axis] + i as f64 * self.h[axis]
    }
}
