//! Node-indexed fields at one time instant, and time-indexed trajectories.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    time: f64,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput {
                what: "scalar field",
                node,
            });
        }
        Ok(Self { grid, values, time })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Arc<Grid>, time: f64, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.node_count()).map(|i| f(grid.coords(i))).collect();
        Self::new(grid, values, time)
    }

    pub fn constant(grid: Arc<Grid>, value: f64, time: f64) -> Result<Self> {
        let n = grid.node_count();
        Self::new(grid, vec![value; n], time)
    }

    /// Builds a field without re-validating; used internally where values are
    /// known to be finite.
    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values, time }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Minimum value and its node; ties resolve to the lowest index.
    pub fn min_with_index(&self) -> (f64, usize) {
        argmin(&self.values)
    }

    /// Maximum value and its node; ties resolve to the lowest index.
    pub fn max_with_index(&self) -> (f64, usize) {
        let (v, i) = argmin_by(&self.values, |x| -x);
        (-v, i)
    }

    pub fn min(&self) -> f64 {
        self.min_with_index().0
    }

    pub fn max(&self) -> f64 {
        self.max_with_index().0
    }

    /// Quadrature-weighted integral over the box.
    pub fn integral(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Quadrature-weighted inner product with another field on the same grid.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let values = self.values.iter().map(|&v| f(v)).collect();
        ScalarField::from_parts(self.grid.clone(), values, self.time)
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ScalarField::from_parts(self.grid.clone(), values, self.time)
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        self.map(|v| v * factor)
    }
}

/// Per-node vectors; the second component is zero in 1D.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    values: Vec<[f64; 2]>,
    time: f64,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, values: Vec<[f64; 2]>, time: f64) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(node) = values
            .iter()
            .position(|v| !(v[0].is_finite() && v[1].is_finite()))
        {
            return Err(Error::NonFiniteInput {
                what: "vector field",
                node,
            });
        }
        Ok(Self { grid, values, time })
    }

    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<[f64; 2]>, time: f64) -> Self {
        Self { grid, values, time }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Euclidean magnitude at every node.
    pub fn magnitude(&self) -> ScalarField {
        let values = self
            .values
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
            .collect();
        ScalarField::from_parts(self.grid.clone(), values, self.time)
    }

    /// Squared magnitude at every node.
    pub fn norm_sq(&self) -> ScalarField {
        let values = self
            .values
            .iter()
            .map(|v| v[0] * v[0] + v[1] * v[1])
            .collect();
        ScalarField::from_parts(self.grid.clone(), values, self.time)
    }

    pub fn dot(&self, other: &VectorField) -> ScalarField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
            .collect();
        ScalarField::from_parts(self.grid.clone(), values, self.time)
    }

    pub fn scaled(&self, factor: f64) -> VectorField {
        let values = self
            .values
            .iter()
            .map(|v| [v[0] * factor, v[1] * factor])
            .collect();
        VectorField::from_parts(self.grid.clone(), values, self.time)
    }
}

/// Symmetric matrix per node stored as its upper triangle `[xx, xy, yy]`;
/// in 1D only `xx` is used.
#[derive(Debug, Clone)]
pub struct SymMatrixField {
    grid: Arc<Grid>,
    values: Vec<[f64; 3]>,
    time: f64,
}

impl SymMatrixField {
    pub fn new(grid: Arc<Grid>, values: Vec<[f64; 3]>, time: f64) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteInput {
                what: "matrix field",
                node,
            });
        }
        Ok(Self { grid, values, time })
    }

    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<[f64; 3]>, time: f64) -> Self {
        Self { grid, values, time }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Trace at every node.
    pub fn trace(&self) -> ScalarField {
        let dim = self.grid.dim();
        let values = self
            .values
            .iter()
            .map(|m| if dim == 1 { m[0] } else { m[0] + m[2] })
            .collect();
        ScalarField::from_parts(self.grid.clone(), values, self.time)
    }

    /// Squared Frobenius norm `|M|^2` at every node.
    pub fn frobenius_sq(&self) -> ScalarField {
        let dim = self.grid.dim();
        let values = self
            .values
            .iter()
            .map(|m| {
                if dim == 1 {
                    m[0] * m[0]
                } else {
                    m[0] * m[0] + 2.0 * m[1] * m[1] + m[2] * m[2]
                }
            })
            .collect();
        ScalarField::from_parts(self.grid.clone(), values, self.time)
    }
}

/// Fields of one quantity at strictly increasing times on a shared grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    fields: Vec<ScalarField>,
    pub meta: TrajectoryMeta,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryMeta {
    /// Hopf-Cole shift used downstream, when one has been fixed.
    pub delta: Option<f64>,
    /// Identifier of the potential the trajectory was computed with.
    pub potential: String,
    /// Whether every solver step was stored (required by integral checks).
    pub every_step: bool,
}

/// Relative tolerance for matching a requested time against stored times.
const TIME_MATCH: f64 = 1e-9;

impl Trajectory {
    pub fn new(fields: Vec<ScalarField>, meta: TrajectoryMeta) -> Result<Self> {
        let Some(first) = fields.first() else {
            return Err(Error::InvalidParams("empty trajectory".into()));
        };
        if first.time() < 0.0 {
            return Err(Error::InvalidParams(format!(
                "trajectory starts at negative time {}",
                first.time()
            )));
        }
        let grid = first.grid().clone();
        for pair in fields.windows(2) {
            if pair[1].time() <= pair[0].time() {
                return Err(Error::InvalidParams(format!(
                    "trajectory times not increasing: {} then {}",
                    pair[0].time(),
                    pair[1].time()
                )));
            }
        }
        if fields.iter().any(|f| !Arc::ptr_eq(f.grid(), &grid) && **f.grid() != *grid) {
            return Err(Error::InvalidParams(
                "trajectory fields live on different grids".into(),
            ));
        }
        let times = fields.iter().map(|f| f.time()).collect();
        Ok(Self {
            times,
            fields,
            meta,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.fields[0].grid()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn initial(&self) -> &ScalarField {
        &self.fields[0]
    }

    pub fn last(&self) -> &ScalarField {
        self.fields.last().expect("non-empty")
    }

    /// Index of the stored field at time `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = TIME_MATCH * t.abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    pub fn at(&self, t: f64) -> Result<&ScalarField> {
        self.index_of(t)
            .map(|i| &self.fields[i])
            .ok_or(Error::CheckpointMissing(t))
    }

    /// Largest value over every stored field.
    pub fn sup(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| f.max())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` to every stored field.
    pub fn map_fields(
        &self,
        mut f: impl FnMut(&ScalarField) -> Result<ScalarField>,
    ) -> Result<Trajectory> {
        let fields = self.fields.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        Trajectory::new(fields, self.meta.clone())
    }

    /// Sub-trajectory of the stored fields with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<Trajectory> {
        let i0 = self.index_of(t0).ok_or(Error::CheckpointMissing(t0))?;
        let i1 = self.index_of(t1).ok_or(Error::CheckpointMissing(t1))?;
        Trajectory::new(self.fields[i0..=i1].to_vec(), self.meta.clone())
    }
}

/// Minimum and the lowest index attaining it.
pub(crate) fn argmin(values: &[f64]) -> (f64, usize) {
    argmin_by(values, |x| x)
}

pub(crate) fn argmin_by(values: &[f64], key: impl Fn(f64) -> f64) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (i, &v) in values.iter().enumerate() {
        let k = key(v);
        if k < best.0 {
            best = (k, i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::new(BoxDomain::unit(1).unwrap(), &[8]).unwrap())
    }

    #[test]
    fn rejects_non_finite_and_wrong_length() {
        let g = grid();
        let mut v = vec![1.0; 9];
        v[3] = f64::NAN;
        assert!(matches!(
            ScalarField::new(g.clone(), v, 0.0),
            Err(Error::NonFiniteInput { node: 3, .. })
        ));
        assert!(matches!(
            ScalarField::new(g, vec![1.0; 5], 0.0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let f = ScalarField::new(grid(), vec![2.0, 1.0, 1.0, 3.0, 3.0, 0.5, 0.5, 4.0, 4.0], 0.0)
            .unwrap();
        assert_eq!(f.min_with_index(), (0.5, 5));
        assert_eq!(f.max_with_index(), (4.0, 7));
    }

    #[test]
    fn trajectory_requires_increasing_times() {
        let g = grid();
        let a = ScalarField::constant(g.clone(), 1.0, 0.0).unwrap();
        let b = ScalarField::constant(g.clone(), 1.0, 0.1).unwrap();
        assert!(Trajectory::new(vec![a.clone(), b.clone()], Default::default()).is_ok());
        assert!(Trajectory::new(vec![b, a], Default::default()).is_err());
    }

    #[test]
    fn checkpoint_lookup() {
        let g = grid();
        let fields = (0..4)
            .map(|k| ScalarField::constant(g.clone(), 1.0, 0.1 * k as f64).unwrap())
            .collect();
        let t = Trajectory::new(fields, Default::default()).unwrap();
        assert_eq!(t.index_of(0.3), Some(3));
        assert!(matches!(t.at(0.25), Err(Error::CheckpointMissing(_))));
    }
}
