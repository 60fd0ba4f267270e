//! Uniform cell-centred grids on the box `[0, L]^d`, scalar fields living on
//! the cells, and cell masks standing in for quasi-open subsets of the box.
//!
//! Cells are addressed by a linear index `k = i * n + j` where `i` runs
//! along `x` and `j` along `y` (for `d = 1` simply `k = i`). Cell `(i, j)` has
//! centre `((i + 1/2) h, (j + 1/2) h)`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A point of the box. For `d = 1` the second coordinate is unused and zero.
pub type Point<T> = [T; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GridSpec<T> {
    d: usize,
    side: T,
    n: usize,
    h: T,
}

/// Builds the grid `[0, side]^d` with `n` cells per side.
pub fn make_grid<T: Real>(d: usize, side: T, n: usize) -> Result<GridSpec<T>> {
    GridSpec::new(d, side, n)
}

impl<T: Real> GridSpec<T> {
    pub const MIN_CELLS: usize = 4;

    pub fn new(d: usize, side: T, n: usize) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {d}")));
        }
        if n < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} cells per side, got {n}",
                Self::MIN_CELLS
            )));
        }
        if !(side > T::zero()) || !side.is_finite() {
            return Err(Error::InvalidGrid(format!("side must be positive, got {side}")));
        }
        Ok(Self {
            d,
            side,
            n,
            h: side / T::from_usize_lossy(n),
        })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn side(&self) -> T {
        self.side
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// `h^d`, the Lebesgue measure of one cell.
    #[inline]
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.d as i32)
    }

    /// `L^d`, the measure of the whole box.
    #[inline]
    pub fn box_volume(&self) -> T {
        self.side.powi(self.d as i32)
    }

    /// Centre of the box.
    pub fn box_center(&self) -> Point<T> {
        let c = self.side / T::lit(2.0);
        if self.d == 1 {
            [c, T::zero()]
        } else {
            [c, c]
        }
    }

    /// `(i, j)` of a linear index (`j = 0` when `d = 1`).
    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        if self.d == 1 {
            (k, 0)
        } else {
            (k / self.n, k % self.n)
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.d == 1 {
            i
        } else {
            i * self.n + j
        }
    }

    pub fn cell_center(&self, k: usize) -> Point<T> {
        let (i, j) = self.coords(k);
        let half = T::lit(0.5);
        let x = (T::from_usize_lossy(i) + half) * self.h;
        if self.d == 1 {
            [x, T::zero()]
        } else {
            [x, (T::from_usize_lossy(j) + half) * self.h]
        }
    }

    /// Euclidean distance between two points, using only the first `d` coordinates.
    pub fn distance(&self, p: Point<T>, q: Point<T>) -> T {
        let dx = p[0] - q[0];
        if self.d == 1 {
            dx.abs()
        } else {
            let dy = p[1] - q[1];
            (dx * dx + dy * dy).sqrt()
        }
    }

    /// The `2d` face neighbours of cell `k`; `None` marks a neighbour outside the box.
    /// Order: `-x, +x` (then `-y, +y` when `d = 2`).
    pub fn neighbors(&self, k: usize) -> [Option<usize>; 4] {
        let n = self.n;
        let (i, j) = self.coords(k);
        let mut out = [None; 4];
        out[0] = (i > 0).then(|| self.index(i - 1, j));
        out[1] = (i + 1 < n).then(|| self.index(i + 1, j));
        if self.d == 2 {
            out[2] = (j > 0).then(|| self.index(i, j - 1));
            out[3] = (j + 1 < n).then(|| self.index(i, j + 1));
        }
        out
    }

    /// Number of face neighbours of any cell, including ones outside the box (`2d`).
    #[inline]
    pub fn stencil_width(&self) -> usize {
        2 * self.d
    }

    /// Whether cell `k` touches `∂D`.
    pub fn touches_box_boundary(&self, k: usize) -> bool {
        self.neighbors(k)[..self.stencil_width()]
            .iter()
            .any(Option::is_none)
    }

    pub(crate) fn check_same(&self, other: &Self, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} cells (side {}) vs {}x{} cells (side {})",
                self.n, self.d, self.side, other.n, other.d, other.side
            )))
        }
    }
}

/// One finite real value per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScalarField<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn from_values(grid: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at cell {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Unchecked constructor for values produced by the toolkit's own solvers.
    pub(crate) fn from_raw(grid: GridSpec<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec<T>, c: T) -> Self {
        Self {
            values: vec![c; grid.cell_count()],
            grid,
        }
    }

    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Evaluates `f` at every cell centre.
    pub fn from_fn(grid: GridSpec<T>, mut f: impl FnMut(Point<T>) -> T) -> Self {
        let values = (0..grid.cell_count())
            .map(|k| f(grid.cell_center(k)))
            .collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, k: usize) -> T {
        self.values[k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// `max_k |values[k]|`.
    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Discrete `L²` inner product `h^d Σ a·b`.
    pub fn inner(&self, other: &Self) -> T {
        debug_assert_eq!(self.grid, other.grid);
        let s: T = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum();
        s * self.grid.cell_volume()
    }

    /// Discrete `L²` norm `h^{d/2} ‖·‖₂`.
    pub fn l2_norm(&self) -> T {
        self.inner(self).sqrt()
    }

    /// `h^d Σ values`.
    pub fn integral(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Cellwise `a·self + b·other`.
    pub fn axpby(&self, a: T, other: &Self, b: T) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpby(T::one(), other, -T::one())
    }
}

/// Boolean per cell: a discretised quasi-open subset of the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DomainMask<T> {
    grid: GridSpec<T>,
    inside: Vec<bool>,
}

impl<T: Real> DomainMask<T> {
    pub fn from_bools(grid: GridSpec<T>, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} mask entries, got {}",
                grid.cell_count(),
                inside.len()
            )));
        }
        Ok(Self { grid, inside })
    }

    pub(crate) fn from_raw(grid: GridSpec<T>, inside: Vec<bool>) -> Self {
        debug_assert_eq!(inside.len(), grid.cell_count());
        Self { grid, inside }
    }

    pub fn empty(grid: GridSpec<T>) -> Self {
        Self {
            inside: vec![false; grid.cell_count()],
            grid,
        }
    }

    pub fn full(grid: GridSpec<T>) -> Self {
        Self {
            inside: vec![true; grid.cell_count()],
            grid,
        }
    }

    pub fn from_fn(grid: GridSpec<T>, mut f: impl FnMut(Point<T>) -> bool) -> Self {
        let inside = (0..grid.cell_count())
            .map(|k| f(grid.cell_center(k)))
            .collect();
        Self { grid, inside }
    }

    /// Cells whose centre lies strictly inside the ball `B_radius(center)`.
    pub fn ball(grid: GridSpec<T>, center: Point<T>, radius: T) -> Self {
        Self::from_fn(grid, |x| grid.distance(x, center) < radius)
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.inside[k]
    }

    pub fn set(&mut self, k: usize, value: bool) {
        self.inside[k] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.inside
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.inside.iter().any(|&b| b)
    }

    /// `h^d · #inside`.
    pub fn volume(&self) -> T {
        T::from_usize_lossy(self.count()) * self.grid.cell_volume()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.inside
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn complement(&self) -> Self {
        Self {
            grid: self.grid,
            inside: self.inside.iter().map(|&b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.inside
            .iter()
            .zip(&other.inside)
            .all(|(&a, &b)| !a || b)
    }

    /// Number of cells in exactly one of the two masks.
    pub fn symmetric_difference_count(&self, other: &Self) -> usize {
        self.inside
            .iter()
            .zip(&other.inside)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Inside cells with at least one face neighbour in the box that is outside the mask.
    pub fn boundary_cells(&self) -> Vec<usize> {
        self.indices()
            .filter(|&k| {
                self.grid.neighbors(k)[..self.grid.stencil_width()]
                    .iter()
                    .any(|nb| matches!(nb, Some(m) if !self.inside[*m]))
            })
            .collect()
    }

    /// Outside cells with at least one face neighbour inside the mask.
    pub fn outer_ring(&self) -> Vec<usize> {
        (0..self.inside.len())
            .filter(|&k| !self.inside[k])
            .filter(|&k| {
                self.grid.neighbors(k)[..self.grid.stencil_width()]
                    .iter()
                    .any(|nb| matches!(nb, Some(m) if self.inside[*m]))
            })
            .collect()
    }

    /// The mask as a 0/1 field.
    pub fn to_field(&self) -> ScalarField<T> {
        ScalarField::from_raw(
            self.grid,
            self.inside
                .iter()
                .map(|&b| if b { T::one() } else { T::zero() })
                .collect(),
        )
    }

    fn zip_with(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            inside: self
                .inside
                .iter()
                .zip(&other.inside)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// `h^d × #inside`: the discrete Lebesgue measure of a mask.
pub fn mask_volume<T: Real>(mask: &DomainMask<T>) -> T {
    mask.volume()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

impl Relation {
    #[inline]
    pub fn holds<T: PartialOrd>(self, value: T, threshold: T) -> bool {
        match self {
            Relation::Gt => value > threshold,
            Relation::Lt => value < threshold,
            Relation::Ge => value >= threshold,
            Relation::Le => value <= threshold,
        }
    }
}

/// Mask of the cells where `field <relation> threshold`.
pub fn sublevel_mask<T: Real>(field: &ScalarField<T>, threshold: T, relation: Relation) -> DomainMask<T> {
    DomainMask {
        grid: field.grid,
        inside: field
            .values
            .iter()
            .map(|&v| relation.holds(v, threshold))
            .collect(),
    }
}

/// Configuration-level description of a right-hand side or weight field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum FieldDescriptor<T> {
    Constant {
        c: T,
    },
    IndicatorBall {
        center: Vec<T>,
        radius: T,
        inside_value: T,
        outside_value: T,
    },
    /// Piecewise linear in the distance to `center` (box centre by default);
    /// held constant beyond the last sample.
    RadialTable {
        samples: Vec<(T, T)>,
        #[serde(default)]
        center: Option<Vec<T>>,
    },
    Gaussian {
        center: Vec<T>,
        sigma: T,
        amplitude: T,
    },
    Csv {
        path: PathBuf,
    },
}

impl<T: Real> FieldDescriptor<T> {
    pub fn validate(&self, grid: &GridSpec<T>) -> Result<()> {
        let check_center = |c: &[T]| {
            if c.len() < grid.d() || c.iter().any(|v| !v.is_finite()) {
                Err(Error::InvalidDescriptor(format!(
                    "center needs {} finite coordinates, got {:?}",
                    grid.d(),
                    c
                )))
            } else {
                Ok(())
            }
        };
        match self {
            FieldDescriptor::Constant { c } if !c.is_finite() => {
                Err(Error::InvalidDescriptor("constant must be finite".into()))
            }
            FieldDescriptor::Constant { .. } => Ok(()),
            FieldDescriptor::IndicatorBall { center, radius, .. } => {
                check_center(center)?;
                if *radius > T::zero() {
                    Ok(())
                } else {
                    Err(Error::InvalidDescriptor(format!("radius must be positive, got {radius}")))
                }
            }
            FieldDescriptor::RadialTable { samples, center } => {
                if let Some(c) = center {
                    check_center(c)?;
                }
                if samples.is_empty() {
                    return Err(Error::InvalidDescriptor("radial table is empty".into()));
                }
                if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::InvalidDescriptor(
                        "radial table radii must be strictly increasing".into(),
                    ));
                }
                if samples[0].0 < T::zero() {
                    return Err(Error::InvalidDescriptor("radial table radii must be nonnegative".into()));
                }
                Ok(())
            }
            FieldDescriptor::Gaussian { center, sigma, .. } => {
                check_center(center)?;
                if *sigma > T::zero() {
                    Ok(())
                } else {
                    Err(Error::InvalidDescriptor(format!("sigma must be positive, got {sigma}")))
                }
            }
            FieldDescriptor::Csv { .. } => Ok(()),
        }
    }
}

fn to_point<T: Real>(c: &[T]) -> Point<T> {
    [c[0], c.get(1).copied().unwrap_or_else(T::zero)]
}

/// Piecewise linear interpolation on strictly increasing nodes, constant outside.
pub(crate) fn interp_table<T: Real>(samples: &[(T, T)], r: T) -> T {
    let first = samples[0];
    let last = samples[samples.len() - 1];
    if r <= first.0 {
        return first.1;
    }
    if r >= last.0 {
        return last.1;
    }
    let hi = samples.partition_point(|s| s.0 <= r);
    let (r0, v0) = samples[hi - 1];
    let (r1, v1) = samples[hi];
    v0 + (v1 - v0) * (r - r0) / (r1 - r0)
}

/// Evaluates a descriptor at every cell centre.
pub fn sample_field<T: Real>(desc: &FieldDescriptor<T>, grid: &GridSpec<T>) -> Result<ScalarField<T>> {
    desc.validate(grid)?;
    let grid = *grid;
    let field = match desc {
        FieldDescriptor::Constant { c } => ScalarField::constant(grid, *c),
        FieldDescriptor::IndicatorBall {
            center,
            radius,
            inside_value,
            outside_value,
        } => {
            let c = to_point(center);
            ScalarField::from_fn(grid, |x| {
                if grid.distance(x, c) < *radius {
                    *inside_value
                } else {
                    *outside_value
                }
            })
        }
        FieldDescriptor::RadialTable { samples, center } => {
            let c = center.as_deref().map(to_point).unwrap_or_else(|| grid.box_center());
            ScalarField::from_fn(grid, |x| interp_table(samples, grid.distance(x, c)))
        }
        FieldDescriptor::Gaussian {
            center,
            sigma,
            amplitude,
        } => {
            let c = to_point(center);
            let two_s2 = T::lit(2.0) * *sigma * *sigma;
            ScalarField::from_fn(grid, |x| {
                let r = grid.distance(x, c);
                *amplitude * (-(r * r) / two_s2).exp()
            })
        }
        FieldDescriptor::Csv { path } => crate::io::read_field(path, &grid)?,
    };
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn make_grid_spacing() {
        let g = make_grid(2, 2.0_f64, 128).unwrap();
        assert_eq!(g.h(), 0.015625);
        assert_eq!(g.cell_count(), 128 * 128);
        let g1 = make_grid(1, 1.0_f64, 4).unwrap();
        assert_eq!(g1.h(), 0.25);
        assert_eq!(g1.cell_volume(), 0.25);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(make_grid(2, 2.0_f64, 3).is_err());
        assert!(make_grid(3, 2.0, 16).is_err());
        assert!(make_grid(0, 2.0, 16).is_err());
        assert!(make_grid(2, 0.0_f64, 16).is_err());
        assert!(make_grid(2, -1.0, 16).is_err());
        assert!(make_grid(2, f64::NAN, 16).is_err());
    }

    #[test]
    fn neighbors_at_corner() {
        let g = make_grid(2, 1.0_f64, 4).unwrap();
        let nb = g.neighbors(0);
        assert_eq!(nb, [None, Some(4), None, Some(1)]);
        assert!(g.touches_box_boundary(0));
        assert!(!g.touches_box_boundary(g.index(1, 1)));
        let g1 = make_grid(1, 1.0_f64, 4).unwrap();
        assert_eq!(g1.neighbors(3), [Some(2), None, None, None]);
    }

    #[test]
    fn constant_descriptor_is_bit_exact() {
        let g = make_grid(2, 2.0_f64, 16).unwrap();
        let f = sample_field(&FieldDescriptor::Constant { c: 1.0 }, &g).unwrap();
        assert!(f.values().iter().all(|&v| v.to_bits() == 1.0f64.to_bits()));
    }

    #[test]
    fn indicator_ball_signs() {
        let g = make_grid(2, 2.0_f64, 64).unwrap();
        let desc = FieldDescriptor::IndicatorBall {
            center: vec![1.0, 1.0],
            radius: 0.2,
            inside_value: -1.0,
            outside_value: 1.0,
        };
        let f = sample_field(&desc, &g).unwrap();
        for k in 0..g.cell_count() {
            let r = g.distance(g.cell_center(k), [1.0, 1.0]);
            assert_eq!(f.get(k), if r < 0.2 { -1.0 } else { 1.0 });
        }
        assert!(f.values().iter().any(|&v| v == -1.0));
    }

    #[test]
    fn gaussian_peaks_at_nearest_cell() {
        let g = make_grid(2, 2.0_f64, 33).unwrap();
        let desc = FieldDescriptor::Gaussian {
            center: vec![1.0, 1.0],
            sigma: 0.3,
            amplitude: 1.0,
        };
        let f = sample_field(&desc, &g).unwrap();
        let argmax = (0..f.len())
            .max_by(|&a, &b| f.get(a).partial_cmp(&f.get(b)).unwrap())
            .unwrap();
        let nearest = (0..f.len())
            .min_by(|&a, &b| {
                let da = g.distance(g.cell_center(a), [1.0, 1.0]);
                let db = g.distance(g.cell_center(b), [1.0, 1.0]);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn descriptor_validation() {
        let g = make_grid(2, 2.0_f64, 8).unwrap();
        let bad_radius = FieldDescriptor::IndicatorBall {
            center: vec![1.0, 1.0],
            radius: 0.0,
            inside_value: -1.0,
            outside_value: 1.0,
        };
        assert!(sample_field(&bad_radius, &g).is_err());
        let bad_sigma = FieldDescriptor::Gaussian {
            center: vec![1.0, 1.0],
            sigma: -1.0,
            amplitude: 1.0,
        };
        assert!(sample_field(&bad_sigma, &g).is_err());
        let bad_table = FieldDescriptor::RadialTable {
            samples: vec![(0.0, 1.0), (0.5, 2.0), (0.5, 3.0)],
            center: None,
        };
        assert!(sample_field(&bad_table, &g).is_err());
        let missing = FieldDescriptor::Csv {
            path: "/nonexistent/field.csv".into(),
        };
        assert!(sample_field(&missing, &g).is_err());
    }

    #[test]
    fn radial_table_interpolates() {
        let g = make_grid(1, 2.0_f64, 8).unwrap();
        let desc = FieldDescriptor::RadialTable {
            samples: vec![(0.0, 0.0), (1.0, 2.0)],
            center: Some(vec![0.0]),
        };
        let f = sample_field(&desc, &g).unwrap();
        for k in 0..8 {
            let x = g.cell_center(k)[0];
            assert_relative_eq!(f.get(k), (2.0 * x).min(2.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn mask_volumes() {
        let g = make_grid(2, 2.0_f64, 100).unwrap();
        assert_eq!(mask_volume(&DomainMask::empty(g)), 0.0);
        assert_relative_eq!(mask_volume(&DomainMask::full(g)), 4.0, epsilon = 1e-12);

        let g = make_grid(2, 2.0_f64, 256).unwrap();
        let disk = DomainMask::ball(g, [1.0, 1.0], 0.5);
        let err = (mask_volume(&disk) - std::f64::consts::PI * 0.25).abs();
        assert!(err <= 4.0 * g.h(), "disk area error {err}");
    }

    #[test]
    fn sublevel_masks() {
        let g = make_grid(2, 2.0_f64, 16).unwrap();
        let ones = ScalarField::constant(g, 1.0);
        assert_eq!(sublevel_mask(&ones, 0.0, Relation::Gt).count(), g.cell_count());
        let zeros = ScalarField::zeros(g);
        assert!(sublevel_mask(&zeros, 0.0, Relation::Gt).is_empty());

        let g1 = make_grid(1, 2.0_f64, 20).unwrap();
        let lin = ScalarField::from_fn(g1, |x| x[0] - 1.0);
        let left = sublevel_mask(&lin, 0.0, Relation::Lt);
        assert!((left.count() as i64 - 10).abs() <= 1);
        assert!(left.indices().all(|k| k < 11));
    }

    #[test]
    fn boundary_and_ring() {
        let g = make_grid(2, 1.0_f64, 8).unwrap();
        let mut m = DomainMask::empty(g);
        for i in 2..5 {
            for j in 2..5 {
                m.set(g.index(i, j), true);
            }
        }
        assert_eq!(m.boundary_cells().len(), 8);
        assert_eq!(m.outer_ring().len(), 12);
    }

    proptest! {
        #[test]
        fn volume_additive_and_monotone(bits in proptest::collection::vec(0u8..3, 64)) {
            let g = make_grid(2, 1.0_f64, 8).unwrap();
            let a = DomainMask::from_bools(g, bits.iter().map(|&b| b == 1).collect()).unwrap();
            let b = DomainMask::from_bools(g, bits.iter().map(|&b| b == 2).collect()).unwrap();
            let u = a.union(&b);
            prop_assert!((u.volume() - a.volume() - b.volume()).abs() < 1e-14);
            prop_assert!(a.is_subset_of(&u));
            prop_assert!(a.volume() <= u.volume());
        }

        #[test]
        fn sublevel_partition(vals in proptest::collection::vec(-1.0f64..1.0, 64), t in -1.0f64..1.0) {
            let g = make_grid(2, 1.0_f64, 8).unwrap();
            let f = ScalarField::from_values(g, vals).unwrap();
            let gt = sublevel_mask(&f, t, Relation::Gt);
            let le = sublevel_mask(&f, t, Relation::Le);
            prop_assert!(gt.intersection(&le).is_empty());
            prop_assert_eq!(gt.union(&le).count(), g.cell_count());
        }
    }
}
