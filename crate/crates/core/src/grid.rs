//! Uniform Cartesian grids on intervals and rectangles, boundary geometry and
//! trapezoid-rule quadrature.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numbers a field can carry: `f64` or `Complex64`.
pub trait Scalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Send + Sync
{
    fn conj(self) -> Self;
    fn from_real(x: f64) -> Self;
    fn scale(self, s: f64) -> Self;
    fn norm_sqr(self) -> f64;
}

impl Scalar for f64 {
    fn conj(self) -> Self {
        self
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
}

impl Scalar for Complex64 {
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
}

/// Serializable description of a grid, as it appears in configs and file headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub lengths: Vec<f64>,
    pub n_cells: Vec<usize>,
}

impl GridSpec {
    pub fn unit_square(n: usize) -> Self {
        GridSpec { dim: 2, origin: vec![0.0, 0.0], lengths: vec![1.0, 1.0], n_cells: vec![n, n] }
    }

    pub fn build(&self) -> Result<SpatialGrid> {
        SpatialGrid::build(self)
    }
}

/// A uniform node grid on `origin + [0, lengths]` in one or two dimensions.
///
/// Nodes are numbered row-major: in 2D the node `(i0, i1)` has index
/// `i0 * (n_cells[1] + 1) + i1`, so the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct SpatialGrid {
    origin: [f64; 2],
    lengths: [f64; 2],
    n_cells: [usize; 2],
    dim: usize,
}

impl TryFrom<GridSpec> for SpatialGrid {
    type Error = Error;
    fn try_from(spec: GridSpec) -> Result<Self> {
        SpatialGrid::build(&spec)
    }
}

impl From<SpatialGrid> for GridSpec {
    fn from(g: SpatialGrid) -> Self {
        g.spec()
    }
}

impl SpatialGrid {
    pub fn build(spec: &GridSpec) -> Result<Self> {
        let dim = spec.dim;
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidSpec(format!("dimension {dim} not supported (1 or 2)")));
        }
        if spec.origin.len() != dim || spec.lengths.len() != dim || spec.n_cells.len() != dim {
            return Err(Error::InvalidSpec(format!(
                "origin/lengths/n_cells must each have {dim} entries"
            )));
        }
        let mut origin = [0.0; 2];
        let mut lengths = [1.0; 2];
        let mut n_cells = [0usize; 2];
        for axis in 0..dim {
            let (o, l, n) = (spec.origin[axis], spec.lengths[axis], spec.n_cells[axis]);
            if !o.is_finite() {
                return Err(Error::InvalidSpec(format!("origin[{axis}] is not finite")));
            }
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidSpec(format!("lengths[{axis}] = {l} must be positive")));
            }
            if n < 2 {
                return Err(Error::InvalidSpec(format!("n_cells[{axis}] = {n} must be at least 2")));
            }
            origin[axis] = o;
            lengths[axis] = l;
            n_cells[axis] = n;
        }
        Ok(SpatialGrid { origin, lengths, n_cells, dim })
    }

    /// Convenience constructor for `[o, o + l]^dim`-style boxes.
    pub fn new(origin: &[f64], lengths: &[f64], n_cells: &[usize]) -> Result<Self> {
        Self::build(&GridSpec {
            dim: origin.len(),
            origin: origin.to_vec(),
            lengths: lengths.to_vec(),
            n_cells: n_cells.to_vec(),
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim,
            origin: self.origin[..self.dim].to_vec(),
            lengths: self.lengths[..self.dim].to_vec(),
            n_cells: self.n_cells[..self.dim].to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self, axis: usize) -> f64 {
        self.origin[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn n_cells(&self, axis: usize) -> usize {
        self.n_cells[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.n_cells[axis] as f64
    }

    pub fn h_min(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// Nodes per axis; the unused second axis of a 1D grid reports 1.
    pub fn shape(&self) -> [usize; 2] {
        if self.dim == 1 {
            [self.n_cells[0] + 1, 1]
        } else {
            [self.n_cells[0] + 1, self.n_cells[1] + 1]
        }
    }

    pub fn n_nodes(&self) -> usize {
        let [a, b] = self.shape();
        a * b
    }

    /// Row-major stride of axis 0.
    pub fn stride(&self) -> usize {
        self.shape()[1]
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.stride() + i1
    }

    pub fn split(&self, idx: usize) -> (usize, usize) {
        let s = self.stride();
        (idx / s, idx % s)
    }

    /// Node coordinate; the second entry is 0 in 1D.
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let (i0, i1) = self.split(idx);
        let x0 = self.origin[0] + i0 as f64 * self.spacing(0);
        let x1 = if self.dim == 2 { self.origin[1] + i1 as f64 * self.spacing(1) } else { 0.0 };
        [x0, x1]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i0, i1) = self.split(idx);
        let n0 = self.n_cells[0];
        if self.dim == 1 {
            return i0 == 0 || i0 == n0;
        }
        let n1 = self.n_cells[1];
        i0 == 0 || i0 == n0 || i1 == 0 || i1 == n1
    }

    /// Trapezoid weight of a node (product of 1D weights).
    pub fn quadrature_weight(&self, idx: usize) -> f64 {
        let (i0, i1) = self.split(idx);
        let w = |i: usize, axis: usize| {
            let h = self.spacing(axis);
            if i == 0 || i == self.n_cells[axis] {
                0.5 * h
            } else {
                h
            }
        };
        if self.dim == 1 {
            w(i0, 0)
        } else {
            w(i0, 0) * w(i1, 1)
        }
    }

    pub fn quadrature_weights(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.quadrature_weight(i)).collect()
    }

    /// Radius of the smallest origin-centred ball containing the grid.
    pub fn enclosing_radius(&self) -> f64 {
        let mut r: f64 = 0.0;
        for c0 in [self.origin[0], self.origin[0] + self.lengths[0]] {
            if self.dim == 1 {
                r = r.max(c0.abs());
            } else {
                for c1 in [self.origin[1], self.origin[1] + self.lengths[1]] {
                    r = r.max(c0.hypot(c1));
                }
            }
        }
        r
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim).map(|a| self.lengths[a].powi(2)).sum::<f64>().sqrt()
    }

    /// Largest distance from an interior point to the boundary.
    pub fn inradius(&self) -> f64 {
        (0..self.dim).map(|a| 0.5 * self.lengths[a]).fold(f64::INFINITY, f64::min)
    }

    pub fn area(&self) -> f64 {
        (0..self.dim).map(|a| self.lengths[a]).product()
    }

    pub fn perimeter(&self) -> f64 {
        if self.dim == 1 {
            2.0
        } else {
            2.0 * (self.lengths[0] + self.lengths[1])
        }
    }

    pub fn check_same(&self, other: &SpatialGrid) -> Result<()> {
        if self != other {
            return Err(Error::Dimension("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Values on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: SpatialGrid,
    values: Vec<T>,
}

pub type ScalarField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Scalar> Field<T> {
    pub fn new(grid: SpatialGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::Dimension(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn([f64; 2]) -> T) -> Self {
        let values = (0..grid.n_nodes()).map(|i| f(grid.coord(i))).collect();
        Field { grid: grid.clone(), values }
    }

    pub fn constant(grid: &SpatialGrid, v: T) -> Self {
        Field { grid: grid.clone(), values: vec![v; grid.n_nodes()] }
    }

    pub fn zeros(grid: &SpatialGrid) -> Self {
        Self::constant(grid, T::default())
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Field<T>, f: impl Fn(T, T) -> T) -> Result<Field<T>> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }
}

impl ScalarField {
    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Validates a wave speed: finite, strictly positive and, when given, at least `floor`.
    pub fn check_wave_speed(&self, floor: Option<f64>) -> Result<()> {
        let min = self.min();
        if !self.values.iter().all(|v| v.is_finite()) || min <= 0.0 {
            return Err(Error::Domain(format!("wave speed must be positive, min = {min}")));
        }
        if let Some(eps) = floor {
            if min < eps {
                return Err(Error::Domain(format!("wave speed {min} below declared floor {eps}")));
            }
        }
        Ok(())
    }
}

impl ComplexField {
    pub fn re(&self) -> ScalarField {
        self.map(|v| v.re)
    }

    pub fn im(&self) -> ScalarField {
        self.map(|v| v.im)
    }
}

/// Trapezoid value of `∫_M a · conj(b) · w dx`.
pub fn inner_product<T: Scalar>(a: &Field<T>, b: &Field<T>, w: &ScalarField) -> Result<T> {
    a.grid.check_same(&b.grid)?;
    a.grid.check_same(&w.grid)?;
    let g = &a.grid;
    let mut acc = T::default();
    for i in 0..g.n_nodes() {
        acc = acc + (a.values[i] * b.values[i].conj()).scale(w.values[i] * g.quadrature_weight(i));
    }
    Ok(acc)
}

/// Trapezoid value of the bilinear pairing `∫_M a · b · w dx` (no conjugation).
pub fn bilinear_pairing<T: Scalar>(a: &Field<T>, b: &Field<T>, w: &ScalarField) -> Result<T> {
    a.grid.check_same(&b.grid)?;
    a.grid.check_same(&w.grid)?;
    let g = &a.grid;
    let mut acc = T::default();
    for i in 0..g.n_nodes() {
        acc = acc + (a.values[i] * b.values[i]).scale(w.values[i] * g.quadrature_weight(i));
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Face {
    /// `x0 = origin0` (1D: left end point).
    Left,
    /// `x0 = origin0 + length0` (1D: right end point).
    Right,
    /// `x1 = origin1`.
    Bottom,
    /// `x1 = origin1 + length1`.
    Top,
}

/// A boundary node as seen by the quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub index: usize,
    pub normal: [f64; 2],
    pub weight: f64,
    pub corner: bool,
}

/// A non-corner boundary node carrying Dirichlet data and normal traces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceNode {
    pub index: usize,
    pub face: Face,
    pub normal: [f64; 2],
    /// Surface weight with the adjacent corner half-cells folded in.
    pub weight: f64,
    /// Neighbour one cell inward along the normal.
    pub inward: usize,
    /// Grid spacing along the normal.
    pub h_normal: f64,
    /// Grid spacing along the face (1 in 1D).
    pub h_tangential: f64,
    /// Arc-length distance to the next trace node counter-clockwise
    /// (0 when the boundary is a pair of points).
    pub arc_to_next: f64,
    /// Tangential stiffness of the link to the next trace node (0 in 1D).
    pub kappa_next: f64,
    /// Corner nodes adjacent on the boundary loop.
    pub corners: [Option<usize>; 2],
}

/// Boundary nodes, outward normals and surface weights of a grid.
///
/// In 2D the nodes run counter-clockwise starting at the lower-left corner.
/// Corner nodes carry the averaged weight `(h0 + h1) / 2` so the weights sum to the
/// perimeter, but they are excluded from [`BoundaryGeometry::trace_nodes`] where the
/// normal is ambiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGeometry {
    grid: SpatialGrid,
    nodes: Vec<BoundaryNode>,
    trace: Vec<TraceNode>,
}

impl BoundaryGeometry {
    pub fn new(grid: &SpatialGrid) -> Self {
        if grid.dim() == 1 {
            Self::new_1d(grid)
        } else {
            Self::new_2d(grid)
        }
    }

    fn new_1d(grid: &SpatialGrid) -> Self {
        let n = grid.n_cells(0);
        let h = grid.spacing(0);
        let nodes = vec![
            BoundaryNode { index: 0, normal: [-1.0, 0.0], weight: 1.0, corner: false },
            BoundaryNode { index: n, normal: [1.0, 0.0], weight: 1.0, corner: false },
        ];
        let trace = vec![
            TraceNode {
                index: 0,
                face: Face::Left,
                normal: [-1.0, 0.0],
                weight: 1.0,
                inward: 1,
                h_normal: h,
                h_tangential: 1.0,
                arc_to_next: 0.0,
                kappa_next: 0.0,
                corners: [None, None],
            },
            TraceNode {
                index: n,
                face: Face::Right,
                normal: [1.0, 0.0],
                weight: 1.0,
                inward: n - 1,
                h_normal: h,
                h_tangential: 1.0,
                arc_to_next: 0.0,
                kappa_next: 0.0,
                corners: [None, None],
            },
        ];
        BoundaryGeometry { grid: grid.clone(), nodes, trace }
    }

    fn new_2d(grid: &SpatialGrid) -> Self {
        let (n0, n1) = (grid.n_cells(0), grid.n_cells(1));
        let (h0, h1) = (grid.spacing(0), grid.spacing(1));
        let corner_w = 0.5 * (h0 + h1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut nodes = Vec::with_capacity(2 * (n0 + n1));
        let mut trace = Vec::with_capacity(2 * (n0 + n1) - 4);

        // (face, normal, tangential spacing, nodes along the face excluding corners,
        //  inward step in (i0, i1), corner at the end of the face and its normal)
        let corner = |i0: usize, i1: usize, nx: f64, ny: f64| BoundaryNode {
            index: grid.index(i0, i1),
            normal: [nx * s, ny * s],
            weight: corner_w,
            corner: true,
        };
        nodes.push(corner(0, 0, -1.0, -1.0));

        let mut push_face = |face: Face,
                             cells: Vec<(usize, usize)>,
                             normal: [f64; 2],
                             h_t: f64,
                             h_n: f64,
                             step: (isize, isize),
                             nodes: &mut Vec<BoundaryNode>| {
            let m = cells.len();
            for (k, &(i0, i1)) in cells.iter().enumerate() {
                let idx = grid.index(i0, i1);
                let mut w = h_t;
                if k == 0 {
                    w += 0.5 * h_t;
                }
                if k + 1 == m {
                    w += 0.5 * h_t;
                }
                let inward = grid.index((i0 as isize + step.0) as usize, (i1 as isize + step.1) as usize);
                nodes.push(BoundaryNode { index: idx, normal, weight: h_t, corner: false });
                trace.push(TraceNode {
                    index: idx,
                    face,
                    normal,
                    weight: w,
                    inward,
                    h_normal: h_n,
                    h_tangential: h_t,
                    arc_to_next: h_t,
                    kappa_next: 0.5 * h_n / h_t,
                    corners: [None, None],
                });
            }
            // the last node of a face reaches the next face's first node through a corner
            if let Some(last) = trace.last_mut() {
                last.arc_to_next = f64::NAN;
            }
        };

        push_face(
            Face::Bottom,
            (1..n0).map(|i| (i, 0)).collect(),
            [0.0, -1.0],
            h0,
            h1,
            (0, 1),
            &mut nodes,
        );
        nodes.push(corner(n0, 0, 1.0, -1.0));
        push_face(
            Face::Right,
            (1..n1).map(|j| (n0, j)).collect(),
            [1.0, 0.0],
            h1,
            h0,
            (-1, 0),
            &mut nodes,
        );
        nodes.push(corner(n0, n1, 1.0, 1.0));
        push_face(
            Face::Top,
            (1..n0).rev().map(|i| (i, n1)).collect(),
            [0.0, 1.0],
            h0,
            h1,
            (0, -1),
            &mut nodes,
        );
        nodes.push(corner(0, n1, -1.0, 1.0));
        push_face(
            Face::Left,
            (1..n1).rev().map(|j| (0, j)).collect(),
            [-1.0, 0.0],
            h1,
            h0,
            (1, 0),
            &mut nodes,
        );

        // arc length across a corner: half a cell on each face plus the other half
        let m = trace.len();
        for k in 0..m {
            if trace[k].arc_to_next.is_nan() {
                let next = (k + 1) % m;
                let h_this = match trace[k].face {
                    Face::Bottom | Face::Top => h0,
                    _ => h1,
                };
                let h_next = match trace[next].face {
                    Face::Bottom | Face::Top => h0,
                    _ => h1,
                };
                trace[k].arc_to_next = h_this + h_next;
                trace[k].kappa_next = h0 * h1 / (h0 + h1).powi(2);
            }
        }
        let corner_ids: Vec<usize> = nodes.iter().filter(|n| n.corner).map(|n| n.index).collect();
        for t in trace.iter_mut() {
            let (a0, a1) = grid.split(t.index);
            let mut found = corner_ids.iter().copied().filter(|&c| {
                let (c0, c1) = grid.split(c);
                a0.abs_diff(c0) + a1.abs_diff(c1) == 1
            });
            t.corners = [found.next(), found.next()];
        }
        BoundaryGeometry { grid: grid.clone(), nodes, trace }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    pub fn trace_nodes(&self) -> &[TraceNode] {
        &self.trace
    }

    pub fn n_trace(&self) -> usize {
        self.trace.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn trace_weights(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.weight).collect()
    }

    /// Outward normal derivative of a static field at every trace node:
    /// `(h_τ (u_b − u_i)/h_n + (L u)_b) / ds_b`, where `L` is the tangential
    /// stiffness along the boundary loop. See [`BoundaryGeometry::flux_trace`].
    pub fn normal_derivative<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        let mut out = self.flux_numerator(values);
        for (o, t) in out.iter_mut().zip(&self.trace) {
            *o = o.scale(1.0 / t.weight);
        }
        out
    }

    /// Normal trace of a leapfrog state.
    ///
    /// Adds the boundary mass term `M ∂²_t u` to the static numerator, with `M`
    /// holding the trapezoid weights times `c⁻²` and each corner mass shared by
    /// its two neighbours. With this trace the scheme satisfies
    /// `Σ w c⁻² (∂²_t u v − u ∂²_t v) = Σ_b ds_b (Λu · v − u · Λv)` exactly for the
    /// nodal trapezoid weights `w`, and the trace is second-order accurate.
    pub fn flux_trace(&self, values: &[f64], accel: &[f64], inv_c2: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let mut out = self.flux_numerator(values);
        for (o, t) in out.iter_mut().zip(&self.trace) {
            let mut m = g.quadrature_weight(t.index) * inv_c2[t.index] * accel[t.index];
            for &c in t.corners.iter().flatten() {
                m += 0.5 * g.quadrature_weight(c) * inv_c2[c] * accel[c];
            }
            *o = (*o + m) / t.weight;
        }
        out
    }

    fn flux_numerator<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        let m = self.trace.len();
        let mut out: Vec<T> =
            self.trace.iter().map(|t| (u[t.index] - u[t.inward]).scale(t.h_tangential / t.h_normal)).collect();
        for a in 0..m {
            let k = self.trace[a].kappa_next;
            if k > 0.0 {
                let b = (a + 1) % m;
                let d = (u[self.trace[a].index] - u[self.trace[b].index]).scale(k);
                out[a] = out[a] + d;
                out[b] = out[b] - d;
            }
        }
        out
    }

    /// Writes Dirichlet data given on trace nodes into a full nodal vector.
    /// Corners receive the mean of their two neighbours on the boundary loop.
    pub fn inject<T: Scalar>(&self, trace_values: &[T], values: &mut [T]) {
        for (t, &v) in self.trace.iter().zip(trace_values) {
            values[t.index] = v;
        }
        if self.grid.dim() == 2 {
            let g = &self.grid;
            let (n0, n1) = (g.n_cells(0), g.n_cells(1));
            let c = |a: usize, b: usize, p: (usize, usize), q: (usize, usize), vals: &mut [T]| {
                let v = (vals[g.index(p.0, p.1)] + vals[g.index(q.0, q.1)]).scale(0.5);
                vals[g.index(a, b)] = v;
            };
            c(0, 0, (1, 0), (0, 1), values);
            c(n0, 0, (n0 - 1, 0), (n0, 1), values);
            c(n0, n1, (n0 - 1, n1), (n0, n1 - 1), values);
            c(0, n1, (1, n1), (0, n1 - 1), values);
        }
    }
}

/// Uniform time grid `t_k = k · dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::TimeGrid(format!("final time {t_final} must be positive")));
        }
        if n_steps == 0 {
            return Err(Error::TimeGrid("at least one time step required".into()));
        }
        Ok(TimeGrid { t_final, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }

    /// Index of `t` when it coincides with a node (relative tolerance 1e-9 of `dt`).
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let k = x.round();
        if (x - k).abs() <= 1e-9 * x.abs().max(1.0) && k >= 0.0 && k as usize <= self.n_steps {
            Some(k as usize)
        } else {
            None
        }
    }

    /// The grid on `(0, 2T)` with the same step.
    pub fn doubled(&self) -> TimeGrid {
        TimeGrid { t_final: 2.0 * self.t_final, n_steps: 2 * self.n_steps }
    }

    /// The grid on `(0, T)` when `self` covers `(0, 2T)` with an even number of steps.
    pub fn halved(&self) -> Result<TimeGrid> {
        if self.n_steps % 2 != 0 {
            return Err(Error::TimeGrid(format!(
                "{} steps cannot be split at the midpoint",
                self.n_steps
            )));
        }
        Ok(TimeGrid { t_final: 0.5 * self.t_final, n_steps: self.n_steps / 2 })
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps
            && (self.t_final - other.t_final).abs() <= 1e-12 * self.t_final.max(other.t_final)
    }
}
