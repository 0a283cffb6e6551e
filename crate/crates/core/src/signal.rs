//! Boundary-time signals: values per (time node, non-corner boundary node).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{BoundaryGeometry, Scalar, TimeGrid};

/// Layout of the discretized `L²((0,T) × ∂M)`: a time grid crossed with the trace
/// nodes of a boundary, stored time-major (`index = k * n_bnd + b`).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalLayout {
    time: TimeGrid,
    weights: Vec<f64>,
    arcs: Vec<f64>,
}

impl SignalLayout {
    pub fn new(boundary: &BoundaryGeometry, time: TimeGrid) -> Self {
        SignalLayout {
            time,
            weights: boundary.trace_weights(),
            arcs: boundary.trace_nodes().iter().map(|t| t.arc_to_next).collect(),
        }
    }

    pub fn with_time(&self, time: TimeGrid) -> Self {
        SignalLayout { time, weights: self.weights.clone(), arcs: self.arcs.clone() }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn n_bnd(&self) -> usize {
        self.weights.len()
    }

    pub fn n_time(&self) -> usize {
        self.time.n_nodes()
    }

    pub fn len(&self) -> usize {
        self.n_time() * self.n_bnd()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn surface_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Arc length from each trace node to the next one (0 in 1D).
    pub fn arcs(&self) -> &[f64] {
        &self.arcs
    }

    pub fn index(&self, k: usize, b: usize) -> usize {
        k * self.n_bnd() + b
    }

    /// Diagonal of the trapezoid `L²(Υ)` Gram matrix.
    pub fn l2_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        for k in 0..self.n_time() {
            let wt = self.time.trapezoid_weight(k);
            w.extend(self.weights.iter().map(|ws| wt * ws));
        }
        w
    }

    /// Same boundary discretization (time grids may differ).
    pub fn same_boundary(&self, other: &SignalLayout) -> bool {
        self.weights == other.weights
    }

    pub fn check_same(&self, other: &SignalLayout) -> Result<()> {
        if !self.same_boundary(other) || !self.time.same_as(&other.time) {
            return Err(Error::Dimension("signals live on different layouts".into()));
        }
        Ok(())
    }
}

/// Values on a [`SignalLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySignal<T> {
    layout: SignalLayout,
    values: Vec<T>,
}

impl<T: Scalar> BoundarySignal<T> {
    pub fn new(layout: SignalLayout, values: Vec<T>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "signal has {} values, layout needs {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(BoundarySignal { layout, values })
    }

    pub fn zeros(layout: &SignalLayout) -> Self {
        BoundarySignal { values: vec![T::default(); layout.len()], layout: layout.clone() }
    }

    /// Samples `f(t, b)` on every node.
    pub fn from_fn(layout: &SignalLayout, f: impl Fn(f64, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(layout.len());
        for k in 0..layout.n_time() {
            let t = layout.time.time(k);
            for b in 0..layout.n_bnd() {
                values.push(f(t, b));
            }
        }
        BoundarySignal { layout: layout.clone(), values }
    }

    /// A time-independent signal.
    pub fn constant_in_time(layout: &SignalLayout, per_node: &[T]) -> Self {
        Self::from_fn(layout, |_, b| per_node[b])
    }

    pub fn layout(&self) -> &SignalLayout {
        &self.layout
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

    pub fn at(&self, k: usize, b: usize) -> T {
        self.values[self.layout.index(k, b)]
    }

    pub fn time_slice(&self, k: usize) -> &[T] {
        let n = self.layout.n_bnd();
        &self.values[k * n..(k + 1) * n]
    }

    /// Trapezoid `∫_Υ self · conj(other)`.
    pub fn inner(&self, other: &BoundarySignal<T>) -> Result<T> {
        self.layout.check_same(&other.layout)?;
        Ok(weighted_sum(&self.layout, &self.values, &other.values, true))
    }

    /// Trapezoid `∫_Υ self · other` without conjugation.
    pub fn pairing(&self, other: &BoundarySignal<T>) -> Result<T> {
        self.layout.check_same(&other.layout)?;
        Ok(weighted_sum(&self.layout, &self.values, &other.values, false))
    }

    pub fn norm(&self) -> f64 {
        let w = self.layout.l2_weights();
        self.values.iter().zip(&w).map(|(v, w)| v.norm_sqr() * w).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        BoundarySignal {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| v.scale(s)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.layout.check_same(&other.layout)?;
        Ok(BoundarySignal {
            layout: self.layout.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.layout.check_same(&other.layout)?;
        Ok(BoundarySignal {
            layout: self.layout.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr().sqrt()).fold(0.0, f64::max)
    }
}

impl BoundarySignal<Complex64> {
    pub fn from_parts(re: &BoundarySignal<f64>, im: &BoundarySignal<f64>) -> Result<Self> {
        re.layout.check_same(&im.layout)?;
        Ok(BoundarySignal {
            layout: re.layout.clone(),
            values: re.values.iter().zip(&im.values).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        })
    }

    pub fn re(&self) -> BoundarySignal<f64> {
        BoundarySignal { layout: self.layout.clone(), values: self.values.iter().map(|v| v.re).collect() }
    }

    pub fn im(&self) -> BoundarySignal<f64> {
        BoundarySignal { layout: self.layout.clone(), values: self.values.iter().map(|v| v.im).collect() }
    }
}

fn weighted_sum<T: Scalar>(layout: &SignalLayout, a: &[T], b: &[T], conj: bool) -> T {
    let n = layout.n_bnd();
    let ws = layout.surface_weights();
    let mut acc = T::default();
    for k in 0..layout.n_time() {
        let wt = layout.time().trapezoid_weight(k);
        for bi in 0..n {
            let i = k * n + bi;
            let rhs = if conj { b[i].conj() } else { b[i] };
            acc = acc + (a[i] * rhs).scale(wt * ws[bi]);
        }
    }
    acc
}
