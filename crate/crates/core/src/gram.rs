//! Gram matrices of `L²(Υ)` and `H¹_cc(Υ)` and weighted operator norms.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cg, lanczos_extremes};
use crate::signal::SignalLayout;

/// A real linear map between signal coefficient vectors.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for Mat<f64> {
    fn nrows(&self) -> usize {
        Mat::nrows(self)
    }

    fn ncols(&self) -> usize {
        Mat::ncols(self)
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != Mat::ncols(self) {
            return Err(Error::Dimension("vector length differs from matrix columns".into()));
        }
        Ok((0..Mat::nrows(self)).map(|i| (0..x.len()).map(|j| self[(i, j)] * x[j]).sum()).collect())
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != Mat::nrows(self) {
            return Err(Error::Dimension("vector length differs from matrix rows".into()));
        }
        let mut out = vec![0.0; Mat::ncols(self)];
        for (i, yi) in y.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self[(i, j)] * yi;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    L2,
    H1cc,
}

/// Gram matrix of a signal space.
///
/// The `H¹_cc` Gram acts only on the admissible coefficients (time nodes
/// `k ≥ 1`); vectors passed to [`Gram::apply`] and [`Gram::solve`] hold those
/// coefficients, see [`Gram::offset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    space: Space,
    layout: SignalLayout,
    l2: Vec<f64>,
}

impl Gram {
    pub fn new(space: Space, layout: &SignalLayout) -> Self {
        Gram { space, layout: layout.clone(), l2: layout.l2_weights() }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn layout(&self) -> &SignalLayout {
        &self.layout
    }

    /// Number of leading signal coefficients excluded from the space.
    pub fn offset(&self) -> usize {
        match self.space {
            Space::L2 => 0,
            Space::H1cc => self.layout.n_bnd(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.len() - self.offset()
    }

    /// Full bilinear form on all signal coefficients.
    fn apply_full(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(&self.l2).map(|(a, w)| a * w).collect();
        if self.space == Space::L2 {
            return y;
        }
        let nb = self.layout.n_bnd();
        let nt = self.layout.n_time();
        let time = self.layout.time();
        let dt = time.dt();
        let ws = self.layout.surface_weights();
        for k in 0..nt - 1 {
            for b in 0..nb {
                let i = k * nb + b;
                let j = i + nb;
                let g = (x[j] - x[i]) * ws[b] / dt;
                y[j] += g;
                y[i] -= g;
            }
        }
        // tangential differences along the boundary loop; empty in 1D
        let arcs = self.layout.arcs();
        for k in 0..nt {
            let wt = time.trapezoid_weight(k);
            for b in 0..nb {
                let a = arcs[b];
                if a <= 0.0 {
                    continue;
                }
                let i = k * nb + b;
                let j = k * nb + (b + 1) % nb;
                let g = (x[j] - x[i]) * wt / a;
                y[j] += g;
                y[i] -= g;
            }
        }
        y
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.l2.clone();
        if self.space == Space::H1cc {
            let nb = self.layout.n_bnd();
            let nt = self.layout.n_time();
            let time = self.layout.time();
            let ws = self.layout.surface_weights();
            let arcs = self.layout.arcs();
            for k in 0..nt {
                for b in 0..nb {
                    let i = k * nb + b;
                    let edges = if k == 0 || k + 1 == nt { 1.0 } else { 2.0 };
                    d[i] += edges * ws[b] / time.dt();
                    let prev = arcs[(b + nb - 1) % nb];
                    for a in [arcs[b], prev] {
                        if a > 0.0 {
                            d[i] += time.trapezoid_weight(k) / a;
                        }
                    }
                }
            }
        }
        d[self.offset()..].to_vec()
    }

    /// `G x` on admissible coefficients.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let off = self.offset();
        let mut full = vec![0.0; self.layout.len()];
        full[off..].copy_from_slice(x);
        self.apply_full(&full)[off..].to_vec()
    }

    /// `G⁻¹ b` on admissible coefficients.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self.space {
            Space::L2 => Ok(b.iter().zip(&self.l2).map(|(v, w)| v / w).collect()),
            Space::H1cc => {
                let inv: Vec<f64> = self.diagonal().iter().map(|d| 1.0 / d).collect();
                cg(|x| self.apply(x), &inv, b, 1e-14, 20 * self.dim().max(50))
            }
        }
    }

    /// Squared norm of a full signal coefficient vector.
    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        self.apply_full(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Dense Gram on admissible coefficients.
    pub fn dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply(&e);
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        m
    }
}

/// `sup ‖A f‖_codom / ‖f‖_dom` over admissible `f`, by Lanczos on `G_d⁻¹ Aᵀ G_c A`.
pub fn operator_norm(op: &dyn LinearOperator, dom: &Gram, codom: &Gram) -> Result<f64> {
    if op.ncols() != dom.layout().len() || op.nrows() != codom.layout().len() {
        return Err(Error::Dimension(format!(
            "operator is {}×{}, spaces have {} and {} coefficients",
            op.nrows(),
            op.ncols(),
            codom.layout().len(),
            dom.layout().len()
        )));
    }
    let (od, oc) = (dom.offset(), codom.offset());
    let normal = |x: &[f64]| -> Result<Vec<f64>> {
        let mut full = vec![0.0; op.ncols()];
        full[od..].copy_from_slice(x);
        let y = op.apply(&full)?;
        let gy = codom.apply(&y[oc..]);
        let mut back = vec![0.0; op.nrows()];
        back[oc..].copy_from_slice(&gy);
        let z = op.apply_transpose(&back)?;
        dom.solve(&z[od..])
    };
    let weight = |x: &[f64]| dom.apply(x);
    let ext = lanczos_extremes(dom.dim(), &normal, &weight, 1e-13, 400)?;
    Ok(ext.max.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryGeometry, SpatialGrid, TimeGrid};
    use approx::assert_abs_diff_eq;

    fn layout_2d() -> SignalLayout {
        let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[6, 6]).unwrap();
        SignalLayout::new(&BoundaryGeometry::new(&g), TimeGrid::new(1.0, 10).unwrap())
    }

    #[test]
    fn h1_norm_of_linear_ramp_at_one_point() {
        let g = SpatialGrid::new(&[0.0], &[1.0], &[8]).unwrap();
        let layout = SignalLayout::new(&BoundaryGeometry::new(&g), TimeGrid::new(1.0, 64).unwrap());
        let f: Vec<f64> = (0..layout.len()).map(|i| if i % 2 == 0 { layout.time().time(i / 2) } else { 0.0 }).collect();
        let gram = Gram::new(Space::H1cc, &layout);
        assert_abs_diff_eq!(gram.norm_sq(&f), 4.0 / 3.0, epsilon = 1e-4);
    }

    #[test]
    fn time_constant_signal_has_no_time_derivative_part() {
        let layout = layout_2d();
        let nb = layout.n_bnd();
        let per_node: Vec<f64> = (0..nb).map(|b| (b as f64 * 0.3).cos()).collect();
        let f: Vec<f64> = (0..layout.len()).map(|i| per_node[i % nb]).collect();
        let l2 = Gram::new(Space::L2, &layout).norm_sq(&f);
        let h1 = Gram::new(Space::H1cc, &layout).norm_sq(&f);
        let arcs = layout.arcs();
        let tangential: f64 =
            (0..nb).map(|b| (per_node[(b + 1) % nb] - per_node[b]).powi(2) / arcs[b]).sum::<f64>() * 1.0;
        assert_abs_diff_eq!(h1 - l2, tangential, epsilon = 1e-10);
        let one = vec![1.0; layout.len()];
        assert_abs_diff_eq!(Gram::new(Space::H1cc, &layout).norm_sq(&one), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn h1_solve_inverts_apply() {
        let layout = layout_2d();
        let gram = Gram::new(Space::H1cc, &layout);
        let x: Vec<f64> = (0..gram.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = gram.solve(&gram.apply(&x)).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn operator_norm_of_simple_matrices() {
        let layout = layout_2d();
        let n = layout.len();
        let l2 = Gram::new(Space::L2, &layout);
        let id = Mat::<f64>::identity(n, n);
        assert_abs_diff_eq!(operator_norm(&id, &l2, &l2).unwrap(), 1.0, epsilon = 1e-8);
        let two = Mat::<f64>::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.0 });
        assert_abs_diff_eq!(operator_norm(&two, &l2, &l2).unwrap(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn diagonal_case_with_euclidean_weights() {
        let g = SpatialGrid::new(&[0.0], &[1.0], &[4]).unwrap();
        // two boundary points, one time step with dt = 2: trapezoid weights are 1
        let layout = SignalLayout::new(&BoundaryGeometry::new(&g), TimeGrid::new(2.0, 1).unwrap());
        let l2 = Gram::new(Space::L2, &layout);
        let d = Mat::<f64>::from_fn(4, 4, |i, j| if i == j { [1.0, 3.0, 2.0, 0.5][i] } else { 0.0 });
        assert_abs_diff_eq!(operator_norm(&d, &l2, &l2).unwrap(), 3.0, epsilon = 1e-8);
    }
}
