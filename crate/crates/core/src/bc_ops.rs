//! Time-algebra operators, boundary traces, the connecting operator `K`, the
//! harmonic-source operator `B` and the `‖·‖_*` distance.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dtn::DtnMatrix;
use crate::error::{Error, Result};
use crate::gram::{operator_norm, Gram, LinearOperator, Space};
use crate::grid::{inner_product, BoundaryGeometry, ComplexField, Field, Scalar, ScalarField, TimeGrid};
use crate::linalg::{lanczos_extremes, par};
use crate::signal::{BoundarySignal, SignalLayout};
use crate::solver::{solve_ibvp, DirichletControl, Leapfrog, WaveProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeOpKind {
    /// `Rf(t) = f(T − t)` on `(0, T)`.
    R,
    /// Zero extension `(0, T) → (0, 2T)`.
    Theta,
    /// `Jf(t) = ½ ∫_t^{2T−t} f`, `(0, 2T) → (0, T)`.
    J,
    /// `If(t) = ∫_t^T f`, `(0, T) → (0, T)`.
    I,
}

/// A linear map acting on the time index only, applied node by node on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TimeMatrix {
    fn zeros(rows: usize, cols: usize) -> Self {
        TimeMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// The operator of `kind` for the half-interval grid `time` on `(0, T)`.
    ///
    /// `J` is the midpoint rule on the doubled step, which is the quadrature
    /// the leapfrog lattice produces; it integrates constants exactly.
    pub fn of(kind: TimeOpKind, time: &TimeGrid) -> Self {
        let n = time.n_steps;
        let h = time.dt();
        match kind {
            TimeOpKind::R => {
                let mut m = Self::zeros(n + 1, n + 1);
                for k in 0..=n {
                    m.set(k, n - k, 1.0);
                }
                m
            }
            TimeOpKind::Theta => {
                let mut m = Self::zeros(2 * n + 1, n + 1);
                for k in 0..=n {
                    m.set(k, k, 1.0);
                }
                m
            }
            TimeOpKind::J => {
                let mut m = Self::zeros(n + 1, 2 * n + 1);
                for k in 0..n {
                    for l in (k + 1..2 * n - k).step_by(2) {
                        m.set(k, l, h);
                    }
                }
                m
            }
            TimeOpKind::I => {
                let mut m = Self::zeros(n + 1, n + 1);
                for k in 0..n {
                    Self::trapezoid_row(&mut m, k, k, n, h);
                }
                m
            }
        }
    }

    /// `𝓘g(t) = ∫_0^t g` on `(0, T)`.
    pub fn integral_from_zero(time: &TimeGrid) -> Self {
        let n = time.n_steps;
        let mut m = Self::zeros(n + 1, n + 1);
        for k in 1..=n {
            Self::trapezoid_row(&mut m, k, 0, k, time.dt());
        }
        m
    }

    /// Linear interpolation from `n_coarse` steps onto `substeps` times finer nodes.
    pub fn interpolation(n_coarse: usize, substeps: usize) -> Self {
        let mut m = Self::zeros(n_coarse * substeps + 1, n_coarse + 1);
        for k in 0..m.rows {
            let (j, r) = (k / substeps, k % substeps);
            let s = r as f64 / substeps as f64;
            m.data[k * m.cols + j] = 1.0 - s;
            if r > 0 {
                m.data[k * m.cols + j + 1] = s;
            }
        }
        m
    }

    fn trapezoid_row(m: &mut TimeMatrix, row: usize, from: usize, to: usize, scale: f64) {
        for i in from..=to {
            let w = if i == from || i == to { 0.5 } else { 1.0 };
            m.data[row * m.cols + i] += scale * w;
        }
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn as_ref(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    /// `self · other`.
    pub fn then_after(&self, other: &TimeMatrix) -> TimeMatrix {
        assert_eq!(self.cols, other.rows, "time matrix shapes");
        let mut out = Self::zeros(self.rows, other.cols);
        let dst = MatMut::from_row_major_slice_mut(&mut out.data, self.rows, other.cols);
        matmul(dst, Accum::Replace, self.as_ref(), other.as_ref(), 1.0, par());
        out
    }

    pub fn transposed(&self) -> TimeMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.get(r, c);
            }
        }
        out
    }

    pub fn scaled(mut self, s: f64) -> TimeMatrix {
        self.data.iter_mut().for_each(|v| *v *= s);
        self
    }

    /// Applies to a time-major vector with `nb` values per time node.
    pub fn apply(&self, x: &[f64], nb: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.cols * nb, "time matrix input length");
        let mut out = vec![0.0; self.rows * nb];
        let dst = MatMut::from_row_major_slice_mut(&mut out, self.rows, nb);
        matmul(dst, Accum::Replace, self.as_ref(), MatRef::from_row_major_slice(x, self.cols, nb), 1.0, par());
        out
    }

    pub fn apply_transpose(&self, y: &[f64], nb: usize) -> Vec<f64> {
        assert_eq!(y.len(), self.rows * nb, "time matrix input length");
        let mut out = vec![0.0; self.cols * nb];
        let dst = MatMut::from_row_major_slice_mut(&mut out, self.cols, nb);
        matmul(
            dst,
            Accum::Replace,
            self.as_ref().transpose(),
            MatRef::from_row_major_slice(y, self.rows, nb),
            1.0,
            par(),
        );
        out
    }
}

/// Applies `R`, `Θ` or `I` to a signal on `(0, T)`, or `J` to a signal on `(0, 2T)`.
pub fn apply_time_op(kind: TimeOpKind, f: &BoundarySignal<f64>) -> Result<BoundarySignal<f64>> {
    let time = *f.layout().time();
    let (half, out_time) = match kind {
        TimeOpKind::R | TimeOpKind::I => (time, time),
        TimeOpKind::Theta => (time, time.doubled()),
        TimeOpKind::J => {
            let half = time.halved().map_err(|e| Error::Dimension(e.to_string()))?;
            (half, half)
        }
    };
    let m = TimeMatrix::of(kind, &half);
    let nb = f.layout().n_bnd();
    BoundarySignal::new(f.layout().with_time(out_time), m.apply(f.values(), nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    /// Restriction to the boundary.
    Value,
    /// Outward normal derivative.
    Normal,
}

/// Boundary trace of a field, replicated over every node of `layout`'s time grid.
pub fn trace_op<T: Scalar>(kind: TraceKind, phi: &Field<T>, layout: &SignalLayout) -> Result<BoundarySignal<T>> {
    let boundary = BoundaryGeometry::new(phi.grid());
    let per_node: Vec<T> = match kind {
        TraceKind::Value => boundary.trace_nodes().iter().map(|t| phi.values()[t.index]).collect(),
        TraceKind::Normal => boundary.normal_derivative(phi.values()),
    };
    if per_node.len() != layout.n_bnd() {
        return Err(Error::Dimension("field grid does not match the signal layout".into()));
    }
    Ok(BoundarySignal::constant_in_time(layout, &per_node))
}

/// Scales node values by the boundary weights, in place.
fn scale_nodes(x: &mut [f64], ds: &[f64], inverse: bool) {
    let nb = ds.len();
    for (i, v) in x.iter_mut().enumerate() {
        if inverse {
            *v /= ds[i % nb];
        } else {
            *v *= ds[i % nb];
        }
    }
}

/// Matrix-free `K(Λ_{2T}) = R Λ_T R J Θ − J Λ_{2T} Θ` on signals over `(0, T)`.
///
/// `K` is the `L²(Υ)` representative of the bilinear form
/// `(f, h) ↦ ⟨Λ_T f, J Θ h⟩ − ⟨f, J Λ_{2T} Θ h⟩`, with both pairings taken on
/// the solver grid, where `R Λ_T R` becomes the adjoint of `Λ_T`. Coefficients
/// at `t = 0` are outside the admissible class and map to zero.
pub struct ConnectingOperator<'a> {
    lam_2t: &'a DtnMatrix,
    lam_t: DtnMatrix,
    /// `dt · J P` from the signal grid on `(0, 2T)` to the solver grid on `(0, T)`.
    jp: TimeMatrix,
    /// `dt · Pᵀ J` from the solver grid on `(0, 2T)` to the signal grid on `(0, T)`.
    pj: TimeMatrix,
    theta: TimeMatrix,
    ds: Vec<f64>,
    w: Vec<f64>,
}

impl<'a> ConnectingOperator<'a> {
    pub fn new(lam_2t: &'a DtnMatrix) -> Result<Self> {
        let lam_t = lam_2t.restrict_causal()?;
        let half = *lam_t.time();
        let m = lam_t.substeps();
        let fine_half = *lam_t.out_time();
        let dt = fine_half.dt();
        let j = TimeMatrix::of(TimeOpKind::J, &fine_half);
        let jp = j.then_after(&TimeMatrix::interpolation(2 * half.n_steps, m)).scaled(dt);
        let pj = TimeMatrix::interpolation(half.n_steps, m).transposed().then_after(&j).scaled(dt);
        let layout = lam_t.layout();
        Ok(ConnectingOperator {
            lam_2t,
            theta: TimeMatrix::of(TimeOpKind::Theta, &half),
            ds: layout.surface_weights().to_vec(),
            w: layout.l2_weights(),
            lam_t,
            jp,
            pj,
        })
    }

    pub fn layout(&self) -> &SignalLayout {
        self.lam_t.layout()
    }

    pub fn lambda_t(&self) -> &DtnMatrix {
        &self.lam_t
    }

    fn nb(&self) -> usize {
        self.lam_t.n_bnd()
    }

    fn admissible(&self, x: &[f64]) -> Vec<f64> {
        let mut x = x.to_vec();
        x[..self.nb()].iter_mut().for_each(|v| *v = 0.0);
        x
    }

    /// The bilinear form `𝔅_E h` for an extension `ext` in the second term and
    /// `first` (an extension) in the first.
    fn form(&self, h: &[f64], first: &TimeMatrix, ext: &TimeMatrix) -> Result<Vec<f64>> {
        let nb = self.nb();
        let h = self.admissible(h);
        let mut z = self.jp.apply(&first.apply(&h, nb), nb);
        scale_nodes(&mut z, &self.ds, false);
        let mut out = self.lam_t.apply_transpose(&z)?;
        let mut y = self.lam_2t.apply(&ext.apply(&h, nb))?;
        scale_nodes(&mut y, &self.ds, false);
        let second = self.pj.apply(&y, nb);
        out.iter_mut().zip(&second).for_each(|(a, b)| *a -= b);
        out[..nb].iter_mut().for_each(|v| *v = 0.0);
        Ok(out)
    }

    fn form_transpose(&self, y: &[f64], first: &TimeMatrix, ext: &TimeMatrix) -> Result<Vec<f64>> {
        let nb = self.nb();
        let y = self.admissible(y);
        let mut a = self.lam_t.apply(&y)?;
        scale_nodes(&mut a, &self.ds, false);
        let mut out = first.apply_transpose(&self.jp.apply_transpose(&a, nb), nb);
        let mut b = self.pj.apply_transpose(&y, nb);
        scale_nodes(&mut b, &self.ds, false);
        let second = ext.apply_transpose(&self.lam_2t.apply_transpose(&b)?, nb);
        out.iter_mut().zip(&second).for_each(|(a, b)| *a -= b);
        out[..nb].iter_mut().for_each(|v| *v = 0.0);
        Ok(out)
    }

    fn apply_extended(&self, x: &[f64], first: &TimeMatrix, ext: &TimeMatrix) -> Result<Vec<f64>> {
        let mut y = self.form(x, first, ext)?;
        y.iter_mut().zip(&self.w).for_each(|(v, w)| *v /= w);
        Ok(y)
    }

    fn apply_extended_transpose(&self, y: &[f64], first: &TimeMatrix, ext: &TimeMatrix) -> Result<Vec<f64>> {
        let y: Vec<f64> = y.iter().zip(&self.w).map(|(v, w)| v / w).collect();
        self.form_transpose(&y, first, ext)
    }
}

impl LinearOperator for ConnectingOperator<'_> {
    fn nrows(&self) -> usize {
        self.lam_t.n_in()
    }

    fn ncols(&self) -> usize {
        self.lam_t.n_in()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.lam_t.n_in())?;
        self.apply_extended(x, &self.theta, &self.theta)
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(y, self.lam_t.n_in())?;
        self.apply_extended_transpose(y, &self.theta, &self.theta)
    }
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension(format!("vector has {} entries, operator needs {n}", x.len())));
    }
    Ok(())
}

/// Dense `K(Λ_{2T})` on the `(0, T)` signal layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectingMatrix {
    layout: SignalLayout,
    matrix: Mat<f64>,
    fingerprint: String,
}

impl ConnectingMatrix {
    pub fn new(layout: SignalLayout, matrix: Mat<f64>, fingerprint: String) -> Result<Self> {
        if matrix.nrows() != layout.len() || matrix.ncols() != layout.len() {
            return Err(Error::Dimension("matrix does not match the signal layout".into()));
        }
        Ok(ConnectingMatrix { layout, matrix, fingerprint })
    }

    pub fn layout(&self) -> &SignalLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// `G K`, the matrix of the bilinear form in the `L²(Υ)` Gram.
    pub fn form(&self) -> Mat<f64> {
        let w = self.layout.l2_weights();
        Mat::from_fn(w.len(), w.len(), |i, j| w[i] * self.matrix[(i, j)])
    }
}

impl LinearOperator for ConnectingMatrix {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.matrix.ncols())?;
        let mut out = vec![0.0; self.matrix.nrows()];
        matmul(
            MatMut::from_column_major_slice_mut(&mut out, self.matrix.nrows(), 1),
            Accum::Replace,
            self.matrix.as_ref(),
            MatRef::from_column_major_slice(x, x.len(), 1),
            1.0,
            par(),
        );
        Ok(out)
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(y, self.matrix.nrows())?;
        let mut out = vec![0.0; self.matrix.ncols()];
        matmul(
            MatMut::from_column_major_slice_mut(&mut out, self.matrix.ncols(), 1),
            Accum::Replace,
            self.matrix.as_ref().transpose(),
            MatRef::from_column_major_slice(y, y.len(), 1),
            1.0,
            par(),
        );
        Ok(out)
    }
}

/// Assembles `K(Λ_{2T})` densely.
pub fn build_k(lam_2t: &DtnMatrix) -> Result<ConnectingMatrix> {
    let op = ConnectingOperator::new(lam_2t)?;
    let layout = op.layout().clone();
    let nt = layout.n_time();
    let nb = layout.n_bnd();
    let m = lam_2t.substeps();
    let lags = lam_2t.n_lags();
    let n_fine_half = op.lam_t.out_time().n_nodes();
    let kernels = MatRef::from_row_major_slice(lam_2t.kernel(), lags, nb * nb);
    let n = nt * nb;
    let mut matrix = Mat::<f64>::zeros(n, n);

    // first term: ds_{b'} Σ_r (JPΘ)[(j−1)m + r, i] · kernel_r[b'][b]
    let coeff = Mat::<f64>::from_fn(nt * nt, lags, |p, r| {
        let (j, i) = (p / nt, p % nt);
        if j == 0 || i == 0 {
            return 0.0;
        }
        let k = (j - 1) * m + r;
        if k < n_fine_half {
            op.jp.get(k, i)
        } else {
            0.0
        }
    });
    let mut blocks = Mat::<f64>::zeros(nt * nt, nb * nb);
    matmul(blocks.as_mut(), Accum::Replace, coeff.as_ref(), kernels, 1.0, par());
    for i in 1..nt {
        for bp in 0..nb {
            let col = i * nb + bp;
            for j in 1..nt {
                let p = j * nt + i;
                for b in 0..nb {
                    matrix[(j * nb + b, col)] = op.ds[bp] * blocks[(p, bp * nb + b)];
                }
            }
        }
    }

    // second term: ds_b Σ_r (Pᵀ J)[j, (i−1)m + r] · kernel_r[b][b']
    let coeff = Mat::<f64>::from_fn(nt * nt, lags, |p, r| {
        let (j, i) = (p / nt, p % nt);
        if j == 0 || i == 0 {
            return 0.0;
        }
        let l = (i - 1) * m + r;
        if l < lags {
            op.pj.get(j, l)
        } else {
            0.0
        }
    });
    matmul(blocks.as_mut(), Accum::Replace, coeff.as_ref(), kernels, 1.0, par());
    for i in 1..nt {
        for bp in 0..nb {
            let col = i * nb + bp;
            for j in 1..nt {
                let p = j * nt + i;
                for b in 0..nb {
                    matrix[(j * nb + b, col)] -= op.ds[b] * blocks[(p, b * nb + bp)];
                }
            }
        }
    }
    drop(blocks);
    for c in 0..n {
        for r in 0..n {
            matrix[(r, c)] /= op.w[r];
        }
    }
    ConnectingMatrix::new(layout, matrix, lam_2t.fingerprint().to_string())
}

/// `K − K^†` where `K^† = G⁻¹ Kᵀ G` is the adjoint in a diagonal Gram.
struct GramSkew<'a> {
    op: &'a dyn LinearOperator,
    w: Vec<f64>,
}

impl LinearOperator for GramSkew<'_> {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }

    fn ncols(&self) -> usize {
        self.op.ncols()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.op.apply(x)?;
        let gx: Vec<f64> = x.iter().zip(&self.w).map(|(a, w)| a * w).collect();
        let adj = self.op.apply_transpose(&gx)?;
        for ((v, a), w) in y.iter_mut().zip(&adj).zip(&self.w) {
            *v -= a / w;
        }
        Ok(y)
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        // (K − G⁻¹KᵀG)ᵀ = Kᵀ − G K G⁻¹
        let mut out = self.op.apply_transpose(y)?;
        let gy: Vec<f64> = y.iter().zip(&self.w).map(|(a, w)| a / w).collect();
        let k = self.op.apply(&gy)?;
        for ((v, a), w) in out.iter_mut().zip(&k).zip(&self.w) {
            *v -= a * w;
        }
        Ok(out)
    }
}

/// Structure diagnostics of a connecting operator in the `L²(Υ)` geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KStructure {
    /// `‖K‖_{L²→L²}`.
    pub norm: f64,
    /// `‖K − K^†‖ / ‖K‖`.
    pub symmetry: f64,
    /// `max(0, −λ_min) / λ_max` of the symmetric part.
    pub psd: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn k_structure(k: &dyn LinearOperator, layout: &SignalLayout) -> Result<KStructure> {
    let gram = Gram::new(Space::L2, layout);
    let norm = operator_norm(k, &gram, &gram)?;
    let skew = GramSkew { op: k, w: layout.l2_weights() };
    let asym = operator_norm(&skew, &gram, &gram)?;
    let w = layout.l2_weights();
    let sym = |x: &[f64]| -> Result<Vec<f64>> {
        let mut y = k.apply(x)?;
        let gx: Vec<f64> = x.iter().zip(&w).map(|(a, w)| a * w).collect();
        let adj = k.apply_transpose(&gx)?;
        for ((v, a), wi) in y.iter_mut().zip(&adj).zip(&w) {
            *v = 0.5 * (*v + a / wi);
        }
        Ok(y)
    };
    let weight = |x: &[f64]| x.iter().zip(&w).map(|(a, w)| a * w).collect::<Vec<f64>>();
    let ext = lanczos_extremes(layout.len(), &sym, &weight, 1e-10, 600)?;
    Ok(KStructure {
        norm,
        symmetry: asym / norm,
        psd: (-ext.min).max(0.0) / ext.max,
        lambda_min: ext.min,
        lambda_max: ext.max,
    })
}

/// Interior RMS of the discrete Laplacian relative to the interior RMS of the field.
pub fn harmonic_residual(phi: &ComplexField) -> f64 {
    let g = phi.grid();
    let mut lap_re = vec![0.0; g.n_nodes()];
    let mut lap_im = vec![0.0; g.n_nodes()];
    Leapfrog::laplacian(g, phi.re().values(), &mut lap_re);
    Leapfrog::laplacian(g, phi.im().values(), &mut lap_im);
    let (mut num, mut den) = (0.0, 0.0);
    for i in (0..g.n_nodes()).filter(|&i| !g.is_boundary(i)) {
        num += lap_re[i].powi(2) + lap_im[i].powi(2);
        den += phi.values()[i].norm_sqr();
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// `Bφ = R Λ_T R (t φ|_∂M) − (T − t) ∂_ν φ` for real `φ`, in the same
/// discrete pairing as [`ConnectingOperator`].
fn apply_b_real(lam_t: &DtnMatrix, phi: &ScalarField) -> Result<Vec<f64>> {
    let layout = lam_t.layout();
    let nb = layout.n_bnd();
    let boundary = BoundaryGeometry::new(phi.grid());
    let value: Vec<f64> = boundary.trace_nodes().iter().map(|t| phi.values()[t.index]).collect();
    let normal = boundary.normal_derivative(phi.values());
    let ds = layout.surface_weights();
    let fine = lam_t.out_time();
    let dt = fine.dt();
    let mut g = vec![0.0; fine.n_nodes() * nb];
    let mut d = vec![0.0; fine.n_nodes() * nb];
    for k in 0..fine.n_nodes() {
        let rest = dt * (fine.t_final - fine.time(k));
        for b in 0..nb {
            g[k * nb + b] = rest * ds[b] * value[b];
            d[k * nb + b] = rest * ds[b] * normal[b];
        }
    }
    let mut out = lam_t.apply_transpose(&g)?;
    let p = TimeMatrix::interpolation(layout.time().n_steps, lam_t.substeps());
    let second = p.apply_transpose(&d, nb);
    let w = layout.l2_weights();
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i < nb { 0.0 } else { (*o - second[i]) / w[i] };
    }
    Ok(out)
}

/// `B(Λ_T) φ` for a harmonic field; rejects `φ` whose harmonic residual exceeds `tolerance`.
pub fn apply_b(lam_t: &DtnMatrix, phi: &ComplexField, tolerance: f64) -> Result<BoundarySignal<Complex64>> {
    lam_t.grid().check_same(phi.grid())?;
    let residual = harmonic_residual(phi);
    if residual > tolerance {
        return Err(Error::NotHarmonic { residual, tolerance });
    }
    let layout = lam_t.layout().clone();
    let re = BoundarySignal::new(layout.clone(), apply_b_real(lam_t, &phi.re())?)?;
    let im = BoundarySignal::new(layout, apply_b_real(lam_t, &phi.im())?)?;
    BoundarySignal::from_parts(&re, &im)
}

/// The two components of `‖A‖_*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarNorm {
    pub k_part: f64,
    pub lambda_part: f64,
}

impl StarNorm {
    pub fn total(&self) -> f64 {
        self.k_part + self.lambda_part
    }
}

/// `‖K(A)‖_{L²→L²} + ‖A_T‖_{H¹_cc→L²}` for a map `A` on `(0, 2T)`.
pub fn star_norm(a_2t: &DtnMatrix) -> Result<StarNorm> {
    let k = ConnectingOperator::new(a_2t)?;
    let layout = k.layout().clone();
    let l2 = Gram::new(Space::L2, &layout);
    let h1 = Gram::new(Space::H1cc, &layout);
    let k_part = operator_norm(&k, &l2, &l2)?;
    let out = Gram::new(Space::L2, &k.lambda_t().out_layout());
    let lambda_part = operator_norm(k.lambda_t(), &h1, &out)?;
    Ok(StarNorm { k_part, lambda_part })
}

/// `‖Λ̃ − Λ‖_*`; `K` is linear in `Λ`, so this is the star norm of the difference.
pub fn star_distance(tilde_2t: &DtnMatrix, base_2t: &DtnMatrix) -> Result<StarNorm> {
    star_norm(&tilde_2t.sub(base_2t)?)
}

impl LinearOperator for DtnMatrix {
    fn nrows(&self) -> usize {
        self.n_out()
    }

    fn ncols(&self) -> usize {
        self.n_in()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        DtnMatrix::apply(self, x)
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        DtnMatrix::apply_transpose(self, y)
    }
}

/// Extensions `(0, T) → (0, 2T)` that keep the signal on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// `Θ`: zero on `(T, 2T]`.
    Zero,
    /// `f(T)` on `(T, 2T]`.
    Constant,
    /// `f(2T − t)` on `(T, 2T]`.
    EvenReflection,
}

impl Extension {
    pub fn matrix(&self, half: &TimeGrid) -> TimeMatrix {
        let n = half.n_steps;
        let mut m = TimeMatrix::zeros(2 * n + 1, n + 1);
        for k in 0..=2 * n {
            let src = if k <= n {
                Some(k)
            } else {
                match self {
                    Extension::Zero => None,
                    Extension::Constant => Some(n),
                    Extension::EvenReflection => Some(2 * n - k),
                }
            };
            if let Some(s) = src {
                m.set(k, s, 1.0);
            }
        }
        m
    }
}

struct ExtendedDifference<'a> {
    k: &'a ConnectingOperator<'a>,
    first: [TimeMatrix; 2],
    ext: [TimeMatrix; 2],
}

impl LinearOperator for ExtendedDifference<'_> {
    fn nrows(&self) -> usize {
        self.k.nrows()
    }

    fn ncols(&self) -> usize {
        self.k.ncols()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.k.apply_extended(x, &self.first[0], &self.ext[0])?;
        let b = self.k.apply_extended(x, &self.first[1], &self.ext[1])?;
        Ok(a.iter().zip(&b).map(|(p, q)| p - q).collect())
    }

    fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        let a = self.k.apply_extended_transpose(y, &self.first[0], &self.ext[0])?;
        let b = self.k.apply_extended_transpose(y, &self.first[1], &self.ext[1])?;
        Ok(a.iter().zip(&b).map(|(p, q)| p - q).collect())
    }
}

/// `‖𝒦(Λ_{2T}∘E₁) − 𝒦(Λ_{2T}∘E₂)‖_{L²→L²}` with `𝒦(A) = R A_T R J Θ − J A`.
pub fn extension_invariance_check(lam_2t: &DtnMatrix, e1: Extension, e2: Extension) -> Result<f64> {
    extension_difference(lam_2t, e1, e2, false)
}

/// As [`extension_invariance_check`], but with the extension also used inside
/// the first term: `R Λ_T R J E − J Λ_{2T} E`.
pub fn extension_invariance_check_matched(lam_2t: &DtnMatrix, e1: Extension, e2: Extension) -> Result<f64> {
    extension_difference(lam_2t, e1, e2, true)
}

fn extension_difference(lam_2t: &DtnMatrix, e1: Extension, e2: Extension, matched: bool) -> Result<f64> {
    if e1 == e2 {
        return Ok(0.0);
    }
    let k = ConnectingOperator::new(lam_2t)?;
    let half = *k.layout().time();
    let ext = [e1.matrix(&half), e2.matrix(&half)];
    let first = if matched { ext.clone() } else { [k.theta.clone(), k.theta.clone()] };
    let diff = ExtendedDifference { k: &k, first, ext };
    let l2 = Gram::new(Space::L2, k.layout());
    operator_norm(&diff, &l2, &l2)
}

/// Both sides of the Blagoveščenskiĭ identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlagoCheck {
    /// `(u^f(T), u^h(T))_{L²(M; c⁻² dx)}`.
    pub interior: f64,
    /// `(f, K h)_{L²(Υ)}`.
    pub boundary: f64,
    pub residual: f64,
}

/// Final interior state `u^f(T)` for a control on the `(0, T)` signal grid.
pub fn final_state(c: &ScalarField, f: &BoundarySignal<f64>, substeps: usize) -> Result<ScalarField> {
    let time = f.layout().time();
    let rec = solve_ibvp(
        c,
        &WaveProblem {
            control: Some(DirichletControl::new(f.clone())?),
            initial: None,
            t_final: time.t_final,
            n_steps: time.n_steps * substeps,
            snapshot_times: vec![time.t_final],
        },
    )?;
    Ok(rec.snapshots.into_iter().next().expect("one snapshot requested").u)
}

/// Relative mismatch between both sides of the Blagoveščenskiĭ identity for
/// controls `f`, `h` on the `(0, T)` grid of `k`.
pub fn blago_residual(
    f: &BoundarySignal<f64>,
    h: &BoundarySignal<f64>,
    c: &ScalarField,
    k: &dyn LinearOperator,
    substeps: usize,
) -> Result<BlagoCheck> {
    f.layout().check_same(h.layout())?;
    let kh = BoundarySignal::new(f.layout().clone(), k.apply(h.values())?)?;
    let boundary = f.inner(&kh)?;
    let uf = final_state(c, f, substeps)?;
    let uh = final_state(c, h, substeps)?;
    let w = c.map(|v| v.powi(-2));
    let interior = inner_product(&uf, &uh, &w)?;
    let scale = interior.abs().max(boundary.abs()).max(1e-300);
    let residual = if interior == 0.0 && boundary == 0.0 { 0.0 } else { (interior - boundary).abs() / scale };
    Ok(BlagoCheck { interior, boundary, residual })
}
