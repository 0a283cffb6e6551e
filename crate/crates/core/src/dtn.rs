//! Discrete Dirichlet-to-Neumann maps.
//!
//! Controls are expanded in the tensor basis "hat in time × nodal hat on the
//! boundary". The leapfrog scheme started from rest is invariant under shifts
//! by whole signal steps, so the response to the hat at signal node `j` is the
//! response to the hat at node 1 delayed by `(j − 1)` signal steps; only the
//! latter is stored, one `n_bnd × n_bnd` block per solver step.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{BoundaryGeometry, ScalarField, SpatialGrid, TimeGrid};
use crate::linalg::par;
use crate::signal::{BoundarySignal, SignalLayout};
use crate::solver::{max_stable_timestep, stable_timestep, Leapfrog};

/// Time discretization of an experiment: `(0, T)` split into `signal_steps`
/// signal intervals, each advanced by `substeps` solver steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePlan {
    pub t_final: f64,
    pub signal_steps: usize,
    pub substeps: usize,
}

impl TimePlan {
    pub fn new(t_final: f64, signal_steps: usize, substeps: usize) -> Result<Self> {
        TimeGrid::new(t_final, signal_steps)?;
        if substeps == 0 {
            return Err(Error::TimeGrid("substeps must be positive".into()));
        }
        Ok(TimePlan { t_final, signal_steps, substeps })
    }

    /// Coarsest signal grid whose solver step stays below `stable_timestep(c, safety)`.
    pub fn auto(c_max: f64, grid: &SpatialGrid, t_final: f64, substeps: usize, safety: f64) -> Result<Self> {
        let probe = ScalarField::constant(grid, c_max);
        let dt = stable_timestep(&probe, safety);
        let n = (t_final / (dt * substeps as f64)).ceil().max(1.0) as usize;
        Self::new(t_final, n, substeps)
    }

    pub fn signal_dt(&self) -> f64 {
        self.t_final / self.signal_steps as f64
    }

    pub fn solver_dt(&self) -> f64 {
        self.signal_dt() / self.substeps as f64
    }

    /// Signal grid on `(0, T)`.
    pub fn time_t(&self) -> TimeGrid {
        TimeGrid { t_final: self.t_final, n_steps: self.signal_steps }
    }

    /// Signal grid on `(0, 2T)`.
    pub fn time_2t(&self) -> TimeGrid {
        self.time_t().doubled()
    }
}

/// SHA-256 of a speed field and its grid.
pub fn speed_fingerprint(c: &ScalarField) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&c.grid().spec()).expect("grid spec serializes"));
    for v in c.values() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// A discrete DtN map in shift-kernel form.
///
/// The domain is the signal layout (coefficients of time hats on the signal
/// grid); the codomain holds trace samples at every solver step. The value at
/// `t = 0` of an input is ignored; admissible controls vanish there.
#[derive(Debug, Clone, PartialEq)]
pub struct DtnMatrix {
    grid: SpatialGrid,
    layout: SignalLayout,
    out_time: TimeGrid,
    substeps: usize,
    fingerprint: String,
    kernel: Vec<f64>,
}

impl DtnMatrix {
    pub(crate) fn from_parts(
        grid: SpatialGrid,
        layout: SignalLayout,
        substeps: usize,
        fingerprint: String,
        kernel: Vec<f64>,
    ) -> Result<Self> {
        let nb = layout.n_bnd();
        let time = layout.time();
        let out_time = TimeGrid::new(time.t_final, time.n_steps * substeps)?;
        let need = out_time.n_nodes() * nb * nb;
        if kernel.len() != need {
            return Err(Error::Dimension(format!("kernel needs {need} values, got {}", kernel.len())));
        }
        Ok(DtnMatrix { grid, layout, out_time, substeps, fingerprint, kernel })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Domain layout on the signal grid.
    pub fn layout(&self) -> &SignalLayout {
        &self.layout
    }

    /// Codomain layout on the solver grid.
    pub fn out_layout(&self) -> SignalLayout {
        self.layout.with_time(self.out_time)
    }

    /// Signal grid of the domain.
    pub fn time(&self) -> &TimeGrid {
        self.layout.time()
    }

    /// Solver grid of the codomain.
    pub fn out_time(&self) -> &TimeGrid {
        &self.out_time
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn n_bnd(&self) -> usize {
        self.layout.n_bnd()
    }

    pub fn n_in(&self) -> usize {
        self.layout.len()
    }

    pub fn n_out(&self) -> usize {
        self.out_time.n_nodes() * self.n_bnd()
    }

    /// Number of stored lags (solver steps).
    pub fn n_lags(&self) -> usize {
        self.out_time.n_nodes()
    }

    /// Lag-major `n_bnd × n_bnd` row-major blocks: block `r` is the response at
    /// solver step `(j − 1)·substeps + r` to the time hat at signal node `j ≥ 1`.
    pub(crate) fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    fn block(&self, r: usize) -> MatRef<'_, f64> {
        let nb = self.n_bnd();
        MatRef::from_row_major_slice(&self.kernel[r * nb * nb..(r + 1) * nb * nb], nb, nb)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x, self.n_in())?;
        let nb = self.n_bnd();
        let m = self.substeps;
        let n_out = self.out_time.n_nodes();
        let cols = self.layout.n_time() - 1;
        let mut out = vec![0.0; n_out * nb];
        let xm = MatRef::from_column_major_slice(&x[nb..], nb, cols);
        let mut tmp = Mat::<f64>::zeros(nb, cols);
        for r in 0..n_out {
            let used = ((n_out - 1 - r) / m + 1).min(cols);
            matmul(tmp.as_mut().subcols_mut(0, used), Accum::Replace, self.block(r), xm.subcols(0, used), 1.0, par());
            for jj in 0..used {
                let k = jj * m + r;
                let col = tmp.col(jj);
                for (b, o) in out[k * nb..(k + 1) * nb].iter_mut().enumerate() {
                    *o += col[b];
                }
            }
        }
        Ok(out)
    }

    /// Euclidean transpose of [`DtnMatrix::apply`].
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(y, self.n_out())?;
        let nb = self.n_bnd();
        let m = self.substeps;
        let n_out = self.out_time.n_nodes();
        let cols = self.layout.n_time() - 1;
        let mut out = vec![0.0; self.n_in()];
        let mut gathered = Mat::<f64>::zeros(nb, cols);
        let mut acc = Mat::<f64>::zeros(nb, cols);
        for r in 0..n_out {
            let used = ((n_out - 1 - r) / m + 1).min(cols);
            for jj in 0..used {
                let k = jj * m + r;
                for b in 0..nb {
                    gathered[(b, jj)] = y[k * nb + b];
                }
            }
            matmul(
                acc.as_mut().subcols_mut(0, used),
                Accum::Add,
                self.block(r).transpose(),
                gathered.as_ref().subcols(0, used),
                1.0,
                par(),
            );
        }
        for jj in 0..cols {
            for b in 0..nb {
                out[(jj + 1) * nb + b] = acc[(b, jj)];
            }
        }
        Ok(out)
    }

    pub fn apply_signal(&self, f: &BoundarySignal<f64>) -> Result<BoundarySignal<f64>> {
        self.layout.check_same(f.layout())?;
        BoundarySignal::new(self.out_layout(), self.apply(f.values())?)
    }

    /// Entry `(solver step k, b_out; signal node j, b_in)`.
    pub fn entry(&self, k: usize, b_out: usize, j: usize, b_in: usize) -> f64 {
        let nb = self.n_bnd();
        if j == 0 || k < (j - 1) * self.substeps {
            return 0.0;
        }
        let r = k - (j - 1) * self.substeps;
        self.kernel[r * nb * nb + b_out * nb + b_in]
    }

    /// Dense matrix, rows indexed by output dof and columns by input dof.
    pub fn dense(&self) -> Mat<f64> {
        let nb = self.n_bnd();
        Mat::from_fn(self.n_out(), self.n_in(), |r, c| self.entry(r / nb, r % nb, c / nb, c % nb))
    }

    /// `Λ_T` from `Λ_{2T}`: inputs on the signal grid of `[0, T]`, outputs on `[0, T]`.
    pub fn restrict_causal(&self) -> Result<DtnMatrix> {
        let time = self.time().halved()?;
        let nb = self.n_bnd();
        let keep = (time.n_steps * self.substeps + 1) * nb * nb;
        DtnMatrix::from_parts(
            self.grid.clone(),
            self.layout.with_time(time),
            self.substeps,
            self.fingerprint.clone(),
            self.kernel[..keep].to_vec(),
        )
    }

    pub fn check_compatible(&self, other: &DtnMatrix) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        self.layout.check_same(&other.layout)?;
        if self.substeps != other.substeps {
            return Err(Error::Dimension("maps use different solver steps".into()));
        }
        Ok(())
    }

    fn combine(&self, other: &DtnMatrix, a: f64, b: f64) -> Result<DtnMatrix> {
        self.check_compatible(other)?;
        let kernel = self.kernel.iter().zip(&other.kernel).map(|(p, q)| a * p + b * q).collect();
        Ok(DtnMatrix {
            kernel,
            fingerprint: format!("{a}*{}{b:+}*{}", self.fingerprint, other.fingerprint),
            ..self.clone_empty()
        })
    }

    fn clone_empty(&self) -> DtnMatrix {
        DtnMatrix {
            grid: self.grid.clone(),
            layout: self.layout.clone(),
            out_time: self.out_time,
            substeps: self.substeps,
            fingerprint: String::new(),
            kernel: Vec::new(),
        }
    }

    pub fn sub(&self, other: &DtnMatrix) -> Result<DtnMatrix> {
        self.combine(other, 1.0, -1.0)
    }

    pub fn add(&self, other: &DtnMatrix) -> Result<DtnMatrix> {
        self.combine(other, 1.0, 1.0)
    }

    pub fn scaled(&self, s: f64) -> DtnMatrix {
        DtnMatrix {
            kernel: self.kernel.iter().map(|v| s * v).collect(),
            fingerprint: format!("{s}*{}", self.fingerprint),
            ..self.clone_empty()
        }
    }
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension(format!("vector has {} entries, map needs {n}", x.len())));
    }
    Ok(())
}

/// Assembles `Λ` on `(0, 2T)` for the signal grid of `plan`.
pub fn assemble_dtn(c: &ScalarField, plan: &TimePlan) -> Result<DtnMatrix> {
    c.check_wave_speed(None)?;
    let grid = c.grid();
    let dt = plan.solver_dt();
    let dt_max = max_stable_timestep(c);
    if dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, dt_max });
    }
    let boundary = BoundaryGeometry::new(grid);
    let layout = SignalLayout::new(&boundary, plan.time_2t());
    let nb = boundary.n_trace();
    let m = plan.substeps;
    let lags = 2 * plan.signal_steps * m + 1;
    let inv_c2: Vec<f64> = c.values().iter().map(|v| v.powi(-2)).collect();

    // response to the time hat at the first signal node
    let respond = |b: usize| -> Vec<f64> {
        let stepper = Leapfrog::new(c, &boundary, dt);
        let mut resp = vec![0.0; lags * nb];
        let mut accel = vec![0.0; grid.n_nodes()];
        let mut dirichlet = |s: usize, out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[b] = (1.0 - (s as f64 / m as f64 - 1.0).abs()).max(0.0);
        };
        stepper.run(lags - 1, None, &mut dirichlet, |view| {
            view.boundary_acceleration(&boundary, false, &mut accel);
            let d = boundary.flux_trace(view.cur, &accel, &inv_c2);
            resp[view.k * nb..(view.k + 1) * nb].copy_from_slice(&d);
        });
        resp
    };

    let columns: Vec<Vec<f64>> = map_indices(nb, respond);
    let mut kernel = vec![0.0; lags * nb * nb];
    for (b, col) in columns.iter().enumerate() {
        for r in 0..lags {
            for bo in 0..nb {
                kernel[r * nb * nb + bo * nb + b] = col[r * nb + bo];
            }
        }
    }
    DtnMatrix::from_parts(grid.clone(), layout, m, speed_fingerprint(c), kernel)
}

#[cfg(feature = "parallel")]
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_ibvp, DirichletControl, WaveProblem};
    use approx::assert_abs_diff_eq;

    fn small() -> (ScalarField, TimePlan) {
        let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let c = ScalarField::from_fn(&g, |x| 1.0 + 0.2 * x[0] * x[1]);
        (c, TimePlan::new(0.8, 8, 2).unwrap())
    }

    #[test]
    fn matches_direct_simulation() {
        let (c, plan) = small();
        let lam = assemble_dtn(&c, &plan).unwrap();
        let layout = lam.layout().clone();
        let f = BoundarySignal::from_fn(&layout, |t, b| (t * (1.0 + 0.1 * b as f64)).sin());
        // the t = 0 value is zero, so the direct solver accepts it
        let rec = solve_ibvp(
            &c,
            &WaveProblem {
                control: Some(DirichletControl::new(f.clone()).unwrap()),
                t_final: layout.time().t_final,
                n_steps: layout.time().n_steps * plan.substeps,
                ..Default::default()
            },
        )
        .unwrap();
        let got = lam.apply(f.values()).unwrap();
        let nb = layout.n_bnd();
        // the last sample also sees the control beyond the final time
        for k in 0..lam.out_time().n_steps {
            for b in 0..nb {
                assert_abs_diff_eq!(got[k * nb + b], rec.normal_trace.at(k, b), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn dense_agrees_with_apply_and_transpose() {
        let (c, plan) = small();
        let lam = assemble_dtn(&c, &plan).unwrap().restrict_causal().unwrap();
        let a = lam.dense();
        let x: Vec<f64> = (0..lam.n_in()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..lam.n_out()).map(|i| ((i * 5) % 13) as f64 - 6.0).collect();
        let ax = lam.apply(&x).unwrap();
        let aty = lam.apply_transpose(&y).unwrap();
        for r in 0..lam.n_out() {
            let row: f64 = (0..lam.n_in()).map(|j| a[(r, j)] * x[j]).sum();
            assert_abs_diff_eq!(row, ax[r], epsilon = 1e-9);
        }
        for j in 0..lam.n_in() {
            let col: f64 = (0..lam.n_out()).map(|r| a[(r, j)] * y[r]).sum();
            assert_abs_diff_eq!(col, aty[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn arrival_time_in_one_dimension() {
        let g = SpatialGrid::new(&[0.0], &[1.0], &[128]).unwrap();
        let c = ScalarField::constant(&g, 1.0);
        let plan = TimePlan::new(1.0, 40, 4).unwrap();
        let lam = assemble_dtn(&c, &plan).unwrap();
        // response at the right end to the hat at t_1 on the left end; arrival = first sample above 10% of the peak
        let n = lam.out_time().n_nodes();
        let dt = lam.out_time().dt();
        let peak = (0..n).map(|k| lam.entry(k, 1, 1, 0).abs()).fold(0.0, f64::max);
        let first = (0..n).find(|&k| lam.entry(k, 1, 1, 0).abs() >= 0.1 * peak).unwrap();
        let t = first as f64 * dt - plan.signal_dt();
        assert!((t - 1.0).abs() <= 2.0 * plan.signal_dt(), "arrival at {t}");
    }

    #[test]
    fn cfl_is_enforced() {
        let (c, _) = small();
        let plan = TimePlan::new(0.8, 2, 1).unwrap();
        assert!(matches!(assemble_dtn(&c, &plan), Err(Error::Stability { .. })));
    }

    #[test]
    fn restriction_keeps_entries() {
        let (c, plan) = small();
        let l2 = assemble_dtn(&c, &plan).unwrap();
        let l1 = l2.restrict_causal().unwrap();
        let nb = l1.n_bnd();
        assert_eq!(l1.out_time().n_steps * 2, l2.out_time().n_steps);
        for k in 0..l1.out_time().n_nodes() {
            for j in 0..l1.layout().n_time() {
                assert_eq!(l1.entry(k, 3, j, nb - 1), l2.entry(k, 3, j, nb - 1));
            }
        }
    }
}
