//! Leapfrog finite differences for `u_tt = c² Δu` with Dirichlet data.

use crate::error::{Error, Result};
use crate::grid::{BoundaryGeometry, ScalarField, SpatialGrid, TimeGrid};
use crate::signal::{BoundarySignal, SignalLayout};

/// `safety · h_min / (√dim · max c)`.
pub fn stable_timestep(c: &ScalarField, safety: f64) -> f64 {
    let g = c.grid();
    safety * g.h_min() / ((g.dim() as f64).sqrt() * c.max())
}

/// Largest step for which the scheme is stable: `1 / (max c · sqrt(Σ 1/h_i²))`.
pub fn max_stable_timestep(c: &ScalarField) -> f64 {
    let g = c.grid();
    let s: f64 = (0..g.dim()).map(|a| g.spacing(a).powi(-2)).sum();
    1.0 / (c.max() * s.sqrt())
}

/// Dirichlet data `f(t_k, x_b)` on a (possibly coarser) time grid; the solver
/// interpolates linearly in time between its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletControl {
    signal: BoundarySignal<f64>,
}

impl DirichletControl {
    /// Requires `f(0, ·) = 0`, compatible with the zero initial state.
    pub fn new(signal: BoundarySignal<f64>) -> Result<Self> {
        if signal.time_slice(0).iter().any(|&v| v != 0.0) {
            return Err(Error::Precondition("control must vanish at t = 0".into()));
        }
        Ok(DirichletControl { signal })
    }

    pub fn signal(&self) -> &BoundarySignal<f64> {
        &self.signal
    }
}

/// One recorded time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub u: ScalarField,
    pub ut: ScalarField,
}

/// Output of [`solve_ibvp`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveRecord {
    pub snapshots: Vec<Snapshot>,
    /// Outward normal derivative on the trace nodes at every solver step.
    pub normal_trace: BoundarySignal<f64>,
    pub dt: f64,
    pub cfl: f64,
}

impl WaveRecord {
    pub fn snapshot(&self, t: f64) -> Result<&Snapshot> {
        let tol = 1e-9 * self.dt.max(t.abs() * 1e-3);
        self.snapshots
            .iter()
            .find(|s| (s.t - t).abs() <= tol.max(1e-12))
            .ok_or_else(|| Error::Lookup(format!("no snapshot recorded at t = {t}")))
    }
}

/// Problem data for [`solve_ibvp`].
#[derive(Debug, Clone, Default)]
pub struct WaveProblem {
    pub control: Option<DirichletControl>,
    pub initial: Option<(ScalarField, ScalarField)>,
    pub t_final: f64,
    pub n_steps: usize,
    pub snapshot_times: Vec<f64>,
}

/// Solves the wave equation with Dirichlet control and/or initial data and
/// homogeneous-in-the-other-slot data.
pub fn solve_ibvp(c: &ScalarField, problem: &WaveProblem) -> Result<WaveRecord> {
    c.check_wave_speed(None)?;
    let grid = c.grid();
    let time = TimeGrid::new(problem.t_final, problem.n_steps)?;
    let dt = time.dt();
    let dt_max = max_stable_timestep(c);
    if dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::Stability { dt, dt_max });
    }
    let boundary = BoundaryGeometry::new(grid);

    let control = match &problem.control {
        Some(ctrl) => Some(ControlSampler::new(ctrl.signal(), &boundary, &time)?),
        None => None,
    };
    if let Some((u0, u1)) = &problem.initial {
        grid.check_same(u0.grid())?;
        grid.check_same(u1.grid())?;
    }

    let mut want: Vec<(usize, f64)> = Vec::new();
    for &t in &problem.snapshot_times {
        let k = time
            .node_of(t)
            .ok_or_else(|| Error::TimeGrid(format!("snapshot time {t} is not a solver step")))?;
        want.push((k, t));
    }
    let need_extra = want.iter().any(|&(k, _)| k == time.n_steps);

    let layout = SignalLayout::new(&boundary, time);
    let n_bnd = boundary.n_trace();
    let mut trace = vec![0.0; layout.len()];
    let mut snaps: Vec<Snapshot> = Vec::new();

    let stepper = Leapfrog::new(c, &boundary, dt);
    let inv_c2: Vec<f64> = c.values().iter().map(|v| v.powi(-2)).collect();
    let mut accel = vec![0.0; grid.n_nodes()];
    let initial = problem.initial.as_ref().map(|(a, b)| (a.values(), b.values()));
    let mut dirichlet = |k: usize, out: &mut [f64]| match &control {
        Some(s) => s.fill(k, out),
        None => out.iter_mut().for_each(|v| *v = 0.0),
    };
    let steps = time.n_steps + usize::from(need_extra);
    stepper.run(steps, initial, &mut dirichlet, |view| {
        let k = view.k;
        if k <= time.n_steps {
            view.boundary_acceleration(&boundary, initial.is_some(), &mut accel);
            let d = boundary.flux_trace(view.cur, &accel, &inv_c2);
            trace[k * n_bnd..(k + 1) * n_bnd].copy_from_slice(&d);
        }
        for &(kk, t) in &want {
            if kk == k {
                let ut = view.velocity(initial.map(|i| i.1), grid);
                snaps.push(Snapshot {
                    t,
                    u: ScalarField::new(grid.clone(), view.cur.to_vec()).expect("grid sized"),
                    ut: ScalarField::new(grid.clone(), ut).expect("grid sized"),
                });
            }
        }
    });

    Ok(WaveRecord {
        snapshots: snaps,
        normal_trace: BoundarySignal::new(layout, trace)?,
        dt,
        cfl: dt / dt_max,
    })
}

/// Linear-in-time evaluation of a control on solver steps.
pub(crate) struct ControlSampler<'a> {
    signal: &'a BoundarySignal<f64>,
    ratio: usize,
    last: usize,
}

impl<'a> ControlSampler<'a> {
    pub(crate) fn new(
        signal: &'a BoundarySignal<f64>,
        boundary: &BoundaryGeometry,
        solver_time: &TimeGrid,
    ) -> Result<Self> {
        let ct = signal.layout().time();
        if signal.layout().n_bnd() != boundary.n_trace() {
            return Err(Error::Dimension("control boundary does not match grid".into()));
        }
        if (ct.t_final - solver_time.t_final).abs() > 1e-12 * ct.t_final
            || solver_time.n_steps % ct.n_steps != 0
        {
            return Err(Error::Dimension(format!(
                "control grid (T={}, {} steps) incompatible with solver grid (T={}, {} steps)",
                ct.t_final, ct.n_steps, solver_time.t_final, solver_time.n_steps
            )));
        }
        Ok(ControlSampler { signal, ratio: solver_time.n_steps / ct.n_steps, last: ct.n_steps })
    }

    /// Values at solver step `k`; steps past the end extrapolate linearly.
    pub(crate) fn fill(&self, k: usize, out: &mut [f64]) {
        let j = (k / self.ratio).min(self.last - 1);
        let frac = (k as f64 - (j * self.ratio) as f64) / self.ratio as f64;
        let a = self.signal.time_slice(j);
        let b = self.signal.time_slice(j + 1);
        for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
            *o = (1.0 - frac) * x + frac * y;
        }
    }
}

pub(crate) struct StepView<'s> {
    pub k: usize,
    pub dt: f64,
    pub prev: Option<&'s [f64]>,
    pub cur: &'s [f64],
    pub next: &'s [f64],
}

impl StepView<'_> {
    /// Second time difference on boundary nodes (corners included). Before the
    /// first step the state is at rest when there is no initial data, otherwise
    /// the boundary acceleration is taken as zero.
    pub fn boundary_acceleration(&self, boundary: &BoundaryGeometry, has_initial: bool, out: &mut [f64]) {
        let inv = 1.0 / (self.dt * self.dt);
        for node in boundary.nodes() {
            let i = node.index;
            out[i] = match self.prev {
                Some(p) => (self.next[i] - 2.0 * self.cur[i] + p[i]) * inv,
                None if has_initial => 0.0,
                None => (self.next[i] - 2.0 * self.cur[i]) * inv,
            };
        }
    }

    /// Central difference in time; at `k = 0` the prescribed velocity is used in the interior.
    pub fn velocity(&self, u1: Option<&[f64]>, grid: &SpatialGrid) -> Vec<f64> {
        match self.prev {
            Some(p) => self.next.iter().zip(p).map(|(n, p)| (n - p) / (2.0 * self.dt)).collect(),
            None => (0..self.cur.len())
                .map(|i| {
                    if grid.is_boundary(i) {
                        (self.next[i] - self.cur[i]) / self.dt
                    } else {
                        u1.map_or(0.0, |v| v[i])
                    }
                })
                .collect(),
        }
    }
}

/// Explicit second-order scheme on a fixed grid and speed.
pub(crate) struct Leapfrog<'a> {
    grid: &'a SpatialGrid,
    boundary: &'a BoundaryGeometry,
    dt: f64,
    /// `c² dt²` per node.
    coef: Vec<f64>,
}

impl<'a> Leapfrog<'a> {
    pub(crate) fn new(c: &'a ScalarField, boundary: &'a BoundaryGeometry, dt: f64) -> Self {
        let coef = c.values().iter().map(|v| v * v * dt * dt).collect();
        Leapfrog { grid: c.grid(), boundary, dt, coef }
    }

    /// Discrete Laplacian on interior nodes (boundary entries left at 0).
    pub(crate) fn laplacian(grid: &SpatialGrid, u: &[f64], out: &mut [f64]) {
        if grid.dim() == 1 {
            let h2 = grid.spacing(0).powi(-2);
            let n = grid.n_cells(0);
            for i in 1..n {
                out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * h2;
            }
        } else {
            let (n0, n1) = (grid.n_cells(0), grid.n_cells(1));
            let a = grid.spacing(0).powi(-2);
            let b = grid.spacing(1).powi(-2);
            let s = n1 + 1;
            for i0 in 1..n0 {
                let row = i0 * s;
                for i1 in 1..n1 {
                    let i = row + i1;
                    out[i] = (u[i - s] - 2.0 * u[i] + u[i + s]) * a
                        + (u[i - 1] - 2.0 * u[i] + u[i + 1]) * b;
                }
            }
        }
    }

    /// Advances `n_steps` (plus the step producing `u^{n_steps+1}` that the last view needs).
    /// `dirichlet(k, out)` supplies trace-node values at step `k`.
    pub(crate) fn run(
        &self,
        n_steps: usize,
        initial: Option<(&[f64], &[f64])>,
        dirichlet: &mut dyn FnMut(usize, &mut [f64]),
        mut observe: impl FnMut(&StepView<'_>),
    ) {
        let n = self.grid.n_nodes();
        let mut bvals = vec![0.0; self.boundary.n_trace()];
        let mut prev = vec![0.0; n];
        let mut cur = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut lap = vec![0.0; n];

        if let Some((u0, _)) = initial {
            cur.copy_from_slice(u0);
        }
        dirichlet(0, &mut bvals);
        self.boundary.inject(&bvals, &mut cur);

        // Taylor start: u¹ = u⁰ + dt u₁ + dt²/2 c² Δu⁰
        Self::laplacian(self.grid, &cur, &mut lap);
        for i in 0..n {
            let v = initial.map_or(0.0, |(_, u1)| u1[i]);
            next[i] = cur[i] + self.dt * v + 0.5 * self.coef[i] * lap[i];
        }
        dirichlet(1, &mut bvals);
        self.boundary.inject(&bvals, &mut next);
        observe(&StepView { k: 0, dt: self.dt, prev: None, cur: &cur, next: &next });

        for k in 1..=n_steps {
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            Self::laplacian(self.grid, &cur, &mut lap);
            for i in 0..n {
                next[i] = 2.0 * cur[i] - prev[i] + self.coef[i] * lap[i];
            }
            dirichlet(k + 1, &mut bvals);
            self.boundary.inject(&bvals, &mut next);
            observe(&StepView { k, dt: self.dt, prev: Some(&prev), cur: &cur, next: &next });
        }
    }
}

/// `E(t) = ∫_M (u_t² + |∇u|²_g) dm` with `g = c⁻² dx²`, `dm = μ dV_g`, evaluated with
/// the scheme's own quadrature: nodal trapezoid for the kinetic part and one
/// difference per grid edge for the gradient.
pub fn energy(record: &WaveRecord, t: f64, c: &ScalarField, mu: &ScalarField) -> Result<f64> {
    let snap = record.snapshot(t)?;
    discrete_energy(snap.u.values(), snap.ut.values(), c, mu)
}

pub(crate) fn discrete_energy(u: &[f64], ut: &[f64], c: &ScalarField, mu: &ScalarField) -> Result<f64> {
    let (mass, edges) = energy_weights(c, mu)?;
    let kinetic: f64 = mass.iter().zip(ut).map(|(m, v)| m * v * v).sum();
    let potential: f64 = edges.iter().map(|&(i, j, w)| w * (u[j] - u[i]).powi(2)).sum();
    Ok(kinetic + potential)
}

/// Nodal kinetic weights and `(i, j, w)` edge weights of the discrete energy
/// `Σ m_i u_t,i² + Σ w (u_j − u_i)²`.
pub(crate) fn energy_weights(c: &ScalarField, mu: &ScalarField) -> Result<(Vec<f64>, Vec<(usize, usize, f64)>)> {
    let g = c.grid();
    g.check_same(mu.grid())?;
    let n = g.dim() as i32;
    let cv = c.values();
    let mv = mu.values();
    // dm = μ c^{-n} dx, |∇u|²_g = c² |∇u|²
    let kin_w = |i: usize| mv[i] * cv[i].powi(-n);
    let pot_w = |i: usize| mv[i] * cv[i].powi(2 - n);
    let mass = (0..g.n_nodes()).map(|i| g.quadrature_weight(i) * kin_w(i)).collect();
    let mut edges = Vec::new();
    let [s0, s1] = g.shape();
    for axis in 0..g.dim() {
        let h = g.spacing(axis);
        let (step, count0, count1) = if axis == 0 { (s1, s0 - 1, s1) } else { (1, s0, s1 - 1) };
        for a in 0..count0 {
            for b in 0..count1 {
                let i = a * s1 + b;
                let j = i + step;
                // transverse trapezoid weight times edge length
                let w = if g.dim() == 1 {
                    h
                } else {
                    let other = 1 - axis;
                    let (pos, last) = if other == 0 { (a, s0 - 1) } else { (b, s1 - 1) };
                    let ho = g.spacing(other);
                    h * if pos == 0 || pos == last { 0.5 * ho } else { ho }
                };
                edges.push((i, j, w * 0.5 * (pot_w(i) + pot_w(j)) / (h * h)));
            }
        }
    }
    Ok((mass, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn unit_interval(n: usize) -> SpatialGrid {
        SpatialGrid::new(&[0.0], &[1.0], &[n]).unwrap()
    }

    #[test]
    fn timestep_formula() {
        let g = SpatialGrid::new(&[0.0], &[1.0], &[10]).unwrap();
        assert_abs_diff_eq!(stable_timestep(&ScalarField::constant(&g, 1.0), 0.9), 0.09, epsilon = 1e-15);
        let g2 = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[10, 10]).unwrap();
        let dt = stable_timestep(&ScalarField::constant(&g2, 2.0), 1.0);
        assert_abs_diff_eq!(dt, 0.1 / (2.0 * 2f64.sqrt()), epsilon = 1e-15);
        let g3 = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[20, 20]).unwrap();
        let c = ScalarField::from_fn(&g3, |x| 1.0 + 0.5 * x[0] * x[1]);
        assert_abs_diff_eq!(stable_timestep(&c, 0.5), 0.025 / (1.5 * 2f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn zero_data_gives_zero_record() {
        let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let c = ScalarField::constant(&g, 1.0);
        let rec = solve_ibvp(
            &c,
            &WaveProblem { t_final: 1.0, n_steps: 20, snapshot_times: vec![0.5, 1.0], ..Default::default() },
        )
        .unwrap();
        assert!(rec.normal_trace.values().iter().all(|&v| v == 0.0));
        assert!(rec.snapshots.iter().all(|s| s.u.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = unit_interval(10);
        let c = ScalarField::constant(&g, 1.0);
        let r = solve_ibvp(&c, &WaveProblem { t_final: 1.0, n_steps: 5, ..Default::default() });
        assert!(matches!(r, Err(Error::Stability { .. })));
    }

    #[test]
    fn eigenmode_1d_and_its_trace() {
        let n = 128;
        let g = unit_interval(n);
        let c = ScalarField::constant(&g, 1.0);
        let u0 = ScalarField::from_fn(&g, |x| (PI * x[0]).sin());
        let steps = 2 * (0.5 / stable_timestep(&c, 0.9)).ceil() as usize;
        let rec = solve_ibvp(
            &c,
            &WaveProblem {
                initial: Some((u0.clone(), ScalarField::zeros(&g))),
                t_final: 1.0,
                n_steps: steps,
                snapshot_times: vec![0.0, 0.5, 1.0],
                ..Default::default()
            },
        )
        .unwrap();
        let s = rec.snapshot(0.5).unwrap();
        let err = s
            .u
            .values()
            .iter()
            .zip(u0.values())
            .map(|(a, b)| (a - (PI * 0.5).cos() * b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "eigenmode error {err}");
        // left end: ∂_ν u = -π cos(πt)
        let time = rec.normal_trace.layout().time();
        for k in (0..=steps).step_by(7) {
            let t = time.time(k);
            assert_abs_diff_eq!(rec.normal_trace.at(k, 0), -PI * (PI * t).cos(), epsilon = 2e-3);
        }
        let mu = ScalarField::constant(&g, 1.0);
        let e0 = energy(&rec, 0.0, &c, &mu).unwrap();
        assert_abs_diff_eq!(e0, PI * PI / 2.0, epsilon = 1e-3);
        let e1 = energy(&rec, 1.0, &c, &mu).unwrap();
        assert!((e1 / e0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_solution_has_zero_energy() {
        let g = unit_interval(16);
        let c = ScalarField::constant(&g, 1.0);
        let rec = solve_ibvp(
            &c,
            &WaveProblem { t_final: 0.5, n_steps: 20, snapshot_times: vec![0.5], ..Default::default() },
        )
        .unwrap();
        assert_eq!(energy(&rec, 0.5, &c, &c).unwrap(), 0.0);
        assert!(matches!(energy(&rec, 0.25, &c, &c), Err(Error::Lookup(_))));
    }

    #[test]
    fn control_must_match_solver_grid() {
        let g = unit_interval(16);
        let c = ScalarField::constant(&g, 1.0);
        let b = BoundaryGeometry::new(&g);
        let layout = SignalLayout::new(&b, TimeGrid::new(1.0, 7).unwrap());
        let ctrl = DirichletControl::new(BoundarySignal::from_fn(&layout, |t, _| t)).unwrap();
        let r = solve_ibvp(
            &c,
            &WaveProblem { control: Some(ctrl), t_final: 1.0, n_steps: 30, ..Default::default() },
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn control_must_start_at_zero() {
        let g = unit_interval(16);
        let b = BoundaryGeometry::new(&g);
        let layout = SignalLayout::new(&b, TimeGrid::new(1.0, 8).unwrap());
        assert!(DirichletControl::new(BoundarySignal::from_fn(&layout, |_, _| 1.0)).is_err());
    }

    #[test]
    fn controlled_snapshot_matches_boundary_data() {
        let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 8]).unwrap();
        let c = ScalarField::constant(&g, 1.0);
        let b = BoundaryGeometry::new(&g);
        let layout = SignalLayout::new(&b, TimeGrid::new(1.0, 10).unwrap());
        let ctrl = DirichletControl::new(BoundarySignal::from_fn(&layout, |t, k| t * (1.0 + k as f64))).unwrap();
        let rec = solve_ibvp(
            &c,
            &WaveProblem { control: Some(ctrl), t_final: 1.0, n_steps: 20, snapshot_times: vec![0.5], ..Default::default() },
        )
        .unwrap();
        let s = rec.snapshot(0.5).unwrap();
        for (k, t) in b.trace_nodes().iter().enumerate() {
            assert_abs_diff_eq!(s.u.values()[t.index], 0.5 * (1.0 + k as f64), epsilon = 1e-12);
        }
    }
}
