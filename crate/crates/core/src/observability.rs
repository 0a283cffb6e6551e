//! Explicit observability constants for `g = c⁻² dx²`, `μ = c^{n−2}`, and
//! numerical checks of the observability inequality.

use faer::Mat;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dtn::{map_indices, speed_fingerprint};
use crate::error::{Error, Result};
use crate::grid::{BoundaryGeometry, ScalarField, SpatialGrid};
use crate::linalg::{cg, dot, symmetric_eigen};
use crate::solver::{discrete_energy, energy_weights};

/// One analytic term of a convex weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTerm {
    /// `|x − center|² / 2`.
    Quadratic { center: Vec<f64> },
    /// `a · x`.
    Affine { a: Vec<f64> },
}

/// `ℓ = offset + Σ coef · term` with positive coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexWeight {
    pub terms: Vec<(f64, WeightTerm)>,
    #[serde(default)]
    pub offset: f64,
}

impl ConvexWeight {
    pub fn quadratic(center: &[f64]) -> Self {
        ConvexWeight { terms: vec![(1.0, WeightTerm::Quadratic { center: center.to_vec() })], offset: 0.0 }
    }

    pub fn affine(a: &[f64], b: f64) -> Self {
        ConvexWeight { terms: vec![(1.0, WeightTerm::Affine { a: a.to_vec() })], offset: b }
    }

    /// Positive combination `Σ coef · ℓ_i`.
    pub fn combine(parts: &[(f64, ConvexWeight)]) -> Result<Self> {
        let mut terms = Vec::new();
        let mut offset = 0.0;
        for (coef, w) in parts {
            if !(*coef > 0.0) {
                return Err(Error::Config(format!("weight coefficient {coef} is not positive")));
            }
            offset += coef * w.offset;
            terms.extend(w.terms.iter().map(|(k, t)| (coef * k, t.clone())));
        }
        Ok(ConvexWeight { terms, offset })
    }

    pub fn with_offset(&self, offset: f64) -> Self {
        ConvexWeight { terms: self.terms.clone(), offset }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        for (coef, t) in &self.terms {
            let len = match t {
                WeightTerm::Quadratic { center } => center.len(),
                WeightTerm::Affine { a } => a.len(),
            };
            if len != dim {
                return Err(Error::Dimension(format!("weight term has {len} components on a {dim}D grid")));
            }
            if !(*coef > 0.0) {
                return Err(Error::Config(format!("weight coefficient {coef} is not positive")));
            }
        }
        Ok(())
    }

    /// `ℓ(x) − offset`.
    fn shape_value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(k, t)| {
                k * match t {
                    WeightTerm::Quadratic { center } => {
                        0.5 * center.iter().zip(x).map(|(c, x)| (x - c).powi(2)).sum::<f64>()
                    }
                    WeightTerm::Affine { a } => a.iter().zip(x).map(|(a, x)| a * x).sum(),
                }
            })
            .sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.shape_value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (k, t) in &self.terms {
            for (d, gd) in g.iter_mut().enumerate() {
                *gd += k * match t {
                    WeightTerm::Quadratic { center } => x[d] - center[d],
                    WeightTerm::Affine { a } => a[d],
                };
            }
        }
        g
    }

    /// The Euclidean Hessian is `q I` with `q` the sum of quadratic coefficients.
    fn quadratic_weight(&self) -> f64 {
        self.terms.iter().filter(|(_, t)| matches!(t, WeightTerm::Quadratic { .. })).map(|(k, _)| k).sum()
    }

    pub fn hessian(&self, dim: usize) -> Vec<Vec<f64>> {
        let q = self.quadratic_weight();
        (0..dim).map(|i| (0..dim).map(|j| if i == j { q } else { 0.0 }).collect()).collect()
    }

    pub fn laplacian(&self, dim: usize) -> f64 {
        self.quadratic_weight() * dim as f64
    }

    /// `∇Δℓ`, identically zero for quadratic and affine terms.
    pub fn grad_laplacian(&self, dim: usize) -> Vec<f64> {
        vec![0.0; dim]
    }

    /// The unique critical point, if `∇ℓ` vanishes anywhere.
    fn critical_point(&self, dim: usize) -> Option<Vec<f64>> {
        let q = self.quadratic_weight();
        let g0 = self.gradient(&vec![0.0; dim]);
        if q > 0.0 {
            Some(g0.iter().map(|g| -g / q).collect())
        } else if g0.iter().all(|&g| g == 0.0) {
            Some(vec![0.0; dim])
        } else {
            None
        }
    }
}

fn point(grid: &SpatialGrid, i: usize) -> Vec<f64> {
    grid.coord(i)[..grid.dim()].to_vec()
}

/// `∇ log c` by central differences (one-sided on the boundary).
fn grad_log_c(c: &ScalarField) -> Vec<Vec<f64>> {
    let g = c.grid();
    let [s0, s1] = g.shape();
    let logc: Vec<f64> = c.values().iter().map(|v| v.ln()).collect();
    (0..g.n_nodes())
        .map(|i| {
            let (i0, i1) = g.split(i);
            (0..g.dim())
                .map(|axis| {
                    let (pos, len, step) = if axis == 0 { (i0, s0, s1) } else { (i1, s1, 1) };
                    let h = g.spacing(axis);
                    if pos == 0 {
                        (logc[i + step] - logc[i]) / h
                    } else if pos + 1 == len {
                        (logc[i] - logc[i - step]) / h
                    } else {
                        (logc[i + step] - logc[i - step]) / (2.0 * h)
                    }
                })
                .collect()
        })
        .collect()
}

/// `D²_g ℓ = ∂²ℓ − Γᵏᵢⱼ ∂ₖℓ` with `Γᵏᵢⱼ = −(δᵏᵢ ∂ⱼσ + δᵏⱼ ∂ᵢσ − δᵢⱼ ∂ₖσ)`, `σ = log c`, at every node.
pub fn conformal_hessian(ell: &ConvexWeight, c: &ScalarField) -> Result<Vec<Vec<Vec<f64>>>> {
    let g = c.grid();
    let dim = g.dim();
    ell.check_dim(dim)?;
    let sigma = grad_log_c(c);
    let hess = ell.hessian(dim);
    Ok((0..g.n_nodes())
        .map(|n| {
            let x = point(g, n);
            let dl = ell.gradient(&x);
            let ds = &sigma[n];
            let cross: f64 = dot(&dl, ds);
            (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| {
                            let delta = if i == j { cross } else { 0.0 };
                            hess[i][j] + dl[i] * ds[j] + dl[j] * ds[i] - delta
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        _ => {
            let (a, b, d) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
            0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convexity {
    /// Lower bound of `D²_g ℓ(X, X) / |X|²_g`, after the safety factor.
    pub rho: f64,
    /// Lower bound of `|∇ℓ|_g`, after the safety factor.
    pub r: f64,
}

/// Node minima of the `g`-convexity and `g`-gradient of `ℓ`, shrunk by `safety`.
pub fn convexity_constants(ell: &ConvexWeight, c: &ScalarField, safety: f64) -> Result<Convexity> {
    let g = c.grid();
    let hess = conformal_hessian(ell, c)?;
    let rho = hess
        .iter()
        .zip(c.values())
        .map(|(h, cv)| cv * cv * min_eigenvalue(h))
        .fold(f64::INFINITY, f64::min);
    if !(rho > 1e-12) {
        return Err(Error::NotStrictlyConvex(rho));
    }
    let dim = g.dim();
    if let Some(p) = ell.critical_point(dim) {
        let inside = (0..dim).all(|a| p[a] >= g.origin(a) && p[a] <= g.origin(a) + g.length(a));
        if inside {
            return Err(Error::CriticalPoint(0.0));
        }
    }
    let r = (0..g.n_nodes())
        .map(|i| c.values()[i] * dot(&ell.gradient(&point(g, i)), &ell.gradient(&point(g, i))).sqrt())
        .fold(f64::INFINITY, f64::min);
    if !(r > 0.0) {
        return Err(Error::CriticalPoint(r));
    }
    Ok(Convexity { rho: safety * rho, r: safety * r })
}

/// Interior-node restriction of the discrete energy: `M` (diagonal) and the stiffness `A`.
struct InteriorSystem {
    nodes: Vec<usize>,
    mass: Vec<f64>,
    diag: Vec<f64>,
    links: Vec<(usize, usize, f64)>,
}

impl InteriorSystem {
    fn new(c: &ScalarField, mu: &ScalarField) -> Result<Self> {
        let g = c.grid();
        let (mass_all, edges) = energy_weights(c, mu)?;
        let mut slot = vec![usize::MAX; g.n_nodes()];
        let nodes: Vec<usize> = (0..g.n_nodes()).filter(|&i| !g.is_boundary(i)).collect();
        for (k, &i) in nodes.iter().enumerate() {
            slot[i] = k;
        }
        let mass = nodes.iter().map(|&i| mass_all[i]).collect();
        let mut diag = vec![0.0; nodes.len()];
        let mut links = Vec::new();
        for (i, j, w) in edges {
            let (a, b) = (slot[i], slot[j]);
            if a != usize::MAX {
                diag[a] += w;
            }
            if b != usize::MAX {
                diag[b] += w;
            }
            if a != usize::MAX && b != usize::MAX {
                links.push((a, b, w));
            }
        }
        if nodes.is_empty() {
            return Err(Error::InvalidSpec("grid has no interior nodes".into()));
        }
        Ok(InteriorSystem { nodes, mass, diag, links })
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn stiffness(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for &(a, b, w) in &self.links {
            y[a] -= w * x[b];
            y[b] -= w * x[a];
        }
        y
    }

    fn dense_scaled(&self) -> Mat<f64> {
        let n = self.len();
        let s: Vec<f64> = self.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut a = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.diag[i] * s[i] * s[i];
        }
        for &(i, j, w) in &self.links {
            a[(i, j)] -= w * s[i] * s[j];
            a[(j, i)] -= w * s[i] * s[j];
        }
        a
    }
}

/// `C_F = 1.05 / λ₁` for `∫ φ² dm ≤ C_F ∫ |∇φ|²_g dm`, by inverse iteration.
pub fn friedrichs_constant(c: &ScalarField, mu: &ScalarField) -> Result<f64> {
    Ok(1.05 / smallest_eigenvalue(c, mu)?)
}

fn smallest_eigenvalue(c: &ScalarField, mu: &ScalarField) -> Result<f64> {
    c.check_wave_speed(None)?;
    let sys = InteriorSystem::new(c, mu)?;
    let inv_diag: Vec<f64> = sys.diag.iter().map(|d| 1.0 / d).collect();
    let mut x: Vec<f64> = vec![1.0; sys.len()];
    let mut lambda = f64::NAN;
    for _ in 0..500 {
        let mx: Vec<f64> = x.iter().zip(&sys.mass).map(|(a, m)| a * m).collect();
        let y = cg(|v| sys.stiffness(v), &inv_diag, &mx, 1e-13, 20 * sys.len() + 100)?;
        let my: Vec<f64> = y.iter().zip(&sys.mass).map(|(a, m)| a * m).collect();
        let next = dot(&y, &sys.stiffness(&y)) / dot(&y, &my);
        let nrm = dot(&y, &my).sqrt();
        x = y.iter().map(|v| v / nrm).collect();
        if (next - lambda).abs() <= 1e-8 * next {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::Numerical("inverse iteration for the Friedrichs constant did not converge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    /// Factor applied to the node minima of convexity and gradient.
    pub safety: f64,
    /// Factor applied to `1/λ₁` in the Friedrichs constant.
    pub friedrichs_safety: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig { safety: 0.99, friedrichs_safety: 1.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityCertificate {
    pub rho: f64,
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    /// `max(1, C_F)` as used in the constants.
    pub c_f: f64,
    /// The computed Friedrichs bound before clamping to 1.
    pub c_f_computed: f64,
    pub b_ell: f64,
    pub beta_ell: f64,
    /// `B_ℓ − β_ℓ`, evaluated without the constant part of `ℓ`.
    pub spread: f64,
    pub tau: f64,
    pub t_min: f64,
    pub safety: f64,
    pub friedrichs_safety: f64,
    /// Trace nodes in `Γ = {∇ℓ · ν ≥ 0}`.
    pub gamma: Vec<usize>,
    pub gamma_mask: Vec<bool>,
    pub fingerprint: String,
    /// Norm used for `|∇(Δ_μ ℓ)|` in `C₁`.
    pub gradient_norm: String,
}

impl ObservabilityCertificate {
    fn growth(&self) -> f64 {
        (self.spread * self.tau).exp()
    }

    /// `C(T) = C₂ e^{(B_ℓ−β_ℓ)τ} τ / (T − T_min)`.
    pub fn c_of_t(&self, t: f64) -> Result<f64> {
        if !(t > self.t_min) {
            return Err(Error::Threshold { t, t_min: self.t_min });
        }
        Ok(self.c2 * self.growth() * self.tau / (t - self.t_min))
    }
}

pub fn conformal_mu(c: &ScalarField) -> ScalarField {
    let n = c.grid().dim() as i32;
    c.map(|v| v.powi(n - 2))
}

/// Evaluates the constants of the observability inequality for `ℓ` and `c`.
pub fn certify(ell: &ConvexWeight, c: &ScalarField, config: &CertifyConfig) -> Result<ObservabilityCertificate> {
    c.check_wave_speed(None)?;
    let g = c.grid();
    let dim = g.dim();
    let conv = convexity_constants(ell, c, config.safety)?;
    let (rho, r) = (conv.rho, conv.r);
    let sigma = grad_log_c(c);
    let lap = ell.laplacian(dim);
    let glap = ell.grad_laplacian(dim);
    let (mut grad_max, mut glap_max, mut dev_max) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..g.n_nodes() {
        let x = point(g, i);
        let cv = c.values()[i];
        let grad = ell.gradient(&x);
        grad_max = grad_max.max(cv * dot(&grad, &grad).sqrt());
        // ∇(c² Δℓ) = c² (2 Δℓ ∇σ + ∇Δℓ), measured in g
        let d: Vec<f64> = (0..dim).map(|a| cv * cv * (2.0 * lap * sigma[i][a] + glap[a])).collect();
        glap_max = glap_max.max(cv * cv * dot(&d, &d));
        dev_max = dev_max.max((cv * cv * lap - rho).abs());
        let v = ell.shape_value(&x);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let c_f_computed = config.friedrichs_safety * 1.0 / smallest_eigenvalue(c, &conformal_mu(c))?;
    let c_f = c_f_computed.max(1.0);
    let c1 = rho * rho + glap_max;
    let c2 = 3.0 * grad_max;
    let c3 = c_f * grad_max * grad_max;
    let c4 = grad_max + c_f * dev_max / 2.0;
    let tau = (3.0 / rho).max(c1 / (2.0 * rho * r * r));
    let b_ell = 2.0 * (hi + ell.offset);
    let beta_ell = 2.0 * (lo + ell.offset);
    let spread = 2.0 * (hi - lo);
    let t_min = 2.0 * (c3 * tau + c4) * (spread * tau).exp() * tau;

    let boundary = BoundaryGeometry::new(g);
    let gamma_mask: Vec<bool> = boundary
        .trace_nodes()
        .iter()
        .map(|t| dot(&ell.gradient(&point(g, t.index)), &t.normal[..dim]) >= 0.0)
        .collect();
    let gamma = gamma_mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    Ok(ObservabilityCertificate {
        rho,
        r,
        c1,
        c2,
        c3,
        c4,
        c_f,
        c_f_computed,
        b_ell,
        beta_ell,
        spread,
        tau,
        t_min,
        safety: config.safety,
        friedrichs_safety: config.friedrichs_safety,
        gamma,
        gamma_mask,
        fingerprint: speed_fingerprint(c),
        gradient_norm: "g".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_trials: usize,
    pub t_final: f64,
    pub seed: u64,
    /// Observe on all of `∂M` instead of `Γ`.
    pub full_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub energy: f64,
    /// `∫_0^T ∫_Γ (∂_ν u)² μ dS dt` in the metric `g`.
    pub flux: f64,
    /// `E(0) / (C(T) · flux)`; absent for zero data.
    pub margin: Option<f64>,
    /// `|E(T) − E(0)| / E(0)`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub t_final: f64,
    pub c_of_t: f64,
    pub trials: Vec<Trial>,
    pub max_margin: Option<f64>,
    pub max_drift: f64,
}

/// Exact time evolution of the semi-discrete wave equation `M ü = −A u` in its eigenbasis.
struct ModalPropagator {
    sys: InteriorSystem,
    omega: Vec<f64>,
    /// `M`-orthonormal modes, one per column.
    modes: Mat<f64>,
}

impl ModalPropagator {
    fn new(c: &ScalarField, mu: &ScalarField) -> Result<Self> {
        let sys = InteriorSystem::new(c, mu)?;
        let (vals, vecs) = symmetric_eigen(sys.dense_scaled().as_ref())?;
        if vals[0] <= 0.0 {
            return Err(Error::Numerical("stiffness is not positive definite".into()));
        }
        let omega = vals.iter().map(|v| v.sqrt()).collect();
        let n = sys.len();
        let modes = Mat::from_fn(n, n, |i, k| vecs[(i, k)] / sys.mass[i].sqrt());
        Ok(ModalPropagator { sys, omega, modes })
    }

    fn project(&self, u: &[f64]) -> Vec<f64> {
        let n = self.sys.len();
        (0..n).map(|k| (0..n).map(|i| self.modes[(i, k)] * self.sys.mass[i] * u[self.sys.nodes[i]]).sum()).collect()
    }

    fn synthesize(&self, coef: &[f64], n_nodes: usize) -> Vec<f64> {
        let mut u = vec![0.0; n_nodes];
        for (i, &node) in self.sys.nodes.iter().enumerate() {
            u[node] = (0..coef.len()).map(|k| self.modes[(i, k)] * coef[k]).sum();
        }
        u
    }
}

/// `∫_0^T cos(xt) dt` and `∫_0^T sin(xt) dt`.
fn cos_int(x: f64, t: f64) -> f64 {
    if x.abs() * t < 1e-8 {
        t
    } else {
        (x * t).sin() / x
    }
}

fn sin_int(x: f64, t: f64) -> f64 {
    if x.abs() * t < 1e-8 {
        0.5 * x * t * t
    } else {
        2.0 * (0.5 * x * t).sin().powi(2) / x
    }
}

fn bump(x: &[f64], centre: &[f64], radius: f64) -> f64 {
    let r2: f64 = x.iter().zip(centre).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (radius * radius);
    if r2 < 1.0 {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

fn random_data(grid: &SpatialGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = grid.dim();
    let side = (0..dim).map(|a| grid.length(a)).fold(f64::INFINITY, f64::min);
    let mut u = vec![0.0; grid.n_nodes()];
    for _ in 0..2 {
        let radius = side * rng.random_range(0.2..0.45);
        let centre: Vec<f64> =
            (0..dim).map(|a| grid.origin(a) + rng.random_range(radius..grid.length(a) - radius)).collect();
        let amp: f64 = rng.random_range(-1.0..1.0);
        for (i, v) in u.iter_mut().enumerate() {
            *v += amp * bump(&point(grid, i), &centre, radius);
        }
    }
    u
}

/// Checks `E(0) ≤ C(T) ∫_0^T ∫_Γ (∂_ν u)² μ dS dt` for seeded random smooth initial data.
pub fn observability_trial(cert: &ObservabilityCertificate, c: &ScalarField, config: &TrialConfig) -> Result<TrialReport> {
    if cert.fingerprint != speed_fingerprint(c) {
        return Err(Error::Precondition("certificate was issued for a different speed".into()));
    }
    let c_of_t = cert.c_of_t(config.t_final)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let data: Vec<(Vec<f64>, Vec<f64>)> =
        (0..config.n_trials).map(|_| (random_data(c.grid(), &mut rng), random_data(c.grid(), &mut rng))).collect();
    let trials = run_trials(cert, c, config, c_of_t, &data)?;
    let max_margin = trials.iter().filter_map(|t| t.margin).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let max_drift = trials.iter().map(|t| t.drift).fold(0.0, f64::max);
    Ok(TrialReport { t_final: config.t_final, c_of_t, trials, max_margin, max_drift })
}

fn run_trials(
    cert: &ObservabilityCertificate,
    c: &ScalarField,
    config: &TrialConfig,
    c_of_t: f64,
    data: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<Trial>> {
    let g = c.grid();
    let mu = conformal_mu(c);
    let prop = ModalPropagator::new(c, &mu)?;
    let n = prop.sys.len();
    let t = config.t_final;
    let dim = g.dim() as i32;

    // second-order one-sided normal derivative of every mode on the observed nodes
    let boundary = BoundaryGeometry::new(g);
    let mut slot = vec![usize::MAX; g.n_nodes()];
    for (k, &i) in prop.sys.nodes.iter().enumerate() {
        slot[i] = k;
    }
    let mut traces: Vec<(f64, Vec<f64>)> = Vec::new();
    for (b, tn) in boundary.trace_nodes().iter().enumerate() {
        if !(config.full_boundary || cert.gamma_mask[b]) {
            continue;
        }
        let first = tn.inward;
        let second = 2 * tn.inward - tn.index;
        let d: Vec<f64> = (0..n)
            .map(|k| {
                let v1 = if slot[first] != usize::MAX { prop.modes[(slot[first], k)] } else { 0.0 };
                let v2 = if second < g.n_nodes() && slot[second] != usize::MAX { prop.modes[(slot[second], k)] } else { 0.0 };
                (-4.0 * v1 + v2) / (2.0 * tn.h_normal)
            })
            .collect();
        let cv = c.values()[tn.index];
        // (∂_{ν_g} u)² μ dS_g = c² (∂_ν u)² μ c^{1−n} dS
        let w = cv * cv * mu.values()[tn.index] * cv.powi(1 - dim) * tn.weight;
        traces.push((w, d));
    }
    let gram = Mat::from_fn(n, n, |k, l| traces.iter().map(|(w, d)| w * d[k] * d[l]).sum::<f64>());
    let om = &prop.omega;
    let cc = Mat::from_fn(n, n, |k, l| 0.5 * (cos_int(om[k] - om[l], t) + cos_int(om[k] + om[l], t)));
    let ss = Mat::from_fn(n, n, |k, l| 0.5 * (cos_int(om[k] - om[l], t) - cos_int(om[k] + om[l], t)));
    // ∫ cos(ω_k t) sin(ω_l t) dt
    let cs = Mat::from_fn(n, n, |k, l| 0.5 * (sin_int(om[l] + om[k], t) + sin_int(om[l] - om[k], t)));

    let results: Vec<Result<Trial>> = map_indices(data.len(), |i| {
        let (u0, u1) = &data[i];
        let a = prop.project(u0);
        let b: Vec<f64> = prop.project(u1).iter().zip(om).map(|(v, w)| v / w).collect();
        let mut flux = 0.0;
        for k in 0..n {
            for l in 0..n {
                let gk = gram[(k, l)];
                if gk == 0.0 {
                    continue;
                }
                flux += gk * (a[k] * a[l] * cc[(k, l)] + a[k] * b[l] * cs[(k, l)] + b[k] * a[l] * cs[(l, k)] + b[k] * b[l] * ss[(k, l)]);
            }
        }
        let energy = discrete_energy(u0, u1, c, &mu)?;
        let at: Vec<f64> = (0..n).map(|k| a[k] * (om[k] * t).cos() + b[k] * (om[k] * t).sin()).collect();
        let vt: Vec<f64> = (0..n).map(|k| om[k] * (b[k] * (om[k] * t).cos() - a[k] * (om[k] * t).sin())).collect();
        let e_t = discrete_energy(&prop.synthesize(&at, g.n_nodes()), &prop.synthesize(&vt, g.n_nodes()), c, &mu)?;
        let drift = if energy > 0.0 { (e_t - energy).abs() / energy } else { 0.0 };
        let margin = (energy > 0.0 || flux > 0.0).then(|| energy / (c_of_t * flux));
        Ok(Trial { energy, flux, margin, drift })
    });
    results.into_iter().collect()
}

/// Runs trials with explicitly given initial data.
pub fn observability_trial_with(
    cert: &ObservabilityCertificate,
    c: &ScalarField,
    config: &TrialConfig,
    data: &[(ScalarField, ScalarField)],
) -> Result<TrialReport> {
    let c_of_t = cert.c_of_t(config.t_final)?;
    let raw: Vec<(Vec<f64>, Vec<f64>)> = data.iter().map(|(a, b)| (a.values().to_vec(), b.values().to_vec())).collect();
    let trials = run_trials(cert, c, config, c_of_t, &raw)?;
    let max_margin = trials.iter().filter_map(|t| t.margin).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let max_drift = trials.iter().map(|t| t.drift).fold(0.0, f64::max);
    Ok(TrialReport { t_final: config.t_final, c_of_t, trials, max_margin, max_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn square(lo: f64, hi: f64, n: usize) -> SpatialGrid {
        SpatialGrid::new(&[lo, lo], &[hi - lo, hi - lo], &[n, n]).unwrap()
    }

    #[test]
    fn euclidean_hessian_of_quadratic_and_affine() {
        let g = square(1.0, 2.0, 4);
        let c = ScalarField::constant(&g, 1.0);
        for h in conformal_hessian(&ConvexWeight::quadratic(&[0.0, 0.0]), &c).unwrap() {
            assert_eq!(h, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        }
        for h in conformal_hessian(&ConvexWeight::affine(&[0.3, -2.0], 1.0), &c).unwrap() {
            assert_eq!(h, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        }
    }

    #[test]
    fn christoffel_correction_for_exponential_speed() {
        // c = e^{x₁}, ℓ = x₁: ∂σ = (1, 0), ∇ℓ = (1, 0) ⇒ D²ℓ = diag(1 + 1 − 1, −1)
        let g = square(0.0, 1.0, 8);
        let c = ScalarField::from_fn(&g, |x| x[0].exp());
        let h = conformal_hessian(&ConvexWeight::affine(&[1.0, 0.0], 0.0), &c).unwrap();
        for i in [10, 20, 33, 47, 61] {
            assert_abs_diff_eq!(h[i][0][0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h[i][1][1], -1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(h[i][0][1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn convexity_of_the_standard_weight() {
        let g = square(1.0, 2.0, 8);
        let c = ScalarField::constant(&g, 1.0);
        let k = convexity_constants(&ConvexWeight::quadratic(&[0.0, 0.0]), &c, 0.99).unwrap();
        assert_abs_diff_eq!(k.rho, 0.99, epsilon = 1e-14);
        assert_abs_diff_eq!(k.r, 0.99 * 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn flat_and_critical_weights_are_rejected() {
        let g = square(0.0, 1.0, 8);
        let c = ScalarField::constant(&g, 1.0);
        let flat = convexity_constants(&ConvexWeight::affine(&[1.0, 0.0], 0.0), &c, 0.99);
        assert!(matches!(flat, Err(Error::NotStrictlyConvex(_))));
        let centred = convexity_constants(&ConvexWeight::quadratic(&[0.43, 0.61]), &c, 0.99);
        assert!(matches!(centred, Err(Error::CriticalPoint(_))));
    }

    #[test]
    fn friedrichs_constant_of_square_and_interval() {
        let g = square(0.0, 1.0, 32);
        let one = ScalarField::constant(&g, 1.0);
        let cf = friedrichs_constant(&one, &one).unwrap();
        assert!((cf / (1.05 / (2.0 * PI * PI)) - 1.0).abs() < 0.02);
        let g1 = SpatialGrid::new(&[0.0], &[1.0], &[64]).unwrap();
        let one1 = ScalarField::constant(&g1, 1.0);
        let cf1 = friedrichs_constant(&one1, &one1).unwrap();
        assert!((cf1 / (1.05 / (PI * PI)) - 1.0).abs() < 0.02);
    }

    #[test]
    fn friedrichs_constant_scales_with_area() {
        let one = |g: &SpatialGrid| ScalarField::constant(g, 1.0);
        let a = square(0.0, 1.0, 24);
        let b = square(0.0, 2.0, 24);
        let ratio = friedrichs_constant(&one(&b), &one(&b)).unwrap() / friedrichs_constant(&one(&a), &one(&a)).unwrap();
        assert!((ratio / 4.0 - 1.0).abs() < 0.05);
    }

    fn standard() -> (ScalarField, ObservabilityCertificate) {
        let g = square(1.0, 2.0, 12);
        let c = ScalarField::constant(&g, 1.0);
        let cert = certify(&ConvexWeight::quadratic(&[0.0, 0.0]), &c, &CertifyConfig::default()).unwrap();
        (c, cert)
    }

    #[test]
    fn hand_evaluated_certificate() {
        let (c, cert) = standard();
        let rho = 0.99;
        let r = 0.99 * 2f64.sqrt();
        assert_abs_diff_eq!(cert.c1, rho * rho, epsilon = 1e-14);
        assert_abs_diff_eq!(cert.tau, (3.0 / rho).max(rho * rho / (2.0 * rho * r * r)), epsilon = 1e-14);
        assert_abs_diff_eq!(cert.tau, 3.0303030303, epsilon = 1e-9);
        assert_abs_diff_eq!(cert.b_ell, 8.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cert.beta_ell, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cert.c2, 3.0 * 2.0 * 2f64.sqrt(), epsilon = 1e-13);
        assert_eq!(cert.c_f, 1.0);
        // Γ: the faces x₁ = 2 and x₂ = 2
        let b = BoundaryGeometry::new(c.grid());
        for (t, &m) in b.trace_nodes().iter().zip(&cert.gamma_mask) {
            let x = c.grid().coord(t.index);
            assert_eq!(m, x[0] == 2.0 || x[1] == 2.0);
        }
    }

    #[test]
    fn c_of_t_algebra() {
        let (_, cert) = standard();
        let head = cert.c2 * ((cert.b_ell - cert.beta_ell) * cert.tau).exp() * cert.tau;
        assert_eq!(cert.spread, cert.b_ell - cert.beta_ell);
        assert_abs_diff_eq!(cert.c_of_t(2.0 * cert.t_min).unwrap(), head / cert.t_min, epsilon = 1e-12 * head / cert.t_min);
        assert!(cert.c_of_t(cert.t_min * (1.0 + 1e-9)).unwrap() > cert.c_of_t(1.5 * cert.t_min).unwrap());
        assert!(matches!(cert.c_of_t(cert.t_min), Err(Error::Threshold { .. })));
    }

    #[test]
    fn shifting_the_weight_keeps_the_threshold() {
        let (c, cert) = standard();
        let shifted = certify(&ConvexWeight::quadratic(&[0.0, 0.0]).with_offset(3.7), &c, &CertifyConfig::default()).unwrap();
        assert_eq!(cert.t_min, shifted.t_min);
        assert_eq!(cert.c_of_t(2.0 * cert.t_min).unwrap(), shifted.c_of_t(2.0 * cert.t_min).unwrap());
        assert_abs_diff_eq!(shifted.b_ell - cert.b_ell, 7.4, epsilon = 1e-12);
    }

    #[test]
    fn zero_data_has_no_margin() {
        let (c, cert) = standard();
        let z = ScalarField::constant(c.grid(), 0.0);
        let cfg = TrialConfig { n_trials: 1, t_final: 1.2 * cert.t_min, seed: 1, full_boundary: false };
        let rep = observability_trial_with(&cert, &c, &cfg, &[(z.clone(), z)]).unwrap();
        assert_eq!(rep.trials[0].margin, None);
        assert_eq!(rep.trials[0].energy, 0.0);
    }

    #[test]
    fn full_boundary_never_increases_margins() {
        let (c, cert) = standard();
        let cfg = TrialConfig { n_trials: 3, t_final: 1.2 * cert.t_min, seed: 7, full_boundary: false };
        let part = observability_trial(&cert, &c, &cfg).unwrap();
        let full = observability_trial(&cert, &c, &TrialConfig { full_boundary: true, ..cfg }).unwrap();
        for (p, f) in part.trials.iter().zip(&full.trials) {
            assert!(f.margin.unwrap() <= p.margin.unwrap());
            assert!(p.drift < 1e-8);
        }
    }

    #[test]
    fn modal_flux_matches_time_stepping_on_short_horizon() {
        // with the threshold bypassed, compare the modal flux with a fine quadrature in time
        let g = square(1.0, 2.0, 8);
        let c = ScalarField::constant(&g, 1.0);
        let mut cert = certify(&ConvexWeight::quadratic(&[0.0, 0.0]), &c, &CertifyConfig::default()).unwrap();
        cert.t_min = 0.0;
        let u0 = ScalarField::from_fn(&g, |x| bump(&x[..2], &[1.5, 1.5], 0.4));
        let z = ScalarField::constant(&g, 0.0);
        let t = 0.7;
        let cfg = TrialConfig { n_trials: 1, t_final: t, seed: 0, full_boundary: false };
        let rep = observability_trial_with(&cert, &c, &cfg, &[(u0.clone(), z)]).unwrap();
        let flux = rep.trials[0].flux;

        let mu = conformal_mu(&c);
        let prop = ModalPropagator::new(&c, &mu).unwrap();
        let a = prop.project(u0.values());
        let b = BoundaryGeometry::new(&g);
        let steps = 4000;
        let dt = t / steps as f64;
        let mut acc = 0.0;
        for s in 0..=steps {
            let time = s as f64 * dt;
            let coef: Vec<f64> = a.iter().zip(&prop.omega).map(|(a, w)| a * (w * time).cos()).collect();
            let u = prop.synthesize(&coef, g.n_nodes());
            let mut f = 0.0;
            for (tn, &m) in b.trace_nodes().iter().zip(&cert.gamma_mask) {
                if m {
                    let d = (-4.0 * u[tn.inward] + u[2 * tn.inward - tn.index]) / (2.0 * tn.h_normal);
                    f += tn.weight * d * d;
                }
            }
            acc += if s == 0 || s == steps { 0.5 } else { 1.0 } * dt * f;
        }
        assert_abs_diff_eq!(flux, acc, epsilon = 1e-6 * acc);
    }
}
