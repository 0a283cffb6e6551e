//! Complex geometric optics samples of `F(c⁻²)`, the regularized pseudoinverse
//! of `K`, low-pass synthesis and the stability experiment.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bc_ops::{apply_b, build_k, star_distance, ConnectingMatrix, StarNorm};
use crate::dtn::{assemble_dtn, map_indices, DtnMatrix, TimePlan};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, ScalarField, SpatialGrid};
use crate::linalg::symmetric_eigen;
use crate::signal::BoundarySignal;

/// Harmonic exponentials `φ = e^{i(ξ+iη)·x/2}` and `ψ = e^{i(ξ−iη)·x/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CgoPair {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub phi: ComplexField,
    pub psi: ComplexField,
    /// `e^{R|ξ|/2}` with `M ⊂ B(0, R)`.
    pub amplitude_bound: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Builds the pair for `ξ`, taking `η` as `ξ` rotated by +90°.
pub fn make_cgo_pair(xi: &[f64], grid: &SpatialGrid) -> Result<CgoPair> {
    if xi.len() != grid.dim() {
        return Err(Error::Dimension(format!("ξ has {} components on a {}D grid", xi.len(), grid.dim())));
    }
    let eta = match grid.dim() {
        1 if xi[0] != 0.0 => {
            return Err(Error::UnsupportedFrequency(format!("ξ = {} ≠ 0 has no partner η in one dimension", xi[0])));
        }
        1 => vec![0.0],
        _ => vec![-xi[1], xi[0]],
    };
    let phase = |x: [f64; 2], sign: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for a in 0..xi.len() {
            // i(ξ ± iη)·x/2 = (∓η·x + iξ·x)/2
            re -= sign * eta[a] * x[a];
            im += xi[a] * x[a];
        }
        Complex64::new(0.5 * re, 0.5 * im).exp()
    };
    Ok(CgoPair {
        phi: ComplexField::from_fn(grid, |x| phase(x, 1.0)),
        psi: ComplexField::from_fn(grid, |x| phase(x, -1.0)),
        amplitude_bound: (0.5 * grid.enclosing_radius() * norm(xi)).exp(),
        xi: xi.to_vec(),
        eta,
    })
}

/// Accepted discrete Laplacian residual for a CGO field: twice the leading
/// truncation term `h² |ξ|⁴ / 48`.
pub fn harmonic_tolerance(grid: &SpatialGrid, xi: &[f64]) -> f64 {
    let h = (0..grid.dim()).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    2.0 * h * h * norm(xi).powi(4) / 48.0 + 1e-10
}

/// Truncated spectral pseudoinverse of a connecting matrix in the `L²(Υ)` geometry.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    sqrt_w: Vec<f64>,
    values: Vec<f64>,
    vectors: Mat<f64>,
    sigma_cut: f64,
    lambda_max: f64,
    rank: usize,
}

/// Result of applying the pseudoinverse to one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PinvOutput {
    pub x: Vec<f64>,
    /// Fraction of `‖y‖²` outside the retained eigenvectors.
    pub discarded: f64,
}

impl PseudoInverse {
    pub fn new(k: &ConnectingMatrix, sigma_cut: f64) -> Result<Self> {
        if !(sigma_cut > 0.0 && sigma_cut < 1.0) {
            return Err(Error::Config(format!("σ_cut = {sigma_cut} must lie in (0, 1)")));
        }
        let w = k.layout().l2_weights();
        let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let a = k.matrix();
        let n = a.nrows();
        // G^{1/2} K G^{-1/2}, symmetrized
        let s = Mat::from_fn(n, n, |i, j| {
            0.5 * (sqrt_w[i] * a[(i, j)] / sqrt_w[j] + sqrt_w[j] * a[(j, i)] / sqrt_w[i])
        });
        let (values, vectors) = symmetric_eigen(s.as_ref())?;
        let lambda_max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let rank = values.iter().filter(|v| v.abs() >= sigma_cut * lambda_max && lambda_max > 0.0).count();
        Ok(PseudoInverse { sqrt_w, values, vectors, sigma_cut, lambda_max, rank })
    }

    pub fn sigma_cut(&self) -> f64 {
        self.sigma_cut
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, y: &[f64]) -> Result<PinvOutput> {
        let n = self.sqrt_w.len();
        if y.len() != n {
            return Err(Error::Dimension(format!("vector has {} entries, K has {n} columns", y.len())));
        }
        let z: Vec<f64> = y.iter().zip(&self.sqrt_w).map(|(a, s)| a * s).collect();
        let total: f64 = z.iter().map(|v| v * v).sum();
        let cut = self.sigma_cut * self.lambda_max;
        let mut kept = 0.0;
        let mut out = vec![0.0; n];
        for (j, &lam) in self.values.iter().enumerate() {
            if lam.abs() < cut || lam == 0.0 {
                continue;
            }
            let col = self.vectors.col(j);
            let c: f64 = (0..n).map(|i| col[i] * z[i]).sum();
            kept += c * c;
            let s = c / lam;
            for i in 0..n {
                out[i] += s * col[i];
            }
        }
        out.iter_mut().zip(&self.sqrt_w).for_each(|(v, s)| *v /= s);
        let discarded = if total > 0.0 { ((total - kept) / total).max(0.0) } else { 0.0 };
        Ok(PinvOutput { x: out, discarded })
    }
}

/// `K† y` with the fraction of `y` discarded by the spectral cut.
pub fn apply_pinv(k: &ConnectingMatrix, y: &BoundarySignal<f64>, sigma_cut: f64) -> Result<(BoundarySignal<f64>, f64)> {
    k.layout().check_same(y.layout())?;
    let out = PseudoInverse::new(k, sigma_cut)?.apply(y.values())?;
    Ok((BoundarySignal::new(k.layout().clone(), out.x)?, out.discarded))
}

/// Measurement data prepared for sampling: `Λ_T` and the decomposed `K(Λ_{2T})`.
#[derive(Debug, Clone)]
pub struct ReconData {
    lam_t: DtnMatrix,
    pinv: PseudoInverse,
}

impl ReconData {
    pub fn new(lam_2t: &DtnMatrix, sigma_cut: f64) -> Result<Self> {
        let k = build_k(lam_2t)?;
        Ok(ReconData { lam_t: lam_2t.restrict_causal()?, pinv: PseudoInverse::new(&k, sigma_cut)? })
    }

    pub fn lambda_t(&self) -> &DtnMatrix {
        &self.lam_t
    }

    pub fn pinv(&self) -> &PseudoInverse {
        &self.pinv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSample {
    pub xi: Vec<f64>,
    pub value: Complex64,
    pub sigma_cut: f64,
    /// Largest discarded fraction among the real and imaginary parts of `Bφ`.
    pub discarded: f64,
}

/// `(K† B φ, B ψ)` in the bilinear `L²(Υ)` pairing, an estimate of `∫_M e^{iξ·x} c⁻² dx`.
pub fn fourier_sample(data: &ReconData, xi: &[f64]) -> Result<FourierSample> {
    let grid = data.lam_t.grid();
    let pair = make_cgo_pair(xi, grid)?;
    let tol = harmonic_tolerance(grid, xi);
    let b_phi = apply_b(&data.lam_t, &pair.phi, tol)?;
    let b_psi = apply_b(&data.lam_t, &pair.psi, tol)?;
    let re = data.pinv.apply(b_phi.re().values())?;
    let im = data.pinv.apply(b_phi.im().values())?;
    let layout = data.lam_t.layout();
    let f = BoundarySignal::from_parts(
        &BoundarySignal::new(layout.clone(), re.x)?,
        &BoundarySignal::new(layout.clone(), im.x)?,
    )?;
    Ok(FourierSample {
        xi: xi.to_vec(),
        value: f.pairing(&b_psi)?,
        sigma_cut: data.pinv.sigma_cut,
        discarded: re.discarded.max(im.discarded),
    })
}

/// Trapezoid quadrature of `∫_M e^{iξ·x} ρ dx`.
pub fn fourier_quadrature(rho: &ScalarField, xi: &[f64]) -> Complex64 {
    let g = rho.grid();
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &r) in rho.values().iter().enumerate() {
        let x = g.coord(i);
        let phase: f64 = (0..g.dim()).map(|a| xi[a] * x[a]).sum();
        acc += Complex64::from_polar(r * g.quadrature_weight(i), phase);
    }
    acc
}

/// Square frequency lattice `spacing · (a, b)`, `|a|, |b| ≤ half_width`, kept where `|ξ| ≤ xi_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiLattice {
    pub spacing: f64,
    pub half_width: usize,
    pub xi_max: Option<f64>,
}

impl XiLattice {
    /// Spacing `2π / box_length` for a periodization box of side `box_length`.
    pub fn for_box(box_length: f64, half_width: usize) -> Self {
        XiLattice { spacing: 2.0 * PI / box_length, half_width, xi_max: None }
    }

    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        let h = self.half_width as i64;
        let mut pts = Vec::new();
        let cap = self.xi_max.map_or(f64::INFINITY, |m| m * (1.0 + 1e-12));
        for a in -h..=h {
            if dim == 1 {
                if a == 0 {
                    pts.push(vec![0.0]);
                }
                continue;
            }
            for b in -h..=h {
                let p = vec![a as f64 * self.spacing, b as f64 * self.spacing];
                if norm(&p) <= cap {
                    pts.push(p);
                }
            }
        }
        pts
    }
}

/// Truncated Fourier series `(2π)^{−n} Δξⁿ Σ e^{−iξ·x} F(ξ)`; returns the real
/// part and the largest imaginary residue relative to the largest real value.
pub fn lowpass_synthesis(samples: &[FourierSample], spacing: f64, grid: &SpatialGrid) -> Result<(ScalarField, f64)> {
    let key = |v: &[f64]| -> Vec<i64> { v.iter().map(|x| (x / spacing).round() as i64).collect() };
    for s in samples {
        if s.xi.len() != grid.dim() {
            return Err(Error::Dimension("sample frequency does not match the grid".into()));
        }
        let k = key(&s.xi);
        if k.iter().zip(&s.xi).any(|(&q, &x)| (q as f64 * spacing - x).abs() > 1e-9 * spacing.max(1.0)) {
            return Err(Error::Config(format!("ξ = {:?} is not on the lattice of spacing {spacing}", s.xi)));
        }
        let neg: Vec<i64> = k.iter().map(|q| -q).collect();
        if !samples.iter().any(|o| key(&o.xi) == neg) {
            return Err(Error::Config(format!("lattice is not symmetric: −ξ missing for ξ = {:?}", s.xi)));
        }
    }
    let n = grid.dim() as i32;
    let scale = (spacing / (2.0 * PI)).powi(n);
    let mut im_max: f64 = 0.0;
    let mut re_max: f64 = 0.0;
    let mut values = vec![0.0; grid.n_nodes()];
    for (i, v) in values.iter_mut().enumerate() {
        let x = grid.coord(i);
        let mut acc = Complex64::new(0.0, 0.0);
        for s in samples {
            let phase: f64 = (0..grid.dim()).map(|a| s.xi[a] * x[a]).sum();
            acc += s.value * Complex64::from_polar(1.0, -phase);
        }
        acc *= scale;
        *v = acc.re;
        re_max = re_max.max(acc.re.abs());
        im_max = im_max.max(acc.im.abs());
    }
    let residue = if re_max > 0.0 { im_max / re_max } else { im_max };
    Ok((ScalarField::new(grid.clone(), values)?, residue))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub lattice: XiLattice,
    pub sigma_cut: f64,
    /// Lower bound for the synthesized `c⁻²`; defaults to a tenth of its smallest positive value.
    pub floor: Option<f64>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { lattice: XiLattice::for_box(2.0, 1), sigma_cut: 1e-3, floor: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconErrors {
    /// Relative `L²` error of the recovered `c` against the low-passed truth.
    pub speed_l2: f64,
    /// Relative `L²` error of the synthesized `c⁻²` against the low-passed truth.
    pub rho_l2: f64,
    /// Largest `|sample − quadrature| / |F(c⁻²)(0)|` over the lattice.
    pub sample_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub samples: Vec<FourierSample>,
    #[serde(skip)]
    pub rho: Option<ScalarField>,
    #[serde(skip)]
    pub speed: Option<ScalarField>,
    pub floor: f64,
    pub imaginary_residue: f64,
    pub max_discarded: f64,
    /// Set when more than half of some `Bφ` was discarded by the spectral cut.
    pub over_truncated: bool,
    pub errors: Option<ReconErrors>,
}

fn relative_l2(a: &ScalarField, b: &ScalarField) -> f64 {
    let g = a.grid();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..g.n_nodes() {
        let w = g.quadrature_weight(i);
        num += w * (a.values()[i] - b.values()[i]).powi(2);
        den += w * b.values()[i].powi(2);
    }
    (num / den).sqrt()
}

fn speed_from_rho(rho: &ScalarField, floor: f64) -> ScalarField {
    rho.map(|r| r.max(floor).powf(-0.5))
}

/// Samples `F(c⁻²)` over the lattice, synthesizes `c⁻²` and `c`, and compares with `truth` when given.
pub fn reconstruct_speed(data: &ReconData, config: &ReconConfig, truth: Option<&ScalarField>) -> Result<ReconReport> {
    let grid = data.lam_t.grid().clone();
    let xis = config.lattice.points(grid.dim());
    let samples: Vec<Result<FourierSample>> = map_indices(xis.len(), |i| fourier_sample(data, &xis[i]));
    let samples: Vec<FourierSample> = samples.into_iter().collect::<Result<_>>()?;
    let (rho, imaginary_residue) = lowpass_synthesis(&samples, config.lattice.spacing, &grid)?;
    let floor = match config.floor {
        Some(f) => f,
        None => 0.1 * rho.values().iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min),
    };
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::Numerical("synthesized c⁻² has no positive values".into()));
    }
    let speed = speed_from_rho(&rho, floor);
    let max_discarded = samples.iter().map(|s| s.discarded).fold(0.0, f64::max);
    let errors = match truth {
        None => None,
        Some(c) => {
            c.grid().check_same(&grid)?;
            let rho_true = c.map(|v| v.powi(-2));
            let exact: Vec<FourierSample> = samples
                .iter()
                .map(|s| FourierSample { value: fourier_quadrature(&rho_true, &s.xi), ..s.clone() })
                .collect();
            let (rho_low, _) = lowpass_synthesis(&exact, config.lattice.spacing, &grid)?;
            let scale = fourier_quadrature(&rho_true, &vec![0.0; grid.dim()]).norm();
            let sample_max = samples.iter().zip(&exact).map(|(s, e)| (s.value - e.value).norm() / scale).fold(0.0, f64::max);
            Some(ReconErrors {
                speed_l2: relative_l2(&speed, &speed_from_rho(&rho_low, floor)),
                rho_l2: relative_l2(&rho, &rho_low),
                sample_max,
            })
        }
    };
    Ok(ReconReport {
        samples,
        rho: Some(rho),
        speed: Some(speed),
        floor,
        imaginary_residue,
        max_discarded,
        over_truncated: max_discarded > 0.5,
        errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub s: f64,
    pub xi: Vec<f64>,
    /// `|F(c̃⁻² − c⁻²)(ξ)|` by quadrature.
    pub lhs: f64,
    pub distance: StarNorm,
    /// `e^{2R|ξ|}`.
    pub weight: f64,
    /// `lhs / (weight · distance)`; absent when the distance vanishes.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub radius: f64,
    pub rows: Vec<StabilityRow>,
    /// `max/min` of the ratio over amplitudes, per frequency (in lattice order).
    pub spread: Vec<(Vec<f64>, f64)>,
}

impl StabilityTable {
    pub fn max_spread(&self) -> f64 {
        self.spread.iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

/// Measures `|F(c̃⁻² − c⁻²)(ξ)| / (e^{2R|ξ|} ‖Λ̃ − Λ‖_*)` for `c̃ = c + s δ`.
pub fn stability_experiment(
    c: &ScalarField,
    delta: &ScalarField,
    amplitudes: &[f64],
    xis: &[Vec<f64>],
    plan: &TimePlan,
) -> Result<StabilityTable> {
    c.grid().check_same(delta.grid())?;
    let grid = c.grid();
    let radius = grid.enclosing_radius();
    let base = assemble_dtn(c, plan)?;
    let rho = c.map(|v| v.powi(-2));
    let mut rows = Vec::new();
    for &s in amplitudes {
        let tilde = c.zip_map(delta, |a, d| a + s * d)?;
        if tilde.min() <= 0.0 {
            return Err(Error::Domain(format!("c + {s}·δ is not positive")));
        }
        let distance = if s == 0.0 {
            StarNorm { k_part: 0.0, lambda_part: 0.0 }
        } else {
            star_distance(&assemble_dtn(&tilde, plan)?, &base)?
        };
        let drho = tilde.map(|v| v.powi(-2)).zip_map(&rho, |a, b| a - b)?;
        for xi in xis {
            let lhs = fourier_quadrature(&drho, xi).norm();
            let weight = (2.0 * radius * norm(xi)).exp();
            let d = distance.total();
            rows.push(StabilityRow {
                s,
                xi: xi.clone(),
                lhs,
                distance,
                weight,
                ratio: (d > 0.0).then(|| lhs / (weight * d)),
            });
        }
    }
    let spread = xis
        .iter()
        .map(|xi| {
            let r: Vec<f64> = rows.iter().filter(|r| &r.xi == xi).filter_map(|r| r.ratio).collect();
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            (xi.clone(), if r.is_empty() { 1.0 } else { hi / lo })
        })
        .collect();
    Ok(StabilityTable { radius, rows, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialGrid;
    use crate::signal::SignalLayout;
    use approx::assert_abs_diff_eq;

    fn unit(n: usize) -> SpatialGrid {
        SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[n, n]).unwrap()
    }

    #[test]
    fn zero_frequency_pair_is_one() {
        let p = make_cgo_pair(&[0.0, 0.0], &unit(4)).unwrap();
        assert!(p.phi.values().iter().chain(p.psi.values()).all(|v| (v - Complex64::new(1.0, 0.0)).norm() == 0.0));
    }

    #[test]
    fn pair_product_is_a_fourier_character() {
        let g = unit(8);
        let p = make_cgo_pair(&[1.0, 1.0], &g).unwrap();
        assert_eq!(p.eta, vec![-1.0, 1.0]);
        for i in 0..g.n_nodes() {
            let x = g.coord(i);
            let e = Complex64::from_polar(1.0, x[0] + x[1]);
            assert!((p.phi.values()[i] * p.psi.values()[i] - e).norm() < 1e-12);
        }
    }

    #[test]
    fn pair_is_harmonic_to_second_order() {
        let xi = [2.0, 0.0];
        let r16 = crate::bc_ops::harmonic_residual(&make_cgo_pair(&xi, &unit(16)).unwrap().phi);
        let r32 = crate::bc_ops::harmonic_residual(&make_cgo_pair(&xi, &unit(32)).unwrap().phi);
        assert!(r32 < harmonic_tolerance(&unit(32), &xi));
        assert!((r16 / r32 - 4.0).abs() < 0.2, "{r16} {r32}");
    }

    #[test]
    fn one_dimensional_frequency_is_rejected() {
        let g = SpatialGrid::new(&[0.0], &[1.0], &[8]).unwrap();
        assert!(matches!(make_cgo_pair(&[1.0], &g), Err(Error::UnsupportedFrequency(_))));
        assert!(make_cgo_pair(&[0.0], &g).is_ok());
    }

    fn diagonal_k(d: &[f64]) -> ConnectingMatrix {
        let g = SpatialGrid::new(&[0.0], &[1.0], &[4]).unwrap();
        let layout = SignalLayout::new(
            &crate::grid::BoundaryGeometry::new(&g),
            crate::grid::TimeGrid::new(1.0, d.len() / 2 - 1).unwrap(),
        );
        let m = Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 });
        ConnectingMatrix::new(layout, m, String::new()).unwrap()
    }

    #[test]
    fn pinv_of_identity() {
        let k = diagonal_k(&[1.0; 6]);
        let y = BoundarySignal::new(k.layout().clone(), vec![1.0, -2.0, 3.0, 0.5, 0.0, 4.0]).unwrap();
        let (x, discarded) = apply_pinv(&k, &y, 0.5).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_eq!(discarded, 0.0);
    }

    #[test]
    fn pinv_kills_the_null_space() {
        let k = diagonal_k(&[2.0, 0.0, 1.0, 0.0, 4.0, 0.0]);
        let y = BoundarySignal::new(k.layout().clone(), vec![0.0, 1.0, 0.0, -3.0, 0.0, 2.0]).unwrap();
        let (x, discarded) = apply_pinv(&k, &y, 1e-3).unwrap();
        assert!(x.values().iter().all(|v| v.abs() < 1e-14));
        assert_abs_diff_eq!(discarded, 1.0, epsilon = 1e-14);
        assert!(matches!(apply_pinv(&k, &y, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn synthesis_of_a_single_sample() {
        let g = unit(4);
        let s = FourierSample { xi: vec![0.0, 0.0], value: Complex64::new(2.0, 0.0), sigma_cut: 1e-3, discarded: 0.0 };
        let (f, res) = lowpass_synthesis(&[s], PI, &g).unwrap();
        let want = 2.0 * (PI / (2.0 * PI)).powi(2);
        assert!(f.values().iter().all(|v| (v - want).abs() < 1e-14));
        assert_eq!(res, 0.0);
    }

    #[test]
    fn synthesis_rejects_asymmetric_lattice() {
        let g = unit(4);
        let s = FourierSample { xi: vec![PI, 0.0], value: Complex64::new(1.0, 0.0), sigma_cut: 1e-3, discarded: 0.0 };
        assert!(matches!(lowpass_synthesis(&[s], PI, &g), Err(Error::Config(_))));
    }

    #[test]
    fn synthesis_of_exact_indicator_samples() {
        let g = unit(16);
        let lattice = XiLattice { spacing: PI, half_width: 16, xi_max: Some(16.0 * PI) };
        // F(χ_[0,1]²)(ξ) = Π (e^{iξ_a} − 1) / (iξ_a)
        let f1 = |x: f64| {
            if x == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                (Complex64::from_polar(1.0, x) - 1.0) / Complex64::new(0.0, x)
            }
        };
        let samples: Vec<FourierSample> = lattice
            .points(2)
            .into_iter()
            .map(|xi| FourierSample { value: f1(xi[0]) * f1(xi[1]), xi, sigma_cut: 1e-3, discarded: 0.0 })
            .collect();
        let (f, res) = lowpass_synthesis(&samples, PI, &g).unwrap();
        assert!(res < 1e-10);
        let centre = f.values()[g.index(8, 8)];
        assert!((centre - 1.0).abs() < 0.15, "{centre}");
    }

    #[test]
    fn lattice_points() {
        let l = XiLattice::for_box(2.0, 1);
        assert_eq!(l.points(2).len(), 9);
        let l = XiLattice { spacing: PI, half_width: 2, xi_max: Some(2.0 * PI) };
        assert_eq!(l.points(2).len(), 13);
    }

    #[test]
    fn quadrature_of_the_square() {
        let g = unit(32);
        let one = ScalarField::constant(&g, 1.0);
        assert_abs_diff_eq!(fourier_quadrature(&one, &[0.0, 0.0]).re, 1.0, epsilon = 1e-12);
        assert!(fourier_quadrature(&one, &[2.0 * PI, 0.0]).norm() < 1e-12);
    }
}
