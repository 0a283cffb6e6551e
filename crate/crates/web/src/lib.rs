//! WebAssembly bindings for the static demo page in `www/`.

use std::f64::consts::PI;

use bcwave::dtn::{assemble_dtn, TimePlan};
use bcwave::grid::{BoundaryGeometry, ScalarField, SpatialGrid};
use bcwave::observability::{certify, CertifyConfig, ConvexWeight};
use bcwave::recon::{fourier_quadrature, fourier_sample, ReconData, XiLattice};
use bcwave::signal::{BoundarySignal, SignalLayout};
use bcwave::solver::{solve_ibvp, stable_timestep, DirichletControl, WaveProblem};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_CELLS: usize = 96;

fn bump(g: &SpatialGrid, amplitude: f64) -> ScalarField {
    ScalarField::from_fn(g, |x| 1.0 + amplitude * (-((x[0] - 0.4).powi(2) + (x[1] - 0.55).powi(2)) / 0.02).exp())
}

fn unit_square(n: usize) -> bcwave::Result<SpatialGrid> {
    if n > MAX_CELLS {
        return Err(bcwave::Error::Config(format!("at most {MAX_CELLS} cells per side in the browser")));
    }
    SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[n, n])
}

/// Wave excited by a pulse on the left edge, sampled at time `t`.
pub fn snapshot(n: usize, amplitude: f64, t: f64) -> bcwave::Result<Vec<f64>> {
    let g = unit_square(n)?;
    let c = bump(&g, amplitude);
    if !(t > 0.0 && t <= 4.0) {
        return Err(bcwave::Error::Config(format!("t = {t} must lie in (0, 4]")));
    }
    let steps = (t / stable_timestep(&c, 0.9)).ceil() as usize;
    let b = BoundaryGeometry::new(&g);
    let ys: Vec<[f64; 2]> = b.trace_nodes().iter().map(|tn| g.coord(tn.index)).collect();
    let layout = SignalLayout::new(&b, bcwave::grid::TimeGrid::new(t, steps)?);
    let f = BoundarySignal::from_fn(&layout, |s, k| {
        let y = ys[k];
        if s == 0.0 || y[0] != 0.0 {
            return 0.0;
        }
        (-((s - 0.3) / 0.1).powi(2)).exp() * (-(y[1] - 0.5).powi(2) / 0.02).exp()
    });
    let rec = solve_ibvp(
        &c,
        &WaveProblem {
            control: Some(DirichletControl::new(f)?),
            t_final: t,
            n_steps: steps,
            snapshot_times: vec![t],
            ..Default::default()
        },
    )?;
    Ok(rec.snapshots[0].u.values().to_vec())
}

#[derive(Serialize)]
struct CertSummary {
    tau: f64,
    t_min: f64,
    c_f: f64,
    rho: f64,
    r: f64,
    gamma_nodes: usize,
    trace_nodes: usize,
}

/// Observability constants of `|x|²/2` on `[lo, hi]²` with `c ≡ 1`.
pub fn certificate_summary(lo: f64, hi: f64, n: usize) -> bcwave::Result<String> {
    if !(hi > lo) {
        return Err(bcwave::Error::Config("need hi > lo".into()));
    }
    let g = SpatialGrid::new(&[lo, lo], &[hi - lo, hi - lo], &[n.min(MAX_CELLS), n.min(MAX_CELLS)])?;
    let cert = certify(&ConvexWeight::quadratic(&[0.0, 0.0]), &ScalarField::constant(&g, 1.0), &CertifyConfig::default())?;
    Ok(serde_json::to_string(&CertSummary {
        tau: cert.tau,
        t_min: cert.t_min,
        c_f: cert.c_f_computed,
        rho: cert.rho,
        r: cert.r,
        gamma_nodes: cert.gamma.len(),
        trace_nodes: cert.gamma_mask.len(),
    })?)
}

#[derive(Serialize)]
struct Sample {
    xi: Vec<f64>,
    re: f64,
    im: f64,
    exact_re: f64,
    exact_im: f64,
}

/// Boundary-data Fourier samples of `c⁻²` on the 3×3 lattice, next to direct quadrature.
pub fn fourier_table(n: usize, amplitude: f64) -> bcwave::Result<String> {
    if n > 16 {
        return Err(bcwave::Error::Config("at most 16 cells per side for reconstruction in the browser".into()));
    }
    let g = unit_square(n)?;
    let c = bump(&g, amplitude);
    let plan = TimePlan::auto(c.max(), &g, 1.6, 3, 0.9)?;
    let data = ReconData::new(&assemble_dtn(&c, &plan)?, 1e-3)?;
    let rho = c.map(|v| v.powi(-2));
    let mut rows = Vec::new();
    for xi in (XiLattice { spacing: PI, half_width: 1, xi_max: None }).points(2) {
        let s = fourier_sample(&data, &xi)?;
        let q = fourier_quadrature(&rho, &xi);
        rows.push(Sample { xi, re: s.value.re, im: s.value.im, exact_re: q.re, exact_im: q.im });
    }
    Ok(serde_json::to_string(&rows)?)
}

fn js(e: bcwave::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = waveSnapshot)]
pub fn wave_snapshot(n: usize, amplitude: f64, t: f64) -> Result<Vec<f64>, JsError> {
    snapshot(n, amplitude, t).map_err(js)
}

#[wasm_bindgen(js_name = certifySquare)]
pub fn certify_square(lo: f64, hi: f64, n: usize) -> Result<String, JsError> {
    certificate_summary(lo, hi, n).map_err(js)
}

#[wasm_bindgen(js_name = fourierSamples)]
pub fn fourier_samples(n: usize, amplitude: f64) -> Result<String, JsError> {
    fourier_table(n, amplitude).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_has_one_value_per_node() {
        let u = snapshot(12, 0.1, 0.5).unwrap();
        assert_eq!(u.len(), 13 * 13);
        assert!(u.iter().any(|&v| v.abs() > 1e-3));
        assert!(snapshot(12, 0.1, -1.0).is_err());
    }

    #[test]
    fn certificate_for_the_standard_square() {
        let v: serde_json::Value = serde_json::from_str(&certificate_summary(1.0, 2.0, 16).unwrap()).unwrap();
        assert!((v["tau"].as_f64().unwrap() - 3.0303).abs() < 1e-4);
    }

    #[test]
    fn fourier_table_has_nine_rows() {
        let rows: Vec<serde_json::Value> = serde_json::from_str(&fourier_table(8, 0.0).unwrap()).unwrap();
        assert_eq!(rows.len(), 9);
        let centre = rows.iter().find(|r| r["xi"][0] == 0.0 && r["xi"][1] == 0.0).unwrap();
        assert!((centre["re"].as_f64().unwrap() - 1.0).abs() < 0.05);
    }
}
