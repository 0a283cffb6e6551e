//! Cases whose answers are known exactly.

use bcwave::bc_ops::{TimeMatrix, TimeOpKind};
use bcwave::dtn::{assemble_dtn, TimePlan};
use bcwave::grid::{BoundaryGeometry, ScalarField, SpatialGrid, TimeGrid};
use bcwave::io::{decode_field, encode_field, FieldData};
use bcwave::observability::{conformal_hessian, ConvexWeight};
use bcwave::recon::make_cgo_pair;
use bcwave::solver::{solve_ibvp, WaveProblem};
use bcwave::{Error, Result};

type Case = (&'static str, fn() -> Result<bool>);

fn square() -> Result<SpatialGrid> {
    SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[8, 8])
}

fn perimeter() -> Result<bool> {
    let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 2.0], &[5, 7])?;
    Ok((BoundaryGeometry::new(&g).total_weight() - 6.0).abs() < 1e-12)
}

fn zero_data() -> Result<bool> {
    let g = square()?;
    let c = ScalarField::constant(&g, 1.0);
    let rec = solve_ibvp(&c, &WaveProblem { t_final: 0.5, n_steps: 20, snapshot_times: vec![0.5], ..Default::default() })?;
    Ok(rec.snapshots[0].u.values().iter().all(|&v| v == 0.0) && rec.normal_trace.values().iter().all(|&v| v == 0.0))
}

fn cgo_at_zero() -> Result<bool> {
    let pair = make_cgo_pair(&[0.0, 0.0], &square()?)?;
    Ok(pair.phi.values().iter().chain(pair.psi.values()).all(|z| z.re == 1.0 && z.im == 0.0))
}

fn flat_hessian() -> Result<bool> {
    let g = square()?;
    let h = conformal_hessian(&ConvexWeight::quadratic(&[0.0, 0.0]), &ScalarField::constant(&g, 1.0))?;
    Ok(h.iter().all(|m| m == &vec![vec![1.0, 0.0], vec![0.0, 1.0]]))
}

fn integral_of_one() -> Result<bool> {
    let time = TimeGrid::new(1.0, 10)?;
    let j = TimeMatrix::of(TimeOpKind::J, &time);
    let out = j.apply(&vec![1.0; 21], 1);
    Ok(out.iter().enumerate().all(|(k, v)| (v - (1.0 - time.time(k))).abs() < 1e-14))
}

fn field_round_trip() -> Result<bool> {
    let f = ScalarField::from_fn(&square()?, |x| x[0] - 3.0 * x[1]);
    Ok(decode_field(&encode_field("f", &f))?.1 == FieldData::Real(f))
}

fn small_dtn() -> Result<bool> {
    let g = square()?;
    let lam = assemble_dtn(&ScalarField::constant(&g, 1.0), &TimePlan::new(0.3, 6, 2)?)?;
    Ok(lam.n_bnd() == 28 && lam.dense().col_iter().all(|c| c.iter().all(|v| v.is_finite())))
}

const CASES: &[Case] = &[
    ("boundary weights sum to the perimeter", perimeter),
    ("zero data gives the zero wave", zero_data),
    ("CGO pair at ξ = 0 is identically one", cgo_at_zero),
    ("Hessian of |x|²/2 is the identity for c ≡ 1", flat_hessian),
    ("time integral of a constant", integral_of_one),
    (".bcw round trip", field_round_trip),
    ("DtN assembly on a small square", small_dtn),
];

pub fn run() -> Result<()> {
    let mut failed = 0;
    for (name, case) in CASES {
        let ok = matches!(case(), Ok(true));
        println!("{} {name}", if ok { "ok    " } else { "FAILED" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} self-test case(s) failed")));
    }
    println!("selftest: {} cases passed", CASES.len());
    Ok(())
}
