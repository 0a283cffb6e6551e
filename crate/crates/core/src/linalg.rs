//! Small dense and Krylov helpers shared by the operator modules.

use faer::{Mat, MatRef, Par, Side};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub(crate) fn par() -> Par {
    #[cfg(feature = "parallel")]
    {
        let n = rayon::current_num_threads();
        if n > 1 {
            return Par::rayon(n);
        }
    }
    Par::Seq
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Deterministic pseudo-random start vector.
pub(crate) fn start_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Preconditioned conjugate gradients for an SPD operator.
pub(crate) fn cg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    inv_diag: &[f64],
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Conditioning(format!("operator not positive definite (pAp = {pap:.3e})")));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if dot(&r, &r).sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numerical(format!("conjugate gradients did not converge in {max_iter} iterations")))
}

/// Extreme Ritz values of an operator that is self-adjoint in the inner product `⟨x, M y⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    pub iterations: usize,
}

/// Lanczos with full reorthogonalization. `apply_m` returns `M x`.
pub(crate) fn lanczos_extremes(
    n: usize,
    apply: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    apply_m: &dyn Fn(&[f64]) -> Vec<f64>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<Extremes> {
    if n == 0 {
        return Ok(Extremes { min: 0.0, max: 0.0, iterations: 0 });
    }
    let max_iter = max_iter.min(n);
    let mut v = start_vector(n, 0x5eed);
    let mut mv = apply_m(&v);
    let nrm = dot(&v, &mv).sqrt();
    if !(nrm > 0.0) {
        return Err(Error::Conditioning("weight operator is not positive".into()));
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    mv.iter_mut().for_each(|x| *x /= nrm);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut mbasis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev = (f64::NAN, f64::NAN);

    for it in 0..max_iter {
        let mut w = apply(&v)?;
        let alpha = dot(&w, &mv);
        basis.push(v.clone());
        mbasis.push(mv.clone());
        alphas.push(alpha);
        // w ← w − Σ ⟨w, q_j⟩_M q_j, twice for stability
        for _ in 0..2 {
            for (q, mq) in basis.iter().zip(&mbasis) {
                let c = dot(&w, mq);
                axpy(-c, q, &mut w);
            }
        }
        let mw = apply_m(&w);
        let beta = dot(&w, &mw).max(0.0).sqrt();

        let (lo, hi, res_lo, res_hi) = tridiag_extremes(&alphas, &betas, beta)?;
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        let done_hi = res_hi <= rel_tol * scale;
        let done_lo = res_lo <= rel_tol * scale;
        let stalled = (hi - prev.1).abs() <= 1e-3 * rel_tol * scale && (lo - prev.0).abs() <= 1e-3 * rel_tol * scale;
        prev = (lo, hi);
        if (done_hi && done_lo) || beta <= 1e-14 * scale.sqrt().max(1e-300) || it + 1 == max_iter || (stalled && it > 20) {
            return Ok(Extremes { min: lo, max: hi, iterations: it + 1 });
        }
        betas.push(beta);
        v = w.iter().map(|x| x / beta).collect();
        mv = mw.iter().map(|x| x / beta).collect();
    }
    unreachable!("loop returns on the final iteration")
}

/// Extreme eigenvalues of the Lanczos tridiagonal and their residual bounds `β |s_last|`.
fn tridiag_extremes(alphas: &[f64], betas: &[f64], beta_next: f64) -> Result<(f64, f64, f64, f64)> {
    let k = alphas.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("tridiagonal eigensolver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let lo = s[0];
    let hi = s[k - 1];
    Ok((lo, hi, (beta_next * u[(k - 1, 0)]).abs(), (beta_next * u[(k - 1, k - 1)]).abs()))
}

/// Eigendecomposition of a symmetric matrix (lower triangle is read); eigenvalues ascending.
pub(crate) fn symmetric_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i]).collect();
    Ok((vals, eig.U().to_owned()))
}
