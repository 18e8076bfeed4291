//! Small dense Hermitian helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::error::{invalid, IsacError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub use crate::channel::CVector;

/// Largest `|a_ij - conj(a_ji)|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_hermitian(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return invalid(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    let scale = m.norm().max(1.0);
    let d = hermitian_defect(m);
    if d > 1e-8 * scale {
        return invalid(format!("{what} is not Hermitian (defect {d:e})"));
    }
    Ok(())
}

/// Rotates `v` so its first entry above `1e-12 * max|v_i|` is real positive.
pub fn fix_phase(v: &mut CVector) {
    let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.norm() > 1e-12 * peak).copied() {
        let rot = first.conj() / first.norm();
        v.iter_mut().for_each(|x| *x *= rot);
    }
}

/// Averages `m` with its adjoint.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).unscale(2.0)
}

/// Dominant eigenpair of a Hermitian matrix; the vector has unit norm and
/// the phase convention of [`fix_phase`].
pub fn top_eigvec(m: &CMatrix) -> Result<(f64, CVector)> {
    check_hermitian(m, "eigen input")?;
    if m.nrows() == 0 {
        return invalid("eigen input is empty");
    }
    let eig = hermitize(m).symmetric_eigen();
    let idx = eig.eigenvalues.imax();
    let mut v: CVector = eig.eigenvectors.column(idx).into_owned();
    let nrm = v.norm();
    if !(nrm > 0.0) {
        return Err(IsacError::Degenerate("zero eigenvector".into()));
    }
    v.unscale_mut(nrm);
    fix_phase(&mut v);
    Ok((eig.eigenvalues[idx], v))
}

/// All eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    check_hermitian(m, "eigen input")?;
    let mut ev: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `ln det(I + gamma G)` for Hermitian PSD `G`.
pub fn log_det_identity_plus(g: &CMatrix, gamma: f64) -> Result<f64> {
    let n = g.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut m = g.scale(gamma);
    for i in 0..n {
        m[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let m = hermitize(&m);
    match Cholesky::new(m.clone()) {
        Some(ch) => Ok(ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum()),
        None => {
            // Round-off pushed I + gamma G off definiteness; fall back to eigenvalues.
            let ev = m.symmetric_eigenvalues();
            Ok(ev.iter().map(|&e| e.max(1.0).ln()).sum())
        }
    }
}
