//! Small dense real linear algebra shared by every other module:
//! matrix exponential, eigenvalues, spectral norm, nullspace, rank,
//! linear solves. Everything here is a pure function over immutable
//! inputs and is safe to call from concurrent workers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

/// Iteration cap for the QR/Jacobi style decompositions so a bad input
/// reports failure instead of spinning.
const MAX_ITER: usize = 50_000;

/// Default relative rank tolerance: `1e-9 * max(rows, cols)`, applied
/// to the largest singular value.
pub fn default_rank_tol(m: &DMatrix<f64>) -> f64 {
    1e-9 * m.nrows().max(m.ncols()) as f64
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Numerics(format!(
            "{what}: expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_finite(m) {
        return Err(Error::Numerics(format!("{what}: non-finite entries")));
    }
    Ok(())
}

/// e^{Mt} by scaling-and-squaring with a Padé approximant.
pub fn mat_exp(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_square(m, "mat_exp")?;
    if !t.is_finite() {
        return Err(Error::Numerics("mat_exp: non-finite time".into()));
    }
    Ok((m * t).exp())
}

/// Eigenvalues of a real square matrix together with the spectral abscissa.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real_part: f64,
}

impl Spectrum {
    fn from_values(values: Vec<Complex<f64>>) -> Self {
        let max_real_part = values.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        Spectrum {
            eigenvalues: values,
            max_real_part,
        }
    }
}

/// All eigenvalues via the real Schur form. Complex pairs come out
/// conjugate-symmetric. Fails (instead of looping) if the QR iteration
/// does not converge.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Spectrum> {
    check_square(m, "eigenvalues")?;
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Numerics("eigenvalues: QR iteration did not converge".into()))?;
    let vals = schur.complex_eigenvalues();
    Ok(Spectrum::from_values(
        vals.iter().map(|z| Complex::new(z.re, z.im)).collect(),
    ))
}

/// Largest eigenvalue of the symmetric part (M + M')/2. This is the
/// logarithmic 2-norm of M: |e^{Mt}|_2 <= e^{zeta(M) t}.
pub fn zeta(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m, "zeta")?;
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::linalg::SymmetricEigen::try_new(sym, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Numerics("zeta: eigenvalue iteration did not converge".into()))?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn svd_of(m: &DMatrix<f64>) -> Result<nalgebra::linalg::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Numerics("svd: iteration did not converge".into()))
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    // SVD failure is not observed for finite inputs of the sizes used
    // here; fall back to the Frobenius norm bound if it ever is.
    match svd_of(m) {
        Ok(svd) => svd.singular_values.iter().copied().fold(0.0, f64::max),
        Err(_) => m.norm(),
    }
}

/// Orthonormal basis of ker M as matrix columns. A singular value is
/// treated as zero when sigma <= rel_tol * sigma_max, so every returned
/// column v satisfies |M v| <= rel_tol * |M|.
pub fn nullspace(m: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    if rel_tol <= 0.0 {
        return Err(Error::Numerics("nullspace: rel_tol must be positive".into()));
    }
    let (rows, cols) = (m.nrows(), m.ncols());
    // The thin SVD of a wide matrix only exposes min(rows, cols) right
    // singular vectors; pad with zero rows to get the full V.
    let work = if rows < cols {
        let mut padded = DMatrix::<f64>::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = svd_of(&work)?;
    let v_t = svd.v_t.as_ref().expect("svd computed with vectors");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;
    let mut kernel_rows: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= cutoff)
        .collect();
    kernel_rows.extend(svd.singular_values.len()..v_t.nrows());

    let mut basis = DMatrix::<f64>::zeros(cols, kernel_rows.len());
    for (j, &i) in kernel_rows.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    Ok(basis)
}

pub fn nullspace_default(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nullspace(m, default_rank_tol(m))
}

/// Numerical rank: number of singular values above rel_tol * sigma_max.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    let svd = svd_of(m)?;
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(0);
    }
    let cutoff = rel_tol * sigma_max;
    Ok(svd.singular_values.iter().filter(|&&s| s > cutoff).count())
}

pub fn rank_default(m: &DMatrix<f64>) -> Result<usize> {
    rank(m, default_rank_tol(m))
}

/// Solve X M = B for X (right division) via LU of M^T.
pub fn solve_xm_eq_b(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lu = m.transpose().lu();
    let xt = lu
        .solve(&b.transpose())
        .ok_or_else(|| Error::Numerics("right division: singular matrix".into()))?;
    Ok(xt.transpose())
}

/// Solve M x = b.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerics("solve: singular matrix".into()))
}
