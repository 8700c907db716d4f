//! Small dense kernels on top of nalgebra: rank, symmetric eigenvalues,
//! Sylvester/Lyapunov solves and the continuous algebraic Riccati equation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Sylvester operator is singular (smallest singular value ratio {ratio:.3e})")]
    SingularSylvester { ratio: f64 },
    #[error("Hamiltonian matrix has eigenvalues on or near the imaginary axis")]
    HamiltonianImaginaryAxis,
    #[error("Riccati iteration did not converge (residual {residual:.3e})")]
    RiccatiNoConvergence { residual: f64 },
    #[error("least-squares system is rank deficient")]
    RankDeficient,
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Smallest eigenpair of the symmetric part.
pub fn sym_min_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = symmetrize(m).symmetric_eigen();
    let (i, &v) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    (v, eig.eigenvectors.column(i).into_owned())
}

pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn sym_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().expect("nonempty matrix")
}

/// Largest real part over the (complex) spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `A X + X B = C` through the Kronecker form
/// `(I ⊗ A + Bᵀ ⊗ I) vec X = vec C`.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let (n, m) = (a.nrows(), b.nrows());
    if !a.is_square() || !b.is_square() || c.shape() != (n, m) {
        return Err(LinalgError::Dimension(format!(
            "A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    let op = DMatrix::<f64>::identity(m, m).kronecker(a)
        + b.transpose().kronecker(&DMatrix::<f64>::identity(n, n));
    let svd = op.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio < 1e-12 {
        return Err(LinalgError::SingularSylvester { ratio });
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or(LinalgError::SingularSylvester { ratio })?;
    Ok(DMatrix::from_column_slice(n, m, x.as_slice()))
}

/// Solves `Aᵀ P + P A = -C`.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let p = solve_sylvester(&a.transpose(), a, &(-c))?;
    Ok(symmetrize(&p))
}

/// Residual `AᵀP + PA − P G P + Q` with `G = B Bᵀ`.
pub fn care_residual(
    a: &DMatrix<f64>,
    g: &DMatrix<f64>,
    q: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    a.transpose() * p + p * a - p * g * p + q
}

/// Stabilizing solution of `AᵀP + PA − P B Bᵀ P + Q = 0`.
///
/// Matrix sign iteration on the Hamiltonian gives the stable invariant
/// subspace; a few Newton–Kleinman steps then polish the result.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) {
        return Err(LinalgError::Dimension(format!(
            "A {:?}, B {:?}, Q {:?}",
            a.shape(),
            b.shape(),
            q.shape()
        )));
    }
    let g = b * b.transpose();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let det = z.determinant().abs();
        if !det.is_finite() || det == 0.0 {
            return Err(LinalgError::HamiltonianImaginaryAxis);
        }
        let inv = z
            .clone()
            .try_inverse()
            .ok_or(LinalgError::HamiltonianImaginaryAxis)?;
        let c = det.powf(1.0 / (2.0 * n as f64));
        let next = (&z / c + inv * c) * 0.5;
        let delta = (&next - &z).norm();
        let scale = z.norm();
        z = next;
        if delta <= 1e-13 * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::HamiltonianImaginaryAxis);
    }

    // (W + I)[I; P] = 0  =>  [W12; W22 + I] P = -[W11 + I; W21]
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(z.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n))
        .copy_from(&(-z.view((n, 0), (n, n))));
    if rank(&lhs, 1e-12) < n {
        return Err(LinalgError::RankDeficient);
    }
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|_| LinalgError::RankDeficient)?;
    let mut p = symmetrize(&p);

    let qn = q.norm().max(f64::MIN_POSITIVE);
    for _ in 0..8 {
        let res = care_residual(a, &g, q, &p).norm();
        if res <= 1e-13 * qn {
            break;
        }
        let acl = a - &g * &p;
        let rhs = q + &p * &g * &p;
        match solve_lyapunov(&acl, &rhs) {
            Ok(next) => p = next,
            Err(_) => break,
        }
    }
    let res = care_residual(a, &g, q, &p).norm();
    if !res.is_finite() || res > 1e-9 * qn {
        return Err(LinalgError::RiccatiNoConvergence { residual: res });
    }
    Ok(p)
}

/// Kronecker product with an identity on the right, `M ⊗ I_k`.
pub fn kron_identity(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.kronecker(&DMatrix::<f64>::identity(k, k))
}
