//! Dense decompositions behind the precoders.
//!
//! The higher-order GSVD follows the quotient-mean construction: with
//! `S_i = A_i^H A_i`, the shared right basis `V` holds the eigenvectors of
//! `T = 1/(S(S-1)) * sum_{i<j} (S_i S_j^-1 + S_j S_i^-1)`, and each
//! `B_i = A_i V^-H` splits into unit-norm columns `U_i` and their norms.

use nalgebra::{Cholesky, DVector, SymmetricEigen, SVD};

use crate::{CMat, Error, Result, C64};

/// Singular-value ratio below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Imaginary part (relative to the modulus) tolerated on quotient eigenvalues.
const IMAG_TOL: f64 = 1e-8;
/// Condition number above which `S_j` is ridge-regularized before solving.
const RIDGE_COND: f64 = 1e12;
/// Generalized singular values below this are clamped to zero.
const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HoGsvd {
    /// Left bases `U_i`, `m_i x n`, unit-norm columns.
    pub u: Vec<CMat>,
    /// Shared right basis, `n x n`, unit-norm columns.
    pub v: CMat,
    /// `V^-1`, kept because every consumer needs `V^-H` or `V^-1`.
    pub v_inv: CMat,
    /// Per-matrix generalized singular values.
    pub sigma: Vec<DVector<f64>>,
    /// Eigenvalues of the quotient mean in stream order; empty for a single input.
    pub eigenvalues: Vec<f64>,
    /// `(matrix, column)` pairs whose value was clamped to zero.
    pub degenerate: Vec<(usize, usize)>,
}

impl HoGsvd {
    pub fn v_inv_h(&self) -> CMat {
        self.v_inv.adjoint()
    }

    /// `U_i diag(sigma_i) V^H`.
    pub fn reconstruct(&self, i: usize) -> CMat {
        let mut us = self.u[i].clone();
        for (l, s) in self.sigma[i].iter().enumerate() {
            us.column_mut(l).scale_mut(*s);
        }
        us * self.v.adjoint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceRole {
    RowSpaceIntersection,
    NullSpace,
}

/// Orthonormal columns spanning a subspace of `C^N`.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub basis: CMat,
    pub role: SubspaceRole,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// SVD with singular values in descending order.
pub(crate) fn sorted_svd(m: &CMat) -> SVD<C64, nalgebra::Dyn, nalgebra::Dyn> {
    SVD::new(m.clone(), true, true)
}

pub fn singular_values(m: &CMat) -> DVector<f64> {
    m.singular_values()
}

/// `sigma_min / sigma_max` over the `min(rows, cols)` singular values.
pub fn singular_ratio(m: &CMat) -> f64 {
    let s = m.singular_values();
    let max = s.max();
    if max == 0.0 {
        return 0.0;
    }
    s.min() / max
}

pub fn condition_number(m: &CMat) -> f64 {
    let s = m.singular_values();
    let min = s.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        s.max() / min
    }
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(mats: &[&CMat]) -> Result<CMat> {
    let cols = mats.first().map_or(0, |m| m.ncols());
    if mats.iter().any(|m| m.ncols() != cols) {
        return Err(Error::DimensionMismatch(
            "stacked matrices have different column counts".into(),
        ));
    }
    let rows = mats.iter().map(|m| m.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut r = 0;
    for m in mats {
        out.view_mut((r, 0), (m.nrows(), cols)).copy_from(*m);
        r += m.nrows();
    }
    Ok(out)
}

/// Higher-order GSVD `A_i = U_i diag(sigma_i) V^H` of matrices sharing a
/// column count. A single input falls back to the SVD.
pub fn ho_gsvd(mats: &[CMat]) -> Result<HoGsvd> {
    let first = mats
        .first()
        .ok_or_else(|| Error::DimensionMismatch("ho_gsvd needs at least one matrix".into()))?;
    let n = first.ncols();
    for (i, a) in mats.iter().enumerate() {
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix {i} has {} columns, expected {n}",
                a.ncols()
            )));
        }
        if a.nrows() < n {
            return Err(Error::DimensionMismatch(format!(
                "matrix {i} is {}x{n}; needs at least {n} rows",
                a.nrows()
            )));
        }
        let ratio = singular_ratio(a);
        if !(ratio > RANK_TOL) {
            return Err(Error::RankDeficiency { index: i, ratio });
        }
    }

    let (v, eigenvalues) = if mats.len() == 1 {
        let svd = sorted_svd(first);
        let mut v = svd.v_t.expect("v requested").adjoint();
        normalize_columns(&mut v);
        (v, Vec::new())
    } else {
        right_basis(mats)?
    };

    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("HO-GSVD right basis is not invertible".into()))?;
    let v_inv_h = v_inv.adjoint();

    let mut u = Vec::with_capacity(mats.len());
    let mut sigma = Vec::with_capacity(mats.len());
    let mut degenerate = Vec::new();
    for (i, a) in mats.iter().enumerate() {
        let mut b = a * &v_inv_h;
        let mut s = DVector::zeros(n);
        let mut clamped = Vec::new();
        for l in 0..n {
            let norm = b.column(l).norm();
            if norm < SIGMA_FLOOR {
                clamped.push(l);
            } else {
                s[l] = norm;
                b.column_mut(l).unscale_mut(norm);
            }
        }
        for &l in &clamped {
            let col = orthogonal_unit_vector(&b, l);
            b.set_column(l, &col);
            degenerate.push((i, l));
        }
        u.push(b);
        sigma.push(s);
    }

    Ok(HoGsvd {
        u,
        v,
        v_inv,
        sigma,
        eigenvalues,
        degenerate,
    })
}

/// Eigenvectors of the quotient mean, sorted by descending eigenvalue.
fn right_basis(mats: &[CMat]) -> Result<(CMat, Vec<f64>)> {
    let s_count = mats.len();
    let n = mats[0].ncols();
    let grams: Vec<CMat> = mats.iter().map(|a| a.adjoint() * a).collect();

    let solvers = grams
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let eig = SymmetricEigen::new(g.clone());
            let (lo, hi) = eig
                .eigenvalues
                .iter()
                .fold((f64::INFINITY, 0.0_f64), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
            let mut g = g.clone();
            if !(lo > 0.0) || hi / lo > RIDGE_COND {
                let ridge = 1e-12 * g.trace().re / n as f64;
                for d in 0..n {
                    g[(d, d)] += C64::new(ridge, 0.0);
                }
            }
            Cholesky::new(g).ok_or(Error::RankDeficiency { index: j, ratio: 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;

    // T = 1/(S(S-1)) * sum_{i != j} S_i S_j^-1, and S_i S_j^-1 = (S_j^-1 S_i)^H.
    let mut t = CMat::zeros(n, n);
    for (j, solver) in solvers.iter().enumerate() {
        for (i, g) in grams.iter().enumerate() {
            if i != j {
                t += solver.solve(g).adjoint();
            }
        }
    }
    t.unscale_mut((s_count * (s_count - 1)) as f64);

    let (vecs, vals) = eigen_general(&t)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut v = CMat::zeros(n, n);
    let mut sorted_vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &vecs.column(src));
        sorted_vals.push(vals[src]);
    }
    normalize_columns(&mut v);
    Ok((v, sorted_vals))
}

/// Eigenpairs of a general complex matrix whose spectrum is real: Schur form
/// followed by back-substitution on the triangular factor.
fn eigen_general(t: &CMat) -> Result<(CMat, Vec<f64>)> {
    let n = t.nrows();
    let (q, r) = nalgebra::Schur::try_new(t.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::SolverFailure {
            message: "Schur iteration did not converge".into(),
            iterations: 10_000,
            trace: Vec::new(),
        })?
        .unpack();

    let mut vals = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = r[(k, k)];
        if lambda.im.abs() > IMAG_TOL * lambda.norm().max(1.0) {
            return Err(Error::NonRealSpectrum {
                re: lambda.re,
                im: lambda.im,
            });
        }
        vals.push(lambda.re);
    }

    let small = f64::EPSILON * r.norm().max(f64::MIN_POSITIVE);
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let lambda = r[(k, k)];
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += r[(i, j)] * y[(j, k)];
            }
            let mut denom = r[(i, i)] - lambda;
            if denom.norm() < small {
                denom = C64::new(small, 0.0);
            }
            y[(i, k)] = -acc / denom;
        }
    }
    Ok((q * y, vals))
}

/// Unit norm, largest-magnitude entry real and positive.
fn normalize_columns(v: &mut CMat) {
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.unscale_mut(norm);
        }
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(C64::new(1.0, 0.0));
        if pivot.norm() > 0.0 {
            let phase = pivot.conj() / pivot.norm();
            for x in col.iter_mut() {
                *x *= phase;
            }
        }
    }
}

/// Unit vector orthogonal to every column of `m` except `skip`.
fn orthogonal_unit_vector(m: &CMat, skip: usize) -> DVector<C64> {
    let rows = m.nrows();
    let others: Vec<DVector<C64>> = (0..m.ncols())
        .filter(|&c| c != skip)
        .map(|c| m.column(c).into_owned())
        .collect();
    let mut ortho: Vec<DVector<C64>> = Vec::new();
    for c in others {
        let mut w = c;
        for q in &ortho {
            let proj = q.dotc(&w);
            w -= q * proj;
        }
        let norm = w.norm();
        if norm > 1e-12 {
            ortho.push(w / C64::new(norm, 0.0));
        }
    }
    let mut best = DVector::zeros(rows);
    let mut best_norm = -1.0;
    for e in 0..rows {
        let mut w = DVector::zeros(rows);
        w[e] = C64::new(1.0, 0.0);
        for q in &ortho {
            let proj = q.dotc(&w);
            w -= q * proj;
        }
        let norm = w.norm();
        if norm > best_norm {
            best_norm = norm;
            best = w;
        }
    }
    best / C64::new(best_norm, 0.0)
}

/// The `target_dim` dominant right singular vectors of the vertically stacked
/// matrices.
pub fn row_space_intersection(mats: &[&CMat], target_dim: usize) -> Result<SubspaceBasis> {
    let stacked = vstack(mats)?;
    let limit = stacked.nrows().min(stacked.ncols());
    if target_dim == 0 || target_dim > limit {
        return Err(Error::DimensionMismatch(format!(
            "requested {target_dim} basis vectors from a {}x{} stack",
            stacked.nrows(),
            stacked.ncols()
        )));
    }
    let svd = sorted_svd(&stacked);
    let v = svd.v_t.expect("v requested").adjoint();
    Ok(SubspaceBasis {
        basis: v.columns(0, target_dim).into_owned(),
        role: SubspaceRole::RowSpaceIntersection,
    })
}

/// Orthonormal basis of the null space of a full-row-rank `r x N` matrix,
/// with `dim = N - r`.
pub fn null_space_basis(stacked: &CMat, dim: usize) -> Result<SubspaceBasis> {
    let (rows, n) = stacked.shape();
    if rows + dim > n {
        return Err(Error::RankDeficiency {
            index: 0,
            ratio: 0.0,
        });
    }
    if rows + dim < n {
        return Err(Error::DimensionMismatch(format!(
            "null space of a {rows}x{n} matrix has dimension {}, requested {dim}",
            n - rows
        )));
    }
    if rows == 0 {
        return Ok(SubspaceBasis {
            basis: CMat::identity(n, n),
            role: SubspaceRole::NullSpace,
        });
    }
    let ratio = singular_ratio(stacked);
    if !(ratio > RANK_TOL) {
        return Err(Error::RankDeficiency { index: 0, ratio });
    }
    // Zero-padding to a square matrix makes the SVD return a full right basis.
    let mut square = CMat::zeros(n, n);
    square.view_mut((0, 0), (rows, n)).copy_from(stacked);
    let svd = sorted_svd(&square);
    let v = svd.v_t.expect("v requested").adjoint();
    Ok(SubspaceBasis {
        basis: v.columns(rows, dim).into_owned(),
        role: SubspaceRole::NullSpace,
    })
}

/// `X` with `X * tall = I`, via the SVD.
pub fn left_pseudo_inverse(tall: &CMat) -> Result<CMat> {
    let (m, n) = tall.shape();
    if m < n {
        return Err(Error::DimensionMismatch(format!(
            "left inverse needs a tall matrix, got {m}x{n}"
        )));
    }
    let svd = sorted_svd(tall);
    let s = &svd.singular_values;
    let max = s.max();
    let min = s.min();
    if !(max > 0.0) || !(min / max > RANK_TOL) {
        return Err(Error::RankDeficiency {
            index: 0,
            ratio: if max > 0.0 { min / max } else { 0.0 },
        });
    }
    let u = svd.u.expect("u requested");
    let mut w = svd.v_t.expect("v requested").adjoint();
    for (l, sv) in s.iter().enumerate() {
        w.column_mut(l).unscale_mut(*sv);
    }
    Ok(w * u.adjoint())
}
