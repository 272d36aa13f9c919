//! Jacobi-preconditioned conjugate gradients on the mean-zero subspace.

use super::SparseMatrix;
use crate::error::{Error, Result};

/// Diagonal entries below this fraction of the largest one are frozen to zero.
pub const FREEZE_THRESHOLD: f64 = 1e-14;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// DOFs excluded because their diagonal is essentially zero.
    pub frozen: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Subtracts `(Σ v_i / Σ m_i) m` over the active entries so `Σ v_i = 0`.
fn deflate_rhs(v: &mut [f64], mass: &[f64], active: &[bool], mass_total: f64) {
    let sum: f64 = v.iter().zip(active).filter(|(_, a)| **a).map(|(x, _)| x).sum();
    let c = sum / mass_total;
    for ((vi, mi), a) in v.iter_mut().zip(mass).zip(active) {
        if *a {
            *vi -= c * mi;
        } else {
            *vi = 0.0;
        }
    }
}

/// Subtracts the mass-weighted mean over the active entries.
fn remove_mean(x: &mut [f64], mass: &[f64], active: &[bool], mass_total: f64) {
    let mean: f64 = x
        .iter()
        .zip(mass)
        .zip(active)
        .filter(|(_, a)| **a)
        .map(|((xi, mi), _)| xi * mi)
        .sum::<f64>()
        / mass_total;
    for (xi, a) in x.iter_mut().zip(active) {
        if *a {
            *xi -= mean;
        }
    }
}

/// Solves `A x = b` for symmetric positive semidefinite `A` whose kernel is
/// spanned by constants, returning the solution with zero `mass`-weighted mean.
///
/// The right-hand side is first made compatible by removing its mean relative
/// to the lumped mass. `max_iter` defaults to `20 n`.
pub fn solve_mean_zero(
    a: &SparseMatrix,
    b: &[f64],
    mass: &[f64],
    tol: f64,
    max_iter: Option<usize>,
) -> Result<SolveOutcome> {
    solve_mean_zero_monitored(a, b, mass, tol, max_iter, |_, _| {})
}

/// As [`solve_mean_zero`], calling `monitor(k, x_k)` after every iterate.
pub fn solve_mean_zero_monitored<M>(
    a: &SparseMatrix,
    b: &[f64],
    mass: &[f64],
    tol: f64,
    max_iter: Option<usize>,
    mut monitor: M,
) -> Result<SolveOutcome>
where
    M: FnMut(usize, &[f64]),
{
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(mass.len(), n);
    let max_iter = max_iter.unwrap_or(20 * n.max(1));

    let diag = a.diagonal();
    let max_diag = diag.iter().fold(0.0f64, |m, d| m.max(*d));
    let active: Vec<bool> = diag.iter().map(|d| *d > FREEZE_THRESHOLD * max_diag).collect();
    let frozen = active.iter().filter(|a| !**a).count();
    let mass_total: f64 = mass.iter().zip(&active).filter(|(_, a)| **a).map(|(m, _)| m).sum();

    let mut x = vec![0.0; n];
    if max_diag <= 0.0 || mass_total <= 0.0 {
        return Ok(SolveOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            frozen,
        });
    }

    let mut r = b.to_vec();
    deflate_rhs(&mut r, mass, &active, mass_total);
    let b_norm = dot(&r, &r).sqrt();
    if b_norm == 0.0 {
        return Ok(SolveOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            frozen,
        });
    }

    let inv_diag: Vec<f64> = diag
        .iter()
        .zip(&active)
        .map(|(d, a)| if *a { 1.0 / d } else { 0.0 })
        .collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;

    for k in 1..=max_iter {
        a.mul_vec_into(&p, &mut q);
        for (qi, act) in q.iter_mut().zip(&active) {
            if !act {
                *qi = 0.0;
            }
        }
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        remove_mean(&mut x, mass, &active, mass_total);
        deflate_rhs(&mut r, mass, &active, mass_total);
        monitor(k, &x);

        residual = dot(&r, &r).sqrt() / b_norm;
        if residual <= tol {
            return Ok(SolveOutcome {
                solution: x,
                iterations: k,
                relative_residual: residual,
                frozen,
            });
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
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_stiffness, lumped_mass, TripletBuilder};
    use crate::Vec3;
    use nalgebra::{DMatrix, DVector};

    fn square_patch() -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        (v, vec![[0, 1, 2], [0, 2, 3]])
    }

    /// Dense oracle: bordered system [A m; mᵀ 0] after deflating b.
    fn dense_mean_zero(a: &DMatrix<f64>, b: &[f64], m: &[f64]) -> Vec<f64> {
        let n = b.len();
        let total: f64 = m.iter().sum();
        let shift = b.iter().sum::<f64>() / total;
        let mut big = DMatrix::zeros(n + 1, n + 1);
        big.view_mut((0, 0), (n, n)).copy_from(a);
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            big[(i, n)] = m[i];
            big[(n, i)] = m[i];
            rhs[i] = b[i] - shift * m[i];
        }
        let sol = big.lu().solve(&rhs).unwrap();
        sol.rows(0, n).iter().copied().collect()
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (v, t) = square_patch();
        let a = assemble_stiffness(4, t.iter().map(|tri| (tri.map(|i| v[i]).to_vec(), tri.to_vec()))).unwrap();
        let m = lumped_mass(4, t.iter().map(|tri| (tri.map(|i| v[i]).to_vec(), tri.to_vec()))).unwrap();
        let out = solve_mean_zero(&a, &[0.0; 4], &m, 1e-10, None).unwrap();
        assert_eq!(out.solution, vec![0.0; 4]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn matches_dense_solve_and_energy_decreases() {
        let (v, t) = square_patch();
        let elems = || t.iter().map(|tri| (tri.map(|i| v[i]).to_vec(), tri.to_vec()));
        let a = assemble_stiffness(4, elems()).unwrap();
        let m = lumped_mass(4, elems()).unwrap();
        // F = φ_1 - φ_3 integrated against the basis with the lumped mass
        let b: Vec<f64> = [0.0, 1.0, 0.0, -1.0].iter().zip(&m).map(|(f, mi)| f * mi).collect();
        let dense = dense_mean_zero(&a.to_dense(), &b, &m);

        let a_dense = a.to_dense();
        let exact = DVector::from_vec(dense.clone());
        let mut energies = Vec::new();
        let out = solve_mean_zero_monitored(&a, &b, &m, 1e-12, None, |_, x| {
            let e = DVector::from_column_slice(x) - &exact;
            energies.push((e.transpose() * &a_dense * &e)[(0, 0)]);
        })
        .unwrap();
        for (x, y) in out.solution.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-9);
        }
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-30);
        }
        let mean: f64 = out.solution.iter().zip(&m).map(|(x, mi)| x * mi).sum();
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn zero_rows_are_frozen() {
        let mut builder = TripletBuilder::new(3);
        builder.add(0, 0, 1.0);
        builder.add(0, 1, -1.0);
        builder.add(1, 0, -1.0);
        builder.add(1, 1, 1.0);
        let a = builder.build();
        let out = solve_mean_zero(&a, &[1.0, -1.0, 5.0], &[1.0, 1.0, 1.0], 1e-12, None).unwrap();
        assert_eq!(out.frozen, 1);
        assert_eq!(out.solution[2], 0.0);
        assert!((out.solution[0] - 0.5).abs() < 1e-12);
        assert!((out.solution[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn reports_no_convergence() {
        let (v, t) = square_patch();
        let elems = || t.iter().map(|tri| (tri.map(|i| v[i]).to_vec(), tri.to_vec()));
        let a = assemble_stiffness(4, elems()).unwrap();
        let m = lumped_mass(4, elems()).unwrap();
        let err = solve_mean_zero(&a, &[1.0, -2.0, 0.5, 0.5], &m, 1e-14, Some(1)).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
    }
}
