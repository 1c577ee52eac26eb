//! Joint approximate diagonalization of complex matrix stacks by complex
//! Jacobi (Givens) rotations.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::linalg::{matrix_is_finite, orthonormalize, CMatrix, C64};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_SWEEPS: usize = 30;
/// Rotations whose sine magnitude falls below this are skipped.
pub const ANGLE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStack {
    pub mats: Vec<CMatrix>,
    pub labels: Vec<usize>,
}

impl MatrixStack {
    pub fn new(mats: Vec<CMatrix>, labels: Vec<usize>) -> Result<Self> {
        let stack = Self { mats, labels };
        stack.validate()?;
        Ok(stack)
    }

    /// Labels `1..=T`.
    pub fn unlabeled(mats: Vec<CMatrix>) -> Result<Self> {
        let labels = (1..=mats.len()).collect();
        Self::new(mats, labels)
    }

    pub fn dim(&self) -> usize {
        self.mats.first().map_or(0, |m| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.mats.first() else {
            return Err(Error::InvalidStack("empty stack".into()));
        };
        let n = first.nrows();
        if self.labels.len() != self.mats.len() {
            return Err(Error::InvalidStack("label count differs from matrix count".into()));
        }
        for m in &self.mats {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidStack(format!("expected {n}x{n}, found {}x{}", m.nrows(), m.ncols())));
            }
            if !matrix_is_finite(m) {
                return Err(Error::InvalidStack("non-finite entry".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JadResult {
    pub unitary: CMatrix,
    /// Cost at the starting point followed by the cost after each sweep.
    pub cost_history: Vec<f64>,
    pub sweeps_used: usize,
}

impl JadResult {
    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("history holds the initial cost")
    }
}

fn offdiag(mats: &[CMatrix]) -> f64 {
    mats.iter()
        .map(|m| {
            let mut s = 0.0;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if i != j {
                        s += m[(i, j)].norm_sqr();
                    }
                }
            }
            s
        })
        .sum()
}

/// `J(U) = Σ_τ Σ_{i≠j} |(U^H M_τ U)_ij|²`.
pub fn offdiag_cost(u: &CMatrix, stack: &MatrixStack) -> Result<f64> {
    let n = stack.dim();
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.nrows() });
    }
    let rotated: Vec<CMatrix> = stack.mats.iter().map(|m| u.adjoint() * m * u).collect();
    Ok(offdiag(&rotated))
}

/// Full diagonalization from the identity.
pub fn joint_diagonalize(stack: &MatrixStack, tol: f64, max_sweeps: usize) -> Result<JadResult> {
    let n = stack.dim();
    joint_diagonalize_from(stack, &CMatrix::identity(n, n), tol, max_sweeps)
}

/// Sweeps starting from `start`, which is re-orthonormalized first.
///
/// Stops after `max_sweeps`, when a sweep applies no rotation, or when the
/// relative cost decrease of a sweep drops below `tol`.
pub fn joint_diagonalize_from(stack: &MatrixStack, start: &CMatrix, tol: f64, max_sweeps: usize) -> Result<JadResult> {
    stack.validate()?;
    let n = stack.dim();
    if start.nrows() != n || start.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: start.nrows() });
    }
    let mut u = orthonormalize(start);
    let mut mats: Vec<CMatrix> = stack.mats.iter().map(|m| u.adjoint() * m * &u).collect();
    let mut history = vec![offdiag(&mats)];
    let mut sweeps = 0;
    while sweeps < max_sweeps && n >= 2 {
        let prev = *history.last().expect("non-empty");
        if prev == 0.0 {
            break;
        }
        let rotated = sweep(&mut mats, &mut u);
        sweeps += 1;
        let cost = offdiag(&mats);
        history.push(cost);
        if !rotated || (prev - cost) <= tol * prev {
            break;
        }
    }
    Ok(JadResult { unitary: u, cost_history: history, sweeps_used: sweeps })
}

/// One pass over all index pairs; returns whether any rotation was applied.
fn sweep(mats: &mut [CMatrix], u: &mut CMatrix) -> bool {
    let n = u.nrows();
    let mut any = false;
    for p in 0..n - 1 {
        for q in p + 1..n {
            if let Some((c, s)) = pair_rotation(mats, p, q) {
                any = true;
                rotate(mats, u, p, q, c, s);
            }
        }
    }
    any
}

/// Optimal rotation for pair `(p, q)`: the leading eigenvector `(x, y, z)` of
/// `Re Σ g^H g` with `g = [M_pp − M_qq, M_pq + M_qp, i(M_qp − M_pq)]`.
fn pair_rotation(mats: &[CMatrix], p: usize, q: usize) -> Option<(f64, C64)> {
    let mut gram = Matrix3::<f64>::zeros();
    for m in mats {
        let g = [m[(p, p)] - m[(q, q)], m[(p, q)] + m[(q, p)], C64::new(0.0, 1.0) * (m[(q, p)] - m[(p, q)])];
        for i in 0..3 {
            for j in 0..3 {
                gram[(i, j)] += (g[i].conj() * g[j]).re;
            }
        }
    }
    let eig = SymmetricEigen::new(gram);
    let imax = eig.eigenvalues.imax();
    let gain = eig.eigenvalues[imax] - gram[(0, 0)];
    if !(gain > 1e-14 * gram.trace().max(f64::MIN_POSITIVE)) {
        return None;
    }
    let v = eig.eigenvectors.column(imax);
    let (mut x, mut y, mut z) = (v[0], v[1], v[2]);
    if x < 0.0 {
        x = -x;
        y = -y;
        z = -z;
    }
    let r = (x * x + y * y + z * z).sqrt();
    let c = ((x + r) / (2.0 * r)).sqrt();
    let s = C64::new(y, -z) / (2.0 * r * (x + r)).sqrt();
    if s.norm() < ANGLE_THRESHOLD {
        return None;
    }
    Some((c, s))
}

/// `M ← G^H M G`, `U ← U G` with `G_pp = G_qq = c`, `G_pq = −s̄`, `G_qp = s`.
fn rotate(mats: &mut [CMatrix], u: &mut CMatrix, p: usize, q: usize, c: f64, s: C64) {
    let cc = C64::new(c, 0.0);
    let n = u.nrows();
    for m in mats.iter_mut() {
        for k in 0..n {
            let (mp, mq) = (m[(k, p)], m[(k, q)]);
            m[(k, p)] = mp * cc + mq * s;
            m[(k, q)] = -mp * s.conj() + mq * cc;
        }
        for k in 0..n {
            let (mp, mq) = (m[(p, k)], m[(q, k)]);
            m[(p, k)] = cc * mp + s.conj() * mq;
            m[(q, k)] = -s * mp + cc * mq;
        }
    }
    for k in 0..n {
        let (up, uq) = (u[(k, p)], u[(k, q)]);
        u[(k, p)] = up * cc + uq * s;
        u[(k, q)] = -up * s.conj() + uq * cc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigen_desc, max_abs, unitary_deviation, CVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn planted(rng: &mut ChaCha8Rng, n: usize, t: usize) -> (CMatrix, MatrixStack) {
        let q = orthonormalize(&random_matrix(rng, n));
        let mats = (0..t)
            .map(|_| {
                let d = CVector::from_fn(n, |_, _| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
                &q * CMatrix::from_diagonal(&d) * q.adjoint()
            })
            .collect();
        (q, MatrixStack::unlabeled(mats).unwrap())
    }

    #[test]
    fn diagonal_stack_costs_nothing() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(2.0, 1.0)]));
        let stack = MatrixStack::unlabeled(vec![d]).unwrap();
        assert_eq!(offdiag_cost(&CMatrix::identity(2, 2), &stack).unwrap(), 0.0);
    }

    #[test]
    fn swap_matrix_costs_two() {
        let m = CMatrix::from_fn(2, 2, |i, j| C64::new(if i != j { 1.0 } else { 0.0 }, 0.0));
        let stack = MatrixStack::unlabeled(vec![m]).unwrap();
        assert_eq!(offdiag_cost(&CMatrix::identity(2, 2), &stack).unwrap(), 2.0);
    }

    #[test]
    fn cost_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stack = MatrixStack::unlabeled((0..4).map(|_| random_matrix(&mut rng, 5)).collect()).unwrap();
        let u = orthonormalize(&random_matrix(&mut rng, 5));
        let mut direct = 0.0;
        for m in &stack.mats {
            for i in 0..5 {
                for j in 0..5 {
                    if i == j {
                        continue;
                    }
                    let mut e = C64::new(0.0, 0.0);
                    for a in 0..5 {
                        for b in 0..5 {
                            e += u[(a, i)].conj() * m[(a, b)] * u[(b, j)];
                        }
                    }
                    direct += e.norm_sqr();
                }
            }
        }
        let fast = offdiag_cost(&u, &stack).unwrap();
        assert!((fast - direct).abs() < 1e-12 * direct.max(1.0));
    }

    #[test]
    fn identity_stack_needs_no_rotation() {
        let stack = MatrixStack::unlabeled(vec![CMatrix::identity(3, 3); 3]).unwrap();
        let r = joint_diagonalize(&stack, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(r.unitary, CMatrix::identity(3, 3));
        assert_eq!(r.final_cost(), 0.0);
    }

    #[test]
    fn single_hermitian_matrix_reduces_to_evd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 4);
        let h = &a + a.adjoint();
        let stack = MatrixStack::unlabeled(vec![h.clone()]).unwrap();
        let r = joint_diagonalize(&stack, 1e-14, 100).unwrap();
        let d = r.unitary.adjoint() * &h * &r.unitary;
        let mut diag: Vec<f64> = (0..4).map(|i| d[(i, i)].re).collect();
        diag.sort_by(|a, b| b.total_cmp(a));
        let (vals, _) = hermitian_eigen_desc(&h);
        for (a, b) in diag.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn planted_unitary_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, stack) = planted(&mut rng, 6, 10);
        let r = joint_diagonalize(&stack, DEFAULT_TOL, 100).unwrap();
        assert!(r.final_cost() < 1e-10 * r.cost_history[0]);
        let overlap = q.adjoint() * &r.unitary;
        for j in 0..6 {
            let best = (0..6).map(|i| overlap[(i, j)].norm()).fold(0.0, f64::max);
            assert!(best > 1.0 - 1e-8);
        }
    }

    #[test]
    fn rejects_bad_stacks() {
        assert!(MatrixStack::unlabeled(vec![]).is_err());
        assert!(MatrixStack::unlabeled(vec![CMatrix::identity(2, 2), CMatrix::identity(3, 3)]).is_err());
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(f64::INFINITY, 0.0);
        assert!(matches!(MatrixStack::unlabeled(vec![m]), Err(Error::InvalidStack(_))));
    }

    proptest! {
        #[test]
        fn cost_never_increases(seed in any::<u64>(), n in 2usize..6, t in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let stack = MatrixStack::unlabeled((0..t).map(|_| random_matrix(&mut rng, n)).collect()).unwrap();
            let start = orthonormalize(&random_matrix(&mut rng, n));
            let r = joint_diagonalize_from(&stack, &start, 0.0, 20).unwrap();
            let j0 = r.cost_history[0];
            for w in r.cost_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * j0);
            }
            prop_assert!(unitary_deviation(&r.unitary) < 1e-8);
            prop_assert!(r.final_cost() <= offdiag_cost(&CMatrix::identity(n, n), &stack).unwrap().max(j0) + 1e-12);
            let again = offdiag_cost(&r.unitary, &stack).unwrap();
            prop_assert!((again - r.final_cost()).abs() <= 1e-9 * j0.max(1.0));
        }
    }

    #[test]
    fn result_no_worse_than_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stack = MatrixStack::unlabeled((0..3).map(|_| random_matrix(&mut rng, 4)).collect()).unwrap();
        let r = joint_diagonalize(&stack, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        assert!(r.final_cost() <= offdiag_cost(&CMatrix::identity(4, 4), &stack).unwrap());
        assert!(max_abs(&(r.unitary.adjoint() * &r.unitary - CMatrix::identity(4, 4))) < 1e-8);
    }
}
