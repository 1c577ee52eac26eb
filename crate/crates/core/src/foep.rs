//! Recursive eigenspace of the complex response covariance, updated with a
//! first-order eigen-perturbation per sample, and the whitening it induces.

use nalgebra::DVector;

use crate::linalg::{descending_order, hermitian_eigen_desc, is_finite, orthonormalize, permute_columns, CMatrix, CVector, C64};
use crate::{Error, Result};

/// Relative eigenvalue floor used by [`whiten`] unless overridden.
pub const DEFAULT_WHITEN_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenspaceState {
    pub eigvecs: CMatrix,
    /// Descending, nonnegative.
    pub eigvals: Vec<f64>,
    pub count: u64,
    pub mean: CVector,
    /// Exponential forgetting factor in (0, 1]; `None` keeps the plain 1/k average.
    pub forgetting: Option<f64>,
    /// Maintain and subtract a recursive mean. Off means the stream is taken
    /// as zero mean.
    pub track_mean: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPair {
    pub eigvec_pert: CMatrix,
    pub eigval_pert: Vec<f64>,
}

impl EigenspaceState {
    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    /// Weight of the newest sample once `count` includes it.
    pub fn weight(&self) -> f64 {
        let a = 1.0 / self.count as f64;
        match self.forgetting {
            Some(lambda) => a.max(1.0 - lambda),
            None => a,
        }
    }

    pub fn covariance(&self) -> CMatrix {
        let d = CVector::from_iterator(self.dim(), self.eigvals.iter().map(|&v| C64::new(v, 0.0)));
        &self.eigvecs * CMatrix::from_diagonal(&d) * self.eigvecs.adjoint()
    }

    /// `V Σ^{1/2}`, the inverse of the whitening matrix.
    pub fn dewhitening(&self) -> CMatrix {
        let mut m = self.eigvecs.clone();
        for (j, &v) in self.eigvals.iter().enumerate() {
            let mut col = m.column_mut(j);
            col *= C64::new(v.max(0.0).sqrt(), 0.0);
        }
        m
    }

    /// Little-endian snapshot: `n`, `count` as u64, forgetting as f64 (NaN
    /// when absent), mean-tracking flag as u8, then eigvecs row-major as
    /// (re, im) pairs, eigvals, and the mean as (re, im) pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.dim();
        let mut out = Vec::with_capacity(25 + 16 * n * n + 8 * n + 16 * n);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.forgetting.unwrap_or(f64::NAN).to_le_bytes());
        out.push(self.track_mean as u8);
        for i in 0..n {
            for j in 0..n {
                let z = self.eigvecs[(i, j)];
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        for v in &self.eigvals {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for z in self.mean.iter() {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut take = |len: usize| -> Result<&[u8]> {
            if cursor.len() < len {
                return Err(Error::InvalidArgument("truncated eigenspace snapshot".into()));
            }
            let (head, tail) = cursor.split_at(len);
            cursor = tail;
            Ok(head)
        };
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
        let n = u64_at(take(8)?) as usize;
        if n == 0 || n > 4096 {
            return Err(Error::InvalidArgument(format!("implausible snapshot dimension {n}")));
        }
        let count = u64_at(take(8)?);
        let forgetting = f64_at(take(8)?);
        let track_mean = take(1)?[0] != 0;
        let mut eigvecs = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let re = f64_at(take(8)?);
                let im = f64_at(take(8)?);
                eigvecs[(i, j)] = C64::new(re, im);
            }
        }
        let mut eigvals = Vec::with_capacity(n);
        for _ in 0..n {
            eigvals.push(f64_at(take(8)?));
        }
        let mut mean = CVector::zeros(n);
        for i in 0..n {
            let re = f64_at(take(8)?);
            let im = f64_at(take(8)?);
            mean[i] = C64::new(re, im);
        }
        if !cursor.is_empty() {
            return Err(Error::InvalidArgument("trailing bytes in eigenspace snapshot".into()));
        }
        Ok(Self { eigvecs, eigvals, count, mean, forgetting: (!forgetting.is_nan()).then_some(forgetting), track_mean })
    }
}

/// Eigenspace of the sample covariance of an `n x B` batch (columns are samples).
pub fn initialize_eigenspace(batch: &CMatrix, track_mean: bool, forgetting: Option<f64>) -> Result<EigenspaceState> {
    let (n, b) = batch.shape();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if b < 2 * n {
        return Err(Error::TooShort { needed: 2 * n, got: b });
    }
    if let Some(l) = forgetting {
        if !(l > 0.0 && l <= 1.0) {
            return Err(Error::InvalidArgument(format!("forgetting factor {l} outside (0, 1]")));
        }
    }
    let mean = if track_mean { batch.column_sum() / C64::new(b as f64, 0.0) } else { CVector::zeros(n) };
    let mut centered = batch.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = &centered * centered.adjoint() / C64::new(b as f64, 0.0);
    let (vals, vecs) = hermitian_eigen_desc(&cov);
    let max = vals[0];
    let min = vals[n - 1];
    if !(max > 0.0) || min / max < 1e-12 {
        return Err(Error::DegenerateInitialization { ratio: if max > 0.0 { min / max } else { 0.0 } });
    }
    Ok(EigenspaceState { eigvecs: vecs, eigvals: vals, count: b as u64, mean, forgetting, track_mean })
}

/// First-order perturbation of the diagonal matrix `diag(eigvals)` by the
/// Hermitian `g`: `Ω = diag(g)`, `Ψ_ij = g_ij / (g_jj − g_ii)`.
pub fn first_order_pair(g: &CMatrix) -> PerturbationPair {
    let n = g.nrows();
    let d: Vec<f64> = (0..n).map(|i| g[(i, i)].re).collect();
    let floor = 1e-12 * d.iter().map(|v| v.abs()).sum::<f64>();
    let mut psi = CMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            let gap = d[j] - d[i];
            if i != j && gap.abs() > floor {
                psi[(i, j)] = g[(i, j)] / gap;
            }
        }
    }
    PerturbationPair { eigvec_pert: psi, eigval_pert: d }
}

/// One recursive update with sample `y`. A non-finite sample is rejected and
/// leaves the state untouched.
pub fn foep_update(state: &mut EigenspaceState, y: &CVector) -> Result<PerturbationPair> {
    let n = state.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if !is_finite(y) {
        return Err(Error::RejectedSample);
    }
    state.count += 1;
    let a = state.weight();
    if state.track_mean {
        state.mean = &state.mean * C64::new(1.0 - a, 0.0) + y * C64::new(a, 0.0);
    }
    let p = state.eigvecs.adjoint() * (y - &state.mean);
    let mut g = &p * p.adjoint() * C64::new(a, 0.0);
    for i in 0..n {
        g[(i, i)] += C64::new((1.0 - a) * state.eigvals[i], 0.0);
    }
    let pair = first_order_pair(&g);
    state.eigvecs = orthonormalize(&(&state.eigvecs * &pair.eigvec_pert));
    state.eigvals = pair.eigval_pert.iter().map(|v| v.max(0.0)).collect();
    sort_eigenpairs(state);
    Ok(pair)
}

/// Sorts eigenpairs by decreasing eigenvalue; ties keep their order.
pub fn sort_eigenpairs(state: &mut EigenspaceState) -> Vec<usize> {
    let order = descending_order(&state.eigvals);
    if order.iter().enumerate().any(|(i, &o)| i != o) {
        state.eigvecs = permute_columns(&state.eigvecs, &order);
        state.eigvals = order.iter().map(|&i| state.eigvals[i]).collect();
    }
    order
}

/// Whitening matrix `W = Σ^{-1/2} V^H` and the whitened sample `W (y − μ)`.
pub fn whiten(state: &EigenspaceState, y: &CVector) -> Result<(CVector, CMatrix)> {
    whiten_with(state, y, DEFAULT_WHITEN_EPS)
}

pub fn whiten_with(state: &EigenspaceState, y: &CVector, rel_eps: f64) -> Result<(CVector, CMatrix)> {
    let w = whitening_matrix(state, rel_eps)?;
    let z = &w * (y - &state.mean);
    Ok((z, w))
}

pub fn whitening_matrix(state: &EigenspaceState, rel_eps: f64) -> Result<CMatrix> {
    let max = state.eigvals.iter().cloned().fold(0.0, f64::max);
    let eps = rel_eps * max;
    let mut scale = DVector::zeros(state.dim());
    for (i, &v) in state.eigvals.iter().enumerate() {
        if !(v > eps) {
            return Err(Error::IllConditionedWhitening { index: i, value: v });
        }
        scale[i] = C64::new(v.powf(-0.5), 0.0);
    }
    Ok(CMatrix::from_diagonal(&scale) * state.eigvecs.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cmatrix_from_rows, frobenius, max_abs, unitary_deviation};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn state(vecs: CMatrix, vals: Vec<f64>, count: u64) -> EigenspaceState {
        let n = vals.len();
        EigenspaceState { eigvecs: vecs, eigvals: vals, count, mean: CVector::zeros(n), forgetting: None, track_mean: false }
    }

    fn complex_noise(rng: &mut ChaCha8Rng, n: usize, len: usize, scale: &[f64]) -> CMatrix {
        CMatrix::from_fn(n, len, |i, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im) * (scale[i] / 2f64.sqrt())
        })
    }

    #[test]
    fn white_batch_initializes_near_unit_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = complex_noise(&mut rng, 4, 10_000, &[1.0; 4]);
        let s = initialize_eigenspace(&batch, true, None).unwrap();
        assert!(s.eigvals.iter().all(|v| (v - 1.0).abs() < 0.1), "{:?}", s.eigvals);
        assert_eq!(s.count, 10_000);
    }

    #[test]
    fn repeated_vector_is_degenerate() {
        let v = [C64::new(1.0, 0.5), C64::new(-2.0, 0.0), C64::new(0.3, 1.0)];
        let batch = CMatrix::from_fn(3, 50, |i, _| v[i]);
        assert!(matches!(initialize_eigenspace(&batch, false, None), Err(Error::DegenerateInitialization { .. })));
        assert!(matches!(initialize_eigenspace(&CMatrix::zeros(3, 5), false, None), Err(Error::TooShort { .. })));
    }

    #[test]
    fn zero_sample_only_rescales() {
        let q = orthonormalize(&cmatrix_from_rows(&[&[(1.0, 0.2), (0.3, 0.0)], &[(0.1, -0.4), (1.0, 0.0)]]));
        let mut s = state(q.clone(), vec![3.0, 1.0], 9);
        foep_update(&mut s, &CVector::zeros(2)).unwrap();
        assert!(max_abs(&(&s.eigvecs - &q)) < 1e-12);
        assert!((s.eigvals[0] - 2.7).abs() < 1e-12 && (s.eigvals[1] - 0.9).abs() < 1e-12);
        assert_eq!(s.count, 10);
    }

    #[test]
    fn non_finite_sample_is_rejected() {
        let mut s = state(CMatrix::identity(2, 2), vec![2.0, 1.0], 5);
        let before = s.clone();
        let y = CVector::from_vec(vec![C64::new(f64::NAN, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(foep_update(&mut s, &y), Err(Error::RejectedSample)));
        assert_eq!(s, before);
    }

    #[test]
    fn single_update_tracks_exact_eigenvalues() {
        let mut s = state(CMatrix::identity(3, 3), vec![5.0, 3.0, 1.0], 1000);
        let y = CVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.4), C64::new(0.5, -0.2)]);
        let a = 1.0 / 1001.0;
        let exact_cov = s.covariance() * C64::new(1.0 - a, 0.0) + &y * y.adjoint() * C64::new(a, 0.0);
        let (exact, _) = hermitian_eigen_desc(&exact_cov);
        foep_update(&mut s, &y).unwrap();
        for (a, b) in s.eigvals.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn stationary_stream_converges_to_batch_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mix = orthonormalize(&complex_noise(&mut rng, 3, 3, &[1.0; 3]));
        let data = &mix * complex_noise(&mut rng, 3, 10_200, &[3.0, 1.5, 0.5]);
        let mut s = initialize_eigenspace(&data.columns(0, 200).into_owned(), false, None).unwrap();
        for k in 200..data.ncols() {
            foep_update(&mut s, &data.column(k).into_owned()).unwrap();
            assert!(unitary_deviation(&s.eigvecs) < 1e-6);
        }
        let batch = &data * data.adjoint() / C64::new(data.ncols() as f64, 0.0);
        assert!(frobenius(&(s.covariance() - &batch)) / frobenius(&batch) < 0.05);
    }

    #[test]
    fn diagonal_whitening() {
        let s = state(CMatrix::identity(2, 2), vec![4.0, 1.0], 10);
        let y = CVector::from_vec(vec![C64::new(2.0, 0.0), C64::new(3.0, 0.0)]);
        let (z, _) = whiten(&s, &y).unwrap();
        assert!((z[0] - C64::new(1.0, 0.0)).norm() < 1e-15 && (z[1] - C64::new(3.0, 0.0)).norm() < 1e-15);
        let mut centered = s.clone();
        centered.mean = y.clone();
        assert!(whiten(&centered, &y).unwrap().0.norm() == 0.0);
        let bad = state(CMatrix::identity(2, 2), vec![1.0, 1e-12], 10);
        assert!(matches!(whiten(&bad, &y), Err(Error::IllConditionedWhitening { index: 1, .. })));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = state(orthonormalize(&cmatrix_from_rows(&[&[(1.0, 0.2), (0.3, 0.0)], &[(0.1, -0.4), (1.0, 0.0)]])), vec![2.0, 0.5], 77);
        s.forgetting = Some(0.99);
        s.mean[1] = C64::new(0.25, -1.0);
        let bytes = s.to_bytes();
        assert_eq!(EigenspaceState::from_bytes(&bytes).unwrap(), s);
        assert!(EigenspaceState::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn sorting_cases() {
        let mut s = state(CMatrix::identity(3, 3), vec![3.0, 2.0, 1.0], 1);
        assert_eq!(sort_eigenpairs(&mut s), vec![0, 1, 2]);
        let mut s = state(CMatrix::identity(3, 3), vec![1.0, 2.0, 3.0], 1);
        assert_eq!(sort_eigenpairs(&mut s), vec![2, 1, 0]);
        assert_eq!(s.eigvecs[(2, 0)], C64::new(1.0, 0.0));
        let mut s = state(CMatrix::identity(3, 3), vec![1.0, 2.0, 1.0], 1);
        assert_eq!(sort_eigenpairs(&mut s), vec![1, 0, 2]);
    }

    proptest! {
        #[test]
        fn updates_keep_unitary_and_trace(seed in any::<u64>(), steps in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = complex_noise(&mut rng, 4, 40 + steps, &[2.0, 1.0, 0.7, 0.3]);
            let mut s = initialize_eigenspace(&data.columns(0, 40).into_owned(), false, None).unwrap();
            for k in 40..data.ncols() {
                let y = data.column(k).into_owned();
                let before: f64 = s.eigvals.iter().sum::<f64>() * s.count as f64;
                let p = s.eigvecs.adjoint() * &y;
                foep_update(&mut s, &y).unwrap();
                let after: f64 = s.eigvals.iter().sum::<f64>() * s.count as f64;
                prop_assert!((after - before - p.norm_squared()).abs() <= 1e-9 * after);
                prop_assert!(unitary_deviation(&s.eigvecs) < 1e-6);
                prop_assert!(s.eigvals.windows(2).all(|w| w[0] >= w[1]));
            }
        }

        #[test]
        fn sort_is_stable_permutation(vals in proptest::collection::vec(0u8..4, 1..8)) {
            let n = vals.len();
            let vals: Vec<f64> = vals.into_iter().map(f64::from).collect();
            let mut s = state(CMatrix::identity(n, n), vals.clone(), 1);
            let order = sort_eigenpairs(&mut s);
            for w in order.windows(2) {
                prop_assert!(vals[w[0]] > vals[w[1]] || (vals[w[0]] == vals[w[1]] && w[0] < w[1]));
            }
        }
    }
}
