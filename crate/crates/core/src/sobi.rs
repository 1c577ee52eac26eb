//! Batch second-order blind identification, used both to seed the recursive
//! pipeline and as an offline reference.

use nalgebra::DMatrix;

use crate::foep::{initialize_eigenspace, whitening_matrix, EigenspaceState, DEFAULT_WHITEN_EPS};
use crate::jad::{joint_diagonalize, MatrixStack, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::linalg::{hermitian_eigen_desc, pinv, CMatrix, C64};
use crate::recursive::{realize_modes, LaggedCovarianceSet};
use crate::{Error, Result};

/// Default lag set, in samples.
pub fn default_lags() -> Vec<usize> {
    (1..=10).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobiOptions {
    pub lags: Vec<usize>,
    /// Replace each lagged covariance by its Hermitian part before JAD.
    pub symmetrize: bool,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for SobiOptions {
    fn default() -> Self {
        Self { lags: default_lags(), symmetrize: false, tol: DEFAULT_TOL, max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSobiResult {
    pub mixing: CMatrix,
    pub whitening: CMatrix,
    pub unitary: CMatrix,
    pub sources: CMatrix,
    pub lags_used: Vec<usize>,
    /// Set when two sources share (nearly) the same lagged-covariance profile,
    /// so the mixing matrix is not identifiable.
    pub non_unique_warning: Option<String>,
}

impl BatchSobiResult {
    pub fn demixing(&self) -> CMatrix {
        self.unitary.adjoint() * &self.whitening
    }

    /// Unit-norm real modes, see [`realize_modes`].
    pub fn modes_real(&self) -> DMatrix<f64> {
        realize_modes(&self.mixing).modes
    }
}

/// `(1/(N−p)) Σ_k Y_k Y_{k−p}^H`; exactly Hermitian for `p = 0`.
pub fn batch_covariance(y: &CMatrix, lag: usize) -> Result<CMatrix> {
    let (n, len) = y.shape();
    if lag >= len {
        return Err(Error::TooShort { needed: lag + 1, got: len });
    }
    let m = len - lag;
    let lead = y.columns(lag, m);
    let trail = y.columns(0, m);
    let mut r = lead * trail.adjoint() / C64::new(m as f64, 0.0);
    if lag == 0 {
        r = (&r + r.adjoint()) * C64::new(0.5, 0.0);
    }
    debug_assert_eq!(r.nrows(), n);
    Ok(r)
}

/// `W = Λ^{-1/2} V^H` from the zero-lag covariance; returns `(W Y, W)`.
pub fn batch_whiten(y: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let r0 = batch_covariance(y, 0)?;
    let (vals, vecs) = hermitian_eigen_desc(&r0);
    let max = vals[0].max(0.0);
    if let Some((i, &v)) = vals.iter().enumerate().find(|(_, &v)| !(v > DEFAULT_WHITEN_EPS * max)) {
        return Err(Error::IllConditionedWhitening { index: i, value: v });
    }
    let scale = nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| C64::new(v.powf(-0.5), 0.0)));
    let w = CMatrix::from_diagonal(&scale) * vecs.adjoint();
    Ok((&w * y, w))
}

fn lagged_stack(z: &CMatrix, lags: &[usize], symmetrize: bool) -> Result<MatrixStack> {
    let mut mats = Vec::with_capacity(lags.len());
    for &lag in lags {
        let r = batch_covariance(z, lag)?;
        mats.push(if symmetrize { (&r + r.adjoint()) * C64::new(0.5, 0.0) } else { r });
    }
    MatrixStack::new(mats, lags.to_vec())
}

/// Checks that the diagonal lag profiles `(D^τ_ii)_τ` of distinct sources are
/// separated by more than the sampling noise of a lagged covariance.
fn identifiability_warning(stack: &MatrixStack, u: &CMatrix, samples: usize) -> Option<String> {
    let n = u.nrows();
    let profiles: Vec<Vec<C64>> = stack
        .mats
        .iter()
        .map(|m| {
            let d = u.adjoint() * m * u;
            (0..n).map(|i| d[(i, i)]).collect()
        })
        .collect();
    let threshold = 4.0 * (stack.len() as f64 / samples as f64).sqrt();
    let mut worst = (f64::INFINITY, 0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let dist = profiles.iter().map(|p| (p[i] - p[j]).norm_sqr()).sum::<f64>().sqrt();
            if dist < worst.0 {
                worst = (dist, i, j);
            }
        }
    }
    (worst.0 < threshold).then(|| {
        format!(
            "sources {} and {} have indistinct lag profiles (distance {:.3e} < {:.3e}); mixing is not unique",
            worst.1, worst.2, worst.0, threshold
        )
    })
}

pub fn batch_sobi(y: &CMatrix, options: &SobiOptions) -> Result<BatchSobiResult> {
    let (n, len) = y.shape();
    if n < 2 {
        return Err(Error::InvalidArgument("at least two channels required".into()));
    }
    if options.lags.is_empty() || options.lags.contains(&0) {
        return Err(Error::InvalidArgument("lags must be non-empty and positive".into()));
    }
    let (z, w) = batch_whiten(y)?;
    let stack = lagged_stack(&z, &options.lags, options.symmetrize)?;
    let jad = joint_diagonalize(&stack, options.tol, options.max_sweeps)?;
    let u = jad.unitary;
    let mixing = pinv(&w) * &u;
    let sources = pinv(&mixing) * y;
    let non_unique_warning = identifiability_warning(&stack, &u, len);
    Ok(BatchSobiResult { mixing, whitening: w, unitary: u, sources, lags_used: options.lags.clone(), non_unique_warning })
}

/// Seeds the recursive pipeline from its first `B` complex samples.
pub fn initialize_pipeline(
    y_init: &CMatrix,
    options: &SobiOptions,
    track_mean: bool,
    forgetting: Option<f64>,
) -> Result<(EigenspaceState, LaggedCovarianceSet, CMatrix)> {
    let (n, b) = y_init.shape();
    if let Some(&max_lag) = options.lags.iter().max() {
        if max_lag >= b {
            return Err(Error::TooShort { needed: max_lag + 1, got: b });
        }
    }
    let eig = initialize_eigenspace(y_init, track_mean, forgetting)?;
    let w = whitening_matrix(&eig, DEFAULT_WHITEN_EPS)?;
    let mut z = &w * y_init;
    for mut col in z.column_iter_mut() {
        col -= &w * &eig.mean;
    }
    let stack = lagged_stack(&z, &options.lags, options.symmetrize)?;
    let u = if n >= 2 { joint_diagonalize(&stack, options.tol, options.max_sweeps)?.unitary } else { CMatrix::identity(n, n) };
    let set = LaggedCovarianceSet::from_batch(&z, &options.lags, forgetting)?;
    Ok((eig, set, u))
}
