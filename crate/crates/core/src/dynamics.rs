//! Linear multi-degree-of-freedom structural models.
//!
//! A [`SystemModel`] holds `M`, `C` and `K`; [`build_state_space`] turns it into
//! the first-order form `u' = A u + B f`, `y = C_out u + D f` with the state
//! ordered as `[displacements; velocities]`. Responses are produced by exact
//! discretization of that system through the matrix exponential, and
//! [`ground_truth`] provides the reference real and complex modes.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::{null_vector, to_complex, CMatrix, C64};
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const STABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub dof_labels: Vec<String>,
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SYMMETRY_TOL * scale
}

impl SystemModel {
    pub fn new(mass: DMatrix<f64>, damping: DMatrix<f64>, stiffness: DMatrix<f64>, dof_labels: Vec<String>) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::InvalidModel("model needs at least one DOF".into()));
        }
        for (name, m) in [("mass", &mass), ("damping", &damping), ("stiffness", &stiffness)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidModel(format!("{name} matrix is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
        }
        if !is_symmetric(&mass) {
            return Err(Error::InvalidModel("mass matrix is not symmetric".into()));
        }
        if !is_symmetric(&stiffness) {
            return Err(Error::InvalidModel("stiffness matrix is not symmetric".into()));
        }
        if Cholesky::new(mass.clone()).is_none() {
            return Err(Error::InvalidModel("mass matrix is not positive definite".into()));
        }
        let dof_labels = if dof_labels.is_empty() {
            (0..n).map(|i| format!("dof{i}")).collect()
        } else if dof_labels.len() == n {
            dof_labels
        } else {
            return Err(Error::InvalidModel(format!("{} labels for {n} DOFs", dof_labels.len())));
        };
        Ok(Self { mass, damping, stiffness, dof_labels })
    }

    pub fn dof(&self) -> usize {
        self.mass.nrows()
    }

    pub fn with_damping(&self, damping: DMatrix<f64>) -> Result<Self> {
        Self::new(self.mass.clone(), damping, self.stiffness.clone(), self.dof_labels.clone())
    }

    /// Keeps only the listed DOFs (rows and columns of all three matrices).
    pub fn reduce(&self, dofs: &[usize]) -> Result<Self> {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(dofs.len(), dofs.len(), |i, j| m[(dofs[i], dofs[j])]);
        Self::new(pick(&self.mass), pick(&self.damping), pick(&self.stiffness), dofs.iter().map(|&i| self.dof_labels[i].clone()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputKind {
    #[default]
    Displacement,
    Acceleration,
}

#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub state_matrix: DMatrix<f64>,
    pub input_matrix: DMatrix<f64>,
    pub output_matrix: DMatrix<f64>,
    /// Direct input-to-output term; zero for displacement output.
    pub feedthrough: DMatrix<f64>,
    pub output: OutputKind,
    mass_inverse: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn dof(&self) -> usize {
        self.mass_inverse.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.input_matrix.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.output_matrix.nrows()
    }

    /// Same structure with a new damping matrix (used for scenario events).
    pub fn with_damping(&self, damping: &DMatrix<f64>) -> Result<Self> {
        let n = self.dof();
        if damping.nrows() != n || damping.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: damping.nrows() });
        }
        let mut next = self.clone();
        let block = -(&self.mass_inverse * damping);
        next.state_matrix.view_mut((n, n), (n, n)).copy_from(&block);
        if next.output == OutputKind::Acceleration {
            let rows = next.state_matrix.rows(n, n).into_owned();
            next.output_matrix = rows;
        }
        Ok(next)
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.state_matrix.clone().complex_eigenvalues().iter().copied().collect()
    }

    pub fn max_real_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_stable(&self) -> Result<()> {
        let eig = self.eigenvalues();
        let scale = eig.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let max_real = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if max_real > STABILITY_TOL * scale {
            Err(Error::Unstable { max_real })
        } else {
            Ok(())
        }
    }
}

/// `A = [[0, I], [-M^-1 K, -M^-1 C]]`, `B = [0; M^-1]`, displacement output.
pub fn build_state_space(model: &SystemModel) -> Result<StateSpaceModel> {
    build_state_space_with_output(model, OutputKind::Displacement)
}

pub fn build_state_space_with_output(model: &SystemModel, output: OutputKind) -> Result<StateSpaceModel> {
    let n = model.dof();
    let minv = model.mass.clone().try_inverse().ok_or(Error::NonInvertibleMass)?;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();
    a.view_mut((n, 0), (n, n)).copy_from(&(-(&minv * &model.stiffness)));
    a.view_mut((n, n), (n, n)).copy_from(&(-(&minv * &model.damping)));
    let mut b = DMatrix::zeros(2 * n, n);
    b.view_mut((n, 0), (n, n)).copy_from(&minv);
    let (c_out, d) = match output {
        OutputKind::Displacement => {
            let mut c = DMatrix::zeros(n, 2 * n);
            c.view_mut((0, 0), (n, n)).fill_with_identity();
            (c, DMatrix::zeros(n, n))
        }
        OutputKind::Acceleration => (a.rows(n, n).into_owned(), minv.clone()),
    };
    Ok(StateSpaceModel { state_matrix: a, input_matrix: b, output_matrix: c_out, feedthrough: d, output, mass_inverse: minv })
}

/// How the sampled force is reconstructed between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputHold {
    /// Piecewise constant.
    #[default]
    ZeroOrder,
    /// Piecewise linear between samples.
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub dt: f64,
    pub duration: f64,
    /// Standard deviation of each force channel (N).
    pub noise_intensity: f64,
    pub seed: u64,
    pub ensemble_size: usize,
    /// Additive sensor noise as a fraction of each channel's RMS.
    pub measurement_noise: f64,
    pub hold: InputHold,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 0.02,
            duration: 100.0,
            noise_intensity: 1.0,
            seed: 0,
            ensemble_size: 1,
            measurement_noise: 0.0,
            hold: InputHold::ZeroOrder,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if !(self.duration >= self.dt) {
            return Err(Error::InvalidArgument("duration must be at least dt".into()));
        }
        if self.ensemble_size < 1 {
            return Err(Error::InvalidArgument("ensemble_size must be at least 1".into()));
        }
        if !(self.noise_intensity >= 0.0) || !(self.measurement_noise >= 0.0) {
            return Err(Error::InvalidArgument("noise levels must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of samples `N = duration / dt`.
    pub fn samples(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Copy of this config for ensemble member `member`.
    pub fn member(&self, member: usize) -> Self {
        Self { seed: self.seed.wrapping_add(member as u64), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub at_time: f64,
    pub new_damping: DMatrix<f64>,
}

/// Independent zero-mean Gaussian forces, one row per channel.
pub fn wgn_excitation(config: &SimulationConfig, dof_count: usize) -> Result<DMatrix<f64>> {
    config.validate()?;
    let n = config.samples();
    if config.noise_intensity == 0.0 {
        return Ok(DMatrix::zeros(dof_count, n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.noise_intensity).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    // filled column by column, i.e. sample by sample
    Ok(DMatrix::from_fn(dof_count, n, |_, _| normal.sample(&mut rng)))
}

/// Adds white sensor noise with standard deviation `fraction * rms(channel)`.
pub fn add_measurement_noise(response: &mut DMatrix<f64>, fraction: f64, seed: u64) {
    if fraction <= 0.0 || response.ncols() == 0 {
        return;
    }
    // distinct stream from the excitation generator
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let n = response.ncols() as f64;
    for mut row in response.row_iter_mut() {
        let rms = (row.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if rms == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, fraction * rms).expect("finite positive std");
        for v in row.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
}

/// Exact discretization for the given input hold.
///
/// Returns `(Phi, Gamma0, Gamma1)` such that
/// `x[k+1] = Phi x[k] + Gamma0 u[k] + Gamma1 (u[k+1] - u[k])`; `Gamma1` is
/// zero for a zero-order hold.
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64, hold: InputHold) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    match hold {
        InputHold::ZeroOrder => {
            let mut z = DMatrix::zeros(n + m, n + m);
            z.view_mut((0, 0), (n, n)).copy_from(a);
            z.view_mut((0, n), (n, m)).copy_from(b);
            let e = (z * dt).exp();
            (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned(), DMatrix::zeros(n, m))
        }
        InputHold::FirstOrder => {
            let mut z = DMatrix::zeros(n + 2 * m, n + 2 * m);
            z.view_mut((0, 0), (n, n)).copy_from(a);
            z.view_mut((0, n), (n, m)).copy_from(b);
            z.view_mut((n, n + m), (m, m)).fill_with_identity();
            let e = (z * dt).exp();
            (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned(), e.view((0, n + m), (n, m)).into_owned() / dt)
        }
    }
}

/// Response of `model` to `excitation` (one column per sample) from rest.
///
/// Each [`ScenarioEvent`] swaps the damping matrix from the sample nearest to
/// its time onward.
pub fn simulate(
    model: &StateSpaceModel,
    excitation: &DMatrix<f64>,
    config: &SimulationConfig,
    events: &[ScenarioEvent],
) -> Result<DMatrix<f64>> {
    let x0 = DVector::zeros(model.state_matrix.nrows());
    simulate_from(model, &x0, excitation, config, events)
}

pub fn simulate_from(
    model: &StateSpaceModel,
    initial_state: &DVector<f64>,
    excitation: &DMatrix<f64>,
    config: &SimulationConfig,
    events: &[ScenarioEvent],
) -> Result<DMatrix<f64>> {
    config.validate()?;
    let states = model.state_matrix.nrows();
    if initial_state.len() != states {
        return Err(Error::DimensionMismatch { expected: states, got: initial_state.len() });
    }
    if excitation.nrows() != model.inputs() {
        return Err(Error::DimensionMismatch { expected: model.inputs(), got: excitation.nrows() });
    }
    let total = excitation.ncols();
    let duration = total as f64 * config.dt;
    let mut segments: Vec<(usize, StateSpaceModel)> = vec![(0, model.clone())];
    let mut last_time = 0.0;
    for ev in events {
        if !(ev.at_time > 0.0 && ev.at_time < duration) {
            return Err(Error::InvalidArgument(format!("event at {}s outside (0, {duration})", ev.at_time)));
        }
        if ev.at_time < last_time {
            return Err(Error::InvalidArgument("events must be sorted by time".into()));
        }
        last_time = ev.at_time;
        let start = (ev.at_time / config.dt).round() as usize;
        let next = segments.last().expect("non-empty").1.with_damping(&ev.new_damping)?;
        segments.push((start, next));
    }
    for (_, seg) in &segments {
        seg.check_stable()?;
    }

    let p = model.outputs();
    let mut out = DMatrix::zeros(p, total);
    let mut x = initial_state.clone();
    let mut next_x = DVector::zeros(states);
    let mut y = DVector::zeros(p);
    for (s, (start, seg)) in segments.iter().enumerate() {
        let end = segments.get(s + 1).map_or(total, |(e, _)| *e);
        let (phi, gamma0, gamma1) = discretize(&seg.state_matrix, &seg.input_matrix, config.dt, config.hold);
        let first_order = config.hold == InputHold::FirstOrder;
        for k in *start..end {
            let u = excitation.column(k);
            y.gemv(1.0, &seg.output_matrix, &x, 0.0);
            if seg.output == OutputKind::Acceleration {
                y.gemv(1.0, &seg.feedthrough, &u, 1.0);
            }
            out.set_column(k, &y);
            next_x.gemv(1.0, &phi, &x, 0.0);
            next_x.gemv(1.0, &gamma0, &u, 1.0);
            if first_order && k + 1 < total {
                let du = excitation.column(k + 1) - u;
                next_x.gemv(1.0, &gamma1, &du, 1.0);
            }
            std::mem::swap(&mut x, &mut next_x);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unstable { max_real: f64::NAN });
    }
    Ok(out)
}

/// `C = alpha M + beta K` giving damping ratio `zeta` at the undamped modes
/// `i` and `j` (0-based, ascending frequency).
pub fn rayleigh_damping(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>, zeta: f64, mode_pair: (usize, usize)) -> Result<DMatrix<f64>> {
    let (alpha, beta) = rayleigh_coefficients(mass, stiffness, zeta, mode_pair)?;
    Ok(mass * alpha + stiffness * beta)
}

pub fn rayleigh_coefficients(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>, zeta: f64, (i, j): (usize, usize)) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&zeta) {
        return Err(Error::InvalidArgument(format!("damping ratio {zeta} outside [0, 1)")));
    }
    let (omega, _) = undamped_modes(mass, stiffness)?;
    if i >= omega.len() || j >= omega.len() || i == j {
        return Err(Error::InvalidArgument(format!("invalid mode pair ({i}, {j})")));
    }
    let (wi, wj) = (omega[i], omega[j]);
    if (wi - wj).abs() <= 1e-12 * wi.abs().max(wj.abs()) {
        return Err(Error::SingularRayleighFit);
    }
    // zeta = alpha / (2 w) + beta w / 2 at both frequencies
    let det = wj / wi - wi / wj;
    let alpha = 2.0 * zeta * (wj - wi) / det;
    let beta = 2.0 * zeta * (1.0 / wi - 1.0 / wj) / det;
    Ok((alpha, beta))
}

/// Undamped circular frequencies (ascending) and mass-normalized modes of
/// `M^-1 K`.
pub fn undamped_modes(mass: &DMatrix<f64>, stiffness: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(mass.clone()).ok_or_else(|| Error::InvalidModel("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::NonInvertibleMass)?;
    let ks = &linv * stiffness * linv.transpose();
    let ks = (&ks + ks.transpose()) * 0.5;
    let eig = SymmetricEigen::new(ks);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = order.len();
    let lt_inv = linv.transpose();
    let mut modes = DMatrix::zeros(n, n);
    let mut omega = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        omega.push(eig.eigenvalues[k].max(0.0).sqrt());
        let phi = &lt_inv * eig.eigenvectors.column(k);
        modes.set_column(col, &phi);
    }
    Ok((omega, modes))
}

#[derive(Debug, Clone)]
pub struct ModalGroundTruth {
    /// Mass-normalized undamped modes, largest entry positive.
    pub real_modes: DMatrix<f64>,
    /// Displacement part of the state-matrix eigenvectors (positive imaginary
    /// eigenvalue of each pair), unit norm, largest entry real positive.
    pub complex_modes: CMatrix,
    pub natural_freqs_hz: Vec<f64>,
    pub damping_ratios: Vec<f64>,
    /// `phi^T M phi` for unit-norm real modes.
    pub modal_masses: Vec<f64>,
    /// Undamped frequencies of the real modes.
    pub undamped_freqs_hz: Vec<f64>,
}

fn largest_entry(col: impl Iterator<Item = f64>) -> usize {
    col.enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc }).0
}

pub fn ground_truth(model: &SystemModel) -> Result<ModalGroundTruth> {
    let n = model.dof();
    let (omega, mut real_modes) = undamped_modes(&model.mass, &model.stiffness)?;
    let mut modal_masses = Vec::with_capacity(n);
    for j in 0..n {
        let mut col = real_modes.column_mut(j);
        let pivot = largest_entry(col.iter().map(|v| v.abs()));
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        let unit = col.normalize();
        modal_masses.push((unit.transpose() * &model.mass * &unit)[(0, 0)]);
    }

    let ss = build_state_space(model)?;
    let a = to_complex(&ss.state_matrix);
    let mut lambdas: Vec<C64> = ss.eigenvalues().into_iter().filter(|z| z.im > 0.0).collect();
    if lambdas.len() != n {
        return Err(Error::DegenerateModes(format!("{} oscillatory eigenvalue pairs for {n} DOFs", lambdas.len())));
    }
    lambdas.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let scale = lambdas.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for w in lambdas.windows(2) {
        if (w[1] - w[0]).norm() <= 1e-9 * scale {
            return Err(Error::DegenerateModes(format!("repeated eigenvalue {}", w[0])));
        }
    }
    let mut complex_modes = CMatrix::zeros(n, n);
    for (j, &lam) in lambdas.iter().enumerate() {
        let shifted = &a - CMatrix::identity(2 * n, 2 * n) * lam;
        let (v, residual) = null_vector(&shifted);
        if residual > 1e-6 * scale.max(1.0) {
            return Err(Error::DegenerateModes(format!("no eigenvector for {lam}")));
        }
        let disp = v.rows(0, n).into_owned();
        let pivot = largest_entry(disp.iter().map(|z| z.norm()));
        let norm = disp.norm();
        let phase = disp[pivot] / disp[pivot].norm();
        let col = disp.map(|z| z / phase / norm);
        complex_modes.set_column(j, &col);
    }
    let natural_freqs_hz: Vec<f64> = lambdas.iter().map(|z| z.norm() / (2.0 * std::f64::consts::PI)).collect();
    let damping_ratios = lambdas.iter().map(|z| -z.re / z.norm()).collect();
    Ok(ModalGroundTruth {
        real_modes,
        complex_modes,
        natural_freqs_hz,
        damping_ratios,
        modal_masses,
        undamped_freqs_hz: omega.iter().map(|w| w / (2.0 * std::f64::consts::PI)).collect(),
    })
}

/// Single-mode response to `force` by trapezoidal Duhamel convolution with
/// `h(t) = exp(-zeta w t) sin(w_d t) / (m w_d)`.
pub fn duhamel_modal_response(freq_hz: f64, zeta: f64, modal_mass: f64, force: &[f64], dt: f64) -> Vec<f64> {
    let omega = 2.0 * std::f64::consts::PI * freq_hz;
    let omega_d = omega * (1.0 - zeta * zeta).sqrt();
    let h: Vec<f64> = (0..force.len())
        .map(|k| {
            let t = k as f64 * dt;
            (-zeta * omega * t).exp() * (omega_d * t).sin() / (modal_mass * omega_d)
        })
        .collect();
    (0..force.len())
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let interior: f64 = (1..k).map(|j| force[j] * h[k - j]).sum();
            dt * (interior + 0.5 * (force[0] * h[k] + force[k] * h[0]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dmatrix_from_rows;

    fn sdof(m: f64, c: f64, k: f64) -> SystemModel {
        SystemModel::new(DMatrix::from_element(1, 1, m), DMatrix::from_element(1, 1, c), DMatrix::from_element(1, 1, k), vec![]).unwrap()
    }

    #[test]
    fn unit_oscillator_state_matrix() {
        let ss = build_state_space(&sdof(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(ss.state_matrix, dmatrix_from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]));
        assert_eq!(ss.input_matrix, dmatrix_from_rows(&[&[0.0], &[1.0]]));
    }

    #[test]
    fn rejects_bad_models() {
        let z = DMatrix::zeros(2, 2);
        let m = dmatrix_from_rows(&[&[1.0, 0.5], &[0.0, 1.0]]);
        assert!(matches!(SystemModel::new(m, z.clone(), z.clone(), vec![]), Err(Error::InvalidModel(_))));
        let m = DMatrix::identity(3, 3);
        assert!(SystemModel::new(m, z.clone(), z, vec![]).is_err());
    }

    #[test]
    fn singular_mass_rejected_by_state_space() {
        // bypasses the constructor to exercise the inversion guard
        let model = SystemModel {
            mass: DMatrix::zeros(2, 2),
            damping: DMatrix::zeros(2, 2),
            stiffness: DMatrix::identity(2, 2),
            dof_labels: vec!["a".into(), "b".into()],
        };
        assert!(matches!(build_state_space(&model), Err(Error::NonInvertibleMass)));
    }

    #[test]
    fn zero_excitation_zero_response() {
        let model = sdof(2.0, 0.1, 3.0);
        let ss = build_state_space(&model).unwrap();
        let cfg = SimulationConfig { dt: 0.01, duration: 1.0, ..Default::default() };
        let f = DMatrix::zeros(1, cfg.samples());
        let y = simulate(&ss, &f, &cfg, &[]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unstable_model_is_reported() {
        let model = sdof(1.0, -0.5, 1.0);
        let ss = build_state_space(&model).unwrap();
        let cfg = SimulationConfig { dt: 0.01, duration: 1.0, ..Default::default() };
        let f = DMatrix::zeros(1, cfg.samples());
        assert!(matches!(simulate(&ss, &f, &cfg, &[]), Err(Error::Unstable { .. })));
    }

    #[test]
    fn zero_damping_ratio_gives_zero_matrix() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let k = dmatrix_from_rows(&[&[3.0, -1.0], &[-1.0, 2.0]]);
        let c = rayleigh_damping(&m, &k, 0.0, (0, 1)).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_rayleigh_fit() {
        // M = K = I has a repeated unit frequency: the fit is singular
        let i = DMatrix::identity(2, 2);
        assert!(matches!(rayleigh_damping(&i, &i, 0.02, (0, 1)), Err(Error::SingularRayleighFit)));
        // diag(1,4) stiffness: at w = 1, alpha + beta = 2 zeta w
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let (alpha, beta) = rayleigh_coefficients(&i, &k, 0.05, (0, 1)).unwrap();
        assert!((alpha + beta - 0.1).abs() < 1e-12);
    }

    #[test]
    fn wgn_is_deterministic_and_silent_at_zero() {
        let cfg = SimulationConfig { dt: 0.1, duration: 10.0, seed: 4, ..Default::default() };
        assert_eq!(wgn_excitation(&cfg, 2).unwrap(), wgn_excitation(&cfg, 2).unwrap());
        let quiet = SimulationConfig { noise_intensity: 0.0, ..cfg };
        assert!(wgn_excitation(&quiet, 2).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duhamel_zero_force() {
        let q = duhamel_modal_response(1.0, 0.02, 1.0, &[0.0; 50], 0.01);
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_events_rejected() {
        let ss = build_state_space(&sdof(1.0, 0.1, 1.0)).unwrap();
        let cfg = SimulationConfig { dt: 0.1, duration: 1.0, ..Default::default() };
        let f = DMatrix::zeros(1, cfg.samples());
        let ev = ScenarioEvent { at_time: 5.0, new_damping: DMatrix::zeros(1, 1) };
        assert!(simulate(&ss, &f, &cfg, &[ev]).is_err());
    }
}
