//! Per-sample identification: recursive lagged covariances of the whitened
//! response, warm-started joint diagonalization, mixing-matrix extraction,
//! modal responses and their real-valued normalization.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::analytic::{hilbert_rows, PhaseShiftBuffer};
use crate::foep::{foep_update, whiten_with, EigenspaceState, DEFAULT_WHITEN_EPS};
use crate::jad::{joint_diagonalize_from, MatrixStack};
use crate::linalg::{condition_number, is_finite, orthonormalize, pinv, CMatrix, CVector, C64};
use crate::sobi::{default_lags, initialize_pipeline, SobiOptions};
use crate::{Error, Result};

/// Mixing matrices whose condition number exceeds this are rejected.
pub const MAX_MIXING_CONDITION: f64 = 1e10;

/// Recursively averaged `R_τ = E[z_k z_{k−τ}^H]` for a fixed lag set.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedCovarianceSet {
    lags: Vec<usize>,
    mats: Vec<CMatrix>,
    /// Most recent first: `delay_line[0] = z_{k−1}`.
    delay_line: VecDeque<CVector>,
    counts: Vec<u64>,
    count: u64,
    forgetting: Option<f64>,
}

impl LaggedCovarianceSet {
    pub fn new(dim: usize, lags: &[usize], forgetting: Option<f64>) -> Result<Self> {
        if lags.is_empty() || lags.contains(&0) {
            return Err(Error::InvalidArgument("lags must be non-empty and positive".into()));
        }
        Ok(Self {
            lags: lags.to_vec(),
            mats: vec![CMatrix::zeros(dim, dim); lags.len()],
            delay_line: VecDeque::with_capacity(lags.iter().copied().max().unwrap_or(0)),
            counts: vec![0; lags.len()],
            count: 0,
            forgetting,
        })
    }

    /// Batch estimates over the columns of `z`, continuing as if every column
    /// had been passed to [`update`](Self::update).
    pub fn from_batch(z: &CMatrix, lags: &[usize], forgetting: Option<f64>) -> Result<Self> {
        let (n, b) = z.shape();
        let mut set = Self::new(n, lags, forgetting)?;
        for (i, &lag) in lags.iter().enumerate() {
            if lag >= b {
                return Err(Error::TooShort { needed: lag + 1, got: b });
            }
            let m = b - lag;
            set.mats[i] = z.columns(lag, m) * z.columns(0, m).adjoint() / C64::new(m as f64, 0.0);
            set.counts[i] = m as u64;
        }
        let depth = set.max_lag().min(b);
        for k in 0..depth {
            set.delay_line.push_back(z.column(b - 1 - k).into_owned());
        }
        set.count = b as u64;
        Ok(set)
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn mats(&self) -> &[CMatrix] {
        &self.mats
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn delay_line(&self) -> &VecDeque<CVector> {
        &self.delay_line
    }

    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }

    pub fn stack(&self) -> Result<MatrixStack> {
        MatrixStack::new(self.mats.clone(), self.lags.clone())
    }

    /// Like [`stack`](Self::stack), with each matrix replaced by its Hermitian part.
    pub fn hermitian_stack(&self) -> Result<MatrixStack> {
        let half = |r: &CMatrix| (r + r.adjoint()) * C64::new(0.5, 0.0);
        MatrixStack::new(self.mats.iter().map(half).collect(), self.lags.clone())
    }

    /// Folds in `z_k`. Lags not yet covered by the delay line are left as is.
    pub fn update(&mut self, z: &CVector) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        for (i, &lag) in self.lags.iter().enumerate() {
            let Some(past) = self.delay_line.get(lag - 1) else { continue };
            self.counts[i] += 1;
            let mut a = 1.0 / self.counts[i] as f64;
            if let Some(lambda) = self.forgetting {
                a = a.max(1.0 - lambda);
            }
            let outer = z * past.adjoint();
            self.mats[i] = &self.mats[i] * C64::new(1.0 - a, 0.0) + outer * C64::new(a, 0.0);
        }
        self.delay_line.push_front(z.clone());
        self.delay_line.truncate(self.max_lag());
        self.count += 1;
        Ok(())
    }

    /// Re-expresses the set in a new whitened basis `z' = T z`.
    pub fn rebase(&mut self, t: &CMatrix) {
        let th = t.adjoint();
        for m in self.mats.iter_mut() {
            *m = t * &*m * &th;
        }
        for z in self.delay_line.iter_mut() {
            *z = t * &*z;
        }
    }
}

/// Real-valued modes obtained by removing each column's best phase.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedModes {
    /// Unit-norm columns, largest-magnitude entry positive.
    pub modes: DMatrix<f64>,
    /// Per column: removed phase `θ_j`.
    pub phases: Vec<f64>,
    /// Per column: Euclidean norm of the complex column.
    pub norms: Vec<f64>,
    /// Per column: ±1 sign applied after phase removal.
    pub signs: Vec<f64>,
}

impl RealizedModes {
    /// Real modal coordinates consistent with [`modes`](Self::modes):
    /// `X_j = Re(x_j ‖a_j‖ e^{iθ_j} σ_j)`.
    pub fn modal_real(&self, x: &CVector) -> DVector<f64> {
        DVector::from_fn(x.len(), |j, _| (x[j] * C64::from_polar(self.norms[j] * self.signs[j], self.phases[j])).re)
    }
}

/// Turns complex mixing columns into real unit-norm modes: rotate each column
/// by the phase that best aligns it with the real axis, take signed entry
/// magnitudes, normalize, and make the largest-magnitude entry positive.
pub fn realize_modes(mixing: &CMatrix) -> RealizedModes {
    let (n, m) = mixing.shape();
    let mut modes = DMatrix::zeros(n, m);
    let mut phases = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    let mut signs = Vec::with_capacity(m);
    for j in 0..m {
        let col = mixing.column(j);
        let sq: C64 = col.iter().map(|c| c * c).sum();
        let theta = 0.5 * sq.arg();
        let rot = C64::from_polar(1.0, -theta);
        let norm = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let mut v = DVector::from_fn(n, |i, _| {
            let r = col[i] * rot;
            let mag = col[i].norm();
            if r.re < 0.0 {
                -mag
            } else {
                mag
            }
        });
        if norm > 0.0 {
            v /= norm;
        }
        let anchor = v.iter().copied().fold(0.0, |best: f64, x| if x.abs() > best.abs() { x } else { best });
        let sign = if anchor < 0.0 { -1.0 } else { 1.0 };
        modes.set_column(j, &(v * sign));
        phases.push(theta);
        norms.push(norm);
        signs.push(sign);
    }
    RealizedModes { modes, phases, norms, signs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingEstimate {
    pub mixing_complex: CMatrix,
    pub demixing: CMatrix,
    pub modes_real: DMatrix<f64>,
    pub realized: RealizedModes,
    pub timestamp: u64,
}

/// Physical mixing `A = W⁺U` and its pseudoinverse.
pub fn estimate_mixing(w: &CMatrix, u: &CMatrix, timestamp: u64) -> Result<MixingEstimate> {
    let mixing = pinv(w) * u;
    let cond = condition_number(&mixing);
    if !(cond <= MAX_MIXING_CONDITION) {
        return Err(Error::IllConditionedMixing { cond });
    }
    let demixing = pinv(&mixing);
    let realized = realize_modes(&mixing);
    Ok(MixingEstimate { mixing_complex: mixing, demixing, modes_real: realized.modes.clone(), realized, timestamp })
}

/// Complex modal coordinates `x = A⁺ y`.
pub fn extract_modal(estimate: &MixingEstimate, y: &CVector) -> CVector {
    &estimate.demixing * y
}

/// Normalized modes and real modal coordinates for one sample.
pub fn normalize(estimate: &MixingEstimate, x: &CVector) -> (DMatrix<f64>, DVector<f64>) {
    (estimate.modes_real.clone(), estimate.realized.modal_real(x))
}

/// Input fed to the demixing matrix when forming modal responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DemixInput {
    /// The measured real sample.
    #[default]
    Raw,
    /// The complex (analytic) sample.
    Analytic,
}

impl std::str::FromStr for DemixInput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "analytic" => Ok(Self::Analytic),
            other => Err(Error::Config(format!("demix_input must be raw or analytic, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Streaming quadrature window (power of two).
    pub window_len: usize,
    /// Samples used for batch initialization.
    pub init_len: usize,
    pub lags: Vec<usize>,
    pub forgetting: Option<f64>,
    pub track_mean: bool,
    pub sweeps_per_sample: usize,
    /// Full joint diagonalization every this many samples (0 disables).
    pub full_jad_every: usize,
    pub jad_tol: f64,
    pub jad_max_sweeps: usize,
    pub symmetrize: bool,
    /// Carry lagged covariances and the rotation into each new whitened basis.
    pub transport: bool,
    pub demix_input: DemixInput,
    pub whiten_eps: f64,
    /// Window (samples) over which a modal channel with zero energy is dormant.
    pub dormant_window: usize,
    /// Mode snapshots are kept every this many outputs.
    pub snapshot_every: usize,
    /// Keep every real modal sample in the track.
    pub keep_responses: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_len: 512,
            init_len: 200,
            lags: default_lags(),
            forgetting: None,
            track_mean: false,
            sweeps_per_sample: 1,
            full_jad_every: 500,
            jad_tol: 1e-8,
            jad_max_sweeps: 30,
            symmetrize: false,
            transport: true,
            demix_input: DemixInput::Raw,
            whiten_eps: DEFAULT_WHITEN_EPS,
            dormant_window: 50,
            snapshot_every: 50,
            keep_responses: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lags.is_empty() || self.lags.contains(&0) {
            return Err(Error::Config("lags must be non-empty and positive".into()));
        }
        if self.lags.iter().any(|&l| l >= self.init_len) {
            return Err(Error::Config("every lag must be shorter than init_len".into()));
        }
        if let Some(l) = self.forgetting {
            if !(l > 0.0 && l <= 1.0) {
                return Err(Error::Config(format!("forgetting factor {l} outside (0, 1]")));
            }
        }
        if self.snapshot_every == 0 || self.dormant_window == 0 {
            return Err(Error::Config("snapshot_every and dormant_window must be positive".into()));
        }
        Ok(())
    }

    fn sobi_options(&self) -> SobiOptions {
        SobiOptions { lags: self.lags.clone(), symmetrize: self.symmetrize, tol: self.jad_tol, max_sweeps: self.jad_max_sweeps }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    /// Non-finite input; the state was left unchanged.
    Rejected,
    /// A stage failed for this sample; the stream continues.
    Failed {
        stage: &'static str,
        message: String,
    },
}

impl StepStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, StepStatus::Ok)
    }
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepStatus::Ok => f.write_str("ok"),
            StepStatus::Rejected => f.write_str("rejected"),
            StepStatus::Failed { stage, message } => write!(f, "{stage}: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalOutput {
    /// Time index of the response sample this output describes.
    pub index: u64,
    /// Latest valid estimate (absent only if none was ever produced).
    pub estimate: Option<MixingEstimate>,
    pub modal_complex: CVector,
    pub modal_real: DVector<f64>,
    pub dormant: Vec<bool>,
    pub status: StepStatus,
}

impl ModalOutput {
    pub fn any_dormant(&self) -> bool {
        self.dormant.iter().any(|&d| d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSnapshot {
    pub index: u64,
    pub modes_real: DMatrix<f64>,
    pub mixing: CMatrix,
}

/// History of the identified modes and modal responses of one stream.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalTrack {
    pub snapshot_every: usize,
    pub snapshots: Vec<ModeSnapshot>,
    pub response_index: Vec<u64>,
    pub responses: Vec<DVector<f64>>,
    outputs: u64,
}

impl ModalTrack {
    pub fn new(snapshot_every: usize) -> Self {
        Self { snapshot_every: snapshot_every.max(1), ..Self::default() }
    }

    fn record(&mut self, out: &ModalOutput, keep_response: bool) {
        self.outputs += 1;
        if keep_response {
            self.response_index.push(out.index);
            self.responses.push(out.modal_real.clone());
        }
        if let Some(est) = &out.estimate {
            if out.status.is_ok() && (self.outputs - 1).is_multiple_of(self.snapshot_every as u64) {
                self.snapshots.push(ModeSnapshot {
                    index: out.index,
                    modes_real: est.modes_real.clone(),
                    mixing: est.mixing_complex.clone(),
                });
            }
        }
    }

    pub fn outputs(&self) -> u64 {
        self.outputs
    }
}

struct DormantMonitor {
    window: VecDeque<DVector<f64>>,
    len: usize,
}

impl DormantMonitor {
    fn new(len: usize) -> Self {
        Self { window: VecDeque::with_capacity(len + 1), len }
    }

    /// A channel is dormant when every sample in the window is exactly zero.
    fn push(&mut self, x: &DVector<f64>) -> Vec<bool> {
        self.window.push_back(x.clone());
        if self.window.len() > self.len {
            self.window.pop_front();
        }
        (0..x.len()).map(|j| self.window.iter().all(|w| w[j] == 0.0)).collect()
    }
}

struct Running {
    eig: EigenspaceState,
    lagged: LaggedCovarianceSet,
    u: CMatrix,
    dewhiten: CMatrix,
    estimate: Option<MixingEstimate>,
    since_full: usize,
}

/// Streaming identification pipeline for `n` channels.
///
/// Output starts after exactly `window_len + init_len − 1` silent calls to
/// [`step`](Self::step), or `init_len` silent calls to
/// [`step_analytic`](Self::step_analytic).
pub struct Pipeline {
    cfg: PipelineConfig,
    n: usize,
    shifter: PhaseShiftBuffer,
    init: Vec<(u64, CVector)>,
    running: Option<Running>,
    next_index: u64,
    track: ModalTrack,
    dormant: DormantMonitor,
    last_error: Option<String>,
}

impl Pipeline {
    pub fn new(n: usize, cfg: PipelineConfig) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("pipeline needs at least one channel".into()));
        }
        cfg.validate()?;
        if cfg.init_len < 2 * n {
            return Err(Error::TooShort { needed: 2 * n, got: cfg.init_len });
        }
        let shifter = PhaseShiftBuffer::new(cfg.window_len, 1)?;
        Ok(Self {
            n,
            shifter,
            init: Vec::with_capacity(cfg.init_len),
            running: None,
            next_index: 0,
            track: ModalTrack::new(cfg.snapshot_every),
            dormant: DormantMonitor::new(cfg.dormant_window),
            last_error: None,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn channels(&self) -> usize {
        self.n
    }

    pub fn is_initialized(&self) -> bool {
        self.running.is_some()
    }

    pub fn eigenspace(&self) -> Option<&EigenspaceState> {
        self.running.as_ref().map(|r| &r.eig)
    }

    pub fn lagged(&self) -> Option<&LaggedCovarianceSet> {
        self.running.as_ref().map(|r| &r.lagged)
    }

    pub fn unitary(&self) -> Option<&CMatrix> {
        self.running.as_ref().map(|r| &r.u)
    }

    pub fn estimate(&self) -> Option<&MixingEstimate> {
        self.running.as_ref().and_then(|r| r.estimate.as_ref())
    }

    pub fn track(&self) -> &ModalTrack {
        &self.track
    }

    pub fn into_track(self) -> ModalTrack {
        self.track
    }

    /// Most recent initialization failure, if initialization had to restart.
    pub fn last_error(&self) -> Option<&str> {
        self.last_error.as_deref()
    }

    /// Feeds one raw sample through the streaming quadrature stage.
    pub fn step(&mut self, raw: &[f64]) -> Result<Option<ModalOutput>> {
        if raw.len() != self.n {
            return Err(Error::StreamCorruption { expected: self.n, got: raw.len() });
        }
        let mut last = None;
        for sample in self.shifter.push(raw)? {
            last = self.process(sample.time_index, sample.values);
        }
        Ok(last)
    }

    /// Feeds one precomputed complex sample; its real part is the raw sample.
    pub fn step_analytic(&mut self, ybar: &CVector) -> Result<Option<ModalOutput>> {
        if ybar.len() != self.n {
            return Err(Error::StreamCorruption { expected: self.n, got: ybar.len() });
        }
        let index = self.next_index;
        Ok(self.process(index, ybar.clone()))
    }

    fn process(&mut self, index: u64, ybar: CVector) -> Option<ModalOutput> {
        self.next_index = index + 1;
        if self.running.is_none() {
            self.collect_init(index, ybar);
            return None;
        }
        let out = self.advance(index, ybar);
        self.track.record(&out, self.cfg.keep_responses);
        Some(out)
    }

    fn collect_init(&mut self, index: u64, ybar: CVector) {
        if !is_finite(&ybar) {
            self.init.clear();
            self.last_error = Some(format!("non-finite sample {index} during initialization"));
            return;
        }
        self.init.push((index, ybar));
        if self.init.len() < self.cfg.init_len {
            return;
        }
        let batch = CMatrix::from_columns(&self.init.iter().map(|(_, y)| y.clone()).collect::<Vec<_>>());
        let seeded = initialize_pipeline(&batch, &self.cfg.sobi_options(), self.cfg.track_mean, self.cfg.forgetting);
        self.init.clear();
        match seeded {
            Ok((eig, lagged, u)) => {
                let dewhiten = eig.dewhitening();
                self.running = Some(Running { eig, lagged, u, dewhiten, estimate: None, since_full: 0 });
            }
            Err(e) => self.last_error = Some(format!("initialization: {e}")),
        }
    }

    fn advance(&mut self, index: u64, ybar: CVector) -> ModalOutput {
        let cfg = &self.cfg;
        let run = self.running.as_mut().expect("initialized");
        let n = self.n;
        let fail = |run: &Running, status: StepStatus| ModalOutput {
            index,
            estimate: run.estimate.clone(),
            modal_complex: CVector::zeros(n),
            modal_real: DVector::zeros(n),
            dormant: vec![false; n],
            status,
        };
        match foep_update(&mut run.eig, &ybar) {
            Ok(_) => {}
            Err(Error::RejectedSample) => return fail(run, StepStatus::Rejected),
            Err(e) => return fail(run, StepStatus::Failed { stage: "foep", message: e.to_string() }),
        }
        let (z, w) = match whiten_with(&run.eig, &ybar, cfg.whiten_eps) {
            Ok(v) => v,
            Err(e) => return fail(run, StepStatus::Failed { stage: "whiten", message: e.to_string() }),
        };
        if cfg.transport {
            let t = &w * &run.dewhiten;
            run.lagged.rebase(&t);
            run.u = orthonormalize(&(&t * &run.u));
        }
        run.dewhiten = run.eig.dewhitening();
        if let Err(e) = run.lagged.update(&z) {
            return fail(run, StepStatus::Failed { stage: "lagged", message: e.to_string() });
        }

        run.since_full += 1;
        let full = cfg.full_jad_every > 0 && run.since_full >= cfg.full_jad_every;
        let (tol, sweeps) = if full { (cfg.jad_tol, cfg.jad_max_sweeps) } else { (0.0, cfg.sweeps_per_sample) };
        if full {
            run.since_full = 0;
        }
        if n >= 2 && sweeps > 0 {
            let stack = if cfg.symmetrize { run.lagged.hermitian_stack() } else { run.lagged.stack() };
            match stack.and_then(|s| joint_diagonalize_from(&s, &run.u, tol, sweeps)) {
                Ok(r) => run.u = r.unitary,
                Err(e) => return fail(run, StepStatus::Failed { stage: "jad", message: e.to_string() }),
            }
        }

        let estimate = match estimate_mixing(&w, &run.u, index) {
            Ok(est) => est,
            Err(e) => return fail(run, StepStatus::Failed { stage: "mixing", message: e.to_string() }),
        };
        let input = match cfg.demix_input {
            DemixInput::Raw => ybar.map(|v| C64::new(v.re, 0.0)),
            DemixInput::Analytic => ybar,
        };
        let x = extract_modal(&estimate, &input);
        let (_, xr) = normalize(&estimate, &x);
        let dormant = self.dormant.push(&xr);
        run.estimate = Some(estimate);
        ModalOutput { index, estimate: run.estimate.clone(), modal_complex: x, modal_real: xr, dormant, status: StepStatus::Ok }
    }
}

/// Result of running a pipeline over a whole record.
#[derive(Debug, Clone)]
pub struct RecursiveRun {
    pub final_estimate: MixingEstimate,
    pub track: ModalTrack,
    pub outputs: usize,
    pub failures: usize,
    /// Eigenspace at the end of the record.
    pub eigenspace: EigenspaceState,
}

fn finish(pipeline: Pipeline, outputs: usize, failures: usize) -> Result<RecursiveRun> {
    let final_estimate =
        pipeline.estimate().cloned().ok_or_else(|| Error::TooShort { needed: pipeline.config().init_len + 1, got: outputs })?;
    let eigenspace = pipeline.eigenspace().cloned().expect("initialized when an estimate exists");
    Ok(RecursiveRun { final_estimate, track: pipeline.into_track(), outputs, failures, eigenspace })
}

/// Runs the pipeline over precomputed complex samples (columns of `ybar`).
pub fn run_offline(ybar: &CMatrix, cfg: PipelineConfig) -> Result<RecursiveRun> {
    let mut p = Pipeline::new(ybar.nrows(), cfg)?;
    let (mut outputs, mut failures) = (0, 0);
    for k in 0..ybar.ncols() {
        if let Some(out) = p.step_analytic(&ybar.column(k).into_owned())? {
            outputs += 1;
            failures += usize::from(!out.status.is_ok());
        }
    }
    finish(p, outputs, failures)
}

/// Offline run on a real record with a full-record quadrature companion.
pub fn run_record(record: &DMatrix<f64>, cfg: PipelineConfig) -> Result<RecursiveRun> {
    run_offline(&hilbert_rows(record)?, cfg)
}

/// Runs the pipeline sample by sample through the streaming quadrature stage.
pub fn run_streaming(record: &DMatrix<f64>, cfg: PipelineConfig) -> Result<RecursiveRun> {
    let mut p = Pipeline::new(record.nrows(), cfg)?;
    let (mut outputs, mut failures) = (0, 0);
    let mut sample = vec![0.0; record.nrows()];
    for k in 0..record.ncols() {
        for (i, s) in sample.iter_mut().enumerate() {
            *s = record[(i, k)];
        }
        if let Some(out) = p.step(&sample)? {
            outputs += 1;
            failures += usize::from(!out.status.is_ok());
        }
    }
    finish(p, outputs, failures)
}
