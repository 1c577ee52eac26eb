//! End-to-end case studies: build the fixture, simulate an ensemble, identify
//! modes recursively and in batch, and score them against the reference.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::analytic::hilbert_rows;
use crate::config::KeyValues;
use crate::dynamics::{
    add_measurement_noise, build_state_space_with_output, ground_truth, simulate, wgn_excitation, InputHold, ModalGroundTruth, OutputKind,
    ScenarioEvent, SimulationConfig, SystemModel,
};
use crate::fixtures;
use crate::foep::EigenspaceState;
use crate::linalg::{to_complex, CMatrix, C64};
use crate::metrics::{align_modes, align_real_modes, mac_convergence, min_collinearity, psd, Spectrum};
use crate::recursive::{realize_modes, run_offline, run_streaming, DemixInput, PipelineConfig, RecursiveRun};
use crate::sobi::{batch_sobi, SobiOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseId {
    Closely,
    NonProportional,
    DampingSwitch,
    Benchmark,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::Closely, CaseId::NonProportional, CaseId::DampingSwitch, CaseId::Benchmark];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Closely => "cs1",
            CaseId::NonProportional => "cs2",
            CaseId::DampingSwitch => "cs3",
            CaseId::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::UnknownCase(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Recursive,
    Batch,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(Method::Recursive),
            "batch" => Ok(Method::Batch),
            other => Err(Error::Config(format!("identification.method must be recursive or batch, got `{other}`"))),
        }
    }
}

/// How the quadrature companion is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticMode {
    /// Whole-record transform.
    Batch,
    /// Fixed-latency sliding transform inside the pipeline.
    Stream,
}

impl FromStr for AnalyticMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(AnalyticMode::Batch),
            "stream" => Ok(AnalyticMode::Stream),
            other => Err(Error::Config(format!("analytic.mode must be batch or stream, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub case: CaseId,
    pub sim: SimulationConfig,
    pub output: OutputKind,
    pub pipeline: PipelineConfig,
    pub analytic: AnalyticMode,
    pub method: Method,
    /// Benchmark only: attach the top-floor appendage.
    pub appendage: bool,
    /// Also run the pipeline with the quadrature channel zeroed.
    pub real_baseline: bool,
    pub psd_window: usize,
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got `{other}`"))),
    }
}

const KNOWN_KEYS: &[&str] = &[
    "sim.dt",
    "sim.duration",
    "sim.noise_intensity",
    "sim.seed",
    "sim.ensemble_size",
    "sim.measurement_noise",
    "sim.hold",
    "sim.output",
    "pipeline.window_len",
    "pipeline.init_len",
    "pipeline.lags",
    "pipeline.transport",
    "pipeline.snapshot_every",
    "pipeline.dormant_window",
    "foep.forgetting",
    "foep.track_mean",
    "foep.whiten_eps",
    "jad.sweeps_per_sample",
    "jad.full_every",
    "jad.tol",
    "jad.max_sweeps",
    "sobi.symmetrize",
    "recursive.demix_input",
    "analytic.mode",
    "identification.method",
    "benchmark.appendage",
    "baseline.real",
    "metrics.psd_window",
];

impl CaseConfig {
    pub fn defaults(case: CaseId) -> Self {
        let mut sim =
            SimulationConfig { dt: 0.02, duration: 100.0, noise_intensity: 1.0, seed: 0, ensemble_size: 10, ..Default::default() };
        let mut pipeline = PipelineConfig::default();
        let mut psd_window = 1024;
        let mut appendage = false;
        let mut real_baseline = false;
        match case {
            CaseId::Closely => {}
            CaseId::NonProportional => real_baseline = true,
            CaseId::DampingSwitch => {
                sim.duration = 50.0;
                sim.ensemble_size = 1;
                pipeline.forgetting = Some(0.995);
                pipeline.snapshot_every = 10;
                psd_window = 512;
            }
            CaseId::Benchmark => {
                sim.dt = 0.002;
                sim.duration = 50.0;
                sim.noise_intensity = 150.0;
                sim.measurement_noise = 0.01;
                sim.ensemble_size = 1;
                pipeline.init_len = 500;
                pipeline.snapshot_every = 250;
                psd_window = 4096;
                appendage = true;
            }
        }
        Self {
            case,
            sim,
            output: OutputKind::Displacement,
            pipeline,
            analytic: AnalyticMode::Batch,
            method: Method::Recursive,
            appendage,
            real_baseline,
            psd_window,
        }
    }

    /// Applies dotted-key overrides; unknown keys are rejected.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        for key in kv.keys() {
            if !KNOWN_KEYS.contains(&key) && key != "case" {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        let s = &mut self.sim;
        s.dt = kv.get_or("sim.dt", s.dt)?;
        s.duration = kv.get_or("sim.duration", s.duration)?;
        s.noise_intensity = kv.get_or("sim.noise_intensity", s.noise_intensity)?;
        s.seed = kv.get_or("sim.seed", s.seed)?;
        s.ensemble_size = kv.get_or("sim.ensemble_size", s.ensemble_size)?;
        s.measurement_noise = kv.get_or("sim.measurement_noise", s.measurement_noise)?;
        if let Some(v) = kv.get_str("sim.hold") {
            s.hold = match v {
                "zoh" => InputHold::ZeroOrder,
                "foh" => InputHold::FirstOrder,
                other => return Err(Error::Config(format!("sim.hold must be zoh or foh, got `{other}`"))),
            };
        }
        if let Some(v) = kv.get_str("sim.output") {
            self.output = match v {
                "displacement" => OutputKind::Displacement,
                "acceleration" => OutputKind::Acceleration,
                other => return Err(Error::Config(format!("sim.output must be displacement or acceleration, got `{other}`"))),
            };
        }
        let p = &mut self.pipeline;
        p.window_len = kv.get_or("pipeline.window_len", p.window_len)?;
        p.init_len = kv.get_or("pipeline.init_len", p.init_len)?;
        if let Some(lags) = kv.get_list::<usize>("pipeline.lags")? {
            p.lags = lags;
        }
        if let Some(v) = kv.get_str("pipeline.transport") {
            p.transport = parse_bool("pipeline.transport", v)?;
        }
        p.snapshot_every = kv.get_or("pipeline.snapshot_every", p.snapshot_every)?;
        p.dormant_window = kv.get_or("pipeline.dormant_window", p.dormant_window)?;
        if let Some(v) = kv.get_str("foep.forgetting") {
            p.forgetting = if v == "none" { None } else { Some(kv.get::<f64>("foep.forgetting")?.expect("present")) };
        }
        if let Some(v) = kv.get_str("foep.track_mean") {
            p.track_mean = parse_bool("foep.track_mean", v)?;
        }
        p.whiten_eps = kv.get_or("foep.whiten_eps", p.whiten_eps)?;
        p.sweeps_per_sample = kv.get_or("jad.sweeps_per_sample", p.sweeps_per_sample)?;
        p.full_jad_every = kv.get_or("jad.full_every", p.full_jad_every)?;
        p.jad_tol = kv.get_or("jad.tol", p.jad_tol)?;
        p.jad_max_sweeps = kv.get_or("jad.max_sweeps", p.jad_max_sweeps)?;
        if let Some(v) = kv.get_str("sobi.symmetrize") {
            p.symmetrize = parse_bool("sobi.symmetrize", v)?;
        }
        if let Some(v) = kv.get_str("recursive.demix_input") {
            p.demix_input = v.parse()?;
        }
        if let Some(v) = kv.get_str("analytic.mode") {
            self.analytic = v.parse()?;
        }
        if let Some(v) = kv.get_str("identification.method") {
            self.method = v.parse()?;
        }
        if let Some(v) = kv.get_str("benchmark.appendage") {
            self.appendage = parse_bool("benchmark.appendage", v)?;
        }
        if let Some(v) = kv.get_str("baseline.real") {
            self.real_baseline = parse_bool("baseline.real", v)?;
        }
        self.psd_window = kv.get_or("metrics.psd_window", self.psd_window)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.pipeline.validate()?;
        if self.psd_window < 8 {
            return Err(Error::Config("metrics.psd_window must be at least 8".into()));
        }
        Ok(())
    }

    /// Every effective setting as dotted keys.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("case", self.case);
        kv.set("sim.dt", self.sim.dt);
        kv.set("sim.duration", self.sim.duration);
        kv.set("sim.noise_intensity", self.sim.noise_intensity);
        kv.set("sim.seed", self.sim.seed);
        kv.set("sim.ensemble_size", self.sim.ensemble_size);
        kv.set("sim.measurement_noise", self.sim.measurement_noise);
        kv.set("sim.hold", if self.sim.hold == InputHold::ZeroOrder { "zoh" } else { "foh" });
        kv.set("sim.output", if self.output == OutputKind::Displacement { "displacement" } else { "acceleration" });
        let p = &self.pipeline;
        kv.set("pipeline.window_len", p.window_len);
        kv.set("pipeline.init_len", p.init_len);
        kv.set("pipeline.lags", p.lags.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(", "));
        kv.set("pipeline.transport", p.transport);
        kv.set("pipeline.snapshot_every", p.snapshot_every);
        kv.set("pipeline.dormant_window", p.dormant_window);
        kv.set("foep.forgetting", p.forgetting.map_or("none".to_string(), |v| v.to_string()));
        kv.set("foep.track_mean", p.track_mean);
        kv.set("foep.whiten_eps", p.whiten_eps);
        kv.set("jad.sweeps_per_sample", p.sweeps_per_sample);
        kv.set("jad.full_every", p.full_jad_every);
        kv.set("jad.tol", p.jad_tol);
        kv.set("jad.max_sweeps", p.jad_max_sweeps);
        kv.set("sobi.symmetrize", p.symmetrize);
        kv.set("recursive.demix_input", if p.demix_input == DemixInput::Raw { "raw" } else { "analytic" });
        kv.set("analytic.mode", if self.analytic == AnalyticMode::Batch { "batch" } else { "stream" });
        kv.set("identification.method", if self.method == Method::Recursive { "recursive" } else { "batch" });
        kv.set("benchmark.appendage", self.appendage);
        kv.set("baseline.real", self.real_baseline);
        kv.set("metrics.psd_window", self.psd_window);
        kv
    }

    fn sobi_options(&self) -> SobiOptions {
        SobiOptions {
            lags: self.pipeline.lags.clone(),
            symmetrize: self.pipeline.symmetrize,
            tol: self.pipeline.jad_tol,
            max_sweeps: self.pipeline.jad_max_sweeps,
        }
    }
}

/// The structural side of a case: model, events, driven DOFs and references.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: SystemModel,
    pub events: Vec<ScenarioEvent>,
    /// DOFs receiving the random force.
    pub driven: Vec<usize>,
    pub truth: ModalGroundTruth,
    /// Ground truth of the model after the last event, when there is one.
    pub truth_after: Option<ModalGroundTruth>,
    /// Columns the identified modes are scored against.
    pub reference: CMatrix,
    pub reference_label: String,
}

pub fn scenario(cfg: &CaseConfig) -> Result<Scenario> {
    let (name, model, events, reference, reference_label) = match cfg.case {
        CaseId::Closely => {
            let m = fixtures::closely_spaced();
            let gt = ground_truth(&m)?;
            ("cs1".to_string(), m, Vec::new(), to_complex(&gt.real_modes), "real modes".to_string())
        }
        CaseId::NonProportional => {
            let m = fixtures::non_proportional();
            let gt = ground_truth(&m)?;
            ("cs2".to_string(), m, Vec::new(), to_complex(&gt.real_modes), "real modes".to_string())
        }
        CaseId::DampingSwitch => {
            let (m, ev) = fixtures::damping_switch();
            let after = ground_truth(&m.with_damping(ev.new_damping.clone())?)?;
            ("cs3".to_string(), m, vec![ev], after.complex_modes, "post-event complex modes".to_string())
        }
        CaseId::Benchmark => {
            let app = cfg.appendage.then(fixtures::Appendage::default);
            let m = fixtures::benchmark_y_model(app);
            let (reference, label) = if app.is_some() {
                (ground_truth(&m)?.complex_modes, "complex modes with appendage".to_string())
            } else {
                (to_complex(&fixtures::benchmark_real_modes()), "published real modes".to_string())
            };
            let name = if app.is_some() { "benchmark-appendage" } else { "benchmark" };
            (name.to_string(), m, Vec::new(), reference, label)
        }
    };
    let driven = match cfg.case {
        CaseId::Benchmark => (0..fixtures::BENCHMARK_Y_DOFS.len()).collect(),
        _ => (0..model.dof()).collect(),
    };
    let truth = ground_truth(&model)?;
    let truth_after = match events.last() {
        Some(ev) => Some(ground_truth(&model.with_damping(ev.new_damping.clone())?)?),
        None => None,
    };
    Ok(Scenario { name, model, events, driven, truth, truth_after, reference, reference_label })
}

/// Simulated measurement of one ensemble member (channels by samples).
pub fn simulate_member(cfg: &CaseConfig, scen: &Scenario, member: usize) -> Result<DMatrix<f64>> {
    let sim = cfg.sim.member(member);
    let ss = build_state_space_with_output(&scen.model, cfg.output)?;
    let forces = wgn_excitation(&sim, scen.driven.len())?;
    let mut excitation = DMatrix::zeros(scen.model.dof(), forces.ncols());
    for (row, &dof) in scen.driven.iter().enumerate() {
        excitation.set_row(dof, &forces.row(row));
    }
    let mut y = simulate(&ss, &excitation, &sim, &scen.events)?;
    add_measurement_noise(&mut y, sim.measurement_noise, sim.seed);
    Ok(y)
}

/// Identified modes of one method on one record.
#[derive(Debug, Clone)]
pub struct Identification {
    pub mixing: CMatrix,
    pub demixing: CMatrix,
    pub modes_real: DMatrix<f64>,
    /// Aligned MAC against the scenario reference, in reference order.
    pub per_mode_mac: Vec<f64>,
    /// Dominant modal-response frequency per reference mode.
    pub frequencies_hz: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MemberResult {
    pub member: usize,
    pub seed: u64,
    pub recursive: Option<Identification>,
    pub batch: Identification,
    /// Recursive pipeline with the quadrature channel zeroed.
    pub real_baseline: Option<Identification>,
    /// Aligned MAC between recursive and batch modes.
    pub recursive_vs_batch: Option<Vec<f64>>,
    /// `(time, min-over-modes collinearity)` of the recursive mixing columns.
    pub collinearity: Vec<(f64, f64)>,
    /// `(sample index, per-mode MAC)` of the recursive snapshots.
    pub convergence: Vec<(u64, Vec<f64>)>,
    pub outputs: usize,
    pub failures: usize,
    /// Final recursive eigenspace.
    pub eigenspace: Option<EigenspaceState>,
}

impl MemberResult {
    /// Result of the configured identification method.
    pub fn primary(&self, method: Method) -> &Identification {
        match (method, &self.recursive) {
            (Method::Recursive, Some(r)) => r,
            _ => &self.batch,
        }
    }
}

/// Real modal responses `X_j` (rows, identified order) of a raw record.
pub fn modal_record(record: &DMatrix<f64>, mixing: &CMatrix, demixing: &CMatrix) -> DMatrix<f64> {
    let realized = realize_modes(mixing);
    let x = demixing * to_complex(record);
    DMatrix::from_fn(x.nrows(), x.ncols(), |j, k| {
        (x[(j, k)] * C64::from_polar(realized.norms[j] * realized.signs[j], realized.phases[j])).re
    })
}

/// Largest power-of-two fraction of `window` that fits twice into `len`.
pub fn fit_window(window: usize, len: usize) -> usize {
    let mut win = window;
    while win > 8 && 2 * win > len {
        win /= 2;
    }
    win
}

fn modal_frequencies(
    record: &DMatrix<f64>,
    mixing: &CMatrix,
    demixing: &CMatrix,
    dt: f64,
    window: usize,
    assignment: &[usize],
) -> Result<Vec<f64>> {
    let modal = modal_record(record, mixing, demixing);
    let win = fit_window(window, modal.ncols());
    let per_col = (0..modal.nrows())
        .map(|j| Ok(refined_peak(&psd(&modal.row(j).iter().copied().collect::<Vec<_>>(), dt, win)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(assignment.iter().map(|&j| per_col[j]).collect())
}

/// Peak frequency with parabolic interpolation of the log spectrum.
pub fn refined_peak(s: &Spectrum) -> f64 {
    let p = &s.power;
    let k = (1..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
    if k == 0 || k + 1 >= p.len() || p[k - 1] <= 0.0 || p[k + 1] <= 0.0 {
        return s.freq[k];
    }
    let (a, b, c) = (p[k - 1].ln(), p[k].ln(), p[k + 1].ln());
    let denom = a - 2.0 * b + c;
    let delta = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    s.freq[k] + delta.clamp(-0.5, 0.5) * s.df()
}

fn score(record: &DMatrix<f64>, mixing: CMatrix, demixing: CMatrix, scen: &Scenario, cfg: &CaseConfig) -> Result<Identification> {
    let modes_real = realize_modes(&mixing).modes;
    let report = if scen.reference.ncols() == modes_real.ncols() {
        align_modes(&to_complex(&modes_real), &scen.reference)?
    } else {
        return Err(Error::Incompatible("reference and identified mode counts differ".into()));
    };
    let frequencies_hz = modal_frequencies(record, &mixing, &demixing, cfg.sim.dt, cfg.psd_window, &report.assignment)?;
    Ok(Identification { mixing, demixing, modes_real, per_mode_mac: report.per_mode_mac, frequencies_hz })
}

fn run_pipeline(record: &DMatrix<f64>, ybar: &CMatrix, cfg: &CaseConfig) -> Result<RecursiveRun> {
    match cfg.analytic {
        AnalyticMode::Batch => run_offline(ybar, cfg.pipeline.clone()),
        AnalyticMode::Stream => run_streaming(record, cfg.pipeline.clone()),
    }
}

pub fn run_member(cfg: &CaseConfig, scen: &Scenario, member: usize) -> Result<MemberResult> {
    let record = simulate_member(cfg, scen, member)?;
    identify_member(cfg, scen, member, &record)
}

/// Identification and scoring of an already simulated record.
pub fn identify_member(cfg: &CaseConfig, scen: &Scenario, member: usize, record: &DMatrix<f64>) -> Result<MemberResult> {
    let ybar = hilbert_rows(record)?;
    let sobi = batch_sobi(&ybar, &cfg.sobi_options())?;
    let batch_demix = sobi.demixing();
    let batch = score(record, sobi.mixing, batch_demix, scen, cfg)?;

    let mut result = MemberResult {
        member,
        seed: cfg.sim.member(member).seed,
        recursive: None,
        batch,
        real_baseline: None,
        recursive_vs_batch: None,
        collinearity: Vec::new(),
        convergence: Vec::new(),
        outputs: 0,
        failures: 0,
        eigenspace: None,
    };
    if cfg.method == Method::Batch {
        return Ok(result);
    }

    let run = run_pipeline(record, &ybar, cfg)?;
    let est = &run.final_estimate;
    let rec = score(record, est.mixing_complex.clone(), est.demixing.clone(), scen, cfg)?;
    result.recursive_vs_batch = Some(align_real_modes(&rec.modes_real, &result.batch.modes_real)?.per_mode_mac);
    result.collinearity =
        run.track.snapshots.iter().map(|s| Ok((s.index as f64 * cfg.sim.dt, min_collinearity(&s.mixing)?))).collect::<Result<_>>()?;
    result.convergence = mac_convergence(&run.track, &scen.reference)?;
    result.outputs = run.outputs;
    result.failures = run.failures;
    result.eigenspace = Some(run.eigenspace);
    result.recursive = Some(rec);

    if cfg.real_baseline {
        let flat = ybar.map(|z| C64::new(z.re, 0.0));
        let base = run_offline(&flat, cfg.pipeline.clone())?;
        let e = &base.final_estimate;
        result.real_baseline = Some(score(record, e.mixing_complex.clone(), e.demixing.clone(), scen, cfg)?);
    }
    Ok(result)
}

/// Element-wise median over members.
pub fn median_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else { return Vec::new() };
    (0..first.len())
        .map(|j| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect()
}

/// Median of the values whose time falls in `[from, to]`.
pub fn median_in_window(series: &[(f64, f64)], from: f64, to: f64) -> Option<f64> {
    let vals: Vec<f64> = series.iter().filter(|(t, _)| *t >= from && *t <= to).map(|(_, v)| *v).collect();
    (!vals.is_empty()).then(|| median_columns(&vals.iter().map(|v| vec![*v]).collect::<Vec<_>>())[0])
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub config: CaseConfig,
    pub scenario: Scenario,
    pub members: Vec<MemberResult>,
    /// Record of the first member, kept for figure data.
    pub example_record: DMatrix<f64>,
}

impl CaseReport {
    pub fn median_mac(&self) -> Vec<f64> {
        median_columns(&self.members.iter().map(|m| m.primary(self.config.method).per_mode_mac.clone()).collect::<Vec<_>>())
    }

    pub fn median_batch_mac(&self) -> Vec<f64> {
        median_columns(&self.members.iter().map(|m| m.batch.per_mode_mac.clone()).collect::<Vec<_>>())
    }

    pub fn median_baseline_mac(&self) -> Option<Vec<f64>> {
        let rows: Option<Vec<Vec<f64>>> = self.members.iter().map(|m| m.real_baseline.as_ref().map(|b| b.per_mode_mac.clone())).collect();
        rows.map(|r| median_columns(&r))
    }

    pub fn median_frequencies(&self) -> Vec<f64> {
        median_columns(&self.members.iter().map(|m| m.primary(self.config.method).frequencies_hz.clone()).collect::<Vec<_>>())
    }

    /// Reference natural frequencies in reference-column order.
    pub fn reference_frequencies(&self) -> &[f64] {
        match &self.scenario.truth_after {
            Some(after) => &after.natural_freqs_hz,
            None => &self.scenario.truth.natural_freqs_hz,
        }
    }
}

/// Runs every ensemble member, in parallel on the current rayon pool.
pub fn run_case(cfg: &CaseConfig) -> Result<CaseReport> {
    cfg.validate()?;
    let scen = scenario(cfg)?;
    let example_record = simulate_member(cfg, &scen, 0)?;
    let members: Vec<MemberResult> = (0..cfg.sim.ensemble_size)
        .into_par_iter()
        .map(|m| if m == 0 { identify_member(cfg, &scen, 0, &example_record) } else { run_member(cfg, &scen, m) })
        .collect::<Result<_>>()?;
    Ok(CaseReport { config: cfg.clone(), scenario: scen, members, example_record })
}
