//! `run`: one case study end to end, written to `<out>/<run-id>/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;

use modal_stream::analytic::hilbert_rows;
use modal_stream::cases::{fit_window, modal_record, run_case, scenario, AnalyticMode, CaseConfig, CaseId, CaseReport, Method};
use modal_stream::config::KeyValues;
use modal_stream::io::{atomic_write, write_series_csv, write_table_csv, ModalCsvWriter};
use modal_stream::linalg::to_complex;
use modal_stream::metrics::{align_modes, psd};
use modal_stream::recursive::{realize_modes, Pipeline};

use crate::manifest::{sha256_hex, FileEntry, Manifest, RunStatus, Snapshot, Summary};

pub struct RunArgs {
    pub case: String,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub overrides: Vec<String>,
    pub record_timings: bool,
    pub per_sample: bool,
}

/// Error tagged with the stage that produced it.
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl StageError {
    fn at(stage: &'static str) -> impl FnOnce(String) -> Self {
        move |message| Self { stage, message }
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T, E: std::fmt::Display> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|e| StageError { stage, message: e.to_string() })
    }
}

pub fn effective_config(args: &RunArgs) -> Result<CaseConfig, StageError> {
    let case: CaseId = args.case.parse().stage("configure")?;
    let mut kv = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display())).map_err(StageError::at("configure"))?;
            KeyValues::parse(&text).stage("configure")?
        }
        None => KeyValues::default(),
    };
    if let Some(c) = kv.get_str("case") {
        if c != case.name() {
            return Err(StageError { stage: "configure", message: format!("config file is for case `{c}`, not `{case}`") });
        }
    }
    for o in &args.overrides {
        kv.set_override(o).stage("configure")?;
    }
    if let Some(seed) = args.seed {
        kv.set("sim.seed", seed);
    }
    let mut cfg = CaseConfig::defaults(case);
    cfg.apply(&kv).stage("configure")?;
    Ok(cfg)
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    fn write(&mut self, name: &str, bytes: Vec<u8>) -> std::io::Result<()> {
        atomic_write(&self.dir.join(name), &bytes)?;
        self.files.push(FileEntry { name: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        Ok(())
    }
}

fn nan_row(len: usize) -> Vec<f64> {
    vec![f64::NAN; len]
}

fn psd_table(series: &DMatrix<f64>, dt: f64, window: usize, prefix: &str) -> modal_stream::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let win = fit_window(window, series.ncols());
    let spectra = (0..series.nrows())
        .map(|i| psd(&series.row(i).iter().copied().collect::<Vec<_>>(), dt, win))
        .collect::<modal_stream::Result<Vec<_>>>()?;
    let mut header = vec!["freq_hz".to_string()];
    header.extend((0..series.nrows()).map(|i| format!("{prefix}{i}")));
    let rows = (0..spectra[0].freq.len())
        .map(|b| std::iter::once(spectra[0].freq[b]).chain(spectra.iter().map(|s| s.power[b])).collect())
        .collect();
    Ok((header, rows))
}

fn write_artifacts(report: &CaseReport, art: &mut Artifacts, per_sample: bool) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = &report.config;
    let method = cfg.method;
    let dt = cfg.sim.dt;
    let reference = &report.scenario.reference;
    let n = reference.ncols();
    let m0 = &report.members[0];
    let primary = m0.primary(method);

    let mut buf = Vec::new();
    write_series_csv(&mut buf, &report.example_record, dt, 0.0)?;
    art.write("responses.csv", buf)?;

    let aligned = align_modes(&to_complex(&primary.modes_real), reference)?;
    let ref_real = realize_modes(reference).modes;
    let mut header = vec!["dof".to_string()];
    header.extend((0..n).map(|j| format!("identified{j}")));
    header.extend((0..n).map(|j| format!("reference{j}")));
    let rows: Vec<Vec<f64>> = (0..primary.modes_real.nrows())
        .map(|i| {
            let mut row = vec![i as f64];
            row.extend(aligned.assignment.iter().map(|&c| primary.modes_real[(i, c)]));
            row.extend(ref_real.row(i).iter().copied());
            row
        })
        .collect();
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &header, &rows)?;
    art.write("modes_final.csv", buf)?;

    let mut header = vec!["member".to_string(), "seed".to_string()];
    for tag in ["recursive", "batch", "baseline", "recursive_vs_batch"] {
        header.extend((0..n).map(|j| format!("{tag}{j}")));
    }
    let rows: Vec<Vec<f64>> = report
        .members
        .iter()
        .map(|m| {
            let mut row = vec![m.member as f64, m.seed as f64];
            row.extend(m.recursive.as_ref().map_or(nan_row(n), |r| r.per_mode_mac.clone()));
            row.extend(m.batch.per_mode_mac.iter().copied());
            row.extend(m.real_baseline.as_ref().map_or(nan_row(n), |r| r.per_mode_mac.clone()));
            row.extend(m.recursive_vs_batch.clone().unwrap_or_else(|| nan_row(n)));
            row
        })
        .collect();
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &header, &rows)?;
    art.write("mac_table.csv", buf)?;

    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|j| format!("mac{j}")));
    let rows: Vec<Vec<f64>> =
        m0.convergence.iter().map(|(k, macs)| std::iter::once(*k as f64).chain(macs.iter().copied()).collect()).collect();
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &header, &rows)?;
    art.write("mac_convergence.csv", buf)?;

    let rows: Vec<Vec<f64>> = m0.collinearity.iter().map(|(t, c)| vec![*t, *c]).collect();
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &["t".into(), "min_collinearity".into()], &rows)?;
    art.write("collinearity.csv", buf)?;

    let freqs = report.median_frequencies();
    let rows: Vec<Vec<f64>> = (0..n).map(|j| vec![j as f64, report.reference_frequencies()[j], freqs[j]]).collect();
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &["mode".into(), "reference_hz".into(), "identified_hz".into()], &rows)?;
    art.write("frequencies.csv", buf)?;

    let (header, rows) = psd_table(&report.example_record, dt, cfg.psd_window, "ch")?;
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &header, &rows)?;
    art.write("psd_physical.csv", buf)?;

    let modal = modal_record(&report.example_record, &primary.mixing, &primary.demixing);
    let ordered = DMatrix::from_fn(n, modal.ncols(), |j, k| modal[(aligned.assignment[j], k)]);
    let (header, rows) = psd_table(&ordered, dt, cfg.psd_window, "mode")?;
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &header, &rows)?;
    art.write("psd_modal.csv", buf)?;

    if per_sample && method == Method::Recursive {
        art.write("outputs.csv", per_sample_outputs(report)?)?;
    }
    Ok(())
}

/// Replays the first member sample by sample and logs every output.
fn per_sample_outputs(report: &CaseReport) -> modal_stream::Result<Vec<u8>> {
    let cfg = &report.config;
    let record = &report.example_record;
    let reference = &report.scenario.reference;
    let mut pipeline = Pipeline::new(record.nrows(), cfg.pipeline.clone())?;
    let mut writer = ModalCsvWriter::new(Vec::new(), record.nrows(), reference.ncols())?;
    let ybar = match cfg.analytic {
        AnalyticMode::Batch => Some(hilbert_rows(record)?),
        AnalyticMode::Stream => None,
    };
    let mut sample = vec![0.0; record.nrows()];
    for k in 0..record.ncols() {
        let out = match &ybar {
            Some(z) => pipeline.step_analytic(&z.column(k).into_owned())?,
            None => {
                for (i, s) in sample.iter_mut().enumerate() {
                    *s = record[(i, k)];
                }
                pipeline.step(&sample)?
            }
        };
        if let Some(out) = out {
            let macs = match &out.estimate {
                Some(est) => align_modes(&to_complex(&est.modes_real), reference)?.per_mode_mac,
                None => Vec::new(),
            };
            writer.write(&out, &macs)?;
        }
    }
    Ok(writer.into_inner())
}

fn summary(report: &CaseReport) -> Summary {
    let cfg = &report.config;
    let rvb: Option<Vec<Vec<f64>>> = report.members.iter().map(|m| m.recursive_vs_batch.clone()).collect();
    Summary {
        method: if cfg.method == Method::Recursive { "recursive" } else { "batch" }.to_string(),
        reference: report.scenario.reference_label.clone(),
        median_mac: report.median_mac(),
        median_batch_mac: report.median_batch_mac(),
        median_baseline_mac: report.median_baseline_mac(),
        median_recursive_vs_batch: rvb.map(|r| modal_stream::cases::median_columns(&r)),
        identified_freqs_hz: report.median_frequencies(),
        reference_freqs_hz: report.reference_frequencies().to_vec(),
        failed_samples: report.members.iter().map(|m| m.failures).sum(),
    }
}

pub fn print_summary(manifest: &Manifest, dir: &Path) {
    println!("run {} ({}, seed {}, {} member(s))", manifest.run_id, manifest.fixture, manifest.seed, manifest.ensemble_size);
    if let Some(s) = &manifest.summary {
        println!("reference: {}", s.reference);
        println!("{:>4} {:>10} {:>10} {:>10} {:>12} {:>12}", "mode", s.method, "batch", "baseline", "ident_hz", "ref_hz");
        for j in 0..s.median_mac.len() {
            let base = s.median_baseline_mac.as_ref().map_or("-".to_string(), |b| format!("{:.4}", b[j]));
            println!(
                "{j:>4} {:>10.4} {:>10.4} {base:>10} {:>12.4} {:>12.4}",
                s.median_mac[j], s.median_batch_mac[j], s.identified_freqs_hz[j], s.reference_freqs_hz[j]
            );
        }
    }
    println!("artifacts: {}", dir.display());
}

pub fn run(args: &RunArgs) -> Result<(Manifest, PathBuf), StageError> {
    let cfg = effective_config(args)?;
    let scen = scenario(&cfg).stage("configure")?;
    let kv = cfg.to_key_values();
    let input_hash = sha256_hex(format!("fixture = {}\n{kv}", scen.name).as_bytes());
    let run_id = format!("{}-seed{}-{}", cfg.case, cfg.sim.seed, &input_hash[..12]);
    let dir = args.out.join(&run_id);
    fs::create_dir_all(&dir).stage("artifacts")?;

    let mut manifest = Manifest {
        run_id,
        status: RunStatus::Running,
        case: cfg.case.to_string(),
        fixture: scen.name.clone(),
        seed: cfg.sim.seed,
        input_hash,
        config: kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        ensemble_size: cfg.sim.ensemble_size,
        error: None,
        summary: None,
        snapshot: None,
        timings: None,
        files: Vec::new(),
    };
    manifest.store(&dir).stage("artifacts")?;

    let mut timings = BTreeMap::new();
    let start = Instant::now();
    let report = match run_case(&cfg) {
        Ok(r) => r,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(format!("identify: {e}"));
            manifest.store(&dir).stage("artifacts")?;
            return Err(StageError { stage: "identify", message: e.to_string() });
        }
    };
    timings.insert("identify".to_string(), start.elapsed().as_secs_f64());

    let start = Instant::now();
    let mut art = Artifacts { dir: dir.clone(), files: Vec::new() };
    write_artifacts(&report, &mut art, args.per_sample).stage("artifacts")?;
    timings.insert("artifacts".to_string(), start.elapsed().as_secs_f64());

    let m0 = &report.members[0];
    manifest.snapshot = m0.eigenspace.as_ref().map(|e| Snapshot { member: 0, sample: e.count, eigenspace_hex: hex::encode(e.to_bytes()) });
    manifest.summary = Some(summary(&report));
    manifest.timings = args.record_timings.then_some(timings);
    manifest.files = art.files;
    manifest.status = RunStatus::Complete;
    manifest.store(&dir).stage("artifacts")?;
    Ok((manifest, dir))
}
