//! `compare`: per-mode differences between two finished runs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::manifest::{Manifest, RunStatus};

#[derive(Debug, Serialize)]
pub struct ModeDelta {
    pub mode: usize,
    pub mac_a: f64,
    pub mac_b: f64,
    pub mac_delta: f64,
    pub freq_delta_hz: f64,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub run_a: String,
    pub run_b: String,
    pub fixture: String,
    pub modes: Vec<ModeDelta>,
    /// `b - a` per stage, for stages timed in both runs.
    pub timing_deltas: BTreeMap<String, f64>,
}

pub fn compare(a: &Path, b: &Path) -> Result<Comparison, String> {
    let ma = Manifest::load(a)?;
    let mb = Manifest::load(b)?;
    for m in [&ma, &mb] {
        if m.status != RunStatus::Complete {
            return Err(format!("run {} is not complete", m.run_id));
        }
    }
    if ma.fixture != mb.fixture {
        return Err(format!("incompatible fixtures: `{}` vs `{}`", ma.fixture, mb.fixture));
    }
    let (sa, sb) =
        (ma.summary.as_ref().expect("complete runs carry a summary"), mb.summary.as_ref().expect("complete runs carry a summary"));
    if sa.median_mac.len() != sb.median_mac.len() {
        return Err("runs identify different numbers of modes".into());
    }
    let modes = (0..sa.median_mac.len())
        .map(|j| ModeDelta {
            mode: j,
            mac_a: sa.median_mac[j],
            mac_b: sb.median_mac[j],
            mac_delta: sb.median_mac[j] - sa.median_mac[j],
            freq_delta_hz: sb.identified_freqs_hz[j] - sa.identified_freqs_hz[j],
        })
        .collect();
    let mut timing_deltas = BTreeMap::new();
    if let (Some(ta), Some(tb)) = (&ma.timings, &mb.timings) {
        for (k, va) in ta {
            if let Some(vb) = tb.get(k) {
                timing_deltas.insert(k.clone(), vb - va);
            }
        }
    }
    Ok(Comparison { run_a: ma.run_id, run_b: mb.run_id, fixture: ma.fixture, modes, timing_deltas })
}

pub fn print(c: &Comparison) {
    println!("{} vs {} ({})", c.run_a, c.run_b, c.fixture);
    println!("{:>4} {:>10} {:>10} {:>11} {:>12}", "mode", "mac_a", "mac_b", "mac_delta", "freq_delta");
    for m in &c.modes {
        println!("{:>4} {:>10.6} {:>10.6} {:>11.3e} {:>12.3e}", m.mode, m.mac_a, m.mac_b, m.mac_delta, m.freq_delta_hz);
    }
    for (stage, d) in &c.timing_deltas {
        println!("timing {stage}: {d:+.3} s");
    }
}
