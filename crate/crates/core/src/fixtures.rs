//! Bundled structural models and their published reference modes.
//!
//! * [`closely_spaced`]: 3-DOF chain with closely spaced upper modes,
//!   Rayleigh damped.
//! * [`non_proportional`]: 3-DOF chain with a non-proportional damping matrix.
//! * [`damping_switch`]: 3-DOF chain that starts proportionally damped and
//!   receives the non-proportional damping matrix mid-record.
//! * [`benchmark_model`]: the 12-DOF shear-building model of the four-story
//!   steel frame benchmark, optionally carrying a tuned appendage on the top
//!   floor in the y direction.

use nalgebra::{DMatrix, DVector};

use crate::config::KeyValues;
use crate::dynamics::{rayleigh_coefficients, rayleigh_damping, ScenarioEvent, SystemModel};
use crate::linalg::{cmatrix_from_rows, dmatrix_from_rows, CMatrix};
use crate::{Error, Result};

fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(values))
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub const CLOSELY_SPACED_FREQS_HZ: [f64; 3] = [0.1649, 0.3248, 0.3655];

/// Mass-normalized undamped modes of [`closely_spaced`] as published.
pub fn closely_spaced_real_modes() -> DMatrix<f64> {
    dmatrix_from_rows(&[&[-0.2299, -0.4061, -0.6700], &[-0.6193, -0.1528, 0.3051], &[-0.3437, 0.7369, -0.3288]])
}

pub fn closely_spaced_complex_modes() -> CMatrix {
    cmatrix_from_rows(&[
        &[(0.0043, 0.2143), (0.0052, 0.2089), (-0.0033, -0.3318)],
        &[(0.0116, 0.5774), (0.0020, 0.0786), (0.0015, 0.1511)],
        &[(0.0064, 0.3204), (-0.0095, -0.3790), (-0.0016, -0.1628)],
    ])
}

/// `M = diag(1.5, 2, 1.3)`, tridiagonal `K`, 2% Rayleigh damping anchored at
/// modes 1 and 3.
pub fn closely_spaced() -> SystemModel {
    let m = diag(&[1.5, 2.0, 1.3]);
    let k = dmatrix_from_rows(&[&[7.0, -2.0, 0.0], &[-2.0, 4.0, -2.0], &[0.0, -2.0, 5.0]]);
    let c = rayleigh_damping(&m, &k, 0.02, (0, 2)).expect("distinct frequencies");
    SystemModel::new(m, c, k, labels("m", 3)).expect("valid fixture")
}

pub fn non_proportional_damping() -> DMatrix<f64> {
    dmatrix_from_rows(&[&[0.1856, 0.2290, -0.9702], &[0.2290, 0.0308, -0.0297], &[-0.9702, -0.0297, 0.1241]])
}

fn chain_stiffness() -> DMatrix<f64> {
    dmatrix_from_rows(&[&[4.0, -2.0, 0.0], &[-2.0, 4.0, -2.0], &[0.0, -2.0, 10.0]])
}

pub fn non_proportional() -> SystemModel {
    SystemModel::new(diag(&[3.0, 2.0, 1.0]), non_proportional_damping(), chain_stiffness(), labels("m", 3)).expect("valid fixture")
}

/// Mass-normalized undamped modes of [`non_proportional`] as published.
pub fn non_proportional_real_modes() -> DMatrix<f64> {
    dmatrix_from_rows(&[&[0.4575, 0.3521, 0.0090], &[0.4264, -0.5510, -0.1206], &[0.0918, -0.1446, 0.9852]])
}

/// Published complex modes of [`non_proportional`] (highest frequency first).
pub fn non_proportional_complex_modes() -> CMatrix {
    cmatrix_from_rows(&[
        &[(-0.0370, -0.0021), (-0.0115, 0.2947), (-0.5458, 0.0)],
        &[(0.0050, 0.0364), (-0.0059, -0.4345), (-0.5156, -0.0126)],
        &[(-0.0051, -0.2988), (-0.0594, -0.1167), (-0.1100, -0.0521)],
    ])
}

pub const DAMPING_SWITCH_TIME: f64 = 25.0;

/// Proportionally damped chain (2% Rayleigh, modes 1 and 3) and the event
/// that replaces its damping with [`non_proportional_damping`].
pub fn damping_switch() -> (SystemModel, ScenarioEvent) {
    let m = diag(&[3.0, 2.0, 2.0]);
    let k = chain_stiffness();
    let c = rayleigh_damping(&m, &k, 0.02, (0, 2)).expect("distinct frequencies");
    let model = SystemModel::new(m, c, k, labels("m", 3)).expect("valid fixture");
    let event = ScenarioEvent { at_time: DAMPING_SWITCH_TIME, new_damping: non_proportional_damping() };
    (model, event)
}

/// Benchmark floor masses (kg), in DOF order.
pub const BENCHMARK_MASS_KG: [f64; 12] = [3452.4, 3452.4, 3819.4, 2652.4, 2986.1, 2652.4, 2652.4, 2986.1, 1809.9, 1809.9, 1809.9, 2056.9];

/// Benchmark stiffness in MN/m, row-major 12x12 as published.
#[rustfmt::skip]
pub const BENCHMARK_STIFFNESS_MN_PER_M: [[f64; 12]; 12] = [
    [213.20, 0.0, 0.0, -106.60, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 135.81, 0.0, 0.0, -67.90, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 464.04, 0.0, 0.0, -232.02, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-106.60, 0.0, 0.0, 213.20, 0.0, 0.0, -106.60, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, -67.90, 0.0, 0.0, 135.81, 0.0, 0.0, -67.90, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, -232.02, 0.0, 0.0, 464.04, 0.0, 0.0, -232.02, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, -106.60, 0.0, 0.0, 213.20, 0.0, 0.0, -106.60, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, -67.90, 0.0, 0.0, 135.81, 0.0, 0.0, -67.90, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, -232.02, 0.0, 0.0, 464.04, 0.0, 0.0, -232.02],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -106.60, 0.0, 0.0, 106.60, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -67.90, 0.0, 0.0, 67.90, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -232.02, 0.0, 0.0, 232.02],
];

/// DOFs carrying the y-direction translations of floors 1..4.
pub const BENCHMARK_Y_DOFS: [usize; 4] = [0, 3, 6, 9];
pub const BENCHMARK_DAMPING_RATIO: f64 = 0.01;

/// Published real y-direction modes of the undamaged benchmark (unit norm).
pub fn benchmark_real_modes() -> DMatrix<f64> {
    dmatrix_from_rows(&[
        &[0.2422, -0.6226, 0.5029, 0.2129],
        &[0.4414, -0.4297, -0.5032, -0.5591],
        &[0.5803, 0.1956, -0.3494, 0.6559],
        &[0.6399, 0.6241, 0.6098, -0.4603],
    ])
}

pub fn benchmark_complex_modes() -> CMatrix {
    cmatrix_from_rows(&[
        &[(0.0980, -0.6579), (0.2123, -2.0306), (0.1644, 3.8407), (-0.2735, -3.7886)],
        &[(-0.0310, 1.8428), (0.1897, 2.1281), (-0.2647, 2.7033), (-0.2480, -7.2326)],
        &[(-0.0123, -2.1900), (-0.0904, 1.4109), (-0.2072, -1.1655), (-0.2244, -9.6458)],
        &[(0.0105, 1.5428), (-0.0524, -2.5213), (-0.0388, -3.8303), (-0.2230, -10.6845)],
    ])
}

/// Secondary mass-spring-dashpot attached to the top floor in y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Appendage {
    pub mass: f64,
    pub stiffness: f64,
    pub damping_ratio: f64,
}

impl Default for Appendage {
    fn default() -> Self {
        Self { mass: 172.6, stiffness: 6.8e6, damping_ratio: 0.02 }
    }
}

impl Appendage {
    pub fn dashpot(&self) -> f64 {
        2.0 * self.damping_ratio * (self.stiffness * self.mass).sqrt()
    }
}

fn benchmark_labels() -> Vec<String> {
    let mut out = Vec::with_capacity(12);
    for floor in 1..=4 {
        out.push(format!("y{floor}"));
        out.push(format!("x{floor}"));
        out.push(format!("theta{floor}"));
    }
    out
}

/// The 12-DOF benchmark (13 with an appendage as the last DOF).
///
/// Structural damping is mass- and stiffness-proportional with
/// [`BENCHMARK_DAMPING_RATIO`] at the first and fourth y-direction modes.
pub fn benchmark_model(appendage: Option<Appendage>) -> SystemModel {
    let m = diag(&BENCHMARK_MASS_KG);
    let k = DMatrix::from_fn(12, 12, |i, j| BENCHMARK_STIFFNESS_MN_PER_M[i][j] * 1e6);
    let pick = |x: &DMatrix<f64>| DMatrix::from_fn(4, 4, |i, j| x[(BENCHMARK_Y_DOFS[i], BENCHMARK_Y_DOFS[j])]);
    let (alpha, beta) = rayleigh_coefficients(&pick(&m), &pick(&k), BENCHMARK_DAMPING_RATIO, (0, 3)).expect("distinct frequencies");
    let c = &m * alpha + &k * beta;
    let Some(app) = appendage else {
        return SystemModel::new(m, c, k, benchmark_labels()).expect("valid fixture");
    };
    let top = BENCHMARK_Y_DOFS[3];
    let grow = |x: &DMatrix<f64>| x.clone().resize(13, 13, 0.0);
    let (mut m, mut c, mut k) = (grow(&m), grow(&c), grow(&k));
    m[(12, 12)] = app.mass;
    for (mat, coef) in [(&mut k, app.stiffness), (&mut c, app.dashpot())] {
        mat[(top, top)] += coef;
        mat[(12, 12)] += coef;
        mat[(top, 12)] -= coef;
        mat[(12, top)] -= coef;
    }
    let mut names = benchmark_labels();
    names.push("y_app".into());
    SystemModel::new(m, c, k, names).expect("valid fixture")
}

/// Measured DOFs of the benchmark in the y direction.
pub fn benchmark_y_dofs(with_appendage: bool) -> Vec<usize> {
    let mut dofs = BENCHMARK_Y_DOFS.to_vec();
    if with_appendage {
        dofs.push(12);
    }
    dofs
}

/// y-direction sub-model (4 DOFs, 5 with the appendage). The y chain is not
/// coupled to x or rotation, so this reduction is exact.
pub fn benchmark_y_model(appendage: Option<Appendage>) -> SystemModel {
    benchmark_model(appendage).reduce(&benchmark_y_dofs(appendage.is_some())).expect("valid reduction")
}

/// Reads a fixture from key-value text.
///
/// Required keys: `dof`, `mass`, `stiffness`. Damping is either a `damping`
/// matrix or `rayleigh.zeta` with optional `rayleigh.modes` (default `0, n-1`).
/// `labels` is optional.
pub fn parse_fixture(text: &str) -> Result<SystemModel> {
    let kv = KeyValues::parse(text)?;
    let n: usize = kv.get("dof")?.ok_or_else(|| Error::Config("fixture needs `dof`".into()))?;
    let mass = kv.get_matrix("mass", n, n)?.ok_or_else(|| Error::Config("fixture needs `mass`".into()))?;
    let stiffness = kv.get_matrix("stiffness", n, n)?.ok_or_else(|| Error::Config("fixture needs `stiffness`".into()))?;
    let damping = match kv.get_matrix("damping", n, n)? {
        Some(c) => c,
        None => match kv.get::<f64>("rayleigh.zeta")? {
            Some(zeta) => {
                let modes = kv.get_list::<usize>("rayleigh.modes")?.unwrap_or_else(|| vec![0, n.saturating_sub(1)]);
                if modes.len() != 2 {
                    return Err(Error::Config("rayleigh.modes needs two indices".into()));
                }
                rayleigh_damping(&mass, &stiffness, zeta, (modes[0], modes[1]))?
            }
            None => DMatrix::zeros(n, n),
        },
    };
    let names = kv.get_list::<String>("labels")?.unwrap_or_default();
    SystemModel::new(mass, damping, stiffness, names)
}

/// Named fixtures understood by the CLI.
pub fn named(name: &str) -> Result<SystemModel> {
    match name {
        "cs1" | "closely-spaced" => Ok(closely_spaced()),
        "cs2" | "non-proportional" => Ok(non_proportional()),
        "cs3" | "damping-switch" => Ok(damping_switch().0),
        "benchmark" => Ok(benchmark_y_model(None)),
        "benchmark-appendage" => Ok(benchmark_y_model(Some(Appendage::default()))),
        "benchmark-full" => Ok(benchmark_model(None)),
        other => Err(Error::UnknownCase(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_matrices_as_published() {
        let m = benchmark_model(None);
        assert_eq!(m.mass[(0, 0)], 3452.4);
        assert!((m.stiffness[(0, 0)] - 213.20e6).abs() < 1e-6);
        assert_eq!(m.dof(), 12);
        assert_eq!(benchmark_model(Some(Appendage::default())).dof(), 13);
    }

    #[test]
    fn appendage_coupling_is_symmetric() {
        let m = benchmark_model(Some(Appendage::default()));
        assert_eq!(m.stiffness[(9, 12)], -6.8e6);
        assert_eq!(m.stiffness[(12, 9)], -6.8e6);
        assert!((m.damping[(12, 12)] - Appendage::default().dashpot()).abs() < 1e-9);
        assert_eq!(m.dof_labels[12], "y_app");
    }

    #[test]
    fn y_reduction_keeps_full_model_frequencies() {
        let full = crate::dynamics::ground_truth(&benchmark_model(Some(Appendage::default()))).unwrap();
        let y = crate::dynamics::ground_truth(&benchmark_y_model(Some(Appendage::default()))).unwrap();
        assert_eq!(y.natural_freqs_hz.len(), 5);
        for f in &y.natural_freqs_hz {
            assert!(full.natural_freqs_hz.iter().any(|g| (f - g).abs() < 1e-9 * f), "{f}");
        }
    }

    #[test]
    fn fixture_text_round_trip() {
        let text = "dof = 2\nmass = 1, 0, 0, 2\nstiffness = 3, -1, -1, 2\nrayleigh.zeta = 0.05\nlabels = a, b\n";
        let model = parse_fixture(text).unwrap();
        assert_eq!(model.dof_labels, vec!["a", "b"]);
        assert!(model.damping[(0, 0)] > 0.0);
        assert!(parse_fixture("dof = 2\nmass = 1, 0, 0, 2\n").is_err());
    }

    #[test]
    fn unknown_fixture() {
        assert!(matches!(named("nope"), Err(Error::UnknownCase(_))));
    }
}
