//! Mode comparison (MAC, optimal matching, phase collinearity), spectral
//! summaries and trend statistics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use pathfinding::prelude::{kuhn_munkres, Matrix as Weights};
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::linalg::{CMatrix, CVector, C64};
use crate::recursive::ModalTrack;
use crate::{Error, Result};

/// `|a^H b|² / ((a^H a)(b^H b))`.
pub fn mac(a: &CVector, b: &CVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let (na, nb) = (a.norm_squared(), b.norm_squared());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot = a.dotc(b);
    Ok((dot.norm_sqr() / (na * nb)).min(1.0))
}

pub fn mac_real(a: &[f64], b: &[f64]) -> Result<f64> {
    mac(&crate::linalg::to_complex_vec(a), &crate::linalg::to_complex_vec(b))
}

/// `mac_matrix[(i, j)] = mac(truth_i, identified_j)`.
pub fn mac_matrix(identified: &CMatrix, truth: &CMatrix) -> Result<DMatrix<f64>> {
    if identified.nrows() != truth.nrows() {
        return Err(Error::DimensionMismatch { expected: truth.nrows(), got: identified.nrows() });
    }
    let mut m = DMatrix::zeros(truth.ncols(), identified.ncols());
    for i in 0..truth.ncols() {
        let t = truth.column(i).into_owned();
        for j in 0..identified.ncols() {
            m[(i, j)] = mac(&t, &identified.column(j).into_owned())?;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacReport {
    /// Rows follow the truth columns, columns the identified ones.
    pub mac_matrix: DMatrix<f64>,
    /// `assignment[i]` is the identified column matched to truth column `i`.
    pub assignment: Vec<usize>,
    pub per_mode_mac: Vec<f64>,
}

impl MacReport {
    pub fn total(&self) -> f64 {
        self.per_mode_mac.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.per_mode_mac.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Maximum-total-MAC one-to-one matching of identified to truth columns.
pub fn align_modes(identified: &CMatrix, truth: &CMatrix) -> Result<MacReport> {
    if identified.shape() != truth.shape() {
        return Err(Error::DimensionMismatch { expected: truth.ncols(), got: identified.ncols() });
    }
    let m = mac_matrix(identified, truth)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(MacReport { mac_matrix: m, assignment: Vec::new(), per_mode_mac: Vec::new() });
    }
    // Integer weights keep the assignment solver exact.
    const SCALE: f64 = 1e12;
    let weights = Weights::from_fn(n, n, |(i, j)| (m[(i, j)] * SCALE).round() as i64);
    let (_, assignment) = kuhn_munkres(&weights);
    let per_mode_mac = assignment.iter().enumerate().map(|(i, &j)| m[(i, j)]).collect();
    Ok(MacReport { mac_matrix: m, assignment, per_mode_mac })
}

pub fn align_real_modes(identified: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<MacReport> {
    align_modes(&crate::linalg::to_complex(identified), &crate::linalg::to_complex(truth))
}

/// Share of energy in the dominant direction of the `2 x n` stack
/// `[Re v; Im v]`: `s1² / (s1² + s2²)`. One for a mode whose entries share a
/// common phase (up to sign).
pub fn collinearity_index(mode: &CVector) -> Result<f64> {
    let mut g = Matrix2::<f64>::zeros();
    for z in mode.iter() {
        g[(0, 0)] += z.re * z.re;
        g[(0, 1)] += z.re * z.im;
        g[(1, 1)] += z.im * z.im;
    }
    g[(1, 0)] = g[(0, 1)];
    let total = g[(0, 0)] + g[(1, 1)];
    if total == 0.0 {
        return Err(Error::ZeroVector);
    }
    let half_gap = (0.25 * (g[(0, 0)] - g[(1, 1)]).powi(2) + g[(0, 1)].powi(2)).sqrt();
    let top = 0.5 * total + half_gap;
    Ok((top / total).clamp(0.5, 1.0))
}

/// Smallest collinearity index over the columns.
pub fn min_collinearity(modes: &CMatrix) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for j in 0..modes.ncols() {
        worst = worst.min(collinearity_index(&modes.column(j).into_owned())?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freq: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn df(&self) -> f64 {
        if self.freq.len() > 1 {
            self.freq[1] - self.freq[0]
        } else {
            0.0
        }
    }

    /// Integral of the one-sided density.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df()
    }
}

/// One-sided Welch density estimate with a periodic Hann window of `window`
/// samples and 50 % overlap; integrates to the mean square of the series.
pub fn psd(series: &[f64], dt: f64, window: usize) -> Result<Spectrum> {
    if window < 2 || series.len() < 2 * window {
        return Err(Error::TooShort { needed: 2 * window.max(2), got: series.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let hann: Vec<f64> = (0..window).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / window as f64).cos()).collect();
    let wss: f64 = hann.iter().map(|w| w * w).sum();
    let step = window / 2;
    let fft = FftPlanner::new().plan_fft_forward(window);
    let bins = window / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let mut buf = vec![C64::new(0.0, 0.0); window];
    let mut start = 0;
    while start + window <= series.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = C64::new(series[start + i] * hann[i], 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let fs = 1.0 / dt;
    let scale = 1.0 / (fs * wss * segments as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || (window.is_multiple_of(2) && k == bins - 1);
            p * scale * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    let freq = (0..bins).map(|k| k as f64 * fs / window as f64).collect();
    Ok(Spectrum { freq, power })
}

/// Local maxima of the spectrum, strongest first.
pub fn find_peaks(spectrum: &Spectrum, count: usize) -> Vec<(f64, f64)> {
    let p = &spectrum.power;
    let mut peaks: Vec<(f64, f64)> =
        (1..p.len().saturating_sub(1)).filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1]).map(|k| (spectrum.freq[k], p[k])).collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.truncate(count);
    peaks
}

/// Frequency of the largest bin above DC.
pub fn dominant_frequency(spectrum: &Spectrum) -> f64 {
    let k = (1..spectrum.power.len()).max_by(|&a, &b| spectrum.power[a].total_cmp(&spectrum.power[b])).unwrap_or(0);
    spectrum.freq[k]
}

/// Ratio in dB of the strongest to the second-strongest local peak.
pub fn peak_dominance_db(spectrum: &Spectrum) -> f64 {
    let peaks = find_peaks(spectrum, 2);
    match peaks.as_slice() {
        [a, b, ..] => 10.0 * (a.1 / b.1).log10(),
        _ => f64::INFINITY,
    }
}

/// Per-mode MAC of every snapshot in the track against `truth`.
pub fn mac_convergence(track: &ModalTrack, truth: &CMatrix) -> Result<Vec<(u64, Vec<f64>)>> {
    track.snapshots.iter().map(|s| Ok((s.index, align_modes(&crate::linalg::to_complex(&s.modes_real), truth)?.per_mode_mac))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannKendall {
    pub s: f64,
    pub z: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Mann-Kendall trend test with the tie-corrected variance.
pub fn mann_kendall(series: &[f64]) -> Result<MannKendall> {
    let n = series.len();
    if n < 3 {
        return Err(Error::TooShort { needed: 3, got: n });
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (series[j] - series[i]).signum() * f64::from(series[j] != series[i]);
        }
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut run = 1usize;
    for k in 1..=n {
        if k < n && sorted[k] == sorted[k - 1] {
            run += 1;
        } else {
            let t = run as f64;
            ties += t * (t - 1.0) * (2.0 * t + 5.0);
            run = 1;
        }
    }
    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
    let z = if var <= 0.0 {
        0.0
    } else if s > 0.0 {
        (s - 1.0) / var.sqrt()
    } else if s < 0.0 {
        (s + 1.0) / var.sqrt()
    } else {
        0.0
    };
    let normal = Normal::standard();
    let p_value = 2.0 * (1.0 - normal.cdf(z.abs()));
    Ok(MannKendall { s, z, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cvec(v: &[(f64, f64)]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&(a, b)| C64::new(a, b)))
    }

    #[test]
    fn mac_basics() {
        let v = cvec(&[(1.0, 0.0), (2.0, 1.0), (-1.0, 0.5)]);
        assert!((mac(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mac_real(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(mac(&v, &CVector::zeros(3)), Err(Error::ZeroVector)));
    }

    proptest! {
        #[test]
        fn mac_gauge_invariance(seed in any::<u64>(), t1 in -3.2f64..3.2, t2 in -3.2f64..3.2, c1 in 0.01f64..100.0, c2 in -100.0f64..-0.01) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = CVector::from_fn(5, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let b = CVector::from_fn(5, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let base = mac(&a, &b).unwrap();
            let moved = mac(&(&a * C64::from_polar(c1, t1)), &(&b * C64::from_polar(c2, t2))).unwrap();
            prop_assert!((base - moved).abs() < 1e-14);
            prop_assert!((mac(&b, &a).unwrap() - base).abs() < 1e-15);
        }

        #[test]
        fn alignment_beats_identity(seed in any::<u64>(), n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let b = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let report = align_modes(&a, &b).unwrap();
            let identity: f64 = (0..n).map(|i| report.mac_matrix[(i, i)]).sum();
            prop_assert!(report.total() >= identity - 1e-9);
            let mut seen = report.assignment.clone();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn alignment_recovers_permutation() {
        let truth = to_complex(&crate::linalg::dmatrix_from_rows(&[&[1.0, 0.2, 0.0], &[0.0, 1.0, 0.3], &[0.1, 0.0, 1.0]]));
        let perm = [2, 0, 1];
        let shuffled = CMatrix::from_fn(3, 3, |i, j| truth[(i, perm[j])]);
        let r = align_modes(&shuffled, &truth).unwrap();
        for (i, &j) in r.assignment.iter().enumerate() {
            assert_eq!(perm[j], i);
        }
        assert!(r.per_mode_mac.iter().all(|&m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn noisy_copy_stays_matched() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let truth = CMatrix::from_fn(6, 6, |_, _| C64::new(StandardNormal.sample(&mut rng), 0.0));
        let noise_rms = 10f64.powf(-20.0 / 20.0);
        let noisy = truth.map(|v| v + C64::new(noise_rms * rng.sample::<f64, _>(StandardNormal), 0.0));
        let r = align_modes(&noisy, &truth).unwrap();
        assert!(r.per_mode_mac.iter().all(|&m| m > 0.9), "{:?}", r.per_mode_mac);
    }

    #[test]
    fn collinearity_cases() {
        let real = cvec(&[(1.0, 0.0), (-2.0, 0.0), (0.5, 0.0)]);
        assert!((collinearity_index(&real).unwrap() - 1.0).abs() < 1e-15);
        let rotated = &real * C64::from_polar(1.0, 0.7);
        assert!((collinearity_index(&rotated).unwrap() - 1.0).abs() < 1e-12);
        assert!(collinearity_index(&CVector::zeros(2)).is_err());
        let quarter = cvec(&[(1.0, 0.0), (0.0, 1.0)]);
        assert!((collinearity_index(&quarter).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_phases_are_not_collinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let draws = 10_000;
        let below = (0..draws)
            .filter(|_| {
                let v = CVector::from_fn(8, |_, _| C64::from_polar(rng.random_range(0.1..1.0), rng.random_range(0.0..2.0 * PI)));
                collinearity_index(&v).unwrap() < 0.95
            })
            .count();
        assert!(below as f64 / draws as f64 >= 0.99, "{below}");
    }

    #[test]
    fn sine_peak_and_parseval() {
        let dt = 0.01;
        let f0 = 12.5;
        let x: Vec<f64> = (0..20_000).map(|k| (2.0 * PI * f0 * k as f64 * dt).sin()).collect();
        let s = psd(&x, dt, 1024).unwrap();
        assert!((dominant_frequency(&s) - f0).abs() <= s.df());
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((s.total_power() - var).abs() / var < 0.01);
        assert!(psd(&x[..100], dt, 64).is_err());
    }

    #[test]
    fn white_noise_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x: Vec<f64> = (0..400_000).map(|_| rng.sample(StandardNormal)).collect();
        let s = psd(&x, 1.0, 512).unwrap();
        let band: Vec<f64> = s.power.iter().zip(&s.freq).filter(|(_, &f)| (0.04..=0.4).contains(&f)).map(|(p, _)| *p).collect();
        let (lo, hi) = band.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &p| (l.min(p), h.max(p)));
        assert!(10.0 * (hi / lo).log10() < 3.0);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((s.total_power() - var).abs() / var < 0.01);
    }

    #[test]
    fn mann_kendall_detects_trend() {
        let rising: Vec<f64> = (0..50).map(|k| k as f64 + (k as f64 * 1.7).sin() * 3.0).collect();
        let r = mann_kendall(&rising).unwrap();
        assert!(r.s > 0.0 && r.p_value < 0.05);
        let flat = mann_kendall(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(flat.z, 0.0);
        assert!(mann_kendall(&[1.0, 2.0]).is_err());
    }
}
