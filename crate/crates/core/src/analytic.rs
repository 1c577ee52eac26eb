//! Analytic-signal construction: `y + i H(y)` per channel, offline over a
//! whole record or streaming with a fixed latency.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};

use crate::linalg::{CMatrix, CVector, C64};
use crate::{Error, Result};

/// One instant of the complex response.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSample {
    pub time_index: u64,
    pub values: CVector,
}

struct Transform {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    mask: Vec<f64>,
}

impl Transform {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let mut mask = vec![0.0; len];
        mask[0] = 1.0;
        let half = len / 2;
        for m in mask.iter_mut().take(len.div_ceil(2)).skip(1) {
            *m = 2.0;
        }
        if len.is_multiple_of(2) {
            mask[half] = 1.0;
        }
        Self { forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len), mask }
    }

    /// In place: real input in `buf`, analytic signal out.
    fn apply(&self, buf: &mut [C64]) {
        let n = buf.len() as f64;
        self.forward.process(buf);
        for (x, m) in buf.iter_mut().zip(&self.mask) {
            *x *= m / n;
        }
        self.inverse.process(buf);
    }
}

/// Analytic signal of a real series. The real part of the result is the input
/// itself, bit for bit.
pub fn hilbert_batch(signal: &[f64]) -> Result<Vec<C64>> {
    if signal.len() < 4 {
        return Err(Error::TooShort { needed: 4, got: signal.len() });
    }
    let t = Transform::new(signal.len());
    let mut buf: Vec<C64> = signal.iter().map(|&x| C64::new(x, 0.0)).collect();
    t.apply(&mut buf);
    for (z, &x) in buf.iter_mut().zip(signal) {
        z.re = x;
    }
    Ok(buf)
}

/// Row-wise [`hilbert_batch`] of a channels-by-samples record.
pub fn hilbert_rows(record: &DMatrix<f64>) -> Result<CMatrix> {
    let (n, len) = record.shape();
    if len < 4 {
        return Err(Error::TooShort { needed: 4, got: len });
    }
    let t = Transform::new(len);
    let mut out = CMatrix::zeros(n, len);
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for i in 0..n {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = C64::new(record[(i, k)], 0.0);
        }
        t.apply(&mut buf);
        for (k, b) in buf.iter().enumerate() {
            out[(i, k)] = C64::new(record[(i, k)], b.im);
        }
    }
    Ok(out)
}

/// Tukey window with half of its length flat; the emitted positions all sit
/// inside the flat part.
fn taper(len: usize) -> Vec<f64> {
    let edge = len / 4;
    (0..len)
        .map(|i| {
            let d = i.min(len - 1 - i);
            if d >= edge {
                1.0
            } else {
                0.5 * (1.0 - (PI * d as f64 / edge as f64).cos())
            }
        })
        .collect()
}

/// Streaming quadrature companion with a fixed latency of `window_len / 2`.
///
/// Every `hop` samples the last `window_len` inputs are tapered and
/// transformed; the `hop` samples around the window center are emitted.
pub struct PhaseShiftBuffer {
    window_len: usize,
    hop: usize,
    channels: Option<usize>,
    ring: Vec<VecDeque<f64>>,
    received: u64,
    emitted_through: Option<u64>,
    transform: Transform,
    taper: Vec<f64>,
    scratch: Vec<C64>,
}

impl PhaseShiftBuffer {
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        if window_len < 64 || !window_len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("window_len must be a power of two >= 64, got {window_len}")));
        }
        if hop == 0 || hop > window_len / 2 {
            return Err(Error::InvalidArgument(format!("hop must be in 1..={}, got {hop}", window_len / 2)));
        }
        Ok(Self {
            window_len,
            hop,
            channels: None,
            ring: Vec::new(),
            received: 0,
            emitted_through: None,
            transform: Transform::new(window_len),
            taper: taper(window_len),
            scratch: vec![C64::new(0.0, 0.0); window_len],
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Delay between the newest input and the center of the emitted block.
    pub fn latency(&self) -> usize {
        self.window_len / 2
    }

    pub fn emitted_through(&self) -> Option<u64> {
        self.emitted_through
    }

    /// Feeds one multichannel sample; see [`stream_shift`].
    pub fn push(&mut self, sample: &[f64]) -> Result<Vec<ComplexSample>> {
        match self.channels {
            None => {
                if sample.is_empty() {
                    return Err(Error::InvalidArgument("empty sample".into()));
                }
                self.channels = Some(sample.len());
                self.ring = vec![VecDeque::with_capacity(self.window_len); sample.len()];
            }
            Some(n) if n != sample.len() => {
                return Err(Error::StreamCorruption { expected: n, got: sample.len() });
            }
            Some(_) => {}
        }
        for (ring, &x) in self.ring.iter_mut().zip(sample) {
            if ring.len() == self.window_len {
                ring.pop_front();
            }
            ring.push_back(x);
        }
        self.received += 1;
        let newest = self.received - 1;
        let len = self.window_len as u64;
        if self.received < len || !(self.received - len).is_multiple_of(self.hop as u64) {
            return Ok(Vec::new());
        }

        let center = newest - len / 2;
        let before = ((self.hop - 1) / 2) as u64;
        let first = center.saturating_sub(before);
        let last = first + self.hop as u64 - 1;
        let first = self.emitted_through.map_or(first, |e| first.max(e + 1));
        let window_start = newest + 1 - len;

        let n = self.ring.len();
        let count = (last + 1 - first) as usize;
        let mut out: Vec<ComplexSample> =
            (0..count).map(|i| ComplexSample { time_index: first + i as u64, values: CVector::zeros(n) }).collect();
        for (ch, ring) in self.ring.iter().enumerate() {
            for (i, (s, &x)) in self.scratch.iter_mut().zip(ring.iter()).enumerate() {
                *s = C64::new(x * self.taper[i], 0.0);
            }
            self.transform.apply(&mut self.scratch);
            for sample in out.iter_mut() {
                let pos = (sample.time_index - window_start) as usize;
                sample.values[ch] = C64::new(ring[pos], self.scratch[pos].im / self.taper[pos]);
            }
        }
        self.emitted_through = Some(last);
        Ok(out)
    }
}

/// Pushes one sample into the buffer; returns the samples that became
/// available (none during warm-up).
pub fn stream_shift(buffer: &mut PhaseShiftBuffer, sample: &[f64]) -> Result<Vec<ComplexSample>> {
    buffer.push(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(a: &[f64]) -> f64 {
        (a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn cosine_gets_sine_companion() {
        let n = 16_384;
        let f = 0.0301;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * f * k as f64).cos()).collect();
        let z = hilbert_batch(&x).unwrap();
        let edge = n / 20;
        let err: Vec<f64> = (edge..n - edge).map(|k| z[k].im - (2.0 * PI * f * k as f64).sin()).collect();
        assert!(rms(&err) < 1e-3, "rms {}", rms(&err));
        assert!(z.iter().zip(&x).all(|(z, x)| z.re == *x));
    }

    #[test]
    fn constant_has_no_quadrature() {
        let z = hilbert_batch(&[2.5; 100]).unwrap();
        assert!(z.iter().all(|z| z.im.abs() < 1e-10));
    }

    #[test]
    fn two_tone_envelope() {
        let n = 8192;
        let (w1, w2) = (0.21, 0.34);
        let x: Vec<f64> = (0..n).map(|k| (w1 * k as f64).cos() + (w2 * k as f64).cos()).collect();
        let z = hilbert_batch(&x).unwrap();
        let edge = n / 20;
        let err: Vec<f64> = (edge..n - edge)
            .map(|k| {
                let t = k as f64;
                let exact = (C64::new(0.0, w1 * t).exp() + C64::new(0.0, w2 * t).exp()).norm();
                z[k].norm() - exact
            })
            .collect();
        assert!(rms(&err) < 1e-3);
    }

    #[test]
    fn too_short() {
        assert!(matches!(hilbert_batch(&[1.0, 2.0, 3.0]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn warm_up_emits_nothing() {
        let mut buf = PhaseShiftBuffer::new(64, 1).unwrap();
        for k in 0..63 {
            assert!(stream_shift(&mut buf, &[k as f64]).unwrap().is_empty());
        }
        let out = stream_shift(&mut buf, &[0.0]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].time_index, 31);
    }

    #[test]
    fn impulse_real_part_passes_through() {
        let mut buf = PhaseShiftBuffer::new(64, 1).unwrap();
        let mut emitted = Vec::new();
        for k in 0..200 {
            let x = if k == 50 { 1.0 } else { 0.0 };
            emitted.extend(buf.push(&[x, -x]).unwrap());
        }
        for s in &emitted {
            let expect = if s.time_index == 50 { 1.0 } else { 0.0 };
            assert_eq!(s.values[0].re, expect);
            assert_eq!(s.values[1].re, -expect);
        }
        assert_eq!(emitted.len(), 200 - 63);
    }

    #[test]
    fn hop_blocks_are_contiguous() {
        let mut buf = PhaseShiftBuffer::new(128, 16).unwrap();
        let mut idx = Vec::new();
        for k in 0..1000 {
            idx.extend(buf.push(&[(k as f64 * 0.3).sin()]).unwrap().into_iter().map(|s| s.time_index));
        }
        assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn dimension_change_is_corruption() {
        let mut buf = PhaseShiftBuffer::new(64, 1).unwrap();
        buf.push(&[1.0, 2.0]).unwrap();
        assert!(matches!(buf.push(&[1.0]), Err(Error::StreamCorruption { expected: 2, got: 1 })));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(PhaseShiftBuffer::new(100, 1).is_err());
        assert!(PhaseShiftBuffer::new(32, 1).is_err());
        assert!(PhaseShiftBuffer::new(64, 33).is_err());
    }
}
