//! Sampled multi-channel signals and batches on the equiangular grid.

use crate::error::{DiscoError, Result};
use crate::grid::Bandlimit;

/// A multi-channel signal laid out `[channel][t][p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSignal {
    l: Bandlimit,
    channels: usize,
    data: Vec<f64>,
}

impl SphericalSignal {
    pub fn new(l: Bandlimit, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(DiscoError::ShapeMismatch("signal needs at least one channel".into()));
        }
        let want = channels * l.n_samples();
        if data.len() != want {
            return Err(DiscoError::ShapeMismatch(format!(
                "signal payload has {} values, expected {want}",
                data.len()
            )));
        }
        Ok(Self { l, channels, data })
    }

    pub fn zeros(l: Bandlimit, channels: usize) -> Self {
        Self {
            l,
            channels,
            data: vec![0.0; channels * l.n_samples()],
        }
    }

    pub fn constant(l: Bandlimit, channels: usize, value: f64) -> Self {
        Self {
            l,
            channels,
            data: vec![value; channels * l.n_samples()],
        }
    }

    pub fn bandlimit(&self) -> Bandlimit {
        self.l
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.l.n_samples();
        &self.data[c * n..(c + 1) * n]
    }
}

/// Signals sharing `(L, channels)`, laid out `[d][channel][t][p]` so the
/// batch and channel axes fuse into one run of planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    l: Bandlimit,
    batch: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(l: Bandlimit, batch: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if batch == 0 || channels == 0 {
            return Err(DiscoError::ShapeMismatch("empty batch".into()));
        }
        let want = batch * channels * l.n_samples();
        if data.len() != want {
            return Err(DiscoError::ShapeMismatch(format!(
                "batch payload has {} values, expected {want}",
                data.len()
            )));
        }
        Ok(Self {
            l,
            batch,
            channels,
            data,
        })
    }

    pub fn zeros(l: Bandlimit, batch: usize, channels: usize) -> Self {
        Self {
            l,
            batch,
            channels,
            data: vec![0.0; batch * channels * l.n_samples()],
        }
    }

    pub fn from_signals(signals: &[SphericalSignal]) -> Result<Self> {
        let first = signals
            .first()
            .ok_or_else(|| DiscoError::ShapeMismatch("empty batch".into()))?;
        let mut data = Vec::with_capacity(signals.len() * first.data.len());
        for s in signals {
            if s.l != first.l || s.channels != first.channels {
                return Err(DiscoError::ShapeMismatch("heterogeneous batch".into()));
            }
            data.extend_from_slice(&s.data);
        }
        Self::new(first.l, signals.len(), first.channels, data)
    }

    pub fn from_signal(signal: SphericalSignal) -> Self {
        Self {
            l: signal.l,
            batch: 1,
            channels: signal.channels,
            data: signal.data,
        }
    }

    pub fn into_signals(self) -> Vec<SphericalSignal> {
        let per = self.channels * self.l.n_samples();
        self.data
            .chunks(per)
            .map(|c| SphericalSignal {
                l: self.l,
                channels: self.channels,
                data: c.to_vec(),
            })
            .collect()
    }

    pub fn bandlimit(&self) -> Bandlimit {
        self.l
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of single-channel planes, `batch * channels`.
    pub fn planes(&self) -> usize {
        self.batch * self.channels
    }

    pub fn plane_len(&self) -> usize {
        self.l.n_samples()
    }

    pub fn plane(&self, i: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn plane_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(DiscoError::NonFinite(what))
        }
    }

    pub fn dot(&self, other: &Batch) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Batch) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
