//! Sampled trajectory data and the data-source abstraction that feeds
//! per-node exogenous values (measurements, road inputs) to models.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("time {t} outside the data horizon [{t0}, {tf}]")]
    OutOfRange { t: f64, t0: f64, tf: f64 },
    #[error("time grid must be strictly increasing")]
    NotMonotone,
    #[error("channel length {got} does not match time grid length {want}")]
    BadShape { got: usize, want: usize },
    #[error("need at least two samples")]
    TooShort,
}

/// Anything that can produce a vector of exogenous values at a given time.
pub trait DataSource {
    fn width(&self) -> usize;
    fn sample_into(&self, t: f64, out: &mut [f64]) -> Result<(), DataError>;
}

/// A data source with no channels.
pub struct NoData;

impl DataSource for NoData {
    fn width(&self) -> usize {
        0
    }
    fn sample_into(&self, _t: f64, _out: &mut [f64]) -> Result<(), DataError> {
        Ok(())
    }
}

/// Uniparametric table of sampled channels over a strictly increasing time
/// grid; queries interpolate linearly and refuse to extrapolate (beyond a
/// roundoff-sized slack at the ends).
#[derive(Debug, Clone)]
pub struct TrajectoryData {
    pub t: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
}

impl TrajectoryData {
    pub fn new(t: Vec<f64>, channels: Vec<Vec<f64>>) -> Result<Self, DataError> {
        if t.len() < 2 {
            return Err(DataError::TooShort);
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DataError::NotMonotone);
        }
        for c in &channels {
            if c.len() != t.len() {
                return Err(DataError::BadShape { got: c.len(), want: t.len() });
            }
        }
        Ok(Self { t, channels })
    }

    #[inline]
    pub fn n_samples(&self) -> usize {
        self.t.len()
    }
    #[inline]
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }
    #[inline]
    pub fn t0(&self) -> f64 {
        self.t[0]
    }
    #[inline]
    pub fn tf(&self) -> f64 {
        *self.t.last().unwrap()
    }
    /// average sample spacing
    pub fn mean_dt(&self) -> f64 {
        (self.tf() - self.t0()) / (self.n_samples() - 1) as f64
    }

    /// clamp `t` into the horizon if it is within roundoff of an endpoint
    fn locate(&self, t: f64) -> Result<(usize, f64), DataError> {
        let (t0, tf) = (self.t0(), self.tf());
        let slack = 1e-9 * (tf - t0).max(1.0);
        if t < t0 - slack || t > tf + slack {
            return Err(DataError::OutOfRange { t, t0, tf });
        }
        let t = t.clamp(t0, tf);
        // index of the left grid point of the bracketing interval
        let hi = self.t.partition_point(|&x| x < t).min(self.t.len() - 1).max(1);
        let lo = hi - 1;
        let w = (t - self.t[lo]) / (self.t[hi] - self.t[lo]);
        Ok((lo, w))
    }

    pub fn value(&self, channel: usize, t: f64) -> Result<f64, DataError> {
        let (lo, w) = self.locate(t)?;
        let c = &self.channels[channel];
        Ok(c[lo] + w * (c[lo + 1] - c[lo]))
    }

    pub fn channel_mean(&self, channel: usize) -> f64 {
        let c = &self.channels[channel];
        c.iter().sum::<f64>() / c.len() as f64
    }

    /// population standard deviation of one channel
    pub fn channel_std(&self, channel: usize) -> f64 {
        let mean = self.channel_mean(channel);
        let c = &self.channels[channel];
        (c.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c.len() as f64).sqrt()
    }

    pub fn write_csv(&self, path: &std::path::Path, headers: &[&str]) -> std::io::Result<()> {
        use std::io::Write;
        assert_eq!(headers.len(), self.n_channels() + 1, "one header per column");
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{}", headers.join(","))?;
        for i in 0..self.n_samples() {
            let mut row = format!("{:.9e}", self.t[i]);
            for c in &self.channels {
                row.push_str(&format!(",{:.9e}", c[i]));
            }
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl DataSource for TrajectoryData {
    fn width(&self) -> usize {
        self.n_channels()
    }
    fn sample_into(&self, t: f64, out: &mut [f64]) -> Result<(), DataError> {
        debug_assert_eq!(out.len(), self.n_channels());
        let (lo, w) = self.locate(t)?;
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c[lo] + w * (c[lo + 1] - c[lo]);
        }
        Ok(())
    }
}
