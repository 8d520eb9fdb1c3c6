//! Complex baseband sample blocks and their binary file format.
//!
//! File layout: a 64-byte ASCII header `CVWF <sample_rate> <origin> <length>`
//! (sample rate in Hz, `{:e}` notation) padded with spaces and terminated by
//! `\n`, followed by `length` little-endian `f32` I/Q pairs.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Real;

pub const HEADER_LEN: usize = 64;
const MAGIC: &str = "CVWF";

#[derive(Debug, Error)]
pub enum WaveformError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("waveform has no samples")]
    Empty,
    #[error("waveform origin {from} cannot become {to}")]
    OriginTransition { from: Origin, to: Origin },
    #[error("expected a {expected} waveform, got {found}")]
    WrongOrigin { expected: Origin, found: Origin },
    #[error("malformed waveform file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Processing stage a waveform belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Tx,
    Channel,
    Rx,
    VacuumCal,
    ElectronicCal,
}

impl Origin {
    fn rank(self) -> Option<u8> {
        match self {
            Self::Tx => Some(0),
            Self::Channel => Some(1),
            Self::Rx => Some(2),
            Self::VacuumCal | Self::ElectronicCal => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tx => "tx",
            Self::Channel => "channel",
            Self::Rx => "rx",
            Self::VacuumCal => "vacuum_cal",
            Self::ElectronicCal => "electronic_cal",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Origin {
    type Err = WaveformError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "tx" => Self::Tx,
            "channel" => Self::Channel,
            "rx" => Self::Rx,
            "vacuum_cal" => Self::VacuumCal,
            "electronic_cal" => Self::ElectronicCal,
            other => return Err(WaveformError::Format(format!("unknown origin {other:?}"))),
        })
    }
}

/// Sampled complex signal with its rate and processing stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<Complex<T>>,
    /// Samples per second.
    pub sample_rate: f64,
    pub origin: Origin,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_rate: f64, origin: Origin) -> Result<Self, WaveformError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(WaveformError::InvalidRate(sample_rate));
        }
        if samples.is_empty() {
            return Err(WaveformError::Empty);
        }
        Ok(Self { samples, sample_rate, origin })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn expect_origin(&self, expected: Origin) -> Result<(), WaveformError> {
        if self.origin == expected {
            Ok(())
        } else {
            Err(WaveformError::WrongOrigin { expected, found: self.origin })
        }
    }

    /// Relabels the waveform; only forward moves along tx → channel → rx.
    pub fn advance(mut self, to: Origin) -> Result<Self, WaveformError> {
        match (self.origin.rank(), to.rank()) {
            (Some(a), Some(b)) if b > a => {
                self.origin = to;
                Ok(self)
            }
            _ => Err(WaveformError::OriginTransition { from: self.origin, to }),
        }
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<Complex<T>>) -> Self {
        Self { samples, sample_rate: self.sample_rate, origin: self.origin }
    }

    /// Mean of `|x|²`.
    pub fn mean_power(&self) -> T {
        let acc: f64 = self.samples.iter().map(|z| z.norm_sqr().to_f64_lossy()).sum();
        T::c(acc / self.samples.len() as f64)
    }

    /// Variance per quadrature, averaged over I and Q (means removed).
    pub fn quadrature_variance(&self) -> T {
        T::c(quadrature_variance(&self.samples))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), WaveformError> {
        let text = format!("{MAGIC} {:e} {} {}", self.sample_rate, self.origin, self.len());
        if text.len() > HEADER_LEN - 1 {
            return Err(WaveformError::Format("header exceeds 64 bytes".into()));
        }
        let mut header = format!("{text:<width$}", width = HEADER_LEN - 1);
        header.push('\n');
        w.write_all(header.as_bytes())?;
        let mut buf = Vec::with_capacity(self.len() * 8);
        for z in &self.samples {
            buf.extend_from_slice(&(z.re.to_f64_lossy() as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im.to_f64_lossy() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, WaveformError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let text = std::str::from_utf8(&header).map_err(|_| WaveformError::Format("header is not ASCII".into()))?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [magic, rate, origin, length] = fields[..] else {
            return Err(WaveformError::Format(format!("expected 4 header fields, got {}", fields.len())));
        };
        if magic != MAGIC {
            return Err(WaveformError::Format("missing CVWF magic".into()));
        }
        let rate: f64 = rate.parse().map_err(|_| WaveformError::Format(format!("bad sample rate {rate:?}")))?;
        let origin: Origin = origin.parse()?;
        let length: usize = length.parse().map_err(|_| WaveformError::Format(format!("bad length {length:?}")))?;
        let mut body = vec![0u8; length * 8];
        r.read_exact(&mut body)?;
        let samples = body
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex::new(T::c(f64::from(re)), T::c(f64::from(im)))
            })
            .collect();
        Self::new(samples, rate, origin)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WaveformError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WaveformError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Per-quadrature variance of complex samples, accumulated in `f64`.
pub fn quadrature_variance<T: Real>(samples: &[Complex<T>]) -> f64 {
    let n = samples.len() as f64;
    let (mut sr, mut si, mut srr, mut sii) = (0.0, 0.0, 0.0, 0.0);
    for z in samples {
        let (r, i) = (z.re.to_f64_lossy(), z.im.to_f64_lossy());
        sr += r;
        si += i;
        srr += r * r;
        sii += i * i;
    }
    let vr = srr / n - (sr / n).powi(2);
    let vi = sii / n - (si / n).powi(2);
    0.5 * (vr + vi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_64_bytes() {
        let w = Waveform::new(vec![Complex::new(1.0f64, -2.0); 3], 32e9, Origin::Tx).unwrap();
        let mut buf = Vec::new();
        w.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 3 * 8);
        assert_eq!(buf[HEADER_LEN - 1], b'\n');
        assert!(std::str::from_utf8(&buf[..HEADER_LEN]).unwrap().starts_with("CVWF 3.2e10 tx 3 "));
        assert_eq!(&buf[HEADER_LEN..HEADER_LEN + 4], &1.0f32.to_le_bytes());
        assert_eq!(&buf[HEADER_LEN + 4..HEADER_LEN + 8], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn origin_moves_forward_only() {
        let w = Waveform::new(vec![Complex::new(0.0f64, 0.0)], 1.0, Origin::Tx).unwrap();
        let ch = w.advance(Origin::Channel).unwrap();
        assert!(ch.clone().advance(Origin::Tx).is_err());
        assert!(ch.clone().advance(Origin::VacuumCal).is_err());
        assert_eq!(ch.advance(Origin::Rx).unwrap().origin, Origin::Rx);
    }

    #[test]
    fn rejects_empty_and_bad_rate() {
        assert!(matches!(Waveform::<f64>::new(vec![], 1.0, Origin::Tx), Err(WaveformError::Empty)));
        assert!(matches!(Waveform::new(vec![Complex::new(0.0f64, 0.0)], 0.0, Origin::Tx), Err(WaveformError::InvalidRate(_))));
    }

    #[test]
    fn rejects_garbage_header() {
        let bytes = vec![b'x'; 80];
        assert!(matches!(Waveform::<f64>::read_from(&bytes[..]), Err(WaveformError::Format(_))));
    }

    proptest! {
        #[test]
        fn file_roundtrip_is_exact_for_f32(
            samples in prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), 1..64),
            rate in 1.0f64..1e11,
            origin in prop::sample::select(vec![Origin::Tx, Origin::Channel, Origin::Rx, Origin::VacuumCal, Origin::ElectronicCal]),
        ) {
            let w = Waveform::new(samples.iter().map(|&(r, i)| Complex::new(r, i)).collect(), rate, origin).unwrap();
            let mut buf = Vec::new();
            w.write_to(&mut buf).unwrap();
            let back = Waveform::<f32>::read_from(&buf[..]).unwrap();
            prop_assert_eq!(back, w);
        }
    }
}
