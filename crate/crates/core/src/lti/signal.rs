use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

type SignalFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// A time signal `t -> R^p` with an optional closed-form derivative.
#[derive(Clone)]
pub enum Signal {
    /// `offset + amplitude * sin(frequency * t)` on every channel.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        channels: usize,
    },
    Custom {
        channels: usize,
        value: SignalFn,
        derivative: Option<SignalFn>,
    },
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Sinusoid {
                offset,
                amplitude,
                frequency,
                channels,
            } => write!(
                f,
                "Sinusoid({offset} + {amplitude}*sin({frequency}*t), channels={channels})"
            ),
            Signal::Custom {
                channels,
                derivative,
                ..
            } => write!(
                f,
                "Custom(channels={channels}, derivative={})",
                derivative.is_some()
            ),
        }
    }
}

impl Signal {
    pub fn zero(channels: usize) -> Self {
        Signal::Sinusoid {
            offset: 0.0,
            amplitude: 0.0,
            frequency: 0.0,
            channels,
        }
    }

    pub fn constant(value: f64, channels: usize) -> Self {
        Signal::Sinusoid {
            offset: value,
            amplitude: 0.0,
            frequency: 0.0,
            channels,
        }
    }

    pub fn sinusoid(offset: f64, amplitude: f64, frequency: f64, channels: usize) -> Self {
        Signal::Sinusoid {
            offset,
            amplitude,
            frequency,
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Signal::Sinusoid { channels, .. } | Signal::Custom { channels, .. } => *channels,
        }
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.channels());
        self.value_into(t, out.as_mut_slice());
        out
    }

    /// Writes the value at `t` into `out` (length = channels) without allocating
    /// for the sinusoidal case.
    pub fn value_into(&self, t: f64, out: &mut [f64]) {
        match self {
            Signal::Sinusoid {
                offset,
                amplitude,
                frequency,
                ..
            } => {
                let v = offset + amplitude * (frequency * t).sin();
                out.iter_mut().for_each(|o| *o = v);
            }
            Signal::Custom { value, .. } => out.copy_from_slice(value(t).as_slice()),
        }
    }

    /// Closed-form derivative; `None` for custom signals without one.
    pub fn derivative(&self, t: f64) -> Option<DVector<f64>> {
        match self {
            Signal::Sinusoid {
                amplitude,
                frequency,
                channels,
                ..
            } => Some(DVector::from_element(
                *channels,
                amplitude * frequency * (frequency * t).cos(),
            )),
            Signal::Custom { derivative, .. } => derivative.as_ref().map(|d| d(t)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Signal::Sinusoid { amplitude, frequency, .. } if *amplitude == 0.0 || *frequency == 0.0)
    }

    /// Largest discrepancy between the derivative and a central difference
    /// over `times`. Returns `None` when no derivative is available.
    pub fn derivative_mismatch(&self, times: &[f64]) -> Option<f64> {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for &t in times {
            let d = self.derivative(t)?;
            let fd = (self.value(t + h) - self.value(t - h)) / (2.0 * h);
            worst = worst.max((d - fd).amax());
        }
        Some(worst)
    }
}
