use crate::error::{Error, Result};

/// First-order Butterworth low-pass via the bilinear transform with
/// frequency pre-warping: unity DC gain, exactly -3 dB at the cutoff.
#[derive(Debug, Clone, Copy)]
pub struct FirstOrderLowpass {
    b: f64,
    a1: f64,
    x_prev: f64,
    y_prev: f64,
    primed: bool,
}

impl FirstOrderLowpass {
    pub fn new(sample_rate_hz: f64, cutoff_hz: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::param(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                sample_rate_hz / 2.0
            )));
        }
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
        Ok(FirstOrderLowpass {
            b: k / (1.0 + k),
            a1: (k - 1.0) / (k + 1.0),
            x_prev: 0.0,
            y_prev: 0.0,
            primed: false,
        })
    }

    /// The first sample primes the state to steady state, so a constant
    /// input passes through unchanged from the start.
    pub fn step(&mut self, x: f64) -> f64 {
        if !self.primed {
            self.x_prev = x;
            self.y_prev = x;
            self.primed = true;
        }
        let y = self.b * (x + self.x_prev) - self.a1 * self.y_prev;
        self.x_prev = x;
        self.y_prev = y;
        y
    }

    pub fn reset(&mut self) {
        self.primed = false;
    }
}

pub fn lowpass_first_order(signal: &[f64], sample_rate_hz: f64, cutoff_hz: f64) -> Result<Vec<f64>> {
    let mut lpf = FirstOrderLowpass::new(sample_rate_hz, cutoff_hz)?;
    Ok(signal.iter().map(|&x| lpf.step(x)).collect())
}
