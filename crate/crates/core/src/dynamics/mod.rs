//! Ground motions, single-degree-of-freedom oscillators, intensity measures and labels.
//!
//! The physics layer runs in `f64` regardless of the scalar used by the estimators;
//! only the resulting log-IM values cross into the generic code.

mod ground_motion;
mod oscillator;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use ground_motion::{generate_signal, GroundMotionParams};
pub use oscillator::{
    simulate_linear, simulate_nonlinear, Hysteresis, NewmarkOscillator, OscillatorSpec, Response, SimOptions,
};

/// Ground acceleration history `s(t)` in m/s² sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accelerogram {
    pub samples: Vec<f64>,
    pub dt: f64,
}

impl Accelerogram {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at {i}")));
        }
        Ok(Self { samples, dt })
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len().saturating_sub(1) as f64
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { samples: self.samples.iter().map(|s| c * s).collect(), dt: self.dt }
    }

    /// Two-column text: a `# dt=<seconds>` header, then `t s` per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# dt={}", self.dt)?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(w, "{} {}", i as f64 * self.dt, s)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut dt = None;
        let mut samples = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("dt=") {
                    dt = Some(v.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("dt: {e}")))?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let s = line
                .split_whitespace()
                .nth(1)
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected two columns", ln + 1)))?;
            samples.push(s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("line {}: {e}", ln + 1)))?);
        }
        Self::new(samples, dt.ok_or_else(|| Error::InvalidArgument("missing dt header".into()))?)
    }
}

/// Peak ground acceleration.
pub fn pga(acc: &Accelerogram) -> f64 {
    acc.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
}

/// Pseudo-spectral acceleration `ω²·max|z|` of the linear oscillator at `(freq, zeta)`.
pub fn spectral_accel(acc: &Accelerogram, freq: f64, zeta: f64, opts: &SimOptions) -> Result<f64> {
    let spec = OscillatorSpec::linear(freq, zeta);
    let r = simulate_linear(acc, &spec, opts)?;
    Ok(spec.stiffness() * r.max_displacement)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImKind {
    Pga,
    Sa { freq: f64, zeta: f64 },
}

impl ImKind {
    pub fn name(&self) -> String {
        match self {
            ImKind::Pga => "pga".into(),
            ImKind::Sa { freq, zeta } => format!("sa_{freq}hz_{zeta}"),
        }
    }

    pub fn evaluate(&self, acc: &Accelerogram, opts: &SimOptions) -> Result<f64> {
        match *self {
            ImKind::Pga => Ok(pga(acc)),
            ImKind::Sa { freq, zeta } => spectral_accel(acc, freq, zeta, opts),
        }
    }
}

/// How the failure threshold `C` on the peak displacement is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Capacity {
    Fixed {
        value: f64,
    },
    /// Empirical quantile of the linear peak displacements over the pool.
    LinearQuantile {
        q: f64,
    },
}

/// Empirical quantile with linear interpolation between order statistics (type 7).
pub fn quantile_type7(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyPool);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(q));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn capacity_from_quantile(linear_displacements: &[f64], q: f64) -> Result<f64> {
    quantile_type7(linear_displacements, q)
}

impl Capacity {
    pub fn resolve(&self, linear_displacements: &[f64]) -> Result<f64> {
        match *self {
            Capacity::Fixed { value } => Ok(value),
            Capacity::LinearQuantile { q } => capacity_from_quantile(linear_displacements, q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub displacement: f64,
    pub failure: bool,
    pub im_values: Vec<(ImKind, f64)>,
}

/// Runs the configured oscillator and records the requested IMs.
pub fn label_signal(
    acc: &Accelerogram,
    spec: &OscillatorSpec,
    capacity: f64,
    ims: &[ImKind],
    opts: &SimOptions,
) -> Result<SimOutcome> {
    let r = if spec.hysteresis == Hysteresis::Linear {
        simulate_linear(acc, spec, opts)?
    } else {
        simulate_nonlinear(acc, spec, opts)?
    };
    let im_values = ims.iter().map(|k| Ok((*k, k.evaluate(acc, opts)?))).collect::<Result<_>>()?;
    Ok(SimOutcome { displacement: r.max_displacement, failure: r.max_displacement > capacity, im_values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pga_examples() {
        let a = Accelerogram::new(vec![1.0, -3.0, 2.0], 0.01).unwrap();
        assert_eq!(pga(&a), 3.0);
        assert_eq!(pga(&a.scaled(-2.0)), 6.0);
        assert_eq!(pga(&Accelerogram::new(vec![0.0; 5], 0.01).unwrap()), 0.0);
    }

    #[test]
    fn type7_quantile() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_type7(&v, 0.9).unwrap() - 90.1).abs() < 1e-12);
        assert_eq!(quantile_type7(&[0.3; 7], 0.9).unwrap(), 0.3);
        assert_eq!(Capacity::Fixed { value: 0.01 }.resolve(&[]).unwrap(), 0.01);
        assert_eq!(quantile_type7(&[], 0.5), Err(Error::EmptyPool));
    }

    #[test]
    fn text_round_trip() {
        let a = Accelerogram::new(vec![0.0, 0.25, -1.5e-3], 0.005).unwrap();
        let mut buf = Vec::new();
        a.write_text(&mut buf).unwrap();
        let b = Accelerogram::read_text(&buf[..]).unwrap();
        assert_eq!(a, b);
        assert!((a.duration() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_signals() {
        assert!(Accelerogram::new(vec![0.0], 0.0).is_err());
        assert!(Accelerogram::new(vec![f64::NAN], 0.1).is_err());
    }
}
