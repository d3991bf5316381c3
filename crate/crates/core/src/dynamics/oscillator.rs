use serde::{Deserialize, Serialize};

use super::Accelerogram;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hysteresis {
    Linear,
    /// Bilinear with kinematic hardening.
    Bilinear,
}

/// Unit-mass oscillator `z̈ + 2ζω ż + f(z) = −s(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSpec {
    /// Natural frequency in Hz.
    pub freq: f64,
    pub zeta: f64,
    /// Yield displacement in m.
    pub yield_disp: f64,
    /// Post-yield stiffness as a fraction of the elastic stiffness.
    pub post_yield_ratio: f64,
    pub hysteresis: Hysteresis,
}

impl OscillatorSpec {
    /// 5 Hz, 2% damping, yield at 5 mm, post-yield stiffness 20% of elastic.
    pub fn reference() -> Self {
        Self { freq: 5.0, zeta: 0.02, yield_disp: 5e-3, post_yield_ratio: 0.2, hysteresis: Hysteresis::Bilinear }
    }

    pub fn linear(freq: f64, zeta: f64) -> Self {
        Self { freq, zeta, yield_disp: f64::INFINITY, post_yield_ratio: 1.0, hysteresis: Hysteresis::Linear }
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.freq
    }

    pub fn stiffness(&self) -> f64 {
        self.omega().powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.freq > 0.0
            && self.freq.is_finite()
            && self.zeta > 0.0
            && self.zeta < 1.0
            && self.yield_disp > 0.0
            && (0.0..=1.0).contains(&self.post_yield_ratio);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid oscillator {self:?}")))
        }
    }

    /// Restoring force at displacement `z` given plastic offset `zp`.
    pub fn restoring_force(&self, z: f64, zp: f64) -> f64 {
        let k = self.stiffness();
        match self.hysteresis {
            Hysteresis::Linear => k * z,
            Hysteresis::Bilinear => {
                let ke = (1.0 - self.post_yield_ratio) * k;
                self.post_yield_ratio * k * z + ke * (z - zp).clamp(-self.yield_disp, self.yield_disp)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Integration steps per signal sample; the excitation is interpolated linearly.
    pub substeps: usize,
    /// Divergence guard as a multiple of the yield displacement (or of the peak static
    /// response for the linear model).
    pub blowup_factor: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { substeps: 8, blowup_factor: 1e3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub max_displacement: f64,
    /// Cumulative hysteretic energy per unit mass.
    pub plastic_dissipation: f64,
}

/// Newmark average-acceleration stepper with an exact return map for the bilinear spring.
#[derive(Debug, Clone)]
pub struct NewmarkOscillator {
    spec: OscillatorSpec,
    h: f64,
    k_eff: f64,
    c: f64,
    pub z: f64,
    pub v: f64,
    pub a: f64,
    pub zp: f64,
    pub dissipation: f64,
}

impl NewmarkOscillator {
    /// Starts from `(z0, v0)` at rest plastically, with ground acceleration `s0`.
    pub fn new(spec: OscillatorSpec, h: f64, z0: f64, v0: f64, s0: f64) -> Self {
        let c = 2.0 * spec.zeta * spec.omega();
        let a = -s0 - c * v0 - spec.restoring_force(z0, 0.0);
        Self { spec, h, k_eff: 4.0 / (h * h) + 2.0 * c / h, c, z: z0, v: v0, a, zp: 0.0, dissipation: 0.0 }
    }

    /// Advances one step to ground acceleration `s1`; returns the plastic work of the step.
    pub fn step(&mut self, s1: f64) -> f64 {
        let (h, c, spec) = (self.h, self.c, &self.spec);
        let rhs = -s1 + (4.0 / (h * h)) * self.z + (4.0 / h) * self.v + self.a + c * ((2.0 / h) * self.z + self.v);
        let k = spec.stiffness();
        let mut work = 0.0;
        let z1 = match spec.hysteresis {
            Hysteresis::Linear => rhs / (self.k_eff + k),
            Hysteresis::Bilinear => {
                let ke = (1.0 - spec.post_yield_ratio) * k;
                let y = spec.yield_disp;
                let trial = (rhs + ke * self.zp) / (self.k_eff + k);
                if (trial - self.zp).abs() <= y {
                    trial
                } else {
                    let sigma = (trial - self.zp).signum();
                    let z = (rhs - ke * sigma * y) / (self.k_eff + spec.post_yield_ratio * k);
                    let zp_new = z - sigma * y;
                    // spring force ke·σ·Y times the plastic slip
                    work = ke * sigma * y * (zp_new - self.zp);
                    self.zp = zp_new;
                    z
                }
            }
        };
        let v1 = (2.0 / h) * (z1 - self.z) - self.v;
        let a1 = (4.0 / (h * h)) * (z1 - self.z) - (4.0 / h) * self.v - self.a;
        self.z = z1;
        self.v = v1;
        self.a = a1;
        self.dissipation += work;
        work
    }
}

fn run(acc: &Accelerogram, spec: &OscillatorSpec, opts: &SimOptions) -> Result<Response> {
    spec.validate()?;
    let limit = 1.0 / (20.0 * spec.freq);
    if acc.dt > limit {
        return Err(Error::Resolution { dt: acc.dt, limit });
    }
    let m = opts.substeps.max(1);
    let h = acc.dt / m as f64;
    let s = &acc.samples;
    let Some(&s0) = s.first() else {
        return Ok(Response { max_displacement: 0.0, plastic_dissipation: 0.0 });
    };
    let guard = match spec.hysteresis {
        Hysteresis::Bilinear => opts.blowup_factor * spec.yield_disp,
        Hysteresis::Linear => {
            let peak = s.iter().fold(0.0f64, |p, x| p.max(x.abs()));
            // a linear oscillator cannot exceed its resonant amplification by more than this
            opts.blowup_factor * peak / spec.stiffness() / spec.zeta
        }
    };
    let mut osc = NewmarkOscillator::new(*spec, h, 0.0, 0.0, s0);
    let mut dmax = 0.0f64;
    for (i, w) in s.windows(2).enumerate() {
        for j in 1..=m {
            let t = j as f64 / m as f64;
            let work = osc.step(w[0] + t * (w[1] - w[0]));
            debug_assert!(work >= 0.0, "negative plastic work {work}");
        }
        dmax = dmax.max(osc.z.abs());
        if !osc.z.is_finite() || dmax > guard {
            return Err(Error::Instability { step: i + 1, displacement: osc.z });
        }
    }
    Ok(Response { max_displacement: dmax, plastic_dissipation: osc.dissipation })
}

/// Linear elastic response (restoring force `k·z`) of the given frequency and damping.
pub fn simulate_linear(acc: &Accelerogram, spec: &OscillatorSpec, opts: &SimOptions) -> Result<Response> {
    run(acc, &OscillatorSpec { hysteresis: Hysteresis::Linear, ..*spec }, opts)
}

/// Bilinear kinematic-hardening response.
pub fn simulate_nonlinear(acc: &Accelerogram, spec: &OscillatorSpec, opts: &SimOptions) -> Result<Response> {
    run(acc, &OscillatorSpec { hysteresis: Hysteresis::Bilinear, ..*spec }, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, secs: f64, dt: f64) -> Accelerogram {
        let n = (secs / dt) as usize + 1;
        let w = 2.0 * std::f64::consts::PI * freq;
        Accelerogram::new((0..n).map(|i| amp * (w * i as f64 * dt).sin()).collect(), dt).unwrap()
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let a = Accelerogram::new(vec![0.0; 400], 0.005).unwrap();
        let spec = OscillatorSpec::reference();
        let r = simulate_nonlinear(&a, &spec, &SimOptions::default()).unwrap();
        assert_eq!(r.max_displacement, 0.0);
        assert_eq!(simulate_linear(&a, &spec, &SimOptions::default()).unwrap().max_displacement, 0.0);
    }

    #[test]
    fn pushover_force() {
        let spec = OscillatorSpec::reference();
        let y = spec.yield_disp;
        // monotone loading: the slip equals z − Y beyond first yield
        let f = spec.restoring_force(2.0 * y, y);
        let expected = spec.stiffness() * y * 1.2;
        assert!((f - expected).abs() < 1e-12);
        assert!((f - 5.922).abs() < 1e-3, "{f}");
    }

    #[test]
    fn free_vibration_matches_closed_form() {
        let spec = OscillatorSpec::reference();
        let z0 = spec.yield_disp / 10.0;
        let h = 2e-5;
        let w = spec.omega();
        let wd = w * (1.0 - spec.zeta * spec.zeta).sqrt();
        let mut osc = NewmarkOscillator::new(spec, h, z0, 0.0, 0.0);
        let steps = (10.0 / spec.freq / h).round() as usize;
        let mut worst = 0.0f64;
        for i in 1..=steps {
            osc.step(0.0);
            let t = i as f64 * h;
            let exact = z0 * (-spec.zeta * w * t).exp() * ((wd * t).cos() + spec.zeta * w / wd * (wd * t).sin());
            worst = worst.max((osc.z - exact).abs() / z0);
        }
        assert!(worst < 1e-4, "{worst}");
        assert_eq!(osc.dissipation, 0.0);
    }

    #[test]
    fn resonant_steady_state() {
        let a = sine(5.0, 1.0, 60.0, 0.005);
        let psa = super::super::spectral_accel(&a, 5.0, 0.02, &SimOptions::default()).unwrap();
        assert!((psa - 25.0).abs() < 0.05 * 25.0, "{psa}");
    }

    #[test]
    fn elastic_runs_agree() {
        let spec = OscillatorSpec::reference();
        let a = sine(3.0, 0.3, 10.0, 0.005);
        let lin = simulate_linear(&a, &spec, &SimOptions::default()).unwrap();
        assert!(lin.max_displacement < spec.yield_disp);
        let nl = simulate_nonlinear(&a, &spec, &SimOptions::default()).unwrap();
        assert!(((nl.max_displacement - lin.max_displacement) / lin.max_displacement).abs() < 1e-8);
        assert_eq!(nl.plastic_dissipation, 0.0);
    }

    #[test]
    fn yielding_dissipates() {
        let spec = OscillatorSpec::reference();
        let a = sine(5.0, 3.0, 10.0, 0.005);
        let r = simulate_nonlinear(&a, &spec, &SimOptions::default()).unwrap();
        assert!(r.plastic_dissipation > 0.0);
        assert!(r.max_displacement > spec.yield_disp);
    }

    #[test]
    fn resolution_guard() {
        let a = Accelerogram::new(vec![0.0; 10], 0.02).unwrap();
        assert!(matches!(
            simulate_linear(&a, &OscillatorSpec::reference(), &SimOptions::default()),
            Err(Error::Resolution { .. })
        ));
    }
}
