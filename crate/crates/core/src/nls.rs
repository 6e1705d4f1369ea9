//! Strang split-step integrator for `i phi_t + phi_xx = 2 kappa |phi|^2 phi`.
//!
//! With this sign convention the stationary soliton `sech(x) e^{it}` solves the
//! equation for `kappa = -1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{apply_fourier_multiplier, GridSpec, WaveField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveParams {
    pub kappa: i32,
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
}

impl Default for EvolveParams {
    fn default() -> Self {
        EvolveParams {
            kappa: -1,
            dt: 1e-3,
            t_final: 1.0,
            record_every: 100,
        }
    }
}

impl EvolveParams {
    pub fn validate(&self) -> Result<()> {
        if self.kappa != 1 && self.kappa != -1 {
            return Err(Error::InvalidParams(format!(
                "kappa must be +1 or -1, got {}",
                self.kappa
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::InvalidParams(format!(
                "t_final = {} must be positive",
                self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParams("record_every must be positive".into()));
        }
        let ratio = self.t_final / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParams(format!(
                "t_final / dt = {ratio} is not an integer step count"
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Exact free flow `fhat(xi) -> exp(-i xi^2 t) fhat(xi)`.
pub fn kinetic_step(f: &WaveField, t: f64) -> WaveField {
    if t == 0.0 {
        return f.clone();
    }
    let grid = *f.grid();
    apply_fourier_multiplier(f, |k| {
        let xi = grid.frequency(k);
        Complex64::from_polar(1.0, -xi * xi * t)
    })
}

/// Exact flow of `i phi_t = 2 kappa |phi|^2 phi`: a pointwise phase rotation.
pub fn nonlinear_step(f: &WaveField, dt: f64, kappa: i32) -> WaveField {
    if dt == 0.0 {
        return f.clone();
    }
    let k = kappa as f64;
    f.map(|v| v * Complex64::from_polar(1.0, -2.0 * k * v.norm_sqr() * dt))
}

/// One symmetric step `K(dt/2) N(dt) K(dt/2)`. A negative `dt` inverts a
/// forward step of the same size.
pub fn strang_step(f: &WaveField, dt: f64, kappa: i32) -> WaveField {
    let half = kinetic_step(f, 0.5 * dt);
    let mid = nonlinear_step(&half, dt, kappa);
    kinetic_step(&mid, 0.5 * dt)
}

/// A recorded trajectory: `(t, phi(t))` pairs in increasing time.
pub type Trajectory = Vec<(f64, WaveField)>;

/// Integrate from `f0`, recording the initial state, every `record_every`
/// steps, and the final state.
pub fn evolve(f0: &WaveField, p: &EvolveParams) -> Result<Trajectory> {
    p.validate()?;
    if !f0.is_finite() {
        return Err(Error::NonFinite("initial data".into()));
    }
    let n_steps = p.n_steps();
    let mut out = Vec::with_capacity(n_steps / p.record_every + 2);
    out.push((0.0, f0.clone()));
    let mut state = f0.clone();
    for step in 1..=n_steps {
        state = strang_step(&state, p.dt, p.kappa);
        if step % p.record_every == 0 || step == n_steps {
            if !state.is_finite() {
                return Err(Error::NonFinite(format!(
                    "state blew up at step {step} (t = {})",
                    step as f64 * p.dt
                )));
            }
            out.push((step as f64 * p.dt, state.clone()));
        }
    }
    Ok(out)
}

/// Samples of `eta sech(eta (x - x0)) exp(i v x / 2)`.
///
/// The tails at `x = +-L` should be negligible; [`soliton_tail`] reports how
/// large they are.
pub fn soliton_ic(grid: GridSpec, eta: f64, velocity: f64, x0: f64) -> WaveField {
    WaveField::from_fn(grid, |x| {
        Complex64::from_polar(eta / (eta * (x - x0)).cosh(), 0.5 * velocity * x)
    })
}

/// Largest modulus of the soliton profile at the two box edges.
pub fn soliton_tail(grid: GridSpec, eta: f64, x0: f64) -> f64 {
    let l = grid.half_length();
    let edge = |x: f64| eta / (eta * (x - x0)).cosh();
    edge(-l).max(edge(l))
}

/// Samples of `amplitude * exp(-(x - x0)^2 / (2 width^2)) exp(i v x / 2)`.
pub fn gaussian_ic(
    grid: GridSpec,
    amplitude: f64,
    width: f64,
    velocity: f64,
    x0: f64,
) -> WaveField {
    WaveField::from_fn(grid, |x| {
        let r = (x - x0) / width;
        Complex64::from_polar(amplitude * (-0.5 * r * r).exp(), 0.5 * velocity * x)
    })
}
