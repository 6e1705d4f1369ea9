//! Periodic grids and one-particle wavefunctions sampled on them.
//!
//! The real line is replaced by the box `[-L, L)` with `n` equispaced points
//! `x_m = -L + m dx`. Derivatives are taken spectrally, integrals by the
//! periodic Riemann sum.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order accepted by [`derivative`].
pub const MAX_DERIVATIVE_ORDER: u32 = 12;

/// Smallest accepted number of grid points.
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n_points: usize,
    half_length: f64,
    dx: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, half_length: f64) -> Result<Self> {
        if n_points < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} is below the minimum of {MIN_POINTS}"
            )));
        }
        if !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} is not a power of two"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half_length = {half_length} must be positive and finite"
            )));
        }
        Ok(GridSpec {
            n_points,
            half_length,
            dx: 2.0 * half_length / n_points as f64,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Sample location `x_m = -L + m dx`.
    pub fn point(&self, m: usize) -> f64 {
        -self.half_length + m as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |m| self.point(m))
    }

    /// Angular frequency attached to FFT bin `k`, i.e. `pi m / L` with
    /// `m` in `-n/2 .. n/2 - 1`.
    pub fn frequency(&self, bin: usize) -> f64 {
        let n = self.n_points as isize;
        let k = bin as isize;
        let m = if k < n / 2 { k } else { k - n };
        std::f64::consts::PI * m as f64 / self.half_length
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.frequency(k)).collect()
    }
}

/// Build a grid of `n_points` (a power of two, at least 16) on `[-L, L)`.
pub fn make_grid(n_points: usize, half_length: f64) -> Result<GridSpec> {
    GridSpec::new(n_points, half_length)
}

/// Complex samples of a one-particle wavefunction.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: GridSpec,
    values: Vec<Complex64>,
}

impl WaveField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        if let Some(m) = values
            .iter()
            .position(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(Error::NonFinite(format!("sample {m} is not finite")));
        }
        Ok(WaveField { grid, values })
    }

    /// Samples `f(x_m)` at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.points().map(f).collect();
        WaveField { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        WaveField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n_points()],
        }
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points());
        WaveField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn same_grid(&self, other: &WaveField) -> bool {
        self.grid == other.grid
    }

    fn check_grid(&self, other: &WaveField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn conj(&self) -> WaveField {
        self.map(|v| v.conj())
    }

    pub fn scale(&self, c: Complex64) -> WaveField {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> WaveField {
        WaveField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &WaveField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<WaveField> {
        self.check_grid(other)?;
        Ok(WaveField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &WaveField) -> Result<WaveField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &WaveField) -> Result<WaveField> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &WaveField) -> Result<WaveField> {
        self.zip_with(other, |a, b| a * b)
    }

    /// Pointwise squared modulus as a (real-valued) field.
    pub fn abs_sq(&self) -> WaveField {
        self.map(|v| Complex64::new(v.norm_sqr(), 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest pointwise distance to `other`.
    pub fn max_abs_diff(&self, other: &WaveField) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Unnormalized forward DFT of the samples.
pub(crate) fn spectrum(f: &WaveField) -> Vec<Complex64> {
    let (fwd, _) = fft_pair(f.len());
    let mut buf = f.values.clone();
    fwd.process(&mut buf);
    buf
}

/// Multiply the spectrum of `f` by `multiplier(bin)` and transform back.
pub(crate) fn apply_fourier_multiplier(
    f: &WaveField,
    multiplier: impl Fn(usize) -> Complex64,
) -> WaveField {
    let n = f.len();
    let (fwd, inv) = fft_pair(n);
    let mut buf = f.values.clone();
    fwd.process(&mut buf);
    let norm = 1.0 / n as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= multiplier(k) * norm;
    }
    inv.process(&mut buf);
    WaveField::from_raw(f.grid, buf)
}

/// Spectral derivative of the given order.
pub fn derivative(f: &WaveField, order: u32) -> Result<WaveField> {
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::DerivativeOrder(order));
    }
    if order == 0 {
        return Ok(f.clone());
    }
    let grid = f.grid;
    Ok(apply_fourier_multiplier(f, |k| {
        Complex64::new(0.0, grid.frequency(k)).powu(order)
    }))
}

/// Periodic Riemann sum `dx * sum_m f_m`.
pub fn quadrature(f: &WaveField) -> Complex64 {
    f.values.iter().sum::<Complex64>() * f.grid.dx
}

/// `integral of f * conj(g)`.
pub fn inner(f: &WaveField, g: &WaveField) -> Result<Complex64> {
    f.check_grid(g)?;
    Ok(inner_unchecked(f.values(), g.values(), f.grid.dx))
}

pub(crate) fn inner_unchecked(f: &[Complex64], g: &[Complex64], dx: f64) -> Complex64 {
    f.iter()
        .zip(g)
        .map(|(a, b)| a * b.conj())
        .sum::<Complex64>()
        * dx
}

pub fn l2_norm(f: &WaveField) -> f64 {
    (f.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * f.grid.dx).sqrt()
}

/// `( sum_m (1 + xi_m^2)^s |fhat_m|^2 * 2L / n^2 )^(1/2)`; equals the L2 norm at `s = 0`.
pub fn sobolev_norm(f: &WaveField, s: f64) -> f64 {
    let grid = f.grid;
    let n = grid.n_points() as f64;
    let weight = 2.0 * grid.half_length() / (n * n);
    (spectrum(f)
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let xi = grid.frequency(k);
            (1.0 + xi * xi).powf(s) * c.norm_sqr()
        })
        .sum::<f64>()
        * weight)
        .sqrt()
}

/// Homogeneous energy `integral |d^r f|^2`, evaluated in frequency space.
pub fn derivative_energy(f: &WaveField, r: u32) -> f64 {
    let grid = f.grid;
    let n = grid.n_points() as f64;
    let weight = 2.0 * grid.half_length() / (n * n);
    spectrum(f)
        .iter()
        .enumerate()
        .map(|(k, c)| grid.frequency(k).powi(2 * r as i32) * c.norm_sqr())
        .sum::<f64>()
        * weight
}

/// Rescale to unit L2 norm.
pub fn normalize(f: &WaveField) -> Result<WaveField> {
    let norm = l2_norm(f);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroField);
    }
    Ok(f.scale(Complex64::new(1.0 / norm, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn gaussian(grid: GridSpec) -> WaveField {
        WaveField::from_fn(grid, |x| c((-x * x / 2.0).exp()))
    }

    #[test]
    fn grid_spacing() {
        assert_eq!(make_grid(256, 20.0).unwrap().dx(), 0.15625);
        assert_eq!(make_grid(16, 1.0).unwrap().dx(), 0.125);
        let g = make_grid(512, 20.0).unwrap();
        assert!((g.dx() * 512.0 - 40.0).abs() <= f64::EPSILON * 40.0);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(make_grid(100, 20.0), Err(Error::InvalidGrid(_))));
        assert!(make_grid(8, 20.0).is_err());
        assert!(make_grid(0, 20.0).is_err());
        assert!(make_grid(64, 0.0).is_err());
        assert!(make_grid(64, -1.0).is_err());
        assert!(make_grid(64, f64::NAN).is_err());
    }

    #[test]
    fn frequencies_cover_symmetric_range() {
        let g = make_grid(16, 1.0).unwrap();
        let xi = g.frequencies();
        assert_eq!(xi[0], 0.0);
        assert_eq!(xi[1], PI);
        assert_eq!(xi[8], -8.0 * PI);
        assert_eq!(xi[15], -PI);
    }

    #[test]
    fn derivative_of_fourier_mode() {
        let g = make_grid(64, 20.0).unwrap();
        let k = PI / 20.0;
        let f = WaveField::from_fn(g, |x| Complex64::new(0.0, k * x).exp());
        let d = derivative(&f, 1).unwrap();
        let expected = f.scale(Complex64::new(0.0, k));
        assert!(d.max_abs_diff(&expected).unwrap() < 1e-13);
    }

    #[test]
    fn derivative_order_zero_is_identity() {
        let g = make_grid(64, 20.0).unwrap();
        let f = gaussian(g);
        assert_eq!(derivative(&f, 0).unwrap(), f);
    }

    #[test]
    fn second_derivative_of_gaussian() {
        let g = make_grid(256, 20.0).unwrap();
        let f = gaussian(g);
        let d2 = derivative(&f, 2).unwrap();
        let exact = WaveField::from_fn(g, |x| c((x * x - 1.0) * (-x * x / 2.0).exp()));
        assert!(d2.max_abs_diff(&exact).unwrap() < 1e-10);
    }

    #[test]
    fn derivative_order_guard() {
        let g = make_grid(16, 1.0).unwrap();
        assert!(derivative(&WaveField::zeros(g), 12).is_ok());
        assert!(matches!(
            derivative(&WaveField::zeros(g), 13),
            Err(Error::DerivativeOrder(13))
        ));
    }

    #[test]
    fn quadrature_examples() {
        let g = make_grid(16, 1.0).unwrap();
        let one = WaveField::from_fn(g, |_| c(1.0));
        assert!((quadrature(&one) - c(2.0)).norm() < 1e-15);

        let g = make_grid(512, 20.0).unwrap();
        let sech2 = WaveField::from_fn(g, |x| c(1.0 / x.cosh().powi(2)));
        assert!((quadrature(&sech2) - c(2.0)).norm() < 1e-12);

        // x_0 = -L has no mirror partner; odd test fields vanish there.
        let odd = WaveField::from_fn(g, |x| c(x * (-x * x).exp()));
        assert!(quadrature(&odd).norm() < 1e-14);
    }

    #[test]
    fn inner_examples() {
        let g = make_grid(128, 20.0).unwrap();
        let e1 = WaveField::from_fn(g, |x| Complex64::new(0.0, PI * x / 20.0).exp());
        let e2 = WaveField::from_fn(g, |x| Complex64::new(0.0, 2.0 * PI * x / 20.0).exp());
        assert!(inner(&e1, &e2).unwrap().norm() < 1e-12);

        let f = normalize(&gaussian(g)).unwrap();
        let ff = inner(&f, &f).unwrap();
        assert!((ff - c(1.0)).norm() < 1e-12);
        assert!(ff.im == 0.0 && ff.re >= 0.0);

        let other = make_grid(64, 20.0).unwrap();
        assert!(matches!(
            inner(&f, &WaveField::zeros(other)),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = make_grid(256, 20.0).unwrap();
        let f = gaussian(g);
        assert!((sobolev_norm(&f, 0.0) - inner(&f, &f).unwrap().re.sqrt()).abs() < 1e-12);

        let xi = 3.0 * PI / 20.0;
        let mode = WaveField::from_fn(g, |x| Complex64::new(0.0, xi * x).exp());
        let expected = (40.0f64).sqrt() * (1.0 + xi * xi).sqrt();
        assert!((sobolev_norm(&mode, 1.0) - expected).abs() < 1e-12 * expected);

        // Independent route: two quadratures with the closed-form derivative.
        let fprime = WaveField::from_fn(g, |x| c(-x * (-x * x / 2.0).exp()));
        let h1 = (l2_norm(&f).powi(2) + l2_norm(&fprime).powi(2)).sqrt();
        assert!((sobolev_norm(&f, 1.0) - h1).abs() < 1e-10);
    }

    #[test]
    fn derivative_energy_matches_quadrature() {
        let g = make_grid(256, 20.0).unwrap();
        let f = gaussian(g);
        let d = derivative(&f, 1).unwrap();
        let direct = inner(&d, &d).unwrap().re;
        assert!((derivative_energy(&f, 1) - direct).abs() < 1e-12);
        assert!((derivative_energy(&f, 0) - l2_norm(&f).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn normalize_examples() {
        let g = make_grid(512, 20.0).unwrap();
        let sech = WaveField::from_fn(g, |x| c(1.0 / x.cosh()));
        let n = normalize(&sech).unwrap();
        let ratio = n.values()[256].re / sech.values()[256].re;
        assert!((ratio - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((l2_norm(&n) - 1.0).abs() < 1e-12);

        let again = normalize(&n).unwrap();
        assert!(again.max_abs_diff(&n).unwrap() < 1e-12);

        assert!(matches!(
            normalize(&WaveField::zeros(g)),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn wavefield_rejects_non_finite() {
        let g = make_grid(16, 1.0).unwrap();
        let mut v = vec![c(0.0); 16];
        v[3] = c(f64::NAN);
        assert!(matches!(WaveField::new(g, v), Err(Error::NonFinite(_))));
        assert!(WaveField::new(g, vec![c(0.0); 15]).is_err());
    }
}
