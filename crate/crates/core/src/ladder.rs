//! The conserved ladder of the cubic NLS: densities `w_n` and integrals
//! `I_n = integral w_n conj(phi)`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{derivative, derivative_energy, quadrature, WaveField};

/// Largest ladder index supported; `w_8` already needs a seventh derivative.
pub const MAX_LADDER_INDEX: u32 = 8;

const MINUS_I: Complex64 = Complex64 { re: 0.0, im: -1.0 };

fn check_index(n: u32) -> Result<()> {
    if (1..=MAX_LADDER_INDEX).contains(&n) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            index: n,
            min: 1,
            max: MAX_LADDER_INDEX,
        })
    }
}

/// `[w_1, ..., w_{n_max}]` with `w_1 = phi`, `w_2 = -i phi'` and
/// `w_{n+1} = -i w_n' + kappa conj(phi) sum_{k=1}^{n-1} w_k w_{n-k}`.
pub fn w_sequence(phi: &WaveField, n_max: u32, kappa: i32) -> Result<Vec<WaveField>> {
    check_index(n_max)?;
    let k = kappa as f64;
    let phi_bar = phi.conj();
    let mut w: Vec<WaveField> = Vec::with_capacity(n_max as usize);
    w.push(phi.clone());
    for n in 1..n_max as usize {
        // w[n] is w_{n+1}; w[i] is w_{i+1}.
        let mut next = derivative(&w[n - 1], 1)?.scale(MINUS_I);
        if n >= 2 {
            let len = phi.len();
            let mut conv = vec![Complex64::new(0.0, 0.0); len];
            for a in 1..n {
                let (left, right) = (&w[a - 1], &w[n - a - 1]);
                for (c, (x, y)) in conv
                    .iter_mut()
                    .zip(left.values().iter().zip(right.values()))
                {
                    *c += x * y;
                }
            }
            let coupling = WaveField::from_raw(*phi.grid(), conv).mul(&phi_bar)?;
            next = next.zip_with(&coupling, |d, c| d + c * k)?;
        }
        w.push(next);
    }
    Ok(w)
}

/// `I_n(phi) = integral w_n conj(phi) dx`.
pub fn conserved_integral(phi: &WaveField, n: u32, kappa: i32) -> Result<Complex64> {
    check_index(n)?;
    let w = w_sequence(phi, n, kappa)?;
    Ok(quadrature(&w[n as usize - 1].mul(&phi.conj())?))
}

/// All of `I_1 .. I_{n_max}` from one recursion.
pub fn conserved_integrals(phi: &WaveField, n_max: u32, kappa: i32) -> Result<Vec<Complex64>> {
    let phi_bar = phi.conj();
    w_sequence(phi, n_max, kappa)?
        .iter()
        .map(|w| Ok(quadrature(&w.mul(&phi_bar)?)))
        .collect()
}

/// Split `Re I_n` (odd `n`) into the leading Sobolev piece
/// `integral |d^{(n-1)/2} phi|^2` and the lower-order remainder.
pub fn structural_check(phi: &WaveField, n: u32, kappa: i32) -> Result<(f64, f64)> {
    if n.is_multiple_of(2) || n > 7 {
        return Err(Error::InvalidParams(format!(
            "structural check needs odd n <= 7, got {n}"
        )));
    }
    let total = conserved_integral(phi, n, kappa)?.re;
    let leading = derivative_energy(phi, (n - 1) / 2);
    Ok((leading, total - leading))
}

/// Drift tolerances by ladder index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TolerancePolicy {
    /// `n <= 3`
    pub low: f64,
    /// `4 <= n <= 6`
    pub mid: f64,
    /// `n = 7, 8`
    pub high: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            low: 1e-7,
            mid: 1e-5,
            high: 1e-3,
        }
    }
}

impl TolerancePolicy {
    pub fn for_index(&self, n: u32) -> f64 {
        match n {
            0..=3 => self.low,
            4..=6 => self.mid,
            _ => self.high,
        }
    }
}

/// Time series of `I_1 .. I_{n_max}` along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub kappa: i32,
    pub times: Vec<f64>,
    /// `values[n - 1][s]` is `I_n` at snapshot `s`.
    pub values: Vec<Vec<Complex64>>,
    /// Per `n`: `max_t |I_n(t) - I_n(0)| / max(1, |I_n(0)|)`.
    pub drift: Vec<f64>,
}

/// `max_s |v_s - v_0| / max(1, |v_0|)`.
pub fn relative_drift(series: &[Complex64]) -> f64 {
    let Some(first) = series.first() else {
        return 0.0;
    };
    let scale = first.norm().max(1.0);
    series
        .iter()
        .map(|v| (v - first).norm() / scale)
        .fold(0.0, f64::max)
}

pub fn ladder_report(
    trajectory: &[(f64, WaveField)],
    n_max: u32,
    kappa: i32,
) -> Result<LadderReport> {
    check_index(n_max)?;
    if trajectory.is_empty() {
        return Err(Error::InvalidParams("empty trajectory".into()));
    }
    let per_snapshot = trajectory
        .iter()
        .map(|(_, phi)| conserved_integrals(phi, n_max, kappa))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<Vec<Complex64>> = (0..n_max as usize)
        .map(|n| per_snapshot.iter().map(|row| row[n]).collect())
        .collect();
    let drift = values.iter().map(|s| relative_drift(s)).collect();
    Ok(LadderReport {
        kappa,
        times: trajectory.iter().map(|(t, _)| *t).collect(),
        values,
        drift,
    })
}

impl LadderReport {
    pub fn n_max(&self) -> u32 {
        self.values.len() as u32
    }

    pub fn series(&self, n: u32) -> &[Complex64] {
        &self.values[n as usize - 1]
    }

    pub fn drift(&self, n: u32) -> f64 {
        self.drift[n as usize - 1]
    }

    /// Indices whose drift exceeds the policy.
    pub fn failures(&self, policy: &TolerancePolicy) -> Vec<u32> {
        (1..=self.n_max())
            .filter(|&n| {
                self.drift(n).partial_cmp(&policy.for_index(n)) != Some(std::cmp::Ordering::Less)
            })
            .collect()
    }

    /// Columns `t, re_I1, im_I1, re_I2, ...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for n in 1..=self.n_max() {
            header.push(format!("re_I{n}"));
            header.push(format!("im_I{n}"));
        }
        w.write_record(&header)?;
        for (s, t) in self.times.iter().enumerate() {
            let mut row = vec![format_float(*t)];
            for series in &self.values {
                row.push(format_float(series[s].re));
                row.push(format_float(series[s].im));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Shortest round-trip representation, so reports are byte-stable.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nls::{gaussian_ic, soliton_ic};
    use crate::spectral::{make_grid, normalize};

    #[test]
    fn first_densities() {
        let g = make_grid(256, 20.0).unwrap();
        let phi = gaussian_ic(g, 0.8, 1.3, 1.0, 0.5);
        let w = w_sequence(&phi, 3, -1).unwrap();
        assert_eq!(w[0], phi);
        let w2 = derivative(&phi, 1).unwrap().scale(MINUS_I);
        assert_eq!(w[1], w2);
        // w_3 = -phi'' + kappa |phi|^2 phi
        let direct = derivative(&phi, 2)
            .unwrap()
            .scale(Complex64::new(-1.0, 0.0))
            .sub(&phi.abs_sq().mul(&phi).unwrap())
            .unwrap();
        assert!(w[2].max_abs_diff(&direct).unwrap() < 1e-10);
    }

    #[test]
    fn index_guards() {
        let g = make_grid(16, 1.0).unwrap();
        let phi = WaveField::zeros(g);
        assert!(w_sequence(&phi, 0, 1).is_err());
        assert!(w_sequence(&phi, 9, 1).is_err());
        assert!(conserved_integral(&phi, 9, 1).is_err());
        assert!(matches!(
            structural_check(&phi, 2, 1),
            Err(Error::InvalidParams(_))
        ));
        assert!(structural_check(&phi, 9, 1).is_err());
    }

    #[test]
    fn known_values() {
        let g = make_grid(512, 20.0).unwrap();
        let gauss = normalize(&gaussian_ic(g, 1.0, 1.0, 0.0, 0.0)).unwrap();
        assert!((conserved_integral(&gauss, 1, -1).unwrap() - 1.0).norm() < 1e-12);
        assert!(conserved_integral(&gauss, 2, -1).unwrap().norm() < 1e-10);

        let sech = soliton_ic(g, 1.0, 0.0, 0.0);
        let i3 = conserved_integral(&sech, 3, -1).unwrap();
        assert!((i3 - Complex64::new(-2.0 / 3.0, 0.0)).norm() < 1e-8, "{i3}");
    }

    #[test]
    fn global_phase_invariance() {
        let g = make_grid(256, 20.0).unwrap();
        let phi = gaussian_ic(g, 0.9, 1.1, 0.7, -1.0);
        let rotated = phi.scale(Complex64::from_polar(1.0, 0.83));
        let a = conserved_integrals(&phi, 8, 1).unwrap();
        let b = conserved_integrals(&rotated, 8, 1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() <= 1e-10 * (1.0 + x.norm()), "{x} vs {y}");
        }
    }

    #[test]
    fn structural_split() {
        let g = make_grid(512, 20.0).unwrap();
        let sech = soliton_ic(g, 1.0, 0.0, 0.0);
        let (lead, rest) = structural_check(&sech, 1, -1).unwrap();
        assert!((lead - 2.0).abs() < 1e-10);
        assert!(rest.abs() < 1e-10);
        let (lead, rest) = structural_check(&sech, 3, -1).unwrap();
        assert!((lead - 2.0 / 3.0).abs() < 1e-9);
        assert!((rest + 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn remainder_is_controlled_by_h1_data() {
        // For n = 3 the remainder is kappa * integral |phi|^4, and
        // Gagliardo-Nirenberg gives |.| <= |phi|_2^3 |phi'|_2.
        let g = make_grid(256, 20.0).unwrap();
        let mut last = 0.0;
        for step in 0..20 {
            let amp = 0.1 + step as f64 * 0.1;
            let phi = gaussian_ic(g, amp, 1.0, 0.0, 0.0);
            let (lead, rest) = structural_check(&phi, 3, 1).unwrap();
            let mass = conserved_integral(&phi, 1, 1).unwrap().re;
            let bound = mass.powf(1.5) * lead.sqrt();
            assert!(rest.abs() <= bound, "amp {amp}: {rest} > {bound}");
            assert!(rest.abs() > last);
            last = rest.abs();
        }
    }

    #[test]
    fn constant_trajectory_has_no_drift() {
        let g = make_grid(128, 20.0).unwrap();
        let phi = gaussian_ic(g, 1.0, 1.0, 0.0, 0.0);
        let traj: Vec<_> = (0..4).map(|s| (s as f64, phi.clone())).collect();
        let report = ladder_report(&traj, 6, -1).unwrap();
        assert!(report.drift.iter().all(|&d| d == 0.0));
        assert_eq!(report.times, vec![0.0, 1.0, 2.0, 3.0]);
        assert!(ladder_report(&[], 3, -1).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = make_grid(64, 20.0).unwrap();
        let phi = gaussian_ic(g, 1.0, 1.0, 0.0, 0.0);
        let report = ladder_report(&[(0.0, phi.clone()), (0.5, phi)], 2, 1).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,re_I1,im_I1,re_I2,im_I2"));
        assert_eq!(lines.count(), 2);
        let back: LadderReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn tolerance_policy_bands() {
        let p = TolerancePolicy::default();
        assert_eq!(p.for_index(3), 1e-7);
        assert_eq!(p.for_index(4), 1e-5);
        assert_eq!(p.for_index(6), 1e-5);
        assert_eq!(p.for_index(8), 1e-3);
    }
}
