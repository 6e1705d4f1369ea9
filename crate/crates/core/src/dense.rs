//! Brute-force kernels on small grids.
//!
//! A [`DenseKernel`] stores every value `gamma(x_1..x_k; x'_1..x'_k)` with the
//! unprimed axes first, then the primed axes, both in `live_labels` order.
//! Primitives act directly on the tensor: derivatives through an explicit
//! DFT differentiation matrix, traces and collisions through diagonal
//! restriction with the delta discretized as `Kronecker / dx`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{OperatorExpr, Primitive, Slot};
use crate::separable::{apply_expr, apply_term, SeparableSum};
use crate::spectral::GridSpec;

/// Maximum number of tensor entries.
pub const MAX_ENTRIES: u128 = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseKernel {
    grid: GridSpec,
    live_labels: Vec<Slot>,
    values: Vec<Complex64>,
}

fn entry_count(n_points: usize, k: usize) -> u128 {
    (n_points as u128).pow(2 * k as u32)
}

fn guard(n_points: usize, k: usize) -> Result<usize> {
    let entries = entry_count(n_points, k);
    if entries > MAX_ENTRIES {
        return Err(Error::TooLarge(entries));
    }
    Ok(entries as usize)
}

/// Check the memory guard for a `k`-particle kernel on `grid`.
pub fn check_size(grid: &GridSpec, k: usize) -> Result<()> {
    guard(grid.n_points(), k).map(|_| ())
}

impl DenseKernel {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn live_labels(&self) -> &[Slot] {
        &self.live_labels
    }

    pub fn particles(&self) -> usize {
        self.live_labels.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    fn axis_of(&self, a: Slot) -> Result<usize> {
        self.live_labels
            .iter()
            .position(|&l| l == a)
            .ok_or(Error::DeadSlot(a))
    }

    /// Row-major stride of axis `axis` in a tensor with `n_axes` axes.
    fn stride(&self, axis: usize, n_axes: usize) -> usize {
        self.grid.n_points().pow((n_axes - 1 - axis) as u32)
    }

    /// Value at unprimed indices `x` and primed indices `xp`.
    pub fn get(&self, x: &[usize], xp: &[usize]) -> Complex64 {
        let n = self.grid.n_points();
        let idx = x.iter().chain(xp).fold(0, |acc, &i| acc * n + i);
        self.values[idx]
    }

    /// Sum over the full diagonal `x = x'`, times `dx^k`.
    pub fn trace(&self) -> Complex64 {
        let n = self.grid.n_points();
        let k = self.particles();
        let mut total = Complex64::new(0.0, 0.0);
        let mut x = vec![0usize; k];
        for flat in 0..n.pow(k as u32) {
            let mut rem = flat;
            for i in (0..k).rev() {
                x[i] = rem % n;
                rem /= n;
            }
            total += self.get(&x, &x);
        }
        total * self.grid.dx().powi(k as i32)
    }

    /// `max |K(x, x') - conj(K(x', x))|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.grid.n_points();
        let k = self.particles();
        let mut worst: f64 = 0.0;
        let mut digits = vec![0usize; 2 * k];
        for flat in 0..self.values.len() {
            let mut rem = flat;
            for i in (0..2 * k).rev() {
                digits[i] = rem % n;
                rem /= n;
            }
            let (x, xp) = digits.split_at(k);
            let swapped = self.get(xp, x).conj();
            worst = worst.max((self.values[flat] - swapped).norm());
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &DenseKernel) -> Result<f64> {
        if self.grid != other.grid || self.live_labels != other.live_labels {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// `sum_kernels weight * outer(u_1, .., u_k, conj(v_1), .., conj(v_k))`.
pub fn densify(s: &SeparableSum) -> Result<DenseKernel> {
    let grid = *s.grid();
    let n = grid.n_points();
    let labels: Vec<Slot> = s.labels().iter().copied().collect();
    let k = labels.len();
    let size = guard(n, k)?;
    let mut values = vec![Complex64::new(0.0, 0.0); size];
    for kernel in s.kernels() {
        let mut factors: Vec<Vec<Complex64>> = Vec::with_capacity(2 * k);
        for a in &labels {
            factors.push(kernel.slots[a].unprimed.values().to_vec());
        }
        for a in &labels {
            factors.push(
                kernel.slots[a]
                    .primed
                    .values()
                    .iter()
                    .map(|v| v.conj())
                    .collect(),
            );
        }
        // Build the outer product one axis at a time.
        let mut outer = vec![kernel.weight];
        for f in &factors {
            let mut next = Vec::with_capacity(outer.len() * n);
            for &o in &outer {
                next.extend(f.iter().map(|&v| o * v));
            }
            outer = next;
        }
        for (dst, src) in values.iter_mut().zip(&outer) {
            *dst += src;
        }
    }
    Ok(DenseKernel {
        grid,
        live_labels: labels,
        values,
    })
}

/// Spectral first-derivative matrix built from explicit DFT sums:
/// `D[m][l] = (1/n) sum_b (i xi_b) exp(2 pi i b (m - l) / n)`.
pub fn differentiation_matrix(grid: &GridSpec) -> Vec<Complex64> {
    let n = grid.n_points();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for m in 0..n {
        for l in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..n {
                let phase = 2.0 * std::f64::consts::PI * (b * ((m + n - l) % n)) as f64 / n as f64;
                acc += Complex64::new(0.0, grid.frequency(b)) * Complex64::from_polar(1.0, phase);
            }
            out[m * n + l] = acc / n as f64;
        }
    }
    out
}

fn decode(mut flat: usize, n: usize, digits: &mut [usize]) {
    for d in digits.iter_mut().rev() {
        *d = flat % n;
        flat /= n;
    }
}

pub fn apply_primitive_dense(p: &Primitive, d: &DenseKernel) -> Result<DenseKernel> {
    let n = d.grid.n_points();
    let k = d.particles();
    let axes = 2 * k;
    match *p {
        Primitive::Deriv(a) => {
            let axis = d.axis_of(a)?;
            let dmat = differentiation_matrix(&d.grid);
            let stride = d.stride(axis, axes);
            let mut values = vec![Complex64::new(0.0, 0.0); d.values.len()];
            let mut digits = vec![0usize; axes];
            for (flat, out) in values.iter_mut().enumerate() {
                decode(flat, n, &mut digits);
                let m = digits[axis];
                let fiber_start = flat - m * stride;
                *out = (0..n)
                    .map(|l| dmat[m * n + l] * d.values[fiber_start + l * stride])
                    .sum();
            }
            Ok(DenseKernel {
                grid: d.grid,
                live_labels: d.live_labels.clone(),
                values,
            })
        }
        Primitive::PTrace(a) => {
            let axis = d.axis_of(a)?;
            reduce(d, axis, a, |get, _| {
                (0..n).map(get).sum::<Complex64>() * d.grid.dx()
            })
        }
        Primitive::Collision { target, source } => {
            if target == source {
                return Err(Error::InvalidOperator(format!(
                    "{p} collides a slot with itself"
                )));
            }
            let target_axis = d.axis_of(target)?;
            let axis = d.axis_of(source)?;
            // x_source = x'_source = x_target: two deltas against two integrals.
            reduce(d, axis, source, |get, fixed| get(fixed(target_axis)))
        }
    }
}

/// Remove the unprimed/primed axis pair of `label` (unprimed axis `axis`).
/// `combine(get, fixed)` receives `get(m)` = input value with both removed
/// axes set to `m`, and `fixed(input_axis)` = the output index on that axis.
fn reduce(
    d: &DenseKernel,
    axis: usize,
    label: Slot,
    combine: impl Fn(&dyn Fn(usize) -> Complex64, &dyn Fn(usize) -> usize) -> Complex64,
) -> Result<DenseKernel> {
    let n = d.grid.n_points();
    let k = d.particles();
    let in_axes = 2 * k;
    let out_axes = 2 * (k - 1);
    let live_labels: Vec<Slot> = d
        .live_labels
        .iter()
        .copied()
        .filter(|&l| l != label)
        .collect();
    let size = n.pow(out_axes as u32);
    let primed_axis = k + axis;
    let mut values = Vec::with_capacity(size);
    let mut out_digits = vec![0usize; out_axes];
    let mut in_digits = vec![0usize; in_axes];
    for flat in 0..size {
        decode(flat, n, &mut out_digits);
        // Map output digits to input axes, skipping the removed pair.
        let mut o = 0;
        for (i, slot) in in_digits.iter_mut().enumerate() {
            if i == axis || i == primed_axis {
                continue;
            }
            *slot = out_digits[o];
            o += 1;
        }
        let base = in_digits.clone();
        let get = |m: usize| {
            let mut idx = 0;
            for (i, &v) in base.iter().enumerate() {
                let v = if i == axis || i == primed_axis { m } else { v };
                idx = idx * n + v;
            }
            d.values[idx]
        };
        let fixed = |i: usize| base[i];
        values.push(combine(&get, &fixed));
    }
    Ok(DenseKernel {
        grid: d.grid,
        live_labels,
        values,
    })
}

/// Largest entrywise gap between `densify(apply_expr(e, s))` and the dense
/// pipeline applied to `densify(s)`.
pub fn oracle_check(e: &OperatorExpr, s: &SeparableSum, kappa: i32) -> Result<f64> {
    check_size(s.grid(), s.labels().len())?;
    let separable = densify(&apply_expr(e, s, kappa)?)?;
    let start = densify(s)?;
    let mut acc: Option<DenseKernel> = None;
    for t in &e.terms {
        let piece = apply_term_dense(t, &start, kappa)?;
        acc = Some(match acc {
            None => piece,
            Some(mut sum) => {
                if sum.live_labels != piece.live_labels {
                    return Err(Error::InvalidOperator(
                        "terms leave different sets of slots alive".into(),
                    ));
                }
                for (x, y) in sum.values.iter_mut().zip(&piece.values) {
                    *x += y;
                }
                sum
            }
        });
    }
    match acc {
        Some(dense) => separable.max_abs_diff(&dense),
        None => Ok(separable
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)),
    }
}

/// Per-term discrepancies, in term order.
pub fn oracle_check_terms(e: &OperatorExpr, s: &SeparableSum, kappa: i32) -> Result<Vec<f64>> {
    check_size(s.grid(), s.labels().len())?;
    let start = densify(s)?;
    e.terms
        .iter()
        .map(|t| {
            let separable = densify(&apply_term(t, s, kappa)?)?;
            separable.max_abs_diff(&apply_term_dense(t, &start, kappa)?)
        })
        .collect()
}

fn apply_term_dense(
    t: &crate::operator::OperatorTerm,
    start: &DenseKernel,
    kappa: i32,
) -> Result<DenseKernel> {
    let mut cur = start.clone();
    for p in &t.pipeline {
        cur = apply_primitive_dense(p, &cur)?;
    }
    let c = t.coeff.evaluate(kappa);
    for v in &mut cur.values {
        *v *= c;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nls::{gaussian_ic, soliton_ic};
    use crate::operator::build_w;
    use crate::separable::{apply_primitive, product_state, trace};
    use crate::spectral::{derivative, make_grid, normalize, WaveField};

    fn gaussian(grid: GridSpec) -> WaveField {
        normalize(&gaussian_ic(grid, 1.0, 1.0, 0.4, 0.3)).unwrap()
    }

    #[test]
    fn densify_single_particle() {
        let g = make_grid(16, 6.0).unwrap();
        let phi = gaussian(g);
        let d = densify(&product_state(&phi, 1).unwrap()).unwrap();
        for m in 0..16 {
            for l in 0..16 {
                let expected = phi.values()[m] * phi.values()[l].conj();
                assert!((d.get(&[m], &[l]) - expected).norm() < 1e-15);
            }
        }
        assert!((d.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn densify_shape_and_linearity() {
        let g = make_grid(32, 6.0).unwrap();
        let a = product_state(&gaussian(g), 2).unwrap();
        let b = product_state(&normalize(&soliton_ic(g, 1.0, 0.0, 0.0)).unwrap(), 2).unwrap();
        let da = densify(&a).unwrap();
        assert_eq!(da.values().len(), 32usize.pow(4));
        let sum = densify(&a.add(&b).unwrap()).unwrap();
        let db = densify(&b).unwrap();
        let worst = sum
            .values()
            .iter()
            .zip(da.values().iter().zip(db.values()))
            .map(|(s, (x, y))| (s - x - y).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-15);
        assert!(da.hermiticity_defect() < 1e-15);
        assert!((da.trace() - trace(&a)).norm() < 1e-10);
    }

    #[test]
    fn memory_guard() {
        let g = make_grid(64, 6.0).unwrap();
        let s = product_state(&gaussian(g), 3).unwrap();
        assert!(matches!(densify(&s), Err(Error::TooLarge(_))));
        assert!(check_size(&make_grid(16, 1.0).unwrap(), 3).is_ok());
    }

    #[test]
    fn differentiation_matrix_matches_fft() {
        let g = make_grid(16, 3.0).unwrap();
        let phi = gaussian(g);
        let dmat = differentiation_matrix(&g);
        let fft = derivative(&phi, 1).unwrap();
        for m in 0..16 {
            let v: Complex64 = (0..16).map(|l| dmat[m * 16 + l] * phi.values()[l]).sum();
            assert!((v - fft.values()[m]).norm() < 1e-12);
        }
    }

    #[test]
    fn primitives_agree_with_separable() {
        let g = make_grid(32, 6.0).unwrap();
        let s = product_state(&gaussian(g), 2).unwrap();
        let dense = densify(&s).unwrap();
        for p in [
            Primitive::Collision {
                target: 1,
                source: 2,
            },
            Primitive::Collision {
                target: 2,
                source: 1,
            },
            Primitive::Deriv(1),
            Primitive::Deriv(2),
            Primitive::PTrace(2),
        ] {
            let sep = densify(&apply_primitive(&p, &s).unwrap()).unwrap();
            let den = apply_primitive_dense(&p, &dense).unwrap();
            assert!(sep.max_abs_diff(&den).unwrap() < 1e-10, "{p}");
        }
        let one = densify(&product_state(&gaussian(g), 1).unwrap()).unwrap();
        let scalar = apply_primitive_dense(&Primitive::PTrace(1), &one).unwrap();
        assert_eq!(scalar.values().len(), 1);
        assert!((scalar.values()[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(matches!(
            apply_primitive_dense(&Primitive::PTrace(3), &one),
            Err(Error::DeadSlot(3))
        ));
    }

    #[test]
    fn oracle_on_low_orders() {
        let g = make_grid(32, 6.0).unwrap();
        let s = product_state(&gaussian(g), 2).unwrap();
        assert_eq!(oracle_check(&build_w(1, 1).unwrap(), &s, -1).unwrap(), 0.0);
        assert!(oracle_check(&build_w(2, 1).unwrap(), &s, -1).unwrap() < 1e-10);

        let g = make_grid(16, 6.0).unwrap();
        let s = product_state(&normalize(&soliton_ic(g, 1.0, 0.0, 0.0)).unwrap(), 3).unwrap();
        assert!(oracle_check(&build_w(3, 1).unwrap(), &s, -1).unwrap() < 1e-8);
    }
}
