//! Density matrices as finite sums of rank-one product kernels.
//!
//! A [`RankOneKernel`] is `w * prod_a u_a(x_a) conj(v_a(x'_a))`. Derivatives,
//! collisions and partial traces all map rank-one kernels to rank-one kernels,
//! so operators are applied term by term without ever forming a grid tensor.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ladder::conserved_integral;
use crate::nls::{evolve, EvolveParams, Trajectory};
use crate::operator::{build_w, OperatorExpr, OperatorTerm, Primitive, Slot};
use crate::spectral::{derivative, inner_unchecked, l2_norm, GridSpec, WaveField};

/// Tolerance on `|phi|_2 = 1` for factorized and ensemble states.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Unprimed and primed factor of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPair {
    pub unprimed: Arc<WaveField>,
    pub primed: Arc<WaveField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneKernel {
    pub weight: Complex64,
    pub slots: BTreeMap<Slot, SlotPair>,
}

impl RankOneKernel {
    pub fn labels(&self) -> BTreeSet<Slot> {
        self.slots.keys().copied().collect()
    }

    fn pair(&self, a: Slot) -> Result<&SlotPair> {
        self.slots.get(&a).ok_or(Error::DeadSlot(a))
    }

    /// Apply one primitive in place.
    pub fn apply(&mut self, p: &Primitive) -> Result<()> {
        match *p {
            Primitive::Deriv(a) => {
                let pair = self.pair(a)?;
                let d = derivative(&pair.unprimed, 1)?;
                self.slots.get_mut(&a).unwrap().unprimed = Arc::new(d);
            }
            Primitive::Collision { target, source } => {
                if target == source {
                    return Err(Error::InvalidOperator(format!(
                        "{p} collides a slot with itself"
                    )));
                }
                let src = self.pair(source)?.clone();
                let tgt = self.pair(target)?;
                // u_t(x) * u_s(x) * conj(v_s(x)): x_s = x'_s = x_t
                let merged = tgt
                    .unprimed
                    .values()
                    .iter()
                    .zip(src.unprimed.values())
                    .zip(src.primed.values())
                    .map(|((&t, &u), &v)| t * u * v.conj())
                    .collect();
                let merged = WaveField::from_raw(*tgt.unprimed.grid(), merged);
                self.slots.get_mut(&target).unwrap().unprimed = Arc::new(merged);
                self.slots.remove(&source);
            }
            Primitive::PTrace(a) => {
                let pair = self.pair(a)?;
                let dx = pair.unprimed.grid().dx();
                self.weight *= inner_unchecked(pair.unprimed.values(), pair.primed.values(), dx);
                self.slots.remove(&a);
            }
        }
        Ok(())
    }

    /// `weight * prod_a <u_a, v_a>`.
    pub fn trace(&self) -> Complex64 {
        self.slots.values().fold(self.weight, |acc, pair| {
            let dx = pair.unprimed.grid().dx();
            acc * inner_unchecked(pair.unprimed.values(), pair.primed.values(), dx)
        })
    }
}

/// Weighted sum of rank-one kernels over a common label set.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableSum {
    grid: GridSpec,
    labels: BTreeSet<Slot>,
    kernels: Vec<RankOneKernel>,
}

impl SeparableSum {
    pub fn new(
        grid: GridSpec,
        labels: BTreeSet<Slot>,
        kernels: Vec<RankOneKernel>,
    ) -> Result<Self> {
        for k in &kernels {
            if k.labels() != labels {
                return Err(Error::InvalidOperator(
                    "kernels of a separable sum must share one label set".into(),
                ));
            }
            if k.slots
                .values()
                .any(|p| *p.unprimed.grid() != grid || *p.primed.grid() != grid)
            {
                return Err(Error::GridMismatch);
            }
        }
        Ok(SeparableSum {
            grid,
            labels,
            kernels,
        })
    }

    /// A single kernel `prod_a u_a(x_a) conj(v_a(x'_a))` over the given slots.
    pub fn from_factors(
        weight: Complex64,
        factors: Vec<(Slot, WaveField, WaveField)>,
    ) -> Result<Self> {
        let grid = match factors.first() {
            Some((_, u, _)) => *u.grid(),
            None => {
                return Err(Error::InvalidOperator(
                    "a kernel needs at least one slot to fix its grid".into(),
                ))
            }
        };
        let mut slots = BTreeMap::new();
        for (a, u, v) in factors {
            if a == 0 {
                return Err(Error::InvalidOperator("slot labels start at 1".into()));
            }
            slots.insert(
                a,
                SlotPair {
                    unprimed: Arc::new(u),
                    primed: Arc::new(v),
                },
            );
        }
        let labels = slots.keys().copied().collect();
        SeparableSum::new(grid, labels, vec![RankOneKernel { weight, slots }])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn labels(&self) -> &BTreeSet<Slot> {
        &self.labels
    }

    pub fn kernels(&self) -> &[RankOneKernel] {
        &self.kernels
    }

    pub fn rank(&self) -> usize {
        self.kernels.len()
    }

    /// Concatenation of kernel lists (operator-level addition).
    pub fn add(&self, other: &SeparableSum) -> Result<SeparableSum> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.labels != other.labels {
            return Err(Error::InvalidOperator("label sets differ".into()));
        }
        let mut kernels = self.kernels.clone();
        kernels.extend(other.kernels.iter().cloned());
        Ok(SeparableSum {
            grid: self.grid,
            labels: self.labels.clone(),
            kernels,
        })
    }

    pub fn scaled(&self, c: Complex64) -> SeparableSum {
        let mut out = self.clone();
        for k in &mut out.kernels {
            k.weight *= c;
        }
        out
    }

    /// Kernel values `K(x_m, x'_l)` (row-major in `m`) for a sum with one live slot.
    pub fn kernel_matrix(&self) -> Result<Vec<Complex64>> {
        if self.labels.len() != 1 {
            return Err(Error::InvalidOperator(format!(
                "kernel_matrix needs exactly one live slot, found {}",
                self.labels.len()
            )));
        }
        let n = self.grid.n_points();
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for k in &self.kernels {
            let pair = k.slots.values().next().unwrap();
            for (m, &u) in pair.unprimed.values().iter().enumerate() {
                let row = &mut out[m * n..(m + 1) * n];
                let wu = k.weight * u;
                for (cell, v) in row.iter_mut().zip(pair.primed.values()) {
                    *cell += wu * v.conj();
                }
            }
        }
        Ok(out)
    }
}

fn check_normalized(phi: &WaveField) -> Result<()> {
    let norm = l2_norm(phi);
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized(norm));
    }
    Ok(())
}

/// `|phi><phi|^{(x) k}` on slots `1..=k`.
pub fn product_state(phi: &WaveField, k: u32) -> Result<SeparableSum> {
    check_normalized(phi)?;
    product_state_unchecked(phi, k)
}

pub(crate) fn product_state_unchecked(phi: &WaveField, k: u32) -> Result<SeparableSum> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be positive".into()));
    }
    let shared = Arc::new(phi.clone());
    let slots = (1..=k)
        .map(|a| {
            (
                a,
                SlotPair {
                    unprimed: shared.clone(),
                    primed: shared.clone(),
                },
            )
        })
        .collect();
    SeparableSum::new(
        *phi.grid(),
        (1..=k).collect(),
        vec![RankOneKernel {
            weight: Complex64::new(1.0, 0.0),
            slots,
        }],
    )
}

pub fn apply_primitive(p: &Primitive, s: &SeparableSum) -> Result<SeparableSum> {
    for a in p.slots() {
        if !s.labels.contains(&a) {
            return Err(Error::DeadSlot(a));
        }
    }
    let mut labels = s.labels.clone();
    if let Some(a) = p.consumed() {
        labels.remove(&a);
    }
    let kernels = s
        .kernels
        .iter()
        .map(|k| {
            let mut k = k.clone();
            k.apply(p)?;
            Ok(k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparableSum {
        grid: s.grid,
        labels,
        kernels,
    })
}

/// Partial trace over `slot`.
pub fn marginal(s: &SeparableSum, slot: Slot) -> Result<SeparableSum> {
    apply_primitive(&Primitive::PTrace(slot), s)
}

/// One term applied to every kernel of `s`; coefficient evaluated at `kappa`.
pub fn apply_term(t: &OperatorTerm, s: &SeparableSum, kappa: i32) -> Result<SeparableSum> {
    t.validate(&s.labels)?;
    let c = t.coeff.evaluate(kappa);
    let mut labels = s.labels.clone();
    for a in t.consumed() {
        labels.remove(&a);
    }
    let kernels = s
        .kernels
        .iter()
        .map(|k| {
            let mut k = k.clone();
            for p in &t.pipeline {
                k.apply(p)?;
            }
            k.weight *= c;
            Ok(k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparableSum {
        grid: s.grid,
        labels,
        kernels,
    })
}

/// `sum_terms coeff(kappa) * pipeline(s)`, kernels ordered term-major.
pub fn apply_expr(e: &OperatorExpr, s: &SeparableSum, kappa: i32) -> Result<SeparableSum> {
    for a in e.slots() {
        if !e.terms.is_empty() && !s.labels.contains(&a) {
            return Err(Error::DeadSlot(a));
        }
    }
    let parts = e
        .terms
        .par_iter()
        .map(|t| apply_term(t, s, kappa))
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let Some(first) = iter.next() else {
        return Ok(SeparableSum {
            grid: s.grid,
            labels: s.labels.clone(),
            kernels: Vec::new(),
        });
    };
    let labels = first.labels.clone();
    let mut kernels = first.kernels;
    for part in iter {
        if part.labels != labels {
            return Err(Error::InvalidOperator(
                "terms leave different sets of slots alive".into(),
            ));
        }
        kernels.extend(part.kernels);
    }
    Ok(SeparableSum {
        grid: s.grid,
        labels,
        kernels,
    })
}

/// Full trace, summed in kernel order.
pub fn trace(s: &SeparableSum) -> Complex64 {
    s.kernels.iter().map(RankOneKernel::trace).sum()
}

/// Finite de Finetti measure `sum_i p_i delta_{phi_i}` on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    components: Vec<(f64, WaveField)>,
}

impl Ensemble {
    pub fn new(components: Vec<(f64, WaveField)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(Error::InvalidEnsemble("no components".into()));
        };
        let grid = *first.grid();
        let mut total = 0.0;
        for (i, (p, phi)) in components.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::InvalidEnsemble(format!(
                    "weight {i} = {p} is not positive"
                )));
            }
            if *phi.grid() != grid {
                return Err(Error::GridMismatch);
            }
            let norm = l2_norm(phi);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::InvalidEnsemble(format!(
                    "component {i} has norm {norm}, expected 1"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Ensemble { components })
    }

    pub fn components(&self) -> &[(f64, WaveField)] {
        &self.components
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].1.grid()
    }

    /// `gamma^(k) = sum_i p_i |phi_i><phi_i|^{(x) k}`.
    pub fn state(&self, k: u32) -> Result<SeparableSum> {
        let mut kernels = Vec::with_capacity(self.components.len());
        for (p, phi) in &self.components {
            let s = product_state_unchecked(phi, k)?;
            kernels.extend(s.scaled(Complex64::new(*p, 0.0)).kernels);
        }
        SeparableSum::new(*self.grid(), (1..=k).collect(), kernels)
    }

    /// The ensemble obtained by replacing each component with `f(component)`.
    pub fn map_components(&self, f: impl Fn(&WaveField) -> WaveField) -> Result<Ensemble> {
        Ensemble::new(
            self.components
                .iter()
                .map(|(p, phi)| (*p, f(phi)))
                .collect(),
        )
    }

    /// Evolve every component; trajectories are returned in component order.
    pub fn evolve(&self, params: &EvolveParams) -> Result<Vec<Trajectory>> {
        self.components
            .par_iter()
            .map(|(_, phi)| evolve(phi, params))
            .collect()
    }

    /// `sum_i p_i I_n(phi_i)`.
    pub fn average_integral(&self, n: u32, kappa: i32) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (p, phi) in &self.components {
            acc += *p * conserved_integral(phi, n, kappa)?;
        }
        Ok(acc)
    }
}

/// `Tr W_n^j gamma^(k)` for the ensemble state, by operator application.
pub fn tr_w_ensemble(n: u32, j: Slot, k: u32, ens: &Ensemble, kappa: i32) -> Result<Complex64> {
    let w = build_w(n, j)?;
    tr_expr_ensemble(&w, k, ens, kappa)
}

/// `Tr E gamma^(k)` for any expression `E` whose slots fit in `1..=k`.
pub fn tr_expr_ensemble(e: &OperatorExpr, k: u32, ens: &Ensemble, kappa: i32) -> Result<Complex64> {
    let top = e.base + e.order - 1;
    if e.base == 0 || k < top {
        return Err(Error::InvalidParams(format!(
            "k = {k} is too small for an operator on slots {}..={top}",
            e.base
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, phi) in &ens.components {
        let gamma = product_state_unchecked(phi, k)?;
        acc += *p * trace(&apply_expr(e, &gamma, kappa)?);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::w_sequence;
    use crate::nls::{gaussian_ic, soliton_ic};
    use crate::operator::{parse, tensor};
    use crate::spectral::{make_grid, normalize};

    fn gaussian(grid: GridSpec) -> WaveField {
        normalize(&gaussian_ic(grid, 1.0, 1.0, 0.3, 0.2)).unwrap()
    }

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn product_state_shape() {
        let g = make_grid(64, 10.0).unwrap();
        let phi = gaussian(g);
        let s = product_state(&phi, 3).unwrap();
        assert_eq!(s.rank(), 1);
        assert_eq!(s.labels().len(), 3);
        assert_eq!(s.kernels()[0].weight, one());
        assert!((trace(&product_state(&phi, 1).unwrap()) - one()).norm() < 1e-12);
        assert!((trace(&s) - one()).norm() < 1e-12);
        assert!(matches!(
            product_state(&phi.scale(Complex64::new(2.0, 0.0)), 2),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn marginal_of_product_state() {
        let g = make_grid(64, 10.0).unwrap();
        let phi = gaussian(g);
        let m = marginal(&product_state(&phi, 4).unwrap(), 4).unwrap();
        let expected = product_state(&phi, 3).unwrap();
        assert_eq!(m.labels(), expected.labels());
        assert!((m.kernels()[0].weight - one()).norm() < 1e-14);
        assert!(matches!(marginal(&m, 4), Err(Error::DeadSlot(4))));

        // non-normalized factor: the weight picks up |phi|^2
        let big = phi.scale(Complex64::new(3.0, 0.0));
        let s = SeparableSum::from_factors(one(), vec![(1, big.clone(), big)]).unwrap();
        let traced = marginal(&s, 1).unwrap();
        assert!((traced.kernels()[0].weight - Complex64::new(9.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn collision_on_product_state() {
        let g = make_grid(128, 10.0).unwrap();
        let phi = gaussian(g);
        let s = product_state(&phi, 2).unwrap();
        let out = apply_primitive(
            &Primitive::Collision {
                target: 1,
                source: 2,
            },
            &s,
        )
        .unwrap();
        assert_eq!(out.labels(), &BTreeSet::from([1]));
        let pair = &out.kernels()[0].slots[&1];
        let expected = phi.abs_sq().mul(&phi).unwrap();
        assert!(pair.unprimed.max_abs_diff(&expected).unwrap() < 1e-15);
        assert_eq!(*pair.primed, phi);
    }

    #[test]
    fn derivative_and_lifetime() {
        let g = make_grid(64, 10.0).unwrap();
        let phi = gaussian(g);
        let s = product_state(&phi, 1).unwrap();
        let d = apply_primitive(&Primitive::Deriv(1), &s).unwrap();
        assert_eq!(
            *d.kernels()[0].slots[&1].unprimed,
            derivative(&phi, 1).unwrap()
        );

        let s2 = product_state(&phi, 2).unwrap();
        let traced = apply_primitive(&Primitive::PTrace(2), &s2).unwrap();
        assert!(matches!(
            apply_primitive(
                &Primitive::Collision {
                    target: 1,
                    source: 2
                },
                &traced
            ),
            Err(Error::DeadSlot(2))
        ));
    }

    #[test]
    fn identity_operator() {
        let g = make_grid(64, 10.0).unwrap();
        let phi = gaussian(g);
        let s = product_state(&phi, 1).unwrap();
        assert_eq!(apply_expr(&build_w(1, 1).unwrap(), &s, -1).unwrap(), s);
    }

    fn collapsed_error(phi: &WaveField, n: u32, j: u32, kappa: i32) -> f64 {
        let w = build_w(n, j).unwrap();
        let gamma = product_state(phi, j + n - 1).unwrap();
        let mut out = apply_expr(&w, &gamma, kappa).unwrap();
        for a in 1..j {
            out = marginal(&out, a).unwrap();
        }
        let got = out.kernel_matrix().unwrap();
        let wn = &w_sequence(phi, n, kappa).unwrap()[n as usize - 1];
        let size = phi.len();
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for m in 0..size {
            for l in 0..size {
                let exact = wn.values()[m] * phi.values()[l].conj();
                err = err.max((got[m * size + l] - exact).norm());
                scale = scale.max(exact.norm());
            }
        }
        err / scale
    }

    #[test]
    fn factorized_identity_low_orders() {
        let g = make_grid(128, 20.0).unwrap();
        let phi = gaussian(g);
        for n in 1..=4 {
            for j in 1..=2 {
                let e = collapsed_error(&phi, n, j, -1);
                assert!(e < 1e-8, "n = {n}, j = {j}: {e}");
            }
        }
    }

    #[test]
    fn trace_matches_i3() {
        let g = make_grid(256, 20.0).unwrap();
        let phi = normalize(&soliton_ic(g, 1.0, 0.0, 0.0)).unwrap();
        let w3 = build_w(3, 1).unwrap();
        let t = trace(&apply_expr(&w3, &product_state(&phi, 3).unwrap(), -1).unwrap());
        let i3 = conserved_integral(&phi, 3, -1).unwrap();
        assert!((t - i3).norm() < 1e-9, "{t} vs {i3}");
    }

    #[test]
    fn linearity() {
        let g = make_grid(64, 10.0).unwrap();
        let a = product_state(&gaussian(g), 3).unwrap();
        let b = product_state(&normalize(&soliton_ic(g, 1.0, 0.5, 1.0)).unwrap(), 3)
            .unwrap()
            .scaled(Complex64::new(0.4, -0.2));
        let w = build_w(3, 1).unwrap();
        let lhs = apply_expr(&w, &a.add(&b).unwrap(), 1).unwrap();
        let rhs = apply_expr(&w, &a, 1)
            .unwrap()
            .add(&apply_expr(&w, &b, 1).unwrap())
            .unwrap();
        let (l, r) = (lhs.kernel_matrix().unwrap(), rhs.kernel_matrix().unwrap());
        let diff = l
            .iter()
            .zip(&r)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
        assert!((trace(&lhs) - trace(&rhs)).norm() < 1e-13);
    }

    #[test]
    fn ensemble_validation() {
        let g = make_grid(64, 10.0).unwrap();
        let phi = gaussian(g);
        assert!(Ensemble::new(vec![]).is_err());
        assert!(Ensemble::new(vec![(0.5, phi.clone())]).is_err());
        assert!(Ensemble::new(vec![(1.0, phi.scale(Complex64::new(1.1, 0.0)))]).is_err());
        assert!(Ensemble::new(vec![(-0.5, phi.clone()), (1.5, phi.clone())]).is_err());
        assert!(Ensemble::new(vec![(0.3, phi.clone()), (0.7, phi)]).is_ok());
    }

    #[test]
    fn ensemble_traces() {
        let g = make_grid(256, 20.0).unwrap();
        let a = gaussian(g);
        let b = normalize(&soliton_ic(g, 1.0, 0.0, 0.0)).unwrap();
        let ens = Ensemble::new(vec![(0.3, a.clone()), (0.7, b.clone())]).unwrap();
        assert!((tr_w_ensemble(1, 1, 1, &ens, -1).unwrap() - one()).norm() < 1e-10);

        let single = Ensemble::new(vec![(1.0, b.clone())]).unwrap();
        let i4 = conserved_integral(&b, 4, -1).unwrap();
        assert!((tr_w_ensemble(4, 1, 4, &single, -1).unwrap() - i4).norm() < 1e-9);

        let base = tr_w_ensemble(3, 2, 4, &ens, -1).unwrap();
        for k in 5..=6 {
            assert!((tr_w_ensemble(3, 2, k, &ens, -1).unwrap() - base).norm() < 1e-10);
        }
        assert!(tr_w_ensemble(3, 2, 3, &ens, -1).is_err());

        // marginal consistency of the ensemble state
        let g3 = ens.state(3).unwrap();
        let g2 = marginal(&g3, 3).unwrap();
        let direct = ens.state(2).unwrap();
        assert_eq!(g2.rank(), direct.rank());
        for (x, y) in g2.kernels().iter().zip(direct.kernels()) {
            assert!((x.weight - y.weight).norm() < 1e-14);
            assert_eq!(x.slots, y.slots);
        }
    }

    #[test]
    fn higher_products_factorize() {
        let g = make_grid(256, 20.0).unwrap();
        let phi = gaussian(g);
        let e = tensor(&build_w(2, 1).unwrap(), &build_w(3, 3).unwrap()).unwrap();
        let t = trace(&apply_expr(&e, &product_state(&phi, 5).unwrap(), 1).unwrap());
        let expected =
            conserved_integral(&phi, 2, 1).unwrap() * conserved_integral(&phi, 3, 1).unwrap();
        assert!((t - expected).norm() < 1e-8);

        // the W_3 (x) W_3 pairing gives I_3^2
        let e = tensor(&build_w(3, 1).unwrap(), &build_w(3, 4).unwrap()).unwrap();
        let t = trace(&apply_expr(&e, &product_state(&phi, 6).unwrap(), 1).unwrap());
        let i3 = conserved_integral(&phi, 3, 1).unwrap();
        assert!((t - i3 * i3).norm() < 1e-8);
    }

    #[test]
    fn mismatched_term_outputs_are_rejected() {
        let g = make_grid(64, 10.0).unwrap();
        let s = product_state(&gaussian(g), 2).unwrap();
        let e = parse("Tr[1].Id[2] + Tr[2].Id[1]").unwrap();
        assert!(apply_expr(&e, &s, 1).is_err());
    }
}
