//! Symbolic hierarchy operators `W_n^j`.
//!
//! An operator is a sum of terms; each term is a coefficient `c * (-i)^p *
//! kappa^m` times a pipeline of primitives (derivative, collision, partial
//! trace) applied left to right to a density-matrix kernel. Slots are named by
//! labels: a partial trace removes its label without renumbering the others.

mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use parse::{parse, ParseError, ParseErrorKind};

/// Slot label (particle index). Labels are positive.
pub type Slot = u32;

/// Largest order accepted by [`build_w`].
pub const MAX_ORDER: u32 = 10;

/// Elementary operations. The derived order (variant, then labels) is the
/// primitive order used by the canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    /// `d/dx_a` on the unprimed variable of slot `a`.
    Deriv(Slot),
    /// `B_{target, source}`: sets `x_source = x'_source = x_target` and
    /// integrates slot `source` away.
    Collision { target: Slot, source: Slot },
    /// Partial trace over slot `a`.
    PTrace(Slot),
}

impl Primitive {
    pub fn slots(&self) -> impl Iterator<Item = Slot> {
        let (a, b) = match *self {
            Primitive::Deriv(a) | Primitive::PTrace(a) => (a, None),
            Primitive::Collision { target, source } => (target, Some(source)),
        };
        std::iter::once(a).chain(b)
    }

    /// Label that stops being alive once this primitive has run.
    pub fn consumed(&self) -> Option<Slot> {
        match *self {
            Primitive::Deriv(_) => None,
            Primitive::Collision { source, .. } => Some(source),
            Primitive::PTrace(a) => Some(a),
        }
    }

    fn touches(&self, other: &Primitive) -> bool {
        self.slots().any(|a| other.slots().any(|b| a == b))
    }

    fn shifted(&self, delta: u32) -> Primitive {
        match *self {
            Primitive::Deriv(a) => Primitive::Deriv(a + delta),
            Primitive::Collision { target, source } => Primitive::Collision {
                target: target + delta,
                source: source + delta,
            },
            Primitive::PTrace(a) => Primitive::PTrace(a + delta),
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Deriv(a) => write!(f, "D[{a}]"),
            Primitive::Collision { target, source } => write!(f, "B[{target},{source}]"),
            Primitive::PTrace(a) => write!(f, "Tr[{a}]"),
        }
    }
}

/// `(re + i im) * kappa^kappa_power` with Gaussian-integer prefactor.
///
/// Terms produced by the recursion always carry a unit prefactor
/// `(-i)^p`; general integers only appear after like terms are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coefficient {
    pub re: i64,
    pub im: i64,
    pub kappa_power: u32,
}

impl Coefficient {
    pub const ONE: Coefficient = Coefficient {
        re: 1,
        im: 0,
        kappa_power: 0,
    };
    pub const MINUS_I: Coefficient = Coefficient {
        re: 0,
        im: -1,
        kappa_power: 0,
    };
    pub const KAPPA: Coefficient = Coefficient {
        re: 1,
        im: 0,
        kappa_power: 1,
    };

    pub fn new(re: i64, im: i64, kappa_power: u32) -> Self {
        Coefficient {
            re,
            im,
            kappa_power,
        }
    }

    /// `(-i)^p kappa^m`.
    pub fn unit(p: u8, kappa_power: u32) -> Self {
        let (re, im) = match p % 4 {
            0 => (1, 0),
            1 => (0, -1),
            2 => (-1, 0),
            _ => (0, 1),
        };
        Coefficient {
            re,
            im,
            kappa_power,
        }
    }

    /// `Some(p)` when the prefactor is exactly `(-i)^p`.
    pub fn unit_power(&self) -> Option<u8> {
        match (self.re, self.im) {
            (1, 0) => Some(0),
            (0, -1) => Some(1),
            (-1, 0) => Some(2),
            (0, 1) => Some(3),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re == 0 && self.im == 0
    }

    pub fn mul(&self, other: &Coefficient) -> Coefficient {
        Coefficient {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
            kappa_power: self.kappa_power + other.kappa_power,
        }
    }

    pub fn neg(&self) -> Coefficient {
        Coefficient {
            re: -self.re,
            im: -self.im,
            kappa_power: self.kappa_power,
        }
    }

    pub fn evaluate(&self, kappa: i32) -> Complex64 {
        let k = (kappa as f64).powi(self.kappa_power as i32);
        Complex64::new(self.re as f64 * k, self.im as f64 * k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OperatorTerm {
    pub coeff: Coefficient,
    pub pipeline: Vec<Primitive>,
}

impl OperatorTerm {
    pub fn new(coeff: Coefficient, pipeline: Vec<Primitive>) -> Self {
        OperatorTerm { coeff, pipeline }
    }

    pub fn collision_count(&self) -> usize {
        self.pipeline
            .iter()
            .filter(|p| matches!(p, Primitive::Collision { .. }))
            .count()
    }

    pub fn deriv_count(&self) -> usize {
        self.pipeline
            .iter()
            .filter(|p| matches!(p, Primitive::Deriv(_)))
            .count()
    }

    /// Labels removed by the pipeline.
    pub fn consumed(&self) -> BTreeSet<Slot> {
        self.pipeline
            .iter()
            .filter_map(Primitive::consumed)
            .collect()
    }

    /// Checks the slot-lifetime rules against the live set `alive`.
    pub fn validate(&self, alive: &BTreeSet<Slot>) -> Result<()> {
        let mut dead = BTreeSet::new();
        for p in &self.pipeline {
            if let Primitive::Collision { target, source } = p {
                if target == source {
                    return Err(Error::InvalidOperator(format!(
                        "{p} collides a slot with itself"
                    )));
                }
            }
            for a in p.slots() {
                if !alive.contains(&a) || dead.contains(&a) {
                    return Err(Error::DeadSlot(a));
                }
            }
            if let Some(a) = p.consumed() {
                dead.insert(a);
            }
        }
        Ok(())
    }

    fn sort_key(&self) -> (usize, u32, &[Primitive]) {
        (
            self.collision_count(),
            self.coeff.kappa_power,
            &self.pipeline,
        )
    }
}

/// Lexicographically least reordering of `pipeline` reachable by commuting
/// adjacent primitives with disjoint slots.
pub fn canonical_pipeline(pipeline: &[Primitive]) -> Vec<Primitive> {
    let mut remaining: Vec<Primitive> = pipeline.to_vec();
    let mut out = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        // An element is available when no earlier remaining element shares a slot with it.
        let mut best: Option<usize> = None;
        for i in 0..remaining.len() {
            let blocked = remaining[..i].iter().any(|q| q.touches(&remaining[i]));
            if !blocked && best.is_none_or(|b| remaining[i] < remaining[b]) {
                best = Some(i);
            }
        }
        let i = best.expect("the first remaining primitive is always available");
        out.push(remaining.remove(i));
    }
    out
}

/// A sum of terms acting on the slot range `base .. base + order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorExpr {
    pub order: u32,
    pub base: Slot,
    pub terms: Vec<OperatorTerm>,
}

impl OperatorExpr {
    pub fn new(order: u32, base: Slot, terms: Vec<OperatorTerm>) -> Self {
        OperatorExpr { order, base, terms }
    }

    pub fn identity(base: Slot) -> Self {
        OperatorExpr::new(
            1,
            base,
            vec![OperatorTerm::new(Coefficient::ONE, Vec::new())],
        )
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn slots(&self) -> std::ops::Range<Slot> {
        self.base..self.base + self.order
    }

    pub fn validate(&self) -> Result<()> {
        let alive: BTreeSet<Slot> = self.slots().collect();
        self.terms.iter().try_for_each(|t| t.validate(&alive))
    }

    /// Relabel every slot by `+delta`.
    pub fn shifted(&self, delta: u32) -> OperatorExpr {
        OperatorExpr {
            order: self.order,
            base: self.base + delta,
            terms: self
                .terms
                .iter()
                .map(|t| OperatorTerm {
                    coeff: t.coeff,
                    pipeline: t.pipeline.iter().map(|p| p.shifted(delta)).collect(),
                })
                .collect(),
        }
    }

    pub fn scaled(&self, c: Coefficient) -> OperatorExpr {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff = t.coeff.mul(&c);
        }
        normalize(&out)
    }

    /// Sum of two expressions over the union of their slot ranges.
    pub fn sum(&self, other: &OperatorExpr) -> OperatorExpr {
        let (base, order) = merged_range(self, other);
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        normalize(&OperatorExpr::new(order, base, terms))
    }

    pub fn pretty(&self) -> String {
        pretty_print(self)
    }
}

fn merged_range(a: &OperatorExpr, b: &OperatorExpr) -> (Slot, u32) {
    if a.order == 0 {
        return (b.base, b.order);
    }
    if b.order == 0 {
        return (a.base, a.order);
    }
    let lo = a.base.min(b.base);
    let hi = (a.base + a.order).max(b.base + b.order);
    (lo, hi - lo)
}

impl fmt::Display for OperatorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

/// Canonical form: pipelines reordered by [`canonical_pipeline`], like terms
/// (same pipeline and same power of kappa) merged, zero terms dropped, and the
/// terms sorted by (collision count, kappa power, pipeline).
pub fn normalize(e: &OperatorExpr) -> OperatorExpr {
    let mut merged: BTreeMap<(u32, Vec<Primitive>), (i64, i64)> = BTreeMap::new();
    for t in &e.terms {
        let key = (t.coeff.kappa_power, canonical_pipeline(&t.pipeline));
        let slot = merged.entry(key).or_insert((0, 0));
        slot.0 += t.coeff.re;
        slot.1 += t.coeff.im;
    }
    let mut terms: Vec<OperatorTerm> = merged
        .into_iter()
        .filter(|(_, (re, im))| *re != 0 || *im != 0)
        .map(|((kappa_power, pipeline), (re, im))| {
            OperatorTerm::new(Coefficient::new(re, im, kappa_power), pipeline)
        })
        .collect();
    terms.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    OperatorExpr::new(e.order, e.base, terms)
}

/// `a (x) b`: concatenated pipelines over the product of the term lists.
pub fn tensor(a: &OperatorExpr, b: &OperatorExpr) -> Result<OperatorExpr> {
    if a.order > 0 && b.order > 0 {
        let disjoint = a.base + a.order <= b.base || b.base + b.order <= a.base;
        if !disjoint {
            return Err(Error::OverlappingSlots);
        }
    }
    let (base, order) = merged_range(a, b);
    let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
    for ta in &a.terms {
        for tb in &b.terms {
            let mut pipeline = ta.pipeline.clone();
            pipeline.extend_from_slice(&tb.pipeline);
            terms.push(OperatorTerm::new(ta.coeff.mul(&tb.coeff), pipeline));
        }
    }
    Ok(normalize(&OperatorExpr::new(order, base, terms)))
}

/// `T_1 = 1`, `T_{n+1} = T_n + sum_{k=1}^{n-1} T_k T_{n-k}` (shifted Motzkin numbers).
pub fn motzkin_term_counts(n_max: usize) -> Vec<u64> {
    let mut t = vec![0u64; n_max + 1];
    if n_max >= 1 {
        t[1] = 1;
    }
    for n in 1..n_max {
        t[n + 1] = t[n] + (1..n).map(|k| t[k] * t[n - k]).sum::<u64>();
    }
    t.remove(0);
    t
}

fn w_cache() -> &'static Mutex<HashMap<u32, OperatorExpr>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, OperatorExpr>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `W_n` based at slot 1, memoized.
fn w_at_one(n: u32) -> OperatorExpr {
    if let Some(e) = w_cache().lock().unwrap().get(&n) {
        return e.clone();
    }
    let e = if n == 1 {
        OperatorExpr::identity(1)
    } else {
        // W_{m+1}^1 = -i d_1 W_m^1 Tr_{1+m} + kappa sum_k B_{1,1+k} (W_k^1 (x) W_{m-k}^{1+k}) Tr_{1+m}
        let m = n - 1;
        let trace_last = Primitive::PTrace(1 + m);
        let mut terms = Vec::new();
        for t in w_at_one(m).terms {
            let mut pipeline = vec![trace_last];
            pipeline.extend(t.pipeline);
            pipeline.push(Primitive::Deriv(1));
            terms.push(OperatorTerm::new(
                t.coeff.mul(&Coefficient::MINUS_I),
                pipeline,
            ));
        }
        for k in 1..m {
            let left = w_at_one(k);
            let right = w_at_one(m - k).shifted(k);
            let collide = Primitive::Collision {
                target: 1,
                source: 1 + k,
            };
            for a in &left.terms {
                for b in &right.terms {
                    let mut pipeline = vec![trace_last];
                    pipeline.extend_from_slice(&a.pipeline);
                    pipeline.extend_from_slice(&b.pipeline);
                    pipeline.push(collide);
                    let coeff = a.coeff.mul(&b.coeff).mul(&Coefficient::KAPPA);
                    terms.push(OperatorTerm::new(coeff, pipeline));
                }
            }
        }
        normalize(&OperatorExpr::new(n, 1, terms))
    };
    w_cache().lock().unwrap().insert(n, e.clone());
    e
}

/// The hierarchy operator `W_n^j` in canonical form.
pub fn build_w(n: u32, j: Slot) -> Result<OperatorExpr> {
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(Error::OutOfRange {
            index: n,
            min: 1,
            max: MAX_ORDER,
        });
    }
    if j == 0 {
        return Err(Error::InvalidOperator("slot labels start at 1".into()));
    }
    Ok(w_at_one(n).shifted(j - 1))
}

/// `W_{n_1}^1 (x) W_{n_2}^{1+n_1} (x) ...`.
pub fn build_w_product(orders: &[u32]) -> Result<OperatorExpr> {
    let mut base = 1;
    let mut acc: Option<OperatorExpr> = None;
    for &n in orders {
        let w = build_w(n, base)?;
        acc = Some(match acc {
            None => w,
            Some(prev) => tensor(&prev, &w)?,
        });
        base += n;
    }
    acc.ok_or_else(|| Error::InvalidOperator("empty product".into()))
}

fn format_coefficient(re: i64, im: i64, kappa_power: u32) -> String {
    debug_assert!(re == 0 || im == 0);
    let (value, imaginary) = if im == 0 { (re, false) } else { (im, true) };
    let mut factors: Vec<String> = Vec::new();
    let magnitude = value.unsigned_abs();
    if magnitude != 1 || (!imaginary && kappa_power == 0) {
        factors.push(magnitude.to_string());
    }
    if imaginary {
        factors.push("i".into());
    }
    match kappa_power {
        0 => {}
        1 => factors.push("k".into()),
        m => factors.push(format!("k^{m}")),
    }
    let sign = if value < 0 { "-" } else { "" };
    format!("({sign}{})", factors.join("*"))
}

fn format_pipeline(pipeline: &[Primitive], range: std::ops::Range<Slot>) -> String {
    let mut parts: Vec<String> = Vec::new();
    let referenced: BTreeSet<Slot> = pipeline.iter().flat_map(|p| p.slots()).collect();
    for a in range {
        if !referenced.contains(&a) {
            parts.push(format!("Id[{a}]"));
        }
    }
    let mut i = 0;
    while i < pipeline.len() {
        let p = pipeline[i];
        let mut run = 1;
        if let Primitive::Deriv(_) = p {
            while i + run < pipeline.len() && pipeline[i + run] == p {
                run += 1;
            }
        }
        if run > 1 {
            parts.push(format!("{p}^{run}"));
        } else {
            parts.push(p.to_string());
        }
        i += run;
    }
    parts.join(".")
}

/// Deterministic text form, e.g. `(-i)*D[1].Tr[2]` for `W_2^1`.
///
/// A unit coefficient is omitted. A coefficient with both real and imaginary
/// parts is written as two terms sharing the pipeline.
pub fn pretty_print(e: &OperatorExpr) -> String {
    if e.terms.is_empty() {
        return "0".into();
    }
    let mut out: Vec<String> = Vec::new();
    for t in &e.terms {
        let body = format_pipeline(&t.pipeline, e.slots());
        let parts = [(t.coeff.re, 0), (0, t.coeff.im)];
        for (re, im) in parts {
            if re == 0 && im == 0 {
                continue;
            }
            if re == 1 && im == 0 && t.coeff.kappa_power == 0 {
                out.push(body.clone());
            } else {
                out.push(format!(
                    "{}*{body}",
                    format_coefficient(re, im, t.coeff.kappa_power)
                ));
            }
        }
    }
    out.join(" + ")
}
