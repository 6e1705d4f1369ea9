#![allow(dead_code)]

use std::collections::BTreeSet;

use gph::nls::{gaussian_ic, soliton_ic};
use gph::operator::{Coefficient, OperatorExpr, OperatorTerm, Primitive, Slot};
use gph::spectral::{normalize, GridSpec, WaveField};
use rand::seq::IteratorRandom;
use rand::Rng;

pub fn gaussian(grid: GridSpec) -> WaveField {
    normalize(&gaussian_ic(grid, 1.0, 1.0, 0.6, 0.5)).unwrap()
}

/// `eta = 1/2`, unit mass up to the box tails.
pub fn unit_soliton(grid: GridSpec) -> WaveField {
    normalize(&soliton_ic(grid, 0.5, 0.0, 0.0)).unwrap()
}

fn random_term(rng: &mut impl Rng, base: Slot, order: u32) -> OperatorTerm {
    let mut alive: BTreeSet<Slot> = (base..base + order).collect();
    let mut pipeline = Vec::new();
    for _ in 0..rng.gen_range(0..=6) {
        let pick = |rng: &mut _, alive: &BTreeSet<Slot>| *alive.iter().choose(rng).unwrap();
        match rng.gen_range(0..3) {
            0 => pipeline.push(Primitive::Deriv(pick(rng, &alive))),
            1 if alive.len() >= 2 => {
                let target = pick(rng, &alive);
                let source = *alive.iter().filter(|&&s| s != target).choose(rng).unwrap();
                alive.remove(&source);
                pipeline.push(Primitive::Collision { target, source });
            }
            _ if alive.len() >= 2 => {
                let a = pick(rng, &alive);
                alive.remove(&a);
                pipeline.push(Primitive::PTrace(a));
            }
            _ => {}
        }
    }
    let value = *[-3i64, -2, -1, 1, 2, 3].iter().choose(rng).unwrap();
    let kappa_power = rng.gen_range(0..=3);
    let coeff = if rng.gen_bool(0.5) {
        Coefficient::new(value, 0, kappa_power)
    } else {
        Coefficient::new(0, value, kappa_power)
    };
    OperatorTerm::new(coeff, pipeline)
}

/// A well-formed expression with 1 to 4 terms on up to 5 slots.
pub fn random_expr(rng: &mut impl Rng) -> OperatorExpr {
    let order = rng.gen_range(1..=5);
    let base = rng.gen_range(1..=3);
    let terms = (0..rng.gen_range(1..=4))
        .map(|_| random_term(rng, base, order))
        .collect();
    OperatorExpr::new(order, base, terms)
}
