//! Generators for constraint-model text over the metabolic base model.

use bayes_cfa::{synthetic, Cell, UcfmSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

pub const P: usize = 8;
pub const M: usize = 2;

pub fn spec() -> UcfmSpec {
    synthetic::metabolic_spec()
}

/// Free cells of the metabolic base model, 1-based.
pub fn free_cell() -> impl Strategy<Value = String> {
    (1..=P, 1..=M)
        .prop_filter("zero cell", |&(j, k)| !((j, k) == (3, 1) || (j, k) == (5, 2)))
        .prop_map(|(j, k)| format!("L[{j},{k}]"))
}

pub fn number() -> impl Strategy<Value = String> {
    (0u32..1000).prop_map(|v| format!("{}", v as f64 / 100.0))
}

pub fn neg() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just(""), Just("-")]
}

/// Side without abs: a (possibly negated) cell or number.
pub fn plain() -> impl Strategy<Value = String> {
    prop_oneof![
        (neg(), free_cell()).prop_map(|(n, c)| format!("{n}{c}")),
        (neg(), number()).prop_map(|(n, v)| format!("{n}{v}")),
    ]
}

/// Statements that expand into a conjunction of atoms.
pub fn statement() -> impl Strategy<Value = String> {
    prop_oneof![
        // cell against cell or number, either direction
        (neg(), free_cell(), prop_oneof![Just("<"), Just(">")], plain()).prop_map(|(n, c, op, rhs)| format!("{n}{c} {op} {rhs}")),
        (plain(), prop_oneof![Just("<"), Just(">")], neg(), free_cell()).prop_map(|(lhs, op, n, c)| format!("{lhs} {op} {n}{c}")),
        // abs on the smaller side
        (plain(), free_cell(), any::<bool>()).prop_map(|(x, c, inner)| {
            let inner = if inner { "-" } else { "" };
            format!("{x} > abs({inner}{c})")
        }),
        (free_cell(), plain()).prop_map(|(c, x)| format!("abs({c}) < {x}")),
        (free_cell(), plain()).prop_map(|(c, x)| format!("-abs({c}) > {x}")),
    ]
    .prop_filter("needs a cell", |s| s.contains('L'))
}

pub fn separator() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("\n"), Just("; "), Just("  # note\n"), Just("\n\n"), Just(" ;\n")]
}

pub fn model_text() -> impl Strategy<Value = String> {
    prop::collection::vec((statement(), separator()), 1..8)
        .prop_map(|parts| parts.into_iter().map(|(s, sep)| format!("{s}{sep}")).collect())
}

pub fn random_lambda(rng: &mut impl Rng) -> DMatrix<f64> {
    let s = spec();
    DMatrix::from_fn(P, M, |j, k| {
        if s.is_zero(Cell::new(j, k)) {
            0.0
        } else {
            rng.random_range(-1.2..1.2)
        }
    })
}


/// Malformed inputs with the expected 1-based error position.
pub const MALFORMED: &[(&str, usize, usize)] = &[
    ("L[1,1] >", 1, 9),
    ("L[0,1] > 0", 1, 3),
    ("L[1,1] = L[2,1]", 1, 8),
    ("L[1,1] > L[2,1] L[3,1] > 0", 1, 17),
    ("L[1,1] > 0\nL[2,1] > foo(L[1,2])", 2, 10),
    ("abs(L[1,1]) > L[1,2]", 1, 1),
    ("L[1,1 > 0", 1, 7),
    ("1 > 0", 1, 1),
    ("abs(L[1,1]) < abs(L[1,2])", 1, 1),
    ("L[1,1] > abs(L[1,2]", 1, 20),
    ("L[1,1] > 0.3.2", 1, 13),
];
