//! The three-row walkthrough circuit `c = a*b, d = c+a, e = d+b` over q = 101.

use crate::circuit::{parse_circuit_json, Constraint, R1CSInstance, SparseRow, VarClass, Witness};
use crate::ff::{test101, FieldElement};

pub const CIRCUIT_JSON: &str = include_str!("../data/toy.json");
pub const PROGRAM: &str = include_str!("../data/toy.circom");

pub fn instance() -> R1CSInstance {
    parse_circuit_json(CIRCUIT_JSON.as_bytes()).expect("bundled toy circuit is valid")
}

pub fn honest_witness(inst: &R1CSInstance, a: u64, b: u64) -> Witness {
    let q = inst.modulus();
    let (a, b) = (FieldElement::from_u64(q, a), FieldElement::from_u64(q, b));
    let c = &a * &b;
    let d = &c + &a;
    let e = &d + &b;
    Witness::new(vec![FieldElement::one(q), a, b, c, d, e]).expect("starts with one")
}

/// Same circuit with wires permuted into circom order: one, d, e, a, b, c.
pub fn circom_ordered_instance() -> R1CSInstance {
    let q = test101();
    let one = || FieldElement::one(&q);
    let lc = |idx: &[usize]| SparseRow::new(idx.iter().map(|&i| (i, one())).collect());
    R1CSInstance::new(
        q.clone(),
        vec![
            VarClass::One,
            VarClass::PublicOutput,
            VarClass::PublicOutput,
            VarClass::PrivateInput,
            VarClass::PrivateInput,
            VarClass::Intermediate,
        ],
        vec![
            Constraint { a: lc(&[3]), b: lc(&[4]), c: lc(&[5]) },
            Constraint { a: lc(&[3, 5]), b: lc(&[0]), c: lc(&[1]) },
            Constraint { a: lc(&[1, 4]), b: lc(&[0]), c: lc(&[2]) },
        ],
        vec![],
    )
    .expect("valid")
}
