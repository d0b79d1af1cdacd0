//! Random forward circuits and honest edit cases, for tests, benches and the
//! demo page.
//!
//! Every generated row defines one fresh wire as a product (or a linear
//! combination) of earlier wires, so forward execution always succeeds on the
//! unedited circuit. Padding rows are scaled copies of rows outside the pool,
//! which keeps edited circuits executable.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{execute, Constraint, R1CSInstance, SparseRow, VarClass, Witness};
use crate::ff::{FieldElement, Modulus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub inputs: usize,
    pub defined: usize,
    pub outputs: usize,
    pub padding_rows: usize,
}

fn random_lc(rng: &mut ChaCha8Rng, q: &Modulus, upto: usize, max_terms: usize) -> SparseRow {
    let terms = rng.gen_range(1..=max_terms.min(upto));
    let mut idx: Vec<usize> = (0..upto).collect();
    idx.shuffle(rng);
    SparseRow::new(idx.into_iter().take(terms).map(|i| (i, FieldElement::random_nonzero(q, rng))).collect())
}

/// A circuit of the given shape. The last `outputs` defined wires are public
/// outputs; inputs are public or private at random.
pub fn random_forward_circuit(rng: &mut ChaCha8Rng, q: &Modulus, shape: Shape, no_copy: &[usize]) -> R1CSInstance {
    assert!(shape.outputs >= 1 && shape.outputs <= shape.defined);
    let n = 1 + shape.inputs + shape.defined;
    let mut classes = vec![VarClass::One];
    for _ in 0..shape.inputs {
        classes.push(if rng.gen_bool(0.5) { VarClass::PrivateInput } else { VarClass::PublicInput });
    }
    for j in 0..shape.defined {
        classes.push(if j + shape.outputs >= shape.defined { VarClass::PublicOutput } else { VarClass::Intermediate });
    }
    let one = FieldElement::one(q);
    let mut rows = Vec::new();
    for v in 1 + shape.inputs..n {
        let a = random_lc(rng, q, v, 3);
        let b = if rng.gen_bool(0.7) { random_lc(rng, q, v, 2) } else { SparseRow::new(vec![(0, one.clone())]) };
        let coeff = if rng.gen_bool(0.8) { one.clone() } else { FieldElement::random_nonzero(q, rng) };
        rows.push(Constraint { a, b, c: SparseRow::new(vec![(v, coeff)]) });
    }
    let copyable: Vec<usize> = (0..rows.len()).filter(|r| !no_copy.contains(r)).collect();
    if !copyable.is_empty() {
        for _ in 0..shape.padding_rows {
            let src = rows[*copyable.choose(rng).expect("nonempty")].clone();
            let s = FieldElement::random_nonzero(q, rng);
            let scale = |r: &SparseRow| SparseRow::new(r.entries().iter().map(|(i, c)| (*i, c * &s)).collect());
            rows.push(Constraint { a: scale(&src.a), b: src.b.clone(), c: scale(&src.c) });
        }
    }
    R1CSInstance::new(q.clone(), classes, rows, vec![]).expect("generated instance is well formed")
}

#[derive(Debug, Clone)]
pub struct HonestCase {
    pub inst: R1CSInstance,
    pub pool_rows: Vec<usize>,
    pub delta: Vec<bool>,
    pub c: Vec<FieldElement>,
    pub inputs: Vec<FieldElement>,
    pub w_orig: Witness,
    pub w_prime: Witness,
    pub y_orig: Vec<FieldElement>,
}

impl HonestCase {
    pub fn edits(&self) -> Vec<(usize, FieldElement)> {
        self.pool_rows
            .iter()
            .zip(&self.delta)
            .zip(&self.c)
            .filter(|((_, on), _)| **on)
            .map(|((r, _), c)| (*r, c.clone()))
            .collect()
    }
}

/// A circuit with at most `max_m` rows and `max_n` wires together with an edit
/// of a random pool whose edited execution changes some public output.
pub fn random_honest_case(rng: &mut ChaCha8Rng, q: &Modulus, max_m: usize, max_n: usize) -> HonestCase {
    assert!(max_n >= 3 && max_m >= 1);
    loop {
        let inputs = rng.gen_range(1..=2.min(max_n - 2));
        let defined = rng.gen_range(1..=(max_n - 1 - inputs).min(max_m));
        let outputs = rng.gen_range(1..=defined.min(3));
        let k = rng.gen_range(1..=defined.min(4));
        let mut pool: Vec<usize> = (0..defined).collect();
        pool.shuffle(rng);
        pool.truncate(k);
        let padding_rows = rng.gen_range(0..=max_m - defined);
        let shape = Shape { inputs, defined, outputs, padding_rows };
        let inst = random_forward_circuit(rng, q, shape, &pool);
        let xs: Vec<FieldElement> = (0..inputs).map(|_| FieldElement::random(q, rng)).collect();
        let w_orig = execute(&inst, &xs).expect("forward circuit executes");
        let y_orig = w_orig.outputs(&inst);
        for _ in 0..8 {
            let mut delta: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.5)).collect();
            let j = rng.gen_range(0..k);
            delta[j] = true;
            let c: Vec<FieldElement> =
                (0..k).map(|i| if delta[i] { FieldElement::random(q, rng) } else { FieldElement::zero(q) }).collect();
            let case = HonestCase {
                inst: inst.clone(),
                pool_rows: pool.clone(),
                delta,
                c,
                inputs: xs.clone(),
                w_orig: w_orig.clone(),
                w_prime: w_orig.clone(),
                y_orig: y_orig.clone(),
            };
            let Ok(edited) = inst.with_rows_pinned(&case.edits()) else { continue };
            let Some(w_prime) = execute(&edited, &xs) else { continue };
            if w_prime.outputs(&inst) != y_orig {
                return HonestCase { w_prime, ..case };
            }
        }
    }
}
