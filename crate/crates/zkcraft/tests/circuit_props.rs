use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zkcraft::circuit::{
    check_tcct, circuit_to_json, differential_check, eval_residuals, execute, parse_circuit_json, parse_r1cs_binary,
    parse_witness_json, witness_to_json, write_r1cs_binary, CircuitError, Constraint, ExecutionTrace, R1CSInstance,
    SparseRow, VarClass, Witness,
};
use zkcraft::ff::{test101, FieldElement, Modulus};
use zkcraft::gen::{random_forward_circuit, Shape};
use zkcraft::toy;

fn fe(q: &Modulus, v: u64) -> FieldElement {
    FieldElement::from_u64(q, v)
}

fn witness(q: &Modulus, vals: &[u64]) -> Witness {
    Witness::new(vals.iter().map(|&v| fe(q, v)).collect()).unwrap()
}

#[test]
fn toy_residuals() {
    let inst = toy::instance();
    let q = inst.modulus().clone();
    assert!(eval_residuals(&inst, &witness(&q, &[1, 2, 3, 6, 8, 11])).unwrap().all_zero());
    let bad = eval_residuals(&inst, &witness(&q, &[1, 2, 3, 7, 8, 11])).unwrap();
    // 2·3 − 7 = −1; row 1 then reads (7 + 2)·1 − 8 = 1.
    assert_eq!(bad.residuals, vec![fe(&q, 100), fe(&q, 1), fe(&q, 0)]);
}

#[test]
fn empty_instance_has_empty_residuals() {
    let inst = parse_circuit_json(
        br#"{"modulus":"101","num_vars":2,"var_classes":["one","pub_out"],"constraints":[],"weak_sites":[],"public_outputs":[1]}"#,
    )
    .unwrap();
    let r = eval_residuals(&inst, &witness(inst.modulus(), &[1, 42])).unwrap();
    assert!(r.residuals.is_empty() && r.all_zero());
}

#[test]
fn out_of_range_index_is_a_schema_error() {
    let err = parse_circuit_json(
        br#"{"modulus":"101","num_vars":2,"var_classes":["one","pub_out"],"constraints":[{"a":{"2":"1"},"b":{"0":"1"},"c":{"1":"1"}}],"weak_sites":[],"public_outputs":[1]}"#,
    )
    .unwrap_err();
    assert!(matches!(err, CircuitError::Schema(_)));
}

#[test]
fn tcct_predicate_cases() {
    let inst = toy::instance();
    let q = inst.modulus().clone();
    let honest = witness(&q, &[1, 2, 3, 6, 8, 11]);
    let y = honest.outputs(&inst);
    let trace = ExecutionTrace::from_witness(&inst, &honest).unwrap();
    assert!(!check_tcct(&inst, &trace, &y).unwrap());
    let broken = ExecutionTrace::from_witness(&inst, &witness(&q, &[1, 2, 3, 7, 9, 12])).unwrap();
    assert!(!check_tcct(&inst, &broken, &y).unwrap());
    let edited = inst.with_rows_pinned(&[(0, fe(&q, 2)), (2, fe(&q, 3))]).unwrap();
    let w = witness(&q, &[1, 2, 3, 2, 4, 3]);
    assert!(check_tcct(&edited, &ExecutionTrace::from_witness(&edited, &w).unwrap(), &y).unwrap());
}

/// `z·(z − 1) = 0` and `(z + x)·1 = y`: shifting `z` and `y` together by one stays valid.
fn boolean_gadget() -> R1CSInstance {
    let q = test101();
    let e = |v: &[(usize, u64)]| SparseRow::new(v.iter().map(|&(i, c)| (i, fe(&q, c))).collect());
    R1CSInstance::new(
        q.clone(),
        vec![VarClass::One, VarClass::PrivateInput, VarClass::Intermediate, VarClass::PublicOutput],
        vec![
            Constraint { a: e(&[(2, 1)]), b: e(&[(2, 1), (0, 100)]), c: e(&[]) },
            Constraint { a: e(&[(2, 1), (1, 1)]), b: e(&[(0, 1)]), c: e(&[(3, 1)]) },
        ],
        vec![],
    )
    .unwrap()
}

fn full_recheck(
    inst: &R1CSInstance,
    base: &Witness,
    dz: &BTreeMap<usize, FieldElement>,
    dy: &BTreeMap<usize, FieldElement>,
) -> bool {
    if dy.values().all(|d| d.is_zero()) {
        return false;
    }
    let mut vals = base.values().to_vec();
    for (i, d) in dz.iter().chain(dy) {
        vals[*i] = &vals[*i] + d;
    }
    eval_residuals(inst, &Witness::new(vals).unwrap()).unwrap().all_zero()
}

#[test]
fn differential_matches_full_recheck_on_gadget() {
    let inst = boolean_gadget();
    let q = inst.modulus().clone();
    let base = witness(&q, &[1, 5, 0, 5]);
    assert!(!differential_check(&inst, &base, &BTreeMap::new(), &BTreeMap::new()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seen = [0usize; 2];
    for _ in 0..100 {
        let dz_v = match rng.gen_range(0..3) {
            0 => fe(&q, 0),
            1 => fe(&q, 1),
            _ => FieldElement::random(&q, &mut rng),
        };
        let dy_v = if rng.gen_bool(0.5) { dz_v.clone() } else { FieldElement::random(&q, &mut rng) };
        let dz = BTreeMap::from([(2, dz_v)]);
        let dy = BTreeMap::from([(3, dy_v)]);
        let got = differential_check(&inst, &base, &dz, &dy).unwrap();
        assert_eq!(got, full_recheck(&inst, &base, &dz, &dy));
        seen[got as usize] += 1;
    }
    assert!(seen[0] > 0 && seen[1] > 0);
}

#[test]
fn differential_matches_full_recheck_on_random_circuits() {
    let q = test101();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let shape = Shape { inputs: 2, defined: 4, outputs: 2, padding_rows: 2 };
        let inst = random_forward_circuit(&mut rng, &q, shape, &[]);
        let xs: Vec<FieldElement> = (0..2).map(|_| FieldElement::random(&q, &mut rng)).collect();
        let base = execute(&inst, &xs).unwrap();
        let mut dz = BTreeMap::new();
        let mut dy = BTreeMap::new();
        for (i, class) in inst.var_classes().iter().enumerate() {
            let d = if rng.gen_bool(0.5) { FieldElement::random(&q, &mut rng) } else { fe(&q, 0) };
            match class {
                VarClass::Intermediate => {
                    dz.insert(i, d);
                }
                VarClass::PublicOutput => {
                    dy.insert(i, d);
                }
                _ => {}
            }
        }
        assert_eq!(differential_check(&inst, &base, &dz, &dy).unwrap(), full_recheck(&inst, &base, &dz, &dy));
    }
}

#[test]
fn json_roundtrip_is_identity() {
    let inst = toy::instance();
    let text = circuit_to_json(&inst);
    let back = parse_circuit_json(text.as_bytes()).unwrap();
    assert_eq!(back, inst);
    assert_eq!(circuit_to_json(&back), text);
    let w = toy::honest_witness(&inst, 2, 3);
    assert_eq!(parse_witness_json(&inst, witness_to_json(&w).as_bytes()).unwrap(), w);
}

fn square_circuit() -> R1CSInstance {
    let q = test101();
    let one = |i: usize| SparseRow::new(vec![(i, fe(&q, 1))]);
    R1CSInstance::new(
        q.clone(),
        vec![VarClass::One, VarClass::PublicOutput, VarClass::PrivateInput],
        vec![Constraint { a: one(2), b: one(2), c: one(1) }],
        vec![],
    )
    .unwrap()
}

#[test]
fn binary_roundtrip_magic_and_truncation() {
    let inst = square_circuit();
    let bytes = write_r1cs_binary(&inst).unwrap();
    let back = parse_r1cs_binary(&bytes).unwrap();
    assert_eq!((back.num_constraints(), back.num_vars()), (1, 3));
    assert_eq!(back.rows(), inst.rows());
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"r2cs");
    assert_eq!(parse_r1cs_binary(&bad).unwrap_err(), CircuitError::MagicMismatch);
    for cut in 0..bytes.len() {
        assert!(parse_r1cs_binary(&bytes[..cut]).is_err(), "prefix of {cut} bytes parsed");
    }
}

#[test]
fn binary_roundtrip_of_circom_ordered_toy() {
    let inst = toy::circom_ordered_instance();
    let back = parse_r1cs_binary(&write_r1cs_binary(&inst).unwrap()).unwrap();
    assert_eq!(back.rows(), inst.rows());
    assert_eq!(back.public_outputs(), inst.public_outputs());
}

proptest! {
    #[test]
    fn forward_execution_satisfies_every_row(seed in any::<u64>()) {
        let q = test101();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape { inputs: 2, defined: 5, outputs: 2, padding_rows: 3 };
        let inst = random_forward_circuit(&mut rng, &q, shape, &[]);
        let xs: Vec<FieldElement> = (0..2).map(|_| FieldElement::random(&q, &mut rng)).collect();
        let w = execute(&inst, &xs).unwrap();
        prop_assert!(eval_residuals(&inst, &w).unwrap().all_zero());
        let back = parse_circuit_json(circuit_to_json(&inst).as_bytes()).unwrap();
        prop_assert_eq!(back, inst);
    }
}
