//! Recovering the edit and the witness from an accepted proof, and assembling
//! the counterexample.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{
    eval_residuals, propagate, CircuitError, ExecutionTrace, PartialAssignment, R1CSInstance, Witness,
};
use crate::ff::{solve_linear, DensePoly, FieldElement, LinearSolution};
use crate::synth::{emit_mutated_source, interpret, parse_program, site_signal, SynthError};
use crate::viop::{edited_residuals, Accepted};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("recovered selection entry {0} is not 0 or 1")]
    NonBooleanDelta(usize),
    #[error("witness polynomial has degree {0}, must be below n = {1}")]
    DegreeOverflow(usize, usize),
    #[error("edited system has no solution: {0}")]
    NoSolution(String),
    #[error("outputs do not diverge; the accepted proof contradicts itself")]
    InternalContradiction,
    #[error("replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessSource {
    InterpolatedWitness,
    LinearReconstruction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredEdit {
    pub pool_rows: Vec<usize>,
    pub delta: Vec<bool>,
    pub c: Vec<FieldElement>,
}

impl RecoveredEdit {
    /// `(row, constant)` for every selected slot.
    pub fn pinned_rows(&self) -> Vec<(usize, FieldElement)> {
        self.pool_rows
            .iter()
            .zip(&self.delta)
            .zip(&self.c)
            .filter(|((_, on), _)| **on)
            .map(|((r, _), c)| (*r, c.clone()))
            .collect()
    }
}

pub fn extract_selection(acc: &Accepted) -> Result<RecoveredEdit, ExtractError> {
    let block = acc.block();
    let k = block.k();
    let x = acc.x_coeffs();
    let y = acc.y_coeffs();
    if let Some(j) = (k..x.len()).find(|&j| !x[j].is_zero()) {
        return Err(ExtractError::NonBooleanDelta(j));
    }
    let dv = block.decode_delta(&x[..k]);
    let c = block.decode_c(&y[..k]);
    let mut delta = Vec::with_capacity(k);
    for (i, v) in dv.iter().enumerate() {
        if v.is_zero() {
            delta.push(false);
        } else if v.is_one() {
            delta.push(true);
        } else {
            return Err(ExtractError::NonBooleanDelta(i));
        }
    }
    Ok(RecoveredEdit { pool_rows: acc.proof().pool_rows.clone(), delta, c })
}

/// Evaluates `W′` on `0..n`.
pub fn witness_from_poly(poly: &DensePoly, n: usize) -> Result<Witness, ExtractError> {
    if let Some(d) = poly.degree() {
        if d >= n {
            return Err(ExtractError::DegreeOverflow(d, n));
        }
    }
    let q = poly.modulus();
    let values = (0..n as u64).map(|i| poly.eval(&FieldElement::from_u64(q, i)).expect("same field")).collect();
    Ok(Witness::new(values)?)
}

pub fn interpolate_witness(acc: &Accepted) -> Result<Option<Witness>, ExtractError> {
    match &acc.proof().witness_poly {
        None => Ok(None),
        Some(p) => witness_from_poly(p, acc.proof().header.n).map(Some),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstruction {
    pub witness: Witness,
    /// Variables no row determined; they are set to zero.
    pub free_vars: Vec<usize>,
}

impl Reconstruction {
    pub fn is_underdetermined(&self) -> bool {
        !self.free_vars.is_empty()
    }
}

/// Solves the edited system with the inputs (and, when given, the outputs)
/// pinned: forward substitution alternates with a linear solve over the rows
/// that are linear in the remaining unknowns.
pub fn reconstruct_witness(
    inst: &R1CSInstance,
    edit: &RecoveredEdit,
    inputs: &[FieldElement],
    outputs: Option<&[FieldElement]>,
) -> Result<Reconstruction, ExtractError> {
    let edited = inst.with_rows_pinned(&edit.pinned_rows())?;
    let q = inst.modulus();
    let in_idx = inst.input_indices();
    if in_idx.len() != inputs.len() {
        return Err(ExtractError::NoSolution(format!("{} input values for {} inputs", inputs.len(), in_idx.len())));
    }
    let mut known: PartialAssignment = vec![None; inst.num_vars()];
    known[0] = Some(FieldElement::one(q));
    for (i, v) in in_idx.iter().zip(inputs) {
        known[*i] = Some(v.clone());
    }
    if let Some(ys) = outputs {
        for (i, v) in inst.public_outputs().iter().zip(ys) {
            known[*i] = Some(v.clone());
        }
    }
    let mut free_vars = Vec::new();
    loop {
        propagate(&edited, &mut known);
        let unknown: Vec<usize> = (0..inst.num_vars()).filter(|&i| known[i].is_none()).collect();
        if unknown.is_empty() {
            break;
        }
        let col: BTreeMap<usize, usize> = unknown.iter().enumerate().map(|(c, &v)| (v, c)).collect();
        let (system, rhs) = linear_rows(&edited, &known, &col);
        if system.is_empty() {
            for &v in &unknown {
                known[v] = Some(FieldElement::zero(q));
                free_vars.push(v);
            }
            continue;
        }
        match solve_linear(q, &system, &rhs, unknown.len()).map_err(CircuitError::from)? {
            LinearSolution::Inconsistent => {
                return Err(ExtractError::NoSolution("linear rows are inconsistent".into()))
            }
            LinearSolution::Unique(x) => {
                for (v, val) in unknown.iter().zip(x) {
                    known[*v] = Some(val);
                }
            }
            LinearSolution::Underdetermined { particular, free_vars: fv, .. } => {
                // Pinning the free columns lets propagation settle the rest.
                for c in fv {
                    let v = unknown[c];
                    known[v] = Some(particular[c].clone());
                    free_vars.push(v);
                }
            }
        }
    }
    let values: Vec<FieldElement> = known.into_iter().map(|k| k.expect("all known")).collect();
    let witness = Witness::new(values)?;
    if !eval_residuals(&edited, &witness)?.all_zero() {
        return Err(ExtractError::NoSolution("edited residuals are nonzero".into()));
    }
    free_vars.sort_unstable();
    Ok(Reconstruction { witness, free_vars })
}

/// Rows whose unknowns enter linearly, as `(coefficients over unknowns, rhs)`.
fn linear_rows(
    inst: &R1CSInstance,
    known: &PartialAssignment,
    col: &BTreeMap<usize, usize>,
) -> (Vec<Vec<FieldElement>>, Vec<FieldElement>) {
    let q = inst.modulus();
    let width = col.len();
    let split = |side: &crate::circuit::SparseRow| {
        let mut lin = vec![FieldElement::zero(q); width];
        let mut konst = FieldElement::zero(q);
        let mut has_unknown = false;
        for (i, c) in side.entries() {
            match &known[*i] {
                Some(v) => konst = &konst + &(c * v),
                None => {
                    lin[col[i]] = c.clone();
                    has_unknown = true;
                }
            }
        }
        (lin, konst, has_unknown)
    };
    let mut system = Vec::new();
    let mut rhs = Vec::new();
    for row in inst.rows() {
        let (al, a0, au) = split(&row.a);
        let (bl, b0, bu) = split(&row.b);
        let (cl, c0, cu) = split(&row.c);
        if au && bu {
            continue;
        }
        if !(au || bu || cu) {
            continue;
        }
        // (a0 + al·x)(b0 + bl·x) − (c0 + cl·x) = 0 with at most one side unknown.
        let coeffs: Vec<FieldElement> = (0..width).map(|j| &(&(&al[j] * &b0) + &(&bl[j] * &a0)) - &cl[j]).collect();
        system.push(coeffs);
        rhs.push(&c0 - &(&a0 * &b0));
    }
    (system, rhs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub edit: RecoveredEdit,
    pub w_prime: Witness,
    pub witness_source: WitnessSource,
    pub trace: ExecutionTrace,
    pub y_orig: Vec<FieldElement>,
    pub mutated_source: Option<String>,
    pub replayed: bool,
}

#[derive(Serialize)]
struct CounterexampleFile {
    delta: Vec<u8>,
    c: Vec<String>,
    x_prime: Vec<String>,
    z_prime: Vec<String>,
    y_prime: Vec<String>,
    y_orig: Vec<String>,
    mutated_source: Option<String>,
    replayed: bool,
}

impl Counterexample {
    pub fn to_json(&self) -> String {
        let s = |v: &[FieldElement]| v.iter().map(|x| x.to_string()).collect();
        let f = CounterexampleFile {
            delta: self.edit.delta.iter().map(|&b| b as u8).collect(),
            c: s(&self.edit.c),
            x_prime: s(&self.trace.x),
            z_prime: s(&self.trace.z),
            y_prime: s(&self.trace.y),
            y_orig: s(&self.y_orig),
            mutated_source: self.mutated_source.clone(),
            replayed: self.replayed,
        };
        serde_json::to_string_pretty(&f).expect("serializable")
    }
}

/// Substitution map for the mutated source: the site of each selected row gets
/// that row's constant.
pub fn site_substitutions(inst: &R1CSInstance, edit: &RecoveredEdit) -> BTreeMap<String, FieldElement> {
    let mut subs = BTreeMap::new();
    for (row, c) in edit.pinned_rows() {
        if let Some(site) = inst.site_of_row(row) {
            subs.entry(site.site_id.clone()).or_insert(c);
        }
    }
    subs
}

pub fn assemble_counterexample(
    inst: &R1CSInstance,
    program_text: Option<&str>,
    edit: &RecoveredEdit,
    w_prime: Witness,
    witness_source: WitnessSource,
    y_orig: &[FieldElement],
    confirm_replay: bool,
) -> Result<Counterexample, ExtractError> {
    let trace = ExecutionTrace::from_witness(inst, &w_prime)?;
    if trace.y == y_orig {
        return Err(ExtractError::InternalContradiction);
    }
    let residuals = edited_residuals(inst, &edit.pool_rows, &edit.delta, &edit.c, w_prime.values())
        .map_err(|e| ExtractError::NoSolution(e.to_string()))?;
    if residuals.iter().any(|r| !r.is_zero()) {
        return Err(ExtractError::NoSolution("w' violates the edited system".into()));
    }
    let mutated_source = match program_text {
        Some(src) => Some(emit_mutated_source(src, &site_substitutions(inst, edit))?.source_text),
        None => None,
    };
    let mut replayed = false;
    if confirm_replay {
        let src = mutated_source.as_deref().ok_or_else(|| ExtractError::Replay("no program text to replay".into()))?;
        replay(inst, src, &w_prime)?;
        replayed = true;
    }
    Ok(Counterexample {
        edit: edit.clone(),
        w_prime,
        witness_source,
        trace,
        y_orig: y_orig.to_vec(),
        mutated_source,
        replayed,
    })
}

/// Runs the mutated program on the counterexample's inputs and compares every
/// named signal with `w′`.
pub fn replay(inst: &R1CSInstance, mutated_source: &str, w_prime: &Witness) -> Result<(), ExtractError> {
    let names = inst.var_names().ok_or_else(|| ExtractError::Replay("instance carries no variable names".into()))?;
    let prog = parse_program(mutated_source)?;
    let mut inputs = BTreeMap::new();
    for i in inst.input_indices() {
        inputs.insert(names[i].clone(), w_prime.get(i).clone());
    }
    let env = interpret(&prog, &inputs, inst.modulus())?;
    for (i, name) in names.iter().enumerate().skip(1) {
        if let Some(v) = env.get(name) {
            if v != w_prime.get(i) {
                return Err(ExtractError::Replay(format!(
                    "signal {name} replays to {v}, witness has {}",
                    w_prime.get(i)
                )));
            }
        }
    }
    Ok(())
}

/// Signal name of a site, for reports.
pub fn site_name(site_id: &str) -> &str {
    site_signal(site_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{execute, Constraint, SparseRow, VarClass};
    use crate::ff::test101;
    use crate::toy;
    use crate::viop::{prove, verify, IopConfig};
    use crate::vortex::choose_nodes;

    fn fe(v: u64) -> FieldElement {
        FieldElement::from_u64(&test101(), v)
    }

    #[test]
    fn toy_extraction_both_branches() {
        let inst = toy::instance();
        let y = toy::honest_witness(&inst, 2, 3).outputs(&inst);
        let edited = inst.with_rows_pinned(&[(0, fe(2)), (2, fe(3))]).unwrap();
        let w = execute(&edited, &[fe(2), fe(3)]).unwrap();
        let plan = choose_nodes(&test101(), 3, 2, 3).unwrap();
        let cfg = IopConfig::default();
        let c = [fe(2), fe(0), fe(3)];
        let proof = prove(&inst, &[0, 1, 2], &plan, &[true, false, true], &c, &w, &y, &cfg, true).unwrap();
        let acc = verify(&proof, &inst, &[0, 1, 2], &plan, &y, &cfg).unwrap();
        let edit = extract_selection(&acc).unwrap();
        assert_eq!(edit.delta, vec![true, false, true]);
        assert_eq!(edit.c, c.to_vec());
        let wi = interpolate_witness(&acc).unwrap().unwrap();
        assert_eq!(wi, w);
        let wr = reconstruct_witness(&inst, &edit, &[fe(2), fe(3)], None).unwrap();
        assert!(!wr.is_underdetermined());
        assert_eq!(wr.witness, w);
        let cx =
            assemble_counterexample(&inst, Some(toy::PROGRAM), &edit, wi, WitnessSource::InterpolatedWitness, &y, true)
                .unwrap();
        assert!(cx.replayed);
        assert_eq!(cx.trace.y, vec![fe(4), fe(3)]);
        assert!(cx.mutated_source.unwrap().contains("c <== 2;"));
    }

    #[test]
    fn proof_without_witness_has_nothing_to_interpolate() {
        let inst = toy::instance();
        let y = toy::honest_witness(&inst, 2, 3).outputs(&inst);
        let edited = inst.with_rows_pinned(&[(2, fe(3))]).unwrap();
        let w = execute(&edited, &[fe(2), fe(3)]).unwrap();
        let plan = choose_nodes(&test101(), 3, 2, 3).unwrap();
        let cfg = IopConfig::default();
        let c = [fe(0), fe(0), fe(3)];
        let proof = prove(&inst, &[0, 1, 2], &plan, &[false, false, true], &c, &w, &y, &cfg, false).unwrap();
        let acc = verify(&proof, &inst, &[0, 1, 2], &plan, &y, &cfg).unwrap();
        assert!(interpolate_witness(&acc).unwrap().is_none());
        assert_eq!(extract_selection(&acc).unwrap().c, c.to_vec());
    }

    #[test]
    fn degree_overflow() {
        let p = DensePoly::from_u64s(&test101(), &[1, 0, 0, 1]);
        assert_eq!(witness_from_poly(&p, 3).unwrap_err(), ExtractError::DegreeOverflow(3, 3));
    }

    #[test]
    fn inconsistent_edit_has_no_solution() {
        // Rows: x*1 = y and y*1 = 5. Pinning row 0 to 7 forces y = 7 against y = 5.
        let q = test101();
        let inst = R1CSInstance::new(
            q,
            vec![VarClass::One, VarClass::PrivateInput, VarClass::Intermediate],
            vec![
                Constraint {
                    a: SparseRow::new(vec![(1, fe(1))]),
                    b: SparseRow::new(vec![(0, fe(1))]),
                    c: SparseRow::new(vec![(2, fe(1))]),
                },
                Constraint {
                    a: SparseRow::new(vec![(2, fe(1))]),
                    b: SparseRow::new(vec![(0, fe(1))]),
                    c: SparseRow::new(vec![(0, fe(5))]),
                },
            ],
            vec![],
        )
        .unwrap();
        let edit = RecoveredEdit { pool_rows: vec![0], delta: vec![true], c: vec![fe(7)] };
        assert!(matches!(reconstruct_witness(&inst, &edit, &[fe(5)], None), Err(ExtractError::NoSolution(_))));
    }

    #[test]
    fn trivial_and_underdetermined_systems() {
        let q = test101();
        let one_var = R1CSInstance::new(q.clone(), vec![VarClass::One], vec![], vec![]).unwrap();
        let edit = RecoveredEdit { pool_rows: vec![], delta: vec![], c: vec![] };
        let r = reconstruct_witness(&one_var, &edit, &[], None).unwrap();
        assert_eq!(r.witness.values(), &[fe(1)]);
        // u + v = x leaves one degree of freedom.
        let inst = R1CSInstance::new(
            q,
            vec![VarClass::One, VarClass::PrivateInput, VarClass::Intermediate, VarClass::Intermediate],
            vec![Constraint {
                a: SparseRow::new(vec![(2, fe(1)), (3, fe(1))]),
                b: SparseRow::new(vec![(0, fe(1))]),
                c: SparseRow::new(vec![(1, fe(1))]),
            }],
            vec![],
        )
        .unwrap();
        let r = reconstruct_witness(&inst, &edit, &[fe(9)], None).unwrap();
        assert!(r.is_underdetermined());
        assert_eq!(r.free_vars, vec![3]);
        assert_eq!(r.witness.values(), &[fe(1), fe(9), fe(9), fe(0)]);
    }
}
