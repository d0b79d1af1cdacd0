//! R1CS data model: JSON and circom `.r1cs` ingestion, witnesses, residuals and
//! the trace-consistency predicate.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ff::{FfError, FieldElement, FieldModulus, Modulus};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("not an r1cs file (bad magic)")]
    MagicMismatch,
    #[error("truncated section: {0}")]
    TruncatedSection(String),
    #[error("unsupported r1cs version {0}")]
    UnsupportedVersion(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("row index {0} out of range")]
    IndexOutOfRange(usize),
    #[error(transparent)]
    Field(#[from] FfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarClass {
    #[serde(rename = "one")]
    One,
    #[serde(rename = "pub_in")]
    PublicInput,
    #[serde(rename = "pub_out")]
    PublicOutput,
    #[serde(rename = "priv_in")]
    PrivateInput,
    #[serde(rename = "inter")]
    Intermediate,
}

impl VarClass {
    /// Constant, public-input and public-output wires form the K side of the
    /// row diagnostics; everything else is a witness-side wire.
    pub fn is_k_side(self) -> bool {
        matches!(self, VarClass::One | VarClass::PublicInput | VarClass::PublicOutput)
    }

    pub fn is_input(self) -> bool {
        matches!(self, VarClass::PublicInput | VarClass::PrivateInput)
    }
}

/// Sorted `(index, coefficient)` pairs with no zero coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseRow {
    entries: Vec<(usize, FieldElement)>,
}

impl SparseRow {
    pub fn new(mut entries: Vec<(usize, FieldElement)>) -> Self {
        entries.sort_by_key(|(i, _)| *i);
        let mut merged: Vec<(usize, FieldElement)> = Vec::with_capacity(entries.len());
        for (i, c) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc = &*acc + &c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|(_, c)| !c.is_zero());
        SparseRow { entries: merged }
    }

    pub fn entries(&self) -> &[(usize, FieldElement)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn coeff_of(&self, idx: usize) -> Option<&FieldElement> {
        self.entries.binary_search_by_key(&idx, |(i, _)| *i).ok().map(|p| &self.entries[p].1)
    }

    pub fn dot(&self, w: &[FieldElement], modulus: &Modulus) -> FieldElement {
        let mut acc = FieldElement::zero(modulus);
        for (i, c) in &self.entries {
            acc = &acc + &(c * &w[*i]);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Constraint {
    pub a: SparseRow,
    pub b: SparseRow,
    pub c: SparseRow,
}

impl Constraint {
    pub fn support(&self) -> BTreeSet<usize> {
        self.a.entries().iter().chain(self.b.entries()).chain(self.c.entries()).map(|(i, _)| *i).collect()
    }

    pub fn residual(&self, w: &[FieldElement], modulus: &Modulus) -> FieldElement {
        let ab = &self.a.dot(w, modulus) * &self.b.dot(w, modulus);
        &ab - &self.c.dot(w, modulus)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakSite {
    pub site_id: String,
    pub rows: Vec<usize>,
}

#[derive(Debug)]
pub struct R1CSInstance {
    modulus: Modulus,
    num_vars: usize,
    rows: Vec<Constraint>,
    var_classes: Vec<VarClass>,
    weak_sites: Vec<WeakSite>,
    var_names: Option<Vec<String>>,
    occurrences: OnceLock<Vec<Vec<usize>>>,
}

impl Clone for R1CSInstance {
    fn clone(&self) -> Self {
        R1CSInstance {
            modulus: self.modulus.clone(),
            num_vars: self.num_vars,
            rows: self.rows.clone(),
            var_classes: self.var_classes.clone(),
            weak_sites: self.weak_sites.clone(),
            var_names: self.var_names.clone(),
            occurrences: OnceLock::new(),
        }
    }
}

impl PartialEq for R1CSInstance {
    fn eq(&self, other: &Self) -> bool {
        self.modulus.q() == other.modulus.q()
            && self.num_vars == other.num_vars
            && self.rows == other.rows
            && self.var_classes == other.var_classes
            && self.weak_sites == other.weak_sites
            && self.var_names == other.var_names
    }
}

impl R1CSInstance {
    pub fn new(
        modulus: Modulus,
        var_classes: Vec<VarClass>,
        rows: Vec<Constraint>,
        weak_sites: Vec<WeakSite>,
    ) -> Result<Self, CircuitError> {
        let num_vars = var_classes.len();
        if num_vars == 0 || var_classes[0] != VarClass::One {
            return Err(CircuitError::Invariant("index 0 must be the constant-one wire".into()));
        }
        if let Some(p) = var_classes.iter().skip(1).position(|c| *c == VarClass::One) {
            return Err(CircuitError::Invariant(format!("only index 0 may carry class one (index {})", p + 1)));
        }
        for (r, row) in rows.iter().enumerate() {
            for (i, _) in row.a.entries().iter().chain(row.b.entries()).chain(row.c.entries()) {
                if *i >= num_vars {
                    return Err(CircuitError::Schema(format!(
                        "row {r} references variable {i} but num_vars is {num_vars}"
                    )));
                }
            }
        }
        let inst = R1CSInstance {
            modulus,
            num_vars,
            rows,
            var_classes,
            weak_sites: Vec::new(),
            var_names: None,
            occurrences: OnceLock::new(),
        };
        inst.with_weak_sites(weak_sites)
    }

    /// Replaces the weak-site map, validating row bounds and disjointness.
    pub fn with_weak_sites(mut self, sites: Vec<WeakSite>) -> Result<Self, CircuitError> {
        let mut seen = BTreeSet::new();
        for s in &sites {
            for &r in &s.rows {
                if r >= self.rows.len() {
                    return Err(CircuitError::Invariant(format!(
                        "weak site {} names row {r} but there are {} rows",
                        s.site_id,
                        self.rows.len()
                    )));
                }
                if !seen.insert(r) {
                    return Err(CircuitError::Invariant(format!("row {r} appears in more than one weak site")));
                }
            }
        }
        self.weak_sites = sites;
        Ok(self)
    }

    pub fn with_var_names(mut self, names: Vec<String>) -> Result<Self, CircuitError> {
        if names.len() != self.num_vars {
            return Err(CircuitError::Invariant(format!(
                "{} variable names for {} variables",
                names.len(),
                self.num_vars
            )));
        }
        self.var_names = Some(names);
        Ok(self)
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> Result<&Constraint, CircuitError> {
        self.rows.get(i).ok_or(CircuitError::IndexOutOfRange(i))
    }

    pub fn var_classes(&self) -> &[VarClass] {
        &self.var_classes
    }

    pub fn weak_sites(&self) -> &[WeakSite] {
        &self.weak_sites
    }

    pub fn var_names(&self) -> Option<&[String]> {
        self.var_names.as_deref()
    }

    pub fn var_name(&self, i: usize) -> String {
        match &self.var_names {
            Some(n) => n[i].clone(),
            None => format!("w{i}"),
        }
    }

    pub fn indices_of(&self, class: VarClass) -> Vec<usize> {
        (0..self.num_vars).filter(|&i| self.var_classes[i] == class).collect()
    }

    pub fn public_outputs(&self) -> Vec<usize> {
        self.indices_of(VarClass::PublicOutput)
    }

    pub fn input_indices(&self) -> Vec<usize> {
        (0..self.num_vars).filter(|&i| self.var_classes[i].is_input()).collect()
    }

    pub fn site_of_row(&self, row: usize) -> Option<&WeakSite> {
        self.weak_sites.iter().find(|s| s.rows.contains(&row))
    }

    /// For every variable, the rows whose support contains it.
    pub fn occurrences(&self) -> &[Vec<usize>] {
        self.occurrences.get_or_init(|| {
            let mut occ = vec![Vec::new(); self.num_vars];
            for (r, row) in self.rows.iter().enumerate() {
                for i in row.support() {
                    occ[i].push(r);
                }
            }
            occ
        })
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.a.entries().len() + r.b.entries().len() + r.c.entries().len()).sum()
    }

    /// The instance with each listed row collapsed to `constant = <c-side>`, which
    /// is what a weak assignment `x <== constant` compiles to.
    pub fn with_rows_pinned(&self, edits: &[(usize, FieldElement)]) -> Result<Self, CircuitError> {
        let mut rows = self.rows.clone();
        for (r, value) in edits {
            let row = rows.get_mut(*r).ok_or(CircuitError::IndexOutOfRange(*r))?;
            row.a = SparseRow::new(vec![(0, value.clone())]);
            row.b = SparseRow::new(vec![(0, FieldElement::one(&self.modulus))]);
        }
        let mut out = R1CSInstance::new(self.modulus.clone(), self.var_classes.clone(), rows, self.weak_sites.clone())?;
        out.var_names = self.var_names.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    values: Vec<FieldElement>,
}

impl Witness {
    pub fn new(values: Vec<FieldElement>) -> Result<Self, CircuitError> {
        match values.first() {
            Some(v) if v.is_one() => Ok(Witness { values }),
            _ => Err(CircuitError::Invariant("witness must start with the constant 1".into())),
        }
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &FieldElement {
        &self.values[i]
    }

    pub fn outputs(&self, inst: &R1CSInstance) -> Vec<FieldElement> {
        inst.public_outputs().iter().map(|&i| self.values[i].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualVector {
    pub residuals: Vec<FieldElement>,
}

impl ResidualVector {
    pub fn all_zero(&self) -> bool {
        self.residuals.iter().all(|r| r.is_zero())
    }
}

/// Witness split by class: `x` holds every input wire (public and private),
/// `z` the intermediates and `y` the public outputs, each in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub x: Vec<FieldElement>,
    pub z: Vec<FieldElement>,
    pub y: Vec<FieldElement>,
}

impl ExecutionTrace {
    pub fn from_witness(inst: &R1CSInstance, w: &Witness) -> Result<Self, CircuitError> {
        check_shape(inst, w)?;
        let pick = |pred: &dyn Fn(VarClass) -> bool| -> Vec<FieldElement> {
            (0..inst.num_vars()).filter(|&i| pred(inst.var_classes()[i])).map(|i| w.values[i].clone()).collect()
        };
        Ok(ExecutionTrace {
            x: pick(&|c| c.is_input()),
            z: pick(&|c| c == VarClass::Intermediate),
            y: pick(&|c| c == VarClass::PublicOutput),
        })
    }

    pub fn to_witness(&self, inst: &R1CSInstance) -> Result<Witness, CircuitError> {
        let (mut xi, mut zi, mut yi) = (self.x.iter(), self.z.iter(), self.y.iter());
        let mut values = Vec::with_capacity(inst.num_vars());
        for class in inst.var_classes() {
            let next = match class {
                VarClass::One => Some(FieldElement::one(inst.modulus())),
                VarClass::PublicInput | VarClass::PrivateInput => xi.next().cloned(),
                VarClass::Intermediate => zi.next().cloned(),
                VarClass::PublicOutput => yi.next().cloned(),
            };
            values.push(
                next.ok_or_else(|| CircuitError::ShapeMismatch("trace shorter than the variable classes".into()))?,
            );
        }
        if xi.next().is_some() || zi.next().is_some() || yi.next().is_some() {
            return Err(CircuitError::ShapeMismatch("trace longer than the variable classes".into()));
        }
        Witness::new(values)
    }
}

fn check_shape(inst: &R1CSInstance, w: &Witness) -> Result<(), CircuitError> {
    if w.len() != inst.num_vars() {
        return Err(CircuitError::ShapeMismatch(format!(
            "witness has {} values, instance has {} variables",
            w.len(),
            inst.num_vars()
        )));
    }
    if w.values.iter().any(|v| v.modulus().q() != inst.modulus().q()) {
        return Err(CircuitError::Field(FfError::ModulusMismatch));
    }
    Ok(())
}

pub fn eval_residuals(inst: &R1CSInstance, w: &Witness) -> Result<ResidualVector, CircuitError> {
    check_shape(inst, w)?;
    Ok(ResidualVector { residuals: inst.rows().iter().map(|r| r.residual(w.values(), inst.modulus())).collect() })
}

/// True iff the trace satisfies every row and its outputs differ from `original_y`.
pub fn check_tcct(
    inst: &R1CSInstance,
    trace: &ExecutionTrace,
    original_y: &[FieldElement],
) -> Result<bool, CircuitError> {
    if original_y.len() != trace.y.len() {
        return Err(CircuitError::ShapeMismatch("original output length differs from the trace".into()));
    }
    let w = trace.to_witness(inst)?;
    if trace.y == original_y {
        return Ok(false);
    }
    Ok(eval_residuals(inst, &w)?.all_zero())
}

/// Re-checks only the rows touched by the deltas (additive differences on
/// intermediate and output wires) against a base witness that satisfies all rows.
pub fn differential_check(
    inst: &R1CSInstance,
    base: &Witness,
    delta_z: &BTreeMap<usize, FieldElement>,
    delta_y: &BTreeMap<usize, FieldElement>,
) -> Result<bool, CircuitError> {
    check_shape(inst, base)?;
    for &i in delta_z.keys() {
        if inst.var_classes().get(i) != Some(&VarClass::Intermediate) {
            return Err(CircuitError::ShapeMismatch(format!("delta_z index {i} is not an intermediate wire")));
        }
    }
    for &i in delta_y.keys() {
        if inst.var_classes().get(i) != Some(&VarClass::PublicOutput) {
            return Err(CircuitError::ShapeMismatch(format!("delta_y index {i} is not a public output")));
        }
    }
    if delta_y.values().all(|d| d.is_zero()) {
        return Ok(false);
    }
    let occ = inst.occurrences();
    let mut touched = BTreeSet::new();
    let mut patched: BTreeMap<usize, FieldElement> = BTreeMap::new();
    for (&i, d) in delta_z.iter().chain(delta_y) {
        if d.is_zero() {
            continue;
        }
        touched.extend(occ[i].iter().copied());
        patched.insert(i, &base.values[i] + d);
    }
    let m = inst.modulus();
    let val = |i: usize| patched.get(&i).unwrap_or(&base.values[i]);
    let dot = |row: &SparseRow| row.entries().iter().fold(FieldElement::zero(m), |acc, (i, c)| &acc + &(c * val(*i)));
    for r in touched {
        let row = &inst.rows()[r];
        if &dot(&row.a) * &dot(&row.b) != dot(&row.c) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Values fixed so far by [`propagate`]; `None` marks an unknown.
pub type PartialAssignment = Vec<Option<FieldElement>>;

/// Repeatedly solves rows that are linear in their single remaining unknown.
/// Rows quadratic in the unknown, or where it cancels, are left alone.
pub fn propagate(inst: &R1CSInstance, known: &mut PartialAssignment) -> usize {
    let m = inst.modulus();
    let occ = inst.occurrences();
    let mut queue: Vec<usize> = (0..inst.num_constraints()).rev().collect();
    let mut queued = vec![true; inst.num_constraints()];
    let mut solved = 0;
    while let Some(r) = queue.pop() {
        queued[r] = false;
        let row = &inst.rows()[r];
        let unknown: BTreeSet<usize> = row.support().into_iter().filter(|&i| known[i].is_none()).collect();
        if unknown.len() != 1 {
            continue;
        }
        let u = *unknown.iter().next().expect("one element");
        let split = |side: &SparseRow| {
            let mut coeff = FieldElement::zero(m);
            let mut rest = FieldElement::zero(m);
            for (i, c) in side.entries() {
                if *i == u {
                    coeff = c.clone();
                } else {
                    rest = &rest + &(c * known[*i].as_ref().expect("known"));
                }
            }
            (coeff, rest)
        };
        let (al, a0) = split(&row.a);
        let (be, b0) = split(&row.b);
        let (ga, c0) = split(&row.c);
        if !(&al * &be).is_zero() {
            continue;
        }
        let lin = &(&(&al * &b0) + &(&be * &a0)) - &ga;
        if lin.is_zero() {
            continue;
        }
        let constant = &(&a0 * &b0) - &c0;
        let value = (-&constant).try_div(&lin).expect("nonzero divisor");
        known[u] = Some(value);
        solved += 1;
        for &r2 in &occ[u] {
            if !queued[r2] {
                queued[r2] = true;
                queue.push(r2);
            }
        }
    }
    solved
}

/// Runs the circuit forward from its inputs. `None` if some wire stays undetermined.
pub fn execute(inst: &R1CSInstance, inputs: &[FieldElement]) -> Option<Witness> {
    let idx = inst.input_indices();
    if idx.len() != inputs.len() {
        return None;
    }
    let mut known: PartialAssignment = vec![None; inst.num_vars()];
    known[0] = Some(FieldElement::one(inst.modulus()));
    for (i, v) in idx.iter().zip(inputs) {
        known[*i] = Some(v.clone());
    }
    propagate(inst, &mut known);
    let values: Option<Vec<FieldElement>> = known.into_iter().collect();
    let w = Witness::new(values?).ok()?;
    eval_residuals(inst, &w).ok()?.all_zero().then_some(w)
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitFile {
    modulus: String,
    num_vars: usize,
    var_classes: Vec<VarClass>,
    constraints: Vec<ConstraintFile>,
    weak_sites: Vec<WeakSite>,
    public_outputs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    var_names: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintFile {
    a: BTreeMap<String, String>,
    b: BTreeMap<String, String>,
    c: BTreeMap<String, String>,
}

fn parse_sparse(
    modulus: &Modulus,
    map: &BTreeMap<String, String>,
    n: usize,
    row: usize,
) -> Result<SparseRow, CircuitError> {
    let mut entries = Vec::with_capacity(map.len());
    for (k, v) in map {
        let idx: usize =
            k.parse().map_err(|_| CircuitError::Schema(format!("row {row}: key {k:?} is not an index")))?;
        if idx >= n {
            return Err(CircuitError::Schema(format!("row {row}: variable index {idx} >= num_vars {n}")));
        }
        let c = FieldElement::parse_canonical(modulus, v).ok_or_else(|| {
            CircuitError::Schema(format!("row {row}: coefficient {v:?} is not a canonical field value"))
        })?;
        entries.push((idx, c));
    }
    Ok(SparseRow::new(entries))
}

pub fn parse_circuit_json(bytes: &[u8]) -> Result<R1CSInstance, CircuitError> {
    let file: CircuitFile = serde_json::from_slice(bytes).map_err(|e| CircuitError::Schema(e.to_string()))?;
    let q: BigUint = file
        .modulus
        .parse()
        .map_err(|_| CircuitError::Schema(format!("modulus {:?} is not a decimal", file.modulus)))?;
    let modulus = FieldModulus::new(q).map_err(|e| CircuitError::Invariant(e.to_string()))?;
    if file.var_classes.len() != file.num_vars {
        return Err(CircuitError::Invariant(format!(
            "{} variable classes for num_vars {}",
            file.var_classes.len(),
            file.num_vars
        )));
    }
    let rows = file
        .constraints
        .iter()
        .enumerate()
        .map(|(r, c)| {
            Ok(Constraint {
                a: parse_sparse(&modulus, &c.a, file.num_vars, r)?,
                b: parse_sparse(&modulus, &c.b, file.num_vars, r)?,
                c: parse_sparse(&modulus, &c.c, file.num_vars, r)?,
            })
        })
        .collect::<Result<Vec<_>, CircuitError>>()?;
    let mut inst = R1CSInstance::new(modulus, file.var_classes, rows, file.weak_sites)?;
    if inst.public_outputs() != file.public_outputs {
        return Err(CircuitError::Invariant("public_outputs must list the pub_out indices in ascending order".into()));
    }
    if let Some(names) = file.var_names {
        inst = inst.with_var_names(names)?;
    }
    Ok(inst)
}

fn sparse_to_map(row: &SparseRow) -> BTreeMap<String, String> {
    row.entries().iter().map(|(i, c)| (i.to_string(), c.to_string())).collect()
}

pub fn circuit_to_json(inst: &R1CSInstance) -> String {
    let file = CircuitFile {
        modulus: inst.modulus().q().to_string(),
        num_vars: inst.num_vars(),
        var_classes: inst.var_classes().to_vec(),
        constraints: inst
            .rows()
            .iter()
            .map(|r| ConstraintFile { a: sparse_to_map(&r.a), b: sparse_to_map(&r.b), c: sparse_to_map(&r.c) })
            .collect(),
        weak_sites: inst.weak_sites().to_vec(),
        public_outputs: inst.public_outputs(),
        var_names: inst.var_names().map(|n| n.to_vec()),
    };
    serde_json::to_string_pretty(&file).expect("serializable")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WitnessFile {
    values: Vec<String>,
}

pub fn parse_witness_json(inst: &R1CSInstance, bytes: &[u8]) -> Result<Witness, CircuitError> {
    let file: WitnessFile = serde_json::from_slice(bytes).map_err(|e| CircuitError::Schema(e.to_string()))?;
    let values = file
        .values
        .iter()
        .map(|v| {
            FieldElement::parse_canonical(inst.modulus(), v)
                .ok_or_else(|| CircuitError::Schema(format!("witness value {v:?} is not canonical")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let w = Witness::new(values)?;
    check_shape(inst, &w)?;
    Ok(w)
}

pub fn witness_to_json(w: &Witness) -> String {
    let file = WitnessFile { values: w.values().iter().map(|v| v.to_string()).collect() };
    serde_json::to_string(&file).expect("serializable")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SitesFile {
    weak_sites: Vec<WeakSite>,
    #[serde(default)]
    var_names: Option<Vec<String>>,
}

/// Sidecar for binary inputs: `{"weak_sites": [...], "var_names": [...]?}`.
pub fn attach_sites_json(inst: R1CSInstance, bytes: &[u8]) -> Result<R1CSInstance, CircuitError> {
    let file: SitesFile = serde_json::from_slice(bytes).map_err(|e| CircuitError::Schema(e.to_string()))?;
    let mut inst = inst.with_weak_sites(file.weak_sites)?;
    if let Some(names) = file.var_names {
        inst = inst.with_var_names(names)?;
    }
    Ok(inst)
}

// ---------------------------------------------------------------------------
// circom .r1cs binary

const R1CS_MAGIC: &[u8; 4] = b"r1cs";
const SECTION_HEADER: u32 = 1;
const SECTION_CONSTRAINTS: u32 = 2;
const SECTION_WIRE_MAP: u32 = 3;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CircuitError> {
        if self.buf.len() - self.pos < n {
            return Err(CircuitError::TruncatedSection(format!(
                "{} needs {} more bytes at offset {}",
                self.what, n, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CircuitError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CircuitError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

struct R1csHeader {
    n8: usize,
    modulus: Modulus,
    n_wires: usize,
    n_pub_out: usize,
    n_pub_in: usize,
    n_prv_in: usize,
    m: usize,
}

pub fn parse_r1cs_binary(bytes: &[u8]) -> Result<R1CSInstance, CircuitError> {
    if bytes.len() < 4 || &bytes[..4] != R1CS_MAGIC {
        return Err(CircuitError::MagicMismatch);
    }
    let mut rd = Reader { buf: bytes, pos: 4, what: "file header" };
    let version = rd.u32()?;
    if version != 1 {
        return Err(CircuitError::UnsupportedVersion(version));
    }
    let n_sections = rd.u32()?;
    let mut sections: Vec<(u32, &[u8])> = Vec::new();
    for _ in 0..n_sections {
        rd.what = "section header";
        let ty = rd.u32()?;
        let size = rd.u64()? as usize;
        rd.what = "section body";
        sections.push((ty, rd.take(size)?));
    }
    let header_body = sections
        .iter()
        .find(|(t, _)| *t == SECTION_HEADER)
        .map(|(_, b)| *b)
        .ok_or_else(|| CircuitError::TruncatedSection("missing header section".into()))?;
    let mut h = Reader { buf: header_body, pos: 0, what: "header section" };
    let n8 = h.u32()? as usize;
    let prime = BigUint::from_bytes_le(h.take(n8)?);
    let modulus = FieldModulus::new(prime).map_err(|e| CircuitError::Invariant(e.to_string()))?;
    let header = R1csHeader {
        n8,
        modulus,
        n_wires: h.u32()? as usize,
        n_pub_out: h.u32()? as usize,
        n_pub_in: h.u32()? as usize,
        n_prv_in: h.u32()? as usize,
        m: {
            let _n_labels = h.u64()?;
            h.u32()? as usize
        },
    };
    if header.n_wires < 1 + header.n_pub_out + header.n_pub_in + header.n_prv_in {
        return Err(CircuitError::Invariant("header wire counts exceed nWires".into()));
    }
    let body = sections.iter().find(|(t, _)| *t == SECTION_CONSTRAINTS).map(|(_, b)| *b).unwrap_or(&[]);
    let mut c = Reader { buf: body, pos: 0, what: "constraints section" };
    let read_lc = |c: &mut Reader| -> Result<SparseRow, CircuitError> {
        let terms = c.u32()? as usize;
        let mut entries = Vec::with_capacity(terms);
        for _ in 0..terms {
            let wire = c.u32()? as usize;
            if wire >= header.n_wires {
                return Err(CircuitError::Schema(format!("wire {wire} >= nWires {}", header.n_wires)));
            }
            let v = BigUint::from_bytes_le(c.take(header.n8)?);
            if &v >= header.modulus.q() {
                return Err(CircuitError::Schema("coefficient not reduced".into()));
            }
            entries.push((wire, FieldElement::new(&header.modulus, v)));
        }
        Ok(SparseRow::new(entries))
    };
    let mut rows = Vec::with_capacity(header.m);
    for _ in 0..header.m {
        let a = read_lc(&mut c)?;
        let b = read_lc(&mut c)?;
        let cc = read_lc(&mut c)?;
        rows.push(Constraint { a, b, c: cc });
    }
    let mut classes = vec![VarClass::One];
    classes.extend(std::iter::repeat_n(VarClass::PublicOutput, header.n_pub_out));
    classes.extend(std::iter::repeat_n(VarClass::PublicInput, header.n_pub_in));
    classes.extend(std::iter::repeat_n(VarClass::PrivateInput, header.n_prv_in));
    classes.resize(header.n_wires, VarClass::Intermediate);
    R1CSInstance::new(header.modulus, classes, rows, Vec::new())
}

/// Writes the header, constraints and identity wire-map sections. Wires must
/// already be in circom order (one, outputs, public inputs, private inputs, rest).
pub fn write_r1cs_binary(inst: &R1CSInstance) -> Result<Vec<u8>, CircuitError> {
    let classes = inst.var_classes();
    let order =
        [VarClass::One, VarClass::PublicOutput, VarClass::PublicInput, VarClass::PrivateInput, VarClass::Intermediate];
    let rank = |c: &VarClass| order.iter().position(|o| o == c).expect("listed");
    if classes.windows(2).any(|w| rank(&w[0]) > rank(&w[1])) {
        return Err(CircuitError::Invariant("variables are not in circom wire order".into()));
    }
    let n8 = inst.modulus().byte_len().div_ceil(8) * 8;
    let fe_le = |v: &BigUint| {
        let mut b = v.to_bytes_le();
        b.resize(n8, 0);
        b
    };
    let count = |c: VarClass| classes.iter().filter(|x| **x == c).count() as u32;

    let mut header = Vec::new();
    header.extend_from_slice(&(n8 as u32).to_le_bytes());
    header.extend_from_slice(&fe_le(inst.modulus().q()));
    header.extend_from_slice(&(inst.num_vars() as u32).to_le_bytes());
    header.extend_from_slice(&count(VarClass::PublicOutput).to_le_bytes());
    header.extend_from_slice(&count(VarClass::PublicInput).to_le_bytes());
    header.extend_from_slice(&count(VarClass::PrivateInput).to_le_bytes());
    header.extend_from_slice(&(inst.num_vars() as u64).to_le_bytes());
    header.extend_from_slice(&(inst.num_constraints() as u32).to_le_bytes());

    let mut cons = Vec::new();
    for row in inst.rows() {
        for lc in [&row.a, &row.b, &row.c] {
            cons.extend_from_slice(&(lc.entries().len() as u32).to_le_bytes());
            for (i, v) in lc.entries() {
                cons.extend_from_slice(&(*i as u32).to_le_bytes());
                cons.extend_from_slice(&fe_le(v.value()));
            }
        }
    }

    let mut map = Vec::new();
    for i in 0..inst.num_vars() as u64 {
        map.extend_from_slice(&i.to_le_bytes());
    }

    let mut out = Vec::new();
    out.extend_from_slice(R1CS_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&3u32.to_le_bytes());
    for (ty, body) in [(SECTION_HEADER, header), (SECTION_CONSTRAINTS, cons), (SECTION_WIRE_MAP, map)] {
        out.extend_from_slice(&ty.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
    }
    Ok(out)
}
