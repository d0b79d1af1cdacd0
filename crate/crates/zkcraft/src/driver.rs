//! The end-to-end search: candidate pool, backend envelope, bounded subset
//! enumeration, proof, extraction and the run manifest.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use web_time::Instant;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{
    circuit_to_json, differential_check, eval_residuals, execute, CircuitError, R1CSInstance, VarClass, Witness,
};
use crate::digest::sha256;
use crate::extract::{
    assemble_counterexample, extract_selection, interpolate_witness, reconstruct_witness, Counterexample, ExtractError,
    RecoveredEdit, WitnessSource,
};
use crate::ff::{FieldElement, Modulus};
use crate::oracle::{
    fallback_template, generator_for, mutation_templates, pattern_sampler, seeded_fallback_constant, OracleConfig,
    SamplerSpec, TemplateBatch,
};
use crate::slicer::{select_pool, CandidatePool, RowDiagnostics, ScoreConvention, SlicerConfig, SlicerError};
use crate::synth::{site_signal, smtlib_emit, solve_slot_constant, SynthError};
use crate::viop::{
    approx_log2, degree_bound, domain_log, edited_residuals, knowledge_error_bound, prove, verify, IopConfig,
    ViolationProof, ViopError,
};
use crate::vortex::{choose_nodes, commit_values, default_degrees, verify_opening, NodePlan, VortexError};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Recorded for completeness; the generational loop they parameterize is not run.
pub const GENERATIONAL_MUTATION_PROBABILITY: f64 = 0.3;
pub const GENERATIONAL_CROSSOVER_PROBABILITY: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("the supplied witness does not satisfy the circuit")]
    BadWitness,
    #[error("the circuit has no public outputs")]
    NoOutputs,
    #[error("a discovered edit failed to prove: {0}")]
    Prove(ViopError),
    #[error("a freshly generated proof was rejected: {0}")]
    SelfVerify(String),
    #[error("subset evaluations exceeded the cap of {0}")]
    BudgetExceeded(u64),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Slicer(#[from] SlicerError),
    #[error(transparent)]
    Vortex(#[from] VortexError),
    #[error(transparent)]
    Viop(#[from] ViopError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Backend envelope

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendId {
    HyperplonkPlusProfile,
    BasefoldProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BackendProfile {
    pub backend_id: BackendId,
    pub d_max: u64,
    pub domain_max: u64,
    pub fold_rounds: u32,
    pub opening_size_note: &'static str,
}

pub const HYPERPLONK_PLUS_PROFILE: BackendProfile = BackendProfile {
    backend_id: BackendId::HyperplonkPlusProfile,
    d_max: 1 << 20,
    domain_max: 1 << 24,
    fold_rounds: 16,
    opening_size_note: "96 B in the reference backend; not applicable to merkle_eval_v1",
};

pub const BASEFOLD_PROFILE: BackendProfile = BackendProfile {
    backend_id: BackendId::BasefoldProfile,
    d_max: 1 << 18,
    domain_max: 1 << 22,
    fold_rounds: 10,
    opening_size_note: "218 B in the reference backend; not applicable to merkle_eval_v1",
};

/// Tighter profile first.
pub fn default_profiles() -> Vec<BackendProfile> {
    vec![BASEFOLD_PROFILE, HYPERPLONK_PLUS_PROFILE]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    DegExceeded,
    DomainExceeded,
    CryptoUnavailable,
    None,
}

impl FallbackReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DegExceeded => "deg_exceeded",
            Self::DomainExceeded => "domain_exceeded",
            Self::CryptoUnavailable => "crypto_unavailable",
            Self::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendDecision {
    ZkNative(BackendProfile),
    Fallback(FallbackReason),
}

impl BackendDecision {
    pub fn fallback_reason(&self) -> FallbackReason {
        match self {
            Self::ZkNative(_) => FallbackReason::None,
            Self::Fallback(r) => *r,
        }
    }
}

/// First profile (in the given order) whose degree and domain limits both
/// admit `(d, domain)`. When none does, the degree limit is reported if no
/// profile admits `d`, otherwise the domain limit.
pub fn select_backend(d: u64, domain: u64, profiles: &[BackendProfile]) -> BackendDecision {
    if let Some(p) = profiles.iter().find(|p| d <= p.d_max && domain <= p.domain_max) {
        return BackendDecision::ZkNative(*p);
    }
    if profiles.iter().all(|p| d > p.d_max) {
        BackendDecision::Fallback(FallbackReason::DegExceeded)
    } else {
        BackendDecision::Fallback(FallbackReason::DomainExceeded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CryptoSelfTest {
    #[default]
    Run,
    /// Test hook: behave as if initialization failed.
    ForceFail,
}

/// Commit/open/verify roundtrip on a four-leaf tree.
pub fn crypto_self_test(q: &Modulus) -> bool {
    let values: Vec<FieldElement> = (0..4).map(|i| FieldElement::from_u64(q, i + 1)).collect();
    let tree = commit_values(values);
    (0..4).all(|i| tree.open(i).map(|o| verify_opening(&tree.commitment, &o)).unwrap_or(false))
        && tree
            .open(1)
            .map(|mut o| {
                o.claimed_value = FieldElement::from_u64(q, 9);
                !verify_opening(&tree.commitment, &o)
            })
            .unwrap_or(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Auto,
    Basefold,
    Hyperplonk,
}

impl FromStr for BackendChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Self::Auto),
            "basefold" => Ok(Self::Basefold),
            "hyperplonk" => Ok(Self::Hyperplonk),
            o => Err(format!("unknown backend {o:?}")),
        }
    }
}

impl BackendChoice {
    pub fn profiles(self) -> Vec<BackendProfile> {
        match self {
            Self::Auto => default_profiles(),
            Self::Basefold => vec![BASEFOLD_PROFILE],
            Self::Hyperplonk => vec![HYPERPLONK_PLUS_PROFILE],
        }
    }
}

// ---------------------------------------------------------------------------
// Budget

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchBudget {
    pub t_max: usize,
    pub k: usize,
    pub max_calls: u64,
}

impl SearchBudget {
    pub fn new(k: usize, t_max: usize) -> Self {
        let max_calls = (1..=t_max as u64).map(|t| binomial(k as u64, t)).fold(0u64, u64::saturating_add);
        SearchBudget { t_max, k, max_calls }
    }
}

/// Counts subset evaluations and refuses to go past the cap.
#[derive(Debug)]
pub struct CallCounter {
    cap: u64,
    used: AtomicU64,
}

impl CallCounter {
    pub fn new(cap: u64) -> Self {
        CallCounter { cap, used: AtomicU64::new(0) }
    }

    pub fn try_take(&self) -> bool {
        self.used.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| (u < self.cap).then_some(u + 1)).is_ok()
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }
}

/// Size-`t` subsets of `0..k` in lexicographic order.
pub fn subsets(k: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if t == 0 || t > k {
        return out;
    }
    let mut cur: Vec<usize> = (0..t).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..t).rev().find(|&i| cur[i] != i + k - t) else { break };
        cur[i] += 1;
        for j in i + 1..t {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Candidate search

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// The prover's own statement check runs later, inside `prove`.
    ProverSelfCheck,
    /// Differential pre-filter, then the full residual check.
    Differential,
}

/// One input vector with the unedited execution it is compared against.
#[derive(Debug, Clone)]
pub struct InputCase {
    pub inputs: Vec<FieldElement>,
    pub w_orig: Witness,
}

#[derive(Debug, Clone)]
pub struct SearchSpace<'a> {
    pub inst: &'a R1CSInstance,
    pub pool_rows: Vec<usize>,
    /// Constant family per pool position.
    pub families: Vec<Vec<FieldElement>>,
    pub inputs: Vec<InputCase>,
    pub use_site_solves: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    /// Position of the subset in enumeration order, counted from one.
    pub subset_rank: u64,
    pub subset: Vec<usize>,
    pub delta: Vec<bool>,
    pub c: Vec<FieldElement>,
    pub inputs: Vec<FieldElement>,
    pub w_prime: Witness,
    pub y_orig: Vec<FieldElement>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub max_calls: u64,
    /// Subsets up to and including the last one whose result was used.
    pub subset_evaluations: u64,
    pub executions: u64,
    pub prefilter_rejections: u64,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub candidates: Vec<Candidate>,
    pub stats: SearchStats,
    /// Raw instrumented count, including speculative parallel work.
    pub counter_used: u64,
}

struct SubsetResult {
    found: Vec<Candidate>,
    executions: u64,
    prefilter_rejections: u64,
}

fn odometer_next(idx: &mut [usize], limits: &[usize]) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < limits[i] {
            return true;
        }
        idx[i] = 0;
    }
    false
}

fn passes_differential(
    edited: &R1CSInstance,
    pinned: &[(usize, FieldElement)],
    base: &Witness,
    w_prime: &Witness,
) -> Result<bool, CircuitError> {
    let mut dz = BTreeMap::new();
    let mut dy = BTreeMap::new();
    for (i, class) in edited.var_classes().iter().enumerate() {
        let d = w_prime.get(i) - base.get(i);
        if d.is_zero() {
            continue;
        }
        match class {
            VarClass::Intermediate => {
                dz.insert(i, d);
            }
            VarClass::PublicOutput => {
                dy.insert(i, d);
            }
            _ => return Ok(false),
        }
    }
    if !differential_check(edited, base, &dz, &dy)? {
        return Ok(false);
    }
    let q = edited.modulus();
    Ok(pinned.iter().all(|(r, _)| edited.rows()[*r].residual(w_prime.values(), q).is_zero()))
}

fn evaluate_subset(space: &SearchSpace, subset: &[usize], rank: u64, mode: CheckMode, find_all: bool) -> SubsetResult {
    let inst = space.inst;
    let q = inst.modulus();
    let k = space.pool_rows.len();
    let t = subset.len();
    let mut res = SubsetResult { found: vec![], executions: 0, prefilter_rejections: 0 };
    let head_limits: Vec<usize> = subset[..t - 1].iter().map(|&p| space.families[p].len()).collect();
    if head_limits.contains(&0) {
        return res;
    }
    let last = subset[t - 1];
    for case in &space.inputs {
        let y0 = case.w_orig.outputs(inst);
        let mut idx = vec![0usize; t - 1];
        loop {
            let head: Vec<(usize, FieldElement)> = subset[..t - 1]
                .iter()
                .zip(&idx)
                .map(|(&p, &j)| (space.pool_rows[p], space.families[p][j].clone()))
                .collect();
            let mut tail = space.families[last].clone();
            if space.use_site_solves {
                if let Ok(roots) = solve_slot_constant(inst, &head, space.pool_rows[last], &case.inputs) {
                    for r in roots {
                        if !tail.contains(&r) {
                            tail.push(r);
                        }
                    }
                }
            }
            for cl in tail {
                let mut edits = head.clone();
                edits.push((space.pool_rows[last], cl.clone()));
                let Ok(edited) = inst.with_rows_pinned(&edits) else { continue };
                res.executions += 1;
                let Some(w_prime) = execute(&edited, &case.inputs) else { continue };
                if w_prime.outputs(inst) == y0 {
                    continue;
                }
                if mode == CheckMode::Differential {
                    let ok = passes_differential(&edited, &edits, &case.w_orig, &w_prime).unwrap_or(false);
                    if !ok {
                        res.prefilter_rejections += 1;
                        continue;
                    }
                    if !eval_residuals(&edited, &w_prime).map(|r| r.all_zero()).unwrap_or(false) {
                        continue;
                    }
                }
                let mut delta = vec![false; k];
                let mut c = vec![FieldElement::zero(q); k];
                for (&p, (_, v)) in subset.iter().zip(&edits) {
                    delta[p] = true;
                    c[p] = v.clone();
                }
                res.found.push(Candidate {
                    subset_rank: rank,
                    subset: subset.to_vec(),
                    delta,
                    c,
                    inputs: case.inputs.clone(),
                    w_prime,
                    y_orig: y0.clone(),
                });
                if !find_all {
                    return res;
                }
            }
            if !odometer_next(&mut idx, &head_limits) {
                break;
            }
        }
    }
    res
}

/// Enumerates subsets of the pool by cardinality `1..=t_max`, lexicographic
/// within each cardinality, and returns the first candidate (or all of them
/// with `find_all`). Subsets run on the rayon pool in ordered chunks so an
/// earlier subset always wins over a later one.
pub fn enumerate_candidates(
    space: &SearchSpace,
    budget: &SearchBudget,
    counter: &CallCounter,
    mode: CheckMode,
    find_all: bool,
) -> SearchOutcome {
    let k = space.pool_rows.len();
    let chunk = rayon::current_num_threads().max(1) * 2;
    let mut stats = SearchStats { max_calls: budget.max_calls, ..Default::default() };
    let mut candidates = Vec::new();
    let mut rank = 0u64;
    'outer: for t in 1..=budget.t_max.min(k) {
        let all = subsets(k, t);
        for group in all.chunks(chunk) {
            let base = rank;
            let results: Vec<Option<SubsetResult>> = group
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    if !counter.try_take() {
                        return None;
                    }
                    Some(evaluate_subset(space, s, base + i as u64 + 1, mode, find_all))
                })
                .collect();
            for r in results {
                let Some(r) = r else {
                    stats.budget_exhausted = true;
                    break 'outer;
                };
                rank += 1;
                stats.subset_evaluations = rank;
                stats.executions += r.executions;
                stats.prefilter_rejections += r.prefilter_rejections;
                let hit = !r.found.is_empty();
                candidates.extend(r.found);
                if hit && !find_all {
                    break 'outer;
                }
            }
        }
    }
    if candidates.is_empty() && !stats.budget_exhausted {
        stats.budget_exhausted = true;
    }
    SearchOutcome { candidates, stats, counter_used: counter.used() }
}

/// The fallback channel's enumeration, with differential pre-filtering.
pub fn fallback_search(
    space: &SearchSpace,
    budget: &SearchBudget,
    counter: &CallCounter,
    find_all: bool,
) -> SearchOutcome {
    enumerate_candidates(space, budget, counter, CheckMode::Differential, find_all)
}

/// Public outputs each pool row can influence through the wire graph.
fn output_reach(inst: &R1CSInstance, row: usize) -> BTreeSet<usize> {
    let occ = inst.occurrences();
    let outputs: BTreeSet<usize> = inst.public_outputs().into_iter().collect();
    let mut seen_vars = BTreeSet::new();
    let mut seen_rows = BTreeSet::from([row]);
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (v, _) in inst.rows()[row].c.entries() {
        if *v != 0 && seen_vars.insert(*v) {
            queue.push_back(*v);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &r in &occ[v] {
            if !seen_rows.insert(r) {
                continue;
            }
            for (u, _) in inst.rows()[r].c.entries() {
                if *u != 0 && seen_vars.insert(*u) {
                    queue.push_back(*u);
                }
            }
        }
    }
    seen_vars.intersection(&outputs).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GreedyCover {
    pub rows: Vec<usize>,
    pub covered_outputs: Vec<usize>,
    pub uncovered_outputs: Vec<usize>,
    /// The greedy cover is at most twice the optimal size, so the optimum is at least half of it.
    pub optimal_lower_bound: usize,
}

/// Greedy cover of the public outputs by the pool rows that reach them.
pub fn greedy_cover(inst: &R1CSInstance, pool_rows: &[usize]) -> GreedyCover {
    let reach: Vec<BTreeSet<usize>> = pool_rows.iter().map(|&r| output_reach(inst, r)).collect();
    let universe: BTreeSet<usize> = reach.iter().flatten().copied().collect();
    let mut covered = BTreeSet::new();
    let mut chosen = Vec::new();
    loop {
        let best = (0..pool_rows.len())
            .filter(|i| !chosen.contains(&pool_rows[*i]))
            .map(|i| (reach[i].difference(&covered).count(), i))
            .filter(|(gain, _)| *gain > 0)
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((_, i)) = best else { break };
        covered.extend(reach[i].iter().copied());
        chosen.push(pool_rows[i]);
    }
    let all: BTreeSet<usize> = inst.public_outputs().into_iter().collect();
    GreedyCover {
        optimal_lower_bound: chosen.len().div_ceil(2),
        rows: chosen,
        covered_outputs: universe.iter().copied().collect(),
        uncovered_outputs: all.difference(&universe).copied().collect(),
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub slicer: SlicerConfig,
    pub t_max: usize,
    pub backend: BackendChoice,
    pub oracle: OracleConfig,
    pub seed: u64,
    pub attach_witness: bool,
    pub confirm_replay: bool,
    pub emit_smt2: bool,
    pub repetitions: usize,
    /// Random input vectors tried besides the base inputs.
    pub input_samples: usize,
    /// Enumerate every input vector when there are at most this many.
    pub exhaustive_input_limit: u64,
    pub find_all: bool,
    pub use_site_solves: bool,
    pub crypto_self_test: CryptoSelfTest,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            slicer: SlicerConfig::default(),
            t_max: 3,
            backend: BackendChoice::Auto,
            oracle: OracleConfig::Builtin,
            seed: 0,
            attach_witness: false,
            confirm_replay: false,
            emit_smt2: false,
            repetitions: 2,
            input_samples: 8,
            exhaustive_input_limit: 1024,
            find_all: false,
            use_site_solves: true,
            crypto_self_test: CryptoSelfTest::Run,
        }
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRecord {
    pub sha256: String,
    pub modulus: String,
    pub num_vars: usize,
    pub num_constraints: usize,
    pub num_outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigRecord {
    pub seed: u64,
    pub t_max: usize,
    pub k: usize,
    pub lambda: String,
    pub mu: String,
    pub score_convention: ScoreConvention,
    pub backend_choice: BackendChoice,
    pub repetitions: usize,
    pub attach_witness: bool,
    pub confirm_replay: bool,
    pub input_samples: usize,
    pub exhaustive_input_limit: u64,
    pub find_all: bool,
    pub use_site_solves: bool,
    pub worker_count: usize,
    pub generational_mutation_probability: f64,
    pub generational_crossover_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendRecord {
    pub backend_id: Option<BackendId>,
    pub profile: Option<BackendProfile>,
    pub deg_phi: u64,
    pub domain: u64,
    pub fallback_reason: FallbackReason,
    pub crypto_self_test: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolRecord {
    pub rows: Vec<usize>,
    pub diagnostics: Vec<RowDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FallbackConstantRecord {
    pub site_id: String,
    pub constant: String,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRecord {
    pub config: OracleConfig,
    pub seed: u64,
    pub batches: Vec<TemplateBatch>,
    pub fallback_constants: Vec<FallbackConstantRecord>,
    pub families: Vec<Vec<String>>,
    pub input_sampler: SamplerSpec,
    pub derived_sampler: Option<SamplerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnowledgeErrorRecord {
    pub linear: String,
    pub exponential: String,
    pub linear_log2: f64,
    pub exponential_log2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchRecord {
    #[serde(flatten)]
    pub stats: SearchStats,
    pub check_mode: CheckMode,
    pub input_vectors: usize,
    pub exhaustive_inputs: bool,
    pub candidates_found: usize,
    pub greedy_cover: Option<GreedyCover>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FindingRecord {
    pub pool_positions: Vec<usize>,
    pub rows: Vec<usize>,
    pub delta: Vec<u8>,
    pub c: Vec<String>,
    pub witness_source: WitnessSource,
    pub replayed: bool,
    pub counterexample_sha256: String,
    pub proof_sha256: Option<String>,
    pub proof_bytes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub instance: InstanceRecord,
    pub config: ConfigRecord,
    pub backend: BackendRecord,
    pub node_plan: Option<NodePlan>,
    pub scheme_id: Option<&'static str>,
    pub pool: PoolRecord,
    pub oracle: OracleRecord,
    pub knowledge_error: Option<KnowledgeErrorRecord>,
    pub search: SearchRecord,
    pub status: &'static str,
    pub findings: Vec<FindingRecord>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub slicer_ms: f64,
    pub search_ms: f64,
    pub prove_ms: f64,
    pub total_ms: f64,
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Debug, Clone)]
pub struct Finding {
    pub counterexample: Counterexample,
    pub proof: Option<ViolationProof>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub findings: Vec<Finding>,
    pub manifest: RunManifest,
    pub timings: Timings,
    pub counter_used: u64,
    /// SMT-LIB2 queries by cardinality.
    pub smt2: Vec<(usize, String)>,
}

impl RunOutcome {
    pub fn found(&self) -> bool {
        !self.findings.is_empty()
    }
}

fn site_text(program: Option<&str>, signal: &str) -> Option<String> {
    program?
        .lines()
        .find(|l| {
            let t = l.trim_start();
            t.strip_prefix(signal).is_some_and(|rest| rest.trim_start().starts_with("<=="))
        })
        .map(|l| l.trim().to_string())
}

fn name_env(inst: &R1CSInstance, w: &Witness) -> BTreeMap<String, FieldElement> {
    inst.var_names().map(|names| names.iter().cloned().zip(w.values().iter().cloned()).collect()).unwrap_or_default()
}

fn all_inputs(q: &Modulus, n_in: usize) -> Vec<Vec<FieldElement>> {
    let qv: u64 = q.q().try_into().expect("checked small");
    let total = qv.pow(n_in as u32);
    (0..total)
        .map(|mut idx| {
            (0..n_in)
                .map(|_| {
                    let v = idx % qv;
                    idx /= qv;
                    FieldElement::from_u64(q, v)
                })
                .rev()
                .collect()
        })
        .collect()
}

fn input_space_size(q: &Modulus, n_in: usize) -> Option<u64> {
    let qv: u64 = q.q().try_into().ok()?;
    qv.checked_pow(n_in as u32)
}

/// Field elements as decimal strings.
fn strs(v: &[FieldElement]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn knowledge_record(q: &BigUint, m_out: usize, d: usize, ell: usize) -> Result<KnowledgeErrorRecord, ViopError> {
    let ke = knowledge_error_bound(q, m_out, d, ell)?;
    Ok(KnowledgeErrorRecord {
        linear: ke.linear.to_string(),
        exponential: ke.exponential.to_string(),
        linear_log2: approx_log2(&ke.linear),
        exponential_log2: approx_log2(&ke.exponential),
    })
}

pub struct ProvedEdit {
    pub proof: ViolationProof,
    pub counterexample: Counterexample,
}

/// Proves one edit, verifies the proof, recovers the edit and witness from it,
/// and assembles the counterexample.
#[allow(clippy::too_many_arguments)]
pub fn prove_and_extract(
    inst: &R1CSInstance,
    program_text: Option<&str>,
    pool_rows: &[usize],
    plan: &NodePlan,
    delta: &[bool],
    c: &[FieldElement],
    w_prime: &Witness,
    y_orig: &[FieldElement],
    iop: &IopConfig,
    attach_witness: bool,
    confirm_replay: bool,
) -> Result<ProvedEdit, DriverError> {
    let proof =
        prove(inst, pool_rows, plan, delta, c, w_prime, y_orig, iop, attach_witness).map_err(DriverError::Prove)?;
    let acc = verify(&proof, inst, pool_rows, plan, y_orig, iop).map_err(|r| DriverError::SelfVerify(r.to_string()))?;
    let edit = extract_selection(&acc)?;
    let inputs: Vec<FieldElement> = inst.input_indices().iter().map(|&i| w_prime.get(i).clone()).collect();
    let (w, source) = match interpolate_witness(&acc)? {
        Some(w) => (w, WitnessSource::InterpolatedWitness),
        None => {
            let r = reconstruct_witness(inst, &edit, &inputs, Some(&proof.y_prime))?;
            (r.witness, WitnessSource::LinearReconstruction)
        }
    };
    let counterexample = assemble_counterexample(inst, program_text, &edit, w, source, y_orig, confirm_replay)?;
    Ok(ProvedEdit { proof, counterexample })
}

fn no_false_positive(inst: &R1CSInstance, edit: &RecoveredEdit, w: &Witness) -> bool {
    edited_residuals(inst, &edit.pool_rows, &edit.delta, &edit.c, w.values())
        .map(|r| r.iter().all(|x| x.is_zero()))
        .unwrap_or(false)
}

/// Runs the whole search. `witness` is the original execution; without it the
/// first sampled input vector and its forward execution stand in.
pub fn run_pipeline(
    inst: &R1CSInstance,
    program_text: Option<&str>,
    witness: Option<&Witness>,
    cfg: &RunConfig,
) -> Result<RunOutcome, DriverError> {
    let t0 = Instant::now();
    let q = inst.modulus().clone();
    if cfg.repetitions == 0 {
        return Err(DriverError::Config("repetitions must be positive".into()));
    }
    if inst.public_outputs().is_empty() {
        return Err(DriverError::NoOutputs);
    }
    let n_in = inst.input_indices().len();

    let pool: CandidatePool = select_pool(inst, &cfg.slicer)?;
    let k = pool.rows.len();
    let slicer_ms = t0.elapsed().as_secs_f64() * 1e3;

    // Backend decision.
    let d = degree_bound(inst.num_vars(), k) as u64;
    let domain = 1u64 << domain_log(inst.num_constraints());
    let crypto_ok = match cfg.crypto_self_test {
        CryptoSelfTest::Run => crypto_self_test(&q),
        CryptoSelfTest::ForceFail => false,
    };
    let mut decision = select_backend(d, domain, &cfg.backend.profiles());
    if matches!(decision, BackendDecision::ZkNative(_)) && !crypto_ok {
        decision = BackendDecision::Fallback(FallbackReason::CryptoUnavailable);
    }
    let (d_row, d_sel) = default_degrees(k);
    let plan = match decision {
        BackendDecision::ZkNative(_) => Some(choose_nodes(&q, k, d_row, d_sel)?),
        BackendDecision::Fallback(_) => None,
    };

    // Oracle batches and constant families.
    let mut generator = generator_for(&cfg.oracle);
    let mut base_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let uniform = SamplerSpec::uniform();
    let base = match witness {
        Some(w) => {
            if w.len() != inst.num_vars() || !eval_residuals(inst, w)?.all_zero() {
                return Err(DriverError::BadWitness);
            }
            w.clone()
        }
        None => {
            let mut found = None;
            for _ in 0..64 {
                let xs = uniform.sample(&mut base_rng, &q, n_in);
                if let Some(w) = execute(inst, &xs) {
                    found = Some(w);
                    break;
                }
            }
            found.ok_or_else(|| DriverError::Config("no executable input found; supply a witness".into()))?
        }
    };
    let env = name_env(inst, &base);
    let mut batches = Vec::new();
    let mut fallback_constants = Vec::new();
    let mut families = Vec::new();
    for &row in &pool.rows {
        let (site_id, signal) = match inst.site_of_row(row) {
            Some(s) => (s.site_id.clone(), site_signal(&s.site_id).to_string()),
            None => (format!("row{row}"), inst.var_name(row_target(inst, row))),
        };
        let text = site_text(program_text, &signal).unwrap_or_else(|| format!("{signal} <== {signal};"));
        let batch = mutation_templates(&site_id, &text, &q, generator.as_deref_mut());
        let mut fam = batch.constants(&q, &env);
        let fb = seeded_fallback_constant(cfg.seed, &site_id, &q);
        fallback_constants.push(FallbackConstantRecord {
            site_id: site_id.clone(),
            constant: fb.to_string(),
            template: fallback_template(&site_id, &fb),
        });
        if !fam.contains(&fb) {
            fam.push(fb);
        }
        families.push(fam);
        batches.push(batch);
    }

    // Input vectors.
    let base_inputs: Vec<FieldElement> = inst.input_indices().iter().map(|&i| base.get(i).clone()).collect();
    let exhaustive = input_space_size(&q, n_in).is_some_and(|s| s <= cfg.exhaustive_input_limit);
    let mut input_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x05ee_d1a9_u64);
    let mut vectors = vec![base_inputs.clone()];
    if exhaustive {
        vectors.extend(all_inputs(&q, n_in));
    } else {
        vectors.extend((0..cfg.input_samples).map(|_| uniform.sample(&mut input_rng, &q, n_in)));
    }
    let mut seen = BTreeSet::new();
    let mut inputs = Vec::new();
    for xs in vectors {
        let key: Vec<BigUint> = xs.iter().map(|x| x.value().clone()).collect();
        if !seen.insert(key) {
            continue;
        }
        let w_orig = if xs == base_inputs { Some(base.clone()) } else { execute(inst, &xs) };
        if let Some(w_orig) = w_orig {
            inputs.push(InputCase { inputs: xs, w_orig });
        }
    }

    let space = SearchSpace {
        inst,
        pool_rows: pool.rows.clone(),
        families: families.clone(),
        inputs,
        use_site_solves: cfg.use_site_solves,
    };
    let budget = SearchBudget::new(k, cfg.t_max);
    let counter = CallCounter::new(budget.max_calls);
    let t_search = Instant::now();
    let (outcome, mode) = match decision {
        BackendDecision::ZkNative(_) => (
            enumerate_candidates(&space, &budget, &counter, CheckMode::ProverSelfCheck, cfg.find_all),
            CheckMode::ProverSelfCheck,
        ),
        BackendDecision::Fallback(_) => {
            (fallback_search(&space, &budget, &counter, cfg.find_all), CheckMode::Differential)
        }
    };
    if outcome.counter_used > budget.max_calls {
        return Err(DriverError::BudgetExceeded(budget.max_calls));
    }
    let search_ms = t_search.elapsed().as_secs_f64() * 1e3;

    // Certification and extraction.
    let t_prove = Instant::now();
    let iop = IopConfig { repetitions: cfg.repetitions, ..IopConfig::default() };
    let mut findings = Vec::new();
    for cand in &outcome.candidates {
        let finding = match &plan {
            Some(plan) => {
                let pe = prove_and_extract(
                    inst,
                    program_text,
                    &pool.rows,
                    plan,
                    &cand.delta,
                    &cand.c,
                    &cand.w_prime,
                    &cand.y_orig,
                    &iop,
                    cfg.attach_witness,
                    cfg.confirm_replay,
                )?;
                Finding { counterexample: pe.counterexample, proof: Some(pe.proof) }
            }
            None => {
                let edit = RecoveredEdit { pool_rows: pool.rows.clone(), delta: cand.delta.clone(), c: cand.c.clone() };
                let r = reconstruct_witness(inst, &edit, &cand.inputs, None)?;
                let cx = assemble_counterexample(
                    inst,
                    program_text,
                    &edit,
                    r.witness,
                    WitnessSource::LinearReconstruction,
                    &cand.y_orig,
                    cfg.confirm_replay,
                )?;
                Finding { counterexample: cx, proof: None }
            }
        };
        let cx = &finding.counterexample;
        if cx.edit.delta != cand.delta || cx.edit.c != cand.c || !no_false_positive(inst, &cx.edit, &cx.w_prime) {
            return Err(DriverError::SelfVerify("recovered edit differs from the discovered one".into()));
        }
        findings.push(finding);
    }
    let prove_ms = t_prove.elapsed().as_secs_f64() * 1e3;

    let greedy = (findings.is_empty() && matches!(decision, BackendDecision::Fallback(_)) && cfg.t_max < k)
        .then(|| greedy_cover(inst, &pool.rows));
    let derived_sampler = findings.first().and_then(|f| pattern_sampler(Some(&f.counterexample)).ok());
    let mut smt2 = Vec::new();
    if cfg.emit_smt2 {
        let y_orig = base.outputs(inst);
        for t in 1..=cfg.t_max.min(k) {
            smt2.push((t, smtlib_emit(inst, &pool.rows, t, &y_orig)?));
        }
    }

    let knowledge_error = match (&plan, decision) {
        (Some(_), BackendDecision::ZkNative(_)) => {
            Some(knowledge_record(q.q(), inst.public_outputs().len(), d as usize, cfg.repetitions)?)
        }
        _ => None,
    };
    let profile = match decision {
        BackendDecision::ZkNative(p) => Some(p),
        BackendDecision::Fallback(_) => None,
    };
    let pool_diag: Vec<RowDiagnostics> = pool
        .rows
        .iter()
        .map(|r| pool.diagnostics.iter().find(|d| d.row_index == *r).expect("diagnosed").clone())
        .collect();
    let finding_records = findings
        .iter()
        .map(|f| {
            let cx = &f.counterexample;
            let proof_bytes = f.proof.as_ref().map(|p| p.to_bytes());
            let positions: Vec<usize> = (0..k).filter(|&p| cx.edit.delta[p]).collect();
            FindingRecord {
                rows: positions.iter().map(|&p| pool.rows[p]).collect(),
                pool_positions: positions,
                delta: cx.edit.delta.iter().map(|&b| b as u8).collect(),
                c: strs(&cx.edit.c),
                witness_source: cx.witness_source,
                replayed: cx.replayed,
                counterexample_sha256: hex::encode(sha256(cx.to_json().as_bytes())),
                proof_sha256: proof_bytes.as_ref().map(|b| hex::encode(sha256(b))),
                proof_bytes: proof_bytes.as_ref().map(Vec::len),
            }
        })
        .collect();
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        instance: InstanceRecord {
            sha256: hex::encode(sha256(circuit_to_json(inst).as_bytes())),
            modulus: q.q().to_string(),
            num_vars: inst.num_vars(),
            num_constraints: inst.num_constraints(),
            num_outputs: inst.public_outputs().len(),
        },
        config: ConfigRecord {
            seed: cfg.seed,
            t_max: cfg.t_max,
            k,
            lambda: cfg.slicer.score_lambda.to_string(),
            mu: cfg.slicer.score_mu.to_string(),
            score_convention: cfg.slicer.convention,
            backend_choice: cfg.backend,
            repetitions: cfg.repetitions,
            attach_witness: cfg.attach_witness,
            confirm_replay: cfg.confirm_replay,
            input_samples: cfg.input_samples,
            exhaustive_input_limit: cfg.exhaustive_input_limit,
            find_all: cfg.find_all,
            use_site_solves: cfg.use_site_solves,
            worker_count: rayon::current_num_threads(),
            generational_mutation_probability: GENERATIONAL_MUTATION_PROBABILITY,
            generational_crossover_probability: GENERATIONAL_CROSSOVER_PROBABILITY,
        },
        backend: BackendRecord {
            backend_id: profile.map(|p| p.backend_id),
            profile,
            deg_phi: d,
            domain,
            fallback_reason: decision.fallback_reason(),
            crypto_self_test: match (cfg.crypto_self_test, crypto_ok) {
                (CryptoSelfTest::ForceFail, _) => "forced_failure",
                (_, true) => "passed",
                (_, false) => "failed",
            },
        },
        scheme_id: plan.as_ref().map(|_| crate::vortex::SCHEME_ID),
        node_plan: plan,
        pool: PoolRecord { rows: pool.rows.clone(), diagnostics: pool_diag },
        oracle: OracleRecord {
            config: cfg.oracle.clone(),
            seed: cfg.seed,
            batches,
            fallback_constants,
            families: families.iter().map(|f| strs(f)).collect(),
            input_sampler: uniform,
            derived_sampler,
        },
        knowledge_error,
        search: SearchRecord {
            stats: outcome.stats.clone(),
            check_mode: mode,
            input_vectors: space.inputs.len(),
            exhaustive_inputs: exhaustive,
            candidates_found: outcome.candidates.len(),
            greedy_cover: greedy,
        },
        status: if findings.is_empty() { "none" } else { "counterexample" },
        findings: finding_records,
    };
    Ok(RunOutcome {
        findings,
        manifest,
        timings: Timings { slicer_ms, search_ms, prove_ms, total_ms: t0.elapsed().as_secs_f64() * 1e3 },
        counter_used: outcome.counter_used,
        smt2,
    })
}

/// The wire a row assigns: the first non-constant wire on its C side.
fn row_target(inst: &R1CSInstance, row: usize) -> usize {
    inst.rows()[row].c.entries().iter().map(|(i, _)| *i).find(|&i| i != 0).unwrap_or(0)
}

/// Writes the run's artifacts. The first finding goes to `proof.bin` and
/// `counterexample.json`; further findings get an index suffix. `name` is the
/// circuit's file stem.
pub fn write_outputs(out: &RunOutcome, dir: &Path, name: &str) -> Result<(), DriverError> {
    fs::create_dir_all(dir)?;
    for (i, f) in out.findings.iter().enumerate() {
        let sfx = if i == 0 { String::new() } else { format!("_{i}") };
        fs::write(dir.join(format!("counterexample{sfx}.json")), f.counterexample.to_json() + "\n")?;
        if let Some(p) = &f.proof {
            fs::write(dir.join(format!("proof{sfx}.bin")), p.to_bytes())?;
        }
        if let Some(src) = &f.counterexample.mutated_source {
            fs::write(dir.join(format!("{name}{sfx}.mutated.circom")), src)?;
        }
    }
    for (t, s) in &out.smt2 {
        fs::write(dir.join(format!("{name}.t{t}.smt2")), s)?;
    }
    fs::write(dir.join("manifest.json"), out.manifest.to_json())?;
    fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&out.timings).expect("serializable") + "\n")?;
    Ok(())
}
