//! The violation IOP: a sum-check over the edited-residual table weighted by
//! the output-difference polynomial, made non-interactive with a SHA-256
//! transcript.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Pow, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use crate::circuit::{circuit_to_json, CircuitError, R1CSInstance, Witness};
use crate::digest::{sha256, Hash32};
use crate::ff::{lagrange_interpolate, DensePoly, FfError, FieldElement, FieldModulus, Modulus};
use crate::transcript::Transcript;
use crate::vortex::{
    self, build_block_vandermonde, commit, default_domain_size, verify_opening, BlockVandermonde, NodePlan,
    OpeningProof, RowVortexEncoding, VortexError, SCHEME_ID,
};

const TRANSCRIPT_DOMAIN: &str = "zkcraft-viop-v1";
const MAX_GRIND: u64 = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ViopError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("prover statement is false: {0}")]
    ProverStatementFalse(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed proof bytes: {0}")]
    Format(String),
    #[error(transparent)]
    Vortex(#[from] VortexError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Field(#[from] FfError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IopConfig {
    /// Independent sum-check repetitions (`ℓ`).
    pub repetitions: usize,
    pub security_bits: u32,
    /// Interpolation nodes for the output difference; `None` means `1..=m_out`.
    pub output_points: Option<Vec<FieldElement>>,
    /// Commitment domain; `None` picks the smallest admissible power of two.
    pub commit_domain: Option<usize>,
}

impl Default for IopConfig {
    fn default() -> Self {
        IopConfig { repetitions: 2, security_bits: 100, output_points: None, commit_domain: None }
    }
}

impl IopConfig {
    pub fn output_points(&self, q: &Modulus, m_out: usize) -> Result<Vec<FieldElement>, ViopError> {
        match &self.output_points {
            Some(p) if p.len() == m_out => Ok(p.clone()),
            Some(p) => Err(ViopError::ShapeMismatch(format!("{} output points for {m_out} outputs", p.len()))),
            None => Ok((1..=m_out as u64).map(|j| FieldElement::from_u64(q, j)).collect()),
        }
    }
}

/// `t` with `2^t ≥ m`, at least one variable.
pub fn domain_log(m: usize) -> usize {
    let mut t = 1;
    while (1usize << t) < m {
        t += 1;
    }
    t
}

/// `d = 2n + k − 1`.
pub fn degree_bound(n: usize, k: usize) -> usize {
    (2 * n + k).saturating_sub(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaOut {
    pub poly: DensePoly,
    pub y_prime: Vec<FieldElement>,
    pub y_orig: Vec<FieldElement>,
}

pub fn build_delta_out(
    y_prime: &[FieldElement],
    y_orig: &[FieldElement],
    u_points: &[FieldElement],
) -> Result<DeltaOut, ViopError> {
    if y_prime.len() != y_orig.len() || y_prime.len() != u_points.len() {
        return Err(ViopError::ShapeMismatch(format!(
            "|y'| = {}, |y| = {}, |u| = {}",
            y_prime.len(),
            y_orig.len(),
            u_points.len()
        )));
    }
    let poly = if u_points.is_empty() {
        return Err(ViopError::ShapeMismatch("no public outputs".into()));
    } else {
        let pts: Vec<(FieldElement, FieldElement)> =
            u_points.iter().zip(y_prime.iter().zip(y_orig)).map(|(u, (a, b))| (u.clone(), a - b)).collect();
        lagrange_interpolate(u_points[0].modulus(), &pts)?
    };
    Ok(DeltaOut { poly, y_prime: y_prime.to_vec(), y_orig: y_orig.to_vec() })
}

/// Edited residual of every row: a selected row `i` with constant `c` reads
/// `c − ⟨C_i, w⟩`, every other row keeps `⟨A_i,w⟩⟨B_i,w⟩ − ⟨C_i,w⟩`.
pub fn edited_residuals(
    inst: &R1CSInstance,
    pool_rows: &[usize],
    delta: &[bool],
    c: &[FieldElement],
    w: &[FieldElement],
) -> Result<Vec<FieldElement>, ViopError> {
    if w.len() != inst.num_vars() {
        return Err(ViopError::ShapeMismatch(format!("witness length {} for {} variables", w.len(), inst.num_vars())));
    }
    if pool_rows.len() != delta.len() || delta.len() != c.len() {
        return Err(ViopError::ShapeMismatch("pool, delta and c lengths differ".into()));
    }
    let q = inst.modulus();
    let mut pinned: Vec<Option<&FieldElement>> = vec![None; inst.num_constraints()];
    for ((&r, &on), cv) in pool_rows.iter().zip(delta).zip(c) {
        if r >= inst.num_constraints() {
            return Err(ViopError::ShapeMismatch(format!("pool row {r} out of range")));
        }
        if on {
            pinned[r] = Some(cv);
        }
    }
    Ok(inst
        .rows()
        .iter()
        .zip(pinned)
        .map(|(row, p)| match p {
            Some(cv) => cv - &row.c.dot(w, q),
            None => row.residual(w, q),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiR {
    /// Edited residuals indexed by domain point, zero-padded to `2^t`.
    pub table: Vec<FieldElement>,
    pub degree_bound: usize,
}

pub fn build_phi(inst: &R1CSInstance, enc: &RowVortexEncoding, w_prime: &Witness) -> Result<PhiR, ViopError> {
    let mut table = edited_residuals(inst, &enc.pool_rows, &enc.delta, &enc.c, w_prime.values())?;
    table.resize(1 << domain_log(inst.num_constraints()), FieldElement::zero(inst.modulus()));
    Ok(PhiR { table, degree_bound: degree_bound(inst.num_vars(), enc.k()) })
}

/// Multilinear extension of `table` at `point`, lowest index bit bound first.
pub fn mle_eval(table: &[FieldElement], point: &[FieldElement]) -> FieldElement {
    assert_eq!(table.len(), 1 << point.len(), "table size must be 2^vars");
    let mut cur = table.to_vec();
    for z in point {
        cur = fold(&cur, z);
    }
    cur.pop().expect("one entry left")
}

fn fold(t: &[FieldElement], z: &FieldElement) -> Vec<FieldElement> {
    t.chunks(2).map(|p| &p[0] + &(z * &(&p[1] - &p[0]))).collect()
}

fn poly_bytes(p: &DensePoly) -> Vec<u8> {
    let mut b = (p.coeffs().len() as u32).to_le_bytes().to_vec();
    for c in p.coeffs() {
        b.extend_from_slice(&c.to_bytes_fixed());
    }
    b
}

/// One round polynomial per variable of `Σ_U φ̃(U)·D̃(U)`, with challenges
/// drawn from `tr` after each round.
pub fn sumcheck_prove(
    phi: &[FieldElement],
    dtab: &[FieldElement],
    tr: &mut Transcript,
) -> (Vec<DensePoly>, Vec<FieldElement>) {
    let q = phi[0].modulus().clone();
    let two = FieldElement::from_u64(&q, 2);
    let inv2 = two.inv().expect("odd field");
    let (mut p, mut d) = (phi.to_vec(), dtab.to_vec());
    let mut rounds = Vec::new();
    let mut challenges = Vec::new();
    while p.len() > 1 {
        let mut g = [FieldElement::zero(&q), FieldElement::zero(&q), FieldElement::zero(&q)];
        for i in 0..p.len() / 2 {
            let (p0, p1, d0, d1) = (&p[2 * i], &p[2 * i + 1], &d[2 * i], &d[2 * i + 1]);
            g[0] = &g[0] + &(p0 * d0);
            g[1] = &g[1] + &(p1 * d1);
            let p2 = &(p1 + p1) - p0;
            let d2 = &(d1 + d1) - d0;
            g[2] = &g[2] + &(&p2 * &d2);
        }
        let c2 = &(&(&g[2] - &(&g[1] + &g[1])) + &g[0]) * &inv2;
        let c1 = &(&g[1] - &g[0]) - &c2;
        let poly = DensePoly::new(&q, vec![g[0].clone(), c1, c2]);
        tr.absorb("round", &poly_bytes(&poly));
        let z = tr.challenge_fe("zeta", &q);
        p = fold(&p, &z);
        d = fold(&d, &z);
        rounds.push(poly);
        challenges.push(z);
    }
    (rounds, challenges)
}

fn zero_rounds(t: usize, q: &Modulus, tr: &mut Transcript) -> (Vec<DensePoly>, Vec<FieldElement>) {
    let mut rounds = Vec::with_capacity(t);
    let mut challenges = Vec::with_capacity(t);
    for _ in 0..t {
        let poly = DensePoly::zero(q);
        tr.absorb("round", &poly_bytes(&poly));
        challenges.push(tr.challenge_fe("zeta", q));
        rounds.push(poly);
    }
    (rounds, challenges)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofHeader {
    pub scheme_id: String,
    pub q: BigUint,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t: usize,
    pub ell: usize,
    pub m_out: usize,
    pub d: usize,
    pub d_row: usize,
    pub d_sel: usize,
    pub domain_size: usize,
    pub attach_witness: bool,
    pub coeff_list: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repetition {
    pub rounds: Vec<DensePoly>,
    pub challenges: Vec<FieldElement>,
    /// `R(ζ_j, Y)` for each challenge.
    pub slices: Vec<DensePoly>,
    pub phi_at_zeta: FieldElement,
    pub dout_mle_at_zeta: FieldElement,
    /// Univariate `Δ_out(ζ_j)` for each challenge.
    pub dout_at_challenges: Vec<FieldElement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationProof {
    pub header: ProofHeader,
    pub pool_rows: Vec<usize>,
    pub y_orig: Vec<FieldElement>,
    pub y_prime: Vec<FieldElement>,
    pub salt: u64,
    pub root: Hash32,
    pub repetitions: Vec<Repetition>,
    pub leaf_openings: Vec<OpeningProof>,
    pub witness_poly: Option<DensePoly>,
    /// `ρ`, present when there is a single repetition.
    pub coefficients: Option<Vec<FieldElement>>,
    pub transcript_digest: Hash32,
}

struct Statement<'a> {
    inst: &'a R1CSInstance,
    pool_rows: &'a [usize],
    plan: &'a NodePlan,
    y_orig: &'a [FieldElement],
    y_prime: &'a [FieldElement],
    u_points: &'a [FieldElement],
    header: &'a ProofHeader,
    salt: u64,
}

fn instance_digest(inst: &R1CSInstance) -> Hash32 {
    sha256(circuit_to_json(inst).as_bytes())
}

fn header_bytes(h: &ProofHeader) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(h.scheme_id.as_bytes());
    b.extend_from_slice(&h.q.to_bytes_be());
    for v in [h.n, h.m, h.k, h.t, h.ell, h.m_out, h.d, h.d_row, h.d_sel, h.domain_size] {
        b.extend_from_slice(&(v as u64).to_le_bytes());
    }
    b.push(h.attach_witness as u8 | (h.coeff_list as u8) << 1);
    b
}

fn open_statement(s: &Statement) -> Transcript {
    let mut tr = Transcript::new(TRANSCRIPT_DOMAIN);
    tr.absorb("header", &header_bytes(s.header));
    tr.absorb("instance", &instance_digest(s.inst));
    let pool: Vec<u8> = s.pool_rows.iter().flat_map(|r| (*r as u64).to_le_bytes()).collect();
    tr.absorb("pool", &pool);
    tr.absorb_fes("alpha", &s.plan.alpha);
    tr.absorb_fes("beta", &s.plan.beta);
    tr.absorb_fes("y_orig", s.y_orig);
    tr.absorb_fes("y_prime", s.y_prime);
    tr.absorb_fes("u", s.u_points);
    tr.absorb_u64("salt", s.salt);
    tr
}

fn absorb_repetition(tr: &mut Transcript, rep_state: &Hash32, rep: &Repetition) {
    tr.absorb("rep", rep_state);
    for s in &rep.slices {
        tr.absorb("slice", &poly_bytes(s));
    }
    tr.absorb_fe("phi", &rep.phi_at_zeta);
    tr.absorb_fe("dmle", &rep.dout_mle_at_zeta);
    tr.absorb_fes("dout", &rep.dout_at_challenges);
}

fn delta_table(dout: &DensePoly, size: usize) -> Vec<FieldElement> {
    let q = dout.modulus();
    (0..size as u64).map(|u| dout.eval(&FieldElement::from_u64(q, u)).expect("same field")).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn prove(
    inst: &R1CSInstance,
    pool_rows: &[usize],
    plan: &NodePlan,
    delta: &[bool],
    c: &[FieldElement],
    w_prime: &Witness,
    y_orig: &[FieldElement],
    cfg: &IopConfig,
    attach_witness: bool,
) -> Result<ViolationProof, ViopError> {
    prove_with(inst, pool_rows, plan, delta, c, w_prime, y_orig, cfg, attach_witness, Strategy::Honest, 0)
}

/// A cheating prover for soundness measurements. It skips the residual check,
/// sends all-zero round polynomials and claims `Φ̃(ζ) = 0`, so it convinces the
/// verifier exactly when the claimed residual extension really vanishes at the
/// challenges. `salt_start` offsets the salt search so that repeated trials see
/// fresh challenges.
#[allow(clippy::too_many_arguments)]
pub fn forge_zero_rounds(
    inst: &R1CSInstance,
    pool_rows: &[usize],
    plan: &NodePlan,
    delta: &[bool],
    c: &[FieldElement],
    w_claim: &Witness,
    y_orig: &[FieldElement],
    cfg: &IopConfig,
    attach_witness: bool,
    salt_start: u64,
) -> Result<ViolationProof, ViopError> {
    let strategy = Strategy::ZeroRounds;
    prove_with(inst, pool_rows, plan, delta, c, w_claim, y_orig, cfg, attach_witness, strategy, salt_start)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Strategy {
    Honest,
    ZeroRounds,
}

#[allow(clippy::too_many_arguments)]
fn prove_with(
    inst: &R1CSInstance,
    pool_rows: &[usize],
    plan: &NodePlan,
    delta: &[bool],
    c: &[FieldElement],
    w_prime: &Witness,
    y_orig: &[FieldElement],
    cfg: &IopConfig,
    attach_witness: bool,
    strategy: Strategy,
    salt_start: u64,
) -> Result<ViolationProof, ViopError> {
    let q = inst.modulus().clone();
    if cfg.repetitions == 0 {
        return Err(ViopError::InvalidConfig("at least one repetition is required".into()));
    }
    let single = cfg.repetitions == 1;
    let attach = attach_witness || single;
    let y_prime = w_prime.outputs(inst);
    let u_points = cfg.output_points(&q, y_prime.len())?;
    let residuals = edited_residuals(inst, pool_rows, delta, c, w_prime.values())?;
    if let (Strategy::Honest, Some(i)) = (strategy, residuals.iter().position(|r| !r.is_zero())) {
        return Err(ViopError::ProverStatementFalse(format!("edited residual of row {i} is nonzero")));
    }
    if y_prime == y_orig {
        return Err(ViopError::ProverStatementFalse("outputs do not diverge".into()));
    }
    let dout = build_delta_out(&y_prime, y_orig, &u_points)?.poly;
    let enc = vortex::encode(pool_rows, plan, delta, c, inst)?;
    let t = domain_log(inst.num_constraints());
    let phi = build_phi(inst, &enc, w_prime)?;
    let dtab = delta_table(&dout, 1 << t);
    let domain_size = cfg.commit_domain.unwrap_or_else(|| default_domain_size(plan.d_row, 1 << t));
    let header = ProofHeader {
        scheme_id: SCHEME_ID.to_string(),
        q: q.q().clone(),
        n: inst.num_vars(),
        m: inst.num_constraints(),
        k: plan.k(),
        t,
        ell: cfg.repetitions,
        m_out: y_prime.len(),
        d: phi.degree_bound,
        d_row: plan.d_row,
        d_sel: plan.d_sel,
        domain_size,
        attach_witness: attach,
        coeff_list: single,
    };

    for salt in salt_start..salt_start.saturating_add(MAX_GRIND) {
        let stmt =
            Statement { inst, pool_rows, plan, y_orig, y_prime: &y_prime, u_points: &u_points, header: &header, salt };
        let mut tr = open_statement(&stmt);
        let tau = tr.challenge_fe("tau", &q);
        let tree = commit(&enc, plan.d_row, domain_size, &tau)?;
        tr.absorb("root", &tree.commitment.root);
        let mut reps = Vec::with_capacity(cfg.repetitions);
        for r in 0..cfg.repetitions {
            let mut rtr = tr.fork("repetition", r as u64);
            let (rounds, challenges) = match strategy {
                Strategy::Honest => sumcheck_prove(&phi.table, &dtab, &mut rtr),
                Strategy::ZeroRounds => zero_rounds(t, &q, &mut rtr),
            };
            let phi_at_zeta = match strategy {
                Strategy::Honest => mle_eval(&phi.table, &challenges),
                Strategy::ZeroRounds => FieldElement::zero(&q),
            };
            let rep = Repetition {
                slices: challenges.iter().map(|z| enc.slice_at_x(z)).collect(),
                phi_at_zeta,
                dout_mle_at_zeta: mle_eval(&dtab, &challenges),
                dout_at_challenges: challenges.iter().map(|z| dout.eval(z).expect("same field")).collect(),
                rounds,
                challenges,
            };
            absorb_repetition(&mut tr, &rtr.state(), &rep);
            reps.push(rep);
        }
        if reps[0].dout_at_challenges[0].is_zero() {
            continue;
        }
        let positions = tr.distinct_indices("leaves", plan.d_row + 1, domain_size);
        let leaf_openings = positions.iter().map(|&i| tree.open(i)).collect::<Result<Vec<_>, _>>()?;
        for o in &leaf_openings {
            tr.absorb_fe("leaf", &o.claimed_value);
        }
        let witness_poly = if attach {
            let pts: Vec<(FieldElement, FieldElement)> = w_prime
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| (FieldElement::from_u64(&q, i as u64), v.clone()))
                .collect();
            let poly = lagrange_interpolate(&q, &pts)?;
            tr.absorb("witness", &poly_bytes(&poly));
            Some(poly)
        } else {
            None
        };
        let coefficients = if single {
            tr.absorb_fes("coefficients", &enc.rho);
            Some(enc.rho.clone())
        } else {
            None
        };
        return Ok(ViolationProof {
            header,
            pool_rows: pool_rows.to_vec(),
            y_orig: y_orig.to_vec(),
            y_prime,
            salt,
            root: tree.commitment.root,
            repetitions: reps,
            leaf_openings,
            witness_poly,
            coefficients,
            transcript_digest: tr.state(),
        });
    }
    Err(ViopError::ProverStatementFalse("output difference vanished at every ground challenge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    TranscriptMismatch,
    RoundInconsistent,
    OpeningInvalid,
    FinalEvalMismatch,
    NoDivergence,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::TranscriptMismatch => "transcript_mismatch",
            RejectReason::RoundInconsistent => "round_inconsistent",
            RejectReason::OpeningInvalid => "opening_invalid",
            RejectReason::FinalEvalMismatch => "final_eval_mismatch",
            RejectReason::NoDivergence => "no_divergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub reason: RejectReason,
    pub detail: String,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "reject({}): {}", self.reason.as_str(), self.detail)
    }
}

impl std::error::Error for Reject {}

fn reject<T>(reason: RejectReason, detail: impl Into<String>) -> Result<T, Reject> {
    Err(Reject { reason, detail: detail.into() })
}

/// Evidence that [`verify`] accepted a proof. Only `verify` can build one.
#[derive(Debug, Clone)]
pub struct Accepted<'a> {
    proof: &'a ViolationProof,
    block: BlockVandermonde,
    x_coeffs: Vec<FieldElement>,
    y_coeffs: Vec<FieldElement>,
    w_prime: Option<Vec<FieldElement>>,
}

impl<'a> Accepted<'a> {
    pub fn proof(&self) -> &'a ViolationProof {
        self.proof
    }

    pub fn block(&self) -> &BlockVandermonde {
        &self.block
    }

    /// Coefficients `X⁰..X^{d_row}` of the row part recovered from the openings.
    pub fn x_coeffs(&self) -> &[FieldElement] {
        &self.x_coeffs
    }

    /// Coefficients `Y¹..Y^{d_sel}` of the selector part.
    pub fn y_coeffs(&self) -> &[FieldElement] {
        &self.y_coeffs
    }

    /// The witness the verifier already decoded from `W′`, if attached.
    pub fn verified_witness(&self) -> Option<&[FieldElement]> {
        self.w_prime.as_deref()
    }
}

pub fn verify<'a>(
    proof: &'a ViolationProof,
    inst: &R1CSInstance,
    pool_rows: &[usize],
    plan: &NodePlan,
    y_orig: &[FieldElement],
    cfg: &IopConfig,
) -> Result<Accepted<'a>, Reject> {
    use RejectReason::*;
    let q = inst.modulus().clone();
    let h = &proof.header;
    let t = domain_log(inst.num_constraints());
    let k = plan.k();
    let d = degree_bound(inst.num_vars(), k);
    let expected_domain = cfg.commit_domain.unwrap_or_else(|| default_domain_size(plan.d_row, 1 << t));
    let statement_ok = h.scheme_id == SCHEME_ID
        && &h.q == q.q()
        && h.n == inst.num_vars()
        && h.m == inst.num_constraints()
        && h.k == k
        && h.t == t
        && h.ell == cfg.repetitions
        && h.m_out == y_orig.len()
        && h.d == d
        && h.d_row == plan.d_row
        && h.d_sel == plan.d_sel
        && h.domain_size == expected_domain
        && proof.pool_rows == pool_rows
        && proof.y_orig == y_orig
        && proof.y_prime.len() == y_orig.len()
        && proof.repetitions.len() == cfg.repetitions;
    if !statement_ok {
        return reject(TranscriptMismatch, "proof header does not match the statement");
    }
    if proof.y_prime == y_orig {
        return reject(NoDivergence, "claimed outputs equal the original outputs");
    }
    let single = h.ell == 1;
    if single && !(h.attach_witness && h.coeff_list) {
        return reject(TranscriptMismatch, "a single repetition requires W' and the coefficient list");
    }
    if h.attach_witness != proof.witness_poly.is_some() || h.coeff_list != proof.coefficients.is_some() {
        return reject(TranscriptMismatch, "header flags disagree with the proof body");
    }
    let u_points = match cfg.output_points(&q, y_orig.len()) {
        Ok(u) => u,
        Err(e) => return reject(TranscriptMismatch, e.to_string()),
    };
    let dout = match build_delta_out(&proof.y_prime, y_orig, &u_points) {
        Ok(dd) => dd.poly,
        Err(e) => return reject(TranscriptMismatch, e.to_string()),
    };

    let stmt = Statement {
        inst,
        pool_rows,
        plan,
        y_orig,
        y_prime: &proof.y_prime,
        u_points: &u_points,
        header: h,
        salt: proof.salt,
    };
    let mut tr = open_statement(&stmt);
    let tau = tr.challenge_fe("tau", &q);
    tr.absorb("root", &proof.root);

    for (r, rep) in proof.repetitions.iter().enumerate() {
        if rep.rounds.len() != t
            || rep.challenges.len() != t
            || rep.slices.len() != t
            || rep.dout_at_challenges.len() != t
        {
            return reject(RoundInconsistent, format!("repetition {r} has the wrong number of rounds"));
        }
        let mut rtr = tr.fork("repetition", r as u64);
        let mut claim = FieldElement::zero(&q);
        for (j, g) in rep.rounds.iter().enumerate() {
            if g.degree().unwrap_or(0) > d {
                return reject(RoundInconsistent, format!("round {j} exceeds degree bound {d}"));
            }
            let s = &g.eval(&FieldElement::zero(&q)).expect("same field")
                + &g.eval(&FieldElement::one(&q)).expect("same field");
            if s != claim {
                return reject(RoundInconsistent, format!("repetition {r}, round {j} sum mismatch"));
            }
            rtr.absorb("round", &poly_bytes(g));
            let z = rtr.challenge_fe("zeta", &q);
            if z != rep.challenges[j] {
                return reject(TranscriptMismatch, format!("repetition {r}, challenge {j} differs"));
            }
            claim = g.eval(&z).expect("same field");
        }
        let dtab = delta_table(&dout, 1 << t);
        if mle_eval(&dtab, &rep.challenges) != rep.dout_mle_at_zeta {
            return reject(OpeningInvalid, format!("repetition {r}: output-difference extension mismatch"));
        }
        for (j, z) in rep.challenges.iter().enumerate() {
            if dout.eval(z).expect("same field") != rep.dout_at_challenges[j] {
                return reject(OpeningInvalid, format!("repetition {r}: output difference at challenge {j}"));
            }
        }
        if claim != &rep.phi_at_zeta * &rep.dout_mle_at_zeta {
            return reject(FinalEvalMismatch, "product_sum: last round disagrees with the opened product");
        }
        absorb_repetition(&mut tr, &rtr.state(), rep);
    }

    // Openings of R(·, τ) and the Y-slices.
    let positions = tr.distinct_indices("leaves", plan.d_row + 1, h.domain_size);
    if proof.leaf_openings.len() != positions.len() {
        return reject(OpeningInvalid, "wrong number of leaf openings");
    }
    let commitment = vortex::Commitment { root: proof.root, domain_size: h.domain_size, scheme_id: SCHEME_ID };
    let mut pts = Vec::with_capacity(positions.len());
    for (o, &pos) in proof.leaf_openings.iter().zip(&positions) {
        if o.index != pos {
            return reject(TranscriptMismatch, "leaf opening at an unexpected position");
        }
        if o.claimed_value.modulus().q() != q.q() || !verify_opening(&commitment, o) {
            return reject(OpeningInvalid, format!("leaf {pos} fails its authentication path"));
        }
        tr.absorb_fe("leaf", &o.claimed_value);
        pts.push((FieldElement::from_u64(&q, pos as u64), o.claimed_value.clone()));
    }
    let folded = lagrange_interpolate(&q, &pts).expect("distinct positions");
    let first = &proof.repetitions[0].slices[0];
    let y_coeffs: Vec<FieldElement> = (1..=plan.d_sel).map(|j| first.coeff(j)).collect();
    for rep in &proof.repetitions {
        for (s, z) in rep.slices.iter().zip(&rep.challenges) {
            if s.degree().unwrap_or(0) > plan.d_sel {
                return reject(OpeningInvalid, "slice exceeds the selector degree budget");
            }
            if (1..=plan.d_sel).any(|j| s.coeff(j) != y_coeffs[j - 1]) {
                return reject(OpeningInvalid, "slices disagree on the selector part");
            }
            if s.eval(&tau).expect("same field") != folded.eval(z).expect("same field") {
                return reject(OpeningInvalid, "slice inconsistent with the committed evaluations");
            }
        }
    }
    let s_tau =
        y_coeffs.iter().enumerate().fold(FieldElement::zero(&q), |acc, (j, cj)| &acc + &(cj * &tau.pow(j as u64 + 1)));
    let mut x_coeffs: Vec<FieldElement> = (0..=plan.d_row).map(|j| folded.coeff(j)).collect();
    x_coeffs[0] = &x_coeffs[0] - &s_tau;
    if let Some(rho) = &proof.coefficients {
        let mut expect = x_coeffs.clone();
        expect.extend(y_coeffs.iter().cloned());
        if rho != &expect {
            return reject(OpeningInvalid, "coefficient list disagrees with the openings");
        }
    }
    let block = build_block_vandermonde(plan).expect("plan invariants give a nonsingular map");

    // With W′ the verifier recomputes the residual extension itself.
    let mut w_prime = None;
    if let Some(wp) = &proof.witness_poly {
        if wp.degree().unwrap_or(0) >= inst.num_vars() {
            return reject(OpeningInvalid, "witness polynomial degree must be below n");
        }
        let w: Vec<FieldElement> =
            (0..inst.num_vars() as u64).map(|i| wp.eval(&FieldElement::from_u64(&q, i)).expect("same field")).collect();
        if !w[0].is_one() {
            return reject(OpeningInvalid, "witness does not start with the constant 1");
        }
        let outs: Vec<FieldElement> = inst.public_outputs().iter().map(|&i| w[i].clone()).collect();
        if outs != proof.y_prime {
            return reject(OpeningInvalid, "claimed outputs differ from the attached witness");
        }
        if (k..=plan.d_row).any(|j| !x_coeffs[j].is_zero()) || (k..plan.d_sel).any(|j| !y_coeffs[j].is_zero()) {
            return reject(OpeningInvalid, "encoding has coefficients outside the node basis");
        }
        let dv = block.decode_delta(&x_coeffs[..k]);
        let cv = block.decode_c(&y_coeffs[..k]);
        if dv.iter().any(|v| !v.is_zero() && !v.is_one()) {
            return reject(OpeningInvalid, "selection vector is not boolean");
        }
        let dbits: Vec<bool> = dv.iter().map(|v| v.is_one()).collect();
        let mut table = edited_residuals(inst, pool_rows, &dbits, &cv, &w).expect("shapes checked against the header");
        table.resize(1 << t, FieldElement::zero(&q));
        for rep in &proof.repetitions {
            if mle_eval(&table, &rep.challenges) != rep.phi_at_zeta {
                return reject(FinalEvalMismatch, "phi_recompute: residual extension differs from the claim");
            }
        }
        tr.absorb("witness", &poly_bytes(wp));
        w_prime = Some(w);
    }
    if let Some(rho) = &proof.coefficients {
        tr.absorb_fes("coefficients", rho);
    }
    for rep in &proof.repetitions {
        if !rep.phi_at_zeta.is_zero() {
            return reject(FinalEvalMismatch, "phi_nonzero: edited residual extension is nonzero");
        }
    }
    if tr.state() != proof.transcript_digest {
        return reject(TranscriptMismatch, "final transcript digest differs");
    }
    let diverges = if single {
        !proof.repetitions[0].dout_at_challenges[0].is_zero()
    } else {
        proof.repetitions.iter().any(|r| r.dout_at_challenges.iter().any(|v| !v.is_zero()))
    };
    if !diverges {
        return reject(NoDivergence, "output difference vanishes at the sampled challenges");
    }
    Ok(Accepted { proof, block, x_coeffs, y_coeffs, w_prime })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeError {
    /// `(m_out − 1 + ℓ·d) / q`
    pub linear: BigRational,
    /// `((m_out − 1 + d) / q)^ℓ`
    pub exponential: BigRational,
}

pub fn knowledge_error_bound(q: &BigUint, m_out: usize, d: usize, ell: usize) -> Result<KnowledgeError, ViopError> {
    if ell == 0 || m_out == 0 {
        return Err(ViopError::InvalidConfig("m_out and ell must be positive".into()));
    }
    let qi = BigInt::from(q.clone());
    let lin_num = BigInt::from(m_out - 1 + ell * d);
    let per = BigRational::new(BigInt::from(m_out - 1 + d), qi.clone());
    Ok(KnowledgeError { linear: BigRational::new(lin_num, qi), exponential: Pow::pow(per, ell as u32) })
}

/// `log2` of a positive rational, good to a few bits, for reports.
pub fn approx_log2(r: &BigRational) -> f64 {
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    let n = r.numer().magnitude();
    let d = r.denom().magnitude();
    let shift = |x: &BigUint| -> (f64, i64) {
        let bits = x.bits() as i64;
        let s = (bits - 60).max(0);
        let top: BigUint = x >> s as usize;
        (top.to_string().parse::<f64>().expect("fits"), s)
    };
    let (nf, ns) = shift(n);
    let (df, ds) = shift(d);
    nf.log2() + ns as f64 - df.log2() - ds as f64
}

// ---------------------------------------------------------------------------
// Serialization

const PROOF_MAGIC: &[u8; 4] = b"ZKCP";
const PROOF_VERSION: u8 = 1;

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len());
        self.0.extend_from_slice(b);
    }
    fn fe(&mut self, v: &FieldElement) {
        self.0.extend_from_slice(&v.to_bytes_fixed());
    }
    fn fes(&mut self, v: &[FieldElement]) {
        self.u32(v.len());
        v.iter().for_each(|x| self.fe(x));
    }
    fn poly(&mut self, p: &DensePoly) {
        self.fes(p.coeffs());
    }
}

struct In<'a> {
    b: &'a [u8],
    pos: usize,
    q: Option<Modulus>,
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ViopError> {
        if self.b.len() - self.pos < n {
            return Err(ViopError::Format(format!("truncated at offset {}", self.pos)));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ViopError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, ViopError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")) as usize)
    }
    fn u64(&mut self) -> Result<u64, ViopError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    fn usize(&mut self) -> Result<usize, ViopError> {
        usize::try_from(self.u64()?).map_err(|_| ViopError::Format("length overflow".into()))
    }
    fn bytes(&mut self) -> Result<&'a [u8], ViopError> {
        let n = self.u32()?;
        self.take(n)
    }
    fn hash(&mut self) -> Result<Hash32, ViopError> {
        Ok(self.take(32)?.try_into().expect("32"))
    }
    fn fe(&mut self) -> Result<FieldElement, ViopError> {
        let q = self.q.clone().expect("modulus read first");
        let raw = self.take(q.byte_len())?;
        FieldElement::from_bytes_fixed(&q, raw).ok_or_else(|| ViopError::Format("field element not reduced".into()))
    }
    fn count(&mut self) -> Result<usize, ViopError> {
        let n = self.u32()?;
        if n > self.b.len() - self.pos {
            return Err(ViopError::Format("implausible element count".into()));
        }
        Ok(n)
    }
    fn fes(&mut self) -> Result<Vec<FieldElement>, ViopError> {
        let n = self.count()?;
        (0..n).map(|_| self.fe()).collect()
    }
    fn poly(&mut self) -> Result<DensePoly, ViopError> {
        let q = self.q.clone().expect("modulus read first");
        Ok(DensePoly::new(&q, self.fes()?))
    }
}

impl ViolationProof {
    pub fn modulus(&self) -> Modulus {
        self.y_orig
            .first()
            .map(|v| v.modulus().clone())
            .unwrap_or_else(|| FieldModulus::new(self.header.q.clone()).expect("prime"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut o = Out(Vec::new());
        o.0.extend_from_slice(PROOF_MAGIC);
        o.u8(PROOF_VERSION);
        o.bytes(h.scheme_id.as_bytes());
        o.bytes(&h.q.to_bytes_be());
        for v in [h.n, h.m, h.k, h.t, h.ell, h.m_out, h.d, h.d_row, h.d_sel, h.domain_size] {
            o.u64(v as u64);
        }
        o.u8(h.attach_witness as u8 | (h.coeff_list as u8) << 1);
        o.u64(self.salt);
        o.0.extend_from_slice(&self.root);
        o.u32(self.pool_rows.len());
        self.pool_rows.iter().for_each(|r| o.u64(*r as u64));
        o.fes(&self.y_orig);
        o.fes(&self.y_prime);
        o.u32(self.repetitions.len());
        for rep in &self.repetitions {
            o.u32(rep.rounds.len());
            rep.rounds.iter().for_each(|p| o.poly(p));
            o.fes(&rep.challenges);
            o.u32(rep.slices.len());
            rep.slices.iter().for_each(|p| o.poly(p));
            o.fe(&rep.phi_at_zeta);
            o.fe(&rep.dout_mle_at_zeta);
            o.fes(&rep.dout_at_challenges);
        }
        o.u32(self.leaf_openings.len());
        for op in &self.leaf_openings {
            o.u64(op.index as u64);
            o.fe(&op.claimed_value);
            o.u32(op.auth_path.len());
            op.auth_path.iter().for_each(|p| o.0.extend_from_slice(p));
        }
        if let Some(w) = &self.witness_poly {
            o.poly(w);
        }
        if let Some(c) = &self.coefficients {
            o.fes(c);
        }
        o.0.extend_from_slice(&self.transcript_digest);
        o.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ViopError> {
        let mut r = In { b: bytes, pos: 0, q: None };
        if r.take(4)? != PROOF_MAGIC {
            return Err(ViopError::Format("bad magic".into()));
        }
        let ver = r.u8()?;
        if ver != PROOF_VERSION {
            return Err(ViopError::Format(format!("unsupported version {ver}")));
        }
        let scheme_id =
            String::from_utf8(r.bytes()?.to_vec()).map_err(|_| ViopError::Format("scheme id is not UTF-8".into()))?;
        let q = BigUint::from_bytes_be(r.bytes()?);
        let modulus = FieldModulus::new(q.clone()).map_err(|e| ViopError::Format(e.to_string()))?;
        r.q = Some(modulus);
        let mut nums = [0usize; 10];
        for v in nums.iter_mut() {
            *v = r.usize()?;
        }
        let flags = r.u8()?;
        let header = ProofHeader {
            scheme_id,
            q,
            n: nums[0],
            m: nums[1],
            k: nums[2],
            t: nums[3],
            ell: nums[4],
            m_out: nums[5],
            d: nums[6],
            d_row: nums[7],
            d_sel: nums[8],
            domain_size: nums[9],
            attach_witness: flags & 1 != 0,
            coeff_list: flags & 2 != 0,
        };
        let salt = r.u64()?;
        let root = r.hash()?;
        let np = r.count()?;
        let pool_rows = (0..np).map(|_| r.usize()).collect::<Result<_, _>>()?;
        let y_orig = r.fes()?;
        let y_prime = r.fes()?;
        let nrep = r.count()?;
        let mut repetitions = Vec::with_capacity(nrep);
        for _ in 0..nrep {
            let nr = r.count()?;
            let rounds = (0..nr).map(|_| r.poly()).collect::<Result<_, _>>()?;
            let challenges = r.fes()?;
            let ns = r.count()?;
            let slices = (0..ns).map(|_| r.poly()).collect::<Result<_, _>>()?;
            repetitions.push(Repetition {
                rounds,
                challenges,
                slices,
                phi_at_zeta: r.fe()?,
                dout_mle_at_zeta: r.fe()?,
                dout_at_challenges: r.fes()?,
            });
        }
        let nl = r.count()?;
        let mut leaf_openings = Vec::with_capacity(nl);
        for _ in 0..nl {
            let index = r.usize()?;
            let claimed_value = r.fe()?;
            let depth = r.count()?;
            let auth_path = (0..depth).map(|_| r.hash()).collect::<Result<_, _>>()?;
            leaf_openings.push(OpeningProof { index, claimed_value, auth_path });
        }
        let witness_poly = if header.attach_witness { Some(r.poly()?) } else { None };
        let coefficients = if header.coeff_list { Some(r.fes()?) } else { None };
        let transcript_digest = r.hash()?;
        if r.pos != bytes.len() {
            return Err(ViopError::Format("trailing bytes".into()));
        }
        Ok(ViolationProof {
            header,
            pool_rows,
            y_orig,
            y_prime,
            salt,
            root,
            repetitions,
            leaf_openings,
            witness_poly,
            coefficients,
            transcript_digest,
        })
    }

    /// Debug view mirroring the binary layout.
    pub fn to_json(&self) -> Value {
        let fes = |v: &[FieldElement]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        let poly = |p: &DensePoly| fes(p.coeffs());
        let h = &self.header;
        json!({
            "header": {
                "scheme_id": h.scheme_id, "q": h.q.to_string(), "n": h.n, "m": h.m, "k": h.k,
                "t": h.t, "ell": h.ell, "m_out": h.m_out, "d": h.d, "d_row": h.d_row,
                "d_sel": h.d_sel, "domain_size": h.domain_size,
                "attach_witness": h.attach_witness, "coeff_list": h.coeff_list,
            },
            "salt": self.salt,
            "root": hex::encode(self.root),
            "pool_rows": self.pool_rows,
            "y_orig": fes(&self.y_orig),
            "y_prime": fes(&self.y_prime),
            "repetitions": self.repetitions.iter().map(|r| json!({
                "rounds": r.rounds.iter().map(poly).collect::<Vec<_>>(),
                "challenges": fes(&r.challenges),
                "slices": r.slices.iter().map(poly).collect::<Vec<_>>(),
                "phi_at_zeta": r.phi_at_zeta.to_string(),
                "dout_mle_at_zeta": r.dout_mle_at_zeta.to_string(),
                "dout_at_challenges": fes(&r.dout_at_challenges),
            })).collect::<Vec<_>>(),
            "leaf_openings": self.leaf_openings.iter().map(|o| json!({
                "index": o.index,
                "value": o.claimed_value.to_string(),
                "auth_path": o.auth_path.iter().map(hex::encode).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "witness_poly": self.witness_poly.as_ref().map(poly),
            "coefficients": self.coefficients.as_ref().map(|c| fes(c)),
            "transcript_digest": hex::encode(self.transcript_digest),
        })
    }
}
