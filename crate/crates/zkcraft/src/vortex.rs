//! Row/selector encodings of an edit `(δ, c)`, the block-Vandermonde map and a
//! Merkle commitment to evaluations of the encoded polynomial.
//!
//! The encoded polynomial is separable: `R(X, Y) = P(X) + S(Y)` with
//! `P = Σ δ_i·row_i` and `S = Σ c_i·sel_i`, where `S` has no constant term.

use serde::Serialize;
use thiserror::Error;

use crate::circuit::R1CSInstance;
use crate::digest::{sha256_parts, Hash32};
use crate::ff::{
    identity, mat_mul, mat_vec, solve_linear, DensePoly, FfError, FieldElement, LinearSolution, Matrix, Modulus,
};
use num_bigint::BigUint;

pub const SCHEME_ID: &str = "merkle_eval_v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VortexError {
    #[error("field too small: need q > 2k = {0}")]
    FieldTooSmall(usize),
    #[error("degree budget exceeded: {0}")]
    DegreeBudgetExceeded(String),
    #[error("block-Vandermonde matrix is singular")]
    SingularMatrix,
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("point {0} outside the commitment domain")]
    PointOutsideDomain(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Field(#[from] FfError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodePlan {
    #[serde(serialize_with = "ser_fes")]
    pub alpha: Vec<FieldElement>,
    #[serde(serialize_with = "ser_fes")]
    pub beta: Vec<FieldElement>,
    pub d_row: usize,
    pub d_sel: usize,
}

fn ser_fes<S: serde::Serializer>(v: &[FieldElement], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

impl NodePlan {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn modulus(&self) -> &Modulus {
        self.alpha[0].modulus()
    }
}

/// Default degree budgets for a pool of size `k`: the node-coefficient encoding
/// needs `k−1` for rows and `k` for selectors.
pub fn default_degrees(k: usize) -> (usize, usize) {
    (k.saturating_sub(1), k)
}

pub fn choose_nodes(q: &Modulus, k: usize, d_row: usize, d_sel: usize) -> Result<NodePlan, VortexError> {
    if k == 0 {
        return Err(VortexError::ShapeMismatch("pool is empty".into()));
    }
    if q.q() <= &BigUint::from(2 * k) {
        return Err(VortexError::FieldTooSmall(2 * k));
    }
    Ok(NodePlan {
        alpha: (1..=k as u64).map(|v| FieldElement::from_u64(q, v)).collect(),
        beta: (k as u64 + 1..=2 * k as u64).map(|v| FieldElement::from_u64(q, v)).collect(),
        d_row,
        d_sel,
    })
}

fn vandermonde(nodes: &[FieldElement]) -> Matrix {
    let k = nodes.len();
    (0..k).map(|j| nodes.iter().map(|n| n.pow(j as u64)).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockVandermonde {
    pub m: Matrix,
    pub det: FieldElement,
    pub inverse: Matrix,
}

impl BlockVandermonde {
    pub fn apply(&self, v: &[FieldElement]) -> Vec<FieldElement> {
        mat_vec(&self.m, v)
    }

    pub fn invert(&self, rho: &[FieldElement]) -> Vec<FieldElement> {
        mat_vec(&self.inverse, rho)
    }

    pub fn k(&self) -> usize {
        self.m.len() / 2
    }

    /// `V_sel⁻¹` applied to selector coefficients `Y¹..Y^k`.
    pub fn decode_c(&self, y_coeffs: &[FieldElement]) -> Vec<FieldElement> {
        let k = self.k();
        (0..k)
            .map(|i| {
                let q = y_coeffs[0].modulus();
                (0..k).fold(FieldElement::zero(q), |acc, j| &acc + &(&self.inverse[k + i][k + j] * &y_coeffs[j]))
            })
            .collect()
    }

    /// `V_row⁻¹` applied to row coefficients `X⁰..X^{k−1}`.
    pub fn decode_delta(&self, x_coeffs: &[FieldElement]) -> Vec<FieldElement> {
        let k = self.k();
        (0..k)
            .map(|i| {
                let q = x_coeffs[0].modulus();
                (0..k).fold(FieldElement::zero(q), |acc, j| &acc + &(&self.inverse[i][j] * &x_coeffs[j]))
            })
            .collect()
    }
}

fn vandermonde_det(nodes: &[FieldElement]) -> FieldElement {
    let q = nodes[0].modulus();
    let mut det = FieldElement::one(q);
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            det = &det * &(&nodes[j] - &nodes[i]);
        }
    }
    det
}

pub fn build_block_vandermonde(plan: &NodePlan) -> Result<BlockVandermonde, VortexError> {
    let k = plan.k();
    let q = plan.modulus().clone();
    let vr = vandermonde(&plan.alpha);
    let vs = vandermonde(&plan.beta);
    let zero = FieldElement::zero(&q);
    let mut m = vec![vec![zero; 2 * k]; 2 * k];
    for j in 0..k {
        for i in 0..k {
            m[j][i] = vr[j][i].clone();
            m[k + j][k + i] = vs[j][i].clone();
        }
    }
    let det = &vandermonde_det(&plan.alpha) * &vandermonde_det(&plan.beta);
    if det.is_zero() {
        return Err(VortexError::SingularMatrix);
    }
    let id = identity(&q, 2 * k);
    let mut inverse = vec![Vec::with_capacity(2 * k); 2 * k];
    for col in 0..2 * k {
        let rhs: Vec<FieldElement> = (0..2 * k).map(|r| id[r][col].clone()).collect();
        match solve_linear(&q, &m, &rhs, 2 * k)? {
            LinearSolution::Unique(x) => {
                for (r, v) in x.into_iter().enumerate() {
                    inverse[r].push(v);
                }
            }
            _ => return Err(VortexError::SingularMatrix),
        }
    }
    debug_assert_eq!(mat_mul(&m, &inverse), id);
    Ok(BlockVandermonde { m, det, inverse })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowVortexEncoding {
    pub pool_rows: Vec<usize>,
    pub row_polys: Vec<DensePoly>,
    pub sel_polys: Vec<DensePoly>,
    pub delta: Vec<bool>,
    pub c: Vec<FieldElement>,
    /// `X⁰..X^{k−1}` coefficients of `P` followed by `Y¹..Y^k` coefficients of `S`.
    pub rho: Vec<FieldElement>,
    /// All of `R`'s constant term sits in `P`.
    x_part: DensePoly,
    y_part: DensePoly,
}

/// `row_i(X) = Σ_{j<k} α_i^j X^j`.
pub fn row_poly(plan: &NodePlan, i: usize) -> DensePoly {
    let q = plan.modulus();
    DensePoly::new(q, (0..plan.k()).map(|j| plan.alpha[i].pow(j as u64)).collect())
}

/// `sel_i(Y) = Σ_{j=1..k} β_i^{j−1} Y^j`.
pub fn sel_poly(plan: &NodePlan, i: usize) -> DensePoly {
    let q = plan.modulus();
    let mut coeffs = vec![FieldElement::zero(q)];
    coeffs.extend((0..plan.k()).map(|j| plan.beta[i].pow(j as u64)));
    DensePoly::new(q, coeffs)
}

fn check_budget(plan: &NodePlan) -> Result<(), VortexError> {
    let (need_row, need_sel) = default_degrees(plan.k());
    if plan.d_row < need_row {
        return Err(VortexError::DegreeBudgetExceeded(format!(
            "row encoding needs degree {need_row}, budget is {}",
            plan.d_row
        )));
    }
    if plan.d_sel < need_sel {
        return Err(VortexError::DegreeBudgetExceeded(format!(
            "selector encoding needs degree {need_sel}, budget is {}",
            plan.d_sel
        )));
    }
    Ok(())
}

pub fn encode(
    pool_rows: &[usize],
    plan: &NodePlan,
    delta: &[bool],
    c: &[FieldElement],
    row_source: &R1CSInstance,
) -> Result<RowVortexEncoding, VortexError> {
    let k = plan.k();
    if pool_rows.len() != k || delta.len() != k || c.len() != k {
        return Err(VortexError::ShapeMismatch(format!(
            "pool {}, delta {}, c {} for k = {k}",
            pool_rows.len(),
            delta.len(),
            c.len()
        )));
    }
    if let Some(r) = pool_rows.iter().find(|&&r| r >= row_source.num_constraints()) {
        return Err(VortexError::ShapeMismatch(format!("pool row {r} out of range")));
    }
    check_budget(plan)?;
    let row_polys: Vec<DensePoly> = (0..k).map(|i| row_poly(plan, i)).collect();
    let sel_polys: Vec<DensePoly> = (0..k).map(|i| sel_poly(plan, i)).collect();
    encode_with_polys(pool_rows.to_vec(), row_polys, sel_polys, delta, c, plan.d_row, plan.d_sel)
}

/// Encodes with caller-supplied row and selector polynomials. Selector constant
/// terms are moved into the `X` part.
pub fn encode_with_polys(
    pool_rows: Vec<usize>,
    row_polys: Vec<DensePoly>,
    sel_polys: Vec<DensePoly>,
    delta: &[bool],
    c: &[FieldElement],
    d_row: usize,
    d_sel: usize,
) -> Result<RowVortexEncoding, VortexError> {
    let k = row_polys.len();
    if sel_polys.len() != k || delta.len() != k || c.len() != k || k == 0 {
        return Err(VortexError::ShapeMismatch("encoding inputs disagree on k".into()));
    }
    let q = c[0].modulus().clone();
    for p in &row_polys {
        if p.degree().unwrap_or(0) > d_row {
            return Err(VortexError::DegreeBudgetExceeded(format!("row poly exceeds d_row = {d_row}")));
        }
    }
    for p in &sel_polys {
        if p.degree().unwrap_or(0) > d_sel {
            return Err(VortexError::DegreeBudgetExceeded(format!("sel poly exceeds d_sel = {d_sel}")));
        }
    }
    let mut x_part = DensePoly::zero(&q);
    let mut y_part = DensePoly::zero(&q);
    for i in 0..k {
        if delta[i] {
            x_part = x_part.add(&row_polys[i]);
        }
        y_part = y_part.add(&sel_polys[i].scale(&c[i]));
    }
    let y0 = y_part.coeff(0);
    if !y0.is_zero() {
        x_part = x_part.add(&DensePoly::constant(y0.clone()));
        y_part = y_part.sub(&DensePoly::constant(y0));
    }
    let mut rho: Vec<FieldElement> = (0..=d_row).map(|j| x_part.coeff(j)).collect();
    rho.extend((1..=d_sel).map(|j| y_part.coeff(j)));
    Ok(RowVortexEncoding { pool_rows, row_polys, sel_polys, delta: delta.to_vec(), c: c.to_vec(), rho, x_part, y_part })
}

impl RowVortexEncoding {
    pub fn k(&self) -> usize {
        self.delta.len()
    }

    pub fn modulus(&self) -> &Modulus {
        self.c[0].modulus()
    }

    pub fn x_part(&self) -> &DensePoly {
        &self.x_part
    }

    pub fn y_part(&self) -> &DensePoly {
        &self.y_part
    }

    pub fn eval(&self, x: &FieldElement, y: &FieldElement) -> FieldElement {
        &self.x_part.eval(x).expect("same field") + &self.y_part.eval(y).expect("same field")
    }

    /// `R(ζ, Y)` as a polynomial in `Y`.
    pub fn slice_at_x(&self, zeta: &FieldElement) -> DensePoly {
        self.y_part.add(&DensePoly::constant(self.x_part.eval(zeta).expect("same field")))
    }

    /// `R(X, τ)` as a polynomial in `X`.
    pub fn fold_at_y(&self, tau: &FieldElement) -> DensePoly {
        self.x_part.add(&DensePoly::constant(self.y_part.eval(tau).expect("same field")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commitment {
    pub root: Hash32,
    pub domain_size: usize,
    pub scheme_id: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpeningProof {
    pub index: usize,
    pub claimed_value: FieldElement,
    pub auth_path: Vec<Hash32>,
}

/// The committed Merkle tree, kept by the prover to answer openings.
#[derive(Debug, Clone)]
pub struct CommittedTree {
    pub commitment: Commitment,
    values: Vec<FieldElement>,
    layers: Vec<Vec<Hash32>>,
}

pub fn leaf_hash(index: usize, value: &FieldElement) -> Hash32 {
    sha256_parts(&[&(index as u64).to_le_bytes(), &value.to_bytes_fixed()])
}

pub fn node_hash(l: &Hash32, r: &Hash32) -> Hash32 {
    sha256_parts(&[&[0x01], l, r])
}

pub fn default_domain_size(d_row: usize, phi_domain: usize) -> usize {
    phi_domain.max((d_row + 1).next_power_of_two()).max(2)
}

/// Commits to `R(x, τ)` for `x ∈ [0, domain_size)`.
pub fn commit(
    enc: &RowVortexEncoding,
    d_row: usize,
    domain_size: usize,
    tau: &FieldElement,
) -> Result<CommittedTree, VortexError> {
    if !domain_size.is_power_of_two() || domain_size < 2 {
        return Err(VortexError::DomainTooSmall(format!("{domain_size} is not a power of two ≥ 2")));
    }
    if domain_size < d_row + 1 {
        return Err(VortexError::DomainTooSmall(format!(
            "{domain_size} points cannot pin a degree-{d_row} polynomial"
        )));
    }
    let q = enc.modulus();
    let folded = enc.fold_at_y(tau);
    let values: Vec<FieldElement> =
        (0..domain_size).map(|x| folded.eval(&FieldElement::from_u64(q, x as u64)).expect("same field")).collect();
    Ok(commit_values(values))
}

pub fn commit_values(values: Vec<FieldElement>) -> CommittedTree {
    let mut layers = vec![values.iter().enumerate().map(|(i, v)| leaf_hash(i, v)).collect::<Vec<_>>()];
    while layers.last().expect("nonempty").len() > 1 {
        let prev = layers.last().expect("nonempty");
        let next = prev.chunks(2).map(|p| node_hash(&p[0], &p[1])).collect();
        layers.push(next);
    }
    let root = layers.last().expect("nonempty")[0];
    CommittedTree { commitment: Commitment { root, domain_size: values.len(), scheme_id: SCHEME_ID }, values, layers }
}

impl CommittedTree {
    pub fn open(&self, index: usize) -> Result<OpeningProof, VortexError> {
        if index >= self.values.len() {
            return Err(VortexError::PointOutsideDomain(index));
        }
        let mut path = Vec::with_capacity(self.layers.len() - 1);
        let mut pos = index;
        for layer in &self.layers[..self.layers.len() - 1] {
            path.push(layer[pos ^ 1]);
            pos >>= 1;
        }
        Ok(OpeningProof { index, claimed_value: self.values[index].clone(), auth_path: path })
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.values
    }
}

pub fn verify_opening(c: &Commitment, proof: &OpeningProof) -> bool {
    if proof.index >= c.domain_size || 1usize << proof.auth_path.len() != c.domain_size {
        return false;
    }
    let mut h = leaf_hash(proof.index, &proof.claimed_value);
    let mut pos = proof.index;
    for sib in &proof.auth_path {
        h = if pos & 1 == 0 { node_hash(&h, sib) } else { node_hash(sib, &h) };
        pos >>= 1;
    }
    h == c.root
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ff::{test101, FieldModulus};

    fn fe(v: u64) -> FieldElement {
        FieldElement::from_u64(&test101(), v)
    }

    #[test]
    fn node_choice() {
        let plan = choose_nodes(&test101(), 3, 2, 3).unwrap();
        assert_eq!(plan.alpha, vec![fe(1), fe(2), fe(3)]);
        assert_eq!(plan.beta, vec![fe(4), fe(5), fe(6)]);
        assert!(choose_nodes(&FieldModulus::from_u64(7).unwrap(), 3, 2, 3).is_ok());
        assert_eq!(
            choose_nodes(&FieldModulus::from_u64(5).unwrap(), 3, 2, 3).unwrap_err(),
            VortexError::FieldTooSmall(6)
        );
    }

    #[test]
    fn size_one_matrix_is_identity() {
        let plan = choose_nodes(&test101(), 1, 0, 1).unwrap();
        let bv = build_block_vandermonde(&plan).unwrap();
        assert_eq!(bv.m, identity(&test101(), 2));
    }

    #[test]
    fn determinant_matches_product_formula() {
        let plan = choose_nodes(&test101(), 3, 2, 3).unwrap();
        let bv = build_block_vandermonde(&plan).unwrap();
        // (2-1)(3-1)(3-2) * (5-4)(6-4)(6-5) = 2 * 2
        assert_eq!(bv.det, fe(4));
        assert_eq!(mat_mul(&bv.m, &bv.inverse), identity(&test101(), 6));
    }

    #[test]
    fn rho_is_the_affine_image() {
        let inst = crate::toy::instance();
        let plan = choose_nodes(&test101(), 3, 2, 3).unwrap();
        let bv = build_block_vandermonde(&plan).unwrap();
        let delta = [true, false, true];
        let c = [fe(2), fe(0), fe(3)];
        let enc = encode(&[0, 1, 2], &plan, &delta, &c, &inst).unwrap();
        let mut v: Vec<FieldElement> = delta.iter().map(|&b| fe(b as u64)).collect();
        v.extend(c.iter().cloned());
        assert_eq!(enc.rho, bv.apply(&v));
        assert_eq!(bv.invert(&enc.rho), v);
    }

    #[test]
    fn budget_is_enforced() {
        let inst = crate::toy::instance();
        let plan = choose_nodes(&test101(), 3, 1, 3).unwrap();
        let err = encode(&[0, 1, 2], &plan, &[true; 3], &[fe(0), fe(0), fe(0)], &inst).unwrap_err();
        assert!(matches!(err, VortexError::DegreeBudgetExceeded(_)));
    }

    #[test]
    fn explicit_polys_evaluate_at_one() {
        let q = test101();
        let rows = vec![
            DensePoly::from_u64s(&q, &[1, 1, 1]),
            DensePoly::from_u64s(&q, &[1, 3, 2]),
            DensePoly::from_u64s(&q, &[3, 2, 1]),
        ];
        let evals: Vec<FieldElement> = rows.iter().map(|p| p.eval(&fe(1)).unwrap()).collect();
        assert_eq!(evals, vec![fe(3), fe(6), fe(6)]);
        let sels = vec![
            DensePoly::from_u64s(&q, &[0, 1]),
            DensePoly::from_u64s(&q, &[0, 0, 1]),
            DensePoly::from_u64s(&q, &[0, 0, 0, 1]),
        ];
        let enc = encode_with_polys(vec![0, 1, 2], rows, sels, &[true; 3], &[fe(0), fe(0), fe(0)], 2, 3).unwrap();
        assert_eq!(enc.slice_at_x(&fe(1)), DensePoly::from_u64s(&q, &[15]));
    }

    #[test]
    fn zero_edit_encodes_to_zero() {
        let inst = crate::toy::instance();
        let plan = choose_nodes(&test101(), 3, 2, 3).unwrap();
        let enc = encode(&[0, 1, 2], &plan, &[false; 3], &[fe(0), fe(0), fe(0)], &inst).unwrap();
        assert!(enc.rho.iter().all(|v| v.is_zero()));
        assert!(enc.eval(&fe(7), &fe(9)).is_zero());
    }

    #[test]
    fn openings_and_tampering() {
        let inst = crate::toy::instance();
        let plan = choose_nodes(&test101(), 3, 2, 3).unwrap();
        let enc = encode(&[0, 1, 2], &plan, &[true, false, true], &[fe(2), fe(0), fe(3)], &inst).unwrap();
        let tree = commit(&enc, 2, 8, &fe(17)).unwrap();
        let again = commit(&enc, 2, 8, &fe(17)).unwrap();
        assert_eq!(tree.commitment, again.commitment);
        for i in 0..8 {
            let p = tree.open(i).unwrap();
            assert_eq!(p.auth_path.len(), 3);
            assert!(verify_opening(&tree.commitment, &p));
            let mut bad = p.clone();
            bad.claimed_value = &bad.claimed_value + &fe(1);
            assert!(!verify_opening(&tree.commitment, &bad));
            let mut bad = p.clone();
            bad.auth_path[1][0] ^= 1;
            assert!(!verify_opening(&tree.commitment, &bad));
        }
        assert_eq!(tree.open(8).unwrap_err(), VortexError::PointOutsideDomain(8));
        assert!(matches!(commit(&enc, 2, 2, &fe(17)), Err(VortexError::DomainTooSmall(_))));
        let other = encode(&[0, 1, 2], &plan, &[true, false, true], &[fe(2), fe(0), fe(4)], &inst).unwrap();
        assert_ne!(commit(&other, 2, 8, &fe(17)).unwrap().commitment.root, tree.commitment.root);
    }
}
