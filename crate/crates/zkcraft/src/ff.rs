//! Prime-field elements, dense univariate polynomials and a small linear solver.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BN254_SCALAR: &str = "21888242871839275222246405745257275088548364400416034343698204186575808495617";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FfError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("operands belong to different fields")]
    ModulusMismatch,
    #[error("interpolation node {0} appears more than once")]
    DuplicateNode(String),
    #[error("modulus {0} is not prime")]
    NotPrime(String),
    #[error("modulus must be at least 3")]
    ModulusTooSmall,
    #[error("unknown field preset or malformed modulus: {0}")]
    BadModulus(String),
    #[error("matrix shape mismatch")]
    ShapeMismatch,
}

#[derive(Debug, PartialEq, Eq)]
pub struct FieldModulus {
    q: BigUint,
    byte_len: usize,
}

pub type Modulus = Arc<FieldModulus>;

impl FieldModulus {
    pub fn new(q: BigUint) -> Result<Modulus, FfError> {
        if q < BigUint::from(3u8) {
            return Err(FfError::ModulusTooSmall);
        }
        if !num_prime::nt_funcs::is_prime(&q, None).probably() {
            return Err(FfError::NotPrime(q.to_string()));
        }
        let byte_len = q.bits().div_ceil(8) as usize;
        Ok(Arc::new(FieldModulus { q, byte_len }))
    }

    pub fn from_u64(q: u64) -> Result<Modulus, FfError> {
        Self::new(BigUint::from(q))
    }

    /// Accepts `test101`, `bn254scalar` or a decimal prime.
    pub fn parse(spec: &str) -> Result<Modulus, FfError> {
        match spec {
            "test101" => Ok(test101()),
            "bn254scalar" => Ok(bn254scalar()),
            other => {
                let q: BigUint = other.parse().map_err(|_| FfError::BadModulus(other.to_string()))?;
                Self::new(q)
            }
        }
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    /// Width of the fixed big-endian encoding of an element.
    pub fn byte_len(&self) -> usize {
        self.byte_len
    }

    pub fn preset_name(&self) -> Option<&'static str> {
        if self.q == BigUint::from(101u8) {
            Some("test101")
        } else if self.q.to_string() == BN254_SCALAR {
            Some("bn254scalar")
        } else {
            None
        }
    }
}

pub fn test101() -> Modulus {
    Arc::new(FieldModulus { q: BigUint::from(101u8), byte_len: 1 })
}

pub fn bn254scalar() -> Modulus {
    let q: BigUint = BN254_SCALAR.parse().expect("constant parses");
    Arc::new(FieldModulus { q, byte_len: 32 })
}

fn same_field(a: &Modulus, b: &Modulus) -> bool {
    Arc::ptr_eq(a, b) || a.q == b.q
}

#[derive(Clone)]
pub struct FieldElement {
    value: BigUint,
    modulus: Modulus,
}

impl FieldElement {
    pub fn new(modulus: &Modulus, value: BigUint) -> Self {
        let value = if value >= modulus.q { value % &modulus.q } else { value };
        FieldElement { value, modulus: modulus.clone() }
    }

    pub fn from_u64(modulus: &Modulus, v: u64) -> Self {
        Self::new(modulus, BigUint::from(v))
    }

    pub fn from_i64(modulus: &Modulus, v: i64) -> Self {
        let e = Self::from_u64(modulus, v.unsigned_abs());
        if v < 0 {
            -e
        } else {
            e
        }
    }

    pub fn zero(modulus: &Modulus) -> Self {
        FieldElement { value: BigUint::zero(), modulus: modulus.clone() }
    }

    pub fn one(modulus: &Modulus) -> Self {
        FieldElement { value: BigUint::one(), modulus: modulus.clone() }
    }

    pub fn random<R: Rng + ?Sized>(modulus: &Modulus, rng: &mut R) -> Self {
        FieldElement { value: rng.gen_biguint_below(&modulus.q), modulus: modulus.clone() }
    }

    pub fn random_nonzero<R: Rng + ?Sized>(modulus: &Modulus, rng: &mut R) -> Self {
        let v = rng.gen_biguint_range(&BigUint::one(), &modulus.q);
        FieldElement { value: v, modulus: modulus.clone() }
    }

    /// Parses a decimal string; values at or above q are rejected rather than reduced.
    pub fn parse_canonical(modulus: &Modulus, s: &str) -> Option<Self> {
        let v: BigUint = s.trim().parse().ok()?;
        if v >= modulus.q {
            return None;
        }
        Some(FieldElement { value: v, modulus: modulus.clone() })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.value.is_one()
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.value.to_u64()
    }

    /// Fixed-width big-endian encoding, `byte_len` bytes.
    pub fn to_bytes_fixed(&self) -> Vec<u8> {
        let raw = self.value.to_bytes_be();
        let width = self.modulus.byte_len;
        let mut out = vec![0u8; width];
        if self.value.is_zero() {
            return out;
        }
        out[width - raw.len()..].copy_from_slice(&raw);
        out
    }

    pub fn from_bytes_fixed(modulus: &Modulus, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != modulus.byte_len {
            return None;
        }
        let v = BigUint::from_bytes_be(bytes);
        if v >= modulus.q {
            return None;
        }
        Some(FieldElement { value: v, modulus: modulus.clone() })
    }

    /// Minimal big-endian bytes of the canonical representative (empty for zero).
    pub fn to_bytes_minimal(&self) -> Vec<u8> {
        if self.value.is_zero() {
            Vec::new()
        } else {
            self.value.to_bytes_be()
        }
    }

    fn check(&self, other: &Self) -> Result<(), FfError> {
        if same_field(&self.modulus, &other.modulus) {
            Ok(())
        } else {
            Err(FfError::ModulusMismatch)
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, FfError> {
        self.check(other)?;
        let mut v = &self.value + &other.value;
        if v >= self.modulus.q {
            v -= &self.modulus.q;
        }
        Ok(FieldElement { value: v, modulus: self.modulus.clone() })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, FfError> {
        self.check(other)?;
        let v = if self.value >= other.value {
            &self.value - &other.value
        } else {
            &self.modulus.q - &other.value + &self.value
        };
        Ok(FieldElement { value: v, modulus: self.modulus.clone() })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, FfError> {
        self.check(other)?;
        Ok(FieldElement { value: (&self.value * &other.value) % &self.modulus.q, modulus: self.modulus.clone() })
    }

    pub fn inv(&self) -> Result<Self, FfError> {
        if self.value.is_zero() {
            return Err(FfError::DivisionByZero);
        }
        let q = &self.modulus.q;
        // q is prime: a^(q-2) is the inverse.
        let e = q - BigUint::from(2u8);
        Ok(FieldElement { value: self.value.modpow(&e, q), modulus: self.modulus.clone() })
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, FfError> {
        self.check(other)?;
        self.try_mul(&other.inv()?)
    }

    pub fn pow(&self, e: u64) -> Self {
        FieldElement { value: self.value.modpow(&BigUint::from(e), &self.modulus.q), modulus: self.modulus.clone() }
    }

    pub fn pow_big(&self, e: &BigUint) -> Self {
        FieldElement { value: self.value.modpow(e, &self.modulus.q), modulus: self.modulus.clone() }
    }

    /// Legendre symbol: 1 for nonzero squares, -1 for non-squares, 0 for zero.
    pub fn legendre(&self) -> i8 {
        if self.value.is_zero() {
            return 0;
        }
        let e = (&self.modulus.q - BigUint::one()) >> 1;
        if self.pow_big(&e).is_one() {
            1
        } else {
            -1
        }
    }

    /// A square root when one exists (Tonelli-Shanks).
    pub fn sqrt(&self) -> Option<Self> {
        match self.legendre() {
            0 => return Some(self.clone()),
            -1 => return None,
            _ => {}
        }
        let m = &self.modulus;
        let q = &m.q;
        let one = BigUint::one();
        let mut s = 0u32;
        let mut qq = q - &one;
        while qq.is_even() {
            qq >>= 1;
            s += 1;
        }
        let mut z = FieldElement::from_u64(m, 2);
        while z.legendre() != -1 {
            z = z + FieldElement::one(m);
        }
        let mut c = z.pow_big(&qq);
        let mut x = self.pow_big(&((&qq + &one) >> 1));
        let mut t = self.pow_big(&qq);
        let mut mm = s;
        while !t.is_one() {
            let mut i = 0u32;
            let mut t2 = t.clone();
            while !t2.is_one() {
                t2 = &t2 * &t2;
                i += 1;
            }
            let mut b = c.clone();
            for _ in 0..(mm - i - 1) {
                b = &b * &b;
            }
            x = &x * &b;
            c = &b * &b;
            t = &t * &c;
            mm = i;
        }
        Some(x)
    }
}

impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value && same_field(&self.modulus, &other.modulus)
    }
}

impl Eq for FieldElement {}

impl std::hash::Hash for FieldElement {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.value.hash(state);
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $checked:ident) => {
        impl<'a> $tr<&'a FieldElement> for &'a FieldElement {
            type Output = FieldElement;
            fn $m(self, rhs: &'a FieldElement) -> FieldElement {
                self.$checked(rhs).expect("field elements from different moduli")
            }
        }
        impl $tr<FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $m(self, rhs: FieldElement) -> FieldElement {
                self.$checked(&rhs).expect("field elements from different moduli")
            }
        }
        impl<'a> $tr<&'a FieldElement> for FieldElement {
            type Output = FieldElement;
            fn $m(self, rhs: &'a FieldElement) -> FieldElement {
                self.$checked(rhs).expect("field elements from different moduli")
            }
        }
    };
}

binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        -&self
    }
}

impl Neg for &FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        if self.value.is_zero() {
            self.clone()
        } else {
            FieldElement { value: &self.modulus.q - &self.value, modulus: self.modulus.clone() }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Inv,
    Neg,
}

/// Single entry point for the five field operations; `b` is ignored by the unary ones.
pub fn field_arith(a: &FieldElement, b: &FieldElement, op: ArithOp) -> Result<FieldElement, FfError> {
    a.check(b)?;
    match op {
        ArithOp::Add => a.try_add(b),
        ArithOp::Sub => a.try_sub(b),
        ArithOp::Mul => a.try_mul(b),
        ArithOp::Inv => a.inv(),
        ArithOp::Neg => Ok(-a),
    }
}

/// Coefficients in ascending order of degree; never ends in a zero.
#[derive(Clone, PartialEq, Eq)]
pub struct DensePoly {
    coeffs: Vec<FieldElement>,
    modulus: Modulus,
}

impl fmt::Debug for DensePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensePoly{:?}", self.coeffs)
    }
}

impl DensePoly {
    pub fn new(modulus: &Modulus, mut coeffs: Vec<FieldElement>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        DensePoly { coeffs, modulus: modulus.clone() }
    }

    pub fn from_u64s(modulus: &Modulus, coeffs: &[u64]) -> Self {
        Self::new(modulus, coeffs.iter().map(|&c| FieldElement::from_u64(modulus, c)).collect())
    }

    pub fn zero(modulus: &Modulus) -> Self {
        DensePoly { coeffs: Vec::new(), modulus: modulus.clone() }
    }

    pub fn constant(c: FieldElement) -> Self {
        let m = c.modulus().clone();
        Self::new(&m, vec![c])
    }

    pub fn monomial(coeff: FieldElement, degree: usize) -> Self {
        let m = coeff.modulus().clone();
        let mut coeffs = vec![FieldElement::zero(&m); degree];
        coeffs.push(coeff);
        Self::new(&m, coeffs)
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    /// Coefficient of X^i, zero past the end.
    pub fn coeff(&self, i: usize) -> FieldElement {
        self.coeffs.get(i).cloned().unwrap_or_else(|| FieldElement::zero(&self.modulus))
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn eval(&self, x: &FieldElement) -> Result<FieldElement, FfError> {
        if !same_field(&self.modulus, x.modulus()) {
            return Err(FfError::ModulusMismatch);
        }
        let mut acc = FieldElement::zero(&self.modulus);
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * x) + c;
        }
        Ok(acc)
    }

    pub fn add(&self, other: &DensePoly) -> DensePoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n).map(|i| &self.coeff(i) + &other.coeff(i)).collect();
        DensePoly::new(&self.modulus, coeffs)
    }

    pub fn sub(&self, other: &DensePoly) -> DensePoly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n).map(|i| &self.coeff(i) - &other.coeff(i)).collect();
        DensePoly::new(&self.modulus, coeffs)
    }

    pub fn scale(&self, s: &FieldElement) -> DensePoly {
        DensePoly::new(&self.modulus, self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn mul(&self, other: &DensePoly) -> DensePoly {
        if self.is_zero() || other.is_zero() {
            return DensePoly::zero(&self.modulus);
        }
        let mut out = vec![FieldElement::zero(&self.modulus); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = &out[i + j] + &(a * b);
            }
        }
        DensePoly::new(&self.modulus, out)
    }
}

/// Lagrange interpolation through `points`, O(n^2).
pub fn lagrange_interpolate(modulus: &Modulus, points: &[(FieldElement, FieldElement)]) -> Result<DensePoly, FfError> {
    for (i, (xi, yi)) in points.iter().enumerate() {
        if !same_field(modulus, xi.modulus()) || !same_field(modulus, yi.modulus()) {
            return Err(FfError::ModulusMismatch);
        }
        if points[..i].iter().any(|(xj, _)| xj == xi) {
            return Err(FfError::DuplicateNode(xi.to_string()));
        }
    }
    let n = points.len();
    if n == 0 {
        return Ok(DensePoly::zero(modulus));
    }
    // Master polynomial prod (X - x_j), divided per node synthetically.
    let mut master = vec![FieldElement::one(modulus)];
    for (xj, _) in points {
        let mut next = vec![FieldElement::zero(modulus); master.len() + 1];
        for (k, c) in master.iter().enumerate() {
            next[k + 1] = &next[k + 1] + c;
            next[k] = &next[k] - &(c * xj);
        }
        master = next;
    }
    let mut acc = vec![FieldElement::zero(modulus); n];
    for (i, (xi, yi)) in points.iter().enumerate() {
        if yi.is_zero() {
            continue;
        }
        // master / (X - xi) by synthetic division.
        let mut quot = vec![FieldElement::zero(modulus); n];
        let mut carry = FieldElement::zero(modulus);
        for k in (0..n).rev() {
            carry = &master[k + 1] + &(&carry * xi);
            quot[k] = carry.clone();
        }
        let mut denom = FieldElement::one(modulus);
        for (j, (xj, _)) in points.iter().enumerate() {
            if j != i {
                denom = &denom * &(xi - xj);
            }
        }
        let w = yi * &denom.inv()?;
        for k in 0..n {
            acc[k] = &acc[k] + &(&quot[k] * &w);
        }
    }
    Ok(DensePoly::new(modulus, acc))
}

/// Evaluates the i-th Lagrange basis polynomial over `nodes` at `x`.
pub fn lagrange_basis_eval(nodes: &[FieldElement], i: usize, x: &FieldElement) -> Result<FieldElement, FfError> {
    let m = x.modulus();
    let mut num = FieldElement::one(m);
    let mut den = FieldElement::one(m);
    for (j, xj) in nodes.iter().enumerate() {
        if j == i {
            continue;
        }
        num = &num * &(x - xj);
        den = &den * &(&nodes[i] - xj);
    }
    num.try_div(&den)
}

pub type Matrix = Vec<Vec<FieldElement>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinearSolution {
    Unique(Vec<FieldElement>),
    /// A particular solution with every free variable set to zero, plus a
    /// basis of the kernel (one vector per free variable).
    Underdetermined {
        particular: Vec<FieldElement>,
        basis: Vec<Vec<FieldElement>>,
        free_vars: Vec<usize>,
    },
    Inconsistent,
}

/// Gauss-Jordan elimination, pivoting on the first nonzero entry of each column.
pub fn solve_linear(
    modulus: &Modulus,
    system: &[Vec<FieldElement>],
    rhs: &[FieldElement],
    n: usize,
) -> Result<LinearSolution, FfError> {
    let m = system.len();
    if rhs.len() != m || system.iter().any(|r| r.len() != n) {
        return Err(FfError::ShapeMismatch);
    }
    let mut aug: Vec<Vec<FieldElement>> = system
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();
    for row in &aug {
        for e in row {
            if !same_field(modulus, e.modulus()) {
                return Err(FfError::ModulusMismatch);
            }
        }
    }
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == m {
            break;
        }
        let Some(p) = (r..m).find(|&i| !aug[i][col].is_zero()) else {
            continue;
        };
        aug.swap(r, p);
        let inv = aug[r][col].inv()?;
        for e in aug[r].iter_mut() {
            *e = &*e * &inv;
        }
        for i in 0..m {
            if i == r || aug[i][col].is_zero() {
                continue;
            }
            let f = aug[i][col].clone();
            for j in col..=n {
                let delta = &f * &aug[r][j];
                aug[i][j] = &aug[i][j] - &delta;
            }
        }
        pivots.push(col);
        r += 1;
    }
    if aug[r..].iter().any(|row| !row[n].is_zero()) {
        return Ok(LinearSolution::Inconsistent);
    }
    let zero = FieldElement::zero(modulus);
    let mut particular = vec![zero.clone(); n];
    for (i, &c) in pivots.iter().enumerate() {
        particular[c] = aug[i][n].clone();
    }
    if pivots.len() == n {
        return Ok(LinearSolution::Unique(particular));
    }
    let free_vars: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let basis = free_vars
        .iter()
        .map(|&f| {
            let mut v = vec![zero.clone(); n];
            v[f] = FieldElement::one(modulus);
            for (i, &c) in pivots.iter().enumerate() {
                v[c] = -&aug[i][f];
            }
            v
        })
        .collect();
    Ok(LinearSolution::Underdetermined { particular, basis, free_vars })
}

pub fn mat_vec(mat: &[Vec<FieldElement>], v: &[FieldElement]) -> Vec<FieldElement> {
    mat.iter()
        .map(|row| row.iter().zip(v).fold(FieldElement::zero(v[0].modulus()), |acc, (a, b)| &acc + &(a * b)))
        .collect()
}

pub fn mat_mul(a: &[Vec<FieldElement>], b: &[Vec<FieldElement>]) -> Matrix {
    let m = b[0][0].modulus().clone();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().enumerate().fold(FieldElement::zero(&m), |acc, (k, x)| &acc + &(x * &b[k][j])))
                .collect()
        })
        .collect()
}

pub fn identity(modulus: &Modulus, n: usize) -> Matrix {
    (0..n)
        .map(|i| {
            (0..n).map(|j| if i == j { FieldElement::one(modulus) } else { FieldElement::zero(modulus) }).collect()
        })
        .collect()
}
