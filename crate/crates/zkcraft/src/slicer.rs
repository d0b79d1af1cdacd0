//! Row triage: support counts, 64-bit row fingerprints, scores and the
//! top-k candidate pool.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{R1CSInstance, SparseRow};
use crate::digest::{sha256, trunc64};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SlicerError {
    #[error("row index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("instance has no constraints")]
    EmptyInstance,
    #[error("invalid slicer config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreConvention {
    /// `λ·κ_c/(κ_w+1) − μ·κ_w`, smallest first.
    #[default]
    Methodology,
    /// `λ·(κ_w+1)/κ_c − μ·κ_w`, largest first; rows with `κ_c = 0` go last.
    Toy,
}

impl std::str::FromStr for ScoreConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "methodology" => Ok(Self::Methodology),
            "toy" => Ok(Self::Toy),
            other => Err(format!("unknown score convention {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicerConfig {
    pub score_lambda: BigRational,
    pub score_mu: BigRational,
    pub pool_size: usize,
    pub convention: ScoreConvention,
}

impl Default for SlicerConfig {
    fn default() -> Self {
        SlicerConfig {
            score_lambda: BigRational::one(),
            score_mu: BigRational::new(BigInt::from(1), BigInt::from(2)),
            pool_size: 32,
            convention: ScoreConvention::Methodology,
        }
    }
}

impl SlicerConfig {
    pub fn validate(&self) -> Result<(), SlicerError> {
        if self.pool_size == 0 {
            return Err(SlicerError::BadConfig("pool size must be at least 1".into()));
        }
        if !self.score_lambda.is_positive() || !self.score_mu.is_positive() {
            return Err(SlicerError::BadConfig("score weights must be positive".into()));
        }
        Ok(())
    }
}

/// Which wires count towards `κ_w` and which towards `κ_c`. Wires in neither
/// set are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub w: BTreeSet<usize>,
    pub k: BTreeSet<usize>,
}

impl Partition {
    /// `K` = constant, public inputs and public outputs; `W` = everything else.
    pub fn from_classes(inst: &R1CSInstance) -> Self {
        let (k, w) = (0..inst.num_vars()).partition(|&i| inst.var_classes()[i].is_k_side());
        Partition { w, k }
    }

    pub fn explicit(w: impl IntoIterator<Item = usize>, k: impl IntoIterator<Item = usize>) -> Self {
        Partition { w: w.into_iter().collect(), k: k.into_iter().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostics {
    pub row_index: usize,
    pub kappa_w: u64,
    pub kappa_c: u64,
    #[serde(serialize_with = "ser_hex64")]
    pub fingerprint: u64,
    /// `None` only under the toy convention with `κ_c = 0`.
    #[serde(serialize_with = "ser_score")]
    pub score: Option<BigRational>,
}

fn ser_hex64<S: serde::Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:016x}"))
}

fn ser_score<S: serde::Serializer>(v: &Option<BigRational>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_str(&r.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidatePool {
    pub rows: Vec<usize>,
    pub diagnostics: Vec<RowDiagnostics>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn row_diagnostics(inst: &R1CSInstance, i: usize) -> Result<(u64, u64), SlicerError> {
    row_diagnostics_with(inst, &Partition::from_classes(inst), i)
}

pub fn row_diagnostics_with(inst: &R1CSInstance, part: &Partition, i: usize) -> Result<(u64, u64), SlicerError> {
    let row = inst.rows().get(i).ok_or(SlicerError::IndexOutOfRange(i))?;
    let supp = row.support();
    let kw = supp.iter().filter(|v| part.w.contains(v)).count() as u64;
    let kc = supp.iter().filter(|v| part.k.contains(v)).count() as u64;
    Ok((kw, kc))
}

pub fn canonical_row_bytes(a: &SparseRow, b: &SparseRow, c: &SparseRow) -> Vec<u8> {
    let mut out = Vec::new();
    for (tag, side) in [(0xA1u8, a), (0xB1, b), (0xC1, c)] {
        out.push(tag);
        for (idx, coeff) in side.entries() {
            let bytes = coeff.to_bytes_minimal();
            out.extend_from_slice(&(*idx as u64).to_le_bytes());
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
    }
    out
}

pub fn row_fingerprint(inst: &R1CSInstance, i: usize, kappa_w: u64, kappa_c: u64) -> Result<u64, SlicerError> {
    let row = inst.rows().get(i).ok_or(SlicerError::IndexOutOfRange(i))?;
    let mut bytes = canonical_row_bytes(&row.a, &row.b, &row.c);
    bytes.extend_from_slice(&kappa_w.to_le_bytes());
    bytes.extend_from_slice(&kappa_c.to_le_bytes());
    Ok(trunc64(&sha256(&bytes)))
}

pub fn row_score(kappa_w: u64, kappa_c: u64, cfg: &SlicerConfig) -> Option<BigRational> {
    let kw = BigRational::from_integer(BigInt::from(kappa_w));
    let kc = BigRational::from_integer(BigInt::from(kappa_c));
    let penalty = &cfg.score_mu * &kw;
    match cfg.convention {
        ScoreConvention::Methodology => Some(&cfg.score_lambda * &kc / (&kw + BigRational::one()) - penalty),
        ScoreConvention::Toy => {
            if kc.is_zero() {
                None
            } else {
                Some(&cfg.score_lambda * (&kw + BigRational::one()) / kc - penalty)
            }
        }
    }
}

pub fn diagnose_all(inst: &R1CSInstance, part: &Partition, cfg: &SlicerConfig) -> Vec<RowDiagnostics> {
    (0..inst.num_constraints())
        .into_par_iter()
        .map(|i| {
            let (kw, kc) = row_diagnostics_with(inst, part, i).expect("in range");
            RowDiagnostics {
                row_index: i,
                kappa_w: kw,
                kappa_c: kc,
                fingerprint: row_fingerprint(inst, i, kw, kc).expect("in range"),
                score: row_score(kw, kc, cfg),
            }
        })
        .collect()
}

/// Sort key: rows earlier in the returned order are preferred.
fn priority_cmp(conv: ScoreConvention, a: &RowDiagnostics, b: &RowDiagnostics) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let by_score = match (&a.score, &b.score) {
        (Some(x), Some(y)) => match conv {
            ScoreConvention::Methodology => x.cmp(y),
            ScoreConvention::Toy => y.cmp(x),
        },
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_score.then(a.row_index.cmp(&b.row_index))
}

pub fn select_pool(inst: &R1CSInstance, cfg: &SlicerConfig) -> Result<CandidatePool, SlicerError> {
    select_pool_with(inst, cfg, &Partition::from_classes(inst))
}

pub fn select_pool_with(
    inst: &R1CSInstance,
    cfg: &SlicerConfig,
    part: &Partition,
) -> Result<CandidatePool, SlicerError> {
    cfg.validate()?;
    if inst.num_constraints() == 0 {
        return Err(SlicerError::EmptyInstance);
    }
    let diagnostics = diagnose_all(inst, part, cfg);
    let mut order: Vec<&RowDiagnostics> = diagnostics.iter().collect();
    order.sort_by(|a, b| priority_cmp(cfg.convention, a, b));
    let rows = order.iter().take(cfg.pool_size.min(inst.num_constraints())).map(|d| d.row_index).collect();
    Ok(CandidatePool { rows, diagnostics })
}

/// `exp(−2k(γ−γ*)²)`, reported only when both margins are supplied.
pub fn relative_completeness_epsilon(k: usize, gamma: f64, gamma_star: f64) -> f64 {
    (-2.0 * k as f64 * (gamma - gamma_star).powi(2)).exp()
}
