//! Mutation-template and input-pattern oracles.
//!
//! The builtin generators are pure functions of their inputs. External
//! generators are treated as untrusted text sources: every candidate they
//! return is canonicalized, deduplicated and re-parsed before use, and any
//! failure downgrades to the builtin output.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::process::{Command, Stdio};
use std::str::FromStr;

use num_bigint::BigUint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{sha256, sha256_parts, trunc64};
use crate::extract::Counterexample;
use crate::ff::{FieldElement, Modulus};
use crate::synth::{eval_expr, parse_expr, site_signal};

pub const MAX_CANDIDATES: usize = 5;
pub const MAX_SITE_LINES: usize = 10;

pub const MUTATION_PROMPT: &str = "You are given the following Circom weak assignment on field F_q.
Change only the right-hand side.
Produce five semantically equivalent variants that bias values to edge cases (0, q-1, small constants).
Output one RHS per line, no comments.
------
<WEAK_ASSIGN>";

pub const PATTERN_PROMPT: &str = "Given the following TCCT counter-example, emit:
1. A one-sentence trigger description.
2. A Rust function fn sample() -> Vec<F> that biases inputs toward this divergence.
------
<COUNTEREXAMPLE>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown oracle spec {0:?}; expected builtin, subprocess:<cmd> or http:<url>")]
    BadSpec(String),
}

// ---------------------------------------------------------------------------
// Canonicalization and fingerprints

fn normalize_literals(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars().peekable();
    let mut prev_word = false;
    while let Some(ch) = chars.next() {
        if ch.is_ascii_digit() && !prev_word {
            let mut digits = String::from(ch);
            while let Some(&d) = chars.peek() {
                if d.is_ascii_digit() {
                    digits.push(d);
                    chars.next();
                } else {
                    break;
                }
            }
            let trimmed = digits.trim_start_matches('0');
            out.push_str(if trimmed.is_empty() { "0" } else { trimmed });
            prev_word = false;
            continue;
        }
        prev_word = ch.is_ascii_alphanumeric() || ch == '_';
        out.push(ch);
    }
    out
}

pub fn canonicalize(text: &str) -> String {
    let mut lines = Vec::new();
    for raw in text.lines() {
        let code = match raw.find("//") {
            Some(p) => &raw[..p],
            None => raw,
        };
        let collapsed = code.split([' ', '\t']).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ");
        let line = normalize_literals(collapsed.trim());
        if !line.is_empty() {
            lines.push(line);
        }
    }
    lines.join("\n")
}

pub fn template_fingerprint(canonical: &str) -> u64 {
    trunc64(&sha256(canonical.as_bytes()))
}

// ---------------------------------------------------------------------------
// Generators

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "snake_case")]
pub enum OracleConfig {
    Builtin,
    Subprocess(String),
    Http(String),
}

impl FromStr for OracleConfig {
    type Err = OracleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "builtin" {
            Ok(Self::Builtin)
        } else if let Some(cmd) = s.strip_prefix("subprocess:") {
            Ok(Self::Subprocess(cmd.to_string()))
        } else if let Some(url) = s.strip_prefix("http:") {
            let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
            Ok(Self::Http(url))
        } else {
            Err(OracleError::BadSpec(s.to_string()))
        }
    }
}

/// A text generator behind the fixed prompts.
pub trait TemplateGenerator {
    fn id(&self) -> String;
    fn complete(&mut self, prompt: &str, max_candidates: usize) -> Result<String, String>;
}

#[derive(Serialize)]
struct GeneratorRequest<'a> {
    prompt: &'a str,
    max_candidates: usize,
}

/// Sends one JSON request line on stdin, reads the whole of stdout.
pub struct SubprocessGenerator {
    pub command: String,
}

impl TemplateGenerator for SubprocessGenerator {
    fn id(&self) -> String {
        format!("subprocess:{}", self.command)
    }

    fn complete(&mut self, prompt: &str, max_candidates: usize) -> Result<String, String> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let req = serde_json::to_string(&GeneratorRequest { prompt, max_candidates }).expect("serializable");
        {
            let mut stdin = child.stdin.take().ok_or("no stdin")?;
            stdin.write_all(req.as_bytes()).map_err(|e| e.to_string())?;
            stdin.write_all(b"\n").map_err(|e| e.to_string())?;
        }
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("generator exited with {}", out.status));
        }
        String::from_utf8(out.stdout).map_err(|e| e.to_string())
    }
}

pub struct HttpGenerator {
    pub url: String,
}

impl TemplateGenerator for HttpGenerator {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn complete(&mut self, prompt: &str, max_candidates: usize) -> Result<String, String> {
        let req = serde_json::to_string(&GeneratorRequest { prompt, max_candidates }).expect("serializable");
        ureq::post(&self.url)
            .set("content-type", "application/json")
            .send_string(&req)
            .map_err(|e| e.to_string())?
            .into_string()
            .map_err(|e| e.to_string())
    }
}

pub fn generator_for(cfg: &OracleConfig) -> Option<Box<dyn TemplateGenerator>> {
    match cfg {
        OracleConfig::Builtin => None,
        OracleConfig::Subprocess(c) => Some(Box::new(SubprocessGenerator { command: c.clone() })),
        OracleConfig::Http(u) => Some(Box::new(HttpGenerator { url: u.clone() })),
    }
}

// ---------------------------------------------------------------------------
// Mutation templates

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "tool_id", rename_all = "snake_case")]
pub enum Provenance {
    Builtin,
    External(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Duplicate,
    Invalid(String),
    OverLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TemplateLogEntry {
    pub raw: String,
    pub canonical: String,
    #[serde(serialize_with = "ser_hex64")]
    pub fingerprint: u64,
    pub sha256: String,
    pub verdict: Verdict,
}

fn ser_hex64<S: serde::Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:016x}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TemplateBatch {
    pub site_id: String,
    /// Right-hand sides in canonical form.
    pub candidates: Vec<String>,
    #[serde(serialize_with = "ser_hex64s")]
    pub fingerprints: Vec<u64>,
    pub provenance: Provenance,
    pub log: Vec<TemplateLogEntry>,
    /// Set when an external generator was configured but its output was unusable.
    pub failure: Option<String>,
}

fn ser_hex64s<S: serde::Serializer>(v: &[u64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| format!("{x:016x}")))
}

impl TemplateBatch {
    /// Field values of the candidates, evaluated with `q` bound to zero and any
    /// other identifiers looked up in `env`. Candidates that reference unknown
    /// signals are skipped.
    pub fn constants(&self, q: &Modulus, env: &BTreeMap<String, FieldElement>) -> Vec<FieldElement> {
        let mut env = env.clone();
        env.entry("q".to_string()).or_insert_with(|| FieldElement::zero(q));
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.candidates {
            if let Ok(v) = parse_expr(c).and_then(|e| eval_expr(&e, &env, q)) {
                if seen.insert(v.value().clone()) {
                    out.push(v);
                }
            }
        }
        out
    }
}

/// Extracts the right-hand side of one generated line: either a bare
/// expression or a full `name <== rhs;` statement.
fn rhs_of(canonical_line: &str) -> &str {
    let s = match canonical_line.find("<==") {
        Some(p) => &canonical_line[p + 3..],
        None => canonical_line,
    };
    s.trim().trim_end_matches(';').trim()
}

fn builtin_rhs(q: &Modulus) -> Vec<String> {
    let qm1 = q.q() - BigUint::from(1u8);
    vec!["0".into(), qm1.to_string(), "1".into(), "2".into(), "10".into()]
}

fn postprocess(raw_lines: &[String], log: &mut Vec<TemplateLogEntry>) -> (Vec<String>, Vec<u64>) {
    let mut seen = BTreeSet::new();
    let mut cands = Vec::new();
    let mut fps = Vec::new();
    for raw in raw_lines {
        let canon = canonicalize(raw);
        if canon.is_empty() {
            continue;
        }
        let rhs = rhs_of(&canon).to_string();
        let fp = template_fingerprint(&rhs);
        let verdict = if let Err(e) = parse_expr(&rhs) {
            Verdict::Invalid(e.to_string())
        } else if !seen.insert(fp) {
            Verdict::Duplicate
        } else if cands.len() == MAX_CANDIDATES {
            Verdict::OverLimit
        } else {
            cands.push(rhs.clone());
            fps.push(fp);
            Verdict::Accepted
        };
        log.push(TemplateLogEntry {
            raw: raw.clone(),
            canonical: rhs.clone(),
            fingerprint: fp,
            sha256: hex::encode(sha256(rhs.as_bytes())),
            verdict,
        });
    }
    (cands, fps)
}

/// Up to five right-hand-side candidates for the weak assignment `site_text`.
pub fn mutation_templates<'g>(
    site_id: &str,
    site_text: &str,
    q: &Modulus,
    generator: Option<&mut (dyn TemplateGenerator + 'g)>,
) -> TemplateBatch {
    let mut log = Vec::new();
    let mut failure = None;
    if let Some(g) = generator {
        if site_text.lines().count() > MAX_SITE_LINES {
            failure = Some(format!("site text exceeds {MAX_SITE_LINES} lines"));
        } else {
            let prompt = MUTATION_PROMPT.replace("<WEAK_ASSIGN>", site_text);
            match g.complete(&prompt, MAX_CANDIDATES) {
                Err(e) => failure = Some(e),
                Ok(text) => {
                    let lines: Vec<String> = text.lines().map(str::to_string).collect();
                    let (candidates, fingerprints) = postprocess(&lines, &mut log);
                    if !candidates.is_empty() {
                        return TemplateBatch {
                            site_id: site_id.to_string(),
                            candidates,
                            fingerprints,
                            provenance: Provenance::External(g.id()),
                            log,
                            failure: None,
                        };
                    }
                    failure = Some("no valid candidates".into());
                }
            }
        }
    }
    let (candidates, fingerprints) = postprocess(&builtin_rhs(q), &mut log);
    TemplateBatch {
        site_id: site_id.to_string(),
        candidates,
        fingerprints,
        provenance: Provenance::Builtin,
        log,
        failure,
    }
}

/// Reproducible stand-in constant for a site:
/// SHA-256(LE64(seed) ∥ site_id ∥ LE32(counter)) masked to the bit length of
/// `q`, rejected until it lands below `q`.
pub fn seeded_fallback_constant(seed: u64, site_id: &str, q: &Modulus) -> FieldElement {
    let bits = q.q().bits();
    let nbytes = bits.div_ceil(8) as usize;
    let mask = (BigUint::from(1u8) << bits) - BigUint::from(1u8);
    for counter in 0u32.. {
        let mut stream = Vec::with_capacity(nbytes);
        let mut block = 0u32;
        while stream.len() < nbytes {
            let h =
                sha256_parts(&[&seed.to_le_bytes(), site_id.as_bytes(), &counter.to_le_bytes(), &block.to_le_bytes()]);
            stream.extend_from_slice(&h);
            block += 1;
        }
        let v = BigUint::from_bytes_be(&stream[..nbytes]) & &mask;
        if &v < q.q() {
            return FieldElement::new(q, v);
        }
    }
    unreachable!("counter space exhausted")
}

/// `signal <== c;` for a site.
pub fn fallback_template(site_id: &str, c: &FieldElement) -> String {
    format!("{} <== {c};", site_signal(site_id))
}

// ---------------------------------------------------------------------------
// Input sampling

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub value: String,
    pub weight: u32,
}

/// Biases for one input coordinate; `uniform_weight` is the share left to
/// uniform draws.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputBias {
    pub input: usize,
    pub points: Vec<BiasPoint>,
    pub uniform_weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SamplerSpec {
    pub trigger_description: String,
    pub biases: Vec<InputBias>,
    pub provenance: Provenance,
}

impl SamplerSpec {
    pub fn uniform() -> Self {
        Self {
            trigger_description: "No pattern known; inputs are drawn uniformly.".into(),
            biases: vec![],
            provenance: Provenance::Builtin,
        }
    }

    pub fn is_uniform(&self) -> bool {
        self.biases.iter().all(|b| b.points.is_empty())
    }

    /// One input vector of length `n_inputs`.
    pub fn sample(&self, rng: &mut ChaCha8Rng, q: &Modulus, n_inputs: usize) -> Vec<FieldElement> {
        (0..n_inputs)
            .map(|i| {
                let bias = self.biases.iter().find(|b| b.input == i);
                match bias {
                    None => FieldElement::random(q, rng),
                    Some(b) => {
                        let total: u64 =
                            b.points.iter().map(|p| p.weight as u64).sum::<u64>() + b.uniform_weight as u64;
                        let mut r = rng.gen_range(0..total.max(1));
                        for p in &b.points {
                            if r < p.weight as u64 {
                                return FieldElement::parse_canonical(q, &p.value)
                                    .unwrap_or_else(|| FieldElement::zero(q));
                            }
                            r -= p.weight as u64;
                        }
                        FieldElement::random(q, rng)
                    }
                }
            })
            .collect()
    }
}

const EXACT_WEIGHT: u32 = 4;
const NEIGHBOUR_WEIGHT: u32 = 1;
const UNIFORM_WEIGHT: u32 = 2;

/// Builtin sampler: each input coordinate of the counterexample gets weight
/// 1/2 on its exact value, 1/8 on each neighbour and 1/4 uniform.
pub fn pattern_sampler(cx: Option<&Counterexample>) -> Result<SamplerSpec, OracleError> {
    let cx = cx.ok_or_else(|| OracleError::Precondition("no counterexample".into()))?;
    if cx.trace.y == cx.y_orig {
        return Err(OracleError::Precondition("counterexample has no output difference".into()));
    }
    let one = |v: &FieldElement| FieldElement::one(v.modulus());
    let biases = cx
        .trace
        .x
        .iter()
        .enumerate()
        .map(|(i, v)| InputBias {
            input: i,
            points: vec![
                BiasPoint { value: v.to_string(), weight: EXACT_WEIGHT },
                BiasPoint { value: (v + &one(v)).to_string(), weight: NEIGHBOUR_WEIGHT },
                BiasPoint { value: (v - &one(v)).to_string(), weight: NEIGHBOUR_WEIGHT },
            ],
            uniform_weight: UNIFORM_WEIGHT,
        })
        .collect();
    let shown: Vec<String> = cx.trace.x.iter().map(|v| v.to_string()).collect();
    Ok(SamplerSpec {
        trigger_description: format!("Outputs diverge when the inputs are near ({}).", shown.join(", ")),
        biases,
        provenance: Provenance::Builtin,
    })
}

#[derive(Deserialize)]
struct ExternalSampler {
    trigger: String,
    biases: Vec<InputBias>,
}

/// Asks an external generator for a declarative bias list. Anything that does
/// not parse, or that references inputs or values outside range, yields the
/// uniform sampler.
pub fn pattern_sampler_external(
    cx: &Counterexample,
    q: &Modulus,
    generator: &mut dyn TemplateGenerator,
) -> SamplerSpec {
    let prompt = PATTERN_PROMPT.replace("<COUNTEREXAMPLE>", &cx.to_json());
    let parsed = generator.complete(&prompt, 1).ok().and_then(|t| serde_json::from_str::<ExternalSampler>(&t).ok());
    let n_inputs = cx.trace.x.len();
    match parsed {
        Some(s)
            if s.biases.iter().all(|b| {
                b.input < n_inputs
                    && b.points.iter().all(|p| p.weight > 0 && FieldElement::parse_canonical(q, &p.value).is_some())
            }) =>
        {
            SamplerSpec {
                trigger_description: s.trigger,
                biases: s.biases,
                provenance: Provenance::External(generator.id()),
            }
        }
        _ => SamplerSpec::uniform(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ff::test101;

    struct Canned(String);
    impl TemplateGenerator for Canned {
        fn id(&self) -> String {
            "canned".into()
        }
        fn complete(&mut self, _: &str, _: usize) -> Result<String, String> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn canonicalization_policy() {
        assert_eq!(canonicalize("x <==   5; // note"), "x <== 5;");
        assert_eq!(canonicalize("x <== 007;"), "x <== 7;");
        assert_eq!(canonicalize("\n\n  a\t\t+  b  \n// only comment\n"), "a + b");
        assert_eq!(canonicalize("x1 <== 00;"), "x1 <== 0;");
    }

    #[test]
    fn empty_fingerprint() {
        assert_eq!(template_fingerprint(""), 0xE3B0C44298FC1C14);
    }

    #[test]
    fn builtin_batch() {
        let q = test101();
        let b = mutation_templates("main.x", "x <== 5;", &q, None);
        assert_eq!(b.provenance, Provenance::Builtin);
        assert_eq!(b.candidates, vec!["0", "100", "1", "2", "10"]);
        let consts: Vec<u64> = b.constants(&q, &BTreeMap::new()).iter().map(|c| c.to_u64().unwrap()).collect();
        assert_eq!(consts, vec![0, 100, 1, 2, 10]);
    }

    #[test]
    fn garbage_falls_back() {
        let q = test101();
        let mut g = Canned("x <== <<<\n$$$\n".into());
        let b = mutation_templates("main.x", "x <== 5;", &q, Some(&mut g));
        assert_eq!(b.provenance, Provenance::Builtin);
        assert!(b.failure.is_some());
        assert!(b.log.iter().any(|e| matches!(e.verdict, Verdict::Invalid(_))));
    }

    #[test]
    fn external_duplicates_are_removed() {
        let q = test101();
        let mut g = Canned("x <== 0;\n0\nx <==  0; // again\nq - 1\nq-1\n2\n".into());
        let b = mutation_templates("main.x", "x <== 5;", &q, Some(&mut g));
        assert_eq!(b.provenance, Provenance::External("canned".into()));
        assert_eq!(b.candidates, vec!["0", "q - 1", "q-1", "2"]);
        let consts: Vec<u64> = b.constants(&q, &BTreeMap::new()).iter().map(|c| c.to_u64().unwrap()).collect();
        assert_eq!(consts, vec![0, 100, 2]);
    }

    #[test]
    fn fallback_constant_is_deterministic() {
        let q = test101();
        let a = seeded_fallback_constant(7, "main.x", &q);
        assert_eq!(a, seeded_fallback_constant(7, "main.x", &q));
        assert_ne!(
            (0..20).map(|s| seeded_fallback_constant(s, "main.x", &q).value().clone()).collect::<BTreeSet<_>>().len(),
            1
        );
        assert_eq!(fallback_template("main.x", &FieldElement::from_u64(&q, 7)), "x <== 7;");
    }

    #[test]
    fn uniform_sampler_has_no_bias() {
        assert!(SamplerSpec::uniform().is_uniform());
        assert!(matches!(pattern_sampler(None), Err(OracleError::Precondition(_))));
    }

    #[test]
    fn oracle_spec_parsing() {
        assert_eq!("builtin".parse::<OracleConfig>().unwrap(), OracleConfig::Builtin);
        assert_eq!(
            "http://localhost:9/gen".parse::<OracleConfig>().unwrap(),
            OracleConfig::Http("http://localhost:9/gen".into())
        );
        assert_eq!("subprocess:cat".parse::<OracleConfig>().unwrap(), OracleConfig::Subprocess("cat".into()));
        assert!("llm".parse::<OracleConfig>().is_err());
    }

    #[test]
    fn subprocess_adapter_roundtrip() {
        let q = test101();
        let mut g = SubprocessGenerator { command: "printf '3\\n4\\n'".into() };
        let b = mutation_templates("main.x", "x <== 5;", &q, Some(&mut g));
        assert_eq!(b.candidates, vec!["3", "4"]);
    }
}
