//! Substitution constants, mutated Circom-subset sources and SMT-LIB2 queries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use thiserror::Error;

use crate::circuit::{execute, R1CSInstance, SparseRow};
use crate::ff::{lagrange_interpolate, DensePoly, FfError, FieldElement, Modulus};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("site equation degree {0} is too high for direct solving")]
    DegreeTooHigh(usize),
    #[error("unknown weak-assignment site {0:?}")]
    UnknownSite(String),
    #[error("mutated source does not re-parse: {0}")]
    ReparseFailure(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Field(#[from] FfError),
}

// ---------------------------------------------------------------------------
// Circom subset

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(BigUint),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Input,
    Output,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Signal {
        name: String,
        private: bool,
        kind: SignalKind,
    },
    /// `name <== rhs;` with the byte range of `rhs` in the source.
    Assign {
        name: String,
        rhs: Expr,
        rhs_span: (usize, usize),
    },
    Constrain {
        name: String,
        rhs: Expr,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub statements: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(BigUint),
    Sym(&'static str),
}

fn lex_line(line: &str, base: usize, lineno: usize) -> Result<Vec<(Tok, usize, usize)>, SynthError> {
    let code = match line.find("//") {
        Some(p) => &line[..p],
        None => line,
    };
    let bytes = code.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        if ch.is_ascii_whitespace() {
            i += 1;
        } else if ch.is_ascii_alphabetic() || ch == b'_' {
            let s = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(code[s..i].to_string()), base + s, base + i));
        } else if ch.is_ascii_digit() {
            let s = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            out.push((Tok::Num(code[s..i].parse().expect("digits")), base + s, base + i));
        } else {
            let sym = ["<==", "===", "+", "-", "*", "(", ")", ";"]
                .into_iter()
                .find(|s| code[i..].starts_with(s))
                .ok_or_else(|| SynthError::Parse {
                    line: lineno,
                    msg: format!("unexpected character {:?}", ch as char),
                })?;
            out.push((Tok::Sym(sym), base + i, base + i + sym.len()));
            i += sym.len();
        }
    }
    Ok(out)
}

struct ExprParser<'a> {
    toks: &'a [(Tok, usize, usize)],
    pos: usize,
    line: usize,
}

impl ExprParser<'_> {
    fn err<T>(&self, msg: &str) -> Result<T, SynthError> {
        Err(SynthError::Parse { line: self.line, msg: msg.to_string() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn sum(&mut self) -> Result<Expr, SynthError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Sym(s @ ("+" | "-"))) = self.peek() {
            let op = *s;
            self.pos += 1;
            let rhs = self.product()?;
            lhs = if op == "+" {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, SynthError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Sym("*")) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SynthError> {
        match self.peek().cloned() {
            Some(Tok::Sym("-")) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.sum()?;
                if self.peek() != Some(&Tok::Sym(")")) {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Lit(n))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(Expr::Var(s))
            }
            _ => self.err("expected an expression"),
        }
    }
}

/// Parses a standalone right-hand side.
pub fn parse_expr(text: &str) -> Result<Expr, SynthError> {
    let toks = lex_line(text, 0, 1)?;
    let mut p = ExprParser { toks: &toks, pos: 0, line: 1 };
    let e = p.sum()?;
    if p.pos != toks.len() {
        return p.err("trailing tokens after expression");
    }
    Ok(e)
}

pub fn parse_program(src: &str) -> Result<Program, SynthError> {
    let mut statements = Vec::new();
    let mut offset = 0;
    for (idx, line) in src.split_inclusive('\n').enumerate() {
        let lineno = idx + 1;
        let toks = lex_line(line, offset, lineno)?;
        offset += line.len();
        if toks.is_empty() {
            continue;
        }
        let perr = |msg: &str| SynthError::Parse { line: lineno, msg: msg.to_string() };
        if toks.last().map(|t| &t.0) != Some(&Tok::Sym(";")) {
            return Err(perr("statement must end with ';'"));
        }
        let body = &toks[..toks.len() - 1];
        if body.is_empty() {
            return Err(perr("empty statement"));
        }
        match &body[0].0 {
            Tok::Ident(kw) if kw == "signal" => {
                let words: Vec<&str> = body[1..]
                    .iter()
                    .map(|t| match &t.0 {
                        Tok::Ident(s) => Ok(s.as_str()),
                        _ => Err(perr("signal declarations contain only words")),
                    })
                    .collect::<Result<_, _>>()?;
                let (private, rest) = match words.split_first() {
                    Some((&"private", r)) => (true, r),
                    _ => (false, &words[..]),
                };
                let (kind, rest) = match rest.split_first() {
                    Some((&"input", r)) => (SignalKind::Input, r),
                    Some((&"output", r)) => (SignalKind::Output, r),
                    _ => (SignalKind::Internal, rest),
                };
                match rest {
                    [name] => statements.push(Stmt::Signal { name: name.to_string(), private, kind }),
                    _ => return Err(perr("malformed signal declaration")),
                }
            }
            Tok::Ident(name) => {
                let op = body.get(1).map(|t| &t.0);
                if body.len() < 3 {
                    return Err(perr("expected an assignment or constraint"));
                }
                let mut p = ExprParser { toks: &body[2..], pos: 0, line: lineno };
                let rhs = p.sum()?;
                if p.pos != body.len() - 2 {
                    return Err(perr("trailing tokens after expression"));
                }
                match op {
                    Some(Tok::Sym("<==")) => statements.push(Stmt::Assign {
                        name: name.clone(),
                        rhs,
                        rhs_span: (body[2].1, body[body.len() - 1].2),
                    }),
                    Some(Tok::Sym("===")) => statements.push(Stmt::Constrain { name: name.clone(), rhs }),
                    _ => return Err(perr("expected '<==' or '==='")),
                }
            }
            _ => return Err(perr("statement must start with a name")),
        }
    }
    Ok(Program { statements })
}

pub fn eval_expr(e: &Expr, env: &BTreeMap<String, FieldElement>, q: &Modulus) -> Result<FieldElement, SynthError> {
    Ok(match e {
        Expr::Lit(n) => FieldElement::new(q, n.clone()),
        Expr::Var(v) => env.get(v).cloned().ok_or_else(|| SynthError::Eval(format!("signal {v} has no value yet")))?,
        Expr::Neg(a) => -eval_expr(a, env, q)?,
        Expr::Add(a, b) => &eval_expr(a, env, q)? + &eval_expr(b, env, q)?,
        Expr::Sub(a, b) => &eval_expr(a, env, q)? - &eval_expr(b, env, q)?,
        Expr::Mul(a, b) => &eval_expr(a, env, q)? * &eval_expr(b, env, q)?,
    })
}

/// Runs the program: inputs come from `inputs`, every `<==` overwrites its
/// target (including declared inputs), every `===` must hold.
pub fn interpret(
    prog: &Program,
    inputs: &BTreeMap<String, FieldElement>,
    q: &Modulus,
) -> Result<BTreeMap<String, FieldElement>, SynthError> {
    let mut env = inputs.clone();
    for s in &prog.statements {
        match s {
            Stmt::Signal { .. } => {}
            Stmt::Assign { name, rhs, .. } => {
                let v = eval_expr(rhs, &env, q)?;
                env.insert(name.clone(), v);
            }
            Stmt::Constrain { name, rhs } => {
                let lhs = env.get(name).ok_or_else(|| SynthError::Eval(format!("signal {name} has no value yet")))?;
                if lhs != &eval_expr(rhs, &env, q)? {
                    return Err(SynthError::Eval(format!("constraint on {name} fails")));
                }
            }
        }
    }
    Ok(env)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutatedProgram {
    pub source_text: String,
    pub substitutions: BTreeMap<String, FieldElement>,
}

/// The signal a site id refers to: the part after the last '.'.
pub fn site_signal(site_id: &str) -> &str {
    site_id.rsplit('.').next().unwrap_or(site_id)
}

pub fn emit_mutated_source(
    original: &str,
    subs: &BTreeMap<String, FieldElement>,
) -> Result<MutatedProgram, SynthError> {
    let prog = parse_program(original)?;
    let mut edits: Vec<((usize, usize), String)> = Vec::new();
    for (site, value) in subs {
        let target = site_signal(site);
        let span = prog.statements.iter().find_map(|s| match s {
            Stmt::Assign { name, rhs_span, .. } if name == target => Some(*rhs_span),
            _ => None,
        });
        match span {
            Some(sp) => edits.push((sp, value.to_string())),
            None => return Err(SynthError::UnknownSite(site.clone())),
        }
    }
    edits.sort_by_key(|(sp, _)| std::cmp::Reverse(sp.0));
    let mut text = original.to_string();
    for ((s, e), lit) in edits {
        text.replace_range(s..e, &lit);
    }
    parse_program(&text).map_err(|e| SynthError::ReparseFailure(e.to_string()))?;
    Ok(MutatedProgram { source_text: text, substitutions: subs.clone() })
}

// ---------------------------------------------------------------------------
// Site equations

/// `Σ coeffs[j]·c^j = 0`; the affine case is `α·c + β` with `coeffs = [β, α]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteEquation {
    pub site_id: String,
    pub coeffs: Vec<FieldElement>,
}

impl SiteEquation {
    pub fn affine(site_id: &str, alpha: FieldElement, beta: FieldElement) -> Self {
        SiteEquation { site_id: site_id.to_string(), coeffs: vec![beta, alpha] }
    }

    pub fn degree(&self) -> Option<usize> {
        self.poly().degree()
    }

    pub fn poly(&self) -> DensePoly {
        DensePoly::new(self.coeffs[0].modulus(), self.coeffs.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SiteRoots {
    Roots(Vec<FieldElement>),
    /// The equation vanishes identically; every constant works.
    AllOfField,
}

const EXHAUSTIVE_LIMIT: u64 = 1 << 16;

pub fn solve_site_constant(eq: &SiteEquation) -> Result<SiteRoots, SynthError> {
    let p = eq.poly();
    let q = p.modulus().clone();
    let deg = match p.degree() {
        None => return Ok(SiteRoots::AllOfField),
        Some(0) => return Ok(SiteRoots::Roots(vec![])),
        Some(d) => d,
    };
    if deg > 4 {
        return Err(SynthError::DegreeTooHigh(deg));
    }
    if deg == 1 {
        let root = (-p.coeff(0)).try_div(&p.coeff(1))?;
        return Ok(SiteRoots::Roots(vec![root]));
    }
    if q.q() <= &BigUint::from(EXHAUSTIVE_LIMIT) {
        let qv = q.q().to_u64_digits().first().copied().unwrap_or(0);
        let roots = (0..qv)
            .map(|v| FieldElement::from_u64(&q, v))
            .filter(|x| p.eval(x).expect("same field").is_zero())
            .collect();
        return Ok(SiteRoots::Roots(roots));
    }
    if deg == 2 {
        let (a, b, c) = (p.coeff(2), p.coeff(1), p.coeff(0));
        let disc = &(&b * &b) - &(&FieldElement::from_u64(&q, 4) * &(&a * &c));
        let two_a = &a + &a;
        let mut roots = match disc.sqrt() {
            None => vec![],
            Some(s) => {
                let r1 = (&(-&b) + &s).try_div(&two_a)?;
                let r2 = (&(-&b) - &s).try_div(&two_a)?;
                if r1 == r2 {
                    vec![r1]
                } else {
                    vec![r1, r2]
                }
            }
        };
        roots.sort_by(|x, y| x.value().cmp(y.value()));
        return Ok(SiteRoots::Roots(roots));
    }
    Err(SynthError::DegreeTooHigh(deg))
}

const PROBE_POINTS: u64 = 6;

/// Constants for one edited row that make every row of the edited system hold
/// when the other edits and the inputs are fixed. The residual of each row is
/// probed as a polynomial in the free constant (degree ≤ 4) and solved.
pub fn solve_slot_constant(
    inst: &R1CSInstance,
    fixed_edits: &[(usize, FieldElement)],
    slot_row: usize,
    inputs: &[FieldElement],
) -> Result<Vec<FieldElement>, SynthError> {
    let q = inst.modulus().clone();
    let site = inst.site_of_row(slot_row).map(|s| s.site_id.clone()).unwrap_or_else(|| format!("row{slot_row}"));
    let mut samples: Vec<Vec<FieldElement>> = Vec::new();
    for v in 0..PROBE_POINTS {
        let mut edits = fixed_edits.to_vec();
        edits.push((slot_row, FieldElement::from_u64(&q, v)));
        let edited = inst.with_rows_pinned(&edits).map_err(|e| SynthError::Eval(e.to_string()))?;
        let Some(res) = residuals_after_partial_execution(&edited, inputs) else {
            return Ok(vec![]);
        };
        samples.push(res);
    }
    let mut candidates: Option<Vec<FieldElement>> = None;
    for row in 0..inst.num_constraints() {
        let pts: Vec<(FieldElement, FieldElement)> = (0..PROBE_POINTS as usize - 1)
            .map(|v| (FieldElement::from_u64(&q, v as u64), samples[v][row].clone()))
            .collect();
        let poly = lagrange_interpolate(&q, &pts)?;
        let last = FieldElement::from_u64(&q, PROBE_POINTS - 1);
        if poly.eval(&last)? != samples[PROBE_POINTS as usize - 1][row] {
            return Err(SynthError::DegreeTooHigh(5));
        }
        let eq = SiteEquation {
            site_id: site.clone(),
            coeffs: if poly.is_zero() { vec![FieldElement::zero(&q)] } else { poly.coeffs().to_vec() },
        };
        match solve_site_constant(&eq)? {
            SiteRoots::AllOfField => {}
            SiteRoots::Roots(r) => {
                candidates = Some(match candidates {
                    None => r,
                    Some(prev) => prev.into_iter().filter(|x| r.contains(x)).collect(),
                });
            }
        }
    }
    Ok(candidates.unwrap_or_default())
}

/// Residuals after forward execution where rows that cannot be solved are
/// evaluated with their unresolved wires left at zero.
fn residuals_after_partial_execution(inst: &R1CSInstance, inputs: &[FieldElement]) -> Option<Vec<FieldElement>> {
    let idx = inst.input_indices();
    let mut known = vec![None; inst.num_vars()];
    known[0] = Some(FieldElement::one(inst.modulus()));
    for (i, v) in idx.iter().zip(inputs) {
        known[*i] = Some(v.clone());
    }
    crate::circuit::propagate(inst, &mut known);
    if known.iter().any(|k| k.is_none()) {
        return None;
    }
    let w: Vec<FieldElement> = known.into_iter().map(|k| k.expect("checked")).collect();
    Some(inst.rows().iter().map(|r| r.residual(&w, inst.modulus())).collect())
}

/// True if forward execution of the edited instance on `inputs` succeeds.
pub fn edit_executes(inst: &R1CSInstance, edits: &[(usize, FieldElement)], inputs: &[FieldElement]) -> bool {
    inst.with_rows_pinned(edits).ok().and_then(|e| execute(&e, inputs)).is_some()
}

// ---------------------------------------------------------------------------
// SMT-LIB2

fn smt_lc(row: &SparseRow) -> String {
    if row.is_empty() {
        return "0".into();
    }
    let terms: Vec<String> =
        row.entries().iter().map(|(i, c)| if c.is_one() { format!("w{i}") } else { format!("(* {c} w{i})") }).collect();
    if terms.len() == 1 {
        terms[0].clone()
    } else {
        format!("(+ {})", terms.join(" "))
    }
}

/// Query for an edit of exactly `t` pool rows that satisfies the edited system
/// and changes some public output. Integers encode field elements.
pub fn smtlib_emit(
    inst: &R1CSInstance,
    pool_rows: &[usize],
    t: usize,
    y_orig: &[FieldElement],
) -> Result<String, SynthError> {
    if t > pool_rows.len() {
        return Err(SynthError::Precondition(format!("cardinality {t} exceeds the pool size {}", pool_rows.len())));
    }
    let outs = inst.public_outputs();
    if outs.len() != y_orig.len() {
        return Err(SynthError::Precondition("original output length mismatch".into()));
    }
    let q = inst.modulus().q();
    let mut s = String::new();
    writeln!(s, "; edited-constraint divergence query, cardinality {t}").ok();
    writeln!(s, "(set-logic QF_NIA)").ok();
    writeln!(s, "(define-fun q () Int {q})").ok();
    for i in 0..inst.num_vars() {
        writeln!(s, "(declare-const w{i} Int)").ok();
        writeln!(s, "(assert (and (<= 0 w{i}) (< w{i} q)))").ok();
    }
    writeln!(s, "(assert (= w0 1))").ok();
    for slot in 0..pool_rows.len() {
        writeln!(s, "(declare-const d{slot} Int)").ok();
        writeln!(s, "(declare-const c{slot} Int)").ok();
        writeln!(s, "(assert (or (= d{slot} 0) (= d{slot} 1)))").ok();
        writeln!(s, "(assert (and (<= 0 c{slot}) (< c{slot} q)))").ok();
    }
    for (r, row) in inst.rows().iter().enumerate() {
        let ab = format!("(* {} {})", smt_lc(&row.a), smt_lc(&row.b));
        let lhs = match pool_rows.iter().position(|&p| p == r) {
            Some(slot) => format!("(+ (* (- 1 d{slot}) {ab}) (* d{slot} c{slot}))"),
            None => ab,
        };
        writeln!(s, "(assert (= (mod (- {lhs} {}) q) 0))", smt_lc(&row.c)).ok();
    }
    let diverge: Vec<String> = outs.iter().zip(y_orig).map(|(i, y)| format!("(distinct w{i} {y})")).collect();
    match diverge.len() {
        0 => writeln!(s, "(assert false)").ok(),
        1 => writeln!(s, "(assert {})", diverge[0]).ok(),
        _ => writeln!(s, "(assert (or {}))", diverge.join(" ")).ok(),
    };
    let sum = if pool_rows.is_empty() {
        "0".to_string()
    } else {
        format!("(+ 0 {})", (0..pool_rows.len()).map(|i| format!("d{i}")).collect::<Vec<_>>().join(" "))
    };
    writeln!(s, "(assert (= {sum} {t}))").ok();
    writeln!(s, "(check-sat)").ok();
    writeln!(s, "(get-model)").ok();
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

/// Reads every top-level form; `;` starts a line comment.
pub fn parse_sexprs(text: &str) -> Result<Vec<SExpr>, String> {
    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    let mut atom = String::new();
    let flush = |atom: &mut String, stack: &mut Vec<Vec<SExpr>>| {
        if !atom.is_empty() {
            stack.last_mut().expect("nonempty").push(SExpr::Atom(std::mem::take(atom)));
        }
    };
    for line in text.lines() {
        let code = line.split(';').next().unwrap_or("");
        for ch in code.chars() {
            match ch {
                '(' => {
                    flush(&mut atom, &mut stack);
                    stack.push(Vec::new());
                }
                ')' => {
                    flush(&mut atom, &mut stack);
                    let done = stack.pop().expect("nonempty");
                    match stack.last_mut() {
                        Some(parent) => parent.push(SExpr::List(done)),
                        None => return Err("unbalanced ')'".into()),
                    }
                }
                c if c.is_whitespace() => flush(&mut atom, &mut stack),
                c => atom.push(c),
            }
        }
        flush(&mut atom, &mut stack);
    }
    if stack.len() != 1 {
        return Err("unbalanced '('".into());
    }
    Ok(stack.pop().expect("root"))
}

/// Top-level forms must be commands from the subset the emitter uses.
pub fn check_smtlib(text: &str) -> Result<usize, String> {
    let forms = parse_sexprs(text)?;
    const COMMANDS: [&str; 6] = ["set-logic", "define-fun", "declare-const", "assert", "check-sat", "get-model"];
    for f in &forms {
        match f {
            SExpr::List(items) => match items.first() {
                Some(SExpr::Atom(head)) if COMMANDS.contains(&head.as_str()) => {}
                _ => return Err(format!("unexpected top-level form {f:?}")),
            },
            SExpr::Atom(a) => return Err(format!("bare atom {a:?} at top level")),
        }
    }
    Ok(forms.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ff::{bn254scalar, test101};
    use crate::toy;

    fn fe(v: u64) -> FieldElement {
        FieldElement::from_u64(&test101(), v)
    }

    #[test]
    fn affine_examples() {
        let eq = SiteEquation::affine("s", fe(2), fe(3));
        let SiteRoots::Roots(r) = solve_site_constant(&eq).unwrap() else { panic!() };
        assert_eq!(r.len(), 1);
        assert!((&(&fe(2) * &r[0]) + &fe(3)).is_zero());
        assert_eq!(r[0], fe(49));
        assert_eq!(solve_site_constant(&SiteEquation::affine("s", fe(0), fe(0))).unwrap(), SiteRoots::AllOfField);
        assert_eq!(solve_site_constant(&SiteEquation::affine("s", fe(0), fe(5))).unwrap(), SiteRoots::Roots(vec![]));
    }

    #[test]
    fn higher_degree_roots() {
        // (c-3)(c-7) = c^2 - 10c + 21
        let eq = SiteEquation { site_id: "s".into(), coeffs: vec![fe(21), fe(91), fe(1)] };
        assert_eq!(solve_site_constant(&eq).unwrap(), SiteRoots::Roots(vec![fe(3), fe(7)]));
        let q = bn254scalar();
        let big = |v: u64| FieldElement::from_u64(&q, v);
        let eq = SiteEquation { site_id: "s".into(), coeffs: vec![big(21), -big(10), big(1)] };
        assert_eq!(solve_site_constant(&eq).unwrap(), SiteRoots::Roots(vec![big(3), big(7)]));
        let eq = SiteEquation { site_id: "s".into(), coeffs: vec![fe(1), fe(0), fe(0), fe(0), fe(0), fe(1)] };
        assert_eq!(solve_site_constant(&eq).unwrap_err(), SynthError::DegreeTooHigh(5));
    }

    #[test]
    fn toy_program_mutation() {
        let mut subs = BTreeMap::new();
        subs.insert("main.c".to_string(), fe(2));
        subs.insert("main.e".to_string(), fe(3));
        let m = emit_mutated_source(toy::PROGRAM, &subs).unwrap();
        assert!(m.source_text.contains("c <== 2;"));
        assert!(m.source_text.contains("e <== 3;"));
        assert!(m.source_text.contains("d <== c + a;"));
        let again = emit_mutated_source(&m.source_text, &subs).unwrap();
        assert_eq!(again.source_text, m.source_text);
        assert_eq!(emit_mutated_source(toy::PROGRAM, &BTreeMap::new()).unwrap().source_text, toy::PROGRAM);
    }

    #[test]
    fn strong_constraints_are_not_sites() {
        let src = "signal input x;\nsignal output y;\ny <== x * x;\ny === x * x;\n";
        let mut subs = BTreeMap::new();
        subs.insert("main.x".to_string(), fe(1));
        assert_eq!(emit_mutated_source(src, &subs).unwrap_err(), SynthError::UnknownSite("main.x".into()));
    }

    #[test]
    fn interpreter_runs_toy() {
        let prog = parse_program(toy::PROGRAM).unwrap();
        let mut inputs = BTreeMap::new();
        inputs.insert("a".to_string(), fe(2));
        inputs.insert("b".to_string(), fe(3));
        let env = interpret(&prog, &inputs, &test101()).unwrap();
        assert_eq!(env["e"], fe(11));
    }

    #[test]
    fn smt_query_reparses() {
        let inst = toy::instance();
        let y = vec![fe(8), fe(11)];
        for t in 0..=3 {
            let text = smtlib_emit(&inst, &[0, 1, 2], t, &y).unwrap();
            assert!(check_smtlib(&text).unwrap() > 10);
        }
        assert!(smtlib_emit(&inst, &[0, 1, 2], 4, &y).is_err());
        assert!(parse_sexprs("(assert (= 1 1)").is_err());
    }

    #[test]
    fn slot_solve_on_overconstrained_rows() {
        // x*x = y and y = 4*one: pinning the first row to c needs c == 4.
        let q = test101();
        let inst = R1CSInstance::new(
            q.clone(),
            vec![
                crate::circuit::VarClass::One,
                crate::circuit::VarClass::PrivateInput,
                crate::circuit::VarClass::Intermediate,
            ],
            vec![
                crate::circuit::Constraint {
                    a: SparseRow::new(vec![(1, fe(1))]),
                    b: SparseRow::new(vec![(1, fe(1))]),
                    c: SparseRow::new(vec![(2, fe(1))]),
                },
                crate::circuit::Constraint {
                    a: SparseRow::new(vec![(2, fe(1))]),
                    b: SparseRow::new(vec![(0, fe(1))]),
                    c: SparseRow::new(vec![(0, fe(4))]),
                },
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(solve_slot_constant(&inst, &[], 0, &[fe(5)]).unwrap(), vec![fe(4)]);
    }
}
