//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zkcraft::circuit::{
    circuit_to_json, execute, parse_circuit_json, parse_r1cs_binary, write_r1cs_binary, CircuitError, Constraint,
    R1CSInstance, SparseRow, VarClass, Witness,
};
use zkcraft::driver::{
    default_profiles, run_pipeline, select_backend, BackendDecision, CryptoSelfTest, FallbackReason, RunConfig,
    RunOutcome, SearchBudget, BASEFOLD_PROFILE, HYPERPLONK_PLUS_PROFILE,
};
use zkcraft::extract::{extract_selection, interpolate_witness, reconstruct_witness};
use zkcraft::ff::{bn254scalar, test101, DensePoly, FieldElement, Modulus};
use zkcraft::gen::{random_forward_circuit, random_honest_case, Shape};
use zkcraft::oracle::{canonicalize, template_fingerprint};
use zkcraft::slicer::{row_diagnostics_with, row_score, Partition, ScoreConvention, SlicerConfig};
use zkcraft::toy;
use zkcraft::viop::{degree_bound, forge_zero_rounds, prove, verify, IopConfig};
use zkcraft::vortex::{build_block_vandermonde, choose_nodes, default_degrees};

const TOY_TIME_LIMIT: Duration = Duration::from_secs(1);
const HONEST_CASES: usize = 1000;
const HONEST_TIME_LIMIT: Duration = Duration::from_secs(60);
const FORGE_TRIALS: usize = 100_000;
const SIGMA_MARGIN: f64 = 3.0;
const SQUARED_RATE_FACTOR: f64 = 3.0;
const VANDERMONDE_MAX_K: usize = 32;
const VANDERMONDE_VECTORS: usize = 100;
const SZ_MAX_DEGREE: usize = 10;
const SZ_DRAWS: usize = 100_000;
const BRANCH_PIPELINES: usize = 500;
const BRUTE_CIRCUITS: usize = 50;
const DETERMINISM_SEEDS: u64 = 10;
const SIZE_DOMAIN_LOGS: std::ops::RangeInclusive<u32> = 6..=14;
const SIZE_FIT_TOLERANCE_BYTES: f64 = 0.5;
const EMPTY_SHA256_PREFIX: u64 = 0xE3B0_C442_98FC_1C14;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fe(q: &Modulus, v: u64) -> FieldElement {
    FieldElement::from_u64(q, v)
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Upper limit of a binomial rate estimate.
fn upper(p: f64, n: usize) -> f64 {
    p + SIGMA_MARGIN * (p * (1.0 - p) / n as f64).sqrt()
}

// 1 -------------------------------------------------------------------------

fn toy_golden() -> Outcome {
    let start = Instant::now();
    let inst = toy::instance();
    let q = inst.modulus().clone();
    let counts = row_diagnostics_with(&inst, &Partition::explicit([1, 2], [3]), 0).map_err(|e| e.to_string())?;
    ensure(counts == (2, 1), format!("first-row counts {counts:?}"))?;
    let cfg =
        SlicerConfig { score_lambda: rat(1, 1), score_mu: rat(1, 2), pool_size: 3, convention: ScoreConvention::Toy };
    ensure(row_score(2, 1, &cfg) == Some(rat(2, 1)), "first-row score")?;

    let polys = [[1, 1, 1], [1, 3, 2], [3, 2, 1]];
    let at_one: Vec<u64> =
        polys.iter().map(|p| DensePoly::from_u64s(&q, p).eval(&fe(&q, 1)).unwrap().to_u64().unwrap()).collect();
    ensure(at_one == [3, 6, 6], format!("row polynomials at 1 give {at_one:?}"))?;

    let y_orig = toy::honest_witness(&inst, 2, 3).outputs(&inst);
    let delta = [true, false, true];
    let c = [fe(&q, 2), fe(&q, 0), fe(&q, 3)];
    let edited = inst.with_rows_pinned(&[(0, c[0].clone()), (2, c[2].clone())]).unwrap();
    let w = execute(&edited, &[fe(&q, 2), fe(&q, 3)]).ok_or("edited toy does not execute")?;
    let expect_w: Vec<FieldElement> = [1, 2, 3, 2, 4, 3].iter().map(|&v| fe(&q, v)).collect();
    ensure(w.values() == expect_w, "edited witness")?;
    let (d_row, d_sel) = default_degrees(3);
    let plan = choose_nodes(&q, 3, d_row, d_sel).unwrap();
    let iop = IopConfig::default();
    let proof = prove(&inst, &[0, 1, 2], &plan, &delta, &c, &w, &y_orig, &iop, true).map_err(|e| e.to_string())?;
    let acc = verify(&proof, &inst, &[0, 1, 2], &plan, &y_orig, &iop).map_err(|r| r.to_string())?;
    let edit = extract_selection(&acc).map_err(|e| e.to_string())?;
    ensure(edit.delta == delta && edit.c == c, "extracted edit differs")?;
    ensure(interpolate_witness(&acc).unwrap().as_ref() == Some(&w), "extracted witness differs")?;
    ensure(proof.y_prime == [fe(&q, 4), fe(&q, 3)], "claimed outputs")?;
    let el = start.elapsed();
    ensure(el < TOY_TIME_LIMIT, format!("took {el:?}"))?;
    Ok(format!("counts (2,1), score 2, rows (3,6,6), edit recovered in {el:?}"))
}

// 2 -------------------------------------------------------------------------

fn honest_cases() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fields = [test101(), bn254scalar()];
    for i in 0..HONEST_CASES {
        let q = &fields[i % 2];
        let case = random_honest_case(&mut rng, q, 16, 12);
        let k = case.pool_rows.len();
        let (d_row, d_sel) = default_degrees(k);
        let plan = choose_nodes(q, k, d_row, d_sel).unwrap();
        let iop = IopConfig { repetitions: 1 + i % 2, ..IopConfig::default() };
        let attach = i % 3 == 0;
        let proof =
            prove(&case.inst, &case.pool_rows, &plan, &case.delta, &case.c, &case.w_prime, &case.y_orig, &iop, attach)
                .map_err(|e| format!("case {i}: {e}"))?;
        let acc = verify(&proof, &case.inst, &case.pool_rows, &plan, &case.y_orig, &iop)
            .map_err(|r| format!("case {i}: {r}"))?;
        let edit = extract_selection(&acc).map_err(|e| e.to_string())?;
        ensure(edit.delta == case.delta && edit.c == case.c, format!("case {i}: edit differs"))?;
        let rec =
            reconstruct_witness(&case.inst, &edit, &case.inputs, Some(&proof.y_prime)).map_err(|e| e.to_string())?;
        ensure(rec.witness == case.w_prime, format!("case {i}: witness differs"))?;
    }
    let el = start.elapsed();
    ensure(el < HONEST_TIME_LIMIT, format!("took {el:?}"))?;
    Ok(format!("{HONEST_CASES} honest cases accepted and extracted in {el:?}"))
}

// 3, 4 ----------------------------------------------------------------------

/// Acceptance rate of the zero-round forger on false toy claims.
fn forged_rate(ell: usize) -> (f64, usize) {
    let inst = toy::instance();
    let q = inst.modulus().clone();
    let y_orig = toy::honest_witness(&inst, 2, 3).outputs(&inst);
    let delta = [true, false, true];
    let c = [fe(&q, 2), fe(&q, 0), fe(&q, 3)];
    let edited = inst.with_rows_pinned(&[(0, c[0].clone()), (2, c[2].clone())]).unwrap();
    let w = execute(&edited, &[fe(&q, 2), fe(&q, 3)]).unwrap();
    let (d_row, d_sel) = default_degrees(3);
    let plan = choose_nodes(&q, 3, d_row, d_sel).unwrap();
    let iop = IopConfig { repetitions: ell, ..IopConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3 + ell as u64);
    let mut accepted = 0;
    for trial in 0..FORGE_TRIALS {
        // Wire 2 only feeds pinned rows; every other perturbation breaks a row
        // and keeps the first output at 4 or the second at 3, so y' != y.
        let mut vals = w.values().to_vec();
        let i = [1, 3, 4, 5][rng.gen_range(0..4)];
        vals[i] = &vals[i] + &FieldElement::random_nonzero(&q, &mut rng);
        let claim = Witness::new(vals).unwrap();
        let proof = match forge_zero_rounds(
            &inst,
            &[0, 1, 2],
            &plan,
            &delta,
            &c,
            &claim,
            &y_orig,
            &iop,
            true,
            trial as u64 * 64,
        ) {
            Ok(p) => p,
            Err(_) => continue,
        };
        accepted += verify(&proof, &inst, &[0, 1, 2], &plan, &y_orig, &iop).is_ok() as usize;
    }
    (accepted as f64 / FORGE_TRIALS as f64, inst.public_outputs().len() - 1 + degree_bound(inst.num_vars(), 3))
}

fn soundness(rate1: &mut f64) -> Outcome {
    let (rate, per_rep) = forged_rate(1);
    *rate1 = rate;
    let bound = per_rep as f64 / 101.0;
    let lim = upper(bound, FORGE_TRIALS);
    ensure(rate <= lim, format!("rate {rate:.5} above {lim:.5}"))?;
    Ok(format!("single-repetition forgery rate {rate:.5} <= {lim:.5} (bound {bound:.5})"))
}

fn amplification(rate1: f64) -> Outcome {
    let (rate2, _) = forged_rate(2);
    let lim = SQUARED_RATE_FACTOR * rate1 * rate1;
    ensure(rate2 <= lim, format!("rate {rate2:.6} above {lim:.6}"))?;
    Ok(format!("two-repetition forgery rate {rate2:.6} <= {lim:.6}"))
}

// 5 -------------------------------------------------------------------------

fn block_vandermonde() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for q in [test101(), bn254scalar()] {
        for k in 1..=VANDERMONDE_MAX_K {
            let (d_row, d_sel) = default_degrees(k);
            let plan = choose_nodes(&q, k, d_row, d_sel).map_err(|e| e.to_string())?;
            let m = build_block_vandermonde(&plan).map_err(|e| e.to_string())?;
            ensure(!m.det.is_zero(), format!("k={k}: zero determinant"))?;
            for _ in 0..VANDERMONDE_VECTORS {
                let v: Vec<FieldElement> = (0..2 * k).map(|_| FieldElement::random(&q, &mut rng)).collect();
                ensure(m.invert(&m.apply(&v)) == v, format!("k={k}: inverse fails"))?;
            }
        }
    }
    Ok(format!("k = 1..{VANDERMONDE_MAX_K} invertible over both fields"))
}

// 6 -------------------------------------------------------------------------

fn schwartz_zippel() -> Outcome {
    let q = test101();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for r in 1..=SZ_MAX_DEGREE {
        // r distinct roots is the extreme case; a random top-degree poly is the typical one.
        let mut roots: Vec<u64> = (0..101).collect();
        for i in 0..r {
            let j = rng.gen_range(i..101);
            roots.swap(i, j);
        }
        let mut extreme = DensePoly::from_u64s(&q, &[1]);
        for &a in &roots[..r] {
            extreme = extreme.mul(&DensePoly::new(&q, vec![-fe(&q, a), fe(&q, 1)]));
        }
        let mut coeffs: Vec<FieldElement> = (0..r).map(|_| FieldElement::random(&q, &mut rng)).collect();
        coeffs.push(FieldElement::random_nonzero(&q, &mut rng));
        let typical = DensePoly::new(&q, coeffs);
        for p in [extreme, typical] {
            let hits = (0..SZ_DRAWS).filter(|_| p.eval(&FieldElement::random(&q, &mut rng)).unwrap().is_zero()).count();
            let rate = hits as f64 / SZ_DRAWS as f64;
            let bound = r as f64 / 101.0;
            let lim = upper(bound, SZ_DRAWS);
            ensure(rate <= lim, format!("degree {r}: rate {rate:.5} above {lim:.5}"))?;
            worst = worst.max(rate - bound);
        }
    }
    Ok(format!("root-hit rates within r/q + 3 sigma for r = 1..{SZ_MAX_DEGREE} (max excess {worst:+.5})"))
}

// 7 -------------------------------------------------------------------------

fn random_small_circuit(rng: &mut ChaCha8Rng, q: &Modulus) -> R1CSInstance {
    let defined = rng.gen_range(2..=5);
    let shape = Shape {
        inputs: rng.gen_range(1..=2),
        defined,
        outputs: rng.gen_range(1..=defined.min(2)),
        padding_rows: rng.gen_range(0..=2),
    };
    random_forward_circuit(rng, q, shape, &[])
}

fn branch_equivalence() -> Outcome {
    let q = test101();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut found = 0;
    for i in 0..BRANCH_PIPELINES {
        let inst = random_small_circuit(&mut rng, &q);
        let base =
            RunConfig { seed: i as u64, t_max: 2, attach_witness: true, input_samples: 4, ..RunConfig::default() };
        let native = run_pipeline(&inst, None, None, &base).map_err(|e| format!("pipeline {i}: {e}"))?;
        let fallback =
            run_pipeline(&inst, None, None, &RunConfig { crypto_self_test: CryptoSelfTest::ForceFail, ..base })
                .map_err(|e| format!("pipeline {i}: {e}"))?;
        ensure(
            native.manifest.backend.fallback_reason == FallbackReason::None,
            format!("pipeline {i}: no native backend"),
        )?;
        ensure(native.found() == fallback.found(), format!("pipeline {i}: verdicts differ"))?;
        for (a, b) in native.findings.iter().zip(&fallback.findings) {
            ensure(a.proof.is_some() && b.proof.is_none(), format!("pipeline {i}: proof presence"))?;
            let (a, b) = (&a.counterexample, &b.counterexample);
            ensure(a.edit == b.edit && a.w_prime == b.w_prime, format!("pipeline {i}: findings differ"))?;
        }
        found += native.found() as usize;
    }
    Ok(format!("{BRANCH_PIPELINES} pipelines agree across branches ({found} with findings)"))
}

// 8 -------------------------------------------------------------------------

/// `k` copies of `y = x`: no edit of fewer than `k` rows moves `y`.
fn replicated_copy(k: usize) -> (R1CSInstance, Witness) {
    let q = test101();
    let lc = |i: usize| SparseRow::new(vec![(i, fe(&q, 1))]);
    let rows = (0..k).map(|_| Constraint { a: lc(1), b: lc(0), c: lc(2) }).collect();
    let inst =
        R1CSInstance::new(q.clone(), vec![VarClass::One, VarClass::PrivateInput, VarClass::PublicOutput], rows, vec![])
            .unwrap();
    let w = Witness::new(vec![fe(&q, 1), fe(&q, 5), fe(&q, 5)]).unwrap();
    (inst, w)
}

fn call_bound() -> Outcome {
    let mut parts = Vec::new();
    for (k, t_max, cap) in [(3, 2, 6u64), (5, 3, 25), (8, 3, 92)] {
        let sum: u64 = (1..=t_max).map(|t| num_integer::binomial(k as u64, t as u64)).sum();
        ensure(sum == cap && SearchBudget::new(k, t_max).max_calls == cap, format!("budget for ({k},{t_max})"))?;
        let (inst, w) = replicated_copy(k);
        for crypto in [CryptoSelfTest::Run, CryptoSelfTest::ForceFail] {
            let cfg = RunConfig {
                t_max,
                crypto_self_test: crypto,
                input_samples: 0,
                exhaustive_input_limit: 0,
                ..RunConfig::default()
            };
            let out = run_pipeline(&inst, None, Some(&w), &cfg).map_err(|e| e.to_string())?;
            ensure(!out.found(), format!("({k},{t_max}): unexpected finding"))?;
            ensure(out.counter_used <= cap, format!("({k},{t_max}): {} calls", out.counter_used))?;
            ensure(out.manifest.search.stats.max_calls == cap, "manifest cap")?;
        }
        parts.push(format!("({k},{t_max})<={cap}"));
    }
    Ok(format!("call counts within budget: {}", parts.join(", ")))
}

// 9 -------------------------------------------------------------------------

/// Plain `u64` arithmetic mod 101 over a forward circuit, independent of the
/// field and execution code.
type PlainLc = Vec<(usize, u64)>;

/// `(a, b, defined wire, its coefficient)` per row.
type PlainRow = (PlainLc, PlainLc, usize, u64);

struct Plain {
    q: u64,
    rows: Vec<PlainRow>,
    n: usize,
    outputs: Vec<usize>,
}

impl Plain {
    fn new(inst: &R1CSInstance) -> Plain {
        let conv = |r: &SparseRow| r.entries().iter().map(|(i, c)| (*i, c.to_u64().unwrap())).collect::<Vec<_>>();
        let rows = inst
            .rows()
            .iter()
            .map(|r| {
                let (wire, coeff) = conv(&r.c)[0];
                (conv(&r.a), conv(&r.b), wire, coeff)
            })
            .collect();
        Plain { q: 101, rows, n: inst.num_vars(), outputs: inst.public_outputs() }
    }

    fn inv(&self, a: u64) -> u64 {
        (1..self.q).find(|x| a * x % self.q == 1).unwrap()
    }

    /// Outputs with `pins[r] = Some(c)` replacing row `r` by `coeff·wire = c`.
    fn outputs(&self, x: u64, pins: &[Option<u64>]) -> Vec<u64> {
        let mut w = vec![0u64; self.n];
        w[0] = 1;
        w[1] = x;
        let dot = |lc: &[(usize, u64)], w: &[u64]| lc.iter().fold(0, |s, (i, c)| (s + c * w[*i]) % self.q);
        for (r, (a, b, wire, coeff)) in self.rows.iter().enumerate() {
            let rhs = match pins[r] {
                Some(c) => c,
                None => dot(a, &w) * dot(b, &w) % self.q,
            };
            w[*wire] = rhs * self.inv(*coeff) % self.q;
        }
        self.outputs.iter().map(|&i| w[i]).collect()
    }
}

fn brute_force() -> Outcome {
    let q = test101();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut positives = 0;
    for i in 0..BRUTE_CIRCUITS {
        let outputs = rng.gen_range(1..=2);
        let inst = random_forward_circuit(&mut rng, &q, Shape { inputs: 1, defined: 2, outputs, padding_rows: 0 }, &[]);
        let cfg = RunConfig { seed: i as u64, use_site_solves: false, ..RunConfig::default() };
        let out = run_pipeline(&inst, None, None, &cfg).map_err(|e| format!("circuit {i}: {e}"))?;
        let plain = Plain::new(&inst);
        let pool = &out.manifest.pool.rows;
        let families: Vec<Vec<u64>> =
            out.manifest.oracle.families.iter().map(|f| f.iter().map(|s| s.parse().unwrap()).collect()).collect();
        let hit = |sel: &[(usize, u64)], x: u64| {
            let mut pins = vec![None; inst.num_constraints()];
            for &(p, c) in sel {
                pins[pool[p]] = Some(c);
            }
            plain.outputs(x, &pins) != plain.outputs(x, &vec![None; inst.num_constraints()])
        };
        let mut brute = false;
        'search: for x in 0..101 {
            for (p, fam) in families.iter().enumerate() {
                for &c in fam {
                    if hit(&[(p, c)], x) {
                        brute = true;
                        break 'search;
                    }
                }
            }
            if pool.len() == 2 {
                for &c0 in &families[0] {
                    for &c1 in &families[1] {
                        if hit(&[(0, c0), (1, c1)], x) {
                            brute = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        ensure(brute == out.found(), format!("circuit {i}: brute force {brute}, pipeline {}", out.found()))?;
        if let Some(f) = out.findings.first() {
            let cx = &f.counterexample;
            let sel: Vec<(usize, u64)> =
                (0..pool.len()).filter(|&p| cx.edit.delta[p]).map(|p| (p, cx.edit.c[p].to_u64().unwrap())).collect();
            let x = cx.w_prime.get(1).to_u64().unwrap();
            ensure(hit(&sel, x), format!("circuit {i}: reported edit does not diverge"))?;
            positives += 1;
        }
    }
    Ok(format!("{BRUTE_CIRCUITS} two-row circuits match brute force ({positives} with findings)"))
}

// 10 ------------------------------------------------------------------------

fn fingerprint(out: &RunOutcome) -> (String, Vec<String>, Vec<Option<Vec<u8>>>) {
    (
        out.manifest.to_json(),
        out.findings.iter().map(|f| f.counterexample.to_json()).collect(),
        out.findings.iter().map(|f| f.proof.as_ref().map(|p| p.to_bytes())).collect(),
    )
}

fn determinism() -> Outcome {
    let q = test101();
    let inst = toy::instance();
    let w = toy::honest_witness(&inst, 2, 3);
    for seed in 0..DETERMINISM_SEEDS {
        let cfg = RunConfig { seed, attach_witness: seed % 2 == 0, ..RunConfig::default() };
        let a = run_pipeline(&inst, Some(toy::PROGRAM), Some(&w), &cfg).map_err(|e| e.to_string())?;
        let b = run_pipeline(&inst, Some(toy::PROGRAM), Some(&w), &cfg).map_err(|e| e.to_string())?;
        ensure(fingerprint(&a) == fingerprint(&b), format!("toy seed {seed}"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let other = random_small_circuit(&mut rng, &q);
        let a = run_pipeline(&other, None, None, &cfg).map_err(|e| e.to_string())?;
        let b = run_pipeline(&other, None, None, &cfg).map_err(|e| e.to_string())?;
        ensure(fingerprint(&a) == fingerprint(&b), format!("random seed {seed}"))?;
    }
    Ok(format!("{DETERMINISM_SEEDS} seeds reproduce byte-identical artifacts"))
}

// 11 ------------------------------------------------------------------------

fn backend_boundaries() -> Outcome {
    let p = default_profiles();
    let cases = [
        (1u64 << 18, BackendDecision::ZkNative(BASEFOLD_PROFILE)),
        ((1 << 18) + 1, BackendDecision::ZkNative(HYPERPLONK_PLUS_PROFILE)),
        (1 << 20, BackendDecision::ZkNative(HYPERPLONK_PLUS_PROFILE)),
        ((1 << 20) + 1, BackendDecision::Fallback(FallbackReason::DegExceeded)),
    ];
    for (d, want) in cases {
        ensure(select_backend(d, 4, &p) == want, format!("d = {d}"))?;
    }

    // A pipeline just past the degree limit: one pool row, 2^19 + 1 wires.
    let q = test101();
    let n = (1 << 19) + 1;
    let mut classes = vec![VarClass::Intermediate; n];
    classes[0] = VarClass::One;
    classes[1] = VarClass::PublicOutput;
    let one = || SparseRow::new(vec![(0, fe(&q, 1))]);
    let row = Constraint { a: one(), b: one(), c: SparseRow::new(vec![(1, fe(&q, 1))]) };
    let inst = R1CSInstance::new(q.clone(), classes, vec![row], vec![]).unwrap();
    ensure(degree_bound(n, 1) > 1 << 20, "degree bound")?;
    let mut vals = vec![fe(&q, 0); n];
    vals[0] = fe(&q, 1);
    vals[1] = fe(&q, 1);
    let w = Witness::new(vals).unwrap();
    let out = run_pipeline(&inst, None, Some(&w), &RunConfig { t_max: 1, ..RunConfig::default() })
        .map_err(|e| e.to_string())?;
    ensure(out.manifest.backend.fallback_reason == FallbackReason::DegExceeded, "large run not marked deg_exceeded")?;
    ensure(out.manifest.knowledge_error.is_none() && out.manifest.scheme_id.is_none(), "large run has proof fields")?;

    let toy_inst = toy::instance();
    let tw = toy::honest_witness(&toy_inst, 2, 3);
    let cfg = RunConfig { crypto_self_test: CryptoSelfTest::ForceFail, ..RunConfig::default() };
    let out = run_pipeline(&toy_inst, None, Some(&tw), &cfg).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&out.manifest.to_json()).unwrap();
    ensure(json["backend"]["fallback_reason"] == "crypto_unavailable", "crypto failure not recorded")?;
    Ok("degree limits 2^18 / 2^20 select basefold, hyperplonk+, fallback; reasons recorded".into())
}

// 12 ------------------------------------------------------------------------

fn proof_size() -> Outcome {
    let inst = toy::instance();
    let q = inst.modulus().clone();
    let y_orig = toy::honest_witness(&inst, 2, 3).outputs(&inst);
    let delta = [true, false, true];
    let c = [fe(&q, 2), fe(&q, 0), fe(&q, 3)];
    let edited = inst.with_rows_pinned(&[(0, c[0].clone()), (2, c[2].clone())]).unwrap();
    let w = execute(&edited, &[fe(&q, 2), fe(&q, 3)]).unwrap();
    let (d_row, d_sel) = default_degrees(3);
    let plan = choose_nodes(&q, 3, d_row, d_sel).unwrap();
    let mut pts = Vec::new();
    for lg in SIZE_DOMAIN_LOGS {
        let iop = IopConfig { commit_domain: Some(1 << lg), ..IopConfig::default() };
        let proof = prove(&inst, &[0, 1, 2], &plan, &delta, &c, &w, &y_orig, &iop, false).map_err(|e| e.to_string())?;
        verify(&proof, &inst, &[0, 1, 2], &plan, &y_orig, &iop).map_err(|r| r.to_string())?;
        pts.push((lg as f64, proof.to_bytes().len() as f64));
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let icpt = my - slope * mx;
    let worst = pts.iter().map(|p| (p.1 - (icpt + slope * p.0)).abs()).fold(0.0, f64::max);
    ensure(slope > 0.0 && worst <= SIZE_FIT_TOLERANCE_BYTES, format!("slope {slope}, worst residual {worst}"))?;
    for p in [BASEFOLD_PROFILE, HYPERPLONK_PLUS_PROFILE] {
        ensure(p.opening_size_note.contains("not applicable"), "opening size note")?;
    }
    Ok(format!("size = {icpt:.1} + {slope:.1}·log2(domain) bytes, worst residual {worst:.2}"))
}

// 13 ------------------------------------------------------------------------

fn formats() -> Outcome {
    let inst = toy::circom_ordered_instance();
    let bytes = write_r1cs_binary(&inst).map_err(|e| e.to_string())?;
    let back = parse_r1cs_binary(&bytes).map_err(|e| e.to_string())?;
    ensure(back.rows() == inst.rows() && back.public_outputs() == inst.public_outputs(), "binary roundtrip")?;
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    ensure(parse_r1cs_binary(&bad) == Err(CircuitError::MagicMismatch), "bad magic accepted")?;
    for cut in 0..bytes.len() {
        ensure(parse_r1cs_binary(&bytes[..cut]).is_err(), format!("{cut}-byte prefix parsed"))?;
    }
    let toy_inst = toy::instance();
    let text = circuit_to_json(&toy_inst);
    let again = parse_circuit_json(text.as_bytes()).map_err(|e| e.to_string())?;
    ensure(again == toy_inst && circuit_to_json(&again) == text, "json roundtrip")?;
    let fp = template_fingerprint(&canonicalize(""));
    ensure(fp == EMPTY_SHA256_PREFIX, format!("empty fingerprint {fp:#x}"))?;
    ensure(BigUint::from(fp) == BigUint::from(EMPTY_SHA256_PREFIX), "fingerprint width")?;
    Ok(format!("binary magic and {} truncations rejected, json roundtrip, empty fingerprint {fp:#018x}", bytes.len()))
}

fn main() {
    let mut rate1 = 0.0;
    let mut failures = 0;
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let el = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("PASS criterion {n} ({name}): {msg} [{el:.1}s]"),
            Err(msg) => {
                failures += 1;
                println!("FAIL criterion {n} ({name}): {msg} [{el:.1}s]");
            }
        }
    };
    run(1, "toy golden values", &mut toy_golden);
    run(2, "honest completeness", &mut honest_cases);
    run(3, "single-repetition soundness", &mut || soundness(&mut rate1));
    run(4, "repetition amplification", &mut || amplification(rate1));
    run(5, "block Vandermonde invertibility", &mut block_vandermonde);
    run(6, "Schwartz-Zippel rates", &mut schwartz_zippel);
    run(7, "backend branch equivalence", &mut branch_equivalence);
    run(8, "search call bound", &mut call_bound);
    run(9, "brute-force agreement", &mut brute_force);
    run(10, "determinism", &mut determinism);
    run(11, "backend selection boundaries", &mut backend_boundaries);
    run(12, "proof size scaling", &mut proof_size);
    run(13, "input formats and fingerprints", &mut formats);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
