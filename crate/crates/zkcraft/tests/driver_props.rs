use zkcraft::circuit::{Constraint, R1CSInstance, SparseRow, VarClass, Witness};
use zkcraft::driver::{run_pipeline, write_outputs, CryptoSelfTest, FallbackReason, RunConfig, SearchBudget};
use zkcraft::ff::{test101, FieldElement};
use zkcraft::slicer::SlicerConfig;
use zkcraft::toy;

fn toy_run(cfg: &RunConfig) -> zkcraft::driver::RunOutcome {
    let inst = toy::instance();
    let w = toy::honest_witness(&inst, 2, 3);
    run_pipeline(&inst, Some(toy::PROGRAM), Some(&w), cfg).unwrap()
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let cfg = RunConfig { seed: 11, attach_witness: true, ..RunConfig::default() };
    let a = toy_run(&cfg);
    let b = toy_run(&cfg);
    assert!(a.found());
    assert_eq!(a.manifest.to_json(), b.manifest.to_json());
    assert_eq!(a.findings.len(), b.findings.len());
    for (x, y) in a.findings.iter().zip(&b.findings) {
        assert_eq!(x.counterexample.to_json(), y.counterexample.to_json());
        assert_eq!(x.proof.as_ref().unwrap().to_bytes(), y.proof.as_ref().unwrap().to_bytes());
    }
}

#[test]
fn toy_finding_needs_at_most_two_edits() {
    let out = toy_run(&RunConfig::default());
    let f = &out.findings[0];
    let t = f.counterexample.edit.delta.iter().filter(|&&b| b).count();
    assert!((1..=2).contains(&t), "edited {t} rows");
    assert_ne!(f.counterexample.w_prime.outputs(&toy::instance()), f.counterexample.y_orig);
    assert!(out.counter_used <= SearchBudget::new(3, 3).max_calls);
}

#[test]
fn knowledge_error_in_manifest_matches_recomputation() {
    let out = toy_run(&RunConfig::default());
    let ke = out.manifest.knowledge_error.as_ref().unwrap();
    // n = 6, k = 3, so the degree bound is 2n + k - 1 = 14; m_out = 2, two repetitions.
    assert_eq!(out.manifest.backend.deg_phi, 14);
    assert_eq!(ke.linear, "29/101");
    assert_eq!(ke.exponential, "225/10201");
    assert!((ke.linear_log2 - (29f64 / 101.0).log2()).abs() < 0.01);
}

#[test]
fn fallback_run_carries_no_proof_fields() {
    let out = toy_run(&RunConfig { crypto_self_test: CryptoSelfTest::ForceFail, ..RunConfig::default() });
    assert_eq!(out.manifest.backend.fallback_reason, FallbackReason::CryptoUnavailable);
    assert!(out.manifest.scheme_id.is_none() && out.manifest.node_plan.is_none());
    assert!(out.findings.iter().all(|f| f.proof.is_none()));
    assert!(out.manifest.findings.iter().all(|f| f.proof_sha256.is_none() && f.proof_bytes.is_none()));
    let json: serde_json::Value = serde_json::from_str(&out.manifest.to_json()).unwrap();
    assert_eq!(json["backend"]["fallback_reason"], "crypto_unavailable");
}

/// `y = x` enforced twice; with one pool row the other copy still forces `y = x`.
fn doubly_pinned() -> R1CSInstance {
    let q = test101();
    let one = || FieldElement::one(&q);
    let lc = |i: usize| SparseRow::new(vec![(i, one())]);
    let row = || Constraint { a: lc(1), b: lc(0), c: lc(2) };
    R1CSInstance::new(
        q.clone(),
        vec![VarClass::One, VarClass::PrivateInput, VarClass::PublicOutput],
        vec![row(), row()],
        vec![],
    )
    .unwrap()
}

#[test]
fn single_row_pool_on_redundant_circuit_finds_nothing() {
    let inst = doubly_pinned();
    let q = inst.modulus().clone();
    let w = Witness::new(vec![FieldElement::one(&q), FieldElement::from_u64(&q, 4), FieldElement::from_u64(&q, 4)])
        .unwrap();
    for crypto in [CryptoSelfTest::Run, CryptoSelfTest::ForceFail] {
        let cfg = RunConfig {
            slicer: SlicerConfig { pool_size: 1, ..SlicerConfig::default() },
            t_max: 1,
            crypto_self_test: crypto,
            ..RunConfig::default()
        };
        let out = run_pipeline(&inst, None, Some(&w), &cfg).unwrap();
        assert!(!out.found());
        assert_eq!(out.manifest.status, "none");
        assert!(out.counter_used <= 1);
    }
    // Both rows together can move the output.
    let cfg = RunConfig { t_max: 2, ..RunConfig::default() };
    assert!(run_pipeline(&inst, None, Some(&w), &cfg).unwrap().found());
}

#[test]
fn call_budget_caps() {
    assert_eq!(SearchBudget::new(3, 2).max_calls, 6);
    assert_eq!(SearchBudget::new(5, 3).max_calls, 25);
    assert_eq!(SearchBudget::new(8, 3).max_calls, 92);
}

#[test]
fn written_artifacts_use_the_circuit_stem() {
    let cfg = RunConfig { emit_smt2: true, t_max: 2, ..RunConfig::default() };
    let out = toy_run(&cfg);
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path(), "toy").unwrap();
    let mut names: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(
        names,
        [
            "counterexample.json",
            "manifest.json",
            "proof.bin",
            "timings.json",
            "toy.mutated.circom",
            "toy.t1.smt2",
            "toy.t2.smt2"
        ]
    );
    let bytes = std::fs::read(dir.path().join("proof.bin")).unwrap();
    assert_eq!(bytes, out.findings[0].proof.as_ref().unwrap().to_bytes());
}
