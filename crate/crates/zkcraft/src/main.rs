use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use num_rational::BigRational;

use zkcraft::circuit::{attach_sites_json, parse_circuit_json, parse_r1cs_binary, parse_witness_json, R1CSInstance};
use zkcraft::driver::{run_pipeline, write_outputs, BackendChoice, RunConfig};
use zkcraft::extract::{assemble_counterexample, extract_selection, interpolate_witness, WitnessSource};
use zkcraft::ff::FieldModulus;
use zkcraft::oracle::OracleConfig;
use zkcraft::slicer::{ScoreConvention, SlicerConfig};
use zkcraft::viop::{verify, IopConfig, ViolationProof};
use zkcraft::vortex::choose_nodes;

#[derive(Parser)]
#[command(name = "zkcraft", version, about = "Search R1CS circuits for trace/constraint inconsistencies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Search a circuit for an edit whose trace satisfies the constraints but changes the output.
    Analyze(AnalyzeArgs),
    /// Re-verify a proof and re-extract its counterexample.
    Verify {
        proof: PathBuf,
        circuit: PathBuf,
        #[arg(long)]
        sites: Option<PathBuf>,
        #[arg(long)]
        field: Option<String>,
    },
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    circuit: PathBuf,
    #[arg(long)]
    sites: Option<PathBuf>,
    #[arg(long)]
    witness: Option<PathBuf>,
    #[arg(long)]
    program: Option<PathBuf>,
    /// test101, bn254scalar or a decimal prime; must match the circuit's own modulus.
    #[arg(long)]
    field: Option<String>,
    #[arg(long, default_value_t = 32)]
    pool_size: usize,
    #[arg(long, default_value_t = 3)]
    t_max: usize,
    /// Rational, e.g. 1 or 3/2.
    #[arg(long, default_value = "1")]
    lambda: String,
    #[arg(long, default_value = "1/2")]
    mu: String,
    #[arg(long, default_value = "methodology")]
    score_convention: ScoreConvention,
    #[arg(long, default_value = "auto")]
    backend: BackendChoice,
    /// builtin, subprocess:<cmd> or http:<url>
    #[arg(long, default_value = "builtin")]
    oracle: OracleConfig,
    #[arg(long)]
    oracle_seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    repetitions: usize,
    #[arg(long, default_value_t = 8)]
    input_samples: usize,
    #[arg(long)]
    attach_witness: bool,
    #[arg(long)]
    confirm_replay: bool,
    #[arg(long)]
    emit_smt2: bool,
    #[arg(long)]
    find_all: bool,
    #[arg(long, default_value = "zkcraft-out")]
    out_dir: PathBuf,
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let (n, d) = s.split_once('/').unwrap_or((s, "1"));
    let n: BigInt = n.trim().parse().with_context(|| format!("bad rational {s:?}"))?;
    let d: BigInt = d.trim().parse().with_context(|| format!("bad rational {s:?}"))?;
    if d == BigInt::from(0) {
        bail!("zero denominator in {s:?}");
    }
    Ok(BigRational::new(n, d))
}

fn load_circuit(path: &Path, sites: Option<&Path>, field: Option<&str>) -> Result<R1CSInstance> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut inst = if path.extension().is_some_and(|e| e == "r1cs") {
        parse_r1cs_binary(&bytes)?
    } else {
        parse_circuit_json(&bytes)?
    };
    if let Some(s) = sites {
        inst = attach_sites_json(inst, &fs::read(s).with_context(|| format!("reading {}", s.display()))?)?;
    }
    if let Some(f) = field {
        let want = FieldModulus::parse(f)?;
        if want.q() != inst.modulus().q() {
            bail!("--field {f} does not match the circuit modulus {}", inst.modulus().q());
        }
    }
    Ok(inst)
}

fn analyze(a: AnalyzeArgs) -> Result<bool> {
    let inst = load_circuit(&a.circuit, a.sites.as_deref(), a.field.as_deref())?;
    let witness = match &a.witness {
        Some(p) => Some(parse_witness_json(&inst, &fs::read(p)?)?),
        None => None,
    };
    let program = match &a.program {
        Some(p) => Some(fs::read_to_string(p)?),
        None => None,
    };
    let cfg = RunConfig {
        slicer: SlicerConfig {
            score_lambda: parse_rational(&a.lambda)?,
            score_mu: parse_rational(&a.mu)?,
            pool_size: a.pool_size,
            convention: a.score_convention,
        },
        t_max: a.t_max,
        backend: a.backend,
        oracle: a.oracle,
        seed: a.oracle_seed.unwrap_or(a.seed),
        attach_witness: a.attach_witness,
        confirm_replay: a.confirm_replay,
        emit_smt2: a.emit_smt2,
        repetitions: a.repetitions,
        input_samples: a.input_samples,
        find_all: a.find_all,
        ..RunConfig::default()
    };
    let out = run_pipeline(&inst, program.as_deref(), witness.as_ref(), &cfg)?;
    let name = a.circuit.file_stem().and_then(|s| s.to_str()).unwrap_or("circuit");
    write_outputs(&out, &a.out_dir, name)?;
    let m = &out.manifest;
    println!(
        "backend: {} (fallback_reason {})",
        m.backend.backend_id.map(|b| format!("{b:?}")).unwrap_or_else(|| "fallback".into()),
        m.backend.fallback_reason.as_str()
    );
    println!("pool: {:?}", m.pool.rows);
    println!("subsets evaluated: {} of cap {}", m.search.stats.subset_evaluations, m.search.stats.max_calls);
    match out.findings.first() {
        Some(f) => {
            println!("counterexample found; rows {:?}", m.findings[0].rows);
            println!("{}", f.counterexample.to_json());
        }
        None => println!("none"),
    }
    println!("artifacts in {}", a.out_dir.display());
    Ok(out.found())
}

fn verify_cmd(proof: &Path, circuit: &Path, sites: Option<&Path>, field: Option<&str>) -> Result<bool> {
    let inst = load_circuit(circuit, sites, field)?;
    let p = ViolationProof::from_bytes(&fs::read(proof)?)?;
    let h = &p.header;
    let plan = choose_nodes(inst.modulus(), h.k, h.d_row, h.d_sel)?;
    let cfg = IopConfig { repetitions: h.ell, commit_domain: Some(h.domain_size), ..IopConfig::default() };
    let acc = match verify(&p, &inst, &p.pool_rows, &plan, &p.y_orig, &cfg) {
        Ok(a) => a,
        Err(r) => {
            println!("rejected: {r}");
            return Ok(false);
        }
    };
    let edit = extract_selection(&acc)?;
    let Some(w) = interpolate_witness(&acc)? else {
        // Without W' the proof fixes the edit and y' but not the inputs.
        println!("accepted");
        let edit_json = serde_json::json!({
            "delta": edit.delta.iter().map(|&b| b as u8).collect::<Vec<_>>(),
            "c": edit.c.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            "y_prime": p.y_prime.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            "y_orig": p.y_orig.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&edit_json)?);
        return Ok(true);
    };
    let src = WitnessSource::InterpolatedWitness;
    let cx = assemble_counterexample(&inst, None, &edit, w, src, &p.y_orig, false)?;
    println!("accepted");
    println!("{}", cx.to_json());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Analyze(a) => analyze(a),
        Cmd::Verify { proof, circuit, sites, field } => {
            verify_cmd(&proof, &circuit, sites.as_deref(), field.as_deref())
        }
    };
    match res {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
