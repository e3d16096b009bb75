//! `tlc`: transform, run, check and measure programs of the structured tensor compiler.

mod tensor_file;

use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tlc::interp::{run_function, Dense, ExecTrace};
use tlc::ir::{parse_module, print_module, verify_module, Function, Module};
use tlc::metrics::{estimate_depthwise_volume, report_metrics, DepthwiseParams};
use tlc::pipeline::{check_stages, parse_pipeline, run_pipeline, OptValue, PipelineSpec};

use tensor_file::TensorFile;

#[derive(Debug, Parser)]
#[command(name = "tlc", version, about = "Structured tensor compiler driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply a pipeline and print the resulting module.
    Opt(PipelineArgs),
    /// Execute a function on tensor files and print its results.
    Run {
        #[command(flatten)]
        p: PipelineArgs,
        #[command(flatten)]
        io: InputArgs,
        /// Also report buffer accesses and iteration points.
        #[arg(long)]
        trace: bool,
    },
    /// Apply a pipeline and compare every stage against the input program.
    Check {
        #[command(flatten)]
        p: PipelineArgs,
        #[command(flatten)]
        io: InputArgs,
        /// Relative tolerance for floating-point results; integers compare exactly.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Print op counts, allocation and copy counts and the maximum vector rank.
    Metrics(PipelineArgs),
    /// Estimate the data volume of a depthwise convolution.
    Volume(VolumeArgs),
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Module in textual IR form.
    file: String,
    /// Pass pipeline, e.g. `tile{sizes=[4,4,8]},vectorize,bufferize`.
    #[arg(long, default_value = "")]
    pipeline: String,
    /// Keep (and for `opt`, print) the module after every pass.
    #[arg(long)]
    checkpoints: bool,
    /// Analysis order for bufferize passes that do not set one.
    #[arg(long, value_parser = ["forward", "reverse"])]
    order: Option<String>,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Function to execute; defaults to the first one.
    #[arg(long = "fn")]
    func: Option<String>,
    /// Comma-separated tensor files, one per argument. Without it, arguments get a fixed ramp.
    #[arg(long, value_delimiter = ',')]
    inputs: Vec<String>,
}

#[derive(Debug, Args)]
struct VolumeArgs {
    #[arg(long, default_value_t = 1)]
    n: i64,
    #[arg(long)]
    c: i64,
    #[arg(long, default_value_t = 1)]
    h: i64,
    #[arg(long)]
    w: i64,
    #[arg(long, default_value_t = 1)]
    kh: i64,
    #[arg(long)]
    kw: i64,
    /// Strides as `h,w`.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 1])]
    strides: Vec<i64>,
    /// Dilations as `h,w`.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 1])]
    dilations: Vec<i64>,
    #[arg(long, default_value_t = 4)]
    elem_bytes: i64,
}

fn load(p: &PipelineArgs) -> Result<(Module, PipelineSpec)> {
    let text = std::fs::read_to_string(&p.file).with_context(|| format!("reading {}", p.file))?;
    let m = parse_module(&text).with_context(|| p.file.clone())?;
    let diags = verify_module(&m);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        bail!("{} does not verify:\n{}", p.file, lines.join("\n"));
    }
    let mut spec = parse_pipeline(&p.pipeline)?;
    if let Some(order) = &p.order {
        for pass in spec.passes.iter_mut().filter(|s| s.name == "bufferize" && s.get("order").is_none()) {
            pass.options.push(("order".into(), OptValue::Word(order.clone())));
        }
    }
    Ok((m, spec))
}

fn function<'a>(m: &'a Module, name: &Option<String>) -> Result<&'a Function> {
    match name {
        Some(n) => m.function(n).with_context(|| format!("no function @{n}")),
        None => m.functions.first().context("module has no functions"),
    }
}

/// Deterministic ramp in [-5, 5], matching the test-suite inputs.
fn ramp(f: &Function) -> Result<Vec<Dense>> {
    f.args()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let t = f.ty(a);
            let shape = t.static_shape().with_context(|| format!("argument {i} has dynamic type {t}; pass --inputs"))?;
            let n: i64 = shape.iter().product();
            let data: Vec<i64> = (0..n).map(|k| (k * 7 + i as i64) % 11 - 5).collect();
            Ok(Dense::from_i64(t.elem(), shape, &data))
        })
        .collect()
}

fn inputs(f: &Function, io: &InputArgs) -> Result<Vec<Dense>> {
    if io.inputs.is_empty() {
        return ramp(f);
    }
    if io.inputs.len() != f.args().len() {
        bail!("@{} takes {} arguments but {} input files were given", f.name, f.args().len(), io.inputs.len());
    }
    io.inputs.iter().map(|p| tensor_file::read(p)).collect()
}

fn tensors(ds: &[Dense]) -> Value {
    json!(ds.iter().map(TensorFile::from_dense).collect::<Vec<_>>())
}

/// Runs a subcommand; `Ok(false)` means a requested check failed.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Opt(p) => {
            let (m, spec) = load(&p)?;
            let (out, stages) = run_pipeline(&m, &spec, p.checkpoints)?;
            if p.checkpoints {
                for (i, s) in stages.iter().enumerate() {
                    println!("// stage {i}: {}\n{}", s.label, print_module(&s.module));
                }
            } else {
                print!("{}", print_module(&out));
            }
        }
        Command::Run { p, io, trace } => {
            let (m, spec) = load(&p)?;
            let (out, _) = run_pipeline(&m, &spec, false)?;
            let f = function(&out, &io.func)?;
            let args = inputs(function(&m, &io.func)?, &io)?;
            if trace {
                let mut t = ExecTrace::default();
                let results = run_function(f, &args, Some(&mut t))?;
                let reads = t.mem.iter().filter(|e| !e.write).count();
                let writes = t.mem.len() - reads;
                let summary = json!({
                    "points": t.visits.len(),
                    "reads": reads,
                    "writes": writes,
                    "oob_reads": t.oob_reads,
                    "oob_writes": t.oob_writes,
                });
                println!("{}", json!({ "outputs": tensors(&results), "trace": summary }));
            } else {
                println!("{}", tensors(&run_function(f, &args, None)?));
            }
        }
        Command::Check { p, io, tol } => {
            let (m, spec) = load(&p)?;
            let (_, stages) = run_pipeline(&m, &spec, true)?;
            let f = function(&m, &io.func)?;
            let args = inputs(f, &io)?;
            let reports = check_stages(&stages, &f.name, &args, tol)?;
            let ok = reports.iter().all(|r| r.pass());
            let rows: Vec<Value> = reports
                .iter()
                .map(|r| match &r.outcome {
                    Ok(diffs) => json!({
                        "stage": r.stage,
                        "pass": r.pass(),
                        "label": r.label,
                        "max_rel_err": diffs.iter().map(|d| d.max_rel_err).fold(0.0, f64::max),
                        "messages": diffs.iter().filter(|d| !d.pass).map(|d| d.message.clone()).collect::<Vec<_>>(),
                    }),
                    Err(e) => json!({ "stage": r.stage, "pass": false, "label": r.label, "error": e }),
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&json!({ "pass": ok, "stages": rows }))?);
            return Ok(ok);
        }
        Command::Metrics(p) => {
            let (m, spec) = load(&p)?;
            let (out, _) = run_pipeline(&m, &spec, false)?;
            let r = report_metrics(&out);
            let report = json!({
                "op_counts": r.op_counts,
                "allocs": r.allocs,
                "copies": r.copies,
                "max_vector_rank": r.max_vector_rank,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Volume(v) => {
            let pair = |x: &[i64], what: &str| -> Result<[i64; 2]> {
                match x {
                    [a, b] => Ok([*a, *b]),
                    [b] => Ok([1, *b]),
                    _ => bail!("--{what} takes one or two values"),
                }
            };
            let params = DepthwiseParams {
                n: v.n,
                c: v.c,
                h: v.h,
                w: v.w,
                kh: v.kh,
                kw: v.kw,
                strides: pair(&v.strides, "strides")?,
                dilations: pair(&v.dilations, "dilations")?,
                elem_bytes: v.elem_bytes,
            };
            if [params.n, params.c, params.h, params.w, params.kh, params.kw, params.elem_bytes].iter().any(|&x| x <= 0)
                || params.strides.iter().chain(&params.dilations).any(|&x| x <= 0)
            {
                bail!("volume parameters must be positive");
            }
            let r = estimate_depthwise_volume(&params);
            let report = json!({
                "h_in": params.h_in(),
                "w_in": params.w_in(),
                "gcd_factor": r.gcd_factor,
                "elements": r.elements.to_string(),
                "elements_approx": *r.elements.numer() as f64 / *r.elements.denom() as f64,
                "bytes": r.bytes.to_string(),
                "touched_inputs": r.touched_inputs,
                "enumerated_elements": r.enumerated_elements,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
