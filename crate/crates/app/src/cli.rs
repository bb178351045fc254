//! The `umis` command line. Every command except `serve` writes a
//! [`RunManifest`] next to its outputs; `replay` reruns one and checks the
//! output digests.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use umis_core::bn::{BayesNet, DEFAULT_TYPE_CAP};
use umis_core::encoding::encode;
use umis_core::eval::{self, TestSet};
use umis_core::graphgen::{self, GenSpec};
use umis_core::infer::{self, Method, MethodSpec, ResultRecord};
use umis_core::umnet::{self, Checkpoint, Marginaliser, UmConfig};

use crate::error::AppError;
use crate::evidence::parse_evidence_bytes;
use crate::manifest::{default_manifest_path, sha256_hex, RunManifest};
use crate::service::{self, ServiceConfig, ServiceState};

#[derive(Debug, Parser)]
#[command(name = "umis", version, about = "Amortised importance sampling for binary Bayesian networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic layered network.
    Gen(GenArgs),
    /// Train a marginaliser on prior samples of a network.
    Train(TrainArgs),
    /// Posterior marginals for one evidence file.
    Infer(InferArgs),
    /// Convergence curves of several methods over a test set.
    Bench(BenchArgs),
    /// Draw an evidence test set with reference posteriors.
    Testset(TestsetArgs),
    /// Embeddings (and optionally a 2-d projection) of saved evidence sets.
    Embed(EmbedArgs),
    /// Serve the HTTP inference API.
    Serve(ServeArgs),
    /// Rerun a command from its manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Named spec: s96, s384, s768 or s1536.
    #[arg(long, conflicts_with_all = ["layers", "per_layer", "max_parents", "concentration", "seed"])]
    preset: Option<String>,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    per_layer: usize,
    #[arg(long, default_value_t = 3)]
    max_parents: usize,
    /// CPT entries are drawn from Beta(c, c).
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    steps: u64,
    /// Marginaliser configuration as JSON; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to `<out>.loss.csv`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    net: PathBuf,
    /// Required by every method except `prior`.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    evidence: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    testset: PathBuf,
    /// Comma-separated `method[:beta]`, e.g. `prior,um-seq:0,um-seq:0.1`.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_method_spec)]
    methods: Vec<MethodSpec>,
    #[arg(long, value_delimiter = ',', required = true)]
    m_grid: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Defaults to `<out-dir>/manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestsetArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long, default_value_t = 50)]
    cases: usize,
    #[arg(long, default_value_t = 1)]
    min_evidence: usize,
    #[arg(long, default_value_t = 4)]
    max_evidence: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use a likelihood-weighting run of this many samples as truth instead
    /// of exact enumeration (for networks above 24 nodes).
    #[arg(long)]
    truth_samples: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Every `*.json` file in here is one evidence set; ids follow file-name order.
    #[arg(long)]
    evidence_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Largest sample count a request may ask for.
    #[arg(long, default_value_t = service::DEFAULT_MAX_M)]
    max_m: usize,
    /// Evidence sets whose embeddings fix the 2-d projection basis.
    #[arg(long, default_value_t = 256)]
    basis_cases: usize,
    #[arg(long, default_value_t = 0)]
    basis_seed: u64,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method {s:?} (expected prior, um, um-naive or um-seq)"))
}

fn parse_method_spec(s: &str) -> Result<MethodSpec, String> {
    let (name, beta) = match s.split_once(':') {
        Some((name, b)) => (name, b.parse::<f64>().map_err(|e| format!("beta {b:?}: {e}"))?),
        None => (s, 0.0),
    };
    if !(0.0..=1.0).contains(&beta) {
        return Err(format!("beta must lie in [0, 1], got {beta}"));
    }
    Ok(MethodSpec {
        method: parse_method(name)?,
        beta,
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => AppError::Usage(String::new()).exit_code(),
            };
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, &recorded) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command; returns its manifest (none for `serve`).
fn execute(command: Command, args: &[String]) -> Result<Option<RunManifest>, AppError> {
    let started = Instant::now();
    let (mut manifest, manifest_path) = match command {
        Command::Gen(a) => cmd_gen(a, args)?,
        Command::Train(a) => cmd_train(a, args)?,
        Command::Infer(a) => cmd_infer(a, args)?,
        Command::Bench(a) => cmd_bench(a, args)?,
        Command::Testset(a) => cmd_testset(a, args)?,
        Command::Embed(a) => cmd_embed(a, args)?,
        Command::Serve(a) => return cmd_serve(a).map(|()| None),
        Command::Replay(a) => return cmd_replay(a).map(|()| None),
    };
    manifest.wall_time = started.elapsed().as_secs_f64();
    manifest.save(&manifest_path)?;
    Ok(Some(manifest))
}

fn load_net(manifest: &mut RunManifest, path: &Path) -> Result<BayesNet, AppError> {
    let bytes = manifest.read_input(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| AppError::validation(format!("{} is not UTF-8", path.display())))?;
    Ok(BayesNet::from_json_str(text, DEFAULT_TYPE_CAP)?)
}

fn load_model(manifest: &mut RunManifest, path: &Path) -> Result<Marginaliser, AppError> {
    let bytes = manifest.read_input(path)?;
    Ok(Checkpoint::from_bytes(&bytes)?.model)
}

fn load_model_for(manifest: &mut RunManifest, path: Option<&Path>, net: &BayesNet) -> Result<Option<Marginaliser>, AppError> {
    let Some(path) = path else { return Ok(None) };
    let model = load_model(manifest, path)?;
    model.check_net(net)?;
    Ok(Some(model))
}

fn manifest_path(explicit: Option<PathBuf>, primary: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| default_manifest_path(primary))
}

fn cmd_gen(a: GenArgs, args: &[String]) -> Result<(RunManifest, PathBuf), AppError> {
    let mut manifest = RunManifest::new("gen", args);
    let spec = match &a.preset {
        Some(name) => graphgen::preset(name)?,
        None => GenSpec {
            seed: a.seed,
            layers: a.layers,
            nodes_per_layer: a.per_layer,
            max_parents: a.max_parents,
            cpt_concentration: a.concentration,
        },
    };
    let net = graphgen::generate(&spec)?;
    manifest.config = json!({ "preset": a.preset, "spec": spec });
    manifest.seeds.insert("graph".into(), spec.seed);
    manifest.write_output(&a.out, net.to_json_string().as_bytes())?;
    Ok((manifest, manifest_path(a.manifest, &a.out)))
}

fn cmd_train(a: TrainArgs, args: &[String]) -> Result<(RunManifest, PathBuf), AppError> {
    let mut manifest = RunManifest::new("train", args);
    let net = load_net(&mut manifest, &a.net)?;
    let base: UmConfig = match &a.config {
        Some(path) => {
            let bytes = manifest.read_input(path)?;
            serde_json::from_slice(&bytes)
                .map_err(|e| AppError::validation(format!("config {}: {e}", path.display())))?
        }
        None => UmConfig::default(),
    };
    if base.n_nodes != 0 && base.n_nodes != net.len() {
        return Err(AppError::validation(format!(
            "config is for {} nodes, network has {}",
            base.n_nodes,
            net.len()
        )));
    }
    let mut config = base.for_net(&net);
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate()?;
    let outcome = umnet::train_stream(&net, &config, a.steps)?;
    manifest.config = json!({ "model": config, "steps": a.steps });
    manifest.seeds.insert("train".into(), config.seed);
    let ckpt = Checkpoint {
        model: outcome.model.clone(),
        steps: outcome.steps,
    };
    manifest.write_output(&a.out, &ckpt.to_bytes())?;
    let loss_path = a.loss_csv.unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".loss.csv");
        PathBuf::from(s)
    });
    manifest.write_output(&loss_path, outcome.loss_csv().as_bytes())?;
    Ok((manifest, manifest_path(a.manifest, &a.out)))
}

fn cmd_infer(a: InferArgs, args: &[String]) -> Result<(RunManifest, PathBuf), AppError> {
    let mut manifest = RunManifest::new("infer", args);
    let net = load_net(&mut manifest, &a.net)?;
    let model = load_model_for(&mut manifest, a.ckpt.as_deref(), &net)?;
    let evidence = parse_evidence_bytes(&manifest.read_input(&a.evidence)?, net.len())?;
    let spec = MethodSpec {
        method: a.method,
        beta: a.beta,
    };
    let result = infer::run_method(&net, model.as_ref(), &evidence, spec, a.m, a.seed)?;
    manifest.config = json!({ "method": spec.method, "beta": spec.beta, "m": a.m });
    manifest.seeds.insert("inference".into(), a.seed);
    let mut text = serde_json::to_string_pretty(&ResultRecord::new(&result, spec, a.seed)).expect("record serializes");
    text.push('\n');
    manifest.write_output(&a.out, text.as_bytes())?;
    eprintln!("inference took {:.3} s", result.wall_time);
    Ok((manifest, manifest_path(a.manifest, &a.out)))
}

fn spec_label(spec: &MethodSpec) -> String {
    match spec.method {
        Method::UmSeq => format!("{}_beta{}", spec.method, spec.beta),
        _ => spec.method.to_string(),
    }
}

fn cmd_bench(a: BenchArgs, args: &[String]) -> Result<(RunManifest, PathBuf), AppError> {
    let mut manifest = RunManifest::new("bench", args);
    let net = load_net(&mut manifest, &a.net)?;
    let model = load_model_for(&mut manifest, a.ckpt.as_deref(), &net)?;
    let set: TestSet = serde_json::from_slice(&manifest.read_input(&a.testset)?)
        .map_err(|e| AppError::validation(format!("test set {}: {e}", a.testset.display())))?;
    set.check(&net)?;
    if a.m_grid.contains(&0) {
        return Err(AppError::validation("m-grid entries must be positive"));
    }
    let labels: Vec<String> = a.methods.iter().map(spec_label).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(AppError::validation(format!("method {l} is listed twice")));
        }
    }
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| AppError::runtime(format!("cannot create {}: {e}", a.out_dir.display())))?;
    for (spec, label) in a.methods.iter().zip(&labels) {
        let rows = eval::convergence_curve(&net, model.as_ref(), &set, *spec, &a.m_grid, a.seed)?;
        let csv = eval::curve_csv(&rows)?;
        manifest.write_output(&a.out_dir.join(format!("{label}.csv")), csv.as_bytes())?;
    }
    manifest.config = json!({ "methods": a.methods, "m_grid": a.m_grid });
    manifest.seeds.insert("bench".into(), a.seed);
    let path = a.manifest.unwrap_or_else(|| a.out_dir.join("manifest.json"));
    Ok((manifest, path))
}

fn cmd_testset(a: TestsetArgs, args: &[String]) -> Result<(RunManifest, PathBuf), AppError> {
    let mut manifest = RunManifest::new("testset", args);
    let net = load_net(&mut manifest, &a.net)?;
    if a.min_evidence > a.max_evidence {
        return Err(AppError::validation("min-evidence exceeds max-evidence"));
    }
    let sizes = a.min_evidence..=a.max_evidence;
    let set = match a.truth_samples {
        Some(m) => eval::make_testset_sampled(&net, a.cases, sizes, a.seed, m)?,
        None => eval::make_testset(&net, a.cases, sizes, a.seed)?,
    };
    manifest.config = json!({
        "cases": a.cases,
        "min_evidence": a.min_evidence,
        "max_evidence": a.max_evidence,
        "truth_samples": a.truth_samples,
    });
    manifest.seeds.insert("testset".into(), a.seed);
    manifest.write_output(&a.out, set.to_json_string().as_bytes())?;
    Ok((manifest, manifest_path(a.manifest, &a.out)))
}

fn cmd_embed(a: EmbedArgs, args: &[String]) -> Result<(RunManifest, PathBuf), AppError> {
    let mut manifest = RunManifest::new("embed", args);
    let model = load_model(&mut manifest, &a.ckpt)?;
    let n = model.n_nodes();
    let entries = std::fs::read_dir(&a.evidence_dir)
        .map_err(|e| AppError::validation(format!("cannot list {}: {e}", a.evidence_dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AppError::validation(format!("no .json files in {}", a.evidence_dir.display())));
    }
    let mut embeddings = Vec::with_capacity(files.len());
    for f in &files {
        let ev = parse_evidence_bytes(&manifest.read_input(f)?, n)
            .map_err(|e| AppError::validation(format!("{}: {e}", f.display())))?;
        embeddings.push(model.extract_embedding(&encode(&ev, n))?);
    }
    let ids: Vec<usize> = (0..files.len()).collect();
    manifest.write_output(&a.out, eval::embedding_csv(&ids, &embeddings)?.as_bytes())?;
    if let Some(pca_path) = &a.pca {
        let pca = eval::pca_2d(&embeddings)?;
        manifest.write_output(pca_path, eval::projection_csv(&ids, &pca.coords)?.as_bytes())?;
    }
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    manifest.config = json!({ "files": names });
    Ok((manifest, manifest_path(a.manifest, &a.out)))
}

fn cmd_serve(a: ServeArgs) -> Result<(), AppError> {
    let net_bytes = std::fs::read(&a.net)
        .map_err(|e| AppError::validation(format!("cannot read {}: {e}", a.net.display())))?;
    let ckpt_bytes = std::fs::read(&a.ckpt)
        .map_err(|e| AppError::validation(format!("cannot read {}: {e}", a.ckpt.display())))?;
    let text = std::str::from_utf8(&net_bytes)
        .map_err(|_| AppError::validation(format!("{} is not UTF-8", a.net.display())))?;
    let net = BayesNet::from_json_str(text, DEFAULT_TYPE_CAP)?;
    let model = Checkpoint::from_bytes(&ckpt_bytes)?.model;
    let config = ServiceConfig {
        max_m: a.max_m,
        basis_cases: a.basis_cases,
        basis_seed: a.basis_seed,
    };
    let state = ServiceState::new(net, model, sha256_hex(&net_bytes), sha256_hex(&ckpt_bytes), &config)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| AppError::validation(format!("bad address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(AppError::runtime)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(AppError::runtime)?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(AppError::runtime)?);
        axum::serve(listener, service::router(Arc::new(state)))
            .await
            .map_err(AppError::runtime)
    })
}

fn cmd_replay(a: ReplayArgs) -> Result<(), AppError> {
    let recorded = RunManifest::load(&a.manifest)?;
    let mut argv = vec![String::from("umis")];
    argv.extend(recorded.args.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| AppError::validation(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Serve(_) | Command::Replay(_)) {
        return Err(AppError::validation(format!("cannot replay `{}`", recorded.command)));
    }
    let fresh = execute(cli.command, &recorded.args)?.expect("file-producing command");
    let mut mismatched = Vec::new();
    for (path, digest) in &recorded.outputs {
        if fresh.outputs.get(path) != Some(digest) {
            mismatched.push(path.clone());
        }
    }
    if !mismatched.is_empty() {
        return Err(AppError::runtime(format!("outputs differ from the manifest: {}", mismatched.join(", "))));
    }
    println!("reproduced {} output(s) of `{}`", recorded.outputs.len(), recorded.command);
    Ok(())
}
