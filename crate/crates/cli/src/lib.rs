//! Command-line front end: one subcommand per pipeline stage, text reports
//! with one `key=value` (or `metric value`) per line, OBJ for meshes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use quadkit::assembly::{
    assemble_mesh, AssemblyConfig, EuclideanSpace, FaceKind, FeatureSpace, FileFeatures,
    IncidenceOracle,
};
use quadkit::goldberg::{goldberg_with, validate_counts, DualPlacement, GoldbergParams};
use quadkit::linkloss::{triplet_loss, EmbeddingBatch};
use quadkit::matching::write_edge_list;
use quadkit::mesh::{load_obj, normalize_unit_cube, save_obj};
use quadkit::metrics::{
    chamfer, efc, efr, hausdorff, oep, quad_ratio, sample_surface, voxel_iou, EfrConfig,
    DEFAULT_IOU_RESOLUTION, DEFAULT_SAMPLES,
};
use quadkit::tokenizer::{
    decode_with, encode, format_tokens, parse_token_lines, SequenceMode, TokenizerConfig,
};
use quadkit::tri2quad::{build_graph, convert, MergeMode, OperatorConfig};
use quadkit::verify::VerifyConfig;
use quadkit::{AnchorSet, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Keys accepted in a `--config` file besides the verification keys.
const CONFIG_KEYS: &[&str] = &[
    "seed",
    "threads",
    "mode",
    "alpha1",
    "alpha2",
    "prefilter",
    "top_k",
    "pool_max",
    "resolution",
    "per_axis",
    "samples",
    "iou_resolution",
    "tau",
    "sharp_dihedral_deg",
    "k",
    "margin",
];
const VERIFY_KEYS: &[&str] = &[
    "theta_min",
    "theta_max",
    "dihedral_max",
    "tau_quad",
    "tau_tri",
    "enable_convexity",
    "enable_dihedral",
    "enable_centroid",
];

#[derive(Parser, Debug)]
#[command(name = "quadkit", version, about = "Quad-dominant mesh toolkit")]
struct Cli {
    /// Seed for every random choice (surface sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print timings and extra detail to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Flat `key = value` file supplying defaults; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Merge triangle pairs into quads by weighted matching.
    Tri2quad(Tri2QuadArgs),
    /// Assemble faces from anchors by feature-space retrieval.
    Assemble(AssembleArgs),
    /// Encode an anchor file into a token sequence.
    Tokenize(TokenizeArgs),
    /// Decode a token sequence back into an anchor file.
    Detokenize(TokenizeArgs),
    /// Compare a predicted mesh against ground truth.
    Metrics(MetricsArgs),
    /// Generate a Goldberg polyhedron.
    Goldberg(GoldbergArgs),
    /// Triplet loss utilities.
    Linkloss {
        #[command(subcommand)]
        action: LinklossAction,
    },
    /// Extract vertices and face centroids from an OBJ.
    Anchors(AnchorsArgs),
}

#[derive(Args, Debug, Default)]
struct VerifyArgs {
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    #[arg(long)]
    dihedral_max: Option<f64>,
    #[arg(long)]
    tau_quad: Option<f64>,
    #[arg(long)]
    tau_tri: Option<f64>,
    #[arg(long)]
    enable_convexity: Option<bool>,
    #[arg(long)]
    enable_dihedral: Option<bool>,
    #[arg(long)]
    enable_centroid: Option<bool>,
}

#[derive(Args, Debug)]
struct Tri2QuadArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// global (maximum-weight matching) or greedy.
    #[arg(long)]
    mode: Option<MergeMode>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    /// Apply the angle, convexity and dihedral gate to candidates.
    #[arg(long)]
    prefilter: Option<bool>,
    /// Write the matching graph as a `u v w selected` edge list.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    #[command(flatten)]
    verify: VerifyArgs,
}

#[derive(Args, Debug)]
#[group(id = "space", required = true, multiple = false, args = ["features", "euclidean", "oracle"])]
struct AssembleArgs {
    #[arg(long)]
    anchors: PathBuf,
    /// Per-anchor embeddings (`features <count> <dim>` file).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Retrieve by raw coordinates.
    #[arg(long)]
    euclidean: bool,
    /// Ground-truth mesh whose faces define perfect retrieval.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    pool_max: Option<usize>,
    #[command(flatten)]
    verify: VerifyArgs,
}

#[derive(Args, Debug)]
struct TokenizeArgs {
    /// single, dual, dual_separate or single_separate.
    #[arg(long)]
    mode: Option<SequenceMode>,
    /// Separate vocabulary range per axis.
    #[arg(long)]
    per_axis: Option<bool>,
    #[arg(long)]
    resolution: Option<u32>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    cd: bool,
    #[arg(long)]
    hd: bool,
    #[arg(long)]
    iou: bool,
    #[arg(long)]
    qr: bool,
    #[arg(long)]
    oep: bool,
    #[arg(long)]
    efc: bool,
    #[arg(long)]
    efr: bool,
    /// Surface samples per mesh for CD and HD.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    iou_resolution: Option<usize>,
    /// EFR score temperature.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sharp_dihedral_deg: Option<f64>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GoldbergArgs {
    #[arg(long)]
    m: u32,
    #[arg(long)]
    n: u32,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Check vertex, edge, face and pentagon counts.
    #[arg(long)]
    validate: bool,
    /// Place dual vertices at face-plane poles so every face is planar.
    #[arg(long)]
    planar: bool,
}

#[derive(Subcommand, Debug)]
enum LinklossAction {
    /// Hard-mined triplet loss of an embedding batch.
    Eval {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct AnchorsArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Rescale the mesh into [-1, 1]^3 first.
    #[arg(long)]
    normalize: bool,
}

/// Failure of one invocation, mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Config-file values, consulted only when a flag is absent.
struct Settings {
    values: HashMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> std::result::Result<Self, Failure> {
        let mut values = HashMap::new();
        let Some(path) = path else {
            return Ok(Settings { values });
        };
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => line
                    .split_once(char::is_whitespace)
                    .map(|(k, v)| (k, v.trim()))
                    .ok_or_else(|| {
                        Failure::Data(Error::Parse {
                            line: i + 1,
                            msg: format!("expected `key = value`, got `{line}`"),
                        })
                    })?,
            };
            if !CONFIG_KEYS.contains(&k) && !VERIFY_KEYS.contains(&k) {
                return Err(Failure::Data(Error::Config(format!(
                    "unknown config key `{k}`"
                ))));
            }
            values.insert(k.to_string(), v.to_string());
        }
        Ok(Settings { values })
    }

    fn get<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> std::result::Result<T, Failure> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw.parse().map_err(|_| {
                Failure::Data(Error::Config(format!("config {key}: cannot parse `{raw}`")))
            }),
            None => Ok(default),
        }
    }

    fn verify(
        &self,
        base: VerifyConfig,
        flags: &VerifyArgs,
    ) -> std::result::Result<VerifyConfig, Failure> {
        let mut cfg = base;
        for key in VERIFY_KEYS {
            if let Some(v) = self.values.get(*key) {
                cfg.set(key, v)?;
            }
        }
        let nums = [
            ("theta_min", flags.theta_min),
            ("theta_max", flags.theta_max),
            ("dihedral_max", flags.dihedral_max),
            ("tau_quad", flags.tau_quad),
            ("tau_tri", flags.tau_tri),
        ];
        for (key, v) in nums {
            if let Some(v) = v {
                cfg.set(key, &v.to_string())?;
            }
        }
        let bools = [
            ("enable_convexity", flags.enable_convexity),
            ("enable_dihedral", flags.enable_dihedral),
            ("enable_centroid", flags.enable_centroid),
        ];
        for (key, v) in bools {
            if let Some(v) = v {
                cfg.set(key, &v.to_string())?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn io_failure(path: &Path, source: std::io::Error) -> Failure {
    Failure::Data(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn read_file(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

struct Ctx<'a> {
    settings: Settings,
    seed: u64,
    verbose: u8,
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn say(&mut self, line: &str) {
        let _ = writeln!(self.out, "{line}");
    }

    fn note(&mut self, line: &str) {
        if self.verbose > 0 {
            let _ = writeln!(self.err, "{line}");
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(argv: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let outcome = (|| {
        let settings = Settings::load(cli.config.as_deref())?;
        let seed = settings.get(cli.seed, "seed", 0u64)?;
        let threads = settings.get(cli.threads, "threads", 0usize)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Failure::Usage(format!("cannot start {threads} threads: {e}")))?;
        let mut ctx = Ctx {
            settings,
            seed,
            verbose: cli.verbose,
            out: &mut *out,
            err: &mut *err,
        };
        pool.install(|| dispatch(&cli.command, &mut ctx))
    })();
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Outcome {
    let start = Instant::now();
    let result = match cmd {
        Command::Tri2quad(a) => tri2quad(a, ctx),
        Command::Assemble(a) => assemble(a, ctx),
        Command::Tokenize(a) => tokenize(a, ctx),
        Command::Detokenize(a) => detokenize(a, ctx),
        Command::Metrics(a) => metrics(a, ctx),
        Command::Goldberg(a) => goldberg(a, ctx),
        Command::Linkloss {
            action: LinklossAction::Eval { batch, k, margin },
        } => linkloss_eval(batch, *k, *margin, ctx),
        Command::Anchors(a) => anchors(a, ctx),
    };
    ctx.note(&format!("elapsed={:.3}s", start.elapsed().as_secs_f64()));
    result
}

fn tri2quad(a: &Tri2QuadArgs, ctx: &mut Ctx) -> Outcome {
    let s = &ctx.settings;
    let base = OperatorConfig::default();
    let cfg = OperatorConfig {
        alpha1: s.get(a.alpha1, "alpha1", base.alpha1)?,
        alpha2: s.get(a.alpha2, "alpha2", base.alpha2)?,
        verify: s.verify(base.verify, &a.verify)?,
        mode: s.get(a.mode, "mode", base.mode)?,
        prefilter: s.get(a.prefilter, "prefilter", base.prefilter)?,
    };
    let mesh = load_obj(&a.input)?;
    let result = convert(&mesh, &cfg)?;
    save_obj(&result.mesh, &a.output)?;
    if let Some(path) = &a.dump_graph {
        let (graph, _) = build_graph(mesh.faces.len(), &result.candidates);
        write_file(path, &write_edge_list(&graph, Some(&result.matching)))?;
    }
    ctx.say(&result.summary());
    Ok(())
}

fn assemble(a: &AssembleArgs, ctx: &mut Ctx) -> Outcome {
    let s = &ctx.settings;
    let base = AssemblyConfig::default();
    let cfg = AssemblyConfig {
        top_k: s.get(a.top_k, "top_k", base.top_k)?,
        pool_max: s.get(a.pool_max, "pool_max", base.pool_max)?,
        verify: s.verify(base.verify, &a.verify)?,
    };
    let anchors = AnchorSet::load(&a.anchors)?;
    let space: Box<dyn FeatureSpace> = if let Some(path) = &a.oracle {
        Box::new(IncidenceOracle::new(&load_obj(path)?, &anchors)?)
    } else if let Some(path) = &a.features {
        Box::new(FileFeatures::load(path, &anchors)?)
    } else {
        Box::new(EuclideanSpace::new(&anchors))
    };
    let result = assemble_mesh(&anchors, space.as_ref(), &cfg)?;
    save_obj(&result.to_mesh(&anchors), &a.output)?;
    let quads = result
        .faces
        .iter()
        .filter(|f| f.kind == FaceKind::Quad)
        .count();
    ctx.say(&format!("recon_rate={:.4}", result.recon_rate()));
    ctx.say(&format!(
        "faces={} quads={} tris={} unresolved={}",
        result.faces.len(),
        quads,
        result.faces.len() - quads,
        result.unresolved.len()
    ));
    ctx.note(&format!(
        "feature_space={} recon_sec={:.3}",
        space.name(),
        result.duration.as_secs_f64()
    ));
    Ok(())
}

fn tokenizer_config(
    a: &TokenizeArgs,
    s: &Settings,
) -> std::result::Result<TokenizerConfig, Failure> {
    let base = TokenizerConfig::new(SequenceMode::Single, false);
    let mut cfg = TokenizerConfig::new(
        s.get(a.mode, "mode", base.mode)?,
        s.get(a.per_axis, "per_axis", base.per_axis)?,
    );
    cfg.resolution = s.get(a.resolution, "resolution", base.resolution)?;
    cfg.validate()?;
    Ok(cfg)
}

fn tokenize(a: &TokenizeArgs, ctx: &mut Ctx) -> Outcome {
    let cfg = tokenizer_config(a, &ctx.settings)?;
    let anchors = AnchorSet::load(&a.input)?;
    let seq = encode(&anchors, &cfg)?;
    write_file(&a.output, &format_tokens(&seq.tokens))?;
    ctx.say(&format!(
        "tokens={} vocab={}",
        seq.tokens.len(),
        quadkit::tokenizer::vocab_size(&cfg)
    ));
    Ok(())
}

fn detokenize(a: &TokenizeArgs, ctx: &mut Ctx) -> Outcome {
    let cfg = tokenizer_config(a, &ctx.settings)?;
    let lines = parse_token_lines(&read_file(&a.input)?)?;
    let [tokens] = lines.as_slice() else {
        return Err(Failure::Data(Error::Sequence(format!(
            "expected exactly one token sequence, found {}",
            lines.len()
        ))));
    };
    let anchors = decode_with(tokens, &cfg)?;
    anchors.save(&a.output)?;
    ctx.say(&format!(
        "vertices={} centroids={}",
        anchors.vertices.len(),
        anchors.centroids.len()
    ));
    Ok(())
}

fn metrics(a: &MetricsArgs, ctx: &mut Ctx) -> Outcome {
    let s = &ctx.settings;
    let samples = s.get(a.samples, "samples", DEFAULT_SAMPLES)?;
    let iou_res = s.get(a.iou_resolution, "iou_resolution", DEFAULT_IOU_RESOLUTION)?;
    let base = EfrConfig::default();
    let efr_cfg = EfrConfig {
        tau: s.get(a.tau, "tau", base.tau)?,
        sharp_dihedral_deg: s.get(
            a.sharp_dihedral_deg,
            "sharp_dihedral_deg",
            base.sharp_dihedral_deg,
        )?,
        ..base
    };
    efr_cfg.validate()?;
    let gt = load_obj(&a.gt)?;
    let pred = load_obj(&a.pred)?;
    let all = !(a.cd || a.hd || a.iou || a.qr || a.oep || a.efc || a.efr);
    let mut report = Vec::new();
    let mut line = |name: &str, v: quadkit::Result<f64>| -> Outcome {
        match v {
            Ok(x) => report.push(format!("{name} {x:.6}")),
            Err(Error::UndefinedMetric(why)) => report.push(format!("{name} undefined ({why})")),
            Err(e) => return Err(e.into()),
        }
        Ok(())
    };
    if all || a.cd || a.hd {
        let sa = sample_surface(&gt, samples, ctx.seed)?;
        let sb = sample_surface(&pred, samples, ctx.seed)?;
        if all || a.cd {
            line("cd", chamfer(&sa, &sb))?;
        }
        if all || a.hd {
            line("hd", hausdorff(&sa, &sb))?;
        }
    }
    if all || a.iou {
        line("iou", voxel_iou(&gt, &pred, iou_res).map(|r| r.iou))?;
    }
    if all || a.qr {
        line("qr", quad_ratio(&pred))?;
    }
    if all || a.oep {
        line("oep", oep(&pred))?;
    }
    if all || a.efc {
        line("efc", efc(&pred))?;
    }
    if all || a.efr {
        line("efr", efr(&gt, &pred, &efr_cfg).map(|r| r.efr))?;
    }
    let text = report.join("\n") + "\n";
    if let Some(path) = &a.report {
        write_file(path, &text)?;
    }
    let _ = write!(ctx.out, "{text}");
    Ok(())
}

fn goldberg(a: &GoldbergArgs, ctx: &mut Ctx) -> Outcome {
    let params = GoldbergParams::new(a.m, a.n)?;
    let placement = if a.planar {
        DualPlacement::Polar
    } else {
        DualPlacement::SphereCentroid
    };
    let mesh = goldberg_with(&params, placement)?;
    if let Some(path) = &a.output {
        save_obj(&mesh, path)?;
    }
    ctx.say(&format!(
        "T={} vertices={} faces={}",
        params.t(),
        mesh.vertices.len(),
        mesh.faces.len()
    ));
    if a.validate {
        let report = validate_counts(&mesh, &params);
        ctx.say(&report.to_string());
        if !report.passed() {
            return Err(Failure::Data(Error::Structure(
                "Goldberg counts do not match".into(),
            )));
        }
    }
    Ok(())
}

fn linkloss_eval(batch: &Path, k: Option<usize>, margin: Option<f64>, ctx: &mut Ctx) -> Outcome {
    let s = &ctx.settings;
    let k = s.get(k, "k", 20)?;
    let margin = s.get(margin, "margin", 0.2)?;
    let batch = EmbeddingBatch::load(batch)?;
    let loss = triplet_loss(&batch, k, margin)?;
    ctx.say(&format!("loss={loss}"));
    Ok(())
}

fn anchors(a: &AnchorsArgs, ctx: &mut Ctx) -> Outcome {
    let mut mesh = load_obj(&a.input)?;
    if a.normalize {
        mesh = normalize_unit_cube(&mesh)?;
    }
    let set = AnchorSet::from_mesh(&mesh);
    set.save(&a.output)?;
    ctx.say(&format!(
        "vertices={} centroids={}",
        set.vertices.len(),
        set.centroids.len()
    ));
    Ok(())
}
