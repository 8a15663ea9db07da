use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use minsurf::analysis::analyze_jets;
use minsurf::cayley::{s6_type_classify, S6Class};
use minsurf::classify::{classify_surface, ricci_residual, theorem2_residuals, ClassificationReport};
use minsurf::flag::FlagOptions;
use minsurf::io::{self, Encoding, SCHEMA_VERSION};
use minsurf::polar::{polar_pipeline, self_duality_check};
use minsurf::reconstruct::{extract_data, parameter_count, reconstruct, ReconstructionData};
use minsurf::report::{analysis_fields, analysis_report};
use minsurf::{analyze_samples, gallery_surface, Analysis, ChartGrid, Error, RunConfig, Tolerances};

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_MALFORMED: u8 = 3;

#[derive(Parser)]
#[command(name = "minsurf", version, about = "Higher-order invariants of minimal surfaces in spheres")]
struct Cli {
    /// Grid resolution per axis for catalog surfaces.
    #[arg(long, global = true, default_value_t = 128)]
    res: usize,
    /// Override one tolerance, e.g. `--tol pde=1e-5`. Repeatable.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    tol: Vec<String>,
    /// JSON run configuration (tolerances, chart, workers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for report files.
    #[arg(long, global = true, env = "MINSURF_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Args, Clone)]
struct Source {
    /// Catalog surface name.
    #[arg(long, conflicts_with = "input")]
    gallery: Option<String>,
    /// Catalog parameter, e.g. `--param r1=0.5`. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Sampled immersion header (JSON).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Metric, flag and invariant fields.
    Analyze(Source),
    /// Exceptional / superconformal / superminimal verdicts with residuals.
    Classify {
        #[command(flatten)]
        source: Source,
        /// Also classify the type of a curve in S^6.
        #[arg(long)]
        s6: bool,
    },
    /// Polar surface and its comparison with the original.
    Polar(Source),
    /// Self-duality residuals.
    Selfdual(Source),
    /// Integrate frames from reconstruction data.
    Reconstruct {
        /// Reconstruction data (JSON).
        data: Option<PathBuf>,
        /// Extract the data from a catalog surface instead.
        #[arg(long, conflicts_with = "data")]
        gallery: Option<String>,
        /// Phase of level r, e.g. `--theta 1=0.5`. Repeatable.
        #[arg(long = "theta", value_name = "R=VALUE")]
        theta: Vec<String>,
    },
    /// Catalog access.
    Gallery {
        #[command(subcommand)]
        action: GalleryAction,
    },
    /// Run the invariant suite over the whole catalog.
    Verify,
}

#[derive(Subcommand)]
enum GalleryAction {
    /// List catalog surfaces.
    List,
    /// Write sampled positions of a catalog surface.
    Emit {
        name: String,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        #[arg(long, value_enum, default_value_t = Enc::Csv)]
        encoding: Enc,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Enc {
    Csv,
    F64le,
}

impl From<Enc> for Encoding {
    fn from(e: Enc) -> Self {
        match e {
            Enc::Csv => Encoding::Csv,
            Enc::F64le => Encoding::F64le,
        }
    }
}

struct Ctx {
    res: usize,
    tol: Tolerances,
    config: RunConfig,
    out: Option<PathBuf>,
    format: Format,
}

fn parse_pair(s: &str) -> Result<(String, f64), Error> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("expected NAME=VALUE, got `{s}`")))?;
    let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("`{v}` is not a number")))?;
    Ok((k.trim().to_string(), v))
}

fn parse_params(items: &[String]) -> Result<BTreeMap<String, f64>, Error> {
    items.iter().map(|s| parse_pair(s)).collect()
}

impl Ctx {
    fn load(&self, src: &Source) -> Result<(Analysis, String), Error> {
        match (&src.gallery, &src.input) {
            (Some(name), _) => {
                let s = gallery_surface(name, &parse_params(&src.params)?)?;
                let spec = self.config.chart.clone().unwrap_or_else(|| s.chart(self.res));
                let grid = ChartGrid::new(spec)?;
                let jets = s.jets(&grid, s.jet_order());
                let an = analyze_jets(grid, jets, s.n, &self.tol, FlagOptions { relax_last_rank: !s.expected.substantial })?;
                Ok((an, name.clone()))
            }
            (None, Some(path)) => {
                let im = io::read_immersion(path)?;
                let an = analyze_samples(im.grid()?, &im.samples, im.header.n, &self.tol)?;
                Ok((an, path.display().to_string()))
            }
            (None, None) => Err(Error::Config("give --gallery NAME or --input HEADER".into())),
        }
    }

    fn write(&self, dir: &Path, file: &str, text: &str) -> Result<PathBuf, Error> {
        fs::create_dir_all(dir)?;
        let path = dir.join(file);
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Prints the report, or the per-node fields, in the requested format.
    fn emit(&self, stem: &str, report: &Value, an: Option<&Analysis>) -> Result<(), Error> {
        match (self.format, an) {
            (Format::Csv, Some(an)) => {
                let text = io::fields_csv(&an.grid, &analysis_fields(an))?;
                match &self.out {
                    Some(dir) => {
                        let p = self.write(dir, &format!("{stem}.csv"), &text)?;
                        say(&io::to_json(&json!({ "schema": SCHEMA_VERSION, "written": [p] }))?);
                    }
                    None => say_raw(&text),
                }
                return Ok(());
            }
            (Format::Svg, Some(an)) => {
                let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
                let mut written = Vec::new();
                for (name, field) in analysis_fields(an) {
                    let svg = io::heatmap_svg(&an.grid, &field, &an.mask, &format!("{stem} {name}"));
                    written.push(self.write(&dir, &format!("{stem}_{name}.svg"), &svg)?);
                }
                say(&io::to_json(&json!({ "schema": SCHEMA_VERSION, "written": written }))?);
                return Ok(());
            }
            _ => {}
        }
        let text = io::to_json(report)?;
        if let Some(dir) = &self.out {
            self.write(dir, &format!("{stem}.json"), &(text.clone() + "\n"))?;
        }
        say(&text);
        Ok(())
    }
}

fn stem_of(source: &str, cmd: &str) -> String {
    let base = Path::new(source).file_stem().and_then(|s| s.to_str()).unwrap_or(source);
    format!("{base}_{cmd}")
}

fn classification_exit(c: &ClassificationReport) -> u8 {
    if c.inconclusive() {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::from_json(&fs::read_to_string(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?)?,
        None => RunConfig::default(),
    };
    for item in &cli.tol {
        let (k, v) = parse_pair(item)?;
        config.tolerances.set(&k, v)?;
    }
    if let Some(w) = cli.workers.or(config.workers) {
        // Fails only if a pool already exists, in which case the existing one is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let ctx = Ctx { res: cli.res, tol: config.tolerances.clone(), config, out: cli.out, format: cli.format };

    match cli.command {
        Command::Analyze(src) => {
            let (an, source) = ctx.load(&src)?;
            let report = serde_json::to_value(analysis_report(&an, &source))?;
            ctx.emit(&stem_of(&source, "analyze"), &report, Some(&an))?;
            Ok(EXIT_OK)
        }
        Command::Classify { source: src, s6 } => {
            let (an, source) = ctx.load(&src)?;
            let class = classify_surface(&an)?;
            let theorem2 = if class.exceptional.passed() { Some(theorem2_residuals(&an, &class)?) } else { None };
            let ricci = ricci_residual(&an.grid, &an.metric, &an.mask, &ctx.tol).ok();
            let mut code = classification_exit(&class);
            let s6_report = if s6 {
                let v = s6_type_classify(&an.grid, &an.jets, &ctx.tol)?;
                if v.class == S6Class::Inconclusive {
                    code = EXIT_INCONCLUSIVE;
                }
                Some(v)
            } else {
                None
            };
            let report = json!({
                "schema": SCHEMA_VERSION,
                "source": source,
                "classification": class,
                "theorem2": theorem2,
                "ricci": ricci,
                "s6": s6_report,
            });
            ctx.emit(&stem_of(&source, "classify"), &report, Some(&an))?;
            Ok(code)
        }
        Command::Polar(src) => {
            let (an, source) = ctx.load(&src)?;
            let (polar, polar_an, cmp) = polar_pipeline(&an)?;
            let mut written = None;
            if let Some(dir) = &ctx.out {
                written = Some(io::write_immersion(
                    dir,
                    &stem_of(&source, "polar_surface"),
                    an.grid.spec(),
                    an.n,
                    &polar.samples,
                    Encoding::F64le,
                )?);
            }
            let report = json!({
                "schema": SCHEMA_VERSION,
                "source": source,
                "polar": polar,
                "comparison": cmp,
                "polar_analysis": analysis_report(&polar_an, "polar"),
                "written": written,
            });
            ctx.emit(&stem_of(&source, "polar"), &report, Some(&polar_an))?;
            Ok(EXIT_OK)
        }
        Command::Selfdual(src) => {
            let (an, source) = ctx.load(&src)?;
            let class = classify_surface(&an)?;
            let sd = self_duality_check(&an, &class)?;
            let code = if sd.verdict == minsurf::classify::Verdict::Inconclusive { EXIT_INCONCLUSIVE } else { EXIT_OK };
            let report = json!({ "schema": SCHEMA_VERSION, "source": source, "self_duality": sd });
            ctx.emit(&stem_of(&source, "selfdual"), &report, Some(&an))?;
            Ok(code)
        }
        Command::Reconstruct { data, gallery, theta } => {
            let (mut rd, source) = match (data, gallery) {
                (Some(path), _) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
                    let rd: ReconstructionData =
                        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
                    rd.validate().map_err(|e| match e {
                        Error::Parameter(m) => Error::Parameter(m),
                        other => Error::Input(other.to_string()),
                    })?;
                    (rd, path.display().to_string())
                }
                (None, Some(name)) => {
                    let (an, _) = ctx.load(&Source { gallery: Some(name.clone()), params: vec![], input: None })?;
                    let class = classify_surface(&an)?;
                    (extract_data(&an, &class)?, name)
                }
                (None, None) => return Err(Error::Config("give a data file or --gallery NAME".into())),
            };
            for item in &theta {
                let (r, v) = parse_pair(item)?;
                let r: usize = r.parse().map_err(|_| Error::Config(format!("level `{r}` is not an integer")))?;
                if r == 0 || r > rd.m {
                    return Err(Error::Config(format!("theta level {r} outside 1..={}", rd.m)));
                }
                rd.theta[r] = v;
            }
            let rec = reconstruct(&rd, &ctx.tol)?;
            let mut written = Vec::new();
            if let Some(dir) = &ctx.out {
                let stem = stem_of(&source, "reconstructed");
                written.push(io::write_immersion(dir, &stem, &rd.chart, rd.n, &rec.samples(), Encoding::F64le)?);
                written.push(ctx.write(dir, &format!("{}_data.json", stem_of(&source, "reconstruct")), &(io::to_json(&rd)? + "\n"))?);
            }
            let report = json!({
                "schema": SCHEMA_VERSION,
                "source": source,
                "theta": rd.theta,
                "parameter_count": parameter_count(&rd, &ctx.tol),
                "diagnostics": rec.summary(),
                "written": written,
            });
            ctx.emit(&stem_of(&source, "reconstruct"), &report, None)?;
            Ok(EXIT_OK)
        }
        Command::Gallery { action: GalleryAction::List } => {
            let items: Vec<Value> = minsurf::gallery::list()
                .into_iter()
                .map(|(name, note)| {
                    let n = gallery_surface(name, &BTreeMap::new()).map(|s| s.n).ok();
                    json!({ "name": name, "n": n, "note": note })
                })
                .collect();
            say(&io::to_json(&json!({ "schema": SCHEMA_VERSION, "surfaces": items }))?);
            Ok(EXIT_OK)
        }
        Command::Gallery { action: GalleryAction::Emit { name, params, encoding } } => {
            let s = gallery_surface(&name, &parse_params(&params)?)?;
            let spec = ctx.config.chart.clone().unwrap_or_else(|| s.chart(ctx.res));
            let grid = ChartGrid::new(spec.clone())?;
            let samples = s.jets(&grid, 0).positions();
            let dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let path = io::write_immersion(&dir, &name, &spec, s.n, &samples, encoding.into())?;
            say(&io::to_json(&json!({ "schema": SCHEMA_VERSION, "written": [path] }))?);
            Ok(EXIT_OK)
        }
        Command::Verify => {
            let checks = minsurf::verify::gallery_suite(ctx.res, &ctx.tol);
            let passed = checks.iter().all(|c| c.passed);
            let report = json!({ "schema": SCHEMA_VERSION, "res": ctx.res, "passed": passed, "checks": checks });
            ctx.emit("verify", &report, None)?;
            Ok(if passed { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

/// Writes a line to stdout; a closed pipe is not an error.
fn say(line: &str) {
    say_raw(&format!("{line}\n"));
}

fn say_raw(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Json(_) | Error::Csv(_) => EXIT_MALFORMED,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = exit_code(&e);
            let diag = json!({ "schema": SCHEMA_VERSION, "error": { "kind": e.kind(), "message": e.to_string() }, "exit": code });
            eprintln!("{}", io::to_json(&diag).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(code)
        }
    }
}
