use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mmspace::ambient::{discretize, GeodesicTemplate, MeasureSpec, TemplateKind};
use mmspace::calculus::{cheeger_p, local_lip, total_variation, SpaceFunction};
use mmspace::harness::{emit_report, load_report, run_experiment, ExperimentConfig, ReportFormat};
use mmspace::interpolation::{build_polygonal_inf, build_polygonal_q, PolygonalOptions, Regime};
use mmspace::io::{self, PlanFile, SequenceFile, SpaceFile};
use mmspace::plans::{self, Sampling};
use mmspace::transport::{lift_coupling, optimal_coupling_q, winf, DEFAULT_LIFT_STEPS};
use mmspace::{Error, Result};

const EX_USAGE: u8 = 64;
const EX_DATAERR: u8 = 65;
const EX_SOFTWARE: u8 = 70;
const EX_IOERR: u8 = 74;

#[derive(Parser)]
#[command(name = "mmspace", version, about = "Transport, calculus and Mosco experiments on finite metric measure spaces")]
struct Cli {
    /// Worker threads for experiment cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file, or output directory for `mosco`; overrides OUTPUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(subcommand)]
    Space(SpaceCmd),
    #[command(subcommand)]
    Ot(OtCmd),
    #[command(subcommand)]
    Plan(PlanCmd),
    #[command(subcommand)]
    Calc(CalcCmd),
    #[command(subcommand)]
    Mosco(MoscoCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateArg {
    Segment,
    Circle,
    Torus,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Uniform,
    Ramp,
    Constant,
}

#[derive(Args)]
struct Discretization {
    #[arg(long, value_enum)]
    template: TemplateArg,
    /// Segment length, circumference or torus side.
    #[arg(long, default_value_t = 1.0)]
    length: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    measure: MeasureArg,
    /// Density of the constant measure.
    #[arg(long, default_value_t = 1.0)]
    value: f64,
}

impl Discretization {
    fn template(&self) -> Result<GeodesicTemplate> {
        match self.template {
            TemplateArg::Segment => GeodesicTemplate::segment(self.length),
            TemplateArg::Circle => GeodesicTemplate::circle(self.length),
            TemplateArg::Torus => GeodesicTemplate::new(TemplateKind::TorusGrid, vec![self.length; 2]),
        }
    }

    fn measure(&self) -> MeasureSpec {
        match self.measure {
            MeasureArg::Uniform => MeasureSpec::Uniform,
            MeasureArg::Ramp => MeasureSpec::Ramp,
            MeasureArg::Constant => MeasureSpec::Constant { value: self.value },
        }
    }

    fn space(&self, n: usize) -> Result<SpaceFile> {
        let t = self.template()?;
        let density = self.measure().density(&t)?;
        Ok(SpaceFile::from_space(&discretize(&t, n, &*density)?))
    }
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Discretize a template.
    Gen {
        #[command(flatten)]
        disc: Discretization,
        #[arg(long)]
        n: usize,
    },
    /// Write term and limit space files plus a sequence file into a directory.
    Sequence {
        #[command(flatten)]
        disc: Discretization,
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long)]
        limit_n: usize,
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Pair {
    #[arg(long)]
    mu0: PathBuf,
    #[arg(long)]
    mu1: PathBuf,
}

#[derive(Subcommand)]
enum OtCmd {
    /// Optimal `W_q` coupling with its dual certificate.
    Wq {
        #[arg(long)]
        q: f64,
        #[command(flatten)]
        pair: Pair,
    },
    /// Bottleneck `W_inf` coupling.
    Winf {
        #[command(flatten)]
        pair: Pair,
    },
    /// Lift an optimal coupling to a plan of geodesics; without `--q` the
    /// `W_inf` coupling is lifted.
    Lift {
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_LIFT_STEPS)]
        steps: usize,
        #[command(flatten)]
        pair: Pair,
    },
}

#[derive(Subcommand)]
enum PlanCmd {
    /// Polygonal interpolation of a limit-space plan on a term of a sequence.
    Polygonal {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long)]
        term: usize,
        #[arg(long = "M")]
        m: usize,
        #[arg(long, value_parser = parse_regime)]
        regime: Regime,
        /// Finite exponent, or `inf`.
        #[arg(long)]
        q: String,
        #[arg(long = "K", default_value_t = 0.0, allow_hyphen_values = true)]
        k: f64,
        #[arg(long = "N")]
        n: Option<f64>,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
        q_schedule: Vec<f64>,
    },
    /// Compression, kinetic energies and Lipschitz constant of a plan.
    Functionals {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        q: Vec<f64>,
        /// Interior samples per leg; exact sampling on one-dimensional templates when absent.
        #[arg(long)]
        k_mid: Option<usize>,
    },
}

#[derive(Subcommand)]
enum CalcCmd {
    /// Cheeger energy, slopes and total variation of a function.
    Chp {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        f: PathBuf,
        /// Space of the function; defaults to its `space_ref`.
        #[arg(long)]
        space: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MoscoCmd {
    /// Run an experiment configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a stored report.
    Report {
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        /// Report to render; defaults to `report.json` in the output directory.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown regime {s}; use cd_nonneg, cd_general or mcp"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EX_IOERR,
        Error::Malformed(_)
        | Error::InvalidTemplate(_)
        | Error::InvalidPoint(_)
        | Error::InvalidSpace(_)
        | Error::InvalidDensity(_)
        | Error::InvalidCurve(_)
        | Error::InvalidPlan(_)
        | Error::ExponentDomain(..)
        | Error::MassMismatch(..)
        | Error::OffSpaceEndpoint(_)
        | Error::IndexOutOfRange(_)
        | Error::TimeOutOfRange(_) => EX_DATAERR,
        _ => EX_SOFTWARE,
    }
}

/// `--out`, then OUTPUT_DIR.
fn output_dir(cli_out: &Option<PathBuf>) -> Option<PathBuf> {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("OUTPUT_DIR").map(PathBuf::from))
}

fn emit<T: Serialize>(value: &T, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            print!("{}", io::to_json(value)?);
            Ok(())
        }
    }
}

fn relative_to(target: &Path, base_dir: &Path) -> PathBuf {
    target.strip_prefix(base_dir).map(Path::to_path_buf).unwrap_or_else(|_| target.to_path_buf())
}

fn run(cli: Cli) -> Result<u8> {
    let out = cli.out.clone();
    match cli.command {
        Command::Space(SpaceCmd::Gen { disc, n }) => emit(&disc.space(n)?, &out)?,
        Command::Space(SpaceCmd::Sequence { disc, ns, limit_n, dir }) => {
            let mut terms = Vec::new();
            for n in &ns {
                let name = PathBuf::from(format!("term-{n}.json"));
                io::write_json(&dir.join(&name), &disc.space(*n)?)?;
                terms.push(name);
            }
            io::write_json(&dir.join("limit.json"), &disc.space(limit_n)?)?;
            let seq = SequenceFile {
                terms,
                limit: "limit.json".into(),
                test_family: mmspace::ambient::DEFAULT_FAMILY_VERSION.into(),
            };
            io::write_json(&dir.join("sequence.json"), &seq)?;
            emit(&seq, &out)?;
        }
        Command::Ot(cmd) => {
            let pair = match &cmd {
                OtCmd::Wq { pair, .. } | OtCmd::Winf { pair } | OtCmd::Lift { pair, .. } => pair,
            };
            let mu0 = io::load_density(&pair.mu0)?;
            let mu1 = io::load_density(&pair.mu1)?;
            match cmd {
                OtCmd::Wq { q, .. } => emit(&optimal_coupling_q(&mu0, &mu1, q)?.record(), &out)?,
                OtCmd::Winf { .. } => emit(&winf(&mu0, &mu1)?.record(), &out)?,
                OtCmd::Lift { q, steps, .. } => {
                    let res = match q {
                        Some(q) => optimal_coupling_q(&mu0, &mu1, q)?,
                        None => winf(&mu0, &mu1)?,
                    };
                    let plan = lift_coupling(&res.coupling, steps)?;
                    let file: io::DensityFile = io::read_json(&pair.mu0)?;
                    let space_ref = io::resolve(&pair.mu0, &file.space_ref);
                    let space_ref = match out.as_ref().and_then(|o| o.parent()) {
                        Some(dir) => relative_to(&space_ref, dir),
                        None => space_ref,
                    };
                    let rec = plan.record();
                    emit(
                        &PlanFile {
                            space_ref,
                            curves: rec.curves,
                            masses: rec.masses,
                        },
                        &out,
                    )?;
                }
            }
        }
        Command::Plan(PlanCmd::Polygonal {
            plan,
            sequence,
            term,
            m,
            regime,
            q,
            k,
            n,
            steps,
            q_schedule,
        }) => {
            let eta = io::load_plan(&plan)?;
            let seq = io::load_sequence(&sequence)?;
            let mut opts = PolygonalOptions::new(m, regime);
            opts.k = k;
            opts.n = n;
            opts.steps = steps;
            let build = if q == "inf" {
                build_polygonal_inf(&eta, &seq, term, &q_schedule, &opts)?
            } else {
                let q: f64 = q.parse().map_err(|_| Error::Malformed(format!("q = {q} is not a number")))?;
                build_polygonal_q(&eta, &seq, term, q, &opts)?
            };
            emit(&build, &out)?;
        }
        Command::Plan(PlanCmd::Functionals { plan, q, k_mid }) => {
            let plan = io::load_plan(&plan)?;
            let sampling = match k_mid {
                Some(k_mid) => Sampling::Knots { k_mid },
                None if plan.template().is_one_dimensional() => Sampling::Exact,
                None => Sampling::default(),
            };
            emit(&plans::functionals(&plan, &q, sampling)?, &out)?;
        }
        Command::Calc(CalcCmd::Chp { p, f, space }) => {
            let mut func = io::load_function(&f)?;
            if let Some(s) = space {
                let s = io::load_space(&s)?;
                if *s != **func.space() {
                    return Err(Error::Malformed("the function does not live on the given space".into()));
                }
                func = SpaceFunction::new(s, func.values().to_vec())?;
            }
            let value = json!({
                "p": p,
                "ch_p": cheeger_p(&func, p)?,
                "total_variation": total_variation(&func),
                "lip": local_lip(&func),
            });
            emit(&value, &out)?;
        }
        Command::Mosco(MoscoCmd::Run { config }) => {
            let cfg: ExperimentConfig = io::read_json(&config)?;
            cfg.validate()?;
            let report = run_experiment(&cfg)?;
            let code = report.summary.status.exit_code() as u8;
            match output_dir(&out) {
                Some(dir) => {
                    let path = emit_report(&report, ReportFormat::Json, &dir)?;
                    let summary = json!({ "report": path, "summary": report.summary, "liminf": report.liminf });
                    print!("{}", io::to_json(&summary)?);
                }
                None => print!("{}", io::to_json(&report)?),
            }
            return Ok(code);
        }
        Command::Mosco(MoscoCmd::Report { format, report }) => {
            let dir = output_dir(&out).unwrap_or_else(|| PathBuf::from("."));
            let src = report.unwrap_or_else(|| dir.join("report.json"));
            let rep = load_report(&src)?;
            let path = emit_report(&rep, format, &dir)?;
            print!("{}", io::to_json(&json!({ "written": path }))?);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EX_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EX_SOFTWARE);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
