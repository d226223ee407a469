//! Batch frontend for `levy-nested`. One verb per invocation; every report
//! is JSON on stdout and echoes the seed.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use levy_nested::classify::{
    classify_distribution, nested_level, verify_log_moment_identity, ClassifyOptions,
    DEFAULT_CM_TOL,
};
use levy_nested::expr::Expr;
use levy_nested::kernel::{KernelSpec, MappingKernel};
use levy_nested::limits::{
    linf_pipeline, stable_fixed_point_check, stable_triplet, DEFAULT_NODE_COUNT,
};
use levy_nested::montecarlo::{compare_cf, sample_integral, SimConfig};
use levy_nested::transform::{
    iterate_map, map_cumulant_fn, radial_csv, verify_commutativity, verify_psi_identity, CumulantFn,
};
use levy_nested::{LevyError, LevyTriplet, StableLaw};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_PARSE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "levyn",
    version,
    about = "Stochastic-integral mappings of infinitely divisible laws"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Debug, Clone)]
struct KernelArgs {
    /// Built-in kernel (U, Upsilon, G, Phi, Psi, psi_alpha(a), phi_beta_alpha(b,a)).
    /// `verify --identity commutativity` takes it twice.
    #[arg(long, conflicts_with = "kernel_p")]
    kernel: Vec<String>,
    /// Custom kernel density p(u) as an expression in `u`.
    #[arg(long = "kernel-p")]
    kernel_p: Option<String>,
    /// Support end of the custom density; omitted means infinity.
    #[arg(long, requires = "kernel_p")]
    t0: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random choice.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Artifact path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Class verdicts and nested level of a law.
    Classify {
        input: PathBuf,
        /// Highest order of the complete-monotonicity test.
        #[arg(long, default_value_t = levy_nested::classify::DEFAULT_CM_ORDER)]
        order: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Image of a law under a kernel, optionally iterated.
    Map {
        input: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 1)]
        iterations: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Iterates of a kernel with the nested level after each step.
    Iterate {
        input: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 3)]
        iterations: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Bernstein fit of h and the mixing measure over stable indices.
    Bernstein {
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_NODE_COUNT)]
        nodes: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo samples of the stochastic integral with a CF check.
    Simulate {
        input: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Numerical identity checks.
    Verify {
        #[arg(long, value_enum)]
        identity: Identity,
        input: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Log-moment order m.
        #[arg(long, default_value_t = 1)]
        order: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Triplet of a stable law given as JSON.
    Stable {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Identity {
    Psi,
    Commutativity,
    LogMoment,
    FixedPoint,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(LevyError),
}

impl From<LevyError> for CliError {
    fn from(e: LevyError) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Usage(_)
        | CliError::Lib(LevyError::Parse(_))
        | CliError::Lib(LevyError::Io(_)) => EXIT_PARSE,
        CliError::Lib(_) => EXIT_DOMAIN,
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| LevyError::Io(format!("{}: {e}", path.display())).into())
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, data).map_err(|e| LevyError::Io(format!("{}: {e}", path.display())).into())
}

fn parse_json(text: &str) -> CliResult<Value> {
    serde_json::from_str(text).map_err(|e| LevyError::Parse(e.to_string()).into())
}

fn parse_err(e: serde_json::Error) -> CliError {
    LevyError::Parse(e.to_string()).into()
}

/// A triplet, or a stable law recognized by its `alpha` field.
fn load_triplet(path: &Path) -> CliResult<LevyTriplet> {
    let v = parse_json(&read(path)?)?;
    if v.get("alpha").is_some() {
        let law: StableLaw = serde_json::from_value(v).map_err(parse_err)?;
        Ok(stable_triplet(&law)?)
    } else {
        serde_json::from_value(v).map_err(parse_err)
    }
}

fn load_stable(path: &Path) -> CliResult<StableLaw> {
    serde_json::from_value(parse_json(&read(path)?)?).map_err(parse_err)
}

fn kernels(k: &KernelArgs, default: &[&str]) -> CliResult<Vec<MappingKernel>> {
    if let Some(p) = &k.kernel_p {
        let spec = KernelSpec::Custom {
            p: Expr::parse(p)?,
            t0: k.t0.unwrap_or(f64::INFINITY),
        };
        return Ok(vec![spec.build()?]);
    }
    let names: Vec<&str> = if k.kernel.is_empty() {
        default.to_vec()
    } else {
        k.kernel.iter().map(String::as_str).collect()
    };
    if names.is_empty() {
        return Err(CliError::Usage(
            "a kernel is required (--kernel or --kernel-p)".into(),
        ));
    }
    names
        .iter()
        .map(|n| MappingKernel::from_name(n).map_err(CliError::from))
        .collect()
}

fn one_kernel(k: &KernelArgs, default: Option<&str>) -> CliResult<MappingKernel> {
    let mut ks = kernels(k, default.as_slice())?;
    if ks.len() != 1 {
        return Err(CliError::Usage("expected exactly one kernel".into()));
    }
    Ok(ks.remove(0))
}

// |z| ≤ zmax: signed points on the line, a spiral in higher dimensions.
fn z_grid(dim: usize, n: usize, zmax: f64) -> Vec<Vec<f64>> {
    (1..=n)
        .map(|k| {
            let s = zmax * k as f64 / n as f64;
            if dim == 1 {
                return vec![if k % 2 == 0 { s } else { -s }];
            }
            let th = 0.7 * k as f64;
            let mut z = vec![0.0; dim];
            z[0] = s * th.cos();
            z[1] = s * th.sin();
            z
        })
        .collect()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn to_value<T: serde::Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(parse_err)
}

fn execute(verb: Verb) -> CliResult<Value> {
    match verb {
        Verb::Classify {
            input,
            order,
            common,
        } => {
            let tr = load_triplet(&input)?;
            let opts = ClassifyOptions {
                cm_order: order,
                ..ClassifyOptions::default()
            };
            let verdict = classify_distribution(&tr, &opts)?;
            let level = nested_level(
                tr.levy.as_ref(),
                order.saturating_sub(1).max(1) as u32,
                opts.cm_tol,
            )?;
            let report = json!({
                "seed": common.seed,
                "verdict": verdict,
                "nested_level": level.level,
            });
            if let Some(out) = &common.out {
                write(
                    out,
                    serde_json::to_string_pretty(&report).map_err(parse_err)?,
                )?;
                write(&with_suffix(out, ".csv"), verdict.to_csv())?;
            }
            Ok(report)
        }
        Verb::Map {
            input,
            kernel,
            iterations,
            common,
        } => {
            let tr = load_triplet(&input)?;
            let k = one_kernel(&kernel, None)?;
            let it = iterate_map(&k, &tr, iterations)?;
            if let Some(out) = &common.out {
                write(out, it.triplet.to_json()?)?;
                write(&with_suffix(out, ".radial.csv"), radial_csv(&it.triplet))?;
            }
            Ok(json!({
                "seed": common.seed,
                "kernel": k.name(),
                "iterations": iterations,
                "provenance": it.provenance,
                "triplet": it.triplet,
            }))
        }
        Verb::Iterate {
            input,
            kernel,
            iterations,
            common,
        } => {
            let tr = load_triplet(&input)?;
            let k = one_kernel(&kernel, None)?;
            let mut steps = Vec::new();
            let mut last = None;
            for m in 1..=iterations {
                let it = iterate_map(&k, &tr, m)?;
                let level = nested_level(it.triplet.levy.as_ref(), m + 2, DEFAULT_CM_TOL)?;
                steps.push(json!({"m": m, "nested_level": level.level}));
                last = Some(it);
            }
            let last =
                last.ok_or_else(|| CliError::Usage("--iterations must be at least 1".into()))?;
            if let Some(out) = &common.out {
                write(out, last.triplet.to_json()?)?;
                write(&with_suffix(out, ".radial.csv"), radial_csv(&last.triplet))?;
            }
            Ok(json!({
                "seed": common.seed,
                "kernel": k.name(),
                "steps": steps,
                "provenance": last.provenance,
                "triplet": last.triplet,
            }))
        }
        Verb::Bernstein {
            input,
            nodes,
            common,
        } => {
            let tr = load_triplet(&input)?;
            let nu = tr
                .levy
                .as_ref()
                .ok_or_else(|| LevyError::InvalidParameter("law has no Lévy measure".into()))?;
            let rep = linf_pipeline(nu, nodes)?;
            if let Some(out) = &common.out {
                for (i, (f, g)) in rep.fits.iter().zip(&rep.gammas).enumerate() {
                    write(&with_suffix(out, &format!(".fit.{i}.csv")), f.to_csv())?;
                    write(&with_suffix(out, &format!(".gamma.{i}.csv")), g.to_csv())?;
                }
            }
            let fits: Vec<Value> = rep
                .fits
                .iter()
                .map(|f| json!({"residual": f.residual, "total_mass": f.total_mass(), "support": f.support}))
                .collect();
            Ok(json!({
                "seed": common.seed,
                "c": rep.c,
                "fits": fits,
                "gamma_total_mass": rep.gammas.iter().map(|g| g.total_mass()).collect::<Vec<_>>(),
                "reconstruction_residual": rep.reconstruction.residual,
                "gamma": rep.reconstruction.gamma,
            }))
        }
        Verb::Simulate {
            input,
            kernel,
            samples,
            common,
        } => {
            let tr = load_triplet(&input)?;
            let k = one_kernel(&kernel, None)?;
            let cfg = SimConfig {
                n_samples: samples,
                seed: common.seed,
                ..SimConfig::default()
            };
            let s = sample_integral(&k, &tr, &cfg)?;
            let expected = map_cumulant_fn(&k, &CumulantFn::from_triplet(&tr)?)?;
            let cf = compare_cf(&s, &expected, &z_grid(tr.dimension, 16, 2.0))?;
            if let Some(out) = &common.out {
                if out
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
                {
                    write(out, s.to_csv())?;
                } else {
                    write(out, s.to_bytes())?;
                }
            }
            Ok(json!({
                "seed": common.seed,
                "kernel": k.name(),
                "config": cfg,
                "cf": cf,
            }))
        }
        Verb::Verify {
            identity,
            input,
            kernel,
            order,
            common,
        } => {
            let report = match identity {
                Identity::Psi => {
                    let tr = load_triplet(&input)?;
                    to_value(&verify_psi_identity(&tr, &z_grid(tr.dimension, 16, 4.0))?)?
                }
                Identity::Commutativity => {
                    let tr = load_triplet(&input)?;
                    let ks = kernels(&kernel, &["U", "Upsilon"])?;
                    if ks.len() != 2 {
                        return Err(CliError::Usage(
                            "commutativity needs two --kernel values".into(),
                        ));
                    }
                    to_value(&verify_commutativity(
                        &ks[0],
                        &ks[1],
                        &tr,
                        &z_grid(tr.dimension, 16, 4.0),
                    )?)?
                }
                Identity::LogMoment => {
                    let tr = load_triplet(&input)?;
                    let nu = tr.levy.as_ref().ok_or_else(|| {
                        LevyError::InvalidParameter("law has no Lévy measure".into())
                    })?;
                    to_value(&verify_log_moment_identity(nu, order)?)?
                }
                Identity::FixedPoint => {
                    let law = load_stable(&input)?;
                    let k = one_kernel(&kernel, Some("Upsilon"))?;
                    let dim = law.tau.len();
                    to_value(&stable_fixed_point_check(&k, &law, &z_grid(dim, 16, 4.0))?)?
                }
            };
            let mut v = json!({"seed": common.seed});
            v["report"] = report;
            if let Some(out) = &common.out {
                write(out, serde_json::to_string_pretty(&v).map_err(parse_err)?)?;
            }
            Ok(v)
        }
        Verb::Stable { input, common } => {
            let tr = stable_triplet(&load_stable(&input)?)?;
            if let Some(out) = &common.out {
                write(out, tr.to_json()?)?;
            }
            Ok(json!({"seed": common.seed, "triplet": tr}))
        }
    }
}

/// Run one invocation. Returns the exit code: 0 on success, 1 on domain or
/// numerical failure, 2 on usage or input parse errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    match execute(cli.verb) {
        Ok(report) => {
            // a closed stdout (e.g. piped into `head`) is not an error
            let _ = writeln!(
                std::io::stdout(),
                "{}",
                serde_json::to_string_pretty(&report).unwrap_or_default()
            );
            EXIT_OK
        }
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Lib(l) => eprintln!("error: {l}"),
            }
            exit_code(&e)
        }
    }
}
