//! `conic-shubin` batch front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use conic_shubin::{AnisotropyVector, GridSpec};

use commands::Artifact;

#[derive(Parser)]
#[command(name = "conic-shubin", version, about = "Anisotropic Mellin calculus on the model cone R+ x S^1")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for output files; without it text artifacts go to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Full-ellipticity check on the anisotropic hemisphere (exit 2 if it fails).
    CheckEllipticity {
        #[command(flatten)]
        symbol: SymbolArgs,
        #[command(flatten)]
        ell: EllipticityArgs,
    },
    /// Neumann parametrix; writes interior remainder norms per order.
    BuildParametrix {
        #[command(flatten)]
        symbol: SymbolArgs,
        #[command(flatten)]
        ell: EllipticityArgs,
        /// Grid `t0,t1,nt,nz` (`t = log x`; sizes powers of two >= 8).
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true, default_value = "1,3,128,16")]
        grid: GridSpec,
        /// Largest Neumann order N.
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.5)]
        interior_frac: f64,
        #[arg(long, default_value_t = 0.25)]
        band: f64,
    },
    /// Exact composition `a # b` of two symbols (given in order).
    Compose {
        #[command(flatten)]
        symbols: SymbolPair,
    },
    /// Exact formal adjoint.
    Adjoint {
        #[command(flatten)]
        symbol: SymbolArgs,
    },
    /// Grid quantization of a symbol.
    Quantize {
        #[command(flatten)]
        symbol: SymbolArgs,
        /// Grid `t0,t1,nt,nz` (`t = log x`; sizes powers of two >= 8).
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        grid: GridSpec,
        #[arg(long, value_enum, default_value_t = Format::Bin)]
        format: Format,
    },
    /// Lowest eigenvalues of a model operator and the ground-state decay fit.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// Grid `t0,t1,nt,nz` (`t = log x`; sizes powers of two >= 8).
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true, default_value = "-4,3,256,32")]
        grid: GridSpec,
        #[arg(long, default_value_t = 6)]
        count: usize,
    },
    /// Weighted anisotropic Sobolev norm of a grid function.
    SobolevNorm {
        /// Function file: CSHB binary, or CSV when the name ends in `.csv`.
        #[arg(long)]
        input: PathBuf,
        /// Grid `t0,t1,nt,nz` (`t = log x`; sizes powers of two >= 8).
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        grid: GridSpec,
        #[arg(long, value_parser = parse_aniso, default_value = "2,1,2")]
        aniso: AnisotropyVector,
        /// Sobolev order.
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = conic_shubin::sobolev::DEFAULT_LAMBDA0)]
        lambda0: f64,
    },
    /// Operator norms of a model operator between weighted Sobolev spaces across grid refinements.
    MappingStudy {
        #[command(flatten)]
        model: ModelArgs,
        /// `t0,t1,nt,nz`; `nt` is used only when `--nts` is absent.
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true, default_value = "-4,1,128,8")]
        grid: GridSpec,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "2")]
        s: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        nts: Vec<usize>,
        /// `mu,w` for `x^a H^s -> x^{a-w} H^{s-mu}`; repeatable. Defaults to the natural
        /// shift and the one with `mu` lowered by 2.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        shift: Vec<(f64, f64)>,
    },
    /// Kernel cut-off of `a(sigma) = <sigma>^p` and the decay of `a - H(phi)a`.
    KernelCutoff {
        #[arg(long, allow_hyphen_values = true, default_value_t = -2.0)]
        power: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        inner: f64,
        #[arg(long, default_value_t = 2.0)]
        outer: f64,
        #[arg(long, default_value_t = 32.0)]
        lo: f64,
        #[arg(long, default_value_t = 128.0)]
        hi: f64,
        /// Lattice size (power of two).
        #[arg(long, default_value_t = 1 << 16)]
        lattice: usize,
        #[arg(long, default_value_t = 1.0 / 64.0)]
        dsigma: f64,
    },
}

#[derive(Args)]
struct SymbolArgs {
    /// Symbol JSON file.
    #[arg(long, conflicts_with = "expr", required_unless_present = "expr")]
    symbol: Option<PathBuf>,
    /// Symbol expression such as `sigma^2 + zeta^2 + tau^4`.
    #[arg(long, allow_hyphen_values = true)]
    expr: Option<String>,
    /// Anisotropy for `--expr`.
    #[arg(long, value_parser = parse_aniso, default_value = "2,2,1")]
    aniso: AnisotropyVector,
}

#[derive(Args)]
struct SymbolPair {
    /// Two symbol JSON files, left factor first.
    #[arg(long, num_args = 1, conflicts_with = "expr")]
    symbol: Vec<PathBuf>,
    /// Two symbol expressions, left factor first.
    #[arg(long, num_args = 1, allow_hyphen_values = true)]
    expr: Vec<String>,
    #[arg(long, value_parser = parse_aniso, default_value = "2,2,1")]
    aniso: AnisotropyVector,
}

#[derive(Args)]
struct EllipticityArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Hemisphere resolution.
    #[arg(long, default_value_t = 24)]
    samples: usize,
    /// Smallest radius sampled.
    #[arg(long, default_value_t = 1.0)]
    r_min: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Harmonic,
    Anharmonic,
    Custom,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Model::Harmonic)]
    model: Model,
    #[arg(long, default_value_t = 1)]
    m: u32,
    #[arg(long, default_value_t = 1)]
    n: u32,
    /// Custom model: symbol JSON file.
    #[arg(long)]
    symbol: Option<PathBuf>,
    /// Custom model: symbol expression.
    #[arg(long, allow_hyphen_values = true)]
    expr: Option<String>,
    #[arg(long, value_parser = parse_aniso, default_value = "2,2,1")]
    aniso: AnisotropyVector,
    /// Custom model: power `w` in `x^{-w} op(A)`.
    #[arg(long, default_value_t = 0)]
    weight: u32,
}

fn numbers(s: &str, count: usize) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?}")))
        .collect::<Result<_>>()?;
    if parts.len() != count {
        bail!("expected {count} comma-separated values, got {}", parts.len());
    }
    Ok(parts)
}

fn parse_grid(s: &str) -> Result<GridSpec> {
    let v = numbers(s, 4)?;
    for &n in &v[2..] {
        if n.fract() != 0.0 || n < 0.0 {
            bail!("grid sizes must be whole numbers, got {n}");
        }
    }
    Ok(GridSpec::new(v[0], v[1], v[2] as usize, v[3] as usize)?)
}

fn parse_aniso(s: &str) -> Result<AnisotropyVector> {
    let v: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().with_context(|| format!("bad weight {p:?}")))
        .collect::<Result<_>>()?;
    match v[..] {
        [a, b, c] => Ok(AnisotropyVector::new(a, b, c)?),
        _ => bail!("expected l1,l2,l3"),
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let v = numbers(s, 2)?;
    Ok((v[0], v[1]))
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("CONIC_SHUBIN_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| anyhow!("CONIC_SHUBIN_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn emit(artifacts: &[Artifact], out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for a in artifacts {
                let path = dir.join(&a.name);
                conic_shubin::io::write_atomic(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            for a in artifacts {
                if a.binary {
                    bail!("{} is binary; pass --out DIR", a.name);
                }
                stdout.write_all(&a.bytes)?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<commands::Outcome> {
    init_threads()?;
    let outcome = commands::dispatch(cli.command)?;
    emit(&outcome.artifacts, cli.out.as_ref())?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(o) if o.not_elliptic => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref() {
                Some(conic_shubin::Error::NotFullyElliptic { .. }) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
