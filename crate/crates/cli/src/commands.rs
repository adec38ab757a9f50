use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use conic_shubin::experiments::{mapping_shift_study, natural_shift, spectrum, ModelKind, ModelOperatorSpec};
use conic_shubin::expr::parse_symbol_expr;
use conic_shubin::io::{self, fmt_float as f};
use conic_shubin::parametrix::{build_parametrix, check_full_ellipticity, EllipticityOptions, InteriorSpec};
use conic_shubin::quantize::{cutoff_decay_slope, kernel_cutoff, op_symbol, CutoffSpec, SigmaLattice};
use conic_shubin::sobolev::{sobolev_norm_with, ReductionKind, SobolevParams};
use conic_shubin::symbol::SymbolJson;
use conic_shubin::{AnisotropyVector, FormalSymbol, GridFunction, GridSpec, C64};
use serde::Serialize;

use crate::{Command, EllipticityArgs, Format, Model, ModelArgs, SymbolArgs};

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
    pub binary: bool,
}

impl Artifact {
    fn text(name: &str, body: String) -> Self {
        Self { name: name.into(), bytes: body.into_bytes(), binary: false }
    }

    fn json(name: &str, value: &impl Serialize) -> Result<Self> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        Ok(Self::text(name, s))
    }
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub not_elliptic: bool,
}

impl From<Vec<Artifact>> for Outcome {
    fn from(artifacts: Vec<Artifact>) -> Self {
        Self { artifacts, not_elliptic: false }
    }
}

fn read_symbol(path: &Path) -> Result<FormalSymbol> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let js: SymbolJson = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(FormalSymbol::from_json(&js)?)
}

fn load_symbol(file: Option<&Path>, expr: Option<&str>, l: AnisotropyVector) -> Result<FormalSymbol> {
    match (file, expr) {
        (Some(p), None) => read_symbol(p),
        (None, Some(e)) => Ok(parse_symbol_expr(e, l)?),
        _ => bail!("give exactly one of --symbol and --expr"),
    }
}

impl SymbolArgs {
    fn load(&self) -> Result<FormalSymbol> {
        load_symbol(self.symbol.as_deref(), self.expr.as_deref(), self.aniso)
    }
}

impl EllipticityArgs {
    fn options(&self) -> EllipticityOptions {
        EllipticityOptions { n: self.samples, tol: self.tol, r_min: self.r_min, ..Default::default() }
    }
}

impl ModelArgs {
    fn spec(&self, grid: GridSpec) -> Result<ModelOperatorSpec> {
        let kind = match self.model {
            Model::Harmonic => ModelKind::Harmonic,
            Model::Anharmonic => {
                if self.m == 0 || self.n == 0 {
                    bail!("anharmonic model needs --m, --n >= 1");
                }
                ModelKind::Anharmonic { m: self.m, n: self.n }
            }
            Model::Custom => ModelKind::Custom {
                symbol: load_symbol(self.symbol.as_deref(), self.expr.as_deref(), self.aniso)?,
                weight: self.weight,
            },
        };
        Ok(ModelOperatorSpec { kind, grid })
    }
}

fn symbol_json(name: &str, a: &FormalSymbol) -> Result<Artifact> {
    Artifact::json(name, &a.to_json())
}

fn read_function(path: &Path, grid: GridSpec) -> Result<GridFunction> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "csv") {
        return Ok(io::function_from_csv(std::str::from_utf8(&bytes)?, grid)?);
    }
    let u = io::decode_function(&bytes, grid.t0, grid.t1)?;
    if (u.grid.nt, u.grid.nz) != (grid.nt, grid.nz) {
        bail!("{} holds an {}x{} function but --grid is {}x{}", path.display(), u.grid.nt, u.grid.nz, grid.nt, grid.nz);
    }
    Ok(u)
}

pub fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::CheckEllipticity { symbol, ell } => {
            let a = symbol.load()?;
            let r = check_full_ellipticity(&a, &ell.options())?;
            Ok(Outcome { not_elliptic: !r.fully_elliptic, artifacts: vec![Artifact::json("ellipticity.json", &r)?] })
        }
        Command::BuildParametrix { symbol, ell, grid, order, interior_frac, band } => {
            let a = symbol.load()?;
            let spec = InteriorSpec { frac: interior_frac, band };
            let b = build_parametrix(&a, grid, order, spec, &ell.options())?;
            let mut csv = String::from("n,right,left\n");
            for (n, (r, l)) in b.right_remainders.iter().zip(&b.left_remainders).enumerate() {
                writeln!(csv, "{},{},{}", n + 1, f(*r), f(*l))?;
            }
            Ok(vec![Artifact::text("remainders.csv", csv)].into())
        }
        Command::Compose { symbols } => {
            let ops: Vec<FormalSymbol> = if !symbols.symbol.is_empty() {
                symbols.symbol.iter().map(|p| read_symbol(p)).collect::<Result<_>>()?
            } else {
                symbols.expr.iter().map(|e| Ok(parse_symbol_expr(e, symbols.aniso)?)).collect::<Result<_>>()?
            };
            let [a, b] = &ops[..] else {
                bail!("compose needs exactly two symbols, got {}", ops.len());
            };
            Ok(vec![symbol_json("compose.json", &a.sharp(b)?)?].into())
        }
        Command::Adjoint { symbol } => Ok(vec![symbol_json("adjoint.json", &symbol.load()?.star())?].into()),
        Command::Quantize { symbol, grid, format } => {
            let op = op_symbol(&symbol.load()?, grid);
            Ok(vec![match format {
                Format::Bin => Artifact { name: "operator.cshb".into(), bytes: io::encode_operator(&op), binary: true },
                Format::Csv => Artifact::text("operator.csv", io::operator_to_csv(&op)),
            }]
            .into())
        }
        Command::Spectrum { model, grid, count } => {
            let r = spectrum(&model.spec(grid)?, count)?;
            Ok(vec![Artifact::json("spectrum.json", &r)?].into())
        }
        Command::SobolevNorm { input, grid, aniso, s, alpha, lambda0 } => {
            let u = read_function(&input, grid)?;
            let norm = sobolev_norm_with(&u, SobolevParams::new(s, alpha), aniso, ReductionKind::BSobolev { lambda0 })?;
            #[derive(Serialize)]
            struct Report {
                s: f64,
                alpha: f64,
                lambda0: f64,
                anisotropy: AnisotropyVector,
                norm: f64,
            }
            Ok(vec![Artifact::json("sobolev.json", &Report { s, alpha, lambda0, anisotropy: aniso, norm })?].into())
        }
        Command::MappingStudy { model, grid, s, alpha, nts, shift } => {
            let spec = model.spec(grid)?;
            let shifts = if shift.is_empty() {
                let (mu, w) = natural_shift(&spec)?;
                vec![(mu, w), (mu - 2.0, w)]
            } else {
                shift
            };
            let nts = if nts.is_empty() { vec![grid.nt] } else { nts };
            let rows = mapping_shift_study(&spec, &s, &alpha, &shifts, &nts)?;
            let mut csv = String::from("nt,s,alpha,s_shift,alpha_shift,norm\n");
            for r in rows {
                writeln!(csv, "{},{},{},{},{},{}", r.nt, f(r.s), f(r.alpha), f(r.s_shift), f(r.alpha_shift), f(r.norm))?;
            }
            Ok(vec![Artifact::text("mapping.csv", csv)].into())
        }
        Command::KernelCutoff { power, gamma, inner, outer, lo, hi, lattice, dsigma } => {
            let lat = SigmaLattice { n: lattice, dsigma };
            let phi = CutoffSpec::new(inner, outer)?;
            let a = lat.sample(|s| C64::new((1.0 + s * s).powf(0.5 * power), 0.0));
            let h0 = kernel_cutoff(&a, lat, &phi, 0.0)?;
            let (slope, points) = cutoff_decay_slope(&a, &h0, lat, lo, hi)?;
            let h = if gamma == 0.0 { h0.clone() } else { kernel_cutoff(&a, lat, &phi, gamma)? };
            // integer sigma from 0 to hi, where the lattice has them
            let mut csv = String::from("sigma,a,h_re,h_im,remainder\n");
            let step = (1.0 / dsigma).round().max(1.0) as usize;
            for m in (0..lattice / 2).step_by(step) {
                let sg = lat.sigma(m);
                if sg > hi {
                    break;
                }
                writeln!(csv, "{},{},{},{},{}", f(sg), f(a[m].re), f(h[m].re), f(h[m].im), f((a[m] - h0[m]).norm()))?;
            }
            #[derive(Serialize)]
            struct Report {
                power: f64,
                gamma: f64,
                cutoff: CutoffSpec,
                lattice: SigmaLattice,
                slope: f64,
                points: Vec<(f64, f64)>,
            }
            let report = Report { power, gamma, cutoff: phi, lattice: lat, slope, points };
            Ok(vec![Artifact::json("kernel_cutoff.json", &report)?, Artifact::text("kernel_cutoff.csv", csv)].into())
        }
    }
}
