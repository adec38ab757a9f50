//! One PASS/FAIL line per acceptance criterion.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use conic_shubin::aniso::*;
use conic_shubin::coeffring::{CRat, CoeffElement, TestMonomial};
use conic_shubin::experiments::*;
use conic_shubin::expr::parse_symbol_expr;
use conic_shubin::parametrix::*;
use conic_shubin::quantize::*;
use conic_shubin::sobolev::*;
use conic_shubin::{FormalSymbol, GridFunction, GridSpec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn l221() -> AnisotropyVector {
    AnisotropyVector::new(2, 2, 1).unwrap()
}

fn sym(e: &str) -> FormalSymbol {
    parse_symbol_expr(e, l221()).unwrap()
}

fn crat(rng: &mut ChaCha8Rng) -> CRat {
    let mut part = || CRat::from_ratio(rng.gen_range(-7..=7), rng.gen_range(1..=5));
    let re = part();
    &re + &part().mul_i()
}

/// Differential symbol with `zeta`, `sigma`, `tau` degrees at most 3 and exact rational coefficients.
fn random_symbol(rng: &mut ChaCha8Rng) -> FormalSymbol {
    loop {
        let mut a = FormalSymbol::zero(l221());
        for _ in 0..rng.gen_range(1..5) {
            let mut c = CoeffElement::zero();
            for _ in 0..rng.gen_range(1..3) {
                let (m, k) = (rng.gen_range(0..=2), rng.gen_range(-2..=2));
                c = &c + &CoeffElement::monomial(m, k, crat(rng));
            }
            let e = (rng.gen_range(0..=3), rng.gen_range(0..=3), rng.gen_range(0..=3));
            a = &a + &FormalSymbol::monomial(l221(), e, c);
        }
        if !a.is_zero() {
            return a;
        }
    }
}

fn random_monomial(rng: &mut ChaCha8Rng) -> TestMonomial {
    TestMonomial::new(crat(rng), rng.gen_range(-3..=3))
}

fn random_band_limited(g: GridSpec, rng: &mut ChaCha8Rng, t_band: i64, z_band: i64) -> GridFunction {
    let coeffs: Vec<(i64, i64, C64)> = (0..6)
        .map(|_| {
            let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (rng.gen_range(-t_band..=t_band), rng.gen_range(-z_band..=z_band), c)
        })
        .collect();
    band_limited(g, &coeffs, 0.8)
}

fn composition_law() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..25 {
        let (a1, a2) = (random_symbol(&mut rng), random_symbol(&mut rng));
        let c = a1.sharp(&a2).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let u = random_monomial(&mut rng);
            ensure!(c.apply(&u) == a1.apply_sum(&a2.apply(&u)), "composition law fails for {a1} # {a2}");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("25 pairs x 10 monomials exact, {secs:.2} s"))
}

fn adjoint() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..25 {
        let a = random_symbol(&mut rng);
        ensure!(a.star().star() == a, "star is not an involution on {a}");
    }
    ensure!(sym("sigma*tau").star() == sym("sigma*tau - i*tau"), "star(sigma tau) != sigma tau - i tau");
    let g = GridSpec::new(-2.0, 2.0, 256, 8).unwrap();
    let cases = [sym("sigma*tau"), sym("sigma^2 + x^-1*exp(i*z)*tau + i*zeta"), sym("(1 + 2*i)*sigma*zeta + x^-2*tau^3")];
    let mut worst: f64 = 0.0;
    for a in &cases {
        let s = a.star();
        for _ in 0..20 {
            let (u, v) = (random_band_limited(g, &mut rng, 6, 2), random_band_limited(g, &mut rng, 6, 2));
            let (au, sv) = (apply_symbol(a, &u), apply_symbol(&s, &v));
            let err = (au.inner(&v) - u.inner(&sv)).norm() / (au.norm() * v.norm() + u.norm() * sv.norm());
            worst = worst.max(err);
        }
    }
    ensure!(worst <= 1e-6, "pairing rel. err {worst:e}");
    Ok(format!("involution on 25 symbols, pairing rel. err {worst:.1e} at nt=256"))
}

fn principal_multiplicativity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..25 {
        let (a1, a2) = (random_symbol(&mut rng), random_symbol(&mut rng));
        let (e1, e2) = (a1.sym_e().unwrap(), a2.sym_e().unwrap());
        let p = a1.sharp(&a2).unwrap().sym_e().unwrap();
        ensure!(p.mu == e1.mu + e2.mu && p.symbol == &e1.symbol * &e2.symbol, "sym_e not multiplicative for {a1}, {a2}");
    }
    Ok("25 random pairs exact".into())
}

fn ellipticity() -> Outcome {
    let opts = EllipticityOptions::default();
    let timed = |a: &FormalSymbol| -> Result<(EllipticityReport, f64), String> {
        let start = Instant::now();
        let r = check_full_ellipticity(a, &opts).map_err(|e| e.to_string())?;
        Ok((r, start.elapsed().as_secs_f64()))
    };
    let mut slowest: f64 = 0.0;
    let (h, t) = timed(&harmonic_symbol())?;
    slowest = slowest.max(t);
    ensure!(h.fully_elliptic, "harmonic rejected: {h:?}");
    let (p, t) = timed(&sym("sigma^2 + zeta^2"))?;
    slowest = slowest.max(t);
    let w = p.witness;
    ensure!(!p.fully_elliptic && (w.zeta, w.sigma, w.tau) == (0.0, 0.0, 1.0), "sigma^2 + zeta^2: {p:?}");
    for m in 1..=3 {
        for n in 1..=3 {
            let (r, t) = timed(&anharmonic_symbol(m, n).unwrap())?;
            slowest = slowest.max(t);
            ensure!(r.fully_elliptic && r.order == (2 * m * (m + n)) as u64, "anharmonic ({m}, {n}): {r:?}");
        }
    }
    ensure!(slowest < 5.0, "slowest check {slowest:.1} s");
    Ok(format!("harmonic yes, pole witness (0,0,1), anharmonic m,n <= 3 yes; slowest {slowest:.2} s"))
}

fn harmonic_spectrum() -> Outcome {
    let start = Instant::now();
    let run = |nt| {
        let spec = ModelOperatorSpec { kind: ModelKind::Harmonic, grid: GridSpec::new(-4.0, 3.0, nt, 32).unwrap() };
        spectrum(&spec, 6).map_err(|e| e.to_string())
    };
    let (coarse, fine) = (run(256)?, run(512)?);
    // 2D oscillator -Delta + |y|^2: E = 2(n1 + n2 + 1)
    let exact = [2.0, 4.0, 4.0, 6.0, 6.0, 6.0];
    for ((f, c), e) in fine.eigenvalues.iter().zip(&coarse.eigenvalues).zip(exact) {
        ensure!((f - e).abs() <= 0.01 * e, "eigenvalues {:?}", fine.eigenvalues);
        ensure!((f - c).abs() <= 0.005 * f, "nt 256 -> 512 moved {c} -> {f}");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 300.0, "took {secs:.0} s");
    let ev: Vec<String> = fine.eigenvalues.iter().map(|v| format!("{v:.4}")).collect();
    Ok(format!("[{}] at nt=512, {secs:.1} s", ev.join(", ")))
}

fn parametrix_decay() -> Outcome {
    let start = Instant::now();
    let g = GridSpec::new(1.0, 3.0, 128, 16).unwrap();
    let b = build_parametrix(&sym("sigma^2 + zeta^2 + tau^4 + 1"), g, 5, InteriorSpec::default(), &EllipticityOptions::default())
        .map_err(|e| e.to_string())?;
    let r = &b.right_remainders;
    ensure!(r[0] / r[2] >= 4.0 && r[0] / r[4] >= 16.0, "remainders {r:?}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.0} s");
    Ok(format!("N=1..5: {:.2e} {:.2e} {:.2e} {:.2e} {:.2e}, {secs:.1} s", r[0], r[1], r[2], r[3], r[4]))
}

fn d_sigma(f: &[C64], h: f64) -> Vec<C64> {
    let n = f.len() as isize;
    (0..n)
        .map(|i| {
            let at = |k: isize| f[(i + k).rem_euclid(n) as usize];
            (at(-2) - at(2) + (at(1) - at(-1)) * 8.0) / (12.0 * h)
        })
        .collect()
}

/// Largest deviation of `H(phi)a(sigma + i gamma)` from its order-4 Taylor expansion on `|sigma| <= 8`.
fn holomorphy_defect(a: &[C64], lat: SigmaLattice, phi: &CutoffSpec, gamma: f64) -> f64 {
    let mut ders = vec![kernel_cutoff(a, lat, phi, 0.0).unwrap()];
    for _ in 0..4 {
        let next = d_sigma(ders.last().unwrap(), lat.dsigma);
        ders.push(next);
    }
    let shifted = kernel_cutoff(a, lat, phi, gamma).unwrap();
    (0..lat.n)
        .filter(|&m| lat.sigma(m).abs() <= 8.0)
        .map(|m| {
            let (mut c, mut sum) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
            for (j, d) in ders.iter().enumerate() {
                sum += d[m] * c;
                c = c * C64::new(0.0, gamma) / (j as f64 + 1.0);
            }
            (shifted[m] - sum).norm()
        })
        .fold(0.0, f64::max)
}

fn kernel_cutoff_check() -> Outcome {
    let lat = SigmaLattice::default();
    let phi = CutoffSpec::default();
    let a = lat.sample(|s| C64::new(1.0 / (1.0 + s * s), 0.0));
    let h = kernel_cutoff(&a, lat, &phi, 0.0).map_err(|e| e.to_string())?;
    let (slope, _) = cutoff_decay_slope(&a, &h, lat, 32.0, 128.0).map_err(|e| e.to_string())?;
    ensure!(slope <= -6.0, "slope {slope}");
    let (e1, e2) = (holomorphy_defect(&a, lat, &phi, 0.1), holomorphy_defect(&a, lat, &phi, 0.05));
    ensure!(e1 <= 1e-2 * 0.1f64.powi(5), "defect at gamma = 0.1 is {e1:e}");
    ensure!((20.0..=45.0).contains(&(e1 / e2)), "defect ratio {} is not O(gamma^5)", e1 / e2);
    Ok(format!("slope {slope:.2} on [32,128]; defect {e1:.1e} at gamma=0.1, ratio {:.1} on halving", e1 / e2))
}

fn sobolev_machinery() -> Outcome {
    let start = Instant::now();
    let l = AnisotropyVector::new(2, 1, 2).unwrap();
    let g = GridSpec::new(-2.0, 2.0, 64, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let fs: Vec<GridFunction> = (0..100).map(|_| random_band_limited(g, &mut rng, 16, 4)).collect();
    for s in [-4.0, -2.0, 2.0, 4.0] {
        let r = embedding_check(l, s, DEFAULT_LAMBDA0, &fs).map_err(|e| e.to_string())?;
        ensure!(r.holds, "embedding chain fails at s = {s}: {r:?}");
    }
    // lambda0 = 10 vs 20: ratios stay inside the pointwise range of the multiplier ratio
    let s = 3.0;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for m in 0..g.nt {
        for q in 0..g.nz {
            let b = |lam| aniso_bracket(&CovarPoint::new(g.k(q), g.sigma(m), lam).unwrap(), l);
            let r = (b(20.0) / b(10.0)).powf(s);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    for u in &fs {
        let p = SobolevParams::new(s, 0.0);
        let n10 = sobolev_norm_with(u, p, l, ReductionKind::BSobolev { lambda0: 10.0 }).unwrap();
        let n20 = sobolev_norm_with(u, p, l, ReductionKind::BSobolev { lambda0: 20.0 }).unwrap();
        ensure!(n20 / n10 >= lo * (1.0 - 1e-12) && n20 / n10 <= hi * (1.0 + 1e-12), "ratio {} outside [{lo}, {hi}]", n20 / n10);
    }
    let spec = ModelOperatorSpec { kind: ModelKind::Harmonic, grid: GridSpec::new(-4.0, 1.0, 128, 8).unwrap() };
    let (mu, w) = natural_shift(&spec).unwrap();
    let rows = mapping_shift_study(&spec, &[2.0], &[0.0, 1.0], &[(mu, w), (mu - 2.0, w)], &[128, 256, 512]).map_err(|e| e.to_string())?;
    let series = |shift: f64, alpha: f64| -> Vec<f64> { rows.iter().filter(|r| r.s_shift == shift && r.alpha == alpha).map(|r| r.norm).collect() };
    let mut summary = Vec::new();
    for alpha in [0.0, 1.0] {
        let (good, bad) = (series(mu, alpha), series(mu - 2.0, alpha));
        let spread = good.iter().cloned().fold(0.0, f64::max) / good.iter().cloned().fold(f64::INFINITY, f64::min);
        ensure!(spread < 1.2, "natural shift not bounded at alpha = {alpha}: {good:?}");
        ensure!(bad.windows(2).all(|p| p[1] > 1.5 * p[0]), "understated shift does not grow at alpha = {alpha}: {bad:?}");
        summary.push(format!("alpha={alpha}: {:.2}/{:.2}/{:.2} vs {:.0}/{:.0}/{:.0}", good[0], good[1], good[2], bad[0], bad[1], bad[2]));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.0} s");
    Ok(format!("embedding and lambda0 ok; mapping norms {}; {secs:.1} s", summary.join("; ")))
}

fn anisotropy_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ls: Vec<AnisotropyVector> = [(2, 2, 1), (3, 3, 1), (2, 1, 2), (1, 1, 1), (3, 2, 2)]
        .into_iter()
        .map(|(a, b, c)| AnisotropyVector::new(a, b, c).unwrap())
        .collect();
    let point = |rng: &mut ChaCha8Rng| CovarPoint::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(0.0..10.0)).unwrap();
    for _ in 0..1000 {
        let l = ls[rng.gen_range(0..ls.len())];
        let p = point(&mut rng);
        let rho = 2f64.powi(rng.gen_range(-10..=10));
        let (base, scaled) = (aniso_abs(&p, l), aniso_abs(&p.dilate(rho, l), l));
        ensure!((scaled - rho * base).abs() <= 1e-12 * rho * base, "homogeneity fails at {p:?}");
    }
    for _ in 0..1000 {
        let l = ls[rng.gen_range(0..ls.len())];
        let (p, q, s) = (point(&mut rng), point(&mut rng), rng.gen_range(-6.0..6.0f64));
        let lhs = aniso_bracket(&(p + q), l).powf(s);
        let rhs = 2f64.powf(s.abs()) * aniso_bracket(&p, l).powf(s) * aniso_bracket(&q, l).powf(s.abs());
        ensure!(lhs <= rhs * (1.0 + 1e-12), "Peetre fails at {p:?}, {q:?}, s = {s}");
    }
    let consts: Vec<(f64, f64)> = ls.iter().map(|&l| sandwich_constants(l, &sandwich_sample(l))).collect();
    for _ in 0..1000 {
        let i = rng.gen_range(0..ls.len());
        let (l, (c, cc)) = (ls[i], consts[i]);
        let dirs = hemisphere_sample(l, 12);
        let p = dirs[rng.gen_range(0..dirs.len())].dilate(10f64.powf(rng.gen_range(-3.0..6.0)), l);
        let total = l.total() as f64;
        let (a, b) = (aniso_bracket(&p, l), japanese_bracket(&p));
        ensure!(c * b.powf(1.0 / total) <= a && a <= cc * b.powf(total), "sandwich fails at {p:?}");
    }
    Ok("homogeneity, Peetre, sandwich: 1000 samples each".into())
}

fn collect(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

fn cli_determinism() -> Outcome {
    let cases: &[&[&str]] = &[
        &["check-ellipticity", "--expr", "sigma^2 + zeta^2 + tau^4"],
        &["check-ellipticity", "--expr", "sigma^2 + zeta^2"],
        &["compose", "--expr", "sigma^2 + exp(i*z)*x^-1*tau", "--expr", "zeta*sigma - tau^2"],
        &["adjoint", "--expr", "sigma*tau"],
        &["quantize", "--expr", "sigma^2 + tau", "--grid", "-1,1,16,8"],
        &["build-parametrix", "--expr", "sigma^2 + zeta^2 + tau^4 + 1", "--grid", "1,3,64,8"],
        &["spectrum", "--grid", "-4,3,64,8"],
        &["mapping-study", "--grid", "-4,1,32,8", "--nts", "32,64"],
        &["kernel-cutoff", "--lattice", "16384", "--dsigma", "0.0625"],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run_all = |tag: &str, threads: &str| -> Result<Vec<BTreeMap<String, Vec<u8>>>, String> {
        let mut out = Vec::new();
        for (i, args) in cases.iter().enumerate() {
            let dir = tmp.path().join(format!("{tag}-{i}"));
            let st = Command::new(env!("CARGO_BIN_EXE_conic-shubin"))
                .args(*args)
                .arg("--out")
                .arg(&dir)
                .env("CONIC_SHUBIN_THREADS", threads)
                .status()
                .map_err(|e| e.to_string())?;
            ensure!(matches!(st.code(), Some(0 | 2)), "{args:?} exited with {st}");
            out.push(collect(&dir));
        }
        Ok(out)
    };
    let a = run_all("a", "1")?;
    let b = run_all("b", "1")?;
    let c = run_all("c", "4")?;
    ensure!(a == b, "outputs differ between two runs");
    ensure!(a == c, "outputs differ between 1 and 4 threads");
    let files: usize = a.iter().map(|m| m.len()).sum();
    Ok(format!("{} commands, {files} files byte-identical across 2 runs and 1/4 threads", cases.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact composition law", composition_law),
        ("adjoint correctness", adjoint),
        ("principal-symbol multiplicativity", principal_multiplicativity),
        ("ellipticity verdicts", ellipticity),
        ("harmonic-oscillator spectrum", harmonic_spectrum),
        ("parametrix remainder decay", parametrix_decay),
        ("kernel cut-off", kernel_cutoff_check),
        ("Sobolev machinery", sobolev_machinery),
        ("anisotropy identities", anisotropy_identities),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
