use std::time::Instant;

use conic_shubin::coeffring::CRat;
use conic_shubin::experiments::{anharmonic_symbol, harmonic_symbol, radial_block, ModelKind, ModelOperatorSpec};
use conic_shubin::expr::parse_symbol_expr;
use conic_shubin::parametrix::*;
use conic_shubin::{AnisotropyVector, FormalSymbol, GridSpec, C64};
use nalgebra::DMatrix;
use num::BigRational;

fn l221() -> AnisotropyVector {
    AnisotropyVector::new(2, 2, 1).unwrap()
}

fn symbols() -> Vec<FormalSymbol> {
    let mut out = vec![harmonic_symbol(), parse_symbol_expr("sigma^2 + zeta^2 + tau^4 + 1", l221()).unwrap()];
    out.push(anharmonic_symbol(2, 1).unwrap());
    out
}

#[test]
fn verdict_and_witness_are_scale_invariant() {
    let opts = EllipticityOptions::default();
    let c = CRat::new(BigRational::from_integer(3.into()), BigRational::from_integer((-4).into()));
    let mut all = symbols();
    all.push(parse_symbol_expr("sigma^2 + zeta^2", l221()).unwrap());
    for a in all {
        let r = check_full_ellipticity(&a, &opts).unwrap();
        let rc = check_full_ellipticity(&a.scale(&c), &opts).unwrap();
        assert_eq!(r.fully_elliptic, rc.fully_elliptic);
        assert_eq!(r.witness, rc.witness);
        assert!((rc.min_modulus - 5.0 * r.min_modulus).abs() <= 1e-12 * (1.0 + rc.min_modulus));
    }
}

#[test]
fn verdict_is_invariant_under_weight_conjugation() {
    let opts = EllipticityOptions::default();
    for a in symbols() {
        let r = check_full_ellipticity(&a, &opts).unwrap();
        for beta in [BigRational::from_integer((-1).into()), BigRational::new(1.into(), 2.into()), BigRational::from_integer(2.into())] {
            assert_eq!(check_full_ellipticity(&a.conjugate_weight(&beta), &opts).unwrap(), r);
        }
    }
}

#[test]
fn anharmonic_family_is_fully_elliptic() {
    for m in 1..=3 {
        for n in 1..=3 {
            let start = Instant::now();
            let a = anharmonic_symbol(m, n).unwrap();
            let r = check_full_ellipticity(&a, &EllipticityOptions::default()).unwrap();
            assert!(r.fully_elliptic, "({m}, {n}): {r:?}");
            assert_eq!(r.order, (2 * m * (m + n)) as u64);
            assert!(start.elapsed().as_secs_f64() < 5.0);
        }
    }
}

#[test]
fn tolerance_must_be_positive() {
    let opts = EllipticityOptions { tol: 0.0, ..Default::default() };
    assert!(check_full_ellipticity(&harmonic_symbol(), &opts).is_err());
}

#[test]
fn neumann_remainders_decay() {
    let a = parse_symbol_expr("sigma^2 + zeta^2 + tau^4 + 1", l221()).unwrap();
    let g = GridSpec::new(1.0, 3.0, 128, 16).unwrap();
    let b = build_parametrix(&a, g, 5, InteriorSpec::default(), &EllipticityOptions::default()).unwrap();
    for rs in [&b.right_remainders, &b.left_remainders] {
        assert!(rs.windows(2).all(|w| w[1] <= w[0]), "{rs:?}");
        assert!(rs[0] / rs[2] >= 4.0, "{rs:?}");
        assert!(rs[0] / rs[4] >= 16.0, "{rs:?}");
    }
    assert!(b.ellipticity.fully_elliptic);
}

fn harmonic_blocks(nt: usize) -> Vec<DMatrix<C64>> {
    let spec = ModelOperatorSpec { kind: ModelKind::Harmonic, grid: GridSpec::new(-4.0, 3.0, nt, 8).unwrap() };
    (0..spec.grid.nz)
        .map(|q| radial_block(&spec, spec.grid.k(q)).unwrap().0.map(|v| C64::new(v, 0.0)))
        .collect()
}

#[test]
fn harmonic_oscillator_is_invertible_with_gap_two() {
    let coarse = fredholm_probe_blocks(&harmonic_blocks(128));
    let fine = fredholm_probe_blocks(&harmonic_blocks(256));
    for r in [&coarse, &fine] {
        assert_eq!((r.dim_ker, r.dim_coker), (0, 0));
        assert!((r.smallest[0] - 2.0).abs() < 0.02, "{:?}", r.smallest);
    }
}
