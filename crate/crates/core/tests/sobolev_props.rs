use conic_shubin::aniso::{aniso_bracket, AnisotropyVector, CovarPoint};
use conic_shubin::quantize::*;
use conic_shubin::sobolev::*;
use conic_shubin::symbol::FormalSymbol;
use conic_shubin::{GridSpec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l21() -> AnisotropyVector {
    AnisotropyVector::new(2, 1, 2).unwrap()
}

fn grid() -> GridSpec {
    GridSpec::new(-2.0, 2.0, 64, 16).unwrap()
}

fn random_functions(g: GridSpec, count: usize, seed: u64) -> Vec<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let terms = rng.gen_range(1..8);
            let coeffs: Vec<(i64, i64, C64)> = (0..terms)
                .map(|_| {
                    (
                        rng.gen_range(-(g.nt as i64) / 4..=g.nt as i64 / 4),
                        rng.gen_range(-(g.nz as i64) / 4..=g.nz as i64 / 4),
                        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    )
                })
                .collect();
            band_limited(g, &coeffs, 0.8)
        })
        .collect()
}

#[test]
fn embedding_chain_holds() {
    let fs = random_functions(grid(), 100, 1);
    for s in [-4.0, -2.0, 2.0, 4.0] {
        let r = embedding_check(l21(), s, DEFAULT_LAMBDA0, &fs).unwrap();
        assert!(r.holds, "{r:?}");
        assert_eq!(r.trials, 100);
    }
}

/// Pointwise range of `r_{lambda1} / r_{lambda0}` over the frequency lattice.
fn multiplier_ratio_range(g: GridSpec, s: f64, lam0: f64, lam1: f64) -> (f64, f64) {
    let w = AnisotropyVector::new(2, 1, 2).unwrap();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for m in 0..g.nt {
        for q in 0..g.nz {
            // Nyquist bins are symmetric in the sign of the frequency, so one sign suffices
            let (k, sg) = (g.k(q), g.sigma(m));
            let b0 = aniso_bracket(&CovarPoint::new(k, sg, lam0).unwrap(), w);
            let b1 = aniso_bracket(&CovarPoint::new(k, sg, lam1).unwrap(), w);
            let r = (b1 / b0).powf(s);
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

#[test]
fn lambda0_changes_give_equivalent_norms() {
    let g = grid();
    let fs = random_functions(g, 100, 2);
    for s in [-3.0, 1.5, 4.0] {
        let (lo, hi) = multiplier_ratio_range(g, s, 10.0, 20.0);
        assert!(lo > 0.0 && hi.is_finite());
        for u in &fs {
            let p = SobolevParams::new(s, 0.3);
            let a = sobolev_norm_with(u, p, l21(), ReductionKind::BSobolev { lambda0: 10.0 }).unwrap();
            let b = sobolev_norm_with(u, p, l21(), ReductionKind::BSobolev { lambda0: 20.0 }).unwrap();
            let r = b / a;
            assert!(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12), "s = {s}: {r} not in [{lo}, {hi}]");
        }
    }
}

#[test]
fn duality_pairing() {
    let g = grid();
    let us = random_functions(g, 30, 3);
    let vs = random_functions(g, 30, 4);
    for (u, v) in us.iter().zip(&vs) {
        for (s, alpha) in [(2.0, 0.5), (-1.5, -1.0), (4.0, 0.0)] {
            let lhs = u.inner(v).norm();
            let rhs = sobolev_norm(u, SobolevParams::new(s, alpha), l21()) * sobolev_norm(v, SobolevParams::new(-s, -alpha), l21());
            assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
        }
    }
}

#[test]
fn monotone_in_s_and_alpha() {
    let g = grid();
    let fs = random_functions(g, 50, 5);
    let id = GridOperator::identity(g);
    for &(s, s2, a, a2) in &[(3.0, 1.0, 0.0, 0.0), (2.0, 2.0, -0.5, 0.5), (1.0, -2.0, 0.2, 1.0)] {
        let c = mapping_bound(&id, s - s2, a2 - a, SobolevParams::new(s, a), l21(), ReductionKind::default()).unwrap();
        assert!(c.is_finite());
        if a == a2 {
            assert!(c <= 1.0 + 1e-12);
        }
        for u in &fs {
            let strong = sobolev_norm(u, SobolevParams::new(s, a), l21());
            let weak = sobolev_norm(u, SobolevParams::new(s2, a2), l21());
            assert!(weak <= c * strong * (1.0 + 1e-10));
        }
    }
}

#[test]
fn multiplication_by_x_has_order_l3() {
    let l = AnisotropyVector::new(2, 2, 1).unwrap();
    let mut norms = Vec::new();
    for nt in [64, 128, 256] {
        let g = GridSpec::new(-2.0, 2.0, nt, 8).unwrap();
        let tau = op_symbol(&FormalSymbol::tau(l), g);
        let n = mapping_bound(&tau, l.l3() as f64, 0.0, SobolevParams::new(1.0, 0.0), l, ReductionKind::Calculus).unwrap();
        norms.push(n);
    }
    let spread = norms.iter().cloned().fold(0.0, f64::max) / norms.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1.1, "{norms:?}");
}

#[test]
fn embedding_singular_values_decay() {
    let sv = embedding_singular_values(grid(), 2.0, 0.0, l21()).unwrap();
    assert!(sv.windows(2).all(|w| w[0] >= w[1]));
    assert!(sv.last().unwrap() / sv[0] < 1e-2);
    assert!(embedding_singular_values(grid(), 0.0, 1.0, l21()).is_err());
}
