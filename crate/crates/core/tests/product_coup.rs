use mcm_core::exact_algebra::MultiPoly;
use mcm_core::product_coup::*;
use mcm_core::schedule::ProblemShape;
use mcm_core::Field;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HORIZON: u64 = 10_000;

/// Representable values of s·ℕ + (s+1)·ℕ up to `horizon`, by direct marking.
fn representable(s: u64, horizon: u64) -> Vec<bool> {
    let mut ok = vec![false; horizon as usize + 1];
    for p in 0..=horizon / s {
        for q in 0..=(horizon - p * s) / (s + 1) {
            ok[(p * s + q * (s + 1)) as usize] = true;
        }
    }
    ok
}

#[test]
fn semigroup_bound_holds_for_small_generators() {
    for s in 2..=50u64 {
        let rep = verify_semigroup_bound(s, HORIZON).unwrap();
        assert!(rep.pass && rep.exceptions.is_empty(), "s = {s}");
        assert_eq!(rep.threshold, s * (s - 1));
        let ok = representable(s, HORIZON);
        let want: Vec<u64> = (0..=HORIZON).filter(|&d| !ok[d as usize]).collect();
        assert_eq!(rep.unrepresentable, want, "s = {s}");
        // s(s-1) - 1 is the largest gap.
        assert_eq!(want.last().copied(), if s == 2 { Some(1) } else { Some(s * (s - 1) - 1) });
    }
    assert_eq!(verify_semigroup_bound(3, 100).unwrap().unrepresentable, vec![1, 2, 5]);
    assert!(verify_semigroup_bound(1, 10).is_err());
}

#[test]
fn nn2_bounds() {
    let r4 = effective_bound_nn2(4).unwrap();
    assert_eq!(r4.exact, Some(true));
    assert_eq!(r4.d0, Some(BigUint::from(65535u32)));
    assert_eq!(r4.full, BigUint::from(4u32).pow(16));
    assert!(r4.pass());

    let r3 = effective_bound_nn2(3).unwrap();
    assert_eq!(r3.ceiling_lhs, Some(BigUint::from(141u32 * 140)));
    assert_eq!(r3.floor_lhs, Some(BigUint::from(140u32 * 139)));
    assert_eq!(r3.ceiling_variant, Some(false));
    assert_eq!(r3.floor_variant, Some(true));
    assert!(r3.real && !r3.pass());

    assert!(effective_bound_nn2(2).unwrap().pass());
    for n in [6, 8] {
        assert!(effective_bound_nn2(n).unwrap().pass(), "N = {n}");
    }
    assert!(effective_bound_nn2(0).is_err());
}

#[test]
fn rescaled_identities_hold_on_the_grid() {
    let mut checked = 0;
    for d in 1..=100 {
        for dp in 1..=d {
            for s in 1..=20 {
                for l in 1..=20 {
                    for a in [-7, 0, 3] {
                        assert!(rescaled_exponent_identities(d, dp, s, l, a), "{d} {dp} {s} {l} {a}");
                        checked += 1;
                    }
                }
            }
        }
    }
    assert_eq!(checked, 5050 * 400 * 3);
}

fn monomials(n: usize, deg: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return vec![vec![deg]];
    }
    (0..=deg)
        .flat_map(|e| {
            monomials(n - 1, deg - e).into_iter().map(move |mut m| {
                m.insert(0, e);
                m
            })
        })
        .collect()
}

fn random_form(n: usize, deg: u32, p: u64, rng: &mut ChaCha8Rng) -> MultiPoly {
    let field = Field::prime(p as u32).unwrap();
    loop {
        let terms: Vec<String> = monomials(n, deg)
            .into_iter()
            .filter_map(|m| {
                let c = rng.gen_range(0..p);
                let vars: Vec<String> = m.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, e)| format!("z{i}^{e}")).collect();
                (c != 0).then(|| format!("{c}*{}", vars.join("*")))
            })
            .collect();
        if !terms.is_empty() {
            return MultiPoly::parse(&terms.join(" + "), n, field).unwrap();
        }
    }
}

/// Each F_i is a product of factors of degrees s and s + 1.
fn factors(shape: ProblemShape, s: u32, p: u64, seed: u64) -> Vec<Vec<MultiPoly>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..shape.equations()).map(|_| vec![random_form(shape.dim, s, p, &mut rng), random_form(shape.dim, s + 1, p, &mut rng)]).collect()
}

#[test]
fn decomposition_holds_exhaustively() {
    let cases = [(ProblemShape::new(2, 1, 0).unwrap(), 1u32), (ProblemShape::new(2, 1, 0).unwrap(), 2), (ProblemShape::new(3, 2, 0).unwrap(), 1)];
    for (shape, s) in cases {
        for seed in 0..5 {
            let fs = factors(shape, s, 3, seed);
            let rep = verify_product_decomposition(&fs, shape, 3).unwrap();
            assert!(rep.pass, "{shape:?} s {s} seed {seed}: {:?} {:?}", rep.missing_from_union.first(), rep.extra_in_union.first());
            assert_eq!(rep.locus, rep.union);
            assert_eq!(rep.pieces, 3usize.pow(shape.equations() as u32));
            let points = (3u64.pow(shape.dim as u32 + 1) - 1) / 2;
            let dirs = (3u64.pow(shape.dim as u32) - 1) / 2;
            assert_eq!(rep.pairs_scanned as u64, points * dirs);
        }
    }
}

#[test]
fn quadratic_factors_with_a_value_equation() {
    let shape = ProblemShape::new(3, 1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let fs: Vec<Vec<MultiPoly>> = (0..2).map(|_| (0..3).map(|_| random_form(3, 2, 3, &mut rng)).collect()).collect();
    let rep = verify_product_decomposition(&fs, shape, 3).unwrap();
    assert!(rep.pass);
    // Six options for the tangent equation, three for the value equation.
    assert_eq!(rep.pieces, 18);
}

#[test]
fn single_factors_reduce_to_the_plain_locus() {
    let shape = ProblemShape::new(3, 2, 0).unwrap();
    let fs = factors(shape, 1, 3, 9);
    let products: Vec<Vec<MultiPoly>> = fs.iter().map(|f| vec![&f[0] * &f[1]]).collect();
    let plain = verify_product_decomposition(&products, shape, 3).unwrap();
    let split = verify_product_decomposition(&fs, shape, 3).unwrap();
    assert!(plain.pass && plain.pieces == 1);
    assert_eq!(plain.locus, split.locus);
}

#[test]
fn decomposition_rejects_bad_input() {
    let shape = ProblemShape::new(2, 1, 0).unwrap();
    let fs = factors(shape, 1, 3, 0);
    assert!(verify_product_decomposition(&fs, shape, 4).is_err());
    assert!(verify_product_decomposition(&[], shape, 3).is_err());
    assert!(verify_product_decomposition(&[vec![]], shape, 3).is_err());
}

proptest! {
    #[test]
    fn split_is_a_valid_decomposition(s in 2u64..200, d in 0u64..100_000) {
        match frobenius_split(d, s) {
            Ok((p, q)) => {
                prop_assert_eq!(p * s + q * (s + 1), d);
                prop_assert!(q < s);
                // No smaller q works.
                prop_assert!((0..q).all(|q2| q2 * (s + 1) > d || (d - q2 * (s + 1)) % s != 0));
            }
            Err(_) => prop_assert!(d < s * (s - 1)),
        }
    }

    #[test]
    fn decomposition_is_symmetric_in_factor_order(seed in 0u64..1000) {
        let shape = ProblemShape::new(2, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = vec![(0..3).map(|k| random_form(2, 1 + (k % 2) as u32, 3, &mut rng)).collect::<Vec<_>>()];
        let mut rev = fs.clone();
        rev[0].reverse();
        let a = verify_product_decomposition(&fs, shape, 3).unwrap();
        let b = verify_product_decomposition(&rev, shape, 3).unwrap();
        prop_assert!(a.pass && b.pass);
        prop_assert_eq!((a.locus, a.union, a.pieces), (b.locus, b.union, b.pieces));
    }
}
