use std::time::Instant;

use rayon::prelude::*;

use mcm_core::exact_algebra::{MultiPoly, PolyMatrix};
use mcm_core::identity_verifier::*;
use mcm_core::pipeline::family_bundles;
use mcm_core::schedule::{build_schedule, fermat_divided_twist, hidden_divided_twist, mcm_twist, subsets, FormFamily, ProblemShape};
use mcm_core::section_builder::*;
use mcm_core::Field;

const FAMILIES_PER_SHAPE: u64 = 10;
const SZ_TRIALS: u32 = 20;
/// Largest admissible log2 false-pass probability per probabilistic identity.
const MAX_ERROR_LOG2: f64 = -40.0;

fn fermat(n: usize, c: usize, r: usize, lambda: Vec<u32>, degrees: Vec<u32>, seed: u64) -> SectionFamily {
    let shape = ProblemShape::new(n, c, r).unwrap();
    build_sections(&FamilySpec {
        shape,
        mode: SectionMode::GeneralFermat { lambda, degrees },
        field: Field::Rational,
        twists: vec![0; c + r],
        source: CoeffSource::Random { seed },
    })
    .unwrap()
}

fn mcm(n: usize, c: usize, r: usize, seed: u64) -> SectionFamily {
    let shape = ProblemShape::new(n, c, r).unwrap();
    let schedule = build_schedule(shape, 2, &vec![1; c + r]).unwrap();
    build_sections(&FamilySpec {
        shape,
        mode: SectionMode::Mcm { schedule },
        field: Field::Rational,
        twists: vec![0; c + r],
        source: CoeffSource::Random { seed },
    })
    .unwrap()
}

/// Fermat families with λ varying by seed and degrees large enough for every λ_j.
fn fermat_family(n: usize, c: usize, r: usize, seed: u64) -> SectionFamily {
    let lambda: Vec<u32> = (0..=n).map(|j| 2 + ((seed as usize + j) % 2) as u32).collect();
    let degrees: Vec<u32> = (0..c + r).map(|i| 3 + (i as u32 + seed as u32) % 2).collect();
    fermat(n, c, r, lambda, degrees, 1000 + seed)
}

fn check_all_gluing(fam: &SectionFamily, mode: CheckMode) -> VerificationReport {
    let mut rep = VerificationReport::default();
    for (_, v, b) in family_bundles(fam).unwrap() {
        for sel in subsets(fam.shape.c, fam.shape.n() - v.len()) {
            rep.extend(verify_gluing_all(fam, &b, &sel, mode).unwrap());
        }
    }
    rep
}

fn check_all_transitions(fam: &SectionFamily, mode: CheckMode, max_pairs: usize) -> VerificationReport {
    let mut rep = VerificationReport::default();
    for (_, v, b) in family_bundles(fam).unwrap() {
        let charts = &b.retained;
        let pairs: Vec<(usize, usize)> =
            charts.iter().enumerate().flat_map(|(x, &l1)| charts[x + 1..].iter().map(move |&l2| (l1, l2))).take(max_pairs).collect();
        for sel in subsets(fam.shape.c, fam.shape.n() - v.len()) {
            for omit in 0..b.ncols() {
                for &(l1, l2) in &pairs {
                    rep.extend(verify_transition(fam, &b, &sel, omit, l1, l2, mode).unwrap());
                }
            }
        }
    }
    rep
}

fn assert_probabilistic_bound(rep: &VerificationReport) {
    for c in &rep.checks {
        if c.mode == "probabilistic" {
            assert_eq!(c.trials, Some(SZ_TRIALS));
            assert!(c.error_log2.unwrap() < MAX_ERROR_LOG2, "{} {:?}", c.id, c.error_log2);
        }
    }
}

#[test]
fn gluing_fermat_small_shapes_exact() {
    for (n, c, r) in [(2, 1, 0), (3, 1, 1), (3, 2, 0)] {
        for seed in 0..FAMILIES_PER_SHAPE {
            let fam = fermat_family(n, c, r, seed);
            let rep = check_all_gluing(&fam, CheckMode::Exact);
            assert!(rep.pass() && !rep.checks.is_empty(), "({n},{c},{r}) seed {seed}");
            assert!(rep.checks.iter().all(|c| c.mode == "exact"));
        }
    }
}

#[test]
fn gluing_mcm_small_shapes_exact() {
    for (n, c, r) in [(2, 1, 0), (3, 1, 1), (3, 2, 0)] {
        for seed in 0..FAMILIES_PER_SHAPE {
            let fam = mcm(n, c, r, seed);
            let rep = check_all_gluing(&fam, CheckMode::Exact);
            assert!(rep.pass() && !rep.checks.is_empty(), "({n},{c},{r}) seed {seed}");
        }
    }
}

#[test]
fn gluing_n4_probabilistic() {
    let t = Instant::now();
    let jobs: Vec<(u64, usize)> = (0..FAMILIES_PER_SHAPE).flat_map(|s| (0..3).map(move |k| (s, k))).collect();
    jobs.into_par_iter().for_each(|(seed, k)| {
        let mode = CheckMode::Probabilistic { trials: SZ_TRIALS, seed };
        let fam = match k {
            0 => mcm(4, 3, 0, seed),
            1 => mcm(4, 2, 0, seed),
            _ => fermat_family(4, 2, 0, seed),
        };
        let rep = check_all_gluing(&fam, mode);
        assert!(rep.pass() && !rep.checks.is_empty(), "{:?} seed {seed}", fam.shape);
        assert_probabilistic_bound(&rep);
    });
    assert!(t.elapsed().as_secs() < 300);
}

#[test]
fn transitions_exact_small_shapes() {
    for seed in 0..3 {
        for fam in [fermat_family(2, 1, 0, seed), fermat_family(3, 2, 0, seed), fermat_family(3, 1, 1, seed), mcm(3, 1, 1, seed), mcm(3, 2, 0, seed)] {
            let rep = check_all_transitions(&fam, CheckMode::Exact, usize::MAX);
            assert!(rep.pass() && !rep.checks.is_empty(), "{:?} seed {seed}", fam.shape);
        }
    }
}

#[test]
fn transitions_n4_probabilistic() {
    for seed in 0..2 {
        let mode = CheckMode::Probabilistic { trials: SZ_TRIALS, seed };
        for fam in [mcm(4, 3, 0, seed), mcm(4, 2, 0, seed)] {
            let rep = check_all_transitions(&fam, mode, 3);
            assert!(rep.pass() && !rep.checks.is_empty(), "{:?} seed {seed}", fam.shape);
            assert_probabilistic_bound(&rep);
        }
    }
}

#[test]
fn transition_exponents_match_the_ledger() {
    let mut compared = 0;
    for (n, c, r) in [(2, 1, 0), (3, 1, 1), (3, 2, 0), (4, 3, 0), (4, 2, 0), (4, 2, 1), (5, 4, 0), (5, 3, 1)] {
        let fam = mcm(n, c, r, 1);
        let s = fam.schedule().unwrap().clone();
        let grouped = fam.formal_matrix(HiddenConvention::ZeroDz).unwrap();
        for eta in 0..fam.shape.n() {
            for v in subsets(n + 1, eta) {
                let hidden = fam.hidden_matrix(&v, HiddenConvention::ZeroDz).unwrap();
                let base = if eta == 0 { &grouped } else { &hidden };
                for f in FormFamily::all(n - eta) {
                    let b = base.combine(f).unwrap();
                    for sel in subsets(c, fam.shape.n() - eta) {
                        let ledger = mcm_twist(&s, f, eta, &sel).unwrap();
                        assert_eq!(num_bigint::BigInt::from(b.formula_twist(&sel).unwrap()), ledger, "({n},{c},{r}) {f:?} v {v:?}");
                        compared += 1;
                    }
                }
            }
        }
    }
    assert!(compared > 100);

    let fam = fermat(4, 2, 0, vec![2, 3, 2, 2, 3], vec![4, 3], 3);
    let degrees = [4, 3];
    let lambda = [2, 3, 2, 2, 3];
    let k = build_matrices(&fam).unwrap();
    for sel in subsets(2, 2) {
        assert_eq!(k.formula_twist(&sel).unwrap(), fermat_divided_twist(&degrees, &lambda, &sel));
    }
    for v in subsets(5, 1) {
        let h = build_selected(&k, &Selection::Hidden { vanishing: v.clone() }).unwrap();
        for sel in subsets(2, 1) {
            assert_eq!(h.formula_twist(&sel).unwrap(), hidden_divided_twist(&degrees, &lambda, &sel, &v));
        }
    }
}

#[test]
fn divisibility_mcm_shapes() {
    let t = Instant::now();
    for (n, c, r) in [(2, 1, 0), (3, 1, 1), (3, 2, 0), (4, 3, 0), (4, 2, 0), (4, 2, 1), (4, 1, 2)] {
        for seed in 0..3 {
            let fam = mcm(n, c, r, seed);
            let mut rep = VerificationReport::default();
            for (_, _, b) in family_bundles(&fam).unwrap() {
                rep.extend(verify_divisibility(&b).unwrap());
            }
            assert!(rep.pass() && !rep.checks.is_empty(), "({n},{c},{r})");
            assert_eq!(rep.count(Verdict::Fail), 0);
        }
    }
    assert!(t.elapsed().as_secs() < 60);
}

#[test]
fn hidden_forms_fermat() {
    let fam = fermat(4, 2, 0, vec![2, 2, 2, 2, 2], vec![3, 2], 13);
    for conv in [HiddenConvention::ZeroDz, HiddenConvention::KeepDz] {
        for v in [vec![], vec![1], vec![4]] {
            let sel: &[usize] = if v.is_empty() { &[0, 1] } else { &[1] };
            let r = verify_hidden(&fam, &v, sel, conv, CheckMode::Exact).unwrap();
            assert!(r.pass() && !r.checks.is_empty(), "{conv:?} {v:?}");
        }
    }
}

#[test]
fn cramer_and_surjectivity() {
    for rows in 2..=6 {
        let r = verify_cramer(rows, 10, rows as u64, 2_147_483_647).unwrap();
        assert!(r.pass() && !r.checks.is_empty());
    }
    for (n, d) in [(2, 1), (3, 2), (4, 3)] {
        assert!(verify_surjectivity(n, d, None, 10, 7, 2_147_483_647).unwrap().pass());
    }
}

// Mutations below must be caught.

fn tamper_entry(b: &FormalMatrixBundle, i: usize, j: usize) -> FormalMatrixBundle {
    let mut rows = b.matrix.rows().to_vec();
    let n = b.n();
    rows[i][j] = &rows[i][j] + &MultiPoly::z(n, Field::Rational, 0).pow(3);
    FormalMatrixBundle { matrix: PolyMatrix::new(rows).unwrap(), ..b.clone() }
}

#[test]
fn tampered_matrix_fails_gluing() {
    let fam = fermat(3, 2, 0, vec![2, 2, 2, 2], vec![3, 2], 9);
    let k = build_matrices(&fam).unwrap();
    let bad = tamper_entry(&k, 2, 1);
    for mode in [CheckMode::Exact, CheckMode::Probabilistic { trials: SZ_TRIALS, seed: 3 }] {
        let r = verify_gluing_all(&fam, &bad, &[0], mode).unwrap();
        assert!(!r.pass(), "{mode:?}");
        let failed = r.checks.iter().find(|c| c.verdict == Verdict::Fail).unwrap();
        assert!(failed.witness.is_some());
    }

    let fam = mcm(4, 3, 0, 2);
    let b = build_matrices(&fam).unwrap().combine(FormFamily::Nu { nu: 1 }).unwrap();
    let bad = tamper_entry(&b, 3, 2);
    let r = verify_gluing_all(&fam, &bad, &[0], CheckMode::Probabilistic { trials: SZ_TRIALS, seed: 3 }).unwrap();
    assert!(!r.pass());
}

#[test]
fn tampered_exponent_fails_transition() {
    let mut fam = fermat(3, 2, 0, vec![2, 2, 2, 2], vec![3, 2], 9);
    let k = build_matrices(&fam).unwrap();
    fam.twists[0] += 1;
    assert!(!verify_transition(&fam, &k, &[0], 1, 0, 2, CheckMode::Exact).unwrap().pass());
    assert!(!verify_transition(&fam, &k, &[0], 1, 0, 2, CheckMode::Probabilistic { trials: SZ_TRIALS, seed: 1 }).unwrap().pass());

    let mut fam = mcm(4, 3, 0, 2);
    let b = build_matrices(&fam).unwrap().combine(FormFamily::TauRho { tau: 0, rho: 2 }).unwrap();
    fam.twists[1] -= 1;
    assert!(!verify_transition(&fam, &b, &[1], 0, 1, 3, CheckMode::Probabilistic { trials: SZ_TRIALS, seed: 1 }).unwrap().pass());
}

#[test]
fn tampered_divisor_fails_divisibility() {
    let fam = mcm(4, 3, 0, 2);
    let mut b = build_matrices(&fam).unwrap().combine(FormFamily::Nu { nu: 0 }).unwrap();
    // F-rows carry one power of z beyond the declared divisor, so +1 still divides.
    b.divisors.as_mut().unwrap()[2].1 += 2;
    assert!(!verify_divisibility(&b).unwrap().pass());
}
