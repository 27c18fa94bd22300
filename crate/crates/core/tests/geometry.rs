use mcm_core::exact_algebra::MultiPoly;
use mcm_core::finite_geometry::*;
use mcm_core::schedule::{build_schedule, ProblemShape};
use mcm_core::section_builder::*;
use mcm_core::Field;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const AGREEMENT_SAMPLES: u64 = 100_000;
const CROSSCHECK_SAMPLES: u64 = 10_000;
const RESEEDS: u32 = 8;

/// Rank of a vector set, read off the size of its span: rank ≤ k iff |span| ≤ q^k.
fn span_rank(vecs: &[Vec<u64>], q: u64) -> u32 {
    let b = vecs.first().map_or(0, |v| v.len());
    let mut span = std::collections::HashSet::new();
    let mut coef = vec![0u64; vecs.len()];
    loop {
        let v: Vec<u64> = (0..b).map(|i| coef.iter().zip(vecs).map(|(c, w)| c * w[i]).sum::<u64>() % q).collect();
        span.insert(v);
        let mut k = 0;
        while k < coef.len() {
            coef[k] += 1;
            if coef[k] < q {
                break;
            }
            coef[k] = 0;
            k += 1;
        }
        if k == coef.len() {
            break;
        }
    }
    let mut r = 0;
    while q.pow(r) < span.len() as u64 {
        r += 1;
    }
    r
}

/// Conditions (i)-(iii) on (α_0 | .. | α_a | β_0 | .. | β_a), transcribed directly.
fn oracle_member(a: usize, q: u64, cols: &[Vec<u64>]) -> bool {
    let b = cols[0].len();
    let plus = |u: &[u64], v: &[u64]| -> Vec<u64> { u.iter().zip(v).map(|(x, y)| (x + y) % q).collect() };
    let total = |vs: &[&Vec<u64>]| vs.iter().fold(vec![0; b], |acc, v| plus(&acc, v));
    let (alpha, beta) = cols.split_at(a + 1);
    if total(&cols.iter().collect::<Vec<_>>()).iter().any(|&x| x != 0) {
        return false;
    }
    let beta_sum = total(&beta.iter().collect::<Vec<_>>());
    for nu in 0..=a {
        let mut set: Vec<Vec<u64>> = (0..=a).filter(|&j| j != nu).map(|j| alpha[j].clone()).collect();
        set.push(plus(&alpha[nu], &beta_sum));
        if span_rank(&set, q) > a as u32 - 1 {
            return false;
        }
    }
    for tau in 0..a {
        for rho in tau + 1..=a {
            let mut set: Vec<Vec<u64>> = (0..=tau).map(|k| plus(&alpha[k], &beta[k])).collect();
            set.extend((tau + 1..=a).filter(|&j| j != rho).map(|j| alpha[j].clone()));
            set.push(plus(&alpha[rho], &total(&beta[tau + 1..].iter().collect::<Vec<_>>())));
            if span_rank(&set, q) > a as u32 - 1 {
                return false;
            }
        }
    }
    true
}

fn oracle_count(a: usize, b: usize, q: u64) -> u64 {
    let dim = 2 * b * (a + 1);
    let mut digits = vec![0u64; dim];
    let mut count = 0;
    for _ in 0..q.pow(dim as u32) {
        let cols: Vec<Vec<u64>> = digits.chunks(b).map(|c| c.to_vec()).collect();
        count += oracle_member(a, q, &cols) as u64;
        for d in digits.iter_mut() {
            *d += 1;
            if *d < q {
                break;
            }
            *d = 0;
        }
    }
    count
}

#[test]
fn census_counts_match_the_oracle() {
    for (a, b, q, frozen) in [(2, 2, 2, 148u64), (2, 2, 3, 1737), (2, 3, 2, 596)] {
        assert_eq!(oracle_count(a, b, q), frozen, "oracle ({a},{b},{q})");
        let rep = core_lemma_census(a, b, q, CensusMode::Exhaustive, CENSUS_BUDGET).unwrap();
        assert_eq!(rep.count, frozen, "({a},{b},{q})");
        assert_eq!(rep.examined, q.pow(rep.ambient_dim as u32));
        assert_eq!(rep.bound, q.pow((rep.ambient_dim - (a + b - 1) as u64 + 1) as u32));
        assert!(rep.verdict && rep.alt_disagreements == 0);
        assert!(rep.implied_codim >= (a + b - 1) as f64 - 1.0);
    }
}

#[test]
fn census_over_budget_samples() {
    let rep = core_lemma_census(2, 2, 3, CensusMode::Exhaustive, 1000).unwrap();
    assert!(matches!(rep.mode, CensusMode::Sample { .. }));
    assert!(rep.note.is_some());
    let s = core_lemma_census(2, 2, 2, CensusMode::Sample { n: 20_000, seed: 3 }, CENSUS_BUDGET).unwrap();
    assert_eq!(s.examined, 20_000);
    // 148/4096 is about 3.6%; the estimate should land near it.
    assert!((s.count as f64 - 148.0).abs() < 40.0, "{}", s.count);
    assert!(core_lemma_census(2, 2, 4, CensusMode::Exhaustive, CENSUS_BUDGET).is_err());
}

#[test]
fn membership_forms_agree() {
    for (a, b) in [(2, 2), (2, 3), (2, 4), (3, 3), (3, 4)] {
        for q in [2, 3] {
            let rep = membership_agreement(a, b, q, AGREEMENT_SAMPLES, 17).unwrap();
            assert_eq!(rep.disagreements, 0, "({a},{b}) over F_{q}: {:?}", rep.witnesses.first());
            assert!(rep.members > 0, "({a},{b},{q}) never hit the variety");
        }
    }
}

#[test]
fn sampled_membership_matches_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut members = 0;
    for _ in 0..5000 {
        let m = random_rank_condition_matrix(3, 3, 3, &mut rng);
        let want = oracle_member(3, 3, m.columns());
        assert_eq!(membership_m_ab(&m), want, "{m:?}");
        members += want as u32;
    }
    assert!(members > 100);
}

fn line_family() -> SectionFamily {
    let f5 = Field::prime(5).unwrap();
    let one = MultiPoly::parse("1", 2, f5).unwrap();
    build_sections(&FamilySpec {
        shape: ProblemShape::new(2, 1, 0).unwrap(),
        mode: SectionMode::GeneralFermat { lambda: vec![1, 1, 1], degrees: vec![1] },
        field: f5,
        twists: vec![0],
        source: CoeffSource::Explicit { diagonal: vec![vec![one; 3]], moving: vec![] },
    })
    .unwrap()
}

#[test]
fn line_base_locus_matches_enumeration() {
    let fam = line_family();
    let bundle = build_matrices(&fam).unwrap();
    let form = extract_form(&bundle, &[0], 0, None).unwrap();
    let rep = base_locus_scan(&fam, &[form], 5, &[]).unwrap();

    // Points of z0 + z1 + z2 = 0 with no zero coordinate; the tangent plane is
    // dz0 + dz1 + dz2 = 0 and z1ξ2 − z2ξ1 is tested at every ξ off the Euler line.
    let p = 5;
    let (mut points, mut base) = (0, 0);
    for z1 in 1..p {
        for z2 in 1..p {
            let z = [1, z1, z2];
            if (1 + z1 + z2) % p != 0 {
                continue;
            }
            points += 1;
            let mut vanish = false;
            for x1 in 0..p {
                for x2 in 0..p {
                    let x0 = (3 * p - x1 - x2) % p;
                    let xi = [x0, x1, x2];
                    let parallel = (0..3).all(|i| (0..3).all(|j| (z[i] * xi[j] + p * p - z[j] * xi[i]) % p == 0));
                    if !parallel && (z1 * x2 + p * p - z2 * x1) % p == 0 {
                        vanish = true;
                    }
                }
            }
            base += vanish as usize;
        }
    }
    assert_eq!(rep.points, points);
    assert_eq!(rep.points, 3);
    // One tangent direction per point.
    assert_eq!(rep.pairs, points);
    assert_eq!(rep.base_pairs.len(), base);
    assert!(rep.tangent_dim_ok);
}

fn mcm_spec_f5() -> FamilySpec {
    let shape = ProblemShape::new(4, 3, 0).unwrap();
    let schedule = build_schedule(shape, 2, &[1, 1, 1]).unwrap();
    FamilySpec { shape, mode: SectionMode::Mcm { schedule }, field: Field::prime(5).unwrap(), twists: vec![0; 3], source: CoeffSource::Random { seed: 11 } }
}

#[test]
fn mcm_over_f5_is_smooth_and_crosschecks() {
    let (fam, log) = find_smooth_family(&mcm_spec_f5(), 11, 5, RESEEDS).unwrap();
    let fam = fam.unwrap_or_else(|| panic!("no smooth family in {RESEEDS} reseeds: {log:?}"));
    assert!(log.len() <= RESEEDS as usize);

    let scan = base_locus_scan_mcm(&fam, 5).unwrap();
    assert!(scan.tangent_dim_ok && scan.singular_points.is_empty());
    assert_eq!(scan.vanishing_histogram.values().sum::<usize>(), scan.pairs);
    assert!(scan.base_pairs.iter().all(|b| b.member == Some(true)));

    let cc = characterization_crosscheck(&fam, 5, CROSSCHECK_SAMPLES, 3).unwrap();
    assert!(cc.pairs >= CROSSCHECK_SAMPLES);
    assert_eq!(cc.forward_exceptions, 0, "{:?}", cc.disagreements.first());
    assert_eq!(cc.agreements + cc.disagreements.len() as u64, cc.pairs);
    assert!((0.0..=1.0).contains(&cc.agreement_rate));
}

#[test]
fn singular_families_are_resampled() {
    let f5 = Field::prime(5).unwrap();
    let dbl = MultiPoly::parse("z0^2 + z1^2", 2, f5).unwrap();
    let r = smoothness_check(&[dbl], 2, 5).unwrap();
    // z0² + z1² = (z0 + 2z1)(z0 − 2z1) over 𝔽_5: singular where the lines meet.
    assert!(!r.smooth);
    assert_eq!(r.singular.len(), 1);
    assert_eq!(r.singular[0].coords(), &[0, 0, 1]);
}

fn rcm(a: usize, b: usize, q: u64) -> impl Strategy<Value = RankConditionMatrix> {
    any::<u64>().prop_map(move |seed| random_rank_condition_matrix(a, b, q, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn shapes() -> impl Strategy<Value = RankConditionMatrix> {
    prop_oneof![rcm(2, 2, 3), rcm(2, 3, 2), rcm(3, 3, 3), rcm(3, 4, 2), rcm(2, 4, 5)]
}

fn left_multiply(m: &RankConditionMatrix, g: &[Vec<u64>]) -> RankConditionMatrix {
    let p = m.p;
    let cols = m.columns().iter().map(|c| (0..m.b).map(|i| (0..m.b).map(|k| g[i][k] * c[k]).sum::<u64>() % p).collect()).collect();
    RankConditionMatrix::new(m.a, m.b, p, cols).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn forms_agree(m in shapes()) {
        prop_assert_eq!(membership_m_ab(&m), membership_m_ab_alt(&m));
    }

    #[test]
    fn invariant_under_row_operations(m in shapes(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let g: Vec<Vec<u64>> = loop {
            let g: Vec<Vec<u64>> = (0..m.b).map(|_| (0..m.b).map(|_| rng.gen_range(0..m.p)).collect()).collect();
            if mcm_core::exact_algebra::FpMatrix::from_rows(m.p, &g).rank() == m.b {
                break g;
            }
        };
        prop_assert_eq!(membership_m_ab(&left_multiply(&m, &g)), membership_m_ab(&m));
    }

    #[test]
    fn scaling_preserves_membership(m in shapes(), s in 1u64..5) {
        let s = s % m.p;
        prop_assume!(s != 0);
        let cols = m.columns().iter().map(|c| c.iter().map(|x| x * s % m.p).collect()).collect();
        prop_assert_eq!(membership_m_ab(&RankConditionMatrix::new(m.a, m.b, m.p, cols).unwrap()), membership_m_ab(&m));
    }

    #[test]
    fn nonzero_column_sum_excludes(m in shapes(), row in 0usize..4) {
        let mut cols = m.columns().to_vec();
        let i = row % m.b;
        cols[0][i] = (cols[0][i] + 1) % m.p;
        let t = RankConditionMatrix::new(m.a, m.b, m.p, cols).unwrap();
        let sum: u64 = t.columns().iter().map(|c| c[i]).sum::<u64>() % m.p;
        if sum != 0 {
            prop_assert!(!membership_m_ab(&t) && !membership_m_ab_alt(&t));
        }
    }

    #[test]
    fn projective_space_point_count(n in 1usize..4, p in prop::sample::select(vec![2u64, 3, 5, 7])) {
        prop_assert_eq!(points_on(&[], n, p).unwrap().len() as u64, (p.pow(n as u32 + 1) - 1) / (p - 1));
    }
}
