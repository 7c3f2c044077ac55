use fplus_core::dilation::{build_first_order_dilation, build_markov_dilation, random_chain, DilationOptions, TieBreak};
use fplus_core::finprob::{
    commuting_square_check, cond_exp, mean_ergodic_check, AlgebraElement, FinSpace, MarkovKernel, Partition,
};
use fplus_core::monoid::{
    closure_ceiling, normal_form_fplus, project_to_splus, rewriting_closure, shift_mn, splus_apply, words_equal_fplus,
    words_equal_splus, Letter, MonoidKind, Word,
};
use fplus_core::rational::{rat, RatMatrix, Rational};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn word(max_len: usize, max_index: u32) -> impl Strategy<Value = Word> {
    prop::collection::vec(0..=max_index, 0..=max_len).prop_map(|v| Word::g(&v))
}

fn positive_weights(n: usize) -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec(1i64..=6, n).prop_map(|v| {
        let total: i64 = v.iter().sum();
        v.into_iter().map(|x| rat(x, total)).collect()
    })
}

fn labels(n: usize, k: u32) -> impl Strategy<Value = Partition> {
    prop::collection::vec(0..k, n).prop_map(Partition::from_keys)
}

fn element(n: usize) -> impl Strategy<Value = AlgebraElement> {
    prop::collection::vec((-5i64..=5, 1i64..=4), n)
        .prop_map(|v| AlgebraElement::new(v.into_iter().map(|(a, b)| rat(a, b)).collect()))
}

fn stochastic(d: usize) -> impl Strategy<Value = RatMatrix> {
    prop::collection::vec(positive_weights(d), d).prop_map(|rows| RatMatrix::from_rows(rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_form_is_a_fixed_point(w in word(6, 6)) {
        let nf = normal_form_fplus(&w).unwrap();
        prop_assert_eq!(normal_form_fplus(&nf.to_word()).unwrap(), nf.clone());
        prop_assert_eq!(nf.exponents().iter().sum::<u32>() as usize, w.len());
    }

    #[test]
    fn normal_form_is_multiplicative(u in word(4, 5), v in word(4, 5)) {
        let uv = u.concat(&v);
        let nf_u = normal_form_fplus(&u).unwrap().to_word();
        let nf_v = normal_form_fplus(&v).unwrap().to_word();
        prop_assert!(words_equal_fplus(&uv, &nf_u.concat(&nf_v)).unwrap());
    }

    #[test]
    fn partial_shift_is_an_injective_morphism(u in word(4, 4), v in word(4, 4), m in 0u32..3, gap in 0u32..3) {
        let n = m + gap;
        let s = |w: &Word| shift_mn(m, n, w).unwrap();
        prop_assert_eq!(s(&u.concat(&v)), s(&u).concat(&s(&v)));
        prop_assert_eq!(words_equal_fplus(&s(&u), &s(&v)).unwrap(), words_equal_fplus(&u, &v).unwrap());
    }

    #[test]
    fn splus_is_a_quotient(u in word(4, 4), v in word(4, 4), x in 0u64..40) {
        if words_equal_fplus(&u, &v).unwrap() {
            prop_assert!(words_equal_splus(&project_to_splus(&u).unwrap(), &project_to_splus(&v).unwrap()).unwrap());
        }
        let hu = project_to_splus(&u).unwrap();
        let nf = project_to_splus(&normal_form_fplus(&u).unwrap().to_word()).unwrap();
        prop_assert_eq!(splus_apply(&hu, x).unwrap(), splus_apply(&nf, x).unwrap());
    }

    #[test]
    fn theta_relations(k in 0u64..6, d in 0u64..6, x in 0u64..60) {
        let l = k + d;
        let lhs = Word(vec![Letter::h(k as u32), Letter::h(l as u32)]);
        let rhs = Word(vec![Letter::h(l as u32 + 1), Letter::h(k as u32)]);
        prop_assert_eq!(splus_apply(&lhs, x).unwrap(), splus_apply(&rhs, x).unwrap());
    }

    #[test]
    fn conditional_expectation_laws(
        w in positive_weights(8),
        p in labels(8, 3),
        f in element(8),
        g in element(8),
    ) {
        let space = FinSpace::new(w).unwrap();
        let e = cond_exp(&space, &p, &f).unwrap();
        prop_assert_eq!(cond_exp(&space, &p, &e).unwrap(), e.clone());
        prop_assert_eq!(space.expectation(&e), space.expectation(&f));
        let b = cond_exp(&space, &p, &g).unwrap();
        prop_assert_eq!(cond_exp(&space, &p, &b.mul(&f)).unwrap(), b.mul(&e));
        let nonneg = AlgebraElement::new(f.values.iter().map(|v| v * v).collect());
        prop_assert!(cond_exp(&space, &p, &nonneg).unwrap().values.iter().all(|v| *v >= Rational::from_integer(0.into())));
        let one = AlgebraElement::constant(8, rat(1, 1));
        prop_assert_eq!(cond_exp(&space, &p, &one).unwrap(), one);
    }

    #[test]
    fn lattice_laws(p in labels(9, 3), q in labels(9, 3), r in labels(9, 4)) {
        prop_assert_eq!(p.join(&q), q.join(&p));
        prop_assert_eq!(p.meet(&q), q.meet(&p));
        prop_assert_eq!(p.join(&q).join(&r), p.join(&q.join(&r)));
        prop_assert_eq!(p.meet(&q).meet(&r), p.meet(&q.meet(&r)));
        prop_assert_eq!(p.join(&p), p.clone());
        prop_assert_eq!(p.meet(&p), p.clone());
        prop_assert_eq!(p.join(&p.meet(&q)), p.clone());
        prop_assert!(p.meet(&q).is_coarser_than(&p) && p.is_coarser_than(&p.join(&q)));
    }

    #[test]
    fn commuting_square_conditions_agree(
        w in positive_weights(8),
        a in labels(8, 2),
        b in labels(8, 2),
        f in element(8),
    ) {
        let space = FinSpace::new(w).unwrap();
        let p1 = a.join(&b);
        let p0 = a.meet(&b);
        let r = commuting_square_check(&space, &p0, &a, &b).unwrap();
        prop_assert!(r.consistent());
        let r1 = commuting_square_check(&space, &p0, &p1, &b).unwrap();
        prop_assert!(r1.consistent());
        if r.holds() {
            let composite = cond_exp(&space, &a, &cond_exp(&space, &b, &f).unwrap()).unwrap();
            prop_assert_eq!(composite, cond_exp(&space, &p0, &f).unwrap());
        }
    }

    #[test]
    fn adjoint_involution_and_contravariance(phi in positive_weights(3), t in stochastic(3), s in stochastic(2)) {
        // T: (C³, φ) ← (C², ψ) via a 3×2 matrix built from t's first two columns
        let rows: Vec<Vec<Rational>> = (0..3)
            .map(|i| {
                let a = &t[(i, 0)];
                vec![a.clone(), Rational::from_integer(1.into()) - a]
            })
            .collect();
        let t = RatMatrix::from_rows(rows).unwrap();
        let psi: Vec<Rational> = (0..2).map(|j| (0..3).map(|i| &phi[i] * &t[(i, j)]).sum()).collect();
        let chi: Vec<Rational> = (0..2).map(|j| (0..2).map(|i| &psi[i] * &s[(i, j)]).sum()).collect();
        let kt = MarkovKernel::new(t, phi, psi.clone()).unwrap();
        let ks = MarkovKernel::new(s, psi, chi).unwrap();
        prop_assert_eq!(kt.adjoint().adjoint(), kt.clone());
        let ts = kt.compose(&ks).unwrap();
        prop_assert_eq!(ts.adjoint(), ks.adjoint().compose(&kt.adjoint()).unwrap());
    }
}

#[test]
fn partial_shift_examples() {
    let w: Word = "g0 g1".parse().unwrap();
    assert_eq!(shift_mn(1, 2, &w).unwrap().to_string(), "g1 g3");
    assert!(shift_mn(2, 1, &w).is_err());
}

#[test]
fn splus_collapses_the_k_equal_l_case() {
    let (a, b): (Word, Word) = ("g0 g0".parse().unwrap(), "g1 g0".parse().unwrap());
    assert!(!words_equal_fplus(&a, &b).unwrap());
    assert!(words_equal_splus(&project_to_splus(&a).unwrap(), &project_to_splus(&b).unwrap()).unwrap());
}

#[test]
fn splus_function_model_matches_rewriting() {
    for len in 1..=4u32 {
        let words: Vec<Word> = (0..4u32.pow(len))
            .map(|code| Word::h(&(0..len).map(|i| code / 4u32.pow(i) % 4).collect::<Vec<_>>()))
            .collect();
        for a in &words {
            let closure = rewriting_closure(MonoidKind::SPlus, a, closure_ceiling(3, len as usize));
            for b in &words {
                assert_eq!(words_equal_splus(a, b).unwrap(), closure.contains(b), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn tie_break_does_not_change_the_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in [2, 3, 4] {
        let spec = random_chain(&mut rng, d, 5);
        let law = |tie| {
            build_markov_dilation(&spec, 3, DilationOptions { tie_break: tie, ..Default::default() })
                .unwrap()
                .model_path_law()
        };
        assert_eq!(law(TieBreak::FixedDiagonalFirst), law(TieBreak::Reversed));
    }
}

#[test]
fn coupling_orbit_averages_are_conditional_expectations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in [2, 3, 3, 4] {
        let spec = random_chain(&mut rng, d, 6);
        let fo = build_first_order_dilation(&spec, TieBreak::default());
        let n = fo.coupling.atom_count();
        let space = FinSpace::new((0..n).map(|k| fo.coupling.atom_weight(k)).collect()).unwrap();
        let perm: Vec<usize> = (0..n).map(|k| fo.coupling.image(k)).collect();
        let f = AlgebraElement::new((0..n).map(|k| rat(k as i64 * k as i64 % 7, 1)).collect());
        assert!(mean_ergodic_check(&space, &perm, &f).unwrap().is_some());
    }
}
