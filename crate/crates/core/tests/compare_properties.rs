use bayes_cfa::compare::{bayes_factor_matrix, encompassing_bf, pmp, pmp_from_log, uniform_prior};
use bayes_cfa::dsl::{expand, parse, ConstraintSet};
use bayes_cfa::sampler::{gibbs_run, sample_prior, ChainSettings, PriorSpec};
use bayes_cfa::{synthetic, PosteriorDraws};
use proptest::prelude::*;

proptest! {
    #[test]
    fn pmp_sums_to_one_and_ignores_scale(bfs in prop::collection::vec(1e-6f64..1e6, 1..6), k in 1e-3f64..1e3) {
        let prior = uniform_prior(bfs.len());
        let a = pmp(&bfs, &prior).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let scaled: Vec<f64> = bfs.iter().map(|b| b * k).collect();
        let b = pmp(&scaled, &prior).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pmp_ignores_shift_of_log_evidence(logs in prop::collection::vec(-1e4f64..1e4, 1..6), shift in -1e5f64..1e5) {
        let prior = uniform_prior(logs.len());
        let a = pmp_from_log(&logs, &prior).unwrap();
        let shifted: Vec<f64> = logs.iter().map(|l| l + shift).collect();
        let b = pmp_from_log(&shifted, &prior).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_evidence_gives_equal_probability(l in -1e3f64..1e3, other in -1e3f64..1e3) {
        let post = pmp_from_log(&[l, l, other], &uniform_prior(3)).unwrap();
        prop_assert_eq!(post[0], post[1]);
    }

    #[test]
    fn bf_matrix_is_reciprocal(logs in prop::collection::vec(-50.0f64..50.0, 2..6)) {
        let b = bayes_factor_matrix(&logs);
        for s in 0..logs.len() {
            prop_assert_eq!(b[(s, s)], 1.0);
            for t in 0..logs.len() {
                prop_assert!((b[(s, t)] - 1.0 / b[(t, s)]).abs() <= 1e-12 * b[(s, t)].abs().max(1.0));
            }
        }
    }
}

fn posterior() -> PosteriorDraws {
    let data = synthetic::dataset(&synthetic::metabolic_reference(), &synthetic::METABOLIC_NAMES, 464, None, 44).unwrap();
    gibbs_run(&data, &synthetic::metabolic_spec(), &PriorSpec::default(), ChainSettings::new(27_000, 2_000), 45).unwrap()
}

fn constraints(text: &str) -> ConstraintSet {
    expand(&parse(text).unwrap(), &synthetic::metabolic_spec()).unwrap()
}

#[test]
fn bayes_factor_survives_thinning_and_nesting() {
    let post = posterior();
    let prior = sample_prior(&post.spec, &PriorSpec::default(), 200_000, 46).unwrap();
    let a = constraints("L[1,1] > abs(L[1,2])\nL[4,1] > abs(L[4,2])");
    let b = a.union(&constraints("abs(L[7,2]) < 0.3"));

    let full = encompassing_bf(&post, &prior, &a, "A").unwrap();
    let thinned = PosteriorDraws { draws: post.draws.iter().step_by(5).cloned().collect(), ..post.clone() };
    let thin = encompassing_bf(&thinned, &prior, &a, "A").unwrap();
    let se = (full.mc_se.powi(2) + thin.mc_se.powi(2)).sqrt();
    assert!((full.bf - thin.bf).abs() < 3.0 * se, "{} vs {} (se {se})", full.bf, thin.bf);

    let nested = encompassing_bf(&post, &prior, &b, "B").unwrap();
    assert!(nested.f <= full.f && nested.c <= full.c);
    for bf in [&full, &thin, &nested] {
        assert!(bf.f <= 1.0 && bf.c <= 1.0);
    }

    let empty = encompassing_bf(&post, &prior, &ConstraintSet::empty(), "none").unwrap();
    assert_eq!(empty.bf, 1.0);
}
