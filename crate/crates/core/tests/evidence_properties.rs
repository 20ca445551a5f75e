mod common;

use common::{close, evidence, oracle};
use dualev_core::{
    dirichlet_from_evidence, improved_uncertainty, opinion_from_evidence, predicted_class,
    predictive_probabilities, softplus_evidence, standard_uncertainty, Evidence, Logits,
};
use proptest::prelude::*;

fn ev(v: &[f64]) -> Evidence {
    Evidence::new(v.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_oracle(e in evidence()) {
        let d = dirichlet_from_evidence(&ev(&e));
        let (alpha, s, p, u, u_hat) = oracle::dirichlet(&e);
        prop_assert_eq!(d.alpha(), alpha.as_slice());
        prop_assert!(close(d.strength(), s, 1e-9 * s));
        for (a, b) in predictive_probabilities(&d).iter().zip(&p) {
            prop_assert!(close(*a, *b, 1e-12));
        }
        prop_assert!(close(standard_uncertainty(&d), u, 1e-12));
        prop_assert!(close(improved_uncertainty(&d), u_hat, 1e-15));
    }

    #[test]
    fn beliefs_and_uncertainty_sum_to_one(e in evidence()) {
        let o = opinion_from_evidence(&ev(&e));
        let total: f64 = o.beliefs().iter().sum::<f64>() + o.uncertainty();
        prop_assert!(close(total, 1.0, 1e-9));
        let p: f64 = predictive_probabilities(&dirichlet_from_evidence(&ev(&e))).iter().sum();
        prop_assert!(close(p, 1.0, 1e-9));
    }

    #[test]
    fn improved_never_exceeds_standard(e in evidence()) {
        let d = dirichlet_from_evidence(&ev(&e));
        let (u, u_hat) = (standard_uncertainty(&d), improved_uncertainty(&d));
        prop_assert!(u_hat <= u + 1e-15);
        let uniform = e.iter().all(|x| *x == e[0]);
        if uniform {
            prop_assert!(close(u, u_hat, 1e-12));
        } else {
            prop_assert!(u_hat < u);
        }
    }

    #[test]
    fn equality_on_uniform_evidence(k in 2usize..=6, level in 0.0f64..1e4) {
        let d = dirichlet_from_evidence(&ev(&vec![level; k]));
        prop_assert!(close(standard_uncertainty(&d), improved_uncertainty(&d), 1e-12));
    }

    #[test]
    fn more_evidence_less_uncertainty(e in evidence(), idx in 0usize..6, bump in 1e-3f64..100.0) {
        let i = idx % e.len();
        let mut more = e.clone();
        more[i] += bump;
        let (d0, d1) = (dirichlet_from_evidence(&ev(&e)), dirichlet_from_evidence(&ev(&more)));
        prop_assert!(standard_uncertainty(&d1) < standard_uncertainty(&d0));

        let top = predicted_class(&d0);
        let mut top_more = e.clone();
        top_more[top] += bump;
        let d2 = dirichlet_from_evidence(&ev(&top_more));
        prop_assert!(improved_uncertainty(&d2) < improved_uncertainty(&d0));
    }

    #[test]
    fn scaling_preserves_predicted_class(e in evidence(), c in 1e-3f64..1e3) {
        let scaled: Vec<f64> = e.iter().map(|x| x * c).collect();
        let d0 = dirichlet_from_evidence(&ev(&e));
        let d1 = dirichlet_from_evidence(&ev(&scaled));
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // only meaningful when the maximum is unique after scaling too
        if e.iter().filter(|x| **x == max).count() == 1
            && scaled.iter().filter(|x| **x == scaled[predicted_class(&d0)]).count() == 1
        {
            prop_assert_eq!(predicted_class(&d0), predicted_class(&d1));
        }
    }

    #[test]
    fn opinion_round_trip(e in evidence()) {
        let o = opinion_from_evidence(&ev(&e));
        let back = o.to_evidence().unwrap();
        let scale = o.class_count() as f64 / o.uncertainty();
        for ((orig, rec), b) in e.iter().zip(back.values()).zip(o.beliefs()) {
            prop_assert!(close(*orig, *rec, 1e-9 * orig.max(1.0)));
            prop_assert!(close(b * scale, *orig, 1e-9 * orig.max(1.0)));
        }
    }

    #[test]
    fn softplus_evidence_matches_oracle(z in prop::collection::vec(-800.0f64..800.0, 2..=6)) {
        let e = softplus_evidence(&Logits::new(z.clone()).unwrap());
        for (got, x) in e.values().iter().zip(&z) {
            let want = oracle::softplus(*x);
            prop_assert!(got.is_finite() && *got >= 0.0);
            prop_assert!(close(*got, want, 1e-12 * want.max(1e-300)) || close(*got, want, 1e-300));
        }
    }
}

#[test]
fn worked_examples() {
    let d = dirichlet_from_evidence(&ev(&[4.0, 0.0, 0.0]));
    assert!(close(standard_uncertainty(&d), 3.0 / 7.0, 1e-12));
    assert!(close(improved_uncertainty(&d), 0.2, 1e-12));
    let d = dirichlet_from_evidence(&ev(&[0.0, 0.0, 0.0]));
    assert_eq!(standard_uncertainty(&d), 1.0);
    assert_eq!(improved_uncertainty(&d), 1.0);
    assert_eq!(predicted_class(&dirichlet_from_evidence(&ev(&[2.0, 2.0, 1.0]))), 0);
}
