mod common;

use common::{close, evidence_pair, evidence_triple, oracle};
use dualev_core::fusion::dempster_combine_all;
use dualev_core::{
    dempster_combine, dirichlet_from_fused, opinion_from_evidence, Error, Evidence, Opinion,
};
use proptest::prelude::*;

fn op(e: &[f64]) -> Opinion {
    opinion_from_evidence(&Evidence::new(e.to_vec()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn matches_focal_set_oracle((a, b) in evidence_pair()) {
        let (oa, ob) = (op(&a), op(&b));
        let f = dempster_combine(&oa, &ob).unwrap();
        let (beliefs, u, conflict) =
            oracle::dempster(oa.beliefs(), oa.uncertainty(), ob.beliefs(), ob.uncertainty()).unwrap();
        prop_assert!(close(f.conflict, conflict, 1e-12));
        prop_assert!(close(f.uncertainty, u, 1e-12));
        for (x, y) in f.beliefs.iter().zip(&beliefs) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn commutative((a, b) in evidence_pair()) {
        let ab = dempster_combine(&op(&a), &op(&b)).unwrap();
        let ba = dempster_combine(&op(&b), &op(&a)).unwrap();
        prop_assert!(close(ab.uncertainty, ba.uncertainty, 1e-12));
        prop_assert!(close(ab.conflict, ba.conflict, 1e-12));
        for (x, y) in ab.beliefs.iter().zip(&ba.beliefs) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn vacuous_is_identity((a, _) in evidence_pair()) {
        let o = op(&a);
        let v = Opinion::vacuous(o.class_count());
        for f in [dempster_combine(&o, &v).unwrap(), dempster_combine(&v, &o).unwrap()] {
            prop_assert!(close(f.uncertainty, o.uncertainty(), 1e-12));
            for (x, y) in f.beliefs.iter().zip(o.beliefs()) {
                prop_assert!(close(*x, *y, 1e-12));
            }
        }
    }

    #[test]
    fn closed_under_fusion((a, b) in evidence_pair()) {
        let f = dempster_combine(&op(&a), &op(&b)).unwrap();
        let total: f64 = f.beliefs.iter().sum::<f64>() + f.uncertainty;
        prop_assert!(close(total, 1.0, 1e-9));
        prop_assert!(f.beliefs.iter().all(|b| *b >= 0.0));
        prop_assert!(f.uncertainty > 0.0 && f.uncertainty <= 1.0);
        prop_assert!(f.to_opinion().is_ok());
    }

    #[test]
    fn fused_dirichlet_round_trip((a, b) in evidence_pair()) {
        let f = dempster_combine(&op(&a), &op(&b)).unwrap();
        let d = dirichlet_from_fused(&f).unwrap();
        let k = f.class_count() as f64;
        let s = d.strength();
        prop_assert!(close(k / s, f.uncertainty, 1e-9 * f.uncertainty));
        for (alpha, b) in d.alpha().iter().zip(&f.beliefs) {
            prop_assert!(close((alpha - 1.0) / s, *b, 1e-9));
        }
    }

    #[test]
    fn self_fusion_does_not_raise_uncertainty((a, _) in evidence_pair()) {
        let o = op(&a);
        let f = dempster_combine(&o, &o).unwrap();
        prop_assert!(f.uncertainty <= o.uncertainty() + 1e-12);
    }

    #[test]
    fn associative((a, b, c) in evidence_triple()) {
        let (oa, ob, oc) = (op(&a), op(&b), op(&c));
        let left = dempster_combine_all(&[oa.clone(), ob.clone(), oc.clone()]).unwrap();
        let bc = dempster_combine(&ob, &oc).unwrap().to_opinion().unwrap();
        let right = dempster_combine(&oa, &bc).unwrap();
        prop_assert!(close(left.uncertainty, right.uncertainty, 1e-9));
        for (x, y) in left.beliefs.iter().zip(&right.beliefs) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }
}

#[test]
fn two_class_worked_example() {
    let a = Opinion::new(vec![0.6, 0.2], 0.2).unwrap();
    let b = Opinion::new(vec![0.4, 0.1], 0.5).unwrap();
    let f = dempster_combine(&a, &b).unwrap();
    let (ob, ou, oc) = oracle::dempster(&[0.6, 0.2], 0.2, &[0.4, 0.1], 0.5).unwrap();
    assert!(close(f.conflict, oc, 1e-12) && close(oc, 0.14, 1e-12));
    assert!(close(f.beliefs[0], ob[0], 1e-12) && close(ob[0], 0.720930, 1e-6));
    assert!(close(f.beliefs[1], ob[1], 1e-12) && close(ob[1], 0.162791, 1e-6));
    assert!(close(f.uncertainty, ou, 1e-12) && close(ou, 0.116279, 1e-6));
    let d = dirichlet_from_fused(&f).unwrap();
    assert!(close(d.strength(), 17.2, 1e-9));
    assert!(close(d.alpha()[0], 13.4, 1e-9) && close(d.alpha()[1], 3.8, 1e-9));
}

#[test]
fn dogmatic_disagreement_is_total_conflict() {
    let a = Opinion::new(vec![1.0, 0.0], 0.0).unwrap();
    let b = Opinion::new(vec![0.0, 1.0], 0.0).unwrap();
    assert!(oracle::dempster(&[1.0, 0.0], 0.0, &[0.0, 1.0], 0.0).is_none());
    assert!(matches!(dempster_combine(&a, &b), Err(Error::TotalConflict { .. })));
}
