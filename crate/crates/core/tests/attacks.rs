use byzfloor::aggregators::{AggregatorSpec, OracleContext, Rule};
use byzfloor::attacks::{alie, label_flip, sign_flip, AdversaryView, AttackKind, AttackSpec, DEFAULT_ALIE_CANDIDATES};
use byzfloor::problems::Sample;
use byzfloor::{DenseVector, Error, WorkerPopulation};
use proptest::prelude::*;

fn s(x: f64) -> DenseVector {
    DenseVector::scalar(x).unwrap()
}

proptest! {
    #[test]
    fn sign_flip_is_an_involution(v in prop::collection::vec(-1e6..1e6f64, 1..6)) {
        let g = DenseVector::new(v).unwrap();
        prop_assert_eq!(sign_flip(&sign_flip(&g)), g);
    }

    #[test]
    fn label_flip_is_an_involution(classes in 1usize..20, seed in 0usize..1000) {
        let sample = Sample { features: vec![0.5, -1.0], label: seed % classes };
        let flipped = label_flip(&sample, classes).unwrap();
        prop_assert_eq!(flipped.label, classes - 1 - sample.label);
        prop_assert_eq!(&flipped.features, &sample.features);
        prop_assert_eq!(label_flip(&flipped, classes).unwrap(), sample);
    }

    #[test]
    fn alie_leaves_honest_slots_alone(rows in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 2), 5)) {
        let updates: Vec<DenseVector> = rows.into_iter().map(|r| DenseVector::new(r).unwrap()).collect();
        let pop = WorkerPopulation::trailing_byzantine(5, 2).unwrap();
        let spec = AggregatorSpec::new(Rule::Cwm, 5, 2).unwrap();
        let before = updates.clone();
        let view = AdversaryView {
            updates: &updates,
            honest_ids: pop.honest_ids(),
            byzantine_ids: pop.byzantine_ids(),
            aggregator: &spec,
            oracle_ctx: OracleContext::default(),
        };
        let first = alie(&view, &DEFAULT_ALIE_CANDIDATES).unwrap();
        let second = alie(&view, &DEFAULT_ALIE_CANDIDATES).unwrap();
        prop_assert_eq!(&updates, &before);
        prop_assert_eq!(first.alpha, second.alpha);
        prop_assert!(DEFAULT_ALIE_CANDIDATES.contains(&first.alpha));
    }
}

#[test]
fn sign_flip_examples() {
    let g = DenseVector::new(vec![3.0, -1.0]).unwrap();
    assert_eq!(sign_flip(&g), DenseVector::new(vec![-3.0, 1.0]).unwrap());
    assert_eq!(sign_flip(&DenseVector::zeros(3)).norm_sq(), 0.0);
}

#[test]
fn label_flip_examples() {
    let flip = |y| label_flip(&Sample { features: vec![], label: y }, 10).unwrap().label;
    assert_eq!(flip(3), 6);
    assert_eq!(flip(9), 0);
    assert!(matches!(label_flip(&Sample { features: vec![], label: 10 }, 10), Err(Error::Data(_))));
}

fn view_of<'a>(updates: &'a [DenseVector], pop: &'a WorkerPopulation, spec: &'a AggregatorSpec) -> AdversaryView<'a> {
    AdversaryView {
        updates,
        honest_ids: pop.honest_ids(),
        byzantine_ids: pop.byzantine_ids(),
        aggregator: spec,
        oracle_ctx: OracleContext::default(),
    }
}

#[test]
fn alie_uses_total_deviation() {
    // Honest {0, 2}: mean 1, total deviation sqrt(2).
    let updates = [s(0.0), s(2.0), s(0.0)];
    let pop = WorkerPopulation::trailing_byzantine(3, 1).unwrap();
    let spec = AggregatorSpec::new(Rule::Average, 3, 1).unwrap();
    let choice = alie(&view_of(&updates, &pop, &spec), &DEFAULT_ALIE_CANDIDATES).unwrap();
    assert_eq!(choice.alpha.abs(), 2.0);
    assert!((choice.update.first() - (1.0 + choice.alpha * 2f64.sqrt())).abs() < 1e-15);

    // With a mean of zero the displacements of -2 and +2 tie exactly; the first listed candidate wins.
    let centred = [s(-1.0), s(1.0), s(0.0)];
    assert_eq!(alie(&view_of(&centred, &pop, &spec), &DEFAULT_ALIE_CANDIDATES).unwrap().alpha, -2.0);
    let reversed: Vec<f64> = DEFAULT_ALIE_CANDIDATES.iter().rev().copied().collect();
    assert_eq!(alie(&view_of(&centred, &pop, &spec), &reversed).unwrap().alpha, 2.0);
}

#[test]
fn alie_is_inert_without_dispersion() {
    let updates = [s(4.0), s(4.0), s(4.0), s(-7.0), s(100.0)];
    let pop = WorkerPopulation::trailing_byzantine(5, 2).unwrap();
    let spec = AggregatorSpec::new(Rule::Average, 5, 2).unwrap();
    let choice = alie(&view_of(&updates, &pop, &spec), &DEFAULT_ALIE_CANDIDATES).unwrap();
    assert_eq!(choice.update, s(4.0));
    assert_eq!(choice.displacement, 0.0);
}

#[test]
fn attack_spec_checks_candidates() {
    let pop = WorkerPopulation::trailing_byzantine(5, 2).unwrap();
    let spec = AttackSpec::new(AttackKind::alie_default(), &pop).unwrap();
    assert_eq!(spec.byzantine_ids, vec![3, 4]);
    assert!(AttackSpec::new(AttackKind::Alie { candidates: vec![] }, &pop).is_err());
    assert!(AttackSpec::new(AttackKind::Alie { candidates: vec![f64::NAN] }, &pop).is_err());
    assert!(AttackKind::alie_default().is_omniscient());
    assert!(!AttackKind::SignFlip.is_omniscient());
}
