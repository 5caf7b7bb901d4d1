use proptest::prelude::*;
use seqshap::perturb::expand_pruned_events;
use seqshap::{
    build_background, load_dataset, perturb_cells, perturb_events, perturb_features, score_batch, write_dataset,
    BackgroundMatrix, CoalitionMatrix, EventSchema, FnScorer, GruModel, GruWeights, SequenceMatrix,
};

fn matrix(d: usize, l: usize) -> impl Strategy<Value = SequenceMatrix> {
    prop::collection::vec(-1e6f64..1e6, d * l).prop_map(move |v| {
        let rows: Vec<Vec<f64>> = v.chunks(l).map(|c| c.to_vec()).collect();
        SequenceMatrix::from_rows("x", &rows).unwrap()
    })
}

fn shaped() -> impl Strategy<Value = (SequenceMatrix, BackgroundMatrix)> {
    (1usize..5, 1usize..7).prop_flat_map(|(d, l)| {
        (
            matrix(d, l),
            prop::collection::vec(-10.0f64..10.0, d).prop_map(|v| BackgroundMatrix::from_values(v).unwrap()),
        )
    })
}

fn schema(d: usize) -> EventSchema {
    EventSchema::numeric((0..d).map(|f| format!("f{f}")).collect(), "entity", "ts").unwrap()
}

proptest! {
    #[test]
    fn all_present_is_identity_and_none_present_is_background((x, b) in shaped()) {
        let (d, l) = x.shape();
        prop_assert_eq!(perturb_events(&x, &vec![true; l], &b).unwrap(), x.clone());
        prop_assert_eq!(perturb_features(&x, &vec![true; d], &b).unwrap(), x.clone());
        let none = perturb_events(&x, &vec![false; l], &b).unwrap();
        let flat = b.materialize(l);
        prop_assert_eq!(none.values(), flat.values());
        let cells = perturb_cells(&x, &CoalitionMatrix::filled(d, l, false), &b).unwrap();
        prop_assert_eq!(cells.values(), none.values());
    }

    #[test]
    fn event_and_feature_masks_compose_as_cells((x, b) in shaped(), seed in any::<u64>()) {
        let (d, l) = x.shape();
        let ev: Vec<bool> = (0..l).map(|e| seed >> e & 1 == 1).collect();
        let ft: Vec<bool> = (0..d).map(|f| seed >> (20 + f) & 1 == 1).collect();
        let nested = perturb_features(&perturb_events(&x, &ev, &b).unwrap(), &ft, &b).unwrap();
        let mut z = CoalitionMatrix::filled(d, l, false);
        for (f, &keep_f) in ft.iter().enumerate() {
            for (e, &keep_e) in ev.iter().enumerate() {
                z.set(f, e, keep_e && keep_f);
            }
        }
        prop_assert_eq!(perturb_cells(&x, &z, &b).unwrap(), nested);
        prop_assert_eq!(perturb_cells(&x, &CoalitionMatrix::from_event_bits(d, &ev), &b).unwrap(),
                        perturb_events(&x, &ev, &b).unwrap());
        prop_assert_eq!(perturb_cells(&x, &CoalitionMatrix::from_feature_bits(&ft, l), &b).unwrap(),
                        perturb_features(&x, &ft, &b).unwrap());
    }

    #[test]
    fn pruned_bits_expand_prefix(l in 2usize..30, p in 1usize..29, seed in any::<u64>()) {
        prop_assume!(p < l);
        let m = l - p + 1;
        let bits: Vec<bool> = (0..m).map(|i| seed >> i & 1 == 1).collect();
        let full = expand_pruned_events(&bits, p, l).unwrap();
        prop_assert_eq!(full.len(), l);
        prop_assert!(full[..p].iter().all(|&v| v == bits[0]));
        prop_assert_eq!(&full[p..], &bits[1..]);
    }

    #[test]
    fn background_ignores_sequence_order(
        seqs in prop::collection::vec((1usize..6).prop_flat_map(|l| matrix(3, l)), 1..6),
        rot in 0usize..6,
    ) {
        let s = schema(3);
        let a = build_background(&seqs, &s).unwrap();
        let mut shuffled = seqs.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(a, build_background(&shuffled, &s).unwrap());
    }

    #[test]
    fn dataset_round_trips_bit_for_bit(
        seqs in prop::collection::vec((1usize..5).prop_flat_map(|l| matrix(2, l)), 1..4),
        csv in any::<bool>(),
    ) {
        let seqs: Vec<SequenceMatrix> = seqs
            .iter()
            .enumerate()
            .map(|(i, x)| SequenceMatrix::from_rows(format!("e{i}"), &[x.row(0).to_vec(), x.row(1).to_vec()]).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(if csv { "data.csv" } else { "data.json" });
        let s = schema(2);
        write_dataset(&path, &s, &seqs).unwrap();
        let back = load_dataset(&path, &s).unwrap();
        prop_assert_eq!(back.len(), seqs.len());
        for (a, b) in back.iter().zip(&seqs) {
            prop_assert_eq!(a.entity_id(), b.entity_id());
            let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn batches_concatenate(
        first in prop::collection::vec((1usize..5).prop_flat_map(|l| matrix(3, l)), 1..4),
        second in prop::collection::vec((1usize..5).prop_flat_map(|l| matrix(3, l)), 1..4),
    ) {
        let model = GruModel::new(GruWeights::random(3, 4, 1, 0.001).unwrap()).unwrap();
        let joined: Vec<SequenceMatrix> = first.iter().chain(&second).cloned().collect();
        let mut split = score_batch(&model, &first).unwrap();
        split.extend(score_batch(&model, &second).unwrap());
        prop_assert_eq!(score_batch(&model, &joined).unwrap(), split);
    }
}

#[test]
fn non_finite_scores_are_rejected() {
    let x = SequenceMatrix::from_rows("x", &[vec![1.0]]).unwrap();
    let bad = FnScorer::new(|_: &SequenceMatrix| f64::NAN);
    assert!(score_batch(&bad, &[x]).is_err());
}

#[test]
fn mixed_feature_counts_are_rejected() {
    let a = SequenceMatrix::from_rows("a", &[vec![1.0]]).unwrap();
    let b = SequenceMatrix::from_rows("b", &[vec![1.0], vec![2.0]]).unwrap();
    let s = FnScorer::new(|_: &SequenceMatrix| 0.0);
    assert!(score_batch(&s, &[a, b]).is_err());
}
