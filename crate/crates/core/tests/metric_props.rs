mod common;

use proptest::prelude::*;
use scalestream_core::assembler::{CumulativeOutput, OutputPoint};
use scalestream_core::miou;

fn output(pairs: &[(u16, u16)], classes: usize) -> CumulativeOutput {
    CumulativeOutput {
        scale: 1,
        class_count: classes,
        points: pairs
            .iter()
            .enumerate()
            .map(|(i, &(gt, pred))| OutputPoint { position: [i as f32, 0.0, 0.0], t: i as u32, origin_scale: 1, pred, gt })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn miou_matches_set_computation(pairs in prop::collection::vec((0u16..5, 0u16..5), 1..60)) {
        let r = miou(&output(&pairs, 5)).unwrap();
        let gt: Vec<u16> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<u16> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(&r.per_class, &common::brute_iou(&gt, &pred, 5));
        prop_assert_eq!(r.miou, common::brute_miou(&gt, &pred, 5));
        prop_assert!((0.0..=1.0).contains(&r.miou));
    }

    #[test]
    fn miou_ignores_point_order(
        pairs in prop::collection::vec((0u16..4, 0u16..4), 1..60),
        perm in any::<u64>(),
    ) {
        use rand::{seq::SliceRandom, SeedableRng};
        let base = miou(&output(&pairs, 4)).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm));
        prop_assert_eq!(miou(&output(&shuffled, 4)).unwrap(), base);
    }
}
