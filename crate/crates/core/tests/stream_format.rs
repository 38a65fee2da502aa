mod common;

use proptest::prelude::*;
use scalestream_core::point_stream::{export_csv, parse_csv};
use scalestream_core::{read_stream, write_stream, PointStream};

fn bytes_of(s: &PointStream) -> Vec<u8> {
    let mut buf = Vec::new();
    let n = write_stream(s, &mut buf).unwrap();
    assert_eq!(n as usize, buf.len());
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn binary_round_trip_is_exact(s in common::arb_stream(60, 11)) {
        let bytes = bytes_of(&s);
        let back = read_stream(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(bytes_of(&back), bytes);
    }

    #[test]
    fn every_truncation_is_rejected(s in common::arb_stream(12, 4)) {
        let bytes = bytes_of(&s);
        for cut in 0..bytes.len() {
            prop_assert!(read_stream(&bytes[..cut]).is_err(), "prefix of {} bytes parsed", cut);
        }
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(read_stream(longer.as_slice()).is_err());
    }

    #[test]
    fn accepted_streams_are_monotone(
        s in common::arb_stream(10, 3),
        flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6),
    ) {
        let mut bytes = bytes_of(&s);
        for (at, value) in flips {
            let i = at.index(bytes.len());
            bytes[i] = value;
        }
        if let Ok(parsed) = read_stream(bytes.as_slice()) {
            prop_assert!(parsed.points().windows(2).all(|w| w[0].t <= w[1].t));
            prop_assert!(parsed.points().iter().all(|p| usize::from(p.label) < parsed.class_count()));
        }
    }

    #[test]
    fn csv_round_trip(s in common::arb_stream(40, 5)) {
        prop_assert_eq!(parse_csv(&export_csv(&s)).unwrap(), s.points().to_vec());
    }
}
