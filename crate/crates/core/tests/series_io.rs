use proptest::prelude::*;
use stablecvar::cvar::{simulate_cvar, CvarParams, SeriesData, TauSpec};
use stablecvar::linalg::{Mat, Vector};
use stablecvar::rng::rng_from_seed;
use stablecvar::stable::StableParams;

fn params() -> CvarParams {
    CvarParams {
        mu: Vector::from_vec(vec![0.01, -0.02]),
        alpha_adj: Mat::from_row_slice(2, 1, &[0.1, -0.3]),
        beta_coint: Mat::from_row_slice(2, 1, &[1.0, 0.5]),
        psi: vec![],
        sigma: Mat::identity(2, 2),
        r: 1,
        p: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_file_round_trip_is_bit_exact(seed in any::<u64>(), t in 5usize..300, modulus in 1usize..30) {
        let st = vec![StableParams::new(1.3, 0.4, 2.0, -1.0).unwrap(); 2];
        let tau = TauSpec::Modulus { modulus }.row_indices(t).unwrap();
        let s = simulate_cvar(&params(), &st, &tau, t, &mut rng_from_seed(seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        s.write_csv(&path).unwrap();
        let back = SeriesData::read_csv(&path).unwrap();
        prop_assert_eq!(&back.tau_idx, &s.tau_idx);
        prop_assert_eq!(back.prices.shape(), s.prices.shape());
        for (a, b) in back.prices.iter().zip(s.prices.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.to_csv_string().unwrap(), s.to_csv_string().unwrap());
    }
}

#[test]
fn malformed_files_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "time,a,b,is_boundary\n0,1,2,0\n",
        "timestamp,a,b,is_boundary\n0,1,x,0\n",
        "timestamp,a,b,is_boundary\n0,1,2,2\n",
        "timestamp,a,b,is_boundary\n0,1,2\n",
    ];
    for (k, text) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{k}.csv"));
        std::fs::write(&path, text).unwrap();
        assert!(SeriesData::read_csv(&path).is_err(), "case {k} parsed");
    }
    assert!(SeriesData::read_csv(&dir.path().join("missing.csv")).is_err());
}
