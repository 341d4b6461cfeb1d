//! Property tests of the structural invariants.

use dsel_core::classic::ta_step;
use dsel_core::ofdm::build_constellation;
use dsel_core::pipeline::{stack_real, unstack_real};
use dsel_core::rng::stream_rng;
use dsel_core::rnn::{ensemble_average, gru_step, CellKind, CellParams, NetworkModel};
use ndarray::Array1;
use num_complex::Complex64;
use proptest::prelude::*;

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec(
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(re, im)| Complex64::new(re, im)),
        n,
    )
}

proptest! {
    #[test]
    fn modulate_demap_round_trip(bits in proptest::collection::vec(0u8..2, 0..120), order in prop_oneof![Just(4usize), Just(16), Just(64)]) {
        let c = build_constellation(order).unwrap();
        let bps = c.bits_per_symbol();
        let usable = bits.len() - bits.len() % bps;
        let payload = &bits[..usable];
        let symbols = c.modulate(payload).unwrap();
        prop_assert_eq!(c.demap_bits(&symbols), payload.to_vec());
    }

    #[test]
    fn demap_is_idempotent(pts in complex_vec(16), order in prop_oneof![Just(4usize), Just(16), Just(64)]) {
        let c = build_constellation(order).unwrap();
        for y in pts {
            let once = c.demap(y);
            prop_assert_eq!(c.demap(once), once);
        }
    }

    #[test]
    fn stack_unstack_identity(v in complex_vec(52)) {
        let stacked = stack_real(&v);
        let back = unstack_real(stacked.as_slice().unwrap()).unwrap();
        for (a, b) in v.iter().zip(back.iter()) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn ta_stays_on_segment(prev in complex_vec(8), cur in complex_vec(8), alpha in 1.0f64..50.0) {
        let p = Array1::from(prev);
        let c = Array1::from(cur);
        let out = ta_step(&p, &c, alpha).unwrap();
        for k in 0..8 {
            let lo_re = p[k].re.min(c[k].re) - 1e-9;
            let hi_re = p[k].re.max(c[k].re) + 1e-9;
            prop_assert!(out[k].re >= lo_re && out[k].re <= hi_re);
            let lo_im = p[k].im.min(c[k].im) - 1e-9;
            let hi_im = p[k].im.max(c[k].im) + 1e-9;
            prop_assert!(out[k].im >= lo_im && out[k].im <= hi_im);
        }
    }

    #[test]
    fn gru_state_is_convex_combination(seed in 0u64..1000, scale in 0.1f64..3.0) {
        let p = CellParams::init(CellKind::Gru, 3, 5, &mut stream_rng(seed, &[]));
        let mut rng = stream_rng(seed, &[1]);
        use rand::Rng;
        let x = Array1::from_shape_fn(3, |_| (rng.gen::<f64>() - 0.5) * scale);
        let h_prev = Array1::from_shape_fn(5, |_| (rng.gen::<f64>() - 0.5) * scale);
        let h = gru_step(&p, &x, &h_prev);
        // candidate lies in (-1, 1); the update is a convex combination, so
        // the new state cannot escape the hull of {h_prev, (-1, 1)}
        for k in 0..5 {
            let lo = h_prev[k].min(-1.0) - 1e-12;
            let hi = h_prev[k].max(1.0) + 1e-12;
            prop_assert!(h[k] > lo && h[k] < hi);
        }
    }

    #[test]
    fn ensemble_average_is_permutation_invariant(seeds in proptest::collection::vec(0u64..500, 2..5)) {
        let models: Vec<NetworkModel> = seeds
            .iter()
            .map(|&s| NetworkModel::new(CellKind::Gru, 3, 2, 2, false, &mut stream_rng(s, &[7])))
            .collect();
        let fwd = ensemble_average(&models).unwrap();
        let mut rev = models.clone();
        rev.reverse();
        let bwd = ensemble_average(&rev).unwrap();
        let mut a = Vec::new();
        fwd.for_each_tensor(|t| a.extend_from_slice(t));
        let mut b = Vec::new();
        bwd.for_each_tensor(|t| b.extend_from_slice(t));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
