use proptest::prelude::*;
use rand::SeedableRng;
use smcd_core::arm::{self, LinkLengths};
use smcd_core::filter::{self, ResampleScheme};
use smcd_core::linalg;
use smcd_core::net::{sample_mask, MaskParticle};
use smcd_core::rng::SmcdRng;

fn weights(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..max).prop_filter("positive mass", |w| w.iter().sum::<f64>() > 1e-9).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    })
}

proptest! {
    #[test]
    fn normalized_log_weights_sum_to_one(raw in prop::collection::vec(-800.0f64..50.0, 1..200)) {
        let mut w = raw.clone();
        prop_assert!(filter::normalize_log_weights(&mut w));
        let s: f64 = w.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
        let ess = filter::effective_sample_size(&w);
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= w.len() as f64 + 1e-9);
    }

    #[test]
    fn systematic_counts_are_floor_or_ceil(w in weights(50), n in 1usize..300, seed in any::<u64>()) {
        let mut rng = SmcdRng::seed_from_u64(seed);
        let idx = filter::resample_indices(&w, n, ResampleScheme::Systematic, &mut rng);
        prop_assert_eq!(idx.len(), n);
        let mut c = vec![0usize; w.len()];
        for i in idx {
            c[i] += 1;
        }
        for (ci, wi) in c.iter().zip(&w) {
            let e = wi * n as f64;
            // tolerance for the rounding of the cumulative sum
            prop_assert!((*ci as f64) >= (e - 1e-9).floor() && (*ci as f64) <= (e + 1e-9).ceil(), "count {} expected {}", ci, e);
        }
    }

    #[test]
    fn multinomial_indices_in_range(w in weights(30), n in 1usize..100, seed in any::<u64>()) {
        let mut rng = SmcdRng::seed_from_u64(seed);
        let idx = filter::resample_indices(&w, n, ResampleScheme::Multinomial, &mut rng);
        prop_assert!(idx.iter().all(|&i| i < w.len() && w[i] > 0.0));
    }

    #[test]
    fn transition_preserves_length_and_is_xor_of_flips(len in 1usize..300, d in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = SmcdRng::seed_from_u64(seed);
        let m = sample_mask(0.5, len, &mut rng);
        let t = filter::transition(&m, d, &mut rng);
        prop_assert_eq!(t.len(), len);
        let mut x = m.clone();
        x.xor_assign(&t);
        prop_assert_eq!(x.count_ones(), m.hamming(&t));
        // padding bits beyond `len` stay clear
        prop_assert!(t.count_ones() <= len);
    }

    #[test]
    fn fractional_mask_round_trip(bits in prop::collection::vec(any::<bool>(), 1..200)) {
        let m = MaskParticle::from_bits(&bits);
        let f = m.to_fractional();
        prop_assert_eq!(f.len(), bits.len());
        prop_assert!(f.iter().zip(&bits).all(|(v, b)| *v == f64::from(u8::from(*b))));
        prop_assert_eq!(m.iter().collect::<Vec<_>>(), bits);
    }

    #[test]
    fn kinematics_reach_bounds(q1 in -10.0f64..10.0, q2 in -10.0f64..10.0, l1 in 0.01f64..3.0, l2 in 0.01f64..3.0) {
        let p = arm::forward_kinematics([q1, q2], LinkLengths::new(l1, l2));
        let r = p[0].hypot(p[1]);
        prop_assert!(r <= l1 + l2 + 1e-12 && r >= (l1 - l2).abs() - 1e-12);
    }

    #[test]
    fn wrapped_angles_are_equivalent(a in -100.0f64..100.0) {
        let w = arm::wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        prop_assert!((w.sin() - a.sin()).abs() < 1e-9 && (w.cos() - a.cos()).abs() < 1e-9);
    }

    #[test]
    fn pinv_is_a_generalized_inverse(a in prop::array::uniform4(-3.0f64..3.0)) {
        let m = [[a[0], a[1]], [a[2], a[3]]];
        let p = linalg::pinv2(&m, 1e-6);
        let mul = |x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]| {
            let mut o = [[0.0; 2]; 2];
            for r in 0..2 { for c in 0..2 { o[r][c] = x[r][0] * y[0][c] + x[r][1] * y[1][c]; } }
            o
        };
        let apa = mul(&mul(&m, &p), &m);
        let s = linalg::singular_values2(&m);
        prop_assume!(s[1] > 1e-3 || s[1] == 0.0);
        for r in 0..2 { for c in 0..2 { prop_assert!((apa[r][c] - m[r][c]).abs() < 1e-8 * (1.0 + s[0] * s[0])); } }
    }
}
