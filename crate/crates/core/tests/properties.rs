use disp_core::data::{decode_dataset, encode_dataset, Dataset, Split};
use disp_core::metrics::{fid, mann_whitney, precision_recall};
use disp_core::optim::{ema_update, AdamConfig, AdamState};
use disp_core::prior::{gmm_fit, vicinal_mix, CovarianceKind, GmmConfig, PriorSet};
use disp_core::tensor::{ParamSet, Tensor};
use proptest::prelude::*;

fn cloud(max_rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    (3..=max_rows).prop_flat_map(move |m| {
        prop::collection::vec(-3.0f64..3.0, m * cols).prop_map(move |d| Tensor::matrix(m, cols, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fid_is_symmetric_and_nonnegative(a in cloud(20, 3), b in cloud(20, 3)) {
        let ab = fid(&a, &b).unwrap();
        let ba = fid(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9 * (1.0 + ab.abs()));
        prop_assert!(ab >= 0.0);
        prop_assert!(fid(&a, &a).unwrap() < 1e-9);
    }

    #[test]
    fn precision_recall_are_fractions(a in cloud(16, 2), b in cloud(16, 2)) {
        let (p, r) = precision_recall(&a, &b, 2, 2).unwrap();
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&r));
        // Each cloud lies inside its own manifold.
        let (p_self, r_self) = precision_recall(&a, &a, 1, 1).unwrap();
        prop_assert_eq!((p_self, r_self), (1.0, 1.0));
    }

    #[test]
    fn mann_whitney_is_antisymmetric(
        a in prop::collection::vec(0i32..6, 1..25),
        b in prop::collection::vec(0i32..6, 1..25),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = mann_whitney(&a, &b).unwrap();
        let ba = mann_whitney(&b, &a).unwrap();
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
        prop_assert!((ab.z + ba.z).abs() < 1e-12);
    }

    #[test]
    fn vicinal_mix_stays_on_the_segment(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 2..10),
        i in 0usize..100, j in 0usize..100, lambda in 0.0f64..=1.0,
    ) {
        let n = rows.len();
        let (i, j) = (i % n, j % n);
        let p = PriorSet::new(Tensor::from_rows(&rows).unwrap(), "h".into()).unwrap();
        let m = vicinal_mix(&p, i, j, lambda).unwrap();
        for c in 0..4 {
            let (lo, hi) = (rows[i][c].min(rows[j][c]), rows[i][c].max(rows[j][c]));
            prop_assert!(m[c] >= lo - 1e-12 && m[c] <= hi + 1e-12);
        }
    }

    #[test]
    fn gmm_loglik_never_decreases(seed in 0u64..1000, data in cloud(40, 2)) {
        prop_assume!(data.rows() >= 6);
        let p = PriorSet::new(data, "h".into()).unwrap();
        for covariance in [CovarianceKind::Diagonal, CovarianceKind::Full] {
            let g = gmm_fit(&p, &GmmConfig { k: 3, covariance, seed, max_iters: 50, ..GmmConfig::default() }).unwrap();
            for w in g.loglik_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} then {}", w[0], w[1]);
            }
            prop_assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dataset_encoding_round_trips(
        rows in 0usize..12, cols in 1usize..5, labeled in any::<bool>(), seed in any::<u32>(),
    ) {
        // Values representable in 32 bits, as stored on disk.
        let data: Vec<f64> = (0..rows * cols).map(|k| ((seed as usize + 31 * k) % 2001) as f32 as f64 / 1000.0 - 1.0).collect();
        let data: Vec<f64> = data.into_iter().map(|v| v as f32 as f64).collect();
        let labels = labeled.then(|| (0..rows as u32).collect());
        let d = Dataset::new(Tensor::matrix(rows, cols, data).unwrap(), labels, Split::Unspecified).unwrap();
        let bytes = encode_dataset(&d);
        let back = decode_dataset(&bytes).unwrap();
        prop_assert_eq!(&back.x, &d.x);
        prop_assert_eq!(&back.labels, &d.labels);
        prop_assert_eq!(encode_dataset(&back), bytes);
    }

    #[test]
    fn adam_with_zero_gradient_is_a_no_op(vals in prop::collection::vec(-2.0f64..2.0, 1..8), steps in 1usize..5) {
        let mut params = ParamSet::new();
        params.push("w", Tensor::matrix(1, vals.len(), vals.clone()).unwrap(), true);
        let mut opt = AdamState::new(&params, AdamConfig::default());
        for _ in 0..steps {
            params.tensor_mut(0).accumulate_grad(&vec![0.0; vals.len()]).unwrap();
            opt.step(&mut params).unwrap();
        }
        prop_assert_eq!(params.tensor(0).data(), &vals[..]);
        prop_assert_eq!(opt.steps_taken(), steps as u64);
    }

    #[test]
    fn ema_of_constant_live_is_geometric(start in -1.0f64..1.0, target in -1.0f64..1.0, decay in 0.5f64..0.999, n in 1i32..30) {
        let mut shadow = ParamSet::new();
        shadow.push("w", Tensor::scalar(start), true);
        let mut live = ParamSet::new();
        live.push("w", Tensor::scalar(target), true);
        for _ in 0..n {
            ema_update(&mut shadow, &live, decay).unwrap();
        }
        let expect = target + (start - target) * decay.powi(n);
        prop_assert!((shadow.tensor(0).data()[0] - expect).abs() < 1e-12);
    }
}
