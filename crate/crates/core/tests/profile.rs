use cpsl_core::profile::{
    enumerate_cuts, lenet, lenet_reference_overrides, output_shape, profile_cut, resolve_profiles, validate_layers,
    LayerSpec, Padding, ProfileOptions, TensorShape,
};
use cpsl_core::Error;
use proptest::prelude::*;

// Multiply-accumulates and parameters counted by hand for the first cuts.
#[test]
fn lenet_front_matches_hand_counts() {
    let p = enumerate_cuts(&lenet(), &ProfileOptions::default()).unwrap();
    let conv1_macs = 26.0 * 26.0 * 32.0 * 9.0;
    let conv2_macs = 24.0 * 24.0 * 32.0 * 9.0 * 32.0;
    assert_eq!(p[0].gamma_d_f, conv1_macs);
    assert_eq!(p[1].gamma_d_f, conv1_macs + conv2_macs);
    assert_eq!(p[0].xi_d, (9.0 * 32.0 + 32.0) * 32.0);
    assert_eq!(p[1].xi_d, ((9.0 * 32.0 + 32.0) + (9.0 * 32.0 * 32.0 + 32.0)) * 32.0);
    assert_eq!(p[2].xi_s, 12.0 * 12.0 * 32.0 * 32.0);
    assert_eq!(p[2].xi_g, 16.0 * p[2].xi_s);
    assert_eq!(p.len(), 12);
    assert_eq!(p[11].xi_s, 0.0);
    assert_eq!(p[11].gamma_s_f, 0.0);
}

#[test]
fn pool1_computed_values_sit_near_the_reference_table() {
    let p = profile_cut(&lenet(), 3, &ProfileOptions::default()).unwrap();
    assert!((p.gamma_d_f / 5.6e6 - 1.0).abs() < 0.05);
    assert!((p.xi_s / 144_000.0 - 1.0).abs() < 0.03);
}

#[test]
fn overrides_replace_only_their_cuts() {
    let computed = enumerate_cuts(&lenet(), &ProfileOptions::default()).unwrap();
    let resolved = resolve_profiles(&computed, &lenet_reference_overrides());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b;
    assert!(close(resolved[2].xi_d, 0.67e6 * 8.0));
    assert!(close(resolved[11].xi_d, 16.49e6 * 8.0));
    assert!(close(resolved[11].gamma_d_f, 91.6e6));
    for v in [0, 1, 3, 10] {
        assert_eq!(resolved[v], computed[v]);
    }
}

#[test]
fn malformed_models_are_rejected() {
    let too_small = vec![LayerSpec::conv(1, "C", 4, 5, Padding::Valid)];
    let opts = ProfileOptions { input: TensorShape::new(3, 3, 1), ..ProfileOptions::default() };
    assert!(matches!(enumerate_cuts(&too_small, &opts), Err(Error::Shape(_))));
    let gap = vec![LayerSpec::conv(1, "C", 4, 3, Padding::Same), LayerSpec::dense(3, "F", 2, "softmax")];
    assert!(validate_layers(&gap).is_err());
    let conv_after_dense = vec![LayerSpec::dense(1, "F", 4, "relu"), LayerSpec::conv(2, "C", 4, 3, Padding::Same)];
    assert!(validate_layers(&conv_after_dense).is_err());
    assert!(profile_cut(&lenet(), 0, &ProfileOptions::default()).is_err());
    assert!(profile_cut(&lenet(), 13, &ProfileOptions::default()).is_err());
}

#[test]
fn same_padding_keeps_the_spatial_size() {
    let s = output_shape(&LayerSpec::conv(1, "C", 7, 3, Padding::Same), TensorShape::new(9, 9, 2)).unwrap();
    assert_eq!(s, TensorShape::new(9, 9, 7));
    let s = output_shape(&LayerSpec::maxpool(2, "P", 2), TensorShape::new(7, 7, 3)).unwrap();
    assert_eq!(s, TensorShape::new(3, 3, 3));
}

fn small_net() -> impl Strategy<Value = (Vec<LayerSpec>, usize)> {
    (1usize..4, 1usize..3, 1usize..4, 2usize..12, 1usize..8).prop_map(|(convs, pools, dense, width, batch)| {
        let mut layers = Vec::new();
        let mut i = 1;
        for c in 0..convs {
            layers.push(LayerSpec::conv(i, &format!("C{c}"), width, 3, Padding::Same));
            i += 1;
        }
        for p in 0..pools {
            layers.push(LayerSpec::maxpool(i, &format!("P{p}"), 2));
            i += 1;
        }
        for d in 0..dense {
            let act = if d + 1 == dense { "softmax" } else { "relu" };
            layers.push(LayerSpec::dense(i, &format!("F{d}"), width, act));
            i += 1;
        }
        (layers, batch)
    })
}

proptest! {
    #[test]
    fn every_cut_conserves_total_workload((layers, batch) in small_net()) {
        let opts = ProfileOptions { batch, input: TensorShape::new(16, 16, 2), ..ProfileOptions::default() };
        let cuts = enumerate_cuts(&layers, &opts).unwrap();
        let total = cuts.last().unwrap().gamma_d_f;
        for w in cuts.windows(2) {
            prop_assert!(w[1].xi_d >= w[0].xi_d);
            prop_assert!(w[1].gamma_d_f >= w[0].gamma_d_f);
        }
        for c in &cuts {
            prop_assert!((c.total_forward() - total).abs() <= 1e-9 * total);
            prop_assert_eq!(c.gamma_d_f, c.gamma_d_b);
            prop_assert_eq!(c.xi_g, batch as f64 * c.xi_s);
        }
    }
}
