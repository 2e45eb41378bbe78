use cpsl_core::cluster::ClusterAssignment;
use cpsl_core::env::{expected_subcarrier_rate, sample_devices, subcarrier_rate, DeviceState, EnvSpec};
use cpsl_core::latency::{component_latencies, cpsl_round_latency, fl_round_latency, vanilla_sl_round_latency, ClusterCost};
use cpsl_core::profile::{reference_full_model_override, reference_pool1_override, CutProfile};
use cpsl_core::rng::rng_from_seed;
use cpsl_core::spectrum::{allocate_greedy, SpectrumAllocation};
use proptest::prelude::*;

fn blank(cut: usize) -> CutProfile {
    CutProfile { cut, xi_d: 0.0, xi_s: 0.0, xi_g: 0.0, gamma_d_f: 0.0, gamma_d_b: 0.0, gamma_s_f: 0.0, gamma_s_b: 0.0 }
}

fn pool1() -> CutProfile {
    blank(3).with_override(&reference_pool1_override())
}

fn full() -> CutProfile {
    blank(12).with_override(&reference_full_model_override())
}

// Straight-line evaluation of one homogeneous cluster of `k` devices, each
// with `x` subcarriers, written out term by term.
fn hand_cluster(k: usize, x: f64, c: f64, f: f64, snr_db: f64) -> f64 {
    let r = 1e6 * (1.0 + 10f64.powf(snr_db / 10.0)).log2();
    let b = 16.0;
    let xi_d = 0.67e6 * 8.0;
    let xi_s = 18e3 * 8.0;
    let xi_g = 36.1e3 * 8.0;
    let g_d = 5.6e6;
    let g_s = 86.01e6;
    let tau_e = k as f64 * b * 2.0 * g_s / 100e9;
    let start = xi_d / (c * r) + b * g_d / f + b * xi_s / (x * r) + tau_e;
    let end = xi_g / (x * r) + b * g_d / f + xi_d / (x * r);
    start + end
}

fn reference_round(env: &EnvSpec) -> f64 {
    let devices = env.mean_devices();
    let a = ClusterAssignment::chunked(env.n_devices, env.cluster_capacity);
    let allocs: Vec<_> = a
        .clusters()
        .iter()
        .map(|m| {
            let c: Vec<DeviceState> = m.iter().map(|&n| devices[n]).collect();
            allocate_greedy(&c, &pool1(), env).unwrap()
        })
        .collect();
    cpsl_round_latency(&a, &allocs, &devices, &pool1(), env).unwrap().total
}

#[test]
fn rate_matches_shannon_formula() {
    assert!((subcarrier_rate(17.0, 1e6) - 5.676e6).abs() < 1e3);
    assert!((subcarrier_rate(30.0, 1e6) - 9.97e6).abs() < 1e4);
    assert_eq!(subcarrier_rate(f64::NEG_INFINITY, 1e6), 0.0);
    assert!((subcarrier_rate(12.0, 3e6) - 3.0 * subcarrier_rate(12.0, 1e6)).abs() < 1e-6);
}

#[test]
fn expected_rate_is_below_rate_at_mean_and_converges() {
    assert_eq!(expected_subcarrier_rate(17.0, 0.0, 1e6, 10, 1).unwrap(), subcarrier_rate(17.0, 1e6));
    let a = expected_subcarrier_rate(17.0, 2.0, 1e6, 100_000, 1).unwrap();
    let b = expected_subcarrier_rate(17.0, 2.0, 1e6, 2_000_000, 2).unwrap();
    assert!((a - b).abs() / b < 0.01);
    // Concavity of log2(1 + snr) in linear SNR bounds the mean rate.
    let mut rng = rng_from_seed(3);
    let mut lin = 0.0;
    let n = 100_000;
    for _ in 0..n {
        let s: f64 = rand_distr::Distribution::sample(&rand_distr::Normal::new(17.0, 2.0).unwrap(), &mut rng);
        lin += 10f64.powf(s / 10.0);
    }
    let at_mean_linear = 1e6 * (1.0 + lin / n as f64).log2();
    assert!(a <= at_mean_linear);
}

#[test]
fn heterogeneous_means_follow_their_ranges() {
    let mut rng = rng_from_seed(11);
    let env = EnvSpec::heterogeneous(10_000, (0.1e9, 1e9), (5.0, 30.0), 0.05e9, 2.0, &mut rng);
    let n = env.n_devices as f64;
    let mf = env.f_mean.iter().sum::<f64>() / n;
    let ms = env.snr_mean_db.iter().sum::<f64>() / n;
    let vf = env.f_mean.iter().map(|f| (f - mf).powi(2)).sum::<f64>() / n;
    // Uniform moments: mean (a + b) / 2, variance (b - a)^2 / 12.
    assert!((mf - 0.55e9).abs() < 0.01e9);
    assert!((ms - 17.5).abs() < 0.25);
    assert!((vf.sqrt() - 0.9e9 / 12f64.sqrt()).abs() < 0.01e9);
    assert!(env.f_mean.iter().all(|f| (0.1e9..=1e9).contains(f)));
}

#[test]
fn capability_draws_stay_positive() {
    let mut env = EnvSpec::homogeneous(2000, 0.1e9, 17.0);
    env.f_std = 0.5e9;
    let devs = sample_devices(&env, 5).unwrap();
    assert!(devs.iter().all(|d| d.f >= 0.01 * 0.1e9));
}

#[test]
fn homogeneous_cpsl_round_matches_hand_evaluation() {
    let env = EnvSpec::default();
    let got = reference_round(&env);
    let want = 6.0 * hand_cluster(5, 6.0, 30.0, 0.5e9, 17.0);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    assert!((got - 4.57).abs() < 0.01);
}

#[test]
fn vanilla_sl_is_thirty_single_device_visits() {
    let env = EnvSpec::default();
    let got = vanilla_sl_round_latency(&env.mean_devices(), &pool1(), &env).unwrap().total;
    let want = 30.0 * hand_cluster(1, 30.0, 30.0, 0.5e9, 17.0);
    assert!((got - want).abs() < 1e-9);
    assert!((got - 13.92).abs() < 0.01);
}

#[test]
fn fl_round_is_the_slowest_device() {
    let env = EnvSpec::default();
    let got = fl_round_latency(&env.mean_devices(), &full(), &env).unwrap().total;
    let r = subcarrier_rate(17.0, 1e6);
    let xi = 16.49e6 * 8.0;
    let want = xi / (30.0 * r) + 2.0 * 16.0 * 91.6e6 / 0.5e9 + xi / r;
    assert!((got - want).abs() < 1e-9);
    assert!((got - 29.88).abs() < 0.01);
}

#[test]
fn single_cluster_round_equals_cluster_latency() {
    let env = EnvSpec { cluster_capacity: 5, ..EnvSpec::homogeneous(5, 0.5e9, 17.0) };
    let got = reference_round(&env);
    assert!((got - hand_cluster(5, 6.0, 30.0, 0.5e9, 17.0)).abs() < 1e-9);
}

#[test]
fn more_local_epochs_add_inner_phases() {
    let mut env = EnvSpec::default();
    let one = reference_round(&env);
    env.local_epochs = 3;
    let three = reference_round(&env);
    let r = subcarrier_rate(17.0, 1e6);
    let inner = 36.1e3 * 8.0 / (6.0 * r) + 2.0 * 16.0 * 5.6e6 / 0.5e9 + 16.0 * 18e3 * 8.0 / (6.0 * r) + 5.0 * 16.0 * 2.0 * 86.01e6 / 100e9;
    assert!((three - one - 6.0 * 2.0 * inner).abs() < 1e-9);
}

fn device() -> impl Strategy<Value = DeviceState> {
    (0.1e9..1e9f64, 5.0..30.0f64).prop_map(|(f, s)| DeviceState::new(0, f, s))
}

fn cluster(max: usize) -> impl Strategy<Value = Vec<DeviceState>> {
    prop::collection::vec(device(), 1..=max).prop_map(|mut v| {
        for (i, d) in v.iter_mut().enumerate() {
            d.id = i;
        }
        v
    })
}

proptest! {
    #[test]
    fn components_are_non_increasing_in_subcarriers(d in device(), x in 1usize..40) {
        let env = EnvSpec::default();
        let a = component_latencies(&d, &pool1(), x, &env).unwrap();
        let b = component_latencies(&d, &pool1(), x + 1, &env).unwrap();
        prop_assert!(b.tau_s <= a.tau_s && b.tau_g <= a.tau_g && b.tau_t <= a.tau_t);
        prop_assert_eq!(a.tau_b, b.tau_b);
        prop_assert_eq!(a.tau_d, b.tau_d);
    }

    #[test]
    fn cluster_latency_is_non_increasing_in_each_allocation(c in cluster(4), extra in prop::collection::vec(0usize..5, 4), who in 0usize..4) {
        let env = EnvSpec::default();
        let cost = ClusterCost::new(&c, &pool1(), &env);
        let x: Vec<usize> = (0..c.len()).map(|i| 1 + extra[i]).collect();
        let mut y = x.clone();
        y[who % c.len()] += 1;
        prop_assert!(cost.eval(&y) <= cost.eval(&x));
    }

    #[test]
    fn cost_cache_agrees_with_phase_evaluation(c in cluster(5), extra in prop::collection::vec(0usize..4, 5), epochs in 1usize..4) {
        let env = EnvSpec { local_epochs: epochs, ..EnvSpec::default() };
        let x: Vec<usize> = (0..c.len()).map(|i| 1 + extra[i]).collect();
        let cost = ClusterCost::new(&c, &pool1(), &env);
        let alloc = SpectrumAllocation::new(c.iter().map(|d| d.id).collect(), x.clone()).unwrap();
        let a = ClusterAssignment::new(vec![(0..c.len()).collect()]);
        let full = cpsl_round_latency(&a, &[alloc], &c, &pool1(), &env).unwrap().total;
        prop_assert!((cost.eval(&x) - full).abs() <= 1e-12 * full.max(1.0));
    }

    #[test]
    fn round_latency_is_the_sum_of_cluster_latencies(devs in cluster(9), k in 1usize..4) {
        let env = EnvSpec { cluster_capacity: k, ..EnvSpec::default() };
        let a = ClusterAssignment::chunked(devs.len(), k);
        let allocs: Vec<_> = a.clusters().iter().map(|m| {
            let c: Vec<DeviceState> = m.iter().map(|&n| devs[n]).collect();
            allocate_greedy(&c, &pool1(), &env).unwrap()
        }).collect();
        let round = cpsl_round_latency(&a, &allocs, &devs, &pool1(), &env).unwrap();
        let sum: f64 = a.clusters().iter().zip(&allocs).map(|(m, al)| {
            let c: Vec<DeviceState> = m.iter().map(|&n| devs[n]).collect();
            let one = ClusterAssignment::new(vec![(0..c.len()).collect()]);
            cpsl_round_latency(&one, core::slice::from_ref(al), &c, &pool1(), &env).unwrap().total
        }).sum();
        prop_assert!((round.total - sum).abs() <= 1e-12 * sum);
    }
}
