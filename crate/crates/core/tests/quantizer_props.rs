mod common;

use common::{nearest_exhaustive, random_net};
use proptest::prelude::*;
use qsyn::data::Dataset;
use qsyn::nn::{predict, train, LayerSpec, Network, Params, TrainConfig};
use qsyn::quantizer::{
    apply_qr_step, fraction_near_levels, layer_sigmas, nearest_level, qr_penalty, qr_update_term, quantize_network,
    scheme_accuracy, select_global_level, select_levels_dq, train_with_qr, LevelSet, QrConfig, QrSchedule,
    QuantizationScheme, DEFAULT_GRID,
};
use qsyn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn one_layer(weights: Vec<f64>) -> Network<f64> {
    let n = weights.len();
    Network::new(vec![n], vec![LayerSpec::Dense { inputs: n, outputs: 1 }], 0)
        .unwrap()
        .with_params(vec![Some(Params { weight: Tensor::new(vec![1, n], weights).unwrap(), bias: Tensor::from_vec(vec![0.0]) })])
        .unwrap()
}

fn weights(net: &Network<f64>) -> Vec<f64> {
    net.param(0).unwrap().weight.data().to_vec()
}

fn random_levels(rng: &mut impl Rng) -> LevelSet {
    let n = rng.random_range(1..5);
    let mut m: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..1.0)).collect();
    m.sort_by(f64::total_cmp);
    m.dedup();
    LevelSet::new(m).unwrap()
}

#[test]
fn nearest_examples() {
    let l = |m: &[f64]| LevelSet::new(m.to_vec()).unwrap();
    assert_eq!(nearest_level(0.05, &l(&[0.06])), 0.06);
    assert_eq!(nearest_level(0.03, &l(&[0.06])), 0.0);
    assert_eq!(nearest_level(-0.10, &l(&[0.02, 0.08])), -0.08);
    let scheme = QuantizationScheme::new(vec![("ip1".into(), l(&[0.06]))]).unwrap();
    let q = quantize_network(&one_layer(vec![0.05, -0.01, 0.2]), &scheme).unwrap();
    assert_eq!(weights(&q), vec![0.06, 0.0, 0.06]);
    let other = QuantizationScheme::new(vec![("conv1".into(), l(&[0.06]))]).unwrap();
    assert!(quantize_network(&one_layer(vec![0.1]), &other).is_err());
}

#[test]
fn update_term_examples() {
    let scheme = QuantizationScheme::new(vec![("ip1".into(), LevelSet::single(0.06).unwrap())]).unwrap();
    let net = one_layer(vec![0.05, 0.06, -0.05, 0.0, 0.2]);
    let term = qr_update_term(&net, &scheme).unwrap();
    assert_eq!(term[0].as_ref().unwrap().data(), &[-1.0, 0.0, 1.0, 0.0, 1.0]);
    assert!((qr_penalty(&one_layer(vec![0.05]), &scheme).unwrap() - 0.01).abs() < 1e-15);
}

#[test]
fn penalty_matches_sum_of_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..20 {
        let levels = random_levels(&mut rng);
        let w: Vec<f64> = (0..100).map(|_| rng.random_range(-1.5..1.5)).collect();
        let oracle: f64 = w.iter().map(|&x| (x - nearest_exhaustive(x, &levels)).abs()).sum();
        let scheme = QuantizationScheme::new(vec![("ip1".into(), levels)]).unwrap();
        assert!((qr_penalty(&one_layer(w), &scheme).unwrap() - oracle).abs() < 1e-12);
    }
}

// With no data gradient, each step moves a weight by exactly `step` toward
// its nearest level. Dyadic weights, levels and step keep the arithmetic
// exact, so every weight lands on its level and stays there.
#[test]
fn unrolled_qr_toy() {
    let levels = LevelSet::new(vec![0.125, 0.375]).unwrap();
    let step = 1.0 / 64.0;
    assert!(step < levels.min_gap() / 2.0);
    let start = vec![0.0625, 0.09375, -0.21875, 0.28125, 0.5, -0.015625, 0.25];
    let scheme = QuantizationScheme::new(vec![("ip1".into(), levels.clone())]).unwrap();
    let mut net = one_layer(start.clone());
    let mut expected = start.clone();
    let mut prev = qr_penalty(&net, &scheme).unwrap();
    for _ in 0..20 {
        for w in expected.iter_mut() {
            let d = *w - nearest_exhaustive(*w, &levels);
            *w -= step * (if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 });
        }
        apply_qr_step(&mut net, &scheme, step).unwrap();
        assert_eq!(weights(&net), expected);
        let p = qr_penalty(&net, &scheme).unwrap();
        assert!(p <= prev);
        prev = p;
    }
    assert_eq!(weights(&net), vec![0.0, 0.125, -0.125, 0.375, 0.375, 0.0, 0.125]);
    assert_eq!(prev, 0.0);
}

// Off the lattice a weight overshoots its level and then alternates between
// distances d and step - d, so the total only shrinks until the band is hit.
#[test]
fn off_lattice_weight_settles_in_band() {
    let levels = LevelSet::single(0.06).unwrap();
    let scheme = QuantizationScheme::new(vec![("ip1".into(), levels)]).unwrap();
    let step = 0.004;
    let mut net = one_layer(vec![0.05]);
    let mut trace = Vec::new();
    for _ in 0..6 {
        apply_qr_step(&mut net, &scheme, step).unwrap();
        trace.push(weights(&net)[0]);
    }
    let expected = [0.054, 0.058, 0.062, 0.058, 0.062, 0.058];
    for (a, e) in trace.iter().zip(expected) {
        assert!((a - e).abs() < 1e-15, "{trace:?}");
    }
}

fn teacher_data(seed: u64, n: usize) -> Dataset {
    let layers = vec![
        LayerSpec::Dense { inputs: 8, outputs: 16 },
        LayerSpec::ReLU,
        LayerSpec::Dense { inputs: 16, outputs: 4 },
        LayerSpec::Softmax,
    ];
    let teacher = Network::<f32>::new(vec![8], layers, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let x: Vec<f32> = (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let images = Tensor::new(vec![n, 8], x).unwrap();
    let labels = predict(&teacher, &Dataset::new(images.clone(), vec![0; n], 4, "x").unwrap()).unwrap();
    Dataset::new(images, labels, 4, "teacher").unwrap()
}

fn student(seed: u64) -> Network<f32> {
    Network::new(
        vec![8],
        vec![
            LayerSpec::Dense { inputs: 8, outputs: 32 },
            LayerSpec::ReLU,
            LayerSpec::Dense { inputs: 32, outputs: 4 },
            LayerSpec::Softmax,
        ],
        seed,
    )
    .unwrap()
}

#[test]
fn qr_clusters_weights_and_zero_lambda_is_plain_sgd() {
    let data = teacher_data(1, 400);
    let cfg = TrainConfig { learning_rate: 0.05, epochs: 20, batch_size: 16, ..Default::default() };
    let mut plain = student(2);
    train(&mut plain, &data, &cfg).unwrap();

    let off = QrConfig { lambda: 0.0, schedule: QrSchedule::Constant };
    let scheme = QuantizationScheme::uniform(&plain, &LevelSet::single(0.1).unwrap());
    let (same, _) = train_with_qr(&student(2), &data, &cfg, &off, &scheme).unwrap();
    assert_eq!(qsyn::checkpoint::to_bytes(&same), qsyn::checkpoint::to_bytes(&plain));

    let qr = QrConfig { lambda: 0.1, schedule: QrSchedule::LinearRamp { fraction: 0.25 } };
    let (clustered, _) = train_with_qr(&student(2), &data, &cfg, &qr, &scheme).unwrap();
    let tol = 0.1 / 10.0;
    let before = fraction_near_levels(&plain, &scheme, tol).unwrap();
    let after = fraction_near_levels(&clustered, &scheme, tol).unwrap();
    assert!(after > before, "{after} vs {before}");
}

#[test]
fn dq_dominates_every_shared_level_on_its_grid() {
    let data = teacher_data(3, 300);
    let mut net = student(4);
    let cfg = TrainConfig { learning_rate: 0.05, epochs: 10, batch_size: 16, ..Default::default() };
    train(&mut net, &data, &cfg).unwrap();
    let dq = select_levels_dq(&net, &data, &DEFAULT_GRID).unwrap();
    assert_eq!(dq.scheme.len(), 2);
    let naive = select_global_level(&net, &data, &DEFAULT_GRID).unwrap();
    assert!(dq.val_accuracy >= naive.val_accuracy);
    for (_, s) in layer_sigmas(&net) {
        for c in DEFAULT_GRID {
            let shared = QuantizationScheme::uniform(&net, &LevelSet::single(c * s).unwrap());
            assert!(scheme_accuracy(&net, &shared, &data).unwrap() <= dq.val_accuracy);
        }
    }
}

// Layers whose weight scales differ by 10x should get magnitudes that differ
// by about as much.
#[test]
fn per_layer_levels_follow_weight_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut net = Network::<f64>::new(
        vec![16],
        vec![
            LayerSpec::Dense { inputs: 16, outputs: 64 },
            LayerSpec::ReLU,
            LayerSpec::Dense { inputs: 64, outputs: 5 },
            LayerSpec::Softmax,
        ],
        0,
    )
    .unwrap();
    for (layer, std) in [(0, 0.1), (2, 0.01)] {
        let normal = Normal::new(0.0, std).unwrap();
        for w in net.param_mut(layer).unwrap().weight.data_mut() {
            *w = normal.sample(&mut rng);
        }
    }
    let n = 600;
    let x: Vec<f32> = (0..n * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let images = Tensor::new(vec![n, 16], x).unwrap();
    let labels = predict(&net, &Dataset::new(images.clone(), vec![0; n], 5, "x").unwrap()).unwrap();
    let val = Dataset::new(images, labels, 5, "self").unwrap();

    let dq = select_levels_dq(&net, &val, &DEFAULT_GRID).unwrap();
    let (q1, q2) = (dq.scheme.get("ip1").unwrap().smallest(), dq.scheme.get("ip2").unwrap().smallest());
    let ratio = q1 / q2;
    assert!((3.0..=30.0).contains(&ratio), "q1 {q1} q2 {q2}");

    // exhaustive sweep over both grids agrees on the scale separation
    let sig: Vec<f64> = layer_sigmas(&net).into_iter().map(|(_, s)| s).collect();
    let mut best = (0.0, 0.0, -1.0);
    for a in DEFAULT_GRID {
        for b in DEFAULT_GRID {
            let scheme = QuantizationScheme::new(vec![
                ("ip1".into(), LevelSet::single(a * sig[0]).unwrap()),
                ("ip2".into(), LevelSet::single(b * sig[1]).unwrap()),
            ])
            .unwrap();
            let acc = scheme_accuracy(&net, &scheme, &val).unwrap();
            if acc > best.2 {
                best = (a * sig[0], b * sig[1], acc);
            }
        }
    }
    assert!((3.0..=30.0).contains(&(best.0 / best.1)));
    assert!(dq.val_accuracy <= best.2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn nearest_agrees_with_scan(seed in any::<u64>(), w in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = random_levels(&mut rng);
        prop_assert_eq!(nearest_level(w, &levels), nearest_exhaustive(w, &levels));
        // exact midpoints exercise the tie rule
        let m = levels.magnitudes();
        let mid = m[0] / 2.0;
        prop_assert_eq!(nearest_level(mid, &levels), nearest_exhaustive(mid, &levels));
        prop_assert_eq!(nearest_level(-mid, &levels), nearest_exhaustive(-mid, &levels));
    }

    #[test]
    fn quantize_is_idempotent_and_keeps_biases(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng);
        let levels = random_levels(&mut rng);
        let scheme = QuantizationScheme::uniform(&net, &levels);
        let once = quantize_network(&net, &scheme).unwrap();
        let twice = quantize_network(&once, &scheme).unwrap();
        prop_assert_eq!(qsyn::checkpoint::to_bytes(&once), qsyn::checkpoint::to_bytes(&twice));
        prop_assert_eq!(qr_penalty(&once, &scheme).unwrap(), 0.0);
        for (a, b) in net.params().iter().flatten().zip(once.params().iter().flatten()) {
            let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.bias), bits(&b.bias));
        }
    }

    #[test]
    fn update_term_is_a_sign(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng);
        let scheme = QuantizationScheme::uniform(&net, &random_levels(&mut rng));
        let snapped = quantize_network(&net, &scheme).unwrap();
        for (i, term) in qr_update_term(&net, &scheme).unwrap().iter().enumerate() {
            let Some(term) = term else { continue };
            let w = net.param(i).unwrap().weight.data();
            let q = snapped.param(i).unwrap().weight.data();
            for ((t, w), q) in term.data().iter().zip(w).zip(q) {
                prop_assert!(*t == -1.0 || *t == 0.0 || *t == 1.0);
                prop_assert_eq!(*t == 0.0, w == q);
            }
        }
    }

    #[test]
    fn qr_steps_approach_then_stay_in_band(seed in any::<u64>(), frac in 0.01f64..0.49) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = random_levels(&mut rng);
        let step = frac * levels.min_gap();
        let w: Vec<f64> = (0..50).map(|_| rng.random_range(-1.2..1.2)).collect();
        let scheme = QuantizationScheme::new(vec![("ip1".into(), levels.clone())]).unwrap();
        let mut net = one_layer(w);
        let dist = |net: &Network<f64>| -> Vec<f64> {
            weights(net).iter().map(|&w| (w - nearest_exhaustive(w, &levels)).abs()).collect()
        };
        let mut prev = dist(&net);
        let mut prev_penalty = qr_penalty(&net, &scheme).unwrap();
        let steps = (1.2 / step).ceil() as usize + 2;
        for _ in 0..steps {
            apply_qr_step(&mut net, &scheme, step).unwrap();
            let d = dist(&net);
            let p = qr_penalty(&net, &scheme).unwrap();
            if prev.iter().all(|&x| x >= step) {
                prop_assert!(p <= prev_penalty + 1e-12);
            }
            for (a, b) in prev.iter().zip(&d) {
                if *a > step {
                    prop_assert!((b - (a - step)).abs() < 1e-12);
                } else {
                    prop_assert!(*b <= step + 1e-12);
                }
            }
            prev = d;
            prev_penalty = p;
        }
        prop_assert!(prev.iter().all(|&x| x <= step + 1e-12));
    }
}
