use super::*;
use crate::model::{Example, Regressor};
use crate::remnet::{encode_checkpoint, RemnetConfig};
use crate::rng;
use crate::training::{fit, TrainPlan};

fn random_input(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    (0..len)
        .map(|i| rng::uniform(&mut r) * (-(i as f64) / 40.0).exp())
        .collect()
}

fn model(cfg: RemnetConfig, seed: u64) -> Remnet {
    Remnet::build(cfg, &mut rng::seeded(seed)).unwrap()
}

fn calibrated(cfg: RemnetConfig, seed: u64) -> (Remnet, QuantizedModel) {
    let m = model(cfg, seed);
    let calib: Vec<Vec<f64>> = (0..64)
        .map(|i| random_input(cfg.input_len, 1000 + i))
        .collect();
    let q = calibrate_ptq(&m, &calib).unwrap();
    (m, q)
}

#[test]
fn structure_counts() {
    let cfg = RemnetConfig::default();
    let (_, q) = calibrated(cfg, 1);
    assert_eq!(q.activations.len(), 32);
    assert_eq!(q.weights.len(), 17);
    assert_eq!(q.requantizers.len(), 1 + 11 * 3);
    assert_eq!(q.gate_luts.len(), 3);
    let n: usize = q.weights.iter().map(|w| w.data.len()).sum::<usize>()
        + q.biases.iter().map(|b| b.data.len()).sum::<usize>();
    assert_eq!(n, 6151);
    for w in &q.weights {
        assert!(w.data.iter().all(|&v| v >= -127));
        assert!(
            w.data.iter().any(|&v| v.abs() == 127),
            "max |w| maps to 127"
        );
    }
}

#[test]
fn gate_tables_are_monotone() {
    let (_, q) = calibrated(RemnetConfig::default(), 2);
    for lut in &q.gate_luts {
        assert!(lut.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn engine_matches_simulator_exactly() {
    for (seed, cfg) in [
        (3, RemnetConfig::default()),
        (4, RemnetConfig::default().with_input_len(157)),
    ] {
        let (_, q) = calibrated(cfg, seed);
        let engine = Int8Engine::new(&q).unwrap();
        let mut r = rng::seeded(seed + 50);
        for i in 0..500u64 {
            // half realistic windows, half arbitrary int8 vectors
            let input: Vec<i8> = if i % 2 == 0 {
                q.quantize_input(&random_input(cfg.input_len, 9000 + i))
            } else {
                (0..cfg.input_len)
                    .map(|_| (rng::uniform(&mut r) * 256.0 - 128.0).floor() as i8)
                    .collect()
            };
            let acc = engine.forward_acc(&input).unwrap();
            assert_eq!(
                acc as i64,
                simulate_forward(&q, &input).unwrap(),
                "input {i}"
            );
        }
    }
}

#[test]
fn int8_tracks_float() {
    let cfg = RemnetConfig::default();
    let (m, q) = calibrated(cfg, 5);
    let engine = Int8Engine::new(&q).unwrap();
    let mut unused = rng::seeded(0);
    let mut diff = 0.0;
    let mut spread = 0.0;
    for i in 0..64 {
        let x = random_input(cfg.input_len, 1000 + i);
        let f = m
            .forward(&x, crate::model::Mode::Infer, &mut unused)
            .unwrap();
        let y = engine.forward(&q.quantize_input(&x)).unwrap();
        diff += (f - y).abs();
        spread += f.abs();
    }
    assert!(
        diff < 0.1 * spread,
        "int8 error {diff} vs output magnitude {spread}"
    );
}

#[test]
fn dequantized_weights_within_half_step() {
    let (m, q) = calibrated(RemnetConfig::default(), 6);
    let d = q.dequantized_weights().unwrap();
    for (i, (a, b)) in m.weights().iter().zip(d.weights().iter()).enumerate() {
        let step = if i % 2 == 0 {
            q.weights[i / 2].params.scale
        } else {
            q.biases[i / 2].params.scale
        };
        for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
            assert!((x - y).abs() <= step / 2.0 + 1e-12);
        }
    }
}

#[test]
fn file_round_trip_and_size() {
    let cfg = RemnetConfig::default();
    let (m, q) = calibrated(cfg, 7);
    let bytes = encode_qmodel(&q);
    let back = decode_qmodel(&bytes, "mem").unwrap();
    assert_eq!(back, q);
    let float_len = encode_checkpoint(&m).len();
    assert!(
        bytes.len() * 100 <= float_len * 35,
        "{} vs {}",
        bytes.len(),
        float_len
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.remq");
    save_qmodel(&q, &path).unwrap();
    assert_eq!(load_qmodel(&path).unwrap(), q);
}

#[test]
fn file_corruption_is_reported() {
    let (_, q) = calibrated(RemnetConfig::default().with_input_len(32), 8);
    let bytes = encode_qmodel(&q);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_qmodel(&bad, "x"), Err(Error::BadMagic(_))));
    let mut bad = bytes.clone();
    bad[4] = 9;
    assert!(matches!(
        decode_qmodel(&bad, "x"),
        Err(Error::Version { .. })
    ));
    assert!(matches!(
        decode_qmodel(&bytes[..bytes.len() - 1], "x"),
        Err(Error::Truncated(_))
    ));
    let mut long = bytes.clone();
    long.push(0);
    assert!(decode_qmodel(&long, "x").is_err());
}

#[test]
fn calibration_rejects_bad_input() {
    let m = model(RemnetConfig::default().with_input_len(32), 9);
    assert!(calibrate_ptq(&m, &[]).is_err());
    assert!(calibrate_ptq(&m, &[vec![0.0; 31]]).is_err());
}

#[test]
fn zero_input_is_exact_zero_point() {
    let (_, q) = calibrated(RemnetConfig::default(), 10);
    let z = q.quantize_input(&vec![0.0; 128]);
    assert!(z.iter().all(|&v| v as i32 == q.input_params().zero_point));
}

fn toy_set(cfg: &RemnetConfig, n: usize) -> Vec<Example> {
    (0..n as u64)
        .map(|i| {
            let x = random_input(cfg.input_len, 500 + i);
            let t = 0.3 * x[3] - 0.2 * x[10];
            Example::new(x, t)
        })
        .collect()
}

#[test]
fn qat_without_fake_quant_equals_float_training() {
    let cfg = RemnetConfig::default().with_input_len(32);
    let data = toy_set(&cfg, 40);
    let plan = TrainPlan {
        epochs: 3,
        batch_size: 8,
        shuffle_seed: 11,
        ..TrainPlan::default()
    };
    let mut float = model(cfg, 12);
    let h1 = fit(&mut float, &data, &plan, &mut |_, _| {}).unwrap();
    let opts = QatOptions {
        fake_quant: false,
        ..QatOptions::default()
    };
    let (qat, _, h2) = train_qat(model(cfg, 12), &data, &plan, opts, &mut |_, _| {}).unwrap();
    assert_eq!(
        h1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        h2.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(qat.model, float);
    assert!(qat.ranges.iter().all(|r| r.is_some()));
}

#[test]
fn qat_fake_quant_changes_forward_and_exports() {
    let cfg = RemnetConfig::default().with_input_len(32);
    let data = toy_set(&cfg, 24);
    let plan = TrainPlan {
        epochs: 2,
        batch_size: 8,
        shuffle_seed: 3,
        ..TrainPlan::default()
    };
    let (qat, q, h) = train_qat(
        model(cfg, 13),
        &data,
        &plan,
        QatOptions::default(),
        &mut |_, _| {},
    )
    .unwrap();
    assert!(h.iter().all(|v| v.is_finite()));
    // fake-quant graph and int8 model agree to within a few output steps
    let engine = Int8Engine::new(&q).unwrap();
    for ex in &data {
        let fq = qat.predict_fake_quant(&ex.input).unwrap();
        let y = engine.forward(&q.quantize_input(&ex.input)).unwrap();
        assert!((fq - y).abs() < 0.05, "{fq} vs {y}");
    }
}
