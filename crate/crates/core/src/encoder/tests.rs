use super::*;
use crate::diffcore::finite_difference_check;

fn tiny_config() -> EncoderConfig {
    let arch = EncoderArch {
        blocks: [BlockConfig::new(4, 3, 2), BlockConfig::new(4, 2, 2), BlockConfig::new(6, 2, 1)],
        repr_dim: 8,
    };
    EncoderConfig::new(1, 16, arch).unwrap()
}

fn pseudo(n: usize, salt: f64) -> Vec<f32> {
    (0..n).map(|i| ((i as f64 * 0.731 + salt).sin() * 1.7) as f32).collect()
}

#[test]
fn default_arch_fits_length_128() {
    let config = EncoderConfig::new(1, 128, EncoderArch::default()).unwrap();
    assert_eq!(config.block_lengths().unwrap(), [60, 28, 13]);
}

#[test]
fn rejects_too_short_input() {
    let err = EncoderConfig::new(1, 8, EncoderArch::default()).unwrap_err();
    assert!(matches!(err, EncoderError::InvalidConfig(_)));
}

#[test]
fn init_is_deterministic_per_seed() {
    let config = tiny_config();
    let a = EncoderParams::init(&config, 1).unwrap();
    let b = EncoderParams::init(&config, 1).unwrap();
    let c = EncoderParams::init(&config, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn init_respects_fan_in_bound() {
    // block 0: 20 channels x kernel 5 = fan-in 100
    let arch = EncoderArch {
        blocks: [BlockConfig::new(8, 5, 2), BlockConfig::new(8, 3, 2), BlockConfig::new(8, 3, 2)],
        repr_dim: 4,
    };
    let config = EncoderConfig::new(20, 64, arch).unwrap();
    let params = EncoderParams::init(&config, 9).unwrap();
    for t in &params.tensors[..2] {
        assert!(t.data.iter().all(|v| v.abs() <= 0.1), "{}", t.name);
        assert!(t.data.iter().any(|v| v.abs() > 0.05));
    }
}

#[test]
fn zero_input_with_zero_biases_encodes_to_zero() {
    let config = tiny_config();
    let mut params = EncoderParams::init(&config, 3).unwrap();
    for t in params.tensors.iter_mut().filter(|t| t.name.ends_with("bias")) {
        t.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let r = params.encode(&[0.0; 16], 1).unwrap();
    assert_eq!(r, vec![0.0; 8]);
}

#[test]
fn identical_rows_encode_identically() {
    let config = tiny_config();
    let params = EncoderParams::init(&config, 3).unwrap();
    let row = pseudo(16, 0.2);
    let batch = [row.clone(), row].concat();
    let r = params.encode(&batch, 2).unwrap();
    assert_eq!(r[..8], r[8..]);
}

#[test]
fn default_encoder_output_shape() {
    let config = EncoderConfig::new(1, 128, EncoderArch::default()).unwrap();
    let params = EncoderParams::init(&config, 3).unwrap();
    let mut tape: Tape<f32> = Tape::new();
    let leaves = params.bind(&mut tape).unwrap();
    let x = tape.leaf(&[4, 1, 128], pseudo(512, 0.0)).unwrap();
    let r = params.forward(&mut tape, &leaves, x).unwrap();
    assert_eq!(tape.shape(r), &[4, 128]);
    assert!(params.encode(&pseudo(100, 0.0), 1).is_err());
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let config = tiny_config();
    let params = EncoderParams::init(&config, 11).unwrap();
    let batch = pseudo(2 * 16, 0.4);
    let probe = pseudo(2 * 8, 1.3);
    for target in 0..params.tensors.len() {
        let shape = params.tensors[target].shape.clone();
        let x: Vec<f64> = params.tensors[target].data.iter().map(|&v| f64::from(v)).collect();
        let err = finite_difference_check(
            |tape, theta| {
                let mut leaves = params.bind(tape).map_err(|e| match e {
                    EncoderError::Diff(d) => d,
                    other => panic!("{other}"),
                })?;
                leaves[target] = theta;
                let input = tape.leaf_f32(&[2, 1, 16], &batch)?;
                let r = params.forward(tape, &leaves, input).expect("forward");
                let w = tape.leaf_f32(&[2, 8], &probe)?;
                let weighted = tape.mul(r, w)?;
                tape.sum(weighted)
            },
            &shape,
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{}: {err}", params.tensors[target].name);
    }
}

#[test]
fn classify_examples() {
    let mut clf = LinearClassifierParams::zeros(3, 3).unwrap();
    for i in 0..3 {
        clf.weight_mut()[i * 3 + i] = 1.0;
    }
    let logits = clf.classify(&[0.0, 1.0, 0.0], 1).unwrap();
    let argmax = logits.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(argmax, 1);

    clf.bias_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
    let logits = clf.classify(&[0.0; 9], 3).unwrap();
    assert_eq!(logits.len(), 9);
    assert_eq!(&logits[3..6], &[0.5, -1.0, 2.0]);
    assert!(clf.classify(&[0.0; 4], 1).is_err());
}

#[test]
fn classify_is_linear_without_bias() {
    let mut clf = LinearClassifierParams::init(5, 3, 4).unwrap();
    clf.bias_mut().iter_mut().for_each(|b| *b = 0.0);
    let r1 = pseudo(5, 0.1);
    let r2 = pseudo(5, 2.9);
    let (a, b) = (0.7f32, -1.3f32);
    let mixed: Vec<f32> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
    let lhs = clf.classify(&mixed, 1).unwrap();
    let l1 = clf.classify(&r1, 1).unwrap();
    let l2 = clf.classify(&r2, 1).unwrap();
    for i in 0..3 {
        assert!((lhs[i] - (a * l1[i] + b * l2[i])).abs() < 1e-6);
    }
}

fn single(data: Vec<f32>) -> Vec<ParamTensor> {
    vec![ParamTensor { name: "w".into(), shape: vec![data.len()], data }]
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut params = single(vec![0.5, -1.0]);
    let mut state = AdamState::new(AdamConfig::default(), &params);
    state.first_moment[0] = vec![0.2, -0.2];
    state.second_moment[0] = vec![0.04, 0.04];
    let before = params.clone();
    let mut zero_state = AdamState::new(AdamConfig::default(), &params);
    zero_state.step(&mut params, &[vec![0.0, 0.0]]).unwrap();
    assert_eq!(params, before);
    assert_eq!(zero_state.step, 1);

    // existing moments decay toward zero
    let mut scratch = before.clone();
    state.step(&mut scratch, &[vec![0.0, 0.0]]).unwrap();
    assert!(state.first_moment[0][0].abs() < 0.2);
    assert!(state.second_moment[0][0] < 0.04);
}

#[test]
fn adam_constant_gradient_update_approaches_learning_rate() {
    // oracle: the bias-corrected recurrence iterated in f64
    let (lr, b1, b2, eps, g) = (1e-3f64, 0.9f64, 0.999f64, 1e-8f64, 0.37f64);
    let (mut m, mut v) = (0.0f64, 0.0f64);
    let mut oracle_steps = Vec::new();
    for t in 1..=200 {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let step = lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        oracle_steps.push(step);
    }
    assert!((oracle_steps[199] - lr).abs() / lr < 1e-6);

    let mut params = single(vec![0.0]);
    let mut state = AdamState::new(AdamConfig::with_learning_rate(lr), &params);
    let mut prev = 0.0f32;
    for (t, expected) in oracle_steps.iter().enumerate() {
        state.step(&mut params, &[vec![g as f32]]).unwrap();
        let delta = f64::from(prev - params[0].data[0]);
        assert!((delta - expected).abs() < 1e-6, "step {t}: {delta} vs {expected}");
        prev = params[0].data[0];
    }
}

#[test]
fn adam_is_deterministic_and_lr_zero_is_identity() {
    let grads = vec![vec![0.3, -0.1, 2.0]];
    let mut a = single(vec![1.0, 2.0, 3.0]);
    let mut b = a.clone();
    let mut sa = AdamState::new(AdamConfig::default(), &a);
    let mut sb = sa.clone();
    sa.step(&mut a, &grads).unwrap();
    sb.step(&mut b, &grads).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);

    let mut c = single(vec![1.0, 2.0, 3.0]);
    let mut sc = AdamState::new(AdamConfig::with_learning_rate(0.0), &c);
    for _ in 0..5 {
        sc.step(&mut c, &grads).unwrap();
    }
    assert_eq!(c, single(vec![1.0, 2.0, 3.0]));
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut params = single(vec![1.0, 2.0]);
    let mut state = AdamState::new(AdamConfig::default(), &params);
    let err = state.step(&mut params, &[vec![f32::NAN, 0.0]]).unwrap_err();
    assert!(matches!(err, EncoderError::NonFiniteGradient(ref n) if n == "w"));
    assert_eq!(params, single(vec![1.0, 2.0]));
    assert_eq!(state.step, 0);
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let config = tiny_config();
    let params = EncoderParams::init(&config, 5).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &params.tensors).unwrap();
    assert_eq!(&buf[..8], CHECKPOINT_MAGIC);
    let back = EncoderParams::from_tensors(&config, read_checkpoint(&buf[..]).unwrap()).unwrap();
    assert_eq!(back, params);

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_checkpoint(&bad[..]), Err(EncoderError::Checkpoint(_))));
    assert!(matches!(read_checkpoint(&buf[..buf.len() - 3]), Err(EncoderError::Checkpoint(_))));

    let other = EncoderConfig::new(1, 16, EncoderArch { repr_dim: 4, ..tiny_config().arch }).unwrap();
    assert!(EncoderParams::from_tensors(&other, params.tensors.clone()).is_err());
}
