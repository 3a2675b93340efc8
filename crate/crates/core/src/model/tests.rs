use super::*;
use crate::patches::PatchSample;

fn conv(kernel: usize, stride: usize, channels: usize) -> Layer {
    Layer::Conv {
        kernel,
        stride,
        channels,
    }
}

pub(crate) fn tiny_archs() -> Vec<Architecture> {
    vec![
        Architecture {
            input_size: 8,
            layers: vec![
                conv(3, 1, 2),
                Layer::Relu,
                conv(3, 1, 3),
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense { units: 2 },
            ],
        },
        Architecture {
            input_size: 10,
            layers: vec![
                conv(3, 1, 3),
                Layer::Relu,
                Layer::MaxPool2,
                conv(2, 1, 4),
                Layer::Relu,
                Layer::Flatten,
                Layer::Dense { units: 5 },
                Layer::Relu,
                Layer::Dense { units: 2 },
            ],
        },
        Architecture {
            input_size: 9,
            layers: vec![
                conv(3, 2, 2),
                Layer::Relu,
                conv(2, 1, 3),
                Layer::Flatten,
                Layer::Dense { units: 2 },
            ],
        },
    ]
}

fn random_input(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Straight-line reference evaluation: direct nested loops over each layer.
fn reference_forward(model: &Model<f64>, input: &[f64]) -> [f64; 2] {
    let plan = model.plan();
    let p = model.params();
    let mut x = input.to_vec();
    for (i, layer) in model.arch().layers.iter().enumerate() {
        let (si, so) = (plan.shapes[i], plan.shapes[i + 1]);
        x = match *layer {
            Layer::Conv { kernel, stride, .. } => {
                let slot = plan.slots[i].as_ref().unwrap();
                let mut y = vec![0.0; so.len()];
                for co in 0..so.c {
                    for oy in 0..so.h {
                        for ox in 0..so.w {
                            let mut acc = p[slot.bias_offset + co];
                            for ci in 0..si.c {
                                for ky in 0..kernel {
                                    for kx in 0..kernel {
                                        let wi = ((co * si.c + ci) * kernel + ky) * kernel + kx;
                                        let xi = (ci * si.h + oy * stride + ky) * si.w + ox * stride + kx;
                                        acc += p[slot.weight_offset + wi] * x[xi];
                                    }
                                }
                            }
                            y[(co * so.h + oy) * so.w + ox] = acc;
                        }
                    }
                }
                y
            }
            Layer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            Layer::MaxPool2 => {
                let mut y = vec![0.0; so.len()];
                for c in 0..so.c {
                    for oy in 0..so.h {
                        for ox in 0..so.w {
                            let at = |dy: usize, dx: usize| x[(c * si.h + 2 * oy + dy) * si.w + 2 * ox + dx];
                            y[(c * so.h + oy) * so.w + ox] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
                        }
                    }
                }
                y
            }
            Layer::Flatten => x,
            Layer::Dense { units } => {
                let slot = plan.slots[i].as_ref().unwrap();
                (0..units)
                    .map(|o| {
                        p[slot.bias_offset + o]
                            + (0..x.len())
                                .map(|j| p[slot.weight_offset + o * x.len() + j] * x[j])
                                .sum::<f64>()
                    })
                    .collect()
            }
        };
    }
    [x[0], x[1]]
}

#[test]
fn forward_matches_reference() {
    for (k, arch) in tiny_archs().iter().enumerate() {
        let mut model = init_model::<f64>(arch, 11 + k as u64).unwrap();
        // non-zero biases so they are exercised too
        let plan = model.plan().clone();
        for slot in plan.slots.iter().flatten() {
            for (j, b) in model.params_mut()[slot.bias_offset..slot.bias_offset + slot.bias_len]
                .iter_mut()
                .enumerate()
            {
                *b = 0.05 * (j as f64 + 1.0);
            }
        }
        let input = random_input(model.input_len(), 99 + k as u64);
        let fast = model.forward(&input).unwrap();
        let slow = reference_forward(&model, &input);
        for c in 0..2 {
            assert!((fast[c] - slow[c]).abs() < 1e-6, "arch {k}: {fast:?} vs {slow:?}");
        }
    }
}

#[test]
fn default_model_output_shape_and_determinism() {
    let arch = Architecture::default_for(64);
    let a = init_model::<f32>(&arch, 5).unwrap();
    let b = init_model::<f32>(&arch, 5).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(a.params().len(), arch.param_count().unwrap());
    assert!(a.adam().m.iter().all(|&v| v == 0.0) && a.adam().step == 0);
    let patch: Vec<f32> = (0..64 * 64).map(|i| ((i % 13) as f32 - 6.0) / 6.0).collect();
    let out = a.forward(&patch).unwrap();
    assert!(out.iter().all(|v| v.is_finite()));
    assert_eq!(out, a.forward(&patch).unwrap());
    let c = init_model::<f32>(&arch, 6).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn zero_weights_give_zero_output() {
    let mut model = init_model::<f32>(&Architecture::default_for(24), 1).unwrap();
    model.params_mut().fill(0.0);
    assert_eq!(model.forward(&vec![0.0; 576]).unwrap(), [0.0, 0.0]);
}

#[test]
fn shape_mismatch_errors() {
    let model = init_model::<f32>(&Architecture::default_for(24), 1).unwrap();
    assert!(matches!(model.forward(&[0.0; 10]), Err(ModelError::ShapeMismatch(_))));
    assert!(matches!(model.backward(&[0.0; 10], [0.0, 0.0]), Err(ModelError::ShapeMismatch(_))));
}

#[test]
fn loss_examples() {
    assert_eq!(loss_mse([1.5f64, -2.0], [1.5, -2.0]), 0.0);
    assert_eq!(loss_mse([1.0f64, 0.0], [0.0, 0.0]), 0.5);
    assert_eq!(loss_mse([3.0f64, 4.0], [0.0, 0.0]), 12.5);
}

/// Central finite differences of the single-sample loss, one parameter at a time.
pub(crate) fn finite_difference(model: &Model<f64>, input: &[f64], target: [f64; 2], step: f64) -> Vec<f64> {
    let mut probe = model.clone();
    (0..model.params().len())
        .map(|i| {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + step;
            let up = loss_mse(probe.forward(input).unwrap(), target);
            probe.params_mut()[i] = orig - step;
            let down = loss_mse(probe.forward(input).unwrap(), target);
            probe.params_mut()[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub(crate) fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-7))
        .fold(0.0, f64::max)
}

#[test]
fn gradients_match_finite_differences() {
    for (k, arch) in tiny_archs().iter().enumerate() {
        let model = init_model::<f64>(arch, 100 + k as u64).unwrap();
        let input = random_input(model.input_len(), 7 + k as u64);
        let target = [0.3, -0.7];
        let analytic = model.backward(&input, target).unwrap();
        let numeric = finite_difference(&model, &input, target, 1e-5);
        let err = max_relative_error(&analytic.0, &numeric);
        assert!(err <= 1e-4, "arch {k}: max relative error {err}");
    }
}

#[test]
fn zero_final_layer_blocks_earlier_gradients() {
    let arch = &tiny_archs()[1];
    let mut model = init_model::<f64>(arch, 3).unwrap();
    let last = model.plan().slots.iter().flatten().last().unwrap().clone();
    model.params_mut()[last.weight_offset..last.weight_offset + last.weight_len()].fill(0.0);
    let input = random_input(model.input_len(), 4);
    let g = model.backward(&input, [1.0, 1.0]).unwrap();
    assert!(g.0[..last.weight_offset].iter().all(|&v| v == 0.0));
    // the final bias still receives the output error
    assert!(g.0[last.bias_offset] != 0.0);
    assert_eq!(g, model.backward(&input, [1.0, 1.0]).unwrap());
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut model = init_model::<f64>(&tiny_archs()[0], 1).unwrap();
    let before = model.params().to_vec();
    let zeros = Gradients(vec![0.0; before.len()]);
    model.adam_step(&zeros, &AdamConfig::default()).unwrap();
    assert_eq!(model.params(), &before[..]);
    assert_eq!(model.adam().step, 1);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut model = init_model::<f64>(&tiny_archs()[0], 1).unwrap();
    let before = model.params().to_vec();
    let hp = AdamConfig {
        lr: 1e-2,
        ..Default::default()
    };
    for g in [0.37, -2.5] {
        let mut m = model.clone();
        m.adam_step(&Gradients(vec![g; before.len()]), &hp).unwrap();
        for (a, b) in m.params().iter().zip(&before) {
            let moved = b - a;
            assert!((moved - hp.lr * g.signum()).abs() < 1e-6, "{moved}");
        }
    }
    let grads = Gradients(vec![0.1; before.len()]);
    let mut a = model.clone();
    a.adam_step(&grads, &hp).unwrap();
    model.adam_step(&grads, &hp).unwrap();
    assert_eq!(a, model);
    assert!(matches!(
        model.adam_step(&Gradients(vec![0.0; 3]), &hp),
        Err(ModelError::ShapeMismatch(_))
    ));
}

fn toy_dataset(n: usize, patch: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let pixels: Vec<f32> = (0..patch * patch).map(|_| rng.gen_range(0.0..1.0)).collect();
            // target depends on the patch so the data are learnable
            let left: f32 = pixels.iter().take(patch * patch / 2).sum();
            let right: f32 = pixels.iter().skip(patch * patch / 2).sum();
            let dir = (left - right).signum();
            PatchSample {
                pixels,
                target: [2.0, dir],
            }
        })
        .collect();
    Dataset {
        patch_size: patch,
        h: 2.0,
        samples,
    }
}

#[test]
fn overfits_a_single_sample() {
    let ds = toy_dataset(1, 24, 1);
    let mut model = init_model::<f32>(&Architecture::default_for(24), 2).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch: 1,
        adam: AdamConfig {
            lr: 1e-2,
            ..Default::default()
        },
        seed: 0,
    };
    train(&mut model, &ds, &cfg).unwrap();
    let loss = evaluate_loss(&model, &ds).unwrap();
    assert!(loss < 1e-3, "loss {loss}");
}

#[test]
fn zero_epochs_leave_model_untouched() {
    let ds = toy_dataset(4, 24, 1);
    let mut model = init_model::<f32>(&Architecture::default_for(24), 2).unwrap();
    let before = model.clone();
    let cfg = TrainConfig {
        epochs: 0,
        ..Default::default()
    };
    assert!(train(&mut model, &ds, &cfg).unwrap().is_empty());
    assert_eq!(model, before);
}

#[test]
fn training_is_deterministic_and_descends() {
    let ds = toy_dataset(96, 24, 9);
    let cfg = TrainConfig {
        epochs: 6,
        batch: 16,
        seed: 4,
        ..Default::default()
    };
    let mut a = init_model::<f32>(&Architecture::default_for(24), 2).unwrap();
    let mut b = a.clone();
    let ha = train(&mut a, &ds, &cfg).unwrap();
    let hb = train(&mut b, &ds, &cfg).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a, b);
    assert!(ha.last().unwrap() < &ha[0], "{ha:?}");
}

#[test]
fn empty_dataset_rejected() {
    let mut model = init_model::<f32>(&Architecture::default_for(24), 2).unwrap();
    let ds = Dataset {
        patch_size: 24,
        h: 2.0,
        samples: vec![],
    };
    assert!(matches!(
        train(&mut model, &ds, &TrainConfig::default()),
        Err(ModelError::EmptyDataset)
    ));
}

#[test]
fn checkpoint_round_trip_and_errors() {
    let ds = toy_dataset(8, 24, 3);
    let mut model = init_model::<f32>(&Architecture::default_for(24), 8).unwrap();
    train(
        &mut model,
        &ds,
        &TrainConfig {
            epochs: 2,
            batch: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&model, &mut bytes).unwrap();
    assert!(bytes.starts_with(b"DPMCKPT1\n"));
    let back = read_checkpoint(&bytes[..]).unwrap();
    assert_eq!(back, model);
    let patch = standardize(&ds.samples[0].pixels);
    assert_eq!(back.forward(&patch).unwrap(), model.forward(&patch).unwrap());

    assert!(matches!(
        read_checkpoint(&bytes[..bytes.len() - 5]),
        Err(ModelError::TruncatedFile)
    ));
    let mut longer = bytes.clone();
    longer.extend_from_slice(&[0; 4]);
    assert!(matches!(read_checkpoint(&longer[..]), Err(ModelError::ShapeMismatch(_))));
    let text = String::from_utf8_lossy(&bytes[9..]).into_owned();
    let header_end = text.find('\n').unwrap();
    let header = &text[..header_end];
    let count = model.params().len();
    let tampered = header.replace(
        &format!("\"param_count\":{count}"),
        &format!("\"param_count\":{}", count + 1),
    );
    assert_ne!(tampered, header);
    let mut bad = b"DPMCKPT1\n".to_vec();
    bad.extend_from_slice(tampered.as_bytes());
    bad.extend_from_slice(&bytes[9 + header_end..]);
    assert!(matches!(read_checkpoint(&bad[..]), Err(ModelError::ShapeMismatch(_))));
    assert!(matches!(read_checkpoint(&b"NOTACKPT\n{}"[..]), Err(ModelError::BadMagic)));
}
