use lcsc::arch::{network_forward, NetworkConfig, NetworkParams};
use lcsc::data::{extract_patches, synthetic_image};
use lcsc::tensor::Tensor;
use lcsc::train::{
    adam_step, decode_checkpoint, encode_checkpoint, l1_loss, load_checkpoint, loss_and_grads, multi_supervised_loss,
    param_tensors, param_tensors_mut, save_checkpoint, train, AdamHyper, AdamState, Checkpoint, TrainData,
    TrainOptions, TrainSchedule,
};
use lcsc::{CheckpointError, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn adam_matches_scalar_recurrence() {
    let hyper = AdamHyper {
        lr: 0.01,
        ..AdamHyper::default()
    };
    let mut r = rng(1);
    let mut p = Tensor::<f64>::random_uniform([1, 1, 2, 3], -1.0, 1.0, &mut r);
    let mut expect: Vec<f64> = p.data().to_vec();
    let mut m = [0.0; 6];
    let mut v = [0.0; 6];
    let mut state = AdamState::new([&p], hyper);
    for t in 1..=20 {
        let g = Tensor::<f64>::random_uniform([1, 1, 2, 3], -2.0, 2.0, &mut r);
        adam_step(&mut [&mut p], &[&g], &mut state).unwrap();
        for i in 0..6 {
            let gi = g.data()[i];
            m[i] = 0.9 * m[i] + 0.1 * gi;
            v[i] = 0.999 * v[i] + 0.001 * gi * gi;
            let mh = m[i] / (1.0 - 0.9f64.powi(t));
            let vh = v[i] / (1.0 - 0.999f64.powi(t));
            expect[i] -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
    }
    for (a, b) in p.data().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(state.step, 20);
}

#[test]
fn adam_first_step_moves_by_lr() {
    let hyper = AdamHyper {
        lr: 0.05,
        ..AdamHyper::default()
    };
    let mut p = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![0.0, 1.0, -1.0]).unwrap();
    let g = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![3.0, -0.2, 0.0]).unwrap();
    let mut state = AdamState::new([&p], hyper);
    adam_step(&mut [&mut p], &[&g], &mut state).unwrap();
    let moved = |g: f64| 0.05 * g.abs() / (g.abs() + 1e-8);
    assert!((p.data()[0] + moved(3.0)).abs() < 1e-12);
    assert!((p.data()[1] - 1.0 - moved(0.2)).abs() < 1e-12);
    assert_eq!(p.data()[2], -1.0);

    let bad = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![f64::NAN, 0.0, 0.0]).unwrap();
    let before = p.clone();
    assert!(adam_step(&mut [&mut p], &[&bad], &mut state).is_err());
    assert_eq!(p, before);
}

#[test]
fn l1_matches_mean_absolute_difference() {
    let mut r = rng(2);
    let a = Tensor::<f64>::random_uniform([2, 1, 3, 4], -1.0, 1.0, &mut r);
    let b = Tensor::<f64>::random_uniform([2, 1, 3, 4], -1.0, 1.0, &mut r);
    let expect: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / 24.0;
    assert!((l1_loss(&a, &b).unwrap() - expect).abs() < 1e-15);
}

#[test]
fn multi_loss_by_hand() {
    let t = Tensor::<f64>::from_vec([1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
    let fin = Tensor::from_vec([1, 1, 1, 2], vec![0.5, 1.0]).unwrap();
    let y1 = Tensor::from_vec([1, 1, 1, 2], vec![1.0, 0.0]).unwrap();
    let y2 = Tensor::from_vec([1, 1, 1, 2], vec![0.0, 3.0]).unwrap();
    // 0.25 + 0.5 * (1 + 1)
    let got = multi_supervised_loss(&fin, &[y1.clone(), y2.clone()], &t, 0.5).unwrap();
    assert!((got - 1.25).abs() < 1e-15);
    let swapped = multi_supervised_loss(&fin, &[y2, y1.clone()], &t, 0.5).unwrap();
    assert_eq!(got, swapped);
    assert_eq!(multi_supervised_loss(&fin, &[y1], &t, 0.0).unwrap(), l1_loss(&fin, &t).unwrap());
}

fn two_block_setup() -> (NetworkConfig, NetworkParams<f64>, Tensor<f64>, Tensor<f64>) {
    let cfg = NetworkConfig::uniform(2, 1, 4, 0.5, 2);
    let params = NetworkParams::<f64>::init(&cfg, 3).unwrap();
    let mut r = rng(4);
    let x = Tensor::random_uniform([1, 1, 4, 4], -1.0, 1.0, &mut r);
    let t = Tensor::random_uniform([1, 1, 8, 8], -1.0, 1.0, &mut r);
    (cfg, params, x, t)
}

#[test]
fn loss_value_supervises_every_block_output() {
    let (cfg, params, x, t) = two_block_setup();
    let out = network_forward(&params, &cfg, &x).unwrap();
    assert_eq!(out.intermediates.len(), 2);
    let expect = multi_supervised_loss(&out.output, &out.intermediates, &t, 0.7).unwrap();
    let got = loss_and_grads(&params, &cfg, &x, &t, 0.7).unwrap().loss;
    assert!((got - expect).abs() < 1e-12);
    let plain = loss_and_grads(&params, &cfg, &x, &t, 0.0).unwrap().loss;
    assert!((plain - l1_loss(&out.output, &t).unwrap()).abs() < 1e-12);
}

#[test]
fn intermediate_terms_add_linear_gradient() {
    let (cfg, params, x, t) = two_block_setup();
    let grads = |beta: f64| -> Vec<f64> {
        let g = loss_and_grads(&params, &cfg, &x, &t, beta).unwrap().grads;
        param_tensors(&g).into_iter().flat_map(|(_, t)| t.data().to_vec()).collect()
    };
    let (g0, g1, g2) = (grads(0.0), grads(1.0), grads(2.0));
    let extra: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
    assert!(extra.iter().any(|v| v.abs() > 1e-8));
    for ((a, b), e) in g2.iter().zip(&g0).zip(&extra) {
        assert!((a - b - 2.0 * e).abs() < 1e-9);
    }
    // the first block's kernels receive signal from the Y_1 term
    let first_block: Vec<usize> = param_tensors(&params)
        .iter()
        .scan(0usize, |off, (name, t)| {
            let start = *off;
            *off += t.len();
            Some((name.starts_with("block0"), start..*off))
        })
        .filter(|(b, _)| *b)
        .flat_map(|(_, r)| r)
        .collect();
    assert!(first_block.iter().any(|&i| extra[i].abs() > 1e-8));
}

#[test]
fn single_sample_overfits() {
    let cfg = NetworkConfig::uniform(1, 2, 16, 0.5, 2);
    let mut params = NetworkParams::<f32>::init(&cfg, 9).unwrap();
    let mut r = rng(10);
    let x = Tensor::<f32>::random_uniform([1, 1, 6, 6], -1.0, 1.0, &mut r);
    let t = Tensor::<f32>::random_uniform([1, 1, 12, 12], -0.2, 0.2, &mut r);
    let hyper = AdamHyper {
        lr: 1e-3,
        ..AdamHyper::default()
    };
    let mut state = AdamState::new(param_tensors(&params).into_iter().map(|(_, t)| t), hyper);
    let mut losses = Vec::new();
    for _ in 0..500 {
        let lg = loss_and_grads(&params, &cfg, &x, &t, 0.0).unwrap();
        losses.push(lg.loss as f64);
        let grads: Vec<_> = param_tensors(&lg.grads).into_iter().map(|(_, g)| g.clone()).collect();
        let refs: Vec<_> = grads.iter().collect();
        adam_step(&mut param_tensors_mut(&mut params), &refs, &mut state).unwrap();
    }
    let windows: Vec<f64> = losses.chunks(100).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0], "window means {windows:?}");
    }
    let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best < 1e-2, "best loss {best}, windows {windows:?}");
}

fn random_checkpoint(seed: u64) -> Checkpoint {
    let mut cfg = NetworkConfig::uniform(2, 1, 4, 0.25, 3);
    cfg.enhanced = true;
    cfg.fusion = true;
    let mut params = NetworkParams::<f32>::init(&cfg, seed).unwrap();
    let mut r = rng(seed);
    for k in params.kernels_mut() {
        k.bias = Tensor::random_uniform(k.bias.shape(), -1.0, 1.0, &mut r);
    }
    let mut ckpt = Checkpoint::new(cfg, seed, params, AdamHyper::default());
    ckpt.epoch = r.gen_range(0..100);
    ckpt.optimizer.step = r.gen_range(0..10_000);
    for m in &mut ckpt.optimizer.m {
        *m = Tensor::random_uniform(m.shape(), -1.0, 1.0, &mut r);
    }
    ckpt
}

#[test]
fn checkpoint_bytes_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = random_checkpoint(5);
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    save_checkpoint(&ckpt, &a).unwrap();
    save_checkpoint(&load_checkpoint(&a).unwrap(), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_checkpoint(&b).unwrap(), ckpt);
    assert!(std::fs::read(&a).unwrap().starts_with(b"LCSCNET-CKPT v1 "));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let bytes = encode_checkpoint(&random_checkpoint(6)).unwrap();
    let truncated = &bytes[..bytes.len() - 4];
    assert!(matches!(
        decode_checkpoint(truncated),
        Err(Error::Checkpoint(CheckpointError::DigestMismatch { .. }))
    ));
    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 0x40;
    assert!(matches!(
        decode_checkpoint(&flipped),
        Err(Error::Checkpoint(CheckpointError::DigestMismatch { .. }))
    ));
    let mut future = bytes.clone();
    future[14] = b'9';
    assert!(matches!(
        decode_checkpoint(&future),
        Err(Error::Checkpoint(CheckpointError::VersionMismatch { .. }))
    ));
    assert!(decode_checkpoint(b"not a checkpoint").is_err());
}

#[test]
fn schedule_decays_in_steps() {
    let s = TrainSchedule::default();
    assert_eq!(s.lr_at_epoch(15), 1e-4);
    assert!((s.lr_at_epoch(16) - 1e-5).abs() < 1e-18);
    let custom = TrainSchedule {
        initial_lr: 0.1,
        decay_every: 3,
        decay_factor: 0.5,
        ..TrainSchedule::default()
    };
    for e in 1..20 {
        assert!((custom.lr_at_epoch(e) - 0.1 * 0.5f64.powi(((e - 1) / 3) as i32)).abs() < 1e-15);
    }
}

#[test]
fn short_run_logs_every_epoch() {
    let cfg = NetworkConfig::uniform(1, 1, 4, 0.5, 2);
    let img = synthetic_image(2, 16, 16);
    let pairs = extract_patches(&img, 2, 4, 4, true).unwrap();
    let schedule = TrainSchedule {
        total_epochs: 3,
        batch_size: 2,
        initial_lr: 1e-3,
        ..TrainSchedule::default()
    };
    let data = TrainData {
        pairs,
        val: vec![synthetic_image(3, 16, 16)],
    };
    let dir = tempfile::tempdir().unwrap();
    let mut opts = TrainOptions::new(1);
    opts.out_dir = Some(dir.path().to_path_buf());
    let out = train(&cfg, &schedule, &data, &opts).unwrap();
    assert_eq!(out.log.len(), 3);
    assert_eq!(out.last.epoch, 3);
    assert_eq!(out.log[2].steps, 6);
    assert!(out.best.is_some());
    let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    for name in ["final.ckpt", "best.ckpt"] {
        assert!(dir.path().join(name).exists());
    }
    assert_eq!(load_checkpoint(&dir.path().join("final.ckpt")).unwrap(), out.last);

    let zero = TrainSchedule {
        total_epochs: 0,
        ..schedule
    };
    let init = train(&cfg, &zero, &data, &TrainOptions::new(1)).unwrap();
    assert_eq!(init.last.params, NetworkParams::init(&cfg, 1).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_round_trip_is_exact(seed in any::<u64>()) {
        let ckpt = random_checkpoint(seed);
        let bytes = encode_checkpoint(&ckpt).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(&back, &ckpt);
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point(seed in any::<u64>(), steps in 1..5usize) {
        let mut r = rng(seed);
        let mut p = Tensor::<f64>::random_uniform([1, 2, 2, 2], -1.0, 1.0, &mut r);
        let before = p.clone();
        let g = Tensor::zeros(p.shape());
        let mut state = AdamState::new([&p], AdamHyper::default());
        for _ in 0..steps {
            adam_step(&mut [&mut p], &[&g], &mut state).unwrap();
        }
        prop_assert_eq!(p, before);
    }
}
