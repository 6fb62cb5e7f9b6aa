//! Finite-difference checks of the loss and of a tiny end-to-end network.

mod common;

use common::oracles::{loss_gradcheck, tiny_config, tiny_network_gradcheck};
use ecg_siglip::encoders::{
    load_checkpoint, save_checkpoint, CheckpointMeta, ContrastiveModel, LoadedModel, ModelConfig, ModelSpec,
    SignalEncoderConfig, TextEncoderConfig,
};
use ecg_siglip::labels::{render_training_text, FindingLabel, LabelSet};
use ecg_siglip::nn::{normal_array, Act, ResNet1d, ResNetConfig};
use ndarray::{Array2, Ix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn loss_gradients_match_central_differences() {
    let worst = loss_gradcheck(20, 3);
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn tiny_network_gradients_match_central_differences() {
    let r = tiny_network_gradcheck(9);
    assert!(r.tensors > 20);
    assert!(r.worst_tensor <= 1e-4, "{}: {:e}", r.worst_tensor_name, r.worst_tensor);
    assert!(r.worst_input < 1e-4, "input: {:e}", r.worst_input);
}

#[test]
fn trunk_stage_lengths_for_full_crop() {
    let cfg = ResNetConfig {
        in_channels: 12,
        channels: [4, 4, 4, 4],
        blocks_per_stage: 1,
    };
    assert_eq!(cfg.stage_lengths(4096), [2048, 1024, 512, 256, 128]);
    let mut net = ResNet1d::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let x = Act::new(Array2::zeros((12, 4096)), 1, 4096);
    let (feats, trace) = net.forward_traced(&x, false).unwrap();
    // Stem, max-pool, then one entry per block; stage 1 keeps its length.
    assert_eq!(trace, vec![2048, 1024, 1024, 512, 256, 128]);
    assert_eq!(feats.dim(), (1, 4));
}

#[test]
fn encoder_accepts_any_length_above_minimum() {
    let cfg = ModelConfig {
        signal: SignalEncoderConfig {
            channels: [4, 4, 8, 8],
            blocks_per_stage: 1,
            ..SignalEncoderConfig::default()
        },
        text: TextEncoderConfig::default(),
        embed_dim: 128,
    };
    let mut model = ContrastiveModel::<f32>::new(cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for len in [4000, 4096, 5000, 64] {
        let s: Array2<f32> = normal_array(Ix2(12, len), 1.0, &mut rng);
        let z = model.embed_signals(&[s.view(), s.view()], false).unwrap();
        assert_eq!(z.dim(), (2, 128));
        assert!(z.iter().all(|v| v.is_finite()));
        assert_eq!(z.row(0), z.row(1));
    }
    let short: Array2<f32> = Array2::zeros((12, 63));
    assert!(model.embed_signals(&[short.view()], false).is_err());
    let wrong: Array2<f32> = Array2::zeros((11, 4096));
    assert!(model.embed_signals(&[wrong.view()], false).is_err());
}

#[test]
fn zero_projection_gives_zero_rows_and_a_norm_error() {
    let mut model = ContrastiveModel::<f64>::new(tiny_config(), 0).unwrap();
    model.signal.projection.weight.value.fill(0.0);
    let s = Array2::<f64>::zeros((12, 64));
    let z = model.embed_signals(&[s.view()], false).unwrap();
    assert!(z.iter().all(|&v| v == 0.0));
    let texts = vec![render_training_text(LabelSet::single(FindingLabel::NORMAL)).unwrap()];
    assert!(matches!(
        model.pair(&[s.view()], &texts, false),
        Err(ecg_siglip::Error::ZeroNorm(0))
    ));
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut cfg = tiny_config();
    cfg.embed_dim = 128;
    let mut model = ContrastiveModel::<f32>::new(cfg.clone(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s: Array2<f32> = normal_array(Ix2(12, 256), 1.0, &mut rng);
    // Move batch-norm running statistics off their initial values.
    model.embed_signals(&[s.view(), s.view()], true).unwrap();
    let meta = CheckpointMeta {
        step: 7,
        epoch: 2,
        eval_crop_len: Some(4096),
        ..Default::default()
    };
    save_checkpoint(&path, &ModelSpec::Contrastive(cfg), &meta, &mut model).unwrap();
    let (loaded, meta2) = load_checkpoint(&path).unwrap();
    assert_eq!(meta2, meta);
    let LoadedModel::Contrastive(mut loaded) = loaded else {
        panic!("wrong model kind")
    };
    let p1 = model.prompt_embeddings().unwrap();
    let p2 = loaded.prompt_embeddings().unwrap();
    assert_eq!(model.score(&[s.view()], &p1).unwrap(), loaded.score(&[s.view()], &p2).unwrap());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.push(0);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
    bytes.truncate(bytes.len() - 5);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}
