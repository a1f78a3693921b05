use super::*;
use crate::fixtures;
use crate::gradcheck::relative_error as rel_err;

fn tiny_config(vocab: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab,
        d_model: 8,
        heads: 2,
        layers: 2,
        d_ff: 12,
        max_len: 8,
        init_std: 0.5,
        seed: 3,
    }
}

#[test]
fn gradient_matches_central_differences_per_block() {
    let model = EncoderModel::new(tiny_config(7)).unwrap();
    let (seqs, labels) = fixtures::gradcheck_sequences(7);
    let batch = Batch::new(&seqs, &labels).unwrap();
    let (_, grad) = model.loss_and_grad(&batch).unwrap();
    let h = 1e-4;
    for block in &model.layout().blocks {
        let mut worst = 0.0f64;
        for (i, &g) in grad.iter().enumerate().skip(block.offset).take(block.len) {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let num = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * h);
            worst = worst.max(rel_err(g, num));
        }
        assert!(worst < 1e-4, "{}: max relative error {worst:e}", block.name);
    }
}

#[test]
fn chunked_gradient_equals_single_pass() {
    let model = EncoderModel::new(tiny_config(30)).unwrap();
    let (docs, labels) = fixtures::overfit_suite();
    let vocab = TokenVocab::build(&docs, 1);
    let seqs: Vec<_> = docs
        .iter()
        .map(|d| vocab.encode(d, 8).into_iter().map(|t| t % 30).collect())
        .collect();
    let batch = Batch::new(&seqs, &labels).unwrap();
    let (l1, g1) = model.loss_and_grad(&batch).unwrap();
    let (l2, g2) = model::loss_and_grad(&model.config, &model.layout, &model.params, &batch);
    assert!((l1 - l2).abs() < 1e-12);
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn parameter_count_matches_hand_count() {
    // V=1000, d=64, L=128, ff=128, 2 layers:
    // embeddings 64000 + 8192; per layer LN 256, QKVO 16640, FFN 16576;
    // head 130.
    let c = EncoderConfig {
        vocab_size: 1000,
        ..EncoderConfig::default()
    };
    let per_layer = 256 + 4 * (64 * 64 + 64) + (64 * 128 + 128) + (128 * 64 + 64);
    let hand = 64_000 + 8192 + 2 * per_layer + 130;
    assert_eq!(per_layer, 33_472);
    assert_eq!(parameter_count(&c), hand);
    assert_eq!(EncoderModel::new(c).unwrap().parameter_count(), hand);
}

#[test]
fn attention_rows_normalized_and_pads_get_zero() {
    let model = EncoderModel::new(tiny_config(7)).unwrap();
    let batch = Batch::new(&[vec![2, 3, 4, 5], vec![6, 2]], &[Label::Fake, Label::Real]).unwrap();
    let out = encode_forward(&model, &batch).unwrap();
    for layer in 0..2 {
        for head in 0..2 {
            for b in 0..2 {
                for i in 0..4 {
                    let row = out.attention_row(layer, head, b, i);
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    for (j, &w) in row.iter().enumerate() {
                        if batch.padding(b)[j] {
                            assert_eq!(w, 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn identical_sequences_identical_logits_and_padding_is_inert() {
    let model = EncoderModel::new(tiny_config(7)).unwrap();
    let batch = Batch::new(&[vec![2, 3, 4], vec![2, 3, 4]], &[Label::Fake, Label::Real]).unwrap();
    let out = encode_forward(&model, &batch).unwrap();
    assert_eq!(out.logits[0], out.logits[1]);
    let padded = Batch::new(&[vec![2, 3, 4], vec![1, 1, 1, 1, 1, 1]], &[Label::Fake, Label::Real]).unwrap();
    assert_eq!(encode_forward(&model, &padded).unwrap().logits[0], out.logits[0]);
}

#[test]
fn zero_parameters_return_head_bias() {
    let mut model = EncoderModel::new(tiny_config(7)).unwrap();
    model.params_mut().iter_mut().for_each(|v| *v = 0.0);
    model.block_mut("head.bias").unwrap().copy_from_slice(&[0.3, -1.1]);
    let batch = Batch::new(&[vec![4]], &[Label::Fake]).unwrap();
    assert_eq!(encode_forward(&model, &batch).unwrap().logits[0], [0.3, -1.1]);
}

#[test]
fn permutation_invariant_without_positions() {
    let mut model = EncoderModel::new(tiny_config(9)).unwrap();
    model
        .block_mut("position_embedding")
        .unwrap()
        .iter_mut()
        .for_each(|v| *v = 0.0);
    let seq = vec![2, 5, 7, 3, 8, 4];
    let perm = vec![8, 3, 2, 4, 7, 5];
    let batch = Batch::new(&[seq, perm], &[Label::Fake, Label::Fake]).unwrap();
    let out = encode_forward(&model, &batch).unwrap();
    for k in 0..2 {
        assert!((out.logits[0][k] - out.logits[1][k]).abs() < 1e-6);
    }
}

#[test]
fn initial_loss_near_ln2() {
    let (docs, labels) = fixtures::overfit_suite();
    let vocab = TokenVocab::build(&docs, 2);
    let model = EncoderModel::new(EncoderConfig {
        vocab_size: vocab.len(),
        ..EncoderConfig::default()
    })
    .unwrap();
    let seqs: Vec<_> = docs.iter().map(|d| vocab.encode(d, 128)).collect();
    let loss = model.loss(&Batch::new(&seqs, &labels).unwrap()).unwrap();
    assert!((loss - 2f64.ln()).abs() < 0.1, "initial loss {loss}");
}

fn overfit_setup(lr: f64) -> (EncoderModel, Batch, AdamParams) {
    let (docs, labels) = fixtures::overfit_suite();
    let vocab = TokenVocab::build(&docs, 2);
    let model = EncoderModel::new(EncoderConfig {
        vocab_size: vocab.len(),
        ..EncoderConfig::default()
    })
    .unwrap();
    let seqs: Vec<_> = docs.iter().map(|d| vocab.encode(d, 128)).collect();
    let batch = Batch::new(&seqs, &labels).unwrap();
    (
        model,
        batch,
        AdamParams {
            lr,
            ..AdamParams::default()
        },
    )
}

fn train_accuracy(model: &EncoderModel, batch: &Batch) -> f64 {
    let out = encode_forward(model, batch).unwrap();
    let hits = out
        .logits
        .iter()
        .zip(batch.labels())
        .filter(|(z, l)| Label::from_score(z[0] - z[1]) == **l)
        .count();
    hits as f64 / batch.size() as f64
}

#[test]
fn overfits_thirty_two_posts() {
    let (mut model, batch, adam) = overfit_setup(1e-3);
    let mut state = AdamState::new(model.parameter_count());
    let mut reached = None;
    for step in 0..300 {
        train_step(&mut model, &batch, &mut state, &adam).unwrap();
        if train_accuracy(&model, &batch) >= 0.99 {
            reached = Some(step + 1);
            break;
        }
    }
    assert!(reached.is_some(), "accuracy {}", train_accuracy(&model, &batch));
}

#[test]
fn small_lr_loss_monotone_first_twenty_steps() {
    let (mut model, batch, adam) = overfit_setup(1e-4);
    let mut state = AdamState::new(model.parameter_count());
    let mut losses = Vec::new();
    for _ in 0..21 {
        losses.push(train_step(&mut model, &batch, &mut state, &adam).unwrap());
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn training_is_deterministic() {
    let (docs, labels) = fixtures::overfit_suite();
    let cfg = EncoderConfig {
        d_model: 16,
        d_ff: 32,
        ..EncoderConfig::default()
    };
    let params = EncoderTrainParams {
        epochs: 2,
        batch_size: 8,
        ..EncoderTrainParams::default()
    };
    let (a, va, la) = train_encoder(&cfg, &docs, &labels, &params).unwrap();
    let (b, vb, lb) = train_encoder(&cfg, &docs, &labels, &params).unwrap();
    assert_eq!(a, b);
    assert_eq!(va, vb);
    assert_eq!(la, lb);
    assert_eq!(encoder_predict(&a, &docs, &va), encoder_predict(&b, &docs, &vb));
}

#[test]
fn oov_tokens_behave_as_unk_and_empty_post_is_valid() {
    let (docs, labels) = fixtures::overfit_suite();
    let cfg = EncoderConfig {
        d_model: 16,
        d_ff: 32,
        ..EncoderConfig::default()
    };
    let params = EncoderTrainParams {
        epochs: 1,
        ..EncoderTrainParams::default()
    };
    let (model, vocab, _) = train_encoder(&cfg, &docs, &labels, &params).unwrap();
    let seq = |ts: &[&str]| TokenSequence {
        tokens: ts.iter().map(|s| s.to_string()).collect(),
        pipeline: crate::corpus::Pipeline::Raw,
    };
    let oov = seq(&["zzz", "qqq", "xxyy"]);
    let unk = seq(&[TokenVocab::UNK_TOKEN; 3]);
    let empty = seq(&[]);
    let out = encoder_predict(&model, &[oov, unk, empty.clone()], &vocab);
    assert_eq!(out[0], out[1]);
    assert!(out[2].1.iter().all(|v| v.is_finite()));
    assert_eq!(vocab.encode(&empty, 128), vec![UNK]);
    assert_eq!(
        encoder_predict(&model, std::slice::from_ref(&empty), &vocab),
        encoder_predict(&model, &[empty], &vocab)
    );
}

#[test]
fn truncates_long_posts() {
    let vocab = TokenVocab::from_tokens(vec!["a".into()]).unwrap();
    let doc = TokenSequence {
        tokens: vec!["a".to_string(); 200],
        pipeline: crate::corpus::Pipeline::Raw,
    };
    assert_eq!(vocab.encode(&doc, 128).len(), 128);
    let model = EncoderModel::new(EncoderConfig {
        vocab_size: 3,
        d_model: 8,
        heads: 2,
        d_ff: 8,
        ..EncoderConfig::default()
    })
    .unwrap();
    assert_eq!(encoder_predict(&model, &[doc], &vocab).len(), 1);
}

#[test]
fn rejects_bad_config_and_batches() {
    assert!(EncoderModel::new(EncoderConfig {
        heads: 3,
        ..EncoderConfig::default()
    })
    .is_err());
    let model = EncoderModel::new(tiny_config(5)).unwrap();
    let too_long = Batch::new(&[vec![2; 9]], &[Label::Fake]).unwrap();
    assert!(encode_forward(&model, &too_long).is_err());
    let bad_token = Batch::new(&[vec![5]], &[Label::Fake]).unwrap();
    assert!(encode_forward(&model, &bad_token).is_err());
    assert!(Batch::new(&[vec![]], &[Label::Fake]).is_err());
}
