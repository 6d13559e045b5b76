use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::grad_check;
use crate::data::Item;
use crate::loss::{domain_loss_on_tape, listwise_loss_on_tape, loss_and_gradients};

fn config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        n_domains: 2,
        feature_dim: 5,
        trunk_hidden: vec![8, 6],
        token_dim: 4,
        transformer_layers: 1,
        heads: 2,
        ffn_dim: 6,
        final_hidden: vec![5],
        classifier_hidden: vec![3],
        ..ModelConfig::default()
    }
}

fn random_session(rng: &mut ChaCha8Rng, len: usize, dim: usize, domain: usize) -> QuerySession {
    let items = (0..len)
        .map(|i| {
            let f = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            Item::new(f, if i == len / 2 { 1.0 } else { 0.0 })
        })
        .collect();
    QuerySession {
        query_id: format!("r{len}"),
        domain,
        timestamp: 0,
        items,
    }
}

/// Closed-form parameter count of an MLP over `widths`.
fn mlp(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Closed-form parameter count, independent of the layer code.
fn expected_count(c: &ModelConfig, deployed: bool) -> usize {
    let h = *c.trunk_hidden.last().unwrap();
    let d = c.token_dim;
    let mut trunk = vec![c.feature_dim];
    trunk.extend(&c.trunk_hidden);
    let block = 4 * (d * d + d) + 4 * d + (d * c.ffn_dim + c.ffn_dim) + (c.ffn_dim * d + d);
    let mut head = vec![1 + d];
    head.extend(&c.final_hidden);
    head.push(1);
    let mut cls = vec![h];
    cls.extend(&c.classifier_hidden);
    cls.push(c.n_domains);
    let heads = if c.variant == Variant::MultiHead {
        c.n_domains
    } else {
        1
    };
    let classifier = if c.variant.has_classifier() && !deployed {
        mlp(&cls)
    } else {
        0
    };
    mlp(&trunk) + (h + 1) + ((h + 1) * d + d) + c.transformer_layers * block + heads * mlp(&head) + classifier
}

#[test]
fn build_is_deterministic() {
    let a = Model::build(config(Variant::Dds), 42).unwrap();
    let b = Model::build(config(Variant::Dds), 42).unwrap();
    assert_eq!(a.save(), b.save());
    let c = Model::build(config(Variant::Dds), 43).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn parameter_counts_match_closed_form() {
    for variant in [Variant::Baseline, Variant::MultiHead, Variant::Dda, Variant::Dds] {
        for n in [2, 3, 5] {
            let c = ModelConfig {
                n_domains: n,
                ..config(variant)
            };
            let m = Model::build(c.clone(), 1).unwrap();
            for deployed in [false, true] {
                assert_eq!(
                    m.count_parameters(deployed),
                    expected_count(&c, deployed),
                    "{variant:?} n={n}"
                );
            }
            assert!(m.count_parameters(false) >= m.count_parameters(true));
        }
    }
}

#[test]
fn parameter_scaling_relations() {
    let base = Model::build(config(Variant::Baseline), 0).unwrap();
    let head = mlp(&[5, 5, 1]);
    let dda = Model::build(config(Variant::Dda), 0).unwrap();
    let dds = Model::build(config(Variant::Dds), 0).unwrap();
    assert_eq!(dda.count_parameters(false), dds.count_parameters(false));
    assert_eq!(dds.count_parameters(true), base.count_parameters(true));
    for k in [2, 3, 5] {
        let mh = Model::build(
            ModelConfig {
                n_domains: k,
                ..config(Variant::MultiHead)
            },
            0,
        )
        .unwrap();
        assert_eq!(mh.count_parameters(true) - base.count_parameters(true), (k - 1) * head);
        assert_eq!(mh.count_parameters(false), mh.count_parameters(true));
        let dds_k = Model::build(
            ModelConfig {
                n_domains: k,
                ..config(Variant::Dds)
            },
            0,
        )
        .unwrap();
        assert_eq!(dds_k.count_parameters(true), base.count_parameters(true));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ModelConfig {
            n_domains: 1,
            ..config(Variant::MultiHead)
        },
        ModelConfig {
            trunk_hidden: vec![4, 0],
            ..config(Variant::Baseline)
        },
        ModelConfig {
            trunk_hidden: vec![],
            ..config(Variant::Baseline)
        },
        ModelConfig {
            token_dim: 5,
            heads: 2,
            ..config(Variant::Baseline)
        },
        ModelConfig {
            grl_lambda: -1.0,
            ..config(Variant::Dda)
        },
        ModelConfig {
            domain_loss_weight: f64::NAN,
            ..config(Variant::Dds)
        },
    ];
    for c in bad {
        assert!(matches!(Model::build(c.clone(), 0), Err(Error::Config(_))), "{c:?}");
    }
}

#[test]
fn forward_errors() {
    let m = Model::build(config(Variant::Baseline), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let wrong = random_session(&mut rng, 3, 4, 0);
    assert!(matches!(m.forward(&wrong), Err(Error::Data(_))));
    let empty = QuerySession {
        items: vec![],
        ..random_session(&mut rng, 1, 5, 0)
    };
    assert!(m.forward(&empty).is_err());
    let mh = Model::build(config(Variant::MultiHead), 0).unwrap();
    let far = random_session(&mut rng, 3, 5, 2);
    assert!(matches!(mh.forward(&far), Err(Error::DomainOutOfRange { .. })));
}

#[test]
fn single_item_session_is_finite_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_session(&mut rng, 1, 5, 0);
    for v in [Variant::Baseline, Variant::MultiHead, Variant::Dda, Variant::Dds] {
        let m = Model::build(config(v), 3).unwrap();
        let a = m.forward(&s).unwrap();
        let b = m.forward(&s).unwrap();
        assert_eq!(a, b);
        assert!(a.final_scores[0].is_finite() && a.pointwise_scores[0].is_finite());
        assert_eq!(a.domain_logits.is_some(), v.has_classifier());
    }
}

#[test]
fn multihead_gating_ignores_other_heads() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = Model::build(config(Variant::MultiHead), 5).unwrap();
    let s0 = random_session(&mut rng, 6, 5, 0);
    let before = m.forward(&s0).unwrap();

    let mut perturbed = m.clone();
    for p in perturbed.params_mut() {
        if p.group == ParamGroup::Head(1) {
            for v in p.value.data_mut() {
                *v += rng.random_range(-3.0..3.0);
            }
        }
    }
    let after = perturbed.forward(&s0).unwrap();
    assert_eq!(before.final_scores, after.final_scores);

    // the gated score equals head 0 evaluated on its own
    let mut tape = Tape::new();
    let p = m.bind(&mut tape, false);
    let x = tape.constant(s0.feature_matrix().unwrap());
    let out = m.forward_on_tape(&mut tape, &p, x, None, 0).unwrap();
    let head_input = {
        let pw = out.pointwise;
        let tokens_var = {
            // recompute the spine up to the transformer output
            let joined = tape.concat_cols(out.trunk, pw).unwrap();
            let mut t = m.layout.token.forward(&mut tape, &p, joined).unwrap();
            for b in &m.layout.blocks {
                t = b.forward(&mut tape, &p, t, None).unwrap();
            }
            t
        };
        tape.concat_cols(pw, tokens_var).unwrap()
    };
    let h0 = m.layout.heads[0].forward(&mut tape, &p, head_input).unwrap();
    assert_eq!(tape.value(h0).data(), before.final_scores.as_slice());

    // and domain 1 sessions do react to head 1
    let s1 = QuerySession { domain: 1, ..s0 };
    assert_ne!(
        m.forward(&s1).unwrap().final_scores,
        perturbed.forward(&s1).unwrap().final_scores
    );
}

#[test]
fn multihead_single_domain_batch_leaves_other_heads_untouched() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = Model::build(config(Variant::MultiHead), 7).unwrap();
    let batch: Vec<_> = (0..4).map(|i| random_session(&mut rng, 3 + i, 5, 0)).collect();
    let (_, grads) = loss_and_gradients(&m, &batch).unwrap().unwrap();
    let mut head0_nonzero = false;
    for (p, g) in m.params().iter().zip(&grads) {
        match p.group {
            ParamGroup::Head(1) => assert!(g.iter().all(|&v| v == 0.0), "{}", p.name),
            ParamGroup::Head(0) => head0_nonzero |= g.iter().any(|&v| v != 0.0),
            _ => {}
        }
    }
    assert!(head0_nonzero);
}

#[test]
fn dda_and_dds_share_forward_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dda = Model::build(config(Variant::Dda), 9).unwrap();
    let dds = Model::build(config(Variant::Dds), 9).unwrap();
    assert_eq!(dda.params(), dds.params());
    for len in [1, 4, 9] {
        let s = random_session(&mut rng, len, 5, 1);
        assert_eq!(dda.forward(&s).unwrap(), dds.forward(&s).unwrap());
        assert_eq!(
            crate::loss::combined_loss(&dda, &s).unwrap(),
            crate::loss::combined_loss(&dds, &s).unwrap()
        );
    }
}

/// Gradients of the listwise loss and of the domain loss separately.
fn split_gradients(m: &Model, s: &QuerySession) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let grads = |use_domain: bool| {
        let mut tape = Tape::new();
        let p = m.bind(&mut tape, true);
        let x = tape.constant(s.feature_matrix().unwrap());
        let out = m.forward_on_tape(&mut tape, &p, x, None, s.domain).unwrap();
        let loss = if use_domain {
            domain_loss_on_tape(&mut tape, out.domain_logits.unwrap(), s.domain).unwrap()
        } else {
            listwise_loss_on_tape(&mut tape, out.final_scores, &s.labels())
                .unwrap()
                .unwrap()
        };
        tape.backward(loss).unwrap();
        p.iter()
            .zip(m.params())
            .map(|(&v, q)| tape.grad(v).map_or(vec![0.0; q.value.len()], <[f64]>::to_vec))
            .collect::<Vec<_>>()
    };
    (grads(false), grads(true))
}

#[test]
fn gradient_reversal_flips_trunk_gradients_of_domain_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dda = Model::build(config(Variant::Dda), 11).unwrap();
    let dds = Model::build(config(Variant::Dds), 11).unwrap();
    let s = random_session(&mut rng, 7, 5, 1);
    let (rank_a, dom_a) = split_gradients(&dda, &s);
    let (rank_s, dom_s) = split_gradients(&dds, &s);
    let mut trunk_checked = 0;
    for (i, p) in dda.params().iter().enumerate() {
        assert_eq!(rank_a[i], rank_s[i], "ranking gradient differs for {}", p.name);
        if p.name.starts_with("trunk") {
            for (a, b) in dom_a[i].iter().zip(&dom_s[i]) {
                assert!((a + b).abs() <= 1e-12, "{}: {a} vs {b}", p.name);
            }
            assert!(dom_s[i].iter().any(|&v| v != 0.0));
            trunk_checked += 1;
        }
        if p.group == ParamGroup::Classifier {
            assert_eq!(dom_a[i], dom_s[i], "classifier gradients are not reversed");
        }
    }
    assert_eq!(trunk_checked, 4);
}

#[test]
fn combined_gradients_differ_by_twice_the_weighted_domain_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w = 0.7;
    let cfg = |v| ModelConfig {
        domain_loss_weight: w,
        ..config(v)
    };
    let dda = Model::build(cfg(Variant::Dda), 13).unwrap();
    let dds = Model::build(cfg(Variant::Dds), 13).unwrap();
    let batch: Vec<_> = (0..3).map(|d| random_session(&mut rng, 5, 5, d % 2)).collect();
    let (_, ga) = loss_and_gradients(&dda, &batch).unwrap().unwrap();
    let (_, gs) = loss_and_gradients(&dds, &batch).unwrap().unwrap();
    // domain-only gradient of the batch, through the DDS twin
    let mut dom = vec![];
    for s in &batch {
        dom.push(split_gradients(&dds, s).1);
    }
    for (i, p) in dds.params().iter().enumerate() {
        if !p.name.starts_with("trunk") {
            continue;
        }
        for e in 0..p.value.len() {
            let mean_dom: f64 = dom.iter().map(|d| d[i][e]).sum::<f64>() / batch.len() as f64;
            assert!((gs[i][e] - ga[i][e] - 2.0 * w * mean_dom).abs() < 1e-9, "{}", p.name);
        }
    }
}

#[test]
fn zero_domain_weight_matches_baseline_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let base = Model::build(config(Variant::Baseline), 15).unwrap();
    let dds = Model::build(
        ModelConfig {
            domain_loss_weight: 0.0,
            ..config(Variant::Dds)
        },
        15,
    )
    .unwrap();
    let batch = vec![random_session(&mut rng, 6, 5, 0), random_session(&mut rng, 4, 5, 1)];
    let (lb, gb) = loss_and_gradients(&base, &batch).unwrap().unwrap();
    let (ld, gd) = loss_and_gradients(&dds, &batch).unwrap().unwrap();
    assert_eq!(lb.ranking_loss, ld.ranking_loss);
    assert_eq!(lb.total, ld.total);
    for (i, p) in base.params().iter().enumerate() {
        assert_eq!(p, &dds.params()[i]);
        assert_eq!(gb[i], gd[i], "{}", p.name);
    }
    let classifier_grads: f64 = dds
        .params()
        .iter()
        .zip(&gd)
        .filter(|(p, _)| p.group == ParamGroup::Classifier)
        .flat_map(|(_, g)| g.iter().map(|v| v.abs()))
        .sum();
    assert_eq!(classifier_grads, 0.0);
}

#[test]
fn scores_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for v in [Variant::Baseline, Variant::MultiHead, Variant::Dds] {
        let m = Model::build(config(v), 17).unwrap();
        let s = random_session(&mut rng, 7, 5, 1);
        let perm = [3usize, 0, 6, 2, 5, 1, 4];
        let permuted = QuerySession {
            items: perm.iter().map(|&i| s.items[i].clone()).collect(),
            ..s.clone()
        };
        let a = m.forward(&s).unwrap();
        let b = m.forward(&permuted).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert!((a.final_scores[i] - b.final_scores[j]).abs() < 1e-12);
            assert!((a.pointwise_scores[i] - b.pointwise_scores[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn padding_does_not_change_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let m = Model::build(
        ModelConfig {
            transformer_layers: 2,
            ..config(Variant::Dds)
        },
        19,
    )
    .unwrap();
    for len in [1, 3, 8] {
        let s = random_session(&mut rng, len, 5, 0);
        let alone = m.forward(&s).unwrap();
        let padded = m.forward_padded(&s, 12).unwrap();
        for (a, b) in alone.final_scores.iter().zip(&padded.final_scores) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(alone.pointwise_scores, padded.pointwise_scores);
    }
}

#[test]
fn save_load_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for v in [Variant::Baseline, Variant::MultiHead, Variant::Dda, Variant::Dds] {
        let m = Model::build(config(v), 21).unwrap();
        let bytes = m.save();
        assert_eq!(bytes, m.save());
        let back = Model::load(&bytes).unwrap();
        assert_eq!(back, m);
        let s = random_session(&mut rng, 5, 5, 1);
        assert_eq!(back.forward(&s).unwrap(), m.forward(&s).unwrap());
    }
}

#[test]
fn load_rejects_damaged_payloads() {
    let bytes = Model::build(config(Variant::Dda), 22).unwrap().save();
    for cut in [0, 4, 12, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(Model::load(&bytes[..cut]), Err(Error::Codec(_))),
            "cut at {cut}"
        );
    }
    let mut flipped = bytes.clone();
    flipped[40] ^= 0x10;
    assert!(matches!(Model::load(&flipped), Err(Error::Codec(_))));
    let mut version = bytes.clone();
    version[8] = 9;
    let err = Model::load(&version).unwrap_err();
    assert!(format!("{err}").contains("version"));
    let mut magic = bytes;
    magic[0] = b'X';
    assert!(Model::load(&magic).is_err());
}

fn linear_params(rng: &mut ChaCha8Rng, input: usize, output: usize) -> Vec<Tensor> {
    let mut rnd = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    vec![rnd(vec![input, output]), rnd(vec![1, output])]
}

#[test]
fn linear_layer_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let mut store = ParamStore::seeded(0);
        let layer = Linear::new(&mut store, "l", ParamGroup::Shared, 4, 3);
        let params = linear_params(&mut rng, 4, 3);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let err = grad_check(
            |t, p| {
                let xin = t.constant(Tensor::new(vec![2, 4], x.clone())?);
                let y = layer.forward(t, p, xin)?;
                let y = t.tanh(y);
                Ok(t.sum(y))
            },
            &params,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}

#[test]
fn full_baseline_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for (seed, activation) in [(25, Activation::Tanh), (26, Activation::Relu)] {
        let m = Model::build(
            ModelConfig {
                activation,
                ..config(Variant::Baseline)
            },
            seed,
        )
        .unwrap();
        let s = random_session(&mut rng, 4, 5, 0);
        let params: Vec<Tensor> = m.params().iter().map(|p| p.value.clone()).collect();
        let err = grad_check(
            |t, p| {
                let x = t.constant(s.feature_matrix()?);
                let out = m.forward_on_tape(t, p, x, None, 0)?;
                Ok(listwise_loss_on_tape(t, out.final_scores, &s.labels())?.unwrap())
            },
            &params,
        )
        .unwrap();
        assert!(err < 1e-4, "{activation:?}: {err}");
    }
}

#[test]
fn dda_refuses_finite_difference_check() {
    let m = Model::build(config(Variant::Dda), 27).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let s = random_session(&mut rng, 3, 5, 1);
    let params: Vec<Tensor> = m.params().iter().map(|p| p.value.clone()).collect();
    let res = grad_check(
        |t, p| {
            let x = t.constant(s.feature_matrix()?);
            let out = m.forward_on_tape(t, p, x, None, 1)?;
            domain_loss_on_tape(t, out.domain_logits.unwrap(), 1)
        },
        &params,
    );
    assert_eq!(res, Err(Error::GradientReversalPresent));
}

// --- attention -------------------------------------------------------------

struct AttentionFixture {
    layer: SelfAttention,
    params: Vec<Tensor>,
}

fn attention_fixture(seed: u64, dim: usize, heads: usize) -> AttentionFixture {
    let mut store = ParamStore::seeded(seed);
    let layer = SelfAttention::new(&mut store, "attn", ParamGroup::Shared, dim, heads);
    let params = store.params().iter().map(|p| p.value.clone()).collect();
    AttentionFixture { layer, params }
}

fn run_attention(f: &AttentionFixture, tokens: &Tensor, mask: Option<&[bool]>) -> crate::Result<Tensor> {
    let mut tape = Tape::new();
    let p: Vec<Var> = f.params.iter().map(|t| tape.constant(t.clone())).collect();
    let x = tape.constant(tokens.clone());
    let y = f.layer.forward(&mut tape, &p, x, mask)?;
    Ok(tape.value(y).clone())
}

/// Loop-based attention. Parameters come in the order q, k, v, o with
/// weight then bias for each.
fn oracle_attention(params: &[Tensor], x: &Tensor, heads: usize, mask: Option<&[bool]>) -> Vec<Vec<f64>> {
    let (l, d) = x.dims2().unwrap();
    let project = |w: &Tensor, b: &Tensor, rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                (0..d)
                    .map(|j| b.data()[j] + (0..d).map(|i| r[i] * w.get2(i, j)).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    let rows: Vec<Vec<f64>> = (0..l).map(|i| (0..d).map(|j| x.get2(i, j)).collect()).collect();
    let q = project(&params[0], &params[1], &rows);
    let k = project(&params[2], &params[3], &rows);
    let v = project(&params[4], &params[5], &rows);
    let hd = d / heads;
    let mut merged = vec![vec![0.0; d]; l];
    for h in 0..heads {
        for i in 0..l {
            let mut logits = vec![f64::NEG_INFINITY; l];
            for j in 0..l {
                if mask.is_some_and(|m| m[j]) {
                    continue;
                }
                let mut dot = 0.0;
                for c in h * hd..(h + 1) * hd {
                    dot += q[i][c] * k[j][c];
                }
                logits[j] = dot / (hd as f64).sqrt();
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits
                .iter()
                .map(|z| if z.is_finite() { (z - max).exp() } else { 0.0 })
                .collect();
            let total: f64 = exps.iter().sum();
            for c in h * hd..(h + 1) * hd {
                merged[i][c] = (0..l).map(|j| exps[j] / total * v[j][c]).sum();
            }
        }
    }
    project(&params[6], &params[7], &merged)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

#[test]
fn attention_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for (heads, seed) in [(1, 31), (2, 32), (4, 33)] {
        let f = attention_fixture(seed, 4, heads);
        let x = random_tensor(&mut rng, 3, 4);
        let got = run_attention(&f, &x, None).unwrap();
        let want = oracle_attention(&f.params, &x, heads, None);
        for i in 0..3 {
            for j in 0..4 {
                assert!((got.get2(i, j) - want[i][j]).abs() < 1e-12);
            }
        }
        let mask = [false, true, false];
        let got = run_attention(&f, &x, Some(&mask)).unwrap();
        let want = oracle_attention(&f.params, &x, heads, Some(&mask));
        for i in 0..3 {
            for j in 0..4 {
                assert!((got.get2(i, j) - want[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn attention_single_token_is_value_projection() {
    let f = attention_fixture(34, 4, 1);
    let x = Tensor::from_rows(&[[0.5, -1.0, 2.0, 0.25]]).unwrap();
    let got = run_attention(&f, &x, None).unwrap();
    // value then output projection of the single row
    let p = &f.params;
    let v: Vec<f64> = (0..4)
        .map(|j| p[5].data()[j] + (0..4).map(|i| x.get2(0, i) * p[4].get2(i, j)).sum::<f64>())
        .collect();
    for j in 0..4 {
        let o = p[7].data()[j] + (0..4).map(|i| v[i] * p[6].get2(i, j)).sum::<f64>();
        assert!((got.get2(0, j) - o).abs() < 1e-12);
    }
}

#[test]
fn attention_identical_tokens_give_identical_outputs() {
    let f = attention_fixture(35, 4, 2);
    let x = Tensor::from_rows(&[[0.1, 0.2, -0.3, 0.4], [0.1, 0.2, -0.3, 0.4]]).unwrap();
    let y = run_attention(&f, &x, None).unwrap();
    assert_eq!(&y.data()[..4], &y.data()[4..]);
}

#[test]
fn masked_attention_equals_attention_on_sublist() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let f = attention_fixture(37, 4, 2);
    for _ in 0..10 {
        let x = random_tensor(&mut rng, 6, 4);
        let mask: Vec<bool> = (0..6).map(|_| rng.random_bool(0.4)).collect();
        if mask.iter().all(|&m| m) {
            assert_eq!(run_attention(&f, &x, Some(&mask)), Err(Error::AllMasked));
            continue;
        }
        let keep: Vec<usize> = (0..6).filter(|&i| !mask[i]).collect();
        let sub_rows: Vec<Vec<f64>> = keep.iter().map(|&i| x.data()[i * 4..(i + 1) * 4].to_vec()).collect();
        let sub = Tensor::from_rows(&sub_rows).unwrap();
        let full = run_attention(&f, &x, Some(&mask)).unwrap();
        let alone = run_attention(&f, &sub, None).unwrap();
        for (r, &i) in keep.iter().enumerate() {
            for c in 0..4 {
                assert!((full.get2(i, c) - alone.get2(r, c)).abs() <= 1e-12);
            }
        }
    }
    let all = vec![true; 6];
    assert_eq!(
        run_attention(&f, &random_tensor(&mut rng, 6, 4), Some(&all)),
        Err(Error::AllMasked)
    );
}
