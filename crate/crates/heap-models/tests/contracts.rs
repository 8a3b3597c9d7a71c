//! Architecture contracts: the H1/C1 identity, level geometry, embedding
//! unit counts, exhaustive parameter-shape audit, shift equivariance, and
//! the interaction ablation's isolation guarantee.

use heap_models::{build_model, HierarchicalEmbedding, Mode, ModelConfig, Variant};
use heap_tensor::{no_grad, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn rand_input(rng: &mut ChaCha20Rng, b: usize, size: usize) -> Tensor<f32> {
    let n = b * 2 * size * size;
    Tensor::from_vec(&[b, 2, size, size], (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
}

fn desk_config(variant: &str, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(Variant::parse(variant).unwrap(), seed);
    cfg.input_size = 64;
    cfg
}

#[test]
fn h1_and_c1_are_byte_identical() {
    let h1 = build_model::<f32>(&ModelConfig::new(Variant::H(1), 11)).unwrap();
    let c1 = build_model::<f32>(&ModelConfig::new(Variant::C(1), 11)).unwrap();

    let hp = h1.params();
    let cp = c1.params();
    assert_eq!(hp.len(), cp.len());
    for (a, b) in hp.iter().zip(cp.iter()) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.tensor.shape(), b.tensor.shape());
        assert_eq!(a.tensor.to_vec(), b.tensor.to_vec(), "{} differs", a.name);
    }

    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let x = rand_input(&mut rng, 2, 128);
    no_grad(|| {
        let eh = h1.encoder.encode(&x, Mode::Eval).unwrap();
        let ec = c1.encoder.encode(&x, Mode::Eval).unwrap();
        assert_eq!(eh.levels.len(), ec.levels.len());
        for (a, b) in eh.levels.iter().zip(&ec.levels) {
            assert_eq!(a.to_vec(), b.to_vec());
        }
        let dh = h1.decoder.decode(&eh, Mode::Eval).unwrap();
        let dc = c1.decoder.decode(&ec, Mode::Eval).unwrap();
        assert_eq!(dh.to_vec(), dc.to_vec());
        let ph = h1.predictor.step(&eh).unwrap();
        let pc = c1.predictor.step(&ec).unwrap();
        for (a, b) in ph.levels.iter().zip(&pc.levels) {
            assert_eq!(a.to_vec(), b.to_vec());
        }
    });
}

#[test]
fn h5_level_extents_on_128() {
    let model = build_model::<f32>(&ModelConfig::new(Variant::H(5), 3)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let x = rand_input(&mut rng, 1, 128);
    let emb = no_grad(|| model.encoder.encode(&x, Mode::Eval).unwrap());
    let extents: Vec<usize> = emb.levels.iter().map(|t| t.shape()[2]).collect();
    assert_eq!(extents, vec![32, 16, 8, 4, 2]);
    for level in &emb.levels {
        assert_eq!(level.shape()[1], 8);
    }
}

#[test]
fn c_variants_match_embedding_contract() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let x = rand_input(&mut rng, 1, 128);
    for (variant, channels, size) in [("C1", 8usize, 32usize), ("C2", 32, 16), ("C3", 128, 8)] {
        let model =
            build_model::<f32>(&ModelConfig::new(Variant::parse(variant).unwrap(), 0)).unwrap();
        let emb = no_grad(|| model.encoder.encode(&x, Mode::Eval).unwrap());
        assert_eq!(emb.levels.len(), 1);
        assert_eq!(emb.levels[0].shape(), &[1, channels, size, size], "{variant}");
        assert_eq!(emb.units_per_sample(), 8192, "{variant}");
        let back = no_grad(|| model.decoder.decode(&emb, Mode::Eval).unwrap());
        assert_eq!(back.shape(), &[1, 2, 128, 128]);
    }
}

/// Closed-form shape table derived straight from the architecture geometry,
/// checked exhaustively against every constructed parameter.
#[test]
fn parameter_shape_audit() {
    for variant in ["H1", "H2", "H3", "H4", "H5", "C1", "C2", "C3"] {
        let cfg = ModelConfig::new(Variant::parse(variant).unwrap(), 0);
        let model = build_model::<f32>(&cfg).unwrap();
        let expected = expected_shapes(&cfg);
        let mut actual: Vec<(String, Vec<usize>)> = model
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape().to_vec()))
            .collect();
        actual.extend(model.buffers().iter().map(|(n, t)| (n.clone(), t.shape().to_vec())));
        actual.sort();
        let mut want = expected;
        want.sort();
        assert_eq!(actual, want, "{variant}: parameter shape table mismatch");
    }
}

fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let k = cfg.stages();
    let widths = cfg.down_widths;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let w_in = |stage: usize| if stage == 1 { 2 } else { widths[stage - 2] };
    let levels = cfg.level_specs();

    for stage in 1..=k {
        let (ci, co) = (w_in(stage), widths[stage - 1]);
        out.push((format!("enc.d{stage}.w"), vec![co, ci, 4, 4]));
        out.push((format!("enc.d{stage}.b"), vec![co]));
        out.push((format!("enc.d{stage}.bn.g"), vec![co]));
        out.push((format!("enc.d{stage}.bn.bt"), vec![co]));
        out.push((format!("enc.d{stage}.bn.rm"), vec![co]));
        out.push((format!("enc.d{stage}.bn.rv"), vec![co]));
    }
    for l in &levels {
        let co = widths[l.stage - 1];
        out.push((format!("enc.o{}.w", l.stage), vec![l.channels, co, 4, 4]));
        out.push((format!("enc.o{}.b", l.stage), vec![l.channels]));
        out.push((format!("dec.i{}.w", l.stage), vec![l.channels, co, 4, 4]));
        out.push((format!("dec.i{}.b", l.stage), vec![co]));
    }
    for stage in 1..=k {
        let (ci, co) = (widths[stage - 1], w_in(stage));
        out.push((format!("dec.u{stage}.w"), vec![ci, co, 4, 4]));
        out.push((format!("dec.u{stage}.b"), vec![co]));
        out.push((format!("dec.n{stage}.g"), vec![ci]));
        out.push((format!("dec.n{stage}.bt"), vec![ci]));
        out.push((format!("dec.n{stage}.rm"), vec![ci]));
        out.push((format!("dec.n{stage}.rv"), vec![ci]));
    }
    // Predictor.
    let lk = cfg.lateral_kernel;
    let ik = cfg.inter_kernel;
    for (i, l) in levels.iter().enumerate() {
        let wide = l.channels * cfg.expansion;
        out.push((format!("prd.x{}.w", l.stage), vec![wide, l.channels, lk, lk]));
        out.push((format!("prd.x{}.b", l.stage), vec![wide]));
        out.push((format!("prd.c{}.w", l.stage), vec![l.channels, wide, lk, lk]));
        out.push((format!("prd.c{}.b", l.stage), vec![l.channels]));
        for step in 1..=cfg.internal_steps {
            out.push((format!("prd.s{step}.lat{}.w", l.stage), vec![wide, wide, lk, lk]));
            out.push((format!("prd.s{step}.lat{}.b", l.stage), vec![wide]));
            if cfg.interaction && i > 0 {
                let finer = levels[i - 1].channels * cfg.expansion;
                out.push((format!("prd.s{step}.dn{}.w", l.stage), vec![wide, finer, ik, ik]));
                out.push((format!("prd.s{step}.dn{}.b", l.stage), vec![wide]));
            }
            if cfg.interaction && i + 1 < levels.len() {
                let coarser = levels[i + 1].channels * cfg.expansion;
                out.push((format!("prd.s{step}.up{}.w", l.stage), vec![coarser, wide, ik, ik]));
                out.push((format!("prd.s{step}.up{}.b", l.stage), vec![wide]));
            }
            out.push((format!("prd.s{step}.ln{}.g", l.stage), vec![wide, l.size, l.size]));
            out.push((format!("prd.s{step}.ln{}.bt", l.stage), vec![wide, l.size, l.size]));
        }
    }
    out
}

/// Rolling the input by the coarsest total stride rolls every level exactly.
#[test]
fn encode_is_shift_equivariant() {
    let cfg = desk_config("H2", 5);
    let model = build_model::<f32>(&cfg).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let size = cfg.input_size;
    let x = rand_input(&mut rng, 1, size);

    // Coarsest level stride: 2^(k+1).
    let stride = 1 << (cfg.stages() + 1);
    let shift = stride; // one pixel at the coarsest level
    let xv = x.to_vec();
    let mut rolled = vec![0.0f32; xv.len()];
    for c in 0..2 {
        for y in 0..size {
            for xx in 0..size {
                rolled[c * size * size + ((y + shift) % size) * size + ((xx + shift) % size)] =
                    xv[c * size * size + y * size + xx];
            }
        }
    }
    let xr = Tensor::from_vec(&[1, 2, size, size], rolled);

    no_grad(|| {
        let e = model.encoder.encode(&x, Mode::Eval).unwrap();
        let er = model.encoder.encode(&xr, Mode::Eval).unwrap();
        for (lvl, (a, b)) in e.levels.iter().zip(&er.levels).enumerate() {
            let s = a.shape()[2];
            let level_shift = shift >> (lvl + 1 + 1); // stage lvl+1 has stride 2^(lvl+2)
            let av = a.to_vec();
            let bv = b.to_vec();
            let ch = a.shape()[1];
            for c in 0..ch {
                for y in 0..s {
                    for xx in 0..s {
                        let src = av[c * s * s + y * s + xx];
                        let dst = bv[c * s * s
                            + ((y + level_shift) % s) * s
                            + ((xx + level_shift) % s)];
                        assert_eq!(src, dst, "level {lvl} channel {c} at ({y},{xx})");
                    }
                }
            }
        }
    });
}

/// With interactions disabled, perturbing one input level leaves every other
/// output level bit-identical.
#[test]
fn ablated_predictor_isolates_levels() {
    let mut cfg = desk_config("H3", 2);
    cfg.interaction = false;
    let model = build_model::<f32>(&cfg).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(3);

    let specs = cfg.level_specs();
    let mk_emb = |rng: &mut ChaCha20Rng| -> HierarchicalEmbedding<f32> {
        HierarchicalEmbedding {
            levels: specs
                .iter()
                .map(|l| {
                    let n = l.channels * l.size * l.size;
                    Tensor::from_vec(
                        &[1, l.channels, l.size, l.size],
                        (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
                    )
                })
                .collect(),
        }
    };

    let base = mk_emb(&mut rng);
    let out_base = no_grad(|| model.predictor.step(&base).unwrap());
    for perturbed_level in 0..specs.len() {
        let mut levels = base.levels.clone();
        let l = &specs[perturbed_level];
        let n = l.channels * l.size * l.size;
        levels[perturbed_level] = Tensor::from_vec(
            &[1, l.channels, l.size, l.size],
            (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        );
        let out = no_grad(|| model.predictor.step(&HierarchicalEmbedding { levels }).unwrap());
        for (i, (a, b)) in out_base.levels.iter().zip(&out.levels).enumerate() {
            if i == perturbed_level {
                assert_ne!(a.to_vec(), b.to_vec(), "perturbed level must change");
            } else {
                assert_eq!(a.to_vec(), b.to_vec(), "level {i} leaked from {perturbed_level}");
            }
        }
    }
}

/// A depth-1 predictor has no neighbors, so the interaction flag is inert.
#[test]
fn depth_one_predictor_ignores_interaction_flag() {
    let on = desk_config("H1", 4);
    let mut off = desk_config("H1", 4);
    off.interaction = false;
    let m_on = build_model::<f32>(&on).unwrap();
    let m_off = build_model::<f32>(&off).unwrap();

    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let l = on.level_specs()[0];
    let n = l.channels * l.size * l.size;
    let emb = HierarchicalEmbedding {
        levels: vec![Tensor::from_vec(
            &[1, l.channels, l.size, l.size],
            (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
        )],
    };
    let a = no_grad(|| m_on.predictor.step(&emb).unwrap());
    let b = no_grad(|| m_off.predictor.step(&emb).unwrap());
    assert_eq!(a.levels[0].to_vec(), b.levels[0].to_vec());
}

/// Deeper predictors (N = 8, 12, 14) must construct and run.
#[test]
fn deep_predictor_variants_runnable() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for n in [8usize, 12, 14] {
        let mut cfg = desk_config("C1", 1);
        cfg.internal_steps = n;
        let model = build_model::<f32>(&cfg).unwrap();
        let x = rand_input(&mut rng, 1, cfg.input_size);
        no_grad(|| {
            let emb = model.encoder.encode(&x, Mode::Eval).unwrap();
            let out = model.predictor.step(&emb).unwrap();
            assert_eq!(out.levels[0].shape(), emb.levels[0].shape(), "N={n}");
        });
    }
}

#[test]
fn predict_step_preserves_level_shapes() {
    for variant in ["H1", "H3", "C2"] {
        let cfg = desk_config(variant, 1);
        let model = build_model::<f32>(&cfg).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = rand_input(&mut rng, 2, cfg.input_size);
        no_grad(|| {
            let emb = model.encoder.encode(&x, Mode::Eval).unwrap();
            let out = model.predictor.step(&emb).unwrap();
            for (a, b) in emb.levels.iter().zip(&out.levels) {
                assert_eq!(a.shape(), b.shape(), "{variant}");
            }
        });
    }
}

#[test]
fn rollout_single_step_equals_predict_step() {
    let cfg = desk_config("H2", 6);
    let model = build_model::<f32>(&cfg).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let x = rand_input(&mut rng, 1, cfg.input_size);
    no_grad(|| {
        let emb = model.encoder.encode(&x, Mode::Eval).unwrap();
        let one = model.predictor.step(&emb).unwrap();
        let rolled = model.predictor.rollout(&emb, 1).unwrap();
        assert_eq!(rolled.len(), 1);
        for (a, b) in one.levels.iter().zip(&rolled[0].levels) {
            assert_eq!(a.to_vec(), b.to_vec());
        }
        // Determinism across repeat rollouts.
        let again = model.predictor.rollout(&emb, 3).unwrap();
        let again2 = model.predictor.rollout(&emb, 3).unwrap();
        for (sa, sb) in again.iter().zip(&again2) {
            for (a, b) in sa.levels.iter().zip(&sb.levels) {
                assert_eq!(a.to_vec(), b.to_vec());
            }
        }
    });
}

#[test]
fn decode_single_level_contracts() {
    // Depth 1: single-level decode is the full decode.
    let cfg1 = desk_config("H1", 3);
    let m1 = build_model::<f32>(&cfg1).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let x = rand_input(&mut rng, 1, cfg1.input_size);
    no_grad(|| {
        let emb = m1.encoder.encode(&x, Mode::Eval).unwrap();
        let full = m1.decoder.decode(&emb, Mode::Eval).unwrap();
        let single = m1.decoder.decode_single_level(&emb, 1, Mode::Eval).unwrap();
        assert_eq!(full.to_vec(), single.to_vec());
    });

    // Depth 3: zeroing every level equals decoding a zero embedding, and a
    // zero embedding decodes to a constant-bias field.
    let cfg3 = desk_config("H3", 3);
    let m3 = build_model::<f32>(&cfg3).unwrap();
    no_grad(|| {
        let zero_emb = HierarchicalEmbedding {
            levels: cfg3
                .level_specs()
                .iter()
                .map(|l| Tensor::<f32>::zeros(&[1, l.channels, l.size, l.size]))
                .collect(),
        };
        let dz = m3.decoder.decode(&zero_emb, Mode::Eval).unwrap();
        let d1 = m3.decoder.decode_single_level(&zero_emb, 2, Mode::Eval).unwrap();
        assert_eq!(dz.to_vec(), d1.to_vec());

        // Constant per channel: every pixel in a channel identical.
        let v = dz.to_vec();
        let hw = cfg3.input_size * cfg3.input_size;
        for c in 0..2 {
            let first = v[c * hw];
            assert!(v[c * hw..(c + 1) * hw].iter().all(|&x| (x - first).abs() < 1e-5));
        }
        assert!(m3.decoder.decode_single_level(&zero_emb, 9, Mode::Eval).is_err());
    });
}

/// Duplicated samples produce duplicated embeddings in eval mode; no
/// cross-sample mixing outside batch statistics.
#[test]
fn batch_duplication_gives_identical_embeddings() {
    let cfg = desk_config("H2", 12);
    let model = build_model::<f32>(&cfg).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let size = cfg.input_size;
    let single: Vec<f32> = (0..2 * size * size).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let mut doubled = single.clone();
    doubled.extend_from_slice(&single);
    let x = Tensor::from_vec(&[2, 2, size, size], doubled);
    no_grad(|| {
        let emb = model.encoder.encode(&x, Mode::Eval).unwrap();
        for level in &emb.levels {
            let v = level.to_vec();
            let per = v.len() / 2;
            assert_eq!(&v[..per], &v[per..]);
        }
    });
}
