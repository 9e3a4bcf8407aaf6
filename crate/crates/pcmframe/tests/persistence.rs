use pcmframe::c2s::{Architecture, C2SConfig, C2SNetwork};
use pcmframe::embedding::{Embedding, Modality, SeededRng};
use pcmframe::error::Error;
use pcmframe::nn::{AdamState, Matrix, Mode};
use pcmframe::persist::{self, config::KEYS, parse_config, render_config};
use pcmframe::prompt::{PromptPair, PromptProvenance};
use pcmframe::world::{ToyWorld, ToyWorldConfig};
use proptest::prelude::*;

fn trained_like(seed: u64) -> (C2SNetwork, AdamState) {
    let arch = Architecture::Dense(C2SConfig {
        d: 6,
        n_blocks: 2,
        dropout_rate: 0.1,
    });
    let mut rng = SeededRng::new(seed);
    let mut net = C2SNetwork::build(arch, &mut rng).unwrap();
    // one Train pass moves BatchNorm running statistics off their defaults
    let x = Matrix::from_vec(5, 6, (0..30).map(|_| rng.normal()).collect()).unwrap();
    net.forward(&x, Mode::Train, &mut rng).unwrap();
    let mut adam = AdamState::new(net.network().params());
    adam.step = 17;
    for m in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        m.iter_mut().for_each(|v| *v = rng.uniform());
    }
    (net, adam)
}

#[test]
fn checkpoint_eval_output_survives_save_and_load() {
    let (net, adam) = trained_like(1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    persist::save_checkpoint(&path, &net, Some(&adam)).unwrap();
    let back = persist::load_checkpoint(&path).unwrap();
    let x = Matrix::from_vec(3, 6, (0..18).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let (a, b) = (net.project(&x).unwrap(), back.net.project(&x).unwrap());
    for (u, v) in a.data().iter().zip(b.data()) {
        assert!((u - v).abs() < 1e-4 * (1.0 + u.abs()), "{u} vs {v}");
    }
    // a second load of the re-saved file is exactly the first load
    let again = persist::decode_checkpoint(
        &persist::encode_checkpoint(&back.net, back.optimizer.as_ref()).unwrap(),
    )
    .unwrap();
    assert_eq!(again, back);
}

#[test]
fn plain_checkpoint_round_trip() {
    let net = C2SNetwork::build(
        Architecture::PlainMlp { d: 5, n_fc: 7 },
        &mut SeededRng::new(2),
    )
    .unwrap();
    let bytes = persist::encode_checkpoint(&net, None).unwrap();
    let back = persist::decode_checkpoint(&bytes).unwrap();
    assert_eq!(back.net.architecture(), net.architecture());
    assert_eq!(persist::encode_checkpoint(&back.net, None).unwrap(), bytes);
}

#[test]
fn every_magic_corruption_is_rejected() {
    let (net, _) = trained_like(3);
    let ck = persist::encode_checkpoint(&net, None).unwrap();
    let world = ToyWorld::new(ToyWorldConfig::default()).unwrap();
    let pairs = persist::encode_pairs(&world.generate_pairs(3, 1).unwrap()).unwrap();
    for i in 0..4 {
        let mut bad = ck.clone();
        bad[i] ^= 0x20;
        assert!(matches!(
            persist::decode_checkpoint(&bad),
            Err(Error::BadMagic { .. })
        ));
        let mut bad = pairs.clone();
        bad[i] ^= 0x20;
        assert!(matches!(
            persist::decode_pairs(&bad),
            Err(Error::BadMagic { .. })
        ));
    }
    // the two formats do not accept each other
    assert!(matches!(
        persist::decode_pairs(&ck),
        Err(Error::BadMagic { .. })
    ));
    assert!(matches!(
        persist::decode_checkpoint(&pairs),
        Err(Error::BadMagic { .. })
    ));
}

#[test]
fn pairs_serialize_identically_when_generated_twice() {
    let world = ToyWorld::new(ToyWorldConfig::default()).unwrap();
    let a = persist::encode_pairs(&world.generate_pairs(50, 9).unwrap()).unwrap();
    let b = persist::encode_pairs(&world.generate_pairs(50, 9).unwrap()).unwrap();
    assert_eq!(a, b);
    let header = 4 + 4 + 4 + 4 + 8 + 8 + 8;
    assert_eq!(a.len(), header + 50 * 32 * 4);
}

#[test]
fn loaded_pairs_train_only_with_their_world() {
    let w0 = ToyWorld::new(ToyWorldConfig::default()).unwrap();
    let w1 = ToyWorld::new(ToyWorldConfig {
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let ds =
        persist::decode_pairs(&persist::encode_pairs(&w0.generate_pairs(4, 2).unwrap()).unwrap())
            .unwrap();
    assert!(ds.check_world(&w0).is_ok());
    assert!(matches!(
        ds.check_world(&w1),
        Err(Error::FingerprintMismatch { .. })
    ));
}

fn arb_prompts() -> impl Strategy<Value = PromptPair> {
    (
        prop::collection::vec(-3.0f64..3.0, 4),
        prop::collection::vec(-3.0f64..3.0, 4),
        1usize..10_000,
        "[a-z]{0,12}",
    )
        .prop_filter_map("zero vector", |(t, i, n, src)| {
            PromptPair::new(
                Embedding::normalized(&t, Modality::Text).ok()?,
                Embedding::normalized(&i, Modality::Image).ok()?,
                PromptProvenance {
                    text_source: src,
                    image_set_size: n,
                },
            )
            .ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prompts_round_trip_exactly(p in arb_prompts()) {
        let text = persist::encode_prompts(&p).unwrap();
        let back = persist::decode_prompts(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(persist::encode_prompts(&back).unwrap(), text);
    }

    #[test]
    fn world_files_round_trip(seed in any::<u64>(), gap in 0.0f64..2.0, gain in 0.01f64..3.0) {
        let w = ToyWorld::new(ToyWorldConfig { seed, gap_scale: gap, semantic_gain: gain, ..Default::default() }).unwrap();
        let text = persist::encode_world(&w).unwrap();
        prop_assert_eq!(persist::encode_world(&persist::decode_world(&text).unwrap()).unwrap(), text);
    }

    #[test]
    fn config_render_parse_is_idempotent(
        batch in 2usize..64,
        iters in 1usize..100_000,
        alpha in 1.0f64..=2.0,
        lr_min in 1e-9f64..1e-6,
        plain in any::<bool>(),
        renorm in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let text = format!(
            "batch_size = {batch}\niterations = {iters}\nalpha = {alpha}\nlr_min = {lr_min}\narch = {}\nrenormalize_output = {renorm}\ndata_seed = {seed}\n",
            if plain { "plain" } else { "dense" }
        );
        let parsed = parse_config(&text).unwrap();
        let rendered = render_config(&parsed);
        prop_assert_eq!(&parse_config(&rendered).unwrap(), &parsed);
        prop_assert_eq!(render_config(&parse_config(&rendered).unwrap()), rendered);
    }

    #[test]
    fn config_parser_never_panics(text in "[a-z_ =#0-9.\n-]{0,200}") {
        let _ = parse_config(&text);
    }

    #[test]
    fn decoders_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256), magic in 0usize..3) {
        let mut bytes = bytes;
        let prefix: &[u8] = [&b"PCMF"[..], &b"PCMD"[..], &b""[..]][magic];
        bytes.splice(0..0, prefix.iter().copied());
        let _ = persist::decode_checkpoint(&bytes);
        let _ = persist::decode_pairs(&bytes);
    }
}

#[test]
fn every_key_is_accepted_once() {
    for key in KEYS {
        let value = match *key {
            "arch" => "plain",
            "renormalize_output" => "false",
            k if k.ends_with("_path") => "x",
            "alpha" => "1.5",
            "gap_scale" | "semantic_gain" | "dropout_rate" | "holdout_fraction"
            | "alpha_manipulate" | "lambda_sem_cons" | "lambda_l1" | "lambda_reg" => "0.25",
            "lr_max" => "0.01",
            "lr_min" => "0.000001",
            "d_z" | "d_emb" => "16",
            _ => "3",
        };
        parse_config(&format!("{key} = {value}")).unwrap_or_else(|e| panic!("{key}: {e}"));
    }
}
