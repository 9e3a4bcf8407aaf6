//! Finite-difference gradient checks shared by the gradient tests and the
//! acceptance suite. Each check returns the worst relative error it saw.
#![allow(dead_code)]

use pcmframe::c2s::{build_dense_block, Architecture, C2SConfig, C2SNetwork};
use pcmframe::embedding::SeededRng;
use pcmframe::nn::{finite_diff_grad, relative_error, LayerSpec, Matrix, Mode, Network};
use pcmframe::training::{loss_l1, loss_reg, loss_sem_cons};
use pcmframe::world::{ToyWorld, ToyWorldConfig};

pub const WIDTH: usize = 8;
pub const BATCH: usize = 4;
pub const H: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Scalar objective `Σ out ⊙ probe` of a Train-mode forward pass with a
/// fixed dropout stream, evaluated on a clone so BatchNorm statistics of
/// `net` stay untouched.
fn objective(net: &Network, x: &Matrix, probe: &Matrix, mode: Mode) -> f64 {
    let mut work = net.clone();
    let out = work.forward(x, mode, &mut SeededRng::new(99)).unwrap();
    out.output()
        .data()
        .iter()
        .zip(probe.data())
        .map(|(a, b)| a * b)
        .sum()
}

/// Gradient check of a network w.r.t. its trainable parameters (optionally a
/// sampled subset) and its input.
pub fn check_network(net: &Network, mode: Mode, seed: u64, max_params: Option<usize>) -> f64 {
    let mut rng = SeededRng::new(seed);
    let x = random_matrix(&mut rng, BATCH, net.input_width());
    let probe = random_matrix(&mut rng, BATCH, net.output_width());

    let mut work = net.clone();
    let acts = work.forward(&x, mode, &mut SeededRng::new(99)).unwrap();
    let grads = net.backward(&acts, &probe).unwrap();

    let flat = net.params().flatten_trainable();
    let analytic = grads.flatten_trainable();
    assert_eq!(flat.len(), analytic.len());
    let coords: Vec<usize> = match max_params {
        Some(k) if k < flat.len() => (0..k).map(|_| rng.index(flat.len())).collect(),
        _ => (0..flat.len()).collect(),
    };
    let mut probe_net = net.clone();
    let mut numeric = Vec::with_capacity(coords.len());
    for &c in &coords {
        let mut values = flat.clone();
        let g = finite_diff_grad(
            |v| {
                values[c] = v[0];
                probe_net.params_mut().assign_trainable(&values);
                objective(&probe_net, &x, &probe, mode)
            },
            &[flat[c]],
            H,
        )
        .unwrap();
        numeric.push(g[0]);
    }
    let picked: Vec<f64> = coords.iter().map(|&c| analytic[c]).collect();
    let param_err = relative_error(&picked, &numeric, 1e-8);

    let input_numeric = finite_diff_grad(
        |v| {
            let xm = Matrix::from_vec(BATCH, net.input_width(), v.to_vec()).unwrap();
            objective(net, &xm, &probe, mode)
        },
        x.data(),
        H,
    )
    .unwrap();
    let input_err = relative_error(grads.input.data(), &input_numeric, 1e-8);
    param_err.max(input_err)
}

/// One network per layer variant, each preceded by an FC layer so every
/// variant sees a non-trivial upstream gradient.
pub fn layer_variant_networks() -> Vec<(&'static str, Network)> {
    let d = WIDTH;
    let fc = LayerSpec::FullyConnected {
        input: d,
        output: d,
    };
    let cases: Vec<(&'static str, Vec<LayerSpec>)> = vec![
        ("fully-connected", vec![fc.clone()]),
        ("prelu", vec![fc.clone(), LayerSpec::PRelu]),
        ("batch-norm", vec![fc.clone(), LayerSpec::batch_norm(d)]),
        (
            "dropout",
            vec![fc.clone(), LayerSpec::Dropout { rate: 0.3 }],
        ),
        (
            "concat",
            vec![
                fc.clone(),
                LayerSpec::Concat {
                    sources: vec![0, 1],
                },
                LayerSpec::FullyConnected {
                    input: 2 * d,
                    output: d,
                },
            ],
        ),
        (
            "add",
            vec![fc.clone(), LayerSpec::PRelu, LayerSpec::Add { source: 1 }],
        ),
    ];
    cases
        .into_iter()
        .enumerate()
        .map(|(i, (name, layers))| {
            let net = Network::new(d, layers, &mut SeededRng::new(10 + i as u64)).unwrap();
            (name, net)
        })
        .collect()
}

pub fn dense_block_network() -> Network {
    let (layers, _) = build_dense_block(WIDTH);
    Network::new(WIDTH, layers, &mut SeededRng::new(3)).unwrap()
}

pub fn full_c2s_network() -> C2SNetwork {
    C2SNetwork::build(
        Architecture::Dense(C2SConfig {
            d: WIDTH,
            n_blocks: 5,
            dropout_rate: 0.1,
        }),
        &mut SeededRng::new(4),
    )
    .unwrap()
}

pub fn small_world() -> ToyWorld {
    ToyWorld::new(ToyWorldConfig {
        seed: 11,
        d_z: WIDTH,
        d_img: 12,
        d_sem: WIDTH,
        d_emb: WIDTH,
        hidden: 12,
        gap_scale: 0.5,
        semantic_gain: 0.2,
    })
    .unwrap()
}

/// Each loss against finite differences in the predicted latents.
pub fn check_losses(seed: u64) -> Vec<(&'static str, f64)> {
    let world = small_world();
    let mut rng = SeededRng::new(seed);
    let se_pred = random_matrix(&mut rng, BATCH, WIDTH);
    let se_true = random_matrix(&mut rng, BATCH, WIDTH);
    let pairs = world.generate_pairs(BATCH, seed).unwrap();
    let cie_rows: Vec<&[f64]> = pairs.records.iter().map(|r| r.cie.as_slice()).collect();
    let cie = Matrix::from_rows(&cie_rows).unwrap();
    let at = |v: &[f64]| Matrix::from_vec(BATCH, WIDTH, v.to_vec()).unwrap();

    let sem = loss_sem_cons(&cie, &se_pred, &world).unwrap();
    let sem_fd = finite_diff_grad(
        |v| loss_sem_cons(&cie, &at(v), &world).unwrap().value,
        se_pred.data(),
        H,
    )
    .unwrap();
    let l1 = loss_l1(&se_pred, &se_true).unwrap();
    let l1_fd = finite_diff_grad(
        |v| loss_l1(&at(v), &se_true).unwrap().value,
        se_pred.data(),
        H,
    )
    .unwrap();
    let reg = loss_reg(&se_pred).unwrap();
    let reg_fd = finite_diff_grad(|v| loss_reg(&at(v)).unwrap().value, se_pred.data(), H).unwrap();
    vec![
        ("sem_cons", relative_error(sem.grad.data(), &sem_fd, 1e-8)),
        ("l1", relative_error(l1.grad.data(), &l1_fd, 1e-8)),
        ("reg", relative_error(reg.grad.data(), &reg_fd, 1e-8)),
    ]
}

/// The composed `z → CIE` map, checked through a random linear readout.
pub fn check_world_map(seed: u64) -> f64 {
    let world = small_world();
    let mut rng = SeededRng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..BATCH {
        let z: Vec<f64> = (0..WIDTH).map(|_| rng.normal()).collect();
        let probe: Vec<f64> = (0..WIDTH).map(|_| rng.normal()).collect();
        let f = |v: &[f64]| -> f64 {
            let cie = world.trace(v).unwrap().cie;
            cie.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let analytic = world.vjp_z(&world.trace(&z).unwrap(), &probe);
        let numeric = finite_diff_grad(f, &z, H).unwrap();
        worst = worst.max(relative_error(&analytic, &numeric, 1e-8));
    }
    worst
}
