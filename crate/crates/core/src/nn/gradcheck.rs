//! Finite-difference checks of [`Network::loss_and_gradients`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{LayerParams, Mode, Network};
use super::spec::{Activation, LayerSpec, ModelSpec, Padding};
use super::tensor::Tensor;
use super::NnError;

/// A small random model using every layer type: conv, max-pool, batch norm,
/// dropout, flatten and a softmax dense head.
pub fn random_small_spec(rng: &mut ChaCha8Rng) -> ModelSpec {
    let pad = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
    let h = rng.gen_range(5..=8);
    let w = rng.gen_range(5..=8);
    let c = rng.gen_range(1..=2);
    let mut layers = vec![
        LayerSpec::Conv2D {
            filters: rng.gen_range(2..=3),
            kernel: [rng.gen_range(1..=3), rng.gen_range(1..=3)],
            stride: [1, 1],
            padding: pad(rng),
            activation: if rng.gen_bool(0.7) { Activation::Relu } else { Activation::None },
        },
        LayerSpec::MaxPool2D {
            pool: [2, 2],
            stride: {
                let s = rng.gen_range(1..=2);
                [s, s]
            },
            padding: pad(rng),
        },
        LayerSpec::BatchNorm,
    ];
    if rng.gen_bool(0.5) {
        layers.push(LayerSpec::Conv2D {
            filters: 2,
            kernel: [2, 2],
            stride: [1, 1],
            padding: Padding::Same,
            activation: Activation::Relu,
        });
    }
    layers.push(LayerSpec::Dropout {
        rate: rng.gen_range(0.0..0.5),
    });
    layers.push(LayerSpec::Flatten);
    if rng.gen_bool(0.5) {
        layers.push(LayerSpec::dense(rng.gen_range(3..=5), Activation::Relu));
        layers.push(LayerSpec::BatchNorm);
    }
    layers.push(LayerSpec::dense(rng.gen_range(2..=4), Activation::Softmax));
    ModelSpec {
        input_shape: vec![h, w, c],
        layers,
    }
}

/// Outcome of one gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub n_checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare analytic gradients of every trainable parameter with central
/// differences of step `h`, in train mode with a fixed dropout seed.
pub fn check_gradients(net: &Network, x: &Tensor, labels: &[usize], seed: u64, h: f64, floor: f64) -> Result<GradCheck, NnError> {
    let (_, grads) = net.loss_and_gradients(x, labels, Mode::Train, seed)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (layer, layer_grads) in grads.iter().enumerate() {
        for (slot, g) in layer_grads.iter().enumerate() {
            for (j, &analytic) in g.iter().enumerate() {
                let orig = probe.params()[layer].trainable()[slot][j];
                probe.params_mut()[layer].trainable_mut()[slot][j] = orig + h;
                let up = probe.loss(x, labels, Mode::Train, seed)?;
                probe.params_mut()[layer].trainable_mut()[slot][j] = orig - h;
                let down = probe.loss(x, labels, Mode::Train, seed)?;
                probe.params_mut()[layer].trainable_mut()[slot][j] = orig;
                let numeric = (up - down) / (2.0 * h);
                worst = worst.max(relative_error(analytic, numeric, floor));
                count += 1;
            }
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        n_checked: count,
    })
}

/// Build the `index`-th randomized case: spec, weights (batch-norm scale and
/// shift perturbed away from identity), a batch of 3 inputs and labels.
pub fn random_case(index: u64) -> Result<(Network, Tensor, Vec<usize>), NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6AD_0000 + index);
    let spec = random_small_spec(&mut rng);
    let mut net = Network::new(spec, index)?;
    for p in net.params_mut() {
        if let LayerParams::BatchNorm { gamma, beta, .. } = p {
            gamma.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
            beta.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
    }
    let batch = 3;
    let mut shape = vec![batch];
    shape.extend(net.input_shape());
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let k = net.output_len();
    let labels = (0..batch).map(|_| rng.gen_range(0..k)).collect();
    Ok((net, x, labels))
}
