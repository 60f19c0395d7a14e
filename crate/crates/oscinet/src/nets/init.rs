use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

use super::{DeepOnetSpec, LayerParams, MlpParams, MlpSpec, ModelParams};

// Stream tags keep every sub-network on its own RNG stream so stack layout
// changes never shift the draws of unrelated stacks.
const STREAM_BRANCH_RE: u64 = 0;
const STREAM_BRANCH_IM: u64 = 1;
const STREAM_TRUNK: u64 = 2;

fn init_mlp(spec: &MlpSpec, rng: &mut ChaCha8Rng) -> MlpParams {
    let mut layers = Vec::with_capacity(spec.n_layers());
    for i in 0..spec.n_layers() {
        let (n_in, n_out) = (spec.widths[i], spec.widths[i + 1]);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        let data = (0..n_in * n_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let weight = Tensor::from_parts(vec![n_in, n_out], data);
        let bias = spec
            .layer_has_bias(i)
            .then(|| Tensor::zeros(vec![n_out]));
        layers.push(LayerParams { weight, bias });
    }
    MlpParams { layers }
}

/// Deterministic Glorot-uniform initialization: weights drawn uniformly in
/// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
/// Each sub-network consumes a distinct derived stream of the seed.
pub fn init_parameters(spec: &DeepOnetSpec, seed: u64) -> crate::Result<ModelParams> {
    spec.validate()?;
    let stream_rng = |tag: u64, index: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((tag << 32) | index as u64);
        rng
    };
    let stacks = |tag: u64, count: usize, mlp: &MlpSpec| -> Vec<MlpParams> {
        (0..count)
            .map(|s| init_mlp(mlp, &mut stream_rng(tag, s)))
            .collect()
    };
    let branch_re = stacks(STREAM_BRANCH_RE, spec.branch_scales.len(), &spec.branch);
    let branch_im = if spec.complex_output {
        stacks(STREAM_BRANCH_IM, spec.branch_scales.len(), &spec.branch)
    } else {
        Vec::new()
    };
    let trunk = stacks(STREAM_TRUNK, spec.trunk_scales.len(), &spec.trunk);
    Ok(ModelParams {
        branch_re,
        branch_im,
        trunk,
    })
}
