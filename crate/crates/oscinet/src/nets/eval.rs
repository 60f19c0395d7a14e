use crate::error::{Error, Result};
use crate::tensor::{NodeId, Tape, Tensor};

use super::{DeepOnetSpec, MlpParams, MlpSpec, ModelParams, ScaleSet};

/// Which branch stack of a complex model to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchStack {
    Real,
    Imag,
}

/// Tape handles for one sub-network's parameters.
#[derive(Debug, Clone)]
pub struct MlpNodes {
    pub layers: Vec<(NodeId, Option<NodeId>)>,
}

/// Tape handles for a whole model, mirroring [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelNodes {
    pub branch_re: Vec<MlpNodes>,
    pub branch_im: Vec<MlpNodes>,
    pub trunk: Vec<MlpNodes>,
}

impl ModelNodes {
    /// Register every parameter tensor on the tape, in canonical order.
    /// `trainable` decides whether adjoints are accumulated for them.
    pub fn stage(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Self {
        let mut stage_stack = |stacks: &[MlpParams]| -> Vec<MlpNodes> {
            stacks
                .iter()
                .map(|mlp| MlpNodes {
                    layers: mlp
                        .layers
                        .iter()
                        .map(|l| {
                            let w = if trainable {
                                tape.param(l.weight.clone())
                            } else {
                                tape.leaf(l.weight.clone())
                            };
                            let b = l.bias.as_ref().map(|b| {
                                if trainable {
                                    tape.param(b.clone())
                                } else {
                                    tape.leaf(b.clone())
                                }
                            });
                            (w, b)
                        })
                        .collect(),
                })
                .collect()
        };
        ModelNodes {
            branch_re: stage_stack(&params.branch_re),
            branch_im: stage_stack(&params.branch_im),
            trunk: stage_stack(&params.trunk),
        }
    }

    /// Parameter node ids in canonical order (matches `ModelParams::tensors`).
    pub fn ids(&self) -> Vec<NodeId> {
        self.branch_re
            .iter()
            .chain(&self.branch_im)
            .chain(&self.trunk)
            .flat_map(|m| &m.layers)
            .flat_map(|(w, b)| std::iter::once(*w).chain(*b))
            .collect()
    }
}

/// Forward pass of one fully connected stack: alternating affine layers and
/// activations, final layer linear.
pub fn mlp_eval(
    tape: &mut Tape,
    spec: &MlpSpec,
    nodes: &MlpNodes,
    input: NodeId,
) -> Result<NodeId> {
    if tape.value(input).cols() != spec.n_in() {
        return Err(Error::dim(format!(
            "mlp input has {} columns, spec expects {}",
            tape.value(input).cols(),
            spec.n_in()
        )));
    }
    if nodes.layers.len() != spec.n_layers() {
        return Err(Error::dim(format!(
            "{} staged layers for a {}-layer spec",
            nodes.layers.len(),
            spec.n_layers()
        )));
    }
    let last = nodes.layers.len() - 1;
    let mut x = input;
    for (i, (w, b)) in nodes.layers.iter().enumerate() {
        x = tape.affine(x, *w, *b)?;
        if i != last {
            x = tape.activation(x, spec.activation);
        }
    }
    Ok(x)
}

/// Multiscale evaluation: `sum_i subnet_i(scale_i * input)`.
///
/// All sub-networks must share input and output widths. The amplitude
/// prefactor from the frequency-scaling derivation is absorbed into the
/// trainable weights, so the executable form is the bare sum.
pub fn mscale_dnn_eval(
    tape: &mut Tape,
    specs: &[&MlpSpec],
    nodes: &[&MlpNodes],
    scales: &ScaleSet,
    input: NodeId,
) -> Result<NodeId> {
    if specs.len() != scales.len() || nodes.len() != scales.len() {
        return Err(Error::config(format!(
            "{} sub-network specs and {} parameter sets for {} scales",
            specs.len(),
            nodes.len(),
            scales.len()
        )));
    }
    let n_out = specs[0].n_out();
    if specs.iter().any(|s| s.n_out() != n_out) {
        return Err(Error::config(
            "multiscale sub-networks must share the output width",
        ));
    }
    let mut terms = Vec::with_capacity(scales.len());
    for ((spec, mlp), &alpha) in specs.iter().zip(nodes).zip(scales.factors()) {
        let scaled = if alpha == 1.0 {
            input
        } else {
            tape.scale(input, alpha)
        };
        terms.push(mlp_eval(tape, spec, mlp, scaled)?);
    }
    if terms.len() == 1 {
        Ok(terms[0])
    } else {
        tape.sum_terms(&terms)
    }
}

/// Trunk stack: evaluate sub-network `s` at `beta_s * x` and concatenate the
/// blocks along columns, giving `[q, n_scales * n_t]`.
pub fn trunk_eval(
    tape: &mut Tape,
    spec: &DeepOnetSpec,
    model: &ModelNodes,
    x: NodeId,
) -> Result<NodeId> {
    if tape.value(x).cols() != 1 {
        return Err(Error::dim(format!(
            "trunk input must be a column of coordinates, got {:?}",
            tape.value(x).shape()
        )));
    }
    let mut blocks = Vec::with_capacity(model.trunk.len());
    for (mlp, &beta) in model.trunk.iter().zip(spec.trunk_scales.factors()) {
        let scaled = if beta == 1.0 { x } else { tape.scale(x, beta) };
        blocks.push(mlp_eval(tape, &spec.trunk, mlp, scaled)?);
    }
    if blocks.len() == 1 {
        Ok(blocks[0])
    } else {
        tape.concat_cols(&blocks)
    }
}

/// Branch stack: `sum_i B_i(alpha_i * sensors)`. Scaling acts on the sensor
/// values (the input function's amplitude), not on coordinates.
pub fn branch_eval(
    tape: &mut Tape,
    spec: &DeepOnetSpec,
    model: &ModelNodes,
    stack: BranchStack,
    sensors: NodeId,
) -> Result<NodeId> {
    let stacks = match stack {
        BranchStack::Real => &model.branch_re,
        BranchStack::Imag => &model.branch_im,
    };
    if stacks.is_empty() {
        return Err(Error::Contract(
            "requested branch stack not present (imaginary stack of a real model?)".into(),
        ));
    }
    let specs: Vec<&MlpSpec> = std::iter::repeat_n(&spec.branch, stacks.len()).collect();
    let nodes: Vec<&MlpNodes> = stacks.iter().collect();
    mscale_dnn_eval(tape, &specs, &nodes, &spec.branch_scales, sensors)
}

/// Real-valued operator evaluation.
///
/// `out[b, p] = sum_J Br[b, J] * T[p, J] + Br[b, D]` with `D = basis_dim`;
/// the flat basis index `J` maps to (scale block s, output k) as
/// `J = s * n_t + k` with 0-based `s` and `k`.
pub fn deeponet_eval(
    tape: &mut Tape,
    spec: &DeepOnetSpec,
    model: &ModelNodes,
    sensors: NodeId,
    x: NodeId,
) -> Result<NodeId> {
    if spec.complex_output {
        return Err(Error::Contract(
            "deeponet_eval on a complex-output spec; use deeponet_eval_complex".into(),
        ));
    }
    let coeffs = branch_eval(tape, spec, model, BranchStack::Real, sensors)?;
    let basis = trunk_eval(tape, spec, model, x)?;
    tape.combine(coeffs, basis)
}

/// Complex-valued operator evaluation: independent real and imaginary branch
/// stacks share one trunk basis.
pub fn deeponet_eval_complex(
    tape: &mut Tape,
    spec: &DeepOnetSpec,
    model: &ModelNodes,
    sensors: NodeId,
    x: NodeId,
) -> Result<(NodeId, NodeId)> {
    if !spec.complex_output {
        return Err(Error::Contract(
            "deeponet_eval_complex on a real-output spec".into(),
        ));
    }
    let basis = trunk_eval(tape, spec, model, x)?;
    let c_re = branch_eval(tape, spec, model, BranchStack::Real, sensors)?;
    let c_im = branch_eval(tape, spec, model, BranchStack::Imag, sensors)?;
    let re = tape.combine(c_re, basis)?;
    let im = tape.combine(c_im, basis)?;
    Ok((re, im))
}

/// Inference helper: evaluate a real model on raw tensors.
pub fn predict(
    spec: &DeepOnetSpec,
    params: &ModelParams,
    sensors: &Tensor,
    x: &Tensor,
) -> Result<Tensor> {
    params.matches(spec)?;
    let mut tape = Tape::new();
    let model = ModelNodes::stage(&mut tape, params, false);
    let s = tape.leaf(sensors.clone());
    let xq = tape.leaf(x.clone());
    let out = deeponet_eval(&mut tape, spec, &model, s, xq)?;
    Ok(tape.value(out).clone())
}

/// Inference helper: evaluate a complex model on raw tensors.
pub fn predict_complex(
    spec: &DeepOnetSpec,
    params: &ModelParams,
    sensors: &Tensor,
    x: &Tensor,
) -> Result<(Tensor, Tensor)> {
    params.matches(spec)?;
    let mut tape = Tape::new();
    let model = ModelNodes::stage(&mut tape, params, false);
    let s = tape.leaf(sensors.clone());
    let xq = tape.leaf(x.clone());
    let (re, im) = deeponet_eval_complex(&mut tape, spec, &model, s, xq)?;
    Ok((tape.value(re).clone(), tape.value(im).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::init_parameters;
    use crate::tensor::Activation;

    fn stage(tape: &mut Tape, params: &ModelParams) -> ModelNodes {
        ModelNodes::stage(tape, params, false)
    }

    fn real_spec(s_branch: usize, s_trunk: usize, n_t: usize) -> DeepOnetSpec {
        DeepOnetSpec {
            branch: MlpSpec::new(vec![6, 8, s_trunk * n_t + 1], Activation::Tanh),
            trunk: MlpSpec::new(vec![1, 5, n_t], Activation::Tanh),
            branch_scales: ScaleSet::new((1..=s_branch).map(|i| i as f64).collect()).unwrap(),
            trunk_scales: ScaleSet::dyadic(s_trunk).unwrap(),
            n_t,
            complex_output: false,
        }
    }

    fn rand_input(rows: usize, cols: usize, phase: f64) -> Tensor {
        Tensor::from_parts(
            vec![rows, cols],
            (0..rows * cols)
                .map(|i| (phase + i as f64 * 0.7).sin())
                .collect(),
        )
    }

    #[test]
    fn zero_params_give_zero_mlp_output() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh);
        let params = MlpParams {
            layers: vec![
                super::super::LayerParams {
                    weight: Tensor::zeros(vec![3, 4]),
                    bias: Some(Tensor::zeros(vec![4])),
                },
                super::super::LayerParams {
                    weight: Tensor::zeros(vec![4, 2]),
                    bias: Some(Tensor::zeros(vec![2])),
                },
            ],
        };
        let mut tape = Tape::new();
        let x = tape.leaf(rand_input(5, 3, 0.0));
        let staged = MlpNodes {
            layers: params
                .layers
                .iter()
                .map(|l| {
                    let w = tape.leaf(l.weight.clone());
                    let b = l.bias.as_ref().map(|b| tape.leaf(b.clone()));
                    (w, b)
                })
                .collect(),
        };
        let y = mlp_eval(&mut tape, &spec, &staged, x).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_affine_mlp() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Tanh);
        let params = MlpParams {
            layers: vec![super::super::LayerParams {
                weight: Tensor::new(vec![1, 1], vec![2.0]).unwrap(),
                bias: Some(Tensor::new(vec![1], vec![1.0]).unwrap()),
            }],
        };
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 1], vec![3.0]).unwrap());
        let staged = MlpNodes {
            layers: vec![(
                tape.leaf(params.layers[0].weight.clone()),
                Some(tape.leaf(params.layers[0].bias.clone().unwrap())),
            )],
        };
        let y = mlp_eval(&mut tape, &spec, &staged, x).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0]);
    }

    #[test]
    fn hand_composed_two_layer_mlp() {
        // widths [2,2,1], tanh hidden; verify against manual composition.
        let spec = MlpSpec::new(vec![2, 2, 1], Activation::Tanh);
        let w1 = [[0.5, -0.3], [0.2, 0.8]];
        let b1 = [0.1, -0.2];
        let w2 = [[1.5], [-0.7]];
        let b2 = [0.25];
        let x = [0.4, -0.9];
        let h: Vec<f64> = (0..2)
            .map(|j| f64::tanh(x[0] * w1[0][j] + x[1] * w1[1][j] + b1[j]))
            .collect();
        let expect = h[0] * w2[0][0] + h[1] * w2[1][0] + b2[0];

        let mut tape = Tape::new();
        let xs = tape.leaf(Tensor::new(vec![1, 2], x.to_vec()).unwrap());
        let staged = MlpNodes {
            layers: vec![
                (
                    tape.leaf(Tensor::new(vec![2, 2], w1.concat()).unwrap()),
                    Some(tape.leaf(Tensor::new(vec![2], b1.to_vec()).unwrap())),
                ),
                (
                    tape.leaf(Tensor::new(vec![2, 1], w2.concat()).unwrap()),
                    Some(tape.leaf(Tensor::new(vec![1], b2.to_vec()).unwrap())),
                ),
            ],
        };
        let y = mlp_eval(&mut tape, &spec, &staged, xs).unwrap();
        assert!((tape.value(y).data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn single_scale_reduces_to_plain_mlp() {
        let spec = real_spec(1, 1, 4);
        let params = init_parameters(&spec, 3).unwrap();
        let sensors = rand_input(3, 6, 0.2);
        let x = rand_input(5, 1, 1.3);

        let mut tape = Tape::new();
        let model = stage(&mut tape, &params);
        let s = tape.leaf(sensors.clone());
        let out_branch = branch_eval(&mut tape, &spec, &model, BranchStack::Real, s).unwrap();
        let direct = {
            let mut t2 = Tape::new();
            let m2 = stage(&mut t2, &params);
            let s2 = t2.leaf(sensors.clone());
            let y = mlp_eval(&mut t2, &spec.branch, &m2.branch_re[0], s2).unwrap();
            t2.value(y).clone()
        };
        assert_eq!(tape.value(out_branch), &direct);

        let mut t3 = Tape::new();
        let m3 = stage(&mut t3, &params);
        let xq = t3.leaf(x.clone());
        let tr = trunk_eval(&mut t3, &spec, &m3, xq).unwrap();
        let direct_trunk = {
            let mut t4 = Tape::new();
            let m4 = stage(&mut t4, &params);
            let x4 = t4.leaf(x.clone());
            let y = mlp_eval(&mut t4, &spec.trunk, &m4.trunk[0], x4).unwrap();
            t4.value(y).clone()
        };
        assert_eq!(t3.value(tr), &direct_trunk);
    }

    #[test]
    fn equal_subnets_double_the_output() {
        // two identical branch subnets with unit scales -> exactly 2x one.
        let mut spec = real_spec(2, 1, 4);
        spec.branch_scales = ScaleSet::new(vec![1.0, 1.0]).unwrap();
        let mut params = init_parameters(&spec, 9).unwrap();
        params.branch_re[1] = params.branch_re[0].clone();
        let sensors = rand_input(2, 6, 0.4);

        let mut tape = Tape::new();
        let model = stage(&mut tape, &params);
        let s = tape.leaf(sensors.clone());
        let two = branch_eval(&mut tape, &spec, &model, BranchStack::Real, s).unwrap();

        let mut t1 = Tape::new();
        let m1 = stage(&mut t1, &params);
        let s1 = t1.leaf(sensors.clone());
        let one = mlp_eval(&mut t1, &spec.branch, &m1.branch_re[0], s1).unwrap();
        for (a, b) in tape.value(two).data().iter().zip(t1.value(one).data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn branch_two_scale_oracle() {
        // S_branch = 2, scales {1, 3}: equals B1(f) + B2(3f) term by term.
        let mut spec = real_spec(2, 1, 4);
        spec.branch_scales = ScaleSet::new(vec![1.0, 3.0]).unwrap();
        let params = init_parameters(&spec, 21).unwrap();
        let sensors = rand_input(3, 6, 2.2);

        let mut tape = Tape::new();
        let model = stage(&mut tape, &params);
        let s = tape.leaf(sensors.clone());
        let sum = branch_eval(&mut tape, &spec, &model, BranchStack::Real, s).unwrap();

        let term = |idx: usize, alpha: f64| -> Tensor {
            let mut t = Tape::new();
            let m = stage(&mut t, &params);
            let scaled = Tensor::from_parts(
                sensors.shape().to_vec(),
                sensors.data().iter().map(|v| v * alpha).collect(),
            );
            let s = t.leaf(scaled);
            let y = mlp_eval(&mut t, &spec.branch, &m.branch_re[idx], s).unwrap();
            t.value(y).clone()
        };
        let t1 = term(0, 1.0);
        let t2 = term(1, 3.0);
        for ((a, b), c) in tape
            .value(sum)
            .data()
            .iter()
            .zip(t1.data())
            .zip(t2.data())
        {
            assert!((a - (b + c)).abs() < 1e-14);
        }
    }

    #[test]
    fn trunk_blocks_match_per_scale_oracle() {
        let spec = real_spec(1, 3, 8);
        let params = init_parameters(&spec, 5).unwrap();
        let x = rand_input(7, 1, 0.9);

        let mut tape = Tape::new();
        let model = stage(&mut tape, &params);
        let xq = tape.leaf(x.clone());
        let basis = trunk_eval(&mut tape, &spec, &model, xq).unwrap();
        assert_eq!(tape.value(basis).shape(), &[7, 24]);

        for (s, &beta) in spec.trunk_scales.factors().iter().enumerate() {
            let mut t = Tape::new();
            let m = stage(&mut t, &params);
            let scaled = Tensor::from_parts(
                x.shape().to_vec(),
                x.data().iter().map(|v| v * beta).collect(),
            );
            let xs = t.leaf(scaled);
            let block = mlp_eval(&mut t, &spec.trunk, &m.trunk[s], xs).unwrap();
            for row in 0..7 {
                for k in 0..8 {
                    let got = tape.value(basis).at(row, s * 8 + k);
                    let want = t.value(block).at(row, k);
                    assert!((got - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn eval_matches_brute_force_summation() {
        let spec = real_spec(2, 3, 4);
        let params = init_parameters(&spec, 77).unwrap();
        let sensors = rand_input(4, 6, 1.1);
        let x = rand_input(9, 1, 0.3);

        let out = predict(&spec, &params, &sensors, &x).unwrap();

        // brute force: explicit double loop over basis index.
        let mut tape = Tape::new();
        let model = stage(&mut tape, &params);
        let s = tape.leaf(sensors.clone());
        let xq = tape.leaf(x.clone());
        let coeffs = branch_eval(&mut tape, &spec, &model, BranchStack::Real, s).unwrap();
        let basis = trunk_eval(&mut tape, &spec, &model, xq).unwrap();
        let c = tape.value(coeffs);
        let t = tape.value(basis);
        let d = spec.basis_dim();
        for b in 0..4 {
            for p in 0..9 {
                let mut acc = c.at(b, d);
                for j in 0..d {
                    acc += c.at(b, j) * t.at(p, j);
                }
                assert!(
                    (out.at(b, p) - acc).abs() <= 1e-12,
                    "mismatch at ({b},{p})"
                );
            }
        }
    }

    #[test]
    fn complex_eval_composes_from_real_paths() {
        let mut spec = real_spec(2, 2, 3);
        spec.complex_output = true;
        let params = init_parameters(&spec, 31).unwrap();
        let sensors = rand_input(3, 6, 0.6);
        let x = rand_input(5, 1, 1.9);

        let (re, im) = predict_complex(&spec, &params, &sensors, &x).unwrap();

        // oracle: two real evaluations sharing the trunk.
        let real_view = DeepOnetSpec {
            complex_output: false,
            ..spec.clone()
        };
        let re_params = ModelParams {
            branch_re: params.branch_re.clone(),
            branch_im: vec![],
            trunk: params.trunk.clone(),
        };
        let im_params = ModelParams {
            branch_re: params.branch_im.clone(),
            branch_im: vec![],
            trunk: params.trunk.clone(),
        };
        let re2 = predict(&real_view, &re_params, &sensors, &x).unwrap();
        let im2 = predict(&real_view, &im_params, &sensors, &x).unwrap();
        assert_eq!(re, re2);
        assert_eq!(im, im2);
    }

    #[test]
    fn zero_imag_branch_means_zero_imag_output() {
        let mut spec = real_spec(1, 2, 3);
        spec.complex_output = true;
        let mut params = init_parameters(&spec, 8).unwrap();
        for mlp in &mut params.branch_im {
            for layer in &mut mlp.layers {
                layer.weight.data_mut().fill(0.0);
                if let Some(b) = &mut layer.bias {
                    b.data_mut().fill(0.0);
                }
            }
        }
        let sensors = rand_input(2, 6, 0.0);
        let x = rand_input(4, 1, 0.5);
        let (_, im) = predict_complex(&spec, &params, &sensors, &x).unwrap();
        assert!(im.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_stacks_give_equal_re_im() {
        let mut spec = real_spec(1, 2, 3);
        spec.complex_output = true;
        let mut params = init_parameters(&spec, 8).unwrap();
        params.branch_im = params.branch_re.clone();
        let sensors = rand_input(2, 6, 0.7);
        let x = rand_input(4, 1, 0.5);
        let (re, im) = predict_complex(&spec, &params, &sensors, &x).unwrap();
        assert_eq!(re, im);
    }

    #[test]
    fn scale_semantics_argument_identity() {
        // feeding the pre-scaled argument with scale 1 reproduces the block:
        // T(beta * x) == T(1 * (beta * x)).
        let spec = real_spec(1, 2, 4);
        let params = init_parameters(&spec, 13).unwrap();
        let beta = spec.trunk_scales.factors()[1];
        let x = rand_input(6, 1, 0.25);
        let x_pre = Tensor::from_parts(
            x.shape().to_vec(),
            x.data().iter().map(|v| v * beta).collect(),
        );

        let block = |input: &Tensor, scale: f64| -> Tensor {
            let mut t = Tape::new();
            let m = stage(&mut t, &params);
            let scaled = Tensor::from_parts(
                input.shape().to_vec(),
                input.data().iter().map(|v| v * scale).collect(),
            );
            let xs = t.leaf(scaled);
            let y = mlp_eval(&mut t, &spec.trunk, &m.trunk[1], xs).unwrap();
            t.value(y).clone()
        };
        assert_eq!(block(&x, beta), block(&x_pre, 1.0));
    }

    #[test]
    fn mode_errors() {
        let spec = real_spec(1, 1, 2);
        let params = init_parameters(&spec, 1).unwrap();
        let sensors = rand_input(1, 6, 0.0);
        let x = rand_input(2, 1, 0.0);
        assert!(predict_complex(&spec, &params, &sensors, &x).is_err());
        let mut cspec = spec.clone();
        cspec.complex_output = true;
        let cparams = init_parameters(&cspec, 1).unwrap();
        assert!(predict(&cspec, &cparams, &sensors, &x).is_err());
    }
}
