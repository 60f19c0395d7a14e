//! Branch-trunk operator networks, plain and multi-scale.
//!
//! A model is a set of branch sub-networks whose scaled-input outputs are
//! summed, paired with trunk sub-networks whose outputs are concatenated
//! into a basis. Complex-valued models carry two branch stacks (real and
//! imaginary coefficients) sharing one trunk.

mod count;
mod eval;
mod init;

pub use count::{count_parameters, CountConvention};
pub use eval::{
    branch_eval, deeponet_eval, deeponet_eval_complex, mlp_eval, mscale_dnn_eval, predict,
    predict_complex, trunk_eval, BranchStack, MlpNodes, ModelNodes,
};
pub use init::init_parameters;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Activation, Tensor};

/// Layer widths plus activation for one fully connected stack.
///
/// `widths[0]` is the input dimension and `widths.last()` the output; the
/// final layer is always linear. `input_bias`/`final_bias` control whether
/// the first and last affine layers carry bias vectors (hidden layers always
/// do) — the reference parameter tables are reproduced by counting without
/// the branch final bias and the trunk input bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub input_bias: bool,
    pub final_bias: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Self {
        Self {
            widths,
            activation,
            input_bias: true,
            final_bias: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::config(format!(
                "mlp needs at least input and output widths, got {:?}",
                self.widths
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::config(format!(
                "mlp widths must be >= 1, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }

    pub fn n_in(&self) -> usize {
        self.widths[0]
    }

    pub fn n_out(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Whether affine layer `idx` (0-based) carries a bias.
    pub fn layer_has_bias(&self, idx: usize) -> bool {
        let first_ok = idx != 0 || self.input_bias;
        let last_ok = idx != self.n_layers() - 1 || self.final_bias;
        first_ok && last_ok
    }

    /// Weight + bias count of this stack, honoring the bias flags.
    pub fn param_count(&self) -> u64 {
        let mut total = 0u64;
        for i in 0..self.n_layers() {
            total += (self.widths[i] * self.widths[i + 1]) as u64;
            if self.layer_has_bias(i) {
                total += self.widths[i + 1] as u64;
            }
        }
        total
    }
}

/// Strictly positive input scale factors, one per sub-network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleSet(Vec<f64>);

impl ScaleSet {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::config("scale set must not be empty"));
        }
        if factors.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(Error::config(format!(
                "scale factors must be finite and strictly positive, got {factors:?}"
            )));
        }
        Ok(Self(factors))
    }

    /// The single unit scale: a plain (non-multiscale) stack.
    pub fn unit() -> Self {
        Self(vec![1.0])
    }

    /// Powers of two 1, 2, 4, ... — the default trunk scale ladder.
    pub fn dyadic(count: usize) -> Result<Self> {
        Self::new((0..count).map(|s| (1u64 << s) as f64).collect())
    }

    pub fn factors(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ScaleSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScaleSet::new(v)
    }
}

impl From<ScaleSet> for Vec<f64> {
    fn from(s: ScaleSet) -> Self {
        s.0
    }
}

/// Full architecture of one operator network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetSpec {
    pub branch: MlpSpec,
    pub trunk: MlpSpec,
    pub branch_scales: ScaleSet,
    pub trunk_scales: ScaleSet,
    /// Outputs per trunk sub-network.
    pub n_t: usize,
    pub complex_output: bool,
}

impl DeepOnetSpec {
    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.trunk.validate()?;
        if self.trunk.n_in() != 1 {
            return Err(Error::config(format!(
                "trunk input width must be 1 (scalar coordinate), got {}",
                self.trunk.n_in()
            )));
        }
        if self.trunk.n_out() != self.n_t {
            return Err(Error::config(format!(
                "trunk output width {} must equal n_t = {}",
                self.trunk.n_out(),
                self.n_t
            )));
        }
        let basis = self
            .trunk_scales
            .len()
            .checked_mul(self.n_t)
            .ok_or_else(|| Error::config("basis dimension overflows"))?;
        let want = basis
            .checked_add(1)
            .ok_or_else(|| Error::config("branch output width overflows"))?;
        if self.branch.n_out() != want {
            return Err(Error::config(format!(
                "branch output width {} must be trunk_scales * n_t + 1 = {}",
                self.branch.n_out(),
                want
            )));
        }
        Ok(())
    }

    /// Number of basis functions produced by the trunk stack.
    pub fn basis_dim(&self) -> usize {
        self.trunk_scales.len() * self.n_t
    }

    /// Number of sensor points the branch consumes.
    pub fn sensor_count(&self) -> usize {
        self.branch.n_in()
    }

    pub fn branch_stacks(&self) -> usize {
        if self.complex_output {
            2
        } else {
            1
        }
    }
}

/// One affine layer's trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// [n_in, n_out]
    pub weight: Tensor,
    /// [n_out]
    pub bias: Option<Tensor>,
}

/// Parameters of one sub-network, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<LayerParams>,
}

impl MlpParams {
    pub fn matches(&self, spec: &MlpSpec) -> Result<()> {
        if self.layers.len() != spec.n_layers() {
            return Err(Error::dim(format!(
                "{} layers of parameters for a {}-layer spec",
                self.layers.len(),
                spec.n_layers()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let want = [spec.widths[i], spec.widths[i + 1]];
            if layer.weight.shape() != want {
                return Err(Error::dim(format!(
                    "layer {i} weight shape {:?}, spec wants {want:?}",
                    layer.weight.shape()
                )));
            }
            match (&layer.bias, spec.layer_has_bias(i)) {
                (Some(b), true) => {
                    if b.len() != spec.widths[i + 1] {
                        return Err(Error::dim(format!(
                            "layer {i} bias length {} != {}",
                            b.len(),
                            spec.widths[i + 1]
                        )));
                    }
                }
                (None, false) => {}
                (Some(_), false) => {
                    return Err(Error::dim(format!("layer {i} has a bias the spec excludes")))
                }
                (None, true) => {
                    return Err(Error::dim(format!("layer {i} missing its bias")))
                }
            }
        }
        Ok(())
    }
}

/// Every trainable tensor of a model, in canonical (checkpoint) order:
/// real branch sub-networks, imaginary branch sub-networks (complex models
/// only), then trunk sub-networks; within a sub-network layer by layer,
/// weight before bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub branch_re: Vec<MlpParams>,
    pub branch_im: Vec<MlpParams>,
    pub trunk: Vec<MlpParams>,
}

impl ModelParams {
    pub fn matches(&self, spec: &DeepOnetSpec) -> Result<()> {
        spec.validate()?;
        if self.branch_re.len() != spec.branch_scales.len() {
            return Err(Error::dim(format!(
                "{} real branch stacks for {} branch scales",
                self.branch_re.len(),
                spec.branch_scales.len()
            )));
        }
        let want_im = if spec.complex_output {
            spec.branch_scales.len()
        } else {
            0
        };
        if self.branch_im.len() != want_im {
            return Err(Error::dim(format!(
                "{} imaginary branch stacks, expected {want_im}",
                self.branch_im.len()
            )));
        }
        if self.trunk.len() != spec.trunk_scales.len() {
            return Err(Error::dim(format!(
                "{} trunk stacks for {} trunk scales",
                self.trunk.len(),
                spec.trunk_scales.len()
            )));
        }
        for p in self.branch_re.iter().chain(&self.branch_im) {
            p.matches(&spec.branch)?;
        }
        for p in &self.trunk {
            p.matches(&spec.trunk)?;
        }
        Ok(())
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.iter_mlps()
            .flat_map(|m| &m.layers)
            .flat_map(|l| std::iter::once(&l.weight).chain(l.bias.as_ref()))
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.branch_re
            .iter_mut()
            .chain(self.branch_im.iter_mut())
            .chain(self.trunk.iter_mut())
            .flat_map(|m| m.layers.iter_mut())
            .flat_map(|l| std::iter::once(&mut l.weight).chain(l.bias.as_mut()))
            .collect()
    }

    /// Human-readable name per tensor, aligned with [`ModelParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let groups: [(&str, &Vec<MlpParams>); 3] = [
            ("branch_re", &self.branch_re),
            ("branch_im", &self.branch_im),
            ("trunk", &self.trunk),
        ];
        for (tag, stacks) in groups {
            for (s, mlp) in stacks.iter().enumerate() {
                for (l, layer) in mlp.layers.iter().enumerate() {
                    names.push(format!("{tag}[{s}].layer{l}.weight"));
                    if layer.bias.is_some() {
                        names.push(format!("{tag}[{s}].layer{l}.bias"));
                    }
                }
            }
        }
        names
    }

    fn iter_mlps(&self) -> impl Iterator<Item = &MlpParams> {
        self.branch_re
            .iter()
            .chain(self.branch_im.iter())
            .chain(self.trunk.iter())
    }

    /// Total number of scalar parameters actually present.
    pub fn total_len(&self) -> u64 {
        self.tensors().iter().map(|t| t.len() as u64).sum()
    }
}
