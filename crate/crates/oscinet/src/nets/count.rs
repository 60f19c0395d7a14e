use super::DeepOnetSpec;

/// Which parameters to include in a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountConvention {
    /// Every weight and every bias.
    All,
    /// The convention that reproduces the reference architecture tables:
    /// each branch sub-network's final-layer bias and each trunk
    /// sub-network's first-layer bias are excluded. Complex models count
    /// both branch stacks.
    Reported,
}

impl std::str::FromStr for CountConvention {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "all" => Ok(CountConvention::All),
            "reported" => Ok(CountConvention::Reported),
            other => Err(crate::Error::config(format!(
                "unknown count convention `{other}` (expected all or reported)"
            ))),
        }
    }
}

/// Count trainable parameters of a model under the given convention.
///
/// The count is structural: it assumes all biases allowed by the spec's bias
/// flags are present, then applies the convention's exclusions on top.
pub fn count_parameters(spec: &DeepOnetSpec, convention: CountConvention) -> u64 {
    let branch_stacks = spec.branch_stacks() as u64 * spec.branch_scales.len() as u64;
    let trunk_stacks = spec.trunk_scales.len() as u64;

    let mut branch = spec.branch.param_count();
    let mut trunk = spec.trunk.param_count();
    if convention == CountConvention::Reported {
        if spec.branch.final_bias {
            branch -= spec.branch.n_out() as u64;
        }
        if spec.trunk.input_bias {
            trunk -= spec.trunk.widths[1] as u64;
        }
    }
    branch_stacks * branch + trunk_stacks * trunk
}
