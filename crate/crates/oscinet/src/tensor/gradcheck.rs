use crate::error::{Error, Result};

use super::{NodeId, Tape, Tensor};

/// Compare reverse-mode adjoints against central finite differences.
///
/// `build` receives a fresh tape plus the parameter nodes (registered in the
/// order of `params`) and must return the scalar loss node. Returns the
/// maximum over all parameter entries of
/// `|adjoint - central_difference| / (|central_difference| + 1e-12)`.
pub fn grad_check<F>(build: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Contract(format!(
            "grad_check step {h} outside [1e-7, 1e-3]"
        )));
    }

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = values.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &ids)?;
        let v = tape.value(loss);
        if !v.is_scalar() {
            return Err(Error::Contract("grad_check loss must be scalar".into()));
        }
        let out = v.data()[0];
        if !out.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {out}")));
        }
        Ok(out)
    };

    // Reverse-mode pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &ids)?;
    if !tape.value(loss).is_scalar() {
        return Err(Error::Contract("grad_check loss must be scalar".into()));
    }
    if !tape.value(loss).data()[0].is_finite() {
        return Err(Error::Numeric("non-finite loss at base point".into()));
    }
    tape.backward(loss)?;
    let adjoints: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| tape.adjoint(*id).unwrap_or(&[]).to_vec())
        .collect();

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ei in 0..param.len() {
            let base = param.data()[ei];
            probe[pi].data_mut()[ei] = base + h;
            let up = eval(&probe)?;
            probe[pi].data_mut()[ei] = base - h;
            let down = eval(&probe)?;
            probe[pi].data_mut()[ei] = base;
            let fd = (up - down) / (2.0 * h);
            let ad = adjoints[pi][ei];
            let rel = (ad - fd).abs() / (fd.abs() + 1e-12);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Activation;

    #[test]
    fn linear_model_is_exact() {
        // loss = w . [1, 2, 3]; derivative is constant so any h is exact.
        let w = Tensor::new(vec![1, 3], vec![0.4, -0.2, 0.9]).unwrap();
        let err = grad_check(
            |tape, params| {
                let readout = tape.leaf(Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap());
                tape.affine(params[0], readout, None)
            },
            &[w],
            1e-4,
        )
        .unwrap();
        assert!(err <= 1e-9, "linear gradcheck error {err}");
    }

    #[test]
    fn scalar_quadratic() {
        // loss = (w - 2)^2, dw = 2(w - 2) = -2.2 at w = 0.9.
        let w = Tensor::new(vec![1, 1], vec![0.9]).unwrap();
        let err = grad_check(
            |tape, params| {
                let target = tape.leaf(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
                tape.mse(params[0], target)
            },
            &[w],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-8, "quadratic gradcheck error {err}");
    }

    #[test]
    fn three_layer_tanh_mlp() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let w1 = Tensor::new(vec![2, 5], (0..10).map(|_| next()).collect()).unwrap();
        let b1 = Tensor::new(vec![5], (0..5).map(|_| next()).collect()).unwrap();
        let w2 = Tensor::new(vec![5, 4], (0..20).map(|_| next()).collect()).unwrap();
        let b2 = Tensor::new(vec![4], (0..4).map(|_| next()).collect()).unwrap();
        let w3 = Tensor::new(vec![4, 1], (0..4).map(|_| next()).collect()).unwrap();
        let x = Tensor::new(vec![3, 2], (0..6).map(|_| next()).collect()).unwrap();
        let t = Tensor::new(vec![3, 1], (0..3).map(|_| next()).collect()).unwrap();
        let err = grad_check(
            |tape, p| {
                let xs = tape.leaf(x.clone());
                let h1 = tape.affine(xs, p[0], Some(p[1]))?;
                let a1 = tape.activation(h1, Activation::Tanh);
                let h2 = tape.affine(a1, p[2], Some(p[3]))?;
                let a2 = tape.activation(h2, Activation::Tanh);
                let h3 = tape.affine(a2, p[4], None)?;
                let target = tape.leaf(t.clone());
                tape.mse(h3, target)
            },
            &[w1, b1, w2, b2, w3],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "mlp gradcheck error {err}");
    }

    #[test]
    fn rejects_out_of_range_step() {
        let w = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let r = grad_check(
            |tape, p| {
                let t = tape.leaf(Tensor::new(vec![1, 1], vec![0.0]).unwrap());
                tape.mse(p[0], t)
            },
            &[w],
            1e-2,
        );
        assert!(r.is_err());
    }
}
