use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};

/// Random trigonometric input medium on `[-1, 1]`:
/// `a(x) = amplitude * (b_0 + sum_{j=1..M} b_j sin(j pi x) + c_j cos(j pi x))`
/// with raw coefficients in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    amplitude: f64,
    /// b_0..b_M
    b: Vec<f64>,
    /// c_1..c_M
    c: Vec<f64>,
}

impl FourierField {
    pub fn new(amplitude: f64, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if b.len() != c.len() + 1 {
            return Err(Error::config(format!(
                "need M+1 sine-side and M cosine-side coefficients, got {} and {}",
                b.len(),
                c.len()
            )));
        }
        if b.iter().chain(&c).any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::config(
                "raw field coefficients must lie in [-1, 1]",
            ));
        }
        if !amplitude.is_finite() {
            return Err(Error::config("field amplitude must be finite"));
        }
        Ok(Self { amplitude, b, c })
    }

    /// The zero medium `a(x) = 0` (with M = 0).
    pub fn zero() -> Self {
        Self {
            amplitude: 0.0,
            b: vec![0.0],
            c: vec![],
        }
    }

    /// A constant medium `a(x) = value`, encoded as the pure b_0 term.
    /// The raw coefficient stays at 1, the amplitude carries the value.
    pub fn constant(value: f64) -> Result<Self> {
        FourierField::new(value, vec![1.0], vec![])
    }

    pub fn modes(&self) -> usize {
        self.c.len()
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn sin_coefficients(&self) -> &[f64] {
        &self.b
    }

    pub fn cos_coefficients(&self) -> &[f64] {
        &self.c
    }

    /// Evaluate the series at each coordinate.
    pub fn eval(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let mut acc = self.b[0];
                for (j, (&bj, &cj)) in self.b[1..].iter().zip(&self.c).enumerate() {
                    let arg = (j + 1) as f64 * PI * x;
                    acc += bj * arg.sin() + cj * arg.cos();
                }
                self.amplitude * acc
            })
            .collect()
    }

    pub fn eval_one(&self, x: f64) -> f64 {
        self.eval(std::slice::from_ref(&x))[0]
    }
}

/// Draw a field with `modes` modes: all raw coefficients i.i.d. uniform on
/// `[-1, 1]` from the given stream.
pub fn sample_fourier_field<R: Rng>(
    modes: usize,
    amplitude: f64,
    rng: &mut R,
) -> Result<FourierField> {
    if !(amplitude > 0.0) {
        return Err(Error::config(format!(
            "field amplitude must be positive, got {amplitude}"
        )));
    }
    let b = (0..=modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let c = (0..modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
    FourierField::new(amplitude, b, c)
}

/// The closed-form oscillatory mapping
/// `G[a](x) = sum_{n=0..K} A_n sin(n a(x)) + B_n cos(n a(x))`
/// applied elementwise to already-evaluated field values.
pub fn nonlinear_map_eval(coeff_sin: &[f64], coeff_cos: &[f64], a_values: &[f64]) -> Result<Vec<f64>> {
    if coeff_sin.len() != coeff_cos.len() || coeff_sin.is_empty() {
        return Err(Error::config(format!(
            "coefficient arrays must share length K+1 >= 1, got {} and {}",
            coeff_sin.len(),
            coeff_cos.len()
        )));
    }
    Ok(a_values
        .iter()
        .map(|&v| {
            let mut acc = 0.0;
            for (n, (&an, &bn)) in coeff_sin.iter().zip(coeff_cos).enumerate() {
                let arg = n as f64 * v;
                acc += an * arg.sin() + bn * arg.cos();
            }
            acc
        })
        .collect())
}
