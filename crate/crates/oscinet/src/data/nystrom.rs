//! Volume-integral formulation of 1-D scattering and its Nystrom
//! discretization.
//!
//! The scattered field of `u'' + k^2 (1 + a(x)) u = 0` with outgoing
//! radiation satisfies `(I + K)[u_sc] = N[g]` with `g = -k^2 a u_inc`,
//! `K[u](x) = k^2 \int G a u` and `N[g](x) = \int G g`. Collocating at mesh
//! nodes with a linear interpolant of `u_sc` per element and a two-point
//! Gauss rule per element yields a dense complex system in the nodal values.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::fourier::FourierField;
use super::linalg::solve_dense_complex;

/// Gauss-Legendre two-point rule on [-1, 1]: nodes +-1/sqrt(3), weights 1.
const GAUSS_XI: [f64; 2] = [-0.5773502691896257, 0.5773502691896257];

/// Mesh of the domain `[-1, 1]` with strictly increasing nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    /// Uniform mesh with `n_elements` elements (so `n_elements + 1` nodes).
    pub fn uniform(n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::Mesh("mesh needs at least one element".into()));
        }
        let nodes = (0..=n_elements)
            .map(|i| -1.0 + 2.0 * i as f64 / n_elements as f64)
            .collect();
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Mesh("mesh needs at least two nodes".into()));
        }
        if nodes.first() != Some(&-1.0) || nodes.last() != Some(&1.0) {
            return Err(Error::Mesh(format!(
                "mesh must span [-1, 1], got [{:?}, {:?}]",
                nodes.first(),
                nodes.last()
            )));
        }
        if nodes.windows(2).any(|w| w[1] - w[0] <= 0.0) {
            return Err(Error::Mesh("mesh nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element_width(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }
}

/// Unit-amplitude rightward plane wave `u_inc(x) = e^{i k x}`; it satisfies
/// the homogeneous equation for any medium-free background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlaneWave;

impl PlaneWave {
    pub fn eval(&self, k: f64, x: f64) -> Complex64 {
        Complex64::cis(k * x)
    }
}

/// One scattering instance: wave number, medium, incident wave, mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringProblem {
    pub wave_number: f64,
    pub medium: FourierField,
    pub incident: PlaneWave,
    pub mesh: Mesh1D,
}

impl ScatteringProblem {
    pub fn new(wave_number: f64, medium: FourierField, mesh: Mesh1D) -> Result<Self> {
        if !(wave_number > 0.0) {
            return Err(Error::config(format!(
                "wave number must be positive, got {wave_number}"
            )));
        }
        Ok(Self {
            wave_number,
            medium,
            incident: PlaneWave,
            mesh,
        })
    }

    /// Source term `g(x) = -k^2 a(x) u_inc(x)`.
    pub fn source(&self, x: f64) -> Complex64 {
        let k = self.wave_number;
        -k * k * self.medium.eval_one(x) * self.incident.eval(k, x)
    }
}

/// Free-space kernel as printed in the derivation: `(i/2k) e^{i k |x - x'|}`.
pub fn greens_function(k: f64, x: f64, xp: f64) -> Complex64 {
    Complex64::new(0.0, 1.0 / (2.0 * k)) * Complex64::cis(k * (x - xp).abs())
}

/// The kernel that actually radiates outgoing waves for `u'' + k^2 u = f`:
/// `e^{i k |x - x'|} / (2 i k)`, the negative of [`greens_function`].
/// Assembling with the printed sign flips the physical field; the slab
/// benchmark pins this orientation.
fn outgoing_kernel(k: f64, x: f64, xp: f64) -> Complex64 {
    -greens_function(k, x, xp)
}

/// Dense collocation system `(I + K) u = b` over mesh nodes.
#[derive(Debug, Clone)]
pub struct NystromSystem {
    /// Row-major `(N+1) x (N+1)`.
    pub matrix: Vec<Complex64>,
    pub rhs: Vec<Complex64>,
    pub n_nodes: usize,
}

/// Assemble the collocation matrix and right-hand side.
///
/// Per element `e` with width `h_e`, midpoint map `X_e(xi)`, the two-point
/// Gauss rule approximates
///   A_ie^+ = (k^2 h_e / 2) \int G(x_i, X_e) a(X_e) (1 - xi)/2 dxi  (left node)
///   A_ie^- = (k^2 h_e / 2) \int G(x_i, X_e) a(X_e) (1 + xi)/2 dxi  (right node)
///   b_i    = sum_e (h_e / 2) \int G(x_i, X_e) g(X_e) dxi
/// and row `i` of the matrix accumulates `A_ie^+` into column `e` and
/// `A_ie^-` into column `e+1` on top of the identity.
pub fn assemble_nystrom(problem: &ScatteringProblem) -> Result<NystromSystem> {
    let mesh = &problem.mesh;
    let nodes = mesh.nodes();
    let n_el = mesh.n_elements();
    let n = nodes.len();
    let k = problem.wave_number;

    for e in 0..n_el {
        if mesh.element_width(e) <= 0.0 {
            return Err(Error::Mesh(format!("degenerate element {e}")));
        }
    }

    // Per-element quadrature data, shared across rows.
    struct ElementQuad {
        x: [f64; 2],
        /// (k^2 h_e / 2) * a(x_q) * (1 -+ xi_q)/2, for the left/right node
        coeff_left: [f64; 2],
        coeff_right: [f64; 2],
        /// (h_e / 2) * g(x_q)
        source: [Complex64; 2],
    }
    let quads: Vec<ElementQuad> = (0..n_el)
        .map(|e| {
            let h = mesh.element_width(e);
            let mid = 0.5 * (nodes[e] + nodes[e + 1]);
            let mut x = [0.0; 2];
            let mut coeff_left = [0.0; 2];
            let mut coeff_right = [0.0; 2];
            let mut source = [Complex64::new(0.0, 0.0); 2];
            for (q, &xi) in GAUSS_XI.iter().enumerate() {
                let xq = mid + xi * h / 2.0;
                let aq = problem.medium.eval_one(xq);
                x[q] = xq;
                coeff_left[q] = (k * k * h / 2.0) * aq * (1.0 - xi) / 2.0;
                coeff_right[q] = (k * k * h / 2.0) * aq * (1.0 + xi) / 2.0;
                source[q] = (h / 2.0)
                    * (-k * k * aq * problem.incident.eval(k, xq));
            }
            ElementQuad {
                x,
                coeff_left,
                coeff_right,
                source,
            }
        })
        .collect();

    let mut matrix = vec![Complex64::new(0.0, 0.0); n * n];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];

    let fill_row = |(i, (row, rhs_i)): (usize, (&mut [Complex64], &mut Complex64))| {
        let xi = nodes[i];
        row[i] += Complex64::new(1.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        for (e, quad) in quads.iter().enumerate() {
            let mut left = Complex64::new(0.0, 0.0);
            let mut right = Complex64::new(0.0, 0.0);
            for q in 0..2 {
                let g = outgoing_kernel(k, xi, quad.x[q]);
                left += g * quad.coeff_left[q];
                right += g * quad.coeff_right[q];
                b += g * quad.source[q];
            }
            row[e] += left;
            row[e + 1] += right;
        }
        *rhs_i = b;
    };

    if n * n >= 1 << 16 && crate::threads() > 1 {
        crate::pool().install(|| {
            matrix
                .par_chunks_mut(n)
                .zip(rhs.par_iter_mut())
                .enumerate()
                .for_each(fill_row)
        });
    } else {
        matrix
            .chunks_mut(n)
            .zip(rhs.iter_mut())
            .enumerate()
            .for_each(fill_row);
    }

    Ok(NystromSystem {
        matrix,
        rhs,
        n_nodes: n,
    })
}

/// Assemble and solve; returns the scattered field at the mesh nodes.
pub fn solve_scattering(problem: &ScatteringProblem) -> Result<Vec<Complex64>> {
    let system = assemble_nystrom(problem)?;
    solve_dense_complex(&system.matrix, system.n_nodes, &system.rhs)
}

/// Nodes per wavelength of a uniform mesh: `pi * n_elements / k`.
pub fn nodes_per_wavelength(k: f64, n_elements: usize) -> f64 {
    std::f64::consts::PI * n_elements as f64 / k
}

/// Default element count: at least 400, at least ~20 nodes per wavelength.
pub fn default_mesh_elements(k: f64) -> usize {
    400usize.max((20.0 * k / std::f64::consts::PI).ceil() as usize)
}
