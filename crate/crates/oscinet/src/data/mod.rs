//! Dataset generation: random input media, a closed-form oscillatory
//! mapping, and scattered fields from the integral-equation solver.

mod fourier;
mod linalg;
mod nystrom;
mod slab;

pub use fourier::{nonlinear_map_eval, sample_fourier_field, FourierField};
pub use linalg::{relative_residual, solve_dense_complex};
pub use nystrom::{
    assemble_nystrom, default_mesh_elements, greens_function, nodes_per_wavelength,
    solve_scattering, Mesh1D, NystromSystem, PlaneWave, ScatteringProblem,
};
pub use slab::{slab_analytic, SlabSolution};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which operator a dataset samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    NonlinearMap,
    Helmholtz,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DatasetKind::NonlinearMap => "nonlinear_map",
            DatasetKind::Helmholtz => "helmholtz",
        })
    }
}

/// How query points are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// Evenly spaced over [-1, 1] including both endpoints (plottable, and
    /// the layout spectral diagnostics require).
    #[default]
    Uniform,
    /// Random uniform draws, sorted.
    Random,
}

/// Everything that determines a dataset, bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    /// Fourier mode count M of the input media.
    pub modes: usize,
    /// Mode cap K of the closed-form mapping (nonlinear_map only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_modes: Option<usize>,
    /// Wave number k (helmholtz only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave_number: Option<f64>,
    /// Amplitude constant c of the input media.
    pub amplitude: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Sensor count m.
    pub n_sensors: usize,
    /// Query count q.
    pub n_queries: usize,
    pub seed: u64,
    /// Stream seed for the mapping coefficients (nonlinear_map only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff_seed: Option<u64>,
    /// Uniform mesh element count (helmholtz only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_elements: Option<usize>,
    #[serde(default)]
    pub query_mode: QueryMode,
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

impl DatasetManifest {
    /// Semantic validation; every on-disk manifest passes through here.
    pub fn validate(&self) -> Result<()> {
        if self.format_version > DATASET_FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                supported: DATASET_FORMAT_VERSION,
            });
        }
        if self.n_train == 0 || self.n_sensors == 0 || self.n_queries < 2 {
            return Err(Error::validation(
                "counts",
                format!(
                    "need n_train >= 1, n_sensors >= 1, n_queries >= 2; got {}, {}, {}",
                    self.n_train, self.n_sensors, self.n_queries
                ),
            ));
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::validation(
                "amplitude",
                format!("must be positive and finite, got {}", self.amplitude),
            ));
        }
        match self.kind {
            DatasetKind::NonlinearMap => {
                if self.map_modes.is_none() {
                    return Err(Error::validation("map_modes", "required for nonlinear_map"));
                }
            }
            DatasetKind::Helmholtz => {
                let k = self
                    .wave_number
                    .ok_or_else(|| Error::validation("wave_number", "required for helmholtz"))?;
                if !(k > 0.0) || !k.is_finite() {
                    return Err(Error::validation(
                        "wave_number",
                        format!("must be positive and finite, got {k}"),
                    ));
                }
                match self.mesh_elements {
                    None => {
                        return Err(Error::validation("mesh_elements", "required for helmholtz"))
                    }
                    Some(0) => {
                        return Err(Error::validation("mesh_elements", "must be >= 1"))
                    }
                    Some(n) if n > 1 << 24 => {
                        return Err(Error::validation(
                            "mesh_elements",
                            format!("{n} exceeds the supported maximum"),
                        ))
                    }
                    Some(_) => {}
                }
            }
        }
        // Keep array sizes within what a desk machine can hold.
        let cells = (self.n_train as u128 + self.n_test as u128)
            * (self.n_sensors as u128 + 2 * self.n_queries as u128);
        if cells > 1 << 34 {
            return Err(Error::validation(
                "counts",
                "requested arrays exceed the supported size",
            ));
        }
        Ok(())
    }

    pub fn complex_outputs(&self) -> bool {
        self.kind == DatasetKind::Helmholtz
    }
}

/// Generation request; superset of the manifest with the strictness switch.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub modes: usize,
    pub map_modes: Option<usize>,
    pub wave_number: Option<f64>,
    pub amplitude: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_sensors: usize,
    pub n_queries: usize,
    pub seed: u64,
    pub coeff_seed: Option<u64>,
    pub mesh_elements: Option<usize>,
    pub query_mode: QueryMode,
    /// Escalate resolution warnings into errors.
    pub strict: bool,
}

impl DatasetConfig {
    pub fn nonlinear_map(modes: usize, map_modes: usize) -> Self {
        DatasetConfig {
            kind: DatasetKind::NonlinearMap,
            modes,
            map_modes: Some(map_modes),
            wave_number: None,
            amplitude: 0.1,
            n_train: 5000,
            n_test: 100,
            n_sensors: 3000,
            n_queries: 500,
            seed: 0,
            coeff_seed: None,
            mesh_elements: None,
            query_mode: QueryMode::Uniform,
            strict: false,
        }
    }

    pub fn helmholtz(modes: usize, wave_number: f64) -> Self {
        DatasetConfig {
            kind: DatasetKind::Helmholtz,
            modes,
            map_modes: None,
            wave_number: Some(wave_number),
            amplitude: 0.1,
            n_train: 5000,
            n_test: 100,
            n_sensors: 500,
            n_queries: 1000,
            seed: 0,
            coeff_seed: None,
            mesh_elements: None,
            query_mode: QueryMode::Uniform,
            strict: false,
        }
    }

    /// Manifest this config will produce (defaults materialized).
    pub fn manifest(&self) -> DatasetManifest {
        let mesh_elements = match self.kind {
            DatasetKind::Helmholtz => Some(self.mesh_elements.unwrap_or_else(|| {
                default_mesh_elements(self.wave_number.unwrap_or(1.0))
            })),
            DatasetKind::NonlinearMap => None,
        };
        let coeff_seed = match self.kind {
            // derived but always recorded, so the draw is reproducible
            DatasetKind::NonlinearMap => {
                Some(self.coeff_seed.unwrap_or(self.seed ^ 0x9e37_79b9_7f4a_7c15))
            }
            DatasetKind::Helmholtz => None,
        };
        DatasetManifest {
            format_version: DATASET_FORMAT_VERSION,
            kind: self.kind,
            modes: self.modes,
            map_modes: match self.kind {
                DatasetKind::NonlinearMap => self.map_modes,
                DatasetKind::Helmholtz => None,
            },
            wave_number: match self.kind {
                DatasetKind::Helmholtz => self.wave_number,
                DatasetKind::NonlinearMap => None,
            },
            amplitude: self.amplitude,
            n_train: self.n_train,
            n_test: self.n_test,
            n_sensors: self.n_sensors,
            n_queries: self.n_queries,
            seed: self.seed,
            coeff_seed,
            mesh_elements,
            query_mode: self.query_mode,
        }
    }

    /// Nodes per wavelength when below the rule-of-thumb minimum of 10.
    pub fn resolution_shortfall(&self) -> Option<f64> {
        if self.kind != DatasetKind::Helmholtz {
            return None;
        }
        let manifest = self.manifest();
        let npw = nodes_per_wavelength(manifest.wave_number?, manifest.mesh_elements?);
        (npw < 10.0).then_some(npw)
    }
}

/// In-memory dataset: fixed sensor/query point sets plus per-function rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorDataset {
    pub manifest: DatasetManifest,
    pub sensors: Vec<f64>,
    pub queries: Vec<f64>,
    /// [n_train, m]
    pub train_in: Tensor,
    /// [n_test, m]
    pub test_in: Tensor,
    /// [n_train, q]
    pub train_out_re: Tensor,
    /// [n_test, q]
    pub test_out_re: Tensor,
    /// [n_train, q], helmholtz only
    pub train_out_im: Option<Tensor>,
    /// [n_test, q], helmholtz only
    pub test_out_im: Option<Tensor>,
}

const STREAM_POINTS: u64 = 0;
const STREAM_COEFF: u64 = 1;
const STREAM_FUNCTION_BASE: u64 = 100;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform query grid over [-1, 1] with both endpoints.
pub fn uniform_queries(q: usize) -> Vec<f64> {
    (0..q)
        .map(|p| -1.0 + 2.0 * p as f64 / (q - 1) as f64)
        .collect()
}

fn sorted_uniform_draws(count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..count).map(|_| rng.random_range(-1.0..=1.0)).collect();
    pts.sort_by(f64::total_cmp);
    pts
}

/// Linear interpolation of nodal values onto arbitrary points in [-1, 1].
fn interp_nodal(nodes: &[f64], values: &[Complex64], xs: &[f64]) -> Vec<Complex64> {
    let n_el = nodes.len() - 1;
    let h = 2.0 / n_el as f64;
    xs.iter()
        .map(|&x| {
            let e = (((x + 1.0) / h).floor() as usize).min(n_el - 1);
            let theta = ((x - nodes[e]) / (nodes[e + 1] - nodes[e])).clamp(0.0, 1.0);
            values[e] * (1.0 - theta) + values[e + 1] * theta
        })
        .collect()
}

/// Generate the full dataset for a config. Functions are generated on
/// independent counter-derived streams, so the result is identical for any
/// thread count.
pub fn build_dataset(config: &DatasetConfig) -> Result<OperatorDataset> {
    let manifest = config.manifest();
    manifest.validate()?;
    if config.strict {
        if let Some(npw) = config.resolution_shortfall() {
            return Err(Error::Resolution(format!(
                "mesh resolves only {npw:.1} nodes per wavelength (need >= 10); \
                 raise mesh_elements or lower k"
            )));
        }
    }

    let mut pt_rng = stream_rng(manifest.seed, STREAM_POINTS);
    let sensors = sorted_uniform_draws(manifest.n_sensors, &mut pt_rng);
    let queries = match manifest.query_mode {
        QueryMode::Uniform => uniform_queries(manifest.n_queries),
        QueryMode::Random => sorted_uniform_draws(manifest.n_queries, &mut pt_rng),
    };

    let map_coeffs = match manifest.kind {
        DatasetKind::NonlinearMap => {
            let cap = manifest.map_modes.unwrap();
            let mut rng = stream_rng(manifest.coeff_seed.unwrap(), STREAM_COEFF);
            let coeff_sin: Vec<f64> = (0..=cap).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let coeff_cos: Vec<f64> = (0..=cap).map(|_| rng.random_range(-1.0..=1.0)).collect();
            Some((coeff_sin, coeff_cos))
        }
        DatasetKind::Helmholtz => None,
    };
    let mesh = match manifest.kind {
        DatasetKind::Helmholtz => Some(Mesh1D::uniform(manifest.mesh_elements.unwrap())?),
        DatasetKind::NonlinearMap => None,
    };

    let m = manifest.n_sensors;
    let q = manifest.n_queries;
    let total = manifest.n_train + manifest.n_test;
    let complex = manifest.complex_outputs();

    let mut inputs = vec![0.0f64; total * m];
    let mut out_re = vec![0.0f64; total * q];
    let mut out_im = if complex {
        vec![0.0f64; total * q]
    } else {
        Vec::new()
    };

    struct RowJob<'a> {
        idx: usize,
        input: &'a mut [f64],
        re: &'a mut [f64],
        im: Option<&'a mut [f64]>,
    }

    let jobs: Vec<RowJob> = {
        let mut jobs = Vec::with_capacity(total);
        let mut in_rest = inputs.as_mut_slice();
        let mut re_rest = out_re.as_mut_slice();
        let mut im_rest = out_im.as_mut_slice();
        for idx in 0..total {
            let (input, in_tail) = in_rest.split_at_mut(m);
            in_rest = in_tail;
            let (re, re_tail) = re_rest.split_at_mut(q);
            re_rest = re_tail;
            let im = if complex {
                let (im, im_tail) = im_rest.split_at_mut(q);
                im_rest = im_tail;
                Some(im)
            } else {
                None
            };
            jobs.push(RowJob { idx, input, re, im });
        }
        jobs
    };

    let fill = |job: RowJob| -> Result<()> {
        let mut rng = stream_rng(manifest.seed, STREAM_FUNCTION_BASE + job.idx as u64);
        let field = sample_fourier_field(manifest.modes, manifest.amplitude, &mut rng)?;
        job.input.copy_from_slice(&field.eval(&sensors));
        match manifest.kind {
            DatasetKind::NonlinearMap => {
                let (coeff_sin, coeff_cos) = map_coeffs.as_ref().unwrap();
                let values = field.eval(&queries);
                job.re
                    .copy_from_slice(&nonlinear_map_eval(coeff_sin, coeff_cos, &values)?);
            }
            DatasetKind::Helmholtz => {
                let problem = ScatteringProblem::new(
                    manifest.wave_number.unwrap(),
                    field,
                    mesh.clone().unwrap(),
                )?;
                let nodal = solve_scattering(&problem)?;
                let at_queries = interp_nodal(problem.mesh.nodes(), &nodal, &queries);
                for ((re, im), v) in job
                    .re
                    .iter_mut()
                    .zip(job.im.unwrap())
                    .zip(&at_queries)
                {
                    *re = v.re;
                    *im = v.im;
                }
            }
        }
        Ok(())
    };

    // The dense solves inside each job are already row-parallel; only spread
    // jobs across threads when each one is small.
    let parallel_jobs = crate::threads() > 1 && manifest.kind == DatasetKind::NonlinearMap;
    if parallel_jobs {
        crate::pool().install(|| {
            jobs.into_par_iter()
                .map(fill)
                .collect::<Result<Vec<()>>>()
        })?;
    } else {
        for job in jobs {
            fill(job)?;
        }
    }

    let n_train = manifest.n_train;
    let split = |data: Vec<f64>, width: usize| -> (Tensor, Tensor) {
        let train = data[..n_train * width].to_vec();
        let test = data[n_train * width..].to_vec();
        (
            Tensor::from_parts(vec![n_train, width], train),
            Tensor::from_parts(vec![manifest.n_test, width], test),
        )
    };
    let (train_in, test_in) = split(inputs, m);
    let (train_out_re, test_out_re) = split(out_re, q);
    let (train_out_im, test_out_im) = if complex {
        let (a, b) = split(out_im, q);
        (Some(a), Some(b))
    } else {
        (None, None)
    };

    Ok(OperatorDataset {
        manifest,
        sensors,
        queries,
        train_in,
        test_in,
        train_out_re,
        test_out_re,
        train_out_im,
        test_out_im,
    })
}
