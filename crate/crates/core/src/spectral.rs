//! Symmetric positive-definite kernels through truncated spectral features.
//!
//! The scaled landmark Gram `G = K / m` is eigendecomposed as `G = U L U^T`.
//! Feature `i` of a point `x` is the Nystrom extension of `sqrt(l_i) psi_i`:
//!
//! ```text
//! phi_i(x) = (m * l_i)^{-1/2} * sum_j U_ji k(x, z_j)
//! ```
//!
//! On the landmarks `<phi(z_a), phi(z_b)>` is the rank-`d` reconstruction of
//! `K`, and over the domain it approximates `k(x, y)` with eigenfunctions
//! normalized in the empirical measure of the landmarks.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numfmt::{points_sig17, vec_f64_sig17};
use crate::relation::{dist2, lattice, BoxDomain, FeaturePair, Point, SymmetricKernel};
use crate::sequence::{rng, uniform_point};

pub const NYSTROM_FORMAT_VERSION: u32 = 1;

/// Eigenvalues above `-PSD_CLIP * l_1` are clipped to zero; anything lower is
/// a genuine violation of positive semi-definiteness.
pub const PSD_CLIP: f64 = 1e-8;

/// Built-in kernels that can be referenced by name from serialized maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum KernelId {
    /// `exp(-|x - y|^2 / (2 bandwidth^2))`
    Rbf { bandwidth: f64 },
    /// `<x, y>`
    Linear,
    /// `prod_i min(x_i, y_i)`
    Min,
    /// `(<x, y> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
}

impl KernelId {
    pub fn kernel(&self) -> SymmetricKernel {
        match *self {
            Self::Rbf { bandwidth } => {
                let s = 2.0 * bandwidth * bandwidth;
                SymmetricKernel::new(move |x, y| (-dist2(x, y) / s).exp())
            }
            Self::Linear => SymmetricKernel::new(|x, y| x.iter().zip(y).map(|(a, b)| a * b).sum()),
            Self::Min => SymmetricKernel::new(|x, y| x.iter().zip(y).map(|(a, b)| a.min(*b)).product()),
            Self::Polynomial { degree, offset } => SymmetricKernel::new(move |x, y| {
                (x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + offset).powi(degree as i32)
            }),
        }
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
fn sorted_eigen(g: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = g.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (vals, eig.eigenvectors.select_columns(&order))
}

fn check_symmetric(gram: &DMatrix<f64>) -> Result<()> {
    if !gram.is_square() {
        return Err(invalid(format!("Gram matrix must be square, got {:?}", gram.shape())));
    }
    let scale = gram.amax().max(f64::MIN_POSITIVE);
    let n = gram.nrows();
    for i in 0..n {
        for j in i + 1..n {
            if (gram[(i, j)] - gram[(j, i)]).abs() > 1e-12 * scale {
                return Err(invalid(format!("Gram matrix asymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// True iff the smallest eigenvalue is at least `-tol * max(l_max, 1)`.
pub fn psd_check(gram: &DMatrix<f64>, tol: f64) -> Result<bool> {
    check_symmetric(gram)?;
    if gram.is_empty() {
        return Ok(true);
    }
    let (vals, _) = sorted_eigen(gram);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    Ok(min >= -tol * max.max(1.0))
}

/// `K_ab = k(z_a, z_b)`.
pub fn gram_matrix(kernel: &SymmetricKernel, points: &[Point]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| points.iter().map(|y| kernel.eval(x, y)).collect())
        .collect();
    DMatrix::from_fn(points.len(), points.len(), |i, j| rows[i][j])
}

/// Truncated Nystrom feature map of a symmetric PSD kernel.
#[derive(Clone)]
pub struct NystromFeatureMap {
    landmarks: Vec<Point>,
    eigvals: Vec<f64>,
    eigvecs: DMatrix<f64>,
    d: usize,
    kernel: SymmetricKernel,
    kernel_id: Option<KernelId>,
}

impl fmt::Debug for NystromFeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NystromFeatureMap")
            .field("m", &self.landmarks.len())
            .field("d", &self.d)
            .field("kernel_id", &self.kernel_id)
            .finish()
    }
}

impl NystromFeatureMap {
    /// Eigendecomposes the scaled landmark Gram; the map starts untruncated.
    pub fn new(kernel: SymmetricKernel, landmarks: Vec<Point>) -> Result<Self> {
        let m = landmarks.len();
        if m < 2 {
            return Err(invalid(format!("need at least two landmarks, got {m}")));
        }
        let gram = gram_matrix(&kernel, &landmarks) / m as f64;
        check_symmetric(&gram)?;
        let (mut vals, vecs) = sorted_eigen(&gram);
        let max = vals[0].max(0.0);
        let min = vals[m - 1];
        if min < -PSD_CLIP * max {
            return Err(Error::NotPsd {
                min_eigenvalue: min * m as f64,
                max_eigenvalue: max * m as f64,
            });
        }
        for v in &mut vals {
            *v = v.max(0.0);
        }
        Ok(Self {
            landmarks,
            eigvals: vals,
            eigvecs: vecs,
            d: m,
            kernel,
            kernel_id: None,
        })
    }

    pub fn from_id(id: KernelId, landmarks: Vec<Point>) -> Result<Self> {
        let mut map = Self::new(id.kernel(), landmarks)?;
        map.kernel_id = Some(id);
        Ok(map)
    }

    pub fn with_truncation(mut self, d: usize) -> Self {
        self.d = d.min(self.landmarks.len());
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.landmarks.len()
    }

    pub fn landmarks(&self) -> &[Point] {
        &self.landmarks
    }

    /// Eigenvalues of the scaled Gram `K / m`, descending, clipped at zero.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn kernel(&self) -> &SymmetricKernel {
        &self.kernel
    }

    pub fn kernel_id(&self) -> Option<&KernelId> {
        self.kernel_id.as_ref()
    }

    /// The first `d` feature coordinates of `x`.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m();
        let kx: Vec<f64> = self.landmarks.iter().map(|z| self.kernel.eval(x, z)).collect();
        (0..self.d)
            .map(|i| {
                let l = self.eigvals[i];
                if l <= 0.0 {
                    return 0.0;
                }
                let proj: f64 = (0..m).map(|j| self.eigvecs[(j, i)] * kx[j]).sum();
                proj / (m as f64 * l).sqrt()
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.features(x).iter().zip(self.features(y)).map(|(a, b)| a * b).sum()
    }

    /// `max_ab |K_ab - Khat_ab|` on the landmarks for every truncation level
    /// `0..=m`, where `Khat = m * sum_{i < d} l_i u_i u_i^T`.
    pub fn landmark_residuals(&self) -> Vec<f64> {
        let m = self.m();
        let mut resid = gram_matrix(&self.kernel, &self.landmarks);
        let mut out = Vec::with_capacity(m + 1);
        out.push(resid.amax());
        for i in 0..m {
            let scale = m as f64 * self.eigvals[i];
            if scale > 0.0 {
                let u = self.eigvecs.column(i);
                resid -= scale * &u * u.transpose();
            }
            out.push(resid.amax());
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let Some(id) = &self.kernel_id else {
            return Err(invalid("only maps over registry kernels can be serialized"));
        };
        Ok(serde_json::to_string(&NystromDoc {
            version: NYSTROM_FORMAT_VERSION,
            landmarks: self.landmarks.clone(),
            eigvals: self.eigvals.clone(),
            eigvecs: self.eigvecs.transpose().as_slice().to_vec(),
            d: self.d,
            kernel_id: id.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NystromDoc = serde_json::from_str(text)?;
        if doc.version != NYSTROM_FORMAT_VERSION {
            return Err(invalid(format!("unsupported feature map version {}", doc.version)));
        }
        let m = doc.landmarks.len();
        if doc.eigvals.len() != m || doc.eigvecs.len() != m * m || doc.d > m {
            return Err(invalid("feature map arrays do not match the landmark count"));
        }
        Ok(Self {
            kernel: doc.kernel_id.kernel(),
            landmarks: doc.landmarks,
            eigvals: doc.eigvals,
            eigvecs: DMatrix::from_row_slice(m, m, &doc.eigvecs),
            d: doc.d,
            kernel_id: Some(doc.kernel_id),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct NystromDoc {
    version: u32,
    #[serde(serialize_with = "points_sig17::serialize")]
    landmarks: Vec<Point>,
    #[serde(serialize_with = "vec_f64_sig17::serialize")]
    eigvals: Vec<f64>,
    #[serde(serialize_with = "vec_f64_sig17::serialize")]
    eigvecs: Vec<f64>,
    d: usize,
    kernel_id: KernelId,
}

/// Landmark-surrogate spectrum decay.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDecay {
    pub d: usize,
    /// Residual at every truncation level `0..=m`.
    pub residuals: Vec<f64>,
}

impl SpectrumDecay {
    pub fn residual_at(&self, d: usize) -> f64 {
        self.residuals[d]
    }
}

fn decay_from_map(map: &NystromFeatureMap, epsilon: f64) -> Result<SpectrumDecay> {
    let residuals = map.landmark_residuals();
    match residuals.iter().position(|&r| r <= epsilon) {
        Some(d) => Ok(SpectrumDecay { d, residuals }),
        None => Err(Error::SpectrumTooFlat {
            residual: residuals[map.m()],
            rank: map.m(),
            target: epsilon,
        }),
    }
}

/// Smallest truncation whose landmark reconstruction is within `epsilon`.
pub fn estimate_spectrum_decay(kernel: &SymmetricKernel, landmarks: &[Point], epsilon: f64) -> Result<SpectrumDecay> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let map = NystromFeatureMap::new(kernel.clone(), landmarks.to_vec())?;
    decay_from_map(&map, epsilon)
}

/// `max_{i < d, x} |phi_i(x)|`, the empirical eigenfunction bound.
pub fn estimate_eigenfunction_bound(map: &NystromFeatureMap, eval_points: &[Point]) -> Result<f64> {
    if eval_points.is_empty() {
        return Err(invalid("eigenfunction bound needs evaluation points"));
    }
    Ok(eval_points
        .par_iter()
        .map(|x| map.features(x).iter().fold(0.0, |a: f64, v| a.max(v.abs())))
        .reduce(|| 0.0, f64::max))
}

/// Lattice landmarks when the count fills a 1-D or 2-D lattice exactly,
/// Halton points otherwise.
pub fn default_landmarks(domain: &BoxDomain, m: usize) -> Vec<Point> {
    match domain.dim() {
        1 => lattice(domain, &[m]),
        2 => {
            let side = (m as f64).sqrt().round() as usize;
            if side * side == m && side >= 2 {
                lattice(domain, &[side, side])
            } else {
                domain.halton_points(1, m)
            }
        }
        _ => domain.halton_points(1, m),
    }
}

#[derive(Debug, Clone)]
pub struct SymmetricOptions {
    pub held_out_pairs: usize,
    pub seed: u64,
    /// Overrides [`default_landmarks`].
    pub landmarks: Option<Vec<Point>>,
}

impl Default for SymmetricOptions {
    fn default() -> Self {
        Self {
            held_out_pairs: 1000,
            seed: 0,
            landmarks: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SymmetricApproximation {
    pub map: NystromFeatureMap,
    pub decay: SpectrumDecay,
    pub held_out_error: f64,
    pub held_out_rms: f64,
    pub held_out_pairs: usize,
}

/// Nystrom features truncated at the spectrum decay for `epsilon / 2`,
/// certified on seeded held-out pairs to be within `epsilon`.
pub fn build_symmetric_features(
    kernel: &SymmetricKernel,
    domain: &BoxDomain,
    epsilon: f64,
    m: usize,
    opts: &SymmetricOptions,
) -> Result<SymmetricApproximation> {
    build_symmetric_inner(kernel, None, domain, epsilon, m, opts)
}

/// [`build_symmetric_features`] for a registry kernel, keeping the id so
/// the map can be serialized.
pub fn build_symmetric_features_for(
    id: &KernelId,
    domain: &BoxDomain,
    epsilon: f64,
    m: usize,
    opts: &SymmetricOptions,
) -> Result<SymmetricApproximation> {
    build_symmetric_inner(&id.kernel(), Some(id.clone()), domain, epsilon, m, opts)
}

fn build_symmetric_inner(
    kernel: &SymmetricKernel,
    id: Option<KernelId>,
    domain: &BoxDomain,
    epsilon: f64,
    m: usize,
    opts: &SymmetricOptions,
) -> Result<SymmetricApproximation> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if m < 2 {
        return Err(invalid(format!("need at least two landmarks, got {m}")));
    }
    if opts.held_out_pairs == 0 {
        return Err(invalid("certification needs at least one held-out pair"));
    }
    let landmarks = opts.landmarks.clone().unwrap_or_else(|| default_landmarks(domain, m));
    let mut map = NystromFeatureMap::new(kernel.clone(), landmarks)?;
    map.kernel_id = id;
    let decay = decay_from_map(&map, epsilon / 2.0)?;
    let map = map.with_truncation(decay.d);

    let mut g = rng(opts.seed);
    let pairs: Vec<(Point, Point)> = (0..opts.held_out_pairs)
        .map(|_| {
            (
                uniform_point(&mut g, domain.lower(), domain.upper()),
                uniform_point(&mut g, domain.lower(), domain.upper()),
            )
        })
        .collect();
    let errs: Vec<f64> = pairs
        .par_iter()
        .map(|(x, y)| (kernel.eval(x, y) - map.eval(x, y)).abs())
        .collect();
    let sup = errs.iter().cloned().fold(0.0, f64::max);
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    if sup > epsilon {
        return Err(Error::Certification {
            measured: sup,
            target: epsilon,
        });
    }
    Ok(SymmetricApproximation {
        map,
        decay,
        held_out_error: sup,
        held_out_rms: rms,
        held_out_pairs: pairs.len(),
    })
}

/// An order-of-magnitude neuron count with the constant inside the big-O
/// suppressed. `value` is `+inf` when the count overflows f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub value: f64,
    pub ln_value: f64,
}

impl Budget {
    pub fn overflowed(&self) -> bool {
        self.value.is_infinite()
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `d_r * (4 C d_r L / epsilon)^dim` for shallow ReLU networks.
pub fn neuron_budget_relu(d_r: usize, c: f64, l: f64, epsilon: f64, dim: usize) -> Result<Budget> {
    if d_r == 0 || dim == 0 {
        return Err(invalid("d_r and dim must be positive"));
    }
    require_positive("C", c)?;
    require_positive("L", l)?;
    require_positive("epsilon", epsilon)?;
    let base = 4.0 * c * d_r as f64 * l / epsilon;
    let value = d_r as f64 * base.powi(dim as i32);
    let ln_value = (d_r as f64).ln() + dim as f64 * base.ln();
    Ok(Budget { value, ln_value })
}

/// `d_r^3 (C radius B)^2 / epsilon^2` for shallow sigmoid networks with
/// Barron-smooth eigenfunctions.
pub fn neuron_budget_barron(d_r: usize, c: f64, radius: f64, b: f64, epsilon: f64) -> Result<f64> {
    if d_r == 0 {
        return Err(invalid("d_r must be positive"));
    }
    for (name, v) in [("C", c), ("radius", radius), ("B", b), ("epsilon", epsilon)] {
        require_positive(name, v)?;
    }
    let d = d_r as f64;
    Ok(d * d * d * (c * radius * b).powi(2) / (epsilon * epsilon))
}

/// A feature-pair series cut after `d` coordinates.
#[derive(Debug, Clone)]
pub struct TruncatedFeaturePair {
    pub d: usize,
    /// Measured truncation error plus the declared tail beyond the cap.
    pub residual: f64,
    pub pair: FeaturePair,
}

impl TruncatedFeaturePair {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.pair.eval_truncated(x, y, self.d)
    }
}

/// Truncation error `max |sum_{i < cap} - sum_{i < d}| + tail_bound` for every
/// `d` in `0..=cap`.
pub fn truncation_residuals(fp: &FeaturePair, eval_pairs: &[(Point, Point)]) -> Vec<f64> {
    let cap = fp.cap();
    let per_pair: Vec<Vec<f64>> = eval_pairs
        .par_iter()
        .map(|(x, y)| {
            let terms: Vec<f64> = fp.phi(x).iter().zip(fp.phi_star(y)).map(|(a, b)| a * b).collect();
            let full: f64 = terms.iter().sum();
            let mut partial = 0.0;
            let mut out = Vec::with_capacity(cap + 1);
            out.push(full.abs());
            for t in &terms {
                partial += t;
                out.push((full - partial).abs());
            }
            out
        })
        .collect();
    (0..=cap)
        .map(|d| per_pair.iter().map(|r| r[d]).fold(0.0, f64::max) + fp.tail_bound())
        .collect()
}

/// Smallest `d >= 1` whose truncation stays within `epsilon / 2`.
pub fn truncate_feature_pair(
    fp: &FeaturePair,
    eval_pairs: &[(Point, Point)],
    epsilon: f64,
) -> Result<TruncatedFeaturePair> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if eval_pairs.is_empty() {
        return Err(invalid("truncation needs evaluation pairs"));
    }
    let residuals = truncation_residuals(fp, eval_pairs);
    let target = epsilon / 2.0;
    match (1..=fp.cap()).find(|&d| residuals[d] <= target) {
        Some(d) => Ok(TruncatedFeaturePair {
            d,
            residual: residuals[d],
            pair: fp.clone(),
        }),
        None => Err(Error::TailTooHeavy {
            residual: residuals[fp.cap()],
            cap: fp.cap(),
            target,
        }),
    }
}
