//! Voronoi quantization and the explicit two-layer threshold network that
//! one-hot encodes Voronoi cell membership.
//!
//! For landmarks `x_1..x_n` the first layer has one unit per ordered pair
//! `(k, j)`, `k != j`, firing when `x` is at least as close to `x_k` as to
//! `x_j`:
//!
//! ```text
//! z_kj(x) = step(<x_k - x_j, x> - 0.5 <x_k - x_j, x_k + x_j>)
//! ```
//!
//! Second-layer unit `k` sums its `n - 1` first-layer units and fires when
//! the sum reaches the bias `n - 1`, i.e. when `x` lies in the closed cell of
//! `x_k`. First-layer weights are never stored; they are recomputed from the
//! landmarks on demand.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numfmt::points_sig17;
use crate::relation::{dist2, dot, lattice, BoxDomain, Point};

/// Default upper bound on the number of Voronoi cells.
pub const DEFAULT_LANDMARK_CAP: usize = 100_000;

/// Default steepness of the sigmoid surrogate of the step function.
pub const DEFAULT_SIGMOID_BETA: f64 = 1e4;

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    HardThreshold,
    /// `1 / (1 + exp(-beta_act * t))` in place of `1{t >= 0}`.
    Sigmoid { beta_act: f64 },
}

impl Activation {
    pub fn sigmoid() -> Self {
        Self::Sigmoid {
            beta_act: DEFAULT_SIGMOID_BETA,
        }
    }
}

/// Regular lattice whose Voronoi cells all have diameter at most `delta`.
///
/// Axis `i` gets `ceil(sqrt(dim) * width_i / delta) + 1` points, so the
/// spacing is at most `delta / sqrt(dim)` and every point of the box lies
/// within `delta / 2` of a landmark. When `delta` covers the whole diameter a
/// single landmark at the center is returned.
pub fn place_landmarks(domain: &BoxDomain, delta: f64, cap: usize) -> Result<Vec<Point>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("delta must be positive and finite, got {delta}")));
    }
    if delta >= domain.diameter() {
        return Ok(vec![domain.center()]);
    }
    let counts = lattice_counts(domain, delta);
    let n: f64 = counts.iter().map(|&c| c as f64).product();
    if n > cap as f64 {
        return Err(Error::LandmarkBudget { delta, n, cap });
    }
    Ok(lattice(domain, &counts))
}

/// Landmark count [`place_landmarks`] would produce, without building them.
pub fn landmark_count(domain: &BoxDomain, delta: f64) -> f64 {
    if delta >= domain.diameter() {
        return 1.0;
    }
    lattice_counts(domain, delta).iter().map(|&c| c as f64).product()
}

fn lattice_counts(domain: &BoxDomain, delta: f64) -> Vec<usize> {
    let root_dim = (domain.dim() as f64).sqrt();
    domain
        .widths()
        .iter()
        .map(|w| (root_dim * w / delta).ceil().min(1e15) as usize + 1)
        .collect()
}

/// Index of the landmark nearest to `x`; ties go to the lowest index.
pub fn quantize(landmarks: &[Point], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, l) in landmarks.iter().enumerate() {
        let d = dist2(l, x);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Difference between the second-smallest and smallest landmark distance.
/// Points with a tiny gap sit near a Voronoi boundary.
pub fn distance_gap(landmarks: &[Point], x: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::INFINITY, f64::INFINITY);
    for l in landmarks {
        let d = dist2(l, x).sqrt();
        if d < first {
            second = first;
            first = d;
        } else if d < second {
            second = d;
        }
    }
    second - first
}

/// The two-layer Voronoi indicator network.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorNetwork {
    landmarks: Vec<Point>,
    dim: usize,
    activation: Activation,
    max_sq_norm: f64,
}

/// Validates the landmarks and wires the network.
pub fn build_indicator_network(landmarks: Vec<Point>, activation: Activation) -> Result<IndicatorNetwork> {
    IndicatorNetwork::new(landmarks, activation)
}

impl IndicatorNetwork {
    pub fn new(landmarks: Vec<Point>, activation: Activation) -> Result<Self> {
        let Some(first) = landmarks.first() else {
            return Err(invalid("indicator network needs at least one landmark"));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(invalid("landmarks must have at least one coordinate"));
        }
        if let Some(i) = landmarks.iter().position(|l| l.len() != dim || l.iter().any(|c| !c.is_finite())) {
            return Err(invalid(format!("landmark {i} is malformed: {:?}", landmarks[i])));
        }
        if let Activation::Sigmoid { beta_act } = activation {
            if !(beta_act > 0.0 && beta_act.is_finite()) {
                return Err(invalid(format!("sigmoid steepness must be positive, got {beta_act}")));
            }
        }
        let mut order: Vec<usize> = (0..landmarks.len()).collect();
        order.sort_by(|&a, &b| {
            landmarks[a]
                .iter()
                .zip(&landmarks[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if landmarks[w[0]] == landmarks[w[1]] {
                let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(invalid(format!("landmarks {a} and {b} coincide at {:?}", landmarks[a])));
            }
        }
        let max_sq_norm = landmarks.iter().map(|l| dot(l, l)).fold(0.0, f64::max);
        Ok(Self {
            landmarks,
            dim,
            activation,
            max_sq_norm,
        })
    }

    pub fn landmarks(&self) -> &[Point] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of first-layer units, `n (n - 1)`.
    pub fn first_layer_width(&self) -> usize {
        self.len() * (self.len() - 1)
    }

    /// Weight vector and bias of first-layer unit `(k, j)`.
    pub fn first_layer_unit(&self, k: usize, j: usize) -> (Vec<f64>, f64) {
        assert!(k != j, "first-layer units pair distinct landmarks");
        let (xk, xj) = (&self.landmarks[k], &self.landmarks[j]);
        let w: Vec<f64> = xk.iter().zip(xj).map(|(a, b)| a - b).collect();
        let s: Vec<f64> = xk.iter().zip(xj).map(|(a, b)| a + b).collect();
        let b = 0.5 * dot(&w, &s);
        (w, b)
    }

    /// Bias of every second-layer unit.
    pub fn second_layer_bias(&self) -> f64 {
        (self.len() - 1) as f64
    }

    /// Preactivation `<w_kj, x> - b_kj` of first-layer unit `(k, j)`.
    fn preactivation(&self, k: usize, j: usize, x: &[f64]) -> f64 {
        let (xk, xj) = (&self.landmarks[k], &self.landmarks[j]);
        let mut wx = 0.0;
        let mut ws = 0.0;
        for ((a, b), c) in xk.iter().zip(xj).zip(x) {
            let w = a - b;
            wx += w * c;
            ws += w * (a + b);
        }
        wx - 0.5 * ws
    }

    /// Whether second-layer unit `k` fires under the step activation: all of
    /// its `n - 1` inputs must fire, so the check stops at the first miss.
    fn cell_fires(&self, k: usize, x: &[f64]) -> bool {
        (0..self.len()).all(|j| j == k || self.preactivation(k, j, x) >= 0.0)
    }

    fn satisfied_count(&self, k: usize, x: &[f64]) -> usize {
        (0..self.len()).filter(|&j| j != k && self.preactivation(k, j, x) >= 0.0).count()
    }

    /// Cells that can fire at `x`, in index order. A firing cell `k` satisfies
    /// its unit against the nearest landmark, so its squared distance exceeds
    /// the minimum by rounding error at most; everything else is skipped.
    fn candidates(&self, x: &[f64]) -> Vec<usize> {
        let d: Vec<f64> = self.landmarks.iter().map(|l| dist2(l, x)).collect();
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let scale = 1.0 + dot(x, x) + self.max_sq_norm;
        let tol = 1e-9 * scale;
        (0..self.len()).filter(|&k| d[k] <= min + tol).collect()
    }

    /// Step-activation output before tie-breaking: `true` for every cell whose
    /// closed Voronoi region contains `x`.
    pub fn eval_lit(&self, x: &[f64]) -> Vec<bool> {
        let mut out = vec![false; self.len()];
        let mut any = false;
        for k in self.candidates(x) {
            if self.cell_fires(k, x) {
                out[k] = true;
                any = true;
            }
        }
        if !any {
            out[self.fallback_cell(x)] = true;
        }
        out
    }

    /// Cell chosen after tie-breaking (lowest lit index).
    pub fn active_cell(&self, x: &[f64]) -> usize {
        self.candidates(x)
            .into_iter()
            .find(|&k| self.cell_fires(k, x))
            .unwrap_or_else(|| self.fallback_cell(x))
    }

    // Rounding within a few ulps of a boundary can leave every cell one unit
    // short; the cell with the most satisfied units wins then.
    fn fallback_cell(&self, x: &[f64]) -> usize {
        let mut best = (0, 0);
        for k in 0..self.len() {
            let c = self.satisfied_count(k, x);
            if c > best.1 {
                best = (k, c);
            }
        }
        best.0
    }

    /// Network output at `x`. Under the step activation this is the one-hot
    /// code of [`Self::active_cell`]; under the sigmoid surrogate every
    /// coordinate lies in (0, 1).
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::HardThreshold => {
                let mut out = vec![0.0; self.len()];
                out[self.active_cell(x)] = 1.0;
                out
            }
            Activation::Sigmoid { beta_act } => self.eval_sigmoid(x, beta_act),
        }
    }

    // The surrogate shifts the second-layer threshold by one half, which
    // leaves the integer-count step decision unchanged while keeping the
    // winning cell away from sigmoid(0) = 1/2.
    fn eval_sigmoid(&self, x: &[f64], beta: f64) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|k| {
                let sum: f64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| sigmoid(beta * self.preactivation(k, j, x)))
                    .sum();
                sigmoid(beta * (sum - (self.second_layer_bias() - 0.5)))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    pub(crate) fn to_doc(&self) -> NetworkDoc {
        let (activation, beta_act) = match self.activation {
            Activation::HardThreshold => ("hard_threshold".to_string(), None),
            Activation::Sigmoid { beta_act } => ("sigmoid".to_string(), Some(beta_act)),
        };
        NetworkDoc {
            version: NETWORK_FORMAT_VERSION,
            dim: self.dim,
            landmarks: self.landmarks.clone(),
            activation,
            beta_act,
        }
    }

    pub(crate) fn from_doc(doc: NetworkDoc) -> Result<Self> {
        if doc.version != NETWORK_FORMAT_VERSION {
            return Err(invalid(format!("unsupported network format version {}", doc.version)));
        }
        let activation = match (doc.activation.as_str(), doc.beta_act) {
            ("hard_threshold", _) => Activation::HardThreshold,
            ("sigmoid", Some(beta_act)) => Activation::Sigmoid { beta_act },
            ("sigmoid", None) => Activation::sigmoid(),
            (other, _) => return Err(invalid(format!("unknown activation {other:?}"))),
        };
        let net = Self::new(doc.landmarks, activation)?;
        if net.dim != doc.dim {
            return Err(invalid(format!("declared dim {} but landmarks have dim {}", doc.dim, net.dim)));
        }
        Ok(net)
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct NetworkDoc {
    pub version: u32,
    pub dim: usize,
    #[serde(serialize_with = "points_sig17::serialize")]
    pub landmarks: Vec<Point>,
    pub activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_act: Option<f64>,
}
