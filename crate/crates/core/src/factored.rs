//! Inner-product factorizations `r(x, y) ~ <P eta(x), Q eta(y)>` over the
//! Voronoi code `eta` of a landmark lattice.
//!
//! A finite relation matrix `R` is split as `R = P^T Q` through its singular
//! value decomposition. For a continuous relation the landmarks are chosen so
//! that quantizing both arguments costs at most `epsilon / 2`, and the
//! factorization is truncated so that it costs at most another `epsilon / 2`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::Array2;
use ndarray_linalg::SVD;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numfmt::vec_f64_sig17;
use crate::quantizer::{
    distance_gap, place_landmarks, Activation, IndicatorNetwork, NetworkDoc, DEFAULT_LANDMARK_CAP,
};
use crate::relation::{modulus_of_continuity, rms_error_by, sup_error_by, BoxDomain, Point, RelationSpec};
use crate::sequence::{halton, rng, uniform_point};

pub const FACTORED_FORMAT_VERSION: u32 = 1;

/// Minimum distance gap for held-out evaluation points; closer points are
/// treated as lying on a Voronoi boundary.
pub const BOUNDARY_GAP: f64 = 1e-6;

/// Largest landmark count whose dense relation matrix is factored. Beyond it
/// the `n x n` matrix and its SVD no longer fit a desktop machine.
pub const DEFAULT_DENSE_CAP: usize = 8192;

/// `R ~ P^T Q` with `P, Q` of shape `m x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Singular values of `R`, descending, including the discarded ones.
    pub singular_values: Vec<f64>,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.p.nrows()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.p.transpose() * &self.q
    }
}

struct SortedSvd {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    sigma: Vec<f64>,
}

impl SortedSvd {
    // LAPACK rather than nalgebra: nalgebra 0.35 returns orthogonal but
    // inconsistent factors for some rank-deficient inputs.
    fn new(r: &DMatrix<f64>) -> Result<Self> {
        let (u, sigma, vt) = to_array(r)
            .svd(true, true)
            .map_err(|e| invalid(format!("SVD failed: {e}")))?;
        let (Some(u), Some(vt)) = (u, vt) else {
            return Err(invalid("SVD returned no singular vectors"));
        };
        let k = sigma.len();
        Ok(Self {
            u: DMatrix::from_fn(r.nrows(), k, |i, j| u[(i, j)]),
            v: DMatrix::from_fn(r.ncols(), k, |i, j| vt[(j, i)]),
            sigma: sigma.to_vec(),
        })
    }

    /// Keeps the singular triplets with `sigma_k > threshold`;
    /// `P = S^{1/2} U^T`, `Q = S^{1/2} V^T`.
    fn truncate(&self, threshold: f64) -> Factorization {
        let m = self.sigma.iter().take_while(|&&s| s > threshold).count();
        let n_rows = self.u.nrows();
        let n_cols = self.v.nrows();
        let mut p = DMatrix::zeros(m, n_rows);
        let mut q = DMatrix::zeros(m, n_cols);
        for k in 0..m {
            let root = self.sigma[k].sqrt();
            for i in 0..n_rows {
                p[(k, i)] = root * self.u[(i, k)];
            }
            for j in 0..n_cols {
                q[(k, j)] = root * self.v[(j, k)];
            }
        }
        Factorization {
            p,
            q,
            singular_values: self.sigma.clone(),
        }
    }
}

fn to_array(r: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn(r.shape(), |(i, j)| r[(i, j)])
}

/// Rank decomposition of a finite relation matrix.
///
/// Singular values with `sigma_k <= tol * sigma_1` are dropped. `tol = 0`
/// selects the machine-precision threshold `max(rows, cols) * EPS * sigma_1`.
pub fn decompose_relation_matrix(r: &DMatrix<f64>, tol: f64) -> Result<Factorization> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(invalid("relation matrix has non-finite entries"));
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(invalid(format!("tolerance must be finite and nonnegative, got {tol}")));
    }
    if r.is_empty() {
        return Err(invalid("relation matrix is empty"));
    }
    let svd = SortedSvd::new(r)?;
    let sigma1 = svd.sigma.first().copied().unwrap_or(0.0);
    let rel = if tol == 0.0 {
        r.nrows().max(r.ncols()) as f64 * f64::EPSILON
    } else {
        tol
    };
    Ok(svd.truncate(rel * sigma1))
}

/// Numerical rank: number of singular values above `rel * sigma_1`.
pub fn numerical_rank(r: &DMatrix<f64>, rel: f64) -> usize {
    let sv = r.clone().singular_values();
    let s1 = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel * s1).count()
}

/// `phi = P . eta` and `psi = Q . eta` sharing one indicator network.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredRelation {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    net: IndicatorNetwork,
}

impl FactoredRelation {
    pub fn new(p: DMatrix<f64>, q: DMatrix<f64>, net: IndicatorNetwork) -> Result<Self> {
        if p.shape() != q.shape() || p.ncols() != net.len() {
            return Err(invalid(format!(
                "P is {:?}, Q is {:?}, network has {} cells",
                p.shape(),
                q.shape(),
                net.len()
            )));
        }
        Ok(Self { p, q, net })
    }

    /// Inner dimension `m`.
    pub fn rank(&self) -> usize {
        self.p.nrows()
    }

    pub fn landmark_count(&self) -> usize {
        self.net.len()
    }

    pub fn network(&self) -> &IndicatorNetwork {
        &self.net
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    fn encode(&self, mat: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
        match self.net.activation() {
            Activation::HardThreshold => mat.column(self.net.active_cell(x)).iter().copied().collect(),
            Activation::Sigmoid { .. } => {
                let code = self.net.eval(x);
                (0..mat.nrows())
                    .map(|k| (0..mat.ncols()).map(|i| mat[(k, i)] * code[i]).sum())
                    .collect()
            }
        }
    }

    /// Query-side features `P eta(x)`.
    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        self.encode(&self.p, x)
    }

    /// Key-side features `Q eta(y)`.
    pub fn psi(&self, y: &[f64]) -> Vec<f64> {
        self.encode(&self.q, y)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        if let Activation::HardThreshold = self.net.activation() {
            let (i, j) = (self.net.active_cell(x), self.net.active_cell(y));
            return self.p.column(i).dot(&self.q.column(j));
        }
        self.phi(x).iter().zip(self.psi(y)).map(|(a, b)| a * b).sum()
    }

    /// `P^T Q`, the relation restricted to landmark pairs.
    pub fn table(&self) -> DMatrix<f64> {
        self.p.transpose() * &self.q
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&FactoredDoc {
            version: FACTORED_FORMAT_VERSION,
            p: row_major(&self.p),
            q: row_major(&self.q),
            m: self.rank(),
            indicator_network: self.net.to_doc(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FactoredDoc = serde_json::from_str(text)?;
        if doc.version != FACTORED_FORMAT_VERSION {
            return Err(invalid(format!("unsupported factored relation version {}", doc.version)));
        }
        let net = IndicatorNetwork::from_doc(doc.indicator_network)?;
        let n = net.len();
        if doc.p.len() != doc.m * n || doc.q.len() != doc.m * n {
            return Err(invalid(format!("matrix sizes do not match m = {} and n = {n}", doc.m)));
        }
        Self::new(
            DMatrix::from_row_slice(doc.m, n, &doc.p),
            DMatrix::from_row_slice(doc.m, n, &doc.q),
            net,
        )
    }
}

/// `<P eta(x), Q eta(y)>`.
pub fn eval_factored(fr: &FactoredRelation, x: &[f64], y: &[f64]) -> f64 {
    fr.eval(x, y)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[derive(Serialize, Deserialize)]
struct FactoredDoc {
    version: u32,
    #[serde(rename = "P", serialize_with = "vec_f64_sig17::serialize")]
    p: Vec<f64>,
    #[serde(rename = "Q", serialize_with = "vec_f64_sig17::serialize")]
    q: Vec<f64>,
    m: usize,
    indicator_network: NetworkDoc,
}

#[derive(Debug, Clone)]
pub struct AsymmetricOptions {
    pub landmark_cap: usize,
    /// See [`DEFAULT_DENSE_CAP`].
    pub dense_cap: usize,
    /// Probe pairs used to estimate the modulus of continuity.
    pub probe_pairs: usize,
    pub bisection_steps: usize,
    pub activation: Activation,
}

impl Default for AsymmetricOptions {
    fn default() -> Self {
        Self {
            landmark_cap: DEFAULT_LANDMARK_CAP,
            dense_cap: DEFAULT_DENSE_CAP,
            probe_pairs: 256,
            bisection_steps: 30,
            activation: Activation::HardThreshold,
        }
    }
}

/// A certified-by-construction factored relation plus the quantities chosen
/// while building it.
#[derive(Debug, Clone)]
pub struct AsymmetricApproximation {
    pub relation: FactoredRelation,
    pub epsilon: f64,
    /// Cell diameter bound of the landmark lattice.
    pub delta: f64,
    /// Empirical modulus of continuity at `delta`.
    pub modulus: f64,
    /// `max |R - P^T Q|` over landmark pairs.
    pub factor_residual: f64,
}

impl AsymmetricApproximation {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.relation.eval(x, y)
    }
}

/// Halton probe pairs covering `domain x domain`.
pub fn probe_pairs(domain: &BoxDomain, count: usize) -> Vec<(Point, Point)> {
    let dim = domain.dim();
    (1..=count as u64)
        .map(|i| {
            let h = halton(i, 2 * dim);
            (domain.from_unit(&h[..dim]), domain.from_unit(&h[dim..]))
        })
        .collect()
}

/// Largest `delta` found by bisection with empirical modulus at most `target`.
pub fn calibrate_delta(
    r: &RelationSpec,
    domain: &BoxDomain,
    target: f64,
    probes: &[(Point, Point)],
    steps: usize,
) -> Result<(f64, f64)> {
    let diameter = domain.diameter();
    let at_full = modulus_of_continuity(r, probes, diameter)?;
    if at_full <= target {
        return Ok((diameter, at_full));
    }
    let (mut lo, mut hi) = (0.0, diameter);
    let (mut lo_mod, mut hi_mod) = (0.0, at_full);
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let m = modulus_of_continuity(r, probes, mid)?;
        if m <= target {
            lo = mid;
            lo_mod = m;
        } else {
            hi = mid;
            hi_mod = m;
        }
    }
    if lo == 0.0 {
        return Err(Error::ContinuityViolation {
            modulus: hi_mod,
            target,
            delta: hi,
            steps,
        });
    }
    Ok((lo, lo_mod))
}

/// Samples `R_ij = r(x_i, x_j)` over the landmarks.
pub fn relation_matrix(r: &RelationSpec, landmarks: &[Point]) -> DMatrix<f64> {
    let n = landmarks.len();
    let rows: Vec<Vec<f64>> = landmarks
        .par_iter()
        .map(|x| landmarks.iter().map(|y| r.eval(x, y)).collect())
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Builds `phi = P . eta`, `psi = Q . eta` with `|r - <phi, psi>| <= epsilon`
/// away from Voronoi boundaries, splitting the budget evenly between
/// quantization and factorization.
pub fn build_asymmetric_approximator(
    r: &RelationSpec,
    domain: &BoxDomain,
    epsilon: f64,
    opts: &AsymmetricOptions,
) -> Result<AsymmetricApproximation> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    let probes = probe_pairs(domain, opts.probe_pairs);
    let (delta, modulus) = calibrate_delta(r, domain, epsilon / 2.0, &probes, opts.bisection_steps)?;
    let landmarks = place_landmarks(domain, delta, opts.landmark_cap)?;
    let mut approx = factor_on_landmarks(r, landmarks, epsilon / 2.0, opts)?;
    approx.epsilon = epsilon;
    approx.delta = delta;
    approx.modulus = modulus;
    Ok(approx)
}

/// Same construction at a caller-chosen cell diameter, skipping the
/// continuity calibration. The factorization still keeps its residual below
/// `factor_budget`.
pub fn build_at_delta(
    r: &RelationSpec,
    domain: &BoxDomain,
    delta: f64,
    factor_budget: f64,
    opts: &AsymmetricOptions,
) -> Result<AsymmetricApproximation> {
    let landmarks = place_landmarks(domain, delta, opts.landmark_cap)?;
    let probes = probe_pairs(domain, opts.probe_pairs);
    let modulus = modulus_of_continuity(r, &probes, delta)?;
    let mut approx = factor_on_landmarks(r, landmarks, factor_budget, opts)?;
    approx.epsilon = modulus + factor_budget;
    approx.delta = delta;
    approx.modulus = modulus;
    Ok(approx)
}

fn factor_on_landmarks(
    r: &RelationSpec,
    landmarks: Vec<Point>,
    factor_budget: f64,
    opts: &AsymmetricOptions,
) -> Result<AsymmetricApproximation> {
    if landmarks.len() > opts.dense_cap {
        return Err(Error::BudgetExceeded {
            what: "dense relation matrix (landmarks)",
            requested: landmarks.len() as f64,
            cap: opts.dense_cap as f64,
        });
    }
    let sampled = relation_matrix(r, &landmarks);
    if sampled.iter().any(|v| !v.is_finite()) {
        return Err(invalid("relation produced non-finite values on the landmarks"));
    }
    // The largest entry of a matrix is bounded by its spectral norm, so
    // dropping every singular value <= factor_budget keeps the max residual
    // within the factorization budget.
    let factors = SortedSvd::new(&sampled)?.truncate(factor_budget);
    let residual = (&sampled - factors.reconstruct()).amax();
    let net = IndicatorNetwork::new(landmarks, opts.activation)?;
    Ok(AsymmetricApproximation {
        relation: FactoredRelation::new(factors.p, factors.q, net)?,
        epsilon: 2.0 * factor_budget,
        delta: 0.0,
        modulus: 0.0,
        factor_residual: residual,
    })
}

/// Seeded held-out pairs whose points all sit at least [`BOUNDARY_GAP`] away
/// from every Voronoi boundary of `landmarks`.
pub fn held_out_pairs(domain: &BoxDomain, landmarks: &[Point], count: usize, seed: u64) -> Vec<(Point, Point)> {
    let mut g = rng(seed);
    let mut draw = || loop {
        let x = uniform_point(&mut g, domain.lower(), domain.upper());
        if distance_gap(landmarks, &x) > BOUNDARY_GAP {
            return x;
        }
    };
    (0..count).map(|_| (draw(), draw())).collect()
}

/// Held-out sup and RMS error of an approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOutError {
    pub sup: f64,
    pub rms: f64,
    pub pairs: usize,
}

pub fn held_out_error<F>(r: &RelationSpec, approx: F, pairs: &[(Point, Point)]) -> Result<HeldOutError>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    Ok(HeldOutError {
        sup: sup_error_by(|x, y| r.eval(x, y), &approx, pairs)?,
        rms: rms_error_by(|x, y| r.eval(x, y), &approx, pairs)?,
        pairs: pairs.len(),
    })
}

type FilterFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// `(x, y) -> <phi(xi(x)), psi(xi(y))>` for a supplied feature filter `xi`.
#[derive(Clone)]
pub struct ComposedRelation {
    pub inner: AsymmetricApproximation,
    filter: Arc<FilterFn>,
    feature_box: BoxDomain,
}

impl ComposedRelation {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.inner.eval(&(self.filter)(x), &(self.filter)(y))
    }

    /// Like [`Self::eval`], but rejects inputs whose features leave the box.
    pub fn try_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let fx = self.checked_filter(x)?;
        let fy = self.checked_filter(y)?;
        Ok(self.inner.eval(&fx, &fy))
    }

    fn checked_filter(&self, x: &[f64]) -> Result<Vec<f64>> {
        let image = (self.filter)(x);
        if !self.feature_box.contains(&image) {
            return Err(Error::DomainViolation {
                point: x.to_vec(),
                image,
            });
        }
        Ok(image)
    }

    pub fn landmark_count(&self) -> usize {
        self.inner.relation.landmark_count()
    }
}

impl fmt::Debug for ComposedRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComposedRelation")
            .field("landmarks", &self.landmark_count())
            .field("feature_box", &self.feature_box)
            .finish()
    }
}

/// Factors `r_bar` on the low-dimensional feature box and composes it with
/// the filter. The filter image is checked on `probe_count` Halton points of
/// the ambient domain.
pub fn build_compositional_approximator(
    r_bar: &RelationSpec,
    filter: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    feature_box: &BoxDomain,
    ambient: &BoxDomain,
    epsilon: f64,
    probe_count: usize,
    opts: &AsymmetricOptions,
) -> Result<ComposedRelation> {
    let composed = ComposedRelation {
        inner: build_asymmetric_approximator(r_bar, feature_box, epsilon, opts)?,
        filter: Arc::new(filter),
        feature_box: feature_box.clone(),
    };
    let mut probes = vec![ambient.lower().to_vec(), ambient.upper().to_vec()];
    probes.extend(ambient.halton_points(1, probe_count));
    for p in &probes {
        composed.checked_filter(p)?;
    }
    Ok(composed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::quantize;
    use crate::relation::sample_grid;
    use proptest::prelude::*;
    use rand::Rng;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn identity_factorization() {
        let r = DMatrix::<f64>::identity(2, 2);
        let f = decompose_relation_matrix(&r, 0.0).unwrap();
        assert_eq!(f.rank(), 2);
        assert!(max_abs(&(f.reconstruct() - &r)) < 1e-15);
    }

    #[test]
    fn rank_one_detected() {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let f = decompose_relation_matrix(&r, 1e-12).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.singular_values[0] - 5.0).abs() < 1e-12);
        assert!(max_abs(&(f.reconstruct() - &r)) < 1e-12);
    }

    #[test]
    fn antisymmetric_rotation_is_representable() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let f = decompose_relation_matrix(&r, 0.0).unwrap();
        assert_eq!(f.rank(), 2);
        assert!(max_abs(&(f.reconstruct() - &r)) < 1e-15);
        // no symmetric Gram P^T P can equal an antisymmetric nonzero matrix
        assert!(max_abs(&(f.p.transpose() * &f.p - &r)) > 0.5);
    }

    #[test]
    fn rank_deficient_products_reconstruct() {
        let mut g = rng(3);
        for _ in 0..50 {
            let k = g.random_range(1..=4);
            let (rows, cols) = (g.random_range(1..=40), g.random_range(1..=40));
            let a = DMatrix::from_fn(k, rows, |_, _| g.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(k, cols, |_, _| g.random_range(-1.0..1.0));
            let r = a.transpose() * b;
            let f = decompose_relation_matrix(&r, 0.0).unwrap();
            assert!(f.rank() <= k);
            assert!(max_abs(&(f.reconstruct() - &r)) <= 1e-12 * max_abs(&r));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let r = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(decompose_relation_matrix(&r, 0.0), Err(Error::InvalidArgument(_))));
    }

    fn sine() -> RelationSpec {
        RelationSpec::black_box(|x, y| (3.0 * (x[0] - y[0])).sin())
    }

    #[test]
    fn constant_relation_needs_one_cell() {
        let c = RelationSpec::constant(0.7);
        let a = build_asymmetric_approximator(&c, &BoxDomain::unit(1), 0.05, &Default::default()).unwrap();
        assert_eq!(a.relation.landmark_count(), 1);
        assert_eq!(a.relation.rank(), 1);
        assert!((a.eval(&[0.1], &[0.9]) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn difference_relation_within_epsilon() {
        let r = RelationSpec::black_box(|x, y| x[0] - y[0]);
        let d = BoxDomain::unit(1);
        let a = build_asymmetric_approximator(&r, &d, 0.2, &Default::default()).unwrap();
        assert!(a.delta <= 0.05 + 1e-9, "delta {}", a.delta);
        assert!(a.factor_residual <= 0.1);
        let pairs: Vec<_> = crate::relation::all_pairs(
            &(0..200).map(|i| vec![(i as f64 + 0.5) / 200.0]).collect::<Vec<_>>(),
        )
        .into_iter()
        .filter(|(x, y)| {
            let l = a.relation.network().landmarks();
            distance_gap(l, x) > BOUNDARY_GAP && distance_gap(l, y) > BOUNDARY_GAP
        })
        .collect();
        let err = held_out_error(&r, |x, y| a.eval(x, y), &pairs).unwrap();
        assert!(err.sup <= 0.2, "{err:?}");
    }

    #[test]
    fn sine_relation_within_epsilon() {
        let d = BoxDomain::unit(1);
        let a = build_asymmetric_approximator(&sine(), &d, 0.1, &Default::default()).unwrap();
        let pairs = held_out_pairs(&d, a.relation.network().landmarks(), 1000, 3);
        let err = held_out_error(&sine(), |x, y| a.eval(x, y), &pairs).unwrap();
        assert!(err.sup <= 0.1, "{err:?}");
        assert!(err.rms <= err.sup);
    }

    #[test]
    fn on_landmark_lookup() {
        let d = BoxDomain::unit(1);
        let a = build_asymmetric_approximator(&sine(), &d, 0.1, &Default::default()).unwrap();
        let l = a.relation.network().landmarks();
        let r = relation_matrix(&sine(), l);
        let tol = a.factor_residual + 1e-12;
        for (i, j) in [(3, 7), (0, 0), (l.len() - 1, 2)] {
            assert!((a.eval(&l[i], &l[j]) - r[(i, j)]).abs() <= tol);
        }
        let table = a.relation.table();
        for i in 0..l.len() {
            for j in 0..l.len() {
                assert!((eval_factored(&a.relation, &l[i], &l[j]) - table[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_relation_cells() {
        let landmarks: Vec<Point> = (0..5).map(|i| vec![i as f64]).collect();
        let f = decompose_relation_matrix(&DMatrix::identity(5, 5), 0.0).unwrap();
        let net = IndicatorNetwork::new(landmarks, Activation::HardThreshold).unwrap();
        let fr = FactoredRelation::new(f.p, f.q, net).unwrap();
        assert!((fr.eval(&[2.1], &[1.8]) - 1.0).abs() < 1e-12);
        assert!(fr.eval(&[2.1], &[3.3]).abs() < 1e-12);
    }

    #[test]
    fn continuity_violation_for_jump() {
        // the first Halton probe sits on the jump, so every perturbation crosses it
        let step = RelationSpec::black_box(|x, _| (x[0] - 0.5).signum() * f64::from(x[0] != 0.5));
        let err = build_asymmetric_approximator(&step, &BoxDomain::unit(1), 0.1, &Default::default()).unwrap_err();
        assert!(matches!(err, Error::ContinuityViolation { .. }), "{err:?}");
    }

    #[test]
    fn dense_cap_reported() {
        let opts = AsymmetricOptions {
            dense_cap: 20,
            ..Default::default()
        };
        let r = RelationSpec::black_box(|x, y| (3.0 * (x[0] - y[0])).sin());
        let err = build_asymmetric_approximator(&r, &BoxDomain::unit(1), 0.1, &opts).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }), "{err:?}");
    }

    #[test]
    fn landmark_budget_reported() {
        let opts = AsymmetricOptions {
            landmark_cap: 50,
            ..Default::default()
        };
        let err = build_asymmetric_approximator(&sine(), &BoxDomain::unit(1), 0.01, &opts).unwrap_err();
        match err {
            Error::LandmarkBudget { delta, n, cap } => {
                assert!(delta > 0.0 && n > 50.0 && cap == 50);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn halving_epsilon_does_not_increase_error() {
        let d = BoxDomain::unit(1);
        let mut last = f64::INFINITY;
        for eps in [0.4, 0.2, 0.1, 0.05] {
            let a = build_asymmetric_approximator(&sine(), &d, eps, &Default::default()).unwrap();
            let pairs = held_out_pairs(&d, a.relation.network().landmarks(), 500, 17);
            let e = held_out_error(&sine(), |x, y| a.eval(x, y), &pairs).unwrap().sup;
            assert!(e <= last, "eps {eps}: {e} > {last}");
            last = e;
        }
    }

    #[test]
    fn one_hot_inputs_give_linear_maps() {
        // on canonical basis vectors the network code is the identity, so phi
        // and psi reduce to the columns of P and Q
        let r = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, 0.0, 3.0, 1.0, 2.0, 2.0, -1.0]);
        let f = decompose_relation_matrix(&r, 0.0).unwrap();
        let basis: Vec<Point> = (0..3).map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let net = IndicatorNetwork::new(basis.clone(), Activation::HardThreshold).unwrap();
        for (i, e) in basis.iter().enumerate() {
            assert_eq!(net.eval(e), basis[i]);
        }
        let fr = FactoredRelation::new(f.p.clone(), f.q.clone(), net).unwrap();
        for i in 0..3 {
            assert_eq!(fr.phi(&basis[i]), f.p.column(i).iter().copied().collect::<Vec<_>>());
            for j in 0..3 {
                assert!((fr.eval(&basis[i], &basis[j]) - r[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let a = build_asymmetric_approximator(&sine(), &BoxDomain::unit(1), 0.3, &Default::default()).unwrap();
        let text = a.relation.to_json().unwrap();
        let back = FactoredRelation::from_json(&text).unwrap();
        assert_eq!(back, a.relation);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["m"], a.relation.rank());
    }

    #[test]
    fn compositional_build_scales_with_feature_dim() {
        let r_bar = RelationSpec::black_box(|u, v| u[0] * v[0]);
        let ambient = BoxDomain::unit(10);
        let mean = |x: &[f64]| vec![x.iter().sum::<f64>() / x.len() as f64];
        let composed = build_compositional_approximator(
            &r_bar,
            mean,
            &BoxDomain::unit(1),
            &ambient,
            0.1,
            512,
            &Default::default(),
        )
        .unwrap();
        assert!(composed.landmark_count() < 100, "{}", composed.landmark_count());

        // the same relation built directly over the 10-D domain blows the budget
        let direct = RelationSpec::black_box(|x, y| {
            (x.iter().sum::<f64>() / 10.0) * (y.iter().sum::<f64>() / 10.0)
        });
        let err = build_asymmetric_approximator(&direct, &ambient, 0.1, &Default::default()).unwrap_err();
        assert!(matches!(err, Error::LandmarkBudget { .. }), "{err:?}");

        let mut g = rng(5);
        let mut worst: f64 = 0.0;
        for _ in 0..500 {
            let x = uniform_point(&mut g, ambient.lower(), ambient.upper());
            let y = uniform_point(&mut g, ambient.lower(), ambient.upper());
            let l = composed.inner.relation.network().landmarks();
            if distance_gap(l, &mean(&x)) <= BOUNDARY_GAP || distance_gap(l, &mean(&y)) <= BOUNDARY_GAP {
                continue;
            }
            worst = worst.max((composed.try_eval(&x, &y).unwrap() - direct.eval(&x, &y)).abs());
        }
        assert!(worst <= 0.1, "{worst}");
    }

    #[test]
    fn compositional_identity_filter_matches_direct_build() {
        let d = BoxDomain::unit(1);
        let composed =
            build_compositional_approximator(&sine(), |x| x.to_vec(), &d, &d, 0.1, 64, &Default::default()).unwrap();
        let direct = build_asymmetric_approximator(&sine(), &d, 0.1, &Default::default()).unwrap();
        assert_eq!(composed.inner.relation, direct.relation);
        for p in sample_grid(&d, 13).unwrap() {
            assert_eq!(composed.eval(&p, &[0.3]), direct.eval(&p, &[0.3]));
        }
    }

    #[test]
    fn compositional_filter_escape_is_reported() {
        let r_bar = RelationSpec::black_box(|u, v| u[0] * v[0]);
        let err = build_compositional_approximator(
            &r_bar,
            |x: &[f64]| vec![x.iter().sum::<f64>()],
            &BoxDomain::unit(1),
            &BoxDomain::unit(3),
            0.1,
            64,
            &Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DomainViolation { .. }), "{err:?}");
    }

    #[test]
    fn quantized_cells_agree_with_network() {
        let d = BoxDomain::unit(2);
        let a = build_asymmetric_approximator(
            &RelationSpec::black_box(|x, y| x[0] * y[1] - x[1]),
            &d,
            0.3,
            &Default::default(),
        )
        .unwrap();
        let l = a.relation.network().landmarks();
        for (x, _) in held_out_pairs(&d, l, 200, 9) {
            assert_eq!(a.relation.network().active_cell(&x), quantize(l, &x));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn exact_reconstruction_of_random_matrices(n in 1usize..24, seed in any::<u64>()) {
            let mut g = rng(seed);
            let r = DMatrix::from_fn(n, n, |_, _| uniform_point(&mut g, &[-1.0], &[1.0])[0]);
            let f = decompose_relation_matrix(&r, 0.0).unwrap();
            prop_assert!((f.reconstruct() - &r).amax() <= 1e-10 * r.amax().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn rank_detection_matches_oracle(n in 8usize..24, k in 1usize..8, seed in any::<u64>()) {
            let mut g = rng(seed);
            let mut draw = |rows, cols| DMatrix::from_fn(rows, cols, |_, _| uniform_point(&mut g, &[-1.0], &[1.0])[0]);
            let a = draw(k, n);
            let b = draw(k, n);
            let r = a.transpose() * b;
            let f = decompose_relation_matrix(&r, 0.0).unwrap();
            prop_assert!(f.rank() <= k);
            prop_assert_eq!(f.rank(), numerical_rank(&r, 1e-10));
        }
    }
}
