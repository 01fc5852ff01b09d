//! Domain geometry, relation representations and the error metrics shared by
//! every approximator in the crate.
//!
//! Suprema over the compact domain are realized as maxima over finite,
//! deterministic evaluation sets. They are reproducible lower bounds on the
//! true supremum, so every report carries the size of the set it used.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sequence::halton;

/// A point of a Euclidean domain.
pub type Point = Vec<f64>;

/// Largest lattice `sample_grid` will materialize.
pub const GRID_BUDGET: f64 = 1e7;

/// Perturbations drawn per probe pair by [`modulus_of_continuity`].
pub const PERTURBATIONS_PER_PAIR: usize = 8;

/// Axis-aligned box `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(invalid("domain needs at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(invalid(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!("axis {i}: need finite lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn unit(dim: usize) -> Self {
        Self::cube(0.0, 1.0, dim).expect("unit cube is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    /// Euclidean diameter (length of the main diagonal).
    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Largest Euclidean norm of any point in the box, attained at a corner.
    pub fn radius(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Point {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Maps a point of the unit cube affinely onto the box.
    pub fn from_unit(&self, t: &[f64]) -> Point {
        t.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (l, u))| l + t * (u - l))
            .collect()
    }

    /// The `count` Halton points of the box starting at sequence index `start`.
    pub fn halton_points(&self, start: u64, count: usize) -> Vec<Point> {
        (0..count as u64).map(|i| self.from_unit(&halton(start + i, self.dim()))).collect()
    }
}

type PairFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type CoordFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;

/// A kernel callable asserted to be symmetric positive definite.
#[derive(Clone)]
pub struct SymmetricKernel {
    f: Arc<PairFn>,
}

impl SymmetricKernel {
    pub fn new(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.f)(x, y)
    }

    /// Checks `k(x, y) == k(y, x)` within 1e-12 relative on every pair of `points`.
    pub fn verify_symmetry(&self, points: &[Point]) -> Result<()> {
        for (a, x) in points.iter().enumerate() {
            for y in &points[a + 1..] {
                let (kxy, kyx) = (self.eval(x, y), self.eval(y, x));
                let scale = kxy.abs().max(kyx.abs()).max(f64::MIN_POSITIVE);
                if (kxy - kyx).abs() > 1e-12 * scale {
                    return Err(invalid(format!("kernel asymmetric at {x:?}, {y:?}: {kxy} vs {kyx}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for SymmetricKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKernel(..)")
    }
}

/// Explicit feature-pair series `r(x, y) = sum_i phi_i(x) * phi_star_i(y)` over
/// the first `cap` coordinates of l2. `tail_bound` is the declared bound on the
/// magnitude of the part of the series beyond `cap`.
#[derive(Clone)]
pub struct FeaturePair {
    cap: usize,
    phi: Arc<CoordFn>,
    phi_star: Arc<CoordFn>,
    tail_bound: f64,
}

impl FeaturePair {
    pub fn new(
        cap: usize,
        phi: impl Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
        phi_star: impl Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
        tail_bound: f64,
    ) -> Result<Self> {
        if cap == 0 {
            return Err(invalid("feature pair needs at least one coordinate"));
        }
        if !(tail_bound >= 0.0 && tail_bound.is_finite()) {
            return Err(invalid(format!("tail bound must be finite and nonnegative, got {tail_bound}")));
        }
        Ok(Self {
            cap,
            phi: Arc::new(phi),
            phi_star: Arc::new(phi_star),
            tail_bound,
        })
    }

    /// A finite series given as explicit coordinate lists; its tail is zero.
    pub fn finite(
        phi: Vec<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>>,
        phi_star: Vec<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>>,
    ) -> Result<Self> {
        if phi.len() != phi_star.len() {
            return Err(invalid(format!(
                "feature maps disagree on length: {} vs {}",
                phi.len(),
                phi_star.len()
            )));
        }
        let cap = phi.len();
        Self::new(cap, move |i, x| phi[i](x), move |i, y| phi_star[i](y), 0.0)
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        (0..self.cap).map(|i| (self.phi)(i, x)).collect()
    }

    pub fn phi_star(&self, y: &[f64]) -> Vec<f64> {
        (0..self.cap).map(|i| (self.phi_star)(i, y)).collect()
    }

    /// Series value truncated after `d` coordinates.
    pub fn eval_truncated(&self, x: &[f64], y: &[f64], d: usize) -> f64 {
        (0..d.min(self.cap)).map(|i| (self.phi)(i, x) * (self.phi_star)(i, y)).sum()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_truncated(x, y, self.cap)
    }

    /// Empirical square-summability check: the squared last coordinate of
    /// both maps must sit below the declared tail bound at every point.
    pub fn check_decay(&self, points: &[Point]) -> Result<()> {
        let last = self.cap - 1;
        for x in points {
            let sq = (self.phi)(last, x).powi(2).max((self.phi_star)(last, x).powi(2));
            if sq > self.tail_bound {
                return Err(Error::TailTooHeavy {
                    residual: sq,
                    cap: self.cap,
                    target: self.tail_bound,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Debug for FeaturePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeaturePair")
            .field("cap", &self.cap)
            .field("tail_bound", &self.tail_bound)
            .finish()
    }
}

/// A relation function `r: X x X -> R` in one of its four supported forms.
#[derive(Clone)]
pub enum RelationSpec {
    BlackBox(Arc<PairFn>),
    /// Relation on a finite set; inputs are snapped to the nearest element.
    FiniteMatrix { matrix: DMatrix<f64>, elements: Vec<Point> },
    SymmetricKernel(SymmetricKernel),
    FeaturePair(FeaturePair),
}

impl RelationSpec {
    pub fn black_box(f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::BlackBox(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::black_box(move |_, _| c)
    }

    pub fn finite(matrix: DMatrix<f64>, elements: Vec<Point>) -> Result<Self> {
        let n = elements.len();
        if n == 0 || matrix.nrows() != n || matrix.ncols() != n {
            return Err(invalid(format!(
                "finite relation needs an n x n matrix for n = {n} elements, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self::FiniteMatrix { matrix, elements })
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::BlackBox(f) => f(x, y),
            Self::FiniteMatrix { matrix, elements } => {
                matrix[(crate::quantizer::quantize(elements, x), crate::quantizer::quantize(elements, y))]
            }
            Self::SymmetricKernel(k) => k.eval(x, y),
            Self::FeaturePair(fp) => fp.eval(x, y),
        }
    }
}

impl fmt::Debug for RelationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::BlackBox(_) => f.write_str("BlackBox(..)"),
            Self::FiniteMatrix { elements, .. } => write!(f, "FiniteMatrix(n = {})", elements.len()),
            Self::SymmetricKernel(_) => f.write_str("SymmetricKernel(..)"),
            Self::FeaturePair(fp) => write!(f, "{fp:?}"),
        }
    }
}

/// Regular lattice with `per_axis` points on every axis, corners included,
/// ordered lexicographically with the first axis varying slowest.
pub fn sample_grid(domain: &BoxDomain, per_axis: usize) -> Result<Vec<Point>> {
    if per_axis < 2 {
        return Err(invalid(format!("per_axis must be at least 2, got {per_axis}")));
    }
    let total = (per_axis as f64).powi(domain.dim() as i32);
    if total > GRID_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "sample grid points",
            requested: total,
            cap: GRID_BUDGET,
        });
    }
    Ok(lattice(domain, &vec![per_axis; domain.dim()]))
}

/// Lattice with `counts[i]` evenly spaced points on axis `i`; a count of one
/// places the single point at the axis midpoint.
pub(crate) fn lattice(domain: &BoxDomain, counts: &[usize]) -> Vec<Point> {
    let axes: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let (lo, hi) = (domain.lower[i], domain.upper[i]);
            if k == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..k)
                    .map(|j| if j + 1 == k { hi } else { lo + (hi - lo) * j as f64 / (k - 1) as f64 })
                    .collect()
            }
        })
        .collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; counts.len()];
    for _ in 0..total {
        out.push(idx.iter().enumerate().map(|(a, &j)| axes[a][j]).collect());
        for a in (0..counts.len()).rev() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// All ordered pairs of `points`.
pub fn all_pairs(points: &[Point]) -> Vec<(Point, Point)> {
    points
        .iter()
        .flat_map(|x| points.iter().map(move |y| (x.clone(), y.clone())))
        .collect()
}

/// `max |r(x, y) - r_hat(x, y)|` over the pair list.
pub fn sup_error(r: &RelationSpec, r_hat: &RelationSpec, pairs: &[(Point, Point)]) -> Result<f64> {
    sup_error_by(|x, y| r.eval(x, y), |x, y| r_hat.eval(x, y), pairs)
}

/// [`sup_error`] over plain callables.
pub fn sup_error_by<F, G>(r: F, r_hat: G, pairs: &[(Point, Point)]) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
    G: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if pairs.is_empty() {
        return Err(invalid("sup_error needs a nonempty pair list"));
    }
    Ok(pairs
        .par_iter()
        .map(|(x, y)| (r(x, y) - r_hat(x, y)).abs())
        .reduce(|| 0.0, f64::max))
}

/// Root-mean-square counterpart of [`sup_error_by`].
pub fn rms_error_by<F, G>(r: F, r_hat: G, pairs: &[(Point, Point)]) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
    G: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if pairs.is_empty() {
        return Err(invalid("rms_error needs a nonempty pair list"));
    }
    let sq: Vec<f64> = pairs.par_iter().map(|(x, y)| (r(x, y) - r_hat(x, y)).powi(2)).collect();
    Ok((sq.iter().sum::<f64>() / pairs.len() as f64).sqrt())
}

/// Unit-norm perturbation directions for probe pair `pair`, drawn from the
/// Halton sequence over `2 * dim` coordinates (x half, then y half).
pub fn perturbation_directions(pair: usize, dim: usize) -> Vec<(Point, Point)> {
    (0..PERTURBATIONS_PER_PAIR)
        .map(|k| {
            let h = halton((pair * PERTURBATIONS_PER_PAIR + k + 1) as u64, 2 * dim);
            let (hx, hy) = h.split_at(dim);
            (unit_direction(hx), unit_direction(hy))
        })
        .collect()
}

fn unit_direction(h: &[f64]) -> Point {
    let v: Vec<f64> = h.iter().map(|t| 2.0 * t - 1.0).collect();
    let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm < 1e-12 {
        let mut e = vec![0.0; h.len()];
        e[0] = 1.0;
        e
    } else {
        v.into_iter().map(|c| c / norm).collect()
    }
}

/// Empirical modulus of continuity: the largest change `|r(x, y) - r(x', y')|`
/// seen over [`PERTURBATIONS_PER_PAIR`] deterministic perturbations of each
/// probe pair with `|x - x'| = |y - y'| = delta`.
pub fn modulus_of_continuity(r: &RelationSpec, probe_pairs: &[(Point, Point)], delta: f64) -> Result<f64> {
    modulus_of_continuity_by(|x, y| r.eval(x, y), probe_pairs, delta)
}

pub fn modulus_of_continuity_by<F>(r: F, probe_pairs: &[(Point, Point)], delta: f64) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("delta must be positive and finite, got {delta}")));
    }
    if probe_pairs.is_empty() {
        return Err(invalid("modulus_of_continuity needs at least one probe pair"));
    }
    let dim = probe_pairs[0].0.len();
    Ok(probe_pairs
        .par_iter()
        .enumerate()
        .map(|(p, (x, y))| {
            let base = r(x, y);
            let offsets: Vec<(Point, Point)> = perturbation_directions(p, dim)
                .into_iter()
                .map(|(dx, dy)| (scale(&dx, delta), scale(&dy, delta)))
                .collect();
            max_change(&r, x, y, base, &offsets)
        })
        .reduce(|| 0.0, f64::max))
}

/// Largest change of `r` over an explicit offset set shared by every probe
/// pair. Nested offset sets give nondecreasing results.
pub fn modulus_over_offsets<F>(r: F, probe_pairs: &[(Point, Point)], offsets: &[(Point, Point)]) -> f64
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    probe_pairs
        .par_iter()
        .map(|(x, y)| max_change(&r, x, y, r(x, y), offsets))
        .reduce(|| 0.0, f64::max)
}

fn max_change<F>(r: &F, x: &[f64], y: &[f64], base: f64, offsets: &[(Point, Point)]) -> f64
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    offsets
        .iter()
        .map(|(dx, dy)| {
            let xp: Point = x.iter().zip(dx).map(|(a, b)| a + b).collect();
            let yp: Point = y.iter().zip(dy).map(|(a, b)| a + b).collect();
            (r(&xp, &yp) - base).abs()
        })
        .fold(0.0, f64::max)
}

fn scale(v: &[f64], s: f64) -> Point {
    v.iter().map(|c| c * s).collect()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corner_pairs() -> Vec<(Point, Point)> {
        all_pairs(&sample_grid(&BoxDomain::unit(1), 2).unwrap())
    }

    #[test]
    fn grid_interval_endpoints() {
        assert_eq!(sample_grid(&BoxDomain::unit(1), 2).unwrap(), vec![vec![0.0], vec![1.0]]);
    }

    #[test]
    fn grid_unit_square_corners_in_lexicographic_order() {
        let g = sample_grid(&BoxDomain::unit(2), 2).unwrap();
        assert_eq!(g, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn grid_symmetric_three_points() {
        let d = BoxDomain::cube(-1.0, 1.0, 1).unwrap();
        assert_eq!(sample_grid(&d, 3).unwrap(), vec![vec![-1.0], vec![0.0], vec![1.0]]);
    }

    #[test]
    fn grid_rejects_small_and_huge() {
        assert!(matches!(sample_grid(&BoxDomain::unit(1), 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_grid(&BoxDomain::unit(8), 10), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn domain_validation() {
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
        let d = BoxDomain::new(vec![-2.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(d.dim(), 2);
        assert!((d.radius() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sup_error_examples() {
        let pairs = corner_pairs();
        let prod = RelationSpec::black_box(|x, y| x[0] * y[0]);
        assert_eq!(sup_error(&prod, &prod, &pairs).unwrap(), 0.0);
        let one = RelationSpec::constant(1.0);
        let zero = RelationSpec::constant(0.0);
        assert_eq!(sup_error(&one, &zero, &pairs).unwrap(), 1.0);
        assert_eq!(sup_error(&prod, &zero, &pairs).unwrap(), 1.0);
        assert!(matches!(sup_error(&one, &zero, &[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn modulus_examples() {
        let probes = all_pairs(&sample_grid(&BoxDomain::unit(1), 11).unwrap());
        let c = RelationSpec::constant(3.0);
        assert_eq!(modulus_of_continuity(&c, &probes, 0.3).unwrap(), 0.0);

        let diff = RelationSpec::black_box(|x, y| x[0] - y[0]);
        let m = modulus_of_continuity(&diff, &probes, 0.1).unwrap();
        assert!(m <= 0.2 + 1e-12, "{m}");
        // the sign patterns cover opposite moves, so the Lipschitz bound is attained
        assert!(m >= 0.2 - 1e-12, "{m}");

        let sine = RelationSpec::black_box(|x, y| (3.0 * (x[0] - y[0])).sin());
        let m = modulus_of_continuity(&sine, &probes, 0.05).unwrap();
        assert!(m <= 0.3 + 1e-12 && m > 0.0, "{m}");
    }

    #[test]
    fn modulus_rejects_bad_input() {
        let c = RelationSpec::constant(0.0);
        assert!(modulus_of_continuity(&c, &corner_pairs(), 0.0).is_err());
        assert!(modulus_of_continuity(&c, &[], 0.1).is_err());
    }

    #[test]
    fn finite_relation_snaps_to_elements() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let r = RelationSpec::finite(m, vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(r.eval(&[0.1], &[0.9]), 2.0);
        assert_eq!(r.eval(&[1.0], &[0.0]), 3.0);
    }

    #[test]
    fn kernel_symmetry_check() {
        let pts = sample_grid(&BoxDomain::unit(1), 5).unwrap();
        assert!(SymmetricKernel::new(|x, y| (x[0] * y[0]).exp()).verify_symmetry(&pts).is_ok());
        assert!(SymmetricKernel::new(|x, y| x[0] - y[0]).verify_symmetry(&pts).is_err());
    }

    fn arb_relation() -> impl Strategy<Value = (f64, f64, f64)> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)
    }

    proptest! {
        #[test]
        fn sup_error_symmetric_and_triangle((a1, b1, c1) in arb_relation(), (a2, b2, c2) in arb_relation(), (a3, b3, c3) in arb_relation()) {
            let pairs = all_pairs(&sample_grid(&BoxDomain::unit(1), 7).unwrap());
            let mk = |a: f64, b: f64, c: f64| RelationSpec::black_box(move |x, y| a * x[0] + b * y[0] * y[0] + c * (x[0] * y[0]).sin());
            let (r1, r2, r3) = (mk(a1, b1, c1), mk(a2, b2, c2), mk(a3, b3, c3));
            let d12 = sup_error(&r1, &r2, &pairs).unwrap();
            prop_assert_eq!(d12, sup_error(&r2, &r1, &pairs).unwrap());
            let d13 = sup_error(&r1, &r3, &pairs).unwrap();
            let d32 = sup_error(&r3, &r2, &pairs).unwrap();
            prop_assert!(d12 <= d13 + d32 + 1e-12);
        }

        #[test]
        fn modulus_monotone_on_nested_offsets(deltas in proptest::collection::vec(0.001..0.5f64, 2..6)) {
            let mut deltas = deltas;
            deltas.sort_by(f64::total_cmp);
            let probes = all_pairs(&sample_grid(&BoxDomain::unit(1), 6).unwrap());
            let r = |x: &[f64], y: &[f64]| (5.0 * x[0]).sin() * (2.0 * y[0]).cos();
            let mut offsets = Vec::new();
            let mut last = 0.0;
            for (i, d) in deltas.iter().enumerate() {
                offsets.extend(perturbation_directions(i, 1).into_iter().map(|(dx, dy)| (scale(&dx, *d), scale(&dy, *d))));
                let m = modulus_over_offsets(r, &probes, &offsets);
                prop_assert!(m >= last);
                last = m;
            }
        }

        #[test]
        fn modulus_monotone_for_linear_relations(a in -3.0..3.0f64, b in -3.0..3.0f64, d1 in 0.001..0.5f64, d2 in 0.001..0.5f64) {
            let probes = all_pairs(&sample_grid(&BoxDomain::unit(2), 3).unwrap());
            let r = RelationSpec::black_box(move |x, y| a * (x[0] - x[1]) + b * y[0]);
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(modulus_of_continuity(&r, &probes, lo).unwrap() <= modulus_of_continuity(&r, &probes, hi).unwrap() + 1e-12);
        }
    }

    #[test]
    fn grid_deterministic() {
        let d = BoxDomain::new(vec![-0.3, 1.0, 2.0], vec![0.7, 1.5, 9.0]).unwrap();
        let a = sample_grid(&d, 4).unwrap();
        let b = sample_grid(&d, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(a[0], d.lower().to_vec());
        assert_eq!(a[63], d.upper().to_vec());
    }
}
