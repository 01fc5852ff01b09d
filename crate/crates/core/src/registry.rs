//! Named relations, kernels, feature pairs and utilities for configs.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::attention::UtilityOracle;
use crate::error::{Error, Result};
use crate::relation::{dist2, dot, FeaturePair, Point, RelationSpec};
use crate::spectral::KernelId;

pub const RELATIONS: [&str; 6] = ["sin-diff", "lin-prod", "order-sign", "min-kernel", "rbf", "poly-pair"];
pub const KERNELS: [&str; 4] = ["lin-prod", "min-kernel", "rbf", "polynomial"];
pub const FEATURE_PAIRS: [&str; 2] = ["poly-pair", "geometric-pair"];
pub const UTILITIES: [&str; 3] = ["neg-sqdist", "dot", "custom-table"];

/// Numeric parameters attached to a registry id.
pub type Params = BTreeMap<String, f64>;

fn param(params: &Params, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn unknown(kind: &str, id: &str, known: &[&str]) -> Error {
    Error::Config(format!("unknown {kind} '{id}'; known: {}", known.join(", ")))
}

fn sum_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x - y).sum()
}

/// Relations usable with the asymmetric builder.
pub fn relation(id: &str, params: &Params) -> Result<RelationSpec> {
    Ok(match id {
        "sin-diff" => {
            let g = param(params, "gamma", 3.0);
            RelationSpec::black_box(move |x, y| (g * sum_diff(x, y)).sin())
        }
        "lin-prod" => RelationSpec::black_box(dot),
        "order-sign" => {
            let g = param(params, "gamma", 4.0);
            RelationSpec::black_box(move |x, y| (g * sum_diff(y, x)).tanh())
        }
        "min-kernel" => RelationSpec::SymmetricKernel(KernelId::Min.kernel()),
        "rbf" => RelationSpec::SymmetricKernel(kernel(id, params)?.kernel()),
        "poly-pair" => RelationSpec::FeaturePair(feature_pair(id, params)?),
        _ => return Err(unknown("relation", id, &RELATIONS)),
    })
}

/// Symmetric kernels usable with the spectral builder.
pub fn kernel(id: &str, params: &Params) -> Result<KernelId> {
    Ok(match id {
        "lin-prod" => KernelId::Linear,
        "min-kernel" => KernelId::Min,
        "rbf" => KernelId::Rbf {
            bandwidth: param(params, "bandwidth", 1.0),
        },
        "polynomial" => KernelId::Polynomial {
            degree: param(params, "degree", 2.0) as u32,
            offset: param(params, "offset", 1.0),
        },
        _ => return Err(unknown("kernel", id, &KERNELS)),
    })
}

/// Explicit feature-pair series.
///
/// `poly-pair` is `phi = (x, x^2)`, `phi_star = (y^2, y)` on the first
/// coordinate. `geometric-pair` has coordinates `ratio^{(i+1)/2} cos((i+1) x)`
/// on both sides, truncated at `cap` with the tail declared as `ratio^cap`.
pub fn feature_pair(id: &str, params: &Params) -> Result<FeaturePair> {
    match id {
        "poly-pair" => FeaturePair::finite(
            vec![Arc::new(|x: &[f64]| x[0]), Arc::new(|x: &[f64]| x[0] * x[0])],
            vec![Arc::new(|y: &[f64]| y[0] * y[0]), Arc::new(|y: &[f64]| y[0])],
        ),
        "geometric-pair" => {
            let ratio = param(params, "ratio", 0.5);
            let cap = param(params, "cap", 40.0);
            if !(ratio > 0.0 && ratio < 1.0) || !(cap >= 1.0) {
                return Err(Error::Config(format!("geometric-pair needs 0 < ratio < 1 and cap >= 1, got {ratio}, {cap}")));
            }
            let cap = cap as usize;
            let coord = move |i: usize, x: &[f64]| ratio.powf((i + 1) as f64 / 2.0) * ((i + 1) as f64 * x[0]).cos();
            FeaturePair::new(cap, coord, coord, ratio.powi(cap as i32))
        }
        _ => Err(unknown("feature pair", id, &FEATURE_PAIRS)),
    }
}

/// Utilities for attention experiments. `custom-table` needs `table` (n x n)
/// and `elements` (n points); inputs snap to the nearest element.
pub fn utility(id: &str, table: Option<&[Vec<f64>]>, elements: Option<&[Point]>) -> Result<UtilityOracle> {
    match id {
        "neg-sqdist" => Ok(UtilityOracle::new(|q, x| -dist2(q, x))),
        "dot" => Ok(UtilityOracle::new(dot)),
        "custom-table" => {
            let (Some(table), Some(elements)) = (table, elements) else {
                return Err(Error::Config("custom-table needs both 'table' and 'elements'".into()));
            };
            let n = elements.len();
            if table.len() != n || table.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("custom-table must be {n} x {n}")));
            }
            let flat: Vec<f64> = table.iter().flatten().copied().collect();
            let rel = RelationSpec::finite(DMatrix::from_row_slice(n, n, &flat), elements.to_vec())?;
            Ok(UtilityOracle::new(move |q, x| rel.eval(q, x)))
        }
        _ => Err(unknown("utility", id, &UTILITIES)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations_evaluate() {
        let p = Params::new();
        let s = relation("sin-diff", &p).unwrap();
        assert!((s.eval(&[0.5], &[0.2]) - (0.9f64).sin()).abs() < 1e-15);
        let o = relation("order-sign", &p).unwrap();
        assert!((o.eval(&[0.2], &[0.7]) + o.eval(&[0.7], &[0.2])).abs() < 1e-15);
        assert_eq!(relation("poly-pair", &p).unwrap().eval(&[2.0], &[3.0]), 2.0 * 9.0 + 4.0 * 3.0);
        for id in RELATIONS {
            relation(id, &p).unwrap();
        }
    }

    #[test]
    fn unknown_ids_list_the_registry() {
        let err = relation("nope", &Params::new()).unwrap_err().to_string();
        assert!(err.contains("sin-diff") && err.contains("poly-pair"), "{err}");
        assert!(utility("nope", None, None).is_err());
        assert!(kernel("nope", &Params::new()).is_err());
    }

    #[test]
    fn custom_table_snaps() {
        let u = utility(
            "custom-table",
            Some(&[vec![0.0, 1.0], vec![2.0, 3.0]]),
            Some(&[vec![0.0], vec![1.0]]),
        )
        .unwrap();
        assert_eq!(u.eval(&[0.9], &[0.1]), 2.0);
        assert!(utility("custom-table", None, None).is_err());
    }
}
