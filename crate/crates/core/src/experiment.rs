//! Experiment configuration, dispatch, sweeps and report files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{
    build_attention_from_utility, calibrate_beta, estimate_margin, verify_retrieval, AttentionModule,
    UniformContextSampler, VerifyOptions,
};
use crate::error::{Error, Result};
use crate::factored::{build_asymmetric_approximator, held_out_error, held_out_pairs, probe_pairs, AsymmetricOptions};
use crate::numfmt::{opt_f64_sig17, sig17};
use crate::registry;
use crate::relation::{BoxDomain, Point};
use crate::spectral::{
    build_symmetric_features_for, neuron_budget_barron, neuron_budget_relu, truncate_feature_pair, SymmetricOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AsymApprox,
    SymApprox,
    FeaturePair,
    AttentionVerify,
    BudgetReport,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::AsymApprox => "asym-approx",
            Self::SymApprox => "sym-approx",
            Self::FeaturePair => "feature-pair",
            Self::AttentionVerify => "attention-verify",
            Self::BudgetReport => "budget-report",
        }
    }

    fn default_target(self) -> &'static str {
        match self {
            Self::AsymApprox => "sin-diff",
            Self::SymApprox => "rbf",
            Self::FeaturePair => "poly-pair",
            Self::AttentionVerify => "neg-sqdist",
            Self::BudgetReport => "",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            _ => Err(Error::Config(format!("unknown format '{s}'; expected json or csv"))),
        }
    }
}

/// Which scores the attention module uses in `attention-verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scores {
    /// Factored approximation built at sup error `eta / 4`.
    #[default]
    Learned,
    /// The utility itself.
    Exact,
}

/// Registry entry an experiment runs on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub scores: Scores,
    pub table: Option<Vec<Vec<f64>>>,
    pub elements: Option<Vec<Point>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            lower: vec![0.0],
            upper: vec![1.0],
        }
    }
}

/// Every numeric knob. These are the names a sweep axis may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Parameters {
    pub epsilon: f64,
    /// Output tolerance for retrieval; defaults to `epsilon`.
    pub epsilon_out: Option<f64>,
    /// Landmark count for symmetric features.
    pub landmarks: usize,
    pub landmark_cap: usize,
    pub held_out: usize,
    pub trials: usize,
    pub margin_trials: usize,
    pub context_size: usize,
    /// Fixed inverse temperature; calibrated from the margin when absent.
    pub beta: Option<f64>,
    /// Fixed margin; estimated when absent.
    pub eta: Option<f64>,
    pub d_r: usize,
    pub c: f64,
    pub l: f64,
    pub b: f64,
    /// Defaults to the domain dimension.
    pub dim: Option<usize>,
    /// Defaults to the largest norm in the domain.
    pub radius: Option<f64>,
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            epsilon_out: None,
            landmarks: 200,
            landmark_cap: crate::quantizer::DEFAULT_LANDMARK_CAP,
            held_out: 1000,
            trials: 1000,
            margin_trials: 10_000,
            context_size: 8,
            beta: None,
            eta: None,
            d_r: 1,
            c: 1.0,
            l: 1.0,
            b: 1.0,
            dim: None,
            radius: None,
        }
    }
}

pub const NUMERIC_AXES: [&str; 16] = [
    "epsilon",
    "epsilon_out",
    "landmarks",
    "landmark_cap",
    "held_out",
    "trials",
    "margin_trials",
    "context_size",
    "beta",
    "eta",
    "d_r",
    "c",
    "l",
    "b",
    "dim",
    "radius",
];

fn as_count(axis: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{axis} must be a nonnegative integer, got {v}")))
    }
}

impl Parameters {
    /// Sets a numeric field by name. `target.<key>` names a target parameter.
    fn set(&mut self, axis: &str, v: f64) -> Result<()> {
        match axis {
            "epsilon" => self.epsilon = v,
            "epsilon_out" => self.epsilon_out = Some(v),
            "landmarks" => self.landmarks = as_count(axis, v)?,
            "landmark_cap" => self.landmark_cap = as_count(axis, v)?,
            "held_out" => self.held_out = as_count(axis, v)?,
            "trials" => self.trials = as_count(axis, v)?,
            "margin_trials" => self.margin_trials = as_count(axis, v)?,
            "context_size" => self.context_size = as_count(axis, v)?,
            "beta" => self.beta = Some(v),
            "eta" => self.eta = Some(v),
            "d_r" => self.d_r = as_count(axis, v)?,
            "c" => self.c = v,
            "l" => self.l = v,
            "b" => self.b = v,
            "dim" => self.dim = Some(as_count(axis, v)?),
            "radius" => self.radius = Some(v),
            _ => {
                return Err(Error::Config(format!(
                    "'{axis}' is not a numeric field; numeric fields: {}",
                    NUMERIC_AXES.join(", ")
                )))
            }
        }
        Ok(())
    }
}

/// One experiment, read from a TOML file and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// Record wall-clock milliseconds. Off by default since it breaks
    /// byte-identical reports.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: 0,
            target: Target {
                id: kind.default_target().into(),
                ..Default::default()
            },
            domain: DomainSpec::default(),
            parameters: Parameters::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.target.id.is_empty() {
            cfg.target.id = cfg.kind.default_target().into();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Switches the experiment kind, resetting the target to the new kind's
    /// default when the current one does not belong to it.
    pub fn with_kind(mut self, kind: ExperimentKind) -> Self {
        if self.kind != kind {
            self.kind = kind;
            if self.target_check().is_err() {
                self.target.id = kind.default_target().into();
            }
        }
        self
    }

    /// Applies `axis = value`; `axis` is a parameter name or `target.<key>`.
    pub fn set(&mut self, axis: &str, value: f64) -> Result<()> {
        if let Some(key) = axis.strip_prefix("target.") {
            self.target.params.insert(key.to_string(), value);
            Ok(())
        } else {
            self.parameters.set(axis, value)
        }
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.domain.lower.clone(), self.domain.upper.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    fn target_check(&self) -> Result<()> {
        let t = &self.target;
        match self.kind {
            ExperimentKind::AsymApprox => registry::relation(&t.id, &t.params).map(drop),
            ExperimentKind::SymApprox => registry::kernel(&t.id, &t.params).map(drop),
            ExperimentKind::FeaturePair => registry::feature_pair(&t.id, &t.params).map(drop),
            ExperimentKind::AttentionVerify => {
                registry::utility(&t.id, t.table.as_deref(), t.elements.as_deref()).map(drop)
            }
            ExperimentKind::BudgetReport => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.domain()?;
        self.target_check().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })?;
        let p = &self.parameters;
        let positive = [
            ("epsilon", Some(p.epsilon)),
            ("epsilon_out", p.epsilon_out),
            ("eta", p.eta),
            ("c", Some(p.c)),
            ("l", Some(p.l)),
            ("b", Some(p.b)),
            ("radius", p.radius),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive and finite, got {v}"));
                }
            }
        }
        if let Some(beta) = p.beta {
            if !(beta >= 0.0 && beta.is_finite()) {
                return bad(format!("beta must be finite and nonnegative, got {beta}"));
            }
        }
        if p.landmarks < 2 {
            return bad(format!("landmarks must be at least 2, got {}", p.landmarks));
        }
        if p.landmark_cap == 0 || p.landmark_cap > crate::quantizer::DEFAULT_LANDMARK_CAP {
            return bad(format!(
                "landmark_cap must lie in 1..={}, got {}",
                crate::quantizer::DEFAULT_LANDMARK_CAP,
                p.landmark_cap
            ));
        }
        if p.held_out == 0 {
            return bad("held_out must be positive".into());
        }
        if self.kind == ExperimentKind::AttentionVerify {
            if p.trials < 100 || p.margin_trials < 100 {
                return bad("trials and margin_trials must be at least 100".into());
            }
            if p.epsilon >= 1.0 {
                return bad(format!("epsilon is a probability here and must be below 1, got {}", p.epsilon));
            }
            if p.context_size < 2 {
                return bad(format!("context_size must be at least 2, got {}", p.context_size));
            }
        }
        if p.d_r == 0 || p.dim == Some(0) {
            return bad("d_r and dim must be positive".into());
        }
        Ok(())
    }
}

/// One measured experiment. Fields that do not apply to a kind are empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub target: String,
    pub seed: u64,
    pub dim: usize,
    pub sweep_axis: Option<String>,
    #[serde(with = "opt_f64_sig17")]
    pub sweep_value: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub epsilon: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub epsilon_out: Option<f64>,
    pub landmarks: Option<usize>,
    pub rank: Option<usize>,
    pub truncation: Option<usize>,
    #[serde(with = "opt_f64_sig17")]
    pub held_out_sup: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub held_out_l2: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub success_rate: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub margin_hit_rate: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub conditional_success_rate: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub mean_error: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub max_error: Option<f64>,
    pub tied_draws: Option<usize>,
    #[serde(with = "opt_f64_sig17")]
    pub beta: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub eta: Option<f64>,
    /// Order-of-magnitude, constant suppressed.
    #[serde(with = "opt_f64_sig17")]
    pub budget_relu: Option<f64>,
    #[serde(with = "opt_f64_sig17")]
    pub budget_relu_ln: Option<f64>,
    /// Order-of-magnitude, constant suppressed.
    #[serde(with = "opt_f64_sig17")]
    pub budget_barron: Option<f64>,
    pub wall_ms: Option<u64>,
}

/// Column order of CSV reports.
pub const CSV_HEADER: [&str; 25] = [
    "kind",
    "target",
    "seed",
    "dim",
    "sweep_axis",
    "sweep_value",
    "epsilon",
    "epsilon_out",
    "landmarks",
    "rank",
    "truncation",
    "held_out_sup",
    "held_out_l2",
    "success_rate",
    "margin_hit_rate",
    "conditional_success_rate",
    "mean_error",
    "max_error",
    "tied_draws",
    "beta",
    "eta",
    "budget_relu",
    "budget_relu_ln",
    "budget_barron",
    "wall_ms",
];

impl ReportRow {
    fn csv_record(&self) -> Vec<String> {
        fn f(v: Option<f64>) -> String {
            v.map(sig17).unwrap_or_default()
        }
        fn u<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        vec![
            self.kind.clone(),
            self.target.clone(),
            self.seed.to_string(),
            self.dim.to_string(),
            self.sweep_axis.clone().unwrap_or_default(),
            f(self.sweep_value),
            f(self.epsilon),
            f(self.epsilon_out),
            u(self.landmarks),
            u(self.rank),
            u(self.truncation),
            f(self.held_out_sup),
            f(self.held_out_l2),
            f(self.success_rate),
            f(self.margin_hit_rate),
            f(self.conditional_success_rate),
            f(self.mean_error),
            f(self.max_error),
            u(self.tied_draws),
            f(self.beta),
            f(self.eta),
            f(self.budget_relu),
            f(self.budget_relu_ln),
            f(self.budget_barron),
            u(self.wall_ms),
        ]
    }
}

fn base_row(cfg: &ExperimentConfig, dim: usize) -> ReportRow {
    ReportRow {
        kind: cfg.kind.to_string(),
        target: cfg.target.id.clone(),
        seed: cfg.seed,
        dim,
        epsilon: Some(cfg.parameters.epsilon),
        ..Default::default()
    }
}

fn certify(measured: f64, target: f64) -> Result<()> {
    if measured > target {
        Err(Error::Certification { measured, target })
    } else {
        Ok(())
    }
}

/// Runs one experiment. Errors carry the failing module's variant so the
/// CLI can map them to exit codes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportRow> {
    cfg.validate()?;
    let start = Instant::now();
    let domain = cfg.domain()?;
    let p = &cfg.parameters;
    let t = &cfg.target;
    let mut row = base_row(cfg, domain.dim());
    let asym_opts = AsymmetricOptions {
        landmark_cap: p.landmark_cap,
        ..Default::default()
    };

    match cfg.kind {
        ExperimentKind::AsymApprox => {
            let r = registry::relation(&t.id, &t.params)?;
            let approx = build_asymmetric_approximator(&r, &domain, p.epsilon, &asym_opts)?;
            let net = approx.relation.network();
            let pairs = held_out_pairs(&domain, net.landmarks(), p.held_out, cfg.seed);
            let err = held_out_error(&r, |x, y| approx.eval(x, y), &pairs)?;
            row.landmarks = Some(net.len());
            row.rank = Some(approx.relation.rank());
            row.held_out_sup = Some(err.sup);
            row.held_out_l2 = Some(err.rms);
            certify(err.sup, p.epsilon)?;
        }
        ExperimentKind::SymApprox => {
            let id = registry::kernel(&t.id, &t.params)?;
            let opts = SymmetricOptions {
                held_out_pairs: p.held_out,
                seed: cfg.seed,
                landmarks: None,
            };
            let a = build_symmetric_features_for(&id, &domain, p.epsilon, p.landmarks, &opts)?;
            row.landmarks = Some(a.map.m());
            row.truncation = Some(a.map.d());
            row.held_out_sup = Some(a.held_out_error);
            row.held_out_l2 = Some(a.held_out_rms);
        }
        ExperimentKind::FeaturePair => {
            let fp = registry::feature_pair(&t.id, &t.params)?;
            let pairs = probe_pairs(&domain, p.held_out);
            let tr = truncate_feature_pair(&fp, &pairs, p.epsilon)?;
            row.truncation = Some(tr.d);
            row.held_out_sup = Some(tr.residual);
        }
        ExperimentKind::AttentionVerify => {
            let u = registry::utility(&t.id, t.table.as_deref(), t.elements.as_deref())?;
            let eps_out = p.epsilon_out.unwrap_or(p.epsilon);
            let n = p.context_size;
            let margin_sampler = UniformContextSampler {
                domain: domain.clone(),
                n,
                seed: cfg.seed,
            };
            let eta = match p.eta {
                Some(eta) => eta,
                None => estimate_margin(&u, &margin_sampler, p.epsilon, p.margin_trials)?,
            };
            let beta = match p.beta {
                Some(beta) => beta,
                None => calibrate_beta(eta, n, domain.radius(), eps_out)?,
            };
            let module = match t.scores {
                Scores::Exact => AttentionModule::exact(&u, beta)?,
                Scores::Learned => {
                    let (module, approx) = build_attention_from_utility(&u, &domain, eta, &asym_opts)?;
                    row.landmarks = Some(approx.relation.landmark_count());
                    row.rank = Some(approx.relation.rank());
                    module.with_beta(beta)?
                }
            };
            // fresh draws, disjoint from the margin estimate's seeds
            let verify_sampler = UniformContextSampler {
                seed: cfg.seed.wrapping_add(p.margin_trials as u64),
                ..margin_sampler
            };
            let opts = VerifyOptions {
                epsilon_prob: p.epsilon,
                epsilon_out: eps_out,
                trials: p.trials,
                eta,
            };
            let rep = verify_retrieval(&module, &u, &verify_sampler, &opts)?;
            row.epsilon_out = Some(eps_out);
            row.beta = Some(beta);
            row.eta = Some(eta);
            row.success_rate = Some(rep.success_rate);
            row.margin_hit_rate = Some(rep.margin_hit_rate);
            row.conditional_success_rate = Some(rep.conditional_success_rate);
            row.mean_error = Some(rep.mean_error);
            row.max_error = Some(rep.max_error);
            row.tied_draws = Some(rep.tied_draws);
        }
        ExperimentKind::BudgetReport => {
            let dim = p.dim.unwrap_or(domain.dim());
            let radius = p.radius.unwrap_or(domain.radius());
            let relu = neuron_budget_relu(p.d_r, p.c, p.l, p.epsilon, dim)?;
            row.dim = dim;
            row.budget_relu = Some(relu.value);
            row.budget_relu_ln = Some(relu.ln_value);
            row.budget_barron = Some(neuron_budget_barron(p.d_r, p.c, radius, p.b, p.epsilon)?);
        }
    }
    if cfg.output.timing {
        row.wall_ms = Some(start.elapsed().as_millis() as u64);
    }
    Ok(row)
}

/// One row per value, in input order, all sharing the template's seed.
pub fn sweep(template: &ExperimentConfig, axis: &str, values: &[f64]) -> Result<Vec<ReportRow>> {
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| {
            let mut cfg = template.clone();
            cfg.set(axis, v)?;
            Ok(cfg)
        })
        .collect::<Result<_>>()?;
    configs
        .par_iter()
        .zip(values)
        .map(|(cfg, &v)| {
            let mut row = run_experiment(cfg)?;
            row.sweep_axis = Some(axis.to_string());
            row.sweep_value = Some(v);
            Ok(row)
        })
        .collect()
}

/// Report text: a JSON array or CSV with [`CSV_HEADER`], LF line endings.
pub fn render_report(rows: &[ReportRow], format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            for r in rows {
                w.write_record(r.csv_record()).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn parse_json_report(text: &str) -> Result<Vec<ReportRow>> {
    Ok(serde_json::from_str(text)?)
}

/// Writes the report to `path`, or stdout when `path` is `None`.
pub fn emit_report(rows: &[ReportRow], format: Format, path: Option<&Path>) -> Result<()> {
    let text = render_report(rows, format)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asym(eps: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ExperimentKind::AsymApprox);
        cfg.seed = 7;
        cfg.parameters.epsilon = eps;
        cfg.parameters.held_out = 300;
        cfg
    }

    #[test]
    fn asym_sin_diff_row() {
        let row = run_experiment(&asym(0.1)).unwrap();
        assert!(row.held_out_sup.unwrap() <= 0.1);
        assert!(row.landmarks.unwrap() > 1 && row.rank.unwrap() >= 1);
    }

    #[test]
    fn budget_row() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::BudgetReport);
        cfg.parameters.epsilon = 4.0;
        let row = run_experiment(&cfg).unwrap();
        assert_eq!(row.budget_relu, Some(1.0));
    }

    fn attention_exact() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(ExperimentKind::AttentionVerify);
        cfg.target.scores = Scores::Exact;
        cfg.domain = DomainSpec {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        cfg.parameters.margin_trials = 1000;
        cfg.parameters.trials = 300;
        cfg.parameters.epsilon_out = Some(0.05);
        cfg
    }

    #[test]
    fn uniform_attention_row() {
        let mut cfg = attention_exact();
        cfg.parameters.beta = Some(0.0);
        let row = run_experiment(&cfg).unwrap();
        assert!(row.success_rate.unwrap() < 0.05);
    }

    #[test]
    fn beta_sweep_is_nondecreasing() {
        let rows = sweep(&attention_exact(), "beta", &[1.0, 10.0, 100.0]).unwrap();
        let rates: Vec<f64> = rows.iter().map(|r| r.success_rate.unwrap()).collect();
        assert!(rates.windows(2).all(|w| w[1] >= w[0]), "{rates:?}");
        assert_eq!(rows[2].sweep_value, Some(100.0));
    }

    #[test]
    fn epsilon_sweep_errors_shrink() {
        let rows = sweep(&asym(0.1), "epsilon", &[0.4, 0.2, 0.1]).unwrap();
        let errs: Vec<f64> = rows.iter().map(|r| r.held_out_sup.unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        assert!(sweep(&asym(0.1), "epsilon", &[]).unwrap().is_empty());
        assert!(matches!(sweep(&asym(0.1), "format", &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn csv_layout() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::BudgetReport);
        cfg.parameters.epsilon = 4.0;
        let one = render_report(&[run_experiment(&cfg).unwrap()], Format::Csv).unwrap();
        assert_eq!(one.lines().count(), 2);
        assert!(!one.contains('\r'));
        assert!(one.starts_with("kind,target,seed,"));
        let three = sweep(&cfg, "epsilon", &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(render_report(&three, Format::Csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn json_round_trip() {
        let rows = sweep(&asym(0.2), "epsilon", &[0.4, 0.2]).unwrap();
        let text = render_report(&rows, Format::Json).unwrap();
        assert_eq!(parse_json_report(&text).unwrap(), rows);
    }

    #[test]
    fn toml_config_parses_and_validates() {
        let text = r#"
kind = "asym-approx"
seed = 3

[target]
id = "order-sign"
params = { gamma = 4.0 }

[domain]
lower = [0.0]
upper = [1.0]

[parameters]
epsilon = 0.2

[output]
format = "csv"
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.target.id, "order-sign");
        assert_eq!(cfg.output.format, Format::Csv);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);

        let bad_id = text.replace("order-sign", "nope");
        assert!(matches!(ExperimentConfig::from_toml(&bad_id), Err(Error::Config(_))));
        let bad_eps = text.replace("epsilon = 0.2", "epsilon = -1.0");
        assert!(matches!(ExperimentConfig::from_toml(&bad_eps), Err(Error::Config(_))));
        let bad_key = text.replace("epsilon = 0.2", "epsilonn = 0.2");
        assert!(matches!(ExperimentConfig::from_toml(&bad_key), Err(Error::Config(_))));
    }

    #[test]
    fn reports_are_deterministic() {
        let a = render_report(&[run_experiment(&asym(0.2)).unwrap()], Format::Json).unwrap();
        let b = render_report(&[run_experiment(&asym(0.2)).unwrap()], Format::Json).unwrap();
        assert_eq!(a, b);
    }
}
