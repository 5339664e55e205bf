//! Run configuration, experiment dispatch and CSV result records.
//!
//! A run is described by a TOML file. Every number written by `run` is a
//! function of the configuration alone: worker count and output directory
//! are excluded from the configuration hash because they cannot change a
//! statistic.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edge_stats::{
    bootstrap_distance_difference, rate_bound, rate_fit, sandwich_check, sandwich_e_grid, sup_distance, Centering,
    EdgeExperiment, SandwichObservable,
};
use crate::ensembles::{Beta, EnsembleSpec, EntryLaw};
use crate::error::{LabError, Result};
use crate::flow_lab::{flow_derivative_check, gronwall_band, k3_k4_terms, FlowKind, FlowSpec, K3K4Report};
use crate::mc::{Stats, TrialFailure};
use crate::profile::ProfileSpec;
use crate::resolvent::{im_mn_edge_expectation, locallaw_deviation};
use crate::rng::derive_seed;
use crate::semicircle::EdgeDomainSpec;
use crate::tracy_widom::{TwDistribution, TwTable, CACHE_FILE};
use crate::verification::{gap_suite, identity_suites, tracy_widom_suite, Check};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub const EXPERIMENTS: [&str; 10] = [
    "edge-cdf",
    "rate-fit",
    "sandwich",
    "flow-derivative",
    "k3k4",
    "gronwall",
    "locallaw",
    "edge-bound",
    "tw-table",
    "verify",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Diagonal {
    #[default]
    Standard,
    /// Diagonal variances doubled, as in the GOE.
    Doubled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_beta")]
    pub beta: u8,
    #[serde(default = "default_law")]
    pub law: String,
    #[serde(default = "default_profile")]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub diagonal: Diagonal,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { beta: 1, law: default_law(), profile: ProfileSpec::Flat, diagonal: Diagonal::Standard }
    }
}

fn default_beta() -> u8 {
    1
}
fn default_law() -> String {
    "gaussian".into()
}
fn default_profile() -> ProfileSpec {
    ProfileSpec::Flat
}

impl EnsembleConfig {
    pub fn beta(&self) -> Result<Beta> {
        Beta::from_int(self.beta)
    }

    pub fn law(&self) -> Result<EntryLaw> {
        EntryLaw::parse(&self.law)
    }

    pub fn spec(&self, n: usize) -> Result<EnsembleSpec> {
        let beta = self.beta()?;
        let mut profile = self.profile.build(n)?;
        if self.diagonal == Diagonal::Doubled {
            if beta != Beta::Real {
                return Err(LabError::Config("a doubled diagonal only applies to beta = 1".into()));
            }
            profile = profile.modified();
        }
        Ok(EnsembleSpec::new(beta, profile, self.law()?))
    }

    pub fn label(&self) -> String {
        let diag = if self.diagonal == Diagonal::Doubled { ";doubled_diagonal" } else { "" };
        format!("beta={};law={};profile={}{diag}", self.beta, self.law, self.profile.label())
    }
}

/// Experiment-specific parameters. Empty grids select the experiment's
/// built-in default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_centering")]
    pub centering: String,
    /// Exponent slack ω in the bound D(N) ≤ N^{-1/3+ω}.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Explicit threshold on the sup-distance, replacing the bound form.
    #[serde(default)]
    pub d_max: Option<f64>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    /// Spectral parameters as [E, η] pairs.
    #[serde(default)]
    pub z_grid: Vec<[f64; 2]>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Quantile threshold exponent for local-law ratios.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_e_points")]
    pub e_points: usize,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_flow")]
    pub flow: FlowKind,
    /// Largest admissible max/min ratio of N^{1/3}E[Im m_N] across N.
    #[serde(default = "default_band_ratio")]
    pub band_ratio: f64,
    #[serde(default)]
    pub tw_cache: Option<PathBuf>,
}

fn default_r0() -> f64 {
    crate::edge_stats::DEFAULT_R0
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_centering() -> String {
    "goe_shift".into()
}
fn default_omega() -> f64 {
    0.15
}
fn default_bootstrap() -> usize {
    200
}
fn default_dt() -> f64 {
    0.05
}
fn default_tau() -> f64 {
    0.2
}
fn default_e_points() -> usize {
    9
}
fn default_gamma() -> f64 {
    3.0
}
fn default_flow() -> FlowKind {
    FlowKind::Flow1
}
fn default_band_ratio() -> f64 {
    2.0
}

impl Default for Knobs {
    fn default() -> Self {
        toml::from_str("").expect("every knob has a default")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Per-dimension overrides of `trials` as [n, trials] pairs.
    #[serde(default)]
    pub trials_by_n: Vec<[usize; 2]>,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub knobs: Knobs,
}

fn default_seed() -> u64 {
    20_240_101
}
fn default_workers() -> usize {
    1
}
fn default_trials() -> usize {
    1000
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl RunConfig {
    /// Defaults for an experiment with no configuration file.
    pub fn for_experiment(experiment: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(&format!("experiment = {experiment:?}"))
            .map_err(|e| LabError::Config(e.to_string()))?;
        cfg.check_experiment()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    fn check_experiment(&self) -> Result<()> {
        if EXPERIMENTS.contains(&self.experiment.as_str()) {
            Ok(())
        } else {
            Err(LabError::Config(format!(
                "unknown experiment '{}'; expected one of {}",
                self.experiment,
                EXPERIMENTS.join(", ")
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.check_experiment()?;
        if self.trials == 0 || self.trials_by_n.iter().any(|&[_, m]| m == 0) {
            return Err(LabError::Config("trials must be positive".into()));
        }
        if self.workers == 0 {
            return Err(LabError::Config("workers must be positive".into()));
        }
        if !(self.knobs.epsilon > 0.0 && self.knobs.epsilon < 1.0 / 3.0) {
            return Err(LabError::Config(format!("epsilon {} outside (0, 1/3)", self.knobs.epsilon)));
        }
        Centering::parse(&self.knobs.centering)?;
        self.ensemble.beta()?;
        self.ensemble.law()?;
        for &n in &self.n_list()? {
            self.ensemble.spec(n)?;
        }
        Ok(())
    }

    /// Trial count at dimension n.
    pub fn trials_for(&self, n: usize) -> usize {
        self.trials_by_n.iter().find(|&&[k, _]| k == n).map_or(self.trials, |&[_, m]| m)
    }

    /// Dimensions to run, falling back to the experiment's default list.
    pub fn n_list(&self) -> Result<Vec<usize>> {
        if !self.n_list.is_empty() {
            return Ok(self.n_list.clone());
        }
        Ok(match self.experiment.as_str() {
            "edge-cdf" | "sandwich" => vec![200],
            "rate-fit" => vec![100, 200, 400],
            "flow-derivative" => vec![30],
            "k3k4" => vec![50, 100, 200],
            "gronwall" | "locallaw" => vec![100],
            "edge-bound" => vec![200, 400, 800],
            _ => vec![],
        })
    }

    /// SHA-256 of the configuration with workers and output directory
    /// cleared, truncated to 16 hex digits.
    pub fn hash(&self) -> Result<String> {
        let mut canon = self.clone();
        canon.workers = 0;
        canon.out_dir = PathBuf::new();
        let digest = Sha256::digest(canon.to_toml()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}

/// One statistic. Rows of every experiment share this long format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub version: String,
    pub experiment: String,
    pub stat: String,
    pub n: Option<usize>,
    pub e: Option<f64>,
    pub eta: Option<f64>,
    pub t: Option<f64>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub trials: Option<usize>,
    pub seed: u64,
    /// PASS, FAIL or empty for informational rows.
    pub pass: String,
    /// Semicolon-separated key=value pairs.
    pub extra: String,
    pub wall_time: f64,
}

impl ResultRow {
    fn new(stat: impl Into<String>, value: f64) -> Self {
        Self {
            config_hash: String::new(),
            version: VERSION.into(),
            experiment: String::new(),
            stat: stat.into(),
            n: None,
            e: None,
            eta: None,
            t: None,
            value,
            stderr: None,
            trials: None,
            seed: 0,
            pass: String::new(),
            extra: String::new(),
            wall_time: 0.0,
        }
    }

    fn n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    fn z(mut self, z: Complex64) -> Self {
        self.e = Some(z.re);
        self.eta = Some(z.im);
        self
    }

    fn e(mut self, e: f64) -> Self {
        self.e = Some(e);
        self
    }

    fn t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    fn stats(mut self, s: &Stats) -> Self {
        self.stderr = s.stderr();
        self.trials = Some(s.count as usize);
        self
    }

    fn trials(mut self, m: usize) -> Self {
        self.trials = Some(m);
        self
    }

    fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn verdict(mut self, ok: bool) -> Self {
        self.pass = if ok { "PASS" } else { "FAIL" }.into();
        self
    }

    fn extra(mut self, kv: &[(&str, String)]) -> Self {
        self.extra = kv.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
        self
    }

    pub fn passed(&self) -> Option<bool> {
        match self.pass.as_str() {
            "PASS" => Some(true),
            "FAIL" => Some(false),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<ResultRow>,
    pub csv_path: PathBuf,
    pub config_hash: String,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.passed() == Some(false)).count()
    }

    pub fn all_pass(&self) -> bool {
        self.failures() == 0
    }
}

fn failure_rows(failures: &[TrialFailure], n: usize) -> Vec<ResultRow> {
    failures
        .iter()
        .map(|f| {
            ResultRow::new("trial_failure", f.index as f64)
                .n(n)
                .seed(f.seed)
                .extra(&[("message", f.message.clone())])
                .verdict(false)
        })
        .collect()
}

fn check_rows(checks: &[Check]) -> Vec<ResultRow> {
    checks
        .iter()
        .map(|c| {
            ResultRow::new(format!("{}:{}", c.suite, c.name), c.value)
                .extra(&[("threshold", format!("{:e}", c.threshold))])
                .verdict(c.pass)
        })
        .collect()
}

fn z_list(cfg: &RunConfig, default: impl FnOnce() -> Vec<Complex64>) -> Vec<Complex64> {
    if cfg.knobs.z_grid.is_empty() {
        default()
    } else {
        cfg.knobs.z_grid.iter().map(|&[e, eta]| Complex64::new(e, eta)).collect()
    }
}

fn t_list(cfg: &RunConfig, default: &[f64]) -> Vec<f64> {
    if cfg.knobs.t_grid.is_empty() {
        default.to_vec()
    } else {
        cfg.knobs.t_grid.clone()
    }
}

/// z = 2 + i N^{-0.8}, inside the edge domain for every ε < 0.2.
pub fn default_edge_z(n: usize) -> Complex64 {
    Complex64::new(2.0, (n as f64).powf(-0.8))
}

/// Outer corner 2 + N^{-2/3+ε} + i N^{-2/3-ε} of the edge domain.
pub fn edge_corner_z(n: usize, epsilon: f64) -> Complex64 {
    let nf = n as f64;
    Complex64::new(2.0 + nf.powf(-2.0 / 3.0 + epsilon), nf.powf(-2.0 / 3.0 - epsilon))
}

fn tw_distribution(cfg: &RunConfig, beta: u8) -> Result<TwDistribution> {
    match &cfg.knobs.tw_cache {
        Some(dir) => TwDistribution::with_table(beta, std::sync::Arc::new(TwTable::load_or_build(dir)?)),
        None => TwDistribution::new(beta),
    }
}

fn edge_cdf(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let centering = Centering::parse(&cfg.knobs.centering)?;
    let tw = tw_distribution(cfg, cfg.ensemble.beta()?.as_int())?;
    let mut rows = Vec::new();
    for n in cfg.n_list()? {
        let seed = derive_seed(cfg.master_seed, n as u64);
        let exp = EdgeExperiment::run(&cfg.ensemble.spec(n)?, cfg.trials_for(n), seed, cfg.workers)?;
        rows.extend(failure_rows(&exp.failures, n));
        let rescaled = exp.rescaled(centering);
        let d = sup_distance(&rescaled, &tw, cfg.knobs.r0)?;
        let threshold = cfg.knobs.d_max.unwrap_or_else(|| rate_bound(n, d.m, cfg.knobs.omega));
        rows.push(
            ResultRow::new("sup_distance", d.d)
                .n(n)
                .trials(d.m)
                .seed(seed)
                .extra(&[
                    ("centering", centering.label()),
                    ("r0", cfg.knobs.r0.to_string()),
                    ("at", d.at.to_string()),
                    ("threshold", threshold.to_string()),
                ])
                .verdict(d.d <= threshold),
        );
        rows.push(ResultRow::new("dkw_band", d.dkw).n(n).trials(d.m).seed(seed));
        let other = if centering == Centering::Fixed2 { Centering::GoeShift } else { Centering::Fixed2 };
        let (diff, se) = bootstrap_distance_difference(
            &exp.rescaled(Centering::Fixed2),
            &exp.rescaled(Centering::GoeShift),
            &tw,
            cfg.knobs.r0,
            cfg.knobs.bootstrap,
            derive_seed(seed, 7),
        )?;
        let mut row = ResultRow::new("distance_fixed2_minus_goe_shift", diff)
            .n(n)
            .trials(d.m)
            .seed(seed)
            .extra(&[("compared_with", other.label())]);
        row.stderr = Some(se);
        rows.push(row);
    }
    Ok(rows)
}

fn rate_fit_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let centering = Centering::parse(&cfg.knobs.centering)?;
    let tw = tw_distribution(cfg, cfg.ensemble.beta()?.as_int())?;
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for n in cfg.n_list()? {
        let seed = derive_seed(cfg.master_seed, n as u64);
        let exp = EdgeExperiment::run(&cfg.ensemble.spec(n)?, cfg.trials_for(n), seed, cfg.workers)?;
        rows.extend(failure_rows(&exp.failures, n));
        let rescaled = exp.rescaled(centering);
        let d = sup_distance(&rescaled, &tw, cfg.knobs.r0)?;
        let bound = (n as f64).powf(-1.0 / 3.0 + cfg.knobs.omega);
        rows.push(
            ResultRow::new("sup_distance", d.d)
                .n(n)
                .trials(d.m)
                .seed(seed)
                .extra(&[("dkw", d.dkw.to_string()), ("bound", bound.to_string())])
                .verdict(d.d <= bound),
        );
        samples.push((n, rescaled));
    }
    match rate_fit(&samples, &tw, cfg.knobs.r0, cfg.knobs.bootstrap, derive_seed(cfg.master_seed, 11)) {
        Ok(fit) => rows.push(ResultRow::new("alpha_fit", fit.alpha).seed(cfg.master_seed).extra(&[
            ("ci_lo", fit.ci.0.to_string()),
            ("ci_hi", fit.ci.1.to_string()),
            ("log_c", fit.log_c.to_string()),
            ("residuals", fit.residuals.iter().map(|r| format!("{r:.6e}")).collect::<Vec<_>>().join(" ")),
        ])),
        Err(LabError::InconclusiveBudget(msg)) | Err(LabError::InsufficientSamples(msg)) => {
            rows.push(ResultRow::new("alpha_fit", f64::NAN).extra(&[("inconclusive", msg)]))
        }
        Err(e) => return Err(e),
    }
    Ok(rows)
}

fn sandwich_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for n in cfg.n_list()? {
        let seed = derive_seed(cfg.master_seed, n as u64);
        let eta = cfg.knobs.eta.unwrap_or_else(|| (n as f64).powi(-2));
        let obs = SandwichObservable::new(n, cfg.knobs.epsilon, eta, cfg.knobs.gamma)?;
        let energies = sandwich_e_grid(n, cfg.knobs.epsilon, cfg.knobs.e_points);
        let report = sandwich_check(&cfg.ensemble.spec(n)?, &energies, &obs, cfg.trials_for(n), seed, cfg.workers)?;
        rows.extend(failure_rows(&report.failures, n));
        for p in &report.points {
            rows.push(ResultRow::new("prob_below", p.prob.mean).n(n).e(p.e).stats(&p.prob).seed(seed));
            rows.push(ResultRow::new("lower_side", p.lower.mean).n(n).e(p.e).stats(&p.lower).seed(seed));
            rows.push(ResultRow::new("upper_side", p.upper.mean).n(n).e(p.e).stats(&p.upper).seed(seed));
            rows.push(
                ResultRow::new("sandwich_gap_lower", p.lower_gap.mean)
                    .n(n)
                    .e(p.e)
                    .stats(&p.lower_gap)
                    .seed(seed)
                    .extra(&[("upper_gap", p.upper_gap.mean.to_string()), ("upper_se", p.upper_gap.se().to_string())])
                    .verdict(p.holds),
            );
        }
        let needed = 8.0 / 9.0;
        rows.push(
            ResultRow::new("fraction_holding", report.fraction())
                .n(n)
                .trials(cfg.trials_for(n))
                .seed(seed)
                .extra(&[("eta", eta.to_string()), ("points", report.points.len().to_string())])
                .verdict(report.fraction() >= needed - 1e-12),
        );
    }
    Ok(rows)
}

fn flow_derivative_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let beta = cfg.ensemble.beta()?;
    for n in cfg.n_list()? {
        let spec = FlowSpec::flow1(beta, cfg.ensemble.profile.build(n)?);
        for (iz, z) in z_list(cfg, || vec![default_edge_z(n)]).into_iter().enumerate() {
            for (it, t) in t_list(cfg, &[0.25, 1.0]).into_iter().enumerate() {
                let seed = derive_seed(derive_seed(cfg.master_seed, n as u64), (iz * 1000 + it) as u64);
                let r = flow_derivative_check(&spec, z, t, cfg.knobs.dt, cfg.trials_for(n), seed, cfg.workers)?;
                rows.extend(failure_rows(&r.failures, n));
                rows.push(ResultRow::new("lhs", r.lhs.mean).n(n).z(z).t(t).stats(&r.lhs).seed(seed));
                rows.push(ResultRow::new("rhs", r.rhs.mean).n(n).z(z).t(t).stats(&r.rhs).seed(seed));
                rows.push(
                    ResultRow::new("lhs_minus_rhs", r.difference.mean)
                        .n(n)
                        .z(z)
                        .t(t)
                        .stats(&r.difference)
                        .seed(seed)
                        .extra(&[
                            ("sigma_distance", r.sigma_distance().to_string()),
                            ("richardson", r.richardson.to_string()),
                            ("dt", r.dt.to_string()),
                        ])
                        .verdict(r.passes()),
                );
            }
        }
    }
    Ok(rows)
}

fn k3k4_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let beta = cfg.ensemble.beta()?;
    let law = cfg.ensemble.law()?;
    let cumulants = law.cumulants()?;
    let t = t_list(cfg, &[1.0])[0];
    let mut rows = Vec::new();
    let mut reports: Vec<K3K4Report> = Vec::new();
    for n in cfg.n_list()? {
        let spec = FlowSpec::flow2(beta, cfg.ensemble.profile.build(n)?, law);
        let z = z_list(cfg, || vec![edge_corner_z(n, cfg.knobs.epsilon)])[0];
        let seed = derive_seed(cfg.master_seed, n as u64);
        let r = k3_k4_terms(&spec, z, t, cfg.trials_for(n), seed, cfg.workers)?;
        rows.extend(failure_rows(&r.failures, n));
        rows.push(ResultRow::new("k3", r.k3.mean).n(n).z(z).t(t).stats(&r.k3).seed(seed));
        rows.push(ResultRow::new("k4", r.k4.mean).n(n).z(z).t(t).stats(&r.k4).seed(seed));
        rows.push(ResultRow::new("im_m", r.im_m.mean).n(n).z(z).t(t).stats(&r.im_m).seed(seed));
        rows.push(ResultRow::new("k3_scaled", r.k3_scaled()).n(n).z(z).t(t).seed(seed));
        rows.push(ResultRow::new("k4_scaled", r.k4_scaled()).n(n).z(z).t(t).seed(seed));
        for (name, s) in r.k3_families.iter().chain(&r.k4_families) {
            let stat = if r.k3_families.iter().any(|(m, _)| m == name) { "k3_family" } else { "k4_family" };
            rows.push(ResultRow::new(stat, s.mean).n(n).z(z).t(t).stats(s).seed(seed).extra(&[("monomial", name.clone())]));
        }
        if cumulants.get(3) == 0.0 {
            // An identically vanishing K₃ has zero spread.
            let sigma = match (r.k3.mean, r.k3.se()) {
                (m, _) if m == 0.0 => 0.0,
                (m, se) if se > 0.0 => m.abs() / se,
                _ => f64::INFINITY,
            };
            rows.push(ResultRow::new("k3_sigma_from_zero", sigma).n(n).z(z).t(t).verdict(sigma <= 3.0));
        }
        reports.push(r);
    }
    let resolved = |s: &Stats| s.mean.abs() > 3.0 * s.se();
    for w in reports.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let pairs: [(&str, f64, f64, bool, f64); 2] = [
            ("k3_scaled_ratio", a.k3_scaled(), b.k3_scaled(), resolved(&a.k3) && resolved(&b.k3), cumulants.get(3)),
            ("k4_scaled_ratio", a.k4_scaled(), b.k4_scaled(), resolved(&a.k4) && resolved(&b.k4), cumulants.get(4)),
        ];
        for (stat, lo_n, hi_n, ok_signal, kappa) in pairs {
            if kappa == 0.0 {
                continue;
            }
            let ratio = hi_n / lo_n;
            let mut row = ResultRow::new(stat, ratio)
                .n(b.n)
                .extra(&[("from_n", a.n.to_string()), ("resolved", ok_signal.to_string())]);
            if ok_signal {
                row = row.verdict((1.0 / 3.0..=3.0).contains(&ratio));
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

fn gronwall_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let beta = cfg.ensemble.beta()?;
    let times = t_list(cfg, &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
    let mut rows = Vec::new();
    for n in cfg.n_list()? {
        let profile = cfg.ensemble.profile.build(n)?;
        let spec = match cfg.knobs.flow {
            FlowKind::Flow1 => FlowSpec::flow1(beta, profile),
            FlowKind::Flow2 => FlowSpec::flow2(beta, profile, cfg.ensemble.law()?),
        };
        let z = z_list(cfg, || vec![default_edge_z(n)])[0];
        let seed = derive_seed(cfg.master_seed, n as u64);
        let r = gronwall_band(&spec, z, &times, cfg.trials_for(n), seed, cfg.workers)?;
        rows.extend(failure_rows(&r.failures, n));
        rows.push(ResultRow::new("im_m", r.initial.mean).n(n).z(z).t(0.0).stats(&r.initial).seed(seed));
        for (t, s) in r.times.iter().zip(&r.means) {
            rows.push(ResultRow::new("im_m", s.mean).n(n).z(z).t(*t).stats(s).seed(seed));
        }
        rows.push(
            ResultRow::new("gronwall_max", r.max_mean())
                .n(n)
                .z(z)
                .seed(seed)
                .extra(&[("bound", r.bound.to_string())])
                .verdict(r.passes()),
        );
    }
    Ok(rows)
}

fn locallaw_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for n in cfg.n_list()? {
        let zs = z_list(cfg, || {
            [(0.0, 0.1), (1.0, 0.1), (-1.5, 0.1), (0.0, 1.0), (0.0, 10.0)]
                .iter()
                .map(|&(e, eta)| Complex64::new(e, eta))
                .collect()
        });
        let seed = derive_seed(cfg.master_seed, n as u64);
        let stats = locallaw_deviation(&cfg.ensemble.spec(n)?, &zs, cfg.trials_for(n), seed, cfg.workers, cfg.knobs.epsilon)?;
        let limit = (n as f64).powf(cfg.knobs.tau);
        for s in &stats {
            let m = s.entry_ratios.len();
            let q99e = s.entry_quantile(0.99);
            let q99t = s.trace_quantile(0.99);
            rows.push(ResultRow::new("entry_ratio_q50", s.entry_quantile(0.5)).n(n).z(s.z).trials(m).seed(seed));
            rows.push(
                ResultRow::new("entry_ratio_q99", q99e)
                    .n(n)
                    .z(s.z)
                    .trials(m)
                    .seed(seed)
                    .extra(&[("limit", limit.to_string())])
                    .verdict(q99e <= limit),
            );
            rows.push(ResultRow::new("trace_ratio_q50", s.trace_quantile(0.5)).n(n).z(s.z).trials(m).seed(seed));
            rows.push(
                ResultRow::new("trace_ratio_q99", q99t)
                    .n(n)
                    .z(s.z)
                    .trials(m)
                    .seed(seed)
                    .extra(&[("limit", limit.to_string())])
                    .verdict(q99t <= limit),
            );
        }
    }
    Ok(rows)
}

fn edge_bound_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut scaled = Vec::new();
    for n in cfg.n_list()? {
        let z = z_list(cfg, || vec![default_edge_z(n)])[0];
        let seed = derive_seed(cfg.master_seed, n as u64);
        let domain = EdgeDomainSpec::new(n, cfg.knobs.epsilon);
        let r = im_mn_edge_expectation(&cfg.ensemble.spec(n)?, z, &domain, cfg.trials_for(n), seed, cfg.workers)?;
        rows.push(ResultRow::new("im_m", r.mean()).n(n).z(z).stats(&r.stats).seed(seed));
        let factor = (n as f64).powf(1.0 / 3.0);
        let mut row = ResultRow::new("im_m_scaled", r.scaled()).n(n).z(z).stats(&r.stats).seed(seed);
        row.stderr = Some(r.stderr() * factor);
        rows.push(row);
        scaled.push(r.scaled());
    }
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    rows.push(
        ResultRow::new("band_ratio", hi / lo)
            .extra(&[("limit", cfg.knobs.band_ratio.to_string())])
            .verdict(lo > 0.0 && hi / lo <= cfg.knobs.band_ratio),
    );
    Ok(rows)
}

fn tw_table_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    // Always rebuilt: a cached table carries no accuracy certificate.
    let table = TwTable::build()?;
    if let Some(dir) = &cfg.knobs.tw_cache {
        std::fs::create_dir_all(dir)?;
        table.write_csv(std::fs::File::create(dir.join(CACHE_FILE))?, true)?;
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("tw_table.csv");
    table.write_csv(std::fs::File::create(&path)?, false)?;
    let mut rows = Vec::new();
    for (k, beta) in [1u8, 2].into_iter().enumerate() {
        rows.push(
            ResultRow::new(format!("table_accuracy_beta{beta}"), table.accuracy[k])
                .extra(&[("path", path.display().to_string())])
                .verdict(table.accuracy[k] <= 1e-7),
        );
        let tw = TwDistribution::with_table(beta, std::sync::Arc::new(table.clone()))?;
        rows.push(ResultRow::new(format!("mean_beta{beta}"), tw.mean()));
    }
    Ok(rows)
}

fn verify_rows(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let mut checks = identity_suites(cfg.master_seed)?;
    checks.extend(gap_suite(60)?);
    checks.extend(tracy_widom_suite()?);
    Ok(check_rows(&checks))
}

/// Rows of one experiment without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    match cfg.experiment.as_str() {
        "edge-cdf" => edge_cdf(cfg),
        "rate-fit" => rate_fit_rows(cfg),
        "sandwich" => sandwich_rows(cfg),
        "flow-derivative" => flow_derivative_rows(cfg),
        "k3k4" => k3k4_rows(cfg),
        "gronwall" => gronwall_rows(cfg),
        "locallaw" => locallaw_rows(cfg),
        "edge-bound" => edge_bound_rows(cfg),
        "tw-table" => tw_table_rows(cfg),
        "verify" => verify_rows(cfg),
        other => Err(LabError::Config(format!("unknown experiment '{other}'"))),
    }
}

/// Append rows to a CSV file, writing the header only when the file is new.
pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Execute the configured experiment and append its rows to
/// `<out_dir>/<experiment>.csv`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let hash = cfg.hash()?;
    let start = Instant::now();
    let mut rows = execute(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    for r in &mut rows {
        r.config_hash = hash.clone();
        r.experiment = cfg.experiment.clone();
        r.wall_time = wall;
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join(format!("{}.csv", cfg.experiment));
    append_rows(&csv_path, &rows)?;
    Ok(RunOutcome { rows, csv_path, config_hash: hash })
}
