//! End-to-end runs from a declarative config: ingest, propensity fit or
//! external scores, stratification, distances, matching, diagnostics, and
//! reproducible artifacts on disk (match file, discard log, balance
//! reports, QQ data, run manifest).

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, BalanceReport};
use crate::distance::{self, DistanceSource, ExternalDistances, RankMetric};
use crate::error::{Error, Result};
use crate::ingest::{self, CovariateTable, Schema};
use crate::matcher::{self, CommonSupportPolicy, FineBalanceSpec, MatchConfig, MatchResult};
use crate::propensity::{self, PropensityResult, StratumPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    Tab,
}

impl Delimiter {
    pub fn byte(self) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
        }
    }
}

impl std::str::FromStr for Delimiter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comma" => Ok(Delimiter::Comma),
            "tab" => Ok(Delimiter::Tab),
            other => Err(Error::Config(format!(
                "unknown delimiter {other:?} (expected comma or tab)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Subset,
    Trim,
    Fail,
}

impl Policy {
    fn to_matcher(self) -> CommonSupportPolicy {
        match self {
            Policy::Subset => CommonSupportPolicy::SubsetMatch,
            Policy::Trim => CommonSupportPolicy::TrimScores,
            Policy::Fail => CommonSupportPolicy::Fail,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Subset => "subset",
            Policy::Trim => "trim",
            Policy::Fail => "fail",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subset" => Ok(Policy::Subset),
            "trim" => Ok(Policy::Trim),
            "fail" => Ok(Policy::Fail),
            other => Err(Error::Config(format!(
                "unknown policy {other:?} (expected subset, trim, or fail)"
            ))),
        }
    }
}

/// Matching structure: entire-number strata with variable ratios, or a
/// plain optimal pair match on the full sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Variable,
    Pair,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Variable => "variable",
            MatchMode::Pair => "pair",
        }
    }
}

impl std::str::FromStr for MatchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variable" => Ok(MatchMode::Variable),
            "pair" => Ok(MatchMode::Pair),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected variable or pair)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemaConfig {
    pub treatment: String,
    pub id: Option<String>,
    pub covariates: Vec<String>,
    pub nominal: Vec<String>,
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropensityConfig {
    pub ridge: f64,
    /// Column of externally fitted scores; bypasses the logistic fit.
    pub scores: Option<String>,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            ridge: 0.0,
            scores: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchingConfig {
    /// Maximum controls per treated subject (K).
    pub k: usize,
    /// Caliper width as a multiple of the score SD.
    pub caliper: f64,
    /// Penalty per caliper width of violation; derived from the median
    /// distance when absent.
    pub penalty_scale: Option<f64>,
    /// Columns whose interaction is balanced near-finely.
    pub fine_balance: Vec<String>,
    pub policy: Policy,
    pub mode: MatchMode,
    /// Optional treated-by-control distance file, bypassing the
    /// rank-Mahalanobis construction.
    pub distance_file: Option<PathBuf>,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        MatchingConfig {
            k: 5,
            caliper: 0.5,
            penalty_scale: None,
            fine_balance: Vec::new(),
            policy: Policy::default(),
            mode: MatchMode::default(),
            distance_file: None,
        }
    }
}

/// Everything one run needs; parse from TOML or build programmatically.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub delimiter: Delimiter,
    pub seed: u64,
    /// Monte-Carlo draws per permutation p-value.
    pub draws: usize,
    pub schema: SchemaConfig,
    pub propensity: PropensityConfig,
    pub matching: MatchingConfig,
    /// Dump each stratum's flow network in arc-list form.
    pub dump_networks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: PathBuf::new(),
            out: PathBuf::new(),
            delimiter: Delimiter::default(),
            seed: 20140101,
            draws: 1000,
            schema: SchemaConfig::default(),
            propensity: PropensityConfig::default(),
            matching: MatchingConfig::default(),
            dump_networks: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::Config("no input file given".to_string()));
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::Config("no output directory given".to_string()));
        }
        if self.schema.treatment.is_empty() {
            return Err(Error::Config("no treatment column given".to_string()));
        }
        if self.matching.k < 2 {
            return Err(Error::Config(format!(
                "K must be at least 2, got {}",
                self.matching.k
            )));
        }
        if !(self.matching.caliper > 0.0) {
            return Err(Error::Config("caliper multiplier must be positive".to_string()));
        }
        if let Some(p) = self.matching.penalty_scale {
            if !(p > 0.0) {
                return Err(Error::Config("penalty scale must be positive".to_string()));
            }
        }
        if self.draws == 0 {
            return Err(Error::Config("draws must be at least 1".to_string()));
        }
        if let Some(s) = &self.propensity.scores {
            if self.matching.fine_balance.iter().any(|c| c == s) {
                return Err(Error::Config(
                    "the score column cannot be a fine-balance column".to_string(),
                ));
            }
        }
        Ok(())
    }

    fn to_schema(&self) -> Schema {
        Schema {
            treatment: self.schema.treatment.clone(),
            id: self.schema.id.clone(),
            covariates: self.schema.covariates.clone(),
            nominal: self.schema.nominal.clone(),
            exclude: self.schema.exclude.clone(),
            scores: self.propensity.scores.clone(),
            delimiter: self.delimiter.byte(),
        }
    }
}

/// Maps requested fine-balance columns to covariate indices, substituting
/// the one-hot expansion for nominal source columns.
fn resolve_fine_balance(table: &CovariateTable, names: &[String]) -> Result<Option<FineBalanceSpec>> {
    if names.is_empty() {
        return Ok(None);
    }
    let mut columns: Vec<usize> = Vec::new();
    for name in names {
        if let Some(j) = table.find_covariate(name) {
            columns.push(j);
        } else {
            let expanded = table.covariates_from_source(name);
            if expanded.is_empty() {
                return Err(Error::Config(format!(
                    "unknown fine-balance column {name:?}"
                )));
            }
            columns.extend(expanded);
        }
    }
    columns.dedup();
    let spec = matcher::interact(table, &columns)?;
    if spec.num_levels() < 2 {
        return Err(Error::Config(format!(
            "fine-balance variable {:?} has fewer than 2 observed levels",
            spec.label
        )));
    }
    Ok(Some(spec))
}

/// Run manifest: the config echo plus everything `compare` needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub run: ManifestRun,
    pub counts: ManifestCounts,
    pub strata: Vec<ManifestStratum>,
    /// Covariate name to matched-sample standardized difference.
    pub balance_matched: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRun {
    pub input: String,
    pub out: String,
    pub seed: u64,
    pub draws: usize,
    pub mode: String,
    pub k: usize,
    pub caliper: f64,
    pub penalty_scale: f64,
    pub ridge: f64,
    pub scores_column: Option<String>,
    pub distance_file: Option<String>,
    pub fine_balance: Vec<String>,
    pub fine_balance_levels: Vec<String>,
    pub policy: String,
    pub cost_scale: i64,
    pub p_value_method: String,
    pub separation_warning: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub subjects: usize,
    pub treated: usize,
    pub controls: usize,
    pub matched_sets: usize,
    pub matched_controls: usize,
    pub discarded_treated: usize,
    pub discarded_controls: usize,
    pub effective_sample_size: f64,
    pub total_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_deviation: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestStratum {
    pub stratum: usize,
    pub n_treated: usize,
    pub n_controls: usize,
    pub ratio: usize,
    pub subset: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<u64>,
    pub distance: f64,
}

/// Everything a finished run produced, with the artifacts already on disk.
pub struct RunSummary {
    pub table: CovariateTable,
    pub propensity: PropensityResult,
    pub result: MatchResult,
    pub unmatched: BalanceReport,
    pub matched: BalanceReport,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

/// Executes ingest -> propensity -> stratify -> distance -> match ->
/// diagnostics and writes all artifacts; nothing is written if any stage
/// fails.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let schema = config.to_schema();
    let raw_table = ingest::load_table(&config.input, &schema)?;
    let table = ingest::impute_with_indicators(&raw_table)?;

    let prop = match &config.propensity.scores {
        Some(_) => {
            let scores = table
                .external_scores()
                .expect("schema carried the score column")
                .to_vec();
            PropensityResult::from_scores(scores)?
        }
        None => propensity::fit_propensity(&table, config.propensity.ridge)?,
    };

    let partition = match config.matching.mode {
        MatchMode::Variable => propensity::stratify(&prop, config.matching.k),
        MatchMode::Pair => StratumPartition::single(table.n()),
    };

    let fine_balance = resolve_fine_balance(&table, &config.matching.fine_balance)?;

    let (source, penalty_scale) = match &config.matching.distance_file {
        Some(path) => (
            DistanceSource::External(ExternalDistances::load(path, config.delimiter.byte())?),
            0.0,
        ),
        None => {
            let columns: Vec<Vec<f64>> = (0..table.n_covariates())
                .map(|j| table.column_values(j))
                .collect();
            let ranks = distance::rank_transform(&columns);
            let metric = RankMetric::from_ranks(&ranks)?;
            let penalty_scale = config.matching.penalty_scale.unwrap_or_else(|| {
                let mut plain = Vec::new();
                for stratum in 1..=partition.k_max {
                    let treated = partition.members(stratum, &table, true);
                    let controls = partition.members(stratum, &table, false);
                    if !treated.is_empty() && !controls.is_empty() {
                        plain.push(metric.matrix(stratum, &treated, &controls, &|i| {
                            table.subject(i).id.clone()
                        }));
                    }
                }
                distance::default_penalty_scale(&plain)
            });
            (
                DistanceSource::Computed {
                    metric,
                    scores: prop.scores.clone(),
                    score_sd: prop.score_sd,
                    width_multiplier: config.matching.caliper,
                    penalty_scale,
                },
                penalty_scale,
            )
        }
    };

    let match_config = MatchConfig {
        k_max: partition.k_max,
        fine_balance: fine_balance.clone(),
        policy: config.matching.policy.to_matcher(),
    };
    let result = matcher::variable_ratio_match(&table, &prop, &partition, &match_config, &source)?;
    if result.is_empty() {
        return Err(Error::EmptyMatch);
    }

    let unmatched = diagnostics::unmatched_report(&table, config.draws, config.seed);
    let matched = diagnostics::matched_report(&table, &result, config.draws, config.seed)?;
    let qq = diagnostics::qq_uniform(
        &matched.rows.iter().map(|r| r.p_value).collect::<Vec<_>>(),
    )?;

    let manifest = build_manifest(config, &table, &prop, &result, &matched, penalty_scale, fine_balance.as_ref());

    let mut artifacts: Vec<(PathBuf, String)> = vec![
        (config.out.join("match.csv"), match_csv(&result)),
        (config.out.join("discards.csv"), discards_csv(&result)),
        (
            config.out.join("balance_unmatched.csv"),
            balance_csv(&unmatched),
        ),
        (
            config.out.join("balance_matched.csv"),
            balance_csv(&matched),
        ),
        (
            config.out.join("balance_unmatched.txt"),
            balance_text(&unmatched),
        ),
        (
            config.out.join("balance_matched.txt"),
            balance_text(&matched),
        ),
        (config.out.join("qq_matched.csv"), qq_csv(&qq)),
        (
            config.out.join("manifest.toml"),
            toml::to_string(&manifest).expect("manifest serializes"),
        ),
    ];
    if config.dump_networks {
        for dump in network_dumps(&table, &prop, &partition, &match_config, &source)? {
            artifacts.push((config.out.join(dump.0), dump.1));
        }
    }

    write_artifacts(&config.out, &artifacts)?;

    Ok(RunSummary {
        table,
        propensity: prop,
        result,
        unmatched,
        matched,
        manifest,
        manifest_path: config.out.join("manifest.toml"),
    })
}

fn build_manifest(
    config: &RunConfig,
    table: &CovariateTable,
    prop: &PropensityResult,
    result: &MatchResult,
    matched: &BalanceReport,
    penalty_scale: f64,
    fine_balance: Option<&FineBalanceSpec>,
) -> Manifest {
    Manifest {
        run: ManifestRun {
            input: config.input.display().to_string(),
            out: config.out.display().to_string(),
            seed: config.seed,
            draws: config.draws,
            mode: config.matching.mode.as_str().to_string(),
            k: config.matching.k,
            caliper: config.matching.caliper,
            penalty_scale,
            ridge: config.propensity.ridge,
            scores_column: config.propensity.scores.clone(),
            distance_file: config
                .matching
                .distance_file
                .as_ref()
                .map(|p| p.display().to_string()),
            fine_balance: config.matching.fine_balance.clone(),
            fine_balance_levels: fine_balance
                .map(|s| s.level_labels.clone())
                .unwrap_or_default(),
            policy: config.matching.policy.as_str().to_string(),
            cost_scale: matcher::COST_SCALE,
            p_value_method: "stratified_permutation".to_string(),
            separation_warning: prop.separation_warning,
        },
        counts: ManifestCounts {
            subjects: table.n(),
            treated: table.n_treated(),
            controls: table.n_controls(),
            matched_sets: result.sets.len(),
            matched_controls: result.matched_controls(),
            discarded_treated: result.discarded_treated.len(),
            discarded_controls: result
                .discarded_controls
                .iter()
                .filter(|d| d.reason != matcher::DiscardReason::Unmatched)
                .count(),
            effective_sample_size: matched.effective_sample_size.unwrap_or(0.0),
            total_distance: result.total_distance(),
            total_deviation: result.total_deviation(),
        },
        strata: result
            .strata
            .iter()
            .map(|s| ManifestStratum {
                stratum: s.stratum,
                n_treated: s.n_treated,
                n_controls: s.n_controls,
                ratio: s.ratio,
                subset: s.subset,
                deviation: s.deviation,
                distance: s.cost_scaled as f64 / matcher::COST_SCALE as f64,
            })
            .collect(),
        balance_matched: matched
            .rows
            .iter()
            .map(|r| (r.covariate.clone(), r.std_diff))
            .collect(),
    }
}

fn write_artifacts(out_dir: &Path, artifacts: &[(PathBuf, String)]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut written: Vec<&Path> = Vec::new();
    for (path, content) in artifacts {
        if let Err(source) = std::fs::write(path, content) {
            for w in written {
                let _ = std::fs::remove_file(w);
            }
            return Err(Error::Io {
                path: path.clone(),
                source,
            });
        }
        written.push(path);
    }
    Ok(())
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6}")
}

fn match_csv(result: &MatchResult) -> String {
    let mut out = String::from("set_id,stratum,treated_id,control_id,k_i\n");
    for (set_id, set) in result.sets.iter().enumerate() {
        for control in &set.control_ids {
            writeln!(
                out,
                "{},{},{},{},{}",
                set_id + 1,
                set.stratum,
                csv_field(&set.treated_id),
                csv_field(control),
                set.k()
            )
            .unwrap();
        }
    }
    out
}

fn discards_csv(result: &MatchResult) -> String {
    let mut out = String::from("id,role,reason\n");
    for d in &result.discarded_treated {
        writeln!(out, "{},treated,{}", csv_field(&d.id), d.reason.code()).unwrap();
    }
    for d in &result.discarded_controls {
        writeln!(out, "{},control,{}", csv_field(&d.id), d.reason.code()).unwrap();
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn balance_csv(report: &BalanceReport) -> String {
    let mut out = String::from("covariate,mean_control,mean_treated,std_diff,p_value,zero_variance\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&r.covariate),
            fmt_num(r.mean_control),
            fmt_num(r.mean_treated),
            fmt_num(r.std_diff),
            fmt_num(r.p_value),
            if r.zero_variance { 1 } else { 0 }
        )
        .unwrap();
    }
    out
}

fn balance_text(report: &BalanceReport) -> String {
    let name_w = report
        .rows
        .iter()
        .map(|r| r.covariate.len())
        .max()
        .unwrap_or(9)
        .max(9);
    let mut out = String::new();
    match report.effective_sample_size {
        Some(ess) => writeln!(
            out,
            "Balance ({} sample), effective sample size {:.1} pairs",
            report.label.as_str(),
            ess
        )
        .unwrap(),
        None => writeln!(out, "Balance ({} sample)", report.label.as_str()).unwrap(),
    }
    writeln!(
        out,
        "{:<name_w$}  {:>10}  {:>10}  {:>9}  {:>7}",
        "covariate", "mean C", "mean T", "std diff", "p-val"
    )
    .unwrap();
    for r in &report.rows {
        writeln!(
            out,
            "{:<name_w$}  {:>10.3}  {:>10.3}  {:>9.3}  {:>7.3}",
            r.covariate, r.mean_control, r.mean_treated, r.std_diff, r.p_value
        )
        .unwrap();
    }
    out
}

fn qq_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("uniform_quantile,p_value\n");
    for (u, p) in points {
        writeln!(out, "{},{}", fmt_num(*u), fmt_num(*p)).unwrap();
    }
    out
}

/// Rebuilds each stratum's flow network (as the matcher would solve it)
/// in plain-text arc-list form.
fn network_dumps(
    table: &CovariateTable,
    prop: &PropensityResult,
    partition: &StratumPartition,
    match_config: &MatchConfig,
    source: &DistanceSource,
) -> Result<Vec<(String, String)>> {
    let plan = matcher::plan_strata(table, prop, partition, match_config)?;
    let mut dumps = Vec::new();
    for sp in &plan.strata {
        let fb = match_config.fine_balance.as_ref().map(|spec| matcher::BalanceLevels {
            num_levels: spec.num_levels(),
            treated: sp.treated.iter().map(|&i| spec.level_of[i]).collect(),
            controls: sp.controls.iter().map(|&i| spec.level_of[i]).collect(),
        });
        let net = match sp.action {
            matcher::StratumAction::DiscardAll => continue,
            matcher::StratumAction::Subset => {
                let dm = source
                    .matrix_for(sp.stratum, table, &sp.treated, &sp.controls)?
                    .transposed();
                let fb = fb.map(|b| matcher::BalanceLevels {
                    num_levels: b.num_levels,
                    treated: b.controls,
                    controls: b.treated,
                });
                matcher::build_network(&dm, 1, fb.as_ref())?.0
            }
            matcher::StratumAction::Fixed(ratio) => {
                let dm = source.matrix_for(sp.stratum, table, &sp.treated, &sp.controls)?;
                matcher::build_network(&dm, ratio, fb.as_ref())?.0
            }
        };
        dumps.push((
            format!("network_stratum_{}.txt", sp.stratum),
            net.to_arc_list(),
        ));
    }
    Ok(dumps)
}

/// Side-by-side comparison of two run manifests.
#[derive(Debug, Clone)]
pub struct RunComparison {
    /// (covariate, std_diff in A, std_diff in B) over the shared covariates.
    pub rows: Vec<(String, f64, f64)>,
    /// Covariates with |std_diff| >= 0.1 in (A, B), over each run's own set.
    pub ge_010: (usize, usize),
    /// Covariates with |std_diff| >= 0.2 in (A, B).
    pub ge_020: (usize, usize),
    pub effective_sample_size: (f64, f64),
    pub discarded_treated: (usize, usize),
    pub discarded_controls: (usize, usize),
    pub warning: Option<String>,
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn compare_runs(manifest_a: &Path, manifest_b: &Path) -> Result<RunComparison> {
    let a = load_manifest(manifest_a)?;
    let b = load_manifest(manifest_b)?;
    compare_manifests(&a, &b)
}

pub fn compare_manifests(a: &Manifest, b: &Manifest) -> Result<RunComparison> {
    let count = |m: &Manifest, cut: f64| {
        m.balance_matched
            .values()
            .filter(|sd| sd.abs() >= cut)
            .count()
    };
    let mut rows = Vec::new();
    for (name, sd_a) in &a.balance_matched {
        if let Some(sd_b) = b.balance_matched.get(name) {
            rows.push((name.clone(), *sd_a, *sd_b));
        }
    }
    let warning = if a.balance_matched.len() != rows.len() || b.balance_matched.len() != rows.len()
    {
        Some(format!(
            "covariate sets differ; comparing the {} shared covariates",
            rows.len()
        ))
    } else {
        None
    };
    Ok(RunComparison {
        rows,
        ge_010: (count(a, 0.1), count(b, 0.1)),
        ge_020: (count(a, 0.2), count(b, 0.2)),
        effective_sample_size: (
            a.counts.effective_sample_size,
            b.counts.effective_sample_size,
        ),
        discarded_treated: (a.counts.discarded_treated, b.counts.discarded_treated),
        discarded_controls: (a.counts.discarded_controls, b.counts.discarded_controls),
        warning,
    })
}

impl fmt::Display for RunComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(w) = &self.warning {
            writeln!(f, "warning: {w}")?;
        }
        let name_w = self
            .rows
            .iter()
            .map(|(n, _, _)| n.len())
            .max()
            .unwrap_or(9)
            .max(9);
        writeln!(
            f,
            "{:<name_w$}  {:>10}  {:>10}",
            "covariate", "std diff A", "std diff B"
        )?;
        for (name, sa, sb) in &self.rows {
            writeln!(f, "{name:<name_w$}  {sa:>10.3}  {sb:>10.3}")?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "|std diff| >= 0.1: {} vs {}",
            self.ge_010.0, self.ge_010.1
        )?;
        writeln!(
            f,
            "|std diff| >= 0.2: {} vs {}",
            self.ge_020.0, self.ge_020.1
        )?;
        writeln!(
            f,
            "effective sample size: {:.1} vs {:.1}",
            self.effective_sample_size.0, self.effective_sample_size.1
        )?;
        writeln!(
            f,
            "discarded treated: {} vs {}",
            self.discarded_treated.0, self.discarded_treated.1
        )?;
        write!(
            f,
            "discarded controls: {} vs {}",
            self.discarded_controls.0, self.discarded_controls.1
        )
    }
}
