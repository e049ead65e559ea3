//! Experiment configuration files.
//!
//! A config is TOML with the sections `[experiment]`, `[transport]`,
//! `[alternative]` and `[output]`. Unknown keys are rejected. A run manifest
//! written by this tool is also accepted: its `[config]` table is used.

use std::path::Path;
use std::sync::Arc;

use dfresid::harness::{Alternative, AnchorKind, Design, ErrorLaw, ExperimentConfig, Psi};
use dfresid::model::ModelSpec;
use dfresid::process::{GridSpec, StatisticKind};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

fn default_statistic() -> String {
    "ks_abs".into()
}

fn default_errors() -> String {
    "normal".into()
}

fn default_error_sd() -> f64 {
    1.0
}

fn default_anchors() -> String {
    "halton".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// A single design id; alternatively `designs` lists several.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designs: Option<Vec<String>>,
    pub model: String,
    pub n: usize,
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_statistic")]
    pub statistic: String,
    #[serde(default = "default_errors")]
    pub errors: String,
    /// Scale of the error law (which has unit variance).
    #[serde(default = "default_error_sd")]
    pub error_sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_d: Option<usize>,
    #[serde(default)]
    pub studentize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportSection {
    #[serde(default = "default_anchors")]
    pub anchors: String,
    #[serde(default)]
    pub resample: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self {
            anchors: default_anchors(),
            resample: false,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternativeSection {
    pub psi: String,
    pub amplitude: f64,
    #[serde(default)]
    pub local_scaling: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Also write ECDFs of the statistic on the raw residual process.
    #[serde(default)]
    pub raw: bool,
    /// Write `(x, Kolmogorov cdf, empirical cdf)` tables.
    #[serde(default)]
    pub plot_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub transport: TransportSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<AlternativeSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// A validated configuration: the normalized file form (all defaults made
/// explicit) and one experiment per design.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub file: FileConfig,
    pub experiments: Vec<ExperimentConfig>,
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `section.key=value` overrides to a parsed table.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override `{item}` is not of the form section.key=value")))?;
        let (section, field) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| CliError::Usage(format!("override key `{key}` is not of the form section.key")))?;
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let sub = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{section}` is not a section")))?;
        sub.insert(field.to_string(), parse_value(value.trim()));
    }
    Ok(())
}

/// Reads a config (or manifest) file, applies overrides and validates it.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ResolvedConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if table.contains_key("command") {
        table = match table.remove("config") {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(CliError::Config("manifest has no [config] table".into())),
        };
    }
    apply_overrides(&mut table, overrides)?;
    let file: FileConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    resolve(file)
}

fn resolve(mut file: FileConfig) -> Result<ResolvedConfig> {
    let ex = &mut file.experiment;
    let designs = match (ex.design.take(), ex.designs.take()) {
        (Some(d), None) => vec![d],
        (None, Some(list)) if !list.is_empty() => list,
        (Some(_), Some(_)) => return Err(CliError::Config("give either `design` or `designs`, not both".into())),
        _ => return Err(CliError::Config("missing `design`".into())),
    };
    let model = ModelSpec::parse(&ex.model)?;
    let statistic = StatisticKind::parse(&ex.statistic)?;
    let errors = ErrorLaw::parse(&ex.errors)?;
    let anchors = AnchorKind::parse(&file.transport.anchors)?;
    let alternative = file
        .alternative
        .as_ref()
        .map(|a| {
            Psi::parse(&a.psi).map(|psi| Alternative {
                psi,
                amplitude: a.amplitude,
                local_scaling: a.local_scaling,
            })
        })
        .transpose()?;
    if ex.seed.is_some_and(|s| s > i64::MAX as u64) {
        return Err(CliError::Config("seed must not exceed 2^63 - 1".into()));
    }
    ex.basis_d.get_or_insert(model.dim());
    ex.theta.get_or_insert_with(|| vec![1.0; model.dim()]);
    if model.covariate_dim() >= 2 {
        file.transport
            .grid
            .get_or_insert(GridSpec::default_for(model.covariate_dim()).resolution);
    }

    let mut experiments = Vec::with_capacity(designs.len());
    for id in &designs {
        let mut cfg = ExperimentConfig::new(Design::parse(id)?, model, ex.n, ex.reps, ex.seed.unwrap_or(0));
        cfg.statistic = statistic;
        cfg.errors = errors;
        cfg.error_sd = ex.error_sd;
        cfg.theta = ex.theta.clone();
        cfg.basis_d = ex.basis_d;
        cfg.studentize = ex.studentize;
        cfg.anchors = anchors;
        cfg.resample_anchors = file.transport.resample;
        cfg.grid = file.transport.grid;
        cfg.alternative = alternative;
        cfg.validate()?;
        experiments.push(cfg);
    }
    ex.designs = Some(designs);
    Ok(ResolvedConfig { file, experiments })
}

/// A null experiment on fixed covariates, used for test p-values.
pub fn fixed_design(x: &[f64], p: usize) -> Design {
    Design::Fixed {
        x: Arc::new(x.to_vec()),
        p,
    }
}
