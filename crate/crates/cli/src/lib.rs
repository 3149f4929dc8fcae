//! Command-line surface for `multigen`: run configuration, argument parsing
//! with config-file merging, and command execution.
//!
//! A [`RunConfig`] is the single source of truth for a run. `parse_cli`
//! builds one from the command line, optionally starting from a JSON config
//! file; flags override file values. The JSON form is documented in
//! `docs/config.md`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use multigen::experiments::{replicate, Experiment, DEFAULT_SEED};
use multigen::io::{self as mio, render, render_panel, Format, PanelView, RunHeader};
use multigen::{
    analytic_moments, beta_k_estimate, fit_latent_factor, group_level_estimate,
    multigen_regression, sibling_regression, AncestorLine, Control, Error, ModelSpec, MomentSet,
    PairOptions, Severity, SimTopology,
};

pub const SCHEMA_ID: &str = "multigen.run-config/v1";

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_id: String,
    pub seed: u64,
    #[serde(default)]
    pub verbosity: u8,
    /// Worker threads; `None` uses every core. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    Simulate(SimulateConfig),
    Moments(MomentsConfig),
    Fit(FitConfig),
    Regress(RegressConfig),
    Replicate(ReplicateConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Moments(_) => "moments",
            Command::Fit(_) => "fit",
            Command::Regress(_) => "regress",
            Command::Replicate(_) => "replicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelSpec,
    pub dynasties: u64,
    pub generations: u32,
    #[serde(default = "one")]
    pub children_per_family: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_persons: Option<u64>,
    #[serde(default)]
    pub include_latent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

fn one() -> u32 {
    1
}

fn default_max_k() -> u32 {
    7
}

fn default_lags() -> Vec<u32> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    pub model: ModelSpec,
    #[serde(default = "default_max_k")]
    pub max_k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Ancestor correlations, `betas[0]` at k = 1.
    pub betas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Descendant y on one ancestor's y (`--lags` holds a single k).
    BetaK,
    /// Child y on several ancestors plus controls.
    Multigen,
    /// Child y on a sibling's y, optionally with the parent.
    Sibling,
    /// Dynasty-mean y on the previous generation's dynasty mean.
    Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressConfig {
    pub panel: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel_format: Option<Format>,
    pub estimator: Estimator,
    #[serde(default = "default_lags")]
    pub lags: Vec<u32>,
    #[serde(default)]
    pub controls: Vec<Control>,
    #[serde(default)]
    pub include_parent: bool,
    #[serde(default)]
    pub line: AncestorLine,
    /// Only descendants in this generation enter as observations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<u32>,
    /// `(from, to)` generations for the group estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_generations: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateConfig {
    pub experiment: Experiment,
    /// Output directory for report.json, series.csv and table.txt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Parses a config document; the error names the offending path.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            format!("config: at `{path}`: {}", e.inner())
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Help or version text; not a failure.
    #[error("{0}")]
    Info(String),
    #[error("{}", .0.join("\n"))]
    Usage(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => exit::OK,
            CliError::Usage(_) => exit::USAGE,
        }
    }
}

/// Exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        return exit::NUMERICAL;
    }
    match err {
        Error::Argument(_)
        | Error::InvalidModel(_)
        | Error::Topology(_)
        | Error::Mismatch(_)
        | Error::MemoryCap { .. } => exit::USAGE,
        _ => exit::DATA,
    }
}

#[derive(Parser, Debug)]
#[command(name = "multigen", version, about = "Multigenerational transmission models: simulate, estimate, replicate")]
struct Cli {
    /// JSON run configuration; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More progress output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Optional when `--config` names the command.
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Simulate a pedigree panel.
    #[command(allow_negative_numbers = true)]
    Simulate {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        dynasties: Option<u64>,
        #[arg(long)]
        generations: Option<u32>,
        /// Children per family.
        #[arg(long)]
        children: Option<u32>,
        #[arg(long)]
        max_persons: Option<u64>,
        /// Also export the latent endowments.
        #[arg(long)]
        include_latent: bool,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Closed-form kinship moments of a model.
    #[command(allow_negative_numbers = true)]
    Moments {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        max_k: Option<u32>,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Fit the latent factor model to ancestor correlations.
    #[command(allow_negative_numbers = true)]
    Fit {
        #[arg(long)]
        beta1: Option<f64>,
        #[arg(long)]
        beta2: Option<f64>,
        /// Comma-separated beta_1, beta_2, ...
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Run an estimator on a panel file.
    Regress {
        /// Panel file written by `simulate` or in the same layout.
        #[arg(long)]
        panel: Option<PathBuf>,
        /// csv or json; guessed from the panel extension when absent.
        #[arg(long)]
        panel_format: Option<String>,
        #[arg(long, value_enum)]
        estimator: Option<Estimator>,
        /// Comma-separated ancestor lags.
        #[arg(long, value_delimiter = ',')]
        lags: Option<Vec<u32>>,
        /// Comma-separated controls (mother_y, spouse_y).
        #[arg(long, value_delimiter = ',')]
        controls: Option<Vec<String>>,
        /// Add the parent's y to the sibling regression.
        #[arg(long)]
        include_parent: bool,
        /// Ancestor line: paternal or maternal.
        #[arg(long)]
        line: Option<String>,
        /// Keep only descendants born in this generation.
        #[arg(long)]
        generation: Option<u32>,
        /// Group estimator generations as FROM,TO.
        #[arg(long, value_delimiter = ',')]
        group_generations: Option<Vec<u32>>,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Replicate a figure or the regression table.
    Replicate {
        /// fig1a, fig1b, fig2a, fig2b or table2.
        experiment: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct OutputFlags {
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json or text; guessed from --out when absent.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug, Default)]
struct ModelFlags {
    /// latent_factor, grandparent_ar2, multiplicity, poverty_trap or assortative.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_tilde: Option<f64>,
    /// Assortative mating correlation of spouses' endowments.
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    sibling_shared_u: Option<f64>,
    #[arg(long)]
    sibling_shared_v: Option<f64>,
    #[arg(long)]
    gamma_p: Option<f64>,
    #[arg(long)]
    gamma_gp: Option<f64>,
    #[arg(long)]
    rho1_sq: Option<f64>,
    #[arg(long)]
    rho2_sq: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    gamma_low: Option<f64>,
    #[arg(long)]
    gamma_high: Option<f64>,
    #[arg(long)]
    ybar: Option<f64>,
    #[arg(long)]
    shock_sd: Option<f64>,
}

/// (model, required fields, optional fields); field names are the JSON keys.
const MODEL_FIELDS: [(&str, &[&str], &[&str]); 5] = [
    ("latent_factor", &["returns_rho", "transferability_lambda"], &["sibling_shared_u", "sibling_shared_v"]),
    ("grandparent_ar2", &["gamma_p", "gamma_gp"], &[]),
    ("multiplicity", &["rho1_sq", "rho2_sq", "lambda1", "lambda2"], &[]),
    ("poverty_trap", &["gamma_low", "gamma_high", "threshold_ybar"], &["shock_sd"]),
    ("assortative", &["returns_rho", "transferability_lambda_tilde", "assortative_m"], &[]),
];

/// JSON keys accepted as aliases of canonical field names.
const ALIASES: [(&str, &str); 4] = [
    ("rho", "returns_rho"),
    ("lambda", "transferability_lambda"),
    ("lambda_tilde", "transferability_lambda_tilde"),
    ("m", "assortative_m"),
];

impl ModelFlags {
    /// `(flag, value)` pairs of the parameter flags that were given.
    fn given(&self) -> Vec<(&'static str, f64)> {
        let all = [
            ("rho", self.rho),
            ("lambda", self.lambda),
            ("lambda-tilde", self.lambda_tilde),
            ("m", self.m),
            ("sibling-shared-u", self.sibling_shared_u),
            ("sibling-shared-v", self.sibling_shared_v),
            ("gamma-p", self.gamma_p),
            ("gamma-gp", self.gamma_gp),
            ("rho1-sq", self.rho1_sq),
            ("rho2-sq", self.rho2_sq),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("gamma-low", self.gamma_low),
            ("gamma-high", self.gamma_high),
            ("ybar", self.ybar),
            ("shock-sd", self.shock_sd),
        ];
        all.into_iter().filter_map(|(f, v)| v.map(|v| (f, v))).collect()
    }
}

/// Canonical field a flag sets for a given model.
fn flag_field(model: &str, flag: &str) -> Option<&'static str> {
    let field = match flag {
        "rho" => "returns_rho",
        "lambda" => "transferability_lambda",
        "lambda-tilde" => "transferability_lambda_tilde",
        "m" => "assortative_m",
        "sibling-shared-u" => "sibling_shared_u",
        "sibling-shared-v" => "sibling_shared_v",
        "gamma-p" => "gamma_p",
        "gamma-gp" => "gamma_gp",
        "rho1-sq" => "rho1_sq",
        "rho2-sq" => "rho2_sq",
        "lambda1" => "lambda1",
        "lambda2" => "lambda2",
        "gamma-low" => "gamma_low",
        "gamma-high" => "gamma_high",
        "ybar" => "threshold_ybar",
        "shock-sd" => "shock_sd",
        _ => return None,
    };
    // On the assortative model --lambda means the two-parent transferability.
    let field = if model == "assortative" && field == "transferability_lambda" {
        "transferability_lambda_tilde"
    } else {
        field
    };
    let (_, req, opt) = MODEL_FIELDS.iter().find(|(m, _, _)| *m == model)?;
    req.iter().chain(opt.iter()).find(|f| **f == field).copied()
}

fn flag_for(field: &str) -> &'static str {
    match field {
        "returns_rho" => "--rho",
        "transferability_lambda" => "--lambda",
        "transferability_lambda_tilde" => "--lambda-tilde",
        "assortative_m" => "--m",
        "sibling_shared_u" => "--sibling-shared-u",
        "sibling_shared_v" => "--sibling-shared-v",
        "gamma_p" => "--gamma-p",
        "gamma_gp" => "--gamma-gp",
        "rho1_sq" => "--rho1-sq",
        "rho2_sq" => "--rho2-sq",
        "lambda1" => "--lambda1",
        "lambda2" => "--lambda2",
        "gamma_low" => "--gamma-low",
        "gamma_high" => "--gamma-high",
        "threshold_ybar" => "--ybar",
        "shock_sd" => "--shock-sd",
        _ => "",
    }
}

/// Merges model flags into the `{"model": .., "params": {..}}` value from the
/// config file, recording every problem.
fn merge_model(base: Option<&Value>, flags: &ModelFlags, problems: &mut Vec<String>) -> Option<Value> {
    let base_name = base.and_then(|b| b.get("model")).and_then(Value::as_str);
    let name = match (flags.model.as_deref(), base_name) {
        (Some(n), _) => n.to_string(),
        (None, Some(n)) => n.to_string(),
        (None, None) => {
            problems.push("missing required argument --model".into());
            return None;
        }
    };
    let Some((_, required, optional)) = MODEL_FIELDS.iter().find(|(m, _, _)| *m == name) else {
        problems.push(format!(
            "unknown model `{name}` (expected latent_factor, grandparent_ar2, multiplicity, poverty_trap or assortative)"
        ));
        return None;
    };
    let mut params = Map::new();
    // File parameters only carry over when the model family is unchanged.
    if base_name == Some(name.as_str()) {
        if let Some(Value::Object(p)) = base.and_then(|b| b.get("params")) {
            for (k, v) in p {
                let canon = ALIASES.iter().find(|(a, _)| a == k).map_or(k.as_str(), |(_, c)| c);
                params.insert(canon.to_string(), v.clone());
            }
        }
    }
    for (flag, value) in flags.given() {
        match flag_field(&name, flag) {
            Some(field) => {
                params.insert(field.to_string(), Value::from(value));
            }
            None => problems.push(format!("flag --{flag} does not apply to model {name}")),
        }
    }
    for key in params.keys() {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            problems.push(format!("config: at `command.model.params.{key}`: unknown parameter for model {name}"));
        }
    }
    let mut complete = true;
    for field in required.iter() {
        if !params.contains_key(*field) {
            problems.push(format!(
                "missing required parameter {field} ({}) for model {name}",
                flag_for(field)
            ));
            complete = false;
        }
    }
    if !complete {
        return None;
    }
    let value = serde_json::json!({ "model": name, "params": Value::Object(params) });
    match serde_json::from_value::<ModelSpec>(value.clone()) {
        Ok(spec) => {
            for v in spec.validate() {
                if v.severity == Severity::Error {
                    problems.push(format!("invalid {name} model: {v}"));
                }
            }
            Some(value)
        }
        Err(e) => {
            problems.push(format!("invalid {name} model: {e}"));
            None
        }
    }
}

fn set<T: Serialize>(block: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        block.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
    }
}

fn parse_format(s: &Option<String>, problems: &mut Vec<String>) -> Option<Format> {
    let s = s.as_ref()?;
    match s.parse::<Format>() {
        Ok(f) => Some(f),
        Err(e) => {
            problems.push(format!("--format: {e}"));
            None
        }
    }
}

fn apply_output(block: &mut Map<String, Value>, out: &OutputFlags, problems: &mut Vec<String>) {
    set(block, "out", out.out.clone());
    set(block, "format", parse_format(&out.format, problems));
}

/// Parses the command line (program name first) into a validated config.
pub fn parse_cli<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return Err(match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    CliError::Info(e.to_string())
                }
                _ => CliError::Usage(vec![e.to_string().trim_end().to_string()]),
            });
        }
    };
    let mut problems = Vec::new();

    let mut root = match &cli.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(text) => match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(CliError::Usage(vec![format!("{}: config must be a JSON object", path.display())])),
                Err(e) => return Err(CliError::Usage(vec![format!("{}: {e}", path.display())])),
            },
            Err(e) => return Err(CliError::Usage(vec![format!("{}: {e}", path.display())])),
        },
        None => Map::new(),
    };
    root.entry("schema_id").or_insert_with(|| Value::from(SCHEMA_ID));
    root.entry("seed").or_insert_with(|| Value::from(DEFAULT_SEED));
    set(&mut root, "seed", cli.seed);
    set(&mut root, "threads", cli.threads);
    if cli.verbose > 0 {
        root.insert("verbosity".into(), Value::from(cli.verbose));
    }

    let Some(sub) = &cli.command else {
        if cli.config.is_none() {
            return Err(CliError::Usage(vec![
                "a subcommand is required unless --config names one (see --help)".into(),
            ]));
        }
        return finish(root);
    };
    let sub_name = match sub {
        Sub::Simulate { .. } => "simulate",
        Sub::Moments { .. } => "moments",
        Sub::Fit { .. } => "fit",
        Sub::Regress { .. } => "regress",
        Sub::Replicate { .. } => "replicate",
    };
    let mut block = match root.remove("command") {
        None => Map::new(),
        Some(Value::Object(mut c)) => match c.remove(sub_name) {
            Some(Value::Object(b)) => b,
            Some(_) => {
                problems.push(format!("config: at `command.{sub_name}`: expected an object"));
                Map::new()
            }
            None => {
                if let Some(other) = c.keys().next() {
                    problems.push(format!(
                        "config: holds a `{other}` command but `{sub_name}` was requested"
                    ));
                }
                Map::new()
            }
        },
        Some(_) => {
            problems.push("config: at `command`: expected an object".into());
            Map::new()
        }
    };

    match sub {
        Sub::Simulate {
            model,
            dynasties,
            generations,
            children,
            max_persons,
            include_latent,
            output,
        } => {
            if let Some(m) = merge_model(block.get("model"), model, &mut problems) {
                block.insert("model".into(), m);
            }
            set(&mut block, "dynasties", *dynasties);
            set(&mut block, "generations", *generations);
            set(&mut block, "children_per_family", *children);
            set(&mut block, "max_persons", *max_persons);
            if *include_latent {
                block.insert("include_latent".into(), Value::Bool(true));
            }
            apply_output(&mut block, output, &mut problems);
            for (key, flag) in [("dynasties", "--dynasties"), ("generations", "--generations")] {
                if !block.contains_key(key) {
                    problems.push(format!("missing required argument {flag}"));
                }
            }
        }
        Sub::Moments { model, max_k, output } => {
            if let Some(m) = merge_model(block.get("model"), model, &mut problems) {
                block.insert("model".into(), m);
            }
            set(&mut block, "max_k", *max_k);
            apply_output(&mut block, output, &mut problems);
        }
        Sub::Fit { beta1, beta2, betas, output } => {
            match (betas, beta1, beta2) {
                (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                    problems.push("give either --betas or --beta1/--beta2, not both".into())
                }
                (Some(b), None, None) => set(&mut block, "betas", Some(b.clone())),
                (None, Some(b1), Some(b2)) => set(&mut block, "betas", Some(vec![*b1, *b2])),
                (None, Some(_), None) => problems.push("missing required argument --beta2".into()),
                (None, None, Some(_)) => problems.push("missing required argument --beta1".into()),
                (None, None, None) => {
                    if !block.contains_key("betas") {
                        problems.push("missing required argument --beta1 and --beta2 (or --betas)".into())
                    }
                }
            }
            apply_output(&mut block, output, &mut problems);
        }
        Sub::Regress {
            panel,
            panel_format,
            estimator,
            lags,
            controls,
            include_parent,
            line,
            generation,
            group_generations,
            output,
        } => {
            set(&mut block, "panel", panel.clone());
            if let Some(pf) = panel_format {
                match pf.parse::<Format>() {
                    Ok(Format::Text) | Err(_) => problems.push(format!("--panel-format: expected csv or json, got `{pf}`")),
                    Ok(f) => set(&mut block, "panel_format", Some(f)),
                }
            }
            set(&mut block, "estimator", *estimator);
            set(&mut block, "lags", lags.clone());
            if let Some(cs) = controls {
                let mut parsed = Vec::new();
                for c in cs {
                    match c.parse::<Control>() {
                        Ok(c) => parsed.push(c),
                        Err(e) => problems.push(format!("--controls: {e}")),
                    }
                }
                set(&mut block, "controls", Some(parsed));
            }
            if *include_parent {
                block.insert("include_parent".into(), Value::Bool(true));
            }
            if let Some(l) = line {
                match l.as_str() {
                    "paternal" | "maternal" => set(&mut block, "line", Some(l.clone())),
                    other => problems.push(format!("--line: expected paternal or maternal, got `{other}`")),
                }
            }
            set(&mut block, "generation", *generation);
            match group_generations.as_deref() {
                None => {}
                Some(&[from, to]) => set(&mut block, "group_generations", Some((from, to))),
                Some(_) => problems.push("--group-generations: expected FROM,TO".into()),
            }
            apply_output(&mut block, output, &mut problems);
            for (key, flag) in [("panel", "--panel"), ("estimator", "--estimator")] {
                if !block.contains_key(key) {
                    problems.push(format!("missing required argument {flag}"));
                }
            }
        }
        Sub::Replicate { experiment, out } => {
            if let Some(e) = experiment {
                match e.parse::<Experiment>() {
                    Ok(x) => set(&mut block, "experiment", Some(x)),
                    Err(err) => problems.push(err.to_string()),
                }
            } else if !block.contains_key("experiment") {
                problems.push("missing required argument <EXPERIMENT>".into());
            }
            set(&mut block, "out", out.clone());
        }
    }

    let mut command = Map::new();
    command.insert(sub_name.to_string(), Value::Object(block));
    root.insert("command".into(), Value::Object(command));
    if !problems.is_empty() {
        return Err(CliError::Usage(problems));
    }
    finish(root)
}

/// Deserializes the merged document and applies the checks serde cannot.
fn finish(root: Map<String, Value>) -> Result<RunConfig, CliError> {
    let config = RunConfig::from_json(&Value::Object(root).to_string()).map_err(|e| CliError::Usage(vec![e]))?;
    if config.schema_id != SCHEMA_ID {
        return Err(CliError::Usage(vec![format!(
            "config: at `schema_id`: expected {SCHEMA_ID}, found {}",
            config.schema_id
        )]));
    }
    if config.threads == Some(0) {
        return Err(CliError::Usage(vec!["--threads must be positive".into()]));
    }
    Ok(config)
}

fn out_format(out: &Option<PathBuf>, format: Option<Format>, default: Format) -> Format {
    format
        .or_else(|| out.as_deref().and_then(Format::from_path))
        .unwrap_or(default)
}

fn write_output(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> multigen::Result<()> {
    match out {
        Some(path) => mio::write_file(path, text),
        None => stdout.write_all(text.as_bytes()).map_err(|source| Error::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn log(cfg: &RunConfig, msg: impl FnOnce() -> String) {
    if cfg.verbosity > 0 {
        eprintln!("multigen: {}", msg());
    }
}

/// Executes a configuration on a thread pool of the requested size.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> multigen::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Argument(format!("cannot start worker threads: {e}")))?;
    let mut buffer = Vec::new();
    pool.install(|| execute(cfg, &mut buffer))?;
    stdout.write_all(&buffer).map_err(|source| Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn execute(cfg: &RunConfig, stdout: &mut Vec<u8>) -> multigen::Result<()> {
    let header = RunHeader::new(cfg.command.name()).with_seed(cfg.seed);
    match &cfg.command {
        Command::Simulate(c) => {
            let mut topo = SimTopology::new(c.dynasties, c.generations, c.children_per_family, cfg.seed);
            if let Some(cap) = c.max_persons {
                topo.max_persons = cap;
            }
            let ped = multigen::simulate(&c.model, &topo)?;
            log(cfg, || format!("simulated {} persons", ped.len()));
            let header = header.with_model(c.model.clone()).with_topology(topo);
            let format = out_format(&c.out, c.format, Format::Csv);
            let view = PanelView {
                pedigree: &ped,
                include_latent: c.include_latent,
            };
            write_output(&c.out, &render_panel(&view, format, Some(&header))?, stdout)
        }
        Command::Moments(c) => {
            let m = analytic_moments(&c.model, c.max_k)?;
            let header = header.with_model(c.model.clone());
            let format = out_format(&c.out, c.format, Format::Json);
            write_output(&c.out, &render(&m, format, Some(&header))?, stdout)
        }
        Command::Fit(c) => {
            let fit = fit_latent_factor(&MomentSet::from_betas(&c.betas))?;
            let format = out_format(&c.out, c.format, Format::Json);
            write_output(&c.out, &render(&fit, format, Some(&header))?, stdout)
        }
        Command::Regress(c) => {
            let pf = c
                .panel_format
                .or_else(|| Format::from_path(&c.panel))
                .unwrap_or(Format::Csv);
            let ped = mio::load_panel(&c.panel, pf)?;
            log(cfg, || format!("loaded {} persons from {}", ped.len(), c.panel.display()));
            let opts = PairOptions {
                line: c.line,
                descendant_generation: c.generation,
            };
            let result = match c.estimator {
                Estimator::BetaK => {
                    let [k] = c.lags.as_slice() else {
                        return Err(Error::Argument("beta_k takes exactly one lag".into()));
                    };
                    beta_k_estimate(&ped, *k, &opts)?
                }
                Estimator::Multigen => multigen_regression(&ped, &c.lags, &c.controls, &opts)?,
                Estimator::Sibling => sibling_regression(&ped, c.include_parent, &opts)?,
                Estimator::Group => {
                    let pair = c.group_generations.unwrap_or_else(|| {
                        let hi = ped.max_generation();
                        (hi.saturating_sub(1), hi)
                    });
                    group_level_estimate(&ped, pair)?
                }
            };
            let format = out_format(&c.out, c.format, Format::Json);
            write_output(&c.out, &render(&result, format, Some(&header))?, stdout)
        }
        Command::Replicate(c) => {
            let report = replicate(c.experiment, cfg.seed)?;
            log(cfg, || format!("{} finished, pass = {}", c.experiment, report.pass));
            match &c.out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(|source| Error::Io {
                        path: dir.clone(),
                        source,
                    })?;
                    mio::write_file(&dir.join("report.json"), &render(&report, Format::Json, None)?)?;
                    mio::write_file(&dir.join("series.csv"), &render(&report, Format::Csv, Some(&header))?)?;
                    if c.experiment == Experiment::Table2 {
                        mio::write_file(&dir.join("table.txt"), &render(&report, Format::Text, Some(&header))?)?;
                    }
                    write_output(&None, &render(&report, Format::Text, None)?, stdout)
                }
                None => write_output(&None, &render(&report, Format::Text, None)?, stdout),
            }
        }
    }
}

/// Runs the binary logic and returns the process exit code.
pub fn main_with_args<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match parse_cli(argv) {
        Ok(c) => c,
        Err(CliError::Info(text)) => {
            let _ = write!(stdout, "{text}");
            return exit::OK;
        }
        Err(e) => {
            let _ = writeln!(stderr, "usage error:");
            if let CliError::Usage(problems) = &e {
                for p in problems {
                    let _ = writeln!(stderr, "  {p}");
                }
            }
            return e.exit_code();
        }
    };
    match run(&cfg, stdout) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Reads a config file without running it (used by tests and tooling).
pub fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    RunConfig::from_json(&text)
}
