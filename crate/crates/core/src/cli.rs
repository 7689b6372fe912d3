//! Command-line front end: flag parsing, key=value config files merged under
//! the flags, the tuned-solution cache, and JSON/CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rug::Float;
use serde_json::{json, Map, Value};

use crate::excited::{assign_levels, excited_config, resum_prefactor, prefactor_coefficients, tune_excited, Parity};
use crate::numerics::{format_sig, PrecisionContext};
use crate::oracle::{default_omega, diagonalize, oracle_context, OracleSpec};
use crate::resummation::{resum, BorelSeries, ResummationCurve};
use crate::series::{ground_coefficients, KSign, ProblemSpec, SeriesSolution};
use crate::tuner::{sweep, sweep_csv, tune_ground, tune_to_rho, TuneConfig, TuneResult};
use crate::wavefn::sample;

/// Version tag written into every cache document.
pub const CACHE_SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "anharmonic", version, about = "High-precision energy levels of −d²/dx² + ρx² + g·x^{2M}")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tune the ground state for fixed a₂ (scaled) or ρ (direct).
    Ground(Opts),
    /// Tune a₂ so the quartic ground state has a target ρ.
    Rho(Opts),
    /// Find excited states of one parity in a τ range.
    Excited(Opts),
    /// Tune the ground state over a grid of a₂ values.
    Sweep(Opts),
    /// Resummed curve at a fixed parameter, for plotting.
    Curve(Opts),
    /// Eigenvalues from harmonic-oscillator basis diagonalization.
    Oracle(Opts),
    /// Wavefunction samples inside the trusted radius.
    Wavefn(Opts),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ground(_) => "ground",
            Command::Rho(_) => "rho",
            Command::Excited(_) => "excited",
            Command::Sweep(_) => "sweep",
            Command::Curve(_) => "curve",
            Command::Oracle(_) => "oracle",
            Command::Wavefn(_) => "wavefn",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Ground(o)
            | Command::Rho(o)
            | Command::Excited(o)
            | Command::Sweep(o)
            | Command::Curve(o)
            | Command::Oracle(o)
            | Command::Wavefn(o) => o,
        }
    }
}

/// Every flag, as text; numbers are parsed later at working precision.
#[derive(Args, Debug, Clone, Default)]
pub struct Opts {
    /// key=value file; explicit flags win over its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON cache of tuned ground solutions.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Write the artifact here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "M", allow_hyphen_values = true)]
    pub m: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<String>,
    /// +4 or -4.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub a2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<String>,
    /// scaled or direct.
    #[arg(long)]
    pub mode: Option<String>,
    /// Fixed free parameter for `curve`: a_{M+1} (scaled) or E (direct).
    #[arg(long, alias = "param", allow_hyphen_values = true)]
    pub a3: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<String>,
    #[arg(long)]
    pub parity: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<String>,
    /// Lower end of the scan range.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// Upper end of the scan range.
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<String>,
    #[arg(long = "a2-from", allow_hyphen_values = true)]
    pub a2_from: Option<String>,
    #[arg(long = "a2-to", allow_hyphen_values = true)]
    pub a2_to: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub omega: Option<String>,
    #[arg(long)]
    pub levels: Option<String>,
    #[arg(long)]
    pub points: Option<String>,
    #[arg(long)]
    pub range: Option<String>,
    /// Which state of the scan (in τ order) `wavefn` samples.
    #[arg(long)]
    pub index: Option<String>,
    #[arg(long)]
    pub digits: Option<String>,
    #[arg(long = "N-cap")]
    pub n_cap: Option<String>,
    /// Truncation order for `curve`.
    #[arg(long = "N")]
    pub order: Option<String>,
    #[arg(long = "alpha-floor")]
    pub alpha_floor: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    /// json or csv.
    #[arg(long, alias = "emit")]
    pub output: Option<String>,
}

impl Opts {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        vec![
            ("cache", path(&self.cache)),
            ("out", path(&self.out)),
            ("M", self.m.clone()),
            ("g", self.g.clone()),
            ("k", self.k.clone()),
            ("a2", self.a2.clone()),
            ("rho", self.rho.clone()),
            ("mode", self.mode.clone()),
            ("a3", self.a3.clone()),
            ("target", self.target.clone()),
            ("parity", self.parity.clone()),
            ("tau", self.tau.clone()),
            ("from", self.from.clone()),
            ("to", self.to.clone()),
            ("a2-from", self.a2_from.clone()),
            ("a2-to", self.a2_to.clone()),
            ("steps", self.steps.clone()),
            ("basis", self.basis.clone()),
            ("omega", self.omega.clone()),
            ("levels", self.levels.clone()),
            ("points", self.points.clone()),
            ("range", self.range.clone()),
            ("index", self.index.clone()),
            ("digits", self.digits.clone()),
            ("N-cap", self.n_cap.clone()),
            ("N", self.order.clone()),
            ("alpha-floor", self.alpha_floor.clone()),
            ("alpha", self.alpha.clone()),
            ("output", self.output.clone()),
        ]
    }
}

/// A failure reported as `{"error": {"signal", "message"}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub signal: String,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { signal: "invalid-config".into(), message: message.into(), exit_code: 2 }
    }

    fn failure(signal: &str, message: impl ToString) -> Self {
        Self { signal: signal.into(), message: message.to_string(), exit_code: 1 }
    }

    pub fn to_json(&self) -> Value {
        json!({"error": {"signal": self.signal, "message": self.message}})
    }
}

impl From<crate::tuner::TuneError> for CliError {
    fn from(e: crate::tuner::TuneError) -> Self {
        CliError::failure(e.signal(), e)
    }
}

impl From<crate::oracle::OracleError> for CliError {
    fn from(e: crate::oracle::OracleError) -> Self {
        CliError::failure(e.signal(), e)
    }
}

impl From<crate::series::SeriesError> for CliError {
    fn from(e: crate::series::SeriesError) -> Self {
        CliError::from(crate::tuner::TuneError::from(e))
    }
}

impl From<crate::numerics::NumericsError> for CliError {
    fn from(e: crate::numerics::NumericsError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<crate::resummation::ResummationError> for CliError {
    fn from(e: crate::resummation::ResummationError) -> Self {
        CliError::failure("resummation", e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("config line {}: expected key=value", n + 1)))?;
        map.insert(k.trim().trim_start_matches("--").to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Validated settings for one subcommand run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub subcommand: String,
    pub values: BTreeMap<String, String>,
    pub digits: u32,
    pub n_cap: usize,
    pub alpha_floor: f64,
    pub output: OutputFormat,
    pub cache_path: Option<PathBuf>,
}

impl RunConfig {
    /// Flags over config-file entries over defaults.
    pub fn resolve(command: &Command) -> Result<Self, CliError> {
        let opts = command.opts();
        let mut values = match &opts.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        for (k, v) in opts.pairs() {
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        Self::from_values(command.name(), values)
    }

    pub fn from_values(subcommand: &str, values: BTreeMap<String, String>) -> Result<Self, CliError> {
        let digits = parse_num::<u32>(&values, "digits")?.unwrap_or(20);
        let n_cap = parse_num::<usize>(&values, "N-cap")?.unwrap_or(400);
        let alpha_floor = parse_num::<f64>(&values, "alpha-floor")?.unwrap_or(0.3);
        let default_output = match subcommand {
            "sweep" | "curve" | "wavefn" => OutputFormat::Csv,
            _ => OutputFormat::Json,
        };
        let output = match values.get("output").map(|s| s.to_ascii_lowercase()) {
            None => default_output,
            Some(s) if s == "json" => OutputFormat::Json,
            Some(s) if s == "csv" => OutputFormat::Csv,
            Some(s) => return Err(CliError::validation(format!("output must be json or csv, got '{s}'"))),
        };
        let cfg = Self {
            subcommand: subcommand.to_string(),
            cache_path: values.get("cache").map(PathBuf::from),
            values,
            digits,
            n_cap,
            alpha_floor,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.digits < 4 {
            return Err(CliError::validation(format!("digits must be at least 4, got {}", self.digits)));
        }
        if self.n_cap < 24 {
            return Err(CliError::validation(format!("N-cap must be at least 24, got {}", self.n_cap)));
        }
        if !(0.3..=1.0).contains(&self.alpha_floor) {
            return Err(CliError::validation(format!("alpha-floor must lie in [0.3, 1], got {}", self.alpha_floor)));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        parse_num(&self.values, key)
    }

    pub fn tune_config(&self) -> TuneConfig {
        let mut cfg = TuneConfig { n_cap: self.n_cap, alpha_floor: self.alpha_floor, ..TuneConfig::default() };
        if let Some(Ok(alpha)) = self.get("alpha").map(str::parse::<f64>) {
            cfg.alpha_start = Some(alpha);
        }
        if let (Some(lo), Some(hi)) = (self.get("from"), self.get("to")) {
            if self.subcommand != "excited" && self.subcommand != "wavefn" {
                cfg.scan_range = Some((lo.to_string(), hi.to_string()));
            }
        }
        cfg
    }
}

fn parse_num<T: FromStr>(values: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError> {
    match values.get(key) {
        None => Ok(None),
        Some(s) => s
            .trim()
            .parse::<T>()
            .map(Some)
            .map_err(|_| CliError::validation(format!("cannot parse {key}='{s}'"))),
    }
}

/// The ground problem described by the config, with numbers at `ctx`.
pub fn problem_spec(cfg: &RunConfig, ctx: &PrecisionContext) -> Result<ProblemSpec, CliError> {
    let m = cfg.num::<u32>("M")?.unwrap_or(2);
    let g = ctx.parse(cfg.get("g").unwrap_or("1"))?;
    let direct = match cfg.get("mode") {
        Some("direct") => true,
        Some("scaled") => false,
        Some(other) => return Err(CliError::validation(format!("mode must be scaled or direct, got '{other}'"))),
        None => cfg.get("rho").is_some() && cfg.get("a2").is_none(),
    };
    let spec = if direct {
        let rho = ctx.parse(cfg.get("rho").unwrap_or("0"))?;
        ProblemSpec::direct(m, g, rho, cfg.n_cap)
    } else {
        let k: KSign = cfg.get("k").unwrap_or("+4").parse()?;
        let a2 = ctx.parse(cfg.get("a2").unwrap_or("-3/16"))?;
        let mut spec = ProblemSpec::scaled(m, k, a2, cfg.n_cap);
        spec.g = g;
        spec
    };
    spec.validate()?;
    Ok(spec)
}

/// Cache key: mode, M, g, k, a₂ or ρ, digits, N cap.
pub fn cache_key(spec: &ProblemSpec, digits: u32, n_cap: usize) -> String {
    use crate::series::Parametrization;
    let g = format_sig(&spec.g, 40);
    match &spec.mode {
        Parametrization::Scaled { k, a2 } => format!(
            "scaled|M={}|g={g}|k={k}|a2={}|digits={digits}|Ncap={n_cap}",
            spec.m,
            format_sig(a2, 40)
        ),
        Parametrization::Direct { rho } => {
            format!("direct|M={}|g={g}|rho={}|digits={digits}|Ncap={n_cap}", spec.m, format_sig(rho, 40))
        }
    }
}

/// A tuned ground solution as stored in, or restored from, the cache.
#[derive(Clone, Debug)]
pub struct CachedGround {
    pub result_json: Value,
    /// Tuned parameter, bit-exact.
    pub parameter: Float,
    pub n_final: usize,
}

impl CachedGround {
    fn from_result(r: &TuneResult) -> Self {
        Self { result_json: r.to_json(), parameter: r.parameter.clone(), n_final: r.n_final }
    }

    fn to_document(&self, key: &str, coefficients: &SeriesSolution, digits: usize) -> Value {
        json!({
            "schema_version": CACHE_SCHEMA,
            "key": key,
            "result": self.result_json,
            "parameter_hex": self.parameter.to_string_radix(16, None),
            "parameter_bits": self.parameter.prec(),
            "N_final": self.n_final,
            "coefficients": coefficients.a.iter().map(|a| format_sig(a, digits)).collect::<Vec<_>>(),
        })
    }

    fn from_document(doc: &Value) -> Option<Self> {
        if doc.get("schema_version")?.as_u64()? != CACHE_SCHEMA as u64 {
            return None;
        }
        let bits = doc.get("parameter_bits")?.as_u64()? as u32;
        let hex = doc.get("parameter_hex")?.as_str()?;
        let parsed = Float::parse_radix(hex, 16).ok()?;
        Some(Self {
            result_json: doc.get("result")?.clone(),
            parameter: Float::with_val(bits, parsed),
            n_final: doc.get("N_final")?.as_u64()? as usize,
        })
    }
}

fn read_cache(path: &Path) -> Map<String, Value> {
    let Ok(text) = fs::read_to_string(path) else {
        return Map::new();
    };
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(root)) if root.get("schema_version").and_then(Value::as_u64) == Some(CACHE_SCHEMA as u64) => {
            root.get("entries").and_then(Value::as_object).cloned().unwrap_or_default()
        }
        _ => Map::new(),
    }
}

fn write_cache(path: &Path, entries: Map<String, Value>) -> Result<(), CliError> {
    let root = json!({"schema_version": CACHE_SCHEMA, "entries": entries});
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string_pretty(&root).expect("cache serializes");
    fs::write(&tmp, text)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::failure("cache-io", format!("cannot write cache {}: {e}", path.display())))
}

/// Ground solution for `spec`, from the cache when present, else tuned and stored.
pub fn ground_solution(spec: &ProblemSpec, digits: u32, tcfg: &TuneConfig, cache: Option<&Path>) -> Result<CachedGround, CliError> {
    let key = cache_key(spec, digits, tcfg.n_cap);
    if let Some(path) = cache {
        if let Some(hit) = read_cache(path).get(&key).and_then(CachedGround::from_document) {
            return Ok(hit);
        }
    }
    let result = tune_ground(spec, digits, tcfg)?;
    let entry = CachedGround::from_result(&result);
    if let Some(path) = cache {
        let mut entries = read_cache(path);
        entries.insert(key.clone(), entry.to_document(&key, &result.solution, digits as usize + 5));
        write_cache(path, entries)?;
    }
    Ok(entry)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Runs one subcommand and returns the artifact text.
pub fn run(command: &Command) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(command)?;
    run_config(&cfg)
}

pub fn run_config(cfg: &RunConfig) -> Result<String, CliError> {
    match cfg.subcommand.as_str() {
        "ground" => run_ground(cfg),
        "rho" => run_rho(cfg),
        "excited" => run_excited(cfg),
        "sweep" => run_sweep(cfg),
        "curve" => run_curve(cfg),
        "oracle" => run_oracle(cfg),
        "wavefn" => run_wavefn(cfg),
        other => Err(CliError::validation(format!("unknown subcommand '{other}'"))),
    }
}

fn run_ground(cfg: &RunConfig) -> Result<String, CliError> {
    let tcfg = cfg.tune_config();
    let ctx = tcfg.max_context(cfg.digits);
    let spec = problem_spec(cfg, &ctx)?;
    let ground = ground_solution(&spec, cfg.digits, &tcfg, cfg.cache_path.as_deref())?;
    match cfg.output {
        OutputFormat::Json => Ok(pretty(&ground.result_json)),
        OutputFormat::Csv => {
            let sol = ground_coefficients(&spec.with_order(ground.n_final), &ground.parameter, &ctx)?;
            Ok(sol.coefficients_csv(cfg.digits as usize))
        }
    }
}

fn run_rho(cfg: &RunConfig) -> Result<String, CliError> {
    let tcfg = cfg.tune_config();
    let ctx = tcfg.max_context(cfg.digits + 4);
    let target = ctx.parse(cfg.get("target").ok_or_else(|| CliError::validation("rho needs --target"))?)?;
    let r = tune_to_rho(&target, cfg.digits, &tcfg)?;
    match cfg.output {
        OutputFormat::Json => Ok(pretty(&r.to_json())),
        OutputFormat::Csv => Ok(r.solution.coefficients_csv(cfg.digits as usize)),
    }
}

fn default_excited_range(parity: Parity) -> (&'static str, &'static str) {
    match parity {
        Parity::Odd => ("0", "3"),
        Parity::Even => ("-6", "-0.5"),
    }
}

/// Ground series extended to the N cap, ready for prefactor work.
fn extended_ground(cfg: &RunConfig, tcfg: &TuneConfig) -> Result<(ProblemSpec, SeriesSolution, Value), CliError> {
    let ground_digits = cfg.digits + 4;
    let ctx = tcfg.max_context(ground_digits);
    let spec = problem_spec(cfg, &ctx)?;
    let g = ground_solution(&spec, ground_digits, tcfg, cfg.cache_path.as_deref())?;
    let sol = ground_coefficients(&spec.with_order(tcfg.n_cap), &g.parameter, &ctx)?;
    Ok((spec, sol, g.result_json))
}

fn excited_states(cfg: &RunConfig) -> Result<(Vec<crate::excited::ExcitedState>, SeriesSolution, Value), CliError> {
    let tcfg = cfg.tune_config();
    let parity: Parity = cfg
        .get("parity")
        .unwrap_or("odd")
        .parse()
        .map_err(CliError::validation)?;
    let (spec, ground, ground_json) = extended_ground(cfg, &tcfg)?;
    let (dlo, dhi) = default_excited_range(parity);
    let range = (cfg.get("from").unwrap_or(dlo), cfg.get("to").unwrap_or(dhi));
    let mut states = tune_excited(&ground, parity, range, cfg.digits, &excited_config(&tcfg, spec.m))?;
    if states.iter().any(|s| s.q.is_none()) {
        let octx = oracle_context();
        let rho = Float::with_val(octx.bits(), &ground.rho);
        let levels = 48;
        let mut ospec = OracleSpec::new(spec.m, Float::with_val(octx.bits(), &spec.g), rho, 4 * levels + 8, levels);
        ospec.omega = octx.real(default_omega(spec.m));
        let reference = diagonalize(&ospec, false)?.energies();
        assign_levels(&mut states, &reference);
    }
    Ok((states, ground, ground_json))
}

fn run_excited(cfg: &RunConfig) -> Result<String, CliError> {
    let (states, _, ground_json) = excited_states(cfg)?;
    match cfg.output {
        OutputFormat::Json => Ok(pretty(&json!({
            "ground": ground_json,
            "states": states.iter().map(|s| s.to_json()).collect::<Vec<_>>(),
        }))),
        OutputFormat::Csv => {
            let mut out = String::from("parity,tau,E_q,E_total,nodes,q,digits\n");
            for s in &states {
                let d = s.digits.max(1) as usize;
                let opt = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    s.parity,
                    format_sig(&s.tau, d),
                    format_sig(&s.excitation, d),
                    format_sig(&s.energy, d),
                    opt(s.nodes),
                    opt(s.q),
                    s.digits
                ));
            }
            Ok(out)
        }
    }
}

fn run_sweep(cfg: &RunConfig) -> Result<String, CliError> {
    let tcfg = cfg.tune_config();
    let m = cfg.num::<u32>("M")?.unwrap_or(2);
    let k: KSign = cfg.get("k").unwrap_or("+4").parse()?;
    let steps = cfg.num::<usize>("steps")?.unwrap_or(11);
    let range = (cfg.get("a2-from").unwrap_or("-0.5"), cfg.get("a2-to").unwrap_or("-0.01"));
    let rows = sweep(m, k, range, steps, cfg.digits, &tcfg)?;
    match cfg.output {
        OutputFormat::Csv => Ok(sweep_csv(&rows, cfg.digits as usize)),
        OutputFormat::Json => Ok(pretty(&Value::Array(
            rows.iter()
                .map(|r| match &r.result {
                    Ok(t) => t.to_json(),
                    Err(e) => json!({"a2": format_sig(&r.a2, cfg.digits as usize), "error": {"signal": e.signal(), "message": e.to_string()}}),
                })
                .collect(),
        ))),
    }
}

fn curve_json(curve: &ResummationCurve, digits: usize) -> Value {
    let list = |v: &[Float]| v.iter().map(|x| format_sig(x, digits)).collect::<Vec<_>>();
    json!({
        "classification": curve.classification.to_string(),
        "window_max": curve.window_max().map(|w| format_sig(w, 8)),
        "tail_slope": curve.tail_slope,
        "plateau": curve.plateau.as_ref().map(|p| format_sig(p, 12)),
        "N": curve.order,
        "alpha": format_sig(&curve.alpha, 6),
        "lambda": list(&curve.lambda_grid),
        "L_N": list(&curve.values_n),
        "L_N-1": list(&curve.values_nm1),
    })
}

fn run_curve(cfg: &RunConfig) -> Result<String, CliError> {
    let order = cfg.num::<usize>("N")?.unwrap_or(20);
    let ctx = PrecisionContext::for_order(cfg.digits, order.max(cfg.n_cap));
    let spec = problem_spec(cfg, &ctx)?;
    let param = ctx.parse(cfg.get("a3").ok_or_else(|| CliError::validation("curve needs --a3 (or --param)"))?)?;
    let curve_cfg = crate::resummation::CurveConfig::default();
    let curve = match cfg.get("parity") {
        None => {
            let alpha = ctx.parse(cfg.get("alpha").unwrap_or("1"))?;
            let sol = ground_coefficients(&spec.with_order(order), &param, &ctx)?;
            resum(&BorelSeries::new(sol.a, 1, spec.m + 1, &alpha, &ctx)?, &curve_cfg)
        }
        Some(p) => {
            let parity: Parity = p.parse().map_err(CliError::validation)?;
            let tau = ctx.parse(cfg.get("tau").ok_or_else(|| CliError::validation("prefactor curve needs --tau"))?)?;
            let alpha = ctx.parse(cfg.get("alpha").unwrap_or("0.6"))?;
            let ground = ground_coefficients(&spec.with_order(order.max(spec.m as usize + 2)), &param, &ctx)?;
            let state = prefactor_coefficients(&ground, parity, &tau, order, &ctx)
                .map_err(|e| CliError::failure(e.signal(), e))?;
            resum_prefactor(&state, &alpha, &ctx, &curve_cfg)?
        }
    };
    let digits = cfg.digits as usize;
    match cfg.output {
        OutputFormat::Json => Ok(pretty(&curve_json(&curve, digits))),
        OutputFormat::Csv => {
            let window = curve.window_max().map(|w| format_sig(w, 8)).unwrap_or_else(|| "none".into());
            let slope = curve.tail_slope.map(|s| format!("{s:.6e}")).unwrap_or_else(|| "none".into());
            Ok(format!(
                "# classification={} window_max={window} tail_slope={slope} N={} alpha={}\n{}",
                curve.classification,
                curve.order,
                format_sig(&curve.alpha, 6),
                curve.to_csv(digits)
            ))
        }
    }
}

fn run_oracle(cfg: &RunConfig) -> Result<String, CliError> {
    let ctx = oracle_context();
    let m = cfg.num::<u32>("M")?.unwrap_or(2);
    let levels = cfg.num::<usize>("levels")?.unwrap_or(6);
    let basis = cfg.num::<usize>("basis")?.unwrap_or(200);
    let mut spec = OracleSpec::new(
        m,
        ctx.parse(cfg.get("g").unwrap_or("1"))?,
        ctx.parse(cfg.get("rho").unwrap_or("0"))?,
        basis,
        levels,
    );
    spec.omega = match cfg.get("omega") {
        Some(w) => ctx.parse(w)?,
        None => ctx.real(default_omega(m)),
    };
    let sol = diagonalize(&spec, false)?;
    let digits = cfg.digits as usize;
    match cfg.output {
        OutputFormat::Json => Ok(pretty(&sol.to_json(digits))),
        OutputFormat::Csv => {
            let mut out = String::from("level,parity,energy\n");
            for (i, l) in sol.levels.iter().enumerate() {
                out.push_str(&format!("{i},{},{}\n", l.parity, format_sig(&l.energy, digits)));
            }
            Ok(out)
        }
    }
}

fn run_wavefn(cfg: &RunConfig) -> Result<String, CliError> {
    let points = cfg.num::<usize>("points")?.unwrap_or(201);
    let range = cfg.num::<f64>("range")?;
    let digits = cfg.digits as usize;
    let table = if cfg.get("parity").is_some() {
        let (states, ground, _) = excited_states(cfg)?;
        let index = cfg.num::<usize>("index")?.unwrap_or(0);
        let state = states
            .get(index)
            .ok_or_else(|| CliError::validation(format!("scan found {} states, no index {index}", states.len())))?;
        let ctx = PrecisionContext::for_order(cfg.digits, 0);
        sample(&ground, Some(state), points, range, digits, &ctx)
    } else {
        let tcfg = cfg.tune_config();
        let (_, ground, _) = extended_ground(cfg, &tcfg)?;
        let ctx = PrecisionContext::for_order(cfg.digits, 0);
        sample(&ground, None, points, range, digits, &ctx)
    };
    match cfg.output {
        OutputFormat::Csv => Ok(table.to_csv()),
        OutputFormat::Json => Ok(pretty(&json!({
            "q": table.q,
            "parity": table.parity.to_string(),
            "r": format!("{:.6}", table.reliability_radius),
            "digits": table.digits,
            "warning": table.warning,
            "x": table.grid.iter().map(|x| format_sig(x, digits)).collect::<Vec<_>>(),
            "psi": table.psi.iter().map(|x| format_sig(x, digits)).collect::<Vec<_>>(),
        }))),
    }
}

/// Writes the artifact where the config asks and returns the exit status.
pub fn emit(command: &Command) -> i32 {
    let result = RunConfig::resolve(command).and_then(|cfg| {
        let text = run_config(&cfg)?;
        match cfg.get("out") {
            Some(path) => fs::write(path, &text)
                .map_err(|e| CliError::failure("io", format!("cannot write {path}: {e}")))?,
            None => print!("{text}"),
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            println!("{}", e.to_json());
            e.exit_code
        }
    }
}
