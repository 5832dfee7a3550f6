use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use macroent::backaction::{self, BackactionReport};
use macroent::bipartite::{self, concurrence, cut_entropy, meyer_wallach, pair_table, pair_table_csv, schmidt_at_site, PairRow};
use macroent::factorize::{self, eb_report, EBReport};
use macroent::observables::{self, correlation, correlation_census, estimate_index_p, max_fluctuation, AdditiveObservable, Census};
use macroent::qindex::{
    self, bounds_from_value, estimate_index_q, max_double_commutator_state, DistanceBounds, OptimizerSettings,
};
use macroent::qstate::{Axis, Family, FamilySpec, PureState, SiteSubset, State};
use macroent::scaling::ScalingFit;
use macroent::validate::{run_validation, ValidateConfig};
use macroent::Error;

const PURE_LIMIT: usize = 14;
const Q_LIMIT: usize = 10;
const LE_GRID: usize = 16;

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "macroent", version, about = "Macroscopic superposition and multipartite entanglement measures for qubit states")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze a single state.
    Analyze(AnalyzeArgs),
    /// Sweep one measure over a grid of sizes and fit its exponent.
    Sweep(SweepArgs),
    /// Run the property suite.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct StateArgs {
    /// State family (product, ghz, dicke, w, cluster, rvb, random, ghz-mixture, maximally-mixed).
    #[arg(long)]
    state: Family,
    /// Dicke excitation count.
    #[arg(long)]
    k: Option<usize>,
    /// Product-state Bloch vectors: `x,y,z` for every site, or `x,y,z;x,y,z;...` per site.
    #[arg(long)]
    bloch: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct Thresholds {
    /// Census threshold.
    #[arg(long, default_value_t = observables::DEFAULT_CENSUS_THRESHOLD)]
    threshold: f64,
    /// Minimum single-site entropy (bits) for E_B.
    #[arg(long, default_value_t = factorize::DEFAULT_EPS)]
    eps: f64,
    /// Minimum fraction of sites in S1(l) for E_B.
    #[arg(long, default_value_t = factorize::DEFAULT_DELTA)]
    delta: f64,
}

#[derive(Args, Debug)]
struct Output {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// File of `key = value` lines using flag names; flags on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    state: StateArgs,
    #[arg(long)]
    n: usize,
    /// Comma-separated sections: p, q, entropy, concurrence, census, eb, backaction.
    #[arg(long, value_delimiter = ',', default_value = "p,entropy,concurrence,census,eb,backaction")]
    measures: Vec<Measure>,
    #[command(flatten)]
    thresholds: Thresholds,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    state: StateArgs,
    /// `start:stop:step`, inclusive.
    #[arg(long)]
    n_grid: NGrid,
    #[arg(long, value_enum)]
    measure: Measure,
    #[command(flatten)]
    thresholds: Thresholds,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value_t = ValidateConfig::default().corpus_size)]
    corpus_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flip every tolerance negative so each property must fail.
    #[arg(long)]
    inject_fault: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Measure {
    P,
    Q,
    Entropy,
    Concurrence,
    Census,
    Eb,
    Backaction,
}

impl Measure {
    fn name(self) -> &'static str {
        match self {
            Measure::P => "p",
            Measure::Q => "q",
            Measure::Entropy => "entropy",
            Measure::Concurrence => "concurrence",
            Measure::Census => "census",
            Measure::Eb => "eb",
            Measure::Backaction => "backaction",
        }
    }

    fn limit(self, mixed: bool) -> usize {
        if mixed || self == Measure::Q {
            Q_LIMIT
        } else {
            PURE_LIMIT
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone)]
struct NGrid(Vec<usize>);

impl FromStr for NGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad grid entry {p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let (start, stop, step) = match nums.as_slice() {
            [a, b] => (*a, *b, 1),
            [a, b, c] => (*a, *b, *c),
            _ => return Err("expected start:stop:step".into()),
        };
        if step == 0 || start > stop {
            return Err("grid needs start <= stop and a positive step".into());
        }
        let grid: Vec<usize> = (start..=stop).step_by(step).collect();
        if grid.len() < 3 {
            return Err(format!("grid {s} has {} entries, need at least 3", grid.len()));
        }
        Ok(NGrid(grid))
    }
}

/// Failure carrying its exit code.
struct Fail {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Fail {
    fn from(err: anyhow::Error) -> Self {
        let code = match err.downcast_ref::<Error>() {
            Some(Error::TooLarge(_)) => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        };
        Fail { code, err }
    }
}

impl From<Error> for Fail {
    fn from(err: Error) -> Self {
        anyhow::Error::from(err).into()
    }
}

fn infeasible(msg: String) -> Fail {
    Fail { code: EXIT_INFEASIBLE, err: anyhow!(msg) }
}

fn usage(msg: String) -> Fail {
    Fail { code: EXIT_USAGE, err: anyhow!(msg) }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match with_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}

/// Splices `--key value` pairs from the config file in front of the user's flags.
fn with_config(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(argv) };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => argv.get(pos + 1).cloned().ok_or_else(|| anyhow!("--config needs a file"))?,
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let mut injected = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{path}:{}: expected `key = value`", i + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key == "config" {
            bail!("{path}:{}: nested config files are not supported", i + 1);
        }
        match value {
            "true" if key == "inject-fault" => injected.push(format!("--{key}")),
            "false" if key == "inject-fault" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value.to_string());
            }
        }
    }
    // after the subcommand so clap scopes the flags correctly
    let sub = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 2).unwrap_or(argv.len());
    let mut out = argv[..sub].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[sub..]);
    Ok(out)
}

fn parse_bloch(s: &str) -> anyhow::Result<Vec<[f64; 3]>> {
    s.split(';')
        .map(|v| {
            let xs = v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("bad Bloch vector {v:?}"))?;
            <[f64; 3]>::try_from(xs).map_err(|_| anyhow!("Bloch vectors need three components, got {v:?}"))
        })
        .collect()
}

fn family_spec(s: &StateArgs) -> Result<FamilySpec, Fail> {
    let mut spec = FamilySpec::new(s.state);
    if let Some(k) = s.k {
        if s.state != Family::Dicke {
            return Err(usage("--k only applies to dicke".into()));
        }
        spec = spec.with_k(k);
    }
    if let Some(b) = &s.bloch {
        if s.state != Family::Product {
            return Err(usage("--bloch only applies to product".into()));
        }
        spec = spec.with_bloch(parse_bloch(b)?);
    }
    Ok(spec)
}

fn check_thresholds(t: &Thresholds) -> Result<(), Fail> {
    if !(t.threshold > 0.0) {
        return Err(usage(format!("--threshold must be positive, got {}", t.threshold)));
    }
    if !(t.eps > 0.0 && t.eps <= 1.0) {
        return Err(usage(format!("--eps must lie in (0, 1], got {}", t.eps)));
    }
    if !(t.delta > 0.0 && t.delta < 1.0) {
        return Err(usage(format!("--delta must lie in (0, 1), got {}", t.delta)));
    }
    Ok(())
}

fn check_size(measure: Measure, mixed: bool, n: usize) -> Result<(), Fail> {
    let limit = measure.limit(mixed);
    if n > limit {
        let kind = if mixed { "mixed states are".to_string() } else { format!("measure {} is", measure.name()) };
        return Err(infeasible(format!("{kind} limited to N <= {limit} in dense mode, got N = {n}")));
    }
    if mixed && measure != Measure::Q {
        return Err(usage(format!("measure {} needs a pure state", measure.name())));
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Fail> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing stdout")?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Fail> {
    let mut s = serde_json::to_string_pretty(v).context("serializing report")?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct StateInfo {
    family: Family,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bloch: Option<Vec<[f64; 3]>>,
}

#[derive(Serialize)]
struct ThresholdInfo {
    census_threshold: f64,
    eps: f64,
    delta: f64,
    factorization_tol: f64,
    backaction_tol: f64,
    le_grid: usize,
    le_max_sites: usize,
    sep_constant: f64,
    optimizer: OptimizerSettings,
}

impl ThresholdInfo {
    fn new(t: &Thresholds) -> Self {
        ThresholdInfo {
            census_threshold: t.threshold,
            eps: t.eps,
            delta: t.delta,
            factorization_tol: factorize::DEFAULT_TOL,
            backaction_tol: backaction::DEFAULT_TOL,
            le_grid: LE_GRID,
            le_max_sites: bipartite::MAX_LE_SITES,
            sep_constant: qindex::DEFAULT_SEP_CONSTANT,
            optimizer: OptimizerSettings::default(),
        }
    }
}

#[derive(Serialize)]
struct PSection {
    max_fluctuation: f64,
    e1: f64,
    feasible_value: f64,
    mz_correlation: f64,
    argmax: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct QSection {
    max_double_commutator: f64,
    candidate_best: f64,
    converged: bool,
    per_start: Vec<f64>,
    argmax: Vec<[f64; 3]>,
    bounds: DistanceBounds,
}

#[derive(Serialize)]
struct EntropySection {
    half_cut_bits: f64,
    per_site_bits: Vec<f64>,
    meyer_wallach: f64,
}

#[derive(Serialize)]
struct ConcurrenceSection {
    le_included: bool,
    pairs: Vec<PairRow>,
}

#[derive(Serialize)]
struct CensusSection {
    observable: Vec<[f64; 3]>,
    #[serde(flatten)]
    census: Census,
}

#[derive(Serialize)]
struct Report {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    state: StateInfo,
    thresholds: ThresholdInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<PSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<QSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entropy: Option<EntropySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    concurrence: Option<ConcurrenceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    census: Option<CensusSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eb: Option<EBReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backaction: Option<Vec<BackactionReport>>,
}

fn half_cut(psi: &PureState) -> Result<f64, Error> {
    let n = psi.n_sites();
    cut_entropy(psi, &SiteSubset::new(1..=n / 2, n)?)
}

fn analyze(a: AnalyzeArgs) -> Result<u8, Fail> {
    let spec = family_spec(&a.state)?;
    check_thresholds(&a.thresholds)?;
    let n = a.n;
    let mixed = a.state.state.is_mixed();
    let mut measures = a.measures.clone();
    measures.dedup();
    for &m in &measures {
        check_size(m, mixed, n)?;
    }
    if a.output.format == Format::Csv && !measures.contains(&Measure::Concurrence) {
        return Err(usage("--format csv emits the concurrence table; add concurrence to --measures".into()));
    }
    let seed = a.state.seed;
    let state = spec.build(n, Some(seed))?;
    let has = |m: Measure| measures.contains(&m);

    let mut report = Report {
        tool: "macroent",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        state: StateInfo { family: spec.family, n, k: spec.params.k, bloch: spec.params.bloch.clone() },
        thresholds: ThresholdInfo::new(&a.thresholds),
        p: None,
        q: None,
        entropy: None,
        concurrence: None,
        census: None,
        eb: None,
        backaction: None,
    };

    if has(Measure::Q) {
        let opt = max_double_commutator_state(&state, &OptimizerSettings::default(), seed)?;
        report.q = Some(QSection {
            max_double_commutator: opt.value,
            candidate_best: opt.candidate_best,
            converged: opt.converged,
            per_start: opt.per_start,
            argmax: opt.argmax.terms().to_vec(),
            bounds: bounds_from_value(opt.value, n, qindex::DEFAULT_SEP_CONSTANT),
        });
    }

    if let State::Pure(psi) = &state {
        let fluct = (has(Measure::P) || has(Measure::Census)).then(|| max_fluctuation(psi));
        if let (true, Some(f)) = (has(Measure::P), &fluct) {
            let mz = AdditiveObservable::magnetization(n, Axis::Z);
            report.p = Some(PSection {
                max_fluctuation: f.value,
                e1: f.e1,
                feasible_value: f.feasible_value,
                mz_correlation: correlation(&mz, &mz, psi)?,
                argmax: f.argmax.terms().to_vec(),
            });
        }
        if has(Measure::Entropy) {
            let per_site = (1..=n)
                .map(|l| schmidt_at_site(psi, l).map(|c| c.entropy_bits()))
                .collect::<Result<Vec<_>, _>>()?;
            report.entropy =
                Some(EntropySection { half_cut_bits: half_cut(psi)?, per_site_bits: per_site, meyer_wallach: meyer_wallach(psi) });
        }
        if has(Measure::Concurrence) {
            let le = n <= bipartite::MAX_LE_SITES;
            let rows = pair_table(psi, le.then_some(LE_GRID), seed)?;
            report.concurrence = Some(ConcurrenceSection { le_included: le, pairs: rows });
        }
        if let (true, Some(f)) = (has(Measure::Census), &fluct) {
            let census = correlation_census(psi, &f.argmax, a.thresholds.threshold)?;
            report.census = Some(CensusSection { observable: f.argmax.terms().to_vec(), census });
        }
        if has(Measure::Eb) {
            report.eb = Some(eb_report(psi, a.thresholds.eps, a.thresholds.delta, factorize::DEFAULT_TOL)?);
        }
        if has(Measure::Backaction) {
            let reports = (1..=n)
                .map(|l| backaction::backaction_report(psi, l, backaction::DEFAULT_TOL))
                .collect::<Result<Vec<_>, _>>()?;
            report.backaction = Some(reports);
        }
    }

    let text = match a.output.format {
        Format::Json => to_json(&report)?,
        Format::Csv => pair_table_csv(&report.concurrence.as_ref().map(|c| c.pairs.clone()).unwrap_or_default()),
    };
    emit(&a.output.out, &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct SweepReport {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    thresholds: ThresholdInfo,
    #[serde(flatten)]
    fit: ScalingFit,
}

fn sweep_value(spec: &FamilySpec, measure: Measure, n: usize, seed: u64, t: &Thresholds) -> Result<f64, Fail> {
    let psi = macroent::qstate::make_state(spec, n, Some(seed))?;
    Ok(match measure {
        Measure::Entropy => half_cut(&psi)?,
        Measure::Concurrence => {
            let mut best: f64 = 0.0;
            for l in 1..=n {
                for m in l + 1..=n {
                    best = best.max(concurrence(&psi, l, m)?);
                }
            }
            best
        }
        Measure::Census => {
            let f = max_fluctuation(&psi);
            correlation_census(&psi, &f.argmax, t.threshold)?.r1_count as f64
        }
        Measure::Eb => eb_report(&psi, t.eps, t.delta, factorize::DEFAULT_TOL)?.eb_count as f64,
        Measure::Backaction => {
            let mut total = 0usize;
            for l in 1..=n {
                total += backaction::backaction_report(&psi, l, backaction::DEFAULT_TOL)?.affected_sites;
            }
            total as f64
        }
        Measure::P | Measure::Q => unreachable!("index measures are fitted directly"),
    })
}

fn sweep(a: SweepArgs) -> Result<u8, Fail> {
    let spec = family_spec(&a.state)?;
    check_thresholds(&a.thresholds)?;
    let grid = a.n_grid.0.clone();
    let mixed = a.state.state.is_mixed();
    for &n in &grid {
        check_size(a.measure, mixed, n)?;
    }
    let seed = a.state.seed;
    let fit = match a.measure {
        Measure::P => estimate_index_p(&spec, &grid, Some(seed))?,
        Measure::Q => estimate_index_q(&spec, &grid, &OptimizerSettings::default(), seed)?,
        m => {
            let values = macroent::par::map(&grid, |&n| sweep_value(&spec, m, n, seed, &a.thresholds))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            ScalingFit::from_values(spec.family.tag(), m.name(), &grid, values)?
        }
    };
    let text = match a.output.format {
        Format::Json => to_json(&SweepReport {
            tool: "macroent",
            version: env!("CARGO_PKG_VERSION"),
            seed,
            thresholds: ThresholdInfo::new(&a.thresholds),
            fit,
        })?,
        Format::Csv => {
            let mut s = String::from("n,value,measure\n");
            for (n, v) in fit.n_grid.iter().zip(&fit.values) {
                s.push_str(&format!("{n},{v:.12},{}\n", fit.measure));
            }
            s
        }
    };
    emit(&a.output.out, &text)?;
    Ok(0)
}

fn validate(a: ValidateArgs) -> Result<u8, Fail> {
    if a.corpus_size == 0 {
        return Err(usage("--corpus-size must be positive".into()));
    }
    let cfg = ValidateConfig {
        corpus_size: a.corpus_size,
        seed: a.seed,
        tol_scale: if a.inject_fault { -1.0 } else { 1.0 },
    };
    let summary = run_validation(&cfg)?;
    let text = match a.output.format {
        Format::Json => to_json(&summary)?,
        Format::Csv => {
            let mut s = String::from("module,property,cases,failures,worst_excess,status\n");
            for p in &summary.properties {
                let status = if p.passed() { "pass" } else { "FAIL" };
                s.push_str(&format!("{},{},{},{},{:.3e},{status}\n", p.module, p.name, p.cases, p.failures, p.worst_excess));
            }
            s
        }
    };
    emit(&a.output.out, &text)?;
    let mut by_module: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for p in &summary.properties {
        let e = by_module.entry(&p.module).or_default();
        e.0 += 1;
        e.1 += usize::from(!p.passed());
        if !p.passed() {
            eprintln!("FAIL {}::{}: {}/{} cases, worst excess {:.3e}", p.module, p.name, p.failures, p.cases, p.worst_excess);
        }
    }
    for (m, (total, failed)) in &by_module {
        eprintln!("{m}: {}/{total} properties pass", total - failed);
    }
    Ok(if summary.passed() { 0 } else { EXIT_VALIDATION })
}
