use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use tierk::analytic::{
    self, compare_strategies, expected_tier_writes, r_opt, rental_basis, sweep, total_cost, AnalyticForm, Changeover, CostVariant,
    InvalidOptimum, RentalBasis, StrategyRow, FALLBACK_GRID,
};
use tierk::engine::RentalMode;
use tierk::pricing::{load_scenario, ScenarioConfig};
use tierk::simulator::{self, load_trace, monte_carlo, ScoreSource, SimConfig, SimResult, Stat};
use tierk::{CostBreakdown, PerDocCosts, StrategySpec, WorkloadSpec};

use crate::envelope::OutputEnvelope;

/// What a command hands back to `main`: text for humans, JSON for machines.
pub struct Report {
    pub human: String,
    pub json: String,
    pub exit_code: u8,
}

impl Report {
    fn new<A: Serialize, R: Serialize>(human: String, envelope: OutputEnvelope<A, R>) -> Self {
        Self {
            human,
            json: envelope.to_json(),
            exit_code: 0,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long, env = "TIERK_SCENARIO")]
    pub scenario: PathBuf,
    /// Override the stream length N.
    #[arg(long, env = "TIERK_N")]
    pub n: Option<u64>,
    /// Override the number of retained documents K.
    #[arg(long, env = "TIERK_K")]
    pub k: Option<u64>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = load_scenario(&self.scenario)?;
        if let Some(n) = self.n {
            cfg.workload.n_docs = n;
        }
        if let Some(k) = self.k {
            cfg.workload.top_k = k;
        }
        cfg.workload
            .validate()
            .with_context(|| format!("overrides on {}", self.scenario.display()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct VariantArgs {
    /// Bulk-migrate tier A to tier B at the changeover.
    #[arg(long, overrides_with = "no_migrate", env = "TIERK_MIGRATE")]
    pub migrate: bool,
    /// Keep documents where they were written (default).
    #[arg(long)]
    #[serde(skip)]
    pub no_migrate: bool,
}

impl VariantArgs {
    pub fn variant(&self) -> CostVariant {
        if self.migrate && !self.no_migrate {
            CostVariant::Migration
        } else {
            CostVariant::NoMigration
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormArg {
    #[default]
    Exact,
    Log,
}

impl From<FormArg> for AnalyticForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Exact => AnalyticForm::ExactHarmonic,
            FormArg::Log => AnalyticForm::LogApprox,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceArg {
    #[default]
    Uniform,
    Permutation,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RentalArg {
    #[default]
    Bound,
    Exact,
}

impl From<RentalArg> for RentalMode {
    fn from(r: RentalArg) -> Self {
        match r {
            RentalArg::Bound => RentalMode::Bound,
            RentalArg::Exact => RentalMode::Exact,
        }
    }
}

fn fmt_cost(c: &CostBreakdown, currency: &str, basis: RentalBasis) -> String {
    let rental_label = match basis {
        RentalBasis::Expected => "rental",
        RentalBasis::UpperBound => "rental_bound",
    };
    format!(
        "writes {:.2}  reads {:.2}  {rental_label} {:.2}  migration {:.2}  total {:.2} {currency}",
        c.writes, c.reads, c.rental, c.migration, c.total
    )
}

/// Cost split with the rental component named after its basis.
#[derive(Debug, Serialize)]
struct LabelledCost {
    writes: f64,
    reads: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rental: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rental_bound: Option<f64>,
    migration: f64,
    total: f64,
}

impl LabelledCost {
    fn new(c: &CostBreakdown, basis: RentalBasis) -> Self {
        let (rental, rental_bound) = match basis {
            RentalBasis::Expected => (Some(c.rental), None),
            RentalBasis::UpperBound => (None, Some(c.rental)),
        };
        Self {
            writes: c.writes,
            reads: c.reads,
            rental,
            rental_bound,
            migration: c.migration,
            total: c.total,
        }
    }
}

// ---------------------------------------------------------------- optimize

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Harmonic sums or their log approximation.
    #[arg(long, value_enum, default_value_t = FormArg::Exact)]
    pub form: FormArg,
}

#[derive(Debug, Serialize)]
struct OptimizeResult {
    variant: CostVariant,
    currency: String,
    workload: WorkloadSpec,
    per_doc_costs: PerDocCosts,
    valid: bool,
    reason: Option<String>,
    invalid: Option<InvalidOptimum>,
    fraction: Option<f64>,
    r: Option<u64>,
    cost: Option<LabelledCost>,
}

pub fn optimize(args: &OptimizeArgs) -> Result<Report> {
    let cfg = args.scenario.load()?;
    let costs = cfg.per_doc_costs();
    let spec = cfg.workload;
    let variant = args.variant.variant();
    let opt = r_opt(&spec, &costs, variant);
    let mut human = String::new();
    writeln!(human, "scenario   {}", args.scenario.scenario.display())?;
    writeln!(human, "variant    {variant:?}")?;
    let result = match opt {
        Ok(Changeover { r, fraction }) => {
            let strat = variant.strategy(r);
            let cost = total_cost(&spec, &strat, &costs, args.form.into())?;
            let basis = rental_basis(&strat);
            writeln!(human, "r_opt      {r} (r/N = {fraction:.8})")?;
            writeln!(human, "verdict    valid")?;
            writeln!(human, "cost       {}", fmt_cost(&cost, &cfg.currency, basis))?;
            OptimizeResult {
                variant,
                currency: cfg.currency.clone(),
                workload: spec,
                per_doc_costs: costs,
                valid: true,
                reason: None,
                invalid: None,
                fraction: Some(fraction),
                r: Some(r),
                cost: Some(LabelledCost::new(&cost, basis)),
            }
        }
        Err(why) => {
            if let Some(f) = why.fraction() {
                writeln!(human, "stationary r/N = {f:.8}")?;
            }
            writeln!(human, "invalid: {why}")?;
            OptimizeResult {
                variant,
                currency: cfg.currency.clone(),
                workload: spec,
                per_doc_costs: costs,
                valid: false,
                reason: Some(why.to_string()),
                invalid: Some(why),
                fraction: why.fraction(),
                r: None,
                cost: None,
            }
        }
    };
    let valid = result.valid;
    let mut report = Report::new(human, OutputEnvelope::new("optimize", args, result).scenario(&cfg));
    if !valid {
        report.exit_code = 2;
    }
    Ok(report)
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Number of evenly spaced changeover indices from K to N.
    #[arg(long, default_value_t = 1000, env = "TIERK_GRID")]
    pub grid: usize,
    #[arg(long, value_enum, default_value_t = FormArg::Exact)]
    pub form: FormArg,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    r: u64,
    r_over_n: f64,
    writes: f64,
    reads: f64,
    rental: f64,
    migration: f64,
    total: f64,
    is_argmin: bool,
}

#[derive(Debug, Serialize)]
struct SweepResult {
    variant: CostVariant,
    currency: String,
    rental_basis: RentalBasis,
    points: usize,
    argmin_r: u64,
    argmin_r_over_n: f64,
    argmin_cost: CostBreakdown,
    closed_form: Option<Changeover>,
    closed_form_invalid: Option<String>,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn sweep_cmd(args: &SweepArgs) -> Result<Report> {
    let cfg = args.scenario.load()?;
    let costs = cfg.per_doc_costs();
    let variant = args.variant.variant();
    let sw = sweep(&cfg.workload, &costs, variant, args.grid, args.form.into())?;
    if let Some(out) = &args.out {
        write_csv(
            out,
            sw.points.iter().enumerate().map(|(j, p)| SweepRow {
                r: p.r,
                r_over_n: p.r_over_n,
                writes: p.cost.writes,
                reads: p.cost.reads,
                rental: p.cost.rental,
                migration: p.cost.migration,
                total: p.cost.total,
                is_argmin: j == sw.argmin,
            }),
        )?;
    }
    let best = sw.best();
    let closed = r_opt(&cfg.workload, &costs, variant);
    let basis = rental_basis(&variant.strategy(cfg.workload.n_docs));
    let mut human = String::new();
    writeln!(human, "variant    {variant:?}, {} grid points", sw.points.len())?;
    writeln!(human, "argmin     r = {} (r/N = {:.6})", best.r, best.r_over_n)?;
    writeln!(human, "cost       {}", fmt_cost(&best.cost, &cfg.currency, basis))?;
    match &closed {
        Ok(c) => writeln!(human, "closed     r = {} (r/N = {:.8})", c.r, c.fraction)?,
        Err(e) => writeln!(human, "closed     invalid: {e}")?,
    }
    if let Some(out) = &args.out {
        writeln!(human, "csv        {}", out.display())?;
    }
    let result = SweepResult {
        variant,
        currency: cfg.currency.clone(),
        rental_basis: basis,
        points: sw.points.len(),
        argmin_r: best.r,
        argmin_r_over_n: best.r_over_n,
        argmin_cost: best.cost,
        closed_form: closed.ok(),
        closed_form_invalid: closed.err().map(|e| e.to_string()),
    };
    Ok(Report::new(
        human,
        OutputEnvelope::new("sweep", args, result).scenario(&cfg).csv(args.out.clone()),
    ))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Changeover index; defaults to the variant's optimum.
    #[arg(long)]
    pub r: Option<u64>,
    #[arg(long, default_value_t = 1000, env = "TIERK_TRIALS")]
    pub trials: u64,
    #[arg(long, default_value_t = 0, env = "TIERK_SEED")]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SourceArg::Uniform)]
    pub source: SourceArg,
    #[arg(long, value_enum, default_value_t = RentalArg::Bound)]
    pub rental: RentalArg,
    /// CSV output of the per-index write curves.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optimal changeover for `variant`, or the sweep argmin when the closed form is rejected.
fn choose_r(cfg: &ScenarioConfig, costs: &PerDocCosts, variant: CostVariant) -> Result<u64> {
    match r_opt(&cfg.workload, costs, variant) {
        Ok(c) => Ok(c.r),
        Err(why) => {
            tracing::info!(%why, "closed-form changeover rejected; using the sweep minimum");
            Ok(sweep(&cfg.workload, costs, variant, FALLBACK_GRID, AnalyticForm::ExactHarmonic)?
            .best()
            .r)
        }
    }
}

#[derive(Debug, Serialize)]
struct Comparison {
    analytic: f64,
    simulated: Stat,
    /// (simulated - analytic) / standard error.
    z: f64,
}

impl Comparison {
    fn new(analytic: f64, simulated: Stat, trials: u64) -> Self {
        let se = simulated.std_error(trials);
        let diff = simulated.mean - analytic;
        let z = if se > 0.0 {
            diff / se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self { analytic, simulated, z }
    }
}

#[derive(Debug, Serialize)]
struct SimulateResult {
    strategy: StrategySpec,
    workload: WorkloadSpec,
    trials: u64,
    writes_a: Comparison,
    writes_b: Comparison,
    writes_total: Comparison,
    evictions: Stat,
    migrated: Stat,
    realized_cost: simulator::CostStats,
    rental_mode: RentalMode,
}

#[derive(Debug, Serialize)]
struct CurveRow {
    index: usize,
    write_rate: f64,
    analytic_write_rate: f64,
    cumulative_writes: f64,
    analytic_cumulative: f64,
}

pub fn simulate(args: &SimulateArgs) -> Result<Report> {
    let cfg = args.scenario.load()?;
    let costs = cfg.per_doc_costs();
    let spec = cfg.workload;
    let variant = args.variant.variant();
    let r = match args.r {
        Some(r) => r,
        None => choose_r(&cfg, &costs, variant)?,
    };
    let strat = variant.strategy(r);
    let source = match args.source {
        SourceArg::Uniform => ScoreSource::UniformRandom,
        SourceArg::Permutation => ScoreSource::Permutation,
    };
    let sim = SimConfig {
        trials: args.trials,
        seed: args.seed,
        score_source: source,
        rental_mode: args.rental.into(),
    };
    let res: SimResult = monte_carlo(&spec, &strat, &costs, &sim)?;
    let (ea, eb) = expected_tier_writes(&spec, r)?;
    if let Some(out) = &args.out {
        let (analytic_cum, _) = analytic::cumulative_write_curve(spec.n_docs, spec.top_k);
        write_csv(
            out,
            res.write_rate_curve.iter().enumerate().map(|(i, &w)| CurveRow {
                index: i,
                write_rate: w,
                analytic_write_rate: analytic::write_rate(i as u64, spec.top_k),
                cumulative_writes: res.cumulative_writes[i],
                analytic_cumulative: analytic_cum[i],
            }),
        )?;
    }
    let result = SimulateResult {
        strategy: strat,
        workload: spec,
        trials: res.trials,
        writes_a: Comparison::new(ea, res.writes_a, res.trials),
        writes_b: Comparison::new(eb, res.writes_b, res.trials),
        writes_total: Comparison::new(ea + eb, res.writes_total, res.trials),
        evictions: res.evictions,
        migrated: res.migrated,
        realized_cost: res.cost,
        rental_mode: sim.rental_mode,
    };
    let mut human = String::new();
    writeln!(human, "N = {}, K = {}, r = {r}, migrate = {}, {} trials, seed {}", spec.n_docs, spec.top_k, strat.migrate, res.trials, args.seed)?;
    for (name, c) in [("writes A", &result.writes_a), ("writes B", &result.writes_b), ("writes", &result.writes_total)] {
        writeln!(
            human,
            "{name:<10} simulated {:.4} ± {:.4}  analytic {:.4}  z = {:+.2}",
            c.simulated.mean,
            c.simulated.std_error(res.trials),
            c.analytic,
            c.z
        )?;
    }
    writeln!(human, "cost       mean total {:.6} {}", res.cost.total.mean, cfg.currency)?;
    Ok(Report::new(
        human,
        OutputEnvelope::new("simulate", args, result)
            .scenario(&cfg)
            .seeded(args.seed)
            .csv(args.out.clone()),
    ))
}

// ---------------------------------------------------------------- replay

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub variant: VariantArgs,
    /// Score trace, CSV with header `index,score`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Changeover index; defaults to the variant's optimum.
    #[arg(long)]
    pub r: Option<u64>,
    /// CSV output of observed and analytic cumulative writes.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ReplayResult {
    strategy: StrategySpec,
    workload: WorkloadSpec,
    writes_a: f64,
    writes_b: f64,
    evictions: f64,
    realized_cost: CostBreakdown,
    analytic_total_writes: f64,
    max_abs_deviation: f64,
    max_z: f64,
    within_4_sigma: bool,
    first_k_all_written: bool,
}

#[derive(Debug, Serialize)]
struct ReplayRow {
    index: usize,
    written: bool,
    cumulative_writes: f64,
    analytic: f64,
    sigma: f64,
}

pub fn replay(args: &ReplayArgs) -> Result<Report> {
    let mut cfg = args.scenario.load()?;
    let trace = load_trace(&args.trace)?;
    if args.scenario.n.is_none() {
        cfg.workload.n_docs = trace.len() as u64;
        cfg.workload.validate().context("trace length against scenario K")?;
    }
    let costs = cfg.per_doc_costs();
    let spec = cfg.workload;
    let variant = args.variant.variant();
    let r = match args.r {
        Some(r) => r,
        None => choose_r(&cfg, &costs, variant)?,
    };
    let strat = variant.strategy(r);
    let rep = simulator::replay(&trace, &spec, &strat, &costs)?;
    if let Some(out) = &args.out {
        write_csv(
            out,
            rep.result.cumulative_writes.iter().enumerate().map(|(i, &c)| ReplayRow {
                index: i,
                written: c > if i == 0 { 0.0 } else { rep.result.cumulative_writes[i - 1] },
                cumulative_writes: c,
                analytic: rep.analytic_curve[i],
                sigma: rep.sigma_curve[i],
            }),
        )?;
    }
    let c = &rep.result.cost;
    let result = ReplayResult {
        strategy: strat,
        workload: spec,
        writes_a: rep.result.writes_a.mean,
        writes_b: rep.result.writes_b.mean,
        evictions: rep.result.evictions.mean,
        realized_cost: CostBreakdown::new(c.writes.mean, c.reads.mean, c.rental.mean, c.migration.mean),
        analytic_total_writes: rep.analytic_curve.last().copied().unwrap_or(0.0),
        max_abs_deviation: rep.max_abs_deviation,
        max_z: rep.max_z,
        within_4_sigma: rep.within_band(4.0),
        first_k_all_written: rep.first_k_all_written,
    };
    let mut human = String::new();
    writeln!(human, "trace      {} ({} documents)", args.trace.display(), trace.len())?;
    writeln!(human, "writes     {} observed, {:.2} expected", result.writes_a + result.writes_b, result.analytic_total_writes)?;
    writeln!(human, "deviation  max {:.2} writes, max z {:.2}, within 4σ: {}", rep.max_abs_deviation, rep.max_z, result.within_4_sigma)?;
    writeln!(human, "first K    all written: {}", rep.first_k_all_written)?;
    Ok(Report::new(
        human,
        OutputEnvelope::new("replay", args, result).scenario(&cfg).csv(args.out.clone()),
    ))
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value_t = FormArg::Exact)]
    pub form: FormArg,
}

#[derive(Debug, Serialize)]
struct CompareResult {
    currency: String,
    rows: Vec<StrategyRow>,
}

pub fn compare(args: &CompareArgs) -> Result<Report> {
    let cfg = args.scenario.load()?;
    let rows = compare_strategies(&cfg.workload, &cfg.per_doc_costs(), args.form.into())?;
    let mut human = String::new();
    for row in &rows {
        let r = match (row.r, row.fraction) {
            (Some(r), Some(f)) => format!("r = {r} (r/N = {f:.6})"),
            _ => "-".to_string(),
        };
        writeln!(human, "{:<26} {:<32} {}", format!("{:?}", row.plan), r, fmt_cost(&row.cost, &cfg.currency, row.rental_basis))?;
        if let Some(why) = &row.invalid {
            writeln!(human, "{:<26} closed form invalid ({why}); sweep minimum shown", "")?;
        }
    }
    let result = CompareResult {
        currency: cfg.currency.clone(),
        rows,
    };
    Ok(Report::new(human, OutputEnvelope::new("compare", args, result).scenario(&cfg)))
}

// ---------------------------------------------------------------- gen-trace

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0, env = "TIERK_SEED")]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct GenTraceResult {
    documents: usize,
}

pub fn gen_trace(args: &GenTraceArgs) -> Result<Report> {
    let trace = simulator::synthetic_trace(args.n, args.seed);
    simulator::write_trace(&args.out, &trace).with_context(|| format!("cannot write {}", args.out.display()))?;
    let human = format!("wrote {} scores to {}\n", args.n, args.out.display());
    Ok(Report::new(
        human,
        OutputEnvelope::new("gen-trace", args, GenTraceResult { documents: args.n })
            .seeded(args.seed)
            .csv(Some(args.out.clone())),
    ))
}
