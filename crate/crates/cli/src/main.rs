//! `ruq`: bound tables, coverage studies and rounding-error experiments.
//!
//! Exit status: 0 on success, 2 on invalid input, 3 on runtime failure.

mod output;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rounding_uq::bounds::{
    coverage, critical_sizes_with, gamma_dbea, gamma_mibea_original, gamma_mmibea, gamma_vibea, lambda_dagger,
    product_deviations, CBound, LogErrorStats, Method,
};
use rounding_uq::bvp::{self, BvpParams, QoiBound};
use rounding_uq::io as rio;
use rounding_uq::kernels::{
    matmul_emulated, matvec_emulated, thomas_solve, BoundConfig, ThomasOutcome, KernelRun, Matrix, TriDiagonal,
};
use rounding_uq::stats::{self, edf_model_check, slack, uniform_data, TrialPlan};
use rounding_uq::{Error, FloatFormat, Stream};

use output::{Cell, Table};

#[derive(Parser)]
#[command(name = "ruq", version, about = "Deterministic and probabilistic rounding-error bounds and experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Base seed; trial i draws from substream (seed, i)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for trial parallelism (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Bernstein constant c in VIBEA: `paper` (u/(1-u)) or `symmetric`
    #[arg(long = "c-bound", global = true, default_value = "paper")]
    c_bound: CBound,
    /// Output file; defaults to $RUQ_OUT_DIR/<command>.csv, else stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit a JSON report instead of CSV
    #[arg(long, global = true)]
    json: bool,
    /// Keep underflow an error in random-data experiments (default: subnormals on)
    #[arg(long, global = true)]
    strict_underflow: bool,
}

#[derive(Subcommand)]
enum Command {
    /// gamma_n for every method at the given n
    BoundsTable {
        #[arg(long, default_value = "fp32")]
        fmt: FloatFormat,
        #[arg(long, default_value_t = 0.99)]
        zeta: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000,10000,100000,1000000")]
        n: Vec<u64>,
        /// Hoeffding parameter for the original MIBEA (default: lambda solved from zeta)
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Smallest n beyond which VIBEA stays tighter than MMIBEA (n_c) and DBEA (n_d)
    CriticalSizes {
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.95,0.99,0.999")]
        zeta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "fp16,fp32")]
        fmt: Vec<FloatFormat>,
    },
    /// Monte Carlo coverage of the probabilistic bounds for products of (1 + delta)
    Coverage {
        #[arg(long, value_delimiter = ',', default_value = "fp16,fp32")]
        fmt: Vec<FloatFormat>,
        #[arg(long, value_delimiter = ',', default_value = "4,64,1024")]
        n: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "0.9,0.99")]
        zeta: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Dot products of U[-1,1] vectors
    Dot {
        #[arg(long, default_value = "fp16")]
        fmt: FloatFormat,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Joint confidence all bounds are solved for
        #[arg(long = "q-target", default_value_t = 0.99)]
        q_target: f64,
        /// Also write the backward-error EDFs (t,F) of measured and modeled errors
        #[arg(long)]
        edf_out: Option<PathBuf>,
    },
    /// Matrix-vector products of U[-1,1] data, or of given inputs
    Matvec {
        #[arg(long, default_value = "fp16")]
        fmt: FloatFormat,
        /// Rows (default: n)
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long = "q-target", default_value_t = 0.99)]
        q_target: f64,
        #[command(flatten)]
        inputs: MatvecInputs,
    },
    /// Matrix products of U[-1,1] data, or of given inputs
    Matmul {
        #[arg(long, default_value = "fp16")]
        fmt: FloatFormat,
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 32)]
        n: usize,
        /// Columns of the right factor
        #[arg(long, default_value_t = 32)]
        t: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long = "q-target", default_value_t = 0.99)]
        q_target: f64,
        #[command(flatten)]
        inputs: MatmulInputs,
    },
    /// Thomas solves of random diagonally dominant systems, or of a given system
    Thomas {
        #[arg(long, default_value = "fp16")]
        fmt: FloatFormat,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long = "q-target", default_value_t = 0.99)]
        q_target: f64,
        #[command(flatten)]
        inputs: ThomasInputs,
    },
    /// The stochastic boundary value problem: error budget per M, or a Monte Carlo study
    Bvp {
        #[arg(long, default_value = "fp16")]
        fmt: FloatFormat,
        #[arg(long = "M", value_delimiter = ',', default_value = "8,16,32,64,128")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        theta1: f64,
        #[arg(long, default_value_t = 1.0)]
        theta2: f64,
        #[arg(long = "q-target", default_value_t = 0.99)]
        q_target: f64,
        /// Monte Carlo samples of (theta1, theta2); switches to the sampling study
        #[arg(long)]
        mc_samples: Option<usize>,
        /// Samples of the analytic estimate of E[P]
        #[arg(long, default_value_t = 1_000_000)]
        reference_samples: usize,
    },
    /// Compare backward-error EDFs of real and modeled dot products
    EdfModelCheck {
        #[arg(long, default_value = "fp16")]
        fmt: FloatFormat,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0.02)]
        slack: f64,
        #[arg(long)]
        edf_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MatvecInputs {
    /// Matrix file (.bin column-major binary, otherwise CSV)
    #[arg(long, requires = "x")]
    a: Option<PathBuf>,
    /// Vector file
    #[arg(long, requires = "a")]
    x: Option<PathBuf>,
    /// Write the computed result of the last trial here
    #[arg(long)]
    write_result: Option<PathBuf>,
}

#[derive(Args)]
struct MatmulInputs {
    #[arg(long, requires = "b")]
    a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    #[arg(long)]
    write_result: Option<PathBuf>,
}

#[derive(Args)]
struct ThomasInputs {
    /// n x 3 matrix of (sub, diag, sup); sub[0] and sup[n-1] are ignored
    #[arg(long, requires = "rhs")]
    system: Option<PathBuf>,
    #[arg(long, requires = "system")]
    rhs: Option<PathBuf>,
    #[arg(long)]
    write_result: Option<PathBuf>,
}

type Res<T> = std::result::Result<T, Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_)
        | Error::Parse(_)
        | Error::Domain(_)
        | Error::InfeasibleConfidence { .. }
        | Error::ShapeMismatch(_)
        | Error::EmptyInput => 2,
        _ => 3,
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn check_prob(name: &str, v: f64) -> Res<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("--{name} must lie in (0, 1), got {v}")))
    }
}

fn check_positive(name: &str, v: usize) -> Res<()> {
    if v == 0 {
        Err(invalid(format!("--{name} must be positive")))
    } else {
        Ok(())
    }
}

/// Effective format of a random-data experiment.
fn data_format(fmt: FloatFormat, g: &Global) -> FloatFormat {
    if g.strict_underflow {
        fmt
    } else {
        fmt.with_gradual_underflow()
    }
}

fn config_of(t: &mut Table, g: &Global, extra: &[(&str, String)]) {
    t.config.push(("command".into(), t.command.into()));
    for (k, v) in extra {
        t.config.push((k.to_string(), v.clone()));
    }
    t.config.push(("seed".into(), g.seed.to_string()));
    t.config.push(("c_bound".into(), g.c_bound.to_string()));
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn real(v: f64) -> String {
    rio::fmt_real(v)
}

fn run(cli: Cli) -> Res<()> {
    let g = cli.global;
    let table = match cli.command {
        Command::BoundsTable { fmt, zeta, n, lambda } => bounds_table(&g, fmt, zeta, &n, lambda)?,
        Command::CriticalSizes { zeta, fmt } => critical(&g, &zeta, &fmt)?,
        Command::Coverage { fmt, n, zeta, trials } => coverage_study(&g, &fmt, &n, &zeta, trials)?,
        Command::Dot { fmt, n, trials, q_target, edf_out } => dot(&g, fmt, n, trials, q_target, edf_out.as_deref())?,
        Command::Matvec { fmt, m, n, trials, q_target, inputs } => matvec(&g, fmt, m.unwrap_or(n), n, trials, q_target, inputs)?,
        Command::Matmul { fmt, m, n, t, trials, q_target, inputs } => matmul(&g, fmt, (m, n, t), trials, q_target, inputs)?,
        Command::Thomas { fmt, n, trials, q_target, inputs } => thomas(&g, fmt, n, trials, q_target, inputs)?,
        Command::Bvp { fmt, m, theta1, theta2, q_target, mc_samples, reference_samples } => match mc_samples {
            Some(s) => bvp_mc(&g, fmt, &m, s, reference_samples)?,
            None => bvp_budget(&g, fmt, &m, theta1, theta2, q_target)?,
        },
        Command::EdfModelCheck { fmt, n, trials, slack, edf_out } => model_check(&g, fmt, n, trials, slack, edf_out.as_deref())?,
    };
    table.emit(g.out.as_deref(), g.json)?;
    for (k, v) in &table.summary {
        eprintln!("{k}: {}", v.csv());
    }
    Ok(())
}

fn bounds_table(g: &Global, fmt: FloatFormat, zeta: f64, ns: &[u64], lambda: Option<f64>) -> Res<Table> {
    check_prob("zeta", zeta)?;
    let u = fmt.unit_roundoff();
    let lambda = match lambda {
        Some(l) if l > 0.0 => l,
        Some(l) => return Err(invalid(format!("--lambda must be positive, got {l}"))),
        None => lambda_dagger(zeta, u)?,
    };
    let stats = LogErrorStats::uniform_with(u, g.c_bound)?;
    let mut t = Table::new("bounds-table", &["fmt", "u", "zeta", "n", "dbea", "mibea", "mibea_prob", "mmibea", "vibea"]);
    config_of(&mut t, g, &[("fmt", fmt.to_string()), ("zeta", real(zeta)), ("n", list(ns)), ("lambda", real(lambda))]);
    for &n in ns {
        if n == 0 {
            return Err(invalid("--n entries must be positive"));
        }
        let mibea = gamma_mibea_original(u, n, lambda)?;
        t.push(vec![
            fmt.to_string().into(),
            u.into(),
            zeta.into(),
            n.into(),
            gamma_dbea(u, n).ok().map(|r| r.gamma).into(),
            mibea.gamma.into(),
            mibea.holds_with_prob_at_least.into(),
            gamma_mmibea(zeta, u, n)?.gamma.into(),
            gamma_vibea(zeta, u, n, &stats)?.gamma.into(),
        ]);
    }
    Ok(t)
}

fn critical(g: &Global, zetas: &[f64], fmts: &[FloatFormat]) -> Res<Table> {
    let mut t = Table::new("critical-sizes", &["zeta", "fmt", "n_c", "n_d"]);
    config_of(&mut t, g, &[("zeta", list(&zetas.iter().map(|z| real(*z)).collect::<Vec<_>>())), ("fmt", list(fmts))]);
    for fmt in fmts {
        for &z in zetas {
            check_prob("zeta", z)?;
            let (nc, nd) = critical_sizes_with(z, fmt.unit_roundoff(), g.c_bound)?;
            t.push(vec![z.into(), fmt.to_string().into(), nc.into(), nd.into()]);
        }
    }
    Ok(t)
}

fn coverage_study(g: &Global, fmts: &[FloatFormat], ns: &[u64], zetas: &[f64], trials: usize) -> Res<Table> {
    check_positive("trials", trials)?;
    let mut t = Table::new(
        "coverage",
        &["method", "fmt", "u", "zeta", "n", "gamma", "trials", "coverage", "threshold", "pass"],
    );
    config_of(
        &mut t,
        g,
        &[
            ("fmt", list(fmts)),
            ("n", list(ns)),
            ("zeta", list(&zetas.iter().map(|z| real(*z)).collect::<Vec<_>>())),
            ("trials", trials.to_string()),
        ],
    );
    for &z in zetas {
        check_prob("zeta", z)?;
    }
    let us: Vec<f64> = fmts.iter().map(FloatFormat::unit_roundoff).collect();
    let mut all = true;
    for &n in ns {
        // one pass of draws per chunk of at most four formats
        let mut devs = Vec::new();
        for chunk in us.chunks(rounding_uq::bounds::MAX_SHARED_U) {
            devs.extend(product_deviations(chunk, n, trials, g.seed)?);
        }
        for method in [Method::Mmibea, Method::Vibea] {
            for (k, fmt) in fmts.iter().enumerate() {
                let u = us[k];
                for &z in zetas {
                    let gamma = match method {
                        Method::Mmibea => gamma_mmibea(z, u, n)?,
                        _ => gamma_vibea(z, u, n, &LogErrorStats::uniform_with(u, g.c_bound)?)?,
                    }
                    .gamma;
                    let c = coverage(&devs[k], gamma);
                    let threshold = z - slack(z, trials);
                    all &= c >= threshold;
                    t.push(vec![
                        method.name().into(),
                        fmt.to_string().into(),
                        u.into(),
                        z.into(),
                        n.into(),
                        gamma.into(),
                        trials.into(),
                        c.into(),
                        threshold.into(),
                        (c >= threshold).into(),
                    ]);
                }
            }
        }
    }
    t.summarize("all_pass", all);
    Ok(t)
}

fn bound_cells(run: &KernelRun) -> Vec<Cell> {
    [Method::Dbea, Method::Mmibea, Method::Vibea]
        .into_iter()
        .map(|m| run.gamma(m).into())
        .collect()
}

fn bound_config(g: &Global, q_target: f64) -> Res<BoundConfig> {
    check_prob("q-target", q_target)?;
    Ok(BoundConfig {
        target: q_target,
        c_bound: g.c_bound,
    })
}

fn write_edfs(path: &Path, pairs: &[(&str, &stats::Edf)]) -> Res<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# ruq {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "# schema: ruq.edf.v1")?;
    writeln!(w, "series,t,F")?;
    for (name, e) in pairs {
        for (x, f) in e.steps() {
            writeln!(w, "{name},{},{}", real(x), real(f))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn dot(g: &Global, fmt: FloatFormat, n: usize, trials: usize, q_target: f64, edf_out: Option<&Path>) -> Res<Table> {
    check_positive("n", n)?;
    check_positive("trials", trials)?;
    let cfg = bound_config(g, q_target)?;
    let fmt = data_format(fmt, g);
    let plan = TrialPlan::new(trials, g.seed)?.with_target(q_target);
    let s = stats::dot_experiment(&fmt, n, &plan, &cfg)?;
    let mut t = Table::new(
        "dot",
        &["trial", "measured_bwd", "model_bwd", "dbea", "mmibea", "vibea", "vibea_covers"],
    );
    config_of(
        &mut t,
        g,
        &[("fmt", fmt.to_string()), ("n", n.to_string()), ("trials", trials.to_string()), ("q_target", real(q_target))],
    );
    let mut ordered = true;
    for (i, o) in s.outcomes.iter().enumerate() {
        let mut row: Vec<Cell> = vec![i.into(), o.run.measured_bwd.into(), o.model_bwd.into()];
        row.extend(bound_cells(&o.run));
        row.push(stats::Outcome::covered(o).into());
        ordered &= o.run.gamma(Method::Vibea) < o.run.gamma(Method::Mmibea);
        t.push(row);
    }
    let first = &s.outcomes[0].run;
    t.summarize("dbea_valid", first.gamma(Method::Dbea).is_some());
    t.summarize("vibea_coverage", s.coverage);
    t.summarize("coverage_threshold", q_target - slack(q_target, trials));
    t.summarize("vibea_below_mmibea", ordered);
    if let Some(p) = edf_out {
        let model: Vec<f64> = s.outcomes.iter().map(|o| o.model_bwd).collect();
        write_edfs(p, &[("measured", &s.errors), ("model", &stats::Edf::build(&model)?)])?;
    }
    Ok(t)
}

fn read_matrix(p: &Path) -> Res<Matrix> {
    let f = File::open(p)?;
    if p.extension().is_some_and(|e| e == "bin") {
        rio::read_binary(BufReader::new(f))
    } else {
        rio::read_csv(BufReader::new(f))
    }
}

fn read_vector(p: &Path) -> Res<Vec<f64>> {
    let m = read_matrix(p)?;
    match (m.rows(), m.cols()) {
        (_, 1) => Ok(m.column(0).to_vec()),
        (1, _) => Ok(m.row(0)),
        (a, b) => Err(Error::ShapeMismatch(format!("{}: expected a vector, got {a}x{b}", p.display()))),
    }
}

fn write_matrix(p: &Path, m: &Matrix) -> Res<()> {
    let mut w = BufWriter::new(File::create(p)?);
    if p.extension().is_some_and(|e| e == "bin") {
        rio::write_binary(&mut w, m)?;
    } else {
        rio::write_csv(&mut w, m)?;
    }
    w.flush()?;
    Ok(())
}

fn kernel_columns() -> Vec<&'static str> {
    vec!["trial", "measured_bwd", "measured_fwd", "condition", "excluded_rows", "dbea", "mmibea", "vibea", "vibea_covers"]
}

fn kernel_row(i: usize, run: &KernelRun) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![
        i.into(),
        run.measured_bwd.into(),
        run.measured_fwd.into(),
        run.condition.into(),
        run.excluded_rows.into(),
    ];
    row.extend(bound_cells(run));
    row.push(run.gamma(Method::Vibea).is_some_and(|g| run.measured_bwd <= g).into());
    row
}

fn coverage_summary(t: &mut Table) {
    let covered = t.rows.iter().filter(|r| r.last() == Some(&Cell::Bool(true))).count();
    t.summarize("vibea_coverage", covered as f64 / t.rows.len() as f64);
}

fn matvec(g: &Global, fmt: FloatFormat, m: usize, n: usize, trials: usize, q_target: f64, inputs: MatvecInputs) -> Res<Table> {
    let cfg = bound_config(g, q_target)?;
    let fmt = data_format(fmt, g);
    let mut t = Table::new("matvec", &kernel_columns());
    let runs: Vec<(Vec<f64>, KernelRun)> = if let (Some(pa), Some(px)) = (&inputs.a, &inputs.x) {
        let a = read_matrix(pa)?.round_to(&fmt)?;
        let x = fmt.round_slice(&read_vector(px)?)?;
        config_of(&mut t, g, &[("fmt", fmt.to_string()), ("a", pa.display().to_string()), ("x", px.display().to_string())]);
        vec![matvec_emulated(&a, &x, &fmt, &cfg)?]
    } else {
        check_positive("m", m)?;
        check_positive("n", n)?;
        check_positive("trials", trials)?;
        config_of(
            &mut t,
            g,
            &[("fmt", fmt.to_string()), ("m", m.to_string()), ("n", n.to_string()), ("trials", trials.to_string()), ("q_target", real(q_target))],
        );
        let plan = TrialPlan::new(trials, g.seed)?;
        let s = stats::run_trials(&plan, |i| {
            let mut st = Stream::named(g.seed, "data", i as u64);
            let a = Matrix::from_col_major(m, n, uniform_data(&mut st, m * n, &fmt)?)?;
            let x = uniform_data(&mut st, n, &fmt)?;
            matvec_emulated(&a, &x, &fmt, &cfg).map(Wrapped)
        })?;
        s.outcomes.into_iter().map(|w| w.0).collect()
    };
    for (i, (_, run)) in runs.iter().enumerate() {
        t.push(kernel_row(i, run));
    }
    coverage_summary(&mut t);
    if let Some(p) = &inputs.write_result {
        let y = &runs.last().unwrap().0;
        write_matrix(p, &Matrix::from_col_major(y.len(), 1, y.clone())?)?;
    }
    Ok(t)
}

/// Adapter so plain kernel results can go through `run_trials`.
struct Wrapped<T>(T);

impl<T> stats::Outcome for Wrapped<(T, KernelRun)> {
    fn covered(&self) -> bool {
        let r = &self.0 .1;
        r.gamma(Method::Vibea).is_some_and(|g| r.measured_bwd <= g)
    }
    fn error(&self) -> f64 {
        self.0 .1.measured_bwd
    }
}

fn matmul(g: &Global, fmt: FloatFormat, (m, n, p): (usize, usize, usize), trials: usize, q_target: f64, inputs: MatmulInputs) -> Res<Table> {
    let cfg = bound_config(g, q_target)?;
    let fmt = data_format(fmt, g);
    let mut t = Table::new("matmul", &kernel_columns());
    let runs: Vec<(Matrix, KernelRun)> = if let (Some(pa), Some(pb)) = (&inputs.a, &inputs.b) {
        let a = read_matrix(pa)?.round_to(&fmt)?;
        let b = read_matrix(pb)?.round_to(&fmt)?;
        config_of(&mut t, g, &[("fmt", fmt.to_string()), ("a", pa.display().to_string()), ("b", pb.display().to_string())]);
        vec![matmul_emulated(&a, &b, &fmt, &cfg)?]
    } else {
        for (k, v) in [("m", m), ("n", n), ("t", p), ("trials", trials)] {
            check_positive(k, v)?;
        }
        config_of(
            &mut t,
            g,
            &[
                ("fmt", fmt.to_string()),
                ("m", m.to_string()),
                ("n", n.to_string()),
                ("t", p.to_string()),
                ("trials", trials.to_string()),
                ("q_target", real(q_target)),
            ],
        );
        let plan = TrialPlan::new(trials, g.seed)?;
        let s = stats::run_trials(&plan, |i| {
            let mut st = Stream::named(g.seed, "data", i as u64);
            let a = Matrix::from_col_major(m, n, uniform_data(&mut st, m * n, &fmt)?)?;
            let b = Matrix::from_col_major(n, p, uniform_data(&mut st, n * p, &fmt)?)?;
            matmul_emulated(&a, &b, &fmt, &cfg).map(Wrapped)
        })?;
        s.outcomes.into_iter().map(|w| w.0).collect()
    };
    for (i, (_, run)) in runs.iter().enumerate() {
        t.push(kernel_row(i, run));
    }
    coverage_summary(&mut t);
    if let Some(path) = &inputs.write_result {
        write_matrix(path, &runs.last().unwrap().0)?;
    }
    Ok(t)
}

/// Diagonally dominant tridiagonal system with U[-1,1] off-diagonals.
fn random_tridiagonal(st: &mut Stream, n: usize, fmt: &FloatFormat) -> Res<(TriDiagonal, Vec<f64>)> {
    let sub = uniform_data(st, n - 1, fmt)?;
    let sup = uniform_data(st, n - 1, fmt)?;
    let diag = (0..n)
        .map(|_| {
            let s = if st.next_unit() < 0.5 { -1.0 } else { 1.0 };
            fmt.round(s * (2.0 + st.next_unit()))
        })
        .collect::<Res<Vec<f64>>>()?;
    let b = uniform_data(st, n, fmt)?;
    Ok((TriDiagonal::new(sub, diag, sup)?, b))
}

fn thomas(g: &Global, fmt: FloatFormat, n: usize, trials: usize, q_target: f64, inputs: ThomasInputs) -> Res<Table> {
    let cfg = bound_config(g, q_target)?;
    let fmt = data_format(fmt, g);
    let mut t = Table::new(
        "thomas",
        &[
            "trial", "measured_bwd", "measured_fwd", "fwd_abs", "c_ls_abs", "condition", "excluded_rows", "dbea", "mmibea",
            "vibea", "vibea_covers",
        ],
    );
    let outcomes = if let (Some(ps), Some(pr)) = (&inputs.system, &inputs.rhs) {
        let s = read_matrix(ps)?;
        if s.cols() != 3 || s.rows() < 1 {
            return Err(Error::ShapeMismatch(format!("system must be n x 3, got {}x{}", s.rows(), s.cols())));
        }
        let k = s.rows();
        let tri = TriDiagonal::new(s.column(0)[1..].to_vec(), s.column(1).to_vec(), s.column(2)[..k - 1].to_vec())?.round_to(&fmt)?;
        let b = fmt.round_slice(&read_vector(pr)?)?;
        config_of(&mut t, g, &[("fmt", fmt.to_string()), ("system", ps.display().to_string()), ("rhs", pr.display().to_string())]);
        vec![thomas_solve(&tri, &b, &fmt, &cfg)?]
    } else {
        check_positive("n", n)?;
        check_positive("trials", trials)?;
        config_of(
            &mut t,
            g,
            &[("fmt", fmt.to_string()), ("n", n.to_string()), ("trials", trials.to_string()), ("q_target", real(q_target))],
        );
        let plan = TrialPlan::new(trials, g.seed)?;
        stats::run_trials(&plan, |i| {
            let mut st = Stream::named(g.seed, "data", i as u64);
            let (tri, b) = random_tridiagonal(&mut st, n, &fmt)?;
            thomas_solve(&tri, &b, &fmt, &cfg).map(Solved)
        })
        .map(|s| s.outcomes.into_iter().map(|w| w.0).collect())?
    };
    for (i, o) in outcomes.iter().enumerate() {
        let r = &o.run;
        let mut row: Vec<Cell> = vec![
            i.into(),
            r.measured_bwd.into(),
            r.measured_fwd.into(),
            o.fwd_abs.into(),
            o.c_ls_abs.into(),
            r.condition.into(),
            r.excluded_rows.into(),
        ];
        row.extend(bound_cells(r));
        row.push(r.gamma(Method::Vibea).is_some_and(|g| r.measured_bwd <= g).into());
        t.push(row);
    }
    coverage_summary(&mut t);
    if let Some(p) = &inputs.write_result {
        let x = &outcomes.last().unwrap().x_hat;
        write_matrix(p, &Matrix::from_col_major(x.len(), 1, x.clone())?)?;
    }
    Ok(t)
}

struct Solved(ThomasOutcome);

impl stats::Outcome for Solved {
    fn covered(&self) -> bool {
        let r = &self.0.run;
        r.gamma(Method::Vibea).is_some_and(|g| r.measured_bwd <= g)
    }
    fn error(&self) -> f64 {
        self.0.run.measured_bwd
    }
}

fn qoi_cells(bounds: &[QoiBound]) -> Vec<Cell> {
    [Method::Dbea, Method::Mmibea, Method::Vibea]
        .into_iter()
        .map(|m| QoiBound::find(bounds, m).and_then(|b| b.bound).into())
        .collect()
}

fn bvp_budget(g: &Global, fmt: FloatFormat, ms: &[usize], theta1: f64, theta2: f64, q_target: f64) -> Res<Table> {
    let cfg = bound_config(g, q_target)?;
    let mut t = Table::new(
        "bvp",
        &[
            "M", "theta1", "theta2", "p_hat", "p_tilde", "p_exact", "measured_rounding", "measured_total", "disc_lo", "disc_hi",
            "disc_width", "dbea", "mmibea", "vibea", "confidence",
        ],
    );
    config_of(
        &mut t,
        g,
        &[("fmt", fmt.to_string()), ("M", list(ms)), ("theta1", real(theta1)), ("theta2", real(theta2)), ("q_target", real(q_target))],
    );
    for &m in ms {
        let p = BvpParams::new(theta1, theta2, m)?;
        let b = bvp::budget(&p, &fmt, &cfg)?;
        let r = bvp::run(&p, &fmt, &cfg)?;
        let mut row: Vec<Cell> = vec![
            m.into(),
            theta1.into(),
            theta2.into(),
            r.p_hat.into(),
            r.p_tilde.into(),
            r.p_exact.into(),
            b.measured_rounding.into(),
            b.measured_total.into(),
            b.discretization_interval.0.into(),
            b.discretization_interval.1.into(),
            b.discretization_width.into(),
        ];
        row.extend(qoi_cells(&b.rounding_bounds));
        row.push(QoiBound::find(&b.rounding_bounds, Method::Vibea).map(|b| b.confidence).into());
        t.push(row);
    }
    Ok(t)
}

fn bvp_mc(g: &Global, fmt: FloatFormat, ms: &[usize], samples: usize, reference: usize) -> Res<Table> {
    check_positive("mc-samples", samples)?;
    check_positive("reference-samples", reference)?;
    let mut t = Table::new(
        "bvp-mc",
        &["M", "samples", "used", "skipped", "q_hat", "q_ref", "abs_err_vs_reference", "q_large", "abs_err_total", "std_error"],
    );
    config_of(
        &mut t,
        g,
        &[("fmt", fmt.to_string()), ("M", list(ms)), ("mc_samples", samples.to_string()), ("reference_samples", reference.to_string())],
    );
    for &m in ms {
        if m < 2 {
            return Err(invalid("--M entries must be at least 2"));
        }
        let r = bvp::monte_carlo_q(m, samples, &fmt, g.seed, reference)?;
        t.push(vec![
            m.into(),
            samples.into(),
            r.used.into(),
            r.skipped.into(),
            r.q_hat.into(),
            r.q_ref.into(),
            r.abs_err_vs_reference.into(),
            r.q_large.into(),
            r.abs_err_total.into(),
            r.std_error.into(),
        ]);
    }
    Ok(t)
}

fn model_check(g: &Global, fmt: FloatFormat, n: usize, trials: usize, slack_v: f64, edf_out: Option<&Path>) -> Res<Table> {
    check_positive("n", n)?;
    check_positive("trials", trials)?;
    if !(0.0..1.0).contains(&slack_v) {
        return Err(invalid(format!("--slack must lie in [0, 1), got {slack_v}")));
    }
    let fmt = data_format(fmt, g);
    let cfg = BoundConfig {
        c_bound: g.c_bound,
        ..BoundConfig::default()
    };
    let plan = TrialPlan::new(trials, g.seed)?;
    let c = edf_model_check(&fmt, n, &plan, &cfg, slack_v)?;
    let mut t = Table::new("edf-model-check", &["fmt", "n", "trials", "max_excess", "slack", "passed"]);
    config_of(
        &mut t,
        g,
        &[("fmt", fmt.to_string()), ("n", n.to_string()), ("trials", trials.to_string()), ("slack", real(slack_v))],
    );
    t.push(vec![fmt.to_string().into(), n.into(), trials.into(), c.max_excess.into(), slack_v.into(), c.passed().into()]);
    if let Some(p) = edf_out {
        write_edfs(p, &[("measured", &c.true_errors), ("model", &c.model_errors)])?;
    }
    Ok(t)
}
