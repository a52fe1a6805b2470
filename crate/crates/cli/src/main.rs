use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use bounce_core::compensation::{
    compensated_pulses, matching_cost, max_mismatch, optimize_params, CompensationMode, TunableParam, Uncertain,
};
use bounce_core::config::{load_config, Config};
use bounce_core::fields::{dephasing_integral, integrated_output_power, solve_fields_fourier, solve_fields_ode};
use bounce_core::harness::{emit_tables, initial_state, run_full, run_point, target_parity, write_table};
use bounce_core::master_eq::{dephasing_sweep, fit_eta_and_scale, CoherencePoint, DensityMatrix, COHERENCE_LABELS};
use bounce_core::measures::{werner, EntanglementReport, Parity};
use bounce_core::tomography::{bootstrap_errors, reconstruct, simulate_tomography, ResidualExcitation, TomographySettings};
use bounce_core::Complex;

/// Simulator for measurement-based remote entanglement of two qubits
/// read out through cascaded resonators.
#[derive(Parser, Debug)]
#[command(name = "bounce-sim", version)]
struct Cli {
    /// TOML configuration; built-in device parameters when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory for tables (overrides the configuration).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the classical resonator fields for one pulse.
    Fields(FieldsArgs),
    /// Synthesize a compensation pulse, optionally tuning the model first.
    Compensate(CompensateArgs),
    /// Unconditioned master-equation sweep over drive amplitude.
    MeSweep(MeSweepArgs),
    /// Stochastic trajectories, classification and post-selection.
    SmeRun(SmeRunArgs),
    /// Simulate and reconstruct state tomography.
    Tomo(TomoArgs),
    /// Entanglement measures of a density matrix.
    Measures(MeasuresArgs),
    /// Full sweep and all tables.
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    None,
    Odd,
    Even,
}

impl From<ModeArg> for CompensationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::None => CompensationMode::None,
            ModeArg::Odd => CompensationMode::Odd,
            ModeArg::Even => CompensationMode::Even,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Solver {
    Fourier,
    Ode,
}

#[derive(Args, Debug)]
struct FieldsArgs {
    /// Drive amplitude; the configured one when omitted.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "fourier")]
    solver: Solver,
}

#[derive(Args, Debug)]
struct CompensateArgs {
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, value_enum, default_value = "odd")]
    mode: ModeArg,
    /// Offsets applied to the model before tuning, e.g. `phi=0.3`.
    #[arg(long = "perturb", value_name = "NAME=VALUE")]
    perturb: Vec<String>,
    /// Parameters to tune, e.g. `phi,eta_l`.
    #[arg(long, value_delimiter = ',')]
    tune: Vec<String>,
    /// Evaluation budget of the tune-up.
    #[arg(long, default_value_t = 200)]
    budget: usize,
}

#[derive(Args, Debug)]
struct MeSweepArgs {
    #[arg(long, value_enum, default_value = "odd")]
    mode: ModeArg,
    /// Amplitudes; the configured sweep when omitted.
    #[arg(long, value_delimiter = ',')]
    amplitudes: Vec<f64>,
    /// Fit eta_l and amp_scale to a coherence table in `me-sweep` format.
    #[arg(long, value_name = "PATH")]
    fit: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SmeRunArgs {
    /// Single amplitude; the configured sweep when omitted.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long, value_enum, default_value = "odd")]
    mode: ModeArg,
    #[arg(long = "n-trajectories")]
    n_trajectories: Option<usize>,
    /// Fractions kept; the headline fraction when omitted.
    #[arg(long = "fraction-kept", value_delimiter = ',')]
    fractions: Vec<f64>,
}

#[derive(Args, Debug)]
struct StateArg {
    /// File with 16 reals: populations, then Re/Im of the coherences
    /// 00_01, 00_10, 00_11, 01_10, 01_11, 10_11 as in the tables.
    #[arg(long, value_name = "PATH", conflicts_with = "state")]
    rho: Option<PathBuf>,
    /// Named state: bell-odd, bell-even, plus-plus, mixed, werner:P,
    /// optimum (conditioned state at the configured amplitude).
    #[arg(long, default_value = "bell-odd")]
    state: String,
}

#[derive(Args, Debug)]
struct TomoArgs {
    #[command(flatten)]
    input: StateArg,
    /// Shots per rotation; exact expectation values when omitted.
    #[arg(long)]
    shots: Option<u64>,
    /// Residual excitation of the calibration states, `q1,q2`.
    #[arg(long, value_delimiter = ',')]
    residual: Vec<f64>,
    /// Correct the calibration for the residual excitation.
    #[arg(long)]
    correct: bool,
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, value_enum, default_value = "odd")]
    parity: ParityArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParityArg {
    Odd,
    Even,
}

impl From<ParityArg> for Parity {
    fn from(p: ParityArg) -> Self {
        match p {
            ParityArg::Odd => Parity::Odd,
            ParityArg::Even => Parity::Even,
        }
    }
}

#[derive(Args, Debug)]
struct MeasuresArgs {
    #[command(flatten)]
    input: StateArg,
    #[arg(long, value_enum, default_value = "odd")]
    parity: ParityArg,
    #[arg(long = "fraction-kept", default_value_t = 1.0)]
    fraction: f64,
    /// Repetition rate in Hz; the configured one when omitted.
    #[arg(long = "rep-rate")]
    rep_rate: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::device_defaults(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.plan.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    match cli.command {
        Command::Fields(a) => fields(&cfg, a),
        Command::Compensate(a) => compensate(&cfg, a),
        Command::MeSweep(a) => me_sweep(&cfg, a),
        Command::SmeRun(a) => sme_run(&cfg, a),
        Command::Tomo(a) => tomo(&cfg, a),
        Command::Measures(a) => measures(&cfg, a),
        Command::Full => full(&cfg),
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn fields(cfg: &Config, a: FieldsArgs) -> Result<()> {
    let amp = a.amplitude.unwrap_or(cfg.doc.protocol.amplitude);
    let strong = cfg.protocol.strong_pulses(amp, cfg.params.amp_scale)?;
    let pulses = compensated_pulses(&strong, &cfg.params, a.mode.into())?;
    let sol = match a.solver {
        Solver::Fourier => solve_fields_fourier(&pulses, &cfg.params)?,
        Solver::Ode => solve_fields_ode(&pulses, &cfg.params)?,
    };
    let power = integrated_output_power(&sol);
    let gamma1 = dephasing_integral(&sol.alpha[0], &sol.alpha[1], cfg.params.chip1.chi)?;
    println!("amplitude {amp} peak |y| {:.6e} sqrt(photons/s)", sol.peak());
    println!("max photons chip1 {:.4} chip2 {:.4}", power.max_photons_chip1, power.max_photons_chip2);
    println!("integrated output photons per state {:?}", power.per_state);
    println!("chip-1 dephasing integral {gamma1:.6}");
    let mut header = strings(&["t_s"]);
    for s in ["00", "01", "10", "11"] {
        header.push(format!("re_y{s}"));
        header.push(format!("im_y{s}"));
    }
    for s in ["0", "1"] {
        header.push(format!("re_alpha{s}"));
        header.push(format!("im_alpha{s}"));
    }
    let rows: Vec<Vec<f64>> = (0..sol.grid.n_samples)
        .map(|k| {
            let mut row = vec![sol.grid.time(k)];
            for s in 0..4 {
                let y = sol.y_state(s).samples[k];
                row.extend([y.re, y.im]);
            }
            for b in 0..2 {
                let al = sol.alpha[b].samples[k];
                row.extend([al.re, al.im]);
            }
            row
        })
        .collect();
    let comment = format!("output fields in sqrt(photons/s), intracavity amplitudes in sqrt(photons); mode {}", CompensationMode::from(a.mode).name());
    announce(&write_table(&cfg.output_dir, "fields.csv", &comment, &header, &rows)?);
    Ok(())
}

fn parse_perturbation(s: &str) -> Result<(TunableParam, f64)> {
    let Some((name, value)) = s.split_once('=') else {
        bail!("perturbation `{s}` is not NAME=VALUE");
    };
    Ok((name.trim().parse()?, value.trim().parse().with_context(|| format!("value in `{s}`"))?))
}

fn compensate(cfg: &Config, a: CompensateArgs) -> Result<()> {
    let mode: CompensationMode = a.mode.into();
    let Some(pair) = mode.pair()? else {
        bail!("compensate needs --mode odd or even");
    };
    let amp = a.amplitude.unwrap_or(cfg.doc.protocol.amplitude);
    let strong = cfg.protocol.strong_pulses(amp, cfg.params.amp_scale)?;
    let experiment = cfg.params;
    let mut model = cfg.params;
    for p in &a.perturb {
        let (param, offset) = parse_perturbation(p)?;
        let shifted = param.get(&model) + offset;
        param.set(&mut model, shifted);
    }
    let report = |label: &str, model: &bounce_core::SystemParams| -> Result<()> {
        let pulses = compensated_pulses(&strong, model, mode)?;
        let sol = solve_fields_fourier(&pulses, &experiment)?;
        println!(
            "{label}: matching cost {:.6e}, max mismatch {:.6e} of peak",
            matching_cost(&sol, pair),
            max_mismatch(&sol, pair) / sol.peak()
        );
        Ok(())
    };
    report("model", &model)?;
    if !a.tune.is_empty() {
        let uncertain = a
            .tune
            .iter()
            .map(|n| Ok(Uncertain::around(n.parse::<TunableParam>()?, &model)))
            .collect::<Result<Vec<_>>>()?;
        let tuned = optimize_params(&model, &uncertain, &experiment, &strong, pair, a.budget, None)?;
        println!("tune-up: {} evaluations, converged {}", tuned.evaluations, tuned.converged);
        for u in &uncertain {
            println!("  {:?}: {:.9e} (experiment {:.9e})", u.param, u.param.get(&tuned.params), u.param.get(&experiment));
        }
        model = tuned.params;
        report("tuned", &model)?;
    }
    let pulses = compensated_pulses(&strong, &model, mode)?;
    let header = strings(&["t_s", "re_eps_s", "im_eps_s", "re_eps_w", "im_eps_w"]);
    let rows: Vec<Vec<f64>> = (0..pulses.eps_s.samples.len())
        .map(|k| {
            let (s, w) = (pulses.eps_s.samples[k], pulses.eps_w.samples[k]);
            vec![pulses.grid().time(k), s.re, s.im, w.re, w.im]
        })
        .collect();
    let comment = format!("drives in sqrt(photons/s); {} compensation at amplitude {amp}", mode.name());
    announce(&write_table(&cfg.output_dir, "compensation.csv", &comment, &header, &rows)?);
    Ok(())
}

fn coherence_header() -> Vec<String> {
    let mut h = strings(&["amplitude", "power"]);
    for l in COHERENCE_LABELS {
        h.push(format!("re_{l}"));
        h.push(format!("im_{l}"));
    }
    h.extend(strings(&["p00", "p01", "p10", "p11"]));
    h
}

fn read_coherence_table(path: &Path) -> Result<Vec<CoherencePoint>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let v: Vec<f64> = rec.iter().map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?;
        if v.len() < 14 {
            bail!("coherence table rows need amplitude, power and 12 coherence columns");
        }
        let coherences = std::array::from_fn(|i| Complex::new(v[2 + 2 * i], v[3 + 2 * i]));
        out.push(CoherencePoint { amplitude: v[0], coherences });
    }
    Ok(out)
}

fn me_sweep(cfg: &Config, a: MeSweepArgs) -> Result<()> {
    let mode: CompensationMode = a.mode.into();
    let amps = if a.amplitudes.is_empty() { cfg.plan.amplitudes.clone() } else { a.amplitudes };
    let rho0 = initial_state(cfg.plan.residual_excitation);
    let sweep = dephasing_sweep(&amps, &cfg.params, &cfg.protocol, mode, &rho0)?;
    let rows: Vec<Vec<f64>> = sweep
        .iter()
        .map(|pt| {
            let mut row = vec![pt.amplitude, pt.power];
            for c in pt.rho_final.coherences() {
                row.extend([c.re, c.im]);
            }
            row.extend(pt.rho_final.populations());
            row
        })
        .collect();
    for pt in &sweep {
        println!("amplitude {:.4}: |rho_01,10| = {:.6}", pt.amplitude, pt.rho_final.get(1, 2).norm());
    }
    let comment = format!("unconditioned final state, {} compensation; power = amplitude^2", mode.name());
    announce(&write_table(&cfg.output_dir, "me_sweep.csv", &comment, &coherence_header(), &rows)?);
    if let Some(path) = a.fit {
        let data = read_coherence_table(&path)?;
        let fit = fit_eta_and_scale(&data, &cfg.params, &cfg.protocol, mode, &rho0)?;
        println!(
            "fit: eta_l {:.6} amp_scale {:.6e} rms residual {:.3e} converged {}",
            fit.eta_l, fit.amp_scale, fit.rms_residual, fit.converged
        );
    }
    Ok(())
}

fn sme_run(cfg: &Config, a: SmeRunArgs) -> Result<()> {
    let mode: CompensationMode = a.mode.into();
    let mut plan = cfg.plan.clone();
    if let Some(n) = a.n_trajectories {
        plan.n_trajectories = n;
    }
    let fractions = if a.fractions.is_empty() { vec![plan.headline_fraction] } else { a.fractions };
    let amps = match a.amplitude {
        Some(x) => vec![x],
        None => plan.amplitudes.clone(),
    };
    plan.amplitudes = amps.clone();
    plan.fractions = fractions.clone();
    plan.validate(&cfg.params)?;
    let mut header = strings(&["amplitude", "fraction", "classifier_fidelity", "concurrence", "bell_fidelity", "log_negativity"]);
    header.extend(["p00", "p01", "p10", "p11"].map(String::from));
    for l in COHERENCE_LABELS {
        header.push(format!("re_{l}"));
        header.push(format!("im_{l}"));
    }
    let mut rows = Vec::new();
    for (i, amp) in amps.iter().enumerate() {
        let seed = bounce_core::harness::point_seed(plan.seed, 0, i);
        let pt = run_point(*amp, mode, &cfg.params, &plan, &fractions, seed)?;
        for c in &pt.conditioned {
            println!(
                "amplitude {amp:.4} kept {:.2}: C {:.4} F_B {:.4} classifier {:.4}",
                c.fraction, c.report.concurrence, c.report.bell_fidelity, pt.classifier_fidelity
            );
            let mut row = vec![*amp, c.fraction, pt.classifier_fidelity, c.report.concurrence, c.report.bell_fidelity, c.report.log_negativity];
            row.extend(c.rho.to_reals());
            rows.push(row);
        }
    }
    let comment = format!("conditioned states, {} compensation, {} trajectories per amplitude", mode.name(), plan.n_trajectories);
    announce(&write_table(&cfg.output_dir, "sme_run.csv", &comment, &header, &rows)?);
    Ok(())
}

fn read_rho(path: &Path) -> Result<DensityMatrix<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("density matrix file must hold 16 numbers")?;
    if v.len() != 16 {
        bail!("density matrix file holds {} numbers, expected 16", v.len());
    }
    Ok(DensityMatrix::from_reals(&v)?)
}

fn named_state(cfg: &Config, name: &str) -> Result<DensityMatrix<f64>> {
    Ok(match name {
        "bell-odd" => DensityMatrix::bell(true, 0.0),
        "bell-even" => DensityMatrix::bell(false, 0.0),
        "plus-plus" => DensityMatrix::plus_plus(),
        "mixed" => DensityMatrix::maximally_mixed(),
        "optimum" => {
            let amp = cfg.doc.protocol.amplitude;
            let pt = run_point(amp, CompensationMode::Odd, &cfg.params, &cfg.plan, &[cfg.plan.headline_fraction], cfg.plan.seed)?;
            pt.conditioned[0].rho.clone()
        }
        other => match other.strip_prefix("werner:") {
            Some(p) => werner(p.parse::<f64>().with_context(|| format!("werner weight in `{other}`"))?),
            None => bail!("unknown state `{other}`"),
        },
    })
}

fn input_state(cfg: &Config, s: &StateArg) -> Result<DensityMatrix<f64>> {
    match &s.rho {
        Some(path) => read_rho(path),
        None => named_state(cfg, &s.state),
    }
}

fn print_report(label: &str, r: &EntanglementReport<f64>) {
    println!(
        "{label}: C {:.6} F_B {:.6} (phase {:.4} rad) E_N {:.6} ebit rate {:.3} /s",
        r.concurrence, r.bell_fidelity, r.best_bell_phase, r.log_negativity, r.ebit_rate
    );
}

fn tomo(cfg: &Config, a: TomoArgs) -> Result<()> {
    let rho = input_state(cfg, &a.input)?;
    let residual = match a.residual.as_slice() {
        [] => ResidualExcitation::default(),
        [q1, q2] => ResidualExcitation::new(*q1, *q2)?,
        _ => bail!("--residual takes two values"),
    };
    let settings = TomographySettings { shots: a.shots, residual, ..Default::default() };
    let data = simulate_tomography(&rho, &settings, cfg.seed)?;
    let est = reconstruct(&data, a.correct.then_some(residual))?;
    let parity: Parity = a.parity.into();
    print_report("input", &EntanglementReport::evaluate(&rho, parity, 1.0, cfg.plan.rep_rate)?);
    print_report("reconstructed", &EntanglementReport::evaluate(&est, parity, 1.0, cfg.plan.rep_rate)?);
    println!("trace distance {:.6e}", est.trace_distance(&rho)?);
    if a.bootstrap > 0 {
        let err = bootstrap_errors(&data, a.bootstrap, cfg.seed, a.correct.then_some(residual), parity)?;
        println!(
            "bootstrap ({} resamples): sigma_C {:.4e} sigma_F_B {:.4e} sigma_E_N {:.4e}",
            err.n_resamples, err.concurrence, err.bell_fidelity, err.log_negativity
        );
    }
    let mut header = strings(&["which"]);
    header.extend(["p00", "p01", "p10", "p11"].map(String::from));
    for l in COHERENCE_LABELS {
        header.push(format!("re_{l}"));
        header.push(format!("im_{l}"));
    }
    let rows = vec![
        std::iter::once(0.0).chain(rho.to_reals()).collect(),
        std::iter::once(1.0).chain(est.to_reals()).collect(),
    ];
    announce(&write_table(&cfg.output_dir, "tomo.csv", "which 0 = input, 1 = reconstruction", &header, &rows)?);
    Ok(())
}

fn measures(cfg: &Config, a: MeasuresArgs) -> Result<()> {
    let rho = input_state(cfg, &a.input)?;
    let rate = a.rep_rate.unwrap_or(cfg.plan.rep_rate);
    let r = EntanglementReport::evaluate(&rho, a.parity.into(), a.fraction, rate)?;
    print_report("state", &r);
    Ok(())
}

fn full(cfg: &Config) -> Result<()> {
    let bundle = run_full(&cfg.plan, &cfg.params)?;
    for &mode in &cfg.plan.modes {
        if let Some(best) = bundle.best_point(mode, cfg.plan.headline_fraction) {
            if let Some(c) = best.at_fraction(cfg.plan.headline_fraction) {
                println!(
                    "{} compensation: best amplitude {:.4}, C {:.4}, F_B {:.4} ({:?} parity), classifier {:.4}",
                    mode.name(),
                    best.amplitude,
                    c.report.concurrence,
                    c.report.bell_fidelity,
                    target_parity(mode),
                    best.classifier_fidelity
                );
            }
        }
    }
    for path in emit_tables(&bundle, &cfg.plan, &cfg.output_dir)? {
        announce(&path);
    }
    Ok(())
}
