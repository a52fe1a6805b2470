//! End-to-end orchestration: pulses, fields, unconditioned and conditioned
//! evolution, classification, post-selection, measures and output tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};


use crate::classifier::{conditioned_state, postselect, train_classifier, Classifier, Labeled};
use crate::compensation::CompensationMode;
use crate::error::{Error, Result};
use crate::fields::{integrated_output_power, FieldSolution};
use crate::master_eq::{dephasing_sweep, evolve_me, polaron_coefficients, protocol_fields, DensityMatrix, COHERENCE_LABELS};
use crate::measures::{EntanglementReport, Parity, DEFAULT_REP_RATE};
use crate::num::Complex;
use crate::params::{Protocol, SystemParams};
use crate::tomography::{reconstruct, simulate_tomography, ResidualExcitation, TomographySettings};
use crate::sme::{ensemble_mean, integration_weights, readout_angle, required_substeps, run_ensemble, SmeOptions, SmePropagator};

/// `|++>` prepared from qubits that were excited with probability `q1`,
/// `q2`; an excited qubit ends in `|->` instead of `|+>`.
pub fn initial_state(exc: ResidualExcitation) -> DensityMatrix<f64> {
    let single = |p: f64| [[0.5, 0.5 - p], [0.5 - p, 0.5]];
    let (a, b) = (single(exc.q1), single(exc.q2));
    let m = crate::linalg::ComplexMatrix::from_fn(4, 4, |r, c| Complex::new(a[r >> 1][c >> 1] * b[r & 1][c & 1], 0.0));
    DensityMatrix::new(m).expect("product of valid qubit states")
}

/// Simulated tomography of the conditioned states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomographyStage {
    /// Readout model and shot count; the residual excitation is taken from
    /// the plan.
    pub settings: TomographySettings,
    /// Reconstruct with calibration states corrected for the known
    /// residual excitation.
    pub correct: bool,
}

/// Everything a full run needs besides the physical parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub protocol: Protocol<f64>,
    /// Dimensionless drive amplitudes (multiplied by `amp_scale`).
    pub amplitudes: Vec<f64>,
    /// Compensation modes to sweep; odd and even give the figure-3 and
    /// figure-4 analogs.
    pub modes: Vec<CompensationMode>,
    /// Minimum SME substeps per grid interval; raised automatically when the
    /// measurement is too strong for the step.
    pub substeps_floor: usize,
    /// Fraction kept for the amplitude sweep.
    pub headline_fraction: f64,
    /// Fractions evaluated at the best amplitude.
    pub fractions: Vec<f64>,
    pub n_trajectories: usize,
    /// Calibration trajectories per computational basis state.
    pub n_calibration: usize,
    /// Excitation left after heralding; mixes the prepared state and the
    /// tomography calibration states alike.
    pub residual_excitation: ResidualExcitation,
    /// Tomography of each conditioned state; skipped when absent.
    pub tomography: Option<TomographyStage>,
    /// Readout angle; chosen from the fields when absent.
    pub theta: Option<f64>,
    pub rep_rate: f64,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            protocol: Protocol::standard(),
            amplitudes: (0..=10).map(|k| 0.4 * k as f64).collect(),
            modes: vec![CompensationMode::Odd, CompensationMode::Even],
            headline_fraction: 0.25,
            fractions: (1..=20).map(|k| 0.05 * k as f64).collect(),
            n_trajectories: 4000,
            n_calibration: 1000,
            residual_excitation: ResidualExcitation::default(),
            tomography: None,
            theta: None,
            rep_rate: DEFAULT_REP_RATE,
            seed: 1,
            substeps_floor: 1,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self, p: &SystemParams<f64>) -> Result<()> {
        self.protocol.validate(p)?;
        self.residual_excitation.validate()?;
        if self.amplitudes.is_empty() {
            return Err(Error::InvalidInput("no amplitudes to sweep".into()));
        }
        if self.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidInput("amplitudes must be finite and >= 0".into()));
        }
        for f in self.fractions.iter().chain(std::iter::once(&self.headline_fraction)) {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::InvalidInput(format!("fraction kept {f} outside (0, 1]")));
            }
        }
        for m in &self.modes {
            m.pair()?;
        }
        if self.n_trajectories == 0 || self.n_calibration == 0 {
            return Err(Error::InvalidInput("trajectory counts must be > 0".into()));
        }
        Ok(())
    }
}

/// Target parity of the post-selection for a compensation mode.
pub fn target_parity(mode: CompensationMode) -> Parity {
    match mode {
        CompensationMode::Even => Parity::Even,
        _ => Parity::Odd,
    }
}

/// Conditioned state and measures at one kept fraction.
#[derive(Clone, Debug)]
pub struct Conditioned {
    pub fraction: f64,
    pub rho: DensityMatrix<f64>,
    pub report: EntanglementReport<f64>,
    /// Measures of the tomographic reconstruction, if requested.
    pub tomography: Option<EntanglementReport<f64>>,
}

/// Everything computed at one amplitude and compensation mode.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub amplitude: f64,
    pub mode: CompensationMode,
    pub theta: f64,
    pub unconditioned: DensityMatrix<f64>,
    pub sme_mean: DensityMatrix<f64>,
    pub classifier_fidelity: f64,
    pub max_photons: [f64; 2],
    pub conditioned: Vec<Conditioned>,
}

impl PointResult {
    pub fn at_fraction(&self, fraction: f64) -> Option<&Conditioned> {
        self.conditioned.iter().find(|c| (c.fraction - fraction).abs() < 1e-12)
    }
}

/// Runs the conditioned pipeline at one amplitude, keeping each of `fractions`.
pub fn run_point(
    amplitude: f64,
    mode: CompensationMode,
    p: &SystemParams<f64>,
    plan: &ExperimentPlan,
    fractions: &[f64],
    seed: u64,
) -> Result<PointResult> {
    let sol = protocol_fields(amplitude, p, p, &plan.protocol, mode)?;
    let parity = target_parity(mode);
    let theta = plan.theta.unwrap_or_else(|| readout_angle(&sol, parity));
    let mut q = p.clone();
    q.theta = theta;
    let rho0 = initial_state(plan.residual_excitation);
    let unconditioned = evolve_me(&rho0, &polaron_coefficients(&sol, &q), &q)?.final_state().clone();
    let substeps = plan.substeps_floor.max(required_substeps(&sol, &q));
    let options = SmeOptions { substeps, ..Default::default() };
    let prop = SmePropagator::new(&sol, &q, options)?;
    let weights = integration_weights(&sol, theta, parity);
    let classifier = calibrate_classifier(&prop, &weights, plan.n_calibration, seed)?;
    let trajectories = run_ensemble(&prop, &rho0, plan.n_trajectories, seed, Some(&weights))?;
    let sme_mean = ensemble_mean(&trajectories)?;
    let scores: Vec<f64> = trajectories
        .iter()
        .map(|t| match parity {
            Parity::Odd => classifier.prob_odd(t.outcome),
            Parity::Even => classifier.prob_even(t.outcome),
        })
        .collect();
    let finals: Vec<DensityMatrix<f64>> = trajectories.into_iter().map(|t| t.rho_final).collect();
    let conditioned = fractions
        .iter()
        .map(|&fraction| {
            let kept = postselect(&scores, fraction)?;
            let rho = conditioned_state(&finals, &kept)?;
            let report = EntanglementReport::evaluate(&rho, parity, fraction, plan.rep_rate)?;
            let tomography = match &plan.tomography {
                None => None,
                Some(stage) => {
                    let settings = TomographySettings { residual: plan.residual_excitation, ..stage.settings };
                    let data = simulate_tomography(&rho, &settings, seed)?;
                    let est = reconstruct(&data, stage.correct.then_some(plan.residual_excitation))?;
                    Some(EntanglementReport::evaluate(&est, parity, fraction, plan.rep_rate)?)
                }
            };
            Ok(Conditioned { fraction, rho, report, tomography })
        })
        .collect::<Result<Vec<_>>>()?;
    let power = integrated_output_power(&sol);
    Ok(PointResult {
        amplitude,
        mode,
        theta,
        unconditioned,
        sme_mean,
        classifier_fidelity: classifier.holdout_fidelity,
        max_photons: [power.max_photons_chip1, power.max_photons_chip2],
        conditioned,
    })
}

/// Trains the parity classifier on trajectories started in each
/// computational basis state (the calibration segments).
pub fn calibrate_classifier(
    prop: &SmePropagator<f64>,
    weights: &[Complex<f64>],
    n_per_state: usize,
    seed: u64,
) -> Result<Classifier> {
    let mut points = Vec::with_capacity(4 * n_per_state);
    for s in 0..4 {
        let cal_seed = seed ^ (0xC0FF_EE00_0000_0000u64.wrapping_add(s as u64 + 1));
        let traj = run_ensemble(prop, &DensityMatrix::basis(s), n_per_state, cal_seed, Some(weights))?;
        points.extend(traj.iter().map(|t| Labeled { outcome: t.outcome, odd: s == 1 || s == 2 }));
    }
    train_classifier(&points)
}

/// Seed for sweep point `index` of mode `mode_index`.
pub fn point_seed(master: u64, mode_index: usize, index: usize) -> u64 {
    let mut z = master ^ ((mode_index as u64) << 32 | index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Unconditioned sweep row.
#[derive(Clone, Debug)]
pub struct UnconditionedRow {
    pub mode: CompensationMode,
    pub amplitude: f64,
    pub power: f64,
    pub rho: DensityMatrix<f64>,
}

/// Result of [`run_full`].
#[derive(Clone, Debug, Default)]
pub struct ResultBundle {
    pub unconditioned: Vec<UnconditionedRow>,
    pub points: Vec<PointResult>,
    /// Per mode: the fraction sweep at the amplitude with the highest
    /// concurrence at the headline fraction.
    pub fraction_sweeps: Vec<PointResult>,
}

impl ResultBundle {
    /// Point with the highest headline concurrence for `mode`.
    pub fn best_point(&self, mode: CompensationMode, headline: f64) -> Option<&PointResult> {
        self.points
            .iter()
            .filter(|p| p.mode == mode)
            .max_by(|a, b| {
                let c = |p: &PointResult| p.at_fraction(headline).map_or(f64::NEG_INFINITY, |c| c.report.concurrence);
                c(a).total_cmp(&c(b))
            })
    }
}

/// Runs the full sweep.
pub fn run_full(plan: &ExperimentPlan, p: &SystemParams<f64>) -> Result<ResultBundle> {
    p.validate()?;
    plan.validate(p)?;
    let rho0 = initial_state(plan.residual_excitation);
    let mut bundle = ResultBundle::default();
    for &mode in &plan.modes {
        for pt in dephasing_sweep(&plan.amplitudes, p, &plan.protocol, mode, &rho0)? {
            bundle.unconditioned.push(UnconditionedRow { mode, amplitude: pt.amplitude, power: pt.power, rho: pt.rho_final });
        }
    }
    let jobs: Vec<(usize, usize, CompensationMode, f64)> = plan
        .modes
        .iter()
        .enumerate()
        .flat_map(|(mi, &m)| plan.amplitudes.iter().enumerate().map(move |(ai, &a)| (mi, ai, m, a)))
        .collect();
    // Points run one after another; each parallelizes over trajectories.
    for (mi, ai, mode, amp) in jobs {
        let seed = point_seed(plan.seed, mi, ai);
        bundle.points.push(run_point(amp, mode, p, plan, &[plan.headline_fraction], seed)?);
    }
    for (mi, &mode) in plan.modes.iter().enumerate() {
        let best = bundle.best_point(mode, plan.headline_fraction).map(|b| b.amplitude);
        if let Some(amp) = best {
            let ai = plan.amplitudes.iter().position(|a| *a == amp).unwrap_or(0);
            let seed = point_seed(plan.seed, mi, ai);
            bundle.fraction_sweeps.push(run_point(amp, mode, p, plan, &plan.fractions, seed)?);
        }
    }
    Ok(bundle)
}

/// Fields at one amplitude for the `fields` table.
pub fn fields_at(amplitude: f64, p: &SystemParams<f64>, protocol: &Protocol<f64>, mode: CompensationMode) -> Result<FieldSolution<f64>> {
    let strong = protocol.strong_pulses(amplitude, p.amp_scale)?;
    let pulses = crate::compensation::compensated_pulses(&strong, p, mode)?;
    crate::fields::solve_fields_fourier(&pulses, p)
}

/// Writes `name` under `dir` with a `#` comment line, a header row and rows.
pub fn write_table(dir: &Path, name: &str, comment: &str, header: &[String], rows: &[Vec<f64>]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = fs::File::create(&path)?;
    writeln!(file, "# {comment}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()?;
    Ok(path)
}

/// Shortest representation that round-trips exactly.
fn format_value(v: f64) -> String {
    format!("{v:e}")
}

fn rho_header(prefix: &str) -> Vec<String> {
    let mut h: Vec<String> = (0..4).map(|s| format!("{prefix}p{s:02b}")).collect();
    for l in COHERENCE_LABELS {
        h.push(format!("{prefix}re_{l}"));
        h.push(format!("{prefix}im_{l}"));
    }
    h
}

fn mode_code(mode: CompensationMode) -> f64 {
    match mode {
        CompensationMode::None => 0.0,
        CompensationMode::Odd => 1.0,
        CompensationMode::Even => 2.0,
        CompensationMode::FullParity => 3.0,
    }
}

/// Writes the figure-analog tables; returns the paths in a fixed order.
pub fn emit_tables(bundle: &ResultBundle, plan: &ExperimentPlan, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let str_vec = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    // fig2c: unconditioned populations and coherences vs amplitude.
    let mut header = str_vec(&["mode", "amplitude", "power"]);
    header.extend(rho_header(""));
    let rows: Vec<Vec<f64>> = bundle
        .unconditioned
        .iter()
        .map(|r| {
            let mut row = vec![mode_code(r.mode), r.amplitude, r.power];
            row.extend(r.rho.to_reals());
            row
        })
        .collect();
    paths.push(write_table(
        out_dir,
        "fig2c.csv",
        "unconditioned final state; mode 0=none 1=odd 2=even; amplitude dimensionless; power = amplitude^2",
        &header,
        &rows,
    )?);

    // fig3abc: conditioned states and measures vs amplitude at the headline fraction.
    let mut header = str_vec(&[
        "mode",
        "amplitude",
        "fraction",
        "concurrence",
        "bell_fidelity",
        "bell_phase_rad",
        "log_negativity",
        "ebit_rate_per_s",
        "classifier_fidelity",
        "theta_rad",
        "tomo_concurrence",
        "tomo_bell_fidelity",
    ]);
    header.extend(rho_header("rho_"));
    let point_row = |pt: &PointResult, c: &Conditioned| {
        let r = &c.report;
        let mut row = vec![
            mode_code(pt.mode),
            pt.amplitude,
            c.fraction,
            r.concurrence,
            r.bell_fidelity,
            r.best_bell_phase,
            r.log_negativity,
            r.ebit_rate,
            pt.classifier_fidelity,
            pt.theta,
            c.tomography.map_or(f64::NAN, |t| t.concurrence),
            c.tomography.map_or(f64::NAN, |t| t.bell_fidelity),
        ];
        row.extend(c.rho.to_reals());
        row
    };
    let sweep_rows = |mode: CompensationMode| -> Vec<Vec<f64>> {
        bundle
            .points
            .iter()
            .filter(|p| p.mode == mode)
            .flat_map(|p| p.conditioned.iter().map(move |c| point_row(p, c)))
            .collect()
    };
    let comment = format!(
        "conditioned state vs amplitude, {} trajectories per point; rates in 1/s; angles in rad; tomo_* NaN when tomography is off",
        plan.n_trajectories
    );
    paths.push(write_table(out_dir, "fig3abc.csv", &comment, &header, &sweep_rows(CompensationMode::Odd))?);

    // fig3e: fraction sweep at the best odd amplitude.
    let frac_header = str_vec(&["fraction", "C", "F_B", "ebit_rate", "amplitude", "log_negativity"]);
    let frac_rows = |mode: CompensationMode| -> Vec<Vec<f64>> {
        bundle
            .fraction_sweeps
            .iter()
            .filter(|p| p.mode == mode)
            .flat_map(|p| {
                p.conditioned.iter().map(move |c| {
                    vec![c.fraction, c.report.concurrence, c.report.bell_fidelity, c.report.ebit_rate, p.amplitude, c.report.log_negativity]
                })
            })
            .collect()
    };
    let comment = format!("fraction sweep at the best odd amplitude; ebit_rate in 1/s at rep rate {} Hz", plan.rep_rate);
    paths.push(write_table(out_dir, "fig3e.csv", &comment, &frac_header, &frac_rows(CompensationMode::Odd))?);

    // fig4: even-compensation analog of fig3abc.
    paths.push(write_table(
        out_dir,
        "fig4.csv",
        "even compensation: conditioned state vs amplitude; rates in 1/s; angles in rad",
        &header,
        &sweep_rows(CompensationMode::Even),
    )?);
    Ok(paths)
}
