//! TOML configuration: device parameters, protocol timing and sweep plan.
//!
//! Rates are given as `f/2pi` in MHz (keys ending `_mhz`), times carry their
//! unit in the key name. Required tables: `chip1`, `chip2`, `link`,
//! `readout`, `decoherence`, `protocol`. Everything under `sweep` and
//! `tomography`, plus `seed`, `output_dir` and `readout.theta_rad`, is
//! optional.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compensation::CompensationMode;
use crate::error::{Error, Result};
use crate::harness::{ExperimentPlan, TomographyStage};
use crate::measures::DEFAULT_REP_RATE;
use crate::params::{ChipParams, Protocol, PulseSequence, PulseShape, SystemParams, TimeGrid};
use crate::tomography::{ReadoutModel, ResidualExcitation, TomographySettings};

const MHZ: f64 = 2.0 * PI * 1.0e6;

/// Default master seed.
pub const DEFAULT_SEED: u64 = 1;
/// Default output directory.
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipDoc {
    pub kappa_s_mhz: f64,
    pub kappa_w_mhz: f64,
    pub kappa_i_mhz: f64,
    pub chi_mhz: f64,
    pub delta_mhz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    /// Power transmission between the chips.
    pub eta_l: f64,
    pub phi_rad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutDoc {
    pub eta_m: f64,
    /// Chosen from the fields at each amplitude when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_rad: Option<f64>,
    pub amp_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceDoc {
    pub t1_q1_us: f64,
    pub t1_q2_us: f64,
    /// Rate of the `D[sigma_z]` dissipator; coherences decay at twice this.
    pub gammaphi_q1_per_us: f64,
    pub gammaphi_q2_per_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolDoc {
    pub dt_ns: f64,
    pub pulse_start_ns: f64,
    pub rise_ns: f64,
    pub plateau_ns: f64,
    /// Pulse plus ring-down.
    pub window_us: f64,
    /// Span of the grid the fields are solved on.
    pub field_span_us: f64,
    /// Dimensionless drive amplitude for single-point subcommands.
    pub amplitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    /// Any of "none", "odd", "even".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headline_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_calibration: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps_floor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rep_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_excitation_q1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_excitation_q2: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyDoc {
    /// Run tomography on conditioned states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
    /// Shots per rotation; exact expectation values when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    /// Correct the calibration for the residual excitation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// Probability of each basis state landing in bin 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin0: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin1: Option<[f64; 4]>,
}

/// The configuration document as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    /// Master seed; TOML integers limit it to `i64::MAX`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub chip1: ChipDoc,
    pub chip2: ChipDoc,
    pub link: LinkDoc,
    pub readout: ReadoutDoc,
    pub decoherence: DecoherenceDoc,
    pub protocol: ProtocolDoc,
    #[serde(default, skip_serializing_if = "is_default")]
    pub sweep: SweepDoc,
    #[serde(default, skip_serializing_if = "is_default")]
    pub tomography: TomographyDoc,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

const REQUIRED: &[(&str, &[&str])] = &[
    ("chip1", &["kappa_s_mhz", "kappa_w_mhz", "kappa_i_mhz", "chi_mhz", "delta_mhz"]),
    ("chip2", &["kappa_s_mhz", "kappa_w_mhz", "kappa_i_mhz", "chi_mhz", "delta_mhz"]),
    ("link", &["eta_l", "phi_rad"]),
    ("readout", &["eta_m", "amp_scale"]),
    ("decoherence", &["t1_q1_us", "t1_q2_us", "gammaphi_q1_per_us", "gammaphi_q2_per_us"]),
    ("protocol", &["dt_ns", "pulse_start_ns", "rise_ns", "plateau_ns", "window_us", "field_span_us", "amplitude"]),
];

impl ConfigDoc {
    /// Parses a document, reporting the first missing required key by its
    /// dotted path.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
        for (section, keys) in REQUIRED {
            let Some(sub) = table.get(*section) else {
                return Err(Error::MissingKey(format!("{section}.{}", keys[0])));
            };
            let sub = sub.as_table().ok_or_else(|| Error::Parse(format!("{section} must be a table")))?;
            if let Some(k) = keys.iter().find(|k| !sub.contains_key(**k)) {
                return Err(Error::MissingKey(format!("{section}.{k}")));
            }
        }
        toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Document for the built-in device parameters and standard protocol;
    /// matches [`SystemParams::device_defaults`] and [`Protocol::standard`].
    pub fn device_defaults() -> Self {
        let chip = |kappa_s_mhz, kappa_w_mhz, kappa_i_mhz| ChipDoc { kappa_s_mhz, kappa_w_mhz, kappa_i_mhz, chi_mhz: -0.335, delta_mhz: 0.0 };
        Self {
            seed: None,
            output_dir: None,
            chip1: chip(2.96, 0.02, 0.03),
            chip2: chip(4.43, 0.06, 0.04),
            link: LinkDoc { eta_l: 0.882, phi_rad: 0.0 },
            readout: ReadoutDoc { eta_m: 0.5, theta_rad: None, amp_scale: 1.0e4 },
            decoherence: DecoherenceDoc {
                t1_q1_us: 9.0,
                t1_q2_us: 12.0,
                gammaphi_q1_per_us: 1.0 / 60.0,
                gammaphi_q2_per_us: 1.0 / 60.0,
            },
            protocol: ProtocolDoc {
                dt_ns: 0.5,
                pulse_start_ns: 10.0,
                rise_ns: 20.0,
                plateau_ns: 260.0,
                window_us: 1.0,
                field_span_us: 1.5,
                amplitude: 0.7,
            },
            sweep: SweepDoc::default(),
            tomography: TomographyDoc::default(),
        }
    }
}

/// A loaded and validated configuration.
#[derive(Clone, Debug)]
pub struct Config {
    pub doc: ConfigDoc,
    pub params: SystemParams<f64>,
    pub protocol: Protocol<f64>,
    /// Field grid of the protocol.
    pub grid: TimeGrid<f64>,
    /// Strong-port pulse at `protocol.amplitude`, no compensation.
    pub pulses: PulseSequence<f64>,
    pub plan: ExperimentPlan,
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn chip_params(c: &ChipDoc) -> ChipParams<f64> {
    ChipParams {
        kappa_s: c.kappa_s_mhz * MHZ,
        kappa_w: c.kappa_w_mhz * MHZ,
        kappa_i: c.kappa_i_mhz * MHZ,
        chi: c.chi_mhz * MHZ,
        delta: c.delta_mhz * MHZ,
    }
}

fn rate_from_t1(t1_us: f64, name: &str) -> Result<f64> {
    if !(t1_us > 0.0) {
        return Err(Error::InvalidParameter(format!("{name} must be > 0")));
    }
    Ok(1.0e6 / t1_us)
}

impl Config {
    pub fn from_doc(doc: ConfigDoc) -> Result<Self> {
        let params = SystemParams {
            chip1: chip_params(&doc.chip1),
            chip2: chip_params(&doc.chip2),
            eta_l: doc.link.eta_l,
            phi: doc.link.phi_rad,
            eta_m: doc.readout.eta_m,
            theta: doc.readout.theta_rad.unwrap_or(0.0),
            gamma1: [rate_from_t1(doc.decoherence.t1_q1_us, "t1_q1_us")?, rate_from_t1(doc.decoherence.t1_q2_us, "t1_q2_us")?],
            gamma_phi: [doc.decoherence.gammaphi_q1_per_us * 1.0e6, doc.decoherence.gammaphi_q2_per_us * 1.0e6],
            amp_scale: doc.readout.amp_scale,
        };
        params.validate()?;
        let pr = &doc.protocol;
        let protocol = Protocol {
            dt: pr.dt_ns * 1.0e-9,
            shape: PulseShape { start: pr.pulse_start_ns * 1.0e-9, rise: pr.rise_ns * 1.0e-9, plateau: pr.plateau_ns * 1.0e-9 },
            window: pr.window_us * 1.0e-6,
            field_span: pr.field_span_us * 1.0e-6,
        };
        let grid = protocol.field_grid()?;
        grid.check_resolves(&params)?;
        protocol.validate(&params)?;
        if !(pr.amplitude >= 0.0 && pr.amplitude.is_finite()) {
            return Err(Error::InvalidParameter("protocol.amplitude must be >= 0".into()));
        }
        let pulses = protocol.strong_pulses(pr.amplitude, params.amp_scale)?;

        let sw = &doc.sweep;
        let defaults = ExperimentPlan::default();
        let modes = match &sw.modes {
            None => defaults.modes.clone(),
            Some(v) => v.iter().map(|m| m.parse::<CompensationMode>()).collect::<Result<Vec<_>>>()?,
        };
        let residual = ResidualExcitation::new(sw.residual_excitation_q1.unwrap_or(0.0), sw.residual_excitation_q2.unwrap_or(0.0))?;
        let tomo = &doc.tomography;
        let tomography = if tomo.enabled.unwrap_or(false) {
            let base = ReadoutModel::default();
            let readout = ReadoutModel { bins: [tomo.bin0.unwrap_or(base.bins[0]), tomo.bin1.unwrap_or(base.bins[1])] };
            readout.validate()?;
            Some(TomographyStage {
                settings: TomographySettings { readout, shots: tomo.shots, residual },
                correct: tomo.correct.unwrap_or(true),
            })
        } else {
            None
        };
        let seed = doc.seed.unwrap_or(DEFAULT_SEED);
        let plan = ExperimentPlan {
            protocol,
            amplitudes: sw.amplitudes.clone().unwrap_or(defaults.amplitudes),
            modes,
            headline_fraction: sw.headline_fraction.unwrap_or(defaults.headline_fraction),
            fractions: sw.fractions.clone().unwrap_or(defaults.fractions),
            n_trajectories: sw.n_trajectories.unwrap_or(defaults.n_trajectories),
            n_calibration: sw.n_calibration.unwrap_or(defaults.n_calibration),
            substeps_floor: sw.substeps_floor.unwrap_or(defaults.substeps_floor),
            residual_excitation: residual,
            tomography,
            theta: doc.readout.theta_rad,
            rep_rate: sw.rep_rate_hz.unwrap_or(DEFAULT_REP_RATE),
            seed,
        };
        plan.validate(&params)?;
        let output_dir = PathBuf::from(doc.output_dir.clone().unwrap_or_else(|| DEFAULT_OUTPUT_DIR.to_string()));
        Ok(Self { doc, params, protocol, grid, pulses, plan, seed, output_dir })
    }

    pub fn device_defaults() -> Self {
        Self::from_doc(ConfigDoc::device_defaults()).expect("built-in parameters are valid")
    }
}

/// Parses and validates a configuration document.
pub fn load_config_str(text: &str) -> Result<Config> {
    Config::from_doc(ConfigDoc::parse(text)?)
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<Config> {
    load_config_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn defaults_text() -> String {
        ConfigDoc::device_defaults().to_toml().unwrap()
    }

    #[test]
    fn device_table_values_accepted() {
        let text = defaults_text().replace("kappa_s_mhz = 2.96", "kappa_s_mhz = 2.95");
        let cfg = load_config_str(&text).unwrap();
        let kb1 = cfg.params.chip1.kappa_bar() / MHZ;
        let kb2 = cfg.params.chip2.kappa_bar() / MHZ;
        assert!((kb1 - 3.0).abs() < 1e-9 && (kb2 - 4.53).abs() < 1e-9, "{kb1} {kb2}");
        assert!((cfg.params.chip1.chi / MHZ + 0.335).abs() < 1e-12);
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
    }

    #[test]
    fn defaults_reproduce_builtin_parameters() {
        let cfg = Config::device_defaults();
        let p = SystemParams::<f64>::device_defaults();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
        assert!(close(cfg.params.chip2.kappa_s, p.chip2.kappa_s));
        assert!(close(cfg.params.gamma1[0], p.gamma1[0]));
        assert!(close(cfg.params.gamma_phi[1], p.gamma_phi[1]));
        assert_eq!(cfg.plan.protocol.window, 1.0e-6);
    }

    #[test]
    fn eta_out_of_range_rejected() {
        let text = defaults_text().replace("eta_l = 0.882", "eta_l = 1.3");
        match load_config_str(&text) {
            Err(Error::InvalidParameter(msg)) => assert!(msg.contains("eta_l outside [0,1]")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_key_reports_path() {
        let text = defaults_text().replace("kappa_s_mhz = 2.96\n", "");
        assert!(matches!(load_config_str(&text), Err(Error::MissingKey(k)) if k == "chip1.kappa_s_mhz"));
        let text = defaults_text().replace("[decoherence]", "[decoherence_typo]");
        assert!(matches!(load_config_str(&text), Err(Error::MissingKey(k)) if k == "decoherence.t1_q1_us"));
    }

    #[test]
    fn negative_rate_and_coarse_grid_rejected() {
        let text = defaults_text().replace("kappa_w_mhz = 0.02", "kappa_w_mhz = -0.02");
        assert!(matches!(load_config_str(&text), Err(Error::InvalidParameter(_))));
        let text = defaults_text().replace("dt_ns = 0.5", "dt_ns = 4.0");
        assert!(matches!(load_config_str(&text), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn one_ns_grid_accepted() {
        // dt * kappa_bar = 1e-9 * 2 pi * 4.53e6 = 0.028.
        let text = defaults_text().replace("dt_ns = 0.5", "dt_ns = 1.0");
        assert!(load_config_str(&text).is_ok());
    }

    #[test]
    fn optional_sections_parse() {
        let text = format!(
            "seed = 9\noutput_dir = \"runs\"\n{}\n[sweep]\namplitudes = [0.2, 0.4]\nmodes = [\"even\"]\nresidual_excitation_q1 = 0.01\n\n[tomography]\nenabled = true\nshots = 1000\n",
            defaults_text()
        );
        let cfg = load_config_str(&text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.plan.amplitudes, vec![0.2, 0.4]);
        assert_eq!(cfg.plan.modes, vec![CompensationMode::Even]);
        assert_eq!(cfg.plan.residual_excitation.q1, 0.01);
        assert_eq!(cfg.plan.tomography.unwrap().settings.shots, Some(1000));
        assert!(load_config_str(&text.replace("\"even\"", "\"sideways\"")).is_err());
        assert!(load_config_str(&format!("{}\nunknown = 1\n", defaults_text())).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            k in proptest::collection::vec(1e-3f64..20.0, 5),
            chi in -2.0f64..2.0,
            eta in 0.0f64..=1.0,
            t1 in 1.0f64..100.0,
            theta in proptest::option::of(-3.0f64..3.0),
            seed in proptest::option::of(0u64..=i64::MAX as u64),
        ) {
            let mut doc = ConfigDoc::device_defaults();
            doc.chip1.kappa_s_mhz = k[0];
            doc.chip1.kappa_w_mhz = k[1];
            doc.chip2.kappa_i_mhz = k[2];
            doc.chip2.delta_mhz = k[3] - 10.0;
            doc.readout.amp_scale = k[4] * 1e3;
            doc.chip1.chi_mhz = chi;
            doc.link.eta_l = eta;
            doc.decoherence.t1_q2_us = t1;
            doc.readout.theta_rad = theta;
            doc.seed = seed;
            doc.sweep.amplitudes = Some(k.clone());
            let back = ConfigDoc::parse(&doc.to_toml().unwrap()).unwrap();
            prop_assert_eq!(back, doc);
        }
    }
}
