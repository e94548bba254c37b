//! Truncated-Fourier Rabi waveforms, published coefficient presets and the
//! JSON pulse document.
//!
//! A modulated waveform with real coefficients `[a_0, …, a_N]` and reference
//! period τ evaluates to
//!
//! ```text
//! f(t) = 2π · (a_0 + Σ_{n=1..N} 2 a_n cos(2π n t / τ)) / (2N + 1)   [rad/μs]
//! ```
//!
//! so it is symmetric about τ/2 and `f(0) = f(τ) ∝ a_0 + 2 Σ a_n`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::model::{Blockade, GateConfiguration, Mhz, Role, Scheme};
use crate::{Error, Result};

/// Reference period used by every published coefficient set, μs.
pub const REFERENCE_TAU: f64 = 0.25;

pub const PRESET_NAMES: [&str; 4] = ["fig2", "fig3", "fig4", "fig5"];

#[derive(Clone, Debug, PartialEq)]
pub enum Waveform {
    Modulated { coefficients: Vec<f64>, tau: f64 },
    Constant(Mhz),
}

impl Waveform {
    pub fn modulated(coefficients: Vec<f64>, tau: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("a modulated waveform needs at least a_0"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid(format!("tau must be > 0, got {tau}")));
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(Waveform::Modulated { coefficients, tau })
    }

    pub fn constant(value: Mhz) -> Self {
        Waveform::Constant(value)
    }

    /// N, the number of harmonics (0 for constants).
    pub fn n_harmonics(&self) -> usize {
        match self {
            Waveform::Modulated { coefficients, .. } => coefficients.len() - 1,
            Waveform::Constant(_) => 0,
        }
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        match self {
            Waveform::Modulated { coefficients, .. } => Some(coefficients),
            Waveform::Constant(_) => None,
        }
    }

    /// Rabi frequency at `t` (μs) in rad/μs.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant(v) => v.angular(),
            Waveform::Modulated { coefficients, tau } => {
                let n = coefficients.len() - 1;
                let w = TAU * t / tau;
                let series = coefficients
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, a)| 2.0 * a * (k as f64 * w).cos())
                    .sum::<f64>();
                TAU * (coefficients[0] + series) / (2 * n + 1) as f64
            }
        }
    }

    /// `|a_0 + 2 Σ a_n|`, proportional to `|f(0)| = |f(τ)|`.
    pub fn boundary_residual(&self) -> Result<f64> {
        match self {
            Waveform::Modulated { coefficients, .. } => Ok(endpoint_sum(coefficients).abs()),
            Waveform::Constant(_) => {
                Err(Error::NotApplicable("boundary residual of a constant waveform".into()))
            }
        }
    }
}

fn endpoint_sum(coefficients: &[f64]) -> f64 {
    coefficients[0] + 2.0 * coefficients[1..].iter().sum::<f64>()
}

/// Builds the waveform whose tail is `free = [a_1, …, a_N]` and whose
/// `a_0 = −2 Σ a_n`, so that it starts and ends at exactly zero.
pub fn zero_endpoint_reparam(free: &[f64], tau: f64) -> Result<Waveform> {
    let a0 = -2.0 * free.iter().sum::<f64>();
    let mut coefficients = Vec::with_capacity(free.len() + 1);
    coefficients.push(a0);
    coefficients.extend_from_slice(free);
    Waveform::modulated(coefficients, tau)
}

/// Waveforms keyed by coupling role.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PulseSet(BTreeMap<Role, Waveform>);

impl PulseSet {
    pub fn new() -> Self {
        PulseSet::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Role, Waveform)>) -> Self {
        PulseSet(pairs.into_iter().collect())
    }

    pub fn insert(&mut self, role: Role, w: Waveform) -> Option<Waveform> {
        self.0.insert(role, w)
    }

    pub fn get(&self, role: Role) -> Option<&Waveform> {
        self.0.get(&role)
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Role, &Waveform)> {
        self.0.iter().map(|(r, w)| (*r, w))
    }

    /// Same set with every waveform replaced by the zero constant.
    pub fn zeroed(&self) -> PulseSet {
        PulseSet(self.0.keys().map(|r| (*r, Waveform::constant(Mhz(0.0)))).collect())
    }
}

fn modulated(coefficients: &[f64]) -> Waveform {
    Waveform::modulated(coefficients.to_vec(), REFERENCE_TAU).expect("preset coefficients")
}

/// Published coefficient sets. Every modulated waveform has N = 5 and
/// τ = T = 0.25 μs. `fig3` and `fig4` leave the one-photon detuning unset;
/// it has to be supplied before the configuration validates.
///
/// For `fig2` the first listed waveform drives the control atom and the
/// second the target atom (the CZ error is symmetric under the swap).
pub fn preset(name: &str) -> Result<(GateConfiguration, PulseSet)> {
    let one = |scheme, blockade| GateConfiguration::new(scheme, blockade, REFERENCE_TAU);
    match name {
        "fig2" => Ok((
            one(Scheme::OnePhotonTwoQubit, Blockade::Infinite),
            PulseSet::from_pairs([
                (Role::OmegaC, modulated(&[88.01, -36.76, -13.05, 2.07, 4.18, -0.45])),
                (Role::OmegaT, modulated(&[88.01, -5.93, -20.0, -10.58, -5.0, -2.5])),
            ]),
        )),
        "fig3" => Ok((
            one(Scheme::TwoPhotonTwoQubit, Blockade::Infinite),
            PulseSet::from_pairs([
                (Role::OmegaCp, modulated(&[2272.30, -822.50, 210.48, 15.84, -239.97, -300.00])),
                (Role::OmegaTp, modulated(&[2095.32, -543.21, -560.01, 181.68, 79.91, -206.03])),
                (Role::OmegaCs, Waveform::constant(Mhz(347.79))),
                (Role::OmegaTs, Waveform::constant(Mhz(208.91))),
            ]),
        )),
        "fig4" => Ok((
            one(Scheme::TwoPhotonTwoQubit, Blockade::Infinite),
            PulseSet::from_pairs([
                (Role::OmegaCp, modulated(&[2796.08, -867.78, -414.89, -95.59, 1.30, -21.08])),
                (Role::OmegaTp, modulated(&[2954.90, -249.84, -487.92, -315.42, -234.00, -190.27])),
                (Role::OmegaCs, modulated(&[2794.86, -872.29, -417.65, -92.25, 10.14, -25.39])),
                (Role::OmegaTs, modulated(&[2953.00, -246.82, -485.72, -321.47, -231.64, -190.86])),
            ]),
        )),
        "fig5" => Ok((
            one(Scheme::BamOnePhoton, Blockade::Finite(Mhz(50.0))),
            PulseSet::from_pairs([
                (Role::Omega1, modulated(&[88.00, -33.72, -24.29, 15.71, 1.83, -3.55])),
                (Role::Omega2, modulated(&[111.82, -19.23, -9.46, -20.0, -13.73, 6.5])),
            ]),
        )),
        other => Err(Error::NotFound(format!(
            "unknown preset '{other}' (available: {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

// ---------------------------------------------------------------------------
// Pulse document

pub const SCHEMA_VERSION: &str = "1";

/// A real number written as a decimal string. Reading also accepts bare
/// JSON numbers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decimal(pub f64);

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}", self.0))
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Decimal(v)),
            Raw::Str(s) => s
                .trim()
                .parse::<f64>()
                .map(Decimal)
                .map_err(|_| serde::de::Error::custom(format!("'{s}' is not a decimal number"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockadeDoc {
    Named(String),
    Finite {
        #[serde(rename = "b_2pi_MHz")]
        b_2pi_mhz: Decimal,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WaveformDoc {
    Modulated {
        coefficients: Vec<Decimal>,
    },
    Constant {
        #[serde(rename = "constant_2pi_MHz")]
        constant_2pi_mhz: Decimal,
    },
}

/// Wire form of a configuration plus its pulses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseDocument {
    pub schema_version: String,
    pub scheme: String,
    pub tau_us: Decimal,
    pub duration_us: Decimal,
    pub n_harmonics: usize,
    #[serde(rename = "delta_2pi_MHz", default, skip_serializing_if = "Option::is_none")]
    pub delta_2pi_mhz: Option<Decimal>,
    pub blockade: BlockadeDoc,
    pub pulses: BTreeMap<String, WaveformDoc>,
}

impl PulseDocument {
    pub fn from_model(config: &GateConfiguration, pulses: &PulseSet) -> Result<Self> {
        let mut tau = None;
        let mut n_harmonics = None;
        let mut docs = BTreeMap::new();
        for (role, w) in pulses.iter() {
            let doc = match w {
                Waveform::Modulated { coefficients, tau: t } => {
                    if tau.is_some_and(|x| x != *t) {
                        return Err(Error::invalid("all modulated waveforms must share tau"));
                    }
                    if n_harmonics.is_some_and(|n| n != coefficients.len() - 1) {
                        return Err(Error::invalid("all modulated waveforms must share N"));
                    }
                    tau = Some(*t);
                    n_harmonics = Some(coefficients.len() - 1);
                    WaveformDoc::Modulated {
                        coefficients: coefficients.iter().map(|&a| Decimal(a)).collect(),
                    }
                }
                Waveform::Constant(v) => WaveformDoc::Constant { constant_2pi_mhz: Decimal(v.0) },
            };
            docs.insert(role.name().to_string(), doc);
        }
        Ok(PulseDocument {
            schema_version: SCHEMA_VERSION.to_string(),
            scheme: config.scheme.name().to_string(),
            tau_us: Decimal(tau.unwrap_or(config.duration)),
            duration_us: Decimal(config.duration),
            n_harmonics: n_harmonics.unwrap_or(0),
            delta_2pi_mhz: config.delta.map(|d| Decimal(d.0)),
            blockade: match config.blockade {
                Blockade::Infinite => BlockadeDoc::Named("infinite".into()),
                Blockade::Finite(b) => BlockadeDoc::Finite { b_2pi_mhz: Decimal(b.0) },
            },
            pulses: docs,
        })
    }

    /// Converts to the in-memory model. Detuning presence is not enforced
    /// here so that callers can still supply it afterwards.
    pub fn to_model(&self) -> Result<(GateConfiguration, PulseSet)> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::parse(
                "schema_version",
                format!("unsupported schema version '{}'", self.schema_version),
            ));
        }
        let scheme = Scheme::from_name(&self.scheme)
            .ok_or_else(|| Error::parse("scheme", format!("unknown scheme '{}'", self.scheme)))?;
        let blockade = match &self.blockade {
            BlockadeDoc::Named(s) if s == "infinite" => Blockade::Infinite,
            BlockadeDoc::Named(s) => {
                return Err(Error::parse(
                    "blockade",
                    format!("expected \"infinite\" or {{\"b_2pi_MHz\": ...}}, got '{s}'"),
                ))
            }
            BlockadeDoc::Finite { b_2pi_mhz } => Blockade::Finite(Mhz(b_2pi_mhz.0)),
        };
        let config = GateConfiguration {
            scheme,
            delta: self.delta_2pi_mhz.map(|d| Mhz(d.0)),
            blockade,
            duration: self.duration_us.0,
        };
        if !(config.duration.is_finite() && config.duration > 0.0) {
            return Err(Error::parse("duration_us", "must be a positive number"));
        }
        let tau = self.tau_us.0;
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::parse("tau_us", "must be a positive number"));
        }
        let mut pulses = PulseSet::new();
        for (name, doc) in &self.pulses {
            let role = Role::from_name(name)
                .ok_or_else(|| Error::parse(format!("pulses.{name}"), "unknown coupling role"))?;
            let w = match doc {
                WaveformDoc::Modulated { coefficients } => {
                    if coefficients.len() != self.n_harmonics + 1 {
                        return Err(Error::parse(
                            format!("pulses.{name}.coefficients"),
                            format!(
                                "expected n_harmonics + 1 = {} coefficients, found {}",
                                self.n_harmonics + 1,
                                coefficients.len()
                            ),
                        ));
                    }
                    Waveform::modulated(coefficients.iter().map(|d| d.0).collect(), tau)
                        .map_err(|e| Error::parse(format!("pulses.{name}"), e.to_string()))?
                }
                WaveformDoc::Constant { constant_2pi_mhz } => {
                    if !constant_2pi_mhz.0.is_finite() {
                        return Err(Error::parse(
                            format!("pulses.{name}.constant_2pi_MHz"),
                            "must be finite",
                        ));
                    }
                    Waveform::constant(Mhz(constant_2pi_mhz.0))
                }
            };
            pulses.insert(role, w);
        }
        config.check_wiring(&pulses).map_err(|e| Error::parse("pulses", e.to_string()))?;
        Ok((config, pulses))
    }
}

pub(crate) fn json_error(e: serde_json::Error) -> Error {
    Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
}

pub fn parse_pulse_file(text: &str) -> Result<(GateConfiguration, PulseSet)> {
    let doc: PulseDocument = serde_json::from_str(text).map_err(json_error)?;
    doc.to_model()
}

pub fn serialize_pulse_file(config: &GateConfiguration, pulses: &PulseSet) -> Result<String> {
    let doc = PulseDocument::from_model(config, pulses)?;
    Ok(serde_json::to_string_pretty(&doc).expect("pulse document serializes"))
}
