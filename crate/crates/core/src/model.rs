//! Basis enumeration and Hamiltonian assembly for the supported gate schemes.
//!
//! Every scheme is described by a [`StateSpace`]: an ordered list of product
//! basis states, a list of real couplings (each carrying half the Rabi
//! frequency of one [`Role`]) and a constant diagonal (detunings and
//! blockade shifts). The Hamiltonian at time `t` is assembled from the
//! coupling list and the waveform values of a [`PulseSet`].

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::pulse::PulseSet;
use crate::{Error, Result, C64};

/// A frequency quoted in "2π×MHz": the stored value `v` stands for `2π·v`
/// rad/μs. Keeping the user-facing number avoids round-off when documents
/// are written back out.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Mhz(pub f64);

impl Mhz {
    /// Angular frequency in rad/μs.
    pub fn angular(self) -> f64 {
        TAU * self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    /// Two qubits, direct ground-Rydberg coupling.
    OnePhotonTwoQubit,
    /// Two qubits, ladder |1⟩ → |e⟩ → |r⟩ with one-photon detuning Δ.
    TwoPhotonTwoQubit,
    /// Two non-interacting qubits mediated by a driven buffer atom.
    BamOnePhoton,
}

impl Scheme {
    pub const ALL: [Scheme; 3] =
        [Scheme::OnePhotonTwoQubit, Scheme::TwoPhotonTwoQubit, Scheme::BamOnePhoton];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::OnePhotonTwoQubit => "ONE_PHOTON_TWO_QUBIT",
            Scheme::TwoPhotonTwoQubit => "TWO_PHOTON_TWO_QUBIT",
            Scheme::BamOnePhoton => "BAM_ONE_PHOTON",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.name() == name)
    }

    /// The coupling roles this scheme's Hamiltonian needs wired.
    pub fn roles(self) -> &'static [Role] {
        match self {
            Scheme::OnePhotonTwoQubit => &[Role::OmegaC, Role::OmegaT],
            Scheme::TwoPhotonTwoQubit => {
                &[Role::OmegaCp, Role::OmegaCs, Role::OmegaTp, Role::OmegaTs]
            }
            Scheme::BamOnePhoton => &[Role::Omega1, Role::Omega2],
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hamiltonian coupling roles a waveform can be wired to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Control atom |1⟩ ↔ |r⟩ (one-photon).
    #[serde(rename = "omega_c")]
    OmegaC,
    /// Target atom |1⟩ ↔ |r⟩ (one-photon).
    #[serde(rename = "omega_t")]
    OmegaT,
    /// Control atom probe |1⟩ ↔ |e⟩.
    #[serde(rename = "omega_cp")]
    OmegaCp,
    /// Control atom Stokes |e⟩ ↔ |r⟩.
    #[serde(rename = "omega_cS")]
    OmegaCs,
    /// Target atom probe |1⟩ ↔ |e⟩.
    #[serde(rename = "omega_tp")]
    OmegaTp,
    /// Target atom Stokes |e⟩ ↔ |r⟩.
    #[serde(rename = "omega_tS")]
    OmegaTs,
    /// Buffer atom |g⟩ ↔ |r⟩.
    #[serde(rename = "omega_1")]
    Omega1,
    /// Both qubit atoms |1⟩ ↔ |r⟩ (buffer-mediated scheme).
    #[serde(rename = "omega_2")]
    Omega2,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::OmegaC,
        Role::OmegaT,
        Role::OmegaCp,
        Role::OmegaCs,
        Role::OmegaTp,
        Role::OmegaTs,
        Role::Omega1,
        Role::Omega2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Role::OmegaC => "omega_c",
            Role::OmegaT => "omega_t",
            Role::OmegaCp => "omega_cp",
            Role::OmegaCs => "omega_cS",
            Role::OmegaTp => "omega_tp",
            Role::OmegaTs => "omega_tS",
            Role::Omega1 => "omega_1",
            Role::Omega2 => "omega_2",
        }
    }

    pub fn from_name(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.name() == name)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Single-atom level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Zero,
    One,
    /// Intermediate level of the two-photon ladder.
    E,
    /// Rydberg level.
    R,
    /// Buffer atom ground level.
    G,
}

impl Level {
    pub fn symbol(self) -> char {
        match self {
            Level::Zero => '0',
            Level::One => '1',
            Level::E => 'e',
            Level::R => 'r',
            Level::G => 'g',
        }
    }

    pub fn from_symbol(c: char) -> Option<Level> {
        match c {
            '0' => Some(Level::Zero),
            '1' => Some(Level::One),
            'e' => Some(Level::E),
            'r' => Some(Level::R),
            'g' => Some(Level::G),
            _ => None,
        }
    }
}

/// Product basis state. Two-qubit schemes order atoms (control, target);
/// the buffer-mediated scheme orders them (control, buffer, target).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisState(pub Vec<Level>);

impl BasisState {
    pub fn parse(label: &str) -> Option<BasisState> {
        label.chars().map(Level::from_symbol).collect::<Option<Vec<_>>>().map(BasisState)
    }

    pub fn label(&self) -> String {
        self.0.iter().map(|l| l.symbol()).collect()
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}⟩", self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Blockade {
    /// Doubly excited states are removed from the basis.
    Infinite,
    /// Pair shift B > 0 in 2π×MHz.
    Finite(Mhz),
}

/// Scheme selection plus the physical parameters of one gate.
/// The waveforms themselves live in a [`PulseSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct GateConfiguration {
    pub scheme: Scheme,
    /// One-photon detuning Δ of the intermediate level (two-photon only).
    pub delta: Option<Mhz>,
    pub blockade: Blockade,
    /// Gate duration T in μs.
    pub duration: f64,
}

impl GateConfiguration {
    pub fn new(scheme: Scheme, blockade: Blockade, duration: f64) -> Self {
        GateConfiguration { scheme, delta: None, blockade, duration }
    }

    pub fn with_delta(mut self, delta: Mhz) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        if let Blockade::Finite(b) = self.blockade {
            if !(b.0.is_finite() && b.0 > 0.0) {
                return Err(Error::invalid(format!("finite blockade must be > 0, got {}", b.0)));
            }
        }
        if self.scheme == Scheme::TwoPhotonTwoQubit {
            match self.delta {
                None => {
                    return Err(Error::invalid(
                        "one-photon detuning delta is required for TWO_PHOTON_TWO_QUBIT",
                    ))
                }
                Some(d) if !d.0.is_finite() => {
                    return Err(Error::invalid("one-photon detuning delta must be finite"))
                }
                _ => {}
            }
            if matches!(self.blockade, Blockade::Finite(_)) {
                return Err(Error::invalid(
                    "finite blockade is not supported for TWO_PHOTON_TWO_QUBIT \
                     (its truncated basis has no doubly excited states)",
                ));
            }
        }
        Ok(())
    }

    /// Checks that every role of the scheme has exactly one waveform and no
    /// foreign roles are present.
    pub fn check_wiring(&self, pulses: &PulseSet) -> Result<()> {
        let roles = self.scheme.roles();
        for role in roles {
            if pulses.get(*role).is_none() {
                return Err(Error::invalid(format!("role {role} of {} is not wired", self.scheme)));
            }
        }
        for role in pulses.roles() {
            if !roles.contains(&role) {
                return Err(Error::invalid(format!("role {role} does not belong to {}", self.scheme)));
            }
        }
        Ok(())
    }
}

/// One off-diagonal link `H[a][b] = H[b][a] = Ω_role(t) / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coupling {
    pub a: usize,
    pub b: usize,
    pub role: Role,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub states: Vec<BasisState>,
    pub couplings: Vec<Coupling>,
    /// Constant diagonal energies in rad/μs.
    pub diagonal: Vec<f64>,
    /// Dynamically invariant blocks, each sorted, ordered by first index.
    pub sectors: Vec<Vec<usize>>,
    /// Indices of |00⟩, |01⟩, |10⟩, |11⟩ (buffer in |g⟩ where present).
    pub computational: [usize; 4],
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s.label() == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.states.iter().map(BasisState::label).collect()
    }

    /// Sector containing basis index `i`.
    pub fn sector_of(&self, i: usize) -> usize {
        self.sectors.iter().position(|s| s.contains(&i)).expect("sectors cover the space")
    }

    pub fn computational_labels(&self) -> [String; 4] {
        self.computational.map(|i| self.states[i].label())
    }
}

/// Builds the basis, couplings, constant diagonal and sector partition.
pub fn build_state_space(config: &GateConfiguration) -> Result<StateSpace> {
    config.validate()?;
    let mut b = SpaceBuilder::default();
    match config.scheme {
        Scheme::OnePhotonTwoQubit => {
            for l in ["00", "01", "10", "11", "0r", "r0", "1r", "r1"] {
                b.state(l);
            }
            b.link("10", "r0", Role::OmegaC);
            b.link("01", "0r", Role::OmegaT);
            b.link("11", "r1", Role::OmegaC);
            b.link("11", "1r", Role::OmegaT);
            if let Blockade::Finite(shift) = config.blockade {
                b.state("rr");
                b.link("1r", "rr", Role::OmegaC);
                b.link("r1", "rr", Role::OmegaT);
                b.shift("rr", shift.angular());
            }
        }
        Scheme::TwoPhotonTwoQubit => {
            let delta = config.delta.expect("validated").angular();
            for l in ["00", "01", "0e", "0r", "10", "e0", "r0", "11", "e1", "1e", "r1", "1r"] {
                b.state(l);
            }
            // control atom, target in |0⟩ and in |1⟩
            b.link("10", "e0", Role::OmegaCp);
            b.link("e0", "r0", Role::OmegaCs);
            b.link("11", "e1", Role::OmegaCp);
            b.link("e1", "r1", Role::OmegaCs);
            // target atom, control in |0⟩ and in |1⟩
            b.link("01", "0e", Role::OmegaTp);
            b.link("0e", "0r", Role::OmegaTs);
            b.link("11", "1e", Role::OmegaTp);
            b.link("1e", "1r", Role::OmegaTs);
            for l in ["0e", "e0", "e1", "1e"] {
                b.shift(l, delta);
            }
        }
        Scheme::BamOnePhoton => {
            let qubit = [Level::Zero, Level::One, Level::R];
            let buffer = [Level::G, Level::R];
            let shift = match config.blockade {
                Blockade::Finite(s) => Some(s.angular()),
                Blockade::Infinite => None,
            };
            for &c in &qubit {
                for &m in &buffer {
                    for &t in &qubit {
                        let pairs = usize::from(m == Level::R && c == Level::R)
                            + usize::from(m == Level::R && t == Level::R);
                        match shift {
                            None if pairs > 0 => continue,
                            None => b.push(BasisState(vec![c, m, t]), 0.0),
                            Some(s) => b.push(BasisState(vec![c, m, t]), pairs as f64 * s),
                        }
                    }
                }
            }
            let states = b.states.clone();
            for s in &states {
                let [c, m, t] = [s.0[0], s.0[1], s.0[2]];
                if c == Level::One {
                    b.link_states(s, &BasisState(vec![Level::R, m, t]), Role::Omega2);
                }
                if t == Level::One {
                    b.link_states(s, &BasisState(vec![c, m, Level::R]), Role::Omega2);
                }
                if m == Level::G {
                    b.link_states(s, &BasisState(vec![c, Level::R, t]), Role::Omega1);
                }
            }
        }
    }
    Ok(b.finish(config.scheme))
}

#[derive(Default)]
struct SpaceBuilder {
    states: Vec<BasisState>,
    diagonal: Vec<f64>,
    couplings: Vec<Coupling>,
}

impl SpaceBuilder {
    fn push(&mut self, s: BasisState, energy: f64) {
        self.states.push(s);
        self.diagonal.push(energy);
    }

    fn state(&mut self, label: &str) {
        self.push(BasisState::parse(label).expect("static label"), 0.0);
    }

    fn idx(&self, s: &BasisState) -> Option<usize> {
        self.states.iter().position(|x| x == s)
    }

    fn shift(&mut self, label: &str, energy: f64) {
        let i = self.idx(&BasisState::parse(label).unwrap()).expect("state exists");
        self.diagonal[i] += energy;
    }

    fn link(&mut self, a: &str, b: &str, role: Role) {
        let (a, b) = (BasisState::parse(a).unwrap(), BasisState::parse(b).unwrap());
        self.link_states(&a, &b, role);
    }

    /// Links two states if both survived truncation.
    fn link_states(&mut self, a: &BasisState, b: &BasisState, role: Role) {
        if let (Some(a), Some(b)) = (self.idx(a), self.idx(b)) {
            self.couplings.push(Coupling { a, b, role });
        }
    }

    fn finish(self, scheme: Scheme) -> StateSpace {
        let n = self.states.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for c in &self.couplings {
            let (ra, rb) = (root(&mut parent, c.a), root(&mut parent, c.b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut sectors: Vec<Vec<usize>> = Vec::new();
        let mut sector_of_root = vec![usize::MAX; n];
        for i in 0..n {
            let r = root(&mut parent, i);
            if sector_of_root[r] == usize::MAX {
                sector_of_root[r] = sectors.len();
                sectors.push(Vec::new());
            }
            sectors[sector_of_root[r]].push(i);
        }
        let comp_labels: [&str; 4] = match scheme {
            Scheme::BamOnePhoton => ["0g0", "0g1", "1g0", "1g1"],
            _ => ["00", "01", "10", "11"],
        };
        let computational = comp_labels.map(|l| {
            self.idx(&BasisState::parse(l).unwrap()).expect("computational state present")
        });
        StateSpace {
            states: self.states,
            couplings: self.couplings,
            diagonal: self.diagonal,
            sectors,
            computational,
        }
    }
}

/// Dense Hermitian matrix in rad/μs.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(DMatrix<C64>);

impl HermitianOperator {
    /// Wraps `m` after checking `‖m − m†‖_max ≤ 1e-12·‖m‖_max`.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("operator must be square"));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let n = m.nrows();
        for i in 0..n {
            for j in 0..n {
                if (m[(i, j)] - m[(j, i)].conj()).norm() > 1e-12 * scale {
                    return Err(Error::invalid(format!("operator is not Hermitian at ({i}, {j})")));
                }
            }
        }
        Ok(HermitianOperator(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }
}

/// A validated configuration together with its state space.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: GateConfiguration,
    pub space: StateSpace,
}

impl Model {
    pub fn new(config: &GateConfiguration) -> Result<Self> {
        let space = build_state_space(config)?;
        Ok(Model { config: config.clone(), space })
    }

    /// Waveform values Ω(t) in rad/μs for each role, indexed like
    /// `Role::ALL`. Unwired roles read as 0.
    pub fn role_values(&self, pulses: &PulseSet, t: f64) -> Result<[f64; 8]> {
        let mut out = [0.0; 8];
        for (k, role) in Role::ALL.iter().enumerate() {
            if let Some(w) = pulses.get(*role) {
                let v = w.eval(t);
                if !v.is_finite() {
                    return Err(Error::invalid(format!("{role} is not finite at t = {t}")));
                }
                out[k] = v;
            }
        }
        Ok(out)
    }

    pub fn hamiltonian_at(&self, pulses: &PulseSet, t: f64) -> Result<HermitianOperator> {
        self.config.check_wiring(pulses)?;
        if !t.is_finite() {
            return Err(Error::invalid("time must be finite"));
        }
        let values = self.role_values(pulses, t)?;
        Ok(HermitianOperator(self.assemble(&values)))
    }

    pub(crate) fn assemble(&self, values: &[f64; 8]) -> DMatrix<C64> {
        let n = self.space.dim();
        let mut h = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            self.space.diagonal.iter().map(|&d| C64::new(d, 0.0)),
        ));
        for c in &self.space.couplings {
            let v = C64::new(0.5 * values[role_slot(c.role)], 0.0);
            h[(c.a, c.b)] += v;
            h[(c.b, c.a)] += v;
        }
        h
    }
}

pub(crate) fn role_slot(role: Role) -> usize {
    Role::ALL.iter().position(|&r| r == role).unwrap()
}

/// H(t)/ħ for `config` driven by `pulses`.
pub fn hamiltonian_at(
    config: &GateConfiguration,
    pulses: &PulseSet,
    t: f64,
) -> Result<HermitianOperator> {
    Model::new(config)?.hamiltonian_at(pulses, t)
}
