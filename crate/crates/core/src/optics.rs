//! Optical elements and channels expressed as mode transforms and measurement branches.

use std::collections::HashSet;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{FockState, MeasurementBranch, Outcome};
use crate::mode::{ModeId, Polarization};
use crate::transform::ModeTransform;

/// Spatial part of a photonic mode label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Port {
    pub location: String,
    pub port: String,
}

impl Port {
    pub fn new(location: impl Into<String>, port: impl Into<String>) -> Self {
        Port {
            location: location.into(),
            port: port.into(),
        }
    }

    pub fn mode(&self, polarization: Polarization, time_bin: u8) -> ModeId {
        ModeId::photon(self.location.clone(), self.port.clone(), polarization, time_bin)
    }

    pub fn contains(&self, mode: &ModeId) -> bool {
        mode.is_photonic() && mode.location == self.location && mode.port == self.port
    }

    pub fn of(mode: &ModeId) -> Self {
        Port::new(mode.location.clone(), mode.port.clone())
    }
}

/// Random polarization rotation `(theta, phi)` of a fibre plus the
/// polarization-independent phase picked up on the way to the midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    theta: f64,
    phi: f64,
    path_phase: f64,
}

impl NoiseParams {
    /// Folds `theta` into `[0, π/2]` and both phases into `[0, 2π)` without
    /// changing the channel's action on any Fock state.
    pub fn new(theta: f64, phi: f64, path_phase: f64) -> Self {
        // U(θ + π) = -U(θ); the sign is a per-photon phase.
        let turns = (theta / PI).floor();
        let mut theta = theta - turns * PI;
        let mut phi = phi;
        let mut path_phase = path_phase + turns * PI;
        // U(π - θ, φ) = -U(θ, φ + π)
        if theta > FRAC_PI_2 {
            theta = PI - theta;
            phi += PI;
            path_phase += PI;
        }
        NoiseParams {
            theta,
            phi: phi.rem_euclid(TAU),
            path_phase: path_phase.rem_euclid(TAU),
        }
    }

    pub fn ideal() -> Self {
        NoiseParams::new(0.0, 0.0, 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn path_phase(&self) -> f64 {
        self.path_phase
    }

    /// `[[cosθ, -e^{-iφ} sinθ], [e^{iφ} sinθ, cosθ]] · e^{i path_phase}` on (H, V).
    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        let g = Complex64::from_polar(1.0, self.path_phase);
        let (s, c) = self.theta.sin_cos();
        [
            [g * c, -g * Complex64::from_polar(s, -self.phi)],
            [g * Complex64::from_polar(s, self.phi), g * c],
        ]
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams::ideal()
    }
}

/// One half of a link: the fibre from a node to the midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Full node-to-node distance `L0`; each photon travels half of it.
    pub length: f64,
    pub attenuation_length: f64,
    pub noise: NoiseParams,
}

impl ChannelParams {
    pub fn new(length: f64, attenuation_length: f64, noise: NoiseParams) -> Result<Self> {
        if !(length >= 0.0) || !length.is_finite() {
            return Err(Error::OutOfRange {
                name: "L0",
                value: length,
                expected: "finite and >= 0",
            });
        }
        if !(attenuation_length > 0.0) {
            return Err(Error::OutOfRange {
                name: "Latt",
                value: attenuation_length,
                expected: "> 0",
            });
        }
        Ok(ChannelParams {
            length,
            attenuation_length,
            noise,
        })
    }

    pub fn lossless(noise: NoiseParams) -> Self {
        ChannelParams {
            length: 0.0,
            attenuation_length: 1.0,
            noise,
        }
    }

    /// Per-photon survival probability from node to midpoint, `exp(-L0 / (2 Latt))`.
    pub fn transmittance(&self) -> f64 {
        (-self.length / (2.0 * self.attenuation_length)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub gate_bin: u8,
    pub number_resolving: bool,
}

impl DetectorParams {
    pub fn new(efficiency: f64, gate_bin: u8, number_resolving: bool) -> Result<Self> {
        check_probability("eta", efficiency)?;
        Ok(DetectorParams {
            efficiency,
            gate_bin,
            number_resolving,
        })
    }

    /// Unit-efficiency threshold detector gated at `gate_bin`.
    pub fn ideal(gate_bin: u8) -> Self {
        DetectorParams {
            efficiency: 1.0,
            gate_bin,
            number_resolving: false,
        }
    }
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected: "[0, 1]",
        })
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Polarizing beam splitter: H is transmitted, V reflected.
///
/// `in1` and `in2` name the input channels (any polarization label other
/// than `None` selects the channel; both polarizations are routed) at the
/// time bin they carry. `in1`'s H goes to `transmit`, its V to `reflect`;
/// `in2`'s H goes to `reflect` and its V to `transmit`.
pub fn pbs(
    in1: &ModeId,
    in2: Option<&ModeId>,
    transmit: &Port,
    reflect: &Port,
) -> Result<ModeTransform> {
    let mut pairs = Vec::with_capacity(4);
    let mut route = |input: &ModeId, h_to: &Port, v_to: &Port| -> Result<()> {
        if !input.is_photonic() || input.polarization == Polarization::None {
            return Err(Error::MissingPolarization(input.clone()));
        }
        let bin = input.time_bin;
        pairs.push((
            input.with_polarization(Polarization::H),
            h_to.mode(Polarization::H, bin),
        ));
        pairs.push((
            input.with_polarization(Polarization::V),
            v_to.mode(Polarization::V, bin),
        ));
        Ok(())
    };
    route(in1, transmit, reflect)?;
    if let Some(in2) = in2 {
        route(in2, reflect, transmit)?;
    }
    ModeTransform::relabel(&pairs)
}

/// Half-wave plate at 22.5°: H -> (H+V)/√2, V -> (H-V)/√2 for each listed bin.
pub fn diagonal_wave_plate(port: &Port, bins: &[u8]) -> Result<ModeTransform> {
    let s = FRAC_1_SQRT_2;
    let parts = bins
        .iter()
        .map(|&b| {
            let modes = vec![port.mode(Polarization::H, b), port.mode(Polarization::V, b)];
            ModeTransform::from_rows(modes.clone(), modes, &[vec![c(s), c(s)], vec![c(s), c(-s)]])
        })
        .collect::<Result<Vec<_>>>()?;
    ModeTransform::direct_sum_all(&parts)
}

/// Balanced beam splitter on two same-polarization, same-bin inputs:
/// `a1 -> (o1 + o2)/√2`, `a2 -> (o1 - o2)/√2`.
pub fn balanced_beam_splitter(
    in1: &ModeId,
    in2: &ModeId,
    out1: &ModeId,
    out2: &ModeId,
) -> Result<ModeTransform> {
    let s = FRAC_1_SQRT_2;
    ModeTransform::from_rows(
        vec![in1.clone(), in2.clone()],
        vec![out1.clone(), out2.clone()],
        &[vec![c(s), c(s)], vec![c(s), c(-s)]],
    )
}

/// Polarization noise of one fibre, identical for every listed time bin.
pub fn noise_unitary(params: &NoiseParams, port: &Port, bins: &[u8]) -> Result<ModeTransform> {
    let m = params.matrix();
    let parts = bins
        .iter()
        .map(|&b| {
            let modes = vec![port.mode(Polarization::H, b), port.mode(Polarization::V, b)];
            let matrix = DMatrix::from_fn(2, 2, |j, i| m[j][i]);
            ModeTransform::new(modes.clone(), modes, matrix)
        })
        .collect::<Result<Vec<_>>>()?;
    ModeTransform::direct_sum_all(&parts)
}

fn shift_bins(state: &FockState, port: &Port, polarization: Polarization) -> Result<FockState> {
    let pairs: Vec<(ModeId, ModeId)> = state
        .registry()
        .iter()
        .filter(|m| port.contains(m) && m.polarization == polarization)
        .map(|m| (m.clone(), m.with_bin(m.time_bin + 1)))
        .collect();
    if pairs.is_empty() {
        return Ok(state.clone());
    }
    state.apply_transform(&ModeTransform::relabel(&pairs)?)
}

/// Node-side unbalanced interferometer: V takes the long path (one bin later), H the short one.
pub fn node_delay(state: &FockState, port: &Port) -> Result<FockState> {
    shift_bins(state, port, Polarization::V)
}

/// Midpoint interferometer with the opposite arrangement: H is delayed, V is not.
pub fn midpoint_delay(state: &FockState, port: &Port) -> Result<FockState> {
    shift_bins(state, port, Polarization::H)
}

fn loss_mode(mode: &ModeId) -> ModeId {
    ModeId::photon(
        format!("loss:{}", mode.location),
        mode.port.clone(),
        mode.polarization,
        mode.time_bin,
    )
}

/// Couples each listed mode to a fresh loss mode with a beam splitter of
/// transmittance `t`, then measures and discards the loss modes.
///
/// The pattern of each branch records the photons lost from every mode. With
/// `t = 1` the result is a single branch with an empty pattern.
pub fn attenuate(state: &FockState, modes: &[ModeId], t: f64) -> Result<Vec<MeasurementBranch>> {
    check_probability("transmittance", t)?;
    for m in modes {
        if state.mode_index(m).is_none() {
            return Err(Error::UnknownMode(m.clone()));
        }
    }
    if t == 1.0 || modes.is_empty() {
        let p = state.norm_sqr();
        if p == 0.0 {
            return Ok(Vec::new());
        }
        return Ok(vec![MeasurementBranch {
            pattern: Vec::new(),
            probability: p,
            state: state.normalized()?,
        }]);
    }
    let (keep, lose) = (t.sqrt(), (1.0 - t).sqrt());
    let parts = modes
        .iter()
        .map(|m| {
            ModeTransform::from_rows(
                vec![m.clone()],
                vec![m.clone(), loss_mode(m)],
                &[vec![c(keep)], vec![c(lose)]],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let coupled = state.apply_transform(&ModeTransform::direct_sum_all(&parts)?)?;
    let losses: Vec<ModeId> = modes.iter().map(loss_mode).collect();
    coupled.measure_modes(&losses, true)
}

/// Photons lost in an attenuation branch.
pub fn lost_photons(branch: &MeasurementBranch) -> u32 {
    branch
        .pattern
        .iter()
        .filter_map(|(_, o)| o.count())
        .sum()
}

/// A detector watching a set of modes.
#[derive(Debug, Clone)]
pub struct Detector {
    pub label: String,
    pub modes: Vec<ModeId>,
    pub params: DetectorParams,
}

/// One outcome of [`detect`].
///
/// `clicks` is what a threshold detector reports. `counts` and `absorbed`
/// fine-grain the branch (photon numbers registered and photons lost to
/// inefficiency); for threshold detectors they are not observable, but
/// keeping them separate leaves each branch a pure state.
#[derive(Debug, Clone)]
pub struct DetectionBranch {
    pub clicks: Vec<bool>,
    pub counts: Vec<u32>,
    pub absorbed: u32,
    pub probability: f64,
    pub state: FockState,
}

impl DetectionBranch {
    pub fn unnormalized_state(&self) -> FockState {
        self.state.scaled(Complex64::new(self.probability.sqrt(), 0.0))
    }
}

/// Inefficient, time-gated photodetection.
///
/// Only the modes of each detector that sit in its gate bin are observed;
/// modes in other bins are left in the returned states untouched. Efficiency
/// is applied as attenuation ahead of an ideal measurement and the observed
/// modes are removed from the conditional states.
pub fn detect(state: &FockState, detectors: &[Detector]) -> Result<Vec<DetectionBranch>> {
    let mut seen = HashSet::new();
    let mut gated: Vec<Vec<ModeId>> = Vec::with_capacity(detectors.len());
    for d in detectors {
        check_probability("eta", d.params.efficiency)?;
        let mut modes = Vec::new();
        for m in &d.modes {
            if !seen.insert(m.clone()) {
                return Err(Error::OverlappingDetectors(m.clone()));
            }
            if m.time_bin == d.params.gate_bin && state.mode_index(m).is_some() {
                modes.push(m.clone());
            }
        }
        gated.push(modes);
    }

    // Attenuation per detector, chained so each detector keeps its own efficiency.
    let mut stage: Vec<(u32, FockState)> = vec![(0, state.clone())];
    for (d, modes) in detectors.iter().zip(&gated) {
        if d.params.efficiency == 1.0 || modes.is_empty() {
            continue;
        }
        let mut next = Vec::new();
        for (absorbed, s) in &stage {
            for b in attenuate(s, modes, d.params.efficiency)? {
                next.push((absorbed + lost_photons(&b), b.unnormalized_state()));
            }
        }
        stage = next;
    }

    let observed: Vec<ModeId> = gated.iter().flatten().cloned().collect();
    let mut out = Vec::new();
    for (absorbed, s) in stage {
        let branches = if observed.is_empty() {
            let p = s.norm_sqr();
            if p == 0.0 {
                continue;
            }
            vec![MeasurementBranch {
                pattern: Vec::new(),
                probability: p,
                state: s.normalized()?,
            }]
        } else {
            s.measure_modes(&observed, true)?
        };
        for b in branches {
            let counts: Vec<u32> = gated
                .iter()
                .map(|modes| {
                    modes
                        .iter()
                        .map(|m| b.outcome(m).and_then(Outcome::count).unwrap_or(0))
                        .sum()
                })
                .collect();
            out.push(DetectionBranch {
                clicks: counts.iter().map(|&n| n > 0).collect(),
                counts,
                absorbed,
                probability: b.probability,
                state: b.state,
            });
        }
    }
    Ok(out)
}
