//! Entanglement generation between two memory qubits, entanglement swapping
//! and nested chain connection.
//!
//! A memory qubit is a pair of atomic ensembles `u` and `d`. During the write
//! pulse `u` scatters a V-polarized Stokes photon and `d` an H-polarized one;
//! the node interferometer delays V by one time bin. At the midpoint a second
//! interferometer with the opposite arrangement delays H instead, so the
//! photons that took exactly one long path meet in bin 1 whatever the fibre
//! did to their polarization. Detectors are gated on that bin.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{fidelity, CreationPolynomial, FockState, MeasurementBranch};
use crate::mode::{ModeId, Polarization};
use crate::optics::{
    attenuate, balanced_beam_splitter, check_probability, detect, diagonal_wave_plate,
    lost_photons, midpoint_delay, node_delay, noise_unitary, pbs, ChannelParams, Detector,
    DetectorParams, Port,
};
use crate::transform::ModeTransform;

/// Location label of the midpoint station.
pub const MIDPOINT: &str = "mid";
/// Time bin in which the midpoint detectors are open.
pub const MIDPOINT_GATE: u8 = 1;
/// Above this excitation probability the perturbative state is a poor model.
pub const CHI_WARNING: f64 = 0.1;

/// Fidelity above which two swap components are treated as the same ket.
const MERGE_FIDELITY: f64 = 1.0 - 1e-13;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// A memory qubit: `station` names the repeater site, `slot` tells apart
/// the qubits held there (empty at end stations).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitId {
    pub station: String,
    pub slot: String,
}

impl QubitId {
    pub fn new(station: impl Into<String>, slot: impl Into<String>) -> Self {
        QubitId {
            station: station.into(),
            slot: slot.into(),
        }
    }

    pub fn end(station: impl Into<String>) -> Self {
        QubitId::new(station, "")
    }

    pub fn label(&self) -> String {
        if self.slot.is_empty() {
            self.station.clone()
        } else {
            format!("{}.{}", self.station, self.slot)
        }
    }

    pub fn u(&self) -> ModeId {
        ModeId::atomic(self.label(), "u")
    }

    pub fn d(&self) -> ModeId {
        ModeId::atomic(self.label(), "d")
    }

    pub fn stokes_port(&self) -> Port {
        Port::new(self.label(), "stokes")
    }

    pub fn h_out(&self) -> Port {
        Port::new(MIDPOINT, format!("{}.H", self.label()))
    }

    pub fn v_out(&self) -> Port {
        Port::new(MIDPOINT, format!("{}.V", self.label()))
    }
}

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub qubit: QubitId,
    pub chi: f64,
    /// Truncation of the written state; 4 keeps every term up to order χ.
    pub cap: u32,
}

impl NodeConfig {
    pub fn new(qubit: QubitId, chi: f64) -> Result<Self> {
        if !(chi > 0.0 && chi < 0.5) {
            return Err(Error::OutOfRange {
                name: "chi",
                value: chi,
                expected: "0 < chi < 0.5",
            });
        }
        Ok(NodeConfig { qubit, chi, cap: 4 })
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = cap;
        self
    }

    /// True when χ is large enough that neglected orders matter.
    pub fn chi_is_large(&self) -> bool {
        self.chi > CHI_WARNING
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub left: NodeConfig,
    pub right: NodeConfig,
    pub channel_left: ChannelParams,
    pub channel_right: ChannelParams,
    pub detector: DetectorParams,
}

impl LinkConfig {
    /// Lossless, noiseless link with ideal detectors.
    pub fn ideal(left: NodeConfig, right: NodeConfig) -> Self {
        LinkConfig {
            left,
            right,
            channel_left: ChannelParams::lossless(Default::default()),
            channel_right: ChannelParams::lossless(Default::default()),
            detector: DetectorParams::ideal(MIDPOINT_GATE),
        }
    }
}

/// `(1 + √χ S†a† + (χ/2)(S†a†)²)` for one ensemble.
fn write_polynomial(chi: f64, atom: &ModeId, photon: &ModeId) -> CreationPolynomial {
    CreationPolynomial::identity()
        .with_term(c(chi.sqrt()), &[atom.clone(), photon.clone()])
        .with_term(
            c(chi / 2.0),
            &[atom.clone(), photon.clone(), atom.clone(), photon.clone()],
        )
}

/// Write pulse on both ensembles of a node followed by the node interferometer.
///
/// Registry: `[u, d, stokes H bin 0, stokes V bin 1]`.
pub fn write_node(cfg: &NodeConfig) -> Result<FockState> {
    let q = &cfg.qubit;
    let port = q.stokes_port();
    let h = port.mode(Polarization::H, 0);
    let v = port.mode(Polarization::V, 0);
    let s = FockState::vacuum(vec![q.u(), q.d(), h.clone(), v.clone()], cfg.cap)?
        .apply_polynomial(&write_polynomial(cfg.chi, &q.u(), &v))?
        .apply_polynomial(&write_polynomial(cfg.chi, &q.d(), &h))?;
    node_delay(&s, &port)
}

/// Fibre noise, half-link loss and the midpoint PBS plus delay for one node.
///
/// Each branch records the photons lost in the fibre. The photons leave on
/// the node's H-out port (bins 1, 2) and V-out port (bins 0, 1) at the midpoint.
pub fn propagate_to_midpoint(
    state: &FockState,
    channel: &ChannelParams,
    qubit: &QubitId,
) -> Result<Vec<MeasurementBranch>> {
    let port = qubit.stokes_port();
    let bins = [0u8, 1];
    let photonic: Vec<ModeId> = bins
        .iter()
        .flat_map(|&b| [port.mode(Polarization::H, b), port.mode(Polarization::V, b)])
        .collect();
    let noisy = state
        .with_modes(&photonic)?
        .apply_transform(&noise_unitary(&channel.noise, &port, &bins)?)?;

    let routing = ModeTransform::direct_sum_all(
        &bins
            .iter()
            .map(|&b| pbs(&port.mode(Polarization::H, b), None, &qubit.h_out(), &qubit.v_out()))
            .collect::<Result<Vec<_>>>()?,
    )?;
    attenuate(&noisy, &photonic, channel.transmittance())?
        .into_iter()
        .map(|b| {
            let routed = b.state.apply_transform(&routing)?;
            Ok(MeasurementBranch {
                state: midpoint_delay(&routed, &qubit.h_out())?,
                ..b
            })
        })
        .collect()
}

/// A single-node state split by where its photons sit in time.
#[derive(Debug, Clone)]
pub struct TimeBinSectors {
    /// No photons.
    pub vacuum: FockState,
    /// Every photon in bin 1.
    pub bin1: FockState,
    /// Every photon in bins 0 or 2.
    pub bins02: FockState,
    /// Photons in bin 1 and in bins 0 or 2.
    pub cross: FockState,
}

impl TimeBinSectors {
    pub fn sum(&self) -> Result<FockState> {
        self.vacuum.add(&self.bin1)?.add(&self.bins02)?.add(&self.cross)
    }
}

pub fn decompose_timebins(state: &FockState) -> TimeBinSectors {
    let bins: Vec<Option<u8>> = state
        .registry()
        .iter()
        .map(|m| m.is_photonic().then_some(m.time_bin))
        .collect();
    let classify = |occ: &[u8]| {
        let (mut at1, mut elsewhere) = (false, false);
        for (n, bin) in occ.iter().zip(&bins) {
            match (n, bin) {
                (0, _) | (_, None) => {}
                (_, Some(1)) => at1 = true,
                _ => elsewhere = true,
            }
        }
        (at1, elsewhere)
    };
    TimeBinSectors {
        vacuum: state.filter(|o| classify(o) == (false, false)),
        bin1: state.filter(|o| classify(o) == (true, false)),
        bins02: state.filter(|o| classify(o) == (false, true)),
        cross: state.filter(|o| classify(o) == (true, true)),
    }
}

/// Interferometer and detectors at the midpoint.
#[derive(Debug, Clone)]
pub struct MidpointNetwork {
    pub transform: ModeTransform,
    /// D1, D2 watch the H beam splitter, D3, D4 the V one.
    pub detectors: Vec<Detector>,
}

fn detector_port(label: &str) -> Port {
    Port::new(MIDPOINT, label)
}

/// One 50/50 beam splitter per polarization and bin: H-out of both nodes
/// onto D1/D2, V-out onto D3/D4, each detector gated on bin 1.
pub fn build_midpoint_network(
    left: &QubitId,
    right: &QubitId,
    detector: DetectorParams,
) -> Result<MidpointNetwork> {
    let mut parts = Vec::new();
    for b in 0..=2u8 {
        for (pol, out, (d1, d2)) in [
            (Polarization::H, (left.h_out(), right.h_out()), ("D1", "D2")),
            (Polarization::V, (left.v_out(), right.v_out()), ("D3", "D4")),
        ] {
            parts.push(balanced_beam_splitter(
                &out.0.mode(pol, b),
                &out.1.mode(pol, b),
                &detector_port(d1).mode(pol, b),
                &detector_port(d2).mode(pol, b),
            )?);
        }
    }
    let detectors = [
        ("D1", Polarization::H),
        ("D2", Polarization::H),
        ("D3", Polarization::V),
        ("D4", Polarization::V),
    ]
    .iter()
    .map(|&(label, pol)| Detector {
        label: label.into(),
        modes: vec![detector_port(label).mode(pol, detector.gate_bin)],
        params: detector,
    })
    .collect();
    Ok(MidpointNetwork {
        transform: ModeTransform::direct_sum_all(&parts)?,
        detectors,
    })
}

/// Click pattern of the four midpoint detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeraldPattern {
    clicks: [bool; 4],
}

impl HeraldPattern {
    pub const D1D3: HeraldPattern = HeraldPattern { clicks: [true, false, true, false] };
    pub const D1D4: HeraldPattern = HeraldPattern { clicks: [true, false, false, true] };
    pub const D2D3: HeraldPattern = HeraldPattern { clicks: [false, true, true, false] };
    pub const D2D4: HeraldPattern = HeraldPattern { clicks: [false, true, false, true] };

    /// Accepts exactly one click among D1, D2 and exactly one among D3, D4.
    pub fn new(clicks: [bool; 4]) -> Result<Self> {
        let p = HeraldPattern { clicks };
        if p.is_heralding() {
            Ok(p)
        } else {
            Err(Error::NotHeralding(p.to_string()))
        }
    }

    pub fn all() -> [HeraldPattern; 4] {
        [Self::D1D3, Self::D1D4, Self::D2D3, Self::D2D4]
    }

    pub fn clicks(&self) -> [bool; 4] {
        self.clicks
    }

    fn is_heralding(&self) -> bool {
        let [d1, d2, d3, d4] = self.clicks;
        (d1 ^ d2) && (d3 ^ d4)
    }
}

impl fmt::Display for HeraldPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on: Vec<String> = self
            .clicks
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| format!("D{}", i + 1))
            .collect();
        if on.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&on.join("+"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightedState {
    pub weight: f64,
    pub state: FockState,
}

/// Detection outcome with everything that fine-grains it.
#[derive(Debug, Clone)]
struct Event {
    clicks: Vec<bool>,
    counts: Vec<u32>,
    absorbed: u32,
    unobserved: u32,
    probability: f64,
    state: FockState,
}

/// Traces out photonic modes no detector looks at, then detects.
fn observe(state: &FockState, detectors: &[Detector]) -> Result<Vec<Event>> {
    let watched: Vec<&ModeId> = detectors.iter().flat_map(|d| &d.modes).collect();
    let stray: Vec<ModeId> = state
        .registry()
        .iter()
        .filter(|m| m.is_photonic() && !watched.contains(m))
        .cloned()
        .collect();
    let traced: Vec<(u32, FockState)> = if stray.is_empty() {
        vec![(0, state.clone())]
    } else {
        state
            .measure_modes(&stray, true)?
            .into_iter()
            .map(|b| (lost_photons(&b), b.unnormalized_state()))
            .collect()
    };
    let mut out = Vec::new();
    for (unobserved, s) in traced {
        for b in detect(&s, detectors)? {
            out.push(Event {
                clicks: b.clicks,
                counts: b.counts,
                absorbed: b.absorbed,
                unobserved,
                probability: b.probability,
                state: b.state,
            });
        }
    }
    Ok(out)
}

fn qubit_modes(left: &QubitId, right: &QubitId) -> Vec<ModeId> {
    vec![left.u(), left.d(), right.u(), right.d()]
}

/// A heralded atomic state of one link branch, before sign correction.
#[derive(Debug, Clone)]
struct LinkBranch {
    pattern: HeraldPattern,
    principal: bool,
    probability: f64,
    state: FockState,
}

/// All heralding outcomes of one link configuration.
#[derive(Debug, Clone)]
pub struct LinkSimulation {
    left: QubitId,
    right: QubitId,
    branches: Vec<LinkBranch>,
}

fn heralding_events(
    joint: &FockState,
    network: &MidpointNetwork,
) -> Result<Vec<(HeraldPattern, Event)>> {
    let mixed = joint
        .with_modes(network.transform.in_modes())?
        .apply_transform(&network.transform)?;
    Ok(observe(&mixed, &network.detectors)?
        .into_iter()
        .filter_map(|e| {
            let clicks: [bool; 4] = e.clicks.clone().try_into().ok()?;
            HeraldPattern::new(clicks).ok().map(|p| (p, e))
        })
        .collect())
}

/// Runs both nodes through write, fibre and midpoint and keeps every
/// heralding branch.
pub fn simulate_link(link: &LinkConfig) -> Result<LinkSimulation> {
    let (ql, qr) = (&link.left.qubit, &link.right.qubit);
    if ql == qr {
        return Err(Error::LinksDisjoint(format!("link joins {ql} to itself")));
    }
    let a = write_node(&link.left)?;
    let b = write_node(&link.right)?;
    let norm = a.norm_sqr() * b.norm_sqr();
    let network = build_midpoint_network(ql, qr, link.detector)?;
    let order = qubit_modes(ql, qr);

    let mut branches = Vec::new();
    for ba in propagate_to_midpoint(&a, &link.channel_left, ql)? {
        for bb in propagate_to_midpoint(&b, &link.channel_right, qr)? {
            let lost = lost_photons(&ba) + lost_photons(&bb);
            let joint = ba.unnormalized_state().tensor(&bb.unnormalized_state())?;
            for (pattern, e) in heralding_events(&joint, &network)? {
                let principal = lost == 0
                    && e.unobserved == 0
                    && e.absorbed == 0
                    && e.counts.iter().zip(&e.clicks).all(|(&n, &k)| n == u32::from(k));
                branches.push(LinkBranch {
                    pattern,
                    principal,
                    probability: e.probability / norm,
                    state: e.state.reordered(&order)?,
                });
            }
        }
    }
    Ok(LinkSimulation {
        left: ql.clone(),
        right: qr.clone(),
        branches,
    })
}

/// Local phase flips that bring a pattern's state to the D1+D3 form:
/// a D2 click flips `d` of the right qubit, a D4 click flips its `u`.
fn sign_correction(pattern: HeraldPattern, right: &QubitId) -> Vec<ModeId> {
    let [_, d2, _, d4] = pattern.clicks();
    let mut flips = Vec::new();
    if d2 {
        flips.push(right.d());
    }
    if d4 {
        flips.push(right.u());
    }
    flips
}

fn flip_all(state: &FockState, modes: &[ModeId]) -> Result<FockState> {
    modes
        .iter()
        .try_fold(state.clone(), |s, m| s.apply_phase(m, std::f64::consts::PI))
}

impl LinkSimulation {
    /// Probability that any of the four heralding patterns occurs.
    pub fn success_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    /// Success probability restricted to the branch in which exactly the
    /// two heralding photons were emitted, transmitted and registered.
    /// This is the leading term in χ, free of multi-pair contamination.
    pub fn leading_success_probability(&self) -> f64 {
        self.branches
            .iter()
            .filter(|b| b.principal)
            .map(|b| b.probability)
            .sum()
    }

    pub fn herald(&self, pattern: HeraldPattern) -> Result<HeraldedLink> {
        let hits: Vec<&LinkBranch> = self.branches.iter().filter(|b| b.pattern == pattern).collect();
        let principal = hits
            .iter()
            .find(|b| b.principal)
            .ok_or(Error::NoHeraldEvents)?;
        let flips = sign_correction(pattern, &self.right);
        let probability: f64 = hits.iter().map(|b| b.probability).sum();
        let ensemble = hits
            .iter()
            .map(|b| {
                Ok(WeightedState {
                    weight: b.probability / probability,
                    state: flip_all(&b.state, &flips)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HeraldedLink {
            left: self.left.clone(),
            right: self.right.clone(),
            pattern,
            probability,
            leading_probability: principal.probability,
            state: flip_all(&principal.state, &flips)?,
            ensemble,
            sign_correction: flips,
        })
    }
}

/// Entanglement between two memory qubits heralded by one detector pattern.
#[derive(Debug, Clone)]
pub struct HeraldedLink {
    pub left: QubitId,
    pub right: QubitId,
    pub pattern: HeraldPattern,
    /// Probability of this pattern, all photon-number branches included.
    pub probability: f64,
    /// Probability of the leading branch alone.
    pub leading_probability: f64,
    /// Normalized leading-order state over `[u_l, d_l, u_r, d_r]`, sign corrected.
    pub state: FockState,
    /// Every branch compatible with the pattern, weights summing to 1.
    pub ensemble: Vec<WeightedState>,
    /// Modes that received a π phase to undo the pattern's sign.
    pub sign_correction: Vec<ModeId>,
}

/// `(S†_{u,a} S†_{d,b} + S†_{d,a} S†_{u,b}) / √2`.
pub fn psi_plus(a: &QubitId, b: &QubitId) -> Result<FockState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    FockState::from_entries(
        qubit_modes(a, b),
        2,
        [(vec![1, 0, 0, 1], c(s)), (vec![0, 1, 1, 0], c(s))],
    )
}

/// `(S†_{u,a} S†_{u,b} + S†_{d,a} S†_{d,b}) / √2`.
pub fn phi_plus(a: &QubitId, b: &QubitId) -> Result<FockState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    FockState::from_entries(
        qubit_modes(a, b),
        2,
        [(vec![1, 0, 1, 0], c(s)), (vec![0, 1, 0, 1], c(s))],
    )
}

/// Keeps the part of a two-qubit state with exactly one excitation in each qubit.
pub fn one_per_qubit(state: &FockState) -> FockState {
    state.filter(|o| o.len() == 4 && o[0] + o[1] == 1 && o[2] + o[3] == 1)
}

impl HeraldedLink {
    /// Projection of the state onto `span{u_l d_r, d_l u_r}`.
    pub fn bell_component(&self) -> FockState {
        self.state.filter(|o| o == [1, 0, 0, 1] || o == [0, 1, 1, 0])
    }

    pub fn bell_weight(&self) -> f64 {
        self.bell_component().norm_sqr()
    }

    /// Overlap of the whole heralded state with the Bell ket.
    pub fn bell_fidelity(&self) -> Result<f64> {
        fidelity(&self.state, &psi_plus(&self.left, &self.right)?)
    }

    /// Overlap of the normalized Bell component with the Bell ket.
    pub fn bell_sector_fidelity(&self) -> Result<f64> {
        fidelity(&self.bell_component(), &psi_plus(&self.left, &self.right)?)
    }

    /// The leading-order state with a bit flip on the right qubit, so the
    /// entangled part reads `φ+`; the form the swap expects.
    pub fn pair_state(&self) -> Result<PairState> {
        let state = self
            .state
            .apply_transform(&bit_flip(&self.right)?)?
            .reordered(&qubit_modes(&self.left, &self.right))?;
        Ok(PairState {
            left: self.left.clone(),
            right: self.right.clone(),
            components: vec![WeightedState { weight: 1.0, state }],
        })
    }
}

fn bit_flip(q: &QubitId) -> Result<ModeTransform> {
    ModeTransform::relabel(&[(q.u(), q.d()), (q.d(), q.u())])
}

pub fn generate_entanglement(link: &LinkConfig, pattern: HeraldPattern) -> Result<HeraldedLink> {
    simulate_link(link)?.herald(pattern)
}

/// Coincidence probability produced by the sector in which one node emits a
/// photon into bin 1 and another into bin 0 or 2, with the other node dark.
/// This is every contribution of that sector up to second order in χ.
pub fn cross_term_coincidence_check(link: &LinkConfig) -> Result<f64> {
    let (ql, qr) = (&link.left.qubit, &link.right.qubit);
    let a = write_node(&link.left)?;
    let b = write_node(&link.right)?;
    let norm = a.norm_sqr() * b.norm_sqr();
    let network = build_midpoint_network(ql, qr, link.detector)?;
    let mut total = 0.0;
    for ba in propagate_to_midpoint(&a, &link.channel_left, ql)? {
        for bb in propagate_to_midpoint(&b, &link.channel_right, qr)? {
            let sa = decompose_timebins(&ba.unnormalized_state());
            let sb = decompose_timebins(&bb.unnormalized_state());
            let joint = sa.cross.tensor(&sb.vacuum)?.add(&sa.vacuum.tensor(&sb.cross)?)?;
            if joint.is_zero() {
                continue;
            }
            total += heralding_events(&joint, &network)?
                .iter()
                .map(|(_, e)| e.probability)
                .sum::<f64>();
        }
    }
    Ok(total / norm)
}

/// A two-qubit mixed state as a weighted list of pure states over `[u_l, d_l, u_r, d_r]`.
#[derive(Debug, Clone)]
pub struct PairState {
    pub left: QubitId,
    pub right: QubitId,
    pub components: Vec<WeightedState>,
}

impl PairState {
    pub fn pure(left: QubitId, right: QubitId, state: FockState) -> Result<Self> {
        let state = state.reordered(&qubit_modes(&left, &right))?.normalized()?;
        Ok(PairState {
            left,
            right,
            components: vec![WeightedState { weight: 1.0, state }],
        })
    }

    pub fn phi_plus(left: QubitId, right: QubitId) -> Result<Self> {
        let state = phi_plus(&left, &right)?;
        Self::pure(left, right, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapConfig {
    pub retrieval_eta: f64,
    pub detector_eta: f64,
}

impl SwapConfig {
    pub fn new(retrieval_eta: f64, detector_eta: f64) -> Result<Self> {
        check_probability("retrieval_eta", retrieval_eta)?;
        check_probability("eta", detector_eta)?;
        Ok(SwapConfig {
            retrieval_eta,
            detector_eta,
        })
    }

    pub fn ideal() -> Self {
        SwapConfig {
            retrieval_eta: 1.0,
            detector_eta: 1.0,
        }
    }
}

/// Outcome of swapping two pairs: the heralded state of the outer qubits.
#[derive(Debug, Clone)]
pub struct SwapResult {
    pub left: QubitId,
    pub right: QubitId,
    /// For a single swap, the probability that the Bell measurement heralds;
    /// for a chain, the product over every swap performed.
    pub herald_probability: f64,
    /// Weights of the parts with two, one and no excitations on the outer qubits.
    pub p2: f64,
    pub p1: f64,
    pub p0: f64,
    pub components: Vec<WeightedState>,
}

impl SwapResult {
    pub fn pair_state(&self) -> PairState {
        PairState {
            left: self.left.clone(),
            right: self.right.clone(),
            components: self.components.clone(),
        }
    }

    pub fn postselected_fidelity(&self) -> Result<f64> {
        postselected_fidelity(self)
    }
}

const SWAP_GATE: u8 = 0;

struct SwapStation {
    retrieval: ModeTransform,
    retrieval_loss: Vec<ModeId>,
    analyzer: ModeTransform,
    analyzer_inputs: Vec<ModeId>,
    detectors: Vec<Detector>,
}

/// Retrieval of both middle qubits into anti-Stokes photons (u to H, d to V)
/// and the Bell analyzer: a PBS acting in the diagonal basis whose two
/// outputs are split by H/V onto D1, D2 and D3, D4.
fn swap_station(l: &QubitId, r: &QubitId, cfg: SwapConfig) -> Result<SwapStation> {
    let loc = format!("swap:{}", l.station);
    let (pl, pr) = (Port::new(&loc, "L"), Port::new(&loc, "R"));
    let (o1, o2) = (Port::new(&loc, "o1"), Port::new(&loc, "o2"));
    let keep = c(cfg.retrieval_eta.sqrt());
    let lose = c((1.0 - cfg.retrieval_eta).sqrt());
    let mut parts = Vec::new();
    let mut retrieval_loss = Vec::new();
    for (q, port) in [(l, &pl), (r, &pr)] {
        for (atom, pol) in [(q.u(), Polarization::H), (q.d(), Polarization::V)] {
            let photon = port.mode(pol, SWAP_GATE);
            if cfg.retrieval_eta == 1.0 {
                parts.push(ModeTransform::relabel(&[(atom, photon)])?);
            } else {
                let loss = ModeId::photon(format!("loss:{loc}"), q.label(), pol, SWAP_GATE);
                parts.push(ModeTransform::from_rows(
                    vec![atom],
                    vec![photon, loss.clone()],
                    &[vec![keep], vec![lose]],
                )?);
                retrieval_loss.push(loss);
            }
        }
    }
    let bins = [SWAP_GATE];
    let stages = [
        diagonal_wave_plate(&pl, &bins)?.direct_sum(&diagonal_wave_plate(&pr, &bins)?)?,
        pbs(
            &pl.mode(Polarization::H, SWAP_GATE),
            Some(&pr.mode(Polarization::H, SWAP_GATE)),
            &o1,
            &o2,
        )?,
        diagonal_wave_plate(&o1, &bins)?.direct_sum(&diagonal_wave_plate(&o2, &bins)?)?,
    ];
    let analyzer = compose(&stages)?;
    let analyzer_inputs = [&pl, &pr]
        .iter()
        .flat_map(|p| [p.mode(Polarization::H, SWAP_GATE), p.mode(Polarization::V, SWAP_GATE)])
        .collect();
    let params = DetectorParams::new(cfg.detector_eta, SWAP_GATE, false)?;
    let detectors = [(&o1, Polarization::H), (&o1, Polarization::V), (&o2, Polarization::H), (&o2, Polarization::V)]
        .iter()
        .enumerate()
        .map(|(k, (port, pol))| Detector {
            label: format!("D{}", k + 1),
            modes: vec![port.mode(*pol, SWAP_GATE)],
            params,
        })
        .collect();
    Ok(SwapStation {
        retrieval: ModeTransform::direct_sum_all(&parts)?,
        retrieval_loss,
        analyzer,
        analyzer_inputs,
        detectors,
    })
}

/// Product of transforms applied left to right, each mapping the previous
/// one's outputs (in any order) onto new modes.
fn compose(stages: &[ModeTransform]) -> Result<ModeTransform> {
    let (first, rest) = stages
        .split_first()
        .ok_or_else(|| Error::ShapeMismatch("empty composition".into()))?;
    rest.iter().try_fold(first.clone(), |acc, next| {
        let idx: Vec<usize> = next
            .in_modes()
            .iter()
            .map(|m| {
                acc.out_modes()
                    .iter()
                    .position(|o| o == m)
                    .ok_or_else(|| Error::UnknownMode(m.clone()))
            })
            .collect::<Result<_>>()?;
        if idx.len() != acc.out_modes().len() {
            return Err(Error::ShapeMismatch("stage does not consume every output".into()));
        }
        let mut gather = nalgebra::DMatrix::zeros(idx.len(), idx.len());
        for (row, &k) in idx.iter().enumerate() {
            gather[(row, k)] = c(1.0);
        }
        ModeTransform::new(
            acc.in_modes().to_vec(),
            next.out_modes().to_vec(),
            next.matrix() * gather * acc.matrix(),
        )
    })
}

/// A heralding swap outcome: which pattern fired and the outer-qubit state.
struct SwapEvent {
    clicks: [bool; 4],
    probability: f64,
    state: FockState,
}

fn swap_events(joint: &FockState, station: &SwapStation) -> Result<Vec<SwapEvent>> {
    let retrieved = joint.apply_transform(&station.retrieval)?;
    let kept: Vec<FockState> = if station.retrieval_loss.is_empty() {
        vec![retrieved]
    } else {
        retrieved
            .measure_modes(&station.retrieval_loss, true)?
            .iter()
            .map(MeasurementBranch::unnormalized_state)
            .collect()
    };
    let mut out = Vec::new();
    for s in kept {
        let analyzed = s
            .with_modes(&station.analyzer_inputs)?
            .apply_transform(&station.analyzer)?;
        for e in observe(&analyzed, &station.detectors)? {
            let [d1, d2, d3, d4]: [bool; 4] = e.clicks.clone().try_into().map_err(|_| {
                Error::ShapeMismatch("swap station has four detectors".into())
            })?;
            if (d1 ^ d2) && (d3 ^ d4) {
                out.push(SwapEvent {
                    clicks: [d1, d2, d3, d4],
                    probability: e.probability,
                    state: e.state,
                });
            }
        }
    }
    Ok(out)
}

fn check_adjacent(left: &PairState, right: &PairState) -> Result<()> {
    let (l, r) = (&left.right, &right.left);
    if l.station != r.station || l == r {
        return Err(Error::LinksDisjoint(format!(
            "{} - {} and {} - {}",
            left.left, left.right, right.left, right.right
        )));
    }
    Ok(())
}

fn merge_into(components: &mut Vec<WeightedState>, weight: f64, state: FockState) -> Result<()> {
    for existing in components.iter_mut() {
        if fidelity(&existing.state, &state)? > MERGE_FIDELITY {
            existing.weight += weight;
            return Ok(());
        }
    }
    components.push(WeightedState { weight, state });
    Ok(())
}

/// Bell measurement on the middle qubits of two adjacent pairs.
///
/// Both inputs are expected in the `φ+` form. Patterns D1+D3 and D2+D4
/// leave the outer qubits in `φ+`; D1+D4 and D2+D3 leave them in `ψ+`, which
/// is flipped back by a bit flip on the right qubit.
pub fn swap_pairs(left: &PairState, right: &PairState, cfg: SwapConfig) -> Result<SwapResult> {
    check_adjacent(left, right)?;
    let station = swap_station(&left.right, &right.left, cfg)?;
    let outer = qubit_modes(&left.left, &right.right);
    let flip = bit_flip(&right.right)?;

    let mut raw: Vec<(f64, FockState)> = Vec::new();
    for a in &left.components {
        for b in &right.components {
            let joint = a.state.tensor(&b.state)?;
            for e in swap_events(&joint, &station)? {
                let [d1, _, _, d4] = e.clicks;
                let state = if d1 == d4 {
                    e.state.apply_transform(&flip)?
                } else {
                    e.state
                };
                raw.push((a.weight * b.weight * e.probability, state.reordered(&outer)?));
            }
        }
    }
    let herald_probability: f64 = raw.iter().map(|(w, _)| w).sum();
    if !(herald_probability > 0.0) {
        return Err(Error::NoHeraldEvents);
    }

    let mut components = Vec::new();
    for (w, s) in raw {
        merge_into(&mut components, w / herald_probability, s)?;
    }
    let mut p = [0.0f64; 3];
    let mut excess = 0.0;
    for comp in &components {
        for (occ, a) in comp.state.iter() {
            let n: u32 = occ.iter().map(|&k| u32::from(k)).sum();
            let w = comp.weight * a.norm_sqr();
            match p.get_mut(n as usize) {
                Some(slot) => *slot += w,
                None => excess += w,
            }
        }
    }
    if excess > 1e-12 {
        return Err(Error::ExcitationOverflow(excess));
    }
    Ok(SwapResult {
        left: left.left.clone(),
        right: right.right.clone(),
        herald_probability,
        p2: p[2],
        p1: p[1],
        p0: p[0],
        components,
    })
}

pub fn local_swap(ab: &HeraldedLink, bc: &HeraldedLink, cfg: SwapConfig) -> Result<SwapResult> {
    swap_pairs(&ab.pair_state()?, &bc.pair_state()?, cfg)
}

/// Splits a pair state by the excitation number of one of its qubits.
fn qubit_sector(state: &FockState, right_qubit: bool, n: u8) -> FockState {
    let (i, j) = if right_qubit { (2, 3) } else { (0, 1) };
    state.filter(|o| o[i] == n && o[j] == n)
}

/// Coincidence probability produced when one pair puts an excitation in
/// both ensembles of its middle qubit and the other pair leaves its middle
/// qubit empty. Both retrieved photons then enter the analyzer from the same
/// side and leave through the same output.
pub fn two_excitation_elimination_check(
    ab: &HeraldedLink,
    bc: &HeraldedLink,
    cfg: SwapConfig,
) -> Result<f64> {
    let (left, right) = (ab.pair_state()?, bc.pair_state()?);
    check_adjacent(&left, &right)?;
    let station = swap_station(&left.right, &right.left, cfg)?;
    let mut total = 0.0;
    for a in &left.components {
        for b in &right.components {
            let double_left = qubit_sector(&a.state, true, 1).tensor(&qubit_sector(&b.state, false, 0))?;
            let double_right = qubit_sector(&a.state, true, 0).tensor(&qubit_sector(&b.state, false, 1))?;
            let joint = double_left.add(&double_right)?;
            if joint.is_zero() {
                continue;
            }
            total += a.weight
                * b.weight
                * swap_events(&joint, &station)?
                    .iter()
                    .map(|e| e.probability)
                    .sum::<f64>();
        }
    }
    Ok(total)
}

/// Nested swapping over `2^n` adjacent links, neighbours first.
pub fn chain_connect(links: &[HeraldedLink], cfg: SwapConfig) -> Result<SwapResult> {
    let pairs = links
        .iter()
        .map(HeraldedLink::pair_state)
        .collect::<Result<Vec<_>>>()?;
    chain_connect_pairs(pairs, cfg)
}

pub fn chain_connect_pairs(pairs: Vec<PairState>, cfg: SwapConfig) -> Result<SwapResult> {
    let n = pairs.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut level = pairs;
    let mut cumulative = 1.0;
    loop {
        let mut next = Vec::with_capacity(level.len() / 2);
        let mut last = None;
        for pair in level.chunks(2) {
            let r = swap_pairs(&pair[0], &pair[1], cfg)?;
            cumulative *= r.herald_probability;
            next.push(r.pair_state());
            last = Some(r);
        }
        if next.len() == 1 {
            let mut r = last.expect("one swap per remaining pair");
            r.herald_probability = cumulative;
            return Ok(r);
        }
        level = next;
    }
}

/// Fidelity with `φ+` of the ensemble restricted to one excitation per outer qubit.
pub fn postselected_fidelity(result: &SwapResult) -> Result<f64> {
    let target = phi_plus(&result.left, &result.right)?;
    let (mut kept, mut overlap) = (0.0, 0.0);
    for comp in &result.components {
        let part = one_per_qubit(&comp.state);
        let w = part.norm_sqr();
        if w == 0.0 {
            continue;
        }
        kept += comp.weight * w;
        overlap += comp.weight * target.inner_product(&part)?.norm_sqr();
    }
    if !(kept > 0.0) {
        return Err(Error::EmptyPostSelection);
    }
    Ok(overlap / kept)
}
