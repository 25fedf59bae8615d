//! Sparse, truncated multimode Fock states.
//!
//! A [`FockState`] stores complex amplitudes keyed by occupation vectors over
//! an ordered mode registry. States are not normalized implicitly: the write
//! process produces unnormalized kets and amplitudes are kept as produced.
//! Normalization happens in [`fidelity`] and when measurement branches are
//! conditioned.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mode::ModeId;
use crate::transform::ModeTransform;

/// Amplitudes below this magnitude are dropped after every operation.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Largest supported excitation cap; occupations are stored as `u8`.
pub const MAX_CAP: u32 = 64;

pub type Occupation = Vec<u8>;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Registry {
    modes: Vec<ModeId>,
    index: HashMap<ModeId, usize>,
}

impl Registry {
    fn new(modes: Vec<ModeId>) -> Result<Self> {
        let mut index = HashMap::with_capacity(modes.len());
        for (i, m) in modes.iter().enumerate() {
            if !m.is_well_formed() {
                return Err(Error::MalformedMode(m.clone()));
            }
            if index.insert(m.clone(), i).is_some() {
                return Err(Error::DuplicateMode(m.clone()));
            }
        }
        Ok(Registry { modes, index })
    }
}

/// Sparse truncated bosonic state.
#[derive(Debug, Clone)]
pub struct FockState {
    registry: Arc<Registry>,
    amplitudes: BTreeMap<Occupation, Complex64>,
    max_total_excitation: u32,
}

fn total(occ: &[u8]) -> u32 {
    occ.iter().map(|&n| u32::from(n)).sum()
}

fn factorial(n: u8) -> f64 {
    (1..=u32::from(n)).map(f64::from).product()
}

fn prune(map: &mut BTreeMap<Occupation, Complex64>) {
    map.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
}

/// Applies `Σ_k c_k b†_{j_k}` to every entry of `map`, dropping vectors over `cap`.
fn create_combination(
    map: &BTreeMap<Occupation, Complex64>,
    combination: &[(usize, Complex64)],
    cap: u32,
) -> BTreeMap<Occupation, Complex64> {
    let mut out = BTreeMap::new();
    for (occ, &amp) in map {
        if total(occ) + 1 > cap {
            continue;
        }
        for &(j, c) in combination {
            let mut next = occ.clone();
            let n = next[j];
            next[j] = n + 1;
            let factor = (f64::from(n) + 1.0).sqrt();
            *out.entry(next).or_insert(Complex64::new(0.0, 0.0)) += amp * c * factor;
        }
    }
    out
}

impl FockState {
    /// All-modes-empty state with unit amplitude.
    pub fn vacuum(registry: Vec<ModeId>, max_total_excitation: u32) -> Result<Self> {
        if registry.is_empty() {
            return Err(Error::EmptyRegistry);
        }
        let n = registry.len();
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(vec![0; n], Complex64::new(1.0, 0.0));
        Ok(FockState {
            registry: Arc::new(Registry::new(registry)?),
            amplitudes,
            max_total_excitation: max_total_excitation.min(MAX_CAP),
        })
    }

    /// Builds a state from explicit `(occupation, amplitude)` entries.
    pub fn from_entries(
        registry: Vec<ModeId>,
        max_total_excitation: u32,
        entries: impl IntoIterator<Item = (Occupation, Complex64)>,
    ) -> Result<Self> {
        let n = registry.len();
        let cap = max_total_excitation.min(MAX_CAP);
        let mut amplitudes = BTreeMap::new();
        for (occ, amp) in entries {
            if occ.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "occupation vector of length {} over {} modes",
                    occ.len(),
                    n
                )));
            }
            if total(&occ) > cap {
                continue;
            }
            *amplitudes.entry(occ).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        prune(&mut amplitudes);
        Ok(FockState {
            registry: Arc::new(Registry::new(registry)?),
            amplitudes,
            max_total_excitation: cap,
        })
    }

    /// Zero vector over the same registry.
    pub fn zero_like(&self) -> Self {
        FockState {
            registry: Arc::clone(&self.registry),
            amplitudes: BTreeMap::new(),
            max_total_excitation: self.max_total_excitation,
        }
    }

    pub fn registry(&self) -> &[ModeId] {
        &self.registry.modes
    }

    pub fn max_total_excitation(&self) -> u32 {
        self.max_total_excitation
    }

    pub fn mode_index(&self, mode: &ModeId) -> Option<usize> {
        self.registry.index.get(mode).copied()
    }

    fn require_index(&self, mode: &ModeId) -> Result<usize> {
        self.mode_index(mode)
            .ok_or_else(|| Error::UnknownMode(mode.clone()))
    }

    /// Same amplitudes under a different cap; entries above a lowered cap are dropped.
    pub fn with_cap(&self, cap: u32) -> Self {
        let cap = cap.min(MAX_CAP);
        let amplitudes = self
            .amplitudes
            .iter()
            .filter(|(occ, _)| total(occ) <= cap)
            .map(|(o, a)| (o.clone(), *a))
            .collect();
        FockState {
            registry: Arc::clone(&self.registry),
            amplitudes,
            max_total_excitation: cap,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], Complex64)> {
        self.amplitudes.iter().map(|(o, a)| (o.as_slice(), *a))
    }

    /// Number of stored (nonzero) entries.
    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_zero(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitude_of(&self, occ: &[u8]) -> Complex64 {
        self.amplitudes
            .get(occ)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Amplitude of the basis ket with the listed occupations and every other mode empty.
    pub fn amplitude(&self, occupied: &[(&ModeId, u8)]) -> Result<Complex64> {
        let occ = self.occupation_vector(occupied)?;
        Ok(self.amplitude_of(&occ))
    }

    /// Dense occupation vector for a sparse description.
    pub fn occupation_vector(&self, occupied: &[(&ModeId, u8)]) -> Result<Occupation> {
        let mut occ = vec![0u8; self.registry.modes.len()];
        for &(m, n) in occupied {
            occ[self.require_index(m)?] += n;
        }
        Ok(occ)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut amplitudes: BTreeMap<_, _> = self
            .amplitudes
            .iter()
            .map(|(o, a)| (o.clone(), a * c))
            .collect();
        prune(&mut amplitudes);
        FockState {
            amplitudes,
            ..self.zero_like()
        }
    }

    /// Keeps only entries whose occupation satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&[u8]) -> bool) -> Self {
        let amplitudes = self
            .amplitudes
            .iter()
            .filter(|(o, _)| keep(o))
            .map(|(o, a)| (o.clone(), *a))
            .collect();
        FockState {
            amplitudes,
            ..self.zero_like()
        }
    }

    /// Entry-wise sum; the registries must match exactly.
    pub fn add(&self, other: &FockState) -> Result<Self> {
        if self.registry.modes != other.registry.modes {
            return Err(Error::RegistryMismatch("cannot add states over different registries".into()));
        }
        let mut amplitudes = self.amplitudes.clone();
        for (o, a) in &other.amplitudes {
            *amplitudes.entry(o.clone()).or_insert(Complex64::new(0.0, 0.0)) += a;
        }
        prune(&mut amplitudes);
        Ok(FockState {
            amplitudes,
            max_total_excitation: self.max_total_excitation.max(other.max_total_excitation),
            registry: Arc::clone(&self.registry),
        })
    }

    /// Multiplies each entry by `exp(i * phase * n_mode)`.
    pub fn apply_phase(&self, mode: &ModeId, phase: f64) -> Result<Self> {
        let k = self.require_index(mode)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(o, a)| (o.clone(), a * Complex64::from_polar(1.0, phase * f64::from(o[k]))))
            .collect();
        Ok(FockState {
            amplitudes,
            ..self.zero_like()
        })
    }

    /// Total excitation number in the given modes for one occupation vector.
    pub fn count_in(&self, occ: &[u8], modes: &[ModeId]) -> Result<u32> {
        modes
            .iter()
            .map(|m| self.require_index(m).map(|k| u32::from(occ[k])))
            .sum()
    }

    /// Appends empty modes that are not yet present.
    pub fn with_modes(&self, extra: &[ModeId]) -> Result<Self> {
        let mut modes = self.registry.modes.clone();
        for m in extra {
            if !self.registry.index.contains_key(m) && !modes.contains(m) {
                modes.push(m.clone());
            }
        }
        let added = modes.len() - self.registry.modes.len();
        if added == 0 {
            return Ok(self.clone());
        }
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(o, a)| {
                let mut o = o.clone();
                o.resize(o.len() + added, 0);
                (o, *a)
            })
            .collect();
        Ok(FockState {
            registry: Arc::new(Registry::new(modes)?),
            amplitudes,
            max_total_excitation: self.max_total_excitation,
        })
    }

    /// Same state with the registry permuted into `order` (which must hold the same modes).
    pub fn reordered(&self, order: &[ModeId]) -> Result<Self> {
        if order.len() != self.registry.modes.len() {
            return Err(Error::RegistryMismatch(format!(
                "{} modes requested, state has {}",
                order.len(),
                self.registry.modes.len()
            )));
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|m| {
                self.mode_index(m)
                    .ok_or_else(|| Error::RegistryMismatch(format!("{m} missing")))
            })
            .collect::<Result<_>>()?;
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(o, a)| (perm.iter().map(|&k| o[k]).collect(), *a))
            .collect();
        Ok(FockState {
            registry: Arc::new(Registry::new(order.to_vec())?),
            amplitudes,
            max_total_excitation: self.max_total_excitation,
        })
    }

    /// Tensor product over the concatenated registry; the caps add.
    pub fn tensor(&self, other: &FockState) -> Result<Self> {
        let mut modes = self.registry.modes.clone();
        modes.extend(other.registry.modes.iter().cloned());
        let registry = Registry::new(modes)?;
        let mut amplitudes = BTreeMap::new();
        for (oa, a) in &self.amplitudes {
            for (ob, b) in &other.amplitudes {
                let mut o = oa.clone();
                o.extend_from_slice(ob);
                amplitudes.insert(o, a * b);
            }
        }
        prune(&mut amplitudes);
        Ok(FockState {
            registry: Arc::new(registry),
            amplitudes,
            max_total_excitation: (self.max_total_excitation + other.max_total_excitation)
                .min(MAX_CAP),
        })
    }

    /// `Σ_terms c · (Π a†_m) |self⟩` with bosonic `√(n+1)` factors; vectors over the cap are dropped.
    pub fn apply_polynomial(&self, poly: &CreationPolynomial) -> Result<Self> {
        let mut out: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (coeff, modes) in poly.terms() {
            let idx: Vec<usize> = modes
                .iter()
                .map(|m| self.require_index(m))
                .collect::<Result<_>>()?;
            let mut partial = self.amplitudes.clone();
            for &j in &idx {
                partial = create_combination(&partial, &[(j, Complex64::new(1.0, 0.0))], self.max_total_excitation);
            }
            for (o, a) in partial {
                *out.entry(o).or_insert(Complex64::new(0.0, 0.0)) += a * coeff;
            }
        }
        prune(&mut out);
        Ok(FockState {
            amplitudes: out,
            ..self.zero_like()
        })
    }

    /// Rewrites every basis ket as transformed creation operators acting on the
    /// spectator modes and re-expands.
    ///
    /// Output modes missing from the registry are appended. Input modes that are
    /// not also outputs are removed from the registry.
    pub fn apply_transform(&self, t: &ModeTransform) -> Result<Self> {
        let in_idx: Vec<usize> = t
            .in_modes()
            .iter()
            .map(|m| self.require_index(m))
            .collect::<Result<_>>()?;
        let in_set: HashSet<&ModeId> = t.in_modes().iter().collect();
        let out_set: HashSet<&ModeId> = t.out_modes().iter().collect();

        let mut new_modes = Vec::with_capacity(self.registry.modes.len() + t.out_modes().len());
        let mut old_to_new = Vec::with_capacity(self.registry.modes.len());
        for m in &self.registry.modes {
            if in_set.contains(m) && !out_set.contains(m) {
                old_to_new.push(None);
            } else {
                old_to_new.push(Some(new_modes.len()));
                new_modes.push(m.clone());
            }
        }
        for m in t.out_modes() {
            if !self.registry.index.contains_key(m) {
                new_modes.push(m.clone());
            }
        }
        let registry = Registry::new(new_modes)?;
        let width = registry.modes.len();
        let out_idx: Vec<usize> = t.out_modes().iter().map(|m| registry.index[m]).collect();
        let columns: Vec<Vec<(usize, Complex64)>> = (0..in_idx.len())
            .map(|i| {
                t.column(i)
                    .into_iter()
                    .map(|(j, c)| (out_idx[j], c))
                    .collect()
            })
            .collect();
        let is_input: Vec<bool> = (0..self.registry.modes.len())
            .map(|k| in_idx.contains(&k))
            .collect();

        let cap = self.max_total_excitation;
        let mut out: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (occ, &amp) in &self.amplitudes {
            let mut spectator = vec![0u8; width];
            for (k, &n) in occ.iter().enumerate() {
                if let (Some(nk), false) = (old_to_new[k], is_input[k]) {
                    spectator[nk] = n;
                }
            }
            let mut norm = 1.0;
            let mut partial = BTreeMap::new();
            partial.insert(spectator, amp);
            for (i, &k) in in_idx.iter().enumerate() {
                let n = occ[k];
                for _ in 0..n {
                    partial = create_combination(&partial, &columns[i], cap);
                }
                norm *= factorial(n);
            }
            let scale = 1.0 / norm.sqrt();
            for (o, a) in partial {
                *out.entry(o).or_insert(Complex64::new(0.0, 0.0)) += a * scale;
            }
        }
        prune(&mut out);
        Ok(FockState {
            registry: Arc::new(registry),
            amplitudes: out,
            max_total_excitation: cap,
        })
    }

    /// `⟨self|other⟩`. Registries must hold the same modes; order may differ.
    pub fn inner_product(&self, other: &FockState) -> Result<Complex64> {
        let other = if other.registry.modes == self.registry.modes {
            std::borrow::Cow::Borrowed(other)
        } else {
            std::borrow::Cow::Owned(other.reordered(&self.registry.modes)?)
        };
        let (small, large, conj_small) = if self.amplitudes.len() <= other.amplitudes.len() {
            (&self.amplitudes, &other.amplitudes, true)
        } else {
            (&other.amplitudes, &self.amplitudes, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (o, a) in small {
            if let Some(b) = large.get(o) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        Ok(acc)
    }

    /// Projective measurement of `modes`.
    ///
    /// Number-resolving: one branch per occupation tuple, with the measured
    /// modes removed from the conditional state. Otherwise one branch per
    /// click/no-click tuple (click = at least one excitation); the conditional
    /// state keeps the measured modes, projected onto the click subspace, since
    /// photon numbers within a click outcome stay coherent.
    pub fn measure_modes(
        &self,
        modes: &[ModeId],
        number_resolving: bool,
    ) -> Result<Vec<MeasurementBranch>> {
        if modes.is_empty() {
            return Err(Error::EmptyMeasurement);
        }
        let idx: Vec<usize> = modes
            .iter()
            .map(|m| self.require_index(m))
            .collect::<Result<_>>()?;
        let mut seen = HashSet::new();
        for m in modes {
            if !seen.insert(m) {
                return Err(Error::DuplicateMode(m.clone()));
            }
        }

        let kept: Vec<usize> = if number_resolving {
            (0..self.registry.modes.len())
                .filter(|k| !idx.contains(k))
                .collect()
        } else {
            (0..self.registry.modes.len()).collect()
        };

        let mut groups: BTreeMap<Vec<u8>, BTreeMap<Occupation, Complex64>> = BTreeMap::new();
        for (occ, &amp) in &self.amplitudes {
            let key: Vec<u8> = idx
                .iter()
                .map(|&k| if number_resolving { occ[k] } else { u8::from(occ[k] > 0) })
                .collect();
            let reduced: Occupation = kept.iter().map(|&k| occ[k]).collect();
            groups.entry(key).or_default().insert(reduced, amp);
        }

        let registry = if number_resolving {
            Arc::new(Registry::new(
                kept.iter().map(|&k| self.registry.modes[k].clone()).collect(),
            )?)
        } else {
            Arc::clone(&self.registry)
        };

        let mut branches = Vec::with_capacity(groups.len());
        for (key, amps) in groups {
            let probability: f64 = amps.values().map(|a| a.norm_sqr()).sum();
            if probability == 0.0 {
                continue;
            }
            let scale = 1.0 / probability.sqrt();
            let amplitudes = amps.into_iter().map(|(o, a)| (o, a * scale)).collect();
            let pattern = modes
                .iter()
                .zip(&key)
                .map(|(m, &n)| {
                    let outcome = if number_resolving {
                        Outcome::Count(u32::from(n))
                    } else {
                        Outcome::Click(n > 0)
                    };
                    (m.clone(), outcome)
                })
                .collect();
            branches.push(MeasurementBranch {
                pattern,
                probability,
                state: FockState {
                    registry: Arc::clone(&registry),
                    amplitudes,
                    max_total_excitation: self.max_total_excitation,
                },
            });
        }
        Ok(branches)
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.amplitudes.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (occ, a) in &self.amplitudes {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)|", a.re, a.im)?;
            let mut any = false;
            for (m, &n) in self.registry.modes.iter().zip(occ) {
                if n > 0 {
                    if any {
                        write!(f, " ")?;
                    }
                    any = true;
                    write!(f, "{m}^{n}")?;
                }
            }
            if !any {
                write!(f, "vac")?;
            }
            write!(f, "⟩")?;
        }
        Ok(())
    }
}

/// `⟨a|b⟩`; see [`FockState::inner_product`].
pub fn inner_product(a: &FockState, b: &FockState) -> Result<Complex64> {
    a.inner_product(b)
}

/// `|⟨a|b⟩|²` after normalizing both arguments.
pub fn fidelity(a: &FockState, b: &FockState) -> Result<f64> {
    let na = a.norm_sqr();
    let nb = b.norm_sqr();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(a.inner_product(b)?.norm_sqr() / (na * nb))
}

/// A sum of creation-operator monomials with complex coefficients.
#[derive(Debug, Clone, Default)]
pub struct CreationPolynomial {
    terms: Vec<(Complex64, Vec<ModeId>)>,
}

impl CreationPolynomial {
    pub fn new() -> Self {
        Self::default()
    }

    /// The polynomial `1`.
    pub fn identity() -> Self {
        Self::new().with_term(Complex64::new(1.0, 0.0), &[])
    }

    /// Adds `coeff · Π a†_m`; terms with the same multiset of modes merge.
    pub fn with_term(mut self, coeff: Complex64, modes: &[ModeId]) -> Self {
        let mut key = modes.to_vec();
        key.sort();
        if let Some(slot) = self.terms.iter_mut().find(|(_, k)| *k == key) {
            slot.0 += coeff;
        } else {
            self.terms.push((coeff, key));
        }
        self.terms.retain(|(c, _)| c.norm() > 0.0);
        self
    }

    pub fn terms(&self) -> impl Iterator<Item = (Complex64, &[ModeId])> {
        self.terms.iter().map(|(c, m)| (*c, m.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Result of measuring one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Count(u32),
    Click(bool),
}

impl Outcome {
    pub fn clicked(self) -> bool {
        match self {
            Outcome::Count(n) => n > 0,
            Outcome::Click(c) => c,
        }
    }

    pub fn count(self) -> Option<u32> {
        match self {
            Outcome::Count(n) => Some(n),
            Outcome::Click(_) => None,
        }
    }
}

/// One outcome of a measurement: pattern, probability and the normalized
/// conditional state. A list of branches stands for a mixed state.
#[derive(Debug, Clone)]
pub struct MeasurementBranch {
    pub pattern: Vec<(ModeId, Outcome)>,
    pub probability: f64,
    pub state: FockState,
}

impl MeasurementBranch {
    /// Conditional state scaled by `√probability`, i.e. the projected ket.
    pub fn unnormalized_state(&self) -> FockState {
        self.state
            .scaled(Complex64::new(self.probability.sqrt(), 0.0))
    }

    pub fn outcome(&self, mode: &ModeId) -> Option<Outcome> {
        self.pattern
            .iter()
            .find(|(m, _)| m == mode)
            .map(|(_, o)| *o)
    }
}
