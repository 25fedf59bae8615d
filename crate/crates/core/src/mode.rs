//! Labels for the bosonic modes the simulator tracks.

use std::fmt;

/// Whether a mode is a travelling photon or a stored collective atomic excitation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    Photonic,
    Atomic,
}

/// Linear polarization of a photonic mode. Atomic modes carry `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    H,
    V,
    None,
}

impl Polarization {
    pub fn orthogonal(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
            Polarization::None => Polarization::None,
        }
    }
}

/// A labelled bosonic mode.
///
/// Two values describe the same physical mode iff every field is equal. The
/// time bin counts the long paths a photon has traversed, so the short-long and
/// long-short routes both land in bin 1 and are the same mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId {
    pub location: String,
    pub species: Species,
    pub polarization: Polarization,
    pub time_bin: u8,
    pub port: String,
}

impl ModeId {
    /// Collective excitation of the ensemble `port` (e.g. `"u"`) at `location`.
    pub fn atomic(location: impl Into<String>, port: impl Into<String>) -> Self {
        ModeId {
            location: location.into(),
            species: Species::Atomic,
            polarization: Polarization::None,
            time_bin: 0,
            port: port.into(),
        }
    }

    pub fn photon(
        location: impl Into<String>,
        port: impl Into<String>,
        polarization: Polarization,
        time_bin: u8,
    ) -> Self {
        ModeId {
            location: location.into(),
            species: Species::Photonic,
            polarization,
            time_bin,
            port: port.into(),
        }
    }

    pub fn is_photonic(&self) -> bool {
        self.species == Species::Photonic
    }

    pub fn is_atomic(&self) -> bool {
        self.species == Species::Atomic
    }

    /// Same mode with another polarization.
    pub fn with_polarization(&self, polarization: Polarization) -> Self {
        ModeId {
            polarization,
            ..self.clone()
        }
    }

    pub fn with_bin(&self, time_bin: u8) -> Self {
        ModeId {
            time_bin,
            ..self.clone()
        }
    }

    /// Same polarization and bin, moved to another spatial channel.
    pub fn moved_to(&self, location: impl Into<String>, port: impl Into<String>) -> Self {
        ModeId {
            location: location.into(),
            port: port.into(),
            ..self.clone()
        }
    }

    /// Checks the field combinations that are never valid.
    pub(crate) fn is_well_formed(&self) -> bool {
        match self.species {
            Species::Atomic => self.polarization == Polarization::None && self.time_bin == 0,
            Species::Photonic => true,
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.species {
            Species::Atomic => write!(f, "S[{}.{}]", self.location, self.port),
            Species::Photonic => {
                let pol = match self.polarization {
                    Polarization::H => "H",
                    Polarization::V => "V",
                    Polarization::None => "-",
                };
                write!(
                    f,
                    "a[{}.{},{},bin{}]",
                    self.location, self.port, pol, self.time_bin
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_uses_every_field() {
        let a = ModeId::photon("A", "ch", Polarization::H, 1);
        assert_eq!(a, a.clone());
        assert_ne!(a, a.with_bin(0));
        assert_ne!(a, a.with_polarization(Polarization::V));
        assert_ne!(a, a.moved_to("B", "ch"));
    }

    #[test]
    fn atomic_modes_have_no_polarization_or_bin() {
        let s = ModeId::atomic("A", "u");
        assert!(s.is_well_formed());
        let bad = ModeId {
            time_bin: 2,
            ..s.clone()
        };
        assert!(!bad.is_well_formed());
    }
}
