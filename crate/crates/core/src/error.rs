use thiserror::Error;

use crate::mode::ModeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode registry is empty")]
    EmptyRegistry,

    #[error("mode {0} appears more than once in the registry")]
    DuplicateMode(ModeId),

    #[error("mode {0} is malformed (atomic modes carry no polarization or time bin)")]
    MalformedMode(ModeId),

    #[error("mode {0} is not in the registry")]
    UnknownMode(ModeId),

    #[error("registries differ: {0}")]
    RegistryMismatch(String),

    #[error("transform is not an isometry (max deviation {deviation:.3e})")]
    NotIsometric { deviation: f64 },

    #[error("transform shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mode {0} has no polarization label")]
    MissingPolarization(ModeId),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("measurement needs at least one mode")]
    EmptyMeasurement,

    #[error("detector mode sets overlap at {0}")]
    OverlappingDetectors(ModeId),

    #[error("parameter {name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("not a heralding pattern: {0}")]
    NotHeralding(String),

    #[error("no heralding events: success probability is zero")]
    NoHeraldEvents,

    #[error("links do not share a node: {0}")]
    LinksDisjoint(String),

    #[error("chain needs a power-of-two number of segments, got {0}")]
    NotPowerOfTwo(usize),

    #[error("post-selected subspace has zero weight")]
    EmptyPostSelection,

    #[error("swap output carries weight {0:.3e} above two end-node excitations")]
    ExcitationOverflow(f64),
}
