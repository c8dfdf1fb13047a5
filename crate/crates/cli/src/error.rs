use fivebar_haptics::device::DeviceError;
use fivebar_haptics::lab::LabError;
use fivebar_haptics::linkage::KinematicsError;
use fivebar_haptics::log::LogError;
use fivebar_haptics::pattern::{CatalogError, PatternError};
use fivebar_haptics::servo::{PlayError, ServoError};
use thiserror::Error;

/// Any failure that is the caller's input meeting the device or the
/// experiment rules, as opposed to a usage error.
#[derive(Debug, Error)]
pub enum DomainError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Servo(#[from] ServoError),
    #[error(transparent)]
    Play(#[from] PlayError),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("unknown catalog {0:?}")]
    UnknownCatalog(String),
    #[error("no {kind} pattern with id {id}")]
    UnknownPattern { kind: String, id: u32 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl DomainError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        DomainError::Io {
            path: path.into(),
            source,
        }
    }

    /// Variant name of the innermost domain error, used in service bodies.
    pub fn name(&self) -> &'static str {
        match self {
            DomainError::Kinematics(e) => kinematics_name(e),
            DomainError::Device(e) => device_name(e),
            DomainError::Catalog(CatalogError::Parse { .. }) => "CatalogParse",
            DomainError::Catalog(CatalogError::Validation(_)) => "CatalogValidation",
            DomainError::Pattern(PatternError::OutOfRange(_)) => "OutOfRange",
            DomainError::Pattern(PatternError::InvalidRate(_)) => "InvalidRate",
            DomainError::Pattern(PatternError::Unreachable { source, .. }) => device_name(source),
            DomainError::Servo(e) | DomainError::Play(PlayError::Servo(e)) => servo_name(e),
            DomainError::Play(PlayError::Transport { .. }) => "TransportError",
            DomainError::Lab(e) => e.name(),
            DomainError::Log(LogError::Lab { source, .. }) => source.name(),
            DomainError::Log(_) => "LogParse",
            DomainError::UnknownCatalog(_) => "UnknownCatalog",
            DomainError::UnknownPattern { .. } => "UnknownPattern",
            DomainError::Io { .. } => "Io",
        }
    }
}

fn kinematics_name(e: &KinematicsError) -> &'static str {
    match e {
        KinematicsError::InvalidGeometry(_) => "InvalidGeometry",
        KinematicsError::InvalidAngles { .. } => "InvalidAngles",
        KinematicsError::NoAssembly { .. } => "NoAssembly",
        KinematicsError::Unreachable(_) => "Unreachable",
        KinematicsError::OutsideJointRange(_) => "OutsideJointRange",
        KinematicsError::NearSingular => "NearSingular",
        KinematicsError::Singular { .. } => "Singular",
        KinematicsError::NoContactPose { .. } => "NoContactPose",
    }
}

fn device_name(e: &DeviceError) -> &'static str {
    match e {
        DeviceError::InvalidConfig(_) => "InvalidConfig",
        DeviceError::Parse { .. } => "ConfigParse",
        DeviceError::InvalidFinger => "InvalidFinger",
        DeviceError::OutOfRange(_) => "OutOfRange",
        DeviceError::TargetOutOfRange { .. } => "TargetOutOfRange",
        DeviceError::DuplicateTarget(_) => "DuplicateTarget",
        DeviceError::Kinematics { source, .. } => kinematics_name(source),
    }
}

fn servo_name(e: &ServoError) -> &'static str {
    match e {
        ServoError::InvalidSpec(_) => "InvalidSpec",
        ServoError::AngleOutOfRange { .. } => "AngleOutOfRange",
        ServoError::InvalidChannel(_) => "InvalidChannel",
        ServoError::PulseOutOfRange(_) => "PulseOutOfRange",
        ServoError::Malformed(_) => "Malformed",
    }
}
