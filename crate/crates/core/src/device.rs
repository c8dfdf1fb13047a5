//! Two linkages on one finger: configuration, per-user calibration and
//! validation of commanded contact targets.

use crate::linkage::{
    Branch, EffectorPose, ElbowConfig, JointAngles, KinematicsError, Linkage, LinkageGeometry,
    Point, SingularityMargins,
};
use crate::servo::ServoSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Step used when scanning a workspace row for the usable lateral span, mm.
const SPAN_SCAN_STEP: f64 = 0.05;
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviceError {
    #[error("invalid device config: {0}")]
    InvalidConfig(String),
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid finger profile: thickness and width must be positive")]
    InvalidFinger,
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("effector {effector} target out of range: {reason}")]
    TargetOutOfRange { effector: Effector, reason: String },
    #[error("effector {0} targeted more than once")]
    DuplicateTarget(Effector),
    #[error("effector {effector}: {source}")]
    Kinematics {
        effector: Effector,
        source: KinematicsError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Effector {
    A,
    B,
}

impl Effector {
    pub const BOTH: [Effector; 2] = [Effector::A, Effector::B];

    pub fn index(self) -> usize {
        match self {
            Effector::A => 0,
            Effector::B => 1,
        }
    }
}

impl std::fmt::Display for Effector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Effector::A => f.write_str("A"),
            Effector::B => f.write_str("B"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub path: String,
    pub baud: u32,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            path: "/dev/ttyUSB0".to_string(),
            baud: 115_200,
        }
    }
}

/// Whole-device configuration. Every field has a default, so a config file
/// only needs the keys it changes; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub linkage_a: LinkageGeometry,
    pub linkage_b: LinkageGeometry,
    /// Separation of the two effectors along the finger axis.
    pub spacer_mm: f64,
    /// Servos in the order A-left, A-right, B-left, B-right.
    pub servos: [ServoSpec; 4],
    /// Distance from the contact plane of a zero-thickness finger to the
    /// motor axis line; contact depth is `standoff + thickness / 2`.
    pub standoff_mm: f64,
    pub hover_gap_mm: f64,
    pub press_depth_max_mm: f64,
    pub contact_epsilon_mm: f64,
    pub margins: SingularityMargins,
    pub elbows: ElbowConfig,
    pub control_rate_hz: f64,
    /// Lead-in / lead-out ramp between hover and the stimulus.
    pub ramp_s: f64,
    pub transport: TransportConfig,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            linkage_a: LinkageGeometry::PROTOTYPE,
            linkage_b: LinkageGeometry::PROTOTYPE,
            spacer_mm: 26.0,
            servos: [0, 1, 2, 3].map(ServoSpec::hs40),
            standoff_mm: 14.5,
            hover_gap_mm: 3.0,
            press_depth_max_mm: 2.0,
            contact_epsilon_mm: 0.1,
            margins: SingularityMargins::default(),
            elbows: ElbowConfig::OUT_OUT,
            control_rate_hz: 50.0,
            ramp_s: 0.3,
            transport: TransportConfig::default(),
        }
    }
}

impl DeviceConfig {
    pub fn from_json(text: &str) -> Result<Self, DeviceError> {
        let cfg: DeviceConfig = serde_json::from_str(text).map_err(|e| DeviceError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let invalid = |m: &str| Err(DeviceError::InvalidConfig(m.to_string()));
        for g in [&self.linkage_a, &self.linkage_b] {
            g.validate()
                .map_err(|e| DeviceError::InvalidConfig(e.to_string()))?;
        }
        if !(self.spacer_mm > 0.0) {
            return invalid("spacer_mm must be positive");
        }
        if !(self.standoff_mm >= 0.0) || !(self.hover_gap_mm >= 0.0) {
            return invalid("standoff_mm and hover_gap_mm must be non-negative");
        }
        if !(self.press_depth_max_mm >= 0.0) || !(self.contact_epsilon_mm > 0.0) {
            return invalid("press_depth_max_mm must be >= 0 and contact_epsilon_mm > 0");
        }
        if !(self.control_rate_hz > 0.0) || !(self.ramp_s >= 0.0) {
            return invalid("control_rate_hz must be positive and ramp_s non-negative");
        }
        let mut channels: Vec<u8> = self.servos.iter().map(|s| s.channel).collect();
        channels.sort_unstable();
        channels.dedup();
        if channels.len() != 4 {
            return invalid("servo channels must be distinct");
        }
        for s in &self.servos {
            s.validate()
                .map_err(|e| DeviceError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn linkage(&self, effector: Effector) -> Linkage {
        let geometry = match effector {
            Effector::A => self.linkage_a,
            Effector::B => self.linkage_b,
        };
        Linkage {
            geometry,
            margins: self.margins,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerProfile {
    pub thickness_mm: f64,
    pub width_mm: f64,
}

impl FingerProfile {
    /// The finger the default standoff is tuned for.
    pub const REFERENCE: FingerProfile = FingerProfile {
        thickness_mm: 15.0,
        width_mm: 16.0,
    };

    pub fn validate(&self) -> Result<(), DeviceError> {
        if self.thickness_mm > 0.0 && self.width_mm > 0.0 {
            Ok(())
        } else {
            Err(DeviceError::InvalidFinger)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceCalibration {
    /// Contact depth H below the motor axis line.
    pub depth_mm: f64,
    /// Half-width of the usable lateral sweep.
    pub lateral_range_mm: f64,
    pub press_depth_max_mm: f64,
    pub contact_epsilon_mm: f64,
}

/// Contact depth for a finger: `standoff + thickness / 2`.
pub fn contact_depth(finger: &FingerProfile, standoff_mm: f64) -> f64 {
    standoff_mm + finger.thickness_mm / 2.0
}

/// Half-span of `[-x, x]` on the row `-depth` usable by every linkage at
/// every depth the device visits there (hover, contact, full press).
fn usable_half_span(cfg: &DeviceConfig, depth: f64) -> Option<f64> {
    let depths = [
        depth - cfg.hover_gap_mm,
        depth,
        depth + cfg.press_depth_max_mm,
    ];
    let mut span = f64::INFINITY;
    for effector in Effector::BOTH {
        let linkage = cfg.linkage(effector);
        for d in depths {
            span = span.min(linkage.reachable_half_span(-d, cfg.elbows, SPAN_SCAN_STEP)?);
        }
    }
    Some(span)
}

pub fn calibrate(
    finger: &FingerProfile,
    cfg: &DeviceConfig,
) -> Result<DeviceCalibration, DeviceError> {
    finger.validate()?;
    let depth = contact_depth(finger, cfg.standoff_mm);
    calibrate_with_depth(depth, finger.width_mm / 2.0, cfg)
}

/// Calibration from an explicit contact depth and requested lateral range;
/// the range is clipped to the workspace.
pub fn calibrate_with_depth(
    depth_mm: f64,
    lateral_range_mm: f64,
    cfg: &DeviceConfig,
) -> Result<DeviceCalibration, DeviceError> {
    let limit = usable_half_span(cfg, depth_mm).ok_or_else(|| {
        DeviceError::OutOfRange(format!("no symmetric contact pose at depth {depth_mm} mm"))
    })?;
    Ok(DeviceCalibration {
        depth_mm,
        lateral_range_mm: lateral_range_mm.max(0.0).min(limit),
        press_depth_max_mm: cfg.press_depth_max_mm,
        contact_epsilon_mm: cfg.contact_epsilon_mm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorTarget {
    pub effector: Effector,
    pub x: f64,
    /// 0 = surface contact, > 0 = indentation, < 0 = hover.
    pub press: f64,
}

impl EffectorTarget {
    pub fn point(&self, cal: &DeviceCalibration) -> Point {
        Point::new(self.x, -(cal.depth_mm + self.press))
    }
}

fn check_target(t: &EffectorTarget, cal: &DeviceCalibration) -> Result<(), DeviceError> {
    if !(t.x.abs() <= cal.lateral_range_mm + RANGE_SLACK) {
        return Err(DeviceError::TargetOutOfRange {
            effector: t.effector,
            reason: format!(
                "x = {} mm exceeds lateral range {} mm",
                t.x, cal.lateral_range_mm
            ),
        });
    }
    if !(t.press <= cal.press_depth_max_mm + RANGE_SLACK) {
        return Err(DeviceError::TargetOutOfRange {
            effector: t.effector,
            reason: format!(
                "press = {} mm exceeds {} mm",
                t.press, cal.press_depth_max_mm
            ),
        });
    }
    Ok(())
}

/// Joint angles for both linkages (A, B). Effectors not named in `targets`
/// go to the hover pose at `rest_x`.
pub fn device_targets_at(
    cal: &DeviceCalibration,
    cfg: &DeviceConfig,
    targets: &[EffectorTarget],
    rest_x: [f64; 2],
) -> Result<[JointAngles; 2], DeviceError> {
    let mut resolved: [Option<EffectorTarget>; 2] = [None, None];
    for t in targets {
        check_target(t, cal)?;
        let slot = &mut resolved[t.effector.index()];
        if slot.is_some() {
            return Err(DeviceError::DuplicateTarget(t.effector));
        }
        *slot = Some(*t);
    }
    let mut out = [JointAngles {
        left: 90.0,
        right: 90.0,
    }; 2];
    for effector in Effector::BOTH {
        let target = resolved[effector.index()].unwrap_or(EffectorTarget {
            effector,
            x: rest_x[effector.index()],
            press: -cfg.hover_gap_mm,
        });
        out[effector.index()] = cfg
            .linkage(effector)
            .inverse_kinematics(target.point(cal), cfg.elbows)
            .map_err(|source| DeviceError::Kinematics { effector, source })?;
    }
    Ok(out)
}

pub fn device_targets(
    cal: &DeviceCalibration,
    cfg: &DeviceConfig,
    targets: &[EffectorTarget],
) -> Result<[JointAngles; 2], DeviceError> {
    device_targets_at(cal, cfg, targets, [0.0, 0.0])
}

/// The hover pose both effectors rest in between stimuli.
pub fn hover_pose(cal: &DeviceCalibration, cfg: &DeviceConfig) -> EffectorPose {
    EffectorPose {
        x: 0.0,
        y: -(cal.depth_mm - cfg.hover_gap_mm),
        branch: Branch::Upper,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactState {
    Hover,
    Contact,
    Pressing,
}

pub fn contact_state(cal: &DeviceCalibration, pose: &EffectorPose) -> ContactState {
    let depth = -pose.y;
    let eps = cal.contact_epsilon_mm;
    if (depth - cal.depth_mm).abs() <= eps {
        ContactState::Contact
    } else if depth > cal.depth_mm + eps {
        ContactState::Pressing
    } else {
        ContactState::Hover
    }
}
