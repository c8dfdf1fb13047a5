//! Tactile patterns: catalogs of static contact layouts and slippage
//! sweeps, compiled to fixed-rate effector trajectories and joint schedules.

use crate::device::{
    device_targets_at, DeviceCalibration, DeviceConfig, DeviceError, Effector, EffectorTarget,
};
use crate::linkage::{JointAngles, Point};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speeds of the default slippage catalog, mm/s.
pub const DEFAULT_SPEEDS_MM_S: [f64; 3] = [43.0, 60.0, 86.0];
pub const DEFAULT_HOLD_S: f64 = 3.0;
pub const DEFAULT_SPAN_MM: f64 = 10.0;

pub const DEFAULT_STATIC_JSON: &str = include_str!("../catalogs/static.json");
pub const DEFAULT_SLIPPAGE_JSON: &str = include_str!("../catalogs/slippage.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("catalog parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("catalog validation failed: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatternError {
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid control rate {0} Hz")]
    InvalidRate(f64),
    #[error("sample {index}, effector {effector}: {source}")]
    Unreachable {
        index: usize,
        effector: Effector,
        source: DeviceError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Left,
    Center,
    Right,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Left, Slot::Center, Slot::Right];

    pub fn x(self, lateral_range_mm: f64) -> f64 {
        match self {
            Slot::Left => -lateral_range_mm / 2.0,
            Slot::Center => 0.0,
            Slot::Right => lateral_range_mm / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticPattern {
    pub id: u32,
    pub a_slot: Slot,
    pub b_slot: Slot,
    pub press_mm: f64,
    pub hold_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl Direction {
    /// +1 for left to right.
    pub fn sign(self) -> f64 {
        match self {
            Direction::LeftToRight => 1.0,
            Direction::RightToLeft => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// mm/s, one of the catalog's speed set.
    pub speed: f64,
    pub dir: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlippagePattern {
    pub id: u32,
    pub a: Sweep,
    pub b: Sweep,
    pub span_mm: f64,
}

impl SlippagePattern {
    pub fn sweep(&self, effector: Effector) -> Sweep {
        match effector {
            Effector::A => self.a,
            Effector::B => self.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternCatalog {
    #[serde(default = "default_catalog_name")]
    pub name: String,
    pub speed_set_mm_s: Vec<f64>,
    #[serde(rename = "static", default)]
    pub static_patterns: Vec<StaticPattern>,
    #[serde(default)]
    pub slippage: Vec<SlippagePattern>,
}

fn default_catalog_name() -> String {
    "custom".to_string()
}

/// Which half of a catalog an experiment draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Static,
    Slippage,
}

impl std::fmt::Display for PatternKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PatternKind::Static => "static",
            PatternKind::Slippage => "slippage",
        })
    }
}

fn check_dense(ids: impl Iterator<Item = u32>, what: &str) -> Result<(), CatalogError> {
    let mut ids: Vec<u32> = ids.collect();
    ids.sort_unstable();
    for (expected, id) in (1u32..).zip(&ids) {
        if *id == expected {
            continue;
        }
        let message = if ids.iter().filter(|&&x| x == *id).count() > 1 {
            format!("duplicate {what} id {id}")
        } else {
            format!("{what} ids must be dense from 1; expected {expected}, found {id}")
        };
        return Err(CatalogError::Validation(message));
    }
    Ok(())
}

impl PatternCatalog {
    pub fn validate(&self) -> Result<(), CatalogError> {
        let fail = |m: String| Err(CatalogError::Validation(m));
        if self
            .speed_set_mm_s
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return fail("speed set entries must be positive".into());
        }
        check_dense(self.static_patterns.iter().map(|p| p.id), "static")?;
        check_dense(self.slippage.iter().map(|p| p.id), "slippage")?;
        for p in &self.static_patterns {
            if !p.press_mm.is_finite() || !(p.hold_s > 0.0 && p.hold_s.is_finite()) {
                return fail(format!(
                    "static pattern {}: press must be finite and hold positive",
                    p.id
                ));
            }
        }
        for p in &self.slippage {
            if !(p.span_mm >= 0.0 && p.span_mm.is_finite()) {
                return fail(format!(
                    "slippage pattern {}: span must be non-negative",
                    p.id
                ));
            }
            for sweep in [p.a, p.b] {
                if !self.speed_set_mm_s.contains(&sweep.speed) {
                    return fail(format!(
                        "slippage pattern {}: speed {} not in the declared speed set",
                        p.id, sweep.speed
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes") + "\n"
    }

    pub fn ids(&self, kind: PatternKind) -> Vec<u32> {
        match kind {
            PatternKind::Static => self.static_patterns.iter().map(|p| p.id).collect(),
            PatternKind::Slippage => self.slippage.iter().map(|p| p.id).collect(),
        }
    }

    pub fn static_pattern(&self, id: u32) -> Option<&StaticPattern> {
        self.static_patterns.iter().find(|p| p.id == id)
    }

    pub fn slippage_pattern(&self, id: u32) -> Option<&SlippagePattern> {
        self.slippage.iter().find(|p| p.id == id)
    }
}

pub fn load_catalog(bytes: &[u8]) -> Result<PatternCatalog, CatalogError> {
    let catalog: PatternCatalog =
        serde_json::from_slice(bytes).map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    catalog.validate()?;
    Ok(catalog)
}

/// Nine static patterns: every (A slot, B slot) pair, ids row-major with A
/// as the row, slots ordered Left, Center, Right.
pub fn default_static_catalog() -> PatternCatalog {
    let static_patterns = Slot::ALL
        .iter()
        .flat_map(|&a| Slot::ALL.iter().map(move |&b| (a, b)))
        .zip(1..)
        .map(|((a_slot, b_slot), id)| StaticPattern {
            id,
            a_slot,
            b_slot,
            press_mm: 0.0,
            hold_s: DEFAULT_HOLD_S,
        })
        .collect();
    PatternCatalog {
        name: "default-static".to_string(),
        speed_set_mm_s: DEFAULT_SPEEDS_MM_S.to_vec(),
        static_patterns,
        slippage: Vec::new(),
    }
}

/// Five slippage patterns; 2 and 3 drive the effectors at different
/// speeds, the others at equal speeds, and 5 sweeps them in opposite
/// directions (twist).
pub fn default_slippage_catalog() -> PatternCatalog {
    use Direction::*;
    let [slow, middle, fast] = DEFAULT_SPEEDS_MM_S;
    let sweep = |speed, dir| Sweep { speed, dir };
    let table = [
        (sweep(slow, LeftToRight), sweep(slow, LeftToRight)),
        (sweep(fast, LeftToRight), sweep(slow, LeftToRight)),
        (sweep(slow, RightToLeft), sweep(middle, RightToLeft)),
        (sweep(middle, RightToLeft), sweep(middle, RightToLeft)),
        (sweep(fast, LeftToRight), sweep(fast, RightToLeft)),
    ];
    let slippage = table
        .into_iter()
        .zip(1..)
        .map(|((a, b), id)| SlippagePattern {
            id,
            a,
            b,
            span_mm: DEFAULT_SPAN_MM,
        })
        .collect();
    PatternCatalog {
        name: "default-slippage".to_string(),
        speed_set_mm_s: DEFAULT_SPEEDS_MM_S.to_vec(),
        static_patterns: Vec::new(),
        slippage,
    }
}

pub fn static_targets(
    p: &StaticPattern,
    cal: &DeviceCalibration,
) -> Result<[EffectorTarget; 2], PatternError> {
    if p.press_mm > cal.press_depth_max_mm {
        return Err(PatternError::OutOfRange(format!(
            "press {} mm exceeds {} mm",
            p.press_mm, cal.press_depth_max_mm
        )));
    }
    Ok([
        EffectorTarget {
            effector: Effector::A,
            x: p.a_slot.x(cal.lateral_range_mm),
            press: p.press_mm,
        },
        EffectorTarget {
            effector: Effector::B,
            x: p.b_slot.x(cal.lateral_range_mm),
            press: p.press_mm,
        },
    ])
}

/// Lateral position and depth below the motor axis of one effector, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorSample {
    pub x: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub effectors: [EffectorSample; 2],
}

/// Uniformly clocked effector path: sample `k` is at `t = k / rate_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rate_hz: f64,
    pub samples: Vec<TrajectorySample>,
}

fn check_rate(rate_hz: f64) -> Result<(), PatternError> {
    if rate_hz > 0.0 && rate_hz.is_finite() {
        Ok(())
    } else {
        Err(PatternError::InvalidRate(rate_hz))
    }
}

/// Both effectors held at the pattern's slots for its hold time.
pub fn static_trajectory(
    p: &StaticPattern,
    cal: &DeviceCalibration,
    rate_hz: f64,
) -> Result<Trajectory, PatternError> {
    check_rate(rate_hz)?;
    let targets = static_targets(p, cal)?;
    let at = targets.map(|t| EffectorSample {
        x: t.x,
        depth: cal.depth_mm + t.press,
    });
    let count = (p.hold_s * rate_hz).round() as usize;
    let samples = (0..count)
        .map(|k| TrajectorySample {
            t: k as f64 / rate_hz,
            effectors: at,
        })
        .collect();
    Ok(Trajectory { rate_hz, samples })
}

/// Whole control periods needed to cover `duration_s`.
fn periods(duration_s: f64, rate_hz: f64) -> usize {
    (duration_s * rate_hz - 1e-9).ceil().max(0.0) as usize
}

/// Both effectors sweep their span at contact depth, starting together at
/// `t = 0`; the trajectory ends when the slower one arrives and the faster
/// one holds its end position meanwhile.
pub fn slippage_trajectory(
    p: &SlippagePattern,
    cal: &DeviceCalibration,
    rate_hz: f64,
) -> Result<Trajectory, PatternError> {
    check_rate(rate_hz)?;
    if !(p.span_mm >= 0.0) || p.span_mm > 2.0 * cal.lateral_range_mm + 1e-9 {
        return Err(PatternError::OutOfRange(format!(
            "span {} mm exceeds twice the lateral range {} mm",
            p.span_mm, cal.lateral_range_mm
        )));
    }
    let sweeps = [p.a, p.b];
    if sweeps.iter().any(|s| !(s.speed > 0.0)) {
        return Err(PatternError::OutOfRange(
            "sweep speed must be positive".into(),
        ));
    }
    let n = sweeps
        .iter()
        .map(|s| periods(p.span_mm / s.speed, rate_hz))
        .max()
        .unwrap_or(0);
    let samples = (0..=n)
        .map(|k| {
            let t = k as f64 / rate_hz;
            let effectors = sweeps.map(|s| {
                let start = -s.dir.sign() * p.span_mm / 2.0;
                let travelled = (s.speed * k as f64 / rate_hz).min(p.span_mm);
                EffectorSample {
                    x: start + s.dir.sign() * travelled,
                    depth: cal.depth_mm,
                }
            });
            TrajectorySample { t, effectors }
        })
        .collect();
    Ok(Trajectory { rate_hz, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    LeadIn,
    Stimulus,
    LeadOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub t: f64,
    pub phase: Phase,
    /// Commanded effector positions (A, B).
    pub points: [Point; 2],
    /// Joint angles of linkage A and linkage B.
    pub angles: [JointAngles; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSchedule {
    pub rate_hz: f64,
    pub entries: Vec<JointEntry>,
}

fn solve(
    cfg: &DeviceConfig,
    cal: &DeviceCalibration,
    index: usize,
    effectors: [EffectorSample; 2],
    phase: Phase,
    t: f64,
) -> Result<JointEntry, PatternError> {
    let targets = [Effector::A, Effector::B].map(|effector| {
        let s = effectors[effector.index()];
        EffectorTarget {
            effector,
            x: s.x,
            press: s.depth - cal.depth_mm,
        }
    });
    let angles = device_targets_at(cal, cfg, &targets, [0.0, 0.0]).map_err(|source| {
        let effector = match &source {
            DeviceError::Kinematics { effector, .. }
            | DeviceError::TargetOutOfRange { effector, .. }
            | DeviceError::DuplicateTarget(effector) => *effector,
            _ => Effector::A,
        };
        PatternError::Unreachable {
            index,
            effector,
            source,
        }
    })?;
    Ok(JointEntry {
        t,
        phase,
        points: targets.map(|t| t.point(cal)),
        angles,
    })
}

fn lerp(from: EffectorSample, to: EffectorSample, f: f64) -> EffectorSample {
    EffectorSample {
        x: from.x + (to.x - from.x) * f,
        depth: from.depth + (to.depth - from.depth) * f,
    }
}

/// One IK solve per sample and linkage, on the trajectory's own clock, with
/// linear task-space ramps of `ramp_s` from hover before the first sample
/// (at negative times) and back to hover after the last.
pub fn compile_schedule(
    traj: &Trajectory,
    cfg: &DeviceConfig,
    cal: &DeviceCalibration,
    ramp_s: f64,
) -> Result<JointSchedule, PatternError> {
    check_rate(traj.rate_hz)?;
    let rate = traj.rate_hz;
    let ramp = (ramp_s.max(0.0) * rate).round() as usize;
    let hover_depth = cal.depth_mm - cfg.hover_gap_mm;
    let hover_of = |s: EffectorSample| EffectorSample {
        x: s.x,
        depth: hover_depth,
    };
    let rest = EffectorSample {
        x: 0.0,
        depth: hover_depth,
    };

    let first = traj.samples.first();
    let last = traj.samples.last();
    let start = first.map_or([rest; 2], |s| s.effectors);
    let end = last.map_or([rest; 2], |s| s.effectors);
    let t0 = first.map_or(0.0, |s| s.t);
    let t_end = last.map_or(-1.0 / rate, |s| s.t);

    let mut entries = Vec::with_capacity(traj.samples.len() + 2 * ramp);
    let mut index = 0;
    for k in 0..ramp {
        let f = k as f64 / ramp as f64;
        let at = [0, 1].map(|i| lerp(hover_of(start[i]), start[i], f));
        let t = t0 - (ramp - k) as f64 / rate;
        entries.push(solve(cfg, cal, index, at, Phase::LeadIn, t)?);
        index += 1;
    }
    for s in &traj.samples {
        entries.push(solve(cfg, cal, index, s.effectors, Phase::Stimulus, s.t)?);
        index += 1;
    }
    for k in 1..=ramp {
        let f = k as f64 / ramp as f64;
        let at = [0, 1].map(|i| lerp(end[i], hover_of(end[i]), f));
        let t = t_end + k as f64 / rate;
        entries.push(solve(cfg, cal, index, at, Phase::LeadOut, t)?);
        index += 1;
    }
    Ok(JointSchedule {
        rate_hz: rate,
        entries,
    })
}

/// Trajectory for pattern `id` of the given kind.
pub fn pattern_trajectory(
    catalog: &PatternCatalog,
    kind: PatternKind,
    id: u32,
    cal: &DeviceCalibration,
    rate_hz: f64,
) -> Result<Trajectory, PatternError> {
    let missing = || PatternError::OutOfRange(format!("no {kind} pattern with id {id}"));
    match kind {
        PatternKind::Static => static_trajectory(
            catalog.static_pattern(id).ok_or_else(missing)?,
            cal,
            rate_hz,
        ),
        PatternKind::Slippage => slippage_trajectory(
            catalog.slippage_pattern(id).ok_or_else(missing)?,
            cal,
            rate_hz,
        ),
    }
}
