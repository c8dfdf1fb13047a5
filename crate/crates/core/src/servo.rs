//! Servo command layer: joint angle to pulse width, the ASCII wire
//! protocol, byte transports and fixed-rate schedule playback.
//!
//! Wire protocol, one command per line:
//!
//! ```text
//! P <channel> <pulse_us>\n   set one servo pulse width
//! H\n                        home all servos
//! S\n                        stop / relax all servos
//! ```

use crate::pattern::{JointEntry, JointSchedule};
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Number of servo channels on the device.
pub const CHANNELS: u8 = 4;
/// Pulse widths the wire protocol accepts, microseconds.
pub const WIRE_PULSE_RANGE: RangeInclusive<u32> = 500..=2500;
/// HS-40 stall torque, 0.6 kgf·cm in N·m.
pub const HS40_STALL_TORQUE_NM: f64 = 0.6 * 9.80665 * 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServoError {
    #[error("invalid servo spec: {0}")]
    InvalidSpec(String),
    #[error("channel {channel}: servo angle {theta:.3} deg outside [{min}, {max}]")]
    AngleOutOfRange {
        channel: u8,
        theta: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid channel {0}")]
    InvalidChannel(u8),
    #[error("pulse {0} us outside the wire range")]
    PulseOutOfRange(u32),
    #[error("malformed frame: {0:?}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoSpec {
    pub channel: u8,
    pub pulse_min_us: u32,
    pub pulse_max_us: u32,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub mount_offset_deg: f64,
    /// +1 or -1.
    pub direction: i8,
    pub stall_torque_nm: f64,
}

impl Default for ServoSpec {
    fn default() -> Self {
        Self::hs40(0)
    }
}

impl ServoSpec {
    /// Nominal HS-40 map, 600..2400 us over 0..180 deg.
    pub fn hs40(channel: u8) -> Self {
        Self {
            channel,
            pulse_min_us: 600,
            pulse_max_us: 2400,
            angle_min_deg: 0.0,
            angle_max_deg: 180.0,
            mount_offset_deg: 0.0,
            direction: 1,
            stall_torque_nm: HS40_STALL_TORQUE_NM,
        }
    }

    pub fn validate(&self) -> Result<(), ServoError> {
        let bad = |m: String| Err(ServoError::InvalidSpec(m));
        if self.channel >= CHANNELS {
            return bad(format!("channel {} >= {CHANNELS}", self.channel));
        }
        if self.pulse_min_us >= self.pulse_max_us {
            return bad("pulse_min_us must be below pulse_max_us".into());
        }
        if !WIRE_PULSE_RANGE.contains(&self.pulse_min_us)
            || !WIRE_PULSE_RANGE.contains(&self.pulse_max_us)
        {
            return bad("pulse range must lie within 500..=2500 us".into());
        }
        if !(self.angle_min_deg < self.angle_max_deg) {
            return bad("angle_min_deg must be below angle_max_deg".into());
        }
        if self.direction != 1 && self.direction != -1 {
            return bad("direction must be +1 or -1".into());
        }
        Ok(())
    }

    /// Servo shaft angle for an interior linkage angle: `dir (180 - alpha) + offset`.
    pub fn servo_angle(&self, alpha_deg: f64) -> f64 {
        f64::from(self.direction) * (180.0 - alpha_deg) + self.mount_offset_deg
    }

    pub fn pulse_for_servo_angle(&self, theta: f64) -> Result<u32, ServoError> {
        const SLACK: f64 = 1e-9;
        if !(theta >= self.angle_min_deg - SLACK && theta <= self.angle_max_deg + SLACK) {
            return Err(ServoError::AngleOutOfRange {
                channel: self.channel,
                theta,
                min: self.angle_min_deg,
                max: self.angle_max_deg,
            });
        }
        let span = self.angle_max_deg - self.angle_min_deg;
        let frac = ((theta - self.angle_min_deg) / span).clamp(0.0, 1.0);
        let width = f64::from(self.pulse_max_us - self.pulse_min_us);
        Ok(self.pulse_min_us + (frac * width).round() as u32)
    }
}

pub fn angle_to_pulse(spec: &ServoSpec, alpha_deg: f64) -> Result<u32, ServoError> {
    spec.pulse_for_servo_angle(spec.servo_angle(alpha_deg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Pulse { channel: u8, pulse_us: u32 },
    Home,
    Stop,
}

/// Bytes of one encoded command line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WireFrame(Vec<u8>);

impl WireFrame {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl Command {
    pub fn encode(&self) -> Result<WireFrame, ServoError> {
        match *self {
            Command::Pulse { channel, pulse_us } => encode_frame(channel, pulse_us),
            Command::Home => Ok(WireFrame(b"H\n".to_vec())),
            Command::Stop => Ok(WireFrame(b"S\n".to_vec())),
        }
    }
}

pub fn encode_frame(channel: u8, pulse_us: u32) -> Result<WireFrame, ServoError> {
    if channel >= CHANNELS {
        return Err(ServoError::InvalidChannel(channel));
    }
    if !WIRE_PULSE_RANGE.contains(&pulse_us) {
        return Err(ServoError::PulseOutOfRange(pulse_us));
    }
    Ok(WireFrame(format!("P {channel} {pulse_us}\n").into_bytes()))
}

/// Decodes exactly one newline-terminated command.
pub fn decode_frame(bytes: &[u8]) -> Result<Command, ServoError> {
    let malformed = || ServoError::Malformed(String::from_utf8_lossy(bytes).into_owned());
    let line = bytes.strip_suffix(b"\n").ok_or_else(malformed)?;
    let text = std::str::from_utf8(line).map_err(|_| malformed())?;
    match text {
        "H" => return Ok(Command::Home),
        "S" => return Ok(Command::Stop),
        _ => {}
    }
    let mut parts = text.split(' ');
    let (Some("P"), Some(ch), Some(pulse), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(malformed());
    };
    let canonical = |s: &str| {
        !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'))
    };
    if !canonical(ch) || !canonical(pulse) {
        return Err(malformed());
    }
    let channel: u8 = ch.parse().map_err(|_| malformed())?;
    let pulse_us: u32 = pulse.parse().map_err(|_| malformed())?;
    if channel >= CHANNELS {
        return Err(ServoError::InvalidChannel(channel));
    }
    if !WIRE_PULSE_RANGE.contains(&pulse_us) {
        return Err(ServoError::PulseOutOfRange(pulse_us));
    }
    Ok(Command::Pulse { channel, pulse_us })
}

/// Decodes a captured byte stream line by line.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<Command>, ServoError> {
    bytes
        .split_inclusive(|&b| b == b'\n')
        .map(decode_frame)
        .collect()
}

pub trait Transport: Send {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;
}

/// In-memory transport capturing every byte written.
#[derive(Debug, Default, Clone)]
pub struct Loopback {
    captured: Vec<u8>,
    fail_after_writes: Option<usize>,
    writes: usize,
}

impl Loopback {
    pub fn new() -> Self {
        Self::default()
    }

    /// A loopback whose writes start failing after `n` successful ones.
    pub fn failing_after(n: usize) -> Self {
        Self {
            fail_after_writes: Some(n),
            ..Self::default()
        }
    }

    pub fn captured(&self) -> &[u8] {
        &self.captured
    }

    pub fn take(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.captured)
    }
}

impl Transport for Loopback {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        if self.fail_after_writes.is_some_and(|n| self.writes >= n) {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "loopback closed"));
        }
        self.writes += 1;
        self.captured.extend_from_slice(bytes);
        Ok(())
    }
}

/// Writes frames to a character device (a serial adapter already configured
/// for the baud rate, e.g. with `stty`) or any other file.
pub struct DeviceFile {
    file: std::fs::File,
}

impl DeviceFile {
    pub fn open(path: &str) -> io::Result<Self> {
        let file = std::fs::OpenOptions::new().write(true).open(path)?;
        Ok(Self { file })
    }
}

impl Transport for DeviceFile {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.file.write_all(bytes)?;
        self.file.flush()
    }
}

pub trait Clock: Send {
    /// Time since the clock's epoch.
    fn now(&self) -> Duration;
    fn sleep_until(&mut self, deadline: Duration);
}

/// Clock that jumps straight to each deadline.
#[derive(Debug, Default, Clone)]
pub struct VirtualClock {
    now: Duration,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        self.now
    }

    fn sleep_until(&mut self, deadline: Duration) {
        self.now = self.now.max(deadline);
    }
}

#[derive(Debug, Clone)]
pub struct WallClock {
    epoch: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        Self {
            epoch: Instant::now(),
        }
    }
}

impl WallClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for WallClock {
    fn now(&self) -> Duration {
        self.epoch.elapsed()
    }

    fn sleep_until(&mut self, deadline: Duration) {
        let now = self.now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlaybackReport {
    pub frames_sent: u64,
    pub ticks_sent: u64,
    /// Seconds from the first to the last tick as actually sent.
    pub duration_s: f64,
    pub max_jitter_s: f64,
    pub underruns: u64,
    pub cancelled: bool,
}

#[derive(Debug, Error)]
pub enum PlayError {
    #[error(transparent)]
    Servo(#[from] ServoError),
    #[error("transport failed after {} frames: {source}", report.frames_sent)]
    Transport {
        report: PlaybackReport,
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaybackEvent<'a> {
    Tick { index: usize, entry: &'a JointEntry },
    Finished(&'a PlaybackReport),
}

/// Pulse widths for one schedule entry in servo order.
pub fn entry_pulses(entry: &JointEntry, specs: &[ServoSpec; 4]) -> Result<[u32; 4], ServoError> {
    let alphas = [
        entry.angles[0].left,
        entry.angles[0].right,
        entry.angles[1].left,
        entry.angles[1].right,
    ];
    let mut out = [0; 4];
    for ((slot, spec), alpha) in out.iter_mut().zip(specs).zip(alphas) {
        *slot = angle_to_pulse(spec, alpha)?;
    }
    Ok(out)
}

/// All four channel frames of one tick, concatenated.
pub fn tick_bytes(pulses: &[u32; 4], specs: &[ServoSpec; 4]) -> Result<Vec<u8>, ServoError> {
    let mut out = Vec::with_capacity(4 * 12);
    for (spec, &pulse) in specs.iter().zip(pulses) {
        out.extend_from_slice(encode_frame(spec.channel, pulse)?.as_bytes());
    }
    Ok(out)
}

/// Streams a schedule, one tick (four frames, one write) per entry at the
/// entry's timestamp relative to the first entry.
///
/// Every entry is converted to pulses before the first byte goes out. The
/// cancel flag is checked once per tick.
pub fn play(
    schedule: &JointSchedule,
    specs: &[ServoSpec; 4],
    transport: &mut dyn Transport,
    clock: &mut dyn Clock,
    cancel: Option<&AtomicBool>,
    observer: &mut dyn FnMut(PlaybackEvent<'_>),
) -> Result<PlaybackReport, PlayError> {
    let ticks: Vec<Vec<u8>> = schedule
        .entries
        .iter()
        .map(|e| entry_pulses(e, specs).and_then(|p| tick_bytes(&p, specs)))
        .collect::<Result<_, _>>()?;

    let mut report = PlaybackReport::default();
    let Some(first) = schedule.entries.first() else {
        observer(PlaybackEvent::Finished(&report));
        return Ok(report);
    };
    let period = 1.0 / schedule.rate_hz;
    let start = clock.now();
    let mut first_sent = None;
    for (index, (entry, bytes)) in schedule.entries.iter().zip(&ticks).enumerate() {
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            report.cancelled = true;
            break;
        }
        let offset = (entry.t - first.t).max(0.0);
        let ideal = start + Duration::from_secs_f64(offset);
        clock.sleep_until(ideal);
        let now = clock.now();
        let late = now.as_secs_f64() - ideal.as_secs_f64();
        report.max_jitter_s = report.max_jitter_s.max(late.abs());
        if late > period {
            report.underruns += 1;
        }
        if let Err(source) = transport.send(bytes) {
            return Err(PlayError::Transport { report, source });
        }
        let sent_at = now.as_secs_f64();
        let first_at = *first_sent.get_or_insert(sent_at);
        report.duration_s = sent_at - first_at;
        report.ticks_sent += 1;
        report.frames_sent += u64::from(CHANNELS);
        observer(PlaybackEvent::Tick { index, entry });
    }
    observer(PlaybackEvent::Finished(&report));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_endpoints() {
        let spec = ServoSpec::hs40(0);
        assert_eq!(spec.pulse_for_servo_angle(90.0), Ok(1500));
        assert_eq!(spec.pulse_for_servo_angle(0.0), Ok(600));
        assert_eq!(spec.pulse_for_servo_angle(180.0), Ok(2400));
        assert_eq!(angle_to_pulse(&spec, 84.0), Ok(1560));
        assert!(matches!(
            spec.pulse_for_servo_angle(181.0),
            Err(ServoError::AngleOutOfRange { .. })
        ));
    }

    #[test]
    fn offset_and_direction() {
        let spec = ServoSpec {
            direction: -1,
            mount_offset_deg: 180.0,
            ..ServoSpec::hs40(1)
        };
        // theta = -(180 - 84) + 180 = 84
        assert_eq!(spec.servo_angle(84.0), 84.0);
        assert_eq!(angle_to_pulse(&spec, 84.0), Ok(1440));
        let narrow = ServoSpec {
            angle_min_deg: 30.0,
            angle_max_deg: 150.0,
            ..ServoSpec::hs40(2)
        };
        assert!(angle_to_pulse(&narrow, 170.0).is_err());
        assert_eq!(narrow.pulse_for_servo_angle(30.0), Ok(600));
    }

    #[test]
    fn frame_format() {
        assert_eq!(encode_frame(0, 1500).unwrap().as_bytes(), b"P 0 1500\n");
        assert_eq!(encode_frame(7, 1500), Err(ServoError::InvalidChannel(7)));
        assert_eq!(
            encode_frame(1, 3000),
            Err(ServoError::PulseOutOfRange(3000))
        );
        assert_eq!(decode_frame(b"H\n"), Ok(Command::Home));
        assert_eq!(decode_frame(b"S\n"), Ok(Command::Stop));
        assert_eq!(Command::Stop.encode().unwrap().as_bytes(), b"S\n");
        for bad in [
            &b"P 0 1500"[..],
            b"P 0  1500\n",
            b"P 0 +1500\n",
            b"Q 0 1500\n",
            b"P 0 1500 1\n",
        ] {
            assert!(
                matches!(decode_frame(bad), Err(ServoError::Malformed(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ServoSpec::hs40(0).validate().is_ok());
        assert!(ServoSpec {
            pulse_min_us: 2400,
            pulse_max_us: 600,
            ..ServoSpec::hs40(0)
        }
        .validate()
        .is_err());
        assert!(ServoSpec {
            angle_min_deg: 10.0,
            angle_max_deg: 10.0,
            ..ServoSpec::hs40(0)
        }
        .validate()
        .is_err());
        assert!(ServoSpec {
            direction: 0,
            ..ServoSpec::hs40(0)
        }
        .validate()
        .is_err());
        assert!(ServoSpec::hs40(4).validate().is_err());
    }

    #[test]
    fn stall_torque_conversion() {
        assert!((HS40_STALL_TORQUE_NM - 0.0588).abs() < 1e-4);
    }
}
