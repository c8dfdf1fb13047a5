//! Argument parsing and the non-service subcommands.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use chrono::Utc;
use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use fivebar_haptics::device::{Effector, FingerProfile};
use fivebar_haptics::lab::{build_schedule, TrialSession};
use fivebar_haptics::linkage::{Bounds, Point};
use fivebar_haptics::log::{read_sessions, LogRecord, LogWriter};
use fivebar_haptics::pattern::{JointSchedule, PatternKind};
use fivebar_haptics::report::build_report;
use fivebar_haptics::servo::{
    play, Clock, DeviceFile, Loopback, PlaybackReport, Transport, VirtualClock, WallClock,
};

use crate::error::DomainError;
use crate::rig::Rig;
use crate::service::{self, ServiceOptions};

#[derive(Debug, Parser)]
#[command(
    name = "fivebar",
    version,
    about = "Five-bar fingertip haptic display toolkit"
)]
pub struct Cli {
    /// Device config file (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Use the loopback transport and a virtual clock instead of hardware.
    #[arg(long, global = true, action = ArgAction::Set, num_args = 0..=1,
          default_value_t = true, default_missing_value = "true")]
    pub simulate: bool,
    /// Service port.
    #[arg(long, global = true, default_value_t = 7430)]
    pub port: u16,
    /// Seed for trial schedules.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Static pattern catalog (JSON); built-in when omitted.
    #[arg(long, global = true)]
    pub static_catalog: Option<String>,
    /// Slippage pattern catalog (JSON); built-in when omitted.
    #[arg(long, global = true)]
    pub slippage_catalog: Option<String>,
    #[arg(long, global = true, default_value_t = FingerProfile::REFERENCE.thickness_mm)]
    pub finger_thickness: f64,
    #[arg(long, global = true, default_value_t = FingerProfile::REFERENCE.width_mm)]
    pub finger_width: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MapFormat {
    Csv,
    Pgm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EffectorArg {
    A,
    B,
}

impl From<EffectorArg> for Effector {
    fn from(e: EffectorArg) -> Self {
        match e {
            EffectorArg::A => Effector::A,
            EffectorArg::B => Effector::B,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Static,
    Slippage,
}

impl From<KindArg> for PatternKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Static => PatternKind::Static,
            KindArg::Slippage => PatternKind::Slippage,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reachability map of one linkage.
    Workspace {
        #[arg(long, value_enum, default_value = "csv")]
        format: MapFormat,
        #[arg(long, value_enum, default_value = "a")]
        effector: EffectorArg,
        /// Grid resolution, mm.
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint angles for an effector position (mm).
    #[command(allow_negative_numbers = true)]
    Ik {
        x: f64,
        y: f64,
        #[arg(long, value_enum, default_value = "a")]
        effector: EffectorArg,
    },
    /// Normal force of the symmetric contact pose.
    Force {
        /// Contact depth below the motor axis, mm; calibrated depth by default.
        #[arg(long)]
        depth: Option<f64>,
        /// Motor torque, N m; the configured stall torque by default.
        #[arg(long)]
        torque: Option<f64>,
    },
    /// Pattern playback.
    Pattern {
        #[command(subcommand)]
        action: PatternCommand,
    },
    /// Perception experiment sessions.
    Experiment {
        #[command(subcommand)]
        action: ExperimentCommand,
    },
    /// Confusion matrix, recognition rates and ANOVA from session logs.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Local HTTP service for the operator console.
    Serve {
        /// Append the session log to this file as well.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum PatternCommand {
    /// Play one pattern and wait for it to finish.
    Play {
        id: u32,
        #[arg(long, value_enum, default_value = "static")]
        kind: KindArg,
        /// Write the bytes sent on the wire to this file (simulation only).
        #[arg(long)]
        capture: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Interactive session: plays each trial and reads the answer from stdin.
    Run {
        #[arg(long, default_value = "static")]
        catalog: String,
        #[arg(long, default_value_t = 5)]
        reps: u32,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        log: PathBuf,
    },
}

pub struct Streams<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, io: &mut Streams<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(io.stderr, "{text}");
                2
            } else {
                let _ = write!(io.stdout, "{text}");
                0
            };
        }
    };
    match execute(&cli, io) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e}");
            1
        }
    }
}

pub fn rig_from(cli: &Cli) -> Result<Rig, DomainError> {
    let defaults = Rig::default();
    let cfg = match &cli.config {
        Some(path) => Rig::load_config(path)?,
        None => defaults.cfg,
    };
    let static_catalog = match &cli.static_catalog {
        Some(path) => Rig::load_catalog(path)?,
        None => defaults.static_catalog,
    };
    let slippage_catalog = match &cli.slippage_catalog {
        Some(path) => Rig::load_catalog(path)?,
        None => defaults.slippage_catalog,
    };
    let finger = FingerProfile {
        thickness_mm: cli.finger_thickness,
        width_mm: cli.finger_width,
    };
    Rig::new(cfg, finger, static_catalog, slippage_catalog)
}

fn out_err(e: std::io::Error) -> DomainError {
    DomainError::io("<stdout>", e)
}

fn execute(cli: &Cli, io: &mut Streams<'_>) -> Result<(), DomainError> {
    let rig = rig_from(cli)?;
    match &cli.command {
        Command::Workspace {
            format,
            effector,
            step,
            out,
        } => {
            let linkage = rig.cfg.linkage((*effector).into());
            let g = linkage.geometry;
            let r = g.l1 + g.l2;
            let bounds = Bounds {
                x_min: -(g.d / 2.0 + r),
                x_max: g.d / 2.0 + r,
                y_min: -r,
                y_max: 0.0,
            };
            let map = linkage.workspace_grid(bounds, *step, rig.cfg.elbows);
            let bytes = match format {
                MapFormat::Csv => map.to_csv().into_bytes(),
                MapFormat::Pgm => map.to_pgm(),
            };
            match out {
                Some(path) => std::fs::write(path, bytes)
                    .map_err(|e| DomainError::io(path.display().to_string(), e))?,
                None => io.stdout.write_all(&bytes).map_err(out_err)?,
            }
        }
        Command::Ik { x, y, effector } => {
            let linkage = rig.cfg.linkage((*effector).into());
            let a = linkage.inverse_kinematics(Point::new(*x, *y), rig.cfg.elbows)?;
            writeln!(
                io.stdout,
                "alpha_left={:.1} alpha_right={:.1}",
                a.left, a.right
            )
            .map_err(out_err)?;
        }
        Command::Force { depth, torque } => {
            let depth = depth.unwrap_or(rig.cal.depth_mm);
            let torque = torque.unwrap_or(rig.cfg.servos[0].stall_torque_nm);
            let f = rig
                .cfg
                .linkage(Effector::A)
                .symmetric_normal_force(depth, torque)?;
            writeln!(
                io.stdout,
                "alpha={:.1} beta={:.1} gamma={:.1} phi={:.1} deg\nF1={:.3} N F2={:.3} N\nFn={:.2} N",
                f.alpha, f.beta, f.gamma, f.phi, f.f1, f.f2, f.fn_
            )
            .map_err(out_err)?;
        }
        Command::Pattern {
            action: PatternCommand::Play { id, kind, capture },
        } => {
            let kind = PatternKind::from(*kind);
            let schedule = rig.schedule(kind, *id)?;
            let (report, bytes) = play_schedule(&rig, &schedule, cli.simulate)?;
            if let (Some(path), Some(bytes)) = (capture, bytes) {
                std::fs::write(path, bytes)
                    .map_err(|e| DomainError::io(path.display().to_string(), e))?;
            }
            writeln!(
                io.stdout,
                "{kind} pattern {id}: {} ticks, {} frames, {:.2} s, max jitter {:.3} ms, {} underruns",
                report.ticks_sent,
                report.frames_sent,
                report.duration_s,
                report.max_jitter_s * 1e3,
                report.underruns
            )
            .map_err(out_err)?;
        }
        Command::Experiment {
            action:
                ExperimentCommand::Run {
                    catalog,
                    reps,
                    subject,
                    log,
                },
        } => run_experiment(&rig, cli, catalog, *reps, subject, log, io)?,
        Command::Report { logs, format } => {
            let mut sessions = Vec::new();
            for path in logs {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| DomainError::io(path.display().to_string(), e))?;
                sessions.extend(read_sessions(&text)?);
            }
            let report = build_report(&sessions)?;
            let text = match format {
                ReportFormat::Text => report.to_text(),
                ReportFormat::Json => report.to_json(),
            };
            io.stdout.write_all(text.as_bytes()).map_err(out_err)?;
        }
        Command::Serve { log } => {
            let opts = ServiceOptions {
                simulate: cli.simulate,
                seed: cli.seed,
                log_path: log.clone(),
            };
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| DomainError::io("runtime", e))?;
            let port = cli.port;
            writeln!(io.stdout, "listening on http://127.0.0.1:{port}").map_err(out_err)?;
            io.stdout.flush().map_err(out_err)?;
            runtime
                .block_on(service::serve(rig, opts, port))
                .map_err(|e| DomainError::io(format!("127.0.0.1:{port}"), e))?;
        }
    }
    Ok(())
}

/// Plays a schedule on the loopback (returning the captured bytes) or on the
/// configured device file in real time.
pub fn play_schedule(
    rig: &Rig,
    schedule: &JointSchedule,
    simulate: bool,
) -> Result<(PlaybackReport, Option<Vec<u8>>), DomainError> {
    if simulate {
        let mut lb = Loopback::new();
        let report = play(
            schedule,
            &rig.cfg.servos,
            &mut lb,
            &mut VirtualClock::new(),
            None,
            &mut |_| {},
        )?;
        Ok((report, Some(lb.take())))
    } else {
        let path = &rig.cfg.transport.path;
        let mut dev = DeviceFile::open(path).map_err(|e| DomainError::io(path.clone(), e))?;
        let mut clock = WallClock::new();
        let transport: &mut dyn Transport = &mut dev;
        let clock: &mut dyn Clock = &mut clock;
        let report = play(
            schedule,
            &rig.cfg.servos,
            transport,
            clock,
            None,
            &mut |_| {},
        )?;
        Ok((report, None))
    }
}

fn run_experiment(
    rig: &Rig,
    cli: &Cli,
    catalog: &str,
    reps: u32,
    subject: &str,
    log_path: &PathBuf,
    io: &mut Streams<'_>,
) -> Result<(), DomainError> {
    let kind = rig.resolve_catalog(catalog)?;
    let cat = rig.catalog(kind);
    let ids = cat.ids(kind);
    let schedule = build_schedule(&ids, reps, cli.seed)?;
    let mut session = TrialSession::new(subject, cat.name.clone(), ids, schedule, Utc::now());
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(log_path)
        .map_err(|e| DomainError::io(log_path.display().to_string(), e))?;
    let mut log = LogWriter::new(file);
    let log_err = |e| DomainError::io(log_path.display().to_string(), e);
    log.append(&LogRecord::schedule(&session))
        .map_err(log_err)?;

    let total = session.schedule.trials.len();
    for (n, trial) in session.schedule.trials.clone().into_iter().enumerate() {
        play_schedule(rig, &rig.schedule(kind, trial.pattern_id)?, cli.simulate)?;
        let at = Utc::now();
        session.mark_delivered(trial.trial_id, at)?;
        log.append(&LogRecord::delivered(&session, trial, at))
            .map_err(log_err)?;
        loop {
            write!(io.stdout, "trial {}/{total}: pattern? ", n + 1).map_err(out_err)?;
            io.stdout.flush().map_err(out_err)?;
            let mut line = String::new();
            if io
                .stdin
                .read_line(&mut line)
                .map_err(|e| DomainError::io("<stdin>", e))?
                == 0
            {
                writeln!(io.stdout).map_err(out_err)?;
                return Err(fivebar_haptics::lab::LabError::IncompleteSession {
                    subject_id: subject.to_string(),
                    missing: session.unanswered(),
                }
                .into());
            }
            let Ok(answer) = line.trim().parse::<u32>() else {
                writeln!(io.stderr, "not a pattern number: {:?}", line.trim()).map_err(out_err)?;
                continue;
            };
            let at = Utc::now();
            match session.record_response(trial.trial_id, answer, at) {
                Ok(()) => {
                    log.append(&LogRecord::response(&session, trial.trial_id, answer, at))
                        .map_err(log_err)?;
                    break;
                }
                Err(e) => writeln!(io.stderr, "{e}").map_err(out_err)?,
            }
        }
    }
    let report = build_report(std::slice::from_ref(&session))?;
    io.stdout
        .write_all(report.to_text().as_bytes())
        .map_err(out_err)?;
    Ok(())
}
