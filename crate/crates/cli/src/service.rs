//! Local HTTP service. One actor task owns all state; handlers talk to it
//! over a channel and playback runs on a blocking worker that reports back
//! through the same channel.

use std::collections::HashMap;
use std::convert::Infallible;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use fivebar_haptics::device::{
    contact_state, ContactState, DeviceCalibration, Effector, FingerProfile,
};
use fivebar_haptics::lab::{build_schedule, LabError, TrialSession};
use fivebar_haptics::linkage::{Branch, EffectorPose, Point};
use fivebar_haptics::log::LogRecord;
use fivebar_haptics::pattern::PatternKind;
use fivebar_haptics::report::build_report;
use fivebar_haptics::servo::{
    entry_pulses, play, Clock, DeviceFile, Loopback, PlaybackEvent, PlaybackReport, Transport,
    VirtualClock, WallClock,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

use crate::error::DomainError;
use crate::rig::Rig;

/// Minimum schedule-time spacing of pose events (20 Hz).
pub const POSE_PERIOD_S: f64 = 0.05;

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    pub simulate: bool,
    pub seed: u64,
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    pub message: String,
}

impl ApiError {
    fn conflict(error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: 409,
            error: error.to_string(),
            message: message.into(),
        }
    }

    fn unprocessable(error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: 422,
            error: error.to_string(),
            message: message.into(),
        }
    }

    fn unavailable() -> Self {
        ApiError {
            status: 503,
            error: "Unavailable".into(),
            message: "service state owner has stopped".into(),
        }
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        let status = match e {
            DomainError::Lab(LabError::AlreadyAnswered(_)) => 409,
            _ => 422,
        };
        ApiError {
            status,
            error: e.name().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<LabError> for ApiError {
    fn from(e: LabError) -> Self {
        DomainError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ServiceEvent {
    pub name: &'static str,
    pub data: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectorView {
    pub effector: Effector,
    pub x: f64,
    pub y: f64,
    pub contact: ContactState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaybackView {
    pub kind: PatternKind,
    pub id: u32,
    pub trial_id: Option<u32>,
    pub ticks: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionView {
    pub subject_id: String,
    pub catalog_id: String,
    pub kind: PatternKind,
    pub seed: u64,
    pub repetitions: u32,
    pub total: usize,
    pub answered: usize,
    pub delivered: usize,
    /// Trial whose stimulus has been started and awaits an answer.
    pub current_trial: Option<u32>,
    pub complete: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateView {
    pub simulate: bool,
    pub finger: FingerProfile,
    pub calibration: DeviceCalibration,
    pub effectors: Vec<EffectorView>,
    pub playback: Option<PlaybackView>,
    pub session: Option<SessionView>,
    pub frames_sent: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PlayRequest {
    #[serde(default = "default_kind")]
    pub kind: PatternKind,
    pub id: u32,
}

fn default_kind() -> PatternKind {
    PatternKind::Static
}

#[derive(Debug, Clone, Deserialize)]
pub struct StartRequest {
    pub catalog: String,
    #[serde(default = "default_reps")]
    pub reps: u32,
    pub seed: Option<u64>,
    pub subject: String,
}

fn default_reps() -> u32 {
    5
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct AnswerRequest {
    pub trial_id: u32,
    pub answer: u32,
}

type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

enum Msg {
    State(oneshot::Sender<StateView>),
    Calibrate(FingerProfile, Reply<StateView>),
    Play(PlayRequest, Reply<PlaybackView>),
    Start(StartRequest, Reply<SessionView>),
    Answer(AnswerRequest, Reply<SessionView>),
    Abort(Reply<StateView>),
    Report(Reply<fivebar_haptics::report::Report>),
    Log(oneshot::Sender<String>),
    Pose {
        token: u64,
        points: [Point; 2],
    },
    PlaybackDone {
        token: u64,
        outcome: Result<PlaybackReport, String>,
        last: Option<[Point; 2]>,
    },
}

struct Playback {
    token: u64,
    view: PlaybackView,
    cancel: Arc<AtomicBool>,
}

struct Session {
    session: TrialSession,
    kind: PatternKind,
    current: Option<u32>,
}

impl Session {
    fn view(&self) -> SessionView {
        let s = &self.session;
        SessionView {
            subject_id: s.subject_id.clone(),
            catalog_id: s.catalog_id.clone(),
            kind: self.kind,
            seed: s.schedule.seed,
            repetitions: s.schedule.repetitions,
            total: s.schedule.trials.len(),
            answered: s.responses.len(),
            delivered: s.delivered.len(),
            current_trial: self.current.filter(|t| !s.responses.contains_key(t)),
            complete: s.is_complete(),
        }
    }

    fn in_progress(&self) -> bool {
        !self.session.is_complete()
    }
}

struct Actor {
    rig: Rig,
    opts: ServiceOptions,
    tx: mpsc::UnboundedSender<Msg>,
    events: broadcast::Sender<ServiceEvent>,
    poses: [Point; 2],
    playback: Option<Playback>,
    session: Option<Session>,
    log_lines: Vec<String>,
    log_file: Option<File>,
    next_token: u64,
    frames_sent: u64,
}

impl Actor {
    fn emit(&self, name: &'static str, data: Value) {
        let _ = self.events.send(ServiceEvent { name, data });
    }

    fn log(&mut self, record: LogRecord) {
        let line = record.to_line();
        if let Some(f) = &mut self.log_file {
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                eprintln!("session log write failed: {e}");
            }
        }
        self.log_lines.push(line);
    }

    fn state(&self) -> StateView {
        let effectors = Effector::BOTH
            .iter()
            .map(|&effector| {
                let p = self.poses[effector.index()];
                let pose = EffectorPose {
                    x: p.x,
                    y: p.y,
                    branch: Branch::Upper,
                };
                EffectorView {
                    effector,
                    x: p.x,
                    y: p.y,
                    contact: contact_state(&self.rig.cal, &pose),
                }
            })
            .collect();
        StateView {
            simulate: self.opts.simulate,
            finger: self.rig.finger,
            calibration: self.rig.cal,
            effectors,
            playback: self.playback.as_ref().map(|p| p.view.clone()),
            session: self.session.as_ref().map(Session::view),
            frames_sent: self.frames_sent,
        }
    }

    fn busy(&self) -> Result<(), ApiError> {
        if let Some(s) = self.session.as_ref().filter(|s| s.in_progress()) {
            return Err(ApiError::conflict(
                "SessionActive",
                format!("session of {} is in progress", s.session.subject_id),
            ));
        }
        if let Some(p) = &self.playback {
            return Err(ApiError::conflict(
                "PlaybackActive",
                format!("{} pattern {} is playing", p.view.kind, p.view.id),
            ));
        }
        Ok(())
    }

    fn start_playback(
        &mut self,
        kind: PatternKind,
        id: u32,
        trial_id: Option<u32>,
    ) -> Result<PlaybackView, ApiError> {
        let schedule = self.rig.schedule(kind, id)?;
        for e in &schedule.entries {
            entry_pulses(e, &self.rig.cfg.servos).map_err(DomainError::from)?;
        }
        let (mut transport, mut clock): (Box<dyn Transport>, Box<dyn Clock>) = if self.opts.simulate
        {
            (Box::new(Loopback::new()), Box::new(VirtualClock::new()))
        } else {
            let path = &self.rig.cfg.transport.path;
            let dev = DeviceFile::open(path)
                .map_err(|e| ApiError::unprocessable("TransportError", format!("{path}: {e}")))?;
            (Box::new(dev), Box::new(WallClock::new()))
        };
        self.next_token += 1;
        let token = self.next_token;
        let cancel = Arc::new(AtomicBool::new(false));
        let view = PlaybackView {
            kind,
            id,
            trial_id,
            ticks: schedule.entries.len(),
        };
        let specs = self.rig.cfg.servos;
        let tx = self.tx.clone();
        let events = self.events.clone();
        let flag = cancel.clone();
        tokio::task::spawn_blocking(move || {
            let mut last_pose_t = f64::NEG_INFINITY;
            let mut last = None;
            let outcome = play(
                &schedule,
                &specs,
                transport.as_mut(),
                clock.as_mut(),
                Some(&flag),
                &mut |ev| {
                    if let PlaybackEvent::Tick { entry, .. } = ev {
                        last = Some(entry.points);
                        if entry.t - last_pose_t >= POSE_PERIOD_S - 1e-9 {
                            last_pose_t = entry.t;
                            let _ = events.send(ServiceEvent {
                                name: "pose",
                                data: json!({ "t": entry.t, "effectors": entry.points }),
                            });
                            let _ = tx.send(Msg::Pose {
                                token,
                                points: entry.points,
                            });
                        }
                    }
                },
            )
            .map_err(|e| e.to_string());
            let _ = tx.send(Msg::PlaybackDone {
                token,
                outcome,
                last,
            });
        });
        self.emit("playback_started", json!(view));
        self.playback = Some(Playback {
            token,
            view: view.clone(),
            cancel,
        });
        Ok(view)
    }

    /// Starts the next stimulus once the previous one is answered and no
    /// playback is running.
    fn advance(&mut self) -> Result<(), ApiError> {
        if self.playback.is_some() {
            return Ok(());
        }
        let Some(s) = &self.session else {
            return Ok(());
        };
        if s.current
            .is_some_and(|t| !s.session.responses.contains_key(&t))
        {
            return Ok(());
        }
        let Some(next) = s.session.next_trial().copied() else {
            return Ok(());
        };
        let kind = s.kind;
        self.start_playback(kind, next.pattern_id, Some(next.trial_id))?;
        if let Some(s) = &mut self.session {
            s.current = Some(next.trial_id);
        }
        self.emit("stimulus_started", json!({ "trial_id": next.trial_id }));
        Ok(())
    }

    fn calibrate(&mut self, finger: FingerProfile) -> Result<StateView, ApiError> {
        self.busy()?;
        self.rig.recalibrate(finger)?;
        self.poses = self.rig.hover_points();
        self.emit("calibrated", json!(self.rig.cal));
        Ok(self.state())
    }

    fn play(&mut self, req: PlayRequest) -> Result<PlaybackView, ApiError> {
        self.busy()?;
        self.start_playback(req.kind, req.id, None)
    }

    fn start(&mut self, req: StartRequest) -> Result<SessionView, ApiError> {
        self.busy()?;
        if req.subject.trim().is_empty() {
            return Err(ApiError::unprocessable(
                "InvalidSubject",
                "subject must not be empty",
            ));
        }
        let kind = self.rig.resolve_catalog(&req.catalog)?;
        let catalog = self.rig.catalog(kind);
        let ids = catalog.ids(kind);
        let schedule = build_schedule(&ids, req.reps, req.seed.unwrap_or(self.opts.seed))?;
        let session = TrialSession::new(
            req.subject.clone(),
            catalog.name.clone(),
            ids,
            schedule,
            Utc::now(),
        );
        self.log(LogRecord::schedule(&session));
        self.emit(
            "session_started",
            json!({
                "subject_id": session.subject_id,
                "catalog_id": session.catalog_id,
                "trials": session.schedule.trials.len(),
            }),
        );
        self.session = Some(Session {
            session,
            kind,
            current: None,
        });
        if let Err(e) = self.advance() {
            self.session = None;
            return Err(e);
        }
        Ok(self
            .session
            .as_ref()
            .map(Session::view)
            .expect("just started"))
    }

    fn answer(&mut self, req: AnswerRequest) -> Result<SessionView, ApiError> {
        let Some(s) = &mut self.session else {
            return Err(ApiError::conflict("NoSession", "no experiment session"));
        };
        let session = &mut s.session;
        if session.trial(req.trial_id).is_none() {
            return Err(LabError::UnknownTrial(req.trial_id).into());
        }
        if session.responses.contains_key(&req.trial_id) {
            return Err(LabError::AlreadyAnswered(req.trial_id).into());
        }
        if s.current != Some(req.trial_id) {
            let presented = match s.current {
                Some(t) => format!("trial {t} is"),
                None => "no trial is".to_string(),
            };
            return Err(ApiError::conflict(
                "NotCurrentTrial",
                format!("{presented} being presented, not trial {}", req.trial_id),
            ));
        }
        if !session.delivered.contains_key(&req.trial_id) {
            return Err(ApiError::conflict(
                "StimulusPending",
                format!("trial {} is still being presented", req.trial_id),
            ));
        }
        let at = Utc::now();
        session.record_response(req.trial_id, req.answer, at)?;
        let record = LogRecord::response(session, req.trial_id, req.answer, at);
        let complete = session.is_complete();
        let subject = session.subject_id.clone();
        self.log(record);
        self.emit("response_recorded", json!({ "trial_id": req.trial_id }));
        if complete {
            self.emit("session_complete", json!({ "subject_id": subject }));
        } else {
            self.advance()?;
        }
        Ok(self
            .session
            .as_ref()
            .map(Session::view)
            .expect("session exists"))
    }

    fn abort(&mut self) -> StateView {
        if let Some(p) = &self.playback {
            p.cancel.store(true, Ordering::Relaxed);
        }
        if let Some(s) = self.session.take() {
            self.emit(
                "session_aborted",
                json!({ "subject_id": s.session.subject_id }),
            );
        }
        self.state()
    }

    fn playback_done(
        &mut self,
        token: u64,
        outcome: Result<PlaybackReport, String>,
        last: Option<[Point; 2]>,
    ) {
        if self.playback.as_ref().map(|p| p.token) != Some(token) {
            return;
        }
        let playback = self.playback.take().expect("checked");
        if let Some(points) = last {
            self.poses = points;
        }
        match outcome {
            Ok(report) => {
                self.frames_sent += report.frames_sent;
                self.emit(
                    "playback_finished",
                    json!({ "playback": playback.view, "report": report }),
                );
                if let (Some(trial_id), false) = (playback.view.trial_id, report.cancelled) {
                    self.delivered(trial_id);
                }
            }
            Err(message) => {
                self.emit(
                    "playback_failed",
                    json!({ "playback": playback.view, "message": message }),
                );
            }
        }
        if let Err(e) = self.advance() {
            self.emit("playback_failed", json!({ "message": e.message }));
        }
    }

    fn delivered(&mut self, trial_id: u32) {
        let Some(s) = &mut self.session else {
            return;
        };
        let Some(trial) = s.session.trial(trial_id).copied() else {
            return;
        };
        let at = Utc::now();
        if s.session.mark_delivered(trial_id, at).is_ok() {
            let record = LogRecord::delivered(&s.session, trial, at);
            self.log(record);
            self.emit("stimulus_delivered", json!({ "trial_id": trial_id }));
        }
    }

    fn report(&self) -> Result<fivebar_haptics::report::Report, ApiError> {
        let Some(s) = &self.session else {
            return Err(ApiError::conflict("NoSession", "no experiment session"));
        };
        Ok(build_report(std::slice::from_ref(&s.session))?)
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<Msg>) {
        while let Some(msg) = rx.recv().await {
            match msg {
                Msg::State(reply) => {
                    let _ = reply.send(self.state());
                }
                Msg::Calibrate(finger, reply) => {
                    let _ = reply.send(self.calibrate(finger));
                }
                Msg::Play(req, reply) => {
                    let _ = reply.send(self.play(req));
                }
                Msg::Start(req, reply) => {
                    let _ = reply.send(self.start(req));
                }
                Msg::Answer(req, reply) => {
                    let _ = reply.send(self.answer(req));
                }
                Msg::Abort(reply) => {
                    let _ = reply.send(Ok(self.abort()));
                }
                Msg::Report(reply) => {
                    let _ = reply.send(self.report());
                }
                Msg::Log(reply) => {
                    let text: String = self.log_lines.iter().map(|l| format!("{l}\n")).collect();
                    let _ = reply.send(text);
                }
                Msg::Pose { token, points } => {
                    if self.playback.as_ref().is_some_and(|p| p.token == token) {
                        self.poses = points;
                    }
                }
                Msg::PlaybackDone {
                    token,
                    outcome,
                    last,
                } => self.playback_done(token, outcome, last),
            }
        }
    }
}

#[derive(Clone)]
struct AppState {
    tx: mpsc::UnboundedSender<Msg>,
    events: broadcast::Sender<ServiceEvent>,
}

impl AppState {
    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Msg) -> Result<T, ApiError> {
        let (tx, rx) = oneshot::channel();
        self.tx
            .send(make(tx))
            .map_err(|_| ApiError::unavailable())?;
        rx.await.map_err(|_| ApiError::unavailable())
    }
}

/// Builds the router and spawns the state owner on the current runtime.
pub fn router(rig: Rig, opts: ServiceOptions) -> Result<Router, DomainError> {
    let log_file = match &opts.log_path {
        Some(path) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| DomainError::io(path.display().to_string(), e))?,
        ),
        None => None,
    };
    let (tx, rx) = mpsc::unbounded_channel();
    let (events, _) = broadcast::channel(4096);
    let actor = Actor {
        poses: rig.hover_points(),
        rig,
        opts,
        tx: tx.clone(),
        events: events.clone(),
        playback: None,
        session: None,
        log_lines: Vec::new(),
        log_file,
        next_token: 0,
        frames_sent: 0,
    };
    tokio::spawn(actor.run(rx));
    Ok(Router::new()
        .route("/state", get(get_state))
        .route("/calibration", post(post_calibration))
        .route("/pattern/play", post(post_play))
        .route("/experiment/start", post(post_start))
        .route("/experiment/answer", post(post_answer))
        .route("/experiment/abort", post(post_abort))
        .route("/experiment/report", get(get_report))
        .route("/experiment/log", get(get_log))
        .route("/events", get(get_events))
        .with_state(AppState { tx, events }))
}

pub async fn serve(rig: Rig, opts: ServiceOptions, port: u16) -> std::io::Result<()> {
    let app = router(rig, opts).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    axum::serve(listener, app).await
}

async fn get_state(State(s): State<AppState>) -> Result<Json<StateView>, ApiError> {
    s.ask(Msg::State).await.map(Json)
}

async fn post_calibration(
    State(s): State<AppState>,
    Json(finger): Json<FingerProfile>,
) -> Result<Json<StateView>, ApiError> {
    s.ask(|r| Msg::Calibrate(finger, r)).await?.map(Json)
}

async fn post_play(
    State(s): State<AppState>,
    Json(req): Json<PlayRequest>,
) -> Result<(StatusCode, Json<PlaybackView>), ApiError> {
    s.ask(|r| Msg::Play(req, r))
        .await?
        .map(|v| (StatusCode::ACCEPTED, Json(v)))
}

async fn post_start(
    State(s): State<AppState>,
    Json(req): Json<StartRequest>,
) -> Result<Json<SessionView>, ApiError> {
    s.ask(|r| Msg::Start(req, r)).await?.map(Json)
}

async fn post_answer(
    State(s): State<AppState>,
    Json(req): Json<AnswerRequest>,
) -> Result<Json<SessionView>, ApiError> {
    s.ask(|r| Msg::Answer(req, r)).await?.map(Json)
}

async fn post_abort(State(s): State<AppState>) -> Result<Json<StateView>, ApiError> {
    s.ask(Msg::Abort).await?.map(Json)
}

async fn get_report(
    State(s): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let report = s.ask(Msg::Report).await??;
    Ok(match q.get("format").map(String::as_str) {
        Some("text") => (
            [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
            report.to_text(),
        )
            .into_response(),
        Some("json") | None => (
            [(header::CONTENT_TYPE, "application/json")],
            report.to_json(),
        )
            .into_response(),
        Some(other) => {
            return Err(ApiError::unprocessable(
                "InvalidFormat",
                format!("unknown report format {other:?}"),
            ))
        }
    })
}

async fn get_log(State(s): State<AppState>) -> Result<Response, ApiError> {
    let text = s.ask(Msg::Log).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn get_events(
    State(s): State<AppState>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let stream = BroadcastStream::new(s.events.subscribe()).filter_map(|m| {
        m.ok()
            .map(|ev| Ok(Event::default().event(ev.name).data(ev.data.to_string())))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
