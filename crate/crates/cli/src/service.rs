//! HTTP + WebSocket operator service over a single [`Session`].
//!
//! Mutations (calibrate, transmit) are serialized by an activity guard and
//! rejected with 409 while one is in progress. Transmissions are computed on
//! a blocking worker and then played back as a paced event stream.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use dmod::modem::wrap_phase;
use dmod::testbed::{DetectorKind, LinkOutcome};

use crate::files::TransmissionReport;
use crate::session::{run_transmission, PendingTransmission, Session, SessionError, TransmitSettings};

/// One line on `/stream`. Angles are degrees; receivers and elements are
/// numbered from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Phase {
        rx: usize,
        t_s: f64,
        phase_deg: f64,
    },
    Weight {
        symbol: usize,
        element: usize,
        re: f64,
        im: f64,
    },
    DecodedChar {
        rx: usize,
        char: String,
    },
    /// Session total for the receiver, not an increment.
    BitErrors {
        rx: usize,
        count: u64,
    },
    Status {
        state: String,
        transmission: Option<u64>,
        calibrated: bool,
        calibration_age_s: Option<f64>,
        bits_per_symbol: u8,
        fec: bool,
        detector: DetectorKind,
        message: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig {
    /// Simulated seconds streamed per wall-clock second; 0 streams without
    /// pauses.
    pub playback_rate: f64,
    /// Let wall-clock time between operations advance the simulated clock,
    /// so drifting channels go stale while the operator waits.
    pub realtime_clock: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            playback_rate: 1.0,
            realtime_clock: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activity {
    Idle,
    Calibrating,
    Transmitting(u64),
}

impl Activity {
    fn name(self) -> &'static str {
        match self {
            Activity::Idle => "idle",
            Activity::Calibrating => "calibrating",
            Activity::Transmitting(_) => "transmitting",
        }
    }
}

struct Shared {
    session: Mutex<Session>,
    activity: Mutex<Activity>,
    stop: AtomicBool,
    events: broadcast::Sender<Arc<str>>,
    config: ServiceConfig,
    last_tick: Mutex<Instant>,
}

const EVENT_BUFFER: usize = 1 << 16;

type AppState = Arc<Shared>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn emit(&self, event: &Event) {
        let line: Arc<str> = serde_json::to_string(event).expect("event serializes").into();
        // no subscribers is fine
        let _ = self.events.send(line);
    }

    fn activity(&self) -> Activity {
        *lock(&self.activity)
    }

    /// Applies elapsed wall time to the simulated clock when configured.
    fn tick(&self) {
        let mut last = lock(&self.last_tick);
        let now = Instant::now();
        if self.config.realtime_clock && self.activity() == Activity::Idle {
            lock(&self.session).advance_clock((now - *last).as_secs_f64());
        }
        *last = now;
    }

    fn status(&self, message: Option<String>) -> Event {
        let activity = self.activity();
        let session = lock(&self.session);
        let view = session.view(activity.name());
        Event::Status {
            state: activity.name().to_string(),
            transmission: match activity {
                Activity::Transmitting(i) => Some(i),
                _ => None,
            },
            calibrated: view.calibration.is_some(),
            calibration_age_s: view.calibration.as_ref().map(|c| c.age_s),
            bits_per_symbol: view.modem.bits_per_symbol,
            fec: view.modem.fec,
            detector: view.modem.detector,
            message,
        }
    }
}

/// Holds the session's activity slot; frees it when dropped.
struct ActivityGuard(AppState);

impl ActivityGuard {
    /// Fails with the activity already in progress.
    fn acquire(state: &AppState, activity: Activity) -> Result<Self, Activity> {
        let mut slot = lock(&state.activity);
        if *slot != Activity::Idle {
            return Err(*slot);
        }
        *slot = activity;
        Ok(ActivityGuard(state.clone()))
    }

    fn set(&self, activity: Activity) {
        *lock(&self.0.activity) = activity;
    }
}

impl Drop for ActivityGuard {
    fn drop(&mut self) {
        *lock(&self.0.activity) = Activity::Idle;
        *lock(&self.0.last_tick) = Instant::now();
    }
}

fn busy(current: Activity) -> Response {
    error(StatusCode::CONFLICT, json!({ "error": "busy", "state": current.name() }))
}

fn error(code: StatusCode, body: Value) -> Response {
    (code, Json(body)).into_response()
}

fn session_error(e: SessionError) -> Response {
    match e {
        SessionError::Field { field, message } => error(StatusCode::BAD_REQUEST, json!({ "error": message, "field": field })),
        SessionError::CalibrationRequired => error(StatusCode::CONFLICT, json!({ "error": "calibration required" })),
        SessionError::Calibration(c) => error(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({ "error": format!("calibration failed: {c}"), "kind": "calibration_failed" }),
        ),
        other => error(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": other.to_string() })),
    }
}

pub fn router(session: Session, config: ServiceConfig) -> Router {
    let (events, _) = broadcast::channel(EVENT_BUFFER);
    let state = Arc::new(Shared {
        session: Mutex::new(session),
        activity: Mutex::new(Activity::Idle),
        stop: AtomicBool::new(false),
        events,
        config,
        last_tick: Mutex::new(Instant::now()),
    });
    Router::new()
        .route("/session", get(get_session))
        .route("/calibrate", post(calibrate))
        .route("/transmit", post(transmit))
        .route("/stop", post(stop))
        .route("/generate", post(generate))
        .route("/stream", get(stream))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(session: Session, config: ServiceConfig, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session, config)).await
}

async fn get_session(State(state): State<AppState>) -> Response {
    state.tick();
    let activity = state.activity();
    Json(lock(&state.session).view(activity.name())).into_response()
}

async fn calibrate(State(state): State<AppState>) -> Response {
    state.tick();
    let guard = match ActivityGuard::acquire(&state, Activity::Calibrating) {
        Ok(g) => g,
        Err(current) => return busy(current),
    };
    state.emit(&state.status(None));
    let worker = state.clone();
    let result = tokio::task::spawn_blocking(move || {
        let mut session = lock(&worker.session);
        session.calibrate().map(|_| ())?;
        Ok::<_, SessionError>(session.view("idle").calibration)
    })
    .await
    .expect("calibration worker");
    drop(guard);
    match result {
        Ok(view) => {
            state.emit(&state.status(Some("calibrated".into())));
            Json(view).into_response()
        }
        Err(e) => {
            state.emit(&state.status(Some(e.to_string())));
            session_error(e)
        }
    }
}

fn parse_settings(body: &Value) -> Result<TransmitSettings, SessionError> {
    let field = |field: &'static str, message: &str| SessionError::Field {
        field,
        message: message.to_string(),
    };
    let messages = body
        .get("messages")
        .and_then(Value::as_array)
        .ok_or_else(|| field("messages", "must be an array of strings"))?
        .iter()
        .map(|m| m.as_str().map(str::to_owned))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| field("messages", "must be an array of strings"))?;
    let bits_per_symbol = match body.get("bits_per_symbol") {
        None => 1,
        Some(v) => v
            .as_u64()
            .filter(|b| (1..=4).contains(b))
            .ok_or_else(|| field("bits_per_symbol", "must be an integer in 1..=4"))? as u8,
    };
    let fec = match body.get("fec") {
        None => false,
        Some(v) => v.as_bool().ok_or_else(|| field("fec", "must be a boolean"))?,
    };
    let detector = match body.get("detector") {
        None => DetectorKind::Sync,
        Some(v) => v
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| field("detector", "must be \"sync\" or \"async\""))?,
    };
    Ok(TransmitSettings {
        messages,
        bits_per_symbol,
        fec,
        detector,
    })
}

async fn transmit(State(state): State<AppState>, body: Option<Json<Value>>) -> Response {
    state.tick();
    let Some(Json(body)) = body else {
        return error(StatusCode::BAD_REQUEST, json!({ "error": "expected a JSON body", "field": "body" }));
    };
    let settings = match parse_settings(&body) {
        Ok(s) => s,
        Err(e) => return session_error(e),
    };
    let guard = match ActivityGuard::acquire(&state, Activity::Transmitting(0)) {
        Ok(g) => g,
        Err(current) => return busy(current),
    };
    let pending = match lock(&state.session).begin_transmission(settings) {
        Ok(p) => p,
        Err(e) => return session_error(e),
    };
    guard.set(Activity::Transmitting(pending.index));
    state.stop.store(false, Ordering::SeqCst);
    let index = pending.index;
    let worker = pending.clone();
    let computed = tokio::task::spawn_blocking(move || run_transmission(&worker.calibration, &worker.settings, worker.index, worker.start_time))
        .await
        .expect("transmission worker");
    let (report, outcome) = match computed {
        Ok(r) => r,
        Err(e) => return session_error(e),
    };
    lock(&state.session).occupy_until(report.end_time_s);
    tokio::spawn(play(state.clone(), guard, pending, report, outcome));
    (StatusCode::ACCEPTED, Json(json!({ "transmission": index, "state": "transmitting" }))).into_response()
}

/// Streams a computed transmission, then commits it to the session.
async fn play(state: AppState, guard: ActivityGuard, pending: PendingTransmission, report: TransmissionReport, outcome: LinkOutcome) {
    state.emit(&state.status(None));
    let symbols = outcome.weights.vectors.len();
    let sps = outcome.channels.first().map_or(0, |c| c.trace.len() / symbols.max(1));
    let symbol_s = outcome.weights.symbol_duration;
    let rate = state.config.playback_rate;
    // pause roughly every 20 ms of playback
    let chunk = if rate > 0.0 {
        ((0.02 * rate / symbol_s).round() as usize).max(1)
    } else {
        usize::MAX
    };
    let b = pending.settings.bits_per_symbol as usize;
    let ready_at = |char_index: usize| {
        if pending.settings.fec {
            symbols
        } else {
            ((char_index + 1) * 8).div_ceil(b)
        }
    };
    let decoded: Vec<Vec<char>> = outcome.channels.iter().map(|c| c.decoded.text.chars().collect()).collect();
    let mut sent_chars = vec![0usize; decoded.len()];
    let mut emit_chars = |upto_symbol: usize| {
        for (rx, chars) in decoded.iter().enumerate() {
            while sent_chars[rx] < chars.len() && ready_at(sent_chars[rx]) <= upto_symbol {
                state.emit(&Event::DecodedChar {
                    rx,
                    char: chars[sent_chars[rx]].to_string(),
                });
                sent_chars[rx] += 1;
            }
        }
    };

    for k in 0..symbols {
        if state.stop.load(Ordering::SeqCst) {
            drop(guard);
            state.emit(&state.status(Some(format!("transmission {} stopped", pending.index))));
            return;
        }
        for (element, w) in outcome.weights.vectors[k].iter().enumerate() {
            state.emit(&Event::Weight {
                symbol: k,
                element,
                re: w.re,
                im: w.im,
            });
        }
        for i in k * sps..(k + 1) * sps {
            for c in &outcome.channels {
                if let Some(&p) = c.trace.phase.get(i) {
                    state.emit(&Event::Phase {
                        rx: c.receiver,
                        t_s: c.trace.time(i),
                        phase_deg: wrap_phase(p).to_degrees(),
                    });
                }
            }
        }
        emit_chars(k);
        if (k + 1) % chunk == 0 {
            tokio::time::sleep(Duration::from_secs_f64(chunk as f64 * symbol_s / rate)).await;
        }
    }
    emit_chars(usize::MAX);
    let counts = {
        let mut session = lock(&state.session);
        session.commit(report);
        session.counters().bit_errors.clone()
    };
    for (rx, count) in counts.into_iter().enumerate() {
        state.emit(&Event::BitErrors { rx, count });
    }
    drop(guard);
    state.emit(&state.status(Some(format!("transmission {} complete", pending.index))));
}

async fn stop(State(state): State<AppState>) -> Response {
    let transmitting = matches!(state.activity(), Activity::Transmitting(_));
    if transmitting {
        state.stop.store(true, Ordering::SeqCst);
    }
    Json(json!({ "stopping": transmitting })).into_response()
}

async fn generate(State(state): State<AppState>) -> Response {
    let messages = lock(&state.session).generate_messages();
    Json(json!({ "messages": messages })).into_response()
}

async fn stream(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| forward_events(state, socket))
}

async fn forward_events(state: AppState, mut socket: WebSocket) {
    let mut events = state.events.subscribe();
    let hello = serde_json::to_string(&state.status(None)).expect("event serializes");
    if socket.send(Message::Text(hello.into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            event = events.recv() => match event {
                Ok(line) => {
                    if socket.send(Message::Text(line.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(missed)) => {
                    let note = state.status(Some(format!("stream lagged, {missed} events dropped")));
                    let line = serde_json::to_string(&note).expect("event serializes");
                    if socket.send(Message::Text(line.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
