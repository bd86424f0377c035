//! Live sessions: serialized appends, one background fit at a time per
//! session, broadcast of events and the append-only NDJSON log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use stintlab::forecast::{fitted_bands, forecast_next, rate_bands};
use stintlab::hmc::{sample_warm, PosteriorDraws, SamplerConfig, WarmStart};
use stintlab::strategy::{pit_window, what_if, WhatIfRequest, WhatIfResult};
use tokio::sync::{broadcast, Notify};

use crate::session::{
    Append, AppendError, Event, EventRecord, FitSummary, ForecastView, LapInput, SessionConfig,
    SessionState,
};

const CHANNEL_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub enum HubError {
    NotFound(String),
    Conflict(String),
    Invalid(String),
    OutOfOrder { expected: u32 },
    /// No completed fit to answer from yet.
    NotReady(String),
    Internal(String),
}

impl std::fmt::Display for HubError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HubError::NotFound(m)
            | HubError::Conflict(m)
            | HubError::Invalid(m)
            | HubError::NotReady(m)
            | HubError::Internal(m) => f.write_str(m),
            HubError::OutOfOrder { expected } => write!(f, "out-of-order lap; expected lap {expected}"),
        }
    }
}

impl std::error::Error for HubError {}

struct Inner {
    state: SessionState,
    history: Vec<EventRecord>,
    log: Option<File>,
    draws: Option<Arc<PosteriorDraws>>,
}

pub struct Session {
    inner: Mutex<Inner>,
    tx: broadcast::Sender<EventRecord>,
    wake: Notify,
}

impl Session {
    fn new(state: SessionState, history: Vec<EventRecord>, log: Option<File>) -> Arc<Self> {
        let (tx, _) = broadcast::channel(CHANNEL_CAPACITY);
        Arc::new(Session {
            inner: Mutex::new(Inner { state, history, log, draws: None }),
            tx,
            wake: Notify::new(),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Sequences, applies, logs and broadcasts one event atomically.
    fn emit(&self, inner: &mut Inner, event: Event) -> EventRecord {
        let rec = EventRecord { seq: inner.history.len() as u64, event };
        inner.state.apply(&rec);
        if let Some(f) = inner.log.as_mut() {
            let line = serde_json::to_string(&rec).expect("events serialize");
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                log::error!("event log write failed for {}: {e}", inner.state.id);
            }
        }
        inner.history.push(rec.clone());
        // no receivers is fine
        let _ = self.tx.send(rec.clone());
        rec
    }

    pub fn state(&self) -> SessionState {
        self.lock().state.clone()
    }

    pub fn history(&self) -> Vec<EventRecord> {
        self.lock().history.clone()
    }

    /// Events from `since` on, plus a receiver for everything after them.
    pub fn subscribe(&self, since: u64) -> (Vec<EventRecord>, broadcast::Receiver<EventRecord>) {
        let inner = self.lock();
        let rx = self.tx.subscribe();
        let backlog = inner.history.iter().skip(since as usize).cloned().collect();
        (backlog, rx)
    }

    pub fn draws(&self) -> Option<Arc<PosteriorDraws>> {
        self.lock().draws.clone()
    }
}

struct HubInner {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    data_dir: Option<PathBuf>,
    counter: AtomicU64,
}

/// Registry of sessions. Cheap to clone.
#[derive(Clone)]
pub struct Hub {
    inner: Arc<HubInner>,
}

fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.ndjson"))
}

pub fn read_event_log(path: &Path) -> Result<Vec<EventRecord>, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| format!("{}: line {}: {e}", path.display(), i + 1))?;
        out.push(rec);
    }
    Ok(out)
}

impl Hub {
    /// An in-memory hub that keeps no log files.
    pub fn in_memory() -> Self {
        Hub {
            inner: Arc::new(HubInner {
                sessions: RwLock::new(HashMap::new()),
                data_dir: None,
                counter: AtomicU64::new(1),
            }),
        }
    }

    /// A hub logging to `dir`, restoring every session found there. Must be
    /// called inside a tokio runtime; sessions with laps are refitted.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, String> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let hub = Hub {
            inner: Arc::new(HubInner {
                sessions: RwLock::new(HashMap::new()),
                data_dir: Some(dir.clone()),
                counter: AtomicU64::new(1),
            }),
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| format!("{}: {e}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        paths.sort();
        for path in paths {
            let records = read_event_log(&path)?;
            let state = SessionState::replay(&records)?;
            let log = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            let id = state.id.clone();
            let has_laps = !state.laps.is_empty();
            let session = Session::new(state, records, Some(log));
            hub.register(id.clone(), session.clone());
            if has_laps {
                session.wake.notify_one();
            }
            log::info!("restored session {id} from {}", path.display());
        }
        Ok(hub)
    }

    fn register(&self, id: String, session: Arc<Session>) {
        self.inner
            .sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, session.clone());
        tokio::spawn(worker(session));
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, HubError> {
        self.inner
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| HubError::NotFound(format!("no session {id:?}")))
    }

    pub fn list(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .inner
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn create(&self, config: SessionConfig) -> Result<String, HubError> {
        config.validate().map_err(HubError::Invalid)?;
        let mut sessions = self.inner.sessions.write().unwrap_or_else(|e| e.into_inner());
        let id = match &config.id {
            Some(id) if sessions.contains_key(id) => {
                return Err(HubError::Conflict(format!("session {id:?} already exists")))
            }
            Some(id) => id.clone(),
            None => loop {
                let n = self.inner.counter.fetch_add(1, Ordering::Relaxed);
                let id = format!("s{n}");
                if !sessions.contains_key(&id) {
                    break id;
                }
            },
        };
        let log = match &self.inner.data_dir {
            Some(dir) => {
                let path = log_path(dir, &id);
                let f = OpenOptions::new()
                    .create_new(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| HubError::Conflict(format!("{}: {e}", path.display())))?;
                Some(f)
            }
            None => None,
        };
        let session = Session::new(SessionState::new(id.clone(), config.clone()), Vec::new(), log);
        {
            let mut inner = session.lock();
            session.emit(&mut inner, Event::SessionCreated { id: id.clone(), config });
        }
        sessions.insert(id.clone(), session.clone());
        drop(sessions);
        tokio::spawn(worker(session));
        Ok(id)
    }

    /// Stores a lap and wakes the session's fit worker.
    pub fn append(&self, id: &str, lap: LapInput) -> Result<Append, HubError> {
        let session = self.get(id)?;
        let mut inner = session.lock();
        match inner.state.check_append(&lap) {
            Ok(Append::Duplicate) => Ok(Append::Duplicate),
            Ok(Append::Accepted) => {
                session.emit(&mut inner, Event::LapAccepted { lap });
                drop(inner);
                session.wake.notify_one();
                Ok(Append::Accepted)
            }
            Err(AppendError::OutOfOrder { expected }) => Err(HubError::OutOfOrder { expected }),
            Err(AppendError::Conflict { lap_number }) => Err(HubError::Conflict(format!(
                "lap {lap_number} was already stored with a different payload"
            ))),
            Err(AppendError::Invalid(m)) => Err(HubError::Invalid(m)),
        }
    }

    /// Side-effect free: reads the latest draws only.
    pub fn what_if(&self, id: &str, req: &WhatIfRequest) -> Result<WhatIfResult, HubError> {
        let session = self.get(id)?;
        let draws = session
            .draws()
            .ok_or_else(|| HubError::NotReady("no completed fit yet".into()))?;
        what_if(&draws, req).map_err(|e| HubError::Invalid(e.to_string()))
    }
}

/// Fits whenever woken; wake-ups during a fit collapse into one refit on
/// all laps appended so far.
async fn worker(session: Arc<Session>) {
    loop {
        session.wake.notified().await;
        let (state, warm) = {
            let inner = session.lock();
            let warm = inner.draws.as_ref().map(|d| d.warm_start()).unwrap_or_default();
            (inner.state.clone(), warm)
        };
        let job = tokio::task::spawn_blocking(move || fit(&state, &warm)).await;
        let outcome = match job {
            Ok(o) => o,
            Err(e) => FitOutcome::Failed(format!("fit task panicked: {e}")),
        };
        let mut inner = session.lock();
        match outcome {
            FitOutcome::Skipped => {}
            FitOutcome::Failed(message) => {
                session.emit(&mut inner, Event::Error { message });
            }
            FitOutcome::Done { draws, summary, forecast } => {
                inner.draws = Some(Arc::new(*draws));
                session.emit(&mut inner, Event::FitCompleted(summary));
                if let Some(f) = forecast {
                    let alert = f.rate.alert.then_some((f.trained_on, f.rate));
                    session.emit(&mut inner, Event::Forecast(f));
                    if let Some((trained_on, rate)) = alert {
                        session.emit(&mut inner, Event::PitWindowAlert { trained_on, rate });
                    }
                }
            }
        }
    }
}

enum FitOutcome {
    Skipped,
    Failed(String),
    Done {
        draws: Box<PosteriorDraws>,
        summary: FitSummary,
        forecast: Option<ForecastView>,
    },
}

/// Refit on the session's modelled laps and forecast the next race lap.
fn fit(state: &SessionState, warm: &WarmStart) -> FitOutcome {
    let Some(series) = state.series() else {
        return FitOutcome::Skipped;
    };
    let cfg = &state.config;
    let t = series.len();
    let sampler = SamplerConfig::profile(cfg.profile, cfg.seed.wrapping_add(t as u64));
    let start = Instant::now();
    let draws = match sample_warm(cfg.model, &cfg.priors(), &series, &sampler, warm) {
        Ok(d) => d,
        Err(e) => return FitOutcome::Failed(format!("fit on {t} laps failed: {e}")),
    };
    let diag = draws.diagnostics().ok();
    let summary = FitSummary {
        trained_on: t,
        max_rhat: diag.as_ref().map(|d| d.max_rhat()),
        min_ess_bulk: diag.as_ref().map(|d| d.min_ess_bulk()),
        divergences: draws.divergences(),
        elapsed_ms: start.elapsed().as_millis() as u64,
        bands: fitted_bands(&draws),
        rate_bands: rate_bands(&draws),
    };
    let next = state.next_target(&series);
    let forecast = if next.lap_number > cfg.total_race_laps {
        None
    } else {
        let f = match forecast_next(&draws, &next, sampler.seed) {
            Ok(f) => f,
            Err(e) => return FitOutcome::Failed(format!("forecast failed: {e}")),
        };
        let rate = match pit_window(&draws, cfg.nu_threshold) {
            Ok(r) => r,
            Err(e) => return FitOutcome::Failed(format!("rate summary failed: {e}")),
        };
        Some(ForecastView {
            trained_on: t,
            target_lap: next.lap_number,
            compound: next.compound,
            fresh_tires: next.fresh_tires,
            fuel_kg: next.fuel_kg,
            point: f.point,
            point_kind: f.point_kind,
            intervals: f.intervals,
            rate,
        })
    };
    FitOutcome::Done { draws: Box::new(draws), summary, forecast }
}
