//! Session configuration, events and the replayable session state.

use serde::{Deserialize, Serialize};
use stintlab::data::{fuel_at, FuelProfile};
use stintlab::forecast::{Band, Interval, NextLap, PointKind};
use stintlab::hmc::Profile;
use stintlab::strategy::{RateStatus, DEFAULT_PIT_LOSS_S};
use stintlab::{Compound, LapRecord, ModelKind, PriorSpec, RaceSeries};

/// ν-threshold used when a session does not set one, s/lap.
pub const DEFAULT_NU_THRESHOLD: f64 = 0.15;

fn default_threshold() -> f64 {
    DEFAULT_NU_THRESHOLD
}

fn default_pit_loss() -> f64 {
    DEFAULT_PIT_LOSS_S
}

fn default_fuel() -> f64 {
    110.0
}

fn default_profile() -> Profile {
    Profile::Desk
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub model: ModelKind,
    pub total_race_laps: u32,
    #[serde(default)]
    pub priors: Option<PriorSpec>,
    #[serde(default = "default_threshold")]
    pub nu_threshold: f64,
    #[serde(default = "default_pit_loss")]
    pub pit_loss_s: f64,
    #[serde(default = "default_fuel")]
    pub start_fuel_kg: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default)]
    pub event: Option<String>,
    #[serde(default)]
    pub driver: Option<String>,
}

impl SessionConfig {
    pub fn new(model: ModelKind, total_race_laps: u32) -> Self {
        SessionConfig {
            id: None,
            model,
            total_race_laps,
            priors: None,
            nu_threshold: DEFAULT_NU_THRESHOLD,
            pit_loss_s: DEFAULT_PIT_LOSS_S,
            start_fuel_kg: default_fuel(),
            seed: 0,
            profile: Profile::Desk,
            event: None,
            driver: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.nu_threshold > 0.0 && self.nu_threshold.is_finite()) {
            return Err(format!("nu_threshold must be positive, got {}", self.nu_threshold));
        }
        if !(self.pit_loss_s >= 0.0 && self.pit_loss_s.is_finite()) {
            return Err(format!("pit_loss_s must be non-negative, got {}", self.pit_loss_s));
        }
        if let Some(id) = &self.id {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(format!("session id {id:?} must be non-empty [A-Za-z0-9_-]"));
            }
        }
        FuelProfile::new(self.start_fuel_kg, self.total_race_laps).map_err(|e| e.to_string())?;
        if let Some(p) = &self.priors {
            p.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn priors(&self) -> PriorSpec {
        self.priors.clone().unwrap_or_default()
    }
}

/// One lap as posted by the timing sidecar or the UI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LapInput {
    pub lap_number: u32,
    pub lap_time_s: f64,
    pub compound: Compound,
    /// The driver entered or left the pit lane on this lap. Such laps are
    /// kept in the session but not modelled, and the next modelled lap
    /// starts a new stint.
    #[serde(default)]
    pub pit: bool,
    /// Defaults to the linear fuel profile of the session.
    #[serde(default)]
    pub fuel_kg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    /// Modelled laps in the training series.
    pub trained_on: usize,
    pub max_rhat: Option<f64>,
    pub min_ess_bulk: Option<f64>,
    pub divergences: usize,
    pub elapsed_ms: u64,
    /// Fitted lap time `α_t + γ·fuel_t` per modelled lap.
    pub bands: Vec<Band>,
    /// Per-lap ν_t (time-varying model only).
    pub rate_bands: Vec<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastView {
    pub trained_on: usize,
    pub target_lap: u32,
    pub compound: Compound,
    pub fresh_tires: bool,
    pub fuel_kg: f64,
    pub point: f64,
    pub point_kind: PointKind,
    pub intervals: Vec<Interval>,
    /// Posterior of the degradation rate carried into the target lap.
    pub rate: RateStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionCreated { id: String, config: SessionConfig },
    LapAccepted { lap: LapInput },
    FitCompleted(FitSummary),
    Forecast(ForecastView),
    PitWindowAlert { trained_on: usize, rate: RateStatus },
    Error { message: String },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::SessionCreated { .. } => "session_created",
            Event::LapAccepted { .. } => "lap_accepted",
            Event::FitCompleted(_) => "fit_completed",
            Event::Forecast(_) => "forecast",
            Event::PitWindowAlert { .. } => "pit_window_alert",
            Event::Error { .. } => "error",
        }
    }
}

/// An event with its position in the session's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Append {
    Accepted,
    /// Same lap number and payload as a stored lap.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AppendError {
    OutOfOrder { expected: u32 },
    /// A stored lap with this number has a different payload.
    Conflict { lap_number: u32 },
    Invalid(String),
}

/// Everything a client can see about a session. A pure fold over the
/// event log, so a replay rebuilds it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub config: SessionConfig,
    pub laps: Vec<LapInput>,
    pub fits_completed: usize,
    pub last_fit: Option<FitSummary>,
    pub forecast: Option<ForecastView>,
    /// Latest alert, cleared by a forecast whose rate is under threshold.
    pub alert: Option<RateStatus>,
    pub last_error: Option<String>,
    /// Number of events applied.
    pub events: u64,
}

impl SessionState {
    pub fn new(id: String, config: SessionConfig) -> Self {
        SessionState {
            id,
            config,
            laps: Vec::new(),
            fits_completed: 0,
            last_fit: None,
            forecast: None,
            alert: None,
            last_error: None,
            events: 0,
        }
    }

    pub fn next_lap(&self) -> u32 {
        self.laps.last().map_or(1, |l| l.lap_number + 1)
    }

    pub fn check_append(&self, lap: &LapInput) -> Result<Append, AppendError> {
        if let Some(prev) = self.laps.iter().find(|l| l.lap_number == lap.lap_number) {
            return if prev == lap {
                Ok(Append::Duplicate)
            } else {
                Err(AppendError::Conflict { lap_number: lap.lap_number })
            };
        }
        let expected = self.next_lap();
        if lap.lap_number != expected {
            return Err(AppendError::OutOfOrder { expected });
        }
        if lap.lap_number > self.config.total_race_laps {
            return Err(AppendError::Invalid(format!(
                "lap {} is beyond the race length {}",
                lap.lap_number, self.config.total_race_laps
            )));
        }
        if !(lap.lap_time_s > 0.0 && lap.lap_time_s.is_finite()) {
            return Err(AppendError::Invalid(format!("bad lap time {}", lap.lap_time_s)));
        }
        if let Some(f) = lap.fuel_kg {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(AppendError::Invalid(format!("bad fuel {f}")));
            }
        }
        Ok(Append::Accepted)
    }

    /// Modelled laps: pit laps dropped, stints split after every pit lap
    /// or compound change.
    pub fn series(&self) -> Option<RaceSeries> {
        let profile = FuelProfile::new(self.config.start_fuel_kg, self.config.total_race_laps).ok()?;
        let mut laps: Vec<LapRecord> = Vec::new();
        let mut stint = 1;
        let mut pitted = false;
        for l in &self.laps {
            if l.pit {
                pitted = true;
                continue;
            }
            if let Some(prev) = laps.last() {
                if pitted || prev.compound != l.compound {
                    stint += 1;
                }
            }
            pitted = false;
            laps.push(LapRecord {
                lap_number: l.lap_number,
                lap_time_s: l.lap_time_s,
                compound: l.compound,
                stint_index: stint,
                fuel_kg: match l.fuel_kg {
                    Some(f) => f,
                    None => fuel_at(&profile, l.lap_number).ok()?,
                },
            });
        }
        if laps.is_empty() {
            return None;
        }
        RaceSeries::new(laps, self.config.total_race_laps).ok()
    }

    /// The race lap to forecast after `series`: fresh tires when a pit
    /// lap has been posted since the last modelled lap.
    pub fn next_target(&self, series: &RaceSeries) -> NextLap {
        let mut next = NextLap::after(series, None);
        next.lap_number = self.next_lap().max(next.lap_number);
        next.fuel_kg = stintlab::forecast::projected_fuel(series, next.lap_number);
        if let Some(last) = self.laps.last() {
            let since_model = self
                .laps
                .iter()
                .rev()
                .take_while(|l| l.lap_number > series.lap(series.len() - 1).lap_number);
            if since_model.clone().any(|l| l.pit) {
                next.fresh_tires = true;
                next.compound = last.compound;
            }
        }
        next
    }

    pub fn apply(&mut self, rec: &EventRecord) {
        match &rec.event {
            Event::SessionCreated { .. } => {}
            Event::LapAccepted { lap } => self.laps.push(*lap),
            Event::FitCompleted(f) => {
                self.fits_completed += 1;
                self.last_fit = Some(f.clone());
                self.last_error = None;
            }
            Event::Forecast(f) => {
                if !f.rate.alert {
                    self.alert = None;
                }
                self.forecast = Some(f.clone());
            }
            Event::PitWindowAlert { rate, .. } => self.alert = Some(*rate),
            Event::Error { message } => self.last_error = Some(message.clone()),
        }
        self.events = rec.seq + 1;
    }

    /// Rebuilds a session from its log. The first record must create it
    /// and sequence numbers must run 0, 1, 2, ...
    pub fn replay(records: &[EventRecord]) -> Result<SessionState, String> {
        let Some(first) = records.first() else {
            return Err("empty event log".into());
        };
        let Event::SessionCreated { id, config } = &first.event else {
            return Err("event log does not start with session_created".into());
        };
        let mut s = SessionState::new(id.clone(), config.clone());
        for (i, r) in records.iter().enumerate() {
            if r.seq != i as u64 {
                return Err(format!("event {i} has sequence number {}", r.seq));
            }
            s.apply(r);
        }
        Ok(s)
    }
}
