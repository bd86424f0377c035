//! Live race-strategy service: sessions that assimilate laps one at a time,
//! refit in the background and push forecasts, pit-window alerts and
//! what-if comparisons over HTTP and server-sent events.

pub mod api;
pub mod hub;
pub mod session;

pub use api::router;
pub use hub::{read_event_log, Hub, HubError};
pub use session::{
    Event, EventRecord, FitSummary, ForecastView, LapInput, SessionConfig, SessionState,
    DEFAULT_NU_THRESHOLD,
};

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(addr: &str, hub: Hub) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(hub)).await
}
