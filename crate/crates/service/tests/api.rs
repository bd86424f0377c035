use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use stintlab::forecast::current_rate_draws;
use stintlab::hmc::quantile_sorted;
use stintlab_service::{read_event_log, router, Event, EventRecord, Hub, SessionState};
use tokio_stream::StreamExt;
use tower::ServiceExt;

async fn call(hub: &Hub, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(b) => Body::from(b.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = router(hub.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

/// Lap time with a fixed irregular residual, so no model fits it exactly.
fn noisy(n: u32, trend: f64) -> f64 {
    trend + 0.25 * (2.3 * n as f64).sin()
}

fn lap(n: u32, t: f64, compound: &str, pit: bool) -> Value {
    json!({ "lap_number": n, "lap_time_s": t, "compound": compound, "pit": pit })
}

/// Waits until the session has produced an event matching `pred`.
async fn wait_for(hub: &Hub, id: &str, pred: impl Fn(&EventRecord) -> bool) -> EventRecord {
    let session = hub.get(id).unwrap();
    let (backlog, mut rx) = session.subscribe(0);
    if let Some(r) = backlog.into_iter().find(|r| pred(r)) {
        return r;
    }
    tokio::time::timeout(Duration::from_secs(120), async {
        loop {
            let r = rx.recv().await.unwrap();
            if pred(&r) {
                return r;
            }
        }
    })
    .await
    .expect("event did not arrive")
}

fn is_forecast_for(t: usize) -> impl Fn(&EventRecord) -> bool {
    move |r| matches!(&r.event, Event::Forecast(f) if f.trained_on == t)
}

#[tokio::test]
async fn create_validates_config() {
    let hub = Hub::in_memory();
    let (s, v) = call(&hub, "POST", "/sessions", Some(json!({"model": "base", "total_race_laps": 70}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap().to_string();
    let (_, list) = call(&hub, "GET", "/sessions", None).await;
    assert_eq!(list, json!([id]));

    let bad = json!({"model": "base", "total_race_laps": 70, "nu_threshold": 0.0});
    assert_eq!(call(&hub, "POST", "/sessions", Some(bad)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let bad = json!({"model": "garch", "total_race_laps": 70});
    assert_eq!(call(&hub, "POST", "/sessions", Some(bad)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    let named = json!({"id": "ham", "model": "compound", "total_race_laps": 70});
    assert_eq!(call(&hub, "POST", "/sessions", Some(named.clone())).await.0, StatusCode::CREATED);
    assert_eq!(call(&hub, "POST", "/sessions", Some(named)).await.0, StatusCode::CONFLICT);
    assert_eq!(call(&hub, "GET", "/sessions/nope/state", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn append_rules_and_first_forecast() {
    let hub = Hub::in_memory();
    let cfg = json!({"id": "a", "model": "base", "total_race_laps": 70});
    call(&hub, "POST", "/sessions", Some(cfg)).await;

    let (s, v) = call(&hub, "POST", "/sessions/a/laps", Some(lap(1, 72.5, "MEDIUM", false))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v["next_expected"], 2);
    let (s, v) = call(&hub, "POST", "/sessions/a/laps", Some(lap(1, 72.5, "MEDIUM", false))).await;
    assert_eq!((s, v["status"].as_str()), (StatusCode::OK, Some("duplicate")));
    let (s, v) = call(&hub, "POST", "/sessions/a/laps", Some(lap(3, 72.5, "MEDIUM", false))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["expected_lap"], 2);
    let (s, _) = call(&hub, "POST", "/sessions/a/laps", Some(lap(1, 72.9, "MEDIUM", false))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let bad = json!({"lap_number": 2, "lap_time_s": 72.0, "compound": "ULTRA"});
    assert_eq!(call(&hub, "POST", "/sessions/a/laps", Some(bad)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    // prior-dominated fit on a single lap
    let rec = wait_for(&hub, "a", is_forecast_for(1)).await;
    let Event::Forecast(f) = rec.event else { unreachable!() };
    assert_eq!(f.target_lap, 2);
    let (s, v) = call(&hub, "GET", "/sessions/a/forecast", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["target_lap"], 2);
    let (_, st) = call(&hub, "GET", "/sessions/a/state", None).await;
    assert_eq!(st["laps"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn pit_lap_forecasts_fresh_tires() {
    let hub = Hub::in_memory();
    let cfg = json!({"id": "p", "model": "compound", "total_race_laps": 30});
    call(&hub, "POST", "/sessions", Some(cfg)).await;
    for n in 1..=6 {
        call(&hub, "POST", "/sessions/p/laps", Some(lap(n, noisy(n, 71.5 + 0.1 * n as f64), "MEDIUM", false))).await;
    }
    call(&hub, "POST", "/sessions/p/laps", Some(lap(7, 90.0, "HARD", true))).await;
    let rec = wait_for(&hub, "p", |r| matches!(&r.event, Event::Forecast(f) if f.target_lap == 8)).await;
    let Event::Forecast(f) = rec.event else { unreachable!() };
    assert!(f.fresh_tires);
    // hard reset level prior centre plus the fuel effect
    let reset = 69.5 + 0.03 * f.fuel_kg;
    assert!((f.point - reset).abs() < 1.0, "{} vs {reset}", f.point);
}

#[tokio::test]
async fn alert_matches_offline_median() {
    let hub = Hub::in_memory();
    for (id, threshold) in [("lo", 0.001), ("hi", 5.0)] {
        let cfg = json!({"id": id, "model": "timevarying", "total_race_laps": 40, "nu_threshold": threshold});
        call(&hub, "POST", "/sessions", Some(cfg)).await;
        for n in 1..=8 {
            let t = noisy(n, 71.0 + 0.02 * (n * n) as f64);
            call(&hub, "POST", &format!("/sessions/{id}/laps"), Some(lap(n, t, "SOFT", false))).await;
        }
        let rec = wait_for(&hub, id, is_forecast_for(8)).await;
        let Event::Forecast(f) = rec.event else { unreachable!() };
        let draws = hub.get(id).unwrap().draws().unwrap();
        assert_eq!(draws.series().len(), 8);
        let mut r = current_rate_draws(&draws);
        r.sort_by(f64::total_cmp);
        let median = quantile_sorted(&r, 0.5);
        assert_eq!(f.rate.median, median);
        assert_eq!(f.rate.alert, median > threshold);
        let alerts = hub
            .get(id)
            .unwrap()
            .history()
            .iter()
            .filter(|r| matches!(&r.event, Event::PitWindowAlert { trained_on: 8, .. }))
            .count();
        assert_eq!(alerts, usize::from(f.rate.alert));
    }
}

#[tokio::test]
async fn what_if_is_side_effect_free() {
    let hub = Hub::in_memory();
    let cfg = json!({"id": "w", "model": "compound", "total_race_laps": 30});
    call(&hub, "POST", "/sessions", Some(cfg)).await;
    let body = json!({"pit_lap": 6, "compound": "HARD", "horizon": 3});
    assert_eq!(call(&hub, "POST", "/sessions/w/whatif", Some(body)).await.0, StatusCode::CONFLICT);
    for n in 1..=4 {
        call(&hub, "POST", "/sessions/w/laps", Some(lap(n, noisy(n, 71.0 + 0.05 * n as f64), "MEDIUM", false))).await;
    }
    wait_for(&hub, "w", is_forecast_for(4)).await;
    let before = hub.get("w").unwrap().state();

    let same = json!({"a": {"kind": "stay_out"}, "b": {"kind": "stay_out"}, "horizon": 3});
    let (s, v) = call(&hub, "POST", "/sessions/w/whatif", Some(same)).await;
    assert_eq!(s, StatusCode::OK);
    let delta = v["delta"].as_array().unwrap();
    assert_eq!(delta.len(), 8000);
    assert!(delta.iter().all(|d| d.as_f64() == Some(0.0)));

    let (s, v) = call(&hub, "POST", "/sessions/w/whatif", Some(json!({"pit_lap": 6, "compound": "HARD", "horizon": 3}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["horizon"], 3);
    let bad = json!({"pit_lap": 6, "compound": "WET", "horizon": 3});
    assert_eq!(call(&hub, "POST", "/sessions/w/whatif", Some(bad)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let outside = json!({"pit_lap": 20, "compound": "HARD", "horizon": 3});
    assert_eq!(call(&hub, "POST", "/sessions/w/whatif", Some(outside)).await.0, StatusCode::UNPROCESSABLE_ENTITY);

    assert_eq!(hub.get("w").unwrap().state(), before);
}

#[tokio::test]
async fn log_replay_rebuilds_state() {
    let dir = tempfile::tempdir().unwrap();
    let hub = Hub::open(dir.path()).unwrap();
    let cfg = json!({"id": "r", "model": "skewt", "total_race_laps": 30, "seed": 4});
    call(&hub, "POST", "/sessions", Some(cfg)).await;
    for n in 1..=3 {
        call(&hub, "POST", "/sessions/r/laps", Some(lap(n, noisy(n, 71.0 + 0.1 * n as f64), "MEDIUM", false))).await;
    }
    call(&hub, "POST", "/sessions/r/laps", Some(lap(4, 92.0, "MEDIUM", true))).await;
    wait_for(&hub, "r", |r| matches!(&r.event, Event::Forecast(f) if f.trained_on == 3 && f.fresh_tires)).await;
    let live = hub.get("r").unwrap().state();

    let records = read_event_log(&dir.path().join("r.ndjson")).unwrap();
    assert_eq!(records, hub.get("r").unwrap().history());
    assert_eq!(SessionState::replay(&records).unwrap(), live);

    let reopened = Hub::open(dir.path()).unwrap();
    assert_eq!(reopened.list(), vec!["r".to_string()]);
    assert_eq!(reopened.get("r").unwrap().state().laps, live.laps);
}

#[tokio::test]
async fn event_stream_replays_then_follows() {
    let hub = Hub::in_memory();
    call(&hub, "POST", "/sessions", Some(json!({"id": "e", "model": "base", "total_race_laps": 10}))).await;
    call(&hub, "POST", "/sessions/e/laps", Some(lap(1, 72.0, "SOFT", false))).await;
    let req = Request::builder().uri("/sessions/e/events?since=0").body(Body::empty()).unwrap();
    let resp = router(hub.clone()).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let mut body = resp.into_body().into_data_stream();
    let mut text = String::new();
    tokio::time::timeout(Duration::from_secs(120), async {
        while !text.contains("event: forecast") {
            let chunk = body.next().await.unwrap().unwrap();
            text.push_str(std::str::from_utf8(&chunk).unwrap());
        }
    })
    .await
    .expect("stream stalled");
    let order: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("event: "))
        .collect();
    assert_eq!(&order[..4], ["session_created", "lap_accepted", "fit_completed", "forecast"]);
    assert!(text.contains("id: 0\n") && text.contains("id: 3\n"));
}
