mod common;

use std::time::{Duration, Instant};

use common::*;
use incubator_core::calibration::ModelKind;
use incubator_core::controller::ControllerConfig;
use incubator_core::estimator::KalmanConfig;
use incubator_core::whatif::Grid;
use incubator_core::{ModelBParams, ThermalState};
use incubator_twin::calibration::calibration_service;
use incubator_twin::controller::controller_run;
use incubator_twin::datalog::Datalog;
use incubator_twin::estimator::estimator_run;
use incubator_twin::messages::*;
use incubator_twin::orchestrator::{orchestrator_run, OrchestratorConfig};
use incubator_twin::whatif::whatif_service;
use serde_json::json;

fn state_at(time: f64, avg: f64, seq: u64) -> DriverState {
    DriverState {
        time,
        t1: avg,
        t2: avg,
        t3: avg,
        average_temperature: avg,
        t_room: 21.0,
        heater_on: false,
        fan_on: true,
        execution_interval: 3.0,
        elapsed: time,
        power_w: 100.0,
        seq,
    }
}

#[tokio::test]
async fn controller_answers_each_sample_and_heats_when_cold() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut cmds = c.subscribe(topics::DRIVER_COMMAND).await.unwrap();
    let _ctl = controller_run(ControllerConfig::default(), client(&addr).await).await.unwrap();
    c.publish_json(topics::DRIVER_STATE, 0.0, &state_at(0.0, 25.0, 7)).unwrap();
    let m = next_where(&mut cmds, 5.0, |_| true).await;
    let cmd: DriverCommand = m.parse().unwrap();
    assert!(cmd.heater_on);
    assert_eq!(cmd.seq, Some(7));
    c.publish_json(topics::DRIVER_STATE, 3.0, &state_at(3.0, 45.0, 8)).unwrap();
    let cmd: DriverCommand = next_where(&mut cmds, 5.0, |_| true).await.parse().unwrap();
    assert!(!cmd.heater_on);
}

#[tokio::test]
async fn controller_rejects_inverted_band_and_keeps_config() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut states = c.subscribe(topics::CONTROLLER_STATE).await.unwrap();
    let _ctl = controller_run(ControllerConfig::default(), client(&addr).await).await.unwrap();
    let bad = ControllerRequest::Configure { config: ControllerConfig { ll: 50.0, ul: 45.0, h: 30.0, c: 20.0 } };
    c.publish_json(topics::CONTROLLER_STATE, 0.0, &bad).unwrap();
    let ack: ControllerStateBody = next_where(&mut states, 5.0, |m| !is_request(m)).await.parse().unwrap();
    assert!(ack.rejected.is_some());
    assert_eq!((ack.ll, ack.ul), (35.0, 40.0));
}

#[tokio::test]
async fn suspended_controller_holds_the_heater() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut states = c.subscribe(topics::CONTROLLER_STATE).await.unwrap();
    let mut cmds = c.subscribe(topics::DRIVER_COMMAND).await.unwrap();
    let _ctl = controller_run(ControllerConfig::default(), client(&addr).await).await.unwrap();
    c.publish_json(topics::CONTROLLER_STATE, 0.0, &ControllerRequest::Suspend { heater_on: true }).unwrap();
    let ack: ControllerStateBody = next_where(&mut states, 5.0, |m| !is_request(m)).await.parse().unwrap();
    assert!(ack.suspended && ack.heater_on);
    // far above the band, yet the heater stays on
    c.publish_json(topics::DRIVER_STATE, 3.0, &state_at(3.0, 60.0, 1)).unwrap();
    let cmd: DriverCommand = next_where(&mut cmds, 5.0, |_| true).await.parse().unwrap();
    assert!(cmd.heater_on);
    c.publish_json(topics::CONTROLLER_STATE, 3.0, &ControllerRequest::Resume).unwrap();
    let ack: ControllerStateBody = next_where(&mut states, 5.0, |m| !is_request(m) && !m.body["suspended"].as_bool().unwrap()).await.parse().unwrap();
    assert!(!ack.heater_on);
    c.publish_json(topics::DRIVER_STATE, 6.0, &state_at(6.0, 60.0, 2)).unwrap();
    let cmd: DriverCommand = next_where(&mut cmds, 5.0, |_| true).await.parse().unwrap();
    assert!(!cmd.heater_on);
}

#[tokio::test]
async fn estimator_publishes_per_sample_and_takes_new_params() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut est = c.subscribe(topics::ESTIMATOR_STATE).await.unwrap();
    let _e = estimator_run(KalmanConfig::default(), client(&addr).await).await.unwrap();
    c.sync().await.unwrap();
    // nothing in, nothing out
    tokio::time::sleep(Duration::from_millis(200)).await;
    assert!(est.try_recv().is_none());

    let run = heating_run(1000.0, 20, 600.0, 0.5);
    for s in &run[..10] {
        c.publish_json(topics::DRIVER_STATE, s.time, s).unwrap();
    }
    for s in &run[..10] {
        let body: EstimatorStateBody = next_where(&mut est, 5.0, |m| !is_request(m)).await.parse().unwrap();
        assert_eq!(body.seq, s.seq);
        assert_eq!(body.ts, s.time);
        assert_eq!(body.params, ModelBParams::CALIBRATED);
    }

    let invalid = json!({"request": "configure", "params": {"c_air": -1.0, "g_box": 1.0, "c_heater": 1.0, "g_heater": 1.0}});
    c.publish(topics::ESTIMATOR_STATE, invalid.as_object().unwrap().clone()).unwrap();
    let new = ModelBParams::new(500.0, 0.9, 30.0, 1.0).unwrap();
    c.publish_json(topics::ESTIMATOR_STATE, 0.0, &EstimatorRequest::Configure { params: new }).unwrap();
    c.publish_json(topics::DRIVER_STATE, run[10].time, &run[10]).unwrap();
    let body: EstimatorStateBody = next_where(&mut est, 5.0, |m| !is_request(m)).await.parse().unwrap();
    assert_eq!(body.params, new);
}

#[tokio::test]
async fn calibration_service_fits_a_recorded_run_and_queues_requests() {
    let dir = tempfile::tempdir().unwrap();
    let run = heating_run(5000.0, 400, 600.0, 0.1);
    write_recording(dir.path(), &run);
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut results = c.subscribe(topics::CALIBRATION_RESULT).await.unwrap();
    let _svc = calibration_service(client(&addr).await, Datalog::open(dir.path())).await.unwrap();

    let (t0, t1) = (run[0].time, run[399].time);
    let reqs = [
        CalibrationRequest { id: "fit".into(), model: ModelKind::A, from_ts: t0, to_ts: t1, theta0: None },
        CalibrationRequest { id: "reversed".into(), model: ModelKind::A, from_ts: t1, to_ts: t0, theta0: None },
        CalibrationRequest { id: "short".into(), model: ModelKind::B, from_ts: t0, to_ts: t0 + 20.0, theta0: None },
    ];
    for r in &reqs {
        c.publish_json(topics::CALIBRATION_REQUEST, t1, r).unwrap();
    }
    c.publish(topics::CALIBRATION_REQUEST, json!({"id": "garbled", "model": "c"}).as_object().unwrap().clone()).unwrap();

    let mut got = Vec::new();
    for _ in 0..4 {
        let m = next_where(&mut results, 60.0, |_| true).await;
        got.push(m.parse::<CalibrationResultBody>().unwrap());
    }
    let ids: Vec<&str> = got.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["fit", "reversed", "short", "garbled"]);
    assert!(got[0].ok && got[0].converged && got[0].n_samples == 400, "{:?}", got[0].error);
    assert!(!got[1].ok && !got[2].ok && !got[3].ok);
    assert!(got[2].error.as_deref().unwrap().contains("need at least 10"));
}

#[tokio::test]
async fn whatif_service_needs_an_initial_state() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut results = c.subscribe(topics::WHATIF_RESULT).await.unwrap();
    let _svc = whatif_service(client(&addr).await).await.unwrap();

    let bare = WhatifRequest { id: "bare".into(), ..Default::default() };
    c.publish_json(topics::WHATIF_REQUEST, 0.0, &bare).unwrap();
    let r: WhatifResultBody = next_where(&mut results, 10.0, |_| true).await.parse().unwrap();
    assert!(!r.ok && r.error.unwrap().contains("no estimator state"));

    let explicit = WhatifRequest {
        id: "explicit".into(),
        scenario: ScenarioSpec { initial: Some(ThermalState::uniform(30.0)), horizon: Some(600.0), ..Default::default() },
        ..Default::default()
    };
    c.publish_json(topics::WHATIF_REQUEST, 0.0, &explicit).unwrap();
    let r: WhatifResultBody = next_where(&mut results, 10.0, |_| true).await.parse().unwrap();
    assert!(r.ok && r.results.len() == 1);
    assert_eq!(r.trajectory[0][1], 30.0);

    let bad = WhatifRequest {
        id: "bad".into(),
        scenario: explicit.scenario.clone(),
        grid: Some(Candidates::List(vec![ControllerConfig { ll: 40.0, ul: 38.0, h: 30.0, c: 20.0 }])),
        ..Default::default()
    };
    c.publish_json(topics::WHATIF_REQUEST, 0.0, &bad).unwrap();
    let r: WhatifResultBody = next_where(&mut results, 10.0, |_| true).await.parse().unwrap();
    let err = r.error.unwrap();
    assert!(!r.ok && err.contains("ll=40") && err.contains("ul=38"), "{err}");
}

#[tokio::test]
async fn whatif_grid_of_27_is_fast() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut results = c.subscribe(topics::WHATIF_RESULT).await.unwrap();
    let _svc = whatif_service(client(&addr).await).await.unwrap();
    let req = WhatifRequest {
        id: "grid".into(),
        scenario: ScenarioSpec { initial: Some(ThermalState::uniform(21.0)), horizon: Some(4000.0), dt: Some(3.0), ..Default::default() },
        grid: Some(Candidates::Grid(Grid {
            ll: vec![34.0, 35.0, 36.0],
            ul: vec![39.0, 40.0, 41.0],
            h: vec![15.0, 30.0, 60.0],
            c: vec![20.0],
        })),
        weights: None,
    };
    let start = Instant::now();
    c.publish_json(topics::WHATIF_REQUEST, 0.0, &req).unwrap();
    let r: WhatifResultBody = next_where(&mut results, 30.0, |_| true).await.parse().unwrap();
    let took = start.elapsed();
    assert!(r.ok && r.results.len() == 27);
    assert!(r.results.windows(2).all(|w| w[0].objective <= w[1].objective));
    assert!(took < Duration::from_secs(5), "{took:?}");
}

#[tokio::test]
async fn orchestrator_recovers_when_calibration_never_answers() {
    let (_b, addr) = bus().await;
    let c = client(&addr).await;
    let mut all = c.subscribe(topics::ALL).await.unwrap();
    let config = OrchestratorConfig { service_timeout: 0.5, ..OrchestratorConfig::default() };
    let _o = orchestrator_run(config, client(&addr).await).await.unwrap();

    let orch_state = |m: &incubator_bus::Message| m.topic == topics::ORCHESTRATOR_STATE && !is_request(m);
    let ctl_request = |m: &incubator_bus::Message| m.topic == topics::CONTROLLER_STATE && is_request(m);

    c.publish_json(topics::DRIVER_STATE, 100.0, &state_at(100.0, 36.0, 0)).unwrap();
    let s: OrchestratorStateBody = next_where(&mut all, 5.0, orch_state).await.parse().unwrap();
    assert_eq!(s.state, "monitoring");

    let anomalous = EstimatorStateBody {
        t_bair_hat: 36.0,
        t_heater_hat: 40.0,
        p: [[0.1, 0.0], [0.0, 0.1]],
        innovation: 3.0,
        s: 0.3,
        normalized_innovation: 5.5,
        anomaly: true,
        ts: 103.0,
        params: ModelBParams::CALIBRATED,
        seq: 1,
    };
    c.publish_json(topics::ESTIMATOR_STATE, 103.0, &anomalous).unwrap();
    let req: ControllerRequest = next_where(&mut all, 5.0, ctl_request).await.parse().unwrap();
    assert_eq!(req, ControllerRequest::Suspend { heater_on: false });
    let s: OrchestratorStateBody = next_where(&mut all, 5.0, orch_state).await.parse().unwrap();
    assert_eq!(s.state, "cooling_down");

    // cooled to room + 2 K: the experiment starts with the heater forced on
    c.publish_json(topics::DRIVER_STATE, 106.0, &state_at(106.0, 22.5, 2)).unwrap();
    let req: ControllerRequest = next_where(&mut all, 5.0, ctl_request).await.parse().unwrap();
    assert_eq!(req, ControllerRequest::Suspend { heater_on: true });
    c.publish_json(topics::DRIVER_STATE, 406.0, &state_at(406.0, 40.0, 3)).unwrap();
    let req: ControllerRequest = next_where(&mut all, 5.0, ctl_request).await.parse().unwrap();
    assert_eq!(req, ControllerRequest::Suspend { heater_on: false });
    c.publish_json(topics::DRIVER_STATE, 706.0, &state_at(706.0, 35.0, 4)).unwrap();
    let m = next_where(&mut all, 5.0, |m| m.topic == topics::CALIBRATION_REQUEST).await;
    let cal: CalibrationRequest = m.parse().unwrap();
    assert_eq!((cal.model, cal.from_ts, cal.to_ts), (ModelKind::B, 106.0, 706.0));

    // nobody answers: the controller is resumed and monitoring resumes
    let req: ControllerRequest = next_where(&mut all, 5.0, ctl_request).await.parse().unwrap();
    assert_eq!(req, ControllerRequest::Resume);
    let s: OrchestratorStateBody =
        next_where(&mut all, 5.0, |m| orch_state(m) && m.body["state"] == "monitoring").await.parse().unwrap();
    assert_eq!(s.last_result["ok"], false);
    assert_eq!(s.last_result["state"], "calibrating");
}
