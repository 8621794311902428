#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use incubator_bus::{broker_serve, BrokerHandle, BusClient, Message, Subscription};
use incubator_twin::datalog::topic_file_name;
use incubator_twin::messages::{topics, DriverCommand, DriverState};
use incubator_twin::plant::{PlantConfig, PlantSim};

pub async fn bus() -> (BrokerHandle, String) {
    let broker = broker_serve("127.0.0.1:0").await.unwrap();
    let addr = broker.local_addr().to_string();
    (broker, addr)
}

pub async fn client(addr: &str) -> BusClient {
    BusClient::connect(addr).await.unwrap()
}

/// Next message on `sub` satisfying `pred`, panicking after `secs`.
pub async fn next_where(sub: &mut Subscription, secs: f64, pred: impl Fn(&Message) -> bool) -> Message {
    let fut = async {
        loop {
            let m = sub.recv().await.expect("subscription closed");
            if pred(&m) {
                return m;
            }
        }
    };
    tokio::time::timeout(Duration::from_secs_f64(secs), fut).await.expect("timed out waiting for message")
}

pub fn is_request(m: &Message) -> bool {
    m.body.contains_key("request")
}

/// Driver states of a plant heated for `heat` s and then left to cool,
/// `n` samples starting at `epoch`.
pub fn heating_run(epoch: f64, n: usize, heat: f64, sigma: f64) -> Vec<DriverState> {
    let mut sim = PlantSim::new(PlantConfig { sigma, start_epoch: Some(epoch), ..PlantConfig::default() }, epoch).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut cmd = DriverCommand { heater_on: true, fan_on: None, seq: None };
    for _ in 0..n {
        let s = sim.tick(Some(&cmd));
        cmd.heater_on = s.elapsed + 3.0 <= heat;
        out.push(s);
    }
    out
}

pub fn driver_message(s: &DriverState) -> Message {
    let serde_json::Value::Object(body) = serde_json::to_value(s).unwrap() else { unreachable!() };
    Message { topic: topics::DRIVER_STATE.to_owned(), ts: s.time, body }
}

/// Writes `states` as a recorded run into `dir`.
pub fn write_recording(dir: &Path, states: &[DriverState]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut text = String::new();
    for s in states {
        text.push_str(&serde_json::to_string(&driver_message(s)).unwrap());
        text.push('\n');
    }
    std::fs::write(dir.join(topic_file_name(topics::DRIVER_STATE)), text).unwrap();
}
