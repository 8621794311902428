//! Whole twin in one process: broker, recorder, plant, controller,
//! estimator, calibration, what-if, orchestrator and optionally the gateway.
//!
//! The plant runs in lockstep with the controller, so a run is a function of
//! the configuration and seed.

use std::path::PathBuf;

use incubator_bus::{broker_serve, BusClient};
use serde::Serialize;
use tokio::task::JoinHandle;
use tracing::info;

use crate::calibration::calibration_service;
use crate::config::TwinConfig;
use crate::controller::controller_run;
use crate::datalog::{record, Datalog};
use crate::estimator::estimator_run;
use crate::gateway::gateway_serve;
use crate::orchestrator::orchestrator_run;
use crate::plant::plant_run;
use crate::whatif::whatif_service;

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub config: TwinConfig,
    /// Serve the gateway on this address.
    pub gateway: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub run_dir: PathBuf,
    pub messages_recorded: usize,
    pub bus_addr: String,
    pub gateway_addr: Option<String>,
}

/// Runs until the plant reaches its configured duration or `stop` resolves.
pub async fn run_demo(opts: DemoOptions, stop: impl std::future::Future<Output = ()>) -> anyhow::Result<DemoSummary> {
    let cfg = opts.config;
    let broker = broker_serve(&cfg.bus.addr).await?;
    let addr = broker.local_addr().to_string();
    info!(%addr, "broker listening");
    let connect = || BusClient::connect(&addr);

    let recorder = record(connect().await?, &cfg.datalog.runs_dir).await?;
    let log = Datalog::open(recorder.run_dir());
    let mut services: Vec<JoinHandle<()>> = vec![
        controller_run(cfg.controller, connect().await?).await?,
        estimator_run(cfg.estimator.clone(), connect().await?).await?,
        calibration_service(connect().await?, log.clone()).await?,
        whatif_service(connect().await?).await?,
        orchestrator_run(cfg.orchestrator.clone(), connect().await?).await?,
    ];
    let gateway_addr = match &opts.gateway {
        Some(bind) => {
            let gw = gateway_serve(connect().await?, Some(log.clone()), bind).await?;
            info!(addr = %gw.addr, "gateway listening");
            services.push(gw.task);
            Some(gw.addr.to_string())
        }
        None => None,
    };

    let plant_cfg = crate::plant::PlantConfig { lockstep: true, ..cfg.plant.clone() };
    let plant_bus = connect().await?;
    let mut plant = plant_run(plant_cfg, plant_bus.clone()).await?.task;
    tokio::select! {
        r = &mut plant => r??,
        _ = stop => {
            info!("stopping");
            plant.abort();
        }
    }
    // let the services answer the last sample before the recorder stops
    plant_bus.sync().await.ok();
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    let messages_recorded = recorder.stop().await;
    for s in services {
        s.abort();
    }
    broker.shutdown().await;
    Ok(DemoSummary { run_dir: log.path().to_path_buf(), messages_recorded, bus_addr: addr, gateway_addr })
}
