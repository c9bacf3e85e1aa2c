use std::fs::File;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use agmule_core::gateway::{Route, Waypoint};
use agmule_core::sensing::{fit_cubic_pairs, kfold_cv, read_pairs};
use agmule_core::sim::{
    compute_pickup_zones, estimate_deployment_cost, run, whatif_route, Scenario, Simulation,
};
use agmule_service::{router, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "agmule", version, about = "Battery-free soil sensing network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, logs and the event trace.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        days: Option<f64>,
    },
    /// Print the pickup zones of every node.
    Zones { scenario: PathBuf },
    /// Predict which nodes a candidate route would reach.
    Whatif {
        scenario: PathBuf,
        route: PathBuf,
        /// Advance the simulation this many seconds before predicting.
        #[arg(long, default_value_t = 0.0)]
        at: f64,
    },
    /// Estimate hardware cost of a deployment.
    Cost {
        #[arg(long)]
        nodes: u64,
        #[arg(long)]
        gateways: u64,
    },
    /// Fit the voltage-to-RAW cubic from `timestamp_s,voltage_v,raw` pairs.
    Calibrate {
        pairs: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the query API for a scenario.
    Serve {
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Simulated seconds per wall-clock second; zero disables playback.
        #[arg(long, default_value_t = 0.0)]
        playback_ratio: f64,
        #[arg(long)]
        window_samples: Option<usize>,
    },
}

/// Candidate route: `[x_m, y_m, t_s]` waypoints with absolute times.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteFile {
    #[serde(default, rename = "loop")]
    looped: bool,
    waypoints: Vec<[f64; 3]>,
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn load_route(path: &Path) -> Result<Route> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: RouteFile = toml::from_str(&text).with_context(|| format!("parsing route {}", path.display()))?;
    Ok(Route {
        waypoints: file.waypoints.iter().map(|[x, y, t]| Waypoint { x_m: *x, y_m: *y, t_s: *t }).collect(),
        looped: file.looped,
    })
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { scenario, out, seed, days } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(s) = seed {
                sc.rng_seed = s;
            }
            if let Some(d) = days {
                sc.duration_days = d;
            }
            sc.validate().context("scenario after overrides")?;
            let output = run(sc)?;
            output.write_to_dir(&out)?;
            let m = &output.metrics;
            println!("scenario: {}", m.scenario);
            println!("seed: {}", m.rng_seed);
            println!("simulated_s: {}", m.simulated_s);
            println!("trace_sha256: {}", m.trace_hash);
            println!("node  generated  delivered  buffered  dropped  completeness  max_buffer  min_cap_v");
            for n in &m.nodes {
                println!(
                    "{:>4}  {:>9}  {:>9}  {:>8}  {:>7}  {:>12.4}  {:>10}  {:>9.4}",
                    n.node_id,
                    n.generated,
                    n.delivered,
                    n.buffered,
                    n.dropped,
                    n.completeness,
                    n.max_buffer_occupancy,
                    n.min_capacitor_v
                );
            }
            println!("outputs: {}", out.display());
        }
        Command::Zones { scenario } => print_json(&compute_pickup_zones(&load_scenario(&scenario)?))?,
        Command::Whatif { scenario, route, at } => {
            let mut sim = Simulation::new(load_scenario(&scenario)?)?;
            let route = load_route(&route)?;
            sim.step_until(at);
            print_json(&whatif_route(&sim, &route)?)?;
        }
        Command::Cost { nodes, gateways } => {
            let c = estimate_deployment_cost(nodes, gateways);
            println!("nodes: {nodes}");
            println!("gateways: {gateways}");
            println!("total: {c}");
        }
        Command::Calibrate { pairs, folds, seed } => {
            let rows = read_pairs(File::open(&pairs).with_context(|| format!("opening {}", pairs.display()))?)?;
            let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.voltage_v, r.raw)).collect();
            let fit = fit_cubic_pairs(&pts)?;
            print!("{}", fit.model.to_kv_string());
            println!("r_squared = {}", fit.r_squared);
            println!("samples = {}", pts.len());
            if pts.len() >= folds && folds >= 2 {
                let cv = kfold_cv(&pts, folds, seed)?;
                println!("cv_folds = {}", cv.k);
                println!("cv_mean_deviation_percent = {}", cv.mean_deviation_percent);
                println!("cv_std_deviation_percent = {}", cv.std_deviation_percent);
            }
        }
        Command::Serve { scenario, addr, playback_ratio, window_samples } => {
            let svc = Arc::new(Service::new(ServiceConfig { window_samples }));
            if let Some(path) = scenario {
                svc.load_scenario(load_scenario(&path)?)?;
            } else if playback_ratio > 0.0 {
                bail!("--playback-ratio needs a scenario to play");
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                if playback_ratio > 0.0 {
                    svc.set_playback(playback_ratio, Duration::from_millis(250))?;
                }
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum_serve(listener, svc).await
            })?;
        }
    }
    Ok(())
}

async fn axum_serve(listener: tokio::net::TcpListener, svc: Arc<Service>) -> Result<()> {
    agmule_service::serve(listener, router(svc)).await?;
    Ok(())
}
