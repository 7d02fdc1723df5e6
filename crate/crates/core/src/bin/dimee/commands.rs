use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use dimee::pooling::{write_membership, PoolBuild};
use dimee::simulator::{write_reports_csv, write_sweep_csv};
use dimee::synth::{self, ScenarioConfig};
use dimee::{
    build_pools, calibrate_threshold, export_embeddings, load_traces, run_stream, sweep_cost, threshold_grid,
    CalibrationReport, CostField, CostModel, DeploymentConfig, DistanceMetric, Error, NormalizeAgainst, Policy,
    PoolState, Result, SimContext, TraceSet,
};

use crate::{CalibrateArgs, CostArgs, DeployArgs, GenArgs, PoolArgs, SimulateArgs, SweepArgs, ThresholdArgs};

fn read_config<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad {what} {}: {e}", path.display())))
}

fn read_data<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn costs(args: &CostArgs) -> Result<CostModel> {
    let costs = match (&args.costs, args.lambda) {
        (Some(path), _) => read_config(path, "cost config")?,
        (None, Some(unit)) => CostModel::default_costs(unit)?,
        (None, None) => synth::benchmark_costs(),
    };
    costs.validate()?;
    Ok(costs)
}

fn deployment(args: &DeployArgs, traces: &TraceSet) -> Result<DeploymentConfig> {
    DeploymentConfig::new(args.m, args.n, traces.num_layers())
}

fn threshold(args: &ThresholdArgs) -> Result<Option<f64>> {
    let alpha = match (&args.calibration, args.alpha) {
        (Some(path), _) => Some(read_config::<CalibrationReport>(path, "calibration report")?.alpha_star),
        (None, a) => a,
    };
    if let Some(a) = alpha {
        if !a.is_finite() {
            return Err(Error::Config(format!("threshold must be finite, got {a}")));
        }
    }
    Ok(alpha)
}

fn calibrate_on(traces: &TraceSet, cfg: &DeploymentConfig, costs: &CostModel) -> Result<CalibrationReport> {
    let grid = threshold_grid(traces.manifest.num_classes)?;
    calibrate_threshold(traces, &grid, cfg, costs)
}

pub fn gen(args: GenArgs) -> Result<()> {
    let mut config: ScenarioConfig = match &args.scenario {
        Some(path) => read_config(path, "scenario config")?,
        None if args.preset == "drift" => synth::drift_scenario(),
        None => synth::default_scenario(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let data = synth::materialize(&config)?;

    make_dir(&args.out)?;
    data.write(&args.out)?;
    write_json(&args.out.join("scenario.json"), &config)?;
    write_json(&args.out.join("costs.json"), &synth::benchmark_costs())?;
    println!(
        "generated train={} validation={} test={}{}",
        data.train.len(),
        data.validation.len(),
        data.test.len(),
        data.drift_stream
            .as_ref()
            .map(|(s, _)| format!(" stream={}", s.len()))
            .unwrap_or_default()
    );
    Ok(())
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    let costs = costs(&args.costs)?;
    let traces = load_traces(&args.traces)?;
    let cfg = deployment(&args.deploy, &traces)?;
    let report = calibrate_on(&traces, &cfg, &costs)?;

    make_dir(&args.out)?;
    write_json(&args.out.join("calibration.json"), &report)?;
    println!("alpha_star={}", report.alpha_star);
    Ok(())
}

fn write_pools(out: &Path, traces: &TraceSet, build: &PoolBuild) -> Result<()> {
    write_json(&out.join("pools.json"), &build.state)?;
    write_json(&out.join("pool_summary.json"), &build.summary())?;
    write_membership(traces, &build.membership, create_file(&out.join("membership.csv"))?)?;
    export_embeddings(traces, &build.membership, create_file(&out.join("embeddings.csv"))?)?;
    Ok(())
}

pub fn pool(args: PoolArgs) -> Result<()> {
    let alpha = threshold(&args.threshold)?
        .ok_or_else(|| Error::Config("pool needs --alpha or --calibration".into()))?;
    let traces = load_traces(&args.traces)?;
    let cfg = deployment(&args.deploy, &traces)?;
    let build = build_pools(&traces, alpha, &cfg)?;

    make_dir(&args.out)?;
    write_pools(&args.out, &traces, &build)?;
    let [e, m, h] = build.state.counts();
    println!("pools easy={e} moderate={m} hard={h}");
    Ok(())
}

fn policies(args: &SimulateArgs) -> Result<Vec<Policy>> {
    if let Some(mode) = &args.mode {
        return Ok(vec![Policy::parse(mode, args.seed)?]);
    }
    match &args.policies {
        None => Ok(Policy::suite(args.seed).to_vec()),
        Some(names) if names.iter().any(|n| n == "all") => Ok(Policy::suite(args.seed).to_vec()),
        Some(names) => names.iter().map(|n| Policy::parse(n.trim(), args.seed)).collect(),
    }
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let costs = costs(&args.costs)?;
    let policies = policies(&args)?;
    let distance: DistanceMetric = args.distance.parse()?;
    let normalize: NormalizeAgainst = args.normalize_against.parse()?;
    let mut alpha = threshold(&args.threshold)?;
    let traces = load_traces(&args.traces)?;
    let cfg = deployment(&args.deploy, &traces)?;

    let mut pools: Option<PoolState> = match &args.pools {
        Some(path) => {
            let p: PoolState = read_data(path)?;
            p.validate()?;
            if p.d != traces.manifest.embedding_dim {
                return Err(Error::Data(format!(
                    "pools have dimension {}, traces {}",
                    p.d, traces.manifest.embedding_dim
                )));
            }
            Some(p)
        }
        None => None,
    };
    let mut calibration = None;
    if let Some(path) = &args.calib_traces {
        let calib = load_traces(path)?;
        let calib_cfg = deployment(&args.deploy, &calib)?;
        if alpha.is_none() {
            let report = calibrate_on(&calib, &calib_cfg, &costs)?;
            alpha = Some(report.alpha_star);
            calibration = Some(report);
        }
        if pools.is_none() {
            pools = Some(build_pools(&calib, alpha.expect("set above"), &calib_cfg)?.state);
        }
    }
    let alpha = alpha.ok_or_else(|| {
        Error::Config("simulate needs --alpha, --calibration or --calib-traces".into())
    })?;
    let needs_pools = policies
        .iter()
        .any(|p| matches!(p, Policy::DimeeFixed | Policy::DimeeAdaptive));
    if needs_pools && pools.is_none() {
        return Err(Error::Config("pool-routing policies need --pools or --calib-traces".into()));
    }

    let ctx = SimContext {
        distance,
        normalize,
        ..SimContext::new(alpha, cfg, costs, pools.as_ref())
    };
    let reports = policies
        .iter()
        .map(|&p| run_stream(&traces, p, &ctx))
        .collect::<Result<Vec<_>>>()?;

    make_dir(&args.out)?;
    if let Some(report) = &calibration {
        write_json(&args.out.join("calibration.json"), report)?;
    }
    for r in &reports {
        write_json(&args.out.join(format!("report_{}.json", r.policy)), r)?;
    }
    write_reports_csv(&reports, normalize, create_file(&args.out.join("reports.csv"))?)?;
    for r in &reports {
        println!(
            "{:<24} accuracy={:.4} mean_cost={:.4} delta={}",
            r.policy,
            r.accuracy,
            r.mean_cost,
            r.cost_delta(normalize)
                .map(|d| format!("{d:+.1}%"))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let costs = costs(&args.costs)?;
    let field: CostField = args.dimension.parse()?;
    let distance: DistanceMetric = args.distance.parse()?;
    let normalize: NormalizeAgainst = args.normalize_against.parse()?;
    if let Some(v) = args.values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Config(format!("sweep value {v} is negative")));
    }
    let calib = load_traces(&args.calib_traces)?;
    let stream = load_traces(&args.traces)?;
    let cfg = deployment(&args.deploy, &stream)?;
    let points = sweep_cost(&calib, &stream, &cfg, &costs, field, &args.values, distance)?;

    make_dir(&args.out)?;
    write_sweep_csv(&points, normalize, create_file(&args.out.join("sweep.csv"))?)?;
    for p in &points {
        println!(
            "{}={} alpha_star={} accuracy={:.4} mean_cost={:.4}",
            p.field, p.value, p.alpha_star, p.report.accuracy, p.report.mean_cost
        );
    }
    Ok(())
}
