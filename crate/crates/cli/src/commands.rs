use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use ranndy::coherent::{self, KMeansOptions};
use ranndy::graphon_analysis as ga;
use ranndy::matrixio::{self, format_float};
use ranndy::systems::{self, midpoint_grid};
use ranndy::{hyperopt, presets, spectral, Error, FeatureMapSpec, Mode, Omega, Result, RunConfig, SnapshotData, SpectralResult};
use serde_json::{json, Value};

use crate::{Command, Common, ModeArg, System};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { system, common, samples } => generate(system, &common, samples),
        Command::Train { data, common, mode } => train(&data, &common, mode),
        Command::Decompose { data, common, mode, omega, n } => decompose(&data, &common, mode, omega.as_deref(), n),
        Command::Reconstruct { data, run, common, rank } => reconstruct(&data, &run, &common, rank),
        Command::Cluster { data, run, common, k } => cluster(&data, &run, &common, k),
    }
}

/// Provenance record written as `manifest.json` next to every output set.
struct Manifest {
    subcommand: &'static str,
    config_path: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    outputs: Vec<String>,
    seed: u64,
    started: SystemTime,
    clock: Instant,
}

impl Manifest {
    fn new(subcommand: &'static str, common: &Common, seed: u64) -> Self {
        Manifest {
            subcommand,
            config_path: common.config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    fn write(&self, out: &Path) -> Result<()> {
        let started = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let value = json!({
            "subcommand": self.subcommand,
            "config_path": self.config_path,
            "inputs": self.inputs,
            "output_dir": out,
            "outputs": self.outputs,
            "seed": self.seed,
            "library_version": env!("CARGO_PKG_VERSION"),
            "started_unix_s": started,
            "elapsed_s": self.clock.elapsed().as_secs_f64(),
        });
        write_text(out, "manifest.json", &(serde_json::to_string_pretty(&value).expect("manifest serializes") + "\n"))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_err(&path))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err(out))
}

/// System recorded by `generate` in `data.json`.
fn data_system(data_dir: &Path) -> Result<(System, f64)> {
    let path = data_dir.join("data.json");
    let meta = read_json(&path)?;
    let bad = |reason: &str| Error::Format { path: path.clone(), reason: reason.into() };
    let name = meta["system"].as_str().ok_or_else(|| bad("missing \"system\""))?;
    let system = System::from_name(name).ok_or_else(|| bad(&format!("unknown system {name:?}")))?;
    let lag = meta["lag"].as_f64().ok_or_else(|| bad("missing \"lag\""))?;
    Ok((system, lag))
}

fn load_data(data_dir: &Path) -> Result<(System, SnapshotData)> {
    let (system, lag) = data_system(data_dir)?;
    let x = matrixio::read_matrix(data_dir.join("X.bin"))?;
    let y = matrixio::read_matrix(data_dir.join("Y.bin"))?;
    Ok((system, SnapshotData::new(x, y, lag, system.name())?))
}

/// `--config`, else the config stored in `fallback_dir`, else the system preset.
fn resolve_config(common: &Common, fallback_dir: Option<&Path>, system: System) -> Result<RunConfig> {
    let mut config = match (&common.config, fallback_dir.map(|d| d.join("config.json"))) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(stored)) if stored.exists() => RunConfig::load(stored)?,
        _ => presets::config_for(system.name()).expect("every system has a preset"),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn omega_json(omega: &Omega, activation: ranndy::Activation) -> Value {
    json!({
        "activation": activation,
        "activation_params": omega.activation_params,
        "weight_scale": omega.weight_scale,
        "bias_scale": omega.bias_scale,
    })
}

fn read_omega(path: &Path, activation: ranndy::Activation) -> Result<Omega> {
    let v = read_json(path)?;
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let get = |key: &str| v[key].as_f64().ok_or_else(|| bad(format!("missing number {key:?}")));
    let params = match &v["activation_params"] {
        Value::Null => Vec::new(),
        Value::Array(items) => items
            .iter()
            .map(|p| p.as_f64().ok_or_else(|| bad("activation_params must be numbers".into())))
            .collect::<Result<_>>()?,
        _ => return Err(bad("activation_params must be a list".into())),
    };
    let mut flat = params;
    flat.push(get("weight_scale")?);
    flat.push(get("bias_scale")?);
    let omega = Omega::from_slice(activation, &flat)?;
    if !omega.is_positive() {
        return Err(bad(format!("scales must be positive, got {flat:?}")));
    }
    Ok(omega)
}

fn generate(system: System, common: &Common, samples: Option<usize>) -> Result<()> {
    let config = resolve_config(common, None, system)?;
    let mut manifest = Manifest::new("generate", common, config.seed);
    let seed = config.seed;
    let data = match system {
        System::Graphon => presets::graphon_data(samples.unwrap_or(presets::GRAPHON_WALK_STEPS), seed),
        System::Bickley => presets::bickley_data(samples.unwrap_or(presets::BICKLEY_PARTICLES), seed),
        System::Ou => presets::ou_data(samples.unwrap_or(presets::OU_SAMPLES), seed),
        System::DoubleWell => presets::double_well_data(samples.unwrap_or(presets::OU_SAMPLES), seed),
    }?;
    prepare_out(&common.out)?;
    let out = &common.out;
    matrixio::write_matrix(&data.x, out.join("X.bin"))?;
    matrixio::write_matrix(&data.y, out.join("Y.bin"))?;
    matrixio::export_csv(&data.x, out.join("X.csv"))?;
    matrixio::export_csv(&data.y, out.join("Y.csv"))?;
    let meta = json!({ "system": system.name(), "lag": data.lag, "dim": data.dim(), "samples": data.len(), "seed": seed });
    write_text(out, "data.json", &(meta.to_string() + "\n"))?;
    config.save(out.join("config.json"))?;
    manifest.outputs = ["X.bin", "Y.bin", "X.csv", "Y.csv", "data.json", "config.json"].map(String::from).to_vec();
    manifest.write(out)
}

fn train(data_dir: &Path, common: &Common, mode: Option<ModeArg>) -> Result<()> {
    let (system, data) = load_data(data_dir)?;
    let mut config = resolve_config(common, Some(data_dir), system)?;
    if let Some(m) = mode {
        config.mode = m.into();
    }
    let mut manifest = Manifest::new("train", common, config.seed);
    manifest.inputs = vec![data_dir.join("X.bin"), data_dir.join("Y.bin")];
    let spec = ranndy::build_feature_map(&config, data.dim())?;
    let trace = hyperopt::optimize(&spec, &config, &data)?;

    prepare_out(&common.out)?;
    let out = &common.out;
    write_text(out, "trace.csv", &trace.to_csv())?;
    let mut omega = omega_json(&trace.final_omega(), config.activation);
    omega["final_loss"] = json!(trace.final_loss());
    omega["epochs"] = json!(trace.epochs.len());
    omega["converged"] = json!(trace.converged);
    write_text(out, "omega_final.json", &(serde_json::to_string_pretty(&omega).unwrap() + "\n"))?;
    config.save(out.join("config.json"))?;
    manifest.outputs = ["trace.csv", "omega_final.json", "config.json"].map(String::from).to_vec();
    manifest.write(out)
}

fn values_csv(values: &[f64]) -> String {
    let mut s = String::from("index,value\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, format_float(*v)));
    }
    s
}

fn decompose(data_dir: &Path, common: &Common, mode: Option<ModeArg>, omega_path: Option<&Path>, n: Option<usize>) -> Result<()> {
    let (system, data) = load_data(data_dir)?;
    let mut config = resolve_config(common, Some(data_dir), system)?;
    if let Some(m) = mode {
        config.mode = m.into();
    }
    if let Some(n) = n {
        config.n_outputs = n;
        config.validate()?;
    }
    let omega = match omega_path {
        Some(p) => read_omega(p, config.activation)?,
        None => Omega::from_slice(config.activation, &config.omega_init)?,
    };
    let mut manifest = Manifest::new("decompose", common, config.seed);
    manifest.inputs = vec![data_dir.join("X.bin"), data_dir.join("Y.bin")];
    manifest.inputs.extend(omega_path.map(Path::to_path_buf));

    let spec = ranndy::build_feature_map(&config, data.dim())?;
    let result = hyperopt::decompose(&spec, &omega, &data, config.mode, config.n_outputs, config.pinv_rel_tol)?;
    let phi = spectral::evaluate_functions(&spec, &omega, &result, &data.x)?;

    prepare_out(&common.out)?;
    let out = &common.out;
    result.save(out)?;
    write_text(out, "values.csv", &values_csv(result.values.as_slice()))?;
    write_text(out, "spectrum.csv", &values_csv(result.spectrum.as_slice()))?;
    matrixio::write_matrix(&phi, out.join("eigenfunctions.bin"))?;
    write_text(out, "omega.json", &(serde_json::to_string_pretty(&omega_json(&omega, config.activation)).unwrap() + "\n"))?;
    config.save(out.join("config.json"))?;
    manifest.outputs = ["values.csv", "spectrum.csv", "values.bin", "spectrum.bin", "W_o.bin", "eigenfunctions.bin", "omega.json", "config.json"]
        .map(String::from)
        .to_vec();
    if result.w_o_left.is_some() {
        manifest.outputs.push("W_o_left.bin".into());
    }
    manifest.write(out)
}

/// Feature map, scales and decomposition stored by `decompose`.
fn load_run(run: &Path, common: &Common, system: System, dim: usize) -> Result<(RunConfig, FeatureMapSpec, Omega, SpectralResult)> {
    let config = resolve_config(common, Some(run), system)?;
    let spec = ranndy::build_feature_map(&config, dim)?;
    let omega = read_omega(&run.join("omega.json"), config.activation)?;
    let result = SpectralResult::load(run)?;
    Ok((config, spec, omega, result))
}

fn reconstruct(data_dir: &Path, run: &Path, common: &Common, rank: usize) -> Result<()> {
    let (system, data) = load_data(data_dir)?;
    if system != System::Graphon {
        return Err(Error::Contract(format!("reconstruct needs graphon data, got {}", system.name())));
    }
    let (config, spec, omega, result) = load_run(run, common, system, data.dim())?;
    if result.mode != Mode::SelfAdjoint {
        return Err(Error::Contract("reconstruct needs a self-adjoint decomposition".into()));
    }
    if rank == 0 || rank > result.n_outputs() {
        return Err(Error::Rank { requested: rank, rank: result.n_outputs() });
    }
    let mut manifest = Manifest::new("reconstruct", common, config.seed);
    manifest.inputs = vec![data_dir.join("X.bin"), run.join("W_o.bin"), run.join("omega.json")];

    let graphon = systems::preset_graphon();
    let grid = midpoint_grid(presets::RECONSTRUCTION_GRID);
    let density = ga::estimate_invariant_density(&spec, &omega, &result, &data.x, &grid, config.pinv_rel_tol)?;
    let z = graphon.normalization();
    let g_true = graphon.matrix_on(&grid);
    let p_true = graphon.transition_density_on(&grid);
    let pi_true = DMatrix::from_iterator(grid.len(), 1, grid.iter().map(|&x| graphon.degree(x) / z));
    let pi_hat = DMatrix::from_column_slice(grid.len(), 1, density.density.as_slice());

    let mut norms = String::from("rank,g_hat,p_hat,pi_hat\n");
    for r in 1..=rank {
        let rec = ga::reconstruct(&result, &spec, &omega, &density, z, r)?;
        norms.push_str(&format!(
            "{r},{},{},{}\n",
            format_float(ga::relative_l2_error(&rec.g_hat, &g_true)),
            format_float(ga::relative_l2_error(&rec.p_hat, &p_true)),
            format_float(ga::relative_l2_error(&pi_hat, &pi_true)),
        ));
    }
    let rec = ga::reconstruct(&result, &spec, &omega, &density, z, rank)?;

    prepare_out(&common.out)?;
    let out = &common.out;
    ga::heatmap(&rec.g_hat_clipped(), out.join("g_hat.pgm"))?;
    ga::heatmap(&rec.p_hat, out.join("p_hat.pgm"))?;
    matrixio::write_matrix(&rec.g_hat, out.join("g_hat.bin"))?;
    matrixio::write_matrix(&rec.p_hat, out.join("p_hat.bin"))?;
    let mut pi_csv = String::from("x,pi_hat,pi_true\n");
    for (i, x) in grid.iter().enumerate() {
        pi_csv.push_str(&format!("{},{},{}\n", format_float(*x), format_float(pi_hat[i]), format_float(pi_true[i])));
    }
    write_text(out, "pi_hat.csv", &pi_csv)?;
    write_text(out, "error_norms.csv", &norms)?;
    manifest.outputs = ["g_hat.pgm", "g_hat.pgm.txt", "p_hat.pgm", "p_hat.pgm.txt", "g_hat.bin", "p_hat.bin", "pi_hat.csv", "error_norms.csv"]
        .map(String::from)
        .to_vec();
    manifest.write(out)
}

fn cluster(data_dir: &Path, run: &Path, common: &Common, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let (system, data) = load_data(data_dir)?;
    let (config, spec, omega, result) = load_run(run, common, system, data.dim())?;
    let mut manifest = Manifest::new("cluster", common, config.seed);
    manifest.inputs = vec![data_dir.join("X.bin"), run.join("W_o.bin"), run.join("omega.json")];
    let sets = coherent::coherent_sets(&spec, &omega, &result, &data.x, k, config.seed, KMeansOptions::default())?;

    prepare_out(&common.out)?;
    let out = &common.out;
    let mut csv = String::from("index");
    for d in 0..data.dim() {
        csv.push_str(&format!(",x{d}"));
    }
    csv.push_str(",label\n");
    for (i, label) in sets.labels.iter().enumerate() {
        csv.push_str(&i.to_string());
        for d in 0..data.dim() {
            csv.push(',');
            csv.push_str(&format_float(data.x[(d, i)]));
        }
        csv.push_str(&format!(",{label}\n"));
    }
    write_text(out, "clusters.csv", &csv)?;
    manifest.outputs = vec!["clusters.csv".into()];
    manifest.write(out)
}
