use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ddrom::bases::SnapshotSource;
use ddrom::harness::{self, ddrb, report, run_online, run_study, time_fom, Config, Offline};
use ddrom::mesh_fom::NewtonOptions;
use ddrom::sqp::{reconstruct_global, ReconstructMode, SqpOptions};
use ddrom::training::{run_bottom_up, run_top_down, SnapshotStore, TrainingPlan};
use ddrom::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ddrom", version, about = "Domain-decomposition reduced-order models")]
struct Cli {
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed overriding every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full-order model at `mu`.
    FomSolve,
    /// Collect snapshots for the `training` plan.
    Train,
    /// Build reduced bases for the `run` section.
    BuildBases,
    /// Build sample meshes and weighting for the `hyper` section.
    BuildHyper,
    /// Solve the reduced model for the `run` section at `mu`.
    RomSolve,
    /// Run the `study` grid at `mu` and write reports.
    Study,
    /// Regenerate reports from `<out>/study.csv`.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::NonConvergence { .. } | Error::SqpNonConvergence { .. } => 3,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).map_err(|e| io_error(&cli.out, e))?;
    if let Command::Report = cli.command {
        return cmd_report(&cli.out);
    }
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::FomSolve => cmd_fom_solve(&cfg, &cli.out),
        Command::Train => cmd_train(&cfg, cli.seed, &cli.out),
        Command::BuildBases => cmd_build_bases(&cfg, &cli.out),
        Command::BuildHyper => cmd_build_hyper(&cfg, &cli.out),
        Command::RomSolve => cmd_rom_solve(&cfg, cli.seed, &cli.out),
        Command::Study => cmd_study(&cfg, cli.seed, &cli.out),
        Command::Report => unreachable!(),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let path = path.ok_or_else(|| Error::Config("--config is required".into()))?;
    Config::from_path(path).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn mu_of(cfg: &Config) -> Result<[f64; 2]> {
    Ok(*Config::require(&cfg.mu, "mu")?)
}

fn split_of(cfg: &Config) -> Result<(usize, usize)> {
    let s = Config::require(&cfg.split, "split")?;
    Ok((s[0], s[1]))
}

fn newton_of(cfg: &Config) -> NewtonOptions {
    cfg.newton.unwrap_or_default()
}

fn sqp_of(cfg: &Config) -> SqpOptions {
    cfg.sqp.unwrap_or_default()
}

fn snapshot_dir(cfg: &Config, out: &Path) -> PathBuf {
    cfg.snapshots.clone().unwrap_or_else(|| out.join("snapshots"))
}

fn cmd_fom_solve(cfg: &Config, out: &Path) -> Result<()> {
    let problem = cfg.problem.build()?;
    let mu = mu_of(cfg)?;
    let (sol, secs) = time_fom(&problem, mu, &newton_of(cfg), 1)?;
    ddrb::write_vector(&out.join("fom_state.ddrb"), &sol.x)?;
    write_json(
        &out.join("fom.json"),
        &json!({
            "mu": mu,
            "n": problem.n(),
            "newton_iters": sol.newton_iters,
            "residual_history": sol.residual_history,
            "seconds": secs,
        }),
    )?;
    println!(
        "fom-solve: n={} newton_iters={} final_residual={:.3e} time={secs:.4}s",
        problem.n(),
        sol.newton_iters,
        sol.residual_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_train(cfg: &Config, seed: Option<u64>, out: &Path) -> Result<()> {
    let problem = cfg.problem.build()?;
    let mut plan = Config::require(&cfg.training, "training")?.clone();
    let dir = snapshot_dir(cfg, out);
    let t0 = Instant::now();
    match &mut plan {
        TrainingPlan::TopDown { n1, n2 } => {
            let store = run_top_down(&problem, *n1, *n2, &newton_of(cfg))?;
            store.save(&dir, &plan)?;
            for (mu, e) in &store.skipped {
                eprintln!("warning: skipped mu=({}, {}): {e}", mu[0], mu[1]);
            }
            println!(
                "train: top-down {} states, {} residual snapshots, {} skipped, {:.2}s -> {}",
                store.states.ncols(),
                store.residual_matrix().ncols(),
                store.skipped.len(),
                t0.elapsed().as_secs_f64(),
                dir.display()
            );
        }
        TrainingPlan::BottomUp {
            n_samples,
            eta,
            seed: plan_seed,
            mu_train,
        } => {
            if let Some(s) = seed.or(cfg.seed) {
                *plan_seed = s;
            }
            let d = ddrom::decomp::build_decomposition(&problem, split_of(cfg)?)?;
            let snaps = run_bottom_up(&problem, &d, *n_samples, *eta, *plan_seed, mu_train, &newton_of(cfg))?;
            std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
            for (i, b) in snaps.blocks.iter().enumerate() {
                ddrb::write(&dir.join(format!("subdomain_{i}.ddrb")), b)?;
            }
            for (i, k, e) in &snaps.skipped {
                eprintln!("warning: subdomain {i} sample {k} skipped: {e}");
            }
            let skipped: Vec<_> = snaps
                .skipped
                .iter()
                .map(|(i, k, e)| json!({"subdomain": i, "sample": k, "error": e}))
                .collect();
            write_json(&dir.join("plan.json"), &json!({"plan": plan, "skipped": skipped}))?;
            println!(
                "train: bottom-up {} subdomains, {} skipped, {:.2}s -> {}",
                snaps.blocks.len(),
                snaps.skipped.len(),
                t0.elapsed().as_secs_f64(),
                dir.display()
            );
        }
    }
    Ok(())
}

fn load_offline(cfg: &Config, out: &Path) -> Result<Offline> {
    let problem = cfg.problem.build()?;
    let split = split_of(cfg)?;
    let dir = snapshot_dir(cfg, out);
    if dir.join("states.ddrb").exists() {
        let store = SnapshotStore::load(&dir)?;
        return Offline::new(problem, split, &store);
    }
    let d = ddrom::decomp::build_decomposition(&problem, split)?;
    let blocks = (0..d.n_subdomains())
        .map(|i| ddrb::read(&dir.join(format!("subdomain_{i}.ddrb"))))
        .collect::<Result<Vec<_>>>()?;
    SnapshotSource::PerSubdomain(&blocks).check(&d)?;
    Ok(Offline::bottom_up(problem, d, blocks))
}

fn cmd_build_bases(cfg: &Config, out: &Path) -> Result<()> {
    let spec = Config::require(&cfg.run, "run")?;
    let off = load_offline(cfg, out)?;
    let bases = off.bases(spec.basis, spec.upsilon_state, spec.upsilon_bnd)?;
    let dir = out.join("bases");
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    for (i, b) in bases.subdomains.iter().enumerate() {
        ddrb::write(&dir.join(format!("interior_{i}.ddrb")), &b.interior)?;
        ddrb::write(&dir.join(format!("interface_{i}.ddrb")), &b.interface)?;
    }
    for (j, p) in bases.port_bases.iter().enumerate() {
        ddrb::write(&dir.join(format!("port_{j}.ddrb")), p)?;
    }
    let dims: Vec<_> = bases
        .subdomains
        .iter()
        .map(|b| json!({"interior": b.interior.ncols(), "interface": b.interface.ncols()}))
        .collect();
    let ports: Vec<usize> = bases.port_bases.iter().map(|p| p.ncols()).collect();
    write_json(
        &dir.join("bases.json"),
        &json!({
            "kind": bases.kind,
            "upsilon_interior": bases.upsilon_interior,
            "upsilon_interface": bases.upsilon_interface,
            "subdomains": dims,
            "ports": ports,
        }),
    )?;
    let n_hat: Vec<usize> = (0..bases.subdomains.len()).map(|i| bases.dim(i)).collect();
    println!("build-bases: {} n_hat={n_hat:?} -> {}", bases.kind.name(), dir.display());
    Ok(())
}

fn cmd_build_hyper(cfg: &Config, out: &Path) -> Result<()> {
    let spec = Config::require(&cfg.hyper, "hyper")?;
    let off = load_offline(cfg, out)?;
    let hyper = off.hyper(spec.method, spec.ratio, spec.upsilon_res, spec.seed_rule)?;
    let dir = out.join("hyper");
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    for (i, h) in hyper.subdomains.iter().enumerate() {
        write_json(
            &dir.join(format!("sample_{i}.json")),
            &json!({
                "sample_nodes": h.sample_nodes,
                "sample_rows": h.sample_rows,
                "state_interior": h.state_interior,
                "state_interface": h.state_interface,
            }),
        )?;
        if let Some(p) = &h.pseudo_inverse {
            ddrb::write(&dir.join(format!("weighting_{i}.ddrb")), p)?;
        }
    }
    let n_s: Vec<usize> = hyper.subdomains.iter().map(|h| h.sample_nodes.len()).collect();
    let n_b: Vec<usize> = hyper.subdomains.iter().map(|h| h.n_b()).collect();
    write_json(
        &dir.join("hyper.json"),
        &json!({"scheme": hyper.scheme, "spec": spec, "n_s": n_s, "n_b": n_b}),
    )?;
    println!(
        "build-hyper: {} n_s={n_s:?} n_b={n_b:?} -> {}",
        hyper.scheme.name(),
        dir.display()
    );
    Ok(())
}

fn cmd_rom_solve(cfg: &Config, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec = *Config::require(&cfg.run, "run")?;
    if let Some(s) = seed.or(cfg.seed) {
        spec.seed = s;
    }
    let mu = mu_of(cfg)?;
    let off = load_offline(cfg, out)?;
    let (fom, fom_time) = time_fom(&off.problem, mu, &newton_of(cfg), 1)?;
    let outcome = run_online(&off, &spec, mu, &fom.x, &sqp_of(cfg), 1)?;
    let global = reconstruct_global(&outcome.solution, &off.decomposition, ReconstructMode::PortAverage)?;
    ddrb::write_vector(&out.join("rom_state.ddrb"), &global.x)?;
    let mut doc = serde_json::to_value(&outcome).expect("run outcome serializes");
    doc["fom_time"] = json!(fom_time);
    write_json(&out.join("rom_solution.json"), &doc)?;
    let r = &outcome.record;
    println!(
        "rom-solve: {} {} {} rel_err={:.4e} iterations={} n_hat={:?} t_total={:.4}s fom_time={fom_time:.4}s",
        r.method.name(),
        r.basis.name(),
        r.constraint,
        r.rel_err,
        outcome.iterations,
        outcome.n_hat,
        r.t_total
    );
    Ok(())
}

fn cmd_study(cfg: &Config, seed: Option<u64>, out: &Path) -> Result<()> {
    let grid = Config::require(&cfg.study, "study")?;
    let mu = mu_of(cfg)?;
    let off = load_offline(cfg, out)?;
    let base_seed = seed.or(cfg.seed).unwrap_or(0);
    let study = run_study(&off, grid, mu, &sqp_of(cfg), &newton_of(cfg), base_seed)?;
    let files = report(&study.records, out)?;
    let failures: Vec<_> = study.failures.iter().map(|(k, e)| json!({"run": k, "error": e})).collect();
    write_json(
        &out.join("study_meta.json"),
        &json!({"mu": mu, "fom_time": study.fom_time, "failures": failures}),
    )?;
    for (k, e) in &study.failures {
        eprintln!("warning: {k} failed: {e}");
    }
    println!(
        "study: {} records, {} failed groups, fom_time={:.4}s, wrote {} files",
        study.records.len(),
        study.failures.len(),
        study.fom_time,
        files.len() + 1
    );
    Ok(())
}

fn cmd_report(out: &Path) -> Result<()> {
    let records = harness::read_csv(&out.join("study.csv"))?;
    let files = report(&records, out)?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}
