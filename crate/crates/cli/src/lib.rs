//! The `bcwave` command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.

pub mod config;
mod selftest;

use std::fs;
use std::path::{Path, PathBuf};

use bcwave::bc_ops::build_k;
use bcwave::dtn::{assemble_dtn, speed_fingerprint, DtnMatrix, TimePlan};
use bcwave::grid::BoundaryGeometry;
use bcwave::io::{export_record, load_dtn, save_dtn, save_k, sha256_hex, write_field};
use bcwave::observability::{certify, observability_trial, ObservabilityCertificate, TrialConfig};
use bcwave::recon::{reconstruct_speed, stability_experiment, ReconData};
use bcwave::signal::{BoundarySignal, SignalLayout};
use bcwave::solver::{solve_ibvp, DirichletControl, WaveProblem};
use bcwave::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use config::{Resolved, RunConfig, TimeSpec};

#[derive(Parser, Debug)]
#[command(name = "bcwave", version, about = "Boundary-control wave speed reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One controlled wave solve; exports snapshots and the normal trace.
    Forward(Common),
    /// Assemble and persist the DtN map on (0, 2T).
    Dtn(Common),
    /// Fourier samples of c⁻² and the recovered speed.
    Reconstruct(Common),
    /// Lipschitz ratio table for c + s·δ.
    Stability(Common),
    /// Observability constants, optionally with seeded trials.
    Certify(Common),
    /// Quick checks of exactly known cases.
    Selftest,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration (see docs/config.schema.json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    t_final: Option<f64>,
    /// Cells per axis.
    #[arg(long)]
    n_cells: Option<usize>,
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long)]
    sigma_cut: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Reuse a persisted DtN map (manifest path).
    #[arg(long)]
    dtn_in: Option<PathBuf>,
    /// Where to persist the assembled DtN map.
    #[arg(long)]
    dtn_out: Option<PathBuf>,
    /// Persist the connecting matrix K.
    #[arg(long)]
    k_out: Option<PathBuf>,
    /// Also write the stability table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    let result = match cli.command {
        Command::Selftest => selftest::run(),
        Command::Forward(c) => with_config(&c, "forward", forward),
        Command::Dtn(c) => with_config(&c, "dtn", dtn),
        Command::Reconstruct(c) => with_config(&c, "reconstruct", reconstruct),
        Command::Stability(c) => with_config(&c, "stability", stability),
        Command::Certify(c) => with_config(&c, "certify", certify_cmd),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("BCWAVE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("BCWAVE_THREADS = {v:?} is not a count")))?;
    if n == 0 {
        return Err(Error::Config("BCWAVE_THREADS must be positive".into()));
    }
    // a pool may already exist when run() is called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// State shared by the compute commands.
struct Run {
    cfg: RunConfig,
    args: Common,
    base: PathBuf,
    out: PathBuf,
    resolved: Resolved,
    inputs: serde_json::Map<String, serde_json::Value>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, serde_json::to_vec_pretty(value)?)?;
        self.outputs.push(path);
        Ok(())
    }

    fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    fn t_final(&self) -> Result<f64> {
        match self.cfg.time {
            TimeSpec::Final { t_final } => Ok(t_final),
            TimeSpec::Auto(_) => {
                let cert = certify(&self.cfg.weight(), &self.resolved.speed, &self.cfg.certify_config())?;
                Ok(self.cfg.trial_factor * cert.t_min)
            }
        }
    }

    fn plan(&self) -> Result<TimePlan> {
        self.cfg.plan(&self.resolved, self.t_final()?)
    }

    /// `Λ_{2T}` from `--dtn-in` (checked against the configuration) or a fresh assembly.
    fn dtn(&mut self) -> Result<DtnMatrix> {
        let plan = self.plan()?;
        let lam = match self.args.dtn_in.clone() {
            Some(path) => {
                let lam = load_dtn(&path)?;
                if lam.fingerprint() != speed_fingerprint(&self.resolved.speed) {
                    return Err(Error::Config(format!("{} was assembled for a different speed", path.display())));
                }
                if *lam.time() != plan.time_2t() || lam.substeps() != plan.substeps {
                    return Err(Error::Config(format!("{} does not match the configured time plan", path.display())));
                }
                self.inputs.insert("dtn_in".into(), json!({ "path": path, "sha256": sha256_hex(&fs::read(&path)?) }));
                lam
            }
            None => assemble_dtn(&self.resolved.speed, &plan)?,
        };
        if let Some(path) = self.args.dtn_out.clone() {
            save_dtn(&path, &lam)?;
            self.record(path.clone());
            self.record(path.with_extension("bin"));
        }
        Ok(lam)
    }

    fn finish(self, command: &str) -> Result<()> {
        let outputs: Vec<serde_json::Value> = self
            .outputs
            .iter()
            .map(|p| -> Result<serde_json::Value> {
                let name = p.strip_prefix(&self.out).unwrap_or(p);
                Ok(json!({ "path": name, "sha256": sha256_hex(&fs::read(p)?) }))
            })
            .collect::<Result<_>>()?;
        let config = serde_json::to_vec(&self.cfg)?;
        let manifest = json!({
            "command": command,
            "config": self.cfg,
            "config_sha256": sha256_hex(&config),
            "inputs": self.inputs,
            "outputs": outputs,
        });
        fs::write(self.out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }
}

fn load_config(args: &Common) -> Result<(RunConfig, PathBuf)> {
    let (mut cfg, base) = match &args.config {
        Some(p) => {
            let text = fs::read(p)?;
            let cfg: RunConfig = serde_json::from_slice(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    if let Some(t) = args.t_final {
        cfg.time = TimeSpec::Final { t_final: t };
    }
    if let Some(n) = args.n_cells {
        cfg.grid.n_cells = vec![n; cfg.grid.dim];
    }
    if let Some(s) = args.substeps {
        cfg.substeps = s;
    }
    if let Some(s) = args.sigma_cut {
        cfg.sigma_cut = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.trials {
        cfg.trials = n;
    }
    Ok((cfg, base))
}

fn with_config(args: &Common, command: &str, body: fn(&mut Run) -> Result<()>) -> Result<()> {
    let (cfg, base) = load_config(args)?;
    let resolved = cfg.validate(&base)?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    let mut inputs = serde_json::Map::new();
    inputs.insert("speed_fingerprint".into(), json!(speed_fingerprint(&resolved.speed)));
    let mut run = Run { cfg, args: args.clone(), base, out, resolved, inputs, outputs: Vec::new() };
    body(&mut run)?;
    run.finish(command)
}

fn forward(run: &mut Run) -> Result<()> {
    let plan = run.plan()?;
    let grid = run.resolved.grid.clone();
    let spec = run.cfg.forward.clone();
    let boundary = BoundaryGeometry::new(&grid);
    let xs: Vec<[f64; 2]> = boundary.trace_nodes().iter().map(|t| grid.coord(t.index)).collect();
    let layout = SignalLayout::new(&boundary, plan.time_t());
    let f = BoundarySignal::from_fn(&layout, |t, b| {
        if t == 0.0 {
            return 0.0;
        }
        let r2: f64 = spec.center.iter().enumerate().map(|(a, c)| (xs[b][a] - c).powi(2)).sum();
        (-((t - spec.t0) / spec.width_t).powi(2)).exp() * (-r2 / spec.width_x).exp()
    });
    let n_steps = plan.signal_steps * plan.substeps;
    let dt = plan.solver_dt();
    let wanted = if spec.snapshots.is_empty() { vec![0.5 * plan.t_final, plan.t_final] } else { spec.snapshots.clone() };
    let mut times = Vec::new();
    for t in wanted {
        if !(0.0..=plan.t_final).contains(&t) {
            return Err(Error::Config(format!("snapshot time {t} lies outside [0, T]")));
        }
        times.push((t / dt).round() * dt);
    }
    let record = solve_ibvp(
        &run.resolved.speed,
        &WaveProblem {
            control: Some(DirichletControl::new(f)?),
            initial: None,
            t_final: plan.t_final,
            n_steps,
            snapshot_times: times,
        },
    )?;
    let dir = run.out.join("forward");
    let manifest = export_record(&dir, &record)?;
    for s in &manifest.snapshots {
        run.record(dir.join(&s.u));
        run.record(dir.join(&s.ut));
    }
    run.record(dir.join("normal_trace.bin"));
    run.record(dir.join("record.json"));
    println!("forward: {} steps, CFL ratio {:.3}, {} snapshots in {}", n_steps, record.cfl, manifest.times.len(), dir.display());
    Ok(())
}

fn dtn(run: &mut Run) -> Result<()> {
    if run.args.dtn_out.is_none() {
        run.args.dtn_out = Some(run.out.join("dtn.json"));
    }
    let lam = run.dtn()?;
    println!(
        "dtn: {} boundary nodes, {} signal steps on (0, 2T), fingerprint {}",
        lam.n_bnd(),
        lam.time().n_steps,
        &lam.fingerprint()[..12]
    );
    Ok(())
}

fn reconstruct(run: &mut Run) -> Result<()> {
    let lam = run.dtn()?;
    if let Some(path) = run.args.k_out.clone() {
        save_k(&path, &run.resolved.grid, &build_k(&lam)?)?;
        run.record(path.clone());
        run.record(path.with_extension("bin"));
    }
    let data = ReconData::new(&lam, run.cfg.sigma_cut)?;
    let rc = run.cfg.recon_config(&run.resolved.grid);
    let truth = run.resolved.speed.clone();
    let report = reconstruct_speed(&data, &rc, Some(&truth))?;
    let out = run.out.clone();
    if let Some(rho) = &report.rho {
        write_field(&out.join("rho.bcw"), "rho", rho)?;
        run.record(out.join("rho.bcw"));
    }
    if let Some(speed) = &report.speed {
        write_field(&out.join("speed.bcw"), "speed", speed)?;
        run.record(out.join("speed.bcw"));
    }
    let f0 = report.samples.iter().find(|s| s.xi.iter().all(|&x| x == 0.0)).map(|s| s.value.re);
    let summary = json!({
        "plan": run.plan()?,
        "config": rc,
        "rank": data.pinv().rank(),
        "lambda_max": data.pinv().lambda_max(),
        "report": report,
    });
    run.write_json("recon_report.json", &summary)?;
    println!(
        "reconstruct: {} samples, rank {}, F(c⁻²)(0) = {}",
        report.samples.len(),
        data.pinv().rank(),
        f0.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    if report.over_truncated {
        eprintln!("warning: the spectral cut discarded more than half of some sample's data");
    }
    Ok(())
}

fn stability(run: &mut Run) -> Result<()> {
    let plan = run.plan()?;
    let delta = run.cfg.stability.delta.build(&run.resolved.grid, &run.base)?;
    let xis = run.cfg.recon_config(&run.resolved.grid).lattice.points(run.resolved.grid.dim());
    let table = stability_experiment(&run.resolved.speed, &delta, &run.cfg.stability.amplitudes, &xis, &plan)?;
    run.write_json("stability.json", &table)?;
    if let Some(path) = run.args.csv.clone() {
        let mut text = String::from("s,xi_norm,lhs,distance,ratio\n");
        for r in &table.rows {
            let xn = r.xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ratio = r.ratio.map_or(String::new(), |v| format!("{v:e}"));
            text.push_str(&format!("{},{},{:e},{:e},{}\n", r.s, xn, r.lhs, r.distance.total(), ratio));
        }
        fs::write(&path, text)?;
        run.record(path);
    }
    println!("stability: {} rows, max ratio spread {:.4}", table.rows.len(), table.max_spread());
    Ok(())
}

fn certify_cmd(run: &mut Run) -> Result<()> {
    let cert: ObservabilityCertificate = certify(&run.cfg.weight(), &run.resolved.speed, &run.cfg.certify_config())?;
    run.write_json("certificate.json", &cert)?;
    println!("certify: τ = {:.4}, T_min = {:.4e}, |Γ| = {} nodes", cert.tau, cert.t_min, cert.gamma.len());
    if run.cfg.trials > 0 {
        let cfg = TrialConfig {
            n_trials: run.cfg.trials,
            t_final: run.cfg.trial_factor * cert.t_min,
            seed: run.cfg.seed,
            full_boundary: false,
        };
        let rep = observability_trial(&cert, &run.resolved.speed, &cfg)?;
        run.write_json("trials.json", &rep)?;
        println!(
            "trials: {} runs, max E(0)/(C(T)·flux) = {}, max drift {:.2e}",
            rep.trials.len(),
            rep.max_margin.map_or("n/a".into(), |m| format!("{m:.3e}")),
            rep.max_drift
        );
    }
    Ok(())
}
