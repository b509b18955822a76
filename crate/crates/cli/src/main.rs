use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use compliant_core::harness::{
    compute_rmse, read_log, run_scenario, write_log, Frame, HarnessError, Metrics, RunOptions, Scenario, Server,
    EXIT_DIVERGED,
};

#[derive(Parser)]
#[command(name = "compliant", version, about = "Simulated compliant arm control scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario offline and write its log.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Run consecutive seeds starting at the scenario (or --seed) seed.
        #[arg(long, default_value_t = 1)]
        repeat: u64,
        /// Log path, overriding the scenario's `log` entry.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Validate a scenario without running it.
    Check { scenario: PathBuf },
    /// Per-axis RMSE of a log over a time window.
    Rmse {
        log: PathBuf,
        /// `t0:t1` in seconds.
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
        #[arg(long, value_enum, default_value_t = FrameArg::Task)]
        frame: FrameArg,
    },
    /// Run a scenario in real time, accepting setpoints over TCP.
    Serve {
        scenario: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Task,
    Joint,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected t0:t1")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad t0 `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad t1 `{b}`"))?;
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, HarnessError> {
    match cmd {
        Command::Run { scenario, seed, repeat, log } => run(&scenario, seed, repeat, log),
        Command::Check { scenario } => {
            let sc = Scenario::<f64>::load(&scenario)?;
            println!("{}: ok", scenario.display());
            println!("joints       {}", sc.model.n_joints());
            println!("ticks        {}", sc.steps());
            println!("disturbances {}", sc.disturbances.len());
            println!("events       {}", sc.events.len());
            Ok(0)
        }
        Command::Rmse { log, window, frame } => {
            let frame = match frame {
                FrameArg::Task => Frame::TaskXyz,
                FrameArg::Joint => Frame::Joint,
            };
            let r = compute_rmse(&read_log(&log)?, window, frame)?;
            let unit = if frame == Frame::TaskXyz { "cm" } else { "rad" };
            println!("{} {unit}", join(&r));
            Ok(0)
        }
        Command::Serve { scenario, port, host, seed, log } => {
            let sc = Scenario::<f64>::load(&scenario)?;
            let server = Server::bind((host.as_str(), port))?;
            eprintln!("listening on {}", server.local_addr()?);
            let out = server.run(&sc, seed)?;
            if let Some(path) = log.or(sc.log.clone()) {
                write_log(&out.log, path)?;
            }
            report(&out.metrics, None);
            Ok(finish_code(out.diverged))
        }
    }
}

fn run(path: &Path, seed: Option<u64>, repeat: u64, log: Option<PathBuf>) -> Result<i32, HarnessError> {
    let sc = Scenario::<f64>::load(path)?;
    let first = seed.unwrap_or(sc.seed);
    let mut code = 0;
    for s in first..first + repeat.max(1) {
        let out = run_scenario(&sc, &RunOptions { seed: Some(s), ..RunOptions::default() })?;
        if let Some(p) = log.clone().or_else(|| sc.log.clone()) {
            let p = if repeat > 1 { with_seed_suffix(&p, s) } else { p };
            write_log(&out.log, &p)?;
        }
        report(&out.metrics, Some(s));
        if let Some(t) = out.diverged {
            eprintln!("seed {s}: diverged at t = {t} s");
            code = EXIT_DIVERGED;
        }
    }
    Ok(code)
}

fn with_seed_suffix(p: &Path, seed: u64) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = p.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    p.with_file_name(format!("{stem}-seed{seed}{ext}"))
}

fn finish_code(diverged: Option<f64>) -> i32 {
    match diverged {
        Some(t) => {
            eprintln!("diverged at t = {t} s");
            EXIT_DIVERGED
        }
        None => 0,
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

fn report(m: &Metrics, seed: Option<u64>) {
    if let Some(s) = seed {
        println!("seed              {s}");
    }
    println!("ticks             {}", m.ticks);
    println!("window            {}:{} s", m.window.0, m.window.1);
    println!("rmse_xyz          {} cm", join(&m.rmse_xyz_cm));
    println!("rmse_joint        {} rad", join(&m.rmse_joint));
    println!("max_abs_tau_m     {}", join(&m.max_abs_tau_m));
    println!("clamp_counts      {}", m.clamp_counts.iter().map(u64::to_string).collect::<Vec<_>>().join(" "));
    println!("tau_f_hat_mean    {}", join(&m.tau_f_hat_mean_abs));
    println!("tau_f_hat_max     {}", join(&m.tau_f_hat_max_abs));
    println!("peak_ee_force     {:.3} N", m.peak_ee_force);
    println!("latency_us        p50 {:.2} p99 {:.2} max {:.2}", m.latency_p50_us, m.latency_p99_us, m.latency_max_us);
    println!("mailbox_dropped   {}", m.mailbox_dropped);
    for e in &m.events {
        match &e.reason {
            None => println!("event             t={} {} applied", e.t, e.key),
            Some(r) => println!("event             t={} {} rejected: {r}", e.t, e.key),
        }
    }
}
