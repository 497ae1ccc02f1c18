use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use radarsplat::backend::{Mode, SessionConfig, WindowSpec};
use radarsplat::eval::{ape, metrics_csv, MetricsRow};
use radarsplat::io::{self, MeasurementDir};
use radarsplat::kv::KvConfig;
use radarsplat::model::{Pose2, RadarConfig, Vel2};
use radarsplat::pipeline::{ablation_csv, ablation_matrix, ablation_matrix_full, run_ablation, run_frames};
use radarsplat::render::Renderer;
use radarsplat::scene::{load_scene, save_scene};
use radarsplat::sim::{SceneKind, SimScenario};
use radarsplat::Result;

/// Radar Gaussian-splatting odometry: simulate sequences, run the pipeline,
/// score trajectories and render scenes.
#[derive(Parser, Debug)]
#[command(name = "radarsplat", version)]
struct Cli {
    /// Sequential, bitwise-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a sequence into a measurement directory.
    Simulate(SimulateArgs),
    /// Run the pipeline on a measurement directory.
    Run(RunArgs),
    /// Absolute pose error of a TUM trajectory against ground truth.
    Eval(EvalArgs),
    /// Render RA and RD images of a scene from one pose.
    Render(RenderArgs),
    /// Run the ablation matrix on a simulated scenario.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// room, small-loop or large-loop [default: small-loop].
    #[arg(long)]
    scenario: Option<String>,
    /// Scene and noise seed [default: 7].
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only the first N frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Config file with sim.*, noise.* and radar.* keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ScenarioArgs {
    fn build(&self) -> Result<SimScenario> {
        let kv = match &self.config {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::empty(),
        };
        let mut s = SimScenario::from_kv(&kv)?;
        kv.finish()?;
        let kind = match &self.scenario {
            Some(k) => SceneKind::parse(k)?,
            None => s.kind,
        };
        let seed = match (self.seed, kv.raw("sim.seed")) {
            (Some(seed), _) => seed,
            (None, Some(_)) => s.seed,
            (None, None) => 7,
        };
        if kind != s.kind || seed != s.seed {
            let n = s.len();
            let mut rebuilt = SimScenario::build(kind, s.radar.clone(), s.noise, s.speed, s.frame_rate, seed)?;
            rebuilt.cfar = s.cfar;
            rebuilt.max_points = s.max_points;
            if kv.raw("sim.frames").is_some() {
                rebuilt = rebuilt.truncated(n);
            }
            s = rebuilt;
        }
        Ok(match self.frames {
            Some(n) => s.truncated(n),
            None => s,
        })
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write 16-bit PGM images.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args, Debug)]
struct BackendArgs {
    /// full, no-backend, no-ba or no-frontend-init.
    #[arg(long)]
    mode: Option<String>,
    /// BA window: radius-<m> or sliding-<n|inf>.
    #[arg(long)]
    window: Option<String>,
    /// Drop the RD term from pose refinement and BA.
    #[arg(long)]
    no_rd: bool,
    /// Session config file with loss.*, opt.*, scene.* and backend.* keys.
    #[arg(long)]
    session: Option<PathBuf>,
}

impl BackendArgs {
    fn session_config(&self, radar: RadarConfig) -> Result<SessionConfig> {
        let kv = match &self.session {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::empty(),
        };
        let mut c = SessionConfig::from_kv_with_radar(&kv, radar)?;
        if let Some(m) = &self.mode {
            c.mode = Mode::parse(m)?;
        }
        if let Some(w) = &self.window {
            c.ba_window = WindowSpec::parse(w)?;
        }
        if self.no_rd {
            c.use_rd = false;
        }
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Measurement directory written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Estimated trajectory (TUM).
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth trajectory (TUM).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "-")]
    scenario: String,
    #[arg(long, default_value = "-")]
    mode: String,
    /// Metrics CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-pose errors CSV to write.
    #[arg(long)]
    per_pose: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Scene file.
    #[arg(long)]
    scene: PathBuf,
    /// Sensor pose as x,y,yaw_deg.
    #[arg(long, allow_hyphen_values = true, default_value = "0,0,0", value_parser = numbers::<3>)]
    pose: [f64; 3],
    /// Body-frame velocity as vx,vy for the RD image.
    #[arg(long, allow_hyphen_values = true, default_value = "0,0", value_parser = numbers::<2>)]
    velocity: [f64; 2],
    /// Config file with radar.* keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Session config file with loss.*, opt.*, scene.* and backend.* keys.
    #[arg(long)]
    session: Option<PathBuf>,
    /// Vary one factor at a time around the session config instead of
    /// running every mode x window x RD combination.
    #[arg(long)]
    quick: bool,
    /// Table CSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn numbers<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format!("expected {N} comma-separated numbers"))?;
    v.try_into().map_err(|_| format!("expected {N} comma-separated numbers"))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let s = a.scenario.build()?;
    MeasurementDir::new(&a.out).write_scenario(&s, a.pgm)?;
    println!("wrote {} frames of {} to {}", s.len(), s.kind.name(), a.out.display());
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let dir = MeasurementDir::new(&a.input);
    let radar = dir.radar_config()?;
    let cfg = a.backend.session_config(radar)?;
    let frames = dir.read_frames(&cfg.radar)?;
    let out = run_frames(&cfg, &frames)?;
    io::write_tum(&out.trajectory, a.out.join("trajectory.tum"))?;
    io::write_tum(&out.keyframes, a.out.join("keyframes.tum"))?;
    save_scene(&out.scene, a.out.join("scene.txt"))?;
    io::write_text(a.out.join("loss_log.csv"), &io::loss_log_csv(&out.loss_log))?;
    let mut w = radarsplat::kv::KvWriter::new();
    w.comment("session configuration used for this run");
    cfg.write_kv(&mut w);
    io::write_text(a.out.join("session.cfg"), &w.finish())?;
    println!(
        "{}: {} frames, {} keyframes, {} gaussians -> {}",
        cfg.mode.name(),
        frames.len(),
        out.keyframes.len(),
        out.scene.len(),
        a.out.display()
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let est = io::read_tum(&a.est)?;
    let gt = io::read_tum(&a.gt)?;
    let r = ape(&est, &gt)?;
    if r.unmatched > 0 {
        log::warn!("{} estimated poses had no ground truth within half a frame period", r.unmatched);
    }
    let row = MetricsRow { scenario: a.scenario.clone(), mode: a.mode.clone(), trans_rmse_m: r.trans_rmse, rot_rmse_deg: r.rot_rmse };
    println!("{:<14} {:<18} {:>14} {:>14}", "scenario", "mode", "trans_rmse_m", "rot_rmse_deg");
    println!("{:<14} {:<18} {:>14.6} {:>14.6}", row.scenario, row.mode, row.trans_rmse_m, row.rot_rmse_deg);
    println!("({} matched poses, {} unmatched)", r.per_pose.len(), r.unmatched);
    if let Some(p) = &a.out {
        io::write_text(p, &metrics_csv(&[row]))?;
    }
    if let Some(p) = &a.per_pose {
        let mut s = String::from("t,trans_m,rot_deg\n");
        for e in &r.per_pose {
            s.push_str(&format!("{},{},{}\n", e.t, e.trans, e.rot_deg));
        }
        io::write_text(p, &s)?;
    }
    Ok(())
}

fn render(a: &RenderArgs) -> Result<()> {
    let kv = match &a.config {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::empty(),
    };
    let radar = RadarConfig::from_kv(&kv)?;
    let scene = load_scene(&a.scene)?;
    let [x, y, yaw] = a.pose;
    let [vx, vy] = a.velocity;
    let (ra, rd) = Renderer::new(&radar).render_frame(&scene, &Pose2::new(x, y, yaw.to_radians()), &Vel2::new(vx, vy))?;
    io::write_image_csv(&ra, a.out.join("ra.csv"))?;
    io::write_image_csv(&rd, a.out.join("rd.csv"))?;
    io::write_image_pgm(&ra, a.out.join("ra.pgm"))?;
    io::write_image_pgm(&rd, a.out.join("rd.pgm"))?;
    println!("rendered {} gaussians: RA {:?}, RD {:?} -> {}", scene.len(), ra.shape(), rd.shape(), a.out.display());
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let s = a.scenario.build()?;
    let kv = match &a.session {
        Some(p) => KvConfig::load(p)?,
        None => KvConfig::empty(),
    };
    let base = SessionConfig::from_kv_with_radar(&kv, s.radar.clone())?;
    let cells = if a.quick { ablation_matrix(base.ba_window) } else { ablation_matrix_full() };
    let rows = run_ablation(&s, &base, &cells)?;
    let table = ablation_csv(&rows);
    print!("{table}");
    if let Some(p) = &a.out {
        io::write_text(p, &table)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.deterministic {
        log::info!("deterministic mode: all work runs sequentially");
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
