//! End-to-end drivers: run a session over a scenario, score it, and sweep
//! the ablation matrix.

use std::fmt::Write as _;

use crate::backend::{LossRecord, Mode, Session, SessionConfig, WindowSpec};
use crate::error::Result;
use crate::eval::{ape, ApeResult};
use crate::frame::RadarFrame;
use crate::model::Trajectory;
use crate::scene::GaussianScene;
use crate::sim::SimScenario;

/// Outputs of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub keyframes: Trajectory,
    pub scene: GaussianScene,
    pub loss_log: Vec<LossRecord>,
}

/// Feeds `frames` through a fresh session.
pub fn run_frames<'a>(cfg: &SessionConfig, frames: impl IntoIterator<Item = &'a RadarFrame>) -> Result<RunOutput> {
    let mut s = Session::new(cfg.clone())?;
    for f in frames {
        s.process_frame(f)?;
    }
    Ok(RunOutput {
        trajectory: s.trajectory(),
        keyframes: s.keyframe_trajectory(),
        scene: s.scene().clone(),
        loss_log: s.loss_log().to_vec(),
    })
}

/// Runs a session over a simulated scenario, synthesizing frames on the fly.
pub fn run_scenario(scenario: &SimScenario, cfg: &SessionConfig) -> Result<RunOutput> {
    let mut s = Session::new(cfg.clone())?;
    for k in 0..scenario.len() {
        let f = scenario.synthesize_frame(k)?;
        s.process_frame(&f)?;
        if k % 100 == 0 {
            log::info!("{} frame {k}/{}: {} keyframes", cfg.mode.name(), scenario.len(), s.keyframes().len());
        }
    }
    Ok(RunOutput {
        trajectory: s.trajectory(),
        keyframes: s.keyframe_trajectory(),
        scene: s.scene().clone(),
        loss_log: s.loss_log().to_vec(),
    })
}

/// One cell of the ablation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationCell {
    pub mode: Mode,
    pub window: WindowSpec,
    pub use_rd: bool,
}

impl AblationCell {
    pub fn apply(&self, base: &SessionConfig) -> SessionConfig {
        let mut c = base.clone();
        c.mode = self.mode;
        c.ba_window = self.window;
        c.use_rd = self.use_rd;
        c
    }
}

/// Mode rows at the default window with RD on, then every window choice for
/// the full pipeline, then RD off for the full pipeline at the default window.
pub fn ablation_matrix(default_window: WindowSpec) -> Vec<AblationCell> {
    let mut cells: Vec<AblationCell> =
        Mode::ALL.iter().map(|&mode| AblationCell { mode, window: default_window, use_rd: true }).collect();
    for w in ablation_windows() {
        if w != default_window {
            cells.push(AblationCell { mode: Mode::Full, window: w, use_rd: true });
        }
    }
    cells.push(AblationCell { mode: Mode::Full, window: default_window, use_rd: false });
    cells
}

/// Every mode x window x RD combination; the frontend-only mode ignores both
/// backend factors and appears once.
pub fn ablation_matrix_full() -> Vec<AblationCell> {
    let windows = ablation_windows();
    let mut cells = vec![AblationCell { mode: Mode::NoBackend, window: WindowSpec::Radius(10.0), use_rd: true }];
    for mode in Mode::ALL.into_iter().filter(|m| *m != Mode::NoBackend) {
        for window in windows {
            for use_rd in [true, false] {
                cells.push(AblationCell { mode, window, use_rd });
            }
        }
    }
    cells
}

/// Radius windows of 1, 5 and 10 m, then sliding windows of 2, 5, 10 and
/// unbounded length.
pub fn ablation_windows() -> [WindowSpec; 7] {
    [
        WindowSpec::Radius(1.0),
        WindowSpec::Radius(5.0),
        WindowSpec::Radius(10.0),
        WindowSpec::Sliding(2),
        WindowSpec::Sliding(5),
        WindowSpec::Sliding(10),
        WindowSpec::Sliding(usize::MAX),
    ]
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub scenario: String,
    pub cell: AblationCell,
    pub ape: ApeResult,
}

pub const ABLATION_HEADER: &str = "scenario,mode,window,rd_loss,trans_rmse_m,rot_rmse_deg";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    s.push('\n');
    for r in rows {
        let window = if r.cell.mode == Mode::NoBackend { "-".to_string() } else { r.cell.window.label() };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.scenario,
            r.cell.mode.name(),
            window,
            if r.cell.use_rd { "on" } else { "off" },
            r.ape.trans_rmse,
            r.ape.rot_rmse
        );
    }
    s
}

/// Runs every cell on the same scenario and scores it against ground truth.
pub fn run_ablation(scenario: &SimScenario, base: &SessionConfig, cells: &[AblationCell]) -> Result<Vec<AblationRow>> {
    let gt = scenario.gt_trajectory();
    cells
        .iter()
        .map(|cell| {
            let out = run_scenario(scenario, &cell.apply(base))?;
            Ok(AblationRow { scenario: scenario.kind.name().to_string(), cell: *cell, ape: ape(&out.trajectory, &gt)? })
        })
        .collect()
}
