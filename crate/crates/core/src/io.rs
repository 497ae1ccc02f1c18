//! File formats: TUM trajectories, CSV and 16-bit PGM images, measurement
//! directories and run logs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::backend::LossRecord;
use crate::error::{Error, Result};
use crate::frame::RadarFrame;
use crate::frontend::{DopplerPoint, GyroSample};
use crate::image::Image;
use crate::kv::{KvConfig, KvWriter};
use crate::model::{Pose2, RadarConfig, StampedPose, Trajectory};
use crate::scene::save_scene;
use crate::sim::SimScenario;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_fields(line: &str, sep: impl Fn(char) -> bool, path: &Path, no: usize) -> Result<Vec<f64>> {
    line.split(sep)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|e| Error::parse(path, no, format!("`{s}`: {e}"))))
        .collect()
}

/// `t x y z qx qy qz qw` with `z = 0` and the yaw as a rotation about z.
pub fn trajectory_to_tum(traj: &[StampedPose]) -> String {
    let mut s = String::from("# timestamp x y z qx qy qz qw\n");
    for p in traj {
        let (qz, qw) = (p.pose.yaw / 2.0).sin_cos();
        let _ = writeln!(s, "{} {} {} 0 0 0 {} {}", p.t, p.pose.x, p.pose.y, qz, qw);
    }
    s
}

pub fn trajectory_from_tum(text: &str, path: &Path) -> Result<Trajectory> {
    data_lines(text)
        .map(|(no, line)| {
            let f = parse_fields(line, char::is_whitespace, path, no)?;
            if f.len() != 8 {
                return Err(Error::parse(path, no, format!("expected 8 fields, got {}", f.len())));
            }
            Ok(StampedPose::new(f[0], Pose2::new(f[1], f[2], 2.0 * f[6].atan2(f[7]))))
        })
        .collect()
}

pub fn write_tum(traj: &[StampedPose], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &trajectory_to_tum(traj))
}

pub fn read_tum(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    trajectory_from_tum(&read(path)?, path)
}

/// One image row per line, full precision.
pub fn image_to_csv(img: &Image) -> String {
    let mut s = String::with_capacity(img.rows() * img.cols() * 12);
    for r in 0..img.rows() {
        for (c, v) in img.row(r).iter().enumerate() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn image_from_csv(text: &str, path: &Path) -> Result<Image> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (no, line) in data_lines(text) {
        let f = parse_fields(line, |c| c == ',', path, no)?;
        match cols {
            None => cols = Some(f.len()),
            Some(n) if n != f.len() => {
                return Err(Error::parse(path, no, format!("row has {} values, expected {n}", f.len())));
            }
            _ => {}
        }
        data.extend(f);
        rows += 1;
    }
    Image::from_vec(rows, cols.unwrap_or(0), data)
}

pub fn write_image_csv(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &image_to_csv(img))
}

pub fn read_image_csv(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    image_from_csv(&read(path)?, path)
}

/// Binary 16-bit PGM, scaled so the maximum maps to 65535.
pub fn image_to_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.cols(), img.rows()).into_bytes();
    let max = img.max();
    let k = if max > 0.0 && max.is_finite() { 65535.0 / max } else { 0.0 };
    for v in img.as_slice() {
        let q = (v.max(0.0) * k).round().min(65535.0) as u16;
        out.extend(q.to_be_bytes());
    }
    out
}

pub fn write_image_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, image_to_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn points_to_csv(points: &[DopplerPoint]) -> String {
    let mut s = String::from("x,y,doppler\n");
    for p in points {
        let _ = writeln!(s, "{},{},{}", p.pos[0], p.pos[1], p.doppler);
    }
    s
}

pub fn points_from_csv(text: &str, path: &Path) -> Result<Vec<DopplerPoint>> {
    data_lines(text)
        .filter(|(_, l)| !l.starts_with('x'))
        .map(|(no, line)| {
            let f = parse_fields(line, |c| c == ',', path, no)?;
            if f.len() != 3 {
                return Err(Error::parse(path, no, format!("expected x,y,doppler, got {} values", f.len())));
            }
            Ok(DopplerPoint::new([f[0], f[1]], f[2]))
        })
        .collect()
}

pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut s = String::from("frame,stage,iteration,loss\n");
    for r in log {
        let _ = writeln!(s, "{},{},{},{}", r.frame, r.stage.name(), r.iteration, r.loss);
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write(path.as_ref(), text)
}

/// On-disk layout of a simulated (or recorded) sequence.
#[derive(Debug, Clone)]
pub struct MeasurementDir {
    pub root: PathBuf,
}

impl MeasurementDir {
    pub const CONFIG: &'static str = "scenario.cfg";
    pub const GYRO: &'static str = "gyro.csv";
    pub const GROUND_TRUTH: &'static str = "groundtruth.tum";
    pub const GT_SCENE: &'static str = "gt_scene.txt";

    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn frame_file(&self, stem: &str, k: usize, ext: &str) -> PathBuf {
        self.root.join("frames").join(format!("{stem}_{k:05}.{ext}"))
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join(Self::CONFIG)
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.root.join(Self::GROUND_TRUTH)
    }

    /// Synthesizes and writes every frame of `scenario`, plus its config,
    /// ground truth and scene. `pgm` also writes viewable images.
    pub fn write_scenario(&self, scenario: &SimScenario, pgm: bool) -> Result<()> {
        let mut w = KvWriter::new();
        w.comment("scenario used to synthesize this directory");
        scenario.write_kv(&mut w);
        write(&self.config_path(), &w.finish())?;
        write_tum(&scenario.gt_trajectory(), self.ground_truth_path())?;
        save_scene(&scenario.gt_scene, self.root.join(Self::GT_SCENE))?;
        let mut gyro = String::from("frame,timestamp,omega\n");
        for k in 0..scenario.len() {
            let f = scenario.synthesize_frame(k)?;
            self.write_frame(&f, pgm)?;
            let _ = writeln!(gyro, "{},{},{}", k, f.timestamp, f.gyro.omega);
        }
        write(&self.root.join(Self::GYRO), &gyro)
    }

    pub fn write_frame(&self, f: &RadarFrame, pgm: bool) -> Result<()> {
        write_image_csv(&f.ra, self.frame_file("ra", f.index, "csv"))?;
        write_image_csv(&f.rd, self.frame_file("rd", f.index, "csv"))?;
        write(&self.frame_file("points", f.index, "csv"), &points_to_csv(&f.points))?;
        if pgm {
            write_image_pgm(&f.ra, self.frame_file("ra", f.index, "pgm"))?;
            write_image_pgm(&f.rd, self.frame_file("rd", f.index, "pgm"))?;
        }
        Ok(())
    }

    /// Radar configuration recorded with the sequence.
    pub fn radar_config(&self) -> Result<RadarConfig> {
        RadarConfig::from_kv(&KvConfig::load(self.config_path())?)
    }

    /// All frames in timestamp order, validated against `cfg`.
    pub fn read_frames(&self, cfg: &RadarConfig) -> Result<Vec<RadarFrame>> {
        let gyro_path = self.root.join(Self::GYRO);
        let text = read(&gyro_path)?;
        let mut frames = Vec::new();
        for (no, line) in data_lines(&text).filter(|(_, l)| !l.starts_with("frame")) {
            let f = parse_fields(line, |c| c == ',', &gyro_path, no)?;
            if f.len() != 3 || f[0] < 0.0 || f[0].fract() != 0.0 {
                return Err(Error::parse(&gyro_path, no, "expected frame,timestamp,omega"));
            }
            let k = f[0] as usize;
            let ra = read_image_csv(self.frame_file("ra", k, "csv"))?;
            let rd = read_image_csv(self.frame_file("rd", k, "csv"))?;
            if ra.shape() != (cfg.n_range(), cfg.n_azimuth()) || rd.shape() != (cfg.n_range(), cfg.n_doppler()) {
                return Err(Error::Shape(format!("frame {k}: RA {:?}, RD {:?} disagree with the config", ra.shape(), rd.shape())));
            }
            let pp = self.frame_file("points", k, "csv");
            let points = points_from_csv(&read(&pp)?, &pp)?;
            frames.push(RadarFrame { index: k, timestamp: f[1], ra, rd, points, gyro: GyroSample { omega: f[2], timestamp: f[1] } });
        }
        Ok(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{NoiseParams, SceneKind};

    #[test]
    fn tum_round_trip() {
        let tr = vec![StampedPose::new(0.0, Pose2::new(1.0, 2.0, 0.3)), StampedPose::new(0.1, Pose2::new(-1.5, 0.25, -3.0))];
        let back = trajectory_from_tum(&trajectory_to_tum(&tr), Path::new("t")).unwrap();
        for (a, b) in tr.iter().zip(&back) {
            assert_eq!(a.t, b.t);
            assert_eq!((a.pose.x, a.pose.y), (b.pose.x, b.pose.y));
            assert!((a.pose.yaw - b.pose.yaw).abs() < 1e-12);
        }
        let err = trajectory_from_tum("0 1 2\n", Path::new("bad.tum")).unwrap_err();
        assert!(err.to_string().contains("bad.tum:1"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let img = Image::from_fn(3, 4, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0));
        assert_eq!(image_from_csv(&image_to_csv(&img), Path::new("i")).unwrap(), img);
        assert!(image_from_csv("1,2\n3\n", Path::new("r.csv")).is_err());
    }

    #[test]
    fn pgm_header_and_scaling() {
        let img = Image::from_vec(1, 2, vec![0.5, 1.0]).unwrap();
        let b = image_to_pgm(&img);
        let head = b"P5\n2 1\n65535\n";
        assert_eq!(&b[..head.len()], head);
        assert_eq!(&b[head.len()..], &[0x80, 0x00, 0xff, 0xff]);
    }

    #[test]
    fn measurement_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SimScenario::preset(SceneKind::Room, 2).unwrap().truncated(3);
        s.noise = NoiseParams::default();
        let m = MeasurementDir::new(dir.path());
        m.write_scenario(&s, true).unwrap();
        let cfg = m.radar_config().unwrap();
        assert_eq!(cfg, s.radar);
        let frames = m.read_frames(&cfg).unwrap();
        assert_eq!(frames.len(), 3);
        for (k, f) in frames.iter().enumerate() {
            assert_eq!(*f, s.synthesize_frame(k).unwrap());
        }
        assert_eq!(read_tum(m.ground_truth_path()).unwrap().len(), 3);
    }
}
