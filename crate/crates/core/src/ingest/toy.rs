//! Procedural toy dataset: one parametric shape per instance, several color
//! renderings under varied background and rotation, and one simulated event
//! stream of the shape moving on a small circle.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::event::EventStream;
use crate::par::Exec;

use super::evt::write_event_file;
use super::imageio::{intensity_from_color, write_color, LUMA};
use super::manifest::{DatasetManifest, InstanceEntry};
use super::sim::{simulate_dvs, MotionTrajectory, SimulatorConfig};
use super::IngestError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub num_instances: usize,
    pub images_per_instance: usize,
    pub seed: u64,
    /// Side length of renderings and of the simulated sensor.
    pub size: u32,
    /// Length of each simulated recording in µs.
    pub duration: u64,
    pub motion_radius: f64,
    pub motion_period: u64,
    pub sim: SimulatorConfig,
}

impl ToyConfig {
    pub fn new(num_instances: usize, images_per_instance: usize, seed: u64) -> Self {
        Self {
            num_instances,
            images_per_instance,
            seed,
            size: 32,
            // three 90 ms bins plus slack so the third bin is complete
            duration: 290_000,
            motion_radius: 2.0,
            motion_period: 90_000,
            sim: SimulatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outline {
    Polygon { sides: u32, phase: f64 },
    Ellipse { aspect: f64 },
    Ring { inner: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pattern {
    Solid,
    Stripes { period: f64, angle: f64 },
    Checker { period: f64 },
}

/// Parameters that make one instance visually distinct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyShape {
    outline: Outline,
    pattern: Pattern,
    radius: f64,
    primary: [f64; 3],
    secondary: [f64; 3],
}

fn luma(c: [f64; 3]) -> f64 {
    LUMA[0] * c[0] + LUMA[1] * c[1] + LUMA[2] * c[2]
}

/// Rescales a color so its luminance equals `target`.
fn with_luma(c: [f64; 3], target: f64) -> [f64; 3] {
    let l = luma(c);
    if target <= l {
        let k = if l > 0.0 { target / l } else { 0.0 };
        c.map(|v| v * k)
    } else {
        let k = (1.0 - target) / (1.0 - l);
        c.map(|v| 1.0 - (1.0 - v) * k)
    }
}

fn random_color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    let c = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    with_luma(c, rng.gen_range(lo..hi))
}

impl ToyShape {
    pub fn random(index: usize, rng: &mut ChaCha8Rng) -> Self {
        let outline = match index % 3 {
            0 => Outline::Polygon {
                sides: rng.gen_range(3..=6),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            },
            1 => Outline::Ellipse {
                aspect: rng.gen_range(0.45..0.9),
            },
            _ => Outline::Ring {
                inner: rng.gen_range(0.3..0.6),
            },
        };
        let pattern = match (index / 3 + rng.gen_range(0..3)) % 3 {
            0 => Pattern::Solid,
            1 => Pattern::Stripes {
                period: rng.gen_range(3.0..6.0),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
            },
            _ => Pattern::Checker {
                period: rng.gen_range(3.0..6.0),
            },
        };
        let (primary, secondary) = if rng.gen::<bool>() {
            (random_color(rng, 0.05, 0.25), random_color(rng, 0.75, 0.95))
        } else {
            (random_color(rng, 0.75, 0.95), random_color(rng, 0.05, 0.25))
        };
        Self {
            outline,
            pattern,
            radius: rng.gen_range(0.28..0.4),
            primary,
            secondary,
        }
    }

    /// Shape coverage test in normalized local coordinates (unit = image side).
    fn inside(&self, u: f64, v: f64) -> bool {
        let r = self.radius;
        match self.outline {
            Outline::Polygon { sides, phase } => {
                let n = sides as f64;
                let sector = std::f64::consts::TAU / n;
                let theta = (v.atan2(u) - phase).rem_euclid(sector);
                let limit = r * (std::f64::consts::PI / n).cos()
                    / (theta - sector / 2.0).cos();
                u.hypot(v) <= limit
            }
            Outline::Ellipse { aspect } => (u / r).powi(2) + (v / (r * aspect)).powi(2) <= 1.0,
            Outline::Ring { inner } => {
                let d = u.hypot(v);
                d <= r && d >= r * inner
            }
        }
    }

    fn fill(&self, u: f64, v: f64, size: f64) -> [f64; 3] {
        let (px, py) = (u * size, v * size);
        let alt = match self.pattern {
            Pattern::Solid => false,
            Pattern::Stripes { period, angle } => {
                let s = px * angle.cos() + py * angle.sin();
                (s / period).floor() as i64 % 2 == 0
            }
            Pattern::Checker { period } => {
                ((px / period).floor() as i64 + (py / period).floor() as i64) % 2 == 0
            }
        };
        if alt {
            self.secondary
        } else {
            self.primary
        }
    }

    /// Renders with 4x4 supersampling.
    pub fn render(&self, size: u32, rotation_deg: f64, background: [f64; 3]) -> RgbImage {
        const SS: u32 = 4;
        let s = size as f64;
        let (sin, cos) = rotation_deg.to_radians().sin_cos();
        RgbImage::from_fn(size, size, |x, y| {
            let mut acc = [0.0; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let fx = (x as f64 + (sx as f64 + 0.5) / SS as f64) / s - 0.5;
                    let fy = (y as f64 + (sy as f64 + 0.5) / SS as f64) / s - 0.5;
                    let u = fx * cos + fy * sin;
                    let v = -fx * sin + fy * cos;
                    let c = if self.inside(u, v) {
                        self.fill(u, v, s)
                    } else {
                        background
                    };
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            let n = (SS * SS) as f64;
            Rgb(acc.map(|a| ((a / n).clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }
}

/// In-memory content of one generated instance.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub id: String,
    pub images: Vec<RgbImage>,
    pub stream: EventStream,
}

const CANONICAL_BACKGROUND: [f64; 3] = [0.5, 0.5, 0.5];

pub fn render_instance(cfg: &ToyConfig, index: usize) -> Result<ToyInstance, IngestError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let shape = ToyShape::random(index, &mut rng);

    let images = (0..cfg.images_per_instance)
        .map(|j| {
            let (rotation, background) = if j == 0 {
                (0.0, CANONICAL_BACKGROUND)
            } else {
                (rng.gen_range(-30.0..30.0), random_color(&mut rng, 0.4, 0.6))
            };
            shape.render(cfg.size, rotation, background)
        })
        .collect();

    let canonical = shape.render(cfg.size, 0.0, CANONICAL_BACKGROUND);
    let frame = intensity_from_color(&canonical, cfg.sim.epsilon)?;
    let traj = MotionTrajectory::circular(cfg.duration, cfg.motion_radius, cfg.motion_period)?;
    let stream = simulate_dvs(&frame, &traj, &cfg.sim)?.rebased();
    Ok(ToyInstance {
        id: format!("inst_{index:03}"),
        images,
        stream,
    })
}

/// Renders every instance in memory.
pub fn render_toy_dataset(cfg: &ToyConfig, exec: Exec) -> Result<Vec<ToyInstance>, IngestError> {
    if cfg.num_instances < 2 {
        return Err(IngestError::InvalidConfig(
            "a toy dataset needs at least 2 instances".into(),
        ));
    }
    if cfg.images_per_instance == 0 {
        return Err(IngestError::InvalidConfig(
            "images_per_instance must be at least 1".into(),
        ));
    }
    cfg.sim.check()?;
    exec.map_range(cfg.num_instances, |i| render_instance(cfg, i))
        .into_iter()
        .collect()
}

/// Writes the toy dataset under `out_dir` and returns its manifest
/// (also written to `out_dir/manifest.json`).
pub fn generate_toy_dataset(
    cfg: &ToyConfig,
    out_dir: &Path,
    exec: Exec,
) -> Result<DatasetManifest, IngestError> {
    let instances = render_toy_dataset(cfg, exec)?;
    let mut entries = Vec::with_capacity(instances.len());
    for inst in &instances {
        let dir = out_dir.join(&inst.id);
        std::fs::create_dir_all(&dir).map_err(|e| IngestError::io(&dir, e))?;
        let events = format!("{}/events.evt", inst.id);
        let p = out_dir.join(&events);
        std::fs::write(&p, write_event_file(&inst.stream)).map_err(|e| IngestError::io(&p, e))?;
        let mut images = Vec::with_capacity(inst.images.len());
        for (j, img) in inst.images.iter().enumerate() {
            let rel = format!("{}/img_{j}.png", inst.id);
            write_color(&out_dir.join(&rel), img)?;
            images.push(rel);
        }
        entries.push(InstanceEntry {
            id: inst.id.clone(),
            events,
            images,
        });
    }
    let manifest = DatasetManifest::new(entries, out_dir)?;
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
