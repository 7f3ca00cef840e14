//! Ideal DVS simulation from an intensity image moving along a trajectory.
//!
//! Each pixel keeps a reference log-intensity. Whenever the current
//! log-intensity differs from the reference by at least the contrast
//! threshold `C`, `floor(|ΔL| / C)` events of the matching polarity are
//! emitted and the reference moves by that many multiples of `C`. Event
//! times are interpolated linearly inside the sampling interval.

use serde::{Deserialize, Serialize};

use crate::event::{Event, EventStream, Polarity, SensorGeometry};
use crate::raster;

use super::IngestError;

/// Linear intensity image with strictly positive pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    geometry: SensorGeometry,
    pixels: Vec<f64>,
}

impl IntensityFrame {
    pub fn new(geometry: SensorGeometry, pixels: Vec<f64>) -> Result<Self, IngestError> {
        if pixels.len() != geometry.pixel_count() {
            return Err(IngestError::InvalidFrame(format!(
                "{} pixels for a {}x{} frame",
                pixels.len(),
                geometry.width,
                geometry.height
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(IngestError::InvalidFrame(format!(
                "pixel {i} is not strictly positive"
            )));
        }
        Ok(Self { geometry, pixels })
    }

    /// Builds a frame after clamping every value to at least `floor`.
    pub fn from_clamped(
        geometry: SensorGeometry,
        pixels: Vec<f64>,
        floor: f64,
    ) -> Result<Self, IngestError> {
        Self::new(geometry, pixels.into_iter().map(|v| v.max(floor)).collect())
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: u64,
    pub dx: f64,
    pub dy: f64,
}

/// Piecewise-linear image translation over time.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrajectory {
    samples: Vec<TrajectorySample>,
}

impl MotionTrajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self, IngestError> {
        if samples.len() < 2 {
            return Err(IngestError::DegenerateTrajectory(format!(
                "{} samples, need at least 2",
                samples.len()
            )));
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(IngestError::DegenerateTrajectory(
                "timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples })
    }

    /// Straight-line motion from `(0, 0)` to `(dx, dy)` over `duration` µs.
    pub fn linear(duration: u64, dx: f64, dy: f64) -> Result<Self, IngestError> {
        Self::new(vec![
            TrajectorySample { t: 0, dx: 0.0, dy: 0.0 },
            TrajectorySample { t: duration, dx, dy },
        ])
    }

    /// Closed circular motion of `radius` px, one revolution per `period` µs,
    /// sampled every millisecond.
    pub fn circular(duration: u64, radius: f64, period: u64) -> Result<Self, IngestError> {
        let samples = (0..=duration / 1000)
            .map(|ms| {
                let t = ms * 1000;
                let phase = std::f64::consts::TAU * t as f64 / period as f64;
                TrajectorySample {
                    t,
                    dx: radius * phase.sin(),
                    dy: radius * (1.0 - phase.cos()),
                }
            })
            .collect();
        Self::new(samples)
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn start(&self) -> u64 {
        self.samples[0].t
    }

    pub fn end(&self) -> u64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Offset at time `t` (µs), linearly interpolated and held constant outside the range.
    pub fn offset_at(&self, t: f64) -> (f64, f64) {
        let s = &self.samples;
        if t <= s[0].t as f64 {
            return (s[0].dx, s[0].dy);
        }
        let i = s.partition_point(|p| (p.t as f64) <= t);
        if i >= s.len() {
            let last = s[s.len() - 1];
            return (last.dx, last.dy);
        }
        let (a, b) = (s[i - 1], s[i]);
        let f = (t - a.t as f64) / (b.t - a.t) as f64;
        (a.dx + (b.dx - a.dx) * f, a.dy + (b.dy - a.dy) * f)
    }

    /// Sampling instants at `frame_rate` Hz from start to end (end always included).
    pub fn sample_times(&self, frame_rate: f64) -> Vec<f64> {
        let step = 1e6 / frame_rate;
        let (t0, t1) = (self.start() as f64, self.end() as f64);
        let mut times = Vec::new();
        let mut k = 0u64;
        loop {
            let t = t0 + k as f64 * step;
            if t >= t1 {
                break;
            }
            times.push(t);
            k += 1;
        }
        times.push(t1);
        times
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorConfig {
    /// Contrast threshold `C` in log-intensity units.
    pub threshold: f64,
    /// Trajectory sampling rate in Hz.
    pub frame_rate: f64,
    /// Intensity floor applied before taking logarithms.
    pub epsilon: f64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.3,
            frame_rate: 1000.0,
            epsilon: 1e-3,
        }
    }
}

impl SimulatorConfig {
    pub fn check(&self) -> Result<(), IngestError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.threshold) || !ok(self.frame_rate) || !ok(self.epsilon) {
            return Err(IngestError::InvalidConfig(format!(
                "threshold, frame_rate and epsilon must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Log-intensity of `image` translated by `(dx, dy)`: pixel `x` sees `I(x - dx)`.
pub fn translated_log_intensity(image: &IntensityFrame, dx: f64, dy: f64, epsilon: f64) -> Vec<f64> {
    let g = image.geometry();
    let (w, h) = (g.width as usize, g.height as usize);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = raster::sample_clamped(image.pixels(), w, h, x as f64 - dx, y as f64 - dy);
            out.push(v.max(epsilon).ln());
        }
    }
    out
}

/// A level reached to within this fraction of `C` counts as crossed, so
/// exact multiples of `C` are not lost to rounding.
const LEVEL_TOLERANCE: f64 = 1e-9;

pub fn simulate_dvs(
    image: &IntensityFrame,
    traj: &MotionTrajectory,
    cfg: &SimulatorConfig,
) -> Result<EventStream, IngestError> {
    cfg.check()?;
    let g = image.geometry();
    let width = g.width as usize;
    let c = cfg.threshold;
    let times = traj.sample_times(cfg.frame_rate);

    let (dx, dy) = traj.offset_at(times[0]);
    let mut reference = translated_log_intensity(image, dx, dy, cfg.epsilon);
    let mut previous = reference.clone();
    let mut events = Vec::new();
    // (time, pixel index, crossing number) for the current interval
    let mut pending: Vec<(u64, usize, usize, Polarity)> = Vec::new();

    for pair in times.windows(2) {
        let (t_prev, t_now) = (pair[0], pair[1]);
        let (dx, dy) = traj.offset_at(t_now);
        let current = translated_log_intensity(image, dx, dy, cfg.epsilon);
        pending.clear();
        for (idx, ((l_ref, l_prev), &l_now)) in reference
            .iter_mut()
            .zip(previous.iter())
            .zip(current.iter())
            .enumerate()
        {
            let diff = l_now - *l_ref;
            let crossings = diff.abs() / c + LEVEL_TOLERANCE;
            if crossings < 1.0 {
                continue;
            }
            let count = crossings.floor() as usize;
            let (sign, polarity) = if diff > 0.0 {
                (1.0, Polarity::On)
            } else {
                (-1.0, Polarity::Off)
            };
            let span = l_now - l_prev;
            for j in 1..=count {
                let level = *l_ref + sign * j as f64 * c;
                let frac = ((level - l_prev) / span).clamp(0.0, 1.0);
                let t = t_prev + frac * (t_now - t_prev);
                pending.push((t.floor() as u64, idx, j, polarity));
            }
            *l_ref += sign * count as f64 * c;
        }
        pending.sort_by_key(|&(t, idx, j, _)| (t, idx, j));
        events.extend(pending.iter().map(|&(t, idx, _, p)| {
            Event::new((idx % width) as u32, (idx / width) as u32, t, p)
        }));
        previous = current;
    }
    Ok(EventStream::new_unchecked(g, events))
}
