//! Gaze recordings in stimulus coordinates.
//!
//! Raw samples are screen pixels. A piecewise-constant viewport log maps them
//! through a 2D affine (zoom/pan) onto in-plane voxel coordinates and tags the
//! slice that was on screen, giving `(x_vox, y_vox, slice)`. Invalid samples
//! and long dropouts split the stream into gap-free segments.

mod csv;
mod synth;
mod viewport;

use serde::{Deserialize, Serialize};

pub use self::csv::{parse_gaze_csv, session_to_csv, GAZE_CSV_HEADER};
pub use synth::{generate_multiscreen_synthetic, generate_synthetic_gaze, MultiScreenSynth, SynthBounds};
pub use viewport::{map_to_stimulus, Affine2, ViewportLog, ViewportState, VIEWPORT_CSV_HEADER};

use crate::error::{Error, Result};

pub const DEFAULT_GAP_THRESHOLD_MS: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t_ms: i64,
    pub screen_id: u32,
    pub x_px: f64,
    pub y_px: f64,
    pub valid: bool,
}

/// Extent of the displayed volume on one screen, in voxels. Valid in-plane
/// coordinates are `[0, width) x [0, height)`, slices `[0, depth)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusBounds {
    pub width: u32,
    pub height: u32,
    pub depth: u32,
}

impl StimulusBounds {
    pub fn contains(&self, x: f64, y: f64, z: i64) -> bool {
        x >= 0.0
            && y >= 0.0
            && x < self.width as f64
            && y < self.height as f64
            && z >= 0
            && z < self.depth as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDescriptor {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub modality: String,
    pub stimulus: StimulusBounds,
}

/// Velocity-threshold (I-VT) fixation pre-pass. Samples moving faster than
/// `max_velocity_px_per_ms` relative to the previous kept sample on the same
/// screen are treated as saccadic and dropped. Dropping does not split a
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationFilter {
    pub max_velocity_px_per_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub screens: Vec<ScreenDescriptor>,
    #[serde(default = "default_gap")]
    pub gap_threshold_ms: i64,
    #[serde(default)]
    pub fixation_filter: Option<FixationFilter>,
}

fn default_gap() -> i64 {
    DEFAULT_GAP_THRESHOLD_MS
}

impl SessionConfig {
    pub fn single_screen(width: u32, height: u32, stimulus: StimulusBounds) -> Self {
        Self {
            screens: vec![ScreenDescriptor {
                id: 0,
                width,
                height,
                modality: String::new(),
                stimulus,
            }],
            gap_threshold_ms: DEFAULT_GAP_THRESHOLD_MS,
            fixation_filter: None,
        }
    }

    pub fn screen(&self, id: u32) -> Option<&ScreenDescriptor> {
        self.screens.iter().find(|s| s.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.screens.is_empty() {
            return Err(Error::Config("session config declares no screens".into()));
        }
        for (k, s) in self.screens.iter().enumerate() {
            if self.screens[..k].iter().any(|o| o.id == s.id) {
                return Err(Error::Config(format!("duplicate screen id {}", s.id)));
            }
            if s.width == 0 || s.height == 0 {
                return Err(Error::Config(format!("screen {} has zero size", s.id)));
            }
        }
        if self.gap_threshold_ms < 0 {
            return Err(Error::Config("gap_threshold_ms must be >= 0".into()));
        }
        if let Some(f) = self.fixation_filter {
            if f.max_velocity_px_per_ms.is_nan() || f.max_velocity_px_per_ms <= 0.0 {
                return Err(Error::Config("fixation filter velocity must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusPoint {
    pub x_vox: f64,
    pub y_vox: f64,
    pub z_slice: i64,
    pub screen_id: u32,
    pub t_ms: i64,
    #[serde(default)]
    pub out_of_stimulus: bool,
}

impl StimulusPoint {
    /// Spatial coordinates used for clustering; slices are scaled by
    /// `slice_scale` to account for anisotropic voxels.
    pub fn coords(&self, slice_scale: f64) -> [f64; 3] {
        [self.x_vox, self.y_vox, self.z_slice as f64 * slice_scale]
    }
}

/// Half-open index range `[start, end)` into [`GazeSession::points`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// One consecutive pair of points inside a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsecutivePair {
    pub from: usize,
    pub to: usize,
    pub cross_screen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSession {
    pub screens: Vec<ScreenDescriptor>,
    pub points: Vec<StimulusPoint>,
    pub segments: Vec<Segment>,
}

impl GazeSession {
    /// Checks ordering, segment tiling and screen declarations.
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptySession);
        }
        if self.points.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
            return Err(Error::Data("points are not ordered by t_ms".into()));
        }
        let mut next = 0;
        for s in &self.segments {
            if s.start != next || s.end <= s.start || s.end > self.points.len() {
                return Err(Error::Data(format!(
                    "segments must tile the point list; bad segment {}..{}",
                    s.start, s.end
                )));
            }
            next = s.end;
        }
        if next != self.points.len() {
            return Err(Error::Data("segments do not cover every point".into()));
        }
        for p in &self.points {
            if !self.screens.iter().any(|s| s.id == p.screen_id) {
                return Err(Error::Config(format!("undeclared screen id {}", p.screen_id)));
            }
        }
        Ok(())
    }

    pub fn consecutive_pairs(&self) -> impl Iterator<Item = ConsecutivePair> + '_ {
        self.segments.iter().flat_map(move |s| {
            (s.start..s.end.saturating_sub(1)).map(move |i| ConsecutivePair {
                from: i,
                to: i + 1,
                cross_screen: self.points[i].screen_id != self.points[i + 1].screen_id,
            })
        })
    }

    pub fn pair_count(&self) -> usize {
        self.segments.iter().map(|s| s.len().saturating_sub(1)).sum()
    }

    pub fn screen(&self, id: u32) -> Option<&ScreenDescriptor> {
        self.screens.iter().find(|s| s.id == id)
    }

    /// Counts of consecutive pairs that jump between screens, keyed by
    /// `(from_screen, to_screen)` in ascending order.
    pub fn cross_screen_transitions(&self) -> Vec<((u32, u32), usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for p in self.consecutive_pairs().filter(|p| p.cross_screen) {
            let key = (self.points[p.from].screen_id, self.points[p.to].screen_id);
            *counts.entry(key).or_insert(0usize) += 1;
        }
        counts.into_iter().collect()
    }
}
