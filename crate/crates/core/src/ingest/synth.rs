use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};

use super::{GazeSession, ScreenDescriptor, Segment, StimulusBounds, StimulusPoint};
use crate::error::{Error, Result};
use crate::seed;

/// Sampling period of a 60 Hz tracker, in ms.
const PERIOD_MS: f64 = 1000.0 / 60.0;

/// Closed box `[min, max]` per axis; axis 2 is the slice axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for SynthBounds {
    fn default() -> Self {
        SynthBounds { min: [0.0; 3], max: [511.0, 511.0, 63.0] }
    }
}

impl SynthBounds {
    fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.min[k].is_finite() && self.max[k].is_finite() && self.max[k] > self.min[k]) {
                return Err(Error::Argument(format!("degenerate synthetic bounds on axis {k}")));
            }
            if self.min[k] < 0.0 {
                return Err(Error::Argument("synthetic bounds must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn stimulus(&self) -> StimulusBounds {
        let dim = |k: usize| self.max[k].floor() as u32 + 1;
        StimulusBounds { width: dim(0), height: dim(1), depth: dim(2) }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

fn reflect(mut v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    for _ in 0..4 {
        if v < lo {
            v = lo + (lo - v);
        } else if v > hi {
            v = hi - (v - hi);
        } else {
            return v;
        }
    }
    // steps larger than a few box widths: fold modulo the span
    let r = (v - lo).rem_euclid(2.0 * span);
    lo + if r > span { 2.0 * span - r } else { r }
}

struct Walker {
    pos: [f64; 3],
    steps: [Normal<f64>; 3],
}

impl Walker {
    fn new<R: Rng>(bounds: &SynthBounds, step_scale: f64, rng: &mut R) -> Result<Self> {
        let mut pos = [0.0; 3];
        let mut steps = Vec::with_capacity(3);
        for (k, p) in pos.iter_mut().enumerate() {
            *p = rng.random_range(bounds.min[k]..=bounds.max[k]);
            let sd = step_scale * (bounds.max[k] - bounds.min[k]);
            steps.push(Normal::new(0.0, sd).map_err(|e| Error::Argument(format!("step scale: {e}")))?);
        }
        Ok(Walker { pos, steps: [steps[0], steps[1], steps[2]] })
    }

    fn step<R: Rng>(&mut self, bounds: &SynthBounds, rng: &mut R) -> [f64; 3] {
        for k in 0..3 {
            let v = self.pos[k] + self.steps[k].sample(rng);
            self.pos[k] = reflect(v, bounds.min[k], bounds.max[k]).clamp(bounds.min[k], bounds.max[k]);
        }
        self.pos
    }
}

fn to_point(pos: [f64; 3], screen_id: u32, i: usize) -> StimulusPoint {
    StimulusPoint {
        x_vox: pos[0],
        y_vox: pos[1],
        z_slice: pos[2].round() as i64,
        screen_id,
        t_ms: (i as f64 * PERIOD_MS).round() as i64,
        out_of_stimulus: false,
    }
}

fn synth_screen(id: u32, bounds: &SynthBounds, modality: String) -> ScreenDescriptor {
    let stimulus = bounds.stimulus();
    ScreenDescriptor { id, width: stimulus.width, height: stimulus.height, modality, stimulus }
}

/// Single-screen synthetic session: `n` consecutive samples of a reflected
/// Gaussian random walk inside `bounds`.
///
/// `step_scale` is the per-axis step standard deviation as a fraction of the
/// box extent; large values approach independent uniform locations joined
/// consecutively.
pub fn generate_synthetic_gaze(n: usize, bounds: SynthBounds, step_scale: f64, seed: u64) -> Result<GazeSession> {
    if n == 0 {
        return Err(Error::Argument("synthetic session needs n >= 1".into()));
    }
    if !(step_scale.is_finite() && step_scale > 0.0) {
        return Err(Error::Argument("step_scale must be > 0".into()));
    }
    bounds.validate()?;
    let mut rng = seed::rng(seed);
    let mut walker = Walker::new(&bounds, step_scale, &mut rng)?;
    let mut points = Vec::with_capacity(n);
    points.push(to_point(walker.pos, 0, 0));
    for i in 1..n {
        points.push(to_point(walker.step(&bounds, &mut rng), 0, i));
    }
    Ok(GazeSession {
        screens: vec![synth_screen(0, &bounds, "synthetic".into())],
        points,
        segments: vec![Segment { start: 0, end: n }],
    })
}

/// Multi-screen synthetic reading: one walker per screen, and before each
/// sample the gaze leaves the current screen with probability
/// `switch_prob`, landing on another screen drawn by `screen_weights`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScreenSynth {
    pub n: usize,
    pub screen_weights: Vec<f64>,
    pub switch_prob: f64,
    pub bounds: SynthBounds,
    pub step_scale: f64,
}

impl MultiScreenSynth {
    /// Four screens read unevenly, like a multi-parametric MR reading where
    /// the anatomical and ADC series get most of the attention.
    pub fn four_screen(n: usize) -> Self {
        MultiScreenSynth {
            n,
            screen_weights: vec![0.4, 0.3, 0.15, 0.15],
            switch_prob: 0.01,
            bounds: SynthBounds::default(),
            step_scale: 0.05,
        }
    }
}

const FOUR_SCREEN_LABELS: [&str; 4] = ["T2w", "ADC", "DWI", "DCE"];

pub fn generate_multiscreen_synthetic(cfg: &MultiScreenSynth, seed: u64) -> Result<GazeSession> {
    let k = cfg.screen_weights.len();
    if cfg.n == 0 {
        return Err(Error::Argument("synthetic session needs n >= 1".into()));
    }
    if k == 0 {
        return Err(Error::Argument("need at least one screen".into()));
    }
    if !(0.0..=1.0).contains(&cfg.switch_prob) {
        return Err(Error::Argument("switch_prob must lie in [0, 1]".into()));
    }
    cfg.bounds.validate()?;
    let pick = WeightedIndex::new(&cfg.screen_weights)
        .map_err(|e| Error::Argument(format!("screen weights: {e}")))?;

    let mut rng = seed::rng(seed);
    let mut walkers = (0..k)
        .map(|_| Walker::new(&cfg.bounds, cfg.step_scale, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut screen = pick.sample(&mut rng);
    let mut points = Vec::with_capacity(cfg.n);
    points.push(to_point(walkers[screen].pos, screen as u32, 0));
    for i in 1..cfg.n {
        if k > 1 && rng.random_bool(cfg.switch_prob) {
            loop {
                let next = pick.sample(&mut rng);
                if next != screen {
                    screen = next;
                    break;
                }
            }
            points.push(to_point(walkers[screen].pos, screen as u32, i));
        } else {
            points.push(to_point(walkers[screen].step(&cfg.bounds, &mut rng), screen as u32, i));
        }
    }
    let screens = (0..k)
        .map(|s| {
            let label = if k == 4 { FOUR_SCREEN_LABELS[s].to_string() } else { format!("screen-{s}") };
            synth_screen(s as u32, &cfg.bounds, label)
        })
        .collect();
    Ok(GazeSession { screens, points, segments: vec![Segment { start: 0, end: cfg.n }] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_session() {
        let s = generate_synthetic_gaze(1, SynthBounds::default(), 0.1, 7).unwrap();
        assert_eq!(s.points.len(), 1);
        assert_eq!(s.pair_count(), 0);
        s.validate().unwrap();
    }

    #[test]
    fn five_thousand_points_one_chain() {
        let s = generate_synthetic_gaze(5000, SynthBounds::default(), 0.1, 7).unwrap();
        assert_eq!(s.points.len(), 5000);
        assert_eq!(s.segments.len(), 1);
        assert_eq!(s.pair_count(), 4999);
        s.validate().unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_gaze(300, SynthBounds::default(), 0.2, 11).unwrap();
        let b = generate_synthetic_gaze(300, SynthBounds::default(), 0.2, 11).unwrap();
        let c = generate_synthetic_gaze(300, SynthBounds::default(), 0.2, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(generate_synthetic_gaze(0, SynthBounds::default(), 0.1, 0), Err(Error::Argument(_))));
        let flat = SynthBounds { min: [0.0; 3], max: [10.0, 10.0, 0.0] };
        assert!(generate_synthetic_gaze(5, flat, 0.1, 0).is_err());
    }

    #[test]
    fn points_stay_inside_bounds_even_with_huge_steps() {
        let b = SynthBounds { min: [5.0, 5.0, 0.0], max: [50.0, 60.0, 9.0] };
        for step in [0.01, 0.5, 10.0] {
            let s = generate_synthetic_gaze(2000, b, step, 3).unwrap();
            for p in &s.points {
                assert!(b.contains([p.x_vox, p.y_vox, p.z_slice as f64]), "{p:?}");
                assert!(s.screens[0].stimulus.contains(p.x_vox, p.y_vox, p.z_slice));
            }
        }
    }

    #[test]
    fn multiscreen_session_visits_every_screen() {
        let s = generate_multiscreen_synthetic(&MultiScreenSynth::four_screen(4000), 5).unwrap();
        s.validate().unwrap();
        assert_eq!(s.screens.len(), 4);
        for id in 0..4 {
            assert!(s.points.iter().any(|p| p.screen_id == id));
        }
        let cross: usize = s.cross_screen_transitions().iter().map(|(_, c)| c).sum();
        assert!(cross > 0);
    }
}
