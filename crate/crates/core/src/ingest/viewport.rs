use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{GazeSample, StimulusBounds, StimulusPoint};
use crate::error::{Error, Result};

pub const VIEWPORT_CSV_HEADER: [&str; 9] = ["t_ms", "screen_id", "slice_idx", "a", "b", "c", "d", "tx", "ty"];

/// Screen pixel -> in-plane voxel map: `[a b; c d] * (x, y) + (tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0, tx: 0.0, ty: 0.0 };

    pub fn scale_translate(s: f64, tx: f64, ty: f64) -> Self {
        Affine2 { a: s, b: 0.0, c: 0.0, d: s, tx, ty }
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn is_invertible(&self) -> bool {
        let det = self.determinant();
        det.is_finite() && det != 0.0
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)
    }

    pub fn inverse(&self) -> Result<Affine2> {
        if !self.is_invertible() {
            return Err(Error::Config(format!(
                "viewport affine is not invertible (determinant {})",
                self.determinant()
            )));
        }
        let det = self.determinant();
        let (a, b, c, d) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        Ok(Affine2 {
            a,
            b,
            c,
            d,
            tx: -(a * self.tx + b * self.ty),
            ty: -(c * self.tx + d * self.ty),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewportState {
    pub t_ms: i64,
    pub screen_id: u32,
    pub slice_idx: i64,
    pub affine2d: Affine2,
}

impl ViewportState {
    pub fn identity(screen_id: u32) -> Self {
        ViewportState { t_ms: i64::MIN, screen_id, slice_idx: 0, affine2d: Affine2::IDENTITY }
    }
}

/// Maps a valid sample through the viewport that was active at its timestamp.
///
/// Points falling outside `bounds` are kept and flagged `out_of_stimulus`.
pub fn map_to_stimulus(
    sample: &GazeSample,
    vp: &ViewportState,
    bounds: Option<&StimulusBounds>,
) -> Result<StimulusPoint> {
    if !sample.valid {
        return Err(Error::Argument("cannot map an invalid sample".into()));
    }
    if vp.screen_id != sample.screen_id {
        return Err(Error::Argument(format!(
            "viewport for screen {} applied to sample on screen {}",
            vp.screen_id, sample.screen_id
        )));
    }
    if vp.t_ms > sample.t_ms {
        return Err(Error::Argument(format!(
            "viewport state at t={} is not active at t={}",
            vp.t_ms, sample.t_ms
        )));
    }
    if !vp.affine2d.is_invertible() {
        return Err(Error::Config(format!(
            "viewport affine for screen {} at t={} is not invertible",
            vp.screen_id, vp.t_ms
        )));
    }
    if vp.slice_idx < 0 {
        return Err(Error::Config(format!("negative slice index {}", vp.slice_idx)));
    }
    let (x_vox, y_vox) = vp.affine2d.apply(sample.x_px, sample.y_px);
    let out_of_stimulus = bounds.is_some_and(|b| !b.contains(x_vox, y_vox, vp.slice_idx));
    Ok(StimulusPoint {
        x_vox,
        y_vox,
        z_slice: vp.slice_idx,
        screen_id: sample.screen_id,
        t_ms: sample.t_ms,
        out_of_stimulus,
    })
}

/// Viewport history per screen. The state in force at `t` is the most recent
/// entry at or before `t`; before the first entry (or with an empty log) the
/// identity viewport on slice 0 applies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewportLog {
    by_screen: BTreeMap<u32, Vec<ViewportState>>,
}

impl ViewportLog {
    pub fn new(states: impl IntoIterator<Item = ViewportState>) -> Result<Self> {
        let mut by_screen: BTreeMap<u32, Vec<ViewportState>> = BTreeMap::new();
        for s in states {
            if !s.affine2d.is_invertible() {
                return Err(Error::Config(format!(
                    "viewport affine for screen {} at t={} is not invertible",
                    s.screen_id, s.t_ms
                )));
            }
            if s.slice_idx < 0 {
                return Err(Error::Config(format!(
                    "negative slice index {} at t={}",
                    s.slice_idx, s.t_ms
                )));
            }
            by_screen.entry(s.screen_id).or_default().push(s);
        }
        for v in by_screen.values_mut() {
            // stable: equal timestamps keep file order, last one wins on lookup
            v.sort_by_key(|s| s.t_ms);
        }
        Ok(ViewportLog { by_screen })
    }

    pub fn is_empty(&self) -> bool {
        self.by_screen.is_empty()
    }

    pub fn screens(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_screen.keys().copied()
    }

    pub fn state_at(&self, screen_id: u32, t_ms: i64) -> ViewportState {
        self.by_screen
            .get(&screen_id)
            .and_then(|v| {
                let k = v.partition_point(|s| s.t_ms <= t_ms);
                k.checked_sub(1).map(|k| v[k])
            })
            .unwrap_or_else(|| ViewportState::identity(screen_id))
    }

    /// Reads a viewport CSV with header `t_ms,screen_id,slice_idx,a,b,c,d,tx,ty`.
    pub fn parse_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = ::csv::ReaderBuilder::new().has_headers(true).trim(::csv::Trim::All).from_reader(input);
        let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        if header.iter().ne(VIEWPORT_CSV_HEADER.iter().copied()) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{}`", VIEWPORT_CSV_HEADER.join(",")),
            });
        }
        let mut states = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let f = |k: usize| -> Result<f64> {
                let s = &rec[k];
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("column `{}`: `{}` is not a finite number", VIEWPORT_CSV_HEADER[k], s),
                })
            };
            let int = |k: usize| -> Result<i64> {
                rec[k].parse::<i64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("column `{}`: `{}` is not an integer", VIEWPORT_CSV_HEADER[k], &rec[k]),
                })
            };
            let screen_id = u32::try_from(int(1)?).map_err(|_| Error::Parse {
                line,
                msg: format!("screen_id `{}` out of range", &rec[1]),
            })?;
            states.push(ViewportState {
                t_ms: int(0)?,
                screen_id,
                slice_idx: int(2)?,
                affine2d: Affine2 { a: f(3)?, b: f(4)?, c: f(5)?, d: f(6)?, tx: f(7)?, ty: f(8)? },
            });
        }
        ViewportLog::new(states)
    }
}
