use std::io::Read;

use super::{
    map_to_stimulus, GazeSample, GazeSession, Segment, SessionConfig, StimulusPoint, ViewportLog,
};
use crate::error::{Error, Result};

pub const GAZE_CSV_HEADER: [&str; 5] = ["t_ms", "screen_id", "x_px", "y_px", "valid"];

fn parse_valid(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Parses a gaze CSV (`t_ms,screen_id,x_px,y_px,valid`) into a session.
///
/// Invalid samples are dropped. A new segment starts after any invalid
/// sample and whenever two consecutive valid samples are more than
/// `gap_threshold_ms` apart. Screen switches do not start a segment.
pub fn parse_gaze_csv<R: Read>(input: R, config: &SessionConfig, viewport: &ViewportLog) -> Result<GazeSession> {
    config.validate()?;
    for id in viewport.screens() {
        if config.screen(id).is_none() {
            return Err(Error::Config(format!("viewport log references undeclared screen {id}")));
        }
    }

    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().ne(GAZE_CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", GAZE_CSV_HEADER.join(",")),
        });
    }

    let mut points: Vec<StimulusPoint> = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut last_t: Option<i64> = None;
    let mut last_valid_t: Option<i64> = None;
    let mut broken = true;
    // last kept pixel position per screen, for the optional fixation filter
    let mut last_px: std::collections::HashMap<u32, (i64, f64, f64)> = Default::default();

    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |col: &str, v: &str, what: &str| Error::Parse {
            line,
            msg: format!("column `{col}`: `{v}` {what}"),
        };
        let t_ms: i64 = rec[0].parse().map_err(|_| bad("t_ms", &rec[0], "is not an integer"))?;
        let screen_id: u32 = rec[1]
            .parse()
            .map_err(|_| bad("screen_id", &rec[1], "is not a non-negative integer"))?;
        let x_px: f64 = rec[2].parse().map_err(|_| bad("x_px", &rec[2], "is not a number"))?;
        let y_px: f64 = rec[3].parse().map_err(|_| bad("y_px", &rec[3], "is not a number"))?;
        let valid = parse_valid(&rec[4]).ok_or_else(|| bad("valid", &rec[4], "is not a boolean"))?;

        if let Some(prev) = last_t {
            if t_ms < prev {
                return Err(Error::Parse {
                    line,
                    msg: format!("t_ms {t_ms} decreases (previous {prev})"),
                });
            }
        }
        last_t = Some(t_ms);

        let screen = config
            .screen(screen_id)
            .ok_or_else(|| Error::Config(format!("line {line}: unknown screen_id {screen_id}")))?;

        if !valid {
            broken = true;
            continue;
        }
        if !(x_px.is_finite() && y_px.is_finite())
            || x_px < 0.0
            || y_px < 0.0
            || x_px >= screen.width as f64
            || y_px >= screen.height as f64
        {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "valid sample ({x_px}, {y_px}) outside screen {screen_id} ({}x{})",
                    screen.width, screen.height
                ),
            });
        }

        if let Some(filter) = config.fixation_filter {
            if let Some(&(pt, px, py)) = last_px.get(&screen_id) {
                let dt = (t_ms - pt).max(1) as f64;
                let v = ((x_px - px).powi(2) + (y_px - py).powi(2)).sqrt() / dt;
                if v > filter.max_velocity_px_per_ms {
                    last_px.insert(screen_id, (t_ms, x_px, y_px));
                    continue;
                }
            }
            last_px.insert(screen_id, (t_ms, x_px, y_px));
        }

        let sample = GazeSample { t_ms, screen_id, x_px, y_px, valid };
        let vp = viewport.state_at(screen_id, t_ms);
        let point = map_to_stimulus(&sample, &vp, Some(&screen.stimulus))?;

        let gap = last_valid_t.is_some_and(|prev| t_ms - prev > config.gap_threshold_ms);
        if broken || gap || segments.is_empty() {
            segments.push(Segment { start: points.len(), end: points.len() });
        }
        broken = false;
        last_valid_t = Some(t_ms);
        points.push(point);
        segments.last_mut().expect("segment opened above").end = points.len();
    }

    if points.is_empty() {
        return Err(Error::EmptySession);
    }
    Ok(GazeSession {
        screens: config.screens.clone(),
        points,
        segments,
    })
}

/// Writes a session recorded through identity viewports back out as a
/// gaze CSV and a viewport CSV (one row whenever a screen's slice changes).
/// Segment breaks become invalid rows so re-parsing restores the segments.
pub fn session_to_csv(session: &GazeSession) -> Result<(String, String)> {
    use std::fmt::Write as _;
    session.validate()?;
    let mut gaze = format!("{}\n", GAZE_CSV_HEADER.join(","));
    let mut viewport = format!("{}\n", super::VIEWPORT_CSV_HEADER.join(","));
    let mut slice: std::collections::HashMap<u32, i64> = Default::default();
    for (k, seg) in session.segments.iter().enumerate() {
        for (i, p) in session.points[seg.start..seg.end].iter().enumerate() {
            if k > 0 && i == 0 {
                let _ = writeln!(gaze, "{},{},0,0,0", p.t_ms, p.screen_id);
            }
            if slice.get(&p.screen_id) != Some(&p.z_slice) {
                if p.z_slice < 0 {
                    return Err(Error::Data(format!("point at t={} has negative slice", p.t_ms)));
                }
                slice.insert(p.screen_id, p.z_slice);
                let _ = writeln!(viewport, "{},{},{},1,0,0,1,0,0", p.t_ms, p.screen_id, p.z_slice);
            }
            let _ = writeln!(gaze, "{},{},{},{},1", p.t_ms, p.screen_id, p.x_vox, p.y_vox);
        }
    }
    Ok((gaze, viewport))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Affine2, FixationFilter, StimulusBounds, ViewportState};

    fn config() -> SessionConfig {
        SessionConfig::single_screen(1280, 1024, StimulusBounds { width: 512, height: 512, depth: 100 })
    }

    fn parse(text: &str) -> Result<GazeSession> {
        parse_gaze_csv(text.as_bytes(), &config(), &ViewportLog::default())
    }

    #[test]
    fn three_valid_rows_one_segment() {
        let s = parse("t_ms,screen_id,x_px,y_px,valid\n0,0,10,10,1\n17,0,11,10,1\n33,0,12,11,1\n").unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(s.segments, vec![Segment { start: 0, end: 3 }]);
        assert_eq!((s.points[2].x_vox, s.points[2].y_vox, s.points[2].z_slice), (12.0, 11.0, 0));
    }

    #[test]
    fn invalid_row_splits_segments() {
        let s = parse(
            "t_ms,screen_id,x_px,y_px,valid\n0,0,10,10,1\n17,0,11,10,1\n33,0,-1,-1,0\n50,0,12,11,1\n67,0,12,12,1\n",
        )
        .unwrap();
        assert_eq!(s.points.len(), 4);
        assert_eq!(s.segments.len(), 2);
        assert_eq!(s.pair_count(), 2);
    }

    #[test]
    fn long_gap_splits_segments() {
        let s = parse("t_ms,screen_id,x_px,y_px,valid\n0,0,10,10,1\n100,0,11,10,1\n201,0,12,11,1\n").unwrap();
        assert_eq!(s.segments, vec![Segment { start: 0, end: 2 }, Segment { start: 2, end: 3 }]);
    }

    #[test]
    fn negative_pixel_names_the_row() {
        let err = parse("t_ms,screen_id,x_px,y_px,valid\n0,0,10,10,1\n17,0,-4,10,1\n").unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("-4"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_and_headers() {
        assert!(matches!(
            parse("t_ms,screen_id,x_px,y_px,valid\n0,0,abc,10,1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse("t,screen_id,x_px,y_px,valid\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse("t_ms,screen_id,x_px,y_px,valid\n5,0,1,1,1\n4,0,1,1,1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse("t_ms,screen_id,x_px,y_px,valid\n0,0,1,1,1\n1,0,1\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unknown_screen_and_empty_session() {
        assert!(matches!(parse("t_ms,screen_id,x_px,y_px,valid\n0,3,1,1,1\n"), Err(Error::Config(_))));
        assert!(matches!(parse("t_ms,screen_id,x_px,y_px,valid\n0,0,1,1,0\n"), Err(Error::EmptySession)));
        assert!(matches!(parse("t_ms,screen_id,x_px,y_px,valid\n"), Err(Error::EmptySession)));
    }

    #[test]
    fn viewport_log_maps_points() {
        let log = ViewportLog::new([
            ViewportState { t_ms: 0, screen_id: 0, slice_idx: 7, affine2d: Affine2::scale_translate(0.5, -10.0, 0.0) },
            ViewportState { t_ms: 20, screen_id: 0, slice_idx: 8, affine2d: Affine2::IDENTITY },
        ])
        .unwrap();
        let s = parse_gaze_csv(
            "t_ms,screen_id,x_px,y_px,valid\n0,0,100,200,1\n17,0,100,200,1\n33,0,100,200,1\n".as_bytes(),
            &config(),
            &log,
        )
        .unwrap();
        let got: Vec<_> = s.points.iter().map(|p| (p.x_vox, p.y_vox, p.z_slice)).collect();
        assert_eq!(got, vec![(40.0, 100.0, 7), (40.0, 100.0, 7), (100.0, 200.0, 8)]);
    }

    #[test]
    fn synthetic_sessions_round_trip_through_csv() {
        use crate::ingest::{generate_multiscreen_synthetic, MultiScreenSynth};
        let mut s = generate_multiscreen_synthetic(&MultiScreenSynth::four_screen(400), 3).unwrap();
        // force a segment break to exercise the invalid-row encoding
        s.segments = vec![Segment { start: 0, end: 150 }, Segment { start: 150, end: 400 }];
        let (gaze, vp) = session_to_csv(&s).unwrap();
        let log = ViewportLog::parse_csv(vp.as_bytes()).unwrap();
        let cfg = SessionConfig { screens: s.screens.clone(), gap_threshold_ms: 100, fixation_filter: None };
        let back = parse_gaze_csv(gaze.as_bytes(), &cfg, &log).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn fixation_filter_drops_fast_samples() {
        let mut cfg = config();
        cfg.fixation_filter = Some(FixationFilter { max_velocity_px_per_ms: 1.0 });
        let s = parse_gaze_csv(
            "t_ms,screen_id,x_px,y_px,valid\n0,0,10,10,1\n17,0,12,10,1\n34,0,400,10,1\n51,0,402,10,1\n".as_bytes(),
            &cfg,
            &ViewportLog::default(),
        )
        .unwrap();
        assert_eq!(s.points.len(), 3);
        assert_eq!(s.segments.len(), 1);
    }
}
