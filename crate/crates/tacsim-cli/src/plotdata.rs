//! Flattens logs into plot-ready CSV tables.
//!
//! Each view is a fixed column set tied to one log flavour. The exporter
//! never draws anything; it only reshapes JSONL into something gnuplot,
//! pandas, or a spreadsheet can ingest directly.

use std::path::Path;

use serde::Serialize;

use crate::config::{CliError, CliResult};
use crate::logio::{
    parse_episode, read_log_lines, EvalRecord, Extra, FrameRecord, EVAL_SCHEMA,
};

pub const VIEWS: &[&str] = &["fig3", "fig5", "fig6", "fig8", "fig9"];

#[derive(Serialize)]
struct Fig3Row {
    frame: u64,
    marker_id: usize,
    raw_x: Option<f64>,
    filt_x: f64,
    raw_y: Option<f64>,
    filt_y: f64,
    raw_s: Option<f64>,
    filt_s: f64,
    missing_flag: u8,
}

#[derive(Serialize)]
struct Fig5Row {
    frame: u64,
    t: f64,
    applied_force: f64,
    goal: f64,
    error: f64,
    cmd_x: f64,
    cmd_y: f64,
    cmd_z: f64,
}

#[derive(Serialize)]
struct Fig6Row {
    frame: u64,
    t: f64,
    force_mag: f64,
    slip_active: u8,
    force_active: u8,
    closed: u8,
    opening: f64,
}

#[derive(Serialize)]
struct Fig8Row {
    frame: u64,
    t: f64,
    tau: f64,
    true_angle: f64,
    true_torque: f64,
    opening: f64,
}

#[derive(Serialize)]
struct Fig9Row {
    sample: usize,
    measured: f64,
    predicted: f64,
}

// The csv crate only emits the header once a row is written, so empty views
// need the header spelled out. A test pins these to the derived ones.
const FIG3_HEADER: &str = "frame,marker_id,raw_x,filt_x,raw_y,filt_y,raw_s,filt_s,missing_flag";
const FIG5_HEADER: &str = "frame,t,applied_force,goal,error,cmd_x,cmd_y,cmd_z";
const FIG6_HEADER: &str = "frame,t,force_mag,slip_active,force_active,closed,opening";
const FIG8_HEADER: &str = "frame,t,tau,true_angle,true_torque,opening";
const FIG9_HEADER: &str = "sample,measured,predicted";

fn to_csv<T: Serialize>(header: &str, rows: &[T]) -> CliResult<Vec<u8>> {
    if rows.is_empty() {
        return Ok(format!("{header}\n").into_bytes());
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.into_inner().map_err(|e| CliError::Internal(format!("flush csv: {e}")))
}

fn available_views(records: &[FrameRecord]) -> Vec<&'static str> {
    let mut views = Vec::new();
    if records.iter().any(|r| r.markers.is_some()) {
        views.push("fig3");
    }
    let has = |f: fn(&Extra) -> bool| records.iter().any(|r| r.extra.as_ref().is_some_and(f));
    if has(|e| matches!(e, Extra::FollowMe { .. })) {
        views.push("fig5");
    }
    if has(|e| matches!(e, Extra::Handover { .. })) {
        views.push("fig6");
    }
    if has(|e| matches!(e, Extra::StuckPen { .. })) {
        views.push("fig8");
    }
    views
}

fn episode_view(view: &str, records: &[FrameRecord]) -> CliResult<Vec<u8>> {
    match view {
        "fig3" => {
            let mut rows = Vec::new();
            for rec in records {
                let Some(markers) = &rec.markers else { continue };
                for m in markers {
                    rows.push(Fig3Row {
                        frame: rec.frame,
                        marker_id: m.id,
                        raw_x: m.raw.map(|r| r[0]),
                        filt_x: m.filt[0],
                        raw_y: m.raw.map(|r| r[1]),
                        filt_y: m.filt[1],
                        raw_s: m.raw.map(|r| r[2]),
                        filt_s: m.filt[2],
                        missing_flag: u8::from(m.raw.is_none()),
                    });
                }
            }
            to_csv(FIG3_HEADER, &rows)
        }
        "fig5" => {
            let mut rows = Vec::new();
            for rec in records {
                let Some(Extra::FollowMe { goal, error, applied_force }) = rec.extra else {
                    continue;
                };
                let [cmd_x, cmd_y, cmd_z] = rec.command.ee_velocity;
                rows.push(Fig5Row {
                    frame: rec.frame,
                    t: rec.t,
                    applied_force,
                    goal,
                    error,
                    cmd_x,
                    cmd_y,
                    cmd_z,
                });
            }
            to_csv(FIG5_HEADER, &rows)
        }
        "fig6" => {
            let mut rows = Vec::new();
            for rec in records {
                let Some(Extra::Handover { force_mag, force_active, closed, .. }) = rec.extra
                else {
                    continue;
                };
                rows.push(Fig6Row {
                    frame: rec.frame,
                    t: rec.t,
                    force_mag,
                    slip_active: u8::from(rec.slip_active),
                    force_active: u8::from(force_active),
                    closed: u8::from(closed),
                    opening: rec.plant.gripper_opening,
                });
            }
            to_csv(FIG6_HEADER, &rows)
        }
        "fig8" => {
            let mut rows = Vec::new();
            for rec in records {
                let Some(Extra::StuckPen { true_angle, true_torque }) = rec.extra else {
                    continue;
                };
                rows.push(Fig8Row {
                    frame: rec.frame,
                    t: rec.t,
                    tau: rec.tau,
                    true_angle,
                    true_torque,
                    opening: rec.plant.gripper_opening,
                });
            }
            to_csv(FIG8_HEADER, &rows)
        }
        _ => unreachable!("caller checks the view name"),
    }
}

pub fn render_view(log_path: &Path, view: &str) -> CliResult<Vec<u8>> {
    if !VIEWS.contains(&view) {
        return Err(CliError::Usage(format!(
            "unknown view: {view}; known views: {}",
            VIEWS.join(", ")
        )));
    }
    let (header, lines) = read_log_lines(log_path)?;
    let schema = header.get("schema").and_then(|v| v.as_str()).unwrap_or("");
    if view == "fig9" {
        if schema != EVAL_SCHEMA {
            return Err(CliError::Usage(format!(
                "fig9 needs an eval predictions log ({EVAL_SCHEMA}), got schema {schema:?}"
            )));
        }
        let mut rows = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let rec: EvalRecord = serde_json::from_str(line).map_err(|e| {
                CliError::Usage(format!(
                    "{}: record {i} is not a regression prediction: {e}",
                    log_path.display()
                ))
            })?;
            rows.push(Fig9Row {
                sample: rec.sample,
                measured: rec.measured,
                predicted: rec.predicted,
            });
        }
        return to_csv(FIG9_HEADER, &rows);
    }
    let (_, records) = parse_episode(&header, &lines)?;
    let available = available_views(&records);
    if !records.is_empty() && !available.contains(&view) {
        let hint = if available.is_empty() {
            "none".to_string()
        } else {
            available.join(", ")
        };
        return Err(CliError::Usage(format!(
            "view {view} is not available for this log; available views: {hint}"
        )));
    }
    episode_view(view, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logio::{save_bytes, LogHeader, LogWriter};

    fn derived_header<T: Serialize + Default>() -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.serialize(T::default()).unwrap();
        let bytes = wtr.into_inner().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        text.lines().next().unwrap().to_string()
    }

    impl Default for Fig3Row {
        fn default() -> Self {
            Self {
                frame: 0,
                marker_id: 0,
                raw_x: None,
                filt_x: 0.0,
                raw_y: None,
                filt_y: 0.0,
                raw_s: None,
                filt_s: 0.0,
                missing_flag: 0,
            }
        }
    }

    impl Default for Fig5Row {
        fn default() -> Self {
            Self {
                frame: 0,
                t: 0.0,
                applied_force: 0.0,
                goal: 0.0,
                error: 0.0,
                cmd_x: 0.0,
                cmd_y: 0.0,
                cmd_z: 0.0,
            }
        }
    }

    impl Default for Fig6Row {
        fn default() -> Self {
            Self {
                frame: 0,
                t: 0.0,
                force_mag: 0.0,
                slip_active: 0,
                force_active: 0,
                closed: 0,
                opening: 0.0,
            }
        }
    }

    impl Default for Fig8Row {
        fn default() -> Self {
            Self { frame: 0, t: 0.0, tau: 0.0, true_angle: 0.0, true_torque: 0.0, opening: 0.0 }
        }
    }

    impl Default for Fig9Row {
        fn default() -> Self {
            Self { sample: 0, measured: 0.0, predicted: 0.0 }
        }
    }

    #[test]
    fn empty_view_headers_match_the_derived_ones() {
        assert_eq!(FIG3_HEADER, derived_header::<Fig3Row>());
        assert_eq!(FIG5_HEADER, derived_header::<Fig5Row>());
        assert_eq!(FIG6_HEADER, derived_header::<Fig6Row>());
        assert_eq!(FIG8_HEADER, derived_header::<Fig8Row>());
        assert_eq!(FIG9_HEADER, derived_header::<Fig9Row>());
    }

    #[test]
    fn unknown_view_is_a_usage_error() {
        let err = render_view(Path::new("/nonexistent"), "fig7").unwrap_err();
        let CliError::Usage(msg) = err else { panic!("expected usage error") };
        assert!(msg.contains("fig3") && msg.contains("fig9"));
    }

    #[test]
    fn empty_episode_renders_a_header_only_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episode.jsonl");
        let writer =
            LogWriter::new(&LogHeader::episode("followme-pull-x", "force-track", 0, 1.0 / 15.0))
                .unwrap();
        save_bytes(&path, &writer.bytes()).unwrap();
        let csv = render_view(&path, "fig5").unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), format!("{FIG5_HEADER}\n"));
    }

    #[test]
    fn mismatched_view_is_a_usage_error_listing_available_ones() {
        let out = crate::runs::run_scenario(&crate::runs::RunCfg {
            frames: 8,
            ..crate::runs::RunCfg::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episode.jsonl");
        save_bytes(&path, &out.log).unwrap();
        let err = render_view(&path, "fig8").unwrap_err();
        let CliError::Usage(msg) = err else { panic!("expected usage error") };
        assert!(msg.contains("fig5"), "{msg}");
        let csv = render_view(&path, "fig5").unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with(FIG5_HEADER));
    }

    #[test]
    fn fig9_reads_eval_predictions_and_rejects_episodes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.jsonl");
        let mut writer = LogWriter::new(&crate::logio::EvalHeader {
            schema: EVAL_SCHEMA.into(),
            model: "krr".into(),
        })
        .unwrap();
        writer.push(&EvalRecord { sample: 0, measured: 1.5, predicted: 1.25 }).unwrap();
        save_bytes(&path, &writer.bytes()).unwrap();
        let csv = render_view(&path, "fig9").unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text, format!("{FIG9_HEADER}\n0,1.5,1.25\n"));
        let err = render_view(&path, "fig5").unwrap_err();
        assert!(matches!(err, CliError::Usage(_) | CliError::Internal(_)));
    }
}
