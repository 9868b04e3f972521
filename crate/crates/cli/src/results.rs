//! Results CSV written by `localize` and read back by `eval`.

use std::collections::HashMap;
use std::path::Path;

use lodloc_core::camera::{euler_to_pose, EulerPose};
use lodloc_core::eval::pose_error;
use lodloc_core::io::read_text;
use lodloc_core::pipeline::StageTiming;
use lodloc_core::Error;

use crate::CliError;

const POSE_FIELDS: [&str; 6] = ["x", "y", "z", "yaw", "pitch", "roll"];
pub const POSE_GROUPS: [&str; 5] = ["prior", "l1", "l2", "l3", "refined"];
const ERROR_COLUMNS: [&str; 10] = [
    "t_err", "r_err", "t_err_prior", "r_err_prior", "l1_t", "l1_r", "l2_t", "l2_r", "l3_t", "l3_r",
];
/// Timing columns come last so they can be dropped for byte comparisons.
pub const TIMING_COLUMNS: [&str; 6] = [
    "time_visibility_ms",
    "time_l1_ms",
    "time_l2_ms",
    "time_l3_ms",
    "time_refine_ms",
    "time_total_ms",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub name: String,
    /// Poses for prior, level 1..3 and the final (refined) estimate.
    pub poses: [Option<EulerPose>; 5],
    pub points_used: Option<usize>,
    pub objective: Option<(f64, f64)>,
    pub flag: String,
    pub timing: Option<StageTiming>,
}

pub fn header() -> Vec<String> {
    let mut h = vec!["name".to_string()];
    for g in POSE_GROUPS {
        h.extend(POSE_FIELDS.iter().map(|f| format!("{g}_{f}")));
    }
    h.extend(["points_used", "objective_init", "objective_final"].map(String::from));
    h.extend(ERROR_COLUMNS.map(String::from));
    h.push("flag".into());
    h.extend(TIMING_COLUMNS.map(String::from));
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    fn record(&self, gt: Option<&EulerPose>) -> Vec<String> {
        let mut r = vec![self.name.clone()];
        for p in &self.poses {
            match p {
                Some(p) => r.extend([p.x, p.y, p.z, p.yaw, p.pitch, p.roll].map(|v| v.to_string())),
                None => r.extend(std::iter::repeat_n(String::new(), 6)),
            }
        }
        r.push(opt(self.points_used));
        r.push(opt(self.objective.map(|o| o.0)));
        r.push(opt(self.objective.map(|o| o.1)));
        let err = |p: &Option<EulerPose>| match (p, gt) {
            (Some(p), Some(g)) => {
                let e = pose_error(&euler_to_pose(p), &euler_to_pose(g));
                [e.t_err.to_string(), e.r_err.to_string()]
            }
            _ => [String::new(), String::new()],
        };
        for i in [4, 0, 1, 2, 3] {
            r.extend(err(&self.poses[i]));
        }
        r.push(self.flag.clone());
        match &self.timing {
            Some(t) => r.extend(
                [t.visibility_ms, t.level_ms[0], t.level_ms[1], t.level_ms[2], t.refine_ms, t.total_ms()]
                    .map(|v| format!("{v:.3}")),
            ),
            None => r.extend(std::iter::repeat_n(String::new(), TIMING_COLUMNS.len())),
        }
        r
    }
}

pub fn write_results(path: &Path, rows: &[ResultRow], gt: Option<&HashMap<String, EulerPose>>) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::from(Error::io(path, std::io::Error::other(e.to_string())));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header()).map_err(io)?;
    for row in rows {
        let g = gt.and_then(|m| m.get(&row.name));
        w.write_record(row.record(g)).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::from(Error::io(path, e)))?;
    Ok(())
}

/// Reads the pose groups and flag of each row.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let src = path.display().to_string();
    let text = read_text(path)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(&src, 1, e.to_string()))?
        .clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(&src, 1, format!("missing column '{name}'")).into())
    };
    let name_col = col("name")?;
    let flag_col = col("flag")?;
    let mut pose_cols = Vec::new();
    for g in POSE_GROUPS {
        let mut cols = [0usize; 6];
        for (c, f) in cols.iter_mut().zip(POSE_FIELDS) {
            *c = col(&format!("{g}_{f}"))?;
        }
        pose_cols.push(cols);
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(&src, line, e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let mut poses = [None; 5];
        for (slot, cols) in poses.iter_mut().zip(&pose_cols) {
            if field(cols[0]).is_empty() {
                continue;
            }
            let mut v = [0.0; 6];
            for (x, &c) in v.iter_mut().zip(cols) {
                *x = field(c)
                    .parse()
                    .map_err(|_| Error::parse(&src, line, format!("bad number '{}'", field(c))))?;
            }
            *slot = Some(EulerPose::new(v[0], v[1], v[2], v[3], v[4], v[5]));
        }
        rows.push(ResultRow {
            name: field(name_col).to_string(),
            poses,
            points_used: None,
            objective: None,
            flag: field(flag_col).to_string(),
            timing: None,
        });
    }
    Ok(rows)
}
