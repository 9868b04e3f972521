use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use lodloc_core::camera::{euler_to_pose, pose_to_euler, EulerPose};
use lodloc_core::eval::{pose_error, recall, PoseError};
use lodloc_core::exec::{self, Execution};
use lodloc_core::geometry::{extract_wireframe, sample_points};
use lodloc_core::io;
use lodloc_core::oracle::{synth_pyramid, NoiseSpec};
use lodloc_core::pipeline::{localize as run_query, LocalizationRecord};
use lodloc_core::scene::{box_city, default_intrinsics, synth_queries, CityConfig, QueryConfig};
use lodloc_core::visibility::cull_points;
use lodloc_core::Error;

use crate::manifest::{self, parse_override, RunManifest};
use crate::overlay::Canvas;
use crate::results::{read_results, write_results, ResultRow};
use crate::{CliError, EvalArgs, ExtractArgs, LocalizeArgs, OracleArgs, SynthArgs};

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

pub fn extract(a: &ExtractArgs) -> Result<(), CliError> {
    let mesh = io::read_obj(&a.mesh)?;
    let edges = extract_wireframe(&mesh, a.mu)?;
    let points = sample_points(&edges, a.delta)?;
    io::write_bytes(&a.out, io::format_wireframe(&edges).as_bytes())?;
    println!("edges {} points {}", edges.len(), points.len());
    Ok(())
}

pub fn oracle(a: &OracleArgs, jobs: usize) -> Result<(), CliError> {
    if !(a.sigma_px > 0.0 && a.sigma_px.is_finite()) {
        return Err(CliError::validation(format!("sigma_px must be positive, got {}", a.sigma_px)));
    }
    if !(a.noise_amplitude >= 0.0) {
        return Err(CliError::validation("noise amplitude must be >= 0"));
    }
    let edges = io::read_wireframe(&a.wireframe)?;
    let points = sample_points(&edges, a.delta)?;
    let k = io::read_intrinsics(&a.intrinsics)?;
    let poses = io::read_poses(&a.poses)?;
    let mesh = a.mesh.as_deref().map(io::read_obj).transpose()?;
    create_dir(&a.out_dir)?;
    let pyramids = exec::install(jobs, || {
        exec::map_indexed(Execution::Parallel, poses.len(), |i| {
            let pose = euler_to_pose(&poses[i].1);
            let visible = match &mesh {
                Some(m) => cull_points(&points, m, &k, &pose, a.visibility_eps, Execution::Parallel)?,
                None => points.clone(),
            };
            let noise = NoiseSpec {
                amplitude: a.noise_amplitude,
                false_positives: a.false_positives,
                seed: a.seed.wrapping_add(i as u64),
            };
            synth_pyramid(&visible, &k, &pose, a.sigma_px, &noise, Execution::Parallel)
        })
    });
    for ((name, _), pyr) in poses.iter().zip(pyramids) {
        io::write_pyramid(&a.out_dir, name, &pyr?)?;
    }
    println!("wrote {} pyramids to {}", poses.len(), a.out_dir.display());
    Ok(())
}

fn pose_map(rows: Vec<(String, EulerPose)>) -> HashMap<String, EulerPose> {
    rows.into_iter().collect()
}

fn row_from_record(rec: &LocalizationRecord) -> ResultRow {
    let mut flag = rec.flags.join(";");
    let final_pose = match pose_to_euler(&rec.final_pose()) {
        Ok(p) => Some(p),
        Err(e) => {
            if !flag.is_empty() {
                flag.push(';');
            }
            flag.push_str(&e.to_string());
            None
        }
    };
    let level = |l: usize| rec.per_level.get(l).map(|r| r.selected);
    let trace = &rec.refine_trace;
    ResultRow {
        name: rec.query_name.clone(),
        poses: [Some(rec.prior), level(0), level(1), level(2), final_pose],
        points_used: Some(rec.points_used),
        objective: match (trace.first(), trace.last()) {
            (Some(a), Some(b)) => Some((*a, *b)),
            _ => None,
        },
        flag,
        timing: Some(rec.timing),
    }
}

fn failed_row(name: &str, prior: &EulerPose, err: &Error) -> ResultRow {
    ResultRow {
        name: name.to_string(),
        poses: [Some(*prior), None, None, None, None],
        points_used: None,
        objective: None,
        flag: err.root().to_string(),
        timing: None,
    }
}

pub fn localize(a: &LocalizeArgs, jobs: usize) -> Result<(), CliError> {
    let overrides = a
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut m = RunManifest::load(&a.manifest, &overrides)?;
    if let Some(out) = &a.out {
        m.out = out.clone();
    }
    if let Some(dir) = &a.overlay {
        m.overlay = Some(dir.clone());
    }

    let mesh = io::read_obj(&m.mesh)?;
    let edges = io::read_wireframe(&m.wireframe)?;
    let points = sample_points(&edges, m.delta)?;
    let k = io::read_intrinsics(&m.intrinsics)?;
    let priors = io::read_poses(&m.priors)?;
    let gt = m.gt.as_deref().map(io::read_poses).transpose()?.map(pose_map);
    if let Some(dir) = &m.overlay {
        create_dir(dir)?;
    }

    let cfg = m.pipeline.clone();
    let rows = exec::install(jobs, || {
        exec::map_indexed(Execution::Parallel, priors.len(), |i| -> Result<ResultRow, CliError> {
            let (name, prior) = &priors[i];
            let pyramid = match io::read_pyramid(&m.maps, name) {
                Ok(p) => p,
                Err(e) => return Ok(failed_row(name, prior, &e)),
            };
            let row = match run_query(name, &points, &mesh, &k, prior, &pyramid, &cfg) {
                Ok(rec) => row_from_record(&rec),
                Err(e) => failed_row(name, prior, &e),
            };
            if let (Some(dir), Some(est)) = (&m.overlay, row.poses[4]) {
                let mut canvas = Canvas::from_map(&pyramid.refined);
                canvas.draw_edges(&edges, &k, &euler_to_pose(prior), [40, 90, 255]);
                canvas.draw_edges(&edges, &k, &euler_to_pose(&est), [255, 40, 40]);
                let ppm = io::encode_ppm(canvas.width, canvas.height, &canvas.rgb)?;
                io::write_bytes(&dir.join(format!("{name}.ppm")), &ppm)?;
            }
            Ok(row)
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    write_results(&m.out, &rows, gt.as_ref())?;
    let flagged = rows.iter().filter(|r| !r.flag.is_empty()).count();
    println!(
        "localized {} queries ({} flagged) -> {}",
        rows.len(),
        flagged,
        m.out.display()
    );
    Ok(())
}

const ERRORS_HEADER: &str =
    "name,t_err,r_err,t_err_prior,r_err_prior,level1_t,level1_r,level2_t,level2_r,level3_t,level3_r,refined_t,refined_r";

fn error_of(p: &Option<EulerPose>, gt: &EulerPose) -> PoseError {
    match p {
        Some(p) => pose_error(&euler_to_pose(p), &euler_to_pose(gt)),
        None => PoseError {
            t_err: f64::INFINITY,
            r_err: f64::INFINITY,
        },
    }
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let thresholds = manifest::parse_thresholds(&a.thresholds)?;
    let rows = read_results(&a.results)?;
    let gt = pose_map(io::read_poses(&a.gt)?);

    let result_names: BTreeSet<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    let gt_names: BTreeSet<&str> = gt.keys().map(String::as_str).collect();
    if result_names.is_disjoint(&gt_names) {
        return Err(CliError::validation("results and ground truth share no query names"));
    }
    let missing: Vec<&str> = result_names.symmetric_difference(&gt_names).copied().collect();
    if !missing.is_empty() {
        return Err(CliError::validation(format!(
            "names not present in both results and ground truth: {}",
            missing.join(", ")
        )));
    }

    let mut errors = Vec::with_capacity(rows.len());
    let mut csv = format!("{ERRORS_HEADER}\n");
    for r in &rows {
        let g = &gt[&r.name];
        let per: Vec<PoseError> = [4, 0, 1, 2, 3, 4].iter().map(|&i| error_of(&r.poses[i], g)).collect();
        csv.push_str(&r.name);
        for e in &per {
            csv.push_str(&format!(",{},{}", e.t_err, e.r_err));
        }
        csv.push('\n');
        errors.push(per[0]);
    }
    let report = recall(&errors, &thresholds)?;
    print!("{}", report.to_table());
    match &a.out_dir {
        Some(dir) => {
            create_dir(dir)?;
            io::write_bytes(&dir.join("recall.csv"), report.to_csv().as_bytes())?;
            io::write_bytes(&dir.join("errors.csv"), csv.as_bytes())?;
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

pub fn synth_scene(a: &SynthArgs) -> Result<(), CliError> {
    let parts: Vec<f64> = a
        .prior_error
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::validation(format!("bad --prior-error '{}'", a.prior_error)))?;
    let prior_error: [f64; 4] = parts
        .try_into()
        .map_err(|_| CliError::validation("--prior-error needs four values x,y,z,yaw"))?;
    if prior_error.iter().any(|v| !(*v >= 0.0)) || !(a.tilt_error >= 0.0) {
        return Err(CliError::validation("prior error half-widths must be >= 0"));
    }
    if !(a.half_extent > 50.0) {
        return Err(CliError::validation("--half-extent must exceed 50 m"));
    }
    let mesh = box_city(&CityConfig {
        seed: a.seed,
        half_extent: a.half_extent,
        ..CityConfig::default()
    })?;
    let queries = synth_queries(&QueryConfig {
        seed: a.seed,
        count: a.queries,
        xy_extent: a.half_extent / 2.0,
        prior_error,
        prior_tilt_error: a.tilt_error,
        ..QueryConfig::default()
    });
    create_dir(&a.out_dir)?;
    let gt: Vec<_> = queries.iter().map(|q| (q.name.clone(), q.gt)).collect();
    let priors: Vec<_> = queries.iter().map(|q| (q.name.clone(), q.prior)).collect();
    let d = &a.out_dir;
    io::write_bytes(&d.join("mesh.obj"), io::format_obj(&mesh).as_bytes())?;
    io::write_bytes(&d.join("intrinsics.csv"), io::format_intrinsics(&default_intrinsics()).as_bytes())?;
    io::write_bytes(&d.join("gt.csv"), io::format_poses(&gt).as_bytes())?;
    io::write_bytes(&d.join("priors.csv"), io::format_poses(&priors).as_bytes())?;
    io::write_bytes(&d.join("manifest.txt"), manifest::template("2:2,3:3,5:5").as_bytes())?;
    println!(
        "city with {} faces, {} queries -> {}",
        mesh.faces.len(),
        queries.len(),
        d.display()
    );
    Ok(())
}
