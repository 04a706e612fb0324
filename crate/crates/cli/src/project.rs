use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use nalgebra::Vector3;
use serde::Serialize;

use mvdet_core::camgeo::{classify_region, is_visible, project_point};
use mvdet_core::io::{AnnotationJson, CalibrationJson};
use mvdet_core::CameraRig;

use crate::output::{parse_point, read_json, write_json, Outcome};

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Calibration JSON.
    #[arg(long)]
    calib: PathBuf,
    /// Ego-frame point `x,y,z` in meters; repeatable.
    #[arg(long = "point", value_parser = parse_point, allow_hyphen_values = true)]
    points: Vec<[f64; 3]>,
    /// Annotation JSON whose objects are classified by region.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CameraHit {
    camera: String,
    pixel: Option<[f64; 2]>,
    depth: f64,
    visible: bool,
}

#[derive(Serialize)]
struct PointReport {
    point: [f64; 3],
    views: Vec<CameraHit>,
    visible_in: Vec<usize>,
}

#[derive(Serialize)]
struct ObjectRegion {
    frame: usize,
    object: usize,
    region: &'static str,
}

#[derive(Serialize)]
struct ProjectReport {
    points: Vec<PointReport>,
    objects: Vec<ObjectRegion>,
}

fn project_all(p: [f64; 3], rig: &CameraRig) -> PointReport {
    let v = Vector3::from(p);
    let views: Vec<CameraHit> = rig
        .cameras()
        .iter()
        .map(|cam| {
            let proj = project_point(&v, cam);
            CameraHit {
                camera: cam.id.clone(),
                pixel: proj.in_front().then(|| [proj.pixel.x, proj.pixel.y]),
                depth: proj.depth,
                visible: is_visible(&v, cam),
            }
        })
        .collect();
    let visible_in = views.iter().enumerate().filter(|(_, h)| h.visible).map(|(i, _)| i).collect();
    PointReport {
        point: p,
        views,
        visible_in,
    }
}

pub fn run(args: ProjectArgs) -> anyhow::Result<Outcome> {
    let calib: CalibrationJson = read_json(&args.calib)?;
    let rig = calib.to_rig()?;
    let points: Vec<PointReport> = args.points.iter().map(|p| project_all(*p, &rig)).collect();

    let mut objects = Vec::new();
    if let Some(path) = &args.annotations {
        let ann: AnnotationJson = read_json(path)?;
        for (f, frame) in ann.frames.iter().enumerate() {
            let frame_rig = frame.calib.to_rig()?;
            for (i, o) in frame.objects.iter().enumerate() {
                objects.push(ObjectRegion {
                    frame: f,
                    object: i,
                    region: classify_region(&o.to_box()?, &frame_rig).as_str(),
                });
            }
        }
    }

    let mut human = String::new();
    for p in &points {
        let [x, y, z] = p.point;
        let _ = writeln!(human, "point ({x}, {y}, {z}): visible in {:?}", p.visible_in);
        for h in &p.views {
            match h.pixel {
                Some([u, v]) if h.visible => {
                    let _ = writeln!(human, "  {:<20} u {u:>10.3}  v {v:>10.3}  depth {:.3}", h.camera, h.depth);
                }
                _ => {
                    let _ = writeln!(human, "  {:<20} not visible (depth {:.3})", h.camera, h.depth);
                }
            }
        }
    }
    if !objects.is_empty() {
        let _ = writeln!(human, "objects:");
        for o in &objects {
            let _ = writeln!(human, "  frame {} object {:>4}  {}", o.frame, o.object, o.region);
        }
    }

    let report = ProjectReport { points, objects };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Outcome::ok(report, human)
}
