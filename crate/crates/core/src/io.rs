//! Correspondence CSV, PLY output, JSON reports and stripe peak localization.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::crossratio::SurfaceEstimate;
use crate::error::{Error, Result};
use crate::geometry::RigidPose;
use crate::sim::{NoiseSpec, ReflectionTriple};

pub const FORMAT_VERSION: u32 = 1;
const PLANE_UNIT: &str = "mm";
const IMAGE_UNIT: &str = "px";

const BASE_COLUMNS: [&str; 8] = ["u", "v", "x0", "y0", "x1", "y1", "x2", "y2"];
const GT_COLUMNS: [&str; 6] = ["gx", "gy", "gz", "nx", "ny", "nz"];

/// Ground truth carried alongside a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub plane_motions: [RigidPose<f64>; 2],
    pub camera: Camera<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub image_size: (u32, u32),
    pub plane_extent: (f64, f64),
    pub noise: NoiseSpec,
    pub grid_step: f64,
    pub ground_truth: Option<GroundTruth>,
}

/// Reflection triples plus the metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub triples: Vec<ReflectionTriple>,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct Units {
    plane: String,
    image: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), msg: e.to_string() }
}

/// Writes `contents` with LF line endings.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

/// 17 significant digits, locale independent.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl CorrespondenceSet {
    pub fn has_ground_truth_points(&self) -> bool {
        !self.triples.is_empty()
            && self.triples.iter().all(|t| t.gt_point.is_some() && t.gt_normal.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let units = Units { plane: PLANE_UNIT.into(), image: IMAGE_UNIT.into() };
        let meta = &self.meta;
        let _ = writeln!(out, "# format_version = {FORMAT_VERSION}");
        let _ = writeln!(out, "# units = {}", serde_json::to_string(&units).unwrap());
        let _ = writeln!(out, "# image_size = {}", serde_json::to_string(&meta.image_size).unwrap());
        let _ = writeln!(out, "# plane_extent = {}", serde_json::to_string(&meta.plane_extent).unwrap());
        let _ = writeln!(out, "# grid_step = {}", serde_json::to_string(&meta.grid_step).unwrap());
        let _ = writeln!(out, "# noise = {}", serde_json::to_string(&meta.noise).unwrap());
        let _ = writeln!(out, "# ground_truth = {}", serde_json::to_string(&meta.ground_truth).unwrap());
        let gt = self.has_ground_truth_points();
        let mut cols: Vec<&str> = BASE_COLUMNS.to_vec();
        if gt {
            cols.extend(GT_COLUMNS);
        }
        out.push_str(&cols.join(","));
        out.push('\n');
        for t in &self.triples {
            let mut vals = vec![t.pixel.x, t.pixel.y];
            for x in &t.x {
                vals.extend([x.x, x.y]);
            }
            if gt {
                let (g, n) = (t.gt_point.unwrap(), t.gt_normal.unwrap());
                vals.extend([g.x, g.y, g.z, n.x, n.y, n.z]);
            }
            let row: Vec<String> = vals.into_iter().map(num).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut fields: std::collections::BTreeMap<String, (usize, String)> = Default::default();
        let mut header: Option<Vec<String>> = None;
        let mut triples = Vec::new();
        let mut col_idx: Vec<usize> = Vec::new();
        let mut gt_idx: Option<Vec<usize>> = None;
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    fields.insert(k.trim().to_string(), (ln, v.trim().to_string()));
                }
                continue;
            }
            match &header {
                None => {
                    let h: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                    for c in BASE_COLUMNS {
                        match h.iter().position(|x| x == c) {
                            Some(i) => col_idx.push(i),
                            None => return Err(Error::SchemaMismatch(format!("missing column '{c}'"))),
                        }
                    }
                    let gts: Vec<Option<usize>> =
                        GT_COLUMNS.iter().map(|c| h.iter().position(|x| x == c)).collect();
                    if gts.iter().all(Option::is_some) {
                        gt_idx = Some(gts.into_iter().flatten().collect());
                    } else if let Some(k) = gts.iter().position(Option::is_some) {
                        let missing = GT_COLUMNS.iter().zip(&gts).find(|(_, g)| g.is_none()).unwrap().0;
                        return Err(Error::SchemaMismatch(format!(
                            "ground-truth column '{}' present but '{missing}' missing",
                            GT_COLUMNS[k]
                        )));
                    }
                    header = Some(h);
                }
                Some(h) => {
                    let cells: Vec<&str> = line.split(',').collect();
                    if cells.len() != h.len() {
                        return Err(Error::ParseError {
                            line: ln,
                            msg: format!("expected {} fields, found {}", h.len(), cells.len()),
                        });
                    }
                    let val = |i: usize| -> Result<f64> {
                        cells[i].trim().parse::<f64>().map_err(|e| Error::ParseError {
                            line: ln,
                            msg: format!("column '{}': {e}", h[i]),
                        })
                    };
                    let b: Vec<f64> = col_idx.iter().map(|&i| val(i)).collect::<Result<_>>()?;
                    let (gt_point, gt_normal) = match &gt_idx {
                        Some(g) => {
                            let v: Vec<f64> = g.iter().map(|&i| val(i)).collect::<Result<_>>()?;
                            (Some(Vector3::new(v[0], v[1], v[2])), Some(Vector3::new(v[3], v[4], v[5])))
                        }
                        None => (None, None),
                    };
                    triples.push(ReflectionTriple {
                        pixel: Vector2::new(b[0], b[1]),
                        x: [Vector2::new(b[2], b[3]), Vector2::new(b[4], b[5]), Vector2::new(b[6], b[7])],
                        gt_point,
                        gt_normal,
                    });
                }
            }
        }
        if header.is_none() {
            return Err(Error::ParseError { line: text.lines().count().max(1), msg: "no header row".into() });
        }
        if triples.is_empty() {
            return Err(Error::ParseError { line: text.lines().count().max(1), msg: "no data rows".into() });
        }
        fn get<T: for<'de> Deserialize<'de>>(
            fields: &std::collections::BTreeMap<String, (usize, String)>,
            key: &str,
        ) -> Result<T> {
            let (ln, v) = fields
                .get(key)
                .ok_or_else(|| Error::SchemaMismatch(format!("missing metadata '{key}'")))?;
            serde_json::from_str(v).map_err(|e| Error::ParseError { line: *ln, msg: format!("{key}: {e}") })
        }
        let version: u32 = get(&fields, "format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::SchemaMismatch(format!("unsupported format_version {version}")));
        }
        let units: Units = get(&fields, "units")?;
        if units.plane != PLANE_UNIT || units.image != IMAGE_UNIT {
            return Err(Error::SchemaMismatch(format!(
                "units must be plane={PLANE_UNIT}, image={IMAGE_UNIT}; found plane={}, image={}",
                units.plane, units.image
            )));
        }
        let set = CorrespondenceSet {
            triples,
            meta: DatasetMeta {
                image_size: get(&fields, "image_size")?,
                plane_extent: get(&fields, "plane_extent")?,
                noise: get(&fields, "noise")?,
                grid_step: get(&fields, "grid_step")?,
                ground_truth: get(&fields, "ground_truth")?,
            },
        };
        set.check_bounds()?;
        Ok(set)
    }

    /// Pixels inside the image and plane points inside the declared extent.
    pub fn check_bounds(&self) -> Result<()> {
        let (w, h) = self.meta.image_size;
        let (w1, w2) = self.meta.plane_extent;
        let slack = 1e-9 * w1.max(w2);
        for (i, t) in self.triples.iter().enumerate() {
            if t.pixel.x < 0.0 || t.pixel.y < 0.0 || t.pixel.x > (w - 1) as f64 || t.pixel.y > (h - 1) as f64 {
                return Err(Error::SchemaMismatch(format!("row {i}: pixel outside the image")));
            }
            // noisy coordinates may leave the plane slightly; allow a few sigma
            let margin = slack + 6.0 * self.meta.noise.gaussian_sigma;
            if t.x.iter().any(|x| x.x.abs() > w1 + margin || x.y.abs() > w2 + margin) {
                return Err(Error::SchemaMismatch(format!("row {i}: plane point outside the extent")));
            }
        }
        Ok(())
    }
}

pub fn write_correspondences(set: &CorrespondenceSet, path: &Path) -> Result<()> {
    write_text(path, &set.to_csv())
}

pub fn read_correspondences(path: &Path) -> Result<CorrespondenceSet> {
    CorrespondenceSet::from_csv(&read_text(path)?)
}

/// ASCII PLY with positions and normals of the valid points, row-major by source pixel.
pub fn point_cloud_ply(surface: &SurfaceEstimate) -> Result<String> {
    let mut idx: Vec<usize> = (0..surface.points.len()).filter(|&i| surface.valid[i].is_valid()).collect();
    if idx.is_empty() {
        return Err(Error::NoValidPoints);
    }
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (surface.pixels[a], surface.pixels[b]);
        pa.y.total_cmp(&pb.y).then(pa.x.total_cmp(&pb.x))
    });
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "comment format_version {FORMAT_VERSION}");
    out.push_str("comment units mm\n");
    let _ = writeln!(out, "element vertex {}", idx.len());
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        let _ = writeln!(out, "property double {p}");
    }
    out.push_str("end_header\n");
    for i in idx {
        let (p, n) = (surface.points[i], surface.normals[i]);
        let row: Vec<String> = [p.x, p.y, p.z, n.x, n.y, n.z].into_iter().map(num).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_point_cloud(surface: &SurfaceEstimate, path: &Path) -> Result<()> {
    write_text(path, &point_cloud_ply(surface)?)
}

/// Minimal reader for ASCII PLY vertex lists: returns one row of properties per vertex.
pub fn parse_ply_vertices(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().enumerate();
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::ParseError { line: 1, msg: "missing 'ply' magic".into() }),
    }
    for (ln, line) in lines.by_ref() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["element", "vertex", n] => {
                in_vertex = true;
                count = Some(n.parse::<usize>().map_err(|e| Error::ParseError { line: ln + 1, msg: e.to_string() })?);
            }
            ["element", ..] => in_vertex = false,
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            _ => {}
        }
    }
    let n = count.ok_or(Error::ParseError { line: 0, msg: "no vertex element".into() })?;
    let mut rows = Vec::with_capacity(n);
    for (ln, line) in lines.take(n) {
        let row = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| Error::ParseError { line: ln + 1, msg: e.to_string() }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::ParseError { line: 0, msg: format!("expected {n} vertices, found {}", rows.len()) });
    }
    Ok((props, rows))
}

/// Intensity samples of a stripe sweep at one pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityProfile {
    pub positions: Vec<f64>,
    pub intensities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Sub-sample position of the parabola vertex.
    pub position: f64,
    /// `|f''|` of the fitted parabola; small values mean an uncertain peak.
    pub sharpness: f64,
}

/// Vertex of the parabola through the maximum sample and its two neighbours.
pub fn locate_peak(profile: &IntensityProfile) -> Result<Peak> {
    let (p, y) = (&profile.positions, &profile.intensities);
    if p.len() != y.len() || y.len() < 3 {
        return Err(Error::InvalidInput("profile needs at least 3 samples of equal length".into()));
    }
    let i = y
        .iter()
        .enumerate()
        .fold(0, |best, (k, &v)| if v > y[best] { k } else { best });
    if i == 0 || i == y.len() - 1 {
        return Err(Error::PeakAtBoundary);
    }
    // parabola in offsets from the peak sample
    let (ha, hb) = (p[i - 1] - p[i], p[i + 1] - p[i]);
    let (da, db) = (y[i - 1] - y[i], y[i + 1] - y[i]);
    let det = ha * hb * (ha - hb);
    let a = (da * hb - db * ha) / det;
    let b = (db * ha * ha - da * hb * hb) / det;
    if !(a < 0.0) {
        return Err(Error::FlatProfile);
    }
    Ok(Peak { position: p[i] - b / (2.0 * a), sharpness: (2.0 * a).abs() })
}
