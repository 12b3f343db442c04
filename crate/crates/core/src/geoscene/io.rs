//! File formats: dataset CSV, scene JSON, split JSON.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every value exactly.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{Dataset, MultipathRecord, PathComponent, PathType, Scene, SplitSpec};
use crate::error::{Error, Result};
use crate::geom::Point2;

const TYPE_NONE: &str = "NONE";

/// Write the dataset CSV: header `x,y` then `p{l}_dbm,tau{l}_ns,theta{l}_deg,
/// phi{l}_deg,type{l}` per path; invalid slots carry type `NONE`.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("x,y");
    for l in 1..=dataset.l_paths {
        out.push_str(&format!(
            ",p{l}_dbm,tau{l}_ns,theta{l}_deg,phi{l}_deg,type{l}"
        ));
    }
    out.push('\n');
    for r in &dataset.records {
        out.push_str(&format!("{},{}", r.coords.x, r.coords.y));
        for p in &r.paths {
            let type_code = if p.valid { p.path_type.code() } else { TYPE_NONE };
            out.push_str(&format!(
                ",{},{},{},{},{}",
                p.power_dbm, p.delay_ns, p.elevation_deg, p.azimuth_deg, type_code
            ));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn parse_field(raw: &str, line: usize, what: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from {raw:?}"),
    })
}

/// Read a dataset CSV. The path count is taken from the header; the grid
/// spacing is inferred as the smallest positive gap between distinct x (or,
/// failing that, y) coordinates.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 7 || (columns.len() - 2) % 5 != 0 || columns[0] != "x" || columns[1] != "y" {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let l_paths = (columns.len() - 2) / 5;

    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 2 + 5 * l_paths {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    2 + 5 * l_paths,
                    fields.len()
                ),
            });
        }
        let x = parse_field(fields[0], line, "x")?;
        let y = parse_field(fields[1], line, "y")?;
        let mut paths = Vec::with_capacity(l_paths);
        for l in 0..l_paths {
            let base = 2 + 5 * l;
            let type_code = fields[base + 4].trim();
            let (path_type, valid) = if type_code == TYPE_NONE {
                (PathType::Los, false)
            } else {
                match PathType::from_code(type_code) {
                    Some(t) => (t, true),
                    None => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unknown path type {type_code:?}"),
                        })
                    }
                }
            };
            paths.push(PathComponent {
                power_dbm: parse_field(fields[base], line, "power")?,
                delay_ns: parse_field(fields[base + 1], line, "delay")?,
                elevation_deg: parse_field(fields[base + 2], line, "elevation")?,
                azimuth_deg: parse_field(fields[base + 3], line, "azimuth")?,
                path_type,
                valid,
            });
        }
        records.push(MultipathRecord {
            coords: Point2::new(x, y),
            paths,
        });
    }
    let grid_spacing = infer_grid_spacing(&records);
    Ok(Dataset {
        records,
        grid_spacing,
        l_paths,
    })
}

fn infer_grid_spacing(records: &[MultipathRecord]) -> f64 {
    for axis in [0, 1] {
        let mut coords: Vec<f64> = records
            .iter()
            .map(|r| if axis == 0 { r.coords.x } else { r.coords.y })
            .collect();
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        coords.dedup();
        let min_gap = coords
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > 0.0)
            .fold(f64::INFINITY, f64::min);
        if min_gap.is_finite() {
            return min_gap;
        }
    }
    1.0
}

pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(scene).expect("scene serializes");
    fs::write(path, json)?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path)?;
    let scene: Scene = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    scene.validate()?;
    Ok(scene)
}

pub fn write_split(split: &SplitSpec, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(split).expect("split serializes");
    fs::write(path, json)?;
    Ok(())
}

pub fn read_split(path: &Path) -> Result<SplitSpec> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}
