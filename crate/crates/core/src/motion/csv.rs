//! CSV motion files.
//!
//! Rotation files carry `frame, root_px, root_py, root_pz` followed by
//! `j{i}_qw, j{i}_qx, j{i}_qy, j{i}_qz` for every joint in skeleton order.
//! Position-only files carry `frame` followed by `j{i}_px, j{i}_py, j{i}_pz`.
//! Rows are numbered from 1 (the first line after the header). In gapped
//! files a frame whose pose cells are all empty is missing.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use super::{MotionSequence, Pose, PositionSequence, DEFAULT_FRAME_RATE};
use crate::geometry::{make_sign_continuous, Quaternion, Skeleton, Vec3};
use crate::{Error, Result};

/// Tolerated deviation of a quaternion norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-3;

/// Frames read from a file that may have missing poses.
#[derive(Clone, Debug)]
pub struct GappedSequence {
    pub skeleton: Arc<Skeleton>,
    pub frames: Vec<Option<Pose>>,
}

impl GappedSequence {
    pub fn known(&self) -> Vec<usize> {
        (0..self.frames.len()).filter(|&t| self.frames[t].is_some()).collect()
    }
}

pub fn rotation_header(joints: usize) -> Vec<String> {
    let mut h: Vec<String> = ["frame", "root_px", "root_py", "root_pz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for j in 0..joints {
        for c in ["qw", "qx", "qy", "qz"] {
            h.push(format!("j{j}_{c}"));
        }
    }
    h
}

pub fn position_header(joints: usize) -> Vec<String> {
    let mut h = vec!["frame".to_string()];
    for j in 0..joints {
        for c in ["px", "py", "pz"] {
            h.push(format!("j{j}_{c}"));
        }
    }
    h
}

struct Table {
    path: String,
    rows: Vec<Vec<Option<f64>>>,
}

/// Reads the file and projects it onto `columns`. Empty cells become `None`.
fn read_table(path: &Path, columns: &[String]) -> Result<Table> {
    let name = path.display().to_string();
    let ingest = |row: usize, msg: String| Error::Ingest {
        path: name.clone(),
        row,
        msg,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| ingest(0, format!("unreadable header: {e}")))?
        .clone();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| ingest(0, format!("missing column `{c}`")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ingest(row, e.to_string()))?;
        let mut vals = Vec::with_capacity(index.len());
        for (&k, col) in index.iter().zip(columns) {
            let cell = rec.get(k).unwrap_or("");
            if cell.is_empty() {
                vals.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| ingest(row, format!("`{col}` is not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(ingest(row, format!("`{col}` is not finite")));
            }
            vals.push(Some(v));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(ingest(0, "no data rows".into()));
    }
    Ok(Table { path: name, rows })
}

impl Table {
    fn err(&self, row: usize, msg: String) -> Error {
        Error::Ingest {
            path: self.path.clone(),
            row,
            msg,
        }
    }

    /// Parses the pose cells of one row: all present, all empty (`None`),
    /// anything else is an error.
    fn pose_cells(&self, t: usize) -> Result<Option<Vec<f64>>> {
        let cells = &self.rows[t][1..];
        if cells.iter().all(Option::is_none) {
            return Ok(None);
        }
        cells
            .iter()
            .map(|c| c.ok_or_else(|| self.err(t + 1, "partially empty row".into())))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

fn parse_rotation_rows(path: &Path, skeleton: &Skeleton) -> Result<(Table, Vec<Option<(Vec3, Vec<Quaternion>)>>)> {
    let j = skeleton.joint_count();
    let table = read_table(path, &rotation_header(j))?;
    let mut out = Vec::with_capacity(table.rows.len());
    for t in 0..table.rows.len() {
        let Some(c) = table.pose_cells(t)? else {
            out.push(None);
            continue;
        };
        let root = [c[0], c[1], c[2]];
        let mut quats = Vec::with_capacity(j);
        for k in 0..j {
            let q = Quaternion::new(c[3 + 4 * k], c[4 + 4 * k], c[5 + 4 * k], c[6 + 4 * k]);
            let n = q.norm();
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(table.err(t + 1, format!("joint {k} quaternion has norm {n:.6}")));
            }
            quats.push(q.normalize());
        }
        out.push(Some((root, quats)));
    }
    // Continuity is enforced per joint across the known frames.
    for k in 0..j {
        let idx: Vec<usize> = (0..out.len()).filter(|&t| out[t].is_some()).collect();
        let mut track: Vec<Quaternion> = idx.iter().map(|&t| out[t].as_ref().unwrap().1[k]).collect();
        make_sign_continuous(&mut track);
        for (&t, q) in idx.iter().zip(track) {
            out[t].as_mut().unwrap().1[k] = q;
        }
    }
    Ok((table, out))
}

/// Raw sign-continuous quaternion tracks `[frame][joint]` of a rotation CSV.
pub fn load_quaternions(path: impl AsRef<Path>, skeleton: &Skeleton) -> Result<Vec<Vec<Quaternion>>> {
    let path = path.as_ref();
    let (table, rows) = parse_rotation_rows(path, skeleton)?;
    rows.into_iter()
        .enumerate()
        .map(|(t, r)| r.map(|(_, q)| q).ok_or_else(|| table.err(t + 1, "empty row".into())))
        .collect()
}

pub fn load_csv(path: impl AsRef<Path>, skeleton: Arc<Skeleton>) -> Result<MotionSequence> {
    let path = path.as_ref();
    let (table, rows) = parse_rotation_rows(path, &skeleton)?;
    let frames = rows
        .into_iter()
        .enumerate()
        .map(|(t, r)| {
            r.map(|(root, q)| Pose::from_quaternions(root, &q))
                .ok_or_else(|| table.err(t + 1, "empty row".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    MotionSequence::new(skeleton, frames, DEFAULT_FRAME_RATE)
}

pub fn load_csv_gapped(path: impl AsRef<Path>, skeleton: Arc<Skeleton>) -> Result<GappedSequence> {
    let path = path.as_ref();
    let (_, rows) = parse_rotation_rows(path, &skeleton)?;
    let frames = rows
        .into_iter()
        .map(|r| r.map(|(root, q)| Pose::from_quaternions(root, &q)))
        .collect();
    Ok(GappedSequence { skeleton, frames })
}

fn fmt_row(t: usize, vals: Option<&[f64]>, width: usize) -> Vec<String> {
    let mut row = vec![t.to_string()];
    match vals {
        Some(v) => row.extend(v.iter().map(|x| x.to_string())),
        None => row.extend(std::iter::repeat_n(String::new(), width)),
    }
    row
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Flattened `[root(3), q_0(4), q_1(4), ...]` per frame, sign-continuous
/// per joint over the present frames.
fn rotation_values(frames: &[Option<&Pose>], joints: usize) -> Result<Vec<Option<Vec<f64>>>> {
    let mut quats: Vec<Option<Vec<Quaternion>>> = frames
        .iter()
        .map(|p| p.map(|p| p.quaternions()).transpose())
        .collect::<Result<_>>()?;
    let present: Vec<usize> = (0..frames.len()).filter(|&t| quats[t].is_some()).collect();
    for k in 0..joints {
        let mut track: Vec<Quaternion> = present.iter().map(|&t| quats[t].as_ref().unwrap()[k]).collect();
        make_sign_continuous(&mut track);
        for (&t, q) in present.iter().zip(track) {
            quats[t].as_mut().unwrap()[k] = q;
        }
    }
    Ok(frames
        .iter()
        .zip(quats)
        .map(|(p, q)| {
            let (p, q) = (p.as_ref()?, q?);
            let mut v = p.root_pos.to_vec();
            v.extend(q.iter().flat_map(|q| q.to_array()));
            Some(v)
        })
        .collect())
}

pub fn save_csv(path: impl AsRef<Path>, seq: &MotionSequence) -> Result<()> {
    let frames: Vec<Option<&Pose>> = seq.frames().iter().map(Some).collect();
    save_rotation_rows(path.as_ref(), &frames, seq.joint_count())
}

pub fn save_csv_gapped(path: impl AsRef<Path>, seq: &GappedSequence) -> Result<()> {
    let frames: Vec<Option<&Pose>> = seq.frames.iter().map(Option::as_ref).collect();
    save_rotation_rows(path.as_ref(), &frames, seq.skeleton.joint_count())
}

fn save_rotation_rows(path: &Path, frames: &[Option<&Pose>], joints: usize) -> Result<()> {
    let vals = rotation_values(frames, joints)?;
    let width = 3 + 4 * joints;
    write_rows(
        path,
        &rotation_header(joints),
        vals.iter().enumerate().map(|(t, v)| fmt_row(t, v.as_deref(), width)),
    )
}

pub fn load_positions_csv(path: impl AsRef<Path>, joints: usize) -> Result<PositionSequence> {
    let path = path.as_ref();
    let table = read_table(path, &position_header(joints))?;
    let frames = (0..table.rows.len())
        .map(|t| {
            let c = table
                .pose_cells(t)?
                .ok_or_else(|| table.err(t + 1, "empty row".into()))?;
            Ok(c.chunks(3).map(|p| [p[0], p[1], p[2]]).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    PositionSequence::new(joints, frames)
}

pub fn save_positions_csv(path: impl AsRef<Path>, seq: &PositionSequence) -> Result<()> {
    let width = 3 * seq.joints;
    write_rows(
        path.as_ref(),
        &position_header(seq.joints),
        seq.frames.iter().enumerate().map(|(t, f)| {
            let v: Vec<f64> = f.iter().flat_map(|p| p.iter().copied()).collect();
            fmt_row(t, Some(&v), width)
        }),
    )
}
