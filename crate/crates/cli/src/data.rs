//! Dataset directories.
//!
//! A motion dataset is a directory holding `skeleton.json` and one or more
//! rotation CSV files. A directory of CSV files without `skeleton.json` is
//! read as position-only data; the joint count comes from the header.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dinterp::geometry::Skeleton;
use dinterp::motion::{
    apply_normalization, center_positions, load_csv, load_positions_csv, make_position_windows, make_windows,
    MotionSequence, PositionSequence,
};
use dinterp::par::Exec;

use crate::error::{CliError, CliResult};

pub const SKELETON_FILE: &str = "skeleton.json";

pub enum Dataset {
    Motion {
        skeleton: Arc<Skeleton>,
        clips: Vec<MotionSequence>,
    },
    Positions {
        clips: Vec<PositionSequence>,
    },
}

fn csv_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .csv files", dir.display())));
    }
    Ok(files)
}

fn header_joints(path: &Path) -> CliResult<usize> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cols = text.lines().next().map_or(0, |l| l.split(',').count());
    if cols < 4 || (cols - 1) % 3 != 0 {
        return Err(CliError::Data(format!(
            "{}: row 0: a position header needs `frame` plus three columns per joint",
            path.display()
        )));
    }
    Ok((cols - 1) / 3)
}

pub fn load(dir: &Path) -> CliResult<Dataset> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", dir.display())));
    }
    let files = csv_files(dir)?;
    let skel_path = dir.join(SKELETON_FILE);
    if skel_path.exists() {
        let skeleton = Arc::new(Skeleton::load(&skel_path)?);
        let clips = files
            .iter()
            .map(|f| load_csv(f, skeleton.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset::Motion { skeleton, clips })
    } else {
        let joints = header_joints(&files[0])?;
        let clips = files
            .iter()
            .map(|f| load_positions_csv(f, joints))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset::Positions { clips })
    }
}

/// Normalized windows of a motion dataset.
pub fn motion_windows(
    clips: &[MotionSequence],
    len: usize,
    offset: usize,
    exec: Exec,
) -> CliResult<Vec<MotionSequence>> {
    let mut raw = Vec::new();
    for c in clips {
        raw.extend(make_windows(c, len, offset)?);
    }
    if raw.is_empty() {
        return Err(CliError::Data(format!("no clip is at least {len} frames long")));
    }
    Ok(exec
        .map(&raw, apply_normalization)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?)
}

/// XZ-centered windows of a position-only dataset.
pub fn position_windows(clips: &[PositionSequence], len: usize, offset: usize) -> CliResult<Vec<PositionSequence>> {
    let mut out = Vec::new();
    for c in clips {
        for w in make_position_windows(c, len, offset)? {
            out.push(center_positions(&w)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("no clip is at least {len} frames long")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dinterp::motion::{save_csv, save_positions_csv, synth_motion, SynthKind};

    #[test]
    fn motion_and_position_directories() {
        let tmp = tempfile::tempdir().unwrap();
        let skel = Arc::new(Skeleton::biped5());
        let seq = synth_motion(SynthKind::FigureEight, skel.clone(), 60, 1).unwrap();

        let m = tmp.path().join("motion");
        fs::create_dir(&m).unwrap();
        skel.save(&m.join(SKELETON_FILE)).unwrap();
        save_csv(m.join("a.csv"), &seq).unwrap();
        match load(&m).unwrap() {
            Dataset::Motion { clips, .. } => {
                let w = motion_windows(&clips, 50, 5, Exec::Sequential).unwrap();
                assert_eq!(w.len(), 3);
            }
            Dataset::Positions { .. } => panic!("expected motion data"),
        }

        let p = tmp.path().join("pos");
        fs::create_dir(&p).unwrap();
        save_positions_csv(p.join("a.csv"), &PositionSequence::from_motion(&seq).unwrap()).unwrap();
        match load(&p).unwrap() {
            Dataset::Positions { clips } => {
                assert_eq!(clips[0].joints, 5);
                assert_eq!(position_windows(&clips, 50, 20).unwrap().len(), 1);
            }
            Dataset::Motion { .. } => panic!("expected positions"),
        }
    }

    #[test]
    fn empty_directory_is_a_data_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load(tmp.path()), Err(CliError::Data(_))));
    }
}
