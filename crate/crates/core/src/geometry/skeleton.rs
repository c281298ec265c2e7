use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{norm, Vec3};
use crate::{Error, Result};

/// Joint hierarchy with constant bone offsets.
///
/// Joints are stored in topological order: the root comes first and every
/// parent index is smaller than its child's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonFile", into = "SkeletonFile")]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
}

/// On-disk form; the root's parent is `-1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SkeletonFile {
    names: Vec<String>,
    parents: Vec<i64>,
    offsets: Vec<Vec3>,
}

impl TryFrom<SkeletonFile> for Skeleton {
    type Error = Error;

    fn try_from(f: SkeletonFile) -> Result<Self> {
        let parents = f
            .parents
            .iter()
            .map(|&p| if p < 0 { None } else { Some(p as usize) })
            .collect();
        Skeleton::new(f.names, parents, f.offsets)
    }
}

impl From<Skeleton> for SkeletonFile {
    fn from(s: Skeleton) -> Self {
        SkeletonFile {
            parents: s.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            names: s.names,
            offsets: s.offsets,
        }
    }
}

impl Skeleton {
    pub fn new(names: Vec<String>, parents: Vec<Option<usize>>, offsets: Vec<Vec3>) -> Result<Self> {
        let j = parents.len();
        if j == 0 {
            return Err(Error::Config("skeleton has no joints".into()));
        }
        if names.len() != j || offsets.len() != j {
            return Err(Error::Config(format!(
                "skeleton lists {} names, {} parents and {} offsets",
                names.len(),
                j,
                offsets.len()
            )));
        }
        if parents[0].is_some() {
            return Err(Error::Config("first joint must be the root".into()));
        }
        for (i, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(Error::Config(format!("joint {i} is a second root"))),
                Some(p) if *p >= i => {
                    return Err(Error::Config(format!(
                        "joint {i} has parent {p}; parents must precede children"
                    )))
                }
                _ => {}
            }
        }
        if offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite bone offset".into()));
        }
        Ok(Skeleton {
            names,
            parents,
            offsets,
        })
    }

    /// A five-joint biped (hips, spine, head, two legs) used for synthetic data.
    pub fn biped5() -> Self {
        Skeleton::new(
            ["Hips", "Spine", "Head", "LeftUpLeg", "RightUpLeg"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vec![None, Some(0), Some(1), Some(0), Some(0)],
            vec![
                [0.0, 0.0, 0.0],
                [0.0, 0.5, 0.0],
                [0.0, 0.5, 0.0],
                [0.15, -0.45, 0.0],
                [-0.15, -0.45, 0.0],
            ],
        )
        .expect("static skeleton is valid")
    }

    /// Straight chain of `n` joints along +Y with unit bones.
    pub fn chain(n: usize) -> Self {
        let names = (0..n).map(|i| format!("joint{i}")).collect();
        let parents = (0..n).map(|i| if i == 0 { None } else { Some(i - 1) }).collect();
        let offsets = (0..n)
            .map(|i| if i == 0 { [0.0; 3] } else { [0.0, 1.0, 0.0] })
            .collect();
        Skeleton::new(names, parents, offsets).expect("chain is valid")
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offset(&self, j: usize) -> Vec3 {
        self.offsets[j]
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    pub fn bone_length(&self, j: usize) -> f64 {
        norm(self.offsets[j])
    }

    /// Vertical extent of the rest pose, used as a natural length scale.
    pub fn rest_height(&self) -> f64 {
        let mut pos = vec![[0.0; 3]; self.joint_count()];
        for j in 1..self.joint_count() {
            let p = pos[self.parents[j].unwrap()];
            let o = self.offsets[j];
            pos[j] = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
        }
        let (lo, hi) = pos
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p[1]), hi.max(p[1])));
        hi - lo
    }

    /// Index of the first joint whose lowercase name contains all `needles`.
    pub fn find_joint(&self, needles: &[&str]) -> Option<usize> {
        self.names.iter().position(|n| {
            let n = n.to_lowercase();
            needles.iter().all(|k| n.contains(k))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
