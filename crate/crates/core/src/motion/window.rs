use super::{MotionSequence, PositionSequence};
use crate::{Error, Result};

/// Sliding windows of `window_len` frames every `offset` frames. The
/// trailing remainder shorter than a window is dropped.
pub fn make_windows(seq: &MotionSequence, window_len: usize, offset: usize) -> Result<Vec<MotionSequence>> {
    starts(seq.len(), window_len, offset)?
        .map(|s| seq.slice(s, window_len))
        .collect()
}

/// [`make_windows`] for position-only sequences.
pub fn make_position_windows(
    seq: &PositionSequence,
    window_len: usize,
    offset: usize,
) -> Result<Vec<PositionSequence>> {
    starts(seq.len(), window_len, offset)?
        .map(|s| seq.slice(s, window_len))
        .collect()
}

fn starts(len: usize, window_len: usize, offset: usize) -> Result<impl Iterator<Item = usize>> {
    if window_len == 0 || offset == 0 {
        return Err(Error::Config(format!(
            "window length and offset must be positive (got {window_len}, {offset})"
        )));
    }
    let last = len.checked_sub(window_len);
    Ok(last.into_iter().flat_map(move |l| (0..=l).step_by(offset)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Skeleton;
    use crate::motion::Pose;
    use std::sync::Arc;

    fn seq(n: usize) -> MotionSequence {
        let frames = (0..n).map(|t| Pose::rest(1).translated([t as f64, 0.0, 0.0])).collect();
        MotionSequence::new(Arc::new(Skeleton::chain(1)), frames, 30.0).unwrap()
    }

    fn starts(w: &[MotionSequence]) -> Vec<f64> {
        w.iter().map(|s| s.frames()[0].root_pos[0]).collect()
    }

    #[test]
    fn counts_follow_floor_formula() {
        for (n, expect) in [(65usize, vec![0.0]), (90, vec![0.0, 20.0, 40.0])] {
            let w = make_windows(&seq(n), 50, 20).unwrap();
            assert_eq!(w.len(), (n - 50) / 20 + 1);
            assert_eq!(starts(&w), expect);
        }
    }

    #[test]
    fn full_length_window_is_the_sequence() {
        let s = seq(50);
        let w = make_windows(&s, 50, 20).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].frames(), s.frames());
        assert!(make_windows(&seq(49), 50, 20).unwrap().is_empty());
        assert!(make_windows(&s, 0, 1).is_err());
    }

    #[test]
    fn frames_stay_in_order() {
        let w = make_windows(&seq(100), 30, 7).unwrap();
        for (i, win) in w.iter().enumerate() {
            for (k, f) in win.frames().iter().enumerate() {
                assert_eq!(f.root_pos[0], (i * 7 + k) as f64);
            }
        }
    }

    #[test]
    fn position_windows_match_motion_windows() {
        let s = seq(90);
        let pos = PositionSequence::from_motion(&s).unwrap();
        let a = make_windows(&s, 50, 20).unwrap();
        let b = make_position_windows(&pos, 50, 20).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(PositionSequence::from_motion(x).unwrap(), *y);
        }
    }
}
