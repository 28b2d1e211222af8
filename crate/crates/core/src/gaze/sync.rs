use serde::{Deserialize, Serialize};

use super::{resolve_gaze, FrameSize, GazePoint, GazeSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGazeBinding {
    pub frame_index: usize,
    pub frame_timestamp_us: i64,
    pub gaze: Option<GazePoint>,
    /// Timestamp of the sample that supplied `gaze`.
    pub sample_timestamp_us: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncOutput {
    pub bindings: Vec<FrameGazeBinding>,
    /// Bound gaze points that fall outside the frame.
    pub out_of_bounds: usize,
}

/// Half the median inter-frame interval, or `fallback_us` with fewer than two frames.
pub fn default_tolerance_us(frame_timestamps: &[i64], fallback_us: i64) -> i64 {
    if frame_timestamps.len() < 2 {
        return fallback_us;
    }
    let mut gaps: Vec<i64> = frame_timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    let n = gaps.len();
    let median = if n % 2 == 1 {
        gaps[n / 2]
    } else {
        (gaps[n / 2 - 1] + gaps[n / 2]) / 2
    };
    (median / 2).max(1)
}

/// Bind every frame to the nearest-in-time sample that resolves to a gaze
/// point, provided it lies within `tolerance_us`. Equidistant samples resolve
/// to the earlier one.
///
/// Both inputs must be sorted ascending.
pub fn sync_to_frames(
    samples: &[GazeSample],
    frame_timestamps: &[i64],
    tolerance_us: i64,
    frame: FrameSize,
) -> SyncOutput {
    let resolved: Vec<(i64, GazePoint)> = samples
        .iter()
        .filter_map(|s| resolve_gaze(s).map(|p| (s.timestamp_us, p)))
        .collect();

    let mut out_of_bounds = 0;
    let bindings = frame_timestamps
        .iter()
        .enumerate()
        .map(|(frame_index, &ft)| {
            // first resolved sample at or after the frame time
            let after = resolved.partition_point(|(t, _)| *t < ft);
            let mut best: Option<(i64, GazePoint)> = None;
            if after > 0 {
                best = Some(resolved[after - 1]);
            }
            if let Some(&(t, p)) = resolved.get(after) {
                let take_later = match best {
                    Some((bt, _)) => (t - ft) < (ft - bt),
                    None => true,
                };
                if take_later {
                    best = Some((t, p));
                }
            }
            let best = best.filter(|(t, _)| (t - ft).abs() <= tolerance_us);
            if let Some((_, p)) = best {
                if !p.is_within(frame) {
                    out_of_bounds += 1;
                }
            }
            FrameGazeBinding {
                frame_index,
                frame_timestamp_us: ft,
                gaze: best.map(|(_, p)| p),
                sample_timestamp_us: best.map(|(t, _)| t),
            }
        })
        .collect();
    if out_of_bounds > 0 {
        tracing::warn!(out_of_bounds, "gaze points outside the frame were kept");
    }
    SyncOutput {
        bindings,
        out_of_bounds,
    }
}
