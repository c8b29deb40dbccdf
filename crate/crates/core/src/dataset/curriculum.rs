use serde::{Deserialize, Serialize};

/// Piecewise-linear schedule of the maximum start-to-goal path length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub start_frame: u64,
    pub end_frame: u64,
    pub start_length: usize,
    pub end_length: usize,
}

impl CurriculumSchedule {
    /// Grows from 3 actions at frame 0.5e6 to `max_length` at 5e6.
    pub fn standard(max_length: usize) -> Self {
        CurriculumSchedule { start_frame: 500_000, end_frame: 5_000_000, start_length: 3, end_length: max_length }
    }
}

pub fn curriculum_max_length(frame: u64, schedule: &CurriculumSchedule) -> usize {
    let lo = schedule.start_length;
    let hi = schedule.end_length.max(lo);
    if frame <= schedule.start_frame {
        return lo;
    }
    if frame >= schedule.end_frame {
        return hi;
    }
    let t = (frame - schedule.start_frame) as f64 / (schedule.end_frame - schedule.start_frame) as f64;
    let len = (lo as f64 + t * (hi - lo) as f64).round() as usize;
    len.clamp(lo, hi)
}
