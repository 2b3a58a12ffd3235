use crate::error::Result;
use crate::models::{KinematicState, Scan};

/// A reported target state at the current scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub id: u64,
    pub state: KinematicState,
}

/// Common interface of the three trackers, driven scan by scan.
pub trait Tracker {
    fn name(&self) -> &'static str;

    /// Processes one scan and returns the estimates reported for it.
    fn step(&mut self, scan: &Scan) -> Result<Vec<Estimate>>;
}
