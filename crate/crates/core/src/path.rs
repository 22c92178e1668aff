//! (α, t) points and the two path orderings.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub alpha: u32,
    pub t: f64,
}

impl PathPoint {
    pub fn new(alpha: u32, t: f64) -> Self {
        Self { alpha, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    TimeLike,
    SpaceLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathClass {
    TimeLike,
    SpaceLike,
    Both,
    Neither,
}

/// (α,t) ≺_t (β,s): α ≤ β, t ≤ s and the points differ.
pub fn precedes_time_like(a: PathPoint, b: PathPoint) -> bool {
    a.alpha <= b.alpha && a.t <= b.t && a != b
}

/// (α,t) ≺_s (β,s): α ≥ β, t ≤ s and the points differ.
pub fn precedes_space_like(a: PathPoint, b: PathPoint) -> bool {
    a.alpha >= b.alpha && a.t <= b.t && a != b
}

impl Ordering {
    pub fn precedes(self, a: PathPoint, b: PathPoint) -> bool {
        match self {
            Ordering::TimeLike => precedes_time_like(a, b),
            Ordering::SpaceLike => precedes_space_like(a, b),
        }
    }

    pub fn is_strictly_ordered(self, path: &[PathPoint]) -> bool {
        path.windows(2).all(|w| self.precedes(w[0], w[1]))
    }
}

/// Classify a path of at least two points by its consecutive pairs.
pub fn classify_path(points: &[PathPoint]) -> PathClass {
    let tl = Ordering::TimeLike.is_strictly_ordered(points);
    let sl = Ordering::SpaceLike.is_strictly_ordered(points);
    match (tl, sl) {
        (true, true) => PathClass::Both,
        (true, false) => PathClass::TimeLike,
        (false, true) => PathClass::SpaceLike,
        (false, false) => PathClass::Neither,
    }
}
