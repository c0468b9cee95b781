use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub pipeline: String,
    pub accuracy: f64,
    pub sp: f64,
}

/// `a` dominates `b`: no worse on both axes (higher accuracy, lower SP) and
/// strictly better on one.
pub fn dominates(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.accuracy >= b.accuracy && a.sp <= b.sp && (a.accuracy > b.accuracy || a.sp < b.sp)
}

/// The non-dominated points, by accuracy descending, then SP ascending, then
/// pipeline id. Identical points are all kept.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut front: Vec<ParetoPoint> = points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect();
    front.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then(a.sp.total_cmp(&b.sp))
            .then_with(|| a.pipeline.cmp(&b.pipeline))
    });
    front
}
