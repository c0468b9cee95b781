//! Equalized-odds derived classifier.
//!
//! For group `a` with base point `(x_a, y_a) = (FPR, TPR)`, outputting 1 with
//! probability `p_a` when the base says 1 and `q_a` when it says 0 yields
//! `FPR' = p·x + q·(1 − x)` and `TPR' = p·y + q·(1 − y)`. The fit picks the
//! four probabilities making both groups' points equal at minimum expected
//! 0/1 loss. This is a linear program in four bounded variables with two
//! equality constraints, solved by enumerating its vertices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqOddsMix {
    /// Probability of keeping a base prediction of 1, per group.
    pub p_keep_pos: [f64; 2],
    /// Probability of keeping a base prediction of 0, per group.
    pub p_keep_neg: [f64; 2],
}

impl EqOddsMix {
    pub const IDENTITY: EqOddsMix = EqOddsMix {
        p_keep_pos: [1.0, 1.0],
        p_keep_neg: [1.0, 1.0],
    };

    pub fn validate(&self) -> Result<()> {
        let all = self.p_keep_pos.iter().chain(&self.p_keep_neg);
        if all.clone().all(|v| (0.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "mixing probabilities outside [0, 1]: {self:?}"
            )))
        }
    }

    /// `(FPR, TPR)` of the derived classifier in group `a` given that group's
    /// base point.
    pub fn point(&self, a: usize, base: (f64, f64)) -> (f64, f64) {
        let p = self.p_keep_pos[a];
        let q = 1.0 - self.p_keep_neg[a];
        (
            p * base.0 + q * (1.0 - base.0),
            p * base.1 + q * (1.0 - base.1),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqOddsSolution {
    pub mix: EqOddsMix,
    /// The common `(FPR, TPR)`.
    pub point: (f64, f64),
    /// Expected 0/1 loss as a fraction of the total mass.
    pub loss: f64,
}

const EPS: f64 = 1e-12;

/// Solves the LP for base points `points[a] = (FPR, TPR)` and label masses
/// `mass[a][y]`. Ties in loss go to the lowest FPR, then the lowest TPR, then
/// the mix keeping the most base predictions.
pub fn solve_eq_odds(points: [(f64, f64); 2], mass: [[f64; 2]; 2]) -> EqOddsSolution {
    // variables v = [p0, q0, p1, q1]; rows: FPR0 − FPR1 = 0, TPR0 − TPR1 = 0
    let (x0, y0) = points[0];
    let (x1, y1) = points[1];
    let cols = [
        [x0, y0],
        [1.0 - x0, 1.0 - y0],
        [-x1, -y1],
        [-(1.0 - x1), -(1.0 - y1)],
    ];
    let neg = mass[0][0] + mass[1][0];
    let pos = mass[0][1] + mass[1][1];
    let total = neg + pos;

    let mut best: Option<(EqOddsSolution, f64)> = None;
    for code in 0..81usize {
        // state per variable: 0 → at 0, 1 → at 1, 2 → free
        let states: Vec<usize> = (0..4).map(|k| code / 3usize.pow(k as u32) % 3).collect();
        let free: Vec<usize> = (0..4).filter(|&k| states[k] == 2).collect();
        if free.len() > 2 {
            continue;
        }
        let mut v = [0.0; 4];
        let mut rhs = [0.0; 2];
        for k in 0..4 {
            if states[k] == 1 {
                v[k] = 1.0;
                rhs[0] -= cols[k][0];
                rhs[1] -= cols[k][1];
            }
        }
        let solved = match free.as_slice() {
            [] => true,
            [k] => {
                let c = cols[*k];
                let r = if c[0].abs() >= c[1].abs() { 0 } else { 1 };
                if c[r].abs() < EPS {
                    false
                } else {
                    v[*k] = rhs[r] / c[r];
                    true
                }
            }
            [i, j] => {
                let (a, b) = (cols[*i], cols[*j]);
                let det = a[0] * b[1] - a[1] * b[0];
                if det.abs() < EPS {
                    false
                } else {
                    v[*i] = (rhs[0] * b[1] - rhs[1] * b[0]) / det;
                    v[*j] = (a[0] * rhs[1] - a[1] * rhs[0]) / det;
                    true
                }
            }
            _ => unreachable!(),
        };
        if !solved || v.iter().any(|&t| !(-1e-9..=1.0 + 1e-9).contains(&t)) {
            continue;
        }
        let v = v.map(|t| t.clamp(0.0, 1.0));
        let residual: f64 = (0..2)
            .map(|r| (0..4).map(|k| cols[k][r] * v[k]).sum::<f64>().abs())
            .sum();
        if residual > 1e-9 {
            continue;
        }
        let mix = EqOddsMix {
            p_keep_pos: [v[0], v[2]],
            p_keep_neg: [1.0 - v[1], 1.0 - v[3]],
        };
        let point = mix.point(0, points[0]);
        let loss = (neg * point.0 + pos * (1.0 - point.1)) / total;
        let kept: f64 = v[0] + v[2] - v[1] - v[3];
        let candidate = EqOddsSolution { mix, point, loss };
        let better = match &best {
            None => true,
            Some((b, b_kept)) => {
                let key = |s: &EqOddsSolution| [s.loss, s.point.0, s.point.1];
                let (ck, bk) = (key(&candidate), key(b));
                let mut ord = std::cmp::Ordering::Equal;
                for (c, b) in ck.iter().zip(&bk) {
                    if (c - b).abs() > 1e-12 {
                        ord = c.partial_cmp(b).unwrap();
                        break;
                    }
                }
                match ord {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => kept > *b_kept + 1e-12,
                }
            }
        };
        if better {
            best = Some((candidate, kept));
        }
    }
    // p = q = 0 in both groups is always feasible
    best.expect("trivial classifier is feasible").0
}

/// Fits the mix from base predictions on the fitting split.
pub fn fit_eq_odds(
    base: &[u8],
    labels: &[u8],
    sensitive: &[u8],
    weights: &[f64],
) -> Result<EqOddsMix> {
    let n = base.len();
    if labels.len() != n || sensitive.len() != n || weights.len() != n {
        return Err(Error::InvalidDataset(
            "equalized-odds inputs differ in length".into(),
        ));
    }
    let mut mass = [[0.0f64; 2]; 2];
    let mut positive = [[0.0f64; 2]; 2];
    for i in 0..n {
        let (a, y) = (sensitive[i] as usize, labels[i] as usize);
        mass[a][y] += weights[i];
        if base[i] == 1 {
            positive[a][y] += weights[i];
        }
    }
    for a in 0..2 {
        for y in 0..2 {
            if mass[a][y] <= 0.0 {
                return Err(Error::EmptyCell(format!(
                    "equalized odds: no rows with Y={y}, A={a}"
                )));
            }
        }
    }
    let point = |a: usize| (positive[a][0] / mass[a][0], positive[a][1] / mass[a][1]);
    Ok(solve_eq_odds([point(0), point(1)], mass).mix)
}

/// Keeps or flips each base prediction with its group's probability.
pub fn apply_eq_odds(mix: &EqOddsMix, base: &[u8], sensitive: &[u8], seed: u64) -> Result<Vec<u8>> {
    mix.validate()?;
    if base.len() != sensitive.len() {
        return Err(Error::InvalidDataset(
            "equalized-odds inputs differ in length".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(base
        .iter()
        .zip(sensitive)
        .map(|(&b, &a)| {
            let u: f64 = rng.random();
            let keep = if b == 1 {
                mix.p_keep_pos[a as usize]
            } else {
                mix.p_keep_neg[a as usize]
            };
            if u < keep {
                b
            } else {
                1 - b
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equalized_base_is_kept() {
        let s = solve_eq_odds([(0.2, 0.8), (0.2, 0.8)], [[30.0, 20.0], [25.0, 25.0]]);
        assert_eq!(s.mix, EqOddsMix::IDENTITY);
        assert!((s.point.0 - 0.2).abs() < 1e-12 && (s.point.1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn groups_meet_at_common_point() {
        let points = [(0.2, 0.8), (0.4, 0.6)];
        let s = solve_eq_odds(points, [[40.0, 60.0], [50.0, 50.0]]);
        let p0 = s.mix.point(0, points[0]);
        let p1 = s.mix.point(1, points[1]);
        assert!((p0.0 - p1.0).abs() < 1e-9 && (p0.1 - p1.1).abs() < 1e-9);
        s.mix.validate().unwrap();
    }

    #[test]
    fn diagonal_group_forces_diagonal_point() {
        let s = solve_eq_odds([(0.5, 0.5), (0.1, 0.9)], [[50.0, 50.0], [50.0, 50.0]]);
        assert!((s.point.0 - s.point.1).abs() < 1e-9);
    }

    #[test]
    fn apply_is_seeded() {
        let mix = EqOddsMix {
            p_keep_pos: [0.7, 0.4],
            p_keep_neg: [0.9, 0.5],
        };
        let base: Vec<u8> = (0..200).map(|i| (i % 3 == 0) as u8).collect();
        let a: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        let first = apply_eq_odds(&mix, &base, &a, 5).unwrap();
        assert_eq!(first, apply_eq_odds(&mix, &base, &a, 5).unwrap());
        assert_ne!(first, apply_eq_odds(&mix, &base, &a, 6).unwrap());
        assert_eq!(
            apply_eq_odds(&EqOddsMix::IDENTITY, &base, &a, 1).unwrap(),
            base
        );
    }

    #[test]
    fn empty_cell_is_reported() {
        let err = fit_eq_odds(&[1, 0], &[1, 1], &[0, 1], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::EmptyCell(_)));
    }
}
