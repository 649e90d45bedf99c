use crate::scene::Point;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NnSelection {
    /// Mean of the winner and its neighbours.
    pub value: Point,
    /// Index of the estimate with the most neighbours.
    pub winner: usize,
    /// Winner first, then its neighbours in input order.
    pub members: Vec<usize>,
}

/// Nearest-neighbour selection: the estimate with the most others within
/// `xi` wins (lowest index on ties) and is averaged with those neighbours.
pub fn nn_select(estimates: &[Point], xi: f64) -> Result<NnSelection> {
    if estimates.is_empty() {
        return Err(Error::input("no estimates to select from"));
    }
    if !(xi > 0.0) {
        return Err(Error::input(format!("threshold must be positive, got {xi}")));
    }
    let neighbours = |n: usize| -> Vec<usize> {
        (0..estimates.len())
            .filter(|&m| m != n && (estimates[n] - estimates[m]).norm() <= xi)
            .collect()
    };
    let mut winner = 0;
    let mut best = neighbours(0);
    for n in 1..estimates.len() {
        let s = neighbours(n);
        if s.len() > best.len() {
            winner = n;
            best = s;
        }
    }
    let mut members = vec![winner];
    members.extend(best);
    let sum: Point = members.iter().map(|&m| estimates[m]).sum();
    Ok(NnSelection {
        value: sum / members.len() as f64,
        winner,
        members,
    })
}
