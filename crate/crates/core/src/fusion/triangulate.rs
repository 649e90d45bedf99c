use nalgebra::{Matrix2, Vector2};

use crate::scene::{InvertedLinks, NodeSet, Point};
use crate::{Error, Result};

/// Minimum `|det| / (|row1| |row2|)`, i.e. the sine of the angle between the
/// two rows of the 2×2 system.
pub const DEFAULT_DET_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleEstimate {
    pub position: Point,
    pub velocity: Point,
    /// Receiver indices, 1-based like the node numbering.
    pub node_pair: (usize, usize),
    pub condition_number: f64,
}

fn solve(a: Matrix2<f64>, b: Vector2<f64>, eps: f64, what: &str) -> Result<(Vector2<f64>, f64)> {
    let scale = a.row(0).norm() * a.row(1).norm();
    let det = a.determinant();
    if !(scale > 0.0) || det.abs() < eps * scale {
        return Err(Error::DegenerateGeometry(format!("{what}: |det| = {:.3e}", det.abs())));
    }
    let sv = a.singular_values();
    let cond = sv.max() / sv.min();
    let x = a.try_inverse().expect("determinant checked") * b;
    Ok((x, cond))
}

/// Target position from the anchor range and two receiver ranges, by
/// differencing the squared-range equations against the anchor's.
pub fn triangulate_position(
    rho0: f64,
    rho_j: f64,
    rho_k: f64,
    anchor: &Point,
    rx_j: &Point,
    rx_k: &Point,
    eps_det: f64,
) -> Result<(Point, f64)> {
    let row = |q: &Point, rho: f64| {
        let a = q - anchor;
        let b = 0.5 * (rho0 * rho0 - rho * rho + q.norm_squared() - anchor.norm_squared());
        (a, b)
    };
    let (aj, bj) = row(rx_j, rho_j);
    let (ak, bk) = row(rx_k, rho_k);
    let a = Matrix2::new(aj.x, aj.y, ak.x, ak.y);
    solve(a, Vector2::new(bj, bk), eps_det, "collinear anchor and receivers")
}

/// Target velocity from the radial velocities seen by two receivers.
pub fn triangulate_velocity(
    v_j: f64,
    v_k: f64,
    position: &Point,
    rx_j: &Point,
    rx_k: &Point,
    eps_det: f64,
) -> Result<(Point, f64)> {
    let unit = |q: &Point| {
        let d = q - position;
        let n = d.norm();
        if n < 1e-9 {
            Err(Error::DegenerateGeometry("target on a receiver".into()))
        } else {
            Ok(d / n)
        }
    };
    let (uj, uk) = (unit(rx_j)?, unit(rx_k)?);
    let c = Matrix2::new(uj.x, uj.y, uk.x, uk.y);
    solve(
        c,
        Vector2::new(v_j, v_k),
        eps_det,
        "target collinear with both receivers",
    )
}

/// One estimate per receiver pair; degenerate triangles and receivers
/// without a measurement (NaN range) are dropped.
pub fn triangulate_all(links: &InvertedLinks, nodes: &NodeSet, eps_det: f64) -> Vec<TriangleEstimate> {
    let z = nodes.z().min(links.range_rx.len());
    let mut out = Vec::new();
    if !links.range_anchor.is_finite() {
        return out;
    }
    let usable = |j: usize| links.range_rx[j].is_finite() && links.radial_v_rx[j].is_finite();
    for j in (0..z).filter(|&j| usable(j)) {
        for k in (j + 1..z).filter(|&k| usable(k)) {
            let (rj, rk) = (&nodes.receivers[j], &nodes.receivers[k]);
            let Ok((pos, cond)) = triangulate_position(
                links.range_anchor,
                links.range_rx[j],
                links.range_rx[k],
                &nodes.anchor,
                rj,
                rk,
                eps_det,
            ) else {
                continue;
            };
            let Ok((vel, _)) = triangulate_velocity(links.radial_v_rx[j], links.radial_v_rx[k], &pos, rj, rk, eps_det)
            else {
                continue;
            };
            out.push(TriangleEstimate {
                position: pos,
                velocity: vel,
                node_pair: (j + 1, k + 1),
                condition_number: cond,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = DEFAULT_DET_THRESHOLD;

    // Gauss-Newton on the three range equations |p - n_q| = rho_q.
    fn gauss_newton(nodes: &[Point; 3], rho: &[f64; 3], start: Point) -> Point {
        let mut p = start;
        for _ in 0..100 {
            let mut jtj = Matrix2::zeros();
            let mut jtr = Vector2::zeros();
            for (n, r) in nodes.iter().zip(rho) {
                let d = p - n;
                let dist = d.norm();
                let g = d / dist;
                jtj += g * g.transpose();
                jtr += g * (dist - r);
            }
            let step = jtj.try_inverse().unwrap() * jtr;
            p -= step;
            if step.norm() < 1e-14 {
                break;
            }
        }
        p
    }

    #[test]
    fn symmetric_layout() {
        let r = 5000f64.sqrt();
        let (p, _) = triangulate_position(
            r,
            r,
            r,
            &Point::new(0.0, 0.0),
            &Point::new(100.0, 0.0),
            &Point::new(0.0, 100.0),
            EPS,
        )
        .unwrap();
        assert!((p - Point::new(50.0, 50.0)).norm() < 1e-12);
    }

    #[test]
    fn collinear_nodes_rejected() {
        let res = triangulate_position(
            10.0,
            20.0,
            30.0,
            &Point::new(0.0, 0.0),
            &Point::new(50.0, 0.0),
            &Point::new(100.0, 0.0),
            EPS,
        );
        assert!(matches!(res, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn velocity_examples() {
        let p = Point::new(50.0, 50.0);
        let (rj, rk) = (Point::new(100.0, 0.0), Point::new(50.0, 100.0));
        let s = 10.0 * 50.0 / 5000f64.sqrt();
        let (v, _) = triangulate_velocity(s, 0.0, &p, &rj, &rk, EPS).unwrap();
        assert!((v - Point::new(10.0, 0.0)).norm() < 1e-9);
        let (v, _) = triangulate_velocity(0.0, 0.0, &p, &rj, &rk, EPS).unwrap();
        assert_eq!(v, Point::zeros());
        // Target on the segment between the receivers: the two lines of
        // sight are antiparallel and the system is singular.
        let bad = triangulate_velocity(s, -s, &p, &rj, &Point::new(0.0, 100.0), EPS);
        assert!(matches!(bad, Err(Error::DegenerateGeometry(_))));
    }

    fn coord() -> impl Strategy<Value = f64> {
        0.0..400.0f64
    }

    proptest! {
        #[test]
        fn noiseless_recovery(
            ax in coord(), ay in coord(), jx in coord(), jy in coord(),
            kx in coord(), ky in coord(), tx in coord(), ty in coord(),
            vx in -15.0..15.0f64, vy in -15.0..15.0f64,
        ) {
            let (a, rj, rk, t) = (Point::new(ax, ay), Point::new(jx, jy), Point::new(kx, ky), Point::new(tx, ty));
            let (u, w) = (rj - a, rk - a);
            prop_assume!((u.x * w.y - u.y * w.x).abs() > 0.05 * u.norm() * w.norm());
            prop_assume!([a, rj, rk].iter().all(|n| (n - t).norm() > 5.0));
            let rho = [(t - a).norm(), (t - rj).norm(), (t - rk).norm()];
            let (p, _) = triangulate_position(rho[0], rho[1], rho[2], &a, &rj, &rk, EPS).unwrap();
            prop_assert!((p - t).norm() < 1e-9);
            let gn = gauss_newton(&[a, rj, rk], &rho, t + Point::new(3.0, -2.0));
            prop_assert!((gn - p).norm() < 1e-6);

            let (uj, uk) = ((rj - t).normalize(), (rk - t).normalize());
            prop_assume!((uj.x * uk.y - uj.y * uk.x).abs() > 0.05);
            let v = Point::new(vx, vy);
            let (est, _) = triangulate_velocity(v.dot(&uj), v.dot(&uk), &t, &rj, &rk, EPS).unwrap();
            prop_assert!((est - v).norm() < 1e-9);
        }
    }
}
