//! Compare the orthogonal receiver layout with a lattice search and random
//! layouts using the closed-form localization covariance.

use otfs_isac::fusion::{optimize_placement, placement_score, PlacementMode};
use otfs_isac::scene::{Point, Region};
use rand::{Rng, SeedableRng};

fn main() -> otfs_isac::Result<()> {
    let region = Region::square(400.0);
    let anchor = Point::new(200.0, 200.0);
    let var = (1.0, 1.0, 1.0);
    for mode in [PlacementMode::Orthogonal, PlacementMode::GridSearch { lattice: 9 }] {
        let nodes = optimize_placement(&region, &anchor, var, mode, 2)?;
        let s = placement_score(&anchor, &nodes.receivers[0], &nodes.receivers[1], 1.0, 1.0, 1.0);
        println!(
            "{mode:?}: receivers {:?}",
            nodes.receivers.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>()
        );
        println!(
            "  trace {:.3e}, max eigen {:.3e}, area {:.0} m^2",
            s.trace_cov, s.max_eigen_cov, s.triangle_area
        );
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut traces: Vec<f64> = (0..200)
        .map(|_| {
            let mut p = || Point::new(rng.random_range(0.0..400.0), rng.random_range(0.0..400.0));
            placement_score(&anchor, &p(), &p(), 1.0, 1.0, 1.0).trace_cov
        })
        .collect();
    traces.sort_by(f64::total_cmp);
    println!(
        "random layouts: median trace {:.3e}, 90th percentile {:.3e}",
        traces[100], traces[180]
    );
    Ok(())
}
