//! Invert exact link delays and Dopplers to ranges and radial velocities,
//! triangulate every receiver pair, and fuse the triangles.

use otfs_isac::fusion::{nn_select, triangulate_all, DEFAULT_DET_THRESHOLD};
use otfs_isac::modem::FrameConfig;
use otfs_isac::scene::{
    ground_truth_links, invert_links, DopplerInversion, LinkMeasurement, NodeSet, Point, Region, TargetTruth,
};

fn main() -> otfs_isac::Result<()> {
    let cfg = FrameConfig::default();
    let nodes = NodeSet::new(
        Point::new(200.0, 200.0),
        vec![
            Point::new(400.0, 200.0),
            Point::new(200.0, 400.0),
            Point::new(20.0, 30.0),
        ],
        Region::square(400.0),
    )?;
    let target = TargetTruth::new(Point::new(260.0, 310.0), Point::new(1.5, -0.5));
    let links = ground_truth_links(&nodes, &target, &cfg)?;
    // Perturb the delays by a few metres of path length.
    let meas: Vec<LinkMeasurement> = links
        .iter()
        .enumerate()
        .map(|(i, l)| LinkMeasurement {
            delay_s: l.delay_s + (i as f64 - 1.5) * 2.0 / otfs_isac::SPEED_OF_LIGHT,
            doppler_hz: l.doppler_hz,
        })
        .collect();
    let inv = invert_links(&meas, &cfg, DopplerInversion::Exact)?;
    println!(
        "anchor range {:.2} m, receiver ranges {:.2?}",
        inv.range_anchor, inv.range_rx
    );
    let tris = triangulate_all(&inv, &nodes, DEFAULT_DET_THRESHOLD);
    for t in &tris {
        println!(
            "pair {:?}: position ({:.2}, {:.2}), velocity ({:.2}, {:.2}), cond {:.1}",
            t.node_pair, t.position.x, t.position.y, t.velocity.x, t.velocity.y, t.condition_number
        );
    }
    let picked = nn_select(&tris.iter().map(|t| t.position).collect::<Vec<_>>(), 20.0)?;
    println!(
        "fused ({:.2}, {:.2}) from {} triangles; truth ({}, {})",
        picked.value.x,
        picked.value.y,
        picked.members.len(),
        target.position.x,
        target.position.y
    );
    Ok(())
}
