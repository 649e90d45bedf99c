//! Simulate correlated-random-walk trajectories and check the stationary
//! velocity variance.

use otfs_isac::motion::{reflect, step_with, KinematicState, MotionParams};
use otfs_isac::scene::Region;
use rand::SeedableRng;

fn main() {
    let p = MotionParams::default();
    let region = Region::square(400.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut s = KinematicState::new(200.0, 200.0, 0.0, 0.0);
    println!("t(s)      x       y      vx     vy");
    for t in 0..=20 {
        if t % 4 == 0 {
            println!(
                "{:5.1} {:7.2} {:7.2} {:6.2} {:6.2}",
                t as f64 * p.dt,
                s[0],
                s[1],
                s[2],
                s[3]
            );
        }
        s = reflect(&step_with(&s, &p, &mut rng), &region);
    }
    let (mut sum, mut n) = (0.0, 0);
    for _ in 0..200 {
        let mut s = KinematicState::zeros();
        for k in 0..300 {
            s = step_with(&s, &p, &mut rng);
            if k >= 20 {
                sum += s[2] * s[2] + s[3] * s[3];
                n += 2;
            }
        }
    }
    println!(
        "velocity variance {:.4}, stationary value {:.4}",
        sum / n as f64,
        p.stationary_velocity_var()
    );
}
