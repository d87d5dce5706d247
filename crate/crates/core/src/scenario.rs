//! Seeded scenario generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{ConvexObstacle, Vec3, Workspace};
use crate::sim::{tree_obstacles, ScenarioConfig, ScenarioParams, SCHEMA_VERSION};

fn box_at(lo: Vec3, hi: Vec3) -> ConvexObstacle {
    ConvexObstacle::axis_box(lo, hi).expect("positive extent")
}

/// Prism over a random convex polygon: `n` points on a jittered circle.
fn prism(rng: &mut ChaCha8Rng, center: Vec3, radius: f64, height: f64, n: usize) -> ConvexObstacle {
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut verts = Vec::with_capacity(2 * n);
    for i in 0..n {
        let a = phase + std::f64::consts::TAU * (i as f64 + rng.gen_range(-0.2..0.2)) / n as f64;
        let r = radius * rng.gen_range(0.7..1.0);
        let p = center + Vec3::new(r * a.cos(), r * a.sin(), 0.0);
        verts.push(p);
        verts.push(p + Vec3::new(0.0, 0.0, height));
    }
    ConvexObstacle::from_vertices(verts).expect("prism is full-dimensional")
}

/// Truncated pyramid over a random polygon.
fn frustum(rng: &mut ChaCha8Rng, center: Vec3, radius: f64, height: f64, top: f64) -> ConvexObstacle {
    let n = rng.gen_range(5..9);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut verts = Vec::with_capacity(2 * n);
    for i in 0..n {
        let a = phase + std::f64::consts::TAU * i as f64 / n as f64;
        let r = radius * rng.gen_range(0.75..1.0);
        let dir = Vec3::new(a.cos(), a.sin(), 0.0);
        verts.push(center + dir * r);
        verts.push(center + dir * (r * top) + Vec3::new(0.0, 0.0, height));
    }
    ConvexObstacle::from_vertices(verts).expect("frustum is full-dimensional")
}

fn place_targets(
    rng: &mut ChaCha8Rng,
    cfg: &ScenarioConfig,
    count: usize,
    sample: impl Fn(&mut ChaCha8Rng) -> Vec3,
    min_from_ground: f64,
) -> Option<Vec<Vec3>> {
    let grown = tree_obstacles(cfg).ok()?;
    let sep = 2.0 * cfg.params.planner().separation() + 0.5;
    let mut out: Vec<Vec3> = Vec::new();
    for _ in 0..2000 {
        if out.len() == count {
            break;
        }
        let p = sample(rng);
        if (p - cfg.ground_station).norm() < min_from_ground
            || grown.iter().any(|o| o.contains(&p))
            || out.iter().any(|q| (q - p).norm() < sep)
        {
            continue;
        }
        out.push(p);
    }
    (out.len() == count).then_some(out)
}

/// Desk-scale world: 60 x 60 x 15 m with `obstacles` convex blocks and
/// prisms and `targets` random goals.
pub fn desk(seed: u64, targets: usize, obstacles: usize) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = Workspace::new(Vec3::zeros(), Vec3::new(60.0, 60.0, 15.0));
    let ground = Vec3::new(5.0, 5.0, 4.0);
    let mut params = ScenarioParams {
        seed,
        ..ScenarioParams::default()
    };
    params.tick_budget = 1000;
    loop {
        let mut obs = Vec::new();
        while obs.len() < obstacles {
            let c = Vec3::new(rng.gen_range(8.0..55.0), rng.gen_range(8.0..55.0), 0.0);
            if c.x < 18.0 && c.y < 18.0 {
                continue;
            }
            let o = if rng.gen_bool(0.5) {
                let half = Vec3::new(rng.gen_range(1.5..5.0), rng.gen_range(1.5..5.0), 0.0);
                box_at(c - half, c + half + Vec3::new(0.0, 0.0, rng.gen_range(5.0..15.0)))
            } else {
                let n = rng.gen_range(3..7);
                let (r, h) = (rng.gen_range(2.0..5.0), rng.gen_range(5.0..15.0));
                prism(&mut rng, c, r, h, n)
            };
            obs.push(o);
        }
        let mut cfg = ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: format!("desk-{seed}"),
            workspace: ws,
            obstacles: obs,
            ground_station: ground,
            targets: Vec::new(),
            params: params.clone(),
        };
        let sample = |r: &mut ChaCha8Rng| Vec3::new(r.gen_range(3.0..57.0), r.gen_range(3.0..57.0), r.gen_range(1.0..14.0));
        if let Some(t) = place_targets(&mut rng, &cfg, targets, sample, 15.0) {
            cfg.targets = t;
            if cfg.validate().is_ok() {
                return cfg;
            }
        }
    }
}

/// Grid of `rooms x rooms` square rooms joined by one door per shared wall.
pub fn corridor_world(seed: u64, targets: usize) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rooms, size, wall, door, height) = (4usize, 40.0, 2.0, 7.0, 10.0);
    let side = rooms as f64 * size;
    let ws = Workspace::new(Vec3::zeros(), Vec3::new(side, side, height));
    let params = ScenarioParams {
        seed,
        ..ScenarioParams::default().scaled(1.5)
    };
    let mut obs = Vec::new();
    // walls between rooms; each wall segment between two rooms gets a door
    for i in 1..rooms {
        let at = i as f64 * size;
        for j in 0..rooms {
            let (a, b) = (j as f64 * size, (j + 1) as f64 * size);
            let d = rng.gen_range(a + 4.0..b - 4.0 - door);
            for (s, e) in [(a, d), (d + door, b)] {
                if e - s > 0.1 {
                    obs.push(box_at(Vec3::new(at - wall / 2.0, s, 0.0), Vec3::new(at + wall / 2.0, e, height)));
                }
            }
        }
        for j in 0..rooms {
            let (a, b) = (j as f64 * size, (j + 1) as f64 * size);
            let d = rng.gen_range(a + 4.0..b - 4.0 - door);
            for (s, e) in [(a, d), (d + door, b)] {
                obs.push(box_at(Vec3::new(s, at - wall / 2.0, 0.0), Vec3::new(e, at + wall / 2.0, height)));
            }
        }
    }
    let mut cfg = ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: format!("corridor-{seed}-{targets}"),
        workspace: ws,
        obstacles: obs,
        ground_station: Vec3::new(6.0, 6.0, height / 2.0),
        targets: Vec::new(),
        params,
    };
    let sample = move |r: &mut ChaCha8Rng| Vec3::new(r.gen_range(2.0..side - 2.0), r.gen_range(2.0..side - 2.0), r.gen_range(1.0..height - 1.0));
    cfg.targets = place_targets(&mut rng, &cfg, targets, sample, size).expect("rooms have free space");
    cfg
}

/// Mountain valley: 500 x 500 x 100 m, mountains as frusta.
pub fn valley(seed: u64, targets: usize) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws = Workspace::new(Vec3::zeros(), Vec3::new(500.0, 500.0, 100.0));
    let s = 150.0 / 18.0;
    let mut params = ScenarioParams {
        seed,
        ..ScenarioParams::default().scaled(s)
    };
    params.d_w = 142.0;
    params.d_m = 3.0;
    params.tick_budget = 1000;
    let ground = Vec3::new(30.0, 30.0, 20.0);
    loop {
        let mut obs = Vec::new();
        while obs.len() < 12 {
            let c = Vec3::new(rng.gen_range(60.0..480.0), rng.gen_range(60.0..480.0), 0.0);
            if (c - Vec3::new(ground.x, ground.y, 0.0)).norm() < 140.0 {
                continue;
            }
            let (r, h, top) = (rng.gen_range(35.0..70.0), rng.gen_range(50.0..100.0), rng.gen_range(0.3..0.6));
            obs.push(frustum(&mut rng, c, r, h, top));
        }
        let mut cfg = ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: format!("valley-{seed}"),
            workspace: ws,
            obstacles: obs,
            ground_station: ground,
            targets: Vec::new(),
            params: params.clone(),
        };
        let sample = |r: &mut ChaCha8Rng| Vec3::new(r.gen_range(20.0..480.0), r.gen_range(20.0..480.0), r.gen_range(10.0..40.0));
        if let Some(t) = place_targets(&mut rng, &cfg, targets, sample, 150.0) {
            cfg.targets = t;
            if cfg.validate().is_ok() {
                return cfg;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_valid_and_seeded() {
        for seed in 0..3 {
            let d = desk(seed, 5, 6);
            d.validate().unwrap();
            assert_eq!(d, desk(seed, 5, 6));
            assert_eq!(d.targets.len(), 5);
            corridor_world(seed, 4).validate().unwrap();
            valley(seed, 7).validate().unwrap();
        }
    }
}
