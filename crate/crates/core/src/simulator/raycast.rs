use super::Scene;
use crate::geometry::Vec3;

pub const MAX_MARCH_STEP: f64 = 0.05;
const BISECTIONS: usize = 20;

/// Range of the first crossing of the ray below the terrain, by fixed-step
/// marching followed by bisection. Marching starts where the ray enters the
/// terrain's height slab and skips tiles whose height bound lies below it.
pub fn raycast_first_hit(scene: &Scene, origin: &Vec3, dir: &Vec3, r_max: f64) -> Option<f64> {
    let step = scene.grid_spacing().map_or(MAX_MARCH_STEP, |g| g.min(MAX_MARCH_STEP));
    raycast_with_step(scene, origin, dir, r_max, step)
}

pub fn raycast_with_step(scene: &Scene, origin: &Vec3, dir: &Vec3, r_max: f64, step: f64) -> Option<f64> {
    let (zmin, zmax) = scene.z_range();
    let (mut r0, mut r1) = (0.0f64, r_max);
    if dir.z < 0.0 {
        r0 = r0.max((origin.z - zmax) / -dir.z);
        r1 = r1.min((origin.z - zmin) / -dir.z);
    } else if origin.z > zmax {
        return None;
    } else if dir.z > 0.0 {
        r1 = r1.min((zmax - origin.z) / dir.z);
    }
    if r0 > r1 {
        return None;
    }
    let f = |r: f64| {
        let p = origin + dir * r;
        p.z - scene.height(p.x, p.y)
    };
    if f(r0) <= 0.0 {
        return Some(r0);
    }
    let tiles = scene.tiles();
    let mut r = r0;
    loop {
        let p = origin + dir * r;
        if let Some((i, j, tmax)) = tiles.lookup(p.x, p.y) {
            if p.z > tmax {
                // the ray cannot meet the terrain before leaving this tile or dropping to its bound
                let mut next = f64::INFINITY;
                for (d, o, lo) in [(dir.x, p.x, tiles.origin[0] + i as f64 * tiles.tile), (dir.y, p.y, tiles.origin[1] + j as f64 * tiles.tile)] {
                    if d > 0.0 {
                        next = next.min((lo + tiles.tile - o) / d);
                    } else if d < 0.0 {
                        next = next.min((lo - o) / d);
                    }
                }
                if dir.z < 0.0 {
                    next = next.min((p.z - tmax) / -dir.z);
                }
                let skip = r + next.max(0.0) + 1e-9;
                if skip >= r1 {
                    return None;
                }
                r = skip;
                continue;
            }
        }
        let r_next = (r + step).min(r1);
        if f(r_next) <= 0.0 {
            let (mut lo, mut hi) = (r, r_next);
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        if r_next >= r1 {
            return None;
        }
        r = r_next;
    }
}
