//! Planar geometry: poses, axis-aligned rectangles, clearance and ray casts.

use serde::{Deserialize, Serialize};

/// Planar pose; `theta` is kept wrapped to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Pose2D {
        Pose2D {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        ((self.x - x).powi(2) + (self.y - y).powi(2)).sqrt()
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = theta % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn is_valid(&self) -> bool {
        self.min_x < self.max_x && self.min_y < self.max_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Euclidean distance from a point to this rectangle (0 inside).
    pub fn distance_to_point(&self, x: f64, y: f64) -> f64 {
        let dx = (self.min_x - x).max(0.0).max(x - self.max_x);
        let dy = (self.min_y - y).max(0.0).max(y - self.max_y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Signed clearance of a disc of radius `radius` centered at (x, y):
/// minimum over the slack to each arena wall (disc must stay inside) and the
/// gap to each obstacle. Negative means penetration.
pub fn clearance(x: f64, y: f64, radius: f64, arena: &Rect, obstacles: &[Rect]) -> f64 {
    let mut c = f64::INFINITY;
    c = c.min(x - radius - arena.min_x);
    c = c.min(arena.max_x - x - radius);
    c = c.min(y - radius - arena.min_y);
    c = c.min(arena.max_y - y - radius);
    for ob in obstacles {
        c = c.min(ob.distance_to_point(x, y) - radius);
    }
    c
}

/// Distance along a ray from `(ox, oy)` in direction `angle` to the arena
/// boundary, assuming the origin is inside the arena.
fn ray_to_arena_exit(ox: f64, oy: f64, dx: f64, dy: f64, arena: &Rect) -> f64 {
    let mut t = f64::INFINITY;
    if dx > 0.0 {
        t = t.min((arena.max_x - ox) / dx);
    } else if dx < 0.0 {
        t = t.min((arena.min_x - ox) / dx);
    }
    if dy > 0.0 {
        t = t.min((arena.max_y - oy) / dy);
    } else if dy < 0.0 {
        t = t.min((arena.min_y - oy) / dy);
    }
    t.max(0.0)
}

/// Slab-method entry distance of a ray into a rectangle, if it hits.
fn ray_to_rect(ox: f64, oy: f64, dx: f64, dy: f64, rect: &Rect) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, lo, hi) in [
        (ox, dx, rect.min_x, rect.max_x),
        (oy, dy, rect.min_y, rect.max_y),
    ] {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let mut t1 = (lo - o) / d;
            let mut t2 = (hi - o) / d;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            t_near = t_near.max(t1);
            t_far = t_far.min(t2);
            if t_near > t_far {
                return None;
            }
        }
    }
    if t_far < 0.0 {
        None
    } else {
        Some(t_near.max(0.0))
    }
}

/// Range reading of an infrared-style sensor: distance from the body edge of
/// a robot at `pose` along the ray at world angle `pose.theta + heading` to
/// the nearest obstacle or arena wall, clamped to `[0, max_range]`.
pub fn ray_distance(
    pose: &Pose2D,
    heading: f64,
    body_radius: f64,
    max_range: f64,
    arena: &Rect,
    obstacles: &[Rect],
) -> f64 {
    let angle = pose.theta + heading;
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut hit = ray_to_arena_exit(pose.x, pose.y, dx, dy, arena);
    for ob in obstacles {
        if let Some(t) = ray_to_rect(pose.x, pose.y, dx, dy, ob) {
            hit = hit.min(t);
        }
    }
    (hit - body_radius).clamp(0.0, max_range)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arena4() -> Rect {
        Rect {
            min_x: -2.0,
            min_y: -2.0,
            max_x: 2.0,
            max_y: 2.0,
        }
    }

    #[test]
    fn wrap_keeps_half_open_interval() {
        assert!((wrap_angle(std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!(wrap_angle(7.0).abs() < std::f64::consts::PI);
    }

    #[test]
    fn clamped_in_empty_arena() {
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let d = ray_distance(&pose, 0.0, 0.1, 0.3, &arena4(), &[]);
        assert_eq!(d, 0.3);
    }

    #[test]
    fn perpendicular_wall_distance() {
        // Body edge 0.1 m from the +x wall.
        let pose = Pose2D::new(2.0 - 0.225 - 0.1, 0.0, 0.0);
        let d = ray_distance(&pose, 0.0, 0.225, 0.5, &arena4(), &[]);
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn obstacle_in_front() {
        let ob = Rect {
            min_x: 0.5,
            min_y: -0.5,
            max_x: 1.0,
            max_y: 0.5,
        };
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let d = ray_distance(&pose, 0.0, 0.2, 1.0, &arena4(), &[ob]);
        assert!((d - 0.3).abs() < 1e-12);
        // Ray pointing away misses the obstacle.
        let d_back = ray_distance(&pose, std::f64::consts::PI, 0.2, 1.0, &arena4(), &[ob]);
        assert!((d_back - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clearance_signs() {
        let ob = Rect {
            min_x: 0.5,
            min_y: -0.5,
            max_x: 1.0,
            max_y: 0.5,
        };
        assert!(clearance(0.0, 0.0, 0.2, &arena4(), &[ob]) > 0.0);
        assert!(clearance(0.4, 0.0, 0.2, &arena4(), &[ob]) < 0.0);
        assert!(clearance(1.9, 0.0, 0.2, &arena4(), &[]) < 0.0);
    }
}
