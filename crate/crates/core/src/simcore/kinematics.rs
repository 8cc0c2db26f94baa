//! Three-omniwheel rolling-constraint kinematics.
//!
//! Wheel i at mounting angle `alpha_i` (center-to-wheel direction, body
//! frame) satisfies `u_i = -sin(alpha_i)*vx + cos(alpha_i)*vy + L*omega`
//! where `u_i = w_i * r` is the rim speed. For the symmetric 120-degree
//! layout the pseudo-inverse collapses to fixed 2/3 and 1/(3L) factors.

use super::world::RobotSpec;

/// Body-frame velocity: linear (m/s) and angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Twist {
        Twist { vx, vy, omega }
    }

    pub fn zero() -> Twist {
        Twist::default()
    }
}

/// Body twist produced by the given wheel angular speeds (rad/s).
pub fn forward_kinematics(wheel_speeds: [f64; 3], spec: &RobotSpec) -> Twist {
    let r = spec.wheel_radius;
    let l = spec.wheel_offset;
    let mut vx = 0.0;
    let mut vy = 0.0;
    let mut sum_u = 0.0;
    for (w, alpha) in wheel_speeds.iter().zip(spec.wheel_angles.iter()) {
        let u = w * r;
        vx += -alpha.sin() * u;
        vy += alpha.cos() * u;
        sum_u += u;
    }
    Twist {
        vx: vx * 2.0 / 3.0,
        vy: vy * 2.0 / 3.0,
        omega: sum_u / (3.0 * l),
    }
}

/// Wheel angular speeds realizing the given body twist.
pub fn inverse_kinematics(twist: Twist, spec: &RobotSpec) -> [f64; 3] {
    let r = spec.wheel_radius;
    let l = spec.wheel_offset;
    let mut speeds = [0.0; 3];
    for (out, alpha) in speeds.iter_mut().zip(spec.wheel_angles.iter()) {
        *out = (-alpha.sin() * twist.vx + alpha.cos() * twist.vy + l * twist.omega) / r;
    }
    speeds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::world::RobotSpec;

    fn spec() -> RobotSpec {
        RobotSpec::default_at("robot", 0.0, 0.0, 0.0)
    }

    /// Dense 3x3 solve of the rolling-constraint system, used as an oracle
    /// that is independent of the closed-form factors.
    fn solve_constraints(wheel_speeds: [f64; 3], spec: &RobotSpec) -> Twist {
        let r = spec.wheel_radius;
        let l = spec.wheel_offset;
        // Rows: [-sin a, cos a, L] * [vx vy w]^T = u_i
        let mut a = [[0.0f64; 3]; 3];
        let mut b = [0.0f64; 3];
        for i in 0..3 {
            a[i][0] = -spec.wheel_angles[i].sin();
            a[i][1] = spec.wheel_angles[i].cos();
            a[i][2] = l;
            b[i] = wheel_speeds[i] * r;
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..3 {
            let pivot = (col..3)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..3 {
                let f = a[row][col] / a[col][col];
                for k in col..3 {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = [0.0f64; 3];
        for row in (0..3).rev() {
            let mut s = b[row];
            for k in row + 1..3 {
                s -= a[row][k] * x[k];
            }
            x[row] = s / a[row][row];
        }
        Twist::new(x[0], x[1], x[2])
    }

    #[test]
    fn zero_speeds_zero_twist() {
        let t = forward_kinematics([0.0; 3], &spec());
        assert_eq!(t, Twist::zero());
        assert_eq!(inverse_kinematics(Twist::zero(), &spec()), [0.0; 3]);
    }

    #[test]
    fn equal_speeds_pure_rotation() {
        let s = spec();
        let w = 2.5;
        let t = forward_kinematics([w, w, w], &s);
        assert!(t.vx.abs() < 1e-12);
        assert!(t.vy.abs() < 1e-12);
        assert!((t.omega - w * s.wheel_radius / s.wheel_offset).abs() < 1e-12);
    }

    #[test]
    fn pure_rotation_equal_wheels() {
        let s = spec();
        let speeds = inverse_kinematics(Twist::new(0.0, 0.0, 1.0), &s);
        let expected = s.wheel_offset / s.wheel_radius;
        for w in speeds {
            assert!((w - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_linear_solver() {
        let s = spec();
        let mut rng = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng as f64 / u64::MAX as f64) * 20.0 - 10.0
        };
        for _ in 0..1000 {
            let ws = [next(), next(), next()];
            let got = forward_kinematics(ws, &s);
            let want = solve_constraints(ws, &s);
            assert!((got.vx - want.vx).abs() < 1e-9);
            assert!((got.vy - want.vy).abs() < 1e-9);
            assert!((got.omega - want.omega).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_identity() {
        let s = spec();
        let mut rng = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        for _ in 0..1000 {
            let t = Twist::new(next(), next(), next() * 3.0);
            let back = forward_kinematics(inverse_kinematics(t, &s), &s);
            assert!((back.vx - t.vx).abs() < 1e-9);
            assert!((back.vy - t.vy).abs() < 1e-9);
            assert!((back.omega - t.omega).abs() < 1e-9);
        }
    }
}
