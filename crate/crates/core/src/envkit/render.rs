//! Text snapshot of the world from above.

use crate::simcore::{Pose2D, Rect};

pub const GRID_WIDTH: usize = 40;
pub const GRID_HEIGHT: usize = 40;

/// Render arena, obstacles, robot and target onto a character grid.
/// `*` marks robot and target sharing a cell.
pub fn render_grid(
    arena: &Rect,
    obstacles: &[Rect],
    robot: Option<&Pose2D>,
    target: Option<(f64, f64)>,
) -> String {
    let mut grid = vec![vec!['.'; GRID_WIDTH]; GRID_HEIGHT];
    let cell_of = |x: f64, y: f64| -> (usize, usize) {
        let cx = ((x - arena.min_x) / (arena.max_x - arena.min_x) * (GRID_WIDTH - 1) as f64)
            .round()
            .clamp(0.0, (GRID_WIDTH - 1) as f64) as usize;
        // Row 0 is the top of the arena.
        let cy = ((arena.max_y - y) / (arena.max_y - arena.min_y) * (GRID_HEIGHT - 1) as f64)
            .round()
            .clamp(0.0, (GRID_HEIGHT - 1) as f64) as usize;
        (cx, cy)
    };

    for row in 0..GRID_HEIGHT {
        for col in 0..GRID_WIDTH {
            if row == 0 || row == GRID_HEIGHT - 1 || col == 0 || col == GRID_WIDTH - 1 {
                grid[row][col] = '#';
            }
        }
    }
    for ob in obstacles {
        let (c0, r1) = cell_of(ob.min_x, ob.min_y);
        let (c1, r0) = cell_of(ob.max_x, ob.max_y);
        for row in r0..=r1 {
            for col in c0..=c1 {
                grid[row][col] = '#';
            }
        }
    }
    if let Some((tx, ty)) = target {
        let (c, r) = cell_of(tx, ty);
        grid[r][c] = 'T';
    }
    if let Some(pose) = robot {
        let (c, r) = cell_of(pose.x, pose.y);
        grid[r][c] = if grid[r][c] == 'T' { '*' } else { 'R' };
    }

    let mut out = String::with_capacity(GRID_HEIGHT * (GRID_WIDTH + 1));
    for row in grid {
        out.extend(row);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arena() -> Rect {
        Rect {
            min_x: -2.0,
            min_y: -2.0,
            max_x: 2.0,
            max_y: 2.0,
        }
    }

    #[test]
    fn dimensions_fixed() {
        let s = render_grid(&arena(), &[], None, None);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), GRID_HEIGHT);
        assert!(lines.iter().all(|l| l.chars().count() == GRID_WIDTH));
    }

    #[test]
    fn empty_world_has_border_only() {
        let s = render_grid(&arena(), &[], None, None);
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].chars().all(|c| c == '#'));
        assert!(lines[20].starts_with('#') && lines[20].ends_with('#'));
        assert!(lines[20][1..GRID_WIDTH - 1].chars().all(|c| c == '.'));
    }

    #[test]
    fn co_located_robot_and_target() {
        let pose = Pose2D::new(0.5, 0.5, 0.0);
        let s = render_grid(&arena(), &[], Some(&pose), Some((0.5, 0.5)));
        assert_eq!(s.matches('*').count(), 1);
        assert_eq!(s.matches('R').count(), 0);
        assert_eq!(s.matches('T').count(), 0);
    }
}
