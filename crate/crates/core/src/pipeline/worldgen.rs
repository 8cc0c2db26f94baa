//! World-variant generation: rewrite node names with per-instance suffixes so
//! several simulator instances can share one broker.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::busline::NodeName;
use crate::simcore::WorldSpec;

/// Write `n` copies of the world at `world_path` into `out_dir`, with every
/// node name in variant `i` suffixed `_i`. Returns the written paths.
pub fn instantiate_world_variants(
    world_path: &Path,
    n: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    if n == 0 {
        return Err(PipelineError::Generation("instance count must be at least 1".into()));
    }
    let base = WorldSpec::load(world_path)
        .map_err(|e| PipelineError::Generation(format!("{}: {e}", world_path.display())))?;
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir.display(), e))?;
    let stem = world_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("world");

    let mut all_names = HashSet::new();
    let mut paths = Vec::with_capacity(n);
    for i in 0..n {
        let mut variant = base.clone();
        variant.supervisor_name = suffixed(&base.supervisor_name, i)?;
        for (robot, base_robot) in variant.robots.iter_mut().zip(base.robots.iter()) {
            robot.name = suffixed(&base_robot.name, i)?;
        }
        variant
            .validate()
            .map_err(|e| PipelineError::Generation(format!("variant {i}: {e}")))?;
        for name in std::iter::once(&variant.supervisor_name)
            .chain(variant.robots.iter().map(|r| &r.name))
        {
            if !all_names.insert(name.clone()) {
                return Err(PipelineError::Generation(format!(
                    "node name collision across variants: {name}"
                )));
            }
        }
        let path = out_dir.join(format!("{stem}_{i}.json"));
        let json = serde_json::to_string_pretty(&variant)
            .map_err(|e| PipelineError::Generation(format!("serialize variant {i}: {e}")))?;
        std::fs::write(&path, json).map_err(|e| PipelineError::io(path.display(), e))?;
        paths.push(path);
    }
    Ok(paths)
}

fn suffixed(name: &NodeName, i: usize) -> Result<NodeName, PipelineError> {
    NodeName::new(format!("{}_{i}", name.as_str()))
        .map_err(|e| PipelineError::Generation(format!("suffixing {name}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source_world(dir: &Path) -> PathBuf {
        let path = dir.join("base.json");
        std::fs::write(
            &path,
            r#"{
                "supervisor_name": "supervisor",
                "arena": {"min_x": -1.5, "min_y": -1.5, "max_x": 1.5, "max_y": 1.5},
                "target": {"x": 0.5, "y": 0.0, "radius": 0.1},
                "robots": [{"name": "robotino", "spawn": {"x": 0.0, "y": 0.0, "theta": 0.0}}]
            }"#,
        )
        .unwrap();
        path
    }

    #[test]
    fn single_variant_suffixes_zero() {
        let dir = tempfile::tempdir().unwrap();
        let paths = instantiate_world_variants(&source_world(dir.path()), 1, dir.path()).unwrap();
        assert_eq!(paths.len(), 1);
        let world = WorldSpec::load(&paths[0]).unwrap();
        assert_eq!(world.supervisor_name.as_str(), "supervisor_0");
        assert_eq!(world.robots[0].name.as_str(), "robotino_0");
    }

    #[test]
    fn variants_have_disjoint_names() {
        let dir = tempfile::tempdir().unwrap();
        let paths = instantiate_world_variants(&source_world(dir.path()), 3, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let mut names = HashSet::new();
        for path in &paths {
            let world = WorldSpec::load(path).unwrap();
            assert!(names.insert(world.supervisor_name.clone()));
            for robot in &world.robots {
                assert!(names.insert(robot.name.clone()));
            }
        }
        // n variants x (1 supervisor + 1 robot) distinct names.
        assert_eq!(names.len(), 6);
    }

    #[test]
    fn semantic_content_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let src = source_world(dir.path());
        let base = WorldSpec::load(&src).unwrap();
        let paths = instantiate_world_variants(&src, 2, dir.path()).unwrap();
        let variant = WorldSpec::load(&paths[1]).unwrap();
        assert_eq!(variant.arena, base.arena);
        assert_eq!(variant.target.x, base.target.x);
        assert_eq!(variant.basic_timestep_ms, base.basic_timestep_ms);
        assert_eq!(variant.robots[0].spawn, base.robots[0].spawn);
    }

    #[test]
    fn zero_instances_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = instantiate_world_variants(&source_world(dir.path()), 0, dir.path()).unwrap_err();
        assert!(err.to_string().contains("GENERATION_ERROR"));
    }

    #[test]
    fn missing_world_is_generation_error() {
        let dir = tempfile::tempdir().unwrap();
        let err =
            instantiate_world_variants(Path::new("/nope.json"), 1, dir.path()).unwrap_err();
        assert!(matches!(err, PipelineError::Generation(_)));
    }
}
