//! Scene file format: `bounds`, `start`, `goal`, `seed` key-value lines
//! plus one line per obstacle (`cyl x y r h`, `sph x y z r`,
//! `box x y z hx hy hz`), units metres. `#` starts a comment.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use thicket_core::sim::{Aabb, Obstacle, Scene};

pub fn write_scene(scene: &Scene) -> String {
    let mut out = String::new();
    let v = |p: &Vector3<f64>| format!("{} {} {}", p.x, p.y, p.z);
    out.push_str(&format!("bounds {} {}\n", v(&scene.bounds.min), v(&scene.bounds.max)));
    out.push_str(&format!("start {}\n", v(&scene.start)));
    out.push_str(&format!("goal {}\n", v(&scene.goal)));
    out.push_str(&format!("seed {}\n", scene.seed));
    for o in &scene.obstacles {
        match *o {
            Obstacle::Cylinder { x, y, radius, height } => {
                out.push_str(&format!("cyl {x} {y} {radius} {height}\n"));
            }
            Obstacle::Sphere { center, radius } => {
                out.push_str(&format!("sph {} {radius}\n", v(&center)));
            }
            Obstacle::Box { center, half_extents } => {
                out.push_str(&format!("box {} {}\n", v(&center), v(&half_extents)));
            }
        }
    }
    out
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scene file {}", path.display()))?;
    parse_scene(&text).with_context(|| format!("in scene file {}", path.display()))
}

pub fn parse_scene(text: &str) -> Result<Scene> {
    let mut bounds = None;
    let mut start = None;
    let mut goal = None;
    let mut seed = 0u64;
    let mut obstacles = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let key = fields.next().expect("non-empty line");
        let nums: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .with_context(|| format!("line {line_no}: field {f:?} is not a number"))
            })
            .collect::<Result<_>>()?;
        let expect = |n: usize| -> Result<()> {
            if nums.len() != n {
                bail!("line {line_no}: {key} needs {n} numeric fields, got {}", nums.len());
            }
            Ok(())
        };
        match key {
            "bounds" => {
                expect(6)?;
                bounds = Some(
                    Aabb::new(
                        Vector3::new(nums[0], nums[1], nums[2]),
                        Vector3::new(nums[3], nums[4], nums[5]),
                    )
                    .with_context(|| format!("line {line_no}"))?,
                );
            }
            "start" => {
                expect(3)?;
                start = Some(Vector3::new(nums[0], nums[1], nums[2]));
            }
            "goal" => {
                expect(3)?;
                goal = Some(Vector3::new(nums[0], nums[1], nums[2]));
            }
            "seed" => {
                expect(1)?;
                if nums[0] < 0.0 || nums[0].fract() != 0.0 {
                    bail!("line {line_no}: seed must be a non-negative integer");
                }
                seed = nums[0] as u64;
            }
            "cyl" => {
                expect(4)?;
                obstacles.push(Obstacle::Cylinder {
                    x: nums[0],
                    y: nums[1],
                    radius: nums[2],
                    height: nums[3],
                });
            }
            "sph" => {
                expect(4)?;
                obstacles.push(Obstacle::Sphere {
                    center: Vector3::new(nums[0], nums[1], nums[2]),
                    radius: nums[3],
                });
            }
            "box" => {
                expect(6)?;
                obstacles.push(Obstacle::Box {
                    center: Vector3::new(nums[0], nums[1], nums[2]),
                    half_extents: Vector3::new(nums[3], nums[4], nums[5]),
                });
            }
            other => bail!("line {line_no}: unknown directive {other:?}"),
        }
    }

    let bounds = bounds.context("scene file is missing a bounds line")?;
    let start = start.context("scene file is missing a start line")?;
    let goal = goal.context("scene file is missing a goal line")?;
    Ok(Scene { obstacles, bounds, start, goal, seed })
}
