//! Machine-readable outputs: trajectory CSV, per-tick diagnostics
//! JSON-lines, and the benchmark results table.

use std::fmt::Write as _;

use serde::Serialize;
use thicket_core::sim::{CellResult, TrialResult};

pub const TRAJECTORY_HEADER: &str =
    "t,px,py,pz,phi,vx,vy,vz,ax,ay,az,u1x,u1y,u1z,u1phi,solve_ms";

pub fn trajectory_csv(result: &TrialResult) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for rec in &result.ticks {
        let s = &rec.state;
        let u = &rec.input;
        writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            rec.t,
            s.position.x,
            s.position.y,
            s.position.z,
            s.yaw,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.accel.x,
            s.accel.y,
            s.accel.z,
            u.accel_cmd.x,
            u.accel_cmd.y,
            u.accel_cmd.z,
            u.yaw_cmd,
            rec.solve_ms,
        )
        .expect("write to string");
    }
    out
}

#[derive(Serialize)]
struct TickDiag {
    tick: usize,
    t: f64,
    solve_ms: f64,
    iterations: usize,
    cost_collision: f64,
    cost_goal: f64,
    cost_waypoint: f64,
    cost_smoothness: f64,
    cost_total: f64,
    /// `None` when no obstacle was in range (serialised as null).
    min_obstacle_distance: Option<f64>,
    used_fallback: bool,
    u1: [f64; 4],
}

pub fn diagnostics_jsonl(result: &TrialResult) -> String {
    let mut out = String::new();
    for (tick, rec) in result.ticks.iter().enumerate() {
        let diag = TickDiag {
            tick,
            t: rec.t,
            solve_ms: rec.solve_ms,
            iterations: rec.iterations,
            cost_collision: rec.cost.collision,
            cost_goal: rec.cost.goal,
            cost_waypoint: rec.cost.waypoint,
            cost_smoothness: rec.cost.smoothness,
            cost_total: rec.cost.total(),
            min_obstacle_distance: rec.min_obstacle_distance.is_finite().then_some(rec.min_obstacle_distance),
            used_fallback: rec.used_fallback,
            u1: [rec.input.accel_cmd.x, rec.input.accel_cmd.y, rec.input.accel_cmd.z, rec.input.yaw_cmd],
        };
        out.push_str(&serde_json::to_string(&diag).expect("diagnostics serialise"));
        out.push('\n');
    }
    out
}

pub const RESULTS_HEADER: &str =
    "speed,ablation,success_rate,mean_speed,p25_speed,p75_speed,mean_solve_ms,mean_iters";

pub fn results_csv(cells: &[CellResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for c in cells {
        writeln!(
            out,
            "{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            c.speed,
            c.ablation,
            c.success_rate,
            c.mean_speed,
            c.p25_speed,
            c.p75_speed,
            c.mean_solve_ms,
            c.mean_iters,
        )
        .expect("write to string");
    }
    out
}

/// One-line trial summary for stdout.
pub fn summary_line(result: &TrialResult) -> String {
    let outcome = match result.outcome {
        thicket_core::sim::TrialOutcome::Success => "success",
        thicket_core::sim::TrialOutcome::Collision => "collision",
        thicket_core::sim::TrialOutcome::Timeout => "timeout",
    };
    format!(
        "result={outcome} min_clearance={} mean_speed={:.3}",
        if result.min_clearance.is_finite() {
            format!("{:.3}", result.min_clearance)
        } else {
            "inf".to_string()
        },
        result.mean_forward_speed,
    )
}
