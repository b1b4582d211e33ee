//! Dual-tree perception: per-frame obstacle index, dilated edge index, and
//! the multi-frame keyframe memory that covers space behind the camera.
//!
//! Each depth frame is converted into an immutable [`DualTrees`] snapshot.
//! The planner only ever reads complete snapshots, so frame ingestion can
//! run on a separate thread and publish by swapping the snapshot.

use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::{Isometry3, Vector3};

use crate::depth::{self, DepthImage};
use crate::dynamics::QuadState;
use crate::kdtree::KdTree;
use crate::mpc::WaypointSequence;
use crate::Result;

/// Perception tuning. Keyframe thresholds are calibration values; the
/// inflation floor and cap keep the edge map informative at low speed,
/// where the kernel formula alone would swallow the whole image.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionConfig {
    pub target_width: usize,
    pub target_height: usize,
    pub max_range: f64,
    /// Safety distance fed to the inflation kernel, metres.
    pub safety_distance: f64,
    /// Control time step fed to the inflation kernel, seconds.
    pub control_dt: f64,
    /// Depth discontinuity threshold for edge extraction, metres.
    pub edge_tau: f64,
    /// Lower bound on the forward speed used for inflation.
    pub speed_floor: f64,
    /// Upper bound on the inflation kernel, pixels (odd).
    pub max_inflation_kernel: usize,
    /// Current-vs-keyframe point distance that counts as "new", metres.
    pub keyframe_diff_dist: f64,
    /// Fraction of new points that promotes the current frame.
    pub keyframe_promote_frac: f64,
    /// Promotion prunes previous-keyframe points this close to the new one.
    pub keyframe_prune_dist: f64,
    /// Build the edge tree and coarse-adjust waypoints.
    pub edge_tree: bool,
    /// Keep keyframes at all.
    pub multi_frame: bool,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            target_width: 64,
            target_height: 48,
            max_range: 10.0,
            safety_distance: 0.15,
            control_dt: 0.033,
            edge_tau: 0.3,
            speed_floor: 1.0,
            max_inflation_kernel: 15,
            keyframe_diff_dist: 0.5,
            keyframe_promote_frac: 0.3,
            keyframe_prune_dist: 0.1,
            edge_tree: true,
            multi_frame: true,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::Error::InvalidArgument;
        if self.target_width == 0 || self.target_height == 0 {
            return Err(InvalidArgument("perception resolution must be positive"));
        }
        if !(self.max_range > 0.0 && self.control_dt > 0.0 && self.speed_floor > 0.0) {
            return Err(InvalidArgument("max_range, control_dt, speed_floor must be positive"));
        }
        if self.safety_distance < 0.0 || self.edge_tau < 0.0 {
            return Err(InvalidArgument("distances must be non-negative"));
        }
        if self.max_inflation_kernel % 2 == 0 {
            return Err(InvalidArgument("max_inflation_kernel must be odd"));
        }
        if !(0.0..=1.0).contains(&self.keyframe_promote_frac) {
            return Err(InvalidArgument("keyframe_promote_frac must be in [0, 1]"));
        }
        Ok(())
    }
}

/// A deprojected obstacle cloud with the pose it was captured from.
#[derive(Debug, Clone)]
pub struct CloudFrame {
    pub points: Vec<Vector3<f64>>,
    pub pose: Isometry3<f64>,
    pub timestamp: f64,
    pub is_keyframe: bool,
}

/// A retained keyframe: its cloud plus the prebuilt index.
#[derive(Debug)]
pub struct KeyframeEntry {
    pub cloud: CloudFrame,
    pub tree: KdTree,
}

/// Immutable perception snapshot for one control tick.
#[derive(Debug, Clone)]
pub struct DualTrees {
    /// Index over the current frame's obstacle points.
    pub obstacle_current: KdTree,
    /// Keyframe indices, oldest first.
    pub keyframes: Vec<Arc<KeyframeEntry>>,
    /// Index over dilated-edge points; empty when the edge tree is disabled.
    pub edge: KdTree,
    /// The dilated frame the edge tree was extracted from (the raw frame
    /// when dilation is disabled); also carries the camera geometry used
    /// for field-of-view tests.
    pub dilated_frame: DepthImage,
}

impl DualTrees {
    /// Whether a world point projects into the current frame's frustum.
    pub fn in_current_fov(&self, p: &Vector3<f64>) -> bool {
        self.dilated_frame.project_world(p).is_some()
    }
}

/// Keyframe memory carried across control ticks.
#[derive(Debug, Default)]
pub struct KeyframeManager {
    entries: Vec<Arc<KeyframeEntry>>,
}

impl KeyframeManager {
    pub fn new() -> Self {
        KeyframeManager::default()
    }

    pub fn snapshots(&self) -> Vec<Arc<KeyframeEntry>> {
        self.entries.clone()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ingest the current frame: promote it to a keyframe when it differs
    /// enough from the latest keyframe, prune the superseded keyframe, and
    /// drop keyframes that fell entirely behind the vehicle.
    pub fn update(
        &mut self,
        mut current: CloudFrame,
        state: &QuadState,
        cfg: &PerceptionConfig,
    ) -> Result<()> {
        let promote = match self.entries.last() {
            None => !current.points.is_empty(),
            Some(latest) => {
                frame_difference(&current.points, &latest.tree, cfg.keyframe_diff_dist)
                    > cfg.keyframe_promote_frac
            }
        };
        if promote {
            current.is_keyframe = true;
            let tree = KdTree::build(&current.points)?;
            if let Some(prev) = self.entries.pop() {
                let kept: Vec<Vector3<f64>> = prev
                    .cloud
                    .points
                    .iter()
                    .copied()
                    .filter(|p| !tree.has_within(p, cfg.keyframe_prune_dist))
                    .collect();
                if !kept.is_empty() {
                    let pruned = KeyframeEntry {
                        tree: KdTree::build(&kept)?,
                        cloud: CloudFrame { points: kept, ..prev.cloud.clone() },
                    };
                    self.entries.push(Arc::new(pruned));
                }
            }
            self.entries.push(Arc::new(KeyframeEntry { cloud: current, tree }));
        }
        let fwd = state.forward_axis();
        let p_quad = state.position;
        self.entries
            .retain(|kf| !kf.cloud.points.iter().all(|p| (p - p_quad).dot(&fwd) < 0.0));
        Ok(())
    }
}

/// Fraction of `points` whose nearest neighbour in `latest` is farther than
/// `dist`. Zero for an empty current frame.
fn frame_difference(points: &[Vector3<f64>], latest: &KdTree, dist: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let far = points.iter().filter(|p| !latest.has_within(p, dist)).count();
    far as f64 / points.len() as f64
}

/// Pure keyframe-set transition, for callers that manage plain clouds.
pub fn keyframe_update(
    current: CloudFrame,
    keyframes: &[CloudFrame],
    state: &QuadState,
    cfg: &PerceptionConfig,
) -> Result<Vec<CloudFrame>> {
    let mut manager = KeyframeManager::new();
    for kf in keyframes {
        let tree = KdTree::build(&kf.points)?;
        manager.entries.push(Arc::new(KeyframeEntry { cloud: kf.clone(), tree }));
    }
    manager.update(current, state, cfg)?;
    Ok(manager.entries.iter().map(|e| e.cloud.clone()).collect())
}

/// Effective inflation kernel for the current forward speed: the analytic
/// kernel, floored in speed and capped in size so the edge map keeps
/// structure inside a 64-pixel-wide image.
pub fn effective_inflation_kernel(
    state: &QuadState,
    f_pix: f64,
    cfg: &PerceptionConfig,
) -> Result<usize> {
    #[allow(unused_imports)]
    use num_traits::Float;
    let v_f = state.forward_speed().max(cfg.speed_floor);
    let kernel = depth::inflation_radius(cfg.safety_distance, v_f, cfg.control_dt, f_pix)?;
    Ok(kernel.min(cfg.max_inflation_kernel) | 1)
}

/// Build the dual-tree snapshot for one frame and fold the frame into the
/// keyframe memory.
pub fn build_dual_trees(
    frame: &DepthImage,
    state: &QuadState,
    cfg: &PerceptionConfig,
    keyframes: &mut KeyframeManager,
) -> Result<DualTrees> {
    let obstacle_points = depth::deproject(frame, None);
    let obstacle_current = KdTree::build(&obstacle_points)?;

    let (edge, dilated_frame) = if cfg.edge_tree {
        let kernel = effective_inflation_kernel(state, frame.intrinsics.fx, cfg)?;
        let dilated = depth::dilate(frame, kernel)?;
        let mask = depth::edge_filter(&dilated, cfg.edge_tau);
        let edge_points = depth::deproject(&dilated, Some(&mask));
        (KdTree::build(&edge_points)?, dilated)
    } else {
        (KdTree::empty(), frame.clone())
    };

    if cfg.multi_frame {
        let cloud = CloudFrame {
            points: obstacle_points,
            pose: frame.pose,
            timestamp: frame.timestamp,
            is_keyframe: false,
        };
        keyframes.update(cloud, state, cfg)?;
    }

    Ok(DualTrees { obstacle_current, keyframes: keyframes.snapshots(), edge, dilated_frame })
}

/// Nearest obstacle points for a query position. Inside the current
/// frame's field of view the current tree alone is authoritative; outside
/// it the keyframes are consulted too and the `m` globally nearest win.
pub fn query_obstacles(
    trees: &DualTrees,
    p: &Vector3<f64>,
    m: usize,
    fov_check: bool,
) -> Vec<(Vector3<f64>, f64)> {
    if m == 0 {
        return Vec::new();
    }
    if fov_check && trees.in_current_fov(p) {
        return trees.obstacle_current.knn(p, m);
    }
    let mut merged = trees.obstacle_current.knn(p, m);
    for kf in &trees.keyframes {
        merged.extend(kf.tree.knn(p, m));
    }
    // Stable: equal distances keep current-frame-first order.
    merged.sort_by(|a, b| a.1.total_cmp(&b.1));
    merged.truncate(m);
    merged
}

/// Outcome counters for coarse adjustment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoarseAdjustStats {
    /// Waypoints relocated to an edge point.
    pub adjusted: usize,
    /// Colliding waypoints left in place because the edge tree was empty.
    pub unresolved: usize,
}

/// Replace waypoints that fall inside (or behind) the inflated obstacle
/// surface with their nearest edge point. Positions move; yaw and velocity
/// references and the ordering stay untouched. A waypoint with no depth
/// evidence (outside the frustum) is never adjusted.
pub fn coarse_adjust(
    waypoints: &WaypointSequence,
    trees: &DualTrees,
    dilated: &DepthImage,
) -> (WaypointSequence, CoarseAdjustStats) {
    let mut out = waypoints.clone();
    let mut stats = CoarseAdjustStats::default();
    for wp in out.iter_mut() {
        let Some((u, v, z)) = dilated.project_world(&wp.position) else {
            continue;
        };
        let d_px = dilated.at(u, v);
        if d_px <= 0.0 || z < d_px {
            continue;
        }
        match trees.edge.knn(&wp.position, 1).first() {
            Some((edge_point, _)) => {
                wp.position = *edge_point;
                stats.adjusted += 1;
            }
            None => stats.unresolved += 1,
        }
    }
    (out, stats)
}
