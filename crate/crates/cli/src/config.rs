//! Run configuration: TOML with nested sections, strict about unknown
//! keys, with every omitted field falling back to the library defaults.
//! `--print-defaults` emits the complete effective configuration, and the
//! printed form parses back to the same config.

use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thicket_core::dynamics::ModelParams;
use thicket_core::mpc::{MpcConfig, VelocityWeight};
use thicket_core::perception::PerceptionConfig;
use thicket_core::sim::{AblationSpec, TrialConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mpc: MpcSection,
    pub model: ModelSection,
    pub perception: PerceptionSection,
    pub trial: TrialSection,
    pub scene: SceneSection,
    pub benchmark: BenchmarkSection,
    /// Default output directory; command-line `--out` overrides it.
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mpc: MpcSection::default(),
            model: ModelSection::default(),
            perception: PerceptionSection::default(),
            trial: TrialSection::default(),
            scene: SceneSection::default(),
            benchmark: BenchmarkSection::default(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MpcSection {
    pub horizon: usize,
    pub dt: f64,
    pub n_waypoints: usize,
    pub m_nearest: usize,
    pub repulsion_radius: f64,
    pub barrier_beta: f64,
    pub collision_weight: f64,
    pub q_goal: [f64; 10],
    pub q_wp: [f64; 10],
    pub q_u: [f64; 4],
    pub max_iter: usize,
    pub cost_tol: f64,
    /// `"directional"` or `"norm"`.
    pub velocity_weight: String,
    pub query_at_guess: bool,
}

impl Default for MpcSection {
    fn default() -> Self {
        let c = MpcConfig::default();
        MpcSection {
            horizon: c.horizon,
            dt: c.dt,
            n_waypoints: c.n_waypoints,
            m_nearest: c.m_nearest,
            repulsion_radius: c.repulsion_radius,
            barrier_beta: c.barrier_beta,
            collision_weight: c.collision_weight,
            q_goal: c.q_goal,
            q_wp: c.q_wp,
            q_u: c.q_u,
            max_iter: c.max_iter,
            cost_tol: c.cost_tol,
            velocity_weight: "directional".into(),
            query_at_guess: c.query_at_guess,
        }
    }
}

impl MpcSection {
    pub fn build(&self) -> Result<MpcConfig> {
        let velocity_weight = match self.velocity_weight.as_str() {
            "directional" => VelocityWeight::Directional,
            "norm" => VelocityWeight::Norm,
            other => bail!("mpc.velocity_weight must be \"directional\" or \"norm\", got {other:?}"),
        };
        let cfg = MpcConfig {
            horizon: self.horizon,
            dt: self.dt,
            n_waypoints: self.n_waypoints,
            m_nearest: self.m_nearest,
            repulsion_radius: self.repulsion_radius,
            barrier_beta: self.barrier_beta,
            collision_weight: self.collision_weight,
            q_goal: self.q_goal,
            q_wp: self.q_wp,
            q_u: self.q_u,
            max_iter: self.max_iter,
            cost_tol: self.cost_tol,
            velocity_weight,
            query_at_guess: self.query_at_guess,
        };
        cfg.validate().context("[mpc] section")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub damping: [f64; 3],
    pub accel_gain: [f64; 3],
    pub accel_tau: [f64; 3],
    pub yaw_gain: f64,
    pub yaw_tau: f64,
    pub u_min: [f64; 4],
    pub u_max: [f64; 4],
    pub gravity: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::default();
        ModelSection {
            damping: p.damping.into(),
            accel_gain: p.accel_gain.into(),
            accel_tau: p.accel_tau.into(),
            yaw_gain: p.yaw_gain,
            yaw_tau: p.yaw_tau,
            u_min: p.u_min,
            u_max: p.u_max,
            gravity: p.gravity,
        }
    }
}

impl ModelSection {
    pub fn build(&self) -> Result<ModelParams> {
        let params = ModelParams {
            damping: Vector3::from(self.damping),
            accel_gain: Vector3::from(self.accel_gain),
            accel_tau: Vector3::from(self.accel_tau),
            yaw_gain: self.yaw_gain,
            yaw_tau: self.yaw_tau,
            u_min: self.u_min,
            u_max: self.u_max,
            gravity: self.gravity,
        };
        params.validate().context("[model] section")?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionSection {
    pub target_width: usize,
    pub target_height: usize,
    pub max_range: f64,
    pub safety_distance: f64,
    pub control_dt: f64,
    pub edge_tau: f64,
    pub speed_floor: f64,
    pub max_inflation_kernel: usize,
    pub keyframe_diff_dist: f64,
    pub keyframe_promote_frac: f64,
    pub keyframe_prune_dist: f64,
    pub edge_tree: bool,
    pub multi_frame: bool,
}

impl Default for PerceptionSection {
    fn default() -> Self {
        let c = PerceptionConfig::default();
        PerceptionSection {
            target_width: c.target_width,
            target_height: c.target_height,
            max_range: c.max_range,
            safety_distance: c.safety_distance,
            control_dt: c.control_dt,
            edge_tau: c.edge_tau,
            speed_floor: c.speed_floor,
            max_inflation_kernel: c.max_inflation_kernel,
            keyframe_diff_dist: c.keyframe_diff_dist,
            keyframe_promote_frac: c.keyframe_promote_frac,
            keyframe_prune_dist: c.keyframe_prune_dist,
            edge_tree: c.edge_tree,
            multi_frame: c.multi_frame,
        }
    }
}

impl PerceptionSection {
    pub fn build(&self) -> Result<PerceptionConfig> {
        let cfg = PerceptionConfig {
            target_width: self.target_width,
            target_height: self.target_height,
            max_range: self.max_range,
            safety_distance: self.safety_distance,
            control_dt: self.control_dt,
            edge_tau: self.edge_tau,
            speed_floor: self.speed_floor,
            max_inflation_kernel: self.max_inflation_kernel,
            keyframe_diff_dist: self.keyframe_diff_dist,
            keyframe_promote_frac: self.keyframe_promote_frac,
            keyframe_prune_dist: self.keyframe_prune_dist,
            edge_tree: self.edge_tree,
            multi_frame: self.multi_frame,
        };
        cfg.validate().context("[perception] section")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSection {
    pub v_des: f64,
    pub success_radius: f64,
    pub quad_radius: f64,
    /// Simulated seconds; omit for three times the straight-line time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout: Option<f64>,
    pub control_rate_hz: f64,
    pub depth_noise_sigma: f64,
    pub pos_noise_sigma: f64,
    pub model_perturbation: f64,
    pub camera_hfov_deg: f64,
}

impl Default for TrialSection {
    fn default() -> Self {
        let c = TrialConfig::default();
        TrialSection {
            v_des: c.v_des,
            success_radius: c.success_radius,
            quad_radius: c.quad_radius,
            timeout: c.timeout,
            control_rate_hz: c.control_rate_hz,
            depth_noise_sigma: c.depth_noise_sigma,
            pos_noise_sigma: c.pos_noise_sigma,
            model_perturbation: c.model_perturbation,
            camera_hfov_deg: c.camera_hfov_deg,
        }
    }
}

impl TrialSection {
    pub fn build(&self) -> Result<TrialConfig> {
        let cfg = TrialConfig {
            v_des: self.v_des,
            success_radius: self.success_radius,
            quad_radius: self.quad_radius,
            timeout: self.timeout,
            control_rate_hz: self.control_rate_hz,
            depth_noise_sigma: self.depth_noise_sigma,
            pos_noise_sigma: self.pos_noise_sigma,
            model_perturbation: self.model_perturbation,
            camera_hfov_deg: self.camera_hfov_deg,
        };
        cfg.validate().context("[trial] section")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    /// Path to a scene file; takes precedence over generation when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// World extents as `[min x, min y, min z, max x, max y, max z]`.
    pub bounds: [f64; 6],
    /// Trunks per square metre.
    pub density: f64,
    /// Uniform trunk radius range, metres.
    pub radius_range: [f64; 2],
    pub seed: u64,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            file: None,
            bounds: [0.0, -15.0, 0.0, 50.0, 15.0, 3.0],
            density: 1.0 / 25.0,
            radius_range: [0.3, 0.8],
            seed: 0,
        }
    }
}

impl SceneSection {
    pub fn bounds(&self) -> Result<thicket_core::sim::Aabb> {
        let b = self.bounds;
        thicket_core::sim::Aabb::new(Vector3::new(b[0], b[1], b[2]), Vector3::new(b[3], b[4], b[5]))
            .context("scene.bounds")
    }

    pub fn generate(&self, seed: u64) -> Result<thicket_core::sim::Scene> {
        thicket_core::sim::generate_forest_with_radii(
            self.bounds()?,
            self.density,
            (self.radius_range[0], self.radius_range[1]),
            seed,
        )
        .context("scene generation")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub speeds: Vec<f64>,
    pub trials_per_cell: usize,
    /// Distinct generated forests cycled over the cell's trials.
    pub n_scenes: usize,
    pub base_seed: u64,
    /// Column names: `baseline`, `noisy`, `no_edge`, `single_frame`,
    /// `single_nearest`.
    pub ablations: Vec<String>,
    /// Sigma used by the `noisy` column, metres.
    pub noise_sigma: f64,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection {
            speeds: vec![2.0, 3.0, 5.0, 7.0, 10.0, 12.0],
            trials_per_cell: 10,
            n_scenes: 10,
            base_seed: 1000,
            ablations: vec![
                "baseline".into(),
                "noisy".into(),
                "no_edge".into(),
                "single_frame".into(),
                "single_nearest".into(),
            ],
            noise_sigma: 0.05,
        }
    }
}

impl BenchmarkSection {
    pub fn ablation_specs(&self) -> Result<Vec<AblationSpec>> {
        self.ablations
            .iter()
            .map(|name| match name.as_str() {
                "baseline" => Ok(AblationSpec::baseline()),
                "noisy" => Ok(AblationSpec::noisy(self.noise_sigma)),
                "no_edge" => Ok(AblationSpec::without_edge_tree()),
                "single_frame" => Ok(AblationSpec::single_frame()),
                "single_nearest" => Ok(AblationSpec::single_nearest()),
                other => bail!("unknown ablation {other:?}"),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() {
            bail!("benchmark.speeds must not be empty");
        }
        if self.speeds.iter().any(|s| !(*s > 0.0)) {
            bail!("benchmark.speeds must be positive");
        }
        if self.n_scenes == 0 {
            bail!("benchmark.n_scenes must be at least 1");
        }
        if !(self.noise_sigma >= 0.0) {
            bail!("benchmark.noise_sigma must be non-negative");
        }
        self.ablation_specs()?;
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-section validation; each `build` repeats the per-section
    /// bounds so defaults and loaded files face the same checks.
    pub fn validate(&self) -> Result<()> {
        self.mpc.build()?;
        self.model.build()?;
        self.perception.build()?;
        self.trial.build()?;
        self.scene.bounds()?;
        self.benchmark.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}
