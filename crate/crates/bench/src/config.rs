//! Suite configuration as read from JSON.

use orthtrp::{BlockMode, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HorizonPolicy {
    /// Reference arc length divided by a nominal speed.
    ArcLength { speed: f64 },
    Fixed { seconds: f64 },
}

impl HorizonPolicy {
    pub fn horizon(&self, arc_length: f64) -> f64 {
        match *self {
            HorizonPolicy::ArcLength { speed } => arc_length / speed,
            HorizonPolicy::Fixed { seconds } => seconds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_sweeps: usize,
    pub kkt_tol: f64,
    pub block_mode: BlockMode,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { max_sweeps: 20_000, kkt_tol: 1e-8, block_mode: BlockMode::SingleDualStep }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_sweeps: self.max_sweeps,
            kkt_tol: self.kkt_tol,
            block_mode: self.block_mode,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub grid_shape: [usize; 3],
    pub room_size: [f64; 3],
    pub door_size: f64,
    pub points_per_wall: usize,
    pub n_waypoints: OneOrMany<usize>,
    #[serde(rename = "N_y")]
    pub ny: usize,
    #[serde(rename = "N_J")]
    pub nj: usize,
    pub samples: usize,
    pub horizon_policy: HorizonPolicy,
    /// Regularization relative to the mean diagonal of the sampled Gram matrix.
    pub rho: f64,
    pub solver: SolverSection,
    pub seed: OneOrMany<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            grid_shape: [4, 4, 2],
            room_size: [4.0, 4.0, 3.0],
            door_size: 1.2,
            points_per_wall: 40,
            n_waypoints: OneOrMany::Many((11..=30).collect()),
            ny: 6,
            nj: 14,
            samples: 128,
            horizon_policy: HorizonPolicy::ArcLength { speed: 1.0 },
            rho: 1e-8,
            solver: SolverSection::default(),
            seed: OneOrMany::Many((0..5).collect()),
        }
    }
}

impl BenchConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Parses `a..b` (inclusive) or a comma list such as `11,20,30`.
pub fn parse_waypoints(text: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
        let b: usize = b.trim_start_matches('=').trim().parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
        return Ok((a..=b).collect());
    }
    parse_list(text)
}

pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("bad value {s:?}: {e}")))
        .collect()
}
