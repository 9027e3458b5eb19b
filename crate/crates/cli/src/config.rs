//! Run configuration: a TOML file with one section per concern, dotted
//! command-line overrides, and up-front validation.

use std::path::{Path, PathBuf};

use embodied_core::array_model::{ArrayConfig, Position, SceneConfig};
use embodied_core::bounds::{BoundSettings, SupportSolver};
use embodied_core::codebook::HexOptions;
use embodied_core::reliability_field::{RaySearch, ReliabilityField};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Target maximum error probability.
    pub eps: f64,
    /// Output directory; not part of the recorded configuration.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub array: ArraySection,
    pub scene: SceneSection,
    pub sweep: SweepSection,
    pub solver: SolverSection,
    pub hex: HexSection,
    pub field: FieldSection,
    pub codebook: CodebookSection,
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub m_y: u32,
    pub m_z: u32,
    pub carrier_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub distance: f64,
    pub extent_y: f64,
    pub extent_z: f64,
    pub snr_db: f64,
    pub noise_var: f64,
    pub snapshots: u32,
    /// Seconds; 1 makes bits per second equal bits per pulse.
    pub pulse_duration: f64,
    pub far_field_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub snapshots: Vec<u32>,
    /// Largest snapshot count tried by the exhaustive search.
    pub l_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub rays: usize,
    pub ray_tol: f64,
    pub grid_n: usize,
    pub fw_iters: usize,
    pub fw_gap_bits: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HexSection {
    pub rotation: f64,
    pub offset_y: f64,
    pub offset_z: f64,
    pub scale_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    /// Points per axis of the displacement grid, which spans the full
    /// range of in-plane differences.
    pub grid_n: usize,
    /// Radius of the polar profile, meters.
    pub polar_radius: f64,
    pub polar_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookSource {
    Hex,
    Greedy,
    File,
    List,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    pub source: CodebookSource,
    /// Grid step of the greedy baseline, meters.
    pub greedy_step: f64,
    /// CSV read when `source = "file"`.
    pub file: String,
    /// `[y, z]` pairs used when `source = "list"`.
    pub positions: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub max_codewords: usize,
    /// Replace the union bound by an impossible value and expect the
    /// soundness gate to fire.
    pub self_test: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            eps: 1e-3,
            out_dir: PathBuf::from("out"),
            array: ArraySection::default(),
            scene: SceneSection::default(),
            sweep: SweepSection::default(),
            solver: SolverSection::default(),
            hex: HexSection::default(),
            field: FieldSection::default(),
            codebook: CodebookSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            m_y: 64,
            m_z: 16,
            carrier_hz: 7e9,
        }
    }
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            distance: 100.0,
            extent_y: 2.0,
            extent_z: 2.0,
            snr_db: 10.0,
            noise_var: 1.0,
            snapshots: 5,
            pulse_duration: 1.0,
            far_field_ratio: 0.05,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            snapshots: vec![1, 2, 5, 10, 20],
            l_max: 2000,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let rays = RaySearch::default();
        let fw = SupportSolver::default();
        Self {
            rays: rays.rays,
            ray_tol: rays.tol,
            grid_n: fw.grid_n,
            fw_iters: fw.max_iters,
            fw_gap_bits: fw.gap_tol_bits,
            trials: 20_000,
        }
    }
}

impl Default for HexSection {
    fn default() -> Self {
        Self {
            rotation: 0.0,
            offset_y: 0.0,
            offset_z: 0.0,
            scale_step: HexOptions::default().scale_step,
        }
    }
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            grid_n: 201,
            polar_radius: 0.05,
            polar_points: 361,
        }
    }
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self {
            source: CodebookSource::Hex,
            greedy_step: 0.01,
            file: String::new(),
            positions: Vec::new(),
        }
    }
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            max_codewords: 16,
            self_test: false,
        }
    }
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("`{key}`: {reason}"))
}

/// Sets `path` (dotted) inside `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad(assignment, "override must look like key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    // Anything that does not parse as a TOML value is taken as a bare string.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad(path, "empty key segment"));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| bad(path, format!("`{k}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads the optional config file, applies overrides in order, and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every value the commands may touch.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(bad("eps", "must lie in (0, 0.5)"));
        }
        self.field()?;
        if !self.scene.snr_db.is_finite() {
            return Err(bad("scene.snr_db", "must be finite"));
        }
        if self.sweep.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(bad("sweep.snr_db", "must be finite"));
        }
        if self.sweep.snapshots.contains(&0) {
            return Err(bad("sweep.snapshots", "counts must be at least 1"));
        }
        if self.sweep.l_max == 0 {
            return Err(bad("sweep.l_max", "must be at least 1"));
        }
        if self.solver.rays == 0 {
            return Err(bad("solver.rays", "must be at least 1"));
        }
        if !(self.solver.ray_tol > 0.0) {
            return Err(bad("solver.ray_tol", "must be positive"));
        }
        if self.solver.grid_n < 2 {
            return Err(bad("solver.grid_n", "need at least 2 points per axis"));
        }
        if self.solver.fw_iters == 0 {
            return Err(bad("solver.fw_iters", "must be at least 1"));
        }
        if !(self.solver.fw_gap_bits > 0.0) {
            return Err(bad("solver.fw_gap_bits", "must be positive"));
        }
        if self.solver.trials < 100 {
            return Err(bad(
                "solver.trials",
                "need at least 100 trials per codeword",
            ));
        }
        if !self.hex.rotation.is_finite() {
            return Err(bad("hex.rotation", "must be finite"));
        }
        if !(self.hex.scale_step > 1.0 && self.hex.scale_step.is_finite()) {
            return Err(bad("hex.scale_step", "must be finite and greater than 1"));
        }
        let scene = self.scene_config()?;
        if !scene.contains(self.hex_options().offset) {
            return Err(bad("hex.offset_y", "offset lies outside the agent plane"));
        }
        if self.field.grid_n < 2 {
            return Err(bad(
                "field.grid_n",
                "grid is empty; need at least 2 points per axis",
            ));
        }
        if !(self.field.polar_radius > 0.0 && self.field.polar_radius.is_finite()) {
            return Err(bad("field.polar_radius", "must be positive"));
        }
        if self.field.polar_points == 0 {
            return Err(bad("field.polar_points", "must be at least 1"));
        }
        match self.codebook.source {
            CodebookSource::Greedy if !(self.codebook.greedy_step > 0.0) => {
                return Err(bad("codebook.greedy_step", "must be positive"));
            }
            CodebookSource::File if self.codebook.file.is_empty() => {
                return Err(bad("codebook.file", "required when source = \"file\""));
            }
            CodebookSource::List => {
                if self.codebook.positions.is_empty() {
                    return Err(bad("codebook.positions", "required when source = \"list\""));
                }
                for &[y, z] in &self.codebook.positions {
                    if !scene.contains(Position::new(y, z)) {
                        return Err(bad(
                            "codebook.positions",
                            format!("({y}, {z}) lies outside the agent plane"),
                        ));
                    }
                }
            }
            _ => {}
        }
        if self.simulate.max_codewords == 0
            || self.simulate.max_codewords > embodied_core::channel_sim::MAX_SIM_CODEWORDS
        {
            return Err(bad(
                "simulate.max_codewords",
                format!(
                    "must lie in 1..={}",
                    embodied_core::channel_sim::MAX_SIM_CODEWORDS
                ),
            ));
        }
        Ok(())
    }

    /// Sweep lists, required non-empty by the sweeping commands.
    pub fn require_sweep(&self) -> Result<(), CliError> {
        if self.sweep.snr_db.is_empty() {
            return Err(bad("sweep.snr_db", "sweep grid is empty"));
        }
        if self.sweep.snapshots.is_empty() {
            return Err(bad("sweep.snapshots", "sweep grid is empty"));
        }
        Ok(())
    }

    pub fn array_config(&self) -> Result<ArrayConfig, CliError> {
        Ok(ArrayConfig::from_carrier(
            self.array.m_y,
            self.array.m_z,
            self.array.carrier_hz,
        )?)
    }

    pub fn scene_config(&self) -> Result<SceneConfig, CliError> {
        let s = &self.scene;
        let scene = SceneConfig {
            distance: s.distance,
            extent_y: s.extent_y,
            extent_z: s.extent_z,
            snr: db_to_linear(s.snr_db),
            noise_var: s.noise_var,
            snapshots: s.snapshots,
            pulse_duration: s.pulse_duration,
            far_field_ratio: s.far_field_ratio,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn field(&self) -> Result<ReliabilityField, CliError> {
        Ok(ReliabilityField::new(
            self.array_config()?,
            self.scene_config()?,
        )?)
    }

    pub fn rays(&self) -> RaySearch {
        RaySearch {
            rays: self.solver.rays,
            tol: self.solver.ray_tol,
        }
    }

    pub fn support_solver(&self) -> SupportSolver {
        SupportSolver {
            grid_n: self.solver.grid_n,
            max_iters: self.solver.fw_iters,
            gap_tol_bits: self.solver.fw_gap_bits,
        }
    }

    pub fn hex_options(&self) -> HexOptions {
        HexOptions {
            rotation: self.hex.rotation,
            offset: Position::new(self.hex.offset_y, self.hex.offset_z),
            scale_step: self.hex.scale_step,
        }
    }

    pub fn bound_settings(&self, with_support: bool) -> BoundSettings {
        BoundSettings {
            rays: self.rays(),
            hex: self.hex_options(),
            support: with_support.then(|| self.support_solver()),
            with_l_star: true,
        }
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
