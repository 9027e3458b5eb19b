use serde::Serialize;

use crate::array_model::{ArrayConfig, SceneConfig};
use crate::bounds::{bound_report, BoundReport, BoundSettings};
use crate::error::{invalid, Result};
use crate::par;
use crate::reliability_field::ReliabilityField;

/// Grid of a rate sweep; SNR values in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub eps: f64,
    pub snr_db: Vec<f64>,
    pub snapshots: Vec<u32>,
    pub bounds: BoundSettings,
}

/// One `(SNR, L)` point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    /// `log2(J) / L`, bits per pulse.
    pub normalized_rate: f64,
    pub feasible: bool,
    #[serde(flatten)]
    pub bounds: BoundReport,
}

/// Hexagonal designs and converse bounds over the SNR x L grid, SNR-major.
pub fn rate_sweep(
    array: &ArrayConfig,
    scene: &SceneConfig,
    settings: &SweepSettings,
) -> Result<Vec<SweepPoint>> {
    if settings.snr_db.is_empty() || settings.snapshots.is_empty() {
        return Err(invalid("sweep", "SNR and snapshot lists must be non-empty"));
    }
    let grid: Vec<(f64, u32)> = settings
        .snr_db
        .iter()
        .flat_map(|&db| settings.snapshots.iter().map(move |&l| (db, l)))
        .collect();
    par::map_slice(&grid, |&(db, l)| {
        let sc = scene.with_snr(10f64.powf(db / 10.0)).with_snapshots(l);
        let field = ReliabilityField::new(*array, sc)?;
        let bounds = bound_report(settings.eps, &field, &settings.bounds)?;
        Ok(SweepPoint {
            snr_db: db,
            normalized_rate: bounds.rate_lower * sc.pulse_duration,
            feasible: bounds.hex_feasible,
            bounds,
        })
    })
    .into_iter()
    .collect()
}
