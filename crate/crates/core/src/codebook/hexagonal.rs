use nalgebra::Matrix2;
use serde::Serialize;

use super::lattice::{truncate_lattice, LatticeGenerator};
use super::{all_pairs_clear, check_eps, verify_codebook, Codebook, DesignReport};
use crate::array_model::Position;
use crate::error::{invalid, Result};
use crate::lambert::lambert_w0;
use crate::reliability_field::{b_codebook, ReliabilityField};

/// Placement of the hexagonal lattice in the whitened plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HexOptions {
    /// Rotation of the lattice basis in the whitened plane, radians.
    pub rotation: f64,
    /// Physical position of the lattice point nearest the plane centre.
    pub offset: Position,
    /// Ratio between successive lattice scales tried by the spacing scan.
    pub scale_step: f64,
}

impl Default for HexOptions {
    fn default() -> Self {
        Self {
            rotation: 0.0,
            offset: Position::default(),
            scale_step: 1.01,
        }
    }
}

/// Closed-form size predictions for the hexagonal construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HexSizing {
    /// Whitened plane area `Xi`.
    pub xi: f64,
    /// `2 Xi / sqrt(3)`.
    pub xi_h: f64,
    /// Continuous solution `Xi_h L / W0(Xi_h L / eps)`.
    pub j_continuous: f64,
    /// Floor of the continuous solution.
    pub j_lambert: usize,
    /// Floor of the limit of `J <- Xi_h L / log(J / eps)`.
    pub j_fixed_point: usize,
    /// Whether the two predictions differ by at most one codeword.
    pub agrees: bool,
}

/// Output of [`hexagonal_design`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HexDesign {
    #[serde(skip)]
    pub codebook: Codebook,
    pub report: DesignReport,
    pub sizing: HexSizing,
    /// Nearest-neighbour distance of the emitted lattice in the whitened plane.
    pub whitened_spacing: f64,
    /// Physical length of one whitened spacing along y and along z.
    pub axis_pitch: [f64; 2],
    /// Lattice scale relative to the smallest one the scan could accept.
    pub inflation: f64,
    /// Lattices examined by the spacing scan.
    pub scan_steps: usize,
    #[serde(skip)]
    pub generator: Option<LatticeGenerator>,
}

/// Whitened plane area `a_y a_z sqrt(det G_B)`.
pub fn transformed_area(field: &ReliabilityField) -> f64 {
    let [ty, tz] = field.quadratic_params().whitening();
    let scene = field.scene();
    scene.extent_y * scene.extent_z * ty * tz
}

/// Codebook size `floor(Xi_h L / W0(Xi_h L / eps))` and its continuous value.
pub fn hexagonal_size_lambert(xi_h: f64, snapshots: u32, eps: f64) -> Result<(f64, usize)> {
    check_eps(eps)?;
    let x = xi_h * f64::from(snapshots);
    if x <= 0.0 {
        return Ok((0.0, 0));
    }
    let j = x / lambert_w0(x / eps)?;
    Ok((j, j.floor() as usize))
}

/// Floor of the fixed point of `J <- Xi_h L / log(J / eps)` started at `J = 2`.
pub fn hexagonal_size_fixed_point(xi_h: f64, snapshots: u32, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    let x = xi_h * f64::from(snapshots);
    let mut j = 2.0_f64;
    for _ in 0..10_000 {
        // The map is a contraction only while J / eps > e.
        if j <= eps * std::f64::consts::E {
            break;
        }
        let next = x / (j / eps).ln();
        if (next - j).abs() <= 1e-12 * j.max(1.0) {
            j = next;
            break;
        }
        j = next;
    }
    Ok(j.max(0.0).floor() as usize)
}

fn hex_generator(field: &ReliabilityField, rho: f64, rotation: f64) -> Result<LatticeGenerator> {
    let q = field.quadratic_params();
    let (c, s) = (rotation.cos(), rotation.sin());
    let rot = Matrix2::new(c, -s, s, c);
    let basis = Matrix2::new(1.0, 0.5, 0.0, 3f64.sqrt() / 2.0);
    let unstretch = Matrix2::new(1.0 / q.alpha_y.sqrt(), 0.0, 0.0, 1.0 / q.alpha_z.sqrt());
    LatticeGenerator::new(unstretch * rot * basis * rho)
}

/// Hexagonal codebook in the whitened plane, certified with the exact field.
///
/// Lattices are parameterised by a physical scale `rho` on the fixed grid
/// `scale_step^k` (whitened nearest-neighbour distance `rho sqrt(kappa)`).
/// The scan starts at the smallest scale whose quadratic spacing could meet
/// the two-codeword threshold, grows the scale until at most one point
/// remains, and keeps the feasible lattice with the most points (the first
/// one on ties). Because the candidate family does not depend on the SNR or
/// on `L`, the returned size never decreases when either one grows.
pub fn hexagonal_design(
    eps: f64,
    field: &ReliabilityField,
    opts: &HexOptions,
) -> Result<HexDesign> {
    check_eps(eps)?;
    if !(opts.scale_step > 1.0) || !opts.scale_step.is_finite() {
        return Err(invalid("scale_step", "must exceed 1"));
    }
    if !opts.rotation.is_finite() {
        return Err(invalid("rotation", "must be finite"));
    }
    let scene = field.scene();
    if !scene.contains(opts.offset) {
        return Err(invalid(
            "offset",
            "lattice offset must lie on the agent plane",
        ));
    }
    let q = field.quadratic_params();
    if q.is_degenerate() {
        return Err(invalid(
            "array",
            "hexagonal design needs at least two elements along each axis",
        ));
    }
    let l = scene.snapshots;
    let xi = transformed_area(field);
    let xi_h = 2.0 * xi / 3f64.sqrt();
    let (j_continuous, j_lambert) = hexagonal_size_lambert(xi_h, l, eps)?;
    let j_fixed_point = hexagonal_size_fixed_point(xi_h, l, eps)?;
    let sizing = HexSizing {
        xi,
        xi_h,
        j_continuous,
        j_lambert,
        j_fixed_point,
        agrees: j_lambert.abs_diff(j_fixed_point) <= 1,
    };
    if !sizing.agrees {
        log::warn!("closed-form size {j_lambert} and fixed-point size {j_fixed_point} disagree");
    }

    let sqrt_kappa = q.kappa.sqrt();
    let rho_floor = (b_codebook(2, eps, l) / q.kappa).sqrt();
    let ln_step = opts.scale_step.ln();
    let k_start = (rho_floor.ln() / ln_step).floor() as i64;
    let rho_start = opts.scale_step.powf(k_start as f64);

    let mut best: Option<(Vec<Position>, LatticeGenerator, f64)> = None;
    let mut steps = 0usize;
    for k in k_start.. {
        let rho = opts.scale_step.powf(k as f64);
        let gen = hex_generator(field, rho, opts.rotation)?;
        let points = truncate_lattice(&gen, opts.offset, scene)?;
        steps += 1;
        let count = points.len();
        if count <= 1 {
            break;
        }
        if best.as_ref().is_some_and(|(b, _, _)| count <= b.len()) {
            continue;
        }
        if all_pairs_clear(&points, field, b_codebook(count, eps, l)) {
            log::debug!("hexagonal scan: {count} codewords feasible at scale {rho:.6e}");
            best = Some((points, gen, rho));
        }
    }

    let (positions, generator, rho) = match best {
        Some((p, g, r)) => (p, Some(g), r),
        None => {
            log::info!("no hexagonal lattice with two or more codewords is feasible");
            (vec![opts.offset], None, f64::NAN)
        }
    };
    let mut codebook = Codebook::new(positions, field)?;
    let report = verify_codebook(&codebook, eps, field)?;
    if report.feasible {
        codebook.set_verified(Some(eps));
    }
    let whitened_spacing = rho * sqrt_kappa;
    let [ty, tz] = q.whitening();
    Ok(HexDesign {
        codebook,
        report,
        sizing,
        whitened_spacing,
        axis_pitch: [whitened_spacing / ty, whitened_spacing / tz],
        inflation: rho / rho_start,
        scan_steps: steps,
        generator,
    })
}
