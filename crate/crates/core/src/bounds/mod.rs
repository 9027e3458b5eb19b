//! Converse bounds on the epsilon-capacity and the optimal snapshot count.
//!
//! Rates are in bits per second unless a name says otherwise.

mod support;

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

pub use support::{
    axis_frame, axis_grid, maximize_logdet, snapshot_bits, LogDetOutcome, SupportSolver,
};

use crate::codebook::{check_eps, hexagonal_design, HexOptions};
use crate::error::{invalid, Result};
use crate::reliability_field::{RaySearch, ReliabilityField};

/// Binary entropy in bits; 0 at the end points.
pub fn binary_entropy(eps: f64) -> f64 {
    if eps <= 0.0 || eps >= 1.0 {
        return 0.0;
    }
    -(eps * eps.log2() + (1.0 - eps) * (1.0 - eps).log2())
}

/// `M log2(1 + g/M) - log2(1 + g)` bits per snapshot.
pub fn snapshot_info_universal(snr: f64, elements: usize) -> f64 {
    let m = elements as f64;
    if elements <= 1 {
        return 0.0;
    }
    (m * (snr / m).ln_1p() - snr.ln_1p()) / LN_2
}

/// Turns a per-snapshot information value into the Fano-type rate bound
/// `(C + h2(eps)/L) / ((1 - eps) T_p)`.
pub fn fano_rate(c_snap_bits: f64, eps: f64, field: &ReliabilityField) -> f64 {
    let scene = field.scene();
    (c_snap_bits + binary_entropy(eps) / f64::from(scene.snapshots))
        / ((1.0 - eps) * scene.pulse_duration)
}

/// Information converse with the unrestricted covariance family.
pub fn info_bound_universal(eps: f64, field: &ReliabilityField) -> Result<f64> {
    check_eps(eps)?;
    let c = snapshot_info_universal(field.scene().snr, field.array().elements());
    Ok(fano_rate(c, eps, field))
}

/// Grid-restricted support-constrained information bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportBound {
    /// Rate bound built from the final iterate, bits/s. Restricting the
    /// positions to a grid makes this an estimate from below of the bound
    /// over the continuous plane.
    pub rate: f64,
    /// Bits per snapshot at the final iterate.
    pub c_snap: f64,
    /// Certified grid optimum from above: iterate plus duality gap.
    pub c_snap_upper: f64,
    pub gap_bits: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grid_n: usize,
    #[serde(skip)]
    pub history_bits: Vec<f64>,
}

pub fn info_bound_support(
    eps: f64,
    field: &ReliabilityField,
    solver: &SupportSolver,
) -> Result<SupportBound> {
    check_eps(eps)?;
    solver.validate()?;
    let (array, scene) = (field.array(), field.scene());
    let cy = axis_frame(
        array.m_y,
        &axis_grid(scene.extent_y, solver.grid_n),
        scene.distance,
    );
    let cz = axis_frame(
        array.m_z,
        &axis_grid(scene.extent_z, solver.grid_n),
        scene.distance,
    );
    let snr = scene.snr;
    let out = maximize_logdet(snr, &cy, &cz, solver.max_iters, solver.gap_tol_bits * LN_2);
    if !out.converged {
        log::warn!(
            "support bound: duality gap {:.3e} bits after {} iterations",
            out.gap / LN_2,
            out.iterations
        );
    }
    let c_snap = snapshot_bits(&out, snr).max(0.0);
    let base = snr.ln_1p();
    Ok(SupportBound {
        rate: fano_rate(c_snap, eps, field),
        c_snap,
        c_snap_upper: ((out.value + out.gap - base) / LN_2).max(0.0),
        gap_bits: out.gap / LN_2,
        iterations: out.iterations,
        converged: out.converged,
        grid_n: solver.grid_n,
        history_bits: out.history.iter().map(|v| (v - base) / LN_2).collect(),
    })
}

/// Largest number of disjoint radius-`d/2` disks centred in an
/// `extent_y x extent_z` rectangle, by the Minkowski-sum area ratio.
pub fn packing_count(d: f64, extent_y: f64, extent_z: f64) -> f64 {
    if d.is_infinite() {
        return 1.0;
    }
    let disk = PI * d * d / 4.0;
    (extent_y * extent_z + (extent_y + extent_z) * d + disk) / disk
}

/// Geometric packing converse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoBound {
    pub rate: f64,
    /// Necessary separation radius, meters (infinite when no ray crosses).
    pub d_nec: f64,
    pub j_max: f64,
    /// Rays on which the necessary threshold is not reached inside the plane.
    pub unbounded_rays: usize,
}

pub fn geo_bound(eps: f64, field: &ReliabilityField, search: &RaySearch) -> Result<GeoBound> {
    let scene = field.scene();
    let sep = field.necessary_separation(eps, scene.snapshots, search)?;
    if sep.is_unbounded() {
        // Every pair on the plane is closer than the necessary separation,
        // so at most one codeword fits.
        log::info!("necessary separation exceeds the plane diameter; geometric bound is 0");
    }
    let j_max = if sep.radius >= scene.diameter() {
        1.0
    } else {
        packing_count(sep.radius, scene.extent_y, scene.extent_z)
    };
    Ok(GeoBound {
        rate: j_max.log2() / (f64::from(scene.snapshots) * scene.pulse_duration),
        d_nec: sep.radius,
        j_max,
        unbounded_rays: sep.unbounded_rays,
    })
}

/// `Omega_max = pi^2 g^2 M_max / (24 D^2 (1 + g))`, `M_max = max(M_y^2, M_z^2) - 1`.
pub fn omega_max(field: &ReliabilityField) -> f64 {
    let (array, scene) = (field.array(), field.scene());
    let m = f64::from(array.m_y.max(array.m_z));
    let g = scene.snr;
    PI * PI * g * g * (m * m - 1.0) / (24.0 * scene.distance * scene.distance * (1.0 + g))
}

/// Closed-form geometric bound with the main-lobe separation.
pub fn geo_bound_mainlobe(eps: f64, field: &ReliabilityField) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid("eps", "geometric bound needs 0 < eps < 1/2"));
    }
    let scene = field.scene();
    let l = f64::from(scene.snapshots);
    let ratio = omega_max(field) * l / (1.0 / (4.0 * eps * (1.0 - eps))).ln();
    let (ay, az) = (scene.extent_y, scene.extent_z);
    let j = 1.0 + 4.0 * (ay + az) / PI * ratio.sqrt() + 4.0 * ay * az / PI * ratio;
    Ok(j.log2() / (l * scene.pulse_duration))
}

/// Stationary point of `log(y) - q/y ...`: `y* = (q + sqrt(q^2 + 4q)) / 2`.
pub fn optimal_y(q: f64) -> f64 {
    (q + (q * q + 4.0 * q).sqrt()) / 2.0
}

/// Rate of the exact hexagonal design at one snapshot count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapshotRate {
    pub snapshots: u32,
    pub j: usize,
    pub rate: f64,
}

/// Continuous and integer optimal snapshot counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotOptimum {
    pub q: f64,
    pub y_star: f64,
    pub xi_h: f64,
    pub l_cont: f64,
    pub l_int: u32,
    /// Exact rates over the integer search window.
    pub window: Vec<SnapshotRate>,
}

/// Exact hexagonal-design rate at `snapshots`.
pub fn hex_rate_at(
    eps: f64,
    field: &ReliabilityField,
    snapshots: u32,
    hex: &HexOptions,
) -> Result<SnapshotRate> {
    let f = ReliabilityField::new(*field.array(), field.scene().with_snapshots(snapshots))?;
    let design = hexagonal_design(eps, &f, hex)?;
    Ok(SnapshotRate {
        snapshots,
        j: design.report.j,
        rate: design.report.rate_bits_per_second,
    })
}

/// Picks the best entry; ties go to the smaller snapshot count.
fn best_rate(rates: &[SnapshotRate]) -> Option<SnapshotRate> {
    rates.iter().copied().fold(None, |best, r| match best {
        Some(b) if b.rate >= r.rate => Some(b),
        _ => Some(r),
    })
}

/// Closed-form continuous optimum and the best integer count in a +-2
/// window around it, scored with exactly verified hexagonal designs.
pub fn optimal_snapshots(
    eps: f64,
    field: &ReliabilityField,
    hex: &HexOptions,
) -> Result<SnapshotOptimum> {
    check_eps(eps)?;
    let xi_h = 2.0 * crate::codebook::transformed_area(field) / 3f64.sqrt();
    let q = -eps.ln();
    let y_star = optimal_y(q);
    let l_cont = eps / xi_h * y_star * y_star.exp();
    let lo = (l_cont.floor() - 2.0).max(1.0);
    let hi = (l_cont.ceil() + 2.0).max(lo).min(f64::from(u32::MAX));
    let window = (lo as u32..=hi as u32)
        .map(|l| hex_rate_at(eps, field, l, hex))
        .collect::<Result<Vec<_>>>()?;
    let l_int = best_rate(&window).map_or(1, |b| b.snapshots);
    Ok(SnapshotOptimum {
        q,
        y_star,
        xi_h,
        l_cont,
        l_int,
        window,
    })
}

/// Exhaustive integer search for the rate-maximising snapshot count.
///
/// Counts are tried upward from 1. Since the geometric bound caps every
/// code that meets the target error, the search stops once that cap, taken
/// as nonincreasing beyond the current count, falls below the best exact
/// rate found, or at `l_max`.
pub fn exhaustive_snapshots(
    eps: f64,
    field: &ReliabilityField,
    hex: &HexOptions,
    search: &RaySearch,
    l_max: u32,
) -> Result<(SnapshotRate, Vec<SnapshotRate>)> {
    check_eps(eps)?;
    let mut curve = Vec::new();
    let mut best: Option<SnapshotRate> = None;
    let mut below = 0;
    for l in 1..=l_max.max(1) {
        let r = hex_rate_at(eps, field, l, hex)?;
        curve.push(r);
        best = best_rate(&[best.unwrap_or(r), r]);
        let f = ReliabilityField::new(*field.array(), field.scene().with_snapshots(l))?;
        let cap = geo_bound(eps, &f, search)?.rate;
        // The cap is not strictly monotone after discretisation; require a
        // few consecutive counts below the best rate before stopping.
        below = if cap < best.map_or(0.0, |b| b.rate) {
            below + 1
        } else {
            0
        };
        if below >= 5 {
            break;
        }
    }
    Ok((best.expect("at least one count"), curve))
}

/// Result of the achievability / converse sandwich at one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub snr: f64,
    pub snapshots: u32,
    /// Exact hexagonal-design rate.
    pub rate_lower: f64,
    pub hex_j: usize,
    /// Exact verification verdict of the hexagonal design.
    pub hex_feasible: bool,
    pub c_info_universal: f64,
    /// Grid-restricted support bound (absent when not requested).
    pub c_info_support: Option<SupportBound>,
    pub c_geo: f64,
    pub c_geo_mainlobe: f64,
    pub d_nec_m: f64,
    pub d_nec_mainlobe_m: f64,
    pub l_star_continuous: f64,
    pub l_star_integer: u32,
    pub sandwich: Sandwich,
}

/// Sandwich verdicts; `support` is advisory because of the grid restriction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub universal_ok: bool,
    pub geo_ok: bool,
    pub support_ok: Option<bool>,
    pub support_refinements: usize,
}

impl Sandwich {
    /// True when no hard converse is violated.
    pub fn holds(&self) -> bool {
        self.universal_ok && self.geo_ok
    }
}

/// Settings shared by [`bound_report`] calls.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundSettings {
    pub rays: RaySearch,
    pub hex: HexOptions,
    /// Solve the support bound with this solver (skipped when `None`).
    pub support: Option<SupportSolver>,
    /// Compute the optimal snapshot count (costs a few extra designs).
    pub with_l_star: bool,
}

/// Number of grid refinements tried when the achievable rate exceeds the
/// grid-restricted support bound.
const SUPPORT_REFINEMENTS: usize = 2;

pub fn bound_report(
    eps: f64,
    field: &ReliabilityField,
    settings: &BoundSettings,
) -> Result<BoundReport> {
    check_eps(eps)?;
    let scene = field.scene();
    let design = hexagonal_design(eps, field, &settings.hex)?;
    let rate_lower = design.report.rate_bits_per_second;
    let c_info_universal = info_bound_universal(eps, field)?;
    let geo = geo_bound(eps, field, &settings.rays)?;
    let c_geo_mainlobe = geo_bound_mainlobe(eps, field)?;

    let mut refinements = 0;
    let c_info_support = match settings.support {
        Some(mut solver) => {
            let mut bound = info_bound_support(eps, field, &solver)?;
            while rate_lower > bound.rate && refinements < SUPPORT_REFINEMENTS {
                refinements += 1;
                solver.grid_n = 2 * solver.grid_n - 1;
                log::info!(
                    "support bound below achievable rate; refining grid to {}",
                    solver.grid_n
                );
                bound = info_bound_support(eps, field, &solver)?;
            }
            Some(bound)
        }
        None => None,
    };
    let (l_star_continuous, l_star_integer) = if settings.with_l_star {
        let opt = optimal_snapshots(eps, field, &settings.hex)?;
        (opt.l_cont, opt.l_int)
    } else {
        (f64::NAN, 0)
    };
    let sandwich = Sandwich {
        universal_ok: rate_lower <= c_info_universal,
        geo_ok: rate_lower <= geo.rate,
        support_ok: c_info_support.as_ref().map(|b| rate_lower <= b.rate),
        support_refinements: refinements,
    };
    Ok(BoundReport {
        snr: scene.snr,
        snapshots: scene.snapshots,
        rate_lower,
        hex_j: design.report.j,
        hex_feasible: design.report.feasible,
        c_info_universal,
        c_info_support,
        c_geo: geo.rate,
        c_geo_mainlobe,
        d_nec_m: geo.d_nec,
        d_nec_mainlobe_m: field.necessary_separation_mainlobe(eps, scene.snapshots),
        l_star_continuous,
        l_star_integer,
        sandwich,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::tests::scene;
    use crate::array_model::ArrayConfig;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn field(m: (u32, u32), snr_db: f64, l: u32) -> ReliabilityField {
        let array = ArrayConfig::from_carrier(m.0, m.1, 7e9).unwrap();
        ReliabilityField::new(array, scene(100.0, 2.0, 10f64.powf(snr_db / 10.0), l)).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5), 1.0);
        assert_abs_diff_eq!(binary_entropy(1e-3), 0.011_407_757, epsilon = 1e-8);
        assert_eq!(binary_entropy(0.0), 0.0);
        assert_eq!(binary_entropy(1.0), 0.0);
    }

    #[test]
    fn universal_snapshot_information() {
        // 1024 log2(1 + 10/1024) - log2(11), written out independently.
        let oracle = 1024.0 * (1.0 + 10.0 / 1024.0_f64).log2() - 11f64.log2();
        assert_relative_eq!(
            snapshot_info_universal(10.0, 1024),
            oracle,
            max_relative = 1e-12
        );
        assert_abs_diff_eq!(snapshot_info_universal(10.0, 1024), 10.90, epsilon = 5e-3);
        assert_eq!(snapshot_info_universal(10.0, 1), 0.0);
        assert!(snapshot_info_universal(1e-12, 64) < 1e-20);
    }

    #[test]
    fn minkowski_area() {
        let d = 0.5;
        let area = packing_count(d, 2.0, 2.0) * PI * d * d / 4.0;
        assert_abs_diff_eq!(area, 4.0 + 2.0 * 2.0 * 0.5 + PI / 16.0, epsilon = 1e-12);
        assert_abs_diff_eq!(area, 6.19635, epsilon = 1e-5);
        // Small-d asymptote 4 a_y a_z / (pi d^2).
        let d = 1e-4;
        assert_relative_eq!(
            packing_count(d, 2.0, 2.0),
            16.0 / (PI * d * d),
            max_relative = 1e-3
        );
    }

    #[test]
    fn optimal_y_is_stationary() {
        let q = -(1e-3f64).ln();
        assert_abs_diff_eq!(q, 6.90776, epsilon = 1e-5);
        let y = optimal_y(q);
        assert_abs_diff_eq!(y, 7.7941, epsilon = 1e-4);
        assert!((q / (y * y) - (y - q) / y).abs() <= 1e-10);
        for q in [0.01, 1.0, 30.0, 700.0] {
            let y = optimal_y(q);
            assert!((q / (y * y) - (y - q) / y).abs() <= 1e-10 * (1.0 + q));
        }
    }

    #[test]
    fn mainlobe_threshold_value() {
        assert_abs_diff_eq!(
            (1.0f64 / (4.0 * 1e-3 * (1.0 - 1e-3))).ln(),
            5.52246,
            epsilon = 1e-5
        );
        let f = field((64, 16), 10.0, 5);
        let p = f.quadratic_params();
        assert_eq!(p.alpha_max(), p.alpha_y);
        assert_relative_eq!(
            omega_max(&f),
            2.0 * p.kappa * p.alpha_y,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mainlobe_geo_agrees_inside_validity_disk() {
        let mut checked = 0;
        for db in [10.0, 20.0, 30.0] {
            for l in [50, 200, 1000, 4000] {
                let f = field((64, 16), db, l);
                let d_ml = f.necessary_separation_mainlobe(1e-3, l);
                let p = f.quadratic_params();
                let [gy, _] = p.metric();
                // Main-lobe radius lies along y for this array.
                let along_y = crate::array_model::Displacement::new(d_ml, 0.0);
                if !f.in_quadratic_validity(along_y) || gy == 0.0 {
                    continue;
                }
                checked += 1;
                let exact = geo_bound(1e-3, &f, &RaySearch::default()).unwrap().rate;
                let ml = geo_bound_mainlobe(1e-3, &f).unwrap();
                assert_relative_eq!(exact, ml, max_relative = 0.05);
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn geo_bound_shrinks_with_separation() {
        let mut last = f64::INFINITY;
        for d in [0.01, 0.05, 0.2, 1.0, 2.0] {
            let j = packing_count(d, 2.0, 2.0);
            assert!(j < last);
            last = j;
        }
    }

    #[test]
    fn support_bound_ordering() {
        let f = field((16, 8), 20.0, 5);
        let solver = SupportSolver {
            grid_n: 9,
            ..SupportSolver::default()
        };
        let s = info_bound_support(1e-3, &f, &solver).unwrap();
        let u = info_bound_universal(1e-3, &f).unwrap();
        assert!(s.rate <= u);
        assert!(s.c_snap <= s.c_snap_upper);
        assert!(s.converged);
        for w in s.history_bits.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn support_bound_grows_on_nested_grids() {
        let f = field((16, 8), 20.0, 5);
        let mut last = f64::NEG_INFINITY;
        for n in [3, 5, 9, 17] {
            let solver = SupportSolver {
                grid_n: n,
                ..SupportSolver::default()
            };
            let s = info_bound_support(1e-3, &f, &solver).unwrap();
            assert!(s.c_snap >= last - 1e-6, "grid {n}: {} < {last}", s.c_snap);
            last = s.c_snap;
        }
    }

    #[test]
    fn optimal_snapshot_continuous_value() {
        let f = field((64, 16), 10.0, 5);
        let opt = optimal_snapshots(1e-3, &f, &HexOptions::default()).unwrap();
        assert_relative_eq!(
            opt.l_cont,
            1e-3 / opt.xi_h * opt.y_star * opt.y_star.exp(),
            max_relative = 1e-14
        );
        assert!(opt.window.iter().any(|r| r.snapshots == opt.l_int));
        assert!(opt.window.iter().all(|r| r.snapshots >= 1));
        let denser = field((64, 16), 20.0, 5);
        let opt2 = optimal_snapshots(1e-3, &denser, &HexOptions::default()).unwrap();
        assert!(opt2.xi_h > opt.xi_h && opt2.l_cont < opt.l_cont);
    }

    #[test]
    fn report_sandwich_holds() {
        let f = field((64, 16), 15.0, 5);
        let r = bound_report(1e-3, &f, &BoundSettings::default()).unwrap();
        assert!(r.sandwich.holds());
        assert!(r.rate_lower >= 0.0 && r.c_geo >= 0.0 && r.c_geo_mainlobe >= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn entropy_is_symmetric(e in 1e-9f64..0.999_999_999) {
            prop_assert!((binary_entropy(e) - binary_entropy(1.0 - e)).abs() < 1e-12);
        }

        #[test]
        fn universal_bounds_are_nonnegative(db in -20.0f64..40.0, m in 1usize..4096) {
            prop_assert!(snapshot_info_universal(10f64.powf(db / 10.0), m) >= -1e-12);
        }
    }
}
