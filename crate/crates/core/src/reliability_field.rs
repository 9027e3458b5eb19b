//! The sensing-induced Bhattacharyya field `B(delta)`.
//!
//! For two positions whose steering vectors have squared correlation `eta`,
//! the single-snapshot Bhattacharyya distance between the two zero-mean
//! Gaussian sensing laws is
//!
//! ```text
//! B = log[((1 + g/2)^2 - (g^2/4) eta) / (1 + g)] = log(1 + kappa (1 - eta)),
//! kappa = g^2 / (4 (1 + g)),
//! ```
//!
//! and `L` snapshots bound the pairwise error by `exp(-L B)`. All exponents
//! are in nats.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::array_model::{steering_correlation_exact, ArrayConfig, Displacement, SceneConfig};
use crate::error::{invalid, Result};
use crate::par;

/// Curvature constants of the main-lobe quadratic surrogate
/// `B(delta) ~ kappa (alpha_y dy^2 + alpha_z dz^2) = delta^T G_B delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFieldParams {
    pub kappa: f64,
    /// `pi^2 (M_y^2 - 1) / (12 D^2)`, 1/m^2.
    pub alpha_y: f64,
    /// `pi^2 (M_z^2 - 1) / (12 D^2)`, 1/m^2.
    pub alpha_z: f64,
}

impl QuadraticFieldParams {
    pub fn new(array: &ArrayConfig, scene: &SceneConfig) -> Self {
        let axis = |m: u32| {
            let m = f64::from(m);
            PI * PI * (m * m - 1.0) / (12.0 * scene.distance * scene.distance)
        };
        let params = Self {
            kappa: kappa(scene.snr),
            alpha_y: axis(array.m_y),
            alpha_z: axis(array.m_z),
        };
        if params.is_degenerate() {
            log::warn!(
                "{}x{} array has zero curvature along one axis; the forbidden region is unbounded there",
                array.m_y,
                array.m_z
            );
        }
        params
    }

    /// True when one axis has a single element.
    pub fn is_degenerate(&self) -> bool {
        self.alpha_y == 0.0 || self.alpha_z == 0.0
    }

    /// Diagonal of the metric `G_B = kappa diag(alpha_y, alpha_z)`.
    pub fn metric(&self) -> [f64; 2] {
        [self.kappa * self.alpha_y, self.kappa * self.alpha_z]
    }

    /// Diagonal of the whitening transform `T = G_B^(1/2)`.
    pub fn whitening(&self) -> [f64; 2] {
        let [gy, gz] = self.metric();
        [gy.sqrt(), gz.sqrt()]
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_y.max(self.alpha_z)
    }

    /// Quadratic surrogate `delta^T G_B delta`.
    pub fn evaluate(&self, delta: Displacement) -> f64 {
        let [gy, gz] = self.metric();
        gy * delta.dy * delta.dy + gz * delta.dz * delta.dz
    }
}

/// `kappa = g^2 / (4 (1 + g))`.
pub fn kappa(snr: f64) -> f64 {
    snr * snr / (4.0 * (1.0 + snr))
}

/// Pairwise threshold `log(1/eps_p) / L` for a target pairwise error.
pub fn b_req(eps_pair: f64, snapshots: u32) -> f64 {
    -eps_pair.ln() / f64::from(snapshots)
}

/// Codebook threshold `log((J - 1)/eps) / L` of the union-bound condition.
pub fn b_codebook(size: usize, eps: f64, snapshots: u32) -> f64 {
    ((size as f64 - 1.0) / eps).ln() / f64::from(snapshots)
}

/// Necessary pairwise threshold `log(1 / (4 eps (1 - eps))) / (2L)`.
pub fn b_nec(eps: f64, snapshots: u32) -> f64 {
    (1.0 / (4.0 * eps * (1.0 - eps))).ln() / (2.0 * f64::from(snapshots))
}

/// Settings of the ray search for the necessary separation radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaySearch {
    /// Directions sampled uniformly on `[0, pi)`.
    pub rays: usize,
    /// Bisection tolerance in meters.
    pub tol: f64,
}

impl Default for RaySearch {
    fn default() -> Self {
        Self {
            rays: 720,
            tol: 1e-5,
        }
    }
}

/// Outcome of the necessary-separation ray search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NecessarySeparation {
    /// Radius of the largest origin-centred disk inside the necessary
    /// forbidden region. Infinite when no ray crosses the threshold within
    /// the plane diameter.
    pub radius: f64,
    /// Direction (radians) of the limiting ray, if any.
    pub direction: Option<f64>,
    /// Rays on which no crossing was found within the plane diameter.
    pub unbounded_rays: usize,
}

impl NecessarySeparation {
    pub fn is_unbounded(&self) -> bool {
        self.radius.is_infinite()
    }
}

/// Evaluator of the Bhattacharyya field for one array and scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityField {
    array: ArrayConfig,
    scene: SceneConfig,
    kappa: f64,
}

impl ReliabilityField {
    pub fn new(array: ArrayConfig, scene: SceneConfig) -> Result<Self> {
        array.validate()?;
        scene.validate()?;
        Ok(Self {
            array,
            scene,
            kappa: kappa(scene.snr),
        })
    }

    pub fn array(&self) -> &ArrayConfig {
        &self.array
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eta(&self, delta: Displacement) -> f64 {
        steering_correlation_exact(delta, &self.array, &self.scene)
    }

    /// Exact single-snapshot Bhattacharyya distance for a displacement.
    pub fn bhattacharyya(&self, delta: Displacement) -> f64 {
        self.bhattacharyya_from_eta(self.eta(delta))
    }

    pub fn bhattacharyya_from_eta(&self, eta: f64) -> f64 {
        (self.kappa * (1.0 - eta)).ln_1p()
    }

    /// Field value at a Dirichlet null (`eta = 0`), the largest value `B` can take.
    pub fn null_value(&self) -> f64 {
        self.kappa.ln_1p()
    }

    /// Pairwise error bound `exp(-L B(delta))`.
    pub fn pairwise_error_bound(&self, delta: Displacement, snapshots: u32) -> f64 {
        (-f64::from(snapshots) * self.bhattacharyya(delta)).exp()
    }

    pub fn quadratic_params(&self) -> QuadraticFieldParams {
        QuadraticFieldParams::new(&self.array, &self.scene)
    }

    pub fn bhattacharyya_quadratic(&self, delta: Displacement) -> f64 {
        self.quadratic_params().evaluate(delta)
    }

    /// Largest field value for which the quadratic surrogate is declared
    /// accurate to 1%.
    ///
    /// The surrogate drops the `log(1 + u) ~ u` correction (relative error
    /// about `u/2`) and the quartic Dirichlet terms (relative error about
    /// `0.65 u / kappa`). Capping `u` at `0.01 kappa / (1 + kappa)` bounds
    /// both together below 0.7%; the cap never exceeds a tenth of the null
    /// value.
    pub fn quadratic_validity_level(&self) -> f64 {
        let k = self.kappa;
        (0.01 * k / (1.0 + k)).min(0.1 * self.null_value())
    }

    /// Whether the exact field at `delta` lies within the surrogate's
    /// declared validity disk.
    pub fn in_quadratic_validity(&self, delta: Displacement) -> bool {
        self.bhattacharyya(delta) <= self.quadratic_validity_level()
    }

    /// Membership of `delta` in `{B(delta) < threshold}`.
    pub fn forbidden_region_contains(&self, delta: Displacement, threshold: f64) -> bool {
        self.bhattacharyya(delta) < threshold
    }

    /// Radius of the largest origin-centred disk on which `B < b_nec(eps, L)`.
    ///
    /// Each ray is marched outward from the origin until the field reaches
    /// the threshold and the crossing is refined by bisection; the returned
    /// radius is the inner end of the final bracket, minimised over rays.
    pub fn necessary_separation(
        &self,
        eps: f64,
        snapshots: u32,
        search: &RaySearch,
    ) -> Result<NecessarySeparation> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(invalid("eps", "necessary separation needs 0 < eps < 1/2"));
        }
        if search.rays == 0 {
            return Err(invalid("solver.rays", "must be at least 1"));
        }
        if !(search.tol > 0.0) {
            return Err(invalid("solver.ray_tol", "must be positive"));
        }
        let threshold = b_nec(eps, snapshots);
        Ok(self.separation_at(threshold, search))
    }

    /// Ray search against an arbitrary threshold (nats).
    pub fn separation_at(&self, threshold: f64, search: &RaySearch) -> NecessarySeparation {
        let params = self.quadratic_params();
        let limit = self.scene.diameter();
        let radii = par::map_range(search.rays, |k| {
            let psi = PI * k as f64 / search.rays as f64;
            self.ray_crossing(psi, threshold, limit, &params, search.tol)
        });
        let unbounded_rays = radii.iter().filter(|r| r.is_none()).count();
        let best = par::argmin_range(radii.len(), |k| radii[k].unwrap_or(f64::INFINITY))
            .filter(|(_, r)| r.is_finite());
        match best {
            Some((k, radius)) => NecessarySeparation {
                radius,
                direction: Some(PI * k as f64 / search.rays as f64),
                unbounded_rays,
            },
            None => NecessarySeparation {
                radius: f64::INFINITY,
                direction: None,
                unbounded_rays,
            },
        }
    }

    fn ray_crossing(
        &self,
        psi: f64,
        threshold: f64,
        limit: f64,
        params: &QuadraticFieldParams,
        tol: f64,
    ) -> Option<f64> {
        if threshold <= 0.0 {
            return Some(0.0);
        }
        let b = |r: f64| self.bhattacharyya(Displacement::polar(r, psi));
        let (c, s) = (psi.cos(), psi.sin());
        let curvature = params.kappa * (params.alpha_y * c * c + params.alpha_z * s * s);
        let step = if curvature > 0.0 {
            ((threshold / curvature).sqrt() / 8.0).min(limit / 64.0)
        } else {
            limit / 256.0
        };
        let mut lo = 0.0;
        let mut hi = None;
        while lo < limit {
            let next = (lo + step).min(limit);
            if b(next) >= threshold {
                hi = Some(next);
                break;
            }
            lo = next;
        }
        let mut hi = hi?;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if b(mid) >= threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(lo)
    }

    /// Main-lobe approximation
    /// `sqrt(log(1 / (4 eps (1 - eps))) / (2 kappa L alpha_max))`.
    pub fn necessary_separation_mainlobe(&self, eps: f64, snapshots: u32) -> f64 {
        let p = self.quadratic_params();
        (b_nec(eps, snapshots) / (p.kappa * p.alpha_max())).sqrt()
    }
}
