//! Uniform planar array geometry, the far-field position-to-angle map and
//! steering vectors.
//!
//! Positions live on the agent plane, a rectangle of size
//! `extent_y x extent_z` centred at distance `distance` on the array broadside.
//! Under the small-angle map `theta = y / D`, `phi = z / D`, the steering
//! phase of element `(m, n)` is `pi * (m * y + n * z) / D`, and the squared
//! correlation of two steering vectors depends only on the displacement
//! between the two positions through a product of two Dirichlet kernels.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Below this magnitude of `sin(pi * delta / 2D)` the Dirichlet kernel is
/// evaluated from its series expansion around the removable singularity.
const SINGULARITY_EPS: f64 = 1e-9;

/// Geometry of the receive UPA.
///
/// Element spacing is always half a wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    /// Elements along y.
    pub m_y: u32,
    /// Elements along z.
    pub m_z: u32,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
}

impl ArrayConfig {
    pub fn new(m_y: u32, m_z: u32, wavelength: f64) -> Result<Self> {
        let array = Self {
            m_y,
            m_z,
            wavelength,
        };
        array.validate()?;
        Ok(array)
    }

    /// Array for a carrier frequency in Hz.
    pub fn from_carrier(m_y: u32, m_z: u32, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(invalid("array.carrier_hz", "must be positive"));
        }
        Self::new(m_y, m_z, SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_y == 0 {
            return Err(invalid("array.m_y", "needs at least one element"));
        }
        if self.m_z == 0 {
            return Err(invalid("array.m_z", "needs at least one element"));
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(invalid("array.wavelength", "must be positive"));
        }
        Ok(())
    }

    /// Total number of elements.
    pub fn elements(&self) -> usize {
        self.m_y as usize * self.m_z as usize
    }

    /// Inter-element spacing, fixed at half a wavelength.
    pub fn spacing(&self) -> f64 {
        0.5 * self.wavelength
    }
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn default_far_field_ratio() -> f64 {
    0.05
}

/// Agent plane geometry, sensing SNR and snapshot budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Distance from the array to the centre of the agent plane, meters.
    pub distance: f64,
    /// Plane extent along y, meters.
    pub extent_y: f64,
    /// Plane extent along z, meters.
    pub extent_z: f64,
    /// Per-snapshot sensing SNR (linear), echo power over noise power.
    pub snr: f64,
    /// Post-matched-filter noise variance.
    pub noise_var: f64,
    /// Snapshots per channel use.
    pub snapshots: u32,
    /// Probing pulse duration in seconds. Only scales bit/s figures.
    pub pulse_duration: f64,
    /// Largest admissible `extent / (2 * distance)` (far-field check).
    #[serde(default = "default_far_field_ratio")]
    pub far_field_ratio: f64,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.distance) {
            return Err(invalid("scene.distance", "must be positive"));
        }
        if !positive(self.extent_y) {
            return Err(invalid("scene.extent_y", "must be positive"));
        }
        if !positive(self.extent_z) {
            return Err(invalid("scene.extent_z", "must be positive"));
        }
        if !(self.snr.is_finite() && self.snr >= 0.0) {
            return Err(invalid("scene.snr", "must be non-negative"));
        }
        if !positive(self.noise_var) {
            return Err(invalid("scene.noise_var", "must be positive"));
        }
        if self.snapshots == 0 {
            return Err(invalid("scene.snapshots", "must be at least 1"));
        }
        if !positive(self.pulse_duration) {
            return Err(invalid("scene.pulse_duration", "must be positive"));
        }
        if !positive(self.far_field_ratio) {
            return Err(invalid("scene.far_field_ratio", "must be positive"));
        }
        let ratio = 0.5 * self.extent_y.max(self.extent_z) / self.distance;
        if ratio > self.far_field_ratio {
            return Err(invalid(
                "scene.extent_y",
                format!(
                    "plane half-extent over distance is {ratio:.4}, above the far-field limit {}",
                    self.far_field_ratio
                ),
            ));
        }
        Ok(())
    }

    /// Echo power `rho^2 = snr * noise_var`.
    pub fn echo_power(&self) -> f64 {
        self.snr * self.noise_var
    }

    pub fn with_snr(mut self, snr: f64) -> Self {
        self.snr = snr;
        self
    }

    pub fn with_snapshots(mut self, snapshots: u32) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn area(&self) -> f64 {
        self.extent_y * self.extent_z
    }

    pub fn diameter(&self) -> f64 {
        self.extent_y.hypot(self.extent_z)
    }

    fn boundary_tol(&self) -> f64 {
        1e-12 * self.extent_y.max(self.extent_z)
    }

    /// Whether `r` lies in the closed agent plane.
    pub fn contains(&self, r: Position) -> bool {
        let tol = self.boundary_tol();
        r.y.abs() <= 0.5 * self.extent_y + tol && r.z.abs() <= 0.5 * self.extent_z + tol
    }
}

/// Echo amplitude `rho` under a free-space radar link budget.
///
/// `tx_energy` is the probing energy per snapshot, `illum_gain` the transmit
/// illumination gain over the plane and `rcs` a nominal radar cross section.
pub fn echo_amplitude_free_space(
    tx_energy: f64,
    illum_gain: f64,
    wavelength: f64,
    rcs: f64,
    distance: f64,
) -> f64 {
    (tx_energy * illum_gain).sqrt() * wavelength * rcs.sqrt()
        / ((4.0 * PI).powf(1.5) * distance * distance)
}

/// Offset of a scatterer from the agent-plane centre, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(y: f64, z: f64) -> Self {
        Self { y, z }
    }

    pub fn offset(self, d: Displacement) -> Position {
        Position::new(self.y + d.dy, self.z + d.dz)
    }
}

impl std::ops::Sub for Position {
    type Output = Displacement;

    fn sub(self, rhs: Position) -> Displacement {
        Displacement::new(self.y - rhs.y, self.z - rhs.z)
    }
}

/// Free displacement vector on the agent plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Displacement {
    pub dy: f64,
    pub dz: f64,
}

impl Displacement {
    pub const fn new(dy: f64, dz: f64) -> Self {
        Self { dy, dz }
    }

    /// Displacement of length `radius` along direction `psi` (radians from +y).
    pub fn polar(radius: f64, psi: f64) -> Self {
        Self::new(radius * psi.cos(), radius * psi.sin())
    }

    pub fn norm(&self) -> f64 {
        self.dy.hypot(self.dz)
    }
}

impl std::ops::Neg for Displacement {
    type Output = Displacement;

    fn neg(self) -> Displacement {
        Displacement::new(-self.dy, -self.dz)
    }
}

/// Angles `(theta, phi)` seen at the array for a plane position.
pub fn position_to_angles(r: Position, scene: &SceneConfig) -> Result<(f64, f64)> {
    if !scene.contains(r) {
        return Err(Error::Domain(format!(
            "position ({}, {}) lies outside the {} x {} m agent plane",
            r.y, r.z, scene.extent_y, scene.extent_z
        )));
    }
    Ok((r.y / scene.distance, r.z / scene.distance))
}

/// Unit-norm array response, ordered `m_y`-major (`index = m * m_z + n`).
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian inner product `self^H other`.
    pub fn inner(&self, other: &SteeringVector) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }
}

/// One-axis steering vector `(1/sqrt(M)) exp(j pi m u / D)` for `m in 0..M`.
pub fn axis_steering(elements: u32, offset: f64, distance: f64) -> Vec<Complex64> {
    let scale = 1.0 / f64::from(elements).sqrt();
    let step = PI * offset / distance;
    (0..elements)
        .map(|m| Complex64::from_polar(scale, step * f64::from(m)))
        .collect()
}

/// Steering vector of a scatterer at `r`, with the small-angle substitutions
/// `sin(theta) cos(phi) -> y / D` and `sin(phi) -> z / D`.
pub fn steering_vector(r: Position, array: &ArrayConfig, scene: &SceneConfig) -> SteeringVector {
    let ay = axis_steering(array.m_y, r.y, scene.distance);
    let az = axis_steering(array.m_z, r.z, scene.distance);
    let mut entries = Vec::with_capacity(array.elements());
    for cy in &ay {
        entries.extend(az.iter().map(|cz| cy * cz));
    }
    SteeringVector(entries)
}

/// Normalised Dirichlet power kernel
/// `|sin(M pi delta / 2D) / (M sin(pi delta / 2D))|^2` of one array axis.
pub fn dirichlet_power(elements: u32, delta: f64, distance: f64) -> f64 {
    let m = f64::from(elements);
    if elements == 1 {
        return 1.0;
    }
    let x = 0.5 * PI * delta / distance;
    let s = x.sin();
    if s.abs() < SINGULARITY_EPS {
        // Near x = k pi: |sin(M x) / sin(x)|^2 ~ M^2 (1 - (M^2 - 1) e^2 / 3), e = x - k pi.
        let e = x - (x / PI).round() * PI;
        return (1.0 - (m * m - 1.0) * e * e / 3.0).clamp(0.0, 1.0);
    }
    let ratio = (m * x).sin() / (m * s);
    (ratio * ratio).min(1.0)
}

/// Squared steering correlation `eta = |a(r)^H a(r + delta)|^2` in closed form.
pub fn steering_correlation_exact(
    delta: Displacement,
    array: &ArrayConfig,
    scene: &SceneConfig,
) -> f64 {
    dirichlet_power(array.m_y, delta.dy, scene.distance)
        * dirichlet_power(array.m_z, delta.dz, scene.distance)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn scene(distance: f64, extent: f64, snr: f64, snapshots: u32) -> SceneConfig {
        SceneConfig {
            distance,
            extent_y: extent,
            extent_z: extent,
            snr,
            noise_var: 1.0,
            snapshots,
            pulse_duration: 1.0,
            far_field_ratio: 0.05,
        }
    }

    fn array(m_y: u32, m_z: u32) -> ArrayConfig {
        ArrayConfig::from_carrier(m_y, m_z, 7e9).unwrap()
    }

    #[test]
    fn angles_are_linear_in_position() {
        let s = scene(100.0, 2.0, 10.0, 5);
        assert_eq!(
            position_to_angles(Position::new(0.0, 0.0), &s).unwrap(),
            (0.0, 0.0)
        );
        let (t, p) = position_to_angles(Position::new(1.0, -1.0), &s).unwrap();
        assert_abs_diff_eq!(t, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(p, -0.01, epsilon = 1e-15);
        let (t, p) = position_to_angles(Position::new(0.5, 0.25), &s).unwrap();
        assert_abs_diff_eq!(t, 0.5 / 100.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.25 / 100.0, epsilon = 1e-15);
    }

    #[test]
    fn positions_off_the_plane_are_rejected() {
        let s = scene(100.0, 2.0, 10.0, 5);
        assert!(matches!(
            position_to_angles(Position::new(1.01, 0.0), &s),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn broadside_steering_is_flat() {
        let a = array(8, 4);
        let v = steering_vector(Position::default(), &a, &scene(100.0, 2.0, 1.0, 1));
        let expected = 1.0 / (32f64).sqrt();
        for c in v.entries() {
            assert_abs_diff_eq!(c.re, expected, epsilon = 1e-15);
            assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_element_phase() {
        let a = array(2, 1);
        let s = scene(100.0, 2.0, 1.0, 1);
        let y = 0.7;
        let v = steering_vector(Position::new(y, 0.0), &a, &s);
        assert_abs_diff_eq!(v.entries()[1].arg(), PI * y / 100.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v.entries()[0].arg(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_special_values() {
        let a = array(64, 16);
        let s = scene(100.0, 2.0, 10.0, 5);
        assert_eq!(
            steering_correlation_exact(Displacement::default(), &a, &s),
            1.0
        );
        let null = Displacement::new(2.0 * 100.0 / 64.0, 0.0);
        assert_abs_diff_eq!(
            steering_correlation_exact(null, &a, &s),
            0.0,
            epsilon = 1e-20
        );
        // Period 2D: back to full correlation.
        let period = Displacement::new(200.0, -400.0);
        assert_abs_diff_eq!(
            steering_correlation_exact(period, &a, &s),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn link_budget_is_positive() {
        let rho = echo_amplitude_free_space(1.0, 10.0, 0.0428, 1.0, 100.0);
        assert!(rho > 0.0 && rho.is_finite());
    }

    proptest! {
        #[test]
        fn steering_vectors_have_unit_norm(y in -1.0f64..1.0, z in -1.0f64..1.0,
                                           my in 1u32..40, mz in 1u32..20) {
            let v = steering_vector(Position::new(y, z), &array(my, mz), &scene(100.0, 2.0, 1.0, 1));
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn kernel_is_even_bounded_and_periodic(dy in -500.0f64..500.0, dz in -500.0f64..500.0) {
            let a = array(64, 16);
            let s = scene(100.0, 2.0, 1.0, 1);
            let d = Displacement::new(dy, dz);
            let eta = steering_correlation_exact(d, &a, &s);
            prop_assert!((0.0..=1.0).contains(&eta));
            prop_assert!((eta - steering_correlation_exact(-d, &a, &s)).abs() < 1e-12);
            let shifted = Displacement::new(dy + 200.0, dz - 200.0);
            prop_assert!((eta - steering_correlation_exact(shifted, &a, &s)).abs() < 1e-9);
        }
    }
}
