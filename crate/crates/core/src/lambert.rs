//! Principal branch of the Lambert-W function.

use std::f64::consts::E;

use crate::error::{Error, Result};

const BRANCH_POINT: f64 = -1.0 / E;

/// `W0(x)`: the solution `w >= -1` of `w e^w = x`, for `x >= -1/e`.
///
/// Starts from a branch-point series near `-1/e`, `log1p` for moderate
/// arguments and the asymptotic `L1 - L2 + L2/L1` expansion for large ones,
/// then polishes with Halley steps.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < BRANCH_POINT {
        return Err(Error::Domain(format!(
            "lambert_w0 is defined for x >= -1/e, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let mut w = initial_guess(x);
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(1e-300) {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.32 {
        // Series in p = sqrt(2 (e x + 1)) around the branch point.
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p() * (1.0 - x.ln_1p().ln_1p() / (2.0 + x.ln_1p()))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Plain Newton iteration on `w e^w - x` from a bracketing start,
    /// independent of the Halley path above.
    fn newton_oracle(x: f64) -> f64 {
        let mut w = if x > 1.0 { x.ln() } else { 0.5 };
        for _ in 0..200 {
            let ew = w.exp();
            w -= (w * ew - x) / (ew * (w + 1.0));
        }
        w
    }

    #[test]
    fn special_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lambert_w0(E).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lambert_w0(1.0).unwrap(), 0.567_143_290_4, epsilon = 1e-10);
        assert_abs_diff_eq!(
            lambert_w0(1.0).unwrap(),
            newton_oracle(1.0),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(lambert_w0(BRANCH_POINT).unwrap(), -1.0, epsilon = 1e-7);
    }

    #[test]
    fn rejects_below_branch_point() {
        assert!(lambert_w0(-0.5).is_err());
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn identity_on_log_grid() {
        for k in 0..=1000 {
            let x = 10f64.powf(-6.0 + 12.0 * k as f64 / 1000.0);
            let w = lambert_w0(x).unwrap();
            assert!((w * w.exp() - x).abs() <= 1e-10 * x.max(1.0), "x = {x}");
        }
    }

    proptest! {
        #[test]
        fn identity_near_branch_point(t in 1e-12f64..1.0) {
            let x = BRANCH_POINT + t * (0.5 - BRANCH_POINT);
            let w = lambert_w0(x).unwrap();
            prop_assert!(w >= -1.0);
            prop_assert!((w * w.exp() - x).abs() <= 1e-10 * x.abs().max(1.0));
        }

        #[test]
        fn monotone(a in 0.0f64..1e8, b in 0.0f64..1e8) {
            prop_assume!(a < b);
            prop_assert!(lambert_w0(a).unwrap() <= lambert_w0(b).unwrap());
        }
    }
}
