use super::{check_eps, verify_codebook, Codebook};
use crate::array_model::Position;
use crate::error::{invalid, Result};
use crate::reliability_field::{b_codebook, ReliabilityField};

/// Greedy packing over an arbitrary candidate order.
///
/// A candidate joins when its exponent to every accepted point is at least
/// `threshold(J + 1)`, `J` being the current size. Afterwards the most
/// recently accepted points are dropped until the final set satisfies
/// `threshold(J)` for its own size.
pub fn greedy_pack(
    candidates: &[Position],
    field: &ReliabilityField,
    threshold: impl Fn(usize) -> f64,
) -> Vec<Position> {
    let mut accepted: Vec<Position> = Vec::new();
    // Running minimum over accepted pairs, kept per insertion so that
    // trailing removals can restore it.
    let mut running_min: Vec<f64> = Vec::new();
    for &c in candidates {
        let need = threshold(accepted.len() + 1);
        let mut worst = f64::INFINITY;
        let ok = accepted.iter().all(|&a| {
            let b = field.bhattacharyya(c - a);
            worst = worst.min(b);
            b >= need
        });
        if ok {
            let prev = running_min.last().copied().unwrap_or(f64::INFINITY);
            running_min.push(prev.min(worst));
            accepted.push(c);
        }
    }
    while accepted.len() >= 2 && running_min[accepted.len() - 1] < threshold(accepted.len()) {
        accepted.pop();
        running_min.pop();
    }
    accepted
}

/// Greedy baseline: candidates on a square grid of pitch `step` anchored at
/// the `(-a_y/2, -a_z/2)` corner, scanned row by row (y fastest).
pub fn greedy_packing_baseline(eps: f64, field: &ReliabilityField, step: f64) -> Result<Codebook> {
    check_eps(eps)?;
    let scene = field.scene();
    if !(step > 0.0) || !step.is_finite() {
        return Err(invalid("step", "candidate grid pitch must be positive"));
    }
    let axis = |extent: f64| -> Result<Vec<f64>> {
        let n = (extent / step * (1.0 + 1e-12)).floor();
        if n > 1e5 {
            return Err(invalid("step", "candidate grid is too fine"));
        }
        Ok((0..=n as usize)
            .map(|k| -extent / 2.0 + k as f64 * step)
            .collect())
    };
    let ys = axis(scene.extent_y)?;
    let zs = axis(scene.extent_z)?;
    let candidates: Vec<Position> = zs
        .iter()
        .flat_map(|&z| ys.iter().map(move |&y| Position::new(y, z)))
        .filter(|&p| scene.contains(p))
        .collect();
    let l = scene.snapshots;
    let positions = greedy_pack(&candidates, field, |j| b_codebook(j, eps, l));
    let mut cb = Codebook::new(positions, field)?;
    if verify_codebook(&cb, eps, field)?.feasible {
        cb.set_verified(Some(eps));
    }
    Ok(cb)
}
