//! Embodied codebooks: finite sets of scatterer positions on the agent plane,
//! their exact reliability verification and the constructions that produce
//! them.

mod greedy;
mod hexagonal;
mod lattice;
mod sweep;

use std::io::{BufRead, Write};

use serde::Serialize;

pub use greedy::{greedy_pack, greedy_packing_baseline};
pub use hexagonal::{
    hexagonal_design, hexagonal_size_fixed_point, hexagonal_size_lambert, transformed_area,
    HexDesign, HexOptions, HexSizing,
};
pub use lattice::{truncate_lattice, LatticeGenerator};
pub use sweep::{rate_sweep, SweepPoint, SweepSettings};

use crate::array_model::Position;
use crate::csvfmt;
use crate::error::{Error, Result};
use crate::par;
use crate::reliability_field::{b_codebook, ReliabilityField};

/// The weakest pair of a codebook under the exact field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakestPair {
    pub i: usize,
    pub j: usize,
    /// `B(r_i - r_j)` in nats.
    pub b: f64,
}

/// A list of admissible scatterer positions.
///
/// `min_pair` is evaluated with the field the codebook was built against.
/// Duplicated positions are accepted (imported files may carry them) and show
/// up as a weakest pair with `b = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    positions: Vec<Position>,
    min_pair: Option<WeakestPair>,
    verified_epsilon: Option<f64>,
}

impl Codebook {
    pub fn new(positions: Vec<Position>, field: &ReliabilityField) -> Result<Self> {
        if let Some((k, r)) = positions
            .iter()
            .enumerate()
            .find(|(_, r)| !field.scene().contains(**r))
        {
            return Err(Error::Domain(format!(
                "codeword {k} at ({}, {}) lies outside the agent plane",
                r.y, r.z
            )));
        }
        let min_pair = weakest_pair(&positions, field);
        Ok(Self {
            positions,
            min_pair,
            verified_epsilon: None,
        })
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Minimum pairwise exponent, `None` for fewer than two codewords.
    pub fn min_pairwise_b(&self) -> Option<f64> {
        self.min_pair.map(|p| p.b)
    }

    pub fn weakest_pair(&self) -> Option<WeakestPair> {
        self.min_pair
    }

    /// Target error for which the codebook passed exact verification.
    pub fn verified_epsilon(&self) -> Option<f64> {
        self.verified_epsilon
    }

    pub(crate) fn set_verified(&mut self, eps: Option<f64>) {
        self.verified_epsilon = eps;
    }

    /// Codebook restricted to the given indices (in the given order).
    pub fn subset(&self, indices: &[usize], field: &ReliabilityField) -> Result<Self> {
        let positions = indices
            .iter()
            .map(|&k| {
                self.positions.get(k).copied().ok_or_else(|| {
                    Error::Domain(format!(
                        "index {k} out of range for {} codewords",
                        self.len()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(positions, field)
    }

    /// Writes `index,y_m,z_m` rows, preceded by `header` as `#` comment lines.
    pub fn write_csv<W: Write>(&self, mut out: W, header: &str) -> std::io::Result<()> {
        for line in header.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "index,y_m,z_m")?;
        for (k, r) in self.positions.iter().enumerate() {
            writeln!(out, "{k},{},{}", csvfmt::num(r.y), csvfmt::num(r.z))?;
        }
        Ok(())
    }
}

/// Reads positions from the CSV layout written by [`Codebook::write_csv`].
///
/// Comment lines (`#`) and blank lines are skipped; the header row is
/// required, and indices must run `0, 1, 2, ...`.
pub fn read_codebook_csv<R: BufRead>(input: R) -> Result<Vec<Position>> {
    let mut positions = Vec::new();
    let mut seen_header = false;
    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !seen_header {
            if trimmed.replace(' ', "") != "index,y_m,z_m" {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected header `index,y_m,z_m`, found `{trimmed}`"),
                });
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parse_err = |reason: String| Error::Parse {
            line: line_no,
            reason,
        };
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 fields, found {}",
                fields.len()
            )));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad index `{}`", fields[0])))?;
        if index != positions.len() {
            return Err(parse_err(format!(
                "index {index} out of sequence, expected {}",
                positions.len()
            )));
        }
        let coord = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("bad coordinate `{s}`")))
        };
        positions.push(Position::new(coord(fields[1])?, coord(fields[2])?));
    }
    if !seen_header {
        return Err(Error::Parse {
            line: 0,
            reason: "missing header row".into(),
        });
    }
    Ok(positions)
}

/// Exact reliability verdict of a codebook for a target maximum error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignReport {
    /// Codebook size `J`.
    pub j: usize,
    /// `log2(J) / L`.
    pub rate_bits_per_pulse: f64,
    /// `log2(J) / (L T_p)`.
    pub rate_bits_per_second: f64,
    /// Whether the union-bound condition `B_min >= log((J-1)/eps)/L` holds.
    pub feasible: bool,
    /// `B_min - B_J`; absent for `J < 2`.
    pub slack_nats: Option<f64>,
    pub b_min: Option<f64>,
    /// Codebook threshold `B_J`; absent for `J < 2`.
    pub b_threshold: Option<f64>,
    pub weakest_pair: Option<WeakestPair>,
    /// Union-bound value `(J - 1) exp(-L B_min)`.
    pub union_bound: f64,
}

/// Re-evaluates the union-bound condition from scratch with the exact field.
pub fn verify_codebook(cb: &Codebook, eps: f64, field: &ReliabilityField) -> Result<DesignReport> {
    check_eps(eps)?;
    let j = cb.len();
    let scene = field.scene();
    let l = f64::from(scene.snapshots);
    if j < 2 {
        return Ok(DesignReport {
            j,
            rate_bits_per_pulse: 0.0,
            rate_bits_per_second: 0.0,
            feasible: true,
            slack_nats: None,
            b_min: None,
            b_threshold: None,
            weakest_pair: None,
            union_bound: 0.0,
        });
    }
    let weakest = weakest_pair(cb.positions(), field).expect("at least two codewords");
    let threshold = b_codebook(j, eps, scene.snapshots);
    let slack = weakest.b - threshold;
    let rate = (j as f64).log2() / l;
    Ok(DesignReport {
        j,
        rate_bits_per_pulse: rate,
        rate_bits_per_second: rate / scene.pulse_duration,
        feasible: slack >= 0.0,
        slack_nats: Some(slack),
        b_min: Some(weakest.b),
        b_threshold: Some(threshold),
        weakest_pair: Some(weakest),
        union_bound: (j as f64 - 1.0) * (-l * weakest.b).exp(),
    })
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(crate::error::invalid(
            "eps",
            "target error must lie in (0, 1)",
        ))
    }
}

/// Weakest pair by exhaustive search; rows are scanned in parallel and the
/// reduction is exact, so the result does not depend on scheduling.
pub(crate) fn weakest_pair(
    positions: &[Position],
    field: &ReliabilityField,
) -> Option<WeakestPair> {
    let n = positions.len();
    if n < 2 {
        return None;
    }
    let rows = par::map_range(n - 1, |i| {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in i + 1..n {
            let b = field.bhattacharyya(positions[i] - positions[j]);
            if b < best.0 {
                best = (b, j);
            }
        }
        best
    });
    let (i, b) = par::argmin_range(rows.len(), |i| rows[i].0)?;
    Some(WeakestPair { i, j: rows[i].1, b })
}

/// True when every pair clears `threshold`; stops at the first violation.
pub(crate) fn all_pairs_clear(
    positions: &[Position],
    field: &ReliabilityField,
    threshold: f64,
) -> bool {
    let n = positions.len();
    let violations = par::map_range(n.saturating_sub(1), |i| {
        (i + 1..n).any(|j| field.bhattacharyya(positions[i] - positions[j]) < threshold)
    });
    !violations.into_iter().any(|v| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::tests::scene;
    use crate::array_model::ArrayConfig;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn field(snr: f64, snapshots: u32, extent: f64) -> ReliabilityField {
        let array = ArrayConfig::from_carrier(64, 16, 7e9).unwrap();
        ReliabilityField::new(array, scene(100.0, extent, snr, snapshots)).unwrap()
    }

    /// Two codewords one Dirichlet null apart along y (needs a wide plane).
    fn null_pair(f: &ReliabilityField) -> Codebook {
        let half = 100.0 / 64.0;
        Codebook::new(vec![Position::new(-half, 0.0), Position::new(half, 0.0)], f).unwrap()
    }

    #[test]
    fn null_pair_needs_six_snapshots() {
        let f5 = field(10.0, 5, 10.0);
        let r5 = verify_codebook(&null_pair(&f5), 1e-3, &f5).unwrap();
        assert_abs_diff_eq!(r5.b_threshold.unwrap(), 1.38155, epsilon = 1e-5);
        assert_abs_diff_eq!(r5.b_min.unwrap(), (36.0f64 / 11.0).ln(), epsilon = 1e-12);
        assert!(!r5.feasible);
        assert_abs_diff_eq!(r5.slack_nats.unwrap(), -0.195927, epsilon = 1e-6);

        let f6 = field(10.0, 6, 10.0);
        let r6 = verify_codebook(&null_pair(&f6), 1e-3, &f6).unwrap();
        assert_abs_diff_eq!(r6.b_threshold.unwrap(), 1.15129, epsilon = 1e-5);
        assert!(r6.feasible);
        assert_abs_diff_eq!(r6.rate_bits_per_pulse, 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn duplicates_are_infeasible() {
        let f = field(100.0, 5, 2.0);
        let p = Position::new(0.2, 0.1);
        let cb = Codebook::new(vec![p, Position::new(-0.9, 0.9), p], &f).unwrap();
        assert_eq!(cb.min_pairwise_b(), Some(0.0));
        let r = verify_codebook(&cb, 1e-3, &f).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.b_min, Some(0.0));
    }

    #[test]
    fn tiny_codebooks_are_trivially_feasible() {
        let f = field(10.0, 5, 2.0);
        for positions in [vec![], vec![Position::default()]] {
            let cb = Codebook::new(positions, &f).unwrap();
            let r = verify_codebook(&cb, 1e-3, &f).unwrap();
            assert!(r.feasible);
            assert_eq!(r.rate_bits_per_pulse, 0.0);
            assert_eq!(r.slack_nats, None);
        }
    }

    #[test]
    fn rejects_positions_off_the_plane() {
        let f = field(10.0, 5, 2.0);
        assert!(Codebook::new(vec![Position::new(0.0, 1.5)], &f).is_err());
        assert!(verify_codebook(&Codebook::new(vec![], &f).unwrap(), 1.5, &f).is_err());
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(read_codebook_csv("0,1,2\n".as_bytes()).is_err());
        assert!(read_codebook_csv("index,y_m,z_m\n1,0,0\n".as_bytes()).is_err());
        assert!(read_codebook_csv("index,y_m,z_m\n0,zero,0\n".as_bytes()).is_err());
        let ok = read_codebook_csv("# hi\nindex,y_m,z_m\n\n0,0.5,-0.25\n".as_bytes()).unwrap();
        assert_eq!(ok, vec![Position::new(0.5, -0.25)]);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(coords in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 0..20)) {
            let f = field(10.0, 5, 2.0);
            let positions: Vec<_> = coords.iter().map(|&(y, z)| Position::new(y, z)).collect();
            let cb = Codebook::new(positions.clone(), &f).unwrap();
            let mut buf = Vec::new();
            cb.write_csv(&mut buf, "seed = 1\nline two").unwrap();
            prop_assert_eq!(read_codebook_csv(buf.as_slice()).unwrap(), positions);
        }

        #[test]
        fn weakest_pair_matches_brute_force(coords in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..25)) {
            let f = field(30.0, 5, 2.0);
            let positions: Vec<_> = coords.iter().map(|&(y, z)| Position::new(y, z)).collect();
            let mut brute = f64::INFINITY;
            for i in 0..positions.len() {
                for j in 0..positions.len() {
                    if i != j {
                        brute = brute.min(f.bhattacharyya(positions[i] - positions[j]));
                    }
                }
            }
            let w = weakest_pair(&positions, &f).unwrap();
            prop_assert!((w.b - brute).abs() <= 1e-15 * (1.0 + brute));
            prop_assert_eq!(all_pairs_clear(&positions, &f, brute), true);
            prop_assert_eq!(all_pairs_clear(&positions, &f, brute * (1.0 + 1e-9) + 1e-300), false);
        }
    }
}
