//! Monte Carlo simulation of the embodied channel `Y = a(r) h^T + N` with the
//! energy-form maximum-likelihood decoder.
//!
//! Every `(codeword, trial)` pair owns a ChaCha8 stream derived from the
//! master seed, so results do not depend on the thread count.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::array_model::steering_vector;
use crate::codebook::Codebook;
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::reliability_field::ReliabilityField;

/// Normal quantile of the two-sided 95% interval.
pub const Z95: f64 = 1.96;

/// Largest codebook the simulator accepts; bigger codebooks should be
/// thinned with [`select_sub_codebook`].
pub const MAX_SIM_CODEWORDS: usize = 128;

/// One channel use: `M x L` observations and the transmitted index.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBatch {
    pub y: DMatrix<Complex64>,
    pub true_index: usize,
}

/// Circularly symmetric complex Gaussian with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Random stream of one `(codeword, trial)` pair.
pub fn trial_rng(seed: u64, codeword: usize, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((codeword as u64) << 40) | (trial & ((1 << 40) - 1)));
    rng
}

/// Draws `Y = a(r_j) h^T + N`, `h_l ~ CN(0, rho^2)`, `N_ml ~ CN(0, sigma^2)`.
pub fn draw_channel_use(
    cb: &Codebook,
    j: usize,
    seed: u64,
    trial: u64,
    field: &ReliabilityField,
) -> Result<SnapshotBatch> {
    let r = *cb.positions().get(j).ok_or_else(|| {
        Error::Domain(format!(
            "codeword {j} out of range for {} codewords",
            cb.len()
        ))
    })?;
    let (array, scene) = (field.array(), field.scene());
    let a = steering_vector(r, array, scene);
    Ok(draw_with_steering(a.entries(), j, seed, trial, field))
}

fn draw_with_steering(
    a: &[Complex64],
    j: usize,
    seed: u64,
    trial: u64,
    field: &ReliabilityField,
) -> SnapshotBatch {
    let scene = field.scene();
    let l = scene.snapshots as usize;
    let mut rng = trial_rng(seed, j, trial);
    let h: Vec<Complex64> = (0..l)
        .map(|_| complex_gaussian(&mut rng, scene.echo_power()))
        .collect();
    let mut y = DMatrix::<Complex64>::zeros(a.len(), l);
    for c in 0..l {
        for (m, am) in a.iter().enumerate() {
            y[(m, c)] = am * h[c] + complex_gaussian(&mut rng, scene.noise_var);
        }
    }
    SnapshotBatch { y, true_index: j }
}

/// Conjugated steering vectors stacked as rows (`J x M`).
pub fn steering_rows(cb: &Codebook, field: &ReliabilityField) -> DMatrix<Complex64> {
    let (array, scene) = (field.array(), field.scene());
    let m = array.elements();
    let mut rows = DMatrix::<Complex64>::zeros(cb.len(), m);
    for (j, &r) in cb.positions().iter().enumerate() {
        for (i, v) in steering_vector(r, array, scene)
            .entries()
            .iter()
            .enumerate()
        {
            rows[(j, i)] = v.conj();
        }
    }
    rows
}

/// Energy statistics `||Y^H a_j||^2` for every codeword.
pub fn energy_statistics(rows: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> Vec<f64> {
    let g = rows * y;
    g.row_iter()
        .map(|row| row.iter().map(|v| v.norm_sqr()).sum())
        .collect()
}

fn first_argmax(stats: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in stats.iter().enumerate().skip(1) {
        if s > stats[best] {
            best = k;
        }
    }
    best
}

/// Energy-form ML decision `argmax_j a_j^H Y Y^H a_j`; ties go to the
/// lowest index.
pub fn ml_decode(batch: &SnapshotBatch, cb: &Codebook, field: &ReliabilityField) -> usize {
    if cb.len() <= 1 {
        return 0;
    }
    first_argmax(&energy_statistics(&steering_rows(cb, field), &batch.y))
}

/// Reference decoder: minimises `L log det R_j + tr(R_j^-1 Y Y^H)` with
/// `R_j = sigma^2 I + rho^2 a_j a_j^H`, using dense factorisations.
pub fn nll_decode(batch: &SnapshotBatch, cb: &Codebook, field: &ReliabilityField) -> usize {
    let (array, scene) = (field.array(), field.scene());
    let m = array.elements();
    let l = batch.y.ncols() as f64;
    let s = &batch.y * batch.y.adjoint();
    let mut best = (f64::INFINITY, 0);
    for (j, &r) in cb.positions().iter().enumerate() {
        let a = nalgebra::DVector::from_column_slice(steering_vector(r, array, scene).entries());
        let cov = DMatrix::<Complex64>::identity(m, m) * Complex64::new(scene.noise_var, 0.0)
            + &a * a.adjoint() * Complex64::new(scene.echo_power(), 0.0);
        let chol = cov.cholesky().expect("covariance is positive definite");
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
        let trace = chol.solve(&s).trace().re;
        let nll = l * logdet + trace;
        if nll < best.0 {
            best = (nll, j);
        }
    }
    best.1
}

/// Wilson score interval `(centre, halfwidth)` for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.5, 0.5);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (centre, half)
}

/// Lower bound on the equal-prior binary error from `L` snapshots at
/// per-snapshot exponent `b`: `(1 - sqrt(1 - exp(-2 L b))) / 2`.
pub fn binary_error_floor(b: f64, snapshots: u32) -> f64 {
    let x = (-2.0 * f64::from(snapshots) * b).exp();
    0.5 * (1.0 - (1.0 - x).sqrt())
}

/// Empirical and analytic statistics of one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStat {
    pub i: usize,
    pub j: usize,
    /// Fraction of trials under codeword `i` with `stat_j > stat_i`.
    pub empirical_rate: f64,
    /// Fraction of trials under codeword `i` decoded as `j`.
    pub confusion_rate: f64,
    /// `exp(-L B(r_i - r_j))`.
    pub bhatt_bound: f64,
    pub halfwidth: f64,
}

/// Result of [`estimate_errors`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub codewords: usize,
    pub snapshots: u32,
    /// Trials per codeword.
    pub trials: u64,
    pub per_codeword_error: Vec<f64>,
    pub per_codeword_halfwidth: Vec<f64>,
    pub max_error: f64,
    pub max_error_index: usize,
    /// Wilson 95% half-width of the maximum-error codeword.
    pub wilson_halfwidth_95: f64,
    /// `(J - 1) exp(-L B_min)`.
    pub union_bound_prediction: f64,
    /// `sum_{k != j} exp(-L B(r_j - r_k))` per codeword.
    pub per_codeword_union: Vec<f64>,
    pub pairwise: Vec<PairStat>,
}

impl SimReport {
    /// Whether the maximum error respects the union bound up to its half-width.
    pub fn union_bound_holds(&self) -> bool {
        self.max_error <= self.union_bound_prediction + self.wilson_halfwidth_95
    }

    /// Pairs whose empirical rate exceeds the Bhattacharyya bound by more than
    /// the half-width.
    pub fn pairwise_violations(&self) -> Vec<PairStat> {
        self.pairwise
            .iter()
            .filter(|p| p.empirical_rate > p.bhatt_bound + p.halfwidth)
            .copied()
            .collect()
    }

    /// Mean error across codewords (the equal-prior error).
    pub fn mean_error(&self) -> f64 {
        self.per_codeword_error.iter().sum::<f64>() / self.codewords.max(1) as f64
    }
}

/// Runs `trials` channel uses per codeword and tabulates decisions.
pub fn estimate_errors(
    cb: &Codebook,
    trials: u64,
    seed: u64,
    field: &ReliabilityField,
) -> Result<SimReport> {
    if trials < 100 {
        return Err(invalid(
            "simulate.trials",
            "need at least 100 trials per codeword",
        ));
    }
    let j_count = cb.len();
    if j_count == 0 {
        return Err(invalid("codebook", "codebook is empty"));
    }
    if j_count > MAX_SIM_CODEWORDS {
        return Err(invalid(
            "codebook",
            format!(
                "simulation handles at most {MAX_SIM_CODEWORDS} codewords; select a sub-codebook"
            ),
        ));
    }
    let scene = field.scene();
    let rows = steering_rows(cb, field);
    let steering: Vec<Vec<Complex64>> = cb
        .positions()
        .iter()
        .map(|&r| steering_vector(r, field.array(), scene).entries().to_vec())
        .collect();

    let mut confusion = vec![vec![0u64; j_count]; j_count];
    let mut exceed = vec![vec![0u64; j_count]; j_count];
    for j in 0..j_count {
        // (decision, mask of competitors whose statistic beat the true one)
        let outcomes = par::map_range(trials as usize, |t| {
            let batch = draw_with_steering(&steering[j], j, seed, t as u64, field);
            let stats = energy_statistics(&rows, &batch.y);
            let mut mask = 0u128;
            for (k, &s) in stats.iter().enumerate() {
                if k != j && s > stats[j] {
                    mask |= 1 << k;
                }
            }
            (first_argmax(&stats), mask)
        });
        for (decision, mask) in outcomes {
            confusion[j][decision] += 1;
            for (k, row) in exceed[j].iter_mut().enumerate() {
                *row += ((mask >> k) & 1) as u64;
            }
        }
    }

    let l = scene.snapshots;
    let mut per_codeword_error = Vec::with_capacity(j_count);
    let mut per_codeword_halfwidth = Vec::with_capacity(j_count);
    for (j, row) in confusion.iter().enumerate() {
        let errors = trials - row[j];
        per_codeword_error.push(errors as f64 / trials as f64);
        per_codeword_halfwidth.push(wilson_interval(errors, trials, Z95).1);
    }
    let (max_error_index, max_error) = per_codeword_error.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (k, e)| if e > best.1 { (k, e) } else { best },
    );

    let positions = cb.positions();
    let mut pairwise = Vec::with_capacity(j_count * j_count.saturating_sub(1));
    let mut per_codeword_union = vec![0.0; j_count];
    for i in 0..j_count {
        for j in 0..j_count {
            if i == j {
                continue;
            }
            let bound = (-f64::from(l) * field.bhattacharyya(positions[i] - positions[j])).exp();
            per_codeword_union[i] += bound;
            pairwise.push(PairStat {
                i,
                j,
                empirical_rate: exceed[i][j] as f64 / trials as f64,
                confusion_rate: confusion[i][j] as f64 / trials as f64,
                bhatt_bound: bound,
                halfwidth: wilson_interval(exceed[i][j], trials, Z95).1,
            });
        }
    }
    let union_bound_prediction = match cb.min_pairwise_b() {
        Some(b) => (j_count as f64 - 1.0) * (-f64::from(l) * b).exp(),
        None => 0.0,
    };

    Ok(SimReport {
        seed,
        codewords: j_count,
        snapshots: l,
        trials,
        wilson_halfwidth_95: per_codeword_halfwidth[max_error_index],
        per_codeword_error,
        per_codeword_halfwidth,
        max_error,
        max_error_index,
        union_bound_prediction,
        per_codeword_union,
        pairwise,
    })
}

/// Indices of at most `max` codewords: the endpoints of the weakest
/// nearest-neighbour pairs first, then a seeded random fill. Sorted.
pub fn select_sub_codebook(
    cb: &Codebook,
    max: usize,
    seed: u64,
    field: &ReliabilityField,
) -> Vec<usize> {
    let n = cb.len();
    if n <= max {
        return (0..n).collect();
    }
    let pos = cb.positions();
    let nearest = par::map_range(n, |i| {
        (0..n)
            .filter(|&k| k != i)
            .map(|k| (field.bhattacharyya(pos[i] - pos[k]), k))
            .fold(
                (f64::INFINITY, usize::MAX),
                |a, b| if b.0 < a.0 { b } else { a },
            )
    });
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nearest[a].0.total_cmp(&nearest[b].0).then(a.cmp(&b)));
    let mut chosen = std::collections::BTreeSet::new();
    let half = max / 2;
    for &i in &order {
        if chosen.len() + 2 > half.max(2) {
            break;
        }
        chosen.insert(i);
        chosen.insert(nearest[i].1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while chosen.len() < max {
        chosen.insert(rng.random_range(0..n));
    }
    chosen.into_iter().collect()
}
