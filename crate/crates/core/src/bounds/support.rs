//! Grid-restricted maximisation of `log det(I + g Q)` over mixtures of
//! steering outer products, by away-step Frank-Wolfe.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::axis_steering;
use crate::error::{invalid, Result};
use crate::par;

/// Solver knobs for the support-constrained bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSolver {
    /// Grid points per axis (endpoints included).
    pub grid_n: usize,
    pub max_iters: usize,
    /// Stop once the duality gap falls below this many bits.
    pub gap_tol_bits: f64,
}

impl Default for SupportSolver {
    fn default() -> Self {
        Self {
            grid_n: 41,
            max_iters: 2000,
            gap_tol_bits: 1e-6,
        }
    }
}

impl SupportSolver {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return Err(invalid("support.grid_n", "need at least 2 points per axis"));
        }
        if self.max_iters == 0 {
            return Err(invalid("support.max_iters", "must be positive"));
        }
        if !(self.gap_tol_bits > 0.0) {
            return Err(invalid("support.gap_tol_bits", "must be positive"));
        }
        Ok(())
    }
}

/// Raw solver result, objective in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDetOutcome {
    /// `log det(I + g Q)` at the final iterate.
    pub value: f64,
    /// Frank-Wolfe duality gap at the final iterate.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mixture weights over the atoms (y index major).
    pub weights: Vec<f64>,
    /// Objective after every iteration, starting with the initial atom.
    pub history: Vec<f64>,
}

/// Coordinates of one axis' steering vectors in an orthonormal basis of
/// their span; columns follow `offsets`.
pub fn axis_frame(elements: u32, offsets: &[f64], distance: f64) -> DMatrix<Complex64> {
    let m = elements as usize;
    let n = offsets.len();
    let mut a = DMatrix::<Complex64>::zeros(m, n);
    for (p, &u) in offsets.iter().enumerate() {
        for (i, v) in axis_steering(elements, u, distance).into_iter().enumerate() {
            a[(i, p)] = v;
        }
    }
    let frame = &a * a.adjoint();
    let eig = frame.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..m)
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * lmax)
        .collect();
    let basis = DMatrix::from_fn(m, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
    basis.adjoint() * a
}

/// Maximises `log det(I + g sum_k w_k c_k c_k^H)` over the simplex, where
/// `c_k` is the Kronecker product of column `p` of `cy` and column `q` of
/// `cz`, `k = p * cz.ncols() + q`.
pub fn maximize_logdet(
    snr: f64,
    cy: &DMatrix<Complex64>,
    cz: &DMatrix<Complex64>,
    max_iters: usize,
    gap_tol_nats: f64,
) -> LogDetOutcome {
    let (ry, ny) = cy.shape();
    let (rz, nz) = cz.shape();
    let r = ry * rz;
    let atoms = ny * nz;
    let atom = |k: usize| -> DVector<Complex64> {
        let (p, q) = (k / nz, k % nz);
        DVector::from_fn(r, |idx, _| cy[(idx / rz, p)] * cz[(idx % rz, q)])
    };
    let rank_one = |c: &DVector<Complex64>| c * c.adjoint();

    let start = (ny / 2) * nz + nz / 2;
    let mut weights = vec![0.0; atoms];
    weights[start] = 1.0;
    let mut p_mat = rank_one(&atom(start));
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut value;
    let mut gap;

    loop {
        if iterations % 25 == 0 && iterations > 0 {
            p_mat = DMatrix::zeros(r, r);
            for (k, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    p_mat += rank_one(&atom(k)) * Complex64::new(w, 0.0);
                }
            }
        }
        let herm = (&p_mat + p_mat.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = herm.symmetric_eigen();
        let lambda: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        value = lambda.iter().map(|&l| (snr * l).ln_1p()).sum::<f64>();
        history.push(value);

        let v = &eig.eigenvectors;
        let inv_diag = DMatrix::from_diagonal(&DVector::from_iterator(
            r,
            lambda
                .iter()
                .map(|&l| Complex64::new(1.0 / (1.0 + snr * l), 0.0)),
        ));
        let x = v * inv_diag * v.adjoint();
        let grad = gradients(snr, &x, cy, cz);
        let inner: f64 = weights.iter().zip(&grad).map(|(w, g)| w * g).sum();
        let (s, gs) = par::argmax_range(atoms, |k| grad[k]).expect("non-empty grid");
        gap = (gs - inner).max(0.0);
        if gap <= gap_tol_nats {
            converged = true;
            break;
        }
        if iterations >= max_iters {
            break;
        }
        iterations += 1;

        let away = (0..atoms)
            .filter(|&k| weights[k] > 0.0)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]).then(a.cmp(&b)))
            .expect("active set is never empty");
        let away_gap = inner - grad[away];
        let use_away = away_gap > gap && weights[away] < 1.0;

        let line_search = |k_dir: usize, sign: f64, t_max: f64| {
            let c = atom(k_dir);
            let z = v.adjoint() * &c;
            let zsq: Vec<f64> = z.iter().map(|zi| zi.norm_sqr()).collect();
            let phi = |t: f64| {
                let (a, b) = (1.0 - sign * t, sign * t);
                let mut logdet = 0.0;
                let mut quad = 0.0;
                for i in 0..r {
                    let d = 1.0 + snr * a * lambda[i];
                    logdet += d.ln();
                    quad += zsq[i] / d;
                }
                logdet + (1.0 + snr * b * quad).max(f64::MIN_POSITIVE).ln()
            };
            (golden_max(&phi, 0.0, t_max), c)
        };
        let mut step = if use_away {
            let w = weights[away];
            (away, -1.0, w / (1.0 - w))
        } else {
            (s, 1.0, 1.0)
        };
        let (mut t, mut c) = line_search(step.0, step.1, step.2);
        if t == 0.0 && use_away {
            // Ascent along the away direction is below rounding; take a
            // plain Frank-Wolfe step instead.
            step = (s, 1.0, 1.0);
            (t, c) = line_search(s, 1.0, 1.0);
        }
        let (k_dir, sign, t_max) = step;
        let use_away = sign < 0.0;
        if t == 0.0 {
            converged = gap <= 1e3 * gap_tol_nats;
            break;
        }
        let (a, b) = (1.0 - sign * t, sign * t);
        for w in weights.iter_mut() {
            *w *= a;
        }
        weights[k_dir] += b;
        if use_away && t >= t_max {
            weights[k_dir] = 0.0;
        }
        for w in weights.iter_mut() {
            if *w < 1e-300 {
                *w = 0.0;
            }
        }
        p_mat = p_mat * Complex64::new(a, 0.0) + rank_one(&c) * Complex64::new(b, 0.0);
    }
    LogDetOutcome {
        value,
        gap,
        iterations,
        converged,
        weights,
        history,
    }
}

/// `g c_k^H X c_k` for every atom, exploiting the Kronecker structure.
fn gradients(
    snr: f64,
    x: &DMatrix<Complex64>,
    cy: &DMatrix<Complex64>,
    cz: &DMatrix<Complex64>,
) -> Vec<f64> {
    let (ry, ny) = cy.shape();
    let (rz, nz) = cz.shape();
    let rows = par::map_range(ny, |p| {
        // T[a][b] = sum_{i,j} conj(u_i) u_j X[(i,a),(j,b)]
        let u = cy.column(p);
        let mut t = DMatrix::<Complex64>::zeros(rz, rz);
        for i in 0..ry {
            let ui = u[i].conj();
            for j in 0..ry {
                let w = ui * u[j];
                for a in 0..rz {
                    for b in 0..rz {
                        t[(a, b)] += w * x[(i * rz + a, j * rz + b)];
                    }
                }
            }
        }
        (0..nz)
            .map(|q| {
                let v = cz.column(q);
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..rz {
                    let mut row = Complex64::new(0.0, 0.0);
                    for b in 0..rz {
                        row += t[(a, b)] * v[b];
                    }
                    acc += v[a].conj() * row;
                }
                snr * acc.re
            })
            .collect::<Vec<_>>()
    });
    rows.into_iter().flatten().collect()
}

/// Maximiser of a concave function on `[lo, hi]` by golden-section search,
/// compared against both endpoints.
fn golden_max(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if b - a <= 1e-15 * hi.max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let f0 = f(lo);
    [(mid, f(mid)), (hi, f(hi))]
        .into_iter()
        .fold(
            (lo, f0),
            |best, cand| if cand.1 > best.1 { cand } else { best },
        )
        .0
}

/// Evenly spaced grid over `[-extent/2, extent/2]`.
pub fn axis_grid(extent: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|k| -extent / 2.0 + extent * k as f64 / (n - 1) as f64)
        .collect()
}

/// Bits per snapshot `(log det(I + g Q) - log(1 + g)) / ln 2` from an outcome.
pub fn snapshot_bits(outcome: &LogDetOutcome, snr: f64) -> f64 {
    (outcome.value - snr.ln_1p()) / LN_2
}
