//! Spectral treatment of the linear limit dynamics.
//!
//! Grid functions are moved to weighted coordinates `f̃ = W^{1/2} f` so that the
//! Euclidean inner product equals the `L²(μ)` one; the integral operator with
//! kernel `K` then becomes the matrix `W^{1/2} K W^{1/2}`. For the PINN system the
//! observation block is scaled by `1/√M` in the same spirit.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{contract_err, Error, Result};
use crate::kernel::PinnBlocks;

pub const DEFAULT_NULL_TOL: f64 = 1e-10;
/// Asymmetry above which assembly is considered broken.
pub const ASYMMETRY_ERROR: f64 = 1e-6;
/// Asymmetry above which a warning is emitted.
pub const ASYMMETRY_WARN: f64 = 1e-8;
/// Null-mode energy fraction above which limit solutions are flagged.
pub const NULL_ENERGY_WARN: f64 = 1e-6;

/// `max |K − Kᵀ| / max |K|`, zero for the zero matrix.
pub fn relative_asymmetry(k: &DMatrix<f64>) -> f64 {
    let scale = k.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (k - k.transpose()).amax() / scale
}

fn symmetrized(k: DMatrix<f64>, limit: f64) -> Result<DMatrix<f64>> {
    let asym = relative_asymmetry(&k);
    if asym > limit {
        return Err(Error::AssemblyInconsistency { asymmetry: asym, tolerance: limit });
    }
    if asym > ASYMMETRY_WARN {
        log::warn!("symmetrising a matrix with relative asymmetry {asym:.3e}");
    }
    Ok((&k + k.transpose()) * 0.5)
}

/// `M = W^{1/2} K W^{1/2}`, averaged with its transpose.
pub fn weighted_symmetrize(k: &DMatrix<f64>, weights: &[f64]) -> Result<DMatrix<f64>> {
    if !k.is_square() || k.nrows() != weights.len() {
        return contract_err("kernel matrix and weights have inconsistent sizes");
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return contract_err("quadrature weights must be positive");
    }
    let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let m = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| sq[i] * k[(i, j)] * sq[j]);
    symmetrized(m, ASYMMETRY_ERROR)
}

pub fn to_weighted(f: &[f64], weights: &[f64]) -> Vec<f64> {
    f.iter().zip(weights).map(|(v, w)| v * w.sqrt()).collect()
}

pub fn from_weighted(f: &[f64], weights: &[f64]) -> Vec<f64> {
    f.iter().zip(weights).map(|(v, w)| v / w.sqrt()).collect()
}

/// Eigenpairs sorted by descending eigenvalue, split into positive and null modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in weighted coordinates.
    eigenvectors: DMatrix<f64>,
    tau: f64,
    positive: usize,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k).iter().copied().collect()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of positive modes; they come first.
    pub fn positive_count(&self) -> usize {
        self.positive
    }

    pub fn is_null(&self, k: usize) -> bool {
        k >= self.positive
    }

    /// Smallest positive eigenvalue, if any.
    pub fn smallest_positive(&self) -> Option<f64> {
        self.positive.checked_sub(1).map(|k| self.eigenvalues[k])
    }

    /// `Vᵀ x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (self.eigenvectors.transpose() * DVector::from_column_slice(x)).iter().copied().collect()
    }

    /// `V h`.
    pub fn synthesize(&self, h: &[f64]) -> Vec<f64> {
        (&self.eigenvectors * DVector::from_column_slice(h)).iter().copied().collect()
    }
}

/// Full symmetric eigendecomposition with null classification `λ ≤ τ λ₁`.
pub fn spectral_decompose(m: &DMatrix<f64>, tau: f64) -> Result<SpectralDecomposition> {
    if !m.is_square() {
        return contract_err("matrix must be square");
    }
    if !(tau >= 0.0) {
        return contract_err("null tolerance must be nonnegative");
    }
    let asym = relative_asymmetry(m);
    if asym > ASYMMETRY_ERROR {
        return Err(Error::AssemblyInconsistency { asymmetry: asym, tolerance: ASYMMETRY_ERROR });
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = DMatrix::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        // fixed sign: largest-magnitude entry positive
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().copied().fold(0.0f64, |p, v| if v.abs() > p.abs() { v } else { p });
        let s = if pivot < 0.0 { -1.0 } else { 1.0 };
        eigenvectors.set_column(dst, &(col * s));
    }
    let lambda_max = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let threshold = tau * lambda_max;
    if let Some(&low) = eigenvalues.last() {
        if low < -threshold {
            return Err(Error::PsdViolation { eigenvalue: low, threshold });
        }
    }
    let positive = eigenvalues.iter().take_while(|&&l| l > threshold).count();
    Ok(SpectralDecomposition { eigenvalues, eigenvectors, tau, positive })
}

/// `h^i = ⟨W^{1/2} r, ε̃_i⟩`.
pub fn residual_projections(r: &[f64], decomp: &SpectralDecomposition, weights: &[f64]) -> Result<Vec<f64>> {
    if r.len() != decomp.len() || weights.len() != decomp.len() {
        return contract_err("residual, weights and decomposition differ in size");
    }
    Ok(decomp.project(&to_weighted(r, weights)))
}

/// Grid function with coefficients `h`.
pub fn reconstruct(h: &[f64], decomp: &SpectralDecomposition, weights: &[f64]) -> Vec<f64> {
    from_weighted(&decomp.synthesize(h), weights)
}

/// `h^i e^{−λ_i t}` on positive modes, null coefficients frozen.
pub fn evolve_residual_spectral(h0: &[f64], decomp: &SpectralDecomposition, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return contract_err(format!("evolution time must be nonnegative, got {t}"));
    }
    if h0.len() != decomp.len() {
        return contract_err("coefficient vector has the wrong length");
    }
    Ok(h0
        .iter()
        .enumerate()
        .map(|(k, h)| if decomp.is_null(k) { *h } else { h * (-decomp.eigenvalues[k] * t).exp() })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    Euler,
    Rk4,
}

/// Explicit time stepping of `dr̃/dt = −M r̃` in weighted coordinates.
pub fn evolve_residual_euler(r0: &[f64], m: &DMatrix<f64>, dt: f64, horizon: f64, stepper: Stepper) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return contract_err("time step must be positive and horizon nonnegative");
    }
    let steps = (horizon / dt).round() as usize;
    let h = if steps == 0 { 0.0 } else { horizon / steps as f64 };
    Ok(step_snapshots(r0, m, h, &[steps], stepper)?.pop().expect("one snapshot"))
}

/// States after each requested number of steps of size `h` (ascending step counts).
pub fn step_snapshots(r0: &[f64], m: &DMatrix<f64>, h: f64, at: &[usize], stepper: Stepper) -> Result<Vec<Vec<f64>>> {
    if r0.len() != m.nrows() || !m.is_square() {
        return contract_err("residual and matrix differ in size");
    }
    if at.windows(2).any(|w| w[0] > w[1]) {
        return contract_err("snapshot steps must be ascending");
    }
    let mut r = DVector::from_column_slice(r0);
    let n0 = r.norm();
    let mut k1 = DVector::zeros(r.len());
    let (mut k2, mut k3, mut k4, mut tmp) = (k1.clone(), k1.clone(), k1.clone(), k1.clone());
    let mut out = Vec::with_capacity(at.len());
    let mut done = 0;
    for &target in at {
        while done < target {
            match stepper {
                Stepper::Euler => {
                    k1.gemv(1.0, m, &r, 0.0);
                    r.axpy(-h, &k1, 1.0);
                }
                Stepper::Rk4 => {
                    k1.gemv(-1.0, m, &r, 0.0);
                    tmp.copy_from(&r);
                    tmp.axpy(h / 2.0, &k1, 1.0);
                    k2.gemv(-1.0, m, &tmp, 0.0);
                    tmp.copy_from(&r);
                    tmp.axpy(h / 2.0, &k2, 1.0);
                    k3.gemv(-1.0, m, &tmp, 0.0);
                    tmp.copy_from(&r);
                    tmp.axpy(h, &k3, 1.0);
                    k4.gemv(-1.0, m, &tmp, 0.0);
                    r.axpy(h / 6.0, &k1, 1.0);
                    r.axpy(h / 3.0, &k2, 1.0);
                    r.axpy(h / 3.0, &k3, 1.0);
                    r.axpy(h / 6.0, &k4, 1.0);
                }
            }
            done += 1;
            let n = r.norm();
            if !n.is_finite() || n > 10.0 * n0 {
                return Err(Error::StepSize { growth: n / n0 });
            }
        }
        out.push(r.iter().copied().collect());
    }
    Ok(out)
}

/// Share of `‖r₀‖²` carried by null modes; zero for `‖r₀‖ < 1e-14`.
pub fn null_projection_check(r0: &[f64], decomp: &SpectralDecomposition, weights: &[f64]) -> Result<f64> {
    let h = residual_projections(r0, decomp, weights)?;
    Ok(null_fraction(&h, decomp))
}

fn null_fraction(h: &[f64], decomp: &SpectralDecomposition) -> f64 {
    let total: f64 = h.iter().map(|v| v * v).sum();
    if total.sqrt() < 1e-14 {
        return 0.0;
    }
    h[decomp.positive_count()..].iter().fold(0.0, |a, v| a + v * v) / total
}

/// `∫_0^t h^k e^{−λ_k s} ds` on positive modes, zero on null modes.
fn integrated_coefficients(h0: &[f64], decomp: &SpectralDecomposition, t: f64) -> Vec<f64> {
    h0.iter()
        .enumerate()
        .map(|(k, h)| {
            if decomp.is_null(k) {
                0.0
            } else {
                let l = decomp.eigenvalues[k];
                h * -(-l * t).exp_m1() / l
            }
        })
        .collect()
}

/// Residual-limit network on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSolution {
    /// Initial coefficients `h₀^k` of `r₀` in the eigenbasis.
    pub h0: Vec<f64>,
    /// Values of `Q_t` at the grid nodes.
    pub values: Vec<f64>,
    pub null_fraction: f64,
    /// Set when `r₀` carries more than `NULL_ENERGY_WARN` of its energy in null modes.
    pub null_warning: bool,
}

/// `h₀` and `∫_0^t r̃_s ds` (weighted coordinates, positive modes only).
pub fn time_integrated_residual(
    decomp: &SpectralDecomposition,
    weights: &[f64],
    r0: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t >= 0.0) {
        return contract_err(format!("evolution time must be nonnegative, got {t}"));
    }
    let h0 = residual_projections(r0, decomp, weights)?;
    let integral = decomp.synthesize(&integrated_coefficients(&h0, decomp, t));
    Ok((h0, integral))
}

/// `Q_t = −𝒰 ∫_0^t r_s ds` from `Q_0 = 0`, using only positive modes.
///
/// `u_h[(i, j)] = U(x_i, y_j)` for grid nodes `x_i` and arbitrary evaluation
/// points `y_j`; passing `D^y_α U` instead yields `D_α Q_t`. `r0 = A Q_0 − g = −g`
/// on the grid. `t` may be infinite.
pub fn limit_solution_q(
    decomp: &SpectralDecomposition,
    u_h: &DMatrix<f64>,
    weights: &[f64],
    r0: &[f64],
    t: f64,
) -> Result<LimitSolution> {
    let (h0, integral) = time_integrated_residual(decomp, weights, r0, t)?;
    let values = apply_kernel(u_h, weights, &integral).iter().map(|v| -v).collect();
    let nf = null_fraction(&h0, decomp);
    if nf > NULL_ENERGY_WARN {
        log::warn!("initial residual has {nf:.3e} of its energy in null modes");
    }
    Ok(LimitSolution { h0, values, null_fraction: nf, null_warning: nf > NULL_ENERGY_WARN })
}

/// `(𝒦 f)(y_j) = Σ_i √ω_i f̃_i K(x_i, y_j)` for `f̃` in weighted coordinates.
pub fn apply_kernel(k: &DMatrix<f64>, weights: &[f64], f_weighted: &[f64]) -> Vec<f64> {
    (0..k.ncols())
        .map(|j| (0..k.nrows()).map(|i| weights[i].sqrt() * f_weighted[i] * k[(i, j)]).sum())
        .collect()
}

/// PINN block operator in joint weighted coordinates, before symmetrisation.
///
/// Grid residuals are scaled by `√ω_i`, observation residuals by `1/√M`.
pub fn assemble_v_raw(s_h: &DMatrix<f64>, blocks: &PinnBlocks, weights: &[f64]) -> Result<DMatrix<f64>> {
    let m = weights.len();
    let n_obs = blocks.b_obs.nrows();
    if s_h.shape() != (m, m)
        || blocks.b_obs.shape() != (n_obs, n_obs)
        || blocks.ubar.shape() != (n_obs, m)
        || blocks.a_b.shape() != (m, n_obs)
    {
        return contract_err("PINN blocks are dimensionally inconsistent");
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return contract_err("quadrature weights must be positive");
    }
    let sq: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let so = (n_obs as f64).sqrt();
    Ok(DMatrix::from_fn(m + n_obs, m + n_obs, |r, c| match (r < m, c < m) {
        (true, true) => sq[r] * s_h[(r, c)] * sq[c],
        (true, false) => sq[r] * blocks.a_b[(r, c - m)] / so,
        (false, true) => blocks.ubar[(r - m, c)] * sq[c] / so,
        (false, false) => blocks.b_obs[(r - m, c - m)] / n_obs as f64,
    }))
}

/// Symmetric PINN block operator; without observations this is the weighted `S`.
pub fn assemble_v(s_h: &DMatrix<f64>, blocks: Option<&PinnBlocks>, weights: &[f64]) -> Result<DMatrix<f64>> {
    match blocks {
        None => weighted_symmetrize(s_h, weights),
        Some(b) => symmetrized(assemble_v_raw(s_h, b, weights)?, ASYMMETRY_WARN),
    }
}

/// `λ_min / λ_max` of a symmetric matrix; zero for the zero matrix.
pub fn min_eigenvalue_ratio(m: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= 0.0 {
        if lo < 0.0 { f64::NEG_INFINITY } else { 0.0 }
    } else {
        lo / hi
    }
}

/// Joint weighted vector `(W^{1/2} r, e/√M)`.
pub fn combine_residuals(r: &[f64], e: &[f64], weights: &[f64]) -> Vec<f64> {
    let so = (e.len() as f64).sqrt();
    to_weighted(r, weights).into_iter().chain(e.iter().map(|v| v / so)).collect()
}

/// Inverse of [`combine_residuals`].
pub fn split_residuals(z: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = weights.len();
    let so = ((z.len() - m) as f64).sqrt();
    (from_weighted(&z[..m], weights), z[m..].iter().map(|v| v * so).collect())
}

/// Spectral evolution of the joint residual under `V`.
pub fn evolve_pinn(z0: &[f64], decomp: &SpectralDecomposition, t: f64) -> Result<Vec<f64>> {
    let h = evolve_residual_spectral(&decomp.project(z0), decomp, t)?;
    Ok(decomp.synthesize(&h))
}

/// `Q_t = −𝒰 ∫ r_s ds − ℬ ∫ e_s ds` from the joint weighted residual `z0`.
///
/// `u_eval[(i, j)] = U(x_i, y_j)` over grid nodes, `b_eval[(k, j)] = B(x^obs_k, y_j)`.
pub fn pinn_limit_solution(
    decomp: &SpectralDecomposition,
    u_eval: &DMatrix<f64>,
    b_eval: &DMatrix<f64>,
    weights: &[f64],
    z0: &[f64],
    t: f64,
) -> Result<LimitSolution> {
    if !(t >= 0.0) {
        return contract_err(format!("evolution time must be nonnegative, got {t}"));
    }
    let (m, n_obs) = (weights.len(), b_eval.nrows());
    if z0.len() != decomp.len() || z0.len() != m + n_obs || b_eval.ncols() != u_eval.ncols() || u_eval.nrows() != m {
        return contract_err("joint residual or evaluation kernels have inconsistent sizes");
    }
    let h0 = decomp.project(z0);
    let integral = decomp.synthesize(&integrated_coefficients(&h0, decomp, t));
    let from_grid = apply_kernel(u_eval, weights, &integral[..m]);
    let so = (n_obs as f64).sqrt();
    let values = (0..u_eval.ncols())
        .map(|j| {
            let obs: f64 = (0..n_obs).map(|k| b_eval[(k, j)] * integral[m + k] / so).sum();
            -(from_grid[j] + obs)
        })
        .collect();
    let nf = null_fraction(&h0, decomp);
    Ok(LimitSolution { h0, values, null_fraction: nf, null_warning: nf > NULL_ENERGY_WARN })
}

/// CSV of `(index, eigenvalue, null_flag)`.
pub fn write_spectrum_csv(path: &Path, decomp: &SpectralDecomposition) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "eigenvalue", "null_flag"])?;
    for (k, l) in decomp.eigenvalues.iter().enumerate() {
        w.serialize((k, l, decomp.is_null(k)))?;
    }
    w.flush()?;
    Ok(())
}

/// CSV of `(t, mode, h_t)` for the leading `top_k` modes.
pub fn write_mode_trajectory_csv(
    path: &Path,
    h0: &[f64],
    decomp: &SpectralDecomposition,
    times: &[f64],
    top_k: usize,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,mode,h")?;
    for &t in times {
        let h = evolve_residual_spectral(h0, decomp, t)?;
        for (k, v) in h.iter().enumerate().take(top_k) {
            writeln!(f, "{t},{k},{v:.17e}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi rotations; eigenvalues in descending order.
    pub(crate) fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mut a = m.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
            if off.sqrt() <= 1e-15 * a.norm() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)] == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose()
    }

    #[test]
    fn symmetrize_examples() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 4.0]);
        assert_eq!(weighted_symmetrize(&k, &[0.25, 0.25]).unwrap(), k.clone() / 4.0);
        let id = DMatrix::<f64>::identity(3, 3);
        let diag = weighted_symmetrize(&id, &[0.2, 0.3, 0.5]).unwrap();
        assert!((diag - DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.3, 0.5]))).amax() < 1e-15);
        let one = DMatrix::from_element(1, 1, 3.0);
        assert_eq!(weighted_symmetrize(&one, &[1.0]).unwrap()[(0, 0)], 3.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.9, 1.0]);
        assert!(matches!(weighted_symmetrize(&bad, &[0.5, 0.5]), Err(Error::AssemblyInconsistency { .. })));
        assert!(weighted_symmetrize(&k, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn decompose_examples() {
        let z = spectral_decompose(&DMatrix::zeros(3, 3), DEFAULT_NULL_TOL).unwrap();
        assert_eq!(z.positive_count(), 0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 3.0]));
        let s = spectral_decompose(&d, DEFAULT_NULL_TOL).unwrap();
        assert_eq!(s.eigenvalues(), &[3.0, 1.0, 0.0]);
        assert_eq!(s.positive_count(), 2);
        assert!(s.is_null(2));
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1e-3]));
        assert!(matches!(spectral_decompose(&neg, DEFAULT_NULL_TOL), Err(Error::PsdViolation { .. })));
    }

    #[test]
    fn eigenvalues_agree_with_jacobi() {
        let m = random_psd(12, 12, 3);
        let s = spectral_decompose(&m, DEFAULT_NULL_TOL).unwrap();
        for (a, b) in s.eigenvalues().iter().zip(jacobi_eigenvalues(&m)) {
            assert_relative_eq!(*a, b, epsilon = 1e-12, max_relative = 1e-10);
        }
        let vtv = s.eigenvectors().transpose() * s.eigenvectors();
        assert!((vtv - DMatrix::identity(12, 12)).amax() < 1e-10);
    }

    #[test]
    fn projections_examples() {
        let m = random_psd(6, 4, 5);
        let w = [0.1, 0.2, 0.15, 0.25, 0.2, 0.1];
        let s = spectral_decompose(&m, DEFAULT_NULL_TOL).unwrap();
        assert_eq!(s.positive_count(), 4);
        let r = reconstruct(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0], &s, &w);
        let h = residual_projections(&r, &s, &w).unwrap();
        for (k, v) in h.iter().enumerate() {
            assert_relative_eq!(*v, if k == 1 { 1.0 } else { 0.0 }, epsilon = 1e-12);
        }
        assert!(residual_projections(&[0.0; 6], &s, &w).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(null_projection_check(&r, &s, &w).unwrap(), h[4..].iter().map(|v| v * v).sum::<f64>() / h.iter().map(|v| v * v).sum::<f64>());
        assert!(null_projection_check(&r, &s, &w).unwrap() < 1e-20);
        let rn = reconstruct(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], &s, &w);
        assert_relative_eq!(null_projection_check(&rn, &s, &w).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(null_projection_check(&[0.0; 6], &s, &w).unwrap(), 0.0);
    }

    #[test]
    fn spectral_evolution_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0]));
        let s = spectral_decompose(&d, DEFAULT_NULL_TOL).unwrap();
        assert_eq!(evolve_residual_spectral(&[2.0], &s, 0.0).unwrap(), vec![2.0]);
        assert_relative_eq!(evolve_residual_spectral(&[1.0], &s, 2f64.ln()).unwrap()[0], 0.5, epsilon = 1e-15);
        assert!(evolve_residual_spectral(&[1.0], &s, -1.0).is_err());
    }

    #[test]
    fn euler_matches_spectral() {
        let m = random_psd(5, 5, 8) * 0.3;
        let s = spectral_decompose(&m, DEFAULT_NULL_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r0: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = s.synthesize(&evolve_residual_spectral(&s.project(&r0), &s, 1.0).unwrap());
        let euler = evolve_residual_euler(&r0, &m, 1e-4, 1.0, Stepper::Euler).unwrap();
        let rk4 = evolve_residual_euler(&r0, &m, 1e-2, 1.0, Stepper::Rk4).unwrap();
        let n = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = |x: &[f64]| x.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / n;
        assert!(err(&euler) < 1e-3);
        assert!(err(&rk4) < 1e-8);
        assert_eq!(evolve_residual_euler(&[0.0; 5], &m, 1e-2, 1.0, Stepper::Euler).unwrap(), vec![0.0; 5]);
        assert_eq!(evolve_residual_euler(&r0, &DMatrix::zeros(5, 5), 1e-2, 1.0, Stepper::Euler).unwrap(), r0);
        assert!(matches!(evolve_residual_euler(&r0, &(m * 1e3), 1.0, 10.0, Stepper::Euler), Err(Error::StepSize { .. })));
    }

    #[test]
    fn limit_solution_at_zero_time_vanishes() {
        let m = random_psd(4, 4, 2);
        let w = [0.25; 4];
        let s = spectral_decompose(&weighted_symmetrize(&m, &w).unwrap(), DEFAULT_NULL_TOL).unwrap();
        let l = limit_solution_q(&s, &m, &w, &[1.0, -1.0, 0.5, 0.0], 0.0).unwrap();
        assert!(l.values.iter().all(|v| *v == 0.0));
        let inf = limit_solution_q(&s, &m, &w, &[1.0, -1.0, 0.5, 0.0], f64::INFINITY).unwrap();
        assert!(inf.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn v_degenerate_blocks() {
        let s = random_psd(3, 3, 4);
        let w = [0.2, 0.3, 0.5];
        assert_eq!(assemble_v(&s, None, &w).unwrap(), weighted_symmetrize(&s, &w).unwrap());
        let zero = PinnBlocks {
            b_obs: DMatrix::zeros(2, 2),
            ubar: DMatrix::zeros(2, 3),
            a_b: DMatrix::zeros(3, 2),
            b_grid: DMatrix::zeros(2, 3),
        };
        assert_eq!(assemble_v(&DMatrix::zeros(3, 3), Some(&zero), &w).unwrap(), DMatrix::zeros(5, 5));
    }

    proptest! {
        #[test]
        fn parseval_and_semigroup(seed in 0u64..1000, t1 in 0.0f64..3.0, t2 in 0.0f64..3.0) {
            let m = random_psd(7, 5, seed);
            let w: Vec<f64> = (1..=7).map(|k| k as f64 / 28.0).collect();
            let s = spectral_decompose(&weighted_symmetrize(&m, &w).unwrap(), DEFAULT_NULL_TOL).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let r: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = residual_projections(&r, &s, &w).unwrap();
            let norm2: f64 = r.iter().zip(&w).map(|(v, w)| w * v * v).sum();
            prop_assert!((h.iter().map(|v| v * v).sum::<f64>() - norm2).abs() <= 1e-10 * norm2.max(1.0));
            let a = evolve_residual_spectral(&h, &s, t1 + t2).unwrap();
            let b = evolve_residual_spectral(&evolve_residual_spectral(&h, &s, t1).unwrap(), &s, t2).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300) + 1e-300);
            }
        }
    }
}
