//! Single-hidden-layer approximator `Q(x) = η(x) · N^{-β} Σ_i c_i σ(w_i·x + b_i)`
//! with closed-form spatial, parameter and mixed derivatives.
//!
//! Parameter vectors are laid out as all `c`, then `w` row-major (`N × d`), then
//! all `b`. Per-unit feature vectors (used by the kernels) are laid out as
//! `(c, w_1..w_d, b)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::domain::AuxiliaryEta;
use crate::error::{config_err, contract_err, Result};
use crate::jet::Jet2;
use crate::operator::OperatorSpec;

/// Bounded smooth activation with closed-form derivatives through order four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    /// Unbounded test surrogate `σ(z) = z`.
    #[cfg(test)]
    #[serde(skip)]
    Linear,
}

impl Activation {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => config_err(format!("unknown activation '{other}' (expected tanh or sigmoid)")),
        }
    }

    /// `[σ, σ', σ'', σ''', σ'''']` at `z`.
    #[inline]
    pub fn derivatives(&self, z: f64) -> [f64; 5] {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, (6.0 * t * t - 2.0) * s, 8.0 * t * s * (2.0 - 3.0 * t * t)]
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                let d1 = s * (1.0 - s);
                let u = 1.0 - 2.0 * s;
                [s, d1, d1 * u, d1 * (1.0 - 6.0 * s + 6.0 * s * s), d1 * u * (1.0 - 12.0 * s + 12.0 * s * s)]
            }
            #[cfg(test)]
            Activation::Linear => [z, 1.0, 0.0, 0.0, 0.0],
        }
    }

    /// Sampled suprema `sup |σ^{(k)}|`, `k = 0..=4`, over `[-50, 50]`.
    pub fn derivative_bounds(&self) -> [f64; 5] {
        let mut sup = [0.0f64; 5];
        let n = 200_001;
        for i in 0..n {
            let z = -50.0 + 100.0 * i as f64 / (n - 1) as f64;
            for (s, v) in sup.iter_mut().zip(self.derivatives(z)) {
                *s = s.max(v.abs());
            }
        }
        sup
    }

    /// `C⁴_b` and non-constancy checks.
    pub fn validate(&self) -> Result<()> {
        let sup = self.derivative_bounds();
        let far = self.derivatives(1e6).iter().chain(&self.derivatives(-1e6)).any(|v| !v.is_finite() || v.abs() > 1e3);
        if far || sup.iter().any(|s| !s.is_finite() || *s > 1e3) {
            return config_err(format!("activation {self:?} does not have bounded derivatives through order 4"));
        }
        if self.derivatives(1.0)[0] == self.derivatives(0.0)[0] {
            return config_err(format!("activation {self:?} is constant"));
        }
        Ok(())
    }
}

/// The fixed, non-trainable parts of a network: cut-off and activation.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub eta: AuxiliaryEta,
    pub act: Activation,
}

/// Initialisation law: `c ~ U[-K0, K0]`, `w, b ~ N(0, std²)` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    pub c_bound: f64,
    pub w_std: f64,
    pub b_std: f64,
}

impl Default for InitDistribution {
    fn default() -> Self {
        Self { c_bound: 1.0, w_std: 1.0, b_std: 1.0 }
    }
}

impl InitDistribution {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_bound > 0.0 && self.w_std > 0.0 && self.b_std > 0.0) {
            return config_err("initialisation scales must be positive");
        }
        Ok(())
    }

    /// One unit `(c, w, b)`; `w` is written into `w_out`.
    pub fn sample_unit<R: rand::Rng + ?Sized>(&self, rng: &mut R, w_out: &mut [f64]) -> (f64, f64) {
        let c = Uniform::new_inclusive(-self.c_bound, self.c_bound).sample(rng);
        let wn = Normal::new(0.0, self.w_std).expect("positive std");
        for w in w_out.iter_mut() {
            *w = wn.sample(rng);
        }
        let b = Normal::new(0.0, self.b_std).expect("positive std").sample(rng);
        (c, b)
    }
}

/// Network parameters `θ = (c, w, b)` stored as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    theta: Vec<f64>,
    width: usize,
    dim: usize,
    beta: f64,
}

impl NetworkParams {
    pub fn new(c: Vec<f64>, w: Vec<f64>, b: Vec<f64>, dim: usize, beta: f64) -> Result<Self> {
        let n = c.len();
        if n == 0 || dim == 0 || w.len() != n * dim || b.len() != n {
            return contract_err(format!(
                "inconsistent parameter arrays: |c| = {n}, |w| = {}, |b| = {}, d = {dim}",
                w.len(),
                b.len()
            ));
        }
        let mut theta = c;
        theta.extend(w);
        theta.extend(b);
        Self::from_theta(theta, n, dim, beta)
    }

    pub fn from_theta(theta: Vec<f64>, width: usize, dim: usize, beta: f64) -> Result<Self> {
        if !(beta > 0.5 && beta < 1.0) {
            return config_err(format!("beta must lie in (1/2, 1), got {beta}"));
        }
        if width == 0 || theta.len() != (dim + 2) * width {
            return contract_err("parameter vector length must equal (d + 2) N");
        }
        Ok(Self { theta, width, dim, beta })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `N^{-β}`.
    pub fn scale(&self) -> f64 {
        (self.width as f64).powf(-self.beta)
    }

    /// Learning rate `N^{2β-1}`.
    pub fn learning_rate(&self) -> f64 {
        (self.width as f64).powf(2.0 * self.beta - 1.0)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), self.theta.len());
        Self { theta, ..*self }
    }

    pub fn c(&self) -> &[f64] {
        &self.theta[..self.width]
    }

    pub fn w(&self) -> &[f64] {
        &self.theta[self.width..self.width * (1 + self.dim)]
    }

    pub fn b(&self) -> &[f64] {
        &self.theta[self.width * (1 + self.dim)..]
    }

    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w()[i * self.dim..(i + 1) * self.dim]
    }

    /// Positions of unit `i`'s entries in the flat vector, in `(c, w.., b)` order.
    fn scatter_index(&self, i: usize, slot: usize) -> usize {
        let (n, d) = (self.width, self.dim);
        if slot == 0 {
            i
        } else if slot <= d {
            n + i * d + (slot - 1)
        } else {
            n * (1 + d) + i
        }
    }
}

/// Draws `N` i.i.d. units; deterministic given the seed.
pub fn init_params(width: usize, dim: usize, dist: &InitDistribution, beta: f64, seed: u64) -> Result<NetworkParams> {
    if width == 0 {
        return contract_err("network width must be at least 1");
    }
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Vec::with_capacity(width);
    let mut w = vec![0.0; width * dim];
    let mut b = Vec::with_capacity(width);
    for i in 0..width {
        let (ci, bi) = dist.sample_unit(&mut rng, &mut w[i * dim..(i + 1) * dim]);
        c.push(ci);
        b.push(bi);
    }
    NetworkParams::new(c, w, b, dim, beta)
}

#[derive(Debug, Clone)]
struct OpContext {
    a: Vec<f64>,
    /// `A[f]` per prefactor.
    applied: Vec<f64>,
    /// `q_j = Σ_i (a_ij + a_ji) ∂_i f + b_j f` per prefactor, row-major `(d+1) × d`.
    q: Vec<f64>,
}

/// Point-dependent data shared by all units: the prefactors `η, η x_1, …, η x_d`
/// and, optionally, the operator frozen at the point.
///
/// Every parameter-derivative entry of the network is `scale · coeff · f(x) · g(w·x + b)`
/// with `f` a prefactor and `g ∈ {σ, σ'}`, so the operator acts on it through
///
/// `A[f g(z)] = g(z) A[f] + g'(z) q·w + g''(z) f wᵀ a w`.
#[derive(Debug, Clone)]
pub struct PointContext {
    x: Vec<f64>,
    prefactors: Vec<Jet2>,
    op: Option<OpContext>,
}

impl PointContext {
    pub fn new(x: &[f64], eta: &AuxiliaryEta, op: Option<&OperatorSpec>) -> Self {
        let d = x.len();
        let e = eta.jet(x);
        let mut prefactors = Vec::with_capacity(d + 1);
        prefactors.push(e.clone());
        for k in 0..d {
            let mut gradient = e.gradient.iter().map(|g| g * x[k]).collect::<Vec<_>>();
            gradient[k] += e.value;
            let mut hessian = e.hessian.iter().map(|h| h * x[k]).collect::<Vec<_>>();
            for i in 0..d {
                hessian[i * d + k] += e.gradient[i];
                hessian[k * d + i] += e.gradient[i];
            }
            prefactors.push(Jet2 { value: e.value * x[k], gradient, hessian });
        }
        let op = op.map(|op| {
            let at = op.at(x);
            let applied = prefactors.iter().map(|f| at.apply(f)).collect();
            let mut q = vec![0.0; (d + 1) * d];
            for (p, f) in prefactors.iter().enumerate() {
                for j in 0..d {
                    let mut s = at.b[j] * f.value;
                    for i in 0..d {
                        s += (at.a[i * d + j] + at.a[j * d + i]) * f.gradient[i];
                    }
                    q[p * d + j] = s;
                }
            }
            OpContext { a: at.a, applied, q }
        });
        Self { x: x.to_vec(), prefactors, op }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn point(&self) -> &[f64] {
        &self.x
    }

    /// `η, η x_1, …, η x_d` as second-order jets.
    pub fn prefactors(&self) -> &[Jet2] {
        &self.prefactors
    }

    pub fn eta_value(&self) -> f64 {
        self.prefactors[0].value
    }

    #[inline]
    fn preact(&self, w: &[f64], b: f64) -> f64 {
        w.iter().zip(&self.x).map(|(a, x)| a * x).sum::<f64>() + b
    }

    /// `scale · ∇_{(c,w,b)} A[η c σ(w·x+b)]` written into `out` (length `d + 2`).
    /// Returns `scale · A[η σ(w·x+b)]`, the `c`-entry.
    #[inline]
    pub fn op_entries(&self, act: Activation, c: f64, w: &[f64], b: f64, scale: f64, out: &mut [f64]) -> f64 {
        let op = self.op.as_ref().expect("point context built without an operator");
        let d = self.dim();
        let s = act.derivatives(self.preact(w, b));
        let mut waw = 0.0;
        for i in 0..d {
            for j in 0..d {
                waw += w[i] * op.a[i * d + j] * w[j];
            }
        }
        let apply = |p: usize, g0: f64, g1: f64, g2: f64| -> f64 {
            let qw: f64 = op.q[p * d..(p + 1) * d].iter().zip(w).map(|(q, w)| q * w).sum();
            g0 * op.applied[p] + g1 * qw + g2 * self.prefactors[p].value * waw
        };
        let c_entry = scale * apply(0, s[0], s[1], s[2]);
        out[0] = c_entry;
        for k in 0..d {
            out[1 + k] = scale * c * apply(1 + k, s[1], s[2], s[3]);
        }
        out[d + 1] = scale * c * apply(0, s[1], s[2], s[3]);
        c_entry
    }

    /// `scale · ∇_{(c,w,b)} [η c σ(w·x+b)]`. Returns the `c`-entry.
    #[inline]
    pub fn value_entries(&self, act: Activation, c: f64, w: &[f64], b: f64, scale: f64, out: &mut [f64]) -> f64 {
        let d = self.dim();
        let s = act.derivatives(self.preact(w, b));
        let c_entry = scale * self.prefactors[0].value * s[0];
        out[0] = c_entry;
        for k in 0..d {
            out[1 + k] = scale * c * self.prefactors[1 + k].value * s[1];
        }
        out[d + 1] = scale * c * self.prefactors[0].value * s[1];
        c_entry
    }

    /// Spatial jets of the `d + 2` parameter-derivative entries of one unit.
    pub fn jet_entries(&self, act: Activation, c: f64, w: &[f64], b: f64, scale: f64) -> Vec<Jet2> {
        let d = self.dim();
        let s = act.derivatives(self.preact(w, b));
        let product = |f: &Jet2, g: [f64; 3], k: f64| -> Jet2 {
            let mut gradient = vec![0.0; d];
            let mut hessian = vec![0.0; d * d];
            for i in 0..d {
                gradient[i] = k * (f.gradient[i] * g[0] + f.value * g[1] * w[i]);
                for j in 0..d {
                    hessian[i * d + j] = k
                        * (f.hess(i, j) * g[0]
                            + (f.gradient[i] * w[j] + f.gradient[j] * w[i]) * g[1]
                            + f.value * g[2] * w[i] * w[j]);
                }
            }
            Jet2 { value: k * f.value * g[0], gradient, hessian }
        };
        let mut out = Vec::with_capacity(d + 2);
        out.push(product(&self.prefactors[0], [s[0], s[1], s[2]], scale));
        for k in 0..d {
            out.push(product(&self.prefactors[1 + k], [s[1], s[2], s[3]], scale * c));
        }
        out.push(product(&self.prefactors[0], [s[1], s[2], s[3]], scale * c));
        out
    }
}

/// Fills `∇_θ A Q(x)` and returns `A Q(x)`.
pub fn fill_op_gradient(params: &NetworkParams, ctx: &PointContext, act: Activation, out: &mut [f64]) -> f64 {
    fill_with(params, out, |c, w, b, s, unit| ctx.op_entries(act, c, w, b, s, unit))
}

/// Fills `∇_θ Q(x)` and returns `Q(x)`.
pub fn fill_value_gradient(params: &NetworkParams, ctx: &PointContext, act: Activation, out: &mut [f64]) -> f64 {
    fill_with(params, out, |c, w, b, s, unit| ctx.value_entries(act, c, w, b, s, unit))
}

fn fill_with(
    params: &NetworkParams,
    out: &mut [f64],
    mut entries: impl FnMut(f64, &[f64], f64, f64, &mut [f64]) -> f64,
) -> f64 {
    let (n, d) = (params.width(), params.dim());
    assert_eq!(out.len(), (d + 2) * n);
    let scale = params.scale();
    let (cs, ws, bs) = (params.c(), params.w(), params.b());
    let mut unit = vec![0.0; d + 2];
    let mut total = 0.0;
    for i in 0..n {
        let c_entry = entries(cs[i], &ws[i * d..(i + 1) * d], bs[i], scale, &mut unit);
        total += cs[i] * c_entry;
        out[i] = unit[0];
        out[n..n * (1 + d)][i * d..(i + 1) * d].copy_from_slice(&unit[1..=d]);
        out[n * (1 + d) + i] = unit[d + 1];
    }
    total
}

/// Jet of `Q(x)`.
pub fn eval_jet(params: &NetworkParams, eta: &AuxiliaryEta, act: Activation, x: &[f64]) -> Jet2 {
    let d = params.dim();
    let scale = params.scale();
    let mut inner = Jet2::zero(d);
    for i in 0..params.width() {
        let w = params.w_row(i);
        let z = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + params.b()[i];
        let s = act.derivatives(z);
        let c = scale * params.c()[i];
        inner.value += c * s[0];
        for p in 0..d {
            inner.gradient[p] += c * s[1] * w[p];
            for q in 0..d {
                inner.hessian[p * d + q] += c * s[2] * w[p] * w[q];
            }
        }
    }
    eta.jet(x).mul(&inner)
}

/// `∇_θ Q(x)`.
pub fn param_gradient(params: &NetworkParams, eta: &AuxiliaryEta, act: Activation, x: &[f64]) -> Vec<f64> {
    let ctx = PointContext::new(x, eta, None);
    let mut out = vec![0.0; params.len()];
    fill_value_gradient(params, &ctx, act, &mut out);
    out
}

/// `∇_θ A Q(x)`, the operator applied in `x` to each entry of `∇_θ Q`.
pub fn param_gradient_of_aq(
    params: &NetworkParams,
    eta: &AuxiliaryEta,
    act: Activation,
    op: &OperatorSpec,
    x: &[f64],
) -> Vec<f64> {
    let ctx = PointContext::new(x, eta, Some(op));
    let mut out = vec![0.0; params.len()];
    fill_op_gradient(params, &ctx, act, &mut out);
    out
}

/// Spatial jets of every entry of `∇_θ Q(x)`, in parameter order.
pub fn param_gradient_jets(params: &NetworkParams, eta: &AuxiliaryEta, act: Activation, x: &[f64]) -> Vec<Jet2> {
    let ctx = PointContext::new(x, eta, None);
    let d = params.dim();
    let mut out = vec![Jet2::zero(d); params.len()];
    for i in 0..params.width() {
        let jets = ctx.jet_entries(act, params.c()[i], params.w_row(i), params.b()[i], params.scale());
        for (slot, j) in jets.into_iter().enumerate() {
            out[params.scatter_index(i, slot)] = j;
        }
    }
    out
}

/// `D_α ∇_θ Q(x)` for a multi-index with `|α| ≤ 2`.
pub fn mixed_param_space_derivative(
    params: &NetworkParams,
    eta: &AuxiliaryEta,
    act: Activation,
    x: &[f64],
    alpha: &[usize],
) -> Result<Vec<f64>> {
    if alpha.len() != params.dim() {
        return contract_err(format!("multi-index {alpha:?} has the wrong arity"));
    }
    if alpha.iter().sum::<usize>() > 2 {
        return contract_err(format!("multi-index {alpha:?} has order above 2"));
    }
    Ok(param_gradient_jets(params, eta, act, x)
        .iter()
        .map(|j| j.partial(alpha).expect("order checked"))
        .collect())
}

/// Smooth clipping: identity on `[-T, T]`, `T + T tanh((v - T)/T)` above, odd.
///
/// `C²` at `±T`, increasing, slope at most one, bounded by `2T`.
/// An infinite threshold disables clipping.
#[inline]
pub fn smooth_clip(v: f64, threshold: f64) -> f64 {
    let t = threshold;
    if v.abs() <= t {
        v
    } else {
        v.signum() * (t + t * ((v.abs() - t) / t).tanh())
    }
}

/// Derivative of [`smooth_clip`] in `v`.
pub fn smooth_clip_derivative(v: f64, threshold: f64) -> f64 {
    if v.abs() <= threshold {
        1.0
    } else {
        let th = ((v.abs() - threshold) / threshold).tanh();
        1.0 - th * th
    }
}

pub fn clip_vector(v: &[f64], threshold: f64) -> Vec<f64> {
    v.iter().map(|&x| smooth_clip(x, threshold)).collect()
}

/// `N^γ` for any real exponent.
pub fn clip_threshold(width: usize, exponent: f64) -> f64 {
    (width as f64).powf(exponent)
}

/// Clipping exponents: residual threshold `N^δ`, gradient threshold `N^{ε−β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClippingSpec {
    pub beta: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for ClippingSpec {
    fn default() -> Self {
        Self { beta: 0.6, delta: 0.05, epsilon: 0.12 }
    }
}

impl ClippingSpec {
    pub fn new(beta: f64, delta: f64, epsilon: f64) -> Result<Self> {
        let s = Self { beta, delta, epsilon };
        s.validate()?;
        Ok(s)
    }

    /// `ε > δ > 0`, `β ∈ (1/2, 1)`, `ε + δ < (1 − β)/2`.
    pub fn validate(&self) -> Result<()> {
        let Self { beta, delta, epsilon } = *self;
        if !(beta > 0.5 && beta < 1.0) {
            return config_err(format!("beta must lie in (1/2, 1), got {beta}"));
        }
        if !(epsilon > delta && delta > 0.0) {
            return config_err(format!("need epsilon > delta > 0, got epsilon = {epsilon}, delta = {delta}"));
        }
        if epsilon + delta >= (1.0 - beta) / 2.0 {
            return config_err(format!(
                "need epsilon + delta < (1 - beta)/2 = {}, got {}",
                (1.0 - beta) / 2.0,
                epsilon + delta
            ));
        }
        Ok(())
    }

    pub fn thresholds(&self, width: usize) -> ClipThresholds {
        ClipThresholds {
            residual: clip_threshold(width, self.delta),
            gradient: clip_threshold(width, self.epsilon - self.beta),
        }
    }

    /// Exponent of the per-component deviation bound, `β + δ + ε − 1`.
    pub fn deviation_exponent(&self) -> f64 {
        self.beta + self.delta + self.epsilon - 1.0
    }
}

/// Concrete thresholds for the residual (`ψ`) and the gradient entries (`φ`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipThresholds {
    pub residual: f64,
    pub gradient: f64,
}

impl ClipThresholds {
    pub fn inactive() -> Self {
        Self { residual: f64::INFINITY, gradient: f64::INFINITY }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{boundary_samples, DomainSpec, default_eta};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_params(n: usize, d: usize, seed: u64) -> NetworkParams {
        let mut p = init_params(n, d, &InitDistribution::default(), 0.6, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for t in p.theta_mut() {
            *t += 0.3 * rng.gen::<f64>();
        }
        p
    }

    #[test]
    fn init_is_bounded_and_deterministic() {
        let d = InitDistribution::default();
        let p = init_params(1000, 2, &d, 0.6, 9).unwrap();
        assert!(p.c().iter().all(|c| c.abs() <= 1.0));
        let mean: f64 = p.c().iter().sum::<f64>() / 1000.0;
        assert!(mean.abs() < 3.0 / 1000f64.sqrt());
        assert_eq!(p, init_params(1000, 2, &d, 0.6, 9).unwrap());
        assert_ne!(p, init_params(1000, 2, &d, 0.6, 10).unwrap());
    }

    #[test]
    fn gaussian_third_absolute_moment() {
        let n = 100_000;
        let p = init_params(n, 1, &InitDistribution::default(), 0.6, 3).unwrap();
        let cubes: Vec<f64> = p.w().iter().map(|w| w.abs().powi(3)).collect();
        let mean = cubes.iter().sum::<f64>() / n as f64;
        let var = cubes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - exact).abs() < 4.0 * (var / n as f64).sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn params_validate_beta_and_shapes() {
        assert!(NetworkParams::new(vec![1.0], vec![0.0], vec![0.0], 1, 0.5).is_err());
        assert!(NetworkParams::new(vec![1.0], vec![0.0, 1.0], vec![0.0], 1, 0.6).is_err());
        assert!(init_params(0, 1, &InitDistribution::default(), 0.6, 0).is_err());
    }

    #[test]
    fn activations_are_valid() {
        Activation::Tanh.validate().unwrap();
        Activation::Sigmoid.validate().unwrap();
        assert!(Activation::Linear.validate().is_err());
        assert!(Activation::from_name("relu").is_err());
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [Activation::Tanh, Activation::Sigmoid] {
            for &z in &[-2.3, -0.4, 0.0, 0.7, 1.9] {
                let h = 1e-5;
                let (p, m, c) = (act.derivatives(z + h), act.derivatives(z - h), act.derivatives(z));
                for k in 0..4 {
                    assert_relative_eq!(c[k + 1], (p[k] - m[k]) / (2.0 * h), epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn zero_output_weights_give_zero_jet() {
        let eta = default_eta(&DomainSpec::unit_interval());
        let p = NetworkParams::new(vec![0.0; 3], vec![0.5, -1.0, 2.0], vec![0.1, 0.2, 0.3], 1, 0.6).unwrap();
        assert_eq!(eval_jet(&p, &eta, Activation::Tanh, &[0.3]), Jet2::zero(1));
        let g = param_gradient(&p, &eta, Activation::Tanh, &[0.3]);
        assert!(g[3..].iter().all(|v| *v == 0.0));
        assert!(g[..3].iter().all(|v| *v != 0.0));
    }

    #[test]
    fn tanh_of_zero_unit() {
        let eta = default_eta(&DomainSpec::unit_interval());
        let p = NetworkParams::new(vec![1.0], vec![0.0], vec![0.0], 1, 0.6).unwrap();
        assert_eq!(eval_jet(&p, &eta, Activation::Tanh, &[0.3]), Jet2::zero(1));
    }

    #[test]
    fn boundary_annihilation() {
        for dom in [DomainSpec::unit_interval(), DomainSpec::unit_square()] {
            let d = dom.dim();
            let eta = default_eta(&dom);
            let p = random_params(4, d, 5);
            for (x, _) in boundary_samples(&dom, 8) {
                let j = eval_jet(&p, &eta, Activation::Tanh, &x);
                assert_eq!(j.value, 0.0);
                assert!(j.gradient.iter().any(|g| *g != 0.0));
                assert!(param_gradient(&p, &eta, Activation::Tanh, &x).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn identity_operator_reproduces_param_gradient() {
        let eta = default_eta(&DomainSpec::unit_square());
        let p = random_params(5, 2, 11);
        let x = [0.3, 0.8];
        let a = param_gradient_of_aq(&p, &eta, Activation::Tanh, &OperatorSpec::identity(2), &x);
        let b = param_gradient(&p, &eta, Activation::Tanh, &x);
        for (u, v) in a.iter().zip(&b) {
            assert_relative_eq!(u, v, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_activation_entries_are_polynomials() {
        // σ(z) = z, η = x(1-x), N = 1, c = 2, w = 3, b = 1, β stripped via scale:
        // Q = s·2·x(1-x)(3x+1)
        let eta = default_eta(&DomainSpec::unit_interval());
        let p = NetworkParams::new(vec![2.0], vec![3.0], vec![1.0], 1, 0.6).unwrap();
        let s = p.scale();
        let x = 0.4;
        let lap = OperatorSpec::neg_laplace(1);
        let g = param_gradient_of_aq(&p, &eta, Activation::Linear, &lap, &[x]);
        // dQ/dc = s x(1-x)(3x+1) = s(-3x³ + 2x² + x); -d²/dx² = s(18x - 4)
        assert_relative_eq!(g[0], s * (18.0 * x - 4.0), epsilon = 1e-14);
        // dQ/dw = s c x(1-x) x = s c (x² - x³); -d²/dx² = -s c (2 - 6x)
        assert_relative_eq!(g[1], -s * 2.0 * (2.0 - 6.0 * x), epsilon = 1e-14);
        // dQ/db = s c x(1-x); -d²/dx² = 2 s c
        assert_relative_eq!(g[2], 2.0 * s * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn mixed_derivative_contract() {
        let eta = default_eta(&DomainSpec::unit_interval());
        let p = random_params(3, 1, 2);
        assert!(mixed_param_space_derivative(&p, &eta, Activation::Tanh, &[0.5], &[3]).is_err());
        let zero = mixed_param_space_derivative(&p, &eta, Activation::Tanh, &[0.5], &[0]).unwrap();
        assert_eq!(zero, param_gradient(&p, &eta, Activation::Tanh, &[0.5]));

        let c0 = NetworkParams::new(vec![0.0; 2], vec![1.0, -1.0], vec![0.5, 0.5], 1, 0.6).unwrap();
        for a in [[0], [1], [2]] {
            let v = mixed_param_space_derivative(&c0, &eta, Activation::Tanh, &[0.4], &a).unwrap();
            assert!(v[2..].iter().all(|t| *t == 0.0));
        }
    }

    #[test]
    fn clip_examples() {
        assert_eq!(smooth_clip(5.0, 10.0), 5.0);
        assert_relative_eq!(smooth_clip(20.0, 10.0), 10.0 + 10.0 * 1f64.tanh(), epsilon = 1e-14);
        assert_relative_eq!(smooth_clip(20.0, 10.0), 17.61594, epsilon = 1e-5);
        assert!(smooth_clip(1e300, 10.0) <= 20.0);
        assert!(smooth_clip(30.0, 10.0) < 20.0);
        assert_eq!(smooth_clip(-20.0, 10.0), -smooth_clip(20.0, 10.0));
        assert_eq!(smooth_clip(3.0, f64::INFINITY), 3.0);

        assert_eq!(clip_vector(&[1.0, -2.0], 5.0), vec![1.0, -2.0]);
        assert_eq!(clip_vector(&[0.0; 3], 0.5), vec![0.0; 3]);
        let v = clip_vector(&[1.0, 50.0, -1.0], 5.0);
        assert_eq!((v[0], v[2]), (1.0, -1.0));
        assert!(v[1] < 10.0);
    }

    #[test]
    fn clipping_spec_constraints() {
        ClippingSpec::default().validate().unwrap();
        assert!(ClippingSpec::new(0.6, 0.12, 0.05).is_err());
        assert!(ClippingSpec::new(0.6, 0.1, 0.15).is_err());
        assert!(ClippingSpec::new(0.4, 0.01, 0.02).is_err());
        let t = ClippingSpec::default().thresholds(100);
        assert_relative_eq!(t.residual, 100f64.powf(0.05));
        assert_relative_eq!(t.gradient, 100f64.powf(-0.48));
    }

    #[test]
    fn learning_rate_value() {
        let p = init_params(100, 1, &InitDistribution::default(), 0.6, 0).unwrap();
        assert_relative_eq!(p.learning_rate(), 2.51189, epsilon = 1e-5);
    }
}
