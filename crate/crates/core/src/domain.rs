//! Spatial domains, the sampling measure, the boundary factor `eta`, quadrature
//! grids and discrete Sobolev norms.
//!
//! The sampling measure is always the uniform probability measure on the domain;
//! quadrature weights are normalised to sum to one.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract_err, Result};
use crate::jet::{multi_indices, Jet2};

/// Compact domain with nonempty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { lower: f64, upper: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl DomainSpec {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        let d = DomainSpec::Interval { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_interval() -> Self {
        DomainSpec::Interval { lower: 0.0, upper: 1.0 }
    }

    pub fn cube(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = DomainSpec::Box { lower, upper };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_square() -> Self {
        DomainSpec::Box { lower: vec![0.0, 0.0], upper: vec![1.0, 1.0] }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let d = DomainSpec::Ball { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Box { lower, .. } => lower.len(),
            DomainSpec::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            DomainSpec::Interval { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return config_err(format!("interval needs lower < upper, got [{lower}, {upper}]"));
                }
            }
            DomainSpec::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return config_err("box bounds must be nonempty and of equal arity");
                }
                if !finite(lower) || !finite(upper) || lower.iter().zip(upper).any(|(a, b)| a >= b) {
                    return config_err("box needs lower < upper in every dimension");
                }
            }
            DomainSpec::Ball { center, radius } => {
                if center.is_empty() || !finite(center) {
                    return config_err("ball center must be a finite nonempty point");
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return config_err(format!("ball radius must be positive, got {radius}"));
                }
            }
        }
        Ok(())
    }

    /// Per-dimension bounding box.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainSpec::Interval { lower, upper } => (vec![*lower], vec![*upper]),
            DomainSpec::Box { lower, upper } => (lower.clone(), upper.clone()),
            DomainSpec::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Strict interior membership.
    pub fn is_interior(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            DomainSpec::Ball { center, radius } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                r2 < radius * radius
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                x.iter().zip(lo.iter().zip(&hi)).all(|(v, (a, b))| a < v && v < b)
            }
        }
    }

    /// Draws a point from the uniform probability measure on the domain.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DomainSpec::Ball { center, radius } => loop {
                let p: Vec<f64> =
                    center.iter().map(|c| c + radius * (2.0 * rng.gen::<f64>() - 1.0)).collect();
                if self.is_interior(&p) {
                    return p;
                }
            },
            _ => {
                let (lo, hi) = self.bounding_box();
                lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect()
            }
        }
    }

    /// Lebesgue measure of the domain.
    pub fn volume(&self) -> f64 {
        match self {
            DomainSpec::Ball { radius, .. } => {
                let d = self.dim() as f64;
                PI.powf(d / 2.0) / gamma_half_integer(d / 2.0 + 1.0) * radius.powf(d)
            }
            _ => {
                let (lo, hi) = self.bounding_box();
                lo.iter().zip(&hi).map(|(a, b)| b - a).product()
            }
        }
    }
}

// Gamma at positive integers and half integers.
fn gamma_half_integer(x: f64) -> f64 {
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut t = 0.5;
        while t < x - 0.25 {
            g *= t;
            t += 1.0;
        }
        g
    }
}

/// Jet of `eta` including the third-order partials (`dim³`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct EtaJet {
    pub jet: Jet2,
    pub third: Vec<f64>,
}

/// Smooth boundary factor: positive inside, zero on the boundary, with nonvanishing
/// normal derivative there.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxiliaryEta {
    /// `prod_k (x_k - a_k)(b_k - x_k)`.
    Product { lower: Vec<f64>, upper: Vec<f64> },
    /// `r² - |x - c|²`.
    Ball { center: Vec<f64>, radius: f64 },
}

impl AuxiliaryEta {
    pub fn dim(&self) -> usize {
        match self {
            AuxiliaryEta::Product { lower, .. } => lower.len(),
            AuxiliaryEta::Ball { center, .. } => center.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            AuxiliaryEta::Product { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).map(|(v, (a, b))| (v - a) * (b - v)).product()
            }
            AuxiliaryEta::Ball { center, radius } => {
                radius * radius - x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum::<f64>()
            }
        }
    }

    pub fn jet(&self, x: &[f64]) -> Jet2 {
        self.eval(x).jet
    }

    /// Value, gradient, Hessian and third partials in closed form.
    pub fn eval(&self, x: &[f64]) -> EtaJet {
        let d = self.dim();
        match self {
            AuxiliaryEta::Product { lower, upper } => {
                let factors: Vec<[f64; 4]> = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(&v, (&a, &b))| [(v - a) * (b - v), a + b - 2.0 * v, -2.0, 0.0])
                    .collect();
                separable_product(&factors)
            }
            AuxiliaryEta::Ball { center, radius } => {
                let diff: Vec<f64> = x.iter().zip(center).map(|(v, c)| v - c).collect();
                let value = radius * radius - diff.iter().map(|t| t * t).sum::<f64>();
                let gradient = diff.iter().map(|t| -2.0 * t).collect();
                let mut hessian = vec![0.0; d * d];
                for i in 0..d {
                    hessian[i * d + i] = -2.0;
                }
                EtaJet { jet: Jet2 { value, gradient, hessian }, third: vec![0.0; d * d * d] }
            }
        }
    }
}

/// Jet (through third order) of `prod_k f_k(x_k)` given per-dimension
/// `[f_k, f_k', f_k'', f_k''']`.
pub fn separable_product(factors: &[[f64; 4]]) -> EtaJet {
    let d = factors.len();
    let partial = |counts: &[usize]| -> f64 { factors.iter().zip(counts).map(|(f, &n)| f[n]).product() };
    let mut counts = vec![0usize; d];
    let value = partial(&counts);
    let mut gradient = vec![0.0; d];
    let mut hessian = vec![0.0; d * d];
    let mut third = vec![0.0; d * d * d];
    for i in 0..d {
        counts[i] += 1;
        gradient[i] = partial(&counts);
        for j in 0..d {
            counts[j] += 1;
            hessian[i * d + j] = partial(&counts);
            for k in 0..d {
                counts[k] += 1;
                third[(i * d + j) * d + k] = partial(&counts);
                counts[k] -= 1;
            }
            counts[j] -= 1;
        }
        counts[i] -= 1;
    }
    EtaJet { jet: Jet2 { value, gradient, hessian }, third }
}

/// Default boundary factor for a domain.
pub fn default_eta(domain: &DomainSpec) -> AuxiliaryEta {
    match domain {
        DomainSpec::Interval { lower, upper } => {
            AuxiliaryEta::Product { lower: vec![*lower], upper: vec![*upper] }
        }
        DomainSpec::Box { lower, upper } => {
            AuxiliaryEta::Product { lower: lower.clone(), upper: upper.clone() }
        }
        DomainSpec::Ball { center, radius } => {
            AuxiliaryEta::Ball { center: center.clone(), radius: *radius }
        }
    }
}

/// Checks the three boundary-factor invariants on a grid and boundary samples.
pub fn check_eta(eta: &AuxiliaryEta, grid: &QuadratureGrid, boundary: &[(Vec<f64>, Vec<f64>)]) -> Result<()> {
    for (i, x) in grid.nodes().enumerate() {
        if eta.value(x) <= 0.0 {
            return config_err(format!("eta is not positive at interior node {i}"));
        }
    }
    for (x, n) in boundary {
        let j = eta.jet(x);
        if j.value.abs() > 1e-12 {
            return config_err(format!("eta does not vanish at boundary point {x:?}"));
        }
        let dn: f64 = j.gradient.iter().zip(n).map(|(g, v)| g * v).sum();
        if dn.abs() <= 1e-8 {
            return config_err(format!("normal derivative of eta vanishes at {x:?}"));
        }
    }
    Ok(())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureScheme {
    GaussLegendreTensor,
    GaussLegendrePolar,
}

/// Nodes strictly inside the domain with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    pub scheme: QuadratureScheme,
}

impl QuadratureGrid {
    /// Builds a grid from raw data, normalising the weights.
    pub fn from_parts(dim: usize, points: Vec<f64>, weights: Vec<f64>, scheme: QuadratureScheme) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() || weights.is_empty() {
            return contract_err("grid node and weight counts disagree");
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return contract_err("quadrature weights must be positive");
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { dim, points, weights, scheme })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat_nodes(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ f dμ` by quadrature.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// `‖v‖_{L²(μ)}` for a grid function.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
    }

    /// `⟨u, v⟩_{L²(μ)}` for grid functions.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.weights).map(|((a, b), w)| w * a * b).sum()
    }
}

/// Tensor-product Gauss–Legendre grid mapped into the domain (polar product rule
/// for two-dimensional balls).
pub fn build_grid(domain: &DomainSpec, resolution: &[usize]) -> Result<QuadratureGrid> {
    domain.validate()?;
    if resolution.iter().any(|&r| r < 2) {
        return config_err(format!("grid resolution must be at least 2 per dimension, got {resolution:?}"));
    }
    let d = domain.dim();
    match domain {
        DomainSpec::Interval { .. } | DomainSpec::Box { .. } => {
            if resolution.len() != d {
                return config_err(format!("expected {d} resolution entries, got {}", resolution.len()));
            }
            let (lo, hi) = domain.bounding_box();
            let rules: Vec<(Vec<f64>, Vec<f64>)> = resolution
                .iter()
                .zip(lo.iter().zip(&hi))
                .map(|(&n, (&a, &b))| {
                    let (x, w) = gauss_legendre(n);
                    (x.iter().map(|t| a + (b - a) * (t + 1.0) / 2.0).collect(), w)
                })
                .collect();
            let total: usize = resolution.iter().product();
            let mut points = Vec::with_capacity(total * d);
            let mut weights = Vec::with_capacity(total);
            let mut idx = vec![0usize; d];
            for _ in 0..total {
                let mut w = 1.0;
                for k in 0..d {
                    points.push(rules[k].0[idx[k]]);
                    w *= rules[k].1[idx[k]];
                }
                weights.push(w);
                // last dimension varies fastest
                for k in (0..d).rev() {
                    idx[k] += 1;
                    if idx[k] < resolution[k] {
                        break;
                    }
                    idx[k] = 0;
                }
            }
            QuadratureGrid::from_parts(d, points, weights, QuadratureScheme::GaussLegendreTensor)
        }
        DomainSpec::Ball { center, radius } => match d {
            1 => {
                let seg = DomainSpec::Interval { lower: center[0] - radius, upper: center[0] + radius };
                build_grid(&seg, resolution)
            }
            2 => {
                if resolution.len() != 2 {
                    return config_err("disc grids take [radial, angular] resolution");
                }
                let (rx, rw) = gauss_legendre(resolution[0]);
                let n_theta = resolution[1];
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for (t, w) in rx.iter().zip(&rw) {
                    let r = radius * (t + 1.0) / 2.0;
                    for j in 0..n_theta {
                        let theta = 2.0 * PI * (j as f64 + 0.5) / n_theta as f64;
                        points.push(center[0] + r * theta.cos());
                        points.push(center[1] + r * theta.sin());
                        weights.push(w * r);
                    }
                }
                QuadratureGrid::from_parts(2, points, weights, QuadratureScheme::GaussLegendrePolar)
            }
            _ => config_err(format!("ball quadrature is only available for d <= 2, got d = {d}")),
        },
    }
}

/// Per-node jets of a scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridJetField {
    jets: Vec<Jet2>,
    order: usize,
}

impl GridJetField {
    pub fn from_jets(jets: Vec<Jet2>) -> Self {
        Self { jets, order: 2 }
    }

    /// Values only; derivative slots are zero and flagged as missing.
    pub fn from_values(values: &[f64], dim: usize) -> Self {
        Self { jets: values.iter().map(|&v| Jet2::constant(v, dim)).collect(), order: 0 }
    }

    /// Values and gradients; Hessians missing.
    pub fn from_first_order(values: &[f64], gradients: &[Vec<f64>]) -> Self {
        let dim = gradients.first().map_or(0, Vec::len);
        let jets = values
            .iter()
            .zip(gradients)
            .map(|(&v, g)| Jet2 { value: v, gradient: g.clone(), hessian: vec![0.0; dim * dim] })
            .collect();
        Self { jets, order: 1 }
    }

    /// Evaluates a closed-form jet field at every node.
    pub fn sample(grid: &QuadratureGrid, f: impl Fn(&[f64]) -> Jet2) -> Self {
        Self::from_jets(grid.nodes().map(f).collect())
    }

    pub fn jets(&self) -> &[Jet2] {
        &self.jets
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.jets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jets.is_empty()
    }

    pub fn sub(&self, other: &GridJetField) -> GridJetField {
        let jets = self.jets.iter().zip(&other.jets).map(|(a, b)| a.sub(b)).collect();
        GridJetField { jets, order: self.order.min(other.order) }
    }

    pub fn scale(&self, c: f64) -> GridJetField {
        GridJetField { jets: self.jets.iter().map(|j| j.scale(c)).collect(), order: self.order }
    }
}

/// `Σ_{|α| ≤ order} ‖D_α f‖_{L²(μ)}` by quadrature.
pub fn sobolev_norm(field: &GridJetField, grid: &QuadratureGrid, order: usize) -> Result<f64> {
    if field.len() != grid.len() {
        return contract_err(format!("field has {} nodes, grid has {}", field.len(), grid.len()));
    }
    if order > 2 {
        return contract_err("Sobolev order must be at most 2");
    }
    if field.order() < order {
        return contract_err(format!(
            "field carries derivatives through order {} but order {order} was requested",
            field.order()
        ));
    }
    let mut total = 0.0;
    for alpha in multi_indices(grid.dim(), order) {
        let sq: f64 = field
            .jets()
            .iter()
            .zip(grid.weights())
            .map(|(j, w)| {
                let v = j.partial(&alpha).expect("multi-index within order 2");
                w * v * v
            })
            .sum();
        total += sq.sqrt();
    }
    Ok(total)
}

/// Deterministic boundary points with outward unit normals. Box corners are
/// never returned.
pub fn boundary_samples(domain: &DomainSpec, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = domain.dim();
    match domain {
        DomainSpec::Interval { lower, upper } => (0..count)
            .map(|k| if k % 2 == 0 { (vec![*lower], vec![-1.0]) } else { (vec![*upper], vec![1.0]) })
            .collect(),
        DomainSpec::Box { lower, upper } => (0..count)
            .map(|k| {
                let face = k % (2 * d);
                let layer = k / (2 * d);
                let axis = face / 2;
                let high = face % 2 == 1;
                let mut p = vec![0.0; d];
                let mut n = vec![0.0; d];
                let mut slot = 0;
                for i in 0..d {
                    if i == axis {
                        p[i] = if high { upper[i] } else { lower[i] };
                        n[i] = if high { 1.0 } else { -1.0 };
                    } else {
                        let frac = if layer == 0 { 0.5 } else { radical_inverse(layer, PRIMES[slot % PRIMES.len()]) };
                        p[i] = lower[i] + (upper[i] - lower[i]) * frac;
                        slot += 1;
                    }
                }
                (p, n)
            })
            .collect(),
        DomainSpec::Ball { center, radius } => (0..count)
            .map(|k| {
                let n: Vec<f64> = match d {
                    1 => vec![if k % 2 == 0 { -1.0 } else { 1.0 }],
                    2 => {
                        let th = 2.0 * PI * k as f64 / count as f64;
                        vec![th.cos(), th.sin()]
                    }
                    3 => {
                        // Fibonacci sphere
                        let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                        let r = (1.0 - z * z).sqrt();
                        let phi = PI * (3.0 - 5f64.sqrt()) * k as f64;
                        vec![r * phi.cos(), r * phi.sin(), z]
                    }
                    _ => {
                        let mut v = vec![0.0; d];
                        v[(k / 2) % d] = if k % 2 == 0 { 1.0 } else { -1.0 };
                        v
                    }
                };
                let p = center.iter().zip(&n).map(|(c, v)| c + radius * v).collect();
                (p, n)
            })
            .collect(),
    }
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Van der Corput radical inverse of `i` in `base`, always in `(0, 1)` for `i ≥ 1`.
pub(crate) fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// First `count` Halton points that lie strictly inside the domain.
pub fn halton_interior_points(domain: &DomainSpec, count: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = domain.bounding_box();
    let mut out = Vec::with_capacity(count);
    let mut i = 1;
    while out.len() < count {
        let p: Vec<f64> = (0..domain.dim())
            .map(|k| lo[k] + (hi[k] - lo[k]) * radical_inverse(i, PRIMES[k % PRIMES.len()]))
            .collect();
        if domain.is_interior(&p) {
            out.push(p);
        }
        i += 1;
    }
    out
}
