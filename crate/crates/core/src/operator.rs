//! Linear second-order operators `A f = Σ a_ij ∂_ij f + Σ b_i ∂_i f + c0 f`,
//! homogenisation of Dirichlet data and manufactured test problems.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::domain::{boundary_samples, separable_product, DomainSpec, QuadratureGrid};
use crate::error::{config_err, Result};
use crate::jet::Jet2;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type JetField = Arc<dyn Fn(&[f64]) -> Jet2 + Send + Sync>;

/// Coefficients of an operator frozen at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorAt {
    /// Row-major `d × d`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c0: f64,
}

impl OperatorAt {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub fn apply_parts(&self, value: f64, gradient: &[f64], hessian: &[f64]) -> f64 {
        let second: f64 = self.a.iter().zip(hessian).map(|(a, h)| a * h).sum();
        let first: f64 = self.b.iter().zip(gradient).map(|(b, g)| b * g).sum();
        second + first + self.c0 * value
    }

    #[inline]
    pub fn apply(&self, jet: &Jet2) -> f64 {
        self.apply_parts(jet.value, &jet.gradient, &jet.hessian)
    }
}

/// Sign of the principal part, as far as sampling can tell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ellipticity {
    NegativeDefinite,
    PositiveDefinite,
    Degenerate,
}

/// A second-order linear operator given by closed-form coefficient fields.
#[derive(Clone)]
pub struct OperatorSpec {
    pub name: String,
    dim: usize,
    second: VectorField,
    first: VectorField,
    zeroth: ScalarField,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl OperatorSpec {
    /// Custom operator. `second` must return a row-major `d × d` matrix, `first` a
    /// `d`-vector.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        second: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        first: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        zeroth: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dim, second: Arc::new(second), first: Arc::new(first), zeroth: Arc::new(zeroth) }
    }

    /// `-Δ`.
    pub fn neg_laplace(dim: usize) -> Self {
        Self::advection_diffusion(dim, 1.0, vec![0.0; dim], 0.0).renamed("neg_laplace")
    }

    /// `-Δ + c`.
    pub fn neg_laplace_plus_c(dim: usize, c: f64) -> Self {
        Self::advection_diffusion(dim, 1.0, vec![0.0; dim], c).renamed("neg_laplace_plus_c")
    }

    /// `-ν Δ + v·∇ + c`.
    pub fn advection_diffusion(dim: usize, nu: f64, velocity: Vec<f64>, c: f64) -> Self {
        assert_eq!(velocity.len(), dim);
        let a = diag(dim, -nu);
        Self::new("advection_diffusion", dim, move |_| a.clone(), move |_| velocity.clone(), move |_| c)
    }

    pub fn identity(dim: usize) -> Self {
        Self::new("identity", dim, move |_| vec![0.0; dim * dim], move |_| vec![0.0; dim], |_| 1.0)
    }

    /// The zero map; every problem with nonzero data is unsolvable for it.
    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, move |_| vec![0.0; dim * dim], move |_| vec![0.0; dim], |_| 0.0)
    }

    fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, x: &[f64]) -> OperatorAt {
        OperatorAt { a: (self.second)(x), b: (self.first)(x), c0: (self.zeroth)(x) }
    }

    /// Symmetry and finiteness of the coefficients at the sampled points.
    pub fn validate<'a>(&self, points: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
        let d = self.dim;
        for x in points {
            let c = self.at(x);
            if c.a.len() != d * d || c.b.len() != d {
                return config_err(format!("operator '{}' returned coefficients of the wrong arity", self.name));
            }
            if c.a.iter().chain(&c.b).chain(std::iter::once(&c.c0)).any(|v| !v.is_finite()) {
                return config_err(format!("operator '{}' has a non-finite coefficient at {x:?}", self.name));
            }
            for i in 0..d {
                for j in 0..i {
                    if (c.a[i * d + j] - c.a[j * d + i]).abs() > 1e-12 {
                        return config_err(format!("operator '{}' has asymmetric a(x) at {x:?}", self.name));
                    }
                }
            }
        }
        Ok(())
    }

    /// Uniform definiteness of `a(x)` on the grid nodes.
    pub fn ellipticity(&self, grid: &QuadratureGrid) -> Ellipticity {
        let d = self.dim;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in grid.nodes() {
            let a = DMatrix::from_row_slice(d, d, &self.at(x).a);
            for ev in SymmetricEigen::new(a).eigenvalues.iter() {
                lo = lo.min(*ev);
                hi = hi.max(*ev);
            }
        }
        if hi < -1e-12 {
            Ellipticity::NegativeDefinite
        } else if lo > 1e-12 {
            Ellipticity::PositiveDefinite
        } else {
            Ellipticity::Degenerate
        }
    }
}

fn diag(d: usize, v: f64) -> Vec<f64> {
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        a[i * d + i] = v;
    }
    a
}

/// `A f (x)` from the jet of `f` at `x`.
pub fn apply_operator(op: &OperatorSpec, jet: &Jet2, x: &[f64]) -> f64 {
    op.at(x).apply(jet)
}

/// Bound `k` such that `|A f(x)| ≤ k Σ_{|α|≤2} |D_α f(x)|` at every node.
///
/// Off-diagonal second-order coefficients count twice because `∂_ij` and `∂_ji`
/// are the same multi-index.
pub fn lipschitz_constant(op: &OperatorSpec, grid: &QuadratureGrid) -> Result<f64> {
    let d = op.dim();
    let mut k: f64 = 0.0;
    for x in grid.nodes() {
        let c = op.at(x);
        let all = c.a.iter().chain(&c.b).chain(std::iter::once(&c.c0));
        if all.clone().any(|v| !v.is_finite()) {
            return config_err(format!("unbounded coefficient in operator '{}' at {x:?}", op.name));
        }
        for i in 0..d {
            k = k.max(c.a[i * d + i].abs());
            for j in (i + 1)..d {
                k = k.max(c.a[i * d + j].abs() + c.a[j * d + i].abs());
            }
        }
        k = c.b.iter().fold(k, |m, v| m.max(v.abs()));
        k = k.max(c.c0.abs());
    }
    if k == 0.0 {
        // the zero operator is trivially Lipschitz with any positive constant
        k = 1.0;
    }
    Ok(k)
}

/// Dirichlet problem with homogeneous boundary data: `A u = g` in the domain.
#[derive(Clone)]
pub struct HomogenizedProblem {
    pub operator: OperatorSpec,
    pub rhs: ScalarField,
    pub domain: DomainSpec,
    pub exact: Option<JetField>,
}

impl fmt::Debug for HomogenizedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomogenizedProblem")
            .field("operator", &self.operator)
            .field("domain", &self.domain)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl HomogenizedProblem {
    pub fn new(operator: OperatorSpec, rhs: ScalarField, domain: DomainSpec, exact: Option<JetField>) -> Self {
        Self { operator, rhs, domain, exact }
    }

    /// `A u = 0` with `u = 0`.
    pub fn trivial(domain: DomainSpec, operator: OperatorSpec) -> Self {
        let d = domain.dim();
        Self::new(operator, Arc::new(|_| 0.0), domain, Some(Arc::new(move |_| Jet2::zero(d))))
    }

    pub fn rhs_at(&self, x: &[f64]) -> f64 {
        (self.rhs)(x)
    }

    pub fn rhs_on(&self, grid: &QuadratureGrid) -> Vec<f64> {
        grid.nodes().map(|x| (self.rhs)(x)).collect()
    }

    pub fn exact_on(&self, grid: &QuadratureGrid) -> Option<Vec<Jet2>> {
        self.exact.as_ref().map(|u| grid.nodes().map(|x| u(x)).collect())
    }

    /// `‖A u − g‖_{L²(μ)}` for the stored exact solution.
    pub fn exact_residual(&self, grid: &QuadratureGrid) -> Option<f64> {
        let u = self.exact.as_ref()?;
        let r: Vec<f64> = grid.nodes().map(|x| apply_operator(&self.operator, &u(x), x) - (self.rhs)(x)).collect();
        Some(grid.l2_norm(&r))
    }
}

/// Reduces `A v = h, v = f on ∂Ω` to zero boundary data via `u = v − f̄`,
/// `g = h − A f̄`.
pub fn homogenize(
    op: &OperatorSpec,
    h: ScalarField,
    f_bar: JetField,
    domain: &DomainSpec,
    v_exact: Option<JetField>,
) -> HomogenizedProblem {
    let a = op.clone();
    let fb = f_bar.clone();
    let rhs: ScalarField = Arc::new(move |x| h(x) - apply_operator(&a, &fb(x), x));
    let exact = v_exact.map(|v| -> JetField { Arc::new(move |x| v(x).sub(&f_bar(x))) });
    HomogenizedProblem::new(op.clone(), rhs, domain.clone(), exact)
}

/// Builds `g := A u_exact` for a solution vanishing on the boundary.
pub fn manufactured_problem(domain: &DomainSpec, op: &OperatorSpec, u_exact: JetField) -> Result<HomogenizedProblem> {
    domain.validate()?;
    if op.dim() != domain.dim() {
        return config_err("operator and domain dimensions differ");
    }
    for (x, _) in boundary_samples(domain, 64) {
        let v = u_exact(&x).value;
        if v.abs() > 1e-10 {
            return config_err(format!("manufactured solution does not vanish on the boundary: u({x:?}) = {v}"));
        }
    }
    let a = op.clone();
    let u = u_exact.clone();
    let rhs: ScalarField = Arc::new(move |x| apply_operator(&a, &u(x), x));
    Ok(HomogenizedProblem::new(op.clone(), rhs, domain.clone(), Some(u_exact)))
}

/// `amplitude · Π sin(π (x_k − a_k) / (b_k − a_k))` on an interval or box.
pub fn sine_solution(domain: &DomainSpec, amplitude: f64) -> Result<JetField> {
    if matches!(domain, DomainSpec::Ball { .. }) {
        return config_err("the sine solution needs an interval or box domain");
    }
    let (lo, hi) = domain.bounding_box();
    Ok(Arc::new(move |x: &[f64]| {
        let factors: Vec<[f64; 4]> = x
            .iter()
            .zip(lo.iter().zip(&hi))
            .enumerate()
            .map(|(k, (&v, (&a, &b)))| {
                let f = PI / (b - a);
                let t = f * (v - a);
                let s = if k == 0 { amplitude } else { 1.0 };
                [s * t.sin(), s * f * t.cos(), -s * f * f * t.sin(), -s * f * f * f * t.cos()]
            })
            .collect();
        separable_product(&factors).jet
    }))
}

/// `amplitude · η(x)` for the default boundary factor of the domain.
pub fn bubble_solution(domain: &DomainSpec, amplitude: f64) -> JetField {
    let eta = crate::domain::default_eta(domain);
    Arc::new(move |x: &[f64]| eta.jet(x).scale(amplitude))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn apply_examples() {
        let lap = OperatorSpec::neg_laplace(1);
        let jet = Jet2::new(1.0, vec![0.0], vec![-PI * PI]);
        assert_relative_eq!(apply_operator(&lap, &jet, &[0.5]), PI * PI, epsilon = 1e-14);

        let id = OperatorSpec::identity(1);
        assert_eq!(apply_operator(&id, &Jet2::new(0.7, vec![3.0], vec![5.0]), &[0.1]), 0.7);

        let op = OperatorSpec::neg_laplace_plus_c(2, 1.0);
        let jet = Jet2::new(1.0, vec![1.0, 1.0], vec![0.0, 1.0, 1.0, 0.0]);
        assert_eq!(apply_operator(&op, &jet, &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn homogenize_examples() {
        let dom = DomainSpec::unit_interval();
        let lap = OperatorSpec::neg_laplace(1);
        let zero_ext: JetField = Arc::new(|_| Jet2::zero(1));
        let p = homogenize(&lap, Arc::new(|x| x[0] * 3.0), zero_ext, &dom, None);
        assert_eq!(p.rhs_at(&[0.4]), 0.4 * 3.0);

        let lin: JetField = Arc::new(|x| Jet2::new(x[0], vec![1.0], vec![0.0]));
        let p = homogenize(&lap, Arc::new(|_| 0.0), lin, &dom, None);
        assert_eq!(p.rhs_at(&[0.3]), 0.0);

        // -(x²)'' = -2, so g = 2 - (-2) = 4
        let quad: JetField = Arc::new(|x| Jet2::new(x[0] * x[0], vec![2.0 * x[0]], vec![2.0]));
        let v: JetField = Arc::new(|x| Jet2::new(x[0] * x[0] + 1.0, vec![2.0 * x[0]], vec![2.0]));
        let p = homogenize(&lap, Arc::new(|_| 2.0), quad, &dom, Some(v));
        assert_eq!(p.rhs_at(&[0.3]), 4.0);
        assert_eq!(p.exact.unwrap()(&[0.3]).value, 1.0);
    }

    #[test]
    fn manufactured_examples() {
        let dom = DomainSpec::unit_interval();
        let lap = OperatorSpec::neg_laplace(1);
        let p = manufactured_problem(&dom, &lap, sine_solution(&dom, 1.0).unwrap()).unwrap();
        assert_relative_eq!(p.rhs_at(&[0.3]), PI * PI * (PI * 0.3).sin(), epsilon = 1e-13);

        let bubble = bubble_solution(&dom, 1.0);
        let p = manufactured_problem(&dom, &lap, bubble).unwrap();
        assert_relative_eq!(p.rhs_at(&[0.77]), 2.0, epsilon = 1e-14);

        let sq = DomainSpec::unit_square();
        let lap2 = OperatorSpec::neg_laplace(2);
        let p = manufactured_problem(&sq, &lap2, sine_solution(&sq, 1.0).unwrap()).unwrap();
        let x = [0.2, 0.6];
        let expect = 2.0 * PI * PI * (PI * 0.2).sin() * (PI * 0.6).sin();
        assert_relative_eq!(p.rhs_at(&x), expect, epsilon = 1e-12);
    }

    #[test]
    fn manufactured_rejects_nonvanishing_trace() {
        let dom = DomainSpec::unit_interval();
        let bad: JetField = Arc::new(|x| Jet2::new(1.0 + x[0], vec![1.0], vec![0.0]));
        assert!(manufactured_problem(&dom, &OperatorSpec::neg_laplace(1), bad).is_err());
    }

    #[test]
    fn manufactured_residual_vanishes_on_finer_grids() {
        let sq = DomainSpec::unit_square();
        let op = OperatorSpec::advection_diffusion(2, 0.5, vec![1.0, -2.0], 0.3);
        let p = manufactured_problem(&sq, &op, sine_solution(&sq, 2.0).unwrap()).unwrap();
        let fine = build_grid(&sq, &[13, 11]).unwrap();
        assert!(p.exact_residual(&fine).unwrap() < 1e-10);
    }

    #[test]
    fn lipschitz_examples() {
        let g = build_grid(&DomainSpec::unit_interval(), &[32]).unwrap();
        assert_eq!(lipschitz_constant(&OperatorSpec::neg_laplace(1), &g).unwrap(), 1.0);
        assert_eq!(lipschitz_constant(&OperatorSpec::identity(1), &g).unwrap(), 1.0);
        let op = OperatorSpec::new("var", 1, |_| vec![-1.0], |_| vec![0.0], |x| 2.0 + x[0].sin());
        let k = lipschitz_constant(&op, &g).unwrap();
        // grid maximum approaches the dense maximum 2 + sin(1) from below
        assert!(k <= 2.0 + 1f64.sin() && k > 2.0 + 1f64.sin() - 1e-2, "{k}");
        let bad = OperatorSpec::new("bad", 1, |_| vec![f64::NAN], |_| vec![0.0], |_| 0.0);
        assert!(lipschitz_constant(&bad, &g).is_err());
    }

    #[test]
    fn ellipticity_detection() {
        let g = build_grid(&DomainSpec::unit_square(), &[3, 3]).unwrap();
        assert_eq!(OperatorSpec::neg_laplace(2).ellipticity(&g), Ellipticity::NegativeDefinite);
        assert_eq!(OperatorSpec::identity(2).ellipticity(&g), Ellipticity::Degenerate);
    }

    fn jet2d() -> impl Strategy<Value = Jet2> {
        (-5.0..5.0f64, prop::array::uniform2(-5.0..5.0f64), prop::array::uniform3(-5.0..5.0f64))
            .prop_map(|(v, g, h)| Jet2::new(v, g.to_vec(), vec![h[0], h[1], h[1], h[2]]))
    }

    fn var_op() -> OperatorSpec {
        OperatorSpec::new(
            "var",
            2,
            |x| vec![-1.0 - x[0] * x[0], 0.3 * x[1], 0.3 * x[1], -2.0],
            |x| vec![x[0].cos(), 1.5],
            |x| (x[0] * x[1]).sin(),
        )
    }

    proptest! {
        #[test]
        fn operator_is_linear_in_the_jet(f in jet2d(), g in jet2d(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let op = var_op();
            let x = [0.4, 0.7];
            let lhs = apply_operator(&op, &f.combine(a, &g, b), &x);
            let rhs = a * apply_operator(&op, &f, &x) + b * apply_operator(&op, &g, &x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn lipschitz_bound_holds(f in jet2d(), g in jet2d()) {
            let op = var_op();
            let grid = build_grid(&DomainSpec::unit_square(), &[5, 5]).unwrap();
            let k = lipschitz_constant(&op, &grid).unwrap();
            let diff = f.sub(&g);
            for x in grid.nodes() {
                let lhs = (apply_operator(&op, &f, x) - apply_operator(&op, &g, x)).abs();
                let sum: f64 = crate::jet::multi_indices(2, 2).iter().map(|a| diff.partial(a).unwrap().abs()).sum();
                prop_assert!(lhs <= k * sum + 1e-12);
            }
        }
    }
}
