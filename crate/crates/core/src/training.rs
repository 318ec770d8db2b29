//! Clipped gradient flow for the residual objective and the PINN objective.
//!
//! The flow is `dθ/dt = −α G(θ)` with `α = N^{2β−1}` and
//! `G = ∫ ψ(A Q − g) Φ(∇_θ A Q) dμ` (plus the data term for PINN), so that
//! without clipping `G = ½ ∇_θ J` and the flow descends `J`.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{halton_interior_points, DomainSpec, QuadratureGrid};
use crate::error::{config_err, contract_err, Error, Result};
use crate::network::{
    fill_op_gradient, fill_value_gradient, smooth_clip, Architecture, ClipThresholds, NetworkParams, PointContext,
};
use crate::operator::{HomogenizedProblem, JetField};

/// Nodes per parallel work item. Fixed, so reductions do not depend on the thread count.
const NODE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegralMode {
    /// Integrals over the quadrature grid.
    Quadrature,
    /// Uniform samples in the domain, redrawn each step from `(seed, step)`.
    MonteCarlo { batch: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dt: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    pub integral_mode: IntegralMode,
    /// Record every `snapshot_stride` steps (the first and last step are always recorded).
    pub snapshot_stride: usize,
    /// Store full parameter vectors at recorded steps.
    #[serde(default)]
    pub keep_params: bool,
}

impl TrainConfig {
    pub fn new(dt: f64, horizon: f64, integrator: Integrator) -> Result<Self> {
        let tc = Self {
            dt,
            horizon,
            integrator,
            integral_mode: IntegralMode::Quadrature,
            snapshot_stride: 1,
            keep_params: false,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return config_err("time step must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config_err("horizon must be positive");
        }
        if self.dt > self.horizon {
            return config_err("time step exceeds the horizon");
        }
        if self.snapshot_stride == 0 {
            return config_err("snapshot stride must be at least 1");
        }
        if let IntegralMode::MonteCarlo { batch, .. } = self.integral_mode {
            if batch == 0 {
                return config_err("Monte Carlo batch must be at least 1");
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// Scalar summaries recorded along a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub objective: Vec<f64>,
    pub residual_l2: Vec<f64>,
    pub max_param_dev: Vec<f64>,
    #[serde(skip)]
    pub params: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "J", "residual_l2", "max_param_dev"])?;
        for i in 0..self.len() {
            w.serialize((self.times[i], self.objective[i], self.residual_l2[i], self.max_param_dev[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pointwise observations `u(x_k)` at interior points.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    dim: usize,
    points: Vec<f64>,
    values: Vec<f64>,
}

impl Observations {
    pub fn new(domain: &DomainSpec, points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return contract_err("at least one observation is required");
        }
        if points.len() != values.len() {
            return contract_err("observation points and values differ in length");
        }
        let dim = domain.dim();
        for p in &points {
            if p.len() != dim || !domain.is_interior(p) {
                return contract_err(format!("observation point {p:?} is not interior"));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return contract_err("observation values must be finite");
        }
        Ok(Self { dim, points: points.concat(), values })
    }

    /// `count` interior points (equispaced in 1D, Halton otherwise) with values of `u`.
    pub fn placed(domain: &DomainSpec, count: usize, u: &JetField) -> Result<Self> {
        if count == 0 {
            return contract_err("at least one observation is required");
        }
        let points = if domain.dim() == 1 {
            let (lo, hi) = domain.bounding_box();
            (1..=count).map(|k| vec![lo[0] + (hi[0] - lo[0]) * k as f64 / (count + 1) as f64]).collect()
        } else {
            halton_interior_points(domain, count)
        };
        let values = points.iter().map(|p: &Vec<f64>| u(p).value).collect();
        Self::new(domain, points, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Integration points with precomputed point data.
struct Nodes {
    ctx: Vec<PointContext>,
    weights: Vec<f64>,
    target: Vec<f64>,
}

impl Nodes {
    fn pde(arch: &Architecture, problem: &HomogenizedProblem, points: Vec<&[f64]>, weights: Vec<f64>) -> Self {
        let ctx = points.par_iter().map(|x| PointContext::new(x, &arch.eta, Some(&problem.operator))).collect();
        let target = points.iter().map(|x| problem.rhs_at(x)).collect();
        Self { ctx, weights, target }
    }

    fn grid(arch: &Architecture, problem: &HomogenizedProblem, grid: &QuadratureGrid) -> Self {
        Self::pde(arch, problem, grid.nodes().collect(), grid.weights().to_vec())
    }

    fn data(arch: &Architecture, obs: &Observations) -> Self {
        let m = obs.len() as f64;
        Self {
            ctx: obs.points().map(|x| PointContext::new(x, &arch.eta, None)).collect(),
            weights: vec![1.0 / m; obs.len()],
            target: obs.values().to_vec(),
        }
    }

    fn monte_carlo(arch: &Architecture, problem: &HomogenizedProblem, batch: usize, seed: u64, step: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(step);
        let pts: Vec<Vec<f64>> = (0..batch).map(|_| problem.domain.sample_uniform(&mut rng)).collect();
        Self::pde(arch, problem, pts.iter().map(Vec::as_slice).collect(), vec![1.0 / batch as f64; batch])
    }
}

#[derive(Clone, Copy)]
enum Term {
    Operator,
    Value,
}

/// `Σ_i ω_i ψ(F(x_i) − t_i) Φ(∇_θ F(x_i))` with `F = A Q` or `Q`, plus `Σ ω_i (F − t_i)²`.
fn accumulate(params: &NetworkParams, arch: &Architecture, nodes: &Nodes, term: Term, clip: &ClipThresholds) -> (Vec<f64>, f64) {
    let p = params.len();
    let n = nodes.ctx.len();
    let partials: Vec<(Vec<f64>, f64)> = (0..n.div_ceil(NODE_CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut acc = vec![0.0; p];
            let mut buf = vec![0.0; p];
            let mut sq = 0.0;
            for i in (k * NODE_CHUNK)..((k + 1) * NODE_CHUNK).min(n) {
                let f = match term {
                    Term::Operator => fill_op_gradient(params, &nodes.ctx[i], arch.act, &mut buf),
                    Term::Value => fill_value_gradient(params, &nodes.ctx[i], arch.act, &mut buf),
                };
                let r = f - nodes.target[i];
                sq += nodes.weights[i] * r * r;
                let coeff = nodes.weights[i] * smooth_clip(r, clip.residual);
                if coeff != 0.0 {
                    for (a, g) in acc.iter_mut().zip(&buf) {
                        *a += coeff * smooth_clip(*g, clip.gradient);
                    }
                }
            }
            (acc, sq)
        })
        .collect();
    let mut g = vec![0.0; p];
    let mut j = 0.0;
    for (acc, sq) in partials {
        for (a, b) in g.iter_mut().zip(&acc) {
            *a += b;
        }
        j += sq;
    }
    (g, j)
}

fn residual_values(params: &NetworkParams, arch: &Architecture, nodes: &Nodes, term: Term) -> Vec<f64> {
    let mut buf = vec![0.0; params.len()];
    nodes
        .ctx
        .iter()
        .zip(&nodes.target)
        .map(|(c, t)| {
            let f = match term {
                Term::Operator => fill_op_gradient(params, c, arch.act, &mut buf),
                Term::Value => fill_value_gradient(params, c, arch.act, &mut buf),
            };
            f - t
        })
        .collect()
}

fn weighted_square(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| w * v * v).sum()
}

/// `J = ‖A Q − g‖²_{L²(μ)}` by quadrature.
pub fn objective(params: &NetworkParams, arch: &Architecture, problem: &HomogenizedProblem, grid: &QuadratureGrid) -> f64 {
    let nodes = Nodes::grid(arch, problem, grid);
    weighted_square(&residual_values(params, arch, &nodes, Term::Operator), &nodes.weights)
}

/// `J + (1/M) Σ (Q(x_k) − u_k)²`.
pub fn pinn_objective(
    params: &NetworkParams,
    arch: &Architecture,
    problem: &HomogenizedProblem,
    grid: &QuadratureGrid,
    obs: &Observations,
) -> f64 {
    let data = Nodes::data(arch, obs);
    objective(params, arch, problem, grid) + weighted_square(&residual_values(params, arch, &data, Term::Value), &data.weights)
}

/// `G = ∫ ψ(A Q − g) Φ(∇_θ A Q) dμ` by quadrature.
pub fn clipped_gradient(
    params: &NetworkParams,
    arch: &Architecture,
    problem: &HomogenizedProblem,
    grid: &QuadratureGrid,
    clip: &ClipThresholds,
) -> Vec<f64> {
    accumulate(params, arch, &Nodes::grid(arch, problem, grid), Term::Operator, clip).0
}

/// Monte Carlo estimate of `G` with entrywise standard errors.
pub fn clipped_gradient_mc(
    params: &NetworkParams,
    arch: &Architecture,
    problem: &HomogenizedProblem,
    clip: &ClipThresholds,
    samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples < 2 {
        return contract_err("need at least two samples for a standard error");
    }
    let p = params.len();
    const CHUNK: usize = 4096;
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut sum = vec![0.0; p];
            let mut sumsq = vec![0.0; p];
            let mut buf = vec![0.0; p];
            for s in (k * CHUNK)..((k + 1) * CHUNK).min(samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s as u64);
                let x = problem.domain.sample_uniform(&mut rng);
                let ctx = PointContext::new(&x, &arch.eta, Some(&problem.operator));
                let r = fill_op_gradient(params, &ctx, arch.act, &mut buf) - problem.rhs_at(&x);
                let coeff = smooth_clip(r, clip.residual);
                for i in 0..p {
                    let v = coeff * smooth_clip(buf[i], clip.gradient);
                    sum[i] += v;
                    sumsq[i] += v * v;
                }
            }
            (sum, sumsq)
        })
        .collect();
    let (mut sum, mut sumsq) = (vec![0.0; p], vec![0.0; p]);
    for (a, b) in partials {
        for i in 0..p {
            sum[i] += a[i];
            sumsq[i] += b[i];
        }
    }
    let m = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let se = (0..p)
        .map(|i| (((sumsq[i] - m * mean[i] * mean[i]) / (m - 1.0)).max(0.0) / m).sqrt())
        .collect();
    Ok((mean, se))
}

struct Flow<'a> {
    arch: &'a Architecture,
    problem: &'a HomogenizedProblem,
    pde: Nodes,
    data: Option<Nodes>,
    clip: ClipThresholds,
    mode: IntegralMode,
}

impl Flow<'_> {
    /// `−α G(θ)` evaluated with the given PDE nodes.
    fn velocity(&self, params: &NetworkParams, pde: &Nodes) -> Vec<f64> {
        let (mut g, _) = accumulate(params, self.arch, pde, Term::Operator, &self.clip);
        if let Some(data) = &self.data {
            let (gd, _) = accumulate(params, self.arch, data, Term::Value, &self.clip);
            for (a, b) in g.iter_mut().zip(gd) {
                *a += b;
            }
        }
        let alpha = params.learning_rate();
        g.iter_mut().for_each(|v| *v *= -alpha);
        g
    }

    fn record(&self, params: &NetworkParams, theta0: &[f64], t: f64, keep: bool, traj: &mut Trajectory) {
        let pde = weighted_square(&residual_values(params, self.arch, &self.pde, Term::Operator), &self.pde.weights);
        let data = self
            .data
            .as_ref()
            .map_or(0.0, |d| weighted_square(&residual_values(params, self.arch, d, Term::Value), &d.weights));
        let dev = params.theta().iter().zip(theta0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        traj.times.push(t);
        traj.objective.push(pde + data);
        traj.residual_l2.push(pde.sqrt());
        traj.max_param_dev.push(dev);
        if keep {
            traj.params.push(params.theta().to_vec());
        }
    }

    fn run(&self, params0: &NetworkParams, tc: &TrainConfig) -> Result<(NetworkParams, Trajectory)> {
        tc.validate()?;
        let steps = tc.steps();
        let dt = tc.horizon / steps as f64;
        let theta0 = params0.theta().to_vec();
        let mut params = params0.clone();
        let mut traj = Trajectory::default();
        self.record(&params, &theta0, 0.0, tc.keep_params, &mut traj);
        let axpy = |base: &NetworkParams, k: &[f64], h: f64| {
            base.with_theta(base.theta().iter().zip(k).map(|(a, b)| a + h * b).collect())
        };
        for step in 0..steps {
            let mc_nodes;
            let pde = match self.mode {
                IntegralMode::Quadrature => &self.pde,
                IntegralMode::MonteCarlo { batch, seed } => {
                    mc_nodes = Nodes::monte_carlo(self.arch, self.problem, batch, seed, step as u64);
                    &mc_nodes
                }
            };
            let k1 = self.velocity(&params, pde);
            let theta: Vec<f64> = match tc.integrator {
                Integrator::Euler => params.theta().iter().zip(&k1).map(|(a, b)| a + dt * b).collect(),
                Integrator::Rk4 => {
                    let k2 = self.velocity(&axpy(&params, &k1, dt / 2.0), pde);
                    let k3 = self.velocity(&axpy(&params, &k2, dt / 2.0), pde);
                    let k4 = self.velocity(&axpy(&params, &k3, dt), pde);
                    (0..params.len())
                        .map(|i| params.theta()[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                        .collect()
                }
            };
            let t = (step + 1) as f64 * dt;
            if theta.iter().chain(&k1).any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step: step + 1, time: t });
            }
            params = params.with_theta(theta);
            if (step + 1) % tc.snapshot_stride == 0 || step + 1 == steps {
                self.record(&params, &theta0, t, tc.keep_params, &mut traj);
                if !traj.objective.last().is_some_and(|j| j.is_finite()) {
                    return Err(Error::Diverged { step: step + 1, time: t });
                }
            }
        }
        Ok((params, traj))
    }
}

/// Integrates `dθ/dt = −α G(θ)` for the residual objective.
pub fn train_dgm(
    params0: &NetworkParams,
    arch: &Architecture,
    problem: &HomogenizedProblem,
    grid: &QuadratureGrid,
    clip: &ClipThresholds,
    tc: &TrainConfig,
) -> Result<(NetworkParams, Trajectory)> {
    Flow { arch, problem, pde: Nodes::grid(arch, problem, grid), data: None, clip: *clip, mode: tc.integral_mode }
        .run(params0, tc)
}

/// As [`train_dgm`] with the observation term added to the objective and the flow.
pub fn train_pinn(
    params0: &NetworkParams,
    arch: &Architecture,
    problem: &HomogenizedProblem,
    grid: &QuadratureGrid,
    obs: &Observations,
    clip: &ClipThresholds,
    tc: &TrainConfig,
) -> Result<(NetworkParams, Trajectory)> {
    Flow {
        arch,
        problem,
        pde: Nodes::grid(arch, problem, grid),
        data: Some(Nodes::data(arch, obs)),
        clip: *clip,
        mode: tc.integral_mode,
    }
    .run(params0, tc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, default_eta};
    use crate::network::{eval_jet, init_params, Activation, InitDistribution};
    use crate::operator::{manufactured_problem, sine_solution, OperatorSpec};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn setup(width: usize, seed: u64) -> (Architecture, HomogenizedProblem, QuadratureGrid, NetworkParams) {
        let dom = DomainSpec::unit_interval();
        let arch = Architecture { eta: default_eta(&dom), act: Activation::Tanh };
        let op = OperatorSpec::neg_laplace(1);
        let problem = manufactured_problem(&dom, &op, sine_solution(&dom, 1.0).unwrap()).unwrap();
        let grid = build_grid(&dom, &[16]).unwrap();
        let params = init_params(width, 1, &InitDistribution::default(), 0.6, seed).unwrap();
        (arch, problem, grid, params)
    }

    fn zero_c(p: &NetworkParams) -> NetworkParams {
        let mut q = p.clone();
        q.theta_mut()[..p.width()].iter_mut().for_each(|c| *c = 0.0);
        q
    }

    #[test]
    fn config_invariants() {
        assert!(TrainConfig::new(0.0, 1.0, Integrator::Euler).is_err());
        assert!(TrainConfig::new(2.0, 1.0, Integrator::Euler).is_err());
        let mut tc = TrainConfig::new(0.1, 1.0, Integrator::Rk4).unwrap();
        assert_eq!(tc.steps(), 10);
        tc.integral_mode = IntegralMode::MonteCarlo { batch: 0, seed: 1 };
        assert!(tc.validate().is_err());
    }

    #[test]
    fn zero_network_zero_target() {
        let (arch, _, grid, params) = setup(20, 1);
        let trivial = HomogenizedProblem::trivial(DomainSpec::unit_interval(), OperatorSpec::neg_laplace(1));
        let p = zero_c(&params);
        assert_eq!(objective(&p, &arch, &trivial, &grid), 0.0);
        let g = clipped_gradient(&p, &arch, &trivial, &grid, &ClipThresholds::inactive());
        assert!(g.iter().all(|v| *v == 0.0));
        let tc = TrainConfig::new(0.1, 1.0, Integrator::Rk4).unwrap();
        let (end, traj) = train_dgm(&p, &arch, &trivial, &grid, &ClipThresholds::inactive(), &tc).unwrap();
        assert_eq!(end.theta(), p.theta());
        assert!(traj.max_param_dev.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn fresh_init_has_positive_objective() {
        let (arch, problem, grid, params) = setup(100, 7);
        let j = objective(&params, &arch, &problem, &grid);
        assert!(j > 0.0 && j.is_finite());
        // dominated by ‖π² sin πx‖² = π⁴/2
        assert!(j > 10.0 && j < 200.0, "J = {j}");
    }

    #[test]
    fn unclipped_gradient_is_half_objective_gradient() {
        let (arch, problem, grid, params) = setup(6, 3);
        let g = clipped_gradient(&params, &arch, &problem, &grid, &ClipThresholds::inactive());
        let h = 1e-5;
        for i in 0..params.len() {
            let mut tp = params.theta().to_vec();
            let mut tm = tp.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (objective(&params.with_theta(tp), &arch, &problem, &grid)
                - objective(&params.with_theta(tm), &arch, &problem, &grid))
                / (2.0 * h);
            assert_relative_eq!(g[i], 0.5 * fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn pinn_objective_examples() {
        let (arch, _, grid, params) = setup(10, 2);
        let dom = DomainSpec::unit_interval();
        let trivial = HomogenizedProblem::trivial(dom.clone(), OperatorSpec::neg_laplace(1));
        let p = zero_c(&params);
        let obs = Observations::new(&dom, vec![vec![0.3]], vec![-0.5]).unwrap();
        assert_relative_eq!(pinn_objective(&p, &arch, &trivial, &grid, &obs), 0.25, epsilon = 1e-15);
        let zero_obs = Observations::new(&dom, vec![vec![0.3]], vec![0.0]).unwrap();
        assert_eq!(pinn_objective(&p, &arch, &trivial, &grid, &zero_obs), 0.0);
        assert!(Observations::new(&dom, vec![], vec![]).is_err());
        assert!(Observations::new(&dom, vec![vec![1.0]], vec![0.0]).is_err());
    }

    #[test]
    fn pinn_gradient_matches_finite_differences() {
        let (arch, problem, grid, params) = setup(5, 4);
        let dom = DomainSpec::unit_interval();
        let u: JetField = sine_solution(&dom, 1.0).unwrap();
        let obs = Observations::placed(&dom, 3, &u).unwrap();
        let flow = Flow {
            arch: &arch,
            problem: &problem,
            pde: Nodes::grid(&arch, &problem, &grid),
            data: Some(Nodes::data(&arch, &obs)),
            clip: ClipThresholds::inactive(),
            mode: IntegralMode::Quadrature,
        };
        let v = flow.velocity(&params, &flow.pde);
        let alpha = params.learning_rate();
        let h = 1e-5;
        for i in 0..params.len() {
            let mut tp = params.theta().to_vec();
            let mut tm = tp.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (pinn_objective(&params.with_theta(tp), &arch, &problem, &grid, &obs)
                - pinn_objective(&params.with_theta(tm), &arch, &problem, &grid, &obs))
                / (2.0 * h);
            assert_relative_eq!(-v[i] / alpha, 0.5 * fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_fit_is_stationary() {
        let (arch, _, grid, params) = setup(8, 5);
        let dom = DomainSpec::unit_interval();
        // problem and observations generated from the network itself
        let q = params.clone();
        let a2 = arch.clone();
        let exact: JetField = Arc::new(move |x: &[f64]| eval_jet(&q, &a2.eta, a2.act, x));
        let problem = manufactured_problem(&dom, &OperatorSpec::neg_laplace(1), exact.clone()).unwrap();
        let obs = Observations::placed(&dom, 2, &exact).unwrap();
        let j = pinn_objective(&params, &arch, &problem, &grid, &obs);
        assert!(j < 1e-24, "J = {j}");
        let tc = TrainConfig::new(0.05, 0.5, Integrator::Rk4).unwrap();
        let (_, traj) = train_pinn(&params, &arch, &problem, &grid, &obs, &ClipThresholds::inactive(), &tc).unwrap();
        assert!(traj.max_param_dev.iter().all(|d| *d < 1e-10));
    }

    #[test]
    fn divergence_is_reported() {
        let (arch, problem, grid, params) = setup(20, 1);
        let tc = TrainConfig::new(50.0, 5000.0, Integrator::Euler).unwrap();
        match train_dgm(&params, &arch, &problem, &grid, &ClipThresholds::inactive(), &tc) {
            Err(Error::Diverged { step, .. }) => assert!(step >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|(_, t)| t.objective.last().copied())),
        }
    }

    #[test]
    fn quadrature_runs_are_bitwise_reproducible() {
        let (arch, problem, grid, params) = setup(30, 9);
        let tc = TrainConfig { snapshot_stride: 5, ..TrainConfig::new(0.01, 0.2, Integrator::Rk4).unwrap() };
        let clip = crate::network::ClippingSpec::default().thresholds(30);
        let (_, a) = train_dgm(&params, &arch, &problem, &grid, &clip, &tc).unwrap();
        let (_, b) = train_dgm(&params, &arch, &problem, &grid, &clip, &tc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        for (t, e) in a.times.iter().zip([0.0, 0.05, 0.1, 0.15, 0.2]) {
            assert_relative_eq!(*t, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn small_steps_decrease_objective() {
        let (arch, problem, grid, params) = setup(50, 11);
        let clip = crate::network::ClippingSpec::default().thresholds(50);
        let tc = TrainConfig::new(0.002, 0.2, Integrator::Rk4).unwrap();
        let (_, traj) = train_dgm(&params, &arch, &problem, &grid, &clip, &tc).unwrap();
        for w in traj.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
        assert!(traj.objective.last().unwrap() < &traj.objective[0]);
    }
}
