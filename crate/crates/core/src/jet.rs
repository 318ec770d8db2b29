//! Second-order jets of scalar fields.

/// Value, gradient and Hessian of a scalar field at a point.
///
/// The Hessian is stored row-major as a `dim × dim` block.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

impl Jet2 {
    pub fn zero(dim: usize) -> Self {
        Self { value: 0.0, gradient: vec![0.0; dim], hessian: vec![0.0; dim * dim] }
    }

    /// Builds a jet, checking that the arities agree.
    pub fn new(value: f64, gradient: Vec<f64>, hessian: Vec<f64>) -> Self {
        assert_eq!(hessian.len(), gradient.len() * gradient.len(), "hessian must be dim x dim");
        Self { value, gradient, hessian }
    }

    /// Constant field.
    pub fn constant(value: f64, dim: usize) -> Self {
        Self { value, ..Self::zero(dim) }
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hessian[i * self.dim() + j]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..i).all(|j| (self.hess(i, j) - self.hess(j, i)).abs() <= tol))
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Jet2, b: f64) -> Jet2 {
        debug_assert_eq!(self.dim(), other.dim());
        let lin = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        Jet2 {
            value: a * self.value + b * other.value,
            gradient: lin(&self.gradient, &other.gradient),
            hessian: lin(&self.hessian, &other.hessian),
        }
    }

    pub fn scale(&self, a: f64) -> Jet2 {
        self.combine(a, &Jet2::zero(self.dim()), 0.0)
    }

    pub fn sub(&self, other: &Jet2) -> Jet2 {
        self.combine(1.0, other, -1.0)
    }

    /// Product rule: jet of `self · other`.
    pub fn mul(&self, other: &Jet2) -> Jet2 {
        let d = self.dim();
        let (f, g) = (self, other);
        let gradient = (0..d).map(|i| f.gradient[i] * g.value + f.value * g.gradient[i]).collect();
        let mut hessian = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                hessian[i * d + j] = f.hess(i, j) * g.value
                    + f.gradient[i] * g.gradient[j]
                    + f.gradient[j] * g.gradient[i]
                    + f.value * g.hess(i, j);
            }
        }
        Jet2 { value: f.value * g.value, gradient, hessian }
    }

    /// Partial derivative selected by a multi-index of order at most two.
    ///
    /// Returns `None` when `|alpha| > 2` or the arity is wrong.
    pub fn partial(&self, alpha: &[usize]) -> Option<f64> {
        if alpha.len() != self.dim() {
            return None;
        }
        let order: usize = alpha.iter().sum();
        let nz: Vec<usize> = alpha.iter().enumerate().filter(|(_, &a)| a > 0).map(|(i, _)| i).collect();
        match order {
            0 => Some(self.value),
            1 => Some(self.gradient[nz[0]]),
            2 if nz.len() == 1 => Some(self.hess(nz[0], nz[0])),
            2 => Some(self.hess(nz[0], nz[1])),
            _ => None,
        }
    }
}

/// All multi-indices `alpha` in `dim` variables with `|alpha| <= order` (order ≤ 2),
/// listed by increasing order.
pub fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    if order >= 1 {
        for i in 0..dim {
            let mut a = vec![0; dim];
            a[i] = 1;
            out.push(a);
        }
    }
    if order >= 2 {
        for i in 0..dim {
            for j in i..dim {
                let mut a = vec![0; dim];
                a[i] += 1;
                a[j] += 1;
                out.push(a);
            }
        }
    }
    out
}

/// Jet assembled from partial derivatives listed against `alphas` (order ≤ 2).
pub fn jet_from_partials(dim: usize, alphas: &[Vec<usize>], values: &[f64]) -> Jet2 {
    let mut j = Jet2::zero(dim);
    for (alpha, v) in alphas.iter().zip(values) {
        let nz: Vec<usize> = alpha.iter().enumerate().flat_map(|(i, &a)| std::iter::repeat_n(i, a)).collect();
        match nz.as_slice() {
            [] => j.value = *v,
            [i] => j.gradient[*i] = *v,
            [i, k] => {
                j.hessian[i * dim + k] = *v;
                j.hessian[k * dim + i] = *v;
            }
            _ => panic!("multi-index {alpha:?} has order above 2"),
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partials_round_trip() {
        let j = Jet2::new(1.0, vec![2.0, 3.0], vec![4.0, 5.0, 5.0, 6.0]);
        let alphas = multi_indices(2, 2);
        let values: Vec<f64> = alphas.iter().map(|a| j.partial(a).unwrap()).collect();
        assert_eq!(jet_from_partials(2, &alphas, &values), j);
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 2).len(), 3);
        assert_eq!(multi_indices(2, 2).len(), 6);
        assert_eq!(multi_indices(2, 1).len(), 3);
        assert_eq!(multi_indices(3, 0), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn partial_selects_entries() {
        let j = Jet2::new(1.0, vec![2.0, 3.0], vec![4.0, 5.0, 5.0, 6.0]);
        assert_eq!(j.partial(&[0, 0]), Some(1.0));
        assert_eq!(j.partial(&[0, 1]), Some(3.0));
        assert_eq!(j.partial(&[2, 0]), Some(4.0));
        assert_eq!(j.partial(&[1, 1]), Some(5.0));
        assert_eq!(j.partial(&[0, 2]), Some(6.0));
        assert_eq!(j.partial(&[1, 2]), None);
    }

    #[test]
    fn product_rule_matches_polynomial() {
        // f = x, g = x^2 in 1D at x = 3: (x^3)'' = 6x
        let f = Jet2::new(3.0, vec![1.0], vec![0.0]);
        let g = Jet2::new(9.0, vec![6.0], vec![2.0]);
        let p = f.mul(&g);
        assert_eq!(p.value, 27.0);
        assert_eq!(p.gradient[0], 27.0);
        assert_eq!(p.hessian[0], 18.0);
    }
}
