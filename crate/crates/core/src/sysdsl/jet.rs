/// Second-order forward-mode jet: value, gradient and Hessian with respect
/// to `n` seeded variables. The Hessian is stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet {
    pub fn constant(value: f64, n: usize) -> Jet {
        Jet { value, grad: vec![0.0; n], hess: vec![0.0; n * n] }
    }

    /// The `i`-th independent variable evaluated at `value`.
    pub fn variable(value: f64, i: usize, n: usize) -> Jet {
        let mut j = Jet::constant(value, n);
        j.grad[i] = 1.0;
        j
    }

    /// Seeds every entry of `values` as its own variable.
    pub fn seed(values: &[f64]) -> Vec<Jet> {
        let n = values.len();
        values.iter().enumerate().map(|(i, &v)| Jet::variable(v, i, n)).collect()
    }

    pub fn nvars(&self) -> usize {
        self.grad.len()
    }

    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.nvars() + j]
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        Jet {
            value: self.value - o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn neg(&self) -> Jet {
        Jet {
            value: -self.value,
            grad: self.grad.iter().map(|a| -a).collect(),
            hess: self.hess.iter().map(|a| -a).collect(),
        }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let n = self.nvars();
        let (u, v) = (self.value, o.value);
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                hess[k] = u * o.hess[k]
                    + v * self.hess[k]
                    + self.grad[i] * o.grad[j]
                    + o.grad[i] * self.grad[j];
            }
        }
        Jet {
            value: u * v,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| u * b + v * a).collect(),
            hess,
        }
    }

    /// Composition with a scalar function whose value and first two
    /// derivatives at `self.value` are `f0, f1, f2`.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet {
        let n = self.nvars();
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let mut h = f1 * self.hess[k];
                if f2 != 0.0 {
                    h += f2 * self.grad[i] * self.grad[j];
                }
                hess[k] = h;
            }
        }
        Jet { value: f0, grad: self.grad.iter().map(|g| f1 * g).collect(), hess }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let v = Jet::seed(&[2.0, 3.0]);
        let p = v[0].mul(&v[1]).mul(&v[0]); // x^2 y
        assert_eq!(p.value, 12.0);
        assert_eq!(p.grad, vec![12.0, 4.0]);
        assert_eq!(p.hess, vec![6.0, 4.0, 4.0, 0.0]);
    }

    #[test]
    fn chain_sin() {
        let x = Jet::variable(0.3, 0, 1);
        let s = x.chain(0.3f64.sin(), 0.3f64.cos(), -0.3f64.sin());
        assert!((s.h(0, 0) + 0.3f64.sin()).abs() < 1e-15);
    }
}
