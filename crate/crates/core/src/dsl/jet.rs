/// Value, gradient and Hessian of a scalar function at a point.
///
/// The Hessian is stored dense and row-major, `hess[i * n + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet2 {
    pub fn zero(n: usize) -> Self {
        Self::constant(0.0, n)
    }

    pub fn constant(value: f64, n: usize) -> Self {
        Jet2 {
            value,
            grad: vec![0.0; n],
            hess: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.dim() + j]
    }

    pub(super) fn resize(&mut self, n: usize) {
        self.grad.resize(n, 0.0);
        self.hess.resize(n * n, 0.0);
    }
}
