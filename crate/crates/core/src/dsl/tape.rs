//! Flat instruction tape with value and second-order jet evaluators.
//!
//! Jets live in one buffer, one slot of `1 + n + n*n` floats per
//! instruction. Only the upper triangle of each Hessian is computed; the
//! result is mirrored when copied out.

use super::{display_node, BinOp, EvalError, Func, Jet2, Node};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    PowConst(usize, f64),
    Pow(usize, usize),
    Call(Func, usize),
}

#[derive(Debug, Clone)]
pub(super) struct Tape {
    ops: Vec<Op>,
    /// Printed subexpression per instruction, for error messages.
    labels: Vec<String>,
    has_vars: bool,
}

fn fold(node: &Node) -> Node {
    match node {
        Node::Num(_) | Node::Var(_) => node.clone(),
        Node::Neg(a) => {
            let a = fold(a);
            match a {
                Node::Num(v) => Node::Num(-v),
                a => Node::Neg(Box::new(a)),
            }
        }
        Node::Binary(op, a, b) => {
            let (a, b) = (fold(a), fold(b));
            if let (Node::Num(x), Node::Num(y)) = (&a, &b) {
                let v = match op {
                    BinOp::Add => Some(x + y),
                    BinOp::Sub => Some(x - y),
                    BinOp::Mul => Some(x * y),
                    BinOp::Div if *y != 0.0 => Some(x / y),
                    BinOp::Pow if *x > 0.0 || y.fract() == 0.0 => Some(x.powf(*y)),
                    _ => None,
                };
                if let Some(v) = v.filter(|v| v.is_finite()) {
                    return Node::Num(v);
                }
            }
            Node::Binary(*op, Box::new(a), Box::new(b))
        }
        Node::Call(f, a) => {
            let a = fold(a);
            if let Node::Num(x) = a {
                if let Ok(v) = call_value(*f, x) {
                    return Node::Num(v);
                }
            }
            Node::Call(*f, Box::new(a))
        }
    }
}

fn call_value(f: Func, x: f64) -> Result<f64, &'static str> {
    match f {
        Func::Sin => Ok(x.sin()),
        Func::Cos => Ok(x.cos()),
        Func::Exp => Ok(x.exp()),
        Func::Tanh => Ok(x.tanh()),
        Func::Log if x > 0.0 => Ok(x.ln()),
        Func::Log => Err("logarithm of a non-positive value"),
        Func::Sqrt if x >= 0.0 => Ok(x.sqrt()),
        Func::Sqrt => Err("square root of a negative value"),
    }
}

impl Tape {
    pub(super) fn compile(root: &Node, prefix: &str) -> Self {
        let mut tape = Tape {
            ops: Vec::new(),
            labels: Vec::new(),
            has_vars: false,
        };
        // Constant subtrees are folded first; labels print the folded tree.
        tape.emit(&fold(root), prefix);
        tape
    }

    fn push(&mut self, op: Op, node: &Node, prefix: &str) -> usize {
        self.ops.push(op);
        self.labels.push(display_node(node, prefix));
        self.ops.len() - 1
    }

    fn emit(&mut self, node: &Node, prefix: &str) -> usize {
        match node {
            Node::Num(v) => self.push(Op::Const(*v), node, prefix),
            Node::Var(i) => {
                self.has_vars = true;
                self.push(Op::Var(*i), node, prefix)
            }
            Node::Neg(a) => {
                let a = self.emit(a, prefix);
                self.push(Op::Neg(a), node, prefix)
            }
            Node::Binary(BinOp::Pow, a, b) if b.constant_value().is_some() => {
                let c = b.constant_value().unwrap_or(0.0);
                let a = self.emit(a, prefix);
                self.push(Op::PowConst(a, c), node, prefix)
            }
            Node::Binary(op, a, b) => {
                let a = self.emit(a, prefix);
                let b = self.emit(b, prefix);
                let op = match op {
                    BinOp::Add => Op::Add(a, b),
                    BinOp::Sub => Op::Sub(a, b),
                    BinOp::Mul => Op::Mul(a, b),
                    BinOp::Div => Op::Div(a, b),
                    BinOp::Pow => Op::Pow(a, b),
                };
                self.push(op, node, prefix)
            }
            Node::Call(f, a) => {
                let a = self.emit(a, prefix);
                self.push(Op::Call(*f, a), node, prefix)
            }
        }
    }

    pub(super) fn is_constant(&self) -> bool {
        !self.has_vars
    }

    fn domain(&self, k: usize, reason: &str) -> EvalError {
        EvalError::Domain {
            subexpr: self.labels[k].clone(),
            reason: reason.to_string(),
        }
    }

    pub(super) fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut v: Vec<f64> = Vec::with_capacity(self.ops.len());
        for (k, op) in self.ops.iter().enumerate() {
            let r = match *op {
                Op::Const(c) => c,
                Op::Var(i) => x[i],
                Op::Neg(a) => -v[a],
                Op::Add(a, b) => v[a] + v[b],
                Op::Sub(a, b) => v[a] - v[b],
                Op::Mul(a, b) => v[a] * v[b],
                Op::Div(a, b) => {
                    if v[b] == 0.0 {
                        return Err(self.domain(k, "division by zero"));
                    }
                    v[a] / v[b]
                }
                Op::PowConst(a, c) => pow_const_value(v[a], c).map_err(|r| self.domain(k, r))?,
                Op::Pow(a, b) => {
                    if v[a] <= 0.0 {
                        return Err(self.domain(k, "non-positive base with variable exponent"));
                    }
                    (v[b] * v[a].ln()).exp()
                }
                Op::Call(f, a) => call_value(f, v[a]).map_err(|r| self.domain(k, r))?,
            };
            if !r.is_finite() {
                return Err(self.domain(k, "non-finite value"));
            }
            v.push(r);
        }
        Ok(*v.last().unwrap_or(&0.0))
    }

    pub(super) fn eval_jet2_into(
        &self,
        x: &[f64],
        buf: &mut Vec<f64>,
        out: &mut Jet2,
    ) -> Result<(), EvalError> {
        let n = x.len();
        let stride = 1 + n + n * n;
        buf.clear();
        buf.resize(stride * self.ops.len(), 0.0);
        for (k, op) in self.ops.iter().enumerate() {
            let (done, rest) = buf.split_at_mut(k * stride);
            let dst = &mut rest[..stride];
            let slot = |i: usize| &done[i * stride..(i + 1) * stride];
            match *op {
                Op::Const(c) => dst[0] = c,
                Op::Var(i) => {
                    dst[0] = x[i];
                    dst[1 + i] = 1.0;
                }
                Op::Neg(a) => {
                    let a = slot(a);
                    for (d, s) in dst.iter_mut().zip(a) {
                        *d = -s;
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(op, Op::Add(..)) { 1.0 } else { -1.0 };
                    let (a, b) = (slot(a), slot(b));
                    for i in 0..stride {
                        dst[i] = a[i] + sign * b[i];
                    }
                }
                Op::Mul(a, b) => mul(dst, slot(a), slot(b), n),
                Op::Div(a, b) => {
                    let b = slot(b);
                    let u = b[0];
                    if u == 0.0 {
                        return Err(self.domain(k, "division by zero"));
                    }
                    let mut r = vec![0.0; stride];
                    chain(&mut r, b, n, 1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u));
                    let a = slot(a);
                    mul(dst, a, &r, n);
                    dst[0] = a[0] / u;
                }
                Op::PowConst(a, c) => {
                    let a = slot(a);
                    let u = a[0];
                    let (g, g1, g2) = pow_const_jet(u, c).map_err(|r| self.domain(k, r))?;
                    chain(dst, a, n, g, g1, g2);
                }
                Op::Pow(a, b) => {
                    let (a, b) = (slot(a), slot(b));
                    if a[0] <= 0.0 {
                        return Err(self.domain(k, "non-positive base with variable exponent"));
                    }
                    // exp(b * ln a)
                    let mut ln_a = vec![0.0; stride];
                    chain(&mut ln_a, a, n, a[0].ln(), 1.0 / a[0], -1.0 / (a[0] * a[0]));
                    let mut prod = vec![0.0; stride];
                    mul(&mut prod, b, &ln_a, n);
                    let e = prod[0].exp();
                    chain(dst, &prod, n, e, e, e);
                }
                Op::Call(f, a) => {
                    let a = slot(a);
                    let u = a[0];
                    let (g, g1, g2) = match f {
                        Func::Sin => (u.sin(), u.cos(), -u.sin()),
                        Func::Cos => (u.cos(), -u.sin(), -u.cos()),
                        Func::Exp => {
                            let e = u.exp();
                            (e, e, e)
                        }
                        Func::Tanh => {
                            let t = u.tanh();
                            let s = 1.0 - t * t;
                            (t, s, -2.0 * t * s)
                        }
                        Func::Log => {
                            if u <= 0.0 {
                                return Err(self.domain(k, "logarithm of a non-positive value"));
                            }
                            (u.ln(), 1.0 / u, -1.0 / (u * u))
                        }
                        Func::Sqrt => {
                            if u <= 0.0 {
                                return Err(self.domain(
                                    k,
                                    "square root is not differentiable at non-positive values",
                                ));
                            }
                            let s = u.sqrt();
                            (s, 0.5 / s, -0.25 / (s * u))
                        }
                    };
                    chain(dst, a, n, g, g1, g2);
                }
            }
            if !dst.iter().all(|v| v.is_finite()) {
                return Err(self.domain(k, "non-finite value"));
            }
        }
        let last = &buf[(self.ops.len() - 1) * stride..];
        out.resize(n);
        out.value = last[0];
        out.grad.copy_from_slice(&last[1..1 + n]);
        let h = &last[1 + n..];
        for i in 0..n {
            for j in i..n {
                let v = h[i * n + j];
                out.hess[i * n + j] = v;
                out.hess[j * n + i] = v;
            }
        }
        Ok(())
    }
}

/// dst = g(a) given g, g', g'' at a's value.
fn chain(dst: &mut [f64], a: &[f64], n: usize, g: f64, g1: f64, g2: f64) {
    dst[0] = g;
    let (ga, ha) = a[1..].split_at(n);
    let (gd, hd) = dst[1..].split_at_mut(n);
    for i in 0..n {
        gd[i] = g1 * ga[i];
    }
    for i in 0..n {
        for j in i..n {
            hd[i * n + j] = g1 * ha[i * n + j] + g2 * ga[i] * ga[j];
        }
    }
}

fn mul(dst: &mut [f64], a: &[f64], b: &[f64], n: usize) {
    let (va, vb) = (a[0], b[0]);
    dst[0] = va * vb;
    let (ga, ha) = a[1..].split_at(n);
    let (gb, hb) = b[1..].split_at(n);
    let (gd, hd) = dst[1..].split_at_mut(n);
    for i in 0..n {
        gd[i] = va * gb[i] + vb * ga[i];
    }
    for i in 0..n {
        for j in i..n {
            let idx = i * n + j;
            hd[idx] = va * hb[idx] + vb * ha[idx] + ga[i] * gb[j] + gb[i] * ga[j];
        }
    }
}

fn is_integer(c: f64) -> bool {
    c.fract() == 0.0 && c.abs() < 1e9
}

fn pow_const_value(u: f64, c: f64) -> Result<f64, &'static str> {
    if is_integer(c) {
        if u == 0.0 && c < 0.0 {
            return Err("zero raised to a negative power");
        }
        return Ok(u.powi(c as i32));
    }
    if u < 0.0 {
        return Err("negative base with non-integer exponent");
    }
    if u == 0.0 && c < 0.0 {
        return Err("zero raised to a negative power");
    }
    Ok(u.powf(c))
}

fn pow_const_jet(u: f64, c: f64) -> Result<(f64, f64, f64), &'static str> {
    if is_integer(c) {
        let k = c as i32;
        if u == 0.0 && k < 0 {
            return Err("zero raised to a negative power");
        }
        let p = |e: i32| if e == 0 { 1.0 } else { u.powi(e) };
        let g1 = if k == 0 { 0.0 } else { c * p(k - 1) };
        let g2 = if k == 0 || k == 1 { 0.0 } else { c * (c - 1.0) * p(k - 2) };
        return Ok((p(k), g1, g2));
    }
    if u < 0.0 {
        return Err("negative base with non-integer exponent");
    }
    if u == 0.0 {
        if c < 2.0 {
            return Err("power is not twice differentiable at zero");
        }
        return Ok((0.0, 0.0, 0.0));
    }
    Ok((
        u.powf(c),
        c * u.powf(c - 1.0),
        c * (c - 1.0) * u.powf(c - 2.0),
    ))
}
