//! Tape-based reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Every operation appends a node to a [`Tape`]; [`Tape::backward`] replays
//! the recorded nodes in reverse and accumulates exact analytic partials.
//! The tape is rebuilt for every batch walk because the graph depends on the
//! data (smoothing corrections produced at one step drive the next step).
//!
//! Shapes are explicit and never broadcast. A scalar is a tensor with one
//! element; vector-by-scalar scaling goes through [`Tape::scale_by`].
//!
//! ```
//! use es_adrnn::autodiff::{Shape, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(vec![3.0], Shape::vector(1)).unwrap();
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(tape.value(y), &[9.0]);
//! assert_eq!(grads.get(x)[0], 6.0);
//! ```

use std::borrow::Cow;
use std::fmt;

use thiserror::Error;

/// Dimension list of a tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Self {
        Shape(dims)
    }

    pub fn vector(len: usize) -> Self {
        Shape(vec![len])
    }

    pub fn matrix(rows: usize, cols: usize) -> Self {
        Shape(vec![rows, cols])
    }

    pub fn scalar() -> Self {
        Shape(vec![1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    fn is_vector(&self) -> bool {
        self.0.len() == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("backward root must be a scalar, got shape {0}")]
    NonScalarRoot(Shape),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a tensor recorded on a tape. The wrapped index is the node id,
/// unique for the lifetime of the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    Recip(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Mean(Var),
    Sum(Var),
    Pinball { pred: Var, target: Vec<f64>, q: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Shape,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by node id.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`; zeros when `var` is not
    /// reachable from the root.
    pub fn get(&self, var: Var) -> Cow<'_, [f64]> {
        match self.grads.get(var.0).and_then(|g| g.as_deref()) {
            Some(g) => Cow::Borrowed(g),
            None => Cow::Owned(vec![0.0; self.sizes[var.0]]),
        }
    }

    pub fn is_reached(&self, var: Var) -> bool {
        matches!(self.grads.get(var.0), Some(Some(_)))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: Vec::with_capacity(nodes),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn shape(&self, v: Var) -> &Shape {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.numel(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn input(&mut self, values: Vec<f64>, shape: Shape, requires_grad: bool) -> Result<Var> {
        if values.len() != shape.numel() {
            return Err(AutodiffError::InvalidArgument {
                op: "leaf",
                detail: format!("{} values for shape {}", values.len(), shape),
            });
        }
        Ok(self.push(shape, values, Op::Leaf, requires_grad))
    }

    /// Differentiable input (a parameter or any quantity we want gradients for).
    pub fn leaf(&mut self, values: Vec<f64>, shape: Shape) -> Result<Var> {
        self.input(values, shape, true)
    }

    /// Input that never receives gradients.
    pub fn constant(&mut self, values: Vec<f64>, shape: Shape) -> Result<Var> {
        self.input(values, shape, false)
    }

    pub fn constant_vec(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(Shape::vector(n), values, Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.push(Shape::scalar(), vec![value], Op::Leaf, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        Ok(())
    }

    fn zip_map(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(shape, value, op, rg))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let node = &self.nodes[a.0];
        let value = node.value.iter().map(|&x| f(x)).collect();
        let (shape, rg) = (node.shape.clone(), node.requires_grad);
        self.push(shape, value, op, rg)
    }

    /// Matrix (rows x cols) times vector (cols).
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (ms, vs) = (&self.nodes[m.0].shape, &self.nodes[v.0].shape);
        let mismatch = || AutodiffError::ShapeMismatch {
            op: "matvec",
            lhs: ms.clone(),
            rhs: vs.clone(),
        };
        let &[rows, cols] = ms.dims() else {
            return Err(mismatch());
        };
        if !vs.is_vector() || vs.dims()[0] != cols {
            return Err(mismatch());
        }
        let md = &self.nodes[m.0].value;
        let vd = &self.nodes[v.0].value;
        let value: Vec<f64> = md.chunks_exact(cols).map(|row| dot(row, vd)).collect();
        debug_assert_eq!(value.len(), rows);
        let rg = self.nodes[m.0].requires_grad || self.nodes[v.0].requires_grad;
        Ok(self.push(Shape::vector(rows), value, Op::MatVec(m, v), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("hadamard", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    /// Every component of `a` times the single value held by `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ss = &self.nodes[s.0].shape;
        if !ss.is_scalar() {
            return Err(AutodiffError::ShapeMismatch {
                op: "scale_by",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: ss.clone(),
            });
        }
        let c = self.nodes[s.0].value[0];
        let rg = self.nodes[a.0].requires_grad || self.nodes[s.0].requires_grad;
        let node = &self.nodes[a.0];
        let value = node.value.iter().map(|&x| x * c).collect();
        let shape = node.shape.clone();
        Ok(self.push(shape, value, Op::ScaleBy(a, s), rg))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.map(a, Op::Recip(a), |x| 1.0 / x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    /// Natural logarithm.
    pub fn ln(&mut self, a: Var) -> Var {
        self.map(a, Op::Ln(a), f64::ln)
    }

    /// Concatenates vectors (or scalars) end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut value = Vec::new();
        let mut rg = false;
        for &p in parts {
            let node = &self.nodes[p.0];
            if !node.shape.is_vector() {
                return Err(AutodiffError::InvalidArgument {
                    op: "concat",
                    detail: format!("operand shape {} is not a vector", node.shape),
                });
            }
            value.extend_from_slice(&node.value);
            rg |= node.requires_grad;
        }
        let n = value.len();
        Ok(self.push(Shape::vector(n), value, Op::Concat(parts.to_vec()), rg))
    }

    /// Contiguous sub-vector `a[start..start + len]`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let node = &self.nodes[a.0];
        if !node.shape.is_vector() || start + len > node.value.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice",
                lhs: node.shape.clone(),
                rhs: Shape::vector(start + len),
            });
        }
        let value = node.value[start..start + len].to_vec();
        let rg = node.requires_grad;
        Ok(self.push(Shape::vector(len), value, Op::Slice(a, start), rg))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let node = &self.nodes[a.0];
        let n = node.value.len() as f64;
        let value = node.value.iter().sum::<f64>() / n;
        let rg = node.requires_grad;
        self.push(Shape::scalar(), vec![value], Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let node = &self.nodes[a.0];
        let value = node.value.iter().sum::<f64>();
        let rg = node.requires_grad;
        self.push(Shape::scalar(), vec![value], Op::Sum(a), rg)
    }

    /// Elementwise pinball loss of predictions `pred` against fixed targets.
    ///
    /// At the kink (`target == pred`) the derivative is taken from the
    /// `target >= pred` branch, i.e. `-q`.
    pub fn pinball(&mut self, pred: Var, target: &[f64], q: f64) -> Result<Var> {
        let node = &self.nodes[pred.0];
        if node.value.len() != target.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "pinball",
                lhs: node.shape.clone(),
                rhs: Shape::vector(target.len()),
            });
        }
        let value = node
            .value
            .iter()
            .zip(target)
            .map(|(&p, &z)| pinball_value(z, p, q))
            .collect();
        let (shape, rg) = (node.shape.clone(), node.requires_grad);
        Ok(self.push(
            shape,
            value,
            Op::Pinball {
                pred,
                target: target.to_vec(),
                q,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar root. Deterministic: the same tape always
    /// yields bitwise-identical gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_shape = &self.nodes[root.0].shape;
        if !root_shape.is_scalar() {
            return Err(AutodiffError::NonScalarRoot(root_shape.clone()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            sizes: self.nodes.iter().map(|n| n.value.len()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let target = &self.nodes[v.0];
            if !target.requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; target.value.len()]);
            f(buf);
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatVec(m, v) => {
                let vd = val(*v);
                let md = val(*m);
                let cols = vd.len();
                acc(*m, &mut |gm| {
                    for (r, row) in gm.chunks_exact_mut(cols).enumerate() {
                        if g[r] != 0.0 {
                            axpy(g[r], vd, row);
                        }
                    }
                });
                acc(*v, &mut |gv| {
                    for (r, row) in md.chunks_exact(cols).enumerate() {
                        if g[r] != 0.0 {
                            axpy(g[r], row, gv);
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| axpy(1.0, g, ga));
                acc(*b, &mut |gb| axpy(1.0, g, gb));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| axpy(1.0, g, ga));
                acc(*b, &mut |gb| axpy(-1.0, g, gb));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] += g[i] * av[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let bv = val(*b);
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / bv[i];
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] -= g[i] * y[i] / bv[i];
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |ga| axpy(*c, g, ga)),
            Op::AddScalar(a) => acc(*a, &mut |ga| axpy(1.0, g, ga)),
            Op::ScaleBy(a, s) => {
                let c = val(*s)[0];
                let av = val(*a);
                acc(*a, &mut |ga| axpy(c, g, ga));
                acc(*s, &mut |gs| gs[0] += dot(g, av));
            }
            Op::Recip(a) => acc(*a, &mut |ga| {
                for i in 0..ga.len() {
                    ga[i] -= g[i] * y[i] * y[i];
                }
            }),
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }),
            Op::Exp(a) => acc(*a, &mut |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * y[i];
                }
            }),
            Op::Ln(a) => {
                let av = val(*a);
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / av[i];
                    }
                })
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    acc(p, &mut |gp| axpy(1.0, &g[offset..offset + len], gp));
                    offset += len;
                }
            }
            Op::Slice(a, start) => {
                let len = g.len();
                acc(*a, &mut |ga| axpy(1.0, g, &mut ga[*start..*start + len]));
            }
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Pinball { pred, target, q } => {
                let pv = val(*pred);
                acc(*pred, &mut |gp| {
                    for i in 0..gp.len() {
                        let d = if target[i] >= pv[i] { -q } else { 1.0 - q };
                        gp[i] += g[i] * d;
                    }
                })
            }
        }
    }
}

/// Pinball (quantile) loss of forecast `zhat` for actual `z` at order `q`.
pub fn pinball_value(z: f64, zhat: f64, q: f64) -> f64 {
    if z >= zhat {
        (z - zhat) * q
    } else {
        (z - zhat) * (q - 1.0)
    }
}

/// Largest relative discrepancy between the tape gradient of a scalar
/// function and its central finite difference, over all components of `x`.
///
/// Each component contributes `|analytic - numeric| / (|numeric| + 1e-12)`.
/// NaN anywhere makes the result NaN. Inputs sitting exactly on a kink of
/// `f` (e.g. pinball at `z == zhat`) are outside the contract.
pub fn grad_check<F>(f: F, x: &[f64], shape: Shape, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(AutodiffError::InvalidArgument {
            op: "grad_check",
            detail: format!("eps must be positive, got {eps}"),
        });
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.to_vec(), shape.clone())?;
    let out = f(&mut tape, xv)?;
    let analytic = tape.backward(out)?.get(xv).into_owned();

    let eval = |point: Vec<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(point, shape.clone())?;
        let o = f(&mut t, v)?;
        Ok(t.scalar(o))
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / (numeric.abs() + 1e-12);
        if err.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
