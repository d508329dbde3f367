//! Wengert tape for reverse-mode differentiation.
//!
//! Every node holds a batched [`Mat`] value; elementwise operations broadcast
//! over rows and columns of size one. Nodes are appended in evaluation order,
//! so the node index is a topological order and the reverse sweep simply walks
//! the vector backwards.

use std::cell::{Ref, RefCell};
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::mat::{broadcast_shape, zip_broadcast, Mat};
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    DivScalar(usize, f64),
    Offset(usize, f64),
    Tanh(usize),
    Sin(usize),
    Cos(usize),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Powi(usize, i32),
    Clamp(usize, f64, f64),
    MatMul(usize, usize),
    Row(usize, usize),
    Sum(usize),
    Mean(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::DivScalar(..) => "div_scalar",
            Op::Offset(..) => "offset",
            Op::Tanh(..) => "tanh",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Sqrt(..) => "sqrt",
            Op::Powi(..) => "powi",
            Op::Clamp(..) => "clamp",
            Op::MatMul(..) => "matmul",
            Op::Row(..) => "row",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
        }
    }
}

struct Node {
    op: Op,
    value: Mat,
}

/// Evaluates `op` given access to the values of earlier nodes.
fn compute<'a>(op: Op, v: impl Fn(usize) -> &'a Mat) -> Mat {
    match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::Add(a, b) => zip_broadcast(v(a), v(b), |x, y| x + y),
        Op::Sub(a, b) => zip_broadcast(v(a), v(b), |x, y| x - y),
        Op::Mul(a, b) => zip_broadcast(v(a), v(b), |x, y| x * y),
        Op::Div(a, b) => zip_broadcast(v(a), v(b), |x, y| x / y),
        Op::Neg(a) => v(a).map(|x| -x),
        Op::Scale(a, k) => v(a).map(|x| x * k),
        Op::DivScalar(a, k) => v(a).map(|x| x / k),
        Op::Offset(a, k) => v(a).map(|x| x + k),
        Op::Tanh(a) => v(a).map(f64::tanh),
        Op::Sin(a) => v(a).map(f64::sin),
        Op::Cos(a) => v(a).map(f64::cos),
        Op::Exp(a) => v(a).map(f64::exp),
        Op::Ln(a) => v(a).map(f64::ln),
        Op::Sqrt(a) => v(a).map(f64::sqrt),
        Op::Powi(a, n) => v(a).map(|x| x.powi(n)),
        Op::Clamp(a, lo, hi) => v(a).map(|x| x.min(hi).max(lo)),
        Op::MatMul(a, b) => v(a).matmul(v(b)),
        Op::Row(a, r) => Mat::row_vector(v(a).row(r).to_vec()),
        Op::Sum(a) => Mat::scalar(v(a).sum()),
        Op::Mean(a) => Mat::scalar(v(a).sum() / v(a).len() as f64),
    }
}

/// A recording of one forward evaluation.
///
/// The tape is rebuilt for every optimisation step and is confined to the
/// thread that created it.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    nonfinite: RefCell<Option<(usize, &'static str)>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.index, self.value())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an input node: a trainable parameter or a constant.
    pub fn var(&self, value: Mat) -> Var<'_> {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.var(Mat::scalar(value))
    }

    /// First node whose primal value contained NaN or ±∞.
    pub fn first_nonfinite(&self) -> Option<(usize, &'static str)> {
        *self.nonfinite.borrow()
    }

    /// Errors with the originating operation if any primal is non-finite.
    pub fn check_finite(&self) -> Result<(), AutodiffError> {
        match self.first_nonfinite() {
            None => Ok(()),
            Some((index, op)) => Err(AutodiffError::NonFinite { index, op }),
        }
    }

    fn push(&self, op: Op, value: Mat) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len();
        if !value.all_finite() {
            let mut nf = self.nonfinite.borrow_mut();
            if nf.is_none() {
                *nf = Some((index, op.name()));
            }
        }
        nodes.push(Node { op, value });
        Var { tape: self, index }
    }

    fn apply(&self, op: Op) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            compute(op, |i| &nodes[i].value)
        };
        self.push(op, value)
    }

    /// Re-evaluates every non-leaf node from the recorded leaves.
    pub fn replay(&self) -> Vec<Mat> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<Mat> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                op => compute(op, |i| &values[i]),
            };
            values.push(v);
        }
        values
    }

    /// True when [`Tape::replay`] reproduces every recorded value bit for bit.
    pub fn replay_matches(&self) -> bool {
        let replayed = self.replay();
        let nodes = self.nodes.borrow();
        nodes.iter().zip(&replayed).all(|(n, r)| {
            n.value.shape() == r.shape()
                && n
                    .value
                    .as_slice()
                    .iter()
                    .zip(r.as_slice())
                    .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }

    /// Reverse sweep: ∂loss/∂v for every `v` in `wrt`.
    ///
    /// Nodes in `wrt` that do not influence `loss` get a zero gradient of
    /// their own shape.
    pub fn gradients(&self, loss: Var<'_>, wrt: &[Var<'_>]) -> Result<Vec<Mat>, AutodiffError> {
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.index].value;
        if loss_value.shape() != (1, 1) {
            return Err(AutodiffError::NotScalar(loss_value.shape()));
        }
        if !loss_value.item().is_finite() {
            return Err(AutodiffError::NonFiniteLoss(loss_value.item()));
        }

        let mut grads: Vec<Option<Mat>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(Mat::scalar(1.0));

        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, &nodes, a, g.clone());
                    accumulate(&mut grads, &nodes, b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, &nodes, a, g.clone());
                    accumulate(&mut grads, &nodes, b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = zip_broadcast(&g, &nodes[b].value, |x, y| x * y);
                    let gb = zip_broadcast(&g, &nodes[a].value, |x, y| x * y);
                    accumulate(&mut grads, &nodes, a, ga);
                    accumulate(&mut grads, &nodes, b, gb);
                }
                Op::Div(a, b) => {
                    let bv = &nodes[b].value;
                    let ga = zip_broadcast(&g, bv, |x, y| x / y);
                    let q = zip_broadcast(&node.value, bv, |y, d| -y / d);
                    let gb = zip_broadcast(&g, &q, |x, y| x * y);
                    accumulate(&mut grads, &nodes, a, ga);
                    accumulate(&mut grads, &nodes, b, gb);
                }
                Op::Neg(a) => accumulate(&mut grads, &nodes, a, g.map(|x| -x)),
                Op::Scale(a, k) => accumulate(&mut grads, &nodes, a, g.map(|x| x * k)),
                Op::DivScalar(a, k) => accumulate(&mut grads, &nodes, a, g.map(|x| x / k)),
                Op::Offset(a, _) => accumulate(&mut grads, &nodes, a, g),
                Op::Tanh(a) => {
                    let ga = zip_broadcast(&g, &node.value, |x, y| x * (1.0 - y * y));
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::Sin(a) => {
                    let ga = zip_broadcast(&g, &nodes[a].value, |x, v| x * v.cos());
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::Cos(a) => {
                    let ga = zip_broadcast(&g, &nodes[a].value, |x, v| -x * v.sin());
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::Exp(a) => {
                    let ga = zip_broadcast(&g, &node.value, |x, y| x * y);
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::Ln(a) => {
                    let ga = zip_broadcast(&g, &nodes[a].value, |x, v| x / v);
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::Sqrt(a) => {
                    // subgradient 0 at the kink so an exact fit stays finite
                    let ga = zip_broadcast(&g, &node.value, |x, y| if y == 0.0 { 0.0 } else { 0.5 * x / y });
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::Powi(a, n) => {
                    let ga = zip_broadcast(&g, &nodes[a].value, |x, v| x * f64::from(n) * v.powi(n - 1));
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = zip_broadcast(&g, &nodes[a].value, |x, v| if v >= lo && v <= hi { x } else { 0.0 });
                    accumulate(&mut grads, &nodes, a, ga);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_transpose_rhs(&nodes[b].value);
                    let gb = nodes[a].value.transpose_matmul(&g);
                    accumulate(&mut grads, &nodes, a, ga);
                    accumulate(&mut grads, &nodes, b, gb);
                }
                Op::Row(a, r) => {
                    let (rows, cols) = nodes[a].value.shape();
                    let acc = grads[a].get_or_insert_with(|| Mat::zeros(rows, cols));
                    for (o, x) in acc.as_mut_slice()[r * cols..(r + 1) * cols].iter_mut().zip(g.as_slice()) {
                        *o += x;
                    }
                }
                Op::Sum(a) => {
                    let (rows, cols) = nodes[a].value.shape();
                    accumulate(&mut grads, &nodes, a, Mat::filled(rows, cols, g.item()));
                }
                Op::Mean(a) => {
                    let (rows, cols) = nodes[a].value.shape();
                    let n = (rows * cols) as f64;
                    accumulate(&mut grads, &nodes, a, Mat::filled(rows, cols, g.item() / n));
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|v| {
                grads
                    .get(v.index)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| {
                        let (r, c) = nodes[v.index].value.shape();
                        Mat::zeros(r, c)
                    })
            })
            .collect())
    }
}

fn accumulate(grads: &mut [Option<Mat>], nodes: &[Node], target: usize, g: Mat) {
    let shape = nodes[target].value.shape();
    let g = g.reduce_to(shape);
    match &mut grads[target] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Borrowed view of the primal value.
    pub fn value(&self) -> Ref<'t, Mat> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.index].value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    /// Primal of a 1×1 node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, op: Op) -> Var<'t> {
        self.tape.apply(op)
    }

    fn binary(self, other: Var<'t>, op: Op) -> Var<'t> {
        assert!(std::ptr::eq(self.tape, other.tape), "operands live on different tapes");
        if broadcast_shape(self.shape(), other.shape()).is_none() {
            panic!(
                "incompatible shapes {:?} and {:?} in {}",
                self.shape(),
                other.shape(),
                op.name()
            );
        }
        self.tape.apply(op)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.index))
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(Op::Sin(self.index))
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(Op::Cos(self.index))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.index))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.index))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.index))
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(Op::Powi(self.index, n))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    /// `max(lo, min(self, hi))` elementwise.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.index, lo, hi))
    }

    /// `self · rhs` as matrices.
    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        assert_eq!(self.shape().1, rhs.shape().0, "matmul inner dimension mismatch");
        self.tape.apply(Op::MatMul(self.index, rhs.index))
    }

    /// Row `r` as a 1×cols node.
    pub fn row(self, r: usize) -> Var<'t> {
        assert!(r < self.shape().0, "row index out of range");
        self.unary(Op::Row(self.index, r))
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum(self.index))
    }

    pub fn mean(self) -> Var<'t> {
        self.unary(Op::Mean(self.index))
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $op:ident) => {
        impl<'t> $trait<Var<'t>> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.binary(rhs, Op::$op(self.index, rhs.index))
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(Op::Neg(self.index))
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, k: f64) -> Var<'t> {
        self.unary(Op::Offset(self.index, k))
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, k: f64) -> Var<'t> {
        self.unary(Op::Offset(self.index, -k))
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, k: f64) -> Var<'t> {
        self.unary(Op::Scale(self.index, k))
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, k: f64) -> Var<'t> {
        self.unary(Op::DivScalar(self.index, k))
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, v: Var<'t>) -> Var<'t> {
        v + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, v: Var<'t>) -> Var<'t> {
        -v + self
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}
