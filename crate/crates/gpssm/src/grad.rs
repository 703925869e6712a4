//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Training maximizes a Monte-Carlo objective that is a deterministic
//! function of the parameters once the noise draws are fixed, so its
//! gradient can be taken exactly by recording every scalar operation on a
//! [`Tape`] and sweeping it backwards. The [`Scalar`] trait lets the same
//! model code run either on plain `f64` (cheap evaluation) or on tape
//! variables (gradient evaluation); there is a single implementation of
//! every formula in the crate.
//!
//! ```
//! use gpssm::grad::{Scalar, Tape, Var};
//!
//! let tape = Tape::new();
//! let x = tape.var(0.5);
//! let y = (x * x + 3.0).ln();
//! let grads = tape.gradient(y);
//! let expected = 2.0 * 0.5 / (0.25 + 3.0);
//! assert!((grads[x.index().unwrap()] - expected).abs() < 1e-14);
//! ```

use std::cell::RefCell;
use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A differentiable scalar: either `f64` or a tape [`Var`].
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + PartialOrd
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Current numeric value (used for branching, never differentiated).
    fn val(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn recip(self) -> Self {
        Self::from_f64(1.0) / self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn val(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

#[derive(Clone, Copy)]
struct Node {
    parent: [u32; 2],
    partial: [f64; 2],
}

/// Record of scalar operations; owns the adjoint sweep.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape { nodes: RefCell::new(Vec::with_capacity(n)) }
    }

    /// Creates a leaf variable whose gradient can be read back by index.
    pub fn var(&self, val: f64) -> Var<'_> {
        let idx = self.push(u32::MAX, 0.0, u32::MAX, 0.0);
        Var::Node { tape: self, idx, val }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, p0: u32, g0: f64, p1: u32, g1: f64) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { parent: [p0, p1], partial: [g0, g1] });
        idx
    }

    /// Adjoints of every node with respect to `output`.
    ///
    /// Leaf gradients are read at the indices returned by [`Var::index`].
    /// A constant output has no tape presence and yields an empty vector.
    pub fn gradient(&self, output: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; nodes.len()];
        let root = match output {
            Var::Const(_) => return adjoint,
            Var::Node { idx, .. } => idx as usize,
        };
        adjoint[root] = 1.0;
        for i in (0..=root).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                if node.parent[k] != u32::MAX {
                    adjoint[node.parent[k] as usize] += node.partial[k] * a;
                }
            }
        }
        adjoint
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// A scalar tracked on a [`Tape`]. Constants stay off the tape.
#[derive(Clone, Copy)]
pub enum Var<'t> {
    Const(f64),
    Node { tape: &'t Tape, idx: u32, val: f64 },
}

impl<'t> Var<'t> {
    /// Leaf index on the tape, if this value is tracked.
    pub fn index(self) -> Option<usize> {
        match self {
            Var::Const(_) => None,
            Var::Node { idx, .. } => Some(idx as usize),
        }
    }

    fn unary(self, val: f64, partial: f64) -> Var<'t> {
        match self {
            Var::Const(_) => Var::Const(val),
            Var::Node { tape, idx, .. } => {
                let new = tape.push(idx, partial, u32::MAX, 0.0);
                Var::Node { tape, idx: new, val }
            }
        }
    }

    fn binary(self, rhs: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        match (self, rhs) {
            (Var::Const(_), Var::Const(_)) => Var::Const(val),
            (Var::Node { tape, idx, .. }, Var::Const(_)) => {
                let new = tape.push(idx, da, u32::MAX, 0.0);
                Var::Node { tape, idx: new, val }
            }
            (Var::Const(_), Var::Node { tape, idx, .. }) => {
                let new = tape.push(idx, db, u32::MAX, 0.0);
                Var::Node { tape, idx: new, val }
            }
            (Var::Node { tape, idx: i, .. }, Var::Node { idx: j, .. }) => {
                let new = tape.push(i, da, j, db);
                Var::Node { tape, idx: new, val }
            }
        }
    }
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.val())
    }
}

impl PartialEq for Var<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.val() == other.val()
    }
}

impl PartialOrd for Var<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.val().partial_cmp(&other.val())
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, self.val() + rhs.val(), 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, self.val() - rhs.val(), 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, self.val() * rhs.val(), rhs.val(), self.val())
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let b = rhs.val();
        self.binary(rhs, self.val() / b, 1.0 / b, -self.val() / (b * b))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(-self.val(), -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(self.val() + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(self.val() - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(self.val() * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(self.val() / rhs, 1.0 / rhs)
    }
}

impl<'t> Scalar for Var<'t> {
    fn from_f64(v: f64) -> Self {
        Var::Const(v)
    }

    fn val(self) -> f64 {
        match self {
            Var::Const(v) => v,
            Var::Node { val, .. } => val,
        }
    }

    fn exp(self) -> Self {
        let e = self.val().exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.val().ln(), 1.0 / self.val())
    }

    fn sqrt(self) -> Self {
        let r = self.val().sqrt();
        self.unary(r, 0.5 / r)
    }

    fn abs(self) -> Self {
        self.unary(self.val().abs(), self.val().signum())
    }

    fn powi(self, n: i32) -> Self {
        let v = self.val();
        self.unary(v.powi(n), f64::from(n) * v.powi(n - 1))
    }
}
