//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! The graph is a tape: every op records its parents and a backward closure,
//! and `backward()` walks the tape in reverse construction order. Compute is
//! f64 throughout; model files store f32 (see `container`).

use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;

use rand::Rng;
use thiserror::Error;

mod kernels;
mod loss;
pub mod optim;

pub use loss::{
    binary_cross_entropy, softmax_cross_entropy, softmax_cross_entropy_weighted, softmax_rows,
};
pub use optim::{OptimKind, Optimizer};

pub(crate) use kernels::{matmul_nn, matmul_nt, matmul_tn};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for buffer of length {len}")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("target index {index} out of range for {classes} classes at row {row}")]
    IndexOutOfRange {
        row: usize,
        index: usize,
        classes: usize,
    },
    #[error("{0}")]
    InvalidValue(String),
    #[error("registered parameter '{0}' has no gradient; call backward() before step()")]
    MissingGrad(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static NONFINITE_OPS: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Number of log/exp evaluations that produced a non-finite value on this
/// thread. Domain violations follow float semantics instead of crashing; this
/// counter is the diagnostic.
pub fn nonfinite_op_count() -> u64 {
    NONFINITE_OPS.with(|c| c.get())
}

pub fn reset_nonfinite_op_count() {
    NONFINITE_OPS.with(|c| c.set(0));
}

fn note_nonfinite(count: u64) {
    if count > 0 {
        NONFINITE_OPS.with(|c| c.set(c.get() + count));
    }
}

type BackwardFn = Box<dyn Fn(&[f64])>;

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// A dense row-major f64 tensor, cheaply clonable (shared handle).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Node>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn new_node(
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(Node {
                id: next_id(),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward,
            }),
        }
    }

    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(TensorError::InvalidShape {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self::new_node(data, shape.to_vec(), false, vec![], None))
    }

    pub fn scalar(v: f64) -> Tensor {
        Self::new_node(vec![v], vec![1], false, vec![], None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::new_node(vec![0.0; numel(shape)], shape.to_vec(), false, vec![], None)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Self::new_node(vec![1.0; numel(shape)], shape.to_vec(), false, vec![], None)
    }

    /// Uniform init in [-scale, scale]; the workhorse for weight matrices.
    pub fn rand_uniform<R: Rng>(shape: &[usize], scale: f64, rng: &mut R) -> Tensor {
        let data = (0..numel(shape))
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        Self::new_node(data, shape.to_vec(), false, vec![], None)
    }

    /// Marks this tensor as a trainable leaf.
    pub fn requires_grad(self) -> Tensor {
        if self.inner.requires_grad {
            return self;
        }
        Tensor {
            inner: Rc::new(Node {
                id: next_id(),
                shape: self.inner.shape.clone(),
                data: RefCell::new(self.inner.data.borrow().clone()),
                grad: RefCell::new(None),
                requires_grad: true,
                parents: vec![],
                backward: None,
            }),
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn len(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.inner.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// In-place data overwrite. Only meaningful for leaves (optimizer updates,
    /// deserialization); using it mid-graph invalidates recorded gradients.
    pub fn set_data(&self, data: &[f64]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), data.len(), "set_data length mismatch");
        d.copy_from_slice(data);
    }

    /// Same values, no graph history, no grad tracking.
    pub fn detach(&self) -> Tensor {
        Self::new_node(
            self.inner.data.borrow().clone(),
            self.inner.shape.clone(),
            false,
            vec![],
            None,
        )
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => {
                for (a, &v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar. Populates `grad` on every
    /// `requires_grad` ancestor; gradients accumulate additively across
    /// multiple consumers.
    pub fn backward(&self) -> Result<()> {
        if self.len() != 1 {
            return Err(TensorError::InvalidValue(format!(
                "backward() needs a scalar, got shape {:?}",
                self.inner.shape
            )));
        }
        // Topological order == reverse construction order among reachable nodes.
        let mut stack = vec![self.clone()];
        let mut seen = std::collections::HashSet::new();
        let mut order: Vec<Tensor> = Vec::new();
        while let Some(t) = stack.pop() {
            if !seen.insert(t.inner.id) {
                continue;
            }
            for p in &t.inner.parents {
                if p.grad_relevant() {
                    stack.push(p.clone());
                }
            }
            order.push(t);
        }
        order.sort_by(|a, b| b.inner.id.cmp(&a.inner.id));

        self.accumulate_grad(&[1.0]);
        for node in &order {
            if let Some(back) = &node.inner.backward {
                let g = node
                    .inner
                    .grad
                    .borrow()
                    .clone()
                    .unwrap_or_else(|| vec![0.0; node.len()]);
                back(&g);
                // Interior grads are scratch; only leaves keep theirs.
                if !node.inner.requires_grad && !Rc::ptr_eq(&node.inner, &self.inner) {
                    *node.inner.grad.borrow_mut() = None;
                }
            }
        }
        Ok(())
    }

    /// True if this tensor participates in gradient flow (leaf param or
    /// derived from one).
    fn grad_relevant(&self) -> bool {
        self.inner.requires_grad || self.inner.backward.is_some()
    }

    fn binary_result(
        &self,
        other: &Tensor,
        data: Vec<f64>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        let track = self.grad_relevant() || other.grad_relevant();
        Self::new_node(
            data,
            self.inner.shape.clone(),
            false,
            if track {
                vec![self.clone(), other.clone()]
            } else {
                vec![]
            },
            if track { backward } else { None },
        )
    }

    fn unary_result(&self, data: Vec<f64>, shape: Vec<usize>, backward: Option<BackwardFn>) -> Tensor {
        let track = self.grad_relevant();
        Self::new_node(
            data,
            shape,
            false,
            if track { vec![self.clone()] } else { vec![] },
            if track { backward } else { None },
        )
    }

    fn check_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.inner.shape != other.inner.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.inner.shape.clone(),
                rhs: other.inner.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(self.binary_result(
            other,
            data,
            Some(Box::new(move |g| {
                if pa.grad_relevant() {
                    pa.accumulate_grad(g);
                }
                if pb.grad_relevant() {
                    pb.accumulate_grad(g);
                }
            })),
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        Ok(self.binary_result(
            other,
            data,
            Some(Box::new(move |g| {
                if pa.grad_relevant() {
                    pa.accumulate_grad(g);
                }
                if pb.grad_relevant() {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    pb.accumulate_grad(&neg);
                }
            })),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "mul")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        let (pa, pb) = (self.clone(), other.clone());
        let (da, db) = (self.to_vec(), other.to_vec());
        Ok(self.binary_result(
            other,
            data,
            Some(Box::new(move |g| {
                if pa.grad_relevant() {
                    let ga: Vec<f64> = g.iter().zip(&db).map(|(v, b)| v * b).collect();
                    pa.accumulate_grad(&ga);
                }
                if pb.grad_relevant() {
                    let gb: Vec<f64> = g.iter().zip(&da).map(|(v, a)| v * a).collect();
                    pb.accumulate_grad(&gb);
                }
            })),
        ))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| v + c).collect();
        let p = self.clone();
        self.unary_result(
            data,
            self.inner.shape.clone(),
            Some(Box::new(move |g| p.accumulate_grad(g))),
        )
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|v| v * c).collect();
        let p = self.clone();
        self.unary_result(
            data,
            self.inner.shape.clone(),
            Some(Box::new(move |g| {
                let gs: Vec<f64> = g.iter().map(|v| v * c).collect();
                p.accumulate_grad(&gs);
            })),
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|&x| sigmoid_stable(x)).collect();
        let p = self.clone();
        let saved = out.clone();
        self.unary_result(
            out,
            self.inner.shape.clone(),
            Some(Box::new(move |g| {
                let gs: Vec<f64> = g
                    .iter()
                    .zip(&saved)
                    .map(|(v, s)| v * s * (1.0 - s))
                    .collect();
                p.accumulate_grad(&gs);
            })),
        )
    }

    pub fn tanh(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x.tanh()).collect();
        let p = self.clone();
        let saved = out.clone();
        self.unary_result(
            out,
            self.inner.shape.clone(),
            Some(Box::new(move |g| {
                let gs: Vec<f64> = g.iter().zip(&saved).map(|(v, t)| v * (1.0 - t * t)).collect();
                p.accumulate_grad(&gs);
            })),
        )
    }

    pub fn relu(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let p = self.clone();
        let mask: Vec<f64> = self
            .data()
            .iter()
            .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
            .collect();
        self.unary_result(
            out,
            self.inner.shape.clone(),
            Some(Box::new(move |g| {
                let gs: Vec<f64> = g.iter().zip(&mask).map(|(v, m)| v * m).collect();
                p.accumulate_grad(&gs);
            })),
        )
    }

    pub fn exp(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x.exp()).collect();
        note_nonfinite(out.iter().filter(|v| !v.is_finite()).count() as u64);
        let p = self.clone();
        let saved = out.clone();
        self.unary_result(
            out,
            self.inner.shape.clone(),
            Some(Box::new(move |g| {
                let gs: Vec<f64> = g.iter().zip(&saved).map(|(v, e)| v * e).collect();
                p.accumulate_grad(&gs);
            })),
        )
    }

    pub fn log(&self) -> Tensor {
        let out: Vec<f64> = self.data().iter().map(|x| x.ln()).collect();
        note_nonfinite(out.iter().filter(|v| !v.is_finite()).count() as u64);
        let p = self.clone();
        let inputs = self.to_vec();
        self.unary_result(
            out,
            self.inner.shape.clone(),
            Some(Box::new(move |g| {
                let gs: Vec<f64> = g.iter().zip(&inputs).map(|(v, x)| v / x).collect();
                p.accumulate_grad(&gs);
            })),
        )
    }

    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.len();
        let p = self.clone();
        self.unary_result(
            vec![total],
            vec![1],
            Some(Box::new(move |g| {
                let gs = vec![g[0]; n];
                p.accumulate_grad(&gs);
            })),
        )
    }

    pub fn mean(&self) -> Tensor {
        let n = self.len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// `[m, k] @ [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (&self.inner.shape, &other.inner.shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_nn(&self.data(), &other.data(), m, k, n);
        let (pa, pb) = (self.clone(), other.clone());
        let (da, db) = (self.to_vec(), other.to_vec());
        let out = Tensor::new_node(
            data,
            vec![m, n],
            false,
            if pa.grad_relevant() || pb.grad_relevant() {
                vec![pa.clone(), pb.clone()]
            } else {
                vec![]
            },
            if pa.grad_relevant() || pb.grad_relevant() {
                Some(Box::new(move |g| {
                    if pa.grad_relevant() {
                        // dA = dC @ B^T
                        let ga = matmul_nt(g, &db, m, n, k);
                        pa.accumulate_grad(&ga);
                    }
                    if pb.grad_relevant() {
                        // dB = A^T @ dC
                        let gb = matmul_tn(&da, g, m, k, n);
                        pb.accumulate_grad(&gb);
                    }
                }))
            } else {
                None
            },
        );
        Ok(out)
    }

    /// Adds a `[1, n]` row vector to every row of a `[m, n]` matrix (bias add).
    pub fn add_rowvec(&self, row: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (&self.inner.shape, &row.inner.shape);
        if sa.len() != 2 || sb.len() != 2 || sb[0] != 1 || sa[1] != sb[1] {
            return Err(TensorError::ShapeMismatch {
                op: "add_rowvec",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let (m, n) = (sa[0], sa[1]);
        let rd = row.to_vec();
        let mut data = self.to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += rd[j];
            }
        }
        let (pa, pb) = (self.clone(), row.clone());
        Ok(self.binary_result(
            row,
            data,
            Some(Box::new(move |g| {
                if pa.grad_relevant() {
                    pa.accumulate_grad(g);
                }
                if pb.grad_relevant() {
                    let mut gr = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            gr[j] += g[i * n + j];
                        }
                    }
                    pb.accumulate_grad(&gr);
                }
            })),
        ))
    }

    /// Column slice `[m, cols.len()]` of a `[m, n]` matrix, columns `[start, end)`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let s = &self.inner.shape;
        if s.len() != 2 || end > s[1] || start >= end {
            return Err(TensorError::InvalidValue(format!(
                "slice_cols {start}..{end} invalid for shape {s:?}"
            )));
        }
        let (m, n) = (s[0], s[1]);
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        {
            let d = self.data();
            for i in 0..m {
                data.extend_from_slice(&d[i * n + start..i * n + end]);
            }
        }
        let p = self.clone();
        Ok(self.unary_result(
            data,
            vec![m, w],
            Some(Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                for i in 0..m {
                    gp[i * n + start..i * n + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                p.accumulate_grad(&gp);
            })),
        ))
    }

    /// Horizontal concat of `[m, n_i]` matrices into `[m, sum(n_i)]`.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(TensorError::InvalidValue("concat_cols of nothing".into()));
        }
        let m = parts[0].inner.shape[0];
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = &p.inner.shape;
            if s.len() != 2 || s[0] != m {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].inner.shape.clone(),
                    rhs: s.clone(),
                });
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        {
            let borrows: Vec<Ref<'_, Vec<f64>>> = parts.iter().map(|p| p.data()).collect();
            for i in 0..m {
                for (p, &w) in borrows.iter().zip(&widths) {
                    data.extend_from_slice(&p[i * w..(i + 1) * w]);
                }
            }
        }
        let track = parts.iter().any(|p| p.grad_relevant());
        let parents: Vec<Tensor> = parts.to_vec();
        let closure_parents = parents.clone();
        let ws = widths.clone();
        Ok(Tensor::new_node(
            data,
            vec![m, total],
            false,
            if track { parents } else { vec![] },
            if track {
                Some(Box::new(move |g| {
                    let mut offset = 0;
                    for (p, &w) in closure_parents.iter().zip(&ws) {
                        if p.grad_relevant() {
                            let mut gp = vec![0.0; m * w];
                            for i in 0..m {
                                gp[i * w..(i + 1) * w]
                                    .copy_from_slice(&g[i * total + offset..i * total + offset + w]);
                            }
                            p.accumulate_grad(&gp);
                        }
                        offset += w;
                    }
                }))
            } else {
                None
            },
        ))
    }

    /// Vertical concat of `[m_i, n]` matrices into `[sum(m_i), n]`.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(TensorError::InvalidValue("concat_rows of nothing".into()));
        }
        let n = parts[0].inner.shape[1];
        let mut heights = Vec::with_capacity(parts.len());
        for p in parts {
            let s = &p.inner.shape;
            if s.len() != 2 || s[1] != n {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: parts[0].inner.shape.clone(),
                    rhs: s.clone(),
                });
            }
            heights.push(s[0]);
        }
        let total: usize = heights.iter().sum();
        let mut data = Vec::with_capacity(total * n);
        for p in parts {
            data.extend_from_slice(&p.data());
        }
        let track = parts.iter().any(|p| p.grad_relevant());
        let parents: Vec<Tensor> = parts.to_vec();
        let closure_parents = parents.clone();
        let hs = heights.clone();
        Ok(Tensor::new_node(
            data,
            vec![total, n],
            false,
            if track { parents } else { vec![] },
            if track {
                Some(Box::new(move |g| {
                    let mut offset = 0;
                    for (p, &h) in closure_parents.iter().zip(&hs) {
                        if p.grad_relevant() {
                            p.accumulate_grad(&g[offset * n..(offset + h) * n]);
                        }
                        offset += h;
                    }
                }))
            } else {
                None
            },
        ))
    }

    /// Mean over rows: `[m, n] -> [1, n]`.
    pub fn mean_rows(&self) -> Result<Tensor> {
        let s = &self.inner.shape;
        if s.len() != 2 {
            return Err(TensorError::InvalidValue(format!(
                "mean_rows needs a matrix, got {s:?}"
            )));
        }
        let (m, n) = (s[0], s[1]);
        let mut data = vec![0.0; n];
        {
            let d = self.data();
            for i in 0..m {
                for j in 0..n {
                    data[j] += d[i * n + j];
                }
            }
        }
        for v in &mut data {
            *v /= m as f64;
        }
        let p = self.clone();
        Ok(self.unary_result(
            data,
            vec![1, n],
            Some(Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        gp[i * n + j] = g[j] / m as f64;
                    }
                }
                p.accumulate_grad(&gp);
            })),
        ))
    }

    /// Column-wise maximum over rows: `[m, n]` -> `[1, n]`. Gradient flows to
    /// the first maximal row of each column.
    pub fn max_rows(&self) -> Result<Tensor> {
        let s = &self.inner.shape;
        if s.len() != 2 || s[0] == 0 {
            return Err(TensorError::InvalidValue(format!(
                "max_rows needs a non-empty matrix, got {s:?}"
            )));
        }
        let (m, n) = (s[0], s[1]);
        let mut data = vec![f64::NEG_INFINITY; n];
        let mut argmax = vec![0usize; n];
        {
            let d = self.data();
            for i in 0..m {
                for j in 0..n {
                    if d[i * n + j] > data[j] {
                        data[j] = d[i * n + j];
                        argmax[j] = i;
                    }
                }
            }
        }
        let p = self.clone();
        Ok(self.unary_result(
            data,
            vec![1, n],
            Some(Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                for (j, &i) in argmax.iter().enumerate() {
                    gp[i * n + j] = g[j];
                }
                p.accumulate_grad(&gp);
            })),
        ))
    }

    /// Row gather from an embedding table: `weight[V, E]` + indices -> `[len, E]`.
    /// Backward scatter-adds into the table rows.
    pub fn embedding(weight: &Tensor, indices: &[usize]) -> Result<Tensor> {
        let s = &weight.inner.shape;
        if s.len() != 2 {
            return Err(TensorError::InvalidValue(format!(
                "embedding table must be a matrix, got {s:?}"
            )));
        }
        let (v, e) = (s[0], s[1]);
        for (row, &idx) in indices.iter().enumerate() {
            if idx >= v {
                return Err(TensorError::IndexOutOfRange {
                    row,
                    index: idx,
                    classes: v,
                });
            }
        }
        let mut data = Vec::with_capacity(indices.len() * e);
        {
            let d = weight.data();
            for &idx in indices {
                data.extend_from_slice(&d[idx * e..(idx + 1) * e]);
            }
        }
        let p = weight.clone();
        let idxs = indices.to_vec();
        Ok(weight.unary_result(
            data,
            vec![indices.len(), e],
            Some(Box::new(move |g| {
                let mut gw = vec![0.0; v * e];
                for (row, &idx) in idxs.iter().enumerate() {
                    for j in 0..e {
                        gw[idx * e + j] += g[row * e + j];
                    }
                }
                p.accumulate_grad(&gw);
            })),
        ))
    }

    /// Inverted dropout: zero with probability `rate` and scale survivors by
    /// 1/(1-rate) during training; identity at inference.
    pub fn dropout<R: Rng>(&self, rate: f64, training: bool, rng: &mut R) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidValue(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            let p = self.clone();
            return Ok(self.unary_result(
                self.to_vec(),
                self.inner.shape.clone(),
                Some(Box::new(move |g| p.accumulate_grad(g))),
            ));
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
            .collect();
        let data: Vec<f64> = self.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let p = self.clone();
        Ok(self.unary_result(
            data,
            self.inner.shape.clone(),
            Some(Box::new(move |g| {
                let gs: Vec<f64> = g.iter().zip(&mask).map(|(v, m)| v * m).collect();
                p.accumulate_grad(&gs);
            })),
        ))
    }
}

/// Numerically stable scalar logistic function.
pub fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests;
