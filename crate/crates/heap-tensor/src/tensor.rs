use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::HashSet;
use std::rc::Rc;

use crate::Real;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Runs `f` with gradient tracking disabled on this thread: ops executed
/// inside produce plain leaves with no graph attached.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    GRAD_ENABLED.with(|g| {
        let prev = g.get();
        g.set(false);
        let out = f();
        g.set(prev);
        out
    })
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Gradient contributions to each parent of an op, aligned with the parents
/// list; `None` for parents that do not need a gradient (e.g. loss targets).
pub type ParentGrads<R> = Vec<Option<Vec<R>>>;

pub(crate) struct Node<R: Real> {
    pub parents: Vec<Tensor<R>>,
    /// Computes gradients w.r.t. each parent, given the completed output
    /// tensor (whose `grad` is fully accumulated when this runs).
    pub backward: Box<dyn Fn(&Tensor<R>) -> ParentGrads<R>>,
}

struct Inner<R: Real> {
    id: u64,
    shape: Vec<usize>,
    values: RefCell<Vec<R>>,
    grad: RefCell<Option<Vec<R>>>,
    requires_grad: bool,
    node: Option<Node<R>>,
}

/// N-dimensional array with optional reverse-mode gradient tracking.
///
/// Cheap to clone (shared payload). Values are written in place only for
/// leaves (optimizer updates, running statistics); everything an op produces
/// is treated as immutable.
pub struct Tensor<R: Real> {
    inner: Rc<Inner<R>>,
}

impl<R: Real> Clone for Tensor<R> {
    fn clone(&self) -> Self {
        Self { inner: Rc::clone(&self.inner) }
    }
}

impl<R: Real> Tensor<R> {
    pub fn from_vec(shape: &[usize], values: Vec<R>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape {:?} does not match {} values",
            shape,
            values.len()
        );
        Self {
            inner: Rc::new(Inner {
                id: next_id(),
                shape: shape.to_vec(),
                values: RefCell::new(values),
                grad: RefCell::new(None),
                requires_grad: false,
                node: None,
            }),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(shape, vec![R::ZERO; shape.iter().product()])
    }

    pub fn scalar(v: R) -> Self {
        Self::from_vec(&[1], vec![v])
    }

    /// Leaf with gradient tracking, i.e. trainable storage.
    pub fn leaf(shape: &[usize], values: Vec<R>) -> Self {
        let t = Self::from_vec(shape, values);
        // Sole owner here, so the Rc can be rebuilt with the flag set.
        let inner = Rc::try_unwrap(t.inner).ok().expect("fresh tensor is uniquely owned");
        Self {
            inner: Rc::new(Inner { requires_grad: true, ..inner }),
        }
    }

    /// Output of an op. Attaches the graph node only when tracking is active
    /// and some parent needs gradients.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        values: Vec<R>,
        parents: Vec<Tensor<R>>,
        backward: Box<dyn Fn(&Tensor<R>) -> ParentGrads<R>>,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            inner: Rc::new(Inner {
                id: next_id(),
                shape,
                values: RefCell::new(values),
                grad: RefCell::new(None),
                requires_grad: track,
                node: if track { Some(Node { parents, backward }) } else { None },
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn values(&self) -> Ref<'_, Vec<R>> {
        self.inner.values.borrow()
    }

    /// In-place access; reserved for leaves (parameters, running buffers).
    pub fn values_mut(&self) -> RefMut<'_, Vec<R>> {
        self.inner.values.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<R> {
        self.inner.values.borrow().clone()
    }

    pub fn grad(&self) -> Option<Vec<R>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Adds into the gradient slot; backward uses this, and tests inject
    /// synthetic gradients through it.
    pub fn accumulate_grad(&self, contrib: &[R]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                debug_assert_eq!(g.len(), contrib.len());
                for (a, b) in g.iter_mut().zip(contrib) {
                    *a += *b;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.inner.values.borrow().iter().all(|v| v.is_finite())
    }

    /// Scalar payload of a one-element tensor.
    pub fn item(&self) -> R {
        assert_eq!(self.numel(), 1, "item() on non-scalar tensor {:?}", self.shape());
        self.inner.values.borrow()[0]
    }
}

/// Reverse-mode accumulation from a scalar loss into every reachable tensor
/// that requires a gradient. Repeated calls accumulate; callers zero leaf
/// gradients between steps.
pub fn backward<R: Real>(loss: &Tensor<R>) {
    assert_eq!(loss.numel(), 1, "backward requires a scalar loss, got shape {:?}", loss.shape());

    // Post-order over the parent DAG: parents precede children, so the
    // reversed order hands every tensor its complete gradient before its
    // own backward fn runs.
    enum Visit<R: Real> {
        Enter(Tensor<R>),
        Exit(Tensor<R>),
    }
    let mut order: Vec<Tensor<R>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack = vec![Visit::Enter(loss.clone())];
    while let Some(v) = stack.pop() {
        match v {
            Visit::Enter(t) => {
                if !seen.insert(t.id()) {
                    continue;
                }
                stack.push(Visit::Exit(t.clone()));
                if let Some(node) = &t.inner.node {
                    for p in &node.parents {
                        if p.requires_grad() && !seen.contains(&p.id()) {
                            stack.push(Visit::Enter(p.clone()));
                        }
                    }
                }
            }
            Visit::Exit(t) => order.push(t),
        }
    }

    // Leaves accumulate across calls; per-pass state on interior nodes must
    // start clean or a second backward would compound on stale values.
    for t in &order {
        if t.inner.node.is_some() {
            *t.inner.grad.borrow_mut() = None;
        }
    }

    loss.accumulate_grad(&[R::ONE]);
    for t in order.iter().rev() {
        let Some(node) = &t.inner.node else { continue };
        if t.inner.grad.borrow().is_none() {
            continue;
        }
        let contribs = (node.backward)(t);
        debug_assert_eq!(contribs.len(), node.parents.len());
        for (parent, contrib) in node.parents.iter().zip(contribs) {
            if let Some(c) = contrib {
                if parent.requires_grad() {
                    parent.accumulate_grad(&c);
                }
            }
        }
    }
}
