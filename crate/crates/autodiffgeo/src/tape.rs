//! Reverse-mode automatic differentiation over scalar-field computation
//! graphs.
//!
//! A [`Graph`] is an append-only arena of nodes; node indices double as a
//! topological order, so the backward sweep is a single reverse scan that
//! visits each node exactly once, in a fixed order — gradients are
//! bit-reproducible run to run. Values are either scalars, 1D fields along
//! one grid axis, full `nx × ny` planes, or free-length vectors (the design
//! vector itself). Keeping shape graphs 1D for as long as possible and
//! broadcasting to the plane late is what makes the backward pass cheap.
//!
//! A graph instance is single-writer: `forward`/`backward` take `&mut self`.
//! Distinct graphs are independent.

use crate::design::DesignVector;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::nonlin::Nonlinearity;
use std::sync::Arc;

/// Handle to a node in one specific [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Static shape of a node's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Scalar,
    /// Varies along x only; length nx.
    AlongX(usize),
    /// Varies along y only; length ny.
    AlongY(usize),
    /// Full plane, row-major with x fastest; length nx·ny.
    Plane(usize, usize),
    /// Free-length vector in parameter space.
    Vector(usize),
}

impl ValueShape {
    pub fn len(&self) -> usize {
        match *self {
            ValueShape::Scalar => 1,
            ValueShape::AlongX(n) | ValueShape::AlongY(n) | ValueShape::Vector(n) => n,
            ValueShape::Plane(nx, ny) => nx * ny,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cached forward value of a node.
#[derive(Debug, Clone)]
pub struct Value {
    pub shape: ValueShape,
    pub data: Vec<f64>,
}

impl Value {
    pub fn scalar(&self) -> f64 {
        self.data[0]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param(usize),
    Params,
    ConstScalar(f64),
    ConstField(Arc<Vec<f64>>),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Atan2(NodeId, NodeId),
    Hypot(NodeId, NodeId),
    Nonlin(Nonlinearity, NodeId),
    Affine(NodeId, f64, f64),
    ClampMin(NodeId, f64),
    ClampMax(NodeId, f64),
    BroadcastX(NodeId),
    BroadcastY(NodeId),
    Gather(NodeId, Arc<Vec<usize>>),
    Sum(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Params => "params",
            Op::ConstScalar(_) => "const",
            Op::ConstField(_) => "const-field",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(_) => "neg",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Atan2(..) => "atan2",
            Op::Hypot(..) => "hypot",
            Op::Nonlin(..) => "nonlin",
            Op::Affine(..) => "affine",
            Op::ClampMin(..) => "clamp-min",
            Op::ClampMax(..) => "clamp-max",
            Op::BroadcastX(_) => "broadcast-x",
            Op::BroadcastY(_) => "broadcast-y",
            Op::Gather(..) => "gather",
            Op::Sum(_) => "sum",
        }
    }
}

struct Node {
    op: Op,
    shape: ValueShape,
}

/// Computation graph over one grid.
pub struct Graph {
    nx: usize,
    ny: usize,
    n_params: usize,
    nodes: Vec<Node>,
    values: Vec<Option<Value>>,
    /// Roots evaluated by the last forward pass(es) since the last clear.
    evaluated: Vec<bool>,
}

impl Graph {
    pub fn new(grid: &GridSpec, n_params: usize) -> Self {
        Graph {
            nx: grid.nx,
            ny: grid.ny,
            n_params,
            nodes: Vec::new(),
            values: Vec::new(),
            evaluated: Vec::new(),
        }
    }

    /// Graph with explicit dimensions (no grid on hand; used by tests and the
    /// topology special case).
    pub fn with_dims(nx: usize, ny: usize, n_params: usize) -> Self {
        Graph {
            nx,
            ny,
            n_params,
            nodes: Vec::new(),
            values: Vec::new(),
            evaluated: Vec::new(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn plane_shape(&self) -> ValueShape {
        ValueShape::Plane(self.nx, self.ny)
    }

    pub fn shape_of(&self, id: NodeId) -> ValueShape {
        self.nodes[id.idx()].shape
    }

    fn push(&mut self, op: Op, shape: ValueShape) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, shape });
        self.values.push(None);
        self.evaluated.push(false);
        id
    }

    fn binary_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<ValueShape> {
        let sa = self.shape_of(a);
        let sb = self.shape_of(b);
        match (sa, sb) {
            (ValueShape::Scalar, s) | (s, ValueShape::Scalar) => Ok(s),
            (sa, sb) if sa == sb => Ok(sa),
            (sa, sb) => Err(Error::Contract(format!(
                "{what}: incompatible shapes {sa:?} and {sb:?}"
            ))),
        }
    }

    // ---- construction -----------------------------------------------------

    pub fn param(&mut self, index: usize) -> Result<NodeId> {
        if index >= self.n_params {
            return Err(Error::Config(format!(
                "parameter leaf {index} out of range for {}-parameter graph",
                self.n_params
            )));
        }
        Ok(self.push(Op::Param(index), ValueShape::Scalar))
    }

    /// Leaf holding the whole design vector as a `Vector(n)` field.
    pub fn params(&mut self) -> NodeId {
        let n = self.n_params;
        self.push(Op::Params, ValueShape::Vector(n))
    }

    pub fn constant(&mut self, c: f64) -> NodeId {
        self.push(Op::ConstScalar(c), ValueShape::Scalar)
    }

    pub fn const_field(&mut self, data: Arc<Vec<f64>>, shape: ValueShape) -> Result<NodeId> {
        if data.len() != shape.len() {
            return Err(Error::Contract(format!(
                "const field has {} entries for shape {shape:?}",
                data.len()
            )));
        }
        Ok(self.push(Op::ConstField(data), shape))
    }

    /// x sample coordinates as an `AlongX` constant field.
    pub fn x_coords(&mut self, grid: &GridSpec) -> Result<NodeId> {
        self.const_field(Arc::new(grid.x_coords()), ValueShape::AlongX(grid.nx))
    }

    /// y sample coordinates as an `AlongY` constant field.
    pub fn y_coords(&mut self, grid: &GridSpec) -> Result<NodeId> {
        self.const_field(Arc::new(grid.y_coords()), ValueShape::AlongY(grid.ny))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_shape(a, b, "add")?;
        Ok(self.push(Op::Add(a, b), s))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_shape(a, b, "sub")?;
        Ok(self.push(Op::Sub(a, b), s))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_shape(a, b, "mul")?;
        Ok(self.push(Op::Mul(a, b), s))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_shape(a, b, "div")?;
        Ok(self.push(Op::Div(a, b), s))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Neg(a), s)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Sin(a), s)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Cos(a), s)
    }

    /// Full-quadrant arctangent `atan2(y, x)`; branch cut at θ = π.
    pub fn atan2(&mut self, y: NodeId, x: NodeId) -> Result<NodeId> {
        let s = self.binary_shape(y, x, "atan2")?;
        Ok(self.push(Op::Atan2(y, x), s))
    }

    /// `√(a² + b²)` with both partials defined as 0 at the origin.
    pub fn hypot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_shape(a, b, "hypot")?;
        Ok(self.push(Op::Hypot(a, b), s))
    }

    pub fn nonlin(&mut self, nl: Nonlinearity, a: NodeId) -> NodeId {
        let s = self.shape_of(a);
        self.push(Op::Nonlin(nl, a), s)
    }

    /// `a·x + b` with constant coefficients.
    pub fn affine(&mut self, x: NodeId, a: f64, b: f64) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::Affine(x, a, b), s)
    }

    /// `max(x, lo)`; pass-through derivative when `x == lo` exactly.
    pub fn clamp_min(&mut self, x: NodeId, lo: f64) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::ClampMin(x, lo), s)
    }

    /// `min(x, hi)`; pass-through derivative when `x == hi` exactly.
    pub fn clamp_max(&mut self, x: NodeId, hi: f64) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::ClampMax(x, hi), s)
    }

    /// Replicate an `AlongX` field over every row of the plane.
    pub fn broadcast_x(&mut self, a: NodeId) -> Result<NodeId> {
        match self.shape_of(a) {
            ValueShape::AlongX(n) if n == self.nx => {
                Ok(self.push(Op::BroadcastX(a), ValueShape::Plane(self.nx, self.ny)))
            }
            s => Err(Error::Contract(format!(
                "broadcast-x expects AlongX({}) input, got {s:?}",
                self.nx
            ))),
        }
    }

    /// Replicate an `AlongY` field over every column of the plane.
    pub fn broadcast_y(&mut self, a: NodeId) -> Result<NodeId> {
        match self.shape_of(a) {
            ValueShape::AlongY(n) if n == self.ny => {
                Ok(self.push(Op::BroadcastY(a), ValueShape::Plane(self.nx, self.ny)))
            }
            s => Err(Error::Contract(format!(
                "broadcast-y expects AlongY({}) input, got {s:?}",
                self.ny
            ))),
        }
    }

    /// `out[j] = in[src[j]]`: a 0/1 broadcast matrix with one nonzero per
    /// row. The backward pass is the transpose (a sum over replicas).
    pub fn gather(&mut self, a: NodeId, src: Arc<Vec<usize>>, out: ValueShape) -> Result<NodeId> {
        let n_in = self.shape_of(a).len();
        if src.len() != out.len() {
            return Err(Error::Contract(format!(
                "gather map has {} entries for output shape {out:?}",
                src.len()
            )));
        }
        if let Some(&bad) = src.iter().find(|&&s| s >= n_in) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range for input of length {n_in}"
            )));
        }
        Ok(self.push(Op::Gather(a, src), out))
    }

    /// Sum-reduce a field to a scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), ValueShape::Scalar)
    }

    /// Mean of a field.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.shape_of(a).len() as f64;
        let s = self.sum(a);
        self.affine(s, 1.0 / n, 0.0)
    }

    // ---- execution --------------------------------------------------------

    fn reachable(&self, root: NodeId) -> Vec<bool> {
        let mut mark = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if mark[id.idx()] {
                continue;
            }
            mark[id.idx()] = true;
            match &self.nodes[id.idx()].op {
                Op::Param(_) | Op::Params | Op::ConstScalar(_) | Op::ConstField(_) => {}
                Op::Add(a, b)
                | Op::Sub(a, b)
                | Op::Mul(a, b)
                | Op::Div(a, b)
                | Op::Atan2(a, b)
                | Op::Hypot(a, b) => {
                    stack.push(*a);
                    stack.push(*b);
                }
                Op::Neg(a)
                | Op::Sin(a)
                | Op::Cos(a)
                | Op::Nonlin(_, a)
                | Op::Affine(a, _, _)
                | Op::ClampMin(a, _)
                | Op::ClampMax(a, _)
                | Op::BroadcastX(a)
                | Op::BroadcastY(a)
                | Op::Gather(a, _)
                | Op::Sum(a) => stack.push(*a),
            }
        }
        mark
    }

    /// Evaluate the subgraph under `root`, caching every activation for the
    /// backward pass. Returns the root value.
    pub fn forward(&mut self, root: NodeId, params: &DesignVector) -> Result<&Value> {
        if params.len() != self.n_params {
            return Err(Error::Config(format!(
                "graph was built for {} parameters, forward got {}",
                self.n_params,
                params.len()
            )));
        }
        params.validate()?;
        let mark = self.reachable(root);
        for idx in 0..=root.idx() {
            if !mark[idx] {
                continue;
            }
            let value = self.eval_node(NodeId(idx as u32), params)?;
            if !value.data.iter().all(|v| v.is_finite()) {
                let name = self.nodes[idx].op.name();
                return Err(Error::Numeric(format!(
                    "non-finite value produced by node {idx} ({name})"
                )));
            }
            self.values[idx] = Some(value);
            self.evaluated[idx] = true;
        }
        Ok(self.values[root.idx()].as_ref().unwrap())
    }

    /// Cached value of a node, if forward has evaluated it.
    pub fn value(&self, id: NodeId) -> Option<&Value> {
        self.values[id.idx()].as_ref()
    }

    fn val(&self, id: NodeId) -> &Value {
        self.values[id.idx()].as_ref().unwrap()
    }

    fn eval_node(&self, id: NodeId, params: &DesignVector) -> Result<Value> {
        let node = &self.nodes[id.idx()];
        let shape = node.shape;
        let data = match &node.op {
            Op::Param(i) => vec![params.values[*i]],
            Op::Params => params.values.clone(),
            Op::ConstScalar(c) => vec![*c],
            Op::ConstField(d) => d.as_ref().clone(),
            Op::Add(a, b) => self.zip(*a, *b, shape, |x, y| x + y),
            Op::Sub(a, b) => self.zip(*a, *b, shape, |x, y| x - y),
            Op::Mul(a, b) => self.zip(*a, *b, shape, |x, y| x * y),
            Op::Div(a, b) => self.zip(*a, *b, shape, |x, y| x / y),
            Op::Atan2(y, x) => self.zip(*y, *x, shape, f64::atan2),
            Op::Hypot(a, b) => self.zip(*a, *b, shape, |x, y| (x * x + y * y).sqrt()),
            Op::Neg(a) => self.val(*a).data.iter().map(|x| -x).collect(),
            Op::Sin(a) => self.val(*a).data.iter().map(|x| x.sin()).collect(),
            Op::Cos(a) => self.val(*a).data.iter().map(|x| x.cos()).collect(),
            Op::Nonlin(nl, a) => self.val(*a).data.iter().map(|&x| nl.eval(x)).collect(),
            Op::Affine(a, m, c) => self.val(*a).data.iter().map(|x| m * x + c).collect(),
            Op::ClampMin(a, lo) => self.val(*a).data.iter().map(|x| x.max(*lo)).collect(),
            Op::ClampMax(a, hi) => self.val(*a).data.iter().map(|x| x.min(*hi)).collect(),
            Op::BroadcastX(a) => {
                let row = &self.val(*a).data;
                let mut out = Vec::with_capacity(self.nx * self.ny);
                for _ in 0..self.ny {
                    out.extend_from_slice(row);
                }
                out
            }
            Op::BroadcastY(a) => {
                let col = &self.val(*a).data;
                let mut out = Vec::with_capacity(self.nx * self.ny);
                for j in 0..self.ny {
                    out.extend(std::iter::repeat(col[j]).take(self.nx));
                }
                out
            }
            Op::Gather(a, src) => {
                let input = &self.val(*a).data;
                src.iter().map(|&s| input[s]).collect()
            }
            Op::Sum(a) => vec![self.val(*a).data.iter().sum()],
        };
        Ok(Value { shape, data })
    }

    fn zip(&self, a: NodeId, b: NodeId, out: ValueShape, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let va = &self.val(a).data;
        let vb = &self.val(b).data;
        let n = out.len();
        match (va.len(), vb.len()) {
            (1, 1) => vec![f(va[0], vb[0])],
            (1, _) => vb.iter().map(|&y| f(va[0], y)).collect(),
            (_, 1) => va.iter().map(|&x| f(x, vb[0])).collect(),
            _ => {
                debug_assert_eq!(va.len(), n);
                va.iter().zip(vb.iter()).map(|(&x, &y)| f(x, y)).collect()
            }
        }
    }

    /// Vector-Jacobian product: propagate `cotangent` (shaped like `root`'s
    /// value) back to the design parameters. Requires a prior `forward` that
    /// evaluated `root`.
    pub fn backward(&mut self, root: NodeId, cotangent: &[f64]) -> Result<Vec<f64>> {
        if !self.evaluated[root.idx()] || self.values[root.idx()].is_none() {
            return Err(Error::Contract(
                "backward called before forward evaluated this root".into(),
            ));
        }
        let root_len = self.nodes[root.idx()].shape.len();
        if cotangent.len() != root_len {
            return Err(Error::Contract(format!(
                "cotangent has {} entries, root field has {root_len}",
                cotangent.len()
            )));
        }
        let mark = self.reachable(root);
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[root.idx()] = Some(cotangent.to_vec());
        let mut grad = vec![0.0; self.n_params];

        for idx in (0..=root.idx()).rev() {
            if !mark[idx] {
                continue;
            }
            let Some(a_out) = adj[idx].take() else {
                continue;
            };
            match self.nodes[idx].op.clone() {
                Op::Param(i) => grad[i] += a_out[0],
                Op::Params => {
                    for (g, a) in grad.iter_mut().zip(a_out.iter()) {
                        *g += a;
                    }
                }
                Op::ConstScalar(_) | Op::ConstField(_) => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, &a_out, None);
                    self.accumulate(&mut adj, b, &a_out, None);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, &a_out, None);
                    self.accumulate_scaled(&mut adj, b, &a_out, -1.0);
                }
                Op::Mul(a, b) => {
                    let vb = self.val(b).data.clone();
                    let va = self.val(a).data.clone();
                    self.accumulate(&mut adj, a, &a_out, Some(&vb));
                    self.accumulate(&mut adj, b, &a_out, Some(&va));
                }
                Op::Div(a, b) => {
                    let va = self.val(a).data.clone();
                    let vb = self.val(b).data.clone();
                    let inv_b: Vec<f64> = match vb.len() {
                        1 => vec![1.0 / vb[0]],
                        _ => vb.iter().map(|&y| 1.0 / y).collect(),
                    };
                    self.accumulate(&mut adj, a, &a_out, Some(&inv_b));
                    // d(a/b)/db = -a / b².
                    let n = a_out.len();
                    let at = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
                    let d: Vec<f64> = (0..n)
                        .map(|i| {
                            let bi = at(&vb, i);
                            -at(&va, i) / (bi * bi)
                        })
                        .collect();
                    self.accumulate(&mut adj, b, &a_out, Some(&d));
                }
                Op::Atan2(y, x) => {
                    let vy = self.val(y).data.clone();
                    let vx = self.val(x).data.clone();
                    let n = a_out.len();
                    let at = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
                    let mut dy = Vec::with_capacity(n);
                    let mut dx = Vec::with_capacity(n);
                    for i in 0..n {
                        let (yy, xx) = (at(&vy, i), at(&vx, i));
                        let r2 = xx * xx + yy * yy;
                        if r2 == 0.0 {
                            dy.push(0.0);
                            dx.push(0.0);
                        } else {
                            dy.push(xx / r2);
                            dx.push(-yy / r2);
                        }
                    }
                    self.accumulate(&mut adj, y, &a_out, Some(&dy));
                    self.accumulate(&mut adj, x, &a_out, Some(&dx));
                }
                Op::Hypot(a, b) => {
                    let va = self.val(a).data.clone();
                    let vb = self.val(b).data.clone();
                    let vh = self.val(NodeId(idx as u32)).data.clone();
                    let n = a_out.len();
                    let at = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
                    let mut da = Vec::with_capacity(n);
                    let mut db = Vec::with_capacity(n);
                    for i in 0..n {
                        let h = vh[i];
                        if h == 0.0 {
                            da.push(0.0);
                            db.push(0.0);
                        } else {
                            da.push(at(&va, i) / h);
                            db.push(at(&vb, i) / h);
                        }
                    }
                    self.accumulate(&mut adj, a, &a_out, Some(&da));
                    self.accumulate(&mut adj, b, &a_out, Some(&db));
                }
                Op::Neg(a) => self.accumulate_scaled(&mut adj, a, &a_out, -1.0),
                Op::Sin(a) => {
                    let d: Vec<f64> = self.val(a).data.iter().map(|x| x.cos()).collect();
                    self.accumulate(&mut adj, a, &a_out, Some(&d));
                }
                Op::Cos(a) => {
                    let d: Vec<f64> = self.val(a).data.iter().map(|x| -x.sin()).collect();
                    self.accumulate(&mut adj, a, &a_out, Some(&d));
                }
                Op::Nonlin(nl, a) => {
                    let d: Vec<f64> = self.val(a).data.iter().map(|&x| nl.deriv(x)).collect();
                    self.accumulate(&mut adj, a, &a_out, Some(&d));
                }
                Op::Affine(a, m, _) => self.accumulate_scaled(&mut adj, a, &a_out, m),
                Op::ClampMin(a, lo) => {
                    // Subgradient at the kink: unclamped branch (pass-through).
                    let d: Vec<f64> = self
                        .val(a)
                        .data
                        .iter()
                        .map(|&x| if x >= lo { 1.0 } else { 0.0 })
                        .collect();
                    self.accumulate(&mut adj, a, &a_out, Some(&d));
                }
                Op::ClampMax(a, hi) => {
                    let d: Vec<f64> = self
                        .val(a)
                        .data
                        .iter()
                        .map(|&x| if x <= hi { 1.0 } else { 0.0 })
                        .collect();
                    self.accumulate(&mut adj, a, &a_out, Some(&d));
                }
                Op::BroadcastX(a) => {
                    let mut red = vec![0.0; self.nx];
                    for j in 0..self.ny {
                        let row = &a_out[j * self.nx..(j + 1) * self.nx];
                        for i in 0..self.nx {
                            red[i] += row[i];
                        }
                    }
                    self.accumulate(&mut adj, a, &red, None);
                }
                Op::BroadcastY(a) => {
                    let mut red = vec![0.0; self.ny];
                    for j in 0..self.ny {
                        let row = &a_out[j * self.nx..(j + 1) * self.nx];
                        red[j] = row.iter().sum();
                    }
                    self.accumulate(&mut adj, a, &red, None);
                }
                Op::Gather(a, src) => {
                    let mut red = vec![0.0; self.shape_of(a).len()];
                    for (o, &s) in src.iter().enumerate() {
                        red[s] += a_out[o];
                    }
                    self.accumulate(&mut adj, a, &red, None);
                }
                Op::Sum(a) => {
                    let n = self.shape_of(a).len();
                    let spread = vec![a_out[0]; n];
                    self.accumulate(&mut adj, a, &spread, None);
                }
            }
        }
        Ok(grad)
    }

    /// Add `cot ⊙ scale` into the adjoint of `target`, reducing when the
    /// target is a scalar that was broadcast into a field operation.
    fn accumulate(
        &self,
        adj: &mut [Option<Vec<f64>>],
        target: NodeId,
        cot: &[f64],
        scale: Option<&[f64]>,
    ) {
        let t_len = self.shape_of(target).len();
        let slot = &mut adj[target.idx()];
        if slot.is_none() {
            *slot = Some(vec![0.0; t_len]);
        }
        let acc = slot.as_mut().unwrap();
        let at = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
        if t_len == 1 && cot.len() > 1 {
            // Scalar broadcast into a field op: reduce.
            let mut s = 0.0;
            match scale {
                Some(sc) => {
                    for i in 0..cot.len() {
                        s += cot[i] * at(sc, i);
                    }
                }
                None => s = cot.iter().sum(),
            }
            acc[0] += s;
        } else {
            match scale {
                Some(sc) => {
                    for i in 0..cot.len() {
                        acc[i] += cot[i] * at(sc, i);
                    }
                }
                None => {
                    for i in 0..cot.len() {
                        acc[i] += cot[i];
                    }
                }
            }
        }
    }

    fn accumulate_scaled(
        &self,
        adj: &mut [Option<Vec<f64>>],
        target: NodeId,
        cot: &[f64],
        scale: f64,
    ) {
        let scaled: Vec<f64> = cot.iter().map(|c| c * scale).collect();
        self.accumulate(adj, target, &scaled, None);
    }

    /// Forward-mode tangent (Jacobian-vector product): directional derivative
    /// of `root`'s field along `seed` in parameter space. Requires a prior
    /// `forward` pass.
    pub fn forward_tangent(&mut self, root: NodeId, seed: &[f64]) -> Result<Vec<f64>> {
        if !self.evaluated[root.idx()] || self.values[root.idx()].is_none() {
            return Err(Error::Contract(
                "forward_tangent called before forward evaluated this root".into(),
            ));
        }
        if seed.len() != self.n_params {
            return Err(Error::Contract(format!(
                "tangent seed has {} entries for {}-parameter graph",
                seed.len(),
                self.n_params
            )));
        }
        let mark = self.reachable(root);
        let mut tan: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let at = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };

        for idx in 0..=root.idx() {
            if !mark[idx] {
                continue;
            }
            let id = NodeId(idx as u32);
            let out_len = self.nodes[idx].shape.len();
            let t = match &self.nodes[idx].op {
                Op::Param(i) => vec![seed[*i]],
                Op::Params => seed.to_vec(),
                Op::ConstScalar(_) | Op::ConstField(_) => vec![0.0; out_len],
                Op::Add(a, b) => {
                    let (ta, tb) = (tan[a.idx()].as_ref().unwrap(), tan[b.idx()].as_ref().unwrap());
                    (0..out_len).map(|i| at(ta, i) + at(tb, i)).collect()
                }
                Op::Sub(a, b) => {
                    let (ta, tb) = (tan[a.idx()].as_ref().unwrap(), tan[b.idx()].as_ref().unwrap());
                    (0..out_len).map(|i| at(ta, i) - at(tb, i)).collect()
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (tan[a.idx()].as_ref().unwrap(), tan[b.idx()].as_ref().unwrap());
                    let (va, vb) = (&self.val(*a).data, &self.val(*b).data);
                    (0..out_len)
                        .map(|i| at(ta, i) * at(vb, i) + at(va, i) * at(tb, i))
                        .collect()
                }
                Op::Div(a, b) => {
                    let (ta, tb) = (tan[a.idx()].as_ref().unwrap(), tan[b.idx()].as_ref().unwrap());
                    let (va, vb) = (&self.val(*a).data, &self.val(*b).data);
                    (0..out_len)
                        .map(|i| {
                            let bi = at(vb, i);
                            (at(ta, i) * bi - at(va, i) * at(tb, i)) / (bi * bi)
                        })
                        .collect()
                }
                Op::Atan2(y, x) => {
                    let (ty, tx) = (tan[y.idx()].as_ref().unwrap(), tan[x.idx()].as_ref().unwrap());
                    let (vy, vx) = (&self.val(*y).data, &self.val(*x).data);
                    (0..out_len)
                        .map(|i| {
                            let (yy, xx) = (at(vy, i), at(vx, i));
                            let r2 = xx * xx + yy * yy;
                            if r2 == 0.0 {
                                0.0
                            } else {
                                (xx * at(ty, i) - yy * at(tx, i)) / r2
                            }
                        })
                        .collect()
                }
                Op::Hypot(a, b) => {
                    let (ta, tb) = (tan[a.idx()].as_ref().unwrap(), tan[b.idx()].as_ref().unwrap());
                    let (va, vb) = (&self.val(*a).data, &self.val(*b).data);
                    let vh = &self.val(id).data;
                    (0..out_len)
                        .map(|i| {
                            let h = vh[i];
                            if h == 0.0 {
                                0.0
                            } else {
                                (at(va, i) * at(ta, i) + at(vb, i) * at(tb, i)) / h
                            }
                        })
                        .collect()
                }
                Op::Neg(a) => tan[a.idx()].as_ref().unwrap().iter().map(|t| -t).collect(),
                Op::Sin(a) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    let va = &self.val(*a).data;
                    (0..out_len).map(|i| va[i].cos() * at(ta, i)).collect()
                }
                Op::Cos(a) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    let va = &self.val(*a).data;
                    (0..out_len).map(|i| -va[i].sin() * at(ta, i)).collect()
                }
                Op::Nonlin(nl, a) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    let va = &self.val(*a).data;
                    (0..out_len).map(|i| nl.deriv(va[i]) * at(ta, i)).collect()
                }
                Op::Affine(a, m, _) => tan[a.idx()]
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|t| m * t)
                    .collect(),
                Op::ClampMin(a, lo) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    let va = &self.val(*a).data;
                    (0..out_len)
                        .map(|i| if va[i] >= *lo { at(ta, i) } else { 0.0 })
                        .collect()
                }
                Op::ClampMax(a, hi) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    let va = &self.val(*a).data;
                    (0..out_len)
                        .map(|i| if va[i] <= *hi { at(ta, i) } else { 0.0 })
                        .collect()
                }
                Op::BroadcastX(a) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    let mut out = Vec::with_capacity(out_len);
                    for _ in 0..self.ny {
                        out.extend_from_slice(ta);
                    }
                    out
                }
                Op::BroadcastY(a) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    let mut out = Vec::with_capacity(out_len);
                    for j in 0..self.ny {
                        out.extend(std::iter::repeat(ta[j]).take(self.nx));
                    }
                    out
                }
                Op::Gather(a, src) => {
                    let ta = tan[a.idx()].as_ref().unwrap();
                    src.iter().map(|&s| ta[s]).collect()
                }
                Op::Sum(a) => vec![tan[a.idx()].as_ref().unwrap().iter().sum()],
            };
            tan[idx] = Some(t);
        }
        Ok(tan[root.idx()].take().unwrap())
    }

    /// Release all cached activations; the graph structure stays reusable.
    pub fn clear(&mut self) {
        for v in &mut self.values {
            *v = None;
        }
        for e in &mut self.evaluated {
            *e = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::{NonlinKind, Nonlinearity};

    fn grid(nx: usize, ny: usize) -> GridSpec {
        GridSpec::new(-1.0, -1.0, 2.0 / nx as f64, 2.0 / ny as f64, nx, ny).unwrap()
    }

    #[test]
    fn identity_affine_broadcast() {
        let g5 = grid(5, 4);
        let mut g = Graph::new(&g5, 1);
        let p = g.param(0).unwrap();
        let id = g.affine(p, 1.0, 0.0);
        let params = DesignVector::anonymous(vec![3.0]).unwrap();
        let v = g.forward(id, &params).unwrap();
        assert_eq!(v.scalar(), 3.0);
    }

    #[test]
    fn backward_of_broadcast_sums_cotangent() {
        let g5 = grid(5, 4);
        let mut g = Graph::new(&g5, 1);
        let p = g.param(0).unwrap();
        let x = g.x_coords(&g5).unwrap();
        // field = p + 0·x, broadcast to the plane
        let zero_x = g.affine(x, 0.0, 0.0);
        let f1 = g.add(p, zero_x).unwrap();
        let f2 = g.broadcast_x(f1).unwrap();
        let params = DesignVector::anonymous(vec![1.5]).unwrap();
        let v = g.forward(f2, &params).unwrap();
        assert!(v.data.iter().all(|&x| x == 1.5));
        let ones = vec![1.0; 20];
        let grad = g.backward(f2, &ones).unwrap();
        assert_eq!(grad, vec![20.0]);
    }

    #[test]
    fn clear_then_backward_is_contract_error() {
        let g5 = grid(3, 3);
        let mut g = Graph::new(&g5, 1);
        let p = g.param(0).unwrap();
        let f = g.affine(p, 2.0, 0.0);
        let params = DesignVector::anonymous(vec![1.0]).unwrap();
        g.forward(f, &params).unwrap();
        g.clear();
        assert!(matches!(
            g.backward(f, &[1.0]),
            Err(Error::Contract(_))
        ));
        // forward after clear reproduces the same value
        let v = g.forward(f, &params).unwrap();
        assert_eq!(v.scalar(), 2.0);
    }

    #[test]
    fn unbound_parameter_is_config_error() {
        let g5 = grid(3, 3);
        let mut g = Graph::new(&g5, 2);
        let p = g.param(1).unwrap();
        let f = g.affine(p, 1.0, 0.0);
        let params = DesignVector::anonymous(vec![1.0]).unwrap(); // too short
        assert!(matches!(g.forward(f, &params), Err(Error::Config(_))));
    }

    #[test]
    fn shape_mismatch_rejected_at_build() {
        let g5 = grid(4, 3);
        let mut g = Graph::new(&g5, 1);
        let x = g.x_coords(&g5).unwrap();
        let y = g.y_coords(&g5).unwrap();
        assert!(g.add(x, y).is_err());
    }

    #[test]
    fn backward_cotangent_shape_checked() {
        let g5 = grid(4, 3);
        let mut g = Graph::new(&g5, 1);
        let p = g.param(0).unwrap();
        let x = g.x_coords(&g5).unwrap();
        let f = g.sub(x, p).unwrap();
        let params = DesignVector::anonymous(vec![0.1]).unwrap();
        g.forward(f, &params).unwrap();
        assert!(matches!(g.backward(f, &[1.0; 3]), Err(Error::Contract(_))));
    }

    /// Central-difference oracle for a scalar-valued graph output.
    fn fd_grad(
        g: &mut Graph,
        root: NodeId,
        params: &DesignVector,
        reduce: &[f64],
    ) -> Vec<f64> {
        let mut out = vec![0.0; params.len()];
        for i in 0..params.len() {
            let h = 1e-5 * params.values[i].abs().max(1.0);
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let fp: f64 = g
                .forward(root, &plus)
                .unwrap()
                .data
                .iter()
                .zip(reduce)
                .map(|(a, b)| a * b)
                .sum();
            let fm: f64 = g
                .forward(root, &minus)
                .unwrap()
                .data
                .iter()
                .zip(reduce)
                .map(|(a, b)| a * b)
                .sum();
            out[i] = (fp - fm) / (2.0 * h);
        }
        out
    }

    #[test]
    fn backward_matches_central_differences_on_mixed_graph() {
        let gs = grid(8, 6);
        let mut g = Graph::new(&gs, 4);
        let x = g.x_coords(&gs).unwrap();
        let y = g.y_coords(&gs).unwrap();
        let x0 = g.param(0).unwrap();
        let y0 = g.param(1).unwrap();
        let r0 = g.param(2).unwrap();
        let s0 = g.param(3).unwrap();
        let bx = g.broadcast_x(x).unwrap();
        let by = g.broadcast_y(y).unwrap();
        let dx = g.sub(bx, x0).unwrap();
        let dy = g.sub(by, y0).unwrap();
        let r = g.hypot(dx, dy).unwrap();
        let th = g.atan2(dy, dx).unwrap();
        let sth = g.sin(th);
        let mod_r = g.mul(s0, sth).unwrap();
        let rr = g.add(r0, mod_r).unwrap();
        let arg = g.sub(rr, r).unwrap();
        let nl = Nonlinearity::new(NonlinKind::Sigmoid, 4.0).unwrap();
        let field = g.nonlin(nl, arg);
        let params = DesignVector::anonymous(vec![0.07, -0.11, 0.62, 0.13]).unwrap();
        g.forward(field, &params).unwrap();
        let m = gs.cells();
        let cot: Vec<f64> = (0..m).map(|i| 0.3 + 0.01 * i as f64).collect();
        let grad = g.backward(field, &cot).unwrap();
        let fd = fd_grad(&mut g, field, &params, &cot);
        for i in 0..4 {
            let denom = fd[i].abs().max(1e-12);
            assert!(
                ((grad[i] - fd[i]).abs() / denom) < 1e-6,
                "param {i}: ad {} fd {}",
                grad[i],
                fd[i]
            );
        }
    }

    #[test]
    fn backward_is_linear_in_cotangent() {
        let gs = grid(6, 5);
        let mut g = Graph::new(&gs, 2);
        let x = g.x_coords(&gs).unwrap();
        let p = g.param(0).unwrap();
        let q = g.param(1).unwrap();
        let d = g.sub(x, p).unwrap();
        let nl = Nonlinearity::new(NonlinKind::Quadratic, 3.0).unwrap();
        let s = g.nonlin(nl, d);
        let sq = g.mul(s, q).unwrap();
        let plane = g.broadcast_x(sq).unwrap();
        let params = DesignVector::anonymous(vec![0.2, 1.4]).unwrap();
        g.forward(plane, &params).unwrap();
        let m = gs.cells();
        let c1: Vec<f64> = (0..m).map(|i| (i as f64 * 0.17).sin()).collect();
        let c2: Vec<f64> = (0..m).map(|i| (i as f64 * 0.05).cos()).collect();
        let (a, b) = (2.5, -0.75);
        let mixed: Vec<f64> = c1.iter().zip(&c2).map(|(u, v)| a * u + b * v).collect();
        let g1 = g.backward(plane, &c1).unwrap();
        let g2 = g.backward(plane, &c2).unwrap();
        let gm = g.backward(plane, &mixed).unwrap();
        for i in 0..2 {
            let want = a * g1[i] + b * g2[i];
            assert!((gm[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn forward_tangent_matches_backward_jacobian() {
        // For a single parameter, the tangent column equals what unit
        // cotangents recover row by row.
        let gs = grid(5, 4);
        let mut g = Graph::new(&gs, 1);
        let x = g.x_coords(&gs).unwrap();
        let p = g.param(0).unwrap();
        let d = g.sub(x, p).unwrap();
        let nl = Nonlinearity::new(NonlinKind::Sin, 2.0).unwrap();
        let s = g.nonlin(nl, d);
        let plane = g.broadcast_x(s).unwrap();
        let params = DesignVector::anonymous(vec![-0.3]).unwrap();
        g.forward(plane, &params).unwrap();
        let col = g.forward_tangent(plane, &[1.0]).unwrap();
        let m = gs.cells();
        for j in (0..m).step_by(7) {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let row = g.backward(plane, &e).unwrap();
            assert!((row[0] - col[j]).abs() < 1e-14);
        }
    }
}
