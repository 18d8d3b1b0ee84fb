use super::mat::{gemm_nn, gemm_nt, gemm_tn, softmax_in_place};
use super::{Gradients, Mat, ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    TMatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterCols(Var, Vec<usize>),
    Pick(Var, usize, usize),
    Sum(Var),
    Lstm(Var, Var),
}

#[derive(Debug)]
enum Value {
    Owned(Mat),
    Param(ParamId),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    grad: bool,
}

/// Reverse-mode autodiff over matrices. Parameter leaves borrow from a
/// [`ParamStore`]; `backward` returns gradients aligned with that store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0].value {
            Value::Owned(m) => m,
            Value::Param(id) => self.params.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    fn push(&mut self, value: Mat, op: Op, grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Const, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let g = self.needs_grad(a) || self.needs_grad(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        let g = self.needs_grad(a) || self.needs_grad(b);
        self.push(v, Op::MatMulT(a, b), g)
    }

    /// `aᵀ · b`.
    pub fn t_matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).t_matmul(self.value(b));
        let g = self.needs_grad(a) || self.needs_grad(b);
        self.push(v, Op::TMatMul(a, b), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let g = self.needs_grad(a);
        self.push(v, Op::Transpose(a), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let mut v = x.clone();
        v.add_assign(y);
        let g = self.needs_grad(a) || self.needs_grad(b);
        self.push(v, Op::Add(a, b), g)
    }

    /// Adds a `1 × n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((1, x.cols), r.shape(), "add_row shape mismatch");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        let g = self.needs_grad(a) || self.needs_grad(row);
        self.push(v, Op::AddRow(a, row), g)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let v = Mat::from_vec(x.rows, x.cols, data);
        let g = self.needs_grad(a) || self.needs_grad(b);
        self.push(v, Op::Mul(a, b), g)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        let g = self.needs_grad(a);
        self.push(v, Op::Scale(a, k), g)
    }

    /// `a` times the `1 × 1` variable `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.value(s).item();
        let v = self.value(a).map(|x| x * k);
        let g = self.needs_grad(a) || self.needs_grad(s);
        self.push(v, Op::MulScalar(a, s), g)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x);
        let g = self.needs_grad(a);
        self.push(v, Op::OneMinus(a), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let g = self.needs_grad(a);
        self.push(v, Op::Sigmoid(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let g = self.needs_grad(a);
        self.push(v, Op::Tanh(a), g)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        let g = self.needs_grad(a);
        self.push(v, Op::Log(a), g)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for r in 0..v.rows {
            softmax_in_place(v.row_mut(r));
        }
        let g = self.needs_grad(a);
        self.push(v, Op::SoftmaxRows(a), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                v.row_mut(r)[off..off + m.cols].copy_from_slice(m.row(r));
            }
            off += m.cols;
        }
        let g = parts.iter().any(|&p| self.needs_grad(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&m.data);
        }
        let rows = data.len() / cols.max(1);
        let g = parts.iter().any(|&p| self.needs_grad(p));
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "slice_cols out of range");
        let mut v = Mat::zeros(x.rows, len);
        for r in 0..x.rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        let g = self.needs_grad(a);
        self.push(v, Op::SliceCols(a, start), g)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows, "slice_rows out of range");
        let v = Mat::from_vec(len, x.cols, x.data[start * x.cols..(start + len) * x.cols].to_vec());
        let g = self.needs_grad(a);
        self.push(v, Op::SliceRows(a, start), g)
    }

    pub fn gather_rows(&mut self, a: Var, ids: &[usize]) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(ids.len() * x.cols);
        for &i in ids {
            data.extend_from_slice(x.row(i));
        }
        let v = Mat::from_vec(ids.len(), x.cols, data);
        let g = self.needs_grad(a);
        self.push(v, Op::GatherRows(a, ids.to_vec()), g)
    }

    /// Maps column `j` of `a` onto column `targets[j]` of a `rows × width`
    /// result, summing collisions.
    pub fn scatter_cols(&mut self, a: Var, targets: &[usize], width: usize) -> Var {
        let x = self.value(a);
        assert_eq!(x.cols, targets.len(), "scatter_cols index length");
        let mut v = Mat::zeros(x.rows, width);
        for r in 0..x.rows {
            let src = x.row(r);
            let dst = v.row_mut(r);
            for (j, &t) in targets.iter().enumerate() {
                dst[t] += src[j];
            }
        }
        let g = self.needs_grad(a);
        self.push(v, Op::ScatterCols(a, targets.to_vec()), g)
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let v = Mat::scalar(self.value(a).at(r, c));
        let g = self.needs_grad(a);
        self.push(v, Op::Pick(a, r, c), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::scalar(self.value(a).sum());
        let g = self.needs_grad(a);
        self.push(v, Op::Sum(a), g)
    }

    /// Sum of several `1 × 1` values.
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        let joined = self.concat_cols(terms);
        self.sum(joined)
    }

    /// LSTM cell. `z` holds pre-activations `[i | f | g | o]` (`n × 4h`),
    /// `state` is `[h | c]` (`n × 2h`); returns the next `[h | c]`.
    pub fn lstm(&mut self, z: Var, state: Var) -> Var {
        let (zm, sm) = (self.value(z), self.value(state));
        let h = zm.cols / 4;
        assert_eq!(zm.cols, 4 * h);
        assert_eq!(sm.shape(), (zm.rows, 2 * h), "lstm state shape");
        let mut v = Mat::zeros(zm.rows, 2 * h);
        for r in 0..zm.rows {
            let zr = zm.row(r);
            let c_prev = &sm.row(r)[h..];
            let out = v.row_mut(r);
            for k in 0..h {
                let i = sigmoid(zr[k]);
                let f = sigmoid(zr[h + k]);
                let g = zr[2 * h + k].tanh();
                let o = sigmoid(zr[3 * h + k]);
                let c = f * c_prev[k] + i * g;
                out[h + k] = c;
                out[k] = o * c.tanh();
            }
        }
        let g = self.needs_grad(z) || self.needs_grad(state);
        self.push(v, Op::Lstm(z, state), g)
    }

    /// Gradients of the `1 × 1` node `root` with respect to every parameter
    /// leaf on the tape.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::scalar(1.0));
        let mut out = Gradients::new(self.params.len());

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.grad {
                continue;
            }
            let send = |v: Var, delta: Mat, grads: &mut Vec<Option<Mat>>| {
                if !self.nodes[v.0].grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            let out_val = self.value(Var(idx));
            match &node.op {
                Op::Const => {}
                Op::Param(id) => out.accumulate_owned(*id, g),
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        let mut d = Mat::zeros(x.rows, x.cols);
                        gemm_nt(&g, y, &mut d);
                        send(*a, d, &mut grads);
                    }
                    if self.needs_grad(*b) {
                        let mut d = Mat::zeros(y.rows, y.cols);
                        gemm_tn(x, &g, &mut d);
                        send(*b, d, &mut grads);
                    }
                }
                Op::MatMulT(a, b) => {
                    // out = x · yᵀ
                    let (x, y) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        let mut d = Mat::zeros(x.rows, x.cols);
                        gemm_nn(&g, y, &mut d);
                        send(*a, d, &mut grads);
                    }
                    if self.needs_grad(*b) {
                        let mut d = Mat::zeros(y.rows, y.cols);
                        gemm_tn(&g, x, &mut d);
                        send(*b, d, &mut grads);
                    }
                }
                Op::TMatMul(a, b) => {
                    // out = xᵀ · y
                    let (x, y) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        let mut d = Mat::zeros(x.rows, x.cols);
                        gemm_nt(y, &g, &mut d);
                        send(*a, d, &mut grads);
                    }
                    if self.needs_grad(*b) {
                        let mut d = Mat::zeros(y.rows, y.cols);
                        gemm_nn(x, &g, &mut d);
                        send(*b, d, &mut grads);
                    }
                }
                Op::Transpose(a) => send(*a, g.transpose(), &mut grads),
                Op::Add(a, b) => {
                    send(*b, g.clone(), &mut grads);
                    send(*a, g, &mut grads);
                }
                Op::AddRow(a, row) => {
                    if self.needs_grad(*row) {
                        let mut d = Mat::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (o, x) in d.data.iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                        send(*row, d, &mut grads);
                    }
                    send(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    if self.needs_grad(*a) {
                        let d = g.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
                        send(*a, Mat::from_vec(g.rows, g.cols, d), &mut grads);
                    }
                    if self.needs_grad(*b) {
                        let d = g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect();
                        send(*b, Mat::from_vec(g.rows, g.cols, d), &mut grads);
                    }
                }
                Op::Scale(a, k) => send(*a, g.map(|x| x * k), &mut grads),
                Op::MulScalar(a, s) => {
                    let x = self.value(*a);
                    if self.needs_grad(*s) {
                        let d: f64 = g.data.iter().zip(&x.data).map(|(p, q)| p * q).sum();
                        send(*s, Mat::scalar(d), &mut grads);
                    }
                    let k = self.value(*s).item();
                    send(*a, g.map(|x| x * k), &mut grads);
                }
                Op::OneMinus(a) => send(*a, g.map(|x| -x), &mut grads),
                Op::Sigmoid(a) => {
                    let d = g.data.iter().zip(&out_val.data).map(|(d, y)| d * y * (1.0 - y)).collect();
                    send(*a, Mat::from_vec(g.rows, g.cols, d), &mut grads);
                }
                Op::Tanh(a) => {
                    let d = g.data.iter().zip(&out_val.data).map(|(d, y)| d * (1.0 - y * y)).collect();
                    send(*a, Mat::from_vec(g.rows, g.cols, d), &mut grads);
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    let d = g.data.iter().zip(&x.data).map(|(d, x)| d / x).collect();
                    send(*a, Mat::from_vec(g.rows, g.cols, d), &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    let mut d = Mat::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let (gy, y) = (g.row(r), out_val.row(r));
                        let dot: f64 = gy.iter().zip(y).map(|(p, q)| p * q).sum();
                        for (o, (gv, yv)) in d.row_mut(r).iter_mut().zip(gy.iter().zip(y)) {
                            *o = yv * (gv - dot);
                        }
                    }
                    send(*a, d, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        if self.needs_grad(p) {
                            let mut d = Mat::zeros(rows, cols);
                            for r in 0..rows {
                                d.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                            }
                            send(p, d, &mut grads);
                        }
                        off += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        if self.needs_grad(p) {
                            let d = Mat::from_vec(rows, cols, g.data[off * cols..(off + rows) * cols].to_vec());
                            send(p, d, &mut grads);
                        }
                        off += rows;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    send(*a, d, &mut grads);
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Mat::zeros(rows, cols);
                    d.data[start * cols..(start + g.rows) * cols].copy_from_slice(&g.data);
                    send(*a, d, &mut grads);
                }
                Op::GatherRows(a, ids) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Mat::zeros(rows, cols);
                    for (k, &i) in ids.iter().enumerate() {
                        for (o, x) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    send(*a, d, &mut grads);
                }
                Op::ScatterCols(a, targets) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.row(r);
                        let dr = d.row_mut(r);
                        for (j, &t) in targets.iter().enumerate() {
                            dr[j] = gr[t];
                        }
                    }
                    send(*a, d, &mut grads);
                }
                Op::Pick(a, r, c) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Mat::zeros(rows, cols);
                    *d.at_mut(*r, *c) = g.item();
                    send(*a, d, &mut grads);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    send(*a, Mat::filled(rows, cols, g.item()), &mut grads);
                }
                Op::Lstm(z, state) => {
                    let (zm, sm) = (self.value(*z), self.value(*state));
                    let h = zm.cols / 4;
                    let mut dz = Mat::zeros(zm.rows, zm.cols);
                    let mut ds = Mat::zeros(sm.rows, sm.cols);
                    for r in 0..zm.rows {
                        let zr = zm.row(r);
                        let c_prev = &sm.row(r)[h..];
                        let c_new = &out_val.row(r)[h..];
                        let (dh, dc) = g.row(r).split_at(h);
                        let dzr = dz.row_mut(r);
                        let mut dc_prev = vec![0.0; h];
                        for k in 0..h {
                            let i = sigmoid(zr[k]);
                            let f = sigmoid(zr[h + k]);
                            let gg = zr[2 * h + k].tanh();
                            let o = sigmoid(zr[3 * h + k]);
                            let tc = c_new[k].tanh();
                            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
                            dzr[k] = dct * gg * i * (1.0 - i);
                            dzr[h + k] = dct * c_prev[k] * f * (1.0 - f);
                            dzr[2 * h + k] = dct * i * (1.0 - gg * gg);
                            dzr[3 * h + k] = dh[k] * tc * o * (1.0 - o);
                            dc_prev[k] = dct * f;
                        }
                        ds.row_mut(r)[h..].copy_from_slice(&dc_prev);
                    }
                    send(*z, dz, &mut grads);
                    send(*state, ds, &mut grads);
                }
            }
        }
        out
    }
}
