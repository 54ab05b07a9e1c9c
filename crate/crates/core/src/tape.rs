//! Minimal reverse-mode automatic differentiation over `f64` matrices.
//!
//! Every value is a 2-D array; scalars are `1 × 1`. Nodes are appended in
//! evaluation order, so a single reverse sweep visits them topologically.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `n × m` plus a broadcast `1 × m` row.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    /// Rotation of consecutive column pairs by per-row angles.
    Rope {
        x: Var,
        cos: Array2<f64>,
        sin: Array2<f64>,
    },
    MeanSquare(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Array2<f64>>>,
}

impl Grads {
    /// Gradient of the output with respect to `v` (zeros if unreachable).
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| Array2::zeros(shape))
    }

    pub fn try_get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Sub(a, b), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1, "add_row expects a single row");
        let value = self.value(a) + self.value(row);
        let ng = self.needs(&[a, row]);
        self.push(value, Op::AddRow(a, row), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let ng = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        let ng = self.needs(&[a]);
        self.push(value, Op::Scale(a, k), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let ng = self.needs(&[a]);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(0), &views).expect("column counts must agree");
        let ng = self.needs(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("row counts must agree");
        let ng = self.needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        let ng = self.needs(&[a]);
        self.push(value, Op::SliceRows(a, start, end), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.needs(&[a]);
        self.push(value, Op::SliceCols(a, start, end), ng)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), idx);
        let ng = self.needs(&[a]);
        self.push(value, Op::GatherRows(a, idx.to_vec()), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row /= s;
        }
        let ng = self.needs(&[a]);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    /// Per-row normalisation with learned `1 × m` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        assert!(eps > 0.0, "layer norm epsilon must be positive");
        let xv = self.value(x);
        let (n, m) = xv.dim();
        let mut xhat = Array2::zeros((n, m));
        let mut inv_std = Vec::with_capacity(n);
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / m as f64;
            let var = row.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / m as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..m {
                xhat[[i, j]] = (row[j] - mean) * is;
            }
        }
        let value = &xhat * self.value(gamma) + self.value(beta);
        let ng = self.needs(&[x, gamma, beta]);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        )
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        let ng = self.needs(&[a]);
        self.push(value, Op::Gelu(a), ng)
    }

    /// Rotates column pairs `(2i, 2i+1)` of row `r` by the angle whose cosine
    /// and sine are `cos[r, i]`, `sin[r, i]`.
    pub fn rope(&mut self, x: Var, cos: Array2<f64>, sin: Array2<f64>) -> Var {
        let xv = self.value(x);
        let (n, m) = xv.dim();
        assert_eq!(cos.dim(), (n, m / 2));
        let mut value = Array2::zeros((n, m));
        for r in 0..n {
            for i in 0..m / 2 {
                let (a, b) = (xv[[r, 2 * i]], xv[[r, 2 * i + 1]]);
                let (c, s) = (cos[[r, i]], sin[[r, i]]);
                value[[r, 2 * i]] = a * c - b * s;
                value[[r, 2 * i + 1]] = a * s + b * c;
            }
        }
        let ng = self.needs(&[x]);
        self.push(value, Op::Rope { x, cos, sin }, ng)
    }

    /// Mean of squared entries, as a `1 × 1` value.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Array2::from_elem((1, 1), v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64);
        let ng = self.needs(&[a]);
        self.push(value, Op::MeanSquare(a), ng)
    }

    /// Reverse sweep from the scalar `out`.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.shape(out), (1, 1), "backward starts from a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], nodes: &[Node], v: Var, g: Array2<f64>) {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let nodes = &self.nodes;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if nodes[a.0].needs_grad {
                        acc(&mut grads, nodes, *a, g.dot(&nodes[b.0].value.t()));
                    }
                    if nodes[b.0].needs_grad {
                        acc(&mut grads, nodes, *b, nodes[a.0].value.t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, nodes, *a, g.clone());
                    acc(&mut grads, nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, nodes, *b, -&g);
                    acc(&mut grads, nodes, *a, g);
                }
                Op::AddRow(a, r) => {
                    acc(&mut grads, nodes, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, nodes, *a, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, nodes, *a, &g * &nodes[b.0].value);
                    acc(&mut grads, nodes, *b, &g * &nodes[a.0].value);
                }
                Op::Scale(a, k) => acc(&mut grads, nodes, *a, g * *k),
                Op::Transpose(a) => acc(&mut grads, nodes, *a, g.t().to_owned()),
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = nodes[p.0].value.nrows();
                        acc(&mut grads, nodes, *p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = nodes[p.0].value.ncols();
                        acc(&mut grads, nodes, *p, g.slice(s![.., start..start + n]).to_owned());
                        start += n;
                    }
                }
                Op::SliceRows(a, start, end) => {
                    let mut full = Array2::zeros(nodes[a.0].value.dim());
                    full.slice_mut(s![*start..*end, ..]).assign(&g);
                    acc(&mut grads, nodes, *a, full);
                }
                Op::SliceCols(a, start, end) => {
                    let mut full = Array2::zeros(nodes[a.0].value.dim());
                    full.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, nodes, *a, full);
                }
                Op::GatherRows(a, idx) => {
                    let mut full = Array2::zeros(nodes[a.0].value.dim());
                    for (i, &src) in idx.iter().enumerate() {
                        let mut row = full.row_mut(src);
                        row += &g.row(i);
                    }
                    acc(&mut grads, nodes, *a, full);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut dx = &g * y;
                    for (mut row, yr) in dx.rows_mut().into_iter().zip(y.rows()) {
                        let s = row.sum();
                        Zip::from(&mut row).and(&yr).for_each(|d, &yv| *d -= yv * s);
                    }
                    acc(&mut grads, nodes, *a, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    acc(&mut grads, nodes, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, nodes, *gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    if nodes[x.0].needs_grad {
                        let dxhat = &g * &nodes[gamma.0].value;
                        let m = dxhat.ncols() as f64;
                        let mut dx = Array2::zeros(dxhat.dim());
                        for i in 0..dxhat.nrows() {
                            let dr = dxhat.row(i);
                            let xr = xhat.row(i);
                            let mean_d = dr.sum() / m;
                            let mean_dx = dr.dot(&xr) / m;
                            for j in 0..dr.len() {
                                dx[[i, j]] = inv_std[i] * (dr[j] - mean_d - xr[j] * mean_dx);
                            }
                        }
                        acc(&mut grads, nodes, *x, dx);
                    }
                }
                Op::Gelu(a) => {
                    let dx = Zip::from(&g).and(&nodes[a.0].value).map_collect(|&gi, &xi| gi * gelu_grad(xi));
                    acc(&mut grads, nodes, *a, dx);
                }
                Op::Rope { x, cos, sin } => {
                    let (n, m) = g.dim();
                    let mut dx = Array2::zeros((n, m));
                    for r in 0..n {
                        for i in 0..m / 2 {
                            let (ga, gb) = (g[[r, 2 * i]], g[[r, 2 * i + 1]]);
                            let (c, s) = (cos[[r, i]], sin[[r, i]]);
                            dx[[r, 2 * i]] = ga * c + gb * s;
                            dx[[r, 2 * i + 1]] = -ga * s + gb * c;
                        }
                    }
                    acc(&mut grads, nodes, *x, dx);
                }
                Op::MeanSquare(a) => {
                    let v = &nodes[a.0].value;
                    let k = 2.0 * g[[0, 0]] / v.len() as f64;
                    acc(&mut grads, nodes, *a, v * k);
                }
            }
        }
        Grads { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, m), |_| rng.random_range(-1.0..1.0))
    }

    /// Builds a scalar from `inputs` and checks every input gradient against
    /// central differences.
    fn check(inputs: Vec<Array2<f64>>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|a| tape.param(a.clone())).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out);
        let eval = |xs: &[Array2<f64>]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = xs.iter().map(|a| t.param(a.clone())).collect();
            let o = f(&mut t, &vs);
            t.scalar(o)
        };
        let h = 1e-6;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k], input.dim());
            for idx in 0..input.len() {
                let (r, c) = (idx / input.ncols(), idx % input.ncols());
                let mut plus = inputs.clone();
                plus[k][[r, c]] += h;
                let mut minus = inputs.clone();
                minus[k][[r, c]] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic[[r, c]];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(err < 1e-5, "input {k} [{r},{c}]: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn matmul_transpose_and_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check(vec![random(&mut rng, 3, 4), random(&mut rng, 4, 5)], |t, v| {
            let m = t.matmul(v[0], v[1]);
            let tr = t.transpose(m);
            let a = t.slice_rows(tr, 1, 4);
            let b = t.slice_cols(a, 0, 2);
            let g = t.gather_rows(b, &[2, 0, 2]);
            t.mean_square(g)
        });
    }

    #[test]
    fn elementwise_and_concat() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        check(
            vec![random(&mut rng, 2, 3), random(&mut rng, 2, 3), random(&mut rng, 1, 3)],
            |t, v| {
                let a = t.mul(v[0], v[1]);
                let b = t.sub(a, v[1]);
                let c = t.add_row(b, v[2]);
                let d = t.scale(c, -1.7);
                let e = t.concat_rows(&[d, v[0]]);
                let f = t.concat_cols(&[e, e]);
                let g = t.add(f, f);
                t.mean_square(g)
            },
        );
    }

    #[test]
    fn nonlinearities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let angles = random(&mut rng, n, 2);
        let cos = angles.mapv(f64::cos);
        let sin = angles.mapv(f64::sin);
        check(
            vec![random(&mut rng, n, 4), random(&mut rng, 1, 4), random(&mut rng, 1, 4)],
            move |t, v| {
                let ln = t.layer_norm(v[0], v[1], v[2], 1e-5);
                let g = t.gelu(ln);
                let r = t.rope(g, cos.clone(), sin.clone());
                let s = t.softmax_rows(r);
                let w = t.mul(s, v[0]);
                t.mean_square(w)
            },
        );
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Array2::ones((2, 2)));
        let p = t.param(Array2::ones((2, 2)));
        let m = t.matmul(c, p);
        let o = t.mean_square(m);
        let g = t.backward(o);
        assert!(g.try_get(c).is_none());
        assert!(g.try_get(p).is_some());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t.constant(Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 1000.0, 0.0, -1000.0]).unwrap());
        let s = t.softmax_rows(x);
        for row in t.value(s).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-15);
        }
    }
}
