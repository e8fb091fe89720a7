//! Reverse-mode gradient tape over the small vocabulary of operations used by
//! proxy networks. Every value is a (batch, features) matrix; scalars are 1x1.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};

use super::kernels::{self, ConvGeometry};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Dense {
        x: usize,
        w: usize,
        b: usize,
    },
    Conv1d {
        x: usize,
        w: usize,
        b: usize,
        geom: ConvGeometry,
    },
    Relu(usize),
    Tanh(usize),
    Sin(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sum(usize),
    Concat(Vec<usize>),
    Fourier {
        x: usize,
        freq: Arc<Array2<f64>>,
    },
    Mse {
        pred: usize,
        target: Array2<f64>,
    },
    WeightedMse {
        pred: usize,
        target: Array2<f64>,
        weights: Array2<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Records primitive operations in creation order, which is a topological
/// order of the computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Accumulated adjoints, one slot per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for `v`, or zeros of the right shape when `v` did not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Array2<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(self.shapes[v.0]))
    }
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
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

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    /// Bias vectors are recorded as 1xN rows.
    pub fn row(&mut self, value: &Array1<f64>) -> Var {
        self.leaf(value.clone().insert_axis(Axis(0)))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.ncols() != wv.ncols() || bv.dim() != (1, wv.nrows()) {
            return Err(Error::shape(format!(
                "dense: input {:?}, weight {:?}, bias {:?}",
                xv.dim(),
                wv.dim(),
                bv.dim()
            )));
        }
        let y = kernels::dense_forward(xv.view(), wv.view(), bv.row(0));
        Ok(self.push(y, Op::Dense { x: x.0, w: w.0, b: b.0 }))
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeometry) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.ncols() != geom.in_channels * geom.len
            || wv.dim() != (geom.out_channels, geom.in_channels * geom.kernel)
            || bv.dim() != (1, geom.out_channels)
        {
            return Err(Error::shape(format!(
                "conv1d: input {:?}, weight {:?}, bias {:?} for {geom:?}",
                xv.dim(),
                wv.dim(),
                bv.dim()
            )));
        }
        let y = kernels::conv1d_forward(xv.view(), wv.view(), bv.row(0), geom);
        Ok(self.push(
            y,
            Op::Conv1d {
                x: x.0,
                w: w.0,
                b: b.0,
                geom,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(|v| v.max(0.0));
        self.push(y, Op::Relu(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(f64::tanh);
        self.push(y, Op::Tanh(x.0))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(f64::sin);
        self.push(y, Op::Sin(x.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let y = self.value(a) + self.value(b);
        Ok(self.push(y, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let y = self.value(a) - self.value(b);
        Ok(self.push(y, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let y = self.value(a) * self.value(b);
        Ok(self.push(y, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let y = self.value(x) * k;
        self.push(y, Op::Scale(x.0, k))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(x.0))
    }

    /// Column-wise concatenation of equally tall values.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let y = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::shape(format!("concat: {e}")))?;
        Ok(self.push(y, Op::Concat(parts.iter().map(|p| p.0).collect())))
    }

    /// Fourier feature lift `[sin(2π·B·x), cos(2π·B·x)]` with a frozen `B`.
    pub fn fourier(&mut self, x: Var, freq: Arc<Array2<f64>>) -> Result<Var> {
        if self.value(x).ncols() != freq.ncols() {
            return Err(Error::shape(format!(
                "fourier: input width {} but B has {} columns",
                self.value(x).ncols(),
                freq.ncols()
            )));
        }
        let y = kernels::fourier_lift(self.value(x).view(), freq.view());
        Ok(self.push(y, Op::Fourier { x: x.0, freq }))
    }

    /// Mean over rows of the squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: Array2<f64>) -> Result<Var> {
        let p = self.value(pred);
        same_shape(p, &target, "mse")?;
        let n = p.len() as f64;
        let mut acc = 0.0;
        for (a, t) in p.iter().zip(target.iter()) {
            let e = a - t;
            acc += e * e;
        }
        Ok(self.push(Array2::from_elem((1, 1), acc / n), Op::Mse { pred: pred.0, target }))
    }

    /// Mean of `w_i · (pred_i − target_i)²` with constant per-entry weights.
    pub fn weighted_mse(&mut self, pred: Var, target: Array2<f64>, weights: Array2<f64>) -> Result<Var> {
        let p = self.value(pred);
        same_shape(p, &target, "weighted_mse target")?;
        same_shape(p, &weights, "weighted_mse weights")?;
        let n = p.len() as f64;
        let mut acc = 0.0;
        for ((a, t), w) in p.iter().zip(target.iter()).zip(weights.iter()) {
            let e = a - t;
            acc += w * (e * e);
        }
        Ok(self.push(
            Array2::from_elem((1, 1), acc / n),
            Op::WeightedMse {
                pred: pred.0,
                target,
                weights,
            },
        ))
    }

    /// Reverse-mode accumulation from a scalar `loss`, seeded with `d(loss) = 1`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(loss).dim();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn accumulate(grads: &mut [Option<Array2<f64>>], idx: usize, g: Array2<f64>) {
            match &mut grads[idx] {
                Some(acc) => *acc += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Dense { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    accumulate(&mut grads, *x, g.dot(wv));
                    accumulate(&mut grads, *w, g.t().dot(xv));
                    accumulate(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::Conv1d { x, w, b, geom } => {
                    let (dx, dw, db) = kernels::conv1d_backward(
                        self.nodes[*x].value.view(),
                        self.nodes[*w].value.view(),
                        g.view(),
                        *geom,
                    );
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db.insert_axis(Axis(0)));
                }
                Op::Relu(x) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&self.nodes[*x].value, |d, &v| {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut grads, *x, d);
                }
                Op::Tanh(x) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&node.value, |d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads, *x, d);
                }
                Op::Sin(x) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&self.nodes[*x].value, |d, &v| *d *= v.cos());
                    accumulate(&mut grads, *x, d);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -&g);
                }
                Op::Mul(a, b) => {
                    let da = &g * &self.nodes[*b].value;
                    let db = &g * &self.nodes[*a].value;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(x, k) => accumulate(&mut grads, *x, &g * *k),
                Op::Sum(x) => {
                    let shape = self.nodes[*x].value.raw_dim();
                    accumulate(&mut grads, *x, Array2::from_elem(shape, g[[0, 0]]));
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.nodes[*p].value.ncols();
                        let slice = g.slice(ndarray::s![.., start..start + w]).to_owned();
                        accumulate(&mut grads, *p, slice);
                        start += w;
                    }
                }
                Op::Fourier { x, freq } => {
                    let m = freq.nrows();
                    let phase = kernels::fourier_phase(self.nodes[*x].value.view(), freq.view());
                    // d/dphase of [sin, cos] = [cos, −sin]
                    let mut dphase = Array2::<f64>::zeros(phase.raw_dim());
                    for ((mut dp, ph), gr) in dphase.outer_iter_mut().zip(phase.outer_iter()).zip(g.outer_iter()) {
                        for k in 0..m {
                            dp[k] = gr[k] * ph[k].cos() - gr[m + k] * ph[k].sin();
                        }
                    }
                    let mut dx = dphase.dot(freq.as_ref());
                    dx.mapv_inplace(|v| std::f64::consts::TAU * v);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mse { pred, target } => {
                    let p = &self.nodes[*pred].value;
                    let n = p.len() as f64;
                    let s = g[[0, 0]];
                    let mut d = Array2::<f64>::zeros(p.raw_dim());
                    for ((d, a), t) in d.iter_mut().zip(p.iter()).zip(target.iter()) {
                        *d = s * (2.0 * (a - t) / n);
                    }
                    accumulate(&mut grads, *pred, d);
                }
                Op::WeightedMse { pred, target, weights } => {
                    let p = &self.nodes[*pred].value;
                    let n = p.len() as f64;
                    let s = g[[0, 0]];
                    let mut d = Array2::<f64>::zeros(p.raw_dim());
                    for (((d, a), t), w) in d.iter_mut().zip(p.iter()).zip(target.iter()).zip(weights.iter()) {
                        *d = s * (2.0 * w * (a - t) / n);
                    }
                    accumulate(&mut grads, *pred, d);
                }
            }
            grads[idx] = Some(g);
        }

        let mut shapes: Vec<_> = self.nodes.iter().map(|n| n.value.dim()).collect();
        shapes.truncate(loss.0 + 1);
        Ok(Gradients { grads, shapes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let w = tape.scalar(3.0);
        let loss = tape.mul(w, w).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w)[[0, 0]], 6.0);
    }

    #[test]
    fn relu_dead_region() {
        let mut tape = Tape::new();
        let w = tape.scalar(-1.0);
        let loss = tape.relu(w);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(w)[[0, 0]], 0.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 2.0]]);
        let y = tape.tanh(x);
        assert!(matches!(
            tape.backward(y),
            Err(Error::NonScalarLoss { rows: 1, cols: 2 })
        ));
    }

    #[test]
    fn shared_input_accumulates() {
        // loss = sum(x * x + x) → 2x + 1
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.5, -2.0]]);
        let sq = tape.mul(x, x).unwrap();
        let y = tape.add(sq, x).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x), array![[4.0, -3.0]]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(array![[1.0, 2.0]]);
        let b = tape.scalar(2.0);
        let loss = tape.mul(b, b).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a), array![[0.0, 0.0]]);
        assert!(g.get(a).is_none());
    }

    #[test]
    fn weighted_mse_with_unit_weights_matches_mse() {
        let pred = array![[1.0], [2.5], [-0.5]];
        let target = array![[0.5], [3.0], [0.0]];

        let mut t1 = Tape::new();
        let p1 = t1.leaf(pred.clone());
        let l1 = t1.mse(p1, target.clone()).unwrap();
        let g1 = t1.backward(l1).unwrap();

        let mut t2 = Tape::new();
        let p2 = t2.leaf(pred);
        let l2 = t2.weighted_mse(p2, target, Array2::ones((3, 1))).unwrap();
        let g2 = t2.backward(l2).unwrap();

        assert_eq!(t1.value(l1), t2.value(l2));
        assert_eq!(g1.wrt(p1), g2.wrt(p2));
    }

    #[test]
    fn concat_splits_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(array![[1.0]]);
        let b = tape.leaf(array![[2.0, 3.0]]);
        let c = tape.concat(&[a, b]).unwrap();
        let s = tape.scale(c, 2.0);
        let loss = tape.sum(s);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(a), array![[2.0]]);
        assert_eq!(g.wrt(b), array![[2.0, 2.0]]);
    }
}
