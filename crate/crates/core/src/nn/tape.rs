//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records one forward pass against a borrowed [`ParamSet`].
//! Parameters are never copied onto the tape; ops that read them
//! (`linear`, `embed_mean`) address them by [`ParamId`] and write their
//! gradients straight into a [`Grads`] buffer during `backward`.

use super::params::{Grads, ParamId, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Keeps `normalize` finite on the zero vector.
pub const NORM_EPS: f64 = 1e-8;

enum Op {
    Input,
    Linear {
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    OneMinus(Var),
    Normalize(Var),
    EmbedMean {
        table: ParamId,
        ids: Vec<u32>,
    },
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    values: Vec<Vec<f64>>,
    ops: Vec<Op>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.input(vec![0.0; len])
    }

    /// `w * x (+ b)` where `w` is `out x in`.
    pub fn linear(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Var {
        let wt = self.params.get(w);
        let xv = &self.values[x.0];
        assert_eq!(wt.cols, xv.len(), "linear: input width mismatch");
        let mut out = match b {
            Some(b) => self.params.get(b).data.clone(),
            None => vec![0.0; wt.rows],
        };
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(wt.row(r), xv);
        }
        self.push(out, Op::Linear { w, b, x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(&self.values[a.0], &self.values[b.0], |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = zip_map(&self.values[a.0], &self.values[b.0], |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.values[a.0].iter().map(|&x| sigmoid(x)).collect();
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.values[a.0].iter().map(|x| x.tanh()).collect();
        self.push(out, Op::Tanh(a))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.values[a.0].iter().map(|x| 1.0 - x).collect();
        self.push(out, Op::OneMinus(a))
    }

    /// `x / sqrt(|x|^2 + NORM_EPS)`.
    pub fn normalize(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let n = (dot(x, x) + NORM_EPS).sqrt();
        let out = x.iter().map(|v| v / n).collect();
        self.push(out, Op::Normalize(a))
    }

    /// Mean of the selected rows of an embedding table. An empty id list
    /// yields the zero vector.
    pub fn embed_mean(&mut self, table: ParamId, ids: &[u32]) -> Var {
        let t = self.params.get(table);
        let mut out = vec![0.0; t.cols];
        if !ids.is_empty() {
            let inv = 1.0 / ids.len() as f64;
            for &id in ids {
                for (o, v) in out.iter_mut().zip(t.row(id as usize)) {
                    *o += v * inv;
                }
            }
        }
        self.push(
            out,
            Op::EmbedMean {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Backpropagates `seed` (d loss / d out) and accumulates parameter
    /// gradients into `grads`.
    pub fn backward(&self, out: Var, seed: &[f64], grads: &mut Grads) {
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        adj[out.0] = Some(seed.to_vec());
        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.ops[i] {
                Op::Input => {}
                Op::Linear { w, b, x } => {
                    let wt = self.params.get(*w);
                    let xv = &self.values[x.0];
                    {
                        let gw = grads.get_mut(*w);
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            let row = &mut gw[r * wt.cols..(r + 1) * wt.cols];
                            for (dst, xi) in row.iter_mut().zip(xv) {
                                *dst += gr * xi;
                            }
                        }
                    }
                    if let Some(b) = b {
                        for (dst, gr) in grads.get_mut(*b).iter_mut().zip(&g) {
                            *dst += gr;
                        }
                    }
                    let dx = accumulate(&mut adj, *x, wt.cols);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr == 0.0 {
                            continue;
                        }
                        for (d, wv) in dx.iter_mut().zip(wt.row(r)) {
                            *d += gr * wv;
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(accumulate(&mut adj, *a, g.len()), &g);
                    add_into(accumulate(&mut adj, *b, g.len()), &g);
                }
                Op::Mul(a, b) => {
                    let av = &self.values[a.0];
                    let bv = &self.values[b.0];
                    let da: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    let db: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    add_into(accumulate(&mut adj, *a, g.len()), &da);
                    add_into(accumulate(&mut adj, *b, g.len()), &db);
                }
                Op::Sigmoid(a) => {
                    let y = &self.values[i];
                    let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    add_into(accumulate(&mut adj, *a, g.len()), &d);
                }
                Op::Tanh(a) => {
                    let y = &self.values[i];
                    let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    add_into(accumulate(&mut adj, *a, g.len()), &d);
                }
                Op::OneMinus(a) => {
                    let d: Vec<f64> = g.iter().map(|g| -g).collect();
                    add_into(accumulate(&mut adj, *a, g.len()), &d);
                }
                Op::Normalize(a) => {
                    let y = &self.values[i];
                    let x = &self.values[a.0];
                    let n = (dot(x, x) + NORM_EPS).sqrt();
                    let yg = dot(y, &g);
                    let d: Vec<f64> = g.iter().zip(y).map(|(g, y)| (g - y * yg) / n).collect();
                    add_into(accumulate(&mut adj, *a, g.len()), &d);
                }
                Op::EmbedMean { table, ids } => {
                    if ids.is_empty() {
                        continue;
                    }
                    let cols = self.params.get(*table).cols;
                    let inv = 1.0 / ids.len() as f64;
                    let gt = grads.get_mut(*table);
                    for &id in ids {
                        let row = &mut gt[id as usize * cols..(id as usize + 1) * cols];
                        for (dst, gr) in row.iter_mut().zip(&g) {
                            *dst += gr * inv;
                        }
                    }
                }
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "elementwise op on mismatched widths");
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, returning `(loss, d loss / d logit)`.
pub fn bce_with_logit(logit: f64, target: bool) -> (f64, f64) {
    let y = if target { 1.0 } else { 0.0 };
    // softplus(z) - y z, computed stably
    let loss = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_loss(params: &ParamSet, build: &dyn Fn(&mut Tape) -> Var) -> f64 {
        let mut tape = Tape::new(params);
        let out = build(&mut tape);
        tape.value(out).iter().sum()
    }

    #[test]
    fn finite_differences_match_every_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        let emb = params.add("emb", Tensor::uniform(6, 4, 0.5, &mut rng));
        let w1 = params.add("w1", Tensor::glorot(4, 4, &mut rng));
        let b1 = params.add("b1", Tensor::uniform(4, 1, 0.1, &mut rng));
        let w2 = params.add("w2", Tensor::glorot(3, 4, &mut rng));

        let build = move |t: &mut Tape| {
            let e = t.embed_mean(emb, &[1, 3, 3, 5]);
            let h = t.linear(w1, Some(b1), e);
            let a = t.tanh(h);
            let s = t.sigmoid(h);
            let m = t.mul(a, s);
            let om = t.one_minus(s);
            let sum = t.add(m, om);
            let n = t.normalize(sum);
            let both = t.add(sum, n);
            t.linear(w2, None, both)
        };

        let mut grads = params.zero_grads();
        {
            let mut tape = Tape::new(&params);
            let out = build(&mut tape);
            tape.backward(out, &[1.0, 1.0, 1.0], &mut grads);
        }

        let h = 1e-6;
        for id in params.ids() {
            for k in 0..params.get(id).data.len() {
                let mut plus = params.clone();
                plus.get_mut(id).data[k] += h;
                let mut minus = params.clone();
                minus.get_mut(id).data[k] -= h;
                let numeric = (scalar_loss(&plus, &build) - scalar_loss(&minus, &build)) / (2.0 * h);
                let analytic = grads.get(id)[k];
                let denom = (numeric.abs() + analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-5 || (numeric - analytic).abs() < 1e-9,
                    "{}[{k}]: analytic {analytic} numeric {numeric}",
                    params.name(id)
                );
            }
        }
    }

    #[test]
    fn bce_gradient_is_residual() {
        let (l, g) = bce_with_logit(0.0, true);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g + 0.5).abs() < 1e-12);
        let (l, _) = bce_with_logit(-800.0, true);
        assert!(l.is_finite());
    }
}
