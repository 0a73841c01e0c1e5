use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamSet, Tensor};
use super::tape::{Tape, Var};
use super::text::Utterance;

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = params.add(format!("{name}.weight"), Tensor::glorot(output, input, rng));
        let b = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(output, 1)));
        Linear { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        tape.linear(self.w, self.b, x)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        std::iter::once(self.w).chain(self.b).collect()
    }
}

/// Bag-of-features utterance encoder with a cross-segment interaction term.
///
/// A single segment encodes as `tanh(W a + c)` where `a` is the mean feature
/// embedding. A pair input adds `U b + V (â * b̂)`, with `â`, `b̂` the unit
/// vectors of `a` and `b`, so the model can relate the comment to the rule
/// text (or community) on the other side of the separator.
#[derive(Clone, Debug)]
pub struct UtteranceEncoder {
    table: ParamId,
    first: Linear,
    second: Linear,
    interaction: Linear,
}

impl UtteranceEncoder {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        buckets: usize,
        embed_dim: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let table = params.add(
            "encoder.embeddings",
            Tensor::uniform(buckets, embed_dim, 0.05, rng),
        );
        UtteranceEncoder {
            table,
            first: Linear::new(params, "encoder.first", embed_dim, output, true, rng),
            second: Linear::new(params, "encoder.second", embed_dim, output, false, rng),
            interaction: Linear::new(params, "encoder.interaction", embed_dim, output, false, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, utterance: &Utterance) -> Var {
        let empty = Vec::new();
        let first_ids = utterance.segments.first().unwrap_or(&empty);
        let a = tape.embed_mean(self.table, first_ids);
        let mut pre = self.first.forward(tape, a);
        if let Some(second_ids) = utterance.segments.get(1) {
            let b = tape.embed_mean(self.table, second_ids);
            let pb = self.second.forward(tape, b);
            let na = tape.normalize(a);
            let nb = tape.normalize(b);
            let ab = tape.mul(na, nb);
            let pab = self.interaction.forward(tape, ab);
            pre = tape.add(pre, pb);
            pre = tape.add(pre, pab);
        }
        tape.tanh(pre)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    #[default]
    Gru,
    Lstm,
}

#[derive(Clone, Debug)]
struct GruCell {
    z_in: Linear,
    z_hid: Linear,
    r_in: Linear,
    r_hid: Linear,
    n_in: Linear,
    n_hid: Linear,
}

impl GruCell {
    fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        GruCell {
            z_in: Linear::new(params, &format!("{name}.z_in"), input, hidden, true, rng),
            z_hid: Linear::new(params, &format!("{name}.z_hid"), hidden, hidden, false, rng),
            r_in: Linear::new(params, &format!("{name}.r_in"), input, hidden, true, rng),
            r_hid: Linear::new(params, &format!("{name}.r_hid"), hidden, hidden, false, rng),
            n_in: Linear::new(params, &format!("{name}.n_in"), input, hidden, true, rng),
            n_hid: Linear::new(params, &format!("{name}.n_hid"), hidden, hidden, true, rng),
        }
    }

    fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let zi = self.z_in.forward(tape, x);
        let zh = self.z_hid.forward(tape, h);
        let z_pre = tape.add(zi, zh);
        let z = tape.sigmoid(z_pre);
        let ri = self.r_in.forward(tape, x);
        let rh = self.r_hid.forward(tape, h);
        let r_pre = tape.add(ri, rh);
        let r = tape.sigmoid(r_pre);
        let ni = self.n_in.forward(tape, x);
        let nh = self.n_hid.forward(tape, h);
        let gated = tape.mul(r, nh);
        let n_pre = tape.add(ni, gated);
        let n = tape.tanh(n_pre);
        let keep_new = tape.one_minus(z);
        let fresh = tape.mul(keep_new, n);
        let carried = tape.mul(z, h);
        tape.add(fresh, carried)
    }
}

#[derive(Clone, Debug)]
struct LstmCell {
    gates_in: [Linear; 4],
    gates_hid: [Linear; 4],
}

impl LstmCell {
    fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let gate = |params: &mut ParamSet, g: &str, rng: &mut R| {
            (
                Linear::new(params, &format!("{name}.{g}_in"), input, hidden, true, rng),
                Linear::new(params, &format!("{name}.{g}_hid"), hidden, hidden, false, rng),
            )
        };
        let (ii, ih) = gate(params, "i", rng);
        let (fi, fh) = gate(params, "f", rng);
        let (gi, gh) = gate(params, "g", rng);
        let (oi, oh) = gate(params, "o", rng);
        // forget-gate bias starts at 1
        if let Some(b) = fi.b {
            params.get_mut(b).data.fill(1.0);
        }
        LstmCell {
            gates_in: [ii, fi, gi, oi],
            gates_hid: [ih, fh, gh, oh],
        }
    }

    fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        let mut pre = [x; 4];
        for (k, p) in pre.iter_mut().enumerate() {
            let a = self.gates_in[k].forward(tape, x);
            let b = self.gates_hid[k].forward(tape, h);
            *p = tape.add(a, b);
        }
        let i = tape.sigmoid(pre[0]);
        let f = tape.sigmoid(pre[1]);
        let g = tape.tanh(pre[2]);
        let o = tape.sigmoid(pre[3]);
        let kept = tape.mul(f, c);
        let written = tape.mul(i, g);
        let c_next = tape.add(kept, written);
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed);
        (h_next, c_next)
    }
}

#[derive(Clone, Debug)]
enum Cell {
    Gru(GruCell),
    Lstm(LstmCell),
}

/// Stacked uni-directional recurrent encoder over utterance vectors.
#[derive(Clone, Debug)]
pub struct ContextEncoder {
    layers: Vec<Cell>,
    hidden: usize,
}

impl ContextEncoder {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        cell: CellType,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..layers.max(1))
            .map(|l| {
                let width = if l == 0 { input } else { hidden };
                let name = format!("context.{l}");
                match cell {
                    CellType::Gru => Cell::Gru(GruCell::new(params, &name, width, hidden, rng)),
                    CellType::Lstm => Cell::Lstm(LstmCell::new(params, &name, width, hidden, rng)),
                }
            })
            .collect();
        ContextEncoder { layers, hidden }
    }

    /// Returns the top layer's hidden state after the last utterance.
    pub fn forward(&self, tape: &mut Tape, inputs: &[Var]) -> Var {
        let mut hs: Vec<Var> = (0..self.layers.len()).map(|_| tape.zeros(self.hidden)).collect();
        let mut cs: Vec<Var> = (0..self.layers.len()).map(|_| tape.zeros(self.hidden)).collect();
        let mut top = hs[hs.len() - 1];
        for &x in inputs {
            let mut below = x;
            for (l, layer) in self.layers.iter().enumerate() {
                match layer {
                    Cell::Gru(g) => hs[l] = g.step(tape, below, hs[l]),
                    Cell::Lstm(m) => {
                        let (h, c) = m.step(tape, below, hs[l], cs[l]);
                        hs[l] = h;
                        cs[l] = c;
                    }
                }
                below = hs[l];
            }
            top = below;
        }
        top
    }
}

/// Two affine layers mapping a conversation vector to a single logit.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    hidden: Linear,
    output: Linear,
}

impl ClassifierHead {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, input: usize, hidden: usize, rng: &mut R) -> Self {
        ClassifierHead {
            hidden: Linear::new(params, "head.hidden", input, hidden, true, rng),
            output: Linear::new(params, "head.output", hidden, 1, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = self.hidden.forward(tape, x);
        let a = tape.tanh(h);
        self.output.forward(tape, a)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.hidden.param_ids();
        ids.extend(self.output.param_ids());
        ids
    }
}
