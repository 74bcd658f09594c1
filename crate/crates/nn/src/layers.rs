use rand::Rng;

use crate::error::{NnError, Result};
use crate::params::{xavier, ParamId, ParamStore};
use crate::tape::{Mat, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

fn check_cols(tape: &Tape, x: Var, cols: usize, what: &str) -> Result<()> {
    let got = tape.shape(x);
    if got.1 != cols {
        return Err(NnError::ShapeMismatch {
            what: what.to_string(),
            expected: (got.0, cols),
            got,
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
    ) -> Result<Self> {
        let w = store.register(&format!("{name}.w"), xavier(input, output, rng))?;
        let b = if bias {
            Some(store.register(&format!("{name}.b"), Mat::zeros((1, output)))?)
        } else {
            None
        };
        Ok(Dense { w, b, input, output })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        check_cols(tape, x, self.input, store.name(self.w))?;
        let w = tape.param(store, self.w);
        let mut y = tape.matmul(x, w);
        if let Some(b) = self.b {
            let b = tape.param(store, b);
            y = tape.add_row(y, b);
        }
        Ok(y)
    }
}

/// Stack of dense layers with one activation between layers and another at the end.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        dims: &[usize],
        bias: bool,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self> {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::register(store, rng, &format!("{name}.{i}"), w[0], w[1], bias))
            .collect::<Result<_>>()?;
        Ok(Mlp {
            layers,
            hidden,
            output,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            h = if i == last { self.output } else { self.hidden }.apply(tape, h);
        }
        Ok(h)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output
    }
}

/// LSTM cell with gate order input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        let wx = store.register(&format!("{name}.wx"), xavier(input, 4 * hidden, rng))?;
        let wh = store.register(&format!("{name}.wh"), xavier(hidden, 4 * hidden, rng))?;
        // forget gate starts open
        let mut bias = Mat::zeros((1, 4 * hidden));
        bias.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        let b = store.register(&format!("{name}.b"), bias)?;
        Ok(LstmCell {
            wx,
            wh,
            b,
            input,
            hidden,
        })
    }

    /// One step; returns the new `(h, c)`.
    pub fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let name = store.name(self.wx);
        check_cols(tape, x, self.input, name)?;
        check_cols(tape, h, self.hidden, name)?;
        check_cols(tape, c, self.hidden, name)?;
        let d = self.hidden;
        let wx = tape.param(store, self.wx);
        let wh = tape.param(store, self.wh);
        let b = tape.param(store, self.b);
        let gx = tape.matmul(x, wx);
        let gh = tape.matmul(h, wh);
        let g = tape.add(gx, gh);
        let g = tape.add_row(g, b);
        let i = tape.slice_cols(g, 0..d);
        let f = tape.slice_cols(g, d..2 * d);
        let u = tape.slice_cols(g, 2 * d..3 * d);
        let o = tape.slice_cols(g, 3 * d..4 * d);
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let u = tape.tanh(u);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c);
        let write = tape.mul(i, u);
        let c2 = tape.add(keep, write);
        let tc = tape.tanh(c2);
        let h2 = tape.mul(o, tc);
        Ok((h2, c2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_rejects_wrong_width() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::register(&mut store, &mut rng, "m", &[3, 4, 1], true, Activation::Relu, Activation::Identity)
            .unwrap();
        let mut tape = Tape::new();
        let x = tape.input(Mat::zeros((2, 5)));
        assert!(matches!(mlp.forward(&mut tape, &store, x), Err(NnError::ShapeMismatch { .. })));
        let x = tape.input(Mat::zeros((2, 3)));
        let y = mlp.forward(&mut tape, &store, x).unwrap();
        assert_eq!(tape.shape(y), (2, 1));
    }

    #[test]
    fn lstm_shapes_and_param_count() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::register(&mut store, &mut rng, "l", 6, 4).unwrap();
        assert_eq!(store.count("l."), 6 * 16 + 4 * 16 + 16);
        let mut tape = Tape::new();
        let x = tape.input(Mat::ones((3, 6)));
        let h = tape.input(Mat::zeros((3, 4)));
        let c = tape.input(Mat::zeros((3, 4)));
        let (h2, c2) = cell.step(&mut tape, &store, x, h, c).unwrap();
        assert_eq!(tape.shape(h2), (3, 4));
        assert_eq!(tape.shape(c2), (3, 4));
        assert!(tape.value(h2).iter().all(|v| v.abs() < 1.0));
    }
}
