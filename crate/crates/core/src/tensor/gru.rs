use rand::Rng;

use super::params::{init_uniform, ParamId, ParamStore};
use super::{Tape, Tensor, TensorError, Var};

/// Shapes of a GRU cell. Input-to-hidden matrices are `input x hidden`,
/// hidden-to-hidden matrices `hidden x hidden`, biases `1 x hidden`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruCellParams {
    pub input: usize,
    pub hidden: usize,
}

/// A gated recurrent unit whose weights live in a [`ParamStore`].
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// h~ = tanh(x Wh + (r * h) Uh + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub dims: GruCellParams,
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

impl GruCell {
    /// Registers the nine tensors under `prefix`. Weights are drawn from
    /// `uniform(-bound, bound)`, biases start at zero.
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dims: GruCellParams, bound: f64, rng: &mut R) -> Self {
        let (i, h) = (dims.input, dims.hidden);
        let mut w =
            |name: &str, rows: usize| store.add(format!("{}.{}", prefix, name), init_uniform(&[rows, h], bound, rng));
        let wz = w("wz", i);
        let uz = w("uz", h);
        let wr = w("wr", i);
        let ur = w("ur", h);
        let wh = w("wh", i);
        let uh = w("uh", h);
        let mut b = |name: &str| store.add(format!("{}.{}", prefix, name), Tensor::zeros(&[1, h]));
        let bz = b("bz");
        let br = b("br");
        let bh = b("bh");
        GruCell {
            dims,
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wh,
            uh,
            bh,
        }
    }

    /// Checks every registered tensor against the declared dimensions.
    pub fn validate(&self, store: &ParamStore) -> Result<(), TensorError> {
        let (i, h) = (self.dims.input, self.dims.hidden);
        let expect = [
            (self.wz, [i, h]),
            (self.uz, [h, h]),
            (self.bz, [1, h]),
            (self.wr, [i, h]),
            (self.ur, [h, h]),
            (self.br, [1, h]),
            (self.wh, [i, h]),
            (self.uh, [h, h]),
            (self.bh, [1, h]),
        ];
        for (id, shape) in expect {
            let t = store.get(id);
            if t.shape() != shape {
                return Err(TensorError::Shape {
                    op: "gru_cell",
                    left: t.shape().to_vec(),
                    right: shape.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// One recurrent step. `x` is `1 x input`, `h` is `1 x hidden`.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Result<Var, TensorError> {
        let (xr, xc) = tape.shape(x);
        let (hr, hc) = tape.shape(h);
        if xr != 1 || xc != self.dims.input {
            return Err(TensorError::Shape {
                op: "gru_cell",
                left: vec![xr, xc],
                right: vec![1, self.dims.input],
            });
        }
        if hr != 1 || hc != self.dims.hidden {
            return Err(TensorError::Shape {
                op: "gru_cell",
                left: vec![hr, hc],
                right: vec![1, self.dims.hidden],
            });
        }
        let z = self.gate(tape, x, h, self.wz, self.uz, self.bz)?;
        let z = tape.sigmoid(z)?;
        let r = self.gate(tape, x, h, self.wr, self.ur, self.br)?;
        let r = tape.sigmoid(r)?;
        let rh = tape.mul(r, h)?;
        let cand = self.gate(tape, x, rh, self.wh, self.uh, self.bh)?;
        let cand = tape.tanh(cand)?;
        // h + z * (h~ - h)
        let diff = tape.sub(cand, h)?;
        let upd = tape.mul(z, diff)?;
        tape.add(h, upd)
    }

    fn gate(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        h: Var,
        w: ParamId,
        u: ParamId,
        b: ParamId,
    ) -> Result<Var, TensorError> {
        let w = tape.param(w);
        let u = tape.param(u);
        let b = tape.param(b);
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(h, u)?;
        let s = tape.add(xw, hu)?;
        tape.add(s, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(input: usize, hidden: usize) -> (ParamStore, GruCell) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = GruCell::new(&mut store, "g", GruCellParams { input, hidden }, 0.0001, &mut rng);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        (store, cell)
    }

    #[test]
    fn zero_params_zero_state() {
        let (store, cell) = zero_cell(3, 2);
        let mut t = Tape::with_params(&store);
        let x = t.leaf(&Tensor::row(vec![1.0, -2.0, 0.5]));
        let h = t.leaf(&Tensor::row(vec![0.0, 0.0]));
        let out = cell.step(&mut t, x, h).unwrap();
        assert_eq!(t.value(out), &[0.0, 0.0]);
    }

    #[test]
    fn zero_params_halves_state() {
        let (store, cell) = zero_cell(3, 2);
        let mut t = Tape::with_params(&store);
        let x = t.leaf(&Tensor::row(vec![1.0, -2.0, 0.5]));
        let h = t.leaf(&Tensor::row(vec![0.8, -0.4]));
        let out = cell.step(&mut t, x, h).unwrap();
        assert!((t.value(out)[0] - 0.4).abs() < 1e-12);
        assert!((t.value(out)[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_input_width() {
        let (store, cell) = zero_cell(3, 2);
        let mut t = Tape::with_params(&store);
        let x = t.leaf(&Tensor::row(vec![1.0, 2.0]));
        let h = t.leaf(&Tensor::row(vec![0.0, 0.0]));
        assert!(cell.step(&mut t, x, h).is_err());
        assert!(cell.validate(&store).is_ok());
    }
}
