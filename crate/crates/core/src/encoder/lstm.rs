use crate::numerics::{NumericsError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::{self, Rng};

/// Standard LSTM cell. Gate blocks within the `4H` axis are ordered
/// input, forget, cell candidate, output:
///
/// ```text
/// z = x·W + h·U + b
/// i = σ(z[0..H])   f = σ(z[H..2H])   g = tanh(z[2H..3H])   o = σ(z[3H..4H])
/// c' = f⊙c + i⊙g   h' = o⊙tanh(c')
/// ```
///
/// `h` and `c` start at zero for every sequence.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Glorot-uniform `rows × cols` matrix.
pub(crate) fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng::uniform(rng, -limit, limit)).collect();
    Tensor::matrix(rows, cols, data).expect("positive dims")
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let w = store.add(&format!("{prefix}.W"), glorot(rng, input, 4 * hidden));
        let u = store.add(&format!("{prefix}.U"), glorot(rng, hidden, 4 * hidden));
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let b = store.add(&format!("{prefix}.b"), Tensor::vector(bias).expect("non-empty"));
        LstmCell { w, u, b, input, hidden }
    }

    /// Trainable scalars of one direction: `4·(in·H + H·H + H)`.
    pub fn param_count(input: usize, hidden: usize) -> usize {
        4 * (input * hidden + hidden * hidden + hidden)
    }

    pub fn param_ids(&self) -> [ParamId; 3] {
        [self.w, self.u, self.b]
    }

    /// Runs the cell over the rows of `xs` (`n × input`), front to back or
    /// back to front. Returns the `1 × H` hidden state at each position, in
    /// position order regardless of direction.
    pub fn run(&self, tape: &mut Tape, xs: Var, reverse: bool) -> Result<Vec<Var>, NumericsError> {
        let n = tape.value(xs).rows();
        let h_dim = self.hidden;
        let w = tape.param(self.w);
        let u = tape.param(self.u);
        let b = tape.param(self.b);
        let xw = tape.matmul(xs, w)?;
        let proj = tape.add_row(xw, b)?;

        let mut states: Vec<Option<Var>> = vec![None; n];
        let mut h: Option<Var> = None;
        let mut c: Option<Var> = None;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..n).rev())
        } else {
            Box::new(0..n)
        };
        for t in order {
            let mut z = tape.slice(proj, 0, t, 1)?;
            if let Some(h_prev) = h {
                let hu = tape.matmul(h_prev, u)?;
                z = tape.add(z, hu)?;
            }
            let sig = tape.sigmoid(z);
            let i = tape.slice(sig, 1, 0, h_dim)?;
            let f = tape.slice(sig, 1, h_dim, h_dim)?;
            let o = tape.slice(sig, 1, 3 * h_dim, h_dim)?;
            let g_pre = tape.slice(z, 1, 2 * h_dim, h_dim)?;
            let g = tape.tanh(g_pre);
            let ig = tape.mul(i, g)?;
            let c_new = match c {
                Some(c_prev) => {
                    let fc = tape.mul(f, c_prev)?;
                    tape.add(fc, ig)?
                }
                None => ig,
            };
            let tc = tape.tanh(c_new);
            let h_new = tape.mul(o, tc)?;
            states[t] = Some(h_new);
            h = Some(h_new);
            c = Some(c_new);
        }
        Ok(states.into_iter().map(|s| s.expect("every position visited")).collect())
    }
}

/// Forward and backward cells over the same sequence.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

/// Per-position outputs and final states of a [`BiLstm`] run.
pub struct BiLstmOutput {
    /// `n × 2H`; columns `[0, H)` forward, `[H, 2H)` backward.
    pub states: Var,
    /// `1 × 2H`: forward state after the last position joined with the
    /// backward state after the first position.
    pub last: Var,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let fwd = LstmCell::new(store, &format!("{prefix}.fwd"), input, hidden, rng);
        let bwd = LstmCell::new(store, &format!("{prefix}.bwd"), input, hidden, rng);
        BiLstm { fwd, bwd }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        2 * LstmCell::param_count(input, hidden)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.fwd.param_ids().into_iter().chain(self.bwd.param_ids()).collect()
    }

    pub fn run(&self, tape: &mut Tape, xs: Var) -> Result<BiLstmOutput, NumericsError> {
        let f = self.fwd.run(tape, xs, false)?;
        let b = self.bwd.run(tape, xs, true)?;
        let last = tape.concat(&[*f.last().expect("non-empty"), b[0]], 1)?;
        let fs = tape.concat(&f, 0)?;
        let bs = tape.concat(&b, 0)?;
        let states = tape.concat(&[fs, bs], 1)?;
        Ok(BiLstmOutput { states, last })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sigmoid_scalar, Precision};

    #[test]
    fn param_count_closed_form() {
        assert_eq!(LstmCell::param_count(10, 5), 320);
        let mut store = ParamStore::new(Precision::F64);
        let mut rng = rng::seeded(0);
        LstmCell::new(&mut store, "c", 10, 5, &mut rng);
        assert_eq!(store.num_scalars(), 320);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut store = ParamStore::new(Precision::F64);
        let cell = LstmCell::new(&mut store, "c", 3, 2, &mut rng::seeded(0));
        assert_eq!(store.value(cell.b).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // scalar cell, input 1, hidden 1
        let mut store = ParamStore::new(Precision::F64);
        let cell = LstmCell::new(&mut store, "c", 1, 1, &mut rng::seeded(0));
        store
            .set_value(cell.w, Tensor::matrix(1, 4, vec![0.5, -0.3, 0.8, 0.2]).unwrap())
            .unwrap();
        store
            .set_value(cell.b, Tensor::vector(vec![0.1, 1.0, -0.2, 0.05]).unwrap())
            .unwrap();
        let x = 0.7;
        let i = sigmoid_scalar(0.5 * x + 0.1);
        let g = (0.8 * x - 0.2f64).tanh();
        let o = sigmoid_scalar(0.2 * x + 0.05);
        let expected = o * (i * g).tanh();

        let mut tape = Tape::new(&store);
        let xs = tape.constant(Tensor::matrix(1, 1, vec![x]).unwrap());
        let hs = cell.run(&mut tape, xs, false).unwrap();
        assert!((tape.value(hs[0]).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn directions_align_by_position() {
        let mut store = ParamStore::new(Precision::F64);
        let bi = BiLstm::new(&mut store, "bi", 2, 3, &mut rng::seeded(4));
        let mut tape = Tape::new(&store);
        let xs = tape.constant(Tensor::matrix(4, 2, (0..8).map(|v| v as f64 * 0.1).collect()).unwrap());
        let out = bi.run(&mut tape, xs).unwrap();
        let states = tape.value(out.states).clone();
        assert_eq!(states.shape(), &[4, 6]);
        let last = tape.value(out.last).clone();
        assert_eq!(&last.data()[..3], &states.row(3)[..3]);
        assert_eq!(&last.data()[3..], &states.row(0)[3..]);
    }
}
