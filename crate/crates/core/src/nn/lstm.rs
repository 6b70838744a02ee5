use rand::Rng;

use super::{gemm, prefixed, NnError, ParamSet, Result, Tensor};

/// Gate blocks inside the fused `4·hidden` columns, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

/// Standard LSTM cell with a forget gate and no peepholes.
///
/// The four gates are fused column-wise: `w_input` is `in × 4H`,
/// `w_recurrent` is `H × 4H` and `bias` is `4H`, with gate `g` occupying
/// columns `g·H .. (g+1)·H` (see [`Gate`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_input: Tensor,
    pub w_recurrent: Tensor,
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_input: Tensor::zeros(&[input, 4 * hidden]),
            w_recurrent: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Weights uniform in ±1/√(input + hidden); forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((input + hidden) as f64).sqrt();
        let w_input = Tensor::uniform(&[input, 4 * hidden], bound, rng);
        let w_recurrent = Tensor::uniform(&[hidden, 4 * hidden], bound, rng);
        let mut bias = Tensor::zeros(&[4 * hidden]);
        let f = Gate::Forget as usize * hidden;
        bias.data_mut()[f..f + hidden].iter_mut().for_each(|b| *b = 1.0);
        Self { w_input, w_recurrent, bias }
    }

    pub fn input_size(&self) -> usize {
        self.w_input.rows()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_recurrent.rows()
    }

    /// Column range of one gate in the fused matrices.
    pub fn gate_columns(&self, gate: Gate) -> std::ops::Range<usize> {
        let h = self.hidden_size();
        gate as usize * h..(gate as usize + 1) * h
    }
}

impl ParamSet for LstmParams {
    fn names(&self) -> Vec<String> {
        ["w_input", "w_recurrent", "bias"].map(String::from).to_vec()
    }
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_input, &self.w_recurrent, &self.bias]
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_input, &mut self.w_recurrent, &mut self.bias]
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Tensor,
    /// Activated gates per step, `T × 4H`.
    gates: Tensor,
    cells: Tensor,
    cell_tanh: Tensor,
    hidden: Tensor,
    h0: Vec<f64>,
    c0: Vec<f64>,
}

impl LstmCache {
    pub fn hidden(&self) -> &Tensor {
        &self.hidden
    }

    pub fn cells(&self) -> &Tensor {
        &self.cells
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the cell over `inputs` (`T × in`). `h0` and `c0` default to zero.
pub fn lstm_forward(
    params: &LstmParams,
    inputs: &Tensor,
    h0: Option<&[f64]>,
    c0: Option<&[f64]>,
) -> Result<(Tensor, LstmCache)> {
    let hid = params.hidden_size();
    if inputs.shape().len() != 2 || inputs.cols() != params.input_size() {
        return Err(NnError::Shape(format!(
            "lstm input {:?}, expected T x {}",
            inputs.shape(),
            params.input_size()
        )));
    }
    let h0 = h0.map_or_else(|| vec![0.0; hid], <[f64]>::to_vec);
    let c0 = c0.map_or_else(|| vec![0.0; hid], <[f64]>::to_vec);
    if h0.len() != hid || c0.len() != hid {
        return Err(NnError::Shape("lstm initial state length".into()));
    }
    let steps = inputs.rows();
    let mut gates = Tensor::zeros(&[steps, 4 * hid]);
    gemm(1.0, inputs, false, &params.w_input, false, 0.0, &mut gates)?;
    let mut cells = Tensor::zeros(&[steps, hid]);
    let mut cell_tanh = Tensor::zeros(&[steps, hid]);
    let mut hidden = Tensor::zeros(&[steps, hid]);
    let bias = params.bias.data();
    let recurrent = params.w_recurrent.data();

    let mut h_prev = h0.clone();
    let mut c_prev = c0.clone();
    for t in 0..steps {
        let z = gates.row_mut(t);
        z.iter_mut().zip(bias).for_each(|(z, b)| *z += b);
        for (k, &hk) in h_prev.iter().enumerate() {
            if hk != 0.0 {
                let u = &recurrent[k * 4 * hid..(k + 1) * 4 * hid];
                z.iter_mut().zip(u).for_each(|(z, u)| *z += hk * u);
            }
        }
        let (zi, rest) = z.split_at_mut(hid);
        let (zf, rest) = rest.split_at_mut(hid);
        let (zg, zo) = rest.split_at_mut(hid);
        let c = cells.row_mut(t);
        let tc = cell_tanh.row_mut(t);
        let h = hidden.row_mut(t);
        for j in 0..hid {
            let i = sigmoid(zi[j]);
            let f = sigmoid(zf[j]);
            let g = zg[j].tanh();
            let o = sigmoid(zo[j]);
            zi[j] = i;
            zf[j] = f;
            zg[j] = g;
            zo[j] = o;
            c[j] = f * c_prev[j] + i * g;
            tc[j] = c[j].tanh();
            h[j] = o * tc[j];
        }
        h_prev.copy_from_slice(h);
        c_prev.copy_from_slice(c);
    }
    hidden.check_finite("lstm hidden state")?;
    let cache = LstmCache { inputs: inputs.clone(), gates, cells, cell_tanh, hidden: hidden.clone(), h0, c0 };
    Ok((hidden, cache))
}

/// Backpropagates `grad_hidden` (`T × H`) through the whole cached sequence.
/// Parameter gradients are added to `grads`; the input gradient is returned.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    grad_hidden: &Tensor,
    grads: &mut LstmParams,
) -> Result<Tensor> {
    let hid = params.hidden_size();
    let steps = cache.hidden.rows();
    grad_hidden.expect_shape(&[steps, hid], "lstm grad_hidden")?;
    if cache.inputs.cols() != params.input_size() || cache.cells.cols() != hid {
        return Err(NnError::Shape("lstm cache does not match params".into()));
    }
    for (g, p) in grads.tensors().iter().zip(params.tensors()) {
        g.expect_shape(p.shape(), "lstm grads")?;
    }

    let recurrent = params.w_recurrent.data();
    let mut dz = Tensor::zeros(&[steps, 4 * hid]);
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    for t in (0..steps).rev() {
        let gates = cache.gates.row(t);
        let (gi, rest) = gates.split_at(hid);
        let (gf, rest) = rest.split_at(hid);
        let (gg, go) = rest.split_at(hid);
        let c_prev = if t > 0 { cache.cells.row(t - 1) } else { &cache.c0 };
        let tc = cache.cell_tanh.row(t);
        let upstream = grad_hidden.row(t);
        let dzt = dz.row_mut(t);
        for j in 0..hid {
            let dh = upstream[j] + dh_next[j];
            let d_o = dh * tc[j];
            let dc = dc_next[j] + dh * go[j] * (1.0 - tc[j] * tc[j]);
            let di = dc * gg[j];
            let dg = dc * gi[j];
            let df = dc * c_prev[j];
            dc_next[j] = dc * gf[j];
            dzt[j] = di * gi[j] * (1.0 - gi[j]);
            dzt[hid + j] = df * gf[j] * (1.0 - gf[j]);
            dzt[2 * hid + j] = dg * (1.0 - gg[j] * gg[j]);
            dzt[3 * hid + j] = d_o * go[j] * (1.0 - go[j]);
        }
        for (k, dh) in dh_next.iter_mut().enumerate() {
            let u = &recurrent[k * 4 * hid..(k + 1) * 4 * hid];
            *dh = u.iter().zip(dzt.iter()).map(|(u, d)| u * d).sum();
        }
    }

    gemm(1.0, &cache.inputs, true, &dz, false, 1.0, &mut grads.w_input)?;
    let mut h_prev = Tensor::zeros(&[steps, hid]);
    if steps > 0 {
        h_prev.row_mut(0).copy_from_slice(&cache.h0);
        h_prev.data_mut()[hid..].copy_from_slice(&cache.hidden.data()[..(steps - 1) * hid]);
    }
    gemm(1.0, &h_prev, true, &dz, false, 1.0, &mut grads.w_recurrent)?;
    let db = grads.bias.data_mut();
    for t in 0..steps {
        db.iter_mut().zip(dz.row(t)).for_each(|(b, d)| *b += d);
    }
    let mut dx = Tensor::zeros(&[steps, params.input_size()]);
    gemm(1.0, &dz, false, &params.w_input, true, 0.0, &mut dx)?;
    dx.check_finite("lstm input gradient")?;
    Ok(dx)
}

/// A forward-in-time and a backward-in-time LSTM whose outputs are
/// concatenated per step: `[forward_h(t), backward_h(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self { forward: LstmParams::zeros(input, hidden), backward: LstmParams::zeros(input, hidden) }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let forward = LstmParams::init(input, hidden, rng);
        let backward = LstmParams::init(input, hidden, rng);
        Self { forward, backward }
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size()
    }

    pub fn output_size(&self) -> usize {
        self.forward.hidden_size() + self.backward.hidden_size()
    }
}

impl ParamSet for BiLstmParams {
    fn names(&self) -> Vec<String> {
        let mut n = prefixed("fwd", self.forward.names());
        n.extend(prefixed("bwd", self.backward.names()));
        n
    }
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.forward.tensors();
        t.extend(self.backward.tensors());
        t
    }
    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.forward.tensors_mut();
        t.extend(self.backward.tensors_mut());
        t
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    forward: LstmCache,
    backward: LstmCache,
}

pub fn bilstm_forward(params: &BiLstmParams, inputs: &Tensor) -> Result<(Tensor, BiLstmCache)> {
    let (hf, forward) = lstm_forward(&params.forward, inputs, None, None)?;
    let (hb, backward) = lstm_forward(&params.backward, &inputs.reversed_rows(), None, None)?;
    Ok((bilstm_join(&hf, &hb), BiLstmCache { forward, backward }))
}

/// Joins forward hidden states with backward hidden states computed on the
/// reversed sequence, realigning the latter in time.
pub(crate) fn bilstm_join(hf: &Tensor, hb: &Tensor) -> Tensor {
    let steps = hf.rows();
    let (nf, nb) = (hf.cols(), hb.cols());
    let mut out = Tensor::zeros(&[steps, nf + nb]);
    for t in 0..steps {
        let row = out.row_mut(t);
        row[..nf].copy_from_slice(hf.row(t));
        row[nf..].copy_from_slice(hb.row(steps - 1 - t));
    }
    out
}

pub fn bilstm_backward(
    params: &BiLstmParams,
    cache: &BiLstmCache,
    grad_out: &Tensor,
    grads: &mut BiLstmParams,
) -> Result<Tensor> {
    let steps = cache.forward.hidden.rows();
    let (nf, nb) = (params.forward.hidden_size(), params.backward.hidden_size());
    grad_out.expect_shape(&[steps, nf + nb], "bilstm grad_out")?;
    let mut df = Tensor::zeros(&[steps, nf]);
    let mut db = Tensor::zeros(&[steps, nb]);
    for t in 0..steps {
        let row = grad_out.row(t);
        df.row_mut(t).copy_from_slice(&row[..nf]);
        db.row_mut(steps - 1 - t).copy_from_slice(&row[nf..]);
    }
    let mut dx = lstm_backward(&params.forward, &cache.forward, &df, &mut grads.forward)?;
    let dx_rev = lstm_backward(&params.backward, &cache.backward, &db, &mut grads.backward)?;
    dx.add_assign(&dx_rev.reversed_rows())?;
    Ok(dx)
}
