use super::loss::sigmoid;
use super::Tensor;
use crate::error::{Error, Result};

/// Borrowed weights of one LSTM direction. Gate blocks are laid out as
/// `[input, forget, cell, output]` along the `4h` axis.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    /// `[d x 4h]`
    pub w_ih: &'a Tensor,
    /// `[h x 4h]`
    pub w_hh: &'a Tensor,
    /// `[4h]`
    pub b: &'a Tensor,
}

impl LstmWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.w_hh.rows()
    }

    fn check(&self, d: usize) -> Result<usize> {
        let h = self.hidden();
        if self.w_ih.rows() != d
            || self.w_ih.cols() != 4 * h
            || self.w_hh.cols() != 4 * h
            || self.b.len() != 4 * h
        {
            return Err(Error::shape(
                "lstm",
                format!(
                    "input width {d}, W_ih {:?}, W_hh {:?}, b {:?}",
                    self.w_ih.shape(),
                    self.w_hh.shape(),
                    self.b.shape()
                ),
            ));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b: Tensor,
}

/// Per-step activations kept for the backward pass, in processing order.
#[derive(Debug, Clone)]
pub struct LstmCache {
    hidden: usize,
    /// Row index into the input for each step.
    order: Vec<usize>,
    /// `[i, f, g, o]` post-activation, `4h` per step.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hiddens: Vec<f64>,
}

fn gemv_acc(out: &mut [f64], v: &[f64], m: &Tensor) {
    let k = m.cols();
    let data = m.data();
    for (j, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(&data[j * k..(j + 1) * k]) {
            *o += x * w;
        }
    }
}

/// One LSTM direction over all rows of `x: [n x d]`, zero initial state.
/// Returns `[n x h]` hidden states indexed by input position.
pub fn lstm_forward(x: &Tensor, weights: LstmWeights<'_>, reverse: bool) -> Result<(Tensor, LstmCache)> {
    let (n, d) = (x.rows(), x.cols());
    let h = weights.check(d)?;
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    let mut gates = vec![0.0; n * 4 * h];
    let mut cells = vec![0.0; n * h];
    let mut tanh_cells = vec![0.0; n * h];
    let mut hiddens = vec![0.0; n * h];
    let mut out = vec![0.0; n * h];
    let mut a = vec![0.0; 4 * h];
    for (step, &pos) in order.iter().enumerate() {
        a.copy_from_slice(weights.b.data());
        gemv_acc(&mut a, x.row(pos), weights.w_ih);
        if step > 0 {
            let prev = &hiddens[(step - 1) * h..step * h];
            gemv_acc(&mut a, prev, weights.w_hh);
        }
        let g = &mut gates[step * 4 * h..(step + 1) * 4 * h];
        for j in 0..h {
            g[j] = sigmoid(a[j]);
            g[h + j] = sigmoid(a[h + j]);
            g[2 * h + j] = a[2 * h + j].tanh();
            g[3 * h + j] = sigmoid(a[3 * h + j]);
        }
        for j in 0..h {
            let c_prev = if step > 0 { cells[(step - 1) * h + j] } else { 0.0 };
            let c = g[h + j] * c_prev + g[j] * g[2 * h + j];
            let tc = c.tanh();
            cells[step * h + j] = c;
            tanh_cells[step * h + j] = tc;
            let hv = g[3 * h + j] * tc;
            hiddens[step * h + j] = hv;
            out[pos * h + j] = hv;
        }
    }
    let out = Tensor::matrix(n, h, out)?;
    out.ensure_finite("lstm_forward output")?;
    Ok((
        out,
        LstmCache {
            hidden: h,
            order,
            gates,
            cells,
            tanh_cells,
            hiddens,
        },
    ))
}

/// Backward pass of [`lstm_forward`]; `dout: [n x h]` indexed by input
/// position. Returns `dx: [n x d]` and weight gradients.
pub fn lstm_backward(
    x: &Tensor,
    weights: LstmWeights<'_>,
    cache: &LstmCache,
    dout: &Tensor,
) -> Result<(Tensor, LstmGrads)> {
    let (n, d) = (x.rows(), x.cols());
    let h = cache.hidden;
    if dout.rows() != n || dout.cols() != h || cache.order.len() != n {
        return Err(Error::shape(
            "lstm_backward",
            format!("x {:?}, dout {:?}, cached steps {}", x.shape(), dout.shape(), cache.order.len()),
        ));
    }
    let mut dw_ih = vec![0.0; d * 4 * h];
    let mut dw_hh = vec![0.0; h * 4 * h];
    let mut db = vec![0.0; 4 * h];
    let mut dx = vec![0.0; n * d];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    let w_ih = weights.w_ih.data();
    let w_hh = weights.w_hh.data();
    for step in (0..n).rev() {
        let pos = cache.order[step];
        let g = &cache.gates[step * 4 * h..(step + 1) * 4 * h];
        let tc = &cache.tanh_cells[step * h..(step + 1) * h];
        for j in 0..h {
            let dh = dout.get(pos, j) + dh_next[j];
            let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let c_prev = if step > 0 { cache.cells[(step - 1) * h + j] } else { 0.0 };
            let d_o = dh * tc[j];
            let dc = dc_next[j] + dh * o_g * (1.0 - tc[j] * tc[j]);
            let d_i = dc * c_g;
            let d_c = dc * i_g;
            let d_f = dc * c_prev;
            dc_next[j] = dc * f_g;
            da[j] = d_i * i_g * (1.0 - i_g);
            da[h + j] = d_f * f_g * (1.0 - f_g);
            da[2 * h + j] = d_c * (1.0 - c_g * c_g);
            da[3 * h + j] = d_o * o_g * (1.0 - o_g);
        }
        for (b, a) in db.iter_mut().zip(&da) {
            *b += a;
        }
        let xr = x.row(pos);
        for r in 0..d {
            let wrow = &w_ih[r * 4 * h..(r + 1) * 4 * h];
            dx[pos * d + r] = wrow.iter().zip(&da).map(|(w, a)| w * a).sum();
            let xv = xr[r];
            if xv != 0.0 {
                for (gw, a) in dw_ih[r * 4 * h..(r + 1) * 4 * h].iter_mut().zip(&da) {
                    *gw += xv * a;
                }
            }
        }
        if step > 0 {
            let h_prev = &cache.hiddens[(step - 1) * h..step * h];
            for r in 0..h {
                let wrow = &w_hh[r * 4 * h..(r + 1) * 4 * h];
                dh_next[r] = wrow.iter().zip(&da).map(|(w, a)| w * a).sum();
                let hv = h_prev[r];
                if hv != 0.0 {
                    for (gw, a) in dw_hh[r * 4 * h..(r + 1) * 4 * h].iter_mut().zip(&da) {
                        *gw += hv * a;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::matrix(n, d, dx)?,
        LstmGrads {
            w_ih: Tensor::matrix(d, 4 * h, dw_ih)?,
            w_hh: Tensor::matrix(h, 4 * h, dw_hh)?,
            b: Tensor::vector(db),
        },
    ))
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    forward: LstmCache,
    backward: LstmCache,
}

/// Left-to-right and right-to-left passes concatenated per token:
/// `[n x d] -> [n x 2h]`.
pub fn bilstm_forward(
    x: &Tensor,
    fwd: LstmWeights<'_>,
    bwd: LstmWeights<'_>,
) -> Result<(Tensor, BiLstmCache)> {
    if x.rows() == 0 {
        return Err(Error::shape("bilstm_forward", "empty sequence"));
    }
    let (hf, cf) = lstm_forward(x, fwd, false)?;
    let (hb, cb) = lstm_forward(x, bwd, true)?;
    let out = super::hconcat(&[&hf, &hb])?;
    Ok((
        out,
        BiLstmCache {
            forward: cf,
            backward: cb,
        },
    ))
}

/// Returns `dx` plus gradients for the forward and backward directions.
pub fn bilstm_backward(
    x: &Tensor,
    fwd: LstmWeights<'_>,
    bwd: LstmWeights<'_>,
    cache: &BiLstmCache,
    dout: &Tensor,
) -> Result<(Tensor, LstmGrads, LstmGrads)> {
    let parts = super::hsplit(dout, &[fwd.hidden(), bwd.hidden()])?;
    let (mut dx, gf) = lstm_backward(x, fwd, &cache.forward, &parts[0])?;
    let (dxb, gb) = lstm_backward(x, bwd, &cache.backward, &parts[1])?;
    dx.add_assign(&dxb)?;
    Ok((dx, gf, gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_constant_outputs() {
        // i = f = o = 0.5, g = 0, so c stays 0 and h = 0.5 * tanh(0) = 0.
        let d = 3;
        let h = 2;
        let w_ih = Tensor::zeros(&[d, 4 * h]);
        let w_hh = Tensor::zeros(&[h, 4 * h]);
        let b = Tensor::zeros(&[4 * h]);
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, b: &b };
        let x = Tensor::matrix(3, d, vec![1.0, -2.0, 0.3, 4.0, 0.0, 1.0, -1.0, 2.0, 5.0]).unwrap();
        let (out, _) = bilstm_forward(&x, w, w).unwrap();
        assert_eq!(out.shape(), &[3, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_weights_with_cell_bias_is_token_independent() {
        // With W_ih = W_hh = 0 every step sees the same pre-activation, so
        // outputs depend only on position, not on the input values.
        let (d, h) = (2, 1);
        let w_ih = Tensor::zeros(&[d, 4]);
        let w_hh = Tensor::zeros(&[h, 4]);
        let b = Tensor::vector(vec![0.0, 0.0, 1.0, 0.0]);
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, b: &b };
        let x1 = Tensor::matrix(2, d, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x2 = Tensor::matrix(2, d, vec![-7.0, 0.5, 9.0, 0.0]).unwrap();
        let (o1, _) = lstm_forward(&x1, w, false).unwrap();
        let (o2, _) = lstm_forward(&x2, w, false).unwrap();
        assert_eq!(o1, o2);
        let g = 1.0f64.tanh();
        let c1 = 0.5 * g;
        assert!((o1.get(0, 0) - 0.5 * c1.tanh()).abs() < 1e-15);
        let c2 = 0.5 * c1 + 0.5 * g;
        assert!((o1.get(1, 0) - 0.5 * c2.tanh()).abs() < 1e-15);
    }

    #[test]
    fn single_token_sees_same_input_both_ways() {
        let (d, h) = (2, 2);
        let mk = |s: f64| Tensor::from_vec(vec![d, 4 * h], (0..d * 4 * h).map(|i| s * i as f64 * 0.01).collect()).unwrap();
        let w_ih = mk(1.0);
        let w_hh = Tensor::zeros(&[h, 4 * h]);
        let b = Tensor::zeros(&[4 * h]);
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, b: &b };
        let x = Tensor::matrix(1, d, vec![0.7, -0.2]).unwrap();
        let (out, _) = bilstm_forward(&x, w, w).unwrap();
        assert_eq!(out.shape(), &[1, 2 * h]);
        assert_eq!(&out.data()[..h], &out.data()[h..]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let w_ih = Tensor::zeros(&[2, 4]);
        let w_hh = Tensor::zeros(&[1, 4]);
        let b = Tensor::zeros(&[4]);
        let w = LstmWeights { w_ih: &w_ih, w_hh: &w_hh, b: &b };
        assert!(bilstm_forward(&Tensor::zeros(&[0, 2]), w, w).is_err());
    }
}
