//! Single-direction LSTM over a `(time, batch, features)` tensor with an exact
//! backward pass through time.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};

use super::params::LstmParams;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Flattens a standard-layout `(T, B, F)` view to `(T·B, F)`.
pub(crate) fn flatten(x: ArrayView3<'_, f64>) -> ArrayView2<'_, f64> {
    let (t, b, f) = x.dim();
    x.into_shape_with_order((t * b, f))
        .expect("activations are contiguous")
}

pub(crate) struct DirectionPass {
    /// `(T, B, H)`
    pub hidden: Array3<f64>,
    /// Activated gates `(T, B, 4H)`: i, f, g, o.
    gates: Array3<f64>,
    cell: Array3<f64>,
    tanh_cell: Array3<f64>,
    reverse: bool,
}

/// Runs one direction. `reverse` processes time steps last to first; outputs
/// stay indexed by original time step.
pub(crate) fn forward(p: &LstmParams, x: ArrayView3<'_, f64>, reverse: bool) -> DirectionPass {
    let (steps, batch, _) = x.dim();
    let h = p.hidden();
    let pre = flatten(x).dot(&p.w_ih.t()) + &p.bias;
    let mut gates = pre
        .into_shape_with_order((steps, batch, 4 * h))
        .expect("contiguous projection");
    let mut hidden = Array3::zeros((steps, batch, h));
    let mut cell = Array3::zeros((steps, batch, h));
    let mut tanh_cell = Array3::zeros((steps, batch, h));
    let mut h_prev = Array2::<f64>::zeros((batch, h));
    let mut c_prev = Array2::<f64>::zeros((batch, h));

    for step in 0..steps {
        let t = if reverse { steps - 1 - step } else { step };
        let recurrent = h_prev.dot(&p.w_hh.t());
        let mut g = gates.index_axis_mut(Axis(0), t);
        g += &recurrent;
        let mut c_t = cell.index_axis_mut(Axis(0), t);
        let mut tc_t = tanh_cell.index_axis_mut(Axis(0), t);
        let mut h_t = hidden.index_axis_mut(Axis(0), t);
        for b in 0..batch {
            let mut gr = g.row_mut(b);
            let gs = gr.as_slice_mut().expect("contiguous gates");
            for j in 0..h {
                let i = sigmoid(gs[j]);
                let f = sigmoid(gs[h + j]);
                let gg = gs[2 * h + j].tanh();
                let o = sigmoid(gs[3 * h + j]);
                gs[j] = i;
                gs[h + j] = f;
                gs[2 * h + j] = gg;
                gs[3 * h + j] = o;
                let c = f * c_prev[[b, j]] + i * gg;
                let tc = c.tanh();
                c_t[[b, j]] = c;
                tc_t[[b, j]] = tc;
                h_t[[b, j]] = o * tc;
            }
        }
        h_prev.assign(&h_t);
        c_prev.assign(&c_t);
    }

    DirectionPass {
        hidden,
        gates,
        cell,
        tanh_cell,
        reverse,
    }
}

/// Accumulates parameter gradients into `grads` and returns `dL/dx`.
pub(crate) fn backward(
    p: &LstmParams,
    x: ArrayView3<'_, f64>,
    pass: &DirectionPass,
    d_hidden: ArrayView3<'_, f64>,
    grads: &mut LstmParams,
) -> Array3<f64> {
    let (steps, batch, d_in) = x.dim();
    let h = p.hidden();
    let mut d_pre = Array3::<f64>::zeros((steps, batch, 4 * h));
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let mut dc_next = Array2::<f64>::zeros((batch, h));

    for step in (0..steps).rev() {
        let t = if pass.reverse { steps - 1 - step } else { step };
        let prev_t = if step == 0 {
            None
        } else if pass.reverse {
            Some(t + 1)
        } else {
            Some(t - 1)
        };
        let gates = pass.gates.index_axis(Axis(0), t);
        let tanh_c = pass.tanh_cell.index_axis(Axis(0), t);
        let dh_out = d_hidden.index_axis(Axis(0), t);
        let mut dp = d_pre.index_axis_mut(Axis(0), t);
        for b in 0..batch {
            for j in 0..h {
                let i = gates[[b, j]];
                let f = gates[[b, h + j]];
                let g = gates[[b, 2 * h + j]];
                let o = gates[[b, 3 * h + j]];
                let tc = tanh_c[[b, j]];
                let c_prev = prev_t.map_or(0.0, |pt| pass.cell[[pt, b, j]]);
                let dh = dh_out[[b, j]] + dh_next[[b, j]];
                let d_o = dh * tc;
                let dc = dc_next[[b, j]] + dh * o * (1.0 - tc * tc);
                dc_next[[b, j]] = dc * f;
                dp[[b, j]] = dc * g * i * (1.0 - i);
                dp[[b, h + j]] = dc * c_prev * f * (1.0 - f);
                dp[[b, 2 * h + j]] = dc * i * (1.0 - g * g);
                dp[[b, 3 * h + j]] = d_o * o * (1.0 - o);
            }
        }
        if let Some(pt) = prev_t {
            let h_prev = pass.hidden.index_axis(Axis(0), pt);
            grads.w_hh += &dp.t().dot(&h_prev);
        }
        dh_next = dp.dot(&p.w_hh);
    }

    let d_flat = d_pre
        .into_shape_with_order((steps * batch, 4 * h))
        .expect("contiguous gradient");
    grads.w_ih += &d_flat.t().dot(&flatten(x));
    grads.bias += &d_flat.sum_axis(Axis(0));
    d_flat
        .dot(&p.w_ih)
        .into_shape_with_order((steps, batch, d_in))
        .expect("contiguous input gradient")
}
