use super::params::{BiLstm, Lstm};
use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one time step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, stacked forget, input, candidate, output.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

fn step(p: &Lstm, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let h = p.hidden;
    let mut gates = p.bias.clone();
    for (r, z) in gates.iter_mut().enumerate() {
        let win = &p.w_in[r * p.input_dim..(r + 1) * p.input_dim];
        let wrec = &p.w_rec[r * h..(r + 1) * h];
        *z += win.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            + wrec.iter().zip(h_prev).map(|(w, v)| w * v).sum::<f64>();
    }
    for (r, z) in gates.iter_mut().enumerate() {
        *z = if (2 * h..3 * h).contains(&r) {
            z.tanh()
        } else {
            sigmoid(*z)
        };
    }
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut h_out = vec![0.0; h];
    for j in 0..h {
        let (f, i, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = i * g + f * c_prev[j];
        tanh_c[j] = c[j].tanh();
        h_out[j] = o * tanh_c[j];
    }
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        tanh_c,
        c,
        h: h_out,
    }
}

/// Backpropagates one step. `dc` holds `dL/dc_t` on entry and
/// `dL/dc_{t-1}` on exit. Returns `(dL/dx_t, dL/dh_{t-1})`.
fn step_backward(
    p: &Lstm,
    s: &StepCache,
    dh: &[f64],
    dc: &mut [f64],
    grad: &mut Lstm,
) -> (Vec<f64>, Vec<f64>) {
    let h = p.hidden;
    let mut dz = vec![0.0; 4 * h];
    for j in 0..h {
        let (f, i, g, o) = (
            s.gates[j],
            s.gates[h + j],
            s.gates[2 * h + j],
            s.gates[3 * h + j],
        );
        let d_o = dh[j] * s.tanh_c[j];
        let dcj = dc[j] + dh[j] * o * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
        dz[j] = dcj * s.c_prev[j] * f * (1.0 - f);
        dz[h + j] = dcj * g * i * (1.0 - i);
        dz[2 * h + j] = dcj * i * (1.0 - g * g);
        dz[3 * h + j] = d_o * o * (1.0 - o);
        dc[j] = dcj * f;
    }
    let mut dx = vec![0.0; p.input_dim];
    let mut dh_prev = vec![0.0; h];
    for (r, &d) in dz.iter().enumerate() {
        grad.bias[r] += d;
        let win = r * p.input_dim..(r + 1) * p.input_dim;
        for (k, (gw, w)) in grad.w_in[win.clone()]
            .iter_mut()
            .zip(&p.w_in[win])
            .enumerate()
        {
            *gw += d * s.x[k];
            dx[k] += d * w;
        }
        let wr = r * h..(r + 1) * h;
        for (k, (gw, w)) in grad.w_rec[wr.clone()]
            .iter_mut()
            .zip(&p.w_rec[wr])
            .enumerate()
        {
            *gw += d * s.h_prev[k];
            dh_prev[k] += d * w;
        }
    }
    (dx, dh_prev)
}

fn check_shapes(p: &Lstm, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
    if x.len() != p.input_dim || h_prev.len() != p.hidden || c_prev.len() != p.hidden {
        return Err(Error::invalid(format!(
            "LSTM expects input {} and state {}, got input {}, h {}, c {}",
            p.input_dim,
            p.hidden,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    Ok(())
}

/// One LSTM step, returning `(h_t, c_t)`.
pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &Lstm,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shapes(params, x, h_prev, c_prev)?;
    let s = step(params, x, h_prev, c_prev);
    Ok((s.h, s.c))
}

#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    steps: Vec<StepCache>,
}

impl LstmTrace {
    pub(crate) fn last_hidden(&self) -> &[f64] {
        &self.steps.last().expect("non-empty trace").h
    }
}

pub(crate) fn run<'a>(p: &Lstm, inputs: impl Iterator<Item = &'a [f64]>) -> LstmTrace {
    let mut h = vec![0.0; p.hidden];
    let mut c = vec![0.0; p.hidden];
    let mut steps = Vec::new();
    for x in inputs {
        let s = step(p, x, &h, &c);
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        steps.push(s);
    }
    LstmTrace { steps }
}

/// Backpropagates `dL/dh_T` through the whole run; input gradients come back
/// in processing order.
pub(crate) fn backprop(
    p: &Lstm,
    trace: &LstmTrace,
    dh_last: &[f64],
    grad: &mut Lstm,
) -> Vec<Vec<f64>> {
    let mut dh = dh_last.to_vec();
    let mut dc = vec![0.0; p.hidden];
    let mut dxs = vec![Vec::new(); trace.steps.len()];
    for (t, s) in trace.steps.iter().enumerate().rev() {
        let (dx, dh_prev) = step_backward(p, s, &dh, &mut dc, grad);
        dxs[t] = dx;
        dh = dh_prev;
    }
    dxs
}

#[derive(Debug, Clone)]
pub(crate) struct BiLstmTrace {
    forward: LstmTrace,
    backward: LstmTrace,
}

/// Final forward state followed by final backward state.
pub(crate) fn bilstm_run(p: &BiLstm, seq: &[Vec<f64>]) -> (Vec<f64>, BiLstmTrace) {
    let forward = run(&p.forward, seq.iter().map(Vec::as_slice));
    let backward = run(&p.backward, seq.iter().rev().map(Vec::as_slice));
    let mut out = forward.last_hidden().to_vec();
    out.extend_from_slice(backward.last_hidden());
    (out, BiLstmTrace { forward, backward })
}

/// Returns input gradients in sequence order.
pub(crate) fn bilstm_backprop(
    p: &BiLstm,
    trace: &BiLstmTrace,
    d_out: &[f64],
    grad: &mut BiLstm,
) -> Vec<Vec<f64>> {
    let h = p.forward.hidden;
    let mut dx = backprop(&p.forward, &trace.forward, &d_out[..h], &mut grad.forward);
    let back = backprop(
        &p.backward,
        &trace.backward,
        &d_out[h..],
        &mut grad.backward,
    );
    for (d, b) in dx.iter_mut().zip(back.iter().rev()) {
        for (x, y) in d.iter_mut().zip(b) {
            *x += y;
        }
    }
    dx
}

/// Encodes a sequence of input vectors into `[h_forward_T, h_backward_1]`.
pub fn bilstm_encode(sequence: &[Vec<f64>], params: &BiLstm) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(Error::invalid("cannot encode an empty sequence"));
    }
    let zeros = vec![0.0; params.forward.hidden];
    for x in sequence {
        check_shapes(&params.forward, x, &zeros, &zeros)?;
        check_shapes(&params.backward, x, &zeros, &zeros)?;
    }
    Ok(bilstm_run(params, sequence).0)
}

pub(crate) fn scalar_sequence(values: &[f64]) -> Vec<Vec<f64>> {
    values.iter().map(|v| vec![*v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::seeded_rng;

    fn random_lstm(input: usize, hidden: usize, seed: u64) -> Lstm {
        Lstm::init(input, hidden, &mut seeded_rng(seed))
    }

    #[test]
    fn zero_parameters_give_zero_state() {
        let p = Lstm::zeros(3, 4);
        let (h, c) = lstm_cell_step(&[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4], &p).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn pure_memory_gate() {
        let mut p = Lstm::zeros(1, 2);
        // forget bias -> +inf (f = 1), input bias -> -inf (i = 0)
        for j in 0..2 {
            p.bias[j] = 1e3;
            p.bias[2 + j] = -1e3;
        }
        let c_prev = [0.7, -1.3];
        let (_, c) = lstm_cell_step(&[5.0], &[0.2, 0.1], &c_prev, &p).unwrap();
        assert_eq!(c, c_prev.to_vec());
    }

    #[test]
    fn shape_mismatch() {
        let p = Lstm::zeros(2, 3);
        assert!(lstm_cell_step(&[1.0], &[0.0; 3], &[0.0; 3], &p).is_err());
        assert!(lstm_cell_step(&[1.0, 1.0], &[0.0; 2], &[0.0; 3], &p).is_err());
        let bi = BiLstm {
            forward: p.clone(),
            backward: p,
        };
        assert!(bilstm_encode(&[], &bi).is_err());
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
    }

    /// Loss `sum_j w_j h_j` after one step, for finite differences.
    #[test]
    fn cell_gradients_match_finite_differences() {
        let p = random_lstm(3, 4, 1);
        let x = [0.3, -0.8, 1.1];
        let h0 = [0.1, -0.2, 0.05, 0.4];
        let c0 = [0.5, -0.1, 0.3, -0.6];
        let w = [0.7, -1.2, 0.4, 0.9];
        let loss = |p: &Lstm| -> f64 {
            let (h, _) = lstm_cell_step(&x, &h0, &c0, p).unwrap();
            h.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let mut grad = Lstm::zeros(3, 4);
        let s = step(&p, &x, &h0, &c0);
        let mut dc = vec![0.0; 4];
        step_backward(&p, &s, &w, &mut dc, &mut grad);
        let eps = 1e-5;
        let check = |get: &dyn Fn(&mut Lstm) -> &mut Vec<f64>, analytic: &Vec<f64>| {
            for (i, &a) in analytic.iter().enumerate() {
                let mut plus = p.clone();
                get(&mut plus)[i] += eps;
                let mut minus = p.clone();
                get(&mut minus)[i] -= eps;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                assert!(rel_err(a, fd) < 1e-4, "index {i}: {a} vs {fd}");
            }
        };
        check(&|l| &mut l.w_in, &grad.w_in);
        check(&|l| &mut l.w_rec, &grad.w_rec);
        check(&|l| &mut l.bias, &grad.bias);
    }

    fn tied(seed: u64, hidden: usize) -> BiLstm {
        let l = random_lstm(1, hidden, seed);
        BiLstm {
            forward: l.clone(),
            backward: l,
        }
    }

    #[test]
    fn single_step_sequence() {
        let bi = BiLstm {
            forward: random_lstm(1, 3, 4),
            backward: random_lstm(1, 3, 5),
        };
        let out = bilstm_encode(&[vec![0.6]], &bi).unwrap();
        let (hf, _) = lstm_cell_step(&[0.6], &[0.0; 3], &[0.0; 3], &bi.forward).unwrap();
        let (hb, _) = lstm_cell_step(&[0.6], &[0.0; 3], &[0.0; 3], &bi.backward).unwrap();
        assert_eq!(out, [hf, hb].concat());
    }

    #[test]
    fn reversal_swaps_halves_with_tied_weights() {
        let bi = tied(9, 5);
        let seq = scalar_sequence(&[0.3, -1.0, 0.8, 2.0, -0.4, 0.1]);
        let mut rev = seq.clone();
        rev.reverse();
        let a = bilstm_encode(&seq, &bi).unwrap();
        let b = bilstm_encode(&rev, &bi).unwrap();
        assert_eq!(a[..5], b[5..]);
        assert_eq!(a[5..], b[..5]);
    }

    #[test]
    fn bilstm_gradients_match_finite_differences() {
        let bi = BiLstm {
            forward: random_lstm(1, 3, 21),
            backward: random_lstm(1, 3, 22),
        };
        let seq = scalar_sequence(&[0.5, -0.3, 1.2, 0.05, -0.9]);
        let w: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
        let loss = |bi: &BiLstm, seq: &[Vec<f64>]| -> f64 {
            bilstm_encode(seq, bi)
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(a, b)| a * b)
                .sum()
        };
        let (_, trace) = bilstm_run(&bi, &seq);
        let mut grad = BiLstm {
            forward: Lstm::zeros(1, 3),
            backward: Lstm::zeros(1, 3),
        };
        let dx = bilstm_backprop(&bi, &trace, &w, &mut grad);
        let eps = 1e-5;
        for i in 0..grad.backward.w_rec.len() {
            let mut plus = bi.clone();
            plus.backward.w_rec[i] += eps;
            let mut minus = bi.clone();
            minus.backward.w_rec[i] -= eps;
            let fd = (loss(&plus, &seq) - loss(&minus, &seq)) / (2.0 * eps);
            assert!(rel_err(grad.backward.w_rec[i], fd) < 1e-4);
        }
        for i in 0..grad.forward.w_in.len() {
            let mut plus = bi.clone();
            plus.forward.w_in[i] += eps;
            let mut minus = bi.clone();
            minus.forward.w_in[i] -= eps;
            let fd = (loss(&plus, &seq) - loss(&minus, &seq)) / (2.0 * eps);
            assert!(rel_err(grad.forward.w_in[i], fd) < 1e-4);
        }
        for t in 0..seq.len() {
            let mut plus = seq.clone();
            plus[t][0] += eps;
            let mut minus = seq.clone();
            minus[t][0] -= eps;
            let fd = (loss(&bi, &plus) - loss(&bi, &minus)) / (2.0 * eps);
            assert!(rel_err(dx[t][0], fd) < 1e-4);
        }
    }
}
