use super::lstm::sigmoid;
use super::params::Gate;
use crate::error::{Error, Result};

/// Feature assignment weight `psi = eta (1 - (1 - lambda)^2) + (1 - eta) lambda`.
pub fn gmbc_weight(lambda: f64, eta: f64) -> f64 {
    let l1 = 1.0 - lambda;
    eta * (1.0 - l1 * l1) + (1.0 - eta) * lambda
}

/// Gate activations of one fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTrace {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub psi: Vec<f64>,
}

fn blend(fc: f64, fl: f64, psi: f64) -> f64 {
    let v = (1.0 - psi) * fc + psi * fl;
    // guard against a last-bit overshoot of the hull
    v.clamp(fc.min(fl), fc.max(fl))
}

pub(crate) fn gate_run(gate: &Gate, fc: &[f64], fl: &[f64]) -> (Vec<f64>, GateTrace) {
    let lambda: Vec<f64> = gate.context.forward(fc).into_iter().map(sigmoid).collect();
    let eta: Vec<f64> = gate.local.forward(fl).into_iter().map(sigmoid).collect();
    let psi: Vec<f64> = lambda
        .iter()
        .zip(&eta)
        .map(|(&l, &e)| gmbc_weight(l, e))
        .collect();
    let fused = fc
        .iter()
        .zip(fl)
        .zip(&psi)
        .map(|((&c, &l), &p)| blend(c, l, p))
        .collect();
    (fused, GateTrace { lambda, eta, psi })
}

/// Returns `(dL/df_c, dL/df_l)`.
pub(crate) fn gate_backprop(
    gate: &Gate,
    fc: &[f64],
    fl: &[f64],
    trace: &GateTrace,
    d_out: &[f64],
    grad: &mut Gate,
) -> (Vec<f64>, Vec<f64>) {
    let n = d_out.len();
    let mut dfc = vec![0.0; n];
    let mut dfl = vec![0.0; n];
    let mut dzc = vec![0.0; n];
    let mut dzl = vec![0.0; n];
    for j in 0..n {
        let (l, e, p) = (trace.lambda[j], trace.eta[j], trace.psi[j]);
        let d = d_out[j];
        dfc[j] = d * (1.0 - p);
        dfl[j] = d * p;
        let dpsi = d * (fl[j] - fc[j]);
        dzc[j] = dpsi * (2.0 * e * (1.0 - l) + 1.0 - e) * l * (1.0 - l);
        dzl[j] = dpsi * l * (1.0 - l) * e * (1.0 - e);
    }
    let dc = gate.context.backward(fc, &dzc, &mut grad.context);
    let dl = gate.local.backward(fl, &dzl, &mut grad.local);
    for j in 0..n {
        dfc[j] += dc[j];
        dfl[j] += dl[j];
    }
    (dfc, dfl)
}

/// Gated fusion `(1 - psi) f_c + psi f_l` with per-element gates.
pub fn gmbc_fuse(fc: &[f64], fl: &[f64], gate: &Gate) -> Result<(Vec<f64>, GateTrace)> {
    let n = gate.context.out_dim;
    if fc.len() != n
        || fl.len() != n
        || gate.context.in_dim != n
        || gate.local.in_dim != n
        || gate.local.out_dim != n
    {
        return Err(Error::invalid(format!(
            "fusion expects two vectors of length {n}, got {} and {}",
            fc.len(),
            fl.len()
        )));
    }
    Ok(gate_run(gate, fc, fl))
}
