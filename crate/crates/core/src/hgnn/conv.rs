use super::params::Conv1d;
use crate::error::{Error, Result};

/// Per-filter winning window start, or `None` when the ReLU floor won.
#[derive(Debug, Clone)]
pub(crate) struct ConvTrace {
    argmax: Vec<Option<usize>>,
}

pub(crate) fn conv_run(p: &Conv1d, seq: &[f64]) -> (Vec<f64>, ConvTrace) {
    let positions = seq.len() + 1 - p.kernel;
    let mut out = Vec::with_capacity(p.filters);
    let mut argmax = Vec::with_capacity(p.filters);
    for (w, b) in p.weight.chunks_exact(p.kernel).zip(&p.bias) {
        let mut best = f64::NEG_INFINITY;
        let mut at = 0;
        for k in 0..positions {
            let pre = b + w
                .iter()
                .zip(&seq[k..k + p.kernel])
                .map(|(a, x)| a * x)
                .sum::<f64>();
            if pre > best {
                best = pre;
                at = k;
            }
        }
        if best > 0.0 {
            out.push(best);
            argmax.push(Some(at));
        } else {
            out.push(0.0);
            argmax.push(None);
        }
    }
    (out, ConvTrace { argmax })
}

/// Accumulates parameter gradients and returns `dL/dseq`.
pub(crate) fn conv_backprop(
    p: &Conv1d,
    seq: &[f64],
    trace: &ConvTrace,
    d_out: &[f64],
    grad: &mut Conv1d,
) -> Vec<f64> {
    let mut dseq = vec![0.0; seq.len()];
    for (f, (&d, at)) in d_out.iter().zip(&trace.argmax).enumerate() {
        let Some(k) = *at else { continue };
        grad.bias[f] += d;
        for j in 0..p.kernel {
            grad.weight[f * p.kernel + j] += d * seq[k + j];
            dseq[k + j] += d * p.weight[f * p.kernel + j];
        }
    }
    dseq
}

/// Valid 1-channel convolution, ReLU, then global max-pooling per filter.
/// Equal maxima resolve to the earliest window.
pub fn conv_maxpool(sequence: &[f64], params: &Conv1d) -> Result<Vec<f64>> {
    if params.kernel == 0 || sequence.len() < params.kernel {
        return Err(Error::invalid(format!(
            "sequence of length {} is shorter than the kernel ({})",
            sequence.len(),
            params.kernel
        )));
    }
    Ok(conv_run(params, sequence).0)
}
