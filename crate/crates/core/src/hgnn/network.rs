use super::conv::{conv_backprop, conv_run, ConvTrace};
use super::gmbc::{gate_backprop, gate_run, GateTrace};
use super::lstm::{bilstm_backprop, bilstm_run, scalar_sequence, BiLstmTrace};
use super::params::{HgnnParams, NUM_LAYERS};
use crate::error::{Error, Result};

/// Where a segment of a layer input comes from.
#[derive(Debug, Clone, Copy)]
enum Source {
    Hfs,
    /// Fused output of layer `k` (0-based).
    Fused(usize),
}

/// Inputs to the BiLSTM and the convolution of each layer, as concatenations.
const WIRING: [(&[Source], &[Source]); NUM_LAYERS] = [
    (&[Source::Hfs], &[Source::Hfs]),
    (&[Source::Fused(0)], &[Source::Fused(0), Source::Hfs]),
    (&[Source::Fused(0), Source::Fused(1)], &[Source::Fused(1)]),
    (&[Source::Fused(2)], &[Source::Fused(2), Source::Fused(1)]),
];

/// Activations of one layer: context features, local features, the fused
/// output and, for gated layers, the gate values.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub f_c: Vec<f64>,
    pub f_l: Vec<f64>,
    pub f_f: Vec<f64>,
    pub gate: Option<GateTrace>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    conv_in: Vec<f64>,
    bilstm: BiLstmTrace,
    conv: ConvTrace,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    caches: Vec<LayerCache>,
}

impl ForwardTrace {
    /// Predicted class index (0-based, so level = index + 1).
    pub fn predicted(&self) -> usize {
        predict(&self.probabilities)
    }
}

fn gather(sources: &[Source], hfs: &[f64], fused: &[Vec<f64>]) -> Vec<f64> {
    let mut v = Vec::new();
    for s in sources {
        match *s {
            Source::Hfs => v.extend_from_slice(hfs),
            Source::Fused(k) => v.extend_from_slice(&fused[k]),
        }
    }
    v
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Argmax with ties going to the lowest index.
pub fn predict(distribution: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in distribution.iter().enumerate() {
        if p > distribution[best] {
            best = i;
        }
    }
    best
}

/// `-ln softmax(logits)[label]`, evaluated as log-sum-exp minus the logit.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn hgnn_forward(hfs: &[f64], params: &HgnnParams) -> Result<ForwardTrace> {
    params.config.validate_input(hfs.len())?;
    if hfs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("fractal series contains a non-finite value"));
    }
    let mut fused: Vec<Vec<f64>> = Vec::with_capacity(NUM_LAYERS);
    let mut layers = Vec::with_capacity(NUM_LAYERS);
    let mut caches = Vec::with_capacity(NUM_LAYERS);
    for (layer, (bl_src, cv_src)) in params.layers.iter().zip(WIRING) {
        let bilstm_in = gather(bl_src, hfs, &fused);
        let conv_in = gather(cv_src, hfs, &fused);
        let (f_c, bilstm) = bilstm_run(&layer.bilstm, &scalar_sequence(&bilstm_in));
        let (f_l, conv) = conv_run(&layer.conv, &conv_in);
        let (f_f, gate) = match &layer.gate {
            Some(g) => {
                let (f, t) = gate_run(g, &f_c, &f_l);
                (f, Some(t))
            }
            None => ([f_c.as_slice(), f_l.as_slice()].concat(), None),
        };
        fused.push(f_f.clone());
        layers.push(LayerTrace {
            f_c,
            f_l,
            f_f,
            gate,
        });
        caches.push(LayerCache {
            conv_in,
            bilstm,
            conv,
        });
    }
    let logits = params.head.forward(&fused[NUM_LAYERS - 1]);
    let probabilities = softmax(&logits);
    Ok(ForwardTrace {
        layers,
        logits,
        probabilities,
        caches,
    })
}

fn scatter(sources: &[Source], hfs_len: usize, df: usize, grad: &[f64], d_fused: &mut [Vec<f64>]) {
    let mut offset = 0;
    for s in sources {
        match *s {
            Source::Hfs => offset += hfs_len,
            Source::Fused(k) => {
                let n = d_fused[k].len();
                debug_assert!(k == NUM_LAYERS - 1 || n == df);
                for (a, b) in d_fused[k].iter_mut().zip(&grad[offset..offset + n]) {
                    *a += b;
                }
                offset += n;
            }
        }
    }
}

/// Cross-entropy loss of one sample and its gradient w.r.t. every parameter.
pub fn loss_and_gradient(
    hfs: &[f64],
    label: usize,
    params: &HgnnParams,
) -> Result<(f64, HgnnParams)> {
    if label >= params.config.num_classes {
        return Err(Error::invalid(format!(
            "label {label} outside 0..{}",
            params.config.num_classes
        )));
    }
    let trace = hgnn_forward(hfs, params)?;
    let loss = cross_entropy(&trace.logits, label);
    let mut grad = params.zeros_like();
    let mut dlogits = trace.probabilities.clone();
    dlogits[label] -= 1.0;
    let df = params.config.fusion_dim;
    let mut d_fused: Vec<Vec<f64>> = trace
        .layers
        .iter()
        .map(|l| vec![0.0; l.f_f.len()])
        .collect();
    d_fused[NUM_LAYERS - 1] =
        params
            .head
            .backward(&trace.layers[NUM_LAYERS - 1].f_f, &dlogits, &mut grad.head);
    for k in (0..NUM_LAYERS).rev() {
        let layer = &params.layers[k];
        let lt = &trace.layers[k];
        let cache = &trace.caches[k];
        let d_ff = std::mem::take(&mut d_fused[k]);
        let (d_fc, d_fl) = match (&layer.gate, &lt.gate) {
            (Some(g), Some(gt)) => {
                let gg = grad.layers[k]
                    .gate
                    .as_mut()
                    .expect("gradient has the same shape");
                gate_backprop(g, &lt.f_c, &lt.f_l, gt, &d_ff, gg)
            }
            _ => {
                let (a, b) = d_ff.split_at(lt.f_c.len());
                (a.to_vec(), b.to_vec())
            }
        };
        let gl = &mut grad.layers[k];
        let d_conv_in = conv_backprop(
            &layer.conv,
            &cache.conv_in,
            &cache.conv,
            &d_fl,
            &mut gl.conv,
        );
        let d_bl_in: Vec<f64> =
            bilstm_backprop(&layer.bilstm, &cache.bilstm, &d_fc, &mut gl.bilstm)
                .into_iter()
                .map(|v| v[0])
                .collect();
        let (bl_src, cv_src) = WIRING[k];
        scatter(cv_src, hfs.len(), df, &d_conv_in, &mut d_fused);
        scatter(bl_src, hfs.len(), df, &d_bl_in, &mut d_fused);
    }
    Ok((loss, grad))
}
