use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Architecture, NetworkConfig};
use crate::error::{Error, Result};
use crate::loss::{bce_logit_grad, bce_loss, sigmoid_scalar, PredictionBatch};
use crate::nn::{
    dropout, fully_connected_backward, fully_connected_forward, lstm_backward, lstm_forward,
    max_pool_backward, max_pool_forward, temporal_conv_backward, temporal_conv_forward, Activation,
    ConvParams, DenseParams, DropoutMask, LstmParams, LstmTrace, Mode, Pooled,
};
use crate::rng::{stream, RngState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
struct Branch {
    channels: Vec<usize>,
    convs: Vec<ConvParams>,
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    /// One FC per branch, then a merge FC over the concatenated branch outputs.
    Dense {
        branch_fc: Vec<DenseParams>,
        merge: DenseParams,
    },
    /// Two stacked LSTMs over the flattened per-step feature maps.
    Recurrent { lower: LstmParams, upper: LstmParams },
}

/// An attribute-predicting network: convolutional branches, a dense or
/// recurrent body, and a sigmoid head over `n` attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    seed: u64,
    branches: Vec<Branch>,
    body: Body,
    head: DenseParams,
}

/// Parameter gradients, in [`Network::parameters`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients(net.parameters().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect())
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.0 {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

struct ConvTrace {
    input: Tensor,
    output: Tensor,
    pool: Option<Pooled>,
}

struct BranchTrace {
    convs: Vec<ConvTrace>,
    out_shape: Vec<usize>,
}

enum BodyTrace {
    Dense {
        fc_inputs: Vec<Tensor>,
        fc_masks: Vec<DropoutMask>,
        fc_outputs: Vec<Tensor>,
        merge_input: Tensor,
        merge_mask: DropoutMask,
        merge_output: Tensor,
    },
    Recurrent {
        seq_mask: DropoutMask,
        lower: LstmTrace,
        upper: LstmTrace,
        steps: usize,
    },
}

/// Everything a backward pass needs from one sample's forward pass.
pub struct Trace {
    branches: Vec<BranchTrace>,
    body: BodyTrace,
    head_input: Tensor,
    head_mask: Option<DropoutMask>,
    scores: Vec<f64>,
}

impl Trace {
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

#[derive(Serialize, Deserialize)]
struct NamedParam {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    seed: u64,
    config: NetworkConfig,
    parameters: Vec<NamedParam>,
}

pub const CHECKPOINT_FORMAT: &str = "attrhar-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Samples per gradient-accumulation chunk; fixed so the reduction order
/// does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

pub fn build_attr_cnn(cfg: &NetworkConfig, seed: u64) -> Result<Network> {
    expect_arch(cfg, Architecture::AttrCnn)?;
    Network::build(cfg, seed)
}

pub fn build_attr_deepconvlstm(cfg: &NetworkConfig, seed: u64) -> Result<Network> {
    expect_arch(cfg, Architecture::AttrDeepConvLstm)?;
    Network::build(cfg, seed)
}

pub fn build_attr_cnn_imu(cfg: &NetworkConfig, seed: u64) -> Result<Network> {
    expect_arch(cfg, Architecture::AttrCnnImu)?;
    Network::build(cfg, seed)
}

fn expect_arch(cfg: &NetworkConfig, arch: Architecture) -> Result<()> {
    if cfg.architecture != arch {
        return Err(Error::Config(format!(
            "builder for {} got a {} config",
            arch.as_str(),
            cfg.architecture.as_str()
        )));
    }
    Ok(())
}

impl Network {
    /// Builds the network named by `cfg.architecture`, initialized from `seed`.
    pub fn build(cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = RngState::with_stream(seed, stream::INIT);
        let t_out = cfg.output_time_len()?;
        let c = cfg.conv_filters;
        let h = cfg.hidden_units;

        let branches: Vec<Branch> = cfg
            .branch_channels()
            .into_iter()
            .map(|channels| {
                let convs = (0..cfg.conv_layers)
                    .map(|l| ConvParams::init(cfg.filter_size, if l == 0 { 1 } else { c }, c, &mut rng))
                    .collect();
                Branch { channels, convs }
            })
            .collect();

        let (body, head_inputs) = match cfg.architecture {
            Architecture::AttrDeepConvLstm => {
                let width = cfg.channels * c;
                let lower = LstmParams::init(width, h, &mut rng);
                let upper = LstmParams::init(h, h, &mut rng);
                (Body::Recurrent { lower, upper }, h)
            }
            _ => {
                let branch_fc = branches
                    .iter()
                    .map(|b| DenseParams::init(t_out * b.channels.len() * c, h, &mut rng))
                    .collect::<Vec<_>>();
                let merge = DenseParams::init(h * branches.len(), h, &mut rng);
                (Body::Dense { branch_fc, merge }, h)
            }
        };
        let head = DenseParams::init(head_inputs, cfg.attributes, &mut rng);
        Ok(Self {
            config: cfg.clone(),
            seed,
            branches,
            body,
            head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn attributes(&self) -> usize {
        self.config.attributes
    }

    /// Named parameter tensors in a fixed order.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (b, branch) in self.branches.iter().enumerate() {
            for (l, conv) in branch.convs.iter().enumerate() {
                out.push((format!("branch{b}.conv{}.weights", l + 1), &conv.weights));
                out.push((format!("branch{b}.conv{}.bias", l + 1), &conv.bias));
            }
        }
        match &self.body {
            Body::Dense { branch_fc, merge } => {
                for (b, fc) in branch_fc.iter().enumerate() {
                    out.push((format!("branch{b}.fc.weights"), &fc.weights));
                    out.push((format!("branch{b}.fc.bias"), &fc.bias));
                }
                out.push(("merge.weights".into(), &merge.weights));
                out.push(("merge.bias".into(), &merge.bias));
            }
            Body::Recurrent { lower, upper } => {
                for (name, p) in [("lstm1", lower), ("lstm2", upper)] {
                    out.push((format!("{name}.input_weights"), &p.input_weights));
                    out.push((format!("{name}.recurrent_weights"), &p.recurrent_weights));
                    out.push((format!("{name}.bias"), &p.bias));
                }
            }
        }
        out.push(("head.weights".into(), &self.head.weights));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Mutable parameters, same order as [`Network::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for branch in &mut self.branches {
            for conv in &mut branch.convs {
                out.push(&mut conv.weights);
                out.push(&mut conv.bias);
            }
        }
        match &mut self.body {
            Body::Dense { branch_fc, merge } => {
                for fc in branch_fc {
                    out.push(&mut fc.weights);
                    out.push(&mut fc.bias);
                }
                out.push(&mut merge.weights);
                out.push(&mut merge.bias);
            }
            Body::Recurrent { lower, upper } => {
                for p in [lower, upper] {
                    out.push(&mut p.input_weights);
                    out.push(&mut p.recurrent_weights);
                    out.push(&mut p.bias);
                }
            }
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Digest over all parameter bits.
    pub fn parameter_digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.parameters() {
            h.update(name.as_bytes());
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    fn check_sample(&self, x: &Tensor) -> Result<()> {
        x.expect_shape(&[self.config.window, self.config.channels], "network input")?;
        x.ensure_finite("network input")
    }

    /// Forward pass of one `[T, D]` window, keeping what backward needs.
    pub fn forward_sample(&self, x: &Tensor, mode: Mode, rng: &mut RngState) -> Result<Trace> {
        self.check_sample(x)?;
        let rate = self.config.dropout;
        let mut branch_traces = Vec::with_capacity(self.branches.len());
        let mut branch_outputs = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let (out, trace) = self.branch_forward(branch, x)?;
            branch_outputs.push(out);
            branch_traces.push(trace);
        }

        let (body_trace, head_raw) = match &self.body {
            Body::Dense { branch_fc, merge } => {
                let mut fc_inputs = Vec::new();
                let mut fc_masks = Vec::new();
                let mut fc_outputs = Vec::new();
                for (fc, out) in branch_fc.iter().zip(branch_outputs) {
                    let flat = out.reshape(&[fc.inputs()])?;
                    let (dropped, mask) = dropout(&flat, rate, mode, rng)?;
                    let y = fully_connected_forward(&dropped, fc, Activation::Relu)?;
                    fc_inputs.push(dropped);
                    fc_masks.push(mask);
                    fc_outputs.push(y);
                }
                let concat = Tensor::from_vec(fc_outputs.iter().flat_map(|t| t.data().iter().copied()).collect());
                let (merge_input, merge_mask) = dropout(&concat, rate, mode, rng)?;
                let merge_output = fully_connected_forward(&merge_input, merge, Activation::Relu)?;
                let head_raw = merge_output.clone();
                (
                    BodyTrace::Dense {
                        fc_inputs,
                        fc_masks,
                        fc_outputs,
                        merge_input,
                        merge_mask,
                        merge_output,
                    },
                    head_raw,
                )
            }
            Body::Recurrent { lower, upper } => {
                let out = branch_outputs.pop().expect("single branch");
                let steps = out.shape()[0];
                let seq = out.reshape(&[steps, lower.inputs()])?;
                let (seq, seq_mask) = dropout(&seq, rate, mode, rng)?;
                let h = lower.hidden();
                let zero = Tensor::zeros(&[h]);
                let (low_out, low_trace) = lstm_forward(&seq, lower, &zero, &zero)?;
                let (up_out, up_trace) = lstm_forward(&low_out.hidden, upper, &zero, &zero)?;
                (
                    BodyTrace::Recurrent {
                        seq_mask,
                        lower: low_trace,
                        upper: up_trace,
                        steps,
                    },
                    up_out.h_last,
                )
            }
        };

        // dense bodies already dropped the inputs of both FC layers
        let (head_input, head_mask) = match self.body {
            Body::Recurrent { .. } => {
                let (d, m) = dropout(&head_raw, rate, mode, rng)?;
                (d, Some(m))
            }
            Body::Dense { .. } => (head_raw, None),
        };
        let logits = fully_connected_forward(&head_input, &self.head, Activation::Identity)?;
        let scores = logits.data().iter().map(|&z| sigmoid_scalar(z)).collect();
        Ok(Trace {
            branches: branch_traces,
            body: body_trace,
            head_input,
            head_mask,
            scores,
        })
    }

    fn branch_forward(&self, branch: &Branch, x: &Tensor) -> Result<(Tensor, BranchTrace)> {
        let (t_len, d_len) = (x.shape()[0], x.shape()[1]);
        let width = branch.channels.len();
        let mut data = Vec::with_capacity(t_len * width);
        for t in 0..t_len {
            let row = &x.data()[t * d_len..][..d_len];
            data.extend(branch.channels.iter().map(|&c| row[c]));
        }
        let mut cur = Tensor::new(vec![t_len, width, 1], data)?;
        let mut convs = Vec::with_capacity(branch.convs.len());
        for (l, conv) in branch.convs.iter().enumerate() {
            let output = temporal_conv_forward(&cur, conv, Activation::Relu)?;
            let pool = match &self.config.pooling {
                Some(p) if p.after.contains(&(l + 1)) => Some(max_pool_forward(&output, p.size, p.stride)?),
                _ => None,
            };
            let next = match &pool {
                Some(p) => p.output.clone(),
                None => output.clone(),
            };
            convs.push(ConvTrace {
                input: std::mem::replace(&mut cur, next),
                output,
                pool,
            });
        }
        let out_shape = cur.shape().to_vec();
        Ok((cur, BranchTrace { convs, out_shape }))
    }

    /// Backward pass from the gradient of the loss w.r.t. the head logits.
    pub fn backward(&self, trace: &Trace, grad_logits: &[f64]) -> Result<Gradients> {
        let logits_grad = Tensor::from_vec(grad_logits.to_vec());
        let head_out = Tensor::zeros(&[self.head.units()]);
        let hg = fully_connected_backward(&logits_grad, &trace.head_input, &self.head, Activation::Identity, &head_out)?;
        let mut grad_head_in = hg.grad_x;
        if let Some(mask) = &trace.head_mask {
            grad_head_in = mask.backward(&grad_head_in);
        }

        let mut body_grads = Vec::new();
        let mut branch_out_grads: Vec<Tensor> = Vec::new();
        match (&self.body, &trace.body) {
            (
                Body::Dense { branch_fc, merge },
                BodyTrace::Dense {
                    fc_inputs,
                    fc_masks,
                    fc_outputs,
                    merge_input,
                    merge_mask,
                    merge_output,
                },
            ) => {
                let mg = fully_connected_backward(&grad_head_in, merge_input, merge, Activation::Relu, merge_output)?;
                let g_concat = merge_mask.backward(&mg.grad_x);
                let mut offset = 0;
                let mut fc_grads = Vec::new();
                for (b, fc) in branch_fc.iter().enumerate() {
                    let units = fc.units();
                    let g = Tensor::from_vec(g_concat.data()[offset..offset + units].to_vec());
                    offset += units;
                    let fg = fully_connected_backward(&g, &fc_inputs[b], fc, Activation::Relu, &fc_outputs[b])?;
                    let g_flat = fc_masks[b].backward(&fg.grad_x);
                    branch_out_grads.push(g_flat.reshape(&trace.branches[b].out_shape)?);
                    fc_grads.push(fg.grad_w);
                    fc_grads.push(fg.grad_b);
                }
                body_grads.extend(fc_grads);
                body_grads.push(mg.grad_w);
                body_grads.push(mg.grad_b);
            }
            (
                Body::Recurrent { lower, upper },
                BodyTrace::Recurrent {
                    seq_mask,
                    lower: lt,
                    upper: ut,
                    steps,
                },
            ) => {
                let h = upper.hidden();
                let mut g_up = Tensor::zeros(&[*steps, h]);
                g_up.data_mut()[(steps - 1) * h..].copy_from_slice(grad_head_in.data());
                let ug = lstm_backward(&g_up, None, upper, ut)?;
                let lg = lstm_backward(&ug.grad_input, None, lower, lt)?;
                let g_seq = seq_mask.backward(&lg.grad_input);
                branch_out_grads.push(g_seq.reshape(&trace.branches[0].out_shape)?);
                body_grads.extend([lg.grad_input_weights, lg.grad_recurrent_weights, lg.grad_bias]);
                body_grads.extend([ug.grad_input_weights, ug.grad_recurrent_weights, ug.grad_bias]);
            }
            _ => return Err(Error::Shape("trace does not match network body".into())),
        }

        let mut grads = Vec::new();
        for ((branch, bt), g_out) in self.branches.iter().zip(&trace.branches).zip(branch_out_grads) {
            let mut conv_grads = Vec::with_capacity(branch.convs.len() * 2);
            let mut g = g_out;
            for (conv, ct) in branch.convs.iter().zip(&bt.convs).rev() {
                if let Some(pool) = &ct.pool {
                    g = max_pool_backward(&g, pool, ct.output.shape())?;
                }
                let cg = temporal_conv_backward(&g, &ct.input, conv, Activation::Relu, &ct.output)?;
                conv_grads.push(cg.grad_b);
                conv_grads.push(cg.grad_w);
                g = cg.grad_x;
            }
            conv_grads.reverse();
            grads.extend(conv_grads);
        }
        grads.extend(body_grads);
        grads.push(hg.grad_w);
        grads.push(hg.grad_b);
        Ok(Gradients(grads))
    }

    /// Mean BCE of one sample against binary attribute targets and its gradients.
    pub fn loss_and_gradients(&self, x: &Tensor, target: &[f64], mode: Mode, rng: &mut RngState) -> Result<(f64, Gradients)> {
        let trace = self.forward_sample(x, mode, rng)?;
        let loss = bce_loss(target, &trace.scores)?;
        let grads = self.backward(&trace, &bce_logit_grad(target, &trace.scores))?;
        Ok((loss, grads))
    }

    /// Summed loss and gradients over a batch. `rng_for(i)` supplies the
    /// dropout stream of sample `i`; chunks are reduced in a fixed order.
    pub fn batch_loss_and_gradients<F>(&self, samples: &[Tensor], targets: &[Vec<f64>], mode: Mode, rng_for: F) -> Result<(f64, Gradients)>
    where
        F: Fn(usize) -> RngState + Sync,
    {
        if samples.len() != targets.len() {
            return Err(Error::Shape("samples vs targets".into()));
        }
        let partials: Vec<Result<(f64, Gradients)>> = samples
            .par_chunks(GRAD_CHUNK)
            .enumerate()
            .map(|(chunk, xs)| {
                let mut loss = 0.0;
                let mut acc = Gradients::zeros_like(self);
                for (j, x) in xs.iter().enumerate() {
                    let i = chunk * GRAD_CHUNK + j;
                    let mut rng = rng_for(i);
                    let (l, g) = self.loss_and_gradients(x, &targets[i], mode, &mut rng)?;
                    loss += l;
                    acc.add_assign(&g)?;
                }
                Ok((loss, acc))
            })
            .collect();
        let mut loss = 0.0;
        let mut total = Gradients::zeros_like(self);
        for p in partials {
            let (l, g) = p?;
            loss += l;
            total.add_assign(&g)?;
        }
        Ok((loss, total))
    }

    /// Attribute scores for a batch `[B, T, D]`.
    pub fn forward(&self, batch: &Tensor, mode: Mode, rng: &mut RngState) -> Result<PredictionBatch> {
        batch.expect_rank(3, "batch")?;
        if batch.shape()[0] == 0 {
            return Err(Error::Empty("batch"));
        }
        let b = batch.shape()[0];
        let rows: Vec<Vec<f64>> = match mode {
            Mode::Eval => (0..b)
                .into_par_iter()
                .map(|i| {
                    let mut unused = RngState::new(0);
                    self.forward_sample(&batch.slice0(i), Mode::Eval, &mut unused).map(|t| t.scores)
                })
                .collect::<Result<_>>()?,
            Mode::Train => (0..b)
                .map(|i| self.forward_sample(&batch.slice0(i), Mode::Train, rng).map(|t| t.scores))
                .collect::<Result<_>>()?,
        };
        let n = self.attributes();
        let scores = Tensor::new(vec![b, n], rows.into_iter().flatten().collect())?;
        PredictionBatch::new(scores)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            parameters: self
                .parameters()
                .into_iter()
                .map(|(name, t)| NamedParam {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&ckpt)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        let bad = |m: String| Error::Schema {
            path: path.to_path_buf(),
            message: m,
        };
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint {} v{}", ckpt.format, ckpt.version)));
        }
        let mut net = Network::build(&ckpt.config, ckpt.seed)?;
        let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
        if names.len() != ckpt.parameters.len() {
            return Err(bad("parameter count does not match architecture".into()));
        }
        for ((slot, name), p) in net.parameters_mut().into_iter().zip(names).zip(ckpt.parameters) {
            if p.name != name || p.shape != slot.shape() {
                return Err(bad(format!("parameter {} does not match {name}", p.name)));
            }
            *slot = Tensor::new(p.shape, p.data)?;
        }
        Ok(net)
    }
}
