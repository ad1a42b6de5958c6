use std::collections::BTreeSet;

use super::config::{NetConfig, ADAPTER_CHANNELS};
use crate::error::{Error, Result};
use crate::nnkit::{
    activation, activation_backward, attention_gate, attention_gate_backward, conv2d, conv2d_backward, max_pool2,
    max_pool2_backward, transposed_conv2, transposed_conv2_backward, xavier_init, Activation, AttentionParams,
    GateOutput, LayerKind, LayerParams, Padding, PoolIndices, Real, Tensor,
};

/// Two 3×3 same-padded convolutions, each followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvPair<T> {
    pub first: LayerParams<T>,
    pub second: LayerParams<T>,
}

fn layer_seed(base: u64, idx: u64) -> u64 {
    base ^ idx.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn conv_layer<T: Real>(out: usize, inp: usize, k: usize, seed: u64) -> LayerParams<T> {
    let kind = if k == 1 { LayerKind::Conv1x1 } else { LayerKind::Conv2d };
    LayerParams::new(xavier_init(&[out, inp, k, k], seed), Tensor::zeros(&[out]), kind).expect("consistent conv shapes")
}

impl<T: Real> ConvPair<T> {
    fn init(inp: usize, out: usize, seed: &mut impl FnMut() -> u64) -> Self {
        ConvPair {
            first: conv_layer(out, inp, 3, seed()),
            second: conv_layer(out, out, 3, seed()),
        }
    }
}

/// 2-D attention U-Net.
///
/// Layout: 1×1 adapter (3 channels, no activation) → `depth` encoder stages
/// of two conv+ReLU with 2×2 max-pooling between them → bottleneck →
/// `depth` decoder stages (2×2 stride-2 up-convolution, attention-gated skip,
/// channel concatenation, two conv+ReLU) → 1×1 head with sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionUNet<T> {
    config: NetConfig,
    pub(crate) adapter: LayerParams<T>,
    pub(crate) encoder: Vec<ConvPair<T>>,
    pub(crate) bottleneck: ConvPair<T>,
    pub(crate) up: Vec<LayerParams<T>>,
    pub(crate) gates: Vec<AttentionParams<T>>,
    pub(crate) decoder: Vec<ConvPair<T>>,
    pub(crate) head: LayerParams<T>,
    pub(crate) imported: BTreeSet<String>,
    pub(crate) freeze_imported: bool,
}

struct StageTape<T> {
    input: Tensor<T>,
    hidden: Tensor<T>,
    output: Tensor<T>,
}

struct DecoderTape<T> {
    up_out: Tensor<T>,
    gate: GateOutput<T>,
    stage: StageTape<T>,
}

/// Intermediate activations of one forward pass, consumed by
/// [`AttentionUNet::backward`].
pub struct Tape<T> {
    adapter_in: Tensor<T>,
    encoder: Vec<StageTape<T>>,
    pools: Vec<PoolIndices>,
    bottleneck: StageTape<T>,
    decoder: Vec<DecoderTape<T>>,
    probability: Tensor<T>,
}

impl<T> Tape<T> {
    /// Sigmoid output `(N, 1, H, W)`.
    pub fn probability(&self) -> &Tensor<T> {
        &self.probability
    }

    pub fn into_probability(self) -> Tensor<T> {
        self.probability
    }

    /// Attention coefficients of decoder level `level` (0 = finest).
    pub fn attention(&self, level: usize) -> Option<&Tensor<T>> {
        self.decoder.get(level).map(|d| &d.gate.psi)
    }
}

fn run_stage<T: Real>(pair: &ConvPair<T>, input: Tensor<T>) -> Result<StageTape<T>> {
    let hidden = activation(&conv2d(&input, &pair.first, Padding::Same)?, Activation::Relu);
    let output = activation(&conv2d(&hidden, &pair.second, Padding::Same)?, Activation::Relu);
    Ok(StageTape { input, hidden, output })
}

fn back_stage<T: Real>(pair: &mut ConvPair<T>, tape: &StageTape<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let d2 = activation_backward(&tape.output, grad_out, Activation::Relu)?;
    let dh = conv2d_backward(&tape.hidden, &mut pair.second, Padding::Same, &d2)?;
    let d1 = activation_backward(&tape.hidden, &dh, Activation::Relu)?;
    conv2d_backward(&tape.input, &mut pair.first, Padding::Same, &d1)
}

impl<T: Real> AttentionUNet<T> {
    /// Builds a Xavier-initialised network.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let f = config.stage_filters();
        let depth = config.depth;
        let mut counter = 0u64;
        let base = config.seed;
        let mut seed = move || {
            counter += 1;
            layer_seed(base, counter)
        };
        let adapter = conv_layer(ADAPTER_CHANNELS, config.in_channels, 1, seed());
        let mut encoder = Vec::with_capacity(depth);
        let mut prev = ADAPTER_CHANNELS;
        for &ch in &f[..depth] {
            encoder.push(ConvPair::init(prev, ch, &mut seed));
            prev = ch;
        }
        let bottleneck = ConvPair::init(prev, f[depth], &mut seed);
        let mut up = Vec::with_capacity(depth);
        let mut gates = Vec::with_capacity(depth);
        let mut decoder = Vec::with_capacity(depth);
        for l in 0..depth {
            up.push(
                LayerParams::new(
                    xavier_init(&[f[l + 1], f[l], 2, 2], seed()),
                    Tensor::zeros(&[f[l]]),
                    LayerKind::TransposedConv,
                )
                .expect("consistent up-conv shapes"),
            );
            gates.push(AttentionParams::init(f[l], f[l], seed()));
            decoder.push(ConvPair::init(2 * f[l], f[l], &mut seed));
        }
        let head = conv_layer(1, f[0], 1, seed());
        Ok(AttentionUNet {
            config,
            adapter,
            encoder,
            bottleneck,
            up,
            gates,
            decoder,
            head,
            imported: BTreeSet::new(),
            freeze_imported: false,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.threshold = threshold;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Layers whose weights came from an imported container.
    pub fn imported_layers(&self) -> &BTreeSet<String> {
        &self.imported
    }

    pub fn freeze_imported(&self) -> bool {
        self.freeze_imported
    }

    /// Excludes imported layers from optimizer updates.
    pub fn set_freeze_imported(&mut self, freeze: bool) {
        self.freeze_imported = freeze;
    }

    /// Named parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        fn layer<'a, T>(out: &mut Vec<(String, &'a Tensor<T>)>, name: &str, p: &'a LayerParams<T>) {
            out.push((format!("{name}.weight"), &p.weights));
            out.push((format!("{name}.bias"), &p.bias));
        }
        layer(&mut out, "adapter", &self.adapter);
        for (l, pair) in self.encoder.iter().enumerate() {
            layer(&mut out, &format!("enc{l}.conv1"), &pair.first);
            layer(&mut out, &format!("enc{l}.conv2"), &pair.second);
        }
        layer(&mut out, "bottleneck.conv1", &self.bottleneck.first);
        layer(&mut out, "bottleneck.conv2", &self.bottleneck.second);
        for l in (0..self.config.depth).rev() {
            layer(&mut out, &format!("up{l}"), &self.up[l]);
            for (n, t) in self.gates[l].tensors() {
                out.push((format!("gate{l}.{n}"), t));
            }
            layer(&mut out, &format!("dec{l}.conv1"), &self.decoder[l].first);
            layer(&mut out, &format!("dec{l}.conv2"), &self.decoder[l].second);
        }
        layer(&mut out, "head", &self.head);
        out
    }

    /// Mutable view of [`Self::params`], same order, with a trainable flag.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor<T>, bool)> {
        fn layer<'a, T>(
            out: &mut Vec<(String, &'a mut Tensor<T>, bool)>,
            name: &str,
            p: &'a mut LayerParams<T>,
            frozen: &BTreeSet<String>,
        ) {
            let trainable = !frozen.contains(name);
            out.push((format!("{name}.weight"), &mut p.weights, trainable));
            out.push((format!("{name}.bias"), &mut p.bias, trainable));
        }
        let frozen = if self.freeze_imported {
            self.imported.clone()
        } else {
            BTreeSet::new()
        };
        let depth = self.config.depth;
        let mut out = Vec::new();
        layer(&mut out, "adapter", &mut self.adapter, &frozen);
        for (l, pair) in self.encoder.iter_mut().enumerate() {
            layer(&mut out, &format!("enc{l}.conv1"), &mut pair.first, &frozen);
            layer(&mut out, &format!("enc{l}.conv2"), &mut pair.second, &frozen);
        }
        layer(&mut out, "bottleneck.conv1", &mut self.bottleneck.first, &frozen);
        layer(&mut out, "bottleneck.conv2", &mut self.bottleneck.second, &frozen);
        let mut ups: Vec<_> = self.up.iter_mut().map(Some).collect();
        let mut gates: Vec<_> = self.gates.iter_mut().map(Some).collect();
        let mut decs: Vec<_> = self.decoder.iter_mut().map(Some).collect();
        for l in (0..depth).rev() {
            layer(&mut out, &format!("up{l}"), ups[l].take().expect("once"), &frozen);
            for (n, t) in gates[l].take().expect("once").tensors_mut() {
                out.push((format!("gate{l}.{n}"), t, true));
            }
            let dec = decs[l].take().expect("once");
            layer(&mut out, &format!("dec{l}.conv1"), &mut dec.first, &frozen);
            layer(&mut out, &format!("dec{l}.conv2"), &mut dec.second, &frozen);
        }
        layer(&mut out, "head", &mut self.head, &frozen);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for (_, t, _) in self.params_mut() {
            t.zero_grad();
        }
    }

    pub(crate) fn layer_mut(&mut self, name: &str) -> Option<&mut LayerParams<T>> {
        let depth = self.config.depth;
        match name {
            "adapter" => return Some(&mut self.adapter),
            "head" => return Some(&mut self.head),
            "bottleneck.conv1" => return Some(&mut self.bottleneck.first),
            "bottleneck.conv2" => return Some(&mut self.bottleneck.second),
            _ => {}
        }
        let (prefix, rest) = name.split_once('.').unwrap_or((name, ""));
        let parse = |p: &str, tag: &str| p.strip_prefix(tag).and_then(|n| n.parse::<usize>().ok());
        if let Some(l) = parse(prefix, "up").filter(|&l| l < depth) {
            return rest.is_empty().then(|| &mut self.up[l]);
        }
        let pair = if let Some(l) = parse(prefix, "enc").filter(|&l| l < depth) {
            &mut self.encoder[l]
        } else {
            let l = parse(prefix, "dec").filter(|&l| l < depth)?;
            &mut self.decoder[l]
        };
        match rest {
            "conv1" => Some(&mut pair.first),
            "conv2" => Some(&mut pair.second),
            _ => None,
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = input.dims4()?;
        let s = self.config.input_size;
        if c != self.config.in_channels || h != s || w != s {
            return Err(Error::dim(format!(
                "network expects (N, {}, {s}, {s}) input, got {:?}",
                self.config.in_channels,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass keeping every activation needed for backpropagation.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tape<T>> {
        self.check_input(input)?;
        let depth = self.config.depth;
        let mut x = conv2d(input, &self.adapter, Padding::Valid)?;
        let mut encoder = Vec::with_capacity(depth);
        let mut pools = Vec::with_capacity(depth);
        for pair in &self.encoder {
            let stage = run_stage(pair, x)?;
            let (pooled, idx) = max_pool2(&stage.output)?;
            encoder.push(stage);
            pools.push(idx);
            x = pooled;
        }
        let bottleneck = run_stage(&self.bottleneck, x)?;
        let mut decoder: Vec<DecoderTape<T>> = Vec::with_capacity(depth);
        for l in (0..depth).rev() {
            let prev = decoder.last().map(|d| &d.stage.output).unwrap_or(&bottleneck.output);
            let up_out = transposed_conv2(prev, &self.up[l])?;
            let gate = attention_gate(&encoder[l].output, &up_out, &self.gates[l])?;
            let concat = Tensor::concat_channels(&gate.output, &up_out)?;
            let stage = run_stage(&self.decoder[l], concat)?;
            decoder.push(DecoderTape { up_out, gate, stage });
        }
        decoder.reverse();
        let logits = conv2d(&decoder[0].stage.output, &self.head, Padding::Valid)?;
        let probability = activation(&logits, Activation::Sigmoid);
        Ok(Tape {
            adapter_in: input.clone(),
            encoder,
            pools,
            bottleneck,
            decoder,
            probability,
        })
    }

    /// Probability map `(N, 1, H, W)` without retaining a tape.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(input)?.into_probability())
    }

    /// Backpropagates `grad_prob` (gradient of the loss with respect to the
    /// probability map), accumulating into every parameter gradient.
    pub fn backward(&mut self, tape: &Tape<T>, grad_prob: &Tensor<T>) -> Result<()> {
        let depth = self.config.depth;
        let dlogits = activation_backward(&tape.probability, grad_prob, Activation::Sigmoid)?;
        let mut grad = conv2d_backward(&tape.decoder[0].stage.output, &mut self.head, Padding::Valid, &dlogits)?;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; depth];
        for l in 0..depth {
            let dt = &tape.decoder[l];
            let dcat = back_stage(&mut self.decoder[l], &dt.stage, &grad)?;
            let skip_ch = tape.encoder[l].output.shape()[1];
            let (dgated, mut dup) = dcat.split_channels(skip_ch)?;
            let (dskip, dgate) = attention_gate_backward(
                &tape.encoder[l].output,
                &dt.up_out,
                &dt.gate,
                &dgated,
                &mut self.gates[l],
            )?;
            dup.add_assign(&dgate)?;
            skip_grads[l] = Some(dskip);
            let prev = if l + 1 < depth {
                &tape.decoder[l + 1].stage.output
            } else {
                &tape.bottleneck.output
            };
            grad = transposed_conv2_backward(prev, &mut self.up[l], &dup)?;
        }
        grad = back_stage(&mut self.bottleneck, &tape.bottleneck, &grad)?;
        for l in (0..depth).rev() {
            let mut dout = max_pool2_backward(&tape.pools[l], &grad)?;
            dout.add_assign(skip_grads[l].as_ref().expect("filled above"))?;
            grad = back_stage(&mut self.encoder[l], &tape.encoder[l], &dout)?;
        }
        conv2d_backward(&tape.adapter_in, &mut self.adapter, Padding::Valid, &grad)?;
        Ok(())
    }

    /// Network in another precision (values converted, gradients dropped).
    pub fn cast<U: Real>(&self) -> AttentionUNet<U> {
        fn lp<T: Real, U: Real>(p: &LayerParams<T>) -> LayerParams<U> {
            LayerParams {
                weights: p.weights.cast(),
                bias: p.bias.cast(),
                kind: p.kind,
            }
        }
        fn pair<T: Real, U: Real>(p: &ConvPair<T>) -> ConvPair<U> {
            ConvPair {
                first: lp(&p.first),
                second: lp(&p.second),
            }
        }
        AttentionUNet {
            config: self.config.clone(),
            adapter: lp(&self.adapter),
            encoder: self.encoder.iter().map(pair).collect(),
            bottleneck: pair(&self.bottleneck),
            up: self.up.iter().map(lp).collect(),
            gates: self
                .gates
                .iter()
                .map(|g| AttentionParams {
                    wx: g.wx.cast(),
                    wg: g.wg.cast(),
                    bias: g.bias.cast(),
                    wpsi: g.wpsi.cast(),
                    bpsi: g.bpsi.cast(),
                })
                .collect(),
            decoder: self.decoder.iter().map(pair).collect(),
            head: lp(&self.head),
            imported: self.imported.clone(),
            freeze_imported: self.freeze_imported,
        }
    }
}
