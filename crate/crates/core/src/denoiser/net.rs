//! A small single-scale residual convolutional denoiser.
//!
//! ```text
//! x (8ch) ─ 1×1×1 → C ─ block0 ─[wavelet sandwich]─ block1 ─ 1×1×1 → 8
//! block(h) = h + conv2(silu(conv1(h) + W_t·emb(t) + b_t))
//! ```
//!
//! With the wavelet variant enabled, after block0:
//!
//! ```text
//! inner = down(dwt_down(h)) + skip(dwt_down(x_lll))      (C ch, half res)
//! h     = h + idwt_up(up(mid_block(inner)))
//! ```
//!
//! All parameters live in one flat vector; see [`NetConfig::layout`] for the
//! ordering.

use std::ops::Range;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::embedding::timestep_embedding;
use super::layers::{conv3, conv3_backward, pointwise, pointwise_backward, silu, silu_backward};
use super::{Denoiser, Gradients, Trainable};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Field;
use crate::wavelet::{dwt_downsample, idwt_upsample};

const IN_CHANNELS: usize = 8;
const MIN_SPATIAL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub base_channels: usize,
    /// Adds the wavelet down/up sandwich and wavelet residual path.
    #[serde(default)]
    pub wavelet: bool,
}

impl NetConfig {
    pub fn desk() -> Self {
        Self {
            base_channels: 8,
            wavelet: false,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        4 * self.base_channels
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    off: usize,
    len: usize,
}

impl Slot {
    fn range(self) -> Range<usize> {
        self.off..self.off + self.len
    }
}

#[derive(Debug, Clone, Copy)]
struct BlockSlots {
    conv1_w: Slot,
    conv1_b: Slot,
    time_w: Slot,
    time_b: Slot,
    conv2_w: Slot,
    conv2_b: Slot,
}

#[derive(Debug, Clone, Copy)]
struct WaveletSlots {
    down_w: Slot,
    down_b: Slot,
    skip_w: Slot,
    skip_b: Slot,
    mid: BlockSlots,
    up_w: Slot,
    up_b: Slot,
}

/// Named offsets into the flat parameter vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    in_w: Slot,
    in_b: Slot,
    blocks: [BlockSlots; 2],
    out_w: Slot,
    out_b: Slot,
    wavelet: Option<WaveletSlots>,
    entries: Vec<(String, Range<usize>)>,
    total: usize,
}

struct LayoutBuilder {
    next: usize,
    entries: Vec<(String, Range<usize>)>,
}

impl LayoutBuilder {
    fn push(&mut self, name: &str, len: usize) -> Slot {
        let slot = Slot {
            off: self.next,
            len,
        };
        self.next += len;
        self.entries.push((name.to_string(), slot.range()));
        slot
    }

    fn block(&mut self, prefix: &str, c: usize, e: usize) -> BlockSlots {
        BlockSlots {
            conv1_w: self.push(&format!("{prefix}.conv1.weight"), c * c * 27),
            conv1_b: self.push(&format!("{prefix}.conv1.bias"), c),
            time_w: self.push(&format!("{prefix}.time.weight"), c * e),
            time_b: self.push(&format!("{prefix}.time.bias"), c),
            conv2_w: self.push(&format!("{prefix}.conv2.weight"), c * c * 27),
            conv2_b: self.push(&format!("{prefix}.conv2.bias"), c),
        }
    }
}

impl ParamLayout {
    fn new(config: &NetConfig) -> Self {
        let c = config.base_channels;
        let e = config.embedding_dim();
        let mut b = LayoutBuilder {
            next: 0,
            entries: Vec::new(),
        };
        let in_w = b.push("in.weight", c * IN_CHANNELS);
        let in_b = b.push("in.bias", c);
        let blocks = [b.block("block0", c, e), b.block("block1", c, e)];
        let out_w = b.push("out.weight", IN_CHANNELS * c);
        let out_b = b.push("out.bias", IN_CHANNELS);
        let wavelet = config.wavelet.then(|| WaveletSlots {
            down_w: b.push("wavelet.down.weight", c * 8 * c),
            down_b: b.push("wavelet.down.bias", c),
            skip_w: b.push("wavelet.skip.weight", c * 8),
            skip_b: b.push("wavelet.skip.bias", c),
            mid: b.block("wavelet.mid", c, e),
            up_w: b.push("wavelet.up.weight", 8 * c * c),
            up_b: b.push("wavelet.up.bias", 8 * c),
        });
        Self {
            in_w,
            in_b,
            blocks,
            out_w,
            out_b,
            wavelet,
            total: b.next,
            entries: b.entries,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// `(name, range)` in storage order.
    pub fn entries(&self) -> &[(String, Range<usize>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<Range<usize>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }
}

#[derive(Debug, Clone)]
struct BlockTape<T> {
    input: Field<T>,
    pre: Field<T>,
    act: Field<T>,
}

#[derive(Debug, Clone)]
struct WaveletTape<T> {
    down_in: Field<T>,
    skip_in: Field<T>,
    mid: BlockTape<T>,
    up_in: Field<T>,
}

/// Activations recorded by [`TinyConvDenoiser::forward`].
#[derive(Debug, Clone)]
pub struct NetTape<T> {
    input: Field<T>,
    emb: Vec<T>,
    blocks: Vec<BlockTape<T>>,
    wavelet: Option<WaveletTape<T>>,
    head_in: Field<T>,
}

#[derive(Debug, Clone)]
pub struct NetGradients<T> {
    pub params: Vec<T>,
    pub input: Field<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyConvDenoiser<T = f32> {
    config: NetConfig,
    params: Vec<T>,
}

impl<T: Float + Send + Sync> TinyConvDenoiser<T> {
    pub fn zeros(config: NetConfig) -> Result<Self> {
        if config.base_channels == 0 {
            return Err(Error::InvalidArgument("base_channels must be positive".into()));
        }
        let n = config.layout().total();
        Ok(Self {
            config,
            params: vec![T::zero(); n],
        })
    }

    /// Weights uniform in `±1/√fan_in`, biases zero; the output map and the
    /// wavelet up map start at zero so the initial prediction is 0.
    pub fn init(config: NetConfig, rng: &mut RngState) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let layout = config.layout();
        let c = config.base_channels;
        let e = config.embedding_dim();
        let mut fill = |slot: Slot, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[slot.range()] {
                *p = T::from((2.0 * rng.uniform() - 1.0) * bound).unwrap();
            }
        };
        fill(layout.in_w, IN_CHANNELS);
        let mut blocks: Vec<BlockSlots> = layout.blocks.to_vec();
        if let Some(w) = &layout.wavelet {
            fill(w.down_w, 8 * c);
            fill(w.skip_w, 8);
            blocks.push(w.mid);
        }
        for b in blocks {
            fill(b.conv1_w, 27 * c);
            fill(b.time_w, e);
            fill(b.conv2_w, 27 * c);
        }
        Ok(net)
    }

    pub fn from_params(config: NetConfig, params: Vec<T>) -> Result<Self> {
        let want = config.layout().total();
        if params.len() != want {
            return Err(Error::PayloadLength {
                expected: want,
                found: params.len(),
            });
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    pub fn layout(&self) -> ParamLayout {
        self.config.layout()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Mutable view of one named tensor, e.g. `"block0.conv1.weight"`.
    pub fn param_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let r = self.layout().get(name)?;
        Some(&mut self.params[r])
    }

    pub fn cast<U: Float + Send + Sync>(&self) -> TinyConvDenoiser<U> {
        TinyConvDenoiser {
            config: self.config,
            params: self.params.iter().map(|&p| U::from(p).unwrap()).collect(),
        }
    }

    fn p(&self, slot: Slot) -> &[T] {
        &self.params[slot.range()]
    }

    fn check_input(&self, x: &Field<T>) -> Result<()> {
        if x.channels() != IN_CHANNELS {
            return Err(Error::Shape(format!(
                "denoiser expects {IN_CHANNELS} subband channels, got {}",
                x.channels()
            )));
        }
        if x.dims().iter().any(|&d| d < MIN_SPATIAL) {
            return Err(Error::Shape(format!(
                "spatial dims {:?} too small; need at least {MIN_SPATIAL} per axis",
                x.dims()
            )));
        }
        if self.config.wavelet && x.dims().iter().any(|d| d % 2 != 0) {
            return Err(Error::Shape(format!(
                "wavelet variant needs even coefficient dims (volume dims divisible by 4), got {:?}",
                x.dims()
            )));
        }
        Ok(())
    }

    fn block_forward(&self, s: &BlockSlots, h: Field<T>, emb: &[T]) -> (Field<T>, BlockTape<T>) {
        let c = self.config.base_channels;
        let mut pre = conv3(&h, self.p(s.conv1_w), self.p(s.conv1_b), c);
        let tw = self.p(s.time_w);
        let tb = self.p(s.time_b);
        let e = emb.len();
        for ch in 0..c {
            let shift = emb
                .iter()
                .zip(&tw[ch * e..(ch + 1) * e])
                .fold(tb[ch], |acc, (&a, &w)| acc + a * w);
            pre.channel_mut(ch).iter_mut().for_each(|v| *v = *v + shift);
        }
        let act = silu(&pre);
        let mut out = conv3(&act, self.p(s.conv2_w), self.p(s.conv2_b), c);
        out.add_assign(&h);
        (out, BlockTape { input: h, pre, act })
    }

    fn block_backward(
        &self,
        s: &BlockSlots,
        tape: &BlockTape<T>,
        emb: &[T],
        g_out: &Field<T>,
        grads: &mut [T],
    ) -> Field<T> {
        let (gw, gb) = split_pair(grads, s.conv2_w, s.conv2_b);
        let g_act = conv3_backward(&tape.act, self.p(s.conv2_w), g_out, gw, gb);
        let g_pre = silu_backward(&tape.pre, &g_act);
        let e = emb.len();
        {
            let (gtw, gtb) = split_pair(grads, s.time_w, s.time_b);
            for ch in 0..g_pre.channels() {
                let sum = g_pre.channel(ch).iter().fold(T::zero(), |a, &v| a + v);
                gtb[ch] = gtb[ch] + sum;
                for (g, &em) in gtw[ch * e..(ch + 1) * e].iter_mut().zip(emb) {
                    *g = *g + sum * em;
                }
            }
        }
        let (gw, gb) = split_pair(grads, s.conv1_w, s.conv1_b);
        let mut g_in = conv3_backward(&tape.input, self.p(s.conv1_w), &g_pre, gw, gb);
        g_in.add_assign(g_out);
        g_in
    }

    pub fn forward(&self, x: &Field<T>, t: usize) -> Result<(Field<T>, NetTape<T>)> {
        self.check_input(x)?;
        let layout = self.layout();
        let c = self.config.base_channels;
        let emb: Vec<T> = timestep_embedding(t, self.config.embedding_dim())
            .into_iter()
            .map(|v| T::from(v).unwrap())
            .collect();

        let h = pointwise(x, self.p(layout.in_w), self.p(layout.in_b), c);
        let (mut h, t0) = self.block_forward(&layout.blocks[0], h, &emb);

        let wavelet = match &layout.wavelet {
            Some(ws) => {
                let down_in = dwt_downsample(&h)?;
                let mut inner = pointwise(&down_in, self.p(ws.down_w), self.p(ws.down_b), c);
                let lll = Field::from_vec(1, x.dims(), x.channel(0).to_vec())?;
                let skip_in = dwt_downsample(&lll)?;
                inner.add_assign(&pointwise(&skip_in, self.p(ws.skip_w), self.p(ws.skip_b), c));
                let (mid_out, mid) = self.block_forward(&ws.mid, inner, &emb);
                let up = pointwise(&mid_out, self.p(ws.up_w), self.p(ws.up_b), 8 * c);
                h.add_assign(&idwt_upsample(&up)?);
                Some(WaveletTape {
                    down_in,
                    skip_in,
                    mid,
                    up_in: mid_out,
                })
            }
            None => None,
        };

        let (h, t1) = self.block_forward(&layout.blocks[1], h, &emb);
        let out = pointwise(&h, self.p(layout.out_w), self.p(layout.out_b), IN_CHANNELS);
        Ok((
            out,
            NetTape {
                input: x.clone(),
                emb,
                blocks: vec![t0, t1],
                wavelet,
                head_in: h,
            },
        ))
    }

    pub fn backward(&self, tape: &NetTape<T>, grad_out: &Field<T>) -> Result<NetGradients<T>> {
        if grad_out.channels() != IN_CHANNELS || grad_out.dims() != tape.input.dims() {
            return Err(Error::Shape(format!(
                "gradient {} does not match recorded output {}x{:?}",
                grad_out.shape_string(),
                IN_CHANNELS,
                tape.input.dims()
            )));
        }
        let layout = self.layout();
        let mut grads = vec![T::zero(); self.params.len()];

        let (gw, gb) = split_pair(&mut grads, layout.out_w, layout.out_b);
        let g = pointwise_backward(&tape.head_in, self.p(layout.out_w), grad_out, gw, gb);
        let mut g = self.block_backward(&layout.blocks[1], &tape.blocks[1], &tape.emb, &g, &mut grads);

        let mut g_input = Field::zeros(IN_CHANNELS, tape.input.dims());
        if let (Some(ws), Some(wt)) = (&layout.wavelet, &tape.wavelet) {
            // Adjoint of the orthonormal IDWT is the DWT and vice versa.
            let g_up = dwt_downsample(&g)?;
            let (gw, gb) = split_pair(&mut grads, ws.up_w, ws.up_b);
            let g_mid_out = pointwise_backward(&wt.up_in, self.p(ws.up_w), &g_up, gw, gb);
            let g_inner = self.block_backward(&ws.mid, &wt.mid, &tape.emb, &g_mid_out, &mut grads);
            let (gw, gb) = split_pair(&mut grads, ws.skip_w, ws.skip_b);
            let g_skip = pointwise_backward(&wt.skip_in, self.p(ws.skip_w), &g_inner, gw, gb);
            let g_lll = idwt_upsample(&g_skip)?;
            for (a, &b) in g_input.channel_mut(0).iter_mut().zip(g_lll.data()) {
                *a = *a + b;
            }
            let (gw, gb) = split_pair(&mut grads, ws.down_w, ws.down_b);
            let g_down = pointwise_backward(&wt.down_in, self.p(ws.down_w), &g_inner, gw, gb);
            g.add_assign(&idwt_upsample(&g_down)?);
        }

        let g = self.block_backward(&layout.blocks[0], &tape.blocks[0], &tape.emb, &g, &mut grads);
        let (gw, gb) = split_pair(&mut grads, layout.in_w, layout.in_b);
        let gx = pointwise_backward(&tape.input, self.p(layout.in_w), &g, gw, gb);
        g_input.add_assign(&gx);
        Ok(NetGradients {
            params: grads,
            input: g_input,
        })
    }
}

/// Disjoint mutable views of a weight slot and the bias slot that follows it.
fn split_pair<T>(grads: &mut [T], w: Slot, b: Slot) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(w.off + w.len, b.off);
    let (head, tail) = grads[w.off..b.off + b.len].split_at_mut(w.len);
    (head, tail)
}

impl Denoiser for TinyConvDenoiser<f32> {
    fn predict(&self, x_t: &Field<f32>, t: usize) -> Result<Field<f32>> {
        Ok(self.forward(x_t, t)?.0)
    }
}

impl Trainable for TinyConvDenoiser<f32> {
    type Tape = NetTape<f32>;

    fn forward_with_tape(&self, x_t: &Field<f32>, t: usize) -> Result<(Field<f32>, Self::Tape)> {
        self.forward(x_t, t)
    }

    fn backward(&self, tape: &Self::Tape, grad_out: &Field<f32>) -> Result<Gradients> {
        let g = TinyConvDenoiser::backward(self, tape, grad_out)?;
        Ok(Gradients {
            params: g.params,
            input: g.input,
        })
    }

    fn parameters(&self) -> &[f32] {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(dims: [usize; 3], seed: u64) -> Field<f32> {
        let mut rng = RngState::new(seed);
        let mut x = Field::zeros(8, dims);
        rng.fill_normal(x.data_mut());
        x
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = TinyConvDenoiser::<f32>::zeros(NetConfig::desk()).unwrap();
        let y = net.predict(&random_input([4, 4, 4], 1), 10).unwrap();
        assert_eq!(y.dims(), [4, 4, 4]);
        assert_eq!(y.channels(), 8);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_maps_pass_input_through() {
        let mut net = TinyConvDenoiser::<f32>::zeros(NetConfig::desk()).unwrap();
        let c = 8;
        let w_in = net.param_mut("in.weight").unwrap();
        for i in 0..8 {
            w_in[i * 8 + i] = 1.0;
        }
        let w_out = net.param_mut("out.weight").unwrap();
        for i in 0..8 {
            w_out[i * c + i] = 1.0;
        }
        let x = random_input([5, 4, 6], 2);
        let y = net.predict(&x, 300).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn init_predicts_zero_and_is_deterministic() {
        let a = TinyConvDenoiser::<f32>::init(NetConfig::desk(), &mut RngState::new(4)).unwrap();
        let b = TinyConvDenoiser::<f32>::init(NetConfig::desk(), &mut RngState::new(4)).unwrap();
        assert_eq!(a, b);
        let y = a.predict(&random_input([4, 4, 4], 3), 5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_bitwise_repeatable() {
        let mut net = TinyConvDenoiser::<f32>::init(NetConfig::desk(), &mut RngState::new(5)).unwrap();
        let mut rng = RngState::new(6);
        for p in net.param_mut("out.weight").unwrap() {
            *p = rng.normal() as f32 * 0.1;
        }
        let x = random_input([6, 6, 6], 7);
        let y1 = net.predict(&x, 42).unwrap();
        let y2 = net.predict(&x, 42).unwrap();
        assert_eq!(y1, y2);
        assert!(y1.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn input_checks() {
        let net = TinyConvDenoiser::<f32>::zeros(NetConfig::desk()).unwrap();
        assert!(net.predict(&Field::zeros(8, [3, 4, 4]), 1).is_err());
        assert!(net.predict(&Field::zeros(4, [4, 4, 4]), 1).is_err());
        let wnet = TinyConvDenoiser::<f32>::zeros(NetConfig {
            base_channels: 4,
            wavelet: true,
        })
        .unwrap();
        assert!(wnet.predict(&Field::zeros(8, [5, 4, 4]), 1).is_err());
        assert!(wnet.predict(&Field::zeros(8, [4, 4, 4]), 1).is_ok());
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let mut rng = RngState::new(8);
        let mut net = TinyConvDenoiser::<f64>::init(NetConfig { base_channels: 4, wavelet: true }, &mut rng).unwrap();
        for p in net.params_mut() {
            if *p == 0.0 {
                *p = rng.normal() * 0.1;
            }
        }
        let x = random_input([4, 4, 4], 9).cast::<f64>();
        let (_, tape) = net.forward(&x, 17).unwrap();
        let g = net.backward(&tape, &Field::zeros(8, [4, 4, 4])).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_network_input_gradient_is_grad_out() {
        let mut net = TinyConvDenoiser::<f64>::zeros(NetConfig::desk()).unwrap();
        for i in 0..8 {
            net.param_mut("in.weight").unwrap()[i * 8 + i] = 1.0;
            net.param_mut("out.weight").unwrap()[i * 8 + i] = 1.0;
        }
        let x = random_input([4, 4, 4], 10).cast::<f64>();
        let g_out = random_input([4, 4, 4], 11).cast::<f64>();
        let (_, tape) = net.forward(&x, 3).unwrap();
        let g = net.backward(&tape, &g_out).unwrap();
        for (a, b) in g.input.data().iter().zip(g_out.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn wavelet_variant_with_zero_extra_weights_matches_base() {
        let cfg = NetConfig { base_channels: 4, wavelet: false };
        let mut rng = RngState::new(12);
        let mut base = TinyConvDenoiser::<f32>::init(cfg, &mut rng).unwrap();
        for p in base.param_mut("out.weight").unwrap() {
            *p = rng.normal() as f32;
        }
        let mut variant = TinyConvDenoiser::<f32>::zeros(NetConfig { wavelet: true, ..cfg }).unwrap();
        let n = base.parameter_count();
        variant.params_mut()[..n].copy_from_slice(base.params());
        let x = random_input([4, 6, 4], 13);
        assert_eq!(base.predict(&x, 77).unwrap(), variant.predict(&x, 77).unwrap());
    }

    #[test]
    fn parameter_counts() {
        for c in [4usize, 8, 64] {
            let e = 4 * c;
            let block = 2 * (c * c * 27 + c) + c * e + c;
            let base = (8 * c + c) + 2 * block + (8 * c + 8);
            let delta = (8 * c * c + c) + (8 * c + c) + block + (8 * c * c + 8 * c);
            let b = NetConfig { base_channels: c, wavelet: false }.layout().total();
            let v = NetConfig { base_channels: c, wavelet: true }.layout().total();
            assert_eq!(b, base);
            assert_eq!(v - b, delta);
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let layout = NetConfig { base_channels: 3, wavelet: true }.layout();
        let mut next = 0;
        for (_, r) in layout.entries() {
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, layout.total());
        assert!(layout.get("wavelet.mid.time.weight").is_some());
    }
}
