//! Encoder–decoder network with a hand-written backward pass.
//!
//! Level `l` of the encoder is a 3×3 convolution to `c·2^l` channels with
//! ReLU, followed by 2× downsampling. The bottleneck is a 3×3 convolution
//! keeping `c·2^(depth−1)` channels. Each decoder level upsamples, optionally
//! concatenates the encoder activation of the same level, and convolves to
//! `c·2^l` channels. A 1×1 convolution produces the single output channel.

use ndarray::{s, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::{
    blur_pool, blur_pool_backward, concat, max_pool, max_pool_backward, relu, relu_backward, upsample,
    upsample_backward, Conv, ConvGrad, Real,
};
use super::Variant;

/// Everything needed to rebuild the layer list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub variant: Variant,
    pub depth: usize,
    pub base_channels: usize,
}

/// Static description of one convolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
}

impl Architecture {
    fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Whether decoder level `level` receives the encoder skip connection.
    pub fn has_skip(&self, level: usize) -> bool {
        !(self.variant == Variant::N2v2 && level == 0)
    }

    pub fn skip_count(&self) -> usize {
        (0..self.depth).filter(|&l| self.has_skip(l)).count()
    }

    /// Layers in storage order: encoders, bottleneck, decoders (deepest
    /// first), output.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let spec = |name: String, in_ch, out_ch, kernel| LayerSpec {
            name,
            in_ch,
            out_ch,
            kernel,
        };
        let d = self.depth;
        let mut v = Vec::with_capacity(2 * d + 2);
        let mut ch = 1;
        for l in 0..d {
            v.push(spec(format!("enc{l}"), ch, self.channels(l), 3));
            ch = self.channels(l);
        }
        v.push(spec("bottleneck".into(), ch, ch, 3));
        for l in (0..d).rev() {
            let skip = if self.has_skip(l) { self.channels(l) } else { 0 };
            v.push(spec(format!("dec{l}"), ch + skip, self.channels(l), 3));
            ch = self.channels(l);
        }
        v.push(spec("out".into(), ch, 1, 1));
        v
    }

    pub fn param_count(&self) -> usize {
        self.layer_specs()
            .iter()
            .map(|s| s.out_ch * (s.in_ch * s.kernel * s.kernel + 1))
            .sum()
    }
}

/// Per-layer parameter gradients, in layer storage order.
pub type Gradients<T> = Vec<ConvGrad<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: Architecture,
    pub layers: Vec<Conv<T>>,
}

struct Step<T> {
    cols: Array2<T>,
    input_shape: (usize, usize, usize),
    /// Post-activation output (pre-activation for the output layer).
    output: Array3<T>,
}

struct Cache<T> {
    enc: Vec<Step<T>>,
    pool_args: Vec<Vec<u8>>,
    bottleneck: Step<T>,
    /// Indexed by level.
    dec: Vec<Option<Step<T>>>,
    out: Step<T>,
}

impl<T: Real> Network<T> {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Self {
        let layers = arch
            .layer_specs()
            .into_iter()
            .map(|s| Conv::zeros(s.name, s.in_ch, s.out_ch, s.kernel))
            .collect();
        Self { arch, layers }
    }

    /// He-normal weights, zero biases, from `seed`.
    pub fn initialized(arch: Architecture, seed: u64) -> Self {
        let mut net = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let fan_in = (layer.in_ch * layer.kernel * layer.kernel) as f64;
            let std = (2.0 / fan_in).sqrt();
            layer.weight.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(z * std)
            });
        }
        net
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv::param_count).sum()
    }

    fn enc_index(&self, l: usize) -> usize {
        l
    }

    fn bottleneck_index(&self) -> usize {
        self.arch.depth
    }

    fn dec_index(&self, l: usize) -> usize {
        self.arch.depth + self.arch.depth - l
    }

    fn out_index(&self) -> usize {
        2 * self.arch.depth + 1
    }

    fn run(conv: &Conv<T>, x: Array3<T>, activate: bool) -> Step<T> {
        let input_shape = x.dim();
        let (mut output, cols) = conv.forward(&x);
        if activate {
            relu(&mut output);
        }
        Step {
            cols,
            input_shape,
            output,
        }
    }

    fn forward_cached(&self, x: &Array2<T>) -> Cache<T> {
        let d = self.arch.depth;
        let (h, w) = x.dim();
        let mut cur = x.clone().into_shape_with_order((1, h, w)).expect("single channel");
        let mut enc = Vec::with_capacity(d);
        let mut pool_args = Vec::with_capacity(d);
        for l in 0..d {
            let step = Self::run(&self.layers[self.enc_index(l)], cur, true);
            cur = match self.arch.variant {
                Variant::N2v => {
                    let (p, arg) = max_pool(&step.output);
                    pool_args.push(arg);
                    p
                }
                Variant::N2v2 => {
                    pool_args.push(Vec::new());
                    blur_pool(&step.output)
                }
            };
            enc.push(step);
        }
        let bottleneck = Self::run(&self.layers[self.bottleneck_index()], cur, true);
        let mut dec: Vec<Option<Step<T>>> = (0..d).map(|_| None).collect();
        let mut prev = &bottleneck.output;
        for l in (0..d).rev() {
            let up = upsample(prev);
            let input = if self.arch.has_skip(l) {
                concat(&up, &enc[l].output)
            } else {
                up
            };
            dec[l] = Some(Self::run(&self.layers[self.dec_index(l)], input, true));
            prev = &dec[l].as_ref().expect("just set").output;
        }
        let out = Self::run(&self.layers[self.out_index()], prev.clone(), false);
        Cache {
            enc,
            pool_args,
            bottleneck,
            dec,
            out,
        }
    }

    /// Output for one single-channel input whose sides are multiples of
    /// `2^depth`.
    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let c = self.forward_cached(x);
        c.out.output.index_axis_move(Axis(0), 0)
    }

    fn backward(&self, cache: &Cache<T>, d_out: Array2<T>) -> Gradients<T> {
        let d = self.arch.depth;
        let mut grads: Gradients<T> = self.layers.iter().map(ConvGrad::zeros_like).collect();
        let (h, w) = d_out.dim();
        let d_out = d_out.into_shape_with_order((1, h, w)).expect("single channel");

        let oi = self.out_index();
        let mut g = self.layers[oi].backward(&cache.out.cols, &d_out, &mut grads[oi], cache.out.input_shape);

        let mut skip_grads: Vec<Option<Array3<T>>> = (0..d).map(|_| None).collect();
        for l in 0..d {
            let step = cache.dec[l].as_ref().expect("decoder cache");
            relu_backward(&step.output, &mut g);
            let di = self.dec_index(l);
            let g_in = self.layers[di].backward(&step.cols, &g, &mut grads[di], step.input_shape);
            let up_ch = if self.arch.has_skip(l) {
                let up_ch = step.input_shape.0 - cache.enc[l].output.dim().0;
                skip_grads[l] = Some(g_in.slice(s![up_ch.., .., ..]).to_owned());
                up_ch
            } else {
                step.input_shape.0
            };
            g = upsample_backward(&g_in.slice(s![..up_ch, .., ..]).to_owned());
        }

        relu_backward(&cache.bottleneck.output, &mut g);
        let bi = self.bottleneck_index();
        g = self.layers[bi].backward(&cache.bottleneck.cols, &g, &mut grads[bi], cache.bottleneck.input_shape);

        for l in (0..d).rev() {
            let step = &cache.enc[l];
            let shape = step.output.dim();
            g = match self.arch.variant {
                Variant::N2v => max_pool_backward(&g, &cache.pool_args[l], shape),
                Variant::N2v2 => blur_pool_backward(&g, shape),
            };
            if let Some(sg) = skip_grads[l].take() {
                g += &sg;
            }
            relu_backward(&step.output, &mut g);
            let ei = self.enc_index(l);
            g = self.layers[ei].backward(&step.cols, &g, &mut grads[ei], step.input_shape);
        }
        grads
    }

    /// Masked squared error `scale·Σ (out[c] − target)²` over `coords` and its
    /// parameter gradients. Only masked coordinates contribute.
    pub fn masked_loss_and_grad(
        &self,
        input: &Array2<T>,
        coords: &[(usize, usize)],
        targets: &[T],
        scale: T,
    ) -> (f64, Gradients<T>) {
        let cache = self.forward_cached(input);
        let out = cache.out.output.index_axis(Axis(0), 0);
        let mut d_out = Array2::<T>::zeros(out.dim());
        let mut loss = 0.0;
        for (&(r, c), &t) in coords.iter().zip(targets) {
            let e = out[[r, c]] - t;
            loss += (e * e * scale).as_f64();
            d_out[[r, c]] += T::of(2.0) * e * scale;
        }
        let grads = self.backward(&cache, d_out);
        (loss, grads)
    }

    /// Masked loss without gradients.
    pub fn masked_loss(&self, input: &Array2<T>, coords: &[(usize, usize)], targets: &[T], scale: T) -> f64 {
        let out = self.forward(input);
        coords
            .iter()
            .zip(targets)
            .map(|(&(r, c), &t)| {
                let e = out[[r, c]] - t;
                (e * e * scale).as_f64()
            })
            .sum()
    }

    /// Converts parameters to another scalar type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch,
            layers: self
                .layers
                .iter()
                .map(|l| Conv {
                    name: l.name.clone(),
                    in_ch: l.in_ch,
                    out_ch: l.out_ch,
                    kernel: l.kernel,
                    weight: l.weight.mapv(|v| U::of(v.as_f64())),
                    bias: l.bias.mapv(|v| U::of(v.as_f64())),
                })
                .collect(),
        }
    }
}
