use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::head::{activate, loss_and_grad, Target};
use super::layers::{
    apply_mask, dropout_mask, gaussian, maxpool_backward, maxpool_forward, relu_backward,
    relu_forward, Conv, Linear,
};
use super::spec::{shape_plan, HeadSpec, LayerSpec, NetworkSpec};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv<T>),
    Relu,
    MaxPool,
    Fc(Linear<T>),
    Dropout(f64),
}

/// A built network: hidden stack plus a linear head producing logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
    head: Linear<T>,
}

/// Per-layer state kept by a training-mode forward pass.
enum Aux<T> {
    None,
    Pool(Vec<u32>),
    Mask(Vec<T>),
}

/// Activations of a training-mode forward pass, consumed by `backward`.
pub struct Trace<T> {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    pub logits: Tensor<T>,
}

impl<T: Real> Trace<T> {
    /// ReLU on/off states and pooling choices. Two passes with equal patterns
    /// lie on the same linear piece of the network.
    pub fn activation_pattern(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for (i, aux) in self.aux.iter().enumerate() {
            match aux {
                Aux::Pool(arg) => out.extend(arg),
                _ => out.extend(self.acts[i + 1].data().iter().map(|&v| (v > T::zero()) as u32)),
            }
        }
        out
    }
}

/// Gradients in the order of [`Network::param_names`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T>(pub Vec<Vec<T>>);

impl<T: Real> Network<T> {
    /// He-initialised weights, zero biases.
    pub fn new(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let plan = shape_plan(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = spec.input.to_vec();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (layer, (_, shape)) in spec.layers.iter().zip(&plan) {
            layers.push(match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                } => Layer::Conv(Conv::new(prev[0], out_channels, kernel, &mut rng)),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool => Layer::MaxPool,
                LayerSpec::Fc { units } => {
                    Layer::Fc(Linear::new(prev.iter().product(), units, &mut rng))
                }
                LayerSpec::Dropout { rate } => Layer::Dropout(rate),
            });
            prev = shape.clone();
        }
        let head = Linear::new(prev.iter().product(), spec.head.outputs(), &mut rng);
        Ok(Network {
            spec: spec.clone(),
            layers,
            head,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn head_spec(&self) -> &HeadSpec {
        &self.spec.head
    }

    pub fn head(&self) -> &Linear<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Linear<T> {
        &mut self.head
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let (mut nc, mut nf) = (0, 0);
        for layer in &self.layers {
            match layer {
                Layer::Conv(_) => {
                    nc += 1;
                    names.push(format!("conv{nc}.weight"));
                    names.push(format!("conv{nc}.bias"));
                }
                Layer::Fc(_) => {
                    nf += 1;
                    names.push(format!("fc{nf}.weight"));
                    names.push(format!("fc{nf}.bias"));
                }
                _ => {}
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => out.extend([&c.weight[..], &c.bias[..]]),
                Layer::Fc(f) => out.extend([&f.weight[..], &f.bias[..]]),
                _ => {}
            }
        }
        out.extend([&self.head.weight[..], &self.head.bias[..]]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.weight);
                    out.push(&mut c.bias);
                }
                Layer::Fc(f) => {
                    out.push(&mut f.weight);
                    out.push(&mut f.bias);
                }
                _ => {}
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads(self.params().iter().map(|p| vec![T::zero(); p.len()]).collect())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape().len() != 4 || x.shape()[1..] != self.spec.input {
            return Err(Error::Shape(format!(
                "network expects batch x {:?} input, got {:?}",
                self.spec.input,
                x.shape()
            )));
        }
        x.ensure_finite("network input")
    }

    /// Inference-mode logits (dropout disabled).
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut a = x.clone();
        for layer in &self.layers {
            a = match layer {
                Layer::Conv(c) => c.forward(&a),
                Layer::Relu => relu_forward(&a),
                Layer::MaxPool => maxpool_forward(&a).0,
                Layer::Fc(f) => f.forward(&a),
                Layer::Dropout(_) => a,
            };
        }
        let out = self.head.forward(&a);
        out.ensure_finite("logits")?;
        Ok(out)
    }

    /// Inference-mode head outputs: probabilities for dict and charseq,
    /// logistic values for ngram. Shape `[batch, outputs]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let logits = self.logits(x)?;
        let n = logits.item_len();
        let mut data = Vec::with_capacity(logits.len());
        for b in 0..logits.batch() {
            data.extend(activate(&self.spec.head, logits.item(b)));
        }
        Tensor::from_vec(&[logits.batch(), n], data)
    }

    /// Training-mode forward pass; dropout masks are drawn from `rng`.
    /// `dropout` overrides every dropout layer's rate when set.
    pub fn forward_train<R: Rng>(
        &self,
        x: &Tensor<T>,
        dropout: Option<f64>,
        rng: &mut R,
    ) -> Result<Trace<T>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for layer in &self.layers {
            let a = acts.last().expect("input pushed");
            let (out, extra) = match layer {
                Layer::Conv(c) => (c.forward(a), Aux::None),
                Layer::Relu => (relu_forward(a), Aux::None),
                Layer::MaxPool => {
                    let (y, arg) = maxpool_forward(a);
                    (y, Aux::Pool(arg))
                }
                Layer::Fc(f) => (f.forward(a), Aux::None),
                Layer::Dropout(rate) => {
                    let rate = dropout.unwrap_or(*rate);
                    if rate > 0.0 {
                        let mask = dropout_mask(a.len(), rate, rng);
                        (apply_mask(a, &mask), Aux::Mask(mask))
                    } else {
                        (a.clone(), Aux::None)
                    }
                }
            };
            acts.push(out);
            aux.push(extra);
        }
        let logits = self.head.forward(acts.last().expect("non-empty"));
        logits.ensure_finite("logits")?;
        Ok(Trace { acts, aux, logits })
    }

    /// Back-propagates `dlogits` through a trace. Returns parameter gradients
    /// and the gradient with respect to the input batch.
    pub fn backward(&self, trace: &Trace<T>, dlogits: &Tensor<T>) -> Result<(Grads<T>, Tensor<T>)> {
        let mut grads = self.zero_grads();
        let n = grads.0.len();
        let (hw, hb) = grads.0.split_at_mut(n - 1);
        let mut g = self
            .head
            .backward(trace.acts.last().expect("non-empty"), dlogits, &mut hw[n - 2], &mut hb[0], true)
            .expect("dx requested");
        let mut slot = n - 2;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[i];
            g = match (layer, &trace.aux[i]) {
                (Layer::Conv(c), _) => {
                    slot -= 2;
                    let (w, b) = grads.0.split_at_mut(slot + 1);
                    c.backward(x, &g, &mut w[slot], &mut b[0], true).expect("dx requested")
                }
                (Layer::Fc(f), _) => {
                    slot -= 2;
                    let (w, b) = grads.0.split_at_mut(slot + 1);
                    f.backward(x, &g, &mut w[slot], &mut b[0], true).expect("dx requested")
                }
                (Layer::Relu, _) => relu_backward(&trace.acts[i + 1], &g),
                (Layer::MaxPool, Aux::Pool(arg)) => maxpool_backward(x.shape(), arg, &g),
                (Layer::Dropout(_), Aux::Mask(mask)) => apply_mask(&g, mask),
                (Layer::Dropout(_), _) => g,
                (Layer::MaxPool, _) => unreachable!("pool trace without indices"),
            };
        }
        for (name, gr) in self.param_names().iter().zip(&grads.0) {
            if !gr.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        Ok((grads, g))
    }

    /// Mean loss over a batch and its parameter and input gradients.
    pub fn loss_grads<R: Rng>(
        &self,
        x: &Tensor<T>,
        targets: &[Target],
        gram_weights: Option<&[f32]>,
        dropout: Option<f64>,
        rng: &mut R,
    ) -> Result<(f64, Grads<T>, Tensor<T>, Trace<T>)> {
        let trace = self.forward_train(x, dropout, rng)?;
        let (loss, dlogits) = self.head_loss(&trace.logits, targets, gram_weights)?;
        let (grads, dx) = self.backward(&trace, &dlogits)?;
        Ok((loss, grads, dx, trace))
    }

    /// Mean loss of `logits` against `targets` and the matching logit gradient.
    pub fn head_loss(
        &self,
        logits: &Tensor<T>,
        targets: &[Target],
        gram_weights: Option<&[f32]>,
    ) -> Result<(f64, Tensor<T>)> {
        let b = logits.batch();
        if targets.len() != b {
            return Err(Error::Shape(format!("{} targets for a batch of {b}", targets.len())));
        }
        let scale = T::from_f64(1.0 / b as f64);
        let mut dlogits = Tensor::zeros(logits.shape());
        let n = logits.item_len();
        let mut loss = 0.0;
        for (i, t) in targets.iter().enumerate() {
            let d = &mut dlogits.data_mut()[i * n..(i + 1) * n];
            loss += loss_and_grad(&self.spec.head, logits.item(i), t, gram_weights, d);
            for v in d.iter_mut() {
                *v *= scale;
            }
        }
        Ok((loss / b as f64, dlogits))
    }

    /// Grows a dict head to `classes` outputs. Existing rows and biases are
    /// copied verbatim; new rows are Gaussian with standard deviation
    /// `init_scale` and zero bias.
    pub fn expand_dict_head<R: Rng>(&mut self, classes: usize, init_scale: f64, rng: &mut R) -> Result<()> {
        let HeadSpec::Dict { classes: old } = self.spec.head else {
            return Err(Error::HeadMismatch {
                model: self.spec.head.name().into(),
                requested: "dict".into(),
            });
        };
        if classes < old {
            return Err(Error::Config(format!("cannot shrink dict head from {old} to {classes}")));
        }
        let extra = classes - old;
        self.head
            .weight
            .extend(gaussian::<T, _>(extra * self.head.inputs, init_scale, rng));
        self.head.bias.extend(std::iter::repeat_n(T::zero(), extra));
        self.head.outputs = classes;
        self.spec.head = HeadSpec::Dict { classes };
        Ok(())
    }

    /// Same network with every parameter converted to another scalar type.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect::<Vec<U>>();
        let lin = |l: &Linear<T>| Linear {
            inputs: l.inputs,
            outputs: l.outputs,
            weight: conv(&l.weight),
            bias: conv(&l.bias),
        };
        Network {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv(c) => Layer::Conv(Conv {
                        in_channels: c.in_channels,
                        out_channels: c.out_channels,
                        kernel: c.kernel,
                        weight: conv(&c.weight),
                        bias: conv(&c.bias),
                    }),
                    Layer::Relu => Layer::Relu,
                    Layer::MaxPool => Layer::MaxPool,
                    Layer::Fc(f) => Layer::Fc(lin(f)),
                    Layer::Dropout(r) => Layer::Dropout(*r),
                })
                .collect(),
            head: lin(&self.head),
        }
    }

    /// Replaces parameters in [`Network::param_names`] order.
    pub fn set_params(&mut self, values: Vec<Vec<T>>) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors for a network with {}",
                values.len(),
                slots.len()
            )));
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.len() != v.len() {
                return Err(Error::Shape(format!("parameter length {} != {}", v.len(), slot.len())));
            }
            **slot = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gram_weights, select_ngram_vocab};
    use crate::encode::{encode_charseq, encode_ngrams};
    use crate::net::spec::Widths;

    fn tiny(head: HeadSpec, dropout: f64) -> NetworkSpec {
        let mut layers = vec![
            LayerSpec::Conv {
                out_channels: 3,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            LayerSpec::Conv {
                out_channels: 4,
                kernel: 3,
            },
            LayerSpec::Relu,
            LayerSpec::Fc { units: 6 },
            LayerSpec::Relu,
        ];
        if dropout > 0.0 {
            layers.push(LayerSpec::Dropout { rate: dropout });
        }
        NetworkSpec::custom([1, 8, 20], layers, head)
    }

    #[test]
    fn zero_dict_head_is_uniform() {
        let mut net = Network::<f32>::new(&tiny(HeadSpec::Dict { classes: 7 }, 0.5), 3).unwrap();
        net.head_mut().weight.fill(0.0);
        let x = Tensor::from_vec(&[2, 1, 8, 20], (0..320).map(|i| (i % 11) as f32 - 5.0).collect()).unwrap();
        let p = net.forward(&x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-6));
    }

    #[test]
    fn wrong_input_shape_fails() {
        let net = Network::<f32>::new(&tiny(HeadSpec::CharSeq, 0.0), 0).unwrap();
        let x = Tensor::zeros(&[1, 1, 8, 21]);
        assert!(matches!(net.forward(&x), Err(Error::Shape(_))));
        let mut bad = Tensor::zeros(&[1, 1, 8, 20]);
        bad.data_mut()[3] = f32::NAN;
        assert!(matches!(net.forward(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn parameter_count_matches_spec_arithmetic() {
        let spec = NetworkSpec::base(
            Widths {
                conv: [4, 8, 8, 8],
                fc: 16,
            },
            HeadSpec::Dict { classes: 10 },
            0.5,
        );
        let net = Network::<f32>::new(&spec, 0).unwrap();
        assert_eq!(net.param_count(), spec.param_count().unwrap());
    }

    #[test]
    fn expansion_copies_old_rows() {
        let mut net = Network::<f64>::new(&tiny(HeadSpec::Dict { classes: 4 }, 0.0), 9).unwrap();
        let x = Tensor::from_vec(&[3, 1, 8, 20], (0..480).map(|i| ((i * 37) % 17) as f64 / 8.0 - 1.0).collect())
            .unwrap();
        let before = net.logits(&x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        net.expand_dict_head(9, 1e-2, &mut rng).unwrap();
        let after = net.logits(&x).unwrap();
        assert_eq!(after.shape(), &[3, 9]);
        for b in 0..3 {
            assert_eq!(&after.item(b)[..4], before.item(b));
        }
        assert!(net.expand_dict_head(2, 1e-2, &mut rng).is_err());
    }

    /// Central differences in f64 over every parameter tensor and the input.
    /// Error is measured per tensor as ||g - n|| / (||g|| + ||n||) so that
    /// individual near-zero entries do not dominate.
    fn gradient_check(head: HeadSpec, targets: Vec<Target>, weights: Option<Vec<f32>>, seed: u64) -> (usize, usize) {
        let spec = tiny(head, 0.5);
        let mut net = Network::<f64>::new(&spec, seed).unwrap();
        // move biases away from zero so ReLU kinks are not sat on
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for p in net.params_mut() {
            for v in p.iter_mut() {
                *v += gaussian::<f64, _>(1, 0.1, &mut rng)[0];
            }
        }
        let b = targets.len();
        let x = Tensor::from_vec(&[b, 1, 8, 20], gaussian(b * 160, 1.0, &mut rng)).unwrap();
        let w = weights.as_deref();
        let dropout_seed = seed + 17;
        let loss_at = |net: &Network<f64>, x: &Tensor<f64>| {
            let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
            let t = net.forward_train(x, None, &mut r).unwrap();
            (net.head_loss(&t.logits, &targets, w).unwrap().0, t.activation_pattern())
        };
        let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
        let (_, grads, dx, trace) = net.loss_grads(&x, &targets, w, None, &mut r).unwrap();
        let base = trace.activation_pattern();
        let h = 1e-3;
        let (mut checked, mut skipped) = (0, 0);
        let names = net.param_names();
        let mut compare = |what: &str, analytic: &[f64], numeric: Vec<Option<f64>>| {
            let (a, n): (Vec<f64>, Vec<f64>) = analytic
                .iter()
                .zip(&numeric)
                .filter_map(|(&a, n)| n.map(|n| (a, n)))
                .unzip();
            checked += a.len();
            skipped += analytic.len() - a.len();
            let rel = relative_error(&a, &n);
            assert!(rel < 1e-4, "{} seed {seed} {what}: relative error {rel}", head.name());
        };
        for (pi, name) in names.iter().enumerate() {
            let len = grads.0[pi].len();
            let mut num = vec![None; len];
            for (j, slot) in num.iter_mut().enumerate() {
                let orig = net.params()[pi][j];
                net.params_mut()[pi][j] = orig + h;
                let (up, ku) = loss_at(&net, &x);
                net.params_mut()[pi][j] = orig - h;
                let (down, kd) = loss_at(&net, &x);
                net.params_mut()[pi][j] = orig;
                if ku == base && kd == base {
                    *slot = Some((up - down) / (2.0 * h));
                }
            }
            compare(name, &grads.0[pi], num);
        }
        let mut num = vec![None; x.len()];
        for (j, slot) in num.iter_mut().enumerate() {
            let mut xp = x.clone();
            xp.data_mut()[j] += h;
            let mut xm = x.clone();
            xm.data_mut()[j] -= h;
            let ((up, ku), (down, kd)) = (loss_at(&net, &xp), loss_at(&net, &xm));
            if ku == base && kd == base {
                *slot = Some((up - down) / (2.0 * h));
            }
        }
        compare("input", dx.data(), num);
        (checked, skipped)
    }

    fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale < 1e-12 {
            diff
        } else {
            diff / scale
        }
    }

    #[test]
    fn gradients_match_finite_differences_all_heads() {
        let words = ["ab", "cab", "bad", "dab", "a", "bc"];
        let vocab = select_ngram_vocab(&words, 2, 1);
        let weights = gram_weights(&words, &vocab).unwrap().weights;
        let (mut checked, mut skipped) = (0, 0);
        let mut tally = |(c, s): (usize, usize)| {
            checked += c;
            skipped += s;
        };
        for seed in 0..3 {
            tally(gradient_check(
                HeadSpec::Dict { classes: 5 },
                vec![Target::Dict(1), Target::Dict(4)],
                None,
                seed,
            ));
            tally(gradient_check(
                HeadSpec::CharSeq,
                vec![
                    Target::CharSeq(encode_charseq("hi").unwrap()),
                    Target::CharSeq(encode_charseq("x9").unwrap()),
                ],
                None,
                seed,
            ));
            tally(gradient_check(
                HeadSpec::NGram { grams: vocab.len() },
                vec![
                    Target::NGram(encode_ngrams("cab", &vocab)),
                    Target::NGram(encode_ngrams("bc", &vocab)),
                ],
                Some(weights.clone()),
                seed,
            ));
        }
        assert!(skipped * 100 < 3 * checked, "{skipped} of {checked} coordinates straddle a kink");
    }
}
