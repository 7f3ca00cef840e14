//! Feature generators, identity classifier and modality discriminator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::Exec;

use super::graph::{Bound, Graph, Var};
use super::params::{Group, ParameterSet};
use super::tensor::Tensor;
use super::NeuralError;

pub const COLOR_CHANNELS: usize = 3;
pub const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Event,
    Color,
}

/// Architecture of the generator / classifier / discriminator trio.
///
/// Each generator is three `conv 3x3 → ReLU → 2x2 max-pool` blocks followed
/// by a fully-connected projection to `embed_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub event_channels: usize,
    pub input_size: usize,
    pub conv_channels: [usize; 3],
    pub embed_dim: usize,
    pub num_classes: usize,
    pub disc_hidden: usize,
    pub weight_sharing: bool,
}

impl NetworkSpec {
    pub fn new(input_size: usize, num_classes: usize) -> Self {
        Self {
            event_channels: 3,
            input_size,
            conv_channels: [8, 16, 32],
            embed_dim: 64,
            num_classes,
            disc_hidden: 32,
            weight_sharing: true,
        }
    }

    pub fn check(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::InvalidSpec(m));
        if self.input_size == 0 || self.input_size % 8 != 0 {
            return bad(format!(
                "input_size {} must be a positive multiple of 8",
                self.input_size
            ));
        }
        if self.event_channels == 0
            || self.embed_dim == 0
            || self.num_classes == 0
            || self.disc_hidden == 0
            || self.conv_channels.contains(&0)
        {
            return bad("all layer widths must be positive".into());
        }
        if self.weight_sharing && self.event_channels != COLOR_CHANNELS {
            return bad(format!(
                "weight sharing needs {COLOR_CHANNELS} event channels, got {}",
                self.event_channels
            ));
        }
        Ok(())
    }

    pub fn input_channels(&self, modality: Modality) -> usize {
        match modality {
            Modality::Event => self.event_channels,
            Modality::Color => COLOR_CHANNELS,
        }
    }

    fn flat_features(&self) -> usize {
        let s = self.input_size / 8;
        self.conv_channels[2] * s * s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct GeneratorLayout {
    convs: [Dense; 3],
    fc: Dense,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    event: GeneratorLayout,
    color: GeneratorLayout,
    classifier: Dense,
    disc: [Dense; 2],
}

fn uniform_init(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
}

/// Network spec with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    params: ParameterSet,
    layout: Layout,
}

impl Model {
    /// Small uniform weights scaled by fan-in, zero biases. Values are
    /// representable as `f32`, so a fresh model saves losslessly.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self, NeuralError> {
        spec.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        let dense = |params: &mut ParameterSet,
                         rng: &mut ChaCha8Rng,
                         name: &str,
                         group: Group,
                         wshape: Vec<usize>,
                         fan_in: usize| {
            let out = wshape[0];
            params.push(format!("{name}.w"), group, uniform_init(rng, wshape, fan_in));
            params.push(format!("{name}.b"), group, Tensor::zeros(vec![out]));
        };
        let prefixes: &[(&str, Modality)] = if spec.weight_sharing {
            &[("gen", Modality::Color)]
        } else {
            &[("gen_e", Modality::Event), ("gen_r", Modality::Color)]
        };
        for &(prefix, modality) in prefixes {
            let mut cin = spec.input_channels(modality);
            for (i, &cout) in spec.conv_channels.iter().enumerate() {
                dense(
                    &mut params,
                    &mut rng,
                    &format!("{prefix}.conv{}", i + 1),
                    Group::Generator,
                    vec![cout, cin, KERNEL, KERNEL],
                    cin * KERNEL * KERNEL,
                );
                cin = cout;
            }
            let flat = spec.flat_features();
            dense(
                &mut params,
                &mut rng,
                &format!("{prefix}.fc"),
                Group::Generator,
                vec![spec.embed_dim, flat],
                flat,
            );
        }
        dense(
            &mut params,
            &mut rng,
            "cls",
            Group::Classifier,
            vec![spec.num_classes, spec.embed_dim],
            spec.embed_dim,
        );
        dense(
            &mut params,
            &mut rng,
            "disc.fc1",
            Group::Discriminator,
            vec![spec.disc_hidden, spec.embed_dim],
            spec.embed_dim,
        );
        dense(
            &mut params,
            &mut rng,
            "disc.fc2",
            Group::Discriminator,
            vec![1, spec.disc_hidden],
            spec.disc_hidden,
        );
        params.round_to_f32();
        Self::from_parts(spec, params)
    }

    /// Attaches parameters to a spec, checking names and shapes.
    pub fn from_parts(spec: NetworkSpec, params: ParameterSet) -> Result<Self, NeuralError> {
        spec.check()?;
        let find = |name: &str, shape: &[usize]| -> Result<usize, NeuralError> {
            let i = params
                .index_of(name)
                .ok_or_else(|| NeuralError::ShapeMismatch(format!("missing parameter `{name}`")))?;
            let got = params.get(i).value.shape();
            if got != shape {
                return Err(NeuralError::ShapeMismatch(format!(
                    "parameter `{name}` has shape {got:?}, expected {shape:?}"
                )));
            }
            Ok(i)
        };
        let dense = |name: &str, wshape: Vec<usize>| -> Result<Dense, NeuralError> {
            let out = wshape[0];
            Ok(Dense {
                w: find(&format!("{name}.w"), &wshape)?,
                b: find(&format!("{name}.b"), &[out])?,
            })
        };
        let generator = |prefix: &str, modality: Modality| -> Result<GeneratorLayout, NeuralError> {
            let c = spec.conv_channels;
            let cin = spec.input_channels(modality);
            Ok(GeneratorLayout {
                convs: [
                    dense(&format!("{prefix}.conv1"), vec![c[0], cin, KERNEL, KERNEL])?,
                    dense(&format!("{prefix}.conv2"), vec![c[1], c[0], KERNEL, KERNEL])?,
                    dense(&format!("{prefix}.conv3"), vec![c[2], c[1], KERNEL, KERNEL])?,
                ],
                fc: dense(
                    &format!("{prefix}.fc"),
                    vec![spec.embed_dim, spec.flat_features()],
                )?,
            })
        };
        let (event, color) = if spec.weight_sharing {
            let g = generator("gen", Modality::Color)?;
            (g.clone(), g)
        } else {
            (
                generator("gen_e", Modality::Event)?,
                generator("gen_r", Modality::Color)?,
            )
        };
        let layout = Layout {
            event,
            color,
            classifier: dense("cls", vec![spec.num_classes, spec.embed_dim])?,
            disc: [
                dense("disc.fc1", vec![spec.disc_hidden, spec.embed_dim])?,
                dense("disc.fc2", vec![1, spec.disc_hidden])?,
            ],
        };
        Ok(Self {
            spec,
            params,
            layout,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterSet {
        self.params
    }

    /// Checks that `input` is `[n, channels, size, size]` for `modality`.
    pub fn check_input(&self, input: &Tensor, modality: Modality) -> Result<(), NeuralError> {
        let s = self.spec.input_size;
        let c = self.spec.input_channels(modality);
        match input.shape() {
            [n, ci, h, w] if *n >= 1 && *ci == c && *h == s && *w == s => Ok(()),
            other => Err(NeuralError::ShapeMismatch(format!(
                "{modality:?} input must be [n, {c}, {s}, {s}], got {other:?}"
            ))),
        }
    }

    /// Records the generator for `modality` on `g`, returning `[n, embed_dim]`.
    pub fn generator(&self, g: &mut Graph, bound: &Bound, x: Var, modality: Modality) -> Var {
        let layout = match modality {
            Modality::Event => &self.layout.event,
            Modality::Color => &self.layout.color,
        };
        let mut h = x;
        for conv in &layout.convs {
            h = g.conv2d(h, bound.var(conv.w), bound.var(conv.b));
            h = g.relu(h);
            h = g.max_pool2(h);
        }
        let n = g.value(h).shape()[0];
        h = g.reshape(h, vec![n, self.spec.flat_features()]);
        g.linear(h, bound.var(layout.fc.w), bound.var(layout.fc.b))
    }

    /// Class probabilities `[n, num_classes]`.
    pub fn classifier(&self, g: &mut Graph, bound: &Bound, f: Var) -> Var {
        let c = &self.layout.classifier;
        let logits = g.linear(f, bound.var(c.w), bound.var(c.b));
        g.softmax(logits)
    }

    /// Discriminator outputs `[n]` in `(0, 1)`.
    pub fn discriminator(&self, g: &mut Graph, bound: &Bound, f: Var) -> Var {
        let z = self.discriminator_logits(g, bound, f);
        g.sigmoid(z)
    }

    /// Discriminator pre-activations `[n]`.
    pub fn discriminator_logits(&self, g: &mut Graph, bound: &Bound, f: Var) -> Var {
        let [l1, l2] = &self.layout.disc;
        let h = g.linear(f, bound.var(l1.w), bound.var(l1.b));
        let h = g.relu(h);
        let out = g.linear(h, bound.var(l2.w), bound.var(l2.b));
        let n = g.value(out).shape()[0];
        g.reshape(out, vec![n])
    }

    /// Embeddings `[n, embed_dim]` for a batch, without recording gradients.
    pub fn forward_generator(
        &self,
        input: &Tensor,
        modality: Modality,
        exec: Exec,
    ) -> Result<Tensor, NeuralError> {
        self.check_input(input, modality)?;
        let mut g = Graph::with_exec(exec);
        let bound = g.bind_with(&self.params, |_| false);
        let x = g.input(input.clone());
        let f = self.generator(&mut g, &bound, x, modality);
        Ok(g.value(f).clone())
    }

    /// Embedding of a single `[channels, size, size]` image.
    pub fn embed(&self, image: &[f64], modality: Modality) -> Result<Embedding, NeuralError> {
        let s = self.spec.input_size;
        let c = self.spec.input_channels(modality);
        if image.len() != c * s * s {
            return Err(NeuralError::ShapeMismatch(format!(
                "{modality:?} image has {} values, expected {}",
                image.len(),
                c * s * s
            )));
        }
        let t = Tensor::new(vec![1, c, s, s], image.to_vec());
        Ok(Embedding(self.forward_generator(&t, modality, Exec::Seq)?.into_data()))
    }

    pub fn forward_classifier(&self, f: &Tensor) -> Result<Tensor, NeuralError> {
        self.check_features(f)?;
        let mut g = Graph::with_exec(Exec::Seq);
        let bound = g.bind_with(&self.params, |_| false);
        let x = g.input(f.clone());
        let p = self.classifier(&mut g, &bound, x);
        Ok(g.value(p).clone())
    }

    pub fn forward_discriminator(&self, f: &Tensor) -> Result<Vec<f64>, NeuralError> {
        self.check_features(f)?;
        let mut g = Graph::with_exec(Exec::Seq);
        let bound = g.bind_with(&self.params, |_| false);
        let x = g.input(f.clone());
        let d = self.discriminator(&mut g, &bound, x);
        Ok(g.value(d).data().to_vec())
    }

    fn check_features(&self, f: &Tensor) -> Result<(), NeuralError> {
        match f.shape() {
            [n, d] if *n >= 1 && *d == self.spec.embed_dim && f.is_finite() => Ok(()),
            s => Err(NeuralError::ShapeMismatch(format!(
                "features must be finite [n, {}], got {s:?}",
                self.spec.embed_dim
            ))),
        }
    }
}

/// A point in the shared embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
