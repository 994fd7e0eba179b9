use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, Real};
use crate::error::{Error, Result};

/// `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    /// Uniform weights with the Glorot limit, zero bias.
    pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((fan_in, fan_out), |_| T::of(rng.gen_range(-limit..limit))),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>, grad: &mut Linear<T>) -> Array2<T> {
        grad.weight += &x.t().dot(dy);
        grad.bias += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.weight.t())
    }

    fn shape(&self) -> (usize, usize) {
        self.weight.dim()
    }
}

/// Two-layer map with SiLU between, used for the step and lead-time branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    /// Conditioning to the six modulation vectors; zero at initialization.
    pub ada: Linear<T>,
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub ada: Linear<T>,
    pub out: Linear<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub patch: Linear<T>,
    pub time: Mlp<T>,
    pub lead: Mlp<T>,
    pub blocks: Vec<Block<T>>,
    pub head: Head<T>,
}

impl<T: Real> Params<T> {
    /// adaLN-Zero initialization: Glorot-uniform linears, with every
    /// modulation map and the output projection exactly zero.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f, p) = (cfg.width, cfg.freq_dim, cfg.patch);
        let patch = Linear::xavier(p * p * cfg.in_channels, d, &mut rng);
        let mlp = |rng: &mut ChaCha8Rng| Mlp { fc1: Linear::xavier(f, d, rng), fc2: Linear::xavier(d, d, rng) };
        let time = mlp(&mut rng);
        let lead = mlp(&mut rng);
        let blocks = (0..cfg.depth)
            .map(|_| Block {
                ada: Linear::zeros(d, 6 * d),
                qkv: Linear::xavier(d, 3 * d, &mut rng),
                proj: Linear::xavier(d, d, &mut rng),
                fc1: Linear::xavier(d, cfg.mlp_ratio * d, &mut rng),
                fc2: Linear::xavier(cfg.mlp_ratio * d, d, &mut rng),
            })
            .collect();
        let head = Head { ada: Linear::zeros(d, 2 * d), out: Linear::zeros(d, p * p * cfg.out_channels) };
        Ok(Self { patch, time, lead, blocks, head })
    }

    /// Every linear layer with its dotted name, in a fixed order.
    pub fn linears(&self) -> Vec<(String, &Linear<T>)> {
        let mut out = vec![
            ("patch".to_string(), &self.patch),
            ("time.fc1".to_string(), &self.time.fc1),
            ("time.fc2".to_string(), &self.time.fc2),
            ("lead.fc1".to_string(), &self.lead.fc1),
            ("lead.fc2".to_string(), &self.lead.fc2),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, l) in [("ada", &b.ada), ("qkv", &b.qkv), ("proj", &b.proj), ("fc1", &b.fc1), ("fc2", &b.fc2)] {
                out.push((format!("blocks.{i}.{n}"), l));
            }
        }
        out.push(("head.ada".to_string(), &self.head.ada));
        out.push(("head.out".to_string(), &self.head.out));
        out
    }

    pub fn linears_mut(&mut self) -> Vec<&mut Linear<T>> {
        let mut out =
            vec![&mut self.patch, &mut self.time.fc1, &mut self.time.fc2, &mut self.lead.fc1, &mut self.lead.fc2];
        for b in &mut self.blocks {
            out.extend([&mut b.ada, &mut b.qkv, &mut b.proj, &mut b.fc1, &mut b.fc2]);
        }
        out.push(&mut self.head.ada);
        out.push(&mut self.head.out);
        out
    }

    /// Named tensors (`<layer>.weight`, `<layer>.bias`) with their shapes.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.linears()
            .into_iter()
            .flat_map(|(n, l)| {
                let (i, o) = l.shape();
                [(format!("{n}.weight"), vec![i, o]), (format!("{n}.bias"), vec![o])]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.linears().iter().map(|(_, l)| l.weight.len() + l.bias.len()).sum()
    }

    /// All values in [`Params::tensor_shapes`] order, row-major.
    pub fn to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, l) in self.linears() {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn assign(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!("{} values for {} parameters", values.len(), self.num_params())));
        }
        let mut it = values.iter();
        for l in self.linears_mut() {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| T::zero())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut out = self.clone();
        for l in out.linears_mut() {
            l.weight.mapv_inplace(&f);
            l.bias.mapv_inplace(&f);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let lin =
            |l: &Linear<T>| Linear { weight: l.weight.mapv(|v| U::of(v.f64())), bias: l.bias.mapv(|v| U::of(v.f64())) };
        let mlp = |m: &Mlp<T>| Mlp { fc1: lin(&m.fc1), fc2: lin(&m.fc2) };
        Params {
            patch: lin(&self.patch),
            time: mlp(&self.time),
            lead: mlp(&self.lead),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    ada: lin(&b.ada),
                    qkv: lin(&b.qkv),
                    proj: lin(&b.proj),
                    fc1: lin(&b.fc1),
                    fc2: lin(&b.fc2),
                })
                .collect(),
            head: Head { ada: lin(&self.head.ada), out: lin(&self.head.out) },
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.linears().iter().flat_map(|(_, l)| l.weight.iter().chain(l.bias.iter())).map(|v| v.f64() * v.f64()).sum()
    }
}
