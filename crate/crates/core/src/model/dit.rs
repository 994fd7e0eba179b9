use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::layers::{
    crop, gelu, gelu_grad, layer_norm, layer_norm_backward, modulate, modulate_backward, pad, patchify, segment, silu,
    silu_grad, sincos_pos_embed, softmax_rows, softmax_rows_backward, timestep_embedding, unpatchify,
};
use super::params::{Linear, Mlp, Params};
use super::{ModelConfig, Real};
use crate::diffusion::NoisePredictor;
use crate::error::{Error, Result};
use crate::fields::{concat_channels, ChannelStack};

/// Model configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Dit<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

struct MlpCache<T> {
    input: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

struct BlockCache<T> {
    mods: Array2<T>,
    xhat1: Array2<T>,
    rstd1: Array1<T>,
    m1: Array2<T>,
    qkv: Array2<T>,
    probs: Vec<Array2<T>>,
    attn: Array2<T>,
    a: Array2<T>,
    xhat2: Array2<T>,
    rstd2: Array1<T>,
    m2: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
    g: Array2<T>,
}

struct SampleCache<T> {
    dims: (usize, usize),
    padded: (usize, usize),
    patches: Array2<T>,
    time: MlpCache<T>,
    lead: Option<MlpCache<T>>,
    c: Array2<T>,
    cs: Array2<T>,
    blocks: Vec<BlockCache<T>>,
    head_mods: Array2<T>,
    xhat: Array2<T>,
    rstd: Array1<T>,
    hm: Array2<T>,
}

/// Intermediate values of recorded forward passes, one entry per sample, in
/// call order.
pub struct Tape<T> {
    samples: Vec<SampleCache<T>>,
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Self { samples: Vec::new() }
    }
}

impl<T> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

fn row<T: Real>(v: &[f64]) -> Array2<T> {
    Array2::from_shape_fn((1, v.len()), |(_, j)| T::of(v[j]))
}

fn mlp_forward<T: Real>(m: &Mlp<T>, input: Array2<T>) -> (Array2<T>, MlpCache<T>) {
    let pre = m.fc1.forward(&input);
    let act = pre.mapv(silu);
    let out = m.fc2.forward(&act);
    (out, MlpCache { input, pre, act })
}

fn mlp_backward<T: Real>(m: &Mlp<T>, c: &MlpCache<T>, dout: &Array2<T>, g: &mut Mlp<T>) {
    let dact = m.fc2.backward(&c.act, dout, &mut g.fc2);
    let dpre = dact * &c.pre.mapv(silu_grad);
    m.fc1.backward(&c.input, &dpre, &mut g.fc1);
}

impl<T: Real> Dit<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = Params::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params<T>) -> Result<Self> {
        config.validate()?;
        let expect = Params::<T>::init(&config, 0)?.tensor_shapes();
        if params.tensor_shapes() != expect {
            return Err(Error::ShapeMismatch("parameter shapes do not match the model config".into()));
        }
        Ok(Self { config, params })
    }

    /// Step and lead-time conditioning vector; the lead-time branch
    /// contributes nothing when the lead time is absent.
    pub fn conditioning(&self, t: usize, lead_time: Option<f64>) -> Array1<T> {
        let (c, _, _) = self.embed(t, lead_time);
        c.row(0).to_owned()
    }

    fn embed(&self, t: usize, lead_time: Option<f64>) -> (Array2<T>, MlpCache<T>, Option<MlpCache<T>>) {
        let f = self.config.freq_dim;
        let (mut c, tc) = mlp_forward(&self.params.time, row(&timestep_embedding(t as f64, f)));
        let lc = lead_time.map(|lt| {
            let (lo, lc) = mlp_forward(&self.params.lead, row(&timestep_embedding(lt, f)));
            c += &lo;
            lc
        });
        (c, tc, lc)
    }

    /// Noise estimate for one sample. `input` holds `[condition, y_t]`
    /// channel-major on an `nx x ny` grid; the result holds the target
    /// channels on the same grid.
    pub fn forward(
        &self,
        input: &[T],
        nx: usize,
        ny: usize,
        t: usize,
        lead_time: Option<f64>,
        tape: Option<&mut Tape<T>>,
    ) -> Result<Vec<T>> {
        let cfg = &self.config;
        let (cin, cout, p, d) = (cfg.in_channels, cfg.out_channels, cfg.patch, cfg.width);
        if input.len() != cin * nx * ny {
            return Err(Error::ShapeMismatch(format!(
                "model input has {} values, expected {cin} channels of {nx}x{ny}",
                input.len()
            )));
        }
        if t == 0 {
            return Err(Error::StepOutOfRange { t, steps: 0 });
        }
        let (nxp, nyp) = cfg.padded_dims(nx, ny)?;
        let patches = patchify(&pad(input, cin, nx, ny, nxp, nyp), cin, nxp, nyp, p);

        let mut x = self.params.patch.forward(&patches);
        if cfg.positional {
            x += &sincos_pos_embed(d, nxp / p, nyp / p).mapv(T::of);
        }
        let (c, time, lead) = self.embed(t, lead_time);
        let cs = c.mapv(silu);

        let record = tape.is_some();
        let mut caches = Vec::new();
        for b in &self.params.blocks {
            let (next, cache) = self.block_forward(b, x, &cs);
            x = next;
            if record {
                caches.push(cache);
            }
        }

        let head_mods = self.params.head.ada.forward(&cs);
        let (xhat, rstd) = layer_norm(&x);
        let hm = modulate(&xhat, &segment(&head_mods, 0, d), &segment(&head_mods, 1, d));
        let out = self.params.head.out.forward(&hm);
        let field = unpatchify(out.view(), cout, nxp, nyp, p);

        if let Some(tape) = tape {
            tape.samples.push(SampleCache {
                dims: (nx, ny),
                padded: (nxp, nyp),
                patches,
                time,
                lead,
                c,
                cs,
                blocks: caches,
                head_mods,
                xhat,
                rstd,
                hm,
            });
        }
        Ok(crop(&field, cout, nxp, nyp, nx, ny))
    }

    fn block_forward(&self, b: &super::params::Block<T>, x: Array2<T>, cs: &Array2<T>) -> (Array2<T>, BlockCache<T>) {
        let d = self.config.width;
        let (heads, dh) = (self.config.heads, self.config.head_dim());
        let mods = b.ada.forward(cs);
        let m = |i| segment(&mods, i, d);

        let (xhat1, rstd1) = layer_norm(&x);
        let m1 = modulate(&xhat1, &m(0), &m(1));
        let qkv = b.qkv.forward(&m1);
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut probs = Vec::with_capacity(heads);
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
            let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
            let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let mut sc = q.dot(&k.t()) * scale;
            softmax_rows(&mut sc);
            outs.push(sc.dot(&v));
            probs.push(sc);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let attn = concatenate(Axis(1), &views).expect("head outputs share rows");
        let a = b.proj.forward(&attn);
        let x1 = &x + &(&a * &m(2));

        let (xhat2, rstd2) = layer_norm(&x1);
        let m2 = modulate(&xhat2, &m(3), &m(4));
        let pre = b.fc1.forward(&m2);
        let act = pre.mapv(gelu);
        let g = b.fc2.forward(&act);
        let x2 = &x1 + &(&g * &m(5));
        (x2, BlockCache { mods, xhat1, rstd1, m1, qkv, probs, attn, a, xhat2, rstd2, m2, pre, act, g })
    }

    /// Reverse pass over every recorded sample. `d_outputs[i]` is the loss
    /// gradient with respect to the `i`-th recorded output. Returns the
    /// summed parameter gradients.
    pub fn backward(&self, tape: &Tape<T>, d_outputs: &[Vec<T>]) -> Result<Params<T>> {
        if tape.is_empty() {
            return Err(Error::BackwardWithoutForward);
        }
        if d_outputs.len() != tape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} output gradients for {} recorded samples",
                d_outputs.len(),
                tape.len()
            )));
        }
        let mut grads = self.params.zeros_like();
        for (cache, dy) in tape.samples.iter().zip(d_outputs) {
            self.backward_sample(cache, dy, &mut grads)?;
        }
        Ok(grads)
    }

    fn backward_sample(&self, sc: &SampleCache<T>, dy: &[T], g: &mut Params<T>) -> Result<()> {
        let cfg = &self.config;
        let (cout, p, d) = (cfg.out_channels, cfg.patch, cfg.width);
        let ((nx, ny), (nxp, nyp)) = (sc.dims, sc.padded);
        if dy.len() != cout * nx * ny {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} values, expected {}",
                dy.len(),
                cout * nx * ny
            )));
        }
        let dtok = patchify(&pad(dy, cout, nx, ny, nxp, nyp), cout, nxp, nyp, p);
        let prm = &self.params;

        let dhm = prm.head.out.backward(&sc.hm, &dtok, &mut g.head.out);
        let scale = segment(&sc.head_mods, 1, d);
        let (dxhat, dshift, dscale) = modulate_backward(&dhm, &sc.xhat, &scale);
        let dmods = concatenate(Axis(0), &[dshift.view(), dscale.view()]).unwrap().insert_axis(Axis(0));
        let mut dcs = prm.head.ada.backward(&sc.cs, &dmods, &mut g.head.ada);
        let mut dx = layer_norm_backward(&dxhat, &sc.xhat, &sc.rstd);

        for ((b, gb), bc) in prm.blocks.iter().zip(g.blocks.iter_mut()).zip(&sc.blocks).rev() {
            dx = self.block_backward(b, gb, bc, &sc.cs, dx, &mut dcs);
        }

        prm.patch.backward(&sc.patches, &dx, &mut g.patch);
        let dc = dcs * &sc.c.mapv(silu_grad);
        mlp_backward(&prm.time, &sc.time, &dc, &mut g.time);
        if let Some(lc) = &sc.lead {
            mlp_backward(&prm.lead, lc, &dc, &mut g.lead);
        }
        Ok(())
    }

    fn block_backward(
        &self,
        b: &super::params::Block<T>,
        gb: &mut super::params::Block<T>,
        c: &BlockCache<T>,
        cs: &Array2<T>,
        dx2: Array2<T>,
        dcs: &mut Array2<T>,
    ) -> Array2<T> {
        let d = self.config.width;
        let (heads, dh) = (self.config.heads, self.config.head_dim());
        let m = |i| segment(&c.mods, i, d);

        // x2 = x1 + gate_m * g
        let gate_m = m(5);
        let dg = &dx2 * &gate_m;
        let dgate_m = (&dx2 * &c.g).sum_axis(Axis(0));
        let dact = b.fc2.backward(&c.act, &dg, &mut gb.fc2);
        let dpre = dact * &c.pre.mapv(gelu_grad);
        let dm2 = b.fc1.backward(&c.m2, &dpre, &mut gb.fc1);
        let (dxhat2, dshift_m, dscale_m) = modulate_backward(&dm2, &c.xhat2, &m(4));
        let dx1 = dx2 + layer_norm_backward(&dxhat2, &c.xhat2, &c.rstd2);

        // x1 = x + gate_a * a
        let gate_a = m(2);
        let da = &dx1 * &gate_a;
        let dgate_a = (&dx1 * &c.a).sum_axis(Axis(0));
        let dattn = b.proj.backward(&c.attn, &da, &mut gb.proj);

        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut dqkv = Array2::<T>::zeros(c.qkv.raw_dim());
        for h in 0..heads {
            let (qs, ks, vs) = (h * dh, d + h * dh, 2 * d + h * dh);
            let q = c.qkv.slice(s![.., qs..qs + dh]);
            let k = c.qkv.slice(s![.., ks..ks + dh]);
            let v = c.qkv.slice(s![.., vs..vs + dh]);
            let pr = &c.probs[h];
            let dout = dattn.slice(s![.., h * dh..(h + 1) * dh]);
            let dp = dout.dot(&v.t());
            dqkv.slice_mut(s![.., vs..vs + dh]).assign(&pr.t().dot(&dout));
            let ds = softmax_rows_backward(&dp, pr) * scale;
            dqkv.slice_mut(s![.., qs..qs + dh]).assign(&ds.dot(&k));
            dqkv.slice_mut(s![.., ks..ks + dh]).assign(&ds.t().dot(&q));
        }
        let dm1 = b.qkv.backward(&c.m1, &dqkv, &mut gb.qkv);
        let (dxhat1, dshift_a, dscale_a) = modulate_backward(&dm1, &c.xhat1, &m(1));
        let dx = dx1 + layer_norm_backward(&dxhat1, &c.xhat1, &c.rstd1);

        let parts =
            [dshift_a.view(), dscale_a.view(), dgate_a.view(), dshift_m.view(), dscale_m.view(), dgate_m.view()];
        let dmods = concatenate(Axis(0), &parts).unwrap().insert_axis(Axis(0));
        *dcs += &b.ada.backward(cs, &dmods, &mut gb.ada);
        dx
    }

    /// Noise estimate on channel stacks (`f64` at the boundary).
    pub fn predict_noise(
        &self,
        y_t: &ChannelStack,
        condition: &ChannelStack,
        t: usize,
        lead_time: Option<f64>,
    ) -> Result<ChannelStack> {
        if condition.len() != self.config.condition_channels() || y_t.len() != self.config.out_channels {
            return Err(Error::ChannelMismatch { expected: self.config.in_channels, got: condition.len() + y_t.len() });
        }
        let s = concat_channels(condition, y_t)?;
        let (nx, ny) = s.dims();
        let input: Vec<T> = s.to_flat().into_iter().map(T::of).collect();
        let out = self.forward(&input, nx, ny, t, lead_time, None)?;
        let out: Vec<f64> = out.into_iter().map(Real::f64).collect();
        ChannelStack::from_flat(nx, ny, y_t.domain(), y_t.names().to_vec(), &out)
    }
}

impl<T: Real> NoisePredictor for Dit<T> {
    fn predict_noise(
        &self,
        y_t: &ChannelStack,
        condition: &ChannelStack,
        t: usize,
        lead_time: Option<f64>,
    ) -> Result<ChannelStack> {
        Dit::predict_noise(self, y_t, condition, t, lead_time)
    }
}

impl<T: Real> Linear<T> {
    /// True when every weight and bias is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| *v == T::zero())
    }
}
