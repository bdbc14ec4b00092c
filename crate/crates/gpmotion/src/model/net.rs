//! The CVAE motion network: pairwise encoder, TCN temporal regularizer, and
//! the conditioned decoder, together with parameter initialization.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Node, Padding, Parameter, Tape, Tensor};
use crate::deform::{downsample2, exponentiate_on_tape, smooth_stack_on_tape, GridSpec};
use crate::gp::{KernelSpec, TemporalKernel};

use super::{ModelConfig, ModelError};

/// All trainable state plus the fixed temporal prior.
pub struct MotionModel {
    pub(crate) config: ModelConfig,
    pub(crate) kernel_spec: KernelSpec,
    pub(crate) no_gp: bool,
    pub(crate) kernel: TemporalKernel,
    pub(crate) params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl MotionModel {
    /// Initializes parameters from the seeded stream: He-style normal fans
    /// for hidden layers, a small-scale velocity head so initial fields are
    /// near zero, zero biases. With `no_gp` the prior kernel is the identity
    /// (temporally independent baseline).
    pub fn init(
        config: ModelConfig,
        kernel_spec: KernelSpec,
        no_gp: bool,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let kernel = if no_gp {
            TemporalKernel::identity(config.t_lat)
        } else {
            TemporalKernel::build(&kernel_spec, config.t_lat)?
        };
        let mut params = Vec::new();
        let mut index = HashMap::new();
        let alpha = config.leaky_slope;
        let gain2 = 2.0 / (1.0 + alpha * alpha);

        let mut add = |name: String, shape: Vec<usize>, std: f64, rng: &mut dyn rand::RngCore| {
            let value = if std == 0.0 {
                Tensor::zeros(shape)
            } else {
                Tensor::from_fn(shape, |_| {
                    let v: f64 = rng.sample(StandardNormal);
                    v * std
                })
            };
            index.insert(name.clone(), params.len());
            params.push(Parameter::new(name, value));
        };

        let (h8, w8) = config.coarse_extents();
        let e = config.enc_channels;
        let dch = config.dec_channels;
        let g = config.gamma_dim();

        // encoder: strides (2,2,2,1), input = concatenated image pair
        let enc_in = [2, e[0], e[1], e[2]];
        for i in 0..4 {
            let fan = enc_in[i] * 9;
            add(format!("enc.conv{i}.weight"), vec![e[i], enc_in[i], 3, 3], (gain2 / fan as f64).sqrt(), rng);
            add(format!("enc.conv{i}.bias"), vec![e[i]], 0.0, rng);
        }
        let fc_in = e[3] * h8 * w8;
        add("enc.fc.weight".into(), vec![g, fc_in], (1.0 / fc_in as f64).sqrt(), rng);
        add("enc.fc.bias".into(), vec![g], 0.0, rng);

        // TCN: 1x1 entry, then per block a dilated 3-tap and a 1x1 projection
        add("tcn.init.weight".into(), vec![g, g, 1], (1.0 / g as f64).sqrt(), rng);
        add("tcn.init.bias".into(), vec![g], 0.0, rng);
        for (i, _) in config.tcn_dilations.iter().enumerate() {
            add(format!("tcn.block{i}.dilated.weight"), vec![g, g, 3], (gain2 / (3 * g) as f64).sqrt(), rng);
            add(format!("tcn.block{i}.dilated.bias"), vec![g], 0.0, rng);
            add(format!("tcn.block{i}.project.weight"), vec![g, g, 1], (1.0 / g as f64).sqrt(), rng);
            add(format!("tcn.block{i}.project.bias"), vec![g], 0.0, rng);
        }

        // decoder
        let dec_fc_out = dch[0] * h8 * w8;
        add("dec.fc.weight".into(), vec![dec_fc_out, config.d], (gain2 / config.d as f64).sqrt(), rng);
        add("dec.fc.bias".into(), vec![dec_fc_out], 0.0, rng);
        let dec_in = [dch[0] + 1, dch[0] + 1, dch[1] + 1];
        let dec_out = [dch[0], dch[1], dch[2]];
        for i in 0..3 {
            let fan = dec_in[i] * 9;
            add(
                format!("dec.deconv{i}.weight"),
                vec![dec_in[i], dec_out[i], 3, 3],
                (gain2 / fan as f64).sqrt(),
                rng,
            );
            add(format!("dec.deconv{i}.bias"), vec![dec_out[i]], 0.0, rng);
        }
        add("dec.conv3.weight".into(), vec![dch[3], dch[2] + 1, 3, 3], (gain2 / ((dch[2] + 1) * 9) as f64).sqrt(), rng);
        add("dec.conv3.bias".into(), vec![dch[3]], 0.0, rng);
        add("dec.out.weight".into(), vec![2, dch[3], 3, 3], 0.1 * (1.0 / (dch[3] * 9) as f64).sqrt(), rng);
        add("dec.out.bias".into(), vec![2], 0.0, rng);

        Ok(MotionModel { config, kernel_spec, no_gp, kernel, params, index })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kernel(&self) -> &TemporalKernel {
        &self.kernel
    }

    pub fn kernel_spec(&self) -> &KernelSpec {
        &self.kernel_spec
    }

    pub fn is_no_gp(&self) -> bool {
        self.no_gp
    }

    pub fn grid(&self, spacing: f64) -> GridSpec {
        GridSpec::new(self.config.height, self.config.width, spacing).expect("validated extents")
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub(crate) fn param_index(&self, name: &str) -> usize {
        *self.index.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Replaces parameter values by name (checkpoint loading).
    pub(crate) fn set_param(&mut self, name: &str, value: Tensor) -> Result<(), ModelError> {
        let idx = *self
            .index
            .get(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("unknown parameter {name}")))?;
        if self.params[idx].value.shape() != value.shape() {
            return Err(ModelError::Checkpoint(format!(
                "parameter {name}: shape {:?} does not match model {:?}",
                value.shape(),
                self.params[idx].value.shape()
            )));
        }
        self.params[idx].value = value;
        Ok(())
    }

    /// Verifies parameters are finite (guard for inference on bad checkpoints).
    pub fn check_finite(&self) -> Result<(), ModelError> {
        for p in &self.params {
            if !p.value.is_all_finite() {
                return Err(ModelError::Checkpoint(format!("parameter {} contains NaN/Inf", p.name)));
            }
        }
        Ok(())
    }

    /// Encodes one image pair to its feature vector `γ_t` of length 2D.
    pub fn encode_pair(&self, i0: &Tensor, i_t: &Tensor) -> Result<Vec<f64>, ModelError> {
        let (h, w) = (self.config.height, self.config.width);
        let mut batch = Tensor::zeros(vec![1, 2, h, w]);
        if i0.shape() != [h, w] || i_t.shape() != [h, w] {
            return Err(ModelError::Config(format!(
                "encode_pair: images {:?}/{:?} do not match configured grid {h}x{w}",
                i0.shape(),
                i_t.shape()
            )));
        }
        let plane = h * w;
        batch.data_mut()[..plane].copy_from_slice(i0.data());
        batch.data_mut()[plane..2 * plane].copy_from_slice(i_t.data());
        let mut fwd = Forward::new(self);
        let enc = fwd.encode_pairs(batch)?;
        Ok(fwd.tape.value(enc).data().to_vec())
    }
}

/// One forward construction over a fresh tape with all parameters as leaves.
pub(crate) struct Forward<'m> {
    pub tape: Tape,
    model: &'m MotionModel,
    pnodes: Vec<Node>,
}

impl<'m> Forward<'m> {
    pub fn new(model: &'m MotionModel) -> Self {
        let mut tape = Tape::new();
        let pnodes = model.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        Forward { tape, model, pnodes }
    }

    pub fn param_node(&self, name: &str) -> Node {
        self.pnodes[self.model.param_index(name)]
    }

    pub fn param_nodes(&self) -> &[Node] {
        &self.pnodes
    }

    /// Encoder over a batch of stacked image pairs `[P,2,H,W] -> [P,2D]`.
    pub fn encode_pairs(&mut self, pairs: Tensor) -> Result<Node, ModelError> {
        let cfg = &self.model.config;
        if pairs.rank() != 4 || pairs.shape()[1] != 2 || pairs.shape()[2] != cfg.height || pairs.shape()[3] != cfg.width
        {
            return Err(ModelError::Config(format!(
                "encoder input {:?} does not match configured grid {}x{}",
                pairs.shape(),
                cfg.height,
                cfg.width
            )));
        }
        let p = pairs.shape()[0];
        let mut x = self.tape.leaf(pairs);
        let strides = [2usize, 2, 2, 1];
        for (i, &stride) in strides.iter().enumerate() {
            let w = self.param_node(&format!("enc.conv{i}.weight"));
            let b = self.param_node(&format!("enc.conv{i}.bias"));
            x = self.tape.conv2d(x, w, Some(b), stride, Padding::Same)?;
            x = self.tape.leaky_relu(x, cfg.leaky_slope);
        }
        let (h8, w8) = cfg.coarse_extents();
        let flat = self.tape.reshape(x, vec![p, cfg.enc_channels[3] * h8 * w8])?;
        let w = self.param_node("enc.fc.weight");
        let b = self.param_node("enc.fc.bias");
        Ok(self.tape.linear(flat, w, Some(b))?)
    }

    /// TCN over the feature matrix `Γ: [2D,T]`, returning posterior nodes
    /// `(μ: [D·T], s: [D])`. Output = sum of the residual blocks' outputs;
    /// the σ half is reduced over time by mean and exponentiated.
    pub fn tcn(
        &mut self,
        gamma: Node,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<(Node, Node), ModelError> {
        let cfg = &self.model.config;
        let w = self.param_node("tcn.init.weight");
        let b = self.param_node("tcn.init.bias");
        let mut x = self.tape.conv1d_dilated(gamma, w, Some(b), 1)?;
        let mut block_outputs = Vec::new();
        let dilations = cfg.tcn_dilations.clone();
        for (i, &dil) in dilations.iter().enumerate() {
            let wd = self.param_node(&format!("tcn.block{i}.dilated.weight"));
            let bd = self.param_node(&format!("tcn.block{i}.dilated.bias"));
            let mut h = self.tape.conv1d_dilated(x, wd, Some(bd), dil)?;
            h = self.tape.leaky_relu(h, cfg.leaky_slope);
            h = self.tape.spatial_dropout1d(h, cfg.tcn_dropout, rng, training)?;
            let wp = self.param_node(&format!("tcn.block{i}.project.weight"));
            let bp = self.param_node(&format!("tcn.block{i}.project.bias"));
            h = self.tape.conv1d_dilated(h, wp, Some(bp), 1)?;
            let block = self.tape.add(x, h)?;
            block_outputs.push(block);
            x = block;
        }
        let mut out = block_outputs[0];
        for &b in &block_outputs[1..] {
            out = self.tape.add(out, b)?;
        }
        let d = cfg.d;
        let mu_mat = self.tape.slice_rows(out, 0, d)?;
        let mu = self.tape.reshape(mu_mat, vec![d * cfg.t_lat])?;
        let sigma_rows = self.tape.slice_rows(out, d, 2 * d)?;
        let raw = self.tape.mean_axis1(sigma_rows)?;
        let s = self.tape.exp(raw);
        Ok((mu, s))
    }

    /// Conditioning pyramid of the moving image: `[I_0/8, I_0/4, I_0/2, I_0]`
    /// as `[1,h,w]` leaves.
    pub fn conditioning_pyramid(&mut self, i0: &Tensor) -> [Node; 4] {
        let ds2 = downsample2(i0);
        let ds4 = downsample2(&ds2);
        let ds8 = downsample2(&ds4);
        let as_leaf = |tape: &mut Tape, t: Tensor| {
            let (h, w) = (t.shape()[0], t.shape()[1]);
            let t3 = t.reshape(vec![1, h, w]).expect("rank change only");
            tape.leaf(t3)
        };
        [
            as_leaf(&mut self.tape, ds8),
            as_leaf(&mut self.tape, ds4),
            as_leaf(&mut self.tape, ds2),
            as_leaf(&mut self.tape, i0.clone()),
        ]
    }

    /// Decoder over a batch of latent columns `z_cols: [S,D]`, conditioned on
    /// the moving image. Returns `(v: [S,2,H,W], u: [S,2,H,W])`: raw
    /// velocities and displacement fields after smoothing across the decoded
    /// stack and exponentiation.
    pub fn decode(&mut self, z_cols: Node, pyramid: &[Node; 4], spacing: f64) -> Result<(Node, Node), ModelError> {
        let cfg = &self.model.config;
        let s_count = self.tape.value(z_cols).shape()[0];
        let (h8, w8) = cfg.coarse_extents();
        let dch = cfg.dec_channels;

        let wfc = self.param_node("dec.fc.weight");
        let bfc = self.param_node("dec.fc.bias");
        let mut x = self.tape.linear(z_cols, wfc, Some(bfc))?;
        x = self.tape.leaky_relu(x, cfg.leaky_slope);
        x = self.tape.reshape(x, vec![s_count, dch[0], h8, w8])?;

        for i in 0..3 {
            x = self.tape.concat_broadcast(x, pyramid[i])?;
            let w = self.param_node(&format!("dec.deconv{i}.weight"));
            let b = self.param_node(&format!("dec.deconv{i}.bias"));
            x = self.tape.conv_transpose2d(x, w, Some(b))?;
            x = self.tape.leaky_relu(x, cfg.leaky_slope);
        }
        x = self.tape.concat_broadcast(x, pyramid[3])?;
        let w3 = self.param_node("dec.conv3.weight");
        let b3 = self.param_node("dec.conv3.bias");
        x = self.tape.conv2d(x, w3, Some(b3), 1, Padding::Same)?;
        x = self.tape.leaky_relu(x, cfg.leaky_slope);
        let wo = self.param_node("dec.out.weight");
        let bo = self.param_node("dec.out.bias");
        x = self.tape.conv2d(x, wo, Some(bo), 1, Padding::Same)?;
        x = self.tape.tanh(x);
        let v = self.tape.scale(x, cfg.v_max);

        let grid = GridSpec::new(cfg.height, cfg.width, spacing)
            .map_err(|e| ModelError::Config(e.to_string()))?;
        let smoothed = smooth_stack_on_tape(&mut self.tape, v, &cfg.smoothing, &grid)?;
        let u = exponentiate_on_tape(&mut self.tape, smoothed, cfg.exp_steps)?;
        Ok((v, u))
    }
}
