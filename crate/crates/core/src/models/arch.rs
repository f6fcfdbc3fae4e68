use serde::{Deserialize, Serialize};

use crate::datagen::{IMAGE_SIDE, SPECTRUM_LEN};
use crate::encoding::CONTRAST_LEN;
use crate::error::{Error, Result};
use crate::nn::ParamKind;

/// `(name, kind, dims)` for every stored array, in checkpoint order.
pub type ParamSpec = (String, ParamKind, Vec<usize>);

/// Convolutional stack followed by a fully connected head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatorArch {
    /// Channel counts including the 2 input channels (shape, period plane).
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Hidden widths of the fully connected head.
    pub hidden: Vec<usize>,
    /// Batch normalization after each hidden fully connected layer.
    #[serde(default)]
    pub hidden_norm: bool,
    pub image_side: usize,
    pub outputs: usize,
}

impl Default for SimulatorArch {
    fn default() -> Self {
        SimulatorArch {
            channels: vec![2, 32, 64, 128, 256],
            kernel: 4,
            stride: 2,
            padding: 1,
            hidden: vec![512],
            hidden_norm: false,
            image_side: IMAGE_SIDE,
            outputs: SPECTRUM_LEN,
        }
    }
}

fn conv_out(side: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (side + 2 * p).checked_sub(k).map(|v| v / s + 1)
}

fn deconv_out(side: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    ((side - 1) * s + k).checked_sub(2 * p).filter(|&v| v > 0)
}

fn norm_specs(out: &mut Vec<ParamSpec>, prefix: &str, c: usize) {
    out.push((format!("{prefix}.scale"), ParamKind::Scale, vec![c]));
    out.push((format!("{prefix}.shift"), ParamKind::Shift, vec![c]));
    out.push((format!("{prefix}.running_mean"), ParamKind::RunningMean, vec![c]));
    out.push((format!("{prefix}.running_var"), ParamKind::RunningVar, vec![c]));
}

fn linear_specs(out: &mut Vec<ParamSpec>, prefix: &str, din: usize, dout: usize) {
    out.push((format!("{prefix}.weight"), ParamKind::Weight, vec![dout, din]));
    out.push((format!("{prefix}.bias"), ParamKind::Bias, vec![dout]));
}

impl SimulatorArch {
    /// Narrower widths for single-core training runs. Without the hidden
    /// normalization the unbounded FC activations let one large Adam step
    /// push every output deep into sigmoid saturation, where training stalls.
    pub fn desk() -> Self {
        SimulatorArch { channels: vec![2, 8, 16, 32, 64], hidden: vec![128], hidden_norm: true, ..Self::default() }
    }

    pub fn blocks(&self) -> usize {
        self.channels.len() - 1
    }

    /// Spatial side after the convolution stack.
    pub fn feature_side(&self) -> Result<usize> {
        let mut side = self.image_side;
        for _ in 0..self.blocks() {
            side = conv_out(side, self.kernel, self.stride, self.padding)
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("simulator stack collapses {} px input", self.image_side)))?;
        }
        Ok(side)
    }

    pub fn flat_features(&self) -> Result<usize> {
        Ok(self.channels.last().copied().unwrap_or(0) * self.feature_side()?.pow(2))
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 || self.channels[0] != 2 || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(format!("simulator channels {:?} must start at 2", self.channels)));
        }
        if self.stride == 0 || self.kernel == 0 || self.outputs == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("simulator sizes must be positive".into()));
        }
        self.feature_side().map(|_| ())
    }

    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        for (b, pair) in self.channels.windows(2).enumerate() {
            let (cin, cout) = (pair[0], pair[1]);
            out.push((format!("conv{b}.weight"), ParamKind::Weight, vec![cout, cin, self.kernel, self.kernel]));
            out.push((format!("conv{b}.bias"), ParamKind::Bias, vec![cout]));
            norm_specs(&mut out, &format!("norm{b}"), cout);
        }
        let mut width = self.flat_features()?;
        for (j, &h) in self.hidden.iter().enumerate() {
            linear_specs(&mut out, &format!("fc{j}"), width, h);
            if self.hidden_norm {
                norm_specs(&mut out, &format!("fcnorm{j}"), h);
            }
            width = h;
        }
        linear_specs(&mut out, "head", width, self.outputs);
        Ok(out)
    }
}

/// Linear expansion, transposed-convolution stack with an input shortcut,
/// and a fully connected period head reading the generated image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub condition_dim: usize,
    pub noise_dim: usize,
    /// Spatial side of the expanded seed feature map.
    pub seed_side: usize,
    /// Channel counts from the seed map down to the single image channel.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub period_hidden: usize,
    pub image_side: usize,
}

impl Default for GeneratorArch {
    fn default() -> Self {
        GeneratorArch {
            condition_dim: CONTRAST_LEN,
            noise_dim: 50,
            seed_side: 4,
            channels: vec![256, 128, 64, 32, 1],
            kernel: 4,
            stride: 2,
            padding: 1,
            period_hidden: 128,
            image_side: IMAGE_SIDE,
        }
    }
}

impl GeneratorArch {
    pub fn desk() -> Self {
        GeneratorArch { channels: vec![64, 32, 16, 8, 1], ..Self::default() }
    }

    pub fn input_dim(&self) -> usize {
        self.condition_dim + self.noise_dim
    }

    pub fn pixels(&self) -> usize {
        self.image_side * self.image_side
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 {
            return Err(Error::InvalidArgument("noise dimension must be at least 1".into()));
        }
        if self.channels.len() < 2 || self.channels.last() != Some(&1) || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(format!("generator channels {:?} must end at 1", self.channels)));
        }
        if self.stride == 0 || self.kernel == 0 || self.seed_side == 0 || self.period_hidden == 0 {
            return Err(Error::InvalidArgument("generator sizes must be positive".into()));
        }
        let mut side = self.seed_side;
        for _ in 1..self.channels.len() {
            side = deconv_out(side, self.kernel, self.stride, self.padding)
                .ok_or_else(|| Error::InvalidArgument("generator padding too large".into()))?;
        }
        if side != self.image_side {
            return Err(Error::InvalidArgument(format!(
                "generator stack produces {side} px images, expected {}",
                self.image_side
            )));
        }
        Ok(())
    }

    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        let c0 = self.channels[0];
        linear_specs(&mut out, "expand", self.input_dim(), c0 * self.seed_side * self.seed_side);
        norm_specs(&mut out, "norm_in", c0);
        let last = self.channels.len() - 2;
        for (b, pair) in self.channels.windows(2).enumerate() {
            let (cin, cout) = (pair[0], pair[1]);
            out.push((format!("deconv{b}.weight"), ParamKind::Weight, vec![cin, cout, self.kernel, self.kernel]));
            out.push((format!("deconv{b}.bias"), ParamKind::Bias, vec![cout]));
            if b != last {
                norm_specs(&mut out, &format!("norm{b}"), cout);
            }
        }
        linear_specs(&mut out, "shortcut", self.input_dim(), self.pixels());
        linear_specs(&mut out, "period_fc", self.pixels(), self.period_hidden);
        linear_specs(&mut out, "period_head", self.period_hidden, 1);
        Ok(out)
    }
}

/// Architecture tag stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ArchDescriptor {
    Simulator(SimulatorArch),
    Generator(GeneratorArch),
}

impl ArchDescriptor {
    pub fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        match self {
            ArchDescriptor::Simulator(a) => a.param_specs(),
            ArchDescriptor::Generator(a) => a.param_specs(),
        }
    }
}
