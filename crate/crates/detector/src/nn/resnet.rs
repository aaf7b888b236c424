//! Residual networks of depth 18, 34 and 50: a 7x7 stride-2 stem, 3x3
//! max-pool, four stages of residual blocks, global average pooling and a
//! linear head. Blocks that change resolution or width project the
//! shortcut with a 1x1 convolution and batch norm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Relu};
use super::{join, Param, Parameters, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResNetSpec {
    pub depth: u32,
    pub num_classes: usize,
    /// Width of the first stage; stages double it. 64 is the standard width.
    pub base_width: usize,
    pub in_channels: usize,
}

impl ResNetSpec {
    pub fn standard(depth: u32, num_classes: usize) -> Self {
        ResNetSpec { depth, num_classes, base_width: 64, in_channels: 3 }
    }

    /// Blocks per stage and whether blocks are bottlenecks.
    pub fn layout(&self) -> Option<([usize; 4], bool)> {
        match self.depth {
            18 => Some(([2, 2, 2, 2], false)),
            34 => Some(([3, 4, 6, 3], false)),
            50 => Some(([3, 4, 6, 3], true)),
            _ => None,
        }
    }

    pub fn feature_width(&self) -> usize {
        let (_, bottleneck) = self.layout().expect("supported depth");
        self.base_width * 8 * if bottleneck { 4 } else { 1 }
    }
}

#[derive(Clone, Debug)]
pub struct Downsample<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

impl<T: Scalar> Downsample<T> {
    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.bn.forward(&self.conv.forward(x))
    }

    fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.conv.forward_train(x);
        self.bn.forward_train(y)
    }

    fn backward(&mut self, dy: Tensor<T>) -> Tensor<T> {
        let d = self.bn.backward(dy);
        self.conv.backward(&d, true).expect("input gradient")
    }
}

impl<T: Scalar> Parameters<T> for Downsample<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param<T>)) {
        self.conv.visit(&join(prefix, "0"), f);
        self.bn.visit(&join(prefix, "1"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<T>)) {
        self.conv.visit_mut(&join(prefix, "0"), f);
        self.bn.visit_mut(&join(prefix, "1"), f);
    }
}

/// A residual block: two 3x3 convolutions (basic) or 1x1-3x3-1x1 with 4x
/// expansion (bottleneck), added to the shortcut before the final ReLU.
#[derive(Clone, Debug)]
pub struct Block<T> {
    convs: Vec<Conv2d<T>>,
    bns: Vec<BatchNorm2d<T>>,
    relus: Vec<Relu>,
    out_relu: Relu,
    downsample: Option<Downsample<T>>,
}

impl<T: Scalar> Block<T> {
    fn basic<R: Rng>(in_c: usize, width: usize, stride: usize, rng: &mut R) -> Self {
        let convs = vec![Conv2d::new(in_c, width, 3, stride, 1, rng), Conv2d::new(width, width, 3, 1, 1, rng)];
        let downsample = (stride != 1 || in_c != width).then(|| Downsample { conv: Conv2d::new(in_c, width, 1, stride, 0, rng), bn: BatchNorm2d::new(width) });
        Block { convs, bns: vec![BatchNorm2d::new(width), BatchNorm2d::new(width)], relus: vec![Relu::default()], out_relu: Relu::default(), downsample }
    }

    fn bottleneck<R: Rng>(in_c: usize, width: usize, stride: usize, rng: &mut R) -> Self {
        let out = width * 4;
        let convs = vec![Conv2d::new(in_c, width, 1, 1, 0, rng), Conv2d::new(width, width, 3, stride, 1, rng), Conv2d::new(width, out, 1, 1, 0, rng)];
        let downsample = (stride != 1 || in_c != out).then(|| Downsample { conv: Conv2d::new(in_c, out, 1, stride, 0, rng), bn: BatchNorm2d::new(out) });
        Block {
            convs,
            bns: vec![BatchNorm2d::new(width), BatchNorm2d::new(width), BatchNorm2d::new(out)],
            relus: vec![Relu::default(), Relu::default()],
            out_relu: Relu::default(),
            downsample,
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let last = self.convs.len() - 1;
        let mut h = x.clone();
        for (i, (conv, bn)) in self.convs.iter().zip(&self.bns).enumerate() {
            h = bn.forward(&conv.forward(&h));
            if i < last {
                h = self.relus[i].forward(&h);
            }
        }
        match &self.downsample {
            Some(ds) => h.add_assign(&ds.forward(x)),
            None => h.add_assign(x),
        }
        self.out_relu.forward(&h)
    }

    fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let last = self.convs.len() - 1;
        let shortcut = match self.downsample.as_mut() {
            Some(ds) => ds.forward_train(x.clone()),
            None => x.clone(),
        };
        let mut h = x;
        for i in 0..self.convs.len() {
            h = self.bns[i].forward_train(self.convs[i].forward_train(h));
            if i < last {
                h = self.relus[i].forward_train(h);
            }
        }
        h.add_assign(&shortcut);
        self.out_relu.forward_train(h)
    }

    fn backward(&mut self, dy: Tensor<T>) -> Tensor<T> {
        let d = self.out_relu.backward(dy);
        let d_short = match self.downsample.as_mut() {
            Some(ds) => ds.backward(d.clone()),
            None => d.clone(),
        };
        let mut h = d;
        for i in (0..self.convs.len()).rev() {
            if i < self.convs.len() - 1 {
                h = self.relus[i].backward(h);
            }
            h = self.bns[i].backward(h);
            h = self.convs[i].backward(&h, true).expect("input gradient");
        }
        h.add_assign(&d_short);
        h
    }
}

impl<T: Scalar> Parameters<T> for Block<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param<T>)) {
        for (i, (conv, bn)) in self.convs.iter().zip(&self.bns).enumerate() {
            conv.visit(&join(prefix, &format!("conv{}", i + 1)), f);
            bn.visit(&join(prefix, &format!("bn{}", i + 1)), f);
        }
        if let Some(ds) = &self.downsample {
            ds.visit(&join(prefix, "downsample"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<T>)) {
        for (i, (conv, bn)) in self.convs.iter_mut().zip(self.bns.iter_mut()).enumerate() {
            conv.visit_mut(&join(prefix, &format!("conv{}", i + 1)), f);
            bn.visit_mut(&join(prefix, &format!("bn{}", i + 1)), f);
        }
        if let Some(ds) = self.downsample.as_mut() {
            ds.visit_mut(&join(prefix, "downsample"), f);
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResNet<T> {
    pub spec: ResNetSpec,
    conv1: Conv2d<T>,
    bn1: BatchNorm2d<T>,
    relu: Relu,
    maxpool: MaxPool2d,
    stages: Vec<Vec<Block<T>>>,
    avgpool: GlobalAvgPool,
    pub fc: Linear<T>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnsupportedDepth(pub u32);

impl std::fmt::Display for UnsupportedDepth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "unsupported backbone depth {} (expected 18, 34 or 50)", self.0)
    }
}

impl std::error::Error for UnsupportedDepth {}

impl<T: Scalar> ResNet<T> {
    pub fn new<R: Rng>(spec: ResNetSpec, rng: &mut R) -> Result<Self, UnsupportedDepth> {
        let (blocks, bottleneck) = spec.layout().ok_or(UnsupportedDepth(spec.depth))?;
        let w = spec.base_width;
        let conv1 = Conv2d::new(spec.in_channels, w, 7, 2, 3, rng);
        let mut in_c = w;
        let mut stages = Vec::new();
        for (s, &count) in blocks.iter().enumerate() {
            let width = w << s;
            let mut stage = Vec::new();
            for b in 0..count {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let block = if bottleneck { Block::bottleneck(in_c, width, stride, rng) } else { Block::basic(in_c, width, stride, rng) };
                in_c = if bottleneck { width * 4 } else { width };
                stage.push(block);
            }
            stages.push(stage);
        }
        let fc = Linear::new(in_c, spec.num_classes, rng);
        Ok(ResNet {
            spec,
            conv1,
            bn1: BatchNorm2d::new(w),
            relu: Relu::default(),
            maxpool: MaxPool2d::new(3, 2, 1),
            stages,
            avgpool: GlobalAvgPool::default(),
            fc,
        })
    }

    /// Pooled backbone features `[n, feature_width, 1, 1]` (inference mode).
    pub fn features(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut h = self.maxpool.forward(&self.relu.forward(&self.bn1.forward(&self.conv1.forward(x))));
        for block in self.stages.iter().flatten() {
            h = block.forward(&h);
        }
        self.avgpool.forward(&h)
    }

    /// Logits `[n, classes, 1, 1]` using running batch-norm statistics.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.fc.forward(&self.features(x))
    }

    /// Logits using batch statistics, caching activations for `backward`.
    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let mut h = self.conv1.forward_train(x);
        h = self.bn1.forward_train(h);
        h = self.relu.forward_train(h);
        h = self.maxpool.forward_train(h);
        for block in self.stages.iter_mut().flatten() {
            h = block.forward_train(h);
        }
        h = self.avgpool.forward_train(h);
        self.fc.forward_train(h)
    }

    /// Accumulates parameter gradients from the logit gradient.
    pub fn backward(&mut self, dlogits: &Tensor<T>) {
        let mut d = self.fc.backward(dlogits);
        d = self.avgpool.backward(&d);
        for block in self.stages.iter_mut().flatten().rev() {
            d = block.backward(d);
        }
        d = self.maxpool.backward(&d);
        d = self.relu.backward(d);
        d = self.bn1.backward(d);
        self.conv1.backward(&d, false);
    }

    pub fn learnable_parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.learnable {
                n += p.len()
            }
        });
        n
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit("", &mut |name, _| names.push(name));
        names
    }

    pub fn is_head(name: &str) -> bool {
        name.starts_with("fc.")
    }
}

impl<T: Scalar> Parameters<T> for ResNet<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param<T>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.visit(&join(prefix, &format!("layer{}.{b}", s + 1)), f);
            }
        }
        self.fc.visit(&join(prefix, "fc"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param<T>)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.bn1.visit_mut(&join(prefix, "bn1"), f);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.visit_mut(&join(prefix, &format!("layer{}.{b}", s + 1)), f);
            }
        }
        self.fc.visit_mut(&join(prefix, "fc"), f);
    }
}
