//! The six reference architectures: local-global models 1-3 and the plain
//! CNN baselines 1-3.
//!
//! The baselines are the count-consistent reading of their table: the 1x1
//! squeeze convolutions listed there are absent, because the printed
//! parameter totals only add up without them. Batch-norm placement in the
//! local-global models (after the branch-1 3x3 conv, after the outer product,
//! none on the fat/tall branches) is likewise the placement that reproduces
//! the printed totals. ReLU follows every convolution except the 1x1 squeezes
//! that feed the concat.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::spec::{LayerKind, LayerSpec, ModelSpec, INPUT};
use crate::layers::Padding;
use crate::{Error, Result, Shape4};

pub const PRESET_NAMES: [&str; 6] = ["lgcnn-1", "lgcnn-2", "lgcnn-3", "cnn-1", "cnn-2", "cnn-3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    LocalGlobal,
    Cnn,
}

/// Knobs for scaled-down variants. The defaults give the reference models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetOptions {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    /// Every channel count (and the hidden FC width) is divided by this,
    /// rounding down with a floor of 1.
    pub channel_divisor: usize,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions {
            classes: 20,
            height: 20,
            width: 50,
            channel_divisor: 1,
        }
    }
}

pub fn preset(name: &str) -> Result<ModelSpec> {
    preset_with(name, PresetOptions::default())
}

pub fn preset_with(name: &str, opts: PresetOptions) -> Result<ModelSpec> {
    let (family, depth) = match name {
        "lgcnn-1" => (Family::LocalGlobal, 1),
        "lgcnn-2" => (Family::LocalGlobal, 2),
        "lgcnn-3" => (Family::LocalGlobal, 3),
        "cnn-1" => (Family::Cnn, 1),
        "cnn-2" => (Family::Cnn, 2),
        "cnn-3" => (Family::Cnn, 3),
        other => return Err(Error::UnknownPreset(other.into())),
    };
    build_preset(family, depth, opts, name)
}

struct Builder {
    layers: Vec<LayerSpec>,
}

impl Builder {
    fn push(&mut self, name: &str, kind: LayerKind, inputs: &[&str]) {
        let inputs: Vec<&str> = if inputs.is_empty() {
            alloc::vec![self.layers.last().map(|l| l.name.as_str()).unwrap_or(INPUT)]
        } else {
            inputs.to_vec()
        };
        let layer = LayerSpec::new(name, kind, &inputs);
        self.layers.push(layer);
    }

    fn conv(&mut self, name: &str, k: usize, filters: usize, stride: usize, inputs: &[&str]) {
        self.push(
            name,
            LayerKind::Conv {
                kernel: (k, k),
                filters,
                stride,
                padding: Padding::Same,
            },
            inputs,
        );
    }

    /// conv -> BN -> ReLU, named `<prefix>`, `<prefix>_bn`, `<prefix>_relu`.
    fn conv_block(&mut self, prefix: &str, k: usize, filters: usize, stride: usize, inputs: &[&str]) {
        self.conv(prefix, k, filters, stride, inputs);
        self.push(&format!("{prefix}_bn"), LayerKind::BatchNorm, &[]);
        self.push(&format!("{prefix}_relu"), LayerKind::Relu, &[]);
    }
}

fn build_preset(family: Family, depth: usize, opts: PresetOptions, name: &str) -> Result<ModelSpec> {
    if opts.classes == 0 || opts.channel_divisor == 0 {
        return Err(Error::Config("classes and channel_divisor must be >= 1".into()));
    }
    let input = Shape4::new(1, 1, opts.height, opts.width)?;
    let ch = |c: usize| (c / opts.channel_divisor).max(1);
    // channel widths per depth: (local conv, squeeze, global conv)
    let (local, squeeze) = match depth {
        1 => (16, 8),
        2 => (32, 16),
        _ => (64, 32),
    };
    let (local, squeeze) = (ch(local), ch(squeeze));
    let mut b = Builder { layers: Vec::new() };

    match family {
        Family::LocalGlobal => {
            b.conv_block("b1_conv", 3, local, 1, &[INPUT]);
            b.conv("b1_squeeze", 1, squeeze, 1, &[]);
            b.push(
                "fat",
                LayerKind::ConvFat {
                    kernel: (1, opts.width),
                    filters: local,
                },
                &[INPUT],
            );
            b.push("fat_relu", LayerKind::Relu, &[]);
            b.push(
                "tall",
                LayerKind::ConvTall {
                    kernel: (opts.height, 1),
                    filters: local,
                },
                &[INPUT],
            );
            b.push("tall_relu", LayerKind::Relu, &[]);
            b.push("fuse", LayerKind::OuterFuse, &["fat_relu", "tall_relu"]);
            b.push("fuse_bn", LayerKind::BatchNorm, &[]);
            b.push("fuse_relu", LayerKind::Relu, &[]);
            b.conv("g_squeeze", 1, squeeze, 1, &[]);
            b.push("concat", LayerKind::Concat, &["b1_squeeze", "g_squeeze"]);
        }
        Family::Cnn => {
            b.conv_block("conv", 3, local, 1, &[INPUT]);
        }
    }

    match depth {
        1 => {}
        2 => {
            b.push("pool", LayerKind::MaxPool { window: 2, stride: 2 }, &[]);
            b.conv_block("down", 3, ch(64), 3, &[]);
        }
        _ => {
            b.conv_block("mix", 3, ch(64), 1, &[]);
            b.push("pool", LayerKind::MaxPool { window: 2, stride: 2 }, &[]);
            b.conv_block("down", 3, ch(128), 3, &[]);
        }
    }

    let spec = ModelSpec {
        name: String::from(name),
        input,
        layers: b.layers,
    };
    // The flatten size depends on everything above; propagate to get it.
    let flat = super::graph::propagate_shapes(&spec)?
        .last()
        .map(|l| l.shape.features())
        .unwrap_or(0);
    let mut b = Builder { layers: spec.layers };
    b.push("flatten", LayerKind::Flatten, &[]);
    if depth == 1 {
        b.push(
            "fc1",
            LayerKind::FullyConnected {
                in_features: flat,
                out_features: opts.classes,
            },
            &[],
        );
    } else {
        let hidden = ch(300);
        b.push(
            "fc1",
            LayerKind::FullyConnected {
                in_features: flat,
                out_features: hidden,
            },
            &[],
        );
        b.push("fc1_relu", LayerKind::Relu, &[]);
        b.push(
            "fc2",
            LayerKind::FullyConnected {
                in_features: hidden,
                out_features: opts.classes,
            },
            &[],
        );
    }
    b.push("softmax", LayerKind::Softmax, &[]);
    Ok(ModelSpec {
        layers: b.layers,
        ..spec
    })
}


#[cfg(test)]
mod files {
    use super::*;

    const FILES: [(&str, &str); 6] = [
        ("lgcnn-1", include_str!("../../presets/lgcnn-1.lgm")),
        ("lgcnn-2", include_str!("../../presets/lgcnn-2.lgm")),
        ("lgcnn-3", include_str!("../../presets/lgcnn-3.lgm")),
        ("cnn-1", include_str!("../../presets/cnn-1.lgm")),
        ("cnn-2", include_str!("../../presets/cnn-2.lgm")),
        ("cnn-3", include_str!("../../presets/cnn-3.lgm")),
    ];

    #[test]
    fn shipped_files_match_builder() {
        for (name, text) in FILES {
            assert_eq!(ModelSpec::parse(text).unwrap(), preset(name).unwrap(), "{name}");
        }
    }
}
