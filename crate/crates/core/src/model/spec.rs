//! Declarative model descriptions and their text format.
//!
//! One layer per line, geometry written the way architecture tables usually
//! write it:
//!
//! ```text
//! model lgcnn-1
//! input (1, 20, 50)
//! b1_conv = C((3, 3), 16) <- input
//! b1_bn = BN
//! fat = Fat((1, 50), 16) <- input
//! fuse = Outer <- fat_relu, tall_relu
//! down = C((3, 3), 64) s=3
//! pool = P((2, 2), 2)
//! fc1 = FC(2304, 300)
//! ```
//!
//! A layer without `<-` reads from the line above it (the first layer reads
//! from `input`). Convolutions default to same padding and stride 1; append
//! `s=N` for a stride and `valid` to drop the padding. `#` starts a comment.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::layers::Padding;
use crate::{Error, Result, Shape4};

/// Name of the implicit graph source.
pub const INPUT: &str = "input";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        kernel: (usize, usize),
        filters: usize,
        stride: usize,
        padding: Padding,
    },
    /// `1 x W` kernel spanning the whole input width.
    ConvFat { kernel: (usize, usize), filters: usize },
    /// `H x 1` kernel spanning the whole input height.
    ConvTall { kernel: (usize, usize), filters: usize },
    OuterFuse,
    BatchNorm,
    Relu,
    MaxPool { window: usize, stride: usize },
    Flatten,
    FullyConnected { in_features: usize, out_features: usize },
    Softmax,
    Concat,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { kernel: (1, 1), .. } => "conv1x1",
            LayerKind::Conv { .. } => "conv2d",
            LayerKind::ConvFat { .. } => "conv_fat",
            LayerKind::ConvTall { .. } => "conv_tall",
            LayerKind::OuterFuse => "outer_fuse",
            LayerKind::BatchNorm => "batch_norm",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "max_pool",
            LayerKind::Flatten => "flatten",
            LayerKind::FullyConnected { .. } => "fully_connected",
            LayerKind::Softmax => "softmax",
            LayerKind::Concat => "concat",
        }
    }

    /// Allowed number of inputs as `(min, max)`.
    pub fn arity(&self) -> (usize, usize) {
        match self {
            LayerKind::OuterFuse => (2, 2),
            LayerKind::Concat => (2, usize::MAX),
            _ => (1, 1),
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerKind::Conv {
                kernel,
                filters,
                stride,
                padding,
            } => {
                write!(f, "C(({}, {}), {})", kernel.0, kernel.1, filters)?;
                if stride != 1 {
                    write!(f, " s={stride}")?;
                }
                if padding == Padding::Valid {
                    write!(f, " valid")?;
                }
                Ok(())
            }
            LayerKind::ConvFat { kernel, filters } => {
                write!(f, "Fat(({}, {}), {})", kernel.0, kernel.1, filters)
            }
            LayerKind::ConvTall { kernel, filters } => {
                write!(f, "Tall(({}, {}), {})", kernel.0, kernel.1, filters)
            }
            LayerKind::OuterFuse => f.write_str("Outer"),
            LayerKind::BatchNorm => f.write_str("BN"),
            LayerKind::Relu => f.write_str("ReLU"),
            LayerKind::MaxPool { window, stride } => {
                write!(f, "P(({window}, {window}), {stride})")
            }
            LayerKind::Flatten => f.write_str("Flatten"),
            LayerKind::FullyConnected {
                in_features,
                out_features,
            } => write!(f, "FC({in_features}, {out_features})"),
            LayerKind::Softmax => f.write_str("Softmax"),
            LayerKind::Concat => f.write_str("Concat"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Upstream node names; [`INPUT`] is the image.
    pub inputs: Vec<String>,
}

impl LayerSpec {
    pub fn new(name: &str, kind: LayerKind, inputs: &[&str]) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    /// Per-sample input geometry; `batch` is always 1 here.
    pub input: Shape4,
    /// Topologically ordered; the last layer is the output.
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut input = None;
        let mut layers: Vec<LayerSpec> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse {
                line: lineno,
                reason,
            };
            if let Some(rest) = line.strip_prefix("model ") {
                name = Some(rest.trim().to_string());
                continue;
            }
            if let Some(rest) = line.strip_prefix("input") {
                let dims = numbers_in(rest);
                if dims.len() != 3 || !matches_template(rest, "(#,#,#)") {
                    return Err(err(format!("expected `input (C, H, W)`, got `{line}`")));
                }
                input = Some(
                    Shape4::new(1, dims[0], dims[1], dims[2]).map_err(|e| err(e.to_string()))?,
                );
                continue;
            }
            let (lhs, inputs) = match line.split_once("<-") {
                Some((l, r)) => (
                    l,
                    Some(
                        r.split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect::<Vec<_>>(),
                    ),
                ),
                None => (line, None),
            };
            let (lname, op) = lhs
                .split_once('=')
                .ok_or_else(|| err(format!("expected `name = LAYER`, got `{line}`")))?;
            let lname = lname.trim();
            if lname.is_empty() || lname.chars().any(char::is_whitespace) {
                return Err(err(format!("bad layer name `{lname}`")));
            }
            let kind = parse_kind(op.trim()).map_err(err)?;
            let inputs = inputs.unwrap_or_else(|| {
                alloc::vec![layers
                    .last()
                    .map(|l| l.name.clone())
                    .unwrap_or_else(|| INPUT.to_string())]
            });
            layers.push(LayerSpec {
                name: lname.to_string(),
                kind,
                inputs,
            });
        }
        let spec = ModelSpec {
            name: name.ok_or(Error::Parse {
                line: 0,
                reason: "missing `model <name>` line".into(),
            })?,
            input: input.ok_or(Error::Parse {
                line: 0,
                reason: "missing `input (C, H, W)` line".into(),
            })?,
            layers,
        };
        Ok(spec)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {}", self.name)?;
        writeln!(
            f,
            "input ({}, {}, {})",
            self.input.channels, self.input.height, self.input.width
        )?;
        let mut prev = INPUT;
        for l in &self.layers {
            write!(f, "{} = {}", l.name, l.kind)?;
            if !(l.inputs.len() == 1 && l.inputs[0] == prev) {
                write!(f, " <- {}", l.inputs.join(", "))?;
            }
            writeln!(f)?;
            prev = &l.name;
        }
        Ok(())
    }
}

fn numbers_in(s: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur: Option<usize> = None;
    for ch in s.chars() {
        match ch.to_digit(10) {
            Some(d) => cur = Some(cur.unwrap_or(0).saturating_mul(10).saturating_add(d as usize)),
            None => {
                if let Some(v) = cur.take() {
                    out.push(v);
                }
            }
        }
    }
    out.extend(cur);
    out
}

/// Compares `s` with whitespace removed and digit runs replaced by `#`.
fn matches_template(s: &str, template: &str) -> bool {
    let mut squashed = String::new();
    let mut in_num = false;
    for ch in s.chars().filter(|c| !c.is_whitespace()) {
        if ch.is_ascii_digit() {
            if !in_num {
                squashed.push('#');
            }
            in_num = true;
        } else {
            squashed.push(ch);
            in_num = false;
        }
    }
    squashed == template
}

fn parse_kind(op: &str) -> core::result::Result<LayerKind, String> {
    let (head, attrs) = match op.rfind(')') {
        Some(end) => (&op[..=end], op[end + 1..].trim()),
        None => {
            let mut parts = op.splitn(2, char::is_whitespace);
            (parts.next().unwrap_or(""), parts.next().unwrap_or("").trim())
        }
    };
    let nums = numbers_in(head);
    let no_attrs = |kind: LayerKind| {
        if attrs.is_empty() {
            Ok(kind)
        } else {
            Err(format!("`{}` takes no attributes, got `{attrs}`", kind.name()))
        }
    };
    let keyword = head.split('(').next().unwrap_or("").trim();
    match keyword {
        "C" => {
            if !matches_template(head, "C((#,#),#)") {
                return Err(format!("expected `C((kh, kw), filters)`, got `{head}`"));
            }
            let mut stride = 1;
            let mut padding = Padding::Same;
            for a in attrs.split_whitespace() {
                if let Some(v) = a.strip_prefix("s=") {
                    stride = v.parse().map_err(|_| format!("bad stride `{a}`"))?;
                } else if a == "valid" {
                    padding = Padding::Valid;
                } else if a == "same" {
                    padding = Padding::Same;
                } else {
                    return Err(format!("unknown convolution attribute `{a}`"));
                }
            }
            Ok(LayerKind::Conv {
                kernel: (nums[0], nums[1]),
                filters: nums[2],
                stride,
                padding,
            })
        }
        "Fat" | "Tall" => {
            if !matches_template(head, &format!("{keyword}((#,#),#)")) {
                return Err(format!("expected `{keyword}((kh, kw), filters)`, got `{head}`"));
            }
            let kernel = (nums[0], nums[1]);
            no_attrs(if keyword == "Fat" {
                LayerKind::ConvFat {
                    kernel,
                    filters: nums[2],
                }
            } else {
                LayerKind::ConvTall {
                    kernel,
                    filters: nums[2],
                }
            })
        }
        "P" => {
            if !matches_template(head, "P((#,#),#)") {
                return Err(format!("expected `P((s, s), stride)`, got `{head}`"));
            }
            if nums[0] != nums[1] {
                return Err(format!("pooling windows are square, got {}x{}", nums[0], nums[1]));
            }
            no_attrs(LayerKind::MaxPool {
                window: nums[0],
                stride: nums[2],
            })
        }
        "FC" => {
            if !matches_template(head, "FC(#,#)") {
                return Err(format!("expected `FC(in, out)`, got `{head}`"));
            }
            no_attrs(LayerKind::FullyConnected {
                in_features: nums[0],
                out_features: nums[1],
            })
        }
        "BN" => no_attrs(LayerKind::BatchNorm),
        "ReLU" => no_attrs(LayerKind::Relu),
        "Flatten" => no_attrs(LayerKind::Flatten),
        "Softmax" => no_attrs(LayerKind::Softmax),
        "Outer" => no_attrs(LayerKind::OuterFuse),
        "Concat" => no_attrs(LayerKind::Concat),
        other => Err(format!("unknown layer type `{other}`")),
    }
}
