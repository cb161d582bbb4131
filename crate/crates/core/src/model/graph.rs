//! Static analysis of a [`ModelSpec`]: wiring, shape propagation, parameter
//! audit and receptive fields.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::spec::{LayerKind, ModelSpec, INPUT};
use crate::layers::{conv_output_dim, pool_output_dim, Padding};
use crate::{Error, Result, Shape4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NodeShape {
    pub shape: Shape4,
    /// Set after `Flatten`/`FC`: the value is `(batch, features)`.
    pub flat: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedNode {
    /// Slot 0 is the input image, slot `i + 1` is layer `i`.
    pub inputs: Vec<usize>,
    pub shape: NodeShape,
}

/// Checks wiring and propagates shapes. Errors name the offending layer.
pub(crate) fn resolve(spec: &ModelSpec) -> Result<Vec<ResolvedNode>> {
    if spec.layers.is_empty() {
        return Err(Error::layer(&*spec.name, "model has no layers"));
    }
    let mut slots: BTreeMap<&str, usize> = BTreeMap::new();
    slots.insert(INPUT, 0);
    let mut shapes = vec![NodeShape {
        shape: spec.input,
        flat: false,
    }];
    let mut consumed = vec![false; spec.layers.len() + 1];
    let mut out = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let err = |reason: String| Error::layer(&*layer.name, reason);
        if slots.contains_key(layer.name.as_str()) {
            return Err(err("duplicate layer name".into()));
        }
        let (lo, hi) = layer.kind.arity();
        if layer.inputs.len() < lo || layer.inputs.len() > hi {
            return Err(err(format!(
                "{} takes {} input(s), got {}",
                layer.kind.name(),
                if lo == hi { format!("{lo}") } else { format!("at least {lo}") },
                layer.inputs.len()
            )));
        }
        let mut inputs = Vec::with_capacity(layer.inputs.len());
        for name in &layer.inputs {
            let slot = *slots
                .get(name.as_str())
                .ok_or_else(|| err(format!("unknown or later input `{name}`")))?;
            consumed[slot] = true;
            inputs.push(slot);
        }
        if matches!(layer.kind, LayerKind::Softmax) && i + 1 != spec.layers.len() {
            return Err(err("softmax must be the final layer".into()));
        }
        let ins: Vec<NodeShape> = inputs.iter().map(|&s| shapes[s]).collect();
        let shape = infer(&layer.kind, &ins).map_err(err)?;
        slots.insert(&layer.name, i + 1);
        shapes.push(shape);
        out.push(ResolvedNode { inputs, shape });
    }
    for (i, layer) in spec.layers.iter().enumerate().take(spec.layers.len() - 1) {
        if !consumed[i + 1] {
            return Err(Error::layer(
                &*layer.name,
                "output is never used; a model has exactly one output",
            ));
        }
    }
    Ok(out)
}

fn spatial(s: &NodeShape, what: &str) -> core::result::Result<Shape4, String> {
    if s.flat {
        Err(format!("{what} needs a (C, H, W) input, got a flattened vector"))
    } else {
        Ok(s.shape)
    }
}

fn infer(kind: &LayerKind, ins: &[NodeShape]) -> core::result::Result<NodeShape, String> {
    let grid = |shape: Shape4| NodeShape { shape, flat: false };
    let flat = |features: usize| NodeShape {
        shape: Shape4 {
            batch: 1,
            channels: features,
            height: 1,
            width: 1,
        },
        flat: true,
    };
    let x = ins[0];
    match *kind {
        LayerKind::Conv {
            kernel,
            filters,
            stride,
            padding,
        } => {
            let s = spatial(&x, "convolution")?;
            conv_shape(s, kernel, filters, stride, padding).map(grid)
        }
        LayerKind::ConvFat { kernel, filters } => {
            let s = spatial(&x, "fat convolution")?;
            if kernel != (1, s.width) {
                return Err(format!(
                    "fat kernel must be (1, {}) to span the input width, got {:?}",
                    s.width, kernel
                ));
            }
            conv_shape(s, kernel, filters, 1, Padding::Valid).map(grid)
        }
        LayerKind::ConvTall { kernel, filters } => {
            let s = spatial(&x, "tall convolution")?;
            if kernel != (s.height, 1) {
                return Err(format!(
                    "tall kernel must be ({}, 1) to span the input height, got {:?}",
                    s.height, kernel
                ));
            }
            conv_shape(s, kernel, filters, 1, Padding::Valid).map(grid)
        }
        LayerKind::OuterFuse => {
            let phi = spatial(&ins[0], "outer product")?;
            let omega = spatial(&ins[1], "outer product")?;
            if phi.width != 1 || omega.height != 1 {
                return Err(format!(
                    "outer product needs a (C, H, 1) column map and a (C, 1, W) row map, got {:?} and {:?}",
                    (phi.channels, phi.height, phi.width),
                    (omega.channels, omega.height, omega.width)
                ));
            }
            if phi.channels != omega.channels {
                return Err(format!(
                    "outer product pairs channels one-to-one, got {} and {}",
                    phi.channels, omega.channels
                ));
            }
            Ok(grid(Shape4 {
                width: omega.width,
                ..phi
            }))
        }
        LayerKind::BatchNorm => spatial(&x, "batch norm").map(grid),
        LayerKind::Relu => Ok(x),
        LayerKind::MaxPool { window, stride } => {
            let s = spatial(&x, "max pooling")?;
            let bad = || format!("pool {window}/{stride} invalid for {}x{}", s.height, s.width);
            let h = pool_output_dim(s.height, window, stride).ok_or_else(bad)?;
            let w = pool_output_dim(s.width, window, stride).ok_or_else(bad)?;
            Ok(grid(Shape4 {
                height: h,
                width: w,
                ..s
            }))
        }
        LayerKind::Flatten => Ok(flat(x.shape.features())),
        LayerKind::FullyConnected {
            in_features,
            out_features,
        } => {
            let got = x.shape.features();
            if got != in_features {
                return Err(format!(
                    "declared FC input {in_features} but the incoming flatten size is {got}"
                ));
            }
            if out_features == 0 {
                return Err("FC needs at least one output".into());
            }
            Ok(flat(out_features))
        }
        LayerKind::Softmax => {
            if !x.flat {
                return Err("softmax needs a flattened (classes) input".into());
            }
            Ok(x)
        }
        LayerKind::Concat => {
            let first = spatial(&ins[0], "concat")?;
            let mut channels = 0;
            for s in ins {
                let s = spatial(s, "concat")?;
                if (s.height, s.width) != (first.height, first.width) {
                    return Err(format!(
                        "concat needs equal spatial dims, got {}x{} and {}x{}",
                        first.height, first.width, s.height, s.width
                    ));
                }
                channels += s.channels;
            }
            Ok(grid(Shape4 { channels, ..first }))
        }
    }
}

fn conv_shape(
    s: Shape4,
    kernel: (usize, usize),
    filters: usize,
    stride: usize,
    padding: Padding,
) -> core::result::Result<Shape4, String> {
    if filters == 0 {
        return Err("convolution needs at least one filter".into());
    }
    if stride == 0 {
        return Err("stride must be >= 1".into());
    }
    let too_big = || {
        format!(
            "kernel {}x{} does not fit a {}x{} input",
            kernel.0, kernel.1, s.height, s.width
        )
    };
    let (h, _) = conv_output_dim(s.height, kernel.0, stride, padding).ok_or_else(too_big)?;
    let (w, _) = conv_output_dim(s.width, kernel.1, stride, padding).ok_or_else(too_big)?;
    Ok(Shape4 {
        batch: 1,
        channels: filters,
        height: h,
        width: w,
    })
}

/// Output geometry of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub kind: &'static str,
    pub shape: Shape4,
}

/// Output shape of every layer, in declaration order.
pub fn propagate_shapes(spec: &ModelSpec) -> Result<Vec<LayerShape>> {
    let nodes = resolve(spec)?;
    Ok(spec
        .layers
        .iter()
        .zip(nodes)
        .map(|(l, n)| LayerShape {
            name: l.name.clone(),
            kind: l.kind.name(),
            shape: n.shape.shape,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRow {
    pub name: String,
    pub kind: &'static str,
    pub shape: Shape4,
    pub params: usize,
}

/// Trainable parameter counts. Running batch-norm statistics are not
/// trainable and are not counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamAudit {
    pub model: String,
    pub rows: Vec<AuditRow>,
    pub total: usize,
}

pub fn audit_parameters(spec: &ModelSpec) -> Result<ParamAudit> {
    let nodes = resolve(spec)?;
    let mut shapes = vec![spec.input];
    shapes.extend(nodes.iter().map(|n| n.shape.shape));
    let rows: Vec<AuditRow> = spec
        .layers
        .iter()
        .zip(&nodes)
        .map(|(l, n)| {
            let in_ch = shapes[n.inputs[0]].channels;
            let params = match l.kind {
                LayerKind::Conv {
                    kernel, filters, ..
                }
                | LayerKind::ConvFat { kernel, filters }
                | LayerKind::ConvTall { kernel, filters } => {
                    filters * in_ch * kernel.0 * kernel.1 + filters
                }
                LayerKind::BatchNorm => 2 * in_ch,
                LayerKind::FullyConnected {
                    in_features,
                    out_features,
                } => in_features * out_features + out_features,
                _ => 0,
            };
            AuditRow {
                name: l.name.clone(),
                kind: l.kind.name(),
                shape: n.shape.shape,
                params,
            }
        })
        .collect();
    Ok(ParamAudit {
        model: spec.name.clone(),
        total: rows.iter().map(|r| r.params).sum(),
        rows,
    })
}

/// Extent of the input region that influences one output unit of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub height: usize,
    pub width: usize,
    /// Input-pixel distance between neighbouring output units.
    pub stride_h: usize,
    pub stride_w: usize,
}

/// Receptive field of every layer, in declaration order, capped at the input
/// size.
pub fn receptive_fields(spec: &ModelSpec) -> Result<Vec<(String, ReceptiveField)>> {
    let nodes = resolve(spec)?;
    let (ih, iw) = (spec.input.height, spec.input.width);
    let full = ReceptiveField {
        height: ih,
        width: iw,
        stride_h: ih,
        stride_w: iw,
    };
    let mut rf = vec![ReceptiveField {
        height: 1,
        width: 1,
        stride_h: 1,
        stride_w: 1,
    }];
    for (layer, node) in spec.layers.iter().zip(&nodes) {
        let x = rf[node.inputs[0]];
        let grow = |kernel: (usize, usize), stride: usize| ReceptiveField {
            height: (x.height + (kernel.0 - 1) * x.stride_h).min(ih),
            width: (x.width + (kernel.1 - 1) * x.stride_w).min(iw),
            stride_h: x.stride_h * stride,
            stride_w: x.stride_w * stride,
        };
        let union = || {
            node.inputs.iter().map(|&s| rf[s]).fold(x, |a, b| ReceptiveField {
                height: a.height.max(b.height),
                width: a.width.max(b.width),
                stride_h: a.stride_h.max(b.stride_h),
                stride_w: a.stride_w.max(b.stride_w),
            })
        };
        let next = match layer.kind {
            LayerKind::Conv { kernel, stride, .. } => grow(kernel, stride),
            LayerKind::ConvFat { kernel, .. } | LayerKind::ConvTall { kernel, .. } => {
                grow(kernel, 1)
            }
            LayerKind::MaxPool { window, stride } => grow((window, window), stride),
            // Element (i, j) of the product reads row i of the column map and
            // column j of the row map.
            LayerKind::OuterFuse | LayerKind::Concat => union(),
            LayerKind::BatchNorm | LayerKind::Relu | LayerKind::Flatten => x,
            LayerKind::FullyConnected { .. } | LayerKind::Softmax => full,
        };
        rf.push(next);
    }
    Ok(spec
        .layers
        .iter()
        .zip(rf.into_iter().skip(1))
        .map(|(l, r)| (l.name.clone(), r))
        .collect())
}

pub fn receptive_field(spec: &ModelSpec, layer: &str) -> Result<ReceptiveField> {
    receptive_fields(spec)?
        .into_iter()
        .find(|(n, _)| n == layer)
        .map(|(_, r)| r)
        .ok_or_else(|| Error::UnknownLayer(layer.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::LayerSpec;

    fn spec(text: &str) -> ModelSpec {
        ModelSpec::parse(text).unwrap()
    }

    #[test]
    fn smallest_graph() {
        let s = spec("model m\ninput (1, 4, 4)\nc = C((3, 3), 2)\nf = Flatten\nfc = FC(32, 3)");
        let shapes = propagate_shapes(&s).unwrap();
        assert_eq!(shapes[2].shape.channels, 3);
        assert_eq!(audit_parameters(&s).unwrap().total, 2 * 9 + 2 + 32 * 3 + 3);
    }

    #[test]
    fn single_fc_audit() {
        let s = spec("model m\ninput (10, 1, 1)\nfc = FC(10, 3)");
        assert_eq!(audit_parameters(&s).unwrap().total, 33);
    }

    #[test]
    fn fc_size_mismatch_names_layer() {
        let s = spec("model m\ninput (1, 4, 4)\nc = C((3, 3), 2)\nf = Flatten\nhead = FC(31, 3)");
        match propagate_shapes(&s) {
            Err(Error::Layer { layer, reason }) => {
                assert_eq!(layer, "head");
                assert!(reason.contains("32"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wiring_errors() {
        // dangling output
        assert!(propagate_shapes(&spec(
            "model m\ninput (1, 4, 4)\na = ReLU\nb = ReLU <- input"
        ))
        .is_err());
        // forward reference
        let mut s = spec("model m\ninput (1, 4, 4)\na = ReLU\nb = ReLU");
        s.layers[0].inputs = alloc::vec!["b".into()];
        assert!(propagate_shapes(&s).is_err());
        // duplicate
        let mut s = spec("model m\ninput (1, 4, 4)\na = ReLU\nb = ReLU");
        s.layers[1].name = "a".into();
        assert!(propagate_shapes(&s).is_err());
        // wrong arity
        let s = ModelSpec {
            layers: alloc::vec![LayerSpec::new("o", LayerKind::OuterFuse, &["input"])],
            ..spec("model m\ninput (1, 4, 4)\na = ReLU")
        };
        assert!(propagate_shapes(&s).is_err());
        // concat needs equal spatial dims
        assert!(propagate_shapes(&spec(
            "model m\ninput (1, 4, 4)\na = P((2, 2), 2)\nb = Concat <- a, input"
        ))
        .is_err());
        // conv after flatten
        assert!(propagate_shapes(&spec("model m\ninput (1, 4, 4)\na = Flatten\nb = C((1, 1), 2)")).is_err());
    }

    #[test]
    fn full_span_kernels_must_span() {
        let ok = spec("model m\ninput (1, 20, 50)\nf = Fat((1, 50), 16)");
        assert_eq!(propagate_shapes(&ok).unwrap()[0].shape.dims(), [1, 16, 20, 1]);
        let t = spec("model m\ninput (1, 20, 50)\nt = Tall((20, 1), 16)");
        assert_eq!(propagate_shapes(&t).unwrap()[0].shape.dims(), [1, 16, 1, 50]);
        assert!(propagate_shapes(&spec("model m\ninput (1, 20, 50)\nf = Fat((1, 49), 16)")).is_err());
    }

    #[test]
    fn identity_trunk_keeps_shape() {
        let s = spec("model m\ninput (3, 5, 7)\na = ReLU\nb = BN");
        assert_eq!(propagate_shapes(&s).unwrap()[1].shape, s.input);
    }

    #[test]
    fn receptive_field_examples() {
        let s = spec("model m\ninput (1, 20, 50)\nc = C((3, 3), 4)");
        let rf = receptive_field(&s, "c").unwrap();
        assert_eq!((rf.height, rf.width), (3, 3));

        let s = spec("model m\ninput (1, 32, 32)\na = C((3, 3), 1)\np = P((2, 2), 2)\nb = C((3, 3), 1)");
        let rf = receptive_field(&s, "b").unwrap();
        assert_eq!((rf.height, rf.width), (8, 8));
        assert!(matches!(receptive_field(&s, "nope"), Err(Error::UnknownLayer(_))));
    }

    #[test]
    fn outer_fuse_sees_whole_image() {
        for (h, w) in [(20, 50), (7, 3), (1, 9)] {
            let s = spec(&format!(
                "model m\ninput (1, {h}, {w})\nf = Fat((1, {w}), 2) <- input\nt = Tall(({h}, 1), 2) <- input\no = Outer <- f, t"
            ));
            let rf = receptive_field(&s, "o").unwrap();
            assert_eq!((rf.height, rf.width), (h, w));
        }
    }
}
