//! Built-in architecture specs.
//!
//! `tiny-mlp` and `tiny-resnet` are desk-scale trainable networks;
//! `mobilenetv2-cost` is the full MobileNetV2 layer graph used to validate
//! the cost models against published MAC counts and is never trained.

use super::{ArchError, ArchSpec, LayerKind, LayerSpec};

/// Where a new layer's output width comes from.
enum Width {
    /// Allocate a fresh tie group for this layer.
    NewGroup,
    /// Join an existing tie group (residual and depthwise ties).
    Join(usize),
    /// Not scalable (classifier head).
    Fixed,
}

struct SpecBuilder {
    layers: Vec<LayerSpec>,
    tie_groups: Vec<Vec<usize>>,
}

impl SpecBuilder {
    fn new() -> Self {
        SpecBuilder {
            layers: Vec::new(),
            tie_groups: Vec::new(),
        }
    }

    fn push(&mut self, mut layer: LayerSpec, width: Width) -> usize {
        let id = self.layers.len();
        layer.id = id;
        match width {
            Width::NewGroup => self.tie_groups.push(vec![id]),
            Width::Join(group) => self.tie_groups[group].push(id),
            Width::Fixed => {}
        }
        self.layers.push(layer);
        id
    }

    /// Tie group holding `layer`'s output width, for later joins.
    fn group_of(&self, layer: usize) -> usize {
        self.tie_groups
            .iter()
            .position(|members| members.contains(&layer))
            .expect("layer has a tie group")
    }

    fn conv(
        &mut self,
        kernel: u32,
        stride: u32,
        groups: u32,
        in_base: u32,
        out_base: u32,
        src: Option<usize>,
        width: Width,
    ) -> usize {
        self.push(
            LayerSpec {
                id: 0,
                kind: LayerKind::Conv,
                kernel_w: kernel,
                kernel_h: kernel,
                stride,
                groups,
                in_channels_base: in_base,
                out_channels_base: out_base,
                input_sources: src.into_iter().collect(),
                spatial_out_w: 0,
                spatial_out_h: 0,
            },
            width,
        )
    }

    fn dense(&mut self, in_base: u32, out_base: u32, src: Option<usize>, width: Width) -> usize {
        self.push(
            LayerSpec {
                id: 0,
                kind: LayerKind::Dense,
                kernel_w: 1,
                kernel_h: 1,
                stride: 1,
                groups: 1,
                in_channels_base: in_base,
                out_channels_base: out_base,
                input_sources: src.into_iter().collect(),
                spatial_out_w: 0,
                spatial_out_h: 0,
            },
            width,
        )
    }

    fn add(&mut self, a: usize, b: usize) -> usize {
        self.push(
            LayerSpec::weight_free(LayerKind::Add, 0, vec![a, b]),
            Width::Fixed,
        )
    }

    fn global_pool(&mut self, src: usize) -> usize {
        self.push(
            LayerSpec::weight_free(LayerKind::GlobalPool, 0, vec![src]),
            Width::Fixed,
        )
    }

    fn classifier(&mut self, in_base: u32, classes: u32, src: usize) -> usize {
        self.push(
            LayerSpec {
                id: 0,
                kind: LayerKind::ClassifierDense,
                kernel_w: 1,
                kernel_h: 1,
                stride: 1,
                groups: 1,
                in_channels_base: in_base,
                out_channels_base: classes,
                input_sources: vec![src],
                spatial_out_w: 0,
                spatial_out_h: 0,
            },
            Width::Fixed,
        )
    }

    fn build(
        self,
        name: &str,
        input_resolution: (u32, u32, u32),
        w0: f64,
    ) -> Result<ArchSpec, ArchError> {
        ArchSpec::new(name, self.layers, self.tie_groups, input_resolution, w0)
    }
}

/// Returns a built-in spec by name: `tiny-mlp`, `tiny-resnet`, or
/// `mobilenetv2-cost`.
pub fn builtin_specs(name: &str) -> Result<ArchSpec, ArchError> {
    match name {
        "tiny-mlp" => tiny_mlp(),
        "tiny-resnet" => tiny_resnet(),
        "mobilenetv2-cost" => mobilenetv2_cost(),
        other => Err(ArchError::UnknownArch(other.to_string())),
    }
}

/// Four dense layers on 8 input features, 4 classes; the three hidden widths
/// are independent, d = 3.
fn tiny_mlp() -> Result<ArchSpec, ArchError> {
    let mut b = SpecBuilder::new();
    let h1 = b.dense(8, 32, None, Width::NewGroup);
    let h2 = b.dense(32, 32, Some(h1), Width::NewGroup);
    let h3 = b.dense(32, 32, Some(h2), Width::NewGroup);
    b.classifier(32, 4, h3);
    b.build("tiny-mlp", (1, 1, 8), 0.25)
}

/// Three-stage residual conv net on a 4x4x2 input, 3 classes. Each stage has
/// one multiplier for its residual-tied widths and one for the block's inner
/// conv, d = 6.
fn tiny_resnet() -> Result<ArchSpec, ArchError> {
    let mut b = SpecBuilder::new();

    // stage 1 @ 4x4: stem + one basic block, residual width shared with stem
    let stem = b.conv(3, 1, 1, 2, 16, None, Width::NewGroup);
    let r1 = b.group_of(stem);
    let s1_inner = b.conv(3, 1, 1, 16, 16, Some(stem), Width::NewGroup);
    let s1_out = b.conv(3, 1, 1, 16, 16, Some(s1_inner), Width::Join(r1));
    let s1_add = b.add(s1_out, stem);

    // stage 2 @ 2x2: strided block with 1x1 projection on the shortcut
    let s2_inner = b.conv(3, 2, 1, 16, 24, Some(s1_add), Width::NewGroup);
    let s2_out = b.conv(3, 1, 1, 24, 24, Some(s2_inner), Width::NewGroup);
    let r2 = b.group_of(s2_out);
    let s2_proj = b.conv(1, 2, 1, 16, 24, Some(s1_add), Width::Join(r2));
    let s2_add = b.add(s2_out, s2_proj);

    // stage 3 @ 1x1
    let s3_inner = b.conv(3, 2, 1, 24, 32, Some(s2_add), Width::NewGroup);
    let s3_out = b.conv(3, 1, 1, 32, 32, Some(s3_inner), Width::NewGroup);
    let r3 = b.group_of(s3_out);
    let s3_proj = b.conv(1, 2, 1, 24, 32, Some(s2_add), Width::Join(r3));
    let s3_add = b.add(s3_out, s3_proj);

    let pooled = b.global_pool(s3_add);
    b.classifier(32, 3, pooled);
    b.build("tiny-resnet", (4, 4, 2), 0.316)
}

/// Full MobileNetV2 graph at 224x224x3, 1000 classes. Depthwise convs share
/// their preceding pointwise conv's group and residual chains share one
/// output group, leaving d = 25 independent multipliers.
fn mobilenetv2_cost() -> Result<ArchSpec, ArchError> {
    // (expansion t, output channels c, repeats n, first stride s)
    const SETTINGS: [(u32, u32, u32, u32); 7] = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ];

    let mut b = SpecBuilder::new();
    let stem = b.conv(3, 2, 1, 3, 32, None, Width::NewGroup);
    let mut prev = stem;
    let mut prev_channels = 32u32;

    for (t, c, n, s) in SETTINGS {
        let mut chain_group = None;
        for repeat in 0..n {
            let stride = if repeat == 0 { s } else { 1 };
            let block_in = prev;
            let in_c = prev_channels;
            let expanded = in_c * t;

            // expansion pointwise (absent at t = 1); the depthwise conv is
            // width-tied to whatever produced its input
            let (dw_src, dw_group) = if t == 1 {
                (block_in, b.group_of(block_in))
            } else {
                let expand = b.conv(1, 1, 1, in_c, expanded, Some(block_in), Width::NewGroup);
                (expand, b.group_of(expand))
            };
            let dw = b.conv(
                3,
                stride,
                expanded,
                expanded,
                expanded,
                Some(dw_src),
                Width::Join(dw_group),
            );

            // linear bottleneck projection; blocks of one chain share a group
            // because their outputs are joined by residual adds
            let proj_width = match chain_group {
                Some(g) => Width::Join(g),
                None => Width::NewGroup,
            };
            let proj = b.conv(1, 1, 1, expanded, c, Some(dw), proj_width);
            if chain_group.is_none() {
                chain_group = Some(b.group_of(proj));
            }

            prev = if stride == 1 && in_c == c {
                b.add(proj, block_in)
            } else {
                proj
            };
            prev_channels = c;
        }
    }

    let head = b.conv(1, 1, 1, 320, 1280, Some(prev), Width::NewGroup);
    let pooled = b.global_pool(head);
    b.classifier(1280, 1000, pooled);
    b.build("mobilenetv2-cost", (224, 224, 3), 0.42)
}
