//! Checkpoints and transfer-learned encoder import, both built on
//! [`WeightContainer`].

use std::collections::BTreeSet;
use std::path::Path;

use serde_json::json;

use super::config::NetConfig;
use super::container::{khkwio_to_oikhkw, KernelLayout, WeightContainer};
use super::network::AttentionUNet;
use crate::error::{Error, Result};

const META_CONFIG: &str = "net_config";
const META_IMPORTED: &str = "imported_layers";
const META_FREEZE: &str = "freeze_imported";

/// VGG19 tensors consumed by [`import_pretrained`], paired with the encoder
/// layer each one initialises.
pub const VGG_LAYERS: [(&str, &str); 4] = [
    ("block1_conv1", "enc0.conv1"),
    ("block1_conv2", "enc0.conv2"),
    ("block2_conv1", "enc1.conv1"),
    ("block2_conv2", "enc1.conv2"),
];

/// Serialises every parameter plus the configuration and import flags.
pub fn to_container(net: &AttentionUNet<f32>) -> Result<WeightContainer> {
    let mut c = WeightContainer::new(KernelLayout::OutInKhKw);
    for (name, t) in net.params() {
        c.insert(&name, t.shape(), t.data())?;
    }
    c.set_metadata(
        META_CONFIG,
        serde_json::to_value(net.config()).map_err(|e| Error::Json {
            context: "net config".into(),
            source: e,
        })?,
    );
    c.set_metadata(META_IMPORTED, json!(net.imported_layers()));
    c.set_metadata(META_FREEZE, json!(net.freeze_imported()));
    Ok(c)
}

/// Rebuilds a network from a checkpoint container. Every parameter must be
/// present with the expected shape; nothing partial is ever returned.
pub fn from_container(c: &WeightContainer) -> Result<AttentionUNet<f32>> {
    let meta = |key: &str| {
        c.metadata()
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Import(format!("checkpoint metadata lacks {key}")))
    };
    let config: NetConfig = serde_json::from_value(meta(META_CONFIG)?).map_err(|e| Error::Json {
        context: "checkpoint net_config".into(),
        source: e,
    })?;
    let imported: BTreeSet<String> = serde_json::from_value(meta(META_IMPORTED)?).map_err(|e| Error::Json {
        context: "checkpoint imported_layers".into(),
        source: e,
    })?;
    let freeze = meta(META_FREEZE)?
        .as_bool()
        .ok_or_else(|| Error::Import("freeze_imported is not a boolean".into()))?;
    if c.layout() != KernelLayout::OutInKhKw {
        return Err(Error::Import("checkpoints must use out_in_kh_kw layout".into()));
    }
    let mut net = AttentionUNet::<f32>::new(config)?;
    let expected: BTreeSet<String> = net.params().into_iter().map(|(n, _)| n).collect();
    if let Some(extra) = c.names().find(|n| !expected.contains(*n)) {
        return Err(Error::Import(format!("unexpected tensor {extra} in checkpoint")));
    }
    for (name, t, _) in net.params_mut() {
        let (shape, values) = c
            .get(&name)
            .ok_or_else(|| Error::Import(format!("checkpoint is missing {name}")))?;
        if shape != t.shape() {
            return Err(Error::Import(format!(
                "{name}: expected shape {:?}, found {shape:?}",
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(&values);
    }
    net.imported = imported;
    net.freeze_imported = freeze;
    Ok(net)
}

pub fn save_checkpoint(net: &AttentionUNet<f32>, path: &Path) -> Result<()> {
    to_container(net)?.write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<AttentionUNet<f32>> {
    from_container(&WeightContainer::read(path)?)
}

/// Copies the first two VGG19 convolution blocks into encoder stages 0–1.
///
/// Kernels may be stored in either layout declared by the container; biases
/// are 1-D. All eight tensors are validated before anything is written, so a
/// failed import leaves `net` untouched.
pub fn import_pretrained(net: &mut AttentionUNet<f32>, c: &WeightContainer) -> Result<()> {
    let mut staged = Vec::with_capacity(VGG_LAYERS.len());
    let mut problems = Vec::new();
    for (src, dst) in VGG_LAYERS {
        let layer = net
            .layer_mut(dst)
            .ok_or_else(|| Error::Import(format!("network has no layer {dst}")))?;
        let want_w = layer.weights.shape().to_vec();
        let want_b = layer.bias.shape().to_vec();
        let (o, i, kh, kw) = (want_w[0], want_w[1], want_w[2], want_w[3]);
        let weight_name = format!("{src}.weight");
        let bias_name = format!("{src}.bias");
        let stored_w = match c.layout() {
            KernelLayout::OutInKhKw => want_w.clone(),
            KernelLayout::KhKwInOut => vec![kh, kw, i, o],
        };
        let weight = match c.get(&weight_name) {
            None => {
                problems.push(format!("{weight_name}: expected {stored_w:?}, found nothing"));
                None
            }
            Some((shape, _)) if shape != stored_w => {
                problems.push(format!("{weight_name}: expected {stored_w:?}, found {shape:?}"));
                None
            }
            Some((shape, v)) => Some(match c.layout() {
                KernelLayout::OutInKhKw => v,
                KernelLayout::KhKwInOut => khkwio_to_oikhkw(&shape, &v).1,
            }),
        };
        let bias = match c.get(&bias_name) {
            None => {
                problems.push(format!("{bias_name}: expected {want_b:?}, found nothing"));
                None
            }
            Some((shape, _)) if shape != want_b => {
                problems.push(format!("{bias_name}: expected {want_b:?}, found {shape:?}"));
                None
            }
            Some((_, v)) => Some(v),
        };
        if let (Some(w), Some(b)) = (weight, bias) {
            staged.push((dst, w, b));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Import(problems.join("; ")));
    }
    for (dst, w, b) in staged {
        let layer = net.layer_mut(dst).expect("checked above");
        layer.weights.data_mut().copy_from_slice(&w);
        layer.bias.data_mut().copy_from_slice(&b);
        net.imported.insert(dst.to_owned());
    }
    Ok(())
}
