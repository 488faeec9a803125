//! ModelBundle and teacher checkpoints stored as EAD1 containers.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ead1::Container;
use crate::error::{Error, Result};
use crate::model::{MapQuantiles, ModelBundle};
use crate::nets::{autoencoder, pdn, ArchConfig, ChannelNorm, Network, PdnRole, Variant};
use crate::tensor::Tensor;

pub const BUNDLE_ROLE: &str = "checkpoint";
pub const TEACHER_ROLE: &str = "teacher";

fn arch_record(arch: &ArchConfig) -> Tensor {
    let variant = match arch.variant {
        Variant::S => 0.0,
        Variant::M => 1.0,
    };
    Tensor::from_vec(
        &[5],
        vec![
            variant,
            arch.feature_channels as f32,
            arch.width_divisor as f32,
            arch.image_size as f32,
            if arch.padding { 1.0 } else { 0.0 },
        ],
    )
    .expect("5 entries")
}

fn parse_arch(c: &Container, path: &Path) -> Result<ArchConfig> {
    let t = c
        .get("meta.arch")
        .ok_or_else(|| Error::format(path, "missing meta.arch"))?;
    let v = t.data();
    if v.len() != 5 {
        return Err(Error::format(path, "meta.arch must have 5 entries"));
    }
    let variant = match v[0] {
        0.0 => Variant::S,
        1.0 => Variant::M,
        other => return Err(Error::format(path, format!("unknown variant tag {other}"))),
    };
    let arch = ArchConfig {
        variant,
        feature_channels: v[1] as usize,
        width_divisor: v[2] as usize,
        image_size: v[3] as usize,
        padding: v[4] != 0.0,
    };
    arch.validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(arch)
}

fn push_network(c: &mut Container, prefix: &str, net: &Network) {
    for (name, t) in net.named_params() {
        c.push(format!("{prefix}.{name}"), t.clone());
    }
}

fn fill_network(c: &Container, prefix: &str, net: &mut Network, path: &Path) -> Result<()> {
    let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, param) in names.iter().zip(net.params_mut()) {
        let key = format!("{prefix}.{name}");
        let t = c
            .get(&key)
            .ok_or_else(|| Error::format(path, format!("missing record {key}")))?;
        if t.dims() != param.dims() {
            return Err(Error::format(
                path,
                format!(
                    "record {key}: dims {:?}, expected {:?}",
                    t.dims(),
                    param.dims()
                ),
            ));
        }
        *param = t.clone();
    }
    Ok(())
}

fn expect_role(c: &Container, role: &str, path: &Path) -> Result<()> {
    if c.role != role {
        return Err(Error::format(
            path,
            format!("role {:?}, expected {role:?}", c.role),
        ));
    }
    Ok(())
}

pub fn bundle_container(bundle: &ModelBundle) -> Result<Container> {
    let mut c = Container::new(BUNDLE_ROLE);
    c.push("meta.arch", arch_record(&bundle.arch));
    let n = bundle.channel_norm.channels();
    c.push(
        "channel_norm.mean",
        Tensor::from_vec(&[n], bundle.channel_norm.mean.clone())?,
    );
    c.push(
        "channel_norm.std",
        Tensor::from_vec(&[n], bundle.channel_norm.std.clone())?,
    );
    let q = bundle.quantiles;
    c.push(
        "quantiles",
        Tensor::from_vec(&[4], vec![q.st_a, q.st_b, q.ae_a, q.ae_b])?,
    );
    push_network(&mut c, "teacher", &bundle.teacher);
    push_network(&mut c, "student", &bundle.student);
    push_network(&mut c, "autoencoder", &bundle.autoencoder);
    Ok(c)
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    bundle_container(bundle)?.write(path)
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let c = Container::read(path)?;
    expect_role(&c, BUNDLE_ROLE, path)?;
    let arch = parse_arch(&c, path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut teacher = pdn(&arch, PdnRole::Teacher, &mut rng)?;
    let mut student = pdn(&arch, PdnRole::Student, &mut rng)?;
    let mut ae = autoencoder(&arch, &mut rng)?;
    fill_network(&c, "teacher", &mut teacher, path)?;
    fill_network(&c, "student", &mut student, path)?;
    fill_network(&c, "autoencoder", &mut ae, path)?;
    let get = |name: &str, len: usize| -> Result<Vec<f32>> {
        let t = c
            .get(name)
            .ok_or_else(|| Error::format(path, format!("missing record {name}")))?;
        if t.len() != len {
            return Err(Error::format(
                path,
                format!("record {name}: {} values, expected {len}", t.len()),
            ));
        }
        Ok(t.data().to_vec())
    };
    let n = arch.feature_channels;
    let channel_norm = ChannelNorm {
        mean: get("channel_norm.mean", n)?,
        std: get("channel_norm.std", n)?,
    };
    let q = get("quantiles", 4)?;
    Ok(ModelBundle {
        arch,
        teacher,
        student,
        autoencoder: ae,
        channel_norm,
        quantiles: MapQuantiles {
            st_a: q[0],
            st_b: q[1],
            ae_a: q[2],
            ae_b: q[3],
        },
    })
}

/// Teacher-only checkpoint, as written by distillation.
pub fn save_teacher(teacher: &Network, arch: &ArchConfig, path: &Path) -> Result<()> {
    let mut c = Container::new(TEACHER_ROLE);
    c.push("meta.arch", arch_record(arch));
    push_network(&mut c, "teacher", teacher);
    c.write(path)
}

pub fn load_teacher(path: &Path) -> Result<(Network, ArchConfig)> {
    let c = Container::read(path)?;
    expect_role(&c, TEACHER_ROLE, path)?;
    let arch = parse_arch(&c, path)?;
    let mut teacher = pdn(&arch, PdnRole::Teacher, &mut ChaCha8Rng::seed_from_u64(0))?;
    fill_network(&c, "teacher", &mut teacher, path)?;
    Ok((teacher, arch))
}
