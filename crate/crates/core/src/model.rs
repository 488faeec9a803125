use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nets::{autoencoder, pdn, ArchConfig, ChannelNorm, Network, PdnRole};

/// Quantiles of the validation anomaly-map pools, mapped to 0 and 0.1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapQuantiles {
    pub st_a: f32,
    pub st_b: f32,
    pub ae_a: f32,
    pub ae_b: f32,
}

impl Default for MapQuantiles {
    fn default() -> Self {
        MapQuantiles {
            st_a: 0.0,
            st_b: 1.0,
            ae_a: 0.0,
            ae_b: 1.0,
        }
    }
}

/// Everything needed for inference: the three networks, the teacher channel
/// statistics, and the four map-normalization quantiles.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub arch: ArchConfig,
    pub teacher: Network,
    pub student: Network,
    pub autoencoder: Network,
    pub channel_norm: ChannelNorm,
    pub quantiles: MapQuantiles,
}

impl ModelBundle {
    /// Freshly initialized networks with identity normalization.
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let teacher = pdn(&arch, PdnRole::Teacher, &mut rng)?;
        Self::with_teacher(arch, teacher, &mut rng)
    }

    /// Wraps a given (distilled) teacher with a new student and autoencoder.
    pub fn with_teacher(arch: ArchConfig, teacher: Network, rng: &mut ChaCha8Rng) -> Result<Self> {
        let student = pdn(&arch, PdnRole::Student, rng)?;
        let autoencoder = autoencoder(&arch, rng)?;
        Ok(ModelBundle {
            arch,
            teacher,
            student,
            autoencoder,
            channel_norm: ChannelNorm::identity(arch.feature_channels),
            quantiles: MapQuantiles::default(),
        })
    }

    pub fn param_count(&self) -> usize {
        self.teacher.param_count() + self.student.param_count() + self.autoencoder.param_count()
    }
}
