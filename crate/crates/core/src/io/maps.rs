//! Anomaly-map export: EAD1 container and 16-bit grayscale PNG.

use std::path::Path;

use super::ead1::Container;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAP_ROLE: &str = "map";

/// Writes a map as EAD1 with role "map" and one record "map" of dims [H, W].
pub fn write_map_ead1(map: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = map_hw(map)?;
    let mut c = Container::new(MAP_ROLE);
    c.push("map", Tensor::from_vec(&[h, w], map.data().to_vec())?);
    c.write(path)
}

fn map_hw(map: &Tensor) -> Result<(usize, usize)> {
    match map.dims() {
        [1, h, w] | [h, w] => Ok((*h, *w)),
        other => Err(Error::shape(
            "map export",
            "dims",
            "[1, H, W] or [H, W]",
            format!("{other:?}"),
        )),
    }
}

/// Affine used for PNG export: `value = min + pixel / 65535 * (max - min)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapAffine {
    pub min: f32,
    pub max: f32,
}

/// Maps min→0 and max→65535 and writes a 16-bit PNG plus a `<png>.txt`
/// sidecar recording the affine.
pub fn write_map_png16(map: &Tensor, path: &Path) -> Result<MapAffine> {
    let (h, w) = map_hw(map)?;
    let (min, max) = (map.min(), map.max());
    let span = max - min;
    let buf =
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_fn(w as u32, h as u32, |x, y| {
            let v = map.data()[y as usize * w + x as usize];
            let q = if span > 0.0 {
                ((v - min) / span * 65535.0).round()
            } else {
                0.0
            };
            image::Luma([q.clamp(0.0, 65535.0) as u16])
        });
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let sidecar = path.with_extension("png.txt");
    let text = format!("min {min:e}\nmax {max:e}\n# value = min + pixel / 65535 * (max - min)\n");
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(MapAffine { min, max })
}
