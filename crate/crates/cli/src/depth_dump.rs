//! Debug dump of a depth frame: a text file with the header
//! `width height fx fy cx cy` followed by row-major depths in metres,
//! `-1` for pixels with no return.

use std::path::Path;

use anyhow::{bail, Context, Result};
use thicket_core::depth::{CameraIntrinsics, DepthImage, NO_RETURN};

pub fn write_dump(image: &DepthImage) -> String {
    let i = &image.intrinsics;
    let mut out = format!("{} {} {} {} {} {}\n", i.width, i.height, i.fx, i.fy, i.cx, i.cy);
    for v in 0..i.height {
        let row: Vec<String> = (0..i.width).map(|u| format!("{}", image.at(u, v))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Read a dump back. The pose and timestamp are not part of the format;
/// the caller supplies the maximum range.
#[allow(dead_code)]
pub fn read_dump(path: &Path, max_range: f64) -> Result<DepthImage> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading depth dump {}", path.display()))?;
    parse_dump(&text, max_range).with_context(|| format!("in depth dump {}", path.display()))
}

#[allow(dead_code)]
pub fn parse_dump(text: &str, max_range: f64) -> Result<DepthImage> {
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<f64> {
        tokens
            .next()
            .with_context(|| format!("missing {what}"))?
            .parse::<f64>()
            .with_context(|| format!("{what} is not a number"))
    };
    let width = next("width")? as usize;
    let height = next("height")? as usize;
    let fx = next("fx")?;
    let fy = next("fy")?;
    let cx = next("cx")?;
    let cy = next("cy")?;
    let intrinsics = CameraIntrinsics::new(fx, fy, cx, cy, width, height)?;
    let mut depths = Vec::with_capacity(width * height);
    for i in 0..width * height {
        depths.push(next(&format!("depth {i}"))?);
    }
    if tokens.next().is_some() {
        bail!("trailing data after {} depths", width * height);
    }
    for d in &depths {
        if *d != NO_RETURN && !(*d > 0.0) {
            bail!("depth {d} is neither positive nor the no-return sentinel");
        }
    }
    DepthImage::new(intrinsics, depths, nalgebra::Isometry3::identity(), 0.0, max_range)
        .map_err(Into::into)
}
