//! Blending regions `Ω₀` drawn at time zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GridFrame, ImageGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionMask {
    /// Binary raster over an image grid; looked up bilinearly, inside when > 0.5.
    Raster {
        width: usize,
        height: usize,
        values: Vec<f64>,
    },
    /// Closed polygon in normalized coordinates (even-odd rule).
    Polygon(Vec<[f64; 2]>),
}

#[derive(Serialize, Deserialize)]
struct PolygonFile {
    polygon: Vec<[f64; 2]>,
}

impl RegionMask {
    pub fn from_fn(width: usize, height: usize, inside: impl Fn([f64; 2]) -> bool) -> Self {
        let frame = GridFrame::new(width, height);
        let mut values = Vec::with_capacity(width * height);
        for py in 0..height {
            for px in 0..width {
                values.push(if inside(frame.to_domain(px as f64, py as f64)) { 1.0 } else { 0.0 });
            }
        }
        RegionMask::Raster {
            width,
            height,
            values,
        }
    }

    pub fn disk(width: usize, height: usize, center: [f64; 2], radius: f64) -> Self {
        Self::from_fn(width, height, |p| {
            (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |_| true)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |_| false)
    }

    pub fn from_image(img: &ImageGrid) -> Self {
        let c = img.channels();
        let values = img
            .pixels()
            .chunks(c)
            .map(|px| if px.iter().any(|&v| v > 0.0) { 1.0 } else { 0.0 })
            .collect();
        RegionMask::Raster {
            width: img.width(),
            height: img.height(),
            values,
        }
    }

    /// Loads a PNG (nonzero = inside) or a `{"polygon": [[x, y], ...]}` file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::from_polygon_json(&text)
        } else {
            Ok(Self::from_image(&ImageGrid::load(path)?))
        }
    }

    pub fn from_polygon_json(text: &str) -> Result<Self> {
        let doc: PolygonFile = serde_json::from_str(text)?;
        if doc.polygon.len() < 3 {
            return Err(Error::Invalid("polygon needs at least three vertices".into()));
        }
        Ok(RegionMask::Polygon(doc.polygon))
    }

    pub fn grid_dims(&self) -> Option<(usize, usize)> {
        match self {
            RegionMask::Raster { width, height, .. } => Some((*width, *height)),
            RegionMask::Polygon(_) => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            RegionMask::Raster { values, .. } => values.iter().all(|&v| v <= 0.5),
            RegionMask::Polygon(poly) => poly.len() < 3,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            RegionMask::Raster {
                width,
                height,
                values,
            } => bilinear(*width, *height, values, p) > 0.5,
            RegionMask::Polygon(poly) => point_in_polygon(poly, p),
        }
    }

    /// Rasterizes onto `width × height` pixel centers.
    pub fn rasterize(&self, width: usize, height: usize) -> Vec<bool> {
        let frame = GridFrame::new(width, height);
        (0..height)
            .flat_map(|py| (0..width).map(move |px| (px, py)))
            .map(|(px, py)| self.contains(frame.to_domain(px as f64, py as f64)))
            .collect()
    }
}

fn bilinear(width: usize, height: usize, values: &[f64], p: [f64; 2]) -> f64 {
    let frame = GridFrame::new(width, height);
    let [u, v] = frame.to_pixel(p);
    // samples outside the grid read as zero
    let at = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            0.0
        } else {
            values[y as usize * width + x as usize]
        }
    };
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

fn point_in_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_mask_contains_interior() {
        let m = RegionMask::full(16, 16);
        for p in [[0.0, 0.0], [0.9, -0.9], [-0.99, 0.5], [1.0, 1.0]] {
            assert!(m.contains(p));
        }
        assert!(!m.contains([1.2, 0.0]));
    }

    #[test]
    fn raster_lookup_at_pixel_centers_is_exact() {
        let m = RegionMask::disk(9, 9, [0.0, 0.0], 0.5);
        let frame = GridFrame::new(9, 9);
        let RegionMask::Raster { values, .. } = &m else { unreachable!() };
        for py in 0..9 {
            for px in 0..9 {
                let p = frame.to_domain(px as f64, py as f64);
                assert_eq!(m.contains(p), values[py * 9 + px] > 0.5);
            }
        }
    }

    #[test]
    fn polygon_membership() {
        let m = RegionMask::from_polygon_json(r#"{"polygon":[[-0.5,-0.5],[0.5,-0.5],[0.5,0.5],[-0.5,0.5]]}"#)
            .unwrap();
        assert!(m.contains([0.0, 0.0]));
        assert!(!m.contains([0.6, 0.0]));
        assert!(m.grid_dims().is_none());
    }

    #[test]
    fn empty_detection() {
        assert!(RegionMask::empty(8, 8).is_empty());
        assert!(!RegionMask::disk(8, 8, [0.0, 0.0], 0.3).is_empty());
    }
}
