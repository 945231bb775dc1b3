use ndarray::Array2;
use neurowarp_core::image::{GridFrame, ImageGrid};
use neurowarp_core::Result;

/// Domain coordinates of the pixel centres of a `width × height` frame.
pub fn frame_coords(width: usize, height: usize) -> Array2<f64> {
    GridFrame::new(width, height).centers()
}

pub fn to_image(width: usize, height: usize, colors: &Array2<f64>) -> Result<ImageGrid> {
    ImageGrid::from_array(width, height, &colors.mapv(|v| v.clamp(0.0, 1.0)))
}

/// Black and white squares, eight across the domain.
pub fn checkerboard(p: [f64; 2]) -> f64 {
    let cell = |v: f64| ((v + 1.0) * 4.0).floor() as i64;
    if (cell(p[0]) + cell(p[1])).rem_euclid(2) == 0 {
        0.85
    } else {
        0.15
    }
}

/// RGB drawing surface over a frame.
pub struct Canvas {
    width: usize,
    height: usize,
    rgb: Vec<f64>,
}

pub const PATH_COLOR: [f64; 3] = [1.0, 0.85, 0.1];
pub const START_COLOR: [f64; 3] = [0.1, 0.9, 0.2];
pub const END_COLOR: [f64; 3] = [0.95, 0.15, 0.1];

impl Canvas {
    pub fn from_image(img: &ImageGrid) -> Self {
        let rgb = img.with_channels(3).expect("1 or 3 channels convert to RGB");
        Canvas {
            width: img.width(),
            height: img.height(),
            rgb: rgb.pixels().to_vec(),
        }
    }

    pub fn set(&mut self, x: i64, y: i64, color: [f64; 3]) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.rgb[i..i + 3].copy_from_slice(&color);
    }

    pub fn line(&mut self, a: [f64; 2], b: [f64; 2], color: [f64; 3]) {
        let steps = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let u = s as f64 / steps as f64;
            let x = a[0] + (b[0] - a[0]) * u;
            let y = a[1] + (b[1] - a[1]) * u;
            self.set(x.round() as i64, y.round() as i64, color);
        }
    }

    pub fn dot(&mut self, c: [f64; 2], radius: i64, color: [f64; 3]) {
        let (cx, cy) = (c[0].round() as i64, c[1].round() as i64);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    self.set(cx + dx, cy + dy, color);
                }
            }
        }
    }

    pub fn into_image(self) -> ImageGrid {
        ImageGrid::new(self.width, self.height, 3, self.rgb).expect("canvas keeps values in range")
    }
}

/// Draws landmark trajectories (domain coordinates) over `base`. With no
/// paths the base is returned untouched.
pub fn overlay_paths(base: &ImageGrid, paths: &[Vec<[f64; 2]>]) -> ImageGrid {
    if paths.is_empty() {
        return base.clone();
    }
    let frame = base.frame();
    let mut canvas = Canvas::from_image(base);
    for path in paths {
        let px: Vec<[f64; 2]> = path.iter().map(|&p| frame.to_pixel(p)).collect();
        for w in px.windows(2) {
            canvas.line(w[0], w[1], PATH_COLOR);
        }
        if let (Some(&first), Some(&last)) = (px.first(), px.last()) {
            canvas.dot(first, 1, START_COLOR);
            canvas.dot(last, 1, END_COLOR);
        }
    }
    canvas.into_image()
}

/// Places equally sized panels side by side.
pub fn strip(panels: &[ImageGrid]) -> Result<ImageGrid> {
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(2);
    let w: usize = panels.iter().map(|p| p.width()).sum::<usize>().max(2);
    let mut rgb = vec![0.0; w * h * 3];
    let mut x0 = 0;
    for panel in panels {
        let p = panel.with_channels(3)?;
        for y in 0..p.height() {
            for x in 0..p.width() {
                for c in 0..3 {
                    rgb[(y * w + x0 + x) * 3 + c] = p.get(x, y, c);
                }
            }
        }
        x0 += p.width();
    }
    ImageGrid::new(w, h, 3, rgb)
}
