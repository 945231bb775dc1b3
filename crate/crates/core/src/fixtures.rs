//! Procedurally generated test inputs: landmark sets, a synthetic face pair
//! with 68-point annotations, simple rasters, and masks.

use std::f64::consts::PI;

use crate::blend::{MorphConfig, TimeSampling};
use crate::image::ImageGrid;
use crate::mlp::AdamConfig;
use crate::neural_image::ImageFitConfig;
use crate::warp::{LossWeights, WarpConfig};
use crate::landmarks::{LandmarkPair, LandmarkPairs};
use crate::region::RegionMask;

/// Displacement of the translation fixture.
pub const TRANSLATION: [f64; 2] = [0.2, 0.0];

fn ring(n: usize, center: [f64; 2], radius: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

/// Ten pairs with `p_j = q_j`.
pub fn fixed_points() -> LandmarkPairs {
    let p = ring(10, [0.0, 0.0], 0.5);
    LandmarkPairs::from_points(&p, &p).expect("valid fixture")
}

/// Ten pairs with `q_j = p_j + (0.2, 0)`.
pub fn translation() -> LandmarkPairs {
    let p = ring(10, [-0.1, 0.0], 0.5);
    let q: Vec<_> = p
        .iter()
        .map(|v| [v[0] + TRANSLATION[0], v[1] + TRANSLATION[1]])
        .collect();
    LandmarkPairs::from_points(&p, &q).expect("valid fixture")
}

/// Training budget used for the bundled landmark fixtures.
pub fn warp_config(steps: usize, thin_plate: f64) -> WarpConfig {
    WarpConfig {
        identity_samples: 1024,
        spacetime_samples: 1024,
        steps,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        weights: LossWeights {
            thin_plate,
            ..LossWeights::default()
        },
        seed: 7,
        ..WarpConfig::default()
    }
}

pub fn fixed_points_config() -> WarpConfig {
    warp_config(1000, 1.0)
}

pub fn translation_config() -> WarpConfig {
    warp_config(2000, 1.0)
}

/// The face pair needs a lighter thin-plate weight to meet the landmark
/// tolerance with 68 non-uniform displacements.
pub fn face_config() -> WarpConfig {
    warp_config(3000, 0.01)
}

/// Image fit budget for the bundled 64×64 rasters.
pub fn fit_config() -> ImageFitConfig {
    ImageFitConfig {
        hidden: vec![64, 64],
        steps: 400,
        batch: 0,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        lr_final: Some(1e-4),
        ..ImageFitConfig::default()
    }
}

/// Compact morph budget for small frames. The boundary term is weighted up
/// so the values outside the region stay pinned while the interior absorbs
/// the gradient mismatch along the region border.
pub fn morph_config(steps: usize, time: TimeSampling) -> MorphConfig {
    MorphConfig {
        hidden: vec![64, 64],
        omega0: 10.0,
        steps,
        batch: 1024,
        pool: 16384,
        edge_samples: 1024,
        time,
        boundary_weight: 30.0,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        seed: 3,
        ..MorphConfig::default()
    }
}

/// Disk used with the translation fixture.
pub const DISK_CENTER: [f64; 2] = [-0.1, 0.0];
pub const DISK_RADIUS: f64 = 0.35;

pub fn disk_mask(width: usize, height: usize) -> RegionMask {
    RegionMask::disk(width, height, DISK_CENTER, DISK_RADIUS)
}

pub fn constant_image(width: usize, height: usize) -> ImageGrid {
    ImageGrid::from_fn(width, height, 1, |_| vec![0.5]).expect("valid fixture")
}

/// Horizontal ramp `(x + 1) / 2`.
pub fn ramp_image(width: usize, height: usize) -> ImageGrid {
    ImageGrid::from_fn(width, height, 1, |[x, _]| vec![(x + 1.0) / 2.0]).expect("valid fixture")
}

/// Light disk of radius [`DISK_RADIUS`] on a dark ramp, anti-aliased over
/// two pixels.
pub fn disk_image(width: usize, height: usize, center: [f64; 2]) -> ImageGrid {
    let edge = 4.0 / width.max(height) as f64;
    ImageGrid::from_fn(width, height, 1, move |p| {
        let d = (p[0] - center[0]).hypot(p[1] - center[1]) - DISK_RADIUS;
        let a = coverage(d, edge);
        vec![0.15 + 0.05 * p[1] + a * 0.7]
    })
    .expect("valid fixture")
}

/// Geometry of one synthetic face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceShape {
    pub center: [f64; 2],
    pub jaw_radii: [f64; 2],
    pub eye_offset: f64,
    pub eye_height: f64,
    pub eye_radii: [f64; 2],
    pub brow_lift: f64,
    pub nose_length: f64,
    pub mouth_height: f64,
    pub mouth_width: f64,
    pub skin: [f64; 3],
    pub background: [f64; 3],
}

impl FaceShape {
    pub fn a() -> Self {
        FaceShape {
            center: [0.0, 0.0],
            jaw_radii: [0.55, 0.7],
            eye_offset: 0.22,
            eye_height: -0.2,
            eye_radii: [0.1, 0.045],
            brow_lift: 0.13,
            nose_length: 0.32,
            mouth_height: 0.36,
            mouth_width: 0.21,
            skin: [0.87, 0.7, 0.58],
            background: [0.25, 0.35, 0.55],
        }
    }

    pub fn b() -> Self {
        FaceShape {
            center: [0.04, 0.03],
            jaw_radii: [0.62, 0.66],
            eye_offset: 0.26,
            eye_height: -0.17,
            eye_radii: [0.09, 0.05],
            brow_lift: 0.16,
            nose_length: 0.28,
            mouth_height: 0.33,
            mouth_width: 0.25,
            skin: [0.62, 0.45, 0.35],
            background: [0.45, 0.5, 0.35],
        }
    }

    fn at(&self, p: [f64; 2]) -> [f64; 2] {
        [self.center[0] + p[0], self.center[1] + p[1]]
    }

    /// The 68 landmarks in the usual jaw/brows/nose/eyes/lips order.
    pub fn landmarks(&self) -> Vec<[f64; 2]> {
        let mut pts = Vec::with_capacity(68);
        let [rx, ry] = self.jaw_radii;
        let jaw_top: f64 = -0.05;
        for k in 0..17 {
            let a = PI - PI * k as f64 / 16.0;
            pts.push(self.at([rx * a.cos(), jaw_top + (ry + jaw_top.abs()) * a.sin()]));
        }
        let brow_y = self.eye_height - self.brow_lift;
        for side in [-1.0, 1.0] {
            let cx = side * self.eye_offset;
            let mut brow: Vec<[f64; 2]> = (0..5)
                .map(|k| {
                    let u = (k as f64 - 2.0) / 2.0;
                    self.at([cx + 0.13 * u, brow_y + 0.035 * u * u])
                })
                .collect();
            if side > 0.0 {
                brow.sort_by(|a, b| a[0].total_cmp(&b[0]));
            }
            pts.extend(brow);
        }
        let top = self.eye_height + 0.02;
        for k in 0..4 {
            pts.push(self.at([0.0, top + (self.nose_length - 0.08) * k as f64 / 3.0]));
        }
        let nostril_y = top + self.nose_length - 0.02;
        for k in 0..5 {
            let u = (k as f64 - 2.0) / 2.0;
            pts.push(self.at([0.07 * u, nostril_y + 0.02 * (1.0 - u * u)]));
        }
        for side in [-1.0, 1.0] {
            let c = [side * self.eye_offset, self.eye_height];
            for k in 0..6 {
                let a = PI + 2.0 * PI * k as f64 / 6.0;
                pts.push(self.at([c[0] + self.eye_radii[0] * a.cos(), c[1] + self.eye_radii[1] * a.sin()]));
            }
        }
        let (mw, my) = (self.mouth_width, self.mouth_height);
        for k in 0..12 {
            let a = PI + 2.0 * PI * k as f64 / 12.0;
            pts.push(self.at([mw * a.cos(), my + 0.085 * a.sin()]));
        }
        for k in 0..8 {
            let a = PI + 2.0 * PI * k as f64 / 8.0;
            pts.push(self.at([0.65 * mw * a.cos(), my + 0.03 * a.sin()]));
        }
        pts
    }

    /// Smoothly shaded rendering whose features sit on the landmarks.
    pub fn render(&self, width: usize, height: usize) -> ImageGrid {
        let s = *self;
        let edge = 2.0 / width.max(height) as f64;
        ImageGrid::from_fn(width, height, 3, move |p| {
            let q = [p[0] - s.center[0], p[1] - s.center[1]];
            let mut c = s.background;
            let shade = 0.08 * p[1];
            for v in c.iter_mut() {
                *v -= shade;
            }
            let jaw_top = -0.05;
            let face_d = ellipse_dist(q, [0.0, jaw_top * 0.5], [s.jaw_radii[0], s.jaw_radii[1] + 0.05]);
            mix(&mut c, s.skin, coverage(face_d, edge));
            for side in [-1.0, 1.0] {
                let e = [side * s.eye_offset, s.eye_height];
                let d = ellipse_dist(q, e, s.eye_radii);
                mix(&mut c, [0.95, 0.95, 0.92], coverage(d, edge));
                let iris = ellipse_dist(q, e, [s.eye_radii[1] * 0.9, s.eye_radii[1] * 0.9]);
                mix(&mut c, [0.2, 0.12, 0.08], coverage(iris, edge));
                let brow_y = s.eye_height - s.brow_lift;
                let u = ((q[0] - e[0]) / 0.13).clamp(-1.0, 1.0);
                let brow = ellipse_dist(q, [e[0], brow_y + 0.035 * u * u], [0.14, 0.025]);
                mix(&mut c, [0.25, 0.15, 0.1], coverage(brow, edge));
            }
            let nose = ellipse_dist(
                q,
                [0.0, s.eye_height + 0.02 + s.nose_length * 0.55],
                [0.035, s.nose_length * 0.5],
            );
            let nose_color = [s.skin[0] * 0.8, s.skin[1] * 0.75, s.skin[2] * 0.75];
            mix(&mut c, nose_color, coverage(nose, edge));
            let lips = ellipse_dist(q, [0.0, s.mouth_height], [s.mouth_width, 0.085]);
            mix(&mut c, [0.75, 0.25, 0.3], coverage(lips, edge));
            let gap = ellipse_dist(q, [0.0, s.mouth_height], [0.65 * s.mouth_width, 0.03]);
            mix(&mut c, [0.35, 0.08, 0.1], coverage(gap, edge));
            c.iter().map(|v| v.clamp(0.0, 1.0)).collect()
        })
        .expect("valid fixture")
    }
}

/// Approximate signed distance to an axis-aligned ellipse boundary.
fn ellipse_dist(p: [f64; 2], c: [f64; 2], r: [f64; 2]) -> f64 {
    let u = (p[0] - c[0]) / r[0];
    let v = (p[1] - c[1]) / r[1];
    (u.hypot(v) - 1.0) * r[0].min(r[1])
}

fn coverage(d: f64, edge: f64) -> f64 {
    (0.5 - d / edge).clamp(0.0, 1.0)
}

fn mix(c: &mut [f64; 3], color: [f64; 3], a: f64) {
    for (v, t) in c.iter_mut().zip(color) {
        *v = *v * (1.0 - a) + t * a;
    }
}

const REGIONS: [(&str, usize); 8] = [
    ("jaw", 17),
    ("brow_right", 5),
    ("brow_left", 5),
    ("nose_bridge", 4),
    ("nose_base", 5),
    ("eye_right", 6),
    ("eye_left", 6),
    ("lips", 20),
];

/// Landmark pairs from face A to face B, labelled by feature.
pub fn face_pairs() -> LandmarkPairs {
    let p = FaceShape::a().landmarks();
    let q = FaceShape::b().landmarks();
    let labels = REGIONS
        .iter()
        .flat_map(|&(name, n)| (0..n).map(move |k| format!("{name}_{k}")));
    let pairs = p
        .into_iter()
        .zip(q)
        .zip(labels)
        .map(|((p, q), label)| LandmarkPair {
            p,
            q,
            label: Some(label),
        })
        .collect();
    LandmarkPairs::new(pairs).expect("valid fixture")
}

/// Polygon around both eyes of face A.
pub fn eyes_region() -> RegionMask {
    let f = FaceShape::a();
    let (x0, x1) = (-f.eye_offset - 0.17, f.eye_offset + 0.17);
    let (y0, y1) = (f.eye_height - 0.1, f.eye_height + 0.1);
    RegionMask::Polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
}
