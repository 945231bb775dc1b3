//! Landmark correspondences and the `landmarks/1` file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GridFrame;

pub const LANDMARKS_VERSION: &str = "landmarks/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPair {
    pub p: [f64; 2],
    pub q: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Ordered correspondences `(p_j, q_j)` in normalized coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LandmarkPairs {
    pairs: Vec<LandmarkPair>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordSpace {
    Normalized,
    Pixels,
}

/// On-disk landmark document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFile {
    pub version: String,
    pub space: CoordSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    pub pairs: Vec<LandmarkPair>,
}

fn in_domain(p: [f64; 2]) -> bool {
    p.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v))
}

impl LandmarkPairs {
    /// Validates points and duplicates. An empty list is allowed here;
    /// training rejects it.
    pub fn new(pairs: Vec<LandmarkPair>) -> Result<Self> {
        for (j, pair) in pairs.iter().enumerate() {
            if !in_domain(pair.p) || !in_domain(pair.q) {
                return Err(Error::Invalid(format!(
                    "landmark pair {j} lies outside [-1, 1]²: p={:?} q={:?}",
                    pair.p, pair.q
                )));
            }
            if let Some(k) = pairs[..j].iter().position(|o| o.p == pair.p && o.q != pair.q) {
                return Err(Error::Invalid(format!(
                    "landmark pair {j} duplicates source point of pair {k} with a different target"
                )));
            }
        }
        Ok(LandmarkPairs { pairs })
    }

    pub fn from_points(p: &[[f64; 2]], q: &[[f64; 2]]) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: q.len(),
            });
        }
        Self::new(
            p.iter()
                .zip(q)
                .map(|(&p, &q)| LandmarkPair { p, q, label: None })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[LandmarkPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<[f64; 2]> {
        self.pairs.iter().map(|p| p.p).collect()
    }

    pub fn targets(&self) -> Vec<[f64; 2]> {
        self.pairs.iter().map(|p| p.q).collect()
    }

    pub fn from_file(doc: LandmarkFile) -> Result<Self> {
        if doc.version != LANDMARKS_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported landmark version {:?}",
                doc.version
            )));
        }
        let pairs = match doc.space {
            CoordSpace::Normalized => doc.pairs,
            CoordSpace::Pixels => {
                let (Some(w), Some(h)) = (doc.width, doc.height) else {
                    return Err(Error::Invalid(
                        "pixel-space landmarks need `width` and `height`".into(),
                    ));
                };
                if w < 2 || h < 2 {
                    return Err(Error::Invalid(format!("invalid image size {w}×{h}")));
                }
                let frame = GridFrame::new(w, h);
                doc.pairs
                    .into_iter()
                    .map(|pair| LandmarkPair {
                        p: frame.to_domain(pair.p[0], pair.p[1]),
                        q: frame.to_domain(pair.q[0], pair.q[1]),
                        label: pair.label,
                    })
                    .collect()
            }
        };
        Self::new(pairs)
    }

    pub fn to_file(&self) -> LandmarkFile {
        LandmarkFile {
            version: LANDMARKS_VERSION.into(),
            space: CoordSpace::Normalized,
            width: None,
            height: None,
            pairs: self.pairs.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
