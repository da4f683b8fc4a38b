use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::AttributeSpec;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const IMAGE_SIDE: usize = 8;

/// One Gaussian mixture component. The Cholesky factor is computed once at
/// construction, which also proves the covariance positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: Vec<f64>,
    covariance: Matrix,
    cholesky: Matrix,
}

impl GaussianComponent {
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.shape() != (d, d) {
            return Err(Error::shape(format!(
                "covariance {:?} does not match mean of length {d}",
                covariance.shape()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        let cholesky = cholesky(&covariance)
            .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
        Ok(GaussianComponent {
            mean,
            covariance,
            cholesky,
        })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, Matrix::identity(d).scale(variance))
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn cholesky(&self) -> &Matrix {
        &self.cholesky
    }

    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let d = self.mean.len();
        let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|k| self.cholesky[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` if `a` is not positive definite.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = a[(i, i)] - s;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[(i, j)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Disk,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shade {
    Bright,
    Dark,
}

impl Shade {
    /// Intensity band the shape's pixels are drawn from.
    pub fn band(self) -> (f64, f64) {
        match self {
            Shade::Bright => (0.7, 1.0),
            Shade::Dark => (0.25, 0.45),
        }
    }
}

/// Rendering recipe for one joint label of the image family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecipe {
    pub shape: Shape,
    pub shade: Shade,
}

impl ImageRecipe {
    /// Renders an 8x8 grayscale image, flattened row-major. The shape centre
    /// is jittered by up to one pixel on each axis and the background carries
    /// small Gaussian noise.
    pub fn render(&self, rng: &mut Rng) -> Vec<f64> {
        let centre = (IMAGE_SIDE as f64 - 1.0) / 2.0;
        let cx = centre + (rng.below(3) as f64 - 1.0);
        let cy = centre + (rng.below(3) as f64 - 1.0);
        let (lo, hi) = self.shade.band();
        let intensity = rng.uniform_range(lo, hi);
        let mut pixels = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE);
        for r in 0..IMAGE_SIDE {
            for c in 0..IMAGE_SIDE {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                let inside = match self.shape {
                    Shape::Disk => dx * dx + dy * dy <= 2.3 * 2.3,
                    Shape::Square => dx.abs() <= 2.0 && dy.abs() <= 2.0,
                };
                let noise = 0.03 * rng.normal();
                pixels.push(if inside { intensity + noise } else { noise });
            }
        }
        pixels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    GaussianMixture2d,
    ProceduralImage8x8,
}

/// Generative recipe for a synthetic dataset: exactly one component per
/// joint label.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticFamily {
    GaussianMixture(Vec<GaussianComponent>),
    ProceduralImage(Vec<ImageRecipe>),
}

impl SyntheticFamily {
    /// `k` unit-covariance components with means evenly spaced on a circle,
    /// the first at angle zero.
    pub fn gaussian_circle(k: usize, radius: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("a mixture needs at least two components"));
        }
        let components = (0..k)
            .map(|c| {
                let angle = 2.0 * PI * c as f64 / k as f64;
                let mean = vec![snap(radius * angle.cos()), snap(radius * angle.sin())];
                GaussianComponent::isotropic(mean, 1.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SyntheticFamily::GaussianMixture(components))
    }

    pub fn gaussian_mixture(components: Vec<GaussianComponent>) -> Result<Self> {
        let d = components.first().map(|c| c.mean.len()).unwrap_or(0);
        if components.len() < 2 || components.iter().any(|c| c.mean.len() != d) {
            return Err(Error::invalid(
                "a mixture needs at least two components of equal dimension",
            ));
        }
        Ok(SyntheticFamily::GaussianMixture(components))
    }

    /// Image recipes for a spec with one binary attribute (bright disk vs
    /// dark square) or two binary attributes (shape x shade).
    pub fn procedural_image(spec: &AttributeSpec) -> Result<Self> {
        let cards: Vec<usize> = spec.attributes().iter().map(|a| a.cardinality).collect();
        let recipes = match cards.as_slice() {
            [2] => vec![
                ImageRecipe {
                    shape: Shape::Disk,
                    shade: Shade::Bright,
                },
                ImageRecipe {
                    shape: Shape::Square,
                    shade: Shade::Dark,
                },
            ],
            [2, 2] => (0..4)
                .map(|j| {
                    let v = spec.decode(j);
                    ImageRecipe {
                        shape: if v[0] == 0 {
                            Shape::Disk
                        } else {
                            Shape::Square
                        },
                        shade: if v[1] == 0 {
                            Shade::Bright
                        } else {
                            Shade::Dark
                        },
                    }
                })
                .collect(),
            _ => {
                return Err(Error::invalid(format!(
                "image family supports one or two binary attributes, got cardinalities {cards:?}"
            )))
            }
        };
        Ok(SyntheticFamily::ProceduralImage(recipes))
    }

    /// The default family of a kind for a given attribute spec.
    pub fn for_spec(kind: FamilyKind, spec: &AttributeSpec) -> Result<Self> {
        match kind {
            FamilyKind::GaussianMixture2d => Self::gaussian_circle(spec.joint_cardinality(), 2.0),
            FamilyKind::ProceduralImage8x8 => Self::procedural_image(spec),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            SyntheticFamily::GaussianMixture(_) => FamilyKind::GaussianMixture2d,
            SyntheticFamily::ProceduralImage(_) => FamilyKind::ProceduralImage8x8,
        }
    }

    pub fn num_components(&self) -> usize {
        match self {
            SyntheticFamily::GaussianMixture(c) => c.len(),
            SyntheticFamily::ProceduralImage(r) => r.len(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            SyntheticFamily::GaussianMixture(c) => c[0].mean.len(),
            SyntheticFamily::ProceduralImage(_) => IMAGE_SIDE * IMAGE_SIDE,
        }
    }

    pub fn check_spec(&self, spec: &AttributeSpec) -> Result<()> {
        if self.num_components() != spec.joint_cardinality() {
            return Err(Error::invalid(format!(
                "family has {} components but the attribute spec has {} joint labels",
                self.num_components(),
                spec.joint_cardinality()
            )));
        }
        Ok(())
    }

    pub fn sample(&self, label: usize, rng: &mut Rng) -> Vec<f64> {
        match self {
            SyntheticFamily::GaussianMixture(c) => c[label].sample(rng),
            SyntheticFamily::ProceduralImage(r) => r[label].render(rng),
        }
    }
}

/// Removes floating-point residue such as `2 cos(pi/2) = 1.2e-16`.
fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}
