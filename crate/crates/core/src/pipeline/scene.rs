//! Synthetic scenes: homogeneous inclusions in air, placed in the
//! coordinates of the computational domain.

use serde::{Deserialize, Serialize};

use crate::field::{Grid3, DOMAIN_HI, DOMAIN_LO};
use crate::forward::MediumField;

use super::PipelineError;

/// Position of the measurement plane.
pub const MEASUREMENT_X3: f64 = -8.0;
/// Position of the propagated plane, the near face of the domain.
pub const PROPAGATED_X3: f64 = -0.75;
/// Clearance kept between an inclusion and the faces of the domain.
pub const DOMAIN_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Inclusion {
    Box { center: [f64; 3], half_extents: [f64; 3], c: f64 },
    Ball { center: [f64; 3], radius: f64, c: f64 },
}

impl Inclusion {
    pub fn c(&self) -> f64 {
        match self {
            Inclusion::Box { c, .. } | Inclusion::Ball { c, .. } => *c,
        }
    }

    pub fn center(&self) -> [f64; 3] {
        match self {
            Inclusion::Box { center, .. } | Inclusion::Ball { center, .. } => *center,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let (ctr, half) = match self {
            Inclusion::Box { center, half_extents, .. } => (*center, *half_extents),
            Inclusion::Ball { center, radius, .. } => (*center, [*radius; 3]),
        };
        ([0, 1, 2].map(|a| ctr[a] - half[a]), [0, 1, 2].map(|a| ctr[a] + half[a]))
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        let tol = 1e-9;
        match self {
            Inclusion::Box { center, half_extents, .. } => (0..3).all(|a| (x[a] - center[a]).abs() <= half_extents[a] + tol),
            Inclusion::Ball { center, radius, .. } => {
                let r2: f64 = (0..3).map(|a| (x[a] - center[a]).powi(2)).sum();
                r2 <= (radius + tol).powi(2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub inclusions: Vec<Inclusion>,
    pub measurement_x3: f64,
    pub propagated_x3: f64,
    /// Relative amplitude of the multiplicative complex noise.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self { inclusions: vec![], measurement_x3: MEASUREMENT_X3, propagated_x3: PROPAGATED_X3, noise_level: 0.0, seed: 1 }
    }
}

impl SceneSpec {
    /// A wooden box of size 0.41 x 0.82 x 0.41 whose front face sits at
    /// `x3 = 0`, refractive index 2.11.
    pub fn target_one() -> Self {
        Self::single_box([0.0, 0.0, 0.205], [0.205, 0.41, 0.205], 2.11f64.powi(2))
    }

    pub fn single_box(center: [f64; 3], half_extents: [f64; 3], c: f64) -> Self {
        Self { inclusions: vec![Inclusion::Box { center, half_extents, c }], ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Invalid(m));
        if !(self.measurement_x3 < self.propagated_x3) {
            return bad(format!(
                "measurement plane {} must lie in front of the propagated plane {}",
                self.measurement_x3, self.propagated_x3
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return bad(format!("noise level {} must be non-negative", self.noise_level));
        }
        for (t, inc) in self.inclusions.iter().enumerate() {
            if !(inc.c() >= 1.0 && inc.c().is_finite()) {
                return bad(format!("inclusion {t}: c = {} must be at least 1", inc.c()));
            }
            let size_ok = match inc {
                Inclusion::Box { half_extents, .. } => half_extents.iter().all(|&h| h > 0.0),
                Inclusion::Ball { radius, .. } => *radius > 0.0,
            };
            if !size_ok {
                return bad(format!("inclusion {t} has a non-positive size"));
            }
            let (lo, hi) = inc.bounds();
            for a in 0..3 {
                if lo[a] < DOMAIN_LO[a] + DOMAIN_MARGIN || hi[a] > DOMAIN_HI[a] - DOMAIN_MARGIN {
                    return bad(format!("inclusion {t} leaves the domain along axis {a}: [{}, {}]", lo[a], hi[a]));
                }
            }
            if lo[2] <= self.propagated_x3 + DOMAIN_MARGIN {
                return bad(format!("inclusion {t} reaches the propagated plane"));
            }
        }
        Ok(())
    }

    /// `sqrt(max c)` over the inclusions, 1 for an empty scene.
    pub fn max_refractive_index(&self) -> f64 {
        self.inclusions.iter().map(|i| i.c()).fold(1.0, f64::max).sqrt()
    }

    /// Value of `c` at a point; overlapping inclusions take the largest.
    pub fn c_at(&self, x: [f64; 3]) -> f64 {
        self.inclusions.iter().filter(|i| i.contains(x)).map(|i| i.c()).fold(1.0, f64::max)
    }

    /// A lattice of the given spacing that covers every inclusion with two
    /// empty layers on each side.
    pub fn synthesis_grid(&self, spacing: f64) -> Result<Option<Grid3>, PipelineError> {
        if !(spacing > 0.0) {
            return Err(PipelineError::Invalid(format!("synthesis spacing {spacing} must be positive")));
        }
        let Some(first) = self.inclusions.first() else { return Ok(None) };
        let (mut lo, mut hi) = first.bounds();
        for inc in &self.inclusions[1..] {
            let (l, h) = inc.bounds();
            for a in 0..3 {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(h[a]);
            }
        }
        let counts = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / spacing).ceil() as usize + 5);
        let origin = [0, 1, 2].map(|a| {
            let centre = 0.5 * (lo[a] + hi[a]);
            centre - 0.5 * (counts[a] - 1) as f64 * spacing
        });
        Ok(Some(Grid3::new(origin, [spacing; 3], counts)?))
    }

    /// The scene sampled at the nodes of `grid`.
    pub fn medium_on(&self, grid: &Grid3) -> Result<MediumField, PipelineError> {
        Ok(MediumField::from_fn(grid, |x| self.c_at(x))?)
    }
}
