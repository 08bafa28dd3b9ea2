use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, SpecId, WeightVector};
use crate::search::{DirectionField, Heading, PinnedCoordinates};

/// How the coordinates of a sparsity plane are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SelectionRule {
    /// The `round(p * n)` smallest `|w_i|`, ties to the lower index.
    Magnitude { exempt_biases: bool },
    /// In every hidden layer, the `round(p * units)` units with the smallest
    /// norm over incoming weights, bias and outgoing weights.
    ByUnit,
    /// These coordinates, in this order.
    Explicit { coordinates: Vec<usize> },
}

impl SelectionRule {
    pub fn magnitude() -> Self {
        SelectionRule::Magnitude {
            exempt_biases: true,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SelectionRule::Magnitude { .. } => "magnitude",
            SelectionRule::ByUnit => "by-unit",
            SelectionRule::Explicit { .. } => "explicit",
        }
    }
}

/// The goal set `{ w : w_i = 0 for every masked i }`.
///
/// The mask is chosen once, at construction, and cannot change afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPlane {
    spec_id: SpecId,
    mask: Vec<bool>,
    level: f64,
    rule: SelectionRule,
    groups: Vec<Vec<usize>>,
    field: PinnedCoordinates,
}

impl SparsityPlane {
    /// `false` marks a coordinate that must be zero.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn rule(&self) -> &SelectionRule {
        &self.rule
    }

    pub fn spec_id(&self) -> SpecId {
        self.spec_id
    }

    /// Masked coordinates grouped in pruning order: one group per unit for
    /// the by-unit rule, one coordinate per group otherwise.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn zero_count(&self) -> usize {
        self.mask.iter().filter(|&&k| !k).count()
    }

    pub fn zero_fraction(&self) -> f64 {
        self.zero_count() as f64 / self.mask.len() as f64
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        self.mask.iter().zip(w).all(|(&k, &x)| k || x == 0.0)
    }

    /// The direction field toward this plane.
    pub fn field(&self) -> &PinnedCoordinates {
        &self.field
    }
}

fn by_magnitude(values: &[f64], a: usize, b: usize) -> Ordering {
    values[a].abs().total_cmp(&values[b].abs()).then(a.cmp(&b))
}

/// Builds the plane for sparsity level `p` in `[0, 1)` at `w`.
pub fn make_sparsity_plane(
    spec: &NetworkSpec,
    w: &WeightVector,
    p: f64,
    rule: SelectionRule,
) -> Result<SparsityPlane> {
    w.check_spec(spec)?;
    let n = spec.num_params();
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "sparsity level must be in [0, 1), got {p}"
        )));
    }
    let groups: Vec<Vec<usize>> = match &rule {
        SelectionRule::Magnitude { exempt_biases } => {
            let bias = spec.bias_coordinates();
            let mut eligible: Vec<usize> =
                (0..n).filter(|&i| !(*exempt_biases && bias[i])).collect();
            let count = (p * n as f64).round() as usize;
            if count > eligible.len() {
                return Err(Error::InvalidArgument(format!(
                    "sparsity {p} needs {count} coordinates but only {} are eligible",
                    eligible.len()
                )));
            }
            eligible.sort_by(|&a, &b| by_magnitude(w, a, b));
            eligible.truncate(count);
            eligible.into_iter().map(|i| vec![i]).collect()
        }
        SelectionRule::ByUnit => {
            let layers = spec.layers();
            let mut ranked: Vec<(f64, usize, Vec<usize>)> = Vec::new();
            for l in 0..layers.len() - 1 {
                let (cur, next) = (&layers[l], &layers[l + 1]);
                let units = cur.fan_out;
                let count = (p * units as f64).round() as usize;
                if count >= units && count > 0 {
                    return Err(Error::DegeneratePlane { layer: l });
                }
                let mut unit_coords: Vec<(f64, usize, Vec<usize>)> = (0..units)
                    .map(|u| {
                        let mut coords: Vec<usize> =
                            (0..cur.fan_in).map(|c| cur.weight_index(u, c)).collect();
                        coords.push(cur.bias_index(u));
                        coords.extend((0..next.fan_out).map(|r| next.weight_index(r, u)));
                        let norm2: f64 = coords.iter().map(|&i| w[i] * w[i]).sum();
                        (norm2, u, coords)
                    })
                    .collect();
                unit_coords.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                unit_coords.truncate(count);
                ranked.extend(unit_coords);
            }
            // Interleave layers by norm so prune-train cycles take the weakest units first.
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2[0].cmp(&b.2[0])));
            ranked.into_iter().map(|(_, _, c)| c).collect()
        }
        SelectionRule::Explicit { coordinates } => {
            let mut seen = vec![false; n];
            for &i in coordinates {
                if i >= n {
                    return Err(Error::InvalidArgument(format!(
                        "coordinate {i} out of range for n = {n}"
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "coordinate {i} listed twice"
                    )));
                }
            }
            coordinates.iter().map(|&i| vec![i]).collect()
        }
    };
    let mut mask = vec![true; n];
    for &i in groups.iter().flatten() {
        mask[i] = false;
    }
    let level = match rule {
        SelectionRule::Explicit { .. } => groups.len() as f64 / n as f64,
        _ => p,
    };
    Ok(SparsityPlane {
        spec_id: spec.id(),
        field: PinnedCoordinates::zeros_outside(&mask)?,
        mask,
        level,
        rule,
        groups,
    })
}

/// `(Pi(w) - w) / |Pi(w) - w|` and the distance, or `Arrived` on the plane.
pub fn sparsity_direction(w: &WeightVector, plane: &SparsityPlane) -> Result<Heading> {
    check_plane(w, plane)?;
    Ok(plane.field.heading(w))
}

/// Sets every masked coordinate to exactly zero.
pub fn project_onto_plane(w: &WeightVector, plane: &SparsityPlane) -> Result<WeightVector> {
    check_plane(w, plane)?;
    w.with_values(plane.field.finish(w))
}

fn check_plane(w: &WeightVector, plane: &SparsityPlane) -> Result<()> {
    if w.spec_id() != plane.spec_id {
        return Err(Error::SpecMismatch(format!(
            "weights bound to {}, plane to {}",
            w.spec_id(),
            plane.spec_id
        )));
    }
    Ok(())
}
