/// What a direction field says about a point.
#[derive(Debug, Clone, PartialEq)]
pub enum Heading {
    /// The point already satisfies the goal.
    Arrived,
    /// Unit direction toward the goal and the Euclidean distance to it.
    Toward { direction: Vec<f64>, distance: f64 },
}

/// A goal in weight space, expressed as a unit direction at every point.
pub trait DirectionField {
    fn dim(&self) -> usize;

    fn heading(&self, w: &[f64]) -> Heading;

    /// Euclidean distance to the goal set; exactly 0 iff `heading` is `Arrived`.
    fn distance(&self, w: &[f64]) -> f64;

    /// Exact projection onto the goal set, applied once the walker is close.
    fn finish(&self, w: &[f64]) -> Vec<f64>;
}

/// The affine goal set `{ w : w[i] = value_i for each pinned i }`.
///
/// Sparsity planes pin coordinates to zero, a target network pins every
/// coordinate, and restoration pins a fresh value into pruned coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedCoordinates {
    n: usize,
    pinned: Vec<(usize, f64)>,
}

impl PinnedCoordinates {
    /// Out-of-range indices and non-finite values are rejected. Duplicate indices
    /// keep their first value.
    pub fn new(n: usize, pinned: Vec<(usize, f64)>) -> crate::Result<Self> {
        for &(i, v) in &pinned {
            if i >= n {
                return Err(crate::Error::InvalidArgument(format!(
                    "pinned index {i} out of range for n = {n}"
                )));
            }
            if !v.is_finite() {
                return Err(crate::Error::NonFinite("pinned coordinate value"));
            }
        }
        let mut pinned = pinned;
        pinned.sort_by_key(|p| p.0);
        pinned.dedup_by_key(|p| p.0);
        Ok(Self { n, pinned })
    }

    /// Pins every coordinate to `target`.
    pub fn target(target: &[f64]) -> crate::Result<Self> {
        Self::new(target.len(), target.iter().copied().enumerate().collect())
    }

    /// Pins every coordinate with `keep[i] == false` to zero.
    pub fn zeros_outside(keep: &[bool]) -> crate::Result<Self> {
        Self::new(
            keep.len(),
            keep.iter()
                .enumerate()
                .filter(|(_, &k)| !k)
                .map(|(i, _)| (i, 0.0))
                .collect(),
        )
    }

    pub fn pinned(&self) -> &[(usize, f64)] {
        &self.pinned
    }

    fn offsets(&self, w: &[f64]) -> Vec<(usize, f64)> {
        self.pinned
            .iter()
            .map(|&(i, v)| (i, v - w[i]))
            .filter(|&(_, d)| d != 0.0)
            .collect()
    }
}

/// Overflow- and underflow-safe Euclidean norm of the offsets.
fn scaled_norm(offsets: &[(usize, f64)]) -> f64 {
    let scale = offsets.iter().fold(0.0f64, |m, &(_, d)| m.max(d.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = offsets
        .iter()
        .map(|&(_, d)| (d / scale) * (d / scale))
        .sum();
    scale * s.sqrt()
}

impl DirectionField for PinnedCoordinates {
    fn dim(&self) -> usize {
        self.n
    }

    fn heading(&self, w: &[f64]) -> Heading {
        let offsets = self.offsets(w);
        let distance = scaled_norm(&offsets);
        if distance == 0.0 {
            return Heading::Arrived;
        }
        let mut direction = vec![0.0; self.n];
        for (i, d) in offsets {
            direction[i] = d / distance;
        }
        Heading::Toward {
            direction,
            distance,
        }
    }

    fn distance(&self, w: &[f64]) -> f64 {
        scaled_norm(&self.offsets(w))
    }

    fn finish(&self, w: &[f64]) -> Vec<f64> {
        let mut out = w.to_vec();
        for &(i, v) in &self.pinned {
            out[i] = v;
        }
        out
    }
}
