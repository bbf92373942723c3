//! Input ingestion and normalization.
//!
//! The raw problem is a finite point set `S`, a self-map `h` given by
//! indices, and a perturbation budget `epsilon`. Normalization conjugates by
//! an affine map so that -1 and 1 are in the set with a third point inside
//! the unit disk, nudges non-anchor points off the unit circle, and extends
//! `h` with auxiliary far-away points until it is onto the original set.

use crate::{C, Error, Result};
use serde::{Deserialize, Serialize};

/// Structural role of a point, derived from where `h` sends it: points whose
/// image is exactly -1 or +1 become graph vertices carrying that sign; the
/// others get a disk component, inverted when the image lies outside the
/// unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointLabel {
    /// Graph vertex; the payload is the exact target value (+1 or -1).
    Vertex(i8),
    /// Disk component; critical value inside the unit disk.
    D,
    /// Inverted disk component; critical value outside the unit disk.
    Id,
}

/// Normalized problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsSpec {
    /// Normalized points (original points first, auxiliary points after).
    pub points: Vec<C>,
    /// Index map: `h[i]` is the index of the image of point `i`. Auxiliary
    /// points map into the original range.
    pub h: Vec<usize>,
    /// Perturbation budget in normalized coordinates (shrunk by the circle
    /// adjustment when it fires).
    pub epsilon: f64,
    pub labels: Vec<PointLabel>,
    /// Index of the designated in-disk point realizing the asymptotic value.
    pub asymptotic_index: usize,
    /// Normalizer `m(z) = a z + b` taking raw points to `points`.
    pub map_a: C,
    pub map_b: C,
    /// Marks auxiliary points appended for onto-ness.
    pub augmented: Vec<bool>,
    /// Indices (into `points`) of the anchor points landed on -1 and +1.
    pub anchor_minus: usize,
    pub anchor_plus: usize,
}

impl DynamicsSpec {
    pub fn apply_m(&self, z: C) -> C {
        self.map_a * z + self.map_b
    }

    pub fn invert_m(&self, z: C) -> C {
        (z - self.map_b) / self.map_a
    }

    pub fn n_original(&self) -> usize {
        self.augmented.iter().filter(|&&a| !a).count()
    }

    /// Distance from -1 (and +1) to the epsilon-disks of the other points:
    /// the `delta` of the +-1 adjuster.
    pub fn pm1_delta(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (k, &p) in self.points.iter().enumerate() {
            for anchor in [C::new(-1.0, 0.0), C::new(1.0, 0.0)] {
                if k == self.anchor_minus || k == self.anchor_plus {
                    continue;
                }
                d = d.min((p - anchor).norm() - self.epsilon);
            }
        }
        d.min(1.0).max(1e-6)
    }
}

fn is_pm1(z: C) -> Option<i8> {
    if (z - 1.0).norm() < 1e-12 {
        Some(1)
    } else if (z + 1.0).norm() < 1e-12 {
        Some(-1)
    } else {
        None
    }
}

/// Normalizes `(S, h, epsilon)` per the reduction chain: affine conjugation
/// anchoring two points at -1 and 1 with a third in the open disk, radial
/// nudge off the unit circle (shrinking epsilon to a quarter), and
/// augmentation of `h` to a map onto the original set.
pub fn normalize(raw_points: &[C], raw_map: &[usize], epsilon: f64) -> Result<DynamicsSpec> {
    if raw_points.len() < 4 {
        return Err(Error::TooFewPoints(raw_points.len()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    if raw_map.len() != raw_points.len() {
        return Err(Error::Config("map length must equal point count".into()));
    }
    for (i, p) in raw_points.iter().enumerate() {
        if !p.re.is_finite() || !p.im.is_finite() {
            return Err(Error::Config(format!("point {i} is not finite")));
        }
        for q in raw_points.iter().skip(i + 1) {
            if (p - q).norm() < 1e-12 {
                return Err(Error::Config(format!("duplicate point {p}")));
            }
        }
        if raw_map[i] >= raw_points.len() {
            return Err(Error::Config(format!("map index {} out of range", raw_map[i])));
        }
    }

    // anchor-pair selection: first ordered pair (by index) whose affine image
    // places some third point inside the closed unit disk (a point landing on
    // the circle is pushed strictly inside by the nudge below; four concyclic
    // points make this the only reachable case)
    let mut anchors = None;
    'outer: for pm in 0..raw_points.len() {
        for pp in 0..raw_points.len() {
            if pm == pp {
                continue;
            }
            let a = 2.0 / (raw_points[pp] - raw_points[pm]);
            let b = -(raw_points[pp] + raw_points[pm]) / (raw_points[pp] - raw_points[pm]);
            let eps_m = epsilon * a.norm();
            let inside = raw_points
                .iter()
                .enumerate()
                .any(|(k, s)| k != pm && k != pp && (a * s + b).norm() < 1.0 + 0.125 * eps_m);
            if inside {
                anchors = Some((pm, pp, a, b));
                break 'outer;
            }
        }
    }
    let (anchor_minus, anchor_plus, a, b) =
        anchors.ok_or(Error::CollinearDegenerate)?;

    let mut points: Vec<C> = raw_points.iter().map(|&s| a * s + b).collect();
    // pin the anchors exactly
    points[anchor_minus] = C::new(-1.0, 0.0);
    points[anchor_plus] = C::new(1.0, 0.0);
    let mut eps = epsilon * a.norm();

    // nudge points off the unit circle by half the budget, then quarter the
    // budget: afterwards every non-anchor point clears 2 eps. Points on or
    // essentially on the circle go inward (as in the reduction); points
    // clearly off it retreat on their own side so the move stays within the
    // budget.
    let band = 0.5 * eps * (1.0 + 1e-6);
    let needs_nudge = points.iter().enumerate().any(|(k, p)| {
        k != anchor_minus && k != anchor_plus && (p.norm() - 1.0).abs() <= 2.0 * eps
    });
    if needs_nudge {
        for (k, p) in points.iter_mut().enumerate() {
            if k == anchor_minus || k == anchor_plus {
                continue;
            }
            let d = p.norm() - 1.0;
            if d.abs() <= band {
                let target = if d <= 0.125 * eps { 1.0 - band } else { 1.0 + band };
                *p *= target / p.norm();
            }
        }
        eps *= 0.25;
    }

    let n_orig = points.len();
    let mut h: Vec<usize> = raw_map.to_vec();
    let mut augmented = vec![false; n_orig];

    // onto-repair: auxiliary points on a far spiral, each mapped to one
    // uncovered original point
    let mut covered = vec![false; n_orig];
    for &j in &h {
        covered[j] = true;
    }
    let uncovered: Vec<usize> = (0..n_orig).filter(|&j| !covered[j]).collect();
    if !uncovered.is_empty() {
        let max_mod = points.iter().fold(0.0f64, |m, p| m.max(p.norm()));
        let count = uncovered.len();
        for (k, &target) in uncovered.iter().enumerate() {
            let radius = 2.0 * max_mod + 4.0 * (k + 1) as f64;
            let angle = std::f64::consts::TAU * k as f64 / count as f64;
            points.push(C::from_polar(radius, angle));
            h.push(target);
            augmented.push(true);
        }
    }

    // labels follow the target values
    let labels: Vec<PointLabel> = h
        .iter()
        .map(|&j| {
            let target = points[j];
            match is_pm1(target) {
                Some(sign) => PointLabel::Vertex(sign),
                None if target.norm() < 1.0 => PointLabel::D,
                None => PointLabel::Id,
            }
        })
        .collect();

    // designated asymptotic point: the original in-disk point of smallest
    // modulus (deterministic)
    let asymptotic_index = (0..n_orig)
        .filter(|&k| points[k].norm() < 1.0 - 2.0 * eps && is_pm1(points[k]).is_none())
        .min_by(|&i, &j| points[i].norm().partial_cmp(&points[j].norm()).unwrap())
        .ok_or_else(|| {
            Error::Config("no point strictly inside the unit disk at this epsilon".into())
        })?;

    let spec = DynamicsSpec {
        points,
        h,
        epsilon: eps,
        labels,
        asymptotic_index,
        map_a: a,
        map_b: b,
        augmented,
        anchor_minus,
        anchor_plus,
    };
    debug_assert!(spec.check_invariants().is_ok());
    Ok(spec)
}

impl DynamicsSpec {
    /// Asserts the normalization invariants; used by tests and after
    /// construction in debug builds.
    pub fn check_invariants(&self) -> Result<()> {
        // +-1 present
        if is_pm1(self.points[self.anchor_minus]) != Some(-1)
            || is_pm1(self.points[self.anchor_plus]) != Some(1)
        {
            return Err(Error::Config("anchors not at -1, 1".into()));
        }
        // off-circle for non-anchor points
        for (k, p) in self.points.iter().enumerate() {
            if k == self.anchor_minus || k == self.anchor_plus {
                continue;
            }
            if (p.norm() - 1.0).abs() <= 2.0 * self.epsilon {
                return Err(Error::Config(format!("point {p} too close to the unit circle")));
            }
        }
        // onto the original set
        let n_orig = self.n_original();
        let mut covered = vec![false; n_orig];
        for &j in &self.h {
            covered[j] = true;
        }
        if !covered.iter().all(|&c| c) {
            return Err(Error::Config("map is not onto the original set".into()));
        }
        Ok(())
    }
}

/// Applies the inverse normalizer to realized values, dropping augmented
/// rows: the conjugacy table reported to the user lives in raw coordinates.
pub fn denormalize(spec: &DynamicsSpec, psi_values: &[C]) -> Vec<(C, C)> {
    spec.points
        .iter()
        .zip(psi_values.iter())
        .zip(spec.augmented.iter())
        .filter(|(_, &aug)| !aug)
        .map(|((s, v), _)| (spec.invert_m(*s), spec.invert_m(*v)))
        .collect()
}

/// On-disk input configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputConfig {
    pub points: Vec<[f64; 2]>,
    pub map: Vec<usize>,
    pub epsilon: f64,
    pub grid: GridConfig,
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub radius: f64,
    pub n: usize,
}

impl InputConfig {
    pub fn points_c(&self) -> Vec<C> {
        self.points.iter().map(|p| C::new(p[0], p[1])).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.grid.n.is_power_of_two() || !(256..=8192).contains(&self.grid.n) {
            return Err(Error::Config(format!(
                "grid n = {} must be a power of two in [256, 8192]",
                self.grid.n
            )));
        }
        if !(self.grid.radius > 0.0) || !(self.delta > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("radius, delta, epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn normalize_already_anchored() {
        let pts = [c(-1.0, 0.0), c(1.0, 0.0), c(0.3, 0.0), c(0.0, 2.0)];
        let map = [0usize, 1, 2, 3]; // identity
        let spec = normalize(&pts, &map, 0.01).unwrap();
        assert!((spec.map_a - C::new(1.0, 0.0)).norm() < 1e-12);
        assert!(spec.map_b.norm() < 1e-12);
        assert_eq!(spec.labels[0], PointLabel::Vertex(-1));
        assert_eq!(spec.labels[1], PointLabel::Vertex(1));
        assert_eq!(spec.labels[2], PointLabel::D);
        assert_eq!(spec.labels[3], PointLabel::Id);
        assert_eq!(spec.points.len(), 4, "identity map is onto: no augmentation");
        assert_eq!(spec.asymptotic_index, 2);
    }

    #[test]
    fn normalize_selects_pair_with_interior_third() {
        let pts = [c(0.0, 0.0), c(4.0, 0.0), c(2.0, 2.0), c(1.0, 0.5)];
        let map = [1usize, 2, 3, 0];
        let eps = 0.01;
        let spec = normalize(&pts, &map, eps).unwrap();
        // brute-force oracle: the first ordered pair whose map puts a third
        // point inside the disk (with the same on-circle tolerance band)
        let mut expect = None;
        'outer: for pm in 0..4 {
            for pp in 0..4 {
                if pm == pp {
                    continue;
                }
                let a = 2.0 / (pts[pp] - pts[pm]);
                let b = -(pts[pp] + pts[pm]) / (pts[pp] - pts[pm]);
                if (0..4).any(|k| {
                    k != pm && k != pp && (a * pts[k] + b).norm() < 1.0 + 0.125 * eps * a.norm()
                }) {
                    expect = Some((pm, pp));
                    break 'outer;
                }
            }
        }
        let (pm, pp) = expect.expect("some pair must work");
        assert_eq!((spec.anchor_minus, spec.anchor_plus), (pm, pp));
        assert!(
            spec.points
                .iter()
                .enumerate()
                .any(|(k, p)| k != pm && k != pp && p.norm() < 1.0)
        );
        spec.check_invariants().unwrap();
    }

    #[test]
    fn normalize_constant_map_augments() {
        let pts = [c(-1.0, 0.0), c(1.0, 0.0), c(0.2, 0.1), c(0.0, 3.0)];
        let map = [2usize, 2, 2, 2]; // constant, covers only index 2
        let spec = normalize(&pts, &map, 0.01).unwrap();
        let n_aux = spec.augmented.iter().filter(|&&a| a).count();
        assert_eq!(n_aux, 3, "three uncovered points need auxiliaries");
        spec.check_invariants().unwrap();
        // auxiliaries are far and pairwise separated
        for (k, p) in spec.points.iter().enumerate() {
            if spec.augmented[k] {
                assert!(p.norm() >= 2.0 * 3.0 - 1e-9);
                for (j, q) in spec.points.iter().enumerate() {
                    if j != k && spec.augmented[j] {
                        assert!((p - q).norm() >= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn normalize_moves_points_off_circle() {
        let pts = [c(-1.0, 0.0), c(1.0, 0.0), c(0.3, 0.0), c(0.0, 1.001), c(0.0, 3.0)];
        let map = [0usize, 1, 2, 3, 4];
        let eps = 0.01;
        let spec = normalize(&pts, &map, eps).unwrap();
        assert!((spec.epsilon - eps / 4.0).abs() < 1e-15, "budget shrinks to eps/4");
        for (k, p) in spec.points.iter().enumerate() {
            if k == spec.anchor_minus || k == spec.anchor_plus {
                continue;
            }
            assert!((p.norm() - 1.0).abs() > 2.0 * spec.epsilon);
        }
        // the near-circle point ends half a (pre-shrink) budget inside
        assert!((spec.points[3].norm() - (1.0 - 0.5 * eps)).abs() < 1e-7);
    }

    #[test]
    fn normalize_concyclic_square() {
        // four concyclic points: every anchor pair puts the others on the
        // unit circle; the nudge must then pull one strictly inside
        let pts = [c(0.0, 0.0), c(4.0, 0.0), c(2.0, 2.0), c(2.0, -2.0)];
        let spec = normalize(&pts, &[1, 2, 3, 0], 0.02).unwrap();
        spec.check_invariants().unwrap();
        assert!(spec.points.iter().any(|p| p.norm() < 1.0));
        let a = spec.points[spec.asymptotic_index];
        assert!(a.norm() < 1.0 - 2.0 * spec.epsilon);
    }

    #[test]
    fn normalize_errors() {
        assert!(matches!(
            normalize(&[c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)], &[0, 1, 2], 0.1),
            Err(Error::TooFewPoints(3))
        ));
        let pts = [c(-1.0, 0.0), c(1.0, 0.0), c(0.3, 0.0), c(0.0, 2.0)];
        assert!(normalize(&pts, &[0, 1, 2, 9], 0.1).is_err());
        assert!(normalize(&pts, &[0, 1, 2, 3], -0.1).is_err());
    }

    #[test]
    fn denormalize_inverts_and_filters() {
        let pts = [c(1.0, 0.0), c(5.0, 0.0), c(3.0, 1.0), c(3.0, -0.5), c(2.0, 7.0)];
        let map = [0usize, 0, 0, 0, 0]; // heavy augmentation
        let spec = normalize(&pts, &map, 0.02).unwrap();
        // identity realization: psi = points
        let table = denormalize(&spec, &spec.points.clone());
        assert_eq!(table.len(), 5);
        for (k, (orig, val)) in table.iter().enumerate() {
            assert!((orig - pts[k]).norm() < 1e-9, "m^-1 recovers raw points");
            assert!((orig - val).norm() < 1e-9);
        }
    }

    #[test]
    fn pm1_delta_positive_and_sane() {
        let pts = [c(-1.0, 0.0), c(1.0, 0.0), c(0.3, 0.0), c(0.0, 2.0)];
        let spec = normalize(&pts, &[1, 2, 3, 0], 0.05).unwrap();
        let d = spec.pm1_delta();
        assert!(d > 0.0 && d <= (c(0.3, 0.0) - c(1.0, 0.0)).norm());
    }
}
