//! Construction of the thin Jordan domain `W`: small disks around the
//! dynamic points joined by thin tubes that sweep the whole window, so that
//! every point of the plane lies within distance 1 of `W` while the area of
//! `W` stays under the budget `delta` with an exponential tail.
//!
//! The chain visits the dynamic points and the integer lattice in a
//! serpentine row sweep (crossing-free by construction), starts at a marked
//! boundary point `x0` and leaves the sampling window through a final
//! radial tube. Where consecutive disk components change between direct and
//! inverted type, a wall-with-lane divider is recorded; the graph layer
//! turns these into edges separating the flanking components.

use crate::spec::{DynamicsSpec, PointLabel};
use crate::{C, Error, Result};

/// Outer disk of a dynamic point, with the concentric graph circle.
#[derive(Debug, Clone)]
pub struct WDisk {
    pub point: usize,
    pub center: C,
    /// Radius of the W-disk (outer).
    pub radius: f64,
    /// Radius of the graph circle (only meaningful for D/ID points).
    pub inner_radius: f64,
    pub has_circle: bool,
    pub inverted: bool,
}

/// One straight piece of the chain spine.
#[derive(Debug, Clone)]
pub struct SpineSeg {
    pub a: C,
    pub b: C,
    pub width: f64,
    /// Strip coordinate (cumulative pi ds / width) at `a`.
    pub strip_at_a: f64,
    /// Chain arclength at `a`.
    pub arclen_at_a: f64,
}

impl SpineSeg {
    pub fn len(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn dir(&self) -> C {
        (self.b - self.a) / self.len()
    }
}

/// A component-separating divider: transversal from the spine at
/// `(seg, t)` to lane height `fraction * halfwidth`, then a lane parallel
/// to the spine from there out to the cap (present on both sides).
#[derive(Debug, Clone)]
pub struct Wall {
    pub seg: usize,
    pub t: f64,
    /// Lane offset as a fraction of the local half-width.
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ChainNode {
    pub pos: C,
    /// Index into the spec points for dynamic points.
    pub point: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TubeAndDiskDomain {
    pub disks: Vec<WDisk>,
    pub nodes: Vec<ChainNode>,
    pub segs: Vec<SpineSeg>,
    pub walls: Vec<Wall>,
    /// Inversion type per pocket run (`walls.len() + 1` runs).
    pub run_inverted: Vec<bool>,
    pub x0: C,
    pub delta: f64,
    pub window_r: f64,
    pub cap_r: f64,
    pub total_area: f64,
}

const MIN_DISK_RADIUS: f64 = 1e-9;
const MIN_TUBE_WIDTH: f64 = 1e-6;

/// Builds `W` for a normalized spec. `delta` is the full exceptional-area
/// budget; half is spent on `W` itself, the rest is left for the comb
/// collars in the complement.
pub fn build_w(spec: &DynamicsSpec, delta: f64, window_r: f64) -> Result<TubeAndDiskDomain> {
    if !(delta > 0.0) {
        return Err(Error::Config("delta must be positive".into()));
    }
    let delta_w = 0.5 * delta;
    let cap_r = 1.45 * window_r;

    // chain nodes: dynamic points plus the integer lattice (minus points
    // within 1/10 of a dynamic point), in serpentine row order
    let mut nodes: Vec<ChainNode> = spec
        .points
        .iter()
        .enumerate()
        .map(|(k, &p)| ChainNode { pos: p, point: Some(k) })
        .collect();
    let lattice_reach = cap_r - 1.2;
    let reach = lattice_reach.floor() as i64;
    for iy in -reach..=reach {
        for ix in -reach..=reach {
            let p = C::new(ix as f64, iy as f64);
            if p.norm() > lattice_reach {
                continue;
            }
            if spec.points.iter().any(|s| (s - p).norm() < 0.1) {
                continue;
            }
            nodes.push(ChainNode { pos: p, point: None });
        }
    }
    // serpentine: rows by rounded imaginary part, bottom to top, alternating
    nodes.sort_by(|a, b| {
        let ra = a.pos.im.round() as i64;
        let rb = b.pos.im.round() as i64;
        ra.cmp(&rb).then_with(|| {
            let flip = ra.rem_euclid(2) == 1;
            let (xa, xb) = if flip { (-a.pos.re, -b.pos.re) } else { (a.pos.re, b.pos.re) };
            xa.partial_cmp(&xb).unwrap()
        })
    });

    // disk radii with geometric budgets in chain order
    let mut disks: Vec<WDisk> = Vec::new();
    let mut chain_rank = 0usize;
    for node in &nodes {
        let Some(k) = node.point else { continue };
        let mut nearest = f64::INFINITY;
        for other in &nodes {
            let d = (other.pos - node.pos).norm();
            if d > 1e-12 {
                nearest = nearest.min(d);
            }
        }
        let budget = (delta_w * 0.25 * 0.5f64.powi(chain_rank as i32 + 2)
            * (-node.pos.norm()).exp()
            / std::f64::consts::PI)
            .sqrt();
        let r = (spec.epsilon / 4.0).min(nearest / 8.0).min(budget);
        if r < MIN_DISK_RADIUS {
            return Err(Error::BudgetInfeasible(r));
        }
        let label = spec.labels[k];
        let has_circle = !matches!(label, PointLabel::Vertex(_));
        disks.push(WDisk {
            point: k,
            center: node.pos,
            radius: r,
            inner_radius: 0.5 * r,
            has_circle,
            inverted: label == PointLabel::Id,
        });
        chain_rank += 1;
    }

    // segment widths proportional to exp(-|z|), scaled into the budget
    let mut raw_segs: Vec<(C, C)> = Vec::new();
    for w in nodes.windows(2) {
        raw_segs.push((w[0].pos, w[1].pos));
    }
    // dodge waypoints around disks that a hop would clip
    let mut dodged: Vec<(C, C)> = Vec::new();
    for &(a, b) in &raw_segs {
        let mut pieces = vec![a, b];
        for d in &disks {
            if (d.center - a).norm() < 1e-9 || (d.center - b).norm() < 1e-9 {
                continue;
            }
            let (dist, t) = point_segment_distance(d.center, a, b);
            if dist < d.radius * 6.0 {
                let foot = a + (b - a) * t;
                let n = {
                    let dir = (b - a) / (b - a).norm();
                    C::new(-dir.im, dir.re)
                };
                let side = if (d.center - foot).re * n.re + (d.center - foot).im * n.im > 0.0 {
                    -1.0
                } else {
                    1.0
                };
                pieces.insert(1, foot + side * n * (d.radius * 8.0).max(0.05));
            }
        }
        for w in pieces.windows(2) {
            dodged.push((w[0], w[1]));
        }
    }

    // exit tube: radially outward from the last node past the cap
    let last = nodes.last().unwrap().pos;
    let out_dir = if last.norm() > 1e-9 { last / last.norm() } else { C::new(0.0, 1.0) };
    dodged.push((last, last + out_dir * (cap_r - last.norm() + 2.0)));

    let weight = |a: C, b: C| (-(a.norm().min(b.norm()))).exp();
    let mass: f64 = dodged.iter().map(|&(a, b)| (b - a).norm() * weight(a, b)).sum();
    let base = 0.5 * delta_w / mass;

    let disk_cap = |p: C| -> f64 {
        disks
            .iter()
            .filter(|d| (d.center - p).norm() < 1e-9)
            .map(|d| d.radius / 10.0)
            .next()
            .unwrap_or(0.04)
    };

    let mut segs: Vec<SpineSeg> = Vec::new();
    for &(a, b) in &dodged {
        let w = (base * weight(a, b)).min(disk_cap(a)).min(disk_cap(b)).min(0.04).max(MIN_TUBE_WIDTH);
        segs.push(SpineSeg { a, b, width: w, strip_at_a: 0.0, arclen_at_a: 0.0 });
    }

    // start stub: x0 sits on the boundary just behind the first node
    let first_dir = segs[0].dir();
    let w0 = segs[0].width;
    let x0 = segs[0].a - first_dir * (3.0 * w0);
    segs.insert(
        0,
        SpineSeg { a: x0, b: segs[0].a, width: w0, strip_at_a: 0.0, arclen_at_a: 0.0 },
    );

    // cumulative strip / arclength coordinates
    let mut strip = 0.0;
    let mut arc = 0.0;
    for s in segs.iter_mut() {
        s.strip_at_a = strip;
        s.arclen_at_a = arc;
        strip += std::f64::consts::PI * s.len() / s.width;
        arc += s.len();
    }

    // walls between consecutive circled disks of different inversion type,
    // in chain order (disks were built in chain order already)
    let circled: Vec<&WDisk> = disks.iter().filter(|d| d.has_circle).collect();
    let mut walls = Vec::new();
    let mut run_inverted = Vec::new();
    if let Some(first) = circled.first() {
        run_inverted.push(first.inverted);
    } else {
        run_inverted.push(false);
    }
    for pair in circled.windows(2) {
        if pair[0].inverted != pair[1].inverted {
            let mid = 0.5 * (pair[0].center + pair[1].center);
            // nearest spine position to the midpoint between the two disks
            let mut best = (f64::INFINITY, 0usize, 0.0f64);
            for (si, s) in segs.iter().enumerate() {
                let (d, t) = point_segment_distance(mid, s.a, s.b);
                if d < best.0 {
                    best = (d, si, t);
                }
            }
            let j = walls.len() + 1;
            walls.push(Wall { seg: best.1, t: best.2, fraction: 0.5f64.powi(j as i32 + 1) });
            run_inverted.push(pair[1].inverted);
        }
    }

    let total_area: f64 = disks.iter().map(|d| std::f64::consts::PI * d.radius * d.radius).sum::<f64>()
        + segs.iter().map(|s| s.len() * s.width).sum::<f64>();

    let dom = TubeAndDiskDomain {
        disks,
        nodes,
        segs,
        walls,
        run_inverted,
        x0,
        delta,
        window_r,
        cap_r,
        total_area,
    };
    if dom.total_area > delta {
        return Err(Error::Config(format!(
            "W area {:.4} exceeds delta {delta}: window too crowded",
            dom.total_area
        )));
    }
    Ok(dom)
}

/// Distance from `p` to segment `[a,b]` and the foot parameter in [0,1].
pub fn point_segment_distance(p: C, a: C, b: C) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 < 1e-300 {
        return ((p - a).norm(), 0.0);
    }
    let t = (((p - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    ((p - (a + ab * t)).norm(), t)
}

/// Location of a point relative to the spine skeleton.
#[derive(Debug, Clone, Copy)]
pub struct SpineHit {
    pub seg: usize,
    pub t: f64,
    pub dist: f64,
    /// +1 if the point lies to the left of the spine direction.
    pub side: i8,
}

impl TubeAndDiskDomain {
    /// Nearest spine segment (brute force with an early bounding test; the
    /// chain has a few hundred segments at desk scale).
    pub fn nearest_spine(&self, z: C) -> SpineHit {
        let mut best = SpineHit { seg: 0, t: 0.0, dist: f64::INFINITY, side: 1 };
        for (si, s) in self.segs.iter().enumerate() {
            let quick = (z - 0.5 * (s.a + s.b)).norm() - 0.6 * s.len();
            if quick > best.dist {
                continue;
            }
            let (d, t) = point_segment_distance(z, s.a, s.b);
            if d < best.dist {
                let dir = s.dir();
                let rel = z - (s.a + (s.b - s.a) * t);
                let cross = dir.re * rel.im - dir.im * rel.re;
                best = SpineHit { seg: si, t, dist: d, side: if cross >= 0.0 { 1 } else { -1 } };
            }
        }
        best
    }

    pub fn disk_at(&self, z: C) -> Option<&WDisk> {
        self.disks.iter().find(|d| (z - d.center).norm() <= d.radius)
    }

    /// Whether `z` lies in the closed set `W`.
    pub fn contains(&self, z: C) -> bool {
        if self.disk_at(z).is_some() {
            return true;
        }
        let hit = self.nearest_spine(z);
        hit.dist <= 0.5 * self.segs[hit.seg].width
    }

    /// Strip coordinate of a spine position.
    pub fn strip_coord(&self, seg: usize, t: f64) -> f64 {
        let s = &self.segs[seg];
        s.strip_at_a + std::f64::consts::PI * s.len() * t / s.width
    }

    /// Active walls (chain positions before the given one), outermost first.
    pub fn active_walls(&self, seg: usize, t: f64) -> Vec<&Wall> {
        self.walls
            .iter()
            .filter(|w| w.seg < seg || (w.seg == seg && w.t <= t))
            .collect()
    }

    /// Pocket run index at a chain position.
    pub fn run_at(&self, seg: usize, t: f64) -> usize {
        self.active_walls(seg, t).len()
    }

    /// Lemma-style area tail of `W` itself (analytic, from the geometry).
    pub fn area_tail_analytic(&self, n_max: usize) -> Vec<(usize, f64)> {
        (0..=n_max)
            .map(|n| {
                let t = n as f64;
                let mut area = 0.0;
                for d in &self.disks {
                    if d.center.norm() + d.radius > t {
                        area += std::f64::consts::PI * d.radius * d.radius;
                    }
                }
                for s in &self.segs {
                    // fraction of the segment beyond |z| = t (coarse subdivision)
                    let m = 16;
                    let mut frac = 0.0;
                    for k in 0..m {
                        let p = s.a + (s.b - s.a) * ((k as f64 + 0.5) / m as f64);
                        if p.norm() > t {
                            frac += 1.0 / m as f64;
                        }
                    }
                    area += frac * s.len() * s.width;
                }
                (n, area)
            })
            .collect()
    }

    /// Quasihyperbolic lower bound for the distance in `W` between two
    /// dynamic points: integral of ds / (2 dist(., boundary)) along the
    /// spine path, which underestimates the hyperbolic distance.
    pub fn hyperbolic_separation_lower_bound(&self, i: usize, j: usize) -> f64 {
        let pos = |pt: usize| {
            self.nodes
                .iter()
                .position(|n| n.point == Some(pt))
                .expect("dynamic point on chain")
        };
        let (lo, hi) = {
            let (a, b) = (pos(i), pos(j));
            (a.min(b), a.max(b))
        };
        // walk chain nodes lo..hi accumulating ds/(2 d(., dW)); inside a
        // disk the clearance is at most the radius, inside a tube half the
        // width
        let mut total = 0.0;
        for k in lo..hi {
            let a = self.nodes[k].pos;
            let b = self.nodes[k + 1].pos;
            let m = 32;
            for q in 0..m {
                let p = a + (b - a) * ((q as f64 + 0.5) / m as f64);
                let ds = (b - a).norm() / m as f64;
                let clearance = match self.disk_at(p) {
                    Some(d) => (d.radius - (p - d.center).norm()).max(1e-12).min(d.radius),
                    None => {
                        let hit = self.nearest_spine(p);
                        0.5 * self.segs[hit.seg].width
                    }
                };
                total += ds / (2.0 * clearance);
            }
        }
        total
    }
}
