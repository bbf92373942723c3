//! Grid-sampled complex fields: sampling windows, finite-difference
//! Wirtinger derivatives, dilatation extraction, annulus area sums and
//! bicubic evaluation. Everything downstream (the model, the Beltrami
//! solver, the verifier) speaks in these types.

use crate::{C, Error, Result};
use rayon::prelude::*;
use std::io::{Read, Write};

/// Marker for the point at infinity in sphere-valued samples.
pub fn inf_marker() -> C {
    C::new(f64::INFINITY, f64::INFINITY)
}

/// True if a sample stands for the point at infinity (or overflowed there).
pub fn is_inf(v: C) -> bool {
    !v.re.is_finite() || !v.im.is_finite()
}

/// Square sampling window: `n` x `n` nodes covering `[c-R, c+R)^2` with
/// spacing `2R/n`, node `(i,j)` at `c + (-R + j h) + i(-R + i h)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridWindow {
    pub center: C,
    pub half_width: f64,
    pub n: usize,
}

impl GridWindow {
    pub fn new(center: C, half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::Config(format!("window half-width {half_width} must be > 0")));
        }
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::Config(format!("grid n = {n} must be a power of two >= 64")));
        }
        Ok(GridWindow { center, half_width, n })
    }

    /// Window that covers `points` with margin at least `2 eps` on every side.
    pub fn covering(points: &[C], eps: f64, n: usize) -> Result<Self> {
        let mut r: f64 = 1.0;
        for p in points {
            r = r.max(p.re.abs() + 2.0 * eps).max(p.im.abs() + 2.0 * eps);
        }
        GridWindow::new(C::new(0.0, 0.0), r, n)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn z_at(&self, i: usize, j: usize) -> C {
        let h = self.spacing();
        self.center + C::new(-self.half_width + j as f64 * h, -self.half_width + i as f64 * h)
    }

    /// Fractional grid coordinates (col, row) of a point.
    pub fn grid_coords(&self, z: C) -> (f64, f64) {
        let h = self.spacing();
        let d = z - self.center;
        ((d.re + self.half_width) / h, (d.im + self.half_width) / h)
    }

    pub fn contains_with_margin(&self, z: C, margin_cells: f64) -> bool {
        let (x, y) = self.grid_coords(z);
        let lo = margin_cells;
        let hi = self.n as f64 - 1.0 - margin_cells;
        x >= lo && x <= hi && y >= lo && y <= hi
    }
}

/// Codomain of a sampled map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Codomain {
    Plane,
    Sphere,
}

/// A map C -> C (or C -> C-hat) sampled on a window, row-major.
#[derive(Debug, Clone)]
pub struct SampledMap {
    pub window: GridWindow,
    pub values: Vec<C>,
    pub codomain: Codomain,
}

impl SampledMap {
    pub fn from_fn(window: GridWindow, codomain: Codomain, f: impl Fn(C) -> C + Sync) -> Self {
        let n = window.n;
        let mut values = vec![C::new(0.0, 0.0); n * n];
        values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f(window.z_at(i, j));
                }
            });
        SampledMap { window, values, codomain }
    }

    pub fn identity(window: GridWindow) -> Self {
        Self::from_fn(window, Codomain::Plane, |z| z)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C {
        self.values[i * self.window.n + j]
    }

    /// Bicubic (Catmull-Rom) interpolation; exact at grid nodes and for
    /// polynomials of degree <= 3 between them.
    pub fn evaluate(&self, z: C) -> Result<C> {
        if !self.window.contains_with_margin(z, 1.0) {
            return Err(Error::OutOfWindow(z));
        }
        let (x, y) = self.window.grid_coords(z);
        let j0 = (x.floor() as isize).clamp(1, self.window.n as isize - 3) as usize;
        let i0 = (y.floor() as isize).clamp(1, self.window.n as isize - 3) as usize;
        let tx = x - j0 as f64;
        let ty = y - i0 as f64;
        let mut rows = [C::new(0.0, 0.0); 4];
        for (r, row_val) in rows.iter_mut().enumerate() {
            let i = i0 + r - 1;
            let s = [
                self.at(i, j0 - 1),
                self.at(i, j0),
                self.at(i, j0 + 1),
                self.at(i, j0 + 2),
            ];
            *row_val = catmull_rom(&s, tx);
        }
        let v = catmull_rom(&rows, ty);
        Ok(v)
    }
}

fn catmull_rom(p: &[C; 4], t: f64) -> C {
    // standard cubic through p1 (t=0) and p2 (t=1)
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p[1])
        + (p[2] - p[0]) * t
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t2
        + (3.0 * (p[1] - p[2]) + p[3] - p[0]) * t3)
}

/// Grid of complex dilatation values with a recorded support mask.
#[derive(Debug, Clone)]
pub struct BeltramiField {
    pub window: GridWindow,
    pub mu: Vec<C>,
    pub support_mask: Vec<bool>,
    /// Recorded sup |mu| over the support.
    pub k_max: f64,
}

impl BeltramiField {
    pub fn zero(window: GridWindow) -> Self {
        let n2 = window.n * window.n;
        BeltramiField { window, mu: vec![C::new(0.0, 0.0); n2], support_mask: vec![false; n2], k_max: 0.0 }
    }

    pub fn from_fn(window: GridWindow, f: impl Fn(C) -> C + Sync) -> Self {
        let n = window.n;
        let mut mu = vec![C::new(0.0, 0.0); n * n];
        mu.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(window.z_at(i, j));
            }
        });
        let support_mask: Vec<bool> = mu.iter().map(|m| m.norm() > TOL_SUPPORT).collect();
        let k_max = mu.iter().fold(0.0f64, |a, m| a.max(m.norm()));
        BeltramiField { window, mu, support_mask, k_max }
    }

    pub fn support_area(&self) -> f64 {
        let h = self.window.spacing();
        self.support_mask.iter().filter(|&&b| b).count() as f64 * h * h
    }
}

/// Threshold separating finite-difference noise from genuine dilatation.
pub const TOL_SUPPORT: f64 = 1e-6;
const TOL_FZ: f64 = 1e-12;

/// Central-difference Wirtinger derivatives of a sampled map; returns the
/// complex dilatation mu = f_zbar / f_z with support mask.
///
/// Sphere-valued maps switch to 1/f wherever |f| > 1 on the stencil
/// (inversion is a Moebius map, so mu is unchanged); entries where the
/// Jacobian degenerates are flagged out of the support.
pub fn dilatation(map: &SampledMap) -> Result<BeltramiField> {
    let n = map.window.n;
    let h = map.window.spacing();
    let mut mu = vec![C::new(0.0, 0.0); n * n];
    let mut mask = vec![false; n * n];
    let flagged: Vec<usize> = mu
        .par_chunks_mut(n)
        .zip(mask.par_chunks_mut(n))
        .enumerate()
        .map(|(i, (mu_row, mask_row))| {
            let mut flagged = 0usize;
            if i == 0 || i == n - 1 {
                return 0;
            }
            for j in 1..n - 1 {
                let stencil = [
                    map.at(i, j),
                    map.at(i, j + 1),
                    map.at(i, j - 1),
                    map.at(i + 1, j),
                    map.at(i - 1, j),
                ];
                let invert = map.codomain == Codomain::Sphere
                    && stencil.iter().any(|v| is_inf(*v) || v.norm() > 1.0);
                let val = |v: C| -> C {
                    if invert {
                        if is_inf(v) {
                            C::new(0.0, 0.0)
                        } else {
                            1.0 / v
                        }
                    } else {
                        v
                    }
                };
                if !invert && stencil.iter().any(|v| is_inf(*v)) {
                    flagged += 1;
                    continue;
                }
                let fx = (val(stencil[1]) - val(stencil[2])) / (2.0 * h);
                let fy = (val(stencil[3]) - val(stencil[4])) / (2.0 * h);
                let fz = 0.5 * (fx - C::i() * fy);
                let fzb = 0.5 * (fx + C::i() * fy);
                if fz.norm() < TOL_FZ {
                    flagged += 1;
                    continue;
                }
                let m = fzb / fz;
                mu_row[j] = m;
                mask_row[j] = m.norm() > TOL_SUPPORT;
            }
            flagged
        })
        .collect();
    let total_flagged: usize = flagged.iter().sum();
    let interior = (n - 2) * (n - 2);
    let unmasked = interior - mask.iter().filter(|&&b| b).count();
    if unmasked > 0 {
        let frac = total_flagged as f64 / unmasked as f64;
        if frac > 1e-3 {
            return Err(Error::DegenerateJacobian(frac * 100.0));
        }
    }
    let k_max = mu
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .fold(0.0f64, |a, (m, _)| a.max(m.norm()));
    Ok(BeltramiField { window: map.window, mu, support_mask: mask, k_max })
}

/// Riemann-sum areas of `mask` intersected with `{|z| > t}` for
/// `t = 0..=n_max`. Monotone nonincreasing in `t` by construction.
pub fn area_tail(mask: &[bool], window: &GridWindow, n_max: usize) -> Vec<(usize, f64)> {
    let n = window.n;
    let h = window.spacing();
    let cell = h * h;
    let mut sums = vec![0.0f64; n_max + 1];
    for i in 0..n {
        for j in 0..n {
            if mask[i * n + j] {
                let r = window.z_at(i, j).norm();
                for (t, s) in sums.iter_mut().enumerate() {
                    if r > t as f64 {
                        *s += cell;
                    }
                }
            }
        }
    }
    sums.into_iter().enumerate().collect()
}

/// Least-squares slope of `log area` against the annulus threshold; returns
/// the fitted decay exponent `alpha` (positive means decay). Zero-area rows
/// are dropped.
pub fn fit_decay_exponent(tail: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|(_, a)| *a > 0.0)
        .map(|(n, a)| (*n as f64, a.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY; // empty or single-point tails decay trivially
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return f64::INFINITY;
    }
    -(m * sxy - sx * sy) / denom
}

const FIELD_MAGIC: &[u8; 4] = b"PSGF";
const FIELD_VERSION: u32 = 1;

/// Writes the binary field dump: header (magic "PSGF", version u32, n u32,
/// center re/im f64, half-width f64) followed by n^2 little-endian complex
/// f64 pairs, row-major.
pub fn write_field<W: Write>(w: &mut W, map: &SampledMap) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FIELD_VERSION.to_le_bytes())?;
    w.write_all(&(map.window.n as u32).to_le_bytes())?;
    w.write_all(&map.window.center.re.to_le_bytes())?;
    w.write_all(&map.window.center.im.to_le_bytes())?;
    w.write_all(&map.window.half_width.to_le_bytes())?;
    let mut buf = Vec::with_capacity(map.values.len() * 16);
    for v in &map.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(r: &mut R) -> Result<SampledMap> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Config("bad field magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != FIELD_VERSION {
        return Err(Error::Config(format!("unsupported field version {version}")));
    }
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let cre = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let cim = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let hw = f64::from_le_bytes(b8);
    let window = GridWindow::new(C::new(cre, cim), hw, n)?;
    let mut values = Vec::with_capacity(n * n);
    let mut buf = vec![0u8; n * n * 16];
    r.read_exact(&mut buf)?;
    for chunk in buf.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        values.push(C::new(re, im));
    }
    Ok(SampledMap { window, values, codomain: Codomain::Plane })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(r: f64, n: usize) -> GridWindow {
        GridWindow::new(C::new(0.0, 0.0), r, n).unwrap()
    }

    #[test]
    fn dilatation_identity_is_zero() {
        let map = SampledMap::identity(window(2.0, 64));
        let mu = dilatation(&map).unwrap();
        assert_eq!(mu.k_max, 0.0);
        assert!(mu.support_mask.iter().all(|&b| !b));
    }

    #[test]
    fn dilatation_affine_antiholomorphic_part() {
        // z + 0.2 conj(z): f_z = 1, f_zbar = 0.2 exactly
        let map = SampledMap::from_fn(window(2.0, 64), Codomain::Plane, |z| z + 0.2 * z.conj());
        let mu = dilatation(&map).unwrap();
        for i in 1..63 {
            for j in 1..63 {
                assert!((mu.mu[i * 64 + j] - C::new(0.2, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dilatation_radial_stretch() {
        // z |z| inside the unit disk, z outside: mu = z/(3 conj z) on the disk
        let n = 512;
        let map = SampledMap::from_fn(window(2.0, n), Codomain::Plane, |z| {
            if z.norm() <= 1.0 {
                z * z.norm()
            } else {
                z
            }
        });
        let mu = dilatation(&map).unwrap();
        let w = window(2.0, n);
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let z = w.z_at(i, j);
                let r = z.norm();
                // FD needs to clear the interface kink and the origin, where
                // the third derivative of z|z| blows up like 1/r^2
                if (r - 1.0).abs() < 2.0 * w.spacing() || r < 0.2 {
                    continue;
                }
                let expect = if r < 1.0 { z / (3.0 * z.conj()) } else { C::new(0.0, 0.0) };
                let got = mu.mu[i * n + j];
                assert!(
                    (got - expect).norm() < 1e-3,
                    "at {z}: got {got}, expected {expect}"
                );
            }
        }
    }

    #[test]
    fn dilatation_fd_consistency_order() {
        // z^2 is a quadratic: central differences are exact
        let map = SampledMap::from_fn(window(1.5, 128), Codomain::Plane, |z| z * z);
        let mu = dilatation(&map).unwrap();
        assert!(mu.k_max < 1e-12, "z^2 should be FD-exact, got {}", mu.k_max);
        // exp: sup|mu| scales like h^2 (f_z = e^z never degenerates)
        let mut sups = Vec::new();
        for n in [128usize, 256] {
            let map = SampledMap::from_fn(window(1.5, n), Codomain::Plane, |z| z.exp());
            let mu = dilatation(&map).unwrap();
            sups.push(mu.mu.iter().fold(0.0f64, |a, m| a.max(m.norm())));
        }
        assert!(sups[1] < sups[0] * 0.35, "no h^2 decay: {sups:?}");
        assert!(sups[1] < 1e-4);
    }

    #[test]
    fn dilatation_pole_handling() {
        // 1/z has a pole at 0 but is holomorphic: sphere codomain switches
        // to the reciprocal chart, which is exactly z there
        let n = 512;
        let map = SampledMap::from_fn(window(2.0, n), Codomain::Sphere, |z| {
            if z.norm() < 1e-14 {
                inf_marker()
            } else {
                1.0 / z
            }
        });
        let mu = dilatation(&map).unwrap();
        assert!(mu.k_max < 1e-4, "k_max = {}", mu.k_max);
    }

    #[test]
    fn area_tail_disk_and_annulus() {
        let n = 512;
        let w = window(3.0, n);
        let cell = w.spacing() * w.spacing();
        // unit disk
        let mask: Vec<bool> = (0..n * n)
            .map(|k| w.z_at(k / n, k % n).norm() < 1.0)
            .collect();
        let tail = area_tail(&mask, &w, 2);
        let pi = std::f64::consts::PI;
        let tol = 2.0 * pi * w.spacing() + cell; // one grid cell along the rim
        assert!((tail[0].1 - pi).abs() < tol, "disk area {}", tail[0].1);
        assert_eq!(tail[1].1, 0.0);
        assert_eq!(tail[2].1, 0.0);
        // annulus 1 < |z| < 2
        let mask: Vec<bool> = (0..n * n)
            .map(|k| {
                let r = w.z_at(k / n, k % n).norm();
                r > 1.0 && r < 2.0
            })
            .collect();
        let tail = area_tail(&mask, &w, 2);
        let tol = 6.0 * pi * w.spacing() + cell;
        assert!((tail[0].1 - 3.0 * pi).abs() < tol);
        assert!((tail[1].1 - 3.0 * pi).abs() < tol);
        assert_eq!(tail[2].1, 0.0);
        // monotone + additivity over disjoint masks is structural: spot-check
        assert!(tail[0].1 >= tail[1].1 && tail[1].1 >= tail[2].1);
    }

    #[test]
    fn area_tail_empty() {
        let w = window(2.0, 64);
        let mask = vec![false; 64 * 64];
        assert!(area_tail(&mask, &w, 3).iter().all(|(_, a)| *a == 0.0));
    }

    #[test]
    fn evaluate_exact_at_nodes_and_smooth() {
        let n = 1024;
        let w = window(2.0, n);
        let map = SampledMap::from_fn(w, Codomain::Plane, |z| z * z);
        // exact at a node
        let zn = w.z_at(100, 200);
        assert!((map.evaluate(zn).unwrap() - zn * zn).norm() < 1e-13);
        // interpolation of z^2 at an off-node point (cubic reproduces quadratics)
        let v = map.evaluate(C::new(0.5, 0.0)).unwrap();
        assert!((v - C::new(0.25, 0.0)).norm() < 1e-8, "{v}");
        // identity at an irrational-ish point
        let idm = SampledMap::identity(w);
        let p = C::new(0.3, 0.4);
        assert!((idm.evaluate(p).unwrap() - p).norm() < 1e-12);
    }

    #[test]
    fn evaluate_out_of_window() {
        let w = window(1.0, 64);
        let map = SampledMap::identity(w);
        let corner = C::new(1.0, 1.0); // corner + margin is outside
        assert!(matches!(map.evaluate(corner), Err(Error::OutOfWindow(_))));
    }

    #[test]
    fn evaluate_continuous_across_cells() {
        let n = 256;
        let w = window(1.0, n);
        let map = SampledMap::from_fn(w, Codomain::Plane, |z| (3.0 * z).sin() + z);
        let h = w.spacing();
        // sample straddling a cell boundary
        let zb = w.z_at(40, 41);
        let eps = 1e-9;
        let a = map.evaluate(zb - C::new(eps * h, 0.0)).unwrap();
        let b = map.evaluate(zb + C::new(eps * h, 0.0)).unwrap();
        assert!((a - b).norm() < 1e-7);
    }

    #[test]
    fn field_roundtrip() {
        let w = window(1.5, 64);
        let map = SampledMap::from_fn(w, Codomain::Plane, |z| z.exp());
        let mut buf = Vec::new();
        write_field(&mut buf, &map).unwrap();
        assert_eq!(buf.len(), 36 + 64 * 64 * 16);
        let back = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back.window, map.window);
        assert_eq!(back.values, map.values);
    }

    #[test]
    fn decay_fit_recovers_exponent() {
        let tail: Vec<(usize, f64)> = (0..=5).map(|n| (n, 0.04 * (-0.9 * n as f64).exp())).collect();
        let alpha = fit_decay_exponent(&tail);
        assert!((alpha - 0.9).abs() < 1e-9);
    }
}
