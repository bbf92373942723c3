//! Explicit quasiconformal building blocks.
//!
//! * [`sigma`] — the 3-quasiconformal glue from the outside of the unit
//!   circle to the slit plane, identifying conjugate circle points,
//! * [`rho`] — the critical-value perturbation of the disk moving 0 to `w`
//!   while fixing the boundary pointwise and staying conformal on `|z|<1/2`,
//! * [`BoundaryCorrector`] — the Beurling-Ahlfors-style correction of a
//!   half-plane boundary table onto exact length-pi intervals,
//! * [`pm1_adjust`] — the adjuster eta moving -1 to x and +1 to y inside two
//!   small disks.
//!
//! Every map carries a closed-form forward evaluator and a closed-form
//! Beltrami coefficient so the model can assemble dilatations without
//! finite differences.

use crate::{C, Error, Result};

pub const RHO_S_MAX: f64 = 0.9;

/// Cubic smoothstep clamped to [0,1].
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

pub fn smoothstep_deriv(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    6.0 * t * (1.0 - t)
}

// ---------------------------------------------------------------------------
// sigma: {|z| >= 1} -> C \ (-1,1)
// ---------------------------------------------------------------------------

fn moebius_pm1(z: C) -> C {
    // (z+1)/(z-1), its own inverse; maps {|z|>1} onto the right half-plane
    (z + 1.0) / (z - 1.0)
}

/// The 3-quasiconformal map from the outside of the unit disk to the
/// complement of `[-1,1]`: identity on the mu-preimage of the sector
/// `|arg| <= pi/4`, angle-tripling on the two remaining sectors. Conjugate
/// boundary points are identified into the slit.
pub fn sigma(z: C) -> Result<C> {
    if z.norm() < 1.0 - 1e-12 {
        return Err(Error::DomainViolation("sigma"));
    }
    Ok(sigma_unchecked(z))
}

pub fn sigma_unchecked(z: C) -> C {
    if (z - 1.0).norm() < 1e-300 {
        return z;
    }
    if (z + 1.0).norm() < 1e-300 {
        return z;
    }
    let w = moebius_pm1(z);
    if w.norm() < 1e-300 {
        return C::new(-1.0, 0.0);
    }
    let theta = w.arg().clamp(-std::f64::consts::PI / 2.0, std::f64::consts::PI / 2.0);
    let quarter = std::f64::consts::FRAC_PI_4;
    if theta.abs() <= quarter {
        return z; // identity region
    }
    let tripled = theta.signum() * (3.0 * theta.abs() - std::f64::consts::FRAC_PI_2);
    let zeta = C::from_polar(w.norm(), tripled);
    moebius_pm1(zeta)
}

/// Beltrami coefficient of sigma: 0 on the identity region, modulus 1/2 on
/// the angle-tripled sectors (so K = 3 exactly).
pub fn sigma_mu(z: C) -> C {
    if (z - 1.0).norm() < 1e-12 || (z + 1.0).norm() < 1e-12 {
        return C::new(0.0, 0.0);
    }
    let w = moebius_pm1(z);
    if w.norm() < 1e-300 || w.arg().abs() <= std::f64::consts::FRAC_PI_4 {
        return C::new(0.0, 0.0);
    }
    // mu_nu at w, pulled back through the Moebius map
    let mu_nu = -0.5 * w / w.conj();
    let dm = -2.0 / ((z - 1.0) * (z - 1.0)); // m'(z)
    mu_nu * dm.conj() / dm
}

// ---------------------------------------------------------------------------
// rho_w: disk self-map with rho(0) = w
// ---------------------------------------------------------------------------

const RHO_KAPPA: f64 = 0.9;

/// Radial profile in hyperbolic coordinates: translation length alpha as a
/// function of rho = artanh r. Full length A inside artanh(1/2), then a
/// linear ramp of slope kappa joined C^1 to an exponential tail. Keeping
/// |d alpha / d rho| < 1 makes the nested Moebius images strictly monotone,
/// which is what gives injectivity up to |w| = 0.9.
fn rho_alpha(rho: f64, a_total: f64) -> (f64, f64) {
    let t0 = 0.5f64.atanh();
    if rho <= t0 {
        return (a_total, 0.0);
    }
    if 2.0 * a_total <= RHO_KAPPA {
        let v = a_total * (-2.0 * (rho - t0)).exp();
        return (v, -2.0 * v);
    }
    let rho_star = t0 + a_total / RHO_KAPPA - 0.5;
    if rho <= rho_star {
        (a_total - RHO_KAPPA * (rho - t0), -RHO_KAPPA)
    } else {
        let v = 0.5 * RHO_KAPPA * (-2.0 * (rho - rho_star)).exp();
        (v, -2.0 * v)
    }
}

fn rho_param(r: f64, w: C) -> (C, f64) {
    // returns (a(r) * w/|w|, da/dr) with a = tanh(alpha(artanh r))
    let aw = w.norm();
    if aw < 1e-300 {
        return (C::new(0.0, 0.0), 0.0);
    }
    let u = w / aw;
    let a_total = aw.atanh();
    let r = r.clamp(0.0, 1.0 - 1e-16);
    let rho = r.atanh();
    let (alpha, dalpha_drho) = rho_alpha(rho, a_total);
    let a = alpha.tanh();
    let dadr = dalpha_drho * (1.0 - a * a) / (1.0 - r * r);
    (a * u, dadr)
}

/// Quasiconformal self-map of the closed unit disk with `rho(0) = w`,
/// identity on `|z| = 1` and equal to the Moebius map `M_w` on `|z| <= 1/2`.
pub fn rho(w: C, z: C) -> Result<C> {
    if w.norm() > RHO_S_MAX {
        return Err(Error::ParameterOutOfRange(format!(
            "|w| = {:.4} exceeds s_max = {RHO_S_MAX}",
            w.norm()
        )));
    }
    if z.norm() > 1.0 + 1e-12 {
        return Err(Error::DomainViolation("rho"));
    }
    Ok(rho_unchecked(w, z))
}

pub fn rho_unchecked(w: C, z: C) -> C {
    let (c, _) = rho_param(z.norm(), w);
    if c.norm() < 1e-300 {
        return z;
    }
    (z + c) / (C::new(1.0, 0.0) + c.conj() * z)
}

/// Closed-form Beltrami coefficient of `rho_w`; vanishes on `|z| <= 1/2`.
pub fn rho_mu(w: C, z: C) -> C {
    let r = z.norm();
    if r < 1e-14 {
        return C::new(0.0, 0.0);
    }
    let aw = w.norm();
    if aw < 1e-300 {
        return C::new(0.0, 0.0);
    }
    let u = w / aw;
    let (c, dadr) = rho_param(r, w);
    if dadr == 0.0 {
        return C::new(0.0, 0.0);
    }
    let a = c.norm();
    let _ = a;
    let a_real = (c / u).re; // scalar translation parameter
    // rho = (z + a u)/(1 + a conj(u) z) with a = a(|z|):
    //   rho_zbar = a' z (u - conj(u) z^2) / (2 r D^2)
    //   rho_z    = [1 - a^2 + (a'/2)(u conj(z)/r - conj(u) z r)] / D^2
    let num = dadr * z * (u - u.conj() * z * z) / (2.0 * r);
    let den = C::new(1.0 - a_real * a_real, 0.0)
        + 0.5 * dadr * (u * z.conj() / r - u.conj() * z * r);
    num / den
}

// ---------------------------------------------------------------------------
// Beurling-Ahlfors boundary corrector on the right half-plane
// ---------------------------------------------------------------------------

/// Piecewise-linear increasing boundary map with closed-form antiderivative,
/// linearly extended beyond its breakpoint range.
#[derive(Debug, Clone)]
pub struct PlBoundaryMap {
    pub ys: Vec<f64>,
    pub ts: Vec<f64>,
    cum: Vec<f64>, // integral of b from ys[0] to ys[k]
}

impl PlBoundaryMap {
    pub fn new(ys: Vec<f64>, ts: Vec<f64>) -> Self {
        assert_eq!(ys.len(), ts.len());
        assert!(ys.len() >= 2);
        let mut cum = vec![0.0; ys.len()];
        for k in 1..ys.len() {
            cum[k] = cum[k - 1] + 0.5 * (ts[k] + ts[k - 1]) * (ys[k] - ys[k - 1]);
        }
        PlBoundaryMap { ys, ts, cum }
    }

    fn segment(&self, y: f64) -> usize {
        match self.ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(k) => k.min(self.ys.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.ys.len() - 2),
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        let k = self.segment(y);
        let slope = (self.ts[k + 1] - self.ts[k]) / (self.ys[k + 1] - self.ys[k]);
        self.ts[k] + slope * (y - self.ys[k])
    }

    /// Exact integral of the (extended) map from ys[0] to y.
    pub fn integral(&self, y: f64) -> f64 {
        let k = self.segment(y);
        let slope = (self.ts[k + 1] - self.ts[k]) / (self.ys[k + 1] - self.ys[k]);
        let d = y - self.ys[k];
        self.cum[k] + self.ts[k] * d + 0.5 * slope * d * d
    }
}

/// Beurling-Ahlfors-style extension of a boundary table into the right
/// half-plane, blended to the identity at `Re zeta >= blend_end`.
#[derive(Debug, Clone)]
pub struct BoundaryCorrector {
    pub map: PlBoundaryMap,
    pub blend_start: f64,
    pub blend_end: f64,
    pub measured_k: f64,
}

/// Builds the corrector for input intervals on the imaginary axis.
///
/// `breakpoints` are the tau-images of the vertices (increasing); vertex `k`
/// is sent to `i pi (start_index + k)`. Each input interval must have length
/// at least `pi (1 - tol)`; `labels`, when given, must alternate and match
/// the parity of the targets (`+1` on even multiples of pi).
pub fn boundary_correct(
    breakpoints: &[f64],
    start_index: i64,
    labels: Option<&[i8]>,
    tol: f64,
) -> Result<BoundaryCorrector> {
    let pi = std::f64::consts::PI;
    if breakpoints.len() < 2 {
        return Err(Error::Config("need at least two breakpoints".into()));
    }
    let mut min_len = f64::INFINITY;
    for k in 1..breakpoints.len() {
        let len = breakpoints[k] - breakpoints[k - 1];
        if len < pi * (1.0 - tol) {
            return Err(Error::TauViolation(len));
        }
        min_len = min_len.min(len);
    }
    if let Some(labels) = labels {
        if labels.len() != breakpoints.len() {
            return Err(Error::Config("label/breakpoint length mismatch".into()));
        }
        for k in 0..labels.len() {
            let expect = if (start_index + k as i64).rem_euclid(2) == 0 { 1 } else { -1 };
            if labels[k] != expect || (k > 0 && labels[k] == labels[k - 1]) {
                return Err(Error::ParityConflict);
            }
        }
    }
    let ts: Vec<f64> = (0..breakpoints.len())
        .map(|k| pi * (start_index + k as i64) as f64)
        .collect();
    // the blend zone must be wide enough to absorb the table's cumulative
    // drift without shearing; drift-free tables blend within one interval
    let drift_span = {
        let drifts: Vec<f64> = breakpoints.iter().zip(ts.iter()).map(|(y, t)| t - y).collect();
        let lo = drifts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = drifts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    let blend_end = min_len.max(8.0 * drift_span);
    let map = PlBoundaryMap::new(breakpoints.to_vec(), ts);
    let mut corr = BoundaryCorrector {
        map,
        blend_start: 0.5 * blend_end,
        blend_end,
        measured_k: 1.0,
    };
    corr.measured_k = corr.measure_k(64);
    Ok(corr)
}

impl BoundaryCorrector {
    /// The corrected map at `zeta = x + iy`, `x >= 0`.
    pub fn eval(&self, zeta: C) -> C {
        let x = zeta.re;
        let y = zeta.im;
        if x <= 0.0 {
            return C::new(x.max(0.0), self.map.eval(y));
        }
        if x >= self.blend_end {
            return zeta;
        }
        let alpha = (self.map.integral(y + x) - self.map.integral(y)) / x;
        let beta = (self.map.integral(y) - self.map.integral(y - x)) / x;
        // normalized so the identity table extends to the identity map
        let ba = C::new(alpha - beta, 0.5 * (alpha + beta));
        if x <= self.blend_start {
            ba
        } else {
            let lam = smoothstep((x - self.blend_start) / (self.blend_end - self.blend_start));
            (1.0 - lam) * ba + lam * zeta
        }
    }

    /// Finite-difference Beltrami coefficient (the corrector is piecewise
    /// closed-form; FD keeps this short and is exact enough for masks).
    pub fn mu(&self, zeta: C) -> C {
        if zeta.re <= 1e-12 || zeta.re >= self.blend_end {
            return C::new(0.0, 0.0);
        }
        let h = 1e-6 * self.blend_end.max(1.0);
        let fx = (self.eval(zeta + h) - self.eval(zeta - h)) / (2.0 * h);
        let fy = (self.eval(zeta + C::new(0.0, h)) - self.eval(zeta - C::new(0.0, h))) / (2.0 * h);
        let fz = 0.5 * (fx - C::i() * fy);
        let fzb = 0.5 * (fx + C::i() * fy);
        if fz.norm() < 1e-12 {
            return C::new(0.0, 0.0);
        }
        let mu = fzb / fz;
        if mu.norm() >= 1.0 {
            // clamp measurable defects at corner seams
            mu / mu.norm() * 0.95
        } else {
            mu
        }
    }

    pub fn measure_k(&self, samples_per_side: usize) -> f64 {
        let y0 = self.map.ys[0];
        let y1 = *self.map.ys.last().unwrap();
        let mut kmax: f64 = 1.0;
        for i in 0..samples_per_side {
            for j in 1..samples_per_side {
                let y = y0 + (y1 - y0) * i as f64 / (samples_per_side - 1) as f64;
                let x = self.blend_end * j as f64 / samples_per_side as f64;
                let m = self.mu(C::new(x, y)).norm();
                if m < 1.0 {
                    kmax = kmax.max((1.0 + m) / (1.0 - m));
                }
            }
        }
        kmax
    }
}

// ---------------------------------------------------------------------------
// eta_{x,y}: the +-1 adjuster
// ---------------------------------------------------------------------------

/// Quasiconformal adjuster sending -1 to `x` and +1 to `y`, identity outside
/// `D(-1, delta) U D(1, delta)`. The translation is damped by a cubic
/// profile in `|z -+ 1|/delta`, so the displacement field has Lipschitz
/// constant at most 3/4 and the map is a homeomorphism with K bounded
/// independently of `delta`, `x` and `y`.
#[derive(Debug, Clone, Copy)]
pub struct Pm1Adjust {
    pub x: C,
    pub y: C,
    pub delta: f64,
}

pub fn pm1_adjust(x: C, y: C, delta: f64) -> Result<Pm1Adjust> {
    if !(delta > 0.0) {
        return Err(Error::ParameterOutOfRange("delta must be positive".into()));
    }
    if (x + 1.0).norm() > 0.5 * delta + 1e-12 || (y - 1.0).norm() > 0.5 * delta + 1e-12 {
        return Err(Error::ParameterOutOfRange(format!(
            "x,y must lie within delta/2 = {:.3e} of -1, 1",
            0.5 * delta
        )));
    }
    Ok(Pm1Adjust { x, y, delta })
}

impl Pm1Adjust {
    fn bump(&self, d: f64) -> f64 {
        1.0 - smoothstep(d / self.delta)
    }

    fn bump_deriv(&self, d: f64) -> f64 {
        -smoothstep_deriv(d / self.delta) / self.delta
    }

    pub fn eval(&self, z: C) -> C {
        let mut out = z;
        let dm = (z + 1.0).norm();
        if dm < self.delta {
            out += (self.x + 1.0) * self.bump(dm);
        }
        let dp = (z - 1.0).norm();
        if dp < self.delta {
            out += (self.y - 1.0) * self.bump(dp);
        }
        out
    }

    /// Whether `z` lies in the dilatation support `U`.
    pub fn in_support(&self, z: C) -> bool {
        (z + 1.0).norm() < self.delta || (z - 1.0).norm() < self.delta
    }

    pub fn mu(&self, z: C) -> C {
        let mut vz = C::new(0.0, 0.0);
        let mut vzb = C::new(0.0, 0.0);
        for (center, target) in [(C::new(-1.0, 0.0), self.x + 1.0), (C::new(1.0, 0.0), self.y - 1.0)] {
            let d = (z - center).norm();
            if d >= self.delta || d < 1e-300 {
                continue;
            }
            let g = self.bump_deriv(d);
            let zc = z - center;
            // d|zc|/dz = conj(zc)/(2|zc|), d|zc|/dzbar = zc/(2|zc|)
            vz += target * g * zc.conj() / (2.0 * d);
            vzb += target * g * zc / (2.0 * d);
        }
        let etaz = C::new(1.0, 0.0) + vz;
        if etaz.norm() < 1e-12 {
            return C::new(0.0, 0.0);
        }
        vzb / etaz
    }
}

// ---------------------------------------------------------------------------
// shared measurement helper
// ---------------------------------------------------------------------------

/// Max |mu| of `f` by central differences over sample points, skipping
/// points where `valid` fails on the stencil.
pub fn measure_mu_max(
    f: impl Fn(C) -> C,
    points: impl Iterator<Item = C>,
    h: f64,
    valid: impl Fn(C) -> bool,
) -> f64 {
    let mut worst: f64 = 0.0;
    for z in points {
        let stencil = [z + h, z - h, z + C::new(0.0, h), z - C::new(0.0, h)];
        if !stencil.iter().all(|&s| valid(s)) {
            continue;
        }
        let fx = (f(stencil[0]) - f(stencil[1])) / (2.0 * h);
        let fy = (f(stencil[2]) - f(stencil[3])) / (2.0 * h);
        let fz = 0.5 * (fx - C::i() * fy);
        let fzb = 0.5 * (fx + C::i() * fy);
        if fz.norm() > 1e-12 {
            worst = worst.max((fzb / fz).norm());
        }
    }
    worst
}
