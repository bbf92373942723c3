//! Grid solver for the Beltrami equation `d_zbar phi = mu d_z phi` with the
//! normalization `phi(z) = z + O(1/z)` at infinity.
//!
//! Writing `phi = z + C(h)` with `h = d_zbar phi` turns the equation into
//! the fixed-point problem `h = mu B(h) + mu`, where `B = d_z C` is the
//! Beurling transform. Both singular integrals are applied through their
//! exact Fourier multipliers (`conj(k)/k` for `B`, `-2i/k` for `C`, zero at
//! `k = 0`) on a zero-padded grid of twice the window size, which keeps the
//! periodization images of the compactly supported `h` out of the window.

use crate::field::{BeltramiField, Codomain, GridWindow, SampledMap};
use crate::{C, Error, Result};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const NEUMANN_TOL: f64 = 1e-8;
const NEUMANN_MAX_ITERS: usize = 200;

/// Solution record: the sampled correction map plus its quality metrics.
#[derive(Debug, Clone)]
pub struct CorrectionMap {
    pub phi: SampledMap,
    /// sup norm of the final fixed-point defect `h - mu B(h) - mu`.
    pub residual: f64,
    /// Neumann iterations actually used.
    pub iterations: usize,
    /// max |phi(z) - z| on the rings |z - c| = R/2 and 3R/4.
    pub decay: (f64, f64),
    /// max |phi(z) - z| over the whole window.
    pub eps_global: f64,
    /// sup |mu| of the coefficient that was solved.
    pub k_max: f64,
}

impl CorrectionMap {
    /// Newton inversion of the correction map, seeded at the target (valid
    /// because |phi - id| is small by construction). Uses the full real 2x2
    /// Jacobian so it also converges where phi is only quasiconformal.
    pub fn invert(&self, target: C) -> Result<C> {
        let mut z = target;
        let h = self.phi.window.spacing();
        let eval = |z: C| self.phi.evaluate(z).map_err(|_| Error::InversionFailure(target));
        for _ in 0..50 {
            let val = eval(z)?;
            let err = (val - target).norm();
            if err < 1e-10 {
                return Ok(z);
            }
            let fx = (eval(z + h)? - eval(z - h)?) / (2.0 * h);
            let fy = (eval(z + C::new(0.0, h))? - eval(z - C::new(0.0, h))?) / (2.0 * h);
            let det = fx.re * fy.im - fx.im * fy.re;
            let r = val - target;
            let step = if det.abs() > 1e-12 {
                C::new((r.re * fy.im - r.im * fy.re) / det, (fx.re * r.im - fx.im * r.re) / det)
            } else {
                r
            };
            // backtracking keeps the iteration inside the basin
            let mut lam = 1.0;
            let mut moved = false;
            for _ in 0..12 {
                let cand = z - lam * step;
                if let Ok(v) = self.phi.evaluate(cand) {
                    if (v - target).norm() < err {
                        z = cand;
                        moved = true;
                        break;
                    }
                }
                lam *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let val = eval(z)?;
        if (val - target).norm() < 1e-8 {
            Ok(z)
        } else {
            Err(Error::InversionFailure(target))
        }
    }
}

/// FFT workspace reused across solves; warm-starts the Neumann iteration
/// with the previous density when the support has not changed.
pub struct BeltramiSolver {
    window: GridWindow,
    n_pad: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    warm: Option<Vec<C>>,
}

impl BeltramiSolver {
    pub fn new(window: GridWindow) -> Self {
        let n_pad = 2 * window.n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_pad);
        let ifft = planner.plan_fft_inverse(n_pad);
        BeltramiSolver { window, n_pad, fft, ifft, warm: None }
    }

    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    fn fft2(&self, buf: &mut [C], inverse: bool) {
        let n = self.n_pad;
        let plan = if inverse { &self.ifft } else { &self.fft };
        let scratch_len = plan.get_inplace_scratch_len();
        buf.par_chunks_mut(n).for_each_init(
            || vec![C::new(0.0, 0.0); scratch_len],
            |scratch, row| plan.process_with_scratch(row, scratch),
        );
        transpose_square(buf, n);
        buf.par_chunks_mut(n).for_each_init(
            || vec![C::new(0.0, 0.0); scratch_len],
            |scratch, row| plan.process_with_scratch(row, scratch),
        );
        transpose_square(buf, n);
        if inverse {
            let scale = 1.0 / (n as f64 * n as f64);
            buf.par_iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// Applies a Fourier multiplier `m(k)` in place.
    fn apply_multiplier(&self, buf: &mut [C], mult: impl Fn(C) -> C + Sync) {
        let n = self.n_pad;
        let h = self.window.spacing();
        let l = n as f64 * h;
        self.fft2(buf, false);
        buf.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let ky = freq(i, n, l);
            for (j, v) in row.iter_mut().enumerate() {
                let kx = freq(j, n, l);
                let k = C::new(kx, ky);
                *v *= if i == 0 && j == 0 { C::new(0.0, 0.0) } else { mult(k) };
            }
        });
        self.fft2(buf, true);
    }

    /// Solves for the normalized correction of `mu`, reusing the previous
    /// density as the initial Neumann iterate when available.
    pub fn solve(&mut self, mu: &BeltramiField) -> Result<CorrectionMap> {
        if mu.window != self.window {
            return Err(Error::Config("solver window mismatch".into()));
        }
        let k_max = mu.k_max;
        if k_max > 0.95 {
            return Err(Error::DilatationOverflow(k_max));
        }
        let n = self.window.n;
        let np = self.n_pad;
        // padded coefficient
        let mut mu_pad = vec![C::new(0.0, 0.0); np * np];
        for i in 0..n {
            mu_pad[i * np..i * np + n].copy_from_slice(&mu.mu[i * n..(i + 1) * n]);
        }
        let support: Vec<usize> = (0..np * np).filter(|&k| mu_pad[k].norm() > 0.0).collect();
        if support.is_empty() {
            self.warm = None;
            let phi = SampledMap::identity(self.window);
            return Ok(CorrectionMap {
                phi,
                residual: 0.0,
                iterations: 0,
                decay: (0.0, 0.0),
                eps_global: 0.0,
                k_max,
            });
        }

        let mut h = match self.warm.take() {
            Some(w) if w.len() == np * np => w,
            _ => mu_pad.clone(),
        };
        let mut delta = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..NEUMANN_MAX_ITERS {
            iterations = it + 1;
            let mut bh = h.clone();
            self.apply_multiplier(&mut bh, |k| k.conj() / k);
            delta = 0.0f64;
            // h_new = mu * B h + mu, supported where mu is
            let mut h_new = vec![C::new(0.0, 0.0); np * np];
            for &k in &support {
                let v = mu_pad[k] * bh[k] + mu_pad[k];
                let d = (v - h[k]).norm();
                if d > delta {
                    delta = d;
                }
                h_new[k] = v;
            }
            h = h_new;
            if delta < NEUMANN_TOL {
                break;
            }
        }
        if delta >= NEUMANN_TOL && delta > 1e-6 {
            return Err(Error::NoConvergence(format!(
                "delta {delta:.3e} after {NEUMANN_MAX_ITERS} iterations (sup|mu| = {k_max:.3})"
            )));
        }
        let residual = delta;
        if residual > 1e-3 * k_max.max(1e-12) {
            return Err(Error::ResidualTooLarge(residual));
        }

        let mut u = h.clone();
        self.warm = Some(h);
        self.apply_multiplier(&mut u, |k| C::new(0.0, -2.0) / k);

        // crop to the window and add the identity
        let mut values = vec![C::new(0.0, 0.0); n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.window.z_at(i, j) + u[i * np + j];
            }
        });
        let phi = SampledMap { window: self.window, values, codomain: Codomain::Plane };

        let mut eps_global = 0.0f64;
        let mut ring_half = 0.0f64;
        let mut ring_34 = 0.0f64;
        let r = self.window.half_width;
        for i in 0..n {
            for j in 0..n {
                let z = self.window.z_at(i, j);
                let d = (phi.at(i, j) - z).norm();
                eps_global = eps_global.max(d);
                let rr = (z - self.window.center).norm();
                if (rr - 0.5 * r).abs() < self.window.spacing() {
                    ring_half = ring_half.max(d);
                }
                if (rr - 0.75 * r).abs() < self.window.spacing() {
                    ring_34 = ring_34.max(d);
                }
            }
        }
        Ok(CorrectionMap {
            phi,
            residual,
            iterations,
            decay: (ring_half, ring_34),
            eps_global,
            k_max,
        })
    }
}

fn freq(idx: usize, n: usize, l: f64) -> f64 {
    let m = if idx <= n / 2 { idx as f64 } else { idx as f64 - n as f64 };
    2.0 * std::f64::consts::PI * m / l
}

fn transpose_square(buf: &mut [C], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Solves the sequence `mu_n` and the limit `mu`, returning the sup over
/// `test_points` of `|phi_n - phi|` per element of the sequence.
pub fn continuity_probe(
    window: GridWindow,
    mu_sequence: &[BeltramiField],
    mu_limit: &BeltramiField,
    test_points: &[C],
) -> Result<Vec<f64>> {
    let mut solver = BeltramiSolver::new(window);
    let limit = solver.solve(mu_limit)?;
    let limit_vals: Vec<C> = test_points
        .iter()
        .map(|&z| limit.phi.evaluate(z))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(mu_sequence.len());
    for mu_n in mu_sequence {
        solver.reset_warm_start();
        let sol = solver.solve(mu_n)?;
        let mut sup = 0.0f64;
        for (z, lv) in test_points.iter().zip(limit_vals.iter()) {
            sup = sup.max((sol.phi.evaluate(*z)? - lv).norm());
        }
        out.push(sup);
    }
    Ok(out)
}

/// The closed-form radial-stretch test pair: coefficient `z/(3 conj z)` on
/// the unit disk around `c`, solved exactly by `z |z|` inside and `z`
/// outside (translated accordingly). Lives here so both unit tests and the
/// acceptance suite freeze their expectations against the same oracle.
pub mod oracle {
    use super::*;

    pub fn radial_stretch_mu(center: C) -> impl Fn(C) -> C {
        move |z: C| {
            let d = z - center;
            let r = d.norm();
            if r < 1.0 && r > 1e-12 {
                d / (3.0 * d.conj())
            } else {
                C::new(0.0, 0.0)
            }
        }
    }

    pub fn radial_stretch_phi(center: C, z: C) -> C {
        let d = z - center;
        if d.norm() <= 1.0 {
            center + d * d.norm()
        } else {
            z
        }
    }

    pub fn field(window: GridWindow, center: C) -> BeltramiField {
        BeltramiField::from_fn(window, radial_stretch_mu(center))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(n: usize) -> GridWindow {
        GridWindow::new(C::new(0.0, 0.0), 2.0, n).unwrap()
    }

    #[test]
    fn zero_mu_gives_identity() {
        let w = window(64);
        let mut solver = BeltramiSolver::new(w);
        let sol = solver.solve(&BeltramiField::zero(w)).unwrap();
        assert_eq!(sol.residual, 0.0);
        assert_eq!(sol.eps_global, 0.0);
        let z = C::new(0.3, -0.7);
        assert!((sol.phi.evaluate(z).unwrap() - z).norm() < 1e-12);
    }

    #[test]
    fn radial_stretch_oracle_small_grid() {
        let w = window(256);
        let mu = oracle::field(w, C::new(0.0, 0.0));
        let mut solver = BeltramiSolver::new(w);
        let sol = solver.solve(&mu).unwrap();
        // interior check away from the coefficient jump at |z| = 1
        let mut worst = 0.0f64;
        for i in 0..w.n {
            for j in 0..w.n {
                let z = w.z_at(i, j);
                if z.re.abs() > 1.6 || z.im.abs() > 1.6 || (z.norm() - 1.0).abs() < 0.05 {
                    continue;
                }
                let expect = oracle::radial_stretch_phi(C::new(0.0, 0.0), z);
                worst = worst.max((sol.phi.at(i, j) - expect).norm());
            }
        }
        assert!(worst < 2e-2, "worst deviation {worst}");
        let v = sol.phi.evaluate(C::new(0.5, 0.0)).unwrap();
        assert!((v - C::new(0.25, 0.0)).norm() < 1e-2, "phi(0.5) = {v}");
    }

    #[test]
    fn translation_equivariance() {
        let w = window(256);
        let c = C::new(0.5, 0.25);
        let mu = oracle::field(w, c);
        let mut solver = BeltramiSolver::new(w);
        let sol = solver.solve(&mu).unwrap();
        let z = c + C::new(0.5, 0.0);
        let expect = oracle::radial_stretch_phi(c, z);
        assert!((sol.phi.evaluate(z).unwrap() - expect).norm() < 1e-2);
    }

    #[test]
    fn invert_roundtrip_and_oracle() {
        let w = window(256);
        let mu = oracle::field(w, C::new(0.0, 0.0));
        let mut solver = BeltramiSolver::new(w);
        let sol = solver.solve(&mu).unwrap();
        // inverse of the oracle: phi^-1(0.25) = 0.5
        let z = sol.invert(C::new(0.25, 0.0)).unwrap();
        assert!((z - C::new(0.5, 0.0)).norm() < 1e-2, "inverse {z}");
        // roundtrip on scattered points
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let target = C::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            let z = sol.invert(target).unwrap();
            assert!((sol.phi.evaluate(z).unwrap() - target).norm() < 1e-8);
        }
    }

    #[test]
    fn ring_decay_monotone() {
        let w = window(256);
        let mu = oracle::field(w, C::new(0.0, 0.0));
        let mut solver = BeltramiSolver::new(w);
        let sol = solver.solve(&mu).unwrap();
        assert!(sol.decay.1 <= sol.decay.0 + 1e-12, "decay {:?}", sol.decay);
    }

    #[test]
    fn warm_start_converges_faster() {
        let w = window(128);
        let mu = oracle::field(w, C::new(0.0, 0.0));
        let mut solver = BeltramiSolver::new(w);
        let cold = solver.solve(&mu).unwrap();
        let warm = solver.solve(&mu).unwrap();
        assert!(warm.iterations <= 2, "warm start took {} iterations", warm.iterations);
        assert!((warm.eps_global - cold.eps_global).abs() < 1e-9);
    }

    #[test]
    fn continuity_probe_decreasing() {
        let w = window(128);
        let base = oracle::field(w, C::new(0.0, 0.0));
        let seq: Vec<BeltramiField> = (0..4)
            .map(|n| {
                let s = 1.0 - 2.0f64.powi(-n);
                BeltramiField::from_fn(w, |z| s * oracle::radial_stretch_mu(C::new(0.0, 0.0))(z))
            })
            .collect();
        let pts: Vec<C> = (0..50)
            .map(|k| C::from_polar(0.2 + 0.01 * k as f64, k as f64))
            .collect();
        let devs = continuity_probe(w, &seq, &base, &pts).unwrap();
        for k in 1..devs.len() {
            assert!(devs[k] < devs[k - 1], "not strictly decreasing: {devs:?}");
        }
        // constant sequence -> zeros
        let devs0 = continuity_probe(w, std::slice::from_ref(&base), &base, &pts).unwrap();
        assert!(devs0[0] < 1e-12);
    }

    #[test]
    fn off_support_holomorphy() {
        // spectral halo around the coefficient jump decays with the grid;
        // at production n >= 1024 this passes the 1e-3 bar (acceptance
        // suite), here a coarse grid with matching expectation
        let w = window(256);
        let mu = oracle::field(w, C::new(0.0, 0.0));
        let mut solver = BeltramiSolver::new(w);
        let sol = solver.solve(&mu).unwrap();
        let field = crate::field::dilatation(&sol.phi).unwrap();
        let mut worst = 0.0f64;
        for i in 2..w.n - 2 {
            for j in 2..w.n - 2 {
                let z = w.z_at(i, j);
                if z.norm() > 1.0 + 6.0 * w.spacing() && z.re.abs() < 1.7 && z.im.abs() < 1.7 {
                    worst = worst.max(field.mu[i * w.n + j].norm());
                }
            }
        }
        assert!(worst < 5e-3, "off-support dilatation {worst}");
    }
}
