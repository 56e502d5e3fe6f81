//! One-dimensional profiles zeta used to bend the barrier d^s, together with
//! the checks on them and the two tangency claims for t_+^s zeta(t).

use std::sync::Arc;

use crate::modulus::{log_grid, Modulus, Table, GRID_MAX, GRID_MIN, PER_DECADE};
use crate::operator::{apply_with, line_spec, ProfiledFunction, RayQuadrature};
use crate::quad::{gl, logspace};
use crate::{c, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Built under the pointwise upper bound on the measure.
    Pub,
    /// Built from the 2s-Dini correction when the bound is unavailable.
    NoPub,
}

/// Default iota for a given lower bound s0 on s.
pub fn default_iota<T: Real>(s0: T) -> T {
    (s0 / c(4.0)).min(c(1.0 / 6.0))
}

/// zeta = C * Z on (0, tau], extended for t > tau by
/// a (t - tau + B)^{s/2} + K, matched to second order at tau.
#[derive(Clone, Debug)]
pub struct ZetaProfile<T> {
    pub s: T,
    pub iota: T,
    pub cconst: T,
    pub variant: Variant,
    /// Validity threshold.
    pub t0: T,
    /// Splice point of the power-law extension.
    pub tau: T,
    pub ext_a: T,
    pub ext_shift: T,
    pub ext_const: T,
    /// Fitted constant of the third-derivative bound.
    pub c1: T,
    pub omega: Modulus<T>,
    pub gamma: Option<Modulus<T>>,
    /// Primitive of P(r)/r minus r^iota/iota, with P = r^iota + omega (+ correction).
    rest: Table<T>,
    rest_tail_exp: T,
}

/// Margins of the structural assumptions, each with its worst abscissa.
#[derive(Clone, Debug)]
pub struct ZetaReport<T> {
    pub positive_increasing_concave: (T, T),
    pub third_derivative_c1: T,
    pub t_zeta_prime_monotone: (T, T),
    pub growth_ratio_monotone: (T, T),
    pub c2: T,
    pub coupling: (T, T),
}

impl<T: Real> ZetaReport<T> {
    pub fn passes(&self, tol: T, c1_cap: T) -> bool {
        self.positive_increasing_concave.0 >= -tol
            && self.third_derivative_c1 <= c1_cap
            && self.t_zeta_prime_monotone.0 >= -tol
            && self.growth_ratio_monotone.0 >= -tol
            && self.c2.is_finite()
            && self.coupling.0 >= -tol
    }
}

fn certified<T: Real>(omega: &Modulus<T>, iota: T) -> Result<()> {
    if omega.certificate.is_some() {
        return Ok(());
    }
    let rep = omega.check_properties(iota, c(0.25))?;
    if rep.passes(c(1e-8)) {
        Ok(())
    } else {
        Err(Error::NotUpgraded(format!("property margins {:?}", rep)))
    }
}

fn check_params<T: Real>(s: T, iota: T, cc: T) -> Result<()> {
    if !(s > T::zero() && s < T::one()) {
        return Err(Error::InvalidParameter(format!("s = {s} not in (0, 1)")));
    }
    if !(iota > T::zero() && iota < s && iota < c(1.0 / 3.0)) {
        return Err(Error::InvalidParameter(format!("iota = {iota} must lie in (0, min(s, 1/3))")));
    }
    if !(cc >= T::one()) {
        return Err(Error::InvalidParameter(format!("C = {cc} must be at least 1")));
    }
    Ok(())
}

/// Phi(g) = (g^{2s} - g)/(1 - 2s), or g ln(1/g) at s = 1/2, with two derivatives.
fn phi<T: Real>(g: T, s: T) -> (T, T, T) {
    let k = T::one() - s - s;
    if k.abs() < c(1e-8) {
        let l = -g.ln();
        (g * l, l - T::one(), -T::one() / g)
    } else {
        let two_s = s + s;
        let p = g.powf(two_s);
        ((p - g) / k, (two_s * p / g - T::one()) / k, -two_s * p / (g * g))
    }
}

impl<T: Real> ZetaProfile<T> {
    /// P(t) = t^iota + omega(t) (+ Phi(gamma(t))) with two derivatives.
    fn p3(&self, t: T) -> (T, T, T) {
        p3_of(t, self.iota, self.s, &self.omega, self.gamma.as_ref())
    }

    /// zeta and its first three derivatives.
    pub fn eval4(&self, t: T) -> (T, T, T, T) {
        if !(t > T::zero()) {
            return (T::zero(), T::infinity(), T::neg_infinity(), T::infinity());
        }
        if t > self.tau {
            return self.ext4(t);
        }
        let cc = self.cconst;
        let (p, p1, p2) = self.p3(t);
        let z = t.powf(self.iota) / self.iota + self.rest_value(t);
        let d1 = p / t;
        let d2 = p1 / t - p / (t * t);
        let d3 = p2 / t - c::<T>(2.0) * p1 / (t * t) + c::<T>(2.0) * p / (t * t * t);
        (cc * z, cc * d1, cc * d2, cc * d3)
    }

    fn ext4(&self, t: T) -> (T, T, T, T) {
        let h = self.s * c(0.5);
        let y = t - self.tau + self.ext_shift;
        let a = self.ext_a;
        let v = a * y.powf(h) + self.ext_const;
        let d1 = a * h * y.powf(h - T::one());
        let d2 = a * h * (h - T::one()) * y.powf(h - c(2.0));
        let d3 = a * h * (h - T::one()) * (h - c(2.0)) * y.powf(h - c(3.0));
        (v, d1, d2, d3)
    }

    pub fn eval(&self, t: T) -> T {
        self.eval4(t).0
    }

    fn rest_value(&self, t: T) -> T {
        let t_min = self.rest.first();
        if t < t_min {
            let (v0, _, _) = self.rest.eval3(t_min);
            v0 * (t / t_min).powf(self.rest_tail_exp)
        } else {
            self.rest.eval3(t).0
        }
    }

    pub fn validity_threshold(&self) -> T {
        self.t0
    }

    /// t_+^s zeta(t_+) as a function on the line.
    pub fn as_profiled(self: &Arc<Self>) -> ProfiledFunction<T> {
        let z = Arc::clone(self);
        let s = self.s;
        ProfiledFunction::new(1, move |x: &[T]| {
            let t = x[0];
            if t > T::zero() {
                t.powf(s) * z.eval(t)
            } else {
                T::zero()
            }
        })
        .with_growth(s * c(1.5))
        .with_breaks(|x, th, out| out.push(-x[0] / th[0]))
    }

    /// Margins of the structural assumptions. Third-derivative and growth
    /// checks run on (0, t0); the others on the whole sample range.
    pub fn check(&self) -> ZetaReport<T> {
        let grid: Vec<T> = log_grid(GRID_MIN, 1e3, PER_DECADE);
        let inf = T::infinity();
        let mut rep = ZetaReport {
            positive_increasing_concave: (inf, T::zero()),
            third_derivative_c1: T::zero(),
            t_zeta_prime_monotone: (inf, T::zero()),
            growth_ratio_monotone: (inf, T::zero()),
            c2: T::zero(),
            coupling: (inf, T::zero()),
        };
        let upd = |acc: &mut (T, T), m: T, t: T| {
            if m < acc.0 {
                *acc = (m, t)
            }
        };
        let mut prev_ratio: Option<T> = None;
        for &t in &grid {
            let (z, d1, d2, d3) = self.eval4(t);
            let m0 = z.min(d1 * t).min(-d2 * t * t) / z.abs().max(c(1e-300));
            upd(&mut rep.positive_increasing_concave, m0, t);
            upd(&mut rep.t_zeta_prime_monotone, (d1 + t * d2) / d1, t);
            rep.c2 = rep.c2.max(z / (T::one() + t).powf(self.s * c(0.5)));
            if t < self.t0 {
                rep.third_derivative_c1 = rep.third_derivative_c1.max(-t * t * d3 / d1);
                let ratio = z / t.powf(self.iota);
                if let Some(pr) = prev_ratio {
                    upd(&mut rep.growth_ratio_monotone, (pr - ratio) / pr, t);
                }
                prev_ratio = Some(ratio);
                upd(&mut rep.coupling, self.coupling_margin(t), t);
            }
        }
        rep
    }

    /// t zeta'(t) - C (t^s + omega(t) + correction), relative to t zeta'(t).
    pub fn coupling_margin(&self, t: T) -> T {
        let (_, d1, _, _) = self.eval4(t);
        let lhs = t * d1;
        let mut rhs = t.powf(self.s) + self.omega.eval(t);
        if self.gamma.is_some() {
            let y = self.omega.f_inverse(t).map(|r| self.omega.eval(r)).unwrap_or(T::zero());
            rhs = rhs + phi(y, self.s).0;
        }
        (lhs - self.cconst * rhs) / lhs
    }

    /// (value, first, second) jumps across the splice point.
    pub fn splice_mismatch(&self) -> (T, T, T) {
        let l = self.eval4(self.tau);
        let r = self.ext4(self.tau);
        ((l.0 - r.0).abs(), (l.1 - r.1).abs(), (l.2 - r.2).abs())
    }
}

fn p3_of<T: Real>(t: T, iota: T, s: T, omega: &Modulus<T>, gamma: Option<&Modulus<T>>) -> (T, T, T) {
    let ti = t.powf(iota);
    let (w, w1, w2) = omega.eval3(t);
    let mut p = (ti + w, iota * ti / t + w1, iota * (iota - T::one()) * ti / (t * t) + w2);
    if let Some(g) = gamma {
        let (gv, g1, g2) = g.eval3(t);
        let (f0, f1, f2) = phi(gv, s);
        p = (p.0 + f0, p.1 + f1 * g1, p.2 + f2 * g1 * g1 + f1 * g2);
    }
    p
}

fn assemble<T: Real>(
    s: T,
    iota: T,
    cc: T,
    variant: Variant,
    omega: Modulus<T>,
    gamma: Option<Modulus<T>>,
    tau: T,
    t_limit: T,
) -> Result<ZetaProfile<T>> {
    // Primitive of (P(r) - r^iota)/r on the grid, with derivative data.
    let mut grid: Vec<T> = log_grid(GRID_MIN, GRID_MAX, PER_DECADE).into_iter().filter(|&t| t < tau).collect();
    grid.push(tau);
    let q = |t: T| {
        let (p, p1, _) = p3_of(t, iota, s, &omega, gamma.as_ref());
        let ti = t.powf(iota);
        ((p - ti) / t, (p1 - iota * ti / t) / t - (p - ti) / (t * t))
    };
    let t_min = grid[0];
    let (q0, _) = q(t_min);
    let (pm, pm1, _) = p3_of(t_min, iota, s, &omega, gamma.as_ref());
    let rest_p = pm - t_min.powf(iota);
    let slope = (pm1 - iota * t_min.powf(iota) / t_min) * t_min / rest_p;
    let tail_exp = slope.max(c(1e-6));
    let mut vals = vec![q0 * t_min / tail_exp];
    for w in grid.windows(2) {
        let prev = *vals.last().unwrap();
        vals.push(prev + gl(&mut |r: T| q(r).0, w[0], w[1], 10));
    }
    let d1: Vec<T> = grid.iter().map(|&t| q(t).0).collect();
    let d2: Vec<T> = grid.iter().map(|&t| q(t).1).collect();
    let rest = Table::new(grid, vals, Some(d1), Some(d2))?;

    let mut z = ZetaProfile {
        s,
        iota,
        cconst: cc,
        variant,
        t0: T::zero(),
        tau,
        ext_a: T::zero(),
        ext_shift: T::one(),
        ext_const: T::zero(),
        c1: T::zero(),
        omega,
        gamma,
        rest,
        rest_tail_exp: tail_exp,
    };
    let (v, d1, d2, _) = z.eval4(tau);
    if !(d2 < T::zero()) {
        return Err(Error::Construction(format!("zeta'' at the splice point is {d2}, not negative")));
    }
    // Matching value, slope and curvature of a (t - tau + B)^{s/2} at tau.
    let two: T = c(2.0);
    let shift = (two - s) / two * d1 / (-d2);
    let a = two * d1 * shift.powf(T::one() - s / two) / s;
    z.ext_shift = shift;
    z.ext_a = a;
    z.ext_const = v - a * shift.powf(s / two);

    // Validity threshold: longest initial run of grid points satisfying the
    // growth, third-derivative and coupling conditions.
    let c1_cap: T = c(4.0);
    let mut t0 = T::zero();
    let mut prev: Option<T> = None;
    let mut c1 = T::zero();
    for t in log_grid::<T>(GRID_MIN, 1.0, PER_DECADE) {
        if t > t_limit {
            break;
        }
        let (zz, z1, _, z3) = z.eval4(t);
        let ratio = zz / t.powf(iota);
        let ok_growth = prev.map_or(true, |p| ratio <= p * (T::one() + c(1e-12)));
        let local_c1 = -t * t * z3 / z1;
        let ok = ok_growth && local_c1 <= c1_cap && z.coupling_margin(t) >= c(-1e-12);
        if !ok {
            break;
        }
        c1 = c1.max(local_c1);
        prev = Some(ratio);
        t0 = t;
    }
    if !(t0 > T::zero()) {
        return Err(Error::Construction("no grid point satisfies the structural conditions".into()));
    }
    z.t0 = t0;
    z.c1 = c1.max(T::zero());
    Ok(z)
}

/// Profile zeta(t) = C int_0^t (r^iota + omega(r))/r dr for operators with
/// the pointwise upper bound.
pub fn build_zeta_pub<T: Real>(s: T, omega: &Modulus<T>, iota: T, cc: T) -> Result<ZetaProfile<T>> {
    check_params(s, iota, cc)?;
    certified(omega, iota)?;
    assemble(s, iota, cc, Variant::Pub, omega.clone(), None, T::one(), c(0.5))
}

/// Threshold a_s below which the 2s-Dini correction is monotone and concave.
pub fn a_s<T: Real>(s: T, iota: T) -> T {
    let one = T::one();
    let k = one - s - s;
    if k.abs() < c(1e-8) {
        return (-one).exp();
    }
    let e = one / k;
    let b = (s + s).powf(e);
    let a = if s > c(0.5) { (one - iota).powf(e) } else { ((one - c::<T>(2.0) * s * iota) / (one - iota)).powf(e) };
    a.min(b)
}

/// Profile with the extra 2s-Dini term, for operators without the upper bound.
pub fn build_zeta_nopub<T: Real>(s: T, omega: &Modulus<T>, iota: T, cc: T) -> Result<ZetaProfile<T>> {
    check_params(s, iota, cc)?;
    certified(omega, iota)?;
    let grid: Vec<T> = log_grid(GRID_MIN, GRID_MAX, PER_DECADE);
    let mut h = Vec::with_capacity(grid.len());
    for &t in &grid {
        h.push(omega.eval(omega.f_inverse(t)?));
    }
    let gamma = Modulus::table(grid.clone(), h)?.upgrade(iota)?;
    let cap = a_s(s, iota).min((-T::one()).exp());
    let t1 = grid.iter().copied().take_while(|&t| gamma.eval(t) <= cap).last();
    let t1 = t1.ok_or_else(|| Error::Construction("corrected modulus exceeds a_s on the whole grid".into()))?;
    let tau = t1.min(T::one());
    assemble(s, iota, cc, Variant::NoPub, omega.clone(), Some(gamma), tau, tau.min(c(0.5)))
}

/// Claim A: g_{a,kappa}(r) = kappa (r - a)_+^s stays below
/// f_t(r) = r_+^s zeta(t r)/zeta(t). Returns (a, kappa, min gap).
pub fn claim_a<T: Real>(z: &ZetaProfile<T>, t: T) -> (T, T, T) {
    let s = z.s;
    let (zt, z1, _, _) = z.eval4(t);
    let q = t * z1 / zt;
    let a = q / (s + q);
    let kappa = (T::one() + q / s).powf(s);
    let mut rs: Vec<T> = logspace(c(1e-6), c(1e4), 2000);
    rs.extend(logspace(a * c(0.5), c(4.0), 2000));
    let mut gap = T::infinity();
    for r in rs {
        let ft = r.powf(s) * z.eval(t * r) / zt;
        let g = if r > a { kappa * (r - a).powf(s) } else { T::zero() };
        gap = gap.min(ft - g);
    }
    (a, kappa, gap)
}

/// Claim B: inf over r in (1, 1 + r0] of (f_t - g)/((t zeta'/zeta)(r - 1)^2).
pub fn claim_b<T: Real>(z: &ZetaProfile<T>, t: T, r0: T) -> T {
    let s = z.s;
    let (zt, z1, _, _) = z.eval4(t);
    let q = t * z1 / zt;
    let a = q / (s + q);
    let kappa = (T::one() + q / s).powf(s);
    let mut inf = T::infinity();
    for e in logspace(r0 * c(1e-2), r0, 200) {
        let r = T::one() + e;
        let ft = r.powf(s) * z.eval(t * r) / zt;
        let g = kappa * (r - a).powf(s);
        inf = inf.min((ft - g) / (q * e * e));
    }
    inf
}

/// Ratios (-Delta)^s[t_+^s zeta](t) / (t^{1-s} zeta'(t)) on the given points.
pub fn subharmonicity_margin<T: Real>(z: &Arc<ZetaProfile<T>>, ts: &[T]) -> Result<Vec<T>> {
    subharmonicity_margin_with(z, ts, &RayQuadrature::default())
}

pub fn subharmonicity_margin_with<T: Real>(z: &Arc<ZetaProfile<T>>, ts: &[T], q: &RayQuadrature) -> Result<Vec<T>> {
    let u = z.as_profiled();
    let spec = line_spec(z.s)?;
    ts.iter()
        .map(|&t| {
            if !(t > T::zero() && t < z.t0) {
                return Err(Error::OutOfRange(format!("t = {t} outside (0, t0)")));
            }
            let v = apply_with(&spec, &u, &[t], q)?;
            Ok(v / (t.powf(T::one() - z.s) * z.eval4(t).1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_power() {
        let iota = 1.0 / 6.0;
        let alpha = 0.1;
        let w = Modulus::power(alpha).unwrap();
        let z = build_zeta_pub(0.5, &w, iota, 2.0).unwrap();
        for t in [1e-6, 1e-3, 0.2, 0.9] {
            let expect = 2.0 * (f64::powf(t, iota) / iota + f64::powf(t, alpha) / alpha);
            assert_relative_eq!(z.eval(t), expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn splice_is_second_order() {
        let w = Modulus::<f64>::power(0.3).unwrap().upgrade(1.0 / 6.0).unwrap();
        let z = build_zeta_pub(0.6, &w, 1.0 / 6.0, 1.0).unwrap();
        let (a, b, cc) = z.splice_mismatch();
        let (v, d1, d2, _) = z.eval4(1.0);
        assert!(d2 < 0.0);
        assert!(a < 1e-8 * v && b < 1e-6 * d1 && cc < 1e-5 * d2.abs(), "{a} {b} {cc}");
    }

    #[test]
    fn kappa_identity() {
        let w = Modulus::power(0.3).unwrap().upgrade(1.0 / 6.0).unwrap();
        let z = build_zeta_pub(0.5, &w, 1.0 / 6.0, 1.0).unwrap();
        let (a, kappa, gap) = claim_a(&z, 1e-2);
        assert_relative_eq!(kappa * f64::powf(1.0 - a, 0.5), 1.0, max_relative = 1e-12);
        assert!(gap >= -1e-12);
        assert!(a <= 1.0 / 1.5 && kappa > 1.0 && kappa <= f64::powf(3.0, 0.5));
    }

    #[test]
    fn rejects_uncertified_modulus() {
        let w = Modulus::power(0.9).unwrap();
        assert!(matches!(build_zeta_pub(0.5, &w, 1.0 / 6.0, 1.0), Err(Error::NotUpgraded(_))));
    }
}
