//! Evaluation of the nonlocal operator
//!
//! ```text
//! A u(x) = (1 - s) int_S int_R (u(x) - u(x + r theta)) |r|^{-1-2s} dr mu(d theta)
//! ```
//!
//! Each direction is integrated over the whole line, written as a symmetric
//! second difference on the half line.

use std::sync::Arc;

use rayon::prelude::*;

use crate::measure::{dot, norm, OperatorSpec, SphericalMeasure};
use crate::quad::{geometric, graded, tail, Grading};
use crate::{c, Error, Real, Result};

type Field<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
type Breaks<T> = Arc<dyn Fn(&[T], &[T], &mut Vec<T>) + Send + Sync>;

/// A function on R^d together with the structural data the quadrature needs:
/// where it fails to be smooth along a ray, how fast it grows, and whether it
/// has bounded support.
#[derive(Clone)]
pub struct ProfiledFunction<T> {
    pub dim: usize,
    field: Field<T>,
    breaks: Option<Breaks<T>>,
    /// Exponent g with |u(x)| <= C (1 + |x|)^g.
    pub growth: T,
    /// Radius of a centred ball outside of which u vanishes.
    pub support: Option<T>,
    /// Length scale below which u is smooth away from its breaks.
    pub scale: T,
}

impl<T: Real> ProfiledFunction<T> {
    pub fn new(dim: usize, field: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        ProfiledFunction { dim, field: Arc::new(field), breaks: None, growth: T::zero(), support: None, scale: T::one() }
    }

    /// Registers the signed ray parameters r where u(x + r theta) is not smooth.
    pub fn with_breaks(mut self, b: impl Fn(&[T], &[T], &mut Vec<T>) + Send + Sync + 'static) -> Self {
        self.breaks = Some(Arc::new(b));
        self
    }

    pub fn with_growth(mut self, g: T) -> Self {
        self.growth = g;
        self
    }

    pub fn with_support(mut self, r: T) -> Self {
        self.support = Some(r);
        self
    }

    pub fn with_scale(mut self, l: T) -> Self {
        self.scale = l;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        (self.field)(x)
    }

    fn ray_breaks(&self, x: &[T], th: &[T], out: &mut Vec<T>) {
        out.clear();
        if let Some(b) = &self.breaks {
            b(x, th, out);
        }
    }

    /// psi(x) = (1 - |x|^2)_+.
    pub fn psi(dim: usize) -> Self {
        Self::new(dim, |x: &[T]| (T::one() - dot(x, x)).max(T::zero()))
            .with_support(T::one())
            .with_breaks(|x, th, out| sphere_hits(x, th, T::one(), out))
    }

    /// The half-line power (x_1)_+^p.
    pub fn half_line_power(dim: usize, p: T) -> Self {
        Self::new(dim, move |x: &[T]| x[0].max(T::zero()).powf(p))
            .with_growth(p)
            .with_breaks(|x, th, out| {
                if th[0] != T::zero() {
                    out.push(-x[0] / th[0]);
                }
            })
    }
}

/// Signed parameters where x + r theta meets the sphere of radius `rad`.
pub fn sphere_hits<T: Real>(x: &[T], th: &[T], rad: T, out: &mut Vec<T>) {
    let b = dot(x, th);
    let disc = b * b - dot(x, x) + rad * rad;
    if disc > T::zero() {
        let q = disc.sqrt();
        out.push(-b - q);
        out.push(-b + q);
    }
}

/// Quadrature settings for ray integrals.
#[derive(Clone, Copy, Debug)]
pub struct RayQuadrature {
    pub grading: Grading,
    pub tail_tol: f64,
}

impl Default for RayQuadrature {
    fn default() -> Self {
        RayQuadrature { grading: Grading { order: 8, levels: 30, smooth_panels: 1 }, tail_tol: 1e-14 }
    }
}

/// int_0^inf (2u(x) - u(x + r th) - u(x - r th)) r^{-1-2s} dr.
pub fn ray_integral<T: Real>(u: &ProfiledFunction<T>, x: &[T], th: &[T], s: T, q: &RayQuadrature, buf: &mut Vec<T>) -> T {
    let d = x.len();
    let u0 = u.eval(x);
    let p = T::one() + s + s;
    let mut yp = vec![T::zero(); d];
    let mut ym = vec![T::zero(); d];
    let mut diff = |r: T| -> T {
        for i in 0..d {
            yp[i] = x[i] + r * th[i];
            ym[i] = x[i] - r * th[i];
        }
        u0 + u0 - u.eval(&yp) - u.eval(&ym)
    };

    u.ray_breaks(x, th, buf);
    for b in buf.iter_mut() {
        *b = b.abs();
    }
    buf.retain(|b| *b > T::zero() && b.is_finite());
    buf.sort_by(|a, b| a.partial_cmp(b).unwrap());
    buf.dedup_by(|a, b| (*a - *b).abs() <= c::<T>(1e-13) * *b);

    let r_out = u.support.map(|rad| norm(x) + rad);
    let mut pts: Vec<T> = buf.clone();
    if let Some(ro) = r_out {
        pts.retain(|&b| b < ro);
    }
    let first = pts.first().copied().unwrap_or_else(|| r_out.unwrap_or(u.scale).min(u.scale));
    let rc = first.min(u.scale) * c(1.0 / 256.0);

    // Small r: fit D(r)/r^2 = c0 + c2 r^2 and integrate exactly.
    let q1 = diff(rc) / (rc * rc);
    let h = rc * c(0.5);
    let q2 = diff(h) / (h * h);
    let c2 = (q1 - q2) / (rc * rc * c(0.75));
    let c0 = q2 - c2 * h * h;
    let two_s = s + s;
    let mut acc = c0 * rc.powf(c::<T>(2.0) - two_s) / (c::<T>(2.0) - two_s)
        + c2 * rc.powf(c::<T>(4.0) - two_s) / (c::<T>(4.0) - two_s);

    let mut g = |r: T| diff(r) * r.powf(-p);
    let first_is_break = !pts.is_empty();
    let half = first * c(0.5);
    acc = acc + geometric(&mut g, rc, half, q.grading.order);
    acc = acc + graded(&mut g, half, first, false, first_is_break, q.grading);
    for w in pts.windows(2) {
        acc = acc + graded(&mut g, w[0], w[1], true, true, q.grading);
    }
    let last = pts.last().copied().unwrap_or(first);
    match r_out {
        Some(ro) => {
            if ro > last {
                acc = acc + graded(&mut g, last, ro, first_is_break, false, q.grading);
            }
            acc + (u0 + u0) * ro.max(last).powf(-two_s) / two_s
        }
        None => {
            let far = last * c(2.0);
            if first_is_break {
                acc = acc + graded(&mut g, last, far, true, false, q.grading);
            } else {
                acc = acc + geometric(&mut g, last, far, q.grading.order);
            }
            acc + tail(&mut g, far, c(q.tail_tol), q.grading.order)
        }
    }
}

fn check_growth<T: Real>(s: T, u: &ProfiledFunction<T>) -> Result<()> {
    if u.growth >= s + s {
        return Err(Error::InvalidParameter(format!("growth exponent {} is not below 2s = {}", u.growth, s + s)));
    }
    Ok(())
}

/// A u(x) for the operator described by `spec`.
pub fn apply<T: Real>(spec: &OperatorSpec<T>, u: &ProfiledFunction<T>, x: &[T]) -> Result<T> {
    apply_with(spec, u, x, &RayQuadrature::default())
}

pub fn apply_with<T: Real>(spec: &OperatorSpec<T>, u: &ProfiledFunction<T>, x: &[T], q: &RayQuadrature) -> Result<T> {
    if x.len() != spec.dim() || u.dim != spec.dim() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    check_growth(spec.s, u)?;
    let mut buf = Vec::new();
    let mut acc = T::zero();
    for (th, w) in spec.directions() {
        acc = acc + w * ray_integral(u, x, &th, spec.s, q, &mut buf);
    }
    Ok(acc * (T::one() - spec.s))
}

/// A u at many points, evaluated in parallel.
pub fn apply_many<T: Real>(spec: &OperatorSpec<T>, u: &ProfiledFunction<T>, xs: &[Vec<T>]) -> Result<Vec<T>> {
    check_growth(spec.s, u)?;
    xs.par_iter().map(|x| apply(spec, u, x)).collect()
}

/// One-dimensional fractional Laplacian (1 - s) pv int (u(x) - u(y)) |x - y|^{-1-2s} dy.
pub fn apply_1d<T: Real>(s: T, u: &ProfiledFunction<T>, x: T) -> Result<T> {
    let spec = line_spec(s)?;
    apply(&spec, u, &[x])
}

pub fn line_spec<T: Real>(s: T) -> Result<OperatorSpec<T>> {
    OperatorSpec::new(s, SphericalMeasure::uniform(1, T::one())?, true)
}

/// Principal value integral with an error estimate from a second, finer rule.
pub fn pv_quadrature<T: Real>(u: &ProfiledFunction<T>, x: T, s: T) -> Result<(T, T)> {
    check_growth(s, u)?;
    let coarse = RayQuadrature { grading: Grading { order: 6, levels: 24, smooth_panels: 1 }, tail_tol: 1e-12 };
    let fine = RayQuadrature { grading: Grading { order: 10, levels: 36, smooth_panels: 2 }, tail_tol: 1e-15 };
    let mut buf = Vec::new();
    let a = ray_integral(u, &[x], &[T::one()], s, &coarse, &mut buf);
    let b = ray_integral(u, &[x], &[T::one()], s, &fine, &mut buf);
    let k = T::one() - s;
    Ok((b * k, (b - a).abs() * k))
}

/// Tail(u; y) = int_{|h| > 1/2} |u(y + h)| nu_s(dh).
pub fn tail_term<T: Real>(spec: &OperatorSpec<T>, u: &ProfiledFunction<T>, y: &[T]) -> Result<T> {
    check_growth(spec.s, u)?;
    let d = y.len();
    let p = T::one() + spec.s + spec.s;
    let q = RayQuadrature::default();
    let mut buf = Vec::new();
    let mut acc = T::zero();
    for (th, w) in spec.directions() {
        let mut yp = vec![T::zero(); d];
        let mut ym = vec![T::zero(); d];
        let mut g = |r: T| {
            for i in 0..d {
                yp[i] = y[i] + r * th[i];
                ym[i] = y[i] - r * th[i];
            }
            (u.eval(&yp).abs() + u.eval(&ym).abs()) * r.powf(-p)
        };
        u.ray_breaks(y, &th, &mut buf);
        let mut pts: Vec<T> = buf.iter().map(|b| b.abs()).filter(|&b| b > c(0.5)).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut lo: T = c(0.5);
        for &b in &pts {
            acc = acc + w * graded(&mut g, lo, b, false, true, q.grading);
            lo = b;
        }
        let hi = lo * c(2.0);
        acc = acc + w * graded(&mut g, lo, hi, !pts.is_empty(), false, q.grading);
        acc = acc + w * tail(&mut g, hi, c(q.tail_tol), q.grading.order);
    }
    Ok(acc * (T::one() - spec.s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psi_anchor_in_one_dimension() {
        for s in [0.2, 0.5, 0.8] {
            let v = apply_1d(s, &ProfiledFunction::psi(1), 0.0).unwrap();
            assert_relative_eq!(v, 1.0 / s, max_relative = 1e-10);
        }
    }

    #[test]
    fn half_line_power_is_harmonic() {
        let s = 0.5f64;
        let u = ProfiledFunction::half_line_power(1, s);
        for t in [0.1, 1.0, 7.0] {
            let v = apply_1d(s, &u, t).unwrap();
            assert!(v.abs() < 1e-8 * f64::powf(t, -s), "t = {t}: {v}");
        }
    }

    #[test]
    fn growth_guard() {
        let u = ProfiledFunction::<f64>::new(1, |x| x[0].abs()).with_growth(1.0);
        assert!(apply_1d(0.4, &u, 0.0).is_err());
    }

    #[test]
    fn pv_estimate_is_small() {
        let (v, e) = pv_quadrature(&ProfiledFunction::<f64>::psi(1), 0.3, 0.7).unwrap();
        assert!(e < 1e-8 * v.abs());
    }
}
