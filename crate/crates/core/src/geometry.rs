//! Domains, the regularised distance, barriers and the geometric estimates
//! built on them.

use std::sync::Arc;

use rayon::prelude::*;

use crate::measure::{dot, norm, OperatorSpec};
use crate::modulus::Modulus;
use crate::operator::{apply, sphere_hits, ProfiledFunction};
use crate::quad::{gauss_legendre, geometric, golden_min, graded, Grading};
use crate::zeta::{Variant, ZetaProfile};
use crate::{c, Error, Real, Result};

#[derive(Clone, Debug)]
pub enum Domain<T> {
    Interval { a: T, b: T },
    Ball { center: Vec<T>, r: T },
    /// {x_2 > -|x_1| omega(|x_1|)}; `window` bounds sampling and the diameter.
    DiniGraph { omega: Modulus<T>, window: T },
    /// The square (-h, h)^2 with the quadrant [0, h) x (-h, 0] removed.
    Corner { half: T },
}

impl<T: Real> Domain<T> {
    pub fn interval(a: T, b: T) -> Result<Self> {
        if !(b > a) {
            return Err(Error::InvalidParameter("interval needs a < b".into()));
        }
        Ok(Domain::Interval { a, b })
    }

    pub fn ball(center: Vec<T>, r: T) -> Result<Self> {
        if !(r > T::zero()) || center.is_empty() || center.len() > 3 {
            return Err(Error::InvalidParameter("ball needs r > 0 and dimension 1..=3".into()));
        }
        Ok(Domain::Ball { center, r })
    }

    pub fn dini_graph(omega: Modulus<T>, window: T) -> Result<Self> {
        if !(window > T::zero()) {
            return Err(Error::InvalidParameter("window must be positive".into()));
        }
        Ok(Domain::DiniGraph { omega, window })
    }

    pub fn corner(half: T) -> Result<Self> {
        if !(half > T::zero()) {
            return Err(Error::InvalidParameter("half width must be positive".into()));
        }
        Ok(Domain::Corner { half })
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Ball { center, .. } => center.len(),
            _ => 2,
        }
    }

    fn graph(omega: &Modulus<T>, x1: T) -> T {
        let a = x1.abs();
        -a * omega.eval(a)
    }

    fn corner_vertices(h: T) -> [[T; 2]; 6] {
        let z = T::zero();
        [[-h, -h], [z, -h], [z, z], [h, z], [h, h], [-h, h]]
    }

    pub fn contains(&self, x: &[T]) -> bool {
        match self {
            Domain::Interval { a, b } => x[0] > *a && x[0] < *b,
            Domain::Ball { center, r } => dist2(x, center) < *r * *r,
            Domain::DiniGraph { omega, .. } => x[1] > Self::graph(omega, x[0]),
            Domain::Corner { half } => {
                let h = *half;
                x[0] > -h && x[0] < h && x[1] > -h && x[1] < h && !(x[0] >= T::zero() && x[1] <= T::zero())
            }
        }
    }

    /// Distance to the boundary for points inside, zero outside.
    pub fn distance(&self, x: &[T]) -> T {
        if !self.contains(x) {
            return T::zero();
        }
        match self {
            Domain::Interval { a, b } => (x[0] - *a).min(*b - x[0]),
            Domain::Ball { center, r } => *r - dist2(x, center).sqrt(),
            Domain::DiniGraph { omega, .. } => {
                let gap = x[1] - Self::graph(omega, x[0]);
                let mut d2 = |u: T| {
                    let dx = u - x[0];
                    let dy = Self::graph(omega, u) - x[1];
                    dx * dx + dy * dy
                };
                let n = 64;
                let lo = x[0] - gap;
                let step = (gap + gap) / c(n as f64);
                let mut best = (x[0], gap * gap);
                let mut cands: Vec<T> = (0..=n).map(|k| lo + step * c(k as f64)).collect();
                if T::zero() > lo && T::zero() < x[0] + gap {
                    cands.push(T::zero());
                }
                for u in cands {
                    let v = d2(u);
                    if v < best.1 {
                        best = (u, v);
                    }
                }
                let (_, v) = golden_min(&mut d2, best.0 - step, best.0 + step, c(1e-14));
                best.1.min(v).sqrt()
            }
            Domain::Corner { half } => {
                let v = Self::corner_vertices(*half);
                (0..6).map(|i| seg_dist(x, &v[i], &v[(i + 1) % 6])).fold(T::infinity(), T::min)
            }
        }
    }

    pub fn diam(&self) -> T {
        match self {
            Domain::Interval { a, b } => *b - *a,
            Domain::Ball { r, .. } => *r + *r,
            Domain::DiniGraph { window, .. } => *window * c(2.0),
            Domain::Corner { half } => *half * c(2.0) * T::SQRT_2(),
        }
    }

    /// Radius of a centred ball containing the domain (windowed for graphs).
    pub fn outer_radius(&self) -> T {
        match self {
            Domain::Interval { a, b } => a.abs().max(b.abs()),
            Domain::Ball { center, r } => norm(center) + *r,
            Domain::DiniGraph { window, .. } => *window * c(2.0),
            Domain::Corner { half } => *half * T::SQRT_2(),
        }
    }

    pub fn bounding_box(&self) -> Vec<(T, T)> {
        match self {
            Domain::Interval { a, b } => vec![(*a, *b)],
            Domain::Ball { center, r } => center.iter().map(|&m| (m - *r, m + *r)).collect(),
            Domain::DiniGraph { window, .. } => vec![(-*window, *window), (-*window, *window)],
            Domain::Corner { half } => vec![(-*half, *half), (-*half, *half)],
        }
    }

    /// Modulus of the boundary normal.
    pub fn modulus(&self) -> Modulus<T> {
        match self {
            Domain::DiniGraph { omega, .. } => omega.clone(),
            _ => Modulus::linear(c(1e300)).unwrap(),
        }
    }

    /// Signed ray parameters where x + r theta crosses the boundary.
    pub fn ray_breaks(&self, x: &[T], th: &[T], out: &mut Vec<T>) {
        match self {
            Domain::Interval { a, b } => {
                if th[0] != T::zero() {
                    out.push((*a - x[0]) / th[0]);
                    out.push((*b - x[0]) / th[0]);
                }
            }
            Domain::Ball { center, r } => {
                let y: Vec<T> = x.iter().zip(center).map(|(&p, &q)| p - q).collect();
                sphere_hits(&y, th, *r, out);
            }
            Domain::DiniGraph { omega, window } => {
                let g = |r: T| x[1] + r * th[1] - Self::graph(omega, x[0] + r * th[0]);
                let span = *window * c(4.0) + norm(x);
                let n = 400;
                let mut prev = (-span, g(-span));
                for k in 1..=n {
                    let r = -span + (span + span) * c(k as f64 / n as f64);
                    let v = g(r);
                    if (v > T::zero()) != (prev.1 > T::zero()) {
                        let (mut lo, mut hi) = (prev.0, r);
                        let slo = prev.1 > T::zero();
                        for _ in 0..100 {
                            let m = (lo + hi) * c(0.5);
                            if (g(m) > T::zero()) == slo {
                                lo = m;
                            } else {
                                hi = m;
                            }
                        }
                        out.push((lo + hi) * c(0.5));
                    }
                    prev = (r, v);
                }
            }
            Domain::Corner { half } => {
                let v = Self::corner_vertices(*half);
                for i in 0..6 {
                    let (p, q) = (&v[i], &v[(i + 1) % 6]);
                    let e = [q[0] - p[0], q[1] - p[1]];
                    let den = th[0] * e[1] - th[1] * e[0];
                    if den.abs() > c(1e-300) {
                        let w = [p[0] - x[0], p[1] - x[1]];
                        let r = (w[0] * e[1] - w[1] * e[0]) / den;
                        let u = (w[0] * th[1] - w[1] * th[0]) / den;
                        if u >= T::zero() && u <= T::one() {
                            out.push(r);
                        }
                    }
                }
            }
        }
    }

    /// Points at the given depths along inward normals, spread over the boundary.
    pub fn collar_points(&self, depths: &[T]) -> Vec<Vec<T>> {
        let mut pts = Vec::with_capacity(depths.len());
        for (k, &d) in depths.iter().enumerate() {
            let frac = (k as f64 * 0.618_033_988_749_894_8).fract();
            let p = match self {
                Domain::Interval { a, b } => vec![if k % 2 == 0 { *a + d } else { *b - d }],
                Domain::Ball { center, r } => {
                    if center.len() == 1 {
                        vec![if k % 2 == 0 { center[0] - *r + d } else { center[0] + *r - d }]
                    } else {
                        let ph = T::PI() * c(2.0 * frac);
                        let mut x = center.clone();
                        x[0] = x[0] + (*r - d) * ph.cos();
                        x[1] = x[1] + (*r - d) * ph.sin();
                        x
                    }
                }
                Domain::DiniGraph { omega, window } => {
                    let x1 = *window * c(frac - 0.5);
                    vec![x1, Self::graph(omega, x1) + d]
                }
                Domain::Corner { half } => {
                    let h = *half;
                    vec![-h + d, h * c(2.0 * frac - 1.0)]
                }
            };
            pts.push(p);
        }
        pts
    }

    /// A domain containing this one and touching its boundary only at `z`.
    pub fn exterior_tangent(&self, z: &[T]) -> Result<Domain<T>> {
        match self {
            Domain::Interval { a, b } => {
                let len = *b - *a;
                if (z[0] - *b).abs() <= c::<T>(1e-12) * len {
                    Domain::interval(*a - len, *b)
                } else if (z[0] - *a).abs() <= c::<T>(1e-12) * len {
                    Domain::interval(*a, *b + len)
                } else {
                    Err(Error::InvalidParameter("z is not a boundary point".into()))
                }
            }
            Domain::Ball { center, r } => {
                let center2: Vec<T> = z.iter().zip(center).map(|(&p, &q)| p + (q - p) * c(2.0)).collect();
                Domain::ball(center2, *r + *r)
            }
            _ => Err(Error::InvalidParameter("exterior tangent domain only for intervals and balls".into())),
        }
    }
}

fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum()
}

fn seg_dist<T: Real>(x: &[T], p: &[T; 2], q: &[T; 2]) -> T {
    let e = [q[0] - p[0], q[1] - p[1]];
    let w = [x[0] - p[0], x[1] - p[1]];
    let t = ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).max(T::zero()).min(T::one());
    let dx = w[0] - t * e[0];
    let dy = w[1] - t * e[1];
    (dx * dx + dy * dy).sqrt()
}

/// Smooth distance obtained as the fixed point tau = (d * eta_{tau/2})(x) of a
/// mollification whose width follows the distance itself.
#[derive(Clone, Debug)]
pub struct RegularizedDistance<T> {
    pub domain: Arc<Domain<T>>,
    nodes: Vec<(Vec<T>, T)>,
    pub max_iter: usize,
    /// sup max(dd/d, d/dd) over samples.
    pub c1: T,
    /// sup |grad dd| over samples.
    pub c2: T,
    /// sup |D^2 dd| d / omega(d) over samples.
    pub c3: T,
}

fn kernel_nodes<T: Real>(dim: usize) -> Vec<(Vec<T>, T)> {
    let bump = |r2: f64| (1.0 - r2).max(0.0).powi(3);
    let mut out = Vec::new();
    match dim {
        1 => {
            let (x, w) = gauss_legendre(16);
            for k in 0..16 {
                out.push((vec![c(x[k])], w[k] * bump(x[k] * x[k])));
            }
        }
        _ => {
            let (x, w) = gauss_legendre(5);
            let na = 10;
            for i in 0..5 {
                let rho = 0.5 * (x[i] + 1.0);
                for j in 0..na {
                    let ph = 2.0 * std::f64::consts::PI * (j as f64 + 0.5 * (i % 2) as f64) / na as f64;
                    let wt = 0.5 * w[i] * rho * bump(rho * rho);
                    let mut y = vec![T::zero(); dim];
                    y[0] = c(rho * ph.cos());
                    y[1] = c(rho * ph.sin());
                    out.push((y, wt));
                }
            }
        }
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    out.into_iter().map(|(y, w)| (y, c(w / total))).collect()
}

impl<T: Real> RegularizedDistance<T> {
    /// Builds the regularised distance and measures its constants on
    /// `samples` quasi-random interior points. Fails when the comparability
    /// constant exceeds `c1_cap`.
    pub fn build(domain: Arc<Domain<T>>, samples: usize, c1_cap: T) -> Result<Self> {
        let dim = domain.dim();
        let mut rd = RegularizedDistance {
            domain: Arc::clone(&domain),
            nodes: kernel_nodes(dim),
            max_iter: 12,
            c1: T::one(),
            c2: T::zero(),
            c3: T::zero(),
        };
        let pts = interior_samples(&domain, samples);
        let omega = domain.modulus();
        let stats: Vec<(T, T, T)> = pts
            .par_iter()
            .map(|x| {
                let d = domain.distance(x);
                let v = rd.eval(x);
                let g = norm(&rd.gradient(x));
                let hs = rd.hessian_norm(x);
                let w = omega.eval(d).max(c(1e-300));
                ((v / d).max(d / v), g, hs * d / w)
            })
            .collect();
        for (a, b, h) in stats {
            rd.c1 = rd.c1.max(a);
            rd.c2 = rd.c2.max(b);
            rd.c3 = rd.c3.max(h);
        }
        if rd.c1 > c1_cap {
            return Err(Error::Construction(format!("comparability constant {} exceeds cap {}", rd.c1, c1_cap)));
        }
        Ok(rd)
    }

    pub fn eval(&self, x: &[T]) -> T {
        let d0 = self.domain.distance(x);
        if d0 <= T::zero() {
            return T::zero();
        }
        let dim = x.len();
        let mut tau = d0;
        let mut y = vec![T::zero(); dim];
        for _ in 0..self.max_iter {
            let h = tau * c(0.5);
            let mut acc = T::zero();
            for (z, w) in &self.nodes {
                for i in 0..dim {
                    y[i] = x[i] - h * z[i];
                }
                acc = acc + *w * self.domain.distance(&y);
            }
            let done = (acc - tau).abs() <= c::<T>(1e-14) * tau;
            tau = acc;
            if done {
                break;
            }
        }
        tau
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let h = self.domain.distance(x).max(c(1e-300)) * c(1e-4);
        let mut g = vec![T::zero(); x.len()];
        let mut y = x.to_vec();
        for i in 0..x.len() {
            y[i] = x[i] + h;
            let a = self.eval(&y);
            y[i] = x[i] - h;
            let b = self.eval(&y);
            y[i] = x[i];
            g[i] = (a - b) / (h + h);
        }
        g
    }

    /// Frobenius norm of a finite-difference Hessian.
    pub fn hessian_norm(&self, x: &[T]) -> T {
        let n = x.len();
        let h = self.domain.distance(x).max(c(1e-300)) * c(1e-2);
        let f0 = self.eval(x);
        let mut y = x.to_vec();
        let mut acc = T::zero();
        for i in 0..n {
            for j in i..n {
                let v = if i == j {
                    y[i] = x[i] + h;
                    let a = self.eval(&y);
                    y[i] = x[i] - h;
                    let b = self.eval(&y);
                    y[i] = x[i];
                    (a - f0 - f0 + b) / (h * h)
                } else {
                    let mut q = [T::zero(); 4];
                    for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate() {
                        y[i] = x[i] + h * c(*si);
                        y[j] = x[j] + h * c(*sj);
                        q[k] = self.eval(&y);
                    }
                    y[i] = x[i];
                    y[j] = x[j];
                    (q[0] - q[1] - q[2] + q[3]) / (h * h * c(4.0))
                };
                acc = acc + v * v * if i == j { T::one() } else { c(2.0) };
            }
        }
        acc.sqrt()
    }

    /// dd^p as a profiled function, vanishing outside the domain.
    pub fn power_profile(self: &Arc<Self>, p: T) -> ProfiledFunction<T> {
        let me = Arc::clone(self);
        let dom = Arc::clone(&self.domain);
        let scale = self.domain.diam();
        ProfiledFunction::new(self.domain.dim(), move |x: &[T]| me.eval(x).powf(p))
            .with_support(self.domain.outer_radius())
            .with_scale(scale)
            .with_breaks(move |x, th, out| dom.ray_breaks(x, th, out))
    }
}

/// Quasi-random interior points with positive distance.
pub fn interior_samples<T: Real>(domain: &Domain<T>, n: usize) -> Vec<Vec<T>> {
    let bb = domain.bounding_box();
    let alphas = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3, 0.618_033_988_749_894_8];
    let mut out = Vec::with_capacity(n);
    let mut k = 1usize;
    while out.len() < n && k < 100 * n + 100 {
        let x: Vec<T> = bb
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let a = if bb.len() == 1 { alphas[2] } else { alphas[i] };
                lo + (hi - lo) * c((k as f64 * a).fract())
            })
            .collect();
        k += 1;
        if domain.distance(&x) > T::zero() {
            out.push(x);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierKind {
    Plus,
    Minus,
}

/// b = dd^s (1 - c1 zeta(dd)) for the plus kind and dd^s (1 + c1 zeta(dd)) for
/// the minus kind.
#[derive(Clone, Debug)]
pub struct Barrier<T> {
    pub kind: BarrierKind,
    pub s: T,
    pub c1: T,
    pub eps0: T,
    pub rd: Arc<RegularizedDistance<T>>,
    pub zeta: Arc<ZetaProfile<T>>,
    /// (lower, upper) with lower dd^s <= b <= upper dd^s.
    pub comparability: (T, T),
}

impl<T: Real> Barrier<T> {
    pub fn eval(&self, x: &[T]) -> T {
        let d = self.rd.eval(x);
        if d <= T::zero() {
            return T::zero();
        }
        let z = self.zeta.eval(d);
        let f = match self.kind {
            BarrierKind::Plus => T::one() - self.c1 * z,
            BarrierKind::Minus => T::one() + self.c1 * z,
        };
        d.powf(self.s) * f
    }

    pub fn profiled(self: &Arc<Self>) -> ProfiledFunction<T> {
        let me = Arc::clone(self);
        let dom = Arc::clone(&self.rd.domain);
        ProfiledFunction::new(dom.dim(), move |x: &[T]| me.eval(x))
            .with_support(dom.outer_radius())
            .with_scale(dom.diam())
            .with_breaks(move |x, th, out| dom.ray_breaks(x, th, out))
    }

    /// Signed sign margin at x: A b - 1 for the plus kind, -1 - A b for minus.
    pub fn margin(self: &Arc<Self>, spec: &OperatorSpec<T>, x: &[T]) -> Result<(T, T)> {
        let v = apply(spec, &self.profiled(), x)?;
        let m = match self.kind {
            BarrierKind::Plus => v - T::one(),
            BarrierKind::Minus => -T::one() - v,
        };
        Ok((v, m))
    }
}

/// Depths used to probe or verify a collar of width eps.
pub fn collar_depths<T: Real>(eps: T, n: usize) -> Vec<T> {
    crate::quad::logspace(eps * c(1e-3), eps, n)
}

/// Builds a barrier and picks the widest collar, among eps_max 2^-k, on which
/// the sign condition holds with a safety margin at the probe points.
pub fn build_barrier<T: Real>(
    kind: BarrierKind,
    spec: &OperatorSpec<T>,
    rd: Arc<RegularizedDistance<T>>,
    zeta: Arc<ZetaProfile<T>>,
    eps_max: T,
    probes: usize,
) -> Result<Barrier<T>> {
    let dom = Arc::clone(&rd.domain);
    if dom.dim() != spec.dim() {
        return Err(Error::InvalidParameter("domain and operator dimensions differ".into()));
    }
    if (zeta.s - spec.s).abs() > c(1e-12) {
        return Err(Error::InvalidParameter("zeta built for a different s".into()));
    }
    if !spec.pub_flag && spec.s <= c(0.5) && zeta.variant == Variant::Pub {
        return Err(Error::InvalidParameter("without the upper bound and s <= 1/2 the corrected profile is required".into()));
    }
    let diam = dom.diam();
    let c1 = match kind {
        BarrierKind::Plus => T::one() / (c::<T>(2.0) * zeta.eval(diam)),
        BarrierKind::Minus => T::one(),
    };
    let lower_ratio = T::one() / rd.c1;
    let comparability = match kind {
        BarrierKind::Plus => (c::<T>(0.5) * lower_ratio.powf(spec.s), rd.c1.powf(spec.s)),
        BarrierKind::Minus => (lower_ratio.powf(spec.s), rd.c1.powf(spec.s) * (T::one() + zeta.eval(diam))),
    };
    let mut b = Arc::new(Barrier { kind, s: spec.s, c1, eps0: eps_max, rd, zeta, comparability });
    let safety: T = c(0.02);
    let mut eps = eps_max;
    for _ in 0..40 {
        Arc::get_mut(&mut b).unwrap().eps0 = eps;
        let pts = dom.collar_points(&collar_depths(eps, probes));
        let ok = pts
            .par_iter()
            .map(|x| b.margin(spec, x).map(|m| m.1 >= safety))
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .all(|v| v);
        if ok {
            return Ok(Arc::try_unwrap(b).unwrap_or_else(|a| (*a).clone()));
        }
        eps = eps * c(0.5);
    }
    Err(Error::Construction("sign check fails for every collar width tried".into()))
}

/// One row per verification point: (point, A b, bound, margin).
pub fn verify_barrier<T: Real>(b: &Arc<Barrier<T>>, spec: &OperatorSpec<T>, n: usize) -> Result<Vec<(Vec<T>, T, T, T)>> {
    let pts = b.rd.domain.collar_points(&collar_depths(b.eps0, n));
    let bound = match b.kind {
        BarrierKind::Plus => T::one(),
        BarrierKind::Minus => -T::one(),
    };
    pts.par_iter()
        .map(|x| {
            let (v, m) = b.margin(spec, x)?;
            Ok((x.clone(), v, bound, m))
        })
        .collect()
}

fn dini2s_rhs<T: Real>(w: T, d: T, s: T) -> T {
    let k = T::one() - s - s;
    let factor = if k.abs() < c(1e-8) { -w.ln() } else { (w.powf(-k) - T::one()) / k };
    w / d.powf(s) * factor
}

/// Both sides of the intermediate-scale estimate at x along theta:
/// lhs = int_{a d}^{rho1} |dd(x + r th)^s - (dd(x) + grad dd . r th)_+^s| r^{-1-2s} dr,
/// rhs = (w/d^s)(w^{2s-1} - 1)/(1 - 2s) with w = omega(f^{-1}(d)).
pub fn lemma53_integrals<T: Real>(
    rd: &RegularizedDistance<T>,
    omega: &Modulus<T>,
    x: &[T],
    th: &[T],
    s: T,
    a: T,
    rho1: T,
) -> Result<(T, T)> {
    let d = rd.domain.distance(x);
    if !(d > T::zero() && d < rho1 * c(0.5)) {
        return Err(Error::OutOfRange(format!("depth {d} not in (0, rho1/2)")));
    }
    let w = omega.eval(omega.f_inverse(d)?);
    let cap = (c::<T>(-2.0)).exp().min(s * c(0.5));
    if w > cap {
        return Err(Error::OutOfRange(format!("omega(f^-1(d)) = {w} exceeds {cap}")));
    }
    let dd = rd.eval(x);
    let grad = rd.gradient(x);
    let slope = dot(&grad, th);
    let dim = x.len();
    let p = T::one() + s + s;
    let mut y = vec![T::zero(); dim];
    let mut g = |r: T| {
        for i in 0..dim {
            y[i] = x[i] + r * th[i];
        }
        let lin = (dd + slope * r).max(T::zero());
        (rd.eval(&y).powf(s) - lin.powf(s)).abs() * r.powf(-p)
    };
    let lo = a * d;
    let mut breaks = Vec::new();
    rd.domain.ray_breaks(x, th, &mut breaks);
    if slope < T::zero() {
        breaks.push(-dd / slope);
    }
    let mut pts: Vec<T> = breaks.into_iter().filter(|&r| r > lo && r < rho1).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.insert(0, lo);
    pts.push(rho1);
    let grading = Grading { order: 8, levels: 30, smooth_panels: 1 };
    let mut lhs = T::zero();
    for (k, win) in pts.windows(2).enumerate() {
        let inner_a = k > 0;
        let inner_b = k + 2 < pts.len();
        let (l, r) = (win[0], win[1]);
        if !inner_a && !inner_b {
            lhs = lhs + geometric(&mut g, l, r, 8);
        } else if !inner_a {
            let m = (l * r).sqrt();
            lhs = lhs + geometric(&mut g, l, m, 8) + graded(&mut g, m, r, false, true, grading);
        } else {
            lhs = lhs + graded(&mut g, l, r, true, inner_b, grading);
        }
    }
    Ok((lhs, dini2s_rhs(w, d, s)))
}

/// Default inner radius factor a = (|dd|_{C^1}(1 + 2 C1) + 4)^{-1}, with the
/// gradient bound standing in for the C^1 norm.
pub fn default_a<T: Real>(rd: &RegularizedDistance<T>) -> T {
    T::one() / (rd.c2 * (T::one() + c::<T>(2.0) * rd.c1) + c(4.0))
}

/// Fits C in |A dd^s(x)| <= C (1 + omega(d)/d^s [+ 2s-Dini term]) over points.
/// Returns the fitted constant and per-point rows (point, |A dd^s|, bound factor).
pub fn verify_almost_harmonic<T: Real>(
    spec: &OperatorSpec<T>,
    rd: &Arc<RegularizedDistance<T>>,
    points: &[Vec<T>],
) -> Result<(T, Vec<(Vec<T>, T, T)>)> {
    let u = rd.power_profile(spec.s);
    let omega = rd.domain.modulus();
    let rows: Vec<(Vec<T>, T, T)> = points
        .par_iter()
        .map(|x| {
            let v = apply(spec, &u, x)?.abs();
            let d = rd.domain.distance(x);
            let mut factor = T::one() + omega.eval(d) / d.powf(spec.s);
            if !spec.pub_flag {
                if let Ok(r) = omega.f_inverse(d) {
                    let w = omega.eval(r);
                    if w < T::one() {
                        factor = factor + dini2s_rhs(w, d, spec.s).abs();
                    }
                }
            }
            Ok((x.clone(), v, factor))
        })
        .collect::<Result<_>>()?;
    let cfit = rows.iter().map(|r| r.1 / r.2).fold(T::zero(), T::max);
    Ok((cfit, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn distances() {
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert_relative_eq!(b.distance(&[0.3, 0.4]), 0.5, max_relative = 1e-14);
        assert_eq!(b.distance(&[2.0, 0.0]), 0.0);
        let l = Domain::corner(1.0).unwrap();
        assert_relative_eq!(l.distance(&[-0.1, -0.5]), 0.1, max_relative = 1e-14);
        assert!(!l.contains(&[0.5, -0.5]));
    }

    #[test]
    fn dini_graph_distance_matches_dense_sampling() {
        let w = Modulus::power(0.3).unwrap();
        let g = Domain::dini_graph(w.clone(), 1.0).unwrap();
        for x in [[0.0, 0.05], [0.2, 0.01], [-0.3, 0.2]] {
            let n = 400_000;
            let mut best = f64::INFINITY;
            for k in 0..=n {
                let u = -1.0 + 2.0 * k as f64 / n as f64;
                let y = -u.abs() * w.eval(u.abs());
                best = best.min(((u - x[0]).powi(2) + (y - x[1]).powi(2)).sqrt());
            }
            assert!((g.distance(&x) - best).abs() < 1e-8, "{x:?}: {} vs {best}", g.distance(&x));
        }
    }

    #[test]
    fn regularized_distance_on_ball() {
        let dom = Arc::new(Domain::ball(vec![0.0, 0.0], 1.0).unwrap());
        let rd = RegularizedDistance::build(dom, 200, 4.0).unwrap();
        assert!(rd.c1 <= 1.25, "C1 = {}", rd.c1);
    }

    #[test]
    fn exterior_tangent_contains() {
        let b = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let t = b.exterior_tangent(&[1.0, 0.0]).unwrap();
        assert!(t.contains(&[0.0, 0.99]) && t.contains(&[-0.99, 0.0]));
        assert_relative_eq!(t.distance(&[0.999, 0.0]), 0.001, max_relative = 1e-9);
    }
}
