//! Moduli of continuity: closed forms, tabulated moduli, Dini integrals,
//! structural checks and the upgrade to a concave modulus with controlled
//! growth.

use std::sync::Arc;

use crate::quad::{bisect_increasing, gl, golden_min, logspace, tail};
use crate::{c, f, Error, Real, Result};

/// Points per decade of the standard log grid.
pub const PER_DECADE: usize = 64;
pub const GRID_MIN: f64 = 1e-10;
pub const GRID_MAX: f64 = 10.0;

/// Log-spaced grid with `per_decade` points per decade from `a` to `b`.
pub fn log_grid<T: Real>(a: f64, b: f64, per_decade: usize) -> Vec<T> {
    let n = ((b / a).log10() * per_decade as f64).round() as usize + 1;
    logspace(c(a), c(b), n)
}

/// Sampled function on an increasing grid with optional first and second
/// derivative data. Interpolation is quintic Hermite when both derivatives
/// are present and monotone cubic otherwise.
#[derive(Clone, Debug)]
pub struct Table<T> {
    pub t: Vec<T>,
    pub v: Vec<T>,
    pub d1: Vec<T>,
    pub d2: Option<Vec<T>>,
    log_step: Option<(T, T)>,
}

impl<T: Real> Table<T> {
    pub fn new(t: Vec<T>, v: Vec<T>, d1: Option<Vec<T>>, d2: Option<Vec<T>>) -> Result<Self> {
        let n = t.len();
        if n < 4 || v.len() != n {
            return Err(Error::InvalidParameter("table needs at least 4 matching samples".into()));
        }
        if t[0] <= T::zero() || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("table abscissae must be positive and increasing".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("table values must be finite".into()));
        }
        let d1 = match d1 {
            Some(d) => d,
            None => fritsch_carlson(&t, &v),
        };
        let dl = (t[1] / t[0]).ln();
        let uniform = t.windows(2).all(|w| ((w[1] / w[0]).ln() - dl).abs() <= c::<T>(1e-9) * dl);
        let log_step = if uniform { Some((t[0].ln(), T::one() / dl)) } else { None };
        Ok(Table { t, v, d1, d2, log_step })
    }

    fn cell(&self, x: T) -> usize {
        let n = self.t.len();
        let mut i = match self.log_step {
            Some((l0, inv)) => {
                let k = ((x.ln() - l0) * inv).floor();
                if k < T::zero() {
                    0
                } else {
                    k.to_usize().unwrap_or(n - 2).min(n - 2)
                }
            }
            None => self.t.partition_point(|&s| s <= x).saturating_sub(1).min(n - 2),
        };
        while i > 0 && self.t[i] > x {
            i -= 1;
        }
        while i + 2 < n && self.t[i + 1] <= x {
            i += 1;
        }
        i
    }

    /// Value and first two derivatives inside the tabulated range.
    pub fn eval3(&self, x: T) -> (T, T, T) {
        let i = self.cell(x);
        let (x0, x1) = (self.t[i], self.t[i + 1]);
        let h = x1 - x0;
        let u = (x - x0) / h;
        let (y0, y1) = (self.v[i], self.v[i + 1]);
        let (p0, p1) = (self.d1[i] * h, self.d1[i + 1] * h);
        match &self.d2 {
            Some(d2) => {
                let (q0, q1) = (d2[i] * h * h, d2[i + 1] * h * h);
                let half: T = c(0.5);
                let a = y1 - y0 - p0 - half * q0;
                let b = p1 - p0 - q0;
                let cc = q1 - q0;
                let c3 = c::<T>(10.0) * a - c::<T>(4.0) * b + half * cc;
                let c4 = c::<T>(-15.0) * a + c::<T>(7.0) * b - cc;
                let c5 = c::<T>(6.0) * a - c::<T>(3.0) * b + half * cc;
                let c2 = half * q0;
                let v = y0 + u * (p0 + u * (c2 + u * (c3 + u * (c4 + u * c5))));
                let d = p0
                    + u * (c::<T>(2.0) * c2 + u * (c::<T>(3.0) * c3 + u * (c::<T>(4.0) * c4 + u * c::<T>(5.0) * c5)));
                let dd = c::<T>(2.0) * c2 + u * (c::<T>(6.0) * c3 + u * (c::<T>(12.0) * c4 + u * c::<T>(20.0) * c5));
                (v, d / h, dd / (h * h))
            }
            None => {
                let two: T = c(2.0);
                let three: T = c(3.0);
                let c2 = three * (y1 - y0) - two * p0 - p1;
                let c3 = two * (y0 - y1) + p0 + p1;
                let v = y0 + u * (p0 + u * (c2 + u * c3));
                let d = p0 + u * (two * c2 + three * u * c3);
                let dd = two * c2 + c::<T>(6.0) * u * c3;
                (v, d / h, dd / (h * h))
            }
        }
    }

    pub fn first(&self) -> T {
        self.t[0]
    }

    pub fn last(&self) -> T {
        *self.t.last().unwrap()
    }
}

fn fritsch_carlson<T: Real>(t: &[T], v: &[T]) -> Vec<T> {
    let n = t.len();
    let delta: Vec<T> = (0..n - 1).map(|i| (v[i + 1] - v[i]) / (t[i + 1] - t[i])).collect();
    let mut m = vec![T::zero(); n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= T::zero() {
            m[i] = T::zero();
        } else {
            let h0 = t[i] - t[i - 1];
            let h1 = t[i + 1] - t[i];
            let w1 = c::<T>(2.0) * h1 + h0;
            let w2 = h1 + c::<T>(2.0) * h0;
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m
}

/// Provenance of a modulus produced by [`Modulus::upgrade`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate<T> {
    pub iota: T,
    pub t0: T,
}

#[derive(Clone, Debug)]
pub enum ModulusKind<T> {
    /// t^alpha.
    Power { alpha: T },
    /// (1 + ln(1/t))^-p for t < 1, and 1 beyond.
    LogPower { p: T },
    /// min(t, cap).
    Linear { cap: T },
    Table(Table<T>),
}

#[derive(Clone, Debug)]
pub struct Modulus<T> {
    pub kind: ModulusKind<T>,
    pub certificate: Option<Certificate<T>>,
    /// Behaviour below a tabulated range, when known.
    pub below: Option<Arc<Below<T>>>,
}

/// scale * source(t) + t^power, used below the first table node of an
/// upgraded modulus.
#[derive(Clone, Debug)]
pub struct Below<T> {
    pub source: Modulus<T>,
    pub scale: T,
    pub power: T,
}

impl<T: Real> Below<T> {
    fn eval3(&self, t: T) -> (T, T, T) {
        let (a, b, cc) = self.source.eval3(t);
        let e = self.power;
        let pw = t.powf(e);
        (self.scale * a + pw, self.scale * b + e * pw / t, self.scale * cc + e * (e - T::one()) * pw / (t * t))
    }
}

/// Outcome of a Dini-type integral over (0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiniResult<T> {
    pub value: T,
    /// Estimated contribution of (0, eps).
    pub tail: T,
    pub finite: bool,
}

/// Worst margins of the structural checks; each is nonnegative when the
/// property holds.
#[derive(Clone, Debug)]
pub struct PropertyReport<T> {
    pub monotone: (T, T),
    pub concave: (T, T),
    pub growth: (T, T),
    pub second_order: (T, T),
}

impl<T: Real> PropertyReport<T> {
    pub fn passes(&self, tol: T) -> bool {
        [self.monotone, self.concave, self.growth, self.second_order].iter().all(|m| m.0 >= -tol)
    }
}

impl<T: Real> Modulus<T> {
    pub fn power(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::InvalidParameter(format!("power exponent {alpha} not in (0, 1]")));
        }
        Ok(Modulus { kind: ModulusKind::Power { alpha }, certificate: None, below: None })
    }

    pub fn log_power(p: T) -> Result<Self> {
        if !(p > T::zero()) {
            return Err(Error::InvalidParameter(format!("log exponent {p} must be positive")));
        }
        Ok(Modulus { kind: ModulusKind::LogPower { p }, certificate: None, below: None })
    }

    pub fn linear(cap: T) -> Result<Self> {
        if !(cap > T::zero()) {
            return Err(Error::InvalidParameter("cap must be positive".into()));
        }
        Ok(Modulus { kind: ModulusKind::Linear { cap }, certificate: None, below: None })
    }

    pub fn table(t: Vec<T>, w: Vec<T>) -> Result<Self> {
        if w.iter().any(|&x| x < T::zero()) {
            return Err(Error::InvalidParameter("modulus samples must be nonnegative".into()));
        }
        Ok(Modulus { kind: ModulusKind::Table(Table::new(t, w, None, None)?), certificate: None, below: None })
    }

    pub fn from_table(table: Table<T>) -> Self {
        Modulus { kind: ModulusKind::Table(table), certificate: None, below: None }
    }

    pub fn has_derivatives(&self) -> bool {
        match &self.kind {
            ModulusKind::Table(tb) => tb.d2.is_some(),
            _ => true,
        }
    }

    pub fn eval(&self, t: T) -> T {
        self.eval3(t).0
    }

    /// Value, first and second derivative at t > 0.
    pub fn eval3(&self, t: T) -> (T, T, T) {
        if !(t > T::zero()) {
            return (T::zero(), T::zero(), T::zero());
        }
        match &self.kind {
            ModulusKind::Power { alpha } => {
                let a = *alpha;
                let v = t.powf(a);
                (v, a * v / t, a * (a - T::one()) * v / (t * t))
            }
            ModulusKind::LogPower { p } => {
                if t >= T::one() {
                    return (T::one(), T::zero(), T::zero());
                }
                let p = *p;
                let l = T::one() - t.ln();
                let v = l.powf(-p);
                let d = p * v / (l * t);
                let dd = d / t * ((p + T::one()) / l - T::one());
                (v, d, dd)
            }
            ModulusKind::Linear { cap } => {
                if t < *cap {
                    (t, T::one(), T::zero())
                } else {
                    (*cap, T::zero(), T::zero())
                }
            }
            ModulusKind::Table(tb) => {
                if t < tb.first() && self.below.is_some() {
                    self.below.as_ref().unwrap().eval3(t)
                } else if t < tb.first() {
                    let (v0, d0, _) = tb.eval3(tb.first());
                    let p = (tb.first() * d0 / v0).max(c(1e-6)).min(T::one());
                    let v = v0 * (t / tb.first()).powf(p);
                    (v, p * v / t, p * (p - T::one()) * v / (t * t))
                } else if t > tb.last() {
                    let (v1, d1, _) = tb.eval3(tb.last());
                    let d1 = d1.max(T::zero());
                    (v1 + d1 * (t - tb.last()), d1, T::zero())
                } else {
                    tb.eval3(t)
                }
            }
        }
    }

    /// Grid on which checks and tabulation run.
    pub fn sample_grid(&self) -> Vec<T> {
        match &self.kind {
            ModulusKind::Table(tb) => tb.t.clone(),
            _ => log_grid(GRID_MIN, GRID_MAX, PER_DECADE),
        }
    }

    /// Integral of omega(t)/t over (0, 1].
    pub fn dini_integral(&self, eps: T) -> Result<DiniResult<T>> {
        self.dini_like(eps, None)
    }

    /// Integral of (omega/t)(omega^{2s-1} - omega(1)^{2s-1})/(1-2s) over (0, 1],
    /// with the logarithmic form at s = 1/2.
    pub fn dini2s_integral(&self, s: T, eps: T) -> Result<DiniResult<T>> {
        if !(s > T::zero() && s < T::one()) {
            return Err(Error::InvalidParameter(format!("s = {s} not in (0, 1)")));
        }
        self.dini_like(eps, Some(s))
    }

    fn dini_integrand(&self, t: T, s: Option<T>, w1: T) -> T {
        let w = self.eval(t);
        if w <= T::zero() {
            return T::zero();
        }
        match s {
            None => w / t,
            Some(s) => {
                let k = T::one() - s * c(2.0);
                if k.abs() < c(1e-8) {
                    w / t * (w1 / w).ln()
                } else {
                    w / t * (w.powf(-k) - w1.powf(-k)) / k
                }
            }
        }
    }

    fn dini_like(&self, eps: T, s: Option<T>) -> Result<DiniResult<T>> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(Error::InvalidParameter(format!("eps = {eps} not in (0, 1)")));
        }
        let w1 = self.eval(T::one());
        let ln2 = T::LN_2();
        let umax = -eps.ln();
        // Dyadic shells in u = ln(1/t).
        let mut shells = Vec::new();
        let mut u0 = T::zero();
        while u0 < umax {
            let u1 = (u0 + ln2).min(umax);
            let mut g = |u: T| {
                let t = (-u).exp();
                self.dini_integrand(t, s, w1) * t
            };
            shells.push((gl(&mut g, u0, u1, 12), u1 - u0));
            u0 = u1;
        }
        let value: T = shells.iter().map(|x| x.0).sum();
        let tail = match (self.closed_tail(eps, s, w1), &self.below, &self.kind) {
            (Some(t), _, _) => t,
            (None, Some(b), ModulusKind::Table(tb)) if eps <= tb.first() * c(1.0 + 1e-12) => self.below_tail(b, eps, s, w1)?,
            _ => self.model_tail(umax, s, w1, &shells),
        };
        let finite = tail.is_finite();
        Ok(DiniResult { value: value + if finite { tail } else { T::zero() }, tail, finite })
    }

    fn closed_tail(&self, eps: T, s: Option<T>, w1: T) -> Option<T> {
        let one = T::one();
        let two: T = c(2.0);
        match (&self.kind, s) {
            (ModulusKind::Power { alpha }, None) => Some(eps.powf(*alpha) / *alpha),
            (ModulusKind::Power { alpha }, Some(s)) => {
                let a = *alpha;
                let k = one - two * s;
                if k.abs() < c(1e-8) {
                    Some(eps.powf(a) * (-eps.ln()) + eps.powf(a) / a)
                } else {
                    Some((eps.powf(two * s * a) / (two * s * a) - eps.powf(a) / a) / k)
                }
            }
            (ModulusKind::LogPower { p }, None) => {
                let l = one - eps.ln();
                Some(if *p > one { l.powf(one - *p) / (*p - one) } else { T::infinity() })
            }
            (ModulusKind::LogPower { p }, Some(s)) => {
                let p = *p;
                let l = one - eps.ln();
                let k = one - two * s;
                if k.abs() < c(1e-8) {
                    if p > one {
                        let q = p - one;
                        Some(p * (l.powf(-q) * l.ln() / q + l.powf(-q) / (q * q)))
                    } else {
                        Some(T::infinity())
                    }
                } else {
                    let e = two * s * p;
                    if e > one && p > one {
                        Some((l.powf(one - e) / (e - one) - l.powf(one - p) / (p - one)) / k)
                    } else {
                        Some(T::infinity())
                    }
                }
            }
            (ModulusKind::Linear { cap }, None) if eps <= *cap => Some(eps),
            (ModulusKind::Linear { cap }, Some(s)) if eps <= *cap => {
                let k = one - two * s;
                if k.abs() < c(1e-8) {
                    Some(eps * ((w1 / eps).ln() + one))
                } else {
                    Some((eps.powf(two * s) / (two * s) - eps * w1.powf(-k)) / k)
                }
            }
            _ => None,
        }
    }

    /// Tail below eps through the known extension: closed form for the Dini
    /// integral, the source verdict plus quadrature for the 2s variant.
    fn below_tail(&self, b: &Below<T>, eps: T, s: Option<T>, w1: T) -> Result<T> {
        match s {
            None => {
                let src = b.source.dini_integral(eps)?.tail;
                Ok(b.scale * src + eps.powf(b.power) / b.power)
            }
            Some(sv) => {
                if !b.source.dini2s_integral(sv, eps)?.finite {
                    return Ok(T::infinity());
                }
                let mut g = |u: T| {
                    let t = (-u).exp();
                    self.dini_integrand(t, s, w1) * t
                };
                Ok(tail(&mut g, -eps.ln(), c(1e-12), 10))
            }
        }
    }

    /// Tail below eps from a local fit g(u) ~ A (b + u)^-p of the integrand in
    /// u = ln(1/t); shells decaying by a ratio above 0.95 three times in a row
    /// are declared divergent unless the fitted exponent is clearly above 1.
    fn model_tail(&self, umax: T, s: Option<T>, w1: T, shells: &[(T, T)]) -> T {
        let g = |u: T| {
            let t = (-u).exp();
            self.dini_integrand(t, s, w1) * t
        };
        let h = T::LN_2();
        let (l0, l1, l2) = (g(umax - h - h).ln(), g(umax - h).ln(), g(umax).ln());
        if !(l0.is_finite() && l1.is_finite() && l2.is_finite()) {
            return T::zero();
        }
        let d1 = (l2 - l0) / (h + h);
        let d2 = (l2 - l1 - l1 + l0) / (h * h);
        let gu = g(umax);
        let full: Vec<T> = shells.iter().filter(|x| (x.1 - h).abs() < c(1e-12)).map(|x| x.0).collect();
        let slow = full.len() >= 4
            && full[full.len() - 4..].windows(2).all(|w| w[0] > T::zero() && w[1] / w[0] >= c(0.95));
        if d2 <= c::<T>(1e-10) * d1 * d1 {
            let rate = -d1;
            if rate > T::zero() && !(slow && rate < c(0.05)) {
                return gu / rate;
            }
            return T::infinity();
        }
        let shift = -d1 / d2;
        let p = d1 * d1 / d2;
        if p > T::one() && !(slow && p <= c(1.1)) {
            gu * (shift + h) / (p - T::one())
        } else {
            T::infinity()
        }
    }

    /// Verdicts of the 2s-Dini integral at s0 and s.
    pub fn dini2s_monotone_in_s(&self, s0: T, s: T, eps: T) -> Result<(bool, bool)> {
        Ok((self.dini2s_integral(s0, eps)?.finite, self.dini2s_integral(s, eps)?.finite))
    }

    /// Checks monotonicity and concavity on the whole grid, and on (0, t0)
    /// that omega / t^iota is nonincreasing and t^2 w'' + w + 3 t w' >= 0.
    /// Margins are relative and come with the abscissa where they occur.
    pub fn check_properties(&self, iota: T, t0: T) -> Result<PropertyReport<T>> {
        let grid = self.sample_grid();
        if !self.has_derivatives() {
            let decades = (f(grid[grid.len() - 1]) / f(grid[0])).log10();
            if (grid.len() as f64) < 16.0 * decades {
                return Err(Error::InvalidParameter("grid too coarse for finite differences".into()));
            }
        }
        let vals: Vec<T> = grid.iter().map(|&t| self.eval(t)).collect();
        let worst = |acc: &mut (T, T), m: T, t: T| {
            if m < acc.0 {
                *acc = (m, t)
            }
        };
        let inf = T::infinity();
        let mut rep = PropertyReport { monotone: (inf, T::zero()), concave: (inf, T::zero()), growth: (inf, T::zero()), second_order: (inf, T::zero()) };
        let n = grid.len();
        for i in 0..n - 1 {
            let scale = vals[i + 1].abs().max(c(1e-300));
            worst(&mut rep.monotone, (vals[i + 1] - vals[i]) / scale, grid[i]);
            if grid[i + 1] <= t0 {
                let q0 = vals[i] / grid[i].powf(iota);
                let q1 = vals[i + 1] / grid[i + 1].powf(iota);
                worst(&mut rep.growth, (q0 - q1) / q0.abs().max(c(1e-300)), grid[i]);
            }
        }
        for i in 1..n - 1 {
            let (ta, tb, tc) = (grid[i - 1], grid[i], grid[i + 1]);
            let dd = ((vals[i + 1] - vals[i]) / (tc - tb) - (vals[i] - vals[i - 1]) / (tb - ta)) / ((tc - ta) * c(0.5));
            let scale = vals[i].abs().max(c(1e-300));
            worst(&mut rep.concave, -dd * tb * tb / scale, tb);
            if tb < t0 {
                let (w, d1, d2) = if self.has_derivatives() {
                    self.eval3(tb)
                } else {
                    let d1 = (vals[i + 1] - vals[i - 1]) / (tc - ta);
                    (vals[i], d1, dd)
                };
                worst(&mut rep.second_order, (tb * tb * d2 + w + c::<T>(3.0) * tb * d1) / scale, tb);
            }
        }
        Ok(rep)
    }

    /// Solves t * omega(t) = y.
    pub fn f_inverse(&self, y: T) -> Result<T> {
        if !(y > T::zero()) || !y.is_finite() {
            return Err(Error::OutOfRange(format!("f_inverse({y})")));
        }
        let mut g = |t: T| t * self.eval(t);
        let mut lo = y;
        let mut n = 0;
        while g(lo) > y {
            lo = lo * c(1e-3);
            n += 1;
            if n > 200 || lo <= T::min_positive_value() {
                return Err(Error::OutOfRange(format!("f_inverse({y}): no lower bracket")));
            }
        }
        let mut hi = y.max(T::one());
        n = 0;
        while g(hi) < y {
            hi = hi * c(10.0);
            n += 1;
            if n > 60 {
                return Err(Error::OutOfRange(format!("f_inverse({y}): no upper bracket")));
            }
        }
        Ok(bisect_increasing(&mut g, y, lo, hi))
    }

    /// Replaces the modulus by a larger one which is concave, has
    /// omega(t)/t^iota nonincreasing near 0, satisfies
    /// t^2 w'' + w + 3 t w' >= 0, and keeps the Dini behaviour.
    pub fn upgrade(&self, iota: T) -> Result<Modulus<T>> {
        if !(iota > T::zero() && iota < c(1.0 / 3.0)) {
            return Err(Error::InvalidParameter(format!("iota = {iota} not in (0, 1/3)")));
        }
        upgrade_pipeline(self, iota)
    }
}

const UPGRADE_T0: f64 = 0.25;

fn upgrade_pipeline<T: Real>(bar: &Modulus<T>, iota: T) -> Result<Modulus<T>> {
    let t0: T = c(UPGRADE_T0);
    let one = T::one();
    let two: T = c(2.0);
    let inner: Vec<T> = log_grid(1e-12, 100.0, PER_DECADE);
    for w in inner.windows(2) {
        let (a, b) = (bar.eval(w[0]), bar.eval(w[1]));
        if b < a - c::<T>(1e-14) * a.abs() {
            return Err(Error::NonMonotone(format!("decreases between t = {} and t = {}", w[0], w[1])));
        }
    }
    if !(bar.eval(t0) > T::zero()) {
        return Err(Error::InvalidParameter("modulus vanishes at the upgrade threshold".into()));
    }
    let m = inner
        .iter()
        .filter(|&&t| t >= t0 && t <= c(GRID_MAX))
        .map(|&t| bar.eval(t) / t)
        .fold(T::zero(), T::max)
        * c(1.1);

    // Lower envelope of the lines delta -> omega(delta) + M t0 t / delta.
    let env = |t: T| -> (T, T) {
        let lo = t.min(t0);
        let k = (f(t0 / lo).log10() * 16.0).ceil().max(1.0) as usize;
        let deltas = logspace(lo, t0, k + 1);
        let cost = |d: T| bar.eval(d) + m * t0 * t / d;
        let mut best = 0;
        let mut bv = T::infinity();
        for (i, &d) in deltas.iter().enumerate() {
            let v = cost(d);
            if v < bv {
                bv = v;
                best = i;
            }
        }
        let a = deltas[best.saturating_sub(1)];
        let b = deltas[(best + 1).min(deltas.len() - 1)];
        let mut dstar = deltas[best];
        if b > a {
            let (x, v) = golden_min(&mut |d: T| cost(d), a, b, c(1e-13));
            if v < bv {
                bv = v;
                dstar = x;
            }
        }
        (bv, m * t0 / dstar)
    };
    let w1: Vec<(T, T)> = inner.iter().map(|&t| env(t)).collect();
    let w1t = Table::new(inner.clone(), w1.iter().map(|x| x.0).collect(), Some(w1.iter().map(|x| x.1).collect()), None)?;
    let w1e = |t: T| if t <= w1t.last() { w1t.eval3(t).0 } else { env(t).0 };
    let w1d = |t: T| if t <= w1t.last() { w1t.eval3(t).1 } else { env(t).1 };

    // Average over [t, 2t].
    let stage: Vec<T> = inner.iter().copied().filter(|&t| t <= c(50.0)).collect();
    let mut v2 = Vec::with_capacity(stage.len());
    let mut d2v = Vec::with_capacity(stage.len());
    let mut dd2 = Vec::with_capacity(stage.len());
    for &t in &stage {
        let v = gl(&mut |u: T| w1e(t * u), one, two, 16);
        let d = (two * w1e(two * t) - w1e(t) - v) / t;
        let dd = (c::<T>(4.0) * w1d(two * t) - w1d(t) - two * d) / t;
        v2.push(v);
        d2v.push(d);
        dd2.push(dd);
    }
    let w2t = Table::new(stage.clone(), v2.clone(), Some(d2v.clone()), Some(dd2))?;
    let w2_at_1 = w2t.eval3(one);

    // Tail correction j(t) = (1 - iota) t^iota int_t^inf min(w2(r), w2(1)) r^{-1-iota} dr.
    let n = stage.len();
    let mut cum = vec![T::zero(); n];
    let below: Vec<usize> = (0..n).filter(|&i| stage[i] < one).collect();
    if let Some(&last) = below.last() {
        let mut integrand = |r: T| w2t.eval3(r).0 * r.powf(-one - iota);
        cum[last] = gl(&mut integrand, stage[last], one, 10);
        for i in (0..last).rev() {
            cum[i] = cum[i + 1] + gl(&mut integrand, stage[i], stage[i + 1], 10);
        }
    }
    let jconst = (one - iota) * w2_at_1.0 / iota;
    let mut v3 = Vec::with_capacity(n);
    let mut d3 = Vec::with_capacity(n);
    let mut dd3 = Vec::with_capacity(n);
    for i in 0..n {
        let t = stage[i];
        let (j, jd, jdd) = if t < one {
            let j = (one - iota) * t.powf(iota) * (cum[i] + w2_at_1.0 / iota);
            let jd = (iota * j - (one - iota) * v2[i]) / t;
            let jdd = ((iota - one) * jd - (one - iota) * d2v[i]) / t;
            (j, jd, jdd)
        } else {
            (jconst, T::zero(), T::zero())
        };
        let (a, b, cc) = w2t.eval3(t);
        v3.push(a + j);
        d3.push(b + jd);
        dd3.push(cc + jdd);
    }
    let w3t = Table::new(stage.clone(), v3, Some(d3), Some(dd3))?;

    // Double average over [1/2, 1]^2 written against the density of the product.
    let cfac = one / (one - c::<T>(3.0) * iota);
    let quarter: T = c(0.25);
    let half: T = c(0.5);
    let kernel = |p: T| if p <= half { c::<T>(4.0) * (c::<T>(4.0) * p).ln() } else { -c::<T>(4.0) * p.ln() };
    let out: Vec<T> = log_grid(GRID_MIN, GRID_MAX, PER_DECADE);
    let mut v = Vec::with_capacity(out.len());
    let mut d = Vec::with_capacity(out.len());
    let mut dd = Vec::with_capacity(out.len());
    for &t in &out {
        let mut breaks = vec![quarter, half, one];
        let pk = one / t;
        if pk > quarter && pk < one {
            breaks.push(pk);
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (mut a0, mut a1, mut a2) = (T::zero(), T::zero(), T::zero());
        for w in breaks.windows(2) {
            let (x, wts) = crate::quad::gauss_legendre(16);
            let hl = (w[1] - w[0]) * half;
            let md = (w[1] + w[0]) * half;
            for k in 0..16 {
                let p = md + hl * c(x[k]);
                let wk = kernel(p) * hl * c(wts[k]);
                let (y0, y1, y2) = w3t.eval3(t * p);
                a0 = a0 + wk * y0;
                a1 = a1 + wk * p * y1;
                a2 = a2 + wk * p * p * y2;
            }
        }
        let e = iota * half;
        let pw = t.powf(e);
        v.push(cfac * a0 + pw);
        d.push(cfac * a1 + e * pw / t);
        dd.push(cfac * a2 + e * (e - one) * pw / (t * t));
    }
    let tmin: T = c(GRID_MIN);
    let base = bar.eval(tmin);
    let scale = if base > T::zero() { ((v[0] - tmin.powf(iota * half)) / base).max(T::zero()) } else { T::zero() };
    let table = Table::new(out, v, Some(d), Some(dd))?;
    let below = Below { source: bar.clone(), scale, power: iota * half };
    Ok(Modulus { kind: ModulusKind::Table(table), certificate: Some(Certificate { iota, t0 }), below: Some(Arc::new(below)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dini_closed_forms() {
        let r = Modulus::power(0.5).unwrap().dini_integral(1e-8).unwrap();
        assert!(r.finite);
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-10);
        let r = Modulus::log_power(2.0).unwrap().dini_integral(1e-10).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-10);
        assert!(!Modulus::log_power(1.0).unwrap().dini_integral(1e-10).unwrap().finite);
    }

    #[test]
    fn dini2s_examples() {
        let w = Modulus::power(0.5).unwrap();
        let r = w.dini2s_integral(0.3, 1e-8).unwrap();
        assert!(r.finite);
        // integral of (t^{0.3} - t^{0.5}) / (0.4 t)
        assert_relative_eq!(r.value, (1.0 / 0.3 - 1.0 / 0.5) / 0.4, max_relative = 1e-9);
        let half = w.dini2s_integral(0.5, 1e-8).unwrap();
        assert_relative_eq!(half.value, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn table_tail_model_tracks_log_power() {
        let t: Vec<f64> = log_grid(1e-12, 10.0, 64);
        let w: Vec<f64> = t.iter().map(|&x| Modulus::log_power(2.0).unwrap().eval(x)).collect();
        let m = Modulus::table(t, w).unwrap();
        let r = m.dini_integral(1e-10).unwrap();
        assert!(r.finite);
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-3);
        let t: Vec<f64> = log_grid(1e-12, 10.0, 64);
        let w: Vec<f64> = t.iter().map(|&x| Modulus::log_power(1.0).unwrap().eval(x)).collect();
        assert!(!Modulus::table(t, w).unwrap().dini_integral(1e-10).unwrap().finite);
    }

    #[test]
    fn second_order_margin_of_power() {
        let iota = 1.0 / 6.0;
        let e = iota / 2.0;
        let rep = Modulus::power(e).unwrap().check_properties(iota, 0.25).unwrap();
        assert_relative_eq!(rep.second_order.0, e * (e - 1.0) + 1.0 + 3.0 * e, max_relative = 1e-12);
        assert!(rep.passes(1e-8));
    }

    #[test]
    fn f_inverse_power() {
        let w = Modulus::power(0.3).unwrap();
        let t = w.f_inverse(1e-4).unwrap();
        assert_relative_eq!(t * w.eval(t), 1e-4, max_relative = 1e-12);
        assert!(w.f_inverse(0.0).is_err());
    }

    #[test]
    fn upgrade_rejects_decreasing_input() {
        let t: Vec<f64> = log_grid(1e-12, 100.0, 8);
        let w: Vec<f64> = t.iter().map(|&x| 1.0 / (1.0 + x)).collect();
        let m = Modulus::table(t, w).unwrap();
        assert!(matches!(m.upgrade(1.0 / 6.0), Err(Error::NonMonotone(_))));
    }
}
