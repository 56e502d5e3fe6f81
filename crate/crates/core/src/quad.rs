//! Quadrature and small scalar solvers shared by the numerical modules.

use std::sync::OnceLock;

use crate::{c, Real};

const MAX_ORDER: usize = 64;

static RULES: [OnceLock<(Vec<f64>, Vec<f64>)>; MAX_ORDER + 1] = [const { OnceLock::new() }; MAX_ORDER + 1];

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    assert!((1..=MAX_ORDER).contains(&n), "unsupported Gauss order {n}");
    RULES[n].get_or_init(|| legendre_rule(n))
}

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Fixed-order Gauss-Legendre on [a, b].
pub fn gl<T: Real, F: FnMut(T) -> T>(g: &mut F, a: T, b: T, n: usize) -> T {
    let (x, w) = gauss_legendre(n);
    let half = (b - a) * c(0.5);
    let mid = (a + b) * c(0.5);
    let mut acc = T::zero();
    for k in 0..n {
        acc = acc + c::<T>(w[k]) * g(mid + half * c(x[k]));
    }
    acc * half
}

/// Panel layout for [`graded`].
#[derive(Clone, Copy, Debug)]
pub struct Grading {
    pub order: usize,
    pub levels: usize,
    /// Uniform panels used on an end that is not flagged singular.
    pub smooth_panels: usize,
}

impl Default for Grading {
    fn default() -> Self {
        Grading { order: 8, levels: 34, smooth_panels: 2 }
    }
}

/// Integrates over [a, b] with panels halving geometrically toward each end
/// flagged as singular. Endpoint singularities must be integrable.
pub fn graded<T: Real, F: FnMut(T) -> T>(g: &mut F, a: T, b: T, sing_a: bool, sing_b: bool, grading: Grading) -> T {
    if !(b > a) {
        return T::zero();
    }
    match (sing_a, sing_b) {
        (false, false) => {
            let n = grading.smooth_panels.max(1);
            let h = (b - a) / c(n as f64);
            (0..n).map(|k| gl(g, a + h * c(k as f64), a + h * c(k as f64 + 1.0), grading.order)).sum()
        }
        (true, false) => one_sided(g, a, b, grading),
        (false, true) => {
            let mut flipped = |x: T| g(a + b - x);
            one_sided(&mut flipped, a, b, grading)
        }
        (true, true) => {
            let m = (a + b) * c(0.5);
            let left = one_sided(g, a, m, grading);
            let mut flipped = |x: T| g(m + b - x);
            left + one_sided(&mut flipped, m, b, grading)
        }
    }
}

fn one_sided<T: Real, F: FnMut(T) -> T>(g: &mut F, a: T, b: T, grading: Grading) -> T {
    let mut acc = T::zero();
    let mut hi = b;
    let len = b - a;
    let mut width = len * c(0.5);
    let (mut prev, mut last) = (T::zero(), T::zero());
    for _ in 0..grading.levels {
        let lo = a + width;
        prev = last;
        last = gl(g, lo, hi, grading.order);
        acc = acc + last;
        hi = lo;
        width = width * c(0.5);
    }
    // Geometric extrapolation of the remaining panels (exact for power laws).
    let q = last / prev;
    if prev != T::zero() && q > T::zero() && q < c(0.95) {
        acc + last * q / (T::one() - q)
    } else {
        acc + gl(g, a, hi, grading.order)
    }
}

/// Integrates over [a, b] with 0 < a < b using panels of constant ratio 2.
pub fn geometric<T: Real, F: FnMut(T) -> T>(g: &mut F, a: T, b: T, order: usize) -> T {
    if !(b > a) {
        return T::zero();
    }
    let mut acc = T::zero();
    let mut lo = a;
    while lo < b {
        let hi = (lo * c(2.0)).min(b);
        acc = acc + gl(g, lo, hi, order);
        lo = hi;
    }
    acc
}

/// Integrates over [a, inf) using r = a e^v on unit panels in v, stopping once
/// three consecutive panels are negligible relative to the running sum.
pub fn tail<T: Real, F: FnMut(T) -> T>(g: &mut F, a: T, rel_tol: T, order: usize) -> T {
    let mut acc = T::zero();
    let mut quiet = 0;
    let mut v = T::zero();
    let step = T::one();
    for _ in 0..4000 {
        let mut mapped = |u: T| {
            let r = a * u.exp();
            g(r) * r
        };
        let panel = gl(&mut mapped, v, v + step, order);
        acc = acc + panel;
        v = v + step;
        if panel.abs() <= rel_tol * acc.abs() {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    acc
}

/// Golden-section minimisation of a unimodal function on [a, b].
pub fn golden_min<T: Real, F: FnMut(T) -> T>(g: &mut F, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r: T = c(0.618_033_988_749_894_8);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    for _ in 0..200 {
        if (b - a).abs() <= tol * (T::one() + x1.abs()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = g(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bisection for an increasing function `g` with g(lo) <= y <= g(hi).
pub fn bisect_increasing<T: Real, F: FnMut(T) -> T>(g: &mut F, y: T, mut lo: T, mut hi: T) -> T {
    for _ in 0..400 {
        let mid = if lo > T::zero() && hi / lo > c(4.0) { (lo * hi).sqrt() } else { (lo + hi) * c(0.5) };
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * c(0.5)
}

/// Log-spaced points from `a` to `b` inclusive.
pub fn logspace<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * c(i as f64 / (n - 1) as f64)).exp())
        .collect()
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> (T, T) {
    let n: T = c(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
