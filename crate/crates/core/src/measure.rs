//! Finite spherical measures and the operator specification built on them.

use statrs::function::gamma::ln_gamma;

use crate::quad::golden_min;
use crate::{c, f, Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind<T> {
    /// Multiple of the normalised surface measure.
    Uniform { mass: T },
    /// Weighted point masses; `dirs[k]` has unit length.
    Atoms { dirs: Vec<Vec<T>>, weights: Vec<T> },
    /// Density against surface measure, given at quadrature nodes.
    Density { nodes: Vec<Vec<T>>, weights: Vec<T>, values: Vec<T> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphericalMeasure<T> {
    pub dim: usize,
    pub kind: MeasureKind<T>,
}

fn unit_check<T: Real>(v: &[T], dim: usize, what: &str) -> Result<()> {
    if v.len() != dim {
        return Err(Error::InvalidParameter(format!("{what} has length {} in dimension {dim}", v.len())));
    }
    let n = norm(v);
    if (n - T::one()).abs() > c::<T>(1e-12).max(T::epsilon() * c(8.0)) {
        return Err(Error::InvalidParameter(format!("{what} is not a unit vector (norm {n})")));
    }
    Ok(())
}

pub(crate) fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Surface area of the unit sphere in R^d.
pub fn sphere_area(dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / ln_gamma(h).exp()
}

impl<T: Real> SphericalMeasure<T> {
    pub fn uniform(dim: usize, mass: T) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidParameter(format!("uniform measure supported for d in 1..=3, got {dim}")));
        }
        if !(mass > T::zero()) {
            return Err(Error::InvalidParameter("uniform mass must be positive".into()));
        }
        Ok(SphericalMeasure { dim, kind: MeasureKind::Uniform { mass } })
    }

    pub fn atoms(dim: usize, dirs: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        if dirs.is_empty() || dirs.len() != weights.len() {
            return Err(Error::InvalidParameter("atoms need matching, non-empty directions and weights".into()));
        }
        for (k, d) in dirs.iter().enumerate() {
            unit_check(d, dim, &format!("atom {k}"))?;
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidParameter("atom weights must be positive".into()));
        }
        Ok(SphericalMeasure { dim, kind: MeasureKind::Atoms { dirs, weights } })
    }

    /// Atoms at plus and minus every coordinate axis, each with weight `w`.
    pub fn axes(dim: usize, w: T) -> Result<Self> {
        let mut dirs = Vec::new();
        for i in 0..dim {
            for sign in [T::one(), -T::one()] {
                let mut e = vec![T::zero(); dim];
                e[i] = sign;
                dirs.push(e);
            }
        }
        let n = dirs.len();
        Self::atoms(dim, dirs, vec![w; n])
    }

    pub fn density(dim: usize, nodes: Vec<Vec<T>>, weights: Vec<T>, values: Vec<T>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() || nodes.len() != values.len() {
            return Err(Error::InvalidParameter("density needs matching nodes, weights and values".into()));
        }
        for (k, d) in nodes.iter().enumerate() {
            unit_check(d, dim, &format!("density node {k}"))?;
        }
        if weights.iter().any(|&w| w < T::zero()) || values.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidParameter("density weights and values must be nonnegative".into()));
        }
        Ok(SphericalMeasure { dim, kind: MeasureKind::Density { nodes, weights, values } })
    }

    /// Density sampled on the equispaced trapezoid rule of the circle.
    pub fn circle_density(n: usize, g: impl Fn(T) -> T) -> Result<Self> {
        let two_pi = T::PI() * c(2.0);
        let h = two_pi / c(n as f64);
        let mut nodes = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            let phi = h * c(k as f64);
            nodes.push(vec![phi.cos(), phi.sin()]);
            values.push(g(phi));
        }
        Self::density(2, nodes, vec![h; n], values)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, MeasureKind::Atoms { .. })
    }

    pub fn total_mass(&self) -> T {
        match &self.kind {
            MeasureKind::Uniform { mass } => *mass,
            MeasureKind::Atoms { weights, .. } => weights.iter().copied().sum(),
            MeasureKind::Density { weights, values, .. } => weights.iter().zip(values).map(|(&w, &v)| w * v).sum(),
        }
    }

    /// Weighted directions for the operator. The operator integrates each
    /// direction over the whole line, so antipodal directions are merged and
    /// the uniform measure is discretised on a half sphere.
    pub fn directions(&self, resolution: usize) -> Vec<(Vec<T>, T)> {
        match &self.kind {
            MeasureKind::Uniform { mass } => uniform_rule(self.dim, *mass, resolution),
            MeasureKind::Atoms { dirs, weights } => dirs.iter().cloned().zip(weights.iter().copied()).collect(),
            MeasureKind::Density { nodes, weights, values } => nodes
                .iter()
                .cloned()
                .zip(weights.iter().zip(values).map(|(&w, &v)| w * v))
                .filter(|(_, w)| *w > T::zero())
                .collect(),
        }
    }

    fn sym_integral(&self, w: &[T], s: T) -> T {
        let p = s * c(2.0);
        self.directions(0).iter().map(|(th, wt)| *wt * dot(w, th).abs().powf(p)).sum()
    }

    /// inf over unit w of the integral of |w . theta|^{2s}.
    ///
    /// Candidates come from a prefix-stable low-discrepancy sequence, so the
    /// result is nonincreasing in `resolution`; each candidate is polished
    /// locally with a fixed initial step.
    pub fn nondegeneracy_constant(&self, s: T, resolution: usize) -> T {
        if let MeasureKind::Uniform { mass } = self.kind {
            let d = self.dim as f64;
            let sf = f(s);
            let ln = ln_gamma(d / 2.0) + ln_gamma(sf + 0.5) - 0.5 * std::f64::consts::PI.ln() - ln_gamma(sf + d / 2.0);
            return mass * c(ln.exp());
        }
        match self.dim {
            1 => self.sym_integral(&[T::one()], s),
            2 => {
                let mut eval = |phi: T| self.sym_integral(&[phi.cos(), phi.sin()], s);
                let mut cands: Vec<T> = (0..resolution.max(1))
                    .map(|k| c::<T>((k as f64 * 0.618_033_988_749_894_8).fract()) * T::PI())
                    .collect();
                for (th, _) in self.directions(0) {
                    cands.push(th[1].atan2(th[0]) + T::FRAC_PI_2());
                }
                let step: T = c(0.05);
                let mut best = T::infinity();
                for phi in cands {
                    let v0 = eval(phi);
                    let (_, v1) = golden_min(&mut eval, phi - step, phi + step, c(1e-12));
                    best = best.min(v0).min(v1);
                }
                best
            }
            d => {
                let mut best = T::infinity();
                for k in 0..resolution.max(1) {
                    let u = (k as f64 * 0.754_877_666_246_692_7).fract();
                    let v = (k as f64 * 0.569_840_290_998_053_3).fract();
                    let z = 1.0 - 2.0 * u;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let ph = 2.0 * std::f64::consts::PI * v;
                    let mut w = vec![T::zero(); d];
                    w[0] = c(r * ph.cos());
                    w[1] = c(r * ph.sin());
                    w[2] = c(z);
                    best = best.min(self.compass_polish(w, s));
                }
                best
            }
        }
    }

    fn compass_polish(&self, mut w: Vec<T>, s: T) -> T {
        let eval = |w: &[T]| {
            let n = norm(w);
            let u: Vec<T> = w.iter().map(|&x| x / n).collect();
            self.sym_integral(&u, s)
        };
        let mut fw = eval(&w);
        let mut step: T = c(0.05);
        while step > c(1e-10) {
            let mut improved = false;
            for i in 0..w.len() {
                for sign in [T::one(), -T::one()] {
                    let mut t = w.clone();
                    t[i] = t[i] + sign * step;
                    let ft = eval(&t);
                    if ft < fw {
                        w = t;
                        fw = ft;
                        improved = true;
                    }
                }
            }
            if !improved {
                step = step * c(0.5);
            }
        }
        fw
    }

    /// Matrix A with a_ij = (1/2) * integral of theta_i theta_j, the symbol of
    /// the local limit as s -> 1.
    pub fn limit_matrix(&self) -> Vec<Vec<T>> {
        let d = self.dim;
        let mut a = vec![vec![T::zero(); d]; d];
        if let MeasureKind::Uniform { mass } = self.kind {
            for (i, row) in a.iter_mut().enumerate() {
                row[i] = mass / c(2.0 * d as f64);
            }
            return a;
        }
        for (th, w) in self.directions(0) {
            for i in 0..d {
                for j in 0..d {
                    a[i][j] = a[i][j] + c::<T>(0.5) * w * th[i] * th[j];
                }
            }
        }
        a
    }

    /// Checks that the angular density, relative to the normalised surface
    /// measure, stays below `lambda`. Returns the verdict and the worst ratio.
    pub fn pub_bound_check(&self, lambda: T) -> (bool, T) {
        let area: T = c(sphere_area(self.dim));
        let ratio = match &self.kind {
            MeasureKind::Atoms { .. } => T::infinity(),
            MeasureKind::Uniform { mass } => *mass / area / (lambda * area),
            MeasureKind::Density { values, .. } => {
                let vmax = values.iter().copied().fold(T::zero(), T::max);
                vmax / (lambda * area)
            }
        };
        (ratio <= T::one() + c(1e-12), ratio)
    }
}

fn uniform_rule<T: Real>(dim: usize, mass: T, resolution: usize) -> Vec<(Vec<T>, T)> {
    match dim {
        1 => vec![(vec![T::one()], mass)],
        2 => {
            let n = if resolution == 0 { 64 } else { resolution };
            (0..n)
                .map(|k| {
                    let phi = T::PI() * c((k as f64 + 0.5) / n as f64);
                    (vec![phi.cos(), phi.sin()], mass / c(n as f64))
                })
                .collect()
        }
        _ => {
            let n = if resolution == 0 { 128 } else { resolution };
            // Fibonacci points on the upper hemisphere.
            (0..n)
                .map(|k| {
                    let z = (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let ph = k as f64 * 2.399_963_229_728_653;
                    (vec![c(r * ph.cos()), c(r * ph.sin()), c(z)], mass / c(n as f64))
                })
                .collect()
        }
    }
}

/// Stability index, spherical measure and structural flags of the operator.
#[derive(Clone, Debug)]
pub struct OperatorSpec<T> {
    pub s: T,
    pub measure: SphericalMeasure<T>,
    /// Whether the pointwise upper bound on the density is assumed.
    pub pub_flag: bool,
    /// Lower nondegeneracy constant.
    pub lambda: T,
    /// Angular resolution used when discretising a uniform measure.
    pub resolution: usize,
}

impl<T: Real> OperatorSpec<T> {
    pub fn new(s: T, measure: SphericalMeasure<T>, pub_flag: bool) -> Result<Self> {
        if !(s > T::zero() && s < T::one()) {
            return Err(Error::InvalidParameter(format!("s = {s} not in (0, 1)")));
        }
        if !(measure.total_mass() > T::zero()) {
            return Err(Error::Degenerate("measure has zero mass".into()));
        }
        if pub_flag && measure.is_atomic() {
            return Err(Error::InvalidParameter("pointwise upper bound cannot hold for an atomic measure".into()));
        }
        let lambda = measure.nondegeneracy_constant(s, 256);
        if !(lambda > c(1e-12)) {
            return Err(Error::Degenerate(format!("nondegeneracy constant {lambda}")));
        }
        Ok(OperatorSpec { s, measure, pub_flag, lambda, resolution: 0 })
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn dim(&self) -> usize {
        self.measure.dim
    }

    pub fn directions(&self) -> Vec<(Vec<T>, T)> {
        self.measure.directions(self.resolution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn masses() {
        assert_relative_eq!(SphericalMeasure::<f64>::axes(2, 0.5).unwrap().total_mass(), 2.0);
        let dens = SphericalMeasure::<f64>::circle_density(64, |_| 1.0).unwrap();
        assert_relative_eq!(dens.total_mass(), 2.0 * std::f64::consts::PI, max_relative = 1e-14);
        assert_relative_eq!(sphere_area(3), 4.0 * std::f64::consts::PI, max_relative = 1e-12);
    }

    #[test]
    fn nondegeneracy_examples() {
        let u = SphericalMeasure::<f64>::uniform(2, 1.0).unwrap();
        assert_relative_eq!(u.nondegeneracy_constant(0.5, 16), 2.0 / std::f64::consts::PI, max_relative = 1e-12);
        let ax = SphericalMeasure::<f64>::axes(2, 0.5).unwrap();
        assert_relative_eq!(ax.nondegeneracy_constant(0.5, 64), 1.0, max_relative = 1e-6);
    }

    #[test]
    fn limit_matrix_examples() {
        let ax = SphericalMeasure::<f64>::axes(2, 1.0).unwrap();
        let a = ax.limit_matrix();
        assert_eq!(a, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let u = SphericalMeasure::<f64>::uniform(2, 3.0).unwrap().limit_matrix();
        assert_relative_eq!(u[0][0] + u[1][1], 1.5);
    }

    #[test]
    fn pub_bound_examples() {
        let dens = SphericalMeasure::<f64>::circle_density(64, |p| 1.0 + p.cos().powi(2)).unwrap();
        let (ok, ratio) = dens.pub_bound_check(2.0 / (2.0 * std::f64::consts::PI));
        assert!(ok);
        assert_relative_eq!(ratio, 1.0, max_relative = 1e-12);
        assert!(!SphericalMeasure::<f64>::axes(2, 1.0).unwrap().pub_bound_check(10.0).0);
    }

    #[test]
    fn spec_rejects_bad_input() {
        let u = SphericalMeasure::<f64>::uniform(1, 1.0).unwrap();
        assert!(OperatorSpec::new(1.0, u.clone(), true).is_err());
        assert!(OperatorSpec::new(0.5, SphericalMeasure::axes(2, 1.0).unwrap(), true).is_err());
        let single = SphericalMeasure::atoms(2, vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        assert!(matches!(OperatorSpec::new(0.5, single, false), Err(Error::Degenerate(_))));
    }
}
