//! Collocation solver for the Dirichlet problem A u = f in the domain, u = g
//! outside, on a uniform grid with a piecewise multilinear nodal basis.
//!
//! For |r| < h the second difference along each direction is replaced by its
//! Taylor term, which yields a local stencil with coefficients from the limit
//! matrix; for |r| >= h the interpolant is integrated exactly along each ray.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::geometry::{build_barrier, BarrierKind, Domain, RegularizedDistance};
use crate::measure::{norm, OperatorSpec};
use crate::operator::{apply, tail_term, ProfiledFunction};
use crate::quad::{gauss_legendre, linear_fit};
use crate::zeta::ZetaProfile;
use crate::{c, Error, Real, Result};

/// Uniform tensor grid: node k along axis i sits at lo[i] + k h.
#[derive(Clone, Debug)]
pub struct Grid<T> {
    pub lo: Vec<T>,
    pub h: T,
    pub n: Vec<usize>,
}

impl<T: Real> Grid<T> {
    /// Grid covering the bounding box of the domain, padded by `pad` cells.
    pub fn for_domain(domain: &Domain<T>, h: T, pad: usize) -> Result<Self> {
        if !(h > T::zero()) {
            return Err(Error::InvalidParameter("h must be positive".into()));
        }
        let bb = domain.bounding_box();
        let mut lo = Vec::new();
        let mut n = Vec::new();
        for (a, b) in bb {
            let cells = ((b - a) / h).round().to_usize().unwrap_or(0).max(2);
            lo.push(a - h * c(pad as f64));
            n.push(cells + 1 + 2 * pad);
        }
        Ok(Grid { lo, h, n })
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_to_multi(&self, mut k: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for i in 0..self.dim() {
            m[i] = k % self.n[i];
            k /= self.n[i];
        }
        m
    }

    pub fn point(&self, k: usize) -> Vec<T> {
        self.index_to_multi(k).iter().enumerate().map(|(i, &m)| self.lo[i] + self.h * c(m as f64)).collect()
    }
}

/// Nodal values on the full grid with multilinear interpolation; zero
/// outside the grid box.
#[derive(Clone, Debug)]
pub struct GridFunction<T> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn eval(&self, x: &[T]) -> T {
        let g = &self.grid;
        let d = g.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![T::zero(); d];
        for i in 0..d {
            let u = (x[i] - g.lo[i]) / g.h;
            if !(u >= T::zero()) || u > c((g.n[i] - 1) as f64) {
                return T::zero();
            }
            let k = u.floor().to_usize().unwrap().min(g.n[i] - 2);
            base[i] = k;
            frac[i] = u - c(k as f64);
        }
        let mut acc = T::zero();
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            let mut stride = 1;
            let mut w = T::one();
            for i in 0..d {
                let bit = (corner >> i) & 1;
                idx += (base[i] + bit) * stride;
                stride *= g.n[i];
                w = w * if bit == 1 { frac[i] } else { T::one() - frac[i] };
            }
            acc = acc + w * self.values[idx];
        }
        acc
    }

    pub fn profiled(self: &Arc<Self>) -> ProfiledFunction<T> {
        let me = Arc::clone(self);
        let half = me.grid.lo.iter().zip(&me.grid.n).map(|(&l, &n)| l.abs().max((l + me.grid.h * c((n - 1) as f64)).abs()));
        let radius = half.map(|v| v * v).sum::<T>().sqrt();
        let h = me.grid.h;
        ProfiledFunction::new(self.grid.dim(), move |x: &[T]| me.eval(x)).with_support(radius).with_scale(h)
    }
}

/// Offset kernel of the far field in units h = 1:
/// K[D] = (1 - s) sum_theta w int_1^inf (phi_D(r theta) + phi_D(-r theta)) r^{-1-2s} dr.
/// Also returns the kernel mass on the untruncated lattice plus the exact ray
/// tail beyond the marching radius, which must equal (1 - s) M / s.
fn far_kernel<T: Real>(spec: &OperatorSpec<T>, extent: &[usize]) -> (Vec<T>, Vec<usize>, T) {
    let d = extent.len();
    let dims: Vec<usize> = extent.iter().map(|&e| 2 * e + 1).collect();
    let mut k = vec![T::zero(); dims.iter().product()];
    let s = spec.s;
    let p = T::one() + s + s;
    let rmax: T = c(extent.iter().map(|&e| ((e + 1) * (e + 1)) as f64).sum::<f64>().sqrt() + 2.0);
    let rules = [gauss_legendre(20), gauss_legendre(12), gauss_legendre(6)];
    let mut total = T::zero();
    let index = |off: &[i64]| -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for i in 0..d {
            let o = off[i] + extent[i] as i64;
            if o < 0 || o >= dims[i] as i64 {
                return None;
            }
            idx += o as usize * stride;
            stride *= dims[i];
        }
        Some(idx)
    };
    for (th, w) in spec.directions() {
        for sign in [T::one(), -T::one()] {
            let v: Vec<T> = th.iter().map(|&x| x * sign).collect();
            let mut cuts = vec![T::one(), rmax];
            for &vi in &v {
                if vi.abs() > c(1e-14) {
                    let step = T::one() / vi.abs();
                    let mut k = 1usize;
                    loop {
                        let r = step * c(k as f64);
                        if r >= rmax {
                            break;
                        }
                        if r > T::one() {
                            cuts.push(r);
                        }
                        k += 1;
                    }
                }
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cuts.dedup_by(|a, b| (*a - *b).abs() < c(1e-12));
            let mut base = vec![0i64; d];
            let mut off = vec![0i64; d];
            for seg in cuts.windows(2) {
                let (ra, rb) = (seg[0], seg[1]);
                if rb - ra < c(1e-13) {
                    continue;
                }
                let mid = (ra + rb) * c(0.5);
                for i in 0..d {
                    base[i] = (v[i] * mid).floor().to_i64().unwrap();
                }
                let half = (rb - ra) * c(0.5);
                let (gx, gw) = &rules[if ra < c(4.0) { 0 } else if ra < c(16.0) { 1 } else { 2 }];
                for q in 0..gx.len() {
                    let r = mid + half * c(gx[q]);
                    let wt = w * (T::one() - s) * half * c::<T>(gw[q]) * r.powf(-p);
                    total = total + wt;
                    for corner in 0..(1usize << d) {
                        let mut bw = wt;
                        for i in 0..d {
                            let bit = ((corner >> i) & 1) as i64;
                            off[i] = base[i] + bit;
                            let y = v[i] * r - c(off[i] as f64);
                            bw = bw * (T::one() - y.abs()).max(T::zero());
                        }
                        if let Some(idx) = index(&off) {
                            k[idx] = k[idx] + bw;
                        }
                    }
                }
            }
            total = total + w * (T::one() - s) * rmax.powf(-(s + s)) / (s + s);
        }
    }
    (k, dims, total)
}

/// Translation-invariant row of the scheme: A_h u(x_k) = diag u_k - sum_D w_D u_{k+D}.
#[derive(Clone, Debug)]
pub struct Stencil<T> {
    pub diag: T,
    /// Offsets with their weights, sorted by offset.
    pub weights: Vec<(Vec<i64>, T)>,
    /// Row application to constants on the untruncated lattice, in units of
    /// h^{-2s}; zero up to quadrature error.
    pub lattice_row_sum: T,
}

impl<T: Real> Stencil<T> {
    pub fn build(spec: &OperatorSpec<T>, grid: &Grid<T>) -> Result<Self> {
        if grid.dim() != spec.dim() {
            return Err(Error::InvalidParameter("dimension mismatch".into()));
        }
        let d = grid.dim();
        let extent: Vec<usize> = grid.n.iter().map(|&n| n - 1).collect();
        let (kern, dims, total) = far_kernel(spec, &extent);
        let dirs = spec.directions();
        // Limit matrix of the discretised directions, consistent with the far field.
        let mut a = vec![vec![T::zero(); d]; d];
        for (th, w) in &dirs {
            for i in 0..d {
                for j in 0..d {
                    a[i][j] = a[i][j] + c::<T>(0.5) * *w * th[i] * th[j];
                }
            }
        }
        let mass: T = dirs.iter().map(|x| x.1).sum();
        let s = spec.s;
        let scale = grid.h.powf(-(s + s));

        let mut weights: HashMap<Vec<i64>, T> = HashMap::new();
        let center: Vec<i64> = extent.iter().map(|&e| e as i64).collect();
        // Oblique rays cross cells that have the node itself as a corner.
        let mut own = T::zero();
        for (idx, &v) in kern.iter().enumerate() {
            if v == T::zero() {
                continue;
            }
            let mut r = idx;
            let mut off = vec![0i64; d];
            for i in 0..d {
                off[i] = (r % dims[i]) as i64 - center[i];
                r /= dims[i];
            }
            if off.iter().all(|&o| o == 0) {
                own = v;
                continue;
            }
            weights.insert(off, v);
        }
        let mut add = |off: Vec<i64>, v: T| {
            let e = weights.entry(off).or_insert(T::zero());
            *e = *e + v;
        };
        let mut diag_local = T::zero();
        for i in 0..d {
            let mut e = vec![0i64; d];
            e[i] = 1;
            add(e.clone(), a[i][i]);
            add(e.iter().map(|x| -x).collect(), a[i][i]);
            diag_local = diag_local + c::<T>(2.0) * a[i][i];
            for j in i + 1..d {
                let q = a[i][j] * c(0.5);
                if q != T::zero() {
                    let mut pp = vec![0i64; d];
                    pp[i] = 1;
                    pp[j] = 1;
                    let mut pm = vec![0i64; d];
                    pm[i] = 1;
                    pm[j] = -1;
                    add(pp.clone(), q);
                    add(pp.iter().map(|x| -x).collect(), q);
                    add(pm.clone(), -q);
                    add(pm.iter().map(|x| -x).collect(), -q);
                }
            }
        }
        let diag = mass * (T::one() - s) / s - own + diag_local;
        let lattice_row_sum = mass * (T::one() - s) / s - total;
        let mut weights: Vec<(Vec<i64>, T)> = weights.into_iter().map(|(k, v)| (k, v * scale)).collect();
        weights.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Stencil { diag: diag * scale, weights, lattice_row_sum })
    }

    /// A_h applied at grid node k to values on the whole grid (zero beyond it).
    pub fn apply(&self, grid: &Grid<T>, values: &[T], k: usize) -> T {
        let mi = grid.index_to_multi(k);
        let mut acc = self.diag * values[k];
        for (off, w) in &self.weights {
            if let Some(j) = shifted(grid, &mi, off) {
                acc = acc - *w * values[j];
            }
        }
        acc
    }
}

fn shifted<T: Real>(grid: &Grid<T>, mi: &[usize], off: &[i64]) -> Option<usize> {
    let mut gidx = 0usize;
    let mut stride = 1usize;
    for i in 0..mi.len() {
        let m = mi[i] as i64 + off[i];
        if m < 0 || m >= grid.n[i] as i64 {
            return None;
        }
        gidx += m as usize * stride;
        stride *= grid.n[i];
    }
    Some(gidx)
}

/// Assembled collocation system on the interior nodes.
#[derive(Clone, Debug)]
pub struct LinearSystem<T> {
    pub grid: Grid<T>,
    /// Grid indices of the unknowns.
    pub interior: Vec<usize>,
    /// Row-major dense matrix.
    pub matrix: Vec<T>,
    pub stencil: Stencil<T>,
    pub s: T,
}

/// Builds the collocation matrix. Nodes closer than h/2 to the boundary are
/// treated as exterior.
pub fn discretize<T: Real>(spec: &OperatorSpec<T>, domain: &Domain<T>, grid: &Grid<T>) -> Result<LinearSystem<T>> {
    if domain.dim() != spec.dim() || grid.dim() != spec.dim() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    let half = grid.h * c(0.5);
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| domain.distance(&grid.point(k)) >= half).collect();
    if interior.is_empty() {
        return Err(Error::InvalidParameter("grid has no interior nodes".into()));
    }
    let stencil = Stencil::build(spec, grid)?;
    let n = interior.len();
    let mut pos = vec![usize::MAX; grid.len()];
    for (k, &g) in interior.iter().enumerate() {
        pos[g] = k;
    }
    let mut matrix = vec![T::zero(); n * n];
    matrix.par_chunks_mut(n).enumerate().try_for_each(|(row, out)| -> Result<()> {
        let mi = grid.index_to_multi(interior[row]);
        out[row] = stencil.diag;
        for (off, w) in &stencil.weights {
            let Some(g) = shifted(grid, &mi, off) else { continue };
            let col = pos[g];
            if col == usize::MAX {
                continue;
            }
            if *w < T::zero() {
                return Err(Error::SignPattern { row, detail: format!("positive off-diagonal {} at offset {off:?}", -*w) });
            }
            out[col] = out[col] - *w;
        }
        Ok(())
    })?;
    Ok(LinearSystem { grid: grid.clone(), interior, matrix, stencil, s: spec.s })
}

/// LU factorisation with partial pivoting, in place.
fn lu_solve<T: Real>(mut a: Vec<T>, n: usize, mut b: Vec<T>) -> Result<Vec<T>> {
    let mut piv: Vec<usize> = (0..n).collect();
    for j in 0..n {
        let mut p = j;
        let mut best = a[j * n + j].abs();
        for i in j + 1..n {
            let v = a[i * n + j].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best > T::zero()) || !best.is_finite() {
            return Err(Error::Singular(format!("zero pivot in column {j}")));
        }
        if p != j {
            for k in 0..n {
                a.swap(j * n + k, p * n + k);
            }
            piv.swap(j, p);
            b.swap(j, p);
        }
        let (top, bottom) = a.split_at_mut((j + 1) * n);
        let prow = &top[j * n..j * n + n];
        let pv = prow[j];
        for i in 0..n - j - 1 {
            let row = &mut bottom[i * n..i * n + n];
            let l = row[j] / pv;
            if l == T::zero() {
                continue;
            }
            row[j] = l;
            for (x, &y) in row[j + 1..].iter_mut().zip(&prow[j + 1..]) {
                *x = *x - l * y;
            }
            b[j + 1 + i] = b[j + 1 + i] - l * b[j];
        }
    }
    for j in (0..n).rev() {
        let mut acc = b[j];
        for k in j + 1..n {
            acc = acc - a[j * n + k] * b[k];
        }
        b[j] = acc / a[j * n + j];
    }
    Ok(b)
}

/// Solution of the Dirichlet problem with diagnostics.
#[derive(Clone, Debug)]
pub struct DirichletResult<T> {
    pub grid: Grid<T>,
    pub interior: Vec<usize>,
    pub points: Vec<Vec<T>>,
    pub depth: Vec<T>,
    pub u: Vec<T>,
    /// max |A u - f| over interior nodes, from the assembled matrix.
    pub residual: T,
    pub s: T,
}

impl<T: Real> DirichletResult<T> {
    pub fn sup(&self) -> T {
        self.u.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn grid_function(&self) -> GridFunction<T> {
        let mut values = vec![T::zero(); self.grid.len()];
        for (k, &g) in self.interior.iter().enumerate() {
            values[g] = self.u[k];
        }
        GridFunction { grid: self.grid.clone(), values }
    }
}

/// Solves A u = f in the domain with u = g at exterior grid nodes (and zero
/// beyond the grid).
pub fn solve_dirichlet<T: Real>(
    spec: &OperatorSpec<T>,
    domain: &Domain<T>,
    grid: &Grid<T>,
    f: &dyn Fn(&[T]) -> T,
    g: Option<&dyn Fn(&[T]) -> T>,
) -> Result<DirichletResult<T>> {
    let sys = discretize(spec, domain, grid)?;
    solve_system(&sys, domain, f, g, spec)
}

pub fn solve_system<T: Real>(
    sys: &LinearSystem<T>,
    domain: &Domain<T>,
    f: &dyn Fn(&[T]) -> T,
    g: Option<&dyn Fn(&[T]) -> T>,
    spec: &OperatorSpec<T>,
) -> Result<DirichletResult<T>> {
    let grid = &sys.grid;
    let n = sys.interior.len();
    let points: Vec<Vec<T>> = sys.interior.iter().map(|&k| grid.point(k)).collect();
    let mut rhs: Vec<T> = points.iter().map(|x| f(x)).collect();
    if let Some(g) = g {
        // Exterior data: move A applied to the exterior interpolant to the right-hand side.
        let mut ext = vec![T::zero(); grid.len()];
        let mut inside = vec![false; grid.len()];
        for &k in &sys.interior {
            inside[k] = true;
        }
        for k in 0..grid.len() {
            if !inside[k] {
                ext[k] = g(&grid.point(k));
            }
        }
        let gf = Arc::new(GridFunction { grid: grid.clone(), values: ext });
        let pf = gf.profiled();
        for (i, x) in points.iter().enumerate() {
            rhs[i] = rhs[i] - apply(spec, &pf, x)?;
        }
    }
    let u = lu_solve(sys.matrix.clone(), n, rhs.clone())?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite solution".into()));
    }
    let mut residual = T::zero();
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            acc = acc + sys.matrix[i * n + j] * u[j];
        }
        residual = residual.max((acc - rhs[i]).abs());
    }
    let depth = points.iter().map(|x| domain.distance(x)).collect();
    Ok(DirichletResult { grid: grid.clone(), interior: sys.interior.clone(), points, depth, u, residual, s: sys.s })
}

fn rate_samples<T: Real>(res: &DirichletResult<T>, lo: T, hi: T) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let mut ds = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &d) in res.depth.iter().enumerate() {
        if d >= lo && d <= hi && res.u[k].abs() > T::zero() {
            ds.push(d);
            xs.push(d.ln());
            ys.push(res.u[k].abs().ln());
        }
    }
    let mut distinct = ds.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() <= c::<T>(1e-9) * *b);
    if distinct.len() < 8 {
        return Err(Error::InvalidParameter(format!("only {} distinct depths in the fit range", distinct.len())));
    }
    Ok((ds, xs, ys))
}

/// Least-squares slope and prefactor of log|u| against log d over nodes with
/// depth in [lo, hi].
pub fn boundary_rate_fit<T: Real>(res: &DirichletResult<T>, lo: T, hi: T) -> Result<(T, T)> {
    let (_, xs, ys) = rate_samples(res, lo, hi)?;
    let (slope, icpt) = linear_fit(&xs, &ys);
    Ok((slope, icpt.exp()))
}

/// Fits log|u| = p log d + b + k d, which absorbs the first-order smooth
/// factor in u = d^p (a + O(d)). Returns (p, e^b).
pub fn boundary_rate_fit_corrected<T: Real>(res: &DirichletResult<T>, lo: T, hi: T) -> Result<(T, T)> {
    let (ds, xs, ys) = rate_samples(res, lo, hi)?;
    let coef = least_squares(&[&xs, &vec![T::one(); xs.len()], &ds], &ys)?;
    Ok((coef[0], coef[1].exp()))
}

/// Least-squares slope and prefactor of log|u| against log|x - z| over nodes
/// in the cone with apex z, axis `dir` and the given half angle, with
/// lo <= |x - z| <= hi.
pub fn cone_rate_fit<T: Real>(res: &DirichletResult<T>, z: &[T], dir: &[T], half_angle: T, lo: T, hi: T) -> Result<(T, T)> {
    let nd = norm(dir);
    let cosa = half_angle.cos();
    let (mut rs, mut xs, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for (k, x) in res.points.iter().enumerate() {
        let v: Vec<T> = x.iter().zip(z).map(|(&a, &b)| a - b).collect();
        let r = norm(&v);
        if r < lo || r > hi || res.u[k] == T::zero() {
            continue;
        }
        let cosx = v.iter().zip(dir).map(|(&a, &b)| a * b).sum::<T>() / (r * nd);
        if cosx >= cosa - c(1e-12) {
            rs.push(r);
            xs.push(r.ln());
            ys.push(res.u[k].abs().ln());
        }
    }
    let mut distinct = rs.clone();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup_by(|a, b| (*a - *b).abs() <= c::<T>(1e-9) * *b);
    if distinct.len() < 8 {
        return Err(Error::InvalidParameter(format!("only {} distinct radii in the cone", distinct.len())));
    }
    let (slope, icpt) = linear_fit(&xs, &ys);
    Ok((slope, icpt.exp()))
}

/// Solves the normal equations for a small dense least-squares problem.
fn least_squares<T: Real>(cols: &[&Vec<T>], y: &[T]) -> Result<Vec<T>> {
    let k = cols.len();
    let mut a = vec![T::zero(); k * k];
    let mut b = vec![T::zero(); k];
    for i in 0..k {
        for j in 0..k {
            a[i * k + j] = cols[i].iter().zip(cols[j].iter()).map(|(&p, &q)| p * q).sum();
        }
        b[i] = cols[i].iter().zip(y).map(|(&p, &q)| p * q).sum();
    }
    lu_solve(a, k, b)
}

/// inf of u(x)/|x - z|^s over nodes in the cone with apex z, axis `dir` and
/// the given half angle, restricted to |x - z| <= radius.
pub fn hopf_margin<T: Real>(res: &DirichletResult<T>, z: &[T], dir: &[T], half_angle: T, radius: T) -> Result<T> {
    let nd = norm(dir);
    let cosa = half_angle.cos();
    let mut inf = T::infinity();
    for (k, x) in res.points.iter().enumerate() {
        let v: Vec<T> = x.iter().zip(z).map(|(&a, &b)| a - b).collect();
        let r = norm(&v);
        if r <= T::zero() || r > radius {
            continue;
        }
        let cosx = v.iter().zip(dir).map(|(&a, &b)| a * b).sum::<T>() / (r * nd);
        if cosx >= cosa - c(1e-12) {
            inf = inf.min(res.u[k] / r.powf(res.s));
        }
    }
    if !inf.is_finite() {
        return Err(Error::InvalidParameter("no nodes inside the cone".into()));
    }
    Ok(inf)
}

/// ||u||_inf / (diam^{2s} ||f||_inf).
pub fn linfty_ratio<T: Real>(res: &DirichletResult<T>, domain: &Domain<T>, f_sup: T) -> T {
    res.sup() / (domain.diam().powf(res.s + res.s) * f_sup)
}

/// Supersolution c1 psi(x / R) from the bump psi; returns (c1, R, r1) and
/// whether u <= c1 psi((x - x0)/R) at every node.
pub fn psi_r_supersolution<T: Real>(
    spec: &OperatorSpec<T>,
    res: &DirichletResult<T>,
    domain: &Domain<T>,
    x0: &[T],
    f_sup: T,
) -> Result<((T, T, T), bool)> {
    let psi = ProfiledFunction::psi(spec.dim());
    let lam = spec.lambda;
    let mut r1 = T::zero();
    let nd = 8;
    'outer: for k in 1..20 {
        let r: T = c(k as f64 * 0.05);
        for j in 0..nd {
            let ph = T::PI() * c(j as f64 / nd as f64);
            let mut x = vec![T::zero(); spec.dim()];
            x[0] = r * ph.cos();
            if spec.dim() > 1 {
                x[1] = r * ph.sin();
            }
            if apply(spec, &psi, &x)? < lam * c(0.5) {
                break 'outer;
            }
        }
        r1 = r;
    }
    if !(r1 > T::zero()) {
        return Err(Error::Construction("A psi drops below lambda/2 near the origin".into()));
    }
    let big_r = domain.diam() / r1;
    let c1 = c::<T>(2.0) * big_r.powf(spec.s + spec.s) * f_sup / lam;
    let ok = res.points.iter().zip(&res.u).all(|(x, &u)| {
        let y: Vec<T> = x.iter().zip(x0).map(|(&a, &b)| (a - b) / big_r).collect();
        u <= c1 * (T::one() - y.iter().map(|&v| v * v).sum::<T>()).max(T::zero())
    });
    Ok(((c1, big_r, r1), ok))
}

/// Holder quotient sup |u(x) - u(y)| / |x - y|^s over node pairs in a ball.
pub fn interior_holder<T: Real>(res: &DirichletResult<T>, center: &[T], radius: T) -> T {
    let idx: Vec<usize> = (0..res.points.len())
        .filter(|&k| {
            let v: Vec<T> = res.points[k].iter().zip(center).map(|(&a, &b)| a - b).collect();
            norm(&v) <= radius
        })
        .collect();
    let mut best = T::zero();
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let v: Vec<T> = res.points[i].iter().zip(&res.points[j]).map(|(&p, &q)| p - q).collect();
            let r = norm(&v);
            best = best.max((res.u[i] - res.u[j]).abs() / r.powf(res.s));
        }
    }
    best
}

/// Local limit: -tr(A D^2 u) = f with central differences on the same grid.
pub fn solve_local_limit<T: Real>(
    spec: &OperatorSpec<T>,
    domain: &Domain<T>,
    grid: &Grid<T>,
    f: &dyn Fn(&[T]) -> T,
) -> Result<DirichletResult<T>> {
    let d = grid.dim();
    let a = spec.measure.limit_matrix();
    let half = grid.h * c(0.5);
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| domain.distance(&grid.point(k)) >= half).collect();
    let n = interior.len();
    let mut pos = vec![usize::MAX; grid.len()];
    for (k, &g) in interior.iter().enumerate() {
        pos[g] = k;
    }
    let h2 = grid.h * grid.h;
    let mut m = vec![T::zero(); n * n];
    let mut strides = vec![1usize; d];
    for i in 1..d {
        strides[i] = strides[i - 1] * grid.n[i - 1];
    }
    for (row, &g) in interior.iter().enumerate() {
        let mi = grid.index_to_multi(g);
        let put = |offs: &[(usize, i64)], v: T, m: &mut Vec<T>| {
            let mut idx = g as i64;
            for &(ax, o) in offs {
                let k = mi[ax] as i64 + o;
                if k < 0 || k >= grid.n[ax] as i64 {
                    return;
                }
                idx += o * strides[ax] as i64;
            }
            let col = pos[idx as usize];
            if col != usize::MAX {
                m[row * n + col] = m[row * n + col] + v;
            }
        };
        for i in 0..d {
            put(&[], c::<T>(2.0) * a[i][i] / h2, &mut m);
            put(&[(i, 1)], -a[i][i] / h2, &mut m);
            put(&[(i, -1)], -a[i][i] / h2, &mut m);
            for j in i + 1..d {
                let q = a[i][j] / (c::<T>(2.0) * h2);
                put(&[(i, 1), (j, 1)], -q, &mut m);
                put(&[(i, -1), (j, -1)], -q, &mut m);
                put(&[(i, 1), (j, -1)], q, &mut m);
                put(&[(i, -1), (j, 1)], q, &mut m);
            }
        }
    }
    let points: Vec<Vec<T>> = interior.iter().map(|&k| grid.point(k)).collect();
    let rhs: Vec<T> = points.iter().map(|x| f(x)).collect();
    let u = lu_solve(m, n, rhs)?;
    let depth = points.iter().map(|x| domain.distance(x)).collect();
    Ok(DirichletResult { grid: grid.clone(), interior, points, depth, u, residual: T::zero(), s: T::one() })
}

/// One row of an s -> 1 sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitPoint<T> {
    pub s: T,
    /// Sup-norm distance to the reference solution.
    pub err: T,
    /// Corrected boundary exponent over depths in [4h, diam/4].
    pub slope: T,
}

/// For each s, compares the nonlocal solution with the local limit solution
/// on the same grid, or with `exact` when given.
pub fn s1_limit_compare<T: Real>(
    spec_for: &dyn Fn(T) -> Result<OperatorSpec<T>>,
    domain: &Domain<T>,
    grid: &Grid<T>,
    f: &dyn Fn(&[T]) -> T,
    s_list: &[T],
    exact: Option<&dyn Fn(&[T]) -> T>,
) -> Result<Vec<LimitPoint<T>>> {
    let mut out = Vec::new();
    let limit = match exact {
        Some(_) => None,
        None => Some(solve_local_limit(&spec_for(s_list[0])?, domain, grid, f)?),
    };
    for &s in s_list {
        let spec = spec_for(s)?;
        let res = solve_dirichlet(&spec, domain, grid, f, None)?;
        let mut err = T::zero();
        for (k, x) in res.points.iter().enumerate() {
            let reference = match (exact, &limit) {
                (Some(e), _) => e(x),
                (None, Some(l)) => l.u[k],
                (None, None) => unreachable!(),
            };
            err = err.max((res.u[k] - reference).abs());
        }
        let (slope, _) = boundary_rate_fit_corrected(&res, grid.h * c(4.0), domain.diam() * c(0.25))?;
        out.push(LimitPoint { s, err, slope });
    }
    Ok(out)
}

/// Checks u <= (||f|| + Tail + ||u||/(C1 eps0^s)) b_+ at every node, with the
/// plus barrier of a domain touching the boundary from outside at z.
/// Returns the prefactor and the worst relative margin.
pub fn upper_barrier_comparison<T: Real>(
    spec: &OperatorSpec<T>,
    res: &DirichletResult<T>,
    domain: &Domain<T>,
    z: &[T],
    zeta: Arc<ZetaProfile<T>>,
    f_sup: T,
) -> Result<(T, T)> {
    let outer = Arc::new(domain.exterior_tangent(z)?);
    let rd = Arc::new(RegularizedDistance::build(Arc::clone(&outer), 64, c(4.0))?);
    let eps_max = outer.diam() * c(0.1);
    let barrier = Arc::new(build_barrier(BarrierKind::Plus, spec, rd, zeta, eps_max, 8)?);
    let gf = Arc::new(res.grid_function());
    let pf = gf.profiled();
    let mut tail = T::zero();
    let step = (res.points.len() / 8).max(1);
    for x in res.points.iter().step_by(step) {
        tail = tail.max(tail_term(spec, &pf, x)?);
    }
    let lower = barrier.comparability.0;
    let k = f_sup + tail + res.sup() / (lower * barrier.eps0.powf(spec.s));
    let mut worst = T::infinity();
    for (x, &u) in res.points.iter().zip(&res.u) {
        let b = k * barrier.eval(x);
        worst = worst.min((b - u) / b.abs().max(c(1e-300)));
    }
    Ok((k, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SphericalMeasure;
    use approx::assert_relative_eq;

    fn line(s: f64) -> OperatorSpec<f64> {
        OperatorSpec::new(s, SphericalMeasure::uniform(1, 1.0).unwrap(), true).unwrap()
    }

    #[test]
    fn lattice_rows_annihilate_constants() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let grid = Grid::for_domain(&dom, 1.0 / 64.0, 0).unwrap();
        let sys = discretize(&line(0.6), &dom, &grid).unwrap();
        assert!(sys.stencil.lattice_row_sum.abs() < 1e-10, "{}", sys.stencil.lattice_row_sum);
    }

    #[test]
    fn symmetric_problem_gives_symmetric_solution() {
        let dom = Domain::interval(-1.0, 1.0).unwrap();
        let grid = Grid::for_domain(&dom, 1.0 / 32.0, 0).unwrap();
        let res = solve_dirichlet(&line(0.5), &dom, &grid, &|_| 1.0, None).unwrap();
        let n = res.u.len();
        for k in 0..n {
            assert_relative_eq!(res.u[k], res.u[n - 1 - k], max_relative = 1e-10);
        }
        assert!(res.residual < 1e-9);
    }
}
