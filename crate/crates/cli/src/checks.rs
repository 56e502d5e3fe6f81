//! Check registry. Each check runs one module operation on the configured
//! objects and reports pass/fail records plus artifacts.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use stabound::geometry::{build_barrier, default_a, lemma53_integrals, verify_barrier, BarrierKind, Domain, RegularizedDistance};
use stabound::measure::OperatorSpec;
use stabound::modulus::Modulus;
use stabound::operator::{apply, apply_1d, ProfiledFunction};
use stabound::quad::logspace;
use stabound::report::{csv, svg_plot, Check};
use stabound::solver::{
    boundary_rate_fit, boundary_rate_fit_corrected, cone_rate_fit, hopf_margin, interior_holder, linfty_ratio,
    psi_r_supersolution, s1_limit_compare, solve_dirichlet, upper_barrier_comparison, DirichletResult, Grid,
};
use stabound::zeta::{build_zeta_nopub, build_zeta_pub, claim_a, claim_b, default_iota, subharmonicity_margin_with, ZetaProfile};
use stabound::{Error, Result};

use crate::experiment::{ExperimentConfig, Source, SourceConfig};

/// Modules in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Modulus,
    Zeta,
    Operator,
    Geometry,
    Solver,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Modulus => "modulus",
            Stage::Zeta => "zeta",
            Stage::Operator => "operator",
            Stage::Geometry => "geometry",
            Stage::Solver => "solver",
        }
    }
}

pub struct Artifact {
    pub name: String,
    pub content: String,
}

#[derive(Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    fn check(mut self, c: Check) -> Self {
        self.checks.push(c);
        self
    }

    fn artifact(mut self, name: &str, content: String) -> Self {
        self.artifacts.push(Artifact { name: name.to_string(), content });
        self
    }
}

pub struct CheckDef {
    pub name: &'static str,
    pub stage: Stage,
    pub run: fn(&Ctx) -> Result<Outcome>,
}

pub const CHECKS: &[CheckDef] = &[
    CheckDef { name: "modulus_upgrade", stage: Stage::Modulus, run: modulus_upgrade },
    CheckDef { name: "dini_verdict", stage: Stage::Modulus, run: dini_verdict },
    CheckDef { name: "zeta_properties", stage: Stage::Zeta, run: zeta_properties },
    CheckDef { name: "subharmonic_sign", stage: Stage::Zeta, run: subharmonic_sign },
    CheckDef { name: "touching_function", stage: Stage::Zeta, run: touching_function },
    CheckDef { name: "psi_anchor", stage: Stage::Operator, run: psi_anchor },
    CheckDef { name: "s_harmonic", stage: Stage::Operator, run: s_harmonic },
    CheckDef { name: "nondegeneracy", stage: Stage::Operator, run: nondegeneracy },
    CheckDef { name: "barrier_plus", stage: Stage::Geometry, run: barrier_plus },
    CheckDef { name: "barrier_minus", stage: Stage::Geometry, run: barrier_minus },
    CheckDef { name: "lemma53", stage: Stage::Geometry, run: lemma53 },
    CheckDef { name: "solve", stage: Stage::Solver, run: solve },
    CheckDef { name: "decay_rate", stage: Stage::Solver, run: decay_rate },
    CheckDef { name: "hopf", stage: Stage::Solver, run: hopf },
    CheckDef { name: "linfty_bound", stage: Stage::Solver, run: linfty_bound },
    CheckDef { name: "upper_barrier", stage: Stage::Solver, run: upper_barrier },
    CheckDef { name: "s1_limit", stage: Stage::Solver, run: s1_limit },
    CheckDef { name: "interior_holder", stage: Stage::Solver, run: holder },
    CheckDef { name: "corner_rate", stage: Stage::Solver, run: corner_rate },
];

/// Registered tolerances with their defaults.
pub const TOLERANCES: &[(&str, f64)] = &[
    ("psi_anchor", 1e-6),
    ("s_harmonic", 1e-4),
    ("modulus_shape", 1e-8),
    ("zeta_shape", 1e-8),
    ("zeta_c1_cap", 1e6),
    ("claim_a", 1e-12),
    ("kappa", 1e-10),
    ("refinement", 0.2),
    ("barrier", 1e-3),
    ("lemma53_spread", 10.0),
    ("residual", 1e-8),
    ("positivity", 1e-10),
    ("decay_rate", 0.05),
    ("corner_gap", 0.05),
];

pub fn lookup(name: &str) -> Option<&'static CheckDef> {
    CHECKS.iter().find(|c| c.name == name)
}

type Cell<V> = Arc<OnceLock<std::result::Result<Arc<V>, Error>>>;

/// Shared state of one run; solves are cached per spacing.
pub struct Ctx {
    pub cfg: ExperimentConfig,
    /// Replaces solved fields by the pure power d^s in `decay_rate`.
    pub analytic: bool,
    solves: Mutex<BTreeMap<u64, Cell<DirichletResult<f64>>>>,
    zeta: OnceLock<std::result::Result<Arc<ZetaProfile<f64>>, Error>>,
}

fn missing(what: &str, check: &str) -> Error {
    Error::Schema(format!("check '{check}' needs {what} in the config"))
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig, analytic: bool) -> Self {
        Ctx { cfg, analytic, solves: Mutex::new(BTreeMap::new()), zeta: OnceLock::new() }
    }

    fn tol(&self, name: &str) -> f64 {
        self.cfg.tolerance(name)
    }

    fn s(&self) -> f64 {
        self.cfg.operator.as_ref().map_or(0.3, |o| o.s)
    }

    fn spec(&self, check: &str) -> Result<OperatorSpec<f64>> {
        let op = self.cfg.operator.as_ref().ok_or_else(|| missing("an operator", check))?;
        let dim = self.cfg.domain.as_ref().map_or(1, |d| d.dim());
        OperatorSpec::new(op.s, op.measure.build(dim)?, op.pub_flag)
    }

    fn spec_at(&self, s: f64) -> Result<OperatorSpec<f64>> {
        let op = self.cfg.operator.as_ref().ok_or_else(|| missing("an operator", "s1_limit"))?;
        let dim = self.cfg.domain.as_ref().map_or(1, |d| d.dim());
        OperatorSpec::new(s, op.measure.build(dim)?, op.pub_flag)
    }

    fn domain(&self, check: &str) -> Result<Domain<f64>> {
        self.cfg.domain.as_ref().ok_or_else(|| missing("a domain", check))?.build()
    }

    /// The configured modulus, else the one of the domain.
    fn modulus(&self, check: &str) -> Result<Modulus<f64>> {
        match (&self.cfg.modulus, &self.cfg.domain) {
            (Some(m), _) => m.build(),
            (None, Some(d)) => Ok(d.build::<f64>()?.modulus()),
            _ => Err(missing("a modulus or a domain", check)),
        }
    }

    /// Profile for the configured operator: the corrected one when the upper
    /// bound is off and s <= 1/2.
    fn zeta(&self, check: &str) -> Result<Arc<ZetaProfile<f64>>> {
        self.zeta
            .get_or_init(|| {
                let s = self.s();
                let iota = default_iota(s);
                let up = self.modulus(check)?.upgrade(iota)?;
                let pub_flag = self.cfg.operator.as_ref().map_or(true, |o| o.pub_flag);
                let z = if pub_flag || s > 0.5 { build_zeta_pub(s, &up, iota, 1.0)? } else { build_zeta_nopub(s, &up, iota, 1.0)? };
                Ok(Arc::new(z))
            })
            .clone()
    }

    fn h(&self, dom: &Domain<f64>) -> f64 {
        self.cfg.h.unwrap_or_else(|| dom.diam() / if dom.dim() == 1 { 1024.0 } else { 64.0 })
    }

    fn source(&self) -> Result<Source> {
        Source::new(&self.cfg.f)
    }

    fn f_sup(&self, res: &DirichletResult<f64>) -> Result<f64> {
        let src = self.source()?;
        let mut m: f64 = 0.0;
        for x in &res.points {
            m = m.max(src.eval(x)?.abs());
        }
        Ok(m)
    }

    fn f_nonnegative(&self, res: &DirichletResult<f64>) -> Result<bool> {
        let src = self.source()?;
        for x in &res.points {
            if src.eval(x)? < 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Dirichlet solution at spacing h, cached.
    fn solved(&self, check: &str, h: f64) -> Result<Arc<DirichletResult<f64>>> {
        let cell = {
            let mut map = self.solves.lock().expect("solve cache");
            Arc::clone(map.entry(h.to_bits()).or_default())
        };
        cell.get_or_init(|| {
            let spec = self.spec(check)?;
            let dom = self.domain(check)?;
            let grid = Grid::for_domain(&dom, h, 0)?;
            let cap = if dom.dim() == 1 { 4096 } else { 96 };
            if grid.n.iter().any(|&n| n > cap + 1) {
                return Err(Error::Schema(format!("grid {:?} exceeds the dense cap of {cap} nodes per axis", grid.n)));
            }
            let src = self.source()?;
            // Expression errors surface here rather than inside the solve.
            for k in 0..grid.len() {
                src.eval(&grid.point(k))?;
            }
            let f = |x: &[f64]| src.eval(x).unwrap_or(f64::NAN);
            Ok(Arc::new(solve_dirichlet(&spec, &dom, &grid, &f, None)?))
        })
        .clone()
    }
}

/// Boundary point and inward axis used by the Hopf and upper-barrier checks.
fn boundary_probe(dom: &Domain<f64>) -> (Vec<f64>, Vec<f64>) {
    match dom {
        Domain::Interval { a, .. } => (vec![*a], vec![1.0]),
        Domain::Ball { center, r } => {
            let mut z = center.clone();
            z[0] += r;
            let mut dir = vec![0.0; center.len()];
            dir[0] = -1.0;
            (z, dir)
        }
        Domain::DiniGraph { .. } => (vec![0.0, 0.0], vec![0.0, 1.0]),
        Domain::Corner { half } => (vec![-half, 0.0], vec![1.0, 0.0]),
    }
}

fn min(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn modulus_upgrade(ctx: &Ctx) -> Result<Outcome> {
    let bar = ctx.modulus("modulus_upgrade")?;
    let iota = default_iota(ctx.s());
    let up = bar.upgrade(iota)?;
    let t0 = up.certificate.as_ref().map_or(1.0, |c| c.t0);
    let grid = up.sample_grid();
    let dom = min(grid.iter().map(|&t| up.eval(t) - bar.eval(t)));
    let rep = up.check_properties(iota, t0)?;
    let shape = min([rep.monotone.0, rep.concave.0, rep.growth.0, rep.second_order.0]);
    let rows: Vec<Vec<f64>> = grid.iter().map(|&t| vec![t, bar.eval(t), up.eval(t)]).collect();
    let plot = svg_plot(
        "input and upgraded modulus",
        &[("input", rows.iter().map(|r| (r[0], r[1])).collect()), ("upgraded", rows.iter().map(|r| (r[0], r[2])).collect())],
        true,
        true,
    );
    Ok(Outcome::default()
        .check(Check::at_least("modulus_upgrade.dominance", dom, -1e-12))
        .check(Check::at_least("modulus_upgrade.shape", shape, -ctx.tol("modulus_shape")).with_detail(format!("iota {iota:.4}, t0 {t0:.3e}")))
        .artifact("modulus.csv", csv(&["t", "input", "upgraded"], &rows))
        .artifact("modulus.svg", plot))
}

fn dini_verdict(ctx: &Ctx) -> Result<Outcome> {
    let bar = ctx.modulus("dini_verdict")?;
    let s = ctx.s();
    let up = bar.upgrade(default_iota(s))?;
    let (d0, d1) = (bar.dini_integral(1e-10)?, up.dini_integral(1e-10)?);
    let (e0, e1) = (bar.dini2s_integral(s, 1e-10)?, up.dini2s_integral(s, 1e-10)?);
    let verdict = |f: bool| if f { "finite" } else { "infinite" };
    Ok(Outcome::default()
        .check(Check::flag(
            "dini_verdict.dini",
            d0.finite == d1.finite,
            format!("input {} ({:.6}), upgraded {} ({:.6})", verdict(d0.finite), d0.value, verdict(d1.finite), d1.value),
        ))
        .check(Check::flag(
            "dini_verdict.dini2s",
            e0.finite == e1.finite,
            format!("s {s}: input {} ({:.6}), upgraded {} ({:.6})", verdict(e0.finite), e0.value, verdict(e1.finite), e1.value),
        )))
}

fn zeta_properties(ctx: &Ctx) -> Result<Outcome> {
    let z = ctx.zeta("zeta_properties")?;
    let rep = z.check();
    let worst = min([rep.positive_increasing_concave.0, rep.t_zeta_prime_monotone.0, rep.growth_ratio_monotone.0, rep.coupling.0]);
    let ok = rep.passes(ctx.tol("zeta_shape"), ctx.tol("zeta_c1_cap"));
    let ts = logspace(1e-8, z.t0 * 0.999, 200);
    let rows: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| {
            let (v, d1, d2, _) = z.eval4(t);
            vec![t, v, d1, d2]
        })
        .collect();
    let plot = svg_plot("zeta", &[("zeta", rows.iter().map(|r| (r[0], r[1])).collect())], true, true);
    let detail = format!("{:?} variant, t0 {:.3e}, c1 {:.3e}, c2 {:.3e}, worst shape margin {worst:.3e}", z.variant, z.t0, rep.third_derivative_c1, rep.c2);
    Ok(Outcome::default()
        .check(Check::flag("zeta_properties", ok, detail))
        .artifact("zeta.csv", csv(&["t", "zeta", "zeta_1", "zeta_2"], &rows))
        .artifact("zeta.svg", plot))
}

fn subharmonic_sign(ctx: &Ctx) -> Result<Outcome> {
    let z = ctx.zeta("subharmonic_sign")?;
    let lo: f64 = 1e-4;
    if z.t0 <= lo {
        return Err(Error::Construction(format!("validity threshold {:.2e} leaves no sample range", z.t0)));
    }
    let ts = logspace(lo * 1.0001, z.t0 * 0.9999, 40);
    let coarse = subharmonicity_margin_with(&z, &ts, &Default::default())?;
    let fine_q = stabound::operator::RayQuadrature {
        grading: stabound::quad::Grading { order: 12, levels: 40, smooth_panels: 2 },
        tail_tol: 1e-15,
    };
    let fine = subharmonicity_margin_with(&z, &ts, &fine_q)?;
    let worst = max(coarse.iter().chain(&fine).copied());
    let (i0, i1) = (min(coarse.iter().map(|r| -r)), min(fine.iter().map(|r| -r)));
    let drift = (i0 / i1 - 1.0).abs();
    let rows: Vec<Vec<f64>> = ts.iter().zip(coarse.iter().zip(&fine)).map(|(&t, (&a, &b))| vec![t, a, b]).collect();
    Ok(Outcome::default()
        .check(Check::from_margin("subharmonic_sign.sign", worst, 0.0, -worst))
        .check(Check::at_most("subharmonic_sign.stability", drift, ctx.tol("refinement")).with_detail(format!("inf(-r) {i0:.4e} vs {i1:.4e}")))
        .artifact("subharmonic.csv", csv(&["t", "ratio", "ratio_fine"], &rows)))
}

fn touching_function(ctx: &Ctx) -> Result<Outcome> {
    let z = ctx.zeta("touching_function")?;
    let s = z.s;
    let mut gap: f64 = f64::INFINITY;
    let mut ratio: f64 = f64::INFINITY;
    let mut kappa_err: f64 = 0.0;
    for t in logspace(1e-4_f64.min(z.t0 * 0.5), z.t0 * 0.9999, 12) {
        let (a, kappa, g) = claim_a(&z, t);
        gap = gap.min(g);
        kappa_err = kappa_err.max((kappa * (1.0 - a).powf(s) - 1.0).abs());
        ratio = ratio.min(claim_b(&z, t, 0.1));
    }
    Ok(Outcome::default()
        .check(Check::at_least("touching_function.claim_a", gap, -ctx.tol("claim_a")))
        .check(Check::from_margin("touching_function.claim_b", ratio, 0.0, ratio))
        .check(Check::at_most("touching_function.constraint", kappa_err, ctx.tol("kappa"))))
}

fn psi_anchor(ctx: &Ctx) -> Result<Outcome> {
    let spec = ctx.spec("psi_anchor")?;
    let dim = spec.dim();
    let v = apply(&spec, &ProfiledFunction::psi(dim), &vec![0.0; dim])?;
    let expect = spec.measure.total_mass() / spec.s;
    let err = (v / expect - 1.0).abs();
    Ok(Outcome::default().check(
        Check::at_most("psi_anchor", err, ctx.tol("psi_anchor")).with_detail(format!("A psi(0) = {v:.12}, mu(S)/s = {expect:.12}")),
    ))
}

fn s_harmonic(ctx: &Ctx) -> Result<Outcome> {
    let s = ctx.spec("s_harmonic")?.s;
    let u = ProfiledFunction::half_line_power(1, s);
    let mut rows = Vec::new();
    for t in logspace(0.1, 10.0, 20) {
        rows.push(vec![t, apply_1d(s, &u, t)?]);
    }
    let worst = max(rows.iter().map(|r| r[1].abs() * r[0].powf(s)));
    Ok(Outcome::default()
        .check(Check::at_most("s_harmonic", worst, ctx.tol("s_harmonic")))
        .artifact("s_harmonic.csv", csv(&["t", "value"], &rows)))
}

fn nondegeneracy(ctx: &Ctx) -> Result<Outcome> {
    let spec = ctx.spec("nondegeneracy")?;
    let lam = spec.lambda;
    Ok(Outcome::default().check(Check::from_margin("nondegeneracy", lam, 0.0, lam)))
}

fn barrier(ctx: &Ctx, kind: BarrierKind, name: &str) -> Result<Outcome> {
    let spec = ctx.spec(name)?;
    let dom = Arc::new(ctx.domain(name)?);
    let rd = Arc::new(RegularizedDistance::build(Arc::clone(&dom), 64, 4.0)?);
    let z = ctx.zeta(name)?;
    let b = Arc::new(build_barrier(kind, &spec, rd, z, 0.5 * dom.diam() / 4.0, 8)?);
    let rows = verify_barrier(&b, &spec, 200)?;
    let worst = min(rows.iter().map(|r| r.3));
    let table: Vec<Vec<f64>> = rows.iter().map(|(x, v, bd, m)| x.iter().copied().chain([*v, *bd, *m]).collect()).collect();
    let mut header: Vec<String> = (0..spec.dim()).map(|i| format!("x{i}")).collect();
    header.extend(["value", "bound", "margin"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    Ok(Outcome::default()
        .check(Check::at_least(name, worst, -ctx.tol("barrier")).with_detail(format!("eps0 {:.3e}, {} probes", b.eps0, rows.len())))
        .artifact(&format!("{name}.csv"), csv(&header, &table)))
}

fn barrier_plus(ctx: &Ctx) -> Result<Outcome> {
    barrier(ctx, BarrierKind::Plus, "barrier_plus")
}

fn barrier_minus(ctx: &Ctx) -> Result<Outcome> {
    barrier(ctx, BarrierKind::Minus, "barrier_minus")
}

fn lemma53(ctx: &Ctx) -> Result<Outcome> {
    let omega = ctx.modulus("lemma53")?;
    let s = ctx.s();
    let dom = Arc::new(Domain::dini_graph(omega.clone(), 1.0)?);
    let rd = RegularizedDistance::build(Arc::clone(&dom), 64, 4.0)?;
    let a = default_a(&rd);
    let mut rows = Vec::new();
    for d in [1e-2, 1e-3, 1e-4] {
        for k in 0..8 {
            let ang = std::f64::consts::PI * k as f64 / 8.0;
            let (lhs, rhs) = lemma53_integrals(&rd, &omega, &[0.0, d], &[ang.cos(), ang.sin()], s, a, 0.25)?;
            rows.push(vec![d, ang, lhs, rhs, lhs / rhs]);
        }
    }
    let cfit = max(rows.iter().map(|r| r[4]));
    let horiz: Vec<f64> = rows.iter().filter(|r| r[1] == 0.0).map(|r| r[4]).collect();
    let spread = max(horiz.iter().copied()) / min(horiz.iter().copied());
    Ok(Outcome::default()
        .check(Check::flag("lemma53.bounded", cfit.is_finite() && cfit > 0.0, format!("fitted C {cfit:.4e}")))
        .check(Check::at_most("lemma53.sharpness", spread, ctx.tol("lemma53_spread")))
        .artifact("lemma53.csv", csv(&["depth", "angle", "lhs", "rhs", "ratio"], &rows)))
}

fn solution_csv(res: &DirichletResult<f64>) -> String {
    let dim = res.grid.dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.extend(["d", "u"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = res.points.iter().zip(res.depth.iter().zip(&res.u)).map(|(x, (&d, &u))| x.iter().copied().chain([d, u]).collect()).collect();
    csv(&header, &rows)
}

fn solve(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("solve")?;
    let h = ctx.h(&dom);
    let res = ctx.solved("solve", h)?;
    let scale = ctx.f_sup(&res)?.max(1.0);
    let min_u = min(res.u.iter().copied());
    let mut out = Outcome::default().check(Check::at_most("solve.residual", res.residual / scale, ctx.tol("residual")));
    if ctx.f_nonnegative(&res)? {
        out = out.check(Check::at_least("solve.positivity", min_u, -ctx.tol("positivity")));
    }
    let diag = serde_json::json!({
        "h": h,
        "unknowns": res.u.len(),
        "residual": res.residual,
        "sup": res.sup(),
        "min": min_u,
    });
    Ok(out
        .artifact("solution.csv", solution_csv(&res))
        .artifact("solve.json", serde_json::to_string_pretty(&diag).expect("json") + "\n"))
}

fn decay_rate(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("decay_rate")?;
    let h = ctx.h(&dom);
    let mut res = (*ctx.solved("decay_rate", h)?).clone();
    let (lo, hi) = (4.0 * h, dom.diam() / 4.0);
    let (slope, cfit, label) = if ctx.analytic {
        res.u = res.depth.iter().map(|&d| d.powf(res.s)).collect();
        let (p, cc) = boundary_rate_fit(&res, lo, hi)?;
        (p, cc, "plain fit on d^s")
    } else {
        let (p, cc) = boundary_rate_fit_corrected(&res, lo, hi)?;
        (p, cc, "corrected fit")
    };
    let rows: Vec<Vec<f64>> = res.depth.iter().zip(&res.u).filter(|(&d, _)| d >= lo && d <= hi).map(|(&d, &u)| vec![d, u]).collect();
    let plot = svg_plot("u against depth", &[("u", rows.iter().map(|r| (r[0], r[1])).collect())], true, true);
    Ok(Outcome::default()
        .check(
            Check::at_most("decay_rate", (slope - res.s).abs(), ctx.tol("decay_rate"))
                .with_detail(format!("{label}: slope {slope:.4}, C {cfit:.4}, s {}, depths [{lo:.3e}, {hi:.3e}]", res.s)),
        )
        .artifact("rate.csv", csv(&["d", "u"], &rows))
        .artifact("rate.svg", plot))
}

fn hopf(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("hopf")?;
    let h = ctx.h(&dom);
    let fine = ctx.solved("hopf", h)?;
    if !ctx.f_nonnegative(&fine)? {
        return Ok(Outcome::default().check(Check::flag("hopf", false, "f takes negative values")));
    }
    if fine.sup() == 0.0 {
        return Ok(Outcome::default().check(Check::flag("hopf", true, "zero solution").diagnostic()));
    }
    let coarse = ctx.solved("hopf", 2.0 * h)?;
    let (z, dir) = boundary_probe(&dom);
    let radius = dom.diam() / 4.0;
    let m1 = hopf_margin(&fine, &z, &dir, std::f64::consts::FRAC_PI_4, radius)?;
    let m2 = hopf_margin(&coarse, &z, &dir, std::f64::consts::FRAC_PI_4, radius)?;
    let drift = (m2 / m1 - 1.0).abs();
    Ok(Outcome::default()
        .check(Check::from_margin("hopf.positive", m1, 0.0, m1).with_detail(format!("apex {z:?}, axis {dir:?}")))
        .check(Check::at_most("hopf.stability", drift, ctx.tol("refinement")).with_detail(format!("margin {m2:.4} at 2h, {m1:.4} at h"))))
}

fn linfty_bound(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("linfty_bound")?;
    let spec = ctx.spec("linfty_bound")?;
    let h = ctx.h(&dom);
    let fine = ctx.solved("linfty_bound", h)?;
    let coarse = ctx.solved("linfty_bound", 2.0 * h)?;
    let fs = ctx.f_sup(&fine)?;
    if fs == 0.0 {
        return Ok(Outcome::default().check(Check::at_most("linfty_bound.stability", fine.sup(), 0.0)));
    }
    let (r1, r2) = (linfty_ratio(&fine, &dom, fs), linfty_ratio(&coarse, &dom, fs));
    let center: Vec<f64> = dom.bounding_box().iter().map(|b| 0.5 * (b.0 + b.1)).collect();
    let ((c1, big_r, _), ok) = psi_r_supersolution(&spec, &fine, &dom, &center, fs)?;
    Ok(Outcome::default()
        .check(Check::at_most("linfty_bound.stability", (r2 / r1 - 1.0).abs(), ctx.tol("refinement")).with_detail(format!("ratio {r2:.5} at 2h, {r1:.5} at h")))
        .check(Check::flag("linfty_bound.psi_r", ok, format!("c1 {c1:.4}, R {big_r:.4}"))))
}

fn upper_barrier(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("upper_barrier")?;
    let spec = ctx.spec("upper_barrier")?;
    let res = ctx.solved("upper_barrier", ctx.h(&dom))?;
    let (z, _) = boundary_probe(&dom);
    let fs = ctx.f_sup(&res)?;
    let (k, worst) = upper_barrier_comparison(&spec, &res, &dom, &z, ctx.zeta("upper_barrier")?, fs)?;
    Ok(Outcome::default().check(Check::at_least("upper_barrier", worst, 0.0).with_detail(format!("prefactor {k:.4e}, apex {z:?}"))))
}

fn s1_limit(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("s1_limit")?;
    let grid = Grid::for_domain(&dom, ctx.h(&dom), 0)?;
    let src = ctx.source()?;
    let f = |x: &[f64]| src.eval(x).unwrap_or(f64::NAN);
    let op = ctx.cfg.operator.as_ref().ok_or_else(|| missing("an operator", "s1_limit"))?;
    // Closed form for a constant source on an interval with the uniform measure.
    let closed = match (&dom, &op.measure, &ctx.cfg.f) {
        (Domain::Interval { a, b }, stabound::config::MeasureConfig::Uniform { mass, .. }, SourceConfig::Constant { value }) => {
            Some((*a, *b, *value / *mass))
        }
        _ => None,
    };
    let exact = closed.map(|(a, b, k)| move |x: &[f64]| k * (x[0] - a) * (b - x[0]));
    let exact_ref: Option<&dyn Fn(&[f64]) -> f64> = exact.as_ref().map(|e| e as &dyn Fn(&[f64]) -> f64);
    let rows = s1_limit_compare(&|s| ctx.spec_at(s), &dom, &grid, &f, &[0.6, 0.8, 0.9, 0.95], exact_ref)?;
    let err_down = rows.windows(2).all(|w| w[1].err < w[0].err);
    let slope_up = rows.windows(2).all(|w| w[1].slope > w[0].slope);
    let table: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.s, r.err, r.slope]).collect();
    let plot = svg_plot("error against s", &[("sup error", rows.iter().map(|r| (r.s, r.err)).collect())], false, true);
    let reference = if closed.is_some() { "closed form" } else { "local limit solve" };
    Ok(Outcome::default()
        .check(Check::flag(
            "s1_limit.errors",
            err_down,
            format!("{reference}: {}", rows.iter().map(|r| format!("{:.3e}", r.err)).collect::<Vec<_>>().join(", ")),
        ))
        .check(Check::flag("s1_limit.exponents", slope_up, rows.iter().map(|r| format!("{:.3}", r.slope)).collect::<Vec<_>>().join(", ")))
        .artifact("s1_limit.csv", csv(&["s", "err", "slope"], &table))
        .artifact("s1_limit.svg", plot))
}

fn holder(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("interior_holder")?;
    let res = ctx.solved("interior_holder", ctx.h(&dom))?;
    let center: Vec<f64> = dom.bounding_box().iter().map(|b| 0.5 * (b.0 + b.1)).collect();
    let q = interior_holder(&res, &center, dom.diam() / 8.0);
    Ok(Outcome::default().check(Check::at_least("interior_holder", q, 0.0).diagnostic()))
}

fn corner_rate(ctx: &Ctx) -> Result<Outcome> {
    let dom = ctx.domain("corner_rate")?;
    if !matches!(dom, Domain::Corner { .. }) {
        return Err(missing("a corner domain", "corner_rate"));
    }
    let h = ctx.h(&dom);
    let res = ctx.solved("corner_rate", h)?;
    let (slope, _) = cone_rate_fit(&res, &[0.0, 0.0], &[-1.0, 1.0], 0.4, 2.0 * h, 0.3)?;
    let bound = res.s - ctx.tol("corner_gap");
    Ok(Outcome::default().check(Check::at_most("corner_rate", slope, bound).diagnostic()))
}
