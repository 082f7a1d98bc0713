use std::fmt::Write as _;
use std::path::Path;

use hestonvar::coercivity::{
    certify, search_feasible, CoercivityCertificate, ConstraintCheck, InfeasibilityReport, SearchOptions,
    VariationalParams,
};
use hestonvar::form::assemble;
use hestonvar::model::OptionSpec;
use hestonvar::oracle::{heston_price, mc_price};
use hestonvar::solver::{price_at, solve, SolveResult, SolverOptions, TimeGrid};
use hestonvar::wspace::{QuadratureRule, TruncatedDomain};
use hestonvar::Error;

use crate::config::RunConfig;
use crate::output::{certificate_json, fmt_num, write_file, Csv};
use crate::Failure;

/// Weights to solve with, and whether they carry a certificate.
enum Tuple {
    Certified(Box<CoercivityCertificate>),
    Uncertified { variational: VariationalParams, report: Option<Box<InfeasibilityReport>> },
}

impl Tuple {
    fn variational(&self) -> VariationalParams {
        match self {
            Tuple::Certified(c) => c.variational,
            Tuple::Uncertified { variational, .. } => *variational,
        }
    }

    fn flat_fields(&self) -> Vec<(String, String)> {
        match self {
            Tuple::Certified(c) => c.to_flat_fields(),
            Tuple::Uncertified { report: Some(r), .. } => r.to_flat_fields(),
            Tuple::Uncertified { variational: v, report: None } => vec![
                ("certified".into(), "false".into()),
                ("a".into(), fmt_num(v.a)),
                ("nu".into(), fmt_num(v.nu)),
                ("mu".into(), fmt_num(v.mu)),
                ("omega".into(), fmt_num(v.omega)),
            ],
        }
    }
}

/// Certification of an explicit tuple, or the default search.
fn certify_config(cfg: &RunConfig) -> Result<CoercivityCertificate, Error> {
    match (&cfg.variational, &cfg.epsilons, cfg.delta) {
        (Some(vp), Some(eps), Some(delta)) => certify(&cfg.model, vp, eps, delta),
        _ => search_feasible(&cfg.model, &SearchOptions::default()).map(|s| s.certificate),
    }
}

/// Certified weights when they exist, otherwise the configured or closest ones.
fn resolve_tuple(cfg: &RunConfig) -> Result<Tuple, Failure> {
    if let (Some(variational), None) = (cfg.variational, &cfg.epsilons) {
        return Ok(Tuple::Uncertified { variational, report: None });
    }
    match certify_config(cfg) {
        Ok(c) => Ok(Tuple::Certified(Box::new(c))),
        Err(Error::Infeasible(report)) => match report.closest {
            Some(t) => Ok(Tuple::Uncertified { variational: t.variational, report: Some(report) }),
            None => Err(Failure::Infeasible(report.to_string())),
        },
        Err(e) => Err(e.into()),
    }
}

fn constraint_table(checks: &[ConstraintCheck]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<14} {:<6} {:>24}  condition", "constraint", "status", "slack");
    for c in checks {
        let status = if c.satisfied { "ok" } else { "FAIL" };
        let _ = writeln!(s, "{:<14} {:<6} {:>24}  {}", c.id.as_str(), status, fmt_num(c.slack), c.id.describe());
    }
    s
}

pub fn feasibility(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    if cfg.variational.is_some() && cfg.epsilons.is_none() {
        return Err(Failure::Config(
            "feasibility needs either no variational parameters (search) or variational, epsilons and delta".into(),
        ));
    }
    match certify_config(cfg) {
        Ok(cert) => {
            write_file(out, "certificate.json", &certificate_json(&cert.to_flat_fields()))?;
            print!("{}", constraint_table(&cert.constraint_report));
            println!("certified: c1 = {}, c2 = {}", fmt_num(cert.c1), fmt_num(cert.c2));
            Ok(())
        }
        Err(Error::Infeasible(report)) => {
            write_file(out, "certificate.json", &certificate_json(&report.to_flat_fields()))?;
            print!("{}", constraint_table(&report.constraint_report));
            Err(Failure::Infeasible(report.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

struct Problem {
    dom: TruncatedDomain,
    quad: QuadratureRule,
    opts: SolverOptions,
}

impl Problem {
    fn new(dom: TruncatedDomain, cfg: &RunConfig) -> Self {
        Problem { dom, quad: QuadratureRule::default(), opts: cfg.solver.into() }
    }

    /// Solve for each option on one set of matrices.
    fn solve(
        &self,
        cfg: &RunConfig,
        vp: &VariationalParams,
        tg: &TimeGrid,
        specs: &[OptionSpec],
    ) -> Result<Vec<SolveResult>, Failure> {
        let fm = assemble(&self.dom, &self.quad, &cfg.model, vp);
        specs
            .iter()
            .map(|spec| solve(&fm, &self.dom, &self.quad, &cfg.model, vp, spec, tg, &self.opts).map_err(Failure::from))
            .collect()
    }

    /// Price at `(s0, y0)` in the caller's units.
    fn price(
        &self,
        cfg: &RunConfig,
        vp: &VariationalParams,
        sr: &SolveResult,
        spec: &OptionSpec,
    ) -> Result<f64, Failure> {
        let v = price_at(sr, &self.dom, &cfg.model, vp, spec, 1.0, cfg.y0)
            .map_err(|e| Failure::Config(format!("(s0, y0) is not priced by the domain: {e}")))?;
        finite(cfg.s0 * v, "PDE price")
    }
}

fn finite(v: f64, what: &str) -> Result<f64, Failure> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::Numerical(format!("{what} is not finite")))
    }
}

fn warn_uncertified(tuple: &Tuple) {
    match tuple {
        Tuple::Certified(_) => {}
        Tuple::Uncertified { report: Some(r), .. } => {
            eprintln!("warning: no certified weights ({r}); solving with the closest tuple found")
        }
        Tuple::Uncertified { report: None, .. } => {
            eprintln!("warning: configured weights are not certified (no epsilons and delta given)")
        }
    }
}

pub fn price(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let tuple = resolve_tuple(cfg)?;
    warn_uncertified(&tuple);
    let vp = tuple.variational();
    let spec = cfg.unit_option();
    let problem = Problem::new(cfg.domain(), cfg);
    let runs = problem.solve(cfg, &vp, &cfg.time_grid(), &[spec, spec.flipped()])?;
    let (main, other) = (&runs[0], &runs[1]);
    let pde = problem.price(cfg, &vp, main, &spec)?;
    let pde_other = problem.price(cfg, &vp, other, &spec.flipped())?;

    let analytic = heston_price(&cfg.model, &cfg.option, cfg.s0, cfg.y0)?;
    let analytic_other = heston_price(&cfg.model, &cfg.option.flipped(), cfg.s0, cfg.y0)?;
    let mc = mc_price(&cfg.model, &cfg.option, cfg.s0, cfg.y0, &cfg.mc)?;

    let (call, put) = match cfg.option.kind {
        hestonvar::model::OptionKind::Call => (pde, pde_other),
        hestonvar::model::OptionKind::Put => (pde_other, pde),
    };
    let forward = cfg.s0 - cfg.option.strike * (-cfg.model.r * cfg.option.maturity).exp();
    let parity = call - put - forward;

    let mut compare = Csv::new(&["method", "price", "std_error", "abs_diff_vs_analytic"]);
    compare.row(["pde".into(), fmt_num(pde), String::new(), fmt_num((pde - analytic).abs())]);
    compare.row(["analytic".into(), fmt_num(analytic), String::new(), fmt_num(0.0)]);
    compare.row(["mc".into(), fmt_num(mc.mean), fmt_num(mc.std_error), fmt_num((mc.mean - analytic).abs())]);
    compare.row(["pde-flipped".into(), fmt_num(pde_other), String::new(), fmt_num((pde_other - analytic_other).abs())]);
    compare.row(["parity".into(), fmt_num(parity), String::new(), fmt_num(parity.abs())]);

    let dom = &problem.dom;
    let mut surface = Csv::new(&["S", "y", "U"]);
    for i in 0..=dom.nx {
        let s = dom.x_node(i).exp();
        for j in 0..=dom.ny {
            let y = dom.y_node(j);
            let u = price_at(main, dom, &cfg.model, &vp, &spec, s, y)?;
            surface.row([fmt_num(cfg.s0 * s), fmt_num(y), fmt_num(cfg.s0 * u)]);
        }
    }

    let mut norms = Csv::new(&["t", "l2_norm"]);
    for (t, n) in main.times.iter().zip(&main.l2_norm_history) {
        norms.row([fmt_num(*t), fmt_num(*n)]);
    }

    write_file(out, "certificate.json", &certificate_json(&tuple.flat_fields()))?;
    write_file(out, "compare.csv", &compare.finish())?;
    write_file(out, "surface.csv", &surface.finish())?;
    write_file(out, "norms.csv", &norms.finish())?;

    println!("pde       {}", fmt_num(pde));
    println!("analytic  {}", fmt_num(analytic));
    println!("mc        {} (se {})", fmt_num(mc.mean), fmt_num(mc.std_error));
    println!("parity    {}", fmt_num(parity));
    Ok(())
}

pub fn mc_compare(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let analytic = heston_price(&cfg.model, &cfg.option, cfg.s0, cfg.y0)?;
    let mut compare = Csv::new(&["method", "price", "std_error", "abs_diff_vs_analytic"]);
    compare.row(["analytic".into(), fmt_num(analytic), String::new(), fmt_num(0.0)]);
    let mc = mc_price(&cfg.model, &cfg.option, cfg.s0, cfg.y0, &cfg.mc)?;
    let gap = (mc.mean - analytic).abs();
    compare.row(["mc".into(), fmt_num(mc.mean), fmt_num(mc.std_error), fmt_num(gap)]);
    write_file(out, "compare.csv", &compare.finish())?;
    println!("analytic  {}", fmt_num(analytic));
    println!(
        "mc        {} (se {}, {:.2} se from analytic)",
        fmt_num(mc.mean),
        fmt_num(mc.std_error),
        gap / mc.std_error
    );
    Ok(())
}

#[derive(Clone, Copy)]
enum Sweep {
    Nx,
    Ny,
    Nt,
    YMax,
}

impl Sweep {
    const ALL: [Sweep; 4] = [Sweep::Nx, Sweep::Ny, Sweep::Nt, Sweep::YMax];

    fn name(self) -> &'static str {
        match self {
            Sweep::Nx => "nx",
            Sweep::Ny => "ny",
            Sweep::Nt => "nt",
            Sweep::YMax => "y_max",
        }
    }

    /// Refine one axis by `factor`. Widening `y_max` keeps `hy` fixed so only
    /// the truncation changes.
    fn apply(self, dom: &TruncatedDomain, tg: &TimeGrid, factor: usize) -> (TruncatedDomain, TimeGrid) {
        let (mut d, mut t) = (*dom, *tg);
        match self {
            Sweep::Nx => d.nx *= factor,
            Sweep::Ny => d.ny *= factor,
            Sweep::Nt => t.steps *= factor,
            Sweep::YMax => {
                let hy = dom.hy();
                d.y_max = dom.a + factor as f64 * (dom.y_max - dom.a);
                d.ny = ((d.y_max - d.a) / hy).round() as usize;
            }
        }
        (d, t)
    }
}

pub const CONVERGENCE_LEVELS: usize = 3;

pub fn convergence(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let tuple = resolve_tuple(cfg)?;
    warn_uncertified(&tuple);
    let vp = tuple.variational();
    let spec = cfg.unit_option();
    let (dom, tg) = (cfg.domain(), cfg.time_grid());
    let price = |d: TruncatedDomain, t: TimeGrid| -> Result<f64, Failure> {
        let problem = Problem::new(d, cfg);
        let sr = problem.solve(cfg, &vp, &t, &[spec])?;
        problem.price(cfg, &vp, &sr[0], &spec)
    };
    let base = price(dom, tg)?;

    let mut csv = Csv::new(&["sweep", "level", "nx", "ny", "nt", "y_max", "price", "delta", "observed_order"]);
    for sweep in Sweep::ALL {
        let mut prices = vec![base];
        for level in 1..CONVERGENCE_LEVELS {
            let (d, t) = sweep.apply(&dom, &tg, 1 << level);
            prices.push(price(d, t)?);
        }
        for (level, &p) in prices.iter().enumerate() {
            let (d, t) = sweep.apply(&dom, &tg, 1 << level);
            let delta = (level > 0).then(|| (p - prices[level - 1]).abs());
            let order = (level > 1).then(|| ((prices[level - 1] - prices[level - 2]).abs() / delta.unwrap()).log2());
            csv.row([
                sweep.name().to_string(),
                level.to_string(),
                d.nx.to_string(),
                d.ny.to_string(),
                t.steps.to_string(),
                fmt_num(d.y_max),
                fmt_num(p),
                delta.map(fmt_num).unwrap_or_default(),
                order.map(fmt_num).unwrap_or_default(),
            ]);
        }
    }
    write_file(out, "convergence.csv", &csv.finish())?;
    print!("{}", csv.finish());
    Ok(())
}
