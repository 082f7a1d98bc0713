//! Galerkin assembly of the weighted form and related discrete checks.
//!
//! With `w = φ²ψ²` and `s = sign(x)` (`sign(0) = 0`) the form integrated by
//! parts is the sum of ten groups,
//!
//! ```text
//! a(u, v) = ∫ [ ½y uₓvₓ + yνs uₓv + ½σ²y u_y v_y + ½σ² u_y v + μσ²y² u_y v
//!             + 2ρσyνs u_y v + ρσy u_y vₓ − (ωρσy² − y/2 + r) uₓv
//!             − (ωσ²y² + κ(m − y)) u_y v
//!             − (½ωσ²y(ωy² + 1) + ωyκ(m − y) − r) u v ] w,
//! ```
//!
//! and `A[i][j] = a(basis_j, basis_i)`, so `a(u, v) = vᵀ A u`. The last three
//! groups are split by model coefficient ([`FormTerm`]) so single pieces can
//! be switched off.

use std::io::Write;

use rayon::prelude::*;

use crate::coercivity::{CoercivityCertificate, VariationalParams};
use crate::error::{Error, Result};
use crate::model::{HestonParams, OptionSpec};
use crate::quadrature::FixedRule;
use crate::sparse::CsrMatrix;
use crate::sum::pairwise;
use crate::wspace::{norm_parts, shape, weight_sq, CellQuadrature, DiscreteFunction, QuadratureRule, TruncatedDomain};

/// One monomial piece of the form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormTerm {
    /// `½y uₓvₓ`
    DiffusionX,
    /// `yνs uₓv`
    WeightX,
    /// `½σ²y u_y v_y`
    DiffusionY,
    /// `½σ² u_y v`
    ConstantY,
    /// `μσ²y² u_y v`
    WeightY,
    /// `2ρσyνs u_y v`
    CrossWeight,
    /// `ρσy u_y vₓ`
    Mixed,
    /// `−ωρσy² uₓv`
    DriftXOmega,
    /// `(y/2) uₓv`
    DriftXVariance,
    /// `−r uₓv`
    DriftXRate,
    /// `−ωσ²y² u_y v`
    DriftYOmega,
    /// `−κ(m − y) u_y v`
    DriftYReversion,
    /// `−½ωσ²y(ωy² + 1) u v`
    ReactionOmega,
    /// `−ωyκ(m − y) u v`
    ReactionReversion,
    /// `r u v`
    ReactionRate,
}

impl FormTerm {
    pub const ALL: [FormTerm; 15] = [
        FormTerm::DiffusionX,
        FormTerm::WeightX,
        FormTerm::DiffusionY,
        FormTerm::ConstantY,
        FormTerm::WeightY,
        FormTerm::CrossWeight,
        FormTerm::Mixed,
        FormTerm::DriftXOmega,
        FormTerm::DriftXVariance,
        FormTerm::DriftXRate,
        FormTerm::DriftYOmega,
        FormTerm::DriftYReversion,
        FormTerm::ReactionOmega,
        FormTerm::ReactionReversion,
        FormTerm::ReactionRate,
    ];

    /// Which of the ten integral groups the piece belongs to (1-based).
    pub fn group(&self) -> u8 {
        use FormTerm::*;
        match self {
            DiffusionX => 1,
            WeightX => 2,
            DiffusionY => 3,
            ConstantY => 4,
            WeightY => 5,
            CrossWeight => 6,
            Mixed => 7,
            DriftXOmega | DriftXVariance | DriftXRate => 8,
            DriftYOmega | DriftYReversion => 9,
            ReactionOmega | ReactionReversion | ReactionRate => 10,
        }
    }
}

/// Set of pieces to include, indexed like [`FormTerm::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermSet([bool; 15]);

impl TermSet {
    pub fn all() -> Self {
        TermSet([true; 15])
    }

    pub fn none() -> Self {
        TermSet([false; 15])
    }

    pub fn without(mut self, terms: &[FormTerm]) -> Self {
        for t in terms {
            self.0[Self::pos(*t)] = false;
        }
        self
    }

    pub fn with(mut self, terms: &[FormTerm]) -> Self {
        for t in terms {
            self.0[Self::pos(*t)] = true;
        }
        self
    }

    pub fn contains(&self, t: FormTerm) -> bool {
        self.0[Self::pos(t)]
    }

    fn pos(t: FormTerm) -> usize {
        FormTerm::ALL.iter().position(|x| *x == t).expect("term listed in ALL")
    }
}

/// Pointwise coefficients of `uₓvₓ, uₓv, u_y v_y, u_y v, u_y vₓ, uv`.
#[derive(Debug, Clone, Copy, Default)]
struct Coeffs {
    xx: f64,
    xv: f64,
    yy: f64,
    yv: f64,
    yx: f64,
    uv: f64,
}

fn coefficients(x: f64, y: f64, p: &HestonParams, vp: &VariationalParams, terms: &TermSet) -> Coeffs {
    let HestonParams { kappa, m, sigma, rho, r, .. } = *p;
    let VariationalParams { nu, mu, omega, .. } = *vp;
    let s = if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    };
    let s2 = sigma * sigma;
    let on = |t| terms.contains(t);
    let mut c = Coeffs::default();
    use FormTerm::*;
    if on(DiffusionX) {
        c.xx += 0.5 * y;
    }
    if on(WeightX) {
        c.xv += y * nu * s;
    }
    if on(DiffusionY) {
        c.yy += 0.5 * s2 * y;
    }
    if on(ConstantY) {
        c.yv += 0.5 * s2;
    }
    if on(WeightY) {
        c.yv += mu * s2 * y * y;
    }
    if on(CrossWeight) {
        c.yv += 2.0 * rho * sigma * y * nu * s;
    }
    if on(Mixed) {
        c.yx += rho * sigma * y;
    }
    if on(DriftXOmega) {
        c.xv -= omega * rho * sigma * y * y;
    }
    if on(DriftXVariance) {
        c.xv += 0.5 * y;
    }
    if on(DriftXRate) {
        c.xv -= r;
    }
    if on(DriftYOmega) {
        c.yv -= omega * s2 * y * y;
    }
    if on(DriftYReversion) {
        c.yv -= kappa * (m - y);
    }
    if on(ReactionOmega) {
        c.uv -= 0.5 * omega * s2 * y * (omega * y * y + 1.0);
    }
    if on(ReactionReversion) {
        c.uv -= omega * y * kappa * (m - y);
    }
    if on(ReactionRate) {
        c.uv += r;
    }
    c
}

/// Assembled stiffness-like matrix and weighted mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FormMatrices {
    pub a: CsrMatrix,
    pub mass: CsrMatrix,
    /// Weight exponents the matrices were assembled with.
    pub nu: f64,
    pub mu: f64,
}

impl FormMatrices {
    pub fn write_triplets(&self, a_out: impl Write, mass_out: impl Write) -> std::io::Result<()> {
        self.a.write_triplets(a_out)?;
        self.mass.write_triplets(mass_out)
    }
}

pub fn assemble(
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
    p: &HestonParams,
    vp: &VariationalParams,
) -> FormMatrices {
    let (a, mass) = assemble_parts(dom, quad, p, vp, &TermSet::all(), true);
    FormMatrices { a, mass: mass.expect("mass requested"), nu: vp.nu, mu: vp.mu }
}

/// Form matrix restricted to the pieces in `terms`.
pub fn assemble_terms(
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
    p: &HestonParams,
    vp: &VariationalParams,
    terms: &TermSet,
) -> CsrMatrix {
    assemble_parts(dom, quad, p, vp, terms, false).0
}

/// Weighted mass matrix `∫ basis_j basis_i φ²ψ²`.
pub fn assemble_mass(dom: &TruncatedDomain, quad: &QuadratureRule, nu: f64, mu: f64) -> CsrMatrix {
    let vp = VariationalParams { a: dom.a, nu, mu, omega: mu };
    let p = HestonParams { kappa: 0.0, m: 0.0, sigma: 0.0, rho: 0.0, r: 0.0, eta: 0.0 };
    assemble_parts(dom, quad, &p, &vp, &TermSet::none(), true).1.expect("mass requested")
}

fn assemble_parts(
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
    p: &HestonParams,
    vp: &VariationalParams,
    terms: &TermSet,
    with_mass: bool,
) -> (CsrMatrix, Option<CsrMatrix>) {
    let cq = CellQuadrature::new(quad);
    let (hx, hy) = (dom.hx(), dom.hy());
    let area = hx * hy;
    type Trip = Vec<(usize, usize, f64)>;
    let rows: Vec<(Trip, Trip)> = (0..dom.ny)
        .into_par_iter()
        .map(|cj| {
            let mut ta = Vec::with_capacity(dom.nx * 16);
            let mut tm = Vec::with_capacity(if with_mass { dom.nx * 16 } else { 0 });
            for ci in 0..dom.nx {
                let nodes =
                    [dom.index(ci, cj), dom.index(ci + 1, cj), dom.index(ci, cj + 1), dom.index(ci + 1, cj + 1)];
                if nodes.iter().all(Option::is_none) {
                    continue;
                }
                let (x0, y0) = (dom.x_node(ci), dom.y_node(cj));
                let mut la = [[0.0; 4]; 4];
                let mut lm = [[0.0; 4]; 4];
                for k in 0..cq.w.len() {
                    let (sx, sy) = (cq.sx[k], cq.sy[k]);
                    let (x, y) = (x0 + sx * hx, y0 + sy * hy);
                    let (n, gx, gy) = shape(sx, sy, hx, hy);
                    let w = cq.w[k] * area * weight_sq(x, y, vp.nu, vp.mu);
                    let c = coefficients(x, y, p, vp, terms);
                    // test index `t`, trial index `b`
                    for t in 0..4 {
                        for b in 0..4 {
                            la[t][b] += w
                                * (c.xx * gx[b] * gx[t]
                                    + c.xv * gx[b] * n[t]
                                    + c.yy * gy[b] * gy[t]
                                    + c.yv * gy[b] * n[t]
                                    + c.yx * gy[b] * gx[t]
                                    + c.uv * n[b] * n[t]);
                            if with_mass {
                                lm[t][b] += w * n[b] * n[t];
                            }
                        }
                    }
                }
                for t in 0..4 {
                    let Some(i) = nodes[t] else { continue };
                    for b in 0..4 {
                        let Some(j) = nodes[b] else { continue };
                        ta.push((i, j, la[t][b]));
                        if with_mass {
                            tm.push((i, j, lm[t][b]));
                        }
                    }
                }
            }
            (ta, tm)
        })
        .collect();
    let n = dom.n_interior();
    let ta: Trip = rows.iter().flat_map(|r| r.0.iter().copied()).collect();
    let a = CsrMatrix::from_triplets(n, &ta);
    let mass = with_mass.then(|| {
        let tm: Trip = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
        CsrMatrix::from_triplets(n, &tm)
    });
    (a, mass)
}

/// Position of the line source at forward time `t`: `x* = ln K − rt`.
pub fn source_line(t: f64, p: &HestonParams, spec: &OptionSpec) -> f64 {
    spec.strike.ln() - p.r * t
}

/// Load vector of `F(t, y) = (K/2) y e^{−rt} e^{−ωy²/2} δ(x − x*)` against
/// every basis function, weighted with `φ²ψ²`.
pub fn dirac_source(
    t: f64,
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
    p: &HestonParams,
    vp: &VariationalParams,
    spec: &OptionSpec,
) -> Vec<f64> {
    let mut load = vec![0.0; dom.n_interior()];
    let xs = source_line(t, p, spec);
    let Some((ci, sx)) = dom.locate_x(xs) else {
        return load;
    };
    let scale = 0.5 * spec.strike * (-p.r * t).exp() * (2.0 * vp.nu * xs.abs()).exp();
    let hy = dom.hy();
    let hat_x = [1.0 - sx, sx];
    for cj in 0..dom.ny {
        let y0 = dom.y_node(cj);
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (s, w) in quad.nodes().iter().zip(quad.weights()) {
            let y = y0 + s * hy;
            let g = w * hy * y * ((vp.mu - 0.5 * vp.omega) * y * y).exp();
            lo += g * (1.0 - s);
            hi += g * s;
        }
        for (di, hx) in hat_x.iter().enumerate() {
            if let Some(k) = dom.index(ci + di, cj) {
                load[k] += scale * hx * lo;
            }
            if let Some(k) = dom.index(ci + di, cj + 1) {
                load[k] += scale * hx * hi;
            }
        }
    }
    load
}

/// A smooth function with analytic first derivatives.
pub trait SmoothField {
    fn value(&self, x: f64, y: f64) -> f64;
    fn dx(&self, x: f64, y: f64) -> f64;
    fn dy(&self, x: f64, y: f64) -> f64;
}

/// `amp · exp(−½((x−x0)/sx)² − ½((y−y0)/sy)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub x0: f64,
    pub y0: f64,
    pub sx: f64,
    pub sy: f64,
    pub amp: f64,
}

impl SmoothField for GaussianBump {
    fn value(&self, x: f64, y: f64) -> f64 {
        let (u, v) = ((x - self.x0) / self.sx, (y - self.y0) / self.sy);
        self.amp * (-0.5 * (u * u + v * v)).exp()
    }

    fn dx(&self, x: f64, y: f64) -> f64 {
        -(x - self.x0) / (self.sx * self.sx) * self.value(x, y)
    }

    fn dy(&self, x: f64, y: f64) -> f64 {
        -(y - self.y0) / (self.sy * self.sy) * self.value(x, y)
    }
}

impl SmoothField for f64 {
    fn value(&self, _: f64, _: f64) -> f64 {
        *self
    }
    fn dx(&self, _: f64, _: f64) -> f64 {
        0.0
    }
    fn dy(&self, _: f64, _: f64) -> f64 {
        0.0
    }
}

/// Absolute residuals of the three `y`-moment identities and the magnitude
/// of their largest term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpResiduals {
    pub residual: [f64; 3],
    pub scale: [f64; 3],
}

impl IbpResiduals {
    pub fn relative(&self) -> [f64; 3] {
        std::array::from_fn(|k| if self.scale[k] == 0.0 { self.residual[k] } else { self.residual[k] / self.scale[k] })
    }
}

/// Tensor Gauss–Legendre integral of `g(x, y)·φ²ψ²` over the domain cells.
fn weighted_integral(
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
    nu: f64,
    mu: f64,
    g: impl Fn(f64, f64) -> f64,
) -> f64 {
    let cq = CellQuadrature::new(quad);
    let (hx, hy) = (dom.hx(), dom.hy());
    let mut cells = Vec::with_capacity(dom.nx * dom.ny);
    for cj in 0..dom.ny {
        for ci in 0..dom.nx {
            let (x0, y0) = (dom.x_node(ci), dom.y_node(cj));
            let mut s = 0.0;
            for k in 0..cq.w.len() {
                let (x, y) = (x0 + cq.sx[k] * hx, y0 + cq.sy[k] * hy);
                s += cq.w[k] * g(x, y) * weight_sq(x, y, nu, mu);
            }
            cells.push(s * hx * hy);
        }
    }
    pairwise(&cells)
}

/// Checks, by quadrature, that for fields vanishing on the boundary
///
/// ```text
/// ∫ y  uv w = −(1/2μ)(∫ u_y v w + ∫ u v_y w)
/// ∫ y² uv w = −(1/2μ)(∫ y u_y v w + ∫ y v_y u w + ∫ uv w)
/// ∫ y³ uv w = −(1/2μ)(2∫ y uv w + ∫ y² u_y v w + ∫ y² v_y u w)
/// ```
///
/// which follow from `∂_y ψ² = 2μyψ²`.
pub fn check_ibp_identities(
    u: &dyn SmoothField,
    v: &dyn SmoothField,
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
    nu: f64,
    mu: f64,
) -> IbpResiduals {
    let int = |g: &dyn Fn(f64, f64) -> f64| weighted_integral(dom, quad, nu, mu, g);
    let uv = |x, y| u.value(x, y) * v.value(x, y);
    let uyv = |x, y| u.dy(x, y) * v.value(x, y);
    let uvy = |x, y| u.value(x, y) * v.dy(x, y);

    let i_uv = int(&uv);
    let i_yuv = int(&|x, y| y * uv(x, y));
    let i_y2uv = int(&|x, y| y * y * uv(x, y));
    let i_y3uv = int(&|x, y| y * y * y * uv(x, y));
    let i_uyv = int(&uyv);
    let i_uvy = int(&uvy);
    let i_yuyv = int(&|x, y| y * uyv(x, y));
    let i_yuvy = int(&|x, y| y * uvy(x, y));
    let i_y2uyv = int(&|x, y| y * y * uyv(x, y));
    let i_y2uvy = int(&|x, y| y * y * uvy(x, y));

    let k = -0.5 / mu;
    let rhs = [k * (i_uyv + i_uvy), k * (i_yuyv + i_yuvy + i_uv), k * (2.0 * i_yuv + i_y2uyv + i_y2uvy)];
    let lhs = [i_yuv, i_y2uv, i_y3uv];
    let scale = [[i_yuv, k * i_uyv, k * i_uvy], [i_y2uv, k * i_yuyv, k * i_yuvy], [i_y3uv, k * i_y2uyv, k * i_y2uvy]]
        .map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut residual = [0.0; 3];
    for i in 0..3 {
        residual[i] = (lhs[i] - rhs[i]).abs();
    }
    IbpResiduals { residual, scale }
}

/// `(‖y^{3/2}v‖, ‖√y ∂_y v‖/μ)`; the first never exceeds the second for
/// fields vanishing at the `y` edges.
pub fn y32_bound(v: &dyn SmoothField, dom: &TruncatedDomain, quad: &QuadratureRule, nu: f64, mu: f64) -> (f64, f64) {
    let lhs = weighted_integral(dom, quad, nu, mu, |x, y| y.powi(3) * v.value(x, y).powi(2));
    let rhs = weighted_integral(dom, quad, nu, mu, |x, y| y * v.dy(x, y).powi(2));
    (lhs.sqrt(), rhs.sqrt() / mu)
}

/// `Re a(v, v) − c₁‖v‖²_V − c₂‖v‖²`; nonnegative whenever the certificate holds.
pub fn garding_residual(
    v: &DiscreteFunction,
    fm: &FormMatrices,
    cert: &CoercivityCertificate,
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
) -> f64 {
    garding_residual_with(v, fm, cert.c1, cert.c2, dom, quad)
}

/// [`garding_residual`] for explicit constants.
pub fn garding_residual_with(
    v: &DiscreteFunction,
    fm: &FormMatrices,
    c1: f64,
    c2: f64,
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
) -> f64 {
    let parts = norm_parts(v, dom, quad, fm.nu, fm.mu);
    let form = fm.a.bilinear(v.values(), v.values());
    form - c1 * parts.v_norm_sq() - c2 * parts.l2_sq
}

/// `|a(u, v)| / (‖u‖_V ‖v‖_V)`.
pub fn continuity_ratio(
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    fm: &FormMatrices,
    dom: &TruncatedDomain,
    quad: &QuadratureRule,
) -> Result<f64> {
    let nu_ = crate::wspace::v_norm(u, dom, quad, fm.nu, fm.mu);
    let nv = crate::wspace::v_norm(v, dom, quad, fm.nu, fm.mu);
    if nu_ == 0.0 || nv == 0.0 {
        return Err(Error::invalid("continuity ratio needs nonzero u and v"));
    }
    Ok(fm.a.bilinear(u.values(), v.values()).abs() / (nu_ * nv))
}

/// Explicit continuity constant `M̂` with `|a(u, v)| ≤ M̂ ‖u‖_V ‖v‖_V` on
/// functions vanishing on the truncated boundary.
///
/// Built term by term from `‖∂v‖ ≤ a^{-1/2}‖√y ∂v‖`,
/// `‖y^{3/2}v‖ ≤ μ⁻¹‖√y ∂_y v‖` and `‖√y v‖ ≤ k‖v‖_V` with
/// `k = min{(μ√a)^{-1/2}, √y_max}`.
pub fn continuity_bound(p: &HestonParams, vp: &VariationalParams, dom: &TruncatedDomain) -> f64 {
    let HestonParams { kappa, m, sigma, r, .. } = *p;
    let rho = p.rho.abs();
    let VariationalParams { nu, mu, omega, .. } = *vp;
    let s2 = sigma * sigma;
    let ia = 1.0 / dom.a.sqrt();
    let k = (1.0 / (mu * dom.a.sqrt()).sqrt()).min(dom.y_max.sqrt());
    let terms = [
        0.5,
        nu * k,
        0.5 * s2,
        0.5 * s2 * ia,
        s2,
        2.0 * rho * sigma * nu * k,
        rho * sigma,
        omega * rho * sigma / mu + 0.5 * k + r * ia,
        omega * s2 / mu + kappa * m * ia + kappa * k,
        0.5 * omega * omega * s2 / (mu * mu)
            + (0.5 * omega * s2 + omega * kappa * m) * k * k
            + omega * kappa * k / mu
            + r,
    ];
    terms.iter().sum()
}

/// Weighted integral of the line-source density along `x = x*`, using the
/// interior partition of unity; an independent check of [`dirac_source`].
pub fn source_mass(t: f64, dom: &TruncatedDomain, p: &HestonParams, vp: &VariationalParams, spec: &OptionSpec) -> f64 {
    let xs = source_line(t, p, spec);
    if !(dom.x_min..=dom.x_max).contains(&xs) {
        return 0.0;
    }
    let rule = FixedRule::new(20);
    let (hy, y1, yn) = (dom.hy(), dom.y_node(1), dom.y_node(dom.ny - 1));
    let dens = |y: f64| y * ((vp.mu - 0.5 * vp.omega) * y * y).exp();
    let mut total = rule.integrate(dom.a, y1, |y| dens(y) * (y - dom.a) / hy)
        + rule.integrate(yn, dom.y_max, |y| dens(y) * (dom.y_max - y) / hy);
    if dom.ny > 2 {
        total += rule.integrate(y1, yn, dens);
    }
    // x-direction partition of unity fails only next to the x edges
    let x_pu = match dom.locate_x(xs) {
        Some((0, s)) => s,
        Some((c, s)) if c == dom.nx - 1 => 1.0 - s,
        _ => 1.0,
    };
    0.5 * spec.strike * (-p.r * t).exp() * (2.0 * vp.nu * xs.abs()).exp() * total * x_pu
}

#[cfg(test)]
mod tests;
