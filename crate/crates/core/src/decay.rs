//! Strip decay machinery and time-continuity measurements.
//!
//! For a run with chart rows w(t,x), z(t,x) and a built family, this module
//! measures, per strip [ℓ, ℓ+r] of the first Riemann invariant,
//!   g^{r,ℓ} = clamp(w − ℓ, 0, r),   ∬ (g^{r,ℓ})⁴ dx dt,
//! the superlevel measure 𝓛²({w ≥ ℓ+r}), and the interaction functional
//!   Q(t) = ∬∬ 1_{ξ′≤ξ} 1_{x≤x′} (ξ−ξ′) χ^{r,ℓ}(t,x,ξ) χ^{r,ℓ}(t,x′,ξ′),
//! then chains strips over a half-overlapping ladder ℓᵢ = ŵ + i·r/2 with the
//! pointwise Markov conversion 1_{w ≥ ℓᵢ+r} ≤ (16/r⁴)(g^{r,ℓᵢ₊₁})⁴, which is
//! exact for the discrete fields because superlevel and g⁴ share one
//! quadrature (trapezoid in t over snapshots × dx). Four passes cover the
//! positive and negative parts of both invariants; the downward passes use
//! the mirrored cuts χ̃, υ̃ with reversed comparisons rather than reflected
//! coordinates. The assembled bound controls ∬|u−û|⁴ against l1 + l1².
//!
//! Q is contracted in O(Nx·Nξ) per snapshot with cumulative ξ-moments and a
//! suffix sum over x′; a brute-force quadruple sum is kept as an oracle.

use crate::entropy::KineticFamily;
use crate::error::{Error, Result};
use crate::grid::trapezoid_weights_irregular;
use crate::kinetic::{sample_kinetic_field, KineticField};
use crate::system::SystemSpec;
use crate::viscous::{InitialData, ViscousRun};
use rayon::prelude::*;

/// g^{r,ℓ}(tₙ, xⱼ) rows over the snapshot record.
#[derive(Debug, Clone)]
pub struct GField {
    pub r: f64,
    pub ell: f64,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub dx: f64,
    pub rows: Vec<Vec<f64>>,
}

/// Pointwise clamp of the first invariant: 0 below ℓ, w − ℓ on [ℓ, ℓ+r],
/// r above.
pub fn g_field(run: &ViscousRun, r: f64, ell: f64) -> Result<GField> {
    if !(r > 0.0) {
        return Err(Error::config("strip width must be positive"));
    }
    if ell < run.w_hat - 1e-12 {
        return Err(Error::config(format!(
            "strip level {ell} below the reference w = {}",
            run.w_hat
        )));
    }
    if run.snapshots.is_empty() {
        return Err(Error::config("run has no recorded snapshots"));
    }
    Ok(GField {
        r,
        ell,
        times: run.snapshots.iter().map(|s| s.t).collect(),
        xs: run.xs(),
        dx: run.dx,
        rows: run
            .snapshots
            .iter()
            .map(|s| s.w.iter().map(|&w| (w - ell).clamp(0.0, r)).collect())
            .collect(),
    })
}

/// Space-time measure of a superlevel set of w, on the run window.
#[derive(Debug, Clone)]
pub struct SuperlevelMeasure {
    /// Trapezoid-in-t × dx cell measure of {w ≥ threshold} up to T.
    pub value: f64,
    /// Per snapshot (t, 𝓛¹({x : w(t,x) ≥ threshold})).
    pub per_snapshot: Vec<(f64, f64)>,
    /// Slice size at the final time; the tail beyond T is at most this rate
    /// per unit time while the energy stays below its initial value.
    pub final_slice_l1: f64,
}

pub fn superlevel_measure(run: &ViscousRun, threshold: f64) -> Result<SuperlevelMeasure> {
    if run.snapshots.is_empty() {
        return Err(Error::config("run has no recorded snapshots"));
    }
    if threshold < run.w_hat - 1e-12 {
        return Err(Error::config("threshold below the reference w"));
    }
    let times: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
    let wt = trapezoid_weights_irregular(&times);
    let per: Vec<(f64, f64)> = run
        .snapshots
        .iter()
        .map(|s| (s.t, run.dx * s.w.iter().filter(|&&w| w >= threshold).count() as f64))
        .collect();
    let value = per.iter().zip(wt.iter()).map(|(&(_, l), &w)| w * l).sum();
    Ok(SuperlevelMeasure {
        value,
        final_slice_l1: per.last().map(|&(_, l)| l).unwrap_or(0.0),
        per_snapshot: per,
    })
}

/// Energy lower bound on states above a w-threshold: the smallest shifted
/// entropy among rectangle states with w ≥ threshold. The superlevel slice
/// at any time is at most ∫E dx divided by this.
pub fn superlevel_tail_rate(sys: &SystemSpec, run: &ViscousRun, threshold: f64) -> Result<f64> {
    let rect = sys.rect();
    if threshold <= run.w_hat || threshold > rect.w_max + 1e-12 {
        return Err(Error::config("threshold must lie in (ŵ, w̄]"));
    }
    let n = 96;
    let mut m = f64::INFINITY;
    for i in 0..=n {
        let w = rect.w_min + rect.w_span() * i as f64 / n as f64;
        if w < threshold {
            continue;
        }
        for k in 0..=n {
            let z = rect.z_min + rect.z_span() * k as f64 / n as f64;
            let u = sys.riemann_inverse(w, z);
            m = m.min(sys.entropy_shifted(u, run.u_hat));
        }
    }
    if !(m > 0.0) {
        return Err(Error::numerical("degenerate entropy floor on the superlevel set"));
    }
    let e_end = run.snapshots.last().map(|s| s.entropy_total).unwrap_or(0.0);
    Ok(e_end / m)
}

/// Fast interaction contraction: per x′ the cumulative ξ-moments
/// M₀(x′,ξ) = Σ_{ξ′≤ξ} χ dξ′ and M₁ = Σ_{ξ′≤ξ} ξ′χ dξ′ are suffix-summed
/// over x′ ≥ x and contracted with χ(x,ξ)·(ξM₀ − M₁).
fn fast_q(nx: usize, levels: &[f64], dx: f64, chi: &dyn Fn(usize, usize) -> f64) -> f64 {
    let nlev = levels.len();
    let dxi = levels[1] - levels[0];
    let mut acc0 = vec![0.0; nlev];
    let mut acc1 = vec![0.0; nlev];
    let mut row = vec![0.0; nlev];
    let mut q = 0.0;
    for j in (0..nx).rev() {
        for k in 0..nlev {
            row[k] = chi(j, k);
        }
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        for k in 0..nlev {
            m0 += row[k] * dxi;
            m1 += levels[k] * row[k] * dxi;
            acc0[k] += m0 * dx;
            acc1[k] += m1 * dx;
            q += row[k] * dxi * dx * (levels[k] * acc0[k] - acc1[k]);
        }
    }
    q
}

/// Direct quadruple sum with the same inclusion conventions (x ≤ x′ and
/// ξ′ ≤ ξ both closed); the oracle for `fast_q`.
fn brute_q(nx: usize, levels: &[f64], dx: f64, chi: &dyn Fn(usize, usize) -> f64) -> f64 {
    let nlev = levels.len();
    let dxi = levels[1] - levels[0];
    let vals: Vec<Vec<f64>> =
        (0..nx).map(|j| (0..nlev).map(|k| chi(j, k)).collect()).collect();
    let mut q = 0.0;
    for j in 0..nx {
        for jp in j..nx {
            for k in 0..nlev {
                for kp in 0..=k {
                    q += (levels[k] - levels[kp])
                        * vals[j][k]
                        * vals[jp][kp]
                        * dx
                        * dx
                        * dxi
                        * dxi;
                }
            }
        }
    }
    q
}

fn open_strip(level: f64, ell: f64, r: f64) -> bool {
    level > ell && level < ell + r
}

fn check_strip(field: &KineticField, r: f64, ell: f64) -> Result<()> {
    let levels: &[f64] = &field.fam.xi_nodes;
    let w_bar = levels[levels.len() - 1];
    if !(r > 0.0) {
        return Err(Error::config("strip width must be positive"));
    }
    if ell < field.w_hat - 1e-12 || ell + r > w_bar + 1e-12 {
        return Err(Error::config(format!(
            "strip [{ell}, {}] outside [ŵ, w̄] = [{}, {w_bar}]",
            ell + r,
            field.w_hat
        )));
    }
    Ok(())
}

/// Q(t) of the first-family strip density χ^{r,ℓ} = χ_u·1_{ℓ<ξ<ℓ+r} at one
/// snapshot, via the O(Nx·Nξ) contraction.
pub fn interaction_functional(
    field: &KineticField,
    r: f64,
    ell: f64,
    snap: usize,
) -> Result<f64> {
    check_strip(field, r, ell)?;
    if snap >= field.times.len() {
        return Err(Error::config("snapshot index out of range"));
    }
    let levels: &[f64] = &field.fam.xi_nodes;
    let chi = |j: usize, k: usize| {
        if open_strip(levels[k], ell, r) {
            field.fam.chi(k, field.w[snap][j], field.z[snap][j])
        } else {
            0.0
        }
    };
    Ok(fast_q(field.xs.len(), levels, field.dx, &chi))
}

/// Brute-force counterpart of `interaction_functional`, identical
/// conventions; O((Nx·Nξ)²).
pub fn interaction_functional_direct(
    field: &KineticField,
    r: f64,
    ell: f64,
    snap: usize,
) -> Result<f64> {
    check_strip(field, r, ell)?;
    if snap >= field.times.len() {
        return Err(Error::config("snapshot index out of range"));
    }
    let levels: &[f64] = &field.fam.xi_nodes;
    let chi = |j: usize, k: usize| {
        if open_strip(levels[k], ell, r) {
            field.fam.chi(k, field.w[snap][j], field.z[snap][j])
        } else {
            0.0
        }
    };
    Ok(brute_q(field.xs.len(), levels, field.dx, &chi))
}

/// Unweighted variant of `interaction_functional`: the (ξ − ξ′) weight is
/// replaced by 1, so Q counts ordered pairs without crossing speed. An
/// exploration diagnostic only; nothing in the decay chain consumes it.
pub fn interaction_functional_unweighted(
    field: &KineticField,
    r: f64,
    ell: f64,
    snap: usize,
) -> Result<f64> {
    check_strip(field, r, ell)?;
    if snap >= field.times.len() {
        return Err(Error::config("snapshot index out of range"));
    }
    let levels: &[f64] = &field.fam.xi_nodes;
    let nlev = levels.len();
    let dxi = levels[1] - levels[0];
    let dx = field.dx;
    let mut acc0 = vec![0.0; nlev];
    let mut row = vec![0.0; nlev];
    let mut q = 0.0;
    for j in (0..field.xs.len()).rev() {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = if open_strip(levels[k], ell, r) {
                field.fam.chi(k, field.w[snap][j], field.z[snap][j])
            } else {
                0.0
            };
        }
        let mut m0 = 0.0;
        for k in 0..nlev {
            m0 += row[k] * dxi;
            acc0[k] += m0 * dx;
            q += row[k] * dxi * dx * acc0[k];
        }
    }
    Ok(q)
}

/// Which monotone pass a strip report belongs to: positive/negative part of
/// the first invariant, then of the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripPass {
    WUp,
    WDown,
    ZUp,
    ZDown,
}

/// Per-strip decay diagnostics. In the effective coordinate y of the pass
/// (w, −w, z or −z) the strip is [ell, ell+r]; `lo`/`hi` give the interval
/// in the original invariant.
#[derive(Debug, Clone)]
pub struct StripReport {
    pub pass: StripPass,
    pub r: f64,
    pub ell: f64,
    pub lo: f64,
    pub hi: f64,
    pub g4_integral: f64,
    /// 𝓛²({y ≥ ell + r}) with the shared quadrature weights.
    pub superlevel: f64,
    /// Q at every snapshot.
    pub q_trace: Vec<(f64, f64)>,
    /// Smallest constant with g4 ≤ c·(l1 + l1²) + c·superlevel.
    pub c_emp: f64,
    pub bound_rhs: f64,
    /// Q(T) − Q(0) + c_mono·∬g⁴ (should be ≲ 0 plus influx budget).
    pub q_balance_lhs: f64,
    /// Measured superlevel ≤ (16/r⁴)·g4 of the next strip up; None when the
    /// strip was checked standalone.
    pub markov_ok: Option<bool>,
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

struct PassData {
    /// Effective rows y(tₙ, xⱼ): w, −w, z, or −z.
    y: Vec<Vec<f64>>,
    /// Increasing effective levels.
    levels: Vec<f64>,
    y_hat: f64,
    y_bar: f64,
    c_mono: f64,
    r_bar: f64,
    spacing: f64,
}

fn pass_data(field: &KineticField, pass: StripPass) -> PassData {
    let first = matches!(pass, StripPass::WUp | StripPass::WDown);
    let up = matches!(pass, StripPass::WUp | StripPass::ZUp);
    let base: &Vec<Vec<f64>> = if first { &field.w } else { &field.z };
    let nodes: &[f64] =
        if first { &field.fam.xi_nodes } else { &field.fam.zeta_nodes };
    let consts =
        if first { &field.fam.constants } else { &field.fam.constants_second };
    let hat = if first { field.w_hat } else { field.z_hat };
    let top = nodes[nodes.len() - 1];
    let bot = nodes[0];
    if up {
        PassData {
            y: base.clone(),
            levels: nodes.to_vec(),
            y_hat: hat,
            y_bar: top,
            c_mono: consts.c_mono,
            r_bar: consts.r_bar,
            spacing: nodes[1] - nodes[0],
        }
    } else {
        PassData {
            y: base.iter().map(|row| row.iter().map(|&v| -v).collect()).collect(),
            levels: nodes.iter().rev().map(|&v| -v).collect(),
            y_hat: -hat,
            y_bar: -bot,
            c_mono: consts.c_mono,
            r_bar: consts.r_bar,
            spacing: nodes[1] - nodes[0],
        }
    }
}

/// Strip density value in the effective coordinate: the cut table value
/// times the open strip indicator on the matching original level.
fn eff_chi(field: &KineticField, pass: StripPass, it: usize, j: usize, k: usize) -> f64 {
    let (w, z) = (field.w[it][j], field.z[it][j]);
    let n1 = field.fam.xi_nodes.len();
    let n2 = field.fam.zeta_nodes.len();
    match pass {
        StripPass::WUp => field.fam.chi(k, w, z),
        StripPass::WDown => field.fam.chi_tilde(n1 - 1 - k, w, z),
        StripPass::ZUp => field.fam.upsilon(k, w, z),
        StripPass::ZDown => field.fam.upsilon_tilde(n2 - 1 - k, w, z),
    }
}

fn strip_report_generic(
    field: &KineticField,
    pd: &PassData,
    pass: StripPass,
    r: f64,
    ell: f64,
    l1: f64,
    wt: &[f64],
) -> StripReport {
    let nx = field.xs.len();
    let dx = field.dx;
    let mut g4 = 0.0;
    let mut sup = 0.0;
    for (it, rows) in pd.y.iter().enumerate() {
        let mut g4_row = 0.0;
        let mut sup_row = 0.0;
        for &y in rows.iter() {
            let g = (y - ell).clamp(0.0, r);
            g4_row += g * g * g * g;
            if y >= ell + r {
                sup_row += 1.0;
            }
        }
        g4 += wt[it] * dx * g4_row;
        sup += wt[it] * dx * sup_row;
    }
    let q_trace: Vec<(f64, f64)> = field
        .times
        .par_iter()
        .enumerate()
        .map(|(it, &t)| {
            let chi = |j: usize, k: usize| {
                if open_strip(pd.levels[k], ell, r) {
                    eff_chi(field, pass, it, j, k)
                } else {
                    0.0
                }
            };
            (t, fast_q(nx, &pd.levels, dx, &chi))
        })
        .collect();
    let c_emp = ratio_or_zero(g4, l1 + l1 * l1 + sup);
    let q0 = q_trace.first().map(|&(_, q)| q).unwrap_or(0.0);
    let q1 = q_trace.last().map(|&(_, q)| q).unwrap_or(0.0);
    let (lo, hi) = match pass {
        StripPass::WUp | StripPass::ZUp => (ell, ell + r),
        _ => (-(ell + r), -ell),
    };
    StripReport {
        pass,
        r,
        ell,
        lo,
        hi,
        g4_integral: g4,
        superlevel: sup,
        q_trace,
        c_emp,
        bound_rhs: c_emp * (l1 + l1 * l1) + c_emp * sup,
        q_balance_lhs: q1 - q0 + pd.c_mono * g4,
        markov_ok: None,
    }
}

/// Single-strip decay check for the first family (upward pass).
pub fn strip_decay_check(
    run: &ViscousRun,
    fam: &KineticFamily,
    r: f64,
    ell: f64,
    data: &InitialData,
) -> Result<StripReport> {
    if (data.w_ref - run.w_hat).abs() > 1e-12 {
        return Err(Error::config("initial data reference disagrees with the run"));
    }
    let field = sample_kinetic_field(fam, run)?;
    check_strip(&field, r, ell)?;
    if r > fam.constants.r_bar + 1e-12 {
        return Err(Error::config(format!(
            "strip width {r} exceeds r_bar {}",
            fam.constants.r_bar
        )));
    }
    let pd = pass_data(&field, StripPass::WUp);
    let wt = trapezoid_weights_irregular(&field.times);
    Ok(strip_report_generic(&field, &pd, StripPass::WUp, r, ell, run.l1_norm, &wt))
}

/// Half-overlapping strip ladder: k = ⌈span/r̄⌉, r = span/k, ℓᵢ = ŷ + i·r/2
/// for i = 0..2(k−1); the top strip ends exactly at ȳ.
pub fn strip_ladder(y_hat: f64, y_bar: f64, r_bar: f64) -> Result<(usize, f64, Vec<f64>)> {
    let span = y_bar - y_hat;
    if !(span > 0.0) {
        return Err(Error::config("empty invariant span"));
    }
    if !(r_bar > 0.0) {
        return Err(Error::config("r_bar must be positive"));
    }
    let k = (span / r_bar).ceil().max(1.0) as usize;
    let r = span / k as f64;
    let levels: Vec<f64> =
        (0..=2 * (k - 1)).map(|i| y_hat + i as f64 * r * 0.5).collect();
    Ok((k, r, levels))
}

/// Per-pass iteration summary.
#[derive(Debug, Clone)]
pub struct PassSummary {
    pub pass: StripPass,
    pub k: usize,
    pub r: f64,
    pub span: f64,
    /// Chained bound on ∬([y − ŷ]⁺)⁴.
    pub bound: f64,
    /// All measured superlevels obeyed the Markov conversion.
    pub markov_ok: bool,
}

/// Full decay report: strip ladder over both invariants, both signs.
#[derive(Debug, Clone)]
pub struct DecayReport {
    /// First-family upward iteration parameters.
    pub k: usize,
    pub r: f64,
    /// Strips of all four passes, ascending level order within each pass.
    pub strips: Vec<StripReport>,
    pub passes: Vec<PassSummary>,
    /// ∬ |u − û|⁴ dx dt over the run window.
    pub l4_integral: f64,
    pub l1_norm: f64,
    /// l4_integral / (l1 + l1²).
    pub ratio: f64,
    /// Assembled right-hand side: 8·Lip⁴·Σ pass bounds.
    pub chain_bound: f64,
    pub chain_c_emp: f64,
    /// Largest observed |u−û| / (|w−ŵ| + |z−ẑ|).
    pub chart_lip: f64,
    /// ω(τ) curves (filled by the pipeline when requested).
    pub modulus: Vec<ModulusCurve>,
}

/// Run the four strip passes and chain the bounds top-down.
pub fn iterate_strips(
    run: &ViscousRun,
    fam: &KineticFamily,
    data: &InitialData,
) -> Result<DecayReport> {
    if (data.w_ref - run.w_hat).abs() > 1e-12 {
        return Err(Error::config("initial data reference disagrees with the run"));
    }
    let field = sample_kinetic_field(fam, run)?;
    let wt = trapezoid_weights_irregular(&field.times);
    let l1 = run.l1_norm;

    let mut strips = Vec::new();
    let mut passes = Vec::new();
    let mut first_kr = (0usize, 0.0f64);
    for pass in [StripPass::WUp, StripPass::WDown, StripPass::ZUp, StripPass::ZDown] {
        let pd = pass_data(&field, pass);
        let (k, r, levels) = strip_ladder(pd.y_hat, pd.y_bar, pd.r_bar)?;
        if pass == StripPass::WUp {
            first_kr = (k, r);
        }
        let cover = levels[levels.len() - 1] + r - pd.y_bar;
        if cover.abs() > 1e-12 * (1.0 + pd.y_bar.abs()) {
            return Err(Error::invariant(format!(
                "strip ladder fails to cover the span exactly: defect {cover:.3e}"
            )));
        }
        if r < 4.0 * pd.spacing {
            return Err(Error::config(format!(
                "strip width {r:.6} covers fewer than 4 level cells (spacing {:.6}); \
                 rebuild the family with more levels",
                pd.spacing
            )));
        }
        // Top-down: measure every strip, then chain.
        let mut reports: Vec<StripReport> = levels
            .par_iter()
            .map(|&ell| strip_report_generic(&field, &pd, pass, r, ell, l1, &wt))
            .collect();
        let n = reports.len();
        let markov_factor = 16.0 / (r * r * r * r);
        let mut chain = vec![0.0f64; n];
        let mut markov_all = true;
        for i in (0..n).rev() {
            let (slack, converted) = if i + 1 < n {
                let g4_up = reports[i + 1].g4_integral;
                let ok = reports[i].superlevel <= markov_factor * g4_up + 1e-9 * (1.0 + g4_up);
                if !ok {
                    markov_all = false;
                }
                reports[i].markov_ok = Some(ok);
                (0.0, markov_factor * chain[i + 1])
            } else {
                // Top strip: w ≤ w̄ kills the superlevel.
                reports[i].markov_ok = Some(reports[i].superlevel == 0.0);
                if reports[i].superlevel != 0.0 {
                    markov_all = false;
                }
                (0.0, 0.0)
            };
            let c = reports[i].c_emp;
            chain[i] = c * (l1 + l1 * l1) + c * converted + slack;
        }
        // Even-indexed strips tile [ŷ, ȳ]; (Σ g_m)⁴ ≤ k³ Σ g_m⁴ pointwise.
        let bound =
            (k as f64).powi(3) * (0..k).map(|m| chain[2 * m]).sum::<f64>();
        passes.push(PassSummary {
            pass,
            k,
            r,
            span: pd.y_bar - pd.y_hat,
            bound,
            markov_ok: markov_all,
        });
        strips.extend(reports);
    }

    // Direct fourth-power integral and the chart ratio tying it to the
    // per-invariant bounds.
    let mut l4 = 0.0;
    let mut lip: f64 = 0.0;
    for (it, snap) in run.snapshots.iter().enumerate() {
        let mut row = 0.0;
        for (j, &u) in snap.u.iter().enumerate() {
            let du = ((u[0] - run.u_hat[0]).powi(2) + (u[1] - run.u_hat[1]).powi(2)).sqrt();
            row += du.powi(4);
            let dc = (snap.w[j] - run.w_hat).abs() + (snap.z[j] - run.z_hat).abs();
            if dc > 1e-12 {
                lip = lip.max(du / dc);
            }
        }
        l4 += wt[it] * run.dx * row;
    }
    let chain_bound = 8.0 * lip.powi(4) * passes.iter().map(|p| p.bound).sum::<f64>();
    Ok(DecayReport {
        k: first_kr.0,
        r: first_kr.1,
        strips,
        passes,
        l4_integral: l4,
        l1_norm: l1,
        ratio: ratio_or_zero(l4, l1 + l1 * l1),
        chain_bound,
        chain_c_emp: ratio_or_zero(chain_bound, l1 + l1 * l1),
        chart_lip: lip,
        modulus: Vec::new(),
    })
}

/// One ω(t̄, τ) measurement row.
#[derive(Debug, Clone, Copy)]
pub struct ModulusRow {
    pub tau: f64,
    /// τ after snapping t̄ + τ to the nearest stored snapshot.
    pub tau_eff: f64,
    pub omega: f64,
}

/// ω(t̄, ·) on a halving ladder, with the running average (1/r)∫₀^r ω ds.
#[derive(Debug, Clone)]
pub struct ModulusCurve {
    pub t_base: f64,
    pub t_base_eff: f64,
    pub rows: Vec<ModulusRow>,
    pub running_avg: f64,
}

fn nearest_snapshot(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (i, &s) in times.iter().enumerate() {
        let d = (s - t).abs();
        if d < dist {
            dist = d;
            best = i;
        }
    }
    best
}

/// ∫_{|x|≤M} |u(t_b) − u(t_a)| dx between the snapshots nearest the two
/// times; returns the snapped times alongside.
pub fn omega_between(
    run: &ViscousRun,
    t_a: f64,
    t_b: f64,
    m_half: f64,
) -> Result<(f64, f64, f64)> {
    if run.snapshots.is_empty() {
        return Err(Error::config("run has no recorded snapshots"));
    }
    if m_half > run.x_half + 1e-12 {
        return Err(Error::config("window exceeds the computational domain"));
    }
    let times: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
    let ia = nearest_snapshot(&times, t_a);
    let ib = nearest_snapshot(&times, t_b);
    let (sa, sb) = (&run.snapshots[ia], &run.snapshots[ib]);
    let mut acc = 0.0;
    for j in 0..run.nx {
        if run.x(j).abs() <= m_half {
            let d0 = sb.u[j][0] - sa.u[j][0];
            let d1 = sb.u[j][1] - sa.u[j][1];
            acc += (d0 * d0 + d1 * d1).sqrt() * run.dx;
        }
    }
    Ok((times[ia], times[ib], acc))
}

/// Time modulus at the requested base times: ω(t̄, τ) for τ on a halving
/// ladder from the remaining horizon down to the snapshot resolution.
pub fn time_modulus(
    run: &ViscousRun,
    base_times: &[f64],
    m_half: f64,
) -> Result<Vec<ModulusCurve>> {
    if run.snapshots.is_empty() {
        return Err(Error::config("run has no recorded snapshots"));
    }
    if m_half > run.x_half + 1e-12 {
        return Err(Error::config("window exceeds the computational domain"));
    }
    let times: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
    let t_end = *times.last().expect("nonempty");
    let mut min_gap = f64::INFINITY;
    for w in times.windows(2) {
        if w[1] > w[0] {
            min_gap = min_gap.min(w[1] - w[0]);
        }
    }
    let mut curves = Vec::new();
    for &tb in base_times {
        if tb < times[0] - 1e-12 || tb >= t_end - 1e-12 {
            return Err(Error::config(format!(
                "base time {tb} leaves no room before the final time {t_end}"
            )));
        }
        let ib = nearest_snapshot(&times, tb);
        let t_base = times[ib];
        let horizon = t_end - t_base;
        let mut rows = Vec::new();
        let mut tau = horizon;
        while tau >= 1.9 * min_gap && rows.len() < 24 {
            let (_, t_eff, omega) = omega_between(run, t_base, t_base + tau, m_half)?;
            rows.push(ModulusRow { tau, tau_eff: t_eff - t_base, omega });
            tau *= 0.5;
        }
        if rows.is_empty() {
            return Err(Error::config(
                "snapshot record too coarse for any modulus measurement",
            ));
        }
        // Running average over [0, horizon] by trapezoid on the snapped
        // ladder, anchored at ω(0) = 0.
        let mut pts: Vec<(f64, f64)> =
            rows.iter().map(|r| (r.tau_eff, r.omega)).collect();
        pts.push((0.0, 0.0));
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-300);
        let mut avg = 0.0;
        for wpair in pts.windows(2) {
            avg += 0.5 * (wpair[1].0 - wpair[0].0) * (wpair[0].1 + wpair[1].1);
        }
        let top = pts.last().expect("nonempty").0;
        if top > 0.0 {
            avg /= top;
        }
        curves.push(ModulusCurve { t_base: tb, t_base_eff: t_base, rows, running_avg: avg });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::build_kinetic_family;
    use crate::grid::Rect;
    use crate::system::{certify_nonlinearity, SystemSpec};
    use crate::viscous::{init_run, run_to_time, RunConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn decoupled() -> SystemSpec {
        SystemSpec::decoupled_burgers(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap()
    }

    fn family(sys: &SystemSpec, n_levels: usize, n: usize) -> KineticFamily {
        let cert = certify_nonlinearity(sys, 65).unwrap();
        build_kinetic_family(sys, &cert, n_levels, n, n).unwrap()
    }

    fn bump_run(amp: f64, t_final: f64, n_snaps: usize) -> (SystemSpec, InitialData, ViscousRun) {
        let sys = decoupled();
        let data = InitialData::constant(0.3, 0.6).with_bump(false, amp, 0.0, 0.5);
        let mut cfg = RunConfig::new(t_final, 0.008);
        cfg.snapshot_times =
            (0..=n_snaps).map(|i| t_final * i as f64 / n_snaps as f64).collect();
        let mut run = init_run(&sys, &data, 2e-2, &cfg).unwrap();
        run_to_time(&sys, &mut run, t_final).unwrap();
        (sys, data, run)
    }

    #[test]
    fn g_field_clamps_all_three_branches() {
        let (_, _, run) = bump_run(0.3, 0.05, 2);
        let g = g_field(&run, 0.1, 0.35).unwrap();
        for (it, snap) in run.snapshots.iter().enumerate() {
            for (j, &w) in snap.w.iter().enumerate() {
                let expect = (w - 0.35).clamp(0.0, 0.1);
                assert_eq!(g.rows[it][j], expect);
            }
        }
        assert!(g_field(&run, -0.1, 0.35).is_err());
        assert!(g_field(&run, 0.1, 0.1).is_err(), "level below reference");
    }

    #[test]
    fn superlevel_vanishes_on_constant_run() {
        let sys = decoupled();
        let data = InitialData::constant(0.4, 0.6);
        let mut cfg = RunConfig::new(0.1, 0.01);
        cfg.snapshot_times = vec![0.05, 0.1];
        let mut run = init_run(&sys, &data, 2e-2, &cfg).unwrap();
        run_to_time(&sys, &mut run, 0.1).unwrap();
        let s = superlevel_measure(&run, 0.5).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.final_slice_l1, 0.0);
        let rate = superlevel_tail_rate(&sys, &run, 0.5).unwrap();
        assert!(rate.abs() < 1e-12, "tail rate {rate}");
    }

    #[test]
    fn fast_q_matches_brute_force_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..6 {
            let nx = 3 + (trial % 3) * 5;
            let nlev = 4 + (trial % 4) * 4;
            let levels: Vec<f64> = (0..nlev).map(|k| 0.1 * k as f64 - 0.3).collect();
            let vals: Vec<Vec<f64>> = (0..nx)
                .map(|_| (0..nlev).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let chi = |j: usize, k: usize| vals[j][k];
            let f = fast_q(nx, &levels, 0.17, &chi);
            let b = brute_q(nx, &levels, 0.17, &chi);
            let scale = b.abs().max(1e-30);
            assert!(
                (f - b).abs() / scale < 1e-10,
                "trial {trial}: fast {f} vs brute {b}"
            );
        }
    }

    #[test]
    fn interaction_functional_fast_equals_direct_on_a_run() {
        let (sys, _, run) = bump_run(0.25, 0.06, 3);
        let fam = family(&sys, 9, 33);
        let field = sample_kinetic_field(&fam, &run).unwrap();
        for snap in [0, 3] {
            let f = interaction_functional(&field, 0.25, 0.3, snap).unwrap();
            let d = interaction_functional_direct(&field, 0.25, 0.3, snap).unwrap();
            assert!((f - d).abs() <= 1e-10 * d.abs().max(1e-30), "{f} vs {d}");
        }
    }

    #[test]
    fn unweighted_q_matches_its_own_brute_force() {
        let (sys, _, run) = bump_run(0.25, 0.06, 3);
        let fam = family(&sys, 9, 33);
        let field = sample_kinetic_field(&fam, &run).unwrap();
        let (r, ell, snap) = (0.25, 0.3, 2);
        let fast = interaction_functional_unweighted(&field, r, ell, snap).unwrap();
        let levels: Vec<f64> = fam.xi_nodes.clone();
        let dxi = levels[1] - levels[0];
        let nx = field.xs.len();
        let chi = |j: usize, k: usize| {
            if open_strip(levels[k], ell, r) {
                fam.chi(k, field.w[snap][j], field.z[snap][j])
            } else {
                0.0
            }
        };
        let mut brute = 0.0;
        for j in 0..nx {
            for jp in j..nx {
                for k in 0..levels.len() {
                    for kp in 0..=k {
                        brute += chi(j, k) * chi(jp, kp) * field.dx * field.dx * dxi * dxi;
                    }
                }
            }
        }
        assert!((fast - brute).abs() <= 1e-10 * brute.abs().max(1e-30), "{fast} vs {brute}");
    }

    #[test]
    fn strip_ladder_arithmetic_is_exact() {
        let (k, r, levels) = strip_ladder(0.0, 0.3, 0.2).unwrap();
        assert_eq!(k, 2);
        assert!((r - 0.15).abs() < 1e-15);
        assert_eq!(levels.len(), 3);
        assert!((levels[1] - 0.075).abs() < 1e-15);
        assert!((levels[2] + r - 0.3).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let y0 = rng.gen_range(-2.0..2.0);
            let span = rng.gen_range(0.05..3.0);
            let rb = rng.gen_range(0.01..1.5);
            let (_, r, levels) = strip_ladder(y0, y0 + span, rb).unwrap();
            let top = levels[levels.len() - 1];
            assert!(
                (top + r - (y0 + span)).abs() < 1e-14 * (1.0 + span + y0.abs()),
                "cover defect"
            );
        }
    }

    #[test]
    fn iterate_strips_is_all_zeros_on_constant_data() {
        let sys = decoupled();
        let data = InitialData::constant(0.4, 0.6);
        let mut cfg = RunConfig::new(0.1, 0.01);
        cfg.snapshot_times = vec![0.05, 0.1];
        let mut run = init_run(&sys, &data, 2e-2, &cfg).unwrap();
        run_to_time(&sys, &mut run, 0.1).unwrap();
        let fam = family(&sys, 17, 33);
        let report = iterate_strips(&run, &fam, &data).unwrap();
        // Cell-averaging a constant leaves at most 1-ulp dust in u − û.
        assert!(report.l4_integral < 1e-40, "l4 {}", report.l4_integral);
        assert!(report.ratio < 1e-20, "ratio {}", report.ratio);
        assert!(report.chain_bound < 1e-20);
        for s in &report.strips {
            assert!(s.g4_integral < 1e-40);
            assert_eq!(s.superlevel, 0.0);
        }
    }

    #[test]
    fn chained_bound_dominates_the_measured_fourth_power() {
        let (sys, data, run) = bump_run(0.3, 0.25, 12);
        let fam = family(&sys, 33, 65);
        let report = iterate_strips(&run, &fam, &data).unwrap();
        assert!(report.l4_integral > 0.0);
        for p in &report.passes {
            assert!(p.markov_ok, "Markov conversion failed in {:?}", p.pass);
        }
        assert!(
            report.l4_integral <= report.chain_bound * (1.0 + 1e-9) + 1e-15,
            "l4 {} vs chained bound {}",
            report.l4_integral,
            report.chain_bound
        );
        assert!(report.ratio.is_finite());
    }

    #[test]
    fn single_strip_check_reports_consistent_bound() {
        let (sys, data, run) = bump_run(0.2, 0.1, 5);
        let fam = family(&sys, 17, 33);
        let r = fam.constants.r_bar.min(0.25);
        let rep = strip_decay_check(&run, &fam, r, 0.3, &data).unwrap();
        assert!(rep.g4_integral >= 0.0);
        let lhs = rep.g4_integral;
        let rhs = rep.c_emp * (run.l1_norm + run.l1_norm * run.l1_norm) + rep.c_emp * rep.superlevel;
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1e-30), "smallest constant is tight");
        assert!(strip_decay_check(&run, &fam, fam.constants.r_bar * 2.0, 0.3, &data).is_err());
    }

    #[test]
    fn modulus_vanishes_on_constant_run_and_is_subadditive_on_bumps() {
        let sys = decoupled();
        let data = InitialData::constant(0.4, 0.6);
        let mut cfg = RunConfig::new(0.2, 0.01);
        cfg.snapshot_times = (0..=16).map(|i| 0.2 * i as f64 / 16.0).collect();
        let mut run = init_run(&sys, &data, 2e-2, &cfg).unwrap();
        run_to_time(&sys, &mut run, 0.2).unwrap();
        let curves = time_modulus(&run, &[0.05], 1.0).unwrap();
        for row in &curves[0].rows {
            assert_eq!(row.omega, 0.0);
        }
        assert_eq!(curves[0].running_avg, 0.0);

        let (_, _, run) = bump_run(0.3, 0.2, 16);
        let times: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
        let (ta, tb, tc) = (times[2], times[5], times[9]);
        let m = run.x_half * 0.9;
        let (_, _, w_ac) = omega_between(&run, ta, tc, m).unwrap();
        let (_, _, w_ab) = omega_between(&run, ta, tb, m).unwrap();
        let (_, _, w_bc) = omega_between(&run, tb, tc, m).unwrap();
        assert!(w_ac <= w_ab + w_bc + 1e-10, "{w_ac} vs {w_ab} + {w_bc}");
        assert!(time_modulus(&run, &[0.05], run.x_half * 2.0).is_err());
    }
}
