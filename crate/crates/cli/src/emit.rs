//! Report writers: key/value lines plus figure-ready columnar tables.
//!
//! Every table is introduced by `# table <name> <keys>` and a `# <columns>`
//! header, then whitespace-separated rows, so one grep peels any curve out of
//! a report. Floats are written with `{:e}` everywhere; nothing in a report
//! depends on wall time, machine, thread schedule or absolute paths, so
//! reruns of an unchanged config are byte-identical.

use crate::pipeline::ReportCtx;
use kinlab::decay::StripPass;
use kinlab::kinetic::MeasureEstimate;
use kinlab::Result;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

fn fe(x: f64) -> String {
    format!("{x:e}")
}

fn pass_name(p: StripPass) -> &'static str {
    match p {
        StripPass::WUp => "w_up",
        StripPass::WDown => "w_down",
        StripPass::ZUp => "z_up",
        StripPass::ZDown => "z_down",
    }
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn push_measure(s: &mut String, tag: &str, idx: usize, m: &MeasureEstimate) {
    let _ = writeln!(s, "# table {tag} e{idx}");
    let _ = writeln!(s, "# member pairing");
    for (name, v) in &m.pairings {
        let _ = writeln!(s, "{name} {}", fe(*v));
    }
    let _ = writeln!(s, "{tag}_mass_proxy {}", fe(m.mass_proxy));
    let _ = writeln!(s, "{tag}_positivity_defect {}", fe(m.positivity_defect));
}

pub fn write_analysis(ctx: &ReportCtx, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "kinlab analysis");
    let _ = writeln!(s, "config {}", ctx.h_cfg);
    let _ = writeln!(s, "family {}", ctx.h_fam);
    for (i, a) in ctx.analysis.iter().enumerate() {
        let _ = writeln!(s);
        let _ = writeln!(s, "run e{i}");
        let _ = writeln!(s, "eps {}", fe(a.eps));
        let _ = writeln!(s, "file run-{}-e{i}.txt", ctx.h_run);
        let _ = writeln!(s, "battery {}", a.battery_id);
        if let Some(kin) = &a.kinetic {
            push_measure(&mut s, "kinetic_residual", i, kin);
        }
        for (k, m) in a.dissipation.iter().enumerate() {
            // Pair order is fixed by the pipeline: the shifted system
            // entropy first, then the mid-level singular table.
            let tag = if k == 0 { "dissipation_system" } else { "dissipation_cut" };
            push_measure(&mut s, tag, i, m);
        }
        if let Some(sb) = &a.strip {
            let _ = writeln!(s, "strip_r {}", fe(sb.r));
            let _ = writeln!(s, "strip_ell {}", fe(sb.ell));
            let _ = writeln!(s, "strip_l1_norm {}", fe(sb.l1_norm));
            let _ = writeln!(s, "strip_collar_low {}", fe(sb.collar_low));
            let _ = writeln!(s, "strip_collar_high {}", fe(sb.collar_high));
            let _ = writeln!(s, "strip_c_collar {}", fe(sb.c_collar));
            let _ = writeln!(s, "strip_c_sup {}", fe(sb.c_sup));
            let _ = writeln!(s, "strip_collar_width {}", fe(sb.collar_width));
            let _ = writeln!(s, "# table strip_chi_l1 e{i}");
            let _ = writeln!(s, "# t chi_l1");
            for &(t, v) in &sb.chi_l1 {
                let _ = writeln!(s, "{} {}", fe(t), fe(v));
            }
        }
        for (xi, res) in &a.characteristics {
            match res {
                Ok(c) => {
                    let _ = writeln!(
                        s,
                        "# table characteristic e{i} xi={} index={}",
                        fe(c.xi),
                        c.xi_index
                    );
                    let _ = writeln!(s, "# t x xi in_band");
                    for &(t, x, inb) in &c.path {
                        let _ =
                            writeln!(s, "{} {} {} {}", fe(t), fe(x), fe(c.xi), u8::from(inb));
                    }
                    let _ = writeln!(s, "characteristic_band_fraction {}", fe(c.band_fraction));
                    let _ = writeln!(s, "characteristic_exited_early {}", c.exited_early);
                    let _ = writeln!(s, "characteristic_max_abs_speed {}", fe(c.max_abs_speed));
                }
                Err(msg) => {
                    let _ = writeln!(s, "characteristic e{i} xi={} skipped: {msg}", fe(*xi));
                }
            }
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_decay(ctx: &ReportCtx, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "kinlab decay");
    let _ = writeln!(s, "config {}", ctx.h_cfg);
    for (i, d) in ctx.decay.iter().enumerate() {
        let rep = &d.report;
        let _ = writeln!(s);
        let _ = writeln!(s, "run e{i}");
        let _ = writeln!(s, "eps {}", fe(d.eps));
        let _ = writeln!(s, "k {}", rep.k);
        let _ = writeln!(s, "r {}", fe(rep.r));
        let _ = writeln!(s, "l1_norm {}", fe(rep.l1_norm));
        let _ = writeln!(s, "l4_integral {}", fe(rep.l4_integral));
        let _ = writeln!(s, "ratio {}", fe(rep.ratio));
        let _ = writeln!(s, "chain_bound {}", fe(rep.chain_bound));
        let _ = writeln!(s, "chain_c_emp {}", fe(rep.chain_c_emp));
        let _ = writeln!(s, "chart_lip {}", fe(rep.chart_lip));
        let _ = writeln!(s, "tail_threshold {}", fe(d.tail_threshold));
        let _ = writeln!(s, "tail_rate {}", fe(d.tail_rate));
        for p in &rep.passes {
            let _ = writeln!(
                s,
                "pass {} k={} r={} span={} bound={} markov_ok={}",
                pass_name(p.pass),
                p.k,
                fe(p.r),
                fe(p.span),
                fe(p.bound),
                p.markov_ok
            );
        }
        let mut counter = [0usize; 4];
        for st in &rep.strips {
            let ci = st.pass as usize;
            let j = counter[ci];
            counter[ci] += 1;
            let _ = writeln!(
                s,
                "strip {} i={} ell={} r={} lo={} hi={} g4={} superlevel={} c_emp={} \
                 bound_rhs={} q_balance_lhs={} markov_ok={}",
                pass_name(st.pass),
                j,
                fe(st.ell),
                fe(st.r),
                fe(st.lo),
                fe(st.hi),
                fe(st.g4_integral),
                fe(st.superlevel),
                fe(st.c_emp),
                fe(st.bound_rhs),
                fe(st.q_balance_lhs),
                st.markov_ok.map_or("none".to_string(), |b| b.to_string())
            );
        }
        let mut counter = [0usize; 4];
        for st in &rep.strips {
            let ci = st.pass as usize;
            let j = counter[ci];
            counter[ci] += 1;
            let _ = writeln!(s, "# table q_trace e{i} pass={} i={j}", pass_name(st.pass));
            let _ = writeln!(s, "# t q");
            for &(t, q) in &st.q_trace {
                let _ = writeln!(s, "{} {}", fe(t), fe(q));
            }
        }
        for c in &rep.modulus {
            let _ = writeln!(
                s,
                "# table modulus e{i} base={} base_eff={}",
                fe(c.t_base),
                fe(c.t_base_eff)
            );
            let _ = writeln!(s, "# tau tau_eff omega");
            for row in &c.rows {
                let _ = writeln!(s, "{} {} {}", fe(row.tau), fe(row.tau_eff), fe(row.omega));
            }
            let _ = writeln!(s, "modulus_running_avg e{i} base={} {}", fe(c.t_base), fe(c.running_avg));
        }
        if let Some((r, ell, rows)) = &d.unweighted {
            let _ = writeln!(s, "# table q_trace_unweighted e{i} r={} ell={}", fe(*r), fe(*ell));
            let _ = writeln!(s, "# t q");
            for &(t, q) in rows {
                let _ = writeln!(s, "{} {}", fe(t), fe(q));
            }
        }
    }
    fs::write(path, s)?;
    Ok(())
}

struct Check {
    verdict: Option<bool>,
    line: String,
}

fn check(verdict: Option<bool>, line: String) -> Check {
    Check { verdict, line }
}

fn summary_checks(ctx: &ReportCtx) -> Vec<Check> {
    let mut out = Vec::new();

    let mut worst_mass = 0.0f64;
    for run in ctx.runs {
        for snap in &run.snapshots {
            for c in 0..2 {
                let drift = (snap.mass[c] - run.mass0[c] + snap.boundary_flux_net[c]).abs();
                worst_mass = worst_mass.max(drift / (1.0 + run.mass0[c].abs()));
            }
        }
    }
    out.push(check(
        Some(worst_mass <= 1e-8),
        format!("mass_conservation max_rel_drift={} tol=1e-8", fe(worst_mass)),
    ));

    let mut worst_closure = 0.0f64;
    let mut min_diss = f64::INFINITY;
    for run in ctx.runs {
        let e_end = run.snapshots.last().map(|s| s.entropy_total).unwrap_or(run.entropy0);
        let scale = 1.0 + run.entropy0.abs() + run.diss_cum.abs();
        let defect =
            (e_end - run.entropy0 + run.diss_cum + run.boundary_entropy_net).abs() / scale;
        worst_closure = worst_closure.max(defect);
        min_diss = min_diss.min(run.diss_cum / (1.0 + run.entropy0.abs()));
    }
    out.push(check(
        Some(worst_closure <= 1e-8),
        format!("entropy_balance_closure max_rel_defect={} tol=1e-8", fe(worst_closure)),
    ));
    out.push(check(
        Some(min_diss >= -1e-12),
        format!("entropy_dissipation_sign min_rel_diss_cum={}", fe(min_diss)),
    ));

    let defects: Vec<f64> = ctx
        .analysis
        .iter()
        .filter_map(|a| a.dissipation.first().map(|m| m.positivity_defect))
        .collect();
    if defects.len() == ctx.runs.len() && defects.len() >= 2 {
        let mono = defects
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-6) + 1e-15);
        let list: Vec<String> = defects.iter().map(|&d| fe(d)).collect();
        out.push(check(
            Some(mono),
            format!("dissipation_defect_ladder defects=[{}] (ladder order)", list.join(", ")),
        ));
    } else {
        out.push(check(None, "dissipation_defect_ladder (needs >= 2 runs with dissipation on)".into()));
    }

    if ctx.decay.is_empty() {
        out.push(check(None, "markov_conversion (decay stage not run)".into()));
        out.push(check(None, "l4_chain_bound (decay stage not run)".into()));
    } else {
        let all_markov = ctx
            .decay
            .iter()
            .all(|d| d.report.strips.iter().all(|st| st.markov_ok == Some(true)));
        out.push(check(Some(all_markov), "markov_conversion all_strips".into()));
        let mut worst = 0.0f64;
        let mut ok = true;
        for d in ctx.decay {
            let rep = &d.report;
            if rep.l4_integral > rep.chain_bound * (1.0 + 1e-9) + 1e-15 {
                ok = false;
            }
            worst = worst.max(ratio_or_zero(rep.l4_integral, rep.chain_bound));
        }
        out.push(check(
            Some(ok),
            format!("l4_chain_bound max_l4_over_bound={}", fe(worst)),
        ));
    }
    out
}

pub fn write_summary(ctx: &ReportCtx, path: &Path) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "kinlab summary");
    let _ = writeln!(s, "config {}", ctx.h_cfg);
    let _ = writeln!(s);
    let _ = writeln!(s, "artifacts");
    let _ = writeln!(s, "certificate certificate-{}.txt", ctx.h_sys);
    let _ = writeln!(s, "family family-{}.txt", ctx.h_fam);
    for i in 0..ctx.runs.len() {
        let _ = writeln!(s, "run e{i} run-{}-e{i}.txt", ctx.h_run);
    }

    let rect = ctx.sys.rect();
    let _ = writeln!(s);
    let _ = writeln!(s, "system {}", ctx.sys.name);
    let _ = writeln!(
        s,
        "rect w=[{}, {}] z=[{}, {}]",
        fe(rect.w_min),
        fe(rect.w_max),
        fe(rect.z_min),
        fe(rect.z_max)
    );
    let c = ctx.cert;
    let _ = writeln!(
        s,
        "certificate gap_min={} gnl1_min={} gnl2_min={} convexity={} grid_n={} valid={}",
        fe(c.gap_min),
        fe(c.gnl1_min),
        fe(c.gnl2_min),
        fe(c.convexity_modulus),
        c.grid_n,
        c.valid()
    );
    let lc = &ctx.fam.constants;
    let _ = writeln!(
        s,
        "family levels={} grid={} r_bar={} c_pos={} c_mono={}",
        ctx.fam.xi_nodes.len(),
        ctx.cfg.entropy.grid,
        fe(lc.r_bar),
        fe(lc.c_pos),
        fe(lc.c_mono)
    );
    let lc2 = &ctx.fam.constants_second;
    let _ = writeln!(
        s,
        "family_second r_bar={} c_pos={} c_mono={}",
        fe(lc2.r_bar),
        fe(lc2.c_pos),
        fe(lc2.c_mono)
    );

    let _ = writeln!(s);
    for (i, run) in ctx.runs.iter().enumerate() {
        let _ = writeln!(
            s,
            "run e{i} eps={} nx={} steps={} dt={} x_half={} l1_norm={} entropy0={} diss_cum={}",
            fe(run.epsilon),
            run.nx,
            run.steps,
            fe(run.dt_nominal),
            fe(run.x_half),
            fe(run.l1_norm),
            fe(run.entropy0),
            fe(run.diss_cum)
        );
        match &run.resolution_warning {
            Some(w) => {
                let _ = writeln!(s, "run e{i} warning {w}");
            }
            None => {
                let _ = writeln!(s, "run e{i} warning none");
            }
        }
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "checks");
    for ch in summary_checks(ctx) {
        let tag = match ch.verdict {
            Some(true) => "[PASS]",
            Some(false) => "[FAIL]",
            None => "[SKIP]",
        };
        let _ = writeln!(s, "{tag} {}", ch.line);
    }

    let _ = writeln!(s);
    let _ = writeln!(s, "constants");
    for (i, a) in ctx.analysis.iter().enumerate() {
        if let Some(kin) = &a.kinetic {
            let e0 = ctx.runs[i].entropy0;
            let _ = writeln!(
                s,
                "battery_c_emp e{i} {}  (mass_proxy {} over entropy0 {})",
                fe(ratio_or_zero(kin.mass_proxy, e0)),
                fe(kin.mass_proxy),
                fe(e0)
            );
        }
        for (k, m) in a.dissipation.iter().enumerate() {
            let which = if k == 0 { "system" } else { "cut" };
            let _ = writeln!(
                s,
                "dissipation_defect e{i} pair={which} {}",
                fe(m.positivity_defect)
            );
        }
        if let Some(sb) = &a.strip {
            let _ = writeln!(
                s,
                "strip_constants e{i} c_collar={} c_sup={}",
                fe(sb.c_collar),
                fe(sb.c_sup)
            );
        }
    }
    for (i, d) in ctx.decay.iter().enumerate() {
        let rep = &d.report;
        let c_emp_max =
            rep.strips.iter().map(|st| st.c_emp).fold(0.0f64, f64::max);
        let _ = writeln!(
            s,
            "decay e{i} ratio={} chain_c_emp={} strip_c_emp_max={} chart_lip={} tail_rate={}",
            fe(rep.ratio),
            fe(rep.chain_c_emp),
            fe(c_emp_max),
            fe(rep.chart_lip),
            fe(d.tail_rate)
        );
        for cur in &rep.modulus {
            let _ = writeln!(
                s,
                "modulus_avg e{i} base={} {}",
                fe(cur.t_base),
                fe(cur.running_avg)
            );
        }
    }
    fs::write(path, s)?;
    Ok(())
}
