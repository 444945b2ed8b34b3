//! Stage pipeline with content-addressed artifact caching.
//!
//! certify → build-entropies → run → analyze → decay → report. The three
//! expensive stages park their products in the artifact directory under
//! names that hash everything upstream of them: the certificate hashes the
//! system block (plus table bytes), the family additionally hashes the
//! entropy block, each run hashes the system and run blocks. A rerun with an
//! unchanged config reuses the files byte-for-byte; touching any upstream
//! knob changes the hash and recomputes exactly the invalidated artifacts.
//! Analysis, decay and the summary are cheap and are recomputed every
//! invocation from the loaded artifacts (never from in-memory state, so a
//! cold and a warm run see bit-identical inputs).

use crate::config::{toml_block, AnalysisBlock, ExperimentConfig};
use crate::emit;
use kinlab::battery::{standard_battery, BatteryDomain};
use kinlab::decay::{
    interaction_functional_unweighted, iterate_strips, strip_ladder, superlevel_tail_rate,
    time_modulus, DecayReport,
};
use kinlab::entropy::{build_kinetic_family, KineticFamily};
use kinlab::io::{dump_snapshots, export_family, import_family, load_snapshots};
use kinlab::kinetic::{
    dissipation_functional, kinetic_residual, sample_kinetic_field, strip_balance,
    trace_characteristic, Characteristic, EntropyPair, MeasureEstimate, StripBalance,
};
use kinlab::viscous::{run_ladder, InitialData, ViscousRun};
use kinlab::{certify_nonlinearity, Error, NonlinearityCertificate, Result, SystemSpec};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Certify,
    Family,
    Run,
    Analyze,
    Decay,
    Report,
}

/// Everything measured on one rung of the viscosity ladder.
pub struct RunAnalysis {
    pub eps: f64,
    pub battery_id: String,
    pub kinetic: Option<MeasureEstimate>,
    /// Dissipation pairings, one per entropy pair (shifted system entropy,
    /// then a mid-level singular table).
    pub dissipation: Vec<MeasureEstimate>,
    pub strip: Option<StripBalance>,
    /// Requested level → trace or the reason it was skipped.
    pub characteristics: Vec<(f64, std::result::Result<Characteristic, String>)>,
}

pub struct RunDecay {
    pub eps: f64,
    pub report: DecayReport,
    pub tail_threshold: f64,
    pub tail_rate: f64,
    /// (r, ℓ, rows of (t, Q_unweighted)) when the exploration flag is set.
    pub unweighted: Option<(f64, f64, Vec<(f64, f64)>)>,
}

/// Borrowed view of all products, handed to the report writers.
pub struct ReportCtx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub h_cfg: &'a str,
    pub h_sys: &'a str,
    pub h_fam: &'a str,
    pub h_run: &'a str,
    pub sys: &'a SystemSpec,
    pub cert: &'a NonlinearityCertificate,
    pub fam: &'a KineticFamily,
    pub runs: &'a [ViscousRun],
    pub analysis: &'a [RunAnalysis],
    pub decay: &'a [RunDecay],
}

fn short_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_tag(cached: bool) -> &'static str {
    if cached {
        "cached"
    } else {
        "computed"
    }
}

fn write_certificate(path: &Path, c: &NonlinearityCertificate) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "kinlab-cert v1");
    let _ = writeln!(s, "gap_min {:e}", c.gap_min);
    let _ = writeln!(s, "gnl1_min {:e}", c.gnl1_min);
    let _ = writeln!(s, "gnl2_min {:e}", c.gnl2_min);
    let _ = writeln!(s, "convexity_modulus {:e}", c.convexity_modulus);
    let _ = writeln!(s, "grid_n {}", c.grid_n);
    let _ = writeln!(s, "grid_step {:e}", c.grid_step);
    fs::write(path, s)?;
    Ok(())
}

fn cert_field<'a>(lines: &mut std::str::Lines<'a>, key: &str) -> Result<&'a str> {
    let line = lines
        .next()
        .ok_or_else(|| Error::parse(format!("certificate truncated before {key}")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(Error::parse(format!("certificate: expected {key}")));
    }
    let v = it.next().ok_or_else(|| Error::parse(format!("certificate: {key} has no value")))?;
    if it.next().is_some() {
        return Err(Error::parse(format!("certificate: trailing tokens after {key}")));
    }
    Ok(v)
}

fn read_certificate(path: &Path) -> Result<NonlinearityCertificate> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("kinlab-cert v1") {
        return Err(Error::parse(format!("{}: not a certificate file", path.display())));
    }
    let f = |v: &str| -> Result<f64> {
        v.parse::<f64>().map_err(|_| Error::parse(format!("certificate: bad float '{v}'")))
    };
    Ok(NonlinearityCertificate {
        gap_min: f(cert_field(&mut lines, "gap_min")?)?,
        gnl1_min: f(cert_field(&mut lines, "gnl1_min")?)?,
        gnl2_min: f(cert_field(&mut lines, "gnl2_min")?)?,
        convexity_modulus: f(cert_field(&mut lines, "convexity_modulus")?)?,
        grid_n: cert_field(&mut lines, "grid_n")?
            .parse::<usize>()
            .map_err(|_| Error::parse("certificate: bad grid_n"))?,
        grid_step: f(cert_field(&mut lines, "grid_step")?)?,
    })
}

pub fn execute(cfg: &ExperimentConfig, config_dir: &Path, out: &Path, stage: Stage) -> Result<()> {
    fs::create_dir_all(out)?;
    let (sys, table_text) = cfg.build_sys(config_dir)?;
    let h_cfg = short_hash(&["config", &toml_block(cfg), &table_text]);
    let h_sys = short_hash(&["system", &toml_block(&cfg.system), &table_text]);

    let cert_path = out.join(format!("certificate-{h_sys}.txt"));
    let cert_cached = cert_path.exists();
    let cert = if cert_cached {
        read_certificate(&cert_path)?
    } else {
        let c = certify_nonlinearity(&sys, cfg.system.certify_n)?;
        write_certificate(&cert_path, &c)?;
        c
    };
    println!("certificate: {} -> {}", cache_tag(cert_cached), file_name(&cert_path));
    println!(
        "  gap_min {:e}  gnl1_min {:e}  gnl2_min {:e}  convexity {:e}  valid {}",
        cert.gap_min,
        cert.gnl1_min,
        cert.gnl2_min,
        cert.convexity_modulus,
        cert.valid()
    );
    if stage == Stage::Certify {
        return Ok(());
    }

    let h_fam = short_hash(&["family", &h_sys, &toml_block(&cfg.entropy)]);
    let fam_path = out.join(format!("family-{h_fam}.txt"));
    let fam_cached = fam_path.exists();
    if !fam_cached {
        let f = build_kinetic_family(&sys, &cert, cfg.entropy.levels, cfg.entropy.grid, cfg.entropy.grid)?;
        export_family(&f, &fam_path)?;
    }
    // Both branches consume the serialized form, so cold and warm runs
    // analyze identical bits.
    let fam = import_family(&fam_path)?;
    println!("family: {} -> {}", cache_tag(fam_cached), file_name(&fam_path));
    println!(
        "  levels {}  grid {}x{}  r_bar {:e}  c_pos {:e}  c_mono {:e}",
        fam.xi_nodes.len(),
        cfg.entropy.grid,
        cfg.entropy.grid,
        fam.constants.r_bar,
        fam.constants.c_pos,
        fam.constants.c_mono
    );
    println!(
        "  second family: r_bar {:e}  c_pos {:e}  c_mono {:e}",
        fam.constants_second.r_bar, fam.constants_second.c_pos, fam.constants_second.c_mono
    );
    if stage == Stage::Family {
        return Ok(());
    }

    let h_run = short_hash(&["run", &h_sys, &toml_block(&cfg.run)]);
    let data = cfg.initial_data();
    let run_cfg = cfg.run_config();
    let run_paths: Vec<PathBuf> = (0..cfg.run.epsilon.len())
        .map(|i| out.join(format!("run-{h_run}-e{i}.txt")))
        .collect();
    let missing: Vec<(usize, f64)> = cfg
        .run
        .epsilon
        .iter()
        .enumerate()
        .filter(|(i, _)| !run_paths[*i].exists())
        .map(|(i, &e)| (i, e))
        .collect();
    if !missing.is_empty() {
        let eps: Vec<f64> = missing.iter().map(|&(_, e)| e).collect();
        let computed = run_ladder(&sys, &data, &run_cfg, &eps)?;
        for (&(i, _), run) in missing.iter().zip(computed.iter()) {
            dump_snapshots(&sys, run, &run_paths[i])?;
        }
    }
    let mut runs = Vec::with_capacity(run_paths.len());
    for (i, p) in run_paths.iter().enumerate() {
        let run = load_snapshots(p)?;
        let was_cached = !missing.iter().any(|&(j, _)| j == i);
        println!(
            "run e{i} (eps {:e}): {} -> {}",
            run.epsilon,
            cache_tag(was_cached),
            file_name(p)
        );
        println!(
            "  nx {}  steps {}  dt {:e}  x_half {:e}  l1_norm {:e}",
            run.nx, run.steps, run.dt_nominal, run.x_half, run.l1_norm
        );
        if let Some(w) = &run.resolution_warning {
            println!("  warning: {w}");
        }
        runs.push(run);
    }
    if stage == Stage::Run {
        return Ok(());
    }

    let analysis: Vec<RunAnalysis> = runs
        .iter()
        .map(|run| analyze_run(&sys, &fam, run, &data, &cfg.analysis))
        .collect::<Result<_>>()?;
    let analysis_path = out.join("analysis.txt");
    emit::write_analysis(
        &ReportCtx {
            cfg,
            h_cfg: &h_cfg,
            h_sys: &h_sys,
            h_fam: &h_fam,
            h_run: &h_run,
            sys: &sys,
            cert: &cert,
            fam: &fam,
            runs: &runs,
            analysis: &analysis,
            decay: &[],
        },
        &analysis_path,
    )?;
    println!("analyze: -> {}", file_name(&analysis_path));
    if stage == Stage::Analyze {
        return Ok(());
    }

    let decay: Vec<RunDecay> = runs
        .iter()
        .map(|run| decay_run(&sys, &fam, run, &data, &cfg.analysis))
        .collect::<Result<_>>()?;
    let ctx = ReportCtx {
        cfg,
        h_cfg: &h_cfg,
        h_sys: &h_sys,
        h_fam: &h_fam,
        h_run: &h_run,
        sys: &sys,
        cert: &cert,
        fam: &fam,
        runs: &runs,
        analysis: &analysis,
        decay: &decay,
    };
    let decay_path = out.join("decay.txt");
    emit::write_decay(&ctx, &decay_path)?;
    println!("decay: -> {}", file_name(&decay_path));
    if stage == Stage::Decay {
        return Ok(());
    }

    let summary_path = out.join("summary.txt");
    emit::write_summary(&ctx, &summary_path)?;
    println!("report: -> {}", file_name(&summary_path));
    Ok(())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn analyze_run(
    sys: &SystemSpec,
    fam: &KineticFamily,
    run: &ViscousRun,
    data: &InitialData,
    a: &AnalysisBlock,
) -> Result<RunAnalysis> {
    let field = sample_kinetic_field(fam, run)?;
    let t0 = field.times[0];
    let t1 = *field.times.last().expect("nonempty");
    let dom = BatteryDomain {
        t0,
        t1,
        x_half: run.x_half,
        xi_lo: fam.xi_nodes[0],
        xi_hi: *fam.xi_nodes.last().expect("nonempty"),
        wave_speed: run.wave_speed_bound,
    };
    let battery = standard_battery(&dom)?;

    let kinetic = if a.battery || a.strip {
        Some(kinetic_residual(&field, &battery)?)
    } else {
        None
    };

    let mut dissipation = Vec::new();
    if a.dissipation {
        let pair = EntropyPair::system_entropy(sys, run.u_hat);
        dissipation.push(dissipation_functional(sys, run, &pair, &battery)?);
        let mid = fam.tables.len() / 2;
        let pair_cut = EntropyPair::from_family(sys, fam, mid)?;
        dissipation.push(dissipation_functional(sys, run, &pair_cut, &battery)?);
    }

    let strip = if a.strip {
        let kin = kinetic.as_ref().expect("computed above");
        let xi_top = *fam.xi_nodes.last().expect("nonempty");
        let (_, r0, lv) = strip_ladder(run.w_hat, xi_top, fam.constants.r_bar)?;
        let r = a.strip_r.unwrap_or(r0);
        let ell = a.strip_ell.unwrap_or(lv[0]);
        Some(strip_balance(&field, kin, r, ell, data)?)
    } else {
        None
    };

    // Characteristic tracing is exploratory; a level whose band the datum
    // never enters is reported, not fatal.
    let characteristics = a
        .characteristics
        .iter()
        .map(|&xi| {
            let res = trace_characteristic(fam, run, xi, a.char_x0, (t0, t1))
                .map_err(|e| e.to_string());
            (xi, res)
        })
        .collect();

    Ok(RunAnalysis {
        eps: run.epsilon,
        battery_id: battery.id,
        kinetic: if a.battery { kinetic } else { None },
        dissipation,
        strip,
        characteristics,
    })
}

fn decay_run(
    sys: &SystemSpec,
    fam: &KineticFamily,
    run: &ViscousRun,
    data: &InitialData,
    a: &AnalysisBlock,
) -> Result<RunDecay> {
    let mut report = iterate_strips(run, fam, data)?;
    let bases: Vec<f64> = a.modulus_times.iter().map(|f| f * run.t_final).collect();
    report.modulus = time_modulus(run, &bases, a.modulus_window * run.x_half)?;

    let xi_top = *fam.xi_nodes.last().expect("nonempty");
    let thr = 0.5 * (run.w_hat + xi_top);
    let tail_rate = superlevel_tail_rate(sys, run, thr)?;

    let unweighted = if a.unweighted_q {
        let field = sample_kinetic_field(fam, run)?;
        let (_, r0, lv) = strip_ladder(run.w_hat, xi_top, fam.constants.r_bar)?;
        let rows = (0..field.times.len())
            .map(|s| {
                interaction_functional_unweighted(&field, r0, lv[0], s)
                    .map(|q| (field.times[s], q))
            })
            .collect::<Result<Vec<_>>>()?;
        Some((r0, lv[0], rows))
    } else {
        None
    };

    Ok(RunDecay { eps: run.epsilon, report, tail_threshold: thr, tail_rate, unweighted })
}
