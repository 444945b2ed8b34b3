//! Columnar text serialization for built families and run records.
//!
//! Everything is line-oriented UTF-8 with whitespace-separated tokens and no
//! binary sections, so dumps diff cleanly and work as regression fixtures.
//! Floats are written with `{:e}` (shortest scientific form), which parses
//! back to the identical bits; round-trips are exact, not approximate.
//!
//! Family dump: a header with the certificate and grid descriptors, then per
//! table the rows w, z, ξ, Θ, Ξ in grid order. Run dump: a header with the
//! bookkeeping scalars, then per snapshot the rows t, x, u1, u2, w, z, E
//! (E is the shifted entropy density at dump time) plus the production rows.

use crate::entropy::{EntropyTable, GHFields, KineticFamily, LocalConstants};
use crate::error::{Error, Result};
use crate::grid::{Field2, Grid2, Rect};
use crate::system::{NonlinearityCertificate, SystemSpec};
use crate::viscous::{Snapshot, ViscousRun};
use std::fmt::Write as _;
use std::io::{BufWriter, Write as _};
use std::path::Path;

fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

fn parse_f(tok: &str) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::parse(format!("bad float token {tok:?}")))
}

fn parse_usize(tok: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| Error::parse(format!("bad integer token {tok:?}")))
}

/// Sequential token-line reader over a loaded file.
struct Lines<'a> {
    iter: std::str::Lines<'a>,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { iter: text.lines(), lineno: 0 }
    }

    fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        loop {
            let line = self
                .iter
                .next()
                .ok_or_else(|| Error::parse(format!("unexpected end of file after line {}", self.lineno)))?;
            self.lineno += 1;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                return Ok(toks);
            }
        }
    }

    fn expect(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let toks = self.next_tokens()?;
        if toks[0] != tag {
            return Err(Error::parse(format!(
                "line {}: expected `{tag}`, found `{}`",
                self.lineno, toks[0]
            )));
        }
        Ok(toks)
    }
}

fn write_rect_grid(out: &mut String, tag: &str, grid: &Grid2) {
    let r = grid.rect;
    let _ = writeln!(
        out,
        "{tag} {} {} {} {} {} {}",
        fmt_f(r.w_min),
        fmt_f(r.w_max),
        fmt_f(r.z_min),
        fmt_f(r.z_max),
        grid.nw,
        grid.nz
    );
}

fn read_rect_grid(lines: &mut Lines, tag: &str) -> Result<Grid2> {
    let t = lines.expect(tag)?;
    if t.len() != 7 {
        return Err(Error::parse(format!("`{tag}` needs 6 fields")));
    }
    let rect = Rect::new(parse_f(t[1])?, parse_f(t[2])?, parse_f(t[3])?, parse_f(t[4])?)?;
    Grid2::new(rect, parse_usize(t[5])?, parse_usize(t[6])?)
}

fn write_field(out: &mut String, tag: &str, f: &Field2) {
    let _ = write!(out, "{tag}");
    for v in &f.data {
        let _ = write!(out, " {}", fmt_f(*v));
    }
    let _ = writeln!(out);
}

fn read_field(lines: &mut Lines, tag: &str, grid: Grid2) -> Result<Field2> {
    let t = lines.expect(tag)?;
    if t.len() != 1 + grid.len() {
        return Err(Error::parse(format!(
            "`{tag}` carries {} values, grid wants {}",
            t.len() - 1,
            grid.len()
        )));
    }
    let mut data = Vec::with_capacity(grid.len());
    for tok in &t[1..] {
        data.push(parse_f(tok)?);
    }
    Ok(Field2 { grid, data })
}

fn write_constants(out: &mut String, tag: &str, c: &LocalConstants) {
    let _ = writeln!(
        out,
        "{tag} {} {} {} {}",
        fmt_f(c.r_bar),
        fmt_f(c.c_pos),
        fmt_f(c.c_mono),
        c.ladder.len()
    );
    for &(r, cp, cm) in &c.ladder {
        let _ = writeln!(out, "ladder-row {} {} {}", fmt_f(r), fmt_f(cp), fmt_f(cm));
    }
}

fn read_constants(lines: &mut Lines, tag: &str) -> Result<LocalConstants> {
    let t = lines.expect(tag)?;
    if t.len() != 5 {
        return Err(Error::parse(format!("`{tag}` needs 4 fields")));
    }
    let n = parse_usize(t[4])?;
    let mut ladder = Vec::with_capacity(n);
    for _ in 0..n {
        let row = lines.expect("ladder-row")?;
        if row.len() != 4 {
            return Err(Error::parse("`ladder-row` needs 3 fields"));
        }
        ladder.push((parse_f(row[1])?, parse_f(row[2])?, parse_f(row[3])?));
    }
    Ok(LocalConstants {
        r_bar: parse_f(t[1])?,
        c_pos: parse_f(t[2])?,
        c_mono: parse_f(t[3])?,
        ladder,
    })
}

fn write_vec(out: &mut String, tag: &str, v: &[f64]) {
    let _ = write!(out, "{tag} {}", v.len());
    for x in v {
        let _ = write!(out, " {}", fmt_f(*x));
    }
    let _ = writeln!(out);
}

fn read_vec(lines: &mut Lines, tag: &str) -> Result<Vec<f64>> {
    let t = lines.expect(tag)?;
    let n = parse_usize(t[1])?;
    if t.len() != 2 + n {
        return Err(Error::parse(format!("`{tag}` declares {n} values")));
    }
    t[2..].iter().map(|s| parse_f(s)).collect()
}

fn write_gh(out: &mut String, gh: &GHFields) {
    write_rect_grid(out, "gh-grid", &gh.grid);
    write_field(out, "gh-g", &gh.g);
    write_field(out, "gh-h", &gh.h);
    write_field(out, "gh-a", &gh.a_node);
    write_field(out, "gh-b", &gh.b_node);
    write_field(out, "gh-lam", &gh.lam_cut_node);
    let (alpha, beta, lam_w, lam_z, second) = gh.scratch();
    write_vec(out, "gh-alpha", alpha);
    write_vec(out, "gh-beta", beta);
    write_vec(out, "gh-lamw", lam_w);
    write_vec(out, "gh-lamz", lam_z);
    let _ = writeln!(out, "gh-second {}", second as u8);
}

fn read_gh(lines: &mut Lines) -> Result<GHFields> {
    let grid = read_rect_grid(lines, "gh-grid")?;
    let g = read_field(lines, "gh-g", grid)?;
    let h = read_field(lines, "gh-h", grid)?;
    let a_node = read_field(lines, "gh-a", grid)?;
    let b_node = read_field(lines, "gh-b", grid)?;
    let lam_cut_node = read_field(lines, "gh-lam", grid)?;
    let alpha = read_vec(lines, "gh-alpha")?;
    let beta = read_vec(lines, "gh-beta")?;
    let lam_w = read_vec(lines, "gh-lamw")?;
    let lam_z = read_vec(lines, "gh-lamz")?;
    let sec = lines.expect("gh-second")?;
    GHFields::from_parts(
        grid,
        g,
        h,
        a_node,
        b_node,
        alpha,
        beta,
        lam_w,
        lam_z,
        lam_cut_node,
        sec[1] == "1",
    )
}

fn write_tables(out: &mut String, tables: &[EntropyTable]) {
    let _ = writeln!(out, "tables {}", tables.len());
    for t in tables {
        let defect = t.path_defect.map(fmt_f).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "table {} {} {} {} {} {}",
            t.xi_index,
            fmt_f(t.xi),
            fmt_f(t.requested_xi),
            fmt_f(t.theta_min),
            defect,
            t.flux.is_some() as u8
        );
        let g = &t.theta.grid;
        for i in 0..g.nw {
            for k in 0..g.nz {
                let flux = match &t.flux {
                    Some(f) => fmt_f(f.at(i, k)),
                    None => "-".into(),
                };
                let _ = writeln!(
                    out,
                    "{} {} {} {} {}",
                    fmt_f(g.w(i)),
                    fmt_f(g.z(k)),
                    fmt_f(t.xi),
                    fmt_f(t.theta.at(i, k)),
                    flux
                );
            }
        }
    }
}

fn read_tables(lines: &mut Lines, grid: Grid2) -> Result<Vec<EntropyTable>> {
    let head = lines.expect("tables")?;
    let n = parse_usize(head[1])?;
    let mut tables = Vec::with_capacity(n);
    for _ in 0..n {
        let t = lines.expect("table")?;
        if t.len() != 7 {
            return Err(Error::parse("`table` needs 6 fields"));
        }
        let xi_index = parse_usize(t[1])?;
        let xi = parse_f(t[2])?;
        let requested_xi = parse_f(t[3])?;
        let theta_min = parse_f(t[4])?;
        let path_defect = if t[5] == "-" { None } else { Some(parse_f(t[5])?) };
        let has_flux = t[6] == "1";
        let mut theta = Field2::zeros(grid);
        let mut flux = has_flux.then(|| Field2::zeros(grid));
        for i in 0..grid.nw {
            for k in 0..grid.nz {
                let row = lines.next_tokens()?;
                if row.len() != 5 {
                    return Err(Error::parse("table rows need 5 columns"));
                }
                let w = parse_f(row[0])?;
                let z = parse_f(row[1])?;
                if w != grid.w(i) || z != grid.z(k) || parse_f(row[2])? != xi {
                    return Err(Error::parse(format!(
                        "table row coordinates disagree with the grid header at ({i}, {k})"
                    )));
                }
                theta.set(i, k, parse_f(row[3])?);
                if let Some(f) = flux.as_mut() {
                    f.set(i, k, parse_f(row[4])?);
                } else if row[4] != "-" {
                    return Err(Error::parse("flux column present but table declares none"));
                }
            }
        }
        tables.push(EntropyTable {
            xi_index,
            xi,
            requested_xi,
            theta,
            theta_min,
            flux,
            path_defect,
        });
    }
    Ok(tables)
}

fn write_levels(out: &mut String, tag: &str, nodes: &[f64]) {
    let _ = write!(out, "{tag} {}", nodes.len());
    for v in nodes {
        let _ = write!(out, " {}", fmt_f(*v));
    }
    let _ = writeln!(out);
}

fn read_levels(lines: &mut Lines, tag: &str) -> Result<Vec<f64>> {
    let t = lines.expect(tag)?;
    let n = parse_usize(t[1])?;
    if t.len() != 2 + n {
        return Err(Error::parse(format!("`{tag}` declares {n} values")));
    }
    t[2..].iter().map(|s| parse_f(s)).collect()
}

/// Write a built family to `path`; the file reloads bit-identically.
pub fn export_family(fam: &KineticFamily, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "kinlab-family v1");
    let c = fam.certificate;
    let _ = writeln!(
        out,
        "certificate {} {} {} {} {} {}",
        fmt_f(c.gap_min),
        fmt_f(c.gnl1_min),
        fmt_f(c.gnl2_min),
        fmt_f(c.convexity_modulus),
        c.grid_n,
        fmt_f(c.grid_step)
    );
    write_rect_grid(&mut out, "grid", &fam.grid);
    write_levels(&mut out, "levels", &fam.xi_nodes);
    write_constants(&mut out, "constants", &fam.constants);
    write_gh(&mut out, &fam.gh);
    write_tables(&mut out, &fam.tables);
    write_rect_grid(&mut out, "grid2", &fam.grid_second);
    write_levels(&mut out, "levels2", &fam.zeta_nodes);
    write_constants(&mut out, "constants2", &fam.constants_second);
    write_gh(&mut out, &fam.gh_second);
    write_tables(&mut out, &fam.tables_second);
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(out.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn import_family(path: &Path) -> Result<KineticFamily> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = Lines::new(&text);
    let head = lines.next_tokens()?;
    if head != ["kinlab-family", "v1"] {
        return Err(Error::parse("not a kinlab family dump"));
    }
    let c = lines.expect("certificate")?;
    if c.len() != 7 {
        return Err(Error::parse("`certificate` needs 6 fields"));
    }
    let certificate = NonlinearityCertificate {
        gap_min: parse_f(c[1])?,
        gnl1_min: parse_f(c[2])?,
        gnl2_min: parse_f(c[3])?,
        convexity_modulus: parse_f(c[4])?,
        grid_n: parse_usize(c[5])?,
        grid_step: parse_f(c[6])?,
    };
    let grid = read_rect_grid(&mut lines, "grid")?;
    let xi_nodes = read_levels(&mut lines, "levels")?;
    let constants = read_constants(&mut lines, "constants")?;
    let gh = read_gh(&mut lines)?;
    let tables = read_tables(&mut lines, grid)?;
    let grid_second = read_rect_grid(&mut lines, "grid2")?;
    let zeta_nodes = read_levels(&mut lines, "levels2")?;
    let constants_second = read_constants(&mut lines, "constants2")?;
    let gh_second = read_gh(&mut lines)?;
    let tables_second = read_tables(&mut lines, grid_second)?;
    Ok(KineticFamily {
        certificate,
        grid,
        gh,
        xi_nodes,
        tables,
        grid_second,
        gh_second,
        zeta_nodes,
        tables_second,
        constants,
        constants_second,
    })
}

/// Write the run record: header scalars, then per snapshot the columnar
/// rows (t, x, u1, u2, w, z, E) and the entropy production row.
pub fn dump_snapshots(sys: &SystemSpec, run: &ViscousRun, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "kinlab-run v1");
    let _ = writeln!(
        out,
        "header {} {} {} {} {} {} {} {}",
        fmt_f(run.epsilon),
        fmt_f(run.dx),
        fmt_f(run.dt_nominal),
        fmt_f(run.x_half),
        run.nx,
        fmt_f(run.t),
        fmt_f(run.t_final),
        run.steps
    );
    let _ = writeln!(
        out,
        "reference {} {} {} {}",
        fmt_f(run.u_hat[0]),
        fmt_f(run.u_hat[1]),
        fmt_f(run.w_hat),
        fmt_f(run.z_hat)
    );
    let _ = writeln!(
        out,
        "bookkeeping {} {} {} {} {} {} {} {} {} {}",
        fmt_f(run.diss_cum),
        fmt_f(run.boundary_flux_net[0]),
        fmt_f(run.boundary_flux_net[1]),
        fmt_f(run.boundary_entropy_net),
        fmt_f(run.mass0[0]),
        fmt_f(run.mass0[1]),
        fmt_f(run.entropy0),
        fmt_f(run.wave_speed_bound),
        fmt_f(run.l1_norm),
        fmt_f(run.data_support)
    );
    match &run.resolution_warning {
        Some(msg) => {
            let _ = writeln!(out, "warning {}", msg.replace(['\n', '\r'], " "));
        }
        None => {
            let _ = writeln!(out, "warning -");
        }
    }
    let _ = write!(out, "state");
    for u in &run.u {
        let _ = write!(out, " {} {}", fmt_f(u[0]), fmt_f(u[1]));
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "snapshots {}", run.snapshots.len());
    for s in &run.snapshots {
        let _ = writeln!(
            out,
            "snapshot {} {} {} {} {} {} {} {}",
            fmt_f(s.t),
            fmt_f(s.diss_cum),
            fmt_f(s.mass[0]),
            fmt_f(s.mass[1]),
            fmt_f(s.entropy_total),
            fmt_f(s.boundary_flux_net[0]),
            fmt_f(s.boundary_flux_net[1]),
            run.nx
        );
        for j in 0..run.nx {
            let e = sys.entropy_shifted(s.u[j], run.u_hat);
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                fmt_f(s.t),
                fmt_f(run.x(j)),
                fmt_f(s.u[j][0]),
                fmt_f(s.u[j][1]),
                fmt_f(s.w[j]),
                fmt_f(s.z[j]),
                fmt_f(e)
            );
        }
        let _ = write!(out, "production");
        for d in &s.entropy_prod {
            let _ = write!(out, " {}", fmt_f(*d));
        }
        let _ = writeln!(out);
    }
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(out.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reload a run record for analysis. The E column is redundant (derivable
/// from the state) and is checked for finiteness only.
pub fn load_snapshots(path: &Path) -> Result<ViscousRun> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = Lines::new(&text);
    let head = lines.next_tokens()?;
    if head != ["kinlab-run", "v1"] {
        return Err(Error::parse("not a kinlab run dump"));
    }
    let h = lines.expect("header")?;
    if h.len() != 9 {
        return Err(Error::parse("`header` needs 8 fields"));
    }
    let nx = parse_usize(h[5])?;
    let mut run = ViscousRun::shell(nx);
    run.epsilon = parse_f(h[1])?;
    run.dx = parse_f(h[2])?;
    run.dt_nominal = parse_f(h[3])?;
    run.x_half = parse_f(h[4])?;
    run.t = parse_f(h[6])?;
    run.t_final = parse_f(h[7])?;
    run.steps = parse_usize(h[8])?;
    let r = lines.expect("reference")?;
    run.u_hat = [parse_f(r[1])?, parse_f(r[2])?];
    run.w_hat = parse_f(r[3])?;
    run.z_hat = parse_f(r[4])?;
    let b = lines.expect("bookkeeping")?;
    if b.len() != 11 {
        return Err(Error::parse("`bookkeeping` needs 10 fields"));
    }
    run.diss_cum = parse_f(b[1])?;
    run.boundary_flux_net = [parse_f(b[2])?, parse_f(b[3])?];
    run.boundary_entropy_net = parse_f(b[4])?;
    run.mass0 = [parse_f(b[5])?, parse_f(b[6])?];
    run.entropy0 = parse_f(b[7])?;
    run.wave_speed_bound = parse_f(b[8])?;
    run.l1_norm = parse_f(b[9])?;
    run.data_support = parse_f(b[10])?;
    let w = lines.expect("warning")?;
    run.resolution_warning =
        if w.len() == 2 && w[1] == "-" { None } else { Some(w[1..].join(" ")) };
    let st = lines.expect("state")?;
    if st.len() != 1 + 2 * nx {
        return Err(Error::parse("`state` length disagrees with nx"));
    }
    run.u = (0..nx)
        .map(|j| -> Result<[f64; 2]> {
            Ok([parse_f(st[1 + 2 * j])?, parse_f(st[2 + 2 * j])?])
        })
        .collect::<Result<Vec<_>>>()?;
    let sn = lines.expect("snapshots")?;
    let n_snap = parse_usize(sn[1])?;
    for _ in 0..n_snap {
        let s = lines.expect("snapshot")?;
        if s.len() != 9 {
            return Err(Error::parse("`snapshot` needs 8 fields"));
        }
        if parse_usize(s[8])? != nx {
            return Err(Error::parse("snapshot row count disagrees with nx"));
        }
        let t = parse_f(s[1])?;
        let mut snap = Snapshot {
            t,
            u: Vec::with_capacity(nx),
            w: Vec::with_capacity(nx),
            z: Vec::with_capacity(nx),
            entropy_prod: Vec::with_capacity(nx),
            diss_cum: parse_f(s[2])?,
            mass: [parse_f(s[3])?, parse_f(s[4])?],
            entropy_total: parse_f(s[5])?,
            boundary_flux_net: [parse_f(s[6])?, parse_f(s[7])?],
        };
        for _ in 0..nx {
            let row = lines.next_tokens()?;
            if row.len() != 7 {
                return Err(Error::parse("snapshot rows need 7 columns"));
            }
            if parse_f(row[0])? != t {
                return Err(Error::parse("snapshot row carries a foreign time"));
            }
            snap.u.push([parse_f(row[2])?, parse_f(row[3])?]);
            snap.w.push(parse_f(row[4])?);
            snap.z.push(parse_f(row[5])?);
            if !parse_f(row[6])?.is_finite() {
                return Err(Error::parse("non-finite entropy column"));
            }
        }
        let p = lines.expect("production")?;
        if p.len() != 1 + nx {
            return Err(Error::parse("`production` length disagrees with nx"));
        }
        for tok in &p[1..] {
            snap.entropy_prod.push(parse_f(tok)?);
        }
        run.snapshots.push(snap);
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::build_kinetic_family;
    use crate::grid::Rect;
    use crate::system::certify_nonlinearity;
    use crate::viscous::{init_run, run_to_time, InitialData, RunConfig};

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("kinlab-io-{}-{name}", std::process::id()));
        p
    }

    #[test]
    fn family_round_trip_is_bit_exact() {
        let sys =
            SystemSpec::decoupled_burgers(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap();
        let cert = certify_nonlinearity(&sys, 33).unwrap();
        let fam = build_kinetic_family(&sys, &cert, 5, 17, 17).unwrap();
        let path = tmp("family.txt");
        export_family(&fam, &path).unwrap();
        let back = import_family(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(back.xi_nodes, fam.xi_nodes);
        assert_eq!(back.zeta_nodes, fam.zeta_nodes);
        assert_eq!(back.constants.r_bar, fam.constants.r_bar);
        assert_eq!(back.constants.ladder, fam.constants.ladder);
        assert_eq!(back.certificate.convexity_modulus, fam.certificate.convexity_modulus);
        assert_eq!(back.tables.len(), fam.tables.len());
        for (a, b) in back.tables.iter().zip(fam.tables.iter()) {
            assert_eq!(a.xi, b.xi);
            assert_eq!(a.theta.data, b.theta.data);
            assert_eq!(
                a.flux.as_ref().map(|f| &f.data),
                b.flux.as_ref().map(|f| &f.data)
            );
        }
        assert_eq!(back.gh.g.data, fam.gh.g.data);
        assert_eq!(back.gh_second.lam_cut_node.data, fam.gh_second.lam_cut_node.data);
    }

    #[test]
    fn run_round_trip_is_bit_exact() {
        let sys =
            SystemSpec::decoupled_burgers(Rect::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap();
        let data = InitialData::constant(0.3, 0.6).with_bump(false, 0.25, 0.0, 0.4);
        let mut cfg = RunConfig::new(0.05, 0.02);
        cfg.snapshot_times = vec![0.02, 0.05];
        let mut run = init_run(&sys, &data, 1e-2, &cfg).unwrap();
        run_to_time(&sys, &mut run, 0.05).unwrap();
        let path = tmp("run.txt");
        dump_snapshots(&sys, &run, &path).unwrap();
        let back = load_snapshots(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(back.nx, run.nx);
        assert_eq!(back.epsilon, run.epsilon);
        assert_eq!(back.u, run.u);
        assert_eq!(back.l1_norm, run.l1_norm);
        assert_eq!(back.snapshots.len(), run.snapshots.len());
        for (a, b) in back.snapshots.iter().zip(run.snapshots.iter()) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.u, b.u);
            assert_eq!(a.w, b.w);
            assert_eq!(a.z, b.z);
            assert_eq!(a.entropy_prod, b.entropy_prod);
            assert_eq!(a.mass, b.mass);
        }
    }

    #[test]
    fn loader_rejects_foreign_and_truncated_files() {
        let path = tmp("garbage.txt");
        std::fs::write(&path, "kinlab-run v1\nheader 1 2\n").unwrap();
        assert!(load_snapshots(&path).is_err());
        std::fs::write(&path, "something else\n").unwrap();
        assert!(matches!(load_snapshots(&path), Err(Error::Parse(_))));
        std::fs::remove_file(&path).ok();
    }
}
