//! User-supplied systems: flux values on a rectangular state grid, read from
//! columnar text (columns u1 u2 f1 f2, optionally e g for an entropy pair),
//! interpolated bicubically.
//!
//! The invariant chart has no closed form here, so it is built numerically:
//! φ₁ is recovered by flowing each state-grid node along the second
//! characteristic field until it crosses an anchor curve of the first field
//! (its flow parameter there is φ₁), and symmetrically for φ₂. Both chart
//! directions are then frozen into bicubic tables. Expect round-trip
//! accuracy near 1e-8 on smooth data, not the 1e-10 of closed-form charts.

use crate::error::{Error, Result};
use crate::grid::Rect;

use super::{eigen_2x2, State};

/// Uniform rectangular grid in state space with bicubically interpolated
/// node values.
#[derive(Debug, Clone)]
struct BicubicTable {
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

/// Catmull-Rom weights and their derivative at fraction t ∈ [0, 1].
fn cr_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let w = [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ];
    let d = [
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ];
    (w, d)
}

impl BicubicTable {
    fn locate(&self, x: f64, y: f64) -> (usize, f64, usize, f64) {
        let fx = ((x - self.x0) / self.hx).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((y - self.y0) / self.hy).clamp(0.0, (self.ny - 1) as f64);
        let i = (fx as usize).min(self.nx - 2);
        let k = (fy as usize).min(self.ny - 2);
        (i, fx - i as f64, k, fy - k as f64)
    }

    #[inline]
    fn node(&self, i: isize, k: isize) -> f64 {
        let i = i.clamp(0, self.nx as isize - 1) as usize;
        let k = k.clamp(0, self.ny as isize - 1) as usize;
        self.data[i * self.ny + k]
    }

    /// Value and gradient (∂x, ∂y) of the interpolant.
    fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (i, tx, k, ty) = self.locate(x, y);
        let (wx, dx) = cr_weights(tx);
        let (wy, dy) = cr_weights(ty);
        let mut v = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for a in 0..4 {
            let ia = i as isize + a as isize - 1;
            for b in 0..4 {
                let kb = k as isize + b as isize - 1;
                let p = self.node(ia, kb);
                v += wx[a] * wy[b] * p;
                gx += dx[a] * wy[b] * p;
                gy += wx[a] * dy[b] * p;
            }
        }
        (v, gx / self.hx, gy / self.hy)
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).0
    }
}

#[derive(Debug, Clone)]
pub struct TabulatedSystem {
    f1: BicubicTable,
    f2: BicubicTable,
    entropy_e: Option<BicubicTable>,
    entropy_g: Option<BicubicTable>,
    /// Forward chart tables over the state grid.
    phi1: BicubicTable,
    phi2: BicubicTable,
    /// Inverse chart tables over `rect`.
    inv_u1: BicubicTable,
    inv_u2: BicubicTable,
    rect: Rect,
}

struct ParsedGrid {
    u1: Vec<f64>,
    u2: Vec<f64>,
    cols: Vec<Vec<f64>>,
}

fn parse_columns(text: &str) -> Result<ParsedGrid> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number '{tok}'", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 4 && vals.len() != 6 {
            return Err(Error::Parse(format!(
                "line {}: expected 4 columns (u1 u2 f1 f2) or 6 (.. e g), got {}",
                lineno + 1,
                vals.len()
            )));
        }
        if width == 0 {
            width = vals.len();
        } else if vals.len() != width {
            return Err(Error::Parse(format!("line {}: ragged column count", lineno + 1)));
        }
        rows.push(vals);
    }
    if rows.len() < 16 {
        return Err(Error::Parse(format!("need at least a 4x4 state grid, got {} rows", rows.len())));
    }

    let mut u1: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let mut u2: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    u1.sort_by(f64::total_cmp);
    u1.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (a.abs() + 1.0));
    u2.sort_by(f64::total_cmp);
    u2.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (a.abs() + 1.0));
    let (n1, n2) = (u1.len(), u2.len());
    if n1 < 4 || n2 < 4 {
        return Err(Error::Parse(format!("state grid must be at least 4x4, got {n1}x{n2}")));
    }
    if n1 * n2 != rows.len() {
        return Err(Error::Parse(format!(
            "rows do not form a rectangular grid: {}x{} != {}",
            n1,
            n2,
            rows.len()
        )));
    }
    for (vals, name) in [(&u1, "u1"), (&u2, "u2")] {
        let h = vals[1] - vals[0];
        for pair in vals.windows(2) {
            if ((pair[1] - pair[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
                return Err(Error::Parse(format!("{name} values are not uniformly spaced")));
            }
        }
    }

    let h1 = u1[1] - u1[0];
    let h2 = u2[1] - u2[0];
    let ncols = width - 2;
    let mut cols = vec![vec![f64::NAN; n1 * n2]; ncols];
    for r in &rows {
        let i = ((r[0] - u1[0]) / h1).round() as usize;
        let k = ((r[1] - u2[0]) / h2).round() as usize;
        let idx = i * n2 + k;
        if !cols[0][idx].is_nan() {
            return Err(Error::Parse(format!("duplicate grid node ({}, {})", r[0], r[1])));
        }
        for c in 0..ncols {
            cols[c][idx] = r[2 + c];
        }
    }
    Ok(ParsedGrid { u1, u2, cols })
}

/// Chart construction scratch: eigenvector field with a continuity-based
/// orientation and anchor curves through the grid center.
struct ChartBuilder<'a> {
    f1: &'a BicubicTable,
    f2: &'a BicubicTable,
    lo: [f64; 2],
    hi: [f64; 2],
}

#[derive(Clone)]
struct AnchorCurve {
    /// Flow parameter (arclength, signed) and point, sorted by parameter.
    s: Vec<f64>,
    pts: Vec<[f64; 2]>,
}

impl AnchorCurve {
    /// Signed side of `u` relative to the curve near its closest vertex,
    /// plus the interpolated parameter of that closest location.
    fn side_and_param(&self, u: [f64; 2]) -> (f64, f64) {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (idx, p) in self.pts.iter().enumerate() {
            let d = (p[0] - u[0]).powi(2) + (p[1] - u[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = idx;
            }
        }
        let j = best.min(self.pts.len() - 2);
        let a = self.pts[j];
        let b = self.pts[j + 1];
        let tang = [b[0] - a[0], b[1] - a[1]];
        let rel = [u[0] - a[0], u[1] - a[1]];
        let cross = tang[0] * rel[1] - tang[1] * rel[0];
        let len2 = (tang[0] * tang[0] + tang[1] * tang[1]).max(1e-300);
        let t = ((rel[0] * tang[0] + rel[1] * tang[1]) / len2).clamp(0.0, 1.0);
        (cross, self.s[j] + t * (self.s[j + 1] - self.s[j]))
    }
}

impl<'a> ChartBuilder<'a> {
    fn jacobian(&self, u: [f64; 2]) -> [[f64; 2]; 2] {
        let (_, a, b) = self.f1.eval(u[0], u[1]);
        let (_, c, d) = self.f2.eval(u[0], u[1]);
        [[a, b], [c, d]]
    }

    /// Unit eigenvector of family `fam`, oriented to align with `prev`.
    fn field(&self, fam: usize, u: [f64; 2], prev: [f64; 2]) -> Result<[f64; 2]> {
        let e = eigen_2x2(self.jacobian(u))?;
        let mut r = e.right[fam];
        if r[0] * prev[0] + r[1] * prev[1] < 0.0 {
            r = [-r[0], -r[1]];
        }
        Ok(r)
    }

    fn inside(&self, u: [f64; 2]) -> bool {
        u[0] >= self.lo[0] && u[0] <= self.hi[0] && u[1] >= self.lo[1] && u[1] <= self.hi[1]
    }

    /// One RK4 step of du/ds = r̂_fam(u).
    fn rk4(&self, fam: usize, u: [f64; 2], dir: [f64; 2], h: f64) -> Result<([f64; 2], [f64; 2])> {
        let k1 = self.field(fam, u, dir)?;
        let k2 = self.field(fam, [u[0] + 0.5 * h * k1[0], u[1] + 0.5 * h * k1[1]], k1)?;
        let k3 = self.field(fam, [u[0] + 0.5 * h * k2[0], u[1] + 0.5 * h * k2[1]], k2)?;
        let k4 = self.field(fam, [u[0] + h * k3[0], u[1] + h * k3[1]], k3)?;
        let u2 = [
            u[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            u[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        Ok((u2, k4))
    }

    /// Integral curve of family `fam` through `origin`, walked in both
    /// directions until it leaves the state box. Parameter is signed
    /// arclength from the origin.
    fn anchor_curve(&self, fam: usize, origin: [f64; 2], h: f64) -> Result<AnchorCurve> {
        let mut halves: Vec<Vec<(f64, [f64; 2])>> = Vec::new();
        for sign in [1.0f64, -1.0] {
            let mut pts = vec![(0.0, origin)];
            let mut u = origin;
            let mut dir = self.field(fam, origin, [1.0, 1.0])?;
            dir = [sign * dir[0], sign * dir[1]];
            let mut s = 0.0;
            for _ in 0..100_000 {
                let (next, last_dir) = match self.rk4(fam, u, dir, h) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                if !self.inside(next) {
                    break;
                }
                s += h;
                u = next;
                dir = last_dir;
                pts.push((sign * s, u));
            }
            halves.push(pts);
        }
        let mut all: Vec<(f64, [f64; 2])> = halves[1][1..].iter().rev().cloned().collect();
        all.extend(halves[0].iter().cloned());
        Ok(AnchorCurve {
            s: all.iter().map(|p| p.0).collect(),
            pts: all.iter().map(|p| p.1).collect(),
        })
    }

    /// Flow `u` along family `fam` until it crosses `anchor`; returns the
    /// anchor parameter at the crossing. Tries both flow directions.
    fn shoot(&self, fam: usize, u: [f64; 2], anchor: &AnchorCurve, h: f64) -> Option<f64> {
        for sign in [1.0f64, -1.0] {
            let mut p = u;
            let mut dir = match self.field(fam, u, [1.0, 1.0]) {
                Ok(d) => [sign * d[0], sign * d[1]],
                Err(_) => return None,
            };
            let (mut side, mut param) = anchor.side_and_param(p);
            if side.abs() < 1e-14 {
                return Some(param);
            }
            for _ in 0..100_000 {
                let (next, last_dir) = match self.rk4(fam, p, dir, h) {
                    Ok(v) => v,
                    Err(_) => break,
                };
                if !self.inside(next) {
                    break;
                }
                let (side2, param2) = anchor.side_and_param(next);
                if side2 == 0.0 || side2.signum() != side.signum() {
                    // Bisect the crossing step.
                    let (mut a, mut b) = (p, next);
                    let mut pa = param;
                    let mut pb = param2;
                    let mut sa = side;
                    for _ in 0..60 {
                        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                        let (sm, pm) = anchor.side_and_param(mid);
                        if sm == 0.0 {
                            return Some(pm);
                        }
                        if sm.signum() == sa.signum() {
                            a = mid;
                            pa = pm;
                            sa = sm;
                        } else {
                            b = mid;
                            pb = pm;
                        }
                    }
                    return Some(0.5 * (pa + pb));
                }
                p = next;
                dir = last_dir;
                side = side2;
                param = param2;
            }
        }
        None
    }
}

impl TabulatedSystem {
    /// Parse a columnar dump and construct the interpolated system together
    /// with its numerical invariant chart.
    pub fn from_text(text: &str) -> Result<TabulatedSystem> {
        let parsed = parse_columns(text)?;
        let (n1, n2) = (parsed.u1.len(), parsed.u2.len());
        let mk = |data: Vec<f64>| BicubicTable {
            x0: parsed.u1[0],
            y0: parsed.u2[0],
            hx: parsed.u1[1] - parsed.u1[0],
            hy: parsed.u2[1] - parsed.u2[0],
            nx: n1,
            ny: n2,
            data,
        };
        let f1 = mk(parsed.cols[0].clone());
        let f2 = mk(parsed.cols[1].clone());
        let (entropy_e, entropy_g) = if parsed.cols.len() == 4 {
            (Some(mk(parsed.cols[2].clone())), Some(mk(parsed.cols[3].clone())))
        } else {
            (None, None)
        };

        let lo = [parsed.u1[0], parsed.u2[0]];
        let hi = [*parsed.u1.last().unwrap(), *parsed.u2.last().unwrap()];
        let builder = ChartBuilder { f1: &f1, f2: &f2, lo, hi };
        let span = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
        let h = span / 2048.0;
        let origin = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        // Anchor for φ₁ is the first-family curve (flow parameter = φ₁ value
        // there); shooting happens along the second family, and vice versa.
        let anchor1 = builder.anchor_curve(0, origin, h)?;
        let anchor2 = builder.anchor_curve(1, origin, h)?;

        let mut w_nodes = vec![f64::NAN; n1 * n2];
        let mut z_nodes = vec![f64::NAN; n1 * n2];
        for i in 0..n1 {
            for k in 0..n2 {
                let u = [parsed.u1[i], parsed.u2[k]];
                if let Some(wv) = builder.shoot(1, u, &anchor1, h) {
                    w_nodes[i * n2 + k] = wv;
                }
                if let Some(zv) = builder.shoot(0, u, &anchor2, h) {
                    z_nodes[i * n2 + k] = zv;
                }
            }
        }

        // Interior nodes must have chart values; the box frame may not
        // (their characteristic curves can exit before reaching an anchor).
        let mut interior_ok = true;
        for i in 1..n1 - 1 {
            for k in 1..n2 - 1 {
                if w_nodes[i * n2 + k].is_nan() || z_nodes[i * n2 + k].is_nan() {
                    interior_ok = false;
                }
            }
        }
        fill_frame(&mut w_nodes, n1, n2);
        fill_frame(&mut z_nodes, n1, n2);
        if !interior_ok || w_nodes.iter().chain(z_nodes.iter()).any(|v| v.is_nan()) {
            return Err(Error::numerical(
                "invariant chart construction failed: characteristic curves leave the tabulated box",
            ));
        }
        let phi1 = mk(w_nodes);
        let phi2 = mk(z_nodes);

        let rect = inscribe_rect(&phi1, &phi2, lo, hi)?;
        let (inv_u1, inv_u2) = invert_chart(&phi1, &phi2, rect, lo, hi)?;

        Ok(TabulatedSystem { f1, f2, entropy_e, entropy_g, phi1, phi2, inv_u1, inv_u2, rect })
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn flux(&self, u: State) -> State {
        [self.f1.value(u[0], u[1]), self.f2.value(u[0], u[1])]
    }

    pub fn jacobian(&self, u: State) -> [[f64; 2]; 2] {
        let (_, a, b) = self.f1.eval(u[0], u[1]);
        let (_, c, d) = self.f2.eval(u[0], u[1]);
        [[a, b], [c, d]]
    }

    pub fn riemann_forward(&self, u: State) -> (f64, f64) {
        (self.phi1.value(u[0], u[1]), self.phi2.value(u[0], u[1]))
    }

    pub fn riemann_inverse(&self, w: f64, z: f64) -> State {
        [self.inv_u1.value(w, z), self.inv_u2.value(w, z)]
    }

    pub fn lambdas_wz(&self, w: f64, z: f64) -> (f64, f64) {
        let u = self.riemann_inverse(w, z);
        match eigen_2x2(self.jacobian(u)) {
            Ok(e) => (e.lambda[0], e.lambda[1]),
            Err(_) => (f64::NAN, f64::NAN),
        }
    }

    pub fn has_entropy(&self) -> bool {
        self.entropy_e.is_some()
    }

    pub fn entropy(&self, u: State) -> f64 {
        self.entropy_e.as_ref().expect("tabulated system has no entropy columns").value(u[0], u[1])
    }

    pub fn entropy_flux(&self, u: State) -> f64 {
        self.entropy_g.as_ref().expect("tabulated system has no entropy columns").value(u[0], u[1])
    }

    pub fn entropy_gradient(&self, u: State) -> [f64; 2] {
        let t = self.entropy_e.as_ref().expect("tabulated system has no entropy columns");
        let (_, gx, gy) = t.eval(u[0], u[1]);
        [gx, gy]
    }

    pub fn entropy_hessian(&self, u: State) -> [[f64; 2]; 2] {
        // The interpolant is C¹; sample the gradient field instead of
        // differentiating the kernel twice.
        let t = self.entropy_e.as_ref().expect("tabulated system has no entropy columns");
        let h1 = 1e-5 * t.hx;
        let h2 = 1e-5 * t.hy;
        let gp1 = t.eval(u[0] + h1, u[1]);
        let gm1 = t.eval(u[0] - h1, u[1]);
        let gp2 = t.eval(u[0], u[1] + h2);
        let gm2 = t.eval(u[0], u[1] - h2);
        let axx = (gp1.1 - gm1.1) / (2.0 * h1);
        let axy = 0.5 * ((gp2.1 - gm2.1) / (2.0 * h2) + (gp1.2 - gm1.2) / (2.0 * h1));
        let ayy = (gp2.2 - gm2.2) / (2.0 * h2);
        [[axx, axy], [axy, ayy]]
    }
}

/// Replicate the outermost valid ring onto NaN frame nodes so the bicubic
/// stencil never reads NaN; the inscribed rectangle keeps queries interior.
fn fill_frame(vals: &mut [f64], n1: usize, n2: usize) {
    for i in 0..n1 {
        for k in 0..n2 {
            if vals[i * n2 + k].is_nan() {
                let ii = i.clamp(1, n1 - 2);
                let kk = k.clamp(1, n2 - 2);
                vals[i * n2 + k] = vals[ii * n2 + kk];
            }
        }
    }
}

/// Largest centered (w, z) rectangle whose chart preimage stays inside the
/// tabulated state box, found by shrinking from the percentile box.
fn inscribe_rect(phi1: &BicubicTable, phi2: &BicubicTable, lo: [f64; 2], hi: [f64; 2]) -> Result<Rect> {
    let mut ws: Vec<f64> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    // Interior nodes only; the frame is replicated data.
    for i in 1..phi1.nx - 1 {
        for k in 1..phi1.ny - 1 {
            ws.push(phi1.data[i * phi1.ny + k]);
            zs.push(phi2.data[i * phi2.ny + k]);
        }
    }
    ws.sort_by(f64::total_cmp);
    zs.sort_by(f64::total_cmp);
    let pick = |v: &[f64], q: f64| v[((v.len() - 1) as f64 * q) as usize];
    let (mut w0, mut w1) = (pick(&ws, 0.15), pick(&ws, 0.85));
    let (mut z0, mut z1) = (pick(&zs, 0.15), pick(&zs, 0.85));

    let margin = [0.02 * (hi[0] - lo[0]), 0.02 * (hi[1] - lo[1])];
    for _ in 0..40 {
        if w0 >= w1 || z0 >= z1 {
            break;
        }
        let rect = Rect::new(w0, w1, z0, z1)?;
        if chart_covers(phi1, phi2, rect, lo, hi, margin) {
            return Ok(rect);
        }
        let (cw, cz) = (0.5 * (w0 + w1), 0.5 * (z0 + z1));
        w0 = cw + (w0 - cw) * 0.92;
        w1 = cw + (w1 - cw) * 0.92;
        z0 = cz + (z0 - cz) * 0.92;
        z1 = cz + (z1 - cz) * 0.92;
    }
    Err(Error::numerical("could not inscribe an invariant rectangle in the tabulated chart"))
}

fn newton_invert(
    phi1: &BicubicTable,
    phi2: &BicubicTable,
    w: f64,
    z: f64,
    seed: [f64; 2],
) -> Option<[f64; 2]> {
    let mut u = seed;
    for _ in 0..50 {
        let (p1, a, b) = phi1.eval(u[0], u[1]);
        let (p2, c, d) = phi2.eval(u[0], u[1]);
        let r = [p1 - w, p2 - z];
        let det = a * d - b * c;
        if det.abs() < 1e-14 {
            return None;
        }
        let du = [(d * r[0] - b * r[1]) / det, (-c * r[0] + a * r[1]) / det];
        u = [u[0] - du[0], u[1] - du[1]];
        if du[0].abs() + du[1].abs() < 1e-13 * (u[0].abs() + u[1].abs() + 1.0) {
            return Some(u);
        }
    }
    Some(u)
}

fn chart_covers(
    phi1: &BicubicTable,
    phi2: &BicubicTable,
    rect: Rect,
    lo: [f64; 2],
    hi: [f64; 2],
    margin: [f64; 2],
) -> bool {
    let n = 9;
    let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let mut seed = center;
    for i in 0..=n {
        for k in 0..=n {
            let w = rect.w_min + rect.w_span() * i as f64 / n as f64;
            let z = rect.z_min + rect.z_span() * k as f64 / n as f64;
            match newton_invert(phi1, phi2, w, z, seed) {
                Some(u) => {
                    if u[0] < lo[0] + margin[0]
                        || u[0] > hi[0] - margin[0]
                        || u[1] < lo[1] + margin[1]
                        || u[1] > hi[1] - margin[1]
                    {
                        return false;
                    }
                    seed = u;
                }
                None => return false,
            }
        }
    }
    true
}

/// Freeze the Newton-inverted chart into bicubic tables over `rect`.
fn invert_chart(
    phi1: &BicubicTable,
    phi2: &BicubicTable,
    rect: Rect,
    lo: [f64; 2],
    hi: [f64; 2],
) -> Result<(BicubicTable, BicubicTable)> {
    let n = 96usize;
    let mut u1 = vec![0.0; (n + 1) * (n + 1)];
    let mut u2 = vec![0.0; (n + 1) * (n + 1)];
    let mut seed_row = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    for i in 0..=n {
        let w = rect.w_min + rect.w_span() * i as f64 / n as f64;
        let mut seed = seed_row;
        for k in 0..=n {
            let z = rect.z_min + rect.z_span() * k as f64 / n as f64;
            let u = newton_invert(phi1, phi2, w, z, seed)
                .ok_or_else(|| Error::numerical("chart inversion diverged"))?;
            seed = u;
            if k == 0 {
                seed_row = u;
            }
            u1[i * (n + 1) + k] = u[0];
            u2[i * (n + 1) + k] = u[1];
        }
    }
    let mk = |data: Vec<f64>| BicubicTable {
        x0: rect.w_min,
        y0: rect.z_min,
        hx: rect.w_span() / n as f64,
        hy: rect.z_span() / n as f64,
        nx: n + 1,
        ny: n + 1,
        data,
    };
    Ok((mk(u1), mk(u2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_ragged_and_non_grid_input() {
        assert!(matches!(TabulatedSystem::from_text("1 2 3\n"), Err(Error::Parse(_))));
        // Rectangular count but duplicated node.
        let mut text = String::new();
        for i in 0..4 {
            for k in 0..4 {
                let (a, b) = if i == 3 && k == 3 { (0, 0) } else { (i, k) };
                text.push_str(&format!("{} {} 0.0 0.0\n", a, b));
            }
        }
        assert!(TabulatedSystem::from_text(&text).is_err());
    }

    #[test]
    fn bicubic_reproduces_quadratics_and_converges_on_cubics() {
        // Central-difference slopes are exact through degree 2 per axis, so
        // biquadratics come back exactly; cubics converge at second order.
        let n = 8;
        let mut data = vec![0.0; n * n];
        let f = |x: f64, y: f64| x * x - 2.0 * x * y + 0.5 * y * y + x * x * y * y;
        for i in 0..n {
            for k in 0..n {
                data[i * n + k] = f(i as f64, k as f64);
            }
        }
        let t = BicubicTable { x0: 0.0, y0: 0.0, hx: 1.0, hy: 1.0, nx: n, ny: n, data };
        for (x, y) in [(2.3, 3.7), (4.5, 2.2), (3.0, 4.0)] {
            let (v, gx, gy) = t.eval(x, y);
            assert!((v - f(x, y)).abs() < 1e-9, "value at ({x}, {y})");
            assert!((gx - (2.0 * x - 2.0 * y + 2.0 * x * y * y)).abs() < 1e-8);
            assert!((gy - (-2.0 * x + y + 2.0 * x * x * y)).abs() < 1e-8);
        }

        let cubic = |x: f64| x * x * x;
        let err_at = |h: f64| {
            let m = (7.0 / h) as usize + 1;
            let data: Vec<f64> = (0..m)
                .flat_map(|i| (0..m).map(move |_| cubic(i as f64 * h)))
                .collect();
            let t = BicubicTable { x0: 0.0, y0: 0.0, hx: h, hy: h, nx: m, ny: m, data };
            (t.eval(2.3, 3.7).0 - cubic(2.3)).abs()
        };
        let (e1, e2) = (err_at(1.0), err_at(0.5));
        assert!(e2 < e1 / 3.0, "cubic error {e1} -> {e2} under h/2");
    }
}
