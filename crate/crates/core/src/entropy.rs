//! Singular entropies cut along a Riemann invariant.
//!
//! For a fixed cut level ξ the table Θ[ξ] solves the Goursat problem
//!
//! ```text
//! Θ_wz = (g_z/g) Θ_w + (h_w/h) Θ_z   on 𝒲,
//! Θ(w, z⎵) = 1,   Θ(ξ, z) = g(ξ, z),
//! ```
//!
//! where g and h absorb the eigenvalue shear:
//!
//! ```text
//! g(w, z) = exp ∫_{z⎵}^{z} −∂λ₁/∂z / (λ₁ − λ₂) (w, y) dy,
//! h(w, z) = exp ∫_{w⎵}^{w}  ∂λ₂/∂w / (λ₁ − λ₂) (y, z) dy.
//! ```
//!
//! The companion flux Ξ[ξ] integrates Ξ_w = λ₁Θ_w, Ξ_z = λ₂Θ_z from the
//! normalization Ξ = λ₁Θ on the cut line {w = ξ}. The cut entropies are the
//! one-sided restrictions χ[ξ] = Θ·1_{w≥ξ}, χ̃[ξ] = Θ·1_{w≤ξ} with fluxes
//! ψ, ψ̃, and the kinetic speed is λ₁[ξ] = ψ/χ. The second-family members
//! υ[ζ], φ[ζ] come from the same construction with the roles of (w, λ₁)
//! and (z, λ₂) exchanged.
//!
//! Everything here works on a `FamilyView`, which presents either family in
//! the same orientation; family-two tables therefore live on the swapped
//! rectangle and are unswapped by the `KineticFamily` accessors.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field2, Grid2, Rect};
use crate::system::{NonlinearityCertificate, SystemSpec};

/// Either characteristic family, presented so that the cut invariant is the
/// first view coordinate and the cut eigenvalue is `lam_cut`.
#[derive(Clone, Copy)]
pub(crate) struct FamilyView<'a> {
    pub sys: &'a SystemSpec,
    pub second: bool,
}

impl<'a> FamilyView<'a> {
    pub fn first(sys: &'a SystemSpec) -> Self {
        FamilyView { sys, second: false }
    }

    pub fn second(sys: &'a SystemSpec) -> Self {
        FamilyView { sys, second: true }
    }

    pub fn rect(&self) -> Rect {
        if self.second {
            self.sys.rect().swapped()
        } else {
            self.sys.rect()
        }
    }

    /// Eigenvalue of the cut family at view coordinates (a, b).
    pub fn lam_cut(&self, a: f64, b: f64) -> f64 {
        if self.second {
            self.sys.lambdas_wz(b, a).1
        } else {
            self.sys.lambdas_wz(a, b).0
        }
    }

    /// Eigenvalue of the opposite family.
    pub fn lam_other(&self, a: f64, b: f64) -> f64 {
        if self.second {
            self.sys.lambdas_wz(b, a).0
        } else {
            self.sys.lambdas_wz(a, b).1
        }
    }

    /// Goursat coefficient a = g_z/g = −∂_z λcut / (λcut − λother),
    /// with a centered difference of step `hz` clamped into the rectangle.
    fn coeff_a(&self, w: f64, z: f64, hz: f64) -> f64 {
        let rect = self.rect();
        let d = if z - hz < rect.z_min {
            (-3.0 * self.lam_cut(w, z) + 4.0 * self.lam_cut(w, z + hz) - self.lam_cut(w, z + 2.0 * hz))
                / (2.0 * hz)
        } else if z + hz > rect.z_max {
            (3.0 * self.lam_cut(w, z) - 4.0 * self.lam_cut(w, z - hz) + self.lam_cut(w, z - 2.0 * hz))
                / (2.0 * hz)
        } else {
            (self.lam_cut(w, z + hz) - self.lam_cut(w, z - hz)) / (2.0 * hz)
        };
        -d / (self.lam_cut(w, z) - self.lam_other(w, z))
    }

    /// Goursat coefficient b = h_w/h = ∂_w λother / (λcut − λother).
    fn coeff_b(&self, w: f64, z: f64, hw: f64) -> f64 {
        let rect = self.rect();
        let d = if w - hw < rect.w_min {
            (-3.0 * self.lam_other(w, z) + 4.0 * self.lam_other(w + hw, z)
                - self.lam_other(w + 2.0 * hw, z))
                / (2.0 * hw)
        } else if w + hw > rect.w_max {
            (3.0 * self.lam_other(w, z) - 4.0 * self.lam_other(w - hw, z)
                + self.lam_other(w - 2.0 * hw, z))
                / (2.0 * hw)
        } else {
            (self.lam_other(w + hw, z) - self.lam_other(w - hw, z)) / (2.0 * hw)
        };
        d / (self.lam_cut(w, z) - self.lam_other(w, z))
    }
}

/// The fields g, h on a grid, their log-derivative integrands at the nodes,
/// and precomputed cell-center coefficients shared by every Goursat solve
/// on this grid.
#[derive(Debug, Clone)]
pub struct GHFields {
    pub grid: Grid2,
    pub g: Field2,
    pub h: Field2,
    /// Integrand of log g along z: −∂zλcut/(λcut − λother) at the nodes.
    pub a_node: Field2,
    /// Integrand of log h along w: ∂wλother/(λcut − λother) at the nodes.
    pub b_node: Field2,
    /// a·dz/2 and b·dw/2 at cell centers, cell (i, k) at i·(nz−1)+k.
    alpha_c: Vec<f64>,
    beta_c: Vec<f64>,
    /// λcut at (w_{i+1/2}, z_k), row-major (nw−1)×nz.
    lam_cut_wmid: Vec<f64>,
    /// λother at (w_i, z_{k+1/2}), row-major nw×(nz−1).
    lam_other_zmid: Vec<f64>,
    /// λcut at the nodes.
    pub lam_cut_node: Field2,
    pub(crate) second_family: bool,
}

impl GHFields {
    /// Private cell-center caches, for the columnar dump.
    pub(crate) fn scratch(&self) -> (&[f64], &[f64], &[f64], &[f64], bool) {
        (
            &self.alpha_c,
            &self.beta_c,
            &self.lam_cut_wmid,
            &self.lam_other_zmid,
            self.second_family,
        )
    }

    /// Rebuild from dumped parts; lengths must match the grid.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        grid: Grid2,
        g: Field2,
        h: Field2,
        a_node: Field2,
        b_node: Field2,
        alpha_c: Vec<f64>,
        beta_c: Vec<f64>,
        lam_cut_wmid: Vec<f64>,
        lam_other_zmid: Vec<f64>,
        lam_cut_node: Field2,
        second_family: bool,
    ) -> Result<GHFields> {
        let (nw, nz) = (grid.nw, grid.nz);
        if alpha_c.len() != (nw - 1) * (nz - 1)
            || beta_c.len() != (nw - 1) * (nz - 1)
            || lam_cut_wmid.len() != (nw - 1) * nz
            || lam_other_zmid.len() != nw * (nz - 1)
        {
            return Err(Error::parse("cell-cache lengths disagree with the grid"));
        }
        Ok(GHFields {
            grid,
            g,
            h,
            a_node,
            b_node,
            alpha_c,
            beta_c,
            lam_cut_wmid,
            lam_other_zmid,
            lam_cut_node,
            second_family,
        })
    }
}

pub(crate) fn compute_gh_view(view: FamilyView<'_>, nw: usize, nz: usize) -> Result<GHFields> {
    let grid = Grid2::new(view.rect(), nw, nz)?;
    let (dw, dz) = (grid.dw(), grid.dz());
    // Derivative step ties to the grid like the certification stencil:
    // span/(4·intervals) = quarter cell.
    let hw = 0.25 * dw;
    let hz = 0.25 * dz;

    let a_node = Field2::from_fn(grid, |w, z| view.coeff_a(w, z, hz));
    let b_node = Field2::from_fn(grid, |w, z| view.coeff_b(w, z, hw));

    // Cumulative trapezoid of the integrands, then exponentiate.
    let mut g = Field2::zeros(grid);
    for i in 0..nw {
        let mut acc = 0.0;
        g.set(i, 0, 1.0);
        for k in 1..nz {
            acc += 0.5 * dz * (a_node.at(i, k - 1) + a_node.at(i, k));
            g.set(i, k, acc.exp());
        }
    }
    let mut h = Field2::zeros(grid);
    for k in 0..nz {
        let mut acc = 0.0;
        h.set(0, k, 1.0);
        for i in 1..nw {
            acc += 0.5 * dw * (b_node.at(i - 1, k) + b_node.at(i, k));
            h.set(i, k, acc.exp());
        }
    }
    if !g.data.iter().chain(h.data.iter()).all(|v| v.is_finite()) {
        return Err(Error::numerical("g/h quadrature produced non-finite values"));
    }

    let mut alpha_c = vec![0.0; (nw - 1) * (nz - 1)];
    let mut beta_c = vec![0.0; (nw - 1) * (nz - 1)];
    for i in 0..nw - 1 {
        let wc = grid.w(i) + 0.5 * dw;
        for k in 0..nz - 1 {
            let zc = grid.z(k) + 0.5 * dz;
            alpha_c[i * (nz - 1) + k] = view.coeff_a(wc, zc, hz) * 0.5 * dz;
            beta_c[i * (nz - 1) + k] = view.coeff_b(wc, zc, hw) * 0.5 * dw;
        }
    }
    let mut lam_cut_wmid = vec![0.0; (nw - 1) * nz];
    for i in 0..nw - 1 {
        let wc = grid.w(i) + 0.5 * dw;
        for k in 0..nz {
            lam_cut_wmid[i * nz + k] = view.lam_cut(wc, grid.z(k));
        }
    }
    let mut lam_other_zmid = vec![0.0; nw * (nz - 1)];
    for i in 0..nw {
        for k in 0..nz - 1 {
            lam_other_zmid[i * (nz - 1) + k] = view.lam_other(grid.w(i), grid.z(k) + 0.5 * dz);
        }
    }
    let lam_cut_node = Field2::from_fn(grid, |w, z| view.lam_cut(w, z));

    Ok(GHFields {
        grid,
        g,
        h,
        a_node,
        b_node,
        alpha_c,
        beta_c,
        lam_cut_wmid,
        lam_other_zmid,
        lam_cut_node,
        second_family: view.second,
    })
}

/// First-family g, h on an `nw × nz` node grid.
///
/// Requires a certificate with positive spectral gap; the integrands blow up
/// where the eigenvalues touch.
pub fn compute_gh(
    sys: &SystemSpec,
    cert: &NonlinearityCertificate,
    nw: usize,
    nz: usize,
) -> Result<GHFields> {
    if !(cert.gap_min > 0.0) {
        return Err(Error::invariant(format!(
            "spectral gap not certified positive (gap_min = {})",
            cert.gap_min
        )));
    }
    compute_gh_view(FamilyView::first(sys), nw, nz)
}

/// One singular entropy: Θ on the full rectangle for a cut level snapped to
/// a grid node, plus its flux Ξ once `integrate_flux` has run.
#[derive(Debug, Clone)]
pub struct EntropyTable {
    pub xi_index: usize,
    /// Snapped cut level (a grid node).
    pub xi: f64,
    pub requested_xi: f64,
    pub theta: Field2,
    pub theta_min: f64,
    pub flux: Option<Field2>,
    /// Max |Ξ_w-path − Ξ_z-path| over the grid; O(h²) curl diagnostic.
    pub path_defect: Option<f64>,
}

pub(crate) fn snap_level(grid: &Grid2, xi: f64) -> Result<(usize, f64)> {
    let rect = grid.rect;
    if xi < rect.w_min - 1e-12 || xi > rect.w_max + 1e-12 {
        return Err(Error::config(format!(
            "cut level {xi} outside [{}, {}]",
            rect.w_min, rect.w_max
        )));
    }
    let idx = ((xi - rect.w_min) / grid.dw()).round() as usize;
    let idx = idx.min(grid.nw - 1);
    Ok((idx, grid.w(idx)))
}

pub(crate) fn solve_goursat_tables(gh: &GHFields, xi: f64) -> Result<EntropyTable> {
    let grid = gh.grid;
    let (nw, nz) = (grid.nw, grid.nz);
    let (cut, xi_snapped) = snap_level(&grid, xi)?;

    let mut theta = Field2::zeros(grid);
    // Data: 1 on the bottom edge, g on the cut column.
    for i in 0..nw {
        theta.set(i, 0, 1.0);
    }
    for k in 0..nz {
        theta.set(cut, k, gh.g.at(cut, k));
    }
    let nc = nz - 1;

    // March right of the cut; each cell solves the trapezoidal cell update
    // for its upper-right corner.
    for i in cut..nw - 1 {
        for k in 0..nz - 1 {
            let al = gh.alpha_c[i * nc + k];
            let be = gh.beta_c[i * nc + k];
            let u00 = theta.at(i, k);
            let u10 = theta.at(i + 1, k);
            let u01 = theta.at(i, k + 1);
            let v = (u01 * (1.0 - al + be) + u10 * (1.0 + al - be) - u00 * (1.0 + al + be))
                / (1.0 - al - be);
            theta.set(i + 1, k + 1, v);
        }
    }
    // March left of the cut; unknown is the upper-left corner.
    for i in (1..=cut).rev() {
        for k in 0..nz - 1 {
            let al = gh.alpha_c[(i - 1) * nc + k];
            let be = gh.beta_c[(i - 1) * nc + k];
            let u00 = theta.at(i - 1, k);
            let u10 = theta.at(i, k);
            let u11 = theta.at(i, k + 1);
            let v = (u11 * (1.0 - al - be) - u10 * (1.0 + al - be) + u00 * (1.0 + al + be))
                / (1.0 - al + be);
            theta.set(i - 1, k + 1, v);
        }
    }

    if !theta.data.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical("Goursat march produced non-finite values"));
    }
    let theta_min = theta.min();
    Ok(EntropyTable {
        xi_index: cut,
        xi: xi_snapped,
        requested_xi: xi,
        theta,
        theta_min,
        flux: None,
        path_defect: None,
    })
}

/// Solve the Goursat problem for the first family at cut level `xi`
/// (snapped to the nearest w-node and recorded in the table).
pub fn solve_goursat(sys: &SystemSpec, gh: &GHFields, xi: f64) -> Result<EntropyTable> {
    if gh.second_family {
        return Err(Error::config("gh fields belong to the second family"));
    }
    let _ = sys;
    solve_goursat_tables(gh, xi)
}

pub(crate) fn integrate_flux_tables(gh: &GHFields, table: &mut EntropyTable) {
    let grid = gh.grid;
    let (nw, nz) = (grid.nw, grid.nz);
    let cut = table.xi_index;
    let theta = &table.theta;

    // Primary path: normalize Ξ = λcut·Θ on the cut column, transport along
    // w with a midpoint eigenvalue on each cell edge.
    let mut flux = Field2::zeros(grid);
    for k in 0..nz {
        flux.set(cut, k, gh.lam_cut_node.at(cut, k) * theta.at(cut, k));
    }
    for i in cut..nw - 1 {
        for k in 0..nz {
            let lam = gh.lam_cut_wmid[i * nz + k];
            let v = flux.at(i, k) + lam * (theta.at(i + 1, k) - theta.at(i, k));
            flux.set(i + 1, k, v);
        }
    }
    for i in (1..=cut).rev() {
        for k in 0..nz {
            let lam = gh.lam_cut_wmid[(i - 1) * nz + k];
            let v = flux.at(i, k) - lam * (theta.at(i, k) - theta.at(i - 1, k));
            flux.set(i - 1, k, v);
        }
    }

    // Shadow path: along the bottom edge first (where Θ ≡ 1 makes Ξ
    // constant), then up each column with Ξ_z = λother·Θ_z. The gap between
    // the two paths is the discrete curl of (λ₁Θ_w, λ₂Θ_z).
    let nc = nz - 1;
    let base = gh.lam_cut_node.at(cut, 0);
    let mut defect: f64 = 0.0;
    for i in 0..nw {
        let mut v = base;
        defect = defect.max((v - flux.at(i, 0)).abs());
        for k in 0..nz - 1 {
            let lam = gh.lam_other_zmid[i * nc + k];
            v += lam * (theta.at(i, k + 1) - theta.at(i, k));
            defect = defect.max((v - flux.at(i, k + 1)).abs());
        }
    }

    table.flux = Some(flux);
    table.path_defect = Some(defect);
}

/// Fill in the entropy flux Ξ for a first-family table.
pub fn integrate_flux(sys: &SystemSpec, gh: &GHFields, table: &mut EntropyTable) -> Result<()> {
    if gh.second_family {
        return Err(Error::config("gh fields belong to the second family"));
    }
    let _ = sys;
    integrate_flux_tables(gh, table);
    Ok(())
}

/// Certified strip constants: on every strip ξ ≤ w ≤ ξ + r̄ the cut
/// entropy stays ≥ c_pos and the kinetic speed λ₁[ξ] = Ξ/Θ grows in ξ at
/// rate ≥ c_mono.
#[derive(Debug, Clone)]
pub struct LocalConstants {
    pub r_bar: f64,
    pub c_pos: f64,
    pub c_mono: f64,
    /// Full dyadic search trace: (r, c_pos(r), c_mono(r)).
    pub ladder: Vec<(f64, f64, f64)>,
}

/// Both families of singular entropies on one grid, with everything the
/// kinetic and decay analyses consume: Θ/Ξ tables per cut level, the g/h
/// fields, and the certified local constants.
#[derive(Debug, Clone)]
pub struct KineticFamily {
    pub certificate: NonlinearityCertificate,
    pub grid: Grid2,
    pub gh: GHFields,
    pub xi_nodes: Vec<f64>,
    pub tables: Vec<EntropyTable>,
    /// Second family lives on the swapped grid; accessors unswap.
    pub grid_second: Grid2,
    pub gh_second: GHFields,
    pub zeta_nodes: Vec<f64>,
    pub tables_second: Vec<EntropyTable>,
    pub constants: LocalConstants,
    pub constants_second: LocalConstants,
}

impl KineticFamily {
    /// χ[ξⱼ](w, z) = Θ[ξⱼ]·1_{w ≥ ξⱼ}; the cut line itself counts.
    pub fn chi(&self, j: usize, w: f64, z: f64) -> f64 {
        if w >= self.xi_nodes[j] {
            self.tables[j].theta.bilinear(w, z)
        } else {
            0.0
        }
    }

    pub fn psi(&self, j: usize, w: f64, z: f64) -> f64 {
        if w >= self.xi_nodes[j] {
            self.tables[j].flux.as_ref().expect("flux integrated").bilinear(w, z)
        } else {
            0.0
        }
    }

    /// χ̃[ξⱼ] = Θ[ξⱼ]·1_{w ≤ ξⱼ}.
    pub fn chi_tilde(&self, j: usize, w: f64, z: f64) -> f64 {
        if w <= self.xi_nodes[j] {
            self.tables[j].theta.bilinear(w, z)
        } else {
            0.0
        }
    }

    pub fn psi_tilde(&self, j: usize, w: f64, z: f64) -> f64 {
        if w <= self.xi_nodes[j] {
            self.tables[j].flux.as_ref().expect("flux integrated").bilinear(w, z)
        } else {
            0.0
        }
    }

    /// Second-family υ[ζⱼ](w, z) = Θ²[ζⱼ]·1_{z ≥ ζⱼ} (tables live on the
    /// swapped rectangle).
    pub fn upsilon(&self, j: usize, w: f64, z: f64) -> f64 {
        if z >= self.zeta_nodes[j] {
            self.tables_second[j].theta.bilinear(z, w)
        } else {
            0.0
        }
    }

    pub fn phi(&self, j: usize, w: f64, z: f64) -> f64 {
        if z >= self.zeta_nodes[j] {
            self.tables_second[j].flux.as_ref().expect("flux integrated").bilinear(z, w)
        } else {
            0.0
        }
    }

    pub fn upsilon_tilde(&self, j: usize, w: f64, z: f64) -> f64 {
        if z <= self.zeta_nodes[j] {
            self.tables_second[j].theta.bilinear(z, w)
        } else {
            0.0
        }
    }

    pub fn phi_tilde(&self, j: usize, w: f64, z: f64) -> f64 {
        if z <= self.zeta_nodes[j] {
            self.tables_second[j].flux.as_ref().expect("flux integrated").bilinear(z, w)
        } else {
            0.0
        }
    }

    pub fn xi_spacing(&self) -> f64 {
        self.xi_nodes[1] - self.xi_nodes[0]
    }

    pub fn zeta_spacing(&self) -> f64 {
        self.zeta_nodes[1] - self.zeta_nodes[0]
    }
}

/// Build both families: certify-gated Goursat tables on every cut node of a
/// uniform sub-lattice, fluxes, and the local strip constants.
///
/// `n_levels − 1` must divide both `nw − 1` and `nz − 1` so cut levels land
/// exactly on grid nodes.
pub fn build_kinetic_family(
    sys: &SystemSpec,
    cert: &NonlinearityCertificate,
    n_levels: usize,
    nw: usize,
    nz: usize,
) -> Result<KineticFamily> {
    if !cert.valid() {
        return Err(Error::invariant(format!(
            "nonlinearity certificate invalid: gap_min={}, gnl1_min={}, gnl2_min={}, convexity={}",
            cert.gap_min, cert.gnl1_min, cert.gnl2_min, cert.convexity_modulus
        )));
    }
    if n_levels < 5 {
        return Err(Error::config(format!("need at least 5 cut levels, got {n_levels}")));
    }
    if (nw - 1) % (n_levels - 1) != 0 || (nz - 1) % (n_levels - 1) != 0 {
        return Err(Error::config(format!(
            "level count {n_levels} does not divide the grid: need (n_levels-1) | (nw-1) and | (nz-1)"
        )));
    }

    let build_side = |second: bool| -> Result<(GHFields, Vec<f64>, Vec<EntropyTable>)> {
        let view = if second { FamilyView::second(sys) } else { FamilyView::first(sys) };
        let (na, nb) = if second { (nz, nw) } else { (nw, nz) };
        let gh = compute_gh_view(view, na, nb)?;
        let stride = (na - 1) / (n_levels - 1);
        let levels: Vec<f64> = (0..n_levels).map(|j| gh.grid.w(j * stride)).collect();
        let tables: Vec<EntropyTable> = levels
            .par_iter()
            .map(|&xi| {
                let mut t = solve_goursat_tables(&gh, xi)?;
                integrate_flux_tables(&gh, &mut t);
                Ok(t)
            })
            .collect::<Result<_>>()?;
        Ok((gh, levels, tables))
    };

    let (gh, xi_nodes, tables) = build_side(false)?;
    let (gh_second, zeta_nodes, tables_second) = build_side(true)?;

    let constants = constants_for(&gh.grid, &xi_nodes, &tables)?;
    let constants_second = constants_for(&gh_second.grid, &zeta_nodes, &tables_second)?;

    Ok(KineticFamily {
        certificate: *cert,
        grid: gh.grid,
        gh,
        xi_nodes,
        tables,
        grid_second: gh_second.grid,
        gh_second,
        zeta_nodes,
        tables_second,
        constants,
        constants_second,
    })
}

fn constants_for(grid: &Grid2, levels: &[f64], tables: &[EntropyTable]) -> Result<LocalConstants> {
    let dxi = levels[1] - levels[0];
    let span = grid.rect.w_span();
    let floor = (2.0 * dxi).max(2.0 * grid.dw());

    let scan = |r: f64| -> (f64, f64) {
        let mut c_pos = f64::INFINITY;
        let mut c_mono = f64::INFINITY;
        for j in 0..levels.len() {
            let xi = levels[j];
            let lo = tables[j].xi_index;
            let hi = ((xi + r - grid.rect.w_min) / grid.dw() + 1e-9).floor() as usize;
            let hi = hi.min(grid.nw - 1);
            for i in lo..=hi {
                for k in 0..grid.nz {
                    c_pos = c_pos.min(tables[j].theta.at(i, k));
                }
            }
            if j + 1 < levels.len() {
                // Difference quotient of λ₁[ξ] = Ξ/Θ on the strip overlap.
                let lo2 = tables[j + 1].xi_index;
                for i in lo2..=hi {
                    for k in 0..grid.nz {
                        let th0 = tables[j].theta.at(i, k);
                        let th1 = tables[j + 1].theta.at(i, k);
                        if th0 <= 1e-300 || th1 <= 1e-300 {
                            c_mono = f64::NEG_INFINITY;
                            continue;
                        }
                        let l0 = tables[j].flux.as_ref().unwrap().at(i, k) / th0;
                        let l1 = tables[j + 1].flux.as_ref().unwrap().at(i, k) / th1;
                        c_mono = c_mono.min((l1 - l0) / dxi);
                    }
                }
            }
        }
        (c_pos, c_mono)
    };

    let mut ladder = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    let mut r = span;
    while r >= floor - 1e-12 {
        let (c_pos, c_mono) = scan(r);
        ladder.push((r, c_pos, c_mono));
        if best.is_none() && c_pos > 0.0 && c_mono > 0.0 {
            best = Some((r, c_pos, c_mono));
        }
        r *= 0.5;
    }
    match best {
        Some((r_bar, c_pos, c_mono)) => Ok(LocalConstants { r_bar, c_pos, c_mono, ladder }),
        None => Err(Error::invariant(
            "no strip width with positive kinetic constants; system/grid unusable for strip decay",
        )),
    }
}

/// Re-derive the first-family constants from an existing family.
pub fn estimate_local_constants(fam: &KineticFamily) -> Result<LocalConstants> {
    if !fam.certificate.valid() {
        return Err(Error::invariant("family carries an invalid certificate"));
    }
    if fam.tables.iter().any(|t| t.flux.is_none()) {
        return Err(Error::config("family tables are missing fluxes"));
    }
    constants_for(&fam.grid, &fam.xi_nodes, &fam.tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{build_system, certify_nonlinearity, SystemParams};

    fn decoupled() -> SystemSpec {
        build_system("decoupled_burgers", &SystemParams::default()).unwrap()
    }

    fn euler() -> SystemSpec {
        build_system("isentropic_euler", &SystemParams::default()).unwrap()
    }

    #[test]
    fn decoupled_gh_and_theta_are_identically_one() {
        let sys = decoupled();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let gh = compute_gh(&sys, &cert, 33, 33).unwrap();
        for v in gh.g.data.iter().chain(gh.h.data.iter()) {
            assert!((v - 1.0).abs() < 1e-13);
        }
        let mut t = solve_goursat(&sys, &gh, 0.4).unwrap();
        assert!((t.xi - 0.40625).abs() < 1e-12, "snaps to nearest node");
        for v in &t.theta.data {
            assert!((v - 1.0).abs() < 1e-13);
        }
        integrate_flux(&sys, &gh, &mut t).unwrap();
        let flux = t.flux.as_ref().unwrap();
        for v in &flux.data {
            assert!((v - t.xi).abs() < 1e-12, "flux is the cut level itself");
        }
        assert!(t.path_defect.unwrap() < 1e-12);
    }

    #[test]
    fn euler_gamma2_gh_match_closed_forms() {
        // γ = 2 makes the integrands 1/(2(z−w)) and −1/(2(z−w)), so
        // g = √((z−w)/(z_min−w)) and h = √((z−w_min)/(z−w)).
        let sys = euler();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let gh = compute_gh(&sys, &cert, 129, 129).unwrap();
        let rect = sys.rect();
        for i in (0..129).step_by(8) {
            for k in (0..129).step_by(8) {
                let w = gh.grid.w(i);
                let z = gh.grid.z(k);
                let g_exact = ((z - w) / (rect.z_min - w)).sqrt();
                let h_exact = ((z - w) / (z - rect.w_min)).sqrt();
                assert!(
                    (gh.g.at(i, k) - g_exact).abs() < 5e-6,
                    "g({w}, {z}) = {} vs {g_exact}",
                    gh.g.at(i, k)
                );
                assert!(
                    (gh.h.at(i, k) - h_exact).abs() < 5e-6,
                    "h({w}, {z}) = {} vs {h_exact}",
                    gh.h.at(i, k)
                );
            }
        }
    }

    #[test]
    fn gh_quadrature_matches_refined_quadrature() {
        // Same quadrature at nested nodes: the disagreement is the coarse
        // trapezoid error, so it must shrink ≥ 3× per grid halving.
        let sys = euler();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let fine = compute_gh(&sys, &cert, 257, 257).unwrap();
        let diff = |n: usize| {
            let gh = compute_gh(&sys, &cert, n + 1, n + 1).unwrap();
            let s = 256 / n;
            let mut d: f64 = 0.0;
            for i in 0..=n {
                for k in 0..=n {
                    d = d.max((gh.g.at(i, k) - fine.g.at(s * i, s * k)).abs());
                    d = d.max((gh.h.at(i, k) - fine.h.at(s * i, s * k)).abs());
                }
            }
            d
        };
        let (d32, d64) = (diff(32), diff(64));
        assert!(d32 < 1e-4, "coarse quadrature error {d32}");
        assert!(d64 < d32 / 3.0, "quadrature not second order: {d32} -> {d64}");
    }

    #[test]
    fn goursat_boundary_data_is_reproduced() {
        let sys = euler();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let gh = compute_gh(&sys, &cert, 65, 65).unwrap();
        let t = solve_goursat(&sys, &gh, gh.grid.w(32)).unwrap();
        for i in 0..65 {
            assert!((t.theta.at(i, 0) - 1.0).abs() < 1e-14);
        }
        for k in 0..65 {
            assert!((t.theta.at(32, k) - gh.g.at(32, k)).abs() < 1e-14);
        }
        assert!(t.theta_min > 0.0);
    }

    #[test]
    fn flux_path_defect_shrinks_at_second_order() {
        let sys = euler();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let mut defects = Vec::new();
        for n in [33usize, 65, 129] {
            let gh = compute_gh(&sys, &cert, n, n).unwrap();
            let mut t = solve_goursat(&sys, &gh, gh.grid.w((n - 1) / 2)).unwrap();
            integrate_flux(&sys, &gh, &mut t).unwrap();
            defects.push(t.path_defect.unwrap());
        }
        assert!(defects[1] < 0.35 * defects[0], "{defects:?}");
        assert!(defects[2] < 0.35 * defects[1], "{defects:?}");
    }

    #[test]
    fn decoupled_family_constants_are_unit() {
        let sys = decoupled();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let fam = build_kinetic_family(&sys, &cert, 17, 64 + 1, 64 + 1).unwrap();
        assert!((fam.constants.r_bar - 1.0).abs() < 1e-12);
        assert!((fam.constants.c_pos - 1.0).abs() < 1e-12);
        assert!((fam.constants.c_mono - 1.0).abs() < 1e-10);
        assert!((fam.constants_second.r_bar - 1.0).abs() < 1e-12);
        // υ[ζ] of the decoupled system is also ≡ 1 with flux ζ + 2.
        let up = fam.upsilon(8, 0.3, fam.zeta_nodes[8]);
        assert!((up - 1.0).abs() < 1e-12);
        let ph = fam.phi(8, 0.3, fam.zeta_nodes[8]);
        assert!((ph - (fam.zeta_nodes[8] + 2.0)).abs() < 1e-10);
    }

    #[test]
    fn chi_cut_is_one_sided() {
        let sys = decoupled();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let fam = build_kinetic_family(&sys, &cert, 9, 33, 33).unwrap();
        let xi = fam.xi_nodes[4];
        assert!(fam.chi(4, xi - 1e-6, 0.5) == 0.0);
        assert!(fam.chi(4, xi, 0.5) > 0.0);
        assert!(fam.chi_tilde(4, xi + 1e-6, 0.5) == 0.0);
        // χ + χ̃ = Θ off the cut line.
        let w = xi + 0.1;
        let sum = fam.chi(4, w, 0.5) + fam.chi_tilde(4, w, 0.5);
        let th = fam.tables[4].theta.bilinear(w, 0.5);
        assert!((sum - th).abs() < 1e-14);
    }

    #[test]
    fn invalid_certificate_blocks_family_build() {
        let rect = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let sys = SystemSpec::linear_advection(0.0, 1.0, rect).unwrap();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        assert!(!cert.valid());
        let err = build_kinetic_family(&sys, &cert, 9, 33, 33).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn level_grid_mismatch_is_config_error() {
        let sys = decoupled();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        assert!(matches!(
            build_kinetic_family(&sys, &cert, 10, 33, 33),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn estimate_rejects_hand_invalidated_family() {
        let sys = decoupled();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let mut fam = build_kinetic_family(&sys, &cert, 9, 33, 33).unwrap();
        fam.certificate.gnl1_min = 0.0;
        assert!(matches!(estimate_local_constants(&fam), Err(Error::Invariant(_))));
    }

    #[test]
    fn cut_level_outside_rectangle_is_rejected() {
        let sys = decoupled();
        let cert = certify_nonlinearity(&sys, 16).unwrap();
        let gh = compute_gh(&sys, &cert, 33, 33).unwrap();
        assert!(matches!(solve_goursat(&sys, &gh, 1.5), Err(Error::Config(_))));
    }
}
