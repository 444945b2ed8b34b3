//! 2×2 systems of conservation laws ∂ₜu + ∂ₓf(u) = 0 on a state domain
//! that maps onto a rectangle in Riemann-invariant coordinates.
//!
//! A `SystemSpec` bundles the flux, its Jacobian, the invariant chart
//! (w, z) = (φ₁(u), φ₂(u)) with its inverse, eigenvalues as functions of
//! (w, z), and a strictly convex entropy pair (E, G). Eigenvalues are
//! ordered λ₁ < λ₂ on the whole rectangle; λ₁ is genuinely nonlinear in w
//! and λ₂ in z, which `certify_nonlinearity` verifies with certified grid
//! minima.

mod tabulated;

pub use tabulated::TabulatedSystem;

use crate::error::{Error, Result};
use crate::grid::{Grid2, Rect};

pub type State = [f64; 2];

/// Pointwise eigenstructure of Df(u): λ₁ < λ₂, unit right eigenvectors,
/// left rows normalized so ℓᵢ·rⱼ = δᵢⱼ.
#[derive(Debug, Clone, Copy)]
pub struct EigenData {
    pub lambda: [f64; 2],
    pub gap: f64,
    pub right: [[f64; 2]; 2],
    pub left: [[f64; 2]; 2],
}

/// Grid-certified lower bounds: spectral gap, genuine-nonlinearity minima
/// ∂wλ₁ and ∂zλ₂, and the smallest eigenvalue of ∇²E over the rectangle.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearityCertificate {
    pub gap_min: f64,
    pub gnl1_min: f64,
    pub gnl2_min: f64,
    pub convexity_modulus: f64,
    /// Intervals per axis of the certification grid.
    pub grid_n: usize,
    /// Node spacing of that grid in w (z spacing scales by the aspect ratio).
    pub grid_step: f64,
}

impl NonlinearityCertificate {
    pub fn valid(&self) -> bool {
        self.gap_min > 0.0
            && self.gnl1_min > 0.0
            && self.gnl2_min > 0.0
            && self.convexity_modulus > 0.0
    }
}

#[derive(Debug, Clone)]
pub enum SystemKind {
    /// u = (w, z), f = (w²/2, z²/2 + Λz). The shift Λ keeps λ₂ = z + Λ above
    /// λ₁ = w on the rectangle.
    DecoupledBurgers { shift: f64 },
    /// u = (ρ, m), f = (m, m²/ρ + κρ^γ).
    IsentropicEuler { gamma: f64, kappa: f64 },
    /// u = (V, q), f = (−q, κV^{−γ}); V is specific volume.
    /// `vol_ref` anchors the γ = 1 invariant chart.
    PSystem { gamma: f64, kappa: f64, vol_ref: f64 },
    /// f = (a₁w, a₂z); strictly hyperbolic but nowhere genuinely nonlinear,
    /// kept around as the canonical invalid-certificate case.
    LinearAdvection { a1: f64, a2: f64 },
    /// Flux (and optionally entropy) given on a state grid, with a
    /// numerically built invariant chart.
    Tabulated(TabulatedSystem),
}

#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    pub kind: SystemKind,
    rect: Rect,
    wave_speed_bound: f64,
}

/// Parameters for the named builtins; unused fields are ignored per system.
#[derive(Debug, Clone, Default)]
pub struct SystemParams {
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    /// Density box for `isentropic_euler`.
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    /// Velocity box for `isentropic_euler` / `p_system`.
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    /// Specific-volume box for `p_system`.
    pub vol_min: Option<f64>,
    pub vol_max: Option<f64>,
    /// Invariant rectangle for `decoupled_burgers`.
    pub rect: Option<Rect>,
}

pub fn build_system(name: &str, params: &SystemParams) -> Result<SystemSpec> {
    match name {
        "decoupled_burgers" => {
            let rect = match params.rect {
                Some(r) => Rect::new(r.w_min, r.w_max, r.z_min, r.z_max)?,
                None => Rect::new(0.0, 1.0, 0.0, 1.0)?,
            };
            SystemSpec::decoupled_burgers(rect)
        }
        "isentropic_euler" => {
            let gamma = params.gamma.unwrap_or(2.0);
            let kappa = params.kappa.unwrap_or(1.0);
            let rho = (params.rho_min.unwrap_or(0.5), params.rho_max.unwrap_or(2.0));
            let v = (params.v_min.unwrap_or(-0.5), params.v_max.unwrap_or(0.5));
            SystemSpec::isentropic_euler(gamma, kappa, rho, v)
        }
        "p_system" => {
            let gamma = params.gamma.unwrap_or(2.0);
            let kappa = params.kappa.unwrap_or(1.0);
            let vol = (params.vol_min.unwrap_or(0.8), params.vol_max.unwrap_or(2.0));
            let q = (params.v_min.unwrap_or(-0.5), params.v_max.unwrap_or(0.5));
            SystemSpec::p_system(gamma, kappa, vol, q)
        }
        other => Err(Error::config(format!("unknown system '{other}'"))),
    }
}

impl SystemSpec {
    pub fn decoupled_burgers(rect: Rect) -> Result<SystemSpec> {
        let shift = 2.0;
        if rect.z_min + shift <= rect.w_max {
            return Err(Error::config(format!(
                "decoupled rectangle too wide: z_min + {shift} must exceed w_max"
            )));
        }
        Ok(Self::finish("decoupled_burgers", SystemKind::DecoupledBurgers { shift }, rect))
    }

    pub fn isentropic_euler(
        gamma: f64,
        kappa: f64,
        (rho_min, rho_max): (f64, f64),
        (v_min, v_max): (f64, f64),
    ) -> Result<SystemSpec> {
        if !(gamma > 1.0) {
            return Err(Error::config(format!("isentropic_euler needs gamma > 1, got {gamma}")));
        }
        if !(kappa > 0.0) {
            return Err(Error::config(format!("isentropic_euler needs kappa > 0, got {kappa}")));
        }
        if !(rho_min > 0.0) {
            return Err(Error::config(
                "density lower bound must be positive: strict hyperbolicity fails at vacuum",
            ));
        }
        if rho_min >= rho_max || v_min >= v_max {
            return Err(Error::config("empty state box"));
        }
        let h = |rho: f64| 2.0 * (kappa * gamma).sqrt() / (gamma - 1.0) * rho.powf(0.5 * (gamma - 1.0));
        // Image of the (ρ, v) box under u ↦ (v − h(ρ), v + h(ρ)), widened to
        // its bounding rectangle. The rectangle stays hyperbolic iff the two
        // invariant ranges do not touch.
        let rect = Rect::new(
            v_min - h(rho_max),
            v_max - h(rho_min),
            v_min + h(rho_min),
            v_max + h(rho_max),
        )?;
        if rect.z_min <= rect.w_max {
            return Err(Error::config(format!(
                "state box touches sonic degeneracy: 2h(rho_min) = {:.6} must exceed velocity span {:.6}",
                2.0 * h(rho_min),
                v_max - v_min
            )));
        }
        Ok(Self::finish("isentropic_euler", SystemKind::IsentropicEuler { gamma, kappa }, rect))
    }

    pub fn p_system(
        gamma: f64,
        kappa: f64,
        (vol_min, vol_max): (f64, f64),
        (q_min, q_max): (f64, f64),
    ) -> Result<SystemSpec> {
        if !(gamma >= 1.0) {
            return Err(Error::config(format!("p_system needs gamma >= 1, got {gamma}")));
        }
        if !(kappa > 0.0) {
            return Err(Error::config(format!("p_system needs kappa > 0, got {kappa}")));
        }
        if !(vol_min > 0.0) {
            return Err(Error::config("specific volume lower bound must be positive"));
        }
        if vol_min >= vol_max || q_min >= q_max {
            return Err(Error::config("empty state box"));
        }
        let vol_ref = 2.0 * vol_max;
        let kind = SystemKind::PSystem { gamma, kappa, vol_ref };
        let hh = |vol: f64| psys_h(gamma, kappa, vol_ref, vol);
        // H is increasing and negative on (0, vol_ref); w = q + H, z = q − H.
        let rect = Rect::new(
            q_min + hh(vol_min),
            q_max + hh(vol_max),
            q_min - hh(vol_max),
            q_max - hh(vol_min),
        )?;
        if rect.z_min <= rect.w_max {
            return Err(Error::config(format!(
                "state box too wide for p_system chart: -2H(vol_max) = {:.6} must exceed velocity span {:.6}",
                -2.0 * hh(vol_max),
                q_max - q_min
            )));
        }
        Ok(Self::finish("p_system", kind, rect))
    }

    pub fn linear_advection(a1: f64, a2: f64, rect: Rect) -> Result<SystemSpec> {
        if a1 >= a2 {
            return Err(Error::config("linear_advection needs a1 < a2"));
        }
        Ok(Self::finish("linear_advection", SystemKind::LinearAdvection { a1, a2 }, rect))
    }

    pub fn from_tabulated(tab: TabulatedSystem) -> Result<SystemSpec> {
        let rect = tab.rect();
        Ok(Self::finish("tabulated", SystemKind::Tabulated(tab), rect))
    }

    fn finish(name: &str, kind: SystemKind, rect: Rect) -> SystemSpec {
        let mut sys = SystemSpec {
            name: name.to_string(),
            kind,
            rect,
            wave_speed_bound: 0.0,
        };
        sys.wave_speed_bound = sys.scan_wave_speed(129);
        sys
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    /// Grid-scanned bound L = max over the rectangle of max(|λ₁|, |λ₂|).
    pub fn wave_speed_bound(&self) -> f64 {
        self.wave_speed_bound
    }

    fn scan_wave_speed(&self, n: usize) -> f64 {
        let grid = Grid2::new(self.rect, n, n).expect("rect already validated");
        let mut m: f64 = 0.0;
        for i in 0..grid.nw {
            for k in 0..grid.nz {
                let (l1, l2) = self.lambdas_wz(grid.w(i), grid.z(k));
                m = m.max(l1.abs()).max(l2.abs());
            }
        }
        m
    }

    pub fn flux(&self, u: State) -> State {
        match &self.kind {
            SystemKind::DecoupledBurgers { shift } => {
                [0.5 * u[0] * u[0], 0.5 * u[1] * u[1] + shift * u[1]]
            }
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let [rho, m] = u;
                [m, m * m / rho + kappa * rho.powf(*gamma)]
            }
            SystemKind::PSystem { gamma, kappa, .. } => {
                let [vol, q] = u;
                [-q, kappa * vol.powf(-gamma)]
            }
            SystemKind::LinearAdvection { a1, a2 } => [a1 * u[0], a2 * u[1]],
            SystemKind::Tabulated(t) => t.flux(u),
        }
    }

    pub fn jacobian(&self, u: State) -> [[f64; 2]; 2] {
        match &self.kind {
            SystemKind::DecoupledBurgers { shift } => [[u[0], 0.0], [0.0, u[1] + shift]],
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let [rho, m] = u;
                let v = m / rho;
                let c2 = kappa * gamma * rho.powf(gamma - 1.0);
                [[0.0, 1.0], [c2 - v * v, 2.0 * v]]
            }
            SystemKind::PSystem { gamma, kappa, .. } => {
                let [vol, _] = u;
                [[0.0, -1.0], [-kappa * gamma * vol.powf(-gamma - 1.0), 0.0]]
            }
            SystemKind::LinearAdvection { a1, a2 } => [[*a1, 0.0], [0.0, *a2]],
            SystemKind::Tabulated(t) => t.jacobian(u),
        }
    }

    /// Invariant chart (w, z) = (φ₁(u), φ₂(u)); φ₁ is constant along the
    /// second characteristic field and φ₂ along the first.
    pub fn riemann_forward(&self, u: State) -> (f64, f64) {
        match &self.kind {
            SystemKind::DecoupledBurgers { .. } | SystemKind::LinearAdvection { .. } => (u[0], u[1]),
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let [rho, m] = u;
                let v = m / rho;
                let h = 2.0 * (kappa * gamma).sqrt() / (gamma - 1.0) * rho.powf(0.5 * (gamma - 1.0));
                (v - h, v + h)
            }
            SystemKind::PSystem { gamma, kappa, vol_ref } => {
                let [vol, q] = u;
                let h = psys_h(*gamma, *kappa, *vol_ref, vol);
                (q + h, q - h)
            }
            SystemKind::Tabulated(t) => t.riemann_forward(u),
        }
    }

    pub fn riemann_inverse(&self, w: f64, z: f64) -> State {
        match &self.kind {
            SystemKind::DecoupledBurgers { .. } | SystemKind::LinearAdvection { .. } => [w, z],
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let v = 0.5 * (w + z);
                let h = 0.5 * (z - w);
                let rho = (0.5 * h * (gamma - 1.0) / (kappa * gamma).sqrt()).powf(2.0 / (gamma - 1.0));
                [rho, rho * v]
            }
            SystemKind::PSystem { gamma, kappa, vol_ref } => {
                let q = 0.5 * (w + z);
                let h = 0.5 * (w - z);
                let vol = psys_h_inv(*gamma, *kappa, *vol_ref, h);
                [vol, q]
            }
            SystemKind::Tabulated(t) => t.riemann_inverse(w, z),
        }
    }

    /// Eigenvalues as functions of the invariant coordinates.
    pub fn lambdas_wz(&self, w: f64, z: f64) -> (f64, f64) {
        match &self.kind {
            SystemKind::DecoupledBurgers { shift } => (w, z + shift),
            SystemKind::IsentropicEuler { gamma, .. } => {
                let v = 0.5 * (w + z);
                let c = 0.25 * (gamma - 1.0) * (z - w);
                (v - c, v + c)
            }
            SystemKind::PSystem { gamma, kappa, vol_ref } => {
                let vol = psys_h_inv(*gamma, *kappa, *vol_ref, 0.5 * (w - z));
                let c = (kappa * gamma).sqrt() * vol.powf(-0.5 * (gamma + 1.0));
                (-c, c)
            }
            SystemKind::LinearAdvection { a1, a2 } => (*a1, *a2),
            SystemKind::Tabulated(t) => t.lambdas_wz(w, z),
        }
    }

    pub fn has_entropy(&self) -> bool {
        match &self.kind {
            SystemKind::Tabulated(t) => t.has_entropy(),
            _ => true,
        }
    }

    /// Strictly convex entropy E; panics for tabulated systems without
    /// entropy columns (`has_entropy` guards those).
    pub fn entropy(&self, u: State) -> f64 {
        match &self.kind {
            SystemKind::DecoupledBurgers { .. } => 0.5 * (u[0] * u[0] + u[1] * u[1]),
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let [rho, m] = u;
                0.5 * m * m / rho + kappa / (gamma - 1.0) * rho.powf(*gamma)
            }
            SystemKind::PSystem { gamma, kappa, .. } => {
                let [vol, q] = u;
                let pot = if (gamma - 1.0).abs() < 1e-12 {
                    -kappa * vol.ln()
                } else {
                    kappa / (gamma - 1.0) * vol.powf(1.0 - gamma)
                };
                0.5 * q * q + pot
            }
            SystemKind::LinearAdvection { .. } => 0.5 * (u[0] * u[0] + u[1] * u[1]),
            SystemKind::Tabulated(t) => t.entropy(u),
        }
    }

    pub fn entropy_flux(&self, u: State) -> f64 {
        match &self.kind {
            SystemKind::DecoupledBurgers { shift } => {
                u[0] * u[0] * u[0] / 3.0 + u[1] * u[1] * u[1] / 3.0 + 0.5 * shift * u[1] * u[1]
            }
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let [rho, m] = u;
                m / rho * (self.entropy(u) + kappa * rho.powf(*gamma))
            }
            SystemKind::PSystem { gamma, kappa, .. } => {
                let [vol, q] = u;
                q * kappa * vol.powf(-gamma)
            }
            SystemKind::LinearAdvection { a1, a2 } => {
                0.5 * (a1 * u[0] * u[0] + a2 * u[1] * u[1])
            }
            SystemKind::Tabulated(t) => t.entropy_flux(u),
        }
    }

    pub fn entropy_gradient(&self, u: State) -> [f64; 2] {
        match &self.kind {
            SystemKind::DecoupledBurgers { .. } | SystemKind::LinearAdvection { .. } => [u[0], u[1]],
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let [rho, m] = u;
                let v = m / rho;
                [-0.5 * v * v + kappa * gamma / (gamma - 1.0) * rho.powf(gamma - 1.0), v]
            }
            SystemKind::PSystem { gamma, kappa, .. } => {
                let [vol, q] = u;
                [-kappa * vol.powf(-gamma), q]
            }
            SystemKind::Tabulated(t) => t.entropy_gradient(u),
        }
    }

    pub fn entropy_hessian(&self, u: State) -> [[f64; 2]; 2] {
        match &self.kind {
            SystemKind::DecoupledBurgers { .. } | SystemKind::LinearAdvection { .. } => {
                [[1.0, 0.0], [0.0, 1.0]]
            }
            SystemKind::IsentropicEuler { gamma, kappa } => {
                let [rho, m] = u;
                let v = m / rho;
                [
                    [v * v / rho + kappa * gamma * rho.powf(gamma - 2.0), -v / rho],
                    [-v / rho, 1.0 / rho],
                ]
            }
            SystemKind::PSystem { gamma, kappa, .. } => {
                [[kappa * gamma * u[0].powf(-gamma - 1.0), 0.0], [0.0, 1.0]]
            }
            SystemKind::Tabulated(t) => t.entropy_hessian(u),
        }
    }

    /// E shifted by its tangent plane at û: nonnegative, zero at û, same
    /// dissipation structure. All run-level bookkeeping uses this form.
    pub fn entropy_shifted(&self, u: State, u_hat: State) -> f64 {
        let g = self.entropy_gradient(u_hat);
        self.entropy(u) - self.entropy(u_hat) - g[0] * (u[0] - u_hat[0]) - g[1] * (u[1] - u_hat[1])
    }

    pub fn entropy_flux_shifted(&self, u: State, u_hat: State) -> f64 {
        let g = self.entropy_gradient(u_hat);
        let f = self.flux(u);
        let fh = self.flux(u_hat);
        self.entropy_flux(u) - self.entropy_flux(u_hat) - g[0] * (f[0] - fh[0]) - g[1] * (f[1] - fh[1])
    }

    /// Largest chart stretch max(‖∇φ₁‖, ‖∇φ₂‖) over the rectangle,
    /// estimated on a 33² grid with finite differences.
    pub fn chart_lipschitz(&self) -> f64 {
        let grid = Grid2::new(self.rect, 33, 33).expect("rect already validated");
        let mut lip: f64 = 0.0;
        for i in 0..grid.nw {
            for k in 0..grid.nz {
                let u = self.riemann_inverse(grid.w(i), grid.z(k));
                let scale = (u[0].abs() + u[1].abs()).max(1.0);
                let h = 1e-6 * scale;
                for comp in 0..2 {
                    let mut up = u;
                    let mut um = u;
                    up[comp] += h;
                    um[comp] -= h;
                    let (wp, zp) = self.riemann_forward(up);
                    let (wm, zm) = self.riemann_forward(um);
                    let dw = (wp - wm) / (2.0 * h);
                    let dz = (zp - zm) / (2.0 * h);
                    lip = lip.max(dw.abs()).max(dz.abs());
                }
            }
        }
        lip * std::f64::consts::SQRT_2
    }
}

fn psys_h(gamma: f64, kappa: f64, vol_ref: f64, vol: f64) -> f64 {
    // Primitive of the sound speed c(V) = √(κγ) V^{−(γ+1)/2}, anchored so it
    // stays negative on (0, vol_ref); negativity orders the chart as w < z.
    if (gamma - 1.0).abs() < 1e-12 {
        kappa.sqrt() * (vol / vol_ref).ln()
    } else {
        let a = 2.0 * (kappa * gamma).sqrt() / (gamma - 1.0);
        a * (vol_ref.powf(-0.5 * (gamma - 1.0)) - vol.powf(-0.5 * (gamma - 1.0)))
    }
}

fn psys_h_inv(gamma: f64, kappa: f64, vol_ref: f64, h: f64) -> f64 {
    if (gamma - 1.0).abs() < 1e-12 {
        vol_ref * (h / kappa.sqrt()).exp()
    } else {
        let a = 2.0 * (kappa * gamma).sqrt() / (gamma - 1.0);
        (vol_ref.powf(-0.5 * (gamma - 1.0)) - h / a).powf(-2.0 / (gamma - 1.0))
    }
}

/// Eigen-decomposition of Df(u), eigenvalues sorted ascending.
///
/// Errors if u falls outside the chart rectangle or the two wave speeds
/// collapse.
pub fn eigen_decompose(sys: &SystemSpec, u: State) -> Result<EigenData> {
    let (w, z) = sys.riemann_forward(u);
    let rect = sys.rect();
    let tol = 1e-9 * (rect.w_span() + rect.z_span());
    if !rect.contains(w, z, tol) {
        return Err(Error::config(format!(
            "state ({}, {}) maps to (w, z) = ({w:.6}, {z:.6}) outside the rectangle",
            u[0], u[1]
        )));
    }
    let j = sys.jacobian(u);
    eigen_2x2(j)
}

pub(crate) fn eigen_2x2(j: [[f64; 2]; 2]) -> Result<EigenData> {
    let tr = j[0][0] + j[1][1];
    let disc = (j[0][0] - j[1][1]).powi(2) + 4.0 * j[0][1] * j[1][0];
    let scale = j.iter().flatten().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    if disc <= 0.0 {
        return Err(Error::numerical(format!(
            "Jacobian eigenvalues not real and distinct (disc = {disc:.3e})"
        )));
    }
    let sq = disc.sqrt();
    if sq < 1e-12 * scale {
        return Err(Error::numerical("spectral gap below resolution"));
    }
    let lambda = [0.5 * (tr - sq), 0.5 * (tr + sq)];
    let mut right = [[0.0; 2]; 2];
    for (idx, &lam) in lambda.iter().enumerate() {
        // (Df − λ)r = 0 has two proportional row solutions; take the better
        // conditioned one, then fix a deterministic sign.
        let cand_a = [j[0][1], lam - j[0][0]];
        let cand_b = [lam - j[1][1], j[1][0]];
        let na = cand_a[0] * cand_a[0] + cand_a[1] * cand_a[1];
        let nb = cand_b[0] * cand_b[0] + cand_b[1] * cand_b[1];
        let mut r = if na >= nb { cand_a } else { cand_b };
        let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
        r = [r[0] / n, r[1] / n];
        let lead = if r[0].abs() >= r[1].abs() { r[0] } else { r[1] };
        if lead < 0.0 {
            r = [-r[0], -r[1]];
        }
        right[idx] = r;
    }
    let det = right[0][0] * right[1][1] - right[1][0] * right[0][1];
    if det.abs() < 1e-12 {
        return Err(Error::numerical("eigenvector basis degenerate"));
    }
    let left = [
        [right[1][1] / det, -right[1][0] / det],
        [-right[0][1] / det, right[0][0] / det],
    ];
    Ok(EigenData { lambda, gap: sq, right, left })
}

/// Scan an (n+1)² node grid over the rectangle and certify strict
/// hyperbolicity, genuine nonlinearity of both fields, and entropy
/// convexity by their grid minima.
///
/// Eigenvalue derivatives use centered differences of step span/(4n),
/// falling back to second-order one-sided stencils at the edges. Doubling
/// `n` refines the grid in a nested fashion, so the reported minima are
/// monotone non-increasing under refinement.
pub fn certify_nonlinearity(sys: &SystemSpec, n: usize) -> Result<NonlinearityCertificate> {
    if n < 8 {
        return Err(Error::config(format!("certification grid too coarse: n = {n} < 8")));
    }
    let rect = sys.rect();
    let dw = rect.w_span() / n as f64;
    let dz = rect.z_span() / n as f64;
    let hw = rect.w_span() / (4.0 * n as f64);
    let hz = rect.z_span() / (4.0 * n as f64);

    let mut gap_min = f64::INFINITY;
    let mut gnl1_min = f64::INFINITY;
    let mut gnl2_min = f64::INFINITY;
    let mut conv_min = f64::INFINITY;

    let d_dw = |f: &dyn Fn(f64, f64) -> f64, w: f64, z: f64| -> f64 {
        if w - hw < rect.w_min {
            (-3.0 * f(w, z) + 4.0 * f(w + hw, z) - f(w + 2.0 * hw, z)) / (2.0 * hw)
        } else if w + hw > rect.w_max {
            (3.0 * f(w, z) - 4.0 * f(w - hw, z) + f(w - 2.0 * hw, z)) / (2.0 * hw)
        } else {
            (f(w + hw, z) - f(w - hw, z)) / (2.0 * hw)
        }
    };
    let d_dz = |f: &dyn Fn(f64, f64) -> f64, w: f64, z: f64| -> f64 {
        if z - hz < rect.z_min {
            (-3.0 * f(w, z) + 4.0 * f(w, z + hz) - f(w, z + 2.0 * hz)) / (2.0 * hz)
        } else if z + hz > rect.z_max {
            (3.0 * f(w, z) - 4.0 * f(w, z - hz) + f(w, z - 2.0 * hz)) / (2.0 * hz)
        } else {
            (f(w, z + hz) - f(w, z - hz)) / (2.0 * hz)
        }
    };
    let l1 = |w: f64, z: f64| sys.lambdas_wz(w, z).0;
    let l2 = |w: f64, z: f64| sys.lambdas_wz(w, z).1;

    for i in 0..=n {
        let w = rect.w_min + dw * i as f64;
        for k in 0..=n {
            let z = rect.z_min + dz * k as f64;
            let (lam1, lam2) = sys.lambdas_wz(w, z);
            gap_min = gap_min.min(lam2 - lam1);
            gnl1_min = gnl1_min.min(d_dw(&l1, w, z));
            gnl2_min = gnl2_min.min(d_dz(&l2, w, z));
            if sys.has_entropy() {
                let hess = sys.entropy_hessian(sys.riemann_inverse(w, z));
                // Smaller eigenvalue of a symmetric 2×2 matrix.
                let half_tr = 0.5 * (hess[0][0] + hess[1][1]);
                let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
                let disc = (half_tr * half_tr - det).max(0.0);
                conv_min = conv_min.min(half_tr - disc.sqrt());
            }
        }
    }
    if !sys.has_entropy() {
        conv_min = f64::NAN;
    }

    Ok(NonlinearityCertificate {
        gap_min,
        gnl1_min,
        gnl2_min,
        convexity_modulus: conv_min,
        grid_n: n,
        grid_step: dw,
    })
}
