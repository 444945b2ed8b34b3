//! TOML experiment configuration and its effective form.
//!
//! A config file fixes the system, the entropy-family resolution, the
//! viscosity ladder and the analysis windows. Two command-line knobs rewrite
//! the parsed config before anything runs: `--resolution-scale F` multiplies
//! every spatial resolution (1/dx, chart lattices, cut levels) by F, and
//! `--seed N` jitters the bump shapes of the datum (never the background
//! state, never the physics). All caching and reporting downstream hashes the
//! rewritten config, so a fixed (config, scale, seed) triple is bitwise
//! reproducible and any change recomputes exactly the stages it invalidates.

use kinlab::{build_system, Error, Rect, Result, SystemParams, SystemSpec, TabulatedSystem};
use kinlab::viscous::{InitialData, RunConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemBlock,
    #[serde(default)]
    pub entropy: EntropyBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// decoupled_burgers | isentropic_euler | p_system | tabulated.
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol_max: Option<f64>,
    /// [w_min, w_max, z_min, z_max] for decoupled_burgers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect: Option<[f64; 4]>,
    /// Flux/entropy table for `name = "tabulated"`, relative to the config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_file: Option<String>,
    /// Certification lattice size per chart axis.
    #[serde(default = "default_certify_n")]
    pub certify_n: usize,
}

fn default_certify_n() -> usize {
    129
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyBlock {
    /// Cut levels per family; levels − 1 must divide grid − 1.
    pub levels: usize,
    /// Chart lattice nodes per axis for the Goursat tables.
    pub grid: usize,
}

impl Default for EntropyBlock {
    fn default() -> Self {
        EntropyBlock { levels: 17, grid: 65 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub t_final: f64,
    pub dx: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Viscosity ladder, conventionally decreasing.
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    /// Stored snapshot count, equally spaced on [0, t_final].
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_pad")]
    pub pad_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_half: Option<f64>,
    /// Background state in Riemann coordinates.
    pub w_ref: f64,
    pub z_ref: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bump: Vec<BumpBlock>,
}

fn default_cfl() -> f64 {
    0.4
}

fn default_epsilon() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}

fn default_snapshots() -> usize {
    33
}

fn default_pad() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpBlock {
    /// false perturbs w, true perturbs z.
    #[serde(default)]
    pub in_z: bool,
    pub amplitude: f64,
    #[serde(default)]
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    /// Pair the kinetic residual against the standard battery.
    #[serde(default = "default_true")]
    pub battery: bool,
    /// Pair entropy dissipation measures against the battery.
    #[serde(default = "default_true")]
    pub dissipation: bool,
    /// Localized strip balance (collar fluxes, sup-in-time strip mass).
    #[serde(default = "default_true")]
    pub strip: bool,
    /// Strip override; defaults to the first rung of the ladder on [ŵ, w̄].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_ell: Option<f64>,
    /// Cut levels whose kinetic characteristics are traced from `char_x0`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub characteristics: Vec<f64>,
    #[serde(default)]
    pub char_x0: f64,
    /// Base times of the ω(t̄, τ) curves, as fractions of t_final.
    #[serde(default = "default_modulus_times")]
    pub modulus_times: Vec<f64>,
    /// Half-width of the modulus window, as a fraction of the run's x_half.
    #[serde(default = "default_modulus_window")]
    pub modulus_window: f64,
    /// Also trace the unweighted interaction functional (exploration only).
    #[serde(default)]
    pub unweighted_q: bool,
}

fn default_true() -> bool {
    true
}

fn default_modulus_times() -> Vec<f64> {
    vec![0.4, 0.8]
}

fn default_modulus_window() -> f64 {
    0.9
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            battery: true,
            dissipation: true,
            strip: true,
            strip_r: None,
            strip_ell: None,
            characteristics: Vec::new(),
            char_x0: 0.0,
            modulus_times: default_modulus_times(),
            modulus_window: default_modulus_window(),
            unweighted_q: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.entropy;
        if e.levels < 5 {
            return Err(Error::config("entropy.levels must be at least 5"));
        }
        if e.grid < e.levels || (e.grid - 1) % (e.levels - 1) != 0 {
            return Err(Error::config(format!(
                "entropy.levels − 1 = {} must divide entropy.grid − 1 = {}",
                e.levels - 1,
                e.grid - 1
            )));
        }
        if self.system.certify_n < 8 {
            return Err(Error::config("system.certify_n must be at least 8"));
        }
        let r = &self.run;
        if !(r.t_final > 0.0 && r.t_final.is_finite()) {
            return Err(Error::config("run.t_final must be positive"));
        }
        if !(r.dx > 0.0 && r.dx.is_finite()) {
            return Err(Error::config("run.dx must be positive"));
        }
        if !(r.cfl > 0.0 && r.cfl < 1.0) {
            return Err(Error::config("run.cfl must lie in (0, 1)"));
        }
        if r.epsilon.is_empty() || r.epsilon.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::config("run.epsilon must list positive viscosities"));
        }
        if r.snapshots < 2 {
            return Err(Error::config("run.snapshots must be at least 2"));
        }
        if !(r.pad_factor > 0.0) {
            return Err(Error::config("run.pad_factor must be positive"));
        }
        if !(r.w_ref.is_finite() && r.z_ref.is_finite()) {
            return Err(Error::config("run background state must be finite"));
        }
        for b in &r.bump {
            if !(b.width > 0.0 && b.amplitude.is_finite() && b.center.is_finite()) {
                return Err(Error::config("bump needs finite amplitude/center and width > 0"));
            }
        }
        let a = &self.analysis;
        for &f in &a.modulus_times {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::config(
                    "analysis.modulus_times are fractions of t_final in (0, 1)",
                ));
            }
        }
        if !(a.modulus_window > 0.0 && a.modulus_window <= 1.0) {
            return Err(Error::config("analysis.modulus_window is a fraction in (0, 1]"));
        }
        for opt in [a.strip_r, a.strip_ell] {
            if let Some(v) = opt {
                if !v.is_finite() {
                    return Err(Error::config("strip override must be finite"));
                }
            }
        }
        if a.characteristics.iter().any(|x| !x.is_finite()) || !a.char_x0.is_finite() {
            return Err(Error::config("characteristic levels and origin must be finite"));
        }
        Ok(())
    }

    /// Multiply every spatial resolution by `f`: 1/dx, the Goursat lattice,
    /// the cut-level count and the certification lattice. The level count is
    /// moved along the lattice so (levels − 1) | (grid − 1) is preserved
    /// exactly; time resolution follows dx through the CFL bound.
    pub fn apply_scale(&mut self, f: f64) -> Result<()> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::config("resolution scale must be positive"));
        }
        if (f - 1.0).abs() < 1e-15 {
            return Ok(());
        }
        self.run.dx /= f;
        let m = self.entropy.levels - 1;
        let ratio = (self.entropy.grid - 1) / m;
        let m2 = ((m as f64 * f).round() as usize).max(4);
        self.entropy.levels = m2 + 1;
        self.entropy.grid = m2 * ratio + 1;
        self.system.certify_n =
            ((self.system.certify_n as f64 * f).round() as usize).max(8);
        self.validate()
    }

    /// Jitter the datum shape, not the physics: each bump's amplitude, center
    /// and width move by up to ±10% (±0.1 widths for the center), drawn from
    /// a counter-based stream so a fixed seed is exactly reproducible.
    pub fn apply_seed(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &mut self.run.bump {
            let da: f64 = rng.gen_range(-0.1..0.1);
            let dc: f64 = rng.gen_range(-0.1..0.1);
            let dw: f64 = rng.gen_range(-0.1..0.1);
            b.amplitude *= 1.0 + da;
            b.center += dc * b.width;
            b.width *= 1.0 + dw;
        }
    }

    /// Build the system, reading the flux table beside the config if one is
    /// named. Returns the table text too: it is part of the system's identity
    /// and belongs in the content hash.
    pub fn build_sys(&self, config_dir: &Path) -> Result<(SystemSpec, String)> {
        let s = &self.system;
        if s.name == "tabulated" {
            let rel = s.table_file.as_ref().ok_or_else(|| {
                Error::config("tabulated system needs system.table_file")
            })?;
            let path = config_dir.join(rel);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::config(format!("cannot read table {}: {e}", path.display()))
            })?;
            let tab = TabulatedSystem::from_text(&text)?;
            return Ok((SystemSpec::from_tabulated(tab)?, text));
        }
        let params = SystemParams {
            gamma: s.gamma,
            kappa: s.kappa,
            rho_min: s.rho_min,
            rho_max: s.rho_max,
            v_min: s.v_min,
            v_max: s.v_max,
            vol_min: s.vol_min,
            vol_max: s.vol_max,
            rect: match s.rect {
                Some([a, b, c, d]) => Some(Rect::new(a, b, c, d)?),
                None => None,
            },
        };
        Ok((build_system(&s.name, &params)?, String::new()))
    }

    pub fn initial_data(&self) -> InitialData {
        let mut data = InitialData::constant(self.run.w_ref, self.run.z_ref);
        for b in &self.run.bump {
            data = data.with_bump(b.in_z, b.amplitude, b.center, b.width);
        }
        data
    }

    pub fn run_config(&self) -> RunConfig {
        let r = &self.run;
        let n = r.snapshots;
        let times = (0..n)
            .map(|i| r.t_final * i as f64 / (n - 1) as f64)
            .collect();
        RunConfig {
            t_final: r.t_final,
            dx: r.dx,
            cfl: r.cfl,
            snapshot_times: times,
            pad_factor: r.pad_factor,
            x_half: r.x_half,
            domain_check_stride: 16,
        }
    }
}

/// Canonical text of one config block, used for content hashes.
pub fn toml_block<T: Serialize>(t: &T) -> String {
    toml::to_string(t).expect("config blocks serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        toml::from_str(
            r#"
            [system]
            name = "decoupled_burgers"
            [run]
            t_final = 0.1
            dx = 0.01
            w_ref = 0.4
            z_ref = 0.5
            [[run.bump]]
            amplitude = 0.2
            width = 0.5
            "#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_fill_in_and_validate() {
        let cfg = minimal();
        cfg.validate().unwrap();
        assert_eq!(cfg.entropy.levels, 17);
        assert_eq!(cfg.entropy.grid, 65);
        assert_eq!(cfg.run.epsilon.len(), 3);
        assert!(cfg.analysis.battery && cfg.analysis.strip);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: std::result::Result<ExperimentConfig, _> = toml::from_str(
            r#"
            [system]
            name = "decoupled_burgers"
            typo_field = 1
            [run]
            t_final = 0.1
            dx = 0.01
            w_ref = 0.4
            z_ref = 0.5
            "#,
        );
        assert!(r.is_err());
    }

    #[test]
    fn scale_preserves_level_divisibility() {
        let mut cfg = minimal();
        for f in [0.5, 1.0, 1.5, 2.0, 3.0] {
            let mut c = cfg.clone();
            c.apply_scale(f).unwrap();
            assert_eq!((c.entropy.grid - 1) % (c.entropy.levels - 1), 0, "f = {f}");
        }
        cfg.apply_scale(2.0).unwrap();
        assert_eq!(cfg.entropy.levels, 33);
        assert_eq!(cfg.entropy.grid, 129);
        assert!((cfg.run.dx - 0.005).abs() < 1e-15);
    }

    #[test]
    fn seed_jitters_bumps_deterministically_and_nothing_else() {
        let mut a = minimal();
        let mut b = minimal();
        a.apply_seed(7);
        b.apply_seed(7);
        assert_eq!(toml_block(&a.run), toml_block(&b.run));
        assert!((a.run.bump[0].amplitude - 0.2).abs() > 1e-6);
        assert_eq!(a.run.w_ref, 0.4);
        assert_eq!(a.run.z_ref, 0.5);
        let mut c = minimal();
        c.apply_seed(8);
        assert_ne!(toml_block(&a.run), toml_block(&c.run));
    }

    #[test]
    fn canonical_text_is_stable_for_equal_configs() {
        assert_eq!(toml_block(&minimal()), toml_block(&minimal()));
    }
}
