//! Compactly supported C² test functions φ(t, x, ξ) with analytic partial
//! derivatives, normalized so ‖φ‖∞ ≤ 1 and ‖∂ξφ‖∞ ≤ 1.
//!
//! Three shapes cover the needs of the weak-form measurements: tensor bumps
//! on dyadic (t, x, ξ) boxes, ξ-plateaus (bump in t and x, flat top in ξ),
//! and trapezoids whose x-support |x| ≤ M + L(T − t) shrinks at the wave
//! speed so everything that ever influences the window is inside it. Every
//! member vanishes near t = 0 and t = T, so pairings against ∂tφ carry no
//! time-boundary terms.

use crate::error::{Error, Result};

/// Peak slope of the bump kernel (1−s²)³, attained at s = 1/√5.
pub const BUMP_SLOPE: f64 = 1.7172608; // 96/(25√5), rounded up in the last digit
/// Peak slope of the quintic smoothstep y³(10−15y+6y²), at y = 1/2.
pub const STEP_SLOPE: f64 = 1.875;

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        q * q * q
    }
}

fn bump_d(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        -6.0 * s * q * q
    }
}

fn smoothstep(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)
    }
}

fn smoothstep_d(y: f64) -> f64 {
    if y <= 0.0 || y >= 1.0 {
        0.0
    } else {
        30.0 * y * y * (1.0 - y) * (1.0 - y)
    }
}

#[derive(Debug, Clone)]
pub enum TestProfile {
    /// amp·b((t−tc)/tw)·b((x−xc)/xw)·b((ξ−ξc)/ξw).
    TensorBump {
        amp: f64,
        tc: f64,
        tw: f64,
        xc: f64,
        xw: f64,
        xic: f64,
        xiw: f64,
    },
    /// Bump in t and x, flat plateau in ξ over [lo+m, hi−m] with smooth
    /// margins of width m.
    XiPlateau {
        amp: f64,
        tc: f64,
        tw: f64,
        xc: f64,
        xw: f64,
        xi_lo: f64,
        xi_hi: f64,
        margin: f64,
    },
    /// Support {|x| ≤ m + l·(t1 − t)}, ramped on over [t0, t0+t_margin],
    /// off over [t1−t_margin, t1], with a smooth x-edge of width x_margin
    /// and a ξ-plateau over [xi_lo, xi_hi].
    Trapezoid {
        amp: f64,
        m: f64,
        l: f64,
        t0: f64,
        t1: f64,
        t_margin: f64,
        x_margin: f64,
        xi_lo: f64,
        xi_hi: f64,
        xi_margin: f64,
    },
}

#[derive(Debug, Clone)]
pub struct BatteryMember {
    pub name: String,
    pub profile: TestProfile,
}

impl BatteryMember {
    pub fn value(&self, t: f64, x: f64, xi: f64) -> f64 {
        match &self.profile {
            TestProfile::TensorBump { amp, tc, tw, xc, xw, xic, xiw } => {
                amp * bump((t - tc) / tw) * bump((x - xc) / xw) * bump((xi - xic) / xiw)
            }
            TestProfile::XiPlateau { amp, tc, tw, xc, xw, xi_lo, xi_hi, margin } => {
                amp * bump((t - tc) / tw)
                    * bump((x - xc) / xw)
                    * plateau(xi, *xi_lo, *xi_hi, *margin)
            }
            TestProfile::Trapezoid {
                amp,
                m,
                l,
                t0,
                t1,
                t_margin,
                x_margin,
                xi_lo,
                xi_hi,
                xi_margin,
            } => {
                let ramp = smoothstep((t - t0) / t_margin) * smoothstep((t1 - t) / t_margin);
                let edge = smoothstep((m + l * (t1 - t) - x.abs()) / x_margin);
                amp * ramp * edge * plateau(xi, *xi_lo, *xi_hi, *xi_margin)
            }
        }
    }

    pub fn dt(&self, t: f64, x: f64, xi: f64) -> f64 {
        match &self.profile {
            TestProfile::TensorBump { amp, tc, tw, xc, xw, xic, xiw } => {
                amp * bump_d((t - tc) / tw) / tw * bump((x - xc) / xw) * bump((xi - xic) / xiw)
            }
            TestProfile::XiPlateau { amp, tc, tw, xc, xw, xi_lo, xi_hi, margin } => {
                amp * bump_d((t - tc) / tw) / tw
                    * bump((x - xc) / xw)
                    * plateau(xi, *xi_lo, *xi_hi, *margin)
            }
            TestProfile::Trapezoid {
                amp,
                m,
                l,
                t0,
                t1,
                t_margin,
                x_margin,
                xi_lo,
                xi_hi,
                xi_margin,
            } => {
                let up = smoothstep((t - t0) / t_margin);
                let dn = smoothstep((t1 - t) / t_margin);
                let edge_arg = (m + l * (t1 - t) - x.abs()) / x_margin;
                let edge = smoothstep(edge_arg);
                let p = plateau(xi, *xi_lo, *xi_hi, *xi_margin);
                let ramp_dt = smoothstep_d((t - t0) / t_margin) / t_margin * dn
                    - up * smoothstep_d((t1 - t) / t_margin) / t_margin;
                let edge_dt = smoothstep_d(edge_arg) * (-l / x_margin);
                amp * p * (ramp_dt * edge + up * dn * edge_dt)
            }
        }
    }

    pub fn dx(&self, t: f64, x: f64, xi: f64) -> f64 {
        match &self.profile {
            TestProfile::TensorBump { amp, tc, tw, xc, xw, xic, xiw } => {
                amp * bump((t - tc) / tw) * bump_d((x - xc) / xw) / xw * bump((xi - xic) / xiw)
            }
            TestProfile::XiPlateau { amp, tc, tw, xc, xw, xi_lo, xi_hi, margin } => {
                amp * bump((t - tc) / tw)
                    * bump_d((x - xc) / xw)
                    / xw
                    * plateau(xi, *xi_lo, *xi_hi, *margin)
            }
            TestProfile::Trapezoid {
                amp,
                m,
                l,
                t0,
                t1,
                t_margin,
                x_margin,
                xi_lo,
                xi_hi,
                xi_margin,
            } => {
                let ramp = smoothstep((t - t0) / t_margin) * smoothstep((t1 - t) / t_margin);
                let edge_arg = (m + l * (t1 - t) - x.abs()) / x_margin;
                let edge_dx = smoothstep_d(edge_arg) * (-x.signum() / x_margin);
                amp * ramp * edge_dx * plateau(xi, *xi_lo, *xi_hi, *xi_margin)
            }
        }
    }

    pub fn dxi(&self, t: f64, x: f64, xi: f64) -> f64 {
        match &self.profile {
            TestProfile::TensorBump { amp, tc, tw, xc, xw, xic, xiw } => {
                amp * bump((t - tc) / tw) * bump((x - xc) / xw) * bump_d((xi - xic) / xiw) / xiw
            }
            TestProfile::XiPlateau { amp, tc, tw, xc, xw, xi_lo, xi_hi, margin } => {
                amp * bump((t - tc) / tw)
                    * bump((x - xc) / xw)
                    * plateau_d(xi, *xi_lo, *xi_hi, *margin)
            }
            TestProfile::Trapezoid {
                amp,
                m,
                l,
                t0,
                t1,
                t_margin,
                x_margin,
                xi_lo,
                xi_hi,
                xi_margin,
            } => {
                let ramp = smoothstep((t - t0) / t_margin) * smoothstep((t1 - t) / t_margin);
                let edge = smoothstep((m + l * (t1 - t) - x.abs()) / x_margin);
                amp * ramp * edge * plateau_d(xi, *xi_lo, *xi_hi, *xi_margin)
            }
        }
    }

    /// All members are nonnegative by construction (positive amplitudes on
    /// nonnegative kernels).
    pub fn nonnegative(&self) -> bool {
        true
    }

    pub fn support_t(&self) -> (f64, f64) {
        match &self.profile {
            TestProfile::TensorBump { tc, tw, .. } | TestProfile::XiPlateau { tc, tw, .. } => {
                (tc - tw, tc + tw)
            }
            TestProfile::Trapezoid { t0, t1, .. } => (*t0, *t1),
        }
    }

    pub fn support_x(&self) -> (f64, f64) {
        match &self.profile {
            TestProfile::TensorBump { xc, xw, .. } | TestProfile::XiPlateau { xc, xw, .. } => {
                (xc - xw, xc + xw)
            }
            TestProfile::Trapezoid { m, l, t0, t1, .. } => {
                let r = m + l * (t1 - t0);
                (-r, r)
            }
        }
    }

    pub fn support_xi(&self) -> (f64, f64) {
        match &self.profile {
            TestProfile::TensorBump { xic, xiw, .. } => (xic - xiw, xic + xiw),
            TestProfile::XiPlateau { xi_lo, xi_hi, .. }
            | TestProfile::Trapezoid { xi_lo, xi_hi, .. } => (*xi_lo, *xi_hi),
        }
    }
}

fn plateau(xi: f64, lo: f64, hi: f64, m: f64) -> f64 {
    smoothstep((xi - lo) / m) * smoothstep((hi - xi) / m)
}

fn plateau_d(xi: f64, lo: f64, hi: f64, m: f64) -> f64 {
    smoothstep_d((xi - lo) / m) / m * smoothstep((hi - xi) / m)
        - smoothstep((xi - lo) / m) * smoothstep_d((hi - xi) / m) / m
}

#[derive(Debug, Clone)]
pub struct TestBattery {
    pub members: Vec<BatteryMember>,
    /// Deterministic descriptor recorded in every measurement.
    pub id: String,
}

/// Geometry the standard battery covers.
#[derive(Debug, Clone, Copy)]
pub struct BatteryDomain {
    pub t0: f64,
    pub t1: f64,
    pub x_half: f64,
    pub xi_lo: f64,
    pub xi_hi: f64,
    /// Edge speed for the trapezoid members (max wave speed).
    pub wave_speed: f64,
}

/// Dyadic tensor bumps (x-scales 1, 1/2, 1/4; early/late time halves;
/// lower/upper ξ halves) plus three shrinking trapezoids.
pub fn standard_battery(dom: &BatteryDomain) -> Result<TestBattery> {
    if !(dom.t1 > dom.t0 && dom.x_half > 0.0 && dom.xi_hi > dom.xi_lo) {
        return Err(Error::config("degenerate battery domain"));
    }
    let (t0, t1) = (dom.t0, dom.t1);
    let tc = 0.5 * (t0 + t1);
    let tw = 0.5 * (t1 - t0);
    let xi_mid = 0.5 * (dom.xi_lo + dom.xi_hi);
    let xi_w = 0.5 * (dom.xi_hi - dom.xi_lo);
    let xi_amp = |w: f64| (w / BUMP_SLOPE).min(1.0);

    let mut members = Vec::new();
    // Dyadic x-boxes at full time window and full ξ range.
    for scale in 0..3u32 {
        let n = 1 << scale;
        let w = dom.x_half / n as f64;
        for j in 0..n {
            let xc = -dom.x_half + (2 * j + 1) as f64 * w;
            members.push(BatteryMember {
                name: format!("bump_x{scale}_{j}"),
                profile: TestProfile::TensorBump {
                    amp: xi_amp(xi_w),
                    tc,
                    tw,
                    xc,
                    xw: w,
                    xic: xi_mid,
                    xiw: xi_w,
                },
            });
        }
    }
    // Early and late time halves over the full x window.
    for (tag, k) in [("early", 0usize), ("late", 1usize)] {
        members.push(BatteryMember {
            name: format!("bump_t_{tag}"),
            profile: TestProfile::TensorBump {
                amp: xi_amp(xi_w),
                tc: t0 + (0.5 + k as f64) * tw,
                tw: 0.5 * tw,
                xc: 0.0,
                xw: dom.x_half,
                xic: xi_mid,
                xiw: xi_w,
            },
        });
    }
    // Lower and upper ξ halves.
    for (tag, k) in [("lo", 0usize), ("hi", 1usize)] {
        let w = 0.5 * xi_w;
        members.push(BatteryMember {
            name: format!("bump_xi_{tag}"),
            profile: TestProfile::TensorBump {
                amp: xi_amp(w),
                tc,
                tw,
                xc: 0.0,
                xw: dom.x_half,
                xic: dom.xi_lo + (0.5 + k as f64 * 1.0) * xi_w,
                xiw: w,
            },
        });
    }
    // Flat-top member over nearly the whole ξ range.
    let margin = 0.2 * (dom.xi_hi - dom.xi_lo);
    members.push(BatteryMember {
        name: "plateau_full".into(),
        profile: TestProfile::XiPlateau {
            amp: (margin / STEP_SLOPE).min(1.0),
            tc,
            tw,
            xc: 0.0,
            xw: dom.x_half,
            xi_lo: dom.xi_lo,
            xi_hi: dom.xi_hi,
            margin,
        },
    });
    // Shrinking trapezoids: whatever reaches the window at t1 is inside.
    // Emitted only when the window is wide enough that the base radius
    // m + wave_speed·(t1 − t0) fits inside ±x_half.
    let t_margin = 0.1 * (t1 - t0);
    let span = dom.x_half - dom.wave_speed * (t1 - t0);
    if span > 0.05 * dom.x_half {
        for (i, frac) in [0.25, 0.5, 0.75].iter().enumerate() {
            let m = frac * span;
            let x_margin = 0.25 * m;
            members.push(BatteryMember {
                name: format!("trap_{i}"),
                profile: TestProfile::Trapezoid {
                    amp: (margin / STEP_SLOPE).min(1.0),
                    m,
                    l: dom.wave_speed,
                    t0,
                    t1,
                    t_margin,
                    x_margin,
                    xi_lo: dom.xi_lo,
                    xi_hi: dom.xi_hi,
                    xi_margin: margin,
                },
            });
        }
    }

    let id = format!(
        "dyadic3+halves+plateau+trap3@t[{:.3},{:.3}]x±{:.3}xi[{:.3},{:.3}]L{:.3}",
        t0, t1, dom.x_half, dom.xi_lo, dom.xi_hi, dom.wave_speed
    );
    Ok(TestBattery { members, id })
}

impl TestBattery {
    /// Check every member's support fits the given run window.
    pub fn validate_support(
        &self,
        t1: f64,
        x_half: f64,
        xi_lo: f64,
        xi_hi: f64,
    ) -> Result<()> {
        for m in &self.members {
            let (a, b) = m.support_t();
            if a < -1e-12 || b > t1 + 1e-12 {
                return Err(Error::config(format!(
                    "member {} time support [{a}, {b}] exceeds [0, {t1}]",
                    m.name
                )));
            }
            let (a, b) = m.support_x();
            if a < -x_half - 1e-12 || b > x_half + 1e-12 {
                return Err(Error::config(format!(
                    "member {} x support [{a}, {b}] exceeds ±{x_half}",
                    m.name
                )));
            }
            let (a, b) = m.support_xi();
            if a < xi_lo - 1e-9 || b > xi_hi + 1e-9 {
                return Err(Error::config(format!(
                    "member {} xi support [{a}, {b}] exceeds [{xi_lo}, {xi_hi}]",
                    m.name
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain() -> BatteryDomain {
        BatteryDomain {
            t0: 0.0,
            t1: 1.0,
            x_half: 2.0,
            xi_lo: 0.0,
            xi_hi: 1.0,
            wave_speed: 1.5,
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let battery = standard_battery(&domain()).unwrap();
        let pts = [
            (0.31, 0.17, 0.43),
            (0.73, -1.1, 0.81),
            (0.5, 0.0, 0.5),
            (0.913, 1.7, 0.11),
        ];
        let h = 1e-6;
        for m in &battery.members {
            for &(t, x, xi) in &pts {
                let fd_t = (m.value(t + h, x, xi) - m.value(t - h, x, xi)) / (2.0 * h);
                let fd_x = (m.value(t, x + h, xi) - m.value(t, x - h, xi)) / (2.0 * h);
                let fd_xi = (m.value(t, x, xi + h) - m.value(t, x, xi - h)) / (2.0 * h);
                assert!((m.dt(t, x, xi) - fd_t).abs() < 1e-6, "{} dt", m.name);
                assert!((m.dx(t, x, xi) - fd_x).abs() < 1e-6, "{} dx", m.name);
                assert!((m.dxi(t, x, xi) - fd_xi).abs() < 1e-6, "{} dxi", m.name);
            }
        }
    }

    #[test]
    fn sup_norms_within_unit_bounds() {
        let battery = standard_battery(&domain()).unwrap();
        for m in &battery.members {
            let mut vmax: f64 = 0.0;
            let mut dximax: f64 = 0.0;
            for it in 0..=20 {
                for ix in 0..=40 {
                    for ik in 0..=40 {
                        let t = it as f64 / 20.0;
                        let x = -2.0 + ix as f64 / 10.0;
                        let xi = ik as f64 / 40.0;
                        vmax = vmax.max(m.value(t, x, xi).abs());
                        dximax = dximax.max(m.dxi(t, x, xi).abs());
                    }
                }
            }
            assert!(vmax <= 1.0 + 1e-12, "{}: sup {vmax}", m.name);
            assert!(dximax <= 1.0 + 1e-9, "{}: dxi sup {dximax}", m.name);
            assert!(m.nonnegative());
        }
    }

    #[test]
    fn supports_fit_declared_windows() {
        let battery = standard_battery(&domain()).unwrap();
        battery.validate_support(1.0, 2.0, 0.0, 1.0).unwrap();
        assert!(battery.validate_support(0.5, 2.0, 0.0, 1.0).is_err());
        // Values vanish outside each declared support.
        for m in &battery.members {
            let (tlo, thi) = m.support_t();
            let (xlo, xhi) = m.support_x();
            assert_eq!(m.value(tlo - 1e-9, 0.0, 0.5), 0.0, "{}", m.name);
            assert_eq!(m.value(thi + 1e-9, 0.0, 0.5), 0.0, "{}", m.name);
            assert_eq!(m.value(0.5 * (tlo + thi), xlo - 1e-9, 0.5), 0.0, "{}", m.name);
            assert_eq!(m.value(0.5 * (tlo + thi), xhi + 1e-9, 0.5), 0.0, "{}", m.name);
        }
    }
}
