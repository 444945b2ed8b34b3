//! Randomized invariants: the fast interaction functional against the direct
//! double sum, strip-ladder cover arithmetic, subadditivity of the time
//! modulus, battery admissibility, and chart round-trips.

use std::sync::OnceLock;

use proptest::prelude::*;

use kinlab::battery::{standard_battery, BatteryDomain};
use kinlab::decay::{
    interaction_functional, interaction_functional_direct, omega_between, strip_ladder,
};
use kinlab::entropy::{build_kinetic_family, KineticFamily};
use kinlab::kinetic::KineticField;
use kinlab::viscous::{run_ladder, InitialData, RunConfig, ViscousRun};
use kinlab::{build_system, certify_nonlinearity, SystemParams, SystemSpec};

fn small_family() -> &'static (SystemSpec, KineticFamily) {
    static CELL: OnceLock<(SystemSpec, KineticFamily)> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = build_system("decoupled_burgers", &SystemParams::default()).unwrap();
        let cert = certify_nonlinearity(&sys, 65).unwrap();
        let fam = build_kinetic_family(&sys, &cert, 9, 17, 17).unwrap();
        (sys, fam)
    })
}

fn small_run() -> &'static ViscousRun {
    static CELL: OnceLock<ViscousRun> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = build_system("decoupled_burgers", &SystemParams::default()).unwrap();
        let data = InitialData::constant(0.3, 0.5).with_bump(false, 0.3, 0.0, 0.4);
        let mut cfg = RunConfig::new(0.3, 5e-3);
        cfg.snapshot_times = (0..33).map(|i| 0.3 * i as f64 / 32.0).collect();
        run_ladder(&sys, &data, &cfg, &[2e-2]).unwrap().remove(0)
    })
}

/// Synthetic chart rows on a uniform cell grid, everything inside the unit
/// rectangle of the decoupled system.
fn synth_field<'a>(
    fam: &'a KineticFamily,
    w_rows: Vec<Vec<f64>>,
    z_rows: Vec<Vec<f64>>,
    dx: f64,
) -> KineticField<'a> {
    let nx = w_rows[0].len();
    let x_half = 0.5 * dx * nx as f64;
    let xs = (0..nx).map(|j| -x_half + (j as f64 + 0.5) * dx).collect();
    let times = (0..w_rows.len()).map(|i| i as f64 * 0.1).collect();
    KineticField {
        fam,
        times,
        xs,
        dx,
        x_half,
        w: w_rows,
        z: z_rows,
        w_hat: 0.0,
        z_hat: 0.5,
        l1_norm: 1.0,
        epsilon: 1e-2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fast_interaction_matches_direct_sum(
        nx in 4usize..16,
        seed_w in proptest::collection::vec(0.01f64..0.99, 16),
        seed_z in proptest::collection::vec(0.01f64..0.99, 16),
        ell01 in 0.0f64..0.9,
        r01 in 0.1f64..1.0,
        dx in 0.02f64..0.3,
    ) {
        let (_, fam) = small_family();
        let w: Vec<f64> = seed_w[..nx].to_vec();
        let z: Vec<f64> = seed_z[..nx].to_vec();
        let field = synth_field(fam, vec![w], vec![z], dx);
        let ell = ell01;
        let r = r01 * (1.0 - ell);
        prop_assume!(r > 1e-3);
        let fast = interaction_functional(&field, r, ell, 0).unwrap();
        let direct = interaction_functional_direct(&field, r, ell, 0).unwrap();
        let tol = 1e-10 * fast.abs().max(1.0);
        prop_assert!((fast - direct).abs() <= tol,
            "fast {fast:.17e} direct {direct:.17e}");
        // Q is a weighted mass of a nonnegative density against positive gaps.
        prop_assert!(fast >= -tol);
    }

    #[test]
    fn strip_ladder_covers_span_exactly(
        y_hat in -2.0f64..2.0,
        span in 1e-3f64..8.0,
        frac in 0.02f64..1.5,
    ) {
        let y_bar = y_hat + span;
        let r_bar = frac * span;
        let (k, r, levels) = strip_ladder(y_hat, y_bar, r_bar).unwrap();
        prop_assert!(k >= 1);
        prop_assert!(r <= r_bar * (1.0 + 1e-12));
        prop_assert_eq!(levels.len(), 2 * (k - 1) + 1);
        prop_assert!((levels[0] - y_hat).abs() <= 1e-14 * y_hat.abs().max(1.0));
        // Half-step spacing and exact cover of the top strip.
        for (i, l) in levels.iter().enumerate() {
            let want = y_hat + i as f64 * r * 0.5;
            prop_assert!((l - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
        let top = levels[2 * (k - 1)] + r;
        prop_assert!((top - y_bar).abs() <= 1e-12 * y_bar.abs().max(1.0),
            "cover defect {:.3e}", top - y_bar);
    }

    #[test]
    fn time_modulus_is_subadditive_on_snapshots(
        ia in 0usize..31,
        span1 in 1usize..16,
        span2 in 1usize..16,
        m01 in 0.3f64..1.0,
    ) {
        let run = small_run();
        let times: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
        let ib = (ia + span1).min(times.len() - 1);
        let ic = (ib + span2).min(times.len() - 1);
        prop_assume!(ia < ib && ib < ic);
        let m_half = m01 * run.x_half;
        let (_, _, w_ac) = omega_between(run, times[ia], times[ic], m_half).unwrap();
        let (_, _, w_ab) = omega_between(run, times[ia], times[ib], m_half).unwrap();
        let (_, _, w_bc) = omega_between(run, times[ib], times[ic], m_half).unwrap();
        prop_assert!(w_ac <= w_ab + w_bc + 1e-10,
            "w_ac {w_ac:.6e} vs {:.6e}", w_ab + w_bc);
    }

    #[test]
    fn battery_members_are_admissible(
        t01 in 0.0f64..1.0,
        x01 in -1.0f64..1.0,
        xi01 in 0.0f64..1.0,
    ) {
        static BATT: OnceLock<kinlab::battery::TestBattery> = OnceLock::new();
        let batt = BATT.get_or_init(|| {
            let dom = BatteryDomain {
                t0: 0.0,
                t1: 0.7,
                x_half: 2.0,
                xi_lo: 0.0,
                xi_hi: 1.0,
                wave_speed: 3.0,
            };
            standard_battery(&dom).unwrap()
        });
        let (t, x, xi) = (0.7 * t01, 2.0 * x01, xi01);
        for m in &batt.members {
            prop_assert!(m.value(t, x, xi).abs() <= 1.0 + 1e-12, "{} value", m.name);
            prop_assert!(m.dxi(t, x, xi).abs() <= 1.0 + 1e-9, "{} dxi", m.name);
        }
    }

    #[test]
    fn chart_round_trips_on_the_rectangle(
        w01 in 0.001f64..0.999,
        z01 in 0.001f64..0.999,
    ) {
        for name in ["decoupled_burgers", "isentropic_euler", "p_system"] {
            let sys = build_system(name, &SystemParams::default()).unwrap();
            let rect = sys.rect();
            let w = rect.w_min + w01 * (rect.w_max - rect.w_min);
            let z = rect.z_min + z01 * (rect.z_max - rect.z_min);
            let u = sys.riemann_inverse(w, z);
            let (wb, zb) = sys.riemann_forward(u);
            let scale = (rect.w_max - rect.w_min).abs() + (rect.z_max - rect.z_min).abs();
            prop_assert!((wb - w).abs() + (zb - z).abs() <= 1e-9 * scale,
                "{name}: ({w:.6}, {z:.6}) -> ({wb:.6}, {zb:.6})");
        }
    }
}
