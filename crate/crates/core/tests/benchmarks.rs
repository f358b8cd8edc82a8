use lienet_core::reference::Rk4;
use lienet_core::{
    build_map, compose_all, map_to_ode, parse_ode, simulate, BuilderConfig, InterpretConfig,
    PolynomialODE, DEFAULT_GUARD,
};

const LOTKA_VOLTERRA: &str = "x' = -y - x*y ; y' = x + x*y";
const VAN_DER_POL: &str = "x' = y ; y' = y - x - x^2*y";
const HENON_HEILES: &str = "q1' = p1 ; q2' = p2 ; p1' = -q1 - 2*q1*q2 ; p2' = -q2 - q1^2 + q2^2";
const SIR: &str = "S' = -0.5*I*S ; I' = 0.5*I*S - 0.1*I ; R' = 0.1*I";

fn max_coeff_error(a: &PolynomialODE, b: &PolynomialODE) -> f64 {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .map(|(x, y)| (x - y).abs().max())
        .fold(0.0, f64::max)
}

#[test]
fn lotka_volterra_tracks_fine_rk4() {
    let ode = parse_ode(LOTKA_VOLTERRA).unwrap();
    let map = build_map(&ode, 0.01, &BuilderConfig::new(3)).unwrap();
    let traj = simulate(&map, &[0.2, 0.1], 1000, DEFAULT_GUARD).unwrap();
    let reference = Rk4::new(&ode).trajectory(&[0.2, 0.1], 0.01, 1000, 100).unwrap();
    let dev = traj
        .states
        .iter()
        .zip(&reference.states)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    assert!(dev < 1e-4, "deviation {dev:e}");
}

#[test]
fn van_der_pol_reaches_limit_cycle() {
    let ode = parse_ode(VAN_DER_POL).unwrap();
    let map = build_map(&ode, 0.01, &BuilderConfig::new(3)).unwrap();
    let traj = simulate(&map, &[2.0, 0.0], 5000, DEFAULT_GUARD).unwrap();
    // settled RK4 orbit, longer than one period
    let reference = Rk4::new(&ode).trajectory(&[2.0, 0.0], 0.01, 8000, 100).unwrap();
    let cycle = &reference.states[3000..];
    let worst = traj.states[4000..]
        .iter()
        .map(|x| {
            cycle
                .iter()
                .map(|c| ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    assert!(worst < 5e-2, "distance to cycle {worst:e}");
}

#[test]
fn henon_heiles_energy_is_conserved() {
    let ode = parse_ode(HENON_HEILES).unwrap();
    let map = build_map(&ode, 0.01, &BuilderConfig::new(3)).unwrap();
    let x0 = [0.0, 0.670, 0.093, 0.0];
    let energy = |x: &[f64]| {
        0.5 * (x[2] * x[2] + x[3] * x[3]) + 0.5 * (x[0] * x[0] + x[1] * x[1]) + x[0] * x[0] * x[1]
            - x[1].powi(3) / 3.0
    };
    let h0 = energy(&x0);
    let traj = simulate(&map, &x0, 10_000, DEFAULT_GUARD).unwrap();
    let drift = traj
        .states
        .iter()
        .map(|x| ((energy(x) - h0) / h0).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-2, "drift {drift:e}");
}

#[test]
fn half_step_maps_compose_to_full_step() {
    let ode = parse_ode(LOTKA_VOLTERRA).unwrap();
    let cfg = BuilderConfig::new(3);
    let quarter = build_map(&ode, 0.025, &cfg).unwrap();
    let full = build_map(&ode, 0.1, &cfg).unwrap();
    let stacked = compose_all(&[quarter.clone(), quarter.clone(), quarter.clone(), quarter], 3).unwrap();
    assert!((stacked.dt() - 0.1).abs() < 1e-15);
    for (a, b) in stacked.weights().iter().zip(full.weights()) {
        assert!((a - b).abs().max() < 1e-6);
    }
}

#[test]
fn benchmarks_round_trip_through_interpretation() {
    let cfg = InterpretConfig::default();
    for text in [LOTKA_VOLTERRA, VAN_DER_POL, HENON_HEILES, SIR] {
        let ode = parse_ode(text).unwrap();
        for dt in [0.1, 0.05] {
            let map = build_map(&ode, dt, &BuilderConfig::new(3)).unwrap();
            let res = map_to_ode(&map, ode.degree(), None, &cfg).unwrap();
            assert!(res.converged, "{text} at dt={dt}");
            let err = max_coeff_error(&res.ode, &ode);
            assert!(err < 1e-3, "{text} at dt={dt}: {err:e}");
        }
    }
}

#[test]
fn seed_estimate_improves_as_dt_shrinks() {
    // With no refinement the recovered system is log(W_1)/dt and W_k/dt,
    // which carries the truncation contamination of the map.
    let cfg = InterpretConfig {
        max_iterations: 0,
        ..Default::default()
    };
    for text in [LOTKA_VOLTERRA, VAN_DER_POL, SIR] {
        let ode = parse_ode(text).unwrap();
        let errors: Vec<f64> = [0.1, 0.05, 0.02, 0.01]
            .iter()
            .map(|&dt| {
                let map = build_map(&ode, dt, &BuilderConfig::new(3)).unwrap();
                let res = map_to_ode(&map, ode.degree(), None, &cfg).unwrap();
                max_coeff_error(&res.ode, &ode)
            })
            .collect();
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{text}: {errors:?}");
    }
}
