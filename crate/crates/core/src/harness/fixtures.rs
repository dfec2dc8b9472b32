//! Bundled desk-scale feeders.
//!
//! * A: one load bus with three users, balanced 1 kW per phase.
//! * B: four-bus line `r-1-2-3`, one user per bus, all originally on phase 1, 24 hourly steps.
//! * C: synthetic 20-user radial feeder (trunk plus three laterals), 24 hourly steps.
//!
//! Every fixture uses phase-symmetric impedances (equal self and equal mutual terms).

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netmodel::{Branch, Feeder, LoadSeries, Phase, User};

const BASE_VOLTAGE: f64 = 230.0;
const BASE_POWER: f64 = 10_000.0;

/// Kron-reduced three-wire cable impedance per km: (self, mutual) for R and X, ohms.
const CABLE_R: (f64, f64) = (0.32, 0.11);
const CABLE_X: (f64, f64) = (0.09, 0.035);

fn symmetric(selfv: f64, mutual: f64) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| if i == j { selfv } else { mutual })
}

fn cable(from: usize, to: usize, metres: f64) -> Branch {
    let km = metres / 1000.0;
    Branch {
        from,
        to,
        r: symmetric(CABLE_R.0 * km, CABLE_R.1 * km),
        x: symmetric(CABLE_X.0 * km, CABLE_X.1 * km),
        ampacity: None,
        power_limit: None,
    }
}

fn user(id: &str, bus: usize, phase: u8) -> User {
    User {
        id: id.to_string(),
        bus,
        original_phase: Phase::from_number(phase).expect("fixture phase"),
        reconfigurable: true,
    }
}

fn reactive(p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let tan_phi = (1.0 / (0.95f64 * 0.95) - 1.0).sqrt();
    p.iter().map(|s| s.iter().map(|v| v * tan_phi).collect()).collect()
}

/// Two buses, one 50 m branch, three users at bus `1` on phases 1, 2, 3 drawing 1 kW each.
pub fn fixture_a() -> (Feeder, LoadSeries) {
    let feeder = Feeder::new(
        vec!["r".into(), "1".into()],
        vec![cable(0, 1, 50.0)],
        0,
        vec![user("u1", 1, 1), user("u2", 1, 2), user("u3", 1, 3)],
        BASE_VOLTAGE,
        BASE_POWER,
    )
    .expect("fixture A is valid");
    let p = vec![vec![1000.0; 4]; 3];
    let q = reactive(&p);
    let loads = LoadSeries::new(3600.0, p, q).expect("fixture A loads");
    (feeder, loads)
}

fn daily_shape(t: usize, shift: f64) -> f64 {
    let h = t as f64 + shift;
    let evening = (-(h - 19.0).powi(2) / 8.0).exp();
    let morning = (-(h - 7.5).powi(2) / 3.0).exp();
    0.35 + 0.45 * morning + 1.0 * evening
}

/// Line `r-1-2-3` with 80 m segments; users u1..u3 on buses 1..3, all on phase 1.
pub fn fixture_b() -> (Feeder, LoadSeries) {
    let feeder = Feeder::new(
        vec!["r".into(), "1".into(), "2".into(), "3".into()],
        vec![cable(0, 1, 80.0), cable(1, 2, 80.0), cable(2, 3, 80.0)],
        0,
        vec![user("u1", 1, 1), user("u2", 2, 1), user("u3", 3, 1)],
        BASE_VOLTAGE,
        BASE_POWER,
    )
    .expect("fixture B is valid");
    let scale = [2600.0, 1700.0, 3300.0];
    let shift = [0.0, 1.5, -1.0];
    let p: Vec<Vec<f64>> = (0..3).map(|u| (0..24).map(|t| scale[u] * daily_shape(t, shift[u])).collect()).collect();
    let q = reactive(&p);
    let loads = LoadSeries::new(3600.0, p, q).expect("fixture B loads");
    (feeder, loads)
}

/// Synthetic 20-user feeder: trunk `0-1-2-3-4` with laterals `1-5-6`, `2-7-8`, `3-9-10`.
pub fn fixture_c() -> (Feeder, LoadSeries) {
    let buses: Vec<String> = (0..=10).map(|b| b.to_string()).collect();
    let mut head = cable(0, 1, 60.0);
    head.power_limit = Some(150_000.0);
    head.ampacity = Some(400.0);
    let branches = vec![
        head,
        cable(1, 2, 60.0),
        cable(2, 3, 60.0),
        cable(3, 4, 60.0),
        cable(1, 5, 45.0),
        cable(5, 6, 45.0),
        cable(2, 7, 45.0),
        cable(7, 8, 45.0),
        cable(3, 9, 45.0),
        cable(9, 10, 45.0),
    ];
    // (bus, original phase); 9 users on phase 1, 7 on phase 2, 4 on phase 3.
    let placement: [(usize, u8); 20] = [
        (1, 1),
        (1, 2),
        (2, 1),
        (2, 1),
        (3, 2),
        (4, 1),
        (4, 3),
        (4, 1),
        (5, 2),
        (6, 1),
        (6, 1),
        (6, 3),
        (7, 2),
        (8, 2),
        (8, 1),
        (9, 3),
        (9, 2),
        (10, 1),
        (10, 2),
        (10, 3),
    ];
    let users: Vec<User> =
        placement.iter().enumerate().map(|(k, &(bus, phase))| user(&format!("u{}", k + 1), bus, phase)).collect();
    let feeder = Feeder::new(buses, branches, 0, users, BASE_VOLTAGE, BASE_POWER).expect("fixture C is valid");
    let loads = synthetic_profiles(feeder.users.len(), 24, 0xC0FFEE);
    (feeder, loads)
}

/// Seeded residential-looking hourly profiles (W), reactive power at pf 0.95.
pub fn synthetic_profiles(users: usize, horizon: usize, seed: u64) -> LoadSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<Vec<f64>> = (0..users)
        .map(|_| {
            let scale = rng.gen_range(500.0..2200.0);
            let shift = rng.gen_range(-2.0..2.0);
            (0..horizon)
                .map(|t| {
                    let noise = rng.gen_range(0.8..1.2);
                    scale * daily_shape(t % 24, shift) * noise
                })
                .collect()
        })
        .collect();
    let q = reactive(&p);
    LoadSeries::new(3600.0, p, q).expect("synthetic loads")
}

pub const NAMES: [&str; 3] = ["a", "b", "c"];

/// Looks a fixture up by its letter (case-insensitive).
pub fn by_name(name: &str) -> Result<(Feeder, LoadSeries)> {
    match name.to_ascii_lowercase().trim_start_matches("fixture_") {
        "a" => Ok(fixture_a()),
        "b" => Ok(fixture_b()),
        "c" => Ok(fixture_c()),
        _ => Err(Error::Validation(format!("unknown fixture '{name}' (expected a, b or c)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shapes() {
        let (a, la) = fixture_a();
        assert_eq!((a.buses.len(), a.branches.len(), a.users.len()), (2, 1, 3));
        assert_eq!(la.num_users(), 3);
        let (b, lb) = fixture_b();
        assert_eq!((b.buses.len(), b.users.len(), lb.horizon()), (4, 3, 24));
        let (c, lc) = fixture_c();
        assert_eq!((c.users.len(), lc.horizon()), (20, 24));
        assert_eq!(c.head_branches().len(), 1);
    }

    #[test]
    fn fixture_json_round_trip() {
        let (c, _) = fixture_c();
        let back = Feeder::from_json(&c.to_json()).unwrap();
        assert_eq!(back.to_json(), c.to_json());
    }
}
