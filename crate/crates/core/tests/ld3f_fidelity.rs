use phasebal::harness::fixtures;
use phasebal::ld3f::evaluate_series;
use phasebal::pf_exact::{solve_series, PfOptions};
use phasebal::{LoadSeries, PhaseAssignment};

/// Largest |ω - |u|²| and the number of per-phase branch drops whose sign disagrees.
fn compare(name: &str) -> (f64, usize) {
    let (feeder, loads) = fixtures::by_name(name).unwrap();
    let a = PhaseAssignment::original(&feeder);
    let lin = evaluate_series(&feeder, &a, &loads).unwrap();
    let exact = solve_series(&feeder, &a, &loads, &PfOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    let mut flips = 0;
    for (l, e) in lin.iter().zip(&exact) {
        for b in 0..feeder.buses.len() {
            let u2 = e.squared_magnitudes(b);
            for p in 0..3 {
                worst = worst.max((l.omega[b][p] - u2[p]).abs());
            }
        }
        for br in &feeder.branches {
            let (uf, ut) = (e.squared_magnitudes(br.from), e.squared_magnitudes(br.to));
            for p in 0..3 {
                let lin_drop = l.omega[br.from][p] - l.omega[br.to][p];
                let exact_drop = uf[p] - ut[p];
                if lin_drop.signum() != exact_drop.signum() && exact_drop.abs() > 1e-12 {
                    flips += 1;
                }
            }
        }
    }
    (worst, flips)
}

#[test]
fn squared_magnitudes_track_exact_pf_on_every_fixture() {
    for name in fixtures::NAMES {
        let (worst, flips) = compare(name);
        assert!(worst <= 2e-2, "{name}: max |ω - |u|²| = {worst}");
        assert_eq!(flips, 0, "{name}: drop signs disagree");
    }
}

#[test]
fn superposition_over_disjoint_user_sets() {
    let (feeder, loads) = fixtures::fixture_c();
    let a = PhaseAssignment::original(&feeder);
    let n = feeder.users.len();
    let h = loads.horizon();
    let mask = |keep: &dyn Fn(usize) -> bool| {
        let pick = |src: &Vec<Vec<f64>>| (0..n).map(|u| if keep(u) { src[u].clone() } else { vec![0.0; h] }).collect();
        LoadSeries::new(loads.resolution, pick(&loads.p), pick(&loads.q)).unwrap()
    };
    let zero = evaluate_series(&feeder, &a, &mask(&|_| false)).unwrap();
    let even = evaluate_series(&feeder, &a, &mask(&|u| u % 2 == 0)).unwrap();
    let odd = evaluate_series(&feeder, &a, &mask(&|u| u % 2 == 1)).unwrap();
    let all = evaluate_series(&feeder, &a, &loads).unwrap();
    for t in 0..h {
        for b in 0..feeder.buses.len() {
            for p in 0..3 {
                let sum = even[t].omega[b][p] + odd[t].omega[b][p] - zero[t].omega[b][p];
                assert!((sum - all[t].omega[b][p]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn flows_equal_downstream_injections() {
    let (feeder, loads) = fixtures::fixture_c();
    let a = PhaseAssignment::original(&feeder);
    let lin = evaluate_series(&feeder, &a, &loads).unwrap();
    let phases = a.user_phases(&feeder).unwrap();
    for t in 0..loads.horizon() {
        for k in 0..feeder.branches.len() {
            let mut expect = [0.0; 3];
            for &u in feeder.downstream_users(k).unwrap() {
                expect[phases[u].index()] += loads.p[u][t] / feeder.base_power;
            }
            for p in 0..3 {
                assert!((lin[t].p[k][p] - expect[p]).abs() < 1e-12);
            }
        }
    }
}
