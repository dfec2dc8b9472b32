use rand::Rng;

use crate::error::{Error, Result};
use crate::netmodel::Phase;

/// Winner of a binary tournament between `a` and `b`; `a` wins ties.
pub fn duel(fitness: &[f64], a: usize, b: usize) -> usize {
    if fitness[b] < fitness[a] {
        b
    } else {
        a
    }
}

/// `pairs` parent pairs; each parent wins a duel between two uniform draws.
pub fn tournament_select<R: Rng>(fitness: &[f64], pairs: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let pick = |rng: &mut R| {
        let a = rng.gen_range(0..fitness.len());
        let b = rng.gen_range(0..fitness.len());
        duel(fitness, a, b)
    };
    (0..pairs).map(|_| (pick(rng), pick(rng))).collect()
}

/// Swaps the tails of `a` and `b` from position `cut`.
pub fn crossover_at(a: &[Phase], b: &[Phase], cut: usize) -> (Vec<Phase>, Vec<Phase>) {
    let mut x = a[..cut].to_vec();
    x.extend_from_slice(&b[cut..]);
    let mut y = b[..cut].to_vec();
    y.extend_from_slice(&a[cut..]);
    (x, y)
}

/// With probability `pc`, cuts at a uniform `k ∈ [1, len−1]` and swaps tails.
pub fn crossover_single_point<R: Rng>(
    a: &[Phase],
    b: &[Phase],
    pc: f64,
    rng: &mut R,
) -> Result<(Vec<Phase>, Vec<Phase>)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    if a.len() < 2 || !rng.gen_bool(pc) {
        return Ok((a.to_vec(), b.to_vec()));
    }
    let cut = rng.gen_range(1..a.len());
    Ok(crossover_at(a, b, cut))
}

/// Resamples each gene uniformly over the three phases with probability `pm`.
pub fn mutate_random_reset<R: Rng>(c: &mut [Phase], pm: f64, rng: &mut R) {
    for g in c.iter_mut() {
        if rng.gen_bool(pm) {
            *g = Phase::from_index(rng.gen_range(0..3));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ph(n: &[u8]) -> Vec<Phase> {
        n.iter().map(|&k| Phase::from_number(k).unwrap()).collect()
    }

    /// Pearson statistic against a uniform distribution.
    fn chi_square(counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        let e = n as f64 / counts.len() as f64;
        counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
    }

    #[test]
    fn tournament_prefers_fitter() {
        let fit = [3.0, 1.0];
        assert_eq!(duel(&fit, 0, 1), 1);
        assert_eq!(duel(&fit, 1, 0), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(tournament_select(&[1.0, 2.0], 1, &mut rng).len(), 1);
        let mut wins = [0usize; 2];
        for _ in 0..4000 {
            let (a, _) = tournament_select(&fit, 1, &mut rng)[0];
            wins[a] += 1;
        }
        // P(select index 1) = 3/4.
        assert!((wins[1] as f64 / 4000.0 - 0.75).abs() < 0.03);
    }

    #[test]
    fn tournament_uniform_under_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fit = [2.0; 5];
        let mut counts = [0usize; 5];
        for _ in 0..5000 {
            let (a, b) = tournament_select(&fit, 1, &mut rng)[0];
            counts[a] += 1;
            counts[b] += 1;
        }
        // Critical value of chi-square with 4 dof at p = 0.01.
        assert!(chi_square(&counts) < 13.28, "{counts:?}");
    }

    #[test]
    fn crossover_examples() {
        let (x, y) = crossover_at(&ph(&[1, 1, 1, 1]), &ph(&[3, 3, 3, 3]), 2);
        assert_eq!((x, y), (ph(&[1, 1, 3, 3]), ph(&[3, 3, 1, 1])));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ph(&[1, 2, 3, 1]);
        let b = ph(&[3, 3, 2, 2]);
        assert_eq!(crossover_single_point(&a, &b, 0.0, &mut rng).unwrap(), (a.clone(), b.clone()));
        for _ in 0..20 {
            assert_eq!(crossover_single_point(&a, &a, 1.0, &mut rng).unwrap(), (a.clone(), a.clone()));
        }
        assert!(crossover_single_point(&a, &b[..3], 1.0, &mut rng).is_err());
    }

    #[test]
    fn mutation_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = ph(&[1, 2, 3, 1, 2]);
        let orig = c.clone();
        mutate_random_reset(&mut c, 0.0, &mut rng);
        assert_eq!(c, orig);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let mut g = ph(&[1]);
            mutate_random_reset(&mut g, 1.0, &mut rng);
            counts[g[0].index()] += 1;
        }
        // 2 dof at p = 0.01.
        assert!(chi_square(&counts) < 9.21, "{counts:?}");
    }

    #[test]
    fn mutation_rate_one_over_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20;
        let trials = 20_000;
        let mut changed = 0usize;
        for _ in 0..trials {
            let mut c = vec![Phase::One; n];
            mutate_random_reset(&mut c, 1.0 / n as f64, &mut rng);
            changed += c.iter().filter(|&&p| p != Phase::One).count();
        }
        let mean = changed as f64 / trials as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.03, "{mean}");
    }
}
