mod common;

use std::time::Instant;

use common::brute_force_assignment;
use polymatch_core::assignment::{hungarian, Assignment, CostMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Costs on a 1/1024 lattice so every partial sum is exact.
fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize, forbid_p: f64) -> Vec<Vec<Option<f64>>> {
    (0..m)
        .map(|_| {
            (0..n)
                .map(|_| (!rng.gen_bool(forbid_p)).then(|| rng.gen_range(0..100 * 1024) as f64 / 1024.0))
                .collect()
        })
        .collect()
}

fn to_cost(rows: &[Vec<Option<f64>>]) -> CostMatrix {
    let (m, n) = (rows.len(), rows.first().map_or(0, Vec::len));
    let mut c = CostMatrix::forbidden(m, n);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            if let Some(v) = v {
                c.set(i, j, *v).unwrap();
            }
        }
    }
    c
}

fn transpose(rows: &[Vec<Option<f64>>]) -> Vec<Vec<Option<f64>>> {
    let n = rows.first().map_or(0, Vec::len);
    (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

fn check_one_to_one(a: &Assignment) {
    let mut rows: Vec<usize> = a.pairs.iter().map(|p| p.0).collect();
    let mut cols: Vec<usize> = a.pairs.iter().map(|p| p.1).collect();
    rows.sort_unstable();
    cols.sort_unstable();
    let (lr, lc) = (rows.len(), cols.len());
    rows.dedup();
    cols.dedup();
    assert_eq!((rows.len(), cols.len()), (lr, lc), "row or column used twice");
}

fn oracle(rows: &[Vec<Option<f64>>]) -> Option<f64> {
    if rows.len() <= rows.first().map_or(0, Vec::len) {
        brute_force_assignment(rows)
    } else {
        brute_force_assignment(&transpose(rows))
    }
}

#[test]
fn equals_permutation_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let start = Instant::now();
    for _ in 0..200 {
        let (m, n) = (rng.gen_range(1..=7), rng.gen_range(1..=7));
        let rows = random_matrix(&mut rng, m, n, 0.0);
        let a = hungarian(&to_cost(&rows));
        check_one_to_one(&a);
        assert_eq!(a.pairs.len(), m.min(n));
        assert_eq!(Some(a.total_cost), oracle(&rows), "{rows:?}");
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

/// With forbidden entries the solver first maximizes the number of permitted
/// pairs; among maximum matchings the cost must equal the oracle's.
#[test]
fn forbidden_entries_match_oracle_over_maximum_matchings() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..200 {
        let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let rows = random_matrix(&mut rng, m, n, 0.3);
        let a = hungarian(&to_cost(&rows));
        check_one_to_one(&a);
        assert!(a.pairs.iter().all(|&(i, j)| rows[i][j].is_some()));
        // Oracle: best over subsets of rows of the maximum feasible size.
        let best = best_partial(&rows);
        assert_eq!(a.pairs.len(), best.0);
        assert_eq!(a.total_cost, best.1);
    }
}

/// (max pairs, min cost at that size) by exhaustive search.
fn best_partial(rows: &[Vec<Option<f64>>]) -> (usize, f64) {
    fn rec(rows: &[Vec<Option<f64>>], i: usize, used: &mut Vec<bool>, k: usize, acc: f64, best: &mut (usize, f64)) {
        if i == rows.len() {
            if k > best.0 || (k == best.0 && acc < best.1) {
                *best = (k, acc);
            }
            return;
        }
        rec(rows, i + 1, used, k, acc, best);
        for j in 0..used.len() {
            if let (false, Some(c)) = (used[j], rows[i][j]) {
                used[j] = true;
                rec(rows, i + 1, used, k + 1, acc + c, best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0.0);
    let n = rows.first().map_or(0, Vec::len);
    rec(rows, 0, &mut vec![false; n], 0, 0.0, &mut best);
    best
}

#[test]
fn spot_examples() {
    let a = hungarian(&CostMatrix::from_rows(&[vec![5.0]]).unwrap());
    assert_eq!((a.pairs, a.total_cost), (vec![(0, 0)], 5.0));
    let d = CostMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 10.0 }).unwrap();
    let a = hungarian(&d);
    assert_eq!((a.pairs, a.total_cost), (vec![(0, 0), (1, 1), (2, 2)], 0.0));
    let e = hungarian(&CostMatrix::forbidden(0, 0));
    assert!(e.pairs.is_empty() && e.total_cost == 0.0);
}

#[test]
fn solves_500_square_quickly() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let c = CostMatrix::from_fn(500, 500, |_, _| rng.gen_range(0.0..1000.0)).unwrap();
    let start = Instant::now();
    let a = hungarian(&c);
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(a.pairs.len(), 500);
    check_one_to_one(&a);
    assert!(elapsed < 0.1, "{elapsed} s");
}

proptest! {
    #[test]
    fn row_shift_changes_cost_not_pairs(seed in any::<u64>(), m in 1usize..6, shift in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_matrix(&mut rng, m, m, 0.0);
        let base = hungarian(&to_cost(&rows));
        let r = rng.gen_range(0..m);
        let shift = (shift * 1024.0).round() / 1024.0;
        let mut shifted = rows.clone();
        shifted[r].iter_mut().for_each(|v| *v = v.map(|x| x + shift));
        let moved = hungarian(&to_cost(&shifted));
        prop_assert_eq!(moved.total_cost, base.total_cost + shift);
        // Pair sets agree whenever the optimum is unique.
        let second_best = runner_up(&rows, base.total_cost);
        if second_best.is_none_or(|s| s > base.total_cost) {
            prop_assert_eq!(moved.pairs, base.pairs);
        }
    }

    #[test]
    fn optimal_on_random_rectangles(seed in any::<u64>(), m in 1usize..6, n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_matrix(&mut rng, m, n, 0.0);
        let a = hungarian(&to_cost(&rows));
        prop_assert_eq!(Some(a.total_cost), oracle(&rows));
    }
}

/// Smallest permutation cost distinct from the optimal assignment's pairs.
fn runner_up(rows: &[Vec<Option<f64>>], best: f64) -> Option<f64> {
    let n = rows.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut costs = Vec::new();
    permute(&mut perm, 0, &mut |p| costs.push(p.iter().enumerate().map(|(i, &j)| rows[i][j].unwrap()).sum::<f64>()));
    costs.sort_by(f64::total_cmp);
    let optimal = costs.iter().filter(|&&c| c == best).count();
    if optimal > 1 {
        return Some(best);
    }
    costs.into_iter().find(|&c| c > best)
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}
