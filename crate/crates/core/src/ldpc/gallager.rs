use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::ParityCheckMatrix;
use crate::rng::{substream, Domain};

/// Swap attempts per band before the band is reshuffled from scratch.
const REPAIR_ATTEMPTS: usize = 200_000;
const RESHUFFLES: usize = 50;

/// Seeded Gallager construction of a regular `(col_weight, row_weight)` code.
///
/// The first band of `n / row_weight` rows covers consecutive blocks of
/// columns; every further band is a random column permutation of the first,
/// repaired by swaps so that no two columns share more than one check. The
/// graph then has no 4-cycles and no two columns are equal. If a band cannot
/// be repaired (tiny or very dense codes) the best attempt is kept and a
/// warning is logged.
///
/// Panics if `row_weight` does not divide `n`.
pub fn gallager_regular(
    n: usize,
    col_weight: usize,
    row_weight: usize,
    seed: u64,
) -> ParityCheckMatrix {
    assert!(
        row_weight > 0 && n % row_weight == 0,
        "row weight must divide n"
    );
    let band_rows = n / row_weight;
    let mut rng = substream(seed, Domain::Code, 0);
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(band_rows * col_weight);
    // pairs of columns already sharing a check
    let mut linked: HashSet<(usize, usize)> = HashSet::new();
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    for band in 0..col_weight {
        let mut perm: Vec<usize> = (0..n).collect();
        if band > 0 {
            let mut best: Option<(usize, Vec<usize>)> = None;
            for _ in 0..RESHUFFLES {
                perm.shuffle(&mut rng);
                let left = repair_band(&mut perm, row_weight, &linked, &mut rng);
                if best.as_ref().map_or(true, |(b, _)| left < *b) {
                    best = Some((left, perm.clone()));
                }
                if left == 0 {
                    break;
                }
            }
            let (left, p) = best.expect("at least one shuffle");
            if left > 0 {
                log::warn!("band {band}: {left} rows still close 4-cycles");
            }
            perm = p;
        }
        for r in 0..band_rows {
            let row = perm[r * row_weight..(r + 1) * row_weight].to_vec();
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i + 1..] {
                    linked.insert(key(a, b));
                }
            }
            rows.push(row);
        }
    }
    ParityCheckMatrix::from_rows(n, rows).expect("Gallager bands form a valid matrix")
}

/// Number of columns in `row` that already share a check with `col`.
fn clashes(col: usize, row: &[usize], skip: usize, linked: &HashSet<(usize, usize)>) -> usize {
    row.iter()
        .enumerate()
        .filter(|&(i, &o)| i != skip && linked.contains(&(col.min(o), col.max(o))))
        .count()
}

/// Swaps entries between rows of one band until no row holds two columns
/// that are already linked. Returns the number of offending positions left.
fn repair_band<R: Rng>(
    perm: &mut [usize],
    w: usize,
    linked: &HashSet<(usize, usize)>,
    rng: &mut R,
) -> usize {
    let bad = |perm: &[usize], p: usize| {
        let r = p / w;
        clashes(perm[p], &perm[r * w..(r + 1) * w], p % w, linked) > 0
    };
    let mut offenders: Vec<usize> = (0..perm.len()).filter(|&p| bad(perm, p)).collect();
    let mut attempts = 0;
    while let Some(&p) = offenders.last() {
        if attempts == REPAIR_ATTEMPTS {
            break;
        }
        attempts += 1;
        if !bad(perm, p) {
            offenders.pop();
            continue;
        }
        let q = rng.random_range(0..perm.len());
        let (rp, rq) = (p / w, q / w);
        if rp == rq {
            continue;
        }
        let (a, b) = (perm[p], perm[q]);
        // accept only if both columns land in rows where they are clean
        let fits_q = clashes(a, &perm[rq * w..(rq + 1) * w], q % w, linked) == 0;
        let fits_p = clashes(b, &perm[rp * w..(rp + 1) * w], p % w, linked) == 0;
        if fits_p && fits_q {
            perm.swap(p, q);
            offenders.pop();
        }
    }
    (0..perm.len()).filter(|&p| bad(perm, p)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shared_checks(h: &ParityCheckMatrix, a: usize, b: usize) -> usize {
        let cb = h.var_checks(b);
        h.var_checks(a).iter().filter(|c| cb.contains(c)).count()
    }

    #[test]
    fn regular_degrees_and_determinism() {
        let h = gallager_regular(360, 3, 6, 1);
        assert_eq!(h.n_checks(), 180);
        assert!(h.rows().iter().all(|r| r.len() == 6));
        assert!(h.columns().iter().all(|c| c.len() == 3));
        assert_eq!(h, gallager_regular(360, 3, 6, 1));
        assert_ne!(h, gallager_regular(360, 3, 6, 2));
    }

    #[test]
    fn default_size_has_no_four_cycles() {
        for seed in 0..4 {
            let h = gallager_regular(360, 3, 6, seed);
            for a in 0..h.n_vars() {
                for b in a + 1..h.n_vars() {
                    assert!(
                        shared_checks(&h, a, b) <= 1,
                        "seed {seed}: columns {a}, {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn tiny_codes_still_build() {
        // 4-cycles are unavoidable here; the construction must still finish
        let h = gallager_regular(12, 3, 6, 0);
        assert!(h.columns().iter().all(|c| c.len() == 3));
    }
}
