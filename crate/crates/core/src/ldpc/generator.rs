//! Systematic encoding from a parity-check matrix via GF(2) elimination.

use serde::{Deserialize, Serialize};

use super::{LdpcError, ParityCheckMatrix};

type Bits = Vec<u64>;

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

fn get(bits: &[u64], i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

fn set(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

/// Maps information words to codewords of the code defined by `H`.
///
/// Columns without a pivot in the reduced row echelon form of `H` carry the
/// information bits; each pivot column is the XOR of the information bits
/// selected by its row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorMapping {
    n_vars: usize,
    info_positions: Vec<usize>,
    pivot_positions: Vec<usize>,
    /// For each pivot, bitset over info indices.
    parity_rows: Vec<Bits>,
}

impl GeneratorMapping {
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn rank(&self) -> usize {
        self.pivot_positions.len()
    }

    pub fn n_info(&self) -> usize {
        self.info_positions.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }
}

/// Row-reduces `H` over GF(2) and records how to complete a codeword from
/// its information bits.
pub fn derive_generator(h: &ParityCheckMatrix) -> Result<GeneratorMapping, LdpcError> {
    let n = h.n_vars();
    let w = words(n);
    let mut rows: Vec<Bits> = h
        .rows()
        .iter()
        .map(|r| {
            let mut b = vec![0u64; w];
            r.iter().for_each(|&k| set(&mut b, k));
            b
        })
        .collect();

    let mut pivots: Vec<usize> = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..rows.len()).find(|&r| get(&rows[r], col)) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && get(row, col) {
                row.iter_mut().zip(&pivot_row).for_each(|(a, b)| *a ^= b);
            }
        }
        pivots.push(col);
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    if rank == 0 {
        return Err(LdpcError::Degenerate);
    }

    let mut is_pivot = vec![false; n];
    pivots.iter().for_each(|&c| is_pivot[c] = true);
    let info_positions: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let wi = words(info_positions.len());
    let parity_rows = rows[..rank]
        .iter()
        .map(|row| {
            let mut b = vec![0u64; wi.max(1)];
            for (i, &c) in info_positions.iter().enumerate() {
                if get(row, c) {
                    set(&mut b, i);
                }
            }
            b
        })
        .collect();

    Ok(GeneratorMapping {
        n_vars: n,
        info_positions,
        pivot_positions: pivots,
        parity_rows,
    })
}

/// Encodes `info` (0/1 entries) into a length-`n_vars` codeword.
pub fn encode(g: &GeneratorMapping, info: &[u8]) -> Result<Vec<u8>, LdpcError> {
    if info.len() != g.info_positions.len() {
        return Err(LdpcError::LengthMismatch {
            expected: g.info_positions.len(),
            got: info.len(),
        });
    }
    let mut packed = vec![0u64; words(info.len()).max(1)];
    let mut codeword = vec![0u8; g.n_vars];
    for (i, (&pos, &bit)) in g.info_positions.iter().zip(info).enumerate() {
        let bit = bit & 1;
        codeword[pos] = bit;
        if bit == 1 {
            set(&mut packed, i);
        }
    }
    for (&pos, row) in g.pivot_positions.iter().zip(&g.parity_rows) {
        let ones: u32 = row
            .iter()
            .zip(&packed)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        codeword[pos] = (ones & 1) as u8;
    }
    Ok(codeword)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ParityCheckMatrix {
        ParityCheckMatrix::from_rows(6, vec![vec![0, 1, 3], vec![1, 2, 4], vec![0, 2, 5]]).unwrap()
    }

    /// Rank over GF(2) by naive elimination on dense byte rows.
    fn gf2_rank_oracle(dense: &[Vec<u8>]) -> usize {
        let mut m: Vec<Vec<u8>> = dense.to_vec();
        let cols = m.first().map_or(0, Vec::len);
        let mut rank = 0;
        for c in 0..cols {
            if let Some(p) = (rank..m.len()).find(|&r| m[r][c] == 1) {
                m.swap(rank, p);
                for r in 0..m.len() {
                    if r != rank && m[r][c] == 1 {
                        for j in 0..cols {
                            m[r][j] ^= m[rank][j];
                        }
                    }
                }
                rank += 1;
            }
        }
        rank
    }

    #[test]
    fn toy_code_all_info_words_are_codewords() {
        let h = toy();
        let g = derive_generator(&h).unwrap();
        assert_eq!(g.n_info(), 3);
        let mut seen = std::collections::HashSet::new();
        for u in 0..8u8 {
            let info: Vec<u8> = (0..3).map(|i| (u >> i) & 1).collect();
            let c = encode(&g, &info).unwrap();
            assert!(h.is_codeword(&c), "info {info:?} -> {c:?}");
            // systematic
            for (i, &p) in g.info_positions().iter().enumerate() {
                assert_eq!(c[p], info[i]);
            }
            seen.insert(c);
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn identity_pair_copies_info_into_parity() {
        // H = [I | I]: x_i + x_{i+3} = 0.
        let h = ParityCheckMatrix::from_rows(6, vec![vec![0, 3], vec![1, 4], vec![2, 5]]).unwrap();
        let g = derive_generator(&h).unwrap();
        assert_eq!(g.info_positions(), &[3, 4, 5]);
        let c = encode(&g, &[1, 0, 1]).unwrap();
        assert_eq!(c, vec![1, 0, 1, 1, 0, 1]);
    }

    #[test]
    fn duplicated_row_reduces_rank() {
        let h = ParityCheckMatrix::from_rows(
            6,
            vec![vec![0, 1, 3], vec![1, 2, 4], vec![0, 2, 5], vec![0, 1, 3]],
        )
        .unwrap();
        let rank = gf2_rank_oracle(&h.to_dense());
        assert_eq!(rank, 3);
        let g = derive_generator(&h).unwrap();
        assert_eq!(g.rank(), rank);
        assert_eq!(g.n_info(), 6 - rank);
        let c = encode(&g, &[1, 1, 0]).unwrap();
        assert!(h.is_codeword(&c));
    }

    #[test]
    fn zero_info_gives_zero_codeword_and_length_is_checked() {
        let g = derive_generator(&toy()).unwrap();
        assert_eq!(encode(&g, &[0, 0, 0]).unwrap(), vec![0; 6]);
        assert_eq!(
            encode(&g, &[1, 0]),
            Err(LdpcError::LengthMismatch {
                expected: 3,
                got: 2
            })
        );
    }

    #[test]
    fn info_100_verified_by_syndrome() {
        let h = toy();
        let g = derive_generator(&h).unwrap();
        let c = encode(&g, &[1, 0, 0]).unwrap();
        assert_eq!(h.syndrome(&c), vec![0, 0, 0]);
        assert_ne!(c, vec![0; 6]);
    }
}
