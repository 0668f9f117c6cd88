use super::LdpcError;

/// Sparse binary parity-check matrix stored as both adjacency directions of
/// its Tanner graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n_vars: usize,
    check_to_vars: Vec<Vec<usize>>,
    var_to_checks: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    /// Builds a matrix from its rows, given as lists of variable indices.
    ///
    /// Rows are sorted; duplicate entries, out-of-range indices and empty
    /// rows or columns are rejected.
    pub fn from_rows(n_vars: usize, rows: Vec<Vec<usize>>) -> Result<Self, LdpcError> {
        if rows.is_empty() || n_vars == 0 {
            return Err(LdpcError::InvalidMatrix(
                "matrix has no rows or columns".into(),
            ));
        }
        let mut check_to_vars = rows;
        let mut var_to_checks = vec![Vec::new(); n_vars];
        for (m, row) in check_to_vars.iter_mut().enumerate() {
            if row.is_empty() {
                return Err(LdpcError::InvalidMatrix(format!("row {m} is empty")));
            }
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(LdpcError::InvalidMatrix(format!(
                    "duplicate edge ({m}, {})",
                    w[0]
                )));
            }
            for &k in row.iter() {
                if k >= n_vars {
                    return Err(LdpcError::InvalidMatrix(format!(
                        "row {m} references column {k} >= {n_vars}"
                    )));
                }
                var_to_checks[k].push(m);
            }
        }
        if let Some(k) = var_to_checks.iter().position(Vec::is_empty) {
            return Err(LdpcError::InvalidMatrix(format!("column {k} is empty")));
        }
        Ok(ParityCheckMatrix {
            n_vars,
            check_to_vars,
            var_to_checks,
        })
    }

    /// Builds a matrix from a dense 0/1 row-major description.
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self, LdpcError> {
        let n_vars = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_vars) {
            return Err(LdpcError::InvalidMatrix("ragged dense matrix".into()));
        }
        let sparse = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &b)| b != 0)
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        Self::from_rows(n_vars, sparse)
    }

    pub fn n_checks(&self) -> usize {
        self.check_to_vars.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_edges(&self) -> usize {
        self.check_to_vars.iter().map(Vec::len).sum()
    }

    /// Variables participating in check `m`, sorted.
    pub fn check_vars(&self, m: usize) -> &[usize] {
        &self.check_to_vars[m]
    }

    /// Checks attached to variable `k`, sorted.
    pub fn var_checks(&self, k: usize) -> &[usize] {
        &self.var_to_checks[k]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.check_to_vars
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.var_to_checks
    }

    /// `H * bits` over GF(2), one entry per check.
    pub fn syndrome(&self, bits: &[u8]) -> Vec<u8> {
        self.check_to_vars
            .iter()
            .map(|row| row.iter().fold(0u8, |acc, &k| acc ^ (bits[k] & 1)))
            .collect()
    }

    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        bits.len() == self.n_vars
            && self
                .check_to_vars
                .iter()
                .all(|row| row.iter().fold(0u8, |acc, &k| acc ^ (bits[k] & 1)) == 0)
    }

    /// Dense 0/1 rows.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        self.check_to_vars
            .iter()
            .map(|row| {
                let mut r = vec![0u8; self.n_vars];
                row.iter().for_each(|&k| r[k] = 1);
                r
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy() -> ParityCheckMatrix {
        ParityCheckMatrix::from_rows(6, vec![vec![0, 1, 3], vec![1, 2, 4], vec![0, 2, 5]]).unwrap()
    }

    #[test]
    fn adjacencies_are_transposes() {
        let h = toy();
        assert_eq!(h.n_edges(), 9);
        for m in 0..h.n_checks() {
            for &k in h.check_vars(m) {
                assert!(h.var_checks(k).contains(&m));
            }
        }
        for k in 0..h.n_vars() {
            for &m in h.var_checks(k) {
                assert!(h.check_vars(m).contains(&k));
            }
        }
    }

    #[test]
    fn rejects_duplicates_and_empty_columns() {
        assert!(matches!(
            ParityCheckMatrix::from_rows(3, vec![vec![0, 1, 1], vec![2]]),
            Err(LdpcError::InvalidMatrix(_))
        ));
        assert!(matches!(
            ParityCheckMatrix::from_rows(4, vec![vec![0, 1], vec![1, 2]]),
            Err(LdpcError::InvalidMatrix(_))
        ));
    }

    #[test]
    fn dense_round_trip() {
        let h = toy();
        assert_eq!(ParityCheckMatrix::from_dense(&h.to_dense()).unwrap(), h);
    }
}
