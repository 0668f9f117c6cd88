use super::{LdpcError, ParityCheckMatrix};

/// How rows are chosen for a subcode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowSelection {
    /// The first `round(fraction * n_checks)` rows.
    Prefix,
    /// An explicit list of check indices; the fraction argument is ignored.
    Explicit(Vec<usize>),
}

/// A subcode induced by a subset of checks and every variable they touch.
///
/// The view carries its own re-indexed matrix so it can be handed straight to
/// the decoder; `var_subset[i]` is the parent column of local variable `i`.
#[derive(Debug, Clone)]
pub struct SubcodeView<'a> {
    parent: &'a ParityCheckMatrix,
    row_subset: Vec<usize>,
    var_subset: Vec<usize>,
    row_fraction: f64,
    local: ParityCheckMatrix,
}

impl<'a> SubcodeView<'a> {
    pub fn parent(&self) -> &'a ParityCheckMatrix {
        self.parent
    }

    pub fn row_subset(&self) -> &[usize] {
        &self.row_subset
    }

    pub fn var_subset(&self) -> &[usize] {
        &self.var_subset
    }

    pub fn row_fraction(&self) -> f64 {
        self.row_fraction
    }

    /// The subcode's own parity-check matrix over local variable indices.
    pub fn matrix(&self) -> &ParityCheckMatrix {
        &self.local
    }

    /// Picks the subcode positions out of a full-length vector.
    pub fn restrict<T: Copy>(&self, full: &[T]) -> Vec<T> {
        self.var_subset.iter().map(|&k| full[k]).collect()
    }
}

/// Builds the subcode spanned by a fraction (or explicit list) of rows.
pub fn extract_subcode(
    h: &ParityCheckMatrix,
    row_fraction: f64,
    selection: RowSelection,
) -> Result<SubcodeView<'_>, LdpcError> {
    let n_checks = h.n_checks();
    let mut rows = match selection {
        RowSelection::Prefix => {
            if !(row_fraction > 0.0 && row_fraction <= 1.0) {
                return Err(LdpcError::InvalidFraction(row_fraction));
            }
            let count = (row_fraction * n_checks as f64).round() as usize;
            if count == 0 {
                return Err(LdpcError::EmptySubcode {
                    fraction: row_fraction,
                    n_checks,
                });
            }
            (0..count.min(n_checks)).collect::<Vec<_>>()
        }
        RowSelection::Explicit(list) => list,
    };
    rows.sort_unstable();
    rows.dedup();
    if rows.is_empty() {
        return Err(LdpcError::EmptySubcode {
            fraction: 0.0,
            n_checks,
        });
    }
    if let Some(&m) = rows.iter().find(|&&m| m >= n_checks) {
        return Err(LdpcError::InvalidMatrix(format!(
            "row {m} out of range for {n_checks} checks"
        )));
    }

    let mut used = vec![false; h.n_vars()];
    rows.iter()
        .flat_map(|&m| h.check_vars(m))
        .for_each(|&k| used[k] = true);
    let var_subset: Vec<usize> = (0..h.n_vars()).filter(|&k| used[k]).collect();
    let mut local_index = vec![usize::MAX; h.n_vars()];
    var_subset
        .iter()
        .enumerate()
        .for_each(|(i, &k)| local_index[k] = i);
    let local_rows = rows
        .iter()
        .map(|&m| h.check_vars(m).iter().map(|&k| local_index[k]).collect())
        .collect();
    let local = ParityCheckMatrix::from_rows(var_subset.len(), local_rows)?;
    let fraction = rows.len() as f64 / n_checks as f64;

    Ok(SubcodeView {
        parent: h,
        row_subset: rows,
        var_subset,
        row_fraction: fraction,
        local,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ParityCheckMatrix {
        ParityCheckMatrix::from_rows(6, vec![vec![0, 1, 3], vec![1, 2, 4], vec![0, 2, 5]]).unwrap()
    }

    #[test]
    fn full_fraction_is_the_whole_code() {
        let h = toy();
        let s = extract_subcode(&h, 1.0, RowSelection::Prefix).unwrap();
        assert_eq!(s.row_subset(), &[0, 1, 2]);
        assert_eq!(s.var_subset(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(s.matrix(), &h);
    }

    #[test]
    fn two_thirds_prefix() {
        let h = toy();
        let s = extract_subcode(&h, 2.0 / 3.0, RowSelection::Prefix).unwrap();
        assert_eq!(s.row_subset(), &[0, 1]);
        // union of {0,1,3} and {1,2,4}
        assert_eq!(s.var_subset(), &[0, 1, 2, 3, 4]);
        assert_eq!(s.matrix().n_vars(), 5);
        assert_eq!(s.matrix().check_vars(1), &[1, 2, 4]);
        assert!(((s.row_fraction() * 3.0).round() as usize) == 2);
    }

    #[test]
    fn explicit_rows() {
        let h = toy();
        let s = extract_subcode(&h, 0.0, RowSelection::Explicit(vec![2])).unwrap();
        assert_eq!(s.var_subset(), &[0, 2, 5]);
        assert_eq!(s.restrict(&[10, 11, 12, 13, 14, 15]), vec![10, 12, 15]);
    }

    #[test]
    fn tiny_fraction_is_rejected() {
        let h = toy();
        assert!(matches!(
            extract_subcode(&h, 0.01, RowSelection::Prefix),
            Err(LdpcError::EmptySubcode { .. })
        ));
        assert!(matches!(
            extract_subcode(&h, 1.5, RowSelection::Prefix),
            Err(LdpcError::InvalidFraction(_))
        ));
    }
}
