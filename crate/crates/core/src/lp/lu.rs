//! Sparse LU factorization of a basis matrix with product-form updates.
//!
//! The factorization satisfies `B Q = L U`, where `Q` maps pivot `p` to basis
//! position `pos[p]`, `L` is unit lower triangular in pivot order (column `p`
//! is `e_{row[p]}` plus the multipliers in `l_cols[p]`) and `U` is upper
//! triangular over pivot indices. Basis changes append eta matrices.

const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub(crate) struct LuFactor {
    m: usize,
    row: Vec<usize>,
    pos: Vec<usize>,
    l_cols: Vec<Vec<(usize, f64)>>,
    /// pivots whose `L` column has off-diagonal entries, ascending
    l_nontrivial: Vec<usize>,
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
}

/// Outcome of a factorization attempt.
pub(crate) struct Factored {
    pub lu: LuFactor,
    /// Basis positions whose column could not be pivoted, paired with rows
    /// left without a pivot. Both lists have the same length.
    pub singular_positions: Vec<usize>,
    pub free_rows: Vec<usize>,
}

impl LuFactor {
    /// Factors the `m x m` matrix whose column at position `k` is `columns[k]`.
    /// `order` gives the sequence in which positions are eliminated.
    pub(crate) fn factor(m: usize, columns: &[Vec<(usize, f64)>], order: &[usize]) -> Factored {
        debug_assert_eq!(columns.len(), m);
        let mut lu = LuFactor {
            m,
            row: Vec::with_capacity(m),
            pos: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            l_nontrivial: Vec::new(),
            u_cols: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
            etas: Vec::new(),
        };
        let mut pivot_of_row = vec![usize::MAX; m];
        let mut w = vec![0.0; m];
        let mut mark = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut singular_positions = Vec::new();

        for &k in order {
            for &(r, v) in &columns[k] {
                if !mark[r] {
                    mark[r] = true;
                    pattern.push(r);
                }
                w[r] += v;
            }
            for &q in &lu.l_nontrivial {
                let v = w[lu.row[q]];
                if v == 0.0 {
                    continue;
                }
                for &(r, mult) in &lu.l_cols[q] {
                    if !mark[r] {
                        mark[r] = true;
                        pattern.push(r);
                    }
                    w[r] -= v * mult;
                }
            }
            let mut u_col = Vec::new();
            let mut best: Option<(usize, f64)> = None;
            for &r in &pattern {
                let v = w[r];
                if pivot_of_row[r] != usize::MAX {
                    if v.abs() > DROP_TOL {
                        u_col.push((pivot_of_row[r], v));
                    }
                } else if v.abs() > SINGULAR_TOL {
                    let better = match best {
                        None => true,
                        Some((br, bv)) => v.abs() > bv.abs() || (v.abs() == bv.abs() && r < br),
                    };
                    if better {
                        best = Some((r, v));
                    }
                }
            }
            // Keep the natural row of a unit column to preserve sparsity.
            if let [(r, v)] = columns[k][..] {
                if pivot_of_row[r] == usize::MAX && (w[r] - v).abs() <= DROP_TOL && v.abs() > SINGULAR_TOL {
                    best = Some((r, w[r]));
                }
            }
            match best {
                Some((pr, pv)) => {
                    let p = lu.row.len();
                    let mut l_col = Vec::new();
                    for &r in &pattern {
                        if r != pr && pivot_of_row[r] == usize::MAX {
                            let mult = w[r] / pv;
                            if mult.abs() > DROP_TOL {
                                l_col.push((r, mult));
                            }
                        }
                    }
                    pivot_of_row[pr] = p;
                    lu.row.push(pr);
                    lu.pos.push(k);
                    if !l_col.is_empty() {
                        lu.l_nontrivial.push(p);
                    }
                    lu.l_cols.push(l_col);
                    u_col.sort_unstable_by_key(|&(q, _)| q);
                    lu.u_cols.push(u_col);
                    lu.u_diag.push(pv);
                }
                None => singular_positions.push(k),
            }
            for &r in &pattern {
                w[r] = 0.0;
                mark[r] = false;
            }
            pattern.clear();
        }
        let free_rows = (0..m).filter(|&r| pivot_of_row[r] == usize::MAX).collect();
        Factored {
            lu,
            singular_positions,
            free_rows,
        }
    }

    pub(crate) fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = b` in place: `b` is indexed by row on entry and by basis
    /// position on exit.
    pub(crate) fn ftran(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.m);
        for &q in &self.l_nontrivial {
            let v = b[self.row[q]];
            if v == 0.0 {
                continue;
            }
            for &(r, mult) in &self.l_cols[q] {
                b[r] -= v * mult;
            }
        }
        let mut y: Vec<f64> = self.row.iter().map(|&r| b[r]).collect();
        for p in (0..self.m).rev() {
            let z = y[p] / self.u_diag[p];
            y[p] = z;
            if z != 0.0 {
                for &(q, val) in &self.u_cols[p] {
                    y[q] -= val * z;
                }
            }
        }
        for (p, &k) in self.pos.iter().enumerate() {
            b[k] = y[p];
        }
        for eta in &self.etas {
            let xr = b[eta.pos] / eta.pivot;
            if xr != 0.0 {
                for &(i, a) in &eta.entries {
                    b[i] -= a * xr;
                }
            }
            b[eta.pos] = xr;
        }
    }

    /// Solves `B^T y = c` in place: `c` is indexed by basis position on entry
    /// and by row on exit.
    pub(crate) fn btran(&self, c: &mut [f64]) {
        debug_assert_eq!(c.len(), self.m);
        for eta in self.etas.iter().rev() {
            let mut v = c[eta.pos];
            for &(i, a) in &eta.entries {
                v -= c[i] * a;
            }
            c[eta.pos] = v / eta.pivot;
        }
        let mut v: Vec<f64> = self.pos.iter().map(|&k| c[k]).collect();
        for p in 0..self.m {
            let mut s = v[p];
            for &(q, val) in &self.u_cols[p] {
                s -= val * v[q];
            }
            v[p] = s / self.u_diag[p];
        }
        for (p, &r) in self.row.iter().enumerate() {
            c[r] = v[p];
        }
        for &q in self.l_nontrivial.iter().rev() {
            let mut s = c[self.row[q]];
            for &(r, mult) in &self.l_cols[q] {
                s -= mult * c[r];
            }
            c[self.row[q]] = s;
        }
    }

    /// Records that the column at position `pos` was replaced by a column
    /// whose FTRAN image is `alpha`.
    pub(crate) fn update(&mut self, pos: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            entries,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|k| (0..m).filter(|&r| a[r][k] != 0.0).map(|r| (r, a[r][k])).collect())
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    fn mat_t_vec(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let m = a.len();
        (0..m).map(|k| (0..m).map(|r| a[r][k] * y[r]).sum()).collect()
    }

    #[test]
    fn solves_and_updates() {
        let a = vec![
            vec![2.0, 0.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![0.0, 1.0, 4.0, 1.0],
            vec![0.0, 0.0, 1.0, 5.0],
        ];
        let order: Vec<usize> = (0..4).collect();
        let f = LuFactor::factor(4, &dense_cols(&a), &order);
        assert!(f.singular_positions.is_empty());
        let mut lu = f.lu;
        let b = vec![1.0, -2.0, 3.0, 0.5];
        let mut x = b.clone();
        lu.ftran(&mut x);
        for (p, q) in matvec(&a, &x).iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut y = b.clone();
        lu.btran(&mut y);
        for (p, q) in mat_t_vec(&a, &y).iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }

        // replace column 1 by (1, 1, 1, 1)
        let newcol = vec![1.0; 4];
        let mut alpha = newcol.clone();
        lu.ftran(&mut alpha);
        lu.update(1, &alpha);
        let mut a2 = a.clone();
        for r in 0..4 {
            a2[r][1] = newcol[r];
        }
        let mut x = b.clone();
        lu.ftran(&mut x);
        for (p, q) in matvec(&a2, &x).iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut y = b.clone();
        lu.btran(&mut y);
        for (p, q) in mat_t_vec(&a2, &y).iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_columns() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]];
        let f = LuFactor::factor(3, &dense_cols(&a), &[0, 1, 2]);
        assert_eq!(f.singular_positions, vec![1]);
        assert_eq!(f.free_rows.len(), 1);
    }
}
