//! Powers of small matrices whose entries are affine polynomials in `x`.
//!
//! Both the error-count law of a Gilbert-Elliott block and the occupancy
//! law of a two-state modulating chain are coefficient tables of such a
//! power, so the channel and traffic modules share this kernel.

/// Square matrix with entries `c0 + c1·x`.
#[derive(Debug, Clone)]
pub(crate) struct AffinePolyMatrix {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl AffinePolyMatrix {
    pub(crate) fn new(dim: usize, entries: Vec<[f64; 2]>) -> Self {
        assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    fn get(&self, row: usize, col: usize) -> [f64; 2] {
        self.entries[row * self.dim + col]
    }
}

/// Coefficients of `[M^n]_{c,d}` for all `(c, d)`, flattened as
/// `table[(c·dim + d)·(n+1) + k]` = coefficient of `x^k`.
///
/// Products are formed left to right one factor at a time (full
/// convolution with a degree-one polynomial), which costs `O(n²·dim³)`
/// and introduces no cancellation for nonnegative inputs.
pub(crate) fn power_coefficients(m: &AffinePolyMatrix, n: usize) -> Vec<f64> {
    let dim = m.dim;
    let width = n + 1;
    let mut table = vec![0.0; dim * dim * width];
    let mut row = vec![vec![0.0; width]; dim];
    let mut next = vec![vec![0.0; width]; dim];
    for start in 0..dim {
        for poly in row.iter_mut() {
            poly.fill(0.0);
        }
        row[start][0] = 1.0;
        for step in 0..n {
            for poly in next.iter_mut() {
                poly.fill(0.0);
            }
            for (via, poly) in row.iter().enumerate() {
                for (to, out) in next.iter_mut().enumerate() {
                    let [c0, c1] = m.get(via, to);
                    if c0 == 0.0 && c1 == 0.0 {
                        continue;
                    }
                    for k in 0..=step {
                        let v = poly[k];
                        if v == 0.0 {
                            continue;
                        }
                        out[k] += v * c0;
                        out[k + 1] += v * c1;
                    }
                }
            }
            std::mem::swap(&mut row, &mut next);
        }
        for (end, poly) in row.iter().enumerate() {
            let offset = (start * dim + end) * width;
            table[offset..offset + width].copy_from_slice(poly);
        }
    }
    table
}
