//! Dense phase-1 simplex for `A x = b, x >= 0`.

/// Pivot and reduced-cost threshold.
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct Phase1Solution {
    /// Sum of artificial variables at the optimum (zero iff feasible).
    pub objective: f64,
    pub x: Vec<f64>,
    /// Dual vector with `y·A_j <= 0` for all columns and `y·b = objective`.
    pub y: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes the total artificial slack of `A x + a = b`, `x, a >= 0`.
///
/// `a` is given column-major (`cols[j]` has `rows` entries). Uses Dantzig's rule and
/// falls back to Bland's rule after a run of degenerate pivots.
pub fn phase1(cols: &[Vec<f64>], b: &[f64]) -> Phase1Solution {
    let m = b.len();
    let n = cols.len();
    let width = n + m + 1;
    // Rows flipped so that the right-hand side is non-negative.
    let sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        for (j, col) in cols.iter().enumerate() {
            row[j] = sign[i] * col[i];
        }
        row[n + i] = 1.0;
        row[width - 1] = sign[i] * b[i];
    }
    // Reduced costs: artificial cost 1, structural 0.
    for j in 0..width {
        if j >= n && j < n + m {
            continue;
        }
        let s: f64 = (0..m).map(|i| t[i * width + j]).sum();
        t[m * width + j] = -s;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut iterations = 0;
    let mut degenerate_run = 0;
    let max_iter = 50 * (n + m) + 1000;
    while iterations < max_iter {
        let obj = &t[m * width..(m + 1) * width];
        let bland = degenerate_run > 50;
        let entering = if bland {
            (0..n + m).find(|&j| obj[j] < -PIVOT_TOL)
        } else {
            (0..n + m).filter(|&j| obj[j] < -PIVOT_TOL).min_by(|&a, &c| obj[a].total_cmp(&obj[c]))
        };
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + e];
            if a > PIVOT_TOL {
                let ratio = t[i * width + width - 1] / a;
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - 1e-14 || (ratio <= r + 1e-14 && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, ratio)) = leave else { break };
        degenerate_run = if ratio.abs() < 1e-14 { degenerate_run + 1 } else { 0 };
        pivot(&mut t, width, m, r, e);
        basis[r] = e;
        iterations += 1;
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i * width + width - 1];
        }
    }
    let objective = -t[m * width + width - 1];
    // Reduced cost of artificial i is 1 - y_i in the flipped system.
    let y = (0..m).map(|i| sign[i] * (1.0 - t[m * width + n + i])).collect();
    Phase1Solution { objective, x, y, iterations }
}

fn pivot(t: &mut [f64], width: usize, m: usize, r: usize, e: usize) {
    let p = t[r * width + e];
    for v in &mut t[r * width..(r + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = t[r * width..(r + 1) * width].to_vec();
    for i in 0..=m {
        if i == r {
            continue;
        }
        let f = t[i * width + e];
        if f == 0.0 {
            continue;
        }
        let row = &mut t[i * width..(i + 1) * width];
        for (v, &pv) in row.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        row[e] = 0.0;
    }
}
