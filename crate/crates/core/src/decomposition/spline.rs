//! Natural cubic spline through sorted knots, evaluated on the integer grid.

/// Evaluates the natural cubic spline through `(xs, ys)` at `0..n`.
///
/// `xs` must be strictly increasing with at least two knots.
pub(crate) fn natural_spline(xs: &[f64], ys: &[f64], n: usize) -> Vec<f64> {
    let m = xs.len();
    debug_assert!(m >= 2 && m == ys.len());
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let mut m2 = vec![0.0; m];
    if m > 2 {
        // Thomas algorithm on the interior second derivatives.
        let k = m - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        m2[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m2[i + 1] = (rhs[i] - h[i + 1] * m2[i + 2]) / diag[i];
        }
    }

    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for t in 0..n {
        let t = t as f64;
        while seg + 2 < m && t > xs[seg + 1] {
            seg += 1;
        }
        let (x0, x1) = (xs[seg], xs[seg + 1]);
        let hs = x1 - x0;
        let a = (x1 - t) / hs;
        let b = (t - x0) / hs;
        out.push(
            a * ys[seg]
                + b * ys[seg + 1]
                + ((a * a * a - a) * m2[seg] + (b * b * b - b) * m2[seg + 1]) * hs * hs / 6.0,
        );
    }
    out
}
