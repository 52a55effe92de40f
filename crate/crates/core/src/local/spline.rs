//! Clamped uniform B-splines.

/// Knot vector of a clamped uniform B-spline: `degree + 1` zeros, evenly
/// spaced interior knots, `degree + 1` ones.
pub fn clamped_knots(control_count: usize, degree: usize) -> Vec<f64> {
    let spans = control_count - degree;
    let mut knots = Vec::with_capacity(control_count + degree + 1);
    knots.extend(std::iter::repeat_n(0.0, degree + 1));
    for i in 1..spans {
        knots.push(i as f64 / spans as f64);
    }
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    knots
}

/// de Boor evaluation at `u ∈ [0, 1]`.
pub fn evaluate(control: &[[f64; 3]], knots: &[f64], degree: usize, u: f64) -> [f64; 3] {
    let n = control.len();
    // knot span k with knots[k] <= u < knots[k + 1], last span closed
    let mut k = degree;
    while k < n - 1 && u >= knots[k + 1] {
        k += 1;
    }
    let mut d: Vec<[f64; 3]> = (0..=degree).map(|j| control[j + k - degree]).collect();
    for r in 1..=degree {
        for j in (r..=degree).rev() {
            let i = j + k - degree;
            let denom = knots[i + degree + 1 - r] - knots[i];
            let alpha = if denom > 0.0 { (u - knots[i]) / denom } else { 0.0 };
            let prev = d[j - 1];
            d[j] = std::array::from_fn(|a| (1.0 - alpha) * prev[a] + alpha * d[j][a]);
        }
    }
    d[degree]
}

/// `count` points at uniform parameter values; the ends are the first and
/// last control points exactly.
pub fn sample(control: &[[f64; 3]], degree: usize, count: usize) -> Vec<[f64; 3]> {
    let knots = clamped_knots(control.len(), degree);
    let last = count - 1;
    (0..count)
        .map(|i| match i {
            0 => control[0],
            i if i == last => control[control.len() - 1],
            i => evaluate(control, &knots, degree, i as f64 / last as f64),
        })
        .collect()
}
