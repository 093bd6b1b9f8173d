//! Projection onto the scaled simplex `{v >= 0, sum(v) = total}` by sorting
//! and thresholding.

/// Returns the projection and the threshold `theta` with
/// `v_i = max(x_i - theta, 0)`.
pub(crate) fn project_simplex(x: &[f64], total: f64) -> (Vec<f64>, f64) {
    debug_assert!(total >= 0.0);
    let n = x.len();
    if total == 0.0 {
        let theta = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return (vec![0.0; n], theta);
    }
    let mut order: Vec<usize> = (0..n).collect();
    // descending by value, ties by index
    order.sort_by(|&i, &j| x[j].total_cmp(&x[i]).then(i.cmp(&j)));

    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cumsum += x[i];
        let t = (cumsum - total) / (k + 1) as f64;
        if x[i] - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    (x.iter().map(|&v| (v - theta).max(0.0)).collect(), theta)
}
