use nalgebra::DMatrix;

/// Singular values (ascending) and matching right singular vectors as columns.
///
/// Tall inputs are first reduced to their square triangular QR factor, which
/// has the same singular values and right singular vectors.
pub fn svd_ascending(e: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let r = if e.nrows() > e.ncols() { e.clone().qr().r() } else { e.clone() };
    let svd = r.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(e.ncols(), order.len());
    for (k, &i) in order.iter().enumerate() {
        v.set_column(k, &v_t.row(i).transpose());
    }
    (sv, v)
}
