use nalgebra::DVector;

/// Euclidean projection onto `{x >= 0, sum x = 1}` (sort-based).
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    if n == 0 {
        return v.clone();
    }
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, si) in s.iter().enumerate() {
        cum += si;
        let t = (cum - 1.0) / (i + 1) as f64;
        if si - t > 0.0 {
            theta = t;
        }
    }
    v.map(|x| (x - theta).max(0.0))
}
