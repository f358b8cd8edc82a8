//! Comparison measures between trajectories and point clouds.

/// Largest absolute component difference over paired states.
pub fn max_abs_deviation(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Squared error averaged over components and then over paired states.
pub fn mean_squared_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let count = a.len().min(b.len());
    if count == 0 {
        return 0.0;
    }
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let se: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
            se / x.len().max(1) as f64
        })
        .sum();
    total / count as f64
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Symmetric Hausdorff distance between two planar point sets.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { f64::INFINITY };
    }
    let directed = |p: &[[f64; 2]], q: &[[f64; 2]]| {
        p.iter()
            .map(|x| q.iter().map(|y| euclidean(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hausdorff_of_shifted_sets() {
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[0.0, 0.5], [1.0, 0.5], [3.0, 0.0]];
        assert_eq!(hausdorff(&a, &a), 0.0);
        assert_eq!(hausdorff(&a, &b), 2.0);
        assert!(hausdorff(&a, &[]).is_infinite());
    }

    #[test]
    fn mse_and_deviation() {
        let a = vec![vec![1.0, 2.0], vec![0.0, 0.0]];
        let b = vec![vec![1.0, 4.0], vec![1.0, 0.0]];
        assert_eq!(max_abs_deviation(&a, &b), 2.0);
        assert_eq!(mean_squared_error(&a, &b), (2.0 + 0.5) / 2.0);
    }
}
