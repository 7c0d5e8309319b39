//! Small derivative-free minimizers used by the alignment and scale stages.

/// Result of a golden-section search.
#[derive(Debug, Clone, Copy)]
pub struct GoldenResult {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
/// Stops once the bracket is narrower than `tol`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> GoldenResult {
    const INV_PHI: f64 = 0.618_033_988_749_894_9; // 1/phi
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;

    while b - a > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        iterations += 1;
    }

    if f1 < f2 {
        GoldenResult { x: x1, value: f1, iterations }
    } else {
        GoldenResult { x: x2, value: f2, iterations }
    }
}

/// Result of a Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Simplex diameter fell below the convergence threshold.
    pub converged: bool,
}

/// Nelder-Mead simplex minimizer.
///
/// `init` seeds the first vertex; the remaining vertices offset one coordinate
/// each by `steps`. Converges when the simplex diameter (max vertex distance)
/// drops below `diameter_tol`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    init: &[f64],
    steps: &[f64],
    diameter_tol: f64,
    max_iterations: usize,
) -> SimplexResult {
    assert_eq!(init.len(), steps.len());
    let n = init.len();
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(init.to_vec());
    for i in 0..n {
        let mut v = init.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let diameter = |simplex: &[Vec<f64>]| -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..simplex.len() {
            for j in i + 1..simplex.len() {
                let dist: f64 = simplex[i]
                    .iter()
                    .zip(&simplex[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                d = d.max(dist);
            }
        }
        d
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        if diameter(&simplex) < diameter_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &i in &order[..n] {
            for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                *c += x / n as f64;
            }
        }

        let blend = |from: &[f64], coeff: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, x)| c + coeff * (c - x))
                .collect()
        };

        let reflected = blend(&simplex[worst], ALPHA);
        let f_reflected = f(&reflected);

        if f_reflected < values[best] {
            let expanded = blend(&simplex[worst], GAMMA);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = blend(&simplex[worst], -RHO);
            let f_contracted = f(&contracted);
            if f_contracted < values[worst] {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                let best_vertex = simplex[best].clone();
                for (i, vertex) in simplex.iter_mut().enumerate() {
                    if i == best {
                        continue;
                    }
                    for (x, b) in vertex.iter_mut().zip(&best_vertex) {
                        *x = b + SIGMA * (*x - b);
                    }
                    values[i] = f(vertex);
                }
            }
        }
        iterations += 1;
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.total_cmp(b))
        .map(|(i, _)| i)
        .unwrap();
    SimplexResult { x: simplex[best].clone(), value: values[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_minimum() {
        let r = golden_section(|x| (x - 0.37).powi(2), -1.0, 1.0, 1e-6);
        assert!((r.x - 0.37).abs() < 1e-6);
    }

    #[test]
    fn golden_iteration_count_matches_ratio_shrink() {
        // bracket shrinks by 1/phi per iteration
        let w: f64 = 2.0;
        let tol = 1e-4;
        let r = golden_section(|x| x * x, -1.0, 1.0, tol);
        let expected = ((w / tol).ln() / ((1.0 + 5.0f64.sqrt()) / 2.0).ln()).ceil() as usize;
        assert!(
            (r.iterations as i64 - expected as i64).abs() <= 1,
            "iterations {} vs expected {expected}",
            r.iterations
        );
    }

    #[test]
    fn nelder_mead_minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &[0.1, 0.1], 1e-10, 5000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nelder_mead_quadratic_bowl_high_dim() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (v - i as f64).powi(2)).sum();
        let r = nelder_mead(f, &[0.0; 6], &[0.5; 6], 1e-10, 10000);
        for (i, v) in r.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-4, "dim {i}: {v}");
        }
    }
}
