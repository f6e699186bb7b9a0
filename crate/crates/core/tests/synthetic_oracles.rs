//! Synthetic datasets checked against least-squares and class-mean oracles
//! computed with nalgebra, independent of the crate's own numerics.

use ipcae_core::data::{gen_synthetic, SyntheticSpec};
use ipcae_core::objectives::Task;
use nalgebra::DMatrix;

fn matrix(x: &ipcae_core::Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.rows(), x.cols(), x.data())
}

/// Mean squared residual of regressing every column on `cols` (plus an
/// intercept) by least squares.
fn ls_residual(x: &DMatrix<f64>, cols: &[usize]) -> f64 {
    let n = x.nrows();
    let mut a = DMatrix::from_element(n, cols.len() + 1, 1.0);
    for (c, &j) in cols.iter().enumerate() {
        a.set_column(c, &x.column(j));
    }
    let coef = a.clone().svd(true, true).solve(x, 1e-12).unwrap();
    let r = x - a * coef;
    r.norm_squared() / (r.nrows() * r.ncols()) as f64
}

fn reconstruction(noise: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let syn = gen_synthetic(&SyntheticSpec {
        task: Task::Reconstruction,
        n: 1500,
        d: 24,
        k_true: 6,
        classes: 2,
        noise,
        separation: 3.0,
        seed,
    })
    .unwrap();
    (matrix(&syn.dataset.x), syn.planted)
}

#[test]
fn planted_columns_decode_to_the_noise_floor() {
    let sigma = 0.1;
    let (x, planted) = reconstruction(sigma, 3);
    // 18 of 24 columns carry N(0, σ²) noise the signals cannot explain
    let floor = sigma * sigma * 18.0 / 24.0;
    let res = ls_residual(&x, &planted);
    assert!(
        (res / floor - 1.0).abs() < 0.1,
        "residual {res}, floor {floor}"
    );
}

#[test]
fn swapping_out_a_planted_column_costs_accuracy() {
    let (x, planted) = reconstruction(0.1, 4);
    let base = ls_residual(&x, &planted);
    let other = (0..x.ncols()).find(|j| !planted.contains(j)).unwrap();
    let mut swapped = planted.clone();
    swapped[0] = other;
    assert!(ls_residual(&x, &swapped) > 2.0 * base);
}

#[test]
fn only_planted_features_separate_classes() {
    let spec = SyntheticSpec {
        task: Task::Classification,
        n: 3000,
        d: 12,
        k_true: 3,
        classes: 3,
        noise: 1.0,
        separation: 3.0,
        seed: 9,
    };
    let syn = gen_synthetic(&spec).unwrap();
    let x = matrix(&syn.dataset.x);
    let labels = syn.dataset.labels.clone().unwrap();
    for j in 0..x.ncols() {
        let means: Vec<f64> = (0..spec.classes)
            .map(|c| {
                let rows: Vec<f64> = (0..x.nrows())
                    .filter(|&i| labels[i] == c)
                    .map(|i| x[(i, j)])
                    .collect();
                rows.iter().sum::<f64>() / rows.len() as f64
            })
            .collect();
        let (mut low, mut high) = (f64::INFINITY, 0.0f64);
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                let gap = (means[a] - means[b]).abs();
                low = low.min(gap);
                high = high.max(gap);
            }
        }
        if syn.planted.contains(&j) {
            // every class pair differs by at least the separation, up to sampling error
            assert!(low > spec.separation - 0.25, "feature {j}: gap {low}");
        } else {
            assert!(high < 0.25, "feature {j}: gap {high}");
        }
    }
}
