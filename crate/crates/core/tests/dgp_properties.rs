use switchfm::dgp::{simulate, DgpSpec, GjrParams, Innovation};
use switchfm::stats::{mean, variance_pop};

// Innovations recovered from a null sample: e_t = y_t, v_t = x_t - phi x_{t-1}.
fn innovations(spec: &DgpSpec) -> (Vec<f64>, Vec<f64>) {
    let d = simulate(spec).unwrap();
    let phi = 1.0 + spec.c / spec.t as f64;
    let v = d
        .x_level()
        .iter()
        .zip(d.x_lag())
        .map(|(xl, xp)| xl - phi * xp)
        .collect();
    (d.y().to_vec(), v)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    cov / (variance_pop(a) * variance_pop(b)).sqrt()
}

// Merge sort that counts inversions, used for Kendall's tau in O(n log n).
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf.push(v[i]);
            i += 1;
        } else {
            buf.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

/// Kendall's tau without ties (continuous data).
fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    let mut ranked: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let n = a.len() as f64;
    let pairs = n * (n - 1.0) / 2.0;
    let disc = count_inversions(&mut ranked, &mut Vec::with_capacity(a.len())) as f64;
    (pairs - 2.0 * disc) / pairs
}

#[test]
fn kendall_helper_matches_brute_force() {
    let a = [0.3, -1.2, 2.5, 0.1, 0.9, -0.4];
    let b = [1.0, -0.5, 0.2, 0.4, 2.0, -1.0];
    let mut conc = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let s: f64 = (a[i] - a[j]) * (b[i] - b[j]);
            conc += s.signum();
        }
    }
    let brute = conc / 15.0;
    assert!((kendall_tau(&a, &b) - brute).abs() < 1e-12);
}

#[test]
fn gaussian_pairs_have_the_target_correlation() {
    for delta in [-0.95, -0.5, 0.0] {
        let mut spec = DgpSpec::null(100_000, -10.0, delta);
        spec.seed = 21;
        let (e, v) = innovations(&spec);
        let r = correlation(&e, &v);
        assert!((r - delta).abs() < 0.01, "delta {delta}: {r}");
    }
}

#[test]
fn student_pairs_keep_the_kendall_implied_correlation() {
    for delta in [-0.95, 0.95] {
        let mut spec = DgpSpec::null(100_000, -10.0, delta);
        spec.innovation = Innovation::StudentT { nu: 8.0 };
        spec.seed = 5;
        let (e, v) = innovations(&spec);
        let implied = (std::f64::consts::FRAC_PI_2 * kendall_tau(&e, &v)).sin();
        assert!((implied - delta).abs() < 0.015, "delta {delta}: {implied}");
    }
}

#[test]
fn student_innovations_have_unit_variance() {
    let mut spec = DgpSpec::null(100_000, -10.0, -0.5);
    spec.innovation = Innovation::TOnly { nu: 8.0 };
    spec.seed = 9;
    let (e, v) = innovations(&spec);
    assert!((variance_pop(&e) - 1.0).abs() < 0.03);
    assert!((variance_pop(&v) - 1.0).abs() < 0.03);
}

#[test]
fn gjr_component_is_stationary_with_unit_variance() {
    let g = GjrParams::default();
    assert!(g.persistence() < 1.0);
    let mut spec = DgpSpec::null(100_000, -10.0, 0.0);
    spec.innovation = Innovation::GjrOnly { nu: 8.0 };
    spec.seed = 2;
    let (e, _) = innovations(&spec);
    // Heavy tails make the sample variance noisy; a loose band suffices.
    assert!((variance_pop(&e) - 1.0).abs() < 0.1, "{}", variance_pop(&e));
    let explosive = GjrParams { beta: 0.95, ..g };
    spec.gjr = explosive;
    assert!(simulate(&spec).is_err());
}

#[test]
fn reproducible_bit_for_bit() {
    let mut spec = DgpSpec::null(500, -5.0, -0.95).with_scaled_loadings(2.0, 100.0);
    spec.innovation = Innovation::GjrMix { nu: 8.0 };
    spec.seed = 77;
    let a = simulate(&spec).unwrap();
    let b = simulate(&spec).unwrap();
    assert_eq!(a, b);
    spec.seed = 78;
    assert_ne!(a, simulate(&spec).unwrap());
}
