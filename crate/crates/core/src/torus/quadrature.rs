/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Average of `|y|^{-p}` over the unit cube `[-1/2, 1/2]^d`, for `0 < p < d`.
///
/// The cube is split into `3^d` subcubes; the central one is a scaled copy of
/// the whole, which gives `C (1 - 3^{p-d}) = S` with `S` the integral over the
/// remaining subcubes. Those are integrated by tensor Gauss rules on a further
/// `2^d` split.
pub fn unit_cube_radial_average(dim: usize, p: f64) -> f64 {
    if dim == 1 {
        return 2.0 * 0.5f64.powf(1.0 - p) / (1.0 - p);
    }
    let (gx, gw) = gauss_legendre(12);
    let sub = 1.0 / 3.0;
    let piece = sub / 2.0;
    let pieces_per_axis = 6usize;
    let mut total = 0.0;
    let mut idx = vec![0usize; dim];
    let mut q = vec![0usize; dim];
    let mut y = vec![0.0; dim];
    loop {
        // skip pieces inside the central subcube (indices 2 and 3 on every axis)
        if !idx.iter().all(|&i| i == 2 || i == 3) {
            let lo: Vec<f64> = idx.iter().map(|&i| -0.5 + i as f64 * piece).collect();
            q.iter_mut().for_each(|v| *v = 0);
            loop {
                let mut w = 1.0;
                for a in 0..dim {
                    y[a] = lo[a] + 0.5 * piece * (gx[q[a]] + 1.0);
                    w *= 0.5 * piece * gw[q[a]];
                }
                let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                total += w * r.powf(-p);
                if !advance(&mut q, gx.len()) {
                    break;
                }
            }
        }
        if !advance(&mut idx, pieces_per_axis) {
            break;
        }
    }
    total / (1.0 - 3f64.powf(p - dim as f64))
}

/// Odometer increment; returns false after wrapping around.
pub(crate) fn advance(idx: &mut [usize], base: usize) -> bool {
    for i in idx.iter_mut().rev() {
        *i += 1;
        if *i < base {
            return true;
        }
        *i = 0;
    }
    false
}
