//! Legendre polynomials and Gauss-Legendre rules.

/// Value and derivative of the Legendre polynomial of order `n` at `x`,
/// built with Bonnet's recursion `(k+1) l_{k+1} = (2k+1) x l_k - k l_{k-1}`
/// and `l'_{k+1} = (k+1) l_k + x l'_k`.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut dcur = 0.0;
    for k in 0..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        let dnext = (kf + 1.0) * cur + x * dcur;
        prev = cur;
        cur = next;
        dcur = dnext;
    }
    (cur, dcur)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.reverse();
    rule
}

/// Gauss-Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}
