//! Shared oracle helpers for the integration tests: quadrature, exact
//! permutation tests, and Kolmogorov-Smirnov statistics. These stay
//! independent of the library's CDF evaluation path (continued fractions);
//! they only share `ln_gamma`, which is pinned by identity tests of its own.
#![allow(dead_code)] // each test binary uses its own subset

use mtlab_core::special::ln_gamma;

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 60)
}

/// Student-t density.
pub fn t_density(x: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - 0.5 * (df + 1.0) * (x * x / df).ln_1p()).exp()
}

/// Student-t CDF by quadrature of the density from zero.
pub fn t_cdf_oracle(x: f64, df: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let (lo, hi) = if x < 0.0 { (x, 0.0) } else { (0.0, x) };
    let mass = adaptive_simpson(&|t| t_density(t, df), lo, hi, 1e-13);
    if x < 0.0 {
        0.5 - mass
    } else {
        0.5 + mass
    }
}

/// F CDF by quadrature with the substitution x = u^2, which removes the
/// integrable singularity at zero when df1 = 1.
pub fn f_cdf_oracle(x: f64, df1: f64, df2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_norm = ln_gamma(0.5 * (df1 + df2))
        - ln_gamma(0.5 * df1)
        - ln_gamma(0.5 * df2)
        + 0.5 * df1 * (df1 / df2).ln();
    // after x = u^2 the integrand is 2 u^(df1 - 1) (1 + df1 u^2/df2)^(-(df1+df2)/2),
    // smooth at zero for df1 >= 1 (constant when df1 = 1)
    let integrand = move |u: f64| {
        if u == 0.0 {
            return if df1 == 1.0 { 2.0 * ln_norm.exp() } else { 0.0 };
        }
        let ln_f = ln_norm + (df1 - 1.0) * u.ln()
            - 0.5 * (df1 + df2) * (df1 * u * u / df2).ln_1p()
            + std::f64::consts::LN_2;
        ln_f.exp()
    };
    // piecewise around u = 1, where the density concentrates at large df;
    // a single adaptive pass can step straight over that spike
    let top = x.sqrt();
    let mut cuts: Vec<f64> = [0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 2.0, 3.0, 5.0]
        .iter()
        .copied()
        .filter(|&c| c < top)
        .collect();
    cuts.insert(0, 0.0);
    cuts.push(top);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += adaptive_simpson(&integrand, w[0], w[1], 1e-13);
    }
    total.clamp(0.0, 1.0)
}

/// Gaussian density for direct quadrature of the normal CDF.
pub fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quadrature over [lo, hi] split into equal segments so narrow peaks are
/// never stepped over by the adaptive pass.
pub fn integrate_peaked(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, segments: usize, tol: f64) -> f64 {
    let width = (hi - lo) / segments as f64;
    let mut total = 0.0;
    for i in 0..segments {
        let a = lo + i as f64 * width;
        let b = if i + 1 == segments { hi } else { a + width };
        total += adaptive_simpson(f, a, b, tol);
    }
    total
}

/// Exact two-sided permutation p-value for the difference in means of two
/// small samples: the fraction of reassignments with |mean difference| at
/// least as large as observed.
pub fn permutation_p_two_sided(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let na = a.len();
    let n = pooled.len();
    let observed = (mean(a) - mean(b)).abs();
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut choose = vec![0usize; na];
    for i in 0..na {
        choose[i] = i;
    }
    loop {
        total += 1;
        let sel: Vec<f64> = choose.iter().map(|&i| pooled[i]).collect();
        let rest: Vec<f64> = (0..n)
            .filter(|i| !choose.contains(i))
            .map(|i| pooled[i])
            .collect();
        if (mean(&sel) - mean(&rest)).abs() >= observed - 1e-12 {
            hits += 1;
        }
        // next combination
        let mut i = na;
        loop {
            if i == 0 {
                return hits as f64 / total as f64;
            }
            i -= 1;
            if choose[i] != i + n - na {
                choose[i] += 1;
                for j in (i + 1)..na {
                    choose[j] = choose[j - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Kolmogorov-Smirnov statistic against Uniform(0,1).
pub fn ks_uniform_statistic(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let hi = (i as f64 + 1.0) / n - u;
            let lo = u - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `c(alpha) / sqrt(n)`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    num / (dx * dy).sqrt()
}
