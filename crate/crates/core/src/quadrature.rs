//! Adaptive Simpson integration.
//!
//! The interval is first cut into a fixed number of panels; a coarse pass over
//! those panels sets the absolute error budget (relative tolerance times the
//! coarse magnitude), which is then shared among panels and refined
//! recursively with Richardson extrapolation.

/// Adaptive Simpson quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub max_depth: u32,
    pub panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_depth: 60,
            panels: 64,
        }
    }
}

impl Quadrature {
    /// Integrate `f` over the finite interval `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        debug_assert!(a.is_finite() && b.is_finite());
        if a == b {
            return 0.0;
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let n = self.panels.max(1);
        let h = (hi - lo) / n as f64;

        let mut panels = Vec::with_capacity(n);
        let mut coarse = 0.0;
        for i in 0..n {
            let x0 = lo + h * i as f64;
            let x1 = if i + 1 == n { hi } else { lo + h * (i + 1) as f64 };
            let xm = 0.5 * (x0 + x1);
            let (f0, fm, f1) = (f(x0), f(xm), f(x1));
            let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            coarse += s.abs();
            panels.push((x0, x1, f0, fm, f1, s));
        }

        let budget = (self.rel_tol * coarse).max(f64::MIN_POSITIVE);
        let per_panel = budget / n as f64;
        let total: f64 = panels
            .into_iter()
            .map(|(x0, x1, f0, fm, f1, s)| {
                refine(&f, x0, x1, f0, fm, f1, s, per_panel, self.max_depth)
            })
            .sum();
        sign * total
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps || m <= a || m >= b {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}
