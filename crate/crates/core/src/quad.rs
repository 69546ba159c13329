//! Adaptive Simpson quadrature.

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of the Richardson error estimates of the accepted panels.
    pub error: f64,
    /// False when some panel hit the depth cap before meeting its tolerance.
    pub converged: bool,
}

/// Accepted subinterval of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leaf {
    pub a: f64,
    pub b: f64,
    pub value: f64,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Integral {
    integrate(f, a, b, tol, max_depth, None)
}

/// Like [`adaptive_simpson`], also appending the accepted subintervals, in
/// order from `a`, to `leaves`. Integration stops early once the running sum
/// reaches `stop_at`; the leaves then cover only `[a, leaves.last().b]`.
pub fn adaptive_simpson_leaves<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
    stop_at: f64,
    leaves: &mut Vec<Leaf>,
) -> Integral {
    integrate(f, a, b, tol, max_depth, Some((leaves, stop_at)))
}

fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
    mut leaves: Option<(&mut Vec<Leaf>, f64)>,
) -> Integral {
    if a == b {
        return Integral {
            value: 0.0,
            error: 0.0,
            converged: true,
        };
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
        converged: true,
    };
    recurse(
        &mut f,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol,
        max_depth,
        &mut out,
        &mut leaves,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    out: &mut Integral,
    leaves: &mut Option<(&mut Vec<Leaf>, f64)>,
) {
    if leaves.as_ref().is_some_and(|(_, stop)| out.value >= *stop) {
        return;
    }
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        out.value = f64::NAN;
        out.converged = false;
        return;
    }
    if delta.abs() <= 15.0 * tol || depth == 0 {
        let value = left + right + delta / 15.0;
        out.value += value;
        out.error += delta.abs() / 15.0;
        out.converged &= delta.abs() <= 15.0 * tol;
        if let Some((l, _)) = leaves.as_mut() {
            l.push(Leaf { a, b, value });
        }
        return;
    }
    recurse(
        f,
        a,
        m,
        fa,
        flm,
        fm,
        left,
        0.5 * tol,
        depth - 1,
        out,
        leaves,
    );
    recurse(
        f,
        m,
        b,
        fm,
        frm,
        fb,
        right,
        0.5 * tol,
        depth - 1,
        out,
        leaves,
    );
}
