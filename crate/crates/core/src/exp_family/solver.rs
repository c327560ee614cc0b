use crate::scalar::Scalar;

pub(crate) const MAX_NEWTON_ITERS: usize = 50;
const MAX_BISECTION_ITERS: usize = 400;

/// Solves `f(x) = target` for a strictly increasing `f` on `[lo, hi]`.
///
/// `f` returns `(value, derivative)`. Newton steps start from `init`; a step
/// that leaves the current bracket is replaced by a bisection step, and if
/// Newton has not converged after [`MAX_NEWTON_ITERS`] the remaining work is
/// pure bisection. The caller guarantees `f(lo) <= target <= f(hi)`.
pub(crate) fn solve_increasing<S, F>(f: F, target: S, init: S, lo: S, hi: S) -> S
where
    S: Scalar,
    F: Fn(S) -> (S, S),
{
    let res_tol = S::tol(1e-15);
    let step_tol = S::tol(1e-14);
    let (mut a, mut b) = (lo, hi);
    let mut x = if init > a && init < b { init } else { (a + b) * S::lit(0.5) };
    for _ in 0..MAX_NEWTON_ITERS {
        let (fx, dfx) = f(x);
        let r = fx - target;
        if r.abs() <= res_tol * (S::one() + target.abs()) {
            return x;
        }
        if r < S::zero() {
            a = x;
        } else {
            b = x;
        }
        let mut next = if dfx > S::zero() && dfx.is_finite() { x - r / dfx } else { S::nan() };
        if !(next > a && next < b) {
            next = (a + b) * S::lit(0.5);
        }
        if (next - x).abs() <= step_tol * x.abs().max(S::one()) {
            return next;
        }
        x = next;
    }
    bisect(|k| f(k).0, target, a, b)
}

/// Plain bisection for an increasing function.
pub(crate) fn bisect<S, F>(f: F, target: S, lo: S, hi: S) -> S
where
    S: Scalar,
    F: Fn(S) -> S,
{
    let (mut a, mut b) = (lo, hi);
    for _ in 0..MAX_BISECTION_ITERS {
        let m = (a + b) * S::lit(0.5);
        if m <= a || m >= b {
            break;
        }
        if f(m) < target {
            a = m;
        } else {
            b = m;
        }
    }
    (a + b) * S::lit(0.5)
}
