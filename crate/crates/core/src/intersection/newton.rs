use nalgebra::{DMatrix, DVector};

/// Outcome of one damped-Newton centering.
pub(crate) struct Centered {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// False when the line search stalled before the decrement fell below tolerance.
    pub converged: bool,
}

/// Solves `H d = -g`, regularizing `H` if it is not numerically positive definite.
pub(crate) fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = h.diagonal().abs().max().max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        let m = if shift > 0.0 { h + DMatrix::identity(n, n) * shift } else { h.clone() };
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|x| x.is_finite()) {
                return Some(d);
            }
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
    None
}

/// Damped Newton on a self-concordant barrier function. `f` returns `None`
/// outside the domain; `grad_hess` is only called at domain points.
pub(crate) fn minimize<F, G>(x0: DVector<f64>, f: F, grad_hess: G, eps: f64, max_iter: usize) -> Centered
where
    F: Fn(&DVector<f64>) -> Option<f64>,
    G: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut x = x0;
    let mut fx = f(&x).expect("Newton start must lie in the barrier domain");
    for it in 0..max_iter {
        let (g, h) = grad_hess(&x);
        let Some(d) = newton_direction(&g, &h) else {
            return Centered { x, iterations: it, converged: false };
        };
        let slope = g.dot(&d);
        if -slope / 2.0 <= eps {
            return Centered { x, iterations: it, converged: true };
        }
        let mut alpha = 1.0;
        loop {
            let trial = &x + &d * alpha;
            match f(&trial) {
                Some(ft) if ft <= fx + 0.25 * alpha * slope => {
                    x = trial;
                    fx = ft;
                    break;
                }
                _ => {
                    alpha *= 0.5;
                    if alpha < 1e-16 {
                        return Centered { x, iterations: it, converged: false };
                    }
                }
            }
        }
    }
    Centered { x, iterations: max_iter, converged: false }
}
