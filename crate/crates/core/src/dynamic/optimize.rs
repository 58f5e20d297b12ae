//! BFGS with finite-difference derivatives.
//!
//! Objectives are minimized; a non-finite value is treated as `+inf` and
//! rejected by the line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once the scaled gradient norm (see [`scaled_gradient_norm`]) falls
    /// below this.
    pub gradient_tol: f64,
    /// Central-difference step relative to `max(1, |x_i|)`.
    pub gradient_step: f64,
    /// Largest allowed component of a trial step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            gradient_tol: 1e-7,
            gradient_step: 1e-6,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub gradient: Vec<f64>,
    pub scaled_gradient_norm: f64,
}

/// `max_i |g_i| max(1, |x_i|) / max(1, |f|)`: relative change of the objective
/// per relative change of each coordinate.
pub fn scaled_gradient_norm(g: &[f64], x: &[f64], f: f64) -> f64 {
    let denom = f.abs().max(1.0);
    g.iter()
        .zip(x)
        .map(|(gi, xi)| gi.abs() * xi.abs().max(1.0) / denom)
        .fold(0.0, f64::max)
}

fn eval(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Central differences with step `rel_step * max(1, |x_i|)`.
pub fn central_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = eval(f, &probe);
            probe[i] = x[i] - h;
            let down = eval(f, &probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central second differences with step `rel_step * max(1, |x_i|)`.
pub fn central_hessian(f: &impl Fn(&[f64]) -> f64, x: &[f64], rel_step: f64) -> DMatrix<f64> {
    let p = x.len();
    let h: Vec<f64> = x.iter().map(|v| rel_step * v.abs().max(1.0)).collect();
    let f0 = eval(f, x);
    let mut hess = DMatrix::zeros(p, p);
    let mut probe = x.to_vec();
    for i in 0..p {
        probe[i] = x[i] + h[i];
        let up = eval(f, &probe);
        probe[i] = x[i] - h[i];
        let down = eval(f, &probe);
        probe[i] = x[i];
        hess[(i, i)] = (up - 2.0 * f0 + down) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                probe[i] = x[i] + si * h[i];
                probe[j] = x[j] + sj * h[j];
                let v = eval(f, &probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Minimize `f` from `x0`.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], options: &BfgsOptions) -> Minimum {
    let p = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(&f, x.as_slice());
    let mut g = DVector::from_vec(central_gradient(&f, x.as_slice(), options.gradient_step));
    let mut inv_h = DMatrix::<f64>::identity(p, p);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        if !fx.is_finite()
            || scaled_gradient_norm(g.as_slice(), x.as_slice(), fx) <= options.gradient_tol
        {
            break;
        }
        iterations += 1;

        let mut direction = -(&inv_h * &g);
        if direction.dot(&g) >= 0.0 {
            inv_h = DMatrix::identity(p, p);
            fresh = true;
            direction = -g.clone();
        }
        let largest = direction.amax();
        if largest > options.max_step {
            direction *= options.max_step / largest;
        }

        let slope = direction.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &direction;
            let ft = eval(&f, trial.as_slice());
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break;
            }
            // retry from steepest descent before giving up
            inv_h = DMatrix::identity(p, p);
            fresh = true;
            continue;
        };

        let g_new = DVector::from_vec(central_gradient(
            &f,
            x_new.as_slice(),
            options.gradient_step,
        ));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                inv_h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &inv_h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            inv_h -= rho * (&hy * s.transpose() + &s * hy.transpose());
            inv_h += (rho * rho * yhy + rho) * (&s * s.transpose());
            fresh = false;
        }

        let stalled = (fx - f_new).abs() <= 1e-15 * fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled && fresh {
            break;
        }
    }

    let gradient: Vec<f64> = g.iter().copied().collect();
    Minimum {
        scaled_gradient_norm: scaled_gradient_norm(&gradient, x.as_slice(), fx),
        x: x.iter().copied().collect(),
        value: fx,
        iterations,
        gradient,
    }
}
