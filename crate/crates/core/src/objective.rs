//! Local objectives, their convexity moduli, and the centralized optimum.
//!
//! Every built-in objective is separable: an `m`-dimensional decision vector
//! is scored as the sum of a scalar profile applied to each coordinate, so
//! the certified `(mu, lip)` pair of the scalar profile carries over to any
//! dimension.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::quadrature::averaging_rule;
use crate::{Matrix, Vector};

/// Absolute residual allowed when reproducing gradient differences with an
/// averaged Hessian (scaled by `max(1, |grad difference|)`).
pub const AVERAGED_HESSIAN_TOL: f64 = 1e-8;

/// Tolerance of the sampled strong-convexity / Lipschitz checks, relative to
/// `|x - y|^2`.
pub const MODULUS_SAMPLE_TOL: f64 = 1e-9;

const MAX_SOLVER_ITERATIONS: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("invalid moduli: need lip >= mu > 0, got mu = {mu}, lip = {lip}")]
    InvalidModuli { mu: f64, lip: f64 },
    #[error("quadratic coefficient a must be positive, got {0}")]
    NotStronglyConvex(f64),
    #[error("objective `{0}` has no certified moduli; declare mu and lip explicitly")]
    Uncertified(String),
    #[error("averaged Hessian residual {residual:e} exceeds {tol:e}")]
    Accuracy { residual: f64, tol: f64 },
    #[error("optimum search did not reach |grad| <= {tol:e} within {iterations} iterations (best {best:e})")]
    Convergence { iterations: usize, tol: f64, best: f64 },
    #[error("agent {agent}: sampled {property} violated by {excess:e}")]
    ModulusViolation {
        agent: usize,
        property: &'static str,
        excess: f64,
    },
    #[error("cannot parse objective `{0}`")]
    Parse(String),
    #[error("no objectives given")]
    Empty,
}

/// A twice-differentiable objective supplied by the caller.
pub trait SmoothObjective: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;
}

#[derive(Clone, Debug)]
pub enum ObjectiveKind {
    /// `a/2 |x|^2 + b 1'x + c`.
    Quadratic {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `x^2 + sin x` per coordinate.
    SinQuad,
    /// `ln(e^{2x} + 1) + x^2/2` per coordinate.
    LogExp1,
    /// `ln(e^{2x} + e^{-0.2x}) + 0.6 x^2` per coordinate.
    LogExp2,
    Custom(Arc<dyn SmoothObjective>),
}

impl ObjectiveKind {
    /// Certified `(mu, lip)` for catalog entries.
    pub fn certified_moduli(&self) -> Result<(f64, f64), ObjectiveError> {
        match self {
            ObjectiveKind::Quadratic { a, .. } => {
                if *a > 0.0 && a.is_finite() {
                    Ok((*a, *a))
                } else {
                    Err(ObjectiveError::NotStronglyConvex(*a))
                }
            }
            ObjectiveKind::SinQuad => Ok((1.0, 3.0)),
            ObjectiveKind::LogExp1 => Ok((1.0, 2.0)),
            ObjectiveKind::LogExp2 => Ok((1.2, 2.41)),
            ObjectiveKind::Custom(_) => Err(ObjectiveError::Uncertified(self.to_string())),
        }
    }

    fn value(&self, x: &Vector) -> f64 {
        match self {
            ObjectiveKind::Quadratic { a, b, c } => 0.5 * a * x.norm_squared() + b * x.sum() + c,
            ObjectiveKind::SinQuad => x.iter().map(|&v| v * v + v.sin()).sum(),
            ObjectiveKind::LogExp1 => x.iter().map(|&v| softplus(2.0 * v) + 0.5 * v * v).sum(),
            ObjectiveKind::LogExp2 => x.iter().map(|&v| log_add_exp(2.0 * v, -0.2 * v) + 0.6 * v * v).sum(),
            ObjectiveKind::Custom(f) => f.value(x),
        }
    }

    fn gradient(&self, x: &Vector) -> Vector {
        match self {
            ObjectiveKind::Quadratic { a, b, .. } => x.map(|v| a * v + b),
            ObjectiveKind::SinQuad => x.map(|v| 2.0 * v + v.cos()),
            ObjectiveKind::LogExp1 => x.map(|v| 2.0 * sigmoid(2.0 * v) + v),
            // d/dx ln(e^{2x} + e^{-0.2x}) = 2.2 s(2.2x) - 0.2
            ObjectiveKind::LogExp2 => x.map(|v| 2.2 * sigmoid(2.2 * v) - 0.2 + 1.2 * v),
            ObjectiveKind::Custom(f) => f.gradient(x),
        }
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let diag = match self {
            ObjectiveKind::Quadratic { a, .. } => x.map(|_| *a),
            ObjectiveKind::SinQuad => x.map(|v| 2.0 - v.sin()),
            ObjectiveKind::LogExp1 => x.map(|v| {
                let s = sigmoid(2.0 * v);
                4.0 * s * (1.0 - s) + 1.0
            }),
            ObjectiveKind::LogExp2 => x.map(|v| {
                let s = sigmoid(2.2 * v);
                4.84 * s * (1.0 - s) + 1.2
            }),
            ObjectiveKind::Custom(f) => return f.hessian(x),
        };
        Matrix::from_diagonal(&diag)
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::Quadratic { a, b, c } => write!(f, "quad({a},{b},{c})"),
            ObjectiveKind::SinQuad => f.write_str("sinquad"),
            ObjectiveKind::LogExp1 => f.write_str("logexp1"),
            ObjectiveKind::LogExp2 => f.write_str("logexp2"),
            ObjectiveKind::Custom(_) => f.write_str("custom"),
        }
    }
}

impl FromStr for ObjectiveKind {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t {
            "sinquad" => return Ok(ObjectiveKind::SinQuad),
            "logexp1" => return Ok(ObjectiveKind::LogExp1),
            "logexp2" => return Ok(ObjectiveKind::LogExp2),
            _ => {}
        }
        let inner = t
            .strip_prefix("quad(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| ObjectiveError::Parse(s.to_string()))?;
        let coeffs = inner
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ObjectiveError::Parse(s.to_string()))?;
        match coeffs[..] {
            [a, b, c] if coeffs.iter().all(|v| v.is_finite()) => Ok(ObjectiveKind::Quadratic { a, b, c }),
            _ => Err(ObjectiveError::Parse(s.to_string())),
        }
    }
}

/// A local objective `f_i` with its declared strong-convexity modulus `mu`
/// and gradient Lipschitz constant `lip`.
#[derive(Clone, Debug)]
pub struct ObjectiveSpec {
    pub id: usize,
    pub kind: ObjectiveKind,
    pub mu: f64,
    pub lip: f64,
}

impl ObjectiveSpec {
    pub fn new(id: usize, kind: ObjectiveKind, mu: f64, lip: f64) -> Result<Self, ObjectiveError> {
        if !(mu > 0.0 && lip >= mu && lip.is_finite()) {
            return Err(ObjectiveError::InvalidModuli { mu, lip });
        }
        Ok(ObjectiveSpec { id, kind, mu, lip })
    }

    /// Catalog objective with its certified moduli.
    pub fn catalog(id: usize, kind: ObjectiveKind) -> Result<Self, ObjectiveError> {
        let (mu, lip) = kind.certified_moduli()?;
        Self::new(id, kind, mu, lip)
    }

    pub fn value(&self, x: &Vector) -> Result<f64, ObjectiveError> {
        check_finite(x, "decision vector")?;
        let v = self.kind.value(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ObjectiveError::NonFinite {
                what: "objective value",
            })
        }
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector, ObjectiveError> {
        check_finite(x, "decision vector")?;
        let g = self.kind.gradient(x);
        check_finite(&g, "gradient")?;
        Ok(g)
    }

    pub fn hessian(&self, x: &Vector) -> Result<Matrix, ObjectiveError> {
        check_finite(x, "decision vector")?;
        let h = self.kind.hessian(x);
        if h.iter().all(|v| v.is_finite()) {
            Ok(h)
        } else {
            Err(ObjectiveError::NonFinite { what: "hessian" })
        }
    }
}

/// Evaluates `grad f_i(x)`.
pub fn eval_gradient(spec: &ObjectiveSpec, x: &Vector) -> Result<Vector, ObjectiveError> {
    spec.gradient(x)
}

/// `B = int_0^1 hess f(x_ref + t (x - x_ref)) dt` by 64-point Gauss-Legendre.
///
/// `B (x - x_ref)` reproduces `grad f(x) - grad f(x_ref)`; a residual above
/// [`AVERAGED_HESSIAN_TOL`] is reported as an accuracy error.
pub fn averaged_hessian(spec: &ObjectiveSpec, x: &Vector, x_ref: &Vector) -> Result<Matrix, ObjectiveError> {
    let dx = x - x_ref;
    let m = x.len();
    let mut b = Matrix::zeros(m, m);
    for &(t, w) in averaging_rule() {
        let p = x_ref + &dx * t;
        b += spec.hessian(&p)? * w;
    }
    let dg = spec.gradient(x)? - spec.gradient(x_ref)?;
    let residual = (&dg - &b * &dx).norm();
    let tol = AVERAGED_HESSIAN_TOL * dg.norm().max(1.0);
    if residual > tol {
        return Err(ObjectiveError::Accuracy { residual, tol });
    }
    Ok(b)
}

/// Samples `samples` pairs in `[-radius, radius]^dim` and checks
/// `(g(x)-g(y))'(x-y) >= mu |x-y|^2` and `|g(x)-g(y)| <= lip |x-y|`.
pub fn verify_moduli(
    spec: &ObjectiveSpec,
    dim: usize,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<(), ObjectiveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x = Vector::from_fn(dim, |_, _| rng.gen_range(-radius..=radius));
        let y = Vector::from_fn(dim, |_, _| rng.gen_range(-radius..=radius));
        let d = &x - &y;
        let d2 = d.norm_squared();
        if d2 == 0.0 {
            continue;
        }
        let dg = spec.gradient(&x)? - spec.gradient(&y)?;
        let mono = dg.dot(&d) - spec.mu * d2;
        if mono < -MODULUS_SAMPLE_TOL * d2 {
            return Err(ObjectiveError::ModulusViolation {
                agent: spec.id,
                property: "strong convexity",
                excess: -mono / d2,
            });
        }
        let lip = dg.norm() - spec.lip * d2.sqrt();
        if lip > MODULUS_SAMPLE_TOL * d2.sqrt() {
            return Err(ObjectiveError::ModulusViolation {
                agent: spec.id,
                property: "gradient Lipschitz bound",
                excess: lip / d2.sqrt(),
            });
        }
    }
    Ok(())
}

/// Minimizer of `sum_i f_i` together with the matching auxiliary states.
#[derive(Clone, Debug)]
pub struct OptimumSolution {
    pub x_star: Vector,
    /// `lambda_i* = -alpha grad f_i(x*)`.
    pub lambda_star: Vec<Vector>,
    /// `|sum_i grad f_i(x*)|`.
    pub residual: f64,
}

/// Centralized oracle for `min_x sum_i f_i(x)` in dimension 1.
pub fn solve_centralized_optimum(
    specs: &[ObjectiveSpec],
    alpha: f64,
    tol: f64,
) -> Result<OptimumSolution, ObjectiveError> {
    solve_centralized_optimum_from(specs, alpha, tol, &Vector::zeros(1))
}

/// Centralized oracle started from `start`; the dimension is `start.len()`.
///
/// In one dimension the aggregate gradient is strictly increasing, so the
/// root is bracketed first and then polished by Newton steps that fall back
/// to bisection whenever they leave the bracket. Higher dimensions use a
/// damped Newton iteration on the aggregate objective.
pub fn solve_centralized_optimum_from(
    specs: &[ObjectiveSpec],
    alpha: f64,
    tol: f64,
    start: &Vector,
) -> Result<OptimumSolution, ObjectiveError> {
    if specs.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    if !(alpha > 0.0) || !(tol > 0.0) {
        return Err(ObjectiveError::NonFinite {
            what: "solver parameter",
        });
    }
    let x_star = if start.len() == 1 {
        solve_scalar(specs, tol, start[0])?
    } else {
        solve_newton(specs, tol, start)?
    };
    let grads = specs
        .iter()
        .map(|s| s.gradient(&x_star))
        .collect::<Result<Vec<_>, _>>()?;
    let residual = aggregate(&grads, x_star.len()).norm();
    let lambda_star = grads.into_iter().map(|g| g * -alpha).collect();
    Ok(OptimumSolution {
        x_star,
        lambda_star,
        residual,
    })
}

fn aggregate(vs: &[Vector], m: usize) -> Vector {
    vs.iter().fold(Vector::zeros(m), |acc, v| acc + v)
}

fn aggregate_gradient(specs: &[ObjectiveSpec], x: &Vector) -> Result<Vector, ObjectiveError> {
    let mut g = Vector::zeros(x.len());
    for s in specs {
        g += s.gradient(x)?;
    }
    Ok(g)
}

fn aggregate_hessian(specs: &[ObjectiveSpec], x: &Vector) -> Result<Matrix, ObjectiveError> {
    let mut h = Matrix::zeros(x.len(), x.len());
    for s in specs {
        h += s.hessian(x)?;
    }
    Ok(h)
}

fn solve_scalar(specs: &[ObjectiveSpec], tol: f64, start: f64) -> Result<Vector, ObjectiveError> {
    let grad = |v: f64| aggregate_gradient(specs, &Vector::from_element(1, v)).map(|g| g[0]);
    let hess = |v: f64| aggregate_hessian(specs, &Vector::from_element(1, v)).map(|h| h[(0, 0)]);

    let g0 = grad(start)?;
    if g0.abs() <= tol {
        return Ok(Vector::from_element(1, start));
    }
    // Expand until the sign flips.
    let (mut lo, mut hi) = (start, start);
    let mut step = 1.0;
    let mut iterations = 0;
    if g0 > 0.0 {
        loop {
            lo = start - step;
            if grad(lo)? < 0.0 {
                break;
            }
            hi = lo;
            step *= 2.0;
            iterations += 1;
            if iterations > 200 {
                return Err(ObjectiveError::Convergence {
                    iterations,
                    tol,
                    best: g0.abs(),
                });
            }
        }
    } else {
        loop {
            hi = start + step;
            if grad(hi)? > 0.0 {
                break;
            }
            lo = hi;
            step *= 2.0;
            iterations += 1;
            if iterations > 200 {
                return Err(ObjectiveError::Convergence {
                    iterations,
                    tol,
                    best: g0.abs(),
                });
            }
        }
    }

    let mut x = 0.5 * (lo + hi);
    let mut best = f64::INFINITY;
    for it in 0..MAX_SOLVER_ITERATIONS {
        let g = grad(x)?;
        best = best.min(g.abs());
        if g.abs() <= tol {
            return Ok(Vector::from_element(1, x));
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - g / hess(x)?;
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * x.abs().max(1.0) && it > 0 {
            // bracket exhausted at floating-point resolution
            let g = grad(x)?;
            if g.abs() <= tol {
                return Ok(Vector::from_element(1, x));
            }
            return Err(ObjectiveError::Convergence {
                iterations: it,
                tol,
                best: best.min(g.abs()),
            });
        }
    }
    Err(ObjectiveError::Convergence {
        iterations: MAX_SOLVER_ITERATIONS,
        tol,
        best,
    })
}

fn solve_newton(specs: &[ObjectiveSpec], tol: f64, start: &Vector) -> Result<Vector, ObjectiveError> {
    let objective = |x: &Vector| -> Result<f64, ObjectiveError> { specs.iter().map(|s| s.value(x)).sum() };
    let mut x = start.clone();
    let mut best = f64::INFINITY;
    for _ in 0..MAX_SOLVER_ITERATIONS {
        let g = aggregate_gradient(specs, &x)?;
        let gn = g.norm();
        best = best.min(gn);
        if gn <= tol {
            return Ok(x);
        }
        let h = aggregate_hessian(specs, &x)?;
        let p = match h.cholesky() {
            Some(ch) => -ch.solve(&g),
            None => -g.clone(),
        };
        let f0 = objective(&x)?;
        let slope = g.dot(&p);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &x + &p * t;
            let fc = objective(&cand)?;
            let gc = aggregate_gradient(specs, &cand)?.norm();
            if fc <= f0 + 1e-4 * t * slope || gc < gn {
                x = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(ObjectiveError::Convergence {
        iterations: MAX_SOLVER_ITERATIONS,
        tol,
        best,
    })
}

fn check_finite(v: &Vector, what: &'static str) -> Result<(), ObjectiveError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ObjectiveError::NonFinite { what })
    }
}

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

fn softplus(y: f64) -> f64 {
    y.max(0.0) + (-y.abs()).exp().ln_1p()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}
