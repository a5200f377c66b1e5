//! Projected L-BFGS for smooth minimization under box constraints.
//!
//! This is the numerical engine behind model fitting. It implements the
//! classic limited-memory BFGS two-loop recursion combined with an active-set
//! treatment of box constraints: components sitting at a bound whose gradient
//! pushes outward are frozen, the quasi-Newton direction is projected onto the
//! free subspace, and the backtracking Armijo line search projects every trial
//! point back into the box. Degenerate boxes (`lower == upper`) pin a
//! component permanently, which higher layers use to fit reduced models with
//! the same machinery.
//!
//! The implementation is fully deterministic: no randomness, no threads, and
//! termination depends only on the objective values and gradients supplied.

/// Componentwise box `lower[i] <= x[i] <= upper[i]`.
///
/// Infinite bounds are allowed; `lower[i] == upper[i]` pins a component.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    /// Builds bounds, checking shape and `lower <= upper`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, String> {
        if lower.len() != upper.len() {
            return Err(format!(
                "bounds dimension mismatch: {} lower vs {} upper",
                lower.len(),
                upper.len()
            ));
        }
        for i in 0..lower.len() {
            if lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i] {
                return Err(format!(
                    "invalid bound at component {i}: [{}, {}]",
                    lower[i], upper[i]
                ));
            }
        }
        Ok(Bounds { lower, upper })
    }

    /// Clamps `x` into the box in place.
    pub fn project(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Termination condition of one [`minimize`] run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected-gradient infinity norm fell below `grad_tol`.
    GradientTolerance,
    /// Relative loss decrease fell below `loss_tol`.
    LossTolerance,
    /// Iteration cap reached with progress still being made.
    MaxIterations,
    /// No step along the search direction produced sufficient decrease.
    LineSearchFailed,
    /// The objective was non-finite at the (projected) starting point.
    NonFiniteObjective,
}

/// Tuning knobs for [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Options {
    /// Maximum outer iterations.
    pub max_iters: usize,
    /// Number of curvature pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Stop when the projected-gradient infinity norm is at most this.
    pub grad_tol: f64,
    /// Stop when the per-iteration relative loss decrease is at most this.
    pub loss_tol: f64,
    /// Maximum halvings in the backtracking line search.
    pub max_line_search_steps: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_iters: 500,
            memory: 10,
            grad_tol: 1e-8,
            loss_tol: 1e-12,
            max_line_search_steps: 60,
        }
    }
}

/// Result of one [`minimize`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Best feasible point found.
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub loss: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Why the run stopped.
    pub termination: Termination,
}

impl Outcome {
    /// True when the run stopped via a tolerance or the iteration cap rather
    /// than a failed line search or a non-finite objective.
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::LossTolerance | Termination::MaxIterations
        )
    }
}

struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// True for components frozen by the active-set rule: at a bound with the
/// gradient pointing out of the box (or pinned by a degenerate box).
fn active_mask(x: &[f64], grad: &[f64], bounds: &Bounds) -> Vec<bool> {
    (0..x.len())
        .map(|i| {
            let at_lower = x[i] <= bounds.lower[i];
            let at_upper = x[i] >= bounds.upper[i];
            (at_lower && grad[i] > 0.0) || (at_upper && grad[i] < 0.0) || (at_lower && at_upper)
        })
        .collect()
}

fn projected_grad_norm(grad: &[f64], mask: &[bool]) -> f64 {
    grad.iter()
        .zip(mask)
        .map(|(g, &a)| if a { 0.0 } else { g.abs() })
        .fold(0.0f64, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion computing `-H * g` restricted to the free subspace.
fn lbfgs_direction(grad: &[f64], mask: &[bool], pairs: &[CurvaturePair]) -> Vec<f64> {
    let n = grad.len();
    let mut q: Vec<f64> = grad
        .iter()
        .zip(mask)
        .map(|(g, &a)| if a { 0.0 } else { *g })
        .collect();
    let mut alphas = vec![0.0; pairs.len()];
    for (k, pair) in pairs.iter().enumerate().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        alphas[k] = alpha;
        for i in 0..n {
            q[i] -= alpha * pair.y[i];
        }
    }
    if let Some(last) = pairs.last() {
        let yy = dot(&last.y, &last.y);
        if yy > 0.0 {
            let gamma = dot(&last.s, &last.y) / yy;
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
    }
    for (k, pair) in pairs.iter().enumerate() {
        let beta = pair.rho * dot(&pair.y, &q);
        for i in 0..n {
            q[i] += pair.s[i] * (alphas[k] - beta);
        }
    }
    for i in 0..n {
        if mask[i] {
            q[i] = 0.0;
        } else {
            q[i] = -q[i];
        }
    }
    q
}

/// Minimizes a smooth objective over a box.
///
/// `objective` must return the loss and its gradient at the queried point; it
/// is only ever called on feasible points. The starting point is projected
/// into the box first. Returns the best point seen regardless of the
/// termination condition, so callers can use the result as a best-effort
/// candidate even when the line search failed.
///
/// # Panics
/// Panics if `x0` and `bounds` disagree on dimension.
pub fn minimize<F>(mut objective: F, x0: &[f64], bounds: &Bounds, options: &Options) -> Outcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    assert_eq!(
        x0.len(),
        bounds.dim(),
        "starting point and bounds must share a dimension"
    );
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);

    let (mut loss, mut grad) = objective(&x);
    if !loss.is_finite() {
        return Outcome {
            x,
            loss,
            iterations: 0,
            termination: Termination::NonFiniteObjective,
        };
    }

    let c1 = 1e-4; // Armijo sufficient-decrease constant
    let mut pairs: Vec<CurvaturePair> = Vec::with_capacity(options.memory);

    for iteration in 0..options.max_iters {
        let mask = active_mask(&x, &grad, bounds);
        if projected_grad_norm(&grad, &mask) <= options.grad_tol {
            return Outcome {
                x,
                loss,
                iterations: iteration,
                termination: Termination::GradientTolerance,
            };
        }

        let mut direction = lbfgs_direction(&grad, &mask, &pairs);
        // Guard against a non-descent quasi-Newton direction (possible right
        // after the active set changes): fall back to projected steepest
        // descent and drop the stale curvature history.
        let slope = dot(&direction, &grad);
        if !slope.is_finite() || slope >= 0.0 {
            pairs.clear();
            for i in 0..n {
                direction[i] = if mask[i] { 0.0 } else { -grad[i] };
            }
        }

        // Backtracking Armijo line search over projected trial points. The
        // sufficient-decrease test uses the actual displacement after
        // projection, which is the correct generalization for box constraints.
        let mut step = 1.0f64;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for _ in 0..options.max_line_search_steps {
            let mut trial: Vec<f64> = (0..n).map(|i| x[i] + step * direction[i]).collect();
            bounds.project(&mut trial);
            let displacement_slope: f64 = (0..n).map(|i| grad[i] * (trial[i] - x[i])).sum();
            if displacement_slope < 0.0 {
                // The gradient half of this evaluation is unused; the energy
                // objective shares nearly all work between loss and gradient,
                // so a split interface is not worth the extra API surface.
                let (trial_loss, _) = objective(&trial);
                if trial_loss.is_finite() && trial_loss <= loss + c1 * displacement_slope {
                    accepted = Some((trial, trial_loss));
                    break;
                }
            }
            step *= 0.5;
        }

        let (new_x, new_loss) = match accepted {
            Some(pair) => pair,
            None => {
                return Outcome {
                    x,
                    loss,
                    iterations: iteration,
                    termination: Termination::LineSearchFailed,
                }
            }
        };

        let (_, new_grad) = objective(&new_x);

        let s: Vec<f64> = (0..n).map(|i| new_x[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| new_grad[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        // Curvature pairs are only kept when s'y is safely positive, which
        // keeps the implicit Hessian approximation positive definite. When a
        // step exposes negative curvature the whole memory is dropped:
        // retaining the stale model alongside an Armijo-only line search can
        // trap the iteration in a cycle of tiny always-accepted steps.
        if sy > 1e-10 * s_norm * y_norm && sy.is_finite() {
            if pairs.len() == options.memory {
                pairs.remove(0);
            }
            pairs.push(CurvaturePair {
                s,
                y,
                rho: 1.0 / sy,
            });
        } else {
            pairs.clear();
        }

        let decrease = loss - new_loss;
        let relative_decrease = decrease / loss.abs().max(1.0);
        x = new_x;
        loss = new_loss;
        grad = new_grad;

        if relative_decrease >= 0.0 && relative_decrease <= options.loss_tol {
            return Outcome {
                x,
                loss,
                iterations: iteration + 1,
                termination: Termination::LossTolerance,
            };
        }
    }

    Outcome {
        x,
        loss,
        iterations: options.max_iters,
        termination: Termination::MaxIterations,
    }
}
