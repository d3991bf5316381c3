//! Bounded minimisation over Θ: multistart Nelder–Mead followed by a projected Newton polish.
//!
//! Both stages work in `(ln α, β)` so that the wide α range is explored on a log scale.

use crate::linalg::{Mat2, Vec2};
use crate::model::{FragilityParams, LossBundle, ParamBounds};
use crate::scalar::{lit, Scalar};

/// A twice-differentiable objective on Θ.
pub trait Objective<S: Scalar> {
    fn value(&self, theta: &FragilityParams<S>) -> S;
    fn bundle(&self, theta: &FragilityParams<S>) -> LossBundle<S>;
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizerOptions<S> {
    pub bounds: ParamBounds<S>,
    /// Latin-hypercube starts added to the caller's initial point.
    pub extra_starts: usize,
    /// Objective tolerance of the simplex stage.
    pub tol: S,
    pub max_simplex_iter: usize,
    pub max_polish_iter: usize,
}

impl<S: Scalar> MinimizerOptions<S> {
    pub fn new(bounds: ParamBounds<S>) -> Self {
        Self { bounds, extra_starts: 4, tol: lit(1e-8), max_simplex_iter: 400, max_polish_iter: 60 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Minimum<S> {
    pub theta: FragilityParams<S>,
    pub value: S,
    pub converged: bool,
    pub evaluations: usize,
}

/// Box in optimisation coordinates `y = (ln α, β)`.
#[derive(Clone, Copy)]
struct Box2<S> {
    lo: [S; 2],
    hi: [S; 2],
    alpha: (S, S),
}

impl<S: Scalar> Box2<S> {
    fn from_bounds(b: &ParamBounds<S>) -> Self {
        Self { lo: [b.alpha.0.ln(), b.beta.0], hi: [b.alpha.1.ln(), b.beta.1], alpha: b.alpha }
    }

    fn project(&self, y: [S; 2]) -> [S; 2] {
        [y[0].max(self.lo[0]).min(self.hi[0]), y[1].max(self.lo[1]).min(self.hi[1])]
    }

    fn width(&self, i: usize) -> S {
        self.hi[i] - self.lo[i]
    }

    fn at_unit(&self, u: [f64; 2]) -> [S; 2] {
        [self.lo[0] + self.width(0) * lit(u[0]), self.lo[1] + self.width(1) * lit(u[1])]
    }

    fn theta(&self, y: [S; 2]) -> FragilityParams<S> {
        // exp(ln α) may round past the bound; keep θ inside Θ exactly.
        let a = y[0].exp().max(self.alpha.0).min(self.alpha.1);
        FragilityParams::new(a, y[1])
    }
}

fn to_y<S: Scalar>(t: &FragilityParams<S>) -> [S; 2] {
    [t.alpha.ln(), t.beta]
}

/// Deterministic 4-stratum Latin hypercube on the unit square.
const LHS_POINTS: [[f64; 2]; 4] = [[0.125, 0.625], [0.375, 0.125], [0.625, 0.875], [0.875, 0.375]];

fn lhs_point(k: usize) -> [f64; 2] {
    if k < LHS_POINTS.len() {
        LHS_POINTS[k]
    } else {
        // further starts: golden-ratio sequence
        let g = 0.618_033_988_749_894_9;
        [((k as f64 + 1.0) * g).fract(), ((k as f64 + 1.0) * g * g).fract()]
    }
}

/// Multistart global search: the initial point plus `extra_starts` Latin-hypercube points,
/// each refined by Nelder–Mead and then polished with projected Newton steps.
/// The returned value never exceeds the objective at any start point.
pub fn minimize<S: Scalar, O: Objective<S>>(
    obj: &O,
    init: &FragilityParams<S>,
    opts: &MinimizerOptions<S>,
) -> Minimum<S> {
    let bx = Box2::from_bounds(&opts.bounds);
    let mut starts = vec![bx.project(to_y(init))];
    starts.extend((0..opts.extra_starts).map(|k| bx.at_unit(lhs_point(k))));
    let mut best: Option<Minimum<S>> = None;
    let mut evals = 0;
    for y0 in starts {
        let nm = nelder_mead(obj, y0, &bx, opts);
        let pol = polish_y(obj, nm.0, nm.1, &bx, opts.max_polish_iter);
        evals += nm.2 + pol.evaluations;
        let better = match &best {
            None => true,
            Some(b) => pol.value < b.value,
        };
        if better {
            best = Some(Minimum { converged: pol.converged || nm.3, ..pol });
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = evals;
    best
}

/// Local refinement only: projected Newton from `start`.
pub fn polish<S: Scalar, O: Objective<S>>(
    obj: &O,
    start: &FragilityParams<S>,
    bounds: &ParamBounds<S>,
    max_iter: usize,
) -> Minimum<S> {
    let bx = Box2::from_bounds(bounds);
    let y = bx.project(to_y(start));
    let v = obj.value(&bx.theta(y));
    polish_y(obj, y, v, &bx, max_iter)
}

/// Returns (best vertex, value, evaluations, converged).
fn nelder_mead<S: Scalar, O: Objective<S>>(
    obj: &O,
    y0: [S; 2],
    bx: &Box2<S>,
    opts: &MinimizerOptions<S>,
) -> ([S; 2], S, usize, bool) {
    let eval = |y: [S; 2]| {
        let v = obj.value(&bx.theta(y));
        if v.is_nan() {
            S::infinity()
        } else {
            v
        }
    };
    let step = lit::<S>(0.05);
    let mut simplex: Vec<([S; 2], S)> = Vec::with_capacity(3);
    simplex.push((y0, eval(y0)));
    for i in 0..2 {
        let mut y = y0;
        let h = bx.width(i) * step;
        y[i] = if y[i] + h <= bx.hi[i] { y[i] + h } else { y[i] - h };
        simplex.push((y, eval(y)));
    }
    let mut evals = 3;
    let (half, two) = (lit::<S>(0.5), lit::<S>(2.0));
    let size_tol = lit::<S>(1e-9);
    let mut converged = false;
    for _ in 0..opts.max_simplex_iter {
        simplex.sort_by(|a, b| a.1.total_cmp_scalar(&b.1));
        let spread = simplex[2].1 - simplex[0].1;
        let diam = (0..2)
            .map(|i| {
                let lo = simplex.iter().map(|p| p.0[i]).fold(S::infinity(), S::min);
                let hi = simplex.iter().map(|p| p.0[i]).fold(S::neg_infinity(), S::max);
                (hi - lo) / bx.width(i)
            })
            .fold(S::zero(), S::max);
        if spread <= opts.tol * (S::one() + simplex[0].1.abs()) && diam < lit(1e-4) || diam < size_tol {
            converged = true;
            break;
        }
        let c = [(simplex[0].0[0] + simplex[1].0[0]) * half, (simplex[0].0[1] + simplex[1].0[1]) * half];
        let worst = simplex[2];
        let along = |t: S| bx.project([c[0] + (c[0] - worst.0[0]) * t, c[1] + (c[1] - worst.0[1]) * t]);
        let yr = along(S::one());
        let fr = eval(yr);
        evals += 1;
        if fr < simplex[0].1 {
            let ye = along(two);
            let fe = eval(ye);
            evals += 1;
            simplex[2] = if fe < fr { (ye, fe) } else { (yr, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (yr, fr);
        } else {
            let (yc, fc) = if fr < worst.1 {
                let y = along(half);
                (y, eval(y))
            } else {
                let y = along(-half);
                (y, eval(y))
            };
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[2] = (yc, fc);
            } else {
                let b = simplex[0].0;
                for p in simplex.iter_mut().skip(1) {
                    let y = [b[0] + (p.0[0] - b[0]) * half, b[1] + (p.0[1] - b[1]) * half];
                    *p = (y, eval(y));
                }
                evals += 2;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp_scalar(&b.1));
    (simplex[0].0, simplex[0].1, evals, converged)
}

trait TotalCmp {
    fn total_cmp_scalar(&self, o: &Self) -> std::cmp::Ordering;
}

impl<S: Scalar> TotalCmp for S {
    fn total_cmp_scalar(&self, o: &Self) -> std::cmp::Ordering {
        self.partial_cmp(o).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Gradient and Hessian in `(ln α, β)` coordinates.
fn derivs_y<S: Scalar>(b: &LossBundle<S>, alpha: S) -> (Vec2<S>, Mat2<S>) {
    let g = Vec2::new(alpha * b.grad[0], b.grad[1]);
    let h = Mat2([
        [alpha * alpha * b.hess.get(0, 0) + alpha * b.grad[0], alpha * b.hess.get(0, 1)],
        [alpha * b.hess.get(1, 0), b.hess.get(1, 1)],
    ]);
    (g, h)
}

fn polish_y<S: Scalar, O: Objective<S>>(obj: &O, y0: [S; 2], v0: S, bx: &Box2<S>, max_iter: usize) -> Minimum<S> {
    let mut y = y0;
    let mut v = v0;
    let mut evals = 0;
    let mut converged = false;
    let ptol = lit::<S>(1e-10);
    for _ in 0..max_iter {
        let b = obj.bundle(&bx.theta(y));
        evals += 1;
        let (g, h) = derivs_y(&b, y[0].exp());
        // Active bounds: at a bound with the gradient pointing out of the box.
        let scale = [bx.width(0), bx.width(1)];
        let tiny = [scale[0] * lit(1e-12), scale[1] * lit(1e-12)];
        let active: [bool; 2] = std::array::from_fn(|i| {
            (y[i] <= bx.lo[i] + tiny[i] && g[i] > S::zero()) || (y[i] >= bx.hi[i] - tiny[i] && g[i] < S::zero())
        });
        let pg = Vec2::new(
            if active[0] { S::zero() } else { g[0] * scale[0] },
            if active[1] { S::zero() } else { g[1] * scale[1] },
        );
        if pg.norm() <= ptol * (S::one() + v.abs()) {
            converged = true;
            break;
        }
        let dir = newton_direction(&g, &h, active).unwrap_or_else(|| {
            Vec2::new(
                if active[0] { S::zero() } else { -g[0] * scale[0] * scale[0] },
                if active[1] { S::zero() } else { -g[1] * scale[1] * scale[1] },
            )
        });
        // Backtracking on the projected path with an Armijo test.
        let mut t = S::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand = bx.project([y[0] + dir[0] * t, y[1] + dir[1] * t]);
            let vc = obj.value(&bx.theta(cand));
            evals += 1;
            let moved = Vec2::new(cand[0] - y[0], cand[1] - y[1]);
            if vc <= v + lit::<S>(1e-4) * g.dot(&moved) && vc <= v {
                let small = moved[0].abs() <= scale[0] * lit(1e-14) && moved[1].abs() <= scale[1] * lit(1e-14);
                y = cand;
                v = vc;
                accepted = !small;
                break;
            }
            t = t * lit(0.5);
        }
        if !accepted {
            converged = true;
            break;
        }
    }
    Minimum { theta: bx.theta(y), value: v, converged, evaluations: evals }
}

/// Newton step on the free coordinates; `None` when the reduced Hessian is not positive definite.
fn newton_direction<S: Scalar>(g: &Vec2<S>, h: &Mat2<S>, active: [bool; 2]) -> Option<Vec2<S>> {
    match active {
        [true, true] => Some(Vec2::zero()),
        [false, true] => (h.get(0, 0) > S::zero()).then(|| Vec2::new(-g[0] / h.get(0, 0), S::zero())),
        [true, false] => (h.get(1, 1) > S::zero()).then(|| Vec2::new(S::zero(), -g[1] / h.get(1, 1))),
        [false, false] => {
            let hs = h.symmetrize();
            if hs.get(0, 0) > S::zero() && hs.det() > S::zero() {
                hs.inverse().map(|inv| -inv.mul_vec(g))
            } else {
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Convex bowl centred at (α, β) = (0.5, 0.3) in (ln α, β).
    struct Bowl;
    impl Objective<f64> for Bowl {
        fn value(&self, t: &FragilityParams<f64>) -> f64 {
            let a = t.alpha.ln() - 0.5f64.ln();
            let b = t.beta - 0.3;
            a * a + 4.0 * b * b + 0.5 * a * b
        }
        fn bundle(&self, t: &FragilityParams<f64>) -> LossBundle<f64> {
            let a = t.alpha.ln() - 0.5f64.ln();
            let b = t.beta - 0.3;
            let al = t.alpha;
            // chain rule from u = ln α to α
            let gu = 2.0 * a + 0.5 * b;
            let huu = 2.0;
            LossBundle {
                value: self.value(t),
                grad: Vec2::new(gu / al, 8.0 * b + 0.5 * a),
                hess: Mat2([[(huu - gu) / (al * al), 0.5 / al], [0.5 / al, 8.0]]),
            }
        }
    }

    #[test]
    fn finds_interior_minimum() {
        let opts = MinimizerOptions::new(ParamBounds::default());
        let m = minimize(&Bowl, &FragilityParams::new(5.0, 1.5), &opts);
        assert!((m.theta.alpha - 0.5).abs() < 1e-8, "{:?}", m.theta);
        assert!((m.theta.beta - 0.3).abs() < 1e-8);
        assert!(m.converged);
    }

    #[test]
    fn respects_bounds() {
        let bounds = ParamBounds::new((0.6, 2.0), (0.35, 1.0)).unwrap();
        let m = minimize(&Bowl, &FragilityParams::new(1.0, 0.5), &MinimizerOptions::new(bounds));
        assert!(bounds.contains(&m.theta));
        assert!((m.theta.alpha - 0.6).abs() < 1e-9 && (m.theta.beta - 0.35).abs() < 1e-9, "{:?}", m.theta);
    }

    #[test]
    fn polish_from_nearby_start() {
        let m = polish(&Bowl, &FragilityParams::new(0.55, 0.32), &ParamBounds::default(), 50);
        assert!((m.theta.alpha - 0.5).abs() < 1e-9 && (m.theta.beta - 0.3).abs() < 1e-9);
    }
}
