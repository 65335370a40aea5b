//! Log-domain arithmetic, compensated summation and 1-D search helpers.

use crate::scalar::Real;

/// `ln Σ exp(x_i)`, stable for arbitrarily large or small arguments.
///
/// Returns `-inf` for an empty slice or when every term is `-inf`.
pub fn logsumexp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let mut acc = NeumaierSum::new();
    for &x in xs {
        acc.add((x - max).exp());
    }
    max + acc.total().ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == T::neg_infinity() {
        return hi;
    }
    if hi == T::infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(exp(a) - exp(b))` for `a >= b`.
///
/// Total cancellation (`a == b`) yields `-inf`; `a < b` yields NaN.
pub fn log_diff_exp<T: Real>(a: T, b: T) -> T {
    if b == T::neg_infinity() {
        return a;
    }
    if a < b {
        return T::nan();
    }
    a + (-(b - a).exp_m1()).ln()
}

/// Neumaier's improved Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> NeumaierSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn total(&self) -> T {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(it: I) -> T {
    let mut acc = NeumaierSum::new();
    for x in it {
        acc.add(x);
    }
    acc.total()
}

/// Trapezoid weights `(h_{i-1} + h_i) / 2` for a strictly increasing grid.
pub fn trapezoid_weights<T: Real>(grid: &[T]) -> Vec<T> {
    let n = grid.len();
    let half = T::lit(0.5);
    let mut w = vec![T::zero(); n];
    for i in 0..n.saturating_sub(1) {
        let h = (grid[i + 1] - grid[i]) * half;
        w[i] = w[i] + h;
        w[i + 1] = w[i + 1] + h;
    }
    w
}

/// `ln ∫ exp(ln_f) dx` by the trapezoid rule, evaluated entirely in the log
/// domain.
pub fn log_trapezoid<T: Real>(grid: &[T], ln_f: &[T]) -> T {
    debug_assert_eq!(grid.len(), ln_f.len());
    let terms: Vec<T> = trapezoid_weights(grid)
        .into_iter()
        .zip(ln_f)
        .map(|(w, &l)| {
            if w > T::zero() {
                w.ln() + l
            } else {
                T::neg_infinity()
            }
        })
        .collect();
    logsumexp(&terms)
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `tol`. `-inf` values are ordinary
/// (smallest) values.
pub fn golden_section_max<T: Real, F: Fn(T) -> T>(f: F, lo: T, hi: T, tol: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    // best of the final probes and the bracket ends
    let candidates = [(a, f(a)), (c, fc), (d, fd), (b, f(b))];
    let mut best = candidates[0];
    for &cand in &candidates[1..] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best.0
}

/// Bisection for the point in `[inside, outside]` where a function that is
/// `>= level` at `inside` and `< level` at `outside` crosses `level`.
///
/// The returned abscissa is on the `inside` side of the crossing. `inside`
/// may be larger than `outside`.
pub fn bisect_level<T: Real, F: Fn(T) -> T>(f: F, level: T, inside: T, outside: T) -> T {
    let (mut a, mut b) = (inside, outside);
    let half = T::lit(0.5);
    for _ in 0..200 {
        let m = a + (b - a) * half;
        if m == a || m == b {
            break;
        }
        if f(m) >= level {
            a = m;
        } else {
            b = m;
        }
    }
    a
}
