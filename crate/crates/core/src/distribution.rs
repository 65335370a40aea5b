//! Normalized energy distributions `W(E) = |a(E)|² ΔΓ(E) / Z` on adaptive
//! grids, their moments, and the saddle-point predictions they are compared
//! with.
//!
//! Everything is carried as `ln W`. Each support interval gets its own grid,
//! centred on that interval's peak and cut where `ln W` has fallen
//! `window_nats` below it. Grids are refined until one more halving of every
//! cell would move the normalization by less than `rel_tol`.

use crate::amplitude_profiles::{AmplitudeProfile, ProfileShape};
use crate::dos_models::DensityOfStatesModel;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::numerics::{
    bisect_level, golden_section_max, log_trapezoid, logsumexp, trapezoid_weights, NeumaierSum,
};
use crate::output::{fmt_opt, fmt_real};
use crate::scalar::Real;

const MAX_DOUBLINGS: i32 = 200;

/// Grid construction and refinement settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPolicy<T> {
    /// Allowed relative change of the normalization under one more halving
    /// of every cell.
    pub rel_tol: T,
    /// Upper bound on the number of grid points.
    pub max_points: usize,
    /// Depth below each interval's peak at which its window is cut.
    pub window_nats: T,
    /// Samples per interval used to locate its peak.
    pub scan_points: usize,
}

impl<T: Real> Default for GridPolicy<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-10).max(T::epsilon() * T::lit(1e4)),
            max_points: 1 << 21,
            window_nats: T::lit(60.0),
            scan_points: 2048,
        }
    }
}

impl<T: Real> GridPolicy<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero() && self.rel_tol < T::one()) {
            return Err(Error::Argument(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_points < 64 {
            return Err(Error::Argument("max_points must be at least 64".into()));
        }
        if !(self.window_nats >= T::lit(5.0)) || !self.window_nats.is_finite() {
            return Err(Error::Argument(
                "window_nats must be finite and at least 5".into(),
            ));
        }
        if self.scan_points < 8 {
            return Err(Error::Argument("scan_points must be at least 8".into()));
        }
        Ok(())
    }
}

/// `ln |a|² + ln ΔΓ` without the additive constants of either factor.
struct Integrand<'a, T: Real> {
    model: &'a DensityOfStatesModel<T>,
    profile: &'a AmplitudeProfile<T>,
}

impl<T: Real> Integrand<'_, T> {
    fn ln_f(&self, e: T) -> T {
        let v = self.profile.ln_amp_sq_shape(e) + self.model.ln_density_shape(e);
        if v.is_nan() {
            T::neg_infinity()
        } else {
            v
        }
    }

    fn derivatives(&self, e: T) -> Option<(T, T)> {
        let (a1, a2) = self.profile.derivative_ln_amp_sq(e).ok()?;
        let (d1, d2) = self.model.ln_density_derivatives(e).ok()?;
        let out = (a1 + d1, a2 + d2);
        (out.0.is_finite() && out.1.is_finite()).then_some(out)
    }

    fn offset(&self) -> T {
        self.profile.ln_k_offset() + self.model.ln_density_offset()
    }
}

/// Newton steps on the log-integrand, kept inside `(lo, hi)` and accepted
/// only while the gradient shrinks.
fn newton_polish<T: Real>(f: &Integrand<'_, T>, x: T, lo: T, hi: T) -> T {
    let Some((mut g, mut h)) = f.derivatives(x) else {
        return x;
    };
    let mut x = x;
    for _ in 0..30 {
        if !(h < T::zero()) || g == T::zero() {
            break;
        }
        let xn = x - g / h;
        if !(xn > lo && xn < hi) {
            break;
        }
        let Some((gn, hn)) = f.derivatives(xn) else {
            break;
        };
        if !(gn.abs() < g.abs()) {
            break;
        }
        let step = (xn - x).abs();
        x = xn;
        g = gn;
        h = hn;
        if step <= T::epsilon() * x.abs() {
            break;
        }
    }
    x
}

fn pow2<T: Real>(j: i32) -> T {
    T::lit(2.0).powi(j)
}

fn sort_dedup<T: Real>(xs: &mut Vec<T>) {
    xs.retain(|x| !x.is_nan());
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN removed"));
    xs.dedup();
}

/// Walk `lo + hint 2^j` upward until `ln f` has dropped `nats` below its
/// running maximum and is still falling.
fn upward_search_limit<T: Real>(f: &Integrand<'_, T>, lo: T, hint: T, nats: T) -> Result<T> {
    let mut best = T::neg_infinity();
    let mut prev = T::neg_infinity();
    for j in 0..=MAX_DOUBLINGS {
        let x = lo + hint * pow2(j);
        if !x.is_finite() {
            break;
        }
        let v = f.ln_f(x);
        best = best.max(v);
        if best > T::neg_infinity() && v < best - nats && v < prev {
            return Ok(x);
        }
        prev = v;
    }
    Err(Error::Divergence(format!(
        "ln W does not fall off above E = {lo}; no normalizable peak within {MAX_DOUBLINGS} doublings of the scale {hint}"
    )))
}

struct PieceGrid<T> {
    component: usize,
    grid: Vec<T>,
    ln_f: Vec<T>,
    converged: bool,
    tail_slope: Option<T>,
}

struct Cell<T> {
    x0: T,
    x1: T,
    l0: T,
    lm: T,
    l1: T,
    err: T,
    mass: T,
}

impl<T: Real> Cell<T> {
    fn new(x0: T, x1: T, l0: T, l1: T, f: &Integrand<'_, T>, l_ref: T) -> Self {
        let xm = T::lit(0.5) * (x0 + x1);
        let lm = f.ln_f(xm);
        let h = x1 - x0;
        let (g0, gm, g1) = ((l0 - l_ref).exp(), (lm - l_ref).exp(), (l1 - l_ref).exp());
        let quarter = T::lit(0.25) * h;
        Self {
            x0,
            x1,
            l0,
            lm,
            l1,
            err: (quarter * (gm + gm - g0 - g1)).abs(),
            mass: quarter * (g0 + gm + gm + g1),
        }
    }

    fn mid(&self) -> T {
        T::lit(0.5) * (self.x0 + self.x1)
    }

    fn splittable(&self) -> bool {
        let m = self.mid();
        let a = T::lit(0.5) * (self.x0 + m);
        let b = T::lit(0.5) * (m + self.x1);
        self.x0 < a && a < m && m < b && b < self.x1
    }
}

fn analyze_piece<T: Real>(
    f: &Integrand<'_, T>,
    component: usize,
    piece: Interval<T>,
    hint: T,
    policy: &GridPolicy<T>,
    budget: usize,
) -> Result<Option<PieceGrid<T>>> {
    let nats = policy.window_nats;
    let (lo, unbounded) = (piece.lo, !piece.hi.is_finite());
    if !(piece.hi > lo) {
        return Ok(None);
    }
    let upper = if unbounded {
        upward_search_limit(f, lo, hint, nats)?
    } else {
        piece.hi
    };

    // coarse scan: uniform, plus geometric clusters toward both ends and
    // around the scale hint
    let w = upper - lo;
    let n = policy.scan_points;
    let mut xs: Vec<T> = (0..=n)
        .map(|i| lo + w * T::from_usize_lossy(i) / T::from_usize_lossy(n))
        .collect();
    for j in 1..=60 {
        let d = w * pow2(-j);
        xs.push(lo + d);
        xs.push(upper - d);
    }
    for j in -60..=MAX_DOUBLINGS {
        let x = lo + hint * pow2(j);
        if x > upper || !x.is_finite() {
            break;
        }
        xs.push(x);
    }
    xs.retain(|&x| x >= lo && x <= upper);
    sort_dedup(&mut xs);
    let vals: Vec<T> = xs.iter().map(|&x| f.ln_f(x)).collect();
    let mut imax = 0;
    for (i, &v) in vals.iter().enumerate() {
        if v > vals[imax] {
            imax = i;
        }
    }
    if vals[imax] == T::neg_infinity() {
        return Ok(None);
    }
    if vals[imax] == T::infinity() {
        return Err(Error::Divergence(format!(
            "ln W is infinite at E = {}",
            xs[imax]
        )));
    }

    let b_lo = xs[imax.saturating_sub(1)];
    let b_hi = xs[(imax + 1).min(xs.len() - 1)];
    let tol = T::lit(1e-13) * xs[imax].abs().max(b_hi - b_lo);
    let mut x_star = golden_section_max(|x| f.ln_f(x), b_lo, b_hi, tol);
    if f.ln_f(x_star) < vals[imax] {
        x_star = xs[imax];
    }
    if x_star > lo && x_star < upper {
        x_star = newton_polish(f, x_star, b_lo.max(lo), b_hi.min(upper));
    }
    let l_star = f.ln_f(x_star);

    let level = l_star - nats;
    let edge = |end: T| {
        if f.ln_f(end) >= level {
            end
        } else {
            bisect_level(|x| f.ln_f(x), level, x_star, end)
        }
    };
    let a = edge(lo);
    let mut b = edge(upper);

    let half = l_star - T::lit(0.5);
    let side = |end: T| {
        if end == x_star {
            return T::zero();
        }
        let x = if f.ln_f(end) >= half {
            end
        } else {
            bisect_level(|x| f.ln_f(x), half, x_star, end)
        };
        let floor = T::lit(4.0) * T::epsilon() * x_star.abs().max(T::min_positive_value());
        (x - x_star).abs().max(floor)
    };
    let sig_l = side(a);
    let sig_r = side(b);

    let mut tail_slope = None;
    if unbounded {
        let ln_core = l_star + (sig_l + sig_r).ln();
        let mut ok = false;
        let mut q = T::nan();
        b = b.max(hint);
        for _ in 0..MAX_DOUBLINGS {
            let b2 = b + b;
            if !b2.is_finite() {
                break;
            }
            let (fb, f2b) = (f.ln_f(b), f.ln_f(b2));
            q = (f2b - fb) / T::LN_2();
            if f2b == T::neg_infinity() {
                ok = true;
                break;
            }
            if q < -T::one() {
                let ln_tail = fb + b.ln() - (-q - T::one()).ln();
                if ln_tail < ln_core - nats {
                    ok = true;
                    break;
                }
            }
            b = b2;
        }
        if !ok {
            return Err(Error::Divergence(format!(
                "upper tail of W decays like E^{:.4}, too slowly to be normalized",
                q.as_f64()
            )));
        }
        tail_slope = Some(q);
    }

    // initial grid: geometric ladder around the peak, each gap split in four
    let mut pts = vec![a, x_star, b];
    for (sigma, dir) in [(sig_l, -T::one()), (sig_r, T::one())] {
        if sigma == T::zero() {
            continue;
        }
        for j in 0..2000 {
            let x = x_star + dir * sigma * pow2(j) * T::lit(0.25);
            if x <= a || x >= b {
                break;
            }
            pts.push(x);
        }
    }
    sort_dedup(&mut pts);
    let mut grid0 = Vec::with_capacity(pts.len() * 4);
    for win in pts.windows(2) {
        for k in 0..4 {
            grid0.push(win[0] + (win[1] - win[0]) * T::from_usize_lossy(k) * T::lit(0.25));
        }
    }
    grid0.push(*pts.last().expect("non-empty"));
    sort_dedup(&mut grid0);
    if grid0.len() < 2 {
        return Ok(None);
    }

    let lvals: Vec<T> = grid0.iter().map(|&x| f.ln_f(x)).collect();
    let mut cells: Vec<Cell<T>> = (0..grid0.len() - 1)
        .map(|i| Cell::new(grid0[i], grid0[i + 1], lvals[i], lvals[i + 1], f, l_star))
        .collect();

    let mut converged = false;
    loop {
        let mut z = NeumaierSum::new();
        let mut s = NeumaierSum::new();
        for c in &cells {
            z.add(c.mass);
            s.add(c.err);
        }
        let (z, s) = (z.total(), s.total());
        if s <= policy.rel_tol * z {
            converged = true;
            break;
        }
        let threshold = policy.rel_tol * z / T::from_usize_lossy(2 * cells.len());
        let n_split = cells
            .iter()
            .filter(|c| c.err > threshold && c.splittable())
            .count();
        if n_split == 0 || 2 * (cells.len() + n_split) + 1 > budget {
            break;
        }
        let mut next = Vec::with_capacity(cells.len() + n_split);
        for c in cells {
            if c.err > threshold && c.splittable() {
                let m = c.mid();
                next.push(Cell::new(c.x0, m, c.l0, c.lm, f, l_star));
                next.push(Cell::new(m, c.x1, c.lm, c.l1, f, l_star));
            } else {
                next.push(c);
            }
        }
        cells = next;
    }

    let mut grid = Vec::with_capacity(2 * cells.len() + 1);
    let mut ln_f = Vec::with_capacity(2 * cells.len() + 1);
    for c in &cells {
        grid.push(c.x0);
        ln_f.push(c.l0);
        grid.push(c.mid());
        ln_f.push(c.lm);
    }
    let last = cells.last().expect("at least one cell");
    grid.push(last.x1);
    ln_f.push(last.l1);

    Ok(Some(PieceGrid {
        component,
        grid,
        ln_f,
        converged,
        tail_slope,
    }))
}

/// A contiguous run of grid points covering one support interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<T> {
    /// First grid index of the run.
    pub start: usize,
    /// One past the last grid index.
    pub end: usize,
    /// Index of the lump (0 for single-interval profiles).
    pub component: usize,
    /// Log of the probability carried by this run.
    pub ln_mass: T,
}

/// A normalized distribution `W(E)` tabulated on an adaptive grid.
#[derive(Debug, Clone)]
pub struct EnergyDistribution<T: Real> {
    model: DensityOfStatesModel<T>,
    profile: AmplitudeProfile<T>,
    policy: GridPolicy<T>,
    grid: Vec<T>,
    ln_w: Vec<T>,
    segments: Vec<Segment<T>>,
    ln_z_shape: T,
    ln_z: T,
    converged: bool,
    tail_log_slope: Option<T>,
}

/// Build the normalized distribution for `model` and `profile`.
pub fn build_distribution<T: Real>(
    model: &DensityOfStatesModel<T>,
    profile: &AmplitudeProfile<T>,
    policy: &GridPolicy<T>,
) -> Result<EnergyDistribution<T>> {
    policy.validate()?;
    let f = Integrand { model, profile };
    let domain = model.domain();
    let pieces: Vec<(usize, Interval<T>)> = profile
        .support_components()
        .into_iter()
        .filter_map(|(i, s)| s.intersect(&domain).map(|s| (i, s)))
        .collect();
    if pieces.is_empty() {
        return Err(Error::EmptySupport);
    }
    let budget = (policy.max_points / pieces.len()).max(64);
    let hint = profile.scale_hint();
    let mut grids = Vec::new();
    for (component, piece) in pieces {
        if let Some(g) = analyze_piece(&f, component, piece, hint, policy, budget)? {
            grids.push(g);
        }
    }
    if grids.is_empty() {
        return Err(Error::EmptySupport);
    }
    let converged = grids.iter().all(|g| g.converged);
    let tail_log_slope = grids.iter().filter_map(|g| g.tail_slope).last();
    let parts = grids
        .into_iter()
        .map(|g| (g.component, g.grid, g.ln_f))
        .collect();
    let (grid, ln_w, segments, ln_z_shape) = assemble(parts)?;
    Ok(EnergyDistribution {
        model: model.clone(),
        profile: profile.clone(),
        policy: *policy,
        grid,
        ln_w,
        segments,
        ln_z_shape,
        ln_z: ln_z_shape + f.offset(),
        converged,
        tail_log_slope,
    })
}

type Assembled<T> = (Vec<T>, Vec<T>, Vec<Segment<T>>, T);

fn assemble<T: Real>(parts: Vec<(usize, Vec<T>, Vec<T>)>) -> Result<Assembled<T>> {
    let masses: Vec<T> = parts.iter().map(|(_, g, l)| log_trapezoid(g, l)).collect();
    let ln_z = logsumexp(&masses);
    if !ln_z.is_finite() {
        return Err(Error::Divergence(format!("normalization ln Z = {ln_z}")));
    }
    let mut grid = Vec::new();
    let mut ln_w = Vec::new();
    let mut segments = Vec::new();
    for ((component, g, l), m) in parts.into_iter().zip(masses) {
        let start = grid.len();
        grid.extend(g);
        ln_w.extend(l.into_iter().map(|v| v - ln_z));
        segments.push(Segment {
            start,
            end: grid.len(),
            component,
            ln_mass: m - ln_z,
        });
    }
    Ok((grid, ln_w, segments, ln_z))
}

/// Mean and standard deviation of `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments<T> {
    pub mean: T,
    pub width: T,
    /// The first moment of the untruncated distribution does not exist.
    pub mean_divergent: bool,
    /// The second moment of the untruncated distribution does not exist.
    pub variance_divergent: bool,
}

impl<T: Real> Moments<T> {
    pub fn ratio(&self) -> T {
        self.width / self.mean
    }
}

/// Location of the maximum of `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub energy: T,
    pub ln_w: T,
    /// The maximum sits on an edge of the support or model domain.
    pub at_boundary: bool,
}

impl<T: Real> EnergyDistribution<T> {
    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn ln_w(&self) -> &[T] {
        &self.ln_w
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `ln Z` including the `ln K` and `ln C` constants.
    pub fn ln_z(&self) -> T {
        self.ln_z
    }

    /// Whether every interval met the refinement tolerance within the
    /// point budget.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Local power `d ln W / d ln E` at the far end of an unbounded window.
    pub fn tail_log_slope(&self) -> Option<T> {
        self.tail_log_slope
    }

    pub fn model(&self) -> &DensityOfStatesModel<T> {
        &self.model
    }

    pub fn profile(&self) -> &AmplitudeProfile<T> {
        &self.profile
    }

    pub fn policy(&self) -> &GridPolicy<T> {
        &self.policy
    }

    fn integrand(&self) -> Integrand<'_, T> {
        Integrand {
            model: &self.model,
            profile: &self.profile,
        }
    }

    /// `ln W(E)` at an arbitrary energy.
    pub fn ln_w_at(&self, energy: T) -> T {
        self.integrand().ln_f(energy) - self.ln_z_shape
    }

    /// Trapezoid integral of `W` over the grid (1 up to rounding).
    pub fn total_probability(&self) -> T {
        let lm: Vec<T> = self
            .segments
            .iter()
            .map(|s| log_trapezoid(&self.grid[s.start..s.end], &self.ln_w[s.start..s.end]))
            .collect();
        logsumexp(&lm).exp()
    }

    /// The same distribution with every cell split into `factor` equal parts.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Argument("refinement factor must be positive".into()));
        }
        let f = self.integrand();
        let mut parts = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let g = &self.grid[s.start..s.end];
            let mut grid = Vec::with_capacity((g.len() - 1) * factor + 1);
            for w in g.windows(2) {
                for k in 0..factor {
                    grid.push(
                        w[0] + (w[1] - w[0]) * T::from_usize_lossy(k) / T::from_usize_lossy(factor),
                    );
                }
            }
            grid.push(g[g.len() - 1]);
            let ln_f = grid.iter().map(|&x| f.ln_f(x)).collect();
            parts.push((s.component, grid, ln_f));
        }
        let (grid, ln_w, segments, ln_z_shape) = assemble(parts)?;
        Ok(Self {
            grid,
            ln_w,
            segments,
            ln_z: ln_z_shape + f.offset(),
            ln_z_shape,
            ..self.clone()
        })
    }

    /// `E,ln_w,w` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("E,ln_w,w\n");
        for (&e, &l) in self.grid.iter().zip(&self.ln_w) {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_real(e),
                fmt_real(l),
                fmt_real(l.exp())
            ));
        }
        out
    }
}

fn weighted_sum<T: Real>(dist: &EnergyDistribution<T>, g: impl Fn(T) -> T) -> T {
    let mut acc = NeumaierSum::new();
    for s in dist.segments() {
        let grid = &dist.grid()[s.start..s.end];
        let weights = trapezoid_weights(grid);
        for ((&e, &l), &c) in grid.iter().zip(&dist.ln_w()[s.start..s.end]).zip(&weights) {
            acc.add(c * l.exp() * g(e));
        }
    }
    acc.total()
}

/// Mean and width of `W` by compensated trapezoid sums.
pub fn moments<T: Real>(dist: &EnergyDistribution<T>) -> Moments<T> {
    let mass = weighted_sum(dist, |_| T::one());
    let mean = weighted_sum(dist, |e| e) / mass;
    let var = weighted_sum(dist, |e| (e - mean) * (e - mean)) / mass;
    let diverges = |order: T| match dist.tail_log_slope() {
        Some(q) => q > -(order + T::one()) - T::lit(1e-6),
        None => false,
    };
    Moments {
        mean,
        width: var.max(T::zero()).sqrt(),
        mean_divergent: diverges(T::one()),
        variance_divergent: diverges(T::lit(2.0)),
    }
}

/// Maximum of `W`, refined between the neighbours of the best grid point.
pub fn peak<T: Real>(dist: &EnergyDistribution<T>) -> Peak<T> {
    let ln_w = dist.ln_w();
    let grid = dist.grid();
    let mut i = 0;
    for (k, &v) in ln_w.iter().enumerate() {
        if v > ln_w[i] {
            i = k;
        }
    }
    let seg = dist
        .segments()
        .iter()
        .find(|s| s.start <= i && i < s.end)
        .expect("segments cover the grid");
    let lo = grid[if i > seg.start { i - 1 } else { i }];
    let hi = grid[if i + 1 < seg.end { i + 1 } else { i }];
    let scale = if grid[i] != T::zero() {
        grid[i].abs()
    } else {
        hi - lo
    };
    let tol = T::lit(1e-12) * scale;
    let f = |x: T| dist.ln_w_at(x);
    let mut x = golden_section_max(f, lo, hi, tol);
    if f(x) < ln_w[i] {
        x = grid[i];
    }
    let (first, last) = (grid[seg.start], grid[seg.end - 1]);
    let edge_tol = T::lit(1e-10) * scale;
    let at_boundary = (i == seg.start && (x - first).abs() <= edge_tol)
        || (i + 1 == seg.end && (x - last).abs() <= edge_tol);
    if at_boundary {
        x = if i == seg.start { first } else { last };
    } else if x > lo && x < hi {
        x = newton_polish(&dist.integrand(), x, lo, hi);
    }
    Peak {
        energy: x,
        ln_w: f(x),
        at_boundary,
    }
}

/// Saddle-point prediction for a profile vanishing at `E_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedPrediction<T> {
    /// `ε = 1/s'(E_max/N)`, the temperature at the edge.
    pub eps: T,
    /// `E_max - ε`.
    pub mean: T,
    /// `ε`.
    pub width: T,
    /// `1/s'` re-evaluated at the predicted mean, when defined there.
    pub eps_at_mean: Option<T>,
}

pub fn bounded_profile_prediction<T: Real>(
    model: &DensityOfStatesModel<T>,
    profile: &AmplitudeProfile<T>,
) -> Result<BoundedPrediction<T>> {
    let e_max = profile.upper_edge().ok_or_else(|| {
        Error::Contract("bounded prediction needs a profile with finite E_max".into())
    })?;
    let n = T::from_usize_lossy(model.particle_count());
    let d = model.entropy_derivatives(e_max / n)?;
    if !(d.ds > T::zero()) {
        return Err(Error::Contract(format!(
            "s'(E_max/N) = {} is not positive; E_max is not at positive temperature",
            d.ds
        )));
    }
    let eps = d.ds.recip();
    let mean = e_max - eps;
    let eps_at_mean = model
        .entropy_derivatives(mean / n)
        .ok()
        .filter(|d| d.ds > T::zero())
        .map(|d| d.ds.recip());
    Ok(BoundedPrediction {
        eps,
        mean,
        width: eps,
        eps_at_mean,
    })
}

/// Saddle-point prediction for an exponential-tail profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPrediction<T> {
    pub mean: T,
    pub width: T,
}

/// Solve `s'(Ē/N) = κ Ē^(κ-1) / Δ^κ` and evaluate the Gaussian width there.
pub fn tail_profile_prediction<T: Real>(
    model: &DensityOfStatesModel<T>,
    profile: &AmplitudeProfile<T>,
) -> Result<TailPrediction<T>> {
    let ProfileShape::ExponentialTail { delta, kappa, .. } = *profile.shape() else {
        return Err(Error::Contract(format!(
            "tail prediction needs an exponential-tail profile, got {}",
            profile.kind_name()
        )));
    };
    let n = T::from_usize_lossy(model.particle_count());
    let k = kappa;
    // (value, derivative) of s'(E/N) - κ E^(κ-1) / Δ^κ
    let g = |x: T| -> Option<(T, T)> {
        let d = model.entropy_derivatives(x / n).ok()?;
        let p = (x / delta).powf(k);
        let v = d.ds - k * p / x;
        let dv = d.d2s / n - k * (k - T::one()) * p / (x * x);
        (v.is_finite() && dv.is_finite()).then_some((v, dv))
    };
    let no_max = || {
        Error::NoMaximum(format!(
            "s'(E/N) never crosses κ E^(κ-1)/Δ^κ from above for κ = {k}, Δ = {delta}"
        ))
    };

    let (g0, _) = g(delta).ok_or_else(no_max)?;
    let (mut lo, mut hi) = (delta, delta);
    if g0 > T::zero() {
        let mut found = false;
        for _ in 0..MAX_DOUBLINGS {
            let y = hi + hi;
            match g(y) {
                Some((v, _)) if v <= T::zero() => {
                    lo = hi;
                    hi = y;
                    found = true;
                    break;
                }
                Some(_) => hi = y,
                None => break,
            }
        }
        if !found {
            return Err(no_max());
        }
    } else if g0 < T::zero() {
        let mut found = false;
        for _ in 0..MAX_DOUBLINGS {
            let y = lo * T::lit(0.5);
            match g(y) {
                Some((v, _)) if v >= T::zero() => {
                    hi = lo;
                    lo = y;
                    found = true;
                    break;
                }
                Some(_) => lo = y,
                None => break,
            }
        }
        if !found {
            return Err(no_max());
        }
    }

    // safeguarded Newton on [lo, hi] with g(lo) >= 0 >= g(hi)
    let mut x = if lo == hi {
        lo
    } else {
        T::lit(0.5) * (lo + hi)
    };
    for _ in 0..400 {
        if lo == hi {
            break;
        }
        let (v, dv) = g(x).ok_or_else(no_max)?;
        if v == T::zero() {
            break;
        }
        if v > T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - v / dv;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            T::lit(0.5) * (lo + hi)
        };
        let done =
            (next - x).abs() <= T::lit(4.0) * T::epsilon() * x.abs() || next == lo || next == hi;
        x = next;
        if done {
            break;
        }
    }

    let d = model.entropy_derivatives(x / n)?;
    let inner = d.d2s / n - (k - T::one()) * d.ds / x;
    if !(inner < T::zero()) {
        return Err(Error::NoMaximum(format!(
            "stationary point at E = {x} is not a maximum (curvature {inner})"
        )));
    }
    Ok(TailPrediction {
        mean: x,
        width: (-inner).sqrt().recip(),
    })
}

/// `S(E) = ln ΔΓ(E)` with the energy shell width set to one unit.
pub fn microcanonical_entropy<T: Real>(model: &DensityOfStatesModel<T>, energy: T) -> T {
    model.ln_density(energy)
}

/// Probability carried by each lump of a lumps profile.
pub fn lump_mass_fractions<T: Real>(dist: &EnergyDistribution<T>) -> Result<Vec<T>> {
    let ProfileShape::Lumps(lumps) = dist.profile().shape() else {
        return Err(Error::Contract(
            "lump fractions need a lumps profile".into(),
        ));
    };
    let mut out = vec![T::zero(); lumps.len()];
    for s in dist.segments() {
        out[s.component] = out[s.component] + s.ln_mass.exp();
    }
    Ok(out)
}

pub const SUMMARY_CSV_HEADER: &str = "N,E_mean,dE,ratio,E_peak,eps_pred,E_mean_pred,dE_pred,S";

/// Measured and predicted characteristics of one distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSummary<T> {
    pub n: usize,
    pub mean: T,
    pub width: T,
    pub ratio: T,
    pub peak: T,
    pub peak_at_boundary: bool,
    pub eps_pred: Option<T>,
    pub mean_pred: Option<T>,
    pub width_pred: Option<T>,
    /// Microcanonical entropy at the mean energy.
    pub entropy: T,
    pub converged: bool,
}

impl<T: Real> DistributionSummary<T> {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            fmt_real(self.mean),
            fmt_real(self.width),
            fmt_real(self.ratio),
            fmt_real(self.peak),
            fmt_opt(self.eps_pred),
            fmt_opt(self.mean_pred),
            fmt_opt(self.width_pred),
            fmt_real(self.entropy),
        )
    }
}

pub fn summarize<T: Real>(dist: &EnergyDistribution<T>) -> DistributionSummary<T> {
    let m = moments(dist);
    let pk = peak(dist);
    let (model, profile) = (dist.model(), dist.profile());
    let (eps_pred, mean_pred, width_pred) = match profile.shape() {
        ProfileShape::ExponentialTail { .. } => match tail_profile_prediction(model, profile) {
            Ok(p) => (None, Some(p.mean), Some(p.width)),
            Err(_) => (None, None, None),
        },
        _ => match bounded_profile_prediction(model, profile) {
            Ok(p) => (Some(p.eps), Some(p.mean), Some(p.width)),
            Err(_) => (None, None, None),
        },
    };
    DistributionSummary {
        n: model.particle_count(),
        mean: m.mean,
        width: m.width,
        ratio: m.ratio(),
        peak: pk.energy,
        peak_at_boundary: pk.at_boundary,
        eps_pred,
        mean_pred,
        width_pred,
        entropy: microcanonical_entropy(model, m.mean),
        converged: dist.converged(),
    }
}
