//! Bounded-variable revised primal simplex with an explicit dense basis
//! inverse. Rows with a single nonzero are folded into variable bounds before
//! the tableau is built. Phase one drives artificial columns out; Dantzig
//! pricing switches to Bland's rule after a run of degenerate pivots.

use super::{LinearProgram, LpError, LpSolution, LpStatus, Sense};

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Primal feasibility tolerance inside the solver.
    pub primal_tol: f64,
    /// Reduced-cost tolerance.
    pub dual_tol: f64,
    /// Smallest acceptable pivot magnitude.
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Pivots between refactorizations of the basis inverse.
    pub refactor_every: usize,
    /// Hard pivot limit; `None` derives one from the problem size.
    pub max_pivots: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            pivot_tol: 1e-9,
            bland_after: 50,
            refactor_every: 64,
            max_pivots: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free nonbasic variable resting at zero.
    Zero,
}

struct Tableau<'a> {
    opts: &'a SimplexOptions,
    m: usize,
    n_struct: usize,
    /// Sparse columns: structurals, then one logical per row, then artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Row-major dense inverse of the basis matrix.
    binv: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
    y: Vec<f64>,
    w: Vec<f64>,
}

enum Step {
    Optimal,
    Unbounded,
    Continue,
}

pub(super) fn solve(
    lp: &LinearProgram,
    opts: &SimplexOptions,
    bounds: Option<&[(f64, f64)]>,
    active: Option<&[bool]>,
) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    let mut lower: Vec<f64> = Vec::with_capacity(n);
    let mut upper: Vec<f64> = Vec::with_capacity(n);
    for (k, v) in lp.vars().iter().enumerate() {
        let (l, u) = bounds.map(|b| b[k]).unwrap_or((v.lower, v.upper));
        lower.push(l);
        upper.push(u);
    }
    let infeasible = |values: Vec<f64>| LpSolution {
        status: LpStatus::Infeasible,
        objective: f64::NAN,
        values,
        iterations: 0,
    };

    // fold singleton rows into bounds, keep the rest
    let mut kept = Vec::new();
    for (r, row) in lp.rows().iter().enumerate() {
        if let Some(mask) = active {
            if !mask[r] {
                continue;
            }
        }
        match row.coeffs.len() {
            0 => {
                let ok = match row.sense {
                    Sense::Le => 0.0 <= row.rhs + opts.primal_tol,
                    Sense::Ge => 0.0 >= row.rhs - opts.primal_tol,
                    Sense::Eq => row.rhs.abs() <= opts.primal_tol,
                };
                if !ok {
                    return Ok(infeasible(vec![0.0; n]));
                }
            }
            1 => {
                let (v, a) = row.coeffs[0];
                let b = row.rhs / a;
                let (tighten_upper, tighten_lower) = match (row.sense, a > 0.0) {
                    (Sense::Eq, _) => (true, true),
                    (Sense::Le, true) | (Sense::Ge, false) => (true, false),
                    (Sense::Ge, true) | (Sense::Le, false) => (false, true),
                };
                if tighten_upper {
                    upper[v.0] = upper[v.0].min(b);
                }
                if tighten_lower {
                    lower[v.0] = lower[v.0].max(b);
                }
            }
            _ => kept.push(r),
        }
    }
    for k in 0..n {
        if lower[k] > upper[k] + opts.primal_tol * (1.0 + lower[k].abs()) {
            return Ok(infeasible(vec![0.0; n]));
        }
        if lower[k] > upper[k] {
            // within tolerance: pin to a single point
            upper[k] = lower[k];
        }
    }

    let m = kept.len();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, &r) in kept.iter().enumerate() {
        for &(v, a) in &lp.rows()[r].coeffs {
            cols[v.0].push((i, a));
        }
    }
    // logical s_i = row activity, with bounds from the row sense
    for (i, &r) in kept.iter().enumerate() {
        let row = &lp.rows()[r];
        cols.push(vec![(i, -1.0)]);
        let (l, u) = match row.sense {
            Sense::Le => (f64::NEG_INFINITY, row.rhs),
            Sense::Ge => (row.rhs, f64::INFINITY),
            Sense::Eq => (row.rhs, row.rhs),
        };
        lower.push(l);
        upper.push(u);
    }

    let mut state = Vec::with_capacity(n + m);
    let mut x = vec![0.0; n + m];
    for k in 0..n {
        let (l, u) = (lower[k], upper[k]);
        let (s, v) = if l.is_finite() {
            (State::AtLower, l)
        } else if u.is_finite() {
            (State::AtUpper, u)
        } else {
            (State::Zero, 0.0)
        };
        state.push(s);
        x[k] = v;
    }
    let mut activity = vec![0.0; m];
    for k in 0..n {
        if x[k] != 0.0 {
            for &(i, a) in &cols[k] {
                activity[i] += a * x[k];
            }
        }
    }

    let mut basis = vec![0; m];
    let mut binv = vec![0.0; m * m];
    let first_artificial = n + m;
    let mut artificials = Vec::new();
    for i in 0..m {
        let s = n + i;
        let (l, u) = (lower[s], upper[s]);
        let act = activity[i];
        if act >= l - opts.primal_tol && act <= u + opts.primal_tol {
            state.push(State::Basic(i));
            x[s] = act;
            basis[i] = s;
            binv[i * m + i] = -1.0;
        } else {
            // logical parked at the violated bound, artificial absorbs the gap
            let (bound, st) = if act < l { (l, State::AtLower) } else { (u, State::AtUpper) };
            state.push(st);
            x[s] = bound;
            let sign = if bound - act > 0.0 { 1.0 } else { -1.0 };
            artificials.push((i, sign, (bound - act) * sign));
        }
    }
    for (i, sign, value) in artificials {
        basis[i] = cols.len();
        cols.push(vec![(i, sign)]);
        lower.push(0.0);
        upper.push(f64::INFINITY);
        x.push(value);
        state.push(State::Basic(i));
        binv[i * m + i] = sign;
    }

    let total = cols.len();
    let mut t = Tableau {
        opts,
        m,
        n_struct: n,
        cols,
        lower,
        upper,
        cost: vec![0.0; total],
        x,
        state,
        basis,
        binv,
        pivots: 0,
        since_refactor: 0,
        degenerate_run: 0,
        bland: false,
        y: vec![0.0; m],
        w: vec![0.0; m],
    };
    let max_pivots = opts
        .max_pivots
        .unwrap_or(20_000 + 50 * (t.m + t.n_struct));

    if total > first_artificial {
        for k in first_artificial..total {
            t.cost[k] = 1.0;
        }
        loop {
            match t.iterate()? {
                Step::Optimal => break,
                Step::Unbounded => {
                    return Err(LpError::Numerical("phase one reported unbounded".into()))
                }
                Step::Continue => {}
            }
            if t.pivots > max_pivots {
                return Err(LpError::PivotLimit(max_pivots));
            }
        }
        t.refactor()?;
        let infeas: f64 = (first_artificial..total).map(|k| t.x[k].max(0.0)).sum();
        let scale = 1.0 + lp.rows().iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if infeas > 1e-9 * scale {
            let mut values = t.x[..n].to_vec();
            values.truncate(n);
            let mut sol = infeasible(values);
            sol.iterations = t.pivots;
            return Ok(sol);
        }
        for k in first_artificial..total {
            t.upper[k] = 0.0;
            t.cost[k] = 0.0;
            if !matches!(t.state[k], State::Basic(_)) {
                t.state[k] = State::AtLower;
                t.x[k] = 0.0;
            }
        }
    }

    for (k, v) in lp.vars().iter().enumerate() {
        t.cost[k] = v.cost;
    }
    t.degenerate_run = 0;
    t.bland = false;
    loop {
        match t.iterate()? {
            Step::Optimal => break,
            Step::Unbounded => {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    objective: f64::NEG_INFINITY,
                    values: t.x[..n].to_vec(),
                    iterations: t.pivots,
                })
            }
            Step::Continue => {}
        }
        if t.pivots > max_pivots {
            return Err(LpError::PivotLimit(max_pivots));
        }
    }
    t.refactor()?;

    let mut values = t.x[..n].to_vec();
    for k in 0..n {
        values[k] = values[k].clamp(t.lower[k], t.upper[k]);
    }
    let objective = lp.objective_value(&values);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective,
        values,
        iterations: t.pivots,
    })
}

impl Tableau<'_> {
    fn is_fixed(&self, k: usize) -> bool {
        self.upper[k] - self.lower[k] <= 0.0
    }

    fn iterate(&mut self) -> Result<Step, LpError> {
        let m = self.m;
        // duals: y = c_B^T B^{-1}
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..m {
            let c = self.cost[self.basis[r]];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yj, b) in self.y.iter_mut().zip(row) {
                    *yj += c * b;
                }
            }
        }

        // pricing
        let mut entering: Option<(usize, f64, f64)> = None; // (var, reduced cost, direction)
        for k in 0..self.cols.len() {
            let st = self.state[k];
            if matches!(st, State::Basic(_)) || self.is_fixed(k) {
                continue;
            }
            let mut d = self.cost[k];
            for &(i, a) in &self.cols[k] {
                d -= self.y[i] * a;
            }
            let dir = match st {
                State::AtLower if d < -self.opts.dual_tol => 1.0,
                State::AtUpper if d > self.opts.dual_tol => -1.0,
                State::Zero if d.abs() > self.opts.dual_tol => -d.signum(),
                _ => continue,
            };
            if self.bland {
                entering = Some((k, d, dir));
                break;
            }
            if entering.map_or(true, |(_, best, _)| d.abs() > best.abs()) {
                entering = Some((k, d, dir));
            }
        }
        let Some((q, _, dir)) = entering else {
            return Ok(Step::Optimal);
        };

        // w = B^{-1} a_q
        self.w.iter_mut().for_each(|v| *v = 0.0);
        for &(k, a) in &self.cols[q] {
            for i in 0..m {
                self.w[i] += self.binv[i * m + k] * a;
            }
        }

        // ratio test; basic i moves by -dir * w_i per unit step
        let tol = self.opts.primal_tol;
        let piv_tol = self.opts.pivot_tol;
        let flip = self.upper[q] - self.lower[q];
        let mut limit = if flip.is_finite() { flip } else { f64::INFINITY };
        let mut leave: Option<usize> = None;
        if self.bland {
            for i in 0..m {
                let delta = -dir * self.w[i];
                let b = self.basis[i];
                let ratio = if delta < -piv_tol && self.lower[b].is_finite() {
                    ((self.x[b] - self.lower[b]) / -delta).max(0.0)
                } else if delta > piv_tol && self.upper[b].is_finite() {
                    ((self.upper[b] - self.x[b]) / delta).max(0.0)
                } else {
                    continue;
                };
                let better = match leave {
                    None => ratio < limit,
                    Some(r) => {
                        ratio < limit - 1e-12 || (ratio <= limit + 1e-12 && b < self.basis[r])
                    }
                };
                if better {
                    limit = ratio;
                    leave = Some(i);
                }
            }
        } else {
            // Harris two-pass: loosen bounds to find the step, then take the
            // largest pivot among rows that block within it
            let mut relaxed = limit;
            for i in 0..m {
                let delta = -dir * self.w[i];
                let b = self.basis[i];
                let ratio = if delta < -piv_tol && self.lower[b].is_finite() {
                    (self.x[b] - self.lower[b] + tol) / -delta
                } else if delta > piv_tol && self.upper[b].is_finite() {
                    (self.upper[b] - self.x[b] + tol) / delta
                } else {
                    continue;
                };
                relaxed = relaxed.min(ratio);
            }
            let mut best_piv = 0.0;
            for i in 0..m {
                let delta = -dir * self.w[i];
                let b = self.basis[i];
                let ratio = if delta < -piv_tol && self.lower[b].is_finite() {
                    (self.x[b] - self.lower[b]) / -delta
                } else if delta > piv_tol && self.upper[b].is_finite() {
                    (self.upper[b] - self.x[b]) / delta
                } else {
                    continue;
                };
                if ratio <= relaxed && delta.abs() > best_piv {
                    best_piv = delta.abs();
                    leave = Some(i);
                }
            }
            if let Some(r) = leave {
                let delta = -dir * self.w[r];
                let b = self.basis[r];
                let ratio = if delta < 0.0 {
                    (self.x[b] - self.lower[b]) / -delta
                } else {
                    (self.upper[b] - self.x[b]) / delta
                };
                let step = ratio.max(0.0);
                if flip.is_finite() && flip <= step {
                    leave = None;
                    limit = flip;
                } else {
                    limit = step;
                }
            }
        }

        if limit == f64::INFINITY {
            return Ok(Step::Unbounded);
        }
        let theta = limit;
        if theta <= 1e-12 {
            self.degenerate_run += 1;
            if self.degenerate_run >= self.opts.bland_after {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
        }

        // move along the edge
        if theta != 0.0 {
            self.x[q] += dir * theta;
            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= dir * theta * self.w[i];
            }
        }
        self.pivots += 1;

        match leave {
            None => {
                // bound flip of the entering variable
                self.state[q] = if dir > 0.0 { State::AtUpper } else { State::AtLower };
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            }
            Some(r) => {
                let b = self.basis[r];
                let delta = -dir * self.w[r];
                if delta < 0.0 {
                    self.state[b] = State::AtLower;
                    self.x[b] = self.lower[b];
                } else {
                    self.state[b] = State::AtUpper;
                    self.x[b] = self.upper[b];
                }
                if self.lower[b] == f64::NEG_INFINITY && self.upper[b] == f64::INFINITY {
                    self.state[b] = State::Zero;
                }
                self.basis[r] = q;
                self.state[q] = State::Basic(r);
                self.update_inverse(r)?;
                self.since_refactor += 1;
                if self.since_refactor >= self.opts.refactor_every {
                    self.refactor()?;
                }
            }
        }
        Ok(Step::Continue)
    }

    fn update_inverse(&mut self, r: usize) -> Result<(), LpError> {
        let m = self.m;
        let piv = self.w[r];
        if piv.abs() < 1e-13 {
            return Err(LpError::Numerical(format!("pivot {piv:e} too small")));
        }
        let inv = 1.0 / piv;
        for v in &mut self.binv[r * m..(r + 1) * m] {
            *v *= inv;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for (i, row) in before.chunks_exact_mut(m).enumerate() {
            let f = self.w[i];
            if f != 0.0 {
                for (a, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *a -= f * p;
                }
            }
        }
        for (k, row) in after.chunks_exact_mut(m).enumerate() {
            let f = self.w[r + 1 + k];
            if f != 0.0 {
                for (a, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *a -= f * p;
                }
            }
        }
        Ok(())
    }

    /// Recomputes the basis inverse from scratch and the basic values from
    /// the nonbasic ones.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut a = vec![0.0; m * m];
        for (c, &k) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[k] {
                a[i * m + c] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let (p, best) = (col..m)
                .map(|r| (r, a[r * m + col].abs()))
                .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-12 {
                return Err(LpError::Numerical("singular basis".into()));
            }
            if p != col {
                for j in 0..m {
                    a.swap(p * m + j, col * m + j);
                    inv.swap(p * m + j, col * m + j);
                }
            }
            let d = 1.0 / a[col * m + col];
            for j in 0..m {
                a[col * m + j] *= d;
                inv[col * m + j] *= d;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for j in 0..m {
                            a[r * m + j] -= f * a[col * m + j];
                            inv[r * m + j] -= f * inv[col * m + j];
                        }
                    }
                }
            }
        }
        self.binv = inv;

        // B x_B = -N x_N
        let mut rhs = vec![0.0; m];
        for k in 0..self.cols.len() {
            if matches!(self.state[k], State::Basic(_)) || self.x[k] == 0.0 {
                continue;
            }
            for &(i, v) in &self.cols[k] {
                rhs[i] -= v * self.x[k];
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let val: f64 = row.iter().zip(&rhs).map(|(b, v)| b * v).sum();
            self.x[self.basis[r]] = val;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn bounded_variables_flip() {
        // max x + y with x, y in [0, 1] and x + y <= 1.5
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 1.0, -1.0);
        let y = lp.add_var("y", 0.0, 1.0, -1.0);
        lp.add_row("r", vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.5);
        let s = lp.solve().unwrap();
        assert!((s.objective + 1.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_after_phase_one() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 10.0, 0.0);
        let y = lp.add_var("y", 0.0, 10.0, 0.0);
        lp.add_row("a", vec![(x, 1.0), (y, 1.0)], Sense::Ge, 25.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn iterations_are_reported() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY, 1.0);
        lp.add_row("a", vec![(x, 1.0), (y, 2.0)], Sense::Ge, 4.0);
        lp.add_row("b", vec![(x, 3.0), (y, 1.0)], Sense::Ge, 6.0);
        let s = lp.solve().unwrap();
        // vertex (1.6, 1.2)
        assert!((s.objective - 2.8).abs() < 1e-9);
        assert!(s.iterations >= 1);
    }
}
