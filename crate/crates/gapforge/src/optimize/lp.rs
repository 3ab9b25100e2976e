//! Grid occupation-measure LP with a Liouville constraint over a polynomial test family.
//!
//! Time is shifted to `[0, T]`, `T = 2a_δ`. Columns are Dirac masses at
//! (Gauss time point, state node, control atom) plus terminal masses on target nodes.

use serde::{Deserialize, Serialize};

use crate::costs::{lagrangian, LagrangianKind};
use crate::domain::{in_target, Instance, StateConstraint};
use crate::error::{GapError, Result};
use crate::geometry::{controlled_field, eta, phi, Control, Point, CORNERS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LpSolver {
    InteriorPoint,
    Pdhg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationGrid {
    /// Time cells on `[0, T]`.
    pub cells: usize,
    /// Gauss points per cell.
    pub gauss: usize,
    pub time_degree: usize,
    pub state_degree: usize,
    /// Multiplier of `x2..xd` in the test family.
    pub state_scale: f64,
    /// Add nodes on the tube axis `φ(s, 0, ξ_b(s))` for `|s| <= a`.
    pub axis_nodes: bool,
    pub atoms: Vec<Control>,
    pub solver: LpSolver,
}

impl Default for OccupationGrid {
    fn default() -> Self {
        OccupationGrid {
            cells: 10,
            gauss: 6,
            time_degree: 2,
            state_degree: 10,
            state_scale: 50.0,
            axis_nodes: true,
            atoms: CORNERS.to_vec(),
            solver: LpSolver::InteriorPoint,
        }
    }
}

impl OccupationGrid {
    /// One refinement step: twice the time cells and two more state degrees.
    pub fn refined(&self) -> Self {
        OccupationGrid { cells: 2 * self.cells, state_degree: self.state_degree + 2, ..self.clone() }
    }
}

/// Dense LP `min cᵀx, Ax = b, x >= 0`, column-major.
#[derive(Clone, Debug)]
pub struct DenseLp {
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl DenseLp {
    pub fn col(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (o, a) in out.iter_mut().zip(self.col(j)) {
                    *o += a * xj;
                }
            }
        }
        out
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| dot(self.col(j), y)).collect()
    }

    /// `‖Ax − b‖ / (1 + ‖b‖)`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let r: Vec<f64> = self.mul(x).iter().zip(&self.b).map(|(a, b)| a - b).collect();
        norm(&r) / (1.0 + norm(&self.b))
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Legendre values and derivatives `P_0..P_n` at `s`.
pub fn legendre(n: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n + 1];
    let mut dp = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = s;
        dp[1] = 1.0;
    }
    for k in 1..n {
        p[k + 1] = ((2 * k + 1) as f64 * s * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
        dp[k + 1] = dp[k - 1] + (2 * k + 1) as f64 * p[k];
    }
    (p, dp)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p[n] / dp[n];
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp[n] * dp[n]);
    }
    (x, w)
}

/// Column bookkeeping of an assembled LP.
#[derive(Clone, Debug)]
pub struct OccupationLp {
    pub lp: DenseLp,
    pub times: Vec<f64>,
    pub time_weights: Vec<f64>,
    pub nodes: Vec<Point>,
    /// `(time index, node index, atom index)` per running column.
    pub running: Vec<(usize, usize, usize)>,
    /// Node index per terminal column, after the running columns.
    pub terminal: Vec<usize>,
    pub horizon: f64,
}

impl OccupationLp {
    pub fn running_column(&self, ti: usize, ni: usize, ai: usize) -> Option<usize> {
        self.running.binary_search(&(ti, ni, ai)).ok()
    }
}

fn round13(v: f64) -> f64 {
    (v * 1e13).round() / 1e13
}

pub fn build_occupation_lp(inst: &Instance, grid: &OccupationGrid) -> Result<OccupationLp> {
    if grid.cells == 0 || grid.gauss == 0 || grid.atoms.is_empty() {
        return Err(GapError::Precondition("empty occupation grid".into()));
    }
    let d = inst.d;
    let la = inst.lambda * inst.a;
    let ad = inst.a_delta();
    let horizon = 2.0 * ad;
    let h = horizon / grid.cells as f64;
    let (gx, gw) = gauss_legendre(grid.gauss);
    let mut times = Vec::new();
    let mut time_weights = Vec::new();
    for c in 0..grid.cells {
        for (x, w) in gx.iter().zip(&gw) {
            times.push(c as f64 * h + (x + 1.0) * h / 2.0);
            time_weights.push(w * h / 2.0);
        }
    }
    let mut s1: Vec<f64> = times.iter().map(|t| round13((t - ad).clamp(-la, la))).collect();
    s1.push(-la);
    s1.push(la);
    s1.sort_by(f64::total_cmp);
    s1.dedup();
    let mut nodes: Vec<Point> = Vec::new();
    for &s in &s1 {
        nodes.push(eta(s, d));
        if grid.axis_nodes && s.abs() <= inst.a {
            let mut y = vec![0.0; d];
            y[0] = s;
            let [c, sn] = inst.spiral_center_tail(s);
            y[d - 2] = c;
            y[d - 1] = sn;
            nodes.push(phi(&y));
        }
    }
    let (dt, dx) = (grid.time_degree, grid.state_degree);
    let n_mult = d;
    let m = (dt + 1) * (dx + 1) * n_mult;
    let row = |i: usize, j: usize, e: usize| (i * (dx + 1) + j) * n_mult + e;
    let mult = |x: &[f64], e: usize| if e == 0 { 1.0 } else { grid.state_scale * x[e] };

    let mut a = Vec::new();
    let mut c = Vec::new();
    let mut running = Vec::new();
    let node_leg: Vec<(Vec<f64>, Vec<f64>)> = nodes.iter().map(|x| legendre(dx, x[0] / la)).collect();
    for (ti, &t) in times.iter().enumerate() {
        let (pt, dpt) = legendre(dt, 2.0 * t / horizon - 1.0);
        for (ni, x) in nodes.iter().enumerate() {
            if x[0] + la > t + 1e-12 || la - x[0] > horizon - t + 1e-12 {
                continue;
            }
            let (px, dpx) = &node_leg[ni];
            for (ai, &u) in grid.atoms.iter().enumerate() {
                let f = controlled_field(x, u);
                let mut col = vec![0.0; m];
                for i in 0..=dt {
                    for j in 0..=dx {
                        for e in 0..n_mult {
                            let me = mult(x, e);
                            let mut v = dpt[i] * 2.0 / horizon * px[j] * me + pt[i] * dpx[j] / la * me * f[0];
                            if e > 0 {
                                v += pt[i] * px[j] * grid.state_scale * f[e];
                            }
                            col[row(i, j, e)] = v;
                        }
                    }
                }
                a.extend_from_slice(&col);
                c.push(lagrangian(LagrangianKind::VeeVee, x, u, inst));
                running.push((ti, ni, ai));
            }
        }
    }
    let (pt1, _) = legendre(dt, 1.0);
    let mut terminal = Vec::new();
    for (ni, x) in nodes.iter().enumerate() {
        if !in_target(x, inst, StateConstraint::Omega) {
            continue;
        }
        let (px, _) = &node_leg[ni];
        let mut col = vec![0.0; m];
        for i in 0..=dt {
            for j in 0..=dx {
                for e in 0..n_mult {
                    col[row(i, j, e)] = -pt1[i] * px[j] * mult(x, e);
                }
            }
        }
        a.extend_from_slice(&col);
        c.push(0.0);
        terminal.push(ni);
    }
    if terminal.is_empty() {
        return Err(GapError::Precondition("no grid node lies in the target".into()));
    }
    let (pt0, _) = legendre(dt, -1.0);
    let (px0, _) = legendre(dx, -1.0);
    let mut b = vec![0.0; m];
    for i in 0..=dt {
        for j in 0..=dx {
            b[row(i, j, 0)] = -pt0[i] * px0[j];
        }
    }
    let n = c.len();
    Ok(OccupationLp { lp: DenseLp { m, n, a, b, c }, times, time_weights, nodes, running, terminal, horizon })
}

/// Masses of the reference relaxed minimizer on the grid: corner mixtures along η.
pub fn assemble_reference_measure(inst: &Instance, olp: &OccupationLp, grid: &OccupationGrid) -> Result<Vec<f64>> {
    let la = inst.lambda * inst.a;
    let ad = inst.a_delta();
    let mut x = vec![0.0; olp.lp.n];
    let find_node = |s: f64| olp.nodes.iter().position(|p| p[0] == s && p[1..].iter().all(|v| *v == 0.0));
    let atom = |u: Control| grid.atoms.iter().position(|&a| a == u);
    for (ti, &t) in olp.times.iter().enumerate() {
        let s = round13((t - ad).clamp(-la, la));
        let ni = find_node(s).ok_or_else(|| GapError::Precondition(format!("no node at {s}")))?;
        let moving = t - ad > -la && t - ad < la;
        let mix: Vec<(Control, f64)> = if moving {
            vec![(CORNERS[0], 0.5), (CORNERS[1], 0.5)]
        } else {
            CORNERS.iter().map(|&u| (u, 0.25)).collect()
        };
        for (u, w) in mix {
            let ai = atom(u).ok_or_else(|| GapError::Precondition("grid atoms must contain the corners".into()))?;
            let col = olp
                .running_column(ti, ni, ai)
                .ok_or_else(|| GapError::Precondition("reference column pruned".into()))?;
            x[col] += w * olp.time_weights[ti];
        }
    }
    let end = find_node(round13(la)).unwrap();
    let k = olp.terminal.iter().position(|&n| n == end).ok_or_else(|| GapError::Precondition("x1 is not a terminal node".into()))?;
    x[olp.running.len() + k] = 1.0;
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpOutcome {
    pub value: f64,
    /// `‖Ax − b‖/(1 + ‖b‖)` on the row-normalized system.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub solver: LpSolver,
    pub rows: usize,
    pub cols: usize,
}

/// Rows scaled to unit max-norm.
fn row_normalized(lp: &DenseLp) -> DenseLp {
    let mut scale = vec![0.0f64; lp.m];
    for j in 0..lp.n {
        for (s, a) in scale.iter_mut().zip(lp.col(j)) {
            *s = s.max(a.abs());
        }
    }
    let scale: Vec<f64> = scale.iter().map(|s| if *s > 0.0 { 1.0 / s } else { 1.0 }).collect();
    let mut out = lp.clone();
    for j in 0..lp.n {
        for (i, v) in out.a[j * lp.m..(j + 1) * lp.m].iter_mut().enumerate() {
            *v *= scale[i];
        }
    }
    for (i, v) in out.b.iter_mut().enumerate() {
        *v *= scale[i];
    }
    out
}

/// Relative KKT error at which the interior point method stops.
pub const IPM_TOL: f64 = 1e-7;

pub fn occupation_lp(inst: &Instance, grid: &OccupationGrid) -> Result<(LpOutcome, Vec<f64>)> {
    let olp = build_occupation_lp(inst, grid)?;
    let scaled = row_normalized(&olp.lp);
    let (x, y, iterations) = match grid.solver {
        LpSolver::InteriorPoint => interior_point(&scaled, IPM_TOL, 200)?,
        LpSolver::Pdhg => pdhg(&scaled, &PdhgConfig::default())?,
    };
    let rc: Vec<f64> = scaled.mul_t(&y).iter().zip(&scaled.c).map(|(aty, c)| (c - aty).min(0.0)).collect();
    let value = scaled.objective(&x);
    let dobj = dot(&scaled.b, &y);
    Ok((
        LpOutcome {
            value,
            primal_residual: scaled.primal_residual(&x),
            dual_residual: norm(&rc) / (1.0 + norm(&scaled.c)),
            gap: (value - dobj).abs() / (1.0 + value.abs() + dobj.abs()),
            iterations,
            solver: grid.solver,
            rows: scaled.m,
            cols: scaled.n,
        },
        x,
    ))
}

/// Residual and objective of a given measure on the row-normalized system.
pub fn measure_report(inst: &Instance, grid: &OccupationGrid, x: &[f64]) -> Result<(f64, f64)> {
    let olp = build_occupation_lp(inst, grid)?;
    let scaled = row_normalized(&olp.lp);
    Ok((scaled.primal_residual(x), scaled.objective(x)))
}

/// In-place lower Cholesky of a row-major SPD matrix; false when not positive definite.
fn cholesky(g: &mut [f64], m: usize) -> bool {
    for j in 0..m {
        let mut s = g[j * m + j];
        for k in 0..j {
            s -= g[j * m + k] * g[j * m + k];
        }
        if !(s > 0.0) {
            return false;
        }
        let l = s.sqrt();
        g[j * m + j] = l;
        for i in j + 1..m {
            let mut v = g[i * m + j];
            for k in 0..j {
                v -= g[i * m + k] * g[j * m + k];
            }
            g[i * m + j] = v / l;
        }
    }
    true
}

fn chol_solve(l: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..m {
        for k in 0..i {
            z[i] -= l[i * m + k] * z[k];
        }
        z[i] /= l[i * m + i];
    }
    for i in (0..m).rev() {
        for k in i + 1..m {
            z[i] -= l[k * m + i] * z[k];
        }
        z[i] /= l[i * m + i];
    }
    z
}

/// Drops linearly dependent rows by modified Gram–Schmidt.
fn independent_rows(lp: &DenseLp) -> Vec<usize> {
    let rows: Vec<Vec<f64>> = (0..lp.m).map(|i| (0..lp.n).map(|j| lp.a[j * lp.m + i]).collect()).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let n0 = norm(r);
        if n0 == 0.0 {
            continue;
        }
        let mut v = r.clone();
        for _ in 0..2 {
            for q in &basis {
                let p = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let nv = norm(&v);
        if nv > 1e-7 * n0 {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v);
            keep.push(i);
        }
    }
    keep
}

fn sub_rows(lp: &DenseLp, keep: &[usize]) -> DenseLp {
    let m = keep.len();
    let mut a = Vec::with_capacity(m * lp.n);
    for j in 0..lp.n {
        let col = lp.col(j);
        a.extend(keep.iter().map(|&i| col[i]));
    }
    DenseLp { m, n: lp.n, a, b: keep.iter().map(|&i| lp.b[i]).collect(), c: lp.c.clone() }
}

/// `A diag(d) Aᵀ` (row-major, lower triangle filled).
fn normal_matrix(lp: &DenseLp, d: &[f64], out: &mut [f64]) {
    let m = lp.m;
    out.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..lp.n {
        let col = lp.col(j);
        let dj = d[j];
        for i in 0..m {
            let ci = col[i] * dj;
            if ci == 0.0 {
                continue;
            }
            let row = &mut out[i * m..i * m + i + 1];
            for (o, ck) in row.iter_mut().zip(&col[..=i]) {
                *o += ci * ck;
            }
        }
    }
}

/// Mehrotra predictor–corrector interior point method on the row-reduced system.
/// Returns primal, dual and the iteration count.
pub fn interior_point(full: &DenseLp, tol: f64, max_iter: usize) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let keep = independent_rows(full);
    let lp = sub_rows(full, &keep);
    let (m, n) = (lp.m, lp.n);
    let mut g = vec![0.0; m * m];
    let factor = |d: &[f64], g: &mut Vec<f64>| -> bool {
        normal_matrix(&lp, d, g);
        let tr: f64 = (0..m).map(|i| g[i * m + i]).sum::<f64>() / m as f64;
        for i in 0..m {
            g[i * m + i] += 1e-13 * tr;
        }
        cholesky(g, m)
    };
    // starting point
    let ones = vec![1.0; n];
    if !factor(&ones, &mut g) {
        return Err(GapError::SolverStall { iterations: 0, kkt: f64::INFINITY });
    }
    let mut x = lp.mul_t(&chol_solve(&g, m, &lp.b));
    let mut y = chol_solve(&g, m, &lp.mul(&lp.c));
    let aty = lp.mul_t(&y);
    let mut s: Vec<f64> = lp.c.iter().zip(&aty).map(|(c, a)| c - a).collect();
    let dx = (-1.5 * x.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
    let ds = (-1.5 * s.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0);
    x.iter_mut().for_each(|v| *v += dx + 1e-8);
    s.iter_mut().for_each(|v| *v += ds + 1e-8);
    let xs = dot(&x, &s);
    let (sx, ss): (f64, f64) = (x.iter().sum(), s.iter().sum());
    x.iter_mut().for_each(|v| *v += 0.5 * xs / ss);
    s.iter_mut().for_each(|v| *v += 0.5 * xs / sx);

    let nb = norm(&lp.b);
    let nc = norm(&lp.c);
    let mu0 = dot(&x, &s) / n as f64;
    let mut best = f64::INFINITY;
    let mut best_x = x.clone();
    let mut best_y = y.clone();
    let lift_dual = |ys: &[f64]| {
        let mut out = vec![0.0; full.m];
        for (k, &i) in keep.iter().enumerate() {
            out[i] = ys[k];
        }
        out
    };
    let mut iters = 0;
    for it in 0..max_iter {
        iters = it + 1;
        let ax = lp.mul(&x);
        let rp: Vec<f64> = lp.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = lp.mul_t(&y);
        let rd: Vec<f64> = (0..n).map(|j| lp.c[j] - aty[j] - s[j]).collect();
        let mu = dot(&x, &s) / n as f64;
        let pobj = dot(&lp.c, &x);
        let dobj = dot(&lp.b, &y);
        let kkt = (norm(&rp) / (1.0 + nb)).max(norm(&rd) / (1.0 + nc)).max((pobj - dobj).abs() / (1.0 + pobj.abs()));
        if kkt < best {
            best = kkt;
            best_x = x.clone();
            best_y = y.clone();
        }
        if kkt <= tol {
            return Ok((x, lift_dual(&y), it));
        }
        if mu > 1e12 * mu0 {
            break;
        }
        if mu < 1e-18 * (1.0 + pobj.abs()) {
            break;
        }
        let d: Vec<f64> = (0..n).map(|j| x[j] / s[j]).collect();
        if !factor(&d, &mut g) {
            break;
        }
        let solve = |rc: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            // Δx = S⁻¹rc − D rd + D AᵀΔy,  A D Aᵀ Δy = rp − A(S⁻¹rc − D rd)
            let w: Vec<f64> = (0..n).map(|j| rc[j] / s[j] - d[j] * rd[j]).collect();
            let aw = lp.mul(&w);
            let rhs: Vec<f64> = rp.iter().zip(&aw).map(|(a, b)| a - b).collect();
            let mut dy = chol_solve(&g, m, &rhs);
            for _ in 0..3 {
                let ad: Vec<f64> = lp.mul_t(&dy).iter().zip(&d).map(|(v, dj)| v * dj).collect();
                let r: Vec<f64> = rhs.iter().zip(lp.mul(&ad)).map(|(a, b)| a - b).collect();
                let corr = chol_solve(&g, m, &r);
                dy.iter_mut().zip(&corr).for_each(|(a, b)| *a += b);
            }
            let atdy = lp.mul_t(&dy);
            let dxv: Vec<f64> = (0..n).map(|j| w[j] + d[j] * atdy[j]).collect();
            let dsv: Vec<f64> = (0..n).map(|j| rd[j] - atdy[j]).collect();
            (dxv, dy, dsv)
        };
        let step = |v: &[f64], dv: &[f64]| -> f64 {
            let mut a: f64 = 1.0;
            for (vi, di) in v.iter().zip(dv) {
                if *di < 0.0 {
                    a = a.min(-vi / di);
                }
            }
            a
        };
        let rc_aff: Vec<f64> = (0..n).map(|j| -x[j] * s[j]).collect();
        let (dxa, _, dsa) = solve(&rc_aff);
        let (ap, ad) = (step(&x, &dxa), step(&s, &dsa));
        let mu_aff = (0..n).map(|j| (x[j] + ap * dxa[j]) * (s[j] + ad * dsa[j])).sum::<f64>() / n as f64;
        let sigma = (mu_aff / mu).powi(3);
        let rc: Vec<f64> = (0..n).map(|j| -x[j] * s[j] - dxa[j] * dsa[j] + sigma * mu).collect();
        let (dxv, dy, dsv) = solve(&rc);
        let ap = (0.995 * step(&x, &dxv)).min(1.0);
        let ad = (0.995 * step(&s, &dsv)).min(1.0);
        for j in 0..n {
            x[j] += ap * dxv[j];
            s[j] += ad * dsv[j];
        }
        for i in 0..m {
            y[i] += ad * dy[i];
        }
    }
    if best <= 10.0 * tol {
        return Ok((best_x, lift_dual(&best_y), iters));
    }
    Err(GapError::SolverStall { iterations: iters, kkt: best })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdhgConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations without a 1% improvement of the best KKT error before SOLVER_STALL.
    pub stall_window: usize,
}

impl Default for PdhgConfig {
    fn default() -> Self {
        PdhgConfig { tol: 1e-4, max_iter: 1_000_000, stall_window: 10_000 }
    }
}

/// Restarted PDHG with Ruiz equilibration and primal weight updates.
pub fn pdhg(lp: &DenseLp, cfg: &PdhgConfig) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let (m, n) = (lp.m, lp.n);
    let mut a = lp.a.clone();
    let mut d1 = vec![1.0; m];
    let mut d2 = vec![1.0; n];
    for _ in 0..20 {
        let mut r = vec![0.0f64; m];
        let mut s = vec![0.0f64; n];
        for j in 0..n {
            for i in 0..m {
                let v = a[j * m + i].abs();
                r[i] = r[i].max(v);
                s[j] = s[j].max(v);
            }
        }
        let r: Vec<f64> = r.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        let s: Vec<f64> = s.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        for j in 0..n {
            for i in 0..m {
                a[j * m + i] /= r[i] * s[j];
            }
            d2[j] /= s[j];
        }
        for i in 0..m {
            d1[i] /= r[i];
        }
    }
    let sc = DenseLp { m, n, a, b: lp.b.iter().zip(&d1).map(|(b, d)| b * d).collect(), c: lp.c.iter().zip(&d2).map(|(c, d)| c * d).collect() };
    // power iteration for ‖A‖
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut op = 1.0;
    for _ in 0..100 {
        let w = sc.mul_t(&sc.mul(&v));
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        op = nw.sqrt();
        v = w.iter().map(|x| x / nw).collect();
    }
    let step = 0.9 / op;
    let nb = norm(&sc.b);
    let ncn = norm(&sc.c);
    let kkt = |x: &[f64], y: &[f64]| -> f64 {
        let ax = sc.mul(x);
        let pr = ax.iter().zip(&sc.b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / (1.0 + nb);
        let aty = sc.mul_t(y);
        let dr = aty.iter().zip(&sc.c).map(|(a, c)| (c - a).min(0.0).powi(2)).sum::<f64>().sqrt() / (1.0 + ncn);
        let (po, dobj) = (dot(&sc.c, x), dot(&sc.b, y));
        pr.max(dr).max((po - dobj).abs() / (1.0 + po.abs() + dobj.abs()))
    };
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; m];
    let mut xa = x.clone();
    let mut ya = y.clone();
    let mut cnt = 0usize;
    let mut omega: f64 = 1.0;
    let mut last = kkt(&x, &y);
    let (mut x0r, mut y0r) = (x.clone(), y.clone());
    let mut best = f64::INFINITY;
    let mut best_at = 0;
    let mut it = 0;
    while it < cfg.max_iter {
        let aty = sc.mul_t(&y);
        let xn: Vec<f64> = (0..n).map(|j| (x[j] - step / omega * (sc.c[j] - aty[j])).max(0.0)).collect();
        let xe: Vec<f64> = (0..n).map(|j| 2.0 * xn[j] - x[j]).collect();
        let axe = sc.mul(&xe);
        for i in 0..m {
            y[i] += step * omega * (sc.b[i] - axe[i]);
        }
        x = xn;
        it += 1;
        cnt += 1;
        let inv = 1.0 / cnt as f64;
        for j in 0..n {
            xa[j] += (x[j] - xa[j]) * inv;
        }
        for i in 0..m {
            ya[i] += (y[i] - ya[i]) * inv;
        }
        if it % 64 == 0 {
            let kc = kkt(&x, &y);
            let ka = kkt(&xa, &ya);
            let (cx, cy, ck) = if ka < kc { (xa.clone(), ya.clone(), ka) } else { (x.clone(), y.clone(), kc) };
            if ck < best * 0.99 {
                best = ck;
                best_at = it;
            }
            if ck <= 0.2 * last || cnt >= 2000 {
                let dx = cx.iter().zip(&x0r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let dy = cy.iter().zip(&y0r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if dx > 1e-10 && dy > 1e-10 {
                    omega = (0.5 * (dy / dx).ln() + 0.5 * omega.ln()).exp();
                }
                x = cx;
                y = cy;
                x0r = x.clone();
                y0r = y.clone();
                xa = x.clone();
                ya = y.clone();
                cnt = 0;
                last = ck;
            }
            if ck <= cfg.tol {
                let xo = x.iter().zip(&d2).map(|(a, d)| a * d).collect();
                let yo = y.iter().zip(&d1).map(|(a, d)| a * d).collect();
                return Ok((xo, yo, it));
            }
            if it - best_at >= cfg.stall_window {
                return Err(GapError::SolverStall { iterations: it, kkt: best });
            }
        }
    }
    Err(GapError::SolverStall { iterations: it, kkt: best })
}
