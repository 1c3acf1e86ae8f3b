use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::partial;
use crate::spde::{assemble_elliptic, mean_stderr, EllipticOperator, Ensemble, SpdeTrajectory};
use crate::weight::CarlemanWeight;

use super::log_scale;

/// Named terms of the integrated weighted identity on `[delta, T]`, with
/// `v = theta y`, `Q(v) = -<A v, v>`, `I = A v + s lambda phi psi_t v` and
/// `rho = s lambda phi psi_t`.
///
/// Left side: `lhs_pairing + lhs_weight`. Right side: every other field
/// except the two `*_martingale` parts, which are the `dB` components
/// already contained in the left-side pairings.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityLedger {
    /// `-sum <theta_k I_k, dy_k - A y_k dt>`
    pub lhs_pairing: f64,
    pub lhs_pairing_martingale: f64,
    /// `lambda/4 sum <theta_k v_k, dy_k - A y_k dt>`
    pub lhs_weight: f64,
    pub lhs_weight_martingale: f64,
    /// Boundary flux of `b grad v (dv + lambda/4 v dt)`.
    pub boundary_divergence: f64,
    /// `1/2 [Q(v) - rho |v|^2 + lambda/4 |v|^2]` from `delta` to `T`.
    pub time_boundary: f64,
    /// `lambda/4 sum Q(v) dt - 1/2 sum (Q_{k+1} - Q_k)(v_k)`
    pub gradient_energy: f64,
    /// `-1/2 sum Q(dv)`
    pub gradient_variation: f64,
    /// `sum [rho_t/2 - lambda rho/4] |v|^2 dt`
    pub zero_order: f64,
    /// `sum [rho/2 - lambda/8] |dv|^2`
    pub zero_order_variation: f64,
    /// `sum |I|^2 dt`
    pub square: f64,
}

impl IdentityLedger {
    pub fn lhs(&self) -> f64 {
        self.lhs_pairing + self.lhs_weight
    }

    pub fn rhs(&self) -> f64 {
        self.boundary_divergence
            + self.time_boundary
            + self.gradient_energy
            + self.gradient_variation
            + self.zero_order
            + self.zero_order_variation
            + self.square
    }

    fn fields(&self) -> [f64; 11] {
        [
            self.lhs_pairing,
            self.lhs_pairing_martingale,
            self.lhs_weight,
            self.lhs_weight_martingale,
            self.boundary_divergence,
            self.time_boundary,
            self.gradient_energy,
            self.gradient_variation,
            self.zero_order,
            self.zero_order_variation,
            self.square,
        ]
    }

    fn from_fields(f: [f64; 11]) -> Self {
        Self {
            lhs_pairing: f[0],
            lhs_pairing_martingale: f[1],
            lhs_weight: f[2],
            lhs_weight_martingale: f[3],
            boundary_divergence: f[4],
            time_boundary: f[5],
            gradient_energy: f[6],
            gradient_variation: f[7],
            zero_order: f[8],
            zero_order_variation: f[9],
            square: f[10],
        }
    }

    /// Largest magnitude among the left side, the right side and every term.
    pub fn scale(&self) -> f64 {
        self.fields()
            .iter()
            .chain([self.lhs(), self.rhs()].iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `|lhs - rhs| / scale`, zero for an all-zero ledger.
    pub fn residual(&self) -> f64 {
        let s = self.scale();
        if s == 0.0 {
            0.0
        } else {
            (self.lhs() - self.rhs()).abs() / s
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentityReport {
    /// Ensemble means.
    pub terms: IdentityLedger,
    pub residual: f64,
    /// Standard errors of the two martingale columns.
    pub pairing_martingale_stderr: f64,
    pub weight_martingale_stderr: f64,
    /// Terms are multiplied by `exp(-2 log_scale)`.
    pub log_scale: f64,
    pub paths: usize,
}

impl IdentityReport {
    /// Both martingale means within `k` standard errors of zero (exact zero
    /// required when the standard error vanishes).
    pub fn martingales_within(&self, k: f64) -> bool {
        let ok = |m: f64, se: f64| m.abs() <= k * se || m == 0.0;
        ok(self.terms.lhs_pairing_martingale, self.pairing_martingale_stderr)
            && ok(self.terms.lhs_weight_martingale, self.weight_martingale_stderr)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn path_ledger(
    traj: &SpdeTrajectory,
    ens: &Ensemble,
    w: &CarlemanWeight,
    k0: usize,
    ls: f64,
    node_ops: &[Arc<EllipticOperator>],
) -> Result<IdentityLedger> {
    let solver = ens.solver();
    let grid = solver.grid();
    let tg = solver.time_grid();
    let n_steps = tg.steps();
    let dt = tg.dt();
    let hd = grid.cell_volume();
    let lam = w.lambda;
    let psi_t = w.psi.derivative();
    let psi_tt = w.psi.second_derivative();
    let theta = |k: usize| (w.log_theta(tg.time(k)) - ls).exp();
    let rho = |k: usize| w.s * lam * w.phi(tg.time(k)) * psi_t;
    let node_op = |k: usize| &node_ops[if node_ops.len() == 1 { 0 } else { k - k0 }];
    let v = |k: usize| -> Vec<f64> {
        let th = theta(k);
        traj.slice(k).iter().map(|y| th * y).collect()
    };

    let mut l = IdentityLedger::default();
    let (vt, v0) = (v(n_steps), v(k0));
    let boundary = |op: &EllipticOperator, vk: &[f64], k: usize| {
        0.5 * (op.energy(vk) - rho(k) * hd * dot(vk, vk) + 0.25 * lam * hd * dot(vk, vk))
    };
    l.time_boundary = boundary(node_op(n_steps), &vt, n_steps) - boundary(node_op(k0), &v0, k0);

    for k in k0..n_steps {
        let ak = solver.implicit_operator(k)?;
        let (yk, yk1) = (traj.slice(k), traj.slice(k + 1));
        let th = theta(k);
        let (vk, vk1) = (v(k), v(k + 1));
        let dv: Vec<f64> = vk1.iter().zip(&vk).map(|(a, b)| a - b).collect();
        let av = ak.apply(&vk);
        let r = rho(k);
        let ik: Vec<f64> = av.iter().zip(&vk).map(|(a, b)| a + r * b).collect();

        let ay = ak.apply(yk);
        let lk: Vec<f64> = (0..yk.len()).map(|i| yk1[i] - yk[i] - ay[i] * dt).collect();
        let (_, noise) = solver.explicit_parts(k, yk);
        let db = traj.path().increment(k);

        l.lhs_pairing -= hd * th * dot(&ik, &lk);
        l.lhs_pairing_martingale -= hd * th * dot(&ik, &noise) * db;
        l.lhs_weight += 0.25 * lam * hd * th * dot(&vk, &lk);
        l.lhs_weight_martingale += 0.25 * lam * hd * th * dot(&vk, &noise) * db;

        // Dirichlet data: v and dv vanish on the boundary nodes
        let (vf, dvf) = (grid.embed(&vk), grid.embed(&dv));
        for axis in 0..grid.dim() {
            let dn = partial(grid, &vf, axis);
            for idx in 0..vf.len() {
                if grid.is_boundary_full(idx) {
                    l.boundary_divergence += dn[idx] * (dvf[idx] + 0.25 * lam * vf[idx] * dt);
                }
            }
        }

        let qk = ak.energy(&vk);
        let b_rate = if node_ops.len() == 1 {
            0.0
        } else {
            node_op(k + 1).energy(&vk) - node_op(k).energy(&vk)
        };
        l.gradient_energy += 0.25 * lam * qk * dt - 0.5 * b_rate;
        l.gradient_variation -= 0.5 * ak.energy(&dv);

        let rho_t = w.s * lam * w.phi(tg.time(k)) * (lam * psi_t * psi_t + psi_tt);
        l.zero_order += (0.5 * rho_t - 0.25 * lam * r) * hd * dot(&vk, &vk) * dt;
        l.zero_order_variation += (0.5 * r - 0.125 * lam) * hd * dot(&dv, &dv);
        l.square += hd * dot(&ik, &ik) * dt;
    }
    Ok(l)
}

/// Evaluates every term of the integrated weighted identity on
/// `[t_{k_delta}, T]` along each path and averages over the ensemble.
///
/// Exact to round-off when `s = 0`; otherwise the residual is the time
/// discretization error of the weight and shrinks with `dt`.
pub fn integrated_identity_residual(ens: &Ensemble, w: &CarlemanWeight, k_delta: usize) -> Result<IdentityReport> {
    let solver = ens.solver();
    let tg = solver.time_grid();
    let n = tg.steps();
    if k_delta >= n {
        return Err(Error::Precondition(format!(
            "delta index {k_delta} must lie before the horizon ({n} steps)"
        )));
    }
    let ls = log_scale(w, tg, k_delta, n)?;
    let c = solver.coeffs();
    let node_ops: Vec<Arc<EllipticOperator>> = if c.b_autonomous {
        vec![Arc::new(assemble_elliptic(solver.grid(), c, 0.0))]
    } else {
        (k_delta..=n)
            .map(|k| Arc::new(assemble_elliptic(solver.grid(), c, tg.time(k))))
            .collect()
    };
    let ledgers: Vec<Result<IdentityLedger>> =
        ens.map(|traj| path_ledger(traj, ens, w, k_delta, ls, &node_ops).map_err(|e| e.to_string()))?
            .into_iter()
            .map(|r| r.map_err(Error::Precondition))
            .collect();
    let ledgers: Vec<IdentityLedger> = ledgers.into_iter().collect::<Result<_>>()?;
    let m = ledgers.len();
    let mut mean = [0.0; 11];
    for l in &ledgers {
        for (acc, v) in mean.iter_mut().zip(l.fields()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let terms = IdentityLedger::from_fields(mean);
    let col = |f: fn(&IdentityLedger) -> f64| mean_stderr(&ledgers.iter().map(f).collect::<Vec<_>>()).1;
    Ok(IdentityReport {
        terms,
        residual: terms.residual(),
        pairing_martingale_stderr: col(|l| l.lhs_pairing_martingale),
        weight_martingale_stderr: col(|l| l.lhs_weight_martingale),
        log_scale: ls,
        paths: m,
    })
}
