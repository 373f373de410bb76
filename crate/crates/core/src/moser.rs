//! Moser iteration as a numeric certificate: the exponent ladder
//! `q_n = beta^n`, Young constants, the `M_q` recurrence (carried in log
//! space), the products `Phi`, `Psi`, the q-Pochhammer constant `rho` and the
//! closed-form cap on `M_{q_n}^{1/q_n}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio of the exponent ladder.
pub const BETA: f64 = 1.5;

/// Longest index scanned for `n0` and `N0`.
pub const SCAN_HORIZON: usize = 64;

/// Relative change of the normalized sequence below which it counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Agreement required between the direct and recurrence forms of `Psi`.
const PSI_AGREEMENT: f64 = 1e-12;

/// `(a; q)_inf = prod_{j >= 0} (1 - a q^j)`.
///
/// Stops once the remaining factors provably change the product by at most
/// `tol`: with `x_j = a q^j` and `|x_j| <= 1/2`, `|log(1 - x)| <= 2|x|`, so the
/// tail lies within a factor `exp(+-delta)`, `delta = 2|a||q|^n / (1 - |q|)`.
pub fn q_pochhammer(a: f64, q: f64, tol: f64) -> Result<f64> {
    if !(q.abs() < 1.0) {
        return Err(Error::Domain(format!("q-Pochhammer needs |q| < 1, got q = {q}")));
    }
    if !(tol > 0.0) || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("need finite a and tol > 0, got a = {a}, tol = {tol}")));
    }
    let mut product: f64 = 1.0;
    let mut term = a;
    for _ in 0..100_000 {
        let tail = term.abs();
        if tail <= 0.5 {
            let delta = 2.0 * tail / (1.0 - q.abs());
            if product.abs() * delta.exp_m1() <= tol {
                return Ok(product);
            }
        }
        product *= 1.0 - term;
        if product == 0.0 {
            return Ok(0.0);
        }
        term *= q;
    }
    Err(Error::Domain(format!("q-Pochhammer ({a}; {q}) did not reach tolerance {tol}")))
}

/// Generalized Poincare constants `l -> C_l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoincareConstants {
    Constant(f64),
    /// `(l, C_l)` pairs, linearly interpolated and clamped at the ends.
    Table(Vec<[f64; 2]>),
}

impl Default for PoincareConstants {
    fn default() -> Self {
        PoincareConstants::Constant(1.0)
    }
}

impl PoincareConstants {
    fn validate(&self) -> Result<()> {
        match self {
            PoincareConstants::Constant(c) if *c >= 1.0 && c.is_finite() => Ok(()),
            PoincareConstants::Constant(c) => Err(Error::InvalidArgument(format!("C_l must be >= 1, got {c}"))),
            PoincareConstants::Table(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidArgument("C_l table is empty".into()));
                }
                for w in points.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::InvalidArgument("C_l table abscissae must increase".into()));
                    }
                }
                match points.iter().find(|p| !(p[1] >= 1.0 && p[1].is_finite() && p[0].is_finite())) {
                    Some(p) => {
                        Err(Error::InvalidArgument(format!("C_l table entry {p:?} must be finite with C_l >= 1")))
                    }
                    None => Ok(()),
                }
            }
        }
    }

    pub fn at(&self, ell: f64) -> f64 {
        match self {
            PoincareConstants::Constant(c) => *c,
            PoincareConstants::Table(points) => {
                let first = points[0];
                let last = points[points.len() - 1];
                if ell <= first[0] {
                    return first[1];
                }
                if ell >= last[0] {
                    return last[1];
                }
                let i = points.partition_point(|p| p[0] <= ell);
                let (p0, p1) = (points[i - 1], points[i]);
                p0[1] + (p1[1] - p0[1]) * (ell - p0[0]) / (p1[0] - p0[0])
            }
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            PoincareConstants::Constant(c) => *c,
            PoincareConstants::Table(points) => points.iter().map(|p| p[1]).fold(1.0, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrenceMode {
    /// The full recurrence with the schedule's `gamma_n`.
    #[default]
    Full,
    /// Self-test: `gamma_n = 0` and no `q` factor.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoserParams {
    pub alpha: f64,
    /// Base integrability exponent.
    pub r: f64,
    /// Bound on the base moment `max_t int m^{-r}`.
    pub m_r: f64,
    pub c: f64,
    #[serde(default)]
    pub c_ell: PoincareConstants,
    /// Starting value `M_{q_{N0}}`.
    pub m_start: f64,
    #[serde(default)]
    pub mode: RecurrenceMode,
}

impl MoserParams {
    /// All constants one, as in the canned certificate.
    pub fn unit(alpha: f64, r: f64) -> Self {
        MoserParams {
            alpha,
            r,
            m_r: 1.0,
            c: 1.0,
            c_ell: PoincareConstants::Constant(1.0),
            m_start: 1.0,
            mode: RecurrenceMode::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::InvalidArgument(format!("r must be >= 1, got {}", self.r)));
        }
        if !(self.r > self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "the inverse-density certificate needs r > alpha, got r = {}, alpha = {}",
                self.r, self.alpha
            )));
        }
        for (name, v) in [("M_r", self.m_r), ("C", self.c), ("M_start", self.m_start)] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1, got {v}")));
            }
        }
        self.c_ell.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserSchedule {
    pub alpha: f64,
    pub r: f64,
    pub beta: f64,
    /// First index with `q_{n+1} > q_n + alpha` and `q_n > alpha + r`.
    pub n0: usize,
    /// First index `>= n0 + 1` from which `4/3 < l_n < 5/3` and `1/(1 - gamma_n) < 2`.
    pub big_n0: usize,
    /// `q_n`, `n = 0..=horizon + 1`.
    pub q: Vec<f64>,
    /// `gamma_n = (q_{n+1} - q_n) / (q_{n+1} - alpha)`, `n = 0..=horizon`.
    pub gamma: Vec<f64>,
    /// `l_n = 2 q_n / (q_{n+1} - alpha)`, `n = 0..=horizon`.
    pub ell: Vec<f64>,
    /// `theta_n = r / q_n`, `n = 0..=horizon`.
    pub theta: Vec<f64>,
    pub ell_limit: f64,
    pub inverse_factor_limit: f64,
}

impl MoserSchedule {
    pub fn horizon(&self) -> usize {
        self.gamma.len() - 1
    }
}

fn q_at(n: usize) -> f64 {
    BETA.powi(n as i32)
}

fn window_holds(alpha: f64, n: usize) -> bool {
    let (q, qn) = (q_at(n), q_at(n + 1));
    let ell = 2.0 * q / (qn - alpha);
    let gamma = (qn - q) / (qn - alpha);
    ell > 4.0 / 3.0 && ell < 5.0 / 3.0 && gamma > 0.0 && gamma < 1.0 && 1.0 / (1.0 - gamma) < 2.0
}

/// Scans for `n0`, `N0` and materializes the schedule up to `horizon`.
pub fn exponent_schedule(params: &MoserParams, horizon: usize) -> Result<MoserSchedule> {
    params.validate()?;
    let alpha = params.alpha;
    let n0 = (0..SCAN_HORIZON)
        .find(|&n| q_at(n + 1) > q_at(n) + alpha && q_at(n) > alpha + params.r)
        .ok_or_else(|| Error::Schedule(format!("no n0 within {SCAN_HORIZON} steps")))?;
    let big_n0 = (n0 + 1..SCAN_HORIZON)
        .find(|&n| (n..SCAN_HORIZON).all(|k| window_holds(alpha, k)))
        .ok_or_else(|| Error::Schedule(format!("no N0 within {SCAN_HORIZON} steps for alpha = {alpha}")))?;
    if horizon < big_n0 {
        return Err(Error::Schedule(format!("horizon {horizon} is below N0 = {big_n0}")));
    }
    let q: Vec<f64> = (0..=horizon + 1).map(q_at).collect();
    let mut gamma = Vec::with_capacity(horizon + 1);
    let mut ell = Vec::with_capacity(horizon + 1);
    for n in 0..=horizon {
        gamma.push((q[n + 1] - q[n]) / (q[n + 1] - alpha));
        ell.push(2.0 * q[n] / (q[n + 1] - alpha));
        if n >= big_n0 && !window_holds(alpha, n) {
            return Err(Error::Schedule(format!("window violated at n = {n}: l = {}, gamma = {}", ell[n], gamma[n])));
        }
        if n >= n0 && !(gamma[n] > 0.0 && gamma[n] < 1.0) {
            return Err(Error::Schedule(format!("gamma_{n} = {} outside (0, 1)", gamma[n])));
        }
    }
    let theta = q[..=horizon].iter().map(|qn| params.r / qn).collect();
    Ok(MoserSchedule {
        alpha,
        r: params.r,
        beta: BETA,
        n0,
        big_n0,
        q,
        gamma,
        ell,
        theta,
        ell_limit: 2.0 / BETA,
        inverse_factor_limit: BETA,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YoungConstants {
    pub epsilon: f64,
    pub c_epsilon: f64,
    /// `((2q / alpha) C^{2g+2} C_l^{2g} M_r)^{g/(1-g)}`, always `>= C(eps)`.
    pub intermediate: f64,
    /// `(q C^{2g+3} C_l^{2g} M_r)^{g/(1-g)}`, a majorant when `C >= 2 / alpha`.
    pub majorant: f64,
    pub majorant_applies: bool,
}

/// `eps = 4 alpha q / ((q - alpha)^2 C^{2g+2} C_l^{2g} M_r)` and
/// `C(eps) = (1 - g) (g / eps)^{g / (1 - g)}`.
pub fn young_constants(q: f64, alpha: f64, gamma: f64, c: f64, c_ell: f64, m_r: f64) -> Result<YoungConstants> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if !(alpha > 0.0 && q > alpha && q >= 1.0) {
        return Err(Error::Domain(format!("need alpha > 0 and q > max(alpha, 1), got q = {q}, alpha = {alpha}")));
    }
    if !(c >= 1.0 && c_ell >= 1.0 && m_r >= 1.0) {
        return Err(Error::Domain(format!("constants must be >= 1, got C = {c}, C_l = {c_ell}, M_r = {m_r}")));
    }
    let g = gamma;
    let k = c.powf(2.0 * g + 2.0) * c_ell.powf(2.0 * g) * m_r;
    let epsilon = 4.0 * alpha * q / ((q - alpha).powi(2) * k);
    let expo = g / (1.0 - g);
    let c_epsilon = if g < 1e-12 { 1.0 - g } else { (1.0 - g) * (g / epsilon).powf(expo) };
    Ok(YoungConstants {
        epsilon,
        c_epsilon,
        intermediate: (2.0 * q / alpha * k).powf(expo),
        majorant: (q * c * k).powf(expo),
        majorant_applies: c >= 2.0 / alpha,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiPsi {
    pub big_n0: usize,
    pub n: usize,
    /// `Phi_k^n` for `k = N0..=n` (index `k - N0`).
    pub phi: Vec<f64>,
    /// `sum_{k = N0+1}^n Phi_k^n`.
    pub psi: f64,
    /// Same value from `Psi_{m+1} = (1 + Psi_m) / (1 - gamma_{m+1})`.
    pub psi_recurrence: f64,
}

/// Direct products and sums, cross-checked against the recurrence.
pub fn phi_psi(schedule: &MoserSchedule, n: usize) -> Result<PhiPsi> {
    let big_n0 = schedule.big_n0;
    if n < big_n0 || n > schedule.horizon() {
        return Err(Error::InvalidArgument(format!("n = {n} outside [{big_n0}, {}]", schedule.horizon())));
    }
    let inv = |j: usize| 1.0 / (1.0 - schedule.gamma[j]);
    let phi: Vec<f64> = (big_n0..=n).map(|k| (k..=n).map(inv).product()).collect();
    let psi: f64 = phi[1..].iter().sum();
    let mut psi_recurrence = 0.0;
    for m in big_n0..n {
        psi_recurrence = (1.0 + psi_recurrence) * inv(m + 1);
    }
    if (psi - psi_recurrence).abs() > PSI_AGREEMENT * psi.abs().max(1.0) {
        return Err(Error::Domain(format!("Psi_{n}: direct {psi} and recurrence {psi_recurrence} disagree")));
    }
    Ok(PhiPsi { big_n0, n, phi, psi, psi_recurrence })
}

/// `rho = (-alpha beta^{-N0}; 1/beta)_inf`.
pub fn rho_bound(alpha: f64, big_n0: usize) -> Result<f64> {
    q_pochhammer(-alpha * BETA.powi(-(big_n0 as i32)), 1.0 / BETA, 1e-12)
}

/// `rho beta (beta^{n - N0} - 1) / (beta - 1)`, the closed-form bound on `Psi_n`.
pub fn psi_cap(rho: f64, big_n0: usize, n: usize) -> f64 {
    rho * BETA * (BETA.powi((n - big_n0) as i32) - 1.0) / (BETA - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserCertificate {
    pub params: MoserParams,
    pub n0: usize,
    pub big_n0: usize,
    pub beta: f64,
    pub horizon: usize,
    pub rho: f64,
    /// `C^14 C_l^4`, the constant of the reduced recurrence.
    pub c_reduced: f64,
    pub log_cap: f64,
    pub cap: f64,
    /// Indices `n = N0..=horizon`.
    pub indices: Vec<usize>,
    pub log_m: Vec<f64>,
    /// `M_{q_n}^{1/q_n}`.
    pub normalized: Vec<f64>,
    /// Unrolled bound on `M_{q_n}^{1/q_n}` (`n > N0`; first entry is `M_{q_{N0}}^{1/q_{N0}}`).
    pub unrolled: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_cap: Vec<f64>,
    /// `Phi_k^n < rho beta^{n-k+1}` and `Psi_n < psi_cap(n)` for every `n` (full mode).
    pub phi_psi_caps_hold: bool,
    pub below_cap: bool,
    pub converged: bool,
}

impl MoserCertificate {
    pub fn pass(&self) -> bool {
        self.below_cap && self.normalized.iter().all(|v| v.is_finite())
    }
}

/// Iterates `M_{q_{n+1}} <= (q_{n+1} C^{2g+5} C_l^{2g})^{1/(1-g)} M_{q_n}^{1/(1-g)}`
/// from `n = N0` to the horizon in log space and compares against the cap
/// `C_red^{1/q_{N0+1} + 2 rho} M^rho beta^{2(rho+1) beta (N0+1) / (beta-1)^2}`.
pub fn moser_recurrence(params: &MoserParams, schedule: &MoserSchedule) -> Result<MoserCertificate> {
    params.validate()?;
    let big_n0 = schedule.big_n0;
    let horizon = schedule.horizon();
    let degenerate = params.mode == RecurrenceMode::Degenerate;
    let log_c = params.c.ln();
    let rho = rho_bound(params.alpha, big_n0)?;
    let c_reduced = params.c.powi(14) * params.c_ell.max().powi(4);
    let log_c_red = c_reduced.ln();
    let log_m0 = params.m_start.ln();

    let mut log_m = vec![log_m0];
    for n in big_n0..horizon {
        let prev = *log_m.last().expect("non-empty");
        let next = if degenerate {
            5.0 * log_c + prev
        } else {
            let g = schedule.gamma[n];
            let log_cl = params.c_ell.at(schedule.ell[n]).ln();
            (schedule.q[n + 1].ln() + (2.0 * g + 5.0) * log_c + 2.0 * g * log_cl + prev) / (1.0 - g)
        };
        if !next.is_finite() {
            return Err(Error::Domain(format!("log M overflowed at n = {}", n + 1)));
        }
        log_m.push(next);
    }
    let indices: Vec<usize> = (big_n0..=horizon).collect();
    let normalized: Vec<f64> = indices.iter().zip(&log_m).map(|(&n, l)| (l / schedule.q[n]).exp()).collect();

    let q_next = schedule.q[big_n0 + 1];
    let log_cap = (1.0 / q_next + 2.0 * rho) * log_c_red
        + rho * log_m0
        + 2.0 * (rho + 1.0) * BETA * (big_n0 as f64 + 1.0) / (BETA - 1.0).powi(2) * BETA.ln();
    let cap = log_cap.exp();

    let mut unrolled = vec![normalized[0]];
    let mut psi = vec![0.0];
    let mut caps = vec![0.0];
    let mut caps_hold = true;
    for n in big_n0..horizon {
        let pp = phi_psi(schedule, n)?;
        let qn1 = schedule.q[n + 1];
        // M_{q_{n+1}} <= C_red^{1 + Psi_n} q_{n+1}^2 prod_{k=N0+1}^n q_k^{2 Phi_k^n} M^{Phi_{N0}^n}
        let mut log_b = (1.0 + pp.psi) * log_c_red + 2.0 * qn1.ln() + pp.phi[0] * log_m0;
        for (i, phi) in pp.phi.iter().enumerate().skip(1) {
            log_b += 2.0 * phi * schedule.q[big_n0 + i].ln();
        }
        unrolled.push((log_b / qn1).exp());
        let pc = psi_cap(rho, big_n0, n);
        for (i, phi) in pp.phi.iter().enumerate() {
            let k = big_n0 + i;
            caps_hold &= *phi < rho * BETA.powi((n - k + 1) as i32);
        }
        caps_hold &= pp.psi <= pc;
        psi.push(pp.psi);
        caps.push(pc);
    }
    let below_cap = log_m.iter().zip(&indices).all(|(l, &n)| l / schedule.q[n] <= log_cap);
    let converged = normalized.len() >= 2 && {
        let (a, b) = (normalized[normalized.len() - 2], normalized[normalized.len() - 1]);
        ((b - a) / a).abs() < CONVERGENCE_TOL
    };
    Ok(MoserCertificate {
        params: params.clone(),
        n0: schedule.n0,
        big_n0,
        beta: BETA,
        horizon,
        rho,
        c_reduced,
        log_cap,
        cap,
        indices,
        log_m,
        normalized,
        unrolled,
        psi,
        psi_cap: caps,
        phi_psi_caps_hold: caps_hold,
        below_cap,
        converged,
    })
}

/// Schedule and recurrence in one call.
pub fn certify(params: &MoserParams, horizon: usize) -> Result<MoserCertificate> {
    let schedule = exponent_schedule(params, horizon)?;
    moser_recurrence(params, &schedule)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityExponents {
    pub theta: f64,
    pub gamma: f64,
    /// `1/q - theta - (1 - theta)(d - 2) / (d (q + alpha))`.
    pub identity_residual: f64,
}

/// `theta = (2q + alpha d) / (q (d (q + alpha) - d + 2))` and `gamma = (1 - theta) q / (q + alpha)`.
pub fn density_case_exponents(q: f64, alpha: f64, d: usize) -> Result<DensityExponents> {
    if !(q > 1.0 && alpha > 0.0 && d >= 2) || !q.is_finite() || !alpha.is_finite() {
        return Err(Error::Domain(format!("need q > 1, alpha > 0, d >= 2, got q = {q}, alpha = {alpha}, d = {d}")));
    }
    let df = d as f64;
    let theta = (2.0 * q + alpha * df) / (q * (df * (q + alpha) - df + 2.0));
    let gamma = (1.0 - theta) * q / (q + alpha);
    if !(theta > 0.0 && theta < 1.0 && gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("exponents out of range: theta = {theta}, gamma = {gamma}")));
    }
    let identity_residual = 1.0 / q - theta - (1.0 - theta) * (df - 2.0) / (df * (q + alpha));
    Ok(DensityExponents { theta, gamma, identity_residual })
}
