//! Chaotic ODE trajectories sampled through polynomial observables.
//!
//! Integration uses the Dormand-Prince 5(4) pair with step size control and
//! its fourth-order continuous extension, so samples on the output grid do
//! not constrain the step size.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{GenError, Result, SnapshotStream};

/// Relative tolerance of the integrator.
pub const RTOL: f64 = 1e-9;
/// Absolute tolerance of the integrator.
pub const ATOL: f64 = 1e-12;
/// State norm treated as blow-up.
pub const BLOWUP_NORM: f64 = 1e12;

/// Piecewise-linear Chua circuit in dimensionless form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChuaParams {
    pub alpha: f64,
    pub beta: f64,
    /// Inner slope of the diode characteristic.
    pub m0: f64,
    /// Outer slope of the diode characteristic.
    pub m1: f64,
}

impl Default for ChuaParams {
    fn default() -> Self {
        Self {
            alpha: 15.6,
            beta: 28.0,
            m0: -1.143,
            m1: -0.714,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OdeSystem {
    Chua(ChuaParams),
    Lorenz(LorenzParams),
    /// `ẋ = M x`, used for checking the integrator against closed forms.
    Linear([[f64; 3]; 3]),
}

impl OdeSystem {
    fn rhs(&self, x: &[f64; 3]) -> [f64; 3] {
        match self {
            OdeSystem::Chua(p) => {
                let f =
                    p.m1 * x[0] + 0.5 * (p.m0 - p.m1) * ((x[0] + 1.0).abs() - (x[0] - 1.0).abs());
                [
                    p.alpha * (x[1] - x[0] - f),
                    x[0] - x[1] + x[2],
                    -p.beta * x[1],
                ]
            }
            OdeSystem::Lorenz(p) => [
                p.sigma * (x[1] - x[0]),
                x[0] * (p.rho - x[2]) - x[1],
                x[0] * x[1] - p.beta * x[2],
            ],
            OdeSystem::Linear(m) => {
                let mut out = [0.0; 3];
                for (i, row) in m.iter().enumerate() {
                    out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
                out
            }
        }
    }
}

/// `x^a y^b z^c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial(pub [u32; 3]);

impl Monomial {
    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        x.iter()
            .zip(self.0)
            .map(|(v, p)| v.powi(p as i32))
            .product()
    }

    /// `x, y, z, x², y², z²`.
    pub fn linear_and_squares() -> Vec<Monomial> {
        vec![
            Monomial([1, 0, 0]),
            Monomial([0, 1, 0]),
            Monomial([0, 0, 1]),
            Monomial([2, 0, 0]),
            Monomial([0, 2, 0]),
            Monomial([0, 0, 2]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeSpec {
    pub system: OdeSystem,
    pub x0: [f64; 3],
    pub dt: f64,
    pub t_max: f64,
    pub observables: Vec<Monomial>,
}

impl OdeSpec {
    pub fn chua(x0: [f64; 3], dt: f64, t_max: f64) -> Self {
        Self {
            system: OdeSystem::Chua(ChuaParams::default()),
            x0,
            dt,
            t_max,
            observables: Monomial::linear_and_squares(),
        }
    }

    pub fn lorenz(x0: [f64; 3], dt: f64, t_max: f64) -> Self {
        Self {
            system: OdeSystem::Lorenz(LorenzParams::default()),
            x0,
            dt,
            t_max,
            observables: Monomial::linear_and_squares(),
        }
    }

    /// Number of samples on the output grid `0, dt, …` up to `t_max`.
    pub fn samples(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize + 1
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0
            && self.dt.is_finite()
            && self.t_max.is_finite()
            && self.dt <= self.t_max)
        {
            return Err(GenError::InvalidParam(format!(
                "need 0 < dt <= t_max, got dt={} t_max={}",
                self.dt, self.t_max
            )));
        }
        if self.observables.is_empty() {
            return Err(GenError::InvalidParam("observable list is empty".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(GenError::InvalidParam("initial state is not finite".into()));
        }
        Ok(())
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type V3 = [f64; 3];

fn comb(base: &V3, h: f64, terms: &[(f64, &V3)]) -> V3 {
    let mut out = *base;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn norm(x: &V3) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Continuous extension of one accepted step.
struct Dense {
    t0: f64,
    h: f64,
    r: [V3; 5],
}

impl Dense {
    fn eval(&self, t: f64) -> V3 {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.r[0][i]
                + th * (self.r[1][i]
                    + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
        out
    }
}

/// Integrates and samples the trajectory on the uniform output grid.
///
/// When the state norm exceeds [`BLOWUP_NORM`] the stream is cut at the last
/// good sample and flagged.
pub fn integrate_ode(spec: &OdeSpec) -> Result<SnapshotStream> {
    spec.validate()?;
    let n = spec.samples();
    let f = |x: &V3| spec.system.rhs(x);
    let mut states: Vec<V3> = Vec::with_capacity(n);
    states.push(spec.x0);

    let t_end = (n - 1) as f64 * spec.dt;
    let mut t = 0.0;
    let mut x = spec.x0;
    let mut k1 = f(&x);
    let mut h = spec.dt.min(1e-2);
    let mut next = 1;
    let mut blew_up = false;
    let mut rejected_in_row = 0;

    while next < n {
        if t + h > t_end {
            h = (t_end - t).max(f64::EPSILON * t_end.max(1.0));
        }
        let k2 = f(&comb(&x, h, &[(A21, &k1)]));
        let k3 = f(&comb(&x, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(&comb(&x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(&comb(
            &x,
            h,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        ));
        let k6 = f(&comb(
            &x,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ));
        let xn = comb(
            &x,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(&xn);
        let mut err = 0.0;
        for i in 0..3 {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = ATOL + RTOL * x[i].abs().max(xn[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / 3.0).sqrt();
        if !err.is_finite() || xn.iter().any(|v| !v.is_finite()) {
            blew_up = true;
            break;
        }
        if err <= 1.0 {
            let ydiff: V3 = std::array::from_fn(|i| xn[i] - x[i]);
            let bspl: V3 = std::array::from_fn(|i| h * k1[i] - ydiff[i]);
            let dense = Dense {
                t0: t,
                h,
                r: [
                    x,
                    ydiff,
                    bspl,
                    std::array::from_fn(|i| ydiff[i] - h * k7[i] - bspl[i]),
                    std::array::from_fn(|i| {
                        h * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i])
                    }),
                ],
            };
            let t_new = t + h;
            let slack = 1e-12 * t_end.max(1.0);
            while next < n {
                let ts = next as f64 * spec.dt;
                if ts > t_new + slack {
                    break;
                }
                let xs = if next == n - 1 && t_new + slack >= t_end {
                    xn
                } else {
                    dense.eval(ts.min(t_new))
                };
                if norm(&xs) > BLOWUP_NORM {
                    blew_up = true;
                    break;
                }
                states.push(xs);
                next += 1;
            }
            if blew_up {
                break;
            }
            t = t_new;
            x = xn;
            k1 = k7;
            rejected_in_row = 0;
            if norm(&x) > BLOWUP_NORM {
                blew_up = true;
                break;
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
        } else {
            rejected_in_row += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if rejected_in_row > 100 || h < 1e-14 * t_end.max(1.0) {
                blew_up = true;
                break;
            }
        }
    }

    let cols = states.len();
    let m = spec.observables.len();
    let data = DMatrix::from_fn(m, cols, |i, j| spec.observables[i].eval(&states[j]));
    Ok(SnapshotStream { data, blew_up })
}
