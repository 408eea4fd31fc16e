//! Embedded Dormand–Prince 5(4) integrator for two-dimensional first-order
//! systems, with per-point step caps and an observer that may abort the run.

/// Absolute/relative error tolerances for the embedded error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

/// State of a two-dimensional system, e.g. `(g, g')`.
pub type State = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accepted {
    pub t: f64,
    pub state: State,
    pub deriv: State,
}

/// Why an integration stopped short of its end point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Halt<E> {
    /// The observer rejected a state.
    Observer(E),
    /// `max_steps` attempts were used up at time `t`.
    StepBudget { t: f64 },
    /// The step size underflowed at time `t`.
    StepUnderflow { t: f64 },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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

#[inline]
fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for &(a, k) in terms {
        out[0] += h * a * k[0];
        out[1] += h * a * k[1];
    }
    out
}

/// Integrates `state' = rhs(t, state)` from `start` to `end` (either
/// direction).
///
/// `step_cap(t)` bounds the magnitude of a step taken from `t`. `observe` is
/// called on the initial point and after every accepted step; returning an
/// error stops the integration with [`Halt::Observer`].
pub fn dopri5<F, C, O, E>(
    mut rhs: F,
    start: f64,
    end: f64,
    init: State,
    tol: Tolerances,
    max_steps: usize,
    step_cap: C,
    mut observe: O,
) -> Result<Accepted, Halt<E>>
where
    F: FnMut(f64, &State) -> State,
    C: Fn(f64) -> f64,
    O: FnMut(&Accepted) -> Result<(), E>,
{
    let dir = if end >= start { 1.0 } else { -1.0 };
    let span = (end - start).abs();
    let mut t = start;
    let mut y = init;
    let mut k1 = rhs(t, &y);
    let first = Accepted {
        t,
        state: y,
        deriv: k1,
    };
    observe(&first).map_err(Halt::Observer)?;
    if span == 0.0 {
        return Ok(first);
    }

    let mut h = (1e-3 * span).min(step_cap(t)).max(f64::EPSILON * span);
    let mut steps = 0usize;
    loop {
        if steps >= max_steps {
            return Err(Halt::StepBudget { t });
        }
        steps += 1;

        let remaining = (end - t).abs();
        let mut last = false;
        h = h.min(step_cap(t));
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h <= 1e-15 * t.abs().max(1.0) && !last {
            return Err(Halt::StepUnderflow { t });
        }
        let hs = dir * h;

        let k2 = rhs(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = rhs(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            t + C4 * hs,
            &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            t + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            t + hs,
            &axpy(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            hs,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let t_new = if last { end } else { t + hs };
        let k7 = rhs(t_new, &y_new);

        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..2 {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            finite &= r.is_finite() && y_new[i].is_finite();
            err_sq += r * r;
        }
        let err = (0.5 * err_sq).sqrt();

        if finite && err <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            let acc = Accepted {
                t,
                state: y,
                deriv: k1,
            };
            observe(&acc).map_err(Halt::Observer)?;
            if last {
                return Ok(acc);
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            let factor = if finite {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h *= factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_cap(_: f64) -> f64 {
        f64::INFINITY
    }

    #[test]
    fn harmonic_oscillator_one_period() {
        let tol = Tolerances {
            atol: 1e-12,
            rtol: 1e-12,
        };
        let two_pi = 2.0 * std::f64::consts::PI;
        let end = dopri5(
            |_, s| [s[1], -s[0]],
            0.0,
            two_pi,
            [1.0, 0.0],
            tol,
            100_000,
            no_cap,
            |_| Ok::<(), ()>(()),
        )
        .unwrap();
        assert_eq!(end.t, two_pi);
        assert!((end.state[0] - 1.0).abs() < 1e-9);
        assert!(end.state[1].abs() < 1e-9);
    }

    #[test]
    fn integrates_backwards() {
        let tol = Tolerances {
            atol: 1e-12,
            rtol: 1e-12,
        };
        // y' = y from 1 down to 0: y(0) = e^{-1} y(1).
        let end = dopri5(
            |_, s| [s[0], 0.0],
            1.0,
            0.0,
            [1.0, 0.0],
            tol,
            100_000,
            no_cap,
            |_| Ok::<(), ()>(()),
        )
        .unwrap();
        assert_eq!(end.t, 0.0);
        assert!((end.state[0] - (-1.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn observer_can_abort_and_cap_limits_steps() {
        let tol = Tolerances {
            atol: 1e-10,
            rtol: 1e-10,
        };
        let mut largest: f64 = 0.0;
        let mut prev = 0.0;
        let res = dopri5(
            |_, s| [s[1], 0.0],
            0.0,
            10.0,
            [0.0, 1.0],
            tol,
            100_000,
            |_| 0.01,
            |a| {
                largest = largest.max(a.t - prev);
                prev = a.t;
                if a.state[0] > 5.0 {
                    Err(a.t)
                } else {
                    Ok(())
                }
            },
        );
        match res {
            Err(Halt::Observer(t)) => assert!(t > 5.0 - 1e-9 && t < 5.02, "{t}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(largest <= 0.01 + 1e-15);
    }

    #[test]
    fn step_budget_is_reported() {
        let tol = Tolerances {
            atol: 1e-10,
            rtol: 1e-10,
        };
        let res = dopri5(
            |_, s| [s[1], -s[0]],
            0.0,
            100.0,
            [1.0, 0.0],
            tol,
            5,
            |_| 0.1,
            |_| Ok::<(), ()>(()),
        );
        assert!(matches!(res, Err(Halt::StepBudget { .. })));
    }
}
