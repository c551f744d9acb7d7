//! Central finite-difference gradient verification.
//!
//! The load-bearing numerical check of the crate: every training loss is
//! compared against central differences in 64-bit arithmetic. The step
//! `h = 1e-5` puts truncation error around `1e-10` and roundoff around
//! `1e-11` for loss values of order one, comfortably inside the `1e-4`
//! acceptance tolerance.

use rand::Rng;

use crate::rng;

use super::params::{EncoderParams, Grads};

const H: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct FdCheck {
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub checks: Vec<FdCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}

/// Compare analytic gradients against central differences of `loss_fn` at
/// `coords` randomly sampled parameter coordinates.
pub fn finite_diff_check(
    loss_fn: &dyn Fn(&EncoderParams) -> f64,
    params: &EncoderParams,
    analytic: &Grads,
    coords: usize,
    seed: u64,
    tol: f64,
) -> FdReport {
    let n = params.param_count();
    let mut rng = rng::stream(&[seed, rng::tag("diffnet/fd")]);
    let mut scratch = params.clone();
    let mut checks = Vec::with_capacity(coords);
    let mut max_rel = 0.0f64;
    for _ in 0..coords {
        let coord = rng.gen_range(0..n);
        let original = scratch.get_coord(coord);
        scratch.set_coord(coord, original + H);
        let plus = loss_fn(&scratch);
        scratch.set_coord(coord, original - H);
        let minus = loss_fn(&scratch);
        scratch.set_coord(coord, original);
        let numeric = (plus - minus) / (2.0 * H);
        let analytic_g = analytic.get_coord(coord);
        let err = rel_err(analytic_g, numeric);
        max_rel = max_rel.max(err);
        checks.push(FdCheck {
            coord,
            analytic: analytic_g,
            numeric,
            rel_err: err,
        });
    }
    FdReport {
        checks,
        max_rel_err: max_rel,
        tol,
        passed: max_rel < tol,
    }
}
