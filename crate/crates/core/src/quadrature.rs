//! Fixed Gauss–Legendre and adaptive Gauss–Kronrod quadrature on finite intervals.

use crate::error::{Error, Result};

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss–Legendre rule, exact for polynomials of degree 9.
pub fn gauss_legendre5<F: FnMut(f64) -> f64>(lo: f64, hi: f64, mut f: F) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = 0.0;
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Abscissae of the five-point rule mapped onto `[lo, hi]`, paired with scaled weights.
pub fn gauss_legendre5_points(lo: f64, hi: f64) -> [(f64, f64); 5] {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut out = [(0.0, 0.0); 5];
    for (k, (x, w)) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()).enumerate() {
        out[k] = (mid + half * x, w * half);
    }
    out
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(lo: f64, hi: f64, f: &mut F) -> (f64, f64) {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let fc = f(mid);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_intervals: 4000,
        }
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) integration: the interval with the
/// largest error estimate is bisected until the summed estimate meets the tolerance.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    lo: f64,
    hi: f64,
    opts: AdaptiveOptions,
    mut f: F,
) -> Result<f64> {
    if lo == hi {
        return Ok(0.0);
    }
    let (v, e) = gk15(lo, hi, &mut f);
    let mut pieces = vec![(lo, hi, v, e)];
    let mut total = v;
    let mut err = e;
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if pieces.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure(format!(
                "[{lo}, {hi}]: error estimate {err:e} after {} subdivisions",
                pieces.len()
            )));
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (a, b, v0, e0) = pieces.swap_remove(worst);
        let m = 0.5 * (a + b);
        let (v1, e1) = gk15(a, m, &mut f);
        let (v2, e2) = gk15(m, b, &mut f);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
    }
    // Re-sum to shed the drift of the running update.
    Ok(pieces.iter().map(|p| p.2).sum())
}
