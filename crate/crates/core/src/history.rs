//! Piecewise-cubic drift histories `A_x(t)` and the memory integrals built on them.

use crate::quadrature::gauss_legendre5_points;

/// Borrowed view of a drift history sampled on a strictly increasing grid.
/// Between nodes `A_x` is the cubic Hermite interpolant of the node values `a`
/// and slopes `da`, plus a quartic bubble `30·excess/h·s²(1−s)²` on the segment
/// ending at node `j + 1` that makes its integral match a known segment integral.
/// `ia[j]` holds the integral of the interpolant from `times[0]`.
#[derive(Debug, Clone, Copy)]
pub struct DriftView<'a> {
    pub times: &'a [f64],
    pub a: &'a [f64],
    pub da: &'a [f64],
    pub excess: &'a [f64],
    pub ia: &'a [f64],
}

impl<'a> DriftView<'a> {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index `j` of the segment `[times[j], times[j+1]]` holding `t` (clamped).
    pub fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(j) => j.min(n - 2),
            Err(j) => j.saturating_sub(1).min(n - 2),
        }
    }

    /// `A_x(t)` for `t` inside segment `j`.
    #[inline]
    pub fn a_in_segment(&self, j: usize, t: f64) -> f64 {
        if self.times.len() < 2 {
            return self.a[0];
        }
        let h = self.times[j + 1] - self.times[j];
        let s = (t - self.times[j]) / h;
        let (s2, s3) = (s * s, s * s * s);
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.a[j]
            + (s3 - 2.0 * s2 + s) * h * self.da[j]
            + (3.0 * s2 - 2.0 * s3) * self.a[j + 1]
            + (s3 - s2) * h * self.da[j + 1]
            + 30.0 * self.excess[j + 1] / h * s2 * (1.0 - s) * (1.0 - s)
    }

    pub fn a_at(&self, t: f64) -> f64 {
        self.a_in_segment(self.segment(t), t)
    }

    #[inline]
    fn ia_in_segment(&self, j: usize, t: f64) -> f64 {
        if self.times.len() < 2 {
            return self.ia[0] + self.a[0] * (t - self.times[0]);
        }
        let h = self.times[j + 1] - self.times[j];
        let s = (t - self.times[j]) / h;
        let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
        self.ia[j]
            + h * ((s - s3 + 0.5 * s4) * self.a[j]
                + (0.5 * s2 - 2.0 * s3 / 3.0 + 0.25 * s4) * h * self.da[j]
                + (s3 - 0.5 * s4) * self.a[j + 1]
                + (0.25 * s4 - s3 / 3.0) * h * self.da[j + 1])
            + self.excess[j + 1] * s3 * (10.0 - 15.0 * s + 6.0 * s2)
    }

    /// `∫_{t0}^{t} A_x(u) du`, exact for the interpolant.
    pub fn ia_at(&self, t: f64) -> f64 {
        self.ia_in_segment(self.segment(t), t)
    }

    /// `∫_{t0}^{upper} g(τ) · exp(I_A(upper) − I_A(τ)) dτ`, five-point Gauss–Legendre
    /// on every history segment, split additionally at `kink` when it falls inside.
    pub fn memory_integral<G: FnMut(f64) -> f64>(&self, upper: f64, kink: Option<f64>, mut g: G) -> f64 {
        let t0 = self.start();
        if upper <= t0 {
            return 0.0;
        }
        let i_upper = self.ia_at(upper);
        let mut acc = 0.0;
        let mut piece = |j: usize, lo: f64, hi: f64, acc: &mut f64| {
            for (tau, w) in gauss_legendre5_points(lo, hi) {
                *acc += w * g(tau) * (i_upper - self.ia_in_segment(j, tau)).exp();
            }
        };
        let last = self.times.len().saturating_sub(1);
        for j in 0..last.max(1) {
            let lo = self.times[j];
            if lo >= upper {
                break;
            }
            let hi = if last == 0 { upper } else { self.times[j + 1].min(upper) };
            match kink {
                Some(k) if k > lo && k < hi => {
                    piece(j, lo, k, &mut acc);
                    piece(j, k, hi, &mut acc);
                }
                _ => piece(j, lo, hi, &mut acc),
            }
        }
        acc
    }
}

/// Growable drift history used while marching the causal solver.
#[derive(Debug, Clone, Default)]
pub struct DriftHistory {
    pub times: Vec<f64>,
    pub a: Vec<f64>,
    pub da: Vec<f64>,
    pub excess: Vec<f64>,
    pub ia: Vec<f64>,
}

impl DriftHistory {
    pub fn new(t0: f64, a0: f64, da0: f64) -> Self {
        Self { times: vec![t0], a: vec![a0], da: vec![da0], excess: vec![0.0], ia: vec![0.0] }
    }

    /// Appends a node; the new segment is the plain Hermite cubic.
    pub fn push(&mut self, t: f64, a: f64, da: f64) {
        self.push_inner(t, a, da, None);
    }

    /// Appends a node whose segment must integrate to `integral`.
    pub fn push_with_integral(&mut self, t: f64, a: f64, da: f64, integral: f64) {
        self.push_inner(t, a, da, Some(integral));
    }

    fn push_inner(&mut self, t: f64, a: f64, da: f64, integral: Option<f64>) {
        let n = self.times.len();
        let (tp, ap, dp, ip) = (self.times[n - 1], self.a[n - 1], self.da[n - 1], self.ia[n - 1]);
        debug_assert!(t > tp);
        let h = t - tp;
        let hermite = 0.5 * h * (ap + a) + h * h * (dp - da) / 12.0;
        let q = integral.unwrap_or(hermite);
        self.times.push(t);
        self.a.push(a);
        self.da.push(da);
        self.excess.push(q - hermite);
        self.ia.push(ip + q);
    }

    pub fn truncate(&mut self, len: usize) {
        self.times.truncate(len);
        self.a.truncate(len);
        self.da.truncate(len);
        self.excess.truncate(len);
        self.ia.truncate(len);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn view(&self) -> DriftView<'_> {
        DriftView { times: &self.times, a: &self.a, da: &self.da, excess: &self.excess, ia: &self.ia }
    }
}
