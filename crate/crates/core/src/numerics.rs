//! Numerical kernels: adaptive quadrature over `(0, inf)` and golden-section
//! maximization.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::convert::Infallible;

use thiserror::Error;

/// Absolute error floor accepted by [`integrate_semi_infinite`].
pub const ABS_TOL_FLOOR: f64 = 1e-15;
/// Relative tolerance used for the outage-probability integrals.
pub const DEFAULT_REL_TOL: f64 = 1e-9;
/// Maximum number of panels the adaptive integrator may hold.
pub const MAX_PANELS: usize = 4000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("relative tolerance {0} outside (0, 1e-2]")]
    BadTolerance(f64),
    #[error(
        "quadrature did not converge after {evaluations} evaluations \
         (estimate {estimate}, error estimate {abs_error_estimate})"
    )]
    NoConvergence {
        estimate: f64,
        abs_error_estimate: f64,
        evaluations: usize,
    },
    #[error("integrand returned a non-finite value at z = {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

// 15-point Kronrod abscissae on [-1, 1] (non-negative half) and weights,
// with the embedded 7-point Gauss weights on the odd-indexed nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

fn kronrod_panel<F>(g: &mut F, lo: f64, hi: f64) -> Result<Panel, NumericsError>
where
    F: FnMut(f64) -> Result<f64, NumericsError>,
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = g(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = g(center - dx)? + g(center + dx)?;
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Ok(Panel {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    })
}

/// Integrates a non-negative, exponentially decaying `f` over `(0, inf)`.
///
/// The half line is folded onto `(0, 1)` with `z = t / (1 - t)` and the
/// result refined by adaptive 7/15-point Gauss–Kronrod bisection, always
/// splitting the panel with the largest error estimate. Nodes never touch
/// the endpoints, so `f` is never evaluated at `z = 0`.
pub fn integrate_semi_infinite<F>(f: F, rel_tol: f64) -> Result<QuadratureResult, NumericsError>
where
    F: Fn(f64) -> f64,
{
    integrate_scaled(f, 1.0, rel_tol)
}

/// As [`integrate_semi_infinite`], with the fold `z = scale * t / (1 - t)`
/// centred on the integrand's natural length scale.
pub fn integrate_scaled<F>(f: F, scale: f64, rel_tol: f64) -> Result<QuadratureResult, NumericsError>
where
    F: Fn(f64) -> f64,
{
    integrate_with_budget(f, scale, rel_tol, MAX_PANELS)
}

fn integrate_with_budget<F>(
    f: F,
    scale: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<QuadratureResult, NumericsError>
where
    F: Fn(f64) -> f64,
{
    if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
        return Err(NumericsError::BadTolerance(rel_tol));
    }
    let evaluations = Cell::new(0usize);
    let mut g = |t: f64| -> Result<f64, NumericsError> {
        evaluations.set(evaluations.get() + 1);
        let one_minus = 1.0 - t;
        let z = scale * t / one_minus;
        let v = if z.is_finite() {
            f(z) * scale / (one_minus * one_minus)
        } else {
            0.0
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NumericsError::NonFinite(z))
        }
    };

    let mut heap = BinaryHeap::new();
    // Start from a few panels so narrow features near either end are seen.
    let starts = [0.0, 0.125, 0.25, 0.5, 0.75, 0.875, 1.0];
    for w in starts.windows(2) {
        heap.push(kronrod_panel(&mut g, w[0], w[1])?);
    }
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if error <= (rel_tol * value.abs()).max(ABS_TOL_FLOOR) {
            return Ok(QuadratureResult {
                value,
                abs_error_estimate: error,
                evaluations: evaluations.get(),
            });
        }
        if heap.len() >= max_panels {
            return Err(NumericsError::NoConvergence {
                estimate: value,
                abs_error_estimate: error,
                evaluations: evaluations.get(),
            });
        }
        let worst = heap.pop().expect("panel heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // Panel cannot be split further in double precision.
            return Err(NumericsError::NoConvergence {
                estimate: value,
                abs_error_estimate: error,
                evaluations: evaluations.get(),
            });
        }
        heap.push(kronrod_panel(&mut g, worst.lo, mid)?);
        heap.push(kronrod_panel(&mut g, mid, worst.hi)?);
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a local maximum of `f` on `[lo, hi]`.
///
/// Returns the midpoint of the final bracket together with `f` there. On an
/// exact tie between the two interior probes both ends move inwards, so a
/// flat objective converges to the centre of the original interval.
pub fn try_golden_section_max<F, E>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    assert!(lo < hi, "golden_section_max requires lo < hi");
    assert!(tol > 0.0, "golden_section_max requires tol > 0");
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else if fd > fc {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        } else {
            a = c;
            b = d;
            c = b - INV_PHI * (b - a);
            d = a + INV_PHI * (b - a);
            fc = f(c)?;
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    match try_golden_section_max(|x| Ok::<_, Infallible>(f(x)), lo, hi, tol) {
        Ok(r) => r,
        Err(never) => match never {},
    }
}
