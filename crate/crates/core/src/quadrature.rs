//! Adaptive Gauss-Kronrod quadrature and the log-radial integration used for
//! profiles whose features live on scales far below `f64::MIN_POSITIVE`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-13,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn abs(abs: f64) -> Self {
        Self {
            abs,
            rel: 0.0,
            ..Self::default()
        }
    }
}

/// Single 21-point Gauss-Kronrod panel on `[a, b]`.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Quad {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Quad { value, error }
}

struct Panel {
    a: f64,
    b: f64,
    q: Quad,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
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
        self.q.error.total_cmp(&other.q.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate drops below `max(tol.abs, tol.rel * |value|)` or the panel budget
/// is spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Quad {
    if a == b {
        return Quad {
            value: 0.0,
            error: 0.0,
        };
    }
    let first = gk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    let mut value = first.value;
    let mut error = first.error;
    heap.push(Panel { a, b, q: first });
    while error > tol.abs.max(tol.rel * value.abs()) && heap.len() < tol.max_intervals {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gk21(&f, worst.a, mid);
        let right = gk21(&f, mid, worst.b);
        value += left.value + right.value - worst.q.value;
        error += left.error + right.error - worst.q.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            q: left,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            q: right,
        });
    }
    // re-sum to shed the drift of the running updates
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.q.value, e + p.q.error));
    Quad { value, error }
}

/// Integrates over consecutive breakpoints, summing the pieces.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Quad {
    let mut out = Quad {
        value: 0.0,
        error: 0.0,
    };
    for w in points.windows(2) {
        if w[1] > w[0] {
            let q = integrate(&f, w[0], w[1], tol);
            out.value += q.value;
            out.error += q.error;
        }
    }
    out
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Width, in the logarithmic variable, of the band around the transition
/// scale that is integrated numerically. Outside it the integrand is a pure
/// exponential up to a relative defect of `e^{-2 BAND}`.
const BAND: f64 = 20.0;

/// `∫_0^1 s^a (s² + ξ)^{-b} [ln(s² + ξ)]^j ds` for `j ∈ {0, 1}`, with `ξ`
/// passed as `ln ξ` so that scales far below the smallest double are allowed.
///
/// With `s = e^{-x}` the integrand is `e^{-(a+1)x} E^{-b} (ln E)^j`,
/// `E = e^{-2x} + ξ`. Away from the transition `x_t = -½ ln ξ` one of the two
/// terms of `E` dominates and the pieces are integrated in closed form; the
/// band `|x - x_t| ≤ 20` goes through adaptive quadrature in the shifted
/// variable `y = x - x_t`, which keeps full precision even when `x_t ~ 1e30`.
pub fn power_moment(a: f64, b: f64, ln_xi: f64, with_log: bool) -> f64 {
    assert!(a > -1.0, "power_moment needs a > -1");
    let gamma = a + 1.0 - 2.0 * b;
    let x_t = -0.5 * ln_xi;
    if x_t <= -BAND {
        // ξ dominates everywhere: E = ξ(1 + s²/ξ)
        let integrand = |s: f64| {
            let ln_e = ln_xi + (s * s * (-ln_xi).exp()).ln_1p();
            let w = s.powf(a) * (-b * ln_e).exp();
            if with_log {
                w * ln_e
            } else {
                w
            }
        };
        return integrate(integrand, 0.0, 1.0, Tolerance::default()).value;
    }

    let head_end = (x_t - BAND).max(0.0);
    let head = if with_log {
        -2.0 * first_moment_exp(gamma, head_end)
    } else {
        zeroth_moment_exp(gamma, head_end)
    };

    // e^{-(a+1)x} E^{-b} = e^{-γ x_t} e^{-(a+1)y} (1 + e^{-2y})^{-b}
    let y_start = -x_t.min(BAND);
    let band = integrate(
        |y: f64| {
            let soft = (-2.0 * y).exp().ln_1p();
            let w = (-gamma * x_t - (a + 1.0) * y - b * soft).exp();
            if with_log {
                w * (ln_xi + soft)
            } else {
                w
            }
        },
        y_start,
        BAND,
        Tolerance::default(),
    )
    .value;

    let tail_weight = (-gamma * x_t - (a + 1.0) * BAND).exp() / (a + 1.0);
    let tail = if with_log {
        tail_weight * ln_xi
    } else {
        tail_weight
    };
    head + band + tail
}

/// `∫_0^h e^{-γx} dx`.
fn zeroth_moment_exp(gamma: f64, h: f64) -> f64 {
    let y = gamma * h;
    if y.abs() < 1e-8 {
        h * (1.0 - 0.5 * y)
    } else {
        -(-y).exp_m1() / gamma
    }
}

/// `∫_0^h x e^{-γx} dx`.
fn first_moment_exp(gamma: f64, h: f64) -> f64 {
    let y = gamma * h;
    if y.abs() < 1e-4 {
        h * h * (0.5 - y / 3.0 + y * y / 8.0)
    } else {
        // (1 - e^{-y}(1 + y)) / γ²
        (-(-y).exp_m1() - y * (-y).exp()) / (gamma * gamma)
    }
}

/// Breakpoints `0, 1, 2, 4, ...` up to `end`, plus the band edges around
/// `transition`, for integrals in a logarithmic variable.
pub fn log_ladder(transition: f64, end: f64) -> Vec<f64> {
    let mut points = vec![0.0];
    let mut x = 1.0;
    while x < end {
        points.push(x);
        x *= 2.0;
    }
    for extra in [transition - BAND, transition, transition + BAND] {
        if extra > 0.0 && extra < end {
            points.push(extra);
        }
    }
    points.push(end);
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}
