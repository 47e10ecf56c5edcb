//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

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

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Scalar> Default for QuadConfig<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-8),
            rel_tol: T::lit(1e-6),
            max_intervals: 200,
        }
    }
}

impl<T: Scalar> QuadConfig<T> {
    pub fn new(abs_tol: T, rel_tol: T) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub abs_error: T,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy)]
struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn gk15<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Segment<T> {
    let half = (b - a) * T::lit(0.5);
    let center = a + half;
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half * T::lit(XGK[j]);
        let s = f(center - dx) + f(center + dx);
        kronrod = kronrod + s * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + s * T::lit(WG[j / 2]);
        }
    }
    let value = kronrod * half;
    // |K15 − G7| bounds the error of the lower-order rule, so it is a
    // conservative estimate for the Kronrod value
    let error = ((kronrod - gauss) * half).abs();
    Segment { a, b, value, error }
}

/// Integrates `f` over `[a, b]` by repeatedly bisecting the segment with the
/// largest error estimate until `error ≤ max(abs_tol, rel_tol·|value|)`.
pub fn integrate<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, cfg: &QuadConfig<T>) -> QuadResult<T> {
    if a == b {
        return QuadResult {
            value: T::zero(),
            abs_error: T::zero(),
            evaluations: 0,
            converged: true,
        };
    }
    if b < a {
        let mut r = integrate(f, b, a, cfg);
        r.value = -r.value;
        return r;
    }
    let mut segments = vec![gk15(&mut f, a, b)];
    let mut evaluations = 15;
    loop {
        let value: T = segments.iter().map(|s| s.value).sum();
        let error: T = segments.iter().map(|s| s.error).sum();
        let target = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if error <= target || !value.is_finite() {
            return QuadResult {
                value,
                abs_error: error,
                evaluations,
                converged: error <= target,
            };
        }
        if segments.len() >= cfg.max_intervals || !error.is_finite() {
            return QuadResult {
                value,
                abs_error: error,
                evaluations,
                converged: false,
            };
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, s)| if s.error > acc.1 { (i, s.error) } else { acc });
        let seg = segments.swap_remove(worst);
        let mid = seg.a + (seg.b - seg.a) * T::lit(0.5);
        if !(mid > seg.a && mid < seg.b) {
            // interval below resolution
            segments.push(Segment { error: T::zero(), ..seg });
            continue;
        }
        segments.push(gk15(&mut f, seg.a, mid));
        segments.push(gk15(&mut f, mid, seg.b));
        evaluations += 30;
    }
}

/// Integrates over `[a, b]` split at the given interior breakpoints and
/// sums the pieces, each held to the same tolerances.
pub fn integrate_pieces<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    breaks: &[T],
    cfg: &QuadConfig<T>,
) -> QuadResult<T> {
    let mut total = QuadResult {
        value: T::zero(),
        abs_error: T::zero(),
        evaluations: 0,
        converged: true,
    };
    let mut lo = a;
    for &x in breaks.iter().filter(|&&x| x > a && x < b).chain(std::iter::once(&b)) {
        if x <= lo {
            continue;
        }
        let r = integrate(&mut f, lo, x, cfg);
        total.value = total.value + r.value;
        total.abs_error = total.abs_error + r.abs_error;
        total.evaluations += r.evaluations;
        total.converged &= r.converged;
        lo = x;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x: f64| x * x * x - 2.0 * x, 0.0, 3.0, &QuadConfig::default());
        assert_relative_eq!(r.value, 81.0 / 4.0 - 9.0, max_relative = 1e-14);
        assert!(r.converged);
    }

    #[test]
    fn sharp_peak() {
        let cfg = QuadConfig::new(1e-12, 1e-10);
        let r = integrate(|x: f64| (-x * 50.0).exp(), 0.0, 100.0, &cfg);
        assert_relative_eq!(r.value, 1.0 / 50.0, max_relative = 1e-10);
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 1e-10, 1.0, &cfg);
        assert_relative_eq!(r.value, 2.0 - 2e-5, max_relative = 1e-8);
    }

    #[test]
    fn reversed_and_empty() {
        let cfg = QuadConfig::default();
        let r = integrate(|x: f64| x, 1.0, 0.0, &cfg);
        assert_relative_eq!(r.value, -0.5, max_relative = 1e-14);
        assert_eq!(integrate(|x: f64| x, 2.0, 2.0, &cfg).value, 0.0);
    }

    #[test]
    fn pieces_match_whole() {
        let cfg = QuadConfig::new(1e-13, 1e-12);
        let f = |x: f64| (x.sin() + 1.0) / (1.0 + x);
        let whole = integrate(f, 0.0, 50.0, &cfg).value;
        let split = integrate_pieces(f, 0.0, 50.0, &[-1.0, 1.0, 10.0, 10.0, 70.0], &cfg).value;
        assert_relative_eq!(whole, split, max_relative = 1e-11);
    }
}
