//! Standard normal primitives: density, CDF, quantile, the bivariate
//! orthant/rectangle probability and truncated-normal sampling.
//!
//! The univariate CDF is built on `libm::erfc` (double precision, well under
//! 1e-15 absolute error). The quantile is Wichura's AS241 (`PPND16`), relative
//! accuracy about 1e-16. The bivariate upper orthant follows Genz's `BVND`
//! (Drezner–Wesolowsky Gauss–Legendre scheme with the large-|r| expansion),
//! absolute accuracy near machine precision.

use rand::RngCore;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

const TWO_PI: f64 = 2.0 * PI;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), computed without cancellation.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Error function in the form used by the variance argument for the probit
/// link: erf(x) = 2Φ(√2·x) − 1.
#[inline]
pub fn erf(x: f64) -> f64 {
    2.0 * cdf(SQRT_2 * x) - 1.0
}

/// Standard normal quantile Φ⁻¹(p). Returns ∓∞ at p = 0 / 1 and NaN outside [0, 1].
pub fn inv_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    #[inline]
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
    }

    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

// Gauss–Legendre half-rules (abscissae in (-1, 0), weights) for 6, 12 and 20 points.
const GL6: [(f64, f64); 3] = [
    (-0.932_469_514_203_152_2, 0.171_324_492_379_170_5),
    (-0.661_209_386_466_264_7, 0.360_761_573_048_138_4),
    (-0.238_619_186_083_197, 0.467_913_934_572_690_4),
];
const GL12: [(f64, f64); 6] = [
    (-0.981_560_634_246_719_1, 0.047_175_336_386_511_77),
    (-0.904_117_256_370_475, 0.106_939_325_995_318_3),
    (-0.769_902_674_194_305, 0.160_078_328_543_346_4),
    (-0.587_317_954_286_617_1, 0.203_167_426_723_065_9),
    (-0.367_831_498_998_180_2, 0.233_492_536_538_354_7),
    (-0.125_233_408_511_469_2, 0.249_147_045_813_402_9),
];
const GL20: [(f64, f64); 10] = [
    (-0.993_128_599_185_094_9, 0.017_614_007_139_152_12),
    (-0.963_971_927_277_913_8, 0.040_601_429_800_386_94),
    (-0.912_234_428_251_325_9, 0.062_672_048_334_109_06),
    (-0.839_116_971_822_218_8, 0.083_276_741_576_704_75),
    (-0.746_331_906_460_150_8, 0.101_930_119_817_240_4),
    (-0.636_053_680_726_515, 0.118_194_531_961_518_4),
    (-0.510_867_001_950_827_1, 0.131_688_638_449_176_6),
    (-0.373_706_088_715_419_6, 0.142_096_109_318_382_1),
    (-0.227_785_851_141_645_1, 0.149_172_986_472_603_7),
    (-0.076_526_521_133_497_33, 0.152_753_387_130_725_9),
];

/// Pr(X > h, Y > k) for a standard bivariate normal with correlation `r`.
///
/// Infinite limits are allowed. `r` is clamped to [-1, 1].
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return sf(k);
    }
    if k == f64::NEG_INFINITY {
        return sf(h);
    }
    let r = r.clamp(-1.0, 1.0);
    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };

    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for &(x, w) in rule {
            let sn = (asr * (x + 1.0) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            let sn = (asr * (1.0 - x) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        return bvn * asr / (2.0 * TWO_PI) + sf(h) * sf(k);
    }

    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if r.abs() < 1.0 {
        let as_ = (1.0 - r) * (1.0 + r);
        let mut a = as_.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(bs / as_ + hk) / 2.0).exp()
            * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-hk / 2.0).exp() * TWO_PI.sqrt() * cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(x, w) in rule {
            let xs = (a * (x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            bvn += a
                * w
                * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
                    - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
            let xs = as_ * (1.0 - x).powi(2) / 4.0;
            let rs = (1.0 - xs).sqrt();
            bvn += a
                * w
                * (-(bs / xs + hk) / 2.0).exp()
                * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn + sf(h.max(k))
    } else {
        -bvn + (sf(h) - sf(k)).max(0.0)
    }
}

/// Pr(X ≤ x, Y ≤ y) for a standard bivariate normal with correlation `r`.
#[inline]
pub fn bvn_cdf(x: f64, y: f64, r: f64) -> f64 {
    bvn_upper(-x, -y, r)
}

/// Pr(lo1 < X ≤ hi1, lo2 < Y ≤ hi2) for a standard bivariate normal with
/// correlation `r`. Bounds may be infinite.
pub fn bvn_rectangle(lo1: f64, hi1: f64, lo2: f64, hi2: f64, r: f64) -> f64 {
    if !(lo1 < hi1 && lo2 < hi2) {
        return 0.0;
    }
    let p = bvn_cdf(hi1, hi2, r) - bvn_cdf(lo1, hi2, r) - bvn_cdf(hi1, lo2, r) + bvn_cdf(lo1, lo2, r);
    p.clamp(0.0, 1.0)
}

/// Uniform draw on the open interval (0, 1) with 53 random bits.
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inversion.
#[inline]
pub fn std_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    inv_cdf(open01(rng))
}

/// Draw from N(mean, sd²) truncated to the interval (lo, hi).
///
/// Inversion is done on whichever tail keeps the bracketing probabilities
/// representable; intervals beyond the reach of double precision fall back to
/// Robert's exponential rejection sampler.
pub fn truncated_normal<R: RngCore + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    mean + sd * truncated_std_normal(rng, a, b)
}

fn truncated_std_normal<R: RngCore + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    if a >= 0.0 {
        // upper tail: work with survival probabilities
        let pa = sf(a);
        let pb = sf(b);
        if pa - pb > 1e-300 && pa > 1e-290 {
            let u = pb + (pa - pb) * open01(rng);
            return (-inv_cdf(u)).clamp(a, b);
        }
        tail_rejection(rng, a, b)
    } else if b <= 0.0 {
        -truncated_std_normal(rng, -b, -a)
    } else {
        let pa = cdf(a);
        let pb = cdf(b);
        let u = pa + (pb - pa) * open01(rng);
        inv_cdf(u).clamp(a, b)
    }
}

// Robert (1995) exponential proposal for the tail [a, b), a > 0.
fn tail_rejection<R: RngCore + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let rate = (a + (a * a + 4.0).sqrt()) / 2.0;
    for _ in 0..10_000 {
        let z = a - open01(rng).ln() / rate;
        if z >= b {
            continue;
        }
        if open01(rng).ln() <= -0.5 * (z - rate) * (z - rate) {
            return z;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_reference_values() {
        // high-precision references
        let cases = [
            (0.0, 0.5),
            (-1.0, 0.158_655_253_931_457_05),
            (1.0, 0.841_344_746_068_542_9),
            (0.5, 0.691_462_461_274_013_1),
            (-5.0, 2.866_515_718_791_939e-7),
            (1.959_963_984_540_054, 0.975),
        ];
        for (x, p) in cases {
            assert!((cdf(x) - p).abs() < 1e-15, "Φ({x}) = {}", cdf(x));
        }
        assert!((sf(8.0) / 6.220_960_574_271_785e-16 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let mut x = -8.0;
        while x <= 8.0 {
            // invert the lower tail, where Φ carries full relative precision
            let back = if x <= 0.0 { inv_cdf(cdf(x)) } else { -inv_cdf(sf(x)) };
            assert!((back - x).abs() < 1e-12, "x={x} back={back}");
            x += 0.0137;
        }
        assert!((inv_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert!((inv_cdf(1e-20) + 9.262_340_089_798_408).abs() < 1e-10);
        assert_eq!(inv_cdf(0.0), f64::NEG_INFINITY);
        assert!(inv_cdf(1.5).is_nan());
    }

    #[test]
    fn orthant_identity() {
        for &rho in &[-0.99, -0.95, -0.5, -0.2, 0.0, 0.1, 0.5, 0.8, 0.93, 0.999] {
            let expect = 0.25 + f64::asin(rho) / TWO_PI;
            assert!((bvn_cdf(0.0, 0.0, rho) - expect).abs() < 1e-14, "rho={rho}");
        }
    }

    #[test]
    fn degenerate_correlations() {
        // comonotone: Pr(X ≤ x, X ≤ y) = Φ(min)
        assert!((bvn_cdf(0.3, -0.2, 1.0) - cdf(-0.2)).abs() < 1e-15);
        // countermonotone: Pr(X ≤ x, −X ≤ y) = max(0, Φ(x) − Φ(−y))
        assert!((bvn_cdf(0.3, 0.2, -1.0) - (cdf(0.3) - cdf(-0.2))).abs() < 1e-15);
        assert_eq!(bvn_cdf(-0.3, -0.2, -1.0), 0.0);
    }

    #[test]
    fn independence_factorizes() {
        for &(x, y) in &[(0.3, -1.2), (-2.0, 2.0), (1.5, 0.7)] {
            assert!((bvn_cdf(x, y, 0.0) - cdf(x) * cdf(y)).abs() < 1e-15);
        }
    }

    #[test]
    fn truncated_draws_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bounds = [
            (0.0, f64::INFINITY),
            (f64::NEG_INFINITY, 0.0),
            (0.0, 1.3),
            (40.0, f64::INFINITY),
            (f64::NEG_INFINITY, -45.0),
            (-0.1, 0.1),
        ];
        for &(lo, hi) in &bounds {
            for _ in 0..2000 {
                let z = truncated_normal(&mut rng, 0.4, 1.0, lo, hi);
                assert!(z >= lo && z <= hi, "{z} not in ({lo},{hi})");
            }
        }
    }

    #[test]
    fn truncated_mean_matches_closed_form() {
        // E[Z | Z > a] = φ(a) / (1 − Φ(a))
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &a in &[-1.0, 0.0, 1.5, 6.0] {
            let n = 200_000;
            let s: f64 = (0..n)
                .map(|_| truncated_normal(&mut rng, 0.0, 1.0, a, f64::INFINITY))
                .sum();
            let expect = pdf(a) / sf(a);
            assert!((s / n as f64 - expect).abs() < 0.01, "a={a}");
        }
    }
}
