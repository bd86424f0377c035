//! Adaptive Gauss–Kronrod (7/15) quadrature used as a normalisation oracle.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

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
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// ∫_a^b f.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    adapt(&f, a, b, 1e-13, 40)
}

/// ∫ f over ℝ via x = center + scale·tan θ, split at the centre.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, center: f64, scale: f64) -> f64 {
    let g = |th: f64| {
        let c = th.cos();
        if c <= 0.0 {
            return 0.0;
        }
        f(center + scale * th.tan()) * scale / (c * c)
    };
    adapt(&g, -FRAC_PI_2, 0.0, 1e-13, 40) + adapt(&g, 0.0, FRAC_PI_2, 1e-13, 40)
}

/// ∫_{-∞}^{x} f, using the same tangent map.
pub fn integrate_real_line_below<F: Fn(f64) -> f64>(f: F, x: f64, center: f64, scale: f64) -> f64 {
    let g = |th: f64| {
        let c = th.cos();
        if c <= 0.0 {
            return 0.0;
        }
        f(center + scale * th.tan()) * scale / (c * c)
    };
    let top = ((x - center) / scale).atan();
    if top <= 0.0 {
        adapt(&g, -FRAC_PI_2, top, 1e-13, 40)
    } else {
        adapt(&g, -FRAC_PI_2, 0.0, 1e-13, 40) + adapt(&g, 0.0, top, 1e-13, 40)
    }
}

/// ∫_a^∞ f.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    let g = |th: f64| {
        let c = th.cos();
        if c <= 0.0 {
            return 0.0;
        }
        f(a + th.tan()) / (c * c)
    };
    adapt(&g, 0.0, FRAC_PI_2, 1e-13, 40)
}
