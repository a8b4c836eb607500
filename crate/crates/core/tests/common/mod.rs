#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use bmech_core::quantize::Grid;
use bmech_core::sysdsl::{parse_expr, Context, Env, Jet, SystemSpec};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FREE: &str = r#"{"name":"free","dim":1,"lagrangian":"0.5*m*v1^2","parameters":{"m":1},"domain":[{"min":-8,"max":8}]}"#;
pub const OSC: &str = r#"{"name":"osc","dim":1,"lagrangian":"0.5*m*v1^2 - 0.5*m*w^2*x1^2","parameters":{"m":1,"w":1},"domain":[{"min":-8,"max":8}]}"#;

pub fn spec(src: &str) -> SystemSpec {
    SystemSpec::from_json(src).unwrap()
}

/// Kernel `A exp(i(a x² − 2b x y + c y²)/2)`.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic {
    pub amp: Complex64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn free(t: f64) -> Self {
        let amp = (Complex64::new(0.0, 2.0 * std::f64::consts::PI * t)).powf(-0.5);
        Quadratic { amp, a: 1.0 / t, b: 1.0 / t, c: 1.0 / t }
    }

    pub fn mehler(t: f64) -> Self {
        let amp = (Complex64::new(0.0, 2.0 * std::f64::consts::PI * t.sin())).powf(-0.5);
        Quadratic { amp, a: 1.0 / t.tan(), b: 1.0 / t.sin(), c: 1.0 / t.tan() }
    }

    pub fn kernel(&self, x: f64, y: f64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        self.amp * (i * 0.5 * (self.a * x * x - 2.0 * self.b * x * y + self.c * y * y)).exp()
    }

    /// Classical action of the same quadratic form.
    pub fn action(&self, x: f64, y: f64) -> f64 {
        0.5 * (self.a * x * x - 2.0 * self.b * x * y + self.c * y * y)
    }

    /// `∫ K(x, y) exp(−(y−y0)²/(2σ²) + i k0 y) dy` in closed form.
    pub fn evolve_gaussian(&self, x: f64, y0: f64, sigma: f64, k0: f64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let p = Complex64::new(0.5 / (sigma * sigma), -0.5 * self.c);
        let q = -i * self.b * x + y0 / (sigma * sigma) + i * k0;
        let r = i * 0.5 * self.a * x * x - y0 * y0 / (2.0 * sigma * sigma);
        self.amp * (Complex64::new(std::f64::consts::PI, 0.0) / p).sqrt() * (q * q / (4.0 * p) + r).exp()
    }
}

pub fn gaussian(grid: &Grid, y0: f64, sigma: f64, k0: f64) -> DVector<Complex64> {
    DVector::from_iterator(
        grid.len(),
        grid.points().iter().map(|p| {
            let y = p[0];
            Complex64::new(-(y - y0).powi(2) / (2.0 * sigma * sigma), k0 * y).exp()
        }),
    )
}

/// Relative L² distance between numerically evolved Gaussian packets at
/// rest (width 1, centres −1, 0, 1) and the closed form, worst case.
pub fn probe_error(
    evolve: impl Fn(&DVector<Complex64>) -> DVector<Complex64>,
    grid: &Grid,
    oracle: &Quadratic,
) -> f64 {
    let mut worst = 0.0f64;
    for &y0 in &[-1.0, 0.0, 1.0] {
        {
            let k0 = 0.0;
            let psi0 = gaussian(grid, y0, 1.0, k0);
            let got = evolve(&psi0);
            let (mut num, mut den) = (0.0, 0.0);
            for (j, p) in grid.points().iter().enumerate() {
                let want = oracle.evolve_gaussian(p[0], y0, 1.0, k0);
                num += (got[j] - want).norm_sqr();
                den += want.norm_sqr();
            }
            worst = worst.max((num / den).sqrt());
        }
    }
    worst
}

pub fn golden_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden"))
}

pub fn diagnostic(bytes: &[u8]) -> String {
    match SystemSpec::from_bytes(bytes) {
        Ok(s) => format!("ok: {}\n", s.name),
        Err(e) => format!("{}: {}\n", e.class(), e),
    }
}

/// Compares every `golden/*.json` diagnostic with its `.expected` file,
/// rewriting the expected files first when `bless` is set.
pub fn check_golden(bless: bool) -> Result<usize, String> {
    let mut inputs: Vec<_> = fs::read_dir(golden_dir())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    inputs.sort();
    for input in &inputs {
        let bytes = fs::read(input).map_err(|e| e.to_string())?;
        let got = diagnostic(&bytes);
        if got != diagnostic(&bytes) {
            return Err(format!("{} is not repeatable", input.display()));
        }
        let expected = input.with_extension("expected");
        if bless {
            fs::write(&expected, &got).map_err(|e| e.to_string())?;
        }
        let want = fs::read_to_string(&expected).map_err(|_| format!("missing {}", expected.display()))?;
        if got != want {
            return Err(format!("{}: got {got:?}, want {want:?}", input.display()));
        }
    }
    Ok(inputs.len())
}

/// Feeds `n` random inputs to the system-file and expression parsers.
pub fn fuzz(seed: u64, n: u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = br#"{"name":"f","dim":2,"lagrangian":"0.5*m*(v1^2+v2^2) - sin(x1)*x2^2","parameters":{"m":1.5},"domain":[{"min":-1,"max":1},{"min":0,"max":3,"periodic":true}]}"#;
    let alphabet = b"x1v2p t()+-*/^.,0123456789eE sincoexplgqrtab{}[]:\"\\\n";
    let ctx = Context::lagrangian("fuzz", 2).with_params(["m"]);
    let mut params = BTreeMap::new();
    params.insert("m".to_string(), 1.5);
    for round in 0..n {
        let bytes: Vec<u8> = match round % 3 {
            0 => (0..rng.random_range(0..64)).map(|_| rng.random()).collect(),
            1 => (0..rng.random_range(0..48)).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect(),
            _ => {
                let mut b = base.to_vec();
                for _ in 0..rng.random_range(1..4) {
                    let i = rng.random_range(0..b.len());
                    match rng.random_range(0..3) {
                        0 => b[i] = alphabet[rng.random_range(0..alphabet.len())],
                        1 => {
                            b.remove(i);
                        }
                        _ => b.insert(i, alphabet[rng.random_range(0..alphabet.len())]),
                    }
                }
                b
            }
        };
        let _ = SystemSpec::from_bytes(&bytes);
        if let Ok(text) = std::str::from_utf8(&bytes) {
            if let Ok(e) = parse_expr(text, &ctx) {
                let (x, v, t) = ([0.3, -0.2], [1.0, 0.5], 0.1);
                let _ = e.value(&Env::new(0).x(&x).v(&v).t(&t).params(&params));
            }
        }
    }
}

/// Central differences extrapolated to zero step (Ridders' tableau),
/// keeping the start step with the smallest error estimate.
pub fn ridders_gradient(f: &dyn Fn(&[f64]) -> f64, at: &[f64]) -> Vec<f64> {
    (0..at.len())
        .map(|i| {
            [2e-2, 2e-3, 2e-4]
                .iter()
                .map(|h0| ridders(f, at, i, h0 * at[i].abs().max(1.0)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        })
        .collect()
}

fn ridders(f: &dyn Fn(&[f64]) -> f64, at: &[f64], i: usize, h0: f64) -> (f64, f64) {
    const CON: f64 = 1.4;
    const N: usize = 10;
    let diff = |h: f64| {
        let mut p = at.to_vec();
        let mut m = at.to_vec();
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    };
    let mut h = h0;
    let mut tab = vec![vec![0.0; N]; N];
    tab[0][0] = diff(h);
    let (mut best, mut err) = (tab[0][0], f64::INFINITY);
    for k in 1..N {
        h /= CON;
        tab[0][k] = diff(h);
        let mut fac = CON * CON;
        for j in 1..=k {
            tab[j][k] = (tab[j - 1][k] * fac - tab[j - 1][k - 1]) / (fac - 1.0);
            fac *= CON * CON;
            let e = (tab[j][k] - tab[j - 1][k]).abs().max((tab[j][k] - tab[j - 1][k - 1]).abs());
            if e <= err {
                err = e;
                best = tab[j][k];
            }
        }
        if (tab[k][k] - tab[k - 1][k - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    (best, err)
}

/// Jet derivatives of every corpus expression against Ridders differences
/// at three points: gradients to 1e−6 relative, Hessians (optional) to 1e−5.
/// Returns the number of expressions.
pub fn check_gradient_corpus(hessians: bool) -> Result<usize, String> {
    let corpus = fs::read_to_string(golden_dir().join("gradient_corpus.txt")).map_err(|e| e.to_string())?;
    let ctx = Context::lagrangian("corpus", 2);
    let points = [[0.37, -0.81, 1.23], [-1.1, 0.45, -0.6], [0.05, 1.7, 0.3]];
    let mut count = 0;
    for line in corpus.lines().filter(|l| !l.trim().is_empty()) {
        let e = parse_expr(line, &ctx).map_err(|err| format!("{line}: {err}"))?;
        count += 1;
        let jet = |z: &[f64]| {
            let seeds = Jet::seed(z);
            e.eval(&Env::new(3).x(&seeds[..2]).v(&seeds[2..])).unwrap()
        };
        for pt in &points {
            let f = |z: &[f64]| e.value(&Env::new(0).x(&z[..2]).v(&z[2..])).unwrap();
            let j = jet(pt);
            if (j.value - f(pt)).abs() > 1e-14 * j.value.abs().max(1.0) {
                return Err(format!("{line}: jet value {} vs {}", j.value, f(pt)));
            }
            for (k, (a, b)) in j.grad.iter().zip(ridders_gradient(&f, pt)).enumerate() {
                if (a - b).abs() > 1e-6 * a.abs().max(1.0) {
                    return Err(format!("{line} d/dz{k} at {pt:?}: jet {a} fd {b}"));
                }
            }
            if !hessians {
                continue;
            }
            for k in 0..3 {
                let gk = |z: &[f64]| jet(z).grad[k];
                for (l, b) in ridders_gradient(&gk, pt).iter().enumerate() {
                    let a = j.h(k, l);
                    if (a - b).abs() > 1e-5 * a.abs().max(1.0) {
                        return Err(format!("{line} H[{k}][{l}]: {a} vs {b}"));
                    }
                }
            }
        }
    }
    Ok(count)
}
