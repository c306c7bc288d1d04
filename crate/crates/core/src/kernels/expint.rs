//! Generalized exponential integrals `E_n(z) = ∫_1^∞ e^{-zx} x^{-n} dx` for `Re z >= 0`.

use num_complex::Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Evaluates `E_n(z)` directly: power series for `|z| <= 1`, Lentz continued fraction otherwise.
pub fn expint(n: u32, z: Complex64) -> Complex64 {
    assert!(n >= 1, "E_n is defined here for n >= 1");
    if z == Complex64::new(0.0, 0.0) {
        return if n == 1 {
            Complex64::new(f64::INFINITY, 0.0)
        } else {
            Complex64::new(1.0 / (n - 1) as f64, 0.0)
        };
    }
    if z.norm() > 1.0 {
        continued_fraction(n, z)
    } else {
        series(n, z)
    }
}

fn continued_fraction(n: u32, z: Complex64) -> Complex64 {
    let nf = n as f64;
    let tiny = 1e-300;
    let mut b = z + nf;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..MAX_ITER {
        let a = -(i as f64) * (nf - 1.0 + i as f64);
        b += 2.0;
        d = (d * a + b).inv();
        c = b + c.inv() * a;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < EPS {
            break;
        }
    }
    h * (-z).exp()
}

fn series(n: u32, z: Complex64) -> Complex64 {
    let nm1 = (n - 1) as i64;
    let mut ans = if nm1 != 0 {
        Complex64::new(1.0 / nm1 as f64, 0.0)
    } else {
        -z.ln() - EULER_GAMMA
    };
    let mut fact = Complex64::new(1.0, 0.0);
    for i in 1..MAX_ITER as i64 {
        fact *= -z / i as f64;
        let del = if i != nm1 {
            -fact / (i - nm1) as f64
        } else {
            let psi = -EULER_GAMMA + (1..=nm1).map(|k| 1.0 / k as f64).sum::<f64>();
            fact * (-z.ln() + psi)
        };
        ans += del;
        if del.norm() < ans.norm() * EPS {
            break;
        }
    }
    ans
}

/// Returns `[E_1(z), ..., E_{n_max}(z)]`, seeding at `n ≈ |z|` and recurring outward in
/// the stable direction. `E_1(0)` is reported as infinite.
pub fn expint_family(n_max: u32, z: Complex64) -> Vec<Complex64> {
    let n_max = n_max.max(1);
    let mut out = vec![Complex64::new(0.0, 0.0); n_max as usize];
    if z == Complex64::new(0.0, 0.0) {
        for n in 1..=n_max {
            out[n as usize - 1] = expint(n, z);
        }
        return out;
    }
    let emz = (-z).exp();
    let seed = (z.norm().round() as u32).clamp(1, n_max);
    out[seed as usize - 1] = expint(seed, z);
    // E_{n+1} = (e^{-z} - z E_n) / n, stable for n >= |z|
    for n in seed..n_max {
        let en = out[n as usize - 1];
        out[n as usize] = (emz - z * en) / n as f64;
    }
    // E_n = (e^{-z} - n E_{n+1}) / z, stable for n <= |z|
    for n in (1..seed).rev() {
        let next = out[n as usize];
        out[n as usize - 1] = (emz - next * n as f64) / z;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn known_real_values() {
        // E_1(1) = 0.21938393439552026, E_2(1) = 0.14849550677592205
        assert!((expint(1, c(1.0, 0.0)).re - 0.219_383_934_395_520_26).abs() < 1e-14);
        assert!((expint(2, c(1.0, 0.0)).re - 0.148_495_506_775_922_05).abs() < 1e-14);
        assert!((expint(1, c(0.5, 0.0)).re - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((expint(3, c(0.0, 0.0)).re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_high_precision_reference() {
        // 30-digit reference values
        let table = [
            (3, c(0.3, 0.4), c(0.23630537174368627048, -0.16568248269609063813)),
            (3, c(2.0, 5.0), c(0.01729836347182624766, 0.0082952682031136147485)),
            (3, c(0.0, 3.0), c(-0.16834222335402208747, 0.16407583545016220761)),
            (3, c(4.0, -1.0), c(0.0010966103307580273763, 0.0024942634803369552815)),
            (3, c(0.05, -0.7), c(0.17435687492402490477, 0.34425425027291096062)),
            (3, c(0.0, 40.0), c(-0.019725923446093092361, 0.015170604895252458713)),
            (3, c(0.2, 300.0), c(0.0027273918362143342657, 0.000089391565288481885578)),
            (5, c(0.3, 0.4), c(0.14584515071497716342, -0.081961882749515824945)),
            (5, c(2.0, 5.0), c(0.013174995567712910965, 0.0091329512016022368636)),
            (5, c(0.0, 3.0), c(-0.15652145864956160424, 0.089161245547522903087)),
            (5, c(4.0, -1.0), c(0.00092460018216215377511, 0.0019270810659110335038)),
            (5, c(0.05, -0.7), c(0.13803198402715733817, 0.17808382216308941241)),
            (5, c(0.0, 40.0), c(-0.020321924198482436219, 0.014101262687374456189)),
            (5, c(0.2, 300.0), c(0.0027264207152687461644, 0.00010755229576070073914)),
            (9, c(0.3, 0.4), c(0.079673988774088072875, -0.038880222460801916889)),
            (9, c(2.0, 5.0), c(0.0080024085814150043756, 0.0084234899823228788585)),
            (9, c(0.0, 3.0), c(-0.11006997654610691987, 0.027563563598392456733)),
            (9, c(4.0, -1.0), c(0.00069009472085178248497, 0.0013071858520464095048)),
            (9, c(0.05, -0.7), c(0.081871920475402722101, 0.084017067917954163451)),
            (9, c(0.0, 40.0), c(-0.021173791512388767629, 0.011877219077792301517)),
            (9, c(0.2, 300.0), c(0.002723754662388751703, 0.00014380791045051272209)),
            (17, c(0.3, 0.4), c(0.041320278609984758316, -0.018753856502415660545)),
            (17, c(2.0, 5.0), c(0.0038446007134425742611, 0.0060304261330521281161)),
            (17, c(0.0, 3.0), c(-0.06104674862951741966, 0.0033388361155034579077)),
            (17, c(4.0, -1.0), c(0.00044926902616892619473, 0.00078578908938940637496)),
            (17, c(0.05, -0.7), c(0.043445760782455446683, 0.040185967626557584752)),
            (17, c(0.0, 40.0), c(-0.021604368250856913348, 0.0075121957000116700721)),
            (17, c(0.2, 300.0), c(0.0027155485881286871195, 0.00021592213453414965707)),
        ];
        for (n, z, want) in table {
            let got = expint(n, z);
            assert!((got - want).norm() < 1e-13 * want.norm(), "n={n} z={z}: {got} vs {want}");
            let fam = expint_family(17, z)[n as usize - 1];
            assert!((fam - want).norm() < 1e-13 * want.norm(), "family n={n} z={z}");
        }
    }

    #[test]
    fn family_agrees_with_direct_evaluation() {
        for &z in &[c(0.0, 40.0), c(3.0, 20.0), c(0.2, 0.1), c(7.0, 0.0), c(0.0, 1200.0)] {
            let fam = expint_family(17, z);
            for n in 2..=17u32 {
                let direct = expint(n, z);
                let got = fam[n as usize - 1];
                assert!(
                    (got - direct).norm() <= 1e-12 * direct.norm().max(1e-300),
                    "n={n} z={z}: {got} vs {direct}"
                );
            }
        }
    }
}
