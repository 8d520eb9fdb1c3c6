use cvqkd_core::Constellation;
use proptest::prelude::*;

fn order() -> impl Strategy<Value = usize> {
    prop_oneof![Just(16usize), Just(32), Just(64)]
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrant_symmetric(m in order(), nu in 0.0f64..0.6, v_mod in 0.05f64..4.0) {
        let c = Constellation::<f64>::build(m, nu, v_mod).unwrap();
        let pts = c.points();
        for (a, p) in pts.iter().zip(c.probs()) {
            for image in [a.conj(), -a, -a.conj(), a * num_complex::Complex::i()] {
                let k = pts.iter().position(|b| (b - image).norm() < 1e-12).expect("image point exists");
                prop_assert!((c.probs()[k] - p).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn variance_hits_target(m in order(), nu in 0.0f64..0.6, v_mod in 0.05f64..4.0) {
        let c = Constellation::<f64>::build(m, nu, v_mod).unwrap();
        let second: f64 = c.points().iter().zip(c.probs()).map(|(a, p)| p * a.norm_sqr()).sum();
        prop_assert!((2.0 * second - v_mod).abs() < 1e-9);
        prop_assert!((c.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shaping_concentrates_probability(m in order(), nu in 0.01f64..0.5, dnu in 0.01f64..0.2) {
        let a = Constellation::<f64>::build(m, nu, 1.0).unwrap();
        let b = Constellation::<f64>::build(m, nu + dnu, 1.0).unwrap();
        let raw = |c: &Constellation<f64>| -> f64 {
            c.grid().iter().zip(c.probs()).map(|(&(i, j), p)| p * f64::from(i * i + j * j)).sum()
        };
        prop_assert!(raw(&b) < raw(&a));
        prop_assert!(entropy(b.probs()) < entropy(a.probs()));
    }

    #[test]
    fn sampling_is_pure(m in order(), seed in any::<u64>()) {
        let c = Constellation::<f64>::build(m, 0.15, 1.0).unwrap();
        let a = c.sample(500, 1e9, seed).unwrap();
        let b = c.sample(500, 1e9, seed).unwrap();
        prop_assert_eq!(&a.indices, &b.indices);
        prop_assert_eq!(&a.symbols, &b.symbols);
    }
}

#[test]
fn empirical_variance_converges() {
    let c = Constellation::<f64>::build(64, 0.129, 1.03).unwrap();
    let s = c.sample(10_000_000, 1e9, 1).unwrap();
    let v = 2.0 * s.symbols.iter().map(|a| a.norm_sqr()).sum::<f64>() / s.len() as f64;
    assert!((v - 1.03).abs() < 0.01, "{v}");
}
