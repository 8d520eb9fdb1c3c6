use cvqkd_core::channel::{self, calibration_traces, ChannelParams, DetectorParams};
use cvqkd_core::dsp::RationalResampler;
use cvqkd_core::estimation::estimate_channel;
use cvqkd_core::pipeline::{run_simulation, SimulationConfig};
use cvqkd_core::rxdsp::recover;
use cvqkd_core::txdsp::{self, pre_emphasis, upsample_shape};
use cvqkd_core::{Constellation, Origin, RxConfig, SymbolStream, TxConfig};
use num_complex::Complex;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn stream(n: usize, seed: u64, rate: f64) -> SymbolStream<f64> {
    Constellation::<f64>::build(64, 0.129, 1.03).unwrap().sample(n, rate, seed).unwrap()
}

fn combine(a: &SymbolStream<f64>, b: &SymbolStream<f64>, x: f64, y: f64) -> SymbolStream<f64> {
    let symbols = a.symbols.iter().zip(&b.symbols).map(|(p, q)| p * x + q * y).collect();
    SymbolStream { symbols, ..a.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tx_chain_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let cfg = TxConfig::default();
        let (a, b) = (stream(256, s1, cfg.symbol_rate), stream(256, s2, cfg.symbol_rate));
        let run = |s: &SymbolStream<f64>| {
            pre_emphasis(&upsample_shape(s, &cfg).unwrap(), &cfg.response, cfg.pre_emphasis_floor).unwrap().samples
        };
        let (wa, wb, wc) = (run(&a), run(&b), run(&combine(&a, &b, x, y)));
        let scale = wc.iter().map(|z| z.norm()).fold(1e-12, f64::max);
        for ((p, q), r) in wa.iter().zip(&wb).zip(&wc) {
            prop_assert!((p * x + q * y - r).norm() < 1e-9 * scale);
        }
    }
}

/// Noise-free chain: no loss, no excess noise, no offsets and no detector
/// noise. Calibration traces are white, so whitening is close to identity.
#[test]
fn impairment_free_chain_returns_symbols() {
    let tx_cfg = TxConfig { symbol_rate: 8e9, ..TxConfig::default() };
    let rx_cfg = RxConfig { symbol_rate: 8e9, pilot_freq_nominal: tx_cfg.pilot_freq, ..RxConfig::default() };
    let sent = stream(40_000, 3, tx_cfg.symbol_rate);
    let tx = txdsp::transmit(&sent, &tx_cfg).unwrap();
    let quiet = ChannelParams {
        distance_km: 0.0,
        coupling_eff: 1.0,
        excess_noise: 0.0,
        freq_offset: 0.0,
        linewidth: 0.0,
        delay_samples: 0,
        ..ChannelParams::default()
    };
    let out = channel::propagate(&tx.waveform, &quiet, 1).unwrap();
    let resampled = RationalResampler::between(out.sample_rate, rx_cfg.adc_rate).unwrap().process(&out.samples);
    let trace = cvqkd_core::Waveform::new(resampled, rx_cfg.adc_rate, Origin::Channel).unwrap().advance(Origin::Rx).unwrap();

    let det = DetectorParams { rx_bandwidth: None, adc_bits: 16, ..DetectorParams::default() };
    let (vac, el) = calibration_traces::<f64>(&det, 1 << 20, 5).unwrap();
    let rx = recover(&trace, &vac, &el, &sent, tx_cfg.pilot_freq, &rx_cfg).unwrap();

    let first = rx.symbols.first_symbol;
    let reference = &sent.symbols[first..first + rx.symbols.len()];
    let got = &rx.symbols.symbols;
    let num: Complex<f64> = reference.iter().zip(got).map(|(a, b)| b * a.conj()).sum();
    let den: f64 = reference.iter().map(|a| a.norm_sqr()).sum();
    let g = num / den;
    let err: f64 = reference.iter().zip(got).map(|(a, b)| (b / g - a).norm_sqr()).sum();
    let nmse = err / den;
    assert!(nmse < 1e-4, "nmse {nmse:e}");
}

#[test]
fn detection_keeps_snu_bookkeeping() {
    let cfg = SimulationConfig { block_n: 200_000, ..SimulationConfig::default() };
    let out = run_simulation::<f64>(&cfg).unwrap();
    let (eta, v_el) = (cfg.detector.efficiency, cfg.detector.v_el);
    let t = out.diagnostics.transmittance_truth;
    let eps = cfg.channel.excess_noise;
    let v_mod = cfg.constellation.v_mod;
    let noise = 1.0 + eta * t * eps / 2.0 + v_el;
    let expected = eta * t * v_mod / 2.0 + noise;
    let syms = &out.recovered.symbols;
    let n = syms.len() as f64;
    let mean: Complex<f64> = syms.iter().sum::<Complex<f64>>() / n;
    let var = syms.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (2.0 * n);
    assert!((var / expected - 1.0).abs() < 0.03, "per-quadrature variance {var} vs {expected}");
    assert!((out.estimate.sigma2 / noise - 1.0).abs() < 0.02, "conditional variance {} vs {noise}", out.estimate.sigma2);
    assert!((out.estimate.v_el_hat - v_el).abs() < 0.005);
    assert!((out.estimate.t_hat / t - 1.0).abs() < 0.02);
}

#[test]
fn simulation_is_deterministic() {
    let cfg = SimulationConfig { block_n: 20_000, calibration_samples: 1 << 16, ..SimulationConfig::default() };
    let a = run_simulation::<f64>(&cfg).unwrap();
    let b = run_simulation::<f64>(&cfg).unwrap();
    assert_eq!(a.recovered.symbols, b.recovered.symbols);
    assert_eq!(a.estimate, b.estimate);
    let c = run_simulation::<f64>(&SimulationConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.recovered.symbols, c.recovered.symbols);
}

/// Symbol-level model `y = t x + noise` with known parameters.
fn synthetic(t: f64, eps: f64, v_el: f64, eta: f64, n: usize, seed: u64) -> (SymbolStream<f64>, Vec<Complex<f64>>) {
    let tx = stream(n, seed, 1e9);
    let gain = (eta * t / 2.0).sqrt();
    let sigma = (1.0 + eta * t * eps / 2.0 + v_el).sqrt();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let rx = tx.symbols.iter().map(|a| a * (2.0 * gain) + Complex::new(sigma * draw(), sigma * draw())).collect();
    (tx, rx)
}

#[test]
fn estimator_is_consistent_across_seeds() {
    let (t, eps, v_el, eta) = (0.733, 0.0159, 0.0503, 0.44);
    let stats = |n: usize| -> (f64, f64, f64) {
        let est: Vec<(f64, f64)> = (0..50u64)
            .map(|s| {
                let (tx, rx) = synthetic(t, eps, v_el, eta, n, 1000 + s);
                let e = estimate_channel(&tx, &rx, eta, v_el).unwrap();
                (e.t_hat, e.eps_hat_raw)
            })
            .collect();
        let m = est.iter().map(|e| e.0).sum::<f64>() / 50.0;
        let sd = (est.iter().map(|e| (e.0 - m).powi(2)).sum::<f64>() / 49.0).sqrt();
        let me = est.iter().map(|e| e.1).sum::<f64>() / 50.0;
        (m, sd, me)
    };
    let (m1, sd1, e1) = stats(100_000);
    let (m2, sd2, e2) = stats(400_000);
    for m in [m1, m2] {
        assert!((m / t - 1.0).abs() < 0.005, "mean t_hat {m}");
    }
    // Four times the block halves the spread.
    let ratio = sd1 / sd2;
    assert!((1.4..2.9).contains(&ratio), "spread ratio {ratio}");
    assert!((e1 - eps).abs() < 0.005 && (e2 - eps).abs() < 0.0025, "eps means {e1} {e2}");
}
