use cvqkd_core::experiments::*;

#[test]
fn shaping_search_never_loses_rate() {
    let fixed = SweepConfig { optimize_nu: false, ..SweepConfig::default() };
    let tuned = SweepConfig::default();
    for d in [0.0, 7.0, 15.0] {
        let (a, b) = (sweep_point(d, &fixed).unwrap(), sweep_point(d, &tuned).unwrap());
        for (x, y) in [(a.m16, b.m16), (a.m32, b.m32), (a.m64, b.m64)] {
            assert!(y >= x * (1.0 - 1e-9), "d={d}: {y} < {x}");
        }
        assert_eq!(a.gg02, b.gg02);
        assert!(b.m64 <= b.gg02);
    }
}

#[test]
fn headlines_scale_with_symbol_rate() {
    let a = headline_5km(10e9).unwrap();
    let b = headline_5km(5e9).unwrap();
    assert!((a / b - 2.0).abs() < 1e-9);
    assert!(headline_10km().unwrap() < a);
}

#[test]
fn table_rows_order_by_rate() {
    let rows = table1().unwrap();
    for r in &rows {
        assert!(r.r_finite < r.r_inf);
        assert!((r.skr_finite_gbps - r.r_finite * r.row.symbol_rate_gbd).abs() < 1e-12);
    }
    // The 64-QAM row has the lowest excess noise and the highest rate.
    let best = rows.iter().max_by(|a, b| a.r_inf.total_cmp(&b.r_inf)).unwrap();
    assert_eq!(best.row.m, 64);
}
