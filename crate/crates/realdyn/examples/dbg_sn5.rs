fn main() {
    use realdyn::*;
    use realdyn::real::{Precision, Real};
    let prec = Precision::DOUBLE;
    // Locate the period-5 saddle-node root: bisect on existence of an
    // attracting period-5 orbit.
    let has5 = |c: f64| -> bool {
        let m = MapSpec::quadratic(c, prec);
        realdyn::orbit::find_periodic_orbits(&m, 5, 3000)
            .iter()
            .any(|o| o.period == 5 && o.is_attracting())
    };
    let (mut inside, mut outside) = (-1.6255f64, -1.624f64);
    assert!(has5(inside) && !has5(outside));
    for _ in 0..40 { let m = (inside+outside)/2.0; if has5(m) { inside = m } else { outside = m } }
    let root = inside;
    println!("period-5 saddle-node root ~ {root:.12}");
    for eps in [1e-7, 1e-8] {
        let m = MapSpec::quadratic(root + eps, prec); // just outside the window
        let i0 = realdyn::nests::alpha_interval(&m).unwrap();
        let c0 = Real::from(0.0);
        let nest = realdyn::nests::principal_nest(&m, &i0, &c0, 4000, 400_000).unwrap();
        let cas = realdyn::nests::detect_cascades(&m, &nest);
        for cc in &cas {
            println!("eps={eps:.0e}: cascade start={} len={} rt={} type={:?}", cc.start_level, cc.length, cc.return_time, cc.return_type);
        }
        if let Some(long) = cas.iter().max_by_key(|c| c.length) {
            if long.length >= 8 {
                match realdyn::enhanced::enhanced_cascade_nest(&m, &i0, long, 0, 8, 500_000) {
                    Ok(en) => {
                        println!("  en steps {} terminal {:?} ", en.steps.len(), en.terminal.as_ref().map(|t| (t.verified, t.via_short_step)));
                        for s in &en.steps { println!("    p={} r={} w={:.3e}", s.pullback_time, s.min_return_time, s.piece.len().to_f64()); }
                    }
                    Err(e) => println!("  en ERR {e}"),
                }
            }
        }
    }
}
