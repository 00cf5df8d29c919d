fn main() {
    use realdyn::*;
    use realdyn::real::{Precision, Real};
    let m = MapSpec::quadratic(-1.75 + 1e-7, Precision::DOUBLE);
    let i0 = realdyn::nests::alpha_interval(&m).unwrap();
    let c = Real::from(0.0);
    let nest = realdyn::nests::principal_nest(&m, &i0, &c, 3000, 200_000).unwrap();
    let cascades = realdyn::nests::detect_cascades(&m, &nest);
    let long = cascades.iter().max_by_key(|c| c.length).unwrap();
    println!("cascade: start={} len={} rt={} Z0=({:.6},{:.6})", long.start_level, long.length, long.return_time, long.pieces[0].a.to_f64(), long.pieces[0].b.to_f64());
    match realdyn::enhanced::enhanced_cascade_nest(&m, &i0, long, 0, 8, 500_000) {
        Ok(en) => {
            println!("steps {} terminal {:?}", en.steps.len(), en.terminal.as_ref().map(|t| (t.verified, t.via_short_step)));
            for s in &en.steps { println!("  p={} r={} w={:.3e}", s.pullback_time, s.min_return_time, s.piece.len().to_f64()); }
        }
        Err(e) => println!("ERR {e}"),
    }
}
