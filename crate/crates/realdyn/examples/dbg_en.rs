fn main() {
    use realdyn::*;
    use realdyn::real::{Precision, Real};
    let fib = realdyn::fibonacci::fibonacci_parameter_search(2, 20, Precision::OCT).unwrap();
    let m = MapSpec::unicritical(2, &fib.c, Precision::OCT);
    let i0 = realdyn::nests::alpha_interval(&m).unwrap();
    let c = Real::zero(Precision::OCT);
    let nest = realdyn::nests::principal_nest(&m, &i0, &c, 15, 2_000_000).unwrap();
    println!("nest levels {}", nest.levels.len());
    for l in &nest.levels { println!("  lvl {} time {} width {:.4e}", l.level, l.return_time, l.piece.len().to_f64()); }
    let anchor = nest.levels[15].piece.clone();
    // children of i0 on the double twin
    let twin = m.at_precision(Precision::DOUBLE);
    let kids = realdyn::nests::children_pieces(&m, &twin, &realdyn::RInterval::new(i0.a.to_prec(Precision::DOUBLE), i0.b.to_prec(Precision::DOUBLE)), 2000, 64);
    println!("children of I0 within 2000: {:?}", kids.iter().map(|k| (k.time, k.piece.len().to_f64())).collect::<Vec<_>>());
    let a64 = realdyn::RInterval::new(anchor.a.to_prec(Precision::DOUBLE), anchor.b.to_prec(Precision::DOUBLE));
    for k in &kids {
        println!("  child t={} contains anchor: {}", k.time, k.piece.contains_interval(&a64));
    }
    let en = realdyn::enhanced::enhanced_nest(&m, &i0, &anchor, 0, 6, 3_000_000);
    match en {
        Ok(en) => {
            for s in &en.steps { println!("step p={} r={} ord={} w={:.3e}", s.pullback_time, s.min_return_time, s.chain_order, s.piece.len().to_f64()); }
        }
        Err(e) => println!("ERR {e}"),
    }
}
