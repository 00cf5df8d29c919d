fn main() {
    use realdyn::*;
    use realdyn::real::{Precision, Real};
    let prec = Precision::OCT;
    match realdyn::fibonacci::cubic_fibonacci_parameter_search(14, prec) {
        Ok(f) => {
            println!("cubic fib a = {:.20} returns {:?}", f.c.to_f64(), &f.verified_returns[..f.verified_returns.len().min(12)]);
            let m = MapSpec::symmetric_cubic(&f.c, prec);
            // principal nest at c0 = 1
            let c0 = Real::one(prec);
            // nice interval around 1: use the piece between the positive
            // orientation-reversing fixed point and mirror...
            // scan for fixed points
            let orbits = realdyn::orbit::find_periodic_orbits(&m, 2, 4000);
            for o in &orbits { println!("  orbit p={} pts={:?} class={:?}", o.period, o.points.iter().map(|p| p.to_f64()).collect::<Vec<_>>(), o.class); }
            let _ = c0;
        }
        Err(e) => println!("ERR {e}"),
    }
}
