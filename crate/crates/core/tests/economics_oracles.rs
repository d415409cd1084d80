use chainfis::economics::{
    optimize_decisions, profit_retailer, profit_supplier, DecisionBounds, EconomicParams, Interval,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng) -> EconomicParams<f64> {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    EconomicParams {
        e: u(1.0, 10.0),
        c_s: u(0.5, 5.0),
        c_a: u(0.1, 3.0),
        c_t: u(0.0, 1.0),
        lambda_s: u(0.0, 1.0),
        lambda: u(0.0, 0.9),
        lambda_r: u(0.0, 1.0),
        a: u(0.5, 5.0),
        beta: u(0.2, 3.0),
        theta: u(0.0, 2.0),
        phi: u(0.0, 0.9),
        w: u(0.5, 6.0),
        c_r: u(0.5, 6.0),
        c: u(0.0, 80.0),
    }
}

/// Expanded-term forms, evaluated in a different order from the library.
fn supplier_oracle(p: &EconomicParams<f64>, q: f64, a: f64) -> (f64, f64) {
    let terms = [
        q * p.e,
        -q * p.c_s,
        -0.5 * p.c_a * a * a,
        -p.lambda_s * q * p.c_t,
        -a * p.c_t,
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

fn retailer_oracle(p: &EconomicParams<f64>, price: f64, q: f64, a: f64) -> (f64, f64) {
    let margin = price - p.c_r;
    let terms = [
        p.a * q * margin,
        -p.a * p.lambda * q * margin,
        -p.beta * price * margin,
        p.theta * a * margin,
        -p.theta * p.phi * a * margin,
        -q * p.w,
        -q * p.lambda_r * p.c_t,
        -p.c / q.powi(2),
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

#[test]
fn profits_match_duplicate_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let (price, q, a) = (
            rng.random_range(0.0..20.0),
            rng.random_range(0.1..30.0),
            rng.random_range(0.0..5.0),
        );
        let (s, s_scale) = supplier_oracle(&p, q, a);
        assert!((profit_supplier(&p, q, a) - s).abs() <= 1e-12 * s_scale.max(1.0));
        let (r, r_scale) = retailer_oracle(&p, price, q, a);
        assert!((profit_retailer(&p, price, q, a) - r).abs() <= 1e-12 * r_scale.max(1.0));
    }
}

#[test]
fn substitution_examples() {
    let p = EconomicParams {
        c_t: 0.0,
        e: 5.0,
        c_s: 3.0,
        ..EconomicParams::default()
    };
    assert_eq!(profit_supplier(&p, 10.0, 0.0), 20.0);
    let r = EconomicParams {
        c: 0.0,
        w: 0.0,
        c_t: 0.0,
        a: 1.0,
        beta: 1.0,
        lambda: 0.0,
        theta: 0.0,
        c_r: 1.0,
        ..EconomicParams::default()
    };
    assert_eq!(profit_retailer(&r, 2.0, 10.0, 0.0), 8.0);
}

/// Sequential search on a full 401-point grid per axis.
fn brute_force(p: &EconomicParams<f64>, b: &DecisionBounds<f64>) -> (f64, f64, f64, f64) {
    let grid = |i: &Interval<f64>| -> Vec<f64> {
        (0..=400)
            .map(|k| i.lo + (i.hi - i.lo) * k as f64 / 400.0)
            .collect()
    };
    let (prices, quantities, efforts) = (grid(&b.price), grid(&b.quantity), grid(&b.effort));
    let mut best = (0.0, 0.0, 0.0, f64::NEG_INFINITY);
    for &q in &quantities {
        let mut effort = efforts[0];
        let mut best_s = profit_supplier(p, q, effort);
        for &a in &efforts[1..] {
            let s = profit_supplier(p, q, a);
            if s > best_s {
                best_s = s;
                effort = a;
            }
        }
        for &price in &prices {
            let r = profit_retailer(p, price, q, effort);
            if r > best.3 {
                best = (price, q, effort, r);
            }
        }
    }
    best
}

#[test]
fn refined_search_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..8 {
        let p = random_params(&mut rng);
        let bounds = DecisionBounds {
            price: Interval::new(p.c_r, p.c_r + 8.0),
            quantity: Interval::new(1.0, 6.0),
            effort: Interval::new(0.0, 2.0),
        };
        let search = optimize_decisions(&p, &bounds).unwrap();
        let opt = search.refined;
        assert!(opt.retailer_profit >= search.coarse.retailer_profit);
        let (bp, bq, ba, br) = brute_force(&p, &bounds);
        let cell = |i: &Interval<f64>| (i.hi - i.lo) / 400.0 + 1e-12;
        let close = (opt.price - bp).abs() <= cell(&bounds.price)
            && (opt.quantity - bq).abs() <= cell(&bounds.quantity)
            && (opt.effort - ba).abs() <= cell(&bounds.effort);
        assert!(
            close,
            "refined {opt:?} vs brute force ({bp}, {bq}, {ba}, {br})"
        );
    }
}
