use proptest::prelude::*;
use tamevol::Expression;

/// Random expressions in `x, y` that are finite and smooth on `[-1, 1]²`.
fn smooth_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        (-3.0..3.0f64).prop_map(|c| format!("({:.3})", c)),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} + {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} - {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} * {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} / (1 + ({})^2))", a, b)),
            (inner.clone(), 2..4u32).prop_map(|(a, k)| format!("({})^{}", a, k)),
            inner.clone().prop_map(|a| format!("-({})", a)),
            inner.clone().prop_map(|a| format!("sin({})", a)),
            inner.clone().prop_map(|a| format!("cos({})", a)),
            inner.clone().prop_map(|a| format!("exp(sin({}))", a)),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({})^2)", a)),
            inner.prop_map(|a| format!("log(2 + cos({}))", a)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gradient_matches_central_differences(text in smooth_expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let f = Expression::parse(&text, &["x", "y"]).unwrap();
        let g = f.grad(&[x, y]).unwrap();
        let h = 1e-5;
        let fd = [
            (f.eval(&[x + h, y]).unwrap() - f.eval(&[x - h, y]).unwrap()) / (2.0 * h),
            (f.eval(&[x, y + h]).unwrap() - f.eval(&[x, y - h]).unwrap()) / (2.0 * h),
        ];
        let scale = 1.0 + f.eval(&[x, y]).unwrap().abs() + g[0].abs() + g[1].abs();
        for i in 0..2 {
            prop_assert!((g[i] - fd[i]).abs() <= 1e-5 * scale, "{}: d{} = {} vs {}", text, i, g[i], fd[i]);
        }
    }

    #[test]
    fn printing_then_parsing_preserves_values(text in smooth_expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let f = Expression::parse(&text, &["x", "y"]).unwrap();
        let back = Expression::parse(&f.to_string(), &["x", "y"]).unwrap();
        let (a, b) = (f.eval(&[x, y]).unwrap(), back.eval(&[x, y]).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn domain_errors_are_reported() {
    let f = Expression::parse("sqrt(x) + log(y)", &["x", "y"]).unwrap();
    assert!(f.eval(&[-1.0, 1.0]).is_err());
    assert!(f.eval(&[1.0, -1.0]).is_err());
    assert!(f.grad(&[0.0, 1.0]).is_err());
    assert_eq!(f.eval(&[4.0, 1.0]).unwrap(), 2.0);
}

#[test]
fn parse_errors_are_reported() {
    for bad in ["x +", "(x", "foo(x)", "z", "x ** 2", ""] {
        assert!(Expression::parse(bad, &["x"]).is_err(), "{:?} parsed", bad);
    }
}
