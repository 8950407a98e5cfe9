//! Property tests for the parser and grid invariants.

use proptest::prelude::*;

use shadow_ode::expr::{BinOp, Func, Node, VectorField};
use shadow_ode::grid::{integrate, GridSpec, Perturbation};

/// Random ASTs over the dim-2 environment (x, y0, y1).
fn arb_node() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|n| Node::Num(n as f64 / 8.0)),
        Just(Node::Var { name: "x".into(), slot: 0 }),
        Just(Node::Var { name: "y0".into(), slot: 1 }),
        Just(Node::Var { name: "y1".into(), slot: 2 }),
    ];
    leaf.prop_recursive(5, 64, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|n| Node::Neg(Box::new(n))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
            (
                prop_oneof![
                    Just(Func::Sin),
                    Just(Func::Cos),
                    Just(Func::Exp),
                    Just(Func::Abs),
                    Just(Func::Sign)
                ],
                inner.clone()
            )
                .prop_map(|(f, a)| Node::Call(f, vec![a])),
            (
                prop_oneof![Just(Func::Pow), Just(Func::Min), Just(Func::Max)],
                inner.clone(),
                inner
            )
                .prop_map(|(f, a, b)| Node::Call(f, vec![a, b])),
        ]
    })
}

/// Render a node through the library's own printer by wrapping it in a field.
fn print_node(node: &Node) -> String {
    // the printer is exposed through Expression's Display; build one by
    // parsing a trivial component and swapping the tree is not possible, so
    // reimplement via the public surface: Display on parsed expressions is
    // exercised by parsing the printed form below.
    fn fmt(node: &Node, min_prec: u8, out: &mut String) {
        let prec = |n: &Node| -> u8 {
            match n {
                Node::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
                Node::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
                Node::Neg(_) => 3,
                Node::Bin(BinOp::Pow, ..) => 4,
                Node::Num(v) if *v < 0.0 => 3,
                _ => 5,
            }
        };
        let p = prec(node);
        if p < min_prec {
            out.push('(');
            fmt(node, 0, out);
            out.push(')');
            return;
        }
        match node {
            Node::Num(v) => out.push_str(&format!("{v}")),
            Node::Var { name, .. } => out.push_str(name),
            Node::Neg(a) => {
                out.push('-');
                fmt(a, 3, out);
            }
            Node::Bin(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => ("+", 1, 2),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                fmt(a, lp, out);
                out.push_str(sym);
                fmt(b, rp, out);
            }
            Node::Call(f, args) => {
                out.push_str(f.name());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    fmt(a, 0, out);
                }
                out.push(')');
            }
        }
    }
    let mut s = String::new();
    fmt(node, 0, &mut s);
    s
}

proptest! {
    /// pretty-print then reparse gives a structurally identical tree, and
    /// the library printer agrees with its own parser.
    #[test]
    fn parser_print_round_trip(node in arb_node()) {
        let text = format!("{}; 0", print_node(&node));
        let parsed = VectorField::parse(&text, 2).expect("printed form must parse");
        prop_assert_eq!(parsed.components()[0].root(), &node);
        // second round trip through the library's own Display
        let printed = format!("{}; 0", parsed.components()[0]);
        let reparsed = VectorField::parse(&printed, 2).expect("display form must parse");
        prop_assert_eq!(reparsed.components()[0].root(), &node);
    }

    /// a + b * c parses with multiplication binding tighter.
    #[test]
    fn precedence_matches_parenthesized(a in -100.0f64..100.0, b in -100.0f64..100.0, c in -100.0f64..100.0) {
        let f1 = VectorField::parse("x+y0*y1; 0", 2).unwrap();
        let f2 = VectorField::parse("x+(y0*y1); 0", 2).unwrap();
        let v1 = f1.eval(a, &[b, c]).unwrap();
        let v2 = f2.eval(a, &[b, c]).unwrap();
        prop_assert_eq!(v1[0].to_bits(), v2[0].to_bits());
    }

    /// replaying a spec + perturbation reproduces the trajectory bitwise.
    #[test]
    fn recursion_replay(y0 in -2.0f64..2.0, c in -1e-4f64..1e-4, n_log2 in 6u32..10) {
        let field = VectorField::parse("sin(x)-y/2", 1).unwrap();
        let spec = GridSpec::new(0.0, vec![y0], 1 << n_log2, 0, 1.0).unwrap();
        let pert = Perturbation::constant(c);
        let a = integrate(&field, &spec, &pert, 1e6).unwrap();
        let b = integrate(&field, &spec, &pert, 1e6).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for row in 0..a.len() {
            prop_assert_eq!(a.y(row)[0].to_bits(), b.y(row)[0].to_bits());
        }
    }

    /// shrinking the escape radius can only stop the run earlier.
    #[test]
    fn monotone_escape(r_small in 2.0f64..50.0, extra in 1.0f64..100.0) {
        let field = VectorField::parse("y*y", 1).unwrap();
        let spec = GridSpec::new(0.0, vec![1.0], 1 << 10, 0, 2.0).unwrap();
        let pert = Perturbation::zero();
        let small = integrate(&field, &spec, &pert, r_small).unwrap();
        let big = integrate(&field, &spec, &pert, r_small + extra).unwrap();
        prop_assert!(small.k_stop <= big.k_stop);
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// quadrature additivity: [a,b] + [b,c] = [a,c] within 2 tol.
    #[test]
    fn quad_additivity(split in 0.1f64..1.9) {
        let f = shadow_ode::Expression::parse_scalar("exp(x/2)*cos(x)").unwrap();
        let tol = 1e-4;
        let (ab, _) = shadow_ode::quad::integrate_certified(&f, 0.0, split, tol).unwrap();
        let (bc, _) = shadow_ode::quad::integrate_certified(&f, split, 2.0, tol).unwrap();
        let (ac, _) = shadow_ode::quad::integrate_certified(&f, 0.0, 2.0, tol).unwrap();
        prop_assert!((ab + bc - ac).abs() <= 2.0 * tol, "additivity gap {}", (ab + bc - ac).abs());
    }
}
