mod common;

use common::corpus;
use lore::syntax::ast::{BinOp, Expr, Quantifier, TypeExpr, UnOp};
use lore::syntax::{compile, parse_expr, parse_program, print_expr, print_program, Error};
use proptest::prelude::*;

const CALENDAR_HEADER: &str = r#"
type Calendar = AWSet[Appointment]
val work: Source[Calendar] = Source(AWSet())
val vacation: Source[Calendar] = Source(AWSet())
"#;

#[test]
fn calendar_listing_shape() {
    let ast = parse_program(&corpus("calendar.lore")).unwrap();
    assert_eq!(ast.sources.len(), 2);
    assert_eq!(ast.deriveds.len(), 2);
    assert_eq!(ast.invariants.len(), 2);
    let complete: Vec<&str> = ast
        .interactions
        .iter()
        .filter(|i| !i.is_partial())
        .map(|i| i.name.as_str())
        .collect();
    assert_eq!(complete, ["add_vacation", "add_work"]);
    assert!(ast.interaction("add_appointment").unwrap().is_partial());
    assert_eq!(ast.glue.len(), 2);

    let p = compile(&corpus("calendar.lore")).unwrap();
    let names: Vec<&str> = p.interactions.iter().map(|i| i.name.as_str()).collect();
    assert_eq!(names, ["add_vacation", "add_work"]);
    assert_eq!(p.templates, ["add_appointment"]);
    // The specialization keeps the template's two requires clauses and adds its own.
    assert_eq!(p.interaction("add_vacation").unwrap().requires.len(), 3);
    assert_eq!(p.interaction("add_work").unwrap().requires.len(), 2);
}

#[test]
fn empty_program() {
    let ast = parse_program("").unwrap();
    assert!(ast.sources.is_empty() && ast.deriveds.is_empty() && ast.interactions.is_empty());
    let p = compile("  // nothing here\n").unwrap();
    assert!(p.interactions.is_empty() && p.invariants.is_empty());
}

#[test]
fn duplicate_source() {
    let src = format!("{CALENDAR_HEADER}val work: Source[Calendar] = Source(AWSet())\n");
    match compile(&src) {
        Err(Error::DuplicateName { name, pos }) => {
            assert_eq!(name, "work");
            assert_eq!(pos.line, 5);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_identifier() {
    let src = format!("{CALENDAR_HEADER}val n: Derived[Int] = Derived{{ holidays.size }}\n");
    assert!(matches!(compile(&src), Err(Error::UnknownIdentifier { name, .. }) if name == "holidays"));
}

#[test]
fn derived_cycles() {
    let own = format!("{CALENDAR_HEADER}val d: Derived[Int] = Derived{{ d + 1 }}\n");
    assert!(matches!(compile(&own), Err(Error::Cycle { cycle, .. }) if cycle.contains(&"d".to_string())));
    let pair = format!(
        "{CALENDAR_HEADER}val a: Derived[Int] = Derived{{ b + 1 }}\nval b: Derived[Int] = Derived{{ a + 1 }}\n"
    );
    match compile(&pair) {
        Err(Error::Cycle { cycle, .. }) => {
            assert!(cycle.contains(&"a".to_string()) && cycle.contains(&"b".to_string()), "{cycle:?}")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn executes_arity() {
    let src = format!(
        "{CALENDAR_HEADER}val both: Unit = Interaction[Calendar, Calendar][Appointment]
  .modifies(work, vacation)
  .executes{{ w => v => a => w.add(a) }}\n"
    );
    assert!(matches!(compile(&src), Err(Error::Arity { .. })), "{:?}", compile(&src));
}

#[test]
fn type_errors() {
    let src = format!("{CALENDAR_HEADER}invariant work.size + true\n");
    assert!(matches!(compile(&src), Err(Error::Type { .. })));
}

#[test]
fn parse_error_position() {
    let err = parse_program("val x: Source[AWSet[Appointment]] = Source(AWSet()\n").unwrap_err();
    assert_eq!(err.pos().line, 2);
    assert!(err.to_string().starts_with("2:"), "{err}");
}

#[test]
fn corpus_round_trips() {
    for name in [
        "calendar.lore",
        "calendar-extended.lore",
        "calendar-no-days.lore",
        "tpcc-mini.lore",
    ] {
        let ast = parse_program(&corpus(name)).unwrap();
        let printed = print_program(&ast);
        assert_eq!(parse_program(&printed).unwrap(), ast, "{name}");
        assert_eq!(print_program(&parse_program(&printed).unwrap()), printed, "{name}");
        compile(&printed).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        any::<bool>().prop_map(Expr::Bool),
        (0i64..1000).prop_map(Expr::Int),
        "[a-z ]{0,4}".prop_map(Expr::Str),
        prop::sample::select(vec!["x", "y", "work", "vacation"]).prop_map(|s| Expr::Ident(s.to_string())),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let ops = vec![
        BinOp::Iff,
        BinOp::Implies,
        BinOp::Or,
        BinOp::And,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::In,
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Mod,
    ];
    leaf().prop_recursive(5, 48, 3, move |inner| {
        let ident = prop::sample::select(vec!["a", "b", "days", "size"]).prop_map(str::to_string);
        prop_oneof![
            (prop::sample::select(ops.clone()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
            (prop::sample::select(vec![UnOp::Not, UnOp::Neg]), inner.clone())
                .prop_map(|(op, e)| Expr::Unary(op, Box::new(e))),
            (ident.clone(), inner.clone()).prop_map(|(x, b)| Expr::Lambda(x, Box::new(b))),
            (inner.clone(), ident.clone(), prop::collection::vec(inner.clone(), 0..2))
                .prop_map(|(r, m, args)| Expr::Method(Box::new(r), m, args)),
            (ident.clone(), prop::collection::vec(inner.clone(), 1..3))
                .prop_map(|(f, args)| Expr::Call(Box::new(Expr::Ident(f)), args)),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Tuple),
            (
                prop::sample::select(vec![Quantifier::Forall, Quantifier::Exists]),
                ident,
                prop::sample::select(vec!["Int", "Appointment"]),
                inner
            )
                .prop_map(|(q, x, t, b)| Expr::Quant(q, x, TypeExpr::Named(t.to_string()), Box::new(b))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn printed_expressions_reparse(e in expr()) {
        let printed = print_expr(&e);
        let back = parse_expr(&printed).map_err(|err| TestCaseError::fail(format!("{printed}: {err}")))?;
        prop_assert_eq!(back, e, "{}", printed);
    }
}
