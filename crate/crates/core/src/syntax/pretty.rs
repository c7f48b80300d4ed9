use std::fmt::Write;

use super::ast::*;

/// Render a program in concrete syntax. Re-parsing the output yields a
/// structurally equal [`Program`]; layout and comments are not preserved.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for t in &p.types {
        match &t.def {
            TypeDef::Alias(ty) => writeln!(out, "type {} = {}", t.name, print_type(ty)),
            TypeDef::Record(fields) => {
                let fs: Vec<String> = fields
                    .iter()
                    .map(|(n, ty)| format!("{n}: {}", print_type(ty)))
                    .collect();
                writeln!(out, "type {} = {{ {} }}", t.name, fs.join(", "))
            }
        }
        .unwrap();
    }
    for s in &p.sources {
        writeln!(
            out,
            "val {}: Source[{}] = Source({})",
            s.name,
            print_type(&s.ty),
            print_expr(&s.init)
        )
        .unwrap();
    }
    for d in &p.deriveds {
        match &d.ty {
            Some(ty) => write!(out, "val {}: Derived[{}]", d.name, print_type(ty)),
            None => write!(out, "val {}", d.name),
        }
        .unwrap();
        writeln!(out, " = Derived{{ {} }}", print_expr(&d.body)).unwrap();
    }
    for i in &p.interactions {
        let mods: Vec<String> = i.modified_types.iter().map(print_type).collect();
        writeln!(
            out,
            "val {}: Unit = Interaction[{}][{}]",
            i.name,
            mods.join(", "),
            print_type(&i.arg_type)
        )
        .unwrap();
        if !i.modifies.is_empty() {
            writeln!(out, "  .modifies({})", i.modifies.join(", ")).unwrap();
        }
        for r in &i.requires {
            writeln!(out, "  .requires{{ {} }}", print_expr(r)).unwrap();
        }
        if let Some(e) = &i.executes {
            writeln!(out, "  .executes{{ {} }}", print_expr(e)).unwrap();
        }
        for e in &i.ensures {
            writeln!(out, "  .ensures{{ {} }}", print_expr(e)).unwrap();
        }
    }
    for g in &p.glue {
        writeln!(out, "{}", print_expr(g)).unwrap();
    }
    for inv in &p.invariants {
        writeln!(out, "invariant {}", print_expr(&inv.formula)).unwrap();
    }
    out
}

pub fn print_type(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Named(n) => n.clone(),
        TypeExpr::App(n, args) => {
            let a: Vec<String> = args.iter().map(print_type).collect();
            format!("{n}[{}]", a.join(", "))
        }
        TypeExpr::Tuple(items) => {
            let a: Vec<String> = items.iter().map(print_type).collect();
            format!("({})", a.join(", "))
        }
    }
}

pub fn print_expr(e: &Expr) -> String {
    match e {
        Expr::Bool(b) => b.to_string(),
        Expr::Int(i) => i.to_string(),
        Expr::Str(s) => print_str(s),
        Expr::Ident(x) => x.clone(),
        Expr::Lambda(x, body) => format!("{x} => {}", print_expr(body)),
        Expr::Call(f, args) => format!("{}({})", atom(f), list(args)),
        Expr::Method(recv, name, args) if args.is_empty() => format!("{}.{name}", atom(recv)),
        Expr::Method(recv, name, args) => format!("{}.{name}({})", atom(recv), list(args)),
        Expr::Tuple(items) => format!("({})", list(items)),
        Expr::Unary(UnOp::Not, x) => format!("!{}", atom(x)),
        Expr::Unary(UnOp::Neg, x) => format!("-{}", atom(x)),
        Expr::Binary(op, l, r) => format!("{} {} {}", atom(l), op.symbol(), atom(r)),
        Expr::Quant(q, x, ty, body) => {
            let kw = match q {
                Quantifier::Forall => "forall",
                Quantifier::Exists => "exists",
            };
            format!("{kw} {x}: {} :: {}", print_type(ty), print_expr(body))
        }
    }
}

fn atom(e: &Expr) -> String {
    match e {
        Expr::Lambda(..) | Expr::Binary(..) | Expr::Quant(..) | Expr::Unary(..) => {
            format!("({})", print_expr(e))
        }
        _ => print_expr(e),
    }
}

fn list(items: &[Expr]) -> String {
    items.iter().map(print_expr).collect::<Vec<_>>().join(", ")
}

fn print_str(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_program;
    use super::*;

    #[test]
    fn round_trip_small_program() {
        let src = r#"
            type Cal = AWSet[Appointment]
            type P = { id: Int, tag: String }
            val work: Source[Cal] = Source(AWSet())
            val n = Derived{ -(work.size) + 1 }
            val add: Unit = Interaction[Cal][Appointment]
              .modifies(work)
              .requires{ c => a => !(a in c.toSet) && a.days > 0 }
              .executes{ c => a => c.add(a) }
            UI.show("a\"b", work)
            invariant forall a: Appointment :: a in work ==> a.start < a.end
        "#;
        let p = parse_program(src).unwrap();
        let printed = print_program(&p);
        assert_eq!(parse_program(&printed).unwrap(), p);
    }

    #[test]
    fn negative_literal_is_parenthesized() {
        let e = Expr::Binary(
            BinOp::Sub,
            Box::new(Expr::Int(1)),
            Box::new(Expr::Unary(UnOp::Neg, Box::new(Expr::Int(2)))),
        );
        assert_eq!(print_expr(&e), "1 - (-2)");
    }
}
