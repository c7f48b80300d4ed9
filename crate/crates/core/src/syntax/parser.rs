use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::Error;

/// Parse `.lore` source text into a [`Program`], folding interaction builder
/// chains and specializations.
pub fn parse_program(src: &str) -> Result<Program, Error> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        at: 0,
        program: Program::default(),
        val_names: HashSet::new(),
        type_names: HashSet::new(),
    };
    p.program_items()?;
    Ok(p.program)
}

/// Parse a single expression (used for scripted arguments and tests).
pub fn parse_expr(src: &str) -> Result<Expr, Error> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        at: 0,
        program: Program::default(),
        val_names: HashSet::new(),
        type_names: HashSet::new(),
    };
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    program: Program,
    val_names: HashSet<String>,
    type_names: HashSet<String>,
}

const CLAUSES: &[&str] = &["requires", "executes", "ensures", "modifies"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.at + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at < self.tokens.len() - 1 {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), Error> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{}`", describe_plain(&tok))))
        }
    }

    fn unexpected(&self, wanted: &str) -> Error {
        Error::parse(
            self.pos(),
            format!("expected {wanted}, found {}", self.peek().describe()),
        )
    }

    fn ident(&mut self) -> Result<String, Error> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn program_items(&mut self) -> Result<(), Error> {
        while *self.peek() != Tok::Eof {
            match self.peek() {
                Tok::Type => self.type_decl()?,
                Tok::Val => self.val_decl()?,
                Tok::Invariant => {
                    let pos = self.pos();
                    self.bump();
                    let formula = self.expr()?;
                    let id = self.program.invariants.len() + 1;
                    self.program.invariants.push(InvariantDecl { pos, id, formula });
                }
                _ => {
                    let e = self.expr()?;
                    self.program.glue.push(e);
                }
            }
        }
        Ok(())
    }

    fn type_decl(&mut self) -> Result<(), Error> {
        let pos = self.pos();
        self.expect(Tok::Type)?;
        let name = self.ident()?;
        if !self.type_names.insert(name.clone()) {
            return Err(Error::DuplicateName { pos, name });
        }
        self.expect(Tok::Assign)?;
        let def = if self.eat(&Tok::LBrace) {
            let mut fields = Vec::new();
            if !self.eat(&Tok::RBrace) {
                loop {
                    let f = self.ident()?;
                    self.expect(Tok::Colon)?;
                    fields.push((f, self.type_expr()?));
                    if self.eat(&Tok::RBrace) {
                        break;
                    }
                    self.expect(Tok::Comma)?;
                }
            }
            TypeDef::Record(fields)
        } else {
            TypeDef::Alias(self.type_expr()?)
        };
        self.program.types.push(TypeDecl { pos, name, def });
        Ok(())
    }

    fn type_expr(&mut self) -> Result<TypeExpr, Error> {
        if self.eat(&Tok::LParen) {
            let mut items = Vec::new();
            if !self.eat(&Tok::RParen) {
                loop {
                    items.push(self.type_expr()?);
                    if self.eat(&Tok::RParen) {
                        break;
                    }
                    self.expect(Tok::Comma)?;
                }
            }
            return Ok(TypeExpr::Tuple(items));
        }
        let name = self.ident()?;
        if self.eat(&Tok::LBracket) {
            let args = self.type_list_tail()?;
            Ok(TypeExpr::App(name, args))
        } else {
            Ok(TypeExpr::Named(name))
        }
    }

    /// Parses `T, T, ...]` after an opening bracket.
    fn type_list_tail(&mut self) -> Result<Vec<TypeExpr>, Error> {
        let mut args = Vec::new();
        if self.eat(&Tok::RBracket) {
            return Ok(args);
        }
        loop {
            args.push(self.type_expr()?);
            if self.eat(&Tok::RBracket) {
                return Ok(args);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn val_decl(&mut self) -> Result<(), Error> {
        self.expect(Tok::Val)?;
        let pos = self.pos();
        let name = self.ident()?;
        if !self.val_names.insert(name.clone()) {
            return Err(Error::DuplicateName { pos, name });
        }
        let annot = if self.eat(&Tok::Colon) {
            Some(self.type_expr()?)
        } else {
            None
        };
        self.expect(Tok::Assign)?;
        let head_pos = self.pos();
        let head = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("`Source`, `Derived`, `Interaction` or an interaction name")),
        };
        match head.as_str() {
            "Source" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let init = self.expr()?;
                self.expect(Tok::RParen)?;
                let ty = match annot {
                    Some(TypeExpr::App(ref s, ref args)) if s == "Source" && args.len() == 1 => {
                        args[0].clone()
                    }
                    _ => {
                        return Err(Error::parse(
                            pos,
                            format!("source `{name}` needs a `Source[T]` type annotation"),
                        ))
                    }
                };
                self.program.sources.push(SourceDecl { pos, name, ty, init });
            }
            "Derived" => {
                self.bump();
                let body = self.block_or_paren()?;
                let ty = match annot {
                    None => None,
                    Some(TypeExpr::App(ref s, ref args)) if s == "Derived" && args.len() == 1 => {
                        Some(args[0].clone())
                    }
                    Some(_) => {
                        return Err(Error::parse(
                            pos,
                            format!("derived `{name}` must be annotated as `Derived[T]`"),
                        ))
                    }
                };
                self.program.deriveds.push(DerivedDecl { pos, name, ty, body });
            }
            "Interaction" => {
                self.bump();
                self.expect(Tok::LBracket)?;
                let modified_types = self.type_list_tail()?;
                self.expect(Tok::LBracket)?;
                let mut arg = self.type_list_tail()?;
                let arg_type = match arg.len() {
                    1 => arg.remove(0),
                    _ => TypeExpr::Tuple(arg),
                };
                let decl = InteractionDecl {
                    pos,
                    name,
                    modified_types,
                    arg_type,
                    modifies: Vec::new(),
                    requires: Vec::new(),
                    executes: None,
                    ensures: Vec::new(),
                };
                let decl = self.clause_chain(decl)?;
                self.program.interactions.push(decl);
            }
            _ => {
                self.bump();
                let base = self
                    .program
                    .interaction(&head)
                    .cloned()
                    .ok_or(Error::UnknownIdentifier {
                        pos: head_pos,
                        name: head.clone(),
                    })?;
                let decl = InteractionDecl {
                    pos,
                    name,
                    ..base
                };
                let decl = self.clause_chain(decl)?;
                self.program.interactions.push(decl);
            }
        }
        Ok(())
    }

    fn clause_chain(&mut self, mut decl: InteractionDecl) -> Result<InteractionDecl, Error> {
        while *self.peek() == Tok::Dot {
            let clause = match self.peek_at(1) {
                Tok::Ident(s) if CLAUSES.contains(&s.as_str()) => s.clone(),
                _ => break,
            };
            self.bump();
            let pos = self.pos();
            self.bump();
            match clause.as_str() {
                "modifies" => {
                    if !decl.modifies.is_empty() {
                        return Err(Error::parse(pos, format!("`{}` already has a modifies clause", decl.name)));
                    }
                    self.expect(Tok::LParen)?;
                    loop {
                        decl.modifies.push(self.ident()?);
                        if self.eat(&Tok::RParen) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                "requires" => {
                    let e = self.block_or_paren()?;
                    decl.requires.push(e);
                }
                "ensures" => {
                    let e = self.block_or_paren()?;
                    decl.ensures.push(e);
                }
                _ => {
                    if decl.executes.is_some() {
                        return Err(Error::parse(pos, format!("`{}` already has an executes clause", decl.name)));
                    }
                    decl.executes = Some(self.block_or_paren()?);
                }
            }
        }
        Ok(decl)
    }

    fn block_or_paren(&mut self) -> Result<Expr, Error> {
        let close = if self.eat(&Tok::LBrace) {
            Tok::RBrace
        } else if self.eat(&Tok::LParen) {
            Tok::RParen
        } else {
            return Err(self.unexpected("`{` or `(`"));
        };
        let e = self.expr()?;
        self.expect(close)?;
        Ok(e)
    }

    pub(crate) fn expr(&mut self) -> Result<Expr, Error> {
        if let (Tok::Ident(x), Tok::FatArrow) = (self.peek().clone(), self.peek_at(1)) {
            self.bump();
            self.bump();
            let body = self.expr()?;
            return Ok(Expr::Lambda(x, Box::new(body)));
        }
        let q = match self.peek() {
            Tok::Forall => Some(Quantifier::Forall),
            Tok::Exists => Some(Quantifier::Exists),
            _ => None,
        };
        if let Some(q) = q {
            self.bump();
            let var = self.ident()?;
            self.expect(Tok::Colon)?;
            let ty = self.type_expr()?;
            self.expect(Tok::ColonColon)?;
            let body = self.expr()?;
            return Ok(Expr::Quant(q, var, ty, Box::new(body)));
        }
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, Error> {
        const LEVELS: &[&[(Tok, BinOp)]] = &[
            &[(Tok::Iff, BinOp::Iff)],
            &[(Tok::Implies, BinOp::Implies)],
            &[(Tok::OrOr, BinOp::Or)],
            &[(Tok::AndAnd, BinOp::And)],
            &[(Tok::EqEq, BinOp::Eq), (Tok::NotEq, BinOp::Ne)],
            &[
                (Tok::Lt, BinOp::Lt),
                (Tok::Le, BinOp::Le),
                (Tok::Gt, BinOp::Gt),
                (Tok::Ge, BinOp::Ge),
                (Tok::In, BinOp::In),
            ],
            &[(Tok::Plus, BinOp::Add), (Tok::Minus, BinOp::Sub)],
            &[(Tok::Star, BinOp::Mul), (Tok::Slash, BinOp::Div), (Tok::Percent, BinOp::Mod)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = LEVELS[level]
                .iter()
                .find(|(t, _)| t == self.peek())
                .map(|(_, op)| *op);
            let Some(op) = op else { break };
            self.bump();
            if op == BinOp::Implies {
                // right associative
                let rhs = self.operand_or(|p| p.binary(level))?;
                return Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)));
            }
            let rhs = self.operand_or(|p| p.binary(level + 1))?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    /// Lambdas and quantifiers may appear as the right operand of any
    /// operator and then extend as far right as possible.
    fn operand_or(&mut self, f: impl FnOnce(&mut Self) -> Result<Expr, Error>) -> Result<Expr, Error> {
        if self.starts_binder() {
            self.expr()
        } else {
            f(self)
        }
    }

    fn starts_binder(&self) -> bool {
        matches!(self.peek(), Tok::Forall | Tok::Exists)
            || matches!((self.peek(), self.peek_at(1)), (Tok::Ident(_), Tok::FatArrow))
    }

    fn unary(&mut self) -> Result<Expr, Error> {
        if self.starts_binder() {
            return self.expr();
        }
        if self.eat(&Tok::Bang) {
            let e = self.unary()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(e)));
        }
        if self.eat(&Tok::Minus) {
            let e = self.unary()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(e)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, Error> {
        let mut e = self.primary()?;
        loop {
            match self.peek() {
                Tok::Dot => {
                    self.bump();
                    let name = self.ident()?;
                    let args = match self.peek() {
                        Tok::LParen => self.args()?,
                        Tok::LBrace => {
                            self.bump();
                            let a = self.expr()?;
                            self.expect(Tok::RBrace)?;
                            vec![a]
                        }
                        _ => Vec::new(),
                    };
                    e = Expr::Method(Box::new(e), name, args);
                }
                Tok::LParen => {
                    let args = self.args()?;
                    e = Expr::Call(Box::new(e), args);
                }
                _ => return Ok(e),
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, Error> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::RParen) {
                return Ok(args);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn primary(&mut self) -> Result<Expr, Error> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Int(i))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::True => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::False => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(s) => {
                self.bump();
                Ok(Expr::Ident(s))
            }
            Tok::LBrace => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RBrace)?;
                Ok(e)
            }
            Tok::LParen => {
                self.bump();
                if self.eat(&Tok::RParen) {
                    return Ok(Expr::Tuple(Vec::new()));
                }
                let first = self.expr()?;
                if self.eat(&Tok::RParen) {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat(&Tok::Comma) {
                    items.push(self.expr()?);
                }
                self.expect(Tok::RParen)?;
                Ok(Expr::Tuple(items))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

fn describe_plain(tok: &Tok) -> String {
    let d = tok.describe();
    d.trim_matches('`').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    fn id(s: &str) -> Expr {
        Expr::Ident(s.into())
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse_expr("a + b * c < d && e").unwrap(),
            bin(
                BinOp::And,
                bin(
                    BinOp::Lt,
                    bin(BinOp::Add, id("a"), bin(BinOp::Mul, id("b"), id("c"))),
                    id("d")
                ),
                id("e")
            )
        );
        assert_eq!(
            parse_expr("a ==> b ==> c").unwrap(),
            bin(BinOp::Implies, id("a"), bin(BinOp::Implies, id("b"), id("c")))
        );
        assert_eq!(
            parse_expr("a - b - c").unwrap(),
            bin(BinOp::Sub, bin(BinOp::Sub, id("a"), id("b")), id("c"))
        );
    }

    #[test]
    fn binders_extend_right() {
        let e = parse_expr("cal => a => !(a in cal.toSet)").unwrap();
        let Expr::Lambda(x, body) = e else { panic!() };
        assert_eq!(x, "cal");
        let Expr::Lambda(y, body) = *body else { panic!() };
        assert_eq!(y, "a");
        assert_eq!(
            *body,
            Expr::Unary(
                UnOp::Not,
                Box::new(bin(
                    BinOp::In,
                    id("a"),
                    Expr::Method(Box::new(id("cal")), "toSet".into(), vec![])
                ))
            )
        );
        let q = parse_expr("p && forall x: Int :: x > 0").unwrap();
        assert!(matches!(q, Expr::Binary(BinOp::And, _, ref r) if matches!(**r, Expr::Quant(..))));
    }

    #[test]
    fn method_forms() {
        assert_eq!(
            parse_expr("s.add(a).size").unwrap(),
            Expr::Method(
                Box::new(Expr::Method(Box::new(id("s")), "add".into(), vec![id("a")])),
                "size".into(),
                vec![]
            )
        );
        assert_eq!(
            parse_expr("ui.onConfirm{a => f.apply(a)}").unwrap(),
            Expr::Method(
                Box::new(id("ui")),
                "onConfirm".into(),
                vec![Expr::Lambda(
                    "a".into(),
                    Box::new(Expr::Method(Box::new(id("f")), "apply".into(), vec![id("a")]))
                )]
            )
        );
    }

    #[test]
    fn tuples_and_units() {
        assert_eq!(parse_expr("()").unwrap(), Expr::Tuple(vec![]));
        assert_eq!(parse_expr("(1)").unwrap(), Expr::Int(1));
        assert_eq!(
            parse_expr("(1, x)").unwrap(),
            Expr::Tuple(vec![Expr::Int(1), id("x")])
        );
    }

    #[test]
    fn error_has_position() {
        let err = parse_program("val x: Source[Int] = Source(\n  1 + )").unwrap_err();
        assert_eq!(err.to_string(), "2:7: expected an expression, found `)`");
    }

    #[test]
    fn specialization_copies_and_appends() {
        let p = parse_program(
            "val base : Unit = Interaction[AWSet[Int]][Int]
               .requires{ s => x => x > 0 }
               .executes{ s => x => s.add(x) }
             val special : Unit = base.modifies(r).requires{ s => x => x < 5 }",
        )
        .unwrap();
        let special = p.interaction("special").unwrap();
        assert_eq!(special.modifies, vec!["r".to_string()]);
        assert_eq!(special.requires.len(), 2);
        assert!(special.executes.is_some());
        assert!(p.interaction("base").unwrap().is_partial());
    }

    #[test]
    fn unknown_base_interaction() {
        let err = parse_program("val a : Unit = nothing.modifies(x)").unwrap_err();
        assert!(matches!(err, Error::UnknownIdentifier { ref name, .. } if name == "nothing"));
    }

    #[test]
    fn clause_repeated() {
        let err = parse_program(
            "val a : Unit = Interaction[AWSet[Int]][Int].modifies(x).modifies(y)",
        )
        .unwrap_err();
        assert!(err.to_string().contains("already has a modifies clause"));
    }
}
