//! Surface syntax as produced by the parser, before name resolution.

use std::fmt;

/// Source position (1-based line and column).
///
/// Positions never take part in equality so that structurally identical
/// programs compare equal regardless of layout.
#[derive(Debug, Clone, Copy, Default, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl PartialEq for Pos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeExpr {
    Named(String),
    /// `Name[T, ...]`, e.g. `AWSet[Appointment]`.
    App(String, Vec<TypeExpr>),
    Tuple(Vec<TypeExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeDef {
    Alias(TypeExpr),
    Record(Vec<(String, TypeExpr)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Iff,
    Implies,
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Iff => "<==>",
            BinOp::Implies => "==>",
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::In => "in",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Bool(bool),
    Int(i64),
    Str(String),
    Ident(String),
    /// `x => body`
    Lambda(String, Box<Expr>),
    /// `f(args)`: builtin call, record construction, or closure application.
    Call(Box<Expr>, Vec<Expr>),
    /// `recv.name` or `recv.name(args)` / `recv.name{arg}`.
    Method(Box<Expr>, String, Vec<Expr>),
    Tuple(Vec<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Quant(Quantifier, String, TypeExpr, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDecl {
    pub pos: Pos,
    pub name: String,
    pub def: TypeDef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDecl {
    pub pos: Pos,
    pub name: String,
    /// The `T` of `Source[T]`.
    pub ty: TypeExpr,
    pub init: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedDecl {
    pub pos: Pos,
    pub name: String,
    /// The `T` of `Derived[T]`, when annotated.
    pub ty: Option<TypeExpr>,
    pub body: Expr,
}

/// An interaction after folding its builder chain. An empty `modifies`
/// list marks a partial interaction (a template for specializations).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDecl {
    pub pos: Pos,
    pub name: String,
    pub modified_types: Vec<TypeExpr>,
    pub arg_type: TypeExpr,
    pub modifies: Vec<String>,
    pub requires: Vec<Expr>,
    pub executes: Option<Expr>,
    pub ensures: Vec<Expr>,
}

impl InteractionDecl {
    pub fn is_partial(&self) -> bool {
        self.modifies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantDecl {
    pub pos: Pos,
    /// 1-based ordinal in declaration order.
    pub id: usize,
    pub formula: Expr,
}

/// A parsed program. Statements that are neither declarations nor
/// invariants (UI wiring and callbacks) are kept in `glue` and otherwise
/// ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub types: Vec<TypeDecl>,
    pub sources: Vec<SourceDecl>,
    pub deriveds: Vec<DerivedDecl>,
    pub interactions: Vec<InteractionDecl>,
    pub invariants: Vec<InvariantDecl>,
    pub glue: Vec<Expr>,
}

impl Program {
    pub fn interaction(&self, name: &str) -> Option<&InteractionDecl> {
        self.interactions.iter().find(|i| i.name == name)
    }

    pub fn complete_interactions(&self) -> impl Iterator<Item = &InteractionDecl> {
        self.interactions.iter().filter(|i| !i.is_partial())
    }
}
