//! Recursive-descent parser for the surface subset: method definitions in
//! long and short form, operator definitions, type declarations with
//! parameters and bounds, control flow, indexing and concatenation sugar,
//! anonymous functions, splats, and `@staged`/`quote`.
//!
//! No type-based rejection happens here: anything syntactically well-formed
//! parses.

use crate::lexer::{tokenize, ParseError, Tok, Token};

#[derive(Clone, Debug)]
pub struct Arg {
    pub expr: Ast,
    pub splat: bool,
}

#[derive(Clone, Debug)]
pub enum Ast {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Var(String),
    Call { callee: Box<Ast>, args: Vec<Arg> },
    /// `Base{p1, p2}`
    TypeApply { base: Box<Ast>, params: Vec<Ast> },
    /// `e::T` in expression position
    TypeAssert { expr: Box<Ast>, ty: Box<Ast> },
    /// `::T` anonymous parameter (definition position only)
    AnonTyped(Box<Ast>),
    Tuple(Vec<Arg>),
    Index { obj: Box<Ast>, idxs: Vec<Ast> },
    Field { obj: Box<Ast>, name: String },
    AndAnd(Box<Ast>, Box<Ast>),
    OrOr(Box<Ast>, Box<Ast>),
    Lambda { params: Vec<String>, body: Box<Ast> },
    QuoteBlock(Vec<Stmt>),
    /// `[a, b]`, `[a; b]`, `[a b]`, `[a b; c d]`
    Matrix { rows: Vec<Vec<Ast>>, comma: bool },
    /// `T<:Bound` inside `{...}` (definition positions only)
    Bounded { name: String, bound: Box<Ast> },
}

#[derive(Clone, Debug)]
pub enum LValue {
    Var(String),
    Index { obj: Ast, idxs: Vec<Ast> },
    Tuple(Vec<String>),
    /// `f(x, y) = rhs`: a short-form method definition.
    CallShape(Ast),
}

#[derive(Clone, Debug)]
pub enum Stmt {
    Expr(Ast),
    Assign { lhs: LValue, rhs: Ast, line: u32 },
    /// `x::T` in statement position: a scoped type declaration.
    Declare { var: String, ty: Ast },
    If {
        arms: Vec<(Ast, Vec<Stmt>)>,
        els: Option<Vec<Stmt>>,
    },
    While { cond: Ast, body: Vec<Stmt> },
    For { var: String, iter: Ast, body: Vec<Stmt> },
    Return(Option<Ast>),
    Global(Vec<String>),
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: Option<String>,
    pub ty: Option<Ast>,
    pub vararg: bool,
}

#[derive(Clone, Debug)]
pub struct StaticParam {
    pub name: String,
    pub bound: Option<Ast>,
}

#[derive(Clone, Debug)]
pub struct FunctionDef {
    pub name: String,
    pub static_params: Vec<StaticParam>,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    pub staged: bool,
    pub line: u32,
}

#[derive(Clone, Debug)]
pub enum Item {
    Func(FunctionDef),
    Abstract {
        name: String,
        static_params: Vec<StaticParam>,
        supertype: Option<Ast>,
        line: u32,
    },
    Bits {
        nbits: u32,
        name: String,
        supertype: Option<Ast>,
        line: u32,
    },
    Composite {
        name: String,
        static_params: Vec<StaticParam>,
        supertype: Option<Ast>,
        fields: Vec<(String, Option<Ast>)>,
        ctors: Vec<FunctionDef>,
        line: u32,
    },
    Stmt(Stmt, u32),
}

pub fn parse_program(src: &str) -> Result<Vec<Item>, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut items = Vec::new();
    p.skip_newlines();
    while !p.at(&Tok::Eof) {
        items.push(p.parse_item()?);
        p.skip_seps();
    }
    Ok(items)
}

/// Parse a single expression (the REPL and the type-expression CLI).
pub fn parse_expression(src: &str) -> Result<Ast, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    p.skip_newlines();
    let e = p.parse_expr()?;
    p.skip_newlines();
    if !p.at(&Tok::Eof) {
        return Err(p.err("trailing input after expression"));
    }
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }
    fn peek2(&self) -> &Tok {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)].tok
    }
    fn line(&self) -> u32 {
        self.tokens[self.pos].line
    }
    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }
    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }
    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.bump();
            true
        } else {
            false
        }
    }
    fn expect(&mut self, t: &Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.err(&format!("expected {what}")))
        }
    }
    fn err(&self, msg: &str) -> ParseError {
        ParseError {
            msg: msg.to_string(),
            line: self.tokens[self.pos].line,
            col: self.tokens[self.pos].col,
        }
    }
    fn skip_newlines(&mut self) {
        while self.at(&Tok::Newline) {
            self.bump();
        }
    }
    fn skip_seps(&mut self) {
        while self.at(&Tok::Newline) || self.at(&Tok::Semi) {
            self.bump();
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            _ => Err(self.err("expected an identifier")),
        }
    }

    /// An identifier or operator symbol in definition position.
    fn def_name(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            Tok::Op(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.err("expected a function name")),
        }
    }

    // -- items --------------------------------------------------------------

    fn parse_item(&mut self) -> Result<Item, ParseError> {
        let line = self.line();
        match self.peek().clone() {
            Tok::Function => {
                let f = self.parse_function_long(false)?;
                Ok(Item::Func(f))
            }
            Tok::At => {
                self.bump();
                let macro_name = self.ident()?;
                if macro_name != "staged" {
                    return Err(self.err(&format!("unsupported construct: macro @{macro_name}")));
                }
                if !self.at(&Tok::Function) {
                    return Err(self.err("@staged expects a function definition"));
                }
                let f = self.parse_function_long(true)?;
                Ok(Item::Func(f))
            }
            Tok::Abstract => {
                self.bump();
                let name = self.ident()?;
                let static_params = self.parse_static_params()?;
                let supertype = if self.eat(&Tok::Subtype) {
                    Some(self.parse_expr()?)
                } else {
                    None
                };
                Ok(Item::Abstract { name, static_params, supertype, line })
            }
            Tok::Bitstype => {
                self.bump();
                let nbits = match self.bump() {
                    Tok::Int(n) if n > 0 => n as u32,
                    _ => return Err(self.err("bitstype expects a width")),
                };
                let name = self.ident()?;
                let supertype = if self.eat(&Tok::Subtype) {
                    Some(self.parse_expr()?)
                } else {
                    None
                };
                Ok(Item::Bits { nbits, name, supertype, line })
            }
            Tok::TypeKw => self.parse_composite(line),
            _ => {
                let stmt = self.parse_stmt()?;
                // A short-form definition parses as an assignment whose
                // left side is a call shape.
                if let Stmt::Assign { lhs: LValue::Var(_), .. } = &stmt {
                    return Ok(Item::Stmt(stmt, line));
                }
                Ok(Item::Stmt(stmt, line))
            }
        }
    }

    fn parse_composite(&mut self, line: u32) -> Result<Item, ParseError> {
        self.expect(&Tok::TypeKw, "type")?;
        let name = self.ident()?;
        let static_params = self.parse_static_params()?;
        let supertype = if self.eat(&Tok::Subtype) {
            Some(self.parse_expr()?)
        } else {
            None
        };
        self.skip_seps();
        let mut fields = Vec::new();
        let mut ctors = Vec::new();
        while !self.at(&Tok::End) {
            if self.at(&Tok::Eof) {
                return Err(self.err("unterminated type block"));
            }
            if self.at(&Tok::Function) {
                let f = self.parse_function_long(false)?;
                if f.name != name {
                    return Err(self.err(
                        "unsupported construct: non-constructor method inside a type block",
                    ));
                }
                ctors.push(f);
            } else {
                let fname = self.ident()?;
                let fty = if self.eat(&Tok::ColonCol) {
                    Some(self.parse_postfix_type()?)
                } else {
                    None
                };
                fields.push((fname, fty));
            }
            self.skip_seps();
        }
        self.expect(&Tok::End, "end")?;
        Ok(Item::Composite { name, static_params, supertype, fields, ctors, line })
    }

    fn parse_static_params(&mut self) -> Result<Vec<StaticParam>, ParseError> {
        let mut out = Vec::new();
        if !self.eat(&Tok::LBrace) {
            return Ok(out);
        }
        loop {
            let name = self.ident()?;
            let bound = if self.eat(&Tok::Subtype) {
                Some(self.parse_expr()?)
            } else {
                None
            };
            out.push(StaticParam { name, bound });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RBrace, "}")?;
        Ok(out)
    }

    fn parse_function_long(&mut self, staged: bool) -> Result<FunctionDef, ParseError> {
        let line = self.line();
        self.expect(&Tok::Function, "function")?;
        let name = self.def_name()?;
        let static_params = self.parse_static_params()?;
        self.expect(&Tok::LParen, "(")?;
        let params = self.parse_params()?;
        self.skip_newlines();
        let body = self.parse_block(&[Tok::End])?;
        self.expect(&Tok::End, "end")?;
        Ok(FunctionDef { name, static_params, params, body, staged, line })
    }

    fn parse_params(&mut self) -> Result<Vec<Param>, ParseError> {
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            let mut p = self.parse_param()?;
            if self.eat(&Tok::Dots) {
                p.vararg = true;
            }
            out.push(p);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen, ")")?;
        Ok(out)
    }

    fn parse_param(&mut self) -> Result<Param, ParseError> {
        if self.eat(&Tok::ColonCol) {
            let ty = self.parse_postfix_type()?;
            return Ok(Param { name: None, ty: Some(ty), vararg: false });
        }
        let name = self.ident()?;
        let ty = if self.eat(&Tok::ColonCol) {
            Some(self.parse_postfix_type()?)
        } else {
            None
        };
        Ok(Param { name: Some(name), ty, vararg: false })
    }

    /// A type expression at `::` tightness: postfix chains only.
    fn parse_postfix_type(&mut self) -> Result<Ast, ParseError> {
        self.parse_postfix()
    }

    // -- statements ----------------------------------------------------------

    fn parse_block(&mut self, terminators: &[Tok]) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        self.skip_seps();
        while !terminators.iter().any(|t| self.at(t)) {
            if self.at(&Tok::Eof) {
                return Err(self.err("unterminated block"));
            }
            out.push(self.parse_stmt()?);
            self.skip_seps();
        }
        Ok(out)
    }

    fn parse_stmt(&mut self) -> Result<Stmt, ParseError> {
        let line = self.line();
        match self.peek().clone() {
            Tok::If => {
                self.bump();
                let mut arms = Vec::new();
                let cond = self.parse_expr()?;
                self.skip_seps();
                let body = self.parse_block(&[Tok::Elseif, Tok::Else, Tok::End])?;
                arms.push((cond, body));
                let mut els = None;
                loop {
                    if self.eat(&Tok::Elseif) {
                        let c = self.parse_expr()?;
                        self.skip_seps();
                        let b = self.parse_block(&[Tok::Elseif, Tok::Else, Tok::End])?;
                        arms.push((c, b));
                    } else if self.eat(&Tok::Else) {
                        self.skip_seps();
                        els = Some(self.parse_block(&[Tok::End])?);
                        break;
                    } else {
                        break;
                    }
                }
                self.expect(&Tok::End, "end")?;
                Ok(Stmt::If { arms, els })
            }
            Tok::While => {
                self.bump();
                let cond = self.parse_expr()?;
                self.skip_seps();
                let body = self.parse_block(&[Tok::End])?;
                self.expect(&Tok::End, "end")?;
                Ok(Stmt::While { cond, body })
            }
            Tok::For => {
                self.bump();
                let var = self.ident()?;
                if !self.eat(&Tok::In) && !self.eat(&Tok::Assign) {
                    return Err(self.err("expected `in` in for loop"));
                }
                let iter = self.parse_expr()?;
                self.skip_seps();
                let body = self.parse_block(&[Tok::End])?;
                self.expect(&Tok::End, "end")?;
                Ok(Stmt::For { var, iter, body })
            }
            Tok::Return => {
                self.bump();
                if self.at(&Tok::Newline) || self.at(&Tok::Semi) || self.at(&Tok::End) {
                    Ok(Stmt::Return(None))
                } else {
                    Ok(Stmt::Return(Some(self.parse_expr()?)))
                }
            }
            Tok::Global => {
                self.bump();
                let mut names = vec![self.ident()?];
                while self.eat(&Tok::Comma) {
                    names.push(self.ident()?);
                }
                Ok(Stmt::Global(names))
            }
            _ => {
                let e = self.parse_expr()?;
                // Bare destructuring: `a, b = f()`.
                if self.at(&Tok::Comma) {
                    if let Ast::Var(first) = &e {
                        let mut names = vec![first.clone()];
                        while self.eat(&Tok::Comma) {
                            names.push(self.ident()?);
                        }
                        self.expect(&Tok::Assign, "= in destructuring assignment")?;
                        let rhs = self.parse_expr()?;
                        return Ok(Stmt::Assign {
                            lhs: LValue::Tuple(names),
                            rhs,
                            line,
                        });
                    }
                    return Err(self.err("unexpected comma"));
                }
                if self.eat(&Tok::Assign) {
                    let rhs = self.parse_expr()?;
                    let lhs = match e {
                        Ast::Var(v) => LValue::Var(v),
                        Ast::Index { obj, idxs } => LValue::Index { obj: *obj, idxs },
                        Ast::Tuple(args)
                            if args
                                .iter()
                                .all(|a| !a.splat && matches!(a.expr, Ast::Var(_))) =>
                        {
                            LValue::Tuple(
                                args.into_iter()
                                    .map(|a| match a.expr {
                                        Ast::Var(v) => v,
                                        _ => unreachable!(),
                                    })
                                    .collect(),
                            )
                        }
                        e @ Ast::Call { .. } => LValue::CallShape(e),
                        _ => return Err(self.err("cannot assign to this expression")),
                    };
                    return Ok(Stmt::Assign { lhs, rhs, line });
                }
                // Statement-position `x::T` declares the variable's type.
                if let Ast::TypeAssert { expr, ty } = &e {
                    if let Ast::Var(v) = &**expr {
                        return Ok(Stmt::Declare { var: v.clone(), ty: (**ty).clone() });
                    }
                }
                Ok(Stmt::Expr(e))
            }
        }
    }

    // -- expressions ----------------------------------------------------------

    fn parse_expr(&mut self) -> Result<Ast, ParseError> {
        self.parse_arrow()
    }

    fn parse_arrow(&mut self) -> Result<Ast, ParseError> {
        let lhs = self.parse_oror()?;
        if self.eat(&Tok::Arrow) {
            let params = match &lhs {
                Ast::Var(v) => vec![v.clone()],
                Ast::Tuple(args)
                    if args
                        .iter()
                        .all(|a| !a.splat && matches!(a.expr, Ast::Var(_))) =>
                {
                    args.iter()
                        .map(|a| match &a.expr {
                            Ast::Var(v) => v.clone(),
                            _ => unreachable!(),
                        })
                        .collect()
                }
                _ => return Err(self.err("bad anonymous function parameters")),
            };
            let body = self.parse_arrow()?;
            return Ok(Ast::Lambda { params, body: Box::new(body) });
        }
        Ok(lhs)
    }

    fn parse_oror(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.parse_andand()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.parse_andand()?;
            lhs = Ast::OrOr(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_andand(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.parse_comparison()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.parse_comparison()?;
            lhs = Ast::AndAnd(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_comparison(&mut self) -> Result<Ast, ParseError> {
        let lhs = self.parse_range()?;
        if let Tok::Op(op) = self.peek().clone() {
            if matches!(op.as_str(), "==" | "!=" | "<" | "<=" | ">" | ">=") {
                self.bump();
                let rhs = self.parse_range()?;
                return Ok(call2(&op, lhs, rhs));
            }
        }
        Ok(lhs)
    }

    fn parse_range(&mut self) -> Result<Ast, ParseError> {
        let lhs = self.parse_additive()?;
        if self.eat(&Tok::Colon) {
            let rhs = self.parse_additive()?;
            return Ok(call2("colon", lhs, rhs));
        }
        Ok(lhs)
    }

    fn parse_additive(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.parse_multiplicative()?;
        loop {
            match self.peek().clone() {
                Tok::Op(op) if op == "+" || op == "-" => {
                    self.bump();
                    let rhs = self.parse_multiplicative()?;
                    lhs = call2(&op, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_multiplicative(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek().clone() {
                Tok::Op(op) if op == "*" || op == "/" || op == "%" => {
                    self.bump();
                    let rhs = self.parse_unary()?;
                    lhs = call2(&op, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Ast, ParseError> {
        match self.peek().clone() {
            Tok::Op(op) if op == "-" || op == "!" => {
                self.bump();
                let operand = self.parse_unary()?;
                // Fold negated literals so `-9223372036854775807` and float
                // constants stay literals.
                if op == "-" {
                    if let Ast::Int(n) = operand {
                        return Ok(Ast::Int(-n));
                    }
                    if let Ast::Float(x) = operand {
                        return Ok(Ast::Float(-x));
                    }
                }
                // `-(x, y)` is the two-argument call, not negation of a
                // tuple.
                if let Ast::Tuple(args) = operand {
                    return Ok(Ast::Call { callee: Box::new(Ast::Var(op)), args });
                }
                Ok(Ast::Call {
                    callee: Box::new(Ast::Var(op)),
                    args: vec![Arg { expr: operand, splat: false }],
                })
            }
            _ => self.parse_power(),
        }
    }

    fn parse_power(&mut self) -> Result<Ast, ParseError> {
        let base = self.parse_postfix()?;
        if let Tok::Op(op) = self.peek().clone() {
            if op == "^" {
                self.bump();
                let exp = self.parse_unary()?; // right associative
                return Ok(call2("^", base, exp));
            }
        }
        Ok(base)
    }

    fn parse_postfix(&mut self) -> Result<Ast, ParseError> {
        // `::T` with no subject: anonymous typed parameter.
        if self.at(&Tok::ColonCol) {
            self.bump();
            let ty = self.parse_postfix()?;
            return Ok(Ast::AnonTyped(Box::new(ty)));
        }
        let mut e = self.parse_primary()?;
        loop {
            match self.peek().clone() {
                Tok::LParen => {
                    self.bump();
                    let args = self.parse_call_args()?;
                    e = Ast::Call { callee: Box::new(e), args };
                }
                Tok::LBrace => {
                    self.bump();
                    let mut params = Vec::new();
                    if !self.eat(&Tok::RBrace) {
                        loop {
                            // `T<:Bound` is legal here in definition heads.
                            if let (Tok::Ident(name), Tok::Subtype) =
                                (self.peek().clone(), self.peek2().clone())
                            {
                                self.bump();
                                self.bump();
                                let bound = self.parse_expr()?;
                                params.push(Ast::Bounded {
                                    name,
                                    bound: Box::new(bound),
                                });
                            } else {
                                params.push(self.parse_expr()?);
                            }
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(&Tok::RBrace, "}")?;
                    }
                    e = Ast::TypeApply { base: Box::new(e), params };
                }
                Tok::LBracket => {
                    self.bump();
                    let mut idxs = Vec::new();
                    if !self.eat(&Tok::RBracket) {
                        loop {
                            idxs.push(self.parse_expr()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(&Tok::RBracket, "]")?;
                    }
                    e = Ast::Index { obj: Box::new(e), idxs };
                }
                Tok::Dot => {
                    self.bump();
                    let name = self.ident()?;
                    e = Ast::Field { obj: Box::new(e), name };
                }
                Tok::ColonCol => {
                    self.bump();
                    let ty = self.parse_postfix()?;
                    e = Ast::TypeAssert { expr: Box::new(e), ty: Box::new(ty) };
                }
                _ => return Ok(e),
            }
        }
    }

    fn parse_call_args(&mut self) -> Result<Vec<Arg>, ParseError> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            let expr = self.parse_expr()?;
            let splat = self.eat(&Tok::Dots);
            args.push(Arg { expr, splat });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen, ")")?;
        Ok(args)
    }

    fn parse_primary(&mut self) -> Result<Ast, ParseError> {
        match self.bump() {
            Tok::Int(n) => Ok(Ast::Int(n)),
            Tok::Float(x) => Ok(Ast::Float(x)),
            Tok::Str(s) => Ok(Ast::Str(s)),
            Tok::True => Ok(Ast::Bool(true)),
            Tok::False => Ok(Ast::Bool(false)),
            Tok::Ident(name) => Ok(Ast::Var(name)),
            // Operators are ordinary functions; a leading operator token is
            // a reference to one (`+(x, y) = ...`).
            Tok::Op(name) => Ok(Ast::Var(name)),
            Tok::QuoteKw => {
                let body = self.parse_block(&[Tok::End])?;
                self.expect(&Tok::End, "end")?;
                Ok(Ast::QuoteBlock(body))
            }
            Tok::LParen => {
                if self.eat(&Tok::RParen) {
                    return Ok(Ast::Tuple(Vec::new()));
                }
                let first = self.parse_expr()?;
                let first_splat = self.eat(&Tok::Dots);
                if self.eat(&Tok::RParen) {
                    if first_splat {
                        // `(x...)`: a one-element tuple shape.
                        return Ok(Ast::Tuple(vec![Arg { expr: first, splat: true }]));
                    }
                    return Ok(first); // plain grouping
                }
                let mut args = vec![Arg { expr: first, splat: first_splat }];
                let mut trailing_comma = false;
                while self.eat(&Tok::Comma) {
                    if self.at(&Tok::RParen) {
                        trailing_comma = true;
                        break;
                    }
                    let e = self.parse_expr()?;
                    let splat = self.eat(&Tok::Dots);
                    args.push(Arg { expr: e, splat });
                }
                let _ = trailing_comma;
                self.expect(&Tok::RParen, ")")?;
                Ok(Ast::Tuple(args))
            }
            Tok::LBracket => {
                // Concatenation sugar: rows split by `;`, items by comma
                // (vcat) or juxtaposition (hcat).
                let mut rows: Vec<Vec<Ast>> = vec![Vec::new()];
                let mut comma = false;
                loop {
                    if self.at(&Tok::RBracket) {
                        self.bump();
                        break;
                    }
                    let e = self.parse_expr()?;
                    rows.last_mut().unwrap().push(e);
                    if self.eat(&Tok::Comma) {
                        comma = true;
                        continue;
                    }
                    if self.eat(&Tok::Semi) {
                        rows.push(Vec::new());
                        continue;
                    }
                    // juxtaposition continues the row
                }
                rows.retain(|r| !r.is_empty());
                Ok(Ast::Matrix { rows, comma })
            }
            other => Err(ParseError {
                msg: format!("unexpected token {other:?}"),
                line: self.tokens[self.pos.saturating_sub(1)].line,
                col: self.tokens[self.pos.saturating_sub(1)].col,
            }),
        }
    }
}

fn call2(op: &str, a: Ast, b: Ast) -> Ast {
    Ast::Call {
        callee: Box::new(Ast::Var(op.to_string())),
        args: vec![
            Arg { expr: a, splat: false },
            Arg { expr: b, splat: false },
        ],
    }
}
