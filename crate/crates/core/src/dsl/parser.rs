//! Recursive-descent parser for policy documents.
//!
//! ```text
//! policy     := section*
//! section    := ("Events" | "Conditions" | "Actions" | "Rules") "{" item* "}"
//! item       := SIDE "{" decl* "}" | decl
//! event      := NAME "(" params? ")" "=" "{" ("before"|"after")? NS ("*" ".")|"." METHOD "(" ("..."|params?) ")" "}"
//!               ("uponReturning" "(" NAME ")")? ";"?
//! condition  := NAME ("(" ")")? "=" "{" (SIDE "{" expr "}" | expr) "}" ";"?
//! action     := NAME ("(" ")")? "=" "{" (SIDE "{" stmts "}" | stmts) "}" ";"?
//! rule       := (NAME "=")? NAME ("(" ")")? "|" guard "->" ref ("," ref)* ";"?
//! ```
//!
//! Section and side keywords are case-insensitive.

use super::ast::*;
use super::error::ParseError;
use super::lexer::{tokenize, Tok, Token};
use crate::expr::{BinOp, Builtin, Expr, Namespace, Stmt, UnOp, VarRef};
use crate::value::{Ty, Value};

const MAX_DEPTH: usize = 96;

/// Parses a policy document.
pub fn parse_policy(src: &str) -> Result<PolicySpec, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, depth: 0 };
    p.policy()
}

/// Parses a single expression; handy for tests and tooling.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0, depth: 0 };
    let e = p.expr()?;
    p.expect(Tok::Eof)?;
    Ok(e)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Events,
    Conditions,
    Actions,
    Rules,
}

impl Section {
    fn from_keyword(word: &str) -> Option<Section> {
        match word.to_ascii_lowercase().as_str() {
            "events" => Some(Section::Events),
            "conditions" => Some(Section::Conditions),
            "actions" => Some(Section::Actions),
            "rules" => Some(Section::Rules),
            _ => None,
        }
    }
}

const SECTION_NAMES: &[&str] = &["Events", "Conditions", "Actions", "Rules"];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        ParseError::at(self.span(), format!("unexpected {}", self.peek().describe())).expecting(expected)
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, ParseError> {
        if *self.peek() == tok {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&[tok.symbol()]))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let span = self.span();
                self.advance();
                Ok((s, span))
            }
            _ => Err(self.unexpected(&[what])),
        }
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Tok::Ident(s) => Some(s),
            _ => None,
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::at(self.span(), "nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    /// Optional empty `()` after a reference.
    fn empty_parens(&mut self) -> Result<(), ParseError> {
        if self.eat(&Tok::LParen) {
            self.expect(Tok::RParen)?;
        }
        Ok(())
    }

    fn side_group_ahead(&self) -> Option<Side> {
        match (self.peek(), self.peek_at(1)) {
            (Tok::Ident(w), Tok::LBrace) => Side::from_keyword(w),
            _ => None,
        }
    }

    fn policy(&mut self) -> Result<PolicySpec, ParseError> {
        let mut spec = PolicySpec::default();
        let mut seen: Vec<Section> = Vec::new();
        while *self.peek() != Tok::Eof {
            let span = self.span();
            let Some(section) = self.peek_ident().and_then(Section::from_keyword) else {
                return Err(self.unexpected(SECTION_NAMES));
            };
            if seen.contains(&section) {
                return Err(ParseError::at(span, "section declared twice"));
            }
            seen.push(section);
            self.advance();
            self.expect(Tok::LBrace)?;
            while !self.eat(&Tok::RBrace) {
                if let Some(side) = self.side_group_ahead() {
                    self.advance();
                    self.advance();
                    while !self.eat(&Tok::RBrace) {
                        self.item(section, Some(side), &mut spec)?;
                    }
                } else {
                    self.item(section, None, &mut spec)?;
                }
            }
        }
        Ok(spec)
    }

    fn item(&mut self, section: Section, group: Option<Side>, spec: &mut PolicySpec) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            return Err(self.unexpected(&["declaration", "}"]));
        }
        let span = self.span();
        match section {
            Section::Events => {
                let e = self.event(group)?;
                spec.source_spans.insert((DeclKind::Event, spec.events.len()), span);
                spec.events.push(e);
            }
            Section::Conditions => {
                let c = self.condition(group)?;
                spec.source_spans.insert((DeclKind::Condition, spec.conditions.len()), span);
                spec.conditions.push(c);
            }
            Section::Actions => {
                let a = self.action(group)?;
                spec.source_spans.insert((DeclKind::Action, spec.actions.len()), span);
                spec.actions.push(a);
            }
            Section::Rules => {
                if group.is_some() {
                    return Err(ParseError::at(span, "rules are not side-tagged"));
                }
                let r = self.rule()?;
                spec.source_spans.insert((DeclKind::Rule, spec.rules.len()), span);
                spec.rules.push(r);
            }
        }
        self.eat(&Tok::Semi);
        Ok(())
    }

    fn decl_name(&mut self) -> Result<String, ParseError> {
        let (name, span) = self.ident("declaration name")?;
        if Side::from_keyword(&name).is_some() {
            return Err(ParseError::at(span, "side keyword used as a name"));
        }
        Ok(name)
    }

    fn param(&mut self) -> Result<Param, ParseError> {
        let (ty_word, span) = self.ident("parameter type")?;
        let ty = Ty::from_param_keyword(&ty_word).ok_or_else(|| {
            ParseError::at(span, format!("unknown type `{ty_word}`")).expecting(&[
                "bool",
                "int",
                "string",
                "timestamp",
                "duration",
            ])
        })?;
        let (name, _) = self.ident("parameter name")?;
        Ok(Param { name, ty })
    }

    fn param_list(&mut self) -> Result<Vec<Param>, ParseError> {
        let mut out = Vec::new();
        if *self.peek() == Tok::RParen {
            return Ok(out);
        }
        loop {
            out.push(self.param()?);
            if !self.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn event(&mut self, group: Option<Side>) -> Result<EventDecl, ParseError> {
        let name = self.decl_name()?;
        self.expect(Tok::LParen)?;
        let header_params = self.param_list()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Assign)?;
        self.expect(Tok::LBrace)?;
        let phase = match self.peek_ident() {
            Some("after") if matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.advance();
                Phase::After
            }
            Some("before") if matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.advance();
                Phase::Before
            }
            _ => Phase::Before,
        };
        let (namespace, _) = self.ident("API namespace")?;
        let receiver_wildcard = if self.eat(&Tok::Star) {
            self.expect(Tok::Dot)?;
            true
        } else {
            self.expect(Tok::Dot)?;
            false
        };
        let (method, _) = self.ident("method name")?;
        self.expect(Tok::LParen)?;
        let args = if self.eat(&Tok::Ellipsis) { ArgPattern::Any } else { ArgPattern::Exact(self.param_list()?) };
        self.expect(Tok::RParen)?;
        self.eat(&Tok::Semi);
        self.expect(Tok::RBrace)?;
        let return_binding = if self.peek_ident() == Some("uponReturning") {
            self.advance();
            self.expect(Tok::LParen)?;
            let (b, _) = self.ident("return binding")?;
            self.expect(Tok::RParen)?;
            Some(b)
        } else {
            None
        };
        Ok(EventDecl {
            name,
            group,
            phase,
            pattern: CallPattern { namespace, method, receiver_wildcard, args },
            header_params,
            return_binding,
        })
    }

    fn decl_head(&mut self) -> Result<String, ParseError> {
        let name = self.decl_name()?;
        self.empty_parens()?;
        self.expect(Tok::Assign)?;
        self.expect(Tok::LBrace)?;
        Ok(name)
    }

    /// Inner side tag of a body: `applicationSide { ... }`.
    fn inner_tag(&mut self) -> Option<Side> {
        let side = self.side_group_ahead()?;
        self.advance();
        self.advance();
        Some(side)
    }

    fn condition(&mut self, group: Option<Side>) -> Result<ConditionDecl, ParseError> {
        let name = self.decl_head()?;
        let inner = self.inner_tag();
        let body = self.expr()?;
        if inner.is_some() {
            self.eat(&Tok::Semi);
            self.expect(Tok::RBrace)?;
        }
        self.eat(&Tok::Semi);
        self.expect(Tok::RBrace)?;
        Ok(ConditionDecl { name, tag: SideTag { outer: group, inner }, body })
    }

    fn action(&mut self, group: Option<Side>) -> Result<ActionDecl, ParseError> {
        let name = self.decl_head()?;
        let inner = self.inner_tag();
        let body = self.stmts()?;
        if inner.is_some() {
            self.expect(Tok::RBrace)?;
        }
        self.expect(Tok::RBrace)?;
        Ok(ActionDecl { name, tag: SideTag { outer: group, inner }, body })
    }

    /// Statements up to (not including) the closing brace.
    fn stmts(&mut self) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while *self.peek() != Tok::RBrace {
            out.push(self.stmt()?);
            if !self.eat(&Tok::Semi) && *self.peek() != Tok::RBrace {
                return Err(self.unexpected(&[";", "}"]));
            }
        }
        Ok(out)
    }

    fn state_var(&mut self) -> Result<VarRef, ParseError> {
        let (ns_word, span) = self.ident("`local` or `global`")?;
        let ns = match Namespace::from_prefix(&ns_word) {
            Some(ns @ (Namespace::Local | Namespace::Global)) => ns,
            Some(_) => return Err(ParseError::at(span, format!("`{ns_word}.` variables are read-only"))),
            None => return Err(ParseError::at(span, "expected a state variable").expecting(&["local", "global"])),
        };
        self.expect(Tok::Dot)?;
        let (name, _) = self.ident("variable name")?;
        Ok(VarRef { ns, name })
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        let word = self.peek_ident().map(str::to_string);
        match word.as_deref() {
            Some("return") => {
                self.advance();
                Ok(Stmt::Block)
            }
            Some("block") if *self.peek_at(1) == Tok::LParen => {
                self.advance();
                self.advance();
                self.expect(Tok::RParen)?;
                Ok(Stmt::Block)
            }
            Some(f @ ("append" | "prune_older")) if *self.peek_at(1) == Tok::LParen => {
                let append = f == "append";
                self.advance();
                self.advance();
                let var = self.state_var()?;
                self.expect(Tok::Comma)?;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(if append { Stmt::Append(var, e) } else { Stmt::PruneOlder(var, e) })
            }
            Some("set_attr") if *self.peek_at(1) == Tok::LParen => {
                self.advance();
                self.advance();
                let name = match self.advance().tok {
                    Tok::Str(s) => s,
                    _ => return Err(ParseError::at(span, "set_attr expects an attribute name string")),
                };
                self.expect(Tok::Comma)?;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(Stmt::SetAttr(name, e))
            }
            Some(_) => {
                let var = self.state_var()?;
                self.expect(Tok::ColonAssign)?;
                let e = self.expr()?;
                Ok(Stmt::Assign(var, e))
            }
            None => Err(self.unexpected(&["statement"])),
        }
    }

    fn rule(&mut self) -> Result<RuleDecl, ParseError> {
        let name = if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Assign {
            let n = self.decl_name()?;
            self.advance();
            Some(n)
        } else {
            None
        };
        let (trigger, _) = self.ident("event name")?;
        self.empty_parens()?;
        self.expect(Tok::Pipe)?;
        let guard = self.guard()?;
        self.expect(Tok::Arrow)?;
        let mut actions = Vec::new();
        loop {
            let (a, _) = self.ident("action name")?;
            self.empty_parens()?;
            actions.push(a);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(RuleDecl { name, trigger, guard, actions })
    }

    fn guard(&mut self) -> Result<Formula<String>, ParseError> {
        self.enter()?;
        let mut lhs = self.guard_and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.guard_and()?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        self.leave();
        Ok(lhs)
    }

    fn guard_and(&mut self) -> Result<Formula<String>, ParseError> {
        let mut lhs = self.guard_unary()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.guard_unary()?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn guard_unary(&mut self) -> Result<Formula<String>, ParseError> {
        if self.eat(&Tok::Bang) {
            self.enter()?;
            let inner = self.guard_unary()?;
            self.leave();
            return Ok(Formula::Not(Box::new(inner)));
        }
        if self.eat(&Tok::LParen) {
            let g = self.guard()?;
            self.expect(Tok::RParen)?;
            return Ok(g);
        }
        match self.peek() {
            Tok::Ident(_) => {
                let (c, _) = self.ident("condition name")?;
                self.empty_parens()?;
                Ok(Formula::Atom(c))
            }
            _ => Err(self.unexpected(&["condition name", "!", "("])),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.expr_and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.expr_and()?;
            lhs = Expr::bin(BinOp::Or, lhs, rhs);
        }
        self.leave();
        Ok(lhs)
    }

    fn expr_and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.expr_cmp()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.expr_cmp()?;
            lhs = Expr::bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.expr_add()?;
        let op = match self.peek() {
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.expr_add()?;
        Ok(Expr::bin(op, lhs, rhs))
    }

    fn expr_add(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.expr_mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.expr_mul()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn expr_mul(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.expr_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.expr_unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn expr_unary(&mut self) -> Result<Expr, ParseError> {
        let op = match self.peek() {
            Tok::Bang => UnOp::Not,
            Tok::Minus => UnOp::Neg,
            _ => return self.primary(),
        };
        self.advance();
        self.enter()?;
        let inner = self.expr_unary()?;
        self.leave();
        Ok(Expr::Unary(op, Box::new(inner)))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.advance();
                Ok(Expr::Lit(Value::Int(i)))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Lit(Value::Str(s)))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(word) => {
                self.advance();
                if let Some(ns) = Namespace::from_prefix(&word) {
                    self.expect(Tok::Dot)?;
                    let (name, _) = self.ident("variable name")?;
                    return Ok(Expr::Var(VarRef { ns, name }));
                }
                match word.as_str() {
                    "true" => return Ok(Expr::bool(true)),
                    "false" => return Ok(Expr::bool(false)),
                    "now" => {
                        self.empty_parens()?;
                        return Ok(Expr::Now);
                    }
                    "app_id" => return Ok(Expr::AppId),
                    "app_name" => return Ok(Expr::AppName),
                    _ => {}
                }
                if *self.peek() == Tok::LParen {
                    let Some(b) = Builtin::from_name(&word) else {
                        return Err(ParseError::at(span, format!("unknown function `{word}`")));
                    };
                    self.advance();
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            if !self.eat(&Tok::Comma) {
                                return Err(self.unexpected(&[",", ")"]));
                            }
                        }
                    }
                    return Ok(Expr::Call(b, args));
                }
                Ok(Expr::Var(VarRef { ns: Namespace::Param, name: word }))
            }
            _ => Err(self.unexpected(&["expression"])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_policy() {
        let spec = parse_policy("Events { } Conditions { } Actions { } Rules { }").unwrap();
        assert_eq!(spec, PolicySpec::default());
        assert_eq!(parse_policy("").unwrap(), PolicySpec::default());
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let spec = parse_policy("events { } CONDITIONS { } actions { } rules { }").unwrap();
        assert_eq!(spec, PolicySpec::default());
    }

    #[test]
    fn duplicate_section_rejected() {
        let err = parse_policy("Events { } Events { }").unwrap_err();
        assert_eq!(err.span, Span { line: 1, col: 12 });
    }

    #[test]
    fn expression_precedence() {
        let e = parse_expr("!a && b || c == 1 + 2 * 3").unwrap();
        assert_eq!(e.to_string(), "!a && b || c == 1 + 2 * 3");
        let e = parse_expr("(a || b) && c").unwrap();
        assert!(matches!(e, Expr::Binary(BinOp::And, ..)));
        assert!(parse_expr("a < b < c").is_err());
    }

    #[test]
    fn guard_parentheses_are_optional_on_references() {
        let spec =
            parse_policy("Rules { e() | !maximumQuotaReached() && successful -> incrementMessageCount(); }").unwrap();
        let r = &spec.rules[0];
        assert_eq!(r.trigger, "e");
        assert_eq!(
            r.guard,
            Formula::And(
                Box::new(Formula::Not(Box::new(Formula::Atom("maximumQuotaReached".into())))),
                Box::new(Formula::Atom("successful".into()))
            )
        );
        assert_eq!(r.actions, vec!["incrementMessageCount".to_string()]);
    }

    #[test]
    fn errors_carry_position_and_expectations() {
        let err = parse_policy("Events {\n  foo( = ").unwrap_err();
        assert_eq!(err.span.line, 2);
        assert!(!err.expected.is_empty());
        let err = parse_policy("Bogus { }").unwrap_err();
        assert_eq!(err.expected, SECTION_NAMES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let src = format!("Conditions {{ c = {{ {}a{} }} }}", "(".repeat(5000), ")".repeat(5000));
        assert!(parse_policy(&src).is_err());
        let src = format!("Conditions {{ c = {{ {}a }} }}", "!".repeat(5000));
        assert!(parse_policy(&src).is_err());
    }

    #[test]
    fn assignment_to_event_is_rejected() {
        assert!(parse_policy("Actions { a = { event.x := 1 } }").is_err());
    }
}
