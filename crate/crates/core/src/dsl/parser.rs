use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;
use crate::policy::CmpOp;

const ITEM_KEYWORDS: [&str; 5] = ["enum", "schema", "entity", "let", "policy"];
const RESERVED: [&str; 15] = [
    "enum", "schema", "entity", "let", "policy", "rule", "and", "or", "not", "exists", "forall", "in", "disjoint",
    "true", "false",
];

const EXPECTED_EXPR: &str = "an expression (literal, variable, attribute or builtin call)";

/// Marker for an error that has already been recorded.
struct Failed;

type PResult<T> = Result<T, Failed>;

pub fn parse_text(src: &str) -> Result<Bundle, Vec<ParseError>> {
    let (tokens, lex_errors) = tokenize(src);
    let mut p = Parser { tokens, pos: 0, errors: lex_errors };
    let bundle = p.bundle();
    if p.errors.is_empty() {
        Ok(bundle)
    } else {
        p.errors.sort_by_key(|e| (e.line, e.column));
        Err(p.errors)
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    errors: Vec<ParseError>,
}

impl Parser {
    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), TokenKind::Ident(s) if s == kw)
    }

    fn error_here(&mut self, message: impl Into<String>, expected: impl Into<String>) -> Failed {
        let tok = &self.tokens[self.pos];
        let message = format!("{} (found {})", message.into(), tok.kind.describe());
        self.errors.push(ParseError::new(tok.line, tok.column, message, expected));
        Failed
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<()> {
        if *self.peek() == kind {
            self.advance();
            Ok(())
        } else {
            let d = kind.describe();
            Err(self.error_here(format!("expected {d}"), d))
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        if self.at_keyword(kw) {
            self.advance();
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{kw}`"), format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            TokenKind::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error_here(format!("expected {what}"), what.to_owned())),
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn bundle(&mut self) -> Bundle {
        let mut b = Bundle::default();
        loop {
            let result = match self.peek() {
                TokenKind::Eof => break,
                TokenKind::Ident(kw) => match kw.as_str() {
                    "enum" => self.enum_item().map(|i| b.enums.push(i)),
                    "schema" => self.schema_item().map(|i| b.schemas.push(i)),
                    "entity" => self.entity_item().map(|i| b.entities.push(i)),
                    "let" => self.const_item().map(|i| b.consts.push(i)),
                    "policy" => self.policy_item().map(|i| b.policies.push(i)),
                    _ => Err(self.item_error()),
                },
                _ => Err(self.item_error()),
            };
            if result.is_err() {
                self.sync_to_item();
            }
        }
        b
    }

    fn item_error(&mut self) -> Failed {
        self.error_here("expected a declaration", "one of `enum`, `schema`, `entity`, `let`, `policy`")
    }

    /// Skips to the next token that can start a top-level declaration.
    fn sync_to_item(&mut self) {
        // always make progress past the offending token
        if !matches!(self.peek(), TokenKind::Eof) {
            self.advance();
        }
        while !matches!(self.peek(), TokenKind::Eof) {
            if let TokenKind::Ident(s) = self.peek() {
                if ITEM_KEYWORDS.contains(&s.as_str()) {
                    return;
                }
            }
            self.advance();
        }
    }

    fn enum_item(&mut self) -> PResult<EnumItem> {
        self.keyword("enum")?;
        let name = self.ident("an enumeration name")?;
        self.expect(TokenKind::LBrace)?;
        let mut members = Vec::new();
        loop {
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            members.push(self.ident("an enumeration member or `}`")?);
            self.eat(&TokenKind::Comma);
        }
        Ok(EnumItem { name, members })
    }

    fn schema_item(&mut self) -> PResult<SchemaItem> {
        self.keyword("schema")?;
        let kind = self.ident("a kind name")?;
        self.expect(TokenKind::LBrace)?;
        let mut fields = Vec::new();
        loop {
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            let name = self.ident("an attribute name or `}`")?;
            self.expect(TokenKind::Colon)?;
            let ty = self.type_expr()?;
            fields.push((name, ty));
            if !self.eat(&TokenKind::Comma) {
                self.expect(TokenKind::RBrace)?;
                break;
            }
        }
        Ok(SchemaItem { kind, fields })
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        if self.eat(&TokenKind::LBracket) {
            let inner = self.type_expr()?;
            self.expect(TokenKind::RBracket)?;
            return Ok(TypeExpr::List(Box::new(inner)));
        }
        let name = self.ident("a type")?;
        Ok(match name.as_str() {
            "Nat" => TypeExpr::Nat,
            "Str" => TypeExpr::Str,
            "Bool" => TypeExpr::Bool,
            _ => TypeExpr::Named(name),
        })
    }

    fn entity_item(&mut self) -> PResult<EntityItem> {
        self.keyword("entity")?;
        let handle = self.ident("an entity name")?;
        self.expect(TokenKind::Colon)?;
        let kind = self.ident("a kind name")?;
        let mut id = None;
        if self.at_keyword("id") {
            self.advance();
            match self.peek().clone() {
                TokenKind::Str(s) => {
                    self.advance();
                    id = Some(s);
                }
                _ => return Err(self.error_here("expected the entity URI", "a string literal")),
            }
        }
        self.expect(TokenKind::LBrace)?;
        let mut attrs = Vec::new();
        loop {
            if self.eat(&TokenKind::RBrace) {
                break;
            }
            let name = self.ident("an attribute name or `}`")?;
            self.expect(TokenKind::Assign)?;
            let value = self.literal()?;
            attrs.push((name, value));
            if !self.eat(&TokenKind::Comma) {
                self.expect(TokenKind::RBrace)?;
                break;
            }
        }
        Ok(EntityItem { handle, kind, id, attrs })
    }

    fn const_item(&mut self) -> PResult<ConstItem> {
        self.keyword("let")?;
        let name = self.ident("a constant name")?;
        self.expect(TokenKind::Colon)?;
        let ty = self.type_expr()?;
        self.expect(TokenKind::Assign)?;
        let value = self.literal()?;
        self.expect(TokenKind::Semi)?;
        Ok(ConstItem { name, ty, value })
    }

    fn literal(&mut self) -> PResult<Literal> {
        match self.peek().clone() {
            TokenKind::Nat(n) => {
                self.advance();
                Ok(Literal::Nat(n))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(Literal::Str(s))
            }
            TokenKind::LBracket => {
                self.advance();
                let mut items = Vec::new();
                loop {
                    if self.eat(&TokenKind::RBracket) {
                        break;
                    }
                    items.push(self.literal()?);
                    if !self.eat(&TokenKind::Comma) {
                        self.expect(TokenKind::RBracket)?;
                        break;
                    }
                }
                Ok(Literal::List(items))
            }
            TokenKind::Ident(s) if s == "true" || s == "false" => {
                self.advance();
                Ok(Literal::Bool(s == "true"))
            }
            TokenKind::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.advance();
                if self.eat(&TokenKind::PathSep) {
                    let atom = self.ident("an enumeration member")?;
                    Ok(Literal::Atom { enum_name: s, atom })
                } else {
                    Ok(Literal::Ident(s))
                }
            }
            _ => Err(self.error_here("expected a literal", "a literal value")),
        }
    }

    fn policy_item(&mut self) -> PResult<PolicyItem> {
        self.keyword("policy")?;
        let name = self.ident("a policy name")?;
        self.expect(TokenKind::LParen)?;
        let mut params = Vec::new();
        loop {
            if self.eat(&TokenKind::RParen) {
                break;
            }
            let p = self.ident("a parameter name or `)`")?;
            self.expect(TokenKind::Colon)?;
            let k = self.ident("a kind name")?;
            params.push((p, k));
            if !self.eat(&TokenKind::Comma) {
                self.expect(TokenKind::RParen)?;
                break;
            }
        }
        self.expect(TokenKind::LBrace)?;
        let mut rules = Vec::new();
        let mut failed = false;
        loop {
            match self.peek() {
                TokenKind::RBrace => {
                    self.advance();
                    break;
                }
                TokenKind::Eof => {
                    return Err(self.error_here("unclosed policy body", "`}`"));
                }
                _ => {}
            }
            match self.rule_item() {
                Ok(r) => rules.push(r),
                Err(Failed) => {
                    failed = true;
                    self.sync_to_rule();
                    if self.at_item_keyword() {
                        return Err(Failed);
                    }
                }
            }
        }
        if failed {
            // errors already recorded; keep scanning the rest of the file
            return Ok(PolicyItem { name, params, rules });
        }
        Ok(PolicyItem { name, params, rules })
    }

    fn at_item_keyword(&self) -> bool {
        matches!(self.peek(), TokenKind::Ident(s) if ITEM_KEYWORDS.contains(&s.as_str()))
    }

    /// Skips past the current rule: to just after `;`, or to the next `rule`,
    /// `}` or declaration keyword.
    fn sync_to_rule(&mut self) {
        loop {
            match self.peek() {
                TokenKind::Eof | TokenKind::RBrace => return,
                TokenKind::Semi => {
                    self.advance();
                    return;
                }
                TokenKind::Ident(s) if s == "rule" || ITEM_KEYWORDS.contains(&s.as_str()) => return,
                _ => {
                    self.advance();
                }
            }
        }
    }

    fn rule_item(&mut self) -> PResult<RuleItem> {
        self.keyword("rule")?;
        let name = self.ident("a rule name")?;
        self.expect(TokenKind::Colon)?;
        let body = self.formula()?;
        self.expect(TokenKind::Semi)?;
        Ok(RuleItem { name, body })
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut left = self.conjunction()?;
        while self.at_keyword("or") {
            self.advance();
            let right = self.conjunction()?;
            left = Formula::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut left = self.unary()?;
        while self.at_keyword("and") {
            self.advance();
            let right = self.unary()?;
            left = Formula::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Formula> {
        if self.at_keyword("not") {
            self.advance();
            return Ok(Formula::Not(Box::new(self.unary()?)));
        }
        if self.at_keyword("exists") || self.at_keyword("forall") {
            let forall = self.at_keyword("forall");
            self.advance();
            let var = self.ident("a variable name")?;
            self.expect(TokenKind::Colon)?;
            let domain = self.ident("a domain (entity kind or enumeration)")?;
            self.expect(TokenKind::Dot)?;
            let body = Box::new(self.formula()?);
            return Ok(if forall {
                Formula::Forall { var, domain, body }
            } else {
                Formula::Exists { var, domain, body }
            });
        }
        if self.eat(&TokenKind::LParen) {
            let f = self.formula()?;
            self.expect(TokenKind::RParen)?;
            return Ok(f);
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Formula> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            TokenKind::Op(op) => Some(*op),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let op = match op {
                "==" => CmpOp::Eq,
                "!=" => CmpOp::Ne,
                "<=" => CmpOp::Le,
                "<" => CmpOp::Lt,
                ">=" => CmpOp::Ge,
                ">" => CmpOp::Gt,
                _ => unreachable!("lexer only produces comparison operators"),
            };
            let rhs = self.expr()?;
            return Ok(Formula::Cmp { lhs, op, rhs });
        }
        if self.at_keyword("in") {
            self.advance();
            let set = self.expr()?;
            return Ok(Formula::In { elem: lhs, set });
        }
        if self.at_keyword("disjoint") {
            self.advance();
            let b = self.expr()?;
            return Ok(Formula::Disjoint { a: lhs, b });
        }
        match lhs {
            Expr::Call { name, args } => Ok(Formula::Apply { policy: name, args }),
            _ => Err(self.error_here(
                "expected a comparison",
                "one of `==`, `!=`, `<=`, `<`, `>=`, `>`, `in`, `disjoint`",
            )),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            TokenKind::Nat(_) | TokenKind::Str(_) | TokenKind::LBracket => Ok(Expr::Lit(self.literal()?)),
            TokenKind::Ident(s) if s == "true" || s == "false" => Ok(Expr::Lit(self.literal()?)),
            TokenKind::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.advance();
                match self.peek() {
                    TokenKind::PathSep => {
                        self.advance();
                        let atom = self.ident("an enumeration member")?;
                        Ok(Expr::Lit(Literal::Atom { enum_name: s, atom }))
                    }
                    TokenKind::Dot if matches!(self.peek_at(1), TokenKind::Ident(_)) => {
                        self.advance();
                        let path = self.ident("an attribute name")?;
                        Ok(Expr::Attr { var: s, path })
                    }
                    TokenKind::LParen => {
                        self.advance();
                        let mut args = Vec::new();
                        loop {
                            if self.eat(&TokenKind::RParen) {
                                break;
                            }
                            args.push(self.expr()?);
                            if !self.eat(&TokenKind::Comma) {
                                self.expect(TokenKind::RParen)?;
                                break;
                            }
                        }
                        Ok(Expr::Call { name: s, args })
                    }
                    _ => Ok(Expr::Var(s)),
                }
            }
            _ => Err(self.error_here("expected an expression", EXPECTED_EXPR)),
        }
    }
}
