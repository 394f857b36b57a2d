//! Recursive-descent parser for the expression grammar.

use super::{BinOp, Func, Node, ParseError, ParseErrorKind, Scope};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("{v}"),
            Tok::Ident(s) => s.clone(),
            Tok::Op(c) => c.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::End => "<end>".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, (ParseErrorKind, usize)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                // Only treat as exponent when digits follow.
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| (ParseErrorKind::BadNumber(text.to_string()), start))?;
            out.push((Tok::Num(v), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
            continue;
        }
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                let ch = src[i..].chars().next().unwrap_or(c);
                return Err((ParseErrorKind::UnexpectedChar(ch), start));
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    scope: &'a Scope,
}

type PResult<T> = Result<T, (ParseErrorKind, usize)>;

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> (ParseErrorKind, usize) {
        match self.peek() {
            Tok::End => (ParseErrorKind::UnexpectedEnd, self.offset()),
            t => (ParseErrorKind::UnexpectedToken(t.describe()), self.offset()),
        }
    }

    fn expr(&mut self) -> PResult<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> PResult<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Node> {
        if let Tok::Op('-') = self.peek() {
            self.bump();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        if let Tok::Op('+') = self.peek() {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Node> {
        let base = self.atom()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            // Right associative; the exponent may carry its own sign.
            let exp = self.unary()?;
            return Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> PResult<Node> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Tok::LParen = self.peek() {
                    let func = Func::from_name(&name)
                        .ok_or((ParseErrorKind::UnknownFunction(name.clone()), at))?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                match self.scope.variable(&name) {
                    Ok(i) => return Ok(Node::Var(i)),
                    Err(Some(_)) => {
                        return Err((ParseErrorKind::UndeclaredVariable(name), at));
                    }
                    Err(None) => {}
                }
                if let Some(v) = self.scope.constant(&name) {
                    return Ok(Node::Num(v));
                }
                Err((ParseErrorKind::UnknownIdentifier(name), at))
            }
            Tok::End => Err((ParseErrorKind::UnexpectedEnd, at)),
            other => Err((ParseErrorKind::UnexpectedToken(other.describe()), at)),
        }
    }

    fn expect_rparen(&mut self) -> PResult<()> {
        if let Tok::RParen = self.peek() {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }
}

pub(super) fn parse(src: &str, scope: &Scope) -> Result<Node, ParseError> {
    let wrap = |(kind, position): (ParseErrorKind, usize)| ParseError {
        kind,
        position,
        source_text: src.to_string(),
    };
    let toks = lex(src).map_err(wrap)?;
    if toks.len() == 1 {
        return Err(wrap((ParseErrorKind::Empty, 0)));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        scope,
    };
    let node = p.expr().map_err(wrap)?;
    if *p.peek() != Tok::End {
        return Err(wrap(p.unexpected()));
    }
    Ok(node)
}
