//! Restricted coefficient expressions: polynomials in `x` and `y` built from
//! numbers, `+`, `-`, `*`, `^` (nonnegative integer exponents), parentheses
//! and the literal `inf` for an absent upper bound.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut parser = Parser { tokens: tokenize(text)?, pos: 0 };
        let expr = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(format!("unexpected trailing input in expression {text:?}"));
        }
        Ok(expr)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => x,
            Expr::Y => y,
            Expr::Neg(e) => -e.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Pow(e, k) => e.eval(x, y).powi(*k as i32),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_infinite() && *c > 0.0 => write!(f, "inf"),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => write!(f, "x"),
            Expr::Y => write!(f, "y"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Pow(e, k) => write!(f, "({e})^{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    X,
    Y,
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<Token>, String> {
    if !text.is_ascii() {
        return Err(format!("expression {text:?} contains non-ascii characters"));
    }
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                tokens.push(Token::Plus);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '*' => {
                tokens.push(Token::Star);
                i += 1;
            }
            '^' => {
                tokens.push(Token::Caret);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            'x' => {
                tokens.push(Token::X);
                i += 1;
            }
            'y' => {
                tokens.push(Token::Y);
                i += 1;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_digit() || d == '.' {
                        i += 1;
                    } else if (d == 'e' || d == 'E')
                        && i + 1 < bytes.len()
                        && {
                            let n = bytes[i + 1] as char;
                            n.is_ascii_digit() || n == '+' || n == '-'
                        }
                    {
                        i += 2;
                    } else {
                        break;
                    }
                }
                let value: f64 = text[start..i]
                    .parse()
                    .map_err(|_| format!("bad number {:?}", &text[start..i]))?;
                tokens.push(Token::Number(value));
            }
            _ if text[i..].starts_with("inf") => {
                tokens.push(Token::Number(f64::INFINITY));
                i += 3;
            }
            _ => return Err(format!("unexpected character {c:?} in expression {text:?}")),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut acc = self.term()?;
        while let Some(tok) = self.peek() {
            match tok {
                Token::Plus => {
                    self.next();
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.next();
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut acc = self.factor()?;
        while let Some(Token::Star) = self.peek() {
            self.next();
            acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, String> {
        if let Some(Token::Minus) = self.peek() {
            self.next();
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.next();
            match self.next() {
                Some(Token::Number(k)) if k >= 0.0 && k.fract() == 0.0 && k <= u32::MAX as f64 => {
                    Ok(Expr::Pow(Box::new(base), k as u32))
                }
                other => Err(format!("exponent must be a nonnegative integer, got {other:?}")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Token::Number(v)) => Ok(Expr::Const(v)),
            Some(Token::X) => Ok(Expr::X),
            Some(Token::Y) => Ok(Expr::Y),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err("missing closing parenthesis".into()),
                }
            }
            other => Err(format!("expected a value, got {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_paper_coefficients() {
        let ua = Expr::parse("-3*x - 3*y + 10").unwrap();
        assert_eq!(ua.eval(-0.5, -0.5), 13.0);
        assert_eq!(ua.eval(0.5, 0.5), 7.0);

        let b = Expr::parse("100*(x^2 + y^2)").unwrap();
        assert_eq!(b.eval(0.5, -0.5), 50.0);
        assert_eq!(b.eval(0.0, 0.0), 0.0);

        let f = Expr::parse("100").unwrap();
        assert_eq!(f.eval(0.3, -0.1), 100.0);

        let ub = Expr::parse("inf").unwrap();
        assert_eq!(ub.eval(0.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn scientific_notation_and_precedence() {
        let e = Expr::parse("4e-5 + 2*x^2").unwrap();
        assert_eq!(e.eval(3.0, 0.0), 4e-5 + 18.0);
        let e = Expr::parse("2 - 3 - 4").unwrap();
        assert_eq!(e.eval(0.0, 0.0), -5.0);
        let e = Expr::parse("-x^2").unwrap();
        assert_eq!(e.eval(2.0, 0.0), -4.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("2 +").is_err());
        assert!(Expr::parse("x^(2)").is_err());
        assert!(Expr::parse("x^-1").is_err());
        assert!(Expr::parse("z + 1").is_err());
        assert!(Expr::parse("(x + 1").is_err());
        assert!(Expr::parse("1 2").is_err());
    }
}
