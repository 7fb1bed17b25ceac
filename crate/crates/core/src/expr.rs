//! Initial-condition expressions over `x` and `y`.
//!
//! Grammar: `+ - * /`, unary minus, parentheses, numeric literals, the
//! variables `x` and `y`, and the functions `tanh sqrt abs min max` plus
//! `indicator(x0, x1, y0, y1, inside, outside)`.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.pos + 1, self.msg)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Tanh,
    Sqrt,
    Abs,
    Min,
    Max,
    Indicator,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "tanh" => (Func::Tanh, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "indicator" => (Func::Indicator, 6),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Y,
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Tolerance on `indicator` box edges, so points on the edge count as inside.
const EDGE_TOL: f64 = 1e-12;

impl Node {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::X => x,
            Node::Y => y,
            Node::Neg(a) => -a.eval(x, y),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, y), b.eval(x, y));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    _ => a / b,
                }
            }
            Node::Call(f, args) => {
                let v: Vec<f64> = args.iter().map(|a| a.eval(x, y)).collect();
                match f {
                    Func::Tanh => v[0].tanh(),
                    Func::Sqrt => v[0].sqrt(),
                    Func::Abs => v[0].abs(),
                    Func::Min => v[0].min(v[1]),
                    Func::Max => v[0].max(v[1]),
                    Func::Indicator => {
                        let inside = x >= v[0] - EDGE_TOL
                            && x <= v[1] + EDGE_TOL
                            && y >= v[2] - EDGE_TOL
                            && y <= v[3] + EDGE_TOL;
                        if inside {
                            v[4]
                        } else {
                            v[5]
                        }
                    }
                }
            }
        }
    }

    fn uses_position(&self) -> bool {
        match self {
            Node::Num(_) => false,
            Node::X | Node::Y => true,
            Node::Neg(a) => a.uses_position(),
            Node::Bin(_, a, b) => a.uses_position() || b.uses_position(),
            Node::Call(Func::Indicator, _) => true,
            Node::Call(_, args) => args.iter().any(Node::uses_position),
        }
    }
}

/// A parsed expression that remembers its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            s: text.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self {
            source: text.trim().to_string(),
            root,
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.root.eval(x, y)
    }

    /// True if the value depends on `x` or `y`.
    pub fn is_spatial(&self) -> bool {
        self.root.uses_position()
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ExprError {
        ExprError {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len()
                    && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                match name {
                    "x" => return Ok(Node::X),
                    "y" => return Ok(Node::Y),
                    _ => {}
                }
                let (func, arity) = Func::lookup(name).ok_or_else(|| ExprError {
                    pos: start,
                    msg: format!("unknown identifier '{name}'"),
                })?;
                self.expect(b'(')?;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                self.expect(b')')?;
                if args.len() != arity {
                    return Err(ExprError {
                        pos: start,
                        msg: format!("{name} takes {arity} arguments, got {}", args.len()),
                    });
                }
                Ok(Node::Call(func, args))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let s = self.s;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            if j < s.len() && s[j].is_ascii_digit() {
                while j < s.len() && s[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos = i;
        let text = std::str::from_utf8(&s[start..i]).unwrap();
        text.parse::<f64>().map(Node::Num).map_err(|_| ExprError {
            pos: start,
            msg: format!("bad number '{text}'"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: f64, y: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x, y)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(ev("-x - -y", 2.0, 5.0), 3.0);
        assert_eq!(ev("8 / 2 / 2", 0.0, 0.0), 2.0);
        assert_eq!(ev("1.5e-1 * 2E1", 0.0, 0.0), 3.0);
    }

    #[test]
    fn functions() {
        assert_eq!(ev("sqrt(x*x + y*y)", 3.0, 4.0), 5.0);
        assert_eq!(ev("max(abs(x), min(y, 2))", -1.0, 7.0), 2.0);
        assert_eq!(ev("tanh(0)", 0.0, 0.0), 0.0);
        let sq = "indicator(-0.2, 0.2, -0.2, 0.2, 1, 0.01)";
        assert_eq!(ev(sq, 0.0, 0.1), 1.0);
        assert_eq!(ev(sq, -0.2, 0.2), 1.0);
        assert_eq!(ev(sq, 0.3, 0.0), 0.01);
    }

    #[test]
    fn spatial_dependence() {
        assert!(!Expr::parse("2 * tanh(1)").unwrap().is_spatial());
        assert!(Expr::parse("1 + y").unwrap().is_spatial());
        assert!(Expr::parse("indicator(0,1,0,1,1,1)").unwrap().is_spatial());
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("exp(1)").is_err());
        assert!(Expr::parse("min(1)").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("z").is_err());
    }
}
