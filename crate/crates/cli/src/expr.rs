//! Closed-form expressions for inline coefficients.
//!
//! Grammar (usual precedence, `^` right-associative and above unary minus):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Functions: `exp sin cos abs sqrt ln` of one argument, `max min` of two.
//! `pi` is a constant. `×` and `÷` are accepted for `*` and `/`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at column {column} of '{source_text}'")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Abs,
    Sqrt,
    Ln,
    Max,
    Min,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "exp" => (Func::Exp, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "abs" => (Func::Abs, 1),
            "sqrt" => (Func::Sqrt, 1),
            "ln" => (Func::Ln, 1),
            "max" => (Func::Max, 2),
            "min" => (Func::Min, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Parses `src` with variables bound to slots by their position in
    /// `vars`.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr, ExprError> {
        let mut p = Parser {
            chars: src.chars().collect(),
            pos: 0,
            vars,
            src,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error("unexpected input"));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => env[*i],
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, b) => a.eval(env).powf(b.eval(env)),
            Expr::Call(f, args) => {
                let x = args[0].eval(env);
                match f {
                    Func::Exp => x.exp(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Abs => x.abs(),
                    Func::Sqrt => x.sqrt(),
                    Func::Ln => x.ln(),
                    Func::Max => x.max(args[1].eval(env)),
                    Func::Min => x.min(args[1].eval(env)),
                }
            }
        }
    }

    /// True when any slot in `slots` appears.
    pub fn uses_any(&self, slots: std::ops::Range<usize>) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => slots.contains(i),
            Expr::Neg(a) => a.uses_any(slots),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses_any(slots.clone()) || b.uses_any(slots)
            }
            Expr::Call(_, args) => args.iter().any(|a| a.uses_any(slots.clone())),
        }
    }

    /// False when the expression contains a kink (`abs`, `max`, `min`) or a
    /// square root.
    pub fn is_smooth(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => true,
            Expr::Neg(a) => a.is_smooth(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_smooth() && b.is_smooth()
            }
            Expr::Call(f, args) => {
                !matches!(f, Func::Abs | Func::Max | Func::Min | Func::Sqrt) && args.iter().all(Expr::is_smooth)
            }
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        if self.uses_any(0..usize::MAX) {
            None
        } else {
            Some(self.eval(&[]))
        }
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    vars: &'a [&'a str],
    src: &'a str,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError {
            column: self.pos + 1,
            message: message.to_string(),
            source_text: self.src.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') || self.eat('×') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') || self.eat('÷') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => self.name(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < self.chars.len() && matches!(self.chars[self.pos], 'e' | 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.chars.len() && matches!(self.chars[self.pos], '+' | '-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map(Expr::Num).map_err(|_| {
            self.pos = start;
            self.error(&format!("bad number '{text}'"))
        })
    }

    fn name(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_') {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        if self.peek() == Some('(') {
            let Some((f, arity)) = Func::lookup(&name) else {
                self.pos = start;
                return Err(self.error(&format!("unknown function '{name}'")));
            };
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.eat(',') {
                args.push(self.expr()?);
            }
            if !self.eat(')') {
                return Err(self.error("expected ')'"));
            }
            if args.len() != arity {
                self.pos = start;
                return Err(self.error(&format!("{name} takes {arity} argument(s), got {}", args.len())));
            }
            return Ok(Expr::Call(f, args));
        }
        if name == "pi" {
            return Ok(Expr::Num(std::f64::consts::PI));
        }
        match self.vars.iter().position(|v| *v == name) {
            Some(i) => Ok(Expr::Var(i)),
            None => {
                self.pos = start;
                Err(self.error(&format!("unknown variable '{name}' (known: {})", self.vars.join(", "))))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, env: &[f64]) -> f64 {
        Expr::parse(src, &["t", "x"]).unwrap().eval(env)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[0.0, 0.0]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[0.0, 0.0]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[0.0, 0.0]), -4.0);
        assert_eq!(ev("2 ^ -1", &[0.0, 0.0]), 0.5);
        assert_eq!(ev("8 / 4 / 2", &[0.0, 0.0]), 1.0);
        assert_eq!(ev("10 - 4 - 3", &[0.0, 0.0]), 3.0);
        assert_eq!(ev("3 × 4 ÷ 6", &[0.0, 0.0]), 2.0);
    }

    #[test]
    fn variables_functions_numbers() {
        assert_eq!(ev("x^2 + (1 - t)", &[0.25, 3.0]), 9.75);
        assert_eq!(ev("max(x - 1, 0)", &[0.0, 0.5]), 0.0);
        assert_eq!(ev("min(x, 2)", &[0.0, 5.0]), 2.0);
        assert!((ev("exp(ln(2)) + sqrt(16) + abs(-1)", &[0.0, 0.0]) - 7.0).abs() < 1e-15);
        assert!((ev("sin(pi / 2) + cos(0)", &[0.0, 0.0]) - 2.0).abs() < 1e-15);
        assert_eq!(ev("1.5e-1 + 2E1", &[0.0, 0.0]), 20.15);
    }

    #[test]
    fn errors_carry_columns() {
        let e = Expr::parse("x + y", &["x"]).unwrap_err();
        assert_eq!(e.column, 5);
        assert!(e.message.contains("unknown variable 'y'"));
        assert_eq!(Expr::parse("foo(x)", &["x"]).unwrap_err().column, 1);
        assert!(Expr::parse("(x", &["x"]).is_err());
        assert!(Expr::parse("max(x)", &["x"]).is_err());
        assert!(Expr::parse("x +", &["x"]).is_err());
        assert!(Expr::parse("x x", &["x"]).is_err());
    }

    #[test]
    fn slot_usage() {
        let e = Expr::parse("t * x", &["t", "x", "u"]).unwrap();
        assert!(e.uses_any(1..2));
        assert!(!e.uses_any(2..3));
        assert_eq!(Expr::parse("2 * 3", &["t"]).unwrap().as_constant(), Some(6.0));
        assert_eq!(e.as_constant(), None);
        assert!(e.is_smooth());
        assert!(!Expr::parse("abs(t)", &["t"]).unwrap().is_smooth());
    }
}
