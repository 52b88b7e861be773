use std::fmt;

use thiserror::Error;

use super::{validate, GrammarError, GroupSpec, Level, Occupancy, Shape, MAX_LEVELS};

/// Syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LBracket,
    RBracket,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    DotDot,
    /// Numeric literal; `real` is set when it has a fraction or exponent.
    Num {
        value: f64,
        real: bool,
    },
    Word(String),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBrace => f.write_str("'{'"),
            Tok::RBrace => f.write_str("'}'"),
            Tok::Comma => f.write_str("','"),
            Tok::Semi => f.write_str("';'"),
            Tok::DotDot => f.write_str("'..'"),
            Tok::Num { value, .. } => write!(f, "number {value}"),
            Tok::Word(w) => write!(f, "'{w}'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned {
                tok,
                line: start_line,
                column: start_col,
            });
            i += 1;
            col += 1;
            continue;
        }
        if c == '.' && chars.get(i + 1) == Some(&'.') {
            out.push(Spanned {
                tok: Tok::DotDot,
                line: start_line,
                column: start_col,
            });
            i += 2;
            col += 2;
            continue;
        }
        let is_sign = matches!(c, '-' | '+' | '\u{2212}');
        if c.is_ascii_digit() || (is_sign && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut lit = String::new();
            let mut real = false;
            if is_sign {
                if c != '+' {
                    lit.push('-');
                }
                i += 1;
                col += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                lit.push(chars[i]);
                i += 1;
                col += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                real = true;
                lit.push('.');
                i += 1;
                col += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    lit.push(chars[i]);
                    i += 1;
                    col += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    real = true;
                    lit.push('e');
                    for ch in &chars[i + 1..j] {
                        lit.push(*ch);
                    }
                    col += j - i;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        lit.push(chars[i]);
                        i += 1;
                        col += 1;
                    }
                }
            }
            let value: f64 = lit
                .parse()
                .map_err(|_| err(start_line, start_col, format!("malformed number '{lit}'")))?;
            out.push(Spanned {
                tok: Tok::Num { value, real },
                line: start_line,
                column: start_col,
            });
            continue;
        }
        if c.is_alphabetic() || c == '∞' {
            let mut word = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '∞') {
                word.push(chars[i]);
                i += 1;
                col += 1;
            }
            out.push(Spanned {
                tok: Tok::Word(word),
                line: start_line,
                column: start_col,
            });
            continue;
        }
        return Err(err(
            start_line,
            start_col,
            format!("unexpected character '{c}'"),
        ));
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

enum Item {
    Num { value: f64, real: bool },
    Range(i64, i64),
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    prev: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.column)
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        self.prev = self.pos;
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn back(&mut self) {
        self.pos = self.prev;
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(err(line, column, message))
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            self.fail(format!("expected {want}, found {}", self.peek()))
        }
    }

    fn shape(&mut self) -> Result<Shape, ParseError> {
        self.expect(Tok::LBracket)?;
        let mut levels = Vec::new();
        if *self.peek() != Tok::RBracket {
            loop {
                levels.push(self.level()?);
                match self.peek() {
                    Tok::Semi | Tok::Comma => {
                        self.next();
                    }
                    _ => break,
                }
            }
        }
        self.expect(Tok::RBracket)?;
        if *self.peek() != Tok::Eof {
            return self.fail(format!("unexpected {} after shape", self.peek()));
        }
        Ok(Shape::new(levels))
    }

    fn level(&mut self) -> Result<Level, ParseError> {
        self.expect(Tok::LParen)?;
        let group = self.group()?;
        self.expect(Tok::Comma)?;
        let occ = self.occupancy()?;
        self.expect(Tok::RParen)?;
        Ok(Level::new(group, occ))
    }

    fn group(&mut self) -> Result<GroupSpec, ParseError> {
        let word = match self.next() {
            Tok::Word(w) => w,
            other => {
                self.back();
                return self.fail(format!("expected a group name, found {other}"));
            }
        };
        match word.as_str() {
            "Trans" => match self.next() {
                Tok::Word(a) if a == "X" => Ok(GroupSpec::TransX),
                Tok::Word(a) if a == "Y" => Ok(GroupSpec::TransY),
                other => {
                    self.back();
                    self.fail(format!("expected axis X or Y, found {other}"))
                }
            },
            "Rot" => match self.next() {
                Tok::Num { value, real: false } => {
                    if value == 2.0 {
                        if let Tok::Word(w) = self.peek() {
                            if w == "π" || w == "pi" {
                                self.next();
                                return Ok(GroupSpec::RotFull);
                            }
                        }
                    }
                    if !(0.0..=f64::from(u32::MAX)).contains(&value) {
                        self.back();
                        return self.fail(format!("rotation order {value} out of range"));
                    }
                    Ok(GroupSpec::Rot(value as u32))
                }
                Tok::Word(w) if w == "inf" || w == "∞" => Ok(GroupSpec::RotFull),
                other => {
                    self.back();
                    self.fail(format!("expected rotation order, found {other}"))
                }
            },
            "Mirror" => Ok(GroupSpec::Mirror),
            "Scale" => match self.next() {
                Tok::Num { value, .. } => Ok(GroupSpec::Scale(value)),
                other => {
                    self.back();
                    self.fail(format!("expected scale factor, found {other}"))
                }
            },
            _ => {
                self.back();
                self.fail(format!("unknown group '{word}'"))
            }
        }
    }

    fn occupancy(&mut self) -> Result<Occupancy, ParseError> {
        match self.next() {
            Tok::Word(w) if w == "full" => Ok(Occupancy::Full),
            Tok::LBrace => {
                let items = self.items(Tok::RBrace)?;
                Ok(Occupancy::Discrete(expand(items)))
            }
            Tok::LBracket => {
                let items = self.items(Tok::RBracket)?;
                if let [Item::Num { value: a, real: ra }, Item::Num { value: b, real: rb }] =
                    items.as_slice()
                {
                    if a == b {
                        return Ok(Occupancy::single(*a));
                    }
                    if *ra && *rb {
                        return Ok(Occupancy::Interval { lo: *a, hi: *b });
                    }
                }
                Ok(Occupancy::Discrete(expand(items)))
            }
            other => {
                self.back();
                self.fail(format!("expected occupancy, found {other}"))
            }
        }
    }

    fn items(&mut self, close: Tok) -> Result<Vec<Item>, ParseError> {
        let mut items = Vec::new();
        if *self.peek() == close {
            self.next();
            return Ok(items);
        }
        loop {
            let (line, column) = self.here();
            let (value, real) = match self.next() {
                Tok::Num { value, real } => (value, real),
                other => {
                    self.back();
                    return self.fail(format!("expected a number, found {other}"));
                }
            };
            if *self.peek() == Tok::DotDot {
                self.next();
                let hi = match self.next() {
                    Tok::Num { value, real: false } => value,
                    other => {
                        self.back();
                        return self.fail(format!("expected integer range end, found {other}"));
                    }
                };
                if real {
                    return Err(err(line, column, "range start must be an integer"));
                }
                if hi < value {
                    return Err(err(line, column, format!("empty range {value}..{hi}")));
                }
                if hi - value > 1.0e6 {
                    return Err(err(line, column, "range too long"));
                }
                items.push(Item::Range(value as i64, hi as i64));
            } else {
                items.push(Item::Num { value, real });
            }
            if *self.peek() == Tok::Comma {
                self.next();
            } else {
                break;
            }
        }
        self.expect(close)?;
        Ok(items)
    }
}

fn expand(items: Vec<Item>) -> Vec<f64> {
    let mut out = Vec::new();
    for it in items {
        match it {
            Item::Num { value, .. } => out.push(value),
            Item::Range(a, b) => out.extend((a..=b).map(|v| v as f64)),
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Parses the text form without checking shape invariants.
pub fn parse_unvalidated(text: &str) -> Result<Shape, ParseError> {
    let toks = lex(text)?;
    Parser {
        toks,
        pos: 0,
        prev: 0,
    }
    .shape()
}

/// Parses and validates a shape.
///
/// A full listing of a finite group (`[0..3]` on `Rot 4`) is read as full
/// occupancy.
pub fn parse(text: &str) -> Result<Shape, GrammarError> {
    let mut shape = parse_unvalidated(text)?;
    for lvl in &mut shape.levels {
        if let (Some(n), Occupancy::Discrete(v)) = (lvl.group.order(), &lvl.occ) {
            let whole = v.len() == n as usize && v.iter().enumerate().all(|(i, x)| *x == i as f64);
            if whole {
                lvl.occ = Occupancy::Full;
            }
        }
    }
    validate(&shape, MAX_LEVELS)?;
    Ok(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_of_squares() {
        let s = parse(
            "[(Trans Y,[0.5,0.5]); (Trans X,[-0.5,0.5]); (Rot 4,[0..3]); (Trans X,[2]); (Rot 4,[0..3])]",
        )
        .unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.levels[0].occ, Occupancy::single(0.5));
        assert_eq!(s.levels[1].occ, Occupancy::Interval { lo: -0.5, hi: 0.5 });
        assert_eq!(s.levels[2].occ, Occupancy::Full);
        assert_eq!(s.levels[3].occ, Occupancy::single(2.0));
    }

    #[test]
    fn comments_and_alternative_spellings() {
        let text = "# a circle\n[ (Trans X, [1]) ,\n  (Rot 2pi, full) ]  # trailing\n";
        let s = parse(text).unwrap();
        assert_eq!(s.levels[1].group, GroupSpec::RotFull);
        let s2 = parse("[(Trans X,[1]); (Rot 2π,full)]").unwrap();
        assert_eq!(s, s2);
        let s3 = parse("[(Trans X,{−1.5,2.25})]").unwrap();
        assert_eq!(s3.levels[0].occ, Occupancy::Discrete(vec![-1.5, 2.25]));
    }

    #[test]
    fn integer_pair_is_discrete() {
        let s = parse("[(Trans X,[-1,1])]").unwrap();
        assert_eq!(s.levels[0].occ, Occupancy::Discrete(vec![-1.0, 1.0]));
        let s = parse("[(Trans X,[3,1,2])]").unwrap();
        assert_eq!(s.levels[0].occ, Occupancy::Discrete(vec![1.0, 2.0, 3.0]));
    }

    #[test]
    fn error_positions() {
        let e = parse_unvalidated("[(Trans Z,[1])]").unwrap_err();
        assert_eq!((e.line, e.column), (1, 9));
        let e = parse_unvalidated("[\n  (Rot 4,[0..3]) x]").unwrap_err();
        assert_eq!((e.line, e.column), (2, 18));
        let e = parse_unvalidated("[(Mirror,[0])").unwrap_err();
        assert!(e.message.contains("end of input"));
        assert!(parse_unvalidated("[(Mirror,[0])] extra").is_err());
        assert!(parse_unvalidated("[(Mirror,[0 @])]").is_err());
    }

    #[test]
    fn syntax_and_validation_errors_differ() {
        assert!(matches!(
            parse("[(Rot 4,[0..5]"),
            Err(GrammarError::Syntax(_))
        ));
        assert!(matches!(
            parse("[(Rot 4,[0..5])]"),
            Err(GrammarError::Invalid(_))
        ));
    }
}
