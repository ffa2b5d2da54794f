//! A small string- and comment-aware SQL lexer, plus the few structural
//! queries the evaluation statistics need (keyword presence, top-level
//! `ORDER BY`, referenced tables, comparison literals).

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("unterminated {0} starting at byte {1}")]
    Unterminated(&'static str, usize),
    #[error("cannot parse SQL: {0}")]
    Unparseable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Bare word: keyword or unquoted identifier.
    Word,
    /// `` `x` `` or `[x]`.
    QuotedIdent,
    /// `'x'`.
    String,
    /// `"x"`: an identifier in standard SQL, but a string literal in much
    /// benchmark SQL.
    DoubleQuoted,
    Number,
    Operator,
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Source text; for quoted tokens the unescaped contents.
    pub text: String,
}

impl Token {
    pub fn is_word(&self, word: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(word)
    }

    fn is_identifier(&self) -> bool {
        matches!(
            self.kind,
            TokenKind::Word | TokenKind::QuotedIdent | TokenKind::DoubleQuoted
        )
    }
}

pub fn lex(sql: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let at = |i: usize| chars.get(i).map(|&(_, c)| c);
    while let Some(c) = at(i) {
        let start = chars[i].0;
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && at(i + 1) == Some('-') {
            while at(i).is_some_and(|c| c != '\n') {
                i += 1;
            }
        } else if c == '/' && at(i + 1) == Some('*') {
            i += 2;
            loop {
                match at(i) {
                    None => return Err(LexError::Unterminated("comment", start)),
                    Some('*') if at(i + 1) == Some('/') => {
                        i += 2;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
        } else if matches!(c, '\'' | '"' | '`' | '[') {
            let (close, kind, what) = match c {
                '\'' => ('\'', TokenKind::String, "string"),
                '"' => ('"', TokenKind::DoubleQuoted, "quoted identifier"),
                '`' => ('`', TokenKind::QuotedIdent, "quoted identifier"),
                _ => (']', TokenKind::QuotedIdent, "bracketed identifier"),
            };
            i += 1;
            let mut text = String::new();
            loop {
                match at(i) {
                    None => return Err(LexError::Unterminated(what, start)),
                    Some(ch) if ch == close => {
                        if close != ']' && at(i + 1) == Some(close) {
                            text.push(close);
                            i += 2;
                        } else {
                            i += 1;
                            break;
                        }
                    }
                    Some(ch) => {
                        text.push(ch);
                        i += 1;
                    }
                }
            }
            tokens.push(Token { kind, text });
        } else if c.is_ascii_digit() || (c == '.' && at(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let begin = i;
            while at(i).is_some_and(|d| d.is_ascii_alphanumeric() || d == '.') {
                // Exponent sign, as in 1e-5.
                if matches!(at(i), Some('e' | 'E')) && matches!(at(i + 1), Some('+' | '-')) {
                    i += 1;
                }
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Number,
                text: chars[begin..i].iter().map(|&(_, c)| c).collect(),
            });
        } else if c.is_alphanumeric() || c == '_' || c == '$' {
            let begin = i;
            while at(i).is_some_and(|d| d.is_alphanumeric() || d == '_' || d == '$') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Word,
                text: chars[begin..i].iter().map(|&(_, c)| c).collect(),
            });
        } else {
            let (kind, len) = match c {
                '(' => (TokenKind::LParen, 1),
                ')' => (TokenKind::RParen, 1),
                ',' => (TokenKind::Comma, 1),
                '.' => (TokenKind::Dot, 1),
                ';' => (TokenKind::Semicolon, 1),
                '<' if matches!(at(i + 1), Some('=' | '>')) => (TokenKind::Operator, 2),
                '>' if at(i + 1) == Some('=') => (TokenKind::Operator, 2),
                '!' | '=' if at(i + 1) == Some('=') => (TokenKind::Operator, 2),
                '|' if at(i + 1) == Some('|') => (TokenKind::Operator, 2),
                '=' | '<' | '>' | '+' | '-' | '*' | '/' | '%' | '&' | '|' | '~' => {
                    (TokenKind::Operator, 1)
                }
                _ => (TokenKind::Other, 1),
            };
            tokens.push(Token {
                kind,
                text: chars[i..i + len].iter().map(|&(_, c)| c).collect(),
            });
            i += len;
        }
    }
    Ok(tokens)
}

/// Whether `keyword` occurs as a bare word outside literals and comments.
pub fn contains_keyword(sql: &str, keyword: &str) -> Result<bool, LexError> {
    Ok(lex(sql)?.iter().any(|t| t.is_word(keyword)))
}

/// Whether the outermost statement carries an `ORDER BY` (one not nested in
/// parentheses, so window and subquery orderings do not count).
pub fn has_top_level_order_by(sql: &str) -> Result<bool, LexError> {
    let tokens = lex(sql)?;
    let mut depth = 0i32;
    for (i, t) in tokens.iter().enumerate() {
        match t.kind {
            TokenKind::LParen => depth += 1,
            TokenKind::RParen => depth -= 1,
            _ if depth == 0 && t.is_word("ORDER") && tokens.get(i + 1).is_some_and(|n| n.is_word("BY")) => {
                return Ok(true);
            }
            _ => {}
        }
    }
    Ok(false)
}

const CLAUSE_WORDS: &[&str] = &[
    "WHERE", "GROUP", "ORDER", "HAVING", "LIMIT", "UNION", "INTERSECT", "EXCEPT", "JOIN", "ON",
    "USING", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL", "OUTER", "WINDOW", "AS",
    "SELECT", "FROM", "OFFSET",
];

fn is_clause_word(t: &Token) -> bool {
    t.kind == TokenKind::Word && CLAUSE_WORDS.iter().any(|w| t.text.eq_ignore_ascii_case(w))
}

/// Distinct (lowercased) table names referenced after `FROM` or `JOIN`,
/// including inside subqueries. Aliases and common-table-expression names
/// are not counted.
pub fn referenced_tables(sql: &str) -> Result<BTreeSet<String>, LexError> {
    let tokens = lex(sql)?;
    let ctes = cte_names(&tokens);
    let mut tables = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if !(t.is_word("FROM") || t.is_word("JOIN")) {
            i += 1;
            continue;
        }
        let in_from_list = t.is_word("FROM");
        i += 1;
        loop {
            match tokens.get(i) {
                Some(n) if n.kind == TokenKind::LParen => break,
                Some(n) if n.is_identifier() && !is_clause_word(n) => {
                    // schema.table: keep the last part
                    let mut name = n.text.clone();
                    while tokens.get(i + 1).is_some_and(|d| d.kind == TokenKind::Dot)
                        && tokens.get(i + 2).is_some_and(Token::is_identifier)
                    {
                        i += 2;
                        name = tokens[i].text.clone();
                    }
                    let lower = name.to_lowercase();
                    if !ctes.contains(&lower) {
                        tables.insert(lower);
                    }
                    i += 1;
                }
                other => {
                    return Err(LexError::Unparseable(format!(
                        "expected a table after {}, found {}",
                        t.text.to_uppercase(),
                        other.map_or("end of input".to_string(), |o| format!("{:?}", o.text))
                    )))
                }
            }
            // optional alias
            if tokens.get(i).is_some_and(|n| n.is_word("AS")) {
                i += 2;
            } else if tokens
                .get(i)
                .is_some_and(|n| n.is_identifier() && !is_clause_word(n))
            {
                i += 1;
            }
            if in_from_list && tokens.get(i).is_some_and(|n| n.kind == TokenKind::Comma) {
                i += 1;
                continue;
            }
            break;
        }
    }
    Ok(tables)
}

fn cte_names(tokens: &[Token]) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    let Some(start) = tokens.iter().position(|t| t.is_word("WITH")) else {
        return names;
    };
    let mut i = start + 1;
    if tokens.get(i).is_some_and(|t| t.is_word("RECURSIVE")) {
        i += 1;
    }
    while let Some(name) = tokens.get(i).filter(|t| t.is_identifier()) {
        names.insert(name.text.to_lowercase());
        i += 1;
        // optional column list, then AS ( ... )
        while i < tokens.len() && !tokens[i].is_word("AS") {
            i += 1;
        }
        i += 1;
        if tokens.get(i).map(|t| t.kind) != Some(TokenKind::LParen) {
            break;
        }
        let mut depth = 0;
        while i < tokens.len() {
            match tokens[i].kind {
                TokenKind::LParen => depth += 1,
                TokenKind::RParen => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                _ => {}
            }
            i += 1;
        }
        i += 1;
        if tokens.get(i).map(|t| t.kind) == Some(TokenKind::Comma) {
            i += 1;
        } else {
            break;
        }
    }
    names
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Text(String),
    Number(String),
}

fn is_comparison(t: &Token) -> bool {
    (t.kind == TokenKind::Operator
        && matches!(t.text.as_str(), "=" | "==" | "!=" | "<>" | "<" | ">" | "<=" | ">="))
        || t.is_word("LIKE")
        || t.is_word("GLOB")
        || t.is_word("BETWEEN")
}

/// Literal values compared against expressions: operands of comparison
/// operators, `LIKE`/`GLOB` patterns, `BETWEEN` bounds and `IN (...)` lists.
/// Double-quoted tokens in these positions are taken as string values.
pub fn comparison_literals(sql: &str) -> Result<Vec<Literal>, LexError> {
    let tokens = lex(sql)?;
    let mut out = Vec::new();
    let mut in_list_depth: Option<i32> = None;
    let mut depth = 0i32;
    let mut between_pending = false;
    for (i, t) in tokens.iter().enumerate() {
        match t.kind {
            TokenKind::LParen => {
                depth += 1;
                if in_list_depth.is_none()
                    && i > 0
                    && tokens[i - 1].is_word("IN")
                    && !tokens.get(i + 1).is_some_and(|n| n.is_word("SELECT"))
                {
                    in_list_depth = Some(depth);
                }
                continue;
            }
            TokenKind::RParen => {
                if in_list_depth == Some(depth) {
                    in_list_depth = None;
                }
                depth -= 1;
                continue;
            }
            _ => {}
        }
        let literal = match t.kind {
            TokenKind::String | TokenKind::DoubleQuoted => Literal::Text(t.text.clone()),
            TokenKind::Number => Literal::Number(t.text.clone()),
            _ => {
                if t.is_word("BETWEEN") {
                    between_pending = true;
                } else if !t.is_word("AND") && !t.is_word("NOT") {
                    // AND continues a BETWEEN; anything else ends it.
                    if t.kind != TokenKind::Operator || t.text != "-" {
                        between_pending = between_pending && t.is_word("AND");
                    }
                }
                continue;
            }
        };
        let prev = i.checked_sub(1).map(|p| &tokens[p]);
        // A leading minus sign belongs to the literal.
        let (prev, literal) = match (prev, literal) {
            (Some(p), Literal::Number(n)) if p.kind == TokenKind::Operator && p.text == "-" => {
                (i.checked_sub(2).map(|q| &tokens[q]), Literal::Number(format!("-{n}")))
            }
            (p, l) => (p, l),
        };
        let next = tokens.get(i + 1);
        let compared = prev.is_some_and(is_comparison)
            || next.is_some_and(|n| is_comparison(n) && !n.is_word("BETWEEN"))
            || (between_pending && prev.is_some_and(|p| p.is_word("AND")))
            || in_list_depth.is_some_and(|d| d == depth);
        if compared {
            out.push(literal);
        }
    }
    Ok(out)
}
