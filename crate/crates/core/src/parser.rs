//! Parser for the supported structural Verilog subset.
//!
//! Grammar (one module per file):
//!
//! ```text
//! module    ::= "module" IDENT "(" [ IDENT { "," IDENT } ] ")" ";" item* "endmodule"
//! item      ::= decl | assign | instance
//! decl      ::= ("input" | "output" | "wire") IDENT { "," IDENT } ";"
//! assign    ::= "assign" IDENT "=" IDENT ";"
//! instance  ::= IDENT IDENT "(" conn { "," conn } ")" ";"
//! conn      ::= "." IDENT "(" IDENT ")"
//! ```
//!
//! `assign` statements become `$assign` buffer pseudo-instances.
//! Behavioral constructs, vectors, parameters, and hierarchy are rejected
//! with `UnsupportedConstruct`.

use crate::cell_lib::{CellLibrary, ASSIGN_CELL};
use crate::netlist::{Instance, Netlist, NetlistError};

const BEHAVIORAL_KEYWORDS: &[&str] = &[
    "always",
    "initial",
    "reg",
    "if",
    "else",
    "case",
    "casex",
    "casez",
    "begin",
    "end",
    "for",
    "while",
    "repeat",
    "forever",
    "parameter",
    "localparam",
    "specify",
    "integer",
    "real",
    "time",
    "genvar",
    "generate",
    "function",
    "task",
    "defparam",
    "tri",
    "supply0",
    "supply1",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Semi,
    Comma,
    Dot,
    Equals,
    /// `@` or `#`; only ever valid inside constructs we reject anyway.
    Marker(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, message: impl Into<String>) -> NetlistError {
        NetlistError::Syntax {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn tokenize(mut self) -> Result<Vec<Token>, NetlistError> {
        let mut tokens = Vec::new();
        loop {
            // skip whitespace and comments
            loop {
                match self.chars.peek() {
                    Some(c) if c.is_whitespace() => {
                        self.bump();
                    }
                    Some('/') => {
                        let (line, col) = (self.line, self.col);
                        self.bump();
                        match self.chars.peek() {
                            Some('/') => {
                                while let Some(c) = self.bump() {
                                    if c == '\n' {
                                        break;
                                    }
                                }
                            }
                            Some('*') => {
                                self.bump();
                                let mut closed = false;
                                while let Some(c) = self.bump() {
                                    if c == '*' && self.chars.peek() == Some(&'/') {
                                        self.bump();
                                        closed = true;
                                        break;
                                    }
                                }
                                if !closed {
                                    return Err(NetlistError::Syntax {
                                        line,
                                        col,
                                        message: "unterminated block comment".into(),
                                    });
                                }
                            }
                            _ => {
                                return Err(NetlistError::Syntax {
                                    line,
                                    col,
                                    message: "stray `/`".into(),
                                });
                            }
                        }
                    }
                    _ => break,
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(&c) = self.chars.peek() else {
                tokens.push(Token {
                    tok: Tok::Eof,
                    line,
                    col,
                });
                return Ok(tokens);
            };
            let tok = match c {
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '.' => {
                    self.bump();
                    Tok::Dot
                }
                '=' => {
                    self.bump();
                    Tok::Equals
                }
                '@' | '#' => {
                    self.bump();
                    Tok::Marker(c)
                }
                '[' => {
                    return Err(NetlistError::UnsupportedConstruct {
                        line,
                        construct: "vector/bit-select syntax".into(),
                    });
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut ident = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
                            ident.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(ident)
                }
                c if c.is_ascii_digit() || c == '\'' => {
                    return Err(NetlistError::UnsupportedConstruct {
                        line,
                        construct: "numeric literal".into(),
                    });
                }
                other => return Err(self.error(format!("unexpected character `{other}`"))),
            };
            tokens.push(Token { tok, line, col });
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax_error(&self, message: impl Into<String>) -> NetlistError {
        let t = self.peek();
        NetlistError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, NetlistError> {
        let t = self.advance();
        if t.tok == want {
            Ok(t)
        } else {
            Err(NetlistError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected {what}, found {:?}", t.tok),
            })
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, u32), NetlistError> {
        let t = self.advance();
        match t.tok {
            Tok::Ident(name) => Ok((name, t.line)),
            other => Err(NetlistError::Syntax {
                line: t.line,
                col: t.col,
                message: format!("expected {what}, found {other:?}"),
            }),
        }
    }

    /// Identifier list terminated by `;`.
    fn ident_list(&mut self) -> Result<Vec<String>, NetlistError> {
        let mut names = Vec::new();
        loop {
            let (name, line) = self.expect_ident("identifier")?;
            self.reject_keyword(&name, line)?;
            names.push(name);
            match self.advance() {
                Token {
                    tok: Tok::Comma, ..
                } => continue,
                Token { tok: Tok::Semi, .. } => return Ok(names),
                t => {
                    return Err(NetlistError::Syntax {
                        line: t.line,
                        col: t.col,
                        message: "expected `,` or `;` in declaration".into(),
                    })
                }
            }
        }
    }

    fn reject_keyword(&self, name: &str, line: u32) -> Result<(), NetlistError> {
        if BEHAVIORAL_KEYWORDS.contains(&name) {
            return Err(NetlistError::UnsupportedConstruct {
                line,
                construct: format!("behavioral construct `{name}`"),
            });
        }
        Ok(())
    }

    fn parse_module(&mut self) -> Result<Netlist, NetlistError> {
        let (kw, line) = self.expect_ident("`module`")?;
        if kw != "module" {
            self.reject_keyword(&kw, line)?;
            return Err(self.syntax_error("expected `module`"));
        }
        let (module_name, _) = self.expect_ident("module name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut header_ports = Vec::new();
        if self.peek().tok != Tok::RParen {
            loop {
                let (name, _) = self.expect_ident("port name")?;
                header_ports.push(name);
                match self.advance() {
                    Token {
                        tok: Tok::Comma, ..
                    } => continue,
                    Token {
                        tok: Tok::RParen, ..
                    } => break,
                    t => {
                        return Err(NetlistError::Syntax {
                            line: t.line,
                            col: t.col,
                            message: "expected `,` or `)` in port list".into(),
                        })
                    }
                }
            }
        } else {
            self.advance();
        }
        self.expect(Tok::Semi, "`;` after port list")?;

        let mut primary_inputs: Vec<String> = Vec::new();
        let mut primary_outputs: Vec<String> = Vec::new();
        let mut wires: Vec<String> = Vec::new();
        let mut instances: Vec<Instance> = Vec::new();

        loop {
            let (word, line) = self.expect_ident("declaration, instance, or `endmodule`")?;
            match word.as_str() {
                "endmodule" => break,
                "input" => primary_inputs.extend(self.ident_list()?),
                "output" => primary_outputs.extend(self.ident_list()?),
                "wire" => wires.extend(self.ident_list()?),
                "assign" => {
                    let (lhs, _) = self.expect_ident("assign target")?;
                    self.expect(Tok::Equals, "`=`")?;
                    let (rhs, _) = self.expect_ident("assign source")?;
                    self.expect(Tok::Semi, "`;`")?;
                    let name = format!("assign_{}", instances.len());
                    instances.push(Instance {
                        cell_type: ASSIGN_CELL.to_string(),
                        name,
                        connections: vec![("A".into(), rhs), ("Y".into(), lhs)],
                        source_line: line,
                    });
                }
                "module" => {
                    return Err(NetlistError::UnsupportedConstruct {
                        line,
                        construct: "nested module".into(),
                    });
                }
                other => {
                    self.reject_keyword(other, line)?;
                    instances.push(self.parse_instance(word, line)?);
                }
            }
        }

        // Only comments/whitespace may follow the module.
        match &self.peek().tok {
            Tok::Eof => {}
            Tok::Ident(w) if w == "module" => {
                return Err(NetlistError::UnsupportedConstruct {
                    line: self.peek().line,
                    construct: "multiple modules per file".into(),
                });
            }
            _ => return Err(self.syntax_error("trailing tokens after `endmodule`")),
        }

        // Header/declaration agreement.
        for port in &header_ports {
            if !primary_inputs.contains(port) && !primary_outputs.contains(port) {
                return Err(NetlistError::UndeclaredPort(port.clone()));
            }
        }
        for declared in primary_inputs.iter().chain(primary_outputs.iter()) {
            if !header_ports.contains(declared) {
                return Err(NetlistError::PortNotInHeader(declared.clone()));
            }
        }
        for input in &primary_inputs {
            if primary_outputs.contains(input) {
                return Err(NetlistError::Syntax {
                    line: 1,
                    col: 1,
                    message: format!("`{input}` is declared both input and output"),
                });
            }
        }
        let _ = wires; // implicit wires are allowed; declarations carry no extra info

        Ok(Netlist {
            module_name,
            primary_inputs,
            primary_outputs,
            instances,
        })
    }

    fn parse_instance(&mut self, cell_type: String, line: u32) -> Result<Instance, NetlistError> {
        let (name, _) = self.expect_ident("instance name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut connections = Vec::new();
        loop {
            self.expect(Tok::Dot, "`.` starting a named connection")?;
            let (pin, _) = self.expect_ident("pin name")?;
            self.expect(Tok::LParen, "`(`")?;
            let (net, _) = self.expect_ident("net name")?;
            self.expect(Tok::RParen, "`)`")?;
            connections.push((pin, net));
            match self.advance() {
                Token {
                    tok: Tok::Comma, ..
                } => continue,
                Token {
                    tok: Tok::RParen, ..
                } => break,
                t => {
                    return Err(NetlistError::Syntax {
                        line: t.line,
                        col: t.col,
                        message: "expected `,` or `)` in connection list".into(),
                    })
                }
            }
        }
        self.expect(Tok::Semi, "`;`")?;
        Ok(Instance {
            cell_type,
            name,
            connections,
            source_line: line,
        })
    }
}

/// Parse a structural module and validate it against `lib`.
pub fn parse_netlist(text: &str, lib: &CellLibrary) -> Result<Netlist, NetlistError> {
    let tokens = Lexer::new(text).tokenize()?;
    let mut parser = Parser { tokens, pos: 0 };
    let netlist = parser.parse_module()?;
    netlist.validate(lib)?;
    Ok(netlist)
}
