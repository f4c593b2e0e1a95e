"""Lexer and recursive-descent parser for the Lua subset.

Accepted grammar (a pragmatic slice of Lua 5.2):

    chunk   ::= {stat} [laststat]
    stat    ::= ';' | varlist '=' explist | functioncall
              | 'local' namelist ['=' explist]
              | 'do' block 'end'
              | 'if' exp 'then' block {'elseif' exp 'then' block}
                ['else' block] 'end'
              | 'while' exp 'do' block 'end'
              | 'break'
    laststat::= 'return' [explist]
    exp     ::= precedence climb over: or, and, comparisons, + -, * / %,
                unary (not, -), ^ (right assoc)
    prefix  ::= Name | '(' exp ')' | prefix '[' exp ']' | prefix '.' Name
              | prefix '(' [explist] ')'
    table   ::= '{' [field {sep field} [sep]] '}'
    field   ::= '[' exp ']' '=' exp | Name '=' exp | exp

No goto/labels/repeat/for, no varargs, no method sugar, no string-call
sugar.  String escapes: \\n \\t \\\\ \\" \\'.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from .ast import (
    And,
    Assign,
    BinOp,
    Block,
    Bool,
    Break,
    Call,
    Const,
    Empty,
    Expr,
    Function,
    If,
    Index,
    Local,
    Name,
    Neg,
    Nil,
    Not,
    Num,
    Or,
    Pos,
    Return,
    Stat,
    Str,
    TableCtor,
    While,
)


class LuaSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


KEYWORDS = {
    "and", "break", "do", "else", "elseif", "end", "false", "function",
    "if", "in", "local", "nil", "not", "or", "return", "then", "true",
    "while",
}

_SYMBOLS = [
    "==", "~=", "<=", ">=",
    "+", "-", "*", "/", "%", "^", "<", ">", "=",
    "(", ")", "{", "}", "[", "]", ";", ",", ".",
]

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", '"': '"', "'": "'"}


@dataclass(frozen=True)
class Token:
    kind: str  # "name" | "number" | "string" | "symbol" | "keyword" | "eof"
    text: str
    value: object
    pos: Pos


def tokenize(src: str) -> List[Token]:
    toks: List[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def err(msg):
        raise LuaSyntaxError(msg, line, col)

    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("--", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        start = Pos(line, col)
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] == "."):
                j += 1
            if j < n and src[j] in "eE":
                j += 1
                if j < n and src[j] in "+-":
                    j += 1
                while j < n and src[j].isdigit():
                    j += 1
            text = src[i:j]
            try:
                value = float(text)
            except ValueError:
                err(f"malformed number near '{text}'")
            toks.append(Token("number", text, value, start))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            kind = "keyword" if text in KEYWORDS else "name"
            toks.append(Token(kind, text, text, start))
            col += j - i
            i = j
            continue
        if c in "'\"":
            quote = c
            j = i + 1
            buf = []
            while True:
                if j >= n or src[j] == "\n":
                    err("unfinished string")
                ch = src[j]
                if ch == quote:
                    j += 1
                    break
                if ch == "\\":
                    if j + 1 >= n or src[j + 1] not in _ESCAPES:
                        err("invalid escape sequence")
                    buf.append(_ESCAPES[src[j + 1]])
                    j += 2
                else:
                    buf.append(ch)
                    j += 1
            toks.append(Token("string", src[i:j], "".join(buf), start))
            col += j - i
            i = j
            continue
        for sym in _SYMBOLS:
            if src.startswith(sym, i):
                toks.append(Token("symbol", sym, sym, start))
                i += len(sym)
                col += len(sym)
                break
        else:
            err(f"unexpected character {c!r}")
    toks.append(Token("eof", "<eof>", None, Pos(line, col)))
    return toks


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.toks = tokens
        self.i = 0
        self.loop_depth = 0

    # -- token plumbing ---------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.cur
        if t.kind != "eof":
            self.i += 1
        return t

    def check(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.cur
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        if self.check(kind, text):
            return self.advance()
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if self.check(kind, text):
            return self.advance()
        want = text or kind
        got = self.cur.text
        raise LuaSyntaxError(f"'{want}' expected near '{got}'",
                             self.cur.pos.line, self.cur.pos.col)

    def err(self, msg: str):
        raise LuaSyntaxError(msg, self.cur.pos.line, self.cur.pos.col)

    # -- grammar ------------------------------------------------------------

    def parse_chunk(self) -> Block:
        pos = self.cur.pos
        stats = self.parse_block_stats()
        self.expect("eof")
        return Block(tuple(stats), pos=pos)

    def parse_block_stats(self) -> List[Stat]:
        stats: List[Stat] = []
        while True:
            if self.check("symbol", ";"):
                p = self.advance().pos
                stats.append(Empty(pos=p))
                continue
            if self.check("keyword", "return"):
                stats.append(self.parse_return())
                break
            if self._block_end():
                break
            stats.append(self.parse_statement())
        return stats

    def _block_end(self) -> bool:
        return self.cur.kind == "eof" or (
            self.cur.kind == "keyword"
            and self.cur.text in ("end", "else", "elseif")
        )

    def parse_return(self) -> Return:
        pos = self.expect("keyword", "return").pos
        exprs: Tuple[Expr, ...] = ()
        if not self._block_end() and not self.check("symbol", ";"):
            exprs = tuple(self.parse_explist())
        self.accept("symbol", ";")
        if not self._block_end():
            self.err("'end' expected after return")
        return Return(exprs, pos=pos)

    def parse_statement(self) -> Stat:
        t = self.cur
        if t.kind == "keyword":
            if t.text == "local":
                return self.parse_local()
            if t.text == "do":
                pos = self.advance().pos
                stats = self.parse_block_stats()
                self.expect("keyword", "end")
                return Block(tuple(stats), pos=pos)
            if t.text == "if":
                return self.parse_if()
            if t.text == "while":
                return self.parse_while()
            if t.text == "break":
                pos = self.advance().pos
                if self.loop_depth == 0:
                    raise LuaSyntaxError("break outside a loop",
                                         pos.line, pos.col)
                return Break(pos=pos)
        # expression statement: function call or assignment
        return self.parse_exprstat()

    def parse_local(self) -> Local:
        pos = self.expect("keyword", "local").pos
        names = [self.expect("name").text]
        while self.accept("symbol", ","):
            names.append(self.expect("name").text)
        exprs: Tuple[Expr, ...] = ()
        if self.accept("symbol", "="):
            exprs = tuple(self.parse_explist())
        # Explicitly scoped form: local x = e in s end.  Without it the
        # scope is the rest of the enclosing block (filled by desugaring).
        if self.accept("keyword", "in"):
            stats = self.parse_block_stats()
            self.expect("keyword", "end")
            return Local(tuple(names), exprs, Block(tuple(stats), pos=pos),
                         pos=pos)
        return Local(tuple(names), exprs, Empty(pos=pos), pos=pos)

    def parse_if(self) -> If:
        pos = self.expect("keyword", "if").pos
        cond = self.parse_expr()
        self.expect("keyword", "then")
        then_stats = self.parse_block_stats()
        node_else: Stat = Empty(pos=pos)
        if self.check("keyword", "elseif"):
            # reuse the 'if' machinery: elseif is a nested if
            p2 = self.cur.pos
            self.toks[self.i] = Token("keyword", "if", "if", p2)
            node_else = Block((self.parse_if(),), pos=p2)
            return If(cond, Block(tuple(then_stats), pos=pos), node_else, pos=pos)
        if self.accept("keyword", "else"):
            else_stats = self.parse_block_stats()
            node_else = Block(tuple(else_stats), pos=pos)
        self.expect("keyword", "end")
        return If(cond, Block(tuple(then_stats), pos=pos), node_else, pos=pos)

    def parse_while(self) -> While:
        pos = self.expect("keyword", "while").pos
        cond = self.parse_expr()
        self.expect("keyword", "do")
        self.loop_depth += 1
        stats = self.parse_block_stats()
        self.loop_depth -= 1
        self.expect("keyword", "end")
        return While(cond, Block(tuple(stats), pos=pos), pos=pos)

    def parse_exprstat(self) -> Stat:
        pos = self.cur.pos
        first = self.parse_prefix()
        if self.check("symbol", ",") or self.check("symbol", "="):
            targets = [first]
            while self.accept("symbol", ","):
                targets.append(self.parse_prefix())
            for x in targets:
                if not isinstance(x, (Name, Index)):
                    self.err("cannot assign to this expression")
            self.expect("symbol", "=")
            exprs = tuple(self.parse_explist())
            return Assign(tuple(targets), exprs, pos=pos)
        if not isinstance(first, Call):
            self.err("syntax error: expression is not a statement")
        from .ast import ExprStat

        return ExprStat(first, pos=pos)

    def parse_explist(self) -> List[Expr]:
        exprs = [self.parse_expr()]
        while self.accept("symbol", ","):
            exprs.append(self.parse_expr())
        return exprs

    # precedence climbing -------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        e = self.parse_and()
        while self.check("keyword", "or"):
            pos = self.advance().pos
            e = Or(e, self.parse_and(), pos=pos)
        return e

    def parse_and(self) -> Expr:
        e = self.parse_cmp()
        while self.check("keyword", "and"):
            pos = self.advance().pos
            e = And(e, self.parse_cmp(), pos=pos)
        return e

    def parse_cmp(self) -> Expr:
        e = self.parse_additive()
        while self.cur.kind == "symbol" and self.cur.text in (
            "==", "~=", "<", "<=", ">", ">=",
        ):
            op = self.advance()
            e = BinOp(op.text, e, self.parse_additive(), pos=op.pos)
        return e

    def parse_additive(self) -> Expr:
        e = self.parse_multiplicative()
        while self.cur.kind == "symbol" and self.cur.text in ("+", "-"):
            op = self.advance()
            e = BinOp(op.text, e, self.parse_multiplicative(), pos=op.pos)
        return e

    def parse_multiplicative(self) -> Expr:
        e = self.parse_unary()
        while self.cur.kind == "symbol" and self.cur.text in ("*", "/", "%"):
            op = self.advance()
            e = BinOp(op.text, e, self.parse_unary(), pos=op.pos)
        return e

    def parse_unary(self) -> Expr:
        if self.check("keyword", "not"):
            pos = self.advance().pos
            return Not(self.parse_unary(), pos=pos)
        if self.check("symbol", "-"):
            pos = self.advance().pos
            return Neg(self.parse_unary(), pos=pos)
        return self.parse_pow()

    def parse_pow(self) -> Expr:
        e = self.parse_atom()
        if self.check("symbol", "^"):
            pos = self.advance().pos
            # right-associative; exponent may itself be unary
            return BinOp("^", e, self.parse_unary(), pos=pos)
        return e

    def parse_atom(self) -> Expr:
        t = self.cur
        if t.kind == "number":
            self.advance()
            return Const(Num(float(t.value)), pos=t.pos)
        if t.kind == "string":
            self.advance()
            return Const(Str(t.value), pos=t.pos)
        if t.kind == "keyword":
            if t.text == "nil":
                self.advance()
                return Const(Nil(), pos=t.pos)
            if t.text == "true":
                self.advance()
                return Const(Bool(True), pos=t.pos)
            if t.text == "false":
                self.advance()
                return Const(Bool(False), pos=t.pos)
            if t.text == "function":
                return self.parse_function()
        if self.check("symbol", "{"):
            return self.parse_table()
        return self.parse_prefix()

    def parse_function(self) -> Function:
        pos = self.expect("keyword", "function").pos
        self.expect("symbol", "(")
        params: List[str] = []
        if not self.check("symbol", ")"):
            params.append(self.expect("name").text)
            while self.accept("symbol", ","):
                params.append(self.expect("name").text)
        self.expect("symbol", ")")
        saved = self.loop_depth
        self.loop_depth = 0
        stats = self.parse_block_stats()
        self.loop_depth = saved
        self.expect("keyword", "end")
        return Function(tuple(params), Block(tuple(stats), pos=pos), pos=pos)

    def parse_table(self) -> TableCtor:
        pos = self.expect("symbol", "{").pos
        fields: List[Tuple[Optional[Expr], Expr]] = []
        while not self.check("symbol", "}"):
            if self.check("symbol", "["):
                self.advance()
                key = self.parse_expr()
                self.expect("symbol", "]")
                self.expect("symbol", "=")
                fields.append((key, self.parse_expr()))
            elif self.cur.kind == "name" and self.toks[self.i + 1].text == "=" \
                    and self.toks[self.i + 1].kind == "symbol":
                nm = self.advance()
                self.advance()  # '='
                fields.append((Const(Str(nm.text), pos=nm.pos), self.parse_expr()))
            else:
                fields.append((None, self.parse_expr()))
            if not (self.accept("symbol", ",") or self.accept("symbol", ";")):
                break
        self.expect("symbol", "}")
        return TableCtor(tuple(fields), pos=pos)

    def parse_prefix(self) -> Expr:
        t = self.cur
        if t.kind == "name":
            self.advance()
            e: Expr = Name(t.text, pos=t.pos)
        elif self.check("symbol", "("):
            self.advance()
            e = self.parse_expr()
            self.expect("symbol", ")")
        else:
            self.err(f"unexpected symbol near '{t.text}'")
        while True:
            if self.check("symbol", "["):
                p = self.advance().pos
                key = self.parse_expr()
                self.expect("symbol", "]")
                e = Index(e, key, pos=p)
            elif self.check("symbol", "."):
                p = self.advance().pos
                nm = self.expect("name")
                e = Index(e, Const(Str(nm.text), pos=nm.pos), pos=p)
            elif self.check("symbol", "("):
                p = self.advance().pos
                args: List[Expr] = []
                if not self.check("symbol", ")"):
                    args = self.parse_explist()
                self.expect("symbol", ")")
                e = Call(e, tuple(args), pos=p)
            elif self.cur.kind == "string":
                # string-argument call sugar: f "lit"
                s = self.advance()
                e = Call(e, (Const(Str(s.value), pos=s.pos),), pos=s.pos)
            else:
                return e


def parse(text: str, origin: str = "<inline>") -> Block:
    """Parse source text into the raw (pre-desugaring) AST.

    Raises :class:`LuaSyntaxError` with line/column on malformed input.
    """
    try:
        return _Parser(tokenize(text)).parse_chunk()
    except LuaSyntaxError as e:
        raise LuaSyntaxError(f"{origin}: {e.message}", e.line, e.col) from None
