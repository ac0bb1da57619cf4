"""Tiny expression language for config-file fields.

The admissible building blocks are real constants, the time variable t,
and torus-periodic trigonometric monomials sin(K*pi*xj) / cos(K*pi*xj)
with a positive even integer K, combined by * inside a term and by + or
- between terms.  Anything richer belongs in a field file, not in a
config line: the point of keeping the grammar this small is that a
config stays reproducible from its text alone.

K is forced to be even because sin(K pi (x+1)) = sin(K pi x) only then;
an odd K would put a seam at the cell boundary that every stencil in
the package would happily differentiate across.
"""

import re

import numpy as np

from .errors import ParseError, ValidationError

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[+\-*()])"
    r"|(?P<bad>.)"
)

_TRIG = {"sin": np.sin, "cos": np.cos}


def _tokenize(text: str):
    out = []
    for m in _TOKEN.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", f"char {m.start()}")
        out.append((kind, m.group(), m.start()))
    return out


class Expression:
    """Parsed sum of trig monomials; evaluation broadcasts over grids.

    terms is a tuple of (coef, t_power, trigs) with trigs a tuple of
    (fn_name, K, axis).  The representation is canonical enough for
    config hashing: it survives whitespace and number-format changes.
    """

    def __init__(self, source: str, terms: tuple):
        self.source = source
        self.terms = terms

    @property
    def time_dependent(self) -> bool:
        return any(tp > 0 for _, tp, _ in self.terms)

    @property
    def n_axes(self) -> int:
        """1 + the largest coordinate index used (0 for pure constants)."""
        axes = [ax for _, _, trigs in self.terms for _, _, ax in trigs]
        return 1 + max(axes) if axes else 0

    def canonical(self) -> list:
        return [[c, tp, [list(tr) for tr in trigs]] for c, tp, trigs in self.terms]

    def evaluate(self, coords, t: float = 0.0) -> np.ndarray:
        coords = [np.asarray(c, dtype=float) for c in coords]
        if self.n_axes > len(coords):
            raise ValidationError(
                f"expression {self.source!r} uses x{self.n_axes} on a {len(coords)}d grid"
            )
        shape = coords[0].shape if coords else ()
        total = np.zeros(shape)
        for coef, t_power, trigs in self.terms:
            val = coef * (float(t) ** t_power if t_power else 1.0)
            acc = np.full(shape, val)
            for fn, k, axis in trigs:
                acc = acc * _TRIG[fn](k * np.pi * coords[axis])
            total += acc
        return total

    def __repr__(self):
        return f"Expression({self.source!r})"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def _next(self):
        tok = self._peek()
        self.i += 1
        return tok

    def _expect(self, kind, value=None):
        k, v, pos = self._next()
        if k != kind or (value is not None and v != value):
            want = value if value is not None else kind
            raise ParseError(f"expected {want!r}, found {v!r}", f"char {pos}")
        return v, pos

    def parse(self) -> Expression:
        if not self.tokens:
            raise ParseError("empty expression", "char 0")
        terms = [self._term(lead=True)]
        while True:
            k, v, _ = self._peek()
            if k == "op" and v in "+-":
                self.i += 1
                terms.append(self._term(sign=-1.0 if v == "-" else 1.0))
            elif k is None:
                break
            else:
                _, bad, pos = self._peek()
                raise ParseError(f"expected '+', '-' or end, found {bad!r}", f"char {pos}")
        return Expression(self.text.strip(), tuple(terms))

    def _term(self, sign: float = 1.0, lead: bool = False):
        if lead:
            k, v, _ = self._peek()
            if k == "op" and v in "+-":
                self.i += 1
                sign = -1.0 if v == "-" else 1.0
        coef = sign
        t_power = 0
        trigs = []
        while True:
            c, tp, tr = self._factor()
            coef *= c
            t_power += tp
            trigs.extend(tr)
            k, v, _ = self._peek()
            if k == "op" and v == "*":
                self.i += 1
                continue
            break
        return (coef, t_power, tuple(sorted(trigs)))

    def _factor(self):
        k, v, pos = self._next()
        if k == "num":
            return float(v), 0, []
        if k == "name" and v == "t":
            return 1.0, 1, []
        if k == "name" and v in _TRIG:
            self._expect("op", "(")
            fn = v
            k2, v2, pos2 = self._peek()
            if k2 == "num":
                self.i += 1
                kval = float(v2)
                self._expect("op", "*")
            else:
                kval = 1.0
            self._expect("name", "pi")
            self._expect("op", "*")
            vname, vpos = self._expect("name")
            if not re.fullmatch(r"x[12]", vname):
                raise ParseError(f"expected x1 or x2, found {vname!r}", f"char {vpos}")
            self._expect("op", ")")
            kint = round(kval)
            if abs(kval - kint) > 1e-12 or kint <= 0 or kint % 2 != 0:
                raise ParseError(
                    f"trig frequency must be a positive even integer for torus "
                    f"periodicity, got {v2 if k2 == 'num' else 1}",
                    f"char {pos2 if k2 == 'num' else pos}",
                )
            return 1.0, 0, [(fn, int(kint), int(vname[1]) - 1)]
        raise ParseError(f"expected a number, 't', 'sin' or 'cos', found {v!r}", f"char {pos}")


def parse_expression(text: str) -> Expression:
    """Parse the documented grammar; ParseError carries the character offset."""
    return _Parser(text).parse()
