"""Small smooth-expression language for speed laws and boundary maps.

Grammar: + - * / with the usual precedence, parentheses, unary minus,
``^`` with a constant (literal) exponent, and the primitives sin, cos,
exp, tanh.  Variables are ``x`` and ``y1``, ``y2``, ...  Every admissible
expression is C^2 on its evaluation domain (division requires a
nonvanishing denominator, checked at evaluation time).

Evaluation works on scalars or numpy arrays; `eval_dual` returns exact
forward-mode first derivatives.  `compile_program` lowers an expression
to a flat postfix tape consumed by the numeric kernels.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "DualValue",
    "ExprError",
    "ExprEvalError",
    "Program",
    "PackedPrograms",
    "parse",
    "compile_program",
    "pack_programs",
]

_FUNCTIONS = ("sin", "cos", "exp", "tanh")
_VAR_RE = re.compile(r"^(x|y[0-9]+)$")


class ExprError(ValueError):
    """Syntax or identifier error, annotated with the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprEvalError(ArithmeticError):
    """Runtime domain error: division by zero or invalid power base."""


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: object
    right: object


@dataclass(frozen=True)
class PowC:
    base: object
    exponent: float


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            offset = len(text) - len(stripped)
            raise ExprError(f"unexpected character {stripped[0]!r}", offset)
        if match.lastgroup == "num":
            tokens.append(("num", match.group("num"), match.start("num")))
        elif match.lastgroup == "ident":
            tokens.append(("ident", match.group("ident"), match.start("ident")))
        else:
            tokens.append(("op", match.group("op"), match.start("op")))
        pos = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.idx = 0

    def peek(self):
        return self.tokens[self.idx]

    def advance(self):
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok

    def expect_op(self, op):
        kind, value, offset = self.peek()
        if kind != "op" or value != op:
            raise ExprError(f"expected {op!r}", offset)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ExprError(f"trailing input {value!r}", offset)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                node = Bin(value, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                node = Bin(value, node, self.unary())
            else:
                return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            node = PowC(node, self.const_exponent())
        return node

    def const_exponent(self):
        # only literal (optionally signed / parenthesised) exponents: keeps C^2
        kind, value, offset = self.peek()
        if kind == "op" and value == "(":
            self.advance()
            exponent = self.const_exponent()
            self.expect_op(")")
            return exponent
        sign = 1.0
        if kind == "op" and value == "-":
            self.advance()
            sign = -1.0
            kind, value, offset = self.peek()
        if kind != "num":
            raise ExprError("exponent must be a numeric constant", offset)
        self.advance()
        return sign * float(value)

    def atom(self):
        kind, value, offset = self.advance()
        if kind == "num":
            return Num(float(value))
        if kind == "ident":
            if value in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                nkind, nvalue, noffset = self.peek()
                if nkind == "op" and nvalue == ",":
                    raise ExprError(f"{value} takes exactly one argument", noffset)
                self.expect_op(")")
                return Call(value, arg)
            if _VAR_RE.match(value):
                return Var(value)
            raise ExprError(f"unknown identifier {value!r}", offset)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "end":
            raise ExprError("unexpected end of input", offset)
        raise ExprError(f"unexpected token {value!r}", offset)


# ---------------------------------------------------------------------------
# Evaluation


def _var_sort_key(name):
    return (0, 0) if name == "x" else (1, int(name[1:]))


def _collect_vars(node, out):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Neg):
        _collect_vars(node.arg, out)
    elif isinstance(node, Bin):
        _collect_vars(node.left, out)
        _collect_vars(node.right, out)
    elif isinstance(node, PowC):
        _collect_vars(node.base, out)
    elif isinstance(node, Call):
        _collect_vars(node.arg, out)


def _check_power(base, exponent):
    frac = exponent != round(exponent)
    if np.any((np.asarray(base) < 0.0) & frac):
        raise ExprEvalError(f"negative base for fractional exponent {exponent}")
    if exponent < 0 and np.any(np.asarray(base) == 0.0):
        raise ExprEvalError(f"zero base for negative exponent {exponent}")


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Bin):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if np.any(np.asarray(right) == 0.0):
            raise ExprEvalError("division by zero")
        return left / right
    if isinstance(node, PowC):
        base = _eval(node.base, env)
        _check_power(base, node.exponent)
        if node.exponent == round(node.exponent):
            return base ** int(node.exponent)
        return base ** node.exponent
    # Call
    arg = _eval(node.arg, env)
    return getattr(np, node.fn)(arg)


def _eval_dual(node, env, grads):
    if isinstance(node, Num):
        return node.value, np.zeros(len(next(iter(grads.values()))) if grads else 0)
    if isinstance(node, Var):
        return env[node.name], grads[node.name].copy()
    if isinstance(node, Neg):
        value, grad = _eval_dual(node.arg, env, grads)
        return -value, -grad
    if isinstance(node, Bin):
        lv, lg = _eval_dual(node.left, env, grads)
        rv, rg = _eval_dual(node.right, env, grads)
        if node.op == "+":
            return lv + rv, lg + rg
        if node.op == "-":
            return lv - rv, lg - rg
        if node.op == "*":
            return lv * rv, lv * rg + rv * lg
        if rv == 0.0:
            raise ExprEvalError("division by zero")
        return lv / rv, (lg * rv - lv * rg) / (rv * rv)
    if isinstance(node, PowC):
        bv, bg = _eval_dual(node.base, env, grads)
        c = node.exponent
        _check_power(bv, c)
        if c == round(c):
            value = bv ** int(c)
            # d/dx b^c = c b^(c-1); b=0 with c>=1 gives 0 (c=1: slope 1)
            if bv == 0.0:
                slope = 1.0 if c == 1 else 0.0
            else:
                slope = c * bv ** (int(c) - 1)
        else:
            if bv == 0.0 and c < 1.0:
                raise ExprEvalError(f"derivative of x^{c} undefined at 0")
            value = bv ** c
            slope = 0.0 if bv == 0.0 else c * bv ** (c - 1.0)
        return value, slope * bg
    # Call
    av, ag = _eval_dual(node.arg, env, grads)
    if node.fn == "sin":
        return math.sin(av), math.cos(av) * ag
    if node.fn == "cos":
        return math.cos(av), -math.sin(av) * ag
    if node.fn == "exp":
        value = math.exp(av)
        return value, value * ag
    value = math.tanh(av)
    return value, (1.0 - value * value) * ag


def _render(node, parent_prec=0):
    # precedence: +,- =1  *,/ =2  unary- =3  ^ =4
    if isinstance(node, Num):
        text = repr(node.value)
        return f"({text})" if node.value < 0 and parent_prec >= 3 else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        text = "-" + _render(node.arg, 3)
        return f"({text})" if parent_prec > 2 else text
    if isinstance(node, Bin):
        prec = 1 if node.op in "+-" else 2
        # right operand of - and / needs a strictly higher level
        left = _render(node.left, prec)
        right = _render(node.right, prec + (1 if node.op in "-/" else 0))
        # a + -b style output is avoided by parenthesising negative right sides
        if node.op in "+-" and right.startswith("-"):
            right = f"({right})"
        text = f"{left} {node.op} {right}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(node, PowC):
        base = _render(node.base, 4)
        exponent = repr(node.exponent)
        if node.exponent < 0:
            exponent = f"({exponent})"
        return f"{base}^{exponent}"
    return f"{node.fn}({_render(node.arg, 0)})"


@dataclass(frozen=True)
class DualValue:
    """Value plus exact first partials, aligned with ``wrt``."""

    value: float
    partials: np.ndarray
    wrt: tuple


class Expr:
    """Immutable parsed expression; safe to share across workers."""

    __slots__ = ("root", "source", "free_vars", "_programs")

    def __init__(self, root, source):
        self.root = root
        self.source = source
        found = set()
        _collect_vars(root, found)
        self.free_vars = tuple(sorted(found, key=_var_sort_key))
        self._programs = {}

    def __repr__(self):
        return f"Expr({self.render()!r})"

    def render(self):
        return _render(self.root)

    def eval(self, binding):
        """Evaluate on a mapping var -> scalar or ndarray."""
        missing = [v for v in self.free_vars if v not in binding]
        if missing:
            raise KeyError(f"binding misses variables {missing}")
        return _eval(self.root, binding)

    def eval_dual(self, binding):
        """Forward-mode value and gradient, ordered like ``binding``."""
        names = tuple(binding)
        missing = [v for v in self.free_vars if v not in names]
        if missing:
            raise KeyError(f"binding misses variables {missing}")
        env = {name: float(binding[name]) for name in names}
        seeds = {
            name: np.eye(len(names))[i] for i, name in enumerate(names)
        }
        value, grad = _eval_dual(self.root, env, seeds)
        if not names:
            grad = np.zeros(0)
        return DualValue(float(value), grad, names)

    def program(self, var_order):
        var_order = tuple(var_order)
        if var_order not in self._programs:
            self._programs[var_order] = compile_program(self, var_order)
        return self._programs[var_order]

    def __getstate__(self):
        return (self.root, self.source)

    def __setstate__(self, state):
        root, source = state
        self.__init__(root, source)


def parse(text):
    """Parse ``text`` into an `Expr`, raising `ExprError` with offsets."""
    if not isinstance(text, str):
        raise TypeError(f"expected an expression string, got {type(text)!r}")
    return Expr(_Parser(text).parse(), text)


# ---------------------------------------------------------------------------
# Postfix tape for the numeric kernels

OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_SIN = 7
OP_COS = 8
OP_EXP = 9
OP_TANH = 10
OP_POWC = 11

KIND_GENERAL = 0
KIND_CONST = 1
KIND_AFFINE = 2

_CALL_OPS = {"sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "tanh": OP_TANH}
_BIN_OPS = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV}


class Program:
    """Flat postfix tape: the shared evaluation form for both kernel backends.

    ``kind`` marks constant and single-variable affine expressions so the
    hot loops can skip the interpreter for the common speed laws.
    """

    __slots__ = ("codes", "args", "consts", "n_vars", "max_stack", "kind", "meta")

    def __init__(self, codes, args, consts, n_vars, max_stack, kind, meta):
        self.codes = np.asarray(codes, dtype=np.int32)
        self.args = np.asarray(args, dtype=np.int32)
        self.consts = np.asarray(consts, dtype=np.float64)
        self.n_vars = n_vars
        self.max_stack = max_stack
        self.kind = kind
        self.meta = np.asarray(meta, dtype=np.float64)  # (c0, c1, var_idx)

    def eval_scalar(self, values):
        """Plain-float tape evaluation; ``values`` is a length-n_vars sequence."""
        if self.kind == KIND_CONST:
            return self.meta[0]
        if self.kind == KIND_AFFINE:
            return self.meta[0] + self.meta[1] * values[int(self.meta[2])]
        stack = [0.0] * self.max_stack
        top = -1
        consts = self.consts
        for code, arg in zip(self.codes, self.args):
            if code == OP_CONST:
                top += 1
                stack[top] = consts[arg]
            elif code == OP_VAR:
                top += 1
                stack[top] = values[arg]
            elif code == OP_ADD:
                top -= 1
                stack[top] = stack[top] + stack[top + 1]
            elif code == OP_SUB:
                top -= 1
                stack[top] = stack[top] - stack[top + 1]
            elif code == OP_MUL:
                top -= 1
                stack[top] = stack[top] * stack[top + 1]
            elif code == OP_DIV:
                top -= 1
                stack[top] = stack[top] / stack[top + 1]
            elif code == OP_NEG:
                stack[top] = -stack[top]
            elif code == OP_SIN:
                stack[top] = math.sin(stack[top])
            elif code == OP_COS:
                stack[top] = math.cos(stack[top])
            elif code == OP_EXP:
                stack[top] = math.exp(stack[top])
            elif code == OP_TANH:
                stack[top] = math.tanh(stack[top])
            else:
                exponent = consts[arg]
                if exponent == round(exponent):
                    stack[top] = stack[top] ** int(exponent)
                else:
                    stack[top] = stack[top] ** exponent
        return stack[0]

    def eval_cols(self, cols):
        """Vectorized tape evaluation; ``cols`` has shape (n_vars, npts)."""
        cols = np.asarray(cols, dtype=np.float64)
        if self.kind == KIND_CONST:
            return np.full(cols.shape[1], self.meta[0])
        if self.kind == KIND_AFFINE:
            return self.meta[0] + self.meta[1] * cols[int(self.meta[2])]
        stack = []
        for code, arg in zip(self.codes, self.args):
            if code == OP_CONST:
                stack.append(np.full(cols.shape[1], self.consts[arg]))
            elif code == OP_VAR:
                stack.append(cols[arg].copy())
            elif code == OP_NEG:
                stack[-1] = -stack[-1]
            elif code == OP_SIN:
                stack[-1] = np.sin(stack[-1])
            elif code == OP_COS:
                stack[-1] = np.cos(stack[-1])
            elif code == OP_EXP:
                stack[-1] = np.exp(stack[-1])
            elif code == OP_TANH:
                stack[-1] = np.tanh(stack[-1])
            elif code == OP_POWC:
                exponent = self.consts[arg]
                if exponent == round(exponent):
                    stack[-1] = stack[-1] ** int(exponent)
                else:
                    stack[-1] = stack[-1] ** exponent
            else:
                rhs = stack.pop()
                if code == OP_ADD:
                    stack[-1] = stack[-1] + rhs
                elif code == OP_SUB:
                    stack[-1] = stack[-1] - rhs
                elif code == OP_MUL:
                    stack[-1] = stack[-1] * rhs
                else:
                    stack[-1] = stack[-1] / rhs
        return stack[0]


def _classify_affine(node):
    """Return (c0, c1, var_name_or_None) when the node is affine, else None."""
    if isinstance(node, Num):
        return (node.value, 0.0, None)
    if isinstance(node, Var):
        return (0.0, 1.0, node.name)
    if isinstance(node, Neg):
        inner = _classify_affine(node.arg)
        if inner is None:
            return None
        return (-inner[0], -inner[1], inner[2])
    if isinstance(node, Bin):
        left = _classify_affine(node.left)
        right = _classify_affine(node.right)
        if left is None or right is None:
            return None
        if node.op in "+-":
            sign = 1.0 if node.op == "+" else -1.0
            var = left[2] or right[2]
            if left[2] and right[2] and left[2] != right[2]:
                return None
            return (left[0] + sign * right[0], left[1] + sign * right[1], var)
        if node.op == "*":
            if left[2] is None:
                return (left[0] * right[0], left[0] * right[1], right[2])
            if right[2] is None:
                return (left[0] * right[0], right[0] * left[1], left[2])
            return None
        if right[2] is None and right[0] != 0.0:
            return (left[0] / right[0], left[1] / right[0], left[2])
        return None
    if isinstance(node, PowC):
        base = _classify_affine(node.base)
        if base is not None and base[2] is None:
            _check_power(base[0], node.exponent)
            return (base[0] ** node.exponent, 0.0, None)
        return None
    if isinstance(node, Call):
        arg = _classify_affine(node.arg)
        if arg is not None and arg[2] is None:
            return (float(getattr(math, node.fn)(arg[0])), 0.0, None)
        return None
    return None


def compile_program(expr, var_order):
    """Lower ``expr`` to a `Program` with variables indexed by ``var_order``."""
    var_index = {name: i for i, name in enumerate(var_order)}
    missing = [v for v in expr.free_vars if v not in var_index]
    if missing:
        raise KeyError(f"var order misses {missing}")

    codes, args, consts = [], [], []

    def add_const(value):
        consts.append(float(value))
        return len(consts) - 1

    def emit(node):
        if isinstance(node, Num):
            codes.append(OP_CONST)
            args.append(add_const(node.value))
            return 1
        if isinstance(node, Var):
            codes.append(OP_VAR)
            args.append(var_index[node.name])
            return 1
        if isinstance(node, Neg):
            depth = emit(node.arg)
            codes.append(OP_NEG)
            args.append(0)
            return depth
        if isinstance(node, Bin):
            left = emit(node.left)
            right = emit(node.right)
            codes.append(_BIN_OPS[node.op])
            args.append(0)
            return max(left, right + 1)
        if isinstance(node, PowC):
            depth = emit(node.base)
            codes.append(OP_POWC)
            args.append(add_const(node.exponent))
            return depth
        depth = emit(node.arg)
        codes.append(_CALL_OPS[node.fn])
        args.append(0)
        return depth

    max_stack = emit(expr.root)

    affine = _classify_affine(expr.root)
    if affine is not None and affine[2] is None:
        kind, meta = KIND_CONST, (affine[0], 0.0, 0.0)
    elif affine is not None:
        kind, meta = KIND_AFFINE, (affine[0], affine[1], float(var_index[affine[2]]))
    else:
        kind, meta = KIND_GENERAL, (0.0, 0.0, 0.0)

    if not consts:
        consts = [0.0]
    return Program(codes, args, consts, len(var_order), max_stack, kind, meta)


class PackedPrograms:
    """Several programs over one variable order, flattened for the kernels."""

    __slots__ = ("codes", "args", "consts", "offsets", "kinds", "meta",
                 "n_vars", "max_stack", "programs")

    def __init__(self, programs, n_vars):
        self.programs = list(programs)
        self.n_vars = n_vars
        self.codes = np.concatenate([p.codes for p in self.programs]) \
            if self.programs else np.zeros(0, dtype=np.int32)
        # constant indices shift by the pack-local offset
        arg_parts, const_parts = [], []
        const_base = 0
        for prog in self.programs:
            shifted = prog.args.copy()
            is_const_ref = (prog.codes == OP_CONST) | (prog.codes == OP_POWC)
            shifted[is_const_ref] += const_base
            arg_parts.append(shifted)
            const_parts.append(prog.consts)
            const_base += len(prog.consts)
        self.args = np.concatenate(arg_parts) if arg_parts else np.zeros(0, np.int32)
        self.consts = np.concatenate(const_parts) if const_parts else np.zeros(0)
        self.offsets = np.zeros(len(self.programs) + 1, dtype=np.int32)
        for i, prog in enumerate(self.programs):
            self.offsets[i + 1] = self.offsets[i] + len(prog.codes)
        self.kinds = np.array([p.kind for p in self.programs], dtype=np.int32)
        self.meta = np.array([p.meta for p in self.programs], dtype=np.float64) \
            if self.programs else np.zeros((0, 3))
        self.max_stack = max((p.max_stack for p in self.programs), default=1)

    def __len__(self):
        return len(self.programs)

    def eval_cols(self, index, cols):
        return self.programs[index].eval_cols(cols)


def pack_programs(exprs: Sequence[Expr], var_order) -> PackedPrograms:
    var_order = tuple(var_order)
    return PackedPrograms([e.program(var_order) for e in exprs], len(var_order))
