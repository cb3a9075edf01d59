"""The filter language that defines traffic samples.

A documented tcpdump-style subset::

    expr      := orexpr
    orexpr    := andexpr ("or" andexpr)*
    andexpr   := term ("and" term)*
    term      := "not" term | "(" expr ")" | primitive
    primitive := ["src"|"dst"] "host" ADDR
               | "net" CIDR
               | ["src"|"dst"] "port" NUM
               | "tcp" | "udp" | "icmp" | "ip" | "ip6"

Keywords are case-insensitive; "and" binds tighter than "or". Host and
port primitives without a direction match source OR destination. A
primitive over an absent header field is false, never an error. "ip" and
"ip6" test the (VLAN-unwrapped) ethertype; "tcp"/"udp"/"icmp" test the IP
protocol number. Timestamp windows have inclusive microsecond bounds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from ipaddress import (
    IPv4Address,
    IPv4Network,
    IPv6Address,
    IPv6Network,
    ip_address,
    ip_network,
)

import numpy as np

from . import _ops
from .decode import (
    ETHERTYPE_IPV4,
    ETHERTYPE_IPV6,
    PROTO_ICMP,
    PROTO_TCP,
    PROTO_UDP,
    HeaderView,
)
from .errors import FilterSyntaxError

# --- predicate tree -------------------------------------------------------

Address = IPv4Address | IPv6Address


@dataclass(frozen=True)
class HostPred:
    addr: Address
    direction: str = "any"  # any | src | dst


@dataclass(frozen=True)
class NetPred:
    network: IPv4Network | IPv6Network


@dataclass(frozen=True)
class PortPred:
    port: int
    direction: str = "any"


@dataclass(frozen=True)
class ProtoPred:
    name: str  # tcp | udp | icmp | ip | ip6


@dataclass(frozen=True)
class NotPred:
    child: "Pred"


@dataclass(frozen=True)
class AndPred:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True)
class OrPred:
    left: "Pred"
    right: "Pred"


Pred = HostPred | NetPred | PortPred | ProtoPred | NotPred | AndPred | OrPred


# --- top-level filter variants -------------------------------------------

@dataclass(frozen=True)
class FileRef:
    path: str


@dataclass(frozen=True)
class BpfFilter:
    tree: Pred


@dataclass(frozen=True)
class TimeWindow:
    """Inclusive microsecond window; None leaves that side open."""

    start_us: int | None = None
    end_us: int | None = None

    def __post_init__(self):
        if (self.start_us is not None and self.end_us is not None
                and self.start_us > self.end_us):
            raise ValueError("window start is after its end")


@dataclass(frozen=True)
class BpfAndTime:
    bpf: BpfFilter
    window: TimeWindow


FilterAst = FileRef | BpfFilter | TimeWindow | BpfAndTime


# --- parsing ---------------------------------------------------------------

_PROTO_KEYWORDS = ("tcp", "udp", "icmp", "ip", "ip6")
_KEYWORDS = frozenset(("src", "dst", "host", "net", "port", "and", "or", "not")
                      + _PROTO_KEYWORDS)

_TOKEN_RE = re.compile(r"[()]|[^\s()]+")


class _Token:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind, value, pos):
        self.kind = kind
        self.value = value
        self.pos = pos


def _lex(text: str) -> list[_Token]:
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        raw, pos = m.group(), m.start()
        if raw in "()":
            tokens.append(_Token(raw, raw, pos))
        elif raw.lower() in _KEYWORDS:
            tokens.append(_Token("kw", raw.lower(), pos))
        elif raw.isdigit():
            tokens.append(_Token("num", int(raw), pos))
        elif "/" in raw:
            try:
                tokens.append(_Token("cidr", ip_network(raw, strict=True), pos))
            except ValueError as exc:
                raise FilterSyntaxError(f"bad network literal {raw!r}: {exc}", pos)
        else:
            try:
                tokens.append(_Token("addr", ip_address(raw), pos))
            except ValueError:
                if "." in raw or ":" in raw:
                    raise FilterSyntaxError(f"bad address literal {raw!r}", pos)
                raise FilterSyntaxError(f"unknown token {raw!r}", pos)
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _lex(text)
        self.i = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self) -> _Token:
        tok = self.peek()
        if tok is None:
            raise FilterSyntaxError("unexpected end of expression", len(self.text))
        self.i += 1
        return tok

    def expect_kw(self, tok, *names):
        if tok.kind != "kw" or tok.value not in names:
            raise FilterSyntaxError(
                f"expected {' or '.join(repr(n) for n in names)}", tok.pos
            )

    def parse(self) -> Pred:
        tree = self.parse_or()
        tok = self.peek()
        if tok is not None:
            raise FilterSyntaxError("trailing input after expression", tok.pos)
        return tree

    def parse_or(self) -> Pred:
        left = self.parse_and()
        while (tok := self.peek()) and tok.kind == "kw" and tok.value == "or":
            self.take()
            left = OrPred(left, self.parse_and())
        return left

    def parse_and(self) -> Pred:
        left = self.parse_term()
        while (tok := self.peek()) and tok.kind == "kw" and tok.value == "and":
            self.take()
            left = AndPred(left, self.parse_term())
        return left

    def parse_term(self) -> Pred:
        tok = self.take()
        if tok.kind == "kw" and tok.value == "not":
            return NotPred(self.parse_term())
        if tok.kind == "(":
            inner = self.parse_or()
            closing = self.peek()
            if closing is None or closing.kind != ")":
                raise FilterSyntaxError(
                    "expected ')'",
                    len(self.text) if closing is None else closing.pos,
                )
            self.take()
            return inner
        return self.parse_primitive(tok)

    def parse_primitive(self, tok: _Token) -> Pred:
        if tok.kind != "kw":
            raise FilterSyntaxError("expected a filter primitive", tok.pos)
        direction = "any"
        if tok.value in ("src", "dst"):
            direction = tok.value
            tok = self.take()
            self.expect_kw(tok, "host", "port")
        if tok.value == "host":
            operand = self.take()
            if operand.kind != "addr":
                raise FilterSyntaxError("expected an IP address after 'host'",
                                        operand.pos)
            return HostPred(operand.value, direction)
        if tok.value == "port":
            operand = self.take()
            if operand.kind != "num":
                raise FilterSyntaxError("expected a port number after 'port'",
                                        operand.pos)
            if operand.value > 65535:
                raise FilterSyntaxError(f"port {operand.value} out of range",
                                        operand.pos)
            return PortPred(operand.value, direction)
        if tok.value == "net":
            operand = self.take()
            if operand.kind != "cidr":
                raise FilterSyntaxError("expected CIDR notation after 'net'",
                                        operand.pos)
            return NetPred(operand.value)
        if tok.value in _PROTO_KEYWORDS:
            return ProtoPred(tok.value)
        raise FilterSyntaxError(f"misplaced keyword {tok.value!r}", tok.pos)


def parse_filter(expr: str) -> BpfFilter:
    """Parse a filter expression into an immutable predicate tree."""
    if not expr.strip():
        raise FilterSyntaxError("empty filter expression", 0)
    return BpfFilter(_Parser(expr).parse())


# --- evaluation ------------------------------------------------------------

_PROTO_NUMBERS = {"tcp": PROTO_TCP, "udp": PROTO_UDP, "icmp": PROTO_ICMP}
_PROTO_ETHERTYPES = {"ip": ETHERTYPE_IPV4, "ip6": ETHERTYPE_IPV6}


def _match_pred(pred: Pred, view: HeaderView) -> bool:
    if isinstance(pred, AndPred):
        return _match_pred(pred.left, view) and _match_pred(pred.right, view)
    if isinstance(pred, OrPred):
        return _match_pred(pred.left, view) or _match_pred(pred.right, view)
    if isinstance(pred, NotPred):
        return not _match_pred(pred.child, view)
    if isinstance(pred, HostPred):
        hit = False
        if pred.direction != "dst":
            hit = view.src_ip == pred.addr
        if not hit and pred.direction != "src":
            hit = view.dst_ip == pred.addr
        return hit
    if isinstance(pred, NetPred):
        for addr in (view.src_ip, view.dst_ip):
            if addr is not None and addr.version == pred.network.version \
                    and addr in pred.network:
                return True
        return False
    if isinstance(pred, PortPred):
        hit = False
        if pred.direction != "dst":
            hit = view.src_port == pred.port
        if not hit and pred.direction != "src":
            hit = view.dst_port == pred.port
        return hit
    if isinstance(pred, ProtoPred):
        if pred.name in _PROTO_NUMBERS:
            return view.ip_proto == _PROTO_NUMBERS[pred.name]
        return view.ether_type == _PROTO_ETHERTYPES[pred.name]
    raise TypeError(f"not a predicate: {pred!r}")


def in_window(window: TimeWindow, ts_us: int) -> bool:
    return ((window.start_us is None or ts_us >= window.start_us)
            and (window.end_us is None or ts_us <= window.end_us))


def match_filter(ast: FilterAst, view: HeaderView, ts_us: int) -> bool:
    """Evaluate one filter against one decoded packet."""
    if isinstance(ast, BpfFilter):
        return _match_pred(ast.tree, view)
    if isinstance(ast, TimeWindow):
        return in_window(ast, ts_us)
    if isinstance(ast, BpfAndTime):
        return in_window(ast.window, ts_us) and _match_pred(ast.bpf.tree, view)
    if isinstance(ast, FileRef):
        raise ValueError("FILE filters are resolved by the pipeline, not per packet")
    raise TypeError(f"not a filter: {ast!r}")


# --- rendering (test fixed-point helper) -----------------------------------

def render_filter(ast: BpfFilter) -> str:
    """Canonical text for a parsed filter; reparsing yields an equal tree."""
    return _render(ast.tree)


def _render(pred: Pred) -> str:
    if isinstance(pred, AndPred):
        return f"({_render(pred.left)} and {_render(pred.right)})"
    if isinstance(pred, OrPred):
        return f"({_render(pred.left)} or {_render(pred.right)})"
    if isinstance(pred, NotPred):
        return f"not {_render(pred.child)}"
    if isinstance(pred, HostPred):
        prefix = "" if pred.direction == "any" else pred.direction + " "
        return f"{prefix}host {pred.addr}"
    if isinstance(pred, PortPred):
        prefix = "" if pred.direction == "any" else pred.direction + " "
        return f"{prefix}port {pred.port}"
    if isinstance(pred, NetPred):
        return f"net {pred.network}"
    if isinstance(pred, ProtoPred):
        return pred.name
    raise TypeError(f"not a predicate: {pred!r}")


# --- compilation to backend programs ---------------------------------------

_DIR_CODES = {"any": _ops.DIR_ANY, "src": _ops.DIR_SRC, "dst": _ops.DIR_DST}


@dataclass
class FilterProgram:
    """Filter vector compiled for the matching kernels."""

    starts: np.ndarray  # int64[nf], first instruction of each filter
    lens: np.ndarray    # int64[nf]
    code: np.ndarray    # int64[m, 3] instruction rows
    table: np.ndarray   # uint8[k, 16] IPv6 address/mask operands

    @property
    def n_filters(self) -> int:
        return len(self.starts)


class _Compiler:
    def __init__(self):
        self.code: list[tuple[int, int, int]] = []
        self.table: list[bytes] = []
        self.depth = 0
        self.max_depth = 0

    def _push(self):
        self.depth += 1
        self.max_depth = max(self.max_depth, self.depth)
        if self.max_depth > _ops.MAX_STACK:
            raise ValueError("filter too deeply nested to compile")

    def _row(self, op, a=0, b=0):
        self.code.append((op, a, b))

    def _table_row(self, raw: bytes) -> int:
        self.table.append(raw)
        return len(self.table) - 1

    def emit_filter(self, ast: FilterAst):
        if isinstance(ast, BpfFilter):
            self.emit_pred(ast.tree)
        elif isinstance(ast, TimeWindow):
            self.emit_window(ast)
        elif isinstance(ast, BpfAndTime):
            self.emit_pred(ast.bpf.tree)
            self.emit_window(ast.window)
            self._row(_ops.OP_AND)
            self.depth -= 1
        else:
            raise ValueError(f"cannot compile filter {ast!r}")

    def emit_window(self, window: TimeWindow):
        self._push()
        self._row(_ops.OP_TIME,
                  -1 if window.start_us is None else window.start_us,
                  -1 if window.end_us is None else window.end_us)

    def emit_pred(self, pred: Pred):
        if isinstance(pred, AndPred):
            self.emit_pred(pred.left)
            self.emit_pred(pred.right)
            self._row(_ops.OP_AND)
            self.depth -= 1
        elif isinstance(pred, OrPred):
            self.emit_pred(pred.left)
            self.emit_pred(pred.right)
            self._row(_ops.OP_OR)
            self.depth -= 1
        elif isinstance(pred, NotPred):
            self.emit_pred(pred.child)
            self._row(_ops.OP_NOT)
        elif isinstance(pred, HostPred):
            self._push()
            d = _DIR_CODES[pred.direction]
            if pred.addr.version == 4:
                self._row(_ops.OP_HOST4, d, int(pred.addr))
            else:
                self._row(_ops.OP_HOST6, d, self._table_row(pred.addr.packed))
        elif isinstance(pred, NetPred):
            self._push()
            net = pred.network
            if net.version == 4:
                self._row(_ops.OP_NET4, int(net.network_address),
                          int(net.netmask))
            else:
                self._row(_ops.OP_NET6,
                          self._table_row(net.network_address.packed),
                          self._table_row(net.netmask.packed))
        elif isinstance(pred, PortPred):
            self._push()
            self._row(_ops.OP_PORT, _DIR_CODES[pred.direction], pred.port)
        elif isinstance(pred, ProtoPred):
            self._push()
            if pred.name in _PROTO_NUMBERS:
                self._row(_ops.OP_PROTO, _PROTO_NUMBERS[pred.name])
            else:
                self._row(_ops.OP_ETHER, _PROTO_ETHERTYPES[pred.name])
        else:
            raise TypeError(f"not a predicate: {pred!r}")


def compile_filter_vector(filters: list[FilterAst]) -> FilterProgram:
    """Compile an ordered filter vector for the chunked matching path."""
    comp = _Compiler()
    starts, lens = [], []
    for ast in filters:
        begin = len(comp.code)
        comp.depth = 0
        comp.emit_filter(ast)
        starts.append(begin)
        lens.append(len(comp.code) - begin)
    code = np.array(comp.code, np.int64).reshape(-1, 3)
    table = (np.frombuffer(b"".join(comp.table), np.uint8).reshape(-1, 16)
             if comp.table else np.zeros((0, 16), np.uint8))
    return FilterProgram(
        starts=np.array(starts, np.int64),
        lens=np.array(lens, np.int64),
        code=code,
        table=table.copy(),
    )
