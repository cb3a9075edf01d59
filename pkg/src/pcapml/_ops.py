"""Opcode table for compiled filter programs.

A compiled filter is a postfix (RPN) instruction sequence over a boolean
stack. Each instruction is one int64 row ``(opcode, a, b)``:

=============  =========================  =========================
opcode         a                          b
=============  =========================  =========================
OP_AND/OP_OR   --                         --
OP_NOT         --                         --
OP_HOST4       direction                  IPv4 address as integer
OP_HOST6       direction                  row in 16-byte operand table
OP_NET4        network address integer    netmask integer
OP_NET6        network table row          netmask table row
OP_PORT        direction                  port number
OP_PROTO       IP protocol number         --
OP_ETHER       ethertype                  --
OP_TIME        start µs (-1 = open)       end µs (-1 = open)
=============  =========================  =========================

Address/port primitives with direction DIR_ANY match source OR
destination. Absent header fields never match.
"""

OP_AND = 0
OP_OR = 1
OP_NOT = 2
OP_HOST4 = 3
OP_HOST6 = 4
OP_NET4 = 5
OP_NET6 = 6
OP_PORT = 7
OP_PROTO = 8
OP_ETHER = 9
OP_TIME = 10

DIR_ANY = 0
DIR_SRC = 1
DIR_DST = 2

# Bound on the boolean evaluation stack inside the matching kernels.
MAX_STACK = 64
