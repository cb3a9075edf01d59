"""Random packet and filter generators shared by the oracle suites."""

import random
from ipaddress import ip_address, ip_network

from pcapml import synth
from pcapml.filters import (
    AndPred,
    BpfFilter,
    HostPred,
    NetPred,
    NotPred,
    OrPred,
    PortPred,
    ProtoPred,
)

# pools are shared by packets and filters so matches actually happen
V4_POOL = [f"10.0.{i}.{j}" for i in range(4) for j in range(1, 5)]
V6_POOL = [f"2001:db8:{i}::{j}" for i in range(3) for j in range(1, 4)]
PORT_POOL = [22, 53, 80, 443, 1234, 40000]
NET_POOL = ["10.0.0.0/24", "10.0.1.0/24", "10.0.0.0/16", "192.168.0.0/16",
            "2001:db8::/32", "2001:db8:1::/48"]


def random_packet(rng: random.Random) -> bytes:
    """A biased zoo: valid v4/v6 TCP/UDP/ICMP, VLAN tags, fragments,
    truncations, and raw garbage."""
    roll = rng.random()
    if roll < 0.08:
        return rng.randbytes(rng.randrange(0, 80))
    payload = rng.randbytes(rng.randrange(0, 32))
    sport = rng.choice(PORT_POOL)
    dport = rng.choice(PORT_POOL)
    proto_roll = rng.random()
    if proto_roll < 0.4:
        transport = synth.tcp(sport, dport, payload)
        proto = 6
    elif proto_roll < 0.75:
        transport = synth.udp(sport, dport, payload)
        proto = 17
    else:
        transport = synth.icmp_echo(payload)
        proto = 1
    vlan = rng.randrange(1, 100) if rng.random() < 0.15 else None
    if rng.random() < 0.75:
        src, dst = rng.choice(V4_POOL), rng.choice(V4_POOL)
        frag = rng.random() < 0.12
        options = b"\x01\x00\x00\x00" if rng.random() < 0.1 else b""
        net = synth.ipv4(src, dst, proto, transport,
                         frag_offset=185 if frag else 0,
                         more_fragments=frag and rng.random() < 0.5,
                         options=options)
        pkt = synth.ether(net, 0x0800, vlan=vlan)
    else:
        src, dst = rng.choice(V6_POOL), rng.choice(V6_POOL)
        net = synth.ipv6(src, dst, proto, transport)
        pkt = synth.ether(net, 0x86DD, vlan=vlan)
    if rng.random() < 0.2:
        pkt = pkt[:rng.randrange(0, len(pkt) + 1)]
    return pkt


def random_pred(rng: random.Random, depth: int):
    if depth <= 0 or rng.random() < 0.45:
        kind = rng.randrange(5)
        if kind == 0:
            pool = V4_POOL if rng.random() < 0.7 else V6_POOL
            return HostPred(ip_address(rng.choice(pool)),
                            rng.choice(("any", "src", "dst")))
        if kind == 1:
            return PortPred(rng.choice(PORT_POOL),
                            rng.choice(("any", "src", "dst")))
        if kind == 2:
            return NetPred(ip_network(rng.choice(NET_POOL)))
        if kind == 3:
            return ProtoPred(rng.choice(("tcp", "udp", "icmp")))
        return ProtoPred(rng.choice(("ip", "ip6")))
    kind = rng.randrange(3)
    if kind == 0:
        return NotPred(random_pred(rng, depth - 1))
    if kind == 1:
        return AndPred(random_pred(rng, depth - 1), random_pred(rng, depth - 1))
    return OrPred(random_pred(rng, depth - 1), random_pred(rng, depth - 1))


def random_bpf(rng: random.Random, max_depth: int = 5) -> BpfFilter:
    return BpfFilter(random_pred(rng, rng.randrange(0, max_depth + 1)))
