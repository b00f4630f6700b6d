"""Pure-Python trade search. Reference implementation and fallback for ``_kernel.pyx``.

Both backends must return bit-identical floats, so every arithmetic
expression here is mirrored operation-for-operation in the Cython source.
Agents are addressed by row index; rows are expected in sorted-id order so
that iteration order is the lexicographic tie-break order.
"""

from math import nextafter

BACKEND = "python"


def _proposal(h, cost, expertise, efficiency, fixed, cap, w, tau_trade, effective, s, r, d):
    """Maximal admissible-size transfer s -> r in dimension d and its system cost delta.

    Returns ``(amount, delta)``, or ``None`` when the trigger or capacity
    condition rules the pair out before profitability is considered.
    """
    hs = h[s][d]
    hr = h[r][d]
    if not hs - hr > tau_trade:
        return None
    slack = cap[r][d] - hr
    if not slack > 0.0:
        return None
    absorb = 1.0 - expertise[r][d]
    inc = absorb if effective else 1.0
    amount = hs
    if inc > 0.0:
        limit = slack / inc
        if limit < amount:
            amount = limit
        while hr + inc * amount > cap[r][d]:
            amount = nextafter(amount, 0.0)
    if not amount > 0.0:
        return None

    delta = w[d] * amount * (cost[r] * absorb - efficiency[s] * cost[s])
    sender_after = hs - efficiency[s] * amount
    if sender_after == 0.0:
        emptied = True
        for e in range(3):
            if e != d and h[s][e] != 0.0:
                emptied = False
        if emptied:
            delta = delta - fixed[s]
    if hr + absorb * amount > 0.0:
        idle = True
        for e in range(3):
            if h[r][e] != 0.0:
                idle = False
        if idle:
            delta = delta + fixed[r]
    return amount, delta


def best_trade(h, cost, expertise, efficiency, fixed, cap, w, tau_trade, tau_benefit, delta_min, effective):
    """Most profitable admissible trade as ``(s, r, d, amount, delta)`` or ``None``.

    Strict ``<`` keeps the first minimum met, i.e. the lexicographically
    smallest (sender, receiver, dimension) triple on ties.
    """
    n = len(h)
    best = None
    best_delta = 0.0
    for s in range(n):
        for r in range(n):
            if r == s:
                continue
            for d in range(3):
                prop = _proposal(h, cost, expertise, efficiency, fixed, cap, w, tau_trade, effective, s, r, d)
                if prop is None:
                    continue
                amount, delta = prop
                if not (delta < -delta_min and -delta >= tau_benefit):
                    continue
                if best is None or delta < best_delta:
                    best = (s, r, d, amount, delta)
                    best_delta = delta
    return best


def strategic_savings(h, cost, expertise, efficiency, fixed, cap, w, tau_trade, tau_benefit, delta_min, effective, k):
    """Sum of ``-delta`` over every admissible proposal with agent ``k`` on either side."""
    n = len(h)
    total = 0.0
    for s in range(n):
        for r in range(n):
            if r == s or (s != k and r != k):
                continue
            for d in range(3):
                prop = _proposal(h, cost, expertise, efficiency, fixed, cap, w, tau_trade, effective, s, r, d)
                if prop is None:
                    continue
                delta = prop[1]
                if delta < -delta_min and -delta >= tau_benefit:
                    total = total - delta
    return total
