# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trade search. Mirrors ``_kernel_py`` expression for expression."""

from libc.math cimport nextafter

BACKEND = "cython"


cdef inline bint _proposal(double[:, ::1] h, double[::1] cost, double[:, ::1] expertise,
                           double[::1] efficiency, double[::1] fixed, double[:, ::1] cap,
                           double[::1] w, double tau_trade, bint effective,
                           Py_ssize_t s, Py_ssize_t r, Py_ssize_t d,
                           double* out_amount, double* out_delta) noexcept nogil:
    cdef double hs = h[s, d]
    cdef double hr = h[r, d]
    cdef double slack, absorb, inc, amount, limit, delta, sender_after
    cdef bint emptied, idle
    cdef Py_ssize_t e
    if not hs - hr > tau_trade:
        return False
    slack = cap[r, d] - hr
    if not slack > 0.0:
        return False
    absorb = 1.0 - expertise[r, d]
    inc = absorb if effective else 1.0
    amount = hs
    if inc > 0.0:
        limit = slack / inc
        if limit < amount:
            amount = limit
        while hr + inc * amount > cap[r, d]:
            amount = nextafter(amount, 0.0)
    if not amount > 0.0:
        return False

    delta = w[d] * amount * (cost[r] * absorb - efficiency[s] * cost[s])
    sender_after = hs - efficiency[s] * amount
    if sender_after == 0.0:
        emptied = True
        for e in range(3):
            if e != d and h[s, e] != 0.0:
                emptied = False
        if emptied:
            delta = delta - fixed[s]
    if hr + absorb * amount > 0.0:
        idle = True
        for e in range(3):
            if h[r, e] != 0.0:
                idle = False
        if idle:
            delta = delta + fixed[r]
    out_amount[0] = amount
    out_delta[0] = delta
    return True


def best_trade(double[:, ::1] h, double[::1] cost, double[:, ::1] expertise, double[::1] efficiency,
               double[::1] fixed, double[:, ::1] cap, double[::1] w, double tau_trade,
               double tau_benefit, double delta_min, bint effective):
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t s, r, d
    cdef Py_ssize_t bs = -1, br = -1, bd = -1
    cdef double amount = 0.0, delta = 0.0, best_amount = 0.0, best_delta = 0.0
    with nogil:
        for s in range(n):
            for r in range(n):
                if r == s:
                    continue
                for d in range(3):
                    if not _proposal(h, cost, expertise, efficiency, fixed, cap, w, tau_trade, effective,
                                     s, r, d, &amount, &delta):
                        continue
                    if not (delta < -delta_min and -delta >= tau_benefit):
                        continue
                    if bs < 0 or delta < best_delta:
                        bs = s
                        br = r
                        bd = d
                        best_amount = amount
                        best_delta = delta
    if bs < 0:
        return None
    return (bs, br, bd, best_amount, best_delta)


def strategic_savings(double[:, ::1] h, double[::1] cost, double[:, ::1] expertise, double[::1] efficiency,
                      double[::1] fixed, double[:, ::1] cap, double[::1] w, double tau_trade,
                      double tau_benefit, double delta_min, bint effective, Py_ssize_t k):
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t s, r, d
    cdef double amount = 0.0, delta = 0.0, total = 0.0
    with nogil:
        for s in range(n):
            for r in range(n):
                if r == s or (s != k and r != k):
                    continue
                for d in range(3):
                    if not _proposal(h, cost, expertise, efficiency, fixed, cap, w, tau_trade, effective,
                                     s, r, d, &amount, &delta):
                        continue
                    if delta < -delta_min and -delta >= tau_benefit:
                        total = total - delta
    return total
