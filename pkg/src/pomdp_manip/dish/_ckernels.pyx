# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled packed dish kernels; same semantics as ``_pykernels``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int16_t st_t
ctypedef cnp.int64_t ix_t


cdef struct Tab:
    int n, k, M, S, max_steps, width
    int LOC, DIRTY, SUCC, FAIL, CACHE, STEP, FIN
    double wd, wc, gf, lw, fp, npr
    ix_t* occ_idx
    ix_t* occ_bit
    ix_t* near
    double* pg
    double* pod
    double* poc


cdef Tab _tab(tab, list keep):
    """Flatten the lookup tables; ``keep`` holds the arrays alive for the call."""
    cdef Tab t
    cdef ix_t[:, ::1] iv
    cdef double[:, ::1] dv
    t.n = tab.n
    t.k = tab.k
    t.M = tab.M
    t.S = tab.S
    t.max_steps = tab.max_steps
    t.LOC = 0
    t.DIRTY = t.n
    t.SUCC = 2 * t.n
    t.FAIL = 3 * t.n
    t.CACHE = 4 * t.n
    t.STEP = 4 * t.n + t.n * t.S
    t.FIN = t.STEP + 1
    t.width = t.FIN + 1
    rw = tab.rw
    t.wd = rw[0]
    t.wc = rw[1]
    t.gf = rw[2]
    t.lw = rw[3]
    t.fp = rw[4]
    t.npr = rw[5]
    # an (n, 0) table still needs one addressable element
    occ = np.ascontiguousarray(tab.occ_idx, dtype=np.int64) if t.M > 0 else np.full((t.n, 1), -1, dtype=np.int64)
    arrays = [
        occ,
        np.ascontiguousarray(tab.occ_bit, dtype=np.int64),
        np.ascontiguousarray(tab.near, dtype=np.int64),
        np.ascontiguousarray(tab.pg, dtype=np.float64),
        np.ascontiguousarray(tab.pod, dtype=np.float64),
        np.ascontiguousarray(tab.poc, dtype=np.float64),
    ]
    keep.extend(arrays)
    if t.n == 0:
        return t
    iv = arrays[0]
    t.occ_idx = &iv[0, 0]
    iv = arrays[1]
    t.occ_bit = &iv[0, 0]
    iv = arrays[2]
    t.near = &iv[0, 0]
    dv = arrays[3]
    t.pg = &dv[0, 0]
    dv = arrays[4]
    t.pod = &dv[0, 0]
    dv = arrays[5]
    t.poc = &dv[0, 0]
    return t


cdef inline int _mask(st_t* row, Tab* t, int j) noexcept nogil:
    cdef int b, o, m = 0
    for b in range(t.M):
        o = <int>t.occ_idx[j * (t.M if t.M > 0 else 1) + b]
        if o < 0:
            break
        if row[t.LOC + o] != 0:
            m |= 1 << b
    return m


cdef inline int _dirty_on_table(st_t* row, Tab* t) noexcept nogil:
    cdef int j, c = 0
    for j in range(t.n):
        if row[t.LOC + j] == 0 and row[t.DIRTY + j] != 0:
            c += 1
    return c


cdef inline double _grasp_p(st_t* row, Tab* t, int i) noexcept nogil:
    cdef int m = _mask(row, t, i)
    cdef double s = row[t.SUCC + i]
    cdef double f = row[t.FAIL + i]
    return (t.pg[i * t.S + m] * t.npr + s) / (t.npr + s + f)


cdef inline double _er(st_t* row, Tab* t, long a) noexcept nogil:
    cdef int i, nd
    cdef bint lift, last
    cdef double r, p, di
    if row[t.FIN] != 0:
        return 0.0
    nd = _dirty_on_table(row, t)
    if a == 0:
        return t.fp * nd
    lift = a <= t.n
    i = <int>(a - 1) if lift else <int>(a - 1 - t.n)
    last = row[t.STEP] + 1 >= t.max_steps
    if row[t.LOC + i] != 0 or lift:
        r = t.lw if (lift and row[t.LOC + i] == 0) else t.gf
        if last:
            r = r + t.fp * nd
        return r
    p = _grasp_p(row, t, i)
    di = 1.0 if row[t.DIRTY + i] != 0 else 0.0
    r = p * (t.wd if row[t.DIRTY + i] != 0 else t.wc) + (1.0 - p) * t.gf
    if last:
        r = r + t.fp * (nd - p * di)
    return r


cdef inline long _step(st_t* src, st_t* dst, long a, double* u, Tab* t, double* rew) noexcept nogil:
    cdef int c, i, j, col, pos, m, bit
    cdef bint lift, valid, success
    cdef long obs
    cdef double r, q
    cdef st_t cv
    for c in range(t.width):
        dst[c] = src[c]
    if src[t.FIN] != 0:
        rew[0] = 0.0
        return 1
    if a == 0:
        rew[0] = t.fp * _dirty_on_table(src, t)
        dst[t.FIN] = 1
        dst[t.STEP] = src[t.STEP] + 1
        return 1
    lift = a <= t.n
    i = <int>(a - 1) if lift else <int>(a - 1 - t.n)
    valid = src[t.LOC + i] == 0
    success = False
    if valid:
        success = u[0] < _grasp_p(src, t, i)
        if success:
            dst[t.SUCC + i] += 1
        else:
            dst[t.FAIL + i] += 1
    if lift:
        r = t.lw if valid else t.gf
    elif success:
        r = t.wd if src[t.DIRTY + i] != 0 else t.wc
        dst[t.LOC + i] = 1
    else:
        r = t.gf
    obs = 1 if success else 0
    pos = 0
    for col in range(t.n):
        j = <int>t.near[i * t.n + col]
        if j < 0 or pos >= t.k:
            break
        if dst[t.LOC + j] != 0:
            continue
        m = _mask(dst, t, j)
        if success:
            if lift:
                m |= 1 << <int>t.occ_bit[j * t.n + i]
            cv = dst[t.CACHE + j * t.S + m]
            if cv < 0:
                q = t.pod[j * t.S + m] if src[t.DIRTY + j] != 0 else t.poc[j * t.S + m]
                bit = 1 if u[1 + pos] < q else 0
                dst[t.CACHE + j * t.S + m] = bit
            else:
                bit = cv
        else:
            cv = dst[t.CACHE + j * t.S + m]
            if cv < 0:
                cv = dst[t.CACHE + j * t.S]
            bit = 1 if cv > 0 else 0
        obs |= (<long>bit) << (1 + pos)
        pos += 1
    dst[t.STEP] = src[t.STEP] + 1
    if dst[t.STEP] >= t.max_steps:
        dst[t.FIN] = 1
        r = r + t.fp * _dirty_on_table(dst, t)
    rew[0] = r
    return obs


cdef inline double _update(st_t* src, st_t* dst, long a, long o, Tab* t) noexcept nogil:
    cdef int c, i, j, col, pos, m, want, got
    cdef bint lift, valid, success, done
    cdef double lik, p, q
    cdef st_t cv
    for c in range(t.width):
        dst[c] = src[c]
    if src[t.FIN] != 0:
        return 1.0 if o == 1 else 0.0
    if a == 0:
        dst[t.FIN] = 1
        dst[t.STEP] = src[t.STEP] + 1
        return 1.0 if o == 1 else 0.0
    lift = a <= t.n
    i = <int>(a - 1) if lift else <int>(a - 1 - t.n)
    valid = src[t.LOC + i] == 0
    success = (o & 1) != 0
    if valid:
        p = _grasp_p(src, t, i)
        lik = p if success else 1.0 - p
        if success:
            dst[t.SUCC + i] += 1
        else:
            dst[t.FAIL + i] += 1
    else:
        lik = 0.0 if success else 1.0
    done = valid and success
    if done and not lift:
        dst[t.LOC + i] = 1
    pos = 0
    for col in range(t.n):
        j = <int>t.near[i * t.n + col]
        if j < 0 or pos >= t.k:
            break
        if dst[t.LOC + j] != 0:
            continue
        want = <int>((o >> (1 + pos)) & 1)
        m = _mask(dst, t, j)
        if done:
            if lift:
                m |= 1 << <int>t.occ_bit[j * t.n + i]
            cv = dst[t.CACHE + j * t.S + m]
            if cv >= 0:
                if cv != want:
                    lik = 0.0
            else:
                q = t.pod[j * t.S + m] if src[t.DIRTY + j] != 0 else t.poc[j * t.S + m]
                lik = lik * (q if want == 1 else 1.0 - q)
                dst[t.CACHE + j * t.S + m] = want
        else:
            cv = dst[t.CACHE + j * t.S + m]
            if cv < 0:
                cv = dst[t.CACHE + j * t.S]
            got = 1 if cv > 0 else 0
            if got != want:
                lik = 0.0
        pos += 1
    while pos < t.k:
        if (o >> (1 + pos)) & 1:
            lik = 0.0
        pos += 1
    dst[t.STEP] = src[t.STEP] + 1
    if dst[t.STEP] >= t.max_steps:
        dst[t.FIN] = 1
    return lik


def step(states, actions, U, tab):
    cdef list keep = []
    cdef Tab t = _tab(tab, keep)
    cdef st_t[:, ::1] S = np.ascontiguousarray(states, dtype=np.int16)
    cdef ix_t[::1] A = np.ascontiguousarray(actions, dtype=np.int64)
    cdef double[:, ::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t B = S.shape[0], b
    out = np.empty((B, t.width), dtype=np.int16)
    obs = np.empty(B, dtype=np.int64)
    rew = np.empty(B, dtype=np.float64)
    cdef st_t[:, ::1] O = out
    cdef ix_t[::1] ov = obs
    cdef double[::1] rv = rew
    if B == 0:
        return out, obs, rew
    with nogil:
        for b in range(B):
            ov[b] = _step(&S[b, 0], &O[b, 0], A[b], &Uv[b, 0], &t, &rv[b])
    return out, obs, rew


def expected_reward(states, actions, tab):
    cdef list keep = []
    cdef Tab t = _tab(tab, keep)
    cdef st_t[:, ::1] S = np.ascontiguousarray(states, dtype=np.int16)
    cdef ix_t[::1] A = np.ascontiguousarray(actions, dtype=np.int64)
    cdef Py_ssize_t B = S.shape[0], b
    out = np.empty(B, dtype=np.float64)
    cdef double[::1] ov = out
    if B == 0:
        return out
    with nogil:
        for b in range(B):
            ov[b] = _er(&S[b, 0], &t, A[b])
    return out


def update(states, long action, long observation, tab):
    cdef list keep = []
    cdef Tab t = _tab(tab, keep)
    cdef st_t[:, ::1] S = np.ascontiguousarray(states, dtype=np.int16)
    cdef Py_ssize_t B = S.shape[0], b
    out = np.empty((B, t.width), dtype=np.int16)
    lik = np.empty(B, dtype=np.float64)
    cdef st_t[:, ::1] O = out
    cdef double[::1] lv = lik
    if B == 0:
        return out, lik
    with nogil:
        for b in range(B):
            lv[b] = _update(&S[b, 0], &O[b, 0], action, observation, &t)
    return out, lik


def rollout(states, nodes, int t0, gact, gedge, U, tab):
    cdef list keep = []
    cdef Tab t = _tab(tab, keep)
    cdef st_t[:, ::1] S = np.ascontiguousarray(states, dtype=np.int16)
    cdef ix_t[::1] Q = np.ascontiguousarray(nodes, dtype=np.int64)
    cdef ix_t[:, ::1] GA = np.ascontiguousarray(gact, dtype=np.int64)
    cdef ix_t[:, :, ::1] GE = np.ascontiguousarray(gedge, dtype=np.int64)
    cdef double[:, :, ::1] Uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t B = S.shape[0], b
    cdef int T = GA.shape[0], tt, d
    cdef long q, a, o
    cdef double val, r
    out = np.zeros(B, dtype=np.float64)
    cdef double[::1] ov = out
    scratch = np.empty((2, t.width), dtype=np.int16)
    cdef st_t[:, ::1] W = scratch
    cdef st_t* cur
    cdef st_t* nxt
    cdef st_t* tmp
    if B == 0:
        return out
    with nogil:
        for b in range(B):
            q = Q[b]
            val = 0.0
            cur = &S[b, 0]
            nxt = &W[0, 0]
            d = 0
            for tt in range(t0, T):
                a = GA[tt, q]
                val = val + _er(cur, &t, a)
                if tt == T - 1:
                    break
                o = _step(cur, nxt, a, &Uv[b, d, 0], &t, &r)
                q = GE[tt, q, o]
                # ping-pong between the two scratch rows
                if nxt == &W[0, 0]:
                    cur = &W[0, 0]
                    nxt = &W[1, 0]
                else:
                    cur = &W[1, 0]
                    nxt = &W[0, 0]
                d += 1
            ov[b] = val
    return out


def valid_actions(states, tab):
    n = tab.n
    on = np.asarray(states)[:, :n] == 0
    return np.concatenate([np.ones((len(on), 1), dtype=bool), on, on], axis=1)
