"""Vectorised numpy implementation of the packed dish kernels.

Semantics and floating-point operation order match ``_ckernels.pyx`` exactly,
so either backend gives bit-identical results. Row layout (int16)::

    [loc n | dirty n | n_succ n | n_fail n | cache n*S | step | finished]

``cache[j, mask]`` is -1 (never observed), 0 (clean) or 1 (dirty), where bit
b of ``mask`` is set when the b-th occluder of j is absent.
"""

from __future__ import annotations

import numpy as np


def _cols(tab):
    n, S = tab.n, tab.S
    return 0, n, 2 * n, 3 * n, 4 * n, 4 * n + n * S, 4 * n + n * S + 1


def _mask(states, rows, j, tab):
    """Occlusion-setting mask of object j (per row) from current locations."""
    return _mask_rows(states, rows, np.full(len(rows), j, dtype=np.int64), tab)


def _dirty_on_table(states, tab):
    n = tab.n
    return ((states[:, :n] == 0) & (states[:, n : 2 * n] != 0)).sum(axis=1)


def _grasp_p(states, rows, i, tab):
    _, _, SUCC, FAIL, _, _, _ = _cols(tab)
    npr = tab.rw[5]
    mask = _mask(states, rows, i, tab)
    s = states[rows, SUCC + i].astype(np.float64)
    f = states[rows, FAIL + i].astype(np.float64)
    return (tab.pg[i, mask] * npr + s) / (npr + s + f)


def _split(actions, tab):
    n = tab.n
    lift = actions <= n
    i = np.where(lift, actions - 1, actions - 1 - n)
    return lift, i


def step(states, actions, U, tab):
    """One transition per row with explicit uniforms ``U`` (B, 1+k)."""
    LOC, DIRTY, SUCC, FAIL, CACHE, STEP, FIN = _cols(tab)
    n, k, S = tab.n, tab.k, tab.S
    wd, wc, gf, lw, fp, _ = tab.rw
    states = np.asarray(states)
    actions = np.asarray(actions, dtype=np.int64)
    out = states.copy()
    B = len(states)
    obs = np.ones(B, dtype=np.int64)
    rew = np.zeros(B, dtype=np.float64)
    if B == 0:
        return out, obs, rew
    fin = states[:, FIN] != 0
    finish = (~fin) & (actions == 0)
    if finish.any():
        rew[finish] = fp * _dirty_on_table(states[finish], tab)
        out[finish, FIN] = 1
        out[finish, STEP] += 1
    act = np.flatnonzero((~fin) & (actions != 0))
    if len(act) == 0:
        return out, obs, rew
    lift, i = _split(actions[act], tab)
    valid = states[act, LOC + i] == 0
    p = np.zeros(len(act))
    if valid.any():
        vr = act[valid]
        p[valid] = _grasp_p_rows(states, vr, i[valid], tab)
    success = valid & (U[act, 0] < p)
    out[act[success], SUCC + i[success]] += 1
    fail_rows = valid & ~success
    out[act[fail_rows], FAIL + i[fail_rows]] += 1
    dirty_i = states[act, DIRTY + i] != 0
    r = np.full(len(act), gf)
    r[lift & valid] = lw
    wash_ok = (~lift) & success
    r[wash_ok] = np.where(dirty_i[wash_ok], wd, wc)
    out[act[wash_ok], LOC + i[wash_ok]] = 1
    o = success.astype(np.int64)
    pos = np.zeros(len(act), dtype=np.int64)
    for col in range(n):
        j = tab.near[i, col]
        live = (j >= 0) & (pos < k)
        if not live.any():
            continue
        idx = np.flatnonzero(live)
        jj = j[idx]
        rows = act[idx]
        on = out[rows, LOC + jj] == 0
        idx, jj, rows = idx[on], jj[on], rows[on]
        if len(idx) == 0:
            continue
        mask = _mask_rows(out, rows, jj, tab)
        succ_here = success[idx]
        lifted = succ_here & lift[idx]
        if lifted.any():
            mask[lifted] |= np.int64(1) << tab.occ_bit[jj[lifted], i[idx][lifted]]
        cell = CACHE + jj * S + mask
        c = out[rows, cell].astype(np.int64)
        bit = np.zeros(len(idx), dtype=np.int64)
        # successful grasp: cached reading or a fresh one
        fresh = succ_here & (c < 0)
        if fresh.any():
            dj = states[rows[fresh], DIRTY + jj[fresh]] != 0
            q = np.where(dj, tab.pod[jj[fresh], mask[fresh]], tab.poc[jj[fresh], mask[fresh]])
            nb = (U[rows[fresh], 1 + pos[idx][fresh]] < q).astype(np.int64)
            bit[fresh] = nb
            out[rows[fresh], cell[fresh]] = nb
        hit = succ_here & (c >= 0)
        bit[hit] = c[hit]
        # failed grasp: re-report current setting, else the base reading
        rep = ~succ_here
        if rep.any():
            cr = c[rep]
            base = out[rows[rep], CACHE + jj[rep] * S]
            cr = np.where(cr < 0, base, cr)
            bit[rep] = (cr > 0).astype(np.int64)
        o[idx] |= bit << (1 + pos[idx])
        pos[idx] += 1
    step_no = out[act, STEP].astype(np.int64) + 1
    out[act, STEP] = step_no
    last = step_no >= tab.max_steps
    if last.any():
        out[act[last], FIN] = 1
        r[last] = r[last] + fp * _dirty_on_table(out[act[last]], tab)
    obs[act] = o
    rew[act] = r
    return out, obs, rew


def _mask_rows(states, rows, objs, tab):
    """Like ``_mask`` with a per-row object index."""
    m = np.zeros(len(rows), dtype=np.int64)
    for b in range(tab.M):
        o = tab.occ_idx[objs, b]
        has = o >= 0
        absent = np.zeros(len(rows), dtype=bool)
        if has.any():
            absent[has] = states[rows[has], o[has]] != 0
        m |= absent.astype(np.int64) << b
    return m


def _grasp_p_rows(states, rows, objs, tab):
    _, _, SUCC, FAIL, _, _, _ = _cols(tab)
    npr = tab.rw[5]
    mask = _mask_rows(states, rows, objs, tab)
    s = states[rows, SUCC + objs].astype(np.float64)
    f = states[rows, FAIL + objs].astype(np.float64)
    return (tab.pg[objs, mask] * npr + s) / (npr + s + f)


def expected_reward(states, actions, tab):
    LOC, DIRTY, _, _, _, STEP, FIN = _cols(tab)
    wd, wc, gf, lw, fp, _ = tab.rw
    states = np.asarray(states)
    actions = np.asarray(actions, dtype=np.int64)
    B = len(states)
    out = np.zeros(B, dtype=np.float64)
    if B == 0:
        return out
    fin = states[:, FIN] != 0
    nd = _dirty_on_table(states, tab).astype(np.float64)
    finish = (~fin) & (actions == 0)
    out[finish] = fp * nd[finish]
    act = np.flatnonzero((~fin) & (actions != 0))
    if len(act) == 0:
        return out
    lift, i = _split(actions[act], tab)
    last = states[act, STEP].astype(np.int64) + 1 >= tab.max_steps
    valid = states[act, LOC + i] == 0
    r = np.where(valid & lift, lw, gf)
    wash = valid & ~lift
    if wash.any():
        rows = act[wash]
        p = _grasp_p_rows(states, rows, i[wash], tab)
        dirty = states[rows, DIRTY + i[wash]] != 0
        r[wash] = p * np.where(dirty, wd, wc) + (1.0 - p) * gf
        lw_last = last[wash]
        di = dirty.astype(np.float64)
        adj = r[wash]
        adj[lw_last] = adj[lw_last] + fp * (nd[rows][lw_last] - p[lw_last] * di[lw_last])
        r[wash] = adj
    plain = last & ~wash
    r[plain] = r[plain] + fp * nd[act][plain]
    out[act] = r
    return out


def update(states, action, observation, tab):
    """Condition every row on an executed (action, observation) pair.

    Returns the advanced rows and the per-row likelihood of the observation.
    """
    LOC, DIRTY, SUCC, FAIL, CACHE, STEP, FIN = _cols(tab)
    n, k, S = tab.n, tab.k, tab.S
    states = np.asarray(states)
    out = states.copy()
    B = len(states)
    lik = np.ones(B, dtype=np.float64)
    if B == 0:
        return out, lik
    fin = states[:, FIN] != 0
    if action == 0:
        live = ~fin
        out[live, FIN] = 1
        out[live, STEP] += 1
        lik[:] = float(observation == 1)
        return out, lik
    lik[fin] = float(observation == 1)
    act = np.flatnonzero(~fin)
    if len(act) == 0:
        return out, lik
    lift = action <= n
    i = action - 1 if lift else action - 1 - n
    success = bool(observation & 1)
    valid = states[act, LOC + i] == 0
    lk = np.where(valid, 1.0, 0.0 if success else 1.0)
    if valid.any():
        vr = act[valid]
        p = _grasp_p(states, vr, i, tab)
        lk[valid] = p if success else 1.0 - p
        out[vr, (SUCC if success else FAIL) + i] += 1
    done = valid & success
    if not lift:
        out[act[done], LOC + i] = 1
    pos = np.zeros(len(act), dtype=np.int64)
    for col in range(n):
        j = int(tab.near[i, col])
        if j < 0:
            break
        sel = np.flatnonzero((pos < k) & (out[act, LOC + j] == 0))
        if len(sel) == 0:
            continue
        rows = act[sel]
        want = (observation >> (1 + pos[sel])) & 1
        mask = _mask(out, rows, j, tab)
        d = done[sel]
        if lift:
            mask[d] |= np.int64(1) << int(tab.occ_bit[j, i])
        cell = CACHE + j * S + mask
        c = out[rows, cell].astype(np.int64)
        l = lk[sel]
        fresh = d & (c < 0)
        if fresh.any():
            dj = states[rows[fresh], DIRTY + j] != 0
            q = np.where(dj, tab.pod[j, mask[fresh]], tab.poc[j, mask[fresh]])
            l[fresh] = l[fresh] * np.where(want[fresh] == 1, q, 1.0 - q)
            out[rows[fresh], cell[fresh]] = want[fresh]
        hit = d & (c >= 0)
        l[hit & (c != want)] = 0.0
        rep = ~d
        if rep.any():
            cr = np.where(c[rep] < 0, out[rows[rep], CACHE + j * S], c[rep])
            bad = (cr > 0).astype(np.int64) != want[rep]
            lr = l[rep]
            lr[bad] = 0.0
            l[rep] = lr
        lk[sel] = l
        pos[sel] += 1
    # padded positions must read CLEAN
    for p in range(k):
        if (observation >> (1 + p)) & 1:
            lk[pos <= p] = 0.0
    step_no = out[act, STEP].astype(np.int64) + 1
    out[act, STEP] = step_no
    out[act[step_no >= tab.max_steps], FIN] = 1
    lik[act] = lk
    return out, lik


def rollout(states, nodes, t0, gact, gedge, U, tab):
    """Sum of expected rewards following the graph from layer ``t0``.

    ``U`` has shape (B, T - t0, 1 + k); row b uses ``U[b, d]`` for the
    transition out of layer ``t0 + d``.
    """
    T = gact.shape[0]
    cur = np.asarray(states)
    q = np.asarray(nodes, dtype=np.int64).copy()
    val = np.zeros(len(cur), dtype=np.float64)
    for d, t in enumerate(range(t0, T)):
        a = gact[t, q]
        val += expected_reward(cur, a, tab)
        if t == T - 1:
            break
        cur, obs, _ = step(cur, a, U[:, d], tab)
        q = gedge[t, q, obs]
    return val


def valid_actions(states, tab):
    n = tab.n
    on = np.asarray(states)[:, :n] == 0
    first = np.ones((len(on), 1), dtype=bool)
    return np.concatenate([first, on, on], axis=1)
