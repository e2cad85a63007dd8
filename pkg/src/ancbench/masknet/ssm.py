"""Gated selective state-space layer with a hand-written reverse pass.

One layer maps a ``B x C`` frame sequence ``u`` to ``u + layer(u)``::

    n   = rmsnorm(u) * gamma
    v   = n @ Wv,  z = n @ Wz
    uc  = silu(causal_depthwise_conv(v) + cb)
    dt  = softplus(uc @ Wdt + bdt)            (B x C)
    Bt  = uc @ WB, Ct = uc @ WC               (B x N)
    h_t = exp(dt_t * A) * h_{t-1} + dt_t * Bt_t * uc_t     A = -exp(A_log)
    s_t = h_t @ Ct_t + D * uc_t
    out = (s * silu(z)) @ Wout
"""

from __future__ import annotations

import numpy as np

LAYER_PARAMS = ("gamma", "Wv", "Wz", "conv_w", "conv_b", "Wdt", "bdt", "WB", "WC", "A_log", "D", "Wout")


def sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def softplus(v: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, v)


def silu(v: np.ndarray) -> np.ndarray:
    return v * sigmoid(v)


def silu_grad(v: np.ndarray) -> np.ndarray:
    s = sigmoid(v)
    return s * (1.0 + v * (1.0 - s))


def init_layer(rng: np.random.Generator, channels: int, state_dim: int, conv_width: int) -> dict[str, np.ndarray]:
    C, N = channels, state_dim
    scale = 1.0 / np.sqrt(C)
    dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), C))
    return {
        "gamma": np.ones(C),
        "Wv": scale * rng.standard_normal((C, C)),
        "Wz": scale * rng.standard_normal((C, C)),
        "conv_w": rng.uniform(-0.5, 0.5, (conv_width, C)),
        "conv_b": np.zeros(C),
        "Wdt": 0.1 * scale * rng.standard_normal((C, C)),
        "bdt": dt + np.log(-np.expm1(-dt)),  # softplus^-1(dt)
        "WB": scale * rng.standard_normal((C, N)),
        "WC": scale * rng.standard_normal((C, N)),
        "A_log": np.log(np.tile(np.arange(1, N + 1, dtype=np.float64), (C, 1))),
        "D": np.ones(C),
        "Wout": 0.5 * scale * rng.standard_normal((C, C)),
    }


# ---------------------------------------------------------------------------
# selective scan


def selective_scan(u, delta, A, Bm, Cm, D, keep_states: bool = False, block: int = 1024):
    """Diagonal input-dependent linear recurrence.

    ``u, delta``: ``T x C``; ``A``: ``C x N``; ``Bm, Cm``: ``T x N``; ``D``: ``C``.
    Returns ``y`` (``T x C``) and, with ``keep_states``, a cache for
    :func:`selective_scan_backward`. Without it, states are kept only for
    ``block`` steps at a time.
    """
    T, C = u.shape
    y = np.empty((T, C))
    h = np.zeros(A.shape)
    all_states = np.empty((T,) + A.shape) if keep_states else None
    all_decay = np.empty((T,) + A.shape) if keep_states else None
    for b0 in range(0, T, block):
        b1 = min(T, b0 + block)
        decay = np.exp(delta[b0:b1, :, None] * A[None, :, :])
        states = (delta[b0:b1] * u[b0:b1])[:, :, None] * Bm[b0:b1, None, :]
        for t in range(b1 - b0):
            # states[t] holds the drive term on entry and the state on exit
            states[t] += decay[t] * h
            h = states[t]
        y[b0:b1] = np.einsum("tcn,tn->tc", states, Cm[b0:b1])
        if keep_states:
            all_states[b0:b1] = states
            all_decay[b0:b1] = decay
    y += D * u
    if keep_states:
        return y, (u, delta, A, Bm, Cm, D, all_decay, all_states)
    return y


def selective_scan_backward(gy, cache):
    """Gradients ``(gu, gdelta, gA, gBm, gCm, gD)`` of the scan."""
    u, delta, A, Bm, Cm, D, decay, states = cache
    T = u.shape[0]
    gCm = np.einsum("tc,tcn->tn", gy, states)
    # acc[t] = dL/dh_t = gy_t C_t + decay[t+1] * acc[t+1]
    acc = gy[:, :, None] * Cm[:, None, :]
    for t in range(T - 2, -1, -1):
        acc[t] += decay[t + 1] * acc[t + 1]
    g_decay = acc[1:] * states[:-1] * decay[1:]
    gA = np.einsum("tcn,tc->cn", g_decay, delta[1:])
    acc_b = np.einsum("tcn,tn->tc", acc, Bm)
    gdelta = acc_b * u
    gdelta[1:] += np.einsum("tcn,cn->tc", g_decay, A)
    gu = acc_b * delta + gy * D
    gBm = np.einsum("tcn,tc->tn", acc, delta * u)
    gD = np.sum(gy * u, axis=0)
    return gu, gdelta, gA, gBm, gCm, gD


# ---------------------------------------------------------------------------
# layer


def _causal_conv(v: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    width = w.shape[0]
    vp = np.concatenate([np.zeros((width - 1, v.shape[1])), v], axis=0)
    out = np.zeros_like(v)
    T = v.shape[0]
    for j in range(width):
        out += w[j] * vp[j : j + T]
    return out, vp


def layer_forward(p: dict[str, np.ndarray], u: np.ndarray, eps: float, keep: bool = False):
    r = np.sqrt(np.mean(u * u, axis=1, keepdims=True) + eps)
    nrm = u / r
    un = nrm * p["gamma"]
    v = un @ p["Wv"]
    z = un @ p["Wz"]
    vc, vp = _causal_conv(v, p["conv_w"])
    vc += p["conv_b"]
    uc = silu(vc)
    pre_dt = uc @ p["Wdt"] + p["bdt"]
    delta = softplus(pre_dt)
    Bm = uc @ p["WB"]
    Cm = uc @ p["WC"]
    A = -np.exp(p["A_log"])
    scan = selective_scan(uc, delta, A, Bm, Cm, p["D"], keep_states=keep)
    s, scache = scan if keep else (scan, None)
    gate = silu(z)
    g = s * gate
    out = u + g @ p["Wout"]
    if not keep:
        return out
    cache = dict(r=r, nrm=nrm, un=un, z=z, vp=vp, vc=vc, uc=uc, pre_dt=pre_dt, s=s, gate=gate, g=g, scan=scache)
    return out, cache


def layer_backward(p: dict[str, np.ndarray], cache: dict, gout: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    c = cache
    grads: dict[str, np.ndarray] = {}
    grads["Wout"] = c["g"].T @ gout
    gg = gout @ p["Wout"].T
    gs = gg * c["gate"]
    gz = gg * c["s"] * silu_grad(c["z"])

    guc, gdelta, gA, gBm, gCm, gD = selective_scan_backward(gs, c["scan"])
    A = -np.exp(p["A_log"])
    grads["A_log"] = gA * A
    grads["D"] = gD
    uc = c["uc"]
    grads["WC"] = uc.T @ gCm
    grads["WB"] = uc.T @ gBm
    guc = guc + gCm @ p["WC"].T + gBm @ p["WB"].T
    gpre = gdelta * sigmoid(c["pre_dt"])
    grads["Wdt"] = uc.T @ gpre
    grads["bdt"] = gpre.sum(axis=0)
    guc += gpre @ p["Wdt"].T

    gvc = guc * silu_grad(c["vc"])
    grads["conv_b"] = gvc.sum(axis=0)
    w = p["conv_w"]
    T = gvc.shape[0]
    vp = c["vp"]
    gw = np.empty_like(w)
    gvp = np.zeros_like(vp)
    for j in range(w.shape[0]):
        gw[j] = np.sum(gvc * vp[j : j + T], axis=0)
        gvp[j : j + T] += w[j] * gvc
    grads["conv_w"] = gw
    gv = gvp[w.shape[0] - 1 :]

    un = c["un"]
    grads["Wv"] = un.T @ gv
    grads["Wz"] = un.T @ gz
    gun = gv @ p["Wv"].T + gz @ p["Wz"].T
    nrm = c["nrm"]
    grads["gamma"] = np.sum(gun * nrm, axis=0)
    gn = gun * p["gamma"]
    gu = gout + (gn - nrm * np.mean(gn * nrm, axis=1, keepdims=True)) / c["r"]
    return gu, grads
