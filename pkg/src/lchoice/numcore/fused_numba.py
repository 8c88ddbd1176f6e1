"""Mini-batch Adam training loop, numba backend.

Loop-style twin of `fused_numpy.fit_numpy`: same splitmix64 stream contract
(per epoch N permutation keys, then B*H dropout uniforms per net-training
batch, sample-major), same Adam arithmetic with running bias-correction
powers, same per-epoch divergence check with last-good snapshots.  Given
one seed the two backends follow the same trajectory up to float rounding.
"""

from __future__ import annotations

import numpy as np

from . import program as pr
from .fused_numpy import FitResult
from .ops import TrainConfig
from .prng import derive_seed

try:
    from numba import njit
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not (args and callable(args[0])) else args[0]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _u53(seed, k):
    z = seed + (np.uint64(k) + np.uint64(1)) * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * _U53


@njit(cache=True)
def _adam_flat(p, m, v, g, lr, b1, b2, bc1, bc2, eps):
    for i in range(p.shape[0]):
        gi = g[i]
        m[i] = b1 * m[i] + (1.0 - b1) * gi
        v[i] = b2 * v[i] + (1.0 - b2) * gi * gi
        p[i] -= lr * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + eps)


@njit(cache=True)
def _copy_flat(dst, src):
    d = dst.ravel()
    s = src.ravel()
    for i in range(d.shape[0]):
        d[i] = s[i]


@njit(cache=True)
def _fit_kernel(data, avail, choice,
                term_param, term_alt, term_col,
                beta, q_cols,
                w_in, w_hidden, b_hidden, w_out, b_out,
                alt_nest, mu, mu_free, use_nests,
                m_beta, v_beta, m_win, v_win, m_wh, v_wh, m_bh, v_bh,
                m_wout, v_wout, m_bout, v_bout, m_mu, v_mu,
                s_beta, s_win, s_wh, s_bh, s_wout, s_bout, s_mu,
                epochs, batch_size, lr, b1, b2, eps, dropout, l2,
                train_beta, train_net, train_mu,
                fit_seed, trace):
    n, n_cols = data.shape
    n_alts = avail.shape[1]
    n_terms = term_param.shape[0]
    n_params = beta.shape[0]
    dq = q_cols.shape[0]
    width = w_in.shape[1]
    depth = b_hidden.shape[0]
    n_nests = mu.shape[0]
    has_net = width > 0
    dropout_on = dropout > 0.0 and train_net and has_net
    fit_mu = False
    if train_mu and use_nests:
        for m in range(n_nests):
            if mu_free[m] == 1:
                fit_mu = True
    fit_beta = train_beta and n_params > 0
    fit_net = train_net and has_net

    counter = 0
    b1p = 1.0
    b2p = 1.0
    step = 0
    status = 0
    epochs_run = 0
    keys = np.empty(n)
    cmax = np.empty(n_nests)
    ssum = np.empty(n_nests)
    ln_s = np.empty(n_nests)
    pn = np.empty(n_nests)
    ebar = np.empty(n_nests)

    for epoch in range(epochs):
        for i in range(n):
            keys[i] = _u53(fit_seed, counter + i)
        counter += n
        perm = np.argsort(keys)
        nll_total = 0.0
        start = 0
        while start < n:
            b = min(batch_size, n - start)
            xb = np.empty((b, n_cols))
            ab = np.empty((b, n_alts))
            yb = np.empty(b, np.int64)
            for s in range(b):
                row = perm[start + s]
                for d in range(n_cols):
                    xb[s, d] = data[row, d]
                for i in range(n_alts):
                    ab[s, i] = avail[row, i]
                yb[s] = choice[row]

            v = np.zeros((b, n_alts))
            for t in range(n_terms):
                bp = beta[term_param[t]]
                a_ = term_alt[t]
                c_ = term_col[t]
                if c_ < 0:
                    for s in range(b):
                        v[s, a_] += bp
                else:
                    for s in range(b):
                        v[s, a_] += bp * xb[s, c_]

            qb = np.empty((b, dq))
            zs = np.empty((depth, b, width))
            a_last = np.empty((b, width))
            mask = np.empty((b, width))
            if has_net:
                for s in range(b):
                    for d in range(dq):
                        qb[s, d] = xb[s, q_cols[d]]
                act = qb
                for layer in range(depth):
                    if layer == 0:
                        z = np.dot(act, w_in)
                    else:
                        z = np.dot(act, w_hidden[layer - 1])
                    for s in range(b):
                        for h in range(width):
                            z[s, h] += b_hidden[layer, h]
                    zs[layer] = z
                    a_new = np.empty((b, width))
                    for s in range(b):
                        for h in range(width):
                            a_new[s, h] = z[s, h] if z[s, h] > 0.0 else 0.0
                    act = a_new
                if dropout_on:
                    inv = 1.0 / (1.0 - dropout)
                    idx = 0
                    for s in range(b):
                        for h in range(width):
                            mask[s, h] = inv if _u53(fit_seed, counter + idx) >= dropout else 0.0
                            idx += 1
                    counter += b * width
                    for s in range(b):
                        for h in range(width):
                            act[s, h] *= mask[s, h]
                a_last = act
                r = np.dot(a_last, w_out)
                for s in range(b):
                    for i in range(n_alts):
                        v[s, i] += r[s, i] + b_out[i]

            dv = np.empty((b, n_alts))
            dmu = np.zeros((b, n_nests))
            if use_nests:
                for s in range(b):
                    for m in range(n_nests):
                        cmax[m] = -np.inf
                        ssum[m] = 0.0
                    for i in range(n_alts):
                        if ab[s, i] > 0.0:
                            mm = alt_nest[i]
                            arg = mu[mm] * v[s, i]
                            if arg > cmax[mm]:
                                cmax[mm] = arg
                    for i in range(n_alts):
                        if ab[s, i] > 0.0:
                            mm = alt_nest[i]
                            ssum[mm] += np.exp(mu[mm] * v[s, i] - cmax[mm])
                    top = -np.inf
                    for m in range(n_nests):
                        if ssum[m] > 0.0:
                            ln_s[m] = cmax[m] + np.log(ssum[m])
                            val = ln_s[m] / mu[m]
                            if val > top:
                                top = val
                        else:
                            ln_s[m] = -np.inf
                    denom = 0.0
                    for m in range(n_nests):
                        if ssum[m] > 0.0:
                            pn[m] = np.exp(ln_s[m] / mu[m] - top)
                            denom += pn[m]
                        else:
                            pn[m] = 0.0
                    for m in range(n_nests):
                        pn[m] /= denom
                    y_ = yb[s]
                    m_star = alt_nest[y_]
                    mu_star = mu[m_star]
                    for m in range(n_nests):
                        ebar[m] = 0.0
                    p_choice = 0.0
                    for i in range(n_alts):
                        if ab[s, i] > 0.0:
                            mm = alt_nest[i]
                            pc = np.exp(mu[mm] * v[s, i] - ln_s[mm])
                            pp = pn[mm] * pc
                            ebar[mm] += pc * v[s, i]
                            d = pp
                            if mm == m_star:
                                d += (mu_star - 1.0) * pc
                            if i == y_:
                                d -= mu_star
                                p_choice = pp
                            dv[s, i] = d
                        else:
                            dv[s, i] = 0.0
                    nll_total += -np.log(max(p_choice, 1e-12))
                    if fit_mu:
                        for m in range(n_nests):
                            if pn[m] > 0.0:
                                dmu[s, m] = pn[m] * (ebar[m] / mu[m] - ln_s[m] / (mu[m] * mu[m]))
                            else:
                                dmu[s, m] = 0.0
                        dmu[s, m_star] += (-v[s, y_] + ebar[m_star]
                                           + ln_s[m_star] / (mu_star * mu_star)
                                           - ebar[m_star] / mu_star)
            else:
                for s in range(b):
                    vmax = -np.inf
                    for i in range(n_alts):
                        if ab[s, i] > 0.0 and v[s, i] > vmax:
                            vmax = v[s, i]
                    esum = 0.0
                    for i in range(n_alts):
                        if ab[s, i] > 0.0:
                            e_ = np.exp(v[s, i] - vmax)
                            dv[s, i] = e_
                            esum += e_
                        else:
                            dv[s, i] = 0.0
                    y_ = yb[s]
                    p_choice = dv[s, y_] / esum
                    nll_total += -np.log(max(p_choice, 1e-12))
                    for i in range(n_alts):
                        if i == y_:
                            dv[s, i] = dv[s, i] / esum - 1.0
                        else:
                            dv[s, i] = dv[s, i] / esum

            inv_b = 1.0 / b
            for s in range(b):
                for i in range(n_alts):
                    dv[s, i] *= inv_b

            g_beta = np.zeros(n_params)
            if fit_beta:
                for t in range(n_terms):
                    p_ = term_param[t]
                    a_ = term_alt[t]
                    c_ = term_col[t]
                    if c_ < 0:
                        for s in range(b):
                            g_beta[p_] += dv[s, a_]
                    else:
                        for s in range(b):
                            g_beta[p_] += dv[s, a_] * xb[s, c_]

            g_win = np.zeros_like(w_in)
            g_wh = np.zeros_like(w_hidden)
            g_bh = np.zeros_like(b_hidden)
            g_wout = np.zeros_like(w_out)
            g_bout = np.zeros_like(b_out)
            if fit_net:
                g_wout = np.dot(np.ascontiguousarray(a_last.T), dv)
                if l2 > 0.0:
                    g_wout += 2.0 * l2 * w_out
                for i in range(n_alts):
                    tot = 0.0
                    for s in range(b):
                        tot += dv[s, i]
                    g_bout[i] = tot
                da = np.dot(dv, np.ascontiguousarray(w_out.T))
                if dropout_on:
                    for s in range(b):
                        for h in range(width):
                            da[s, h] *= mask[s, h]
                for layer in range(depth - 1, -1, -1):
                    dz = np.empty((b, width))
                    for s in range(b):
                        for h in range(width):
                            dz[s, h] = da[s, h] if zs[layer, s, h] > 0.0 else 0.0
                    for h in range(width):
                        tot = 0.0
                        for s in range(b):
                            tot += dz[s, h]
                        g_bh[layer, h] = tot
                    if layer == 0:
                        g_win = np.dot(np.ascontiguousarray(qb.T), dz)
                        if l2 > 0.0:
                            g_win += 2.0 * l2 * w_in
                    else:
                        a_prev = np.empty((b, width))
                        for s in range(b):
                            for h in range(width):
                                zv = zs[layer - 1, s, h]
                                a_prev[s, h] = zv if zv > 0.0 else 0.0
                        g_wh[layer - 1] = np.dot(np.ascontiguousarray(a_prev.T), dz)
                        if l2 > 0.0:
                            g_wh[layer - 1] += 2.0 * l2 * w_hidden[layer - 1]
                        da = np.dot(dz, np.ascontiguousarray(w_hidden[layer - 1].T))

            g_mu = np.zeros(n_nests)
            if fit_mu:
                for m in range(n_nests):
                    if mu_free[m] == 1:
                        tot = 0.0
                        for s in range(b):
                            tot += dmu[s, m]
                        g_mu[m] = tot * inv_b

            step += 1
            b1p *= b1
            b2p *= b2
            bc1 = 1.0 - b1p
            bc2 = 1.0 - b2p
            if fit_beta:
                _adam_flat(beta, m_beta, v_beta, g_beta, lr, b1, b2, bc1, bc2, eps)
            if fit_net:
                _adam_flat(w_in.ravel(), m_win.ravel(), v_win.ravel(), g_win.ravel(),
                           lr, b1, b2, bc1, bc2, eps)
                _adam_flat(w_hidden.ravel(), m_wh.ravel(), v_wh.ravel(), g_wh.ravel(),
                           lr, b1, b2, bc1, bc2, eps)
                _adam_flat(b_hidden.ravel(), m_bh.ravel(), v_bh.ravel(), g_bh.ravel(),
                           lr, b1, b2, bc1, bc2, eps)
                _adam_flat(w_out.ravel(), m_wout.ravel(), v_wout.ravel(), g_wout.ravel(),
                           lr, b1, b2, bc1, bc2, eps)
                _adam_flat(b_out, m_bout, v_bout, g_bout, lr, b1, b2, bc1, bc2, eps)
            if fit_mu:
                _adam_flat(mu, m_mu, v_mu, g_mu, lr, b1, b2, bc1, bc2, eps)
                for m in range(n_nests):
                    if mu[m] < 1.0:
                        mu[m] = 1.0
            start += b

        trace[epoch] = nll_total / n
        epochs_run = epoch + 1
        if not np.isfinite(trace[epoch]):
            status = 1
            break
        _copy_flat(s_beta, beta)
        if has_net:
            _copy_flat(s_win, w_in)
            _copy_flat(s_wh, w_hidden)
            _copy_flat(s_bh, b_hidden)
            _copy_flat(s_wout, w_out)
            _copy_flat(s_bout, b_out)
        _copy_flat(s_mu, mu)

    return status, epochs_run, step


def fit_numba(prog: pr.ModelProgram, data: np.ndarray, avail: np.ndarray,
              choice: np.ndarray, config: TrainConfig,
              train_beta: bool = True, train_net: bool = True,
              train_mu: bool = True) -> FitResult:
    if not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not importable")
    fit_seed = np.uint64(derive_seed(config.seed, 1))
    trace = np.full(config.epochs, np.nan)
    zeros = np.zeros_like
    snaps = {k: a.copy() for k, a in
             (("beta", prog.beta), ("w_in", prog.w_in), ("w_hidden", prog.w_hidden),
              ("b_hidden", prog.b_hidden), ("w_out", prog.w_out), ("b_out", prog.b_out),
              ("mu", prog.mu))}
    status, epochs_run, steps = _fit_kernel(
        data, avail, choice,
        prog.term_param, prog.term_alt, prog.term_col,
        prog.beta, prog.q_cols,
        prog.w_in, prog.w_hidden, prog.b_hidden, prog.w_out, prog.b_out,
        prog.alt_nest, prog.mu, prog.mu_free, prog.use_nests,
        zeros(prog.beta), zeros(prog.beta),
        zeros(prog.w_in), zeros(prog.w_in),
        zeros(prog.w_hidden), zeros(prog.w_hidden),
        zeros(prog.b_hidden), zeros(prog.b_hidden),
        zeros(prog.w_out), zeros(prog.w_out),
        zeros(prog.b_out), zeros(prog.b_out),
        zeros(prog.mu), zeros(prog.mu),
        snaps["beta"], snaps["w_in"], snaps["w_hidden"], snaps["b_hidden"],
        snaps["w_out"], snaps["b_out"], snaps["mu"],
        config.epochs, config.batch_size,
        config.learning_rate, config.beta1, config.beta2, config.eps,
        config.dropout, config.l2,
        train_beta, train_net, train_mu,
        fit_seed, trace)
    if status == 1:
        prog.beta[...] = snaps["beta"]
        prog.w_in[...] = snaps["w_in"]
        prog.w_hidden[...] = snaps["w_hidden"]
        prog.b_hidden[...] = snaps["b_hidden"]
        prog.w_out[...] = snaps["w_out"]
        prog.b_out[...] = snaps["b_out"]
        prog.mu[...] = snaps["mu"]
    return FitResult("diverged" if status == 1 else "ok", epochs_run, steps,
                     trace[:epochs_run], "numba")
