"""Flattened model representation and reference forward/backward passes.

A ModelProgram is the array-level form of a choice model: linear utility
terms as index triples, an optional dense representation net, and an
optional nest assignment.  The functions here are the vectorised numpy
reference implementation; the fused training kernels reproduce the same
arithmetic batch by batch.

Linear terms are stored as three parallel int arrays.  Term ``t`` adds
``beta[term_param[t]] * x`` to alternative ``term_alt[t]``, where ``x`` is
``data[:, term_col[t]]`` or constant 1 when ``term_col[t]`` is -1 (an
alternative-specific constant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import PROB_FLOOR


@dataclass
class ModelProgram:
    n_alts: int
    n_params: int
    term_param: np.ndarray  # (T,) int64
    term_alt: np.ndarray  # (T,) int64
    term_col: np.ndarray  # (T,) int64, -1 means constant 1
    beta: np.ndarray  # (P,) float64
    q_cols: np.ndarray  # (Dq,) int64, empty when there is no net
    w_in: np.ndarray  # (Dq, H)
    w_hidden: np.ndarray  # (L-1, H, H)
    b_hidden: np.ndarray  # (L, H)
    w_out: np.ndarray  # (H, I)
    b_out: np.ndarray  # (I,)
    alt_nest: np.ndarray  # (I,) int64 nest index per alternative
    mu: np.ndarray  # (M,) float64 nest scale factors
    mu_free: np.ndarray  # (M,) uint8, 1 where mu is estimated
    use_nests: bool

    @property
    def hidden_width(self) -> int:
        return self.w_in.shape[1]

    @property
    def has_net(self) -> bool:
        return self.hidden_width > 0

    @property
    def depth(self) -> int:
        return self.b_hidden.shape[0] if self.has_net else 0

    def trainable(self) -> dict[str, np.ndarray]:
        """Named parameter tensors, the unit Adam operates on."""
        out = {"beta": self.beta}
        if self.has_net:
            out.update(w_in=self.w_in, w_hidden=self.w_hidden,
                       b_hidden=self.b_hidden, w_out=self.w_out, b_out=self.b_out)
        if self.use_nests:
            out["mu"] = self.mu
        return out

    def copy(self) -> "ModelProgram":
        return ModelProgram(
            self.n_alts, self.n_params,
            self.term_param.copy(), self.term_alt.copy(), self.term_col.copy(),
            self.beta.copy(), self.q_cols.copy(),
            self.w_in.copy(), self.w_hidden.copy(), self.b_hidden.copy(),
            self.w_out.copy(), self.b_out.copy(),
            self.alt_nest.copy(), self.mu.copy(), self.mu_free.copy(),
            self.use_nests,
        )


def empty_net(n_alts: int) -> tuple[np.ndarray, ...]:
    """Arrays for a model without a representation net (hidden width 0)."""
    return (np.zeros((0, 0)), np.zeros((0, 0, 0)), np.zeros((0, 0)),
            np.zeros((0, n_alts)), np.zeros(n_alts))


def single_nest(n_alts: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Degenerate nest arrays for plain logit programs."""
    return (np.zeros(n_alts, dtype=np.int64), np.ones(1), np.zeros(1, dtype=np.uint8))


def linear_utilities(prog: ModelProgram, data: np.ndarray) -> np.ndarray:
    """Sum of beta-weighted terms, (n, I)."""
    n = data.shape[0]
    v = np.zeros((n, prog.n_alts))
    for t in range(prog.term_param.shape[0]):
        c = prog.term_col[t]
        x = 1.0 if c < 0 else data[:, c]
        v[:, prog.term_alt[t]] += prog.beta[prog.term_param[t]] * x
    return v


def net_forward(prog: ModelProgram, data: np.ndarray,
                mask: np.ndarray | None = None) -> tuple[np.ndarray, dict]:
    """Representation-net outputs (n, I) plus the cache backward needs.

    ``mask`` is an inverted-dropout mask for the last hidden activation;
    None means eval mode (identity).
    """
    if not prog.has_net:
        n = data.shape[0]
        return np.zeros((n, prog.n_alts)), {}
    q = data[:, prog.q_cols]
    zs: list[np.ndarray] = []
    a = q
    for layer in range(prog.depth):
        w = prog.w_in if layer == 0 else prog.w_hidden[layer - 1]
        z = a @ w + prog.b_hidden[layer]
        zs.append(z)
        a = np.maximum(z, 0.0)
    a_last = a if mask is None else a * mask
    r = a_last @ prog.w_out + prog.b_out
    cache = {"q": q, "zs": zs, "a_last": a_last, "mask": mask}
    return r, cache


def utilities(prog: ModelProgram, data: np.ndarray,
              mask: np.ndarray | None = None) -> np.ndarray:
    v = linear_utilities(prog, data)
    if prog.has_net:
        r, _ = net_forward(prog, data, mask)
        v += r
    return v


def _nested_parts(prog: ModelProgram, v: np.ndarray, avail: np.ndarray) -> dict:
    """Per-nest logsums and probability pieces for the two-level formula."""
    a = avail > 0
    mu = prog.mu
    mu_alt = mu[prog.alt_nest]
    s_arg = np.where(a, mu_alt[None, :] * v, -np.inf)
    n, m_count = v.shape[0], mu.shape[0]
    ln_s = np.full((n, m_count), -np.inf)
    for m in range(m_count):
        cols = np.flatnonzero(prog.alt_nest == m)
        if cols.size == 0:
            continue
        block = s_arg[:, cols]
        c = block.max(axis=1)
        c_safe = np.where(np.isfinite(c), c, 0.0)
        with np.errstate(divide="ignore"):
            ln_s[:, m] = c_safe + np.log(np.exp(block - c_safe[:, None]).sum(axis=1))
    scaled = ln_s / mu[None, :]
    top = scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled - top)
    p_nest = e / e.sum(axis=1, keepdims=True)
    ln_s_alt = ln_s[:, prog.alt_nest]
    p_cond = np.where(a, np.exp(np.where(a, s_arg - np.where(np.isfinite(ln_s_alt), ln_s_alt, 0.0), -np.inf)), 0.0)
    probs = p_nest[:, prog.alt_nest] * p_cond
    return {"ln_s": ln_s, "p_nest": p_nest, "p_cond": p_cond, "probs": probs}


def probabilities(prog: ModelProgram, v: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """Choice probabilities from utilities, masked by availability."""
    a = avail > 0
    if not a.any(axis=1).all():
        raise ValueError("row with no available alternative")
    if prog.use_nests:
        return _nested_parts(prog, v, avail)["probs"]
    masked = np.where(a, v, -np.inf)
    shifted = masked - masked.max(axis=1, keepdims=True)
    e = np.exp(shifted) * a
    return e / e.sum(axis=1, keepdims=True)


def sample_nll(probs: np.ndarray, choice: np.ndarray) -> np.ndarray:
    """Per-row negative log probability of the chosen alternative."""
    p = probs[np.arange(probs.shape[0]), choice]
    return -np.log(np.maximum(p, PROB_FLOOR))


def l2_penalty(prog: ModelProgram, l2: float) -> float:
    """lambda times the squared Frobenius norm of the net weight matrices."""
    if l2 == 0.0 or not prog.has_net:
        return 0.0
    total = float((prog.w_in ** 2).sum() + (prog.w_hidden ** 2).sum() + (prog.w_out ** 2).sum())
    return l2 * total


def loss_value(prog: ModelProgram, data: np.ndarray, avail: np.ndarray,
               choice: np.ndarray, l2: float = 0.0,
               mask: np.ndarray | None = None) -> float:
    v = utilities(prog, data, mask)
    p = probabilities(prog, v, avail)
    return float(sample_nll(p, choice).mean()) + l2_penalty(prog, l2)


def loss_gradients(prog: ModelProgram, v: np.ndarray, avail: np.ndarray,
                   choice: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row d(-ln P_chosen)/dV and d/dmu; also returns the probabilities."""
    n = v.shape[0]
    rows = np.arange(n)
    y = np.zeros_like(v)
    y[rows, choice] = 1.0
    if not prog.use_nests:
        p = probabilities(prog, v, avail)
        return p - y, np.zeros((n, prog.mu.shape[0])), p
    parts = _nested_parts(prog, v, avail)
    p, p_nest, p_cond, ln_s = parts["probs"], parts["p_nest"], parts["p_cond"], parts["ln_s"]
    mu = prog.mu
    m_star = prog.alt_nest[choice]
    mu_star = mu[m_star]
    in_star = prog.alt_nest[None, :] == m_star[:, None]
    dv = p + (mu_star[:, None] - 1.0) * p_cond * in_star - mu_star[:, None] * y
    # expected utility within each nest, availability already folded into p_cond
    ebar = np.zeros_like(p_nest)
    for m in range(mu.shape[0]):
        cols = prog.alt_nest == m
        ebar[:, m] = (p_cond[:, cols] * v[:, cols]).sum(axis=1)
    with np.errstate(invalid="ignore"):
        base = p_nest * (ebar / mu[None, :] - ln_s / (mu[None, :] ** 2))
    base = np.where(p_nest > 0.0, base, 0.0)
    dmu = base
    v_chosen = v[rows, choice]
    ln_s_star = ln_s[rows, m_star]
    ebar_star = ebar[rows, m_star]
    own = -v_chosen + ebar_star + ln_s_star / mu_star ** 2 - ebar_star / mu_star
    dmu[rows, m_star] += own
    return dv, dmu, p


def backprop(prog: ModelProgram, data: np.ndarray, dv: np.ndarray,
             cache: dict, l2: float = 0.0) -> dict[str, np.ndarray]:
    """Parameter gradients from already-scaled utility gradients ``dv``."""
    g: dict[str, np.ndarray] = {"beta": np.zeros(prog.n_params)}
    for t in range(prog.term_param.shape[0]):
        c = prog.term_col[t]
        x = 1.0 if c < 0 else data[:, c]
        g["beta"][prog.term_param[t]] += float((dv[:, prog.term_alt[t]] * x).sum())
    if prog.has_net:
        a_last = cache["a_last"]
        g["w_out"] = a_last.T @ dv + 2.0 * l2 * prog.w_out
        g["b_out"] = dv.sum(axis=0)
        da = dv @ prog.w_out.T
        if cache["mask"] is not None:
            da = da * cache["mask"]
        g["w_hidden"] = np.zeros_like(prog.w_hidden)
        g["b_hidden"] = np.zeros_like(prog.b_hidden)
        zs = cache["zs"]
        for layer in range(prog.depth - 1, -1, -1):
            dz = da * (zs[layer] > 0.0)
            g["b_hidden"][layer] = dz.sum(axis=0)
            if layer == 0:
                g["w_in"] = cache["q"].T @ dz + 2.0 * l2 * prog.w_in
            else:
                a_prev = np.maximum(zs[layer - 1], 0.0)
                g["w_hidden"][layer - 1] = a_prev.T @ dz + 2.0 * l2 * prog.w_hidden[layer - 1]
                da = dz @ prog.w_hidden[layer - 1].T
    return g


def gradients(prog: ModelProgram, data: np.ndarray, avail: np.ndarray,
              choice: np.ndarray, l2: float = 0.0,
              mask: np.ndarray | None = None,
              reduction: str = "mean") -> dict[str, np.ndarray]:
    """Gradients of the loss (CE + l2 penalty) for every parameter tensor.

    ``reduction`` "mean" matches the training loss; "sum" gives the gradient
    of the summed negative log-likelihood (no l2), which inference uses.
    """
    n = data.shape[0]
    v = linear_utilities(prog, data)
    cache: dict = {}
    if prog.has_net:
        r, cache = net_forward(prog, data, mask)
        v = v + r
    dv, dmu, _ = loss_gradients(prog, v, avail, choice)
    scale = 1.0 / n if reduction == "mean" else 1.0
    use_l2 = l2 if reduction == "mean" else 0.0
    g = backprop(prog, data, dv * scale, cache, use_l2)
    if prog.use_nests:
        g["mu"] = (dmu * scale).sum(axis=0) * (prog.mu_free > 0)
    return g


def input_gradients(prog: ModelProgram, data: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Gradient of sum(dv * V_net) with respect to the net inputs, (n, Dq).

    Eval-mode pass; used for feature-impact measures.  Zero when the model
    has no representation net.
    """
    if not prog.has_net:
        return np.zeros((data.shape[0], 0))
    _, cache = net_forward(prog, data, None)
    da = dv @ prog.w_out.T
    zs = cache["zs"]
    for layer in range(prog.depth - 1, -1, -1):
        dz = da * (zs[layer] > 0.0)
        w = prog.w_in if layer == 0 else prog.w_hidden[layer - 1]
        da = dz @ w.T
    return da
