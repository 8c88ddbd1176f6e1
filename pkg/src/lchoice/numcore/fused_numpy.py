"""Mini-batch Adam training loop, vectorised numpy backend.

Reuses the reference forward/backward from `program` batch by batch.  The
jit backend in `fused_numba` follows the same stream contract: one shared
splitmix64 stream supplies, per epoch, N permutation keys and then, per
batch that trains the net with dropout, B*H mask uniforms in sample-major
order.  Adam bias-correction powers are kept as running products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import prng
from . import program as pr
from .ops import TrainConfig


@dataclass
class FitResult:
    status: str  # "ok" or "diverged"
    epochs_run: int
    steps: int
    trace: np.ndarray  # mean data NLL per epoch, training-mode forward
    backend: str


def fit_numpy(prog: pr.ModelProgram, data: np.ndarray, avail: np.ndarray,
              choice: np.ndarray, config: TrainConfig,
              train_beta: bool = True, train_net: bool = True,
              train_mu: bool = True) -> FitResult:
    n = data.shape[0]
    width = prog.hidden_width
    fit_seed = prng.derive_seed(config.seed, 1)
    counter = 0
    dropout_on = config.dropout > 0.0 and train_net and prog.has_net

    tensors: dict[str, np.ndarray] = {}
    if train_beta and prog.n_params > 0:
        tensors["beta"] = prog.beta
    if train_net and prog.has_net:
        tensors.update(w_in=prog.w_in, w_hidden=prog.w_hidden, b_hidden=prog.b_hidden,
                       w_out=prog.w_out, b_out=prog.b_out)
    fit_mu = train_mu and prog.use_nests and bool((prog.mu_free > 0).any())
    if fit_mu:
        tensors["mu"] = prog.mu
    moments = {k: (np.zeros_like(a), np.zeros_like(a)) for k, a in tensors.items()}
    good = {k: a.copy() for k, a in tensors.items()}

    b1p = b2p = 1.0
    step = 0
    trace = np.full(config.epochs, np.nan)
    status, epochs_run = "ok", 0

    for epoch in range(config.epochs):
        keys = prng.uniforms(fit_seed, counter, n)
        counter += n
        perm = np.argsort(keys)
        nll_total = 0.0
        for start in range(0, n, config.batch_size):
            rows = perm[start:start + config.batch_size]
            b = rows.shape[0]
            xb, ab, yb = data[rows], avail[rows], choice[rows]
            mask = None
            if dropout_on:
                u = prng.uniforms(fit_seed, counter, b * width)
                counter += b * width
                mask = (u >= config.dropout).astype(np.float64).reshape(b, width)
                mask /= 1.0 - config.dropout
            v = pr.linear_utilities(prog, xb)
            cache: dict = {}
            if prog.has_net:
                r, cache = pr.net_forward(prog, xb, mask)
                v = v + r
            dv, dmu, p = pr.loss_gradients(prog, v, ab, yb)
            nll_total += float(pr.sample_nll(p, yb).sum())

            grads: dict[str, np.ndarray] = {}
            if train_beta or (train_net and prog.has_net):
                full = pr.backprop(prog, xb, dv / b, cache,
                                   config.l2 if train_net else 0.0)
                if "beta" in tensors:
                    grads["beta"] = full["beta"]
                if train_net and prog.has_net:
                    for k in ("w_in", "w_hidden", "b_hidden", "w_out", "b_out"):
                        grads[k] = full[k]
            if fit_mu:
                grads["mu"] = (dmu / b).sum(axis=0) * (prog.mu_free > 0)

            step += 1
            b1p *= config.beta1
            b2p *= config.beta2
            bc1, bc2 = 1.0 - b1p, 1.0 - b2p
            for k, g in grads.items():
                m, v2 = moments[k]
                m *= config.beta1
                m += (1.0 - config.beta1) * g
                v2 *= config.beta2
                v2 += (1.0 - config.beta2) * g * g
                tensors[k] -= config.learning_rate * (m / bc1) / (np.sqrt(v2 / bc2) + config.eps)
            if "mu" in grads:
                np.maximum(prog.mu, 1.0, out=prog.mu)

        trace[epoch] = nll_total / n
        if not np.isfinite(trace[epoch]):
            for k, a in tensors.items():
                a[...] = good[k]
            status = "diverged"
            epochs_run = epoch + 1
            break
        for k, a in tensors.items():
            good[k][...] = a
        epochs_run = epoch + 1

    return FitResult(status, epochs_run, step, trace[:epochs_run], "numpy")
